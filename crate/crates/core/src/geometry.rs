//! Planar frames and metric mappings.
//!
//! World frame: millimetres on the tabletop, origin at the centre of the
//! captured surface image, +x to the right (increasing column) and +y up
//! (decreasing row). Device frame: origin at the body centre, +x toward the
//! right edge, +y toward the top edge. Screen pixels are addressed by their
//! top-left corner index; pixel `i` spans `[i, i + 1)` with its centre at
//! `i + 0.5`.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Planar pose of the device on the surface: millimetres and radians (CCW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2D {
    x: f64,
    y: f64,
    theta: f64,
}

impl From<[f64; 3]> for Pose2D {
    fn from(v: [f64; 3]) -> Self {
        Pose2D::new(v[0], v[1], v[2])
    }
}

impl From<Pose2D> for [f64; 3] {
    fn from(p: Pose2D) -> Self {
        [p.x, p.y, p.theta]
    }
}

impl Default for Pose2D {
    fn default() -> Self {
        Pose2D::IDENTITY
    }
}

impl Pose2D {
    pub const IDENTITY: Pose2D = Pose2D {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2D {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.x + c * px - s * py, self.y + s * px + c * py)
    }

    /// `self ∘ other`: the pose `other` expressed through the frame `self`.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (x, y) = self.transform_point(other.x, other.y);
        Pose2D::new(x, y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    /// Euclidean distance between positions, in millimetres.
    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Free function form of [`Pose2D::compose`].
pub fn compose(a: &Pose2D, b: &Pose2D) -> Pose2D {
    a.compose(b)
}

/// Physical layout of the phone. The screen offset is the bezel: the
/// position of the active area's top-left corner relative to the body's
/// top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceGeometry {
    pub body_w: f64,
    pub body_h: f64,
    pub screen_offset_x: f64,
    pub screen_offset_y: f64,
    pub screen_w: f64,
    pub screen_h: f64,
    pub screen_px_w: u32,
    pub screen_px_h: u32,
}

impl Default for DeviceGeometry {
    /// A 72 x 150 mm handset with a 64 x 134 mm active area at 0.1 mm/px.
    fn default() -> Self {
        DeviceGeometry {
            body_w: 72.0,
            body_h: 150.0,
            screen_offset_x: 4.0,
            screen_offset_y: 8.0,
            screen_w: 64.0,
            screen_h: 134.0,
            screen_px_w: 640,
            screen_px_h: 1340,
        }
    }
}

impl DeviceGeometry {
    /// Bezel-free geometry whose screen covers the whole body.
    pub fn edge_to_edge(w_mm: f64, h_mm: f64, px_w: u32, px_h: u32) -> Self {
        DeviceGeometry {
            body_w: w_mm,
            body_h: h_mm,
            screen_offset_x: 0.0,
            screen_offset_y: 0.0,
            screen_w: w_mm,
            screen_h: h_mm,
            screen_px_w: px_w,
            screen_px_h: px_h,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("body_w", self.body_w),
            ("body_h", self.body_h),
            ("screen_w", self.screen_w),
            ("screen_h", self.screen_h),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.screen_px_w == 0 || self.screen_px_h == 0 {
            return Err(Error::domain("screen pixel dimensions must be positive"));
        }
        if !(self.screen_offset_x >= 0.0 && self.screen_offset_y >= 0.0) {
            return Err(Error::domain("screen offset must be non-negative"));
        }
        const SLACK: f64 = 1e-9;
        if self.screen_offset_x + self.screen_w > self.body_w + SLACK
            || self.screen_offset_y + self.screen_h > self.body_h + SLACK
        {
            return Err(Error::domain("screen extends past the device body"));
        }
        Ok(())
    }

    /// Millimetres per screen pixel along x and y.
    pub fn pixel_pitch(&self) -> (f64, f64) {
        (
            self.screen_w / f64::from(self.screen_px_w),
            self.screen_h / f64::from(self.screen_px_h),
        )
    }

    /// Device-frame millimetres of the centre of screen pixel `(u, v)`.
    /// No range check.
    pub fn pixel_center_in_device(&self, u: f64, v: f64) -> (f64, f64) {
        let (pitch_x, pitch_y) = self.pixel_pitch();
        let from_left = self.screen_offset_x + (u + 0.5) * pitch_x;
        let from_top = self.screen_offset_y + (v + 0.5) * pitch_y;
        (from_left - 0.5 * self.body_w, 0.5 * self.body_h - from_top)
    }
}

/// World position of the centre of screen pixel `(u, v)` for a device at `pose`.
pub fn device_point_to_world(pose: &Pose2D, geometry: &DeviceGeometry, u: u32, v: u32) -> Result<(f64, f64)> {
    if u >= geometry.screen_px_w || v >= geometry.screen_px_h {
        return Err(Error::domain(format!(
            "pixel ({u}, {v}) outside {}x{} screen",
            geometry.screen_px_w, geometry.screen_px_h
        )));
    }
    let (dx, dy) = geometry.pixel_center_in_device(f64::from(u), f64::from(v));
    Ok(pose.transform_point(dx, dy))
}

/// Fractional pixel coordinates in a surface map (centre-index convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPixel {
    pub col: f64,
    pub row: f64,
    pub in_bounds: bool,
}

/// Metric orthophoto of the tabletop.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMap {
    image: RgbImage,
    mm_per_px: f64,
}

/// Sidecar metadata written next to a surface map PNG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapMetadata {
    pub mm_per_px: f64,
    pub width_px: u32,
    pub height_px: u32,
}

impl SurfaceMap {
    pub fn new(image: RgbImage, mm_per_px: f64) -> Result<Self> {
        if !(mm_per_px.is_finite() && mm_per_px > 0.0) {
            return Err(Error::domain(format!("mm_per_px must be positive, got {mm_per_px}")));
        }
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::domain("surface map image is empty"));
        }
        Ok(SurfaceMap { image, mm_per_px })
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn mm_per_px(&self) -> f64 {
        self.mm_per_px
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn metadata(&self) -> MapMetadata {
        MapMetadata {
            mm_per_px: self.mm_per_px,
            width_px: self.width(),
            height_px: self.height(),
        }
    }

    pub fn world_to_pixel(&self, x: f64, y: f64) -> MapPixel {
        let w = f64::from(self.width());
        let h = f64::from(self.height());
        let col = 0.5 * w + x / self.mm_per_px - 0.5;
        let row = 0.5 * h - y / self.mm_per_px - 0.5;
        let in_bounds = (-0.5..w - 0.5).contains(&col) && (-0.5..h - 0.5).contains(&row);
        MapPixel { col, row, in_bounds }
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        let w = f64::from(self.width());
        let h = f64::from(self.height());
        (
            (col + 0.5 - 0.5 * w) * self.mm_per_px,
            (0.5 * h - row - 0.5) * self.mm_per_px,
        )
    }

    /// Path of the JSON sidecar belonging to a map PNG.
    pub fn sidecar_path(png: &Path) -> PathBuf {
        png.with_extension("json")
    }

    /// Writes the PNG and its sidecar.
    pub fn save(&self, png: &Path) -> Result<()> {
        self.image.save_with_format(png, image::ImageFormat::Png)?;
        let meta = serde_json::to_string(&self.metadata()).expect("metadata serializes");
        fs::write(Self::sidecar_path(png), meta + "\n")?;
        Ok(())
    }

    /// Loads a PNG and checks it against its sidecar.
    pub fn load(png: &Path) -> Result<Self> {
        let sidecar = Self::sidecar_path(png);
        let text = fs::read_to_string(&sidecar)?;
        let meta = parse_map_metadata(&text)?;
        let image = image::open(png)?.to_rgb8();
        if image.width() != meta.width_px || image.height() != meta.height_px {
            return Err(Error::domain(format!(
                "{} is {}x{} but sidecar says {}x{}",
                png.display(),
                image.width(),
                image.height(),
                meta.width_px,
                meta.height_px
            )));
        }
        SurfaceMap::new(image, meta.mm_per_px)
    }
}

/// Parses and validates the sidecar JSON.
pub fn parse_map_metadata(text: &str) -> Result<MapMetadata> {
    let meta: MapMetadata = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    if !(meta.mm_per_px.is_finite() && meta.mm_per_px > 0.0) {
        return Err(Error::domain("mm_per_px must be positive"));
    }
    if meta.width_px == 0 || meta.height_px == 0 {
        return Err(Error::domain("map dimensions must be positive"));
    }
    Ok(meta)
}

/// Ground sampling distance of a fronto-parallel pinhole capture.
pub fn rectification_scale(capture_height_mm: f64, focal_length_px: f64) -> Result<f64> {
    if !(capture_height_mm.is_finite() && capture_height_mm > 0.0) {
        return Err(Error::domain("capture height must be positive"));
    }
    if !(focal_length_px.is_finite() && focal_length_px > 0.0) {
        return Err(Error::domain("focal length must be positive"));
    }
    Ok(capture_height_mm / focal_length_px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Pose2D, b: &Pose2D, tol: f64) -> bool {
        (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol && normalize_angle(a.theta - b.theta).abs() < tol
    }

    #[test]
    fn compose_examples() {
        let p = Pose2D::new(3.0, 4.0, PI / 2.0);
        assert_eq!(Pose2D::IDENTITY.compose(&p), p);

        let q = Pose2D::new(10.0, 20.0, PI / 2.0).compose(&Pose2D::new(1.0, 0.0, 0.0));
        assert!(close(&q, &Pose2D::new(10.0, 21.0, PI / 2.0), 1e-12));

        let p = Pose2D::new(-5.0, 7.0, 2.0);
        let id = p.compose(&p.inverse());
        assert!(id.x.abs() < 1e-9 && id.y.abs() < 1e-9 && id.theta.abs() < 1e-12);
    }

    #[test]
    fn normalization_keeps_pi() {
        assert_eq!(normalize_angle(-PI), PI);
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(Pose2D::new(0.0, 0.0, -PI).theta(), PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    fn centered(px: u32) -> DeviceGeometry {
        DeviceGeometry::edge_to_edge(f64::from(px) * 0.1, f64::from(px) * 0.1, px, px)
    }

    #[test]
    fn device_points() {
        // 3x3 pixel screen: the middle pixel's centre is the body centre.
        let g = centered(3);
        let (x, y) = device_point_to_world(&Pose2D::IDENTITY, &g, 1, 1).unwrap();
        assert!(x.abs() < 1e-12 && y.abs() < 1e-12);

        let (x, y) = device_point_to_world(&Pose2D::new(100.0, 0.0, 0.0), &g, 1, 1).unwrap();
        assert!((x - 100.0).abs() < 1e-12 && y.abs() < 1e-12);

        let (a, b) = device_point_to_world(&Pose2D::IDENTITY, &g, 0, 0).unwrap();
        let (x, y) = device_point_to_world(&Pose2D::new(0.0, 0.0, PI), &g, 0, 0).unwrap();
        assert!((x + a).abs() < 1e-12 && (y + b).abs() < 1e-12);
        assert!(a < 0.0 && b > 0.0, "top-left pixel sits in the upper-left quadrant");

        assert!(matches!(
            device_point_to_world(&Pose2D::IDENTITY, &g, 3, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bezel_shifts_pixels() {
        let mut g = centered(10);
        g.body_w += 4.0;
        g.screen_offset_x = 4.0;
        let (x, _) = device_point_to_world(&Pose2D::IDENTITY, &g, 0, 0).unwrap();
        // body spans [-2.5, 2.5]; screen starts 4 mm in from the left edge.
        assert!((x - (-2.5 + 4.0 + 0.05)).abs() < 1e-12, "{x}");
    }

    #[test]
    fn map_pixel_convention() {
        let map = SurfaceMap::new(RgbImage::new(100, 100), 0.2).unwrap();
        let p = map.world_to_pixel(0.0, 0.0);
        assert_eq!((p.col, p.row, p.in_bounds), (49.5, 49.5, true));
        let p = map.world_to_pixel(0.2, 0.0);
        assert!((p.col - 50.5).abs() < 1e-12 && (p.row - 49.5).abs() < 1e-12);
        let p = map.world_to_pixel(0.0, 0.2);
        assert!((p.col - 49.5).abs() < 1e-12 && (p.row - 48.5).abs() < 1e-12);
        assert!(!map.world_to_pixel(10.0, 0.0).in_bounds);
        assert!(map.world_to_pixel(9.99, 0.0).in_bounds);
    }

    #[test]
    fn rectification() {
        assert!((rectification_scale(300.0, 1500.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((rectification_scale(150.0, 1500.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(rectification_scale(300.0, 0.0).is_err());
        assert!(rectification_scale(-1.0, 10.0).is_err());
    }

    #[test]
    fn geometry_validation() {
        assert!(DeviceGeometry::default().validate().is_ok());
        let g = DeviceGeometry {
            screen_offset_x: 10.0,
            ..DeviceGeometry::default()
        };
        assert!(g.validate().is_err());
        let g = DeviceGeometry {
            body_h: 0.0,
            ..DeviceGeometry::default()
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn identity_pixel_map_determinant() {
        // Affine map (u, v) -> (x, y): columns are the images of unit pixel steps.
        let g = DeviceGeometry::edge_to_edge(30.0, 50.0, 60, 200);
        let o = device_point_to_world(&Pose2D::IDENTITY, &g, 0, 0).unwrap();
        let du = device_point_to_world(&Pose2D::IDENTITY, &g, 1, 0).unwrap();
        let dv = device_point_to_world(&Pose2D::IDENTITY, &g, 0, 1).unwrap();
        let det = (du.0 - o.0) * (dv.1 - o.1) - (dv.0 - o.0) * (du.1 - o.1);
        let (px, py) = g.pixel_pitch();
        // v grows downward, so the map flips orientation.
        assert!((det.abs() - px * py).abs() < 1e-12);
    }

    #[test]
    fn sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let png = dir.path().join("m.map.png");
        let mut img = RgbImage::new(4, 3);
        img.put_pixel(1, 2, image::Rgb([9, 8, 7]));
        let map = SurfaceMap::new(img, 0.5).unwrap();
        map.save(&png).unwrap();
        assert!(dir.path().join("m.map.json").exists());
        assert_eq!(SurfaceMap::load(&png).unwrap(), map);
    }

    fn pose() -> impl Strategy<Value = Pose2D> {
        (-1e3..1e3f64, -1e3..1e3f64, -10.0..10.0f64).prop_map(|(x, y, t)| Pose2D::new(x, y, t))
    }

    proptest! {
        #[test]
        fn compose_is_associative(a in pose(), b in pose(), c in pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(close(&l, &r, 1e-9));
        }

        #[test]
        fn inverse_and_identity(p in pose()) {
            prop_assert!(close(&Pose2D::IDENTITY.compose(&p), &p, 1e-12));
            let id = p.compose(&p.inverse());
            prop_assert!(id.x.abs() < 1e-9 && id.y.abs() < 1e-9 && id.theta.abs() < 1e-12);
        }

        #[test]
        fn normalize_is_periodic(theta in -10.0..10.0f64, k in -3i32..=3) {
            let a = normalize_angle(theta + TAU * f64::from(k));
            let b = normalize_angle(theta);
            prop_assert!(a > -PI && a <= PI);
            prop_assert!(normalize_angle(a - b).abs() < 1e-12);
        }

        #[test]
        fn map_round_trip(x in -9.9..9.9f64, y in -9.9..9.9f64) {
            let map = SurfaceMap::new(RgbImage::new(100, 100), 0.2).unwrap();
            let p = map.world_to_pixel(x, y);
            prop_assert!(p.in_bounds);
            let (bx, by) = map.pixel_to_world(p.col, p.row);
            prop_assert!((bx - x).abs() < 1e-9 && (by - y).abs() < 1e-9);
        }
    }
}
