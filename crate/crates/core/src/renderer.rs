//! Camouflage rendering: the screen shows exactly the patch of the captured
//! surface that the phone body currently covers.

use image::{Rgb, RgbImage, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DeviceGeometry, Pose2D, SurfaceMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Nearest,
    #[default]
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Colour for screen pixels that fall outside the map.
    pub fill_color: [u8; 3],
    pub sampling: Sampling,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            fill_color: [128, 128, 128],
            sampling: Sampling::Bilinear,
        }
    }
}

/// Renders the screen image for a device at `pose`.
pub fn render_screen(pose: &Pose2D, geometry: &DeviceGeometry, map: &SurfaceMap, cfg: &RenderConfig) -> RgbImage {
    let fill = Rgb(cfg.fill_color);
    RgbImage::from_fn(geometry.screen_px_w, geometry.screen_px_h, |u, v| {
        let (dx, dy) = geometry.pixel_center_in_device(f64::from(u), f64::from(v));
        let (x, y) = pose.transform_point(dx, dy);
        let p = map.world_to_pixel(x, y);
        if !p.in_bounds {
            return fill;
        }
        match cfg.sampling {
            Sampling::Nearest => sample_nearest(map.image(), p.col, p.row),
            Sampling::Bilinear => sample_bilinear(map.image(), p.col, p.row),
        }
    })
}

/// Fill-colour frame shown while no map or pose is available, with an
/// optional status glyph centred on it.
pub fn render_placeholder(
    geometry: &DeviceGeometry,
    cfg: &RenderConfig,
    glyph: Option<&RgbaImage>,
) -> Result<RgbImage> {
    let frame = RgbImage::from_pixel(geometry.screen_px_w, geometry.screen_px_h, Rgb(cfg.fill_color));
    match glyph {
        None => Ok(frame),
        Some(g) => {
            let at = (
                frame.width().saturating_sub(g.width()) / 2,
                frame.height().saturating_sub(g.height()) / 2,
            );
            overlay_widget(&frame, g, at)
        }
    }
}

fn sample_nearest(img: &RgbImage, col: f64, row: f64) -> Rgb<u8> {
    let max_c = img.width() - 1;
    let max_r = img.height() - 1;
    let c = ((col + 0.5).floor().max(0.0) as u32).min(max_c);
    let r = ((row + 0.5).floor().max(0.0) as u32).min(max_r);
    *img.get_pixel(c, r)
}

fn sample_bilinear(img: &RgbImage, col: f64, row: f64) -> Rgb<u8> {
    let max_c = i64::from(img.width() - 1);
    let max_r = i64::from(img.height() - 1);
    let c0 = col.floor();
    let r0 = row.floor();
    let fx = col - c0;
    let fy = row - r0;
    let clamp_c = |c: i64| c.clamp(0, max_c) as u32;
    let clamp_r = |r: i64| r.clamp(0, max_r) as u32;
    let (c0, r0) = (c0 as i64, r0 as i64);
    let p00 = img.get_pixel(clamp_c(c0), clamp_r(r0));
    let p10 = img.get_pixel(clamp_c(c0 + 1), clamp_r(r0));
    let p01 = img.get_pixel(clamp_c(c0), clamp_r(r0 + 1));
    let p11 = img.get_pixel(clamp_c(c0 + 1), clamp_r(r0 + 1));
    Rgb(std::array::from_fn(|k| {
        let top = f64::from(p00[k]) * (1.0 - fx) + f64::from(p10[k]) * fx;
        let bottom = f64::from(p01[k]) * (1.0 - fx) + f64::from(p11[k]) * fx;
        let v = top * (1.0 - fy) + bottom * fy;
        (v + 0.5).floor().clamp(0.0, 255.0) as u8
    }))
}

/// Source-over composite of an RGBA widget onto an opaque frame, with the
/// widget's top-left corner at pixel `at`. Channel results round half up.
pub fn overlay_widget(frame: &RgbImage, widget: &RgbaImage, at: (u32, u32)) -> Result<RgbImage> {
    let fits_x = at.0.checked_add(widget.width()).is_some_and(|e| e <= frame.width());
    let fits_y = at.1.checked_add(widget.height()).is_some_and(|e| e <= frame.height());
    if !(fits_x && fits_y) {
        return Err(Error::domain(format!(
            "{}x{} widget at ({}, {}) does not fit a {}x{} frame",
            widget.width(),
            widget.height(),
            at.0,
            at.1,
            frame.width(),
            frame.height()
        )));
    }
    let mut out = frame.clone();
    for (x, y, src) in widget.enumerate_pixels() {
        let a = u32::from(src[3]);
        let dst = out.get_pixel_mut(at.0 + x, at.1 + y);
        for k in 0..3 {
            let num = u32::from(src[k]) * a + u32::from(dst[k]) * (255 - a);
            // round(num / 255), halves up
            dst[k] = ((2 * num + 255) / 510) as u8;
        }
    }
    Ok(out)
}
