//! Fill textures for the camera-in-contact mode: infer the surface colour from
//! a point sample, pick the best-matching region of an environment photo, and
//! grow a seeded noise tile around that colour.
//!
//! Region choice can be delegated to an external provider over a small JSON
//! protocol; anything the provider gets wrong falls back to the offline match.

use std::time::Duration;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{Channel, CounterRng};

pub const DEFAULT_GRID: u32 = 8;
pub const DEFAULT_AMPLITUDE: f64 = 8.0;
pub const DEFAULT_TILE_PX: u32 = 128;
pub const MAX_AMPLITUDE: f64 = 64.0;
pub const MAX_TILE_PX: u32 = 1024;

/// A colour read through the camera pressed onto the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorSample {
    pub rgb: [u8; 3],
    /// Ratio of sampled to true brightness.
    pub illumination_gain: f64,
}

impl ColorSample {
    pub fn new(rgb: [u8; 3], illumination_gain: f64) -> Result<Self> {
        let s = ColorSample { rgb, illumination_gain };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.1..=10.0).contains(&self.illumination_gain) {
            return Err(Error::domain(format!(
                "illumination_gain must be in [0.1, 10], got {}",
                self.illumination_gain
            )));
        }
        Ok(())
    }

    /// Estimated true colour, before byte clamping.
    pub fn corrected(&self) -> [f64; 3] {
        self.rgb.map(|c| f64::from(c) / self.illumination_gain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub region_id: u32,
    pub mean_rgb: [u8; 3],
    pub bounds: Bounds,
}

/// Region summary as sent to a provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRegion {
    pub region_id: u32,
    pub mean_rgb: [u8; 3],
    pub w_px: u32,
    pub h_px: u32,
}

impl From<&Region> for CandidateRegion {
    fn from(r: &Region) -> Self {
        CandidateRegion {
            region_id: r.region_id,
            mean_rgb: r.mean_rgb,
            w_px: r.bounds.w,
            h_px: r.bounds.h,
        }
    }
}

/// Uniform `grid`×`grid` partition with per-cell mean colours, ids in
/// row-major order. The grid is reduced to the image size if it is larger,
/// so no cell is ever empty.
pub fn segment_regions(environment: &RgbImage, grid: u32) -> Result<Vec<Region>> {
    let (w, h) = environment.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::domain("environment image is empty"));
    }
    if grid == 0 {
        return Err(Error::domain("grid must be at least 1"));
    }
    let g = grid.min(w).min(h);
    let edge = |i: u32, n: u32| (u64::from(i) * u64::from(n) / u64::from(g)) as u32;
    let mut regions = Vec::with_capacity((g * g) as usize);
    for gy in 0..g {
        for gx in 0..g {
            let (x0, x1) = (edge(gx, w), edge(gx + 1, w));
            let (y0, y1) = (edge(gy, h), edge(gy + 1, h));
            let mut sum = [0u64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = environment.get_pixel(x, y);
                    for k in 0..3 {
                        sum[k] += u64::from(p[k]);
                    }
                }
            }
            let n = u64::from(x1 - x0) * u64::from(y1 - y0);
            regions.push(Region {
                region_id: gy * g + gx,
                mean_rgb: sum.map(|s| ((2 * s + n) / (2 * n)) as u8),
                bounds: Bounds {
                    x: x0,
                    y: y0,
                    w: x1 - x0,
                    h: y1 - y0,
                },
            });
        }
    }
    Ok(regions)
}

/// Region whose mean is nearest to the gain-corrected sample; the lowest id
/// wins ties. `None` for an empty list.
pub fn match_region(sample: &ColorSample, regions: &[CandidateRegion]) -> Option<u32> {
    let target = sample.corrected();
    regions
        .iter()
        .map(|r| {
            let d2: f64 = (0..3).map(|k| (f64::from(r.mean_rgb[k]) - target[k]).powi(2)).sum();
            (d2, r.region_id)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternRequest {
    pub sampled_rgb: [u8; 3],
    pub candidate_regions: Vec<CandidateRegion>,
    /// Optional extension; absent means 1.
    #[serde(default = "unit_gain", skip_serializing_if = "is_unit_gain")]
    pub illumination_gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

fn is_unit_gain(g: &f64) -> bool {
    *g == 1.0
}

impl PatternRequest {
    pub fn new(sample: &ColorSample, regions: &[Region]) -> Self {
        PatternRequest {
            sampled_rgb: sample.rgb,
            candidate_regions: regions.iter().map(CandidateRegion::from).collect(),
            illumination_gain: sample.illumination_gain,
        }
    }

    pub fn sample(&self) -> Result<ColorSample> {
        ColorSample::new(self.sampled_rgb, self.illumination_gain)
    }

    pub fn validate(&self) -> Result<()> {
        self.sample()?;
        if self.candidate_regions.is_empty() {
            return Err(Error::domain("candidate_regions must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileSpec {
    pub base_rgb: [u8; 3],
    /// Peak deviation per channel, in 8-bit levels.
    pub variation_rgb_amplitude: f64,
    pub tile_px: u32,
}

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        let a = self.variation_rgb_amplitude;
        if !(0.0..=MAX_AMPLITUDE).contains(&a) {
            return Err(Error::domain(format!(
                "variation_rgb_amplitude must be in [0, 64], got {a}"
            )));
        }
        if !(1..=MAX_TILE_PX).contains(&self.tile_px) {
            return Err(Error::domain(format!(
                "tile_px must be in [1, 1024], got {}",
                self.tile_px
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternResponse {
    pub chosen_region_id: u32,
    pub tile_spec: TileSpec,
}

impl PatternResponse {
    pub fn validate(&self, request: &PatternRequest) -> Result<()> {
        if !request
            .candidate_regions
            .iter()
            .any(|r| r.region_id == self.chosen_region_id)
        {
            return Err(Error::domain(format!(
                "chosen_region_id {} is not a candidate",
                self.chosen_region_id
            )));
        }
        self.tile_spec.validate()
    }

    /// Parses and validates a response against the request it answers.
    pub fn parse(text: &str, request: &PatternRequest) -> Result<Self> {
        let r: PatternResponse = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        r.validate(request)?;
        Ok(r)
    }
}

/// Deterministic stand-in for an external provider.
pub fn offline_response(request: &PatternRequest) -> Result<PatternResponse> {
    request.validate()?;
    let sample = request.sample()?;
    let id = match_region(&sample, &request.candidate_regions).expect("validated non-empty");
    let chosen = request
        .candidate_regions
        .iter()
        .find(|r| r.region_id == id)
        .expect("id comes from the list");
    Ok(PatternResponse {
        chosen_region_id: id,
        tile_spec: TileSpec {
            base_rgb: chosen.mean_rgb,
            variation_rgb_amplitude: DEFAULT_AMPLITUDE,
            tile_px: DEFAULT_TILE_PX,
        },
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("provider returned an unusable body: {0}")]
    Malformed(String),
}

/// Anything that can answer a pattern request. Calls may block.
pub trait PatternProvider: Send + Sync {
    fn respond(&self, request: &PatternRequest) -> std::result::Result<PatternResponse, ProviderError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineProvider;

impl PatternProvider for OfflineProvider {
    fn respond(&self, request: &PatternRequest) -> std::result::Result<PatternResponse, ProviderError> {
        offline_response(request).map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}

/// JSON over HTTP POST: the request body is a `PatternRequest`, the reply a
/// `PatternResponse`. Do not call from inside an async runtime thread.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(2);

    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::domain(format!("cannot build http client: {e}")))?;
        Ok(HttpProvider {
            endpoint: endpoint.into(),
            client,
        })
    }
}

impl PatternProvider for HttpProvider {
    fn respond(&self, request: &PatternRequest) -> std::result::Result<PatternResponse, ProviderError> {
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else if e.is_decode() {
                ProviderError::Malformed(e.to_string())
            } else {
                ProviderError::Transport(e.to_string())
            }
        };
        let reply = self
            .client
            .post(&self.endpoint)
            .json(request)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(classify)?;
        let body = reply.text().map_err(classify)?;
        serde_json::from_str(&body).map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    Provider,
    Fallback,
}

/// A usable response plus what happened on the way to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternOutcome {
    pub response: PatternResponse,
    pub source: ResponseSource,
    pub attempts: u32,
    pub timed_out: bool,
    /// Last provider or validation error, if any.
    pub error: Option<String>,
}

/// Asks the provider (one retry on transport failure or timeout), validates
/// the answer, and falls back to the offline match otherwise. Errors only if
/// the request itself is invalid.
pub fn request_pattern(provider: &dyn PatternProvider, request: &PatternRequest) -> Result<PatternOutcome> {
    let fallback = offline_response(request)?;
    let mut timed_out = false;
    let mut error = None;
    let mut attempts = 0;
    while attempts < 2 {
        attempts += 1;
        match provider.respond(request) {
            Ok(resp) => match resp.validate(request) {
                Ok(()) => {
                    return Ok(PatternOutcome {
                        response: resp,
                        source: ResponseSource::Provider,
                        attempts,
                        timed_out,
                        error,
                    })
                }
                Err(e) => {
                    error = Some(format!("validation error: {e}"));
                    break;
                }
            },
            Err(ProviderError::Malformed(m)) => {
                error = Some(format!("validation error: {m}"));
                break;
            }
            Err(e) => {
                timed_out |= e == ProviderError::Timeout;
                error = Some(e.to_string());
            }
        }
    }
    Ok(PatternOutcome {
        response: fallback,
        source: ResponseSource::Fallback,
        attempts,
        timed_out,
        error,
    })
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Lattice value noise in [-1, 1] with smoothstep interpolation. `layer`
/// selects an independent field; with `period`, the lattice wraps every
/// `period` cells.
pub fn value_noise(rng: &CounterRng, x: f64, y: f64, layer: u16, period: Option<u32>) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let lattice = |ix: i64, iy: i64| {
        let (ix, iy) = match period {
            Some(p) => (ix.rem_euclid(i64::from(p)), iy.rem_euclid(i64::from(p))),
            None => (ix, iy),
        };
        let key = ((ix as u64) << 32) ^ (iy as u32 as u64);
        rng.symmetric(key, Channel::Aux(layer))
    };
    let (ix, iy) = (fx as i64, fy as i64);
    let top = lattice(ix, iy) * (1.0 - tx) + lattice(ix + 1, iy) * tx;
    let bottom = lattice(ix, iy + 1) * (1.0 - tx) + lattice(ix + 1, iy + 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Seamless square tile: `base_rgb` plus a shared zero-mean value-noise field
/// scaled to at most the requested amplitude. The amplitude is cut per channel
/// to the available headroom so no value clips, which keeps the tile mean
/// within half a level of `base_rgb`.
pub fn synthesize_tile(response: &PatternResponse, seed: u64) -> Result<RgbImage> {
    let spec = &response.tile_spec;
    spec.validate()?;
    let n = spec.tile_px;
    let cells = (n / 16).clamp(1, 8);
    let rng = CounterRng::new(seed);
    let scale = f64::from(cells) / f64::from(n);
    let mut field: Vec<f64> = (0..n * n)
        .map(|i| {
            let (c, r) = (i % n, i / n);
            value_noise(&rng, f64::from(c) * scale, f64::from(r) * scale, 0, Some(cells))
        })
        .collect();
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    field.iter_mut().for_each(|v| *v -= mean);
    let peak = field.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let gain: [f64; 3] = std::array::from_fn(|k| {
        let b = f64::from(spec.base_rgb[k]);
        let amp = spec.variation_rgb_amplitude.min(b).min(255.0 - b);
        if peak > 0.0 {
            amp / peak
        } else {
            0.0
        }
    });
    Ok(RgbImage::from_fn(n, n, |c, r| {
        let v = field[(r * n + c) as usize];
        Rgb(std::array::from_fn(|k| {
            (f64::from(spec.base_rgb[k]) + gain[k] * v).round().clamp(0.0, 255.0) as u8
        }))
    }))
}

/// Segment, ask, and synthesize in one go.
pub fn fill_from_environment(
    environment: &RgbImage,
    sample: &ColorSample,
    grid: u32,
    provider: &dyn PatternProvider,
    seed: u64,
) -> Result<(RgbImage, PatternOutcome)> {
    sample.validate()?;
    let regions = segment_regions(environment, grid)?;
    let request = PatternRequest::new(sample, &regions);
    let outcome = request_pattern(provider, &request)?;
    let tile = synthesize_tile(&outcome.response, seed)?;
    Ok((tile, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    fn cand(id: u32, rgb: [u8; 3]) -> CandidateRegion {
        CandidateRegion {
            region_id: id,
            mean_rgb: rgb,
            w_px: 10,
            h_px: 10,
        }
    }

    fn red_white() -> PatternRequest {
        PatternRequest {
            sampled_rgb: [240, 20, 20],
            candidate_regions: vec![cand(0, [255, 255, 255]), cand(1, [255, 0, 0])],
            illumination_gain: 1.0,
        }
    }

    fn response(id: u32, base: [u8; 3], amp: f64) -> PatternResponse {
        PatternResponse {
            chosen_region_id: id,
            tile_spec: TileSpec {
                base_rgb: base,
                variation_rgb_amplitude: amp,
                tile_px: 128,
            },
        }
    }

    #[test]
    fn segment_examples() {
        let red = RgbImage::from_pixel(10, 6, Rgb([255, 0, 0]));
        let r = segment_regions(&red, 2).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|x| x.mean_rgb == [255, 0, 0]));

        let split = RgbImage::from_fn(10, 6, |x, _| if x < 5 { Rgb([0; 3]) } else { Rgb([255; 3]) });
        let means: Vec<_> = segment_regions(&split, 2).unwrap().iter().map(|x| x.mean_rgb).collect();
        assert_eq!(means, vec![[0; 3], [255; 3], [0; 3], [255; 3]]);

        let one = segment_regions(&split, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].mean_rgb, [128; 3]); // 127.5 rounds up
        assert_eq!(
            one[0].bounds,
            Bounds {
                x: 0,
                y: 0,
                w: 10,
                h: 6
            }
        );

        assert!(segment_regions(&RgbImage::new(0, 0), 2).is_err());
        assert!(segment_regions(&red, 0).is_err());
        assert_eq!(segment_regions(&RgbImage::new(3, 2), 8).unwrap().len(), 4);
    }

    #[test]
    fn segment_partition_covers_image() {
        let img = RgbImage::new(37, 23);
        let r = segment_regions(&img, 8).unwrap();
        let area: u32 = r.iter().map(|x| x.bounds.w * x.bounds.h).sum();
        assert_eq!(area, 37 * 23);
        assert!(r.iter().enumerate().all(|(i, x)| x.region_id == i as u32));
    }

    #[test]
    fn match_examples() {
        let regions = [cand(0, [255, 0, 0]), cand(1, [255, 255, 255]), cand(2, [0, 0, 0])];
        let s = ColorSample::new([250, 10, 10], 1.0).unwrap();
        assert_eq!(match_region(&s, &regions), Some(0));

        let tie = [cand(5, [110, 100, 100]), cand(3, [90, 100, 100])];
        let s = ColorSample::new([100, 100, 100], 1.0).unwrap();
        assert_eq!(match_region(&s, &tie), Some(3));

        let greys = [cand(0, [128; 3]), cand(1, [64; 3])];
        let s = ColorSample::new([128; 3], 2.0).unwrap();
        assert_eq!(match_region(&s, &greys), Some(1));

        assert_eq!(match_region(&s, &[]), None);
        assert!(ColorSample::new([0; 3], 0.05).is_err());
        assert!(ColorSample::new([0; 3], 10.5).is_err());
    }

    #[test]
    fn tile_examples() {
        let flat = synthesize_tile(&response(0, [10, 20, 30], 0.0), 4).unwrap();
        assert!(flat.pixels().all(|p| *p == Rgb([10, 20, 30])));

        let a = synthesize_tile(&response(0, [100, 150, 200], 32.0), 9).unwrap();
        let b = synthesize_tile(&response(0, [100, 150, 200], 32.0), 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synthesize_tile(&response(0, [100, 150, 200], 32.0), 10).unwrap());
    }

    fn channel_stats(img: &RgbImage, k: usize) -> (f64, f64) {
        let xs: Vec<f64> = img.pixels().map(|p| f64::from(p[k])).collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    #[test]
    fn tile_statistics() {
        // Peak deviation is exactly the amplitude, so std ≤ amplitude; a
        // smooth lattice field spends most of its area well away from zero.
        for seed in 0..20 {
            let base = [100, 150, 200];
            let tile = synthesize_tile(&response(0, base, 32.0), seed).unwrap();
            for (k, b) in base.into_iter().enumerate() {
                let (m, s) = channel_stats(&tile, k);
                assert!((m - f64::from(b)).abs() <= 2.0, "seed {seed} mean {m}");
                assert!((4.0..=32.0).contains(&s), "seed {seed} std {s}");
            }
        }
    }

    #[test]
    fn tile_near_range_limits_keeps_mean() {
        for base in [[0, 255, 3], [250, 1, 128]] {
            let tile = synthesize_tile(&response(0, base, 64.0), 1).unwrap();
            for k in 0..3 {
                let (m, _) = channel_stats(&tile, k);
                assert!((m - f64::from(base[k])).abs() <= 2.0, "{base:?} {m}");
            }
        }
    }

    #[test]
    fn tile_is_seamless() {
        let tile = synthesize_tile(&response(0, [128; 3], 64.0), 3).unwrap();
        let n = tile.width();
        let step = |a: &Rgb<u8>, b: &Rgb<u8>| (i32::from(a[0]) - i32::from(b[0])).abs();
        let max_inner = (0..n - 1)
            .map(|c| step(tile.get_pixel(c, 0), tile.get_pixel(c + 1, 0)))
            .max()
            .unwrap();
        let wrap = (0..n)
            .map(|r| step(tile.get_pixel(n - 1, r), tile.get_pixel(0, r)))
            .max()
            .unwrap();
        assert!(wrap <= max_inner + 1, "{wrap} vs {max_inner}");
    }

    #[test]
    fn offline_picks_matching_region() {
        let out = request_pattern(&OfflineProvider, &red_white()).unwrap();
        assert_eq!(out.source, ResponseSource::Provider);
        assert_eq!(out.response.chosen_region_id, 1);
        assert_eq!(out.response.tile_spec.base_rgb, [255, 0, 0]);
        assert_eq!(out.response.tile_spec.variation_rgb_amplitude, 8.0);
        assert_eq!(out.response.tile_spec.tile_px, 128);
    }

    struct Scripted {
        reply: std::result::Result<PatternResponse, ProviderError>,
        calls: AtomicU32,
    }

    impl PatternProvider for Scripted {
        fn respond(&self, _: &PatternRequest) -> std::result::Result<PatternResponse, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.reply.clone()
        }
    }

    fn scripted(reply: std::result::Result<PatternResponse, ProviderError>) -> Scripted {
        Scripted {
            reply,
            calls: AtomicU32::new(0),
        }
    }

    #[test]
    fn invalid_responses_fall_back() {
        let offline = offline_response(&red_white()).unwrap();
        let bad = [
            response(7, [1, 2, 3], 8.0),
            response(0, [1, 2, 3], 65.0),
            response(0, [1, 2, 3], f64::NAN),
            PatternResponse {
                tile_spec: TileSpec {
                    tile_px: 0,
                    ..response(0, [0; 3], 1.0).tile_spec
                },
                ..response(0, [0; 3], 1.0)
            },
        ];
        for r in bad {
            let p = scripted(Ok(r));
            let out = request_pattern(&p, &red_white()).unwrap();
            assert_eq!(out.source, ResponseSource::Fallback);
            assert_eq!(out.response, offline);
            assert!(out.error.unwrap().starts_with("validation error"));
            assert_eq!(p.calls.load(Ordering::SeqCst), 1);
            assert!(synthesize_tile(&out.response, 0).is_ok());
        }
    }

    #[test]
    fn transport_failure_retries_once() {
        let p = scripted(Err(ProviderError::Transport("refused".into())));
        let out = request_pattern(&p, &red_white()).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 2);
        assert_eq!(
            (out.source, out.attempts, out.timed_out),
            (ResponseSource::Fallback, 2, false)
        );

        let p = scripted(Err(ProviderError::Timeout));
        let out = request_pattern(&p, &red_white()).unwrap();
        assert!(out.timed_out);
        assert_eq!(out.source, ResponseSource::Fallback);
    }

    #[test]
    fn response_parse_checks_candidates() {
        let req = red_white();
        let ok = r#"{"chosen_region_id":0,"tile_spec":{"base_rgb":[1,2,3],"variation_rgb_amplitude":4,"tile_px":16}}"#;
        assert_eq!(PatternResponse::parse(ok, &req).unwrap().tile_spec.tile_px, 16);
        let unknown = ok.replace("\"chosen_region_id\":0", "\"chosen_region_id\":9");
        assert!(matches!(PatternResponse::parse(&unknown, &req), Err(Error::Domain(_))));
        assert!(matches!(PatternResponse::parse("{", &req), Err(Error::Parse { .. })));
    }

    #[test]
    fn request_wire_names() {
        let v = serde_json::to_value(red_white()).unwrap();
        assert_eq!(
            v,
            serde_json::json!({
                "sampled_rgb": [240, 20, 20],
                "candidate_regions": [
                    {"region_id": 0, "mean_rgb": [255, 255, 255], "w_px": 10, "h_px": 10},
                    {"region_id": 1, "mean_rgb": [255, 0, 0], "w_px": 10, "h_px": 10}
                ]
            })
        );
    }

    /// Minimal HTTP/1.1 server answering every request with `body`, after
    /// `delay`. Returns the endpoint URL and a request counter.
    fn serve(body: &'static str, delay: Duration) -> (String, Arc<AtomicU32>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/pattern", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicU32::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                counter.fetch_add(1, Ordering::SeqCst);
                std::thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut len = 0;
                    let mut line = String::new();
                    while reader.read_line(&mut line).unwrap_or(0) > 0 && line != "\r\n" {
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap();
                        }
                        line.clear();
                    }
                    let mut buf = vec![0; len];
                    let _ = reader.read_exact(&mut buf);
                    std::thread::sleep(delay);
                    let _ = write!(
                        stream,
                        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                        body.len()
                    );
                });
            }
        });
        (url, hits)
    }

    #[test]
    fn http_provider_round_trip() {
        let body =
            r#"{"chosen_region_id":0,"tile_spec":{"base_rgb":[9,9,9],"variation_rgb_amplitude":2.5,"tile_px":32}}"#;
        let (url, hits) = serve(body, Duration::ZERO);
        let p = HttpProvider::new(url, HttpProvider::DEFAULT_TIMEOUT).unwrap();
        let out = request_pattern(&p, &red_white()).unwrap();
        assert_eq!(out.source, ResponseSource::Provider);
        assert_eq!(out.response.tile_spec.base_rgb, [9, 9, 9]);
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn http_provider_garbage_and_timeout() {
        let (url, _) = serve("not json", Duration::ZERO);
        let p = HttpProvider::new(url, HttpProvider::DEFAULT_TIMEOUT).unwrap();
        let out = request_pattern(&p, &red_white()).unwrap();
        assert_eq!(out.source, ResponseSource::Fallback);
        assert!(!out.timed_out);

        let (url, hits) = serve("{}", Duration::from_millis(600));
        let p = HttpProvider::new(url, Duration::from_millis(150)).unwrap();
        let out = request_pattern(&p, &red_white()).unwrap();
        assert!(out.timed_out);
        assert_eq!(out.source, ResponseSource::Fallback);
        assert_eq!(out.attempts, 2);
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn pipeline_is_deterministic() {
        let env = RgbImage::from_fn(64, 48, |x, y| Rgb([(x * 4) as u8, (y * 5) as u8, 90]));
        let s = ColorSample::new([120, 100, 90], 1.2).unwrap();
        let a = fill_from_environment(&env, &s, DEFAULT_GRID, &OfflineProvider, 5).unwrap();
        let b = fill_from_environment(&env, &s, DEFAULT_GRID, &OfflineProvider, 5).unwrap();
        assert_eq!(a, b);
    }
}
