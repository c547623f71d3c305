//! Synthetic uniform-translation clips with exact flow and blur ground truth.
//!
//! A clip is a crop window sliding over a band-limited noise texture at a
//! constant velocity (px/frame). Frame `i` averages `S` bilinear samples of
//! the texture taken at offsets `(i + (j + 0.5) / S * alpha) * velocity`,
//! `j = 0..S`, which approximates a box exposure of length `alpha` frame
//! intervals. Ground truth is therefore `velocity` for the flow and
//! `alpha * velocity` for the blur kernel at every pixel.
//!
//! # Random streams
//!
//! Every generator is `Xoshiro256StarStar` seeded through SplitMix64
//! (`seed_from_u64`). Uniform variates are `f64` in `[0, 1)`; Gaussian
//! variates come from `rand_distr::StandardNormal`. Per-frame streams use the
//! seed [`stream_seed`]`(seed, frame_index)` so that parallel and serial
//! rendering produce identical bytes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::FieldPair;
use crate::field::{FieldError, Frame, Vec2, Vec2Field};

pub const DEFAULT_SUPERSAMPLES: u32 = 64;
pub const TEXTURE_BLUR_RADIUS: usize = 2;
/// Largest texture side the renderer will allocate.
pub const MAX_CANVAS_SIDE: usize = 1 << 15;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("canvas {have_w}x{have_h} is too small, need at least {need_w}x{need_h}")]
    CanvasTooSmall {
        have_w: usize,
        have_h: usize,
        need_w: usize,
        need_h: usize,
    },
    #[error("tamper error: {0}")]
    Tamper(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Recipe for one synthetic clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Displacement per frame interval, px.
    pub velocity: (f64, f64),
    pub alpha: f64,
    pub n_frames: usize,
    pub seed: u64,
    pub supersamples: u32,
    pub noise_sigma: f64,
    /// Texture size; sized automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canvas: Option<(usize, usize)>,
}

impl SynthConfig {
    pub fn new(
        width: usize,
        height: usize,
        velocity: (f64, f64),
        alpha: f64,
        n_frames: usize,
        seed: u64,
    ) -> Self {
        SynthConfig {
            width,
            height,
            velocity,
            alpha,
            n_frames,
            seed,
            supersamples: DEFAULT_SUPERSAMPLES,
            noise_sigma: 0.0,
            canvas: None,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.velocity.0, self.velocity.1)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Config(m));
        if self.width == 0 || self.height == 0 {
            return fail(format!(
                "frame size must be positive, got {}x{}",
                self.width, self.height
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.n_frames < 2 {
            return fail(format!("need at least 2 frames, got {}", self.n_frames));
        }
        if self.supersamples == 0 {
            return fail("supersamples must be at least 1".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return fail(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.noise_sigma
            ));
        }
        if !self.velocity().is_finite() {
            return fail("velocity must be finite".into());
        }
        let (need_w, need_h) = self.required_canvas();
        if need_w > MAX_CANVAS_SIDE || need_h > MAX_CANVAS_SIDE {
            return fail(format!(
                "motion needs a {need_w}x{need_h} texture, above the {MAX_CANVAS_SIDE} limit"
            ));
        }
        if let Some((have_w, have_h)) = self.canvas {
            if have_w < need_w || have_h < need_h {
                return Err(SynthError::CanvasTooSmall {
                    have_w,
                    have_h,
                    need_w,
                    need_h,
                });
            }
        }
        Ok(())
    }

    /// Largest sampling offset along each axis over the whole clip.
    fn path_extent(&self) -> (f64, f64) {
        let span = (self.n_frames - 1) as f64 + self.alpha;
        (span * self.velocity.0.abs(), span * self.velocity.1.abs())
    }

    /// Smallest texture that keeps every bilinear tap inside, one pixel margin each side.
    pub fn required_canvas(&self) -> (usize, usize) {
        let (ex, ey) = self.path_extent();
        let grow = |e: f64| {
            if e.is_finite() {
                e.ceil() as usize
            } else {
                usize::MAX / 4
            }
        };
        (self.width + grow(ex) + 2, self.height + grow(ey) + 2)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let v = self.velocity();
        GroundTruth {
            flow: v,
            blur: v * self.alpha,
        }
    }
}

/// Per-pixel ground truth of a uniform-translation clip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub flow: Vec2,
    pub blur: Vec2,
}

impl GroundTruth {
    pub fn pair(&self, width: usize, height: usize) -> Result<FieldPair, FieldError> {
        Ok(FieldPair::new(
            Vec2Field::uniform(width, height, self.flow)?,
            Vec2Field::uniform(width, height, self.blur)?,
        ))
    }
}

/// Rendered frames, one field pair per consecutive frame pair, and the
/// exposure fraction a faithful estimator should report.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleClip {
    pub frames: Vec<Frame>,
    pub pairs: Vec<FieldPair>,
    pub alpha_apparent: f64,
}

impl OracleClip {
    pub fn subsample(&self, k: usize) -> Result<OracleClip, SynthError> {
        let (frames, pairs) = subsample_clip(&self.frames, &self.pairs, k)?;
        Ok(OracleClip {
            frames,
            pairs,
            alpha_apparent: self.alpha_apparent / k as f64,
        })
    }

    pub fn interpolate(&self, m: usize) -> Result<OracleClip, SynthError> {
        let (frames, pairs) = interpolate_clip(&self.frames, &self.pairs, m)?;
        Ok(OracleClip {
            frames,
            pairs,
            alpha_apparent: self.alpha_apparent * m as f64,
        })
    }
}

pub fn rng_from_seed(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Seed of the stream for one frame of a clip.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Band-limited noise texture: uniform white noise, box-blurred twice with
/// radius 2 (clamped borders), rescaled to span `[0, 1]`.
pub fn generate_texture(seed: u64, width: usize, height: usize) -> Result<Frame, SynthError> {
    if width == 0 || height == 0 {
        return Err(SynthError::Config(format!(
            "texture size must be positive, got {width}x{height}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut pixels: Vec<f64> = (0..width * height).map(|_| rng.random::<f64>()).collect();
    for _ in 0..2 {
        pixels = box_blur(&pixels, width, height, TEXTURE_BLUR_RADIUS);
    }
    let (lo, hi) = pixels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            (lo.min(p), hi.max(p))
        });
    let range = hi - lo;
    for p in &mut pixels {
        *p = if range > 0.0 {
            ((*p - lo) / range).clamp(0.0, 1.0)
        } else {
            0.5
        };
    }
    Ok(Frame::new(width, height, pixels)?)
}

fn box_blur(src: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let norm = 1.0 / (2 * radius + 1) as f64;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += row[clamp(x as isize + d, width)];
            }
            tmp[y * width + x] = acc * norm;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += tmp[clamp(y as isize + d, height) * width + x];
            }
            out[y * width + x] = acc * norm;
        }
    }
    out
}

/// Renders the frames of a clip together with its exact ground-truth fields.
pub fn render_clip(config: &SynthConfig) -> Result<OracleClip, SynthError> {
    config.validate()?;
    let (tex_w, tex_h) = config.canvas.unwrap_or_else(|| config.required_canvas());
    let texture = generate_texture(config.seed, tex_w, tex_h)?;
    let v = config.velocity();
    let (ex, ey) = config.path_extent();
    // a positive velocity moves content right, so sampling starts from the far side
    let origin = Vec2::new(
        if v.x > 0.0 { ex.ceil() + 1.0 } else { 1.0 },
        if v.y > 0.0 { ey.ceil() + 1.0 } else { 1.0 },
    );

    let frames = (0..config.n_frames)
        .into_par_iter()
        .map(|i| render_frame(config, &texture, origin, i))
        .collect::<Result<Vec<_>, _>>()?;

    let gt = config.ground_truth();
    let pair = gt.pair(config.width, config.height)?;
    Ok(OracleClip {
        frames,
        pairs: vec![pair; config.n_frames - 1],
        alpha_apparent: config.alpha,
    })
}

/// Texel offsets and weights, relative to a pixel's base position, whose
/// weighted sum equals the mean of the bilinear samples at `-offsets`.
/// Sorted by (row, column) so the summation order is fixed.
fn exposure_kernel(offsets: &[Vec2]) -> Vec<(i64, i64, f64)> {
    let inv = 1.0 / offsets.len() as f64;
    let mut taps: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    for off in offsets {
        let (px, py) = (-off.x, -off.y);
        let (ix, iy) = (px.floor(), py.floor());
        let (fx, fy) = (px - ix, py - iy);
        let (ix, iy) = (ix as i64, iy as i64);
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                if wx * wy != 0.0 {
                    *taps.entry((iy + dy, ix + dx)).or_insert(0.0) += wx * wy * inv;
                }
            }
        }
    }
    taps.into_iter().map(|((y, x), w)| (x, y, w)).collect()
}

fn render_frame(
    config: &SynthConfig,
    texture: &Frame,
    origin: Vec2,
    index: usize,
) -> Result<Frame, SynthError> {
    let (w, h) = (config.width, config.height);
    let s = config.supersamples as usize;
    let v = config.velocity();
    let offsets: Vec<Vec2> = (0..s)
        .map(|j| v * (index as f64 + (j as f64 + 0.5) / s as f64 * config.alpha))
        .collect();
    let kernel = exposure_kernel(&offsets);
    let (ox, oy) = (origin.x as i64, origin.y as i64);
    let (tw, th) = (texture.width() as i64, texture.height() as i64);
    let inside = kernel.iter().all(|&(dx, dy, _)| {
        ox + dx >= 0 && oy + dy >= 0 && ox + dx + w as i64 <= tw && oy + dy + h as i64 <= th
    });
    let mut pixels = vec![0.0; w * h];
    if inside {
        let tex = texture.pixels();
        for (y, row) in pixels.chunks_exact_mut(w).enumerate() {
            for &(dx, dy, wt) in &kernel {
                let start = ((oy + dy) as usize + y) * tw as usize + (ox + dx) as usize;
                for (p, &t) in row.iter_mut().zip(&tex[start..start + w]) {
                    *p += wt * t;
                }
            }
        }
    } else {
        // a user canvas may leave taps on the border; clamp like the sampler does
        let inv = 1.0 / s as f64;
        for y in 0..h {
            for x in 0..w {
                let base = origin + Vec2::new(x as f64, y as f64);
                let acc: f64 = offsets
                    .iter()
                    .map(|&off| {
                        let p = base - off;
                        texture.sample_bilinear(p.x, p.y)
                    })
                    .sum();
                pixels[y * w + x] = acc * inv;
            }
        }
    }
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }
    if config.noise_sigma > 0.0 {
        let mut rng = rng_from_seed(stream_seed(config.seed, index as u64));
        for p in &mut pixels {
            let n: f64 = rng.sample(StandardNormal);
            *p = (*p + config.noise_sigma * n).clamp(0.0, 1.0);
        }
    }
    Ok(Frame::new(w, h, pixels)?)
}

/// Rounds every component to the nearest integer, ties away from zero.
pub fn quantize_blur(field: &Vec2Field) -> Vec2Field {
    field
        .map(|v| Vec2::new(v.x.round(), v.y.round()))
        .expect("rounding keeps components finite")
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma_px` to each component.
pub fn perturb_field(field: &Vec2Field, sigma_px: f64, seed: u64) -> Result<Vec2Field, SynthError> {
    if !(sigma_px.is_finite() && sigma_px >= 0.0) {
        return Err(SynthError::Config(format!(
            "sigma must be finite and >= 0, got {sigma_px}"
        )));
    }
    if sigma_px == 0.0 {
        return Ok(field.clone());
    }
    let mut rng = rng_from_seed(seed);
    let data = field
        .data()
        .iter()
        .map(|&v| {
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            v + Vec2::new(nx, ny) * sigma_px
        })
        .collect();
    Ok(Vec2Field::new(field.width(), field.height(), data)?)
}

fn check_clip_shape(frames: &[Frame], pairs: &[FieldPair]) -> Result<(), SynthError> {
    if !frames.is_empty() && frames.len() != pairs.len() + 1 {
        return Err(SynthError::Tamper(format!(
            "{} frames do not match {} field pairs",
            frames.len(),
            pairs.len()
        )));
    }
    Ok(())
}

/// Keeps frames `0, k, 2k, ...`. The flow between kept frames is the sum of
/// the `k` flows it spans; each kept frame keeps its own blur field. A frame
/// list may be empty for field-only clips.
pub fn subsample_clip(
    frames: &[Frame],
    pairs: &[FieldPair],
    k: usize,
) -> Result<(Vec<Frame>, Vec<FieldPair>), SynthError> {
    check_clip_shape(frames, pairs)?;
    if k == 0 {
        return Err(SynthError::Tamper(
            "subsampling factor must be at least 1".into(),
        ));
    }
    let n_pairs = pairs.len() / k;
    if n_pairs == 0 {
        return Err(SynthError::Tamper(format!(
            "subsampling {} frames by {k} leaves fewer than 2 frames",
            pairs.len() + 1
        )));
    }
    let mut out_pairs = Vec::with_capacity(n_pairs);
    for chunk in pairs.chunks_exact(k) {
        let mut flow = chunk[0].flow.clone();
        for p in &chunk[1..] {
            flow = flow.add(&p.flow)?;
        }
        out_pairs.push(FieldPair::new(flow, chunk[0].blur.clone()));
    }
    let out_frames = frames
        .iter()
        .step_by(k)
        .take(n_pairs + 1)
        .cloned()
        .collect();
    Ok((
        if frames.is_empty() {
            Vec::new()
        } else {
            out_frames
        },
        out_pairs,
    ))
}

/// Emulates blur-preserving frame interpolation by factor `m`: `m - 1`
/// intermediates are inserted between consecutive frames by warping the
/// earlier frame along a fraction of its flow, so they carry the source blur.
/// Every flow field is divided by `m`; blur fields are unchanged.
pub fn interpolate_clip(
    frames: &[Frame],
    pairs: &[FieldPair],
    m: usize,
) -> Result<(Vec<Frame>, Vec<FieldPair>), SynthError> {
    check_clip_shape(frames, pairs)?;
    if m == 0 {
        return Err(SynthError::Tamper(
            "interpolation factor must be at least 1".into(),
        ));
    }
    if m == 1 {
        return Ok((frames.to_vec(), pairs.to_vec()));
    }
    let scale = 1.0 / m as f64;
    let mut out_pairs = Vec::with_capacity(pairs.len() * m);
    for p in pairs {
        let flow = p.flow.map(|v| v * scale)?;
        for _ in 0..m {
            out_pairs.push(FieldPair::new(flow.clone(), p.blur.clone()));
        }
    }
    let mut out_frames = Vec::with_capacity(pairs.len() * m + 1);
    if !frames.is_empty() {
        for (frame, pair) in frames.iter().zip(pairs) {
            out_frames.push(frame.clone());
            for s in 1..m {
                out_frames.push(warp_frame(frame, &pair.flow, s as f64 * scale)?);
            }
        }
        out_frames.push(frames[frames.len() - 1].clone());
    }
    Ok((out_frames, out_pairs))
}

/// Backward warp: the output at `p` samples `frame` at `p - t * flow(p)`.
fn warp_frame(frame: &Frame, flow: &Vec2Field, t: f64) -> Result<Frame, SynthError> {
    let (w, h) = (frame.width(), frame.height());
    if flow.dims() != (w, h) {
        return Err(SynthError::Tamper(format!(
            "frame is {w}x{h} but flow is {}x{}",
            flow.width(),
            flow.height()
        )));
    }
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let d = flow.get(x, y) * t;
            pixels.push(frame.sample_bilinear(x as f64 - d.x, y as f64 - d.y));
        }
    }
    Ok(Frame::new(w, h, pixels)?)
}
