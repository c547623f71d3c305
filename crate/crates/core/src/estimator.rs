//! Exposure fraction estimates for single frames and whole clips.
//!
//! For one frame, the best patch is located on the validity mask and the
//! estimate is the norm of the mean blur kernel over the norm of the mean flow
//! vector, both taken over the valid positions of that patch. Blur kernels
//! have no direction, so each one is flipped to agree with its flow vector
//! before averaging. A clip estimate is the median over frames.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Vec2, Vec2Field};
use crate::patch::{best_patch, PatchLocation, PatchSizeError};
use crate::validity::{check_shapes, compute_validity, EstimationParams, ShapeError};

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("frame {frame_index}: {source}")]
    Shape {
        frame_index: usize,
        #[source]
        source: ShapeError,
    },
    #[error("frame {frame_index}: {source}")]
    PatchSize {
        frame_index: usize,
        #[source]
        source: PatchSizeError,
    },
    #[error("clip has no frame pairs")]
    EmptyClip,
    #[error("estimation failed: none of {} frames had a valid patch", .diagnostics.len())]
    EstimationFailed { diagnostics: Vec<FrameDiagnostic> },
    #[error("{0}")]
    Parameter(String),
}

impl EstimateError {
    fn at_frame(self, index: usize) -> Self {
        match self {
            EstimateError::Shape { source, .. } => EstimateError::Shape {
                frame_index: index,
                source,
            },
            EstimateError::PatchSize { source, .. } => EstimateError::PatchSize {
                frame_index: index,
                source,
            },
            other => other,
        }
    }
}

/// Why a frame produced no estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostic {
    pub frame_index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEstimate {
    pub frame_index: usize,
    pub alpha_patch: f64,
    pub patch: PatchLocation,
    pub n_valid: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipEstimate {
    pub alpha_glob: f64,
    pub frames: Vec<FrameEstimate>,
    pub n_frames_used: usize,
    pub n_frames_total: usize,
    /// Frames that produced no estimate, in index order.
    pub skipped: Vec<FrameDiagnostic>,
}

/// A flow field and the blur kernel map of the same frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair {
    pub flow: Vec2Field,
    pub blur: Vec2Field,
}

impl FieldPair {
    pub fn new(flow: Vec2Field, blur: Vec2Field) -> Self {
        FieldPair { flow, blur }
    }
}

/// Camera timing: exposure fraction is exposure time over frame interval,
/// equivalently shutter angle over 360 degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraTiming {
    pub exposure_s: f64,
    pub frame_interval_s: f64,
}

impl CameraTiming {
    pub fn new(exposure_s: f64, frame_interval_s: f64) -> Result<Self, EstimateError> {
        let t = CameraTiming {
            exposure_s,
            frame_interval_s,
        };
        let alpha = t.exposure_fraction();
        if !(exposure_s > 0.0 && frame_interval_s > 0.0 && alpha > 0.0 && alpha <= 1.0) {
            return Err(EstimateError::Parameter(format!(
                "exposure {exposure_s}s over interval {frame_interval_s}s is not a fraction in (0, 1]"
            )));
        }
        Ok(t)
    }

    pub fn from_framerate(exposure_s: f64, framerate_hz: f64) -> Result<Self, EstimateError> {
        Self::new(exposure_s, 1.0 / framerate_hz)
    }

    pub fn from_shutter_angle(
        shutter_angle_deg: f64,
        framerate_hz: f64,
    ) -> Result<Self, EstimateError> {
        Self::new(shutter_angle_deg / 360.0 / framerate_hz, 1.0 / framerate_hz)
    }

    pub fn framerate_hz(&self) -> f64 {
        1.0 / self.frame_interval_s
    }

    pub fn exposure_fraction(&self) -> f64 {
        self.exposure_s / self.frame_interval_s
    }

    pub fn shutter_angle_deg(&self) -> f64 {
        self.exposure_fraction() * 360.0
    }
}

/// Estimates the exposure fraction of one frame. Returns `Ok(None)` when no
/// position in the frame passes the validity filter. The returned estimate
/// carries frame index 0; [`estimate_clip`] assigns real indices.
pub fn estimate_frame(
    flow: &Vec2Field,
    blur: &Vec2Field,
    params: &EstimationParams,
) -> Result<Option<FrameEstimate>, EstimateError> {
    check_shapes(flow, blur).map_err(|source| EstimateError::Shape {
        frame_index: 0,
        source,
    })?;
    let mask = compute_validity(flow, blur, params).map_err(|source| EstimateError::Shape {
        frame_index: 0,
        source,
    })?;
    let side = params.patch_side();
    let patch = match best_patch(&mask, side).map_err(|source| EstimateError::PatchSize {
        frame_index: 0,
        source,
    })? {
        Some(p) => p,
        None => return Ok(None),
    };

    let mut sum_flow = Vec2::ZERO;
    let mut sum_blur = Vec2::ZERO;
    let mut n_valid = 0usize;
    for y in patch.y0..patch.y0 + side {
        for x in patch.x0..patch.x0 + side {
            if !mask.get(x, y) {
                continue;
            }
            let f = flow.get(x, y);
            let k = blur.get(x, y);
            sum_flow += f;
            sum_blur += if f.dot(k) < 0.0 { -k } else { k };
            n_valid += 1;
        }
    }
    debug_assert_eq!(n_valid, patch.valid_count);
    let n = n_valid as f64;
    let mean_flow = (sum_flow * (1.0 / n)).norm();
    let mean_blur = (sum_blur * (1.0 / n)).norm();
    // opposing flows inside one patch can cancel out
    if mean_flow == 0.0 {
        return Ok(None);
    }
    Ok(Some(FrameEstimate {
        frame_index: 0,
        alpha_patch: mean_blur / mean_flow,
        patch,
        n_valid,
    }))
}

/// Median of finite values; an even count averages the middle pair.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

/// Median of per-frame estimates. Frames run in parallel on the current rayon
/// pool; results are ordered by frame index before the median is taken.
pub fn estimate_clip(
    pairs: &[FieldPair],
    params: &EstimationParams,
) -> Result<ClipEstimate, EstimateError> {
    if pairs.is_empty() {
        return Err(EstimateError::EmptyClip);
    }
    let results: Vec<Result<Option<FrameEstimate>, EstimateError>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            estimate_frame(&pair.flow, &pair.blur, params)
                .map(|est| {
                    est.map(|mut e| {
                        e.frame_index = i;
                        e
                    })
                })
                .map_err(|e| e.at_frame(i))
        })
        .collect();
    let per_frame = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    aggregate(per_frame)
}

/// Combines per-frame results (one entry per frame, in index order) into a clip estimate.
pub fn aggregate(per_frame: Vec<Option<FrameEstimate>>) -> Result<ClipEstimate, EstimateError> {
    let n_frames_total = per_frame.len();
    let mut frames = Vec::new();
    let mut skipped = Vec::new();
    for (i, est) in per_frame.into_iter().enumerate() {
        match est {
            Some(e) => frames.push(e),
            None => skipped.push(FrameDiagnostic {
                frame_index: i,
                reason: "no valid position".into(),
            }),
        }
    }
    let alphas: Vec<f64> = frames.iter().map(|f| f.alpha_patch).collect();
    let Some(alpha_glob) = median(&alphas) else {
        return Err(EstimateError::EstimationFailed {
            diagnostics: skipped,
        });
    };
    Ok(ClipEstimate {
        alpha_glob,
        n_frames_used: frames.len(),
        n_frames_total,
        frames,
        skipped,
    })
}

pub fn mean_absolute_error(estimates: &[f64], ground_truth: f64) -> Result<f64, EstimateError> {
    if estimates.is_empty() {
        return Err(EstimateError::Parameter("MAE of an empty list".into()));
    }
    if !ground_truth.is_finite() || estimates.iter().any(|a| !a.is_finite()) {
        return Err(EstimateError::Parameter("MAE inputs must be finite".into()));
    }
    let total: f64 = estimates.iter().map(|a| (ground_truth - a).abs()).sum();
    Ok(total / estimates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_pair(w: usize, h: usize, f: Vec2, k: Vec2) -> FieldPair {
        FieldPair::new(
            Vec2Field::uniform(w, h, f).unwrap(),
            Vec2Field::uniform(w, h, k).unwrap(),
        )
    }

    fn params(d: usize, phi: f64) -> EstimationParams {
        EstimationParams::new(d, phi).unwrap()
    }

    #[test]
    fn bsd_16ms_ratio() {
        let p = uniform_pair(40, 40, Vec2::new(10.0, 0.0), Vec2::new(2.4, 0.0));
        let e = estimate_frame(&p.flow, &p.blur, &params(30, 5.0))
            .unwrap()
            .unwrap();
        assert!((e.alpha_patch - 0.24).abs() < 1e-12);
        assert_eq!(e.n_valid, 900);
        assert_eq!((e.patch.x0, e.patch.y0), (0, 0));
    }

    #[test]
    fn diagonal_ratio() {
        let p = uniform_pair(12, 12, Vec2::new(8.0, 6.0), Vec2::new(2.0, 1.5));
        let e = estimate_frame(&p.flow, &p.blur, &params(10, 5.0))
            .unwrap()
            .unwrap();
        assert!((e.alpha_patch - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_blur_gives_none() {
        let p = uniform_pair(12, 12, Vec2::new(8.0, 6.0), Vec2::ZERO);
        assert_eq!(
            estimate_frame(&p.flow, &p.blur, &params(10, 5.0)).unwrap(),
            None
        );
    }

    #[test]
    fn opposite_blur_sign_is_aligned() {
        let flow = Vec2Field::uniform(4, 4, Vec2::new(10.0, 0.0)).unwrap();
        let data = (0..16)
            .map(|i| {
                if i % 2 == 0 {
                    Vec2::new(3.0, 0.0)
                } else {
                    Vec2::new(-3.0, 0.0)
                }
            })
            .collect();
        let blur = Vec2Field::new(4, 4, data).unwrap();
        let e = estimate_frame(&flow, &blur, &params(4, 5.0))
            .unwrap()
            .unwrap();
        assert!((e.alpha_patch - 0.3).abs() < 1e-15);
    }

    #[test]
    fn errors_are_reported() {
        let a = Vec2Field::uniform(4, 4, Vec2::new(10.0, 0.0)).unwrap();
        let b = Vec2Field::uniform(4, 5, Vec2::new(3.0, 0.0)).unwrap();
        assert!(matches!(
            estimate_frame(&a, &b, &params(2, 5.0)),
            Err(EstimateError::Shape { .. })
        ));
        assert!(matches!(
            estimate_frame(&a, &a, &params(5, 5.0)),
            Err(EstimateError::PatchSize { .. })
        ));
        let pairs = vec![
            uniform_pair(4, 4, Vec2::new(10.0, 0.0), Vec2::new(3.0, 0.0)),
            FieldPair::new(a, b),
        ];
        match estimate_clip(&pairs, &params(2, 5.0)) {
            Err(EstimateError::Shape { frame_index, .. }) => assert_eq!(frame_index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            estimate_clip(&[], &params(2, 5.0)),
            Err(EstimateError::EmptyClip)
        );
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[0.2, 0.3, 0.25]), Some(0.25));
        assert_eq!(median(&[0.2, 0.3]), Some(0.25));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn clip_skips_empty_frames() {
        let good = uniform_pair(8, 8, Vec2::new(10.0, 0.0), Vec2::new(2.0, 0.0));
        let bad = uniform_pair(8, 8, Vec2::new(10.0, 0.0), Vec2::ZERO);
        let clip =
            estimate_clip(&[bad.clone(), good.clone(), bad.clone()], &params(4, 5.0)).unwrap();
        assert_eq!((clip.n_frames_used, clip.n_frames_total), (1, 3));
        assert_eq!(clip.frames[0].frame_index, 1);
        assert_eq!(
            clip.skipped
                .iter()
                .map(|d| d.frame_index)
                .collect::<Vec<_>>(),
            vec![0, 2]
        );
        assert!((clip.alpha_glob - 0.2).abs() < 1e-15);

        match estimate_clip(&[bad.clone(), bad], &params(4, 5.0)) {
            Err(EstimateError::EstimationFailed { diagnostics }) => {
                assert_eq!(diagnostics.len(), 2)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mae() {
        assert!((mean_absolute_error(&[0.2, 0.3], 0.25).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(mean_absolute_error(&[0.24], 0.24).unwrap(), 0.0);
        assert!(mean_absolute_error(&[], 0.24).is_err());
        assert!(mean_absolute_error(&[f64::NAN], 0.24).is_err());
    }

    #[test]
    fn camera_timing() {
        // 16 ms at 15 fps
        let t = CameraTiming::from_framerate(0.016, 15.0).unwrap();
        assert!((t.exposure_fraction() - 0.24).abs() < 1e-12);
        assert!((t.shutter_angle_deg() - 86.4).abs() < 1e-9);
        let t = CameraTiming::from_shutter_angle(180.0, 24.0).unwrap();
        assert!((t.exposure_fraction() - 0.5).abs() < 1e-12);
        assert!((t.framerate_hz() - 24.0).abs() < 1e-9);
        assert!(CameraTiming::new(0.1, 0.05).is_err());
        assert!(CameraTiming::new(0.0, 0.05).is_err());
    }

    fn random_pair(w: usize, h: usize, seed: u64) -> FieldPair {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256StarStar::seed_from_u64(seed);
        let mut flow = Vec::new();
        let mut blur = Vec::new();
        for _ in 0..w * h {
            let f = Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let a = rng.random_range(-0.6..0.6);
            let noise = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            flow.push(f);
            blur.push(f * a + noise);
        }
        FieldPair::new(
            Vec2Field::new(w, h, flow).unwrap(),
            Vec2Field::new(w, h, blur).unwrap(),
        )
    }

    /// With `n - untouched.len()` values replaced arbitrarily, the value at
    /// (1-based) rank r of the full list lies between ranks `r - k` and `r`
    /// of the untouched values.
    fn median_bounds(untouched: &[f64], n: usize) -> (f64, f64) {
        let k = n - untouched.len();
        let bound = |r: usize| {
            let lo = untouched[r.saturating_sub(k).max(1) - 1];
            let hi = untouched[r.min(untouched.len()) - 1];
            (lo, hi)
        };
        if n % 2 == 1 {
            bound(n / 2 + 1)
        } else {
            let (a_lo, a_hi) = bound(n / 2);
            let (b_lo, b_hi) = bound(n / 2 + 1);
            ((a_lo + b_lo) / 2.0, (a_hi + b_hi) / 2.0)
        }
    }

    proptest! {
        #[test]
        fn scale_invariance(s in 0.5..4.0f64) {
            // a uniform patch stays valid under any scale keeping both norms above the floor
            let p = uniform_pair(16, 16, Vec2::new(7.0, -3.0), Vec2::new(2.1, -0.9));
            let q = uniform_pair(16, 16, Vec2::new(7.0, -3.0) * s, Vec2::new(2.1, -0.9) * s);
            let prm = params(8, 5.0);
            let a = estimate_frame(&p.flow, &p.blur, &prm).unwrap().unwrap().alpha_patch;
            let b = estimate_frame(&q.flow, &q.blur, &prm).unwrap().unwrap().alpha_patch;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn random_scale_with_unchanged_validity(seed in any::<u64>(), s in 1.0..3.0f64) {
            let p = random_pair(16, 16, seed);
            let prm = params(6, 7.0);
            let mask = compute_validity(&p.flow, &p.blur, &prm).unwrap();
            let q = FieldPair::new(p.flow.map(|v| v * s).unwrap(), p.blur.map(|v| v * s).unwrap());
            let mask_q = compute_validity(&q.flow, &q.blur, &prm).unwrap();
            prop_assume!(mask == mask_q);
            let a = estimate_frame(&p.flow, &p.blur, &prm).unwrap();
            let b = estimate_frame(&q.flow, &q.blur, &prm).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a.alpha_patch - b.alpha_patch).abs() < 1e-9),
                (None, None) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn rotation_invariance(seed in any::<u64>(), angle in -3.1..3.1f64) {
            let p = random_pair(16, 16, seed);
            let prm = params(6, 7.0);
            let q = FieldPair::new(p.flow.map(|v| v.rotated(angle)).unwrap(), p.blur.map(|v| v.rotated(angle)).unwrap());
            let mask = compute_validity(&p.flow, &p.blur, &prm).unwrap();
            prop_assume!(mask == compute_validity(&q.flow, &q.blur, &prm).unwrap());
            let a = estimate_frame(&p.flow, &p.blur, &prm).unwrap();
            let b = estimate_frame(&q.flow, &q.blur, &prm).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a.alpha_patch - b.alpha_patch).abs() < 1e-9),
                (None, None) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn uniform_fields_bounded_by_one(fx in -30.0..30.0f64, fy in -30.0..30.0f64, a in 0.0..1.0f64) {
            let f = Vec2::new(fx, fy);
            let p = uniform_pair(6, 6, f, f * a);
            if let Some(e) = estimate_frame(&p.flow, &p.blur, &params(3, 5.0)).unwrap() {
                prop_assert!(e.alpha_patch > 0.0 && e.alpha_patch <= 1.0);
            }
        }

        #[test]
        fn median_robustness(
            clean in proptest::collection::vec(0.01..1.0f64, 5..40),
            frac in 0.0..0.49f64,
            factor in 2.0..20.0f64,
        ) {
            let n = clean.len();
            let n_bad = ((n as f64) * frac) as usize;
            prop_assume!(2 * n_bad < n);
            let mut corrupted = clean.clone();
            for v in corrupted.iter_mut().take(n_bad) {
                *v *= factor;
            }
            let m = median(&corrupted).unwrap();
            let mut untouched = clean[n_bad..].to_vec();
            untouched.sort_by(f64::total_cmp);
            let (lo, hi) = median_bounds(&untouched, n);
            prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12, "{} not in [{}, {}]", m, lo, hi);
        }
    }
}
