//! Tamper classification from exposure fraction estimates.
//!
//! Deleting frames multiplies the apparent flow while the blur stays put, so
//! keeping every k-th frame divides the observed exposure fraction by k.
//! Blur-preserving interpolation by m does the opposite and multiplies it by m.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{median, ClipEstimate, FrameEstimate};

pub const DEFAULT_REL_TOL: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum ForensicsError {
    #[error("reference exposure fraction must lie in (0, 1], got {0}")]
    Reference(f64),
    #[error("relative tolerance must lie in (0, 1), got {0}")]
    Tolerance(f64),
    #[error("window must be odd and at least 3, got {0}")]
    Window(usize),
    #[error("{frames} frame estimates are fewer than the window of {window}")]
    TooFewFrames { frames: usize, window: usize },
    #[error("estimated exposure fraction {0} is not a positive finite number")]
    Estimate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Deletion,
    Interpolation,
    Indeterminate,
}

impl Verdict {
    /// Exit status used by the command-line tool.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Consistent => 0,
            Verdict::Deletion => 3,
            Verdict::Interpolation => 4,
            Verdict::Indeterminate => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub alpha_hat: f64,
    pub alpha_ref: f64,
    pub ratio: f64,
    pub n_frames_used: usize,
    pub frame_alpha_min: f64,
    pub frame_alpha_median: f64,
    pub frame_alpha_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TamperVerdict {
    pub verdict: Verdict,
    /// Estimated deletion factor, present for deletions.
    pub k_hat: Option<u32>,
    /// Estimated interpolation factor, when the ratio is close to an integer.
    pub multiplier: Option<u32>,
    pub relative_deviation: f64,
    pub rel_tol: f64,
    pub evidence: Evidence,
}

/// Classifies a clip estimate against the exposure fraction the camera
/// metadata claims.
pub fn detect_tamper(
    clip: &ClipEstimate,
    alpha_ref: f64,
    rel_tol: f64,
) -> Result<TamperVerdict, ForensicsError> {
    if !(alpha_ref > 0.0 && alpha_ref <= 1.0) {
        return Err(ForensicsError::Reference(alpha_ref));
    }
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(ForensicsError::Tolerance(rel_tol));
    }
    let alpha_hat = clip.alpha_glob;
    if !(alpha_hat.is_finite() && alpha_hat > 0.0) {
        return Err(ForensicsError::Estimate(alpha_hat));
    }
    let ratio = alpha_hat / alpha_ref;
    let relative_deviation = (ratio - 1.0).abs();

    let mut k_hat = None;
    let mut multiplier = None;
    let verdict = if relative_deviation <= rel_tol {
        Verdict::Consistent
    } else if ratio < 1.0 {
        let k = (1.0 / ratio).round();
        let expected = alpha_ref / k;
        if k >= 2.0 && (alpha_hat - expected).abs() / expected <= rel_tol {
            k_hat = Some(k as u32);
            Verdict::Deletion
        } else {
            Verdict::Indeterminate
        }
    } else {
        let m = ratio.round();
        if m >= 2.0 && (ratio - m).abs() <= rel_tol * m {
            multiplier = Some(m as u32);
            Verdict::Interpolation
        } else if ratio > 1.0 + rel_tol {
            Verdict::Interpolation
        } else {
            Verdict::Indeterminate
        }
    };

    let alphas: Vec<f64> = clip.frames.iter().map(|f| f.alpha_patch).collect();
    let evidence = Evidence {
        alpha_hat,
        alpha_ref,
        ratio,
        n_frames_used: clip.n_frames_used,
        frame_alpha_min: alphas.iter().cloned().fold(f64::INFINITY, f64::min),
        frame_alpha_median: median(&alphas).unwrap_or(alpha_hat),
        frame_alpha_max: alphas.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(TamperVerdict {
        verdict,
        k_hat,
        multiplier,
        relative_deviation,
        rel_tol,
        evidence,
    })
}

/// Inclusive range of frame indices flagged as inconsistent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

/// Flags runs of frames whose rolling median departs from the clip median by
/// more than `rel_tol` relative. Windows are centered and truncated at the
/// ends of the sequence.
pub fn localize_inconsistency(
    frames: &[FrameEstimate],
    window: usize,
    rel_tol: f64,
) -> Result<Vec<Segment>, ForensicsError> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(ForensicsError::Window(window));
    }
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(ForensicsError::Tolerance(rel_tol));
    }
    if frames.len() < window {
        return Err(ForensicsError::TooFewFrames {
            frames: frames.len(),
            window,
        });
    }
    let alphas: Vec<f64> = frames.iter().map(|f| f.alpha_patch).collect();
    let clip_median = median(&alphas).expect("non-empty");
    let half = window / 2;

    let mut segments: Vec<Segment> = Vec::new();
    let mut open: Option<usize> = None;
    for i in 0..alphas.len() {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(alphas.len());
        let local = median(&alphas[lo..hi]).expect("non-empty window");
        let off = (local - clip_median).abs() > rel_tol * clip_median.abs();
        match (off, open) {
            (true, None) => open = Some(i),
            (false, Some(start)) => {
                segments.push(Segment {
                    start: frames[start].frame_index,
                    end: frames[i - 1].frame_index,
                });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        segments.push(Segment {
            start: frames[start].frame_index,
            end: frames[frames.len() - 1].frame_index,
        });
    }
    Ok(segments)
}
