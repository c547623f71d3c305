//! Per-pixel filtering of (flow, blur) vector pairs.
//!
//! A position is kept only when the blur kernel is collinear with the flow
//! (up to the angle threshold, sign ignored), the blur is not longer than the
//! flow, and both vectors are longer than the magnitude floor.

use rayon::prelude::*;
use thiserror::Error;

use crate::field::{Vec2, Vec2Field};

pub const DEFAULT_PATCH_SIDE: usize = 30;
pub const DEFAULT_MAX_ANGLE_DEG: f64 = 5.0;
pub const DEFAULT_MIN_MAGNITUDE: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("patch side must be at least 1, got {0}")]
    PatchSide(usize),
    #[error("max angle must lie in (0, 90) degrees, got {0}")]
    MaxAngle(f64),
    #[error("min magnitude must be finite and non-negative, got {0}")]
    MinMagnitude(f64),
}

#[derive(Debug, Error, PartialEq)]
#[error("shape mismatch: flow is {flow:?}, blur is {blur:?}")]
pub struct ShapeError {
    pub flow: (usize, usize),
    pub blur: (usize, usize),
}

/// Patch side, angle threshold, and magnitude floor for one estimation run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimationParams {
    patch_side: usize,
    max_angle_deg: f64,
    min_magnitude: f64,
    cos_max_angle: f64,
}

impl Default for EstimationParams {
    fn default() -> Self {
        Self::new(DEFAULT_PATCH_SIDE, DEFAULT_MAX_ANGLE_DEG).unwrap()
    }
}

impl EstimationParams {
    pub fn new(patch_side: usize, max_angle_deg: f64) -> Result<Self, ParamError> {
        Self::with_min_magnitude(patch_side, max_angle_deg, DEFAULT_MIN_MAGNITUDE)
    }

    pub fn with_min_magnitude(
        patch_side: usize,
        max_angle_deg: f64,
        min_magnitude: f64,
    ) -> Result<Self, ParamError> {
        if patch_side == 0 {
            return Err(ParamError::PatchSide(patch_side));
        }
        if !(max_angle_deg > 0.0 && max_angle_deg < 90.0) {
            return Err(ParamError::MaxAngle(max_angle_deg));
        }
        if !(min_magnitude.is_finite() && min_magnitude >= 0.0) {
            return Err(ParamError::MinMagnitude(min_magnitude));
        }
        Ok(EstimationParams {
            patch_side,
            max_angle_deg,
            min_magnitude,
            cos_max_angle: max_angle_deg.to_radians().cos(),
        })
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn max_angle_deg(&self) -> f64 {
        self.max_angle_deg
    }

    pub fn min_magnitude(&self) -> f64 {
        self.min_magnitude
    }

    pub fn cos_max_angle(&self) -> f64 {
        self.cos_max_angle
    }
}

/// One boolean per pixel, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl ValidityMask {
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(
            bits.len(),
            width * height,
            "mask length must be width * height"
        );
        ValidityMask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub fn pixel_valid(flow: Vec2, blur: Vec2, params: &EstimationParams) -> bool {
    let flow_norm = flow.norm();
    let blur_norm = blur.norm();
    // magnitude floor first so the cosine never sees a zero norm
    if !(flow_norm > params.min_magnitude && blur_norm > params.min_magnitude) {
        return false;
    }
    if blur_norm > flow_norm {
        return false;
    }
    flow.dot(blur).abs() / (flow_norm * blur_norm) >= params.cos_max_angle
}

pub fn compute_validity(
    flow: &Vec2Field,
    blur: &Vec2Field,
    params: &EstimationParams,
) -> Result<ValidityMask, ShapeError> {
    check_shapes(flow, blur)?;
    let (width, height) = flow.dims();
    let mut bits = vec![false; width * height];
    bits.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for ((bit, &f), &k) in row.iter_mut().zip(flow.row(y)).zip(blur.row(y)) {
            *bit = pixel_valid(f, k, params);
        }
    });
    Ok(ValidityMask::from_bits(width, height, bits))
}

pub(crate) fn check_shapes(flow: &Vec2Field, blur: &Vec2Field) -> Result<(), ShapeError> {
    if flow.dims() != blur.dims() {
        return Err(ShapeError {
            flow: flow.dims(),
            blur: blur.dims(),
        });
    }
    Ok(())
}
