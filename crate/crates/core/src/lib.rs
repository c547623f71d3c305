//! Exposure fraction (shutter angle) estimation from dense optical flow and
//! linear blur kernel fields.
//!
//! The estimate for a frame comes from the square patch with the most
//! positions where flow and blur agree in direction and magnitude ordering;
//! a clip estimate is the median over frames. Synthetic clips with exact
//! ground truth ([`synth`]) close the loop, and [`forensics`] turns
//! estimates into frame deletion and interpolation verdicts.

pub mod cli;
pub mod dataset;
pub mod estimator;
pub mod eval;
pub mod field;
pub mod forensics;
pub mod patch;
pub mod report;
pub mod synth;
pub mod validity;

pub use estimator::{
    estimate_clip, estimate_frame, mean_absolute_error, median, ClipEstimate, FieldPair,
    FrameEstimate,
};
pub use field::{Frame, Vec2, Vec2Field};
pub use forensics::{detect_tamper, localize_inconsistency, TamperVerdict, Verdict};
pub use patch::{best_patch, PatchLocation, SummedAreaTable};
pub use synth::{render_clip, OracleClip, SynthConfig};
pub use validity::{compute_validity, pixel_valid, EstimationParams, ValidityMask};
