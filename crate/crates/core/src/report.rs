//! JSON report written by `shutter-angle estimate`.

use serde::{Deserialize, Serialize};

use crate::estimator::{ClipEstimate, FrameEstimate};
use crate::validity::EstimationParams;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "shutter-angle";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub patch_size: usize,
    pub max_angle_deg: f64,
    pub min_magnitude: f64,
}

impl From<&EstimationParams> for ReportParams {
    fn from(p: &EstimationParams) -> Self {
        ReportParams {
            patch_size: p.patch_side(),
            max_angle_deg: p.max_angle_deg(),
            min_magnitude: p.min_magnitude(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub parameters: ReportParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_id: Option<String>,
    pub frames: Vec<FrameEstimate>,
    /// Absent when no frame produced an estimate.
    pub alpha_glob: Option<f64>,
    pub n_frames_used: usize,
    pub n_frames_total: usize,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl RunReport {
    pub fn new(params: &EstimationParams, clip_id: Option<String>, n_frames_total: usize) -> Self {
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            parameters: params.into(),
            clip_id,
            frames: Vec::new(),
            alpha_glob: None,
            n_frames_used: 0,
            n_frames_total,
            warnings: Vec::new(),
            timing: None,
        }
    }

    pub fn record(&mut self, clip: &ClipEstimate) {
        self.frames = clip.frames.clone();
        self.alpha_glob = Some(clip.alpha_glob);
        self.n_frames_used = clip.n_frames_used;
        self.n_frames_total = clip.n_frames_total;
        for d in &clip.skipped {
            self.warnings
                .push(format!("frame {} skipped: {}", d.frame_index, d.reason));
        }
    }

    /// Rebuilds the clip estimate a report was written from.
    pub fn clip_estimate(&self) -> Option<ClipEstimate> {
        Some(ClipEstimate {
            alpha_glob: self.alpha_glob?,
            frames: self.frames.clone(),
            n_frames_used: self.n_frames_used,
            n_frames_total: self.n_frames_total,
            skipped: Vec::new(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// The report without its timing block, for comparing runs.
    pub fn without_timing(&self) -> RunReport {
        RunReport {
            timing: None,
            ..self.clone()
        }
    }
}
