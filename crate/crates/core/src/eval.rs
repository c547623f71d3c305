//! Mean absolute error over a manifest of clips with known exposure fraction,
//! for a grid of (patch size, angle threshold) settings.
//!
//! The report has one cell per grid point, patch size outer and angle inner,
//! and one MAE column per subset plus their average.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Manifest, ManifestRow};
use crate::estimator::{estimate_clip, mean_absolute_error, FieldPair};
use crate::report::{TOOL_NAME, TOOL_VERSION};
use crate::validity::{EstimationParams, DEFAULT_MAX_ANGLE_DEG, DEFAULT_PATCH_SIDE};

pub const EVAL_SCHEMA_VERSION: u32 = 1;

type LoadedRow<'a> = (usize, &'a ManifestRow, Result<Vec<FieldPair>, String>);

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("malformed sweep {input:?}: {message}")]
    Parse { input: String, message: String },
}

/// Parses `"D=10,20,30;phi=3,5,7"`. A missing key falls back to its default.
pub fn parse_sweep(input: &str) -> Result<Vec<EstimationParams>, SweepError> {
    let fail = |message: String| SweepError::Parse {
        input: input.to_string(),
        message,
    };
    let mut sides: Option<Vec<usize>> = None;
    let mut angles: Option<Vec<f64>> = None;
    for part in input.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| fail(format!("expected key=values in {part:?}")))?;
        let values: Vec<&str> = values.split(',').map(str::trim).collect();
        if values.iter().any(|v| v.is_empty()) {
            return Err(fail(format!("empty value in {part:?}")));
        }
        match key.trim().to_ascii_lowercase().as_str() {
            "d" if sides.is_none() => {
                sides = Some(
                    values
                        .iter()
                        .map(|v| v.parse().map_err(|_| fail(format!("bad patch size {v:?}"))))
                        .collect::<Result<_, _>>()?,
                )
            }
            "phi" if angles.is_none() => {
                angles = Some(
                    values
                        .iter()
                        .map(|v| v.parse().map_err(|_| fail(format!("bad angle {v:?}"))))
                        .collect::<Result<_, _>>()?,
                )
            }
            "d" | "phi" => return Err(fail(format!("key {key:?} given twice"))),
            other => return Err(fail(format!("unknown key {other:?}, expected D or phi"))),
        }
    }
    let sides = sides.unwrap_or_else(|| vec![DEFAULT_PATCH_SIDE]);
    let angles = angles.unwrap_or_else(|| vec![DEFAULT_MAX_ANGLE_DEG]);
    let mut grid = Vec::with_capacity(sides.len() * angles.len());
    for &d in &sides {
        for &phi in &angles {
            grid.push(EstimationParams::new(d, phi).map_err(|e| fail(e.to_string()))?);
        }
    }
    Ok(grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellEstimate {
    pub patch_size: usize,
    pub max_angle_deg: f64,
    pub alpha_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipResult {
    pub clip_id: String,
    pub subset: String,
    pub alpha_gt: f64,
    pub estimates: Vec<CellEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetMae {
    pub subset: String,
    pub mae: Option<f64>,
    pub n_clips: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub patch_size: usize,
    pub max_angle_deg: f64,
    pub subsets: Vec<SubsetMae>,
    /// Mean of the subset MAEs that exist.
    pub average_mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedRow {
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_id: Option<String>,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub subsets: Vec<String>,
    pub cells: Vec<GridCell>,
    pub clips: Vec<ClipResult>,
    pub failed_rows: Vec<FailedRow>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn all_rows_failed(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("eval report serializes") + "\n"
    }

    /// One line per grid cell: `D,phi,<subset MAE>...,average`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["D".to_string(), "phi".to_string()];
        header.extend(self.subsets.iter().cloned());
        header.push("average".into());
        w.write_record(&header).expect("in-memory csv");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for cell in &self.cells {
            let mut rec = vec![cell.patch_size.to_string(), cell.max_angle_deg.to_string()];
            rec.extend(cell.subsets.iter().map(|s| fmt(s.mae)));
            rec.push(fmt(cell.average_mae));
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

/// Estimates every clip of the manifest for every grid cell. Rows whose
/// files cannot be loaded are recorded as failed and left out of the MAE.
pub fn evaluate_manifest(manifest: &Manifest, grid: &[EstimationParams]) -> EvalReport {
    let mut failed_rows: Vec<FailedRow> = manifest
        .errors
        .iter()
        .map(|e| FailedRow {
            line: e.line,
            clip_id: None,
            error: e.message.clone(),
        })
        .collect();

    let loaded: Vec<LoadedRow> = manifest
        .rows
        .par_iter()
        .map(|(line, row)| {
            (
                *line,
                row,
                row.load_pairs(&manifest.base).map_err(|e| e.to_string()),
            )
        })
        .collect();

    let mut subsets: Vec<String> = Vec::new();
    let mut clips = Vec::new();
    let mut warnings = Vec::new();
    for (line, row, pairs) in loaded {
        let pairs = match pairs {
            Ok(p) => p,
            Err(error) => {
                failed_rows.push(FailedRow {
                    line,
                    clip_id: Some(row.clip_id.clone()),
                    error,
                });
                continue;
            }
        };
        if !subsets.contains(&row.subset) {
            subsets.push(row.subset.clone());
        }
        let estimates: Vec<CellEstimate> = grid
            .iter()
            .map(|params| {
                let (alpha_hat, error) = match estimate_clip(&pairs, params) {
                    Ok(c) => (Some(c.alpha_glob), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                CellEstimate {
                    patch_size: params.patch_side(),
                    max_angle_deg: params.max_angle_deg(),
                    alpha_hat,
                    error,
                }
            })
            .collect();
        for e in estimates.iter().filter(|e| e.error.is_some()) {
            warnings.push(format!(
                "clip {} skipped at D={} phi={}: {}",
                row.clip_id,
                e.patch_size,
                e.max_angle_deg,
                e.error.as_deref().unwrap_or_default()
            ));
        }
        clips.push(ClipResult {
            clip_id: row.clip_id.clone(),
            subset: row.subset.clone(),
            alpha_gt: row.alpha_gt,
            estimates,
        });
    }
    failed_rows.sort_by_key(|r| r.line);

    let cells = grid
        .iter()
        .enumerate()
        .map(|(ci, params)| {
            let mut by_subset: HashMap<&str, (Vec<f64>, Vec<f64>)> = HashMap::new();
            for clip in &clips {
                if let Some(a) = clip.estimates[ci].alpha_hat {
                    let entry = by_subset.entry(&clip.subset).or_default();
                    entry.0.push(a);
                    entry.1.push(clip.alpha_gt);
                }
            }
            let subset_maes: Vec<SubsetMae> = subsets
                .iter()
                .map(|s| {
                    let (est, gt) = by_subset.remove(s.as_str()).unwrap_or_default();
                    // clips in a subset may carry different ground truths
                    let errors: Vec<f64> = est.iter().zip(&gt).map(|(a, g)| a - g).collect();
                    SubsetMae {
                        subset: s.clone(),
                        mae: mean_absolute_error(&errors, 0.0).ok(),
                        n_clips: est.len(),
                    }
                })
                .collect();
            let present: Vec<f64> = subset_maes.iter().filter_map(|s| s.mae).collect();
            GridCell {
                patch_size: params.patch_side(),
                max_angle_deg: params.max_angle_deg(),
                average_mae: (!present.is_empty())
                    .then(|| present.iter().sum::<f64>() / present.len() as f64),
                subsets: subset_maes,
            }
        })
        .collect();

    EvalReport {
        schema_version: EVAL_SCHEMA_VERSION,
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        subsets,
        cells,
        clips,
        failed_rows,
        warnings,
    }
}
