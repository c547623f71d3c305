//! On-disk clips: manifests, clip directories, and clip metadata.
//!
//! A manifest is JSON Lines, one clip per line:
//!
//! ```text
//! {"clip_id": "c0", "subset": "16ms", "alpha_gt": 0.24,
//!  "frames": [{"flow_path": "flow/flow_00000.flo", "blur_path": "blur/blur_00000.flo"}]}
//! ```
//!
//! Relative paths resolve against the manifest's directory. A clip directory
//! written by the synthesizer holds `frames/*.pgm`, `flow/*.flo`,
//! `blur/*.flo`, a one-line `manifest.jsonl`, and `meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::FieldPair;
use crate::field::{self, FieldError, Frame};
use crate::synth::{GroundTruth, SynthConfig};

pub const META_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Manifest {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Pairing(String),
    #[error("bad metadata in {path}: {message}")]
    Meta { path: String, message: String },
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePaths {
    pub flow_path: PathBuf,
    pub blur_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clip_id: String,
    pub subset: String,
    pub alpha_gt: f64,
    pub frames: Vec<FramePaths>,
}

impl ManifestRow {
    /// Loads every field pair, resolving relative paths against `base`.
    pub fn load_pairs(&self, base: &Path) -> Result<Vec<FieldPair>, FieldError> {
        self.frames
            .iter()
            .map(|f| {
                let flow = field::load_vector_field(&base.join(&f.flow_path))?;
                let blur = field::load_vector_field(&base.join(&f.blur_path))?;
                Ok(FieldPair::new(flow, blur))
            })
            .collect()
    }
}

/// A manifest line that could not be parsed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestLineError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    /// Directory that relative paths resolve against.
    pub base: PathBuf,
    /// Parsed rows with their 1-based line numbers.
    pub rows: Vec<(usize, ManifestRow)>,
    pub errors: Vec<ManifestLineError>,
}

impl Manifest {
    pub fn parse(text: &str, base: PathBuf) -> Manifest {
        let mut rows = Vec::new();
        let mut errors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ManifestRow>(line) {
                Ok(row) if !(row.alpha_gt.is_finite() && row.alpha_gt > 0.0) => {
                    errors.push(ManifestLineError {
                        line: line_no,
                        message: format!(
                            "clip {}: alpha_gt must be positive, got {}",
                            row.clip_id, row.alpha_gt
                        ),
                    })
                }
                Ok(row) if row.frames.is_empty() => errors.push(ManifestLineError {
                    line: line_no,
                    message: format!("clip {} lists no frames", row.clip_id),
                }),
                Ok(row) => rows.push((line_no, row)),
                Err(e) => errors.push(ManifestLineError {
                    line: line_no,
                    message: e.to_string(),
                }),
            }
        }
        Manifest { base, rows, errors }
    }

    pub fn load(path: &Path) -> Result<Manifest, DatasetError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest::parse(&text, base))
    }

    pub fn to_jsonl(rows: &[ManifestRow]) -> String {
        rows.iter()
            .map(|r| serde_json::to_string(r).expect("manifest rows serialize") + "\n")
            .collect()
    }
}

/// Pairs flow and blur files from two directories by sorted file name.
/// Files without a partner at the same position are reported as orphans.
pub fn pair_directories(flow_dir: &Path, blur_dir: &Path) -> Result<Vec<FramePaths>, DatasetError> {
    let list = |dir: &Path| -> Result<Vec<PathBuf>, DatasetError> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "flo"))
            .collect();
        files.sort();
        Ok(files)
    };
    let flows = list(flow_dir)?;
    let blurs = list(blur_dir)?;
    if flows.is_empty() && blurs.is_empty() {
        return Err(DatasetError::Pairing("no frame pairs found".into()));
    }
    if flows.len() != blurs.len() {
        let n = flows.len().min(blurs.len());
        let orphans: Vec<String> = flows[n..]
            .iter()
            .chain(&blurs[n..])
            .map(|p| p.display().to_string())
            .collect();
        return Err(DatasetError::Pairing(format!(
            "{} flow files but {} blur files; orphans: {}",
            flows.len(),
            blurs.len(),
            orphans.join(", ")
        )));
    }
    Ok(flows
        .into_iter()
        .zip(blurs)
        .map(|(flow_path, blur_path)| FramePaths {
            flow_path,
            blur_path,
        })
        .collect())
}

/// One tampering operation applied to a clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TamperStep {
    pub mode: TamperMode,
    pub factor: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperMode {
    Delete,
    Interpolate,
}

/// Contents of `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub schema_version: u32,
    pub clip_id: String,
    pub subset: String,
    pub config: SynthConfig,
    pub quantize_blur: bool,
    pub ground_truth: GroundTruth,
    pub alpha: f64,
    pub alpha_apparent: f64,
    pub tamper: Vec<TamperStep>,
    pub n_frames: usize,
    pub n_pairs: usize,
}

/// A clip as stored in a directory.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipDir {
    pub meta: ClipMeta,
    pub frames: Vec<Frame>,
    pub pairs: Vec<FieldPair>,
}

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:05}.pgm")
}

pub fn flow_name(i: usize) -> String {
    format!("flow_{i:05}.flo")
}

pub fn blur_name(i: usize) -> String {
    format!("blur_{i:05}.flo")
}

impl ClipDir {
    pub fn manifest_row(&self) -> ManifestRow {
        ManifestRow {
            clip_id: self.meta.clip_id.clone(),
            subset: self.meta.subset.clone(),
            alpha_gt: self.meta.alpha_apparent,
            frames: (0..self.pairs.len())
                .map(|i| FramePaths {
                    flow_path: Path::new("flow").join(flow_name(i)),
                    blur_path: Path::new("blur").join(blur_name(i)),
                })
                .collect(),
        }
    }

    /// Writes the clip into `dir`, which must be empty or absent.
    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        if dir.exists() && fs::read_dir(dir).map_err(io_err(dir))?.next().is_some() {
            return Err(DatasetError::Pairing(format!(
                "output directory {} is not empty",
                dir.display()
            )));
        }
        for sub in ["frames", "flow", "blur"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        for (i, frame) in self.frames.iter().enumerate() {
            field::save_frame(&dir.join("frames").join(frame_name(i)), frame)?;
        }
        for (i, pair) in self.pairs.iter().enumerate() {
            field::save_vector_field(&dir.join("flow").join(flow_name(i)), &pair.flow)?;
            field::save_vector_field(&dir.join("blur").join(blur_name(i)), &pair.blur)?;
        }
        let manifest = dir.join(MANIFEST_FILE);
        fs::write(&manifest, Manifest::to_jsonl(&[self.manifest_row()]))
            .map_err(io_err(&manifest))?;
        let meta = dir.join(META_FILE);
        let text = serde_json::to_string_pretty(&self.meta).expect("meta serializes") + "\n";
        fs::write(&meta, text).map_err(io_err(&meta))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<ClipDir, DatasetError> {
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: ClipMeta = serde_json::from_str(&text).map_err(|e| DatasetError::Meta {
            path: meta_path.display().to_string(),
            message: e.to_string(),
        })?;
        let pairs = pair_directories(&dir.join("flow"), &dir.join("blur"))?
            .iter()
            .map(|p| {
                Ok(FieldPair::new(
                    field::load_vector_field(&p.flow_path)?,
                    field::load_vector_field(&p.blur_path)?,
                ))
            })
            .collect::<Result<Vec<_>, FieldError>>()?;
        let frames_dir = dir.join("frames");
        let mut frames = Vec::new();
        if frames_dir.is_dir() {
            let mut names: Vec<PathBuf> = fs::read_dir(&frames_dir)
                .map_err(io_err(&frames_dir))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
                .collect();
            names.sort();
            for p in names {
                frames.push(field::load_frame(&p)?);
            }
        }
        if pairs.len() != meta.n_pairs || frames.len() != meta.n_frames {
            return Err(DatasetError::Meta {
                path: meta_path.display().to_string(),
                message: format!(
                    "directory holds {} frames and {} field pairs, metadata says {} and {}",
                    frames.len(),
                    pairs.len(),
                    meta.n_frames,
                    meta.n_pairs
                ),
            });
        }
        Ok(ClipDir {
            meta,
            frames,
            pairs,
        })
    }
}
