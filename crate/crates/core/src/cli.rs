//! Command-line interface.
//!
//! Exit codes: 0 success (or a consistent verdict), 1 usage, I/O or format
//! error, 2 estimation failed, 3 deletion, 4 interpolation, 5 indeterminate.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{
    pair_directories, ClipDir, ClipMeta, Manifest, TamperMode, TamperStep, META_SCHEMA_VERSION,
};
use crate::estimator::{estimate_clip, EstimateError, FieldPair};
use crate::eval::{evaluate_manifest, parse_sweep};
use crate::field::load_vector_field;
use crate::forensics::{
    detect_tamper, localize_inconsistency, Segment, TamperVerdict, DEFAULT_REL_TOL,
};
use crate::report::{RunReport, Timing};
use crate::synth::{quantize_blur, render_clip, SynthConfig, DEFAULT_SUPERSAMPLES};
use crate::validity::{
    EstimationParams, DEFAULT_MAX_ANGLE_DEG, DEFAULT_MIN_MAGNITUDE, DEFAULT_PATCH_SIDE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ESTIMATION_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "shutter-angle",
    version,
    about = "Estimate video exposure fraction from optical flow and blur fields"
)]
pub struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the exposure fraction of one clip.
    Estimate(EstimateArgs),
    /// Render a synthetic clip with exact ground-truth fields.
    Synth(SynthArgs),
    /// Simulate frame deletion or interpolation on a synthetic clip directory.
    Tamper(TamperArgs),
    /// Classify an estimate report against a reference exposure fraction.
    Detect(DetectArgs),
    /// Mean absolute error of a manifest over a parameter grid.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    #[arg(long = "patch-size", default_value_t = DEFAULT_PATCH_SIDE)]
    pub patch_size: usize,
    /// Maximum angle between flow and blur, degrees.
    #[arg(long = "max-angle", default_value_t = DEFAULT_MAX_ANGLE_DEG)]
    pub max_angle: f64,
    #[arg(long = "min-magnitude", default_value_t = DEFAULT_MIN_MAGNITUDE)]
    pub min_magnitude: f64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, conflicts_with_all = ["flow_dir", "blur_dir"], required_unless_present = "flow_dir")]
    pub manifest: Option<PathBuf>,
    /// Clip to pick from a manifest holding several.
    #[arg(long, requires = "manifest")]
    pub clip: Option<String>,
    #[arg(long = "flow-dir", requires = "blur_dir")]
    pub flow_dir: Option<PathBuf>,
    #[arg(long = "blur-dir", requires = "flow_dir")]
    pub blur_dir: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub alpha: f64,
    /// Velocity in px/frame as `VX,VY`.
    #[arg(long, allow_hyphen_values = true)]
    pub velocity: String,
    #[arg(long)]
    pub frames: usize,
    /// Frame size as `WxH`.
    #[arg(long)]
    pub size: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Round blur kernels to integer components.
    #[arg(long = "quantize-blur")]
    pub quantize_blur: bool,
    /// Gaussian intensity noise added to frames.
    #[arg(long = "noise-sigma", default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = DEFAULT_SUPERSAMPLES)]
    pub supersamples: u32,
    #[arg(long = "clip-id")]
    pub clip_id: Option<String>,
    #[arg(long, default_value = "synthetic")]
    pub subset: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Delete,
    Interpolate,
}

#[derive(Debug, Args)]
pub struct TamperArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub factor: usize,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long = "alpha-ref")]
    pub alpha_ref: f64,
    #[arg(long = "rel-tol", default_value_t = DEFAULT_REL_TOL)]
    pub rel_tol: f64,
    /// Rolling-median window for localizing inconsistent frames.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "D=30;phi=5")]
    pub sweep: String,
    /// JSON report path; a CSV mirror is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn fail(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_ERROR,
        message: message.to_string(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let pool = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return EXIT_ERROR;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Tamper(a) => cmd_tamper(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Eval(a) => cmd_eval(a),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn params_from(a: &ParamArgs) -> Result<EstimationParams, Failure> {
    EstimationParams::with_min_magnitude(a.patch_size, a.max_angle, a.min_magnitude)
        .map_err(|e| fail(format!("parameter error: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| fail(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn load_pairs(a: &EstimateArgs) -> Result<(Option<String>, Vec<FieldPair>), Failure> {
    if let Some(path) = &a.manifest {
        let manifest = Manifest::load(path).map_err(fail)?;
        if let Some(e) = manifest.errors.first() {
            return Err(fail(format!(
                "{}:{}: {}",
                path.display(),
                e.line,
                e.message
            )));
        }
        let row = match &a.clip {
            Some(id) => manifest
                .rows
                .iter()
                .find(|(_, r)| &r.clip_id == id)
                .ok_or_else(|| fail(format!("clip {id:?} not in {}", path.display())))?,
            None if manifest.rows.len() == 1 => &manifest.rows[0],
            None if manifest.rows.is_empty() => return Err(fail("no frame pairs found")),
            None => {
                return Err(fail(format!(
                    "{} holds {} clips; pick one with --clip",
                    path.display(),
                    manifest.rows.len()
                )))
            }
        };
        let pairs = row.1.load_pairs(&manifest.base).map_err(fail)?;
        return Ok((Some(row.1.clip_id.clone()), pairs));
    }
    let (flow_dir, blur_dir) = (a.flow_dir.as_ref().unwrap(), a.blur_dir.as_ref().unwrap());
    let paths = pair_directories(flow_dir, blur_dir).map_err(fail)?;
    let pairs = paths
        .iter()
        .map(|p| {
            Ok(FieldPair::new(
                load_vector_field(&p.flow_path)?,
                load_vector_field(&p.blur_path)?,
            ))
        })
        .collect::<Result<Vec<_>, crate::field::FieldError>>()
        .map_err(fail)?;
    Ok((None, pairs))
}

fn cmd_estimate(a: EstimateArgs) -> Result<i32, Failure> {
    let start = Instant::now();
    let params = params_from(&a.params)?;
    let (clip_id, pairs) = load_pairs(&a)?;
    if pairs.is_empty() {
        return Err(fail("no frame pairs found"));
    }
    let mut report = RunReport::new(&params, clip_id, pairs.len());
    let code = match estimate_clip(&pairs, &params) {
        Ok(clip) => {
            report.record(&clip);
            EXIT_OK
        }
        Err(EstimateError::EstimationFailed { diagnostics }) => {
            for d in &diagnostics {
                report
                    .warnings
                    .push(format!("frame {} skipped: {}", d.frame_index, d.reason));
            }
            report
                .warnings
                .push("estimation failed: no frame produced an estimate".into());
            EXIT_ESTIMATION_FAILED
        }
        Err(e @ EstimateError::PatchSize { .. }) => {
            return Err(fail(format!("parameter error: {e}")))
        }
        Err(e) => return Err(fail(e)),
    };
    report.timing = Some(Timing {
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    });
    let json = report.to_json();
    match &a.out {
        Some(path) => write_text(path, &json)?,
        None => print!("{json}"),
    }
    match report.alpha_glob {
        Some(alpha) => eprintln!(
            "alpha_glob = {alpha:.6} from {}/{} frames",
            report.n_frames_used, report.n_frames_total
        ),
        None => eprintln!("estimation failed: no frame had a valid patch"),
    }
    Ok(code)
}

fn parse_pair<T: std::str::FromStr>(s: &str, sep: char, what: &str) -> Result<(T, T), Failure> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| fail(format!("{what} must look like A{sep}B, got {s:?}")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<T>()
            .map_err(|_| fail(format!("bad {what} component {v:?}")))
    };
    Ok((parse(a)?, parse(b)?))
}

fn cmd_synth(a: SynthArgs) -> Result<i32, Failure> {
    let velocity = parse_pair::<f64>(&a.velocity, ',', "velocity")?;
    let (width, height) = parse_pair::<usize>(&a.size.to_ascii_lowercase(), 'x', "size")?;
    let mut config = SynthConfig::new(width, height, velocity, a.alpha, a.frames, a.seed);
    config.supersamples = a.supersamples;
    config.noise_sigma = a.noise_sigma;
    let clip = render_clip(&config).map_err(fail)?;
    let pairs = if a.quantize_blur {
        clip.pairs
            .iter()
            .map(|p| FieldPair::new(p.flow.clone(), quantize_blur(&p.blur)))
            .collect()
    } else {
        clip.pairs
    };
    let meta = ClipMeta {
        schema_version: META_SCHEMA_VERSION,
        clip_id: a.clip_id.unwrap_or_else(|| format!("synth_seed{}", a.seed)),
        subset: a.subset,
        quantize_blur: a.quantize_blur,
        ground_truth: config.ground_truth(),
        alpha: config.alpha,
        alpha_apparent: clip.alpha_apparent,
        tamper: Vec::new(),
        n_frames: clip.frames.len(),
        n_pairs: pairs.len(),
        config,
    };
    let dir = ClipDir {
        meta,
        frames: clip.frames,
        pairs,
    };
    dir.write(&a.out).map_err(fail)?;
    eprintln!(
        "wrote {} frames and {} field pairs to {}",
        dir.meta.n_frames,
        dir.meta.n_pairs,
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_tamper(a: TamperArgs) -> Result<i32, Failure> {
    let src = ClipDir::read(&a.input).map_err(fail)?;
    let (frames, pairs, alpha_apparent, mode) = match a.mode {
        ModeArg::Delete => {
            let (f, p) =
                crate::synth::subsample_clip(&src.frames, &src.pairs, a.factor).map_err(fail)?;
            (
                f,
                p,
                src.meta.alpha_apparent / a.factor as f64,
                TamperMode::Delete,
            )
        }
        ModeArg::Interpolate => {
            let (f, p) =
                crate::synth::interpolate_clip(&src.frames, &src.pairs, a.factor).map_err(fail)?;
            (
                f,
                p,
                src.meta.alpha_apparent * a.factor as f64,
                TamperMode::Interpolate,
            )
        }
    };
    let mut meta = src.meta.clone();
    if a.factor != 1 {
        let tag = match mode {
            TamperMode::Delete => "del",
            TamperMode::Interpolate => "interp",
        };
        meta.clip_id = format!("{}_{tag}{}", meta.clip_id, a.factor);
        meta.tamper.push(TamperStep {
            mode,
            factor: a.factor,
        });
        meta.alpha_apparent = alpha_apparent;
    }
    meta.n_frames = frames.len();
    meta.n_pairs = pairs.len();
    let out = ClipDir {
        meta,
        frames,
        pairs,
    };
    out.write(&a.out).map_err(fail)?;
    eprintln!(
        "apparent alpha {:.6} -> {}",
        out.meta.alpha_apparent,
        a.out.display()
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DetectOutput<'a> {
    #[serde(flatten)]
    verdict: &'a TamperVerdict,
    segments: Option<Vec<Segment>>,
    warnings: Vec<String>,
}

fn cmd_detect(a: DetectArgs) -> Result<i32, Failure> {
    let text =
        fs::read_to_string(&a.report).map_err(|e| fail(format!("{}: {e}", a.report.display())))?;
    let report: RunReport =
        serde_json::from_str(&text).map_err(|e| fail(format!("{}: {e}", a.report.display())))?;
    let clip = report
        .clip_estimate()
        .ok_or_else(|| fail(format!("{} carries no estimate", a.report.display())))?;
    let verdict = detect_tamper(&clip, a.alpha_ref, a.rel_tol).map_err(fail)?;
    let mut warnings = Vec::new();
    let segments = match localize_inconsistency(&clip.frames, a.window, a.rel_tol) {
        Ok(s) => Some(s),
        Err(e) => {
            warnings.push(format!("localization skipped: {e}"));
            None
        }
    };
    let output = DetectOutput {
        verdict: &verdict,
        segments,
        warnings,
    };
    let json = serde_json::to_string_pretty(&output).expect("verdict serializes") + "\n";
    match &a.out {
        Some(path) => write_text(path, &json)?,
        None => print!("{json}"),
    }
    Ok(verdict.verdict.exit_code())
}

fn cmd_eval(a: EvalArgs) -> Result<i32, Failure> {
    let grid = parse_sweep(&a.sweep).map_err(fail)?;
    let manifest = Manifest::load(&a.manifest).map_err(fail)?;
    let report = evaluate_manifest(&manifest, &grid);
    write_text(&a.out, &report.to_json())?;
    write_text(&a.out.with_extension("csv"), &report.to_csv())?;
    for row in &report.failed_rows {
        eprintln!("warning: manifest line {} failed: {}", row.line, row.error);
    }
    if report.all_rows_failed() {
        return Err(fail("every manifest row failed"));
    }
    eprintln!(
        "{} clips, {} cells, {} failed rows",
        report.clips.len(),
        report.cells.len(),
        report.failed_rows.len()
    );
    Ok(EXIT_OK)
}
