//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS or FAIL line, then exits non-zero if
//! any failed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use shutter_angle::estimator::aggregate;
use shutter_angle::field::{read_vector_field, write_vector_field, FieldError};
use shutter_angle::forensics::DEFAULT_REL_TOL;
use shutter_angle::patch::best_patch;
use shutter_angle::synth::{perturb_field, quantize_blur};
use shutter_angle::*;

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn params() -> EstimationParams {
    EstimationParams::new(30, 5.0).unwrap()
}

fn exact_pairs(config: &SynthConfig) -> Vec<FieldPair> {
    let pair = config
        .ground_truth()
        .pair(config.width, config.height)
        .unwrap();
    vec![pair; config.n_frames - 1]
}

fn closed_loop() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for alpha in [0.125, 0.24, 0.36, 0.5] {
        for v in [(10.0, 0.0), (6.0, 8.0)] {
            let config = SynthConfig::new(320, 240, v, alpha, 30, 1);
            let clip = render_clip(&config).map_err(|e| e.to_string())?;
            ensure!(
                clip.frames.len() == 30,
                "rendered {} frames",
                clip.frames.len()
            );
            let est = estimate_clip(&clip.pairs, &params()).map_err(|e| e.to_string())?;
            let err = (est.alpha_glob - alpha).abs();
            ensure!(err <= 1e-9, "alpha {alpha} v {v:?}: error {err:e}");
            worst = worst.max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!(
        "8 clips rendered and estimated in {secs:.2} s, worst error {worst:.1e}"
    ))
}

fn quantization() -> Outcome {
    let mut report = Vec::new();
    for v in [(20.0, 0.0), (12.0, 16.0), (0.0, -20.0)] {
        let config = SynthConfig::new(320, 240, v, 0.24, 30, 2);
        let pairs: Vec<FieldPair> = exact_pairs(&config)
            .into_iter()
            .map(|p| FieldPair::new(p.flow, quantize_blur(&p.blur)))
            .collect();
        let est = estimate_clip(&pairs, &params()).map_err(|e| e.to_string())?;
        let err = (est.alpha_glob - 0.24).abs();
        ensure!(err <= 0.04, "v {v:?}: alpha {} error {err}", est.alpha_glob);
        report.push(format!("{:.4}", est.alpha_glob));
    }
    Ok(format!(
        "quantized estimates {} against 0.24",
        report.join(", ")
    ))
}

fn noise_robustness() -> Outcome {
    let mut report = Vec::new();
    for (vi, v) in [(20.0, 0.0), (12.0, -16.0)].into_iter().enumerate() {
        let config = SynthConfig::new(320, 240, v, 0.25, 30, 3);
        let pairs: Vec<FieldPair> = exact_pairs(&config)
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let s = 1000 * vi as u64 + 2 * i as u64;
                FieldPair::new(
                    perturb_field(&p.flow, 0.5, s).unwrap(),
                    perturb_field(&p.blur, 0.5, s + 1).unwrap(),
                )
            })
            .collect();
        let est = estimate_clip(&pairs, &params()).map_err(|e| e.to_string())?;
        let err = (est.alpha_glob - 0.25).abs();
        ensure!(err <= 0.03, "v {v:?}: alpha {} error {err}", est.alpha_glob);
        report.push(format!("{:.5}", est.alpha_glob));
    }
    Ok(format!(
        "noisy estimates {} against 0.25",
        report.join(", ")
    ))
}

fn low_alpha_degradation() -> Outcome {
    let mut ratios = Vec::new();
    for trial in 0..20u64 {
        let v = (15.0 + 0.5 * trial as f64, 0.0);
        let err_at = |alpha: f64| -> Result<f64, String> {
            let config = SynthConfig::new(96, 96, v, alpha, 10, trial);
            let pairs: Vec<FieldPair> = exact_pairs(&config)
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    let s = 7919 * trial + 2 * i as u64;
                    let flow = perturb_field(&p.flow, 0.5, s).unwrap();
                    let blur = quantize_blur(&perturb_field(&p.blur, 0.5, s + 1).unwrap());
                    FieldPair::new(flow, blur)
                })
                .collect();
            let est = estimate_clip(&pairs, &params())
                .map_err(|e| format!("trial {trial} alpha {alpha}: {e}"))?;
            Ok((est.alpha_glob - alpha).abs())
        };
        let (low, mid) = (err_at(0.03)?, err_at(0.24)?);
        ensure!(
            low > mid,
            "trial {trial}: error {low:.4} at 0.03 vs {mid:.4} at 0.24"
        );
        ratios.push(low / mid.max(1e-12));
    }
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(format!(
        "20/20 trials worse at 0.03, smallest error ratio {min_ratio:.2}"
    ))
}

fn filter_oracle() -> Outcome {
    let mut r = rng(5);
    let mut valid_total = 0;
    for trial in 0..1000 {
        let (flow, blur) = random_pair(&mut r, 16, 16);
        let phi = [1.0, 3.0, 5.0, 7.0, 15.0, 45.0][trial % 6];
        let p = EstimationParams::new(4, phi).unwrap();
        let got = compute_validity(&flow, &blur, &p).map_err(|e| e.to_string())?;
        let want = mask_by_angles(&flow, &blur, phi);
        let mismatches = got.bits().iter().zip(&want).filter(|(a, b)| a != b).count();
        ensure!(
            mismatches == 0,
            "trial {trial}: {mismatches} mismatches at phi {phi}"
        );
        valid_total += got.count();
    }
    Ok(format!(
        "1000 pairs, 256000 pixels, {valid_total} valid, 0 mismatches"
    ))
}

fn patch_oracle() -> Outcome {
    let mut r = rng(6);
    let mut empty = 0;
    for trial in 0..500 {
        let d = [2, 3, 5, 10][trial % 4];
        let (w, h) = (r.random_range(d..=64), r.random_range(d..=64));
        let bits = random_mask(&mut r, w, h);
        let mask = ValidityMask::from_bits(w, h, bits.clone());
        let got = best_patch(&mask, d)
            .map_err(|e| e.to_string())?
            .map(|p| (p.x0, p.y0, p.valid_count));
        let want = exhaustive_patch(&bits, w, h, d);
        ensure!(
            got == want,
            "trial {trial} ({w}x{h}, D={d}): {got:?} vs {want:?}"
        );
        empty += want.is_none() as usize;
    }
    Ok(format!(
        "500 masks, {empty} without a valid window, 0 mismatches"
    ))
}

fn render_small(alpha: f64, frames: usize) -> OracleClip {
    let mut config = SynthConfig::new(96, 72, (10.0, 0.0), alpha, frames, 8);
    config.supersamples = 16;
    render_clip(&config).unwrap()
}

fn deletion_forensics() -> Outcome {
    let tampered = render_small(0.36, 31)
        .subsample(3)
        .map_err(|e| e.to_string())?;
    ensure!(
        tampered.frames.len() == 11,
        "{} frames kept",
        tampered.frames.len()
    );
    let est = estimate_clip(&tampered.pairs, &params()).map_err(|e| e.to_string())?;
    let rel = (est.alpha_glob - 0.12).abs() / 0.12;
    ensure!(
        rel <= 0.05,
        "alpha' {} is {:.1}% off 0.12",
        est.alpha_glob,
        100.0 * rel
    );
    let v = detect_tamper(&est, 0.36, DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
    ensure!(
        v.verdict == Verdict::Deletion && v.k_hat == Some(3),
        "verdict {:?} k_hat {:?}",
        v.verdict,
        v.k_hat
    );
    Ok(format!(
        "0.36 -> {:.4}, deletion with k_hat 3",
        est.alpha_glob
    ))
}

fn interpolation_forensics() -> Outcome {
    let tampered = render_small(0.24, 16)
        .interpolate(2)
        .map_err(|e| e.to_string())?;
    ensure!(
        tampered.frames.len() == 31,
        "{} frames",
        tampered.frames.len()
    );
    let est = estimate_clip(&tampered.pairs, &params()).map_err(|e| e.to_string())?;
    let rel = (est.alpha_glob - 0.48).abs() / 0.48;
    ensure!(
        rel <= 0.05,
        "alpha' {} is {:.1}% off 0.48",
        est.alpha_glob,
        100.0 * rel
    );
    ensure!(est.alpha_glob > 0.24, "estimate did not increase");
    let v = detect_tamper(&est, 0.24, DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
    ensure!(
        v.verdict == Verdict::Interpolation,
        "verdict {:?}",
        v.verdict
    );
    Ok(format!(
        "0.24 -> {:.4}, interpolation x{:?}",
        est.alpha_glob,
        v.multiplier.unwrap_or(0)
    ))
}

fn random_flo_bytes(r: &mut impl Rng) -> Vec<u8> {
    let (w, h) = (r.random_range(1..=40u32), r.random_range(1..=40u32));
    let mut bytes = b"PIEH".to_vec();
    bytes.extend(w.to_le_bytes());
    bytes.extend(h.to_le_bytes());
    for _ in 0..2 * w * h {
        let v: f32 = match r.random_range(0..4) {
            0 => 0.0,
            1 => r.random_range(-1e3f32..1e3),
            2 => {
                f32::from_bits(r.random::<u32>() & 0x7f7f_ffff)
                    * if r.random_bool(0.5) { -1.0 } else { 1.0 }
            }
            _ => r.random_range(-4i32..=4) as f32 * 0.25,
        };
        bytes.extend(v.to_le_bytes());
    }
    bytes
}

fn format_round_trip() -> Outcome {
    let mut r = rng(9);
    for trial in 0..1000 {
        let bytes = random_flo_bytes(&mut r);
        let field = read_vector_field(&bytes).map_err(|e| format!("trial {trial}: {e}"))?;
        let again = write_vector_field(&field).map_err(|e| format!("trial {trial}: {e}"))?;
        ensure!(
            again == bytes,
            "trial {trial}: bytes differ after write(read(.))"
        );
    }
    let good = random_flo_bytes(&mut r);
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    ensure!(
        matches!(read_vector_field(&bad_magic), Err(FieldError::Format(_))),
        "bad magic not a format error"
    );
    ensure!(
        matches!(
            read_vector_field(&good[..good.len() - 3]),
            Err(FieldError::Truncated { .. })
        ),
        "short payload not a truncation error"
    );
    let mut nan = good.clone();
    nan[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
    ensure!(
        matches!(
            read_vector_field(&nan),
            Err(FieldError::NonFinite { x: 0, y: 0 })
        ),
        "NaN payload not rejected at (0, 0)"
    );
    Ok("1000 files byte-identical; bad magic, truncation, NaN rejected".into())
}

fn run_estimate(dir: &Path, threads: usize) -> Result<serde_json::Value, String> {
    let out = dir.join(format!("report_{threads}.json"));
    let status = Command::new(env!("CARGO_BIN_EXE_shutter-angle"))
        .arg("--threads")
        .arg(threads.to_string())
        .arg("estimate")
        .arg("--flow-dir")
        .arg(dir.join("flow"))
        .arg("--blur-dir")
        .arg(dir.join("blur"))
        .arg("--out")
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        status.status.success(),
        "exit {:?}: {}",
        status.status.code(),
        String::from_utf8_lossy(&status.stderr)
    );
    let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    value.as_object_mut().unwrap().remove("timing");
    Ok(value)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::create_dir_all(dir.path().join("flow")).unwrap();
    std::fs::create_dir_all(dir.path().join("blur")).unwrap();
    let config = SynthConfig::new(80, 60, (9.0, 12.0), 0.3, 101, 10);
    for (i, p) in exact_pairs(&config).into_iter().enumerate() {
        let flow = perturb_field(&p.flow, 0.5, 2 * i as u64).unwrap();
        let blur = perturb_field(&p.blur, 0.5, 2 * i as u64 + 1).unwrap();
        field::save_vector_field(&dir.path().join(format!("flow/{i:05}.flo")), &flow)
            .map_err(|e| e.to_string())?;
        field::save_vector_field(&dir.path().join(format!("blur/{i:05}.flo")), &blur)
            .map_err(|e| e.to_string())?;
    }
    let one = run_estimate(dir.path(), 1)?;
    let eight = run_estimate(dir.path(), 8)?;
    ensure!(one == eight, "reports differ between 1 and 8 threads");
    let frames = one["frames"].as_array().map(Vec::len).unwrap_or(0);
    ensure!(frames == 100, "{frames} frame records");
    Ok(format!(
        "100-frame reports identical, alpha_glob {}",
        one["alpha_glob"]
    ))
}

fn frame_estimates(alphas: &[f64]) -> Vec<Option<FrameEstimate>> {
    alphas
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            Some(FrameEstimate {
                frame_index: i,
                alpha_patch: a,
                patch: PatchLocation {
                    x0: 0,
                    y0: 0,
                    valid_count: 1,
                },
                n_valid: 1,
            })
        })
        .collect()
}

/// With the top half minus one values inflated, each of the two middle
/// order statistics can only rise, and cannot pass the same-rank order
/// statistic of the untouched values.
fn median_robustness() -> Outcome {
    let mut r = rng(11);
    let mut worst_slack = f64::INFINITY;
    for trial in 0..500 {
        let clean: Vec<f64> = (0..30).map(|_| r.random_range(0.1..0.4)).collect();
        let mut idx: Vec<usize> = (0..30).collect();
        for i in (1..30).rev() {
            idx.swap(i, r.random_range(0..=i));
        }
        let mut dirty = clean.clone();
        for &i in &idx[..14] {
            dirty[i] *= 10.0;
        }
        let before = aggregate(frame_estimates(&clean))
            .map_err(|e| e.to_string())?
            .alpha_glob;
        let after = aggregate(frame_estimates(&dirty))
            .map_err(|e| e.to_string())?
            .alpha_glob;
        let untouched = sorted(&idx[14..].iter().map(|&i| clean[i]).collect::<Vec<_>>());
        let bound = 0.5 * (untouched[14] + untouched[15]) - before;
        let change = after - before;
        ensure!(
            change >= 0.0 && change <= bound,
            "trial {trial}: change {change} vs bound {bound}"
        );
        worst_slack = worst_slack.min(bound - change);
        ensure!(
            after < 0.4,
            "trial {trial}: median {after} left the clean range"
        );
    }
    Ok(format!(
        "500 trials within the order-statistic bound, min slack {worst_slack:.2e}"
    ))
}

fn main() {
    let criteria: &[Criterion] = &[
        ("closed-loop exactness", closed_loop),
        ("quantization realism", quantization),
        ("noise robustness", noise_robustness),
        ("low-alpha degradation", low_alpha_degradation),
        ("filter oracle", filter_oracle),
        ("patch oracle", patch_oracle),
        ("deletion forensics", deletion_forensics),
        ("interpolation forensics", interpolation_forensics),
        ("format round-trip", format_round_trip),
        ("determinism across thread counts", determinism),
        ("median robustness", median_robustness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
