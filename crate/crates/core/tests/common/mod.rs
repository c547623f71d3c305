//! Reference implementations written independently of the library, used as
//! oracles by the integration tests. They favour obviousness over speed.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use shutter_angle::{ValidityMask, Vec2, Vec2Field};

pub fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Validity through polar angles instead of a cosine: the undirected angle
/// between the two lines must not exceed `max_angle_deg`.
pub fn valid_by_angles(f: (f64, f64), k: (f64, f64), max_angle_deg: f64, floor: f64) -> bool {
    let nf = (f.0 * f.0 + f.1 * f.1).sqrt();
    let nk = (k.0 * k.0 + k.1 * k.1).sqrt();
    if nf <= floor || nk <= floor || nk > nf {
        return false;
    }
    let mut d = (f.1.atan2(f.0) - k.1.atan2(k.0)).abs() % std::f64::consts::PI;
    if d > std::f64::consts::FRAC_PI_2 {
        d = std::f64::consts::PI - d;
    }
    d.to_degrees() <= max_angle_deg
}

pub fn mask_by_angles(flow: &Vec2Field, blur: &Vec2Field, max_angle_deg: f64) -> Vec<bool> {
    let (w, h) = flow.dims();
    let mut bits = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let f = flow.get(x, y);
            let k = blur.get(x, y);
            bits.push(valid_by_angles((f.x, f.y), (k.x, k.y), max_angle_deg, 1.0));
        }
    }
    bits
}

/// Every window counted directly; the first strictly larger count wins.
pub fn exhaustive_patch(
    bits: &[bool],
    w: usize,
    h: usize,
    d: usize,
) -> Option<(usize, usize, usize)> {
    let mut best: Option<(usize, usize, usize)> = None;
    for y0 in 0..=h - d {
        for x0 in 0..=w - d {
            let mut c = 0;
            for y in y0..y0 + d {
                for x in x0..x0 + d {
                    c += bits[y * w + x] as usize;
                }
            }
            if c > 0 && best.is_none_or(|b| c > b.2) {
                best = Some((x0, y0, c));
            }
        }
    }
    best
}

/// Full per-frame pipeline from scratch: angle predicate, exhaustive window
/// search, sign-aligned means. Returns `(alpha, x0, y0, n_valid)`.
pub fn brute_force_frame(
    flow: &Vec2Field,
    blur: &Vec2Field,
    d: usize,
    max_angle_deg: f64,
) -> Option<(f64, usize, usize, usize)> {
    let (w, h) = flow.dims();
    let bits = mask_by_angles(flow, blur, max_angle_deg);
    let (x0, y0, n) = exhaustive_patch(&bits, w, h, d)?;
    let (mut fx, mut fy, mut kx, mut ky) = (0.0, 0.0, 0.0, 0.0);
    for y in y0..y0 + d {
        for x in x0..x0 + d {
            if !bits[y * w + x] {
                continue;
            }
            let f = flow.get(x, y);
            let k = blur.get(x, y);
            let s = if f.x * k.x + f.y * k.y < 0.0 {
                -1.0
            } else {
                1.0
            };
            fx += f.x;
            fy += f.y;
            kx += s * k.x;
            ky += s * k.y;
        }
    }
    let nf = (fx * fx + fy * fy).sqrt();
    if nf == 0.0 {
        return None;
    }
    Some(((kx * kx + ky * ky).sqrt() / nf, x0, y0, n))
}

/// Mean of per-pixel norm ratios over the same patch the library picks.
pub fn per_pixel_ratio(
    flow: &Vec2Field,
    blur: &Vec2Field,
    mask: &ValidityMask,
    x0: usize,
    y0: usize,
    d: usize,
) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in y0..y0 + d {
        for x in x0..x0 + d {
            if mask.get(x, y) {
                sum += blur.get(x, y).norm() / flow.get(x, y).norm();
                n += 1;
            }
        }
    }
    sum / n as f64
}

/// Random field pair mixing near-collinear, anti-parallel, boundary and
/// unrelated vectors so every branch of the filter is exercised.
pub fn random_pair(rng: &mut impl Rng, w: usize, h: usize) -> (Vec2Field, Vec2Field) {
    let mut flow = Vec::with_capacity(w * h);
    let mut blur = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let f = Vec2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
        let k = match rng.random_range(0..6) {
            // scaled copy, possibly reversed, possibly longer than the flow
            0 => f * rng.random_range(-1.3..1.3),
            // rotated by a few degrees either side of common thresholds
            1 => {
                f.rotated(rng.random_range(-12f64..12.0).to_radians()) * rng.random_range(0.1..1.0)
            }
            // exact ties on the magnitude checks
            2 => f,
            3 => {
                let unit = [(1.0, 0.0), (0.0, -1.0), (0.6, 0.8)][rng.random_range(0..3)];
                Vec2::new(unit.0, unit.1)
            }
            4 => -f,
            _ => Vec2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)),
        };
        flow.push(f);
        blur.push(k);
    }
    (
        Vec2Field::new(w, h, flow).unwrap(),
        Vec2Field::new(w, h, blur).unwrap(),
    )
}

/// Random mask: sparse, dense, blocky or all-set, so ties are common.
pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize) -> Vec<bool> {
    match rng.random_range(0..4) {
        0 => (0..w * h).map(|_| rng.random_bool(0.05)).collect(),
        1 => (0..w * h).map(|_| rng.random_bool(0.6)).collect(),
        2 => {
            let cell = rng.random_range(1..6);
            let p: f64 = rng.random_range(0.2..0.8);
            let cw = w.div_ceil(cell);
            let blocks: Vec<bool> = (0..cw * h.div_ceil(cell))
                .map(|_| rng.random_bool(p))
                .collect();
            (0..w * h)
                .map(|i| blocks[(i / w / cell) * cw + (i % w) / cell])
                .collect()
        }
        _ => vec![true; w * h],
    }
}

/// Sorted copy.
pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
