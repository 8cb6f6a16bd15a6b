//! Brute-force sensitivities by vertex enumeration.
//!
//! `R^K` is split into sign orthants of `Δ`; on each orthant every absolute
//! value is linear, so each sensitivity is the minimum of `|ΨΔ|∞` over a small
//! polyhedron in `(Δ, t)`, attained at a vertex.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stiv::data::PsiMatrix;
use stiv::linalg::Mat;

use super::vertex::Polyhedron;

pub fn random_psi(seed: u64) -> PsiMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=4);
    let l = rng.random_range(2..=4);
    let rows: Vec<Vec<f64>> = (0..l).map(|_| (0..k).map(|_| rng.sample(StandardNormal)).collect()).collect();
    PsiMatrix::from_values(Mat::from_rows(&rows))
}

pub fn near_diagonal(seed: u64, k: usize, noise: f64) -> PsiMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Mat::from_fn(k, k, |i, j| {
        let e: f64 = rng.sample(StandardNormal);
        if i == j { 1.0 + 0.2 * e } else { noise * e }
    });
    PsiMatrix::from_values(m)
}

pub fn orthants(k: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..1u32 << k).map(move |b| (0..k).map(|i| if b >> i & 1 == 1 { -1.0 } else { 1.0 }).collect())
}

pub fn unit(dim: usize, i: usize, v: f64) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[i] = v;
    e
}

/// Orthant constraints and `t ≥ |ΨΔ|∞` in the variables `(Δ, t)`.
pub fn base(psi: &Mat, sigma: &[f64]) -> Polyhedron {
    let k = psi.cols;
    let mut ineq = Vec::new();
    for (i, &s) in sigma.iter().enumerate() {
        ineq.push((unit(k + 1, i, -s), 0.0));
    }
    for l in 0..psi.rows {
        for sign in [1.0, -1.0] {
            let mut g: Vec<f64> = (0..k).map(|j| sign * psi[(l, j)]).collect();
            g.push(-1.0);
            ineq.push((g, 0.0));
        }
    }
    Polyhedron { dim: k + 1, eq: Vec::new(), ineq }
}

/// Min of `|ΨΔ|∞` over the vertices, evaluated from `Δ` so that a nearly
/// singular vertex cannot report a negative `t`.
pub fn min_t(psi: &Mat, p: &Polyhedron) -> f64 {
    p.vertices(1e-11)
        .iter()
        .map(|x| psi.mul_vec(&x[..psi.cols]).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .fold(f64::INFINITY, f64::min)
}

/// `κ*_{k,J}`: min `|ΨΔ|∞` over `Δ_k = 1`, `|Δ_{J^c}|₁ ≤ ratio·|Δ_J|₁`.
pub fn brute_exact(psi: &Mat, k: usize, big_j: &[usize], ratio: f64) -> f64 {
    if big_j.is_empty() {
        return f64::INFINITY;
    }
    let kd = psi.cols;
    orthants(kd)
        .filter(|s| s[k] > 0.0)
        .map(|s| {
            let mut p = base(psi, &s);
            let g: Vec<f64> = (0..=kd).map(|i| if i == kd { 0.0 } else if big_j.contains(&i) { -ratio * s[i] } else { s[i] }).collect();
            p.ineq.push((g, 0.0));
            p.eq.push((unit(kd + 1, k, 1.0), 1.0));
            min_t(psi, &p)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Rows `|Δ|₁ ≤ a|Δ_j|` for every `j`, one polyhedron each.
pub fn ratio_rows(kd: usize, s: &[f64], a: f64) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..kd).map(move |j| (0..=kd).map(|i| if i == kd { 0.0 } else { s[i] - if i == j { a * s[i] } else { 0.0 } }).collect())
}

/// `κ*_k(s)`: min over `j` of min `|ΨΔ|∞` over `Δ_k = 1`, `|Δ|₁ ≤ a|Δ_j|`.
pub fn brute_cert(psi: &Mat, k: usize, a: f64) -> f64 {
    let kd = psi.cols;
    let mut best = f64::INFINITY;
    for s in orthants(kd).filter(|s| s[k] > 0.0) {
        for g in ratio_rows(kd, &s, a) {
            let mut p = base(psi, &s);
            p.ineq.push((g, 0.0));
            p.eq.push((unit(kd + 1, k, 1.0), 1.0));
            best = best.min(min_t(psi, &p));
        }
    }
    best
}

/// `κ_{1,J₀}(s)`: as [`brute_cert`] with `|Δ_{J₀}|₁ = 1`.
pub fn brute_block(psi: &Mat, j0: &[usize], a: f64) -> f64 {
    let kd = psi.cols;
    let mut best = f64::INFINITY;
    for s in orthants(kd) {
        for g in ratio_rows(kd, &s, a) {
            let mut p = base(psi, &s);
            p.ineq.push((g, 0.0));
            let e: Vec<f64> = (0..=kd).map(|i| if j0.contains(&i) { s[i] } else { 0.0 }).collect();
            p.eq.push((e, 1.0));
            best = best.min(min_t(psi, &p));
        }
    }
    best
}

/// `κ_{q,J}` on `C_J` normalized by `|Δ_{J0}|_q = 1`, for `q = 1` or `∞`.
pub fn brute_on_cone(psi: &Mat, j0: &[usize], big_j: &[usize], ratio: f64, q_inf: bool) -> f64 {
    let kd = psi.cols;
    let mut best = f64::INFINITY;
    for s in orthants(kd) {
        let cone: Vec<f64> = (0..=kd).map(|i| if i == kd { 0.0 } else if big_j.contains(&i) { -ratio * s[i] } else { s[i] }).collect();
        if q_inf {
            for &k in j0 {
                let mut p = base(psi, &s);
                p.ineq.push((cone.clone(), 0.0));
                p.eq.push((unit(kd + 1, k, s[k]), 1.0));
                for &i in j0 {
                    p.ineq.push((unit(kd + 1, i, s[i]), 1.0));
                }
                best = best.min(min_t(psi, &p));
            }
        } else {
            let mut p = base(psi, &s);
            p.ineq.push((cone, 0.0));
            let e: Vec<f64> = (0..=kd).map(|i| if j0.contains(&i) { s[i] } else { 0.0 }).collect();
            p.eq.push((e, 1.0));
            best = best.min(min_t(psi, &p));
        }
    }
    best
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn subsets(k: usize) -> Vec<Vec<usize>> {
    (1..1u32 << k).map(|b| (0..k).filter(|&i| b >> i & 1 == 1).collect()).collect()
}
