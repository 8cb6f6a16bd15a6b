//! STIV-NV: non-validity indicators `θ_l = E[z̄_l u]` of a second list of
//! instruments, given a pilot estimate `β̂` with an ℓ₁ error bound `b̂`.
//!
//! `Q̂_l(θ_l, β̂) = E_n[(z̄_l û − θ_l)²] = v_l + (θ_l − m_l)²` with
//! `m_l = E_n[z̄_l û]` and `v_l` the empirical variance of `z̄_l û`, so each
//! cone constraint is a second-order cone of dimension 3.

use serde::Serialize;

use crate::cone::{certify, solve_cone, Certificate, ConeKind, ConeProgram, ConeSlice, SolverConfig, Status};
use crate::data::{mean_sq, Dataset};
use crate::error::{Error, Result};
use crate::inference::confidence_intervals;
use crate::linalg::Mat;
use crate::sens::SensitivityReport;
use crate::stiv::{StivFit, DEFAULT_ZERO_CLIP};

#[derive(Debug, Clone, Serialize)]
pub struct NvFit {
    /// After zero-clipping.
    pub theta_hat: Vec<f64>,
    pub theta_raw: Vec<f64>,
    pub sigma1_hat: f64,
    pub b_hat: f64,
    pub r1: f64,
    pub c: f64,
    /// `max_l E_n[z̄_l²]^{1/2}`.
    pub zbar_star: f64,
    pub support: Vec<usize>,
    pub objective: f64,
    pub certificate: Certificate,
    /// Where `b̂` came from.
    pub pilot: String,
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    zbar_star: f64,
    scale: f64,
}

fn moments(zbar: &Mat, u: &[f64]) -> Moments {
    let n = u.len() as f64;
    let mut m = Vec::with_capacity(zbar.cols);
    let mut v = Vec::with_capacity(zbar.cols);
    let mut zbar_star: f64 = 0.0;
    for l in 0..zbar.cols {
        let col = zbar.col(l);
        zbar_star = zbar_star.max(mean_sq(&col).sqrt());
        let w: Vec<f64> = col.iter().zip(u).map(|(a, b)| a * b).collect();
        let ml = w.iter().sum::<f64>() / n;
        let vl = w.iter().map(|x| (x - ml) * (x - ml)).sum::<f64>() / n;
        m.push(ml);
        v.push(vl.max(0.0));
    }
    let scale = zbar_star * mean_sq(u).sqrt();
    Moments { m, v, zbar_star, scale }
}

/// `F(θ, β) = max_l Q̂_l(θ_l, β)^{1/2}`.
pub fn nv_f(ds: &Dataset, theta: &[f64], beta: &[f64]) -> Result<f64> {
    let zbar = ds.zbar().ok_or_else(|| Error::InvalidDataset("no second instrument list".into()))?;
    if theta.len() != zbar.cols {
        return Err(Error::DimensionMismatch("theta length".into()));
    }
    let u = ds.residuals(beta);
    let n = u.len() as f64;
    Ok((0..zbar.cols)
        .map(|l| ((0..u.len()).map(|i| (zbar[(i, l)] * u[i] - theta[l]).powi(2)).sum::<f64>() / n).sqrt())
        .fold(0.0, f64::max))
}

/// `b̂` from the pilot's certificate ℓ₁ bound, `2σ̂r/κ₁(s)·(1 − r/κ₁(s))₊⁻¹`.
pub fn pilot_bound(pilot: &StivFit, sr: &SensitivityReport, r: f64) -> Result<f64> {
    let all: Vec<usize> = (0..pilot.beta_hat.len()).collect();
    let rep = confidence_intervals(pilot, sr, r, &[(all, 1.0)])?;
    Ok(rep.groups[0].bound)
}

/// Solves `min |θ|₁ + cσ₁` subject to
/// `|E_n[z̄ û] − θ|∞ ≤ σ₁r₁ + b̂z̄_*` and `F(θ, β̂) ≤ σ₁ + b̂z̄_*`.
pub fn fit_stiv_nv(ds: &Dataset, beta_hat: &[f64], b_hat: f64, r1: f64, c: f64, cfg: &SolverConfig) -> Result<NvFit> {
    let zbar = ds.zbar().ok_or_else(|| Error::InvalidDataset("no second instrument list".into()))?;
    if beta_hat.len() != ds.k() {
        return Err(Error::DimensionMismatch("pilot length".into()));
    }
    if b_hat.is_infinite() {
        return Err(Error::InfinitePilotBound);
    }
    if !(b_hat >= 0.0) || !(r1 > 0.0) || !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidParams(format!("need b_hat >= 0, r1 > 0, c in (0, 1) (b_hat = {b_hat}, r1 = {r1}, c = {c})")));
    }
    let u = ds.residuals(beta_hat);
    let mo = moments(zbar, &u);
    let l1 = zbar.cols;
    let slack = b_hat * mo.zbar_star;

    // layout: θ (free) | w, s⁺, s⁻, σ₁, e⁺, e⁻ (nonneg) | (t, q, v) per l (soc)
    let theta = 0;
    let w = l1;
    let sp = 2 * l1;
    let sm = 3 * l1;
    let sigma = 4 * l1;
    let ep = 4 * l1 + 1;
    let em = 5 * l1 + 1;
    let soc = 6 * l1 + 1;
    let nv = soc + 3 * l1;
    let ne = 7 * l1;
    let mut a = Mat::zeros(ne, nv);
    let mut b = vec![0.0; ne];
    for l in 0..l1 {
        let row = 7 * l;
        // s⁺ = w − θ, s⁻ = w + θ
        a[(row, sp + l)] = 1.0;
        a[(row, w + l)] = -1.0;
        a[(row, theta + l)] = 1.0;
        a[(row + 1, sm + l)] = 1.0;
        a[(row + 1, w + l)] = -1.0;
        a[(row + 1, theta + l)] = -1.0;
        // e± = σ₁r₁ + b̂z̄_* ∓ (m_l − θ_l)
        a[(row + 2, ep + l)] = 1.0;
        a[(row + 2, sigma)] = -r1;
        a[(row + 2, theta + l)] = -1.0;
        b[row + 2] = slack - mo.m[l];
        a[(row + 3, em + l)] = 1.0;
        a[(row + 3, sigma)] = -r1;
        a[(row + 3, theta + l)] = 1.0;
        b[row + 3] = slack + mo.m[l];
        // cone (σ₁ + b̂z̄_*, √v_l, θ_l − m_l)
        let t = soc + 3 * l;
        a[(row + 4, t)] = 1.0;
        a[(row + 4, sigma)] = -1.0;
        b[row + 4] = slack;
        a[(row + 5, t + 1)] = 1.0;
        b[row + 5] = mo.v[l].sqrt();
        a[(row + 6, t + 2)] = 1.0;
        a[(row + 6, theta + l)] = -1.0;
        b[row + 6] = -mo.m[l];
    }
    let mut obj = vec![0.0; nv];
    obj[w..w + l1].fill(1.0);
    obj[sigma] = c;
    let mut cones = vec![ConeSlice { start: 0, len: l1, kind: ConeKind::Free }, ConeSlice { start: l1, len: soc - l1, kind: ConeKind::Nonneg }];
    cones.extend((0..l1).map(|l| ConeSlice { start: soc + 3 * l, len: 3, kind: ConeKind::Soc }));
    let program = ConeProgram { objective: obj, eq_matrix: a, eq_rhs: b, cones };
    let sol = solve_cone(&program, cfg);
    if sol.status != Status::Optimal {
        return Err(Error::SolverFailure(format!("STIV-NV program ended with {:?}", sol.status)));
    }
    let certificate = certify(&sol, &program, cfg);
    let theta_raw = sol.primal[theta..theta + l1].to_vec();
    let sigma1_hat = sol.primal[sigma].max(0.0);
    let thr = DEFAULT_ZERO_CLIP * mo.scale;
    let theta_hat: Vec<f64> = theta_raw.iter().map(|&t| if t.abs() < thr { 0.0 } else { t }).collect();
    let support = (0..l1).filter(|&l| theta_hat[l] != 0.0).collect();
    let objective = theta_raw.iter().map(|t| t.abs()).sum::<f64>() + c * sigma1_hat;
    Ok(NvFit {
        theta_hat,
        theta_raw,
        sigma1_hat,
        b_hat,
        r1,
        c,
        zbar_star: mo.zbar_star,
        support,
        objective,
        certificate,
        pilot: "supplied".into(),
    })
}

impl NvFit {
    /// Largest violation of the two constraints at `(θ_raw, σ̂₁)`.
    pub fn constraint_violation(&self, ds: &Dataset, beta_hat: &[f64]) -> Result<f64> {
        let zbar = ds.zbar().ok_or_else(|| Error::InvalidDataset("no second instrument list".into()))?;
        let u = ds.residuals(beta_hat);
        let mo = moments(zbar, &u);
        let slack = self.b_hat * self.zbar_star;
        let band = mo.m.iter().zip(&self.theta_raw).map(|(m, t)| (m - t).abs()).fold(0.0, f64::max) - (self.sigma1_hat * self.r1 + slack);
        let cone = nv_f(ds, &self.theta_raw, beta_hat)? - (self.sigma1_hat + slack);
        Ok(band.max(cone))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NvBounds {
    pub s1: usize,
    /// `V(σ̂₁, c, b̂, s₁)`, bound on `|θ̂ − θ*|∞`.
    pub linf: f64,
    pub l1: f64,
    pub linf_infinite: bool,
    pub l1_infinite: bool,
}

/// Sup-norm and ℓ₁ bounds on `θ̂ − θ*` for a sparsity level `s₁`
/// (`None` uses `|J(θ̂)|`).
pub fn nv_confidence(fit: &NvFit, s1: Option<usize>) -> NvBounds {
    let s1 = s1.unwrap_or(fit.support.len());
    let (c, r1, s) = (fit.c, fit.r1, s1 as f64);
    let bz = fit.b_hat * fit.zbar_star;
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
    let linf = ratio(2.0 * (fit.sigma1_hat * r1 + (1.0 + r1 / (1.0 - c)) * bz), 1.0 - 2.0 * r1 * s / (1.0 - c));
    let l1 = ratio(2.0 * (2.0 * s * (fit.sigma1_hat * r1 + (1.0 + r1) * bz) + c * bz), 1.0 - c - 2.0 * r1 * s);
    NvBounds { s1, linf, l1, linf_infinite: linf.is_infinite(), l1_infinite: l1.is_infinite() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NvSelection {
    pub invalid: Vec<usize>,
    pub signs: Vec<i8>,
    pub theta_tilde: Vec<f64>,
    pub omega: f64,
    pub infinite_threshold: bool,
}

/// `θ̃_l = θ̂_l·1{|θ̂_l| > ω}`.
pub fn nv_threshold(fit: &NvFit, omega: f64) -> Result<NvSelection> {
    if !(omega >= 0.0) {
        return Err(Error::InvalidParams(format!("threshold {omega} must be nonnegative")));
    }
    let infinite = omega.is_infinite();
    let theta_tilde: Vec<f64> = fit.theta_hat.iter().map(|&t| if !infinite && t.abs() > omega { t } else { 0.0 }).collect();
    let invalid = (0..theta_tilde.len()).filter(|&l| theta_tilde[l] != 0.0).collect();
    let signs = theta_tilde.iter().map(|&t| if t > 0.0 { 1 } else if t < 0.0 { -1 } else { 0 }).collect();
    Ok(NvSelection { invalid, signs, theta_tilde, omega, infinite_threshold: infinite })
}
