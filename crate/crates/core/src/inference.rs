//! Choice of the quantile `r`, confidence sets and thresholded selection.
//!
//! All intervals have the form `|β̂_k − β_k| ≤ 2σ̂r / (d_k κ_k) · τ₊⁻¹` where
//! `d_k = 1/(D_X)_kk` (the rms of `X_k` or `x_{k*}`), `κ_k` is a coordinate
//! sensitivity bound and `τ` the denominator term of the method used. An
//! interval is infinite exactly when `τ ≤ 0`.

use std::f64::consts::E;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::SolverConfig;
use crate::data::{compute_dz, compute_psi, Dataset, PsiMatrix, ScaleMode};
use crate::error::{Error, Result};
use crate::normal;
use crate::sens::{kappa1_from_coords, kappa_coord_exact, kappa_general_from, sensitivity_report, ConeFactor, SensitivityReport, MAX_BLOCK};
use crate::sim::replication_rng;
use crate::stiv::{fit_stiv, StivFit, StivSpec};

// ---- quantile r ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ErrorDist {
    #[default]
    Normal,
    StudentT {
        df: f64,
    },
    Uniform,
}

impl ErrorDist {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ErrorDist::Normal => rng.sample(StandardNormal),
            ErrorDist::StudentT { df } => StudentT::new(df).expect("validated df").sample(rng),
            ErrorDist::Uniform => Uniform::new(-1.0, 1.0).expect("valid range").sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// 1 to 5.
    pub scenario: u8,
    pub alpha: f64,
    /// Scenario 1: error law up to scale.
    #[serde(default)]
    pub dist: ErrorDist,
    /// Scenario 1: Monte-Carlo draws.
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
    /// Scenario 4: moment index δ (recorded only).
    #[serde(default)]
    pub delta: Option<f64>,
    /// Scenario 5: bound on the kurtosis ratio; `None` uses the simplified
    /// formula.
    #[serde(default)]
    pub c4: Option<f64>,
}

fn default_draws() -> usize {
    2000
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec::new(4, 0.05)
    }
}

impl ScenarioSpec {
    pub fn new(scenario: u8, alpha: f64) -> Self {
        ScenarioSpec { scenario, alpha, dist: ErrorDist::Normal, draws: default_draws(), seed: 0, delta: None, c4: None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(1..=5).contains(&self.scenario) {
            return bad(format!("scenario {} not in 1..=5", self.scenario));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} not in (0, 1)", self.alpha));
        }
        if self.scenario == 1 && self.draws < 1000 {
            return bad(format!("scenario 1 needs at least 1000 draws, got {}", self.draws));
        }
        if let ErrorDist::StudentT { df } = self.dist {
            if !(df > 0.0) {
                return bad(format!("student-t df = {df} must be positive"));
            }
        }
        if let Some(c4) = self.c4 {
            if !(c4 > 0.0) {
                return bad(format!("c4 = {c4} must be positive"));
            }
        }
        Ok(())
    }
}

/// Outcome of checking a scenario's admissibility condition on `L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validity {
    pub scenario: u8,
    /// Largest admissible `L` (exclusive) when the condition is explicit.
    pub l_bound: Option<f64>,
    /// `None` when the condition cannot be checked from `(n, L, α)`.
    pub holds: Option<bool>,
    pub note: String,
}

impl Validity {
    pub fn warning(&self) -> Option<String> {
        match self.holds {
            Some(false) => Some(format!("scenario {} admissibility fails: {}", self.scenario, self.note)),
            _ => None,
        }
    }
}

/// Closed-form `r` for scenarios 2 to 5 and the admissibility check on `L`.
pub fn select_r(spec: &ScenarioSpec, n: usize, l: usize) -> Result<(f64, Validity)> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::InvalidParams(format!("n = {n} < 2")));
    }
    if l < 1 {
        return Err(Error::InvalidParams("L must be at least 1".into()));
    }
    let (nf, lf, a) = (n as f64, l as f64, spec.alpha);
    let infeasible = |m: String| Err(Error::InfeasibleQuantile(m));
    let v = |l_bound: Option<f64>, note: &str| Validity {
        scenario: spec.scenario,
        l_bound,
        holds: l_bound.map(|b| lf < b),
        note: note.to_string(),
    };
    match spec.scenario {
        1 => Err(Error::InvalidParams("scenario 1 is data dependent; use mc_quantile_r".into())),
        2 => {
            let m = (lf / (2.0 * a)).ln();
            if m <= 0.0 {
                return infeasible(format!("log(L/(2 alpha)) = {m} <= 0"));
            }
            Ok(((2.0 * m / nf).sqrt(), v(None, "needs symmetric z_l u, not checkable from data")))
        }
        3 => {
            let p = 9.0 * a / (4.0 * lf * E.powi(3));
            let r = -normal::inv_cdf(p) / nf.sqrt();
            if !(r > 0.0) {
                return infeasible(format!("9 alpha/(4 L e^3) = {p} >= 1/2"));
            }
            let bound = 9.0 * a / (4.0 * E.powi(3) * normal::cdf(-nf.sqrt()));
            Ok((r, v(Some(bound), "L < 9 alpha / (4 e^3 Phi(-sqrt n))")))
        }
        4 => {
            let r = -normal::inv_cdf(a / (2.0 * lf)) / nf.sqrt();
            let mut val = v(None, "asymptotic only; the moderate-deviation constant is not explicit");
            if let Some(d) = spec.delta {
                val.note = format!("{} (delta = {d})", val.note);
            }
            Ok((r, val))
        }
        _ => {
            let m = (lf * (2.0 * E + 1.0) / a).ln();
            match spec.c4 {
                Some(c4) => {
                    let den = nf - c4 * m;
                    if den <= 0.0 {
                        return infeasible(format!("n - c4 log(L(2e+1)/alpha) = {den} <= 0"));
                    }
                    let bound = a / (2.0 * E + 1.0) * (nf / c4).exp();
                    Ok(((2.0 * m / den).sqrt(), v(Some(bound), "L < alpha/(2e+1) exp(n/c4)")))
                }
                None => Ok((2.0 * (m / nf).sqrt(), v(None, "simplified form, assumes n - c4 log(L(2e+1)/alpha) >= n/2"))),
            }
        }
    }
}

/// Type-7 sample quantile (linear interpolation between order statistics)
/// of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One draw of the scenario-1 statistic given errors `u`.
fn self_normalized_max(ds: &Dataset, cone_set: &[usize], dz: &[f64], u: &[f64]) -> f64 {
    let n = ds.n() as f64;
    let z = ds.z();
    let rms_u = (u.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let mut best: f64 = 0.0;
    for l in 0..ds.l() {
        let (mut s1, mut s2) = (0.0, 0.0);
        for (i, &ui) in u.iter().enumerate() {
            let p = z[(i, l)] * ui;
            s1 += p;
            s2 += p * p;
        }
        let num = (s1 / n).abs();
        let v = if cone_set.contains(&l) {
            if s2 > 0.0 {
                num / (s2 / n).sqrt()
            } else {
                0.0
            }
        } else if rms_u > 0.0 {
            dz[l] * num / rms_u
        } else {
            0.0
        };
        best = best.max(v);
    }
    best
}

/// Scenario 1: the `(1−α)` quantile of the sup of self-normalized sums,
/// conditional on the instruments, from `draws` Monte-Carlo error vectors.
/// Draw `b` uses stream `b` of `seed`, so the result does not depend on the
/// thread count.
pub fn mc_quantile_r(ds: &Dataset, cone_set: &[usize], dist: ErrorDist, alpha: f64, draws: usize, seed: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) || draws == 0 {
        return Err(Error::InvalidParams(format!("need alpha in (0, 1] and draws >= 1 (alpha = {alpha}, draws = {draws})")));
    }
    let dz = compute_dz(ds, cone_set)?;
    let mut stats: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = replication_rng(seed, b);
            let u: Vec<f64> = (0..ds.n()).map(|_| dist.sample(&mut rng)).collect();
            self_normalized_max(ds, cone_set, &dz.entries, &u)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&stats, 1.0 - alpha))
}

/// `r` for any scenario; scenario 1 needs the data and the cone set.
pub fn resolve_r(spec: &ScenarioSpec, ds: &Dataset, cone_set: &[usize]) -> Result<(f64, Validity)> {
    if spec.scenario == 1 {
        spec.validate()?;
        let r = mc_quantile_r(ds, cone_set, spec.dist, spec.alpha, spec.draws, spec.seed)?;
        let note = format!("Monte-Carlo quantile, {} draws, seed {}", spec.draws, spec.seed);
        return Ok((r, Validity { scenario: 1, l_bound: None, holds: None, note }));
    }
    select_r(spec, ds.n(), ds.l())
}

// ---- confidence sets -----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub k: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub halfwidth: f64,
    pub infinite: bool,
    /// Coordinate sensitivity bound used.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupBound {
    pub j0: Vec<usize>,
    pub p: f64,
    pub kappa: f64,
    /// Bound on `|(D_X⁻¹(β̂ − β))_{J₀}|_p`.
    pub bound: f64,
    pub infinite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceReport {
    pub method: String,
    pub r: f64,
    /// Sparsity certificate, or `|Ĵ|` for plug-in reports.
    pub s: usize,
    pub sigma_hat: f64,
    /// `τ` before taking the positive part.
    pub tau: f64,
    /// `τ₊⁻¹`, infinite when `τ ≤ 0`.
    pub inflation: f64,
    /// `d_k = 1/(D_X)_kk`.
    pub scale: Vec<f64>,
    pub intervals: Vec<Interval>,
    pub groups: Vec<GroupBound>,
    /// Plug-in reports only have approximate level.
    pub approximate: bool,
    pub validity: Option<Validity>,
}

impl ConfidenceReport {
    pub fn all_infinite(&self) -> bool {
        self.intervals.iter().all(|i| i.infinite)
    }

    pub fn halfwidths(&self) -> Vec<f64> {
        self.intervals.iter().map(|i| i.halfwidth).collect()
    }

    pub fn covers(&self, beta: &[f64]) -> bool {
        self.intervals.iter().zip(beta).all(|(i, &b)| i.infinite || (i.lower <= b && b <= i.upper))
    }

    pub fn with_validity(mut self, v: Validity) -> Self {
        self.validity = Some(v);
        self
    }
}

fn inflation(tau: f64) -> f64 {
    if tau > 0.0 {
        1.0 / tau
    } else {
        f64::INFINITY
    }
}

/// `2σ̂r/(d κ)·τ₊⁻¹`, with `κ = ∞` giving 0 and `τ ≤ 0` or `κ = 0` infinite.
fn halfwidth(sigma: f64, r: f64, d: f64, kappa: f64, tau: f64) -> f64 {
    if tau <= 0.0 || kappa <= 0.0 {
        return f64::INFINITY;
    }
    if kappa.is_infinite() || sigma == 0.0 {
        return 0.0;
    }
    2.0 * sigma * r / (d * kappa) / tau
}

pub(crate) struct ReportParts<'a> {
    pub method: &'a str,
    pub r: f64,
    pub s: usize,
    pub tau: f64,
    pub kappas: &'a [f64],
    pub groups: Vec<(Vec<usize>, f64, f64)>,
    pub approximate: bool,
}

pub(crate) fn build_report(fit: &StivFit, parts: ReportParts) -> ConfidenceReport {
    let scale: Vec<f64> = fit.dx.entries.iter().map(|d| 1.0 / d).collect();
    let intervals = (0..fit.beta_hat.len())
        .map(|k| {
            let h = halfwidth(fit.sigma_hat, parts.r, scale[k], parts.kappas[k], parts.tau);
            let b = fit.beta_hat[k];
            Interval { k, estimate: b, lower: b - h, upper: b + h, halfwidth: h, infinite: h.is_infinite(), kappa: parts.kappas[k] }
        })
        .collect();
    let groups = parts
        .groups
        .into_iter()
        .map(|(j0, p, kappa)| {
            let bound = halfwidth(fit.sigma_hat, parts.r, 1.0, kappa, parts.tau);
            GroupBound { j0, p, kappa, bound, infinite: bound.is_infinite() }
        })
        .collect();
    ConfidenceReport {
        method: parts.method.into(),
        r: parts.r,
        s: parts.s,
        sigma_hat: fit.sigma_hat,
        tau: parts.tau,
        inflation: inflation(parts.tau),
        scale,
        intervals,
        groups,
        approximate: parts.approximate,
        validity: None,
    }
}

fn check_report(fit: &StivFit, sr: &SensitivityReport) -> Result<()> {
    if fit.spec.c != Some(sr.cone.c) || sr.cone.enlarged {
        return Err(Error::MismatchedReport(format!("fit c = {:?}, report cone c = {} (enlarged: {})", fit.spec.c, sr.cone.c, sr.cone.enlarged)));
    }
    if sr.kappa_coord.len() != fit.beta_hat.len() {
        return Err(Error::MismatchedReport(format!("{} sensitivities for {} coefficients", sr.kappa_coord.len(), fit.beta_hat.len())));
    }
    Ok(())
}

/// Best available lower bound on `κ_{p,J₀}(s)`: the block battery for `p = 1`
/// when present, otherwise the closed form.
fn group_kappa(sr: &SensitivityReport, j0: &[usize], p: f64) -> Result<f64> {
    let closed = sr.general(j0, p)?;
    Ok(match (p == 1.0, sr.block(j0)) {
        (true, Some(b)) => b.max(closed),
        _ => closed,
    })
}

fn groups_for(sr: &SensitivityReport, j0_list: &[(Vec<usize>, f64)]) -> Result<Vec<(Vec<usize>, f64, f64)>> {
    j0_list
        .iter()
        .map(|(j0, p)| {
            let mut key = j0.clone();
            key.sort_unstable();
            key.dedup();
            let kappa = group_kappa(sr, &key, *p)?;
            Ok((key, *p, kappa))
        })
        .collect()
}

/// Sparsity-certificate intervals with `τ = 1 − r/κ₁(s)`.
pub fn confidence_intervals(fit: &StivFit, sr: &SensitivityReport, r: f64, j0_list: &[(Vec<usize>, f64)]) -> Result<ConfidenceReport> {
    check_report(fit, sr)?;
    let tau = 1.0 - r / sr.kappa1;
    let groups = groups_for(sr, j0_list)?;
    let parts = ReportParts { method: "certificate", r, s: sr.s, tau, kappas: &sr.kappa_coord, groups, approximate: false };
    Ok(build_report(fit, parts))
}

fn complement(set: &[usize], k: usize) -> Vec<usize> {
    (0..k).filter(|i| !set.contains(i)).collect()
}

/// `τ₂ = 1 − r/κ̄_{1,A} − r²/κ̄_{1,B}` where a missing block contributes 0.
fn tau2(r: f64, kappa_a: f64, kappa_b: f64) -> f64 {
    let t = |x: f64, k: f64| if k.is_infinite() { 0.0 } else { x / k };
    1.0 - t(r, kappa_a) - t(r * r, kappa_b)
}

/// Intervals for a max-abs normalized fit with `J_exo` the regressors used as
/// their own instruments: `τ₂ = 1 − r/κ̄_{1,J_exo^c}(s) − r²/κ̄_{1,J_exo}(s)`.
pub fn confidence_intervals_ht(fit: &StivFit, sr: &SensitivityReport, r: f64, j_exo: &[usize], j0_list: &[(Vec<usize>, f64)]) -> Result<ConfidenceReport> {
    check_report(fit, sr)?;
    if fit.dx.mode != ScaleMode::MaxAbs {
        return Err(Error::SpecInvalid("heavy-tail-free intervals need the max-abs normalization of X".into()));
    }
    let k = fit.beta_hat.len();
    let exo: Vec<usize> = {
        let mut v = j_exo.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    if let Some(&bad) = exo.iter().find(|&&i| i >= k) {
        return Err(Error::DimensionMismatch(format!("exogenous index {bad} out of range")));
    }
    let endo = complement(&exo, k);
    let ka = if endo.is_empty() { f64::INFINITY } else { group_kappa(sr, &endo, 1.0)? };
    let kb = if exo.is_empty() { f64::INFINITY } else { group_kappa(sr, &exo, 1.0)? };
    let tau = tau2(r, ka, kb);
    let groups = groups_for(sr, j0_list)?;
    let parts = ReportParts { method: "certificate, max-abs", r, s: sr.s, tau, kappas: &sr.kappa_coord, groups, approximate: false };
    Ok(build_report(fit, parts))
}

/// Plug-in intervals with `Ĵ = J(β̂)`: exact `κ*_{k,Ĵ}` and
/// `κ_{1,Ĵ} ≥ (1−c)/(2|Ĵ|) min_k κ*_{k,Ĵ}`. When `|Ĵ|` exceeds the
/// enumeration limit the certificate bounds with `s = |Ĵ|` are used instead.
/// `j_exo = Some(..)` selects the max-abs form of the denominator.
pub fn plugin_confidence(fit: &StivFit, psi: &PsiMatrix, r: f64, j_exo: Option<&[usize]>, cfg: &SolverConfig) -> Result<ConfidenceReport> {
    let c = fit.spec.c.ok_or_else(|| Error::SpecInvalid("plug-in intervals need c".into()))?;
    let cf = ConeFactor::standard(c)?;
    let k = fit.beta_hat.len();
    let jhat = fit.support.clone();
    let s = jhat.len();
    if s == 0 {
        let kappas = vec![f64::INFINITY; k];
        let parts = ReportParts { method: "plug-in", r, s, tau: 1.0, kappas: &kappas, groups: Vec::new(), approximate: true };
        return Ok(build_report(fit, parts));
    }
    if s > MAX_BLOCK {
        let sr = sensitivity_report(psi, s, &cf, cfg, false)?;
        let mut rep = match j_exo {
            Some(exo) => confidence_intervals_ht(fit, &sr, r, exo, &[])?,
            None => confidence_intervals(fit, &sr, r, &[])?,
        };
        rep.method = "plug-in, certificate fallback".into();
        rep.approximate = true;
        return Ok(rep);
    }
    let kappas = (0..k).map(|kk| kappa_coord_exact(psi, kk, &jhat, &cf, cfg)).collect::<Result<Vec<f64>>>()?;
    let k1 = kappa1_from_coords(&kappas, s, &cf);
    let tau = match j_exo {
        None => 1.0 - r / k1,
        Some(exo) => {
            let endo = complement(exo, k);
            let bound = |set: &[usize]| -> Result<f64> {
                if set.is_empty() {
                    Ok(f64::INFINITY)
                } else {
                    kappa_general_from(&kappas, set, 1.0, s, &cf)
                }
            };
            tau2(r, bound(&endo)?, bound(exo)?)
        }
    };
    let method = if j_exo.is_some() { "plug-in, max-abs" } else { "plug-in" };
    let parts = ReportParts { method, r, s, tau, kappas: &kappas, groups: Vec::new(), approximate: true };
    Ok(build_report(fit, parts))
}

/// Certificate reports for increasing `s`. Coordinate bounds are carried as a
/// running minimum over `s`, which keeps every bound valid and makes the
/// family nested.
pub fn nested_confsets(fit: &StivFit, psi: &PsiMatrix, r: f64, s_values: &[usize], j_exo: Option<&[usize]>, cfg: &SolverConfig) -> Result<Vec<ConfidenceReport>> {
    if s_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("s values must be strictly increasing".into()));
    }
    let c = fit.spec.c.ok_or_else(|| Error::SpecInvalid("confidence sets need c".into()))?;
    let cf = ConeFactor::standard(c)?;
    let mut out: Vec<ConfidenceReport> = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    for &s in s_values {
        let mut sr = sensitivity_report(psi, s, &cf, cfg, false)?;
        if let Some(p) = &prev {
            for (v, q) in sr.kappa_coord.iter_mut().zip(p) {
                *v = v.min(*q);
            }
            sr.kappa1 = kappa1_from_coords(&sr.kappa_coord, s, &cf);
        }
        prev = Some(sr.kappa_coord.clone());
        let rep = match j_exo {
            Some(exo) => confidence_intervals_ht(fit, &sr, r, exo, &[])?,
            None => confidence_intervals(fit, &sr, r, &[])?,
        };
        if let Some(last) = out.last() {
            let nested = last.intervals.iter().zip(&rep.intervals).all(|(a, b)| a.halfwidth <= b.halfwidth);
            debug_assert!(nested, "confidence family not nested at s = {s}");
        }
        out.push(rep);
    }
    Ok(out)
}

/// Certificate intervals at sparsity `s` for a fit of `ds`: the max-abs form
/// (with the dataset's exogenous regressors) when the fit used the max-abs
/// normalization, the rms form otherwise.
pub fn certificate_confidence(ds: &Dataset, fit: &StivFit, s: usize, cfg: &SolverConfig) -> Result<(SensitivityReport, ConfidenceReport)> {
    let c = fit.spec.c.ok_or_else(|| Error::SpecInvalid("confidence sets need c".into()))?;
    let psi = compute_psi(ds, &fit.dx, &fit.dz)?;
    let sr = sensitivity_report(&psi, s, &ConeFactor::standard(c)?, cfg, false)?;
    let rep = if fit.dx.mode == ScaleMode::MaxAbs {
        confidence_intervals_ht(fit, &sr, fit.spec.r, ds.exo_idx(), &[])?
    } else {
        confidence_intervals(fit, &sr, fit.spec.r, &[])?
    };
    Ok((sr, rep))
}

/// Plug-in counterpart of [`certificate_confidence`].
pub fn plugin_for(ds: &Dataset, fit: &StivFit, cfg: &SolverConfig) -> Result<ConfidenceReport> {
    let psi = compute_psi(ds, &fit.dx, &fit.dz)?;
    let exo = (fit.dx.mode == ScaleMode::MaxAbs).then(|| ds.exo_idx());
    plugin_confidence(fit, &psi, fit.spec.r, exo, cfg)
}

// ---- selection -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub support: Vec<usize>,
    /// `sign(β̃_k)` with `sign(0) = 0`.
    pub signs: Vec<i8>,
    pub thresholds: Vec<f64>,
    pub beta_tilde: Vec<f64>,
    /// Set when the thresholds are infinite; the selection is then empty.
    pub infinite_threshold: bool,
}

/// Keeps `β̂_k` when `|β̂_k| > ω_k`, with `ω_k` the halfwidths of `report`.
pub fn threshold_from_report(fit: &StivFit, report: &ConfidenceReport) -> Selection {
    let thresholds = report.halfwidths();
    let infinite = report.tau <= 0.0;
    let beta_tilde: Vec<f64> = fit
        .beta_hat
        .iter()
        .zip(&thresholds)
        .map(|(&b, &w)| if !infinite && b.abs() > w { b } else { 0.0 })
        .collect();
    let support = (0..beta_tilde.len()).filter(|&k| beta_tilde[k] != 0.0).collect();
    let signs = beta_tilde.iter().map(|&b| if b > 0.0 { 1 } else if b < 0.0 { -1 } else { 0 }).collect();
    Selection { support, signs, thresholds, beta_tilde, infinite_threshold: infinite }
}

/// Thresholded estimator with the certificate thresholds
/// `ω_k(s) = 2σ̂r/(d_k κ*_k(s))·(1 − r/κ₁(s))₊⁻¹`.
pub fn threshold_select(fit: &StivFit, sr: &SensitivityReport, r: f64) -> Result<Selection> {
    Ok(threshold_from_report(fit, &confidence_intervals(fit, sr, r, &[])?))
}

// ---- approximate sparsity --------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxBound {
    pub j0: Vec<usize>,
    pub p: f64,
    pub bound: f64,
    /// Minimizing candidate `J`.
    pub best_j: Vec<usize>,
    pub variance_term: f64,
    pub bias_term: f64,
    /// The bias term uses `β̂` for the unknown `β`, so this is an estimate
    /// rather than a certified bound.
    pub estimated_bias: bool,
}

/// Oracle-type bound on `|(D_X⁻¹(β̂ − β))_{J₀}|_p`: the minimum over candidate
/// sets `J` of `max(2σ̂r/κ̃_{p,J₀,J}·(1 − r/κ̃_{1,J})₊⁻¹, 6|(D_X⁻¹β̂)_{J^c}|₁/(1−c))`
/// with sensitivities on the enlarged cone.
pub fn approx_sparse_bound(
    fit: &StivFit,
    psi: &PsiMatrix,
    r: f64,
    candidates: &[Vec<usize>],
    j0_list: &[(Vec<usize>, f64)],
    cfg: &SolverConfig,
) -> Result<Vec<ApproxBound>> {
    let c = fit.spec.c.ok_or_else(|| Error::SpecInvalid("approximate sparsity bounds need c".into()))?;
    let cf = ConeFactor::enlarged(c)?;
    let k = fit.beta_hat.len();
    let scaled: Vec<f64> = fit.beta_hat.iter().zip(&fit.dx.entries).map(|(b, d)| (b / d).abs()).collect();
    // per candidate: (J, exact enlarged coordinates or None for J = ∅, bias)
    let mut per_j = Vec::new();
    for j in candidates {
        let mut key = j.clone();
        key.sort_unstable();
        key.dedup();
        if key.len() > MAX_BLOCK {
            return Err(Error::BlockTooLarge(key.len()));
        }
        let bias = 6.0 * complement(&key, k).iter().map(|&i| scaled[i]).sum::<f64>() / (1.0 - c);
        let coords = if key.is_empty() {
            None
        } else {
            Some((0..k).map(|kk| kappa_coord_exact(psi, kk, &key, &cf, cfg)).collect::<Result<Vec<f64>>>()?)
        };
        per_j.push((key, coords, bias));
    }
    let mut out = Vec::new();
    for (j0, p) in j0_list {
        let mut best: Option<ApproxBound> = None;
        for (j, coords, bias) in &per_j {
            let var = match coords {
                None => 0.0,
                Some(cs) => {
                    let k1 = kappa1_from_coords(cs, j.len(), &cf);
                    let kp = kappa_general_from(cs, j0, *p, j.len(), &cf)?;
                    halfwidth(fit.sigma_hat, r, 1.0, kp, 1.0 - r / k1)
                }
            };
            let bound = var.max(*bias);
            if best.as_ref().is_none_or(|b| bound < b.bound) {
                best = Some(ApproxBound { j0: j0.clone(), p: *p, bound, best_j: j.clone(), variance_term: var, bias_term: *bias, estimated_bias: true });
            }
        }
        if let Some(b) = best {
            out.push(b);
        }
    }
    Ok(out)
}

// ---- c grid ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CGridRow {
    pub c: f64,
    pub sigma_hat: f64,
    pub halfwidths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CGridReport {
    pub rows: Vec<CGridRow>,
    /// Per coordinate, the grid value of `c` giving the narrowest interval.
    pub best_c: Vec<f64>,
}

/// Certificate intervals for every `c` on a grid, marking the per-coordinate
/// minimizing `c`. `j_exo = Some(..)` uses the max-abs form.
pub fn c_grid(ds: &Dataset, base: &StivSpec, c_values: &[f64], s: usize, j_exo: Option<&[usize]>, cfg: &SolverConfig) -> Result<CGridReport> {
    if c_values.is_empty() {
        return Err(Error::InvalidParams("empty c grid".into()));
    }
    let mut rows = Vec::new();
    for &c in c_values {
        let spec = StivSpec { c: Some(c), ..base.clone() };
        let fit = fit_stiv(ds, &spec, cfg)?;
        let psi = compute_psi(ds, &fit.dx, &fit.dz)?;
        let sr = sensitivity_report(&psi, s, &ConeFactor::standard(c)?, cfg, false)?;
        let rep = match j_exo {
            Some(exo) => confidence_intervals_ht(&fit, &sr, spec.r, exo, &[])?,
            None => confidence_intervals(&fit, &sr, spec.r, &[])?,
        };
        rows.push(CGridRow { c, sigma_hat: fit.sigma_hat, halfwidths: rep.halfwidths() });
    }
    let k = ds.k();
    let best_c = (0..k)
        .map(|kk| rows.iter().min_by(|a, b| a.halfwidths[kk].total_cmp(&b.halfwidths[kk])).map(|r| r.c).unwrap_or(f64::NAN))
        .collect();
    Ok(CGridReport { rows, best_c })
}

// ---- tables ------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRow {
    pub k: usize,
    pub lower_sc: f64,
    pub lower_plugin: f64,
    pub estimate: f64,
    pub upper_plugin: f64,
    pub upper_sc: f64,
    pub kappa_plugin: f64,
    pub kappa_sc: f64,
    pub omega_plugin: f64,
    pub omega_sc: f64,
}

/// Side by side certificate and plug-in intervals with their sensitivities
/// and thresholds.
pub fn interval_table(certificate: &ConfidenceReport, plugin: &ConfidenceReport) -> Vec<IntervalRow> {
    certificate
        .intervals
        .iter()
        .zip(&plugin.intervals)
        .map(|(sc, pi)| IntervalRow {
            k: sc.k,
            lower_sc: sc.lower,
            lower_plugin: pi.lower,
            estimate: sc.estimate,
            upper_plugin: pi.upper,
            upper_sc: sc.upper,
            kappa_plugin: pi.kappa,
            kappa_sc: sc.kappa,
            omega_plugin: pi.halfwidth,
            omega_sc: sc.halfwidth,
        })
        .collect()
}

pub fn interval_table_text(rows: &[IntervalRow], s: usize) -> String {
    let mut out = format!(
        "{:>4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "k", "lo(SC)", "lo(J)", "beta", "up(J)", "up(SC)", "kappa(J)", format!("kappa({s})"), "omega(J)", "omega(SC)"
    );
    for r in rows {
        out.push_str(&format!(
            "{:>4} {:>10} {:>10} {:>10.4} {:>10} {:>10} {:>10.4} {:>10.4} {:>10} {:>10}\n",
            r.k + 1,
            fmt_bound(r.lower_sc),
            fmt_bound(r.lower_plugin),
            r.estimate,
            fmt_bound(r.upper_plugin),
            fmt_bound(r.upper_sc),
            r.kappa_plugin,
            r.kappa_sc,
            fmt_bound(r.omega_plugin),
            fmt_bound(r.omega_sc),
        ));
    }
    out
}

fn fmt_bound(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.4}")
    }
}
