//! Two-stage STIV for one endogenous regressor: a square-root Lasso first
//! stage estimates the linear projection instrument `z_iᵀζ`, and the second
//! stage uses it as the instrument of the endogenous regressor with an
//! IV-constraint enlarged by the first-stage error bound `C₁`.

use serde::Serialize;

use crate::cone::SolverConfig;
use crate::data::{compute_dx, compute_psi, psi_from, Dataset, DiagScale, PsiMatrix, ScaleMode, XNorm};
use crate::error::{Error, Result};
use crate::inference::{build_report, ConfidenceReport, ReportParts};
use crate::linalg::Mat;
use crate::sens::{kappa1_from_coords, kappa1_upper, kappa_coord_exact, sensitivity_report, ConeFactor, SensitivityReport, MAX_BLOCK};
use crate::stiv::{fit_problem, fit_sqrt_lasso, StivFit, StivProblem, StivSpec, DEFAULT_ZERO_CLIP};

#[derive(Debug, Clone, Serialize)]
pub struct FirstStageFit {
    pub k_end: usize,
    /// Reduced-form coefficients on all `L` instruments.
    pub zeta_hat: Vec<f64>,
    pub support: Vec<usize>,
    pub sigma_rf: f64,
    pub c_rf: f64,
    pub s_rf: usize,
    pub r: f64,
    /// `κ₁(s_RF)` of the first-stage design, or the cheap upper bound when
    /// that bound already rules out a finite `C₁`.
    pub kappa1: f64,
    pub kappa1_method: String,
    /// `C₁(r, c_RF, s_RF)`; infinite when `κ₁(s_RF) ≤ r²`.
    pub c1: f64,
    pub infinite_c1: bool,
}

/// First stage: square-root Lasso of `x_{k_end}` on all instruments with the
/// max-abs normalization, and `C₁ = 2σ̂_RF r/κ₁(s_RF)·(1 − r²/κ₁(s_RF))₊⁻¹`.
/// `s_rf` defaults to the size of the fitted support. A first stage with
/// `ζ̂ = 0` gives no instrument and fails with `DegenerateInstrument`.
pub fn fit_first_stage(ds: &Dataset, k_end: usize, c_rf: f64, r: f64, s_rf: Option<usize>, cfg: &SolverConfig) -> Result<FirstStageFit> {
    if k_end >= ds.k() {
        return Err(Error::DimensionMismatch(format!("endogenous index {k_end} out of range")));
    }
    let cst = ds.const_instr_idx();
    let rf = Dataset::new(ds.x().col(k_end), ds.z().clone(), ds.z().clone(), Some(cst), (0..ds.l()).collect())?;
    let spec = StivSpec::new(c_rf, r, vec![cst]).with_norm(XNorm::MaxAbs);
    let fit = fit_sqrt_lasso(&rf, &spec, cfg)?;
    if fit.support.is_empty() {
        return Err(Error::DegenerateInstrument);
    }
    let s = s_rf.unwrap_or(fit.support.len()).clamp(1, ds.l());
    let psi = compute_psi(&rf, &fit.dx, &fit.dz)?;
    let cf = ConeFactor::standard(c_rf)?;
    let upper = kappa1_upper(&psi, s, &cf);
    let (kappa1, method) = if upper <= r * r {
        (upper, "upper bound (rules out a finite C1)")
    } else {
        (sensitivity_report(&psi, s, &cf, cfg, false)?.kappa1, "sparsity certificate")
    };
    let tau = 1.0 - r * r / kappa1;
    let c1 = if tau > 0.0 { 2.0 * fit.sigma_hat * r / kappa1 / tau } else { f64::INFINITY };
    Ok(FirstStageFit {
        k_end,
        zeta_hat: fit.beta_hat.clone(),
        support: fit.support.clone(),
        sigma_rf: fit.sigma_hat,
        c_rf,
        s_rf: s,
        r,
        kappa1,
        kappa1_method: method.into(),
        c1,
        infinite_c1: !c1.is_finite(),
    })
}

#[derive(Debug, Clone)]
pub struct TwoStageData {
    /// `n × K`: the exogenous regressors and, in column `k_end`, `ẑ = Zζ̂`.
    pub z: Mat,
    pub dz: DiagScale,
    pub zhat: Vec<f64>,
}

/// Second-stage instruments and their normalization: `(max_i|ẑ_i| + 2C₁)⁻¹`
/// for the estimated instrument and `x_{k*}⁻¹` for the others.
pub fn build_2s_dataset(ds: &Dataset, fsf: &FirstStageFit) -> Result<TwoStageData> {
    if fsf.infinite_c1 {
        return Err(Error::InfiniteC1);
    }
    if fsf.zeta_hat.len() != ds.l() || fsf.k_end >= ds.k() {
        return Err(Error::DimensionMismatch("first stage does not match the dataset".into()));
    }
    let zhat = ds.z().mul_vec(&fsf.zeta_hat);
    let zmax = zhat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if zmax == 0.0 {
        return Err(Error::DegenerateInstrument);
    }
    let k = ds.k();
    let z = Mat::from_fn(ds.n(), k, |i, j| if j == fsf.k_end { zhat[i] } else { ds.x()[(i, j)] });
    let entries = (0..k)
        .map(|j| {
            if j == fsf.k_end {
                1.0 / (zmax + 2.0 * fsf.c1)
            } else {
                1.0 / ds.x().col(j).iter().fold(0.0f64, |m, v| m.max(v.abs()))
            }
        })
        .collect();
    Ok(TwoStageData { z, dz: DiagScale { entries, mode: ScaleMode::MaxAbs }, zhat })
}

#[derive(Debug, Clone)]
pub struct TwoStageFit {
    pub first: FirstStageFit,
    pub fit: StivFit,
    /// `Ψ` built from the second-stage instruments (K × K).
    pub psi: PsiMatrix,
    pub sensitivities: SensitivityReport,
    pub report: ConfidenceReport,
}

/// `τ = 1 − r/κ*_{k_end} − r²/κ₁`.
fn tau_2s(r: f64, kappa_end: f64, kappa1: f64) -> f64 {
    let t = |x: f64, k: f64| if k.is_infinite() { 0.0 } else { x / k };
    1.0 - t(r, kappa_end) - t(r * r, kappa1)
}

/// Second stage: STIV with the estimated instrument, a single plain cone
/// `Q̂(β) ≤ σ²`, and certificate intervals from the sensitivities of the
/// second-stage `Ψ`.
pub fn fit_stiv_2s(ds: &Dataset, fsf: &FirstStageFit, c: f64, r: f64, s: usize, cfg: &SolverConfig) -> Result<TwoStageFit> {
    let data = build_2s_dataset(ds, fsf)?;
    let dx = compute_dx(ds, XNorm::MaxAbs)?;
    let problem = StivProblem {
        y: ds.y(),
        x: ds.x(),
        dx: &dx.entries,
        band: &data.z,
        band_scale: &data.dz.entries,
        cone_weights: vec![vec![1.0; ds.n()]],
        c: Some(c),
        r,
    };
    let spec = StivSpec { c: Some(c), r, cone_set: Vec::new(), x_norm: XNorm::MaxAbs, zero_clip: DEFAULT_ZERO_CLIP };
    let fit = fit_problem(&problem, &spec, dx.clone(), data.dz.clone(), cfg)?;
    let psi = psi_from(&data.z, ds.x(), &data.dz, &dx)?;
    let cf = ConeFactor::standard(c)?;
    let sr = sensitivity_report(&psi, s, &cf, cfg, false)?;
    let tau = tau_2s(r, sr.kappa_coord[fsf.k_end], sr.kappa1);
    let parts = ReportParts { method: "two-stage certificate", r, s, tau, kappas: &sr.kappa_coord, groups: Vec::new(), approximate: false };
    let report = build_report(&fit, parts);
    Ok(TwoStageFit { first: fsf.clone(), fit, psi, sensitivities: sr, report })
}

/// Plug-in version of the two-stage intervals with `Ĵ = J(β̂)`.
pub fn plugin_2s(tsf: &TwoStageFit, cfg: &SolverConfig) -> Result<ConfidenceReport> {
    let fit = &tsf.fit;
    let c = fit.spec.c.ok_or_else(|| Error::SpecInvalid("two-stage fit without c".into()))?;
    let cf = ConeFactor::standard(c)?;
    let jhat = &fit.support;
    let k = fit.beta_hat.len();
    let r = fit.spec.r;
    if jhat.len() > MAX_BLOCK {
        return Err(Error::BlockTooLarge(jhat.len()));
    }
    let kappas = if jhat.is_empty() {
        vec![f64::INFINITY; k]
    } else {
        (0..k).map(|kk| kappa_coord_exact(&tsf.psi, kk, jhat, &cf, cfg)).collect::<Result<Vec<f64>>>()?
    };
    let k1 = if jhat.is_empty() { f64::INFINITY } else { kappa1_from_coords(&kappas, jhat.len(), &cf) };
    let tau = tau_2s(r, kappas[tsf.first.k_end], k1);
    let parts = ReportParts { method: "two-stage plug-in", r, s: jhat.len(), tau, kappas: &kappas, groups: Vec::new(), approximate: true };
    Ok(build_report(fit, parts))
}

/// Non-zero first-stage coefficients, one per line.
pub fn first_stage_text(fsf: &FirstStageFit) -> String {
    let mut out = format!(
        "first stage: sigma_rf = {:.4}, c_rf = {}, s_rf = {}, kappa1 = {:.6} ({}), C1 = {}\n",
        fsf.sigma_rf, fsf.c_rf, fsf.s_rf, fsf.kappa1, fsf.kappa1_method, fsf.c1
    );
    for &l in &fsf.support {
        out.push_str(&format!("zeta_{:<3} {:>9.4}\n", l + 1, fsf.zeta_hat[l]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_collapses() {
        assert_eq!(tau_2s(0.1, f64::INFINITY, f64::INFINITY), 1.0);
        assert!((tau_2s(0.1, 0.5, 0.1) - (1.0 - 0.2 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn zero_first_stage_is_degenerate() {
        let z = Mat::from_rows(&[vec![1.0, 0.5], vec![1.0, -1.0], vec![1.0, 2.0]]);
        let x = Mat::from_rows(&[vec![0.3], vec![0.1], vec![-0.2]]);
        let ds = Dataset::new(vec![1.0, 0.0, 2.0], x, z, Some(0), vec![]).unwrap();
        let fsf = FirstStageFit {
            k_end: 0,
            zeta_hat: vec![0.0, 0.0],
            support: vec![],
            sigma_rf: 0.1,
            c_rf: 0.1,
            s_rf: 1,
            r: 0.1,
            kappa1: 1.0,
            kappa1_method: String::new(),
            c1: 0.0,
            infinite_c1: false,
        };
        assert_eq!(build_2s_dataset(&ds, &fsf).unwrap_err(), Error::DegenerateInstrument);
        let inf = FirstStageFit { infinite_c1: true, c1: f64::INFINITY, ..fsf };
        assert_eq!(build_2s_dataset(&ds, &inf).unwrap_err(), Error::InfiniteC1);
    }
}
