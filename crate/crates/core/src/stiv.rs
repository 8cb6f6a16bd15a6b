//! STIV, STIV-R and the square-root Lasso as conic programs.
//!
//! Variable layout of an assembled program, with `m` the length of each cone
//! tail (`n` for the literal program, `min(n, K+1)` after QR compression):
//!
//! | block | size | cone |
//! |---|---|---|
//! | β, t | K + 1 | free |
//! | w, p, q | 3K (omitted for STIV-R) | nonneg |
//! | a, b (band slacks) | 2L | nonneg |
//! | (h_l, v_l) for l ∈ I | \|I\|·(m+1) | soc |
//!
//! Equalities: `p = w − D_X⁻¹β`, `q = w + D_X⁻¹β` (2K rows, STIV only),
//! `a = r t − g(β)`, `b = r t + g(β)` with `g(β) = n^{-1/2} D_Z Zᵀ(Y − Xβ)`
//! (2L rows), and `h_l = t`, `v_l = R_l(1; −β)` (|I|·(m+1) rows).
//! The objective is `Σw + c t/√n` (STIV) or `t/√n` (STIV-R); `σ = t/√n`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cone::{certify, solve_cone, Certificate, ConeKind, ConeProgram, ConeSlice, Solution, SolverConfig, Status};
use crate::data::{compute_dx, compute_dz, mean_sq, qhat, Dataset, DiagScale, XNorm};
use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, Mat};

pub const DEFAULT_ZERO_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StivSpec {
    /// `None` selects STIV-R.
    pub c: Option<f64>,
    pub r: f64,
    /// Instruments carrying a cone constraint; must contain the constant.
    pub cone_set: Vec<usize>,
    pub x_norm: XNorm,
    pub zero_clip: f64,
}

impl StivSpec {
    pub fn new(c: f64, r: f64, cone_set: Vec<usize>) -> Self {
        StivSpec { c: Some(c), r, cone_set, x_norm: XNorm::Rms, zero_clip: DEFAULT_ZERO_CLIP }
    }

    pub fn stiv_r(r: f64, cone_set: Vec<usize>) -> Self {
        StivSpec { c: None, r, cone_set, x_norm: XNorm::Rms, zero_clip: DEFAULT_ZERO_CLIP }
    }

    pub fn with_norm(mut self, x_norm: XNorm) -> Self {
        self.x_norm = x_norm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.c {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::SpecInvalid(format!("c = {c} not in (0, 1)")));
            }
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::SpecInvalid(format!("r = {} must be positive", self.r)));
        }
        if self.cone_set.is_empty() {
            return Err(Error::SpecInvalid("cone set I is empty".into()));
        }
        if !(self.zero_clip >= 0.0) {
            return Err(Error::SpecInvalid("zero-clip threshold must be nonnegative".into()));
        }
        Ok(())
    }
}

/// The estimator's data after normalization: a regression of `y` on `x`,
/// a sup-norm band over the columns of `band` scaled by `band_scale`, and one
/// cone per weight vector `ω` requiring `E_n[ω²(y − xᵀβ)²] ≤ σ²`.
#[derive(Debug, Clone)]
pub struct StivProblem<'a> {
    pub y: &'a [f64],
    pub x: &'a Mat,
    pub dx: &'a [f64],
    pub band: &'a Mat,
    pub band_scale: &'a [f64],
    pub cone_weights: Vec<Vec<f64>>,
    pub c: Option<f64>,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub k: usize,
    pub l: usize,
    pub beta: usize,
    pub t: usize,
    /// Start of `w`; `p` and `q` follow. `None` for STIV-R.
    pub w: Option<usize>,
    pub a: usize,
    pub b: usize,
    pub socs: Vec<ConeSlice>,
}

impl StivProblem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.n();
        let k = self.x.cols;
        if self.x.rows != n || self.band.rows != n || self.dx.len() != k || self.band_scale.len() != self.band.cols {
            return Err(Error::DimensionMismatch("STIV problem blocks disagree".into()));
        }
        if self.cone_weights.is_empty() || self.cone_weights.iter().any(|w| w.len() != n) {
            return Err(Error::DimensionMismatch("cone weights".into()));
        }
        Ok(())
    }

    /// Cone tail rows: `(ω_i y_i, −ω_i x_i)` in the literal program, or the
    /// R factor of `diag(ω)[y X]` when compressed. In both, the tail is `T(1; β)`.
    fn cone_tail(&self, weights: &[f64], literal: bool) -> Mat {
        let n = self.n();
        let k = self.x.cols;
        let full = Mat::from_fn(n, k + 1, |i, j| if j == 0 { weights[i] * self.y[i] } else { -weights[i] * self.x[(i, j - 1)] });
        if literal || n <= k + 1 {
            return full;
        }
        let r = DMatrix::from_row_slice(n, k + 1, &full.data).qr().r();
        Mat::from_fn(r.nrows(), k + 1, |i, j| r[(i, j)])
    }

    pub fn assemble(&self, literal: bool) -> Result<(ConeProgram, Layout)> {
        self.check()?;
        let n = self.n();
        let sn = (n as f64).sqrt();
        let k = self.x.cols;
        let l = self.band.cols;
        let has_w = self.c.is_some();
        let tails: Vec<Mat> = self.cone_weights.iter().map(|w| self.cone_tail(w, literal)).collect();

        let beta = 0;
        let t = k;
        let mut next = k + 1;
        let w = if has_w {
            next += 3 * k;
            Some(k + 1)
        } else {
            None
        };
        let a = next;
        let b = a + l;
        next = b + l;
        let mut socs = Vec::new();
        for tl in &tails {
            socs.push(ConeSlice { start: next, len: tl.rows + 1, kind: ConeKind::Soc });
            next += tl.rows + 1;
        }
        let nvars = next;
        let neq = if has_w { 2 * k } else { 0 } + 2 * l + socs.iter().map(|s| s.len).sum::<usize>();

        let mut am = Mat::zeros(neq, nvars);
        let mut rhs = vec![0.0; neq];
        let mut row = 0;
        if let Some(w0) = w {
            let (p0, q0) = (w0 + k, w0 + 2 * k);
            for j in 0..k {
                let inv = 1.0 / self.dx[j];
                // p − w + β/dx = 0
                am[(row, p0 + j)] = 1.0;
                am[(row, w0 + j)] = -1.0;
                am[(row, beta + j)] = inv;
                row += 1;
                // q − w − β/dx = 0
                am[(row, q0 + j)] = 1.0;
                am[(row, w0 + j)] = -1.0;
                am[(row, beta + j)] = -inv;
                row += 1;
            }
        }
        let mut buf = vec![0.0; n];
        for li in 0..l {
            let s = self.band_scale[li] / sn;
            for (i, v) in buf.iter_mut().enumerate() {
                *v = self.band[(i, li)] * self.y[i];
            }
            let e = s * pairwise_sum(&buf);
            let mut g = vec![0.0; k];
            for (j, gj) in g.iter_mut().enumerate() {
                for (i, v) in buf.iter_mut().enumerate() {
                    *v = self.band[(i, li)] * self.x[(i, j)];
                }
                *gj = s * pairwise_sum(&buf);
            }
            // g_l(β) = e − Gβ;  a − r t − Gβ = −e;  b − r t + Gβ = e
            am[(row, a + li)] = 1.0;
            am[(row, t)] = -self.r;
            for j in 0..k {
                am[(row, beta + j)] = -g[j];
            }
            rhs[row] = -e;
            row += 1;
            am[(row, b + li)] = 1.0;
            am[(row, t)] = -self.r;
            for j in 0..k {
                am[(row, beta + j)] = g[j];
            }
            rhs[row] = e;
            row += 1;
        }
        for (tl, sl) in tails.iter().zip(&socs) {
            am[(row, sl.start)] = 1.0;
            am[(row, t)] = -1.0;
            row += 1;
            for i in 0..tl.rows {
                // v_i − Σ_j T_{i,j+1} β_j = T_{i,0}
                am[(row, sl.start + 1 + i)] = 1.0;
                for j in 0..k {
                    am[(row, beta + j)] = -tl[(i, j + 1)];
                }
                rhs[row] = tl[(i, 0)];
                row += 1;
            }
        }
        debug_assert_eq!(row, neq);

        let mut objective = vec![0.0; nvars];
        match (self.c, w) {
            (Some(c), Some(w0)) => {
                objective[t] = c / sn;
                for j in 0..k {
                    objective[w0 + j] = 1.0;
                }
            }
            _ => objective[t] = 1.0 / sn,
        }
        let mut cones = vec![ConeSlice { start: 0, len: k + 1, kind: ConeKind::Free }];
        cones.push(ConeSlice { start: k + 1, len: a + 2 * l - (k + 1), kind: ConeKind::Nonneg });
        cones.extend(socs.iter().copied());
        let program = ConeProgram { objective, eq_matrix: am, eq_rhs: rhs, cones };
        Ok((program, Layout { k, l, beta, t, w, a, b, socs }))
    }

    /// Solves the compressed program.
    pub fn solve(&self, cfg: &SolverConfig) -> Result<RawFit> {
        let (program, layout) = self.assemble(false)?;
        let solution = solve_cone(&program, cfg);
        if solution.status != Status::Optimal {
            let dump = if program.num_vars() <= 2000 { program.dump() } else { String::from("(program too large to dump)") };
            return Err(Error::SolverFailure(format!("STIV program ended with {:?}\n{dump}", solution.status)));
        }
        let certificate = certify(&solution, &program, cfg);
        let beta = solution.primal[layout.beta..layout.beta + layout.k].to_vec();
        let sigma = (solution.primal[layout.t] / (self.n() as f64).sqrt()).max(0.0);
        Ok(RawFit { beta, sigma, solution, certificate, program })
    }
}

#[derive(Debug, Clone)]
pub struct RawFit {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub solution: Solution,
    pub certificate: Certificate,
    pub program: ConeProgram,
}

#[derive(Debug, Clone)]
pub struct StivFit {
    /// After zero-clipping.
    pub beta_hat: Vec<f64>,
    pub beta_raw: Vec<f64>,
    pub sigma_hat: f64,
    pub objective: f64,
    pub spec: StivSpec,
    pub support: Vec<usize>,
    pub dx: DiagScale,
    pub dz: DiagScale,
    /// `E_n[X_k²]^{1/2}`.
    pub x_rms: Vec<f64>,
    /// `max_i |x_ki|`.
    pub x_max: Vec<f64>,
    pub solution: Solution,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub beta_hat: Vec<f64>,
    pub sigma_hat: f64,
    pub support: Vec<usize>,
    pub objective: f64,
    pub spec: StivSpec,
    pub certificate: Certificate,
    pub iterations: usize,
}

impl StivFit {
    pub fn report(&self) -> FitReport {
        FitReport {
            beta_hat: self.beta_hat.clone(),
            sigma_hat: self.sigma_hat,
            support: self.support.clone(),
            objective: self.objective,
            spec: self.spec.clone(),
            certificate: self.certificate.clone(),
            iterations: self.solution.iterations,
        }
    }

    /// Largest violation of the IV-constraint by `(beta_raw, sigma_hat)`:
    /// band excess and `D_ll √Q̂_l − σ̂` over the cone set.
    pub fn constraint_violation(&self, ds: &Dataset) -> Result<f64> {
        let u = ds.residuals(&self.beta_raw);
        let n = ds.n() as f64;
        let mut worst: f64 = f64::NEG_INFINITY;
        let mut buf = vec![0.0; ds.n()];
        for l in 0..ds.l() {
            for (i, v) in buf.iter_mut().enumerate() {
                *v = ds.z()[(i, l)] * u[i];
            }
            let m = (self.dz.entries[l] * pairwise_sum(&buf) / n).abs();
            worst = worst.max(m - self.sigma_hat * self.spec.r);
        }
        for &l in &self.spec.cone_set {
            let q = qhat(ds, &self.beta_raw, l)?;
            worst = worst.max(self.dz.entries[l] * q.sqrt() - self.sigma_hat);
        }
        Ok(worst)
    }
}

fn x_stats(x: &Mat) -> (Vec<f64>, Vec<f64>) {
    (0..x.cols)
        .map(|k| {
            let c = x.col(k);
            (mean_sq(&c).sqrt(), c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        })
        .unzip()
}

fn clip(beta: &[f64], rms: &[f64], thr: f64) -> (Vec<f64>, Vec<usize>) {
    let mut out = beta.to_vec();
    let mut support = Vec::new();
    for k in 0..beta.len() {
        if (beta[k] * rms[k]).abs() < thr {
            out[k] = 0.0;
        } else {
            support.push(k);
        }
    }
    (out, support)
}

fn problem_for<'a>(ds: &'a Dataset, spec: &StivSpec, dx: &'a DiagScale, dz: &'a DiagScale) -> Result<StivProblem<'a>> {
    spec.validate()?;
    if !spec.cone_set.contains(&ds.const_instr_idx()) {
        return Err(Error::SpecInvalid("the constant instrument must be in the cone set".into()));
    }
    if let Some(&l) = spec.cone_set.iter().find(|&&l| l >= ds.l()) {
        return Err(Error::SpecInvalid(format!("cone index {l} out of range")));
    }
    let cone_weights = spec
        .cone_set
        .iter()
        .map(|&l| (0..ds.n()).map(|i| dz.entries[l] * ds.z()[(i, l)]).collect())
        .collect();
    Ok(StivProblem {
        y: ds.y(),
        x: ds.x(),
        dx: &dx.entries,
        band: ds.z(),
        band_scale: &dz.entries,
        cone_weights,
        c: spec.c,
        r: spec.r,
    })
}

/// The literal program, with one cone of length `n + 1` per instrument in I.
pub fn assemble_stiv_program(ds: &Dataset, spec: &StivSpec) -> Result<ConeProgram> {
    let dx = compute_dx(ds, spec.x_norm)?;
    let dz = compute_dz(ds, &spec.cone_set)?;
    Ok(problem_for(ds, spec, &dx, &dz)?.assemble(true)?.0)
}

/// Fit with explicitly supplied normalizations.
pub fn fit_with_scales(ds: &Dataset, spec: &StivSpec, dx: DiagScale, dz: DiagScale, cfg: &SolverConfig) -> Result<StivFit> {
    if dx.len() != ds.k() || dz.len() != ds.l() {
        return Err(Error::DimensionMismatch("normalization lengths".into()));
    }
    let problem = problem_for(ds, spec, &dx, &dz)?;
    fit_problem(&problem, spec, dx.clone(), dz.clone(), cfg)
}

/// Solves an assembled problem; `dx` and `dz` are recorded in the fit and
/// must be the scales the problem was built with.
pub fn fit_problem(problem: &StivProblem, spec: &StivSpec, dx: DiagScale, dz: DiagScale, cfg: &SolverConfig) -> Result<StivFit> {
    let raw = problem.solve(cfg)?;
    let (x_rms, x_max) = x_stats(problem.x);
    let (beta_hat, support) = clip(&raw.beta, &x_rms, spec.zero_clip);
    let l1: f64 = raw.beta.iter().zip(&dx.entries).map(|(b, d)| (b / d).abs()).sum();
    let objective = match problem.c {
        Some(c) => l1 + c * raw.sigma,
        None => raw.sigma,
    };
    Ok(StivFit {
        beta_hat,
        beta_raw: raw.beta,
        sigma_hat: raw.sigma,
        objective,
        spec: spec.clone(),
        support,
        dx,
        dz,
        x_rms,
        x_max,
        solution: raw.solution,
        certificate: raw.certificate,
    })
}

pub fn fit_stiv(ds: &Dataset, spec: &StivSpec, cfg: &SolverConfig) -> Result<StivFit> {
    if spec.c.is_none() {
        return Err(Error::SpecInvalid("fit_stiv needs c; use fit_stiv_r".into()));
    }
    let dx = compute_dx(ds, spec.x_norm)?;
    let dz = compute_dz(ds, &spec.cone_set)?;
    fit_with_scales(ds, spec, dx, dz, cfg)
}

pub fn fit_stiv_r(ds: &Dataset, spec: &StivSpec, cfg: &SolverConfig) -> Result<StivFit> {
    let spec = StivSpec { c: None, ..spec.clone() };
    let dx = compute_dx(ds, spec.x_norm)?;
    let dz = compute_dz(ds, &spec.cone_set)?;
    fit_with_scales(ds, &spec, dx, dz, cfg)
}

/// All regressors exogenous: instruments are the regressors themselves and
/// `D_Z = D_X`. `ds` must already satisfy `Z = X` (see [`Dataset::mirrored`]).
pub fn fit_sqrt_lasso(ds: &Dataset, spec: &StivSpec, cfg: &SolverConfig) -> Result<StivFit> {
    if ds.z() != ds.x() {
        return Err(Error::SpecInvalid("square-root Lasso needs Z = X".into()));
    }
    let dx = compute_dx(ds, spec.x_norm)?;
    let dz = DiagScale { entries: dx.entries.clone(), mode: dx.mode.clone() };
    fit_with_scales(ds, spec, dx, dz, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let x = Mat::from_rows(&[vec![1.0, 0.5], vec![1.0, -1.0], vec![1.0, 2.0], vec![1.0, 0.3]]);
        let y = vec![1.0, -0.5, 2.5, 0.4];
        Dataset::new(y, x.clone(), x, Some(0), vec![0, 1]).unwrap()
    }

    #[test]
    fn structural_counts() {
        let ds = toy();
        let spec = StivSpec::new(0.5, 0.3, vec![0]);
        let p = assemble_stiv_program(&ds, &spec).unwrap();
        let (n, k, l) = (4, 2, 2);
        assert_eq!(p.num_vars(), 4 * k + 1 + 2 * l + (n + 1));
        assert_eq!(p.num_eqs(), 2 * k + 2 * l + (n + 1));
        let socs: Vec<_> = p.cones.iter().filter(|c| c.kind == ConeKind::Soc).collect();
        assert_eq!(socs.len(), 1);
        assert_eq!(socs[0].len, n + 1);
    }

    #[test]
    fn literal_and_compressed_agree() {
        let ds = toy();
        let spec = StivSpec::new(0.5, 0.3, vec![0, 1]);
        let dx = compute_dx(&ds, XNorm::Rms).unwrap();
        let dz = compute_dz(&ds, &spec.cone_set).unwrap();
        let pr = problem_for(&ds, &spec, &dx, &dz).unwrap();
        let cfg = SolverConfig::default();
        let a = solve_cone(&pr.assemble(true).unwrap().0, &cfg);
        let b = solve_cone(&pr.assemble(false).unwrap().0, &cfg);
        assert!((a.objective - b.objective).abs() < 1e-7);
    }

    #[test]
    fn zero_outcome_gives_zero_fit() {
        let ds = toy().with_outcome(vec![0.0; 4]).unwrap();
        let fit = fit_stiv(&ds, &StivSpec::new(0.5, 0.3, vec![0]), &SolverConfig::default()).unwrap();
        assert!(fit.beta_hat.iter().all(|&b| b == 0.0));
        assert!(fit.sigma_hat < 1e-7);
    }
}
