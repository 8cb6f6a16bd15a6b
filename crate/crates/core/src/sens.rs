//! Data-driven lower bounds on the sensitivities of Ψ.
//!
//! Coordinate bounds `κ*_k(s)` come from the sparsity-certificate LP battery
//! (2K programs per coordinate), exact coordinate sensitivities `κ*_{k,J}`
//! from sign-pattern enumeration over `J`, and block bounds from either a
//! direct battery or the closed-form combination of coordinate bounds.

use rayon::prelude::*;
use serde::Serialize;

use crate::cone::{solve_lp, ConeKind, ConeProgram, ConeSlice, SolverConfig, Status};
use crate::data::PsiMatrix;
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Largest index set handled by the sign-pattern batteries.
pub const MAX_BLOCK: usize = 12;

/// LP values below this are reported as exact zeros.
pub const ZERO_KAPPA: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeFactor {
    /// `(1+c)/(1−c)` for the cone of dominant coordinates, `(2+c)/(1−c)` for
    /// the enlarged cone.
    pub ratio: f64,
    pub c: f64,
    pub enlarged: bool,
}

impl ConeFactor {
    pub fn standard(c: f64) -> Result<Self> {
        check_c(c)?;
        Ok(ConeFactor { ratio: (1.0 + c) / (1.0 - c), c, enlarged: false })
    }

    pub fn enlarged(c: f64) -> Result<Self> {
        check_c(c)?;
        Ok(ConeFactor { ratio: (2.0 + c) / (1.0 - c), c, enlarged: true })
    }

    /// `a = (1 + ratio)·s`, so that `|Δ|₁ ≤ a|Δ|∞` on the cone when `|J| ≤ s`.
    pub fn a(&self, s: usize) -> f64 {
        (1.0 + self.ratio) * s as f64
    }
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("c = {c} not in (0, 1)")))
    }
}

// ---- a tiny LP builder --------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Sense {
    Le,
    Eq,
}

struct Lp {
    free: Vec<bool>,
    obj: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, Sense, f64)>,
}

impl Lp {
    fn new() -> Self {
        Lp { free: Vec::new(), obj: Vec::new(), rows: Vec::new() }
    }

    fn var(&mut self, free: bool) -> usize {
        self.free.push(free);
        self.obj.push(0.0);
        self.free.len() - 1
    }

    fn le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push((terms, Sense::Le, rhs));
    }

    fn eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push((terms, Sense::Eq, rhs));
    }

    /// Standard form: free variables first, then nonnegative variables and
    /// one slack per inequality.
    fn program(&self) -> ConeProgram {
        let nf = self.free.iter().filter(|&&f| f).count();
        let mut pos = vec![0; self.free.len()];
        let (mut fi, mut ni) = (0, nf);
        for (j, &f) in self.free.iter().enumerate() {
            if f {
                pos[j] = fi;
                fi += 1;
            } else {
                pos[j] = ni;
                ni += 1;
            }
        }
        let nslack = self.rows.iter().filter(|r| r.1 == Sense::Le).count();
        let nv = self.free.len() + nslack;
        let mut a = Mat::zeros(self.rows.len(), nv);
        let mut b = vec![0.0; self.rows.len()];
        let mut s = ni;
        for (i, (terms, sense, rhs)) in self.rows.iter().enumerate() {
            for &(j, v) in terms {
                a[(i, pos[j])] += v;
            }
            if *sense == Sense::Le {
                a[(i, s)] = 1.0;
                s += 1;
            }
            b[i] = *rhs;
        }
        let mut c = vec![0.0; nv];
        for (j, &v) in self.obj.iter().enumerate() {
            c[pos[j]] = v;
        }
        let mut cones = Vec::new();
        if nf > 0 {
            cones.push(ConeSlice { start: 0, len: nf, kind: ConeKind::Free });
        }
        if nv > nf {
            cones.push(ConeSlice { start: nf, len: nv - nf, kind: ConeKind::Nonneg });
        }
        ConeProgram { objective: c, eq_matrix: a, eq_rhs: b, cones }
    }

    /// Lagrange dual written as a minimization: multipliers `μ` (free) for
    /// equalities, `λ ≥ 0` for inequalities and `ν ≥ 0` for the sign
    /// constraints, one equality per primal variable. Its optimal value is
    /// minus the primal value; an unbounded dual means an infeasible primal.
    fn dual_program(&self) -> ConeProgram {
        let neq = self.rows.iter().filter(|r| r.1 == Sense::Eq).count();
        let nle = self.rows.len() - neq;
        let nn = self.free.iter().filter(|&&f| !f).count();
        let nv = neq + nle + nn;
        let mut a = Mat::zeros(self.free.len(), nv);
        let mut c = vec![0.0; nv];
        let (mut ie, mut il) = (0, neq);
        for (terms, sense, rhs) in &self.rows {
            let (col, sign) = if *sense == Sense::Eq {
                ie += 1;
                (ie - 1, -1.0)
            } else {
                il += 1;
                (il - 1, 1.0)
            };
            for &(j, v) in terms {
                a[(j, col)] += sign * v;
            }
            c[col] = sign * rhs;
        }
        let mut s = neq + nle;
        for (j, &f) in self.free.iter().enumerate() {
            if !f {
                a[(j, s)] = -1.0;
                s += 1;
            }
        }
        let b: Vec<f64> = self.obj.iter().map(|&v| -v).collect();
        let mut cones = Vec::new();
        if neq > 0 {
            cones.push(ConeSlice { start: 0, len: neq, kind: ConeKind::Free });
        }
        if nv > neq {
            cones.push(ConeSlice { start: neq, len: nv - neq, kind: ConeKind::Nonneg });
        }
        ConeProgram { objective: c, eq_matrix: a, eq_rhs: b, cones }
    }
}

/// Common skeleton: Δ free, v ≥ 0 minimized, `−v ≤ ΨΔ ≤ v`, and `w_i ≥ |Δ_i|`
/// for every `i` outside `tight` (where `w_i = 0` and the variable is omitted).
/// Returns the LP and the indices of Δ, v and the `w` terms.
fn skeleton(psi: &Mat, tight: &[usize]) -> (Lp, Vec<usize>, usize, Vec<usize>) {
    let k = psi.cols;
    let mut lp = Lp::new();
    let delta: Vec<usize> = (0..k).map(|_| lp.var(true)).collect();
    let v = lp.var(false);
    lp.obj[v] = 1.0;
    for l in 0..psi.rows {
        let row: Vec<(usize, f64)> = (0..k).filter(|&j| psi[(l, j)] != 0.0).map(|j| (delta[j], psi[(l, j)])).collect();
        let mut up = row.clone();
        up.push((v, -1.0));
        lp.le(up, 0.0);
        let mut lo: Vec<(usize, f64)> = row.into_iter().map(|(j, x)| (j, -x)).collect();
        lo.push((v, -1.0));
        lp.le(lo, 0.0);
    }
    let mut w = Vec::new();
    for i in 0..k {
        if tight.contains(&i) {
            continue;
        }
        let wi = lp.var(false);
        lp.le(vec![(delta[i], 1.0), (wi, -1.0)], 0.0);
        lp.le(vec![(delta[i], -1.0), (wi, -1.0)], 0.0);
        w.push(wi);
    }
    (lp, delta, v, w)
}

/// The certificate program for `(k, j, ε)`, verbatim: `w_j = w_k = 0`,
/// `Δ_k = 1`, `εΔ_j ≥ 0`, `Σw + 1 ≤ ε(a + g)Δ_j` with `g = 0` if `k = j`
/// and `−1` otherwise.
pub fn certif_program(psi: &Mat, k: usize, j: usize, eps: f64, a: f64) -> ConeProgram {
    certif_lp(psi, k, j, eps, a).program()
}

fn certif_lp(psi: &Mat, k: usize, j: usize, eps: f64, a: f64) -> Lp {
    let tight = if k == j { vec![k] } else { vec![k, j] };
    let (mut lp, delta, _, w) = skeleton(psi, &tight);
    lp.eq(vec![(delta[k], 1.0)], 1.0);
    lp.le(vec![(delta[j], -eps)], 0.0);
    let g = if k == j { 0.0 } else { -1.0 };
    let mut row: Vec<(usize, f64)> = w.iter().map(|&wi| (wi, 1.0)).collect();
    row.push((delta[j], -eps * (a + g)));
    lp.le(row, -1.0);
    lp
}

/// Exact coordinate sensitivity program for one sign pattern `eps` on `J`.
pub fn kappa_program(psi: &Mat, k: usize, big_j: &[usize], eps: &[f64], ratio: f64) -> ConeProgram {
    kappa_lp(psi, k, big_j, eps, ratio).program()
}

fn kappa_lp(psi: &Mat, k: usize, big_j: &[usize], eps: &[f64], ratio: f64) -> Lp {
    let mut tight: Vec<usize> = big_j.to_vec();
    if !tight.contains(&k) {
        tight.push(k);
    }
    let (mut lp, delta, _, w) = skeleton(psi, &tight);
    lp.eq(vec![(delta[k], 1.0)], 1.0);
    for (&j, &e) in big_j.iter().zip(eps) {
        lp.le(vec![(delta[j], -e)], 0.0);
    }
    let g = if big_j.contains(&k) { 0.0 } else { -1.0 };
    // Σw − ratio Σ ε_j Δ_j ≤ g
    let mut row: Vec<(usize, f64)> = w.iter().map(|&wi| (wi, 1.0)).collect();
    for (&j, &e) in big_j.iter().zip(eps) {
        row.push((delta[j], -ratio * e));
    }
    lp.le(row, g);
    lp
}

/// Block certificate program for `J₀` with signs `eps` on `J₀`, ratio index
/// `j` and (when `j ∉ J₀`) sign `eps_j`: `Σ_{J₀} ε_kΔ_k = 1` and
/// `|Δ|₁ ≤ a|Δ_j|`.
pub fn block_program(psi: &Mat, j0: &[usize], eps: &[f64], j: usize, eps_j: f64, a: f64) -> ConeProgram {
    block_lp(psi, j0, eps, j, eps_j, a).program()
}

fn block_lp(psi: &Mat, j0: &[usize], eps: &[f64], j: usize, eps_j: f64, a: f64) -> Lp {
    let mut tight: Vec<usize> = j0.to_vec();
    let inside = j0.contains(&j);
    if !inside {
        tight.push(j);
    }
    let (mut lp, delta, _, w) = skeleton(psi, &tight);
    for (&k, &e) in j0.iter().zip(eps) {
        lp.le(vec![(delta[k], -e)], 0.0);
    }
    lp.eq(j0.iter().zip(eps).map(|(&k, &e)| (delta[k], e)).collect(), 1.0);
    let ej = if inside { eps[j0.iter().position(|&k| k == j).unwrap()] } else { eps_j };
    if !inside {
        lp.le(vec![(delta[j], -ej)], 0.0);
    }
    let g = if inside { 0.0 } else { -1.0 };
    let mut row: Vec<(usize, f64)> = w.iter().map(|&wi| (wi, 1.0)).collect();
    row.push((delta[j], -ej * (a + g)));
    lp.le(row, -1.0);
    lp
}

/// Value of one battery LP: `+∞` when infeasible, exact 0 below [`ZERO_KAPPA`].
fn lp_value(lp: &Lp, cfg: &SolverConfig, what: impl Fn() -> String) -> Result<f64> {
    let sol = solve_lp(&lp.dual_program(), cfg);
    match sol.status {
        Status::Optimal => {
            let v = -sol.objective;
            Ok(if v < ZERO_KAPPA { 0.0 } else { v })
        }
        Status::DualInfeasible => Ok(f64::INFINITY),
        s => Err(Error::SolverFailure(format!("{} ended with {s:?} on its dual", what()))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpTrace {
    pub k: usize,
    pub j: usize,
    pub eps: f64,
    pub value: f64,
}

/// `κ*_k(s)`: minimum over `j` and `ε = ±1` of the certificate programs.
pub fn kappa_coord_cert(psi: &PsiMatrix, k: usize, s: usize, cf: &ConeFactor, cfg: &SolverConfig) -> Result<f64> {
    Ok(coord_cert_traced(&psi.values, k, s, cf, cfg)?.0)
}

fn check_s(s: usize, kdim: usize) -> Result<()> {
    if s == 0 || s > kdim {
        return Err(Error::InvalidParams(format!("sparsity certificate s = {s} must be in 1..={kdim}")));
    }
    Ok(())
}

fn coord_cert_traced(psi: &Mat, k: usize, s: usize, cf: &ConeFactor, cfg: &SolverConfig) -> Result<(f64, Vec<LpTrace>)> {
    check_s(s, psi.cols)?;
    if k >= psi.cols {
        return Err(Error::DimensionMismatch(format!("coordinate {k} out of range")));
    }
    let a = cf.a(s);
    let jobs: Vec<(usize, f64)> = (0..psi.cols).flat_map(|j| [(j, 1.0), (j, -1.0)]).collect();
    let traces: Vec<LpTrace> = jobs
        .par_iter()
        .map(|&(j, eps)| {
            let p = certif_lp(psi, k, j, eps, a);
            lp_value(&p, cfg, || format!("certificate LP (k={k}, j={j}, eps={eps})")).map(|value| LpTrace { k, j, eps, value })
        })
        .collect::<Result<_>>()?;
    let v = traces.iter().fold(f64::INFINITY, |m, t| m.min(t.value));
    Ok((v, traces))
}

/// `κ₁(s) = min_k κ*_k(s) / a`, i.e. `(1−c)/(2s)·min_k κ*_k(s)` on the
/// standard cone.
pub fn kappa1_from_coords(coords: &[f64], s: usize, cf: &ConeFactor) -> f64 {
    coords.iter().fold(f64::INFINITY, |m, &v| m.min(v)) / cf.a(s)
}

pub fn kappa1_cert(psi: &PsiMatrix, s: usize, cf: &ConeFactor, cfg: &SolverConfig) -> Result<f64> {
    let coords = (0..psi.cols()).map(|k| kappa_coord_cert(psi, k, s, cf, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(kappa1_from_coords(&coords, s, cf))
}

fn sign_patterns(m: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..1u32 << m).map(move |bits| (0..m).map(|i| if bits >> i & 1 == 1 { -1.0 } else { 1.0 }).collect())
}

/// `κ_{1,J₀}(s)` from the block battery (`2^{|J₀|}` sign patterns per `j`).
pub fn kappa_block_cert(psi: &PsiMatrix, j0: &[usize], s: usize, cf: &ConeFactor, cfg: &SolverConfig) -> Result<f64> {
    check_s(s, psi.cols())?;
    let j0 = normalize_set(j0, psi.cols())?;
    if j0.len() > MAX_BLOCK {
        return Err(Error::BlockTooLarge(j0.len()));
    }
    if j0.is_empty() {
        return Ok(f64::INFINITY);
    }
    let a = cf.a(s);
    let m = &psi.values;
    let mut jobs = Vec::new();
    for eps in sign_patterns(j0.len()) {
        // the pattern and its negation give the same value
        if eps[0] < 0.0 {
            continue;
        }
        for j in 0..m.cols {
            if j0.contains(&j) {
                jobs.push((eps.clone(), j, 1.0));
            } else {
                jobs.push((eps.clone(), j, 1.0));
                jobs.push((eps.clone(), j, -1.0));
            }
        }
    }
    let vals = jobs
        .par_iter()
        .map(|(eps, j, ej)| {
            lp_value(&block_lp(m, &j0, eps, *j, *ej, a), cfg, || format!("block LP (J0={j0:?}, j={j})"))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

fn normalize_set(set: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut v = set.to_vec();
    v.sort_unstable();
    v.dedup();
    if let Some(&bad) = v.iter().find(|&&i| i >= k) {
        return Err(Error::DimensionMismatch(format!("index {bad} out of range")));
    }
    Ok(v)
}

/// Exact `κ*_{k,J}` on the cone `C_J` by enumerating the signs of `Δ_J`.
pub fn kappa_coord_exact(psi: &PsiMatrix, k: usize, big_j: &[usize], cf: &ConeFactor, cfg: &SolverConfig) -> Result<f64> {
    let big_j = normalize_set(big_j, psi.cols())?;
    if big_j.len() > MAX_BLOCK {
        return Err(Error::BlockTooLarge(big_j.len()));
    }
    if k >= psi.cols() {
        return Err(Error::DimensionMismatch(format!("coordinate {k} out of range")));
    }
    let m = &psi.values;
    let patterns: Vec<Vec<f64>> = sign_patterns(big_j.len())
        .filter(|eps| match big_j.iter().position(|&j| j == k) {
            // Δ_k = 1 fixes the sign of k's own coordinate
            Some(p) => eps[p] > 0.0,
            None => true,
        })
        .collect();
    let vals = patterns
        .par_iter()
        .map(|eps| lp_value(&kappa_lp(m, k, &big_j, eps, cf.ratio), cfg, || format!("kappa LP (k={k}, J={big_j:?})")))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

/// Closed-form block bound `max(|J₀|^{-1/p} min_{k∈J₀} κ*_k(s), κ₁(s))` from
/// coordinate bounds; `p = ∞` gives `min_{k∈J₀} κ*_k(s)`.
pub fn kappa_general_from(coords: &[f64], j0: &[usize], p: f64, s: usize, cf: &ConeFactor) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParams(format!("p = {p} must be >= 1")));
    }
    let j0 = normalize_set(j0, coords.len())?;
    if j0.is_empty() {
        return Ok(f64::INFINITY);
    }
    let mn = j0.iter().map(|&k| coords[k]).fold(f64::INFINITY, f64::min);
    let first = if p.is_infinite() { mn } else { (j0.len() as f64).powf(-1.0 / p) * mn };
    Ok(first.max(kappa1_from_coords(coords, s, cf)))
}

pub fn kappa_general(psi: &PsiMatrix, j0: &[usize], p: f64, s: usize, cf: &ConeFactor, cfg: &SolverConfig) -> Result<f64> {
    let coords = (0..psi.cols()).map(|k| kappa_coord_cert(psi, k, s, cf, cfg)).collect::<Result<Vec<_>>>()?;
    kappa_general_from(&coords, j0, p, s, cf)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coherence {
    pub eta1: f64,
    pub eta2: f64,
    /// `l(k)` for each `k ∈ J`, in the order of `J`.
    pub rows: Vec<usize>,
    pub bound: f64,
}

/// Best `(η₁, η₂)` over row choices `l(k)` satisfying the coherence-type
/// condition, and the resulting lower bound on `κ_{p,J}`. For `p = 1` this is
/// `η₁η₂/(2|J|)`. For larger `p` the sup-norm factor also covers coordinates
/// outside `J`, which `(2|J|)^{-1/p}(1−c)^{-1+1/p}η₁η₂` does not: with
/// `Ψ = [[0.847, −0.029], [0.084, 1.208]]`, `J = {1}`, `c = 0.1` that value is
/// 1.022 while `κ*_{0,J} = 0.905`. `None` when some `k ∈ J` has no
/// qualifying row.
pub fn coherence_bound(psi: &PsiMatrix, big_j: &[usize], c: f64, p: f64) -> Option<Coherence> {
    let m = &psi.values;
    let big_j = normalize_set(big_j, m.cols).ok()?;
    if big_j.is_empty() || !(c >= 0.0 && c < 1.0) || !(p >= 1.0) {
        return None;
    }
    let nj = big_j.len() as f64;
    // per k: candidate (η₁, η₂, l)
    let mut cands: Vec<Vec<(f64, f64, usize)>> = Vec::new();
    for &k in &big_j {
        let mut ck = Vec::new();
        for l in 0..m.rows {
            let d = m[(l, k)].abs();
            if d == 0.0 {
                continue;
            }
            let off = (0..m.cols).filter(|&kk| kk != k).map(|kk| m[(l, kk)].abs()).fold(0.0, f64::max);
            let eta2 = 1.0 - off / d * 2.0 * nj / (1.0 - c);
            if eta2 > 0.0 {
                ck.push(((1.0 - c) * d, eta2, l));
            }
        }
        if ck.is_empty() {
            return None;
        }
        cands.push(ck);
    }
    let mut best: Option<Coherence> = None;
    let thresholds: Vec<f64> = cands.iter().flatten().map(|c| c.0).collect();
    for &t in &thresholds {
        let mut rows = Vec::new();
        let (mut e1, mut e2) = (f64::INFINITY, f64::INFINITY);
        let mut ok = true;
        for ck in &cands {
            match ck.iter().filter(|c| c.0 >= t).max_by(|a, b| a.1.partial_cmp(&b.1).unwrap()) {
                Some(&(a, b, l)) => {
                    e1 = e1.min(a);
                    e2 = e2.min(b);
                    rows.push(l);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        // |Δ|₁ ≤ 2|J|/(η₁η₂)·|ΨΔ|∞ on C_J; coordinates in J also obey
        // |Δ_k| ≤ (1−c)/(η₁η₂)·|ΨΔ|∞, those outside only |Δ_k| ≤ (1+c)/2·|Δ|₁.
        // The ℓ_p bound interpolates between ℓ₁ and ℓ∞.
        let sup = (1.0 / (1.0 - c)).min(1.0 / ((1.0 + c) * nj));
        let scale = if p.is_infinite() { sup } else { (2.0 * nj).powf(-1.0 / p) * sup.powf(1.0 - 1.0 / p) };
        let bound = scale * e1 * e2;
        if best.as_ref().is_none_or(|b| bound > b.bound) {
            best = Some(Coherence { eta1: e1, eta2: e2, rows, bound });
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockBound {
    pub j0: Vec<usize>,
    pub value: f64,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactBound {
    pub k: usize,
    pub j: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub s: usize,
    pub cone: ConeFactor,
    /// `κ*_k(s)` for every coordinate.
    pub kappa_coord: Vec<f64>,
    /// `κ₁(s)`.
    pub kappa1: f64,
    pub blocks: Vec<BlockBound>,
    pub exact: Vec<ExactBound>,
    pub method: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<LpTrace>,
}

impl SensitivityReport {
    pub fn block(&self, j0: &[usize]) -> Option<f64> {
        let mut key = j0.to_vec();
        key.sort_unstable();
        key.dedup();
        self.blocks.iter().find(|b| b.j0 == key).map(|b| b.value)
    }

    pub fn exact(&self, k: usize) -> Option<f64> {
        self.exact.iter().find(|e| e.k == k).map(|e| e.value)
    }

    /// Closed-form block bound for `J₀` in the `ℓ_p` norm.
    pub fn general(&self, j0: &[usize], p: f64) -> Result<f64> {
        kappa_general_from(&self.kappa_coord, j0, p, self.s, &self.cone)
    }
}

/// Runs the full coordinate battery (2K² programs) and assembles the report.
pub fn sensitivity_report(psi: &PsiMatrix, s: usize, cf: &ConeFactor, cfg: &SolverConfig, trace: bool) -> Result<SensitivityReport> {
    check_s(s, psi.cols())?;
    let mut coords = Vec::with_capacity(psi.cols());
    let mut all = Vec::new();
    for k in 0..psi.cols() {
        let (v, t) = coord_cert_traced(&psi.values, k, s, cf, cfg)?;
        coords.push(v);
        if trace {
            all.extend(t);
        }
    }
    let kappa1 = kappa1_from_coords(&coords, s, cf);
    Ok(SensitivityReport {
        s,
        cone: *cf,
        kappa_coord: coords,
        kappa1,
        blocks: Vec::new(),
        exact: Vec::new(),
        method: "sparsity certificate".into(),
        trace: all,
    })
}

impl SensitivityReport {
    /// Adds the exact `κ*_{k,J}` for every coordinate.
    pub fn with_exact(mut self, psi: &PsiMatrix, big_j: &[usize], cfg: &SolverConfig) -> Result<Self> {
        let mut key = big_j.to_vec();
        key.sort_unstable();
        key.dedup();
        for k in 0..psi.cols() {
            let value = kappa_coord_exact(psi, k, &key, &self.cone, cfg)?;
            self.exact.push(ExactBound { k, j: key.clone(), value });
        }
        Ok(self)
    }

    /// Adds a block bound: the direct battery when `|J₀| ≤ 12`, otherwise the
    /// closed-form bound with `p = 1`.
    pub fn with_block(mut self, psi: &PsiMatrix, j0: &[usize], cfg: &SolverConfig) -> Result<Self> {
        let mut key = j0.to_vec();
        key.sort_unstable();
        key.dedup();
        let closed = self.general(&key, 1.0)?;
        let (value, method) = if key.len() <= MAX_BLOCK {
            (kappa_block_cert(psi, &key, self.s, &self.cone, cfg)?.max(closed), "block battery")
        } else {
            (closed, "closed form")
        };
        self.blocks.push(BlockBound { j0: key, value, method: method.into() });
        Ok(self)
    }
}

/// Cheap upper bound on `κ₁(s)`: `Δ = e_k` is admissible in every
/// certificate program, so `κ*_k(s) ≤ max_l |Ψ_lk|`.
pub fn kappa1_upper(psi: &PsiMatrix, s: usize, cf: &ConeFactor) -> f64 {
    let m = &psi.values;
    let mn = (0..m.cols).map(|k| (0..m.rows).map(|l| m[(l, k)].abs()).fold(0.0, f64::max)).fold(f64::INFINITY, f64::min);
    mn / cf.a(s)
}
