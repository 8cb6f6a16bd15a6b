//! Conic programs in standard form: minimize `cᵀx` subject to `Ax = b` with
//! every variable slice free, nonnegative, or in a second-order cone.
//!
//! Duals follow the convention `c + Aᵀy = s`, `s ∈ K*`, dual objective `−bᵀy`.

mod ipm;
mod simplex;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, Mat};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub use ipm::solve_cone;
pub use simplex::solve_lp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeKind {
    Free,
    Nonneg,
    /// `(t, v)` with `t ≥ |v|₂`; the head is the first coordinate.
    Soc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSlice {
    pub start: usize,
    pub len: usize,
    pub kind: ConeKind,
}

impl ConeSlice {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram<T: Scalar = f64> {
    pub objective: Vec<T>,
    pub eq_matrix: Mat<T>,
    pub eq_rhs: Vec<T>,
    pub cones: Vec<ConeSlice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T: Scalar = f64> {
    pub gap_tol: T,
    pub feas_tol: T,
    pub max_iter: usize,
    /// Relative residual of an improving ray below which infeasibility is declared.
    pub infeas_tol: T,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        let (gap, feas) = if T::epsilon() > T::lit(1e-10) {
            // single precision cannot resolve 1e-8
            (T::lit(1e-4), T::lit(1e-4))
        } else {
            (T::lit(1e-8), T::lit(1e-8))
        };
        SolverConfig { gap_tol: gap, feas_tol: feas, max_iter: 200, infeas_tol: feas }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        if pos(self.gap_tol) && pos(self.feas_tol) && pos(self.infeas_tol) && self.max_iter > 0 {
            Ok(())
        } else {
            Err(Error::InvalidParams("solver tolerances must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T: Scalar = f64> {
    pub status: Status,
    pub primal: Vec<T>,
    /// Equality multipliers `y`.
    pub dual: Vec<T>,
    /// Dual slack `s = c + Aᵀy`, in the dual cone when optimal.
    pub dual_slack: Vec<T>,
    pub objective: T,
    pub gap: T,
    /// For infeasible statuses these hold the relative residual of the ray.
    pub primal_residual: T,
    pub dual_residual: T,
    pub iterations: usize,
}

impl<T: Scalar> ConeProgram<T> {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_eqs(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.eq_matrix.cols != n || self.eq_matrix.rows != self.eq_rhs.len() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, c has {}, b has {}",
                self.eq_matrix.rows,
                self.eq_matrix.cols,
                n,
                self.eq_rhs.len()
            )));
        }
        let mut covered = vec![false; n];
        for s in &self.cones {
            if s.len == 0 || s.start + s.len > n {
                return Err(Error::SpecInvalid(format!("bad cone slice {s:?}")));
            }
            for i in s.range() {
                if covered[i] {
                    return Err(Error::SpecInvalid(format!("variable {i} in two slices")));
                }
                covered[i] = true;
            }
        }
        if let Some(i) = covered.iter().position(|&c| !c) {
            return Err(Error::SpecInvalid(format!("variable {i} not in any slice")));
        }
        Ok(())
    }

    pub fn has_soc(&self) -> bool {
        self.cones.iter().any(|s| s.kind == ConeKind::Soc)
    }

    /// Per-variable kind lookup.
    pub fn kinds(&self) -> Vec<ConeKind> {
        let mut k = vec![ConeKind::Free; self.num_vars()];
        for s in &self.cones {
            for i in s.range() {
                k[i] = s.kind;
            }
        }
        k
    }

    /// Plain-text dump in a fixed layout, for cross-checking with external solvers.
    ///
    /// ```text
    /// STIV-CONE-PROGRAM v1
    /// dims <nvars> <neqs>
    /// c <c_1> ... <c_n>
    /// b <b_1> ... <b_m>
    /// A <row> <col> <value>      (one line per nonzero, 0-based)
    /// cone <free|nonneg|soc> <start> <len>
    /// ```
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let fmt = |v: T| format!("{:e}", v.to_f64_lossy());
        let _ = writeln!(out, "STIV-CONE-PROGRAM v1");
        let _ = writeln!(out, "dims {} {}", self.num_vars(), self.num_eqs());
        let c: Vec<String> = self.objective.iter().map(|&v| fmt(v)).collect();
        let _ = writeln!(out, "c {}", c.join(" "));
        let b: Vec<String> = self.eq_rhs.iter().map(|&v| fmt(v)).collect();
        let _ = writeln!(out, "b {}", b.join(" "));
        for i in 0..self.eq_matrix.rows {
            for j in 0..self.eq_matrix.cols {
                let v = self.eq_matrix[(i, j)];
                if v != T::zero() {
                    let _ = writeln!(out, "A {i} {j} {}", fmt(v));
                }
            }
        }
        for s in &self.cones {
            let kind = match s.kind {
                ConeKind::Free => "free",
                ConeKind::Nonneg => "nonneg",
                ConeKind::Soc => "soc",
            };
            let _ = writeln!(out, "cone {kind} {} {}", s.start, s.len);
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse(format!("dump line {}: {msg}", line + 1));
        let num = |s: &str, line: usize| -> Result<T> {
            let v: f64 = s.parse().map_err(|_| bad(line, "bad number"))?;
            Ok(T::lit(v))
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "STIV-CONE-PROGRAM v1")) => {}
            _ => return Err(bad(0, "missing header")),
        }
        let (mut n, mut m) = (0usize, 0usize);
        let mut c = Vec::new();
        let mut b = Vec::new();
        let mut entries = Vec::new();
        let mut cones = Vec::new();
        for (ln, line) in lines {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("dims") => {
                    n = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "dims"))?;
                    m = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "dims"))?;
                }
                Some("c") => c = it.map(|s| num(s, ln)).collect::<Result<_>>()?,
                Some("b") => b = it.map(|s| num(s, ln)).collect::<Result<_>>()?,
                Some("A") => {
                    let i: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "row"))?;
                    let j: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "col"))?;
                    let v = num(it.next().ok_or_else(|| bad(ln, "value"))?, ln)?;
                    entries.push((i, j, v));
                }
                Some("cone") => {
                    let kind = match it.next() {
                        Some("free") => ConeKind::Free,
                        Some("nonneg") => ConeKind::Nonneg,
                        Some("soc") => ConeKind::Soc,
                        _ => return Err(bad(ln, "cone kind")),
                    };
                    let start = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "start"))?;
                    let len = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "len"))?;
                    cones.push(ConeSlice { start, len, kind });
                }
                Some(_) => return Err(bad(ln, "unknown record")),
                None => {}
            }
        }
        let mut a = Mat::zeros(m, n);
        for (i, j, v) in entries {
            if i >= m || j >= n {
                return Err(Error::Parse(format!("entry ({i},{j}) out of range")));
            }
            a[(i, j)] = v;
        }
        let p = ConeProgram { objective: c, eq_matrix: a, eq_rhs: b, cones };
        p.validate()?;
        Ok(p)
    }
}

/// Distance outside the cone (0 when inside).
pub fn cone_violation<T: Scalar>(kind: ConeKind, v: &[T]) -> T {
    match kind {
        ConeKind::Free => T::zero(),
        ConeKind::Nonneg => v.iter().fold(T::zero(), |m, &x| m.max(-x)),
        ConeKind::Soc => {
            let tail = crate::linalg::norm2(&v[1..]);
            (tail - v[0]).max(T::zero())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Certificate {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub primal_cone_violation: f64,
    pub dual_cone_violation: f64,
    pub gap: f64,
    pub passed: bool,
    pub flags: Vec<String>,
}

/// Recompute every optimality measure from scratch and flag anything above
/// ten times the configured tolerance (residuals relative to `1 + |data|∞`).
pub fn certify<T: Scalar>(sol: &Solution<T>, p: &ConeProgram<T>, cfg: &SolverConfig<T>) -> Certificate {
    let a = &p.eq_matrix;
    let x = &sol.primal;
    let y = &sol.dual;
    let ax = a.mul_vec(x);
    let pres = norm_inf(&ax.iter().zip(&p.eq_rhs).map(|(&u, &v)| u - v).collect::<Vec<_>>())
        / (T::one() + norm_inf(&p.eq_rhs));
    let slack: Vec<T> = {
        let aty = a.tr_mul_vec(y);
        p.objective.iter().zip(aty).map(|(&c, v)| c + v).collect()
    };
    let mut pviol = T::zero();
    let mut dviol = T::zero();
    let mut dres = T::zero();
    for s in &p.cones {
        let r = s.range();
        pviol = pviol.max(cone_violation(s.kind, &x[r.clone()]));
        match s.kind {
            ConeKind::Free => dres = dres.max(norm_inf(&slack[r])),
            k => dviol = dviol.max(cone_violation(k, &slack[r])),
        }
    }
    let scale_c = T::one() + norm_inf(&p.objective);
    dres = dres / scale_c;
    dviol = dviol / scale_c;
    let pobj = dot(&p.objective, x);
    let dobj = -dot(&p.eq_rhs, y);
    let gap = (pobj - dobj).abs() / (T::one() + pobj.abs());
    let lim_f = T::lit(10.0) * cfg.feas_tol;
    let lim_g = T::lit(10.0) * cfg.gap_tol;
    let mut flags = Vec::new();
    if sol.status != Status::Optimal {
        flags.push(format!("status {:?}", sol.status));
    }
    if pres > lim_f {
        flags.push(format!("primal residual {}", pres));
    }
    if dres > lim_f {
        flags.push(format!("dual residual {}", dres));
    }
    if pviol > lim_f {
        flags.push(format!("primal cone violation {}", pviol));
    }
    if dviol > lim_f {
        flags.push(format!("dual cone violation {}", dviol));
    }
    if gap > lim_g {
        flags.push(format!("duality gap {}", gap));
    }
    Certificate {
        primal_residual: pres.to_f64_lossy(),
        dual_residual: dres.to_f64_lossy(),
        primal_cone_violation: pviol.to_f64_lossy(),
        dual_cone_violation: dviol.to_f64_lossy(),
        gap: gap.to_f64_lossy(),
        passed: flags.is_empty(),
        flags,
    }
}

pub(crate) enum Rows<T: Scalar> {
    Kept { a: Mat<T>, b: Vec<T>, keep: Vec<usize> },
    /// A zero row with nonzero right-hand side.
    Inconsistent(usize),
}

/// Drop equality rows that are identically zero with zero right-hand side.
pub(crate) fn remove_empty_rows<T: Scalar>(p: &ConeProgram<T>) -> Rows<T> {
    let mut keep = Vec::new();
    for i in 0..p.eq_matrix.rows {
        if p.eq_matrix.row(i).iter().any(|&v| v != T::zero()) {
            keep.push(i);
        } else if p.eq_rhs[i] != T::zero() {
            return Rows::Inconsistent(i);
        }
    }
    let a = Mat::from_fn(keep.len(), p.num_vars(), |i, j| p.eq_matrix[(keep[i], j)]);
    let b = keep.iter().map(|&i| p.eq_rhs[i]).collect();
    Rows::Kept { a, b, keep }
}

/// Primal infeasibility ray for an inconsistent zero row.
pub(crate) fn inconsistent_row_solution<T: Scalar>(p: &ConeProgram<T>, row: usize) -> Solution<T> {
    let mut y = vec![T::zero(); p.num_eqs()];
    y[row] = -p.eq_rhs[row].signum();
    Solution {
        status: Status::PrimalInfeasible,
        primal: vec![T::zero(); p.num_vars()],
        dual: y,
        dual_slack: vec![T::zero(); p.num_vars()],
        objective: T::infinity(),
        gap: T::infinity(),
        primal_residual: T::zero(),
        dual_residual: T::zero(),
        iterations: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn norm_example() -> ConeProgram {
        // min t s.t. (t, v1, v2) ∈ soc, v1 = 3, v2 = 4
        let a = Mat::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        ConeProgram {
            objective: vec![1.0, 0.0, 0.0],
            eq_matrix: a,
            eq_rhs: vec![3.0, 4.0],
            cones: vec![ConeSlice { start: 0, len: 3, kind: ConeKind::Soc }],
        }
    }

    #[test]
    fn validate_rejects_overlap_and_gaps() {
        let mut p = norm_example();
        p.cones = vec![
            ConeSlice { start: 0, len: 2, kind: ConeKind::Free },
            ConeSlice { start: 1, len: 2, kind: ConeKind::Nonneg },
        ];
        assert!(p.validate().is_err());
        p.cones = vec![ConeSlice { start: 0, len: 2, kind: ConeKind::Free }];
        assert!(p.validate().is_err());
    }

    #[test]
    fn dump_round_trip() {
        let p = norm_example();
        let q = ConeProgram::<f64>::parse_dump(&p.dump()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn certify_exact_and_perturbed() {
        let p = norm_example();
        let cfg = SolverConfig::default();
        // exact optimum: x = (5,3,4); dual y with c + Aᵀy = s ∈ soc, sᵀx = 0
        // s = (1, -3/5, -4/5), so y = (-0.6, -0.8); dual objective = 0.6*3+0.8*4 = 5
        let sol = Solution {
            status: Status::Optimal,
            primal: vec![5.0, 3.0, 4.0],
            dual: vec![-0.6, -0.8],
            dual_slack: vec![1.0, -0.6, -0.8],
            objective: 5.0,
            gap: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
        };
        let cert = certify(&sol, &p, &cfg);
        assert!(cert.passed, "{:?}", cert.flags);
        assert_eq!(cert.primal_residual, 0.0);
        assert_eq!(cert.gap, 0.0);
        let mut bad = sol.clone();
        bad.primal[1] += 1e-3;
        assert!(!certify(&bad, &p, &cfg).passed);
    }
}
