//! Dense two-phase tableau simplex for orthant-only programs.
//!
//! Dantzig pricing with a Harris two-pass ratio test, switching to Bland's
//! rule while pivots stay degenerate. The tableau is rebuilt from the original
//! data every few dozen pivots, and a phase only ends on a freshly rebuilt
//! tableau. The final basis is re-solved with an LU factorization so the
//! returned primal and dual are accurate to working precision.

use super::{inconsistent_row_solution, remove_empty_rows, solve_cone, ConeKind, ConeProgram, Rows, Solution, SolverConfig, Status};
use crate::linalg::{dot, Lu, Mat};
use crate::scalar::Scalar;

const REINVERT_EVERY: usize = 48;

/// Solve an LP (free and nonnegative slices only). Programs with second-order
/// cone slices are handed to the interior-point method instead.
pub fn solve_lp<T: Scalar>(p: &ConeProgram<T>, cfg: &SolverConfig<T>) -> Solution<T> {
    if let Err(e) = p.validate().and_then(|_| cfg.validate()) {
        panic!("solve_lp called on an invalid program: {e}");
    }
    if p.has_soc() {
        return solve_cone(p, cfg);
    }
    let (a, b, keep) = match remove_empty_rows(p) {
        Rows::Kept { a, b, keep } => (a, b, keep),
        Rows::Inconsistent(row) => return inconsistent_row_solution(p, row),
    };
    let kinds = p.kinds();
    // column map: (original var, sign)
    let mut cols: Vec<(usize, bool)> = Vec::new();
    for (j, k) in kinds.iter().enumerate() {
        cols.push((j, true));
        if *k == ConeKind::Free {
            cols.push((j, false));
        }
    }
    let m = a.rows;
    let nc = cols.len();
    let flip: Vec<T> = b.iter().map(|&v| if v < T::zero() { -T::one() } else { T::one() }).collect();
    let cost: Vec<T> = cols.iter().map(|&(j, pos)| if pos { p.objective[j] } else { -p.objective[j] }).collect();

    let width = nc + m + 1;
    let mut orig = Mat::zeros(m, width);
    for i in 0..m {
        for (c, &(j, pos)) in cols.iter().enumerate() {
            let v = a[(i, j)] * flip[i];
            orig[(i, c)] = if pos { v } else { -v };
        }
        orig[(i, nc + i)] = T::one();
        orig[(i, width - 1)] = b[i] * flip[i];
    }
    let scale_b = T::one() + b.iter().fold(T::zero(), |mx, &v| mx.max(v.abs()));
    let mut tb = Tableau {
        tab: orig.clone(),
        orig,
        basis: (nc..nc + m).collect(),
        feas: T::lit(1e-9) * scale_b,
        cost_tol: T::epsilon().powf(T::lit(0.6)),
    };
    let limit = 50 * (m + width) + 1000;
    let mut iters = 0;

    // phase 1
    let mut obj1 = vec![T::zero(); width - 1];
    for v in obj1.iter_mut().skip(nc) {
        *v = T::one();
    }
    match tb.run_phase(&obj1, &|_| true, true, limit, &mut iters) {
        PhaseEnd::Optimal => {}
        _ => return failure(p, iters),
    }
    let infeas: T = (0..m).filter(|&i| tb.basis[i] >= nc).map(|i| tb.tab[(i, width - 1)].abs()).sum();
    if infeas > T::lit(10.0) * tb.feas {
        // duals of phase 1 give the Farkas ray
        let pi = tb.duals(&obj1, nc);
        let mut y = vec![T::zero(); p.num_eqs()];
        for (i, &r) in keep.iter().enumerate() {
            y[r] = -pi[i] * flip[i];
        }
        let bty = dot(&p.eq_rhs, &y);
        let norm = if bty < T::zero() { -bty } else { T::one() };
        for v in y.iter_mut() {
            *v = *v / norm;
        }
        return Solution {
            status: Status::PrimalInfeasible,
            primal: vec![T::zero(); p.num_vars()],
            dual_slack: p.eq_matrix.tr_mul_vec(&y),
            dual: y,
            objective: T::infinity(),
            gap: T::infinity(),
            primal_residual: T::zero(),
            dual_residual: T::zero(),
            iterations: iters,
        };
    }
    // drive artificials out of the basis; those that cannot leave sit on
    // redundant rows at level zero and never re-enter
    for i in 0..m {
        if tb.basis[i] >= nc {
            let piv = (0..nc).max_by(|&x, &y| {
                tb.tab[(i, x)].abs().partial_cmp(&tb.tab[(i, y)].abs()).unwrap_or(std::cmp::Ordering::Equal)
            });
            if let Some(c) = piv {
                if tb.tab[(i, c)].abs() > T::lit(1e-7) {
                    tb.pivot(i, c, &mut vec![T::zero(); tb.tab.cols]);
                }
            }
        }
    }
    if !tb.reinvert() {
        return failure(p, iters);
    }

    // phase 2
    let mut obj2 = vec![T::zero(); width - 1];
    obj2[..nc].copy_from_slice(&cost);
    match tb.run_phase(&obj2, &|c| c < nc, true, limit, &mut iters) {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded(enter) => {
            let mut ray = vec![T::zero(); p.num_vars()];
            let add = |ray: &mut Vec<T>, c: usize, v: T| {
                let (j, pos) = cols[c];
                ray[j] = ray[j] + if pos { v } else { -v };
            };
            add(&mut ray, enter, T::one());
            for (r, &bc) in tb.basis.iter().enumerate() {
                if bc < nc {
                    add(&mut ray, bc, -tb.tab[(r, enter)]);
                }
            }
            let ctx = dot(&p.objective, &ray);
            let norm = if ctx < T::zero() { -ctx } else { T::one() };
            for v in ray.iter_mut() {
                *v = *v / norm;
            }
            return Solution {
                status: Status::DualInfeasible,
                primal: ray,
                dual: vec![T::zero(); p.num_eqs()],
                dual_slack: vec![T::zero(); p.num_vars()],
                objective: -T::infinity(),
                gap: T::infinity(),
                primal_residual: T::zero(),
                dual_residual: T::zero(),
                iterations: iters,
            };
        }
        _ => return failure(p, iters),
    }
    // re-solve the optimal basis from the original data
    let bmat = Mat::from_fn(m, m, |i, k| tb.orig[(i, tb.basis[k])]);
    let rhs: Vec<T> = (0..m).map(|i| tb.orig[(i, width - 1)]).collect();
    let cb: Vec<T> = tb.basis.iter().map(|&c| obj2[c]).collect();
    let (xb, pi) = match Lu::factor(&bmat, T::epsilon() * T::lit(16.0)) {
        Some(lu) => (lu.solve(&rhs), lu.solve_transpose(&cb)),
        None => ((0..m).map(|r| tb.tab[(r, width - 1)]).collect(), tb.duals(&obj2, nc)),
    };
    let mut x = vec![T::zero(); p.num_vars()];
    for (r, &c) in tb.basis.iter().enumerate() {
        if c >= nc {
            continue;
        }
        let (j, pos) = cols[c];
        let v = xb[r].max(T::zero());
        x[j] = x[j] + if pos { v } else { -v };
    }
    let mut y = vec![T::zero(); p.num_eqs()];
    for i in 0..m {
        y[keep[i]] = -pi[i] * flip[i];
    }
    let objective = dot(&p.objective, &x);
    let dual_slack: Vec<T> = {
        let aty = p.eq_matrix.tr_mul_vec(&y);
        p.objective.iter().zip(aty).map(|(&c, v)| c + v).collect()
    };
    let dobj = -dot(&p.eq_rhs, &y);
    Solution {
        status: Status::Optimal,
        primal: x,
        dual: y,
        dual_slack,
        objective,
        gap: (objective - dobj).abs(),
        primal_residual: T::zero(),
        dual_residual: T::zero(),
        iterations: iters,
    }
}

fn failure<T: Scalar>(p: &ConeProgram<T>, iters: usize) -> Solution<T> {
    Solution {
        status: Status::NumericalFailure,
        primal: vec![T::zero(); p.num_vars()],
        dual: vec![T::zero(); p.num_eqs()],
        dual_slack: vec![T::zero(); p.num_vars()],
        objective: T::nan(),
        gap: T::nan(),
        primal_residual: T::nan(),
        dual_residual: T::nan(),
        iterations: iters,
    }
}

#[derive(Debug, PartialEq, Eq)]
enum PhaseEnd {
    Optimal,
    Unbounded(usize),
    IterLimit,
    Singular,
}

struct Tableau<T: Scalar> {
    /// `[A | I | b]` with rows sign-flipped so `b ≥ 0`.
    orig: Mat<T>,
    /// `B⁻¹ orig` for the current basis.
    tab: Mat<T>,
    basis: Vec<usize>,
    feas: T,
    cost_tol: T,
}

impl<T: Scalar> Tableau<T> {
    /// Rebuilds `tab` from `orig`; false if the basis matrix is singular.
    fn reinvert(&mut self) -> bool {
        let m = self.orig.rows;
        let bmat = Mat::from_fn(m, m, |i, k| self.orig[(i, self.basis[k])]);
        let Some(lu) = Lu::factor(&bmat, T::epsilon() * T::lit(16.0)) else {
            return false;
        };
        let mut binv = Mat::zeros(m, m);
        let mut e = vec![T::zero(); m];
        for k in 0..m {
            e[k] = T::one();
            let col = lu.solve(&e);
            e[k] = T::zero();
            for i in 0..m {
                binv[(i, k)] = col[i];
            }
        }
        // tab = B⁻¹ orig over the nonzeros of each column of orig
        let width = self.orig.cols;
        let mut nz: Vec<Vec<(usize, T)>> = vec![Vec::new(); width];
        for i in 0..m {
            for (j, &v) in self.orig.row(i).iter().enumerate() {
                if v != T::zero() {
                    nz[j].push((i, v));
                }
            }
        }
        for r in 0..m {
            let brow = binv.row(r).to_vec();
            let trow = self.tab.row_mut(r);
            for (t, col) in trow.iter_mut().zip(&nz) {
                *t = col.iter().fold(T::zero(), |acc, &(i, v)| acc + brow[i] * v);
            }
        }
        for (r, &c) in self.basis.iter().enumerate() {
            for i in 0..m {
                self.tab[(i, c)] = if i == r { T::one() } else { T::zero() };
            }
        }
        true
    }

    /// Reduced costs `c_j − c_Bᵀ B⁻¹ a_j` from the current tableau.
    fn reduced_costs(&self, obj: &[T]) -> Vec<T> {
        let rhs = self.tab.cols - 1;
        let mut d = obj[..rhs].to_vec();
        for (r, &bc) in self.basis.iter().enumerate() {
            let cb = obj[bc];
            if cb != T::zero() {
                for (dj, &v) in d.iter_mut().zip(self.tab.row(r)) {
                    *dj = *dj - cb * v;
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, c: usize, dj: &mut [T]) {
        let tab = &mut self.tab;
        let w = tab.cols;
        let pv = tab[(r, c)];
        for j in 0..w {
            tab[(r, j)] = tab[(r, j)] / pv;
        }
        let prow: Vec<T> = tab.row(r).to_vec();
        let f = dj[c];
        for (d, &pr) in dj.iter_mut().zip(&prow) {
            *d = *d - f * pr;
        }
        dj[c] = T::zero();
        for i in 0..tab.rows {
            if i == r {
                continue;
            }
            let f = tab[(i, c)];
            if f != T::zero() {
                let row = tab.row_mut(i);
                for (v, &pr) in row.iter_mut().zip(&prow) {
                    *v = *v - f * pr;
                }
                row[c] = T::zero();
            }
        }
        self.basis[r] = c;
    }

    /// Simplex multipliers `π = c_Bᵀ B⁻¹`, read from the artificial columns.
    fn duals(&self, obj: &[T], nc: usize) -> Vec<T> {
        let m = self.tab.rows;
        (0..m).map(|i| (0..m).map(|r| obj[self.basis[r]] * self.tab[(r, nc + i)]).sum()).collect()
    }

    /// `fresh`: `tab` was just computed from `orig` for the current basis.
    fn run_phase(&mut self, obj: &[T], allowed: &dyn Fn(usize) -> bool, fresh: bool, limit: usize, iters: &mut usize) -> PhaseEnd {
        let m = self.tab.rows;
        let rhs = self.tab.cols - 1;
        let obj_scale = T::one() + obj.iter().fold(T::zero(), |mx, &v| mx.max(v.abs()));
        let mut degenerate_run = 0usize;
        let mut since = 0usize;
        let mut fresh = fresh;
        let mut dj: Vec<T> = if fresh { self.reduced_costs(obj) } else { Vec::new() };
        loop {
            if *iters >= limit {
                return PhaseEnd::IterLimit;
            }
            if since >= REINVERT_EVERY || !fresh && since == 0 {
                if !self.reinvert() {
                    return PhaseEnd::Singular;
                }
                since = 0;
                fresh = true;
                dj = self.reduced_costs(obj);
            }
            let mut is_basic = vec![false; rhs];
            for &bc in self.basis.iter() {
                is_basic[bc] = true;
            }
            let bland = degenerate_run > 50;
            let mut enter = None;
            let mut best = -self.cost_tol * obj_scale;
            for c in 0..rhs {
                if is_basic[c] || !allowed(c) {
                    continue;
                }
                let d = dj[c];
                if d < best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else {
                if fresh {
                    return PhaseEnd::Optimal;
                }
                since = 0;
                fresh = false;
                continue;
            };
            let colmax = (0..m).fold(T::zero(), |mx, r| mx.max(self.tab[(r, c)].abs()));
            let piv_tol = T::lit(1e-9) * (T::one() + colmax);
            let leave = if bland { self.ratio_bland(c, piv_tol) } else { self.ratio_harris(c, piv_tol) };
            let Some(r) = leave else {
                if fresh {
                    return PhaseEnd::Unbounded(c);
                }
                since = 0;
                fresh = false;
                continue;
            };
            if self.tab[(r, rhs)] <= self.feas {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c, &mut dj);
            *iters += 1;
            since += 1;
            fresh = false;
        }
    }

    fn ratio_bland(&self, c: usize, piv_tol: T) -> Option<usize> {
        let rhs = self.tab.cols - 1;
        let mut leave: Option<usize> = None;
        let mut ratio = T::infinity();
        for r in 0..self.tab.rows {
            let v = self.tab[(r, c)];
            if v > piv_tol {
                let q = self.tab[(r, rhs)].max(T::zero()) / v;
                let better = match leave {
                    None => true,
                    Some(l) => q < ratio || (q == ratio && self.basis[r] < self.basis[l]),
                };
                if better {
                    ratio = q;
                    leave = Some(r);
                }
            }
        }
        leave
    }

    /// Two passes: the largest step allowed with a small feasibility slack,
    /// then the largest pivot among rows blocking within that step.
    fn ratio_harris(&self, c: usize, piv_tol: T) -> Option<usize> {
        let rhs = self.tab.cols - 1;
        let mut theta = T::infinity();
        for r in 0..self.tab.rows {
            let v = self.tab[(r, c)];
            if v > piv_tol {
                theta = theta.min((self.tab[(r, rhs)].max(T::zero()) + self.feas) / v);
            }
        }
        if theta.is_infinite() {
            return None;
        }
        let mut leave: Option<usize> = None;
        let mut best = T::zero();
        for r in 0..self.tab.rows {
            let v = self.tab[(r, c)];
            if v > piv_tol && self.tab[(r, rhs)].max(T::zero()) / v <= theta && v > best {
                best = v;
                leave = Some(r);
            }
        }
        leave
    }
}
