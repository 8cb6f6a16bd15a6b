//! Homogeneous self-dual embedding interior-point method with Nesterov-Todd
//! scaling and a Mehrotra predictor-corrector.
//!
//! Internally the standard form is rewritten as `Ax = b`, `s = Px`, `s ∈ K`,
//! where `P` selects the non-free variables; `z` is the dual of `s`.

use super::{
    inconsistent_row_solution, remove_empty_rows, ConeKind, ConeProgram, Rows, Solution, SolverConfig,
    Status,
};
use crate::linalg::{dot, norm_inf, refine, Ldl, Lu, Mat};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
struct Block {
    /// offset into s/z
    off: usize,
    /// offset into x
    var: usize,
    len: usize,
    kind: ConeKind,
}

enum Scaling<T: Scalar> {
    Nonneg { w: Vec<T> },
    Soc { w: Mat<T>, winv: Mat<T> },
}

impl<T: Scalar> Scaling<T> {
    fn apply(&self, v: &[T]) -> Vec<T> {
        match self {
            Scaling::Nonneg { w } => w.iter().zip(v).map(|(&a, &b)| a * b).collect(),
            Scaling::Soc { w, .. } => w.mul_vec(v),
        }
    }

    fn apply_inv(&self, v: &[T]) -> Vec<T> {
        match self {
            Scaling::Nonneg { w } => w.iter().zip(v).map(|(&a, &b)| b / a).collect(),
            Scaling::Soc { winv, .. } => winv.mul_vec(v),
        }
    }
}

fn soc_det<T: Scalar>(v: &[T]) -> T {
    let t = crate::linalg::norm2(&v[1..]);
    (v[0] - t) * (v[0] + t)
}

fn nt_scaling<T: Scalar>(kind: ConeKind, s: &[T], z: &[T]) -> Scaling<T> {
    match kind {
        ConeKind::Nonneg => Scaling::Nonneg {
            w: s.iter().zip(z).map(|(&a, &b)| (a / b).sqrt()).collect(),
        },
        ConeKind::Soc => {
            let m = s.len();
            let tiny = T::min_positive_value().sqrt();
            let sn = soc_det(s).max(tiny).sqrt();
            let zn = soc_det(z).max(tiny).sqrt();
            let sb: Vec<T> = s.iter().map(|&v| v / sn).collect();
            let zb: Vec<T> = z.iter().map(|&v| v / zn).collect();
            let gamma = ((T::one() + dot(&sb, &zb)) / T::lit(2.0)).sqrt();
            let two_g = T::lit(2.0) * gamma;
            let mut wb = vec![T::zero(); m];
            wb[0] = (sb[0] + zb[0]) / two_g;
            for i in 1..m {
                wb[i] = (sb[i] - zb[i]) / two_g;
            }
            let eta = (sn / zn).sqrt();
            let denom = T::one() + wb[0];
            let mut w = Mat::zeros(m, m);
            let mut winv = Mat::zeros(m, m);
            w[(0, 0)] = wb[0];
            winv[(0, 0)] = wb[0];
            for i in 1..m {
                w[(0, i)] = wb[i];
                w[(i, 0)] = wb[i];
                winv[(0, i)] = -wb[i];
                winv[(i, 0)] = -wb[i];
                for j in 1..m {
                    let v = wb[i] * wb[j] / denom + if i == j { T::one() } else { T::zero() };
                    w[(i, j)] = v;
                    winv[(i, j)] = v;
                }
            }
            for v in w.data.iter_mut() {
                *v = *v * eta;
            }
            for v in winv.data.iter_mut() {
                *v = *v / eta;
            }
            Scaling::Soc { w, winv }
        }
        ConeKind::Free => unreachable!("free variables carry no scaling"),
    }
}

fn jordan_prod<T: Scalar>(kind: ConeKind, u: &[T], v: &[T]) -> Vec<T> {
    match kind {
        ConeKind::Nonneg => u.iter().zip(v).map(|(&a, &b)| a * b).collect(),
        ConeKind::Soc => {
            let mut out = vec![dot(u, v)];
            for i in 1..u.len() {
                out.push(u[0] * v[i] + v[0] * u[i]);
            }
            out
        }
        ConeKind::Free => unreachable!(),
    }
}

/// Solve `λ ∘ u = d` for `u`.
fn jordan_div<T: Scalar>(kind: ConeKind, lam: &[T], d: &[T]) -> Vec<T> {
    match kind {
        ConeKind::Nonneg => lam.iter().zip(d).map(|(&a, &b)| b / a).collect(),
        ConeKind::Soc => {
            let det = soc_det(lam);
            let u0 = (lam[0] * d[0] - dot(&lam[1..], &d[1..])) / det;
            let mut out = vec![u0];
            for i in 1..lam.len() {
                out.push((d[i] - u0 * lam[i]) / lam[0]);
            }
            out
        }
        ConeKind::Free => unreachable!(),
    }
}

/// Largest `α ≥ 0` with `x + α d` in the cone (capped by `cap`).
fn max_step<T: Scalar>(kind: ConeKind, x: &[T], d: &[T], cap: T) -> T {
    match kind {
        ConeKind::Nonneg => {
            let mut a = cap;
            for (&xi, &di) in x.iter().zip(d) {
                if di < T::zero() {
                    a = a.min(-xi / di);
                }
            }
            a.max(T::zero())
        }
        ConeKind::Soc => {
            let mut a = cap;
            if d[0] < T::zero() {
                a = a.min(-x[0] / d[0]);
            }
            let qa = soc_det(d);
            let qb = T::lit(2.0) * (x[0] * d[0] - dot(&x[1..], &d[1..]));
            let qc = soc_det(x).max(T::zero());
            let two = T::lit(2.0);
            let root = if qa == T::zero() {
                if qb < T::zero() {
                    Some(-qc / qb)
                } else {
                    None
                }
            } else {
                let disc = qb * qb - T::lit(4.0) * qa * qc;
                if disc < T::zero() {
                    None
                } else {
                    let sq = disc.sqrt();
                    let q = -(qb + qb.signum() * sq) / two;
                    let mut best: Option<T> = None;
                    for r in [q / qa, if q != T::zero() { qc / q } else { T::infinity() }] {
                        if r > T::zero() && r.is_finite() {
                            best = Some(best.map_or(r, |b: T| b.min(r)));
                        }
                    }
                    best
                }
            };
            if let Some(r) = root {
                a = a.min(r);
            }
            a.max(T::zero())
        }
        ConeKind::Free => cap,
    }
}

struct Problem<'a, T: Scalar> {
    c: &'a [T],
    a: &'a Mat<T>,
    b: &'a [T],
    blocks: Vec<Block>,
    nz: usize,
    degree: usize,
}

impl<T: Scalar> Problem<'_, T> {
    fn px(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.nz];
        for bl in &self.blocks {
            out[bl.off..bl.off + bl.len].copy_from_slice(&x[bl.var..bl.var + bl.len]);
        }
        out
    }

    fn ptz(&self, z: &[T], n: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n];
        for bl in &self.blocks {
            out[bl.var..bl.var + bl.len].copy_from_slice(&z[bl.off..bl.off + bl.len]);
        }
        out
    }

    fn identity(&self) -> Vec<T> {
        let mut e = vec![T::zero(); self.nz];
        for bl in &self.blocks {
            match bl.kind {
                ConeKind::Nonneg => e[bl.off..bl.off + bl.len].iter_mut().for_each(|v| *v = T::one()),
                ConeKind::Soc => e[bl.off] = T::one(),
                ConeKind::Free => {}
            }
        }
        e
    }
}

enum Factor<T: Scalar> {
    Lu(Lu<T>),
    Ldl(Ldl<T>),
}

impl<T: Scalar> Factor<T> {
    fn solve(&self, b: &[T]) -> Vec<T> {
        match self {
            Factor::Lu(f) => f.solve(b),
            Factor::Ldl(f) => f.solve(b),
        }
    }
}

struct Residuals<T> {
    rx: Vec<T>,
    ry: Vec<T>,
    rz: Vec<T>,
    rtau: T,
}

struct Direction<T> {
    dx: Vec<T>,
    dy: Vec<T>,
    dz: Vec<T>,
    ds: Vec<T>,
    dtau: T,
    dkappa: T,
    /// scaled `W⁻ᵀΔs` and `WΔz` for the second-order correction
    ws: Vec<T>,
    wz: Vec<T>,
}

fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Solve the conic program with the homogeneous self-dual interior-point method.
pub fn solve_cone<T: Scalar>(p: &ConeProgram<T>, cfg: &SolverConfig<T>) -> Solution<T> {
    if let Err(e) = p.validate().and_then(|_| cfg.validate()) {
        panic!("solve_cone called on an invalid program: {e}");
    }
    let (a, b, keep) = match remove_empty_rows(p) {
        Rows::Kept { a, b, keep } => (a, b, keep),
        Rows::Inconsistent(row) => return inconsistent_row_solution(p, row),
    };
    let mut blocks = Vec::new();
    let mut nz = 0;
    let mut degree = 0;
    for s in &p.cones {
        match s.kind {
            ConeKind::Free => {}
            ConeKind::Nonneg => {
                blocks.push(Block { off: nz, var: s.start, len: s.len, kind: s.kind });
                nz += s.len;
                degree += s.len;
            }
            ConeKind::Soc => {
                blocks.push(Block { off: nz, var: s.start, len: s.len, kind: s.kind });
                nz += s.len;
                degree += 1;
            }
        }
    }
    let prob = Problem { c: &p.objective, a: &a, b: &b, blocks, nz, degree };
    let mut sol = run(&prob, cfg);
    // map equality multipliers back to the original rows
    let mut y = vec![T::zero(); p.num_eqs()];
    for (i, &r) in keep.iter().enumerate() {
        y[r] = sol.dual[i];
    }
    sol.dual = y;
    sol
}

fn run<T: Scalar>(pr: &Problem<'_, T>, cfg: &SolverConfig<T>) -> Solution<T> {
    let n = pr.c.len();
    let m = pr.b.len();
    let one = T::one();
    let e = pr.identity();
    let mut x = vec![T::zero(); n];
    let mut y = vec![T::zero(); m];
    let mut s = e.clone();
    let mut z = e.clone();
    let mut tau = one;
    let mut kappa = one;
    let nb = one + norm_inf(pr.b);
    let nc = one + norm_inf(pr.c);
    let reg = T::epsilon().sqrt() * T::lit(0.1);
    let mut last = None;

    for iter in 0..cfg.max_iter {
        let res = residuals(pr, &x, &y, &s, &z, tau, kappa);
        // convergence tests on the de-homogenized iterate
        let xs: Vec<T> = x.iter().map(|&v| v / tau).collect();
        let ys: Vec<T> = y.iter().map(|&v| v / tau).collect();
        let pobj = dot(pr.c, &xs);
        let dobj = -dot(pr.b, &ys);
        let gap = dot(&s, &z) / (tau * tau);
        let pres = {
            let ax = pr.a.mul_vec(&xs);
            let r1 = norm_inf(&sub(&ax, pr.b));
            let sx = pr.px(&xs);
            let ss: Vec<T> = s.iter().map(|&v| v / tau).collect();
            r1.max(norm_inf(&sub(&ss, &sx))) / nb
        };
        let dres = {
            let aty = pr.a.tr_mul_vec(&ys);
            let ptz = pr.ptz(&z, n);
            let r: Vec<T> = (0..n).map(|i| aty[i] - ptz[i] / tau + pr.c[i]).collect();
            norm_inf(&r) / nc
        };
        let scale = one + pobj.abs().min(dobj.abs());
        if pres <= cfg.feas_tol
            && dres <= cfg.feas_tol
            && gap / scale <= cfg.gap_tol
            && (pobj - dobj).abs() / scale <= cfg.gap_tol
        {
            return finish(pr, Status::Optimal, xs, ys, pobj, gap, pres, dres, iter);
        }
        let bty = dot(pr.b, &y);
        if bty < T::zero() {
            let aty = pr.a.tr_mul_vec(&y);
            let ptz = pr.ptz(&z, n);
            let r = norm_inf(&sub(&aty, &ptz)) / (-bty);
            if r <= cfg.infeas_tol {
                let yn: Vec<T> = y.iter().map(|&v| v / (-bty)).collect();
                return finish(pr, Status::PrimalInfeasible, vec![T::zero(); n], yn, T::infinity(), T::infinity(), r, T::zero(), iter);
            }
        }
        let ctx = dot(pr.c, &x);
        if ctx < T::zero() {
            let ax = norm_inf(&pr.a.mul_vec(&x));
            let sx = norm_inf(&sub(&s, &pr.px(&x)));
            let r = ax.max(sx) / (-ctx);
            if r <= cfg.infeas_tol {
                let xn: Vec<T> = x.iter().map(|&v| v / (-ctx)).collect();
                return finish(pr, Status::DualInfeasible, xn, vec![T::zero(); m], -T::infinity(), T::infinity(), T::zero(), r, iter);
            }
        }
        last = Some((xs, ys, pobj, gap, pres, dres));

        // scaling and KKT factorization
        let scalings: Vec<Scaling<T>> = pr
            .blocks
            .iter()
            .map(|bl| nt_scaling(bl.kind, &s[bl.off..bl.off + bl.len], &z[bl.off..bl.off + bl.len]))
            .collect();
        let mut lam = vec![T::zero(); pr.nz];
        for (bl, sc) in pr.blocks.iter().zip(&scalings) {
            let l = sc.apply(&z[bl.off..bl.off + bl.len]);
            lam[bl.off..bl.off + bl.len].copy_from_slice(&l);
        }
        let dim = n + m;
        let mut kkt = Mat::zeros(dim, dim);
        for (bl, sc) in pr.blocks.iter().zip(&scalings) {
            match sc {
                Scaling::Nonneg { w } => {
                    for i in 0..bl.len {
                        let v = bl.var + i;
                        kkt[(v, v)] = one / (w[i] * w[i]);
                    }
                }
                Scaling::Soc { winv, .. } => {
                    let mm = winv.matmul(winv);
                    for i in 0..bl.len {
                        for j in 0..bl.len {
                            kkt[(bl.var + i, bl.var + j)] = mm[(i, j)];
                        }
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..n {
                let v = pr.a[(i, j)];
                kkt[(n + i, j)] = v;
                kkt[(j, n + i)] = v;
            }
        }
        // exact LU on the unregularized system when it is nonsingular, otherwise a
        // regularized quasi-definite LDLᵀ; both refined against the true matrix
        let diag_scale = (0..n).fold(one, |mx, i| mx.max(kkt[(i, i)].abs()));
        let factor = match Lu::factor(&kkt, T::epsilon() * diag_scale) {
            Some(lu) => Factor::Lu(lu),
            None => {
                let mut kreg = kkt.clone();
                let delta = reg * diag_scale.min(T::lit(1e4)).max(one);
                for i in 0..n {
                    kreg[(i, i)] = kreg[(i, i)] + delta;
                }
                for i in n..dim {
                    kreg[(i, i)] = kreg[(i, i)] - delta;
                }
                let signs: Vec<i8> = (0..dim).map(|i| if i < n { 1 } else { -1 }).collect();
                Factor::Ldl(Ldl::factor(&kreg, &signs, T::epsilon() * T::lit(1e3) * diag_scale))
            }
        };
        let solve = |rhs: &[T]| -> Vec<T> { refine(&kkt, rhs, 8, |r| factor.solve(r)) };
        let mut rhs1 = vec![T::zero(); dim];
        for i in 0..n {
            rhs1[i] = -pr.c[i];
        }
        for i in 0..m {
            rhs1[n + i] = pr.b[i];
        }
        let sol1 = solve(&rhs1);
        let (x1, y1) = sol1.split_at(n);

        let mu = (dot(&s, &z) + tau * kappa) / T::from_usize(pr.degree + 1).unwrap();

        let direction = |eta: T, ds: &[T], dkappa_rhs: T| -> Direction<T> {
            let mut u = vec![T::zero(); pr.nz];
            let mut q = vec![T::zero(); pr.nz];
            for (bl, sc) in pr.blocks.iter().zip(&scalings) {
                let r = bl.off..bl.off + bl.len;
                let ub = jordan_div(bl.kind, &lam[r.clone()], &ds[r.clone()]);
                let wu = sc.apply(&ub);
                for (k, i) in r.clone().enumerate() {
                    u[i] = ub[k];
                    q[i] = eta * res.rz[i] + wu[k];
                }
            }
            // M q with M = W⁻²
            let mut mq = vec![T::zero(); pr.nz];
            for (bl, sc) in pr.blocks.iter().zip(&scalings) {
                let r = bl.off..bl.off + bl.len;
                let v = sc.apply_inv(&sc.apply_inv(&q[r.clone()]));
                mq[r].copy_from_slice(&v);
            }
            let ptmq = pr.ptz(&mq, n);
            let mut rhs0 = vec![T::zero(); dim];
            for i in 0..n {
                rhs0[i] = -eta * res.rx[i] + ptmq[i];
            }
            for i in 0..m {
                rhs0[n + i] = eta * res.ry[i];
            }
            let sol0 = solve(&rhs0);
            let (x0, y0) = sol0.split_at(n);
            let num = -eta * res.rtau - dkappa_rhs / tau - dot(pr.c, x0) - dot(pr.b, y0);
            let den = -kappa / tau + dot(pr.c, x1) + dot(pr.b, y1);
            let dtau = num / den;
            let dx: Vec<T> = (0..n).map(|i| x0[i] + dtau * x1[i]).collect();
            let dy: Vec<T> = (0..m).map(|i| y0[i] + dtau * y1[i]).collect();
            // Δs and Δz from the linear equations directly, so the residual
            // reduction is exact up to the KKT solve; the complementarity
            // linearization absorbs the rounding instead
            let pdx = pr.px(&dx);
            let aty = pr.a.tr_mul_vec(&dy);
            let dz_full: Vec<T> = (0..n).map(|i| aty[i] + pr.c[i] * dtau + eta * res.rx[i]).collect();
            let dz = pr.px(&dz_full);
            let ds_out: Vec<T> = (0..pr.nz).map(|i| pdx[i] - eta * res.rz[i]).collect();
            let mut ws = vec![T::zero(); pr.nz];
            let mut wz = vec![T::zero(); pr.nz];
            for (bl, sc) in pr.blocks.iter().zip(&scalings) {
                let r = bl.off..bl.off + bl.len;
                let wzb = sc.apply(&dz[r.clone()]);
                let wsb = sc.apply_inv(&ds_out[r.clone()]);
                for (k, i) in r.enumerate() {
                    wz[i] = wzb[k];
                    ws[i] = wsb[k];
                }
            }
            let dkappa = (dkappa_rhs - kappa * dtau) / tau;
            Direction { dx, dy, dz, ds: ds_out, dtau, dkappa, ws, wz }
        };

        let step_len = |d: &Direction<T>| -> T {
            let mut a = T::lit(1e6);
            if d.dtau < T::zero() {
                a = a.min(-tau / d.dtau);
            }
            if d.dkappa < T::zero() {
                a = a.min(-kappa / d.dkappa);
            }
            for bl in &pr.blocks {
                let r = bl.off..bl.off + bl.len;
                a = a.min(max_step(bl.kind, &s[r.clone()], &d.ds[r.clone()], a));
                a = a.min(max_step(bl.kind, &z[r.clone()], &d.dz[r], a));
            }
            a
        };

        // predictor
        let mut ds_aff = vec![T::zero(); pr.nz];
        for bl in &pr.blocks {
            let r = bl.off..bl.off + bl.len;
            let ll = jordan_prod(bl.kind, &lam[r.clone()], &lam[r.clone()]);
            for (k, i) in r.enumerate() {
                ds_aff[i] = -ll[k];
            }
        }
        let aff = direction(one, &ds_aff, -tau * kappa);
        let alpha_aff = step_len(&aff).min(one);
        let sigma = (one - alpha_aff).powi(3).max(T::zero()).min(one);

        // corrector
        let mut ds_cor = ds_aff.clone();
        for bl in &pr.blocks {
            let r = bl.off..bl.off + bl.len;
            let corr = jordan_prod(bl.kind, &aff.ws[r.clone()], &aff.wz[r.clone()]);
            for (k, i) in r.enumerate() {
                ds_cor[i] = ds_cor[i] - corr[k] + sigma * mu * e[i];
            }
        }
        let dk = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
        let dir = direction(one - sigma, &ds_cor, dk);
        let alpha = (T::lit(0.99) * step_len(&dir)).min(one);
        if !(alpha > T::epsilon()) || !alpha.is_finite() {
            break;
        }
        for i in 0..n {
            x[i] = x[i] + alpha * dir.dx[i];
        }
        for i in 0..m {
            y[i] = y[i] + alpha * dir.dy[i];
        }
        for i in 0..pr.nz {
            s[i] = s[i] + alpha * dir.ds[i];
            z[i] = z[i] + alpha * dir.dz[i];
        }
        tau = tau + alpha * dir.dtau;
        kappa = kappa + alpha * dir.dkappa;
        if !(tau > T::zero()) || x.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    let (xs, ys, pobj, gap, pres, dres) = last.unwrap_or_else(|| {
        (vec![T::zero(); n], vec![T::zero(); m], T::nan(), T::nan(), T::nan(), T::nan())
    });
    finish(pr, Status::NumericalFailure, xs, ys, pobj, gap, pres, dres, cfg.max_iter)
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar>(
    pr: &Problem<'_, T>,
    status: Status,
    x: Vec<T>,
    y: Vec<T>,
    obj: T,
    gap: T,
    pres: T,
    dres: T,
    iterations: usize,
) -> Solution<T> {
    let aty = pr.a.tr_mul_vec(&y);
    let dual_slack = pr.c.iter().zip(aty).map(|(&c, v)| c + v).collect();
    Solution {
        status,
        primal: x,
        dual: y,
        dual_slack,
        objective: obj,
        gap,
        primal_residual: pres,
        dual_residual: dres,
        iterations,
    }
}

fn residuals<T: Scalar>(
    pr: &Problem<'_, T>,
    x: &[T],
    y: &[T],
    s: &[T],
    z: &[T],
    tau: T,
    kappa: T,
) -> Residuals<T> {
    let n = x.len();
    let aty = pr.a.tr_mul_vec(y);
    let ptz = pr.ptz(z, n);
    let rx = (0..n).map(|i| aty[i] - ptz[i] + pr.c[i] * tau).collect();
    let ax = pr.a.mul_vec(x);
    let ry = (0..pr.b.len()).map(|i| -ax[i] + pr.b[i] * tau).collect();
    let rz = sub(s, &pr.px(x));
    let rtau = kappa + dot(pr.c, x) + dot(pr.b, y);
    Residuals { rx, ry, rz, rtau }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{certify, ConeSlice};

    #[test]
    fn nt_scaling_maps_z_and_s_to_same_point() {
        let s: [f64; 3] = [3.0, 1.0, -1.5];
        let z = [2.0, -0.5, 0.7];
        let sc = nt_scaling(ConeKind::Soc, &s, &z);
        let wz = sc.apply(&z);
        let ws = sc.apply_inv(&s);
        for i in 0..3 {
            assert!((wz[i] - ws[i]).abs() < 1e-12, "{wz:?} vs {ws:?}");
        }
        let back = sc.apply(&sc.apply_inv(&z));
        for i in 0..3 {
            assert!((back[i] - z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn jordan_div_inverts_prod() {
        let lam: [f64; 3] = [2.0, 0.3, -0.4];
        let u = [0.5, -1.0, 2.0];
        let d = jordan_prod(ConeKind::Soc, &lam, &u);
        let back = jordan_div(ConeKind::Soc, &lam, &d);
        for i in 0..3 {
            assert!((back[i] - u[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn soc_step_hits_boundary() {
        let x: [f64; 3] = [2.0, 0.0, 0.0];
        let d = [0.0, 1.0, 0.0];
        let a = max_step(ConeKind::Soc, &x, &d, 100.0);
        assert!((a - 2.0).abs() < 1e-12);
        let d2 = [-1.0, 0.0, 0.0];
        assert!((max_step(ConeKind::Soc, &x, &d2, 100.0) - 2.0).abs() < 1e-12);
        let d3 = [1.0, 0.5, 0.0];
        assert_eq!(max_step(ConeKind::Soc, &x, &d3, 100.0), 100.0);
    }

    #[test]
    fn euclidean_norm_program() {
        let p = crate::cone::tests::norm_example();
        let cfg = SolverConfig::default();
        let sol = solve_cone(&p, &cfg);
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 5.0).abs() < 1e-7, "{}", sol.objective);
        assert!(certify(&sol, &p, &cfg).passed);
    }

    #[test]
    fn orthant_with_slack() {
        // min x s.t. x - s = 1, x free, s ≥ 0
        let p = ConeProgram {
            objective: vec![1.0, 0.0],
            eq_matrix: Mat::<f64>::from_rows(&[vec![1.0, -1.0]]),
            eq_rhs: vec![1.0],
            cones: vec![
                ConeSlice { start: 0, len: 1, kind: ConeKind::Free },
                ConeSlice { start: 1, len: 1, kind: ConeKind::Nonneg },
            ],
        };
        let sol = solve_cone(&p, &SolverConfig::default());
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.primal[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn detects_infeasibility() {
        // x ≥ 0, x = -1
        let p = ConeProgram {
            objective: vec![1.0],
            eq_matrix: Mat::<f64>::from_rows(&[vec![1.0]]),
            eq_rhs: vec![-1.0],
            cones: vec![ConeSlice { start: 0, len: 1, kind: ConeKind::Nonneg }],
        };
        assert_eq!(solve_cone(&p, &SolverConfig::default()).status, Status::PrimalInfeasible);
        // min -x, x ≥ 0, no constraints binding
        let q = ConeProgram {
            objective: vec![-1.0, 0.0],
            eq_matrix: Mat::<f64>::from_rows(&[vec![0.0, 1.0]]),
            eq_rhs: vec![1.0],
            cones: vec![ConeSlice { start: 0, len: 2, kind: ConeKind::Nonneg }],
        };
        assert_eq!(solve_cone(&q, &SolverConfig::default()).status, Status::DualInfeasible);
    }

    #[test]
    fn single_precision_solves() {
        let p = crate::cone::tests::norm_example();
        let p32 = ConeProgram::<f32> {
            objective: p.objective.iter().map(|&v| v as f32).collect(),
            eq_matrix: Mat { rows: 2, cols: 3, data: p.eq_matrix.data.iter().map(|&v| v as f32).collect() },
            eq_rhs: vec![3.0, 4.0],
            cones: p.cones.clone(),
        };
        let sol = solve_cone(&p32, &SolverConfig::default());
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 5.0).abs() < 1e-3);
    }
}
