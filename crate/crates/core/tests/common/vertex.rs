//! Exhaustive vertex enumeration for small polyhedra.
//!
//! Minimizes `cᵀx` over `{x : E x = f, G x ≤ h}` by trying every choice of
//! active inequalities that completes `E` to a square nonsingular system.
//! Only valid for pointed polyhedra on which the minimum is attained.

use nalgebra::{DMatrix, DVector};
use stiv::cone::{ConeKind, ConeProgram};

pub struct Polyhedron {
    pub dim: usize,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub ineq: Vec<(Vec<f64>, f64)>,
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

impl Polyhedron {
    pub fn vertices(&self, tol: f64) -> Vec<Vec<f64>> {
        let d = self.dim;
        let ne = self.eq.len();
        let mut out = Vec::new();
        if ne > d {
            return out;
        }
        combinations(self.ineq.len(), d - ne, &mut |act| {
            let mut m = DMatrix::<f64>::zeros(d, d);
            let mut rhs = DVector::<f64>::zeros(d);
            for (r, (row, v)) in self.eq.iter().chain(act.iter().map(|&i| &self.ineq[i])).enumerate() {
                for j in 0..d {
                    m[(r, j)] = row[j];
                }
                rhs[r] = *v;
            }
            let lu = m.clone().full_piv_lu();
            if !lu.is_invertible() {
                return;
            }
            let Some(x) = lu.solve(&rhs) else { return };
            let x: Vec<f64> = x.iter().copied().collect();
            let scale = 1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let feasible = self.ineq.iter().all(|(g, h)| {
                let gx: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
                gx <= h + tol * scale
            }) && self.eq.iter().all(|(e, f)| {
                let ex: f64 = e.iter().zip(&x).map(|(a, b)| a * b).sum();
                (ex - f).abs() <= tol * scale
            });
            if feasible {
                out.push(x);
            }
        });
        out
    }

    /// `None` when the polyhedron has no vertex.
    pub fn minimize(&self, c: &[f64], tol: f64) -> Option<(f64, Vec<f64>)> {
        self.vertices(tol)
            .into_iter()
            .map(|x| (c.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>(), x))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
    }
}

/// Vertex-enumeration optimum of a standard-form LP.
pub fn lp_optimum(p: &ConeProgram) -> Option<f64> {
    let n = p.num_vars();
    let eq = (0..p.num_eqs()).map(|i| (p.eq_matrix.row(i).to_vec(), p.eq_rhs[i])).collect();
    let kinds = p.kinds();
    let mut ineq = Vec::new();
    for (j, k) in kinds.iter().enumerate() {
        match k {
            ConeKind::Nonneg => {
                let mut g = vec![0.0; n];
                g[j] = -1.0;
                ineq.push((g, 0.0));
            }
            ConeKind::Free => {}
            ConeKind::Soc => panic!("not an LP"),
        }
    }
    Polyhedron { dim: n, eq, ineq }.minimize(&p.objective, 1e-10).map(|(v, _)| v)
}
