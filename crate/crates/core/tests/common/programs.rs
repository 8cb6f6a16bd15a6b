//! Random conic programs with a known optimum, built from a complementary
//! primal-dual pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stiv::cone::{ConeKind, ConeProgram, ConeSlice};
use stiv::linalg::{dot, Mat};

pub struct Planted {
    pub program: ConeProgram,
    pub x: Vec<f64>,
    pub optimum: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let n = dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Cone structure and sizes drawn at random; the pair `(x, s)` is complementary,
/// with a mix of interior, zero, and boundary blocks so the optimum is unique
/// in objective value.
pub fn planted(seed: u64, with_soc: bool) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cones = Vec::new();
    let mut x = Vec::new();
    let mut s = Vec::new();
    let nblocks = rng.random_range(2..6);
    for _ in 0..nblocks {
        let start = x.len();
        let pick = rng.random_range(0..if with_soc { 3 } else { 2 });
        match pick {
            0 => {
                let len = rng.random_range(1..4);
                for _ in 0..len {
                    x.push(normal(&mut rng));
                    s.push(0.0);
                }
                cones.push(ConeSlice { start, len, kind: ConeKind::Free });
            }
            1 => {
                let len = rng.random_range(1..5);
                for _ in 0..len {
                    if rng.random_bool(0.5) {
                        x.push(rng.random_range(0.5..2.0));
                        s.push(0.0);
                    } else {
                        x.push(0.0);
                        s.push(rng.random_range(0.5..2.0));
                    }
                }
                cones.push(ConeSlice { start, len, kind: ConeKind::Nonneg });
            }
            _ => {
                let len = rng.random_range(2..6);
                let u = unit(&mut rng, len - 1);
                let a: f64 = rng.random_range(0.5..2.0);
                let g: f64 = rng.random_range(0.5..2.0);
                match rng.random_range(0..3) {
                    0 => {
                        // both on the boundary, complementary
                        x.push(a);
                        x.extend(u.iter().map(|v| a * v));
                        s.push(g);
                        s.extend(u.iter().map(|v| -g * v));
                    }
                    1 => {
                        x.push(2.0 * a);
                        x.extend(u.iter().map(|v| a * v));
                        s.extend(std::iter::repeat(0.0).take(len));
                    }
                    _ => {
                        x.extend(std::iter::repeat(0.0).take(len));
                        s.push(2.0 * g);
                        s.extend(u.iter().map(|v| g * v));
                    }
                }
                cones.push(ConeSlice { start, len, kind: ConeKind::Soc });
            }
        }
    }
    let n = x.len();
    let m = rng.random_range(1..=n.max(2) - 1).min(n);
    let a = Mat::from_fn(m, n, |_, _| normal(&mut rng));
    let b = a.mul_vec(&x);
    let y: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
    let aty = a.tr_mul_vec(&y);
    // c + Aᵀy = s
    let c: Vec<f64> = s.iter().zip(&aty).map(|(si, v)| si - v).collect();
    let optimum = dot(&c, &x);
    Planted { program: ConeProgram { objective: c, eq_matrix: a, eq_rhs: b, cones }, x, optimum }
}

/// Feasible, bounded LP with at most 6 variables; `degenerate` plants a
/// primal point with extra zeros and a dual slack with extra zeros.
pub fn small_lp(seed: u64, degenerate: bool) -> ConeProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=6);
    let m = rng.random_range(1..n);
    let nfree = if n > 2 && rng.random_bool(0.3) { 1 } else { 0 };
    let mut cones = Vec::new();
    if nfree == 1 {
        cones.push(ConeSlice { start: 0, len: 1, kind: ConeKind::Free });
    }
    cones.push(ConeSlice { start: nfree, len: n - nfree, kind: ConeKind::Nonneg });
    let a = Mat::from_fn(m, n, |_, _| (rng.random_range(-4i32..=4)) as f64);
    let x0: Vec<f64> = (0..n)
        .map(|j| {
            if j < nfree {
                normal(&mut rng)
            } else if degenerate && rng.random_bool(0.6) {
                0.0
            } else {
                rng.random_range(0.0..3.0)
            }
        })
        .collect();
    let y: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
    let s: Vec<f64> = (0..n)
        .map(|j| {
            if j < nfree || (degenerate && rng.random_bool(0.4)) {
                0.0
            } else {
                rng.random_range(0.0..2.0)
            }
        })
        .collect();
    let aty = a.tr_mul_vec(&y);
    let objective = s.iter().zip(&aty).map(|(s, t)| s - t).collect();
    let eq_rhs = a.mul_vec(&x0);
    ConeProgram { objective, eq_matrix: a, eq_rhs, cones }
}
