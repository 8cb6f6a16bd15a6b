//! Small dense row-major matrix and the factorizations the solvers need.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T: Scalar = f64> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ * v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * vi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d = *d + a * b;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

impl<T: Scalar> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn norm_inf<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Pairwise summation, used for sample moments over many observations.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Iterative refinement of `a x = b` given an approximate solver; keeps the
/// iterate with the smallest residual.
pub fn refine<T: Scalar>(a: &Mat<T>, b: &[T], steps: usize, solve: impl Fn(&[T]) -> Vec<T>) -> Vec<T> {
    let mut x = solve(b);
    let resid = |x: &[T]| -> Vec<T> {
        let ax = a.mul_vec(x);
        b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect()
    };
    let mut r = resid(&x);
    let mut rn = norm_inf(&r);
    let stop = T::epsilon() * (T::one() + norm_inf(b));
    for _ in 0..steps {
        if rn <= stop {
            break;
        }
        let dx = solve(&r);
        let cand: Vec<T> = x.iter().zip(&dx).map(|(&u, &v)| u + v).collect();
        let rc = resid(&cand);
        let rcn = norm_inf(&rc);
        if !(rcn < rn) {
            break;
        }
        x = cand;
        r = rc;
        rn = rcn;
    }
    x
}

/// LDLᵀ factorization of a symmetric quasi-definite matrix.
///
/// `signs[i]` is the expected sign of pivot `i`; pivots with the wrong sign or
/// magnitude below `delta` are replaced by `signs[i] * delta`.
pub struct Ldl<T: Scalar> {
    n: usize,
    l: Vec<T>,
    d: Vec<T>,
}

impl<T: Scalar> Ldl<T> {
    pub fn factor(a: &Mat<T>, signs: &[i8], delta: T) -> Self {
        let n = a.rows;
        assert_eq!(a.cols, n);
        assert_eq!(signs.len(), n);
        let mut l = a.data.clone();
        let mut d = vec![T::zero(); n];
        // right-looking, lower triangle stored in l
        for j in 0..n {
            let mut dj = l[j * n + j];
            for k in 0..j {
                let ljk = l[j * n + k];
                dj = dj - ljk * ljk * d[k];
            }
            let s = if signs[j] >= 0 { T::one() } else { -T::one() };
            if dj * s <= delta {
                dj = s * delta;
            }
            d[j] = dj;
            for i in (j + 1)..n {
                let mut v = l[i * n + j];
                let (ri, rj) = (i * n, j * n);
                for k in 0..j {
                    v = v - l[ri + k] * l[rj + k] * d[k];
                }
                l[i * n + j] = v / dj;
            }
        }
        Ldl { n, l, d }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut v = x[i];
            let r = i * n;
            for k in 0..i {
                v = v - self.l[r + k] * x[k];
            }
            x[i] = v;
        }
        for i in 0..n {
            x[i] = x[i] / self.d[i];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v = v - self.l[k * n + i] * x[k];
            }
            x[i] = v;
        }
        x
    }

    /// Solve with iterative refinement against the unregularized matrix `a`.
    pub fn solve_refined(&self, a: &Mat<T>, b: &[T], steps: usize) -> Vec<T> {
        let mut x = self.solve(b);
        for _ in 0..steps {
            let ax = a.mul_vec(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            if norm_inf(&r) <= T::epsilon() * (T::one() + norm_inf(b)) {
                break;
            }
            let dx = self.solve(&r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi = *xi + di;
            }
        }
        x
    }
}

/// LU with partial pivoting; `None` when a pivot underflows `tol`.
pub struct Lu<T: Scalar> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &Mat<T>, tol: T) -> Option<Self> {
        let n = a.rows;
        assert_eq!(a.cols, n);
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tol {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = lu[k * n + k];
            let (head, tail) = lu.split_at_mut((k + 1) * n);
            let krow = &head[k * n + k + 1..(k + 1) * n];
            for row in tail.chunks_exact_mut(n) {
                let f = row[k] / piv;
                row[k] = f;
                if f != T::zero() {
                    for (a, &b) in row[k + 1..].iter_mut().zip(krow) {
                        *a = *a - f * b;
                    }
                }
            }
        }
        Some(Lu { n, lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        let dot_run = |row: &[T], v: &[T]| row.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        for i in 1..n {
            let (done, rest) = x.split_at_mut(i);
            rest[0] = rest[0] - dot_run(&self.lu[i * n..i * n + i], done);
        }
        for i in (0..n).rev() {
            let (head, done) = x.split_at_mut(i + 1);
            head[i] = (head[i] - dot_run(&self.lu[i * n + i + 1..(i + 1) * n], done)) / self.lu[i * n + i];
        }
        x
    }

    /// Solve `Aᵀ y = b`.
    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        // Aᵀ = Uᵀ Lᵀ P
        let mut w = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                w[i] = w[i] - self.lu[k * n + i] * w[k];
            }
            w[i] = w[i] / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                w[i] = w[i] - self.lu[k * n + i] * w[k];
            }
        }
        let mut y = vec![T::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            y[p] = w[i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ldl_solves_quasi_definite() {
        let a = Mat::<f64>::from_rows(&[
            vec![4.0, 1.0, 1.0],
            vec![1.0, 3.0, 0.0],
            vec![1.0, 0.0, -2.0],
        ]);
        let f = Ldl::factor(&a, &[1, 1, -1], 1e-14);
        let x = f.solve_refined(&a, &[1.0, 2.0, 3.0], 2);
        let ax = a.mul_vec(&x);
        for (u, v) in ax.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_and_transpose() {
        let a = Mat::<f64>::from_rows(&[
            vec![0.0, 2.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![3.0, 0.0, 1.0],
        ]);
        let lu = Lu::factor(&a, 1e-14).unwrap();
        let b = [1.0, -1.0, 2.0];
        let x = lu.solve(&b);
        let y = lu.solve_transpose(&b);
        let ax = a.mul_vec(&x);
        let aty = a.tr_mul_vec(&y);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-12);
            assert!((aty[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-10);
    }
}
