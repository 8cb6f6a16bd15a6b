//! Standard normal distribution function and its inverse.

use statrs::function::erf::erfc_inv;

/// `Φ(x)`, accurate in both tails.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`; infinite at the endpoints, NaN outside.
pub fn inv_cdf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -inv_cdf(1.0 - p);
    }
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((inv_cdf(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((inv_cdf(0.0005) + 3.290526731491894793).abs() < 1e-12);
        assert!((cdf(-3.0) / 0.0013498980316300945267 - 1.0).abs() < 1e-14);
        assert!((inv_cdf(1e-300) + 37.047096299361207).abs() < 1e-9);
    }

    #[test]
    fn round_trip() {
        for &p in &[1e-200, 1e-20, 1e-8, 0.01, 0.3, 0.5] {
            let x = inv_cdf(p);
            assert!(((cdf(x) - p) / p).abs() < 1e-12, "p = {p}");
        }
    }
}
