//! Closed-form quantiles against values frozen from 40-digit mpmath, and the
//! Monte-Carlo quantile against a case with a known law.

mod common;

use common::quantile_table::FROZEN;
use stiv::data::Dataset;
use stiv::inference::{mc_quantile_r, select_r, ErrorDist, ScenarioSpec};
use stiv::linalg::Mat;
use stiv::Error;

fn r(scenario: u8, c4: Option<f64>, n: usize, l: usize, alpha: f64) -> stiv::Result<f64> {
    let spec = ScenarioSpec { c4, ..ScenarioSpec::new(scenario, alpha) };
    select_r(&spec, n, l).map(|(r, _)| r)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn closed_forms_match_frozen_values() {
    for &(n, l, a, s2, s3, s4, s5, s5s) in &FROZEN {
        let ctx = format!("n={n} L={l} alpha={a}");
        assert!(rel(r(2, None, n, l, a).unwrap(), s2) < 1e-9, "S2 {ctx}");
        assert!(rel(r(3, None, n, l, a).unwrap(), s3) < 1e-9, "S3 {ctx}");
        assert!(rel(r(4, None, n, l, a).unwrap(), s4) < 1e-9, "S4 {ctx}");
        assert!(rel(r(5, None, n, l, a).unwrap(), s5s) < 1e-9, "S5 simplified {ctx}");
        match s5 {
            Some(v) => assert!(rel(r(5, Some(2.0), n, l, a).unwrap(), v) < 1e-9, "S5 {ctx}"),
            None => assert!(matches!(r(5, Some(2.0), n, l, a), Err(Error::InfeasibleQuantile(_))), "S5 {ctx}"),
        }
    }
}

#[test]
fn scenario_two_needs_l_above_two_alpha() {
    assert!(matches!(r(2, None, 100, 1, 0.5), Err(Error::InfeasibleQuantile(_))));
    assert!(matches!(r(2, None, 100, 1, 0.9), Err(Error::InfeasibleQuantile(_))));
    assert!(r(2, None, 100, 2, 0.9).is_ok());
}

#[test]
fn admissibility_is_reported() {
    let (_, v) = select_r(&ScenarioSpec::new(3, 0.05), 49, 51).unwrap();
    assert_eq!(v.holds, Some(true));
    let (_, v) = select_r(&ScenarioSpec::new(4, 0.05), 49, 51).unwrap();
    assert_eq!(v.holds, None);
    let spec = ScenarioSpec { c4: Some(2.0), ..ScenarioSpec::new(5, 0.05) };
    let (_, v) = select_r(&spec, 20, 5).unwrap();
    assert_eq!(v.holds, Some(true));
    assert!(v.warning().is_none());
}

/// With `n = 2`, a constant instrument in the cone set and normal errors,
/// the statistic is `|cos φ|` for a uniform angle `φ`, whose `1−α` quantile
/// is `cos(πα/2)`.
#[test]
fn monte_carlo_quantile_two_observations() {
    let ds = Dataset::new(vec![0.0, 0.0], Mat::from_rows(&[vec![1.0], vec![2.0]]), Mat::from_rows(&[vec![1.0], vec![1.0]]), Some(0), vec![])
        .unwrap();
    for alpha in [0.05, 0.2, 0.5] {
        let q = mc_quantile_r(&ds, &[0], ErrorDist::Normal, alpha, 200_000, 3).unwrap();
        let want = (std::f64::consts::PI * alpha / 2.0).cos();
        assert!((q - want).abs() < 4e-3, "alpha {alpha}: {q} vs {want}");
    }
    let a = mc_quantile_r(&ds, &[0], ErrorDist::Uniform, 0.1, 5000, 9).unwrap();
    let b = mc_quantile_r(&ds, &[0], ErrorDist::Uniform, 0.1, 5000, 9).unwrap();
    assert_eq!(a, b);
}
