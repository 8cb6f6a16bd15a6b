//! Property tests for the estimator, the sensitivities and the simulation
//! harness.

mod common;

use common::designs::{bounded_design, r_for, rescale_column};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stiv::cone::SolverConfig;
use stiv::data::{compute_dx, compute_dz, compute_psi, qhat, PsiMatrix, XNorm};
use stiv::inference::{nested_confsets, ScenarioSpec};
use stiv::linalg::Mat;
use stiv::nv::nv_f;
use stiv::sens::{kappa_coord_cert, kappa_coord_exact, ConeFactor};
use stiv::sim::{gen_dgp, run_mc, run_rep, DgpConfig, McSpec};
use stiv::stiv::{fit_stiv, StivSpec};

fn design(n: usize, seed: u64) -> DgpConfig {
    DgpConfig {
        n,
        k: 3,
        l: 6,
        beta_star: vec![1.0, 0.5, 0.0],
        zeta: vec![0.8, 0.8, 0.8, 0.0, 0.0, 0.0],
        seed,
        ..DgpConfig::with_n(n)
    }
}

fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn psi_unchanged_by_unit_changes(seed in 0u64..1000, k in 0usize..3, lambda in 0.05f64..20.0, norm in prop::bool::ANY) {
        let ds = gen_dgp(&design(60, seed)).unwrap();
        let mode = if norm { XNorm::Rms } else { XNorm::MaxAbs };
        let cone = vec![ds.const_instr_idx()];
        let base = compute_psi(&ds, &compute_dx(&ds, mode).unwrap(), &compute_dz(&ds, &cone).unwrap()).unwrap();
        let sc = rescale_column(&ds, k, lambda);
        let psi = compute_psi(&sc, &compute_dx(&sc, mode).unwrap(), &compute_dz(&sc, &cone).unwrap()).unwrap();
        for (a, b) in base.values.data.iter().zip(&psi.values.data) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        if mode == XNorm::MaxAbs {
            prop_assert!(base.values.data.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn selection_unchanged_by_unit_changes(seed in 0u64..1000, k in 0usize..3, lambda in 0.1f64..10.0) {
        let cfg = SolverConfig::default();
        let base = bounded_design(300, seed);
        let spec = StivSpec::new(0.5, r_for(&base), vec![4]);
        let a = fit_stiv(&base, &spec, &cfg).unwrap();
        let b = fit_stiv(&rescale_column(&base, k, lambda), &spec, &cfg).unwrap();
        prop_assert!(!a.support.is_empty());
        prop_assert_eq!(&a.support, &b.support);
        prop_assert!((a.sigma_hat - b.sigma_hat).abs() <= 1e-6 * (1.0 + a.sigma_hat));
        for j in 0..3 {
            let scaled = if j == k { b.beta_hat[j] * lambda } else { b.beta_hat[j] };
            prop_assert!((a.beta_hat[j] - scaled).abs() <= 1e-6 * (1.0 + a.beta_hat[j].abs()), "coordinate {}: {} vs {}", j, a.beta_hat[j], scaled);
        }
    }

    #[test]
    fn qhat_nonnegative_and_zero_on_exact_fit(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = gen_dgp(&design(30, seed)).unwrap();
        let beta: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        for l in 0..ds.l() {
            prop_assert!(qhat(&ds, &beta, l).unwrap() >= 0.0);
        }
        let y = ds.x().mul_vec(&beta);
        let exact = ds.with_outcome(y).unwrap();
        for l in 0..ds.l() {
            prop_assert_eq!(qhat(&exact, &beta, l).unwrap(), 0.0);
        }
    }

    #[test]
    fn fit_is_feasible_and_beats_truth(seed in 0u64..1000) {
        let cfg = SolverConfig::default();
        let dgp = design(100, seed);
        let ds = gen_dgp(&dgp).unwrap();
        let cst = ds.const_instr_idx();
        let fit = fit_stiv(&ds, &StivSpec::new(0.3, r_for(&ds), vec![cst]), &cfg).unwrap();
        prop_assert!(fit.constraint_violation(&ds).unwrap() <= 1e-7);
        let cone_scale = fit.dz.entries[cst] * qhat(&ds, &fit.beta_raw, cst).unwrap().sqrt();
        prop_assert!(fit.sigma_hat >= cone_scale - 1e-7);
        // (β*, σ*) is feasible whenever the band holds at β*
        let sigma_star = fit.dz.entries[cst] * qhat(&ds, &dgp.beta_star, cst).unwrap().sqrt();
        let u = ds.residuals(&dgp.beta_star);
        let band_ok = (0..ds.l()).all(|l| {
            let m: f64 = (0..ds.n()).map(|i| ds.z()[(i, l)] * u[i]).sum::<f64>() / ds.n() as f64;
            (fit.dz.entries[l] * m).abs() <= sigma_star * fit.spec.r
        });
        if band_ok {
            let truth: f64 = dgp.beta_star.iter().zip(&fit.dx.entries).map(|(b, d)| (b / d).abs()).sum::<f64>() + 0.3 * sigma_star;
            prop_assert!(fit.objective <= truth + 1e-7);
        }
    }

    #[test]
    fn adding_a_row_never_lowers_sensitivities(seed in 0u64..1000, s in 1usize..3) {
        let cfg = SolverConfig::default();
        let cf = ConeFactor::standard(0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=4);
        let l = rng.random_range(1..=3);
        let m = random_mat(&mut rng, l + 1, k);
        let small = PsiMatrix::from_values(Mat::from_fn(l, k, |i, j| m[(i, j)]));
        let big = PsiMatrix::from_values(m);
        let s = s.min(k);
        for kk in 0..k {
            let a = kappa_coord_cert(&small, kk, s, &cf, &cfg).unwrap();
            let b = kappa_coord_cert(&big, kk, s, &cf, &cfg).unwrap();
            prop_assert!(b + 1e-9 * (1.0 + b) >= a, "certificate {kk}: {a} -> {b}");
            let a = kappa_coord_exact(&small, kk, &[0], &cf, &cfg).unwrap();
            let b = kappa_coord_exact(&big, kk, &[0], &cf, &cfg).unwrap();
            prop_assert!(b + 1e-9 * (1.0 + b) >= a, "exact {kk}: {a} -> {b}");
        }
    }

    #[test]
    fn nv_objective_is_lipschitz(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = gen_dgp(&design(50, seed)).unwrap();
        let zbar = random_mat(&mut rng, ds.n(), 4);
        let zbar_star = (0..4).map(|l| (zbar.col(l).iter().map(|v| v * v).sum::<f64>() / ds.n() as f64).sqrt()).fold(0.0, f64::max);
        let ds = ds.with_zbar(zbar).unwrap();
        let draw = |rng: &mut ChaCha8Rng, m: usize| -> Vec<f64> { (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect() };
        let (t1, t2, beta) = (draw(&mut rng, 4), draw(&mut rng, 4), draw(&mut rng, 3));
        let d: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a - b).collect();
        let f1 = nv_f(&ds, &t1, &beta).unwrap();
        let f2 = nv_f(&ds, &t2, &beta).unwrap();
        prop_assert!((f1 - f2).abs() <= l1(&d) + 1e-12);
        let beta2 = draw(&mut rng, 3);
        let dx = compute_dx(&ds, XNorm::MaxAbs).unwrap();
        let scaled: f64 = beta.iter().zip(&beta2).zip(&dx.entries).map(|((a, b), e)| ((a - b) / e).abs()).sum();
        let g = nv_f(&ds, &t1, &beta2).unwrap();
        prop_assert!((f1 - g).abs() <= zbar_star * scaled + 1e-12);
    }

    #[test]
    fn first_stage_enlargement_covers_true_instrument(seed in 0u64..1000, radius in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, l) = (40, 5);
        let mut z = random_mat(&mut rng, n, l + 1);
        for i in 0..n {
            z[(i, l)] = 1.0;
        }
        let zeta: Vec<f64> = (0..=l).map(|_| rng.sample(StandardNormal)).collect();
        let zmax: Vec<f64> = (0..=l).map(|j| z.col(j).iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
        // a perturbation with |D⁻¹(ζ̂ − ζ)|₁ = radius for the max-abs scaling
        let dir: Vec<f64> = (0..=l).map(|_| rng.sample(StandardNormal)).collect();
        let norm: f64 = dir.iter().zip(&zmax).map(|(d, m)| (d * m).abs()).sum();
        let zeta_hat: Vec<f64> = zeta.iter().zip(&dir).map(|(a, d)| a + radius * d / norm).collect();
        let sup = |v: Vec<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(sup(z.mul_vec(&zeta_hat)) + 2.0 * radius + 1e-12 >= sup(z.mul_vec(&zeta)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn confidence_family_nested_in_s(seed in 0u64..1000) {
        let cfg = SolverConfig::default();
        let ds = bounded_design(2000, seed);
        let fit = fit_stiv(&ds, &StivSpec::new(0.3, r_for(&ds), vec![4]), &cfg).unwrap();
        let psi = compute_psi(&ds, &fit.dx, &fit.dz).unwrap();
        let fam = nested_confsets(&fit, &psi, fit.spec.r, &[1, 2, 3], None, &cfg).unwrap();
        prop_assert!(!fam[0].all_infinite());
        for w in fam.windows(2) {
            for (a, b) in w[0].intervals.iter().zip(&w[1].intervals) {
                prop_assert!(a.kappa >= b.kappa);
                prop_assert!(a.halfwidth <= b.halfwidth);
                prop_assert!(a.lower >= b.lower && a.upper <= b.upper);
            }
        }
    }

    #[test]
    fn single_replication_percentiles_are_the_fit(seed in 0u64..1000) {
        let cfg = SolverConfig::default();
        let dgp = design(40, seed);
        let spec = McSpec::new(0.3, ScenarioSpec::new(4, 0.05));
        let sum = run_mc(&dgp, &spec, 1, Some(1), &cfg).unwrap();
        let rep = run_rep(&dgp, &spec, 0, &cfg).unwrap();
        prop_assert_eq!(&sum.beta_p05, &rep.beta_hat);
        prop_assert_eq!(&sum.beta_p50, &rep.beta_hat);
        prop_assert_eq!(&sum.beta_p95, &rep.beta_hat);
        prop_assert_eq!(sum.sigma_p50, rep.sigma_hat);
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = SolverConfig::default();
    let dgp = design(40, 5);
    assert_eq!(gen_dgp(&dgp).unwrap(), gen_dgp(&dgp).unwrap());
    let spec = McSpec::new(0.3, ScenarioSpec::new(1, 0.05));
    let a = run_mc(&dgp, &spec, 6, Some(1), &cfg).unwrap();
    let b = run_mc(&dgp, &spec, 6, Some(3), &cfg).unwrap();
    assert_eq!(a, b);
    for k in 0..3 {
        assert!(a.beta_p05[k] <= a.beta_p50[k] && a.beta_p50[k] <= a.beta_p95[k]);
    }
    assert!(a.sigma_p05 <= a.sigma_p50 && a.sigma_p50 <= a.sigma_p95);
}

#[test]
fn design_structure() {
    let dgp = DgpConfig::with_n(49);
    let ds = gen_dgp(&dgp).unwrap();
    assert_eq!((ds.k(), ds.l()), (25, 51));
    assert_eq!(ds.exo_idx(), (1..25).collect::<Vec<_>>());
    for k in 1..25 {
        assert_eq!(ds.x().col(k), ds.z().col(50 - 25 + k), "x{} is a copy of an instrument", k + 1);
    }
    assert!(ds.z().col(50).iter().all(|&v| v == 1.0));
    // zero coefficients leave only the structural error, which is shared
    let zero = DgpConfig { beta_star: vec![0.0; 25], ..dgp.clone() };
    let d0 = gen_dgp(&zero).unwrap();
    assert_eq!(d0.x(), ds.x());
    let fitted = ds.x().mul_vec(&dgp.beta_star);
    for i in 0..49 {
        assert!((ds.y()[i] - d0.y()[i] - fitted[i]).abs() < 1e-12);
    }
}
