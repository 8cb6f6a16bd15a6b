//! Small data designs shared by the property and acceptance targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stiv::data::Dataset;
use stiv::inference::{select_r, ScenarioSpec};
use stiv::linalg::Mat;

/// Three exogenous regressors that are their own bounded instruments, plus a
/// constant instrument: `y = x₁ + x₂/2 + u`. With `z_* = 1` the fits are
/// non-zero and the intervals finite at moderate `n`.
pub fn bounded_design(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Mat::from_fn(n, 5, |_, j| if j == 4 { 1.0 } else { rng.random_range(-1.0..1.0) });
    let x = Mat::from_fn(n, 3, |i, j| z[(i, j)]);
    let y = (0..n).map(|i| x[(i, 0)] + 0.5 * x[(i, 1)] + 0.3 * rng.random_range(-1.0..1.0)).collect();
    Dataset::new(y, x, z, Some(4), vec![]).unwrap()
}

/// Scenario 4 at `α = 0.05` for the dataset's own `n` and `L`.
pub fn r_for(ds: &Dataset) -> f64 {
    select_r(&ScenarioSpec::new(4, 0.05), ds.n(), ds.l()).unwrap().0
}

pub fn rescale_column(ds: &Dataset, k: usize, lambda: f64) -> Dataset {
    let mut x = ds.x().clone();
    for i in 0..x.rows {
        x[(i, k)] *= lambda;
    }
    Dataset::new(ds.y().to_vec(), x, ds.z().clone(), Some(ds.const_instr_idx()), vec![]).unwrap()
}

pub const NV_SIGMA: f64 = 0.3;
pub const NV_CANDIDATES: usize = 5;
pub const NV_BAD: usize = 2;

/// One exogenous regressor `x = z₁` (unit variance, bounded) with a constant
/// instrument, `y = x + σe`, and a block of candidate instruments.
pub struct NvDesign {
    pub base: Dataset,
    pub e: Vec<f64>,
    pub w: Mat,
}

impl NvDesign {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Mat::from_fn(n, 2, |_, j| if j == 1 { 1.0 } else { rng.random_range(-1.0f64..1.0) * 3f64.sqrt() });
        let x = Mat::from_fn(n, 1, |i, _| z[(i, 0)]);
        let e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y = (0..n).map(|i| x[(i, 0)] + NV_SIGMA * e[i]).collect();
        let w = Mat::from_fn(n, NV_CANDIDATES, |_, _| rng.sample::<f64, _>(StandardNormal));
        NvDesign { base: Dataset::new(y, x, z, Some(1), vec![0]).unwrap(), e, w }
    }

    /// All candidates valid.
    pub fn null(&self) -> Dataset {
        self.base.clone().with_zbar(self.w.clone()).unwrap()
    }

    /// Candidate `NV_BAD` replaced by `ρe + √(1−ρ²)w`, so its population
    /// moment with the error is `θ* = ρσ`.
    pub fn planted(&self, theta: f64) -> Dataset {
        let rho = theta / NV_SIGMA;
        assert!(rho.abs() < 1.0, "theta {theta} too large for this design");
        let mut wb = self.w.clone();
        for i in 0..wb.rows {
            wb[(i, NV_BAD)] = rho * self.e[i] + (1.0 - rho * rho).sqrt() * self.w[(i, NV_BAD)];
        }
        self.base.clone().with_zbar(wb).unwrap()
    }
}
