//! Simulation design with one endogenous regressor, Monte-Carlo replication
//! and table reports.
//!
//! Streams: replication `i` of master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` with stream `i`, so replications are
//! independent of scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cone::SolverConfig;
use crate::data::{compute_psi, Dataset, XNorm};
use crate::error::{Error, Result};
use crate::inference::{
    certificate_confidence, interval_table, interval_table_text, plugin_for, quantile_sorted, resolve_r, threshold_from_report, ConfidenceReport,
    ScenarioSpec,
};
use crate::linalg::Mat;
use crate::sens::{kappa_coord_exact, ConeFactor, MAX_BLOCK};
use crate::stiv::{fit_stiv, StivFit, StivSpec};
use crate::two_stage::{first_stage_text, fit_first_stage, fit_stiv_2s, plugin_2s};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub sigma_struct: f64,
    pub sigma_end: f64,
    pub rho: f64,
    pub beta_star: Vec<f64>,
    /// Reduced-form coefficients of `x_1` on `z_1..z_L`.
    pub zeta: Vec<f64>,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self::with_n(49)
    }
}

impl DgpConfig {
    /// Design defaults (K = 25, L = 50, five unit coefficients, ζ_l = 0.15 on
    /// the first L − K + 1 instruments) at sample size `n`.
    pub fn with_n(n: usize) -> Self {
        let (k, l) = (25, 50);
        let mut beta_star = vec![0.0; k];
        beta_star[..5].fill(1.0);
        let zeta = (0..l).map(|j| if j < l - k + 1 { 0.15 } else { 0.0 }).collect();
        DgpConfig { n, k, l, sigma_struct: 0.3, sigma_end: 0.3, rho: 0.3, beta_star, zeta, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.n < 2 || self.k < 1 || self.l < 1 {
            return bad("need n >= 2, K >= 1, L >= 1");
        }
        if self.k > self.l + 1 {
            return bad("need K <= L + 1 (exogenous regressors are copies of instruments)");
        }
        if self.beta_star.len() != self.k || self.zeta.len() != self.l {
            return bad("beta_star must have length K and zeta length L");
        }
        if !(self.rho.abs() <= 1.0) || !(self.sigma_struct >= 0.0) || !(self.sigma_end >= 0.0) {
            return bad("need |rho| <= 1 and nonnegative standard deviations");
        }
        Ok(())
    }
}

/// Rng for replication `rep` of a master seed.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Draws one dataset. Instruments are `z_1..z_L` plus an all-ones column
/// appended last (index `L`); `x_1` is endogenous and `x_k = z_{L−K+k}` for
/// `k ≥ 2` are exogenous.
pub fn gen_dgp_rng(cfg: &DgpConfig, rng: &mut impl Rng) -> Result<Dataset> {
    cfg.validate()?;
    let (n, k, l) = (cfg.n, cfg.k, cfg.l);
    let mut z = Mat::zeros(n, l + 1);
    let mut x = Mat::zeros(n, k);
    let mut y = vec![0.0; n];
    let s = (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt();
    for i in 0..n {
        for j in 0..l {
            z[(i, j)] = rng.sample(StandardNormal);
        }
        z[(i, l)] = 1.0;
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let u = cfg.sigma_struct * e1;
        let v = cfg.sigma_end * (cfg.rho * e1 + s * e2);
        x[(i, 0)] = (0..l).map(|j| z[(i, j)] * cfg.zeta[j]).sum::<f64>() + v;
        for kk in 1..k {
            x[(i, kk)] = z[(i, l - k + kk)];
        }
        y[i] = (0..k).map(|kk| x[(i, kk)] * cfg.beta_star[kk]).sum::<f64>() + u;
    }
    Dataset::new(y, x, z, Some(l), (1..k).collect())
}

pub fn gen_dgp(cfg: &DgpConfig) -> Result<Dataset> {
    gen_dgp_rng(cfg, &mut replication_rng(cfg.seed, 0))
}

/// Replication `rep` of the design with master seed `cfg.seed`.
pub fn gen_dgp_rep(cfg: &DgpConfig, rep: u64) -> Result<Dataset> {
    gen_dgp_rng(cfg, &mut replication_rng(cfg.seed, rep))
}

// ---- Monte Carlo -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSpec {
    pub c: f64,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub x_norm: XNorm,
    /// Instruments entering the cone constraint; `None` is the constant only.
    #[serde(default)]
    pub cone_set: Option<Vec<usize>>,
    /// Sparsity of the certificate intervals and thresholding; `None` skips
    /// them and support recovery compares `J(β̂)` with `J(β*)`.
    #[serde(default)]
    pub s: Option<usize>,
}

impl McSpec {
    pub fn new(c: f64, scenario: ScenarioSpec) -> Self {
        McSpec { c, scenario, x_norm: XNorm::Rms, cone_set: None, s: None }
    }

    fn stiv_spec(&self, ds: &Dataset, r: f64) -> StivSpec {
        let cone = self.cone_set.clone().unwrap_or_else(|| vec![ds.const_instr_idx()]);
        StivSpec::new(self.c, r, cone).with_norm(self.x_norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRep {
    pub rep: u64,
    pub r: f64,
    pub beta_hat: Vec<f64>,
    pub sigma_hat: f64,
    pub selected: Vec<usize>,
    pub recovered: bool,
    /// Only with `s` set.
    pub all_finite: Option<bool>,
    pub covered: Option<bool>,
    pub halfwidths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub seed: u64,
    pub reps: usize,
    pub successes: usize,
    /// `(replication, message)` of every failed replication.
    pub failures: Vec<(u64, String)>,
    /// Type-7 percentiles over successful replications.
    pub beta_p05: Vec<f64>,
    pub beta_p50: Vec<f64>,
    pub beta_p95: Vec<f64>,
    pub sigma_p05: f64,
    pub sigma_p50: f64,
    pub sigma_p95: f64,
    pub support_recovery: f64,
    pub coverage: Option<f64>,
    pub finite_rate: Option<f64>,
    pub replications: Vec<McRep>,
}

fn support_of(beta: &[f64]) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(k, _)| k).collect()
}

/// One replication: draw, choose `r`, fit, and with `s` set the certificate
/// intervals and the thresholded support.
pub fn run_rep(dgp: &DgpConfig, spec: &McSpec, rep: u64, cfg: &SolverConfig) -> Result<McRep> {
    let ds = gen_dgp_rep(dgp, rep)?;
    let cone = spec.cone_set.clone().unwrap_or_else(|| vec![ds.const_instr_idx()]);
    let mut scen = spec.scenario.clone();
    scen.seed = scen.seed.wrapping_add(rep);
    let (r, _) = resolve_r(&scen, &ds, &cone)?;
    let fit = fit_stiv(&ds, &spec.stiv_spec(&ds, r), cfg)?;
    let truth = support_of(&dgp.beta_star);
    let mut out = McRep {
        rep,
        r,
        beta_hat: fit.beta_hat.clone(),
        sigma_hat: fit.sigma_hat,
        selected: fit.support.clone(),
        recovered: fit.support == truth,
        all_finite: None,
        covered: None,
        halfwidths: None,
    };
    if let Some(s) = spec.s {
        let (_, report) = certificate_confidence(&ds, &fit, s, cfg)?;
        let sel = threshold_from_report(&fit, &report);
        out.recovered = sel.support == truth;
        out.selected = sel.support;
        out.all_finite = Some(!report.intervals.iter().any(|i| i.infinite));
        out.covered = Some(report.covers(&dgp.beta_star));
        out.halfwidths = Some(report.halfwidths());
    }
    Ok(out)
}

/// Runs `reps` replications of `dgp` (master seed `dgp.seed`) on `threads`
/// worker threads (`None`: rayon's default). Results are merged in
/// replication order, so the summary does not depend on scheduling.
pub fn run_mc(dgp: &DgpConfig, spec: &McSpec, reps: usize, threads: Option<usize>, cfg: &SolverConfig) -> Result<McSummary> {
    if reps == 0 {
        return Err(Error::InvalidParams("reps must be at least 1".into()));
    }
    dgp.validate()?;
    spec.scenario.validate()?;
    let work = || (0..reps as u64).into_par_iter().map(|rep| (rep, run_rep(dgp, spec, rep, cfg))).collect::<Vec<_>>();
    let results = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (rep, res) in results {
        match res {
            Ok(r) => ok.push(r),
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    let pct = |mut v: Vec<f64>| -> [f64; 3] {
        if v.is_empty() {
            return [f64::NAN; 3];
        }
        v.sort_by(f64::total_cmp);
        [quantile_sorted(&v, 0.05), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.95)]
    };
    let k = dgp.k;
    let mut p = [vec![0.0; k], vec![0.0; k], vec![0.0; k]];
    for j in 0..k {
        let q = pct(ok.iter().map(|r| r.beta_hat[j]).collect());
        for (col, v) in p.iter_mut().zip(q) {
            col[j] = v;
        }
    }
    let sq = pct(ok.iter().map(|r| r.sigma_hat).collect());
    let m = ok.len().max(1) as f64;
    let rate = |f: &dyn Fn(&McRep) -> Option<bool>| -> Option<f64> {
        spec.s.map(|_| ok.iter().filter(|r| f(r) == Some(true)).count() as f64 / m)
    };
    let coverage = rate(&|r| r.covered);
    let finite_rate = rate(&|r| r.all_finite);
    let [beta_p05, beta_p50, beta_p95] = p;
    Ok(McSummary {
        seed: dgp.seed,
        reps,
        successes: ok.len(),
        failures,
        beta_p05,
        beta_p50,
        beta_p95,
        sigma_p05: sq[0],
        sigma_p50: sq[1],
        sigma_p95: sq[2],
        support_recovery: ok.iter().filter(|r| r.recovered).count() as f64 / m,
        coverage,
        finite_rate,
        replications: ok,
    })
}

/// Percentile table of a summary: one row per coefficient and one for `σ̂`.
pub fn percentile_text(sum: &McSummary) -> String {
    let mut out = format!("{:>8} {:>10} {:>10} {:>10}\n", "", "p05", "median", "p95");
    for k in 0..sum.beta_p50.len() {
        let _ = writeln!(out, "{:>8} {:>10.3} {:>10.3} {:>10.3}", format!("beta_{}", k + 1), sum.beta_p05[k], sum.beta_p50[k], sum.beta_p95[k]);
    }
    let _ = writeln!(out, "{:>8} {:>10.3} {:>10.3} {:>10.3}", "sigma", sum.sigma_p05, sum.sigma_p50, sum.sigma_p95);
    let _ = writeln!(out, "replications {} (failed {}), support recovery {:.3}", sum.reps, sum.failures.len(), sum.support_recovery);
    for (rep, msg) in &sum.failures {
        let _ = writeln!(out, "failed replication {rep}: {msg}");
    }
    out
}

// ---- table reports -----------------------------------------------------------

pub const PROFILES: [&str; 4] = ["table1", "table3", "table5", "table7"];

#[derive(Debug, Clone)]
pub struct TableOptions {
    pub seed: u64,
    /// Replications of the Monte-Carlo profile.
    pub reps: usize,
    pub c: f64,
    pub scenario: ScenarioSpec,
    pub s: usize,
    pub c_rf: f64,
    pub threads: Option<usize>,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions { seed: 0, reps: 1000, c: 0.1, scenario: ScenarioSpec::new(4, 0.05), s: 5, c_rf: 0.1, threads: None }
    }
}

/// A rendered table: aligned text and its JSON form.
#[derive(Debug, Clone)]
pub struct Table {
    pub profile: String,
    pub text: String,
    pub json: serde_json::Value,
}

fn fmt_v(v: f64) -> String {
    if v.is_infinite() { "inf".into() } else { format!("{v:.4}") }
}

/// Exact `κ*_{k,Ĵ}` for every `k` with `Ĵ = J(β̂)`; infinite when `Ĵ` is
/// empty and `None` when it is too large for enumeration.
fn plugin_kappas(psi: &crate::data::PsiMatrix, fit: &StivFit, cfg: &SolverConfig) -> Result<Option<Vec<f64>>> {
    let k = fit.beta_hat.len();
    if fit.support.is_empty() {
        return Ok(Some(vec![f64::INFINITY; k]));
    }
    if fit.support.len() > MAX_BLOCK {
        return Ok(None);
    }
    let cf = ConeFactor::standard(fit.spec.c.unwrap_or(0.0))?;
    (0..k).map(|j| kappa_coord_exact(psi, j, &fit.support, &cf, cfg)).collect::<Result<Vec<_>>>().map(Some)
}

fn report_summary(rep: &ConfidenceReport) -> String {
    format!("{}: r = {:.6}, s = {}, sigma = {:.4}, tau = {:.4}\n", rep.method, rep.r, rep.s, rep.sigma_hat, rep.tau)
}

fn table1(opt: &TableOptions, cfg: &SolverConfig) -> Result<Table> {
    let dgp = DgpConfig { seed: opt.seed, ..DgpConfig::with_n(49) };
    let ds = gen_dgp(&dgp)?;
    let cone = vec![ds.const_instr_idx()];
    let (r, validity) = resolve_r(&opt.scenario, &ds, &cone)?;
    let fit = fit_stiv(&ds, &StivSpec::new(opt.c, r, cone), cfg)?;
    let psi = compute_psi(&ds, &fit.dx, &fit.dz)?;
    let (sr, rep) = certificate_confidence(&ds, &fit, opt.s, cfg)?;
    let kj = plugin_kappas(&psi, &fit, cfg)?;

    let mut text = String::new();
    let _ = writeln!(text, "(1) all instruments: r = {r:.6}, sigma = {:.4}, kappa1({}) = {:.6}, r/kappa1 = {:.3}", fit.sigma_hat, opt.s, sr.kappa1, r / sr.kappa1);
    if let Some(w) = validity.warning() {
        let _ = writeln!(text, "note: {w}");
    }
    text.push_str(&report_summary(&rep));
    let two = fit_first_stage(&ds, 0, opt.c_rf, r, None, cfg).and_then(|fsf| {
        let _ = write!(text, "(2) two-stage {}", first_stage_text(&fsf));
        fit_stiv_2s(&ds, &fsf, opt.c, r, opt.s, cfg)
    });
    let (two_cols, two_json) = match &two {
        Ok(t) => {
            let kj2 = plugin_kappas(&t.psi, &t.fit, cfg)?;
            text.push_str(&report_summary(&t.report));
            (Some((t.fit.beta_hat.clone(), kj2, t.sensitivities.kappa_coord.clone())), json!({ "fit": &t.fit.beta_hat, "sigma": t.fit.sigma_hat, "kappa_coord": &t.sensitivities.kappa_coord, "kappa1": t.sensitivities.kappa1 }))
        }
        Err(e) => {
            let _ = writeln!(text, "(2) two-stage unavailable: {e}");
            (None, json!({ "error": e.to_string() }))
        }
    };
    let s = opt.s;
    let _ = writeln!(
        text,
        "{:>4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "k", "beta(1)", "kJ(1)", format!("k({s})(1)"), "beta(2)", "kJ(2)", format!("k({s})(2)")
    );
    let na = || "n/a".to_string();
    for k in 0..ds.k() {
        let (b2, kj2, ks2) = match &two_cols {
            Some((b, kj2, ks)) => (format!("{:.4}", b[k]), kj2.as_ref().map_or_else(na, |v| fmt_v(v[k])), fmt_v(ks[k])),
            None => (na(), na(), na()),
        };
        let _ = writeln!(
            text,
            "{:>4} {:>10.4} {:>10} {:>10} {:>10} {:>10} {:>10}",
            k + 1,
            fit.beta_hat[k],
            kj.as_ref().map_or_else(na, |v| fmt_v(v[k])),
            fmt_v(sr.kappa_coord[k]),
            b2,
            kj2,
            ks2
        );
    }
    let json = json!({
        "dgp": dgp,
        "r": r,
        "all_instruments": { "beta_hat": &fit.beta_hat, "sigma": fit.sigma_hat, "kappa_plugin": kj, "kappa_coord": &sr.kappa_coord, "kappa1": sr.kappa1, "report": rep },
        "two_stage": two_json,
    });
    Ok(Table { profile: "table1".into(), text, json })
}

fn table3(opt: &TableOptions, cfg: &SolverConfig) -> Result<Table> {
    let dgp = DgpConfig { seed: opt.seed, ..DgpConfig::with_n(49) };
    let spec = McSpec::new(opt.c, opt.scenario.clone());
    let sum = run_mc(&dgp, &spec, opt.reps, opt.threads, cfg)?;
    Ok(Table { profile: "table3".into(), text: percentile_text(&sum), json: json!({ "dgp": dgp, "mc": spec, "summary": sum }) })
}

fn table5(opt: &TableOptions, cfg: &SolverConfig) -> Result<Table> {
    let dgp = DgpConfig { seed: opt.seed, ..DgpConfig::with_n(8000) };
    let ds = gen_dgp(&dgp)?;
    let cone = vec![ds.const_instr_idx()];
    let (r, _) = resolve_r(&opt.scenario, &ds, &cone)?;
    let fit = fit_stiv(&ds, &StivSpec::new(opt.c, r, cone).with_norm(XNorm::MaxAbs), cfg)?;
    let (sr, cert) = certificate_confidence(&ds, &fit, opt.s, cfg)?;
    let plug = plugin_for(&ds, &fit, cfg)?;
    let rows = interval_table(&cert, &plug);
    let mut text = report_summary(&cert);
    text.push_str(&report_summary(&plug));
    let _ = writeln!(text, "kappa1({}) = {:.6}", opt.s, sr.kappa1);
    text.push_str(&interval_table_text(&rows, opt.s));
    let json = json!({ "dgp": dgp, "r": r, "sigma": fit.sigma_hat, "kappa1": sr.kappa1, "certificate": cert, "plugin": plug, "rows": rows });
    Ok(Table { profile: "table5".into(), text, json })
}

fn table7(opt: &TableOptions, cfg: &SolverConfig) -> Result<Table> {
    let dgp = DgpConfig { seed: opt.seed, ..DgpConfig::with_n(8000) };
    let ds = gen_dgp(&dgp)?;
    let cone = vec![ds.const_instr_idx()];
    let (r, _) = resolve_r(&opt.scenario, &ds, &cone)?;
    let fsf = match fit_first_stage(&ds, 0, opt.c_rf, r, None, cfg) {
        Ok(f) => f,
        Err(e) => {
            let text = format!("first stage unavailable: {e}\n");
            return Ok(Table { profile: "table7".into(), text, json: json!({ "dgp": dgp, "r": r, "error": e.to_string() }) });
        }
    };
    let mut text = first_stage_text(&fsf);
    let json = match fit_stiv_2s(&ds, &fsf, opt.c, r, opt.s, cfg) {
        Ok(tsf) => {
            let plug = plugin_2s(&tsf, cfg)?;
            let rows = interval_table(&tsf.report, &plug);
            text.push_str(&report_summary(&tsf.report));
            text.push_str(&report_summary(&plug));
            text.push_str(&interval_table_text(&rows, opt.s));
            json!({ "dgp": dgp, "r": r, "first_stage": fsf, "certificate": tsf.report, "plugin": plug, "rows": rows })
        }
        Err(e) => {
            let _ = writeln!(text, "second stage unavailable: {e}");
            json!({ "dgp": dgp, "r": r, "first_stage": fsf, "error": e.to_string() })
        }
    };
    Ok(Table { profile: "table7".into(), text, json })
}

/// Builds the report of one profile.
pub fn build_table(profile: &str, opt: &TableOptions, cfg: &SolverConfig) -> Result<Table> {
    match profile {
        "table1" => table1(opt, cfg),
        "table3" => table3(opt, cfg),
        "table5" => table5(opt, cfg),
        "table7" => table7(opt, cfg),
        _ => Err(Error::InvalidParams(format!("unknown profile {profile:?}; expected one of {}", PROFILES.join(", ")))),
    }
}

fn options_json(opt: &TableOptions) -> serde_json::Value {
    json!({ "seed": opt.seed, "reps": opt.reps, "c": opt.c, "scenario": opt.scenario, "s": opt.s, "c_rf": opt.c_rf })
}

/// Writes `<profile>.txt` and `<profile>.json` under `out_dir`; both start
/// with the seed and options of the run.
pub fn repro_tables(profile: &str, out_dir: &Path, opt: &TableOptions, cfg: &SolverConfig) -> Result<Vec<PathBuf>> {
    let table = build_table(profile, opt, cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io(e.to_string()))?;
    let header = options_json(opt);
    let txt = out_dir.join(format!("{profile}.txt"));
    let js = out_dir.join(format!("{profile}.json"));
    let body = format!("# profile {profile}, seed {}\n# options {header}\n{}", opt.seed, table.text);
    std::fs::write(&txt, body).map_err(|e| Error::Io(e.to_string()))?;
    let doc = json!({ "profile": profile, "seed": opt.seed, "options": header, "table": table.json });
    let pretty = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&js, pretty).map_err(|e| Error::Io(e.to_string()))?;
    Ok(vec![txt, js])
}
