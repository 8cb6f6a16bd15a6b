//! Command-line front end.
//!
//! A run is one JSON [`RunConfig`] (optional, `--config`) with flags
//! overriding its keys. Every report starts with the resolved configuration
//! and is printed to stdout; with an output directory (`--out-dir`, the
//! config's `out_dir`, or `STIV_OUT_DIR`) it is also written to
//! `<command>.txt` and `<command>.json`.
//!
//! Exit codes: 0 success, 1 usage or data error, 2 solver failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cone::SolverConfig;
use crate::data::{compute_psi, read_csv, ColumnRoles, Dataset, XNorm};
use crate::error::{Error, Result};
use crate::inference::{
    c_grid, certificate_confidence, interval_table, interval_table_text, nested_confsets, plugin_for, resolve_r, select_r,
    threshold_from_report, ConfidenceReport, ScenarioSpec,
};
use crate::nv::{fit_stiv_nv, nv_confidence, nv_threshold, pilot_bound};
use crate::sim::{build_table, TableOptions, PROFILES};
use crate::stiv::{fit_stiv, StivFit, StivSpec};
use crate::two_stage::{first_stage_text, fit_first_stage, fit_stiv_2s, plugin_2s};

pub const OUT_DIR_ENV: &str = "STIV_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "stiv", version, about = "Self-tuning instrumental variables estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the STIV estimator (or a grid of c values).
    Fit(Flags),
    /// Sensitivity characteristics of the design.
    Sens(Flags),
    /// Confidence intervals.
    Ci(Flags),
    /// Thresholded variable selection.
    Select(Flags),
    /// Two-stage STIV for one endogenous regressor.
    Twostage(Flags),
    /// Detection of invalid instruments.
    Nv(Flags),
    /// Simulation tables.
    Simulate(Flags),
}

impl Command {
    fn parts(&self) -> (&'static str, &Flags) {
        match self {
            Command::Fit(f) => ("fit", f),
            Command::Sens(f) => ("sens", f),
            Command::Ci(f) => ("ci", f),
            Command::Select(f) => ("select", f),
            Command::Twostage(f) => ("twostage", f),
            Command::Nv(f) => ("nv", f),
            Command::Simulate(f) => ("simulate", f),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormFlag {
    Rms,
    Maxabs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON run configuration; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub regressors: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub instruments: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub zbar: Option<Vec<String>>,
    #[arg(long)]
    pub constant: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub exogenous: Option<Vec<String>>,
    /// Instruments in the cone constraint (default: the constant).
    #[arg(long, value_delimiter = ',')]
    pub cone_set: Option<Vec<String>>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub s_list: Option<Vec<usize>>,
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long, value_enum)]
    pub x_norm: Option<NormFlag>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Endogenous regressor of the two-stage pipeline.
    #[arg(long)]
    pub k_end: Option<String>,
    #[arg(long)]
    pub c_rf: Option<f64>,
    #[arg(long)]
    pub s_rf: Option<usize>,
    #[arg(long)]
    pub s1: Option<usize>,
    /// Detection threshold (default: the sup-norm bound).
    #[arg(long)]
    pub omega: Option<f64>,
}

fn default_c() -> f64 {
    0.1
}

fn default_reps() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: String,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub columns: ColumnRoles,
    /// Names of the instruments in `I`; `None` is the constant only.
    #[serde(default)]
    pub cone_set: Option<Vec<String>>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub c_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default)]
    pub s_list: Option<Vec<usize>>,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub x_norm: XNorm,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub profile: Option<String>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub k_end: Option<String>,
    #[serde(default = "default_c")]
    pub c_rf: f64,
    #[serde(default)]
    pub s_rf: Option<usize>,
    #[serde(default)]
    pub s1: Option<usize>,
    #[serde(default)]
    pub omega: Option<f64>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        serde_json::from_value(json!({ "command": command })).expect("defaults deserialize")
    }
}

/// Reads the optional config file, applies flag overrides and validates.
pub fn parse_config(command: &str, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            if !cfg.command.is_empty() && cfg.command != command {
                return Err(Error::Parse(format!("{}: config is for '{}', not '{command}'", path.display(), cfg.command)));
            }
            cfg
        }
        None => RunConfig::new(command),
    };
    cfg.command = command.to_string();
    let f = flags.clone();
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = f.$field { cfg.$field = v; } )* };
    }
    macro_rules! set_opt {
        ($($field:ident),*) => { $( if f.$field.is_some() { cfg.$field = f.$field; } )* };
    }
    set!(c, seed, reps, c_rf);
    set_opt!(data, cone_set, c_grid, s, s_list, out_dir, threads, profile, k_end, s_rf, s1, omega);
    if let Some(v) = f.outcome {
        cfg.columns.outcome = v;
    }
    if let Some(v) = f.regressors {
        cfg.columns.regressors = v;
    }
    if let Some(v) = f.instruments {
        cfg.columns.instruments = v;
    }
    if let Some(v) = f.zbar {
        cfg.columns.zbar = v;
    }
    if f.constant.is_some() {
        cfg.columns.constant = f.constant;
    }
    if let Some(v) = f.exogenous {
        cfg.columns.exogenous = v;
    }
    if let Some(v) = f.scenario {
        cfg.scenario.scenario = v;
    }
    if let Some(v) = f.alpha {
        cfg.scenario.alpha = v;
    }
    if let Some(v) = f.draws {
        cfg.scenario.draws = v;
    }
    if let Some(v) = f.x_norm {
        cfg.x_norm = match v {
            NormFlag::Rms => XNorm::Rms,
            NormFlag::Maxabs => XNorm::MaxAbs,
        };
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    }
    cfg.scenario.seed = cfg.seed;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let usage = |m: String| Err(Error::Parse(m));
    cfg.scenario.validate()?;
    if !(cfg.c > 0.0 && cfg.c < 1.0) {
        return usage(format!("--c {} must lie in (0, 1)", cfg.c));
    }
    if cfg.threads == Some(0) {
        return usage("--threads must be at least 1".into());
    }
    if cfg.command == "simulate" {
        match cfg.profile.as_deref() {
            Some(p) if PROFILES.contains(&p) => {}
            Some(p) => return usage(format!("unknown profile '{p}'; expected one of {}", PROFILES.join(", "))),
            None => return usage(format!("simulate needs --profile (one of {})", PROFILES.join(", "))),
        }
        if cfg.reps == 0 {
            return usage("--reps must be at least 1".into());
        }
        return Ok(());
    }
    if cfg.data.is_none() {
        return usage(format!("{} needs --data", cfg.command));
    }
    if cfg.columns.outcome.is_empty() {
        return usage("--outcome is required".into());
    }
    cfg.columns.validate()?;
    let needs_s = matches!(cfg.command.as_str(), "sens" | "select" | "twostage" | "nv");
    if needs_s && cfg.s.is_none() {
        return usage(format!("{} needs --s", cfg.command));
    }
    if cfg.command == "ci" && cfg.s.is_none() && cfg.s_list.is_none() {
        return usage("ci needs --s or --s-list".into());
    }
    if cfg.command == "twostage" && cfg.k_end.is_none() {
        return usage("twostage needs --k-end".into());
    }
    if cfg.command == "nv" && cfg.columns.zbar.is_empty() {
        return usage("nv needs --zbar".into());
    }
    Ok(())
}

/// Exit status of an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::SolverFailure(_) => 2,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::DimensionMismatch(_) => "dimension_mismatch",
        Error::DegenerateColumn(_) => "degenerate_column",
        Error::ConstantMissing => "constant_missing",
        Error::InvalidDataset(_) => "invalid_dataset",
        Error::SpecInvalid(_) => "spec_invalid",
        Error::InvalidParams(_) => "invalid_params",
        Error::InfeasibleQuantile(_) => "infeasible_quantile",
        Error::SolverFailure(_) => "solver_failure",
        Error::BlockTooLarge(_) => "block_too_large",
        Error::MismatchedReport(_) => "mismatched_report",
        Error::InfiniteC1 => "infinite_c1",
        Error::DegenerateInstrument => "degenerate_instrument",
        Error::InfinitePilotBound => "infinite_pilot_bound",
        Error::Io(_) => "io",
        Error::Parse(_) => "parse",
    }
}

/// A finished report.
#[derive(Debug, Clone)]
pub struct Report {
    pub text: String,
    pub json: serde_json::Value,
    pub files: Vec<PathBuf>,
}

struct Loaded {
    ds: Dataset,
    cone: Vec<usize>,
    r: f64,
    note: Option<String>,
}

fn instrument_index(ds: &Dataset, name: &str) -> Result<usize> {
    ds.z_names.iter().position(|z| z == name).ok_or_else(|| Error::Parse(format!("'{name}' is not an instrument")))
}

fn load(cfg: &RunConfig) -> Result<Loaded> {
    let path = cfg.data.as_ref().expect("validated");
    if !path.exists() {
        return Err(Error::Io(format!("{}: no such file", path.display())));
    }
    let ds = read_csv(path, &cfg.columns)?;
    let cone = match &cfg.cone_set {
        Some(names) => names.iter().map(|n| instrument_index(&ds, n)).collect::<Result<Vec<_>>>()?,
        None => vec![ds.const_instr_idx()],
    };
    let (r, validity) = resolve_r(&cfg.scenario, &ds, &cone)?;
    Ok(Loaded { ds, cone, r, note: validity.warning() })
}

fn fit_for(cfg: &RunConfig, ld: &Loaded, solver: &SolverConfig) -> Result<StivFit> {
    fit_stiv(&ld.ds, &StivSpec::new(cfg.c, ld.r, ld.cone.clone()).with_norm(cfg.x_norm), solver)
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() { if v > 0.0 { "inf".into() } else { "-inf".into() } } else { format!("{v:.6}") }
}

fn fit_text(ds: &Dataset, fit: &StivFit) -> String {
    let mut out = format!("sigma_hat {:.6}, objective {:.6}, r {:.6}\n", fit.sigma_hat, fit.objective, fit.spec.r);
    for (k, b) in fit.beta_hat.iter().enumerate() {
        let _ = writeln!(out, "{:<16} {:>12.6}", ds.x_names[k], b);
    }
    out
}

fn ci_text(ds: &Dataset, rep: &ConfidenceReport) -> String {
    let mut out = format!("{}: s = {}, tau = {:.6}\n", rep.method, rep.s, rep.tau);
    for i in &rep.intervals {
        let _ = writeln!(
            out,
            "{:<16} {:>12.6} [{:>12}, {:>12}] kappa {:>10}{}",
            ds.x_names[i.k],
            i.estimate,
            fmt_num(i.lower),
            fmt_num(i.upper),
            fmt_num(i.kappa),
            if i.infinite { "  infinite" } else { "" }
        );
    }
    if rep.all_infinite() {
        out.push_str("all intervals are infinite: r is too large relative to the sensitivity\n");
    }
    out
}

fn run_command(cfg: &RunConfig, solver: &SolverConfig) -> Result<(String, serde_json::Value)> {
    if cfg.command == "simulate" {
        let opt = TableOptions {
            seed: cfg.seed,
            reps: cfg.reps,
            c: cfg.c,
            scenario: cfg.scenario.clone(),
            s: cfg.s.unwrap_or(5),
            c_rf: cfg.c_rf,
            threads: cfg.threads,
        };
        let table = build_table(cfg.profile.as_deref().expect("validated"), &opt, solver)?;
        return Ok((table.text, table.json));
    }
    let ld = load(cfg)?;
    let ds = &ld.ds;
    let mut text = String::new();
    if let Some(n) = &ld.note {
        let _ = writeln!(text, "note: {n}");
    }
    let json = match cfg.command.as_str() {
        "fit" => {
            if let Some(grid) = &cfg.c_grid {
                let spec = StivSpec::new(cfg.c, ld.r, ld.cone.clone()).with_norm(cfg.x_norm);
                let exo = (cfg.x_norm == XNorm::MaxAbs).then(|| ds.exo_idx());
                let rep = c_grid(ds, &spec, grid, cfg.s.unwrap_or(1), exo, solver)?;
                for row in &rep.rows {
                    let hw: Vec<String> = row.halfwidths.iter().map(|&h| fmt_num(h)).collect();
                    let _ = writeln!(text, "c {:<6} sigma {:.6} halfwidths {}", row.c, row.sigma_hat, hw.join(" "));
                }
                let _ = writeln!(text, "best c per coordinate: {:?}", rep.best_c);
                json!(rep)
            } else {
                let fit = fit_for(cfg, &ld, solver)?;
                text.push_str(&fit_text(ds, &fit));
                json!(fit.report())
            }
        }
        "sens" => {
            let fit = fit_for(cfg, &ld, solver)?;
            let (sr, _) = certificate_confidence(ds, &fit, cfg.s.expect("validated"), solver)?;
            let _ = writeln!(text, "s = {}, kappa1 = {}", sr.s, fmt_num(sr.kappa1));
            for (k, v) in sr.kappa_coord.iter().enumerate() {
                let _ = writeln!(text, "{:<16} kappa* {:>12}", ds.x_names[k], fmt_num(*v));
            }
            json!({ "s": sr.s, "kappa_coord": sr.kappa_coord, "kappa1": sr.kappa1, "method": sr.method })
        }
        "ci" => {
            let fit = fit_for(cfg, &ld, solver)?;
            text.push_str(&fit_text(ds, &fit));
            if let Some(list) = &cfg.s_list {
                let psi = compute_psi(ds, &fit.dx, &fit.dz)?;
                let exo = (cfg.x_norm == XNorm::MaxAbs).then(|| ds.exo_idx());
                let reps = nested_confsets(&fit, &psi, ld.r, list, exo, solver)?;
                for rep in &reps {
                    text.push_str(&ci_text(ds, rep));
                }
                json!({ "fit": fit.report(), "reports": reps })
            } else {
                let s = cfg.s.expect("validated");
                let (_, cert) = certificate_confidence(ds, &fit, s, solver)?;
                let plug = plugin_for(ds, &fit, solver)?;
                text.push_str(&ci_text(ds, &cert));
                text.push_str(&ci_text(ds, &plug));
                text.push_str(&interval_table_text(&interval_table(&cert, &plug), s));
                json!({ "fit": fit.report(), "certificate": cert, "plugin": plug })
            }
        }
        "select" => {
            let fit = fit_for(cfg, &ld, solver)?;
            let (_, rep) = certificate_confidence(ds, &fit, cfg.s.expect("validated"), solver)?;
            let sel = threshold_from_report(&fit, &rep);
            let names: Vec<&str> = sel.support.iter().map(|&k| ds.x_names[k].as_str()).collect();
            let _ = writeln!(text, "selected: {}", if names.is_empty() { "(none)".to_string() } else { names.join(", ") });
            if sel.infinite_threshold {
                text.push_str("thresholds are infinite: nothing can be selected\n");
            }
            json!({ "fit": fit.report(), "selection": sel })
        }
        "twostage" => {
            let name = cfg.k_end.as_deref().expect("validated");
            let k_end = ds.x_names.iter().position(|x| x == name).ok_or_else(|| Error::Parse(format!("'{name}' is not a regressor")))?;
            let fsf = fit_first_stage(ds, k_end, cfg.c_rf, ld.r, cfg.s_rf, solver)?;
            text.push_str(&first_stage_text(&fsf));
            let s = cfg.s.expect("validated");
            let tsf = fit_stiv_2s(ds, &fsf, cfg.c, ld.r, s, solver)?;
            let plug = plugin_2s(&tsf, solver)?;
            text.push_str(&fit_text(ds, &tsf.fit));
            text.push_str(&interval_table_text(&interval_table(&tsf.report, &plug), s));
            json!({ "first_stage": fsf, "fit": tsf.fit.report(), "certificate": tsf.report, "plugin": plug })
        }
        "nv" => {
            let pilot = fit_for(cfg, &ld, solver)?;
            let (sr, _) = certificate_confidence(ds, &pilot, cfg.s.expect("validated"), solver)?;
            let b_hat = pilot_bound(&pilot, &sr, ld.r)?;
            let l1 = ds.zbar().map_or(0, |z| z.cols);
            let (r1, _) = select_r(&cfg.scenario, ds.n(), l1)?;
            let fit = fit_stiv_nv(ds, &pilot.beta_hat, b_hat, r1, cfg.c, solver)?;
            let bounds = nv_confidence(&fit, cfg.s1);
            let sel = nv_threshold(&fit, cfg.omega.unwrap_or(bounds.linf))?;
            let _ = writeln!(text, "b_hat {}, r1 {:.6}, sigma1 {:.6}, sup-norm bound {}", fmt_num(b_hat), r1, fit.sigma1_hat, fmt_num(bounds.linf));
            for (l, t) in fit.theta_hat.iter().enumerate() {
                let _ = writeln!(text, "{:<16} theta {:>12.6}{}", ds.zbar_names[l], t, if sel.invalid.contains(&l) { "  invalid" } else { "" });
            }
            json!({ "pilot": pilot.report(), "fit": fit, "bounds": bounds, "selection": sel })
        }
        other => return Err(Error::Parse(format!("unknown command '{other}'"))),
    };
    Ok((text, json))
}

/// Runs a validated configuration and writes its report files.
pub fn run(cfg: &RunConfig) -> Result<Report> {
    let solver = SolverConfig::default();
    let (body, payload) = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?
            .install(|| run_command(cfg, &solver))?,
        None => run_command(cfg, &solver)?,
    };
    let echo = serde_json::to_string(cfg).map_err(|e| Error::Io(e.to_string()))?;
    let text = format!("# config {echo}\n{body}");
    let json = json!({ "config": cfg, "report": payload });
    let mut files = Vec::new();
    let dir = match (&cfg.out_dir, cfg.command.as_str()) {
        (Some(d), _) => Some(d.clone()),
        (None, "simulate") => Some(PathBuf::from(".")),
        _ => None,
    };
    if let Some(dir) = dir {
        let stem = if cfg.command == "simulate" { cfg.profile.clone().expect("validated") } else { cfg.command.clone() };
        files = write_report(&dir, &stem, &text, &json)?;
    }
    Ok(Report { text, json, files })
}

fn write_report(dir: &Path, stem: &str, text: &str, json: &serde_json::Value) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let txt = dir.join(format!("{stem}.txt"));
    let js = dir.join(format!("{stem}.json"));
    std::fs::write(&txt, text).map_err(|e| Error::Io(format!("{}: {e}", txt.display())))?;
    let pretty = serde_json::to_string_pretty(json).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&js, pretty).map_err(|e| Error::Io(format!("{}: {e}", js.display())))?;
    Ok(vec![txt, js])
}

/// Parses arguments, runs, prints, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).filter(|n| n != "help").collect();
            eprintln!("commands: {}", names.join(", "));
            return 1;
        }
    };
    let (name, flags) = cli.command.parts();
    let result = parse_config(name, flags).and_then(|cfg| run(&cfg));
    match result {
        Ok(rep) => {
            print!("{}", rep.text);
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", error_kind(&e));
            exit_code(&e)
        }
    }
}
