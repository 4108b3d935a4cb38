//! Configuration-driven experiments and report consolidation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::capacity::{p_capacity_with, volume_radius, SolverOptions};
use crate::counterexample::{run_trend, Schedule, TrendOptions, CERTIFICATE_SEGMENTS, DEFAULT_C0};
use crate::criteria::{
    brute_force_ratio, corollary3_sup, corollary4_ball_sup, corollary5_check, BallDensity, BallSample,
    ProductMeasure1D,
};
use crate::error::{Error, Result};
use crate::grid::{build_domain, volume, DomainGrid, DomainSpec};
use crate::isoperimetric::{cheeger_upper, isocap_bracket, CandidateFamily};
use crate::special::bessel_j_first_zero;
use crate::spectral::{fundamental_eigenvalue_with, EigenOptions};

pub const REPORT_SCHEMA: &str = "capabench.report/1";
pub const SUMMARY_SCHEMA: &str = "capabench.summary/1";
pub const THREADS_ENV: &str = "CAPABENCH_THREADS";

/// Relative slack for property checks.
pub const PROPERTY_TOLERANCE: f64 = 0.03;

#[derive(Debug, Parser)]
#[command(name = "capabench", version, about = "Capacities, eigenvalues and isocapacitary constants on grid domains")]
pub struct Cli {
    /// Worker threads (falls back to CAPABENCH_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Treat warnings as property violations.
        #[arg(long)]
        strict: bool,
    },
    /// Merge reports into one summary.
    Report {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn default_p() -> f64 {
    2.0
}

fn default_dim3() -> usize {
    3
}

fn default_trend_h() -> f64 {
    1.0 / 32.0
}

fn default_c0() -> f64 {
    DEFAULT_C0
}

fn default_segments() -> usize {
    CERTIFICATE_SEGMENTS
}

fn default_budget() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub irls_max_iter: usize,
    pub energy_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            cg_tol: o.cg_tol,
            cg_max_iter: o.cg_max_iter,
            irls_max_iter: o.irls_max_iter,
            energy_tol: o.energy_tol,
        }
    }
}

impl SolverConfig {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            irls_max_iter: self.irls_max_iter,
            energy_tol: self.energy_tol,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenConfig {
    pub residual_tol: f64,
    pub max_iter: usize,
    pub cg_tol: f64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        let o = EigenOptions::default();
        Self { residual_tol: o.residual_tol, max_iter: o.max_iter, cg_tol: o.cg_tol }
    }
}

impl EigenConfig {
    fn options(&self) -> EigenOptions {
        EigenOptions {
            residual_tol: self.residual_tol,
            max_iter: self.max_iter,
            cg_tol: self.cg_tol,
            ..EigenOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check1D {
    Corollary3,
    Corollary5,
    BruteForce,
}

fn all_checks() -> Vec<Check1D> {
    vec![Check1D::Corollary3, Check1D::Corollary5, Check1D::BruteForce]
}

/// One experiment; the `command` key selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    Capacity {
        domain: DomainSpec,
        /// The compact set `F`.
        set: DomainSpec,
        h: f64,
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default)]
        solver: SolverConfig,
        #[serde(default)]
        seed: u64,
    },
    Eigen {
        domain: DomainSpec,
        h: f64,
        #[serde(default)]
        eigen: EigenConfig,
        #[serde(default)]
        seed: u64,
    },
    Cheeger {
        domain: DomainSpec,
        h: f64,
        #[serde(default)]
        candidates: CandidateFamily,
        #[serde(default)]
        seed: u64,
    },
    FaberKrahn {
        domain: DomainSpec,
        h: f64,
        #[serde(default)]
        eigen: EigenConfig,
        #[serde(default)]
        seed: u64,
    },
    Counterexample {
        ns: Vec<usize>,
        #[serde(default = "default_dim3")]
        dim: usize,
        #[serde(default = "default_schedule")]
        schedule: Schedule,
        #[serde(default = "default_trend_h")]
        h: f64,
        #[serde(default = "default_c0")]
        c0: f64,
        #[serde(default = "default_segments")]
        segments: usize,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "criteria-1d")]
    Criteria1d {
        measure: ProductMeasure1D,
        p: f64,
        q: f64,
        #[serde(default = "all_checks")]
        checks: Vec<Check1D>,
        #[serde(default = "default_budget")]
        budget: usize,
        #[serde(default)]
        seed: u64,
    },
    CriteriaBall {
        dim: usize,
        q: f64,
        /// Density `|x - y|^{-a}` on `|x - y| >= cutoff`.
        a: f64,
        #[serde(default)]
        cutoff: f64,
        centers: Vec<Vec<f64>>,
        radii: Vec<f64>,
        #[serde(default)]
        seed: u64,
    },
    Report {
        inputs: Vec<PathBuf>,
        #[serde(default)]
        seed: u64,
    },
}

fn default_schedule() -> Schedule {
    Schedule::GridResolvable
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::Capacity { .. } => "capacity",
            ExperimentConfig::Eigen { .. } => "eigen",
            ExperimentConfig::Cheeger { .. } => "cheeger",
            ExperimentConfig::FaberKrahn { .. } => "faber-krahn",
            ExperimentConfig::Counterexample { .. } => "counterexample",
            ExperimentConfig::Criteria1d { .. } => "criteria-1d",
            ExperimentConfig::CriteriaBall { .. } => "criteria-ball",
            ExperimentConfig::Report { .. } => "report",
        }
    }

    fn seed_mut(&mut self) -> &mut u64 {
        match self {
            ExperimentConfig::Capacity { seed, .. }
            | ExperimentConfig::Eigen { seed, .. }
            | ExperimentConfig::Cheeger { seed, .. }
            | ExperimentConfig::FaberKrahn { seed, .. }
            | ExperimentConfig::Counterexample { seed, .. }
            | ExperimentConfig::Criteria1d { seed, .. }
            | ExperimentConfig::CriteriaBall { seed, .. }
            | ExperimentConfig::Report { seed, .. } => seed,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Capacity { seed, .. }
            | ExperimentConfig::Eigen { seed, .. }
            | ExperimentConfig::Cheeger { seed, .. }
            | ExperimentConfig::FaberKrahn { seed, .. }
            | ExperimentConfig::Counterexample { seed, .. }
            | ExperimentConfig::Criteria1d { seed, .. }
            | ExperimentConfig::CriteriaBall { seed, .. }
            | ExperimentConfig::Report { seed, .. } => *seed,
        }
    }

    fn grid_spacing(&self) -> Option<f64> {
        match self {
            ExperimentConfig::Capacity { h, .. }
            | ExperimentConfig::Eigen { h, .. }
            | ExperimentConfig::Cheeger { h, .. }
            | ExperimentConfig::FaberKrahn { h, .. }
            | ExperimentConfig::Counterexample { h, .. } => Some(*h),
            _ => None,
        }
    }
}

/// Parses a config file; errors carry the path and serde's line/key diagnostics.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config { path: path.to_path_buf(), message: e.to_string() })?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config { path: path.to_path_buf(), message: e.to_string() })?;
    validate(&cfg).map_err(|message| Error::Config { path: path.to_path_buf(), message })?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig) -> std::result::Result<(), String> {
    if let Some(h) = cfg.grid_spacing() {
        if !(h > 0.0 && h < 1.0) {
            return Err(format!("h = {h} must lie in (0, 1)"));
        }
    }
    match cfg {
        ExperimentConfig::Counterexample { ns, .. } if ns.is_empty() => Err("ns must be non-empty".into()),
        ExperimentConfig::CriteriaBall { centers, radii, .. } if centers.is_empty() || radii.is_empty() => {
            Err("centers and radii must be non-empty".into())
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    /// Grid spacing used, when the command discretises a domain.
    pub h: Option<f64>,
    pub tolerance: Value,
    pub config: Value,
    pub status: Status,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    pub results: Value,
}

struct Outcome {
    results: Value,
    tolerance: Value,
    violations: Vec<String>,
    warnings: Vec<String>,
    tables: Vec<(String, String)>,
}

impl Outcome {
    fn new(results: Value, tolerance: Value) -> Self {
        Self { results, tolerance, violations: Vec::new(), warnings: Vec::new(), tables: Vec::new() }
    }
}

fn grid_for(domain: &DomainSpec, h: f64) -> Result<DomainGrid> {
    build_domain(domain, h)
}

/// Executes `cfg` and returns the report plus CSV tables `(file name, contents)`.
pub fn execute(cfg: &ExperimentConfig, strict: bool) -> Result<(Report, Vec<(String, String)>)> {
    let mut out = match cfg {
        ExperimentConfig::Capacity { domain, set, h, p, solver, .. } => {
            let omega = grid_for(domain, *h)?.with_interface(set);
            let f = omega.select_indicator(set);
            let r = p_capacity_with(&f, &omega, *p, solver.options())?;
            let results = json!({
                "capacity": r.value,
                "iterations": r.iterations,
                "residual": r.residual,
                "set_volume": volume(&omega, &f),
                "domain_volume": volume(&omega, &omega.all_interior()),
            });
            Outcome::new(results, json!({ "cg_tol": solver.cg_tol, "energy_tol": solver.energy_tol }))
        }
        ExperimentConfig::Eigen { domain, h, eigen, .. } => {
            let omega = grid_for(domain, *h)?;
            let r = fundamental_eigenvalue_with(&omega, eigen.options())?;
            let results = json!({
                "lambda": r.lambda,
                "residual": r.residual,
                "iterations": r.iterations,
                "volume": volume(&omega, &omega.all_interior()),
            });
            Outcome::new(results, json!({ "residual_tol": eigen.residual_tol }))
        }
        ExperimentConfig::Cheeger { domain, h, candidates, .. } => {
            let omega = grid_for(domain, *h)?;
            let cheeger = cheeger_upper(&omega, candidates)?.summary();
            let isocap = isocap_bracket(&omega, candidates)?.summary();
            let mut o = Outcome::new(
                json!({ "cheeger": cheeger, "isocapacitary": isocap }),
                json!({ "bracket": "lower <= constant <= upper" }),
            );
            if isocap.lower > isocap.upper * (1.0 + PROPERTY_TOLERANCE) {
                o.violations.push(format!("isocapacitary bracket inverted: {} > {}", isocap.lower, isocap.upper));
            }
            o
        }
        ExperimentConfig::FaberKrahn { domain, h, eigen, .. } => {
            let omega = grid_for(domain, *h)?;
            let dim = omega.dim();
            let r = fundamental_eigenvalue_with(&omega, eigen.options())?;
            let vol = volume(&omega, &omega.all_interior());
            let radius = volume_radius(dim, vol);
            let j = bessel_j_first_zero(dim as f64 / 2.0 - 1.0);
            let bound = (j / radius).powi(2);
            let mut o = Outcome::new(
                json!({ "lambda": r.lambda, "volume": vol, "equal_volume_radius": radius, "bound": bound }),
                json!({ "relative": PROPERTY_TOLERANCE, "residual_tol": eigen.residual_tol }),
            );
            if r.lambda < bound * (1.0 - PROPERTY_TOLERANCE) {
                o.violations.push(format!("lambda {} below the ball value {bound}", r.lambda));
            }
            o
        }
        ExperimentConfig::Counterexample { ns, dim, schedule, h, c0, segments, seed } => {
            let opts = TrendOptions { h: *h, c0: *c0, segments: *segments, seed: *seed, ..TrendOptions::default() };
            let table = match run_trend(ns, *dim, *schedule, opts) {
                Err(Error::TrendViolated(msg)) => {
                    let mut o = Outcome::new(json!({ "trend": Value::Null }), json!({ "lambda_drop": opts.tolerance }));
                    o.violations.push(msg);
                    return finish(cfg, o, strict);
                }
                other => other?,
            };
            let mut csv = Vec::new();
            table.write_csv(&mut csv)?;
            let mut o = Outcome::new(
                serde_json::to_value(&table)?,
                json!({ "lambda_drop": opts.tolerance, "segments": segments }),
            );
            if !table.lambda_strictly_increasing {
                o.violations.push("eigenvalue trend not strictly increasing".into());
            }
            if !table.gamma_upper_in_band {
                o.warnings.push("gamma upper bound outside the target band".into());
            }
            if table.rows.iter().any(|r| r.clamped) {
                o.warnings.push("cone opening clamped to the grid-resolvable floor".into());
            }
            o.tables.push(("trend.csv".into(), String::from_utf8(csv).expect("utf-8 csv")));
            o
        }
        ExperimentConfig::Criteria1d { measure, p, q, checks, budget, seed } => {
            let mut results = serde_json::Map::new();
            let mut o = Outcome::new(Value::Null, json!({ "relative": PROPERTY_TOLERANCE }));
            let mut bound = None;
            for check in checks {
                match check {
                    Check1D::Corollary3 => {
                        let r = corollary3_sup(measure, *q)?;
                        if *p == 1.0 {
                            bound = Some(r.implied_constant);
                        }
                        o.warnings.extend(r.notes.iter().filter(|n| n.contains("truncated")).cloned());
                        results.insert("corollary3".into(), serde_json::to_value(&r)?);
                    }
                    Check1D::Corollary5 => {
                        let r = corollary5_check(measure, *p, *q)?;
                        if *p > 1.0 && *q > *p {
                            bound = Some(r.implied_constant);
                        }
                        if *q == *p {
                            o.warnings.push("p = q: interval condition is necessary only".into());
                        }
                        results.insert("corollary5".into(), serde_json::to_value(&r)?);
                    }
                    Check1D::BruteForce => {
                        let r = brute_force_ratio(measure, *p, *q, *budget, *seed)?;
                        results.insert(
                            "brute_force".into(),
                            json!({ "ratio": r.ratio, "evaluations": r.evaluations, "seed": r.seed }),
                        );
                    }
                }
            }
            if let (Some(b), Some(ratio)) =
                (bound, results.get("brute_force").and_then(|v| v["ratio"].as_f64()))
            {
                if ratio > b * (1.0 + PROPERTY_TOLERANCE) {
                    o.violations.push(format!("brute-force ratio {ratio} exceeds sufficiency bound {b}"));
                }
            }
            o.results = Value::Object(results);
            o
        }
        ExperimentConfig::CriteriaBall { dim, q, a, cutoff, centers, radii, .. } => {
            let samples: Vec<BallSample> = centers
                .iter()
                .flat_map(|c| radii.iter().map(move |&r| BallSample { center: c.clone(), radius: r }))
                .collect();
            let r = corollary4_ball_sup(&BallDensity::Power { a: *a, cutoff: *cutoff }, *dim, *q, &samples)?;
            Outcome::new(serde_json::to_value(&r)?, json!({ "quadrature": "graded Gauss-Legendre" }))
        }
        ExperimentConfig::Report { inputs, .. } => {
            let summary = summarize(inputs)?;
            let mut o = Outcome::new(serde_json::to_value(&summary)?, Value::Null);
            o.tables.push(("summary.csv".into(), summary.to_csv()));
            o
        }
    };
    out.tables.sort();
    finish(cfg, out, strict)
}

fn finish(cfg: &ExperimentConfig, mut o: Outcome, strict: bool) -> Result<(Report, Vec<(String, String)>)> {
    if strict && !o.warnings.is_empty() {
        o.violations.extend(o.warnings.iter().map(|w| format!("strict: {w}")));
    }
    let report = Report {
        schema: REPORT_SCHEMA.into(),
        command: cfg.name().into(),
        seed: cfg.seed(),
        h: cfg.grid_spacing(),
        tolerance: o.tolerance,
        config: serde_json::to_value(cfg)?,
        status: if o.violations.is_empty() { Status::Ok } else { Status::Violation },
        violations: o.violations,
        warnings: o.warnings,
        results: o.results,
    };
    Ok((report, o.tables))
}

/// Runs a config file and writes `report.json` plus tables into `out`.
/// Nothing is written when the config does not parse.
pub fn run(config: &Path, out: &Path, seed: Option<u64>, strict: bool) -> Result<Report> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        *cfg.seed_mut() = s;
    }
    eprintln!("{}", serde_json::to_string(&cfg)?);
    let (report, tables) = execute(&cfg, strict)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), to_json(&report)?)?;
    for (name, body) in tables {
        fs::write(out.join(name), body)?;
    }
    Ok(report)
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub source: String,
    pub command: String,
    pub status: Status,
    pub seed: u64,
    pub h: Option<f64>,
    /// Top-level numeric results.
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,command,status,seed,h,metric,value\n");
        for r in &self.rows {
            let status = if r.status == Status::Ok { "ok" } else { "violation" };
            let h = r.h.map(|h| h.to_string()).unwrap_or_default();
            if r.metrics.is_empty() {
                s.push_str(&format!("{},{},{},{},{},,\n", r.source, r.command, status, r.seed, h));
            }
            for (k, v) in &r.metrics {
                s.push_str(&format!("{},{},{},{},{},{},{}\n", r.source, r.command, status, r.seed, h, k, v));
            }
        }
        s
    }
}

/// Merges report files into one summary; fails on any other schema.
pub fn summarize(inputs: &[PathBuf]) -> Result<Summary> {
    let mut rows = Vec::with_capacity(inputs.len());
    for path in inputs {
        let text = fs::read_to_string(path)?;
        let v: Value = serde_json::from_str(&text)?;
        let found = v.get("schema").and_then(Value::as_str).unwrap_or("<missing>");
        if found != REPORT_SCHEMA {
            return Err(Error::SchemaMismatch {
                path: path.clone(),
                expected: REPORT_SCHEMA.into(),
                found: found.into(),
            });
        }
        let report: Report = serde_json::from_value(v)?;
        let metrics = match &report.results {
            Value::Object(m) => m.iter().filter_map(|(k, v)| v.as_f64().map(|x| (k.clone(), x))).collect(),
            _ => Vec::new(),
        };
        rows.push(SummaryRow {
            source: path.display().to_string(),
            command: report.command,
            status: report.status,
            seed: report.seed,
            h: report.h,
            metrics,
        });
    }
    Ok(Summary { schema: SUMMARY_SCHEMA.into(), rows })
}

/// Writes `summary.json` and `summary.csv` into `out`.
pub fn report(inputs: &[PathBuf], out: &Path) -> Result<Summary> {
    let summary = summarize(inputs)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("summary.json"), to_json(&summary)?)?;
    fs::write(out.join("summary.csv"), summary.to_csv())?;
    Ok(summary)
}

pub fn configure_threads(threads: Option<usize>) {
    let n = threads.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()));
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Process exit code: 0 success, 2 property violation, 1 any error.
pub fn main_with(cli: Cli) -> i32 {
    configure_threads(cli.threads);
    let result = match cli.command {
        CliCommand::Run { config, out, seed, strict } => run(&config, &out, seed, strict).map(|r| r.status),
        CliCommand::Report { inputs, out } => report(&inputs, &out).map(|_| Status::Ok),
    };
    match result {
        Ok(Status::Ok) => 0,
        Ok(Status::Violation) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
