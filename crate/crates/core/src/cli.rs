//! Command-line front end: configuration, dispatch and file output.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{
    branch_from_hopf, similarity_study, AbsorberKind, ContinuationOptions, LcoBranch,
};
use crate::error::Error;
use crate::io::{branch_table, events_table, num, series_table, Metadata, Table};
use crate::lco::{iso_amplitude_map, lco_amplitude_local_of};
use crate::model::{DimensionlessSystem, StateVector};
use crate::nes::{compare_time_series, nes_boundary, nes_branch, NesSweep, TimeSeriesOptions};
use crate::normal_form::{
    critical_alpha3, decomposition_of, hopf_point, hopf_point_of, normal_form, supercritical_probability_in,
    AbsorberRule, TuningUncertainty,
};
use crate::ode::integrate;
use crate::stability::{
    critical_mu1, double_hopf_locus, linspace, optimal_tuning, points_ab, stability_chart, ChartGrid,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const THREADS_ENV: &str = "LCO_GUARD_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Numerical(Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain { .. } | Error::Unsupported(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------- config

/// System block; missing linear parameters default to the optimal tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub eps: f64,
    #[serde(default)]
    pub mu1: Option<f64>,
    #[serde(default)]
    pub mu2: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub alpha3: f64,
    #[serde(default)]
    pub beta2: f64,
    #[serde(default)]
    pub beta3: f64,
    #[serde(default)]
    pub beta5: f64,
    /// Sink damping; makes the absorber a sink (no linear spring).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl SystemSpec {
    pub fn with_eps(eps: f64) -> SystemSpec {
        SystemSpec { eps, mu1: None, mu2: None, gamma: None, alpha3: 0.0, beta2: 0.0, beta3: 0.0, beta5: 0.0, lambda: None }
    }

    fn fill_defaults(&mut self) {
        let sink = self.lambda.is_some();
        let t = optimal_tuning(self.eps);
        self.mu1.get_or_insert(0.0);
        self.mu2.get_or_insert(if sink { 0.0 } else { t.mu2_opt });
        self.gamma.get_or_insert(if sink { 0.0 } else { t.gamma_opt });
    }

    pub fn system(&self) -> DimensionlessSystem {
        let t = optimal_tuning(self.eps);
        DimensionlessSystem {
            eps: self.eps,
            mu1: self.mu1.unwrap_or(0.0),
            mu2: self.mu2.unwrap_or(t.mu2_opt),
            gamma: self.gamma.unwrap_or(t.gamma_opt),
            alpha3: self.alpha3,
            beta2: self.beta2,
            beta3: self.beta3,
            beta5: self.beta5,
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Span {
    pub fn new(min: f64, max: f64, n: usize) -> Span {
        Span { min, max, n }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.n)
    }

    fn check(&self, field: &str) -> CliResult<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) || self.n == 0 {
            return Err(CliError::Config(format!("`{field}`: need finite min <= max and n >= 1")));
        }
        if self.n > 1 && self.min == self.max {
            return Err(CliError::Config(format!("`{field}`: several nodes over an empty range")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub mu1: Span,
    pub mu2: Span,
    pub gamma: Span,
    /// Distance past onset for amplitude maps.
    pub delta_mu1: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            mu1: Span::new(0.0, 0.2, 81),
            mu2: Span::new(0.04, 0.2, 33),
            gamma: Span::new(0.94, 1.02, 33),
            delta_mu1: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbabilitySpec {
    pub alpha3: Vec<f64>,
    pub n_samples: usize,
    pub window: TuningUncertainty,
}

impl Default for ProbabilitySpec {
    fn default() -> Self {
        ProbabilitySpec {
            alpha3: (1..=10).map(|i| i as f64 / 10.0).collect(),
            n_samples: 10_000,
            window: TuningUncertainty::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSpec {
    pub x0: [f64; 4],
    pub t_end: f64,
    pub tol: f64,
    pub samples: usize,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        SimulateSpec { x0: [0.01, 0.0, 0.0, 0.0], t_end: 500.0, tol: 1e-9, samples: 2001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NesSpec {
    /// Time-series comparison point.
    pub mu1: f64,
    pub alpha3: f64,
    pub time_series: TimeSeriesOptions,
    pub lambda: Span,
    /// Cubic ratio of the primary for the sink branches.
    pub branch_alpha3: f64,
    pub vary_knl2: NesSweep,
    pub vary_c2: NesSweep,
}

impl Default for NesSpec {
    fn default() -> Self {
        NesSpec {
            mu1: 0.025,
            alpha3: 4.0 / 3.0,
            time_series: TimeSeriesOptions::default(),
            lambda: Span::new(0.0, 4.0, 81),
            branch_alpha3: 0.3,
            vary_knl2: NesSweep::default_knl2(),
            vary_c2: NesSweep::default_c2(),
        }
    }
}

/// Absorber coefficients for the similarity study; `None` picks the default
/// of [`AbsorberKind::default_coefficient`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilaritySpec {
    pub quadratic: Option<f64>,
    pub cubic: Option<f64>,
    pub quintic: Option<f64>,
}

impl SimilaritySpec {
    fn fill_defaults(&mut self, eps: f64, alpha3: f64) {
        self.quadratic.get_or_insert(AbsorberKind::Quadratic.default_coefficient(eps, alpha3));
        self.cubic.get_or_insert(AbsorberKind::Cubic.default_coefficient(eps, alpha3));
        self.quintic.get_or_insert(AbsorberKind::Quintic.default_coefficient(eps, alpha3));
    }

    pub fn coefficient(&self, kind: AbsorberKind, eps: f64, alpha3: f64) -> f64 {
        let given = match kind {
            AbsorberKind::Linear => Some(0.0),
            AbsorberKind::Quadratic => self.quadratic,
            AbsorberKind::Cubic => self.cubic,
            AbsorberKind::Quintic => self.quintic,
        };
        given.unwrap_or_else(|| kind.default_coefficient(eps, alpha3))
    }
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub continuation: ContinuationOptions,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub probability: ProbabilitySpec,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub nes: NesSpec,
    #[serde(default)]
    pub similarity: SimilaritySpec,
}

impl RunConfig {
    pub fn with_eps(eps: f64) -> RunConfig {
        RunConfig {
            system: SystemSpec::with_eps(eps),
            seed: default_seed(),
            continuation: ContinuationOptions::default(),
            grid: GridSpec::default(),
            probability: ProbabilitySpec::default(),
            simulate: SimulateSpec::default(),
            nes: NesSpec::default(),
            similarity: SimilaritySpec::default(),
        }
    }

    /// Fills every defaulted value so the echo in the output header is complete.
    pub fn fill_defaults(&mut self) {
        self.system.fill_defaults();
        self.similarity.fill_defaults(self.system.eps, self.system.alpha3);
    }

    pub fn validate(&self) -> CliResult<()> {
        self.system.system().validate()?;
        self.continuation.validate()?;
        self.grid.mu1.check("grid.mu1")?;
        self.grid.mu2.check("grid.mu2")?;
        self.grid.gamma.check("grid.gamma")?;
        self.nes.lambda.check("nes.lambda")?;
        if !(self.grid.delta_mu1 > 0.0) {
            return Err(Error::domain("delta_mu1", "must be positive").into());
        }
        if self.probability.n_samples == 0 {
            return Err(Error::domain("n_samples", "at least one sample is required").into());
        }
        if !(self.simulate.t_end > 0.0) || self.simulate.samples < 2 {
            return Err(CliError::Config("`simulate`: need t_end > 0 and at least two samples".into()));
        }
        if !(self.nes.mu1 > 0.0) {
            return Err(Error::domain("mu1", "the sink comparison needs mu1 > 0").into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Parses a config from inline JSON (starting with `{`) or a file path,
/// fills defaults and validates.
pub fn parse_config(input: &str) -> CliResult<RunConfig> {
    let text = if input.trim_start().starts_with('{') {
        input.to_string()
    } else {
        fs::read_to_string(input).map_err(|e| CliError::Config(format!("cannot read `{input}`: {e}")))?
    };
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.fill_defaults();
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------- arguments

#[derive(Debug, Parser)]
#[command(name = "lco-guard", version, about = "Tuning and validation of nonlinear absorbers against limit cycle oscillations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config as a JSON file path or inline JSON object.
    #[arg(long)]
    pub config: Option<String>,
    /// Overrides `system.eps`.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Optimal linear tuning and stability limit.
    Tune(Common),
    /// Stability chart over the (mu1, mu2, gamma) grid.
    StabilityChart(Common),
    /// Hopf point and criticality of the configured system, plus a sweep of
    /// the criticality coefficients over the (mu2, gamma) grid.
    NormalForm(Common),
    /// Probability of a supercritical bifurcation under mistuning.
    Probability {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Near-onset LCO amplitude over the (mu2, gamma) grid.
    IsoAmplitude {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        delta_mu1: Option<f64>,
    },
    /// Cycle branch born at the Hopf point of the configured system.
    Bifurcate {
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        mu1_min: Option<f64>,
        #[arg(long)]
        mu1_max: Option<f64>,
        /// Branch CSV; events go next to it as `<stem>_events.csv`.
        #[arg(long, default_value = "branch.csv")]
        out: PathBuf,
    },
    /// Branches for linear, quadratic, cubic and quintic absorbers.
    Similarity(Common),
    /// Time series of the configured system.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Sink boundary and the no absorber / sink / tuned absorber time series.
    NesCompare(Common),
    /// Data behind one of the reference figures (2 to 16).
    ReproduceFigure {
        figure: u32,
        #[arg(long)]
        panel: Option<char>,
        #[command(flatten)]
        common: Common,
    },
    /// Regenerates a file from the metadata header of an earlier output.
    Rerun {
        file: PathBuf,
        /// Output directory (or branch file for `bifurcate`).
        #[arg(long)]
        out: PathBuf,
    },
}

/// What to run, without the output location.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Tune,
    StabilityChart,
    NormalForm,
    Probability,
    IsoAmplitude,
    Bifurcate,
    Similarity,
    Simulate,
    NesCompare,
    ReproduceFigure { figure: u32, panel: Option<char> },
}

impl Task {
    /// Words recorded on the `# command:` header line.
    pub fn header(&self) -> String {
        match self {
            Task::Tune => "tune".into(),
            Task::StabilityChart => "stability-chart".into(),
            Task::NormalForm => "normal-form".into(),
            Task::Probability => "probability".into(),
            Task::IsoAmplitude => "iso-amplitude".into(),
            Task::Bifurcate => "bifurcate".into(),
            Task::Similarity => "similarity".into(),
            Task::Simulate => "simulate".into(),
            Task::NesCompare => "nes-compare".into(),
            Task::ReproduceFigure { figure, panel: None } => format!("reproduce-figure {figure}"),
            Task::ReproduceFigure { figure, panel: Some(p) } => format!("reproduce-figure {figure} --panel {p}"),
        }
    }

    fn parse_header(words: &str) -> CliResult<Task> {
        let w: Vec<&str> = words.split_whitespace().collect();
        let bad = || CliError::Config(format!("unrecognised command line in header: `{words}`"));
        Ok(match w.as_slice() {
            ["tune"] => Task::Tune,
            ["stability-chart"] => Task::StabilityChart,
            ["normal-form"] => Task::NormalForm,
            ["probability"] => Task::Probability,
            ["iso-amplitude"] => Task::IsoAmplitude,
            ["bifurcate"] => Task::Bifurcate,
            ["similarity"] => Task::Similarity,
            ["simulate"] => Task::Simulate,
            ["nes-compare"] => Task::NesCompare,
            ["reproduce-figure", n] => Task::ReproduceFigure { figure: n.parse().map_err(|_| bad())?, panel: None },
            ["reproduce-figure", n, "--panel", p] if p.chars().count() == 1 => Task::ReproduceFigure {
                figure: n.parse().map_err(|_| bad())?,
                panel: p.chars().next(),
            },
            _ => return Err(bad()),
        })
    }
}

fn load(config: Option<&str>, eps: Option<f64>) -> CliResult<RunConfig> {
    let mut cfg = match config {
        Some(c) => {
            let text = if c.trim_start().starts_with('{') {
                c.to_string()
            } else {
                fs::read_to_string(c).map_err(|e| CliError::Config(format!("cannot read `{c}`: {e}")))?
            };
            serde_json::from_str::<RunConfig>(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => RunConfig::with_eps(0.05),
    };
    if let Some(e) = eps {
        cfg.system.eps = e;
    }
    Ok(cfg)
}

const DEFAULT_OUT: &str = "lco-guard-out";

/// Turns parsed arguments into a task, its effective config and output path.
pub fn resolve(command: Command) -> CliResult<(Task, RunConfig, Option<PathBuf>)> {
    let common_task = |task: Task, c: Common| -> CliResult<(Task, RunConfig, Option<PathBuf>)> {
        let cfg = load(c.config.as_deref(), c.eps)?;
        Ok((task, cfg, c.out))
    };
    let (task, mut cfg, out) = match command {
        Command::Tune(c) => common_task(Task::Tune, c)?,
        Command::StabilityChart(c) => common_task(Task::StabilityChart, c)?,
        Command::NormalForm(c) => common_task(Task::NormalForm, c)?,
        Command::Probability { common, n_samples, seed } => {
            let (t, mut cfg, out) = common_task(Task::Probability, common)?;
            if let Some(n) = n_samples {
                cfg.probability.n_samples = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            (t, cfg, out)
        }
        Command::IsoAmplitude { common, delta_mu1 } => {
            let (t, mut cfg, out) = common_task(Task::IsoAmplitude, common)?;
            if let Some(d) = delta_mu1 {
                cfg.grid.delta_mu1 = d;
            }
            (t, cfg, out)
        }
        Command::Bifurcate { config, eps, mu1_min, mu1_max, out } => {
            let mut cfg = load(config.as_deref(), eps)?;
            if let Some(m) = mu1_min {
                cfg.continuation.mu1_min = m;
            }
            if let Some(m) = mu1_max {
                cfg.continuation.mu1_max = m;
            }
            (Task::Bifurcate, cfg, Some(out))
        }
        Command::Similarity(c) => common_task(Task::Similarity, c)?,
        Command::Simulate { common, t_end } => {
            let (t, mut cfg, out) = common_task(Task::Simulate, common)?;
            if let Some(te) = t_end {
                cfg.simulate.t_end = te;
            }
            (t, cfg, out)
        }
        Command::NesCompare(c) => common_task(Task::NesCompare, c)?,
        Command::ReproduceFigure { figure, panel, common } => {
            common_task(Task::ReproduceFigure { figure, panel }, common)?
        }
        Command::Rerun { file, out } => {
            let meta = Metadata::read(&file)?;
            let task = Task::parse_header(&meta.command)?;
            let cfg: RunConfig = serde_json::from_value(meta.config).map_err(|e| CliError::Config(e.to_string()))?;
            (task, cfg, Some(out))
        }
    };
    cfg.fill_defaults();
    cfg.validate()?;
    Ok((task, cfg, out))
}

// ---------------------------------------------------------------- dispatch

/// Collects output files and writes them under one metadata header.
struct Sink {
    dir: PathBuf,
    meta: Metadata,
    written: Vec<PathBuf>,
}

impl Sink {
    fn table(&mut self, name: &str, t: &Table) -> CliResult<()> {
        let path = self.dir.join(name);
        t.write(&path, &self.meta)?;
        self.written.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::create_dir_all(&self.dir)?;
        let doc = serde_json::json!({ "metadata": self.meta, "report": value });
        fs::write(&path, serde_json::to_string_pretty(&doc).expect("report serializes") + "\n")?;
        self.written.push(path);
        Ok(())
    }

    fn branch(&mut self, stem: &str, b: &LcoBranch) -> CliResult<()> {
        self.table(&format!("{stem}.csv"), &branch_table(b))?;
        self.table(&format!("{stem}_events.csv"), &events_table(&b.events))
    }
}

/// Runs a task and returns the files written plus a short text summary.
pub fn dispatch(task: &Task, cfg: &RunConfig, out: Option<&Path>) -> CliResult<(Vec<PathBuf>, String)> {
    let meta = Metadata { command: task.header(), seed: cfg.seed, config: cfg.to_json() };
    let default_dir = PathBuf::from(DEFAULT_OUT);
    if let Task::Bifurcate = task {
        let path = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("branch.csv"));
        let b = branch_from_hopf(&cfg.system.system(), &cfg.continuation)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("branch").to_string();
        let events = path.with_file_name(format!("{stem}_events.csv"));
        branch_table(&b).write(&path, &meta)?;
        events_table(&b.events).write(&events, &meta)?;
        return Ok((vec![path, events], branch_summary("branch", &b)));
    }
    let mut sink = Sink { dir: out.map(Path::to_path_buf).unwrap_or(default_dir), meta, written: Vec::new() };
    let sys = cfg.system.system();
    let eps = sys.eps;
    let mut summary;
    match task {
        Task::Tune => {
            let t = optimal_tuning(eps);
            summary = format!("gamma_opt = {}\nmu2_opt = {}\nmu1_max = {}\n", t.gamma_opt, t.mu2_opt, t.mu1_max);
            if out.is_some() {
                let mut tab = Table::new(&["eps", "gamma_opt", "mu2_opt", "mu1_max"]);
                tab.push(vec![num(eps), num(t.gamma_opt), num(t.mu2_opt), num(t.mu1_max)]);
                sink.table("tune.csv", &tab)?;
            }
        }
        Task::StabilityChart => {
            let grid = ChartGrid { mu1: cfg.grid.mu1.values(), mu2: cfg.grid.mu2.values(), gamma: cfg.grid.gamma.values() };
            let chart = stability_chart(eps, grid)?;
            let mut tab = Table::new(&["mu1", "mu2", "gamma", "stable", "unstable_pairs", "boundary"]);
            for n in &chart.nodes {
                tab.push(vec![
                    num(n.mu1),
                    num(n.mu2),
                    num(n.gamma),
                    n.stable.to_string(),
                    n.unstable_pairs.to_string(),
                    n.boundary.to_string(),
                ]);
            }
            sink.table("chart.csv", &tab)?;
            sink.table("boundary.csv", &boundary_table(eps, &cfg.grid.mu2.values(), &cfg.grid.gamma.values()))?;
            sink.table("double_hopf.csv", &double_hopf_table(eps, &cfg.grid.mu2.values()))?;
            let stable = chart.nodes.iter().filter(|n| n.stable).count();
            summary = format!("{} nodes, {} stable\n", chart.nodes.len(), stable);
        }
        Task::NormalForm => {
            let hopf = hopf_point_of(&sys)?;
            let nf = normal_form(&sys, &hopf)?;
            summary = format!(
                "mu1_cr = {}\nomega = {}\ndelta0 = {}\ndelta_alpha = {}\ndelta_beta = {}\ndelta = {}\ncriticality = {:?}\n",
                hopf.mu1_cr, hopf.omega1, nf.delta0, nf.delta_alpha, nf.delta_beta, nf.delta, nf.criticality
            );
            sink.table("normal_form.csv", &delta_table(eps, &cfg.grid.mu2.values(), &cfg.grid.gamma.values())?)?;
        }
        Task::Probability => {
            let tab = probability_table(eps, &cfg.probability, cfg.seed, &[AbsorberRule::Ltva, AbsorberRule::Nltva])?;
            summary = tab.rows.iter().map(|r| format!("{} {} {}\n", r[0], r[1], r[2])).collect();
            sink.table("probability.csv", &tab)?;
        }
        Task::IsoAmplitude => {
            let tab = iso_table(eps, sys.alpha3, sys.beta3, cfg.grid.delta_mu1, &cfg.grid)?;
            summary = format!("{} cells\n", tab.rows.len());
            sink.table("iso_amplitude.csv", &tab)?;
        }
        Task::Bifurcate => unreachable!("handled above"),
        Task::Similarity => {
            let kinds = AbsorberKind::ALL;
            let mu2 = sys.mu2;
            let gamma = sys.gamma;
            summary = similarity_into(&mut sink, "similarity", eps, mu2, gamma, sys.alpha3, &kinds, cfg)?;
        }
        Task::Simulate => {
            let s = &cfg.simulate;
            let tr = integrate(&sys, StateVector::from(s.x0), s.t_end, s.tol, s.samples)?;
            sink.table("series.csv", &series_table(tr.t.iter().copied().zip(tr.x.iter())))?;
            summary = format!("final state {:?}\n", tr.last().as_slice());
        }
        Task::NesCompare => {
            summary = nes_compare_into(&mut sink, "nes", cfg, &['a', 'b', 'c'])?;
            let b = nes_boundary(eps, &cfg.nes.lambda.values())?;
            let mut tab = Table::new(&["lambda", "mu1_max", "mu1_max_eigen"]);
            for p in &b.points {
                tab.push(vec![num(p.lambda), num(p.mu1_max), num(p.mu1_max_eigen)]);
            }
            sink.table("nes_boundary.csv", &tab)?;
            summary += &format!("best lambda = {}, mu1_max = {}\n", b.lambda_best, b.mu1_max_best);
        }
        Task::ReproduceFigure { figure, panel } => {
            summary = reproduce_figure(&mut sink, *figure, *panel, cfg)?;
        }
    }
    Ok((sink.written, summary))
}

fn branch_summary(name: &str, b: &LcoBranch) -> String {
    format!(
        "{name}: mu1_cr = {}, onset {:?}, {} points, {} folds, {} neimark-sacker, ended by {:?}\n",
        b.origin.mu1_cr,
        b.onset(),
        b.points.len(),
        b.count(crate::continuation::EventKind::Fold),
        b.count(crate::continuation::EventKind::NeimarkSacker),
        b.termination
    )
}

fn boundary_table(eps: f64, mu2: &[f64], gamma: &[f64]) -> Table {
    let nodes: Vec<(f64, f64)> = mu2.iter().flat_map(|&m| gamma.iter().map(move |&g| (m, g))).collect();
    let rows: Vec<Vec<String>> = nodes
        .par_iter()
        .map(|&(m, g)| vec![num(m), num(g), num(critical_mu1(eps, m, g))])
        .collect();
    Table { header: vec!["mu2".into(), "gamma".into(), "mu1_cr".into()], rows }
}

fn double_hopf_table(eps: f64, mu2: &[f64]) -> Table {
    let mut t = Table::new(&["mu1", "mu2", "gamma"]);
    for p in double_hopf_locus(eps, mu2) {
        t.push(vec![num(p.mu1), num(p.mu2), num(p.gamma)]);
    }
    t
}

fn delta_table(eps: f64, mu2: &[f64], gamma: &[f64]) -> CliResult<Table> {
    let nodes: Vec<(f64, f64)> = mu2.iter().flat_map(|&m| gamma.iter().map(move |&g| (m, g))).collect();
    let rows: Vec<Option<Vec<String>>> = nodes
        .par_iter()
        .map(|&(m, g)| {
            let h = hopf_point(eps, m, g).ok()?;
            let d = decomposition_of(&h).ok()?;
            let c = d.coefficients;
            Some(vec![num(m), num(g), num(d.mu1_cr), num(c.delta0), num(c.delta_alpha), num(c.delta_beta)])
        })
        .collect();
    Ok(Table {
        header: ["mu2", "gamma", "mu1_cr", "delta0", "delta_alpha", "delta_beta"].map(String::from).to_vec(),
        rows: rows.into_iter().flatten().collect(),
    })
}

fn critical_alpha3_table(eps: f64, mu2: &[f64], gamma: &[f64], rule: AbsorberRule, positive: bool) -> Table {
    let nodes: Vec<(f64, f64)> = mu2.iter().flat_map(|&m| gamma.iter().map(move |&g| (m, g))).collect();
    let rows: Vec<Option<Vec<String>>> = nodes
        .par_iter()
        .map(|&(m, g)| {
            let c = critical_alpha3(eps, m, g, rule).ok()?;
            let v = if positive { c.positive } else { c.negative };
            Some(vec![num(m), num(g), num(v)])
        })
        .collect();
    Table {
        header: ["mu2", "gamma", "alpha3_cr"].map(String::from).to_vec(),
        rows: rows.into_iter().flatten().collect(),
    }
}

fn probability_table(eps: f64, p: &ProbabilitySpec, seed: u64, rules: &[AbsorberRule]) -> CliResult<Table> {
    let mut t = Table::new(&["alpha3", "rule", "probability", "n_samples", "seed"]);
    for &rule in rules {
        for &a in &p.alpha3 {
            let pr = supercritical_probability_in(eps, a, rule, p.n_samples, seed, p.window)?;
            t.push(vec![num(a), rule.name().to_string(), num(pr), p.n_samples.to_string(), seed.to_string()]);
        }
    }
    Ok(t)
}

fn iso_table(eps: f64, alpha3: f64, beta3: f64, delta_mu1: f64, grid: &GridSpec) -> CliResult<Table> {
    let map = iso_amplitude_map(eps, alpha3, beta3, delta_mu1, &grid.mu2.values(), &grid.gamma.values())?;
    let mut t = Table::new(&["mu2", "gamma", "mu1_cr", "q1_max", "valid"]);
    for c in &map.cells {
        t.push(vec![num(c.mu2), num(c.gamma), num(c.mu1_cr), num(c.q1_max), c.valid.to_string()]);
    }
    Ok(t)
}

fn similarity_into(
    sink: &mut Sink,
    prefix: &str,
    eps: f64,
    mu2: f64,
    gamma: f64,
    alpha3: f64,
    kinds: &[AbsorberKind],
    cfg: &RunConfig,
) -> CliResult<String> {
    let outcomes = kinds
        .par_iter()
        .map(|&k| {
            let c = cfg.similarity.coefficient(k, eps, alpha3);
            similarity_study(eps, mu2, gamma, alpha3, k, c, &cfg.continuation)
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let mut tab = Table::new(&[
        "kind",
        "coefficient",
        "onset",
        "folds",
        "neimark_sacker",
        "bistable",
        "max_stable_amplitude",
    ]);
    let mut summary = String::new();
    for o in &outcomes {
        tab.push(vec![
            o.kind.name().to_string(),
            num(o.coefficient),
            format!("{:?}", o.onset).to_lowercase(),
            o.folds.to_string(),
            o.neimark_sacker.to_string(),
            o.bistable.to_string(),
            num(o.max_stable_amplitude),
        ]);
        sink.branch(&format!("{prefix}_{}", o.kind.name()), &o.branch)?;
        summary += &branch_summary(o.kind.name(), &o.branch);
    }
    sink.table(&format!("{prefix}.csv"), &tab)?;
    Ok(summary)
}

fn nes_compare_into(sink: &mut Sink, prefix: &str, cfg: &RunConfig, panels: &[char]) -> CliResult<String> {
    let n = &cfg.nes;
    let report = compare_time_series(cfg.system.eps, n.mu1, n.alpha3, &n.time_series)?;
    let mut summary = String::new();
    for (case, p) in report.cases.iter().zip(['a', 'b', 'c']) {
        if !panels.contains(&p) {
            continue;
        }
        sink.table(&format!("{prefix}_{}.csv", case.case), &series_table(case.series.iter().map(|(t, x)| (*t, x))))?;
        summary += &format!("{}: {:?} (trailing amplitude {})\n", case.case, case.outcome, case.trailing_amplitude);
    }
    let cases: Vec<_> = report.cases.iter().zip(['a', 'b', 'c']).filter(|(_, p)| panels.contains(p)).map(|(c, _)| c).collect();
    sink.json(&format!("{prefix}_report.json"), &cases)?;
    Ok(summary)
}

// ---------------------------------------------------------------- figures

fn panels(figure: u32) -> &'static [char] {
    match figure {
        3 | 15 => &['a', 'b', 'c'],
        6 | 7 | 8 | 10 | 11 | 12 | 13 | 14 | 16 => &['a', 'b'],
        _ => &[],
    }
}

/// `gamma` of panels (a) and (b) of the bifurcation figures.
fn panel_gamma(p: char) -> f64 {
    if p == 'a' {
        0.970
    } else {
        0.985
    }
}

fn reproduce_figure(sink: &mut Sink, figure: u32, panel: Option<char>, cfg: &RunConfig) -> CliResult<String> {
    if !(2..=16).contains(&figure) {
        return Err(CliError::Config(format!("figure {figure} is not reproducible; choose 2 to 16")));
    }
    let all = panels(figure);
    let selected: Vec<char> = match panel {
        None => all.to_vec(),
        Some(p) if all.contains(&p) => vec![p],
        Some(p) => {
            return Err(CliError::Config(format!("figure {figure} has no panel `{p}` (panels: {all:?})")));
        }
    };
    let eps = cfg.system.eps;
    let g = &cfg.grid;
    let mut summary = String::new();
    let f = format!("fig{figure}");
    match figure {
        2 => {
            sink.table(&format!("{f}_boundary.csv"), &boundary_table(eps, &g.mu2.values(), &g.gamma.values()))?;
            sink.table(&format!("{f}_double_hopf.csv"), &double_hopf_table(eps, &g.mu2.values()))?;
        }
        3 => {
            let t = optimal_tuning(eps);
            for p in selected {
                let mu2 = match p {
                    'a' => 0.07,
                    'b' => t.mu2_opt,
                    _ => 0.12,
                };
                let grid = ChartGrid { mu1: g.mu1.values(), mu2: vec![mu2], gamma: g.gamma.values() };
                let chart = stability_chart(eps, grid)?;
                let mut tab = Table::new(&["mu1", "gamma", "stable", "unstable_pairs"]);
                for n in &chart.nodes {
                    tab.push(vec![num(n.mu1), num(n.gamma), n.stable.to_string(), n.unstable_pairs.to_string()]);
                }
                sink.table(&format!("{f}{p}_chart.csv"), &tab)?;
                let (a, b) = points_ab(eps, mu2)?;
                let mut pts = Table::new(&["point", "mu1", "gamma"]);
                pts.push(vec!["A".into(), num(a.mu1), num(a.gamma)]);
                pts.push(vec!["B".into(), num(b.mu1), num(b.gamma)]);
                sink.table(&format!("{f}{p}_points.csv"), &pts)?;
            }
        }
        4 => sink.table(&format!("{f}_delta.csv"), &delta_table(eps, &g.mu2.values(), &g.gamma.values())?)?,
        5 => sink.table(&format!("{f}_delta.csv"), &delta_table(eps, &[0.12], &g.gamma.values())?)?,
        6 | 7 => {
            let rule = if figure == 6 { AbsorberRule::Ltva } else { AbsorberRule::Nltva };
            for p in selected {
                let tab = critical_alpha3_table(eps, &g.mu2.values(), &g.gamma.values(), rule, p == 'a');
                sink.table(&format!("{f}{p}_critical_alpha3.csv"), &tab)?;
            }
        }
        8 => {
            for p in selected {
                let rule = if p == 'a' { AbsorberRule::Ltva } else { AbsorberRule::Nltva };
                sink.table(&format!("{f}{p}_probability.csv"), &probability_table(eps, &cfg.probability, cfg.seed, &[rule])?)?;
            }
        }
        9 => {
            let alpha3 = 0.08;
            let beta3 = AbsorberRule::Nltva.beta3(eps, alpha3);
            sink.table(&format!("{f}_iso_amplitude.csv"), &iso_table(eps, alpha3, beta3, g.delta_mu1, g)?)?;
        }
        10..=13 => {
            let mu2 = if figure == 12 { 0.097 } else { 0.12 };
            let tuned = if figure == 13 { 0.018 } else { 0.0136 };
            let mut cases: Vec<(&str, f64, f64)> = Vec::new();
            if figure == 10 || figure == 13 {
                cases.push(("vdp_ltva", 0.0, 0.0));
            }
            cases.push(("vdpd_ltva", 0.3, 0.0));
            cases.push(("vdpd_nltva", 0.3, tuned));
            let jobs: Vec<(char, &str, DimensionlessSystem)> = selected
                .iter()
                .flat_map(|&p| {
                    cases.iter().map(move |&(name, a3, b3)| {
                        (p, name, DimensionlessSystem::linear(eps, 0.0, mu2, panel_gamma(p)).with_nonlinear(a3, b3))
                    })
                })
                .collect();
            let branches = jobs
                .par_iter()
                .map(|(_, _, s)| branch_from_hopf(s, &cfg.continuation))
                .collect::<crate::Result<Vec<_>>>()?;
            for ((p, name, s), b) in jobs.iter().zip(&branches) {
                sink.branch(&format!("{f}{p}_{name}"), b)?;
                summary += &branch_summary(&format!("{p} {name}"), b);
                if figure == 10 {
                    sink.table(&format!("{f}{p}_{name}_estimate.csv"), &estimate_table(s, b.origin.mu1_cr)?)?;
                }
            }
        }
        14 => {
            // Both cubic ratios: the caption's 0.03 and the 0.3 of the
            // neighbouring figures.
            for p in selected {
                for (tag, alpha3) in [("", 0.3), ("_alpha3_0.03", 0.03)] {
                    let mut c = cfg.clone();
                    c.similarity = SimilaritySpec::default();
                    c.similarity.fill_defaults(eps, alpha3);
                    summary += &similarity_into(
                        sink,
                        &format!("{f}{p}{tag}"),
                        eps,
                        0.12,
                        panel_gamma(p),
                        alpha3,
                        &AbsorberKind::ALL,
                        &c,
                    )?;
                }
            }
        }
        15 => summary = nes_compare_into(sink, &f, cfg, &selected)?,
        16 => {
            for p in selected {
                let sweep = if p == 'a' { &cfg.nes.vary_knl2 } else { &cfg.nes.vary_c2 };
                let label = if p == 'a' { "knl2" } else { "c2" };
                for nb in nes_branch(eps, cfg.nes.branch_alpha3, sweep, &cfg.continuation)? {
                    let stem = format!("{f}{p}_{label}_{}", nb.value);
                    sink.branch(&stem, &nb.branch)?;
                    summary += &branch_summary(&stem, &nb.branch);
                }
            }
        }
        _ => unreachable!("range checked above"),
    }
    Ok(summary)
}

/// Local amplitude estimate on the side where cycles exist.
fn estimate_table(sys: &DimensionlessSystem, mu1_cr: f64) -> CliResult<Table> {
    let mut t = Table::new(&["mu1", "q1_max"]);
    for d in linspace(-0.03, 0.03, 61) {
        let e = match lco_amplitude_local_of(sys, mu1_cr + d) {
            Ok(e) => e,
            Err(Error::Numerical(_)) => return Ok(t),
            Err(e) => return Err(e.into()),
        };
        if e.valid {
            t.push(vec![num(e.mu1), num(e.q1_max)]);
        }
    }
    Ok(t)
}

// ---------------------------------------------------------------- entry

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // A pool set up earlier in the same process stays in place.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let result = configure_threads()
        .and_then(|_| resolve(cli.command))
        .and_then(|(task, cfg, out)| dispatch(&task, &cfg, out.as_deref()));
    match result {
        Ok((files, summary)) => {
            print!("{summary}");
            for f in files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
