//! Command-line front end: `analyze`, `synthesize`, `run` and `report`.
//!
//! Exit codes are a stable contract: 0 success, 1 configuration or input
//! error, 2 infeasible topology, 3 divergence.

pub mod config;
pub mod svg;
pub mod trace;

use std::fmt;
use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::{build_analysis, mirror_with_h, GraphAnalysis};
use crate::observer::{self, Margins, ObserverGains};
use crate::sim::{self, SimResult};
use config::{BuildError, ConfigError, Experiment, ExperimentConfig, GainPlan, BUNDLED_CONFIG};
use trace::{Trace, TraceError};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "dpto", version, about = "Distributed prescribed-time observer toolkit")]
pub struct Cli {
    /// Experiment config (TOML). Defaults to the bundled switching example.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config and OUTPUT_DIR).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override a config key, e.g. `--set sim.dt=5e-5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every topology and print weights, λ1 of the mirror matrix and the β bound.
    Analyze,
    /// Compute gains satisfying the convergence conditions.
    Synthesize {
        /// α to use (any positive value). Defaults to the config's, else 1.
        #[arg(long)]
        alpha_margin: Option<f64>,
        /// β as a multiple of its lower bound. Default 1.
        #[arg(long)]
        beta_factor: Option<f64>,
        /// σ as a multiple of the leader input bound. Default 1.
        #[arg(long)]
        sigma_factor: Option<f64>,
        /// Write a copy of the config with the synthesized gains made explicit.
        #[arg(long, value_name = "PATH")]
        write: Option<PathBuf>,
    },
    /// Simulate and write the trace, summary and plots.
    Run,
    /// Render one SVG per stage from a trace file.
    Report {
        /// Trace to plot. Defaults to `<out>/trace.csv`.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 1,
    Infeasible = 2,
    Diverged = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            status: ExitStatus::ConfigError,
            message: message.into(),
        }
    }

    fn infeasible(message: impl Into<String>) -> Self {
        Self {
            status: ExitStatus::Infeasible,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Config(c) => c.into(),
            BuildError::Infeasible(err) => CliError::infeasible(err.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::config(format!("I/O error: {e}"))
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::config(e.to_string())
    }
}

fn map_core_error(e: Error) -> CliError {
    match e {
        Error::Diverged { time, .. } => CliError {
            status: ExitStatus::Diverged,
            message: format!("diverged at t = {time}: {e}"),
        },
        Error::InfeasibleTopology(_) | Error::NoSpanningTree { .. } | Error::SingularLaplacian { .. } => {
            CliError::infeasible(e.to_string())
        }
        other => CliError::config(other.to_string()),
    }
}

/// Per-run summary written next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub gains: ObserverGains,
    pub beta_bound: f64,
    pub warnings: Vec<String>,
    /// `[start, end)` of each stage's time-varying window, stage 1 first.
    pub stage_windows: Vec<(f64, f64)>,
    pub settle_time: f64,
    pub convergence_times: Vec<Option<f64>>,
    pub max_error_after_settle: Vec<f64>,
    pub peak_lyapunov: Vec<f64>,
    pub samples: usize,
}

struct Loaded {
    cfg: ExperimentConfig,
    text: String,
    origin: String,
}

fn load(cli: &Cli) -> Result<Loaded, CliError> {
    let (origin, src) = match &cli.config {
        Some(p) => (
            p.display().to_string(),
            fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: cannot read config: {e}", p.display())))?,
        ),
        None => ("<bundled>".to_string(), BUNDLED_CONFIG.to_string()),
    };
    let (cfg, text) = ExperimentConfig::parse(&src, &origin, &cli.set)?;
    Ok(Loaded { cfg, text, origin })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Analyze => cmd_analyze(cli, out),
        Command::Synthesize {
            alpha_margin,
            beta_factor,
            sigma_factor,
            write,
        } => cmd_synthesize(cli, *alpha_margin, *beta_factor, *sigma_factor, write.as_deref(), out).map(|_| ()),
        Command::Run => cmd_run(cli, out).map(|_| ()),
        Command::Report { trace } => cmd_report(cli, trace.as_deref(), out).map(|_| ()),
    }
}

/// Prints, per topology, the spanning-tree verdict and spectral data, then
/// the combined β bound.
pub fn cmd_analyze(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let l = load(cli)?;
    let topos = l.cfg.build_topologies(&l.text, &l.origin)?;
    let common_h = l.cfg.switching.as_ref().and_then(|s| s.common_h.as_ref()).map(|h| h.get_ref().clone());
    if topos.len() > 1 && common_h.is_none() {
        return Err(CliError::config(format!(
            "{}: switching among {} topologies requires switching.common_h",
            l.origin,
            topos.len()
        )));
    }

    let mut problems = Vec::new();
    let mut used: Vec<GraphAnalysis> = Vec::new();
    for (j, topo) in topos.iter().enumerate() {
        let idx = j + 1;
        writeln!(out, "topology {idx} ({} followers)", topo.follower_count())?;
        let unreachable = topo.unreachable_followers();
        if unreachable.is_empty() {
            writeln!(out, "  spanning tree: yes")?;
            let a = build_analysis(topo).map_err(map_core_error)?;
            writeln!(out, "  rho: {}", fmt_vec(&a.weights))?;
            writeln!(out, "  lambda_1(M(L0)) with rho: {:.9}", a.lambda_min)?;
            writeln!(out, "  max rho: {:.9}", a.max_weight)?;
            writeln!(out, "  beta bound (this topology, rho): {:.9}", a.beta_bound())?;
            if common_h.is_none() {
                used.push(a);
            }
        } else {
            let list: Vec<usize> = unreachable.iter().map(|i| i + 1).collect();
            writeln!(out, "  spanning tree: no (unreachable followers {list:?})")?;
            problems.push(format!("topology {idx}: no leader-rooted spanning tree"));
        }
        if let Some(h) = &common_h {
            let a = mirror_with_h(topo, h).map_err(|e| CliError::config(format!("{}: {e}", l.origin)))?;
            writeln!(out, "  eta (common H): {}", fmt_vec(&a.weights))?;
            writeln!(out, "  lambda_1(M(L)) with H: {:.9}", a.lambda_min)?;
            writeln!(out, "  max eta: {:.9}", a.max_weight)?;
            if !(a.lambda_min > 0.0) {
                problems.push(format!("topology {idx}: common H does not make M(L) positive definite"));
            }
            used.push(a);
        }
    }
    if !problems.is_empty() {
        return Err(CliError::infeasible(problems.join("; ")));
    }

    let bound = observer::beta_lower_bound(&used).map_err(map_core_error)?;
    let lambda = used.iter().map(|a| a.lambda_min).fold(f64::INFINITY, f64::min);
    let max_w = used.iter().map(|a| a.max_weight).fold(f64::NEG_INFINITY, f64::max);
    writeln!(out, "min lambda_1 over topologies: {lambda:.9}")?;
    writeln!(out, "max weight: {max_w:.9}")?;
    writeln!(out, "implied beta lower bound: {bound:.9}")?;
    writeln!(out, "sigma lower bound (leader input bound): {}", l.cfg.leader.input_bound)?;
    Ok(())
}

fn resolve_gains(exp: &Experiment) -> Result<(ObserverGains, f64, Vec<String>), CliError> {
    let analyses = exp.topologies.analyses().map_err(map_core_error)?;
    let bound = observer::beta_lower_bound(&analyses).map_err(map_core_error)?;
    let f0 = exp.leader.input_bound();
    let gains = match exp.gains {
        GainPlan::Explicit(g) => g,
        GainPlan::Synthesize(m) => observer::synthesize_gains(&analyses, f0, m).map_err(map_core_error)?,
    };
    let warnings = observer::check_gains(&gains, &analyses, f0)
        .map_err(map_core_error)?
        .iter()
        .map(ToString::to_string)
        .collect();
    Ok((gains, bound, warnings))
}

pub fn cmd_synthesize(
    cli: &Cli,
    alpha_margin: Option<f64>,
    beta_factor: Option<f64>,
    sigma_factor: Option<f64>,
    write: Option<&Path>,
    out: &mut dyn Write,
) -> Result<ObserverGains, CliError> {
    let l = load(cli)?;
    let exp = l.cfg.build(&l.text, &l.origin)?;
    let base = match exp.gains {
        GainPlan::Synthesize(m) => m,
        GainPlan::Explicit(_) => Margins::default(),
    };
    let margins = Margins {
        alpha: alpha_margin.unwrap_or(base.alpha),
        beta_factor: beta_factor.unwrap_or(base.beta_factor),
        sigma_factor: sigma_factor.unwrap_or(base.sigma_factor),
    };
    let analyses = exp.topologies.analyses().map_err(map_core_error)?;
    let gains = observer::synthesize_gains(&analyses, exp.leader.input_bound(), margins).map_err(map_core_error)?;
    if !cli.quiet {
        for (j, a) in analyses.iter().enumerate() {
            writeln!(out, "topology {}: lambda_1 = {:.9}, max weight = {:.9}", j + 1, a.lambda_min, a.max_weight)?;
        }
    }
    writeln!(out, "alpha = {}", gains.alpha)?;
    writeln!(out, "beta = {:.9}", gains.beta)?;
    writeln!(out, "sigma = {}", gains.sigma)?;

    if let Some(path) = write {
        let mut doc: toml_edit::DocumentMut = l
            .text
            .parse()
            .map_err(|e| CliError::config(format!("{}: {e}", l.origin)))?;
        let mut t = toml_edit::Table::new();
        t.insert("mode", toml_edit::value("explicit"));
        t.insert("alpha", toml_edit::value(gains.alpha));
        t.insert("beta", toml_edit::value(gains.beta));
        t.insert("sigma", toml_edit::value(gains.sigma));
        doc.insert("gains", toml_edit::Item::Table(t));
        fs::write(path, doc.to_string())?;
        if !cli.quiet {
            writeln!(out, "wrote {}", path.display())?;
        }
    }
    Ok(gains)
}

/// Runs the configured experiment and writes its outputs.
pub fn cmd_run(cli: &Cli, out: &mut dyn Write) -> Result<(SimResult, RunSummary), CliError> {
    let l = load(cli)?;
    let exp = l.cfg.build(&l.text, &l.origin)?;
    let (gains, bound, warnings) = resolve_gains(&exp)?;
    for w in &warnings {
        writeln!(out, "warning: {w}")?;
    }
    let result = sim::run(
        &exp.topologies,
        &exp.leader,
        &gains,
        &exp.schedule,
        &exp.initial_estimates,
        &exp.sim,
    )
    .map_err(map_core_error)?;

    let n = exp.leader.order();
    let settle = exp.schedule.settle_time();
    let summary = RunSummary {
        gains,
        beta_bound: bound,
        warnings,
        stage_windows: (1..=n)
            .map(|k| (exp.schedule.stage_start(k), exp.schedule.stage_end(k)))
            .collect(),
        settle_time: settle,
        convergence_times: result.convergence_times.clone(),
        max_error_after_settle: (1..=n).map(|k| result.max_error_after(k, settle)).collect(),
        peak_lyapunov: result.peak_lyapunov(),
        samples: result.times.len(),
    };

    let dir = config::resolve_output_dir(&exp.output.directory, cli.out.as_deref());
    fs::create_dir_all(&dir)?;
    let trace = Trace::from_result(&result);
    if exp.output.csv {
        trace.write(BufWriter::new(fs::File::create(dir.join(TRACE_FILE))?))?;
    }
    fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    if exp.output.svg {
        write_plots(&trace, &summary.stage_windows, &dir)?;
    }

    if !cli.quiet {
        writeln!(
            out,
            "gains: alpha = {}, beta = {}, sigma = {} (beta bound {:.6})",
            gains.alpha, gains.beta, gains.sigma, bound
        )?;
        writeln!(out, "samples: {}, settle time t* = {settle}", summary.samples)?;
        for k in 1..=n {
            let conv = summary.convergence_times[k - 1]
                .map_or_else(|| "not reached".to_string(), |t| format!("{t:.4} s"));
            writeln!(
                out,
                "stage {k}: converged at {conv}, max error after t* = {:.3e}, peak V = {:.6e}",
                summary.max_error_after_settle[k - 1],
                summary.peak_lyapunov[k - 1]
            )?;
        }
        writeln!(out, "outputs in {}", dir.display())?;
    }
    Ok((result, summary))
}

fn write_plots(trace: &Trace, windows: &[(f64, f64)], dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for k in 1..=trace.order {
        let path = dir.join(format!("stage_{k}.svg"));
        fs::write(&path, svg::stage_plot(trace, k, windows.get(k - 1).copied()))?;
        files.push(path);
    }
    Ok(files)
}

/// Writes `stage_k.svg` for each stage of a trace. Stage windows come from
/// `--config` when given, otherwise from a `summary.json` beside the trace.
pub fn cmd_report(cli: &Cli, trace_path: Option<&Path>, out: &mut dyn Write) -> Result<Vec<PathBuf>, CliError> {
    let configured_dir = if cli.config.is_some() {
        load(cli)?.cfg.output.directory
    } else {
        config::OutputSection::default().directory
    };
    let dir = config::resolve_output_dir(&configured_dir, cli.out.as_deref());
    let trace_path = trace_path.map_or_else(|| dir.join(TRACE_FILE), Path::to_path_buf);
    let file = fs::File::open(&trace_path)
        .map_err(|e| CliError::config(format!("{}: cannot open trace: {e}", trace_path.display())))?;
    let trace = Trace::read(BufReader::new(file))?;

    let windows: Vec<(f64, f64)> = if cli.config.is_some() {
        let l = load(cli)?;
        let exp = l.cfg.build(&l.text, &l.origin)?;
        (1..=exp.schedule.order())
            .map(|k| (exp.schedule.stage_start(k), exp.schedule.stage_end(k)))
            .collect()
    } else {
        let sidecar = trace_path.with_file_name(SUMMARY_FILE);
        fs::read_to_string(sidecar)
            .ok()
            .and_then(|s| serde_json::from_str::<RunSummary>(&s).ok())
            .map(|s| s.stage_windows)
            .unwrap_or_default()
    };
    if !windows.is_empty() && windows.len() != trace.order {
        return Err(CliError::config(format!(
            "trace has {} stages but the schedule has {}",
            trace.order,
            windows.len()
        )));
    }
    fs::create_dir_all(&dir)?;
    let files = write_plots(&trace, &windows, &dir)?;
    if !cli.quiet {
        for f in &files {
            writeln!(out, "wrote {}", f.display())?;
        }
    }
    Ok(files)
}
