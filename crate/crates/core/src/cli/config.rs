//! Experiment configuration documents.
//!
//! The format is TOML restricted to the sections below. See the README for
//! the full key reference.
//!
//! ```toml
//! [leader]
//! order = 3
//! input = "sine(0.125, 0.5)"
//! input_bound = 0.125
//! initial_state = [1.0, 0.0, 0.0]
//!
//! [topology.1]
//! follower_count = 3
//! adjacency = [[0, 0, 1], [1, 0, 0], [0, 1, 0]]
//! pinning = [1, 0, 0]
//!
//! [cascade]
//! t0 = 0.0
//! stage_durations = [0.2, 0.2, 0.2]
//!
//! [gains]
//! mode = "explicit"
//! alpha = 1.05
//! beta = 5.692
//! sigma = 0.125
//!
//! [initial_estimates]
//! rows = [[0.4, 0.6, 0.3], [0.8, 0.5, 0.7], [0.6, 0.4, 0.5]]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::Error;
use crate::gain::{CascadeSchedule, DEFAULT_EXPONENT};
use crate::graph::{DirectedTopology, TopologySequence};
use crate::linalg::Matrix;
use crate::observer::{InputSpec, LeaderModel, Margins, ObserverGains};
use crate::sim::{Method, SimConfig, DEFAULT_DIVERGENCE_THRESHOLD};

/// The switching triple-integrator experiment shipped with the crate.
pub const BUNDLED_CONFIG: &str = include_str!("../../configs/switching_triple_integrator.toml");

pub const OUTPUT_DIR_ENV: &str = "OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path, line, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub leader: LeaderSection,
    pub topology: BTreeMap<String, TopologySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<SwitchingSection>,
    pub cascade: CascadeSection,
    pub gains: GainsSection,
    pub initial_estimates: EstimatesSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSection {
    pub order: usize,
    pub input: Spanned<String>,
    pub input_bound: f64,
    pub initial_state: Spanned<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub follower_count: usize,
    pub adjacency: Spanned<Vec<Spanned<Vec<f64>>>>,
    pub pinning: Spanned<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSection {
    /// `[time, topology]` pairs; the first must be at `cascade.t0`.
    pub schedule: Spanned<Vec<(f64, usize)>>,
    /// When set, the schedule pattern repeats every `cycle_period` seconds
    /// until the end of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common_h: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeSection {
    #[serde(default)]
    pub t0: f64,
    pub stage_durations: Spanned<Vec<f64>>,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

fn default_exponent() -> f64 {
    DEFAULT_EXPONENT
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainsSection {
    Explicit {
        alpha: f64,
        beta: f64,
        sigma: f64,
    },
    Synthesize {
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "one")]
        beta_factor: f64,
        #[serde(default = "one")]
        sigma_factor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesSection {
    pub rows: Spanned<Vec<Spanned<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub t_end: f64,
    pub method: String,
    pub guard: f64,
    pub tolerance: f64,
    pub record_stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign_smoothing: Option<f64>,
    pub divergence_threshold: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            dt: d.dt,
            t_end: d.t_end,
            method: d.method.to_string(),
            guard: d.guard,
            tolerance: d.convergence_tolerance,
            record_stride: d.record_stride,
            sign_smoothing: None,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    pub csv: bool,
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            csv: true,
            svg: true,
        }
    }
}

/// How gains are obtained for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainPlan {
    Explicit(ObserverGains),
    Synthesize(Margins),
}

/// A validated experiment, ready to simulate.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub topologies: TopologySequence,
    pub leader: LeaderModel,
    pub input: InputSpec,
    pub gains: GainPlan,
    pub schedule: CascadeSchedule,
    pub initial_estimates: Matrix,
    pub sim: SimConfig,
    pub output: OutputSection,
}

/// 1-based line number of a byte offset.
fn line_of(src: &str, offset: usize) -> usize {
    src.as_bytes()[..offset.min(src.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

/// Sets a dotted key (`sim.dt`, `topology.2.pinning`) in a TOML document.
/// Values are parsed as TOML; anything that does not parse is taken as a
/// bare string.
pub fn apply_override(doc: &mut toml_edit::DocumentMut, assignment: &str) -> Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not of the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').map(str::trim).collect();
    if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key `{}` must be a dotted section path", key.trim()));
    }
    let value: toml_edit::Value = raw
        .trim()
        .parse()
        .unwrap_or_else(|_| toml_edit::Value::from(raw.trim()));

    let mut table = doc.as_table_mut();
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part).or_insert_with(|| {
            let mut t = toml_edit::Table::new();
            t.set_implicit(true);
            toml_edit::Item::Table(t)
        });
        table = entry
            .as_table_mut()
            .ok_or_else(|| format!("override path `{}`: `{part}` is not a section", key.trim()))?;
    }
    table.insert(parts[parts.len() - 1], toml_edit::Item::Value(value));
    Ok(())
}

impl ExperimentConfig {
    /// Parses a document after applying `overrides` in order.
    pub fn parse(src: &str, origin: &str, overrides: &[String]) -> Result<(Self, String), ConfigError> {
        let err = |line: Option<usize>, message: String| ConfigError {
            path: origin.to_string(),
            line,
            message,
        };
        let text = if overrides.is_empty() {
            src.to_string()
        } else {
            let mut doc: toml_edit::DocumentMut = src.parse().map_err(|e: toml_edit::TomlError| {
                err(e.span().map(|s| line_of(src, s.start)), e.message().to_string())
            })?;
            for o in overrides {
                apply_override(&mut doc, o).map_err(|m| err(None, m))?;
            }
            doc.to_string()
        };
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| err(e.span().map(|s| line_of(&text, s.start)), e.message().to_string()))?;
        Ok((cfg, text))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<(Self, String), ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.display().to_string(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&src, &path.display().to_string(), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Topologies in index order. Keys must be `1..=p` without gaps.
    pub fn ordered_topologies(&self, src: &str, origin: &str) -> Result<Vec<(usize, &TopologySection)>, ConfigError> {
        let mut out = Vec::new();
        for (key, section) in &self.topology {
            let idx: usize = key.parse().map_err(|_| ConfigError {
                path: origin.into(),
                line: Some(line_of(src, section.pinning.span().start)),
                message: format!("topology section `{key}` must be named by a positive integer"),
            })?;
            out.push((idx, section));
        }
        out.sort_by_key(|(i, _)| *i);
        for (expected, (idx, section)) in out.iter().enumerate() {
            if *idx != expected + 1 {
                return Err(ConfigError {
                    path: origin.into(),
                    line: Some(line_of(src, section.pinning.span().start)),
                    message: format!("topology sections must be numbered 1..={} without gaps", out.len()),
                });
            }
        }
        if out.is_empty() {
            return Err(ConfigError {
                path: origin.into(),
                line: None,
                message: "at least one [topology.1] section is required".into(),
            });
        }
        Ok(out)
    }

    /// Builds the raw topologies (no spanning-tree check), with line-precise
    /// errors for malformed matrices.
    pub fn build_topologies(&self, src: &str, origin: &str) -> Result<Vec<DirectedTopology>, ConfigError> {
        let at = |offset: usize, message: String| ConfigError {
            path: origin.into(),
            line: Some(line_of(src, offset)),
            message,
        };
        let mut topos = Vec::new();
        for (idx, section) in self.ordered_topologies(src, origin)? {
            let n = section.follower_count;
            if n == 0 {
                return Err(at(section.pinning.span().start, format!("topology.{idx}: follower_count must be >= 1")));
            }
            let rows = section.adjacency.get_ref();
            if rows.len() != n {
                return Err(at(
                    section.adjacency.span().start,
                    format!("topology.{idx}: adjacency has {} rows, follower_count is {n}", rows.len()),
                ));
            }
            for (r, row) in rows.iter().enumerate() {
                if row.get_ref().len() != n {
                    return Err(at(
                        row.span().start,
                        format!(
                            "topology.{idx}: adjacency row {} has {} entries, expected {n}",
                            r + 1,
                            row.get_ref().len()
                        ),
                    ));
                }
            }
            if section.pinning.get_ref().len() != n {
                return Err(at(
                    section.pinning.span().start,
                    format!(
                        "topology.{idx}: pinning has {} entries, expected {n}",
                        section.pinning.get_ref().len()
                    ),
                ));
            }
            let plain: Vec<Vec<f64>> = rows.iter().map(|r| r.get_ref().clone()).collect();
            let topo = DirectedTopology::from_rows(&plain, section.pinning.get_ref())
                .map_err(|e| at(section.adjacency.span().start, format!("topology.{idx}: {e}")))?;
            topos.push(topo);
        }
        Ok(topos)
    }

    /// Full validation. Infeasible topologies are reported as
    /// [`Error::InfeasibleTopology`] so callers can map them to their own exit
    /// code; everything else is a [`ConfigError`].
    pub fn build(&self, src: &str, origin: &str) -> Result<Experiment, BuildError> {
        let at = |offset: usize, message: String| ConfigError {
            path: origin.into(),
            line: Some(line_of(src, offset)),
            message,
        };
        let plain = |message: String| ConfigError {
            path: origin.into(),
            line: None,
            message,
        };

        // [leader]
        let l = &self.leader;
        let input: InputSpec = l
            .input
            .get_ref()
            .parse()
            .map_err(|e: Error| at(l.input.span().start, e.to_string()))?;
        if l.initial_state.get_ref().len() != l.order || l.order == 0 {
            return Err(at(
                l.initial_state.span().start,
                format!(
                    "leader.initial_state has {} entries, leader.order is {}",
                    l.initial_state.get_ref().len(),
                    l.order
                ),
            )
            .into());
        }
        let leader = LeaderModel::with_spec(input, l.input_bound, l.initial_state.get_ref().clone())
            .map_err(|e| plain(format!("leader: {e}")))?;
        let n = l.order;

        // [cascade]
        let c = &self.cascade;
        if c.stage_durations.get_ref().len() != n {
            return Err(at(
                c.stage_durations.span().start,
                format!(
                    "cascade.stage_durations has {} entries, leader.order is {n}",
                    c.stage_durations.get_ref().len()
                ),
            )
            .into());
        }
        let schedule = CascadeSchedule::new(c.t0, c.stage_durations.get_ref().clone(), c.exponent)
            .map_err(|e| at(c.stage_durations.span().start, format!("cascade: {e}")))?;

        // [sim]
        let s = &self.sim;
        let method: Method = s.method.parse().map_err(|e: Error| plain(format!("sim.method: {e}")))?;
        let sim = SimConfig {
            t0: c.t0,
            t_end: s.t_end,
            dt: s.dt,
            method,
            guard: s.guard,
            sign_smoothing: s.sign_smoothing,
            record_stride: s.record_stride,
            convergence_tolerance: s.tolerance,
            divergence_threshold: s.divergence_threshold,
        };
        sim.validate().map_err(|e| plain(format!("sim: {e}")))?;

        // [topology.*] and [switching]
        let topos = self.build_topologies(src, origin)?;
        let followers = topos[0].follower_count();
        if let Some((k, t)) = topos.iter().enumerate().find(|(_, t)| t.follower_count() != followers) {
            return Err(plain(format!(
                "topology.{} has {} followers, topology.1 has {followers}",
                k + 1,
                t.follower_count()
            ))
            .into());
        }
        let p = topos.len();
        let (entries, common_h) = match &self.switching {
            None => {
                if p > 1 {
                    return Err(plain(format!("{p} topologies are defined but there is no [switching] section")).into());
                }
                (vec![(c.t0, 1)], None)
            }
            Some(sw) => {
                let entries = expand_schedule(sw, c.t0, s.t_end).map_err(|m| at(sw.schedule.span().start, m))?;
                for &(_, idx) in &entries {
                    if idx == 0 || idx > p {
                        return Err(at(
                            sw.schedule.span().start,
                            format!("switching.schedule references topology {idx}, but only 1..={p} exist"),
                        )
                        .into());
                    }
                }
                let h = match &sw.common_h {
                    Some(h) if h.get_ref().len() != followers => {
                        return Err(at(
                            h.span().start,
                            format!("switching.common_h has {} entries, expected {followers}", h.get_ref().len()),
                        )
                        .into())
                    }
                    Some(h) => Some(h.get_ref().clone()),
                    None => None,
                };
                (entries, h)
            }
        };
        let topologies = TopologySequence::new(topos, entries, common_h).map_err(|e| match e {
            Error::InfeasibleTopology(_) => BuildError::Infeasible(e),
            other => BuildError::Config(plain(format!("switching: {other}"))),
        })?;

        // [gains]
        let gains = match self.gains {
            GainsSection::Explicit { alpha, beta, sigma } => {
                GainPlan::Explicit(ObserverGains::user(alpha, beta, sigma).map_err(|e| plain(format!("gains: {e}")))?)
            }
            GainsSection::Synthesize {
                alpha,
                beta_factor,
                sigma_factor,
            } => GainPlan::Synthesize(Margins {
                alpha,
                beta_factor,
                sigma_factor,
            }),
        };

        // [initial_estimates]
        let rows = self.initial_estimates.rows.get_ref();
        if rows.len() != followers {
            return Err(at(
                self.initial_estimates.rows.span().start,
                format!("initial_estimates has {} rows, expected {followers}", rows.len()),
            )
            .into());
        }
        for (i, r) in rows.iter().enumerate() {
            if r.get_ref().len() != n {
                return Err(at(
                    r.span().start,
                    format!("initial_estimates row {} has {} entries, expected {n}", i + 1, r.get_ref().len()),
                )
                .into());
            }
            if r.get_ref().iter().any(|v| !v.is_finite()) {
                return Err(at(r.span().start, format!("initial_estimates row {} is not finite", i + 1)).into());
            }
        }
        let plain_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.get_ref().clone()).collect();
        let initial_estimates = Matrix::from_rows(&plain_rows).map_err(|e| plain(e.to_string()))?;

        Ok(Experiment {
            topologies,
            leader,
            input,
            gains,
            schedule,
            initial_estimates,
            sim,
            output: self.output.clone(),
        })
    }
}

/// Expands a possibly periodic schedule into explicit `(time, index)` pairs
/// covering `[t0, t_end)`.
fn expand_schedule(sw: &SwitchingSection, t0: f64, t_end: f64) -> Result<Vec<(f64, usize)>, String> {
    let pattern = sw.schedule.get_ref();
    let Some(&(first, _)) = pattern.first() else {
        return Err("switching.schedule is empty".into());
    };
    if first != t0 {
        return Err(format!("switching.schedule must start at cascade.t0 = {t0}, starts at {first}"));
    }
    for w in pattern.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(format!("switching.schedule times must increase ({} then {})", w[0].0, w[1].0));
        }
    }
    let Some(period) = sw.cycle_period else {
        return Ok(pattern.clone());
    };
    let last = pattern.last().map(|e| e.0).unwrap_or(t0);
    if !(period > last - t0) || !period.is_finite() {
        return Err(format!(
            "switching.cycle_period = {period} must exceed the span of one schedule pattern ({})",
            last - t0
        ));
    }
    let mut out = Vec::new();
    let mut cycle: u64 = 0;
    'outer: loop {
        let base = t0 + cycle as f64 * period;
        for &(t, idx) in pattern {
            let time = base + (t - t0);
            if time >= t_end && !out.is_empty() {
                break 'outer;
            }
            out.push((time, idx));
        }
        cycle += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuildError {
    Config(ConfigError),
    Infeasible(Error),
}

impl From<ConfigError> for BuildError {
    fn from(e: ConfigError) -> Self {
        BuildError::Config(e)
    }
}

impl fmt::Display for BuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildError::Config(e) => e.fmt(f),
            BuildError::Infeasible(e) => e.fmt(f),
        }
    }
}

/// Output directory, honoring `OUTPUT_DIR` and then an explicit `--out`.
pub fn resolve_output_dir(configured: &str, flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(configured),
    }
}
