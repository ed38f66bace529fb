//! Fixed-step integration of the leader and all follower observers.
//!
//! The step grid is aligned to events: every stage boundary, every effective
//! topology switch and `t_end` is hit exactly, with the nominal step shortened
//! locally where needed. The topology used for a step is the one active at
//! the step's start time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::CascadeSchedule;
use crate::graph::{GraphAnalysis, TopologySequence};
use crate::linalg::Matrix;
use crate::observer::{self, Dpto, LeaderModel, ObserverGains, SignMode};

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(Error::Invalid(format!("unknown method `{other}` (expected euler or rk4)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub method: Method,
    /// Lower clamp on the distance to a window end inside the gain.
    pub guard: f64,
    pub sign_smoothing: Option<f64>,
    pub record_stride: usize,
    pub convergence_tolerance: f64,
    pub divergence_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t_end: 2.0,
            dt: 1e-4,
            method: Method::Rk4,
            guard: 1e-3,
            sign_smoothing: None,
            record_stride: 10,
            convergence_tolerance: 0.01,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if !self.t0.is_finite() || !self.t_end.is_finite() {
            return bad("t0 and t_end must be finite".into());
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_end > self.t0) {
            return bad(format!("t_end ({}) must exceed t0 ({})", self.t_end, self.t0));
        }
        if !(self.guard >= self.dt) {
            return bad(format!("guard ({}) must be >= dt ({})", self.guard, self.dt));
        }
        if let Some(eps) = self.sign_smoothing {
            if !(eps > 0.0) {
                return bad(format!("sign smoothing width must be > 0, got {eps}"));
            }
        }
        if self.record_stride == 0 {
            return bad("record_stride must be positive".into());
        }
        if !(self.convergence_tolerance > 0.0) {
            return bad(format!("convergence tolerance must be > 0, got {}", self.convergence_tolerance));
        }
        if !(self.divergence_threshold > 0.0) {
            return bad("divergence threshold must be > 0".into());
        }
        Ok(())
    }

    fn sign_mode(&self) -> SignMode {
        self.sign_smoothing.map_or(SignMode::Hard, SignMode::Smoothed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Stage `k`'s time-varying window opens.
    StageStart { stage: usize },
    /// All stage windows have closed (`t*`).
    CascadeEnd,
    /// Active topology changes (1-based indices).
    TopologySwitch { from: usize, to: usize },
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub times: Vec<f64>,
    pub leader_states: Vec<Vec<f64>>,
    /// Per sample, `N×n` global errors `x̂ - x0`.
    pub estimate_errors: Vec<Matrix>,
    /// Per sample, `N×n` local errors `ψ` under the topology active then.
    pub local_errors: Vec<Matrix>,
    /// Per sample, `V_1..V_n`.
    pub lyapunov: Vec<Vec<f64>>,
    /// Per sample, decay budget of the active (or most recent) stage.
    pub decay_bound: Vec<f64>,
    /// Per sample, 1-based index of the active topology.
    pub topology_index: Vec<usize>,
    pub convergence_times: Vec<Option<f64>>,
    pub event_log: Vec<Event>,
}

impl SimResult {
    pub fn order(&self) -> usize {
        self.lyapunov.first().map_or(0, Vec::len)
    }

    /// `max_i |x̃ⁱ_k|` at each sample for 1-based stage `k`.
    pub fn stage_error_trace(&self, k: usize) -> Vec<f64> {
        self.estimate_errors.iter().map(|e| max_abs_column(e, k - 1)).collect()
    }

    /// Largest `max_i |x̃ⁱ_k|` over samples with `time >= from`.
    pub fn max_error_after(&self, k: usize, from: f64) -> f64 {
        self.times
            .iter()
            .zip(self.stage_error_trace(k))
            .filter(|(t, _)| **t >= from)
            .map(|(_, e)| e)
            .fold(0.0, f64::max)
    }

    pub fn peak_lyapunov(&self) -> Vec<f64> {
        let n = self.order();
        (0..n)
            .map(|k| self.lyapunov.iter().map(|v| v[k]).fold(0.0, f64::max))
            .collect()
    }
}

fn max_abs_column(m: &Matrix, col: usize) -> f64 {
    (0..m.rows()).map(|i| m[(i, col)].abs()).fold(0.0, f64::max)
}

/// Per stage, the earliest recorded time from which `max_i |x̃ⁱ_k|` stays
/// within `tol` through the last sample.
pub fn detect_convergence(times: &[f64], errors: &[Matrix], tol: f64) -> Vec<Option<f64>> {
    let n = errors.first().map_or(0, Matrix::cols);
    (0..n)
        .map(|col| {
            match errors.iter().rposition(|e| max_abs_column(e, col) > tol) {
                None => times.first().copied(),
                Some(last_bad) => times.get(last_bad + 1).copied(),
            }
        })
        .collect()
}

/// `c = 2αλ1/max(w)`, the exponential part of the Lyapunov decay.
pub fn decay_rate(lambda_min: f64, max_weight: f64, alpha: f64) -> f64 {
    2.0 * alpha * lambda_min / max_weight
}

/// `ς(t)^{-2}·exp(-c(t - t_start))·V(t_start)` for stage `k`, with the same
/// clamped `ς` the dynamics use.
pub fn decay_budget(
    analysis: &GraphAnalysis,
    gains: &ObserverGains,
    sched: &CascadeSchedule,
    stage_k: usize,
    v_at_window_start: f64,
    t: f64,
    guard: f64,
) -> f64 {
    let c = decay_rate(analysis.lambda_min, analysis.max_weight, gains.alpha);
    budget_with_rate(c, sched, stage_k, v_at_window_start, t, guard)
}

fn budget_with_rate(c: f64, sched: &CascadeSchedule, k: usize, v0: f64, t: f64, guard: f64) -> f64 {
    if v0 == 0.0 {
        return 0.0;
    }
    let s = sched.stage_varsigma(k, t, guard);
    (-c * (t - sched.stage_start(k))).exp() * v0 / (s * s)
}

/// Event times in `(t0, t_end]`, ascending and deduplicated.
fn event_merge_tol(cfg: &SimConfig) -> f64 {
    1e-9 * cfg.dt
}

fn event_grid(
    sched: &CascadeSchedule,
    topos: &TopologySequence,
    cfg: &SimConfig,
) -> Vec<(f64, Vec<EventKind>)> {
    let mut events: Vec<(f64, EventKind)> = Vec::new();
    let n = sched.order();
    for k in (1..=n).rev() {
        events.push((sched.stage_start(k), EventKind::StageStart { stage: k }));
    }
    events.push((sched.settle_time(), EventKind::CascadeEnd));
    let sched_entries = topos.schedule();
    for w in sched_entries.windows(2) {
        if w[0].1 != w[1].1 {
            events.push((
                w[1].0,
                EventKind::TopologySwitch {
                    from: w[0].1,
                    to: w[1].1,
                },
            ));
        }
    }
    events.push((cfg.t_end, EventKind::End));
    events.retain(|(t, _)| *t >= cfg.t0 && *t <= cfg.t_end);
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut grid: Vec<(f64, Vec<EventKind>)> = Vec::new();
    for (t, kind) in events {
        match grid.last_mut() {
            Some((last, kinds)) if t - *last <= event_merge_tol(cfg) => kinds.push(kind),
            _ => grid.push((t, vec![kind])),
        }
    }
    grid
}

struct Workspace {
    n: usize,
    followers: usize,
    estimates: Matrix,
    errors: Matrix,
    psi: Matrix,
    d_est: Matrix,
}

impl Workspace {
    fn new(followers: usize, n: usize) -> Self {
        Self {
            n,
            followers,
            estimates: Matrix::zeros(followers, n),
            errors: Matrix::zeros(followers, n),
            psi: Matrix::zeros(followers, n),
            d_est: Matrix::zeros(followers, n),
        }
    }

    /// Loads `y = [x0, vec(x̂)]` and fills errors and `ψ` for `l0`.
    fn load(&mut self, y: &[f64], l0: &Matrix) {
        let n = self.n;
        let (x0, est) = y.split_at(n);
        self.estimates.as_mut_slice().copy_from_slice(est);
        for i in 0..self.followers {
            for k in 0..n {
                self.errors[(i, k)] = self.estimates[(i, k)] - x0[k];
            }
        }
        for i in 0..self.followers {
            for k in 0..n {
                let mut s = 0.0;
                for j in 0..self.followers {
                    s += l0[(i, j)] * self.errors[(j, k)];
                }
                self.psi[(i, k)] = s;
            }
        }
    }
}

struct System<'a> {
    leader: &'a LeaderModel,
    dpto: Dpto<'a>,
}

impl System<'_> {
    fn rhs(&self, ws: &mut Workspace, l0: &Matrix, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = ws.n;
        ws.load(y, l0);
        observer::leader_rhs_into(self.leader, &y[..n], t, &mut dy[..n])?;
        let Workspace {
            psi, estimates, d_est, ..
        } = ws;
        self.dpto.rhs_from_psi(psi, estimates, t, d_est)?;
        dy[n..].copy_from_slice(d_est.as_slice());
        Ok(())
    }
}

struct Stepper {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Stepper {
    fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }

    fn step(
        &mut self,
        method: Method,
        sys: &System<'_>,
        ws: &mut Workspace,
        l0: &Matrix,
        t: f64,
        h: f64,
        y: &mut [f64],
    ) -> Result<()> {
        match method {
            Method::Euler => {
                sys.rhs(ws, l0, t, y, &mut self.k1)?;
                for (yi, ki) in y.iter_mut().zip(&self.k1) {
                    *yi += h * ki;
                }
            }
            Method::Rk4 => {
                sys.rhs(ws, l0, t, y, &mut self.k1)?;
                for i in 0..y.len() {
                    self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
                }
                sys.rhs(ws, l0, t + 0.5 * h, &self.tmp, &mut self.k2)?;
                for i in 0..y.len() {
                    self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
                }
                sys.rhs(ws, l0, t + 0.5 * h, &self.tmp, &mut self.k3)?;
                for i in 0..y.len() {
                    self.tmp[i] = y[i] + h * self.k3[i];
                }
                sys.rhs(ws, l0, t + h, &self.tmp, &mut self.k4)?;
                for i in 0..y.len() {
                    y[i] += (h / 6.0) * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
                }
            }
        }
        Ok(())
    }
}

struct Recorder<'a> {
    n: usize,
    analyses: &'a [GraphAnalysis],
    sched: &'a CascadeSchedule,
    guard: f64,
    rate: f64,
    v_start: Vec<Option<f64>>,
    out: SimResult,
}

impl Recorder<'_> {
    fn lyapunov(&self, ws: &Workspace, analysis: &GraphAnalysis) -> Vec<f64> {
        (0..self.n)
            .map(|k| observer::lyapunov_trace(analysis, &ws.psi.column(k)))
            .collect()
    }

    /// Captures `V_k` at the start of stage `k`'s window.
    fn mark_stage_start(&mut self, k: usize, ws: &Workspace, topo: usize) {
        let v = self.lyapunov(ws, &self.analyses[topo]);
        self.v_start[k - 1] = Some(v[k - 1]);
    }

    fn record(&mut self, t: f64, y: &[f64], ws: &Workspace, topo: usize) {
        let v = self.lyapunov(ws, &self.analyses[topo]);
        let stage = self.sched.active_stage(t).unwrap_or(1);
        let budget = match self.v_start[stage - 1] {
            Some(v0) => budget_with_rate(self.rate, self.sched, stage, v0, t, self.guard),
            None => f64::NAN,
        };
        self.out.times.push(t);
        self.out.leader_states.push(y[..self.n].to_vec());
        self.out.estimate_errors.push(ws.errors.clone());
        self.out.local_errors.push(ws.psi.clone());
        self.out.lyapunov.push(v);
        self.out.decay_bound.push(budget);
        self.out.topology_index.push(topo + 1);
    }
}

/// Integrates leader and observers from `cfg.t0` to `cfg.t_end`.
///
/// Identical inputs give bit-identical results.
pub fn run(
    topos: &TopologySequence,
    leader: &LeaderModel,
    gains: &ObserverGains,
    sched: &CascadeSchedule,
    initial_estimates: &Matrix,
    cfg: &SimConfig,
) -> Result<SimResult> {
    cfg.validate()?;
    let n = leader.order();
    let followers = topos.follower_count();
    if sched.order() != n {
        return Err(Error::DimensionMismatch(format!(
            "cascade has {} stages, leader order is {}",
            sched.order(),
            n
        )));
    }
    if initial_estimates.rows() != followers || initial_estimates.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial estimates are {}x{}, expected {}x{}",
            initial_estimates.rows(),
            initial_estimates.cols(),
            followers,
            n
        )));
    }
    if !initial_estimates.all_finite() {
        return Err(Error::Invalid("initial estimates must be finite".into()));
    }
    if sched.t0() != cfg.t0 {
        return Err(Error::Invalid(format!(
            "cascade starts at {} but the simulation starts at {}",
            sched.t0(),
            cfg.t0
        )));
    }
    let first_switch = topos.schedule()[0].0;
    if (first_switch - cfg.t0).abs() > 1e-12 {
        return Err(Error::Invalid(format!(
            "switching schedule must start at t0 = {}, first entry is at {}",
            cfg.t0, first_switch
        )));
    }

    let analyses = topos.analyses()?;
    let lambda = analyses.iter().map(|a| a.lambda_min).fold(f64::INFINITY, f64::min);
    let max_w = analyses.iter().map(|a| a.max_weight).fold(f64::NEG_INFINITY, f64::max);

    let sys = System {
        leader,
        dpto: Dpto {
            gains,
            schedule: sched,
            guard: cfg.guard,
            sign: cfg.sign_mode(),
        },
    };
    let mut ws = Workspace::new(followers, n);
    let mut stepper = Stepper::new(n + followers * n);
    let mut y: Vec<f64> = leader
        .initial_state()
        .iter()
        .chain(initial_estimates.as_slice())
        .copied()
        .collect();

    let mut rec = Recorder {
        n,
        analyses: &analyses,
        sched,
        guard: cfg.guard,
        rate: decay_rate(lambda, max_w, gains.alpha),
        v_start: vec![None; n],
        out: SimResult {
            times: Vec::new(),
            leader_states: Vec::new(),
            estimate_errors: Vec::new(),
            local_errors: Vec::new(),
            lyapunov: Vec::new(),
            decay_bound: Vec::new(),
            topology_index: Vec::new(),
            convergence_times: Vec::new(),
            event_log: Vec::new(),
        },
    };

    let grid = event_grid(sched, topos, cfg);
    let snap = event_merge_tol(cfg);
    let mut topo = topos.active_index(cfg.t0 + snap);
    ws.load(&y, &analyses[topo].sub_laplacian);
    for (t, kinds) in grid.iter().filter(|(t, _)| *t == cfg.t0) {
        for kind in kinds {
            if let EventKind::StageStart { stage } = *kind {
                rec.mark_stage_start(stage, &ws, topo);
            }
            rec.out.event_log.push(Event { time: *t, kind: *kind });
        }
    }
    rec.record(cfg.t0, &y, &ws, topo);

    let mut seg_start = cfg.t0;
    let mut accepted: usize = 0;
    for (seg_end, kinds) in grid.iter().filter(|(t, _)| *t > cfg.t0) {
        let seg_end = *seg_end;
        let mut j: u64 = 0;
        let mut t = seg_start;
        loop {
            let nominal = seg_start + (j + 1) as f64 * cfg.dt;
            let (next, last) = if nominal >= seg_end - 1e-6 * cfg.dt {
                (seg_end, true)
            } else {
                (nominal, false)
            };
            let l0 = &analyses[topo].sub_laplacian;
            stepper
                .step(cfg.method, &sys, &mut ws, l0, t, next - t, &mut y)
                .map_err(|e| match e {
                    Error::NonFinite { time } => Error::Diverged {
                        time,
                        magnitude: f64::INFINITY,
                    },
                    other => other,
                })?;
            accepted += 1;
            t = next;
            j += 1;

            let magnitude = y.iter().fold(0.0_f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
            if magnitude > cfg.divergence_threshold {
                return Err(Error::Diverged { time: t, magnitude });
            }

            if last {
                topo = topos.active_index(t + snap);
                ws.load(&y, &analyses[topo].sub_laplacian);
                for kind in kinds {
                    if let EventKind::StageStart { stage } = *kind {
                        rec.mark_stage_start(stage, &ws, topo);
                    }
                    rec.out.event_log.push(Event { time: t, kind: *kind });
                }
                rec.record(t, &y, &ws, topo);
                break;
            } else if accepted.is_multiple_of(cfg.record_stride) {
                ws.load(&y, &analyses[topo].sub_laplacian);
                rec.record(t, &y, &ws, topo);
            }
        }
        seg_start = seg_end;
    }

    let mut out = rec.out;
    out.convergence_times = detect_convergence(&out.times, &out.estimate_errors, cfg.convergence_tolerance);
    Ok(out)
}
