//! Leader dynamics, the distributed prescribed-time observer and its gain
//! conditions.
//!
//! Follower `i` keeps an estimate `x̂ⁱ = (x̂ⁱ_1, …, x̂ⁱ_n)` of the leader's
//! integrator chain. Stage `k < n` is driven by
//!
//! ```text
//! d/dt x̂ⁱ_k = x̂ⁱ_{k+1} - (α + β·ς̇_k/ς_k)·ψⁱ_k
//! d/dt x̂ⁱ_n = -σ·sign(ψⁱ_n) - (α + β·ς̇_n/ς_n)·ψⁱ_n
//! ```
//!
//! where `ψ_k = L0·(x̂_k - x_{0,k}·1)` is the local disagreement seen by each
//! follower.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::CascadeSchedule;
use crate::graph::{DirectedTopology, GraphAnalysis};
use crate::linalg::Matrix;

/// Slack allowed on the leader input bound before it counts as violated.
pub const INPUT_BOUND_SLACK: f64 = 1e-12;

/// Top-order leader input `f0(x, t)`.
///
/// Implement this to drive the leader with something other than the named
/// [`InputSpec`] signals.
pub trait InputSignal: Send + Sync + fmt::Debug {
    fn eval(&self, state: &[f64], t: f64) -> f64;
}

/// Leader inputs selectable by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSpec {
    Zero,
    Constant(f64),
    /// `amplitude · sin(angular_frequency · t)`.
    Sine { amplitude: f64, angular_frequency: f64 },
}

impl InputSpec {
    /// Smallest bound that holds for every `t`.
    pub fn natural_bound(&self) -> f64 {
        match *self {
            InputSpec::Zero => 0.0,
            InputSpec::Constant(c) => c.abs(),
            InputSpec::Sine { amplitude, .. } => amplitude.abs(),
        }
    }
}

impl InputSignal for InputSpec {
    fn eval(&self, _state: &[f64], t: f64) -> f64 {
        match *self {
            InputSpec::Zero => 0.0,
            InputSpec::Constant(c) => c,
            InputSpec::Sine {
                amplitude,
                angular_frequency,
            } => amplitude * (angular_frequency * t).sin(),
        }
    }
}

impl fmt::Display for InputSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            InputSpec::Zero => write!(f, "zero"),
            InputSpec::Constant(c) => write!(f, "constant({c:?})"),
            InputSpec::Sine {
                amplitude,
                angular_frequency,
            } => write!(f, "sine({amplitude:?}, {angular_frequency:?})"),
        }
    }
}

impl FromStr for InputSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            Error::Invalid(format!(
                "unknown leader input `{s}` (expected zero, constant(c) or sine(amplitude, angular_frequency))"
            ))
        };
        if s == "zero" {
            return Ok(InputSpec::Zero);
        }
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let args = inner
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<f64>>>()?;
        if args.iter().any(|a| !a.is_finite()) {
            return Err(bad());
        }
        match (s[..open].trim(), args.as_slice()) {
            ("constant", [c]) => Ok(InputSpec::Constant(*c)),
            ("sine", [a, w]) => Ok(InputSpec::Sine {
                amplitude: *a,
                angular_frequency: *w,
            }),
            _ => Err(bad()),
        }
    }
}

/// High-order integrator leader `ẋ_k = x_{k+1}`, `ẋ_n = f0(x, t)`.
#[derive(Debug, Clone)]
pub struct LeaderModel {
    order: usize,
    input: Arc<dyn InputSignal>,
    input_bound: f64,
    initial_state: Vec<f64>,
}

impl LeaderModel {
    pub fn new(input: Arc<dyn InputSignal>, input_bound: f64, initial_state: Vec<f64>) -> Result<Self> {
        if initial_state.is_empty() {
            return Err(Error::Invalid("leader order must be at least 1".into()));
        }
        if !(input_bound >= 0.0) || !input_bound.is_finite() {
            return Err(Error::Invalid(format!("input bound must be >= 0, got {input_bound}")));
        }
        if initial_state.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("leader initial state must be finite".into()));
        }
        Ok(Self {
            order: initial_state.len(),
            input,
            input_bound,
            initial_state,
        })
    }

    pub fn with_spec(spec: InputSpec, input_bound: f64, initial_state: Vec<f64>) -> Result<Self> {
        Self::new(Arc::new(spec), input_bound, initial_state)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn input_bound(&self) -> f64 {
        self.input_bound
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    /// Evaluates `f0`, failing when it leaves `[-f̄0, f̄0]`.
    pub fn input(&self, state: &[f64], t: f64) -> Result<f64> {
        let f0 = self.input.eval(state, t);
        if !(f0.abs() <= self.input_bound + INPUT_BOUND_SLACK) {
            return Err(Error::InputBoundViolated {
                value: f0,
                bound: self.input_bound,
                time: t,
            });
        }
        Ok(f0)
    }
}

/// Integrator-chain derivative of the leader.
pub fn leader_rhs(model: &LeaderModel, x0: &[f64], t: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x0.len()];
    leader_rhs_into(model, x0, t, &mut out)?;
    Ok(out)
}

pub(crate) fn leader_rhs_into(model: &LeaderModel, x0: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
    let n = model.order();
    if x0.len() != n || out.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "leader state has length {}, model order is {}",
            x0.len(),
            n
        )));
    }
    out[..n - 1].copy_from_slice(&x0[1..]);
    out[n - 1] = model.input(x0, t)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub alpha: f64,
    pub beta_factor: f64,
    pub sigma_factor: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta_factor: 1.0,
            sigma_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GainProvenance {
    User,
    Synthesized(Margins),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverGains {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub provenance: GainProvenance,
}

impl ObserverGains {
    pub fn user(alpha: f64, beta: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Invalid(format!("alpha must be > 0, got {alpha}")));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::Invalid(format!("beta must be >= 0, got {beta}")));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            alpha,
            beta,
            sigma,
            provenance: GainProvenance::User,
        })
    }
}

/// `max(weights) / min λ1` over all analyses. With one analysis this is the
/// time-invariant condition; with several sharing `H` it is the switching
/// one.
pub fn beta_lower_bound(analyses: &[GraphAnalysis]) -> Result<f64> {
    if analyses.is_empty() {
        return Err(Error::Invalid("no topology analyses given".into()));
    }
    for (j, a) in analyses.iter().enumerate() {
        if !(a.lambda_min > 0.0) {
            return Err(Error::InfeasibleTopology(format!(
                "topology {}: lambda_1(M) = {} is not positive",
                j + 1,
                a.lambda_min
            )));
        }
    }
    let max_w = analyses.iter().map(|a| a.max_weight).fold(f64::NEG_INFINITY, f64::max);
    let min_l = analyses.iter().map(|a| a.lambda_min).fold(f64::INFINITY, f64::min);
    Ok(max_w / min_l)
}

pub fn synthesize_gains(analyses: &[GraphAnalysis], f0_bound: f64, margins: Margins) -> Result<ObserverGains> {
    if !(margins.alpha > 0.0) {
        return Err(Error::Invalid(format!("alpha margin must be > 0, got {}", margins.alpha)));
    }
    if !(margins.beta_factor >= 1.0) || !(margins.sigma_factor >= 1.0) {
        return Err(Error::Invalid(format!(
            "beta and sigma factors must be >= 1, got {} and {}",
            margins.beta_factor, margins.sigma_factor
        )));
    }
    if !(f0_bound >= 0.0) {
        return Err(Error::Invalid(format!("input bound must be >= 0, got {f0_bound}")));
    }
    let bound = beta_lower_bound(analyses)?;
    Ok(ObserverGains {
        alpha: margins.alpha,
        beta: margins.beta_factor * bound,
        sigma: margins.sigma_factor * f0_bound,
        provenance: GainProvenance::Synthesized(margins),
    })
}

/// Gains that satisfy the basic sign constraints but not the convergence
/// conditions. The observer still runs; the guarantee does not hold.
#[derive(Debug, Clone, PartialEq)]
pub enum GainWarning {
    BetaBelowBound { beta: f64, bound: f64 },
    SigmaBelowInputBound { sigma: f64, input_bound: f64 },
}

impl fmt::Display for GainWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainWarning::BetaBelowBound { beta, bound } => {
                write!(f, "beta = {beta} is below the required bound {bound:.6}")
            }
            GainWarning::SigmaBelowInputBound { sigma, input_bound } => {
                write!(f, "sigma = {sigma} is below the leader input bound {input_bound}")
            }
        }
    }
}

pub fn check_gains(gains: &ObserverGains, analyses: &[GraphAnalysis], f0_bound: f64) -> Result<Vec<GainWarning>> {
    let bound = beta_lower_bound(analyses)?;
    let mut warnings = Vec::new();
    if gains.beta < bound {
        warnings.push(GainWarning::BetaBelowBound { beta: gains.beta, bound });
    }
    if gains.sigma < f0_bound {
        warnings.push(GainWarning::SigmaBelowInputBound {
            sigma: gains.sigma,
            input_bound: f0_bound,
        });
    }
    Ok(warnings)
}

/// Global errors `x̃` as an `N×n` matrix: `x̂ⁱ_k - x_{0,k}`.
pub fn global_errors(estimates: &Matrix, x0: &[f64]) -> Result<Matrix> {
    if estimates.cols() != x0.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimates have {} columns, leader order is {}",
            estimates.cols(),
            x0.len()
        )));
    }
    let mut e = estimates.clone();
    for i in 0..e.rows() {
        for (v, x) in e.row_mut(i).iter_mut().zip(x0) {
            *v -= x;
        }
    }
    Ok(e)
}

/// Local errors `ψ_k = L0·x̃_k`, returned as an `N×n` matrix whose column
/// `k` is `ψ_k`.
pub fn local_errors(analysis: &GraphAnalysis, estimates: &Matrix, x0: &[f64]) -> Result<Matrix> {
    let l0 = &analysis.sub_laplacian;
    if estimates.rows() != l0.rows() {
        return Err(Error::DimensionMismatch(format!(
            "estimates have {} rows, topology has {} followers",
            estimates.rows(),
            l0.rows()
        )));
    }
    l0.matmul(&global_errors(estimates, x0)?)
}

/// `ψⁱ_k = b_i(x̂ⁱ_k - x_{0,k}) + Σ_j a_ij(x̂ⁱ_k - x̂ʲ_k)`, evaluated follower
/// by follower.
pub fn local_errors_componentwise(topo: &DirectedTopology, estimates: &Matrix, x0: &[f64]) -> Result<Matrix> {
    let n_f = topo.follower_count();
    if estimates.rows() != n_f || estimates.cols() != x0.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimates are {}x{}, expected {}x{}",
            estimates.rows(),
            estimates.cols(),
            n_f,
            x0.len()
        )));
    }
    let a = topo.adjacency();
    let b = topo.pinning();
    let mut psi = Matrix::zeros(n_f, x0.len());
    for i in 0..n_f {
        for k in 0..x0.len() {
            let mine = estimates[(i, k)];
            let mut s = b[i] * (mine - x0[k]);
            for j in 0..n_f {
                if a[(i, j)] != 0.0 {
                    s += a[(i, j)] * (mine - estimates[(j, k)]);
                }
            }
            psi[(i, k)] = s;
        }
    }
    Ok(psi)
}

/// `½ Σ_i wᵢ ψᵢ²` with the analysis' weight vector.
pub fn lyapunov_trace(analysis: &GraphAnalysis, psi_k: &[f64]) -> f64 {
    0.5 * analysis
        .weights
        .iter()
        .zip(psi_k)
        .map(|(w, p)| w * p * p)
        .sum::<f64>()
}

/// How the discontinuous `sign(ψ)` term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum SignMode {
    /// `sign(0) = 0`.
    #[default]
    Hard,
    /// Boundary layer `x/(|x| + ε)`.
    Smoothed(f64),
}

impl SignMode {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            SignMode::Hard => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            SignMode::Smoothed(eps) => x / (x.abs() + eps),
        }
    }
}

/// Gain set plus the evaluation settings the right-hand side needs.
#[derive(Debug, Clone)]
pub struct Dpto<'a> {
    pub gains: &'a ObserverGains,
    pub schedule: &'a CascadeSchedule,
    pub guard: f64,
    pub sign: SignMode,
}

impl Dpto<'_> {
    /// Estimate derivatives for the active topology `analysis`, as an `N×n`
    /// matrix.
    pub fn rhs(&self, analysis: &GraphAnalysis, estimates: &Matrix, x0: &[f64], t: f64) -> Result<Matrix> {
        let psi = local_errors(analysis, estimates, x0)?;
        let mut out = Matrix::zeros(estimates.rows(), estimates.cols());
        self.rhs_from_psi(&psi, estimates, t, &mut out)?;
        Ok(out)
    }

    pub(crate) fn rhs_from_psi(&self, psi: &Matrix, estimates: &Matrix, t: f64, out: &mut Matrix) -> Result<()> {
        let n = estimates.cols();
        if self.schedule.order() != n {
            return Err(Error::DimensionMismatch(format!(
                "cascade has {} stages, leader order is {}",
                self.schedule.order(),
                n
            )));
        }
        let g = self.gains;
        let stage_gain: Vec<f64> = (1..=n)
            .map(|k| g.alpha + g.beta * self.schedule.stage_gain(k, t, self.guard))
            .collect();
        for i in 0..estimates.rows() {
            for k in 0..n {
                let correction = stage_gain[k] * psi[(i, k)];
                let d = if k + 1 < n {
                    estimates[(i, k + 1)] - correction
                } else {
                    -g.sigma * self.sign.apply(psi[(i, k)]) - correction
                };
                if !d.is_finite() {
                    return Err(Error::NonFinite { time: t });
                }
                out[(i, k)] = d;
            }
        }
        Ok(())
    }
}

/// Observer derivative with hard sign feedback.
pub fn dpto_rhs(
    analysis_at_t: &GraphAnalysis,
    gains: &ObserverGains,
    sched: &CascadeSchedule,
    guard: f64,
    estimates: &Matrix,
    x0: &[f64],
    t: f64,
) -> Result<Matrix> {
    Dpto {
        gains,
        schedule: sched,
        guard,
        sign: SignMode::Hard,
    }
    .rhs(analysis_at_t, estimates, x0, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_analysis;

    fn scalar_analysis() -> GraphAnalysis {
        build_analysis(&DirectedTopology::from_rows(&[[0.0]], &[1.0]).unwrap()).unwrap()
    }

    fn fake_analysis(weights: Vec<f64>, lambda_min: f64) -> GraphAnalysis {
        let n = weights.len();
        GraphAnalysis {
            sub_laplacian: Matrix::identity(n),
            max_weight: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            weights,
            mirror: Matrix::identity(n),
            lambda_min,
            weight_source: crate::graph::WeightSource::UserH,
        }
    }

    #[test]
    fn leader_chain() {
        let zero = LeaderModel::with_spec(InputSpec::Zero, 0.0, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(leader_rhs(&zero, &[1.0, 0.0, 0.0], 0.0).unwrap(), vec![0.0, 0.0, 0.0]);

        let sine = InputSpec::Sine {
            amplitude: 0.125,
            angular_frequency: 0.5,
        };
        let m = LeaderModel::with_spec(sine, 0.125, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(leader_rhs(&m, &[1.0, 0.0, 0.0], 0.0).unwrap(), vec![0.0, 0.0, 0.0]);

        let c = LeaderModel::with_spec(InputSpec::Constant(0.7), 1.0, vec![0.0, 0.0]).unwrap();
        assert_eq!(leader_rhs(&c, &[2.0, -3.0], 5.0).unwrap(), vec![-3.0, 0.7]);
    }

    #[test]
    fn leader_input_bound_violation() {
        let m = LeaderModel::with_spec(InputSpec::Constant(0.5), 0.1, vec![0.0]).unwrap();
        assert!(matches!(leader_rhs(&m, &[0.0], 0.0), Err(Error::InputBoundViolated { .. })));
    }

    #[test]
    fn input_spec_parsing() {
        assert_eq!("zero".parse::<InputSpec>().unwrap(), InputSpec::Zero);
        assert_eq!("constant(2.5)".parse::<InputSpec>().unwrap(), InputSpec::Constant(2.5));
        assert_eq!(
            " sine(0.125, 0.5) ".parse::<InputSpec>().unwrap(),
            InputSpec::Sine {
                amplitude: 0.125,
                angular_frequency: 0.5
            }
        );
        for bad in ["one", "sine(1)", "constant(x)", "sine(1,2", "cosine(1,2)"] {
            assert!(bad.parse::<InputSpec>().is_err(), "{bad}");
        }
        for spec in [
            InputSpec::Zero,
            InputSpec::Constant(-0.1),
            InputSpec::Sine {
                amplitude: 0.125,
                angular_frequency: 0.5,
            },
        ] {
            assert_eq!(spec.to_string().parse::<InputSpec>().unwrap(), spec);
        }
    }

    #[test]
    fn synthesis_scalar() {
        let g = synthesize_gains(&[scalar_analysis()], 0.125, Margins::default()).unwrap();
        assert_eq!((g.alpha, g.beta, g.sigma), (1.0, 1.0, 0.125));
        assert!(matches!(g.provenance, GainProvenance::Synthesized(_)));
    }

    #[test]
    fn synthesis_rejects_nonpositive_lambda() {
        let bad = fake_analysis(vec![1.0, 1.0], -0.5);
        assert!(matches!(
            synthesize_gains(&[bad], 0.1, Margins::default()),
            Err(Error::InfeasibleTopology(_))
        ));
    }

    #[test]
    fn synthesis_uses_worst_case_over_topologies() {
        let a = fake_analysis(vec![3.0, 5.0], 2.0);
        let b = fake_analysis(vec![3.0, 5.0], 0.5);
        let g = synthesize_gains(
            &[a, b],
            0.2,
            Margins {
                alpha: 2.0,
                beta_factor: 1.5,
                sigma_factor: 2.0,
            },
        )
        .unwrap();
        assert_eq!(g.alpha, 2.0);
        assert_eq!(g.beta, 1.5 * 5.0 / 0.5);
        assert_eq!(g.sigma, 0.4);
    }

    #[test]
    fn synthesized_beta_equals_bound_and_lower_beta_warns() {
        let a = fake_analysis(vec![3.0, 5.0], 0.8);
        let g = synthesize_gains(std::slice::from_ref(&a), 0.1, Margins::default()).unwrap();
        assert_eq!(g.beta, 5.0 / 0.8);
        assert!(check_gains(&g, std::slice::from_ref(&a), 0.1).unwrap().is_empty());
        let low = ObserverGains::user(1.0, g.beta * 0.99, 0.05).unwrap();
        let w = check_gains(&low, &[a], 0.1).unwrap();
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn lyapunov_examples() {
        let a = fake_analysis(vec![1.0, 1.0], 1.0);
        assert_eq!(lyapunov_trace(&a, &[0.0, 0.0]), 0.0);
        assert_eq!(lyapunov_trace(&a, &[1.0, -1.0]), 1.0);
        let b = fake_analysis(vec![2.0, 3.0], 1.0);
        assert_eq!(lyapunov_trace(&b, &[1.0, 2.0]), 7.0);
    }

    #[test]
    fn local_errors_scalar() {
        let a = scalar_analysis();
        let est = Matrix::from_rows(&[[1.5]]).unwrap();
        let psi = local_errors(&a, &est, &[1.0]).unwrap();
        assert_eq!(psi.as_slice(), &[0.5]);
        let exact = local_errors(&a, &Matrix::from_rows(&[[1.0]]).unwrap(), &[1.0]).unwrap();
        assert_eq!(exact.as_slice(), &[0.0]);
    }

    #[test]
    fn local_errors_dimension_mismatch() {
        let a = scalar_analysis();
        let est = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(local_errors(&a, &est, &[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rhs_single_follower_outside_windows() {
        let a = scalar_analysis();
        let gains = ObserverGains::user(1.0, 3.0, 0.2).unwrap();
        let sched = CascadeSchedule::new(0.0, vec![0.5], 2.01).unwrap();
        let est = Matrix::from_rows(&[[1.5]]).unwrap();
        let d = dpto_rhs(&a, &gains, &sched, 1e-3, &est, &[1.0], 2.0).unwrap();
        assert_eq!(d.as_slice(), &[-0.2 * 1.0 - 1.0 * 0.5]);
    }

    #[test]
    fn rhs_vanishes_at_exact_estimation() {
        let a = scalar_analysis();
        let gains = ObserverGains::user(1.0, 3.0, 0.2).unwrap();
        let sched = CascadeSchedule::new(0.0, vec![0.2, 0.2, 0.2], 2.01).unwrap();
        let x0 = [1.0, -2.0, 0.5];
        let est = Matrix::from_rows(&[x0]).unwrap();
        let d = dpto_rhs(&a, &gains, &sched, 1e-3, &est, &x0, 0.1).unwrap();
        assert_eq!(d.as_slice(), &[-2.0, 0.5, 0.0]);
    }

    #[test]
    fn sign_modes() {
        assert_eq!(SignMode::Hard.apply(0.0), 0.0);
        assert_eq!(SignMode::Hard.apply(-3.0), -1.0);
        assert_eq!(SignMode::Hard.apply(1e-300), 1.0);
        assert_eq!(SignMode::Smoothed(1.0).apply(1.0), 0.5);
    }
}
