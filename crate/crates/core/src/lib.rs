//! Distributed prescribed-time observers for leader-follower networks of
//! high-order integrators on fixed and switching digraphs.
//!
//! * [`graph`] builds sub-Laplacians, weight vectors and mirror matrices.
//! * [`gain`] holds the prescribed-time scaling function and stage windows.
//! * [`observer`] has the leader model, observer dynamics and gain synthesis.
//! * [`sim`] integrates the coupled system and extracts convergence metrics.
//! * [`cli`] reads experiment configs and writes traces and plots.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cli;
pub mod error;
pub mod gain;
pub mod graph;
pub mod linalg;
pub mod observer;
pub mod sim;

pub use error::{Error, Result};
pub use gain::{CascadeSchedule, ScalingWindow};
pub use graph::{build_analysis, mirror_with_h, DirectedTopology, GraphAnalysis, TopologySequence, WeightSource};
pub use linalg::{min_eig_symmetric, Matrix};
pub use observer::{
    dpto_rhs, leader_rhs, local_errors, lyapunov_trace, synthesize_gains, InputSpec, LeaderModel, Margins,
    ObserverGains,
};
pub use sim::{decay_budget, detect_convergence, run, Method, SimConfig, SimResult};
