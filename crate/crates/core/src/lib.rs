//! Microscopic traffic simulation with mixed intersection control.
//!
//! Some intersections run fixed-time signals; at the others robot vehicles
//! decide Stop or Go inside a control zone using one shared distributional
//! DQN policy, while human drivers follow the IDM plus gap acceptance. The
//! crate holds the simulator, the learner and the evaluation harness; the
//! `mixflow` binary wraps [`commands`].
//!
//! The numeric kernels ([`dynamics`], [`rl::Mlp`], [`rl::project_target`],
//! [`rl::Adam`]) are generic over [`num_traits::Float`]. The simulator and
//! training loop are fixed to `f64`; the aliases below name the concrete
//! types they use.

pub mod commands;
pub mod direction;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod rl;
pub mod scenario;
pub mod signal;
pub mod sim;
pub mod zone;

pub use error::{Error, Result};
pub use scenario::{load_scenario, load_scenario_file, Scenario};
pub use sim::{simulate_episode, Controller, EpisodeResult};

/// Scalar used by the simulator and the learner.
pub type Real = f64;
pub type IdmParams = dynamics::IdmParams<Real>;
pub type PolicyNet = rl::Mlp<Real>;
pub type ValueDistribution = rl::ValueDistribution<Real>;
pub type Optimizer = rl::Adam<Real>;
