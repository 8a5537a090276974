//! Movement optimization of planar agents in a learned action space.
//!
//! Random exploration data trains goal-conditioned low-level controllers
//! that turn short target-state trajectories into torques. Offline CMA-ES,
//! online sampling MPC and PPO can then search over those targets instead
//! of raw torques.

pub mod error;
pub mod rng;
pub mod artifact;
pub mod explore;
pub mod landscape;
pub mod llc;
pub mod nn;
pub mod optimize;
pub mod sim;

pub use error::{Error, Result};
pub use optimize::{ActionSpace, RunRecord};
pub use sim::{EnvId, Model, SimState, StateRanges, TaskId};
