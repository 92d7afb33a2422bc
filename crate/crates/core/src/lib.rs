//! Multi-agent actor-critic learning with a learned communication medium.
//!
//! * [`approximator`]: MLPs, gradients, Adam, soft updates.
//! * [`env`]: noisy cooperative-navigation scenarios.
//! * [`medium`]: medium assembly from communication actions, and the oracle medium.
//! * [`agents`]: the learners, behind the [`agents::Algorithm`] trait and a name registry.
//! * [`trainer`]: the two-timescale training loop, evaluation and metrics.

pub mod agents;
pub mod approximator;
pub mod env;
pub mod medium;
pub mod seed;
pub mod trainer;
