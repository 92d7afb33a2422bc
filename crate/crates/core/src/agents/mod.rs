//! Actor-critic learners.
//!
//! Every training algorithm implements [`Algorithm`] and is registered by name
//! in [`registry`]. The trainer drives them through the same episode loop and
//! only asks each one where its medium comes from and how to update agent `i`.

pub mod actor_critic;
pub mod ddpg;
pub mod ddpg_oc;
pub mod maddpg;
pub mod maddpg_m;
pub mod meta;
pub mod noise;
pub mod registry;
pub mod replay;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approximator::ApproxError;
use crate::medium::{CommActionSet, Medium, MediumError};

pub use actor_critic::{ActorCritic, StepLosses};
pub use noise::{Explorer, OuNoise};
pub use registry::{lookup, AlgorithmEntry, ALGORITHMS};
pub use replay::{ActionTransition, CommTransition, ReplayBuffer};

/// Width of an environmental action: `(+x, -x, +y, -y)`.
pub const ACTION_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Medium(#[from] MediumError),
    #[error("empty batch")]
    EmptyBatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("{what} became non-finite ({value})")]
    NonFiniteLoss { what: &'static str, value: f64 },
    #[error("agent {agent} update failed: {source}")]
    Update { agent: usize, source: Box<AgentError> },
    #[error("this algorithm needs a medium but none was supplied")]
    MissingMedium,
    #[error("this algorithm needs communication transitions")]
    MissingCommBatch,
    #[error("unknown algorithm `{name}` (valid: {valid})")]
    UnknownAlgorithm { name: String, valid: String },
    #[error("bad saved state: {0}")]
    BadState(String),
}

/// Where an algorithm's medium comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediumSource {
    /// No medium; policies see only private observations.
    None,
    /// Assembled from learned communication actions.
    Learned,
    /// The hard-coded optimal medium.
    Oracle,
}

/// Which reward the action critics regress on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSignal {
    Extrinsic,
    Intrinsic,
}

/// Sizes and hyperparameters shared by all learners of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmContext {
    pub n_agents: usize,
    pub obs_dim: usize,
    /// Decoded medium block width (2N).
    pub medium_dim: usize,
    /// Communication action width: 1 (broadcast) or N (unicast).
    pub comm_dim: usize,
    pub policy_hidden: usize,
    pub critic_hidden: usize,
    pub learning_rate: f64,
    pub grad_clip: Option<f64>,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub seed: u64,
    /// Reward used by the oracle-communication baseline.
    pub oracle_reward: RewardSignal,
}

impl AlgorithmContext {
    /// Defaults: 64-unit policies, 128-unit critics, Adam lr 0.01, clip 0.5, OU(0.15, 0.2).
    pub fn new(n_agents: usize, obs_dim: usize, comm_dim: usize, seed: u64) -> Self {
        AlgorithmContext {
            n_agents,
            obs_dim,
            medium_dim: 2 * n_agents,
            comm_dim,
            policy_hidden: 64,
            critic_hidden: 128,
            learning_rate: 0.01,
            grad_clip: Some(0.5),
            ou_theta: 0.15,
            ou_sigma: 0.2,
            seed,
            oracle_reward: RewardSignal::Extrinsic,
        }
    }
}

/// Per-agent losses from one update call.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AgentLosses {
    pub action: StepLosses,
    pub comm: Option<StepLosses>,
}

pub trait Algorithm: Send {
    fn name(&self) -> &'static str;

    fn medium_source(&self) -> MediumSource;

    fn reward_signal(&self) -> RewardSignal {
        RewardSignal::Extrinsic
    }

    fn n_agents(&self) -> usize;

    /// Reset per-episode exploration state.
    fn begin_episode(&mut self);

    /// Communication actions, for algorithms that learn to communicate.
    fn select_comm(&mut self, _obs: &[Vec<f64>], _explore: bool) -> Result<Option<CommActionSet>, AgentError> {
        Ok(None)
    }

    fn select_actions(
        &mut self,
        obs: &[Vec<f64>],
        medium: Option<&Medium>,
        explore: bool,
    ) -> Result<Vec<[f64; ACTION_DIM]>, AgentError>;

    /// Update agent `i` from its own minibatches.
    fn update_agent(
        &mut self,
        agent: usize,
        batch: &[&ActionTransition],
        comm_batch: Option<&[&CommTransition]>,
        gamma: f64,
    ) -> Result<AgentLosses, AgentError>;

    /// Soft-update every target network.
    fn update_targets(&mut self, tau: f64) -> Result<(), AgentError>;

    fn save(&self) -> Result<serde_json::Value, AgentError>;
}

pub(crate) fn to_action(v: &[f64]) -> [f64; ACTION_DIM] {
    let mut a = [0.0; ACTION_DIM];
    a.copy_from_slice(&v[..ACTION_DIM]);
    a
}

pub(crate) fn save_state<T: Serialize>(state: &T) -> Result<serde_json::Value, AgentError> {
    serde_json::to_value(state).map_err(|e| AgentError::BadState(e.to_string()))
}

pub(crate) fn load_state<T: for<'de> Deserialize<'de>>(value: serde_json::Value) -> Result<T, AgentError> {
    serde_json::from_value(value).map_err(|e| AgentError::BadState(e.to_string()))
}

pub(crate) fn wrap(agent: usize) -> impl FnOnce(AgentError) -> AgentError {
    move |e| AgentError::Update { agent, source: Box::new(e) }
}

/// Column-stacking views over a sampled minibatch.
pub(crate) mod gather {
    use super::*;
    use crate::agents::actor_critic::{hcat, stack_rows};

    pub fn obs(batch: &[&ActionTransition], i: usize, width: usize) -> Result<Array2<f64>, AgentError> {
        stack_rows(batch.iter().map(|t| t.obs[i].as_slice()), width)
    }

    pub fn next_obs(batch: &[&ActionTransition], i: usize, width: usize) -> Result<Array2<f64>, AgentError> {
        stack_rows(batch.iter().map(|t| t.next_obs[i].as_slice()), width)
    }

    pub fn actions(batch: &[&ActionTransition], i: usize) -> Result<Array2<f64>, AgentError> {
        stack_rows(batch.iter().map(|t| &t.actions[i][..]), ACTION_DIM)
    }

    pub fn medium(batch: &[&ActionTransition], i: usize, width: usize) -> Result<Array2<f64>, AgentError> {
        let rows = batch
            .iter()
            .map(|t| t.medium.as_ref().map(|m| m[i].as_slice()).ok_or(AgentError::MissingMedium))
            .collect::<Result<Vec<_>, _>>()?;
        stack_rows(rows, width)
    }

    pub fn rewards(batch: &[&ActionTransition], i: usize, signal: RewardSignal) -> Array1<f64> {
        batch
            .iter()
            .map(|t| match signal {
                RewardSignal::Extrinsic => t.extrinsic[i],
                RewardSignal::Intrinsic => t.intrinsic[i],
            })
            .collect()
    }

    /// `o_1 ++ ... ++ o_N` per sample.
    pub fn all_obs(per_agent: &[Array2<f64>]) -> Array2<f64> {
        let views: Vec<_> = per_agent.iter().map(|a| a.view()).collect();
        hcat(&views)
    }
}
