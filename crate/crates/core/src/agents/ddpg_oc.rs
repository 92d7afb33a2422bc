//! Decentralized learners reading a hard-coded optimal medium:
//! `Q_i(o_i, m_i, a_i)`, `mu_i(o_i, m_i)`.

use serde::{Deserialize, Serialize};

use super::actor_critic::{decentralized_update, hcat, ActorCritic, LocalBatch, StepLosses};
use super::{gather, save_state, to_action, wrap, AgentError, AgentLosses, Algorithm, AlgorithmContext, MediumSource};
use super::{ActionTransition, CommTransition, RewardSignal, ACTION_DIM};
use crate::medium::Medium;

/// Action policies conditioned on the private observation and the medium slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumPolicies {
    obs_dim: usize,
    medium_dim: usize,
    pub agents: Vec<ActorCritic>,
}

impl MediumPolicies {
    pub fn new(ctx: &AlgorithmContext) -> Result<Self, AgentError> {
        let input = ctx.obs_dim + ctx.medium_dim;
        let agents = (0..ctx.n_agents)
            .map(|i| ActorCritic::new(ctx, "action", i, input, ACTION_DIM, input + ACTION_DIM))
            .collect::<Result<_, _>>()?;
        Ok(MediumPolicies { obs_dim: ctx.obs_dim, medium_dim: ctx.medium_dim, agents })
    }

    pub fn reset_noise(&mut self) {
        self.agents.iter_mut().for_each(|a| a.explorer.noise.reset());
    }

    pub fn select(&mut self, obs: &[Vec<f64>], medium: Option<&Medium>, explore: bool) -> Result<Vec<[f64; 4]>, AgentError> {
        let medium = medium.ok_or(AgentError::MissingMedium)?;
        let blocks = medium.landmark_blocks();
        self.agents
            .iter_mut()
            .zip(obs.iter().zip(&blocks))
            .map(|(a, (o, m))| {
                let input = [o.as_slice(), m.as_slice()].concat();
                a.act(&input, explore).map(|v| to_action(&v))
            })
            .collect()
    }

    /// The bootstrap reuses the stored medium `m_i`, not a next-step medium.
    pub fn update(&mut self, i: usize, batch: &[&ActionTransition], signal: RewardSignal, gamma: f64) -> Result<StepLosses, AgentError> {
        let m = gather::medium(batch, i, self.medium_dim)?;
        let o = gather::obs(batch, i, self.obs_dim)?;
        let o_next = gather::next_obs(batch, i, self.obs_dim)?;
        let local = LocalBatch {
            input: hcat(&[o.view(), m.view()]),
            actions: gather::actions(batch, i)?,
            rewards: gather::rewards(batch, i, signal),
            next_input: hcat(&[o_next.view(), m.view()]),
        };
        decentralized_update(&mut self.agents[i], &local, gamma).map_err(wrap(i))
    }

    pub fn update_targets(&mut self, tau: f64) -> Result<(), AgentError> {
        self.agents.iter_mut().try_for_each(|a| a.soft_update(tau))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdpgOc {
    policies: MediumPolicies,
    reward: RewardSignal,
}

impl DdpgOc {
    pub fn new(ctx: &AlgorithmContext) -> Result<Self, AgentError> {
        Ok(DdpgOc { policies: MediumPolicies::new(ctx)?, reward: ctx.oracle_reward })
    }

    pub fn policies(&self) -> &MediumPolicies {
        &self.policies
    }
}

impl Algorithm for DdpgOc {
    fn name(&self) -> &'static str {
        "ddpg-oc"
    }

    fn medium_source(&self) -> MediumSource {
        MediumSource::Oracle
    }

    fn reward_signal(&self) -> RewardSignal {
        self.reward
    }

    fn n_agents(&self) -> usize {
        self.policies.agents.len()
    }

    fn begin_episode(&mut self) {
        self.policies.reset_noise();
    }

    fn select_actions(&mut self, obs: &[Vec<f64>], medium: Option<&Medium>, explore: bool) -> Result<Vec<[f64; 4]>, AgentError> {
        self.policies.select(obs, medium, explore)
    }

    fn update_agent(
        &mut self,
        i: usize,
        batch: &[&ActionTransition],
        _comm: Option<&[&CommTransition]>,
        gamma: f64,
    ) -> Result<AgentLosses, AgentError> {
        Ok(AgentLosses { action: self.policies.update(i, batch, self.reward, gamma)?, comm: None })
    }

    fn update_targets(&mut self, tau: f64) -> Result<(), AgentError> {
        self.policies.update_targets(tau)
    }

    fn save(&self) -> Result<serde_json::Value, AgentError> {
        save_state(self)
    }
}
