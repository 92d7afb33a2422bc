//! Centralized critics over every agent's observation and action; local actors.

use serde::{Deserialize, Serialize};

use super::actor_critic::{centralized_update, ActorCritic, JointBatch};
use super::{gather, save_state, to_action, wrap, AgentError, AgentLosses, Algorithm, AlgorithmContext, MediumSource};
use super::{ActionTransition, CommTransition, ACTION_DIM};
use crate::medium::Medium;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Maddpg {
    obs_dim: usize,
    agents: Vec<ActorCritic>,
}

impl Maddpg {
    pub fn new(ctx: &AlgorithmContext) -> Result<Self, AgentError> {
        let critic_in = ctx.n_agents * (ctx.obs_dim + ACTION_DIM);
        let agents = (0..ctx.n_agents)
            .map(|i| ActorCritic::new(ctx, "action", i, ctx.obs_dim, ACTION_DIM, critic_in))
            .collect::<Result<_, _>>()?;
        Ok(Maddpg { obs_dim: ctx.obs_dim, agents })
    }

    pub fn agents(&self) -> &[ActorCritic] {
        &self.agents
    }
}

impl Algorithm for Maddpg {
    fn name(&self) -> &'static str {
        "maddpg"
    }

    fn medium_source(&self) -> MediumSource {
        MediumSource::None
    }

    fn n_agents(&self) -> usize {
        self.agents.len()
    }

    fn begin_episode(&mut self) {
        self.agents.iter_mut().for_each(|a| a.explorer.noise.reset());
    }

    fn select_actions(&mut self, obs: &[Vec<f64>], _medium: Option<&Medium>, explore: bool) -> Result<Vec<[f64; 4]>, AgentError> {
        self.agents.iter_mut().zip(obs).map(|(a, o)| a.act(o, explore).map(|v| to_action(&v))).collect()
    }

    fn update_agent(
        &mut self,
        i: usize,
        batch: &[&ActionTransition],
        _comm: Option<&[&CommTransition]>,
        gamma: f64,
    ) -> Result<AgentLosses, AgentError> {
        let n = self.agents.len();
        let obs = (0..n).map(|j| gather::obs(batch, j, self.obs_dim)).collect::<Result<Vec<_>, _>>()?;
        let next_obs = (0..n).map(|j| gather::next_obs(batch, j, self.obs_dim)).collect::<Result<Vec<_>, _>>()?;
        let joint = JointBatch {
            actions: (0..n).map(|j| gather::actions(batch, j)).collect::<Result<_, _>>()?,
            actor_input: obs.clone(),
            next_actor_input: next_obs.clone(),
            obs,
            next_obs,
            rewards: gather::rewards(batch, i, self.reward_signal()),
        };
        let action = centralized_update(&mut self.agents, i, &joint, gamma).map_err(wrap(i))?;
        Ok(AgentLosses { action, comm: None })
    }

    fn update_targets(&mut self, tau: f64) -> Result<(), AgentError> {
        self.agents.iter_mut().try_for_each(|a| a.soft_update(tau))
    }

    fn save(&self) -> Result<serde_json::Value, AgentError> {
        save_state(self)
    }
}
