//! Independent learners: `Q_i(o_i, a_i)`, `mu_i(o_i)`.

use serde::{Deserialize, Serialize};

use super::actor_critic::{decentralized_update, ActorCritic, LocalBatch};
use super::{gather, save_state, to_action, wrap, AgentError, AgentLosses, Algorithm, AlgorithmContext, MediumSource};
use super::{ActionTransition, CommTransition, ACTION_DIM};
use crate::medium::Medium;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ddpg {
    obs_dim: usize,
    agents: Vec<ActorCritic>,
}

impl Ddpg {
    pub fn new(ctx: &AlgorithmContext) -> Result<Self, AgentError> {
        let agents = (0..ctx.n_agents)
            .map(|i| ActorCritic::new(ctx, "action", i, ctx.obs_dim, ACTION_DIM, ctx.obs_dim + ACTION_DIM))
            .collect::<Result<_, _>>()?;
        Ok(Ddpg { obs_dim: ctx.obs_dim, agents })
    }

    pub fn agents(&self) -> &[ActorCritic] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [ActorCritic] {
        &mut self.agents
    }
}

impl Algorithm for Ddpg {
    fn name(&self) -> &'static str {
        "ddpg"
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
        let local = LocalBatch {
            input: gather::obs(batch, i, self.obs_dim)?,
            actions: gather::actions(batch, i)?,
            rewards: gather::rewards(batch, i, self.reward_signal()),
            next_input: gather::next_obs(batch, i, self.obs_dim)?,
        };
        let action = decentralized_update(&mut self.agents[i], &local, gamma).map_err(wrap(i))?;
        Ok(AgentLosses { action, comm: None })
    }

    fn update_targets(&mut self, tau: f64) -> Result<(), AgentError> {
        self.agents.iter_mut().try_for_each(|a| a.soft_update(tau))
    }

    fn save(&self) -> Result<serde_json::Value, AgentError> {
        save_state(self)
    }
}
