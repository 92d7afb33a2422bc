//! Two-level learner: communication policies `nu_i(o_i)` choose who fills the
//! medium, action policies `mu_i(o_i, m_i)` act on it.
//!
//! Communication critics are centralized over `(o_1, c_1, ..., o_N, c_N)` and
//! regress on window-accumulated extrinsic rewards `K`. Action critics are
//! decentralized and regress on intrinsic rewards measured against the medium.

use serde::{Deserialize, Serialize};

use super::actor_critic::{centralized_update, stack_rows, ActorCritic, JointBatch};
use super::ddpg_oc::MediumPolicies;
use super::{save_state, wrap, AgentError, AgentLosses, Algorithm, AlgorithmContext, MediumSource, RewardSignal};
use super::{ActionTransition, CommTransition};
use crate::medium::{CommActionSet, Medium};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaddpgM {
    obs_dim: usize,
    comm_dim: usize,
    action: MediumPolicies,
    comm: Vec<ActorCritic>,
}

impl MaddpgM {
    pub fn new(ctx: &AlgorithmContext) -> Result<Self, AgentError> {
        let n = ctx.n_agents;
        let critic_in = n * (ctx.obs_dim + ctx.comm_dim);
        let comm = (0..n)
            .map(|i| ActorCritic::new(ctx, "comm", i, ctx.obs_dim, ctx.comm_dim, critic_in))
            .collect::<Result<_, _>>()?;
        Ok(MaddpgM { obs_dim: ctx.obs_dim, comm_dim: ctx.comm_dim, action: MediumPolicies::new(ctx)?, comm })
    }

    pub fn action_policies(&self) -> &MediumPolicies {
        &self.action
    }

    pub fn comm_policies(&self) -> &[ActorCritic] {
        &self.comm
    }

    pub fn comm_policies_mut(&mut self) -> &mut [ActorCritic] {
        &mut self.comm
    }

    fn update_comm(&mut self, i: usize, batch: &[&CommTransition], gamma: f64) -> Result<super::StepLosses, AgentError> {
        let n = self.comm.len();
        let per_agent = |f: &dyn Fn(&CommTransition, usize) -> Vec<f64>, width: usize| {
            (0..n)
                .map(|j| {
                    let rows: Vec<Vec<f64>> = batch.iter().map(|t| f(t, j)).collect();
                    stack_rows(rows.iter().map(Vec::as_slice), width)
                })
                .collect::<Result<Vec<_>, _>>()
        };
        let obs = per_agent(&|t, j| t.obs[j].clone(), self.obs_dim)?;
        let next_obs = per_agent(&|t, j| t.obs_after[j].clone(), self.obs_dim)?;
        let actions = per_agent(&|t, j| t.comm.agent_row(j), self.comm_dim)?;
        let joint = JointBatch {
            actor_input: obs.clone(),
            next_actor_input: next_obs.clone(),
            obs,
            next_obs,
            actions,
            rewards: batch.iter().map(|t| t.accumulated[i]).collect(),
        };
        centralized_update(&mut self.comm, i, &joint, gamma).map_err(wrap(i))
    }
}

impl Algorithm for MaddpgM {
    fn name(&self) -> &'static str {
        "maddpg-m"
    }

    fn medium_source(&self) -> MediumSource {
        MediumSource::Learned
    }

    fn reward_signal(&self) -> RewardSignal {
        RewardSignal::Intrinsic
    }

    fn n_agents(&self) -> usize {
        self.comm.len()
    }

    fn begin_episode(&mut self) {
        self.action.reset_noise();
        self.comm.iter_mut().for_each(|a| a.explorer.noise.reset());
    }

    fn select_comm(&mut self, obs: &[Vec<f64>], explore: bool) -> Result<Option<CommActionSet>, AgentError> {
        let rows = self.comm.iter_mut().zip(obs).map(|(a, o)| a.act(o, explore)).collect::<Result<Vec<_>, _>>()?;
        Ok(Some(if self.comm_dim == 1 && rows.len() > 1 {
            CommActionSet::Broadcast(rows.into_iter().map(|r| r[0]).collect())
        } else {
            CommActionSet::Unicast(rows)
        }))
    }

    fn select_actions(&mut self, obs: &[Vec<f64>], medium: Option<&Medium>, explore: bool) -> Result<Vec<[f64; 4]>, AgentError> {
        self.action.select(obs, medium, explore)
    }

    fn update_agent(
        &mut self,
        i: usize,
        batch: &[&ActionTransition],
        comm_batch: Option<&[&CommTransition]>,
        gamma: f64,
    ) -> Result<AgentLosses, AgentError> {
        let action = self.action.update(i, batch, RewardSignal::Intrinsic, gamma)?;
        let comm = comm_batch.map(|b| self.update_comm(i, b, gamma)).transpose()?;
        Ok(AgentLosses { action, comm })
    }

    fn update_targets(&mut self, tau: f64) -> Result<(), AgentError> {
        self.action.update_targets(tau)?;
        self.comm.iter_mut().try_for_each(|a| a.soft_update(tau))
    }

    fn save(&self) -> Result<serde_json::Value, AgentError> {
        save_state(self)
    }
}
