//! One actor/critic pair with targets and optimizers, plus the two update
//! shapes every algorithm is built from:
//!
//! * decentralized: `Q_i(x_i, a_i)` with `a_i = mu_i(x_i)`;
//! * centralized: `Q_i(o_1, a_1, ..., o_N, a_N)` with `a_i = mu_i(actor input of i)`.

use std::ops::Range;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::noise::Explorer;
use super::{AgentError, AlgorithmContext};
use crate::approximator::{Adam, Gradients, Mlp, OutputActivation};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub explorer: Explorer,
    pub grad_clip: Option<f64>,
}

/// Losses of one actor/critic update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    pub critic_loss: f64,
    /// Mean critic value at the policy's action (the quantity the actor ascends).
    pub actor_objective: f64,
}

impl ActorCritic {
    /// `tag` names the network family (e.g. "action", "comm") and `agent` its owner;
    /// the pair determines the init and noise seeds.
    pub fn new(
        ctx: &AlgorithmContext,
        tag: &str,
        agent: usize,
        actor_in: usize,
        actor_out: usize,
        critic_in: usize,
    ) -> Result<Self, AgentError> {
        let seed = |what: &str| derive_seed(ctx.seed, &format!("{tag}-{what}"), agent as u64);
        let h = ctx.policy_hidden;
        let actor = Mlp::new(&[actor_in, h, h, actor_out], OutputActivation::Sigmoid, seed("actor"))?;
        let ch = ctx.critic_hidden;
        let critic = Mlp::new(&[critic_in, ch, ch, 1], OutputActivation::Identity, seed("critic"))?;
        Ok(ActorCritic {
            actor_opt: Adam::new(&actor, ctx.learning_rate),
            critic_opt: Adam::new(&critic, ctx.learning_rate),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            explorer: Explorer::new(actor_out, ctx.ou_theta, ctx.ou_sigma, seed("noise")),
            grad_clip: ctx.grad_clip,
        })
    }

    /// `clamp(mu(input) + noise, 0, 1)`; noise only when exploring.
    pub fn act(&mut self, input: &[f64], explore: bool) -> Result<Vec<f64>, AgentError> {
        let mut a = self.actor.forward(input)?;
        if explore {
            for (v, n) in a.iter_mut().zip(self.explorer.sample()) {
                *v += n;
            }
        }
        a.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(a)
    }

    fn clip(&self, g: &mut Gradients) {
        if let Some(max) = self.grad_clip {
            g.clip_global_norm(max);
        }
    }

    /// One Adam step on the mean squared error `mean((Q(x) - y)^2)`. Returns the loss.
    pub fn critic_step(&mut self, x: ArrayView2<'_, f64>, y: &Array1<f64>) -> Result<f64, AgentError> {
        let b = x.nrows();
        if b == 0 {
            return Err(AgentError::EmptyBatch);
        }
        let trace = self.critic.forward_trace(x)?;
        let err: Array1<f64> = trace.output().column(0).to_owned() - y;
        let loss = err.mapv(|e| e * e).mean().unwrap_or(0.0);
        if !loss.is_finite() {
            return Err(AgentError::NonFiniteLoss { what: "critic loss", value: loss });
        }
        let upstream = err.mapv(|e| 2.0 * e / b as f64).insert_axis(Axis(1));
        let (grads, _) = self.critic.backward_batch(&trace, upstream.view(), true)?;
        let mut grads = grads.expect("parameter gradients requested");
        self.clip(&mut grads);
        self.critic_opt.step(&mut self.critic, &grads)?;
        Ok(loss)
    }

    /// One Adam step raising `mean Q(base with mu(actor_in) written into slot)`.
    ///
    /// Only the actor changes; the critic is read for `dQ/da`.
    pub fn actor_step(
        &mut self,
        actor_in: ArrayView2<'_, f64>,
        mut critic_base: Array2<f64>,
        slot: Range<usize>,
    ) -> Result<f64, AgentError> {
        let grads = actor_gradient(&self.actor, &self.critic, actor_in, &mut critic_base, slot)?;
        let (mut grads, objective) = grads;
        if !objective.is_finite() {
            return Err(AgentError::NonFiniteLoss { what: "actor objective", value: objective });
        }
        self.clip(&mut grads);
        self.actor_opt.step(&mut self.actor, &grads)?;
        Ok(objective)
    }

    pub fn soft_update(&mut self, tau: f64) -> Result<(), AgentError> {
        self.actor_target.soft_update_from(&self.actor, tau)?;
        self.critic_target.soft_update_from(&self.critic, tau)?;
        Ok(())
    }
}

/// Gradient of `-mean Q` w.r.t. the actor parameters, chained through `dQ/da`.
///
/// Returns the descent gradient and `mean Q` at the policy action.
pub fn actor_gradient(
    actor: &Mlp,
    critic: &Mlp,
    actor_in: ArrayView2<'_, f64>,
    critic_base: &mut Array2<f64>,
    slot: Range<usize>,
) -> Result<(Gradients, f64), AgentError> {
    let b = actor_in.nrows();
    if b == 0 {
        return Err(AgentError::EmptyBatch);
    }
    let actor_trace = actor.forward_trace(actor_in)?;
    critic_base.slice_mut(s![.., slot.clone()]).assign(actor_trace.output());
    let critic_trace = critic.forward_trace(critic_base.view())?;
    let objective = critic_trace.output().mean().unwrap_or(0.0);
    let upstream = Array2::from_elem((b, 1), -1.0 / b as f64);
    let (_, dx) = critic.backward_batch(&critic_trace, upstream.view(), false)?;
    let da = dx.slice(s![.., slot]).to_owned();
    let (grads, _) = actor.backward_batch(&actor_trace, da.view(), true)?;
    Ok((grads.expect("parameter gradients requested"), objective))
}

/// Stack per-sample rows into a `(batch x width)` matrix.
pub fn stack_rows<'a, I>(rows: I, width: usize) -> Result<Array2<f64>, AgentError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut flat = Vec::new();
    let mut count = 0;
    for r in rows {
        if r.len() != width {
            return Err(AgentError::DimMismatch { expected: width, got: r.len() });
        }
        flat.extend_from_slice(r);
        count += 1;
    }
    Ok(Array2::from_shape_vec((count, width), flat).expect("row lengths checked"))
}

pub fn hcat(parts: &[ArrayView2<'_, f64>]) -> Array2<f64> {
    concatenate(Axis(1), parts).expect("batch sizes agree")
}

/// Inputs for a decentralized update of one agent.
pub struct LocalBatch {
    /// Policy input at time t (`o_i`, optionally with the medium block).
    pub input: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    /// Policy input at t+1.
    pub next_input: Array2<f64>,
}

/// Critic `Q(x, a)` and actor `mu(x)` on the same input `x`.
pub fn decentralized_update(net: &mut ActorCritic, batch: &LocalBatch, gamma: f64) -> Result<StepLosses, AgentError> {
    let next_a = net.actor_target.forward_batch(batch.next_input.view())?;
    let next_x = hcat(&[batch.next_input.view(), next_a.view()]);
    let next_q = net.critic_target.forward_batch(next_x.view())?;
    let y = &batch.rewards + &(next_q.column(0).to_owned() * gamma);
    let x = hcat(&[batch.input.view(), batch.actions.view()]);
    let critic_loss = net.critic_step(x.view(), &y)?;
    let d = batch.input.ncols();
    let slot = d..d + batch.actions.ncols();
    let actor_objective = net.actor_step(batch.input.view(), x, slot)?;
    Ok(StepLosses { critic_loss, actor_objective })
}

/// Inputs for a centralized-critic update of agent `i`.
pub struct JointBatch {
    /// Per-agent observations as seen by the critic, at t and at the bootstrap time.
    pub obs: Vec<Array2<f64>>,
    pub next_obs: Vec<Array2<f64>>,
    /// Per-agent actions taken at t.
    pub actions: Vec<Array2<f64>>,
    /// Per-agent policy inputs at t and at the bootstrap time.
    pub actor_input: Vec<Array2<f64>>,
    pub next_actor_input: Vec<Array2<f64>>,
    /// Rewards of the agent being updated.
    pub rewards: Array1<f64>,
}

/// Interleave `(o_1, a_1, ..., o_N, a_N)`.
pub fn joint_input(obs: &[Array2<f64>], actions: &[Array2<f64>]) -> Array2<f64> {
    let parts: Vec<ArrayView2<'_, f64>> = obs.iter().zip(actions).flat_map(|(o, a)| [o.view(), a.view()]).collect();
    hcat(&parts)
}

/// Columns of agent `i`'s action inside the joint critic input.
pub fn joint_slot(obs: &[Array2<f64>], actions: &[Array2<f64>], i: usize) -> Range<usize> {
    let start: usize = obs.iter().zip(actions).take(i).map(|(o, a)| o.ncols() + a.ncols()).sum::<usize>() + obs[i].ncols();
    start..start + actions[i].ncols()
}

/// Centralized critic for agent `i`; bootstrap actions come from every agent's target actor.
pub fn centralized_update(nets: &mut [ActorCritic], i: usize, batch: &JointBatch, gamma: f64) -> Result<StepLosses, AgentError> {
    let next_actions = nets
        .iter()
        .zip(&batch.next_actor_input)
        .map(|(n, x)| n.actor_target.forward_batch(x.view()))
        .collect::<Result<Vec<_>, _>>()?;
    let next_x = joint_input(&batch.next_obs, &next_actions);
    let next_q = nets[i].critic_target.forward_batch(next_x.view())?;
    let y = &batch.rewards + &(next_q.column(0).to_owned() * gamma);
    let x = joint_input(&batch.obs, &batch.actions);
    let net = &mut nets[i];
    let critic_loss = net.critic_step(x.view(), &y)?;
    let slot = joint_slot(&batch.obs, &batch.actions, i);
    let actor_objective = net.actor_step(batch.actor_input[i].view(), x, slot)?;
    Ok(StepLosses { critic_loss, actor_objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AlgorithmContext;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> AlgorithmContext {
        AlgorithmContext { policy_hidden: 5, critic_hidden: 6, grad_clip: None, ..AlgorithmContext::new(1, 3, 1, 9) }
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
    }

    fn flat_params(net: &Mlp) -> Vec<f64> {
        net.flat_params()
    }

    fn set_param(net: &mut Mlp, k: usize, v: f64) {
        let mut at = 0;
        for l in 0..net.num_layers() {
            let wn = net.weights()[l].len();
            if k < at + wn {
                let cols = net.weights()[l].ncols();
                let r = (k - at) / cols;
                let c = (k - at) % cols;
                net.weights_mut()[l][[r, c]] = v;
                return;
            }
            at += wn;
            let bn = net.biases()[l].len();
            if k < at + bn {
                net.biases_mut()[l][k - at] = v;
                return;
            }
            at += bn;
        }
        panic!("index out of range");
    }

    /// mean_k Q(x_k, mu(x_k)) evaluated directly.
    fn objective(actor: &Mlp, critic: &Mlp, x: &Array2<f64>) -> f64 {
        let a = actor.forward_batch(x.view()).unwrap();
        let q = critic.forward_batch(hcat(&[x.view(), a.view()]).view()).unwrap();
        q.mean().unwrap()
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ActorCritic::new(&ctx(), "t", 0, 3, 2, 5).unwrap();
        let x = random(&mut rng, 4, 3);
        let mut base = hcat(&[x.view(), Array2::zeros((4, 2)).view()]);
        let (g, obj) = actor_gradient(&net.actor, &net.critic, x.view(), &mut base, 3..5).unwrap();
        assert!((obj - objective(&net.actor, &net.critic, &x)).abs() < 1e-12);
        let analytic = g.flat();
        let params = flat_params(&net.actor);
        let h = 1e-5;
        for k in 0..params.len() {
            let mut plus = net.actor.clone();
            set_param(&mut plus, k, params[k] + h);
            let mut minus = net.actor.clone();
            set_param(&mut minus, k, params[k] - h);
            // descent gradient of -objective
            let fd = -(objective(&plus, &net.critic, &x) - objective(&minus, &net.critic, &x)) / (2.0 * h);
            let scale = fd.abs().max(analytic[k].abs()).max(1e-6);
            assert!((fd - analytic[k]).abs() / scale < 1e-4 || (fd - analytic[k]).abs() < 1e-9, "param {k}: fd {fd} vs {}", analytic[k]);
        }
    }

    #[test]
    fn critic_action_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = ActorCritic::new(&ctx(), "t", 0, 3, 2, 7).unwrap();
        let x = random(&mut rng, 1, 7);
        let trace = net.critic.forward_trace(x.view()).unwrap();
        let (_, dx) = net.critic.backward_batch(&trace, Array2::ones((1, 1)).view(), false).unwrap();
        let h = 1e-5;
        for c in 5..7 {
            let mut p = x.clone();
            p[[0, c]] += h;
            let mut m = x.clone();
            m[[0, c]] -= h;
            let fd = (net.critic.forward_batch(p.view()).unwrap()[[0, 0]] - net.critic.forward_batch(m.view()).unwrap()[[0, 0]]) / (2.0 * h);
            assert!((fd - dx[[0, c]]).abs() <= 1e-4 * fd.abs().max(1e-6) + 1e-9);
        }
    }

    #[test]
    fn zero_gamma_target_is_reward() {
        // with gamma = 0 the critic regresses straight onto r
        let mut net = ActorCritic::new(&ctx(), "t", 0, 3, 2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = LocalBatch {
            input: random(&mut rng, 8, 3),
            actions: random(&mut rng, 8, 2).mapv(f64::abs),
            rewards: Array1::from_elem(8, 0.7),
            next_input: random(&mut rng, 8, 3),
        };
        let x = hcat(&[batch.input.view(), batch.actions.view()]);
        let before = net.critic.forward_batch(x.view()).unwrap();
        let want = before.column(0).mapv(|q| (q - 0.7).powi(2)).mean().unwrap();
        let losses = decentralized_update(&mut net, &batch, 0.0).unwrap();
        assert!((losses.critic_loss - want).abs() < 1e-12);
    }

    #[test]
    fn constant_target_critic_shifts_target() {
        // zero the target critic's last layer and set its bias to c: y = r + gamma * c
        let mut net = ActorCritic::new(&ctx(), "t", 0, 3, 2, 5).unwrap();
        let last = net.critic_target.num_layers() - 1;
        net.critic_target.weights_mut()[last].fill(0.0);
        net.critic_target.biases_mut()[last][0] = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = LocalBatch {
            input: random(&mut rng, 6, 3),
            actions: random(&mut rng, 6, 2).mapv(f64::abs),
            rewards: Array1::from_elem(6, -1.0),
            next_input: random(&mut rng, 6, 3),
        };
        let x = hcat(&[batch.input.view(), batch.actions.view()]);
        let q = net.critic.forward_batch(x.view()).unwrap();
        let y = -1.0 + 0.9 * 2.0;
        let want = q.column(0).mapv(|v| (v - y).powi(2)).mean().unwrap();
        let got = decentralized_update(&mut net, &batch, 0.9).unwrap().critic_loss;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn single_agent_centralized_equals_decentralized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = ActorCritic::new(&ctx(), "t", 0, 3, 2, 5).unwrap();
        let obs = random(&mut rng, 10, 3);
        let next = random(&mut rng, 10, 3);
        let acts = random(&mut rng, 10, 2).mapv(f64::abs);
        let r = Array1::from_shape_fn(10, |k| k as f64 * 0.1);
        let mut a = net.clone();
        let la = decentralized_update(&mut a, &LocalBatch { input: obs.clone(), actions: acts.clone(), rewards: r.clone(), next_input: next.clone() }, 0.95).unwrap();
        let mut b = vec![net];
        let jb = JointBatch {
            obs: vec![obs.clone()],
            next_obs: vec![next.clone()],
            actions: vec![acts],
            actor_input: vec![obs],
            next_actor_input: vec![next],
            rewards: r,
        };
        let lb = centralized_update(&mut b, 0, &jb, 0.95).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b[0]);
    }

    #[test]
    fn updates_touch_only_their_own_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = ActorCritic::new(&ctx(), "t", 0, 3, 2, 5).unwrap();
        let x = random(&mut rng, 6, 3);
        let base = hcat(&[x.view(), Array2::zeros((6, 2)).view()]);
        let critic = net.critic.clone();
        net.actor_step(x.view(), base, 3..5).unwrap();
        assert_eq!(net.critic, critic);
        let actor = net.actor.clone();
        let xa = random(&mut rng, 6, 5);
        net.critic_step(xa.view(), &Array1::zeros(6)).unwrap();
        assert_eq!(net.actor, actor);
    }

    #[test]
    fn zero_action_gradient_gives_zero_actor_gradient() {
        // a critic that ignores the action slot yields no actor gradient
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = ActorCritic::new(&ctx(), "t", 0, 3, 2, 5).unwrap();
        net.critic.weights_mut()[0].slice_mut(s![.., 3..5]).fill(0.0);
        let x = random(&mut rng, 6, 3);
        let mut base = hcat(&[x.view(), Array2::zeros((6, 2)).view()]);
        let (g, _) = actor_gradient(&net.actor, &net.critic, x.view(), &mut base, 3..5).unwrap();
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn critic_descent_on_fixed_batch() {
        // gamma = 0, small learning rate: the batch TD loss strictly decreases
        let mut c = ctx();
        c.learning_rate = 1e-4;
        let mut net = ActorCritic::new(&c, "t", 0, 3, 2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, 32, 5);
        let y = Array1::from_shape_fn(32, |k| (k as f64 * 0.37).sin());
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let loss = net.critic_step(x.view(), &y).unwrap();
            assert!(loss < last);
            last = loss;
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let mut net = ActorCritic::new(&ctx(), "t", 0, 3, 2, 5).unwrap();
        assert!(matches!(net.critic_step(Array2::zeros((0, 5)).view(), &Array1::zeros(0)), Err(AgentError::EmptyBatch)));
    }
}
