//! Two-timescale training loop, evaluation and metrics.
//!
//! Communication actions are chosen once every `C` steps and the medium stays
//! fixed for the window. Each step's `(o, m, a, q, r, o')` goes into the
//! action buffer; at the end of every full window `(o_init, c, K, o')` goes into
//! the communication buffer. Every `update_every` environment steps each agent
//! is updated from its own minibatches, then every target network is
//! soft-updated.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::registry;
use crate::agents::{
    AgentError, AgentLosses, Algorithm, AlgorithmContext, ActionTransition, CommTransition, MediumSource, ReplayBuffer,
    RewardSignal,
};
use crate::env::{scenario_preset, Assignment, EnvError, Environment, Group, Vec2, WorldState};
use crate::medium::{assemble, medium_accuracy, oracle_medium, CommActionSet, Medium, MediumError};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Medium(#[from] MediumError),
    #[error("episode {episode}, step {step}: {source}")]
    Agent { episode: usize, step: usize, source: AgentError },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediumUpdateMode {
    /// The medium is frozen for the whole window.
    FixMedium,
    /// Communication actions are frozen; the medium is re-assembled every step from them.
    FixCommActions,
}

impl std::str::FromStr for MediumUpdateMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fix_medium" | "fix-medium" => Ok(MediumUpdateMode::FixMedium),
            "fix_comm_actions" | "fix-comm-actions" => Ok(MediumUpdateMode::FixCommActions),
            _ => Err(format!("unknown medium mode `{s}` (valid: fix_medium, fix_comm_actions)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scenario: String,
    pub algorithm: String,
    pub num_episodes: usize,
    pub steps_per_episode: usize,
    pub c_period: usize,
    /// Discount; `None` picks the per-scenario default.
    pub gamma: Option<f64>,
    pub update_every: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub seed: u64,
    pub medium_update_mode: MediumUpdateMode,
    pub eval_episodes: usize,
    pub log_every: usize,
    pub grad_clip: Option<f64>,
    pub policy_hidden: usize,
    pub critic_hidden: usize,
    pub ddpg_oc_reward: RewardSignal,
    /// Replace learned communication decisions with the oracle's (learned-medium algorithms only).
    pub oracle_comm: bool,
}

impl TrainConfig {
    pub fn new(scenario: &str, algorithm: &str) -> Self {
        TrainConfig {
            scenario: scenario.to_string(),
            algorithm: algorithm.to_string(),
            num_episodes: 100_000,
            steps_per_episode: 25,
            c_period: 5,
            gamma: None,
            update_every: 100,
            batch_size: 1024,
            learning_rate: 0.01,
            tau: 0.01,
            buffer_capacity: 1_000_000,
            seed: 0,
            medium_update_mode: MediumUpdateMode::FixMedium,
            eval_episodes: 1000,
            log_every: 100,
            grad_clip: Some(0.5),
            policy_hidden: 64,
            critic_hidden: 128,
            ddpg_oc_reward: RewardSignal::Extrinsic,
            oracle_comm: false,
        }
    }

    /// 0.8 for the learned-medium algorithm on fixed-broadcast, alt-unicast
    /// and dyn-unicast; 0.85 everywhere else.
    pub fn default_gamma(scenario: &str, algorithm: &str) -> f64 {
        match (algorithm, scenario) {
            ("maddpg-m", "fixed-broadcast" | "alt-unicast" | "dyn-unicast") => 0.8,
            _ => 0.85,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or_else(|| Self::default_gamma(&self.scenario, &self.algorithm))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        scenario_preset(&self.scenario)?;
        let entry = registry::lookup(&self.algorithm).map_err(|e| TrainError::Config(e.to_string()))?;
        if self.c_period == 0 {
            return bad("c_period must be at least 1".into());
        }
        if self.steps_per_episode == 0 || self.update_every == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("steps, update cadence, batch size and buffer capacity must be positive".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} outside [0, 1]", self.tau));
        }
        if !(0.0..=1.0).contains(&self.gamma()) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning rate must be positive".into());
        }
        if self.oracle_comm && entry.medium_source != MediumSource::Learned {
            return bad(format!("oracle_comm only applies to learned-medium algorithms, not `{}`", self.algorithm));
        }
        Ok(())
    }

    pub fn scenario_config(&self) -> Result<crate::env::ScenarioConfig> {
        let mut cfg = scenario_preset(&self.scenario)?;
        cfg.episode_length = self.steps_per_episode;
        Ok(cfg)
    }

    pub fn uses_learned_medium(&self) -> bool {
        registry::lookup(&self.algorithm).map(|e| e.medium_source == MediumSource::Learned).unwrap_or(false)
    }

    pub fn has_medium(&self) -> bool {
        registry::lookup(&self.algorithm).map(|e| e.medium_source != MediumSource::None).unwrap_or(false)
    }

    fn context(&self, env: &Environment) -> AlgorithmContext {
        let n = env.n_agents();
        let comm_dim = match env.config().group {
            Group::Broadcasting => 1,
            Group::Unicasting => n,
        };
        AlgorithmContext {
            policy_hidden: self.policy_hidden,
            critic_hidden: self.critic_hidden,
            learning_rate: self.learning_rate,
            grad_clip: self.grad_clip,
            oracle_reward: self.ddpg_oc_reward,
            ..AlgorithmContext::new(n, env.layout().len(), comm_dim, self.seed)
        }
    }
}

/// One environment step as seen from outside the loop.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub positions: Vec<Vec2>,
    pub actions: Vec<[f64; 4]>,
    pub rewards: Vec<f64>,
    pub assignment: Assignment,
    pub senders: Option<Vec<usize>>,
}

impl StepRecord {
    pub fn csv_header(n_agents: usize) -> String {
        let mut cols = vec!["episode".to_string(), "step".to_string()];
        for i in 0..n_agents {
            cols.push(format!("x{i}"));
            cols.push(format!("y{i}"));
        }
        for i in 0..n_agents {
            for d in ["px", "nx", "py", "ny"] {
                cols.push(format!("a{i}_{d}"));
            }
        }
        cols.extend((0..n_agents).map(|i| format!("r{i}")));
        cols.push("assignment".into());
        cols.extend((0..n_agents).map(|i| format!("sender{i}")));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.episode.to_string(), self.step.to_string()];
        for p in &self.positions {
            cols.push(p.x.to_string());
            cols.push(p.y.to_string());
        }
        for a in &self.actions {
            cols.extend(a.iter().map(|v| v.to_string()));
        }
        cols.extend(self.rewards.iter().map(|v| v.to_string()));
        cols.push(self.assignment.to_string());
        match &self.senders {
            Some(s) => cols.extend(s.iter().map(|v| v.to_string())),
            None => cols.extend(std::iter::repeat_n(String::new(), self.positions.len())),
        }
        cols.join(",")
    }
}

/// Hooks into the loop, for audits and trajectory dumps.
pub trait TrainObserver {
    fn on_action_transition(&mut self, _episode: usize, _step: usize, _t: &ActionTransition) {}
    fn on_comm_transition(&mut self, _episode: usize, _step: usize, _t: &CommTransition) {}
    fn on_step(&mut self, _record: &StepRecord) {}
}

impl TrainObserver for () {}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeStats {
    /// Sum over steps of the agent-mean extrinsic reward.
    pub reward: f64,
    pub intrinsic: Option<f64>,
    pub acc_all: Option<f64>,
    pub acc_any: Option<f64>,
    pub losses: Vec<AgentLosses>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    /// Episodes completed when the row was logged.
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_intrinsic: Option<f64>,
    pub acc_all: Option<f64>,
    pub acc_any: Option<f64>,
    pub critic_loss_mean: Option<f64>,
    pub actor_obj_mean: Option<f64>,
    pub wallclock_s: f64,
}

/// Everything needed to evaluate a run or keep training it, minus replay contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub fixed_assignment: Assignment,
    pub episodes_completed: usize,
    pub total_steps: u64,
    pub algorithm: String,
    pub algorithm_state: serde_json::Value,
    pub env_rng: ChaCha8Rng,
    pub action_sample_rng: ChaCha8Rng,
    pub comm_sample_rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| TrainError::Checkpoint(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| TrainError::Checkpoint(e.to_string()))
    }

    pub fn restore_algorithm(&self) -> Result<Box<dyn Algorithm>> {
        registry::restore(&self.algorithm, self.algorithm_state.clone()).map_err(|e| TrainError::Checkpoint(e.to_string()))
    }

    pub fn environment(&self) -> Result<Environment> {
        Ok(Environment::with_assignment(self.config.scenario_config()?, self.fixed_assignment.clone())?)
    }
}

struct Window {
    comm: CommActionSet,
    medium: Medium,
    obs_init: Vec<Vec<f64>>,
    accumulated: Vec<f64>,
}

pub struct Trainer {
    config: TrainConfig,
    env: Environment,
    algo: Box<dyn Algorithm>,
    action_buffer: ReplayBuffer<ActionTransition>,
    comm_buffer: ReplayBuffer<CommTransition>,
    env_rng: ChaCha8Rng,
    action_sample_rng: ChaCha8Rng,
    comm_sample_rng: ChaCha8Rng,
    total_steps: u64,
    episodes_completed: usize,
}

fn rng_for(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, 0))
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let env = Environment::new(config.scenario_config()?, &mut rng_for(config.seed, "scenario"))?;
        let algo = registry::build(&config.algorithm, &config.context(&env))
            .map_err(|source| TrainError::Agent { episode: 0, step: 0, source })?;
        Ok(Self::assemble(config, env, algo))
    }

    fn assemble(config: TrainConfig, env: Environment, algo: Box<dyn Algorithm>) -> Self {
        Trainer {
            action_buffer: ReplayBuffer::new(config.buffer_capacity),
            comm_buffer: ReplayBuffer::new(config.buffer_capacity),
            env_rng: rng_for(config.seed, "env"),
            action_sample_rng: rng_for(config.seed, "replay-action"),
            comm_sample_rng: rng_for(config.seed, "replay-comm"),
            config,
            env,
            algo,
            total_steps: 0,
            episodes_completed: 0,
        }
    }

    /// Resume from a checkpoint with empty replay buffers.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Self::assemble(ckpt.config.clone(), ckpt.environment()?, ckpt.restore_algorithm()?);
        t.env_rng = ckpt.env_rng.clone();
        t.action_sample_rng = ckpt.action_sample_rng.clone();
        t.comm_sample_rng = ckpt.comm_sample_rng.clone();
        t.total_steps = ckpt.total_steps;
        t.episodes_completed = ckpt.episodes_completed;
        Ok(t)
    }

    /// Swap in a different learner (e.g. one with hand-set parameters).
    pub fn with_algorithm(mut self, algo: Box<dyn Algorithm>) -> Self {
        self.algo = algo;
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn algorithm(&self) -> &dyn Algorithm {
        self.algo.as_ref()
    }

    pub fn algorithm_mut(&mut self) -> &mut dyn Algorithm {
        self.algo.as_mut()
    }

    pub fn action_buffer(&self) -> &ReplayBuffer<ActionTransition> {
        &self.action_buffer
    }

    pub fn comm_buffer(&self) -> &ReplayBuffer<CommTransition> {
        &self.comm_buffer
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn episodes_completed(&self) -> usize {
        self.episodes_completed
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            format_version: 1,
            config: self.config.clone(),
            fixed_assignment: self.env.fixed_assignment().clone(),
            episodes_completed: self.episodes_completed,
            total_steps: self.total_steps,
            algorithm: self.config.algorithm.clone(),
            algorithm_state: self.algo.save().map_err(|e| TrainError::Checkpoint(e.to_string()))?,
            env_rng: self.env_rng.clone(),
            action_sample_rng: self.action_sample_rng.clone(),
            comm_sample_rng: self.comm_sample_rng.clone(),
        })
    }

    fn medium_for(&self, state: &WorldState, obs: &[Vec<f64>], comm: &CommActionSet) -> Result<Medium> {
        Ok(if self.config.oracle_comm {
            oracle_medium(state, &self.env, obs)?
        } else {
            assemble(obs, &self.env.layout(), comm)?
        })
    }

    /// Run one training episode.
    pub fn run_episode(&mut self, observer: &mut dyn TrainObserver) -> Result<EpisodeStats> {
        let episode = self.episodes_completed;
        let n = self.env.n_agents();
        let c_period = self.config.c_period;
        let source = self.algo.medium_source();
        let agent_err = |step: usize| move |source: AgentError| TrainError::Agent { episode, step, source };

        let mut state = self.env.reset(&mut self.env_rng);
        let mut obs = self.env.observe(&state);
        self.algo.begin_episode();
        let mut count = 0;
        let mut window: Option<Window> = None;
        let mut stats = EpisodeStats::default();
        let (mut intrinsic, mut acc_all, mut acc_any) = (0.0, 0.0, 0.0);

        for t in 0..self.config.steps_per_episode {
            let medium = match source {
                MediumSource::Learned => {
                    if count == 0 {
                        let comm = self.algo.select_comm(&obs, true).map_err(agent_err(t))?.ok_or_else(|| {
                            TrainError::Config(format!("`{}` produced no communication actions", self.algo.name()))
                        })?;
                        let medium = self.medium_for(&state, &obs, &comm)?;
                        window = Some(Window { comm, medium, obs_init: obs.clone(), accumulated: vec![0.0; n] });
                    } else if self.config.medium_update_mode == MediumUpdateMode::FixCommActions {
                        let w = window.as_ref().expect("window opened at count 0");
                        let medium = self.medium_for(&state, &obs, &w.comm)?;
                        window.as_mut().expect("window open").medium = medium;
                    }
                    window.as_ref().map(|w| w.medium.clone())
                }
                MediumSource::Oracle => Some(oracle_medium(&state, &self.env, &obs)?),
                MediumSource::None => None,
            };

            let actions = self.algo.select_actions(&obs, medium.as_ref(), true).map_err(agent_err(t))?;
            let (next_state, rewards) = self.env.step(&state, &actions)?;
            let next_obs = self.env.observe(&next_state);
            let q = match &medium {
                Some(m) => self.env.intrinsic_rewards(&next_state, m)?,
                None => rewards.clone(),
            };
            stats.reward += mean(&rewards);
            if let Some(m) = &medium {
                intrinsic += mean(&q);
                let acc = medium_accuracy(m, &oracle_medium(&state, &self.env, &obs)?)?;
                acc_all += f64::from(u8::from(acc.all_correct));
                acc_any += acc.fraction_correct;
            }
            if let Some(w) = window.as_mut() {
                w.accumulated.iter_mut().zip(&rewards).for_each(|(k, r)| *k += r);
            }

            observer.on_step(&StepRecord {
                episode,
                step: t,
                positions: next_state.positions.clone(),
                actions: actions.clone(),
                rewards: rewards.clone(),
                assignment: state.assignment.clone(),
                senders: medium.as_ref().map(Medium::senders),
            });
            let transition = ActionTransition {
                obs: obs.clone(),
                medium: medium.as_ref().map(Medium::landmark_blocks),
                senders: medium.as_ref().map(Medium::senders),
                actions,
                intrinsic: q,
                extrinsic: rewards,
                next_obs: next_obs.clone(),
            };
            observer.on_action_transition(episode, t, &transition);
            self.action_buffer.push(transition);

            if source == MediumSource::Learned {
                if count == c_period - 1 {
                    let w = window.take().expect("window open");
                    let ct = CommTransition { obs: w.obs_init, comm: w.comm, accumulated: w.accumulated, obs_after: next_obs.clone() };
                    observer.on_comm_transition(episode, t, &ct);
                    self.comm_buffer.push(ct);
                    count = 0;
                } else {
                    count += 1;
                }
            }

            state = next_state;
            obs = next_obs;
            self.total_steps += 1;
            if self.total_steps.is_multiple_of(self.config.update_every as u64) {
                stats.losses.extend(self.learn().map_err(agent_err(t))?);
            }
        }

        let steps = self.config.steps_per_episode as f64;
        if source != MediumSource::None {
            stats.intrinsic = Some(intrinsic);
            stats.acc_all = Some(acc_all / steps);
            stats.acc_any = Some(acc_any / steps);
        }
        self.episodes_completed += 1;
        Ok(stats)
    }

    /// Per-agent updates followed by target updates. Skipped while the action buffer is not ready.
    fn learn(&mut self) -> std::result::Result<Vec<AgentLosses>, AgentError> {
        let gamma = self.config.gamma();
        let batch_size = self.config.batch_size;
        let learned = self.algo.medium_source() == MediumSource::Learned;
        let mut out = Vec::new();
        for i in 0..self.algo.n_agents() {
            let Some(batch) = self.action_buffer.sample(&mut self.action_sample_rng, batch_size) else {
                return Ok(out);
            };
            let comm_batch =
                if learned { self.comm_buffer.sample(&mut self.comm_sample_rng, batch_size) } else { None };
            out.push(self.algo.update_agent(i, &batch, comm_batch.as_deref(), gamma)?);
        }
        self.algo.update_targets(self.config.tau)?;
        Ok(out)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Default)]
struct Interval {
    episodes: usize,
    reward: f64,
    intrinsic: f64,
    acc_all: f64,
    acc_any: f64,
    has_medium: bool,
    critic: (f64, usize),
    actor: (f64, usize),
}

impl Interval {
    fn add(&mut self, s: &EpisodeStats) {
        self.episodes += 1;
        self.reward += s.reward;
        if let (Some(q), Some(a), Some(b)) = (s.intrinsic, s.acc_all, s.acc_any) {
            self.has_medium = true;
            self.intrinsic += q;
            self.acc_all += a;
            self.acc_any += b;
        }
        for l in &s.losses {
            for step in std::iter::once(&l.action).chain(l.comm.as_ref()) {
                self.critic.0 += step.critic_loss;
                self.critic.1 += 1;
                self.actor.0 += step.actor_objective;
                self.actor.1 += 1;
            }
        }
    }

    fn record(&self, episode: usize, wallclock_s: f64) -> MetricsRecord {
        let e = self.episodes as f64;
        let avg = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
        MetricsRecord {
            episode,
            mean_reward: self.reward / e,
            mean_intrinsic: self.has_medium.then(|| self.intrinsic / e),
            acc_all: self.has_medium.then(|| self.acc_all / e),
            acc_any: self.has_medium.then(|| self.acc_any / e),
            critic_loss_mean: avg(self.critic),
            actor_obj_mean: avg(self.actor),
            wallclock_s,
        }
    }
}

/// Train for `config.num_episodes`, emitting one averaged [`MetricsRecord`]
/// every `config.log_every` episodes (and for a trailing partial interval).
pub fn train<F>(config: TrainConfig, observer: &mut dyn TrainObserver, mut on_metrics: F) -> Result<Trainer>
where
    F: FnMut(&MetricsRecord, &Trainer) -> Result<()>,
{
    let mut trainer = Trainer::new(config)?;
    let start = Instant::now();
    let mut interval = Interval::default();
    let total = trainer.config.num_episodes;
    for _ in 0..total {
        let stats = trainer.run_episode(observer)?;
        interval.add(&stats);
        let done = trainer.episodes_completed;
        if done % trainer.config.log_every == 0 || done == total {
            let record = interval.record(done, start.elapsed().as_secs_f64());
            on_metrics(&record, &trainer)?;
            interval = Interval::default();
        }
    }
    Ok(trainer)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scenario: String,
    pub algorithm: String,
    /// Training seed of the evaluated run.
    pub seed: u64,
    pub eval_seed: u64,
    pub episodes: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_intrinsic: Option<f64>,
    pub acc_all: Option<f64>,
    pub acc_any: Option<f64>,
}

/// Greedy execution with `C = 1` and no learning.
///
/// Communication uses the online networks. Accuracy is scored per step
/// against the current oracle medium.
pub fn evaluate(ckpt: &Checkpoint, episodes: usize, seed: u64, observer: &mut dyn TrainObserver) -> Result<EvalSummary> {
    let env = ckpt.environment()?;
    let mut algo = ckpt.restore_algorithm()?;
    let mut rng = rng_for(seed, "eval");
    let source = algo.medium_source();
    let agent_err = |episode: usize, step: usize| move |source: AgentError| TrainError::Agent { episode, step, source };
    let mut rewards = Vec::with_capacity(episodes);
    let (mut intrinsic, mut acc_all, mut acc_any) = (0.0, 0.0, 0.0);
    let steps = ckpt.config.steps_per_episode;
    for ep in 0..episodes {
        let mut state = env.reset(&mut rng);
        let mut obs = env.observe(&state);
        algo.begin_episode();
        let mut total = 0.0;
        for t in 0..steps {
            let medium = match source {
                MediumSource::Learned => {
                    let comm = algo.select_comm(&obs, false).map_err(agent_err(ep, t))?;
                    Some(if ckpt.config.oracle_comm {
                        oracle_medium(&state, &env, &obs)?
                    } else {
                        let comm = comm.ok_or_else(|| TrainError::Config("missing communication actions".into()))?;
                        assemble(&obs, &env.layout(), &comm)?
                    })
                }
                MediumSource::Oracle => Some(oracle_medium(&state, &env, &obs)?),
                MediumSource::None => None,
            };
            let actions = algo.select_actions(&obs, medium.as_ref(), false).map_err(agent_err(ep, t))?;
            let (next, r) = env.step(&state, &actions)?;
            total += mean(&r);
            if let Some(m) = &medium {
                intrinsic += mean(&env.intrinsic_rewards(&next, m)?);
                let acc = medium_accuracy(m, &oracle_medium(&state, &env, &obs)?)?;
                acc_all += f64::from(u8::from(acc.all_correct));
                acc_any += acc.fraction_correct;
            }
            observer.on_step(&StepRecord {
                episode: ep,
                step: t,
                positions: next.positions.clone(),
                actions,
                rewards: r,
                assignment: state.assignment.clone(),
                senders: medium.as_ref().map(Medium::senders),
            });
            obs = env.observe(&next);
            state = next;
        }
        rewards.push(total);
    }
    let e = episodes.max(1) as f64;
    let mean_reward = rewards.iter().sum::<f64>() / e;
    let std_reward = (rewards.iter().map(|r| (r - mean_reward).powi(2)).sum::<f64>() / e).sqrt();
    let has_medium = source != MediumSource::None;
    let total_steps = e * steps as f64;
    Ok(EvalSummary {
        scenario: ckpt.config.scenario.clone(),
        algorithm: ckpt.algorithm.clone(),
        seed: ckpt.config.seed,
        eval_seed: seed,
        episodes,
        mean_reward,
        std_reward,
        mean_intrinsic: has_medium.then(|| intrinsic / e),
        acc_all: has_medium.then(|| acc_all / total_steps),
        acc_any: has_medium.then(|| acc_any / total_steps),
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("nothing to normalize")]
    Empty,
    #[error("normalization needs at least two algorithms, got {0}")]
    TooFew(usize),
    #[error("non-finite reward {0}")]
    NonFinite(f64),
}

/// Min-max normalization across algorithms within one scenario; all-equal input maps to 1.
pub fn normalize_rewards(values: &[f64]) -> std::result::Result<Vec<f64>, NormalizeError> {
    match values.len() {
        0 => return Err(NormalizeError::Empty),
        1 => return Err(NormalizeError::TooFew(1)),
        _ => {}
    }
    if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
        return Err(NormalizeError::NonFinite(v));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![1.0; values.len()]);
    }
    Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}
