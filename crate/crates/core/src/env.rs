//! Noisy cooperative-navigation particle world.
//!
//! `N` agents and `N` landmarks live in the square `[-w, w]^2`. Only some
//! agents see the true landmark positions; everyone else sees per-episode
//! decoy positions. Who sees what is the scenario's *assignment*:
//!
//! * broadcasting: one gifted agent sees every landmark correctly;
//! * unicasting: landmark `i` is dedicated to agent `i` and is seen correctly
//!   only by agent `sigma[i]`.
//!
//! The assignment is fixed for a whole run, resampled each episode
//! (alternating), or recomputed every step from distances to the centre (dynamic).

use std::fmt;
use std::ops::{Add, Sub};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::medium::Medium;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("unknown scenario `{name}` (valid: {valid})")]
    UnknownScenario { name: String, valid: String },
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("episode already finished after {0} steps")]
    EpisodeFinished(usize),
    #[error("medium has {got} slots, expected {expected}")]
    MediumSize { expected: usize, got: usize },
    #[error("assignment does not fit the scenario group")]
    AssignmentMismatch,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Broadcasting,
    Unicasting,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Fixed,
    Alternating,
    Dynamic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FakeLandmarkScheme {
    /// One uniform decoy per (observer, landmark), held for the episode.
    EpisodeUniform,
    /// No corruption: every agent sees the truth.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_agents: usize,
    pub group: Group,
    pub variant: Variant,
    pub arena_half_width: f64,
    pub agent_radius: f64,
    pub landmark_radius: f64,
    pub max_speed: f64,
    pub episode_length: usize,
    pub collision_penalty: f64,
    pub fake_landmark_scheme: FakeLandmarkScheme,
}

impl ScenarioConfig {
    pub fn new(group: Group, variant: Variant) -> Self {
        ScenarioConfig {
            n_agents: 3,
            group,
            variant,
            arena_half_width: 1.0,
            agent_radius: 0.1,
            landmark_radius: 0.05,
            max_speed: 0.1,
            episode_length: 25,
            collision_penalty: 1.0,
            fake_landmark_scheme: FakeLandmarkScheme::EpisodeUniform,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.n_agents < 2 {
            return bad("n_agents must be at least 2");
        }
        if self.episode_length < 1 {
            return bad("episode_length must be at least 1");
        }
        if !(self.agent_radius > 0.0 && self.landmark_radius > 0.0) {
            return bad("radii must be positive");
        }
        if !(self.arena_half_width > 0.0 && self.max_speed >= 0.0 && self.collision_penalty >= 0.0) {
            return bad("arena, speed and penalty must be non-negative (arena positive)");
        }
        Ok(())
    }

    pub fn has_flag(&self) -> bool {
        self.variant == Variant::Alternating
    }

    pub fn layout(&self) -> ObsLayout {
        ObsLayout { n_agents: self.n_agents, flag: self.has_flag() }
    }
}

/// Named scenario presets.
pub const SCENARIOS: &[&str] = &[
    "fixed-broadcast",
    "alt-broadcast",
    "dyn-broadcast",
    "fixed-unicast",
    "alt-unicast",
    "dyn-unicast",
    "original-spread",
];

pub fn scenario_preset(name: &str) -> Result<ScenarioConfig, EnvError> {
    use Group::*;
    use Variant::*;
    let cfg = match name {
        "fixed-broadcast" => ScenarioConfig::new(Broadcasting, Fixed),
        "alt-broadcast" => ScenarioConfig::new(Broadcasting, Alternating),
        "dyn-broadcast" => ScenarioConfig::new(Broadcasting, Dynamic),
        "fixed-unicast" => ScenarioConfig::new(Unicasting, Fixed),
        "alt-unicast" => ScenarioConfig::new(Unicasting, Alternating),
        "dyn-unicast" => ScenarioConfig::new(Unicasting, Dynamic),
        "original-spread" => ScenarioConfig {
            fake_landmark_scheme: FakeLandmarkScheme::None,
            ..ScenarioConfig::new(Broadcasting, Fixed)
        },
        _ => {
            return Err(EnvError::UnknownScenario { name: name.to_string(), valid: SCENARIOS.join(", ") })
        }
    };
    Ok(cfg)
}

/// Slot layout of a private observation:
/// `[pos(2), vel(2), other agents rel (2(N-1)), landmarks rel (2N), flag?]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub n_agents: usize,
    pub flag: bool,
}

impl ObsLayout {
    pub fn len(&self) -> usize {
        4 + 2 * (self.n_agents - 1) + 2 * self.n_agents + usize::from(self.flag)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn landmark_offset(&self) -> usize {
        4 + 2 * (self.n_agents - 1)
    }

    pub fn position(&self, obs: &[f64]) -> Vec2 {
        Vec2::new(obs[0], obs[1])
    }

    pub fn landmark_rel(&self, obs: &[f64], j: usize) -> Vec2 {
        let at = self.landmark_offset() + 2 * j;
        Vec2::new(obs[at], obs[at + 1])
    }
}

/// Who observes the true landmarks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Broadcasting: index of the gifted agent.
    Gifted(usize),
    /// Unicasting: `observer[i]` is the agent that correctly sees landmark `i`.
    Permutation(Vec<usize>),
}

impl Assignment {
    /// Does `agent` see landmark `landmark` correctly?
    pub fn sees(&self, agent: usize, landmark: usize) -> bool {
        match self {
            Assignment::Gifted(g) => *g == agent,
            Assignment::Permutation(sigma) => sigma[landmark] == agent,
        }
    }

    /// Sender that the optimal medium delivers to `recipient`.
    pub fn oracle_sender(&self, recipient: usize) -> usize {
        match self {
            Assignment::Gifted(g) => *g,
            Assignment::Permutation(sigma) => sigma[recipient],
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assignment::Gifted(g) => write!(f, "{g}"),
            Assignment::Permutation(s) => {
                let parts: Vec<String> = s.iter().map(|v| v.to_string()).collect();
                write!(f, "{}", parts.join(" "))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub true_landmarks: Vec<Vec2>,
    /// `fake_landmarks[i][j]`: where agent `i` believes landmark `j` is when it does not see it.
    pub fake_landmarks: Vec<Vec<Vec2>>,
    pub assignment: Assignment,
    pub step_index: usize,
}

/// Dynamic reassignment from distances to the centre (origin).
///
/// Broadcasting: the closest agent is gifted. Unicasting: with agents ranked
/// by ascending distance, rank `r` sees the landmark of rank `(r+1) mod N`.
/// Ties go to the lower index. Non-dynamic variants keep `state.assignment`.
pub fn gifted_assignment(state: &WorldState, config: &ScenarioConfig) -> Assignment {
    if config.variant != Variant::Dynamic {
        return state.assignment.clone();
    }
    let n = state.positions.len();
    let mut ranking: Vec<usize> = (0..n).collect();
    // stable sort keeps lower indices first on ties
    ranking.sort_by(|&a, &b| state.positions[a].norm().total_cmp(&state.positions[b].norm()));
    match config.group {
        Group::Broadcasting => Assignment::Gifted(ranking[0]),
        Group::Unicasting => {
            let mut sigma = vec![0; n];
            for r in 0..n {
                sigma[ranking[(r + 1) % n]] = ranking[r];
            }
            Assignment::Permutation(sigma)
        }
    }
}

fn collides(config: &ScenarioConfig, a: Vec2, b: Vec2) -> bool {
    a.dist(b) < 2.0 * config.agent_radius
}

/// Agent pairs whose discs overlap.
fn colliding_pairs(config: &ScenarioConfig, positions: &[Vec2]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if collides(config, positions[i], positions[j]) {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Distance-based team/individual rewards against an arbitrary set of landmark
/// positions. `targets[i]` is the landmark set relevant to agent `i`.
fn navigation_rewards(config: &ScenarioConfig, positions: &[Vec2], targets: &[&[Vec2]]) -> Vec<f64> {
    let n = positions.len();
    let pairs = colliding_pairs(config, positions);
    match config.group {
        Group::Broadcasting => (0..n)
            .map(|i| {
                let cover: f64 = targets[i]
                    .iter()
                    .map(|&l| positions.iter().map(|&p| p.dist(l)).fold(f64::INFINITY, f64::min))
                    .sum();
                -cover - config.collision_penalty * pairs.len() as f64
            })
            .collect(),
        Group::Unicasting => (0..n)
            .map(|i| {
                let hits = pairs.iter().filter(|&&(a, b)| a == i || b == i).count();
                -positions[i].dist(targets[i][i]) - config.collision_penalty * hits as f64
            })
            .collect(),
    }
}

/// A scenario instance: config plus the run-level assignment used by fixed variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    config: ScenarioConfig,
    fixed_assignment: Assignment,
}

const PLACEMENT_RETRIES: usize = 100;

impl Environment {
    /// Chooses the run-level assignment: a uniformly drawn gifted agent for
    /// broadcasting, the ring `sigma(i) = (i+1) mod N` for unicasting.
    pub fn new<R: Rng + ?Sized>(config: ScenarioConfig, rng: &mut R) -> Result<Self, EnvError> {
        config.validate()?;
        let fixed_assignment = match config.group {
            Group::Broadcasting => Assignment::Gifted(rng.random_range(0..config.n_agents)),
            Group::Unicasting => Assignment::Permutation((0..config.n_agents).map(|i| (i + 1) % config.n_agents).collect()),
        };
        Ok(Environment { config, fixed_assignment })
    }

    pub fn with_assignment(config: ScenarioConfig, fixed_assignment: Assignment) -> Result<Self, EnvError> {
        config.validate()?;
        let ok = match (&fixed_assignment, config.group) {
            (Assignment::Gifted(g), Group::Broadcasting) => *g < config.n_agents,
            (Assignment::Permutation(s), Group::Unicasting) => is_permutation(s, config.n_agents),
            _ => false,
        };
        if !ok {
            return Err(EnvError::AssignmentMismatch);
        }
        Ok(Environment { config, fixed_assignment })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn fixed_assignment(&self) -> &Assignment {
        &self.fixed_assignment
    }

    pub fn layout(&self) -> ObsLayout {
        self.config.layout()
    }

    pub fn n_agents(&self) -> usize {
        self.config.n_agents
    }

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let w = self.config.arena_half_width;
        Vec2::new(rng.random_range(-w..w), rng.random_range(-w..w))
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> WorldState {
        let cfg = &self.config;
        let n = cfg.n_agents;
        // agents first, then landmarks; each entity keeps clear of all earlier ones
        let radii: Vec<f64> = (0..2 * n).map(|k| if k < n { cfg.agent_radius } else { cfg.landmark_radius }).collect();
        let mut placed: Vec<Vec2> = Vec::with_capacity(2 * n);
        for &rk in &radii {
            let mut p = self.sample_point(rng);
            for _ in 0..PLACEMENT_RETRIES {
                if placed.iter().zip(&radii).all(|(&q, &rq)| p.dist(q) >= rk + rq) {
                    break;
                }
                p = self.sample_point(rng);
            }
            placed.push(p);
        }
        let positions = placed[..n].to_vec();
        let true_landmarks = placed[n..].to_vec();
        let fake_landmarks = match cfg.fake_landmark_scheme {
            FakeLandmarkScheme::EpisodeUniform => {
                (0..n).map(|_| (0..n).map(|_| self.sample_point(rng)).collect()).collect()
            }
            FakeLandmarkScheme::None => vec![true_landmarks.clone(); n],
        };
        let assignment = match cfg.variant {
            Variant::Fixed => self.fixed_assignment.clone(),
            Variant::Alternating => match cfg.group {
                Group::Broadcasting => Assignment::Gifted(rng.random_range(0..n)),
                Group::Unicasting => {
                    let mut sigma: Vec<usize> = (0..n).collect();
                    sigma.shuffle(rng);
                    Assignment::Permutation(sigma)
                }
            },
            Variant::Dynamic => Assignment::Gifted(0),
        };
        let mut state = WorldState {
            positions,
            velocities: vec![Vec2::ZERO; n],
            true_landmarks,
            fake_landmarks,
            assignment,
            step_index: 0,
        };
        state.assignment = gifted_assignment(&state, cfg);
        state
    }

    /// One private observation per agent.
    pub fn observe(&self, state: &WorldState) -> Vec<Vec<f64>> {
        let n = self.config.n_agents;
        let layout = self.layout();
        (0..n)
            .map(|i| {
                let me = state.positions[i];
                let mut o = Vec::with_capacity(layout.len());
                o.extend([me.x, me.y, state.velocities[i].x, state.velocities[i].y]);
                for j in (0..n).filter(|&j| j != i) {
                    let rel = state.positions[j] - me;
                    o.extend([rel.x, rel.y]);
                }
                for j in 0..n {
                    let seen = if state.assignment.sees(i, j) {
                        state.true_landmarks[j]
                    } else {
                        state.fake_landmarks[i][j]
                    };
                    let rel = seen - me;
                    o.extend([rel.x, rel.y]);
                }
                if layout.flag {
                    let flag = match &state.assignment {
                        Assignment::Gifted(g) => *g == i,
                        // sees some landmark that belongs to another agent
                        Assignment::Permutation(s) => s.iter().enumerate().any(|(l, &obs)| obs == i && l != i),
                    };
                    o.push(if flag { 1.0 } else { 0.0 });
                }
                o
            })
            .collect()
    }

    /// Advance one step under per-step velocity control.
    ///
    /// Action components are `(+x, -x, +y, -y)` magnitudes in `[0, 1]`;
    /// out-of-range components are clamped.
    pub fn step(&self, state: &WorldState, actions: &[[f64; 4]]) -> Result<(WorldState, Vec<f64>), EnvError> {
        let cfg = &self.config;
        let n = cfg.n_agents;
        if actions.len() != n {
            return Err(EnvError::ActionCount { expected: n, got: actions.len() });
        }
        if state.step_index >= cfg.episode_length {
            return Err(EnvError::EpisodeFinished(state.step_index));
        }
        let w = cfg.arena_half_width;
        let mut next = state.clone();
        for (i, a) in actions.iter().enumerate() {
            let mut a = *a;
            if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
                log::warn!("agent {i}: action {a:?} outside [0, 1], clamping");
                a.iter_mut().for_each(|v| *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
            let vel = Vec2::new(cfg.max_speed * (a[0] - a[1]), cfg.max_speed * (a[2] - a[3]));
            let p = state.positions[i] + vel;
            next.velocities[i] = vel;
            next.positions[i] = Vec2::new(p.x.clamp(-w, w), p.y.clamp(-w, w));
        }
        next.step_index += 1;
        next.assignment = gifted_assignment(&next, cfg);
        let rewards = self.extrinsic_rewards(&next);
        Ok((next, rewards))
    }

    /// Rewards against the true landmarks at the current positions.
    pub fn extrinsic_rewards(&self, state: &WorldState) -> Vec<f64> {
        let targets: Vec<&[Vec2]> = vec![&state.true_landmarks[..]; self.config.n_agents];
        navigation_rewards(&self.config, &state.positions, &targets)
    }

    /// The extrinsic reward formula evaluated against the landmark positions in
    /// each recipient's medium slot instead of the true landmarks.
    pub fn intrinsic_rewards(&self, state: &WorldState, medium: &Medium) -> Result<Vec<f64>, EnvError> {
        let n = self.config.n_agents;
        if medium.len() != n {
            return Err(EnvError::MediumSize { expected: n, got: medium.len() });
        }
        let targets: Vec<&[Vec2]> = medium.slots().iter().map(|s| &s.landmarks[..]).collect();
        Ok(navigation_rewards(&self.config, &state.positions, &targets))
    }
}

fn is_permutation(s: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    s.len() == n && s.iter().all(|&v| v < n && !std::mem::replace(&mut seen[v], true))
}
