//! Communication medium assembly.
//!
//! Each recipient gets exactly one shared observation. Broadcasting picks a
//! single sender by argmax over scalar communication actions; unicasting picks
//! a sender per recipient by column-wise argmax over a willingness matrix.
//! Ties go to the lowest sender index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Environment, ObsLayout, Vec2, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum MediumError {
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("communication action {value} outside [0, 1]")]
    OutOfRange { value: f64 },
    #[error("observation of length {got} does not match layout length {expected}")]
    ObservationLength { expected: usize, got: usize },
    #[error("actual and oracle media have different sizes")]
    SizeMismatch,
}

/// Communication actions of all agents for one decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommActionSet {
    /// `c[j]`: sender `j`'s bid to broadcast.
    Broadcast(Vec<f64>),
    /// `c[j][i]`: sender `j`'s willingness to share with recipient `i`.
    Unicast(Vec<Vec<f64>>),
}

impl CommActionSet {
    /// Row of agent `j` as a flat vector (width 1 or N).
    pub fn agent_row(&self, j: usize) -> Vec<f64> {
        match self {
            CommActionSet::Broadcast(c) => vec![c[j]],
            CommActionSet::Unicast(m) => m[j].clone(),
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            CommActionSet::Broadcast(c) => c.len(),
            CommActionSet::Unicast(m) => m.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumSlot {
    pub sender: usize,
    pub snapshot: Vec<f64>,
    /// Sender-perceived landmark positions in the world frame.
    pub landmarks: Vec<Vec2>,
}

impl MediumSlot {
    fn from_observation(sender: usize, obs: &[f64], layout: &ObsLayout) -> Self {
        let me = layout.position(obs);
        let landmarks = (0..layout.n_agents).map(|j| layout.landmark_rel(obs, j) + me).collect();
        MediumSlot { sender, snapshot: obs.to_vec(), landmarks }
    }

    /// Decoded landmark block as flat `[x0, y0, x1, y1, ...]`, the policy-facing form.
    pub fn landmark_block(&self) -> Vec<f64> {
        self.landmarks.iter().flat_map(|p| [p.x, p.y]).collect()
    }
}

/// The medium `m = {m_1, ..., m_N}`: one slot per recipient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    slots: Vec<MediumSlot>,
}

impl Medium {
    /// Build from one sender index per recipient.
    pub fn from_senders(observations: &[Vec<f64>], layout: &ObsLayout, senders: &[usize]) -> Result<Self, MediumError> {
        check_observations(observations, layout)?;
        if senders.len() != observations.len() {
            return Err(MediumError::LengthMismatch { expected: observations.len(), got: senders.len() });
        }
        let slots = senders
            .iter()
            .map(|&k| {
                let obs = observations.get(k).ok_or(MediumError::LengthMismatch { expected: observations.len(), got: k + 1 })?;
                Ok(MediumSlot::from_observation(k, obs, layout))
            })
            .collect::<Result<_, _>>()?;
        Ok(Medium { slots })
    }

    pub fn slots(&self) -> &[MediumSlot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn senders(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.sender).collect()
    }

    /// Flat landmark blocks, one per recipient.
    pub fn landmark_blocks(&self) -> Vec<Vec<f64>> {
        self.slots.iter().map(MediumSlot::landmark_block).collect()
    }
}

fn check_observations(observations: &[Vec<f64>], layout: &ObsLayout) -> Result<(), MediumError> {
    if observations.len() != layout.n_agents {
        return Err(MediumError::LengthMismatch { expected: layout.n_agents, got: observations.len() });
    }
    if let Some(o) = observations.iter().find(|o| o.len() != layout.len()) {
        return Err(MediumError::ObservationLength { expected: layout.len(), got: o.len() });
    }
    Ok(())
}

fn check_range(values: impl IntoIterator<Item = f64>) -> Result<(), MediumError> {
    for value in values {
        if !(0.0..=1.0).contains(&value) {
            return Err(MediumError::OutOfRange { value });
        }
    }
    Ok(())
}

/// Index of the largest value; the first one wins ties.
pub fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Every recipient receives the observation of the agent with the largest bid.
pub fn assemble_broadcast(observations: &[Vec<f64>], layout: &ObsLayout, comm: &[f64]) -> Result<Medium, MediumError> {
    if comm.len() != observations.len() {
        return Err(MediumError::LengthMismatch { expected: observations.len(), got: comm.len() });
    }
    check_range(comm.iter().copied())?;
    let k = argmax_lowest(comm.iter().copied());
    Medium::from_senders(observations, layout, &vec![k; observations.len()])
}

/// Recipient `i` receives the observation of `argmax_j comm[j][i]`.
pub fn assemble_unicast(observations: &[Vec<f64>], layout: &ObsLayout, comm: &[Vec<f64>]) -> Result<Medium, MediumError> {
    let n = observations.len();
    if comm.len() != n {
        return Err(MediumError::LengthMismatch { expected: n, got: comm.len() });
    }
    if let Some(row) = comm.iter().find(|r| r.len() != n) {
        return Err(MediumError::LengthMismatch { expected: n, got: row.len() });
    }
    check_range(comm.iter().flatten().copied())?;
    let senders: Vec<usize> = (0..n).map(|i| argmax_lowest(comm.iter().map(|row| row[i]))).collect();
    Medium::from_senders(observations, layout, &senders)
}

pub fn assemble(observations: &[Vec<f64>], layout: &ObsLayout, comm: &CommActionSet) -> Result<Medium, MediumError> {
    match comm {
        CommActionSet::Broadcast(c) => assemble_broadcast(observations, layout, c),
        CommActionSet::Unicast(c) => assemble_unicast(observations, layout, c),
    }
}

/// The hard-coded optimal medium for the current assignment.
pub fn oracle_medium(state: &WorldState, env: &Environment, observations: &[Vec<f64>]) -> Result<Medium, MediumError> {
    let senders: Vec<usize> = (0..env.n_agents()).map(|i| state.assignment.oracle_sender(i)).collect();
    Medium::from_senders(observations, &env.layout(), &senders)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MediumAccuracy {
    /// Every recipient got the oracle's sender.
    pub all_correct: bool,
    /// Fraction of recipients that got the oracle's sender.
    pub fraction_correct: f64,
}

pub fn medium_accuracy(actual: &Medium, oracle: &Medium) -> Result<MediumAccuracy, MediumError> {
    if actual.len() != oracle.len() || actual.is_empty() {
        return Err(MediumError::SizeMismatch);
    }
    let hits = actual.slots.iter().zip(&oracle.slots).filter(|(a, o)| a.sender == o.sender).count();
    Ok(MediumAccuracy { all_correct: hits == actual.len(), fraction_correct: hits as f64 / actual.len() as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{scenario_preset, Assignment};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(name: &str, seed: u64) -> (Environment, WorldState, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = Environment::new(scenario_preset(name).unwrap(), &mut rng).unwrap();
        let state = env.reset(&mut rng);
        let obs = env.observe(&state);
        (env, state, obs)
    }

    #[test]
    fn broadcast_argmax_and_ties() {
        let (env, state, obs) = setup("fixed-broadcast", 0);
        let l = env.layout();
        assert_eq!(assemble_broadcast(&obs, &l, &[0.2, 0.9, 0.4]).unwrap().senders(), vec![1, 1, 1]);
        assert_eq!(assemble_broadcast(&obs, &l, &[0.5, 0.5, 0.5]).unwrap().senders(), vec![0, 0, 0]);
        let m = assemble_broadcast(&obs, &l, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.senders(), vec![0, 0, 0]);
        for j in 0..3 {
            let perceived = if state.assignment.sees(0, j) { state.true_landmarks[j] } else { state.fake_landmarks[0][j] };
            let got = m.slots()[2].landmarks[j];
            assert!((got.x - perceived.x).abs() < 1e-12 && (got.y - perceived.y).abs() < 1e-12);
        }
        assert_eq!(m.slots()[1].snapshot, obs[0]);
    }

    #[test]
    fn broadcast_errors() {
        let (env, _, obs) = setup("fixed-broadcast", 0);
        let l = env.layout();
        assert_eq!(assemble_broadcast(&obs, &l, &[0.1, 0.2]), Err(MediumError::LengthMismatch { expected: 3, got: 2 }));
        assert_eq!(assemble_broadcast(&obs, &l, &[0.1, 1.2, 0.0]), Err(MediumError::OutOfRange { value: 1.2 }));
        assert!(assemble_broadcast(&obs, &l, &[0.1, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn unicast_columns() {
        let (env, _, obs) = setup("fixed-unicast", 0);
        let l = env.layout();
        // column 0 one-hot at row 2, column 1 at row 0, column 2 at row 1
        let c = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        assert_eq!(assemble_unicast(&obs, &l, &c).unwrap().senders(), vec![2, 0, 1]);
        let flat = vec![vec![0.3; 3]; 3];
        assert_eq!(assemble_unicast(&obs, &l, &flat).unwrap().senders(), vec![0, 0, 0]);
        assert!(assemble_unicast(&obs, &l, &[vec![0.0; 3], vec![0.0; 2], vec![0.0; 3]]).is_err());
    }

    #[test]
    fn oracle_medium_follows_assignment() {
        let (env, mut state, obs) = setup("fixed-broadcast", 1);
        state.assignment = Assignment::Gifted(2);
        assert_eq!(oracle_medium(&state, &env, &obs).unwrap().senders(), vec![2, 2, 2]);
        let (uenv, mut ustate, uobs) = setup("fixed-unicast", 1);
        ustate.assignment = Assignment::Permutation(vec![1, 2, 0]);
        assert_eq!(oracle_medium(&ustate, &uenv, &uobs).unwrap().senders(), vec![1, 2, 0]);
    }

    #[test]
    fn oracle_medium_reproduces_extrinsic_rewards() {
        for name in ["fixed-broadcast", "dyn-unicast", "alt-unicast"] {
            let (env, state, obs) = setup(name, 7);
            let m = oracle_medium(&state, &env, &obs).unwrap();
            let q = env.intrinsic_rewards(&state, &m).unwrap();
            let r = env.extrinsic_rewards(&state);
            for (a, b) in q.iter().zip(&r) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn accuracy_counts() {
        let (env, _, obs) = setup("fixed-unicast", 0);
        let l = env.layout();
        let oracle = Medium::from_senders(&obs, &l, &[1, 1, 1]).unwrap();
        let same = Medium::from_senders(&obs, &l, &[1, 1, 1]).unwrap();
        let acc = medium_accuracy(&same, &oracle).unwrap();
        assert!(acc.all_correct);
        assert_eq!(acc.fraction_correct, 1.0);
        let off = Medium::from_senders(&obs, &l, &[1, 1, 2]).unwrap();
        let acc = medium_accuracy(&off, &oracle).unwrap();
        assert!(!acc.all_correct);
        assert!((acc.fraction_correct - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn argmax_is_invariant_under_increasing_maps(c in prop::collection::vec(0.0f64..=1.0, 3)) {
            let (env, _, obs) = setup("fixed-broadcast", 3);
            let l = env.layout();
            let base = assemble_broadcast(&obs, &l, &c).unwrap().senders();
            let squashed: Vec<f64> = c.iter().map(|v| v * v * 0.5 + 0.1).collect();
            prop_assert_eq!(assemble_broadcast(&obs, &l, &squashed).unwrap().senders(), base.clone());
            prop_assert!(base.iter().all(|&s| s == base[0]));
        }

        #[test]
        fn unicast_columns_are_independent(
            c in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 3), 3),
            col in 0usize..3,
            row in 0usize..3,
            v in 0.0f64..=1.0,
        ) {
            let (env, _, obs) = setup("fixed-unicast", 3);
            let l = env.layout();
            let before = assemble_unicast(&obs, &l, &c).unwrap().senders();
            let mut c2 = c.clone();
            c2[row][col] = v;
            let after = assemble_unicast(&obs, &l, &c2).unwrap().senders();
            for i in (0..3).filter(|&i| i != col) {
                prop_assert_eq!(before[i], after[i]);
            }
        }

        #[test]
        fn decoded_landmarks_round_trip(seed in 0u64..500, k in 0usize..3) {
            let (env, _, obs) = setup("alt-broadcast", seed);
            let l = env.layout();
            let m = Medium::from_senders(&obs, &l, &[k, k, k]).unwrap();
            let slot = &m.slots()[0];
            let me = l.position(&slot.snapshot);
            for j in 0..3 {
                let rel = slot.landmarks[j] - me;
                let want = l.landmark_rel(&slot.snapshot, j);
                prop_assert!((rel.x - want.x).abs() < 1e-12 && (rel.y - want.y).abs() < 1e-12);
            }
        }
    }
}
