//! Name-to-constructor table of the available learners.

use super::ddpg::Ddpg;
use super::ddpg_oc::DdpgOc;
use super::maddpg::Maddpg;
use super::maddpg_m::MaddpgM;
use super::meta::MetaAgent;
use super::{load_state, AgentError, Algorithm, AlgorithmContext, MediumSource};

type Build = fn(&AlgorithmContext) -> Result<Box<dyn Algorithm>, AgentError>;
type Restore = fn(serde_json::Value) -> Result<Box<dyn Algorithm>, AgentError>;

pub struct AlgorithmEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub medium_source: MediumSource,
    pub build: Build,
    pub restore: Restore,
}

macro_rules! entry {
    ($name:literal, $ty:ty, $medium:expr, $summary:literal) => {
        AlgorithmEntry {
            name: $name,
            summary: $summary,
            medium_source: $medium,
            build: |ctx| Ok(Box::new(<$ty>::new(ctx)?)),
            restore: |v| Ok(Box::new(load_state::<$ty>(v)?)),
        }
    };
}

pub static ALGORITHMS: &[AlgorithmEntry] = &[
    entry!("maddpg-m", MaddpgM, MediumSource::Learned, "learned communication medium + intrinsic rewards"),
    entry!("ddpg", Ddpg, MediumSource::None, "independent decentralized actor-critics"),
    entry!("maddpg", Maddpg, MediumSource::None, "centralized critics, local actors"),
    entry!("meta", MetaAgent, MediumSource::None, "centralized critics and actors over all observations"),
    entry!("ddpg-oc", DdpgOc, MediumSource::Oracle, "decentralized learners on the optimal medium"),
];

pub fn names() -> Vec<&'static str> {
    ALGORITHMS.iter().map(|e| e.name).collect()
}

pub fn lookup(name: &str) -> Result<&'static AlgorithmEntry, AgentError> {
    ALGORITHMS
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| AgentError::UnknownAlgorithm { name: name.to_string(), valid: names().join(", ") })
}

pub fn build(name: &str, ctx: &AlgorithmContext) -> Result<Box<dyn Algorithm>, AgentError> {
    (lookup(name)?.build)(ctx)
}

pub fn restore(name: &str, state: serde_json::Value) -> Result<Box<dyn Algorithm>, AgentError> {
    (lookup(name)?.restore)(state)
}
