//! Flat `key = value` run configuration.
//!
//! Keys mirror [`TrainConfig`] field names. `scenario`, `algorithm` and `seed`
//! take comma-separated lists and span a sweep. Sources are applied in order
//! config file, environment (`MADDPGM_<KEY>`), command-line flags; later wins.

use maddpg_m::agents::{registry, RewardSignal};
use maddpg_m::env::{scenario_preset, SCENARIOS};
use maddpg_m::trainer::{MediumUpdateMode, TrainConfig};
use thiserror::Error;

pub const ENV_PREFIX: &str = "MADDPGM_";

pub const KEYS: &[&str] = &[
    "scenario",
    "algorithm",
    "seed",
    "num_episodes",
    "steps_per_episode",
    "c_period",
    "gamma",
    "update_every",
    "batch_size",
    "learning_rate",
    "tau",
    "buffer_capacity",
    "medium_update_mode",
    "eval_episodes",
    "log_every",
    "grad_clip",
    "policy_hidden",
    "critic_hidden",
    "ddpg_oc_reward",
    "oracle_comm",
];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{source_name} line {line}: expected `key = value`, got `{text}`")]
    Syntax { source_name: String, line: usize, text: String },
    #[error("unknown config key `{key}` (valid: {})", KEYS.join(", "))]
    UnknownKey { key: String },
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("unknown scenario `{0}` (valid: {valid})", valid = SCENARIOS.join(", "))]
    UnknownScenario(String),
    #[error("unknown algorithm `{0}` (valid: {valid})", valid = registry::names().join(", "))]
    UnknownAlgorithm(String),
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

pub type Entries = Vec<(String, String)>;

/// Parse a config file body; `#` starts a comment line.
pub fn parse(text: &str, source_name: &str) -> Result<Entries, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { source_name: source_name.into(), line: i + 1, text: line.into() });
        };
        let key = k.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { key });
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// `MADDPGM_<KEY>` overrides for every known key.
pub fn from_env() -> Entries {
    KEYS.iter()
        .filter_map(|k| {
            let name = format!("{ENV_PREFIX}{}", k.to_uppercase());
            std::env::var(name).ok().map(|v| (k.to_string(), v))
        })
        .collect()
}

fn bad(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.to_string() }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| bad(key, value, e))
}

fn list(value: &str) -> Vec<String> {
    value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

/// Apply one non-list setting.
pub fn apply(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "num_episodes" => cfg.num_episodes = num(key, value)?,
        "steps_per_episode" => cfg.steps_per_episode = num(key, value)?,
        "c_period" => cfg.c_period = num(key, value)?,
        "gamma" => {
            cfg.gamma = match value {
                "default" | "" => None,
                v => Some(num(key, v)?),
            }
        }
        "update_every" => cfg.update_every = num(key, value)?,
        "batch_size" => cfg.batch_size = num(key, value)?,
        "learning_rate" => cfg.learning_rate = num(key, value)?,
        "tau" => cfg.tau = num(key, value)?,
        "buffer_capacity" => cfg.buffer_capacity = num(key, value)?,
        "medium_update_mode" => cfg.medium_update_mode = value.parse().map_err(|e: String| bad(key, value, e))?,
        "eval_episodes" => cfg.eval_episodes = num(key, value)?,
        "log_every" => cfg.log_every = num(key, value)?,
        "grad_clip" => {
            cfg.grad_clip = match value {
                "none" | "off" => None,
                v => Some(num(key, v)?),
            }
        }
        "policy_hidden" => cfg.policy_hidden = num(key, value)?,
        "critic_hidden" => cfg.critic_hidden = num(key, value)?,
        "ddpg_oc_reward" => {
            cfg.ddpg_oc_reward = match value {
                "extrinsic" => RewardSignal::Extrinsic,
                "intrinsic" => RewardSignal::Intrinsic,
                _ => return Err(bad(key, value, "expected extrinsic or intrinsic")),
            }
        }
        "oracle_comm" => cfg.oracle_comm = num(key, value)?,
        _ => return Err(ConfigError::UnknownKey { key: key.into() }),
    }
    Ok(())
}

/// A resolved set of runs: the cross product of scenarios, algorithms and seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub scenarios: Vec<String>,
    pub algorithms: Vec<String>,
    pub seeds: Vec<u64>,
    pub settings: Entries,
}

impl Sweep {
    /// Merge sources in increasing precedence.
    pub fn from_sources(sources: &[Entries]) -> Result<Self, ConfigError> {
        let (mut scenarios, mut algorithms, mut seeds) = (None, None, None);
        let mut settings = Vec::new();
        for (key, value) in sources.iter().flatten() {
            match key.as_str() {
                "scenario" => scenarios = Some(list(value)),
                "algorithm" => algorithms = Some(list(value)),
                "seed" => {
                    seeds = Some(list(value).iter().map(|s| num::<u64>(key, s)).collect::<Result<Vec<_>, _>>()?)
                }
                _ => settings.push((key.clone(), value.clone())),
            }
        }
        let scenarios = scenarios.filter(|v| !v.is_empty()).ok_or(ConfigError::Missing("scenario"))?;
        let algorithms = algorithms.filter(|v| !v.is_empty()).ok_or(ConfigError::Missing("algorithm"))?;
        if let Some(s) = scenarios.iter().find(|s| scenario_preset(s).is_err()) {
            return Err(ConfigError::UnknownScenario(s.clone()));
        }
        if let Some(a) = algorithms.iter().find(|a| registry::lookup(a).is_err()) {
            return Err(ConfigError::UnknownAlgorithm(a.clone()));
        }
        Ok(Sweep { scenarios, algorithms, seeds: seeds.unwrap_or_else(|| vec![0]), settings })
    }

    /// One validated config per run, scenario-major.
    pub fn configs(&self) -> Result<Vec<TrainConfig>, ConfigError> {
        let mut out = Vec::new();
        for s in &self.scenarios {
            for a in &self.algorithms {
                for &seed in &self.seeds {
                    let mut cfg = TrainConfig { seed, ..TrainConfig::new(s, a) };
                    for (k, v) in &self.settings {
                        apply(&mut cfg, k, v)?;
                    }
                    cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }
}

/// Serialize a config in the same format [`parse`] reads, one key per line.
pub fn to_text(cfg: &TrainConfig) -> String {
    let mode = match cfg.medium_update_mode {
        MediumUpdateMode::FixMedium => "fix_medium",
        MediumUpdateMode::FixCommActions => "fix_comm_actions",
    };
    let reward = match cfg.ddpg_oc_reward {
        RewardSignal::Extrinsic => "extrinsic",
        RewardSignal::Intrinsic => "intrinsic",
    };
    let clip = cfg.grad_clip.map_or_else(|| "none".to_string(), |c| c.to_string());
    let lines = [
        ("scenario", cfg.scenario.clone()),
        ("algorithm", cfg.algorithm.clone()),
        ("seed", cfg.seed.to_string()),
        ("num_episodes", cfg.num_episodes.to_string()),
        ("steps_per_episode", cfg.steps_per_episode.to_string()),
        ("c_period", cfg.c_period.to_string()),
        ("gamma", cfg.gamma().to_string()),
        ("update_every", cfg.update_every.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("learning_rate", cfg.learning_rate.to_string()),
        ("tau", cfg.tau.to_string()),
        ("buffer_capacity", cfg.buffer_capacity.to_string()),
        ("medium_update_mode", mode.to_string()),
        ("eval_episodes", cfg.eval_episodes.to_string()),
        ("log_every", cfg.log_every.to_string()),
        ("grad_clip", clip),
        ("policy_hidden", cfg.policy_hidden.to_string()),
        ("critic_hidden", cfg.critic_hidden.to_string()),
        ("ddpg_oc_reward", reward.to_string()),
        ("oracle_comm", cfg.oracle_comm.to_string()),
    ];
    lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(pairs: &[(&str, &str)]) -> Entries {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn parses_comments_and_whitespace() {
        let e = parse("# run\n\nscenario = fixed-broadcast\n  c_period=3 \n", "f").unwrap();
        assert_eq!(e, entries(&[("scenario", "fixed-broadcast"), ("c_period", "3")]));
    }

    #[test]
    fn rejects_bad_lines_and_keys() {
        assert!(matches!(parse("just words", "f"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse("colour = red", "f"), Err(ConfigError::UnknownKey { .. })));
    }

    #[test]
    fn later_sources_win() {
        let file = entries(&[("scenario", "alt-unicast"), ("algorithm", "ddpg"), ("c_period", "3"), ("seed", "4")]);
        let env = entries(&[("c_period", "4")]);
        let flags = entries(&[("c_period", "2"), ("algorithm", "maddpg-m,ddpg-oc")]);
        let sweep = Sweep::from_sources(&[file, env, flags]).unwrap();
        let cfgs = sweep.configs().unwrap();
        assert_eq!(cfgs.len(), 2);
        assert!(cfgs.iter().all(|c| c.c_period == 2 && c.seed == 4 && c.scenario == "alt-unicast"));
        assert_eq!(cfgs[0].algorithm, "maddpg-m");
    }

    #[test]
    fn sweep_order_is_scenario_algorithm_seed() {
        let s = Sweep::from_sources(&[entries(&[
            ("scenario", "fixed-broadcast,dyn-unicast"),
            ("algorithm", "ddpg,meta"),
            ("seed", "1,2"),
        ])])
        .unwrap();
        let keys: Vec<_> = s.configs().unwrap().iter().map(|c| (c.scenario.clone(), c.algorithm.clone(), c.seed)).collect();
        assert_eq!(keys.len(), 8);
        assert_eq!(keys[0], ("fixed-broadcast".into(), "ddpg".into(), 1));
        assert_eq!(keys[1], ("fixed-broadcast".into(), "ddpg".into(), 2));
        assert_eq!(keys[7], ("dyn-unicast".into(), "meta".into(), 2));
    }

    #[test]
    fn unknown_names_list_the_valid_ones() {
        let e = Sweep::from_sources(&[entries(&[("scenario", "moon"), ("algorithm", "ddpg")])]).unwrap_err();
        assert!(e.to_string().contains("fixed-broadcast"));
        let e = Sweep::from_sources(&[entries(&[("scenario", "fixed-broadcast"), ("algorithm", "dqn")])]).unwrap_err();
        assert!(e.to_string().contains("maddpg-m"));
        let e = Sweep::from_sources(&[entries(&[("algorithm", "ddpg")])]).unwrap_err();
        assert_eq!(e, ConfigError::Missing("scenario"));
    }

    #[test]
    fn bad_values_are_reported() {
        let mut cfg = TrainConfig::new("fixed-broadcast", "ddpg");
        assert!(matches!(apply(&mut cfg, "c_period", "five"), Err(ConfigError::BadValue { .. })));
        assert!(apply(&mut cfg, "medium_update_mode", "sometimes").is_err());
        assert!(apply(&mut cfg, "ddpg_oc_reward", "both").is_err());
        apply(&mut cfg, "grad_clip", "none").unwrap();
        assert_eq!(cfg.grad_clip, None);
    }

    #[test]
    fn text_round_trips() {
        let mut cfg = TrainConfig::new("alt-unicast", "maddpg-m");
        cfg.seed = 9;
        cfg.learning_rate = 0.003;
        cfg.grad_clip = None;
        cfg.medium_update_mode = MediumUpdateMode::FixCommActions;
        cfg.ddpg_oc_reward = RewardSignal::Intrinsic;
        let sweep = Sweep::from_sources(&[parse(&to_text(&cfg), "manifest").unwrap()]).unwrap();
        let back = sweep.configs().unwrap().remove(0);
        assert_eq!(back, TrainConfig { gamma: Some(cfg.gamma()), ..cfg });
    }
}
