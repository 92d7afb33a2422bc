//! On-disk layout and file formats of a run directory.
//!
//! ```text
//! <out>/<scenario>/<algorithm>/seed-<k>/
//!     manifest.txt       config in the flat key = value format
//!     metrics.csv        one averaged row per logging interval
//!     checkpoint.json    latest learner state
//!     eval_summary.txt   key = value
//!     eval_summary.csv   one header row and one data row
//! ```
//!
//! Every CSV starts with a `# manifest=<path>` comment line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use maddpg_m::trainer::{Checkpoint, EvalSummary, MetricsRecord, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config;

pub const MANIFEST: &str = "manifest.txt";
pub const METRICS: &str = "metrics.csv";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const EVAL_TXT: &str = "eval_summary.txt";
pub const EVAL_CSV: &str = "eval_summary.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";

pub fn run_dir(root: &Path, cfg: &TrainConfig) -> PathBuf {
    root.join(&cfg.scenario).join(&cfg.algorithm).join(format!("seed-{}", cfg.seed))
}

/// Write `path` through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn manifest_text(cfg: &TrainConfig) -> String {
    format!(
        "# maddpg-m {}\n# layout = <out>/<scenario>/<algorithm>/seed-<seed>\n{}",
        env!("CARGO_PKG_VERSION"),
        config::to_text(cfg)
    )
}

pub fn write_manifest(dir: &Path, cfg: &TrainConfig) -> Result<()> {
    write_atomic(&dir.join(MANIFEST), manifest_text(cfg).as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<TrainConfig> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let entries = config::parse(&text, &path.display().to_string())?;
    let mut cfgs = config::Sweep::from_sources(&[entries])?.configs()?;
    if cfgs.len() != 1 {
        bail!("{} describes {} runs, expected one", path.display(), cfgs.len());
    }
    Ok(cfgs.remove(0))
}

/// One row of `metrics.csv`; absent values are empty fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_intrinsic: Option<f64>,
    pub acc_all: Option<f64>,
    pub acc_any: Option<f64>,
    pub critic_loss_mean: Option<f64>,
    pub actor_obj_mean: Option<f64>,
    pub wallclock_s: Option<f64>,
}

impl MetricsRow {
    /// Wall-clock time is dropped unless requested so that reruns are byte-identical.
    pub fn from_record(m: &MetricsRecord, wallclock: bool) -> Self {
        MetricsRow {
            episode: m.episode,
            mean_reward: m.mean_reward,
            mean_intrinsic: m.mean_intrinsic,
            acc_all: m.acc_all,
            acc_any: m.acc_any,
            critic_loss_mean: m.critic_loss_mean,
            actor_obj_mean: m.actor_obj_mean,
            wallclock_s: wallclock.then_some(m.wallclock_s),
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(file, "# manifest={MANIFEST}")?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))
}

pub struct MetricsWriter {
    inner: csv::Writer<fs::File>,
    wallclock: bool,
}

impl MetricsWriter {
    pub fn create(dir: &Path, wallclock: bool) -> Result<Self> {
        Ok(MetricsWriter { inner: csv_writer(&dir.join(METRICS))?, wallclock })
    }

    pub fn write(&mut self, m: &MetricsRecord) -> Result<()> {
        self.inner.serialize(MetricsRow::from_record(m, self.wallclock))?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    csv_reader(path)?
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(&dir.join(CHECKPOINT), ckpt.to_json()?.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Checkpoint::from_json(&text)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_text(s: &EvalSummary) -> String {
    let pairs = [
        ("manifest", MANIFEST.to_string()),
        ("scenario", s.scenario.clone()),
        ("algorithm", s.algorithm.clone()),
        ("seed", s.seed.to_string()),
        ("eval_seed", s.eval_seed.to_string()),
        ("episodes", s.episodes.to_string()),
        ("mean_reward", s.mean_reward.to_string()),
        ("std_reward", s.std_reward.to_string()),
        ("mean_intrinsic", opt(s.mean_intrinsic)),
        ("acc_all", opt(s.acc_all)),
        ("acc_any", opt(s.acc_any)),
    ];
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn parse_summary(text: &str) -> Result<EvalSummary> {
    let map: std::collections::BTreeMap<&str, &str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_once('=').map(|(k, v)| (k.trim(), v.trim())).ok_or_else(|| anyhow!("bad summary line `{l}`")))
        .collect::<Result<_>>()?;
    let get = |k: &str| map.get(k).copied().ok_or_else(|| anyhow!("summary is missing `{k}`"));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().with_context(|| format!("summary field `{k}`")) };
    let maybe = |k: &str| -> Result<Option<f64>> {
        match map.get(k) {
            None | Some(&"") => Ok(None),
            Some(v) => Ok(Some(v.parse().with_context(|| format!("summary field `{k}`"))?)),
        }
    };
    Ok(EvalSummary {
        scenario: get("scenario")?.to_string(),
        algorithm: get("algorithm")?.to_string(),
        seed: get("seed")?.parse()?,
        eval_seed: get("eval_seed")?.parse()?,
        episodes: get("episodes")?.parse()?,
        mean_reward: num("mean_reward")?,
        std_reward: num("std_reward")?,
        mean_intrinsic: maybe("mean_intrinsic")?,
        acc_all: maybe("acc_all")?,
        acc_any: maybe("acc_any")?,
    })
}

pub fn write_summary(dir: &Path, s: &EvalSummary) -> Result<()> {
    write_atomic(&dir.join(EVAL_TXT), summary_text(s).as_bytes())?;
    let mut w = csv_writer(&dir.join(EVAL_CSV))?;
    w.serialize(s)?;
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<EvalSummary> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_summary(&text).with_context(|| format!("parsing {}", path.display()))
}
