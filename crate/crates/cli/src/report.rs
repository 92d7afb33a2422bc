//! Aggregation of evaluation summaries and training metrics into plot-ready tables.
//!
//! Seed statistics are the mean and population standard deviation of the
//! per-seed mean episode rewards. Outputs:
//!
//! * `rewards.csv`: `scenario,algorithm,n_seeds,mean,std` at full precision;
//! * `table_rewards.csv`: algorithms by scenarios, cells `mean(±std)`;
//! * `accuracy.csv` and `table_accuracy.csv`: the same for comm accuracies of
//!   the learned-medium algorithm, rows `all` and `any` (`-` when broadcasting);
//! * `normalized.csv`: `scenario,algorithm,mean,normalized` min-max bars;
//! * `curves.csv`: learning curves averaged over seeds per logged episode.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use maddpg_m::agents::registry;
use maddpg_m::env::{scenario_preset, Group, SCENARIOS};
use maddpg_m::trainer::{normalize_rewards, EvalSummary};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::artifacts::{self, MetricsRow};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("cannot aggregate across scenarios ({0} and {1})")]
    MixedScenarios(String, String),
    #[error("cannot aggregate across algorithms ({0} and {1})")]
    MixedAlgorithms(String, String),
    #[error("seed {seed} appears twice for {scenario}/{algorithm}")]
    DuplicateSeed { scenario: String, algorithm: String, seed: u64 },
    #[error("no evaluation summaries found")]
    Empty,
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn stats(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(Stats { n: values.len(), mean, std: var.sqrt() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardCell {
    pub scenario: String,
    pub algorithm: String,
    pub n_seeds: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub scenario: String,
    pub algorithm: String,
    pub n_seeds: usize,
    pub all_mean: f64,
    pub all_std: f64,
    pub any_mean: f64,
    pub any_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub scenario: String,
    pub algorithm: String,
    pub mean: f64,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub scenario: String,
    pub algorithm: String,
    pub episode: usize,
    pub n_seeds: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_intrinsic: Option<f64>,
    pub acc_all: Option<f64>,
    pub acc_any: Option<f64>,
}

/// Seed statistics of one (scenario, algorithm) cell.
pub fn aggregate_cell(summaries: &[&EvalSummary]) -> Result<RewardCell, ReportError> {
    let first = summaries.first().ok_or(ReportError::Empty)?;
    let mut seeds = BTreeSet::new();
    for s in summaries {
        if s.scenario != first.scenario {
            return Err(ReportError::MixedScenarios(first.scenario.clone(), s.scenario.clone()));
        }
        if s.algorithm != first.algorithm {
            return Err(ReportError::MixedAlgorithms(first.algorithm.clone(), s.algorithm.clone()));
        }
        if !seeds.insert(s.seed) {
            return Err(ReportError::DuplicateSeed {
                scenario: s.scenario.clone(),
                algorithm: s.algorithm.clone(),
                seed: s.seed,
            });
        }
    }
    let rewards: Vec<f64> = summaries.iter().map(|s| s.mean_reward).collect();
    let st = stats(&rewards).expect("non-empty");
    Ok(RewardCell {
        scenario: first.scenario.clone(),
        algorithm: first.algorithm.clone(),
        n_seeds: st.n,
        mean: st.mean,
        std: st.std,
    })
}

fn rank(list: &[&str], name: &str) -> usize {
    list.iter().position(|n| *n == name).unwrap_or(list.len())
}

fn scenario_key(name: &str) -> (usize, String) {
    (rank(SCENARIOS, name), name.to_string())
}

fn algorithm_key(name: &str) -> (usize, String) {
    (rank(&registry::names(), name), name.to_string())
}

type Groups<'a> = BTreeMap<((usize, String), (usize, String)), Vec<&'a EvalSummary>>;

fn group(summaries: &[EvalSummary]) -> Groups<'_> {
    let mut g: Groups<'_> = BTreeMap::new();
    for s in summaries {
        g.entry((scenario_key(&s.scenario), algorithm_key(&s.algorithm))).or_default().push(s);
    }
    g
}

/// One cell per (scenario, algorithm), in canonical order.
pub fn reward_cells(summaries: &[EvalSummary]) -> Result<Vec<RewardCell>, ReportError> {
    if summaries.is_empty() {
        return Err(ReportError::Empty);
    }
    group(summaries).values().map(|v| aggregate_cell(v)).collect()
}

/// Accuracy cells for every group that reports accuracies.
pub fn accuracy_cells(summaries: &[EvalSummary], algorithm: &str) -> Result<Vec<AccuracyCell>, ReportError> {
    let mut out = Vec::new();
    for group in group(summaries).values() {
        let cell = aggregate_cell(group)?;
        if cell.algorithm != algorithm {
            continue;
        }
        let all: Vec<f64> = group.iter().filter_map(|s| s.acc_all).collect();
        let any: Vec<f64> = group.iter().filter_map(|s| s.acc_any).collect();
        if let (Some(a), Some(b)) = (stats(&all), stats(&any)) {
            out.push(AccuracyCell {
                scenario: cell.scenario,
                algorithm: cell.algorithm,
                n_seeds: a.n,
                all_mean: a.mean,
                all_std: a.std,
                any_mean: b.mean,
                any_std: b.std,
            });
        }
    }
    Ok(out)
}

/// Min-max normalized bars per scenario. Scenarios with a single algorithm
/// cannot be normalized and are returned separately.
pub fn bars(cells: &[RewardCell]) -> (Vec<Bar>, Vec<String>) {
    let mut by_scenario: BTreeMap<(usize, String), Vec<&RewardCell>> = BTreeMap::new();
    for c in cells {
        by_scenario.entry(scenario_key(&c.scenario)).or_default().push(c);
    }
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for ((_, scenario), cs) in by_scenario {
        let means: Vec<f64> = cs.iter().map(|c| c.mean).collect();
        match normalize_rewards(&means) {
            Ok(norm) => out.extend(cs.iter().zip(norm).map(|(c, v)| Bar {
                scenario: c.scenario.clone(),
                algorithm: c.algorithm.clone(),
                mean: c.mean,
                normalized: v,
            })),
            Err(e) => {
                log::warn!("skipping normalized bars for {scenario}: {e}");
                skipped.push(scenario);
            }
        }
    }
    (out, skipped)
}

/// A run's training metrics tagged with its identity.
pub struct RunCurve {
    pub scenario: String,
    pub algorithm: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

/// Average curves over seeds at each logged episode.
pub fn curves(runs: &[RunCurve]) -> Vec<CurvePoint> {
    type Key = ((usize, String), (usize, String), usize);
    let mut acc: BTreeMap<Key, Vec<&MetricsRow>> = BTreeMap::new();
    for run in runs {
        for row in &run.rows {
            acc.entry((scenario_key(&run.scenario), algorithm_key(&run.algorithm), row.episode)).or_default().push(row);
        }
    }
    let mean_of = |rows: &[&MetricsRow], f: fn(&MetricsRow) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
        stats(&v).map(|s| s.mean)
    };
    acc.into_iter()
        .map(|(((_, scenario), (_, algorithm), episode), rows)| {
            let r: Vec<f64> = rows.iter().map(|r| r.mean_reward).collect();
            let st = stats(&r).expect("non-empty");
            CurvePoint {
                scenario,
                algorithm,
                episode,
                n_seeds: st.n,
                mean_reward: st.mean,
                std_reward: st.std,
                mean_intrinsic: mean_of(&rows, |r| r.mean_intrinsic),
                acc_all: mean_of(&rows, |r| r.acc_all),
                acc_any: mean_of(&rows, |r| r.acc_any),
            }
        })
        .collect()
}

pub fn reward_table_cell(c: &RewardCell) -> String {
    format!("{:.2}(±{:.2})", c.mean, c.std)
}

fn percent_cell(mean: f64, std: f64) -> String {
    format!("{:.2}%(±{:.2})", 100.0 * mean, 100.0 * std)
}

/// Columns in scenario order; rows are whatever the row key yields.
fn pivot<T>(items: &[T], row: impl Fn(&T) -> String, col: impl Fn(&T) -> String, cell: impl Fn(&T) -> String) -> Vec<Vec<String>> {
    let mut cols: Vec<String> = items.iter().map(&col).collect::<BTreeSet<_>>().into_iter().collect();
    cols.sort_by_key(|c| scenario_key(c));
    let mut rows: Vec<String> = Vec::new();
    for it in items {
        let r = row(it);
        if !rows.contains(&r) {
            rows.push(r);
        }
    }
    let mut out = vec![std::iter::once(String::new()).chain(cols.iter().cloned()).collect::<Vec<_>>()];
    for r in &rows {
        let mut line = vec![r.clone()];
        for c in &cols {
            let v = items.iter().find(|it| row(it) == *r && col(it) == *c).map(&cell).unwrap_or_else(|| "-".into());
            line.push(v);
        }
        out.push(line);
    }
    out
}

pub struct Report {
    pub rewards: Vec<RewardCell>,
    pub accuracy: Vec<AccuracyCell>,
    pub bars: Vec<Bar>,
    pub unnormalized: Vec<String>,
    pub curves: Vec<CurvePoint>,
}

pub fn build(summaries: &[EvalSummary], runs: &[RunCurve]) -> Result<Report, ReportError> {
    let rewards = reward_cells(summaries)?;
    let accuracy = accuracy_cells(summaries, "maddpg-m")?;
    let (bars, unnormalized) = bars(&rewards);
    Ok(Report { rewards, accuracy, bars, unnormalized, curves: curves(runs) })
}

fn write_csv<T: Serialize>(path: &Path, header: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let mut bytes = format!("# {header}\n").into_bytes();
    bytes.extend(w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?);
    artifacts::write_atomic(path, &bytes)
}

fn write_table(path: &Path, header: &str, table: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for r in table {
        w.write_record(r)?;
    }
    let mut bytes = format!("# {header}\n").into_bytes();
    bytes.extend(w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?);
    artifacts::write_atomic(path, &bytes)
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

impl Report {
    /// Write every output file into `out`; `source` is recorded in each header line.
    pub fn write(&self, out: &Path, source: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(out)?;
        let header = format!("source={source}");
        let path = |name: &str| out.join(name);
        write_csv(&path("rewards.csv"), &header, &self.rewards)?;
        let table = pivot(&self.rewards, |c| c.algorithm.clone(), |c| c.scenario.clone(), reward_table_cell);
        write_table(&path("table_rewards.csv"), &header, &table)?;
        write_csv(&path("accuracy.csv"), &header, &self.accuracy)?;
        let mut acc_rows = Vec::new();
        for c in &self.accuracy {
            let broadcast = scenario_preset(&c.scenario).map(|s| s.group == Group::Broadcasting).unwrap_or(false);
            acc_rows.push(("all", c.scenario.clone(), percent_cell(c.all_mean, c.all_std)));
            let any = if broadcast { "-".to_string() } else { percent_cell(c.any_mean, c.any_std) };
            acc_rows.push(("any", c.scenario.clone(), any));
        }
        let table = pivot(&acc_rows, |r| r.0.to_string(), |r| r.1.clone(), |r| r.2.clone());
        write_table(&path("table_accuracy.csv"), &header, &table)?;
        write_csv(&path("normalized.csv"), &header, &self.bars)?;
        write_csv(&path("curves.csv"), &header, &self.curves)?;
        Ok(["rewards.csv", "table_rewards.csv", "accuracy.csv", "table_accuracy.csv", "normalized.csv", "curves.csv"]
            .iter()
            .map(|n| path(n))
            .collect())
    }
}

/// Every evaluation summary and run curve below `root`, in path order.
pub fn collect(root: &Path) -> Result<(Vec<EvalSummary>, Vec<RunCurve>)> {
    let mut summaries = Vec::new();
    let mut runs = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy();
        if name == artifacts::EVAL_TXT {
            summaries.push(artifacts::read_summary(entry.path())?);
        } else if name == artifacts::METRICS {
            let dir = entry.path().parent().expect("file has a parent");
            let cfg = artifacts::read_manifest(dir)?;
            runs.push(RunCurve {
                scenario: cfg.scenario,
                algorithm: cfg.algorithm,
                seed: cfg.seed,
                rows: artifacts::read_metrics(entry.path())?,
            });
        }
    }
    Ok((summaries, runs))
}
