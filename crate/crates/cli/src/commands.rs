//! Subcommand definitions and handlers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Child, Command as Process};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use maddpg_m::agents::registry;
use maddpg_m::env::SCENARIOS;
use maddpg_m::trainer::{evaluate, train, StepRecord, TrainConfig, TrainObserver};
use thiserror::Error;
use walkdir::WalkDir;

use crate::artifacts::{self, MetricsWriter};
use crate::config::{self, ConfigError, Entries, Sweep};
use crate::report;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running; exit code 1.
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "maddpg-m", version, about = "Train and evaluate learned-communication multi-agent actor-critics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one run per (scenario, algorithm, seed).
    Train(Box<TrainArgs>),
    /// Evaluate trained runs greedily with C = 1.
    Eval(EvalArgs),
    /// Aggregate evaluation summaries and metrics into tables.
    Report(ReportArgs),
    /// List scenario and algorithm names.
    List,
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    /// Scenario presets (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub scenario: Vec<String>,
    /// Algorithms (comma-separated).
    #[arg(long = "algo", value_delimiter = ',')]
    pub algo: Vec<String>,
    /// Seeds (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    /// Training episodes per run [default: 100000].
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Steps per episode [default: 25].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Temporal abstraction period during training [default: 5].
    #[arg(long)]
    pub c_period: Option<usize>,
    /// Discount factor [default: per scenario and algorithm].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// fix_medium or fix_comm_actions [default: fix_medium].
    #[arg(long)]
    pub medium_mode: Option<String>,
    /// Root of the run directories.
    #[arg(long, default_value = "runs")]
    pub out_dir: PathBuf,
    /// Flat `key = value` file; flags and MADDPGM_* variables override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Minibatch size [default: 1024].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Environment steps between learning steps [default: 100].
    #[arg(long)]
    pub update_every: Option<usize>,
    /// Adam learning rate [default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Soft target update rate [default: 0.01].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Replay capacity per buffer [default: 1000000].
    #[arg(long)]
    pub buffer_capacity: Option<usize>,
    /// Episodes for `--eval` and `eval` [default: 1000].
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    /// Episodes per metrics row [default: 100].
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Global-norm clip, or `none` [default: 0.5].
    #[arg(long)]
    pub grad_clip: Option<String>,
    /// Policy hidden width [default: 64].
    #[arg(long)]
    pub policy_hidden: Option<usize>,
    /// Critic hidden width [default: 128].
    #[arg(long)]
    pub critic_hidden: Option<usize>,
    /// extrinsic or intrinsic [default: extrinsic].
    #[arg(long)]
    pub ddpg_oc_reward: Option<String>,
    /// Use the oracle's communication decisions (learned-medium algorithm only).
    #[arg(long)]
    pub oracle_comm: bool,
    /// Episodes between checkpoint writes (rounded up to a logging boundary).
    #[arg(long, default_value_t = 1000)]
    pub checkpoint_every: usize,
    /// Record wall-clock seconds in metrics.csv (makes reruns differ).
    #[arg(long)]
    pub wallclock: bool,
    /// Evaluate each run after training.
    #[arg(long)]
    pub eval: bool,
    /// Parallel worker processes.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl TrainArgs {
    fn flag_entries(&self) -> Entries {
        let mut e: Entries = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                e.push((k.to_string(), v));
            }
        };
        let join = |v: &[String]| (!v.is_empty()).then(|| v.join(","));
        put("scenario", join(&self.scenario));
        put("algorithm", join(&self.algo));
        put("seed", (!self.seed.is_empty()).then(|| self.seed.iter().map(u64::to_string).collect::<Vec<_>>().join(",")));
        put("num_episodes", self.episodes.map(|v| v.to_string()));
        put("steps_per_episode", self.steps.map(|v| v.to_string()));
        put("c_period", self.c_period.map(|v| v.to_string()));
        put("gamma", self.gamma.map(|v| v.to_string()));
        put("medium_update_mode", self.medium_mode.clone());
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("update_every", self.update_every.map(|v| v.to_string()));
        put("learning_rate", self.lr.map(|v| v.to_string()));
        put("tau", self.tau.map(|v| v.to_string()));
        put("buffer_capacity", self.buffer_capacity.map(|v| v.to_string()));
        put("eval_episodes", self.eval_episodes.map(|v| v.to_string()));
        put("log_every", self.log_every.map(|v| v.to_string()));
        put("grad_clip", self.grad_clip.clone());
        put("policy_hidden", self.policy_hidden.map(|v| v.to_string()));
        put("critic_hidden", self.critic_hidden.map(|v| v.to_string()));
        put("ddpg_oc_reward", self.ddpg_oc_reward.clone());
        put("oracle_comm", self.oracle_comm.then(|| "true".to_string()));
        e
    }

    /// Config file, then environment, then flags.
    pub fn sweep(&self) -> CliResult<Sweep> {
        let mut sources = Vec::new();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            sources.push(config::parse(&text, &path.display().to_string())?);
        }
        sources.push(config::from_env());
        sources.push(self.flag_entries());
        Ok(Sweep::from_sources(&sources)?)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directories, or roots searched for checkpoint.json.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Evaluation episodes (default: the run's eval_episodes).
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Evaluation seed (default: the run's training seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write every evaluation step to trajectories.csv.
    #[arg(long)]
    pub trajectories: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory searched for eval_summary.txt and metrics.csv.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for the tables.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Report(args) => cmd_report(&args),
        Command::List => {
            println!("scenarios: {}", SCENARIOS.join(", "));
            for e in registry::ALGORITHMS {
                println!("{:<10} {}", e.name, e.summary);
            }
            Ok(())
        }
    }
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let configs = args.sweep()?.configs()?;
    if args.jobs > 1 && configs.len() > 1 {
        return train_parallel(args, &configs);
    }
    for cfg in configs {
        train_one(&cfg, &args.out_dir, args.checkpoint_every, args.wallclock, args.eval)?;
    }
    Ok(())
}

/// Train one run into its directory under `root`, returning that directory.
pub fn train_one(cfg: &TrainConfig, root: &Path, checkpoint_every: usize, wallclock: bool, eval: bool) -> CliResult<PathBuf> {
    let dir = artifacts::run_dir(root, cfg);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    artifacts::write_manifest(&dir, cfg)?;
    let mut metrics = MetricsWriter::create(&dir, wallclock)?;
    let checkpoint_every = checkpoint_every.max(1);
    let mut last_checkpoint = 0;
    log::info!("training {}", dir.display());
    let trainer = train(cfg.clone(), &mut (), |record, trainer| {
        metrics.write(record).map_err(|e| maddpg_m::trainer::TrainError::Checkpoint(e.to_string()))?;
        log::info!("{} episode {} reward {:.3}", dir.display(), record.episode, record.mean_reward);
        if record.episode / checkpoint_every > last_checkpoint {
            last_checkpoint = record.episode / checkpoint_every;
            artifacts::write_checkpoint(&dir, &trainer.checkpoint()?)
                .map_err(|e| maddpg_m::trainer::TrainError::Checkpoint(e.to_string()))?;
        }
        Ok(())
    })
    .map_err(|e| anyhow!(e).context(format!("training {}", dir.display())))?;
    let ckpt = trainer.checkpoint().map_err(anyhow::Error::from)?;
    artifacts::write_checkpoint(&dir, &ckpt)?;
    if eval {
        let summary = evaluate(&ckpt, cfg.eval_episodes, cfg.seed, &mut ()).map_err(anyhow::Error::from)?;
        artifacts::write_summary(&dir, &summary)?;
    }
    Ok(dir)
}

/// One child process per run, at most `jobs` at a time. Each child reads the
/// run's manifest, so environment overrides are cleared for it.
fn train_parallel(args: &TrainArgs, configs: &[TrainConfig]) -> CliResult<()> {
    let exe = std::env::current_exe().context("locating the executable")?;
    let mut queue = configs.iter();
    let mut running: Vec<(PathBuf, Child)> = Vec::new();
    let mut failed = Vec::new();
    loop {
        while running.len() < args.jobs {
            let Some(cfg) = queue.next() else { break };
            let dir = artifacts::run_dir(&args.out_dir, cfg);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            artifacts::write_manifest(&dir, cfg)?;
            let mut cmd = Process::new(&exe);
            cmd.arg("train")
                .arg("--config")
                .arg(dir.join(artifacts::MANIFEST))
                .arg("--out-dir")
                .arg(&args.out_dir)
                .arg("--checkpoint-every")
                .arg(args.checkpoint_every.to_string());
            if args.wallclock {
                cmd.arg("--wallclock");
            }
            if args.eval {
                cmd.arg("--eval");
            }
            for k in config::KEYS {
                cmd.env_remove(format!("{}{}", config::ENV_PREFIX, k.to_uppercase()));
            }
            running.push((dir, cmd.spawn().context("spawning a worker")?));
        }
        if running.is_empty() {
            break;
        }
        let (dir, mut child) = running.remove(0);
        if !child.wait().context("waiting for a worker")?.success() {
            failed.push(dir.display().to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(anyhow!("runs failed: {}", failed.join(", "))))
    }
}

struct TrajectoryDump<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> TrainObserver for TrajectoryDump<W> {
    fn on_step(&mut self, record: &StepRecord) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{}", record.csv_row()) {
                self.error = Some(e);
            }
        }
    }
}

fn checkpoint_dirs(roots: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for root in roots {
        if !root.exists() {
            return Err(CliError::Usage(format!("{} does not exist", root.display())));
        }
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.context("walking run directories")?;
            if entry.file_name() == artifacts::CHECKPOINT {
                dirs.push(entry.path().parent().expect("file has a parent").to_path_buf());
            }
        }
    }
    if dirs.is_empty() {
        return Err(CliError::Runtime(anyhow!("no {} found", artifacts::CHECKPOINT)));
    }
    Ok(dirs)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    for dir in checkpoint_dirs(&args.runs)? {
        let ckpt = artifacts::read_checkpoint(&dir.join(artifacts::CHECKPOINT))?;
        let episodes = args.episodes.unwrap_or(ckpt.config.eval_episodes);
        let seed = args.seed.unwrap_or(ckpt.config.seed);
        let summary = if args.trajectories {
            let n_agents = ckpt.environment().map_err(anyhow::Error::from)?.n_agents();
            let path = dir.join(artifacts::TRAJECTORIES);
            let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut out = std::io::BufWriter::new(file);
            writeln!(out, "# manifest={}", artifacts::MANIFEST).context("writing trajectories")?;
            writeln!(out, "{}", StepRecord::csv_header(n_agents)).context("writing trajectories")?;
            let mut dump = TrajectoryDump { out, error: None };
            let s = evaluate(&ckpt, episodes, seed, &mut dump).map_err(anyhow::Error::from)?;
            if let Some(e) = dump.error {
                return Err(CliError::Runtime(anyhow!(e).context("writing trajectories")));
            }
            dump.out.flush().context("writing trajectories")?;
            s
        } else {
            evaluate(&ckpt, episodes, seed, &mut ()).map_err(anyhow::Error::from)?
        };
        artifacts::write_summary(&dir, &summary)?;
        println!("{}: mean_reward={:.3} std_reward={:.3}", dir.display(), summary.mean_reward, summary.std_reward);
    }
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    if !args.input.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", args.input.display())));
    }
    let (summaries, runs) = report::collect(&args.input)?;
    let rep = report::build(&summaries, &runs).map_err(|e| CliError::Runtime(e.into()))?;
    for path in rep.write(&args.out, &args.input.display().to_string())? {
        println!("{}", path.display());
    }
    Ok(())
}
