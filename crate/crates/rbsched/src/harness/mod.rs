//! Experiment harness: seeded train/evaluate/baseline runs, incremental
//! metrics CSV logging, model save/load, and histogram export.

pub mod cli;
mod config;
mod histogram;

pub use cli::cli_main;
pub use config::RunConfig;
pub use histogram::{
    export_cumulative_histogram, HistogramRow, HistogramTable, MetricName,
};

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::baselines::{
    schedule_ds, schedule_mmf, schedule_mt, schedule_random, Allocation, SchedulerKind,
};
use crate::ddpg::{postprocess, DdpgAgent, ModelFile, PendingExperience};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::metrics::{step_metrics, StepMetrics};
use crate::rng::{derive_seed, stream_rng, STREAM_AGENT_EXPLORE, STREAM_EPISODE};

pub const METRICS_CSV_HEADER: &str =
    "episode,scheduler,sum_reward,sum_capacity,sum_timeouts,sum_ev_timeouts,sum_packet_rate";
pub const TRACE_CSV_HEADER: &str =
    "episode,step,capacity,timeouts,ev_timeouts,packet_rate,reward";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Train,
    Evaluate,
    Baseline,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Trained model to evaluate (required in `Evaluate` mode).
    pub model_path: Option<PathBuf>,
    /// Also write a per-step debug trace CSV.
    pub trace: bool,
}

/// Per-episode sums of the step metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub scheduler: SchedulerKind,
    pub sum_reward: f64,
    pub sum_capacity: f64,
    pub sum_timeouts: u64,
    pub sum_ev_timeouts: u64,
    pub sum_packet_rate: f64,
}

impl EpisodeRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.episode,
            self.scheduler,
            self.sum_reward,
            self.sum_capacity,
            self.sum_timeouts,
            self.sum_ev_timeouts,
            self.sum_packet_rate
        )
    }

    pub fn from_csv_row(line: &str) -> Result<EpisodeRecord> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(Error::Usage(format!(
                "metrics row has {} fields, expected 7: '{line}'",
                parts.len()
            )));
        }
        let bad = |what: &str| Error::Usage(format!("bad {what} in metrics row '{line}'"));
        Ok(EpisodeRecord {
            episode: parts[0].parse().map_err(|_| bad("episode"))?,
            scheduler: SchedulerKind::from_str(parts[1])?,
            sum_reward: parts[2].parse().map_err(|_| bad("sum_reward"))?,
            sum_capacity: parts[3].parse().map_err(|_| bad("sum_capacity"))?,
            sum_timeouts: parts[4].parse().map_err(|_| bad("sum_timeouts"))?,
            sum_ev_timeouts: parts[5].parse().map_err(|_| bad("sum_ev_timeouts"))?,
            sum_packet_rate: parts[6].parse().map_err(|_| bad("sum_packet_rate"))?,
        })
    }
}

/// Read a metrics CSV written by [`run`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let text = fs::read_to_string(path).map_err(|source| Error::ReadFile {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == METRICS_CSV_HEADER => {}
        _ => {
            return Err(Error::Usage(format!(
                "{} is not a metrics CSV",
                path.display()
            )))
        }
    }
    lines.map(EpisodeRecord::from_csv_row).collect()
}

enum Policy {
    Agent(Box<DdpgAgent>, bool),
    Fixed(SchedulerKind, Box<ChaCha8Rng>),
}

/// Execute a full run. Every episode resets the environment from a seed
/// derived from the master seed and the episode index; each step runs
/// job generation, mobility, channel update, observation, the scheduler
/// decision, allocation, queue advancement, and metric computation (in
/// training, also one buffer push and at most one gradient step).
///
/// Writes `metrics.csv` (and `trace.csv` with [`RunOptions::trace`])
/// into the output directory; training additionally saves `model.json`.
/// Returns the per-episode records.
pub fn run(config: &RunConfig, mode: RunMode, options: &RunOptions) -> Result<Vec<EpisodeRecord>> {
    config.env.validate()?;
    config.ddpg.validate()?;

    let scheduler = match mode {
        RunMode::Train | RunMode::Evaluate => SchedulerKind::Ddpg,
        RunMode::Baseline => {
            if config.scheduler == SchedulerKind::Ddpg {
                return Err(Error::Config(
                    "the ddpg scheduler runs via the train/eval modes, not baseline".into(),
                ));
            }
            config.scheduler
        }
    };

    let mut policy = match mode {
        RunMode::Train => {
            let mut ddpg = config.ddpg.clone();
            ddpg.total_episodes = config.episodes;
            Policy::Agent(
                Box::new(DdpgAgent::new(ddpg, config.env.num_users, config.seed)?),
                true,
            )
        }
        RunMode::Evaluate => {
            let path = options
                .model_path
                .as_ref()
                .ok_or_else(|| Error::Usage("evaluation requires --model <file>".into()))?;
            let file = ModelFile::load(path)?;
            if file.num_users != config.env.num_users {
                return Err(Error::Config(format!(
                    "model was trained for {} users, config has {}",
                    file.num_users, config.env.num_users
                )));
            }
            Policy::Agent(Box::new(DdpgAgent::from_model_file(file, config.seed)?), false)
        }
        RunMode::Baseline => Policy::Fixed(
            scheduler,
            Box::new(stream_rng(config.seed, STREAM_AGENT_EXPLORE, 0)),
        ),
    };

    fs::create_dir_all(&config.output_dir)?;
    let metrics_path = config.output_dir.join("metrics.csv");
    let mut metrics_file = BufWriter::new(File::create(&metrics_path)?);
    writeln!(metrics_file, "{METRICS_CSV_HEADER}")?;
    let mut trace_file = if options.trace {
        let mut f = BufWriter::new(File::create(config.output_dir.join("trace.csv"))?);
        writeln!(f, "{TRACE_CSV_HEADER}")?;
        Some(f)
    } else {
        None
    };

    let mut records = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let env_seed = derive_seed(config.seed, STREAM_EPISODE, episode as u64);
        let mut env = Env::reset(config.env.clone(), env_seed)?;
        let mut sums = EpisodeRecord {
            episode,
            scheduler,
            sum_reward: 0.0,
            sum_capacity: 0.0,
            sum_timeouts: 0,
            sum_ev_timeouts: 0,
            sum_packet_rate: 0.0,
        };

        for step in 0..config.env.steps_per_episode {
            let m = run_step(&mut env, &mut policy, config, episode)?;
            sums.sum_reward += m.reward;
            sums.sum_capacity += m.sum_capacity;
            sums.sum_timeouts += m.sum_timeouts;
            sums.sum_ev_timeouts += m.ev_timeouts;
            sums.sum_packet_rate += m.sum_packet_rate;
            if let Some(f) = trace_file.as_mut() {
                writeln!(
                    f,
                    "{episode},{step},{},{},{},{},{}",
                    m.sum_capacity, m.sum_timeouts, m.ev_timeouts, m.sum_packet_rate, m.reward
                )?;
            }
        }

        writeln!(metrics_file, "{}", sums.to_csv_row())?;
        records.push(sums);
    }
    metrics_file.flush()?;
    if let Some(mut f) = trace_file {
        f.flush()?;
    }

    if let Policy::Agent(agent, true) = &policy {
        let model = agent.to_model_file(config.seed, config.content_hash());
        model.save(&config.output_dir.join("model.json"))?;
    }

    Ok(records)
}

fn run_step(
    env: &mut Env,
    policy: &mut Policy,
    config: &RunConfig,
    episode: usize,
) -> Result<StepMetrics> {
    env.generate_jobs();
    env.step_mobility();
    env.update_channel();
    let obs = env.observe();

    let (alloc, pending): (Allocation, Option<PendingExperience>) = match policy {
        Policy::Agent(agent, true) => {
            let (alloc, pending) = agent.decide_train(&obs, episode);
            (alloc, Some(pending))
        }
        Policy::Agent(agent, false) => (agent.decide_eval(&obs), None),
        Policy::Fixed(kind, rng) => {
            let alloc = match kind {
                SchedulerKind::MaxThroughput => schedule_mt(&obs),
                SchedulerKind::MaxMinFair => schedule_mmf(&obs),
                SchedulerKind::DelaySensitive => schedule_ds(&obs, config.ds_prio_weight),
                SchedulerKind::Random => {
                    let action = schedule_random(&obs, rng.as_mut());
                    postprocess(&action, &obs.demands(), obs.num_resources, true)
                }
                SchedulerKind::Ddpg => unreachable!("rejected before the run starts"),
            };
            (alloc, None)
        }
    };

    env.apply_allocation(&alloc)?;
    let failed = env.advance_time();
    let m = step_metrics(
        &obs,
        &alloc,
        &failed,
        &env.users,
        config.env.snr_db,
        config.env.capacity_mode,
        config.env.log_base,
        &config.weights,
    );

    if let (Policy::Agent(agent, true), Some(pending)) = (policy, pending) {
        agent.record_and_learn(pending, m.reward);
    }
    Ok(m)
}

/// Run `count` fully independent copies of a run concurrently, one per
/// seed starting at the configured one, each writing to its own
/// `seed-<n>` subdirectory.
pub fn run_parallel_seeds(
    config: &RunConfig,
    mode: RunMode,
    options: &RunOptions,
    count: usize,
) -> Result<()> {
    if count == 0 {
        return Err(Error::Usage("--parallel-seeds needs at least 1".into()));
    }
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for i in 0..count {
            let mut sub = config.clone();
            sub.seed = config.seed + i as u64;
            sub.output_dir = config.output_dir.join(format!("seed-{}", sub.seed));
            let options = options.clone();
            handles.push(scope.spawn(move || run(&sub, mode, &options).map(|_| ())));
        }
        for handle in handles {
            handle
                .join()
                .map_err(|_| Error::Config("a parallel run panicked".into()))??;
        }
        Ok(())
    })
}
