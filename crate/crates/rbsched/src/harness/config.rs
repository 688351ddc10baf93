//! Run configuration and its on-disk TOML schema.
//!
//! The file mirrors [`RunConfig`] field-for-field; unknown keys are a
//! hard error so typos cannot silently fall back to defaults. Profiles
//! are written as class labels; their delay and size parameters come
//! from the built-in profile table.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::SchedulerKind;
use crate::ddpg::DdpgConfig;
use crate::env::{CapacityMode, EnvConfig, LogBase, ProfileLabel, UserProfile};
use crate::error::{Error, Result};
use crate::metrics::RewardWeights;
use crate::rng::fnv1a64;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub ddpg: DdpgConfig,
    pub weights: RewardWeights,
    pub scheduler: SchedulerKind,
    pub episodes: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Blend between channel priority and timeout urgency in the
    /// delay-sensitive scheduler.
    pub ds_prio_weight: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            ddpg: DdpgConfig::default(),
            weights: RewardWeights::default(),
            scheduler: SchedulerKind::Ddpg,
            episodes: 10_000,
            seed: 1,
            output_dir: PathBuf::from("out"),
            ds_prio_weight: 0.5,
        }
    }
}

impl RunConfig {
    pub fn parse_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::ReadFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        raw.into_config()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&RawConfig::from_config(self))
            .expect("config serializes to TOML")
    }

    /// Stable hash of everything that shapes a run's results (the
    /// output directory is deliberately excluded).
    pub fn content_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        format!("{:016x}", fnv1a64(canonical.to_toml_string().as_bytes()))
    }
}

fn default_run() -> RunConfig {
    RunConfig::default()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    episodes: usize,
    seed: u64,
    scheduler: String,
    output_dir: String,
    ds_prio_weight: f64,
    env: RawEnv,
    ddpg: RawDdpg,
    weights: RawWeights,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig::from_config(&default_run())
    }
}

impl RawConfig {
    fn from_config(config: &RunConfig) -> Self {
        Self {
            episodes: config.episodes,
            seed: config.seed,
            scheduler: config.scheduler.to_string(),
            output_dir: config.output_dir.to_string_lossy().into_owned(),
            ds_prio_weight: config.ds_prio_weight,
            env: RawEnv::from_env(&config.env),
            ddpg: RawDdpg::from_ddpg(&config.ddpg),
            weights: RawWeights {
                w_capacity: config.weights.w_capacity,
                w_timeouts: config.weights.w_timeouts,
                w_ev_timeouts: config.weights.w_ev_timeouts,
                w_packet_rate: config.weights.w_packet_rate,
            },
        }
    }

    fn into_config(self) -> Result<RunConfig> {
        Ok(RunConfig {
            episodes: self.episodes,
            seed: self.seed,
            scheduler: SchedulerKind::from_str(&self.scheduler)?,
            output_dir: PathBuf::from(self.output_dir),
            ds_prio_weight: self.ds_prio_weight,
            env: self.env.into_env()?,
            ddpg: self.ddpg.into_ddpg(self.episodes),
            weights: RewardWeights {
                w_capacity: self.weights.w_capacity,
                w_timeouts: self.weights.w_timeouts,
                w_ev_timeouts: self.weights.w_ev_timeouts,
                w_packet_rate: self.weights.w_packet_rate,
            },
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEnv {
    num_resources: usize,
    num_users: usize,
    profiles: Vec<String>,
    p_job: f64,
    snr_db: f64,
    rayleigh_scale: f64,
    placement_halfwidth: f64,
    steps_per_episode: usize,
    persist_direction_prob: f64,
    capacity_mode: String,
    log_base: String,
}

impl Default for RawEnv {
    fn default() -> Self {
        RawEnv::from_env(&EnvConfig::default())
    }
}

impl RawEnv {
    fn from_env(env: &EnvConfig) -> Self {
        Self {
            num_resources: env.num_resources,
            num_users: env.num_users,
            profiles: env.profiles.iter().map(|p| p.label.to_string()).collect(),
            p_job: env.p_job,
            snr_db: env.snr_db,
            rayleigh_scale: env.rayleigh_scale,
            placement_halfwidth: env.placement_halfwidth,
            steps_per_episode: env.steps_per_episode,
            persist_direction_prob: env.persist_direction_prob,
            capacity_mode: env.capacity_mode.as_str().to_string(),
            log_base: env.log_base.as_str().to_string(),
        }
    }

    fn into_env(self) -> Result<EnvConfig> {
        let profiles = self
            .profiles
            .iter()
            .map(|label| Ok(UserProfile::from_label(ProfileLabel::from_str(label)?)))
            .collect::<Result<Vec<_>>>()?;
        let env = EnvConfig {
            num_resources: self.num_resources,
            num_users: self.num_users,
            profiles,
            p_job: self.p_job,
            snr_db: self.snr_db,
            rayleigh_scale: self.rayleigh_scale,
            placement_halfwidth: self.placement_halfwidth,
            steps_per_episode: self.steps_per_episode,
            persist_direction_prob: self.persist_direction_prob,
            capacity_mode: CapacityMode::from_str(&self.capacity_mode)?,
            log_base: LogBase::from_str(&self.log_base)?,
        };
        env.validate()?;
        Ok(env)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDdpg {
    actor_dims: Vec<usize>,
    critic_dims: Vec<usize>,
    actor_lr: f64,
    critic_lr: f64,
    batch_size: usize,
    buffer_capacity: usize,
    warmup_experiences: usize,
    sigma_e_init: f64,
    sigma_decay_fraction: f64,
    alpha: f64,
    priority_floor: f64,
}

impl Default for RawDdpg {
    fn default() -> Self {
        RawDdpg::from_ddpg(&DdpgConfig::default())
    }
}

impl RawDdpg {
    fn from_ddpg(ddpg: &DdpgConfig) -> Self {
        Self {
            actor_dims: ddpg.actor_dims.clone(),
            critic_dims: ddpg.critic_dims.clone(),
            actor_lr: ddpg.actor_lr,
            critic_lr: ddpg.critic_lr,
            batch_size: ddpg.batch_size,
            buffer_capacity: ddpg.buffer_capacity,
            warmup_experiences: ddpg.warmup_experiences,
            sigma_e_init: ddpg.sigma_e_init,
            sigma_decay_fraction: ddpg.sigma_decay_fraction,
            alpha: ddpg.alpha,
            priority_floor: ddpg.priority_floor,
        }
    }

    /// The noise decay horizon always spans the configured run length,
    /// so `total_episodes` is not a file key.
    fn into_ddpg(self, episodes: usize) -> DdpgConfig {
        DdpgConfig {
            actor_dims: self.actor_dims,
            critic_dims: self.critic_dims,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            warmup_experiences: self.warmup_experiences,
            sigma_e_init: self.sigma_e_init,
            sigma_decay_fraction: self.sigma_decay_fraction,
            alpha: self.alpha,
            priority_floor: self.priority_floor,
            total_episodes: episodes,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawWeights {
    w_capacity: f64,
    w_timeouts: f64,
    w_ev_timeouts: f64,
    w_packet_rate: f64,
}

impl Default for RawWeights {
    fn default() -> Self {
        let w = RewardWeights::default();
        Self {
            w_capacity: w.w_capacity,
            w_timeouts: w.w_timeouts,
            w_ev_timeouts: w.w_ev_timeouts,
            w_packet_rate: w.w_packet_rate,
        }
    }
}
