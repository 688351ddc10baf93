//! Discrete-time simulation of a single cell: users moving on a unit
//! grid, a Rayleigh-fading downlink with distance path loss, and a job
//! queue served in integer resource blocks.
//!
//! The harness drives one step in a fixed order: [`Env::generate_jobs`],
//! [`Env::step_mobility`], [`Env::update_channel`], [`Env::observe`],
//! scheduler decision, [`Env::apply_allocation`], [`Env::advance_time`].
//! All randomness comes from three named streams owned by the instance,
//! so a seed fully determines a trajectory.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

use crate::baselines::Allocation;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_ENV_CHANNEL, STREAM_ENV_JOBS, STREAM_ENV_MOBILITY};

/// Traffic classes. Each class fixes a job time-to-timeout and a maximum
/// job size; the emergency-vehicle class additionally carries the extra
/// timeout penalty in the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProfileLabel {
    Normal,
    HighPacketRate,
    LowLatency,
    EmergencyVehicle,
}

impl ProfileLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileLabel::Normal => "normal",
            ProfileLabel::HighPacketRate => "high_packet_rate",
            ProfileLabel::LowLatency => "low_latency",
            ProfileLabel::EmergencyVehicle => "emergency_vehicle",
        }
    }
}

impl fmt::Display for ProfileLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(ProfileLabel::Normal),
            "high_packet_rate" => Ok(ProfileLabel::HighPacketRate),
            "low_latency" => Ok(ProfileLabel::LowLatency),
            "emergency_vehicle" => Ok(ProfileLabel::EmergencyVehicle),
            other => Err(Error::Config(format!("unknown profile label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserProfile {
    pub label: ProfileLabel,
    /// Initial time-to-timeout of new jobs, in simulation steps.
    pub delay_init: u64,
    /// Upper bound of the uniform job-size draw, in resource blocks.
    pub max_job_size: u64,
    pub is_ev: bool,
}

impl UserProfile {
    pub fn new(label: ProfileLabel, delay_init: u64, max_job_size: u64) -> Result<Self> {
        if delay_init == 0 || max_job_size == 0 {
            return Err(Error::Config(
                "profile delay_init and max_job_size must be at least 1".into(),
            ));
        }
        Ok(Self {
            label,
            delay_init,
            max_job_size,
            is_ev: label == ProfileLabel::EmergencyVehicle,
        })
    }

    /// The standard parameters of each traffic class.
    pub fn from_label(label: ProfileLabel) -> Self {
        let (delay_init, max_job_size) = match label {
            ProfileLabel::Normal => (20, 30),
            ProfileLabel::HighPacketRate => (20, 40),
            ProfileLabel::LowLatency => (2, 8),
            ProfileLabel::EmergencyVehicle => (1, 16),
        };
        Self::new(label, delay_init, max_job_size).expect("table values are positive")
    }
}

/// A transmission request. `remaining` counts blocks still to serve,
/// `ttl` the steps left before the job is dropped as failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub id: u64,
    pub user: usize,
    pub remaining: u64,
    pub ttl: u64,
    pub initial_size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub fn left(self) -> Heading {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    pub fn right(self) -> Heading {
        match self {
            Heading::North => Heading::East,
            Heading::East => Heading::South,
            Heading::South => Heading::West,
            Heading::West => Heading::North,
        }
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::North => (0, 1),
            Heading::East => (1, 0),
            Heading::South => (0, -1),
            Heading::West => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Moving,
    Stopped,
}

/// Per-step mobility decision. `Persist` repeats the previous action
/// (keep driving straight, or stay stopped); the other three are chosen
/// uniformly when not persisting. Turning resumes movement from a stop;
/// heading is retained while stopped so turns stay defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilityAction {
    Persist,
    TurnLeft,
    TurnRight,
    Stop,
}

/// Draw one mobility decision.
pub fn draw_mobility_action(persist_prob: f64, rng: &mut impl Rng) -> MobilityAction {
    if rng.random::<f64>() < persist_prob {
        MobilityAction::Persist
    } else {
        match rng.random_range(0..3u8) {
            0 => MobilityAction::TurnLeft,
            1 => MobilityAction::TurnRight,
            _ => MobilityAction::Stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub profile: UserProfile,
    pub position: (i64, i64),
    pub heading: Heading,
    pub motion: Motion,
    /// Rayleigh fading amplitude of the current step.
    pub fading_amp: f64,
    /// Distance path loss, in (0, 1].
    pub path_loss: f64,
    /// `fading_amp * path_loss`; scales the per-user SNR.
    pub power_fading: f64,
    /// Blocks served to this user since the episode reset.
    pub lifetime_scheduled: u64,
    /// Blocks requested (job creation sizes) since the episode reset.
    pub lifetime_requested: u64,
    /// Blocks lost to job timeouts since the episode reset.
    pub lifetime_timeout_blocks: u64,
}

impl UserState {
    pub fn distance(&self) -> f64 {
        let (x, y) = self.position;
        ((x * x + y * y) as f64).sqrt()
    }

    /// Ratio of lifetime scheduled to lifetime requested blocks;
    /// 0 before the first request.
    pub fn packet_rate(&self) -> f64 {
        if self.lifetime_requested == 0 {
            0.0
        } else {
            self.lifetime_scheduled as f64 / self.lifetime_requested as f64
        }
    }
}

/// Which users enter the sum-capacity metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityMode {
    /// Per-user capacity weighted by the blocks actually granted.
    PerBlock,
    /// Unweighted, but only over users that received blocks.
    PerServedUser,
    /// Unweighted over all users, independent of the allocation.
    Literal,
}

impl CapacityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CapacityMode::PerBlock => "per_block",
            CapacityMode::PerServedUser => "per_served_user",
            CapacityMode::Literal => "literal",
        }
    }
}

impl FromStr for CapacityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_block" => Ok(CapacityMode::PerBlock),
            "per_served_user" => Ok(CapacityMode::PerServedUser),
            "literal" => Ok(CapacityMode::Literal),
            other => Err(Error::Config(format!("unknown capacity mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    Log2,
    Ln,
}

impl LogBase {
    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Log2 => "log2",
            LogBase::Ln => "ln",
        }
    }

    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Log2 => x.log2(),
            LogBase::Ln => x.ln(),
        }
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log2" => Ok(LogBase::Log2),
            "ln" => Ok(LogBase::Ln),
            other => Err(Error::Config(format!("unknown log base '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Resource blocks available per step (S).
    pub num_resources: usize,
    pub num_users: usize,
    /// One profile per user.
    pub profiles: Vec<UserProfile>,
    /// Per-user probability of spawning a job each step.
    pub p_job: f64,
    /// Fixed TX SNR in dB, shared by all users.
    pub snr_db: f64,
    /// Scale of the Rayleigh amplitude distribution.
    pub rayleigh_scale: f64,
    /// Users start uniformly on the integer square
    /// `[-placement_halfwidth, +placement_halfwidth]^2`.
    pub placement_halfwidth: f64,
    pub steps_per_episode: usize,
    /// Probability of repeating the previous mobility action.
    pub persist_direction_prob: f64,
    pub capacity_mode: CapacityMode,
    pub log_base: LogBase,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let mut profiles = vec![UserProfile::from_label(ProfileLabel::Normal); 5];
        profiles.extend(vec![
            UserProfile::from_label(ProfileLabel::HighPacketRate);
            2
        ]);
        profiles.extend(vec![UserProfile::from_label(ProfileLabel::LowLatency); 2]);
        profiles.push(UserProfile::from_label(ProfileLabel::EmergencyVehicle));
        Self {
            num_resources: 16,
            num_users: 10,
            profiles,
            p_job: 0.2,
            snr_db: 13.0,
            rayleigh_scale: 1.0,
            placement_halfwidth: 10.0,
            steps_per_episode: 50,
            persist_direction_prob: 0.98,
            capacity_mode: CapacityMode::PerBlock,
            log_base: LogBase::Log2,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::Config("num_users must be at least 1".into()));
        }
        if self.num_resources == 0 {
            return Err(Error::Config("num_resources must be at least 1".into()));
        }
        if self.profiles.len() != self.num_users {
            return Err(Error::Config(format!(
                "expected {} profiles, got {}",
                self.num_users,
                self.profiles.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.p_job) {
            return Err(Error::Config("p_job must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.persist_direction_prob) {
            return Err(Error::Config(
                "persist_direction_prob must lie in [0, 1]".into(),
            ));
        }
        if !(self.rayleigh_scale > 0.0) {
            return Err(Error::Config("rayleigh_scale must be positive".into()));
        }
        if !(self.placement_halfwidth >= 0.0) {
            return Err(Error::Config(
                "placement_halfwidth must be non-negative".into(),
            ));
        }
        for p in &self.profiles {
            if p.delay_init == 0 || p.max_job_size == 0 {
                return Err(Error::Config("profile parameters must be positive".into()));
            }
            if p.is_ev != (p.label == ProfileLabel::EmergencyVehicle) {
                return Err(Error::Config("is_ev must match the profile label".into()));
            }
        }
        Ok(())
    }
}

/// Distance path loss `min(1, 1/d)`; 1 at the base station.
pub fn path_loss(distance: f64) -> f64 {
    debug_assert!(distance >= 0.0);
    if distance <= 1.0 {
        1.0
    } else {
        1.0 / distance
    }
}

/// One Rayleigh-distributed amplitude via inverse-CDF sampling:
/// `F(x) = 1 - exp(-x^2 / (2 scale^2))`.
pub fn rayleigh_amplitude(scale: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    scale * (-2.0 * (1.0 - u).ln()).sqrt()
}

/// Per-user slice of an [`Observation`].
#[derive(Debug, Clone, PartialEq)]
pub struct UserView {
    pub power_fading: f64,
    /// Sum of `remaining` over this user's queued jobs.
    pub total_request: u64,
    /// 1 / (smallest ttl among this user's jobs); 0 with an empty queue.
    pub inv_min_ttl: f64,
    pub packet_rate: f64,
    /// Cumulative blocks this user has lost to timeouts.
    pub timeout_blocks: u64,
    /// The user's queued jobs in fill order (ascending ttl, then
    /// creation order) — the order grants are consumed in.
    pub jobs: Vec<JobView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JobView {
    pub remaining: u64,
    pub ttl: u64,
}

impl UserView {
    pub fn min_ttl(&self) -> Option<u64> {
        self.jobs.first().map(|j| j.ttl)
    }
}

/// Snapshot handed to schedulers at the decision point of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub num_resources: usize,
    pub users: Vec<UserView>,
}

impl Observation {
    /// Flat network input: `(power_fading, total_request, inv_min_ttl)`
    /// per user, concatenated in user order.
    pub fn state_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.users.len());
        for u in &self.users {
            v.push(u.power_fading);
            v.push(u.total_request as f64);
            v.push(u.inv_min_ttl);
        }
        v
    }

    pub fn demands(&self) -> Vec<u64> {
        self.users.iter().map(|u| u.total_request).collect()
    }
}

/// The simulation world. Create one per episode with [`Env::reset`].
#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    pub time: u64,
    pub users: Vec<UserState>,
    pub queue: Vec<Job>,
    next_job_id: u64,
    mobility_rng: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
    jobs_rng: ChaCha8Rng,
}

impl Env {
    /// Start a fresh episode: users placed uniformly on the integer
    /// square around the base station, random headings, empty queue,
    /// all lifetime counters zero, and an initial channel draw.
    pub fn reset(config: EnvConfig, seed: u64) -> Result<Env> {
        config.validate()?;
        let mut mobility_rng = stream_rng(seed, STREAM_ENV_MOBILITY, 0);
        let channel_rng = stream_rng(seed, STREAM_ENV_CHANNEL, 0);
        let jobs_rng = stream_rng(seed, STREAM_ENV_JOBS, 0);

        let hw = config.placement_halfwidth.floor() as i64;
        let users = config
            .profiles
            .iter()
            .map(|profile| {
                let position = (
                    mobility_rng.random_range(-hw..=hw),
                    mobility_rng.random_range(-hw..=hw),
                );
                let heading = match mobility_rng.random_range(0..4u8) {
                    0 => Heading::North,
                    1 => Heading::East,
                    2 => Heading::South,
                    _ => Heading::West,
                };
                UserState {
                    profile: *profile,
                    position,
                    heading,
                    motion: Motion::Moving,
                    fading_amp: 0.0,
                    path_loss: 1.0,
                    power_fading: 0.0,
                    lifetime_scheduled: 0,
                    lifetime_requested: 0,
                    lifetime_timeout_blocks: 0,
                }
            })
            .collect();

        let mut env = Env {
            config,
            time: 0,
            users,
            queue: Vec::new(),
            next_job_id: 0,
            mobility_rng,
            channel_rng,
            jobs_rng,
        };
        env.update_channel();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Move every user one step of the persistence walk.
    pub fn step_mobility(&mut self) {
        let p = self.config.persist_direction_prob;
        for user in &mut self.users {
            let action = draw_mobility_action(p, &mut self.mobility_rng);
            match action {
                MobilityAction::Persist => {}
                MobilityAction::TurnLeft => {
                    user.heading = user.heading.left();
                    user.motion = Motion::Moving;
                }
                MobilityAction::TurnRight => {
                    user.heading = user.heading.right();
                    user.motion = Motion::Moving;
                }
                MobilityAction::Stop => user.motion = Motion::Stopped,
            }
            if user.motion == Motion::Moving {
                let (dx, dy) = user.heading.delta();
                user.position.0 += dx;
                user.position.1 += dy;
            }
        }
    }

    /// Redraw every user's fading amplitude and recompute the power
    /// fading factor from the current distance (block fading: one
    /// independent draw per user per step).
    pub fn update_channel(&mut self) {
        for user in &mut self.users {
            user.fading_amp = rayleigh_amplitude(self.config.rayleigh_scale, &mut self.channel_rng);
            user.path_loss = path_loss(user.distance());
            user.power_fading = user.fading_amp * user.path_loss;
        }
    }

    /// Spawn at most one job per user with probability `p_job`; sizes
    /// are uniform on `{1, ..., max_job_size}` and the ttl starts at the
    /// profile's delay. Returns the newly created jobs.
    pub fn generate_jobs(&mut self) -> Vec<Job> {
        let mut new_jobs = Vec::new();
        for (u, user) in self.users.iter_mut().enumerate() {
            if self.jobs_rng.random::<f64>() < self.config.p_job {
                let size = self.jobs_rng.random_range(1..=user.profile.max_job_size);
                let job = Job {
                    id: self.next_job_id,
                    user: u,
                    remaining: size,
                    ttl: user.profile.delay_init,
                    initial_size: size,
                };
                self.next_job_id += 1;
                user.lifetime_requested += size;
                self.queue.push(job.clone());
                new_jobs.push(job);
            }
        }
        new_jobs
    }

    /// Consume an integer allocation: each user's grant is fed to that
    /// user's jobs in fill order (ascending ttl, then creation order),
    /// partial service allowed. The grant must fit both the resource
    /// budget and each user's outstanding demand.
    pub fn apply_allocation(&mut self, alloc: &Allocation) -> Result<()> {
        if alloc.blocks.len() != self.users.len() {
            return Err(Error::Contract(format!(
                "allocation covers {} users, environment has {}",
                alloc.blocks.len(),
                self.users.len()
            )));
        }
        if alloc.total() > self.config.num_resources as u64 {
            return Err(Error::Contract(format!(
                "allocation grants {} blocks, only {} exist",
                alloc.total(),
                self.config.num_resources
            )));
        }
        for (u, &grant) in alloc.blocks.iter().enumerate() {
            if grant == 0 {
                continue;
            }
            let demand: u64 = self
                .queue
                .iter()
                .filter(|j| j.user == u)
                .map(|j| j.remaining)
                .sum();
            if grant > demand {
                return Err(Error::Contract(format!(
                    "user {u} granted {grant} blocks against demand {demand}"
                )));
            }
            let mut order: Vec<usize> = (0..self.queue.len())
                .filter(|&i| self.queue[i].user == u)
                .collect();
            order.sort_by_key(|&i| (self.queue[i].ttl, self.queue[i].id));
            let mut left = grant;
            for i in order {
                if left == 0 {
                    break;
                }
                let take = left.min(self.queue[i].remaining);
                self.queue[i].remaining -= take;
                left -= take;
            }
            debug_assert_eq!(left, 0, "grant exceeded consumable demand");
            self.users[u].lifetime_scheduled += grant;
        }
        Ok(())
    }

    /// Close the step: drop completed jobs, decrement every ttl, and
    /// remove jobs that ran out of time with demand left. Returns the
    /// failed jobs; their remaining blocks are booked against the
    /// owners' timeout counters.
    pub fn advance_time(&mut self) -> Vec<Job> {
        self.queue.retain(|j| j.remaining > 0);
        for job in &mut self.queue {
            job.ttl -= 1;
        }
        let (failed, live): (Vec<Job>, Vec<Job>) =
            self.queue.drain(..).partition(|j| j.ttl == 0);
        self.queue = live;
        for job in &failed {
            self.users[job.user].lifetime_timeout_blocks += job.remaining;
        }
        self.time += 1;
        failed
    }

    /// Snapshot the decision-relevant state.
    pub fn observe(&self) -> Observation {
        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(u, user)| {
                let mut jobs: Vec<(u64, u64, u64)> = self
                    .queue
                    .iter()
                    .filter(|j| j.user == u)
                    .map(|j| (j.ttl, j.id, j.remaining))
                    .collect();
                jobs.sort_unstable();
                let total_request = jobs.iter().map(|&(_, _, r)| r).sum();
                let inv_min_ttl = jobs
                    .first()
                    .map(|&(ttl, _, _)| 1.0 / ttl as f64)
                    .unwrap_or(0.0);
                UserView {
                    power_fading: user.power_fading,
                    total_request,
                    inv_min_ttl,
                    packet_rate: user.packet_rate(),
                    timeout_blocks: user.lifetime_timeout_blocks,
                    jobs: jobs
                        .into_iter()
                        .map(|(ttl, _, remaining)| JobView { remaining, ttl })
                        .collect(),
                }
            })
            .collect();
        Observation {
            num_resources: self.config.num_resources,
            users,
        }
    }

    /// Blocks still queued for one user.
    pub fn user_demand(&self, u: usize) -> u64 {
        self.queue
            .iter()
            .filter(|j| j.user == u)
            .map(|j| j.remaining)
            .sum()
    }
}
