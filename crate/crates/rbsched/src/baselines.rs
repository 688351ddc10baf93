//! Model-based comparison schedulers.
//!
//! All of them map an [`Observation`] to an integer [`Allocation`]:
//!
//! * max throughput — fill users by descending channel quality;
//! * max-min fair — one-block water filling across requesting users;
//! * delay sensitive — score users by relative channel quality and
//!   timeout urgency, round the resulting shares, and withhold blocks
//!   from jobs that can no longer finish before their timeout;
//! * random — a normalized uniform share vector, projected to a feasible
//!   allocation by the shared evaluation post-processing.
//!
//! Ties are always broken by ascending user index.

use rand::Rng;
use std::fmt;
use std::str::FromStr;

use crate::ddpg::{integerize_shares, Action};
use crate::env::Observation;
use crate::error::Error;

/// Integer block grant per user for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub blocks: Vec<u64>,
}

impl Allocation {
    pub fn zeros(num_users: usize) -> Self {
        Self {
            blocks: vec![0; num_users],
        }
    }

    pub fn total(&self) -> u64 {
        self.blocks.iter().sum()
    }

    /// Feasibility against an observation: within the block budget and
    /// each user's outstanding demand.
    pub fn is_feasible(&self, obs: &Observation) -> bool {
        self.blocks.len() == obs.users.len()
            && self.total() <= obs.num_resources as u64
            && self
                .blocks
                .iter()
                .zip(&obs.users)
                .all(|(&b, u)| b <= u.total_request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    MaxThroughput,
    MaxMinFair,
    DelaySensitive,
    Random,
    Ddpg,
}

impl SchedulerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::MaxThroughput => "mt",
            SchedulerKind::MaxMinFair => "mmf",
            SchedulerKind::DelaySensitive => "ds",
            SchedulerKind::Random => "random",
            SchedulerKind::Ddpg => "ddpg",
        }
    }

    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::MaxThroughput,
        SchedulerKind::MaxMinFair,
        SchedulerKind::DelaySensitive,
        SchedulerKind::Random,
        SchedulerKind::Ddpg,
    ];
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "mt" => Ok(SchedulerKind::MaxThroughput),
            "mmf" => Ok(SchedulerKind::MaxMinFair),
            "ds" => Ok(SchedulerKind::DelaySensitive),
            "random" => Ok(SchedulerKind::Random),
            "ddpg" => Ok(SchedulerKind::Ddpg),
            other => Err(Error::Usage(format!(
                "unknown scheduler '{other}' (expected mt, mmf, ds, random or ddpg)"
            ))),
        }
    }
}

/// Max throughput: serve users by descending power fading, each up to
/// its full demand, until the budget runs out.
pub fn schedule_mt(obs: &Observation) -> Allocation {
    let mut order: Vec<usize> = (0..obs.users.len()).collect();
    order.sort_by(|&a, &b| {
        obs.users[b]
            .power_fading
            .total_cmp(&obs.users[a].power_fading)
            .then(a.cmp(&b))
    });
    let mut left = obs.num_resources as u64;
    let mut blocks = vec![0u64; obs.users.len()];
    for u in order {
        let grant = obs.users[u].total_request.min(left);
        blocks[u] = grant;
        left -= grant;
        if left == 0 {
            break;
        }
    }
    Allocation { blocks }
}

/// Max-min fair: repeatedly grant one block to the requesting user with
/// the smallest grant so far.
pub fn schedule_mmf(obs: &Observation) -> Allocation {
    let demands = obs.demands();
    let mut blocks = vec![0u64; obs.users.len()];
    let mut left = obs.num_resources as u64;
    while left > 0 {
        let next = (0..blocks.len())
            .filter(|&u| blocks[u] < demands[u])
            .min_by_key(|&u| (blocks[u], u));
        match next {
            Some(u) => {
                blocks[u] += 1;
                left -= 1;
            }
            None => break,
        }
    }
    Allocation { blocks }
}

/// Delay sensitive: combine a channel priority (relative packet rate
/// times relative power fading) with a timeout urgency (accumulated
/// timeout blocks over the most urgent deadline), both normalized over
/// requesting users. The blended score becomes a share of the budget,
/// rounded by the shared largest-remainder rule. During the fill a job
/// that cannot finish before its timeout receives nothing; blocks freed
/// this way go to the next user by score.
pub fn schedule_ds(obs: &Observation, prio_weight: f64) -> Allocation {
    let num_users = obs.users.len();
    let s = obs.num_resources as u64;
    let requesting: Vec<usize> = (0..num_users)
        .filter(|&u| obs.users[u].total_request > 0)
        .collect();
    if requesting.is_empty() {
        return Allocation::zeros(num_users);
    }

    // Normalize to a distribution; degenerate (zero-sum) vectors fall
    // back to uniform so scores stay defined at episode start.
    let normalize = |values: &[f64]| -> Vec<f64> {
        let sum: f64 = values.iter().sum();
        if sum > 0.0 {
            values.iter().map(|v| v / sum).collect()
        } else {
            vec![1.0 / values.len() as f64; values.len()]
        }
    };

    let rho_norm = normalize(
        &requesting
            .iter()
            .map(|&u| obs.users[u].packet_rate)
            .collect::<Vec<_>>(),
    );
    let g_norm = normalize(
        &requesting
            .iter()
            .map(|&u| obs.users[u].power_fading)
            .collect::<Vec<_>>(),
    );
    let channel_prio: Vec<f64> = rho_norm
        .iter()
        .zip(&g_norm)
        .map(|(r, g)| r * g)
        .collect();

    let urgency_raw: Vec<f64> = requesting
        .iter()
        .map(|&u| {
            let min_ttl = obs.users[u].min_ttl().expect("requesting user has jobs");
            obs.users[u].timeout_blocks as f64 / min_ttl as f64
        })
        .collect();

    let channel = normalize(&channel_prio);
    let urgency = normalize(&urgency_raw);
    let combined: Vec<f64> = channel
        .iter()
        .zip(&urgency)
        .map(|(c, l)| prio_weight * c + (1.0 - prio_weight) * l)
        .collect();
    let score = normalize(&combined);

    // Shares over the full user vector, capped at demand, then rounded.
    let mut fractional = vec![0.0; num_users];
    for (k, &u) in requesting.iter().enumerate() {
        fractional[u] = (score[k] * s as f64).min(obs.users[u].total_request as f64);
    }
    let demands = obs.demands();
    let rounded = integerize_shares(&fractional, &demands, obs.num_resources);

    // Fill by descending score. A grant is consumed by the user's jobs
    // in fill order; a job with more demand than it can still receive
    // (ttl * S) blocks the rest of that user's queue, and the unused
    // budget rolls over to the next user.
    let mut order: Vec<(usize, usize)> = requesting.iter().copied().enumerate().collect();
    order.sort_by(|&(ka, a), &(kb, b)| score[kb].total_cmp(&score[ka]).then(a.cmp(&b)));

    let mut blocks = vec![0u64; num_users];
    let mut pool = 0u64;
    for (_, u) in order {
        let mut budget = rounded[u] + pool;
        let mut consumed = 0u64;
        for job in &obs.users[u].jobs {
            if budget == 0 {
                break;
            }
            if job.remaining > job.ttl.saturating_mul(s) {
                break;
            }
            let take = budget.min(job.remaining);
            consumed += take;
            budget -= take;
        }
        blocks[u] = consumed;
        pool = budget;
    }
    Allocation { blocks }
}

/// Random baseline: uniform entries normalized to sum 1. The result is a
/// share vector, not yet an allocation; it goes through the same
/// evaluation post-processing as the learned scheduler.
pub fn schedule_random(obs: &Observation, rng: &mut impl Rng) -> Action {
    let draws: Vec<f64> = (0..obs.users.len()).map(|_| rng.random::<f64>()).collect();
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 {
        return Action::uniform(obs.users.len());
    }
    Action {
        shares: draws.into_iter().map(|d| d / sum).collect(),
    }
}
