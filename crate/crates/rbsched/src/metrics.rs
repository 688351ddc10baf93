//! Step metrics and the weighted sum-utility reward.
//!
//! Four sub-metrics are computed per completed step — sum capacity, total
//! and emergency-vehicle timeout blocks, and the sum packet rate — and
//! folded into one scalar: capacity and packet rate count positively,
//! timeouts negatively, with the emergency-vehicle share penalized on
//! top of the global timeout term.

use crate::baselines::Allocation;
use crate::env::{CapacityMode, Job, LogBase, Observation, UserProfile, UserState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub w_capacity: f64,
    pub w_timeouts: f64,
    pub w_ev_timeouts: f64,
    pub w_packet_rate: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_capacity: 0.25,
            w_timeouts: 1.0,
            w_ev_timeouts: 1.0,
            w_packet_rate: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub sum_capacity: f64,
    /// Blocks lost to timeouts this step, over all users.
    pub sum_timeouts: u64,
    /// The emergency-vehicle share of `sum_timeouts`.
    pub ev_timeouts: u64,
    pub sum_packet_rate: f64,
    pub reward: f64,
}

/// Sum capacity of the step. Per-user capacity is `log(1 + g_u * snr)`
/// with the shared SNR taken from dB; the mode decides how the
/// allocation enters the sum (weighted per granted block, counted per
/// served user, or ignored entirely).
pub fn sum_capacity(
    obs: &Observation,
    alloc: &Allocation,
    snr_db: f64,
    mode: CapacityMode,
    base: LogBase,
) -> f64 {
    let snr_linear = 10f64.powf(snr_db / 10.0);
    obs.users
        .iter()
        .zip(&alloc.blocks)
        .map(|(user, &blocks)| {
            let cap = base.log(1.0 + user.power_fading * snr_linear);
            match mode {
                CapacityMode::PerBlock => blocks as f64 * cap,
                CapacityMode::PerServedUser => {
                    if blocks > 0 {
                        cap
                    } else {
                        0.0
                    }
                }
                CapacityMode::Literal => cap,
            }
        })
        .sum()
}

/// Blocks lost in this step's failed jobs: total and the share owned by
/// emergency-vehicle users.
pub fn sum_timeouts(failed: &[Job], profiles: &[UserProfile]) -> (u64, u64) {
    let mut total = 0;
    let mut ev_total = 0;
    for job in failed {
        total += job.remaining;
        if profiles[job.user].is_ev {
            ev_total += job.remaining;
        }
    }
    (total, ev_total)
}

/// Sum over users of the lifetime scheduled/requested ratio.
pub fn sum_packet_rate(users: &[UserState]) -> f64 {
    users.iter().map(|u| u.packet_rate()).sum()
}

pub fn reward(
    sum_capacity: f64,
    sum_timeouts: u64,
    ev_timeouts: u64,
    sum_packet_rate: f64,
    weights: &RewardWeights,
) -> f64 {
    weights.w_capacity * sum_capacity - weights.w_timeouts * sum_timeouts as f64
        - weights.w_ev_timeouts * ev_timeouts as f64
        + weights.w_packet_rate * sum_packet_rate
}

/// Compute all sub-metrics and the reward for one completed step.
#[allow(clippy::too_many_arguments)]
pub fn step_metrics(
    obs: &Observation,
    alloc: &Allocation,
    failed: &[Job],
    users: &[UserState],
    snr_db: f64,
    mode: CapacityMode,
    base: LogBase,
    weights: &RewardWeights,
) -> StepMetrics {
    let profiles: Vec<UserProfile> = users.iter().map(|u| u.profile).collect();
    let capacity = sum_capacity(obs, alloc, snr_db, mode, base);
    let (timeouts, ev) = sum_timeouts(failed, &profiles);
    let packet_rate = sum_packet_rate(users);
    StepMetrics {
        sum_capacity: capacity,
        sum_timeouts: timeouts,
        ev_timeouts: ev,
        sum_packet_rate: packet_rate,
        reward: reward(capacity, timeouts, ev, packet_rate, weights),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::Allocation;
    use crate::env::{Env, EnvConfig, JobView, ProfileLabel, UserView};
    use rand::Rng;
    use rand::SeedableRng;

    fn obs_with_fading(g: &[f64]) -> Observation {
        Observation {
            num_resources: 16,
            users: g
                .iter()
                .map(|&power_fading| UserView {
                    power_fading,
                    total_request: 0,
                    inv_min_ttl: 0.0,
                    packet_rate: 0.0,
                    timeout_blocks: 0,
                    jobs: Vec::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn db_conversion_is_standard() {
        let snr = 10f64.powf(13.0 / 10.0);
        assert!((snr - 19.953).abs() < 1e-3);
    }

    #[test]
    fn per_block_capacity_matches_direct_evaluation() {
        let obs = obs_with_fading(&[1.0, 1.0]);
        let alloc = Allocation {
            blocks: vec![2, 0],
        };
        let got = sum_capacity(&obs, &alloc, 13.0, CapacityMode::PerBlock, LogBase::Log2);
        let expected = 2.0 * (1.0 + 10f64.powf(1.3)).log2();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 8.778).abs() < 1e-3);
    }

    #[test]
    fn literal_capacity_ignores_the_allocation() {
        let obs = obs_with_fading(&[1.0, 1.0]);
        let expected = 2.0 * (1.0 + 10f64.powf(1.3)).log2();
        for blocks in [vec![0, 0], vec![2, 0], vec![8, 8]] {
            let got = sum_capacity(
                &obs,
                &Allocation { blocks },
                13.0,
                CapacityMode::Literal,
                LogBase::Log2,
            );
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn per_served_user_counts_only_granted_users() {
        let obs = obs_with_fading(&[1.0, 1.0, 1.0]);
        let alloc = Allocation {
            blocks: vec![3, 1, 0],
        };
        let got = sum_capacity(
            &obs,
            &alloc,
            13.0,
            CapacityMode::PerServedUser,
            LogBase::Log2,
        );
        let per_user = (1.0 + 10f64.powf(1.3)).log2();
        assert!((got - 2.0 * per_user).abs() < 1e-12);
    }

    #[test]
    fn timeout_sums_split_by_ev_class() {
        let normal = UserProfile::from_label(ProfileLabel::Normal);
        let ev = UserProfile::from_label(ProfileLabel::EmergencyVehicle);
        let job = |user, remaining| Job {
            id: 0,
            user,
            remaining,
            ttl: 0,
            initial_size: remaining,
        };

        let profiles = vec![normal, normal];
        assert_eq!(
            sum_timeouts(&[job(0, 3), job(1, 2)], &profiles),
            (5, 0)
        );

        let profiles = vec![normal, ev];
        assert_eq!(sum_timeouts(&[job(1, 4)], &profiles), (4, 4));
        assert_eq!(sum_timeouts(&[], &profiles), (0, 0));
    }

    #[test]
    fn packet_rate_handles_fresh_users() {
        let mut env = Env::reset(EnvConfig::default(), 5).unwrap();
        assert_eq!(sum_packet_rate(&env.users), 0.0);
        env.users[0].lifetime_requested = 8;
        env.users[0].lifetime_scheduled = 6;
        assert!((sum_packet_rate(&env.users) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn packet_rate_matches_event_log_replay() {
        // Replay a random 20-step run from the grant/creation event log
        // and recompute every user's ratio independently.
        let mut env = Env::reset(EnvConfig::default(), 31).unwrap();
        let num_users = env.users.len();
        let mut requested = vec![0u64; num_users];
        let mut granted = vec![0u64; num_users];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            for job in env.generate_jobs() {
                requested[job.user] += job.initial_size;
            }
            env.step_mobility();
            env.update_channel();
            let mut left = env.config().num_resources as u64;
            let blocks: Vec<u64> = (0..num_users)
                .map(|u| {
                    let grant = env.user_demand(u).min(rng.random_range(0..=2)).min(left);
                    left -= grant;
                    granted[u] += grant;
                    grant
                })
                .collect();
            env.apply_allocation(&Allocation { blocks }).unwrap();
            env.advance_time();

            let replayed: f64 = (0..num_users)
                .map(|u| {
                    if requested[u] == 0 {
                        0.0
                    } else {
                        granted[u] as f64 / requested[u] as f64
                    }
                })
                .sum();
            assert!((sum_packet_rate(&env.users) - replayed).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_weighted_sum_examples() {
        let w = RewardWeights::default();
        let r = reward(8.0, 4, 2, 3.0, &w);
        assert!((r - (-3.25)).abs() < 1e-12);
        assert_eq!(reward(0.0, 0, 0, 0.0, &w), 0.0);

        // One EV block timing out costs w_timeouts + w_ev_timeouts = 2,
        // a normal block 1.
        let base = reward(0.0, 0, 0, 0.0, &w);
        assert_eq!(base - reward(0.0, 1, 0, 0.0, &w), 1.0);
        assert_eq!(base - reward(0.0, 1, 1, 0.0, &w), 2.0);
    }

    #[test]
    fn reward_is_linear_in_the_weights() {
        let w = RewardWeights::default();
        let doubled = RewardWeights {
            w_capacity: 0.5,
            w_timeouts: 2.0,
            w_ev_timeouts: 2.0,
            w_packet_rate: 0.5,
        };
        let r1 = reward(8.3, 4, 2, 3.7, &w);
        let r2 = reward(8.3, 4, 2, 3.7, &doubled);
        assert!((r2 - 2.0 * r1).abs() < 1e-12);
    }

    #[test]
    fn per_block_capacity_grows_with_grants() {
        let obs = obs_with_fading(&[0.4, 1.3]);
        let small = Allocation {
            blocks: vec![1, 2],
        };
        let big = Allocation {
            blocks: vec![1, 3],
        };
        let a = sum_capacity(&obs, &small, 13.0, CapacityMode::PerBlock, LogBase::Log2);
        let b = sum_capacity(&obs, &big, 13.0, CapacityMode::PerBlock, LogBase::Log2);
        assert!(b > a);
    }

    #[test]
    fn log_base_selection_changes_units() {
        let obs = Observation {
            num_resources: 4,
            users: vec![UserView {
                power_fading: 1.0,
                total_request: 0,
                inv_min_ttl: 0.0,
                packet_rate: 0.0,
                timeout_blocks: 0,
                jobs: vec![JobView {
                    remaining: 1,
                    ttl: 1,
                }],
            }],
        };
        let alloc = Allocation { blocks: vec![1] };
        let bits = sum_capacity(&obs, &alloc, 0.0, CapacityMode::PerBlock, LogBase::Log2);
        let nats = sum_capacity(&obs, &alloc, 0.0, CapacityMode::PerBlock, LogBase::Ln);
        assert!((bits - nats / std::f64::consts::LN_2).abs() < 1e-12);
    }
}
