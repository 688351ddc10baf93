//! Normalized cumulative histograms over per-episode metric sums.
//!
//! Episode values from every scheduler in the input are scaled by one
//! shared maximum so the resulting curves share an axis, then counted
//! into cumulative fractions at equally spaced bin edges.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::SchedulerKind;
use crate::error::{Error, Result};
use crate::harness::EpisodeRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricName {
    SumReward,
    SumCapacity,
    SumTimeouts,
    SumEvTimeouts,
    SumPacketRate,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::SumReward => "sum_reward",
            MetricName::SumCapacity => "sum_capacity",
            MetricName::SumTimeouts => "sum_timeouts",
            MetricName::SumEvTimeouts => "sum_ev_timeouts",
            MetricName::SumPacketRate => "sum_packet_rate",
        }
    }

    pub const ALL: [MetricName; 5] = [
        MetricName::SumReward,
        MetricName::SumCapacity,
        MetricName::SumTimeouts,
        MetricName::SumEvTimeouts,
        MetricName::SumPacketRate,
    ];

    pub fn of(self, record: &EpisodeRecord) -> f64 {
        match self {
            MetricName::SumReward => record.sum_reward,
            MetricName::SumCapacity => record.sum_capacity,
            MetricName::SumTimeouts => record.sum_timeouts as f64,
            MetricName::SumEvTimeouts => record.sum_ev_timeouts as f64,
            MetricName::SumPacketRate => record.sum_packet_rate,
        }
    }
}

impl std::fmt::Display for MetricName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown metric '{s}' (expected one of sum_reward, sum_capacity, \
                     sum_timeouts, sum_ev_timeouts, sum_packet_rate)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramRow {
    pub bin_upper_edge: f64,
    pub cumulative_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramTable {
    pub scheduler: SchedulerKind,
    pub metric: MetricName,
    pub rows: Vec<HistogramRow>,
}

impl HistogramTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_upper_edge,cumulative_fraction\n");
        for row in &self.rows {
            let _ = writeln!(out, "{},{}", row.bin_upper_edge, row.cumulative_fraction);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// One cumulative histogram per scheduler present in `records`, all
/// normalized by the same maximum. When every value is non-positive the
/// divisor falls back to the largest magnitude so normalized values
/// still end at or below 1.
pub fn export_cumulative_histogram(
    records: &[EpisodeRecord],
    metric: MetricName,
    bins: usize,
) -> Result<Vec<HistogramTable>> {
    if records.is_empty() {
        return Err(Error::Usage("no episode records to export".into()));
    }
    if bins == 0 {
        return Err(Error::Usage("bins must be positive".into()));
    }

    let all_values: Vec<f64> = records.iter().map(|r| metric.of(r)).collect();
    let max = all_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom = if max > 0.0 {
        max
    } else {
        let magnitude = all_values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if magnitude > 0.0 {
            magnitude
        } else {
            1.0
        }
    };

    let mut schedulers: Vec<SchedulerKind> = Vec::new();
    for r in records {
        if !schedulers.contains(&r.scheduler) {
            schedulers.push(r.scheduler);
        }
    }

    let tables = schedulers
        .into_iter()
        .map(|scheduler| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.scheduler == scheduler)
                .map(|r| metric.of(r) / denom)
                .collect();
            let n = values.len() as f64;
            let rows = (1..=bins)
                .map(|k| {
                    let edge = k as f64 / bins as f64;
                    let count = values.iter().filter(|&&v| v <= edge + 1e-12).count();
                    HistogramRow {
                        bin_upper_edge: edge,
                        cumulative_fraction: count as f64 / n,
                    }
                })
                .collect();
            HistogramTable {
                scheduler,
                metric,
                rows,
            }
        })
        .collect();
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(scheduler: SchedulerKind, episode: usize, reward: f64) -> EpisodeRecord {
        EpisodeRecord {
            episode,
            scheduler,
            sum_reward: reward,
            sum_capacity: reward * 2.0,
            sum_timeouts: episode as u64,
            sum_ev_timeouts: 0,
            sum_packet_rate: 1.0,
        }
    }

    #[test]
    fn hand_counted_example() {
        let records: Vec<EpisodeRecord> = [1.0, 2.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| record(SchedulerKind::Random, i, v))
            .collect();
        let tables =
            export_cumulative_histogram(&records, MetricName::SumReward, 4).unwrap();
        assert_eq!(tables.len(), 1);
        let rows = &tables[0].rows;
        let expect = [
            (0.25, 1.0 / 3.0),
            (0.5, 2.0 / 3.0),
            (0.75, 2.0 / 3.0),
            (1.0, 1.0),
        ];
        for (row, (edge, frac)) in rows.iter().zip(expect) {
            assert!((row.bin_upper_edge - edge).abs() < 1e-12);
            assert!((row.cumulative_fraction - frac).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_values_jump_at_the_last_edge() {
        let records: Vec<EpisodeRecord> = (0..5)
            .map(|i| record(SchedulerKind::MaxMinFair, i, 3.0))
            .collect();
        let tables =
            export_cumulative_histogram(&records, MetricName::SumReward, 10).unwrap();
        let rows = &tables[0].rows;
        for row in &rows[..9] {
            assert_eq!(row.cumulative_fraction, 0.0);
        }
        assert_eq!(rows[9].cumulative_fraction, 1.0);
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one() {
        let mut records = Vec::new();
        for i in 0..50 {
            records.push(record(SchedulerKind::Random, i, (i as f64) * 0.37 - 3.0));
            records.push(record(SchedulerKind::MaxThroughput, i, (i as f64) * 0.51));
        }
        for metric in MetricName::ALL {
            let tables = export_cumulative_histogram(&records, metric, 40).unwrap();
            assert_eq!(tables.len(), 2);
            for table in tables {
                let mut prev = 0.0;
                for row in &table.rows {
                    assert!(row.cumulative_fraction >= prev);
                    assert!((0.0..=1.0).contains(&row.cumulative_fraction));
                    prev = row.cumulative_fraction;
                }
                assert_eq!(table.rows.last().unwrap().cumulative_fraction, 1.0);
            }
        }
    }

    #[test]
    fn all_negative_values_still_terminate_at_one() {
        let records: Vec<EpisodeRecord> = [-4.0, -2.0, -1.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| record(SchedulerKind::Ddpg, i, v))
            .collect();
        let tables =
            export_cumulative_histogram(&records, MetricName::SumReward, 4).unwrap();
        assert_eq!(tables[0].rows.last().unwrap().cumulative_fraction, 1.0);
    }

    #[test]
    fn empty_input_is_a_usage_error() {
        assert!(matches!(
            export_cumulative_histogram(&[], MetricName::SumReward, 4),
            Err(Error::Usage(_))
        ));
    }
}
