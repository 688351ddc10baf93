//! Command-line front end: `train`, `eval`, `baseline`, `export`.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::baselines::SchedulerKind;
use crate::error::Result;
use crate::harness::{
    export_cumulative_histogram, read_metrics_csv, run, run_parallel_seeds, MetricName,
    RunConfig, RunMode, RunOptions,
};

#[derive(Parser)]
#[command(
    name = "rbsched",
    about = "Resource-block scheduling experiments: train a learning scheduler, \
             evaluate it, run the classical baselines, and export cumulative histograms",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the learning scheduler and save the model
    Train(RunArgs),
    /// Evaluate a trained model on fresh episodes
    Eval(RunArgs),
    /// Run one of the classical schedulers (mt, mmf, ds, random)
    Baseline(RunArgs),
    /// Export normalized cumulative histograms from metrics CSVs
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file (TOML); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Scheduler override (baseline mode: mt, mmf, ds, random)
    #[arg(long)]
    scheduler: Option<String>,
    /// Trained model file (eval mode)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory override
    #[arg(long)]
    out: Option<PathBuf>,
    /// Episode count override
    #[arg(long)]
    episodes: Option<usize>,
    /// Also write a per-step trace.csv
    #[arg(long)]
    trace: bool,
    /// Run this many independent seeds concurrently, each in its own
    /// seed-<n> subdirectory
    #[arg(long)]
    parallel_seeds: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    /// Metric column to export (sum_reward, sum_capacity, sum_timeouts,
    /// sum_ev_timeouts, sum_packet_rate)
    #[arg(long)]
    metric: String,
    /// Number of histogram bins
    #[arg(long, default_value_t = 40)]
    bins: usize,
    /// Output directory for the histogram CSVs
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Metrics CSVs to pool (normalization is shared across all of them)
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

impl RunArgs {
    fn build_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::parse_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(scheduler) = &self.scheduler {
            config.scheduler = SchedulerKind::from_str(scheduler)?;
        }
        if let Some(episodes) = self.episodes {
            config.episodes = episodes;
            config.ddpg.total_episodes = episodes;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

fn dispatch_run(args: &RunArgs, mode: RunMode) -> Result<()> {
    let config = args.build_config()?;
    let options = RunOptions {
        model_path: args.model.clone(),
        trace: args.trace,
    };
    if let Some(count) = args.parallel_seeds {
        run_parallel_seeds(&config, mode, &options, count)?;
        println!(
            "{} seeds x {} episodes -> {}",
            count,
            config.episodes,
            config.output_dir.display()
        );
        return Ok(());
    }
    let records = run(&config, mode, &options)?;
    let mean_reward = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.sum_reward).sum::<f64>() / records.len() as f64
    };
    println!(
        "{} episodes, mean episode reward {:.3} -> {}",
        records.len(),
        mean_reward,
        config.output_dir.join("metrics.csv").display()
    );
    if mode == RunMode::Train {
        println!("model -> {}", config.output_dir.join("model.json").display());
    }
    Ok(())
}

fn dispatch_export(args: &ExportArgs) -> Result<()> {
    let metric = MetricName::from_str(&args.metric)?;
    let mut records = Vec::new();
    for path in &args.inputs {
        records.extend(read_metrics_csv(path)?);
    }
    let tables = export_cumulative_histogram(&records, metric, args.bins)?;
    std::fs::create_dir_all(&args.out)?;
    for table in tables {
        let path = args
            .out
            .join(format!("hist_{}_{}.csv", table.metric, table.scheduler));
        table.write_csv(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}

/// Parse `argv` (including the program name) and execute. Returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = err.exit_code();
            let _ = err.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(args) => dispatch_run(args, RunMode::Train),
        Command::Eval(args) => dispatch_run(args, RunMode::Evaluate),
        Command::Baseline(args) => dispatch_run(args, RunMode::Baseline),
        Command::Export(args) => dispatch_export(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}
