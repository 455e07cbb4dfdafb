//! Command-line experiment runner for the multi-sensor LMB filters.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use lmb::fusion::Strategy;
use lmb::lbp::{CollapseMode, LbpConfig};
use lmb_runner::{
    run_scaling_benchmark, run_tracking, summary_path, write_report_csv, write_scaling_csv,
    write_summary, RunConfig,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FilterArg {
    Pu,
    Ga,
    Ic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CollapseArg {
    /// Keep the highest-weight mixture component.
    Best,
    /// Replace the mixture by its moment-matched Gaussian.
    Marginal,
}

/// Monte-Carlo tracking experiments with multi-sensor LMB filters.
///
/// Default mode runs the chosen filter on the scenario and writes per-step
/// aggregates (plus a `.summary` companion file). With --bench-sensors the
/// scenario's first sensor is duplicated to each requested count and the
/// mean per-step update wall-clock is written instead.
#[derive(Debug, Parser)]
#[command(name = "lmb-runner", version, about)]
struct Cli {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,

    /// Filter to run.
    #[arg(long, value_enum)]
    filter: FilterArg,

    /// Number of Monte-Carlo runs.
    #[arg(long, default_value_t = 100)]
    runs: usize,

    /// Master seed (default: the scenario's seed field).
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,

    /// Belief-propagation convergence tolerance.
    #[arg(long = "lbp-tol", default_value_t = 1e-8)]
    lbp_tol: f64,

    /// Belief-propagation iteration cap.
    #[arg(long = "lbp-max-iter", default_value_t = 200)]
    lbp_max_iter: usize,

    /// Existence pruning threshold.
    #[arg(long, default_value_t = 1e-4)]
    prune: f64,

    /// Output file (per-step CSV; a `.summary` file is written next to it).
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,

    /// Per-sensor mixture collapse override for the PU and GA filters
    /// (default: best for PU, marginal for GA; IC always uses marginal).
    #[arg(long, value_enum)]
    collapse: Option<CollapseArg>,

    /// Benchmark mode: comma-separated sensor counts, e.g. 1,2,4,8.
    #[arg(long = "bench-sensors", value_delimiter = ',')]
    bench_sensors: Option<Vec<usize>>,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let strategy = match cli.filter {
        FilterArg::Pu => Strategy::Pu,
        FilterArg::Ga => Strategy::Ga,
        FilterArg::Ic => Strategy::Ic,
    };
    let mut config = RunConfig::new(cli.scenario, strategy);
    config.runs = cli.runs;
    config.seed = cli.seed;
    config.threads = cli.threads;
    config.lbp = LbpConfig { tolerance: cli.lbp_tol, max_iterations: cli.lbp_max_iter };
    config.prune_threshold = cli.prune;
    config.collapse = cli.collapse.map(|c| match c {
        CollapseArg::Best => CollapseMode::BestComponent,
        CollapseArg::Marginal => CollapseMode::WeakMarginal,
    });
    config.out = Some(cli.out.clone());

    if let Some(counts) = cli.bench_sensors {
        let table = run_scaling_benchmark(&config, &counts)?;
        let file = File::create(&cli.out)
            .with_context(|| format!("creating {}", cli.out.display()))?;
        write_scaling_csv(&table, BufWriter::new(file))?;
        for (sensors, seconds) in &table {
            println!("sensors={sensors} mean_step_seconds={seconds:.6}");
        }
        println!("wrote {}", cli.out.display());
    } else {
        let report = run_tracking(&config)?;
        let file = File::create(&cli.out)
            .with_context(|| format!("creating {}", cli.out.display()))?;
        write_report_csv(&report, BufWriter::new(file))?;
        let summary = summary_path(&cli.out);
        let file = File::create(&summary)
            .with_context(|| format!("creating {}", summary.display()))?;
        write_summary(&report, BufWriter::new(file))?;
        println!(
            "filter={:?} runs={} ospa_e={:.4} ospa_h={:.4} card_err={:.4}",
            report.strategy,
            report.runs,
            report.time_averaged_ospa_e(),
            report.time_averaged_ospa_h(),
            report.mean_cardinality_error()
        );
        println!("wrote {} and {}", cli.out.display(), summary.display());
    }
    Ok(())
}
