//! Config-driven experiment executor for the multi-sensor LMB filters.
//!
//! [`run_tracking`] performs Monte-Carlo tracking runs of one filter
//! (parallel-update, geometric-average, or iterated-corrector) on a scenario
//! file and aggregates OSPA metrics per time step. [`run_scaling_benchmark`]
//! measures how the per-step measurement-update-plus-merge wall-clock grows
//! with the number of sensors.
//!
//! Determinism: run `k` uses master seed `seed + k`; every reduction happens
//! in fixed (run, then step, then sensor) order, so reports are
//! bit-identical regardless of the thread count.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use lmb::density::{predict, prune, LmbDensity, Track};
use lmb::fusion::{equal_weights, ga_merge, ic_update, pu_merge, Strategy};
use lmb::gaussian::Gaussian;
use lmb::lbp::{lbp_update, CollapseMode, LbpConfig, MessageState, SensorModel};
use lmb::metrics::{euclidean_ospa, hellinger_ospa, optimal_reference, OspaParams};
use lmb::sim::{generate_all_measurements, generate_truth, GroundTruth, Scenario, SensorData};
use nalgebra::DVector;
use rayon::prelude::*;

/// Euclidean OSPA settings used by the experiments: cutoff 5 m, order 2.
pub const EOSPA: OspaParams = OspaParams { cutoff: 5.0, order: 2.0 };
/// Hellinger OSPA settings used by the experiments: cutoff 0.5, order 2.
pub const HOSPA: OspaParams = OspaParams { cutoff: 0.5, order: 2.0 };

/// Everything one experiment needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Path of the scenario TOML file.
    pub scenario_path: PathBuf,
    /// Which filter to run.
    pub strategy: Strategy,
    /// Number of Monte-Carlo runs (≥ 1).
    pub runs: usize,
    /// Master seed; `None` defers to the scenario's own seed.
    pub seed: Option<u64>,
    /// Worker threads (≥ 1).
    pub threads: usize,
    /// Override of the per-sensor mixture collapse (applies to PU and GA;
    /// the iterated corrector always uses the weak marginal).
    pub collapse: Option<CollapseMode>,
    /// Belief-propagation stopping parameters.
    pub lbp: LbpConfig,
    /// Existence threshold below which tracks are discarded after merging.
    pub prune_threshold: f64,
    /// Order in which sensors are processed. Affects the iterated
    /// corrector's result; PU and GA results are invariant to it.
    pub sensor_order: Option<Vec<usize>>,
    /// Where to write results (used by the CLI layer).
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(scenario_path: impl Into<PathBuf>, strategy: Strategy) -> Self {
        Self {
            scenario_path: scenario_path.into(),
            strategy,
            runs: 1,
            seed: None,
            threads: 1,
            collapse: None,
            lbp: LbpConfig::default(),
            prune_threshold: 1e-4,
            sensor_order: None,
            out: None,
        }
    }

    fn validate(&self, scenario: &Scenario) -> anyhow::Result<()> {
        if self.runs < 1 {
            bail!("runs must be at least 1");
        }
        if self.threads < 1 {
            bail!("threads must be at least 1");
        }
        if !self.prune_threshold.is_finite() || !(0.0..1.0).contains(&self.prune_threshold) {
            bail!("prune threshold {} outside [0, 1)", self.prune_threshold);
        }
        if let Some(order) = &self.sensor_order {
            let s = scenario.sensors.len();
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..s).collect::<Vec<_>>() {
                bail!("sensor order {order:?} is not a permutation of 0..{s}");
            }
        }
        Ok(())
    }
}

/// Per-step aggregates over all Monte-Carlo runs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepAggregate {
    pub step: usize,
    pub mean_true_cardinality: f64,
    pub mean_estimated_cardinality: f64,
    pub mean_ospa_e: f64,
    pub mean_ospa_h: f64,
}

/// Aggregate belief-propagation behaviour over every solve of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LbpStats {
    pub solves: u64,
    pub total_iterations: u64,
    pub max_iterations: u64,
    pub converged: u64,
}

impl LbpStats {
    fn absorb(&mut self, state: &MessageState) {
        self.solves += 1;
        self.total_iterations += state.iterations as u64;
        self.max_iterations = self.max_iterations.max(state.iterations as u64);
        self.converged += state.converged as u64;
    }

    fn merge(&mut self, other: &LbpStats) {
        self.solves += other.solves;
        self.total_iterations += other.total_iterations;
        self.max_iterations = self.max_iterations.max(other.max_iterations);
        self.converged += other.converged;
    }
}

/// Output of [`run_tracking`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub strategy: Strategy,
    pub runs: usize,
    /// One entry per scenario time step.
    pub steps: Vec<StepAggregate>,
    /// Total measurement-update-plus-merge wall-clock per run, seconds.
    pub update_seconds_per_run: Vec<f64>,
    /// Mean update-plus-merge wall-clock per time step, seconds.
    pub mean_step_update_seconds: f64,
    pub lbp: LbpStats,
    /// Number of tracks whose parallel-update merge fell back to a
    /// geometric average (always 0 for GA and IC).
    pub fallback_count: u64,
}

impl RunReport {
    /// Mean E-OSPA over all steps.
    pub fn time_averaged_ospa_e(&self) -> f64 {
        self.steps.iter().map(|s| s.mean_ospa_e).sum::<f64>() / self.steps.len() as f64
    }

    /// Mean E-OSPA over steps `from..` (burn-in excluded).
    pub fn time_averaged_ospa_e_from(&self, from: usize) -> f64 {
        let tail = &self.steps[from.min(self.steps.len())..];
        tail.iter().map(|s| s.mean_ospa_e).sum::<f64>() / tail.len() as f64
    }

    /// Mean H-OSPA over all steps.
    pub fn time_averaged_ospa_h(&self) -> f64 {
        self.steps.iter().map(|s| s.mean_ospa_h).sum::<f64>() / self.steps.len() as f64
    }

    /// Mean absolute difference between the aggregated estimated and true
    /// cardinality curves.
    pub fn mean_cardinality_error(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| (s.mean_estimated_cardinality - s.mean_true_cardinality).abs())
            .sum::<f64>()
            / self.steps.len() as f64
    }
}

/// One Monte-Carlo run's raw results, kept per-run so aggregation order is
/// independent of scheduling.
struct SingleRun {
    true_cardinality: Vec<f64>,
    estimated_cardinality: Vec<f64>,
    ospa_e: Vec<f64>,
    ospa_h: Vec<f64>,
    update_seconds: f64,
    lbp: LbpStats,
    fallbacks: u64,
}

struct PreparedScenario {
    scenario: Scenario,
    sensors: Vec<SensorModel>,
    order: Vec<usize>,
}

fn prepare(config: &RunConfig, scenario: Scenario) -> anyhow::Result<PreparedScenario> {
    scenario.validate()?;
    config.validate(&scenario)?;
    let sensors = scenario.sensor_models()?;
    let order =
        config.sensor_order.clone().unwrap_or_else(|| (0..scenario.sensors.len()).collect());
    Ok(PreparedScenario { scenario, sensors, order })
}

fn load_scenario(config: &RunConfig) -> anyhow::Result<Scenario> {
    Scenario::load(&config.scenario_path)
        .with_context(|| format!("loading scenario {}", config.scenario_path.display()))
}

/// Initial filter density: empty in the birth-driven scenarios; one track
/// per true object (existence = survival, spatial = the object's initial
/// density) in fixed-cardinality mode, where nothing is ever born.
fn initial_density(scenario: &Scenario, truth: &GroundTruth) -> anyhow::Result<LmbDensity> {
    if scenario.fixed_cardinality.is_none() {
        return Ok(LmbDensity::new());
    }
    let mut density = LmbDensity::new();
    for trajectory in &truth.trajectories {
        density.insert(Track::new(
            trajectory.label,
            scenario.survival,
            trajectory.initial.clone(),
        )?)?;
    }
    Ok(density)
}

/// One filter step's measurement update and merge. Returns the merged
/// density plus solver statistics. PU and GA update per sensor concurrently;
/// IC folds sensors sequentially in the configured order.
fn update_and_merge(
    prior: &LmbDensity,
    frames: &[(usize, &SensorData)],
    sensors: &[SensorModel],
    step: usize,
    config: &RunConfig,
) -> anyhow::Result<(LmbDensity, LbpStats, u64)> {
    let mut stats = LbpStats::default();
    match config.strategy {
        Strategy::Ic => {
            let ordered: Vec<(SensorModel, Vec<DVector<f64>>)> = frames
                .iter()
                .map(|(idx, data)| (sensors[*idx].clone(), data.frames[step].measurements.clone()))
                .collect();
            let order: Vec<usize> = (0..ordered.len()).collect();
            let (density, states) = ic_update(prior, &ordered, &order, &config.lbp)?;
            for state in &states {
                stats.absorb(state);
            }
            Ok((density, stats, 0))
        }
        Strategy::Pu | Strategy::Ga => {
            let collapse = config.collapse.unwrap_or(match config.strategy {
                Strategy::Pu => CollapseMode::BestComponent,
                _ => CollapseMode::WeakMarginal,
            });
            let results: Vec<lmb::Result<(LmbDensity, MessageState)>> = frames
                .par_iter()
                .map(|(idx, data)| {
                    lbp_update(
                        prior,
                        &data.frames[step].measurements,
                        &sensors[*idx],
                        &config.lbp,
                        collapse,
                    )
                })
                .collect();
            let mut updated = Vec::with_capacity(results.len());
            for result in results {
                let (density, state) = result?;
                stats.absorb(&state);
                updated.push(density);
            }
            if config.strategy == Strategy::Pu {
                let merged = pu_merge(prior, &updated)?;
                Ok((merged.density, stats, merged.fallback_count as u64))
            } else {
                let merged = ga_merge(&updated, &equal_weights(updated.len()))?;
                Ok((merged, stats, 0))
            }
        }
    }
}

fn single_run(
    prepared: &PreparedScenario,
    config: &RunConfig,
    seed: u64,
) -> anyhow::Result<SingleRun> {
    let scenario = &prepared.scenario;
    let truth = generate_truth(scenario, seed)?;
    let sensor_data = generate_all_measurements(&truth, scenario, seed)?;
    let references = optimal_reference(&truth, scenario, &sensor_data)?;
    let motion = scenario.motion_model()?;
    let births = scenario.birth_model()?;
    let frames: Vec<(usize, &SensorData)> =
        prepared.order.iter().map(|&idx| (idx, &sensor_data[idx])).collect();

    let mut result = SingleRun {
        true_cardinality: Vec::with_capacity(scenario.duration),
        estimated_cardinality: Vec::with_capacity(scenario.duration),
        ospa_e: Vec::with_capacity(scenario.duration),
        ospa_h: Vec::with_capacity(scenario.duration),
        update_seconds: 0.0,
        lbp: LbpStats::default(),
        fallbacks: 0,
    };

    let mut density = initial_density(scenario, &truth)?;
    for step in 0..scenario.duration {
        let prior = predict(&density, &motion, &births, step as u32)?;

        let start = Instant::now();
        let (merged, stats, fallbacks) =
            update_and_merge(&prior, &frames, &prepared.sensors, step, config)?;
        result.update_seconds += start.elapsed().as_secs_f64();
        result.lbp.merge(&stats);
        result.fallbacks += fallbacks;

        density = prune(&merged, config.prune_threshold);
        let extracted = lmb::density::extract_state(&density);
        let estimates: Vec<DVector<f64>> = extracted.iter().map(|(_, x, _)| x.clone()).collect();
        let spatials: Vec<Gaussian> = extracted.iter().map(|(_, _, g)| g.clone()).collect();

        let live = truth.live_at(step);
        let truths: Vec<DVector<f64>> = live.iter().map(|(_, x)| (*x).clone()).collect();
        result.true_cardinality.push(truths.len() as f64);
        result.estimated_cardinality.push(estimates.len() as f64);
        result.ospa_e.push(euclidean_ospa(&estimates, &truths, &EOSPA)?);
        result.ospa_h.push(hellinger_ospa(&spatials, &references[step], &HOSPA)?);
    }
    Ok(result)
}

fn aggregate(
    strategy: Strategy,
    duration: usize,
    runs: Vec<SingleRun>,
) -> anyhow::Result<RunReport> {
    let count = runs.len() as f64;
    let mut steps = Vec::with_capacity(duration);
    for step in 0..duration {
        steps.push(StepAggregate {
            step,
            mean_true_cardinality: runs.iter().map(|r| r.true_cardinality[step]).sum::<f64>()
                / count,
            mean_estimated_cardinality: runs
                .iter()
                .map(|r| r.estimated_cardinality[step])
                .sum::<f64>()
                / count,
            mean_ospa_e: runs.iter().map(|r| r.ospa_e[step]).sum::<f64>() / count,
            mean_ospa_h: runs.iter().map(|r| r.ospa_h[step]).sum::<f64>() / count,
        });
    }
    let mut lbp = LbpStats::default();
    let mut fallback_count = 0;
    for run in &runs {
        lbp.merge(&run.lbp);
        fallback_count += run.fallbacks;
    }
    let update_seconds_per_run: Vec<f64> = runs.iter().map(|r| r.update_seconds).collect();
    let mean_step_update_seconds =
        update_seconds_per_run.iter().sum::<f64>() / (count * duration as f64);
    let report = RunReport {
        strategy,
        runs: runs.len(),
        steps,
        update_seconds_per_run,
        mean_step_update_seconds,
        lbp,
        fallback_count,
    };
    for s in &report.steps {
        if !(s.mean_ospa_e.is_finite()
            && s.mean_ospa_h.is_finite()
            && s.mean_estimated_cardinality.is_finite()
            && s.mean_true_cardinality.is_finite())
        {
            bail!("non-finite aggregate at step {}", s.step);
        }
    }
    Ok(report)
}

fn run_tracking_inner(
    config: &RunConfig,
    scenario: Scenario,
    parallel_runs: bool,
) -> anyhow::Result<RunReport> {
    let prepared = prepare(config, scenario)?;
    let seed = config.seed.unwrap_or(prepared.scenario.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .context("building thread pool")?;
    let runs: Vec<anyhow::Result<SingleRun>> = pool.install(|| {
        if parallel_runs {
            (0..config.runs)
                .into_par_iter()
                .map(|k| single_run(&prepared, config, seed.wrapping_add(k as u64)))
                .collect()
        } else {
            (0..config.runs)
                .map(|k| single_run(&prepared, config, seed.wrapping_add(k as u64)))
                .collect()
        }
    });
    let runs = runs.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    aggregate(config.strategy, prepared.scenario.duration, runs)
}

/// Run the configured filter over `config.runs` Monte-Carlo repetitions and
/// aggregate per-step metrics. Runs execute concurrently (within
/// `config.threads`), but results reduce in run order, so the report is
/// identical for every thread count.
pub fn run_tracking(config: &RunConfig) -> anyhow::Result<RunReport> {
    let scenario = load_scenario(config)?;
    run_tracking_inner(config, scenario, true)
}

/// For each sensor count `S`, duplicate the scenario's first sensor `S`
/// times and measure the mean per-step measurement-update-plus-merge
/// wall-clock. Monte-Carlo runs execute sequentially so per-sensor
/// parallelism (PU/GA) is the only concurrency being timed.
pub fn run_scaling_benchmark(
    config: &RunConfig,
    sensor_counts: &[usize],
) -> anyhow::Result<Vec<(usize, f64)>> {
    if sensor_counts.is_empty() {
        bail!("at least one sensor count is required");
    }
    if sensor_counts.iter().any(|&s| s == 0) {
        bail!("sensor counts must be positive");
    }
    let base = load_scenario(config)?;
    base.validate()?;

    let mut table = Vec::with_capacity(sensor_counts.len());
    for &count in sensor_counts {
        let mut scenario = base.clone();
        scenario.sensors = vec![base.sensors[0]; count];
        let mut sub_config = config.clone();
        sub_config.sensor_order = None;
        let report = run_tracking_inner(&sub_config, scenario, false)?;
        table.push((count, report.mean_step_update_seconds));
    }
    Ok(table)
}

/// Write the per-step aggregates as comma-delimited text:
/// `step,true_card,est_card,ospa_e,ospa_h`.
pub fn write_report_csv<W: Write>(report: &RunReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "step,true_card,est_card,ospa_e,ospa_h")?;
    for s in &report.steps {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.step, s.mean_true_cardinality, s.mean_estimated_cardinality, s.mean_ospa_e, s.mean_ospa_h
        )?;
    }
    Ok(())
}

/// Write run totals (key = value lines): filter, runs, time-averaged
/// metrics, wall-clock, solver statistics.
pub fn write_summary<W: Write>(report: &RunReport, mut out: W) -> std::io::Result<()> {
    let name = match report.strategy {
        Strategy::Pu => "pu",
        Strategy::Ga => "ga",
        Strategy::Ic => "ic",
    };
    writeln!(out, "filter = {name}")?;
    writeln!(out, "runs = {}", report.runs)?;
    writeln!(out, "steps = {}", report.steps.len())?;
    writeln!(out, "time_averaged_ospa_e = {}", report.time_averaged_ospa_e())?;
    writeln!(out, "time_averaged_ospa_h = {}", report.time_averaged_ospa_h())?;
    writeln!(out, "mean_cardinality_error = {}", report.mean_cardinality_error())?;
    writeln!(out, "mean_step_update_seconds = {}", report.mean_step_update_seconds)?;
    let mean_per_run = report.update_seconds_per_run.iter().sum::<f64>()
        / report.update_seconds_per_run.len() as f64;
    writeln!(out, "mean_update_seconds_per_run = {mean_per_run}")?;
    writeln!(out, "lbp_solves = {}", report.lbp.solves)?;
    writeln!(out, "lbp_total_iterations = {}", report.lbp.total_iterations)?;
    writeln!(out, "lbp_max_iterations = {}", report.lbp.max_iterations)?;
    writeln!(out, "lbp_converged = {}", report.lbp.converged)?;
    writeln!(out, "pu_fallbacks = {}", report.fallback_count)?;
    Ok(())
}

/// Write a scaling table as comma-delimited text: `sensors,mean_step_seconds`.
pub fn write_scaling_csv<W: Write>(table: &[(usize, f64)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "sensors,mean_step_seconds")?;
    for (count, seconds) in table {
        writeln!(out, "{count},{seconds}")?;
    }
    Ok(())
}

/// Companion summary path: `results.csv` → `results.summary`.
pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary")
}

/// Ordinary-least-squares fit `y = slope·x + intercept` plus R²; used to
/// check the iterated corrector's linear runtime growth.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    let syy: f64 = points.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r_squared)
}
