//! Scenario configuration, ground-truth and measurement simulation.
//!
//! A [`Scenario`] describes the planar constant-velocity world used by the
//! experiments: multi-Bernoulli birth at fixed sites, constant survival,
//! white-noise-acceleration motion, and a set of position sensors with
//! per-sensor detection probability, Gaussian noise, and uniform Poisson
//! clutter over a rectangular region. Scenarios serialise to and from TOML.
//!
//! States are `(px, py, vx, vy)`; measurements are `(zx, zy)`.
//!
//! Randomness is split into independent ChaCha streams derived from one
//! master seed: ground truth uses stream 0 and sensor `i` uses stream
//! `i + 1`, so adding or reordering sensors never perturbs the other
//! streams. Within a stream the draw order is fixed (documented on each
//! generator), making all output bit-reproducible for a given seed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::density::{BirthModel, Label, MotionModel};
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, LinearGaussianMap};
use crate::lbp::SensorModel;

/// Standard deviation of the position/velocity uncertainty attached to
/// fixed-cardinality objects' initial states (matches the birth-site spread
/// of the accuracy scenario).
pub const FIXED_CARDINALITY_STD: f64 = 10.0;

/// Axis-aligned surveillance region; bounds clutter and uniform initial
/// placement only (objects that drift outside stay alive and observable).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Region {
    pub fn volume(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn contains(&self, point: &DVector<f64>) -> bool {
        (0..2).all(|a| point[a] >= self.min[a] && point[a] <= self.max[a])
    }

    /// One uniform point; draws the x then the y coordinate.
    fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let x = rng.gen_range(self.min[0]..self.max[0]);
        let y = rng.gen_range(self.min[1]..self.max[1]);
        DVector::from_column_slice(&[x, y])
    }
}

/// One multi-Bernoulli birth site: spawn probability per step plus the
/// Gaussian (diagonal covariance, given as standard deviations) the initial
/// state is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthSite {
    pub existence: f64,
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl BirthSite {
    pub fn density(&self) -> Result<Gaussian> {
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(
            4,
            self.std.iter().map(|s| s * s),
        ));
        Gaussian::new(DVector::from_column_slice(&self.mean), cov)
    }
}

/// One position sensor: detection probability, expected clutter count per
/// scan, and isotropic measurement-noise standard deviation (covariance
/// `noise_std²·I₂`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub detection: f64,
    pub clutter_rate: f64,
    pub noise_std: f64,
}

/// Full experiment description, serialisable as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Number of time steps.
    pub duration: usize,
    /// Step period `T` in seconds.
    pub dt: f64,
    /// White-noise-acceleration intensity `r` of the process noise.
    pub process_intensity: f64,
    /// Per-step survival probability `P_S`.
    pub survival: f64,
    /// Default master seed (a runner may override it).
    #[serde(default)]
    pub seed: u64,
    /// When set, exactly this many objects exist at every step: all are
    /// placed uniformly in the region at step 0 with zero velocity, never
    /// die, and no further births occur. Used by the scaling benchmark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_cardinality: Option<usize>,
    pub region: Region,
    #[serde(default)]
    pub birth: Vec<BirthSite>,
    pub sensors: Vec<SensorSpec>,
}

impl Scenario {
    /// Check every invariant; all other methods assume a validated scenario.
    pub fn validate(&self) -> Result<()> {
        if self.duration < 1 {
            return Err(Error::Scenario("duration must be at least 1 step".into()));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::Scenario(format!("step period {} must be positive", self.dt)));
        }
        if !self.process_intensity.is_finite() || self.process_intensity < 0.0 {
            return Err(Error::Scenario(format!(
                "process intensity {} must be non-negative",
                self.process_intensity
            )));
        }
        if !self.survival.is_finite() || !(0.0..=1.0).contains(&self.survival) {
            return Err(Error::Scenario(format!(
                "survival probability {} outside [0, 1]",
                self.survival
            )));
        }
        if (0..2).any(|a| !(self.region.max[a] - self.region.min[a]).is_finite())
            || self.region.volume() <= 0.0
        {
            return Err(Error::Scenario("region must be a non-degenerate rectangle".into()));
        }
        for (i, site) in self.birth.iter().enumerate() {
            if !site.existence.is_finite() || !(0.0..=1.0).contains(&site.existence) {
                return Err(Error::Scenario(format!(
                    "birth site {i}: existence {} outside [0, 1]",
                    site.existence
                )));
            }
            if site.std.iter().any(|s| !s.is_finite() || *s <= 0.0) {
                return Err(Error::Scenario(format!(
                    "birth site {i}: standard deviations must be positive"
                )));
            }
        }
        if self.sensors.is_empty() {
            return Err(Error::Scenario("at least one sensor is required".into()));
        }
        for (i, sensor) in self.sensors.iter().enumerate() {
            if !sensor.detection.is_finite() || !(0.0..=1.0).contains(&sensor.detection) {
                return Err(Error::Scenario(format!(
                    "sensor {i}: detection probability {} outside [0, 1]",
                    sensor.detection
                )));
            }
            if !sensor.clutter_rate.is_finite() || sensor.clutter_rate < 0.0 {
                return Err(Error::Scenario(format!(
                    "sensor {i}: clutter rate {} must be non-negative",
                    sensor.clutter_rate
                )));
            }
            if !sensor.noise_std.is_finite() || sensor.noise_std <= 0.0 {
                return Err(Error::Scenario(format!(
                    "sensor {i}: noise standard deviation {} must be positive",
                    sensor.noise_std
                )));
            }
        }
        Ok(())
    }

    /// Parse and validate a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::Scenario(format!("TOML parse error: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Scenario(format!("TOML serialisation error: {e}")))
    }

    /// Load and validate a scenario from a TOML file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_toml_string()?)?)
    }

    /// Constant-velocity motion model with survival probability.
    pub fn motion_model(&self) -> Result<MotionModel> {
        MotionModel::new(
            constant_velocity_map(self.dt, self.process_intensity)?,
            self.survival,
        )
    }

    /// Birth model over the configured sites (empty in fixed-cardinality
    /// mode, where nothing is born after initialisation).
    pub fn birth_model(&self) -> Result<BirthModel> {
        if self.fixed_cardinality.is_some() || self.birth.is_empty() {
            return Ok(BirthModel::empty());
        }
        let locations = self
            .birth
            .iter()
            .map(|site| Ok((site.existence, site.density()?)))
            .collect::<Result<Vec<_>>>()?;
        BirthModel::new(locations)
    }

    /// Measurement model of sensor `index`, with the clutter support set to
    /// this scenario's region (keeping sensor volume and region consistent
    /// by construction).
    pub fn sensor_model(&self, index: usize) -> Result<SensorModel> {
        let spec = self
            .sensors
            .get(index)
            .ok_or_else(|| Error::Scenario(format!("no sensor with index {index}")))?;
        SensorModel::new(
            position_measurement_map(spec.noise_std)?,
            spec.detection,
            spec.clutter_rate,
            self.region.volume(),
        )
    }

    pub fn sensor_models(&self) -> Result<Vec<SensorModel>> {
        (0..self.sensors.len()).map(|i| self.sensor_model(i)).collect()
    }
}

/// Constant-velocity transition: `A = [[1, T], [0, 1]] ⊗ I₂` with
/// white-noise-acceleration covariance
/// `R = r·[[T³/3, T²/2], [T²/2, T]] ⊗ I₂`.
pub fn constant_velocity_map(dt: f64, process_intensity: f64) -> Result<LinearGaussianMap> {
    let eye2 = DMatrix::<f64>::identity(2, 2);
    let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]).kronecker(&eye2);
    let q = DMatrix::from_row_slice(
        2,
        2,
        &[dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt.powi(2) / 2.0, dt],
    )
    .kronecker(&eye2)
        * process_intensity;
    LinearGaussianMap::new(a, q)
}

/// Position-only measurement: `C = [1, 0] ⊗ I₂` with noise `noise_std²·I₂`.
pub fn position_measurement_map(noise_std: f64) -> Result<LinearGaussianMap> {
    let eye2 = DMatrix::<f64>::identity(2, 2);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]).kronecker(&eye2);
    LinearGaussianMap::new(c, &eye2 * (noise_std * noise_std))
}

/// One object's life: the step it appeared, the Gaussian its initial state
/// is associated with (its birth-site density, or an uncertainty centred on
/// the true initial state in fixed-cardinality mode), and its state at each
/// consecutive step it was alive.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: Label,
    pub birth_step: usize,
    pub initial: Gaussian,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    /// State at an absolute time step, if alive then.
    pub fn state_at(&self, step: usize) -> Option<&DVector<f64>> {
        step.checked_sub(self.birth_step).and_then(|k| self.states.get(k))
    }
}

/// All object trajectories of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub duration: usize,
    pub trajectories: Vec<Trajectory>,
}

impl GroundTruth {
    /// Objects alive at `step`, in label order.
    pub fn live_at(&self, step: usize) -> Vec<(Label, &DVector<f64>)> {
        let mut live: Vec<_> = self
            .trajectories
            .iter()
            .filter_map(|t| t.state_at(step).map(|x| (t.label, x)))
            .collect();
        live.sort_by_key(|(label, _)| *label);
        live
    }

    pub fn cardinality_at(&self, step: usize) -> usize {
        self.trajectories.iter().filter(|t| t.state_at(step).is_some()).count()
    }
}

/// One sensor's scan at one step: the (shuffled) measurements, and for each
/// detected object the index of the measurement it generated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementFrame {
    pub measurements: Vec<DVector<f64>>,
    pub associations: BTreeMap<Label, usize>,
}

/// One sensor's frames for a whole run (`frames.len() == duration`).
#[derive(Debug, Clone, PartialEq)]
pub struct SensorData {
    pub frames: Vec<MeasurementFrame>,
}

fn truth_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

fn sensor_rng(seed: u64, sensor_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sensor_index as u64 + 1);
    rng
}

/// Simulate object trajectories. Uses stream 0 of the master seed.
///
/// Draw order per step: first each live object (in creation order) draws
/// survival then, if surviving, its transition noise; then each birth site
/// (in configuration order) draws a spawn decision then, if spawning, the
/// initial state. In fixed-cardinality mode step 0 instead places the
/// configured number of objects uniformly in the region (x then y per
/// object) with zero velocity, and later steps draw transition noise only.
pub fn generate_truth(scenario: &Scenario, seed: u64) -> Result<GroundTruth> {
    scenario.validate()?;
    let mut rng = truth_rng(seed);
    let motion = scenario.motion_model()?;
    let transition = motion.map().matrix().clone();
    // Zero process intensity means noiseless transitions; the degenerate
    // Gaussian cannot be represented, so skip the draw entirely.
    let process_noise = if scenario.process_intensity > 0.0 {
        Some(Gaussian::new(DVector::zeros(4), motion.map().noise().clone())?)
    } else {
        None
    };

    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut live: Vec<usize> = Vec::new(); // indices into `trajectories`

    if let Some(count) = scenario.fixed_cardinality {
        for i in 0..count {
            let position = scenario.region.sample_uniform(&mut rng);
            let state =
                DVector::from_column_slice(&[position[0], position[1], 0.0, 0.0]);
            let initial = Gaussian::new(
                state.clone(),
                DMatrix::identity(4, 4) * FIXED_CARDINALITY_STD.powi(2),
            )?;
            live.push(trajectories.len());
            trajectories.push(Trajectory {
                label: Label::new(0, i as u32 + 1),
                birth_step: 0,
                initial,
                states: vec![state],
            });
        }
    }

    for step in 0..scenario.duration {
        if step > 0 {
            let mut survivors = Vec::with_capacity(live.len());
            for &idx in &live {
                let survives =
                    scenario.fixed_cardinality.is_some() || rng.gen_bool(scenario.survival);
                if survives {
                    let previous = trajectories[idx].states.last().expect("live object");
                    let mut next = &transition * previous;
                    if let Some(noise) = &process_noise {
                        next += noise.sample(&mut rng);
                    }
                    trajectories[idx].states.push(next);
                    survivors.push(idx);
                }
            }
            live = survivors;
        }
        if scenario.fixed_cardinality.is_none() {
            let mut next_index = 1u32;
            for site in &scenario.birth {
                if site.existence > 0.0 && rng.gen_bool(site.existence) {
                    let initial = site.density()?;
                    let state = initial.sample(&mut rng);
                    live.push(trajectories.len());
                    trajectories.push(Trajectory {
                        label: Label::new(step as u32, next_index),
                        birth_step: step,
                        initial,
                        states: vec![state],
                    });
                    next_index += 1;
                }
            }
        }
    }

    Ok(GroundTruth { duration: scenario.duration, trajectories })
}

/// Simulate one sensor's measurements for a whole run. Uses stream
/// `sensor_index + 1` of the master seed, so each sensor's draws are
/// independent of every other stream.
///
/// Draw order per step: each live object (in label order) draws a detection
/// decision then, if detected, two standard normals for the measurement
/// noise; then the clutter count (Poisson, skipped entirely when the rate is
/// zero), then two uniforms per clutter point (x then y), and finally one
/// shuffle of the combined list.
pub fn generate_measurements(
    truth: &GroundTruth,
    scenario: &Scenario,
    sensor_index: usize,
    seed: u64,
) -> Result<SensorData> {
    scenario.validate()?;
    let spec = *scenario
        .sensors
        .get(sensor_index)
        .ok_or_else(|| Error::Scenario(format!("no sensor with index {sensor_index}")))?;
    let mut rng = sensor_rng(seed, sensor_index);
    let map = position_measurement_map(spec.noise_std)?;
    let matrix = map.matrix().clone();

    let mut frames = Vec::with_capacity(truth.duration);
    for step in 0..truth.duration {
        let mut items: Vec<(Option<Label>, DVector<f64>)> = Vec::new();
        for (label, state) in truth.live_at(step) {
            if spec.detection > 0.0 && rng.gen_bool(spec.detection) {
                let mut z = &matrix * state;
                z[0] += spec.noise_std * rng.sample::<f64, _>(rand_distr::StandardNormal);
                z[1] += spec.noise_std * rng.sample::<f64, _>(rand_distr::StandardNormal);
                items.push((Some(label), z));
            }
        }
        if spec.clutter_rate > 0.0 {
            let poisson = Poisson::new(spec.clutter_rate)
                .map_err(|e| Error::Scenario(format!("invalid clutter rate: {e}")))?;
            let count = poisson.sample(&mut rng) as usize;
            for _ in 0..count {
                items.push((None, scenario.region.sample_uniform(&mut rng)));
            }
        }
        items.shuffle(&mut rng);

        let mut frame = MeasurementFrame::default();
        for (slot, (origin, z)) in items.into_iter().enumerate() {
            if let Some(label) = origin {
                frame.associations.insert(label, slot);
            }
            frame.measurements.push(z);
        }
        frames.push(frame);
    }
    Ok(SensorData { frames })
}

/// [`generate_measurements`] for every configured sensor, in sensor order.
pub fn generate_all_measurements(
    truth: &GroundTruth,
    scenario: &Scenario,
    seed: u64,
) -> Result<Vec<SensorData>> {
    (0..scenario.sensors.len())
        .map(|i| generate_measurements(truth, scenario, i, seed))
        .collect()
}

/// Write the truth as delimited text: one row per live object per step,
/// `step,birth,index,px,py,vx,vy`.
pub fn write_truth_csv<W: Write>(truth: &GroundTruth, mut out: W) -> std::io::Result<()> {
    writeln!(out, "step,birth,index,px,py,vx,vy")?;
    for step in 0..truth.duration {
        for (label, state) in truth.live_at(step) {
            writeln!(
                out,
                "{step},{},{},{},{},{},{}",
                label.birth_time, label.index, state[0], state[1], state[2], state[3]
            )?;
        }
    }
    Ok(())
}

/// Write measurements as delimited text: one row per measurement,
/// `step,sensor,zx,zy`.
pub fn write_measurements_csv<W: Write>(
    sensors: &[SensorData],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "step,sensor,zx,zy")?;
    for (sensor_index, data) in sensors.iter().enumerate() {
        for (step, frame) in data.frames.iter().enumerate() {
            for z in &frame.measurements {
                writeln!(out, "{step},{sensor_index},{},{}", z[0], z[1])?;
            }
        }
    }
    Ok(())
}
