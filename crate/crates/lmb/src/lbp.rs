//! Single-sensor LMB measurement update with loopy-belief-propagation (LBP)
//! data association.
//!
//! The association problem is a bipartite cluster graph between object
//! clusters and measurement clusters. Messages are normalised relative to
//! their first entry, which reduces message passing to a fixed-point
//! iteration on two `n×m` matrices: `μ_TM` (object → measurement) and
//! `μ_MT` (measurement → object). At the fixed point, each track's belief
//! yields its posterior existence probability and an `(m+1)`-component
//! Gaussian-mixture spatial density (component 0 is the missed-detection
//! hypothesis), which is collapsed back to a single Gaussian so the output
//! is again an LMB density.

use nalgebra::{DMatrix, DVector};

use crate::density::{LmbDensity, Track};
use crate::error::{Error, Result};
use crate::gaussian::{weak_marginal, GaussianMixture, LinearGaussianMap, UpdateCache};

/// Sensor description: linear-Gaussian measurement map, constant detection
/// probability, and a Poisson clutter process uniform over a surveillance
/// region of the given volume.
#[derive(Debug, Clone)]
pub struct SensorModel {
    /// Measurement matrix `C` and measurement-noise covariance.
    pub map: LinearGaussianMap,
    /// Detection probability `P_D ∈ [0, 1]`.
    pub detection: f64,
    /// Expected number of clutter returns per scan, `λ ≥ 0`.
    pub clutter_rate: f64,
    /// Area (volume) of the uniform clutter support, `> 0`.
    pub region_volume: f64,
}

impl SensorModel {
    pub fn new(
        map: LinearGaussianMap,
        detection: f64,
        clutter_rate: f64,
        region_volume: f64,
    ) -> Result<Self> {
        if !detection.is_finite() || !(0.0..=1.0).contains(&detection) {
            return Err(Error::InvalidParameter(format!(
                "detection probability {detection} outside [0, 1]"
            )));
        }
        if !clutter_rate.is_finite() || clutter_rate < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "clutter rate {clutter_rate} must be a finite non-negative number"
            )));
        }
        if !region_volume.is_finite() || region_volume <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "region volume {region_volume} must be finite and positive"
            )));
        }
        Ok(Self { map, detection, clutter_rate, region_volume })
    }

    /// Clutter intensity `κ = λ / volume`.
    pub fn clutter_intensity(&self) -> f64 {
        self.clutter_rate / self.region_volume
    }
}

/// The `n×(m+1)` association likelihood-ratio matrix. Column 0 holds the
/// missed-detection likelihood `1 − P_D`; column `j ≥ 1` holds
/// `P_D·⟨g(z_j|·), p₊⟩ / κ(z_j)` for measurement `j`.
///
/// Alongside the ratio values the matrix carries each track's Kalman update
/// cache so the posterior construction does not refactorize the same
/// innovation covariances.
#[derive(Debug, Clone)]
pub struct LikelihoodMatrix {
    values: DMatrix<f64>,
    caches: Vec<UpdateCache>,
}

impl LikelihoodMatrix {
    /// Wrap raw ratio values (no update caches; posterior construction will
    /// reject such a matrix). Intended for message-passing tests.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::DegenerateLikelihood(
                "matrix must include the missed-detection column".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::DegenerateLikelihood(
                "entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self { values, caches: Vec::new() })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Number of tracks (rows).
    pub fn num_tracks(&self) -> usize {
        self.values.nrows()
    }

    /// Number of measurements (columns minus the miss column).
    pub fn num_measurements(&self) -> usize {
        self.values.ncols() - 1
    }
}

/// LBP message matrices and termination status.
#[derive(Debug, Clone)]
pub struct MessageState {
    /// Object → measurement messages, `n×m`.
    pub mu_tm: DMatrix<f64>,
    /// Measurement → object messages, `n×m`.
    pub mu_mt: DMatrix<f64>,
    /// Completed message sweeps.
    pub iterations: usize,
    /// Whether the max-absolute `μ_MT` change dropped below tolerance.
    pub converged: bool,
}

/// LBP termination parameters.
#[derive(Debug, Clone, Copy)]
pub struct LbpConfig {
    /// Convergence tolerance on the max absolute `μ_MT` change.
    pub tolerance: f64,
    /// Sweep cap; non-converged runs proceed with the current messages.
    pub max_iterations: usize,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 200 }
    }
}

/// How the `(m+1)`-component measurement-updated mixture is collapsed back
/// to a single Gaussian per track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapseMode {
    /// Keep the component with the largest association weight. Keeps the
    /// posterior a genuine component of the prior family, which keeps the
    /// density division of the parallel-update merge valid.
    BestComponent,
    /// Moment-match the mixture (weak marginal).
    WeakMarginal,
}

/// Build the association likelihood-ratio matrix for a prior LMB density and
/// one sensor scan.
///
/// With `λ = 0` the ratio denominator `κ` vanishes; entries are then taken
/// relative to a unit reference intensity (`κ_eff = 1`) so that message
/// passing stays finite. Association weights within a track are unaffected
/// by this common scale.
pub fn build_likelihood_matrix(
    prior: &LmbDensity,
    measurements: &[DVector<f64>],
    sensor: &SensorModel,
) -> Result<LikelihoodMatrix> {
    let n = prior.len();
    let m = measurements.len();
    let kappa = sensor.clutter_intensity();
    if sensor.clutter_rate > 0.0 && kappa <= 0.0 {
        return Err(Error::DegenerateLikelihood(format!(
            "clutter rate {} with zero clutter intensity",
            sensor.clutter_rate
        )));
    }
    let log_kappa = if sensor.clutter_rate > 0.0 { kappa.ln() } else { 0.0 };
    for z in measurements {
        if z.len() != sensor.map.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: sensor.map.output_dim(),
                got: z.len(),
            });
        }
    }
    let mut values = DMatrix::zeros(n, m + 1);
    let mut caches = Vec::with_capacity(n);
    for (i, track) in prior.tracks().enumerate() {
        values[(i, 0)] = 1.0 - sensor.detection;
        let cache = UpdateCache::new(track.spatial(), &sensor.map)?;
        if sensor.detection > 0.0 {
            let log_pd = sensor.detection.ln();
            for (j, z) in measurements.iter().enumerate() {
                let log_ratio = log_pd + cache.log_likelihood(z)? - log_kappa;
                values[(i, j + 1)] = log_ratio.exp();
            }
        }
        caches.push(cache);
    }
    Ok(LikelihoodMatrix { values, caches })
}

/// Run the LBP fixed-point iteration.
///
/// Both message matrices start at all-ones. Each sweep performs a full
/// `μ_TM` update followed by a full `μ_MT` update (Jacobi-style within each
/// half), and iteration stops when the max absolute change in `μ_MT` drops
/// below `tol` or after `max_iter` sweeps.
pub fn lbp_solve(
    likelihood: &LikelihoodMatrix,
    existence: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<MessageState> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("LBP tolerance {tol} must be positive")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("LBP iteration cap must be at least 1".into()));
    }
    let n = likelihood.num_tracks();
    let m = likelihood.num_measurements();
    if existence.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: existence.len() });
    }
    let l = likelihood.values();
    let mut mu_tm = DMatrix::from_element(n, m, 1.0);
    let mut mu_mt = DMatrix::from_element(n, m, 1.0);
    let mut iterations = 0;
    let mut converged = n == 0 || m == 0;
    while iterations < max_iter && !converged {
        iterations += 1;
        // μ_TM^{i,j} = r·L_ij / (1 − r + r·(L_i0 + Σ_{k≠j} L_ik·μ_MT^{i,k}))
        for i in 0..n {
            let r = existence[i];
            let weighted_sum: f64 = (0..m).map(|k| l[(i, k + 1)] * mu_mt[(i, k)]).sum();
            for j in 0..m {
                let denom = 1.0 - r
                    + r * (l[(i, 0)] + weighted_sum - l[(i, j + 1)] * mu_mt[(i, j)]);
                mu_tm[(i, j)] = r * l[(i, j + 1)] / denom;
            }
        }
        // μ_MT^{i,j} = 1 / (1 + Σ_{k≠i} μ_TM^{k,j})
        let mut delta = 0.0_f64;
        for j in 0..m {
            let col_sum: f64 = (0..n).map(|k| mu_tm[(k, j)]).sum();
            for i in 0..n {
                let updated = 1.0 / (1.0 + col_sum - mu_tm[(i, j)]);
                delta = delta.max((updated - mu_mt[(i, j)]).abs());
                mu_mt[(i, j)] = updated;
            }
        }
        if !delta.is_finite()
            || mu_tm.iter().any(|v| !v.is_finite())
            || mu_mt.iter().any(|v| !v.is_finite())
        {
            return Err(Error::DegenerateMessages);
        }
        converged = delta < tol;
    }
    Ok(MessageState { mu_tm, mu_mt, iterations, converged })
}

/// Extract the measurement-updated LMB density from converged (or capped)
/// messages.
///
/// Track `i`'s belief gives the posterior existence
/// `r = r₊·q / (1 − r₊ + r₊·q)` with `q = L_i0 + Σ_k L_ik·μ_MT^{i,k}`, and a
/// spatial mixture whose component `k` is the prior conditioned on
/// measurement `k` with weight `L_ik·μ_MT^{i,k}` (component 0 is the prior
/// itself with weight `L_i0`, and `μ_MT^{i,0} ≡ 1`). The mixture is collapsed
/// per `mode`. A track whose every association weight is zero (possible only
/// with `P_D = 1` and all ratios zero) keeps its prior spatial density with
/// posterior existence 0.
pub fn lbp_posterior(
    prior: &LmbDensity,
    likelihood: &LikelihoodMatrix,
    msgs: &MessageState,
    measurements: &[DVector<f64>],
    mode: CollapseMode,
) -> Result<LmbDensity> {
    let n = likelihood.num_tracks();
    let m = likelihood.num_measurements();
    if prior.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: prior.len() });
    }
    if msgs.mu_mt.nrows() != n || msgs.mu_mt.ncols() != m {
        return Err(Error::DimensionMismatch { expected: n * m, got: msgs.mu_mt.len() });
    }
    if m > 0 && likelihood.caches.len() != n {
        return Err(Error::DegenerateLikelihood(
            "matrix carries no update caches; build it with build_likelihood_matrix".into(),
        ));
    }
    let l = likelihood.values();
    let mut out = LmbDensity::new();
    for (i, track) in prior.tracks().enumerate() {
        let r = track.existence();
        let mut q = l[(i, 0)];
        for k in 0..m {
            q += l[(i, k + 1)] * msgs.mu_mt[(i, k)];
        }
        let denom = 1.0 - r + r * q;
        let r_post = if denom > 0.0 { (r * q / denom).clamp(0.0, 1.0) } else { 0.0 };
        let spatial = if q > 0.0 {
            let mut components = Vec::with_capacity(m + 1);
            components.push((l[(i, 0)], track.spatial().clone()));
            for (k, z) in measurements.iter().enumerate() {
                let weight = l[(i, k + 1)] * msgs.mu_mt[(i, k)];
                if weight > 0.0 {
                    components.push((weight, likelihood.caches[i].posterior(z)?));
                }
            }
            let mixture = GaussianMixture::from_weighted(components)?;
            match mode {
                CollapseMode::BestComponent => mixture.best_component().clone(),
                CollapseMode::WeakMarginal => weak_marginal(&mixture)?,
            }
        } else {
            track.spatial().clone()
        };
        out.insert(Track::new(track.label, r_post, spatial)?)?;
    }
    Ok(out)
}

/// Convenience wrapper: build the likelihood matrix, run LBP, and extract
/// the posterior in one call. Returns the posterior and the message state
/// (for convergence diagnostics).
pub fn lbp_update(
    prior: &LmbDensity,
    measurements: &[DVector<f64>],
    sensor: &SensorModel,
    config: &LbpConfig,
    mode: CollapseMode,
) -> Result<(LmbDensity, MessageState)> {
    let likelihood = build_likelihood_matrix(prior, measurements, sensor)?;
    let existence: Vec<f64> = prior.tracks().map(|t| t.existence()).collect();
    let msgs = lbp_solve(&likelihood, &existence, config.tolerance, config.max_iterations)?;
    let posterior = lbp_posterior(prior, &likelihood, &msgs, measurements, mode)?;
    Ok((posterior, msgs))
}
