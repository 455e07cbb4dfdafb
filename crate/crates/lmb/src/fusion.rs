//! Multi-sensor update strategies over per-sensor LMB results.
//!
//! Three strategies are provided. The parallel-update (PU) merge divides the
//! shared prior out of the product of per-sensor posteriors — an exact Bayes
//! rearrangement when the per-sensor updates are exact. The
//! geometric-average (GA) merge takes a weighted geometric mean of the
//! per-sensor posteriors — more conservative, never tighter than a single
//! sensor. The iterated-corrector (IC) baseline simply applies the
//! single-sensor LBP update once per sensor in sequence, which is inherently
//! order-dependent once approximations intervene.
//!
//! Existence formulas are evaluated in log domain (products of `1−r` over
//! sensors underflow otherwise) with the conventions `0·log 0 = 0` and
//! saturation at `r ∈ {0, 1}`; when certain existence meets certain
//! nonexistence (impossible with finite likelihoods), nonexistence wins, so
//! a dead track can never be resurrected by a merge.

use nalgebra::DVector;

use crate::density::{LmbDensity, Track};
use crate::error::{Error, Result};
use crate::gaussian::{power_product, Gaussian, GaussianMixture};
use crate::lbp::{lbp_update, CollapseMode, LbpConfig, MessageState, SensorModel};

/// Multi-sensor update strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Parallel update: divide the prior out of the per-sensor product.
    Pu,
    /// Weighted geometric average of per-sensor posteriors.
    Ga,
    /// Sequential per-sensor correction (baseline).
    Ic,
}

/// Strategy plus its per-strategy knobs.
#[derive(Debug, Clone)]
pub struct FusionConfig {
    pub strategy: Strategy,
    /// GA only: per-sensor geometric weights `ω` (defaults to `1/S`).
    pub sensor_weights: Option<Vec<f64>>,
    /// IC only: processing order (defaults to ascending sensor index).
    pub sensor_order: Option<Vec<usize>>,
}

impl FusionConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self { strategy, sensor_weights: None, sensor_order: None }
    }

    /// Check the per-strategy knobs against a sensor count.
    pub fn validate(&self, num_sensors: usize) -> Result<()> {
        if let Some(weights) = &self.sensor_weights {
            validate_weights(weights, num_sensors)?;
        }
        if let Some(order) = &self.sensor_order {
            validate_order(order, num_sensors)?;
        }
        Ok(())
    }

    /// GA weights to use for `num_sensors` sensors.
    pub fn ga_weights(&self, num_sensors: usize) -> Vec<f64> {
        self.sensor_weights.clone().unwrap_or_else(|| equal_weights(num_sensors))
    }

    /// IC processing order to use for `num_sensors` sensors.
    pub fn ic_order(&self, num_sensors: usize) -> Vec<usize> {
        self.sensor_order.clone().unwrap_or_else(|| (0..num_sensors).collect())
    }
}

/// Equal GA weights `1/S`.
pub fn equal_weights(num_sensors: usize) -> Vec<f64> {
    vec![1.0 / num_sensors as f64; num_sensors]
}

fn validate_weights(weights: &[f64], num_sensors: usize) -> Result<()> {
    if weights.len() != num_sensors {
        return Err(Error::DimensionMismatch { expected: num_sensors, got: weights.len() });
    }
    if weights.iter().any(|w| !w.is_finite() || !(0.0..=1.0).contains(w)) {
        return Err(Error::InvalidParameter("sensor weights must lie in [0, 1]".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "sensor weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

fn validate_order(order: &[usize], num_sensors: usize) -> Result<()> {
    let mut seen = vec![false; num_sensors];
    if order.len() != num_sensors {
        return Err(Error::DimensionMismatch { expected: num_sensors, got: order.len() });
    }
    for &idx in order {
        if idx >= num_sensors || seen[idx] {
            return Err(Error::InvalidParameter(format!(
                "sensor order {order:?} is not a permutation of 0..{num_sensors}"
            )));
        }
        seen[idx] = true;
    }
    Ok(())
}

/// `1 / (1 + exp(log_alt − log_num))` with saturation when either side is
/// impossible; ties of two impossibilities resolve to nonexistence.
fn existence_from_logs(log_num: f64, log_alt: f64) -> f64 {
    if log_num == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_alt == f64::NEG_INFINITY {
        return 1.0;
    }
    (1.0 / (1.0 + (log_alt - log_num).exp())).clamp(0.0, 1.0)
}

fn pu_existence(prior_r: f64, sensor_rs: &[f64], log_eta: f64) -> f64 {
    if prior_r == 0.0 || sensor_rs.iter().any(|r| *r == 0.0) {
        return 0.0;
    }
    if prior_r == 1.0 {
        // All sensor updates of a certainly existing object keep r = 1.
        return 1.0;
    }
    let exponent = 1.0 - sensor_rs.len() as f64;
    let log_num =
        log_eta + exponent * prior_r.ln() + sensor_rs.iter().map(|r| r.ln()).sum::<f64>();
    let log_alt = exponent * (1.0 - prior_r).ln()
        + sensor_rs.iter().map(|r| (1.0 - r).ln()).sum::<f64>();
    existence_from_logs(log_num, log_alt)
}

fn ga_existence(sensor_rs: &[f64], weights: &[f64], log_eta: f64) -> f64 {
    if sensor_rs.iter().zip(weights).any(|(r, w)| *r == 0.0 && *w > 0.0) {
        return 0.0;
    }
    let mut log_num = log_eta;
    let mut log_alt = 0.0;
    for (r, w) in sensor_rs.iter().zip(weights) {
        if *w > 0.0 {
            log_num += w * r.ln();
            log_alt += w * (1.0 - r).ln();
        }
    }
    existence_from_logs(log_num, log_alt)
}

/// PU merge output: the fused density plus the number of tracks that fell
/// back to an equal-weight GA merge because the prior division produced a
/// non-positive-definite precision.
#[derive(Debug, Clone)]
pub struct PuMergeResult {
    pub density: LmbDensity,
    pub fallback_count: usize,
}

fn check_label_sets(prior: &LmbDensity, updated: &[LmbDensity]) -> Result<()> {
    if updated.is_empty() {
        return Err(Error::InvalidParameter("merge requires at least one sensor update".into()));
    }
    for density in updated {
        if density.len() != prior.len()
            || !density.labels().zip(prior.labels()).all(|(a, b)| a == b)
        {
            return Err(Error::LabelSetMismatch);
        }
    }
    Ok(())
}

/// Parallel-update merge: per label,
/// `p^{(ℓ)} ∝ (p₊)^{1−S} · ∏_i p^{(i,ℓ)}` with the existence probability
/// evaluated from the same normaliser `η`. Tracks whose division fails fall
/// back to an equal-weight GA merge and are counted in the result.
pub fn pu_merge(prior: &LmbDensity, updated: &[LmbDensity]) -> Result<PuMergeResult> {
    check_label_sets(prior, updated)?;
    let s = updated.len();
    let mut density = LmbDensity::new();
    let mut fallback_count = 0;
    for track in prior.tracks() {
        let label = track.label;
        let sensor_tracks: Vec<&Track> =
            updated.iter().map(|d| d.get(&label).expect("label sets checked")).collect();
        let sensor_rs: Vec<f64> = sensor_tracks.iter().map(|t| t.existence()).collect();
        let mut terms = Vec::with_capacity(s + 1);
        terms.push((track.spatial().clone(), 1.0 - s as f64));
        terms.extend(sensor_tracks.iter().map(|t| (t.spatial().clone(), 1.0)));
        let fused = match power_product(&terms) {
            Ok((spatial, log_eta)) => {
                let r = pu_existence(track.existence(), &sensor_rs, log_eta);
                Track::new(label, r, spatial)?
            }
            Err(Error::NotPositiveDefinite { .. }) => {
                fallback_count += 1;
                let weights = equal_weights(s);
                let ga_terms: Vec<(Gaussian, f64)> = sensor_tracks
                    .iter()
                    .zip(&weights)
                    .map(|(t, w)| (t.spatial().clone(), *w))
                    .collect();
                let (spatial, log_eta) = power_product(&ga_terms)?;
                let r = ga_existence(&sensor_rs, &weights, log_eta);
                Track::new(label, r, spatial)?
            }
            Err(e) => return Err(e),
        };
        density.insert(fused)?;
    }
    Ok(PuMergeResult { density, fallback_count })
}

/// Geometric-average merge: per label, `p^{(ℓ)} ∝ ∏_i (p^{(i,ℓ)})^{ωᵢ}` with
/// the existence probability evaluated from the same normaliser `η`.
pub fn ga_merge(updated: &[LmbDensity], weights: &[f64]) -> Result<LmbDensity> {
    let first = updated
        .first()
        .ok_or_else(|| Error::InvalidParameter("merge requires at least one sensor update".into()))?;
    check_label_sets(first, updated)?;
    validate_weights(weights, updated.len())?;
    let mut density = LmbDensity::new();
    for track in first.tracks() {
        let label = track.label;
        let sensor_tracks: Vec<&Track> =
            updated.iter().map(|d| d.get(&label).expect("label sets checked")).collect();
        let sensor_rs: Vec<f64> = sensor_tracks.iter().map(|t| t.existence()).collect();
        let terms: Vec<(Gaussian, f64)> = sensor_tracks
            .iter()
            .zip(weights)
            .map(|(t, w)| (t.spatial().clone(), *w))
            .collect();
        let (spatial, log_eta) = power_product(&terms)?;
        let r = ga_existence(&sensor_rs, weights, log_eta);
        density.insert(Track::new(label, r, spatial)?)?;
    }
    Ok(density)
}

/// Iterated-corrector baseline: fold the single-sensor LBP update
/// (weak-marginal collapse) over the sensor frames in the given order.
/// Returns the final density and each applied update's message state, in
/// application order.
pub fn ic_update(
    prior: &LmbDensity,
    frames: &[(SensorModel, Vec<DVector<f64>>)],
    order: &[usize],
    config: &LbpConfig,
) -> Result<(LmbDensity, Vec<MessageState>)> {
    validate_order(order, frames.len())?;
    let mut current = prior.clone();
    let mut states = Vec::with_capacity(frames.len());
    for &idx in order {
        let (sensor, measurements) = &frames[idx];
        let (next, msgs) =
            lbp_update(&current, measurements, sensor, config, CollapseMode::WeakMarginal)?;
        current = next;
        states.push(msgs);
    }
    Ok((current, states))
}

/// Component-wise approximation of a mixture power,
/// `(Σ αᵢ𝒩ᵢ)^ω ≈ Σ (αᵢ𝒩ᵢ)^ω`: each component's covariance is inflated to
/// `Σᵢ/ω` and the weights are renormalised with the component normalisers
/// (`∝ αᵢ^ω·|Σᵢ|^{(1−ω)/2}`). Exact when components do not overlap.
/// `exponent` must lie in `(0, 1]` — a zero exponent has no Gaussian limit.
pub fn gm_power_approx(gm: &GaussianMixture, exponent: f64) -> Result<GaussianMixture> {
    if !exponent.is_finite() || exponent <= 0.0 || exponent > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "mixture exponent {exponent} outside (0, 1]"
        )));
    }
    if exponent == 1.0 {
        return Ok(gm.clone());
    }
    let mut log_weights = Vec::with_capacity(gm.components().len());
    let mut components = Vec::with_capacity(gm.components().len());
    for (alpha, g) in gm.components() {
        let chol = crate::gaussian::cholesky(g.covariance(), "mixture component covariance")?;
        let log_det = crate::gaussian::log_det_from_cholesky(&chol);
        log_weights.push(exponent * alpha.ln() + 0.5 * (1.0 - exponent) * log_det);
        components.push(Gaussian::new(g.mean().clone(), g.covariance() / exponent)?);
    }
    let max_log = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weighted = log_weights
        .into_iter()
        .map(|lw| (lw - max_log).exp())
        .zip(components)
        .collect();
    GaussianMixture::from_weighted(weighted)
}
