//! Exact GLMB measurement update by full enumeration of association events.
//!
//! The approximate LBP update is validated against this module at small
//! problem sizes: every association event (each track missed or matched to a
//! distinct measurement) is enumerated, scored in log domain, and normalised
//! into a GLMB hypothesis set; moment matching that set back to an LMB gives
//! the exact marginal existence probabilities and full mixture spatial
//! densities. This is a test reference, not a runtime path — the number of
//! events is `Σ_k k!·C(n,k)·C(m,k)`, which explodes combinatorially, so
//! oversized instances are rejected.

use crate::density::{Label, LmbDensity};
use crate::error::{Error, Result};
use crate::gaussian::{log_sum_exp, Gaussian, GaussianMixture, UpdateCache};
use crate::lbp::SensorModel;
use nalgebra::DVector;

/// Largest admissible number of association events for enumeration.
pub const EVENT_LIMIT: u64 = 10_000_000;

/// One association event: `assignment[i]` is the measurement matched to the
/// `i`-th track in label order, with `0` meaning missed detection and `j ≥ 1`
/// meaning measurement `j−1`. Positive values are pairwise distinct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationEvent {
    pub assignment: Vec<usize>,
}

/// One GLMB posterior hypothesis: an association event, its normalised
/// weight `σ`, and the per-track conditional parameters `(r, p)`.
#[derive(Debug, Clone)]
pub struct GlmbHypothesis {
    pub event: AssociationEvent,
    pub sigma: f64,
    pub tracks: Vec<(Label, f64, Gaussian)>,
}

/// A track of the moment-matched LMB with its full mixture spatial density.
#[derive(Debug, Clone)]
pub struct MixtureTrack {
    pub label: Label,
    pub existence: f64,
    pub spatial: GaussianMixture,
}

/// Moment-matched LMB density retaining full mixtures, plus the labels of
/// any tracks dropped because their matched existence was exactly zero.
#[derive(Debug, Clone)]
pub struct MomentMatched {
    pub tracks: Vec<MixtureTrack>,
    pub dropped: Vec<Label>,
}

/// Closed-form number of association events, `Σ_k k!·C(n,k)·C(m,k)`.
///
/// Returned as `f64` because the count overflows 64-bit integers long before
/// enumeration becomes feasible (20 tracks and 20 measurements already yield
/// on the order of 10²¹ events).
pub fn association_event_count(n: usize, m: usize) -> f64 {
    let mut term = 1.0;
    let mut total = 1.0;
    for k in 1..=n.min(m) {
        term *= ((n - k + 1) * (m - k + 1)) as f64 / k as f64;
        total += term;
    }
    total
}

/// Enumerate every association event exactly once, in lexicographic order of
/// the assignment vector. Rejects instances whose closed-form count exceeds
/// [`EVENT_LIMIT`].
pub fn enumerate_events(n: usize, m: usize) -> Result<Vec<AssociationEvent>> {
    let count = association_event_count(n, m);
    if count > EVENT_LIMIT as f64 {
        return Err(Error::InstanceTooLarge { n, m, count, limit: EVENT_LIMIT });
    }
    let mut events = Vec::with_capacity(count as usize);
    let mut assignment = vec![0usize; n];
    let mut used = vec![false; m];
    enumerate_recursive(0, n, m, &mut assignment, &mut used, &mut events);
    Ok(events)
}

fn enumerate_recursive(
    i: usize,
    n: usize,
    m: usize,
    assignment: &mut Vec<usize>,
    used: &mut Vec<bool>,
    events: &mut Vec<AssociationEvent>,
) {
    if i == n {
        events.push(AssociationEvent { assignment: assignment.clone() });
        return;
    }
    assignment[i] = 0;
    enumerate_recursive(i + 1, n, m, assignment, used, events);
    for j in 1..=m {
        if !used[j - 1] {
            used[j - 1] = true;
            assignment[i] = j;
            enumerate_recursive(i + 1, n, m, assignment, used, events);
            assignment[i] = 0;
            used[j - 1] = false;
        }
    }
}

/// Exact GLMB measurement update: enumerate all association events, score
/// each in log domain, and normalise.
///
/// Event weights use absolute (not ratio) clutter factors — each unassigned
/// measurement contributes its clutter intensity `κ` — so a zero clutter
/// rate correctly assigns zero weight to any event that would explain a
/// measurement as clutter.
pub fn exact_update(
    prior: &LmbDensity,
    measurements: &[DVector<f64>],
    sensor: &SensorModel,
) -> Result<Vec<GlmbHypothesis>> {
    let n = prior.len();
    let m = measurements.len();
    let events = enumerate_events(n, m)?;
    let kappa = sensor.clutter_intensity();
    let log_kappa = kappa.ln(); // -inf when the clutter rate is zero
    let pd = sensor.detection;

    struct TrackData {
        label: Label,
        existence: f64,
        prior_spatial: Gaussian,
        cache: UpdateCache,
        log_marginals: Vec<f64>,
    }
    let mut tracks = Vec::with_capacity(n);
    for track in prior.tracks() {
        let cache = UpdateCache::new(track.spatial(), &sensor.map)?;
        let log_marginals = measurements
            .iter()
            .map(|z| cache.log_likelihood(z))
            .collect::<Result<Vec<_>>>()?;
        tracks.push(TrackData {
            label: track.label,
            existence: track.existence(),
            prior_spatial: track.spatial().clone(),
            cache,
            log_marginals,
        });
    }

    let mut log_weights = Vec::with_capacity(events.len());
    for event in &events {
        let mut log_w = 0.0;
        let mut assigned = 0usize;
        for (track, &theta) in tracks.iter().zip(&event.assignment) {
            let r = track.existence;
            if theta == 0 {
                // Track unobserved: either it does not exist, or it exists and
                // was missed.
                log_w += (1.0 - r + r * (1.0 - pd)).ln();
            } else {
                assigned += 1;
                log_w += (r * pd).ln() + track.log_marginals[theta - 1];
            }
        }
        // Every unassigned measurement is clutter. Skip the term when no
        // measurement is unassigned: 0·log 0 must be 0, not NaN, when the
        // clutter rate is zero.
        if assigned < m {
            log_w += (m - assigned) as f64 * log_kappa;
        }
        log_weights.push(log_w);
    }
    let log_total = log_sum_exp(&log_weights);
    if !log_total.is_finite() {
        return Err(Error::ZeroEventWeight);
    }

    let mut hypotheses = Vec::with_capacity(events.len());
    for (event, log_w) in events.into_iter().zip(log_weights) {
        let sigma = (log_w - log_total).exp();
        let mut hyp_tracks = Vec::with_capacity(n);
        for (track, &theta) in tracks.iter().zip(&event.assignment) {
            let (r, spatial) = if theta == 0 {
                let r = track.existence;
                let denom = 1.0 - r + r * (1.0 - pd);
                let r_post = if denom > 0.0 { r * (1.0 - pd) / denom } else { 0.0 };
                (r_post, track.prior_spatial.clone())
            } else {
                (1.0, track.cache.posterior(&measurements[theta - 1])?)
            };
            hyp_tracks.push((track.label, r, spatial));
        }
        hypotheses.push(GlmbHypothesis { event, sigma, tracks: hyp_tracks });
    }
    Ok(hypotheses)
}

/// Collapse a GLMB hypothesis set to an LMB by matching the labelled PHD:
/// `r^{(ℓ)} = Σ_θ σ^{(θ)} r^{(θ,ℓ)}` with the spatial density the
/// `σ·r`-weighted mixture of the hypothesis posteriors. Tracks whose matched
/// existence is exactly zero carry no spatial information and are reported
/// in `dropped`.
pub fn moment_match(hypotheses: &[GlmbHypothesis]) -> Result<MomentMatched> {
    let first = hypotheses
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty hypothesis set".into()))?;
    let mut tracks = Vec::with_capacity(first.tracks.len());
    let mut dropped = Vec::new();
    for idx in 0..first.tracks.len() {
        let label = first.tracks[idx].0;
        let mut existence = 0.0;
        let mut components = Vec::with_capacity(hypotheses.len());
        for hyp in hypotheses {
            let (l, r, ref spatial) = hyp.tracks[idx];
            debug_assert_eq!(l, label, "hypotheses must share one label order");
            existence += hyp.sigma * r;
            let w = hyp.sigma * r;
            if w > 0.0 {
                components.push((w, spatial.clone()));
            }
        }
        if existence > 0.0 {
            tracks.push(MixtureTrack {
                label,
                existence: existence.min(1.0),
                spatial: GaussianMixture::from_weighted(components)?,
            });
        } else {
            dropped.push(label);
        }
    }
    Ok(MomentMatched { tracks, dropped })
}
