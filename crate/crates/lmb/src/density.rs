//! Labelled multi-Bernoulli (LMB) density representation and the filter-state
//! operations on it: prediction, cardinality distribution, pruning, and
//! posterior state extraction.
//!
//! An LMB density is a set of independent Bernoulli tracks keyed by a unique
//! label; keying the map by label enforces the distinct-label structure of
//! the density. The multi-object weight of a label set `L` is
//! `w(L) = ∏_{ℓ∈L} r_ℓ · ∏_{ℓ∉L} (1−r_ℓ)`, so the cardinality distribution
//! is the Poisson-binomial distribution of the existence probabilities.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gaussian::{predict_gaussian, Gaussian, LinearGaussianMap};

/// Unique track identity `(birth_time, index)`, ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    /// Time-step index at which the track was born.
    pub birth_time: u32,
    /// Position (1-based) within that step's birth locations.
    pub index: u32,
}

impl Label {
    pub fn new(birth_time: u32, index: u32) -> Self {
        Self { birth_time, index }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.birth_time, self.index)
    }
}

/// One Bernoulli component: a labelled object with existence probability
/// `r` and spatial density `p`.
#[derive(Debug, Clone)]
pub struct Track {
    pub label: Label,
    existence: f64,
    spatial: Gaussian,
}

impl Track {
    pub fn new(label: Label, existence: f64, spatial: Gaussian) -> Result<Self> {
        if !existence.is_finite() || !(0.0..=1.0).contains(&existence) {
            return Err(Error::InvalidParameter(format!(
                "existence probability {existence} outside [0, 1]"
            )));
        }
        Ok(Self { label, existence, spatial })
    }

    pub fn existence(&self) -> f64 {
        self.existence
    }

    pub fn spatial(&self) -> &Gaussian {
        &self.spatial
    }
}

/// A labelled multi-Bernoulli density: tracks keyed by their (unique) label.
#[derive(Debug, Clone, Default)]
pub struct LmbDensity {
    tracks: BTreeMap<Label, Track>,
}

impl LmbDensity {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tracks(tracks: impl IntoIterator<Item = Track>) -> Result<Self> {
        let mut density = Self::new();
        for track in tracks {
            density.insert(track)?;
        }
        Ok(density)
    }

    /// Add a track; fails if its label is already present.
    pub fn insert(&mut self, track: Track) -> Result<()> {
        if self.tracks.contains_key(&track.label) {
            return Err(Error::DuplicateLabel(track.label));
        }
        self.tracks.insert(track.label, track);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn get(&self, label: &Label) -> Option<&Track> {
        self.tracks.get(label)
    }

    /// Tracks in label order (deterministic).
    pub fn tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.values()
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.tracks.keys()
    }

    /// Expected cardinality `Σ_ℓ r_ℓ`.
    pub fn expected_cardinality(&self) -> f64 {
        self.tracks.values().map(Track::existence).sum()
    }
}

/// Birth locations appended at every prediction step; each spawns a new
/// Bernoulli track with existence `r_B` and the configured spatial prior.
#[derive(Debug, Clone)]
pub struct BirthModel {
    locations: Vec<(f64, Gaussian)>,
}

impl BirthModel {
    pub fn new(locations: Vec<(f64, Gaussian)>) -> Result<Self> {
        for (r, _) in &locations {
            if !r.is_finite() || *r <= 0.0 || *r >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "birth existence probability {r} outside (0, 1)"
                )));
            }
        }
        Ok(Self { locations })
    }

    /// A birth model with no locations (nothing is ever born).
    pub fn empty() -> Self {
        Self { locations: Vec::new() }
    }

    pub fn locations(&self) -> &[(f64, Gaussian)] {
        &self.locations
    }
}

/// Linear-Gaussian motion map plus a constant survival probability.
#[derive(Debug, Clone)]
pub struct MotionModel {
    map: LinearGaussianMap,
    survival: f64,
}

impl MotionModel {
    pub fn new(map: LinearGaussianMap, survival: f64) -> Result<Self> {
        if !survival.is_finite() || !(0.0..=1.0).contains(&survival) {
            return Err(Error::InvalidParameter(format!(
                "survival probability {survival} outside [0, 1]"
            )));
        }
        Ok(Self { map, survival })
    }

    pub fn map(&self) -> &LinearGaussianMap {
        &self.map
    }

    pub fn survival(&self) -> f64 {
        self.survival
    }
}

/// LMB prediction: every track survives with `r₊ = P_S·r` and its spatial
/// density is pushed through the motion map; birth tracks are appended with
/// labels `(t, 1..)` in configuration order.
pub fn predict(
    lmb: &LmbDensity,
    motion: &MotionModel,
    birth: &BirthModel,
    t: u32,
) -> Result<LmbDensity> {
    let mut out = LmbDensity::new();
    for track in lmb.tracks() {
        let spatial = predict_gaussian(track.spatial(), motion.map())?;
        out.insert(Track::new(track.label, motion.survival() * track.existence(), spatial)?)?;
    }
    for (i, (r, spatial)) in birth.locations().iter().enumerate() {
        let label = Label::new(t, i as u32 + 1);
        out.insert(Track::new(label, *r, spatial.clone())?)?;
    }
    Ok(out)
}

/// Cardinality distribution over `{0..n}`: the Poisson-binomial distribution
/// of the existence probabilities, computed by an O(n²) convolution.
pub fn cardinality_distribution(lmb: &LmbDensity) -> Vec<f64> {
    let mut dist = vec![1.0];
    for track in lmb.tracks() {
        let r = track.existence();
        let mut next = vec![0.0; dist.len() + 1];
        for (k, w) in dist.iter().enumerate() {
            next[k] += w * (1.0 - r);
            next[k + 1] += w * r;
        }
        dist = next;
    }
    dist
}

/// Drop every track with existence below `threshold` (retained tracks keep
/// their labels).
pub fn prune(lmb: &LmbDensity, threshold: f64) -> LmbDensity {
    LmbDensity {
        tracks: lmb
            .tracks
            .iter()
            .filter(|(_, t)| t.existence() >= threshold)
            .map(|(l, t)| (*l, t.clone()))
            .collect(),
    }
}

/// MAP-cardinality state extraction: select the `n^MAP` tracks with the
/// largest existence probabilities, where `n^MAP` maximises the cardinality
/// distribution (ties broken toward the smaller count, then toward
/// lexicographically smaller labels among equal existences). Each selected
/// track contributes its label, spatial mean, and full spatial Gaussian.
pub fn extract_state(lmb: &LmbDensity) -> Vec<(Label, DVector<f64>, Gaussian)> {
    let card = cardinality_distribution(lmb);
    let mut n_map = 0;
    for (n, mass) in card.iter().enumerate() {
        if *mass > card[n_map] {
            n_map = n;
        }
    }
    let mut ranked: Vec<&Track> = lmb.tracks().collect();
    ranked.sort_by(|a, b| {
        b.existence()
            .partial_cmp(&a.existence())
            .expect("existence probabilities are finite")
            .then_with(|| a.label.cmp(&b.label))
    });
    ranked
        .into_iter()
        .take(n_map)
        .map(|t| (t.label, t.spatial().mean().clone(), t.spatial().clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn unit_track(label: Label, r: f64) -> Track {
        Track::new(label, r, Gaussian::scalar(0.0, 1.0).unwrap()).unwrap()
    }

    fn density_from_existences(rs: &[f64]) -> LmbDensity {
        LmbDensity::from_tracks(
            rs.iter().enumerate().map(|(i, r)| unit_track(Label::new(0, i as u32 + 1), *r)),
        )
        .unwrap()
    }

    /// Brute-force Poisson-binomial by enumerating all 2^n subsets.
    fn brute_force_cardinality(rs: &[f64]) -> Vec<f64> {
        let n = rs.len();
        let mut dist = vec![0.0; n + 1];
        for mask in 0..(1u32 << n) {
            let mut w = 1.0;
            let mut count = 0;
            for (i, r) in rs.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    w *= r;
                    count += 1;
                } else {
                    w *= 1.0 - r;
                }
            }
            dist[count] += w;
        }
        dist
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let mut lmb = LmbDensity::new();
        lmb.insert(unit_track(Label::new(0, 1), 0.5)).unwrap();
        let err = lmb.insert(unit_track(Label::new(0, 1), 0.2)).unwrap_err();
        assert!(matches!(err, Error::DuplicateLabel(l) if l == Label::new(0, 1)));
    }

    #[test]
    fn track_rejects_out_of_range_existence() {
        let g = Gaussian::scalar(0.0, 1.0).unwrap();
        assert!(Track::new(Label::new(0, 1), 1.5, g.clone()).is_err());
        assert!(Track::new(Label::new(0, 1), -0.1, g.clone()).is_err());
        assert!(Track::new(Label::new(0, 1), f64::NAN, g).is_err());
    }

    #[test]
    fn predict_scales_existence_by_survival() {
        let lmb = density_from_existences(&[0.5]);
        let motion = MotionModel::new(
            LinearGaussianMap::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap(),
            0.95,
        )
        .unwrap();
        let out = predict(&lmb, &motion, &BirthModel::empty(), 1).unwrap();
        assert!((out.tracks().next().unwrap().existence() - 0.475).abs() < 1e-15);
    }

    #[test]
    fn predict_appends_birth_tracks_with_step_labels() {
        let birth_gaussian = Gaussian::new(
            DVector::from_column_slice(&[0.0, 0.0, 0.0, 0.0]),
            DMatrix::identity(4, 4) * 100.0,
        )
        .unwrap();
        let birth =
            BirthModel::new((0..4).map(|_| (0.03, birth_gaussian.clone())).collect()).unwrap();
        let motion = MotionModel::new(
            LinearGaussianMap::new(DMatrix::identity(4, 4), DMatrix::zeros(4, 4)).unwrap(),
            0.95,
        )
        .unwrap();
        let out = predict(&LmbDensity::new(), &motion, &birth, 7).unwrap();
        assert_eq!(out.len(), 4);
        for (i, track) in out.tracks().enumerate() {
            assert_eq!(track.label, Label::new(7, i as u32 + 1));
            assert!((track.existence() - 0.03).abs() < 1e-15);
        }
    }

    #[test]
    fn predict_with_static_identity_motion_keeps_spatial() {
        let g = Gaussian::scalar(2.5, 3.0).unwrap();
        let lmb = LmbDensity::from_tracks([Track::new(Label::new(0, 1), 0.4, g.clone()).unwrap()])
            .unwrap();
        let motion = MotionModel::new(
            LinearGaussianMap::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap(),
            1.0,
        )
        .unwrap();
        let out = predict(&lmb, &motion, &BirthModel::empty(), 1).unwrap();
        let track = out.tracks().next().unwrap();
        assert_eq!(track.spatial(), &g);
        assert!((track.existence() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn predict_rejects_label_collision_with_birth() {
        // A pre-existing track already carries the label the step-1 birth
        // would assign.
        let lmb = LmbDensity::from_tracks([unit_track(Label::new(1, 1), 0.5)]).unwrap();
        let motion = MotionModel::new(
            LinearGaussianMap::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap(),
            1.0,
        )
        .unwrap();
        let birth =
            BirthModel::new(vec![(0.03, Gaussian::scalar(0.0, 1.0).unwrap())]).unwrap();
        let err = predict(&lmb, &motion, &birth, 1).unwrap_err();
        assert!(matches!(err, Error::DuplicateLabel(_)));
    }

    #[test]
    fn cardinality_symmetric_two_tracks() {
        let dist = cardinality_distribution(&density_from_existences(&[0.5, 0.5]));
        assert_eq!(dist.len(), 3);
        for (got, want) in dist.iter().zip([0.25, 0.5, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn cardinality_certain_track() {
        let dist = cardinality_distribution(&density_from_existences(&[1.0]));
        assert_eq!(dist, vec![0.0, 1.0]);
    }

    #[test]
    fn cardinality_three_track_example() {
        let dist = cardinality_distribution(&density_from_existences(&[0.9, 0.8, 0.1]));
        for (got, want) in dist.iter().zip([0.018, 0.236, 0.674, 0.072]) {
            assert!((got - want).abs() < 1e-12, "{got} != {want}");
        }
    }

    #[test]
    fn prune_thresholds() {
        let lmb = density_from_existences(&[5e-5, 0.2, 1e-4]);
        let pruned = prune(&lmb, 1e-4);
        assert_eq!(pruned.len(), 2); // exactly-at-threshold track retained
        assert!(pruned.get(&Label::new(0, 1)).is_none());

        let identity = prune(&lmb, 0.0);
        assert_eq!(identity.len(), 3);

        let emptied = prune(&lmb, 0.5);
        assert!(emptied.is_empty());
    }

    #[test]
    fn extract_state_selects_map_cardinality_tracks() {
        let lmb = density_from_existences(&[0.9, 0.8, 0.1]);
        let est = extract_state(&lmb);
        assert_eq!(est.len(), 2);
        assert_eq!(est[0].0, Label::new(0, 1)); // r = 0.9
        assert_eq!(est[1].0, Label::new(0, 2)); // r = 0.8
    }

    #[test]
    fn extract_state_empty_and_single() {
        assert!(extract_state(&LmbDensity::new()).is_empty());
        let single = density_from_existences(&[0.99]);
        let est = extract_state(&single);
        assert_eq!(est.len(), 1);
        assert_eq!(est[0].0, Label::new(0, 1));
    }

    #[test]
    fn extract_state_breaks_existence_ties_by_label() {
        let lmb = LmbDensity::from_tracks([
            unit_track(Label::new(2, 1), 0.8),
            unit_track(Label::new(1, 2), 0.8),
            unit_track(Label::new(1, 1), 0.1),
        ])
        .unwrap();
        let est = extract_state(&lmb);
        assert_eq!(est.len(), 2);
        assert_eq!(est[0].0, Label::new(1, 2));
        assert_eq!(est[1].0, Label::new(2, 1));
    }

    #[test]
    fn map_cardinality_ties_prefer_smaller_count() {
        // Single r = 0.5 track: cardinality [0.5, 0.5]; the tie must resolve
        // to 0 tracks extracted.
        let est = extract_state(&density_from_existences(&[0.5]));
        assert!(est.is_empty());
    }

    proptest! {
        #[test]
        fn cardinality_matches_brute_force(rs in prop::collection::vec(0.0..=1.0f64, 0..9)) {
            let dist = cardinality_distribution(&density_from_existences(&rs));
            let brute = brute_force_cardinality(&rs);
            prop_assert_eq!(dist.len(), brute.len());
            for (a, b) in dist.iter().zip(brute.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // w(L) over all subsets sums to 1 <=> the distribution sums to 1.
            let total: f64 = dist.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let mean: f64 = dist.iter().enumerate().map(|(k, w)| k as f64 * w).sum();
            let expected: f64 = rs.iter().sum();
            prop_assert!((mean - expected).abs() < 1e-9);
        }

        #[test]
        fn predict_never_raises_existence_and_keeps_labels_distinct(
            rs in prop::collection::vec(0.0..=1.0f64, 1..6),
            survival in 0.0..=1.0f64,
            step in 1u32..10,
        ) {
            let lmb = density_from_existences(&rs);
            let motion = MotionModel::new(
                LinearGaussianMap::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap(),
                survival,
            ).unwrap();
            let birth = BirthModel::new(vec![(0.03, Gaussian::scalar(0.0, 1.0).unwrap())]).unwrap();
            let out = predict(&lmb, &motion, &birth, step).unwrap();
            prop_assert_eq!(out.len(), lmb.len() + 1);
            for track in lmb.tracks() {
                let predicted = out.get(&track.label).unwrap();
                prop_assert!(predicted.existence() <= track.existence() + 1e-15);
            }
        }

        #[test]
        fn extract_state_size_is_map_cardinality_and_prefix_sorted(
            rs in prop::collection::vec(0.0..=1.0f64, 0..8),
        ) {
            let lmb = density_from_existences(&rs);
            let card = cardinality_distribution(&lmb);
            let mut n_map = 0;
            for (n, w) in card.iter().enumerate() {
                if *w > card[n_map] { n_map = n; }
            }
            let est = extract_state(&lmb);
            prop_assert_eq!(est.len(), n_map);
            let mut sorted = rs.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (i, (label, _, _)) in est.iter().enumerate() {
                let r = lmb.get(label).unwrap().existence();
                prop_assert!((r - sorted[i]).abs() < 1e-15);
            }
        }
    }
}
