//! OSPA-based evaluation of tracking output.
//!
//! Two instantiations of the optimal-subpattern-assignment (OSPA) metric are
//! used: Euclidean OSPA on estimated positions against true positions, and
//! Hellinger OSPA on estimated Gaussians against per-object reference
//! Gaussians produced by a Kalman filter that is told the true associations
//! (the best any filter could do, making the distance a pure measure of
//! uncertainty-estimation quality).
//!
//! For sets `X` (size `n`) and `Y` (size `m`) with `n ≤ m`, cutoff `c` and
//! order `p`:
//!
//! ```text
//! OSPA(X, Y) = [ (min_π Σᵢ min(c, d(xᵢ, y_π(i)))ᵖ + (m−n)·cᵖ) / m ]^{1/p}
//! ```
//!
//! minimised over injective assignments `π`; both sets empty gives 0.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{hellinger_distance, predict_gaussian, update_gaussian, Gaussian};
use crate::sim::{GroundTruth, Scenario, SensorData};

/// Cutoff `c > 0` and order `p ≥ 1` of an OSPA metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OspaParams {
    pub cutoff: f64,
    pub order: f64,
}

impl OspaParams {
    pub fn new(cutoff: f64, order: f64) -> Result<Self> {
        if !cutoff.is_finite() || cutoff <= 0.0 {
            return Err(Error::InvalidParameter(format!("OSPA cutoff {cutoff} must be positive")));
        }
        if !order.is_finite() || order < 1.0 {
            return Err(Error::InvalidParameter(format!("OSPA order {order} must be at least 1")));
        }
        Ok(Self { cutoff, order })
    }
}

/// Minimum-cost assignment of every row to a distinct column (`rows ≤ cols`)
/// by shortest augmenting paths with dual potentials, in O(rows²·cols).
/// Returns the assigned column per row.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, m) = (cost.nrows(), cost.ncols());
    if n > m {
        return Err(Error::InvalidParameter(format!(
            "assignment needs rows ≤ cols, got {n}×{m}"
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("assignment costs must be finite".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    // 1-indexed duals and matching; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut matched_row = vec![0usize; m + 1];
    let mut predecessor = vec![0usize; m + 1];

    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0usize;
        let mut min_reduced = vec![f64::INFINITY; m + 1];
        let mut visited = vec![false; m + 1];
        loop {
            visited[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if visited[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_reduced[j] {
                    min_reduced[j] = reduced;
                    predecessor[j] = j0;
                }
                if min_reduced[j] < delta {
                    delta = min_reduced[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if visited[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_reduced[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Walk the augmenting path backwards, reassigning columns.
        while j0 != 0 {
            let j1 = predecessor[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if matched_row[j] != 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

/// OSPA distance between two finite sets under a caller-supplied base
/// distance (which must be symmetric and non-negative). Both sets empty
/// gives 0; the result always lies in `[0, cutoff]`.
pub fn ospa<T>(
    estimates: &[T],
    truths: &[T],
    params: &OspaParams,
    base_distance: impl Fn(&T, &T) -> Result<f64>,
) -> Result<f64> {
    let (small, large) = if estimates.len() <= truths.len() {
        (estimates, truths)
    } else {
        (truths, estimates)
    };
    let (n, m) = (small.len(), large.len());
    if m == 0 {
        return Ok(0.0);
    }
    let c = params.cutoff;
    let p = params.order;
    let mut cost = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let d = base_distance(&small[i], &large[j])?;
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "base distance must be finite and non-negative, got {d}"
                )));
            }
            cost[(i, j)] = d.min(c).powf(p);
        }
    }
    let assignment = min_cost_assignment(&cost)?;
    let matched: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    let total = matched + (m - n) as f64 * c.powf(p);
    Ok((total / m as f64).powf(1.0 / p).min(c))
}

/// Euclidean distance between the position components (the first two
/// entries) of two state or position vectors.
pub fn position_distance(a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: a.len().min(b.len()) });
    }
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    Ok((dx * dx + dy * dy).sqrt())
}

/// OSPA over positions: estimates and truths may be full state vectors;
/// only their first two components enter the distance.
pub fn euclidean_ospa(
    estimates: &[DVector<f64>],
    truths: &[DVector<f64>],
    params: &OspaParams,
) -> Result<f64> {
    ospa(estimates, truths, params, position_distance)
}

/// OSPA over Gaussian estimates with the Hellinger distance as base; bounded
/// by the cutoff (0.5 in the experiments).
pub fn hellinger_ospa(
    estimates: &[Gaussian],
    references: &[Gaussian],
    params: &OspaParams,
) -> Result<f64> {
    ospa(estimates, references, params, hellinger_distance)
}

/// Per-object reference estimates: for every true object, a Kalman filter
/// initialised with the object's initial density at its birth step and then,
/// at every step of its life, predicted (after the first step) and updated
/// with the object's own detection from each sensor in sensor order, using
/// the simulator's association record. Returns one Gaussian per live object
/// per step, in label order (aligned with [`GroundTruth::live_at`]).
pub fn optimal_reference(
    truth: &GroundTruth,
    scenario: &Scenario,
    sensors: &[SensorData],
) -> Result<Vec<Vec<Gaussian>>> {
    scenario.validate()?;
    if sensors.len() != scenario.sensors.len() {
        return Err(Error::DimensionMismatch {
            expected: scenario.sensors.len(),
            got: sensors.len(),
        });
    }
    let motion = scenario.motion_model()?;
    let sensor_maps = scenario.sensor_models()?;

    // Reference per trajectory per step of its life.
    let mut per_trajectory: Vec<Vec<Gaussian>> = Vec::with_capacity(truth.trajectories.len());
    for trajectory in &truth.trajectories {
        let mut current = trajectory.initial.clone();
        let mut history = Vec::with_capacity(trajectory.states.len());
        for offset in 0..trajectory.states.len() {
            let step = trajectory.birth_step + offset;
            if offset > 0 {
                current = predict_gaussian(&current, motion.map())?;
            }
            for (sensor, data) in sensor_maps.iter().zip(sensors) {
                if let Some(&slot) = data.frames[step].associations.get(&trajectory.label) {
                    let z = &data.frames[step].measurements[slot];
                    current = update_gaussian(&current, &sensor.map, z)?.0;
                }
            }
            history.push(current.clone());
        }
        per_trajectory.push(history);
    }

    // Regroup by step, in label order.
    let mut per_step = vec![Vec::new(); truth.duration];
    for step in 0..truth.duration {
        let mut live: Vec<(crate::density::Label, &Gaussian)> = truth
            .trajectories
            .iter()
            .zip(&per_trajectory)
            .filter_map(|(t, refs)| {
                step.checked_sub(t.birth_step)
                    .and_then(|k| refs.get(k))
                    .map(|g| (t.label, g))
            })
            .collect();
        live.sort_by_key(|(label, _)| *label);
        per_step[step] = live.into_iter().map(|(_, g)| g.clone()).collect();
    }
    Ok(per_step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_all_measurements, generate_truth, BirthSite, Region, SensorSpec};
    use proptest::prelude::*;

    fn params(c: f64, p: f64) -> OspaParams {
        OspaParams::new(c, p).unwrap()
    }

    fn points(coords: &[[f64; 2]]) -> Vec<DVector<f64>> {
        coords.iter().map(|c| DVector::from_column_slice(c)).collect()
    }

    /// All injective maps from rows into columns, for brute-force checks.
    fn brute_force_min_cost(cost: &DMatrix<f64>) -> f64 {
        fn recurse(cost: &DMatrix<f64>, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
            if row == cost.nrows() {
                *best = best.min(acc);
                return;
            }
            for j in 0..cost.ncols() {
                if !used[j] {
                    used[j] = true;
                    recurse(cost, row + 1, used, acc + cost[(row, j)], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        recurse(cost, 0, &mut vec![false; cost.ncols()], 0.0, &mut best);
        best
    }

    fn scaling_scenario(objects: usize, duration: usize) -> Scenario {
        Scenario {
            duration,
            dt: 1.0,
            process_intensity: 0.1,
            survival: 0.95,
            seed: 0,
            fixed_cardinality: Some(objects),
            region: Region { min: [-100.0, -100.0], max: [100.0, 100.0] },
            birth: vec![],
            sensors: vec![SensorSpec { detection: 1.0, clutter_rate: 0.0, noise_std: 1.0 }],
        }
    }

    #[test]
    fn assignment_square_and_rectangular_hand_cases() {
        let cost = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        let assignment = min_cost_assignment(&cost).unwrap();
        let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
        assert_eq!(total, 5.0);
        assert_eq!(assignment, vec![1, 0, 2]);

        let cost = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let assignment = min_cost_assignment(&cost).unwrap();
        let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
        assert_eq!(total, 4.0);

        assert!(min_cost_assignment(&cost.transpose()).is_err());
        assert!(min_cost_assignment(&DMatrix::from_element(1, 1, f64::INFINITY)).is_err());
        assert!(min_cost_assignment(&DMatrix::<f64>::zeros(0, 4)).unwrap().is_empty());
    }

    #[test]
    fn ospa_identical_sets_is_zero() {
        let x = points(&[[0.0, 0.0], [3.0, -4.0], [10.0, 10.0]]);
        assert_eq!(euclidean_ospa(&x, &x, &params(5.0, 2.0)).unwrap(), 0.0);
        assert_eq!(
            euclidean_ospa(&[], &[], &params(5.0, 2.0)).unwrap(),
            0.0,
            "both empty is defined as 0"
        );
    }

    #[test]
    fn ospa_pure_cardinality_error_hits_cutoff() {
        let truth = points(&[[1.0, 1.0]]);
        let value = euclidean_ospa(&[], &truth, &params(5.0, 2.0)).unwrap();
        assert_eq!(value, 5.0);
        // Symmetric in the argument order.
        assert_eq!(euclidean_ospa(&truth, &[], &params(5.0, 2.0)).unwrap(), 5.0);
    }

    #[test]
    fn ospa_constant_distance_is_that_distance() {
        // Three pairs all exactly 3 apart (below cutoff): OSPA = 3 for any p.
        let a = points(&[[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]]);
        let b = points(&[[0.0, 3.0], [10.0, 3.0], [20.0, 3.0]]);
        for p in [1.0, 2.0, 3.0] {
            let value = euclidean_ospa(&a, &b, &params(5.0, p)).unwrap();
            assert!((value - 3.0).abs() < 1e-12, "p={p}: {value}");
        }
    }

    #[test]
    fn ospa_uses_position_components_only() {
        let a = vec![DVector::from_column_slice(&[1.0, 2.0, 50.0, -50.0])];
        let b = vec![DVector::from_column_slice(&[4.0, 6.0, 0.0, 0.0])];
        let value = euclidean_ospa(&a, &b, &params(10.0, 2.0)).unwrap();
        assert!((value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn hellinger_ospa_truncates_at_cutoff() {
        let a = vec![Gaussian::scalar(0.0, 1.0).unwrap()];
        let b = vec![Gaussian::scalar(2.0, 1.0).unwrap()];
        // The untruncated Hellinger distance is ≈ 0.6273 > 0.5.
        let value = hellinger_ospa(&a, &b, &params(0.5, 2.0)).unwrap();
        assert_eq!(value, 0.5);
        let loose = hellinger_ospa(&a, &b, &params(0.9, 2.0)).unwrap();
        assert!((loose - 0.6273).abs() < 1e-4);
    }

    #[test]
    fn hellinger_ospa_cardinality_mismatch_contributes_cutoff() {
        let g = Gaussian::scalar(0.0, 1.0).unwrap();
        let estimates = vec![g.clone()];
        let references = vec![g.clone(), Gaussian::scalar(100.0, 1.0).unwrap()];
        let value = hellinger_ospa(&estimates, &references, &params(0.5, 2.0)).unwrap();
        // One perfect match (0) plus one unmatched slot at the cutoff.
        let expected = ((0.0 + 0.5_f64.powi(2)) / 2.0).sqrt();
        assert!((value - expected).abs() < 1e-12);
    }

    #[test]
    fn ospa_rejects_invalid_params() {
        assert!(OspaParams::new(0.0, 2.0).is_err());
        assert!(OspaParams::new(-1.0, 2.0).is_err());
        assert!(OspaParams::new(1.0, 0.5).is_err());
        assert!(OspaParams::new(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn reference_single_sensor_single_step_is_update_gaussian() {
        let scenario = scaling_scenario(1, 1);
        let truth = generate_truth(&scenario, 7).unwrap();
        let sensors = generate_all_measurements(&truth, &scenario, 7).unwrap();
        let refs = optimal_reference(&truth, &scenario, &sensors).unwrap();
        assert_eq!(refs.len(), 1);
        assert_eq!(refs[0].len(), 1);

        let t = &truth.trajectories[0];
        let frame = &sensors[0].frames[0];
        let z = &frame.measurements[frame.associations[&t.label]];
        let sensor = scenario.sensor_model(0).unwrap();
        let (expected, _) = update_gaussian(&t.initial, &sensor.map, z).unwrap();
        assert_eq!(refs[0][0], expected);
    }

    #[test]
    fn reference_two_sensors_equals_two_sequential_updates() {
        let mut scenario = scaling_scenario(1, 1);
        scenario.sensors.push(SensorSpec { detection: 1.0, clutter_rate: 0.0, noise_std: 2.0 });
        let truth = generate_truth(&scenario, 5).unwrap();
        let sensors = generate_all_measurements(&truth, &scenario, 5).unwrap();
        let refs = optimal_reference(&truth, &scenario, &sensors).unwrap();

        let t = &truth.trajectories[0];
        let mut expected = t.initial.clone();
        for i in 0..2 {
            let frame = &sensors[i].frames[0];
            let z = &frame.measurements[frame.associations[&t.label]];
            let sensor = scenario.sensor_model(i).unwrap();
            expected = update_gaussian(&expected, &sensor.map, z).unwrap().0;
        }
        assert_eq!(refs[0][0], expected);
    }

    #[test]
    fn reference_without_detections_is_the_predicted_prior() {
        let mut scenario = scaling_scenario(1, 3);
        scenario.sensors[0].detection = 0.0;
        let truth = generate_truth(&scenario, 2).unwrap();
        let sensors = generate_all_measurements(&truth, &scenario, 2).unwrap();
        let refs = optimal_reference(&truth, &scenario, &sensors).unwrap();

        let t = &truth.trajectories[0];
        let motion = scenario.motion_model().unwrap();
        assert_eq!(refs[0][0], t.initial);
        let once = predict_gaussian(&t.initial, motion.map()).unwrap();
        assert_eq!(refs[1][0], once);
        let twice = predict_gaussian(&once, motion.map()).unwrap();
        assert_eq!(refs[2][0], twice);
    }

    #[test]
    fn reference_against_itself_scores_zero() {
        let mut scenario = scaling_scenario(3, 10);
        scenario.sensors[0].detection = 0.8;
        scenario.sensors[0].clutter_rate = 5.0;
        let truth = generate_truth(&scenario, 21).unwrap();
        let sensors = generate_all_measurements(&truth, &scenario, 21).unwrap();
        let refs = optimal_reference(&truth, &scenario, &sensors).unwrap();
        let p = params(0.5, 2.0);
        for step in 0..scenario.duration {
            assert_eq!(refs[step].len(), truth.cardinality_at(step));
            assert_eq!(hellinger_ospa(&refs[step], &refs[step], &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn reference_handles_births_and_deaths() {
        let scenario = Scenario {
            duration: 40,
            dt: 1.0,
            process_intensity: 0.1,
            survival: 0.9,
            seed: 0,
            fixed_cardinality: None,
            region: Region { min: [-100.0, -100.0], max: [100.0, 100.0] },
            birth: vec![BirthSite {
                existence: 0.25,
                mean: [0.0, 0.0, 0.0, 0.0],
                std: [10.0, 10.0, 10.0, 10.0],
            }],
            sensors: vec![SensorSpec { detection: 0.7, clutter_rate: 3.0, noise_std: 1.0 }],
        };
        let truth = generate_truth(&scenario, 33).unwrap();
        assert!(!truth.trajectories.is_empty());
        let sensors = generate_all_measurements(&truth, &scenario, 33).unwrap();
        let refs = optimal_reference(&truth, &scenario, &sensors).unwrap();
        for step in 0..scenario.duration {
            assert_eq!(refs[step].len(), truth.cardinality_at(step));
        }
    }

    proptest! {
        #[test]
        fn assignment_matches_brute_force(
            rows in 1usize..=5,
            extra in 0usize..=2,
            values in proptest::collection::vec(0.0f64..100.0, 35),
        ) {
            let cols = rows + extra;
            let cost = DMatrix::from_fn(rows, cols, |i, j| values[i * 7 + j]);
            let assignment = min_cost_assignment(&cost).unwrap();
            let mut sorted = assignment.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), rows, "assignment must be injective");
            let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
            let best = brute_force_min_cost(&cost);
            prop_assert!((total - best).abs() < 1e-9, "{} vs {}", total, best);
        }

        #[test]
        fn ospa_is_a_metric(
            xs in proptest::collection::vec(proptest::array::uniform2(-20.0f64..20.0), 0..6),
            ys in proptest::collection::vec(proptest::array::uniform2(-20.0f64..20.0), 0..6),
            zs in proptest::collection::vec(proptest::array::uniform2(-20.0f64..20.0), 0..6),
        ) {
            let p = params(5.0, 2.0);
            let (x, y, z) = (points(&xs), points(&ys), points(&zs));
            let dxy = euclidean_ospa(&x, &y, &p).unwrap();
            let dyx = euclidean_ospa(&y, &x, &p).unwrap();
            let dxz = euclidean_ospa(&x, &z, &p).unwrap();
            let dzy = euclidean_ospa(&z, &y, &p).unwrap();
            prop_assert!(dxy >= 0.0 && dxy <= 5.0);
            prop_assert_eq!(dxy, dyx, "symmetry must be exact");
            prop_assert!(dxy <= dxz + dzy + 1e-12, "triangle: {} > {} + {}", dxy, dxz, dzy);
            prop_assert!((euclidean_ospa(&x, &x, &p).unwrap()).abs() == 0.0);
        }
    }
}
