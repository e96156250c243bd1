//! Exposure evaluation harness: hot-spot generation, ball-membership
//! exposure times, and agreement rates between true and imputed
//! trajectories.
//!
//! The evaluation asks a practical question of an imputation method: if a
//! health-relevant site ("hot spot") is a disc of fixed radius, do imputed
//! trajectories visit it exactly when the true trajectory does? Pairs
//! (trajectory, hotspot) are partitioned by the truth into exposed and
//! unexposed sets; the report's true-positive rate is the average fraction
//! of imputations that also pass through the disc on exposed pairs, and
//! the true-negative rate the average fraction that stay out on unexposed
//! pairs.
//!
//! Two aggregations are reported for each rate: pooled over all pairs, and
//! a two-stage mean (within trajectory first, then across trajectories).
//! With one hotspot per trajectory they coincide; with many they answer
//! slightly different questions, so both are exposed.
//!
//! Design note: membership is *strict* ball membership, distance < radius,
//! applied pointwise to the discrete positions — no segment–disc
//! intersection between consecutive samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng;
use crate::trajectory::Trajectory;
use rand::Rng;
use rand_distr::StandardNormal;

/// Default exposure-disc radius, in the units of the trajectory
/// coordinates.
pub const DEFAULT_HOTSPOT_RADIUS: f64 = 100.0;

/// A circular exposure area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    /// Disc center.
    pub center: [f64; 2],
    /// Disc radius; must be positive.
    pub radius: f64,
}

/// Axis-aligned bounding box of a set of positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    /// Componentwise minima.
    pub min: [f64; 2],
    /// Componentwise maxima.
    pub max: [f64; 2],
}

impl BoundingBox {
    /// Side length along coordinate `c`.
    pub fn side(&self, c: usize) -> f64 {
        self.max[c] - self.min[c]
    }

    /// True when some side has zero length (a single point or a line).
    pub fn is_degenerate(&self) -> bool {
        self.side(0) <= 0.0 || self.side(1) <= 0.0
    }

    /// True when `p` lies inside or on the box.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|c| p[c] >= self.min[c] && p[c] <= self.max[c])
    }
}

/// Time-average position of a nonempty trajectory.
pub fn time_average(traj: &Trajectory) -> Result<[f64; 2]> {
    if traj.is_empty() {
        return Err(Error::Domain(
            "cannot average an empty trajectory".to_owned(),
        ));
    }
    let n = traj.len() as f64;
    let mut mean = [0.0; 2];
    for p in &traj.positions {
        mean[0] += p[0] / n;
        mean[1] += p[1] / n;
    }
    Ok(mean)
}

/// Shift every position by `-shift`.
pub fn translate(traj: &Trajectory, shift: [f64; 2]) -> Trajectory {
    Trajectory::new(
        traj.positions
            .iter()
            .map(|p| [p[0] - shift[0], p[1] - shift[1]])
            .collect(),
    )
}

/// Shift every trajectory by minus its own time-average position and
/// return the shifted copies together with their common bounding box.
pub fn center_and_bound(trajs: &[Trajectory]) -> Result<(Vec<Trajectory>, BoundingBox)> {
    if trajs.is_empty() {
        return Err(Error::Domain("no trajectories to center".to_owned()));
    }
    let mut shifted = Vec::with_capacity(trajs.len());
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for traj in trajs {
        let centered = translate(traj, time_average(traj)?);
        for p in &centered.positions {
            for c in 0..2 {
                min[c] = min[c].min(p[c]);
                max[c] = max[c].max(p[c]);
            }
        }
        shifted.push(centered);
    }
    Ok((shifted, BoundingBox { min, max }))
}

/// Draw a hotspot for a centered trajectory set: each center coordinate is
/// Normal(0, (side/3)²) for that coordinate's box side, radius
/// [`DEFAULT_HOTSPOT_RADIUS`]. Deterministic given `seed`.
pub fn sample_hotspot(bbox: &BoundingBox, seed: u64) -> Result<Hotspot> {
    if bbox.is_degenerate() {
        return Err(Error::Domain(format!(
            "bounding box {:?} .. {:?} is degenerate",
            bbox.min, bbox.max
        )));
    }
    let mut rng = rng(seed);
    let mut center = [0.0; 2];
    for (c, coord) in center.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        *coord = bbox.side(c) / 3.0 * z;
    }
    Ok(Hotspot {
        center,
        radius: DEFAULT_HOTSPOT_RADIUS,
    })
}

/// Number of time periods the trajectory spends strictly inside the disc.
pub fn exposure_time(traj: &Trajectory, h: &Hotspot) -> u64 {
    let r2 = h.radius * h.radius;
    traj.positions
        .iter()
        .filter(|p| {
            let dx = p[0] - h.center[0];
            let dy = p[1] - h.center[1];
            dx * dx + dy * dy < r2
        })
        .count() as u64
}

/// One scored (trajectory, hotspot, series) triple; `imputation_id` is
/// `None` for the true trajectory's own row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureObservation {
    /// Index into the trajectory list.
    pub trajectory_id: u64,
    /// Index into the hotspot list.
    pub hotspot_id: u64,
    /// Index of the imputed series, or `None` for the truth.
    pub imputation_id: Option<u64>,
    /// Whether the series enters the hotspot at all.
    pub passed: bool,
    /// Time periods spent inside the disc.
    pub exposure_time: u64,
}

/// Mean exposure-time error of one imputed series, averaged over hotspots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureDiff {
    /// Index into the trajectory list.
    pub trajectory_id: u64,
    /// Index of the imputed series.
    pub imputation_id: u64,
    /// Mean over hotspots of (true exposure time − imputed exposure time).
    pub diff: f64,
}

/// Agreement rates and exposure-time errors for one imputation method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureReport {
    /// Mean over truth-exposed (trajectory, hotspot) pairs of the fraction
    /// of imputations that also enter the disc. 1.0 when no pair is
    /// exposed.
    pub true_positive_rate: f64,
    /// Mean over truth-unexposed pairs of the fraction of imputations that
    /// also stay out. 1.0 when every pair is exposed.
    pub true_negative_rate: f64,
    /// Two-stage variant: agreement averaged within each trajectory's
    /// exposed pairs first, then across trajectories having any.
    pub true_positive_rate_by_trajectory: f64,
    /// Two-stage variant of the true-negative rate.
    pub true_negative_rate_by_trajectory: f64,
    /// Per-(trajectory, imputation) exposure-time errors.
    pub exposure_time_diffs: Vec<ExposureDiff>,
    /// Mean of all exposure-time errors.
    pub grand_mean_diff: f64,
    /// Every scored triple, including the truth rows, for external
    /// plotting.
    pub observations: Vec<ExposureObservation>,
}

fn mean_or(values: &[f64], default: f64) -> f64 {
    if values.is_empty() {
        default
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Score `imputed_sets` against `true_trajs` on one shared hotspot list.
///
/// `imputed_sets[n]` holds the imputations of trajectory `n`; every series
/// must have the same length as its true trajectory, and every trajectory
/// needs at least one imputation.
pub fn evaluate_exposure(
    true_trajs: &[Trajectory],
    imputed_sets: &[Vec<Trajectory>],
    hotspots: &[Hotspot],
) -> Result<ExposureReport> {
    let sets = vec![hotspots.to_vec(); true_trajs.len()];
    evaluate_exposure_per_trajectory(true_trajs, imputed_sets, &sets)
}

/// Score with a separate hotspot list per trajectory; `hotspot_id` in the
/// observations indexes into that trajectory's own list.
pub fn evaluate_exposure_per_trajectory(
    true_trajs: &[Trajectory],
    imputed_sets: &[Vec<Trajectory>],
    hotspot_sets: &[Vec<Hotspot>],
) -> Result<ExposureReport> {
    if true_trajs.is_empty() {
        return Err(Error::Domain("no trajectories to evaluate".to_owned()));
    }
    if hotspot_sets.len() != true_trajs.len() {
        return Err(Error::Mismatch(format!(
            "{} trajectories but {} hotspot sets",
            true_trajs.len(),
            hotspot_sets.len()
        )));
    }
    if hotspot_sets.iter().any(|set| set.is_empty()) {
        return Err(Error::Domain("every trajectory needs a hotspot".to_owned()));
    }
    if imputed_sets.len() != true_trajs.len() {
        return Err(Error::Mismatch(format!(
            "{} trajectories but {} imputation sets",
            true_trajs.len(),
            imputed_sets.len()
        )));
    }
    for (n, (truth, set)) in true_trajs.iter().zip(imputed_sets).enumerate() {
        if set.is_empty() {
            return Err(Error::Mismatch(format!(
                "trajectory {n} has no imputations"
            )));
        }
        if set.iter().any(|imp| imp.len() != truth.len()) {
            return Err(Error::Mismatch(format!(
                "trajectory {n} and one of its imputations differ in length"
            )));
        }
    }

    let mut observations = Vec::new();
    let mut pair_agree_w = Vec::new();
    let mut pair_agree_v = Vec::new();
    let mut by_traj_w = Vec::new();
    let mut by_traj_v = Vec::new();
    let mut exposure_time_diffs = Vec::new();

    for (n, (truth, set)) in true_trajs.iter().zip(imputed_sets).enumerate() {
        let hotspots = &hotspot_sets[n];
        let mut traj_w = Vec::new();
        let mut traj_v = Vec::new();
        // diff_sums[m] accumulates (true - imputed) exposure time over
        // hotspots for imputation m.
        let mut diff_sums = vec![0.0; set.len()];
        for (h_id, h) in hotspots.iter().enumerate() {
            let e_true = exposure_time(truth, h);
            observations.push(ExposureObservation {
                trajectory_id: n as u64,
                hotspot_id: h_id as u64,
                imputation_id: None,
                passed: e_true > 0,
                exposure_time: e_true,
            });
            let mut agree = 0.0;
            for (m, imp) in set.iter().enumerate() {
                let e_imp = exposure_time(imp, h);
                observations.push(ExposureObservation {
                    trajectory_id: n as u64,
                    hotspot_id: h_id as u64,
                    imputation_id: Some(m as u64),
                    passed: e_imp > 0,
                    exposure_time: e_imp,
                });
                if (e_imp > 0) == (e_true > 0) {
                    agree += 1.0;
                }
                diff_sums[m] += e_true as f64 - e_imp as f64;
            }
            let frac = agree / set.len() as f64;
            if e_true > 0 {
                pair_agree_w.push(frac);
                traj_w.push(frac);
            } else {
                pair_agree_v.push(frac);
                traj_v.push(frac);
            }
        }
        if !traj_w.is_empty() {
            by_traj_w.push(mean_or(&traj_w, 1.0));
        }
        if !traj_v.is_empty() {
            by_traj_v.push(mean_or(&traj_v, 1.0));
        }
        for (m, sum) in diff_sums.into_iter().enumerate() {
            exposure_time_diffs.push(ExposureDiff {
                trajectory_id: n as u64,
                imputation_id: m as u64,
                diff: sum / hotspots.len() as f64,
            });
        }
    }

    let grand_mean_diff = mean_or(
        &exposure_time_diffs
            .iter()
            .map(|d| d.diff)
            .collect::<Vec<_>>(),
        0.0,
    );
    Ok(ExposureReport {
        true_positive_rate: mean_or(&pair_agree_w, 1.0),
        true_negative_rate: mean_or(&pair_agree_v, 1.0),
        true_positive_rate_by_trajectory: mean_or(&by_traj_w, 1.0),
        true_negative_rate_by_trajectory: mean_or(&by_traj_v, 1.0),
        exposure_time_diffs,
        grand_mean_diff,
        observations,
    })
}
