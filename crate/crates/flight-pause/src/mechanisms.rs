//! Data-collection mechanisms: generators for the location observability
//! vector `Z` and the masking of trajectories.
//!
//! Each mechanism models a way a location-tracking device drops data:
//!
//! * [`MechanismConfig::OnOff`] — scheduled duty cycling: `o` observed
//!   steps, then `u` unobserved, repeating. Deterministic.
//! * [`MechanismConfig::GeometricGaps`] — every location recorded
//!   independently with probability `eta`.
//! * [`MechanismConfig::UnscheduledGap`] — one long outage: the centered
//!   window of length `alpha * t_max` is dropped.
//! * [`MechanismConfig::CompositeGap`] — the unscheduled outage overlaid on
//!   duty cycling (a location is kept only if both schemes keep it).
//! * [`MechanismConfig::MovementTriggered`] — a sensor that records while
//!   moving and sleeps during pauses loses no *increment* information
//!   (pause endpoints equal their neighbors' positions), so at the
//!   trajectory level it is equivalent to full observation.
//! * [`MechanismConfig::FullObservation`] — all locations kept.
//!
//! Even when the location-level mechanism is benign (deterministic,
//! independent of positions), the induced *increment*-level mechanism can
//! be non-ignorable: whether an increment is observed depends on its
//! duration, which the likelihood in the inference module corrects for.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{check_lengths, ObservabilityVector, ObservedTrajectory, Trajectory};

/// Configuration for one data-collection mechanism, tagged by `variant`
/// in JSON (e.g. `{"variant": "on_off", "o": 25, "u": 25}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MechanismConfig {
    /// Duty cycling: `o` observed, `u` unobserved, repeating; `phase`
    /// rotates the pattern start (0 = observation begins at t = 1).
    OnOff {
        /// Observed run length per cycle.
        o: u64,
        /// Unobserved run length per cycle.
        u: u64,
        /// Cycle offset at t = 1.
        #[serde(default)]
        phase: u64,
    },
    /// Each location kept independently with probability `eta`.
    GeometricGaps {
        /// Per-location observation probability.
        eta: f64,
    },
    /// One centered outage covering a fraction `alpha` of the horizon.
    UnscheduledGap {
        /// Fraction of `t_max` the outage covers, in (0, 1).
        alpha: f64,
    },
    /// Centered outage combined with duty cycling (elementwise AND).
    CompositeGap {
        /// Fraction of `t_max` the outage covers, in (0, 1).
        alpha: f64,
        /// Observed run length per cycle.
        o: u64,
        /// Unobserved run length per cycle.
        u: u64,
    },
    /// Movement-triggered recording; loses nothing at the increment level.
    MovementTriggered,
    /// Every location observed.
    FullObservation,
}

impl MechanismConfig {
    fn validate(&self, t_max: u64) -> Result<()> {
        match *self {
            MechanismConfig::OnOff { o, u, .. } => {
                if o < 1 || u < 1 {
                    return Err(Error::Domain(format!(
                        "on_off requires o >= 1 and u >= 1, got o = {o}, u = {u}"
                    )));
                }
            }
            MechanismConfig::GeometricGaps { eta } => {
                if !(0.0..=1.0).contains(&eta) {
                    return Err(Error::Domain(format!(
                        "geometric_gaps requires eta in [0, 1], got {eta}"
                    )));
                }
            }
            MechanismConfig::UnscheduledGap { alpha }
            | MechanismConfig::CompositeGap { alpha, .. } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::Domain(format!(
                        "gap mechanisms require alpha in (0, 1), got {alpha}"
                    )));
                }
                if alpha * (t_max as f64) < 1.0 {
                    return Err(Error::Domain(format!(
                        "gap of alpha * t_max = {} locations is shorter than 1",
                        alpha * t_max as f64
                    )));
                }
                if let MechanismConfig::CompositeGap { o, u, .. } = *self {
                    if o < 1 || u < 1 {
                        return Err(Error::Domain(format!(
                            "composite_gap requires o >= 1 and u >= 1, got o = {o}, u = {u}"
                        )));
                    }
                }
            }
            MechanismConfig::MovementTriggered | MechanismConfig::FullObservation => {}
        }
        Ok(())
    }
}

fn on_off_bit(t: u64, o: u64, u: u64, phase: u64) -> bool {
    ((t - 1 + phase) % (o + u)) < o
}

/// The centered outage interval for `UnscheduledGap`, as 1-based inclusive
/// times `[start, end]`. Length is `alpha * t_max` rounded to nearest.
fn unscheduled_window(alpha: f64, t_max: u64) -> (u64, u64) {
    let len = (alpha * t_max as f64).round() as u64;
    let len = len.clamp(1, t_max);
    let start = (t_max - len) / 2 + 1;
    (start, start + len - 1)
}

/// Generate the observability vector for a mechanism over `1..=t_max`.
/// Deterministic given `seed` (only `GeometricGaps` consumes randomness).
pub fn generate_z(cfg: &MechanismConfig, t_max: u64, seed: u64) -> Result<ObservabilityVector> {
    if t_max < 1 {
        return Err(Error::Domain("t_max must be >= 1".to_owned()));
    }
    cfg.validate(t_max)?;
    let z = match *cfg {
        MechanismConfig::OnOff { o, u, phase } => {
            (1..=t_max).map(|t| on_off_bit(t, o, u, phase)).collect()
        }
        MechanismConfig::GeometricGaps { eta } => {
            use rand::Rng;
            let mut rng = crate::seed::rng(seed);
            (1..=t_max).map(|_| rng.random_bool(eta)).collect()
        }
        MechanismConfig::UnscheduledGap { alpha } => {
            let (a, b) = unscheduled_window(alpha, t_max);
            (1..=t_max).map(|t| !(a..=b).contains(&t)).collect()
        }
        MechanismConfig::CompositeGap { alpha, o, u } => {
            let (a, b) = unscheduled_window(alpha, t_max);
            (1..=t_max)
                .map(|t| !(a..=b).contains(&t) && on_off_bit(t, o, u, 0))
                .collect()
        }
        MechanismConfig::MovementTriggered | MechanismConfig::FullObservation => {
            vec![true; t_max as usize]
        }
    };
    Ok(ObservabilityVector::new(z))
}

/// Apply an observability vector to a trajectory, dropping masked positions.
pub fn mask_trajectory(traj: &Trajectory, z: &ObservabilityVector) -> Result<ObservedTrajectory> {
    check_lengths(traj, z)?;
    Ok(ObservedTrajectory::new(
        traj.positions
            .iter()
            .zip(&z.z)
            .map(|(&p, &bit)| if bit { Some(p) } else { None })
            .collect(),
    ))
}
