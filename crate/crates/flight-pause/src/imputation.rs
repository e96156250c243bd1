//! Trajectory imputation: fill unobserved location runs either by linear
//! interpolation or by the model's plug-in parametric sampler.
//!
//! The parametric method handles one gap in three stages:
//!
//! 1. [`sample_gap_plan`] draws an increment-type/duration skeleton from
//!    the fitted chain parameters, truncating the final pause so the plan
//!    covers the gap's time span exactly;
//! 2. [`bridge_flights_ffbs`] draws the plan's flight displacements from
//!    the AR(1) law conditioned on their sum equaling the position change
//!    across the gap — a forward-filter backward-sampler over the joint
//!    Gaussian state (displacement, partial sum);
//! 3. positions are rebuilt by walking the plan, pauses holding and
//!    flights consuming the bridged displacements.
//!
//! Observed positions are never modified; the bridge's (sub-1e-9) endpoint
//! rounding is absorbed at the gap's right boundary, which stays exactly
//! the observed value.
//!
//! Gaps touching the start or end of the record have only one anchored
//! side, which the conditional bridge cannot handle; they are filled by
//! unconditional simulation away from the nearest observed boundary
//! (time-reversal of the stationary chain for leading gaps) and reported
//! in the output metadata. Linear interpolation degenerates to a constant
//! fill there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IncrementKind, Theta};
use crate::seed::{derive, rng};
use crate::trajectory::{ExtractionResult, ObservedTrajectory, Trajectory};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};

/// How to fill unobserved locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMethod {
    /// Straight-line fill between the gap's anchor positions.
    Linear,
    /// Plan + constrained-bridge sampling from the fitted model.
    AdjustedParametric,
}

impl std::fmt::Display for ImputeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImputeMethod::Linear => write!(f, "linear"),
            ImputeMethod::AdjustedParametric => write!(f, "adjusted_parametric"),
        }
    }
}

/// Increment-type and duration skeleton covering a gap's time span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapPlan {
    /// Increment kinds in time order.
    pub kinds: Vec<IncrementKind>,
    /// Matching durations; flights are always 1.
    pub durations: Vec<u64>,
    /// Sum of durations; always equals the requested gap span.
    pub total_duration: u64,
}

impl GapPlan {
    /// Number of flight increments in the plan.
    pub fn flight_count(&self) -> u64 {
        self.kinds.iter().filter(|k| k.is_flight()).count() as u64
    }
}

fn sample_gap_plan_with<R: Rng>(
    theta: &Theta,
    preceding_kind: IncrementKind,
    gap_span: u64,
    rng: &mut R,
) -> GapPlan {
    let geom = Geometric::new(theta.theta2()).expect("theta2 in (0,1)");
    let mut kinds = Vec::new();
    let mut durations = Vec::new();
    let mut covered = 0;
    let mut prev = preceding_kind;
    while covered < gap_span {
        let kind = match prev {
            // A pause is always followed by a flight.
            IncrementKind::Pause => IncrementKind::Flight,
            IncrementKind::Flight => {
                if rng.random_bool(theta.theta1()) {
                    IncrementKind::Pause
                } else {
                    IncrementKind::Flight
                }
            }
        };
        let duration = match kind {
            IncrementKind::Flight => 1,
            // Geometric on {1, 2, ...}; truncate if it overshoots the span.
            IncrementKind::Pause => (1 + geom.sample(rng)).min(gap_span - covered),
        };
        kinds.push(kind);
        durations.push(duration);
        covered += duration;
        prev = kind;
    }
    GapPlan {
        kinds,
        durations,
        total_duration: covered,
    }
}

/// Draw an increment skeleton for a gap of `gap_span` time steps.
///
/// Types alternate by the chain's transition law starting after
/// `preceding_kind`; pause durations are geometric(θ2) and the final
/// increment is truncated so the plan's total duration is exactly
/// `gap_span`. Deterministic given `seed`.
pub fn sample_gap_plan(
    theta: &Theta,
    preceding_kind: IncrementKind,
    gap_span: u64,
    seed: u64,
) -> GapPlan {
    assert!(gap_span >= 1, "gap span must be at least one step");
    sample_gap_plan_with(theta, preceding_kind, gap_span, &mut rng(seed))
}

/// Inputs for one constrained displacement bridge.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSpec {
    /// Anchor position at the left end of the gap.
    pub start_pos: [f64; 2],
    /// Anchor position at the right end of the gap.
    pub end_pos: [f64; 2],
    /// Displacement of the last flight observed before the gap, if any;
    /// absent means the first bridged flight starts from the stationary
    /// marginal.
    pub last_observed_displacement: Option<[f64; 2]>,
    /// Number of flight displacements to draw; must be ≥ 1.
    pub n_flights: u64,
    /// Model parameters.
    pub theta: Theta,
}

/// Per-coordinate forward moments of the joint state (f_l, c_l), where
/// f_l is the l-th flight displacement and c_l its running sum.
struct ForwardMoments {
    m_f: Vec<f64>,
    m_c: Vec<f64>,
    v_ff: Vec<f64>,
    v_cc: Vec<f64>,
    v_fc: Vec<f64>,
}

fn forward_moments(theta: &Theta, context: Option<f64>, n: usize) -> ForwardMoments {
    let (t3, t4) = (theta.theta3(), theta.theta4());
    let (m1, v1) = match context {
        Some(prev) => (t3 * prev, t4),
        None => (0.0, t4 / (1.0 - t3 * t3)),
    };
    let mut fm = ForwardMoments {
        m_f: vec![m1; n],
        m_c: vec![m1; n],
        v_ff: vec![v1; n],
        v_cc: vec![v1; n],
        v_fc: vec![v1; n],
    };
    for l in 1..n {
        fm.m_f[l] = t3 * fm.m_f[l - 1];
        fm.m_c[l] = fm.m_c[l - 1] + fm.m_f[l];
        fm.v_ff[l] = t3 * t3 * fm.v_ff[l - 1] + t4;
        // Cov(f_{l+1}, c_l) = t3 * Cov(f_l, c_l); then c_{l+1} = c_l + f_{l+1}.
        let cross = t3 * fm.v_fc[l - 1];
        fm.v_fc[l] = cross + fm.v_ff[l];
        fm.v_cc[l] = fm.v_cc[l - 1] + 2.0 * cross + fm.v_ff[l];
    }
    fm
}

fn sample_normal<R: Rng>(mean: f64, var: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + var.max(0.0).sqrt() * z
}

fn bridge_coordinate<R: Rng>(
    theta: &Theta,
    context: Option<f64>,
    delta: f64,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    if n == 1 {
        return vec![delta];
    }
    let (t3, t4) = (theta.theta3(), theta.theta4());
    let fm = forward_moments(theta, context, n);
    let mut flights = vec![0.0; n];

    // Terminal draw: f_n given the exact sum c_n = delta.
    let gain = fm.v_fc[n - 1] / fm.v_cc[n - 1];
    let mean = fm.m_f[n - 1] + gain * (delta - fm.m_c[n - 1]);
    let var = fm.v_ff[n - 1] - gain * fm.v_fc[n - 1];
    flights[n - 1] = sample_normal(mean, var, rng);

    // Backward sweep: f_l given the next state (f_{l+1}, c_{l+1}),
    // equivalently given y = (c_l, f_{l+1}) with c_l = c_{l+1} - f_{l+1}.
    let mut c_running = delta - flights[n - 1];
    for l in (1..n - 1).rev() {
        let y = [c_running, flights[l + 1]];
        let m_y = [fm.m_c[l], t3 * fm.m_f[l]];
        let s_yy = [
            [fm.v_cc[l], t3 * fm.v_fc[l]],
            [t3 * fm.v_fc[l], t3 * t3 * fm.v_ff[l] + t4],
        ];
        let s_fy = [fm.v_fc[l], t3 * fm.v_ff[l]];
        // det ≥ t4 * Var(c_l) > 0 because Var(c)Var(f) ≥ Cov(f,c)^2.
        let det = s_yy[0][0] * s_yy[1][1] - s_yy[0][1] * s_yy[1][0];
        let w = [
            (s_fy[0] * s_yy[1][1] - s_fy[1] * s_yy[0][1]) / det,
            (s_fy[1] * s_yy[0][0] - s_fy[0] * s_yy[1][0]) / det,
        ];
        let mean = fm.m_f[l] + w[0] * (y[0] - m_y[0]) + w[1] * (y[1] - m_y[1]);
        let var = fm.v_ff[l] - w[0] * s_fy[0] - w[1] * s_fy[1];
        flights[l] = sample_normal(mean, var, rng);
        c_running -= flights[l];
    }
    // The first displacement is its own running sum.
    flights[0] = c_running;
    flights
}

fn bridge_with<R: Rng>(spec: &BridgeSpec, rng: &mut R) -> Vec<[f64; 2]> {
    assert!(spec.n_flights >= 1, "bridge requires at least one flight");
    let n = spec.n_flights as usize;
    let mut out = vec![[0.0; 2]; n];
    for c in 0..2 {
        let delta = spec.end_pos[c] - spec.start_pos[c];
        let context = spec.last_observed_displacement.map(|d| d[c]);
        let coord = bridge_coordinate(&spec.theta, context, delta, n, rng);
        for (o, f) in out.iter_mut().zip(coord) {
            o[c] = f;
        }
    }
    out
}

/// Draw `n_flights` displacement vectors from the AR(1) flight law
/// conditioned on their sum equaling `end_pos - start_pos` exactly.
///
/// Coordinates are independent; each runs a forward pass over the joint
/// Gaussian moments of (displacement, running sum) and a backward sampling
/// sweep anchored at the exact terminal sum. Deterministic given `seed`.
pub fn bridge_flights_ffbs(spec: &BridgeSpec, seed: u64) -> Vec<[f64; 2]> {
    bridge_with(spec, &mut rng(seed))
}

/// Location of one unobserved run, 1-based inclusive times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GapKind {
    Interior,
    Leading,
    Trailing,
}

#[derive(Debug, Clone, Copy)]
struct Gap {
    /// First unobserved time.
    t0: u64,
    /// Last unobserved time.
    t1: u64,
    kind: GapKind,
}

fn find_gaps(obs: &ObservedTrajectory) -> Vec<Gap> {
    let t_max = obs.len() as u64;
    let mut gaps = Vec::new();
    let mut start: Option<u64> = None;
    for t in 1..=t_max {
        let missing = obs.positions[(t - 1) as usize].is_none();
        match (missing, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                gaps.push(close_gap(s, t - 1, t_max));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        gaps.push(close_gap(s, t_max, t_max));
    }
    gaps
}

fn close_gap(t0: u64, t1: u64, t_max: u64) -> Gap {
    let kind = if t0 == 1 {
        GapKind::Leading
    } else if t1 == t_max {
        GapKind::Trailing
    } else {
        GapKind::Interior
    };
    Gap { t0, t1, kind }
}

/// Kind of the step from time `t` to `t+1`, when both positions are
/// observed: equal positions mean a pause step. Exact comparison, matching
/// the zero-tolerance extraction default.
fn step_kind(obs: &ObservedTrajectory, t: u64) -> Option<IncrementKind> {
    if t < 1 || (t + 1) as usize > obs.len() {
        return None;
    }
    let a = obs.positions[(t - 1) as usize]?;
    let b = obs.positions[t as usize]?;
    Some(if a == b {
        IncrementKind::Pause
    } else {
        IncrementKind::Flight
    })
}

/// Last flight displacement certified by the observed record at or before
/// the step into time `t`, scanning back through held (pause) positions.
fn displacement_context_before(obs: &ObservedTrajectory, t: u64) -> Option<[f64; 2]> {
    let mut s = t;
    while s >= 2 {
        let b = obs.positions[(s - 1) as usize]?;
        let a = obs.positions[(s - 2) as usize]?;
        if a != b {
            return Some([b[0] - a[0], b[1] - a[1]]);
        }
        s -= 1;
    }
    None
}

/// First flight displacement certified at or after time `t`, negated — the
/// AR(1) context for simulating the record's start backward in time (the
/// stationary chain is reversible with the same parameters).
fn displacement_context_after(obs: &ObservedTrajectory, t: u64) -> Option<[f64; 2]> {
    let t_max = obs.len() as u64;
    let mut s = t;
    while s < t_max {
        let a = obs.positions[(s - 1) as usize]?;
        let b = obs.positions[s as usize]?;
        if a != b {
            return Some([a[0] - b[0], a[1] - b[1]]);
        }
        s += 1;
    }
    None
}

/// Unconditional walk used for edge gaps: returns `n_steps` successive
/// positions starting after `anchor`, flights drawn from the AR(1) law.
fn simulate_edge<R: Rng>(
    theta: &Theta,
    anchor: [f64; 2],
    mut context: Option<[f64; 2]>,
    preceding_kind: IncrementKind,
    n_steps: u64,
    rng: &mut R,
) -> Vec<[f64; 2]> {
    let plan = sample_gap_plan_with(theta, preceding_kind, n_steps, rng);
    let (t3, t4) = (theta.theta3(), theta.theta4());
    let stationary_var = t4 / (1.0 - t3 * t3);
    let mut pos = anchor;
    let mut out = Vec::with_capacity(n_steps as usize);
    for (kind, duration) in plan.kinds.iter().zip(&plan.durations) {
        match kind {
            IncrementKind::Flight => {
                let mut f = [0.0; 2];
                for c in 0..2 {
                    f[c] = match context {
                        Some(prev) => sample_normal(t3 * prev[c], t4, rng),
                        None => sample_normal(0.0, stationary_var, rng),
                    };
                }
                context = Some(f);
                pos = [pos[0] + f[0], pos[1] + f[1]];
                out.push(pos);
            }
            IncrementKind::Pause => {
                for _ in 0..*duration {
                    out.push(pos);
                }
            }
        }
    }
    out
}

/// Cap on plan resampling when a gap's anchors disagree but the plan has
/// no flights to absorb the difference.
const PLAN_RESAMPLE_CAP: u32 = 1000;

fn fill_interior_adjusted(
    positions: &mut [Option<[f64; 2]>],
    obs: &ObservedTrajectory,
    gap: &Gap,
    theta: &Theta,
    rng: &mut ChaCha8Rng,
) {
    let left = obs.positions[(gap.t0 - 2) as usize].expect("interior gap has a left anchor");
    let right = obs.positions[gap.t1 as usize].expect("interior gap has a right anchor");
    let span = gap.t1 - gap.t0 + 2;
    let preceding = step_kind(obs, gap.t0 - 2).unwrap_or(IncrementKind::Flight);

    // A plan with no flights (a single all-span pause) cannot connect
    // distinct anchors; resample, then fall back to an all-flight plan.
    let mut plan = sample_gap_plan_with(theta, preceding, span, rng);
    let mut attempts = 0;
    while plan.flight_count() == 0 && left != right {
        attempts += 1;
        if attempts >= PLAN_RESAMPLE_CAP {
            plan = GapPlan {
                kinds: vec![IncrementKind::Flight; span as usize],
                durations: vec![1; span as usize],
                total_duration: span,
            };
            break;
        }
        plan = sample_gap_plan_with(theta, preceding, span, rng);
    }

    let flights = if plan.flight_count() >= 1 {
        bridge_with(
            &BridgeSpec {
                start_pos: left,
                end_pos: right,
                last_observed_displacement: displacement_context_before(obs, gap.t0 - 1),
                n_flights: plan.flight_count(),
                theta: *theta,
            },
            rng,
        )
    } else {
        Vec::new()
    };

    // Walk the plan's steps; the final step lands on the observed right
    // anchor and is not written.
    let mut pos = left;
    let mut next_flight = 0;
    let mut t = gap.t0;
    'walk: for (kind, duration) in plan.kinds.iter().zip(&plan.durations) {
        for _ in 0..*duration {
            if kind.is_flight() {
                let f = flights[next_flight];
                next_flight += 1;
                pos = [pos[0] + f[0], pos[1] + f[1]];
            }
            if t > gap.t1 {
                break 'walk;
            }
            positions[(t - 1) as usize] = Some(pos);
            t += 1;
        }
    }
}

fn fill_gap_linear(positions: &mut [Option<[f64; 2]>], obs: &ObservedTrajectory, gap: &Gap) {
    match gap.kind {
        GapKind::Interior => {
            let left = obs.positions[(gap.t0 - 2) as usize].expect("left anchor");
            let right = obs.positions[gap.t1 as usize].expect("right anchor");
            let span = (gap.t1 - gap.t0 + 2) as f64;
            for (k, t) in (gap.t0..=gap.t1).enumerate() {
                let frac = (k + 1) as f64 / span;
                positions[(t - 1) as usize] = Some([
                    left[0] + frac * (right[0] - left[0]),
                    left[1] + frac * (right[1] - left[1]),
                ]);
            }
        }
        // With one anchor the straight line has no defined slope; hold the
        // nearest observed position.
        GapKind::Leading => {
            let right = obs.positions[gap.t1 as usize].expect("right anchor");
            for t in gap.t0..=gap.t1 {
                positions[(t - 1) as usize] = Some(right);
            }
        }
        GapKind::Trailing => {
            let left = obs.positions[(gap.t0 - 2) as usize].expect("left anchor");
            for t in gap.t0..=gap.t1 {
                positions[(t - 1) as usize] = Some(left);
            }
        }
    }
}

fn fill_gap_adjusted(
    positions: &mut [Option<[f64; 2]>],
    obs: &ObservedTrajectory,
    gap: &Gap,
    theta: &Theta,
    rng: &mut ChaCha8Rng,
) {
    match gap.kind {
        GapKind::Interior => fill_interior_adjusted(positions, obs, gap, theta, rng),
        GapKind::Trailing => {
            let left = obs.positions[(gap.t0 - 2) as usize].expect("left anchor");
            let steps = simulate_edge(
                theta,
                left,
                displacement_context_before(obs, gap.t0 - 1),
                step_kind(obs, gap.t0 - 2).unwrap_or(IncrementKind::Flight),
                gap.t1 - gap.t0 + 1,
                rng,
            );
            for (k, t) in (gap.t0..=gap.t1).enumerate() {
                positions[(t - 1) as usize] = Some(steps[k]);
            }
        }
        GapKind::Leading => {
            let right = obs.positions[gap.t1 as usize].expect("right anchor");
            let steps = simulate_edge(
                theta,
                right,
                displacement_context_after(obs, gap.t1 + 1),
                step_kind(obs, gap.t1 + 1).unwrap_or(IncrementKind::Flight),
                gap.t1 - gap.t0 + 1,
                rng,
            );
            // Steps walk backward in time from the right anchor.
            for (k, t) in (gap.t0..=gap.t1).rev().enumerate() {
                positions[(t - 1) as usize] = Some(steps[k]);
            }
        }
    }
}

/// Everything about an imputation run except the trajectories themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationMetadata {
    /// Fill method used.
    pub method: ImputeMethod,
    /// Parameters driving the parametric sampler.
    pub theta_hat: Theta,
    /// Master seed of the run.
    pub seed: u64,
    /// Number of imputed trajectories.
    pub n_imputations: u64,
    /// Unobserved runs abutting the record's start or end, as (first, last)
    /// times; filled by the one-sided edge policy rather than a bridge.
    pub edge_gap_spans: Vec<(u64, u64)>,
}

/// Imputed trajectories plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationOutput {
    /// One complete trajectory per imputation, in imputation order.
    pub trajectories: Vec<Trajectory>,
    /// Method, seed, and edge-gap report.
    pub metadata: ImputationMetadata,
}

/// Fill every unobserved run of `obs`, producing `n_imputations` complete
/// trajectories that agree exactly with the observed positions.
///
/// `res` must be the extraction of `obs`; it is checked for basic
/// compatibility (increment spans and leftovers within the record).
pub fn impute_gaps(
    obs: &ObservedTrajectory,
    res: &ExtractionResult,
    theta_hat: &Theta,
    method: ImputeMethod,
    n_imputations: u64,
    seed: u64,
) -> Result<ImputationOutput> {
    let t_max = obs.len() as u64;
    if t_max == 0 {
        return Err(Error::Domain(
            "cannot impute an empty trajectory".to_owned(),
        ));
    }
    if obs.positions.iter().all(|p| p.is_none()) {
        return Err(Error::Domain(
            "cannot impute a trajectory with no observed positions".to_owned(),
        ));
    }
    if n_imputations < 1 {
        return Err(Error::Domain("n_imputations must be at least 1".to_owned()));
    }
    let span_ok = res
        .blocks
        .iter()
        .flatten()
        .all(|inc| inc.end_time() <= t_max)
        && res.leftover_locations.iter().all(|&t| t <= t_max);
    if !span_ok {
        return Err(Error::Mismatch(
            "extraction refers to times beyond the observed trajectory".to_owned(),
        ));
    }

    let gaps = find_gaps(obs);
    let edge_gap_spans: Vec<(u64, u64)> = gaps
        .iter()
        .filter(|g| g.kind != GapKind::Interior)
        .map(|g| (g.t0, g.t1))
        .collect();

    let mut trajectories = Vec::with_capacity(n_imputations as usize);
    for i in 0..n_imputations {
        let imp_seed = derive(seed, "imputation", i);
        let mut positions = obs.positions.clone();
        for (g, gap) in gaps.iter().enumerate() {
            match method {
                ImputeMethod::Linear => fill_gap_linear(&mut positions, obs, gap),
                ImputeMethod::AdjustedParametric => {
                    let mut gap_rng = rng(derive(imp_seed, "gap", g as u64));
                    fill_gap_adjusted(&mut positions, obs, gap, theta_hat, &mut gap_rng);
                }
            }
        }
        trajectories.push(Trajectory::new(
            positions
                .into_iter()
                .map(|p| p.expect("all gaps are filled"))
                .collect(),
        ));
    }
    Ok(ImputationOutput {
        trajectories,
        metadata: ImputationMetadata {
            method,
            theta_hat: *theta_hat,
            seed,
            n_imputations,
            edge_gap_spans,
        },
    })
}
