//! Observed-data log-likelihoods and maximum-likelihood fitting.
//!
//! Two likelihoods are offered for an [`ExtractionResult`]:
//!
//! * [`naive_mar_log_likelihood`] treats each observed block as a distinct
//!   complete trajectory and ignores the gaps entirely — the estimator one
//!   writes down when the data-collection mechanism is assumed ignorable.
//! * [`mnar_adjusted_log_likelihood`] adds, per gap, the probability of
//!   the step-level flight/pause pattern that the extraction *did* resolve
//!   around and inside the gap — the boundary pause runs abutting the
//!   blocks and any stationary islands observed between them — while
//!   marginalizing the genuinely hidden steps through the two-state chain.
//!   This is the correction for a non-ignorable mechanism: whether an
//!   increment survives extraction depends on its duration, so blocks
//!   over-represent short pauses and the naive likelihood is biased.
//!   Honoring the islands matters for the same reason: an observed
//!   stationary run proves the chain sat in the pause state there, and
//!   bridging over it as if it were hidden would systematically understate
//!   long pauses.
//!
//! The adjusted gap term is validated against
//! [`brute_force_gap_log_likelihood`], which enumerates every hidden
//! flight/pause assignment over a gap's time span and sums their
//! probabilities directly. The closed form and the enumeration must agree
//! to near machine precision; the enumeration is the ground truth that
//! fixes all boundary-indexing conventions.
//!
//! Design note: the gap term only involves the chain parameters (θ1, θ2).
//! Displacements of hidden flights integrate to one, and the observation
//! pattern of a location-driven mechanism is a deterministic function of
//! time, so no spatial or mechanism-specific factor survives in the
//! correction. This also means the same adjusted likelihood applies
//! unchanged to duty-cycled, one-outage, composite, and independent-thinning
//! mechanisms.

use serde::{Deserialize, Serialize};

use crate::chain::{two_state_nstep, two_state_transition, FLIGHT, PAUSE};
use crate::error::{Error, Result};
use crate::model::{log1m, normal_log_pdf, Increment, IncrementKind, Theta};
use crate::optim::nelder_mead;
use crate::trajectory::{BlockStats, ExtractionResult};

/// Within-block counts and displacement pairs entering the likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    /// Number of pause increments in the block.
    pub pause_count: u64,
    /// Number of flights followed, within the block, by another flight.
    pub flight_flight_count: u64,
    /// Sum of pause durations in the block.
    pub pause_duration_sum: u64,
    /// One entry per flight after the block's first increment:
    /// (previous increment's displacement, this flight's displacement).
    /// A pause stores its predecessor flight's displacement, so the first
    /// element is always the autoregression context.
    pub gaussian_pairs: Vec<([f64; 2], [f64; 2])>,
    /// Displacement of the block's first increment (always a flight).
    pub first_displacement: [f64; 2],
}

/// Compute the sufficient statistics of one extracted block.
pub fn block_sufficient_stats(block: &[Increment]) -> Result<SufficientStats> {
    let first = block
        .first()
        .ok_or_else(|| Error::Domain("block has no increments".to_owned()))?;
    if !first.kind.is_flight() {
        return Err(Error::Domain(
            "block must start with a flight increment".to_owned(),
        ));
    }
    let mut stats = SufficientStats {
        pause_count: 0,
        flight_flight_count: 0,
        pause_duration_sum: 0,
        gaussian_pairs: Vec::new(),
        first_displacement: first.displacement,
    };
    for pair in block.windows(2) {
        match (pair[0].kind, pair[1].kind) {
            (IncrementKind::Flight, IncrementKind::Flight) => stats.flight_flight_count += 1,
            (IncrementKind::Pause, IncrementKind::Pause) => {
                return Err(Error::Domain(
                    "block contains consecutive pauses".to_owned(),
                ))
            }
            _ => {}
        }
        if pair[1].kind.is_pause() {
            stats.pause_count += 1;
            stats.pause_duration_sum += pair[1].duration;
        } else {
            stats
                .gaussian_pairs
                .push((pair[0].displacement, pair[1].displacement));
        }
    }
    Ok(stats)
}

/// Mean and per-coordinate variance of the stationary displacement law of
/// the AR(1) flight process: N(0, θ4 / (1 − θ3²)) per coordinate.
pub fn stationary_flight_marginal(theta3: f64, theta4: f64) -> Result<([f64; 2], f64)> {
    if theta3.is_nan() || theta3.abs() >= 1.0 {
        return Err(Error::Domain(format!(
            "stationary marginal requires |theta3| < 1, got {theta3}"
        )));
    }
    if !(theta4 > 0.0 && theta4.is_finite()) {
        return Err(Error::Domain(format!(
            "stationary marginal requires theta4 > 0, got {theta4}"
        )));
    }
    Ok(([0.0, 0.0], theta4 / (1.0 - theta3 * theta3)))
}

/// Chain-parameter (θ1, θ2) terms of a block's log-likelihood. Split from
/// the displacement terms so tests can compare the step-kind component of
/// the observed-data likelihood against exhaustive chain enumeration.
fn block_kind_log_likelihood(stats: &SufficientStats, theta: &Theta) -> f64 {
    let (t1, t2) = (theta.theta1(), theta.theta2());
    let mut ll = 0.0;
    // Transition terms: every pause in a block is entered from a flight
    // (blocks contain no consecutive pauses), so flight->pause events are
    // counted by pause_count. Pause->flight transitions have probability 1.
    ll += stats.pause_count as f64 * t1.ln();
    ll += stats.flight_flight_count as f64 * log1m(t1);
    // Pause durations: geometric on {1, 2, ...}.
    ll += stats.pause_count as f64 * t2.ln();
    ll += (stats.pause_duration_sum - stats.pause_count) as f64 * log1m(t2);
    ll
}

/// Displacement (θ3, θ4) terms of a block's log-likelihood.
fn block_gaussian_log_likelihood(stats: &SufficientStats, theta: &Theta) -> Result<f64> {
    let (t3, t4) = (theta.theta3(), theta.theta4());
    let mut ll = 0.0;
    // First displacement of the block: stationary AR(1) marginal. The
    // increments preceding the block are unobserved, so the marginal law —
    // not a conditional one — is the correct contribution.
    let (_, var) = stationary_flight_marginal(t3, t4)?;
    for c in 0..2 {
        ll += normal_log_pdf(stats.first_displacement[c], 0.0, var);
    }
    // Subsequent flights: AR(1) conditional on the previous displacement.
    for (prev, disp) in &stats.gaussian_pairs {
        for c in 0..2 {
            ll += normal_log_pdf(disp[c], t3 * prev[c], t4);
        }
    }
    Ok(ll)
}

fn block_log_likelihood(stats: &SufficientStats, theta: &Theta) -> Result<f64> {
    Ok(block_kind_log_likelihood(stats, theta) + block_gaussian_log_likelihood(stats, theta)?)
}

/// Composite log-likelihood that treats each observed block as a distinct
/// trajectory and ignores the gaps — the "ignorable mechanism" estimator.
pub fn naive_mar_log_likelihood(res: &ExtractionResult, theta: &Theta) -> Result<f64> {
    if res.blocks.is_empty() {
        return Err(Error::EmptyExtraction);
    }
    let mut ll = 0.0;
    for block in &res.blocks {
        let stats = block_sufficient_stats(block)?;
        ll += block_log_likelihood(&stats, theta)?;
    }
    Ok(ll)
}

/// Check that a gap's stationary islands lie strictly inside its span, in
/// order and non-overlapping, so every chain stretch between resolved
/// positions covers at least one transition.
fn validate_gap_islands(stats: &BlockStats) -> Result<()> {
    let mut prev_end = 0u64;
    for run in &stats.islands {
        if run.len < 1 {
            return Err(Error::Domain(
                "stationary run must contain at least one step".to_owned(),
            ));
        }
        if run.offset <= prev_end {
            return Err(Error::Domain(format!(
                "stationary run at offset {} overlaps the previous resolved step at {}",
                run.offset, prev_end
            )));
        }
        if run.offset + run.len > stats.n {
            return Err(Error::Domain(format!(
                "stationary run at offset {} with length {} leaves gap span n = {}",
                run.offset, run.len, stats.n
            )));
        }
        prev_end = run.offset + run.len - 1;
    }
    Ok(())
}

/// Log-probability correction contributed by one gap.
///
/// A gap runs from the last flight of one block to the first flight of the
/// next. The extraction resolves `d` trailing pause steps after that
/// flight, `g` leading pause steps before the next one, and possibly some
/// stationary islands in between; every other step in the span is of
/// unknown type and is marginalized through the chain kernel. Reading left
/// to right, the factors are:
///
/// * entering the trailing pause (`θ1`) and staying in it (`(1−θ2)^(d−1)`),
///   when `d ≥ 1`;
/// * per island, in time order: the transition mass from the previous
///   resolved state into the pause state across the unknown stretch,
///   `Q^k[state][pause]`, then the observed survivals `(1−θ2)^(len−1)`;
/// * the closing bridge `Q^k[state][y]` from the last resolved position to
///   the first resolved step of the next block (pause if `g ≥ 1`, else its
///   first flight);
/// * staying in the leading pause (`(1−θ2)^(g−1)`) and leaving it into the
///   next block's first flight (`θ2`), when `g ≥ 1`.
///
/// Every step transition across the gap is counted exactly once, and none
/// of them is counted by the within-block terms (those only cover pairs
/// with both increments inside a block).
pub fn gap_correction(stats: &BlockStats, theta: &Theta) -> Result<f64> {
    if stats.n < 1 {
        return Err(Error::Domain(format!(
            "gap must span at least one step, got n = {}",
            stats.n
        )));
    }
    validate_gap_islands(stats)?;
    let (t1, t2) = (theta.theta1(), theta.theta2());
    let mut ll = 0.0;
    let mut state = if stats.d >= 1 {
        ll += t1.ln() + (stats.d - 1) as f64 * log1m(t2);
        PAUSE
    } else {
        FLIGHT
    };
    // Thread the chain through each observed stationary run: bridge the
    // unknown stretch into the pause state, then charge the survivals the
    // run itself witnessed.
    let mut pos = 0u64;
    for run in &stats.islands {
        let q = two_state_nstep(t1, t2, run.offset - pos);
        ll += q[state][PAUSE].ln();
        ll += (run.len - 1) as f64 * log1m(t2);
        state = PAUSE;
        pos = run.offset + run.len - 1;
    }
    let y = if stats.g >= 1 { PAUSE } else { FLIGHT };
    let q = two_state_nstep(t1, t2, stats.n - pos);
    ll += q[state][y].ln();
    if stats.g >= 1 {
        ll += t2.ln() + (stats.g - 1) as f64 * log1m(t2);
    }
    Ok(ll)
}

/// Observed-data log-likelihood adjusted for a non-ignorable mechanism:
/// within-block terms plus one [`gap_correction`] per gap.
pub fn mnar_adjusted_log_likelihood(res: &ExtractionResult, theta: &Theta) -> Result<f64> {
    if res.blocks.is_empty() {
        return Err(Error::EmptyExtraction);
    }
    if res.block_stats.len() + 1 != res.blocks.len() {
        return Err(Error::Mismatch(format!(
            "{} blocks require {} gap statistics, found {}",
            res.blocks.len(),
            res.blocks.len() - 1,
            res.block_stats.len()
        )));
    }
    let mut ll = naive_mar_log_likelihood(res, theta)?;
    for stats in &res.block_stats {
        ll += gap_correction(stats, theta)?;
    }
    Ok(ll)
}

/// Default enumeration bound for [`brute_force_gap_log_likelihood`].
pub const DEFAULT_MAX_BRUTE_FORCE_GAP: u64 = 12;

/// Ground-truth gap contribution by exhaustive enumeration.
///
/// Builds the step-state template for the gap — the last flight of the left
/// block, `d` resolved pause steps, `n − 1` interior steps, `g` resolved
/// pause steps, the first flight of the right block — pins every interior
/// step covered by an observed stationary island to the pause state, and
/// sums the chain probability of every assignment of the remaining free
/// steps. Only step sequences consistent with everything the observation
/// pattern resolved are counted; hidden flight displacements integrate to
/// one, so only chain factors remain.
///
/// `boundary` must name the last resolved step state of the left stretch
/// and the first resolved step state of the right one; it is checked for
/// consistency with `stats` (pause on a side exactly when `d ≥ 1` resp.
/// `g ≥ 1`).
pub fn brute_force_gap_log_likelihood(
    boundary: (IncrementKind, IncrementKind),
    stats: &BlockStats,
    theta: &Theta,
    max_gap_len: u64,
) -> Result<f64> {
    if stats.n < 1 {
        return Err(Error::Domain(format!(
            "gap must span at least one step, got n = {}",
            stats.n
        )));
    }
    if stats.n > max_gap_len {
        return Err(Error::GapTooLong {
            n: stats.n,
            max: max_gap_len,
        });
    }
    let expect_left = if stats.d >= 1 {
        IncrementKind::Pause
    } else {
        IncrementKind::Flight
    };
    let expect_right = if stats.g >= 1 {
        IncrementKind::Pause
    } else {
        IncrementKind::Flight
    };
    if boundary.0 != expect_left || boundary.1 != expect_right {
        return Err(Error::Mismatch(format!(
            "boundary ({}, {}) inconsistent with gap statistics d = {}, g = {}",
            boundary.0, boundary.1, stats.d, stats.g
        )));
    }

    validate_gap_islands(stats)?;

    // Step-state template over the gap's full time span. Index i is the
    // step i transitions after the left block's last flight, so the
    // interior (unresolved) indices are d + 1 ..= d + n - 1.
    let mut template: Vec<Option<usize>> = Vec::new();
    template.push(Some(FLIGHT));
    template.extend(std::iter::repeat_n(Some(PAUSE), stats.d as usize));
    template.extend(std::iter::repeat_n(None, (stats.n - 1) as usize));
    template.extend(std::iter::repeat_n(Some(PAUSE), stats.g as usize));
    template.push(Some(FLIGHT));

    // Observed stationary islands pin their interior steps to pauses;
    // island offsets count transitions from the last resolved boundary
    // step, which sits at template index d.
    for run in &stats.islands {
        for k in 0..run.len {
            template[(stats.d + run.offset + k) as usize] = Some(PAUSE);
        }
    }
    let free = template.iter().filter(|slot| slot.is_none()).count();

    let q = two_state_transition(theta.theta1(), theta.theta2());
    let mut total = 0.0;
    let mut states = vec![0usize; template.len()];
    for assignment in 0..(1_u64 << free) {
        let mut bit = 0;
        for (slot, state) in template.iter().zip(states.iter_mut()) {
            *state = match slot {
                Some(s) => *s,
                None => {
                    let s = if (assignment >> bit) & 1 == 1 {
                        PAUSE
                    } else {
                        FLIGHT
                    };
                    bit += 1;
                    s
                }
            };
        }
        let mut prob = 1.0;
        for w in states.windows(2) {
            prob *= q[w[0]][w[1]];
        }
        total += prob;
    }
    Ok(total.ln())
}

/// Which observed-data likelihood a fit maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Blocks only; the mechanism is assumed ignorable.
    NaiveMar,
    /// Blocks plus per-gap corrections for the non-ignorable mechanism.
    MnarAdjusted,
}

impl std::fmt::Display for FitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitMode::NaiveMar => write!(f, "naive_mar"),
            FitMode::MnarAdjusted => write!(f, "mnar_adjusted"),
        }
    }
}

/// Evaluate the log-likelihood selected by `mode`.
pub fn log_likelihood(res: &ExtractionResult, mode: FitMode, theta: &Theta) -> Result<f64> {
    match mode {
        FitMode::NaiveMar => naive_mar_log_likelihood(res, theta),
        FitMode::MnarAdjusted => mnar_adjusted_log_likelihood(res, theta),
    }
}

/// Open box over which [`fit`] searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    /// Lower bounds for (θ1, θ2, θ3, θ4).
    pub lower: [f64; 4],
    /// Upper bounds for (θ1, θ2, θ3, θ4); the θ4 bound may be infinite.
    pub upper: [f64; 4],
}

impl Default for FitBounds {
    fn default() -> Self {
        const EPS: f64 = 1e-9;
        FitBounds {
            lower: [EPS, EPS, -1.0 + EPS, EPS],
            upper: [1.0 - EPS, 1.0 - EPS, 1.0 - EPS, f64::INFINITY],
        }
    }
}

impl FitBounds {
    fn contains(&self, theta: &Theta) -> bool {
        theta
            .as_array()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&t, (&lo, &hi))| t > lo && t < hi)
    }

    /// Map an unconstrained coordinate into this box (per dimension).
    fn to_box(self, i: usize, u: f64) -> f64 {
        let (lo, hi) = (self.lower[i], self.upper[i]);
        if hi.is_finite() {
            // Clamp the sigmoid away from 0 and 1 so the endpoint is never
            // produced exactly even when the optimizer saturates.
            let s = (1.0 / (1.0 + (-u).exp())).clamp(1e-12, 1.0 - 1e-12);
            lo + (hi - lo) * s
        } else {
            lo + u.exp()
        }
    }

    /// Inverse of [`Self::to_box`].
    fn to_free(self, i: usize, t: f64) -> f64 {
        let (lo, hi) = (self.lower[i], self.upper[i]);
        if hi.is_finite() {
            let s = (t - lo) / (hi - lo);
            (s / (1.0 - s)).ln()
        } else {
            (t - lo).ln()
        }
    }
}

/// Result of a maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Maximizer of the selected log-likelihood.
    pub theta_hat: Theta,
    /// Log-likelihood at `theta_hat`.
    #[serde(rename = "loglik")]
    pub log_lik: f64,
    /// Which likelihood was maximized.
    pub mode: FitMode,
    /// Whether the optimizer met its tolerance before the iteration cap.
    pub converged: bool,
    /// Simplex iterations performed.
    pub iterations: u64,
}

/// Maximize the selected log-likelihood over the open box `bounds`.
///
/// The search runs in an unconstrained reparameterization (logit for
/// finite-interval coordinates, log for the half-line), which keeps the
/// optimizer away from boundary pathologies; `converged` reflects a 1e-8
/// tolerance on the log-likelihood spread. Deterministic given `init`.
pub fn fit(
    res: &ExtractionResult,
    mode: FitMode,
    init: &Theta,
    bounds: &FitBounds,
) -> Result<FitResult> {
    if res.blocks.is_empty() {
        return Err(Error::EmptyExtraction);
    }
    if !bounds.contains(init) {
        return Err(Error::Domain(format!(
            "initial theta {:?} is outside the fit bounds",
            init.as_array()
        )));
    }
    let objective = |u: &[f64]| -> f64 {
        let arr: Vec<f64> = (0..4).map(|i| bounds.to_box(i, u[i])).collect();
        match Theta::new(arr[0], arr[1], arr[2], arr[3]) {
            Ok(theta) => match log_likelihood(res, mode, &theta) {
                Ok(ll) => -ll,
                Err(_) => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    };
    let u0: Vec<f64> = init
        .as_array()
        .iter()
        .enumerate()
        .map(|(i, &t)| bounds.to_free(i, t))
        .collect();
    let min = nelder_mead(objective, &u0, 1e-8, 1e-6, 5000)?;
    let arr: Vec<f64> = (0..4).map(|i| bounds.to_box(i, min.x[i])).collect();
    let theta_hat = Theta::new(arr[0], arr[1], arr[2], arr[3])?;
    Ok(FitResult {
        theta_hat,
        log_lik: -min.f,
        mode,
        converged: min.converged,
        iterations: min.iterations,
    })
}

/// Method-of-moments starting point for [`fit`].
///
/// Chain probabilities come from the observed transition counts, the AR
/// coefficient from the lag-1 regression of successive flight
/// displacements, and the noise variance from the displacement second
/// moment. Every component is clamped into the interior of its domain, so
/// the guess is always a valid start even on degenerate extractions.
pub fn moment_initial_guess(res: &ExtractionResult) -> Theta {
    let mut pauses = 0u64;
    let mut flight_flight = 0u64;
    let mut pause_steps = 0u64;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut disp_sq = 0.0;
    let mut n_flights = 0u64;
    for block in &res.blocks {
        if let Ok(stats) = block_sufficient_stats(block) {
            pauses += stats.pause_count;
            flight_flight += stats.flight_flight_count;
            pause_steps += stats.pause_duration_sum;
            for (prev, cur) in &stats.gaussian_pairs {
                for c in 0..2 {
                    num += prev[c] * cur[c];
                    den += prev[c] * prev[c];
                }
            }
        }
        for inc in block {
            if inc.kind == IncrementKind::Flight {
                n_flights += 1;
                disp_sq += inc.displacement[0] * inc.displacement[0]
                    + inc.displacement[1] * inc.displacement[1];
            }
        }
    }
    let ratio_or = |n: u64, d: u64, fallback: f64| {
        if d == 0 {
            fallback
        } else {
            n as f64 / d as f64
        }
    };
    let theta1 = ratio_or(pauses, pauses + flight_flight, 0.5).clamp(0.02, 0.98);
    let theta2 = ratio_or(pauses, pause_steps, 0.5).clamp(0.02, 0.98);
    let theta3 = if den > 0.0 { num / den } else { 0.0 }.clamp(-0.95, 0.95);
    // Marginal displacement variance is theta4 / (1 - theta3^2) per
    // coordinate; invert it at the estimated AR coefficient.
    let marginal = if n_flights == 0 {
        1.0
    } else {
        disp_sq / (2.0 * n_flights as f64)
    };
    let theta4 = (marginal * (1.0 - theta3 * theta3)).max(1e-6);
    Theta::new(theta1, theta2, theta3, theta4).expect("clamped moments are in the domain")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        complete_data_log_likelihood, simulate_motion, InitialIncrementSpec, Motion,
    };
    use crate::trajectory::{
        extract_increments, motion_to_trajectory, ObservabilityVector, ObservedTrajectory, PauseRun,
    };

    fn theta() -> Theta {
        Theta::new(0.2, 0.3, 0.5, 2.0).unwrap()
    }

    fn full_extraction(motion: &Motion) -> ExtractionResult {
        let traj = motion_to_trajectory(motion);
        let obs = crate::mechanisms::mask_trajectory(
            &traj,
            &ObservabilityVector::all_observed(traj.len()),
        )
        .unwrap();
        extract_increments(&obs, 0.0)
    }

    #[test]
    fn stationary_marginal_formula() {
        let (mean, var) = stationary_flight_marginal(0.0, 2.5).unwrap();
        assert_eq!(mean, [0.0, 0.0]);
        assert_eq!(var, 2.5);
        let (_, var) = stationary_flight_marginal(0.95, 1.0).unwrap();
        assert!((var - 1.0 / (1.0 - 0.9025)).abs() < 1e-12);
        assert!(stationary_flight_marginal(1.0, 1.0).is_err());
        assert!(stationary_flight_marginal(-1.2, 1.0).is_err());
    }

    #[test]
    fn stationary_marginal_matches_long_run_variance() {
        // Flight displacements form an AR(1) sequence (pauses carry the
        // previous flight's displacement forward), so their long-run
        // variance is theta4 / (1 - theta3^2) per coordinate.
        let theta = Theta::new(0.3, 0.4, 0.5, 1.5).unwrap();
        let init = InitialIncrementSpec::default();
        let mut sum_sq = 0.0;
        let mut count = 0_u64;
        for seed in 0..20 {
            let motion = simulate_motion(&theta, 20_000, &init, 900 + seed);
            for inc in motion.increments.iter().filter(|i| i.kind.is_flight()) {
                sum_sq += inc.displacement[0] * inc.displacement[0]
                    + inc.displacement[1] * inc.displacement[1];
                count += 2;
            }
        }
        let var_hat = sum_sq / count as f64;
        let (_, var) = stationary_flight_marginal(0.5, 1.5).unwrap();
        // Monte Carlo standard error of a mean of squares from an AR(1)
        // sequence, inflated by the lag-correlation factor (1+rho^2)/(1-rho^2)
        // with rho = theta3.
        let rho2 = 0.25;
        let se = (2.0 * var * var / count as f64 * (1.0 + rho2) / (1.0 - rho2)).sqrt();
        assert!(
            (var_hat - var).abs() < 3.0 * se,
            "var_hat = {var_hat}, var = {var}, se = {se}"
        );
    }

    #[test]
    fn sufficient_stats_count_events() {
        let motion = simulate_motion(&theta(), 300, &InitialIncrementSpec::default(), 4);
        let res = full_extraction(&motion);
        assert_eq!(res.blocks.len(), 1);
        let block = &res.blocks[0];
        let stats = block_sufficient_stats(block).unwrap();
        let pauses = block.iter().filter(|i| i.kind.is_pause()).count() as u64;
        assert_eq!(stats.pause_count, pauses);
        assert_eq!(
            stats.pause_duration_sum,
            block
                .iter()
                .filter(|i| i.kind.is_pause())
                .map(|i| i.duration)
                .sum::<u64>()
        );
        // Every non-initial flight yields one Gaussian pair.
        let flights = block.iter().filter(|i| i.kind.is_flight()).count() as u64;
        assert_eq!(stats.gaussian_pairs.len() as u64, flights - 1);
        // Pairs partition the within-block transitions out of flights.
        assert_eq!(
            stats.flight_flight_count + stats.pause_count,
            block.len() as u64 - 1 - stats.pause_count
        );
        assert_eq!(stats.first_displacement, block[0].displacement);
    }

    #[test]
    fn one_block_reduction_matches_complete_data_likelihood() {
        // With full observation the extraction is the complete motion minus
        // trailing boundary increments; on those increments the naive
        // likelihood is the complete-data likelihood, provided the initial
        // displacement is scored by the same (stationary) marginal.
        let th = theta();
        let stationary_var = 2.0 / (1.0 - 0.25);
        let init = InitialIncrementSpec {
            start_pos: [0.0, 0.0],
            first_displacement_mean: [0.0, 0.0],
            first_displacement_var: stationary_var,
        };
        for seed in 0..10 {
            let motion = simulate_motion(&th, 100, &init, 50 + seed);
            let res = full_extraction(&motion);
            assert_eq!(res.blocks.len(), 1);
            let truncated = Motion::new(res.blocks[0].clone());
            let naive = naive_mar_log_likelihood(&res, &th).unwrap();
            let complete = complete_data_log_likelihood(&truncated, &th, &init).unwrap();
            assert!(
                (naive - complete).abs() < 1e-12,
                "naive = {naive}, complete = {complete}"
            );
        }
    }

    #[test]
    fn composite_likelihood_is_additive_over_blocks() {
        let th = theta();
        let motion_a = simulate_motion(&th, 200, &InitialIncrementSpec::default(), 7);
        let motion_b = simulate_motion(&th, 200, &InitialIncrementSpec::default(), 8);
        let res_a = full_extraction(&motion_a);
        let res_b = full_extraction(&motion_b);
        let mut combined = ExtractionResult::empty();
        combined.blocks = vec![res_a.blocks[0].clone(), res_b.blocks[0].clone()];
        combined.effective_sample_size = res_a.effective_sample_size + res_b.effective_sample_size;
        let sum = naive_mar_log_likelihood(&res_a, &th).unwrap()
            + naive_mar_log_likelihood(&res_b, &th).unwrap();
        let joint = naive_mar_log_likelihood(&combined, &th).unwrap();
        assert!((joint - sum).abs() < 1e-12);
    }

    #[test]
    fn empty_extraction_is_an_error() {
        let res = ExtractionResult::empty();
        assert!(matches!(
            naive_mar_log_likelihood(&res, &theta()),
            Err(Error::EmptyExtraction)
        ));
        assert!(matches!(
            mnar_adjusted_log_likelihood(&res, &theta()),
            Err(Error::EmptyExtraction)
        ));
    }

    #[test]
    fn zero_gaps_means_adjusted_equals_naive_exactly() {
        let motion = simulate_motion(&theta(), 500, &InitialIncrementSpec::default(), 12);
        let res = full_extraction(&motion);
        assert!(res.block_stats.is_empty());
        let naive = naive_mar_log_likelihood(&res, &theta()).unwrap();
        let adjusted = mnar_adjusted_log_likelihood(&res, &theta()).unwrap();
        assert_eq!(naive, adjusted);
    }

    #[test]
    fn missing_gap_stats_are_an_error() {
        let th = theta();
        let motion = simulate_motion(&th, 200, &InitialIncrementSpec::default(), 3);
        let res = full_extraction(&motion);
        let mut two_blocks = ExtractionResult::empty();
        two_blocks.blocks = vec![res.blocks[0].clone(), res.blocks[0].clone()];
        assert!(matches!(
            mnar_adjusted_log_likelihood(&two_blocks, &th),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn brute_force_hand_checks() {
        let th = Theta::new(0.5, 0.5, 0.5, 1.0).unwrap();
        // One hidden step, flight boundaries: a single transition.
        let stats = BlockStats {
            d: 0,
            g: 0,
            n: 1,
            islands: vec![],
        };
        let lf = brute_force_gap_log_likelihood(
            (IncrementKind::Flight, IncrementKind::Flight),
            &stats,
            &th,
            12,
        )
        .unwrap();
        assert!((lf - 0.5_f64.ln()).abs() < 1e-15);

        // Two steps, flight boundaries: (1-t1)^2 + t1*t2 summed over the
        // two hidden middle states.
        let th2 = Theta::new(0.3, 0.6, 0.5, 1.0).unwrap();
        let stats = BlockStats {
            d: 0,
            g: 0,
            n: 2,
            islands: vec![],
        };
        let lf = brute_force_gap_log_likelihood(
            (IncrementKind::Flight, IncrementKind::Flight),
            &stats,
            &th2,
            12,
        )
        .unwrap();
        assert!((lf - (0.7 * 0.7 + 0.3 * 0.6_f64).ln()).abs() < 1e-15);

        // Trailing pause of two resolved steps, then one transition into
        // the next flight: 0.5 * 0.5 * 0.5.
        let stats = BlockStats {
            d: 2,
            g: 0,
            n: 1,
            islands: vec![],
        };
        let lf = brute_force_gap_log_likelihood(
            (IncrementKind::Pause, IncrementKind::Flight),
            &stats,
            &th,
            12,
        )
        .unwrap();
        assert!((lf.exp() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn brute_force_validates_inputs() {
        let th = theta();
        let stats = BlockStats {
            d: 0,
            g: 0,
            n: 20,
            islands: vec![],
        };
        assert!(matches!(
            brute_force_gap_log_likelihood(
                (IncrementKind::Flight, IncrementKind::Flight),
                &stats,
                &th,
                12
            ),
            Err(Error::GapTooLong { n: 20, max: 12 })
        ));
        let stats = BlockStats {
            d: 1,
            g: 0,
            n: 2,
            islands: vec![],
        };
        assert!(matches!(
            brute_force_gap_log_likelihood(
                (IncrementKind::Flight, IncrementKind::Flight),
                &stats,
                &th,
                12
            ),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn gap_correction_matches_brute_force_everywhere() {
        let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
        let cases = [(0_u64, 0_u64), (2, 0), (0, 3), (2, 3)];
        for &t1 in &grid {
            for &t2 in &grid {
                let th = Theta::new(t1, t2, 0.5, 1.0).unwrap();
                for &(d, g) in &cases {
                    for n in [1_u64, 2, 5, 12] {
                        let stats = BlockStats {
                            d,
                            g,
                            n,
                            islands: vec![],
                        };
                        let left = if d >= 1 {
                            IncrementKind::Pause
                        } else {
                            IncrementKind::Flight
                        };
                        let right = if g >= 1 {
                            IncrementKind::Pause
                        } else {
                            IncrementKind::Flight
                        };
                        let brute =
                            brute_force_gap_log_likelihood((left, right), &stats, &th, 12).unwrap();
                        let closed = gap_correction(&stats, &th).unwrap();
                        assert!(
                            (brute - closed).abs() < 1e-10,
                            "d={d} g={g} n={n} t1={t1} t2={t2}: {brute} vs {closed}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn gap_correction_matches_brute_force_with_islands() {
        // The enumeration pins island steps to pauses; the closed form must
        // thread the chain through them with identical mass.
        let grid = [(0.1, 0.55), (0.4, 0.2), (0.7, 0.8)];
        let boundaries = [(0_u64, 0_u64), (1, 0), (0, 2), (2, 1)];
        let layouts: [(u64, &[PauseRun]); 6] = [
            (4, &[PauseRun { offset: 2, len: 1 }]),
            (6, &[PauseRun { offset: 2, len: 2 }]),
            (7, &[PauseRun { offset: 3, len: 3 }]),
            (
                8,
                &[
                    PauseRun { offset: 2, len: 1 },
                    PauseRun { offset: 5, len: 1 },
                ],
            ),
            (
                10,
                &[
                    PauseRun { offset: 2, len: 2 },
                    PauseRun { offset: 6, len: 3 },
                ],
            ),
            (
                12,
                &[
                    PauseRun { offset: 2, len: 1 },
                    PauseRun { offset: 5, len: 2 },
                    PauseRun { offset: 9, len: 2 },
                ],
            ),
        ];
        for &(t1, t2) in &grid {
            let th = Theta::new(t1, t2, 0.5, 1.0).unwrap();
            for &(d, g) in &boundaries {
                for (n, islands) in &layouts {
                    let stats = BlockStats {
                        d,
                        g,
                        n: *n,
                        islands: islands.to_vec(),
                    };
                    let left = if d >= 1 {
                        IncrementKind::Pause
                    } else {
                        IncrementKind::Flight
                    };
                    let right = if g >= 1 {
                        IncrementKind::Pause
                    } else {
                        IncrementKind::Flight
                    };
                    let brute =
                        brute_force_gap_log_likelihood((left, right), &stats, &th, 12).unwrap();
                    let closed = gap_correction(&stats, &th).unwrap();
                    assert!(
                        (brute - closed).abs() < 1e-10,
                        "d={d} g={g} n={n} islands={islands:?}: {brute} vs {closed}"
                    );
                }
            }
        }
    }

    #[test]
    fn malformed_islands_are_rejected() {
        let th = theta();
        let cases = [
            // Starts on the boundary's resolved step.
            vec![PauseRun { offset: 0, len: 1 }],
            // Reaches past the far resolved step.
            vec![PauseRun { offset: 3, len: 2 }],
            // Zero-length run.
            vec![PauseRun { offset: 2, len: 0 }],
            // Out of order / overlapping.
            vec![
                PauseRun { offset: 2, len: 2 },
                PauseRun { offset: 3, len: 1 },
            ],
        ];
        for islands in cases {
            let stats = BlockStats {
                d: 0,
                g: 0,
                n: 4,
                islands,
            };
            assert!(
                matches!(gap_correction(&stats, &th), Err(Error::Domain(_))),
                "{:?}",
                stats.islands
            );
            assert!(matches!(
                brute_force_gap_log_likelihood(
                    (IncrementKind::Flight, IncrementKind::Flight),
                    &stats,
                    &th,
                    12
                ),
                Err(Error::Domain(_))
            ));
        }
    }

    /// Probability of a full step-kind chain whose first step is a flight:
    /// the product of one-step transition probabilities.
    fn chain_mass(kinds: &[usize], q: &[[f64; 2]; 2]) -> f64 {
        kinds.windows(2).map(|w| q[w[0]][w[1]]).product()
    }

    /// Enumerate every step-kind chain of a short horizon, mask it with a
    /// fixed observation pattern, and check that the chain-parameter part
    /// of the adjusted observed-data likelihood equals the exact
    /// conditional probability of the evidence it prices: the kinds of
    /// every known step after the first block's first flight-step up to the
    /// last block's last flight-step, given a flight at the former. This
    /// pins the whole gap machinery — boundary runs, bridges, and
    /// stationary islands — against raw chain mass at once.
    fn exhaustive_pattern_check(z: &[u8], theta: &Theta) {
        use std::collections::HashMap;

        let t_max = z.len();
        let n_steps = t_max - 1;
        let q = two_state_transition(theta.theta1(), theta.theta2());
        let n_chains = 1_usize << (n_steps - 1);
        let known: Vec<bool> = (0..n_steps).map(|s| z[s] == 1 && z[s + 1] == 1).collect();

        // Positions realizing a kind chain: flights displace by a unique
        // nonzero vector, pauses hold position.
        let positions_for = |kinds: &[usize]| -> Vec<Option<[f64; 2]>> {
            let mut pos = vec![[0.0_f64, 0.0]; t_max];
            for s in 0..n_steps {
                pos[s + 1] = if kinds[s] == FLIGHT {
                    [pos[s][0] + 1.0 + s as f64, pos[s][1] + 0.5]
                } else {
                    pos[s]
                };
            }
            pos.iter()
                .zip(z)
                .map(|(&p, &zi)| if zi == 1 { Some(p) } else { None })
                .collect()
        };

        struct Group {
            ll_kind: f64,
            anchor: usize,
            required: Vec<Option<usize>>,
            has_island: bool,
        }

        let mut groups: HashMap<Vec<Option<usize>>, Group> = HashMap::new();
        let mut kinds = vec![FLIGHT; n_steps];
        for c in 0..n_chains {
            for b in 0..n_steps - 1 {
                kinds[b + 1] = if (c >> b) & 1 == 1 { PAUSE } else { FLIGHT };
            }
            let obs = ObservedTrajectory::new(positions_for(&kinds));
            let res = extract_increments(&obs, 0.0);
            if res.blocks.is_empty() {
                // No flight resolved anywhere: the likelihood is undefined
                // for such data and nothing is being priced.
                continue;
            }
            let key: Vec<Option<usize>> =
                (0..n_steps).map(|s| known[s].then_some(kinds[s])).collect();
            if groups.contains_key(&key) {
                continue;
            }
            let anchor = (res.blocks[0][0].start_time - 1) as usize;
            let window_end = (res.blocks.last().unwrap().last().unwrap().start_time - 1) as usize;
            let mut ll = 0.0;
            for block in &res.blocks {
                let stats = block_sufficient_stats(block).unwrap();
                ll += block_kind_log_likelihood(&stats, theta);
            }
            let mut has_island = false;
            for gs in &res.block_stats {
                has_island |= !gs.islands.is_empty();
                ll += gap_correction(gs, theta).unwrap();
            }
            let required = (0..n_steps)
                .map(|s| (s > anchor && s <= window_end && known[s]).then_some(kinds[s]))
                .collect();
            groups.insert(
                key,
                Group {
                    ll_kind: ll,
                    anchor,
                    required,
                    has_island,
                },
            );
        }
        assert!(
            groups.values().any(|g| g.has_island),
            "pattern {z:?} never produced an in-gap island"
        );

        // Exact mass of each group's conditioning event by direct summation
        // over all chains.
        let mut total_mass = 0.0;
        let mut masses = vec![0.0_f64; n_chains];
        let mut all_kinds = vec![vec![FLIGHT; n_steps]; n_chains];
        for c in 0..n_chains {
            for b in 0..n_steps - 1 {
                all_kinds[c][b + 1] = if (c >> b) & 1 == 1 { PAUSE } else { FLIGHT };
            }
            masses[c] = chain_mass(&all_kinds[c], &q);
            total_mass += masses[c];
        }
        assert!(
            (total_mass - 1.0).abs() < 1e-12,
            "chain masses must sum to 1"
        );

        for group in groups.values() {
            let mut event_mass = 0.0;
            let mut anchor_mass = 0.0;
            for c in 0..n_chains {
                if all_kinds[c][group.anchor] != FLIGHT {
                    continue;
                }
                anchor_mass += masses[c];
                let consistent = group
                    .required
                    .iter()
                    .enumerate()
                    .all(|(s, r)| r.is_none_or(|v| all_kinds[c][s] == v));
                if consistent {
                    event_mass += masses[c];
                }
            }
            let expected = event_mass / anchor_mass;
            let got = group.ll_kind.exp();
            assert!(
                ((got - expected) / expected).abs() < 1e-12,
                "pattern {z:?}: kind-likelihood {got} vs enumerated {expected}"
            );
        }
    }

    #[test]
    fn adjusted_kind_likelihood_matches_exhaustive_chain_mass() {
        let thetas = [
            Theta::new(0.3, 0.25, 0.5, 1.0).unwrap(),
            Theta::new(0.15, 0.6, 0.5, 1.0).unwrap(),
        ];
        // Patterns engineered so that, across chains, the middle windows
        // realize plain gaps, one- and two-step islands, two islands in a
        // single gap, boundary d/g runs, and leading/trailing windows
        // outside any gap.
        let patterns: [&[u8]; 4] = [
            &[1, 1, 1, 1, 0, 1, 1, 0, 1, 1, 1, 1],
            &[1, 1, 1, 0, 1, 1, 1, 0, 0, 1, 1, 1],
            &[1, 1, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 1],
            &[0, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 0],
        ];
        for theta in &thetas {
            for z in &patterns {
                exhaustive_pattern_check(z, theta);
            }
        }
    }

    #[test]
    fn fit_recovers_closed_form_chain_estimates() {
        // The theta1/theta2 parts of the naive likelihood separate from the
        // Gaussian parts, so their maximizers have closed forms:
        // theta1 = P / (P + FF), theta2 = P / S.
        let th = Theta::new(0.3, 0.4, 0.3, 1.0).unwrap();
        let motion = simulate_motion(&th, 600, &InitialIncrementSpec::default(), 21);
        let res = full_extraction(&motion);
        let stats = block_sufficient_stats(&res.blocks[0]).unwrap();
        let p = stats.pause_count as f64;
        let ff = stats.flight_flight_count as f64;
        let s = stats.pause_duration_sum as f64;
        let init = Theta::new(0.5, 0.5, 0.0, 2.0).unwrap();
        let fitres = fit(&res, FitMode::NaiveMar, &init, &FitBounds::default()).unwrap();
        assert!(fitres.converged);
        assert!(
            (fitres.theta_hat.theta1() - p / (p + ff)).abs() < 1e-6,
            "theta1_hat = {}, closed form = {}",
            fitres.theta_hat.theta1(),
            p / (p + ff)
        );
        assert!(
            (fitres.theta_hat.theta2() - p / s).abs() < 1e-6,
            "theta2_hat = {}, closed form = {}",
            fitres.theta_hat.theta2(),
            p / s
        );
    }

    #[test]
    fn fit_requires_valid_start() {
        let motion = simulate_motion(&theta(), 200, &InitialIncrementSpec::default(), 2);
        let res = full_extraction(&motion);
        let bounds = FitBounds {
            lower: [0.2, 1e-9, -1.0 + 1e-9, 1e-9],
            upper: [0.8, 1.0 - 1e-9, 1.0 - 1e-9, f64::INFINITY],
        };
        let outside = Theta::new(0.1, 0.5, 0.0, 1.0).unwrap();
        assert!(fit(&res, FitMode::NaiveMar, &outside, &bounds).is_err());
        assert!(matches!(
            fit(
                &ExtractionResult::empty(),
                FitMode::NaiveMar,
                &theta(),
                &FitBounds::default()
            ),
            Err(Error::EmptyExtraction)
        ));
    }

    #[test]
    fn moment_guess_tracks_the_generating_parameters() {
        let theta = Theta::new(0.3, 0.4, 0.8, 2.0).unwrap();
        let motion = simulate_motion(&theta, 4000, &InitialIncrementSpec::default(), 31);
        let res = full_extraction(&motion);
        let guess = moment_initial_guess(&res);
        assert!((guess.theta1() - 0.3).abs() < 0.1, "{guess:?}");
        assert!((guess.theta2() - 0.4).abs() < 0.1, "{guess:?}");
        assert!(guess.theta3() > 0.5, "{guess:?}");
        assert!(guess.theta4() > 0.5 && guess.theta4() < 8.0, "{guess:?}");

        // Degenerate extraction still yields a valid interior start.
        let empty = moment_initial_guess(&ExtractionResult::empty());
        assert_eq!(empty.as_array(), [0.5, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn fit_result_serializes_with_flat_theta() {
        let fitres = FitResult {
            theta_hat: Theta::new(0.1, 0.2, 0.3, 1.5).unwrap(),
            log_lik: -12.5,
            mode: FitMode::MnarAdjusted,
            converged: true,
            iterations: 321,
        };
        let json = serde_json::to_string(&fitres).unwrap();
        assert!(json.contains("\"theta_hat\":[0.1,0.2,0.3,1.5]"), "{json}");
        assert!(json.contains("\"loglik\":-12.5"), "{json}");
        assert!(json.contains("\"mode\":\"mnar_adjusted\""), "{json}");
        let back: FitResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fitres);
    }
}
