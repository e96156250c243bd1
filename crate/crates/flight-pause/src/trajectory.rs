//! Motions as time-indexed trajectories, and the reconstruction of observed
//! increments from partially observed location sequences.
//!
//! A motion induces a unique trajectory: each flight contributes its start
//! position for one time index, each pause contributes its (constant)
//! position once per time unit of its duration. Going the other way is the
//! interesting direction: given positions observed at some subset of times,
//! which increments are *observed* — origin, duration, displacement and type
//! all pinned down by the data?
//!
//! The reconstruction works on *steps*. Step `t` is the transition from
//! time `t` to `t+1`; it is known exactly when both locations are observed,
//! and it is a pause-step when they coincide (within `tol`) and a
//! flight-step otherwise. Within a maximal run of known steps:
//!
//! * a flight-step `s` yields an observed flight at time `s` (its end
//!   position is the next location, which the run guarantees is observed);
//! * an interior maximal pause-run `[p0, p1]` flanked by flight-steps
//!   yields an observed pause starting at `p0` with duration `p1 - p0 + 1` —
//!   the flanking flight-steps are what certify both the pause's start and
//!   its end, so an observed pause of duration `d` requires `d + 3`
//!   consecutive observed locations;
//! * leading and trailing pause-steps of the run (not flanked on both
//!   sides) certify *partial* pause evidence only: they cannot be emitted
//!   as increments, but their counts (`g` leading, `d` trailing) are
//!   exactly the boundary statistics the gap-adjusted likelihood needs.
//!
//! Runs containing no flight-step (a stationary "island") pin no increment
//! at all and join no block, but they are still hard evidence: the hidden
//! step chain sat in the pause state at every step of the run. Islands
//! lying between two blocks are therefore recorded on the enclosing gap's
//! statistics as [`PauseRun`]s, and the gap-adjusted likelihood weights
//! only hidden step sequences that honor them. Islands before the first
//! block or after the last have no gap to constrain and carry no charge.
//! Either way an island's locations are reported in `leftover_locations`
//! along with every other observed location that ends up inside no
//! extracted increment's time span.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{Increment, IncrementKind, Motion};

/// A complete sequence of positions indexed by consecutive times `1..=T`
/// (`positions[i]` is the position at time `i + 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Position at each time index.
    pub positions: Vec<[f64; 2]>,
}

impl Trajectory {
    /// Wrap a position sequence.
    pub fn new(positions: Vec<[f64; 2]>) -> Self {
        Trajectory { positions }
    }

    /// Number of time indices.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// True when the trajectory has no positions.
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Per-time observability bits; `z[i]` says whether the location at time
/// `i + 1` is observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservabilityVector {
    /// One bit per time index.
    pub z: Vec<bool>,
}

impl ObservabilityVector {
    /// Wrap a bit sequence.
    pub fn new(z: Vec<bool>) -> Self {
        ObservabilityVector { z }
    }

    /// All-ones vector of length `t_max`.
    pub fn all_observed(t_max: usize) -> Self {
        ObservabilityVector {
            z: vec![true; t_max],
        }
    }

    /// Number of time indices.
    pub fn len(&self) -> usize {
        self.z.len()
    }

    /// True when the vector is empty.
    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Count of observed time indices.
    pub fn observed_count(&self) -> usize {
        self.z.iter().filter(|&&b| b).count()
    }
}

/// A trajectory with missing locations: `positions[i]` is `Some` exactly
/// when the location at time `i + 1` is observed, so the observability
/// vector is carried implicitly and cannot disagree with the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedTrajectory {
    /// Position at each time, present iff observed.
    pub positions: Vec<Option<[f64; 2]>>,
}

impl ObservedTrajectory {
    /// Wrap a partially observed position sequence.
    pub fn new(positions: Vec<Option<[f64; 2]>>) -> Self {
        ObservedTrajectory { positions }
    }

    /// Number of time indices (observed or not).
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// True when there are no time indices.
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// The implied observability vector.
    pub fn z_vector(&self) -> ObservabilityVector {
        ObservabilityVector::new(self.positions.iter().map(|p| p.is_some()).collect())
    }
}

/// A maximal run of known pause-steps containing no flight-step — an
/// observed "stationary island" inside a gap. The run pins no increment
/// (the pause it witnesses has a censored start and end), yet it certifies
/// that the hidden step chain was paused throughout, so the gap-adjusted
/// likelihood must weight only hidden step sequences passing through the
/// pause state there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauseRun {
    /// Chain transitions from the gap's last resolved boundary step to the
    /// run's first step. Maximal known runs are separated by at least one
    /// unknown step, so extraction always produces `offset >= 2`.
    pub offset: u64,
    /// Number of consecutive known pause-steps in the run (`>= 1`).
    pub len: u64,
}

/// Boundary statistics for the gap following an observed block:
/// `d` trailing pause-steps observed after the block's last flight, `g`
/// leading pause-steps observed before the next block's first flight,
/// `n` — the number of chain transitions from the last resolved step to the
/// first resolved step of the next block — and the stationary runs observed
/// strictly inside the gap. The indicator accessors `delta()`/`gamma()`
/// flag the absence of trailing/leading pause evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStats {
    /// Trailing observed pause-steps after the block.
    pub d: u64,
    /// Leading observed pause-steps before the next block.
    pub g: u64,
    /// Step-chain transition count bridging the two resolved boundary steps.
    pub n: u64,
    /// Stationary runs observed inside the gap, in time order, offsets
    /// measured from the last resolved boundary step. Derived bookkeeping:
    /// reconstructible from the observed trajectory, so it stays out of the
    /// serialized form, which keeps the flat five-field shape.
    pub islands: Vec<PauseRun>,
}

impl BlockStats {
    /// 1 when there is no trailing pause evidence (`d == 0`).
    pub fn delta(&self) -> u8 {
        u8::from(self.d == 0)
    }

    /// 1 when there is no leading pause evidence (`g == 0`).
    pub fn gamma(&self) -> u8 {
        u8::from(self.g == 0)
    }
}

impl Serialize for BlockStats {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        // The delta/gamma indicators are determined by d/g; serialize all
        // five scalar fields so artifacts are self-describing. The island
        // bookkeeping is derived data and stays out of the artifact, which
        // keeps its shape flat and stable.
        let mut s = serializer.serialize_struct("BlockStats", 5)?;
        s.serialize_field("d", &self.d)?;
        s.serialize_field("g", &self.g)?;
        s.serialize_field("delta", &self.delta())?;
        s.serialize_field("gamma", &self.gamma())?;
        s.serialize_field("n", &self.n)?;
        s.end()
    }
}

/// Everything recoverable from a partially observed trajectory: the blocks
/// of observed increments, per-gap boundary statistics, the effective
/// sample size, and the observed locations that pinned no increment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionResult {
    /// Maximal consecutive groups of observed increments, in time order.
    pub blocks: Vec<Vec<Increment>>,
    /// One entry per gap between consecutive blocks (`blocks.len() - 1`).
    pub block_stats: Vec<BlockStats>,
    /// Total number of observed increments across blocks.
    pub effective_sample_size: u64,
    /// Observed time indices lying in no extracted increment's time span.
    pub leftover_locations: Vec<u64>,
}

impl ExtractionResult {
    /// An extraction with nothing in it (fully missing input).
    pub fn empty() -> Self {
        ExtractionResult {
            blocks: Vec::new(),
            block_stats: Vec::new(),
            effective_sample_size: 0,
            leftover_locations: Vec::new(),
        }
    }
}

/// Total count of increments across blocks.
pub fn effective_sample_size(res: &ExtractionResult) -> u64 {
    res.blocks.iter().map(|b| b.len() as u64).sum()
}

/// The time indices occupied by an increment: a single time for flights,
/// `duration` consecutive times for pauses.
pub fn increment_time_span(inc: &Increment) -> std::ops::RangeInclusive<u64> {
    inc.start_time..=inc.start_time + inc.duration - 1
}

/// Expand a motion into its trajectory: one position per flight, `duration`
/// copies per pause. The result length equals the motion's total duration.
pub fn motion_to_trajectory(motion: &Motion) -> Trajectory {
    let mut positions = Vec::with_capacity(motion.total_duration() as usize);
    for inc in &motion.increments {
        for _ in 0..inc.duration {
            positions.push(inc.start_pos);
        }
    }
    Trajectory::new(positions)
}

/// Internal: the state of step `t` (the transition from time `t` to `t+1`),
/// when both endpoints are observed.
fn step_states(obs: &ObservedTrajectory, tol: f64) -> Vec<Option<IncrementKind>> {
    let t_len = obs.positions.len();
    let mut steps = Vec::with_capacity(t_len.saturating_sub(1));
    for s in 0..t_len.saturating_sub(1) {
        let state = match (obs.positions[s], obs.positions[s + 1]) {
            (Some(a), Some(b)) => {
                let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                Some(if dist <= tol {
                    IncrementKind::Pause
                } else {
                    IncrementKind::Flight
                })
            }
            _ => None,
        };
        steps.push(state);
    }
    steps
}

/// Reconstruct observed increments, blocks, gap statistics, the effective
/// sample size, and leftover locations from a partially observed trajectory.
///
/// `tol` is the position-equality tolerance (Euclidean); 0 means exact
/// equality, which is correct for simulated data. The result's blocks
/// always start and end with flights: a pause is only emitted when flanked
/// by observed flight-steps on both sides, which is precisely the
/// observability requirement of `d + 3` consecutive observed locations.
pub fn extract_increments(obs: &ObservedTrajectory, tol: f64) -> ExtractionResult {
    let steps = step_states(obs, tol);
    if steps.is_empty() {
        let leftovers = observed_times(obs);
        let mut res = ExtractionResult::empty();
        res.leftover_locations = leftovers;
        return res;
    }

    // Maximal runs of known steps, as half-open index ranges into `steps`
    // (0-based; step index s is the transition from time s+1 to s+2).
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (s, st) in steps.iter().enumerate() {
        match (st.is_some(), start) {
            (true, None) => start = Some(s),
            (false, Some(r0)) => {
                runs.push((r0, s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(r0) = start {
        runs.push((r0, steps.len()));
    }

    // Per declared block: (increments, leading g, trailing d, first_f, last_f)
    // with step indices kept 0-based until emission.
    struct DeclaredBlock {
        increments: Vec<Increment>,
        g: u64,
        d: u64,
        first_f: usize,
        last_f: usize,
    }

    let pos = |t: usize| obs.positions[t].expect("observed within a known step");
    let mut declared: Vec<DeclaredBlock> = Vec::new();
    // Stationary islands seen since the last declared block, as
    // (first step, length) pairs. Islands preceding every block never
    // enter: with no block to their left there is no gap to constrain.
    let mut pending_islands: Vec<(usize, usize)> = Vec::new();
    // One island list per gap, parallel to `declared.windows(2)`.
    let mut gap_islands: Vec<Vec<PauseRun>> = Vec::new();

    for &(r0, r1) in &runs {
        let is_flight = |s: usize| matches!(steps[s], Some(IncrementKind::Flight));
        let first_f = match (r0..r1).find(|&s| is_flight(s)) {
            Some(s) => s,
            // A stationary island: no flight-step, so no increment. Record
            // it for the enclosing gap's statistics when a block precedes
            // it; islands trailing the final block are dropped after the
            // loop along with anything left in `pending_islands`.
            None => {
                if !declared.is_empty() {
                    pending_islands.push((r0, r1 - r0));
                }
                continue;
            }
        };
        let last_f = (r0..r1)
            .rev()
            .find(|&s| is_flight(s))
            .expect("first_f exists");

        if let Some(left) = declared.last() {
            let anchor = left.last_f as u64 + left.d;
            gap_islands.push(
                pending_islands
                    .drain(..)
                    .map(|(first, len)| PauseRun {
                        offset: first as u64 - anchor,
                        len: len as u64,
                    })
                    .collect(),
            );
        }

        let mut increments = Vec::new();
        let mut s = first_f;
        while s <= last_f {
            match steps[s] {
                Some(IncrementKind::Flight) => {
                    let a = pos(s);
                    let b = pos(s + 1);
                    increments.push(Increment {
                        start_time: s as u64 + 1,
                        start_pos: a,
                        duration: 1,
                        displacement: [b[0] - a[0], b[1] - a[1]],
                        kind: IncrementKind::Flight,
                    });
                    s += 1;
                }
                Some(IncrementKind::Pause) => {
                    // Interior maximal pause-run [p0, p1]; flanked by
                    // flight-steps because first_f < p0 and p1 < last_f.
                    let p0 = s;
                    let mut p1 = s;
                    while p1 < last_f && matches!(steps[p1 + 1], Some(IncrementKind::Pause)) {
                        p1 += 1;
                    }
                    let here = pos(p0);
                    let before = pos(p0 - 1);
                    increments.push(Increment {
                        start_time: p0 as u64 + 1,
                        start_pos: here,
                        duration: (p1 - p0 + 1) as u64,
                        // A pause stores the previous flight's displacement,
                        // recovered from the two locations preceding it.
                        displacement: [here[0] - before[0], here[1] - before[1]],
                        kind: IncrementKind::Pause,
                    });
                    s = p1 + 1;
                }
                None => unreachable!("runs contain only known steps"),
            }
        }

        declared.push(DeclaredBlock {
            increments,
            g: (first_f - r0) as u64,
            d: (r1 - 1 - last_f) as u64,
            first_f,
            last_f,
        });
    }

    // Gap statistics between consecutive declared blocks. The last resolved
    // step of block j is last_f + d (its run's final step); the first
    // resolved step of block j+1 is first_f - g (its run's initial step);
    // n is the transition count bridging the two. Each gap also carries the
    // stationary islands recorded strictly inside it.
    let mut block_stats = Vec::with_capacity(declared.len().saturating_sub(1));
    for (pair, islands) in declared.windows(2).zip(gap_islands) {
        let (left, right) = (&pair[0], &pair[1]);
        let t_last_resolved = left.last_f as u64 + left.d;
        let t_first_resolved = right.first_f as u64 - right.g;
        block_stats.push(BlockStats {
            d: left.d,
            g: right.g,
            n: t_first_resolved - t_last_resolved,
            islands,
        });
    }

    // Leftovers: observed times covered by no extracted increment span.
    let mut covered = vec![false; obs.positions.len()];
    for block in &declared {
        for inc in &block.increments {
            for t in increment_time_span(inc) {
                covered[(t - 1) as usize] = true;
            }
        }
    }
    let leftover_locations = obs
        .positions
        .iter()
        .enumerate()
        .filter(|(i, p)| p.is_some() && !covered[*i])
        .map(|(i, _)| i as u64 + 1)
        .collect();

    let blocks: Vec<Vec<Increment>> = declared.into_iter().map(|b| b.increments).collect();
    let effective_sample_size = blocks.iter().map(|b| b.len() as u64).sum();
    ExtractionResult {
        blocks,
        block_stats,
        effective_sample_size,
        leftover_locations,
    }
}

fn observed_times(obs: &ObservedTrajectory) -> Vec<u64> {
    obs.positions
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_some())
        .map(|(i, _)| i as u64 + 1)
        .collect()
}

/// Check that paired trajectory/observability inputs have equal length.
pub fn check_lengths(traj: &Trajectory, z: &ObservabilityVector) -> Result<()> {
    if traj.len() != z.len() {
        return Err(Error::Mismatch(format!(
            "trajectory has {} positions but the observability vector has {} entries",
            traj.len(),
            z.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_motion, InitialIncrementSpec, Theta};

    fn fully_observed(traj: &Trajectory) -> ObservedTrajectory {
        ObservedTrajectory::new(traj.positions.iter().map(|&p| Some(p)).collect())
    }

    /// Flight l1→l2, flight l2→l3, pause at l3 (duration 2), then a final
    /// flight starting at l3. Trajectory: (l1, l2, l3, l3, l3) — the final
    /// flight contributes its start position, which pause continuity makes
    /// equal to l3.
    fn toy_motion() -> Motion {
        let l1 = [0.0, 0.0];
        let l2 = [1.0, 0.0];
        let l3 = [1.0, 2.0];
        let d1 = [1.0, 0.0];
        let d2 = [0.0, 2.0];
        let d4 = [2.0, 0.0];
        Motion::new(vec![
            Increment {
                start_time: 1,
                start_pos: l1,
                duration: 1,
                displacement: d1,
                kind: IncrementKind::Flight,
            },
            Increment {
                start_time: 2,
                start_pos: l2,
                duration: 1,
                displacement: d2,
                kind: IncrementKind::Flight,
            },
            Increment {
                start_time: 3,
                start_pos: l3,
                duration: 2,
                displacement: d2,
                kind: IncrementKind::Pause,
            },
            Increment {
                start_time: 5,
                start_pos: l3,
                duration: 1,
                displacement: d4,
                kind: IncrementKind::Flight,
            },
        ])
    }

    #[test]
    fn toy_trajectory_repeats_the_pause() {
        let traj = motion_to_trajectory(&toy_motion());
        assert_eq!(
            traj.positions,
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 2.0], [1.0, 2.0], [1.0, 2.0],]
        );
        assert_eq!(traj.len() as u64, toy_motion().total_duration());
    }

    #[test]
    fn all_flight_motion_gives_one_position_each() {
        let theta = Theta::new(1e-9, 0.5, 0.0, 1.0).unwrap();
        let motion = simulate_motion(&theta, 50, &InitialIncrementSpec::default(), 1);
        assert!(motion.increments.iter().all(|m| m.kind.is_flight()));
        let traj = motion_to_trajectory(&motion);
        assert_eq!(traj.len(), motion.len());
    }

    #[test]
    fn time_span_examples() {
        let flight = Increment {
            start_time: 7,
            start_pos: [0.0, 0.0],
            duration: 1,
            displacement: [1.0, 0.0],
            kind: IncrementKind::Flight,
        };
        assert_eq!(increment_time_span(&flight).collect::<Vec<_>>(), vec![7]);
        let pause = Increment {
            start_time: 3,
            start_pos: [0.0, 0.0],
            duration: 2,
            displacement: [1.0, 0.0],
            kind: IncrementKind::Pause,
        };
        assert_eq!(increment_time_span(&pause).collect::<Vec<_>>(), vec![3, 4]);
        assert_eq!(increment_time_span(&pause).count() as u64, pause.duration);
    }

    #[test]
    fn toy_extraction_loses_the_trailing_pause_and_flight() {
        // The pause's end is only certified by a displacing step after it;
        // at the record boundary no such step exists, so the pause's
        // duration is censored and it cannot be emitted. Only the two
        // leading flights are observable.
        let obs = fully_observed(&motion_to_trajectory(&toy_motion()));
        let res = extract_increments(&obs, 0.0);
        assert_eq!(res.blocks.len(), 1);
        let block = &res.blocks[0];
        assert_eq!(block.len(), 2);
        assert_eq!(block[0], toy_motion().increments[0]);
        assert_eq!(block[1], toy_motion().increments[1]);
        assert_eq!(res.effective_sample_size, 2);
        assert_eq!(res.leftover_locations, vec![3, 4, 5]);
        assert!(res.block_stats.is_empty());
    }

    #[test]
    fn interior_pause_is_recovered_with_its_duration() {
        // Extend the toy with a displacing flight after the pause and one
        // more location to certify it: now the pause is observable. This is
        // the d + 3 = 5 consecutive-locations requirement in action.
        let mut motion = toy_motion();
        motion.increments[3].displacement = [2.0, 0.0];
        motion.increments.push(Increment {
            start_time: 6,
            start_pos: [3.0, 2.0],
            duration: 1,
            displacement: [0.0, -1.0],
            kind: IncrementKind::Flight,
        });
        let obs = fully_observed(&motion_to_trajectory(&motion));
        let res = extract_increments(&obs, 0.0);
        assert_eq!(res.blocks.len(), 1);
        let block = &res.blocks[0];
        assert_eq!(block.len(), 4);
        assert_eq!(block[2].kind, IncrementKind::Pause);
        assert_eq!(block[2].start_time, 3);
        assert_eq!(block[2].duration, 2);
        // Pause displacement = the previous flight's displacement.
        assert_eq!(block[2].displacement, [0.0, 2.0]);
        assert_eq!(res.effective_sample_size, 4);
        // The final location starts the unobservable last increment.
        assert_eq!(res.leftover_locations, vec![6]);
    }

    #[test]
    fn alternating_observation_extracts_nothing() {
        let theta = Theta::new(0.1, 0.1, 0.95, 1.0).unwrap();
        let motion = simulate_motion(&theta, 200, &InitialIncrementSpec::default(), 9);
        let traj = motion_to_trajectory(&motion);
        let obs = ObservedTrajectory::new(
            traj.positions
                .iter()
                .enumerate()
                .map(|(i, &p)| if i % 2 == 0 { Some(p) } else { None })
                .collect(),
        );
        let res = extract_increments(&obs, 0.0);
        assert_eq!(res.effective_sample_size, 0);
        assert!(res.blocks.is_empty());
        // Every observed location is leftover.
        assert_eq!(res.leftover_locations.len(), 100);
    }

    #[test]
    fn distinct_positions_give_flights_and_one_leftover() {
        let positions: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 0.0]).collect();
        let obs = fully_observed(&Trajectory::new(positions));
        let res = extract_increments(&obs, 0.0);
        assert_eq!(res.blocks.len(), 1);
        assert_eq!(res.blocks[0].len(), 9);
        assert!(res.blocks[0].iter().all(|m| m.kind.is_flight()));
        assert_eq!(res.effective_sample_size, 9);
        assert_eq!(res.leftover_locations, vec![10]);
    }

    #[test]
    fn stationary_island_yields_leftovers_only() {
        // Observed: a constant run with both neighbors missing. The island
        // pins no flight-step, and with no blocks around it there is no gap
        // whose statistics could record it.
        let mut positions: Vec<Option<[f64; 2]>> = vec![None; 10];
        positions[3] = Some([1.0, 1.0]);
        positions[4] = Some([1.0, 1.0]);
        positions[5] = Some([1.0, 1.0]);
        let res = extract_increments(&ObservedTrajectory::new(positions), 0.0);
        assert!(res.blocks.is_empty());
        assert_eq!(res.effective_sample_size, 0);
        assert_eq!(res.leftover_locations, vec![4, 5, 6]);
    }

    #[test]
    fn gap_islands_are_recorded_with_offsets() {
        // Layout (times 1..=14):
        //   t 1..3    a b c   -> steps 0, 1 flights          (block 1)
        //   t 4       missing
        //   t 5..6    h h     -> step 4 pause                (island, len 1)
        //   t 7       missing
        //   t 8..10   d e f   -> steps 7, 8 flights          (block 2)
        //   t 11      missing
        //   t 12..14  k k k   -> steps 11, 12 pauses         (trailing island)
        // Gap anchor = block 1's last flight-step 1 (d = 0); block 2 first
        // resolves at step 7 (g = 0): n = 6, island offset 4 - 1 = 3. The
        // trailing island follows no gap and is dropped.
        let p = |x: f64| Some([x, 0.0]);
        let positions = vec![
            p(0.0),
            p(1.0),
            p(2.0),
            None,
            p(5.0),
            p(5.0),
            None,
            p(8.0),
            p(9.0),
            p(10.0),
            None,
            p(12.0),
            p(12.0),
            p(12.0),
        ];
        let res = extract_increments(&ObservedTrajectory::new(positions), 0.0);
        assert_eq!(res.blocks.len(), 2);
        assert_eq!(res.effective_sample_size, 4);
        assert_eq!(res.block_stats.len(), 1);
        let stats = &res.block_stats[0];
        assert_eq!((stats.d, stats.g, stats.n), (0, 0, 6));
        assert_eq!(stats.islands, vec![PauseRun { offset: 3, len: 1 }]);
        assert_eq!(res.leftover_locations, vec![3, 5, 6, 10, 12, 13, 14]);
    }

    #[test]
    fn gap_island_coexists_with_boundary_pause_runs() {
        // Layout (times 1..=13):
        //   t 1..4    a b c c -> steps 0, 1 flights, step 2 pause (d-run)
        //   t 5       missing
        //   t 6..8    m m m   -> steps 5, 6 pauses            (island, len 2)
        //   t 9       missing
        //   t 10..13  w w x y -> step 9 pause (g-run), steps 10, 11 flights
        // Gap anchor = 1 + d = 2; block 2 first resolves at 10 - g = 9:
        // n = 7, island offset 5 - 2 = 3.
        let p = |x: f64, y: f64| Some([x, y]);
        let positions = vec![
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(2.0, 0.0),
            p(2.0, 0.0),
            None,
            p(6.0, 1.0),
            p(6.0, 1.0),
            p(6.0, 1.0),
            None,
            p(9.0, 2.0),
            p(9.0, 2.0),
            p(10.0, 2.0),
            p(11.0, 2.0),
        ];
        let res = extract_increments(&ObservedTrajectory::new(positions), 0.0);
        assert_eq!(res.blocks.len(), 2);
        assert_eq!(res.blocks[0].len(), 2);
        assert_eq!(res.blocks[1].len(), 2);
        assert_eq!(res.block_stats.len(), 1);
        let stats = &res.block_stats[0];
        assert_eq!((stats.d, stats.g, stats.n), (1, 1, 7));
        assert_eq!(stats.islands, vec![PauseRun { offset: 3, len: 2 }]);
    }

    #[test]
    fn gap_statistics_count_boundary_pause_steps() {
        // Construct positions directly:
        // times 1..6: a, b, c, c, c, d  (flight, flight, pause(2), flight...)
        // then a missing stretch, then times 10..13: e, e, f, g.
        // Left run: steps 1..5 known: f f p p f  -> block [1..5], d = 0.
        // Right run: steps 10..12 known: p f f -> block [11..12], g = 1.
        // Gap: last resolved step 5, first resolved step 10, n = 5.
        let a = [0.0, 0.0];
        let b = [1.0, 0.0];
        let c = [2.0, 0.0];
        let d = [3.0, 0.0];
        let e = [10.0, 0.0];
        let f = [11.0, 0.0];
        let g = [12.0, 0.0];
        let positions = vec![
            Some(a),
            Some(b),
            Some(c),
            Some(c),
            Some(c),
            Some(d),
            None,
            None,
            None,
            Some(e),
            Some(e),
            Some(f),
            Some(g),
        ];
        let res = extract_increments(&ObservedTrajectory::new(positions), 0.0);
        assert_eq!(res.blocks.len(), 2);
        // Left block: flight, flight, pause(duration 2), flight.
        assert_eq!(res.blocks[0].len(), 4);
        assert_eq!(res.blocks[0][2].duration, 2);
        assert_eq!(res.blocks[0][3].start_time, 5);
        // Right block: flight at 11, flight at 12.
        assert_eq!(res.blocks[1].len(), 2);
        assert_eq!(res.blocks[1][0].start_time, 11);
        assert_eq!(res.block_stats.len(), 1);
        let stats = &res.block_stats[0];
        assert_eq!(stats.d, 0);
        assert_eq!(stats.g, 1);
        assert_eq!(stats.delta(), 1);
        assert_eq!(stats.gamma(), 0);
        assert_eq!(stats.n, 5);
        assert!(stats.islands.is_empty());
        // Leftovers: the left run's final location (6, which only closes
        // the last flight's evidence), the leading stationary location of
        // the right run (10), and the final location (13).
        assert_eq!(res.leftover_locations, vec![6, 10, 13]);
    }

    #[test]
    fn adding_observations_never_decreases_ess() {
        let theta = Theta::new(0.2, 0.3, 0.5, 1.0).unwrap();
        let motion = simulate_motion(&theta, 120, &InitialIncrementSpec::default(), 21);
        let traj = motion_to_trajectory(&motion);
        let mut positions: Vec<Option<[f64; 2]>> = traj
            .positions
            .iter()
            .enumerate()
            .map(|(i, &p)| if i % 3 == 0 { None } else { Some(p) })
            .collect();
        let base = extract_increments(&ObservedTrajectory::new(positions.clone()), 0.0)
            .effective_sample_size;
        // Flip each missing location on, one at a time, cumulatively.
        let mut prev = base;
        for i in 0..positions.len() {
            if positions[i].is_none() {
                positions[i] = Some(traj.positions[i]);
                let ess = extract_increments(&ObservedTrajectory::new(positions.clone()), 0.0)
                    .effective_sample_size;
                assert!(ess >= prev, "ESS dropped after observing t = {}", i + 1);
                prev = ess;
            }
        }
    }

    #[test]
    fn tolerance_reclassifies_jittered_pauses() {
        // A pause whose repeated locations carry jitter below tol is still
        // a pause; with tol = 0 the jitter reads as micro-flights.
        let positions = vec![
            Some([0.0, 0.0]),
            Some([1.0, 0.0]),
            Some([1.0 + 1e-9, 0.0]),
            Some([1.0, 1e-9]),
            Some([2.0, 0.0]),
            Some([3.0, 0.0]),
        ];
        let strict = extract_increments(&ObservedTrajectory::new(positions.clone()), 0.0);
        assert!(strict.blocks[0].iter().all(|m| m.kind.is_flight()));
        let loose = extract_increments(&ObservedTrajectory::new(positions), 1e-6);
        assert!(loose.blocks[0].iter().any(|m| m.kind.is_pause()));
        let pause = loose.blocks[0].iter().find(|m| m.kind.is_pause()).unwrap();
        assert_eq!(pause.start_time, 2);
        assert_eq!(pause.duration, 2);
    }

    #[test]
    fn ess_accessor_matches_field() {
        let positions: Vec<[f64; 2]> = (0..30).map(|i| [i as f64, 1.0]).collect();
        let obs = fully_observed(&Trajectory::new(positions));
        let res = extract_increments(&obs, 0.0);
        assert_eq!(effective_sample_size(&res), res.effective_sample_size);
        assert_eq!(effective_sample_size(&ExtractionResult::empty()), 0);
    }

    #[test]
    fn roundtrip_full_observation_recovers_all_but_boundary() {
        let theta = Theta::new(0.1, 0.1, 0.95, 1.0).unwrap();
        let init = InitialIncrementSpec::default();
        for seed in 0..10 {
            let motion = simulate_motion(&theta, 1000, &init, seed);
            let obs = fully_observed(&motion_to_trajectory(&motion));
            let res = extract_increments(&obs, 0.0);
            assert_eq!(res.blocks.len(), 1, "seed {seed}");
            let extracted = &res.blocks[0];

            // Trailing boundary loss: the final increment always, plus the
            // pause before it when the motion ends (pause, flight).
            let k = motion.len();
            let last_two_pause_flight = k >= 2
                && motion.increments[k - 1].kind.is_flight()
                && motion.increments[k - 2].kind.is_pause();
            let expected = if last_two_pause_flight { k - 2 } else { k - 1 };
            assert_eq!(extracted.len(), expected, "seed {seed}");
            for (got, want) in extracted.iter().zip(&motion.increments) {
                // Bit-exact equality on every field (displacements included,
                // thanks to float-consistent simulation).
                assert_eq!(got, want, "seed {seed}");
            }
        }
    }
}
