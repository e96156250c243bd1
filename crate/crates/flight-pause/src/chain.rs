//! The two-state flight/pause step chain and its n-step closed form.
//!
//! Classify every time-step transition `t -> t+1` of a motion as `f` when a
//! flight covers it and `p` when a pause does. Because flights last one
//! step, pauses of duration `d` occupy `d` consecutive `p` steps, a flight
//! is followed by a pause-step with probability `theta1`, and a pause ends
//! at each step with probability `theta2` (memorylessness of the geometric
//! duration), this step sequence is a first-order Markov chain with
//! transition matrix
//!
//! ```text
//!         f            p
//!   f [ 1 - theta1,  theta1     ]
//!   p [ theta2,      1 - theta2 ]
//! ```
//!
//! The n-step transition matrix has the closed form implemented by
//! [`two_state_nstep`]; it is what the gap-adjusted likelihood sums over
//! unobserved stretches, so its agreement with brute-force matrix powers is
//! pinned by tests at tight tolerance.

use crate::model::IncrementKind;

/// Matrix row/column index of the flight state.
pub const FLIGHT: usize = 0;
/// Matrix row/column index of the pause state.
pub const PAUSE: usize = 1;

/// Map an increment kind to its chain-state index.
pub fn kind_index(kind: IncrementKind) -> usize {
    match kind {
        IncrementKind::Flight => FLIGHT,
        IncrementKind::Pause => PAUSE,
    }
}

/// One-step transition matrix of the step chain.
pub fn two_state_transition(theta1: f64, theta2: f64) -> [[f64; 2]; 2] {
    [[1.0 - theta1, theta1], [theta2, 1.0 - theta2]]
}

/// n-step transition matrix in closed form:
///
/// ```text
/// Q^n = 1/(theta1+theta2) * ( [theta2 theta1; theta2 theta1]
///        + (1-theta1-theta2)^n * [theta1 -theta1; -theta2 theta2] )
/// ```
///
/// Rows sum to one, and every entry is strictly positive for
/// `theta1, theta2` in (0,1) and `n >= 1` (the geometric factor has
/// absolute value < 1), so logs of entries are always finite.
pub fn two_state_nstep(theta1: f64, theta2: f64, n: u64) -> [[f64; 2]; 2] {
    debug_assert!(theta1 > 0.0 && theta1 < 1.0);
    debug_assert!(theta2 > 0.0 && theta2 < 1.0);
    debug_assert!(n >= 1);
    let s = theta1 + theta2;
    let lambda = (1.0 - s).powi(n as i32);
    [
        [
            (theta2 + lambda * theta1) / s,
            (theta1 - lambda * theta1) / s,
        ],
        [
            (theta2 - lambda * theta2) / s,
            (theta1 + lambda * theta2) / s,
        ],
    ]
}

/// Stationary distribution of the step chain: fraction of time steps spent
/// in flight vs. pause in the long run, `(theta2, theta1) / (theta1+theta2)`.
pub fn stationary_step_distribution(theta1: f64, theta2: f64) -> [f64; 2] {
    let s = theta1 + theta2;
    [theta2 / s, theta1 / s]
}
