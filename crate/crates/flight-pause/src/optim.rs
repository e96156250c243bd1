//! Derivative-free minimization: a plain Nelder–Mead simplex.
//!
//! The likelihoods in this crate are smooth but their gradients are tedious
//! to derive and easy to get subtly wrong near the parameter boundaries, so
//! fitting uses a simplex search on an unconstrained reparameterization
//! (see the inference module). Four dimensions and cheap objectives make
//! Nelder–Mead entirely adequate here.
//!
//! Design note: non-finite objective values *during* the search are mapped
//! to +inf so the simplex backs away from them, but a non-finite value at
//! the starting point is an error — it means the caller's initial guess is
//! outside the model's domain and no direction information exists.

use crate::error::{Error, Result};

/// Standard simplex coefficients: reflection, expansion, contraction,
/// shrink.
const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

/// Outcome of a simplex minimization.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    /// Best point found.
    pub x: Vec<f64>,
    /// Objective value at `x`.
    pub f: f64,
    /// Iterations performed.
    pub iterations: u64,
    /// Whether the spread criterion was met before the iteration cap.
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimize `f` starting at `x0`, stopping when the objective spread across
/// the simplex drops below `tol` *and* every vertex lies within `x_tol`
/// (infinity norm) of the best one, or after `max_iter` iterations.
///
/// Design note: the domain criterion matters because an objective can be
/// flat to within `tol` while the simplex still spans a wide region; the
/// likelihood fits in this crate quote parameter estimates to ~1e-6, which
/// the objective spread alone does not guarantee.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    tol: f64,
    x_tol: f64,
    max_iter: u64,
) -> Result<MinimizeResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n >= 1, "cannot minimize over zero dimensions");
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::BadStart(format!(
            "objective is {f0} at the starting point {x0:?}"
        )));
    }

    // Initial simplex: x0 plus an absolute step along each axis. The
    // callers work in an unconstrained space with O(1) scale, so a fixed
    // step is appropriate.
    let step = 0.25;
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = sanitize(f(&x));
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("sanitized values compare"));
        let spread = simplex[n].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        if spread.is_finite() && spread < tol && diameter < x_tol {
            converged = true;
            break;
        }

        // Centroid of all points but the worst.
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }

        let worst = simplex[n].clone();
        let combine = |a: f64, b: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(&c, &w)| a * c + b * w)
                .collect()
        };

        let xr = combine(1.0 + ALPHA, -ALPHA);
        let fr = sanitize(f(&xr));
        if fr < simplex[0].1 {
            // Try to expand past the reflected point.
            let xe = combine(1.0 + ALPHA * GAMMA, -ALPHA * GAMMA);
            let fe = sanitize(f(&xe));
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                // Outside contraction, between centroid and reflection.
                let xc = combine(1.0 + ALPHA * RHO, -ALPHA * RHO);
                let fc = sanitize(f(&xc));
                (xc, fc)
            } else {
                // Inside contraction, between centroid and worst.
                let xc = combine(1.0 - RHO, RHO);
                let fc = sanitize(f(&xc));
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                // Shrink everything toward the best vertex.
                let best = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&best) {
                        *xi = bi + SIGMA * (*xi - bi);
                    }
                    *fx = sanitize(f(x));
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("sanitized values compare"));
    let (x, fx) = simplex.swap_remove(0);
    Ok(MinimizeResult {
        x,
        f: fx,
        iterations,
        converged,
    })
}
