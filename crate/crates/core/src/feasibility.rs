//! Existence monitoring: the Omega determinant trace, the feasibility
//! predicate, and critical attenuation-level search.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{GameModel, TimeGrid};
use crate::riccati::{solve_x, solve_y, RiccatiSolution};

/// Determinant of Omega(t) = I - gamma^-2 Y(t) X(t) over the shared grid.
#[derive(Clone, Debug)]
pub struct OmegaTrace {
    pub times: Vec<f64>,
    pub det_values: Vec<f64>,
    pub min_det: f64,
    /// Times of interior local minima (nodes strictly below both neighbors).
    pub argmin_times: Vec<f64>,
}

impl OmegaTrace {
    pub fn from_solutions(x: &RiccatiSolution, y: &RiccatiSolution, gamma: f64) -> Self {
        assert_eq!(x.grid, y.grid, "X and Y must share a grid");
        let n = x.values[0].nrows();
        let g2 = gamma * gamma;
        let times: Vec<f64> = x.grid.iter().collect();
        let det_values: Vec<f64> = x
            .values
            .iter()
            .zip(&y.values)
            .map(|(xm, ym)| (DMatrix::identity(n, n) - ym * xm / g2).determinant())
            .collect();
        let min_det = det_values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut argmin_times = Vec::new();
        for i in 1..det_values.len().saturating_sub(1) {
            if det_values[i] < det_values[i - 1] && det_values[i] < det_values[i + 1] {
                argmin_times.push(times[i]);
            }
        }
        OmegaTrace {
            times,
            det_values,
            min_det,
            argmin_times,
        }
    }
}

/// Compute the Omega determinant trace from already-solved X and Y.
pub fn omega_trace(x: &RiccatiSolution, y: &RiccatiSolution, gamma: f64) -> OmegaTrace {
    OmegaTrace::from_solutions(x, y, gamma)
}

fn min_eig_sym(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Feasibility of an attenuation level: both DREs integrate without finite
/// escape, X and Y stay positive semidefinite (Qf may be singular, so the
/// terminal X has zero eigenvalues by construction), and min |Omega| clears
/// the threshold.
pub fn is_feasible(
    model: &GameModel,
    gamma: f64,
    threshold: f64,
    grid: &TimeGrid,
) -> (bool, Option<OmegaTrace>) {
    let mut m = model.clone();
    m.gamma = gamma;
    let x = match solve_x(&m, grid) {
        Ok(x) => x,
        Err(_) => return (false, None),
    };
    let y = match solve_y(&m, grid) {
        Ok(y) => y,
        Err(_) => return (false, None),
    };
    for sol in [&x, &y] {
        for val in &sol.values {
            let scale = val.norm().max(1.0);
            if min_eig_sym(val) < -1e-8 * scale {
                return (false, None);
            }
        }
    }
    let trace = omega_trace(&x, &y, gamma);
    let ok = trace.min_det > threshold;
    (ok, Some(trace))
}

/// Result of the numerical critical-gamma search.
#[derive(Clone, Debug)]
pub struct GammaSearchResult {
    pub gamma_c: f64,
    pub threshold: f64,
    pub iterations: usize,
    /// min |Omega| at the returned gamma_c.
    pub feasible_margin: f64,
}

/// Bisection for the smallest feasible gamma. Feasibility is monotone in
/// gamma, so a feasible upper bracket (found by doubling from gamma = 1)
/// makes bisection safe. `tol` is relative on gamma.
pub fn gamma_critical_numeric(
    model: &GameModel,
    threshold: f64,
    tol: f64,
    grid: &TimeGrid,
) -> Result<GammaSearchResult> {
    const GAMMA_MAX: f64 = 1e4;
    const MAX_ITERS: usize = 60;

    let mut iterations = 0;
    let mut hi = 1.0;
    let mut hi_trace;
    loop {
        iterations += 1;
        let (ok, trace) = is_feasible(model, hi, threshold, grid);
        if ok {
            hi_trace = trace;
            break;
        }
        hi *= 2.0;
        if hi > GAMMA_MAX {
            return Err(Error::NoFeasibleGamma {
                gamma_max: GAMMA_MAX,
            });
        }
    }
    let mut lo = hi / 2.0;
    // lo may itself be feasible when hi started at 1; walk it down.
    while lo > 1e-6 {
        iterations += 1;
        let (ok, trace) = is_feasible(model, lo, threshold, grid);
        if !ok {
            break;
        }
        hi = lo;
        hi_trace = trace;
        lo /= 2.0;
    }

    while (hi - lo) > tol * hi && iterations < MAX_ITERS {
        iterations += 1;
        let mid = 0.5 * (hi + lo);
        let (ok, trace) = is_feasible(model, mid, threshold, grid);
        if ok {
            hi = mid;
            hi_trace = trace;
        } else {
            lo = mid;
        }
    }
    let margin = hi_trace.map(|t| t.min_det).unwrap_or(f64::NAN);
    Ok(GammaSearchResult {
        gamma_c: hi,
        threshold,
        iterations,
        feasible_margin: margin,
    })
}

/// Closed-form critical gamma^2 for the boat problem under the steady-state
/// estimator approximation:
///   gamma_c^2 = max{ b sqrt(V), (1 + sqrt(V)/tf) / (1 + 1/(b tf)) }.
/// With `all_horizons` the tf-independent bound max{ b sqrt(V), 1 } is
/// returned instead.
pub fn sbgp_gamma_critical(b: f64, v: f64, tf: f64, all_horizons: bool) -> f64 {
    let sv = v.sqrt();
    if all_horizons {
        (b * sv).max(1.0)
    } else {
        (b * sv).max((1.0 + sv / tf) / (1.0 + 1.0 / (b * tf)))
    }
}

/// psi(t_go) = (t_go + sqrt(V)) / (t_go + 1/b), the pointwise lower bound
/// on gamma^2 along the horizon.
pub fn sbgp_psi(t_go: f64, b: f64, v: f64) -> f64 {
    (t_go + v.sqrt()) / (t_go + 1.0 / b)
}
