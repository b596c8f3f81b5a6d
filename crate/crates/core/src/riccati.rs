//! Differential Riccati equation integration.
//!
//! The controller equation runs backward from the terminal weight, the
//! estimator equation forward from the initial-uncertainty weight. Both use
//! classical fixed-step RK4 with re-symmetrization after every step.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{GameModel, TimeGrid};

/// Norm bound past which a solution is declared to have escaped.
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Backward,
    Forward,
}

/// A Riccati solution sampled on a uniform grid, stored in forward time order.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub values: Vec<DMatrix<f64>>,
    pub direction: Direction,
}

impl RiccatiSolution {
    /// Linear interpolation between adjacent nodes; exact at nodes.
    pub fn eval(&self, t: f64) -> Result<DMatrix<f64>> {
        let (i, frac) = self.grid.locate(t)?;
        if frac == 0.0 {
            return Ok(self.values[i].clone());
        }
        Ok(&self.values[i] * (1.0 - frac) + &self.values[i + 1] * frac)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let sym = (m.clone() + m.transpose()) * 0.5;
    *m = sym;
}

fn check_norm(m: &DMatrix<f64>, t: f64, bound: f64) -> Result<()> {
    let norm = m.norm();
    if !norm.is_finite() || norm > bound {
        return Err(Error::FiniteEscape { t, norm, bound });
    }
    Ok(())
}

/// One RK4 step of a matrix ODE dM/dt = f(t, M).
fn rk4_step<F>(f: F, t: f64, m: &DMatrix<f64>, dt: f64) -> DMatrix<f64>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    let k1 = f(t, m);
    let k2 = f(t + 0.5 * dt, &(m + &k1 * (0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(m + &k2 * (0.5 * dt)));
    let k4 = f(t + dt, &(m + &k3 * dt));
    m + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Integrate the controller DRE
///   Xdot = -(XA + A'X - X(BB' - gamma^-2 DWD')X + Q)
/// backward from X(tf) = Qf. Values are stored forward in time.
pub fn solve_x(model: &GameModel, grid: &TimeGrid) -> Result<RiccatiSolution> {
    solve_x_bounded(model, grid, DEFAULT_BLOWUP_BOUND)
}

pub fn solve_x_bounded(model: &GameModel, grid: &TimeGrid, bound: f64) -> Result<RiccatiSolution> {
    let gamma2_inv = 1.0 / (model.gamma * model.gamma);
    let s = &model.b * model.b.transpose() - &model.d * &model.w * model.d.transpose() * gamma2_inv;

    // In reversed time tau = tf - t: dX/dtau = XA + A'X - X S X + Q.
    let f = |_tau: f64, x: &DMatrix<f64>| {
        x * &model.a + model.a.transpose() * x - x * &s * x + &model.q
    };

    let n_nodes = grid.len();
    let mut values = vec![DMatrix::zeros(model.n(), model.n()); n_nodes];
    values[n_nodes - 1] = model.qf.clone();
    let mut x = model.qf.clone();
    for i in (0..n_nodes - 1).rev() {
        let tau = grid.tf - grid.node(i + 1);
        x = rk4_step(f, tau, &x, grid.dt);
        symmetrize(&mut x);
        check_norm(&x, grid.node(i), bound)?;
        values[i] = x.clone();
    }
    Ok(RiccatiSolution {
        grid: grid.clone(),
        values,
        direction: Direction::Backward,
    })
}

/// Integrate the estimator DRE
///   Ydot = AY + YA' + DWD' - Y(H'V^-1 H - gamma^-2 Q)Y
/// forward from Y(t0) = Y0. H is evaluated at the RK4 substage times.
pub fn solve_y(model: &GameModel, grid: &TimeGrid) -> Result<RiccatiSolution> {
    solve_y_bounded(model, grid, DEFAULT_BLOWUP_BOUND)
}

pub fn solve_y_bounded(model: &GameModel, grid: &TimeGrid, bound: f64) -> Result<RiccatiSolution> {
    let gamma2_inv = 1.0 / (model.gamma * model.gamma);
    let dwd = &model.d * &model.w * model.d.transpose();
    let v_inv = model
        .v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("V not invertible".to_string()))?;

    let f = |t: f64, y: &DMatrix<f64>| {
        let h = model.h.eval(t);
        let r = h.transpose() * &v_inv * h - &model.q * gamma2_inv;
        &model.a * y + y * model.a.transpose() + &dwd - y * r * y
    };

    let mut values = Vec::with_capacity(grid.len());
    let mut y = model.y0.clone();
    values.push(y.clone());
    for i in 0..grid.len() - 1 {
        let t = grid.node(i);
        y = rk4_step(f, t, &y, grid.dt);
        symmetrize(&mut y);
        check_norm(&y, grid.node(i + 1), bound)?;
        values.push(y.clone());
    }
    Ok(RiccatiSolution {
        grid: grid.clone(),
        values,
        direction: Direction::Forward,
    })
}

/// Exact scalar estimator solution for the boat problem:
/// Y = sqrt(V) + mu, mu = 2 sqrt(V) / (((Y0+sqrt(V))/(Y0-sqrt(V))) e^{2t/sqrt(V)} - 1).
///
/// The Y0 = sqrt(V) fixed point is returned directly (the printed formula
/// divides by Y0 - sqrt(V)).
pub fn sbgp_y_closed_form(y0: f64, v: f64, t: f64) -> Result<f64> {
    if v <= 0.0 {
        return Err(Error::Domain(format!("V = {v} must be positive")));
    }
    let sv = v.sqrt();
    if y0 == sv {
        return Ok(sv);
    }
    Ok(sv + sbgp_mu(y0, v, t))
}

/// The transient term of the scalar estimator solution; zero at the fixed point.
pub fn sbgp_mu(y0: f64, v: f64, t: f64) -> f64 {
    let sv = v.sqrt();
    if y0 == sv {
        return 0.0;
    }
    let ratio = (y0 + sv) / (y0 - sv);
    let e = (2.0 * t / sv).exp();
    if !e.is_finite() {
        return 0.0;
    }
    2.0 * sv / (ratio * e - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObservationMap;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn sbgp_model(b: f64, v: f64, y0: f64, gamma: f64, tf: f64) -> GameModel {
        GameModel {
            a: dmatrix![0.0],
            b: dmatrix![1.0],
            d: dmatrix![1.0],
            h: ObservationMap::Constant(dmatrix![1.0]),
            q: dmatrix![0.0],
            qf: dmatrix![b],
            w: dmatrix![1.0],
            v: dmatrix![v],
            y0: dmatrix![y0],
            gamma,
            t0: 0.0,
            tf,
        }
    }

    /// Closed form of the scalar controller DRE: X = 1/(1/b + (1-g^-2) t_go).
    fn sbgp_x_closed_form(b: f64, gamma: f64, tgo: f64) -> f64 {
        1.0 / (1.0 / b + (1.0 - gamma.powi(-2)) * tgo)
    }

    #[test]
    fn solve_x_matches_scalar_closed_form() {
        let model = sbgp_model(1000.0, 0.25e-6, 1.0, 2.0, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 1e-4).unwrap();
        let sol = solve_x(&model, &grid).unwrap();
        // t_go = 1 -> X = 1/(1/1000 + 0.75) = 1.33156...
        let x0 = sol.eval(0.0).unwrap()[(0, 0)];
        assert_relative_eq!(
            x0,
            sbgp_x_closed_form(1000.0, 2.0, 1.0),
            max_relative = 1e-9
        );
        assert_relative_eq!(x0, 1.33156, max_relative = 1e-5);
        // terminal condition exact
        assert_eq!(sol.values.last().unwrap()[(0, 0)], 1000.0);
    }

    #[test]
    fn solve_x_large_gamma_is_one_sided_lq() {
        let model = sbgp_model(1000.0, 0.25e-6, 1.0, 1e9, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 1e-5).unwrap();
        let sol = solve_x(&model, &grid).unwrap();
        for (i, t) in grid.iter().enumerate() {
            let tgo = 1.0 - t;
            assert_relative_eq!(
                sol.values[i][(0, 0)],
                1.0 / (1.0 / 1000.0 + tgo),
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn solve_x_gamma_one_is_constant() {
        let model = sbgp_model(1000.0, 0.25e-6, 1.0, 1.0, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
        let sol = solve_x(&model, &grid).unwrap();
        for m in &sol.values {
            assert_relative_eq!(m[(0, 0)], 1000.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn solve_x_escapes_below_critical_gamma() {
        let model = sbgp_model(1000.0, 0.25e-6, 1.0, 0.5, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 1e-4).unwrap();
        assert!(matches!(
            solve_x(&model, &grid),
            Err(Error::FiniteEscape { .. })
        ));
    }

    #[test]
    fn solve_y_matches_scalar_closed_form() {
        // The decay rate of the transient is ~2 Y0/V, so the step must
        // resolve it; V = 0.04, Y0 = 1 gives a rate of 50 1/s.
        let model = sbgp_model(1000.0, 0.04, 1.0, 2.0, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 1e-4).unwrap();
        let sol = solve_y(&model, &grid).unwrap();
        for (i, t) in grid.iter().enumerate() {
            let exact = sbgp_y_closed_form(1.0, 0.04, t).unwrap();
            assert!(
                (sol.values[i][(0, 0)] - exact).abs() < 1e-6,
                "node {i}: {} vs {exact}",
                sol.values[i][(0, 0)]
            );
        }
        assert_eq!(sol.values[0][(0, 0)], 1.0);
    }

    #[test]
    fn solve_y_fixed_point_stays_put() {
        let v = 0.04;
        let model = sbgp_model(1000.0, v, v.sqrt(), 2.0, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
        let sol = solve_y(&model, &grid).unwrap();
        for m in &sol.values {
            assert_relative_eq!(m[(0, 0)], v.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn closed_form_initial_and_asymptotic() {
        let y = sbgp_y_closed_form(1.0, 0.25, 0.0).unwrap();
        assert_relative_eq!(y, 1.0, max_relative = 1e-12);
        let y_inf = sbgp_y_closed_form(1.0, 0.25, 100.0).unwrap();
        assert_relative_eq!(y_inf, 0.5, max_relative = 1e-12);
        assert!(sbgp_y_closed_form(1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn closed_form_matches_rk4_oracle() {
        // Independent scalar RK4 on Ydot = 1 - Y^2 (V = 1).
        let mut y = 1.0f64;
        let dt = 1e-5;
        let f = |y: f64| 1.0 - y * y;
        for _ in 0..100_000 {
            let k1 = f(y);
            let k2 = f(y + 0.5 * dt * k1);
            let k3 = f(y + 0.5 * dt * k2);
            let k4 = f(y + dt * k3);
            y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let exact = sbgp_y_closed_form(1.0, 1.0, 1.0).unwrap();
        assert!((y - exact).abs() < 1e-10);
    }

    #[test]
    fn eval_interpolates_linearly() {
        let model = sbgp_model(10.0, 0.25, 1.0, 2.0, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 0.25).unwrap();
        let sol = solve_x(&model, &grid).unwrap();
        // exact at a node
        assert_eq!(sol.eval(0.5).unwrap(), sol.values[2]);
        // arithmetic mean at a midpoint
        let mid = sol.eval(0.375).unwrap();
        let mean = (&sol.values[1] + &sol.values[2]) * 0.5;
        assert_relative_eq!(mid[(0, 0)], mean[(0, 0)], max_relative = 1e-14);
        // out of range
        assert!(sol.eval(1.5).is_err());
    }

    #[test]
    fn kalman_dre_is_q_zero_case() {
        // With Q = 0 the estimator DRE is the Kalman DRE; gamma is irrelevant.
        let m1 = sbgp_model(1000.0, 0.25, 1.0, 2.0, 1.0);
        let m2 = sbgp_model(1000.0, 0.25, 1.0, 77.0, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
        let s1 = solve_y(&m1, &grid).unwrap();
        let s2 = solve_y(&m2, &grid).unwrap();
        for (a, b) in s1.values.iter().zip(&s2.values) {
            assert_eq!(a[(0, 0)], b[(0, 0)]);
        }
    }

    #[test]
    fn step_halving_is_fourth_order() {
        let b = 10.0;
        let gamma = 2.0;
        let err_at = |dt: f64| -> f64 {
            let model = sbgp_model(b, 0.25, 1.0, gamma, 1.0);
            let grid = TimeGrid::new(0.0, 1.0, dt).unwrap();
            let sol = solve_x(&model, &grid).unwrap();
            grid.iter()
                .enumerate()
                .map(|(i, t)| (sol.values[i][(0, 0)] - sbgp_x_closed_form(b, gamma, 1.0 - t)).abs())
                .fold(0.0, f64::max)
        };
        let e1 = err_at(0.02);
        let e2 = err_at(0.01);
        assert!(e1 / e2 >= 8.0, "ratio {} too low", e1 / e2);
    }
}
