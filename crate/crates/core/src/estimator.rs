//! Game estimator, its Kalman special case, and the similarity transform
//! that realizes the H-infinity filter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::GameModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    Game,
    Kalman,
    HInf,
}

#[derive(Clone, Debug)]
pub struct EstimatorState {
    pub xhat: DVector<f64>,
    pub t: f64,
    pub kind: EstimatorKind,
}

impl EstimatorState {
    pub fn new(n: usize, t0: f64, kind: EstimatorKind) -> Self {
        // xhat0 = 0 unless an experiment overrides it.
        EstimatorState {
            xhat: DVector::zeros(n),
            t: t0,
            kind,
        }
    }
}

fn rk4_vec<F>(f: F, x: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (0.5 * dt)));
    let k3 = f(&(x + &k2 * (0.5 * dt)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn check_finite(x: &DVector<f64>, t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t })
    }
}

/// One step of the game estimator
///   xhat_dot = A xhat + B u + gamma^-2 Y Q xhat + Y H' V^-1 (z - H xhat)
/// with z and u held over the step and Y evaluated at the step start.
pub fn game_estimator_step(
    state: &EstimatorState,
    model: &GameModel,
    y: &DMatrix<f64>,
    u: &DVector<f64>,
    z: &DVector<f64>,
    dt: f64,
) -> Result<EstimatorState> {
    step_inner(state, model, y, u, z, dt, true)
}

/// One step of the Kalman filter (the game estimator without the
/// gamma^-2 Y Q term); Y must come from the Kalman DRE.
pub fn kalman_step(
    state: &EstimatorState,
    model: &GameModel,
    y: &DMatrix<f64>,
    u: &DVector<f64>,
    z: &DVector<f64>,
    dt: f64,
) -> Result<EstimatorState> {
    step_inner(state, model, y, u, z, dt, false)
}

fn step_inner(
    state: &EstimatorState,
    model: &GameModel,
    y: &DMatrix<f64>,
    u: &DVector<f64>,
    z: &DVector<f64>,
    dt: f64,
    shaping: bool,
) -> Result<EstimatorState> {
    let h = model.h.eval(state.t);
    let v_inv = model
        .v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("V not invertible".to_string()))?;
    let gain = y * h.transpose() * v_inv;
    let bu = &model.b * u;
    let shaping_mat = if shaping {
        Some(y * &model.q / (model.gamma * model.gamma))
    } else {
        None
    };

    let f = |xh: &DVector<f64>| {
        let mut dot = &model.a * xh + &bu + &gain * (z - &h * xh);
        if let Some(s) = &shaping_mat {
            dot += s * xh;
        }
        dot
    };
    let xhat = rk4_vec(f, &state.xhat, dt);
    check_finite(&xhat, state.t + dt)?;
    Ok(EstimatorState {
        xhat,
        t: state.t + dt,
        kind: state.kind,
    })
}

/// Similarity transform xbar = Omega^-1 xhat realizing the H-infinity filter.
pub fn hinf_transform(xhat: &DVector<f64>, omega: &DMatrix<f64>) -> Result<DVector<f64>> {
    let det = omega.determinant();
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::SingularOmega { t: f64::NAN, det });
    }
    let inv = omega
        .clone()
        .try_inverse()
        .ok_or(Error::SingularOmega { t: f64::NAN, det })?;
    Ok(inv * xhat)
}
