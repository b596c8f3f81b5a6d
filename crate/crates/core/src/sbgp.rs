//! The simple boat guidance problem: a scalar pursuit-evasion game with
//! closed-form solutions used both as runnable laws and as test oracles.

use nalgebra::dmatrix;

use crate::error::{Error, Result};
use crate::model::{GameModel, ObservationMap};
use crate::riccati::sbgp_mu;

/// Scalar scenario: zeroth-order boats, relative separation state, full-state
/// measurement with additive noise. Maps onto A = 0, B = 1, D = 1, H = 1,
/// Q = 0, W = 1.
#[derive(Clone, Copy, Debug)]
pub struct SbgpScenario {
    /// Terminal-separation weight.
    pub b: f64,
    /// Measurement-noise weight.
    pub v: f64,
    /// Initial-uncertainty weight.
    pub y0: f64,
    pub gamma: f64,
    pub tf: f64,
    /// Initial relative separation [m].
    pub x0: f64,
}

impl SbgpScenario {
    pub fn to_model(&self) -> GameModel {
        GameModel {
            a: dmatrix![0.0],
            b: dmatrix![1.0],
            d: dmatrix![1.0],
            h: ObservationMap::Constant(dmatrix![1.0]),
            q: dmatrix![0.0],
            qf: dmatrix![self.b],
            w: dmatrix![1.0],
            v: dmatrix![self.v],
            y0: dmatrix![self.y0],
            gamma: self.gamma,
            t0: 0.0,
            tf: self.tf,
        }
    }
}

fn perfect_denominator(t_go: f64, b: f64, gamma: f64) -> f64 {
    1.0 / b + (1.0 - gamma.powi(-2)) * t_go
}

/// Closed-form perfect-information pursuer control
/// u* = -x / (1/b + (1 - gamma^-2) t_go).
pub fn sbgp_perfect_u(x: f64, t_go: f64, b: f64, gamma: f64) -> Result<f64> {
    let denom = perfect_denominator(t_go, b, gamma);
    if denom <= 0.0 {
        return Err(Error::InfeasibleGamma {
            gamma,
            reason: format!("1/b + (1 - gamma^-2) t_go = {denom} not positive"),
        });
    }
    Ok(-x / denom)
}

/// Closed-form evader saddle strategy w* = -gamma^-2 u*.
pub fn sbgp_perfect_w(x: f64, t_go: f64, b: f64, gamma: f64) -> Result<f64> {
    Ok(-sbgp_perfect_u(x, t_go, b, gamma)? * gamma.powi(-2))
}

fn da_denominator(t_go: f64, b: f64, v: f64, y0: f64, gamma: f64, t: f64) -> f64 {
    let y = v.sqrt()
        + if y0 == v.sqrt() {
            0.0
        } else {
            sbgp_mu(y0, v, t)
        };
    (1.0 - gamma.powi(-2)) * t_go + 1.0 / b - gamma.powi(-2) * y
}

/// Exact imperfect-information DA control
/// u* = -xhat / ((1 - gamma^-2) t_go + 1/b - gamma^-2 (sqrt(V) + mu)).
#[allow(clippy::too_many_arguments)]
pub fn sbgp_da_u(xhat: f64, t_go: f64, b: f64, v: f64, y0: f64, gamma: f64, t: f64) -> Result<f64> {
    let denom = da_denominator(t_go, b, v, y0, gamma, t);
    if denom <= 0.0 {
        return Err(Error::SingularGain { t, denom });
    }
    Ok(-xhat / denom)
}

/// Gain-magnitude mode for the steady-state approximation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GainMode {
    /// |gain| = 1 / ((1 - gamma^-2) t_go + 1/b - gamma^-2 sqrt(V))
    FixedGamma,
    /// gamma^2 = b sqrt(V): |gain| = 1 / ((1 - 1/(b sqrt(V))) t_go)
    CriticalGamma,
}

/// Steady-state (mu dropped) feedback gain. Returns the signed gain
/// (u = gain * xhat, gain < 0).
pub fn sbgp_approx_gain(t_go: f64, b: f64, v: f64, gamma: f64, mode: GainMode) -> Result<f64> {
    let sv = v.sqrt();
    match mode {
        GainMode::FixedGamma => {
            let tail = 1.0 / b - gamma.powi(-2) * sv;
            if tail <= 0.0 {
                return Err(Error::FiniteEscapeGain { margin: tail });
            }
            Ok(-1.0 / ((1.0 - gamma.powi(-2)) * t_go + tail))
        }
        GainMode::CriticalGamma => {
            let bsv = b * sv;
            if bsv <= 1.0 {
                return Err(Error::Domain(format!(
                    "critical mode needs b sqrt(V) > 1, got {bsv}"
                )));
            }
            Ok(-1.0 / ((1.0 - 1.0 / bsv) * t_go))
        }
    }
}

/// Three costs from the saddle-point perturbation experiment:
/// (J with w scaled by 1+delta, J at the saddle, J with u scaled by 1+delta).
#[derive(Clone, Copy, Debug)]
pub struct SaddleCosts {
    pub j_w_perturbed: f64,
    pub j_saddle: f64,
    pub j_u_perturbed: f64,
}

/// Simulate the perfect-information game three times: at the saddle, with the
/// evader deviating (w scaled by 1+delta), and with the pursuer deviating
/// (u scaled by 1+delta). Cost is b/2 xf^2 + 1/2 int(u^2 - gamma^2 w^2) dt.
pub fn sbgp_saddle_check(scenario: &SbgpScenario, delta: f64, dt: f64) -> Result<SaddleCosts> {
    let run = |u_scale: f64, w_scale: f64| -> Result<f64> {
        let steps = (scenario.tf / dt).round() as usize;
        let mut x = scenario.x0;
        let mut cost = 0.0;
        let mut prev_integrand: Option<f64> = None;
        for i in 0..=steps {
            let t = i as f64 * dt;
            let t_go = scenario.tf - t;
            let u = u_scale * sbgp_perfect_u(x, t_go, scenario.b, scenario.gamma)?;
            let w = w_scale * sbgp_perfect_w(x, t_go, scenario.b, scenario.gamma)?;
            let integrand = u * u - scenario.gamma * scenario.gamma * w * w;
            if let Some(prev) = prev_integrand {
                cost += 0.25 * dt * (prev + integrand);
            }
            prev_integrand = Some(integrand);
            if i < steps {
                // RK4 on xdot = u + w with the strategies evaluated in-stage.
                let f = |t: f64, x: f64| -> f64 {
                    let tg = scenario.tf - t;
                    let u =
                        u_scale * sbgp_perfect_u(x, tg, scenario.b, scenario.gamma).unwrap_or(0.0);
                    let w =
                        w_scale * sbgp_perfect_w(x, tg, scenario.b, scenario.gamma).unwrap_or(0.0);
                    u + w
                };
                let k1 = f(t, x);
                let k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1);
                let k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2);
                let k4 = f(t + dt, x + dt * k3);
                x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        Ok(cost + 0.5 * scenario.b * x * x)
    };

    Ok(SaddleCosts {
        j_w_perturbed: run(1.0, 1.0 + delta)?,
        j_saddle: run(1.0, 1.0)?,
        j_u_perturbed: run(1.0 + delta, 1.0)?,
    })
}
