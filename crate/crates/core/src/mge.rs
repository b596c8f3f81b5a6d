//! Missile guidance engagement: scenario construction, seeded Monte Carlo
//! batches per guidance law, CEP and control-effort statistics, and the
//! fixed-vs-critical, navigation-constant and trajectory-shaping studies.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feasibility::{gamma_critical_numeric, omega_trace, OmegaTrace};
use crate::guidance::{
    da_gain, equivalent_n, perfect_state_control, pn_control, saturate, separation_control,
    GainTrace, GuidanceLaw,
};
use crate::model::{GameModel, ObservationMap, TimeGrid};
use crate::riccati::{solve_x, solve_y, RiccatiSolution};
use crate::sim::{measure, propagate_true, trapezoid, NoiseStream};

/// How the injected per-sample measurement noise relates to the filter
/// weight V = eta^2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseConvention {
    /// Continuous-intensity bridging: per-sample variance V/dt.
    Bridging,
    /// Per-sample standard deviation eta directly.
    PerSample,
}

/// Planar linearized missile-target engagement. States are relative
/// separation, its rate, target acceleration and missile acceleration.
#[derive(Clone, Copy, Debug)]
pub struct MgeScenario {
    /// Closing velocity [m/s].
    pub vc: f64,
    /// Missile time constant [s] (control channel lag).
    pub t_missile: f64,
    /// Target time constant [s] (disturbance channel lag).
    pub theta: f64,
    /// Terminal miss weight.
    pub b: f64,
    /// Disturbance weight.
    pub w_weight: f64,
    /// Noise scale eta = sqrt(V).
    pub eta: f64,
    pub gamma: f64,
    pub tf: f64,
    /// Trajectory-shaping weight on the first state.
    pub q11: f64,
    /// Target acceleration command magnitude [m/s^2]; sign randomized per run.
    pub w_cmd: f64,
    /// Control saturation [m/s^2].
    pub u_sat: f64,
    /// Initial lateral velocity [m/s].
    pub x20: f64,
    pub dt: f64,
    pub noise: NoiseConvention,
}

impl Default for MgeScenario {
    fn default() -> Self {
        const G: f64 = 9.81;
        MgeScenario {
            vc: 300.0,
            t_missile: 0.1,
            theta: 0.5,
            b: 1000.0,
            w_weight: 3.0,
            eta: 0.5e-3,
            gamma: 2.5,
            tf: 3.0,
            q11: 0.0,
            w_cmd: G,
            u_sat: 4.0 * G,
            x20: 0.0,
            dt: 1e-3,
            noise: NoiseConvention::Bridging,
        }
    }
}

impl MgeScenario {
    /// Per-sample measurement-noise standard deviation.
    pub fn sigma(&self) -> f64 {
        match self.noise {
            NoiseConvention::Bridging => self.eta / self.dt.sqrt(),
            NoiseConvention::PerSample => self.eta,
        }
    }
}

/// Build the four-state game model for the engagement.
pub fn build_mge(sc: &MgeScenario) -> GameModel {
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0,
            1.0,
            0.0,
            0.0, //
            0.0,
            0.0,
            1.0,
            -1.0, //
            0.0,
            0.0,
            -1.0 / sc.theta,
            0.0, //
            0.0,
            0.0,
            0.0,
            -1.0 / sc.t_missile,
        ],
    );
    let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0 / sc.t_missile]);
    let d = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 1.0 / sc.theta, 0.0]);
    let mut q = DMatrix::zeros(4, 4);
    q[(0, 0)] = sc.q11;
    let mut qf = DMatrix::zeros(4, 4);
    qf[(0, 0)] = sc.b;
    GameModel {
        a,
        b,
        d,
        h: ObservationMap::LosAngle {
            vc: sc.vc,
            tf: sc.tf,
            tgo_floor: sc.dt,
            n: 4,
        },
        q,
        qf,
        w: DMatrix::from_element(1, 1, sc.w_weight),
        v: DMatrix::from_element(1, 1, sc.eta * sc.eta),
        y0: DMatrix::identity(4, 4),
        gamma: sc.gamma,
        t0: 0.0,
        tf: sc.tf,
    }
}

/// Pre-solved Riccati grids shared by every run of a batch.
#[derive(Clone, Debug)]
pub struct EngagementSetup {
    pub scenario: MgeScenario,
    pub model: GameModel,
    pub grid: TimeGrid,
    pub x_sol: RiccatiSolution,
    /// Estimator DRE with the shaping term (equals the Kalman DRE when Q = 0).
    pub y_game: RiccatiSolution,
    /// Kalman DRE (no shaping term), used by the separation and PN laws.
    pub y_kalman: RiccatiSolution,
}

impl EngagementSetup {
    pub fn new(scenario: MgeScenario) -> Result<Self> {
        let model = build_mge(&scenario);
        let grid = TimeGrid::new(model.t0, model.tf, scenario.dt)?;
        let x_sol = solve_x(&model, &grid)?;
        let y_game = solve_y(&model, &grid)?;
        let y_kalman = if scenario.q11 == 0.0 {
            y_game.clone()
        } else {
            let mut kalman_model = model.clone();
            kalman_model.q = DMatrix::zeros(4, 4);
            solve_y(&kalman_model, &grid)?
        };
        Ok(EngagementSetup {
            scenario,
            model,
            grid,
            x_sol,
            y_game,
            y_kalman,
        })
    }
}

/// One simulated engagement.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub times: Vec<f64>,
    pub x_series: Vec<DVector<f64>>,
    pub xhat_series: Vec<DVector<f64>>,
    pub u_series: Vec<f64>,
    pub z_series: Vec<f64>,
    pub omega_det_series: Vec<f64>,
    pub w_series: Vec<f64>,
    pub v_series: Vec<f64>,
    /// |x1(tf)| [m].
    pub miss: f64,
    /// Trapezoidal integral of u^2 [m^2/s^3].
    pub effort: f64,
}

/// Run one engagement with the noise stream and target-maneuver sign
/// supplied explicitly (used by tests and by `run_engagement`).
pub fn run_engagement_with(
    setup: &EngagementSetup,
    law: GuidanceLaw,
    noise: &mut NoiseStream,
    w_sign: f64,
) -> Result<RunRecord> {
    let sc = &setup.scenario;
    let model = &setup.model;
    let grid = &setup.grid;
    let n_nodes = grid.len();
    let gamma2 = sc.gamma * sc.gamma;
    let eye = DMatrix::identity(4, 4);

    let w_run = DVector::from_element(1, w_sign * sc.w_cmd);
    let mut x = DVector::zeros(4);
    x[1] = sc.x20;
    let mut xhat = DVector::zeros(4);
    let v_inv = 1.0 / (sc.eta * sc.eta);

    let mut rec = RunRecord {
        times: Vec::with_capacity(n_nodes),
        x_series: Vec::with_capacity(n_nodes),
        xhat_series: Vec::with_capacity(n_nodes),
        u_series: Vec::with_capacity(n_nodes),
        z_series: Vec::with_capacity(n_nodes),
        omega_det_series: Vec::with_capacity(n_nodes),
        w_series: Vec::with_capacity(n_nodes),
        v_series: Vec::with_capacity(n_nodes),
        miss: 0.0,
        effort: 0.0,
    };

    for i in 0..n_nodes {
        let t = grid.node(i);
        let t_go = sc.tf - t;
        let h = model.h.eval(t);
        let (z, v) = measure(&x, &h, noise);

        let x_mat = &setup.x_sol.values[i];
        let y_mat = match law {
            GuidanceLaw::Separation | GuidanceLaw::Pn { .. } => &setup.y_kalman.values[i],
            _ => &setup.y_game.values[i],
        };
        let omega = &eye - y_mat * x_mat / gamma2;
        let omega_det = omega.determinant();

        let u_raw = match law {
            GuidanceLaw::Da => {
                if !omega_det.is_finite() || omega_det.abs() < 1e-9 {
                    return Err(Error::SingularOmega { t, det: omega_det });
                }
                let omega_inv = omega
                    .clone()
                    .try_inverse()
                    .ok_or(Error::SingularOmega { t, det: omega_det })?;
                -(model.b.transpose() * x_mat * omega_inv * &xhat)
            }
            GuidanceLaw::Perfect => perfect_state_control(&model.b, x_mat, &x),
            GuidanceLaw::Separation => separation_control(&model.b, x_mat, &xhat),
            GuidanceLaw::Pn { n_prime } => {
                DVector::from_element(1, pn_control(xhat[0], xhat[1], t_go, n_prime, sc.dt))
            }
            GuidanceLaw::Ccg => DVector::from_element(1, -x[0] / t_go.max(sc.dt)),
        };
        let u = saturate(&u_raw, sc.u_sat);

        rec.times.push(t);
        rec.x_series.push(x.clone());
        rec.xhat_series
            .push(if matches!(law, GuidanceLaw::Perfect) {
                x.clone()
            } else {
                xhat.clone()
            });
        rec.u_series.push(u[0]);
        rec.z_series.push(z[0]);
        rec.omega_det_series.push(omega_det);
        rec.w_series.push(w_run[0]);
        rec.v_series.push(v[0]);

        if i + 1 == n_nodes {
            break;
        }

        x = propagate_true(&x, model, &u, &w_run, sc.dt, t)?;

        // Estimator step with z, u held: RK4 of the filter ODE. The DA law
        // uses the game estimator (shaping term active); separation and PN
        // use the plain Kalman form.
        let shaping = matches!(law, GuidanceLaw::Da);
        if !matches!(law, GuidanceLaw::Perfect | GuidanceLaw::Ccg) {
            let gain = y_mat * h.transpose() * v_inv;
            let shaping_mat = if shaping {
                Some(y_mat * &model.q / gamma2)
            } else {
                None
            };
            let bu = &model.b * &u;
            let f = |xh: &DVector<f64>| {
                let mut dot = &model.a * xh + &bu + &gain * (&z - &h * xh);
                if let Some(s) = &shaping_mat {
                    dot += s * xh;
                }
                dot
            };
            let k1 = f(&xhat);
            let k2 = f(&(&xhat + &k1 * (0.5 * sc.dt)));
            let k3 = f(&(&xhat + &k2 * (0.5 * sc.dt)));
            let k4 = f(&(&xhat + &k3 * sc.dt));
            xhat += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (sc.dt / 6.0);
            if !xhat.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { t });
            }
        }
    }

    rec.miss = rec.x_series.last().unwrap()[0].abs();
    let usq: Vec<f64> = rec.u_series.iter().map(|u| u * u).collect();
    rec.effort = trapezoid(&usq, sc.dt);
    Ok(rec)
}

/// Run one engagement with the run-indexed noise stream; the target-maneuver
/// sign is the first draw of the stream.
pub fn run_engagement(
    setup: &EngagementSetup,
    law: GuidanceLaw,
    master_seed: u64,
    run_index: u64,
) -> Result<RunRecord> {
    let mut noise = NoiseStream::for_run(master_seed, run_index, setup.scenario.sigma());
    let sign = if noise.draw_standard() >= 0.0 {
        1.0
    } else {
        -1.0
    };
    run_engagement_with(setup, law, &mut noise, sign)
}

/// Aggregate of a seeded batch for one law.
#[derive(Clone, Debug)]
pub struct MonteCarloSummary {
    pub law: GuidanceLaw,
    pub runs: usize,
    pub failures: usize,
    pub seed: u64,
    /// Median absolute terminal miss [cm].
    pub cep_cm: f64,
    pub mean_effort: f64,
    /// Sorted |miss| values [m].
    pub miss_distribution: Vec<f64>,
    /// Realized DA ratio per successful run (DA law only).
    pub da_ratios: Vec<f64>,
}

impl MonteCarloSummary {
    pub fn miss_quartiles_cm(&self) -> (f64, f64) {
        let q = |p: f64| -> f64 {
            let idx = (p * (self.miss_distribution.len() - 1) as f64).round() as usize;
            self.miss_distribution[idx] * 100.0
        };
        (q(0.25), q(0.75))
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Run a seeded Monte Carlo batch. Runs are independent and execute in
/// parallel; aggregation is order-independent.
pub fn monte_carlo(
    setup: &EngagementSetup,
    law: GuidanceLaw,
    runs: usize,
    seed: u64,
) -> Result<MonteCarloSummary> {
    assert!(runs >= 2, "need at least two runs");
    let results: Vec<Result<RunRecord>> = (0..runs as u64)
        .into_par_iter()
        .map(|i| run_engagement(setup, law, seed, i))
        .collect();

    let mut misses = Vec::with_capacity(runs);
    let mut efforts = Vec::with_capacity(runs);
    let mut da_ratios = Vec::new();
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(rec) => {
                misses.push(rec.miss);
                efforts.push(rec.effort);
                if matches!(law, GuidanceLaw::Da) {
                    if let Ok(ratio) = da_ratio_realized(&rec, &setup.model, setup.scenario.dt) {
                        da_ratios.push(ratio);
                    }
                }
            }
            Err(_) => failures += 1,
        }
    }
    if failures * 10 > runs {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: runs,
        });
    }
    misses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cep_cm = median(&misses) * 100.0;
    let mean_effort = efforts.iter().sum::<f64>() / efforts.len() as f64;
    Ok(MonteCarloSummary {
        law,
        runs: misses.len(),
        failures,
        seed,
        cep_cm,
        mean_effort,
        miss_distribution: misses,
        da_ratios,
    })
}

/// Realized disturbance-attenuation ratio of one run: terminal-plus-running
/// output energy over the weighted disturbance energy actually injected.
pub fn da_ratio_realized(rec: &RunRecord, model: &GameModel, dt: f64) -> Result<f64> {
    let xf = rec.x_series.last().unwrap();
    let x0 = &rec.x_series[0];

    let run_cost: Vec<f64> = rec
        .x_series
        .iter()
        .zip(&rec.u_series)
        .map(|(x, u)| (x.transpose() * &model.q * x)[(0, 0)] + u * u)
        .collect();
    let upsilon = 0.5 * (xf.transpose() * &model.qf * xf)[(0, 0)] + 0.5 * trapezoid(&run_cost, dt);

    let w_inv = model
        .w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("W not invertible".to_string()))?;
    let v_inv = model
        .v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("V not invertible".to_string()))?;
    let y0_inv = model
        .y0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("Y0 not invertible".to_string()))?;

    let dist_cost: Vec<f64> = rec
        .w_series
        .iter()
        .zip(&rec.v_series)
        .map(|(w, v)| w * w * w_inv[(0, 0)] + v * v * v_inv[(0, 0)])
        .collect();
    let phi = 0.5 * (x0.transpose() * y0_inv * x0)[(0, 0)] + 0.5 * trapezoid(&dist_cost, dt);
    if phi == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok(upsilon / phi)
}

/// One row of the fixed-vs-critical comparison.
#[derive(Clone, Debug)]
pub struct FixedVsCriticalRow {
    pub eta: f64,
    pub gamma_fixed: f64,
    pub cep_fixed_cm: f64,
    pub effort_fixed: f64,
    pub gamma_critical: f64,
    pub cep_critical_cm: f64,
    pub effort_critical: f64,
}

/// For each noise level, run the DA law at the fixed gamma and at the
/// numerically found near-critical gamma (|Omega| threshold 0.36).
pub fn fixed_vs_critical_study(
    base: &MgeScenario,
    eta_list: &[f64],
    gamma_fixed: f64,
    threshold: f64,
    runs: usize,
    seed: u64,
) -> Result<Vec<FixedVsCriticalRow>> {
    let mut rows = Vec::new();
    for &eta in eta_list {
        let mut sc = *base;
        sc.eta = eta;
        sc.gamma = gamma_fixed;
        let model = build_mge(&sc);
        let grid = TimeGrid::new(0.0, sc.tf, sc.dt)?;
        let search = gamma_critical_numeric(&model, threshold, 1e-3, &grid)?;

        let setup_fixed = EngagementSetup::new(sc)?;
        let fixed = monte_carlo(&setup_fixed, GuidanceLaw::Da, runs, seed)?;

        let mut sc_crit = sc;
        sc_crit.gamma = search.gamma_c;
        let setup_crit = EngagementSetup::new(sc_crit)?;
        let crit = monte_carlo(&setup_crit, GuidanceLaw::Da, runs, seed)?;

        rows.push(FixedVsCriticalRow {
            eta,
            gamma_fixed,
            cep_fixed_cm: fixed.cep_cm,
            effort_fixed: fixed.mean_effort,
            gamma_critical: search.gamma_c,
            cep_critical_cm: crit.cep_cm,
            effort_critical: crit.mean_effort,
        });
    }
    Ok(rows)
}

/// Result of one trajectory-shaping cell.
#[derive(Clone, Debug)]
pub struct ShapingResult {
    pub q11: f64,
    pub feasible: bool,
    pub omega: Option<OmegaTrace>,
    pub record: Option<RunRecord>,
}

/// Sweep the shaping weight: per q11, solve the DREs, record the |Omega|
/// trace with local minima, and one nominal engagement (x20 = 5 m/s).
pub fn trajectory_shaping_study(
    base: &MgeScenario,
    q11_list: &[f64],
    threshold: f64,
    seed: u64,
) -> Result<Vec<ShapingResult>> {
    let mut out = Vec::new();
    for &q11 in q11_list {
        let mut sc = *base;
        sc.q11 = q11;
        sc.x20 = 5.0;
        let setup = match EngagementSetup::new(sc) {
            Ok(s) => s,
            Err(Error::FiniteEscape { .. }) => {
                out.push(ShapingResult {
                    q11,
                    feasible: false,
                    omega: None,
                    record: None,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let trace = omega_trace(&setup.x_sol, &setup.y_game, sc.gamma);
        let feasible = trace.min_det > threshold;
        let record = if feasible {
            run_engagement(&setup, GuidanceLaw::Da, seed, 0).ok()
        } else {
            None
        };
        out.push(ShapingResult {
            q11,
            feasible,
            omega: Some(trace),
            record,
        });
    }
    Ok(out)
}

/// Which attenuation level a navigation-constant trace uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaMode {
    Fixed,
    Critical,
}

/// Per noise level, the equivalent-navigation-constant trace N'(t) of the
/// DA feedback gain under a fixed or near-critical attenuation level.
pub fn n_prime_study(
    base: &MgeScenario,
    eta_list: &[f64],
    mode: GammaMode,
    threshold: f64,
) -> Result<Vec<(f64, GainTrace)>> {
    let mut out = Vec::new();
    for &eta in eta_list {
        let mut sc = *base;
        sc.eta = eta;
        if mode == GammaMode::Critical {
            let model = build_mge(&sc);
            let grid = TimeGrid::new(0.0, sc.tf, sc.dt)?;
            let search = gamma_critical_numeric(&model, threshold, 1e-3, &grid)?;
            sc.gamma = search.gamma_c;
        }
        let setup = EngagementSetup::new(sc)?;
        let mut trace = GainTrace {
            times: Vec::with_capacity(setup.grid.len()),
            lambda: Vec::with_capacity(setup.grid.len()),
            n_prime: Vec::with_capacity(setup.grid.len()),
        };
        for (i, t) in setup.grid.iter().enumerate() {
            let lam = da_gain(
                &setup.model.b,
                &setup.x_sol.values[i],
                &setup.y_game.values[i],
                sc.gamma,
            )?;
            let t_go = sc.tf - t;
            trace.times.push(t);
            trace.n_prime.push(equivalent_n(lam[(0, 0)], t_go));
            trace.lambda.push(lam);
        }
        out.push((eta, trace));
    }
    Ok(out)
}
