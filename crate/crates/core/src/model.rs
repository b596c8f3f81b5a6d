//! Domain types shared by every solver and scenario.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetry / definiteness tolerance used at construction time.
pub const SYM_TOL: f64 = 1e-10;
/// Relative asymmetry beyond this is a validation error, not a fixable drift.
pub const ASYM_REL_TOL: f64 = 1e-8;

/// Observation map H(t). The missile engagement measures the LOS angle, so H
/// depends on time-to-go; constant-H scenarios wrap a fixed matrix.
#[derive(Clone)]
pub enum ObservationMap {
    Constant(DMatrix<f64>),
    /// H = [1/(Vc * t_go), 0, ..., 0] with t_go clamped below at `tgo_floor`.
    LosAngle {
        vc: f64,
        tf: f64,
        tgo_floor: f64,
        n: usize,
    },
    Custom {
        rows: usize,
        cols: usize,
        f: Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    },
}

impl ObservationMap {
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match self {
            ObservationMap::Constant(h) => h.clone(),
            ObservationMap::LosAngle {
                vc,
                tf,
                tgo_floor,
                n,
            } => {
                let tgo = (tf - t).max(*tgo_floor);
                let mut h = DMatrix::zeros(1, *n);
                h[(0, 0)] = 1.0 / (vc * tgo);
                h
            }
            ObservationMap::Custom { f, .. } => f(t),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            ObservationMap::Constant(h) => h.nrows(),
            ObservationMap::LosAngle { .. } => 1,
            ObservationMap::Custom { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            ObservationMap::Constant(h) => h.ncols(),
            ObservationMap::LosAngle { n, .. } => *n,
            ObservationMap::Custom { cols, .. } => *cols,
        }
    }
}

impl fmt::Debug for ObservationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservationMap::Constant(h) => write!(f, "Constant({}x{})", h.nrows(), h.ncols()),
            ObservationMap::LosAngle { vc, tf, .. } => {
                write!(f, "LosAngle(vc={vc}, tf={tf})")
            }
            ObservationMap::Custom { rows, cols, .. } => write!(f, "Custom({rows}x{cols})"),
        }
    }
}

/// The LTI zero-sum game: dynamics, weights, attenuation level, horizon.
///
/// Immutable after construction; safe to share across parallel workers.
#[derive(Clone, Debug)]
pub struct GameModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub h: ObservationMap,
    pub q: DMatrix<f64>,
    pub qf: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub y0: DMatrix<f64>,
    pub gamma: f64,
    pub t0: f64,
    pub tf: f64,
}

impl GameModel {
    /// Number of states.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Symmetrize the weight matrices in place; asymmetry beyond the relative
    /// tolerance is reported by `validate`, small drift is absorbed here.
    pub fn symmetrized(mut self) -> Self {
        for m in [
            &mut self.q,
            &mut self.qf,
            &mut self.w,
            &mut self.v,
            &mut self.y0,
        ] {
            let sym = (m.clone() + m.transpose()) * 0.5;
            *m = sym;
        }
        self
    }
}

fn min_eig_sym(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn rel_asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / norm
}

/// Outcome of `validate`: every violated invariant, in deterministic order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            write!(f, "{}", self.violations.join("; "))
        }
    }
}

/// Check dimensions, symmetry and definiteness of a game definition.
/// Pure: the same model always yields the identical report.
pub fn validate(model: &GameModel) -> ValidationReport {
    let mut v = Vec::new();
    let n = model.a.nrows();

    if model.a.ncols() != n {
        v.push("A not square".to_string());
    }
    if model.b.nrows() != n {
        v.push("B row count mismatch".to_string());
    }
    if model.d.nrows() != n {
        v.push("D row count mismatch".to_string());
    }
    if model.h.cols() != n {
        v.push("H column count mismatch".to_string());
    }
    let q_dim = model.d.ncols();
    let m_dim = model.h.rows();
    for (name, mat, rows) in [
        ("Q", &model.q, n),
        ("Qf", &model.qf, n),
        ("Y0", &model.y0, n),
        ("W", &model.w, q_dim),
        ("V", &model.v, m_dim),
    ] {
        if mat.nrows() != rows || mat.ncols() != rows {
            v.push(format!("{name} dimension mismatch"));
            continue;
        }
        if rel_asymmetry(mat) > ASYM_REL_TOL {
            v.push(format!("{name} not symmetric"));
        }
    }
    // PSD weights.
    for (name, mat) in [("Q", &model.q), ("Qf", &model.qf)] {
        if mat.nrows() == mat.ncols() && mat.nrows() > 0 {
            let scale = mat.norm().max(1.0);
            if min_eig_sym(mat) < -SYM_TOL * scale {
                v.push(format!("{name} not PSD"));
            }
        }
    }
    // PD weights.
    for (name, mat) in [("W", &model.w), ("V", &model.v), ("Y0", &model.y0)] {
        if mat.nrows() == mat.ncols() && mat.nrows() > 0 {
            let scale = mat.norm().max(1.0);
            if min_eig_sym(mat) <= SYM_TOL * scale {
                v.push(format!("{name} not PD"));
            }
        }
    }
    // NaN must fail these checks too, hence the negated comparisons.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    {
        if !(model.gamma > 0.0) {
            v.push("gamma not positive".to_string());
        }
        if !(model.tf > model.t0) {
            v.push("empty horizon".to_string());
        }
    }
    ValidationReport { violations: v }
}

/// State vector newtype; entries in scenario units.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub DVector<f64>);

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        StateVector(DVector::zeros(n))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Uniform time grid from t0 to tf inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub tf: f64,
    pub dt: f64,
    steps: usize,
}

impl TimeGrid {
    // NaN arguments must be rejected, hence the negated comparisons.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(t0: f64, tf: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt = {dt} must be positive")));
        }
        if !(tf > t0) {
            return Err(Error::Config(format!("empty horizon [{t0}, {tf}]")));
        }
        let ratio = (tf - t0) / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "(tf - t0)/dt = {ratio} is not an integer"
            )));
        }
        Ok(TimeGrid {
            t0,
            tf,
            dt,
            steps: steps as usize,
        })
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.tf
        } else {
            self.t0 + i as f64 * self.dt
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Index of the last node at or before t, plus the interpolation fraction.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if t < self.t0 - 1e-12 || t > self.tf + 1e-12 {
            return Err(Error::OutOfRange {
                t,
                t0: self.t0,
                tf: self.tf,
            });
        }
        let s = ((t - self.t0) / self.dt).clamp(0.0, self.steps as f64);
        let i = (s.floor() as usize).min(self.steps - 1);
        Ok((i, s - i as f64))
    }
}
