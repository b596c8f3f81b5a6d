use thiserror::Error;

/// Errors surfaced by the solvers, estimators and studies.
#[derive(Debug, Error)]
pub enum Error {
    /// A Riccati solution exceeded the blow-up bound mid-integration.
    #[error("finite escape at t = {t}: matrix norm {norm:.3e} exceeds bound {bound:.3e}")]
    FiniteEscape { t: f64, norm: f64, bound: f64 },

    /// Omega = I - gamma^-2 Y X is not invertible (or below the feasibility threshold).
    #[error("Omega singular at t = {t}: |Omega| = {det:.3e}")]
    SingularOmega { t: f64, det: f64 },

    /// Time outside the solution horizon.
    #[error("t = {t} outside horizon [{t0}, {tf}]")]
    OutOfRange { t: f64, t0: f64, tf: f64 },

    /// Invalid argument to a closed-form evaluator.
    #[error("domain error: {0}")]
    Domain(String),

    /// A propagated quantity stopped being finite.
    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    /// The requested attenuation level admits no game solution.
    #[error("gamma = {gamma} infeasible: {reason}")]
    InfeasibleGamma { gamma: f64, reason: String },

    /// Closed-form SBGP gain denominator crossed zero.
    #[error("singular gain: denominator {denom:.3e} at t = {t}")]
    SingularGain { t: f64, denom: f64 },

    /// Steady-state SBGP gain hits the finite-escape condition 1/b <= sqrt(V)/gamma^2.
    #[error("finite escape in approximate gain: 1/b - gamma^-2 sqrt(V) = {margin:.3e}")]
    FiniteEscapeGain { margin: f64 },

    /// Bracket doubling never found a feasible gamma.
    #[error("no feasible gamma found up to {gamma_max}")]
    NoFeasibleGamma { gamma_max: f64 },

    /// The realized DA-ratio denominator is zero (no disturbances, zero x0).
    #[error("degenerate DA-ratio denominator")]
    DegenerateDenominator,

    /// More than the tolerated fraction of Monte Carlo runs failed feasibility.
    #[error("{failed} of {total} Monte Carlo runs failed")]
    TooManyFailures { failed: usize, total: usize },

    /// Scenario or study configuration problem.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
