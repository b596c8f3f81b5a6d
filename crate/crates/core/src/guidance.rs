//! The four control strategies compared in the missile study, the collision
//! course limit, and extraction of the PN-equivalent navigation constant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Which feedback law drives a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GuidanceLaw {
    /// u1 = -B'X Omega^-1 xhat
    Da,
    /// u2 = -B'X x (true state)
    Perfect,
    /// u3 = -B'X xhat (certainty equivalence)
    Separation,
    /// u4 = (N'/t_go^2)(xhat1 + t_go xhat2), i.e. N' Vc lambda_dot
    Pn { n_prime: f64 },
    /// u = -x/t_go, the b -> inf, gamma -> inf limit
    Ccg,
}

impl GuidanceLaw {
    pub fn label(&self) -> &'static str {
        match self {
            GuidanceLaw::Da => "u1_da",
            GuidanceLaw::Perfect => "u2_perfect",
            GuidanceLaw::Separation => "u3_separation",
            GuidanceLaw::Pn { .. } => "u4_pn",
            GuidanceLaw::Ccg => "ccg",
        }
    }
}

/// Feedback gain history: u = Lambda xhat, plus the PN-equivalent constant.
#[derive(Clone, Debug)]
pub struct GainTrace {
    pub times: Vec<f64>,
    /// Full feedback gain per node (s x n).
    pub lambda: Vec<DMatrix<f64>>,
    /// |Lambda_{x1}| t_go^2 per node; empty when not applicable.
    pub n_prime: Vec<f64>,
}

/// DA control u = -B'X(I - gamma^-2 YX)^-1 xhat.
pub fn da_control(
    b: &DMatrix<f64>,
    x_mat: &DMatrix<f64>,
    y_mat: &DMatrix<f64>,
    gamma: f64,
    xhat: &DVector<f64>,
) -> Result<DVector<f64>> {
    let omega_inv = omega_inverse(x_mat, y_mat, gamma)?;
    Ok(-(b.transpose() * x_mat * omega_inv * xhat))
}

/// The DA feedback gain Lambda = -B'X Omega^-1 (u = Lambda xhat).
pub fn da_gain(
    b: &DMatrix<f64>,
    x_mat: &DMatrix<f64>,
    y_mat: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let omega_inv = omega_inverse(x_mat, y_mat, gamma)?;
    Ok(-(b.transpose() * x_mat * omega_inv))
}

fn omega_inverse(x_mat: &DMatrix<f64>, y_mat: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let n = x_mat.nrows();
    let omega = DMatrix::identity(n, n) - y_mat * x_mat / (gamma * gamma);
    let det = omega.determinant();
    omega
        .try_inverse()
        .filter(|_| det.is_finite() && det.abs() > 1e-12)
        .ok_or(Error::SingularOmega { t: f64::NAN, det })
}

/// Perfect-information feedback u = -B'X x on the true state.
pub fn perfect_state_control(
    b: &DMatrix<f64>,
    x_mat: &DMatrix<f64>,
    x: &DVector<f64>,
) -> DVector<f64> {
    -(b.transpose() * x_mat * x)
}

/// Certainty-equivalence law u = -B'X xhat.
pub fn separation_control(
    b: &DMatrix<f64>,
    x_mat: &DMatrix<f64>,
    xhat: &DVector<f64>,
) -> DVector<f64> {
    -(b.transpose() * x_mat * xhat)
}

/// PN acceleration command (N'/t_go^2)(xhat1 + t_go xhat2), i.e.
/// N' Vc lambda_dot. With x2_dot = n_T - a_M a positive command nulls a
/// positive zero-effort miss. The 1/t_go singularity is clamped at
/// `tgo_floor`.
pub fn pn_control(xhat1: f64, xhat2: f64, t_go: f64, n_prime: f64, tgo_floor: f64) -> f64 {
    let tgo = t_go.max(tgo_floor);
    (n_prime / (tgo * tgo)) * (xhat1 + tgo * xhat2)
}

/// PN-equivalent navigation constant |Lambda_{x1}| t_go^2 from a feedback
/// gain entry (sign convention u = Lambda xhat).
pub fn equivalent_n(lambda_x1: f64, t_go: f64) -> f64 {
    lambda_x1.abs() * t_go * t_go
}

/// Componentwise clamp of the commanded control to [-u_sat, u_sat].
pub fn saturate(u: &DVector<f64>, u_sat: f64) -> DVector<f64> {
    u.map(|c| c.clamp(-u_sat, u_sat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn da_control_scalar_arithmetic() {
        // X = 1, Y = 1, gamma^2 = 2, xhat = 1, B = 1 -> u = -1/(1 - 0.5) = -2.
        let u = da_control(
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            2.0f64.sqrt(),
            &dvector![1.0],
        )
        .unwrap();
        assert_relative_eq!(u[0], -2.0, max_relative = 1e-14);
    }

    #[test]
    fn da_control_large_gamma_is_separation() {
        let b = dmatrix![1.0];
        let x = dmatrix![3.0];
        let y = dmatrix![0.8];
        let xhat = dvector![1.5];
        let u_da = da_control(&b, &x, &y, 1e9, &xhat).unwrap();
        let u_sep = separation_control(&b, &x, &xhat);
        assert_relative_eq!(u_da[0], u_sep[0], max_relative = 1e-12);
    }

    #[test]
    fn da_control_rejects_singular_omega() {
        // gamma^2 = YX makes Omega = 0 in the scalar case.
        let err = da_control(
            &dmatrix![1.0],
            &dmatrix![2.0],
            &dmatrix![2.0],
            2.0,
            &dvector![1.0],
        );
        assert!(err.is_err());
    }

    #[test]
    fn da_equals_separation_of_transformed_estimate() {
        use crate::estimator::hinf_transform;
        let b = dmatrix![0.0; 10.0];
        let x = dmatrix![2.0, 0.3; 0.3, 1.0];
        let y = dmatrix![0.5, 0.1; 0.1, 0.4];
        let gamma = 2.0;
        let xhat = dvector![1.0, -0.5];
        let n = 2;
        let omega = DMatrix::identity(n, n) - &y * &x / (gamma * gamma);
        let xbar = hinf_transform(&xhat, &omega).unwrap();
        let u_da = da_control(&b, &x, &y, gamma, &xhat).unwrap();
        let u_sep = separation_control(&b, &x, &xbar);
        assert_relative_eq!(u_da[0], u_sep[0], max_relative = 1e-12);
    }

    #[test]
    fn perfect_and_separation_basics() {
        let b = dmatrix![1.0];
        let x = dmatrix![5.0];
        assert_eq!(perfect_state_control(&b, &x, &dvector![0.0])[0], 0.0);
        assert_eq!(separation_control(&b, &x, &dvector![0.0])[0], 0.0);
        // equal when xhat = x
        let v = dvector![0.7];
        assert_eq!(
            perfect_state_control(&b, &x, &v)[0],
            separation_control(&b, &x, &v)[0]
        );
    }

    #[test]
    fn pn_control_values() {
        assert_eq!(pn_control(0.0, 0.0, 1.0, 3.0, 1e-3), 0.0);
        assert_relative_eq!(pn_control(1.0, 0.0, 1.0, 3.0, 1e-3), 3.0);
        // PN self-consistency: Lambda_x1 = 3/t_go^2 -> N' = 3
        let tgo = 0.37;
        assert_relative_eq!(
            equivalent_n(3.0 / (tgo * tgo), tgo),
            3.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn pn_matches_los_rate_form() {
        // N' Vc lambda_dot with lambda = x1/(Vc t_go) equals the state form.
        let (n_prime, vc) = (3.0, 300.0);
        for &(x1, x2, tgo) in &[(10.0, -2.0, 1.5), (-3.0, 5.0, 0.4), (0.2, 0.1, 2.7)] {
            // lambda_dot = d/dt [x1/(Vc (tf - t))] = x2/(Vc tgo) + x1/(Vc tgo^2)
            let lambda_dot = x2 / (vc * tgo) + x1 / (vc * tgo * tgo);
            let u_los = n_prime * vc * lambda_dot;
            let u_state = pn_control(x1, x2, tgo, n_prime, 1e-6);
            assert_relative_eq!(u_los, u_state, max_relative = 1e-12);
        }
    }

    #[test]
    fn saturate_clamps() {
        let s = 39.24; // 4g
        assert_eq!(saturate(&dvector![50.0], s)[0], s);
        assert_eq!(saturate(&dvector![-10.0], s)[0], -10.0);
        assert_eq!(saturate(&dvector![-100.0], s)[0], -s);
    }
}
