//! Kalman filter that fuses N simultaneous TOA measurements and tracks a
//! TOA whose rate of change follows an AR(1) process.
//!
//! State is `[tau, v]` in nanoseconds and nanoseconds per step.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};

/// `A = [[1, 1], [0, nu]]`, `Q = diag(0, sigma_p^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateModel {
    pub nu: f64,
    pub plant_var: f64,
}

impl StateModel {
    pub fn new(nu: f64, plant_var: f64) -> Result<Self> {
        if !(nu > 0.0 && nu < 1.0) {
            return Err(Error::InvalidParameter(format!("nu = {nu} must lie in (0, 1)")));
        }
        if !(plant_var >= 0.0 && plant_var.is_finite()) {
            return Err(Error::InvalidParameter("plant variance must be >= 0".into()));
        }
        Ok(Self { nu, plant_var })
    }

    pub fn transition(&self) -> Matrix2<f64> {
        Matrix2::new(1.0, 1.0, 0.0, self.nu)
    }

    pub fn plant_cov(&self) -> Matrix2<f64> {
        Matrix2::new(0.0, 0.0, 0.0, self.plant_var)
    }
}

impl Default for StateModel {
    fn default() -> Self {
        Self {
            nu: 0.99,
            plant_var: 1e-4,
        }
    }
}

/// N detectors that all observe tau directly: `H` has rows `[1, 0]`,
/// `C = diag(sigma_1^2, ..., sigma_N^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    h: DMatrix<f64>,
    variances: Vec<f64>,
}

impl MeasurementModel {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::Dimension("at least one detector is required".into()));
        }
        if variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "measurement variances must be finite and non-negative".into(),
            ));
        }
        let n = variances.len();
        let h = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
        Ok(Self { h, variances })
    }

    pub fn detectors(&self) -> usize {
        self.variances.len()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn c(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.variances))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub state: Vector2<f64>,
    /// MSE (covariance) matrix, kept symmetric.
    pub cov: Matrix2<f64>,
}

impl KalmanState {
    pub fn tau(&self) -> f64 {
        self.state[0]
    }

    pub fn mse(&self) -> f64 {
        self.cov[(0, 0)]
    }
}

/// Per-step fused TOA and MSE estimate, one entry per processed measurement
/// vector. The prior that seeds the recursion is kept separately.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionTrace {
    pub prior_tau: f64,
    pub prior_mse: f64,
    pub tau: Vec<f64>,
    pub mse: Vec<f64>,
}

impl FusionTrace {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

fn min_eigenvalue(m: &Matrix2<f64>) -> f64 {
    let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    mean - (half * half + b * b).sqrt()
}

fn symmetrize(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

pub fn kalman_init(prior_state: [f64; 2], prior_cov: Matrix2<f64>) -> Result<KalmanState> {
    if prior_state.iter().any(|v| !v.is_finite()) || prior_cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite prior".into()));
    }
    let scale = prior_cov.abs().max().max(1.0);
    if (prior_cov[(0, 1)] - prior_cov[(1, 0)]).abs() > 1e-12 * scale {
        return Err(Error::NotPsd);
    }
    if min_eigenvalue(&prior_cov) < -1e-12 * scale {
        return Err(Error::NotPsd);
    }
    Ok(KalmanState {
        state: Vector2::new(prior_state[0], prior_state[1]),
        cov: symmetrize(&prior_cov),
    })
}

/// One predict/update cycle. Returns the new state with its fused TOA and MSE.
pub fn kalman_step(
    state: &KalmanState,
    model: &StateModel,
    meas: &MeasurementModel,
    y: &[f64],
) -> Result<(KalmanState, f64, f64)> {
    let n = meas.detectors();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "measurement vector has {} entries, model has {n} detectors",
            y.len()
        )));
    }
    let a = model.transition();
    let s_pred = a * state.state;
    let m_pred = a * state.cov * a.transpose() + model.plant_cov();

    let h = meas.h();
    let m_pred_d = DMatrix::from_column_slice(2, 2, m_pred.as_slice());
    let h_m = h * &m_pred_d; // N x 2
    let innovation_cov = meas.c() + &h_m * h.transpose();
    let chol = innovation_cov
        .cholesky()
        .ok_or(Error::SingularInnovation)?;
    // K^T = S^{-1} H M_pred, using symmetry of S and M_pred.
    let gain_t = chol.solve(&h_m);
    let gain = gain_t.transpose(); // 2 x N

    let s_pred_d = DVector::from_column_slice(s_pred.as_slice());
    let residual = DVector::from_column_slice(y) - h * &s_pred_d;
    let correction = &gain * residual;
    let new_state = s_pred + Vector2::new(correction[0], correction[1]);

    let kh = &gain * h; // 2 x 2
    let i_kh = Matrix2::identity() - Matrix2::new(kh[(0, 0)], kh[(0, 1)], kh[(1, 0)], kh[(1, 1)]);
    let new_cov = symmetrize(&(i_kh * m_pred));

    let next = KalmanState {
        state: new_state,
        cov: new_cov,
    };
    Ok((next, next.tau(), next.mse()))
}

/// Runs the recursion over a sequence of N-vectors.
pub fn kalman_run(
    measurements: &[Vec<f64>],
    model: &StateModel,
    meas: &MeasurementModel,
    prior: &KalmanState,
) -> Result<FusionTrace> {
    let mut trace = FusionTrace {
        prior_tau: prior.tau(),
        prior_mse: prior.mse(),
        tau: Vec::with_capacity(measurements.len()),
        mse: Vec::with_capacity(measurements.len()),
    };
    let mut state = *prior;
    for y in measurements {
        let (next, tau, mse) = kalman_step(&state, model, meas, y)?;
        trace.tau.push(tau);
        trace.mse.push(mse);
        state = next;
    }
    Ok(trace)
}
