//! Closed-form ridge regression for the linear readout.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Solves `W_out = Y Xᵀ (X Xᵀ + γI)⁻¹` through a Cholesky factorisation of
/// `X Xᵀ + γI` (never an explicit inverse).
///
/// `x` is `N_f × N` (one feature column per sample), `y` is `N_y × N`.
pub fn train_readout(x: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            what: "state and target sample counts",
            expected: x.ncols(),
            got: y.ncols(),
        });
    }
    if x.ncols() == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge factor must be nonnegative, got {gamma}")));
    }
    let n_f = x.nrows();
    let mut gram = x * x.transpose();
    for i in 0..n_f {
        gram[(i, i)] += gamma;
    }
    let rhs = x * y.transpose();

    let chol = gram.cholesky().ok_or(Error::SingularSystem)?;
    if gamma == 0.0 {
        // Cholesky of a semidefinite matrix can succeed on rounding noise;
        // reject pivots that are indistinguishable from zero.
        let l = chol.l_dirty();
        let diag: Vec<f64> = (0..n_f).map(|i| l[(i, i)] * l[(i, i)]).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > n_f as f64 * f64::EPSILON * max) {
            return Err(Error::SingularSystem);
        }
    }
    let solution = chol.solve(&rhs);
    Ok(solution.transpose())
}

/// `‖W X − Y‖²_F + γ ‖W‖²_F`, the objective minimised by [`train_readout`].
pub fn ridge_objective(w: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> f64 {
    let residual = w * x - y;
    residual.norm_squared() + gamma * w.norm_squared()
}

/// Mean squared error `E_d = (1 / N_y N) Σ_i Σ_n (ŷ_i(n) − y_i(n))²`.
pub fn mean_squared_error(w: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let residual = w * x - y;
    residual.norm_squared() / (y.nrows() * y.ncols()) as f64
}
