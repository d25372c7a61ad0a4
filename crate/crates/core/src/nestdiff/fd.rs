//! Central finite differences, used as an independent check on the
//! forward-mode derivatives.

use super::{residual_value, ResidualEvaluator, Result};
use crate::numkernel::{Matrix, Vector};

/// `h = 1e-6·(1 + ‖x‖∞)`.
pub fn default_step(x: &Vector) -> f64 {
    1e-6 * (1.0 + x.norm_inf())
}

/// Central-difference derivative of `f` with respect to each coordinate of
/// `at`. Entry `k` of the result is `(f(at + h·e_k) − f(at − h·e_k)) / 2h`.
pub fn central_difference<E>(
    f: impl Fn(&[f64]) -> std::result::Result<Vec<f64>, E>,
    at: &[f64],
    h: f64,
) -> std::result::Result<Vec<Vec<f64>>, E> {
    let mut out = Vec::with_capacity(at.len());
    let mut probe = at.to_vec();
    for k in 0..at.len() {
        probe[k] = at[k] + h;
        let plus = f(&probe)?;
        probe[k] = at[k] - h;
        let minus = f(&probe)?;
        probe[k] = at[k];
        out.push(
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect(),
        );
    }
    Ok(out)
}

/// Central-difference approximation of `R_x`, with error `O(h²)`.
pub fn fd_jacobian(r: &dyn ResidualEvaluator, x: &Vector, p: &Vector, h: f64) -> Result<Matrix> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let cols = central_difference(
        |xs| residual_value(r, &Vector::from_vec_unchecked(xs.to_vec()), p).map(Vector::into_vec),
        x.as_slice(),
        h,
    )?;
    let n = r.dims().0;
    Ok(Matrix::from_fn(n, x.len(), |i, j| cols[j][i]))
}
