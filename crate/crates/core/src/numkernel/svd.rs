use super::{Matrix, SINGULARITY_THRESHOLD};

const MAX_SWEEPS: usize = 80;

/// Singular values in descending order, via one-sided (Hestenes) Jacobi
/// rotations on the columns of `M` (or `Mᵀ` when `M` is wide).
///
/// One-sided Jacobi keeps high relative accuracy in the small singular
/// values, which is what the condition number depends on.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let work = if m.rows() >= m.cols() {
        m.clone()
    } else {
        m.transpose()
    };
    let (rows, cols) = work.shape();
    // column-major copy so each column is contiguous
    let mut cs: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| work[(i, j)]).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = cs[p].iter().zip(&cs[q]).fold(
                    (0.0, 0.0, 0.0),
                    |(a, b, g), (x, y)| (a + x * x, b + y * y, g + x * y),
                );
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cs.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = cs
        .iter()
        .map(|c| super::Vector::from_vec_unchecked(c.clone()).norm())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Condition number with an explicit flag for the all-zero matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub kappa: f64,
    /// Set when the matrix is identically zero; `kappa` is then `+inf`.
    pub degenerate: bool,
}

pub fn condition(m: &Matrix) -> Condition {
    if m.is_zero() {
        return Condition {
            kappa: f64::INFINITY,
            degenerate: true,
        };
    }
    Condition {
        kappa: svd_cond(m),
        degenerate: false,
    }
}

/// `σ_max / σ_min` over all `min(rows, cols)` singular values; `+inf` when
/// `σ_min < 1e-14·σ_max` or the matrix is zero.
pub fn svd_cond(m: &Matrix) -> f64 {
    let sv = singular_values(m);
    let max = sv[0];
    let min = sv[sv.len() - 1];
    if max == 0.0 || min < SINGULARITY_THRESHOLD * max {
        return f64::INFINITY;
    }
    max / min
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_identity() {
        assert_eq!(svd_cond(&Matrix::diag(&[10.0, 1.0])), 10.0);
        assert_eq!(svd_cond(&Matrix::identity(4)), 1.0);
        assert_eq!(svd_cond(&Matrix::diag(&[1.0, 1e-6])), 1e6);
        assert_eq!(svd_cond(&Matrix::diag(&[-3.0])), 1.0);
    }

    #[test]
    fn rectangular() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(singular_values(&m), vec![2.0, 1.0]);
        assert_eq!(svd_cond(&m), 2.0);
        assert_eq!(svd_cond(&m.transpose()), 2.0);
    }

    #[test]
    fn zero_and_singular() {
        let z = Matrix::zeros(2, 3);
        assert_eq!(svd_cond(&z), f64::INFINITY);
        assert!(condition(&z).degenerate);
        assert_eq!(spectral_norm(&z), 0.0);
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let c = condition(&s);
        assert_eq!(c.kappa, f64::INFINITY);
        assert!(!c.degenerate);
    }

    #[test]
    fn spectral_norm_examples() {
        assert_eq!(spectral_norm(&Matrix::diag(&[3.0, 1.0])), 3.0);
        let swap = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!((spectral_norm(&swap) - 1.0).abs() < 1e-15);
    }
}
