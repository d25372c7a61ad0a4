use super::{LinalgError, Matrix, Result, Vector, SINGULARITY_THRESHOLD};

/// LU factorization with partial pivoting, `P·A = L·U`.
///
/// `L` is unit lower triangular and shares storage with `U`. The same
/// factorization serves both `A·x = b` and `Aᵀ·z = c`.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    n: usize,
    lu: Vec<f64>,
    // row i of P·A is row perm[i] of A
    perm: Vec<usize>,
}

impl LuFactorization {
    /// Fails with `SingularMatrix` when a pivot falls below
    /// `1e-14 · max|A|`.
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch(format!(
                "LU of a non-square {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let threshold = SINGULARITY_THRESHOLD * a.max_abs();
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot == 0.0 || pivot < threshold {
                return Err(LinalgError::SingularMatrix { column: k, pivot });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let l = lu[i * n + k] / d;
                lu[i * n + k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= l * lu[k * n + j];
                    }
                }
            }
        }
        Ok(LuFactorization { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn check_len(&self, v: &Vector) -> Result<()> {
        if v.len() != self.n {
            return Err(LinalgError::DimensionMismatch(format!(
                "right-hand side of length {} for a {}x{} system",
                v.len(),
                self.n,
                self.n
            )));
        }
        Ok(())
    }

    /// Solves `A·x = b`.
    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        self.check_len(b)?;
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * y[j]).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * y[j]).sum();
            y[i] = (y[i] - s) / self.lu[i * n + i];
        }
        Ok(Vector::from_vec_unchecked(y))
    }

    /// Solves `Aᵀ·z = c` as `Uᵀ·Lᵀ·(P·z) = c`.
    pub fn solve_transposed(&self, c: &Vector) -> Result<Vector> {
        self.check_len(c)?;
        let n = self.n;
        let mut w = c.as_slice().to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[j * n + i] * w[j]).sum();
            w[i] = (w[i] - s) / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[j * n + i] * w[j]).sum();
            w[i] -= s;
        }
        let mut z = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            z[p] = w[i];
        }
        Ok(Vector::from_vec_unchecked(z))
    }
}
