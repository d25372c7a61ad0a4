//! Dense real linear algebra on small problems.
//!
//! Vectors and matrices are plain row-major `f64` storage. Everything here
//! is a pure function of its inputs.

mod lu;
mod svd;
mod tensor;

pub use lu::LuFactorization;
pub use svd::{condition, singular_values, spectral_norm, svd_cond, Condition};
pub use tensor::{contract_mode1, contract_mode2, Tensor3};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

/// Relative pivot / singular value threshold below which a matrix is
/// treated as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot:e} in column {column})")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry at position {0}")]
    NonFinite(usize),
    #[error("empty vector or matrix")]
    Empty,
    #[error("ragged matrix rows")]
    Ragged,
    #[error("exact value is zero, relative error is undefined")]
    ExactIsZero,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(LinalgError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Dense real vector with at least one entry.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(LinalgError::Empty);
        }
        check_finite(&data)?;
        Ok(Vector(data))
    }

    pub(crate) fn from_vec_unchecked(data: Vec<f64>) -> Self {
        debug_assert!(!data.is_empty());
        Vector(data)
    }

    pub fn zeros(len: usize) -> Self {
        Vector::from_vec_unchecked(vec![0.0; len])
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> f64) -> Self {
        Vector::from_vec_unchecked((0..len).map(f).collect())
    }

    /// Cartesian basis vector `e_k`.
    pub fn unit(len: usize, k: usize) -> Self {
        Vector::from_fn(len, |i| if i == k { 1.0 } else { 0.0 })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        euclidean(&self.0)
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * s).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = LinalgError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for &Vector {
    type Output = Vector;
    fn add(self, rhs: &Vector) -> Vector {
        assert_eq!(self.len(), rhs.len(), "vector length mismatch");
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Vector {
    type Output = Vector;
    fn sub(self, rhs: &Vector) -> Vector {
        assert_eq!(self.len(), rhs.len(), "vector length mismatch");
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        Vector(self.0.iter().map(|v| -v).collect())
    }
}

/// Dense real matrix, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::Ragged);
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Matrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix whose `j`-th column is `columns[j]`.
    pub fn from_columns(columns: &[Vector]) -> Self {
        let rows = columns.first().map_or(0, Vector::len);
        Matrix::from_fn(rows, columns.len(), |i, j| columns[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &Vector) -> Result<Vector> {
        if v.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(Vector::from_fn(self.rows, |i| {
            self.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum()
        }))
    }

    /// `Mᵀ·v` without forming the transpose.
    pub fn tr_mul_vec(&self, v: &Vector) -> Result<Vector> {
        if v.len() != self.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "transpose of {}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * v[i];
            }
        }
        Ok(Vector::from_vec_unchecked(out))
    }

    pub fn mat_mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self[(i, k)] * other[(k, j)]).sum()
        }))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        euclidean(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when every entry is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Cholesky test for positive definiteness of the symmetric part.
    pub fn is_positive_definite(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return false;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = 0.5 * (self[(i, j)] + self[(j, i)]);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        true
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.cols)).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = LinalgError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "matrix shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "matrix shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<&Vector> for &Matrix {
    type Output = Vector;
    fn mul(self, rhs: &Vector) -> Vector {
        self.mul_vec(rhs).expect("matrix-vector dimension mismatch")
    }
}

/// Overflow-safe Euclidean norm.
fn euclidean(data: &[f64]) -> f64 {
    let scale = data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let sum: f64 = data.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * sum.sqrt()
}

/// `u·vᵀ`.
pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    Matrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
}

/// Objects with a norm used for relative errors: 2-norm for vectors,
/// Frobenius norm for matrices.
pub trait ErrorNorm {
    fn error_norm(&self) -> f64;
    fn diff_norm(&self, other: &Self) -> Result<f64>;
}

impl ErrorNorm for Vector {
    fn error_norm(&self) -> f64 {
        self.norm()
    }
    fn diff_norm(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "vectors of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok((self - other).norm())
    }
}

impl ErrorNorm for Matrix {
    fn error_norm(&self) -> f64 {
        self.frobenius_norm()
    }
    fn diff_norm(&self, other: &Self) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch(format!(
                "matrices of shape {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok((self - other).frobenius_norm())
    }
}

/// `‖approx − exact‖ / ‖exact‖`.
pub fn rel_error<T: ErrorNorm>(approx: &T, exact: &T) -> Result<f64> {
    let denom = exact.error_norm();
    if denom == 0.0 {
        return Err(LinalgError::ExactIsZero);
    }
    Ok(approx.diff_norm(exact)? / denom)
}

/// Convenience wrapper around [`LuFactorization`].
pub fn lu_solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    LuFactorization::new(a)?.solve(b)
}

/// Solves `Aᵀ·z = c`.
pub fn lu_solve_transposed(a: &Matrix, c: &Vector) -> Result<Vector> {
    LuFactorization::new(a)?.solve_transposed(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(d: &[f64]) -> Vector {
        Vector::new(d.to_vec()).unwrap()
    }

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn construction_rejects_non_finite_and_empty() {
        assert_eq!(Vector::new(vec![]), Err(LinalgError::Empty));
        assert_eq!(Vector::new(vec![1.0, f64::NAN]), Err(LinalgError::NonFinite(1)));
        assert_eq!(
            Matrix::new(1, 2, vec![f64::INFINITY, 0.0]),
            Err(LinalgError::NonFinite(0))
        );
        assert_eq!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]), Err(LinalgError::Ragged));
    }

    #[test]
    fn lu_solve_examples() {
        let x = lu_solve(&Matrix::diag(&[2.0, 1.0]), &v(&[2.0, 1.0])).unwrap();
        assert_eq!(x, v(&[1.0, 1.0]));

        let x = lu_solve(&Matrix::identity(3), &v(&[5.0, -1.0, 2.0])).unwrap();
        assert_eq!(x, v(&[5.0, -1.0, 2.0]));

        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = v(&[5.0, 6.0]);
        let x = lu_solve(&a, &b).unwrap();
        // oracle: substitute back
        let r = &(&a * &x) - &b;
        assert!(r.norm() <= 1e-12 * b.norm());
        assert!((x[0] + 4.0).abs() < 1e-14 && (x[1] - 4.5).abs() < 1e-14);
    }

    #[test]
    fn lu_solve_transposed_examples() {
        let a = m(&[&[1.0, 2.0], &[0.0, 1.0]]);
        let z = lu_solve_transposed(&a, &v(&[1.0, 1.0])).unwrap();
        let back = a.tr_mul_vec(&z).unwrap();
        assert!((&back - &v(&[1.0, 1.0])).norm() < 1e-14);
        assert!((z[0] - 1.0).abs() < 1e-15 && (z[1] + 1.0).abs() < 1e-15);

        let s = m(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let c = v(&[0.3, -2.0]);
        let z1 = lu_solve(&s, &c).unwrap();
        let z2 = lu_solve_transposed(&s, &c).unwrap();
        assert!((&z1 - &z2).norm() < 1e-15);

        let c = v(&[7.0, -3.0, 0.5]);
        assert_eq!(lu_solve_transposed(&Matrix::identity(3), &c).unwrap(), c);
    }

    #[test]
    fn lu_detects_singularity() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(
            lu_solve(&a, &v(&[1.0, 1.0])),
            Err(LinalgError::SingularMatrix { .. })
        ));
        assert!(matches!(
            LuFactorization::new(&Matrix::zeros(2, 2)),
            Err(LinalgError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn outer_examples() {
        assert_eq!(outer(&v(&[1.0, 2.0]), &v(&[3.0, 4.0])), m(&[&[3.0, 4.0], &[6.0, 8.0]]));
        assert!(outer(&Vector::zeros(2), &v(&[3.0, 4.0])).is_zero());
        assert_eq!(outer(&v(&[-1.0]), &v(&[2.0, 5.0])), m(&[&[-2.0, -5.0]]));
    }

    #[test]
    fn rel_error_examples() {
        let x = v(&[1.0, -2.0, 3.0]);
        assert_eq!(rel_error(&x, &x).unwrap(), 0.0);
        assert!((rel_error(&x.scale(1.01), &x).unwrap() - 0.01).abs() < 1e-15);
        let e = rel_error(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
        assert!((e - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rel_error(&x, &Vector::zeros(3)), Err(LinalgError::ExactIsZero));
        let a = Matrix::identity(2);
        assert!((rel_error(&a.scale(0.9), &a).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn positive_definiteness() {
        assert!(Matrix::diag(&[4.0, 1.0]).is_positive_definite());
        assert!(!Matrix::diag(&[4.0, 0.0]).is_positive_definite());
        assert!(!m(&[&[1.0, 2.0], &[2.0, 1.0]]).is_positive_definite());
    }

    #[test]
    fn serde_nested_arrays() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.0]]");
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<Matrix>("[[1.0],[2.0,3.0]]").is_err());
        assert!(serde_json::from_str::<Vector>("[]").is_err());
    }
}
