use super::{LinalgError, Matrix, Result, Vector};
use std::fmt;
use std::ops::{Index, IndexMut};

/// Dense rank-3 tensor indexed `[i][j][k]`, stored with `k` fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d1: usize, d2: usize, d3: usize) -> Self {
        Tensor3 {
            dims: (d1, d2, d3),
            data: vec![0.0; d1 * d2 * d3],
        }
    }

    pub fn from_fn(
        (d1, d2, d3): (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(d1 * d2 * d3);
        for i in 0..d1 {
            for j in 0..d2 {
                for k in 0..d3 {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3 {
            dims: (d1, d2, d3),
            data,
        }
    }

    pub fn new(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        if dims.0 * dims.1 * dims.2 == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != dims.0 * dims.1 * dims.2 {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {:?} tensor",
                data.len(),
                dims
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite(i));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The `d2 × d3` slice at fixed first index.
    pub fn slice(&self, i: usize) -> Matrix {
        let (_, d2, d3) = self.dims;
        Matrix::from_fn(d2, d3, |j, k| self[(i, j, k)])
    }

    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        let (d1, d2, d3) = self.dims;
        debug_assert!(i < d1 && j < d2 && k < d3);
        (i * d2 + j) * d3 + k
    }
}

impl fmt::Debug for Tensor3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let slices: Vec<Matrix> = (0..self.dims.0).map(|i| self.slice(i)).collect();
        f.debug_list().entries(&slices).finish()
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.data[self.offset(i, j, k)]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut f64 {
        let o = self.offset(i, j, k);
        &mut self.data[o]
    }
}

/// `out[i][k] = Σ_j T[i][j][k]·w[j]`.
pub fn contract_mode2(t: &Tensor3, w: &Vector) -> Result<Matrix> {
    let (d1, d2, d3) = t.dims();
    if w.len() != d2 {
        return Err(LinalgError::DimensionMismatch(format!(
            "mode-2 contraction of a {:?} tensor with a vector of length {}",
            t.dims(),
            w.len()
        )));
    }
    let mut out = Matrix::zeros(d1, d3);
    for i in 0..d1 {
        for j in 0..d2 {
            let wj = w[j];
            for k in 0..d3 {
                out[(i, k)] += t[(i, j, k)] * wj;
            }
        }
    }
    Ok(out)
}

/// `out[j][k] = Σ_i T[i][j][k]·z[i]`.
pub fn contract_mode1(t: &Tensor3, z: &Vector) -> Result<Matrix> {
    let (d1, d2, d3) = t.dims();
    if z.len() != d1 {
        return Err(LinalgError::DimensionMismatch(format!(
            "mode-1 contraction of a {:?} tensor with a vector of length {}",
            t.dims(),
            z.len()
        )));
    }
    let mut out = Matrix::zeros(d2, d3);
    for i in 0..d1 {
        let zi = z[i];
        for j in 0..d2 {
            for k in 0..d3 {
                out[(j, k)] += t[(i, j, k)] * zi;
            }
        }
    }
    Ok(out)
}
