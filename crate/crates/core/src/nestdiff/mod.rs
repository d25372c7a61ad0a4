//! Nested forward-mode differentiation of residuals and objectives.
//!
//! Residuals `R(x, p)` and objectives `f(x, p)` are written once, generic
//! over [`Scalar`]. Derivative tensors are assembled from seeded passes:
//! one pass per column for Jacobians, one per index pair for second
//! derivatives, one per index triple for third derivatives.

mod fd;
mod scalar;

pub use fd::{central_difference, default_step, fd_jacobian};
pub use scalar::{Dual, Scalar, D1, D2, D3};

use crate::numkernel::{Matrix, Tensor3, Vector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    /// Evaluation left the function's domain (log of a nonpositive value, ...).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expected inputs of length ({n}, {m}), got ({x_len}, {p_len})")]
    InputLength {
        n: usize,
        m: usize,
        x_len: usize,
        p_len: usize,
    },
    #[error("residual returned {got} components, expected {expected}")]
    OutputLength { expected: usize, got: usize },
    #[error("evaluation produced a non-finite value")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// A residual `R: ℝⁿ × ℝᵐ → ℝⁿ` written against a generic scalar.
pub trait Residual: Send + Sync {
    /// `(n, m)`.
    fn dims(&self) -> (usize, usize);
    fn eval<S: Scalar>(&self, x: &[S], p: &[S]) -> Result<Vec<S>>;
}

/// A scalar objective `f: ℝⁿ × ℝᵐ → ℝ` written against a generic scalar.
pub trait Objective: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn eval<S: Scalar>(&self, x: &[S], p: &[S]) -> Result<S>;
}

/// Object-safe view of a [`Residual`] at the nesting depths needed for
/// second-derivative tensors.
pub trait ResidualEvaluator: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn eval_f64(&self, x: &[f64], p: &[f64]) -> Result<Vec<f64>>;
    fn eval_d1(&self, x: &[D1], p: &[D1]) -> Result<Vec<D1>>;
    fn eval_d2(&self, x: &[D2], p: &[D2]) -> Result<Vec<D2>>;
}

impl<T: Residual> ResidualEvaluator for T {
    fn dims(&self) -> (usize, usize) {
        Residual::dims(self)
    }
    fn eval_f64(&self, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        self.eval(x, p)
    }
    fn eval_d1(&self, x: &[D1], p: &[D1]) -> Result<Vec<D1>> {
        self.eval(x, p)
    }
    fn eval_d2(&self, x: &[D2], p: &[D2]) -> Result<Vec<D2>> {
        self.eval(x, p)
    }
}

/// Object-safe view of an [`Objective`] up to third derivatives.
pub trait ObjectiveEvaluator: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn eval_f64(&self, x: &[f64], p: &[f64]) -> Result<f64>;
    fn eval_d1(&self, x: &[D1], p: &[D1]) -> Result<D1>;
    fn eval_d2(&self, x: &[D2], p: &[D2]) -> Result<D2>;
    fn eval_d3(&self, x: &[D3], p: &[D3]) -> Result<D3>;
}

impl<T: Objective> ObjectiveEvaluator for T {
    fn dims(&self) -> (usize, usize) {
        Objective::dims(self)
    }
    fn eval_f64(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        self.eval(x, p)
    }
    fn eval_d1(&self, x: &[D1], p: &[D1]) -> Result<D1> {
        self.eval(x, p)
    }
    fn eval_d2(&self, x: &[D2], p: &[D2]) -> Result<D2> {
        self.eval(x, p)
    }
    fn eval_d3(&self, x: &[D3], p: &[D3]) -> Result<D3> {
        self.eval(x, p)
    }
}

/// A seed direction in the joint `(x, p)` space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    X(usize),
    P(usize),
}

fn seed_of(var: Var, n: usize, m: usize) -> Vec<f64> {
    let mut s = vec![0.0; n + m];
    match var {
        Var::X(j) => s[j] = 1.0,
        Var::P(j) => s[n + j] = 1.0,
    }
    s
}

fn joint(x: &Vector, p: &Vector) -> Vec<f64> {
    x.iter().chain(p.iter()).copied().collect()
}

fn lift1(at: &[f64], u: &[f64]) -> Vec<D1> {
    at.iter().zip(u).map(|(&a, &du)| Dual::new(a, du)).collect()
}

// a + u·ε₁ + v·ε₂
fn lift2(at: &[f64], u: &[f64], v: &[f64]) -> Vec<D2> {
    at.iter()
        .zip(u)
        .zip(v)
        .map(|((&a, &du), &dv)| Dual::new(Dual::new(a, dv), Dual::new(du, 0.0)))
        .collect()
}

// a + u·ε₁ + v·ε₂ + w·ε₃
fn lift3(at: &[f64], u: &[f64], v: &[f64], w: &[f64]) -> Vec<D3> {
    let zero = vec![0.0; at.len()];
    let re = lift2(at, v, w);
    let du = lift2(u, &zero, &zero);
    re.into_iter().zip(du).map(|(r, d)| Dual::new(r, d)).collect()
}

fn check_inputs(dims: (usize, usize), x: &Vector, p: &Vector) -> Result<()> {
    let (n, m) = dims;
    if x.len() != n || p.len() != m {
        return Err(EvalError::InputLength {
            n,
            m,
            x_len: x.len(),
            p_len: p.len(),
        });
    }
    Ok(())
}

fn check_outputs<T>(expected: usize, out: &[T]) -> Result<()> {
    if out.len() != expected {
        return Err(EvalError::OutputLength {
            expected,
            got: out.len(),
        });
    }
    Ok(())
}

fn finite(values: Vec<f64>) -> Result<Vec<f64>> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(values)
    } else {
        Err(EvalError::NonFinite)
    }
}

fn vector(values: Vec<f64>) -> Result<Vector> {
    Vector::new(finite(values)?).map_err(|_| EvalError::NonFinite)
}

// ---------------------------------------------------------------------------
// residuals

pub fn residual_value(r: &dyn ResidualEvaluator, x: &Vector, p: &Vector) -> Result<Vector> {
    check_inputs(r.dims(), x, p)?;
    let out = r.eval_f64(x.as_slice(), p.as_slice())?;
    check_outputs(r.dims().0, &out)?;
    vector(out)
}

fn residual_first(r: &dyn ResidualEvaluator, at: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let (n, _) = r.dims();
    let z = lift1(at, u);
    let (zx, zp) = z.split_at(n);
    let out = r.eval_d1(zx, zp)?;
    check_outputs(n, &out)?;
    finite(out.iter().map(|o| o.du).collect())
}

fn residual_second(r: &dyn ResidualEvaluator, at: &[f64], u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let (n, _) = r.dims();
    let z = lift2(at, u, v);
    let (zx, zp) = z.split_at(n);
    let out = r.eval_d2(zx, zp)?;
    check_outputs(n, &out)?;
    finite(out.iter().map(|o| o.du.du).collect())
}

/// Directional derivative `R_x·ẋ + R_p·ṗ` in a single seeded pass.
pub fn residual_jvp(
    r: &dyn ResidualEvaluator,
    x: &Vector,
    p: &Vector,
    x_dot: &Vector,
    p_dot: &Vector,
) -> Result<Vector> {
    check_inputs(r.dims(), x, p)?;
    check_inputs(r.dims(), x_dot, p_dot)?;
    vector(residual_first(r, &joint(x, p), &joint(x_dot, p_dot))?)
}

fn residual_jacobian(r: &dyn ResidualEvaluator, x: &Vector, p: &Vector, wrt_p: bool) -> Result<Matrix> {
    check_inputs(r.dims(), x, p)?;
    let (n, m) = r.dims();
    let at = joint(x, p);
    let cols = if wrt_p { m } else { n };
    let mut jac = Matrix::zeros(n, cols);
    for j in 0..cols {
        let var = if wrt_p { Var::P(j) } else { Var::X(j) };
        let col = residual_first(r, &at, &seed_of(var, n, m))?;
        for (i, c) in col.into_iter().enumerate() {
            jac[(i, j)] = c;
        }
    }
    Ok(jac)
}

/// `R_x`, `[i][j] = ∂R_i/∂x_j`.
pub fn jacobian_x(r: &dyn ResidualEvaluator, x: &Vector, p: &Vector) -> Result<Matrix> {
    residual_jacobian(r, x, p, false)
}

/// `R_p`, `[i][j] = ∂R_i/∂p_j`.
pub fn jacobian_p(r: &dyn ResidualEvaluator, x: &Vector, p: &Vector) -> Result<Matrix> {
    residual_jacobian(r, x, p, true)
}

/// `R_xx`, `[i][j][k] = ∂²R_i/∂x_j∂x_k`.
pub fn tensor_xx(r: &dyn ResidualEvaluator, x: &Vector, p: &Vector) -> Result<Tensor3> {
    check_inputs(r.dims(), x, p)?;
    let (n, m) = r.dims();
    let at = joint(x, p);
    let mut t = Tensor3::zeros(n, n, n);
    for j in 0..n {
        for k in 0..n {
            let u = seed_of(Var::X(j), n, m);
            let v = seed_of(Var::X(k), n, m);
            for (i, d) in residual_second(r, &at, &u, &v)?.into_iter().enumerate() {
                t[(i, j, k)] = d;
            }
        }
    }
    Ok(t)
}

/// `R_px`, `[i][j][k] = ∂²R_i/∂p_j∂x_k`.
pub fn tensor_px(r: &dyn ResidualEvaluator, x: &Vector, p: &Vector) -> Result<Tensor3> {
    check_inputs(r.dims(), x, p)?;
    let (n, m) = r.dims();
    let at = joint(x, p);
    let mut t = Tensor3::zeros(n, m, n);
    for j in 0..m {
        for k in 0..n {
            let u = seed_of(Var::P(j), n, m);
            let v = seed_of(Var::X(k), n, m);
            for (i, d) in residual_second(r, &at, &u, &v)?.into_iter().enumerate() {
                t[(i, j, k)] = d;
            }
        }
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// objectives

/// All derivatives of an objective needed for tangents, adjoints and their
/// error estimates.
#[derive(Debug, Clone)]
pub struct ObjectiveDerivatives {
    pub grad_x: Vector,
    pub f_xx: Matrix,
    pub f_xp: Matrix,
    pub f_xxx: Tensor3,
    pub f_xpx: Tensor3,
}

pub fn objective_value(f: &dyn ObjectiveEvaluator, x: &Vector, p: &Vector) -> Result<f64> {
    check_inputs(f.dims(), x, p)?;
    let v = f.eval_f64(x.as_slice(), p.as_slice())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

fn objective_first(f: &dyn ObjectiveEvaluator, at: &[f64], u: &[f64]) -> Result<f64> {
    let (n, _) = f.dims();
    let z = lift1(at, u);
    let (zx, zp) = z.split_at(n);
    Ok(f.eval_d1(zx, zp)?.du)
}

fn objective_second(f: &dyn ObjectiveEvaluator, at: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    let (n, _) = f.dims();
    let z = lift2(at, u, v);
    let (zx, zp) = z.split_at(n);
    Ok(f.eval_d2(zx, zp)?.du.du)
}

fn objective_third(
    f: &dyn ObjectiveEvaluator,
    at: &[f64],
    u: &[f64],
    v: &[f64],
    w: &[f64],
) -> Result<f64> {
    let (n, _) = f.dims();
    let z = lift3(at, u, v, w);
    let (zx, zp) = z.split_at(n);
    Ok(f.eval_d3(zx, zp)?.du.du.du)
}

/// `∇ₓf`, which plays the role of the residual for optima.
pub fn gradient_x(f: &dyn ObjectiveEvaluator, x: &Vector, p: &Vector) -> Result<Vector> {
    check_inputs(f.dims(), x, p)?;
    let (n, m) = f.dims();
    let at = joint(x, p);
    let g = (0..n)
        .map(|i| objective_first(f, &at, &seed_of(Var::X(i), n, m)))
        .collect::<Result<Vec<_>>>()?;
    vector(g)
}

fn objective_matrix(f: &dyn ObjectiveEvaluator, x: &Vector, p: &Vector, wrt_p: bool) -> Result<Matrix> {
    check_inputs(f.dims(), x, p)?;
    let (n, m) = f.dims();
    let at = joint(x, p);
    let cols = if wrt_p { m } else { n };
    let mut h = Matrix::zeros(n, cols);
    for i in 0..n {
        for j in 0..cols {
            let v = if wrt_p { Var::P(j) } else { Var::X(j) };
            h[(i, j)] = objective_second(
                f,
                &at,
                &seed_of(Var::X(i), n, m),
                &seed_of(v, n, m),
            )?;
        }
    }
    if h.as_slice().iter().all(|v| v.is_finite()) {
        Ok(h)
    } else {
        Err(EvalError::NonFinite)
    }
}

/// `f_xx`, `[i][j] = ∂²f/∂x_i∂x_j`.
pub fn hessian_xx(f: &dyn ObjectiveEvaluator, x: &Vector, p: &Vector) -> Result<Matrix> {
    objective_matrix(f, x, p, false)
}

/// `f_xp`, `[i][j] = ∂²f/∂x_i∂p_j`.
pub fn hessian_xp(f: &dyn ObjectiveEvaluator, x: &Vector, p: &Vector) -> Result<Matrix> {
    objective_matrix(f, x, p, true)
}

fn objective_tensor(f: &dyn ObjectiveEvaluator, x: &Vector, p: &Vector, middle_p: bool) -> Result<Tensor3> {
    check_inputs(f.dims(), x, p)?;
    let (n, m) = f.dims();
    let at = joint(x, p);
    let d2 = if middle_p { m } else { n };
    let mut t = Tensor3::zeros(n, d2, n);
    for i in 0..n {
        for j in 0..d2 {
            let vj = if middle_p { Var::P(j) } else { Var::X(j) };
            for k in 0..n {
                t[(i, j, k)] = objective_third(
                    f,
                    &at,
                    &seed_of(Var::X(i), n, m),
                    &seed_of(vj, n, m),
                    &seed_of(Var::X(k), n, m),
                )?;
            }
        }
    }
    if t.as_slice().iter().all(|v| v.is_finite()) {
        Ok(t)
    } else {
        Err(EvalError::NonFinite)
    }
}

/// `f_xxx`, `[i][j][k] = ∂³f/∂x_i∂x_j∂x_k`.
pub fn third_xxx(f: &dyn ObjectiveEvaluator, x: &Vector, p: &Vector) -> Result<Tensor3> {
    objective_tensor(f, x, p, false)
}

/// `f_xpx`, `[i][j][k] = ∂³f/∂x_i∂p_j∂x_k`.
pub fn third_xpx(f: &dyn ObjectiveEvaluator, x: &Vector, p: &Vector) -> Result<Tensor3> {
    objective_tensor(f, x, p, true)
}

pub fn objective_derivatives(
    f: &dyn ObjectiveEvaluator,
    x: &Vector,
    p: &Vector,
) -> Result<ObjectiveDerivatives> {
    Ok(ObjectiveDerivatives {
        grad_x: gradient_x(f, x, p)?,
        f_xx: hessian_xx(f, x, p)?,
        f_xp: hessian_xp(f, x, p)?,
        f_xxx: third_xxx(f, x, p)?,
        f_xpx: third_xpx(f, x, p)?,
    })
}

// ---------------------------------------------------------------------------

/// A function whose root defines `x(p)`: either a residual, or the gradient
/// of an objective (first-order optimality), in which case
/// `R := f_x`, `R_x := f_xx`, `R_p := f_xp`, `R_xx := f_xxx`, `R_px := f_xpx`.
#[derive(Clone, Copy)]
pub enum RootFunction<'a> {
    Residual(&'a dyn ResidualEvaluator),
    Gradient(&'a dyn ObjectiveEvaluator),
}

impl<'a> RootFunction<'a> {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            RootFunction::Residual(r) => r.dims(),
            RootFunction::Gradient(f) => f.dims(),
        }
    }

    pub fn value(&self, x: &Vector, p: &Vector) -> Result<Vector> {
        match self {
            RootFunction::Residual(r) => residual_value(*r, x, p),
            RootFunction::Gradient(f) => gradient_x(*f, x, p),
        }
    }

    pub fn jacobian_x(&self, x: &Vector, p: &Vector) -> Result<Matrix> {
        match self {
            RootFunction::Residual(r) => jacobian_x(*r, x, p),
            RootFunction::Gradient(f) => hessian_xx(*f, x, p),
        }
    }

    pub fn jacobian_p(&self, x: &Vector, p: &Vector) -> Result<Matrix> {
        match self {
            RootFunction::Residual(r) => jacobian_p(*r, x, p),
            RootFunction::Gradient(f) => hessian_xp(*f, x, p),
        }
    }

    pub fn tensor_xx(&self, x: &Vector, p: &Vector) -> Result<Tensor3> {
        match self {
            RootFunction::Residual(r) => tensor_xx(*r, x, p),
            RootFunction::Gradient(f) => third_xxx(*f, x, p),
        }
    }

    pub fn tensor_px(&self, x: &Vector, p: &Vector) -> Result<Tensor3> {
        match self {
            RootFunction::Residual(r) => tensor_px(*r, x, p),
            RootFunction::Gradient(f) => third_xpx(*f, x, p),
        }
    }
}
