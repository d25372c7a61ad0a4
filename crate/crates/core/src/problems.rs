//! Residual and objective problems, and the built-in desk-scale suite.

use crate::nestdiff::{
    self, EvalError, Objective, ObjectiveEvaluator, Residual, ResidualEvaluator, RootFunction,
    Scalar,
};
use crate::numkernel::{self, LinalgError, Matrix, Vector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    #[error("duplicate problem name '{0}'")]
    Duplicate(String),
    #[error("invalid problem definition: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("cannot read problem file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse problem file {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    LinearSystem,
    NonlinearSystem,
    ConvexObjective,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::LinearSystem => "linear_system",
            ProblemKind::NonlinearSystem => "nonlinear_system",
            ProblemKind::ConvexObjective => "convex_objective",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `A(p)·x = b(p)` with `A(p) = A₀ + Σⱼ pⱼ·Aⱼ` and `b(p) = b₀ + B·p`.
#[derive(Debug, Clone)]
pub struct LinearSystemData {
    a0: Matrix,
    // one n×n matrix per parameter; empty when A does not depend on p
    a_param: Vec<Matrix>,
    b0: Vector,
    b_param: Matrix,
}

impl LinearSystemData {
    pub fn new(a0: Matrix, a_param: Vec<Matrix>, b0: Vector, b_param: Matrix) -> Result<Self, ProblemError> {
        let n = a0.rows();
        if !a0.is_square() {
            return Err(ProblemError::Invalid(format!(
                "A must be square, got {:?}",
                a0.shape()
            )));
        }
        if b0.len() != n || b_param.rows() != n {
            return Err(ProblemError::Invalid(format!(
                "b has length {} and B has {} rows for a {n}x{n} system",
                b0.len(),
                b_param.rows()
            )));
        }
        let m = b_param.cols();
        if !a_param.is_empty() && a_param.len() != m {
            return Err(ProblemError::Invalid(format!(
                "{} parameter matrices for {m} parameters",
                a_param.len()
            )));
        }
        if a_param.iter().any(|a| a.shape() != (n, n)) {
            return Err(ProblemError::Invalid("parameter matrices must be n x n".into()));
        }
        Ok(LinearSystemData {
            a0,
            a_param,
            b0,
            b_param,
        })
    }

    /// Constant `A`, parameters are the right-hand side itself (`b(p) = p`).
    pub fn with_rhs_parameters(a: Matrix) -> Result<Self, ProblemError> {
        let n = a.rows();
        LinearSystemData::new(a, Vec::new(), Vector::zeros(n), Matrix::identity(n))
    }

    pub fn n(&self) -> usize {
        self.a0.rows()
    }

    pub fn m(&self) -> usize {
        self.b_param.cols()
    }

    /// Whether `A` varies with `p`.
    pub fn matrix_depends_on_p(&self) -> bool {
        self.a_param.iter().any(|a| !a.is_zero())
    }

    pub fn a(&self, p: &Vector) -> Matrix {
        self.a_param
            .iter()
            .zip(p.iter())
            .fold(self.a0.clone(), |acc, (aj, &pj)| &acc + &aj.scale(pj))
    }

    pub fn b(&self, p: &Vector) -> Vector {
        &self.b0 + &(&self.b_param * p)
    }

    /// `Ȧ = Σⱼ ṗⱼ·Aⱼ`.
    pub fn a_dot(&self, p_dot: &Vector) -> Matrix {
        self.a_param
            .iter()
            .zip(p_dot.iter())
            .fold(Matrix::zeros(self.n(), self.n()), |acc, (aj, &d)| &acc + &aj.scale(d))
    }

    /// `ḃ = B·ṗ`.
    pub fn b_dot(&self, p_dot: &Vector) -> Vector {
        &self.b_param * p_dot
    }

    pub fn solve(&self, p: &Vector) -> Result<Vector, LinalgError> {
        numkernel::lu_solve(&self.a(p), &self.b(p))
    }
}

impl Residual for LinearSystemData {
    fn dims(&self) -> (usize, usize) {
        (self.n(), self.m())
    }

    fn eval<S: Scalar>(&self, x: &[S], p: &[S]) -> nestdiff::Result<Vec<S>> {
        let (n, m) = (self.n(), self.m());
        let out = (0..n)
            .map(|i| {
                let mut r = S::from_f64(0.0);
                for j in 0..n {
                    let mut aij = S::from_f64(self.a0[(i, j)]);
                    for (l, al) in self.a_param.iter().enumerate() {
                        if al[(i, j)] != 0.0 {
                            aij = aij + p[l].clone() * al[(i, j)];
                        }
                    }
                    r = r + aij * x[j].clone();
                }
                let mut bi = S::from_f64(self.b0[i]);
                for l in 0..m {
                    if self.b_param[(i, l)] != 0.0 {
                        bi = bi + p[l].clone() * self.b_param[(i, l)];
                    }
                }
                r - bi
            })
            .collect();
        Ok(out)
    }
}

#[derive(Clone)]
enum Model {
    Linear(Arc<LinearSystemData>),
    Residual(Arc<dyn ResidualEvaluator>),
    Objective(Arc<dyn ObjectiveEvaluator>),
}

/// How the exact primal solution `x(p)` is obtained.
#[derive(Clone, Copy)]
pub enum Reference {
    ClosedForm(fn(&Vector) -> Vector),
    /// Direct LU solve of a linear system.
    LinearSolve,
    /// Newton refinement from `default_x0` (or a caller-supplied start).
    Newton,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub kind: ProblemKind,
    pub description: String,
    pub default_p: Vector,
    pub default_x0: Vector,
    pub reference: Reference,
    model: Model,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("dims", &self.dims())
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn linear(
        name: &str,
        description: &str,
        data: LinearSystemData,
        default_p: Vector,
    ) -> Result<Self, ProblemError> {
        if default_p.len() != data.m() {
            return Err(ProblemError::Invalid(format!(
                "default p has length {}, expected {}",
                default_p.len(),
                data.m()
            )));
        }
        let kappa = numkernel::svd_cond(&data.a(&default_p));
        if !kappa.is_finite() {
            return Err(ProblemError::Invalid(format!(
                "{name}: A is singular at the default parameter"
            )));
        }
        Ok(ProblemSpec {
            name: name.to_string(),
            kind: ProblemKind::LinearSystem,
            description: description.to_string(),
            default_x0: Vector::zeros(data.n()),
            default_p,
            reference: Reference::LinearSolve,
            model: Model::Linear(Arc::new(data)),
        })
    }

    pub fn nonlinear(
        name: &str,
        description: &str,
        residual: Arc<dyn ResidualEvaluator>,
        default_p: Vector,
        default_x0: Vector,
        reference: Reference,
    ) -> Self {
        ProblemSpec {
            name: name.to_string(),
            kind: ProblemKind::NonlinearSystem,
            description: description.to_string(),
            default_p,
            default_x0,
            reference,
            model: Model::Residual(residual),
        }
    }

    pub fn convex(
        name: &str,
        description: &str,
        objective: Arc<dyn ObjectiveEvaluator>,
        default_p: Vector,
        default_x0: Vector,
        reference: Reference,
    ) -> Self {
        ProblemSpec {
            name: name.to_string(),
            kind: ProblemKind::ConvexObjective,
            description: description.to_string(),
            default_p,
            default_x0,
            reference,
            model: Model::Objective(objective),
        }
    }

    /// `(n, m)`.
    pub fn dims(&self) -> (usize, usize) {
        match &self.model {
            Model::Linear(l) => (l.n(), l.m()),
            Model::Residual(r) => r.dims(),
            Model::Objective(f) => f.dims(),
        }
    }

    pub fn linear_data(&self) -> Option<&LinearSystemData> {
        match &self.model {
            Model::Linear(l) => Some(l),
            _ => None,
        }
    }

    /// The residual, for linear and nonlinear systems.
    pub fn residual(&self) -> Option<&dyn ResidualEvaluator> {
        match &self.model {
            Model::Linear(l) => Some(l.as_ref()),
            Model::Residual(r) => Some(r.as_ref()),
            Model::Objective(_) => None,
        }
    }

    pub fn objective(&self) -> Option<&dyn ObjectiveEvaluator> {
        match &self.model {
            Model::Objective(f) => Some(f.as_ref()),
            _ => None,
        }
    }

    /// The function whose root is the primal solution: `R`, or `f_x` for
    /// objectives.
    pub fn root_function(&self) -> RootFunction<'_> {
        match &self.model {
            Model::Linear(l) => RootFunction::Residual(l.as_ref()),
            Model::Residual(r) => RootFunction::Residual(r.as_ref()),
            Model::Objective(f) => RootFunction::Gradient(f.as_ref()),
        }
    }

    pub fn info(&self) -> ProblemInfo {
        let (n, m) = self.dims();
        ProblemInfo {
            name: self.name.clone(),
            kind: self.kind,
            n,
            m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProblemInfo {
    pub name: String,
    pub kind: ProblemKind,
    pub n: usize,
    pub m: usize,
}

// ---------------------------------------------------------------------------
// built-in problems

/// `R(x, p) = x² − p`.
pub struct Sqrt1d;

impl Residual for Sqrt1d {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }
    fn eval<S: Scalar>(&self, x: &[S], p: &[S]) -> nestdiff::Result<Vec<S>> {
        Ok(vec![x[0].clone() * x[0].clone() - p[0].clone()])
    }
}

/// `R(x, p) = (x₁ + x₂³ − p₁, x₁·x₂ − p₂)`.
pub struct Nl2d;

impl Residual for Nl2d {
    fn dims(&self) -> (usize, usize) {
        (2, 2)
    }
    fn eval<S: Scalar>(&self, x: &[S], p: &[S]) -> nestdiff::Result<Vec<S>> {
        Ok(vec![
            x[0].clone() + x[1].powi(3) - p[0].clone(),
            x[0].clone() * x[1].clone() - p[1].clone(),
        ])
    }
}

/// `f(x, p) = ½·xᵀ·diag(d)·x − pᵀ·x`.
pub struct DiagonalQuadratic {
    pub diag: Vec<f64>,
}

impl Objective for DiagonalQuadratic {
    fn dims(&self) -> (usize, usize) {
        (self.diag.len(), self.diag.len())
    }
    fn eval<S: Scalar>(&self, x: &[S], p: &[S]) -> nestdiff::Result<S> {
        let mut f = S::from_f64(0.0);
        for (i, &d) in self.diag.iter().enumerate() {
            f = f + x[i].clone() * x[i].clone() * (0.5 * d) - p[i].clone() * x[i].clone();
        }
        Ok(f)
    }
}

/// `f(x, p) = eˣ − p·x`.
pub struct ExpLog1d;

impl Objective for ExpLog1d {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }
    fn eval<S: Scalar>(&self, x: &[S], p: &[S]) -> nestdiff::Result<S> {
        if !x[0].value().is_finite() {
            return Err(EvalError::NonFinite);
        }
        Ok(x[0].exp() - p[0].clone() * x[0].clone())
    }
}

fn vec_of(v: &[f64]) -> Vector {
    Vector::new(v.to_vec()).expect("built-in vectors are finite and nonempty")
}

fn sqrt_reference(p: &Vector) -> Vector {
    Vector::from_fn(1, |_| p[0].sqrt())
}

fn quad_reference(p: &Vector) -> Vector {
    Vector::from_fn(2, |i| p[i] / QUAD_DIAG[i])
}

fn explog_reference(p: &Vector) -> Vector {
    Vector::from_fn(1, |_| p[0].ln())
}

const QUAD_DIAG: [f64; 2] = [4.0, 1.0];

fn builtin_specs() -> Vec<ProblemSpec> {
    let linsys_diag = LinearSystemData::with_rhs_parameters(Matrix::diag(&[4.0, 1.0]))
        .expect("valid linear system");
    let linsys_illcond = LinearSystemData::with_rhs_parameters(Matrix::diag(&[1.0, 1e-6]))
        .expect("valid linear system");
    // A(p) = [[2 + p₁, 1], [1, 3 + p₂]],  b(p) = [1 + p₁, 2 − p₂]
    let linsys_param = LinearSystemData::new(
        Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).expect("finite"),
        vec![Matrix::diag(&[1.0, 0.0]), Matrix::diag(&[0.0, 1.0])],
        vec_of(&[1.0, 2.0]),
        Matrix::diag(&[1.0, -1.0]),
    )
    .expect("valid linear system");

    vec![
        ProblemSpec::linear(
            "linsys_diag",
            "A = diag(4, 1), b(p) = p; kappa(A) = 4",
            linsys_diag,
            vec_of(&[4.0, 1.0]),
        )
        .expect("regular"),
        // x = e₁ lies along the well-conditioned direction, so errors along e₂
        // are amplified by the full κ(A) in the tangent
        ProblemSpec::linear(
            "linsys_illcond",
            "A = diag(1, 1e-6), b(p) = p; kappa(A) = 1e6",
            linsys_illcond,
            vec_of(&[1.0, 0.0]),
        )
        .expect("regular"),
        ProblemSpec::linear(
            "linsys_param",
            "A(p) = [[2+p1, 1], [1, 3+p2]], b(p) = [1+p1, 2-p2]",
            linsys_param,
            vec_of(&[1.0, 1.0]),
        )
        .expect("regular"),
        ProblemSpec::nonlinear(
            "sqrt1d",
            "R(x, p) = x^2 - p; x(p) = sqrt(p)",
            Arc::new(Sqrt1d),
            vec_of(&[4.0]),
            vec_of(&[3.0]),
            Reference::ClosedForm(sqrt_reference),
        ),
        // root (1, 2) at the default p; x0 is inside its Newton basin
        ProblemSpec::nonlinear(
            "nl2d",
            "R(x, p) = (x1 + x2^3 - p1, x1*x2 - p2)",
            Arc::new(Nl2d),
            vec_of(&[9.0, 2.0]),
            vec_of(&[1.2, 1.9]),
            Reference::Newton,
        ),
        ProblemSpec::convex(
            "quad_nd",
            "f(x, p) = 1/2 x^T diag(4, 1) x - p^T x; x(p) = A^-1 p",
            Arc::new(DiagonalQuadratic {
                diag: QUAD_DIAG.to_vec(),
            }),
            vec_of(&[1.0, 1.0]),
            vec_of(&[0.0, 0.0]),
            Reference::ClosedForm(quad_reference),
        ),
        ProblemSpec::convex(
            "explog1d",
            "f(x, p) = exp(x) - p*x; x(p) = ln(p)",
            Arc::new(ExpLog1d),
            vec_of(&[std::f64::consts::E]),
            vec_of(&[0.5]),
            Reference::ClosedForm(explog_reference),
        ),
    ]
}

// ---------------------------------------------------------------------------
// registry

/// Read-only collection of named problems.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    problems: BTreeMap<String, Arc<ProblemSpec>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// The built-in suite.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        for spec in builtin_specs() {
            r.register(spec).expect("built-in names are unique");
        }
        r
    }

    pub fn register(&mut self, spec: ProblemSpec) -> Result<(), ProblemError> {
        if self.problems.contains_key(&spec.name) {
            return Err(ProblemError::Duplicate(spec.name));
        }
        self.problems.insert(spec.name.clone(), Arc::new(spec));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<ProblemSpec>, ProblemError> {
        self.problems
            .get(name)
            .cloned()
            .ok_or_else(|| ProblemError::UnknownProblem(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.problems.contains_key(name)
    }

    /// Alphabetical listing.
    pub fn list(&self) -> Vec<ProblemInfo> {
        self.problems.values().map(|p| p.info()).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.problems.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<ProblemSpec>> {
        self.problems.values()
    }
}

/// On-disk description of a linear system problem.
///
/// Without `a_param`/`b_param` the parameters are the right-hand side:
/// `b(p) = p` with default `p = b`. Otherwise `b` is `b₀`, `a_param` lists
/// one matrix per parameter and `p` gives the default parameter.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearProblemFile {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub a: Matrix,
    pub b: Vector,
    #[serde(default)]
    pub a_param: Option<Vec<Matrix>>,
    #[serde(default)]
    pub b_param: Option<Matrix>,
    #[serde(default)]
    pub p: Option<Vector>,
}

impl LinearProblemFile {
    pub fn into_spec(self) -> Result<ProblemSpec, ProblemError> {
        if self.name.is_empty() {
            return Err(ProblemError::Invalid("empty problem name".into()));
        }
        let description = self
            .description
            .unwrap_or_else(|| "linear system loaded from file".to_string());
        let (data, default_p) = match (self.a_param, self.b_param) {
            (None, None) => {
                if let Some(p) = self.p {
                    if p != self.b {
                        return Err(ProblemError::Invalid(
                            "'p' must equal 'b' when the parameters are the right-hand side".into(),
                        ));
                    }
                }
                (LinearSystemData::with_rhs_parameters(self.a)?, self.b)
            }
            (a_param, b_param) => {
                let n = self.a.rows();
                let m = match (&a_param, &b_param) {
                    (_, Some(bp)) => bp.cols(),
                    (Some(ap), None) => ap.len(),
                    (None, None) => unreachable!(),
                };
                let p = self.p.ok_or_else(|| {
                    ProblemError::Invalid("parameterized systems need a default 'p'".into())
                })?;
                let data = LinearSystemData::new(
                    self.a,
                    a_param.unwrap_or_default(),
                    self.b,
                    b_param.unwrap_or_else(|| Matrix::zeros(n, m)),
                )?;
                (data, p)
            }
        };
        ProblemSpec::linear(&self.name, &description, data, default_p)
    }
}

pub fn load_linear_problem(path: &Path) -> Result<ProblemSpec, ProblemError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
        path: display.clone(),
        source,
    })?;
    let file: LinearProblemFile =
        serde_json::from_str(&text).map_err(|source| ProblemError::Json {
            path: display,
            source,
        })?;
    file.into_spec()
}
