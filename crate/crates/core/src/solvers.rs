//! Primal solvers with controllable accuracy and the error injector.

use crate::nestdiff::{EvalError, RootFunction};
use crate::numkernel::{LinalgError, LuFactorization, Matrix, Vector};
use crate::problems::{ProblemKind, ProblemSpec, Reference};
use crate::seeding;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("Jacobian became singular at iteration {iteration}: {source}")]
    SingularJacobian {
        iteration: usize,
        source: LinalgError,
    },
    #[error("no convergence after {} iterations (residual {:e})", .best.iterations, .best.residual_norm)]
    NotConverged { best: Box<SolveResult> },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("solver expects a {expected} problem, '{name}' is a {got}")]
    WrongKind {
        name: String,
        expected: ProblemKind,
        got: ProblemKind,
    },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("cannot perturb a zero primal solution relatively")]
    ZeroPrimal,
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
}

pub type Result<T> = std::result::Result<T, SolveError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverWarning {
    /// `f_xx` had an eigenvalue ≤ 0 at this iterate; a plain Newton step
    /// was taken anyway.
    NonPositiveDefiniteHessian { iteration: usize },
}

/// Approximate primal solution `x̂ = x + Δx`.
#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub x_hat: Vector,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    pub tolerance_used: f64,
    /// Residual norm at every iterate, starting with `x0`.
    pub residual_history: Vec<f64>,
    pub warnings: Vec<SolverWarning>,
}

/// Direct LU solve of `A·x = b`.
pub fn solve_linear(a: &Matrix, b: &Vector) -> Result<SolveResult> {
    let x = LuFactorization::new(a)?.solve(b)?;
    let r = (&(a * &x) - b).norm();
    Ok(SolveResult {
        x_hat: x,
        iterations: 1,
        residual_norm: r,
        converged: true,
        tolerance_used: r,
        residual_history: vec![r],
        warnings: Vec::new(),
    })
}

enum Stop {
    // ‖R‖ ≤ tol·(1 + ‖R(x0)‖)
    Relative,
    // ‖R‖ ≤ tol
    Absolute,
}

fn newton_iterate(
    root: RootFunction<'_>,
    p: &Vector,
    x0: &Vector,
    tol: f64,
    max_iter: usize,
    stop: Stop,
    check_convexity: bool,
) -> Result<SolveResult> {
    if !(tol > 0.0) {
        return Err(SolveError::InvalidTolerance(tol));
    }
    let mut x = x0.clone();
    let mut r = root.value(&x, p)?;
    let threshold = match stop {
        Stop::Relative => tol * (1.0 + r.norm()),
        Stop::Absolute => tol,
    };
    let mut history = vec![r.norm()];
    let mut warnings = Vec::new();
    let mut best = (x.clone(), r.norm());
    let mut iterations = 0;

    while r.norm() > threshold {
        if iterations == max_iter {
            return Err(SolveError::NotConverged {
                best: Box::new(SolveResult {
                    x_hat: best.0,
                    iterations,
                    residual_norm: best.1,
                    converged: false,
                    tolerance_used: threshold,
                    residual_history: history,
                    warnings,
                }),
            });
        }
        let jac = root.jacobian_x(&x, p)?;
        if check_convexity && !jac.is_positive_definite() {
            warnings.push(SolverWarning::NonPositiveDefiniteHessian {
                iteration: iterations,
            });
        }
        let step = LuFactorization::new(&jac)
            .and_then(|lu| lu.solve(&r))
            .map_err(|source| SolveError::SingularJacobian {
                iteration: iterations,
                source,
            })?;
        x = &x - &step;
        r = root.value(&x, p)?;
        iterations += 1;
        history.push(r.norm());
        if r.norm() < best.1 {
            best = (x.clone(), r.norm());
        }
    }

    Ok(SolveResult {
        residual_norm: r.norm(),
        x_hat: x,
        iterations,
        converged: true,
        tolerance_used: threshold,
        residual_history: history,
        warnings,
    })
}

/// Plain Newton on `R(x, p) = 0`: `x ← x − R_x⁻¹·R(x, p)` until
/// `‖R‖₂ ≤ tol·(1 + ‖R(x0, p)‖₂)`.
pub fn newton(
    problem: &ProblemSpec,
    p: &Vector,
    x0: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<SolveResult> {
    let residual = problem.residual().ok_or_else(|| SolveError::WrongKind {
        name: problem.name.clone(),
        expected: ProblemKind::NonlinearSystem,
        got: problem.kind,
    })?;
    newton_iterate(
        RootFunction::Residual(residual),
        p,
        x0,
        tol,
        max_iter,
        Stop::Relative,
        false,
    )
}

/// Newton on `∇ₓf = 0` with `f_xx` as Jacobian, stopping on `‖∇ₓf‖₂ ≤ tol`.
///
/// Iterates where `f_xx` is not positive definite are recorded in
/// `warnings`.
pub fn minimize_convex(
    problem: &ProblemSpec,
    p: &Vector,
    x0: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<SolveResult> {
    let objective = problem.objective().ok_or_else(|| SolveError::WrongKind {
        name: problem.name.clone(),
        expected: ProblemKind::ConvexObjective,
        got: problem.kind,
    })?;
    newton_iterate(
        RootFunction::Gradient(objective),
        p,
        x0,
        tol,
        max_iter,
        Stop::Absolute,
        true,
    )
}

/// Accuracy settings for computing exact reference solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        ReferenceSettings {
            tol: 1e-13,
            max_iter: 50,
        }
    }
}

/// High-accuracy `x(p)`: closed form when available, otherwise a direct
/// solve or Newton refinement from `start` (default: the problem's `x0`).
pub fn reference_solution_from(
    problem: &ProblemSpec,
    p: &Vector,
    start: Option<&Vector>,
    settings: ReferenceSettings,
) -> Result<Vector> {
    match problem.reference {
        Reference::ClosedForm(f) => Ok(f(p)),
        Reference::LinearSolve => {
            let lin = problem
                .linear_data()
                .expect("linear reference implies linear data");
            Ok(lin.solve(p)?)
        }
        Reference::Newton => {
            let x0 = start.unwrap_or(&problem.default_x0);
            let result = match problem.kind {
                ProblemKind::ConvexObjective => {
                    minimize_convex(problem, p, x0, settings.tol, settings.max_iter)?
                }
                _ => newton(problem, p, x0, settings.tol, settings.max_iter)?,
            };
            Ok(result.x_hat)
        }
    }
}

pub fn reference_solution(problem: &ProblemSpec, p: &Vector, settings: ReferenceSettings) -> Result<Vector> {
    reference_solution_from(problem, p, None, settings)
}

/// Direction of an injected primal error.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Direction {
    UnitAxis { index: usize },
    Random { seed: u64 },
    Given { direction: Vector },
}

impl Direction {
    /// Short label used in reports: `axis:k`, `random:<seed>`, `given`.
    pub fn label(&self) -> String {
        match self {
            Direction::UnitAxis { index } => format!("axis:{index}"),
            Direction::Random { seed } => format!("random:{seed}"),
            Direction::Given { .. } => "given".to_string(),
        }
    }

    /// The unit vector `d̂` in `ℝⁿ`.
    pub fn unit(&self, n: usize) -> Result<Vector> {
        match self {
            Direction::UnitAxis { index } if *index < n => Ok(Vector::unit(n, *index)),
            Direction::UnitAxis { index } => Err(SolveError::InvalidPerturbation(format!(
                "axis {index} out of range for dimension {n}"
            ))),
            Direction::Random { seed } => Ok(seeding::unit_vector(n, *seed)),
            Direction::Given { direction } => {
                if direction.len() != n {
                    return Err(SolveError::InvalidPerturbation(format!(
                        "direction of length {} for dimension {n}",
                        direction.len()
                    )));
                }
                let norm = direction.norm();
                if norm == 0.0 {
                    return Err(SolveError::InvalidPerturbation("zero direction".into()));
                }
                Ok(direction.scale(1.0 / norm))
            }
        }
    }
}

/// Relative primal error `ε = ‖Δx‖/‖x‖` injected along `direction`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    pub direction: Direction,
}

/// `x + ε·‖x‖₂·d̂`.
pub fn perturb(x_exact: &Vector, spec: &PerturbationSpec) -> Result<Vector> {
    if !(spec.epsilon >= 0.0) || !spec.epsilon.is_finite() {
        return Err(SolveError::InvalidPerturbation(format!(
            "epsilon must be finite and nonnegative, got {}",
            spec.epsilon
        )));
    }
    let norm = x_exact.norm();
    if norm == 0.0 {
        return Err(SolveError::ZeroPrimal);
    }
    let d = spec.direction.unit(x_exact.len())?;
    Ok(x_exact + &d.scale(spec.epsilon * norm))
}
