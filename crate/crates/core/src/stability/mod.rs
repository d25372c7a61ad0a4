//! First-order predictors for the relative error that a primal error `δx`
//! induces in tangents and adjoints, and the harness that compares them
//! against injected-error experiments.

mod experiment;
mod report;

pub use experiment::{
    fit_slope, observe, run_cells, standard_directions, sweep, CellOutcome, ExperimentCell, Observation, SlopeFit,
    SlopeOutcome,
};
pub(crate) use experiment::validate_epsilons;
pub use report::{format_real, Kappas, ReportRow, RowStatus, StabilityReport, CSV_HEADER};

use crate::implicit::ImplicitError;
use crate::nestdiff::{EvalError, ObjectiveEvaluator, ResidualEvaluator, RootFunction};
use crate::numkernel::{self, condition, contract_mode1, contract_mode2, LinalgError, Matrix, Vector};
use crate::problems::{ProblemKind, ProblemSpec};
use crate::solvers::SolveError;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum StabilityError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Implicit(#[from] ImplicitError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("quantity {quantity} does not apply to {kind} problem '{problem}'")]
    NotApplicable {
        problem: String,
        kind: ProblemKind,
        quantity: Quantity,
    },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("insufficient data for a slope fit of {problem}/{quantity} ({direction}): {usable} usable rows, need 3")]
    InsufficientData {
        problem: String,
        quantity: Quantity,
        direction: String,
        usable: usize,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, StabilityError>;

/// Derivative quantity whose error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    TangentLinear,
    AdjointLinear,
    TangentNonlinear,
    AdjointNonlinear,
    TangentOptimum,
    AdjointOptimum,
}

impl Quantity {
    pub const ALL: [Quantity; 6] = [
        Quantity::TangentLinear,
        Quantity::AdjointLinear,
        Quantity::TangentNonlinear,
        Quantity::AdjointNonlinear,
        Quantity::TangentOptimum,
        Quantity::AdjointOptimum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::TangentLinear => "tangent_linear",
            Quantity::AdjointLinear => "adjoint_linear",
            Quantity::TangentNonlinear => "tangent_nonlinear",
            Quantity::AdjointNonlinear => "adjoint_nonlinear",
            Quantity::TangentOptimum => "tangent_optimum",
            Quantity::AdjointOptimum => "adjoint_optimum",
        }
    }

    pub fn parse(s: &str) -> Option<Quantity> {
        Quantity::ALL.into_iter().find(|q| q.as_str() == s)
    }

    pub fn is_tangent(self) -> bool {
        matches!(
            self,
            Quantity::TangentLinear | Quantity::TangentNonlinear | Quantity::TangentOptimum
        )
    }

    /// The two quantities native to a problem kind.
    pub fn native(kind: ProblemKind) -> [Quantity; 2] {
        match kind {
            ProblemKind::LinearSystem => [Quantity::TangentLinear, Quantity::AdjointLinear],
            ProblemKind::NonlinearSystem => [Quantity::TangentNonlinear, Quantity::AdjointNonlinear],
            ProblemKind::ConvexObjective => [Quantity::TangentOptimum, Quantity::AdjointOptimum],
        }
    }

    /// Linear systems are also residual problems, so the nonlinear
    /// quantities apply to them as well.
    pub fn applies_to(self, problem: &ProblemSpec) -> bool {
        match self {
            Quantity::TangentLinear | Quantity::AdjointLinear => problem.linear_data().is_some(),
            Quantity::TangentNonlinear | Quantity::AdjointNonlinear => problem.residual().is_some(),
            Quantity::TangentOptimum | Quantity::AdjointOptimum => problem.objective().is_some(),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named factor of a prediction. The `Kappa*` kinds are condition numbers
/// of the matrix stored alongside; the `Delta*` kinds are relative errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    /// `κ(A)` of a linear system.
    KappaA,
    /// `κ(Ȧ)`.
    KappaADot,
    /// `κ(R_x)`, or `κ(f_xx)` at an optimum.
    KappaJacX,
    /// `κ(R_p)`, or `κ(f_xp)`.
    KappaJacP,
    /// `κ(ΔṘ_x + ΔṘ_p)`.
    KappaTanErr,
    /// `κ(ΔR̄_x)`.
    KappaAdjErrX,
    /// `κ(ΔR̄_p)`.
    KappaAdjErrP,
    DeltaA,
    DeltaB,
    DeltaX,
}

impl FactorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FactorKind::KappaA => "kappa_a",
            FactorKind::KappaADot => "kappa_a_dot",
            FactorKind::KappaJacX => "kappa_jac_x",
            FactorKind::KappaJacP => "kappa_jac_p",
            FactorKind::KappaTanErr => "kappa_tan_err",
            FactorKind::KappaAdjErrX => "kappa_adj_err_x",
            FactorKind::KappaAdjErrP => "kappa_adj_err_p",
            FactorKind::DeltaA => "delta_a",
            FactorKind::DeltaB => "delta_b",
            FactorKind::DeltaX => "delta_x",
        }
    }

    pub fn is_kappa(self) -> bool {
        !matches!(self, FactorKind::DeltaA | FactorKind::DeltaB | FactorKind::DeltaX)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub value: f64,
    /// Set for a zero matrix; `value` is then `+inf`.
    pub degenerate: bool,
    /// The matrix whose condition number `value` is.
    pub matrix: Option<Matrix>,
}

impl Factor {
    fn kappa(kind: FactorKind, m: Matrix) -> Factor {
        let c = condition(&m);
        Factor {
            kind,
            value: c.kappa,
            degenerate: c.degenerate,
            matrix: Some(m),
        }
    }

    fn scalar(kind: FactorKind, value: f64) -> Factor {
        Factor {
            kind,
            value,
            degenerate: false,
            matrix: None,
        }
    }
}

/// A first-order error estimate with its factor breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Nonnegative, possibly `+inf`; exactly 0 when `degenerate`.
    pub value: f64,
    pub factors: Vec<Factor>,
    /// Every first-order term vanishes identically.
    pub degenerate: bool,
}

impl Prediction {
    pub fn factor(&self, kind: FactorKind) -> Option<&Factor> {
        self.factors.iter().find(|f| f.kind == kind)
    }

    pub fn kappa(&self, kind: FactorKind) -> Option<f64> {
        self.factor(kind).map(|f| f.value)
    }
}

// 0·∞ is taken as 0: a zero relative error is never amplified.
fn product(terms: &[f64]) -> f64 {
    if terms.iter().any(|&t| t == 0.0) {
        return 0.0;
    }
    terms.iter().product()
}

fn kappa_times_errors(a: &Matrix, delta_a: f64, delta_b: f64) -> Prediction {
    let kappa = Factor::kappa(FactorKind::KappaA, a.clone());
    Prediction {
        value: product(&[kappa.value, delta_a + delta_b]),
        factors: vec![
            kappa,
            Factor::scalar(FactorKind::DeltaA, delta_a),
            Factor::scalar(FactorKind::DeltaB, delta_b),
        ],
        degenerate: false,
    }
}

/// Error of `A·x` given relative errors in `A` and `x`: `κ(A)·(δA + δb)`.
pub fn predict_matvec(a: &Matrix, delta_a: f64, delta_b: f64) -> Prediction {
    kappa_times_errors(a, delta_a, delta_b)
}

/// Error of the solution of `A·x = b` given relative errors in `A` and
/// `b`: `κ(A)·(δA + δb)`.
pub fn predict_linsolve(a: &Matrix, delta_a: f64, delta_b: f64) -> Prediction {
    kappa_times_errors(a, delta_a, delta_b)
}

/// `‖δẋ_A‖ ≈ κ(A)·κ(Ȧ)·δx`.
pub fn predict_tangent_linear(a: &Matrix, a_dot: &Matrix, delta_x: f64) -> Prediction {
    let ka = Factor::kappa(FactorKind::KappaA, a.clone());
    let kd = Factor::kappa(FactorKind::KappaADot, a_dot.clone());
    Prediction {
        value: product(&[ka.value, kd.value, delta_x]),
        factors: vec![ka, kd, Factor::scalar(FactorKind::DeltaX, delta_x)],
        degenerate: false,
    }
}

/// Predicted relative errors of the linear-system adjoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdjointLinearPrediction {
    /// `b̄` does not depend on `x`, so its error is exactly 0.
    pub delta_b_bar: f64,
    /// `Ā = −b̄·xᵀ` inherits the primal error unamplified.
    pub delta_a_bar: f64,
}

pub fn predict_adjoint_linear(delta_x: f64) -> AdjointLinearPrediction {
    AdjointLinearPrediction {
        delta_b_bar: 0.0,
        delta_a_bar: delta_x,
    }
}

fn nonsingular_jacobian(jac_x: &Matrix) -> Result<()> {
    numkernel::LuFactorization::new(jac_x)?;
    Ok(())
}

/// `κ(R_x)·κ(ΔṘ_x + ΔṘ_p)·δx` with `ΔṘ_x = R_xx·ẋ`, `ΔṘ_p = R_px·ṗ`,
/// contracted over the second index.
pub fn predict_tangent_root(
    root: RootFunction<'_>,
    x: &Vector,
    p: &Vector,
    x_dot: &Vector,
    p_dot: &Vector,
    delta_x: f64,
) -> Result<Prediction> {
    let jac_x = root.jacobian_x(x, p)?;
    nonsingular_jacobian(&jac_x)?;
    let d_x = contract_mode2(&root.tensor_xx(x, p)?, x_dot)?;
    let d_p = contract_mode2(&root.tensor_px(x, p)?, p_dot)?;
    let kj = Factor::kappa(FactorKind::KappaJacX, jac_x);
    let ke = Factor::kappa(FactorKind::KappaTanErr, &d_x + &d_p);
    let degenerate = ke.degenerate;
    let value = if degenerate {
        0.0
    } else {
        product(&[kj.value, ke.value, delta_x])
    };
    Ok(Prediction {
        value,
        factors: vec![kj, ke, Factor::scalar(FactorKind::DeltaX, delta_x)],
        degenerate,
    })
}

/// `(κ(ΔR̄_p) + κ(R_p)·κ(R_x)·κ(ΔR̄_x))·δx` with `ΔR̄_x = zᵀ·R_xx`,
/// `ΔR̄_p = zᵀ·R_px`, contracted over the first index. A zero contracted
/// matrix removes its term.
pub fn predict_adjoint_root(
    root: RootFunction<'_>,
    x: &Vector,
    p: &Vector,
    z: &Vector,
    delta_x: f64,
) -> Result<Prediction> {
    let jac_x = root.jacobian_x(x, p)?;
    nonsingular_jacobian(&jac_x)?;
    let jac_p = root.jacobian_p(x, p)?;
    let d_x = contract_mode1(&root.tensor_xx(x, p)?, z)?;
    let d_p = contract_mode1(&root.tensor_px(x, p)?, z)?;
    let kjx = Factor::kappa(FactorKind::KappaJacX, jac_x);
    let kjp = Factor::kappa(FactorKind::KappaJacP, jac_p);
    let kex = Factor::kappa(FactorKind::KappaAdjErrX, d_x);
    let kep = Factor::kappa(FactorKind::KappaAdjErrP, d_p);
    let direct = if kep.degenerate { 0.0 } else { kep.value };
    let through_x = if kex.degenerate {
        0.0
    } else {
        product(&[kjp.value, kjx.value, kex.value])
    };
    let degenerate = kep.degenerate && kex.degenerate;
    let value = if degenerate {
        0.0
    } else {
        product(&[direct + through_x, delta_x])
    };
    Ok(Prediction {
        value,
        factors: vec![kjx, kjp, kex, kep, Factor::scalar(FactorKind::DeltaX, delta_x)],
        degenerate,
    })
}

pub fn predict_tangent_nonlinear(
    residual: &dyn ResidualEvaluator,
    x: &Vector,
    p: &Vector,
    x_dot: &Vector,
    p_dot: &Vector,
    delta_x: f64,
) -> Result<Prediction> {
    predict_tangent_root(RootFunction::Residual(residual), x, p, x_dot, p_dot, delta_x)
}

pub fn predict_adjoint_nonlinear(
    residual: &dyn ResidualEvaluator,
    x: &Vector,
    p: &Vector,
    z: &Vector,
    delta_x: f64,
) -> Result<Prediction> {
    predict_adjoint_root(RootFunction::Residual(residual), x, p, z, delta_x)
}

/// `κ(f_xx)·κ(Δḟ_xx + Δḟ_xp)·δx`.
pub fn predict_tangent_optimum(
    objective: &dyn ObjectiveEvaluator,
    x: &Vector,
    p: &Vector,
    x_dot: &Vector,
    p_dot: &Vector,
    delta_x: f64,
) -> Result<Prediction> {
    predict_tangent_root(RootFunction::Gradient(objective), x, p, x_dot, p_dot, delta_x)
}

/// `(κ(Δf̄_xp) + κ(f_xp)·κ(f_xx)·κ(Δf̄_xx))·δx`.
pub fn predict_adjoint_optimum(
    objective: &dyn ObjectiveEvaluator,
    x: &Vector,
    p: &Vector,
    z: &Vector,
    delta_x: f64,
) -> Result<Prediction> {
    predict_adjoint_root(RootFunction::Gradient(objective), x, p, z, delta_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit;
    use crate::problems::Registry;

    fn v(d: &[f64]) -> Vector {
        Vector::new(d.to_vec()).unwrap()
    }

    #[test]
    fn matvec_and_linsolve_examples() {
        for predict in [predict_matvec, predict_linsolve] {
            assert_eq!(predict(&Matrix::identity(2), 0.0, 1e-3).value, 1e-3);
            assert!((predict(&Matrix::diag(&[10.0, 1.0]), 0.0, 1e-3).value - 1e-2).abs() < 1e-17);
            assert_eq!(predict(&Matrix::diag(&[10.0, 1.0]), 0.0, 0.0).value, 0.0);
        }
    }

    #[test]
    fn tangent_linear_examples() {
        let p = predict_tangent_linear(&Matrix::diag(&[4.0, 1.0]), &Matrix::identity(2), 1e-3);
        assert_eq!(p.value, 4e-3);
        let p = predict_tangent_linear(&Matrix::diag(&[1.0, 1e-6]), &Matrix::identity(2), 1e-6);
        assert!((p.value - 1.0).abs() < 1e-12);
        let a = Matrix::diag(&[4.0, 1.0]);
        assert_eq!(
            predict_tangent_linear(&a, &Matrix::diag(&[2.0, 2.0]), 1e-3).value,
            predict_tangent_linear(&a, &Matrix::identity(2), 1e-3).value
        );
    }

    #[test]
    fn adjoint_linear_examples() {
        assert_eq!(
            predict_adjoint_linear(1e-3),
            AdjointLinearPrediction {
                delta_b_bar: 0.0,
                delta_a_bar: 1e-3
            }
        );
        assert_eq!(predict_adjoint_linear(0.0).delta_a_bar, 0.0);
    }

    #[test]
    fn scalar_problems_predict_delta_x() {
        let reg = Registry::builtin();
        let sqrt = reg.get("sqrt1d").unwrap();
        let r = sqrt.residual().unwrap();
        let (x, p) = (v(&[2.0]), v(&[4.0]));
        let t = implicit::tangent_nonlinear(r, &x, &p, &v(&[1.0])).unwrap();
        let pred = predict_tangent_nonlinear(r, &x, &p, &t.x_dot, &v(&[1.0]), 1e-4).unwrap();
        assert_eq!(pred.value, 1e-4);
        let a = implicit::adjoint_nonlinear(r, &x, &p, &v(&[1.0])).unwrap();
        let pred = predict_adjoint_nonlinear(r, &x, &p, &a.z, 1e-4).unwrap();
        assert_eq!(pred.value, 1e-4);
        assert!(pred.factor(FactorKind::KappaAdjErrP).unwrap().degenerate);

        let explog = reg.get("explog1d").unwrap();
        let f = explog.objective().unwrap();
        let (x, p) = (v(&[1.0]), explog.default_p.clone());
        let t = implicit::tangent_optimum(f, &x, &p, &v(&[1.0])).unwrap();
        let pred = predict_tangent_optimum(f, &x, &p, &t.x_dot, &v(&[1.0]), 1e-4).unwrap();
        assert_eq!(pred.value, 1e-4);
        let doubled = predict_tangent_optimum(f, &x, &p, &t.x_dot, &v(&[1.0]), 2e-4).unwrap();
        assert_eq!(doubled.value, 2.0 * pred.value);
        let a = implicit::adjoint_optimum(f, &x, &p, &v(&[1.0])).unwrap();
        let pred = predict_adjoint_optimum(f, &x, &p, &a.z, 1e-4).unwrap();
        assert!((pred.value - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn vanishing_second_derivatives_are_degenerate() {
        let reg = Registry::builtin();
        let quad = reg.get("quad_nd").unwrap();
        let f = quad.objective().unwrap();
        let x = v(&[0.25, 1.0]);
        let pd = v(&[1.0, -1.0]);
        let t = implicit::tangent_optimum(f, &x, &quad.default_p, &pd).unwrap();
        let pred = predict_tangent_optimum(f, &x, &quad.default_p, &t.x_dot, &pd, 1e-2).unwrap();
        assert!(pred.degenerate);
        assert_eq!(pred.value, 0.0);
        let pred = predict_adjoint_optimum(f, &x, &quad.default_p, &v(&[1.0, 2.0]), 1e-2).unwrap();
        assert!(pred.degenerate);
        assert_eq!(pred.value, 0.0);

        let lin = reg.get("linsys_diag").unwrap();
        let r = lin.residual().unwrap();
        let x = v(&[1.0, 1.0]);
        let pred =
            predict_tangent_nonlinear(r, &x, &lin.default_p, &v(&[1.0, 1.0]), &v(&[1.0, 0.0]), 1e-3).unwrap();
        assert!(pred.degenerate && pred.value == 0.0);
        let pred = predict_adjoint_nonlinear(r, &x, &lin.default_p, &v(&[1.0, 1.0]), 1e-3).unwrap();
        assert!(pred.degenerate && pred.value == 0.0);
    }

    #[test]
    fn quantities_round_trip() {
        for q in Quantity::ALL {
            assert_eq!(Quantity::parse(q.as_str()), Some(q));
            assert_eq!(serde_json::to_string(&q).unwrap(), format!("\"{q}\""));
        }
        assert_eq!(Quantity::parse("tangent"), None);
    }
}
