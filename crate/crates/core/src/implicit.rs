//! Symbolic tangents and adjoints of implicit functions.
//!
//! Everything is evaluated at a supplied primal point, exact or perturbed;
//! solver iterations are never differentiated. For a residual root
//! `R(x, p) = 0` the tangent solves `R_x·ẋ = −R_p·ṗ` and the adjoint solves
//! `R_xᵀ·z = −x̄` followed by `p̄ = R_pᵀ·z`. Optima of convex objectives use
//! the same equations with `R := f_x`.

use crate::nestdiff::{EvalError, ObjectiveEvaluator, ResidualEvaluator, RootFunction};
use crate::numkernel::{self, outer, LinalgError, LuFactorization, Matrix, Vector};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ImplicitError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, ImplicitError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImplicitWarning {
    /// `f_xx` is not positive definite at the evaluation point.
    NonPositiveDefiniteHessian,
}

#[derive(Debug, Clone)]
pub struct TangentResult {
    pub x_dot: Vector,
    pub kappa_rx: f64,
    pub warnings: Vec<ImplicitWarning>,
}

#[derive(Debug, Clone)]
pub struct AdjointResult {
    pub p_bar: Vector,
    /// Solution of `R_xᵀ·z = −x̄`.
    pub z: Vector,
    pub kappa_rx: f64,
    pub warnings: Vec<ImplicitWarning>,
}

/// Tangent of `A·x = b`, split as `ẋ = ẋ_A + ẋ_b`.
#[derive(Debug, Clone)]
pub struct LinearTangent {
    pub x_dot: Vector,
    pub x_dot_a: Vector,
    pub x_dot_b: Vector,
    pub kappa_a: f64,
}

/// Adjoint of `A·x = b`: `Aᵀ·b̄ = x̄`, `Ā = −b̄·xᵀ`.
#[derive(Debug, Clone)]
pub struct LinearAdjoint {
    pub b_bar: Vector,
    pub a_bar: Matrix,
    pub kappa_a: f64,
}

fn check_len(what: &str, v: &Vector, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "{what} has length {}, expected {n}",
            v.len()
        ))
        .into());
    }
    Ok(())
}

/// `A·ẋ_b = ḃ`, `A·ẋ_A = −Ȧ·x`.
pub fn tangent_linear_system(a: &Matrix, a_dot: &Matrix, b_dot: &Vector, x: &Vector) -> Result<LinearTangent> {
    let lu = LuFactorization::new(a)?;
    if a_dot.shape() != a.shape() {
        return Err(LinalgError::DimensionMismatch(format!(
            "A has shape {:?}, A_dot has shape {:?}",
            a.shape(),
            a_dot.shape()
        ))
        .into());
    }
    let x_dot_b = lu.solve(b_dot)?;
    let x_dot_a = lu.solve(&-&a_dot.mul_vec(x)?)?;
    Ok(LinearTangent {
        x_dot: &x_dot_a + &x_dot_b,
        x_dot_a,
        x_dot_b,
        kappa_a: numkernel::svd_cond(a),
    })
}

pub fn adjoint_linear_system(a: &Matrix, x: &Vector, x_bar: &Vector) -> Result<LinearAdjoint> {
    check_len("x", x, a.rows())?;
    let b_bar = numkernel::lu_solve_transposed(a, x_bar)?;
    let a_bar = outer(&b_bar, x).scale(-1.0);
    Ok(LinearAdjoint {
        b_bar,
        a_bar,
        kappa_a: numkernel::svd_cond(a),
    })
}

/// `R_x` and `R_p` at one point with a single LU factorization of `R_x`
/// shared by tangent and adjoint solves.
pub struct ImplicitSystem {
    jac_x: Matrix,
    jac_p: Matrix,
    lu: LuFactorization,
    kappa_rx: f64,
    warnings: Vec<ImplicitWarning>,
}

impl ImplicitSystem {
    pub fn assemble(root: RootFunction<'_>, x: &Vector, p: &Vector) -> Result<Self> {
        let jac_x = root.jacobian_x(x, p)?;
        let jac_p = root.jacobian_p(x, p)?;
        let lu = LuFactorization::new(&jac_x)?;
        let mut warnings = Vec::new();
        if matches!(root, RootFunction::Gradient(_)) && !jac_x.is_positive_definite() {
            warnings.push(ImplicitWarning::NonPositiveDefiniteHessian);
        }
        Ok(ImplicitSystem {
            kappa_rx: numkernel::svd_cond(&jac_x),
            jac_x,
            jac_p,
            lu,
            warnings,
        })
    }

    pub fn jacobian_x(&self) -> &Matrix {
        &self.jac_x
    }

    pub fn jacobian_p(&self) -> &Matrix {
        &self.jac_p
    }

    pub fn kappa_rx(&self) -> f64 {
        self.kappa_rx
    }

    pub fn tangent(&self, p_dot: &Vector) -> Result<TangentResult> {
        check_len("p_dot", p_dot, self.jac_p.cols())?;
        let rhs = -&(&self.jac_p * p_dot);
        Ok(TangentResult {
            x_dot: self.lu.solve(&rhs)?,
            kappa_rx: self.kappa_rx,
            warnings: self.warnings.clone(),
        })
    }

    pub fn adjoint(&self, x_bar: &Vector) -> Result<AdjointResult> {
        check_len("x_bar", x_bar, self.jac_x.rows())?;
        let z = self.lu.solve_transposed(&-x_bar)?;
        let p_bar = self.jac_p.tr_mul_vec(&z)?;
        Ok(AdjointResult {
            p_bar,
            z,
            kappa_rx: self.kappa_rx,
            warnings: self.warnings.clone(),
        })
    }
}

pub fn tangent_nonlinear(
    residual: &dyn ResidualEvaluator,
    x: &Vector,
    p: &Vector,
    p_dot: &Vector,
) -> Result<TangentResult> {
    ImplicitSystem::assemble(RootFunction::Residual(residual), x, p)?.tangent(p_dot)
}

pub fn adjoint_nonlinear(
    residual: &dyn ResidualEvaluator,
    x: &Vector,
    p: &Vector,
    x_bar: &Vector,
) -> Result<AdjointResult> {
    ImplicitSystem::assemble(RootFunction::Residual(residual), x, p)?.adjoint(x_bar)
}

/// `f_xx·ẋ = −f_xp·ṗ`.
pub fn tangent_optimum(
    objective: &dyn ObjectiveEvaluator,
    x: &Vector,
    p: &Vector,
    p_dot: &Vector,
) -> Result<TangentResult> {
    ImplicitSystem::assemble(RootFunction::Gradient(objective), x, p)?.tangent(p_dot)
}

/// `f_xxᵀ·z = −x̄`, `p̄ = f_xpᵀ·z`.
pub fn adjoint_optimum(
    objective: &dyn ObjectiveEvaluator,
    x: &Vector,
    p: &Vector,
    x_bar: &Vector,
) -> Result<AdjointResult> {
    ImplicitSystem::assemble(RootFunction::Gradient(objective), x, p)?.adjoint(x_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Registry;

    fn v(d: &[f64]) -> Vector {
        Vector::new(d.to_vec()).unwrap()
    }

    #[test]
    fn tangent_linear_examples() {
        let a = Matrix::diag(&[4.0, 1.0]);
        let x = v(&[1.0, 1.0]);
        let t = tangent_linear_system(&a, &Matrix::identity(2), &Vector::zeros(2), &x).unwrap();
        assert_eq!(t.x_dot_a.as_slice(), &[-0.25, -1.0]);
        assert!(t.x_dot_b.is_zero());
        assert_eq!(t.kappa_a, 4.0);

        let b = &a * &x;
        let t = tangent_linear_system(&a, &Matrix::zeros(2, 2), &b, &x).unwrap();
        assert_eq!(t.x_dot, x);

        let t = tangent_linear_system(&a, &Matrix::zeros(2, 2), &Vector::zeros(2), &x).unwrap();
        assert!(t.x_dot.is_zero());
    }

    #[test]
    fn tangent_linear_b_part_ignores_x() {
        let a = Matrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 4.0]]).unwrap();
        let a_dot = Matrix::diag(&[0.5, -1.0]);
        let b_dot = v(&[1.0, -2.0]);
        let t1 = tangent_linear_system(&a, &a_dot, &b_dot, &v(&[0.1, 0.2])).unwrap();
        let t2 = tangent_linear_system(&a, &a_dot, &b_dot, &v(&[7.0, -3.0])).unwrap();
        assert_eq!(t1.x_dot_b, t2.x_dot_b);
        assert_ne!(t1.x_dot_a, t2.x_dot_a);
    }

    #[test]
    fn adjoint_linear_examples() {
        let adj = adjoint_linear_system(&Matrix::identity(2), &v(&[3.0, 4.0]), &v(&[1.0, 2.0])).unwrap();
        assert_eq!(adj.b_bar.as_slice(), &[1.0, 2.0]);
        assert_eq!(adj.a_bar.as_slice(), &[-3.0, -4.0, -6.0, -8.0]);

        let adj = adjoint_linear_system(&Matrix::diag(&[4.0, 1.0]), &v(&[1.0, 1.0]), &v(&[4.0, 1.0])).unwrap();
        assert_eq!(adj.b_bar.as_slice(), &[1.0, 1.0]);

        let adj = adjoint_linear_system(&Matrix::diag(&[4.0, 1.0]), &v(&[1.0, 1.0]), &Vector::zeros(2)).unwrap();
        assert!(adj.b_bar.is_zero() && adj.a_bar.is_zero());
    }

    #[test]
    fn sqrt1d_tangent_and_adjoint() {
        let reg = Registry::builtin();
        let sqrt = reg.get("sqrt1d").unwrap();
        let r = sqrt.residual().unwrap();
        let (x, p) = (v(&[2.0]), v(&[4.0]));
        let t = tangent_nonlinear(r, &x, &p, &v(&[1.0])).unwrap();
        assert_eq!(t.x_dot[0], 0.25);
        assert!(tangent_nonlinear(r, &x, &p, &Vector::zeros(1)).unwrap().x_dot.is_zero());
        let a = adjoint_nonlinear(r, &x, &p, &v(&[1.0])).unwrap();
        assert_eq!(a.z[0], -0.25);
        assert_eq!(a.p_bar[0], 0.25);
        assert!(adjoint_nonlinear(r, &x, &p, &Vector::zeros(1)).unwrap().p_bar.is_zero());
    }

    #[test]
    fn optimum_examples() {
        let reg = Registry::builtin();
        let quad = reg.get("quad_nd").unwrap();
        let f = quad.objective().unwrap();
        let pd = v(&[2.0, -1.0]);
        for x in [v(&[0.25, 1.0]), v(&[10.0, -3.0])] {
            let t = tangent_optimum(f, &x, &quad.default_p, &pd).unwrap();
            assert_eq!(t.x_dot.as_slice(), &[0.5, -1.0]);
        }
        let a = adjoint_optimum(f, &v(&[0.25, 1.0]), &quad.default_p, &v(&[4.0, 3.0])).unwrap();
        assert_eq!(a.p_bar.as_slice(), &[1.0, 3.0]);

        let explog = reg.get("explog1d").unwrap();
        let f = explog.objective().unwrap();
        let p = v(&[3.0]);
        let x = v(&[3f64.ln()]);
        let t = tangent_optimum(f, &x, &p, &v(&[1.0])).unwrap();
        assert!((t.x_dot[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(tangent_optimum(f, &x, &p, &Vector::zeros(1)).unwrap().x_dot.is_zero());
        let a = adjoint_optimum(f, &x, &p, &v(&[2.0])).unwrap();
        assert!((a.p_bar[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(t.warnings.is_empty());
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let reg = Registry::builtin();
        let sqrt = reg.get("sqrt1d").unwrap();
        let err = tangent_nonlinear(sqrt.residual().unwrap(), &v(&[0.0]), &v(&[0.0]), &v(&[1.0]));
        assert!(matches!(
            err,
            Err(ImplicitError::Linalg(LinalgError::SingularMatrix { .. }))
        ));
    }
}
