//! Named invariants run by `check`. Every tolerance is multiplied by a
//! scale factor so a test can force failures.

use crate::implicit::{self, ImplicitSystem};
use crate::nestdiff::{self, central_difference, default_step, EvalError};
use crate::numkernel::{self, svd_cond, Matrix, Vector};
use crate::problems::{ProblemSpec, Registry};
use crate::seeding::{self, Stream};
use crate::solvers::{self, Direction, ReferenceSettings};
use crate::stability::{
    self, CellOutcome, ExperimentCell, Observation, Quantity, SlopeOutcome,
};
use std::sync::Arc;

const CHECK_SEED: u64 = 2024;
const GRID: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckResult = Result<(bool, String), String>;

struct Suite {
    registry: Registry,
    outcomes: Vec<(ExperimentCell, CellOutcome)>,
}

impl Suite {
    fn build() -> Suite {
        let registry = Registry::builtin();
        let mut cells = Vec::new();
        for problem in registry.iter() {
            let dirs = stability::standard_directions(problem.dims().0, true, 3, CHECK_SEED);
            for (qi, quantity) in Quantity::native(problem.kind).into_iter().enumerate() {
                for &epsilon in &GRID {
                    for direction in &dirs {
                        cells.push(ExperimentCell {
                            problem: problem.clone(),
                            quantity,
                            epsilon,
                            direction: direction.clone(),
                            seed: seeding::derive(CHECK_SEED, Stream::Check, qi as u64),
                            reference: ReferenceSettings::default(),
                        });
                    }
                }
            }
        }
        Suite {
            registry,
            outcomes: stability::run_cells(cells),
        }
    }

    fn observations(&self) -> Result<Vec<(&ExperimentCell, &Observation)>, String> {
        self.outcomes
            .iter()
            .map(|(c, o)| match o {
                CellOutcome::Ok(obs) => Ok((c, obs)),
                CellOutcome::Skipped(m) | CellOutcome::Error(m) => Err(format!(
                    "{}/{} eps={:e} {}: {m}",
                    c.problem.name,
                    c.quantity,
                    c.epsilon,
                    c.direction.label()
                )),
            })
            .collect()
    }
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let v = seeding::normal_vector(rows * cols, seed);
    Matrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

/// `σ_max/σ_min` from nalgebra's SVD, with the same singularity threshold.
pub fn oracle_cond(m: &Matrix) -> f64 {
    let sv = nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice()).singular_values();
    let max = sv.max();
    let min = sv.min();
    if max == 0.0 || min < numkernel::SINGULARITY_THRESHOLD * max {
        f64::INFINITY
    } else {
        max / min
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn lu_residual(scale: f64) -> CheckResult {
    let mut worst: f64 = 0.0;
    for (t, n) in [2usize, 3, 5, 10, 20, 35, 50].into_iter().enumerate() {
        let seed = seeding::derive(CHECK_SEED, Stream::Check, 100 + t as u64);
        let a = &random_matrix(n, n, seed) + &Matrix::identity(n).scale(2.0 * (n as f64).sqrt());
        if svd_cond(&a) > 1e3 {
            return Err(format!("generated matrix with n={n} is not well conditioned"));
        }
        let b = seeding::normal_vector(n, seed ^ 1);
        let x = numkernel::lu_solve(&a, &b).map_err(|e| e.to_string())?;
        let r = (&(&a * &x) - &b).norm();
        let bound = numkernel::spectral_norm(&a) * x.norm() + b.norm();
        worst = worst.max(r / bound);
    }
    Ok((worst <= 1e-10 * scale, format!("max scaled residual {worst:.3e}")))
}

fn kappa_properties(scale: f64) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut min_kappa = f64::INFINITY;
    for (t, (r, c)) in [(1, 1), (2, 2), (3, 2), (2, 4), (5, 5)].into_iter().enumerate() {
        let m = random_matrix(r, c, seeding::derive(CHECK_SEED, Stream::Check, 200 + t as u64));
        let k = svd_cond(&m);
        for s in [-3.0, 1e-3, 7.5e4] {
            worst = worst.max(rel_diff(svd_cond(&m.scale(s)), k));
        }
        min_kappa = min_kappa.min(k);
    }
    Ok((
        worst <= 1e-10 * scale && min_kappa >= 1.0,
        format!("max scale deviation {worst:.3e}, min kappa {min_kappa:.6}"),
    ))
}

fn kappa_oracle(suite: &Suite, scale: f64) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (_, obs) in suite.observations()? {
        for f in obs.predicted.factors.iter().filter(|f| f.kind.is_kappa()) {
            let m = f.matrix.as_ref().ok_or("kappa factor without matrix")?;
            let oracle = if m.is_zero() { f64::INFINITY } else { oracle_cond(m) };
            let d = if f.value.is_infinite() || oracle.is_infinite() {
                if f.value == oracle { 0.0 } else { f64::INFINITY }
            } else {
                rel_diff(f.value, oracle)
            };
            worst = worst.max(d);
            count += 1;
        }
    }
    Ok((
        worst <= 1e-10 * scale,
        format!("{count} factors, max relative deviation {worst:.3e}"),
    ))
}

fn max_rel_dev(ad: &[f64], fd: &[f64]) -> f64 {
    let scale = ad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dev = ad.iter().zip(fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        dev
    } else {
        dev / scale
    }
}

// Central differences along each coordinate of `at`.
fn fd(f: &dyn Fn(&Vector) -> nestdiff::Result<Vec<f64>>, at: &Vector) -> Result<Vec<Vec<f64>>, String> {
    central_difference(
        |s| {
            let v = Vector::new(s.to_vec()).map_err(|e| e.to_string())?;
            f(&v).map_err(|e| e.to_string())
        },
        at.as_slice(),
        default_step(at),
    )
}

fn derivative_tensors(suite: &Suite, scale: f64) -> CheckResult {
    let tol = 1e-6 * scale;
    let mut worst: f64 = 0.0;
    let mut zeros_ok = true;
    for problem in suite.registry.iter() {
        let root = problem.root_function();
        let (n, m) = root.dims();
        let p = &problem.default_p;
        let x = solvers::reference_solution(problem, p, ReferenceSettings::default()).map_err(|e| e.to_string())?;
        let e = |e: EvalError| e.to_string();
        let jx = root.jacobian_x(&x, p).map_err(e)?;
        let jp = root.jacobian_p(&x, p).map_err(e)?;
        let txx = root.tensor_xx(&x, p).map_err(e)?;
        let tpx = root.tensor_px(&x, p).map_err(e)?;

        let value_x = fd(&|xv| root.value(xv, p).map(Vector::into_vec), &x)?;
        let value_p = fd(&|pv| root.value(&x, pv).map(Vector::into_vec), p)?;
        let jac_x_of_x = fd(&|xv| root.jacobian_x(xv, p).map(|j| j.as_slice().to_vec()), &x)?;
        let jac_x_of_p = fd(&|pv| root.jacobian_x(&x, pv).map(|j| j.as_slice().to_vec()), p)?;
        if let Some(f) = problem.objective() {
            let grad = nestdiff::gradient_x(f, &x, p).map_err(e)?;
            let fd_grad = fd(&|xv| nestdiff::objective_value(f, xv, p).map(|v| vec![v]), &x)?;
            let fd_grad: Vec<f64> = fd_grad.iter().map(|d| d[0]).collect();
            worst = worst.max(max_rel_dev(grad.as_slice(), &fd_grad));
        }

        let fd_jx: Vec<f64> = (0..n * n).map(|ij| value_x[ij % n][ij / n]).collect();
        let fd_jp: Vec<f64> = (0..n * m).map(|ij| value_p[ij % m][ij / m]).collect();
        // [i][j][k] = d/dx_k of J_x[i][j]
        let fd_txx: Vec<f64> = (0..n * n * n)
            .map(|idx| jac_x_of_x[idx % n][idx / n])
            .collect();
        // [i][j][k] = d/dp_j of J_x[i][k]
        let fd_tpx: Vec<f64> = (0..n * m * n)
            .map(|idx| {
                let (i, j, k) = (idx / (m * n), (idx / n) % m, idx % n);
                jac_x_of_p[j][i * n + k]
            })
            .collect();

        worst = worst
            .max(max_rel_dev(jx.as_slice(), &fd_jx))
            .max(max_rel_dev(jp.as_slice(), &fd_jp))
            .max(max_rel_dev(txx.as_slice(), &fd_txx))
            .max(max_rel_dev(tpx.as_slice(), &fd_tpx));

        // Linear residuals have R_xx = 0, and R_px = 0 unless A depends on
        // p; quadratic objectives have vanishing third derivatives.
        let (xx_zero, px_zero) = match problem.linear_data() {
            Some(lin) => (true, !lin.matrix_depends_on_p()),
            None => {
                let quadratic = problem.name == "quad_nd";
                (quadratic, quadratic)
            }
        };
        if (xx_zero && !txx.is_zero()) || (px_zero && !tpx.is_zero()) {
            zeros_ok = false;
        }
    }
    Ok((
        worst <= tol && zeros_ok,
        format!("max relative deviation {worst:.3e}, exact zeros {}", if zeros_ok { "ok" } else { "violated" }),
    ))
}

fn duality(suite: &Suite, scale: f64) -> CheckResult {
    let mut worst: f64 = 0.0;
    for (pi, problem) in suite.registry.iter().enumerate() {
        let (n, m) = problem.dims();
        let p = &problem.default_p;
        let x = solvers::reference_solution(problem, p, ReferenceSettings::default()).map_err(|e| e.to_string())?;
        let sys = ImplicitSystem::assemble(problem.root_function(), &x, p).map_err(|e| e.to_string())?;
        for t in 0..10u64 {
            let seed = seeding::derive(CHECK_SEED, Stream::Check, 1000 * (pi as u64 + 1) + t);
            let p_dot = seeding::normal_vector(m, seed);
            let x_bar = seeding::normal_vector(n, seed ^ 0xabcd);
            let x_dot = sys.tangent(&p_dot).map_err(|e| e.to_string())?.x_dot;
            let p_bar = sys.adjoint(&x_bar).map_err(|e| e.to_string())?.p_bar;
            worst = worst.max(rel_diff(x_bar.dot(&x_dot), p_bar.dot(&p_dot)));

            if let Some(lin) = problem.linear_data() {
                let a = lin.a(p);
                let a_dot = if lin.matrix_depends_on_p() {
                    lin.a_dot(&p_dot)
                } else {
                    Matrix::identity(n)
                };
                let b_dot = lin.b_dot(&p_dot);
                let tan = implicit::tangent_linear_system(&a, &a_dot, &b_dot, &x).map_err(|e| e.to_string())?;
                let adj = implicit::adjoint_linear_system(&a, &x, &x_bar).map_err(|e| e.to_string())?;
                let frob: f64 = adj.a_bar.as_slice().iter().zip(a_dot.as_slice()).map(|(u, v)| u * v).sum();
                worst = worst.max(rel_diff(x_bar.dot(&tan.x_dot), adj.b_bar.dot(&b_dot) + frob));
            }
        }
    }
    Ok((worst <= 1e-10 * scale, format!("max relative mismatch {worst:.3e}")))
}

fn root_map(problem: &ProblemSpec, p: &Vector, start: &Vector) -> Result<Vector, String> {
    solvers::reference_solution_from(problem, p, Some(start), ReferenceSettings::default()).map_err(|e| e.to_string())
}

fn tangent_fd(suite: &Suite, scale: f64) -> CheckResult {
    let mut worst: f64 = 0.0;
    for (pi, problem) in suite.registry.iter().enumerate() {
        let m = problem.dims().1;
        let p = &problem.default_p;
        let x = root_map(problem, p, &problem.default_x0)?;
        let p_dot = seeding::normal_vector(m, seeding::derive(CHECK_SEED, Stream::Check, 5000 + pi as u64));
        let x_dot = ImplicitSystem::assemble(problem.root_function(), &x, p)
            .and_then(|s| s.tangent(&p_dot))
            .map_err(|e| e.to_string())?
            .x_dot;
        let h = 1e-5 * (1.0 + p.norm_inf()) / p_dot.norm();
        let plus = root_map(problem, &(p + &p_dot.scale(h)), &x)?;
        let minus = root_map(problem, &(p - &p_dot.scale(h)), &x)?;
        let fd = (&plus - &minus).scale(0.5 / h);
        worst = worst.max(numkernel::rel_error(&fd, &x_dot).map_err(|e| e.to_string())?);
    }
    Ok((worst <= 1e-6 * scale, format!("max relative deviation {worst:.3e}")))
}

fn adjoint_linear_invariance(suite: &Suite, scale: f64) -> CheckResult {
    let mut rows = 0;
    let mut nonzero_b_bar = 0;
    let mut worst_excess: f64 = f64::NEG_INFINITY;
    for (c, obs) in suite.observations()? {
        if c.quantity != Quantity::AdjointLinear {
            continue;
        }
        rows += 1;
        if obs.observed_aux != Some(0.0) {
            nonzero_b_bar += 1;
        }
        let bound = c.epsilon * (1.0 + 10.0 * c.epsilon * scale);
        worst_excess = worst_excess.max(obs.observed - bound);
    }
    Ok((
        rows > 0 && nonzero_b_bar == 0 && worst_excess <= 0.0,
        format!("{rows} cells, {nonzero_b_bar} nonzero b_bar errors, max excess over bound {worst_excess:.3e}"),
    ))
}

fn degeneracy_consistency(suite: &Suite, scale: f64) -> CheckResult {
    let mut mismatches = 0;
    for (_, obs) in suite.observations()? {
        let predicted_zero = obs.predicted.value == 0.0;
        let observed_zero = obs.observed <= 1e-12 * scale;
        if predicted_zero != observed_zero {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches")))
}

fn first_order_slopes(suite: &Suite, scale: f64) -> CheckResult {
    let sub: Vec<(ExperimentCell, CellOutcome)> = suite
        .outcomes
        .iter()
        .filter(|(c, _)| c.epsilon <= 1e-3)
        .cloned()
        .collect();
    let report = stability::StabilityReport::from_outcomes(sub);
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for s in &report.slopes {
        match s.outcome {
            SlopeOutcome::Fitted { slope, .. } => worst = worst.max((slope - 1.0).abs()),
            SlopeOutcome::Degenerate => {}
            SlopeOutcome::InsufficientData { .. } => bad.push(format!("{}/{}", s.problem, s.quantity)),
        }
    }
    Ok((
        worst <= 0.05 * scale && bad.is_empty(),
        format!("{} series, max |slope - 1| {worst:.3e}", report.slopes.len()),
    ))
}

fn prediction_soundness(suite: &Suite, scale: f64) -> CheckResult {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut rows = 0;
    for (c, obs) in suite.observations()? {
        if c.epsilon > 1e-4 || obs.predicted.value == 0.0 {
            continue;
        }
        rows += 1;
        let ratio = obs.observed / obs.predicted.value;
        worst = worst.max(ratio - (1.0 + 100.0 * c.epsilon * scale));
    }
    Ok((
        rows > 0 && worst <= 0.0,
        format!("{rows} cells, max ratio excess {worst:.3e}"),
    ))
}

fn tangent_linear_amplification(suite: &Suite, scale: f64) -> CheckResult {
    let illcond = suite.registry.get("linsys_illcond").map_err(|e| e.to_string())?;
    let kappa = svd_cond(&illcond.linear_data().ok_or("not linear")?.a(&illcond.default_p));
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut best_axis: f64 = 0.0;
    let mut unsound = 0;
    for (c, obs) in suite.observations()? {
        if !Arc::ptr_eq(&c.problem, &illcond) || c.quantity != Quantity::TangentLinear {
            continue;
        }
        let amp = obs.observed / c.epsilon;
        lo = lo.min(amp);
        hi = hi.max(amp);
        if matches!(c.direction, Direction::UnitAxis { .. }) {
            best_axis = best_axis.max(amp);
        }
        if obs.observed > obs.predicted.value * (1.0 + 100.0 * c.epsilon * scale) {
            unsound += 1;
        }
    }
    let slack = 1e-8 * scale;
    Ok((
        lo >= 1.0 - slack && hi <= kappa * (1.0 + slack) && best_axis >= 0.5 * kappa && unsound == 0,
        format!("amplification in [{lo:.6e}, {hi:.6e}], best axis {best_axis:.6e}, kappa {kappa:.6e}"),
    ))
}

/// Runs every invariant; tolerances are multiplied by `scale`.
pub fn run_checks(scale: f64) -> Vec<CheckOutcome> {
    let suite = Suite::build();
    let checks: Vec<(&'static str, CheckResult)> = vec![
        ("lu_residual", lu_residual(scale)),
        ("kappa_scale_invariance", kappa_properties(scale)),
        ("kappa_oracle_crosscheck", kappa_oracle(&suite, scale)),
        ("derivative_tensors_vs_fd", derivative_tensors(&suite, scale)),
        ("tangent_adjoint_duality", duality(&suite, scale)),
        ("tangent_vs_fd_root_map", tangent_fd(&suite, scale)),
        ("adjoint_linear_invariance", adjoint_linear_invariance(&suite, scale)),
        ("tangent_linear_amplification", tangent_linear_amplification(&suite, scale)),
        ("degeneracy_consistency", degeneracy_consistency(&suite, scale)),
        ("first_order_slopes", first_order_slopes(&suite, scale)),
        ("prediction_soundness", prediction_soundness(&suite, scale)),
    ];
    checks
        .into_iter()
        .map(|(name, r)| match r {
            Ok((passed, detail)) => CheckOutcome { name, passed, detail },
            Err(detail) => CheckOutcome {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}
