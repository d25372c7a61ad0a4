use super::{
    predict_adjoint_linear, predict_adjoint_root, predict_tangent_linear, predict_tangent_root, Factor,
    FactorKind, Prediction, Quantity, Result, StabilityError, StabilityReport,
};
use crate::implicit::{self, ImplicitSystem};
use crate::numkernel::{rel_error, LinalgError, Matrix};
use crate::problems::ProblemSpec;
use crate::seeding;
use crate::solvers::{self, Direction, PerturbationSpec, ReferenceSettings};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Rows with an observed error at or below this are left out of slope fits.
pub const SLOPE_FLOOR: f64 = 1e-13;
/// Observed errors at or below this count as zero for degenerate cells.
pub const DEGENERATE_FLOOR: f64 = 1e-12;

/// One (problem, quantity, ε, direction) experiment. Fully determines its
/// observation.
#[derive(Debug, Clone)]
pub struct ExperimentCell {
    pub problem: Arc<ProblemSpec>,
    pub quantity: Quantity,
    pub epsilon: f64,
    pub direction: Direction,
    /// Seeds `ṗ` for tangent quantities and `x̄` for adjoint quantities.
    pub seed: u64,
    pub reference: ReferenceSettings,
}

#[derive(Debug, Clone)]
pub struct Observation {
    /// Relative error of the quantity: `ẋ_A` for `tangent_linear`, `Ā` for
    /// `adjoint_linear`, otherwise `ẋ` or `p̄`.
    pub observed: f64,
    /// Relative error of `ẋ_b` or `b̄` for the linear-system quantities.
    pub observed_aux: Option<f64>,
    pub predicted: Prediction,
    pub predicted_aux: Option<f64>,
    /// Measured `‖x̂ − x‖/‖x‖`.
    pub delta_x: f64,
}

#[derive(Debug, Clone)]
pub enum CellOutcome {
    Ok(Observation),
    /// The reference quantity is exactly zero, so no relative error exists.
    Skipped(String),
    Error(String),
}

fn not_applicable(cell: &ExperimentCell) -> StabilityError {
    StabilityError::NotApplicable {
        problem: cell.problem.name.clone(),
        kind: cell.problem.kind,
        quantity: cell.quantity,
    }
}

/// Perturbs the reference solution by `ε` along the cell's direction,
/// recomputes the quantity there, and compares with the prediction at the
/// reference solution.
pub fn observe(cell: &ExperimentCell) -> Result<Observation> {
    let problem = &*cell.problem;
    if !cell.quantity.applies_to(problem) {
        return Err(not_applicable(cell));
    }
    let (n, m) = problem.dims();
    let p = &problem.default_p;
    let x = solvers::reference_solution(problem, p, cell.reference)?;
    let x_hat = solvers::perturb(
        &x,
        &PerturbationSpec {
            epsilon: cell.epsilon,
            direction: cell.direction.clone(),
        },
    )?;
    let delta_x = rel_error(&x_hat, &x)?;
    let sens = seeding::normal_vector(if cell.quantity.is_tangent() { m } else { n }, cell.seed);

    match cell.quantity {
        Quantity::TangentLinear => {
            let data = problem.linear_data().ok_or_else(|| not_applicable(cell))?;
            let a = data.a(p);
            let a_dot = if data.matrix_depends_on_p() {
                data.a_dot(&sens)
            } else {
                Matrix::identity(n)
            };
            let b_dot = data.b_dot(&sens);
            let exact = implicit::tangent_linear_system(&a, &a_dot, &b_dot, &x)?;
            let approx = implicit::tangent_linear_system(&a, &a_dot, &b_dot, &x_hat)?;
            let observed_aux = if exact.x_dot_b.is_zero() {
                None
            } else {
                Some(rel_error(&approx.x_dot_b, &exact.x_dot_b)?)
            };
            Ok(Observation {
                observed: rel_error(&approx.x_dot_a, &exact.x_dot_a)?,
                observed_aux,
                predicted: predict_tangent_linear(&a, &a_dot, delta_x),
                predicted_aux: observed_aux.map(|_| 0.0),
                delta_x,
            })
        }
        Quantity::AdjointLinear => {
            let data = problem.linear_data().ok_or_else(|| not_applicable(cell))?;
            let a = data.a(p);
            let exact = implicit::adjoint_linear_system(&a, &x, &sens)?;
            let approx = implicit::adjoint_linear_system(&a, &x_hat, &sens)?;
            let pred = predict_adjoint_linear(delta_x);
            Ok(Observation {
                observed: rel_error(&approx.a_bar, &exact.a_bar)?,
                observed_aux: Some(rel_error(&approx.b_bar, &exact.b_bar)?),
                predicted: Prediction {
                    value: pred.delta_a_bar,
                    factors: vec![Factor::scalar(FactorKind::DeltaX, delta_x)],
                    degenerate: false,
                },
                predicted_aux: Some(pred.delta_b_bar),
                delta_x,
            })
        }
        q => {
            let root = problem.root_function();
            let exact = ImplicitSystem::assemble(root, &x, p)?;
            let approx = ImplicitSystem::assemble(root, &x_hat, p)?;
            let (observed, predicted) = if q.is_tangent() {
                let t = exact.tangent(&sens)?;
                let t_hat = approx.tangent(&sens)?;
                let pred = predict_tangent_root(root, &x, p, &t.x_dot, &sens, delta_x)?;
                (rel_error(&t_hat.x_dot, &t.x_dot)?, pred)
            } else {
                let a = exact.adjoint(&sens)?;
                let a_hat = approx.adjoint(&sens)?;
                let pred = predict_adjoint_root(root, &x, p, &a.z, delta_x)?;
                (rel_error(&a_hat.p_bar, &a.p_bar)?, pred)
            };
            Ok(Observation {
                observed,
                observed_aux: None,
                predicted,
                predicted_aux: None,
                delta_x,
            })
        }
    }
}

impl From<Result<Observation>> for CellOutcome {
    fn from(r: Result<Observation>) -> Self {
        match r {
            Ok(obs) => CellOutcome::Ok(obs),
            Err(StabilityError::Linalg(e @ LinalgError::ExactIsZero)) => CellOutcome::Skipped(e.to_string()),
            Err(e) => CellOutcome::Error(e.to_string()),
        }
    }
}

fn observe_all(cells: Vec<ExperimentCell>) -> Vec<(ExperimentCell, Result<Observation>)> {
    cells
        .into_par_iter()
        .map(|cell| {
            let r = observe(&cell);
            (cell, r)
        })
        .collect()
}

/// Observes every cell, in parallel on the current rayon pool. Outcomes are
/// returned in input order.
pub fn run_cells(cells: Vec<ExperimentCell>) -> Vec<(ExperimentCell, CellOutcome)> {
    observe_all(cells)
        .into_iter()
        .map(|(cell, r)| (cell, r.into()))
        .collect()
}

/// Least-squares slope of `log(observed)` against `log(ε)` over points with
/// `observed > 1e-13`; `None` with fewer than 3 such points.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(e, o)| o > SLOPE_FLOOR && e > 0.0)
        .map(|&(e, o)| (e.ln(), o.ln()))
        .collect();
    if usable.len() < 3 {
        return None;
    }
    let k = usable.len() as f64;
    let mx = usable.iter().map(|u| u.0).sum::<f64>() / k;
    let my = usable.iter().map(|u| u.1).sum::<f64>() / k;
    let sxy: f64 = usable.iter().map(|u| (u.0 - mx) * (u.1 - my)).sum();
    let sxx: f64 = usable.iter().map(|u| (u.0 - mx) * (u.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SlopeOutcome {
    Fitted { slope: f64, points: usize },
    /// Every prediction is degenerate and every observation is zero to
    /// roundoff; there is nothing to fit.
    Degenerate,
    InsufficientData { usable: usize },
}

/// Log-log slope of one (problem, quantity, direction) series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub problem: String,
    pub quantity: Quantity,
    pub direction: String,
    #[serde(flatten)]
    pub outcome: SlopeOutcome,
}

/// Classifies a series of `(ε, observation)` pairs.
pub(super) fn slope_outcome(series: &[(f64, &Observation)]) -> SlopeOutcome {
    if !series.is_empty()
        && series
            .iter()
            .all(|(_, o)| o.predicted.degenerate && o.observed <= DEGENERATE_FLOOR)
    {
        return SlopeOutcome::Degenerate;
    }
    let points: Vec<(f64, f64)> = series.iter().map(|(e, o)| (*e, o.observed)).collect();
    match fit_slope(&points) {
        Some(slope) => SlopeOutcome::Fitted {
            slope,
            points: points.iter().filter(|p| p.1 > SLOPE_FLOOR).count(),
        },
        None => SlopeOutcome::InsufficientData {
            usable: points.iter().filter(|p| p.1 > SLOPE_FLOOR).count(),
        },
    }
}

pub(crate) fn validate_epsilons(epsilons: &[f64]) -> std::result::Result<(), String> {
    if let Some(e) = epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(format!("epsilon {e} is not a positive finite number"));
    }
    if epsilons.len() < 3 {
        return Err(format!("need at least 3 epsilons, got {}", epsilons.len()));
    }
    let lo = epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = epsilons.iter().copied().fold(0.0, f64::max);
    if hi < 100.0 * lo {
        return Err(format!("epsilons must span at least 2 decades, got [{lo:e}, {hi:e}]"));
    }
    Ok(())
}

/// Runs one problem/quantity over an ε grid and a set of directions.
///
/// Fails on the first cell error in report order, and with
/// `InsufficientData` when a non-degenerate series has fewer than 3
/// usable rows.
pub fn sweep(
    problem: Arc<ProblemSpec>,
    quantity: Quantity,
    epsilons: &[f64],
    directions: &[Direction],
    seed: u64,
    reference: ReferenceSettings,
) -> Result<StabilityReport> {
    validate_epsilons(epsilons).map_err(StabilityError::InvalidSweep)?;
    if directions.is_empty() {
        return Err(StabilityError::InvalidSweep("no directions".into()));
    }
    if !quantity.applies_to(&problem) {
        return Err(StabilityError::NotApplicable {
            problem: problem.name.clone(),
            kind: problem.kind,
            quantity,
        });
    }
    let mut cells = Vec::with_capacity(epsilons.len() * directions.len());
    for &epsilon in epsilons {
        for direction in directions {
            cells.push(ExperimentCell {
                problem: problem.clone(),
                quantity,
                epsilon,
                direction: direction.clone(),
                seed,
                reference,
            });
        }
    }
    let mut outcomes = Vec::with_capacity(cells.len());
    for (cell, r) in observe_all(cells) {
        let outcome = match r {
            Err(StabilityError::Linalg(LinalgError::ExactIsZero)) | Ok(_) => CellOutcome::from(r),
            Err(e) => return Err(e),
        };
        outcomes.push((cell, outcome));
    }
    let report = StabilityReport::from_outcomes(outcomes);
    if let Some(fit) = report
        .slopes
        .iter()
        .find(|s| matches!(s.outcome, SlopeOutcome::InsufficientData { .. }))
    {
        let SlopeOutcome::InsufficientData { usable } = fit.outcome else {
            unreachable!()
        };
        return Err(StabilityError::InsufficientData {
            problem: fit.problem.clone(),
            quantity: fit.quantity,
            direction: fit.direction.clone(),
            usable,
        });
    }
    Ok(report)
}

/// Unit axes followed by `random_count` seeded random directions.
pub fn standard_directions(n: usize, axes: bool, random_count: usize, master_seed: u64) -> Vec<Direction> {
    let mut out = Vec::new();
    if axes {
        out.extend((0..n).map(|index| Direction::UnitAxis { index }));
    }
    out.extend((0..random_count).map(|r| Direction::Random {
        seed: seeding::derive(master_seed, seeding::Stream::Direction, r as u64),
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Registry;

    const GRID: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

    fn cell(name: &str, quantity: Quantity, epsilon: f64, direction: Direction) -> ExperimentCell {
        ExperimentCell {
            problem: Registry::builtin().get(name).unwrap(),
            quantity,
            epsilon,
            direction,
            seed: 11,
            reference: ReferenceSettings::default(),
        }
    }

    #[test]
    fn sqrt1d_tangent_cell() {
        let obs = observe(&cell(
            "sqrt1d",
            Quantity::TangentNonlinear,
            1e-4,
            Direction::UnitAxis { index: 0 },
        ))
        .unwrap();
        assert!((obs.observed - 1e-4).abs() < 1e-5, "{}", obs.observed);
        let ratio = obs.observed / obs.predicted.value;
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    }

    #[test]
    fn adjoint_linear_b_bar_is_exact() {
        for eps in GRID {
            for d in [Direction::UnitAxis { index: 1 }, Direction::Random { seed: 5 }] {
                let obs = observe(&cell("linsys_param", Quantity::AdjointLinear, eps, d)).unwrap();
                assert_eq!(obs.observed_aux, Some(0.0));
            }
        }
    }

    #[test]
    fn quad_nd_tangent_is_degenerate() {
        let obs = observe(&cell(
            "quad_nd",
            Quantity::TangentOptimum,
            1e-2,
            Direction::Random { seed: 3 },
        ))
        .unwrap();
        assert!(obs.observed <= 1e-12);
        assert!(obs.predicted.degenerate && obs.predicted.value == 0.0);
    }

    #[test]
    fn sweeps() {
        let reg = Registry::builtin();
        let dirs = standard_directions(1, true, 2, 99);
        let r = sweep(
            reg.get("sqrt1d").unwrap(),
            Quantity::TangentNonlinear,
            &GRID,
            &dirs,
            1,
            ReferenceSettings::default(),
        )
        .unwrap();
        assert_eq!(r.rows.len(), 15);
        for s in &r.slopes {
            let SlopeOutcome::Fitted { slope, .. } = s.outcome else {
                panic!("{s:?}")
            };
            assert!((slope - 1.0).abs() <= 0.05, "{slope}");
        }

        let dirs = standard_directions(2, true, 3, 99);
        let r = sweep(
            reg.get("quad_nd").unwrap(),
            Quantity::TangentOptimum,
            &GRID,
            &dirs,
            1,
            ReferenceSettings::default(),
        )
        .unwrap();
        assert!(r.slopes.iter().all(|s| s.outcome == SlopeOutcome::Degenerate));
        assert!(r.rows.iter().all(|row| row.degenerate == Some(true)));

        let r = sweep(
            reg.get("linsys_diag").unwrap(),
            Quantity::AdjointLinear,
            &GRID,
            &dirs,
            1,
            ReferenceSettings::default(),
        )
        .unwrap();
        for s in &r.slopes {
            let SlopeOutcome::Fitted { slope, .. } = s.outcome else {
                panic!("{s:?}")
            };
            assert!((slope - 1.0).abs() <= 0.05);
        }
        for row in &r.rows {
            let ratio = row.ratio.unwrap();
            assert!(ratio >= 0.5 && ratio <= 1.0 + 10.0 * row.epsilon, "{ratio}");
        }
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let reg = Registry::builtin();
        let dirs = standard_directions(1, true, 0, 0);
        let sqrt = reg.get("sqrt1d").unwrap();
        for grid in [&[1e-2, 1e-3][..], &[1e-3, 2e-3, 5e-3], &[1e-2, -1e-3, 1e-4]] {
            assert!(matches!(
                sweep(sqrt.clone(), Quantity::TangentNonlinear, grid, &dirs, 0, ReferenceSettings::default()),
                Err(StabilityError::InvalidSweep(_))
            ));
        }
        assert!(matches!(
            sweep(sqrt, Quantity::TangentOptimum, &GRID, &dirs, 0, ReferenceSettings::default()),
            Err(StabilityError::NotApplicable { .. })
        ));
    }

    #[test]
    fn slope_fit_recovers_powers() {
        let pts: Vec<(f64, f64)> = GRID.iter().map(|&e| (e, 3.0 * e * e)).collect();
        assert!((fit_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fit_slope(&pts[..2]), None);
        let zeros: Vec<(f64, f64)> = GRID.iter().map(|&e| (e, 0.0)).collect();
        assert_eq!(fit_slope(&zeros), None);
    }
}
