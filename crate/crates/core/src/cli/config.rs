use crate::problems::{load_linear_problem, ProblemError, ProblemSpec, Registry};
use crate::seeding::{self, Stream};
use crate::solvers::ReferenceSettings;
use crate::stability::{self, ExperimentCell, Quantity};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown problem(s): {}", .0.join(", "))]
    UnknownProblems(Vec<String>),
    #[error("unknown quantit(y/ies): {}", .0.join(", "))]
    UnknownQuantities(Vec<String>),
    #[error("problem file: {0}")]
    Problem(#[from] ProblemError),
}

/// `"all"` or an explicit list of names.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(try_from = "SelectionRepr")]
pub enum Selection {
    All,
    List(Vec<String>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SelectionRepr {
    Keyword(String),
    List(Vec<String>),
}

impl TryFrom<SelectionRepr> for Selection {
    type Error = String;

    fn try_from(r: SelectionRepr) -> Result<Self, String> {
        match r {
            SelectionRepr::Keyword(k) if k == "all" => Ok(Selection::All),
            SelectionRepr::Keyword(k) => Err(format!("expected \"all\" or a list of names, got \"{k}\"")),
            SelectionRepr::List(v) => Ok(Selection::List(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionConfig {
    /// Include every unit axis of `ℝⁿ`.
    pub axes: bool,
    pub random_count: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

/// Accuracy of the reference primal solutions.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = ReferenceSettings::default();
        SolverConfig {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problems: Selection,
    pub quantities: Selection,
    pub epsilons: Vec<f64>,
    pub directions: DirectionConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// JSON linear-system files registered alongside the built-in problems,
    /// resolved relative to the config file.
    #[serde(default)]
    pub problem_files: Vec<PathBuf>,
}

/// A validated run: the cells to observe and where to write the reports.
#[derive(Debug)]
pub struct RunPlan {
    pub cells: Vec<ExperimentCell>,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_json(&text)
    }

    /// Validates everything and expands the selection into cells. `base`
    /// resolves relative `problem_files`.
    pub fn plan(&self, base: &Path) -> Result<RunPlan, ConfigError> {
        let mut registry = Registry::builtin();
        for file in &self.problem_files {
            registry.register(load_linear_problem(&base.join(file))?)?;
        }
        stability::validate_epsilons(&self.epsilons).map_err(ConfigError::Invalid)?;
        if !(self.solver.tol > 0.0 && self.solver.tol.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "solver.tol must be positive, got {}",
                self.solver.tol
            )));
        }
        if self.solver.max_iter == 0 {
            return Err(ConfigError::Invalid("solver.max_iter must be positive".into()));
        }
        if !self.directions.axes && self.directions.random_count == 0 {
            return Err(ConfigError::Invalid(
                "directions: enable axes or request at least one random direction".into(),
            ));
        }
        if self.output.csv_path.as_os_str().is_empty() || self.output.json_path.as_os_str().is_empty() {
            return Err(ConfigError::Invalid("output paths must be nonempty".into()));
        }
        if self.output.csv_path == self.output.json_path {
            return Err(ConfigError::Invalid("csv_path and json_path must differ".into()));
        }

        let problems: Vec<Arc<ProblemSpec>> = match &self.problems {
            Selection::All => registry.iter().cloned().collect(),
            Selection::List(names) => {
                if names.is_empty() {
                    return Err(ConfigError::Invalid("problem list is empty".into()));
                }
                let unknown: Vec<String> = names.iter().filter(|n| !registry.contains(n)).cloned().collect();
                if !unknown.is_empty() {
                    return Err(ConfigError::UnknownProblems(unknown));
                }
                let mut out: Vec<Arc<ProblemSpec>> = Vec::new();
                for n in names {
                    let spec = registry.get(n)?;
                    if out.iter().any(|s| s.name == spec.name) {
                        return Err(ConfigError::Invalid(format!("problem '{n}' listed twice")));
                    }
                    out.push(spec);
                }
                out
            }
        };

        let explicit: Option<Vec<Quantity>> = match &self.quantities {
            Selection::All => None,
            Selection::List(names) => {
                if names.is_empty() {
                    return Err(ConfigError::Invalid("quantity list is empty".into()));
                }
                let unknown: Vec<String> = names
                    .iter()
                    .filter(|n| Quantity::parse(n).is_none())
                    .cloned()
                    .collect();
                if !unknown.is_empty() {
                    return Err(ConfigError::UnknownQuantities(unknown));
                }
                let qs: Vec<Quantity> = names.iter().filter_map(|n| Quantity::parse(n)).collect();
                for q in &qs {
                    if !problems.iter().any(|p| q.applies_to(p)) {
                        return Err(ConfigError::Invalid(format!(
                            "quantity {q} applies to none of the selected problems"
                        )));
                    }
                }
                Some(qs)
            }
        };

        let reference = ReferenceSettings {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        };
        let d = &self.directions;
        let mut cells = Vec::new();
        for problem in &problems {
            let quantities: Vec<Quantity> = match &explicit {
                None => Quantity::native(problem.kind).to_vec(),
                Some(qs) => qs.iter().copied().filter(|q| q.applies_to(problem)).collect(),
            };
            let directions =
                stability::standard_directions(problem.dims().0, d.axes, d.random_count, d.master_seed);
            for quantity in quantities {
                let stream = if quantity.is_tangent() {
                    Stream::Tangent
                } else {
                    Stream::Adjoint
                };
                let seed = seeding::derive(d.master_seed, stream, name_index(&problem.name, quantity));
                for &epsilon in &self.epsilons {
                    for direction in &directions {
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
            }
        }
        Ok(RunPlan {
            cells,
            output: self.output.clone(),
        })
    }
}

// FNV-1a over "problem/quantity": a stream index that depends only on the
// names, not on which other problems are selected.
fn name_index(problem: &str, quantity: Quantity) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in problem.bytes().chain(*b"/").chain(quantity.as_str().bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
