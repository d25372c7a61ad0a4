use super::experiment::{slope_outcome, CellOutcome, ExperimentCell, Observation, SlopeFit};
use super::{FactorKind, Quantity, Result};
use serde::{Serialize, Serializer};
use std::path::Path;

/// Fixed CSV column order.
pub const CSV_HEADER: [&str; 19] = [
    "problem",
    "quantity",
    "epsilon",
    "direction",
    "status",
    "delta_x",
    "observed",
    "observed_aux",
    "predicted",
    "ratio",
    "degenerate",
    "kappa_a",
    "kappa_a_dot",
    "kappa_jac_x",
    "kappa_jac_p",
    "kappa_tan_err",
    "kappa_adj_err_x",
    "kappa_adj_err_p",
    "message",
];

const KAPPA_COLUMNS: [FactorKind; 7] = [
    FactorKind::KappaA,
    FactorKind::KappaADot,
    FactorKind::KappaJacX,
    FactorKind::KappaJacP,
    FactorKind::KappaTanErr,
    FactorKind::KappaAdjErrX,
    FactorKind::KappaAdjErrP,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Skipped,
    Error,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Skipped => "skipped",
            RowStatus::Error => "error",
        }
    }
}

fn real_opt<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) => s.serialize_str(&format_real(*x)),
        None => s.serialize_none(),
    }
}

/// `{:.16e}` (17 significant digits) for finite values, `inf`/`-inf`/`nan`
/// otherwise.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// `predicted[kind]` for each κ column; `None` where the factor is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Kappas {
    #[serde(serialize_with = "real_opt")]
    pub kappa_a: Option<f64>,
    #[serde(serialize_with = "real_opt")]
    pub kappa_a_dot: Option<f64>,
    #[serde(serialize_with = "real_opt")]
    pub kappa_jac_x: Option<f64>,
    #[serde(serialize_with = "real_opt")]
    pub kappa_jac_p: Option<f64>,
    #[serde(serialize_with = "real_opt")]
    pub kappa_tan_err: Option<f64>,
    #[serde(serialize_with = "real_opt")]
    pub kappa_adj_err_x: Option<f64>,
    #[serde(serialize_with = "real_opt")]
    pub kappa_adj_err_p: Option<f64>,
}

impl Kappas {
    fn values(&self) -> [Option<f64>; 7] {
        [
            self.kappa_a,
            self.kappa_a_dot,
            self.kappa_jac_x,
            self.kappa_jac_p,
            self.kappa_tan_err,
            self.kappa_adj_err_x,
            self.kappa_adj_err_p,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub problem: String,
    pub quantity: Quantity,
    pub epsilon: f64,
    pub direction: String,
    pub status: RowStatus,
    #[serde(serialize_with = "real_opt")]
    pub delta_x: Option<f64>,
    #[serde(serialize_with = "real_opt")]
    pub observed: Option<f64>,
    #[serde(serialize_with = "real_opt")]
    pub observed_aux: Option<f64>,
    #[serde(serialize_with = "real_opt")]
    pub predicted: Option<f64>,
    /// `observed / predicted`; absent when the prediction is 0 or `+inf`.
    #[serde(serialize_with = "real_opt")]
    pub ratio: Option<f64>,
    pub degenerate: Option<bool>,
    pub kappas: Kappas,
    pub message: Option<String>,
}

impl ReportRow {
    fn new(cell: &ExperimentCell, outcome: &CellOutcome) -> ReportRow {
        let mut row = ReportRow {
            problem: cell.problem.name.clone(),
            quantity: cell.quantity,
            epsilon: cell.epsilon,
            direction: cell.direction.label(),
            status: RowStatus::Ok,
            delta_x: None,
            observed: None,
            observed_aux: None,
            predicted: None,
            ratio: None,
            degenerate: None,
            kappas: Kappas::default(),
            message: None,
        };
        match outcome {
            CellOutcome::Ok(obs) => row.fill(obs),
            CellOutcome::Skipped(msg) => {
                row.status = RowStatus::Skipped;
                row.message = Some(msg.clone());
            }
            CellOutcome::Error(msg) => {
                row.status = RowStatus::Error;
                row.message = Some(msg.clone());
            }
        }
        row
    }

    fn fill(&mut self, obs: &Observation) {
        let pred = &obs.predicted;
        self.delta_x = Some(obs.delta_x);
        self.observed = Some(obs.observed);
        self.observed_aux = obs.observed_aux;
        self.predicted = Some(pred.value);
        if pred.value > 0.0 && pred.value.is_finite() {
            self.ratio = Some(obs.observed / pred.value);
        }
        self.degenerate = Some(pred.degenerate);
        let [a, ad, jx, jp, te, ax, ap] = KAPPA_COLUMNS.map(|k| pred.kappa(k));
        self.kappas = Kappas {
            kappa_a: a,
            kappa_a_dot: ad,
            kappa_jac_x: jx,
            kappa_jac_p: jp,
            kappa_tan_err: te,
            kappa_adj_err_x: ax,
            kappa_adj_err_p: ap,
        };
    }

    fn csv_record(&self) -> Vec<String> {
        let real = |v: Option<f64>| v.map(format_real).unwrap_or_default();
        let mut rec = vec![
            self.problem.clone(),
            self.quantity.to_string(),
            format_real(self.epsilon),
            self.direction.clone(),
            self.status.as_str().to_string(),
            real(self.delta_x),
            real(self.observed),
            real(self.observed_aux),
            real(self.predicted),
            real(self.ratio),
            self.degenerate.map(|d| d.to_string()).unwrap_or_default(),
        ];
        rec.extend(self.kappas.values().map(real));
        rec.push(self.message.clone().unwrap_or_default());
        rec
    }
}

/// Rows ordered by (problem, quantity, ascending ε), directions in input
/// order, plus one slope fit per (problem, quantity, direction).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<ReportRow>,
    pub slopes: Vec<SlopeFit>,
}

impl StabilityReport {
    pub fn from_outcomes(mut outcomes: Vec<(ExperimentCell, CellOutcome)>) -> StabilityReport {
        outcomes.sort_by(|(a, _), (b, _)| {
            a.problem
                .name
                .cmp(&b.problem.name)
                .then(a.quantity.cmp(&b.quantity))
                .then(a.epsilon.total_cmp(&b.epsilon))
        });
        let rows = outcomes.iter().map(|(c, o)| ReportRow::new(c, o)).collect();

        let mut keys: Vec<(String, Quantity, String)> = Vec::new();
        for (c, _) in &outcomes {
            let key = (c.problem.name.clone(), c.quantity, c.direction.label());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let slopes = keys
            .into_iter()
            .map(|(problem, quantity, direction)| {
                let series: Vec<(f64, &Observation)> = outcomes
                    .iter()
                    .filter(|(c, _)| {
                        c.problem.name == problem && c.quantity == quantity && c.direction.label() == direction
                    })
                    .filter_map(|(c, o)| match o {
                        CellOutcome::Ok(obs) => Some((c.epsilon, obs)),
                        _ => None,
                    })
                    .collect();
                SlopeFit {
                    outcome: slope_outcome(&series),
                    problem,
                    quantity,
                    direction,
                }
            })
            .collect();
        StabilityReport { rows, slopes }
    }

    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| r.status == RowStatus::Error).count()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            w.write_record(row.csv_record())?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_formatting() {
        assert_eq!(format_real(1e-3), "1.0000000000000000e-3");
        assert_eq!(format_real(f64::INFINITY), "inf");
        assert_eq!(format_real(0.1).len(), "1.0000000000000001e-1".len());
        let x = 0.1 + 0.2;
        assert_eq!(format_real(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn header_matches_record_width() {
        let row = ReportRow {
            problem: "p".into(),
            quantity: Quantity::TangentLinear,
            epsilon: 1e-2,
            direction: "axis:0".into(),
            status: RowStatus::Skipped,
            delta_x: None,
            observed: None,
            observed_aux: None,
            predicted: None,
            ratio: None,
            degenerate: None,
            kappas: Kappas::default(),
            message: Some("exact value is zero".into()),
        };
        assert_eq!(row.csv_record().len(), CSV_HEADER.len());
        let report = StabilityReport {
            rows: vec![row],
            slopes: vec![],
        };
        let csv = report.to_csv_string().unwrap();
        assert!(csv.starts_with(&CSV_HEADER.join(",")));
        let json: serde_json::Value = serde_json::from_str(&report.to_json_string().unwrap()).unwrap();
        assert_eq!(json["rows"][0]["status"], "skipped");
        assert!(json["rows"][0]["observed"].is_null());
    }
}
