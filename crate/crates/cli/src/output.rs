use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use panelcf::estimators::{predict_counterfactual, CounterfactualPath, EstimatorKind, RestrictionSet, Tuning, WeightsFit};
use panelcf::inference::{Scheme, VarianceEstimate};
use panelcf::Panel;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FIT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitWeight {
    pub unit: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboRecord {
    pub scheme: Scheme,
    pub s: Option<usize>,
    pub variance: f64,
    pub std_error: f64,
    pub retuned: bool,
    pub placebos: usize,
    pub failures: usize,
}

impl From<&VarianceEstimate> for PlaceboRecord {
    fn from(v: &VarianceEstimate) -> Self {
        Self {
            scheme: v.scheme,
            s: v.s,
            variance: v.variance,
            std_error: v.std_error,
            retuned: v.retuned,
            placebos: v.placebo_gaps.len(),
            failures: v.failures.len(),
        }
    }
}

/// Contents of fit.json; see docs/fit-json.md.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub version: u32,
    pub estimator: EstimatorKind,
    pub treated: String,
    pub t0_label: String,
    pub mu: f64,
    pub omega: Vec<UnitWeight>,
    pub omega_sum: f64,
    pub restrictions: RestrictionSet,
    pub tuning: Tuning,
    /// How the tuning values were obtained: none, given, cv, poisson or cv_k.
    pub tuning_rule: String,
    /// Periods scored by cross-validation, when it ran.
    pub cv_eval: Option<String>,
    pub pre_rmse: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub report_period: String,
    pub effect_at_report: f64,
    pub placebo: Option<PlaceboRecord>,
}

impl FitRecord {
    pub fn new(panel: &Panel, fit: &WeightsFit, report_period: usize, path: &CounterfactualPath) -> Self {
        let labels = panel.unit_labels();
        Self {
            version: FIT_SCHEMA_VERSION,
            estimator: fit.estimator,
            treated: panel.treated_label().to_string(),
            t0_label: panel.period_labels()[panel.t0() - 1].clone(),
            mu: fit.mu,
            omega: fit
                .donors
                .iter()
                .zip(&fit.omega)
                .map(|(&d, &w)| UnitWeight {
                    unit: labels[d].clone(),
                    weight: w,
                })
                .collect(),
            omega_sum: fit.omega_sum(),
            restrictions: fit.restrictions,
            tuning: fit.tuning.clone(),
            tuning_rule: "none".into(),
            cv_eval: None,
            pre_rmse: fit.pre_rmse,
            converged: fit.converged,
            warnings: fit.warnings.clone(),
            report_period: panel.period_labels()[report_period].clone(),
            effect_at_report: path.effect_at(report_period).unwrap_or(f64::NAN),
            placebo: None,
        }
    }

    /// Rebuilds the fit against `panel`, matching weights by unit label.
    pub fn to_weights_fit(&self, panel: &Panel) -> Result<WeightsFit, CliError> {
        let donors = self
            .omega
            .iter()
            .map(|w| {
                panel
                    .unit_index(&w.unit)
                    .filter(|&i| i != 0)
                    .ok_or_else(|| CliError::Usage(format!("fit.json names unknown control `{}`", w.unit)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(WeightsFit {
            mu: self.mu,
            omega: self.omega.iter().map(|w| w.weight).collect(),
            donors,
            estimator: self.estimator,
            restrictions: self.restrictions,
            tuning: self.tuning.clone(),
            pre_rmse: self.pre_rmse,
            converged: self.converged,
            warnings: self.warnings.clone(),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// `period,observed,imputed,effect`, one row per post period.
pub fn write_path_csv(path: &Path, panel: &Panel, cf: &CounterfactualPath) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let err = |e: csv::Error| CliError::Output(e.to_string());
    w.write_record(["period", "observed", "imputed", "effect"]).map_err(err)?;
    for i in 0..cf.periods.len() {
        w.write_record([
            panel.period_labels()[cf.periods[i]].clone(),
            cf.observed[i].to_string(),
            cf.imputed[i].to_string(),
            cf.effects[i].to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Re-predicts from a fit record, for round-trip checks.
pub fn repredict(record: &FitRecord, panel: &Panel) -> Result<CounterfactualPath, CliError> {
    let fit = record.to_weights_fit(panel)?;
    Ok(predict_counterfactual(&fit, panel)?)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub omega_sum: f64,
    pub mu: f64,
    pub effect: f64,
    pub std_error: Option<f64>,
}

pub fn model_name(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::Adh => "Original synth.",
        EstimatorKind::Constrained => "Constrained reg.",
        EstimatorKind::ElasticNet => "Elastic net",
        EstimatorKind::BestSubset => "Best subset",
        EstimatorKind::Did => "Diff-in-diff",
    }
}

pub fn summary_table(treated: &str, period: &str, rows: &[SummaryRow]) -> String {
    let effect_header = format!("tau({treated},{period})");
    let mut out = String::new();
    let _ = writeln!(out, "{:<18} {:>8} {:>12} {:>14} {:>10}", "Model", "sum(w)", "mu", effect_header, "s.e.");
    for r in rows {
        let se = r.std_error.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<18} {:>8.3} {:>12.3} {:>14.3} {:>10}",
            r.model, r.omega_sum, r.mu, r.effect, se
        );
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}
