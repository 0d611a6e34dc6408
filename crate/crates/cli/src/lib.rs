//! The `panelcf` command line: argument handling, estimator assembly and the
//! files each subcommand writes.

pub mod args;
pub mod output;

use std::path::{Path, PathBuf};

use panelcf::datasets::{self, Dataset};
use panelcf::estimators::{
    predict_counterfactual, AdhOptions, Estimator, EstimatorKind, Predictor, RestrictionSet, WeightsFit,
};
use panelcf::inference::{
    default_s, variance_combined, variance_random_time, variance_random_unit, PlaceboOptions, Retune,
    VarianceEstimate,
};
use panelcf::residualize::residualize;
use panelcf::tuning::{
    choose_k_poisson_on, cv_best_subset_k, cv_elastic_net_on, default_cv_k_max, default_k_max, CvGrid, CvResult,
    EvalPeriods, DEFAULT_ALPHAS,
};
use panelcf::{load_covariates, load_panel, Design, Panel};

use args::{Command, DataArgs, EstimatorArg, EstimatorArgs, FitArgs, PlaceboArgs, ReplicateArgs, SchemeArg};
use output::{FitRecord, PlaceboRecord, SummaryRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(panelcf::Error),
    #[error("{0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing output: {0}")]
    Output(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 usage, 3 data or output, 4 solver.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io { .. } | CliError::Output(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

impl From<panelcf::Error> for CliError {
    fn from(e: panelcf::Error) -> Self {
        use panelcf::Error as E;
        match e {
            E::InvalidArgument(_) | E::UnsupportedRestrictions(_) => CliError::Usage(e.to_string()),
            E::AllPlacebosFailed(_) | E::TooManySubsets { .. } => CliError::Solver(e.to_string()),
            other => CliError::Data(other),
        }
    }
}

/// What a successful run reports back to `main`.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Printed to stdout.
    pub text: String,
    /// Some fit did not converge; artifacts were still written.
    pub not_converged: bool,
}

impl Report {
    pub fn exit_code(&self) -> u8 {
        if self.not_converged {
            4
        } else {
            0
        }
    }
}

pub fn run(command: Command) -> Result<Report, CliError> {
    match command {
        Command::Fit(a) => run_fit(&a, false),
        Command::Cv(a) => run_fit(&a, true),
        Command::Placebo(a) => run_placebo(&a),
        Command::Replicate(a) => run_replicate(&a),
    }
}

/// The panel to fit, with covariates attached and optionally residualized.
pub fn load_data(data: &DataArgs) -> Result<Panel, CliError> {
    let mut panel = match (&data.input, &data.dataset) {
        (_, Some(name)) => {
            if data.treated.is_some() || data.t0.is_some() {
                return Err(CliError::Usage("--treated and --t0 are fixed by --dataset".into()));
            }
            datasets::find(name)?.load()?
        }
        (Some(path), None) => {
            let (Some(treated), Some(t0)) = (&data.treated, &data.t0) else {
                return Err(CliError::Usage("--input needs --treated and --t0".into()));
            };
            load_panel(path, treated, t0)?
        }
        (None, None) => return Err(CliError::Usage("give --input or --dataset".into())),
    };
    if let Some(path) = &data.covariates {
        panel = load_covariates(panel, path)?;
    }
    if data.residualize {
        panel = residualize(&panel)?.into_panel(&panel)?;
    }
    Ok(panel)
}

/// An estimator with its tuning resolved, plus how that tuning was found.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub estimator: Estimator,
    pub rule: &'static str,
    pub cv: Option<CvResult>,
    pub eval: EvalPeriods,
    pub cv_k: bool,
}

fn restrictions_of(a: &EstimatorArgs) -> RestrictionSet {
    RestrictionSet {
        no_intercept: a.no_intercept,
        adding_up: a.adding_up,
        nonnegative: a.nonnegative,
        constant_weights: a.constant_weights,
    }
}

/// Rejects flag combinations that do not apply to the chosen estimator.
pub fn validate(a: &EstimatorArgs) -> Result<(), CliError> {
    let est = a.estimator;
    let usage = |m: &str| Err(CliError::Usage(m.to_string()));
    let any_restriction = a.no_intercept || a.adding_up || a.nonnegative || a.constant_weights;
    if any_restriction && !matches!(est, EstimatorArg::ElasticNet | EstimatorArg::BestSubset) {
        return usage("restriction flags apply only to elastic-net and best-subset; the other estimators fix their own");
    }
    if est == EstimatorArg::ElasticNet && (a.adding_up || a.constant_weights) {
        return usage("the elastic net cannot impose --adding-up or --constant-weights: the L1 penalty is constant on that set");
    }
    if (a.relax_intercept || a.relax_adding_up) && est != EstimatorArg::Constrained {
        return usage("--relax-intercept and --relax-adding-up apply only to the constrained estimator");
    }
    if (a.alpha.is_some() || a.lambda.is_some()) && est != EstimatorArg::ElasticNet {
        return usage("--alpha and --lambda apply only to the elastic net");
    }
    if a.alpha.is_some() != a.lambda.is_some() {
        return usage("give both --alpha and --lambda, or neither to cross-validate");
    }
    if (a.k.is_some() || a.cv_k) && est != EstimatorArg::BestSubset {
        return usage("--k and --cv-k apply only to best subset");
    }
    if a.k.is_some() && a.cv_k {
        return usage("--k and --cv-k are mutually exclusive");
    }
    if !a.predictors.is_empty() && est != EstimatorArg::Adh {
        return usage("--predictors applies only to adh");
    }
    if a.eval_all_post
        && !(est == EstimatorArg::ElasticNet && a.alpha.is_none() || est == EstimatorArg::BestSubset && a.cv_k)
    {
        return usage("--eval-all-post applies only when cross-validation runs");
    }
    if !a.beta.is_finite() || a.beta <= 0.0 {
        return usage("--beta must be positive");
    }
    Ok(())
}

pub fn parse_predictors(panel: &Panel, specs: &[String]) -> Result<Vec<Predictor>, CliError> {
    if specs.is_empty() {
        return Ok(Predictor::all_lags(panel.t0()));
    }
    let period = |label: &str| {
        panel
            .period_index(label)
            .ok_or_else(|| CliError::Usage(format!("unknown predictor period `{label}`")))
    };
    specs
        .iter()
        .map(|s| {
            let s = s.trim();
            if let Some(range) = s.strip_prefix("mean:") {
                let (a, b) = range
                    .split_once('-')
                    .ok_or_else(|| CliError::Usage(format!("predictor `{s}` must look like mean:FROM-TO")))?;
                Ok(Predictor::OutcomeMean {
                    start: period(a)?,
                    end: period(b)?,
                })
            } else if let Some(name) = s.strip_prefix("cov:") {
                let index = panel
                    .covariates()
                    .and_then(|c| c.index_of(name))
                    .ok_or_else(|| CliError::Usage(format!("unknown covariate `{name}`")))?;
                Ok(Predictor::Covariate { index })
            } else {
                Ok(Predictor::Outcome { period: period(s)? })
            }
        })
        .collect()
}

pub fn resolve(panel: &Panel, a: &EstimatorArgs, force_cv: bool) -> Result<Resolved, CliError> {
    validate(a)?;
    let design = Design::treated(panel);
    let restrictions = restrictions_of(a);
    let eval = if a.eval_all_post { EvalPeriods::AllPost } else { EvalPeriods::Last };
    let mut out = Resolved {
        estimator: Estimator::Did,
        rule: "none",
        cv: None,
        eval: eval.clone(),
        cv_k: a.cv_k,
    };
    match a.estimator {
        EstimatorArg::Did => {}
        EstimatorArg::Constrained => {
            out.estimator = Estimator::Constrained {
                relax_intercept: a.relax_intercept,
                relax_adding_up: a.relax_adding_up,
            }
        }
        EstimatorArg::Adh => {
            out.estimator = Estimator::Adh {
                predictors: parse_predictors(panel, &a.predictors)?,
                options: AdhOptions::default(),
            }
        }
        EstimatorArg::ElasticNet => {
            let (alpha, lambda) = match (a.alpha, a.lambda) {
                (Some(alpha), Some(lambda)) if !force_cv => {
                    out.rule = "given";
                    (alpha, lambda)
                }
                _ => {
                    let grid = CvGrid::default_for(panel)?.with_eval(eval);
                    let cv = cv_elastic_net_on(&design, &grid, restrictions)?;
                    out.rule = "cv";
                    let best = (cv.best_alpha, cv.best_lambda);
                    out.cv = Some(cv);
                    best
                }
            };
            out.estimator = Estimator::ElasticNet {
                alpha,
                lambda,
                restrictions,
            };
        }
        EstimatorArg::BestSubset => {
            let k = if let Some(k) = a.k {
                if k > panel.n_controls() {
                    return Err(CliError::Usage(format!("--k {k} exceeds the {} controls", panel.n_controls())));
                }
                out.rule = "given";
                k
            } else if a.cv_k {
                out.rule = "cv_k";
                cv_best_subset_k(&design, default_cv_k_max(&design), restrictions, &eval)?.k
            } else {
                out.rule = "poisson";
                choose_k_poisson_on(&design, a.beta, default_k_max(&design), restrictions)?.k
            };
            out.estimator = Estimator::BestSubset { k, restrictions };
        }
    }
    Ok(out)
}

fn report_period(panel: &Panel, label: Option<&str>) -> Result<usize, CliError> {
    let Some(label) = label else {
        return Ok(panel.n_periods() - 1);
    };
    match panel.period_index(label) {
        Some(t) if t >= panel.t0() => Ok(t),
        Some(_) => Err(CliError::Usage(format!("report period `{label}` is not a post-treatment period"))),
        None => Err(CliError::Usage(format!("unknown report period `{label}`"))),
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

struct Written {
    record: FitRecord,
    fit: WeightsFit,
}

fn write_fit(
    dir: &Path,
    stem: &str,
    panel: &Panel,
    fit: WeightsFit,
    resolved: &Resolved,
    report: usize,
    placebo: Option<&VarianceEstimate>,
) -> Result<Written, CliError> {
    let path = predict_counterfactual(&fit, panel)?;
    let mut record = FitRecord::new(panel, &fit, report, &path);
    record.tuning_rule = resolved.rule.to_string();
    if resolved.cv.is_some() || resolved.rule == "cv_k" {
        record.cv_eval = Some(resolved.eval.label().to_string());
    }
    if let Some(v) = placebo {
        record.placebo = Some(PlaceboRecord::from(v));
        record.warnings.extend(v.warnings.iter().cloned());
    }
    output::write_json(&dir.join(format!("{stem}.json")), &record)?;
    let csv_name = if stem == "fit" { "path.csv".to_string() } else { format!("path_{}.csv", &stem[4..]) };
    output::write_path_csv(&dir.join(csv_name), panel, &path)?;
    Ok(Written { record, fit })
}

fn summary_row(w: &Written, se: Option<f64>) -> SummaryRow {
    SummaryRow {
        model: output::model_name(w.fit.estimator).to_string(),
        omega_sum: w.fit.omega_sum(),
        mu: w.fit.mu,
        effect: w.record.effect_at_report,
        std_error: se,
    }
}

fn run_fit(a: &FitArgs, cv_only: bool) -> Result<Report, CliError> {
    if cv_only && a.estimator.estimator != EstimatorArg::ElasticNet {
        return Err(CliError::Usage("cv runs the elastic net; pass --estimator elastic-net".into()));
    }
    let panel = load_data(&a.data)?;
    let report = report_period(&panel, a.report_period.as_deref())?;
    let resolved = resolve(&panel, &a.estimator, cv_only)?;
    let fit = resolved.estimator.fit_panel(&panel)?;
    prepare_out(&a.out)?;
    if let Some(cv) = &resolved.cv {
        output::write_json(&a.out.join("cv.json"), cv)?;
    }
    let written = write_fit(&a.out, "fit", &panel, fit, &resolved, report, None)?;
    let table = output::summary_table(
        panel.treated_label(),
        &panel.period_labels()[report],
        &[summary_row(&written, None)],
    );
    output::write_text(&a.out.join("summary.txt"), &table)?;
    Ok(Report {
        text: table,
        not_converged: !written.fit.converged,
    })
}

fn retune_for(resolved: &Resolved) -> Option<Retune> {
    match &resolved.estimator {
        Estimator::ElasticNet { restrictions, .. } => Some(Retune::ElasticNet {
            alphas: DEFAULT_ALPHAS.to_vec(),
            restrictions: *restrictions,
        }),
        Estimator::BestSubset { restrictions, .. } if resolved.cv_k => Some(Retune::BestSubsetCv {
            restrictions: *restrictions,
        }),
        Estimator::BestSubset { restrictions, .. } => Some(Retune::BestSubsetPoisson {
            beta: 3.0,
            restrictions: *restrictions,
        }),
        _ => None,
    }
}

fn run_placebo(a: &PlaceboArgs) -> Result<Report, CliError> {
    let panel = load_data(&a.fit.data)?;
    let report = report_period(&panel, a.fit.report_period.as_deref())?;
    let resolved = resolve(&panel, &a.fit.estimator, false)?;
    let fit = resolved.estimator.fit_panel(&panel)?;
    let mut retune = None;
    if a.retune_placebos {
        retune = retune_for(&resolved);
        if let Some(Retune::BestSubsetPoisson { beta, .. }) = retune.as_mut() {
            *beta = a.fit.estimator.beta;
        }
    }
    let options = PlaceboOptions {
        retune,
        eval_period: None,
    };
    let s = a.s.unwrap_or_else(|| default_s(&panel));
    let variance = match a.scheme {
        SchemeArg::Unit => {
            if a.s.is_some() {
                return Err(CliError::Usage("--s applies only to the time and combined schemes".into()));
            }
            variance_random_unit(&panel, &resolved.estimator, &options)?
        }
        SchemeArg::Time => variance_random_time(&panel, &resolved.estimator, s, &options)?,
        SchemeArg::Combined => variance_combined(&panel, &resolved.estimator, s, &options)?,
    };
    prepare_out(&a.fit.out)?;
    output::write_json(&a.fit.out.join("placebo.json"), &variance)?;
    let mut written = write_fit(&a.fit.out, "fit", &panel, fit, &resolved, report, Some(&variance))?;
    if a.retune_placebos && options.retune.is_none() {
        written
            .record
            .warnings
            .push("estimator has no tuning parameters; --retune-placebos had no effect".into());
        output::write_json(&a.fit.out.join("fit.json"), &written.record)?;
    }
    let table = output::summary_table(
        panel.treated_label(),
        &panel.period_labels()[report],
        &[summary_row(&written, Some(variance.std_error))],
    );
    output::write_text(&a.fit.out.join("summary.txt"), &table)?;
    Ok(Report {
        text: table,
        not_converged: !written.fit.converged,
    })
}

/// Predictors for the synthetic-control row of a replication table.
fn replication_predictors(dataset: &Dataset, panel: &Panel) -> Vec<Predictor> {
    let labels: &[&str] = match dataset.name {
        "california" => &["1975", "1980", "1988"],
        _ => &[],
    };
    let picked: Vec<Predictor> = labels
        .iter()
        .filter_map(|l| panel.period_index(l))
        .map(|period| Predictor::Outcome { period })
        .collect();
    if picked.is_empty() {
        Predictor::all_lags(panel.t0())
    } else {
        picked
    }
}

fn run_replicate(a: &ReplicateArgs) -> Result<Report, CliError> {
    let dataset = datasets::find(&a.dataset)?;
    let panel = dataset.load()?;
    let report = report_period(&panel, Some(dataset.report_period))?;
    let design = Design::treated(&panel);
    let eval = if a.eval_all_post { EvalPeriods::AllPost } else { EvalPeriods::Last };

    let grid = CvGrid::default_for(&panel)?.with_eval(eval.clone());
    let cv = cv_elastic_net_on(&design, &grid, RestrictionSet::NONE)?;
    let k = cv_best_subset_k(&design, default_cv_k_max(&design), RestrictionSet::NONE, &eval)?.k;

    let plan: Vec<(&str, Estimator, &'static str, Option<CvResult>, bool)> = vec![
        (
            "adh",
            Estimator::Adh {
                predictors: replication_predictors(&dataset, &panel),
                options: AdhOptions::default(),
            },
            "none",
            None,
            false,
        ),
        (
            "constrained",
            Estimator::Constrained {
                relax_intercept: false,
                relax_adding_up: false,
            },
            "none",
            None,
            false,
        ),
        (
            "elastic_net",
            Estimator::ElasticNet {
                alpha: cv.best_alpha,
                lambda: cv.best_lambda,
                restrictions: RestrictionSet::NONE,
            },
            "cv",
            Some(cv.clone()),
            false,
        ),
        (
            "best_subset",
            Estimator::BestSubset {
                k,
                restrictions: RestrictionSet::NONE,
            },
            "cv_k",
            None,
            true,
        ),
        ("did", Estimator::Did, "none", None, false),
    ];

    prepare_out(&a.out)?;
    output::write_json(&a.out.join("cv.json"), &cv)?;
    let mut rows = Vec::new();
    let mut not_converged = false;
    for (stem, estimator, rule, cv, cv_k) in plan {
        let resolved = Resolved {
            estimator,
            rule,
            cv,
            eval: eval.clone(),
            cv_k,
        };
        let fit = resolved.estimator.fit_panel(&panel)?;
        let variance = variance_random_unit(&panel, &resolved.estimator, &PlaceboOptions::default())?;
        let written = write_fit(&a.out, &format!("fit_{stem}"), &panel, fit, &resolved, report, Some(&variance))?;
        not_converged |= !written.fit.converged;
        rows.push(summary_row(&written, Some(variance.std_error)));
    }
    let table = output::summary_table(panel.treated_label(), dataset.report_period, &rows);
    output::write_text(&a.out.join("table.txt"), &table)?;
    Ok(Report {
        text: table,
        not_converged,
    })
}

/// Label of an estimator kind as used in file names.
pub fn stem(kind: EstimatorKind) -> &'static str {
    kind.name()
}
