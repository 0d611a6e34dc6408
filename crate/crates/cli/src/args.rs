use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "panelcf", version, about = "Counterfactual weights for a single treated unit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one estimator and write fit.json, path.csv and summary.txt.
    Fit(FitArgs),
    /// Cross-validate the elastic net and fit at the selected point.
    Cv(FitArgs),
    /// Fit one estimator and estimate its variance by placebos.
    Placebo(PlaceboArgs),
    /// Run all five estimators on a replication dataset.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Wide outcome CSV: rows are periods, columns are units.
    #[arg(long, required_unless_present = "dataset")]
    pub input: Option<PathBuf>,
    /// Bundled dataset instead of --input (california, germany, mariel).
    #[arg(long, conflicts_with = "input")]
    pub dataset: Option<String>,
    /// Column label of the treated unit.
    #[arg(long)]
    pub treated: Option<String>,
    /// Label of the last pre-treatment period.
    #[arg(long)]
    pub t0: Option<String>,
    /// Covariate CSV: rows are units, columns are covariates.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Residualize outcomes on the covariates before fitting.
    #[arg(long, requires = "covariates")]
    pub residualize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Did,
    Adh,
    Constrained,
    #[value(alias = "elastic_net")]
    ElasticNet,
    #[value(alias = "best_subset")]
    BestSubset,
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    #[arg(long, value_enum, default_value = "did")]
    pub estimator: EstimatorArg,
    /// Impose mu = 0 (elastic net, best subset).
    #[arg(long)]
    pub no_intercept: bool,
    /// Impose sum(omega) = 1 (best subset).
    #[arg(long)]
    pub adding_up: bool,
    /// Impose omega >= 0 (elastic net, best subset).
    #[arg(long)]
    pub nonnegative: bool,
    /// Impose equal weights (best subset).
    #[arg(long)]
    pub constant_weights: bool,
    /// Constrained regression with a free intercept.
    #[arg(long)]
    pub relax_intercept: bool,
    /// Constrained regression without the adding-up constraint.
    #[arg(long)]
    pub relax_adding_up: bool,
    /// Elastic-net mixing weight; cross-validated when omitted with --lambda.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Elastic-net penalty in per-period scale.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Best-subset size; chosen by the Poisson prior when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    /// Poisson prior mean for choosing k.
    #[arg(long, default_value_t = 3.0)]
    pub beta: f64,
    /// Choose k by cross-validation instead of the Poisson prior.
    #[arg(long)]
    pub cv_k: bool,
    /// ADH predictors, comma separated: a period label, `mean:FROM-TO`, or
    /// `cov:NAME`. Defaults to every pre-treatment outcome.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Vec<String>,
    /// Score cross-validation on every post period instead of the last.
    #[arg(long)]
    pub eval_all_post: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Period label at which the summary reports the effect; defaults to the last.
    #[arg(long)]
    pub report_period: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Unit,
    Time,
    Combined,
}

#[derive(Debug, Args)]
pub struct PlaceboArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, value_enum, default_value = "unit")]
    pub scheme: SchemeArg,
    /// Held-out pre periods for the time and combined schemes.
    #[arg(long)]
    pub s: Option<usize>,
    /// Redo tuning inside every placebo instead of reusing the main fit's.
    #[arg(long)]
    pub retune_placebos: bool,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// california, germany or mariel.
    pub dataset: String,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Score cross-validation on every post period instead of the last.
    #[arg(long)]
    pub eval_all_post: bool,
}
