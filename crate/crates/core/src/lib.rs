//! Counterfactual estimation for a single treated unit in panel data.
//!
//! Every estimator imputes the treated unit's untreated outcome as an
//! intercept plus a weighted sum of control outcomes. They differ in which
//! restrictions they place on the intercept and weights and in how the
//! weights are chosen. The crate covers difference in differences, the
//! synthetic control, constrained regression, the elastic net and best
//! subset selection, with cross-validated tuning, placebo variance estimates
//! and covariate residualization.

pub mod datasets;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod panel;
pub mod residualize;
pub mod solvers;
pub mod tuning;

pub use error::{Error, Result};
pub use estimators::{
    predict_counterfactual, CounterfactualPath, Estimator, EstimatorKind, RestrictionSet, Tuning, WeightsFit,
};
pub use panel::{
    load_covariates, load_panel, read_covariates, read_panel, write_panel, Covariates, Design, Panel, PanelView,
};
