//! The five weighting estimators. Each produces a [`WeightsFit`]: an intercept
//! `mu` and one weight per donor, imputing `Y(0) = mu + sum_i omega_i Y_i`.
//!
//! Every estimator works on a [`Design`], so the same code serves the treated
//! unit and the placebo problems used for tuning and inference. The
//! `fit_*` functions are panel-level shorthands for [`Design::treated`].

mod adh;
mod best_subset;
mod constrained;
mod did;
mod elastic_net;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use adh::{fit_adh, fit_adh_on, AdhOptions, Predictor};
pub use best_subset::{best_subset_path, fit_best_subset, fit_best_subset_on, restricted_least_squares, SubsetPath};
pub use constrained::{fit_constrained, fit_constrained_on};
pub use did::{fit_did, fit_did_on};
pub use elastic_net::{fit_elastic_net, fit_elastic_net_on, solver_lambda};

use crate::error::{Error, Result};
use crate::panel::{Design, Panel};

/// Which of the four weight restrictions are imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RestrictionSet {
    /// `mu = 0`
    pub no_intercept: bool,
    /// `sum(omega) = 1`
    pub adding_up: bool,
    /// `omega_i >= 0`
    pub nonnegative: bool,
    /// all `omega_i` equal
    pub constant_weights: bool,
}

impl RestrictionSet {
    pub const NONE: Self = Self {
        no_intercept: false,
        adding_up: false,
        nonnegative: false,
        constant_weights: false,
    };

    /// Synthetic control: zero intercept, weights on the simplex.
    pub const SYNTHETIC: Self = Self {
        no_intercept: true,
        adding_up: true,
        nonnegative: true,
        constant_weights: false,
    };

    /// Difference in differences: equal weights summing to one, free intercept.
    pub const DID: Self = Self {
        no_intercept: false,
        adding_up: true,
        nonnegative: true,
        constant_weights: true,
    };

    /// Names of the restrictions `(mu, omega)` violates by more than `tol`.
    pub fn violations(&self, mu: f64, omega: &[f64], tol: f64) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.no_intercept && mu.abs() > tol {
            out.push("no_intercept");
        }
        if self.adding_up && (omega.iter().sum::<f64>() - 1.0).abs() > tol {
            out.push("adding_up");
        }
        if self.nonnegative && omega.iter().any(|&w| w < -tol) {
            out.push("nonnegative");
        }
        if self.constant_weights {
            if let Some(&first) = omega.first() {
                if omega.iter().any(|&w| (w - first).abs() > tol) {
                    out.push("constant_weights");
                }
            }
        }
        out
    }

    pub fn is_satisfied(&self, mu: f64, omega: &[f64], tol: f64) -> bool {
        self.violations(mu, omega, tol).is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Did,
    Adh,
    Constrained,
    ElasticNet,
    BestSubset,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Did => "did",
            EstimatorKind::Adh => "adh",
            EstimatorKind::Constrained => "constrained",
            EstimatorKind::ElasticNet => "elastic_net",
            EstimatorKind::BestSubset => "best_subset",
        }
    }
}

/// Tuning values behind a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tuning {
    None,
    ElasticNet {
        alpha: f64,
        lambda: f64,
    },
    BestSubset {
        k: usize,
        /// Support actually selected, as donor positions.
        selected: Vec<usize>,
        /// Some sizes were searched greedily instead of exhaustively.
        heuristic: bool,
    },
    Adh {
        /// Diagonal of the predictor weight matrix.
        v: Vec<f64>,
        predictors: Vec<String>,
    },
}

/// Intercept and donor weights produced by one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFit {
    pub mu: f64,
    pub omega: Vec<f64>,
    /// Unit index of each weight in the panel it was fit on.
    pub donors: Vec<usize>,
    pub estimator: EstimatorKind,
    pub restrictions: RestrictionSet,
    pub tuning: Tuning,
    /// Root mean squared balance error over the fitting window.
    pub pre_rmse: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl WeightsFit {
    pub fn omega_sum(&self) -> f64 {
        self.omega.iter().sum()
    }

    pub fn n_nonzero(&self) -> usize {
        self.omega.iter().filter(|&&w| w != 0.0).count()
    }

    /// `mu + sum_i omega_i Y_{donor_i, period}`.
    pub fn predict_at(&self, panel: &Panel, period: usize) -> f64 {
        let mut acc = self.mu;
        for (w, &d) in self.omega.iter().zip(&self.donors) {
            acc += w * panel.outcome(d, period);
        }
        acc
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        design: &Design,
        estimator: EstimatorKind,
        restrictions: RestrictionSet,
        mu: f64,
        omega: DVector<f64>,
        tuning: Tuning,
        converged: bool,
        mut warnings: Vec<String>,
    ) -> Result<Self> {
        let omega: Vec<f64> = omega.iter().copied().collect();
        if !mu.is_finite() || omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid(format!("{} produced non-finite weights", estimator.name())));
        }
        let y = design.target_pre();
        let x = design.donors_pre();
        let mut sq = 0.0;
        for s in 0..design.window() {
            let mut fitted = mu;
            for j in 0..omega.len() {
                fitted += omega[j] * x[(s, j)];
            }
            sq += (y[s] - fitted).powi(2);
        }
        if !converged {
            warnings.push(format!("{} solver did not converge", estimator.name()));
        }
        Ok(Self {
            mu,
            omega,
            donors: design.donors().to_vec(),
            estimator,
            restrictions,
            tuning,
            pre_rmse: (sq / design.window() as f64).sqrt(),
            converged,
            warnings,
        })
    }
}

/// Imputed untreated outcomes and effects over the post-treatment periods.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualPath {
    /// Period indices, `t0..T`.
    pub periods: Vec<usize>,
    pub observed: Vec<f64>,
    pub imputed: Vec<f64>,
    /// `observed - imputed`.
    pub effects: Vec<f64>,
}

impl CounterfactualPath {
    /// Effect at the given period index, if it is a post period.
    pub fn effect_at(&self, period: usize) -> Option<f64> {
        self.periods.iter().position(|&p| p == period).map(|i| self.effects[i])
    }
}

/// Applies a treated-unit fit to the post-treatment periods of `panel`.
pub fn predict_counterfactual(fit: &WeightsFit, panel: &Panel) -> Result<CounterfactualPath> {
    if fit.omega.len() != fit.donors.len() {
        return Err(Error::invalid("fit has mismatched weights and donors"));
    }
    if fit.donors.iter().any(|&d| d == 0 || d >= panel.n_units()) {
        return Err(Error::invalid("fit donors do not match the panel's controls"));
    }
    let periods: Vec<usize> = (panel.t0()..panel.n_periods()).collect();
    let observed: Vec<f64> = periods.iter().map(|&t| panel.outcome(0, t)).collect();
    let imputed: Vec<f64> = periods.iter().map(|&t| fit.predict_at(panel, t)).collect();
    let effects = observed.iter().zip(&imputed).map(|(o, i)| o - i).collect();
    Ok(CounterfactualPath {
        periods,
        observed,
        imputed,
        effects,
    })
}

/// An estimator with its settings, fit the same way on any design.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Did,
    Constrained {
        relax_intercept: bool,
        relax_adding_up: bool,
    },
    Adh {
        predictors: Vec<Predictor>,
        options: AdhOptions,
    },
    ElasticNet {
        alpha: f64,
        /// Per-period penalty scale; see [`solver_lambda`].
        lambda: f64,
        restrictions: RestrictionSet,
    },
    BestSubset {
        k: usize,
        restrictions: RestrictionSet,
    },
}

impl Estimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Did => EstimatorKind::Did,
            Estimator::Constrained { .. } => EstimatorKind::Constrained,
            Estimator::Adh { .. } => EstimatorKind::Adh,
            Estimator::ElasticNet { .. } => EstimatorKind::ElasticNet,
            Estimator::BestSubset { .. } => EstimatorKind::BestSubset,
        }
    }

    pub fn fit(&self, design: &Design) -> Result<WeightsFit> {
        match self {
            Estimator::Did => fit_did_on(design),
            Estimator::Constrained {
                relax_intercept,
                relax_adding_up,
            } => fit_constrained_on(design, *relax_intercept, *relax_adding_up),
            Estimator::Adh { predictors, options } => fit_adh_on(design, predictors, options),
            Estimator::ElasticNet {
                alpha,
                lambda,
                restrictions,
            } => fit_elastic_net_on(design, *alpha, *lambda, *restrictions),
            Estimator::BestSubset { k, restrictions } => {
                fit_best_subset_on(design, (*k).min(design.n_donors()), *restrictions)
            }
        }
    }

    pub fn fit_panel(&self, panel: &Panel) -> Result<WeightsFit> {
        self.fit(&Design::treated(panel))
    }
}
