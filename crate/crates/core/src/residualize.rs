//! Covariate adjustment: regress control outcomes on time-invariant
//! covariates and hand the residuals to any estimator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::solvers::solve_ols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// One cross-sectional regression per period.
    #[default]
    PerPeriod,
    /// Common slopes across periods with a free intercept per period.
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPanel {
    /// `(N+1) x T`, treated unit first.
    pub residuals: DMatrix<f64>,
    /// `T x (M+1)`: intercept then one slope per covariate, for each period.
    pub coefficient_paths: DMatrix<f64>,
    /// Numerical rank of the centered control covariate matrix.
    pub rank: usize,
    pub warnings: Vec<String>,
}

impl ResidualPanel {
    /// The original panel with outcomes replaced by the residuals.
    pub fn into_panel(self, panel: &Panel) -> Result<Panel> {
        panel.with_outcomes(self.residuals)
    }
}

pub fn residualize(panel: &Panel) -> Result<ResidualPanel> {
    residualize_with(panel, Mode::PerPeriod)
}

/// Fits the regressions on the control units only; the treated unit is
/// residualized with the control coefficients, so its outcomes never
/// influence the adjustment.
pub fn residualize_with(panel: &Panel, mode: Mode) -> Result<ResidualPanel> {
    let cov = panel
        .covariates()
        .ok_or_else(|| Error::invalid("residualization needs covariates"))?;
    let m = cov.len();
    let n = panel.n_controls();
    if n < m + 2 {
        return Err(Error::invalid(format!(
            "{n} controls are too few for {m} covariates plus an intercept"
        )));
    }
    let x_all = cov.values();
    let x_controls = x_all.rows(1, n).into_owned();
    let periods = panel.n_periods();
    let mut coefficients = DMatrix::zeros(periods, m + 1);
    let mut rank = m;

    match mode {
        Mode::PerPeriod => {
            for t in 0..periods {
                let y = DVector::from_fn(n, |i, _| panel.outcome(i + 1, t));
                let fit = solve_ols(&x_controls, &y, true)?;
                rank = fit.rank.unwrap_or(m);
                coefficients[(t, 0)] = fit.intercept;
                for j in 0..m {
                    coefficients[(t, j + 1)] = fit.weights[j];
                }
            }
        }
        Mode::Pooled => {
            let averages = DVector::from_fn(n, |i, _| {
                (0..periods).map(|t| panel.outcome(i + 1, t)).sum::<f64>() / periods as f64
            });
            let fit = solve_ols(&x_controls, &averages, true)?;
            rank = fit.rank.unwrap_or(m);
            let x_mean = DVector::from_fn(m, |j, _| x_controls.column(j).mean());
            let slope_term = x_mean.dot(&fit.weights);
            for t in 0..periods {
                let y_mean = (0..n).map(|i| panel.outcome(i + 1, t)).sum::<f64>() / n as f64;
                coefficients[(t, 0)] = y_mean - slope_term;
                for j in 0..m {
                    coefficients[(t, j + 1)] = fit.weights[j];
                }
            }
        }
    }

    let residuals = DMatrix::from_fn(panel.n_units(), periods, |i, t| {
        let mut fitted = coefficients[(t, 0)];
        for j in 0..m {
            fitted += coefficients[(t, j + 1)] * x_all[(i, j)];
        }
        panel.outcome(i, t) - fitted
    });
    let mut warnings = Vec::new();
    if rank < m {
        warnings.push(format!(
            "control covariates have rank {rank} < {m}; minimum-norm coefficients used"
        ));
    }
    Ok(ResidualPanel {
        residuals,
        coefficient_paths: coefficients,
        rank,
        warnings,
    })
}
