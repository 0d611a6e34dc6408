//! Optimization kernels used by the estimators: least squares, simplex and
//! nonnegativity constrained quadratic minimization, elastic-net coordinate
//! descent, and subset enumeration.
//!
//! Every solver takes a `T0 x N` design (one column per donor pre-path) and a
//! length-`T0` target, and optionally fits an unpenalized intercept. The
//! intercept is profiled out by centering, so the reported weights minimize
//! the centered problem and `intercept = mean(target) - mean(design) . w`.

mod elastic_net;
mod ols;
mod simplex;
mod subsets;

use nalgebra::{DMatrix, DVector};

pub use elastic_net::{lambda_max, solve_elastic_net, solve_elastic_net_with, CdOptions, ElasticNetProblem};
pub use ols::solve_ols;
pub use simplex::{
    project_onto_simplex, solve_nonneg_qp, solve_nonneg_qp_with, solve_simplex_qp, solve_simplex_qp_with, QpOptions,
    QpProblem,
};
pub use subsets::{binomial, enumerate_subsets, Subsets, SUBSET_LIMIT};

use crate::error::{Error, Result};

/// Outcome of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub weights: DVector<f64>,
    /// Zero when no intercept was fit.
    pub intercept: f64,
    /// Value of the solver's own objective at the returned point.
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest optimality violation, scaled as documented by each solver.
    pub kkt_residual: f64,
    /// Numerical rank of the (centered) design, when the solver computes it.
    pub rank: Option<usize>,
}

impl SolverReport {
    /// Residual sum of squares of `target - intercept - design * weights`.
    pub fn rss(&self, design: &DMatrix<f64>, target: &DVector<f64>) -> f64 {
        rss(design, target, self.intercept, &self.weights)
    }
}

pub(crate) fn rss(design: &DMatrix<f64>, target: &DVector<f64>, mu: f64, w: &DVector<f64>) -> f64 {
    let mut fitted = design * w;
    fitted.add_scalar_mut(mu);
    (target - fitted).norm_squared()
}

/// Design and target with column means removed, plus the means.
pub(crate) struct Centered {
    pub design: DMatrix<f64>,
    pub target: DVector<f64>,
    pub design_means: DVector<f64>,
    pub target_mean: f64,
}

pub(crate) fn center(design: &DMatrix<f64>, target: &DVector<f64>, fit_intercept: bool) -> Centered {
    let n = design.ncols();
    if !fit_intercept || design.nrows() == 0 {
        return Centered {
            design: design.clone(),
            target: target.clone(),
            design_means: DVector::zeros(n),
            target_mean: 0.0,
        };
    }
    let rows = design.nrows() as f64;
    let design_means = DVector::from_fn(n, |j, _| design.column(j).sum() / rows);
    let target_mean = target.sum() / rows;
    let mut x = design.clone();
    for j in 0..n {
        let m = design_means[j];
        x.column_mut(j).add_scalar_mut(-m);
    }
    Centered {
        design: x,
        target: target.add_scalar(-target_mean),
        design_means,
        target_mean,
    }
}

impl Centered {
    pub fn intercept(&self, w: &DVector<f64>) -> f64 {
        self.target_mean - self.design_means.dot(w)
    }
}

pub(crate) fn check_shapes(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<()> {
    if design.nrows() != target.len() {
        return Err(Error::invalid(format!(
            "design has {} rows but target has {} entries",
            design.nrows(),
            target.len()
        )));
    }
    if design.nrows() == 0 {
        return Err(Error::invalid("design has no rows"));
    }
    if design.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("design or target contains non-finite values"));
    }
    Ok(())
}
