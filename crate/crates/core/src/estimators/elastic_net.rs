use super::{EstimatorKind, RestrictionSet, Tuning, WeightsFit};
use crate::error::{Error, Result};
use crate::panel::{Design, Panel};
use crate::solvers::{solve_elastic_net, ElasticNetProblem};

/// Converts a per-period penalty into the scale of [`solve_elastic_net`].
///
/// Estimator-level `lambda` multiplies the penalty of the averaged objective
/// `RSS / (2 T0) + lambda * pen(omega)`. Multiplying through by `2 T0` gives
/// the solver's `RSS + 2 T0 lambda * pen(omega)`.
pub fn solver_lambda(lambda: f64, window: usize) -> f64 {
    2.0 * window as f64 * lambda
}

/// Penalized balance with a free intercept unless `no_intercept` is set.
///
/// Only `no_intercept` and `nonnegative` can be combined with the penalty.
pub fn fit_elastic_net(
    panel: &Panel,
    alpha: f64,
    lambda: f64,
    restrictions: RestrictionSet,
) -> Result<WeightsFit> {
    fit_elastic_net_on(&Design::treated(panel), alpha, lambda, restrictions)
}

pub fn fit_elastic_net_on(
    design: &Design,
    alpha: f64,
    lambda: f64,
    restrictions: RestrictionSet,
) -> Result<WeightsFit> {
    if restrictions.adding_up || restrictions.constant_weights {
        return Err(Error::UnsupportedRestrictions(
            "the elastic net supports only no_intercept and nonnegative".into(),
        ));
    }
    let problem = ElasticNetProblem {
        design: design.donors_pre(),
        target: design.target_pre(),
        lambda: solver_lambda(lambda, design.window()),
        alpha,
        fit_intercept: !restrictions.no_intercept,
        nonnegative: restrictions.nonnegative,
    };
    let report = solve_elastic_net(&problem)?;
    WeightsFit::assemble(
        design,
        EstimatorKind::ElasticNet,
        restrictions,
        report.intercept,
        report.weights,
        Tuning::ElasticNet { alpha, lambda },
        report.converged,
        Vec::new(),
    )
}
