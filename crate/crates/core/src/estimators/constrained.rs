use nalgebra::{DMatrix, DVector};

use super::{EstimatorKind, RestrictionSet, Tuning, WeightsFit};
use crate::error::Result;
use crate::panel::{Design, Panel};
use crate::solvers::{solve_nonneg_qp, solve_simplex_qp, QpProblem, SolverReport};

/// Ridge added to the Gram matrix, relative to its mean diagonal, so that a
/// flat optimum resolves to one canonical point.
pub(crate) const CANONICAL_RIDGE: f64 = 1e-10;

/// Least squares balance with `omega >= 0`, `sum(omega) = 1` and `mu = 0`,
/// the last two dropped on request.
pub fn fit_constrained(panel: &Panel, relax_intercept: bool, relax_adding_up: bool) -> Result<WeightsFit> {
    fit_constrained_on(&Design::treated(panel), relax_intercept, relax_adding_up)
}

pub fn fit_constrained_on(design: &Design, relax_intercept: bool, relax_adding_up: bool) -> Result<WeightsFit> {
    let report = constrained_qp(
        design.donors_pre(),
        design.target_pre(),
        relax_intercept,
        !relax_adding_up,
    )?;
    let restrictions = RestrictionSet {
        no_intercept: !relax_intercept,
        adding_up: !relax_adding_up,
        nonnegative: true,
        constant_weights: false,
    };
    WeightsFit::assemble(
        design,
        EstimatorKind::Constrained,
        restrictions,
        report.intercept,
        report.weights,
        Tuning::None,
        report.converged,
        Vec::new(),
    )
}

pub(crate) fn canonical_ridge(design: &DMatrix<f64>, fit_intercept: bool) -> f64 {
    let n = design.ncols();
    if n == 0 {
        return 0.0;
    }
    let rows = design.nrows() as f64;
    let mut total = 0.0;
    for j in 0..n {
        let col = design.column(j);
        let mean = if fit_intercept { col.sum() / rows } else { 0.0 };
        total += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    CANONICAL_RIDGE * total / n as f64
}

pub(crate) fn constrained_qp(
    design: DMatrix<f64>,
    target: DVector<f64>,
    fit_intercept: bool,
    adding_up: bool,
) -> Result<SolverReport> {
    let ridge = canonical_ridge(&design, fit_intercept);
    let mut problem = QpProblem::simplex(design, target)
        .with_intercept(fit_intercept)
        .with_ridge(ridge);
    if adding_up {
        solve_simplex_qp(&problem)
    } else {
        problem.simplex_on_weights = false;
        solve_nonneg_qp(&problem)
    }
}
