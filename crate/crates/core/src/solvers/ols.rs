use nalgebra::{DMatrix, DVector};

use super::{center, check_shapes, SolverReport};
use crate::error::Result;

/// Singular values below this fraction of the largest are treated as zero.
pub(crate) const RANK_CUTOFF: f64 = 1e-10;

/// Least squares with an optional free intercept.
///
/// Rank-deficient designs get the minimum-norm weight vector (intercept
/// profiled out), via an SVD pseudo-inverse; `rank` reports the numerical rank
/// of the centered design. `kkt_residual` is `max |x_j' r|` relative to
/// `||X|| ||y||` on the centered problem.
pub fn solve_ols(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    fit_intercept: bool,
) -> Result<SolverReport> {
    check_shapes(design, target)?;
    let c = center(design, target, fit_intercept);
    let (weights, rank) = min_norm_lstsq(&c.design, &c.target);
    let intercept = if fit_intercept { c.intercept(&weights) } else { 0.0 };

    let resid = &c.target - &c.design * &weights;
    let grad = c.design.tr_mul(&resid);
    let scale = c.design.norm() * c.target.norm();
    let kkt = if scale > 0.0 { grad.amax() / scale } else { 0.0 };
    Ok(SolverReport {
        objective_value: super::rss(design, target, intercept, &weights),
        weights,
        intercept,
        iterations: 1,
        converged: true,
        kkt_residual: kkt,
        rank: Some(rank),
    })
}

/// Minimum-norm solution of `min ||b - A x||`, and the numerical rank of `A`.
pub(crate) fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize) {
    let n = a.ncols();
    if n == 0 {
        return (DVector::zeros(0), 0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return (DVector::zeros(n), 0);
    }
    let eps = RANK_CUTOFF * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let x = svd.solve(b, eps).expect("svd computed with both factors");
    (x, rank)
}
