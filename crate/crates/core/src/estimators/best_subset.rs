use nalgebra::{DMatrix, DVector};

use super::{EstimatorKind, RestrictionSet, Tuning, WeightsFit};
use crate::error::{Error, Result};
use crate::panel::{Design, Panel};
use crate::solvers::{
    binomial, enumerate_subsets, solve_nonneg_qp, solve_ols, solve_simplex_qp, QpProblem, SolverReport,
    SUBSET_LIMIT,
};

/// Two residual sums of squares closer than this fraction of `||y||^2` tie.
pub(crate) const TIE_TOLERANCE: f64 = 1e-10;

/// Least squares of `target` on the columns of `design` under `restrictions`.
///
/// `objective_value` is the residual sum of squares. An empty design is only
/// valid without `adding_up`.
pub fn restricted_least_squares(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    restrictions: RestrictionSet,
) -> Result<SolverReport> {
    let n = design.ncols();
    let fit_intercept = !restrictions.no_intercept;
    if n == 0 && restrictions.adding_up {
        return Err(Error::invalid("adding-up needs at least one donor"));
    }
    if restrictions.constant_weights {
        return constant_weights(design, target, restrictions);
    }
    let mut report = match (restrictions.adding_up, restrictions.nonnegative) {
        (true, true) => solve_simplex_qp(&QpProblem::simplex(design.clone(), target.clone()).with_intercept(fit_intercept))?,
        (false, true) => {
            let mut p = QpProblem::simplex(design.clone(), target.clone()).with_intercept(fit_intercept);
            p.simplex_on_weights = false;
            solve_nonneg_qp(&p)?
        }
        (true, false) => {
            // substitute the last weight: w_last = 1 - sum(others)
            let last = design.column(n - 1).into_owned();
            let reduced = DMatrix::from_fn(design.nrows(), n - 1, |i, j| design[(i, j)] - last[i]);
            let sub = solve_ols(&reduced, &(target - &last), fit_intercept)?;
            let mut w = DVector::zeros(n);
            w.rows_mut(0, n - 1).copy_from(&sub.weights);
            w[n - 1] = 1.0 - sub.weights.sum();
            SolverReport {
                weights: w,
                ..sub
            }
        }
        (false, false) => solve_ols(design, target, fit_intercept)?,
    };
    report.objective_value = report.rss(design, target);
    Ok(report)
}

fn constant_weights(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    restrictions: RestrictionSet,
) -> Result<SolverReport> {
    let n = design.ncols();
    let fit_intercept = !restrictions.no_intercept;
    let rows = design.nrows() as f64;
    let total = DVector::from_fn(design.nrows(), |i, _| design.row(i).sum());
    let common = if n == 0 {
        0.0
    } else if restrictions.adding_up {
        1.0 / n as f64
    } else {
        let col = DMatrix::from_column_slice(design.nrows(), 1, total.as_slice());
        let w = solve_ols(&col, target, fit_intercept)?.weights[0];
        if restrictions.nonnegative {
            w.max(0.0)
        } else {
            w
        }
    };
    let resid = target - &total * common;
    let mu = if fit_intercept { resid.sum() / rows } else { 0.0 };
    let weights = DVector::from_element(n, common);
    let rss = crate::solvers::rss(design, target, mu, &weights);
    Ok(SolverReport {
        weights,
        intercept: mu,
        objective_value: rss,
        iterations: 1,
        converged: true,
        kkt_residual: 0.0,
        rank: None,
    })
}

/// Best support of one size.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeBest {
    /// Donor positions in increasing order.
    pub support: Vec<usize>,
    pub mu: f64,
    /// Weights on `support`, same order.
    pub weights: Vec<f64>,
    pub rss: f64,
    pub converged: bool,
    /// Found by forward stepwise search rather than enumeration.
    pub heuristic: bool,
}

/// Best fit at each support size `0..=k_max`; `None` where no support of that
/// size is feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPath {
    pub by_size: Vec<Option<SizeBest>>,
    pub tie_tolerance: f64,
}

impl SubsetPath {
    /// Minimum RSS over sizes `0..=k`; ties go to the smaller size.
    pub fn best_up_to(&self, k: usize) -> Option<&SizeBest> {
        let mut best: Option<&SizeBest> = None;
        for entry in self.by_size.iter().take(k + 1).flatten() {
            match best {
                Some(b) if entry.rss >= b.rss - self.tie_tolerance => {}
                _ => best = Some(entry),
            }
        }
        best
    }
}

/// Exhaustive search over every support of each size up to `k_max`. Sizes
/// with more than [`SUBSET_LIMIT`] candidates are grown greedily from the
/// previous size instead.
///
/// Within a size the lexicographically first support wins ties.
pub fn best_subset_path(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    k_max: usize,
    restrictions: RestrictionSet,
) -> Result<SubsetPath> {
    let n = design.ncols();
    if k_max > n {
        return Err(Error::invalid(format!("k = {k_max} exceeds the {n} donors")));
    }
    let tie_tolerance = TIE_TOLERANCE * target.norm_squared().max(f64::MIN_POSITIVE);
    let mut by_size: Vec<Option<SizeBest>> = Vec::with_capacity(k_max + 1);
    for size in 0..=k_max {
        if size == 0 && restrictions.adding_up {
            by_size.push(None);
            continue;
        }
        let greedy = binomial(n, size) > SUBSET_LIMIT;
        let previous = by_size.last().and_then(|b| b.as_ref());
        let heuristic = greedy || (size > 0 && previous.is_some_and(|b| b.heuristic));
        let candidates: Box<dyn Iterator<Item = Vec<usize>>> = if greedy {
            let base = previous.map(|b| b.support.clone()).unwrap_or_default();
            let grown: Vec<Vec<usize>> = (0..n)
                .filter(|j| !base.contains(j))
                .map(|j| {
                    let mut s = base.clone();
                    s.push(j);
                    s.sort_unstable();
                    s
                })
                .collect();
            Box::new(grown.into_iter())
        } else {
            Box::new(enumerate_subsets(n, size)?)
        };
        let mut best: Option<SizeBest> = None;
        for support in candidates {
            let sub = DMatrix::from_fn(design.nrows(), support.len(), |i, j| design[(i, support[j])]);
            let report = restricted_least_squares(&sub, target, restrictions)?;
            let better = match &best {
                None => true,
                Some(b) => report.objective_value < b.rss - tie_tolerance,
            };
            if better {
                best = Some(SizeBest {
                    weights: report.weights.iter().copied().collect(),
                    mu: report.intercept,
                    rss: report.objective_value,
                    converged: report.converged,
                    heuristic,
                    support,
                });
            }
        }
        by_size.push(best);
    }
    Ok(SubsetPath { by_size, tie_tolerance })
}

/// Minimum-RSS fit using at most `k` donors.
pub fn fit_best_subset(panel: &Panel, k: usize, restrictions: RestrictionSet) -> Result<WeightsFit> {
    fit_best_subset_on(&Design::treated(panel), k, restrictions)
}

pub fn fit_best_subset_on(design: &Design, k: usize, restrictions: RestrictionSet) -> Result<WeightsFit> {
    let path = best_subset_path(&design.donors_pre(), &design.target_pre(), k, restrictions)?;
    fit_from_path(design, &path, k, restrictions)
}

pub(crate) fn fit_from_path(
    design: &Design,
    path: &SubsetPath,
    k: usize,
    restrictions: RestrictionSet,
) -> Result<WeightsFit> {
    let best = path
        .best_up_to(k)
        .ok_or_else(|| Error::invalid("no feasible support for the requested size"))?;
    let mut omega = DVector::zeros(design.n_donors());
    for (&j, &w) in best.support.iter().zip(&best.weights) {
        omega[j] = w;
    }
    let heuristic = path.by_size.iter().take(k + 1).flatten().any(|b| b.heuristic);
    let mut warnings = Vec::new();
    if heuristic {
        warnings.push("some support sizes were searched by forward stepwise selection".to_string());
    }
    WeightsFit::assemble(
        design,
        EstimatorKind::BestSubset,
        restrictions,
        best.mu,
        omega,
        Tuning::BestSubset {
            k,
            selected: best.support.clone(),
            heuristic,
        },
        best.converged,
        warnings,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_best_control_under_simplex() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 5.0, 2.0, 2.0, 5.0, 3.0, 3.0, 5.0, 3.5]);
        let y = DVector::from_vec(vec![2.1, 3.0, 3.4]);
        let path = best_subset_path(&x, &y, 1, RestrictionSet::SYNTHETIC).unwrap();
        assert!(path.by_size[0].is_none());
        let best = path.best_up_to(1).unwrap();
        assert_eq!(best.support, vec![2]);
        assert_eq!(best.weights, vec![1.0]);
    }

    #[test]
    fn adding_up_substitution_matches_constraint() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 3.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![0.3, 1.9, 1.1, 1.2]);
        let r = restricted_least_squares(
            &x,
            &y,
            RestrictionSet {
                adding_up: true,
                ..RestrictionSet::NONE
            },
        )
        .unwrap();
        assert!((r.weights.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_weights_with_adding_up_is_did() {
        let x = DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 4.0, 8.0]);
        let y = DVector::from_vec(vec![4.0, 6.0]);
        let r = restricted_least_squares(&x, &y, RestrictionSet::DID).unwrap();
        assert_eq!(r.weights.as_slice(), [0.5, 0.5]);
        assert!((r.intercept - 0.5).abs() < 1e-15);
    }
}
