//! Cross-validation over the elastic-net `(alpha, lambda)` grid and the choice
//! of the best-subset size.
//!
//! Cross-validation treats each donor in turn as the pseudo-treated unit and
//! predicts it from the remaining donors, so the target of the original
//! design is never read.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{best_subset_path, fit_elastic_net_on, RestrictionSet, SubsetPath};
use crate::panel::{Design, Panel};
use crate::solvers::lambda_max;

/// Which periods a held-out prediction is scored on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPeriods {
    /// The final period only.
    Last,
    /// Every period after the fitting window.
    AllPost,
    /// Explicit period indices.
    Periods(Vec<usize>),
}

impl EvalPeriods {
    pub fn resolve(&self, design: &Design) -> Result<Vec<usize>> {
        let periods = design.panel().n_periods();
        let out = match self {
            EvalPeriods::Last => vec![periods - 1],
            EvalPeriods::AllPost => (design.window()..periods).collect(),
            EvalPeriods::Periods(list) => list.clone(),
        };
        if out.is_empty() || out.iter().any(|&t| t < design.window() || t >= periods) {
            return Err(Error::invalid("evaluation periods must lie after the fitting window"));
        }
        Ok(out)
    }

    pub fn label(&self) -> &'static str {
        match self {
            EvalPeriods::Last => "last",
            EvalPeriods::AllPost => "all_post",
            EvalPeriods::Periods(_) => "explicit",
        }
    }
}

pub const DEFAULT_ALPHAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_LAMBDA_COUNT: usize = 100;
pub const DEFAULT_LAMBDA_RATIO: f64 = 1e-4;

/// Search space for elastic-net cross-validation. `lambdas[a]` is the
/// decreasing penalty list for `alphas[a]`, in the per-period scale of
/// [`fit_elastic_net_on`].
#[derive(Debug, Clone, PartialEq)]
pub struct CvGrid {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<Vec<f64>>,
    pub eval: EvalPeriods,
}

impl CvGrid {
    /// A grid with the same explicit lambdas for every alpha.
    pub fn explicit(alphas: Vec<f64>, lambdas: Vec<f64>, eval: EvalPeriods) -> Self {
        let lambdas = vec![lambdas; alphas.len()];
        Self { alphas, lambdas, eval }
    }

    /// Default alphas and, per alpha, 100 log-spaced lambdas from the largest
    /// zero point of any pseudo-treated problem down by a factor `1e-4`.
    pub fn default_for(panel: &Panel) -> Result<Self> {
        Self::for_design(&Design::treated(panel), &DEFAULT_ALPHAS, DEFAULT_LAMBDA_COUNT, DEFAULT_LAMBDA_RATIO)
    }

    pub fn for_design(design: &Design, alphas: &[f64], count: usize, ratio: f64) -> Result<Self> {
        if count == 0 || !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::invalid("lambda grid needs count >= 1 and ratio in (0, 1)"));
        }
        let mut lambdas = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let mut top: f64 = 0.0;
            for j in 0..design.n_donors() {
                let Some(pseudo) = pseudo_design(design, j)? else { continue };
                let lm = lambda_max(&pseudo.donors_pre(), &pseudo.target_pre(), alpha)?;
                top = top.max(lm / (2.0 * design.window() as f64));
            }
            if top <= 0.0 {
                top = 1.0;
            }
            lambdas.push(log_spaced(top, ratio, count));
        }
        Ok(Self {
            alphas: alphas.to_vec(),
            lambdas,
            eval: EvalPeriods::Last,
        })
    }

    pub fn with_eval(mut self, eval: EvalPeriods) -> Self {
        self.eval = eval;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.lambdas.iter().all(|l| l.is_empty()) {
            return Err(Error::invalid("cross-validation grid is empty"));
        }
        if self.lambdas.len() != self.alphas.len() {
            return Err(Error::invalid("one lambda list is needed per alpha"));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::invalid("alphas must lie in (0, 1]"));
        }
        for list in &self.lambdas {
            if list.iter().any(|&l| !l.is_finite() || l <= 0.0) || list.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::invalid("lambdas must be positive and strictly decreasing"));
            }
        }
        Ok(())
    }
}

fn log_spaced(top: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![top];
    }
    let step = ratio.ln() / (count - 1) as f64;
    (0..count).map(|i| top * (step * i as f64).exp()).collect()
}

/// Donor at position `j` of `design` as target, the other donors as pool.
/// `None` when no other donor remains.
fn pseudo_design<'a>(design: &Design<'a>, j: usize) -> Result<Option<Design<'a>>> {
    if design.n_donors() < 2 {
        return Ok(None);
    }
    let target = design.donors()[j];
    let donors: Vec<usize> = design.donors().iter().copied().filter(|&d| d != target).collect();
    Design::new(design.panel(), target, donors, design.window()).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_alpha: f64,
    pub best_lambda: f64,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<Vec<f64>>,
    /// `cv_surface[a][l]`: mean squared prediction error at `(alphas[a], lambdas[a][l])`.
    pub cv_surface: Vec<Vec<f64>>,
    /// Mean squared error of each pseudo-treated donor at the optimum.
    pub per_unit_errors: Vec<f64>,
    pub eval_periods: Vec<usize>,
    pub eval_mode: String,
}

/// Cross-validated elastic net on the treated design of `panel`.
pub fn cv_elastic_net(panel: &Panel, grid: &CvGrid, restrictions: RestrictionSet) -> Result<CvResult> {
    cv_elastic_net_on(&Design::treated(panel), grid, restrictions)
}

/// For every grid point, fits each donor of `design` from the others and
/// averages the squared prediction errors over donors and evaluation periods.
///
/// The best point minimizes the surface; ties go to the larger lambda, then to
/// the smaller alpha. Every fit starts cold, so the result does not depend on
/// evaluation order or the number of threads.
pub fn cv_elastic_net_on(design: &Design, grid: &CvGrid, restrictions: RestrictionSet) -> Result<CvResult> {
    grid.validate()?;
    if design.n_donors() < 2 {
        return Err(Error::invalid("cross-validation needs at least two donors"));
    }
    let eval = grid.eval.resolve(design)?;
    let n = design.n_donors();
    let pseudo: Vec<Design> = (0..n)
        .map(|j| pseudo_design(design, j).map(|d| d.expect("at least two donors")))
        .collect::<Result<_>>()?;

    let mut tasks = Vec::new();
    for (a, list) in grid.lambdas.iter().enumerate() {
        for l in 0..list.len() {
            for j in 0..n {
                tasks.push((a, l, j));
            }
        }
    }
    let errors: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|&(a, l, j)| {
            let d = &pseudo[j];
            let fit = fit_elastic_net_on(d, grid.alphas[a], grid.lambdas[a][l], restrictions)?;
            let mut sq = 0.0;
            for &t in &eval {
                sq += (d.target_at(t) - fit.predict_at(d.panel(), t)).powi(2);
            }
            Ok(sq / eval.len() as f64)
        })
        .collect();

    let mut cursor = errors.into_iter();
    let mut surface = Vec::with_capacity(grid.alphas.len());
    let mut unit_errors: Vec<Vec<Vec<f64>>> = Vec::with_capacity(grid.alphas.len());
    for list in &grid.lambdas {
        let mut row = Vec::with_capacity(list.len());
        let mut row_units = Vec::with_capacity(list.len());
        for _ in list {
            let mut units = Vec::with_capacity(n);
            for _ in 0..n {
                units.push(cursor.next().expect("one result per task")?);
            }
            row.push(units.iter().sum::<f64>() / n as f64);
            row_units.push(units);
        }
        surface.push(row);
        unit_errors.push(row_units);
    }

    let (a, l) = argmin_surface(&surface, &grid.lambdas);
    Ok(CvResult {
        best_alpha: grid.alphas[a],
        best_lambda: grid.lambdas[a][l],
        alphas: grid.alphas.clone(),
        lambdas: grid.lambdas.clone(),
        per_unit_errors: unit_errors[a][l].clone(),
        cv_surface: surface,
        eval_periods: eval,
        eval_mode: grid.eval.label().to_string(),
    })
}

/// Relative gap below which two cross-validation scores count as equal.
const CV_TIE: f64 = 1e-12;

fn argmin_surface(surface: &[Vec<f64>], lambdas: &[Vec<f64>]) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_value = f64::INFINITY;
    for (a, row) in surface.iter().enumerate() {
        for (l, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let tol = CV_TIE * best_value.abs();
            let better = !best_value.is_finite()
                || v < best_value - tol
                || ((v - best_value).abs() <= tol && lambdas[a][l] > lambdas[best.0][best.1]);
            if better {
                best = (a, l);
                best_value = v;
            }
        }
    }
    best
}

/// Outcome of a best-subset size selection.
#[derive(Debug, Clone, PartialEq)]
pub struct KChoice {
    pub k: usize,
    /// Criterion per size (`None` where infeasible). Larger is better for the
    /// prior rule, smaller for cross-validation.
    pub scores: Vec<Option<f64>>,
    /// Some size fits the target exactly.
    pub degenerate: bool,
}

/// `min(N, T0 - 2)`: the largest size whose fit with an intercept still
/// leaves a residual degree of freedom.
pub fn default_k_max(design: &Design) -> usize {
    design.n_donors().min(design.window().saturating_sub(2))
}

/// Poisson-prior size choice on the treated design of `panel`.
pub fn choose_k_poisson(panel: &Panel, beta: f64, k_max: usize, restrictions: RestrictionSet) -> Result<KChoice> {
    choose_k_poisson_on(&Design::treated(panel), beta, k_max, restrictions)
}

/// Picks `k` maximizing `-(T0/2) ln(RSS_k / T0) + ln Poisson(k; beta)`, where
/// `RSS_k` is the best residual sum of squares using at most `k` donors.
///
/// An exact fit (RSS at most `1e-20 ||y||^2`) makes the profile likelihood
/// unbounded; the smallest such `k` wins and the choice is flagged as
/// degenerate. Ties go to the smaller `k`.
pub fn choose_k_poisson_on(design: &Design, beta: f64, k_max: usize, restrictions: RestrictionSet) -> Result<KChoice> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let path = best_subset_path(&design.donors_pre(), &design.target_pre(), k_max, restrictions)?;
    Ok(poisson_from_path(&path, design.window(), beta, &design.target_pre()))
}

pub(crate) fn poisson_from_path(path: &SubsetPath, window: usize, beta: f64, target: &DVector<f64>) -> KChoice {
    let t0 = window as f64;
    let zero = 1e-20 * target.norm_squared();
    let k_max = path.by_size.len() - 1;
    let mut scores = Vec::with_capacity(k_max + 1);
    let mut best: Option<(usize, f64)> = None;
    let mut degenerate = None;
    for k in 0..=k_max {
        let Some(fit) = path.best_up_to(k) else {
            scores.push(None);
            continue;
        };
        if fit.rss <= zero {
            scores.push(Some(f64::INFINITY));
            degenerate.get_or_insert(k);
            continue;
        }
        let score = poisson_score(fit.rss, t0, k, beta);
        scores.push(Some(score));
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((k, score));
        }
    }
    match degenerate {
        Some(k) => KChoice {
            k,
            scores,
            degenerate: true,
        },
        None => KChoice {
            k: best.map(|(k, _)| k).unwrap_or(0),
            scores,
            degenerate: false,
        },
    }
}

/// `-(T0/2) ln(rss / T0) - beta + k ln(beta) - ln(k!)`.
pub fn poisson_score(rss: f64, t0: f64, k: usize, beta: f64) -> f64 {
    let ln_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    -(t0 / 2.0) * (rss / t0).ln() - beta + k as f64 * beta.ln() - ln_fact
}

/// Cross-validated size choice: each donor is predicted from the others with
/// the best support of every size up to `k_max`, scored at `eval`.
pub fn cv_best_subset_k(
    design: &Design,
    k_max: usize,
    restrictions: RestrictionSet,
    eval: &EvalPeriods,
) -> Result<KChoice> {
    if design.n_donors() < 2 {
        return Err(Error::invalid("cross-validation needs at least two donors"));
    }
    if k_max + 1 > design.n_donors() {
        return Err(Error::invalid("k_max must leave a donor out for cross-validation"));
    }
    let periods = eval.resolve(design)?;
    let n = design.n_donors();
    let per_unit: Vec<Result<Vec<Option<f64>>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let d = pseudo_design(design, j)?.expect("at least two donors");
            let path = best_subset_path(&d.donors_pre(), &d.target_pre(), k_max, restrictions)?;
            Ok((0..=k_max)
                .map(|k| {
                    path.best_up_to(k).map(|b| {
                        let mut sq = 0.0;
                        for &t in &periods {
                            let mut pred = b.mu;
                            for (&pos, &w) in b.support.iter().zip(&b.weights) {
                                pred += w * d.panel().outcome(d.donors()[pos], t);
                            }
                            sq += (d.target_at(t) - pred).powi(2);
                        }
                        sq / periods.len() as f64
                    })
                })
                .collect())
        })
        .collect();
    let per_unit = per_unit.into_iter().collect::<Result<Vec<_>>>()?;
    let mut scores = Vec::with_capacity(k_max + 1);
    let mut best: Option<(usize, f64)> = None;
    for k in 0..=k_max {
        let mut total = 0.0;
        let mut feasible = true;
        for unit in &per_unit {
            match unit[k] {
                Some(e) => total += e,
                None => feasible = false,
            }
        }
        if !feasible {
            scores.push(None);
            continue;
        }
        let score = total / n as f64;
        scores.push(Some(score));
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((k, score));
        }
    }
    let k = best.map(|(k, _)| k).ok_or_else(|| Error::invalid("no feasible subset size"))?;
    Ok(KChoice {
        k,
        scores,
        degenerate: false,
    })
}

/// Default largest size for [`cv_best_subset_k`]. Exhaustive search over five
/// or more donors of a few dozen is slow once repeated for every pseudo unit.
pub fn default_cv_k_max(design: &Design) -> usize {
    4.min(design.n_donors() - 1).min(design.window().saturating_sub(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = log_spaced(10.0, 1e-4, 5);
        assert_eq!(g[0], 10.0);
        assert!((g[4] - 1e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn ties_prefer_larger_lambda_then_smaller_alpha() {
        let lambdas = vec![vec![3.0, 2.0], vec![4.0, 1.0]];
        let surface = vec![vec![1.0, 1.0], vec![2.0, 1.0]];
        assert_eq!(argmin_surface(&surface, &lambdas), (0, 0));
        let lambdas = vec![vec![3.0, 2.0], vec![3.0, 1.0]];
        let surface = vec![vec![1.0, 5.0], vec![1.0, 5.0]];
        assert_eq!(argmin_surface(&surface, &lambdas), (0, 0));
    }

    #[test]
    fn poisson_score_matches_formula() {
        let s = poisson_score(2.0, 10.0, 2, 3.0);
        let expect = -5.0 * (0.2f64).ln() - 3.0 + 2.0 * 3.0f64.ln() - 2.0f64.ln();
        assert!((s - expect).abs() < 1e-12);
    }
}
