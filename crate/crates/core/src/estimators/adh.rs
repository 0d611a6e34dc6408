use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::constrained::{canonical_ridge, constrained_qp};
use super::{EstimatorKind, RestrictionSet, Tuning, WeightsFit};
use crate::error::{Error, Result};
use crate::panel::{Design, Panel};
use crate::solvers::{solve_simplex_qp_with, QpOptions, QpProblem, SolverReport};

/// One row of the predictor matrix matched by the inner problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    /// Outcome in one period (0-based index).
    Outcome { period: usize },
    /// Mean outcome over periods `start..=end`.
    OutcomeMean { start: usize, end: usize },
    /// Column of the panel's covariate matrix.
    Covariate { index: usize },
}

impl Predictor {
    /// Every pre-treatment outcome of the panel.
    pub fn all_lags(window: usize) -> Vec<Predictor> {
        (0..window).map(|period| Predictor::Outcome { period }).collect()
    }

    pub fn label(&self, panel: &Panel) -> String {
        let periods = panel.period_labels();
        match *self {
            Predictor::Outcome { period } => format!("outcome[{}]", periods[period]),
            Predictor::OutcomeMean { start, end } => {
                format!("mean[{}..{}]", periods[start], periods[end])
            }
            Predictor::Covariate { index } => panel
                .covariates()
                .map(|c| c.names()[index].clone())
                .unwrap_or_else(|| format!("covariate[{index}]")),
        }
    }

    fn value(&self, panel: &Panel, unit: usize) -> f64 {
        match *self {
            Predictor::Outcome { period } => panel.outcome(unit, period),
            Predictor::OutcomeMean { start, end } => {
                (start..=end).map(|t| panel.outcome(unit, t)).sum::<f64>() / (end - start + 1) as f64
            }
            Predictor::Covariate { index } => panel.covariates().expect("checked").values()[(unit, index)],
        }
    }

    /// Restricts the predictor to the design's fitting window, or `None` when
    /// nothing of it lies inside.
    fn within(&self, window: usize) -> Option<Predictor> {
        match *self {
            Predictor::Outcome { period } => (period < window).then_some(self.clone()),
            Predictor::OutcomeMean { start, end } => (start < window).then(|| Predictor::OutcomeMean {
                start,
                end: end.min(window - 1),
            }),
            Predictor::Covariate { .. } => Some(self.clone()),
        }
    }

    fn check(&self, panel: &Panel) -> Result<()> {
        match *self {
            Predictor::Outcome { period } if period >= panel.t0() => Err(Error::invalid(format!(
                "predictor period {period} is not a pre-treatment period"
            ))),
            Predictor::OutcomeMean { start, end } if start > end || end >= panel.t0() => Err(
                Error::invalid(format!("predictor range {start}..={end} is not inside the pre-treatment window")),
            ),
            Predictor::Covariate { index } => match panel.covariates() {
                Some(c) if index < c.len() => Ok(()),
                _ => Err(Error::invalid(format!("covariate {index} is not available"))),
            },
            _ => Ok(()),
        }
    }
}

/// Settings of the outer search over the predictor weights `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdhOptions {
    /// Low-discrepancy starting points in addition to the uniform center.
    pub starts: usize,
    /// Relative spread of objective values at which a local search stops.
    pub tolerance: f64,
    /// Objective evaluations allowed per local search.
    pub max_evals: usize,
}

impl Default for AdhOptions {
    fn default() -> Self {
        Self {
            starts: 50,
            tolerance: 1e-8,
            max_evals: 400,
        }
    }
}

/// Synthetic control with predictor weights chosen to fit pre-period outcomes.
pub fn fit_adh(panel: &Panel, predictors: &[Predictor], options: &AdhOptions) -> Result<WeightsFit> {
    fit_adh_on(&Design::treated(panel), predictors, options)
}

/// Nested fit: for diagonal `V` on the simplex the inner weights minimize
/// `(x_t - X_c w)' V (x_t - X_c w)` over the weight simplex, and `V` minimizes
/// the outcome discrepancy over the fitting window.
///
/// Predictors that reach past the design's window are clipped or dropped, so
/// placebo fits never see the held-out periods. If none remain, all lagged
/// outcomes in the window are used.
pub fn fit_adh_on(design: &Design, predictors: &[Predictor], options: &AdhOptions) -> Result<WeightsFit> {
    let panel = design.panel();
    if predictors.is_empty() {
        return Err(Error::invalid("ADH needs at least one predictor"));
    }
    for p in predictors {
        p.check(panel)?;
    }
    let mut warnings = Vec::new();
    let mut active: Vec<Predictor> = predictors.iter().filter_map(|p| p.within(design.window())).collect();
    if active.len() < predictors.len() {
        warnings.push(format!(
            "{} predictor(s) outside the fitting window were dropped or clipped",
            predictors.len() - active.len()
        ));
    }
    if active.is_empty() {
        active = Predictor::all_lags(design.window());
    }

    let m = active.len();
    let x_t = DVector::from_fn(m, |r, _| active[r].value(panel, design.target()));
    let x_c = DMatrix::from_fn(m, design.n_donors(), |r, j| active[r].value(panel, design.donors()[j]));
    let outer = Outer {
        x_t,
        x_c,
        y: design.target_pre(),
        y_c: design.donors_pre(),
    };

    let lower = constrained_qp(outer.y_c.clone(), outer.y.clone(), false, true)?;
    let lower_bound = lower.rss(&outer.y_c, &outer.y);
    let search = outer.search(options, lower_bound)?;
    let final_inner = outer.inner(&search.v, None)?;
    let tuning = Tuning::Adh {
        v: search.v.iter().copied().collect(),
        predictors: active.iter().map(|p| p.label(panel)).collect(),
    };
    WeightsFit::assemble(
        design,
        EstimatorKind::Adh,
        RestrictionSet::SYNTHETIC,
        0.0,
        final_inner.weights,
        tuning,
        final_inner.converged,
        warnings,
    )
}

struct Outer {
    x_t: DVector<f64>,
    x_c: DMatrix<f64>,
    y: DVector<f64>,
    y_c: DMatrix<f64>,
}

struct Found {
    v: DVector<f64>,
}

impl Outer {
    fn inner(&self, v: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<SolverReport> {
        let scale = v.map(|x| x.max(0.0).sqrt());
        let design = DMatrix::from_fn(self.x_c.nrows(), self.x_c.ncols(), |r, j| scale[r] * self.x_c[(r, j)]);
        let target = self.x_t.component_mul(&scale);
        let ridge = canonical_ridge(&design, false);
        let problem = QpProblem::simplex(design, target).with_ridge(ridge);
        solve_simplex_qp_with(&problem, &QpOptions::default(), warm)
    }

    fn loss(&self, w: &DVector<f64>) -> f64 {
        (&self.y - &self.y_c * w).norm_squared()
    }

    fn search(&self, options: &AdhOptions, lower_bound: f64) -> Result<Found> {
        let m = self.x_t.len();
        if m == 1 {
            return Ok(Found {
                v: DVector::from_element(1, 1.0),
            });
        }
        // theta in R^(m-1); v = softmax(0, theta)
        let dim = m - 1;
        let reached = |f: f64| f <= lower_bound * (1.0 + 1e-10) + f64::MIN_POSITIVE;
        let mut warm: Option<DVector<f64>> = None;
        let mut best_theta = DVector::zeros(dim);
        let mut best_f = f64::INFINITY;

        let mut starts = vec![DVector::zeros(dim)];
        starts.extend(halton_starts(m, options.starts));
        for start in starts {
            let mut eval = |theta: &DVector<f64>| -> Result<f64> {
                let r = self.inner(&softmax(theta), warm.as_ref())?;
                let f = self.loss(&r.weights);
                warm = Some(r.weights);
                Ok(f)
            };
            let (theta, f) = nelder_mead(&mut eval, start, options, &reached)?;
            if f < best_f {
                best_f = f;
                best_theta = theta;
            }
            if reached(best_f) {
                break;
            }
        }
        Ok(Found {
            v: softmax(&best_theta),
        })
    }
}

fn softmax(theta: &DVector<f64>) -> DVector<f64> {
    let m = theta.len() + 1;
    let top = theta.iter().copied().fold(0.0_f64, f64::max);
    let mut v = DVector::from_fn(m, |i, _| if i == 0 { (-top).exp() } else { (theta[i - 1] - top).exp() });
    let total = v.sum();
    v /= total;
    v
}

/// Points of the `m`-dimensional Halton sequence mapped to the simplex through
/// normalized exponential spacings, expressed as softmax parameters.
fn halton_starts(m: usize, count: usize) -> Vec<DVector<f64>> {
    let primes = first_primes(m);
    (1..=count)
        .map(|i| {
            let v: Vec<f64> = primes.iter().map(|&p| -radical_inverse(i, p).ln()).collect();
            let total: f64 = v.iter().sum();
            let v: Vec<f64> = v.iter().map(|x| (x / total).max(1e-12)).collect();
            DVector::from_fn(m - 1, |j, _| v[j + 1].ln() - v[0].ln())
        })
        .collect()
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let step = 1.0 / base as f64;
    let mut out = 0.0;
    let mut f = step;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= step;
    }
    out
}

fn first_primes(count: usize) -> Vec<usize> {
    let mut primes: Vec<usize> = Vec::with_capacity(count);
    let mut candidate = 2;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Nelder-Mead with the standard reflection, expansion, contraction and
/// shrink coefficients. Stops on relative spread, the evaluation budget, or
/// `done` returning true for the best value.
fn nelder_mead(
    f: &mut dyn FnMut(&DVector<f64>) -> Result<f64>,
    start: DVector<f64>,
    options: &AdhOptions,
    done: &dyn Fn(f64) -> bool,
) -> Result<(DVector<f64>, f64)> {
    let dim = start.len();
    let mut points = vec![start.clone()];
    for i in 0..dim {
        let mut p = start.clone();
        p[i] += 1.0;
        points.push(p);
    }
    let mut values = Vec::with_capacity(dim + 1);
    for p in &points {
        values.push(f(p)?);
    }
    let mut evals = dim + 1;
    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        points = order.iter().map(|&i| points[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let (best, worst) = (values[0], values[dim]);
        if done(best) || evals >= options.max_evals || worst - best <= options.tolerance * best.abs().max(1e-300) {
            return Ok((points[0].clone(), best));
        }
        let centroid = points[..dim].iter().fold(DVector::zeros(dim), |acc, p| acc + p) / dim as f64;
        let reflected = &centroid + (&centroid - &points[dim]);
        let fr = f(&reflected)?;
        evals += 1;
        if fr < values[0] {
            let expanded = &centroid + (&reflected - &centroid) * 2.0;
            let fe = f(&expanded)?;
            evals += 1;
            if fe < fr {
                points[dim] = expanded;
                values[dim] = fe;
            } else {
                points[dim] = reflected;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            points[dim] = reflected;
            values[dim] = fr;
        } else {
            let (contracted, fc) = if fr < values[dim] {
                let c = &centroid + (&reflected - &centroid) * 0.5;
                let fc = f(&c)?;
                (c, fc)
            } else {
                let c = &centroid + (&points[dim] - &centroid) * 0.5;
                let fc = f(&c)?;
                (c, fc)
            };
            evals += 1;
            if fc < values[dim].min(fr) {
                points[dim] = contracted;
                values[dim] = fc;
            } else {
                for i in 1..=dim {
                    points[i] = &points[0] + (&points[i] - &points[0]) * 0.5;
                    values[i] = f(&points[i])?;
                }
                evals += dim;
            }
        }
    }
}
