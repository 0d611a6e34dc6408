//! Placebo variance estimates: refit the estimator on problems whose answer is
//! observed and average the squared prediction errors.
//!
//! * unit: each control in turn plays the treated unit, donors are the other
//!   controls, scored at one post period (the last by default);
//! * time: the treated unit with the treatment moved earlier, each of the
//!   last `s` pre periods held out in turn and predicted from the periods before it;
//! * combined: both at once, over every (control, held-out period) pair.
//!
//! The true treated unit never enters a unit or combined placebo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit_best_subset_on, fit_elastic_net_on, Estimator, RestrictionSet, WeightsFit};
use crate::panel::{Design, Panel};
use crate::tuning::{
    choose_k_poisson_on, cv_best_subset_k, cv_elastic_net_on, default_cv_k_max, default_k_max, CvGrid,
    EvalPeriods, DEFAULT_LAMBDA_COUNT, DEFAULT_LAMBDA_RATIO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Unit,
    Time,
    Combined,
}

/// One placebo prediction error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaceboGap {
    /// Pseudo-treated unit (0 for the time scheme).
    pub unit: usize,
    /// Period that was predicted.
    pub period: usize,
    /// Observed minus predicted.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboFailure {
    pub unit: usize,
    pub period: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub scheme: Scheme,
    /// Mean of the squared gaps.
    pub variance: f64,
    pub std_error: f64,
    pub placebo_gaps: Vec<PlaceboGap>,
    /// Held-out pre periods, for the time and combined schemes.
    pub s: Option<usize>,
    pub failures: Vec<PlaceboFailure>,
    /// Tuning was redone inside every placebo.
    pub retuned: bool,
    pub warnings: Vec<String>,
}

/// How tuning is redone inside each placebo. Without it the estimator's
/// settings from the main fit are reused unchanged.
#[derive(Debug, Clone, PartialEq)]
pub enum Retune {
    /// Cross-validate `(alpha, lambda)` with a fresh default-style grid.
    ElasticNet {
        alphas: Vec<f64>,
        restrictions: RestrictionSet,
    },
    /// Best subset with `k` chosen by the Poisson prior.
    BestSubsetPoisson { beta: f64, restrictions: RestrictionSet },
    /// Best subset with `k` chosen by cross-validation.
    BestSubsetCv { restrictions: RestrictionSet },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlaceboOptions {
    pub retune: Option<Retune>,
    /// Period scored by the unit scheme; the last period when `None`.
    pub eval_period: Option<usize>,
}

/// Fits one placebo design, retuning first when requested. The prediction
/// period is the only one the retuning step may score on.
pub fn fit_placebo(
    estimator: &Estimator,
    retune: Option<&Retune>,
    design: &Design,
    period: usize,
) -> Result<WeightsFit> {
    let Some(retune) = retune else {
        return estimator.fit(design);
    };
    let eval = EvalPeriods::Periods(vec![period]);
    match retune {
        Retune::ElasticNet { alphas, restrictions } => {
            let grid = CvGrid::for_design(design, alphas, DEFAULT_LAMBDA_COUNT, DEFAULT_LAMBDA_RATIO)?.with_eval(eval);
            let cv = cv_elastic_net_on(design, &grid, *restrictions)?;
            fit_elastic_net_on(design, cv.best_alpha, cv.best_lambda, *restrictions)
        }
        Retune::BestSubsetPoisson { beta, restrictions } => {
            let choice = choose_k_poisson_on(design, *beta, default_k_max(design), *restrictions)?;
            fit_best_subset_on(design, choice.k, *restrictions)
        }
        Retune::BestSubsetCv { restrictions } => {
            let choice = cv_best_subset_k(design, default_cv_k_max(design), *restrictions, &eval)?;
            fit_best_subset_on(design, choice.k, *restrictions)
        }
    }
}

/// `min(T - t0, floor(t0 / 2))`, kept within `1..=t0-1`.
pub fn default_s(panel: &Panel) -> usize {
    let t0 = panel.t0();
    panel.n_post().min(t0 / 2).clamp(1, t0.saturating_sub(1).max(1))
}

/// Unit-placebo variance: mean over controls of the squared error in
/// predicting each control at the evaluation period.
pub fn variance_random_unit(panel: &Panel, estimator: &Estimator, options: &PlaceboOptions) -> Result<VarianceEstimate> {
    if panel.n_controls() < 2 {
        return Err(Error::invalid("unit placebos need at least two controls"));
    }
    let period = options.eval_period.unwrap_or(panel.n_periods() - 1);
    if period < panel.t0() || period >= panel.n_periods() {
        return Err(Error::invalid(format!("evaluation period {period} is not a post period")));
    }
    let jobs: Vec<(usize, usize)> = (1..panel.n_units()).map(|i| (i, period)).collect();
    run(panel, estimator, options, Scheme::Unit, None, &jobs, |p, unit, _| {
        Design::placebo_unit(p, unit)
    })
}

/// Time-placebo variance over the last `s` pre periods of the treated unit.
pub fn variance_random_time(
    panel: &Panel,
    estimator: &Estimator,
    s: usize,
    options: &PlaceboOptions,
) -> Result<VarianceEstimate> {
    check_s(panel, s)?;
    let jobs: Vec<(usize, usize)> = held_out(panel, s).map(|h| (0, h)).collect();
    run(panel, estimator, options, Scheme::Time, Some(s), &jobs, |p, _, h| {
        Design::treated(p).with_window(h)
    })
}

/// Combined variance over every control and each of the last `s` pre periods.
pub fn variance_combined(
    panel: &Panel,
    estimator: &Estimator,
    s: usize,
    options: &PlaceboOptions,
) -> Result<VarianceEstimate> {
    if panel.n_controls() < 2 {
        return Err(Error::invalid("unit placebos need at least two controls"));
    }
    check_s(panel, s)?;
    let mut jobs = Vec::new();
    for i in 1..panel.n_units() {
        for h in held_out(panel, s) {
            jobs.push((i, h));
        }
    }
    run(panel, estimator, options, Scheme::Combined, Some(s), &jobs, |p, unit, h| {
        Design::placebo_unit(p, unit)?.with_window(h)
    })
}

fn check_s(panel: &Panel, s: usize) -> Result<()> {
    if s < 1 || s >= panel.t0() {
        return Err(Error::invalid(format!(
            "s = {s} must lie in 1..={} for t0 = {}",
            panel.t0().saturating_sub(1),
            panel.t0()
        )));
    }
    Ok(())
}

/// 0-based held-out periods; each doubles as the length of its fitting window.
fn held_out(panel: &Panel, s: usize) -> std::ops::Range<usize> {
    panel.t0() - s..panel.t0()
}

fn run(
    panel: &Panel,
    estimator: &Estimator,
    options: &PlaceboOptions,
    scheme: Scheme,
    s: Option<usize>,
    jobs: &[(usize, usize)],
    design_for: impl Fn(&Panel, usize, usize) -> Result<Design<'_>> + Sync,
) -> Result<VarianceEstimate> {
    let outcomes: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(unit, period)| {
            let design = design_for(panel, unit, period)?;
            let fit = fit_placebo(estimator, options.retune.as_ref(), &design, period)?;
            Ok(design.target_at(period) - fit.predict_at(panel, period))
        })
        .collect();

    let mut gaps = Vec::new();
    let mut failures = Vec::new();
    for (&(unit, period), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(gap) => gaps.push(PlaceboGap { unit, period, gap }),
            Err(e) => failures.push(PlaceboFailure {
                unit,
                period,
                message: e.to_string(),
            }),
        }
    }
    if gaps.is_empty() {
        let first = failures.first().map(|f| f.message.clone()).unwrap_or_default();
        return Err(Error::AllPlacebosFailed(first));
    }
    let mut warnings = Vec::new();
    if !failures.is_empty() {
        warnings.push(format!(
            "{} of {} placebo fits failed and were excluded",
            failures.len(),
            jobs.len()
        ));
    }
    let variance = gaps.iter().map(|g| g.gap * g.gap).sum::<f64>() / gaps.len() as f64;
    Ok(VarianceEstimate {
        scheme,
        variance,
        std_error: variance.sqrt(),
        placebo_gaps: gaps,
        s,
        failures,
        retuned: options.retune.is_some(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn panel(rows: &[&[f64]], t0: usize) -> Panel {
        let t = rows[0].len();
        let m = DMatrix::from_fn(rows.len(), t, |i, j| rows[i][j]);
        let units = (0..rows.len()).map(|i| format!("u{i}")).collect();
        let periods = (0..t).map(|j| format!("p{j}")).collect();
        Panel::new(m, t0, units, periods).unwrap()
    }

    #[test]
    fn constant_panel_has_zero_variance() {
        let p = panel(&[&[2.0; 6], &[2.0; 6], &[2.0; 6]], 4);
        for v in [
            variance_random_unit(&p, &Estimator::Did, &PlaceboOptions::default()).unwrap(),
            variance_random_time(&p, &Estimator::Did, 2, &PlaceboOptions::default()).unwrap(),
            variance_combined(&p, &Estimator::Did, 3, &PlaceboOptions::default()).unwrap(),
        ] {
            assert_eq!(v.variance, 0.0);
        }
    }

    #[test]
    fn one_step_did_gap() {
        // t0 = 2, s = 1: fit on period 0 only, predict period 1
        let p = panel(&[&[1.0, 4.0, 9.0], &[2.0, 3.0, 5.0]], 2);
        let v = variance_random_time(&p, &Estimator::Did, 1, &PlaceboOptions::default()).unwrap();
        // mu = 1 - 2 = -1, prediction -1 + 3 = 2, gap 4 - 2 = 2
        assert_eq!(v.placebo_gaps.len(), 1);
        assert_eq!(v.placebo_gaps[0].gap, 2.0);
        assert_eq!(v.variance, 4.0);
    }

    #[test]
    fn guards() {
        let p = panel(&[&[1.0, 4.0, 9.0], &[2.0, 3.0, 5.0]], 2);
        assert!(variance_random_unit(&p, &Estimator::Did, &PlaceboOptions::default()).is_err());
        assert!(variance_combined(&p, &Estimator::Did, 1, &PlaceboOptions::default()).is_err());
        assert!(variance_random_time(&p, &Estimator::Did, 2, &PlaceboOptions::default()).is_err());
        assert!(variance_random_time(&p, &Estimator::Did, 0, &PlaceboOptions::default()).is_err());
    }
}
