//! Acceptance report: one line per criterion.
//!
//! Criteria anchored to published tables are reported but do not set the
//! exit status, since they depend on data vintage and unpublished optimizer
//! settings. The property and oracle suites are binding: any failure there
//! exits nonzero.

mod common;

use std::time::{Duration, Instant};

use nalgebra::DVector;
use panelcf::datasets;
use panelcf::estimators::{
    fit_adh, fit_best_subset, fit_constrained, fit_did, fit_elastic_net, predict_counterfactual, AdhOptions,
    Estimator, Predictor, RestrictionSet,
};
use panelcf::inference::{variance_combined, variance_random_time, variance_random_unit, PlaceboOptions};
use panelcf::solvers::{lambda_max, solve_elastic_net, solve_simplex_qp, ElasticNetProblem, QpProblem};
use panelcf::tuning::{cv_elastic_net, CvGrid, EvalPeriods};
use panelcf::{Design, Panel};
use rand::Rng;

struct Line {
    id: &'static str,
    binding: bool,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, binding: bool, pass: bool, detail: String) -> Line {
    let tag = if pass { "PASS" } else { "FAIL" };
    let kind = if binding { "binding" } else { "reported" };
    println!("{tag} [{kind}] {id}: {detail}");
    Line { id, binding, pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.3}s", d.as_secs_f64())
}

fn effect(panel: &Panel, fit: &panelcf::WeightsFit, label: &str) -> f64 {
    let t = panel.period_index(label).expect("report period");
    predict_counterfactual(fit, panel).unwrap().effect_at(t).unwrap()
}

fn did_california() -> Line {
    let start = Instant::now();
    let p = datasets::california().unwrap();
    let f = fit_did(&p).unwrap();
    let tau = effect(&p, &f, "1995");
    let took = start.elapsed();
    let pass = (f.mu + 14.4).abs() <= 0.05 && (tau + 32.4).abs() <= 0.05 && took < Duration::from_secs(1);
    line(
        "did-exactness",
        false,
        pass,
        format!("mu = {:.3} (want -14.4 +/- 0.05), tau1995 = {tau:.3} (want -32.4 +/- 0.05), {}", f.mu, secs(took)),
    )
}

fn constrained_dataset(id: &'static str, dataset: datasets::Dataset, want: f64, tol: f64) -> Line {
    let start = Instant::now();
    let panel = match dataset.load() {
        Ok(p) => p,
        Err(e) => return line(id, false, false, format!("dataset unavailable: {e}")),
    };
    let f = fit_constrained(&panel, false, false).unwrap();
    let tau = effect(&panel, &f, dataset.report_period);
    let took = start.elapsed();
    let pass = (tau - want).abs() <= tol && took < Duration::from_secs(10);
    line(
        id,
        false,
        pass,
        format!("tau{} = {tau:.3} (want {want} +/- {tol}), {}", dataset.report_period, secs(took)),
    )
}

fn elastic_net_cv_california() -> Line {
    let start = Instant::now();
    let p = datasets::california().unwrap();
    let grid = CvGrid::default_for(&p).unwrap();
    let cv = cv_elastic_net(&p, &grid, RestrictionSet::NONE).unwrap();
    let f = fit_elastic_net(&p, cv.best_alpha, cv.best_lambda, RestrictionSet::NONE).unwrap();
    let nonzero = f.n_nonzero();
    let negative = f.omega.iter().filter(|&&w| w < 0.0).count();
    let ratio = (cv.best_lambda / 45.5).max(45.5 / cv.best_lambda);
    let pass = cv.best_alpha == 0.1 && ratio <= 1.5 && (6..=10).contains(&nonzero) && negative == 0;
    line(
        "elastic-net-cv-replication",
        false,
        pass,
        format!(
            "alpha = {} (want 0.1), lambda = {:.3} (want 45.5 within x1.5, got x{ratio:.2}), {nonzero} nonzero (want 8 +/- 2), {negative} negative, {}",
            cv.best_alpha,
            cv.best_lambda,
            secs(start.elapsed())
        ),
    )
}

fn oracle_equivalences() -> Line {
    let start = Instant::now();
    let mut rng = common::rng(2024);
    let mut worst = [0.0f64; 4];
    let mut subset_mismatch = 0;

    for _ in 0..200 {
        let n = rng.random_range(1..=3);
        let rows = rng.random_range(3..=8);
        let x = common::gaussian(&mut rng, rows, n);
        let y = common::gaussian_vec(&mut rng, rows);
        let r = solve_simplex_qp(&QpProblem::simplex(x.clone(), y.clone())).unwrap();
        worst[0] = worst[0].max((r.objective_value - common::simplex_grid_min(&x, &y)).abs());
    }
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let t0 = n + rng.random_range(3..=8);
        let p = common::factor_panel(&mut rng, n, t0 + 2, t0);
        let f = fit_elastic_net(&p, 0.5, 0.0, RestrictionSet::NONE).unwrap();
        let d = Design::treated(&p);
        let (mu, w) = common::normal_equations(&d.donors_pre(), &d.target_pre(), true);
        let gap = (DVector::from_row_slice(&f.omega) - w).amax().max((f.mu - mu).abs());
        worst[1] = worst[1].max(gap);
    }
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(0..=n);
        let p = common::factor_panel(&mut rng, n, 14, 11);
        let f = fit_best_subset(&p, k, RestrictionSet::NONE).unwrap();
        let d = Design::treated(&p);
        let (support, _) = common::best_subset_oracle(&d.donors_pre(), &d.target_pre(), k);
        let chosen: Vec<usize> = (0..n).filter(|&j| f.omega[j] != 0.0).collect();
        if chosen != support {
            subset_mismatch += 1;
        }
    }
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let t0 = rng.random_range(4..=12);
        let p = common::factor_panel(&mut rng, n, t0 + 2, t0);
        let adh = fit_adh(&p, &Predictor::all_lags(t0), &AdhOptions::default()).unwrap();
        let con = fit_constrained(&p, false, false).unwrap();
        let d = Design::treated(&p);
        let obj = |f: &panelcf::WeightsFit| {
            common::rss(&d.donors_pre(), &d.target_pre(), f.mu, &DVector::from_row_slice(&f.omega))
        };
        worst[3] = worst[3].max((obj(&adh) - obj(&con)).abs());
    }
    let took = start.elapsed();
    let pass = worst[0] <= 1e-4
        && worst[1] <= 1e-6
        && subset_mismatch == 0
        && worst[3] <= 1e-4
        && took < Duration::from_secs(120);
    line(
        "oracle-equivalences",
        true,
        pass,
        format!(
            "(a) simplex vs grid max gap {:.2e} (<= 1e-4), (b) EN(0) vs OLS max gap {:.2e} (<= 1e-6), (c) subset mismatches {subset_mismatch}/100, (d) ADH vs constrained max gap {:.2e} (<= 1e-4), {}",
            worst[0],
            worst[1],
            worst[3],
            secs(took)
        ),
    )
}

fn kkt_suite() -> Line {
    let mut rng = common::rng(7);
    let (mut worst_en, mut worst_qp) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let n = rng.random_range(1..=20);
        let rows = rng.random_range(3..=25);
        let x = common::gaussian(&mut rng, rows, n);
        let y = common::gaussian_vec(&mut rng, rows);
        let alpha: f64 = rng.random_range(0.05..=1.0);
        let nonnegative = rng.random_bool(0.3);
        let lambda = lambda_max(&x, &y, alpha).unwrap() * 10f64.powf(rng.random_range(-4.0..0.0));
        let mut problem = ElasticNetProblem::new(x.clone(), y.clone(), lambda, alpha);
        problem.nonnegative = nonnegative;
        let r = solve_elastic_net(&problem).unwrap();
        worst_en = worst_en.max(common::elastic_net_kkt(&x, &y, &r.weights, lambda, alpha, true, nonnegative));

        let intercept = rng.random_bool(0.5);
        let r = solve_simplex_qp(&QpProblem::simplex(x.clone(), y.clone()).with_intercept(intercept)).unwrap();
        worst_qp = worst_qp.max(common::simplex_kkt(&x, &y, &r.weights, intercept));
    }
    line(
        "kkt-suite",
        true,
        worst_en <= 1e-6 && worst_qp <= 1e-6,
        format!("500 instances each: elastic net worst {worst_en:.2e}, simplex QP worst {worst_qp:.2e} (<= 1e-6)"),
    )
}

fn scale_equivariance() -> Line {
    let mut rng = common::rng(99);
    let (mut w_gap, mut mu_gap, mut tau_gap) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let p = common::factor_panel(&mut rng, 6, 14, 10);
        let base = fit_elastic_net(&p, 0.5, 0.05, RestrictionSet::NONE).unwrap();
        let base_tau = predict_counterfactual(&base, &p).unwrap().effects;
        for c in [0.01, 1.0, 100.0] {
            let q = p.with_outcomes(p.outcomes() * c).unwrap();
            let f = fit_elastic_net(&q, 0.5, 0.05 * c * c, RestrictionSet::NONE).unwrap();
            let tau = predict_counterfactual(&f, &q).unwrap().effects;
            for (a, b) in f.omega.iter().zip(&base.omega) {
                w_gap = w_gap.max((a - b).abs());
            }
            mu_gap = mu_gap.max((f.mu - c * base.mu).abs() / (c * base.mu.abs()).max(1.0));
            for (a, b) in tau.iter().zip(&base_tau) {
                tau_gap = tau_gap.max((a - c * b).abs() / (c * b.abs()).max(1.0));
            }
        }
    }
    line(
        "scale-equivariance",
        true,
        w_gap <= 1e-8 && mu_gap <= 1e-8 && tau_gap <= 1e-8,
        format!(
            "c in {{0.01, 1, 100}}: omega max gap {w_gap:.2e}, mu relative gap {mu_gap:.2e}, tau relative gap {tau_gap:.2e} (<= 1e-8)"
        ),
    )
}

fn inference_double_loops() -> Line {
    let mut rng = common::rng(5150);
    let opts = PlaceboOptions::default();
    let estimators = [
        Estimator::Did,
        Estimator::Constrained {
            relax_intercept: false,
            relax_adding_up: false,
        },
        Estimator::ElasticNet {
            alpha: 0.5,
            lambda: 0.05,
            restrictions: RestrictionSet::NONE,
        },
        Estimator::BestSubset {
            k: 2,
            restrictions: RestrictionSet::NONE,
        },
    ];
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let n = rng.random_range(3..=6);
        let t0 = rng.random_range(6..=10);
        let periods = t0 + rng.random_range(1..=3);
        let p = common::factor_panel(&mut rng, n, periods, t0);
        let est = &estimators[i % estimators.len()];
        let s = rng.random_range(1..t0.min(5));
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        worst = worst.max(rel(
            variance_random_unit(&p, est, &opts).unwrap().variance,
            common::unit_variance_double_loop(&p, est),
        ));
        worst = worst.max(rel(
            variance_random_time(&p, est, s, &opts).unwrap().variance,
            common::time_variance_double_loop(&p, est, s),
        ));
        worst = worst.max(rel(
            variance_combined(&p, est, s, &opts).unwrap().variance,
            common::combined_variance_double_loop(&p, est, s),
        ));
    }
    line(
        "inference-double-loop",
        true,
        worst <= 1e-10,
        format!("20 panels, unit/time/combined: worst relative gap {worst:.2e} (<= 1e-10)"),
    )
}

fn adh_se_california() -> Line {
    let start = Instant::now();
    let p = datasets::california().unwrap();
    let predictors = ["1975", "1980", "1988"]
        .iter()
        .map(|l| Predictor::Outcome {
            period: p.period_index(l).unwrap(),
        })
        .collect();
    let est = Estimator::Adh {
        predictors,
        options: AdhOptions::default(),
    };
    let v = variance_random_unit(&p, &est, &PlaceboOptions::default()).unwrap();
    line(
        "adh-se-california",
        false,
        (v.std_error - 16.1).abs() <= 1.5,
        format!(
            "unit-placebo s.e. = {:.3} (want 16.1 +/- 1.5; lagged-outcome predictors 1975/1980/1988), {}",
            v.std_error,
            secs(start.elapsed())
        ),
    )
}

fn leakage() -> Line {
    let mut rng = common::rng(66);
    let mut changed = Vec::new();
    for round in 0..5 {
        let p = common::factor_panel(&mut rng, 6, 14, 10);
        let post = common::poison_unit0(&p, p.t0());
        let grid = CvGrid::for_design(&Design::treated(&p), &[0.2, 0.6, 0.9], 20, 1e-3)
            .unwrap()
            .with_eval(EvalPeriods::AllPost);
        let grid_poisoned = CvGrid::for_design(&Design::treated(&post), &[0.2, 0.6, 0.9], 20, 1e-3)
            .unwrap()
            .with_eval(EvalPeriods::AllPost);
        if grid.lambdas != grid_poisoned.lambdas
            || cv_elastic_net(&p, &grid, RestrictionSet::NONE).unwrap()
                != cv_elastic_net(&post, &grid_poisoned, RestrictionSet::NONE).unwrap()
        {
            changed.push(format!("cv#{round}"));
        }
        let row = common::poison_unit0(&p, 0);
        for est in [
            Estimator::Did,
            Estimator::Constrained {
                relax_intercept: false,
                relax_adding_up: false,
            },
            Estimator::ElasticNet {
                alpha: 0.5,
                lambda: 0.05,
                restrictions: RestrictionSet::NONE,
            },
            Estimator::BestSubset {
                k: 2,
                restrictions: RestrictionSet::NONE,
            },
        ] {
            let a = variance_random_unit(&p, &est, &PlaceboOptions::default()).unwrap();
            let b = variance_random_unit(&row, &est, &PlaceboOptions::default()).unwrap();
            if a != b {
                changed.push(format!("{}#{round}", est.kind().name()));
            }
        }
    }
    line(
        "leakage",
        true,
        changed.is_empty(),
        if changed.is_empty() {
            "poisoned unit 0 (post periods for CV, whole row for unit placebos): outputs bit-identical".into()
        } else {
            format!("outputs changed in {}", changed.join(", "))
        },
    )
}

fn main() {
    let lines = vec![
        did_california(),
        constrained_dataset("constrained-california", datasets::CALIFORNIA, -22.9, 1.0),
        constrained_dataset("constrained-germany", datasets::GERMANY, -790.0, 50.0),
        elastic_net_cv_california(),
        oracle_equivalences(),
        kkt_suite(),
        scale_equivariance(),
        inference_double_loops(),
        adh_se_california(),
        leakage(),
    ];
    let failed: Vec<&Line> = lines.iter().filter(|l| !l.pass).collect();
    let binding: Vec<&&Line> = failed.iter().filter(|l| l.binding).collect();
    println!(
        "acceptance: {} passed, {} failed ({} binding)",
        lines.len() - failed.len(),
        failed.len(),
        binding.len()
    );
    for l in &binding {
        eprintln!("binding failure {}: {}", l.id, l.detail);
    }
    if !binding.is_empty() {
        std::process::exit(1);
    }
}
