use criterion::{criterion_group, criterion_main, Criterion};
use panelcf::estimators::{AdhOptions, Estimator, Predictor, RestrictionSet};
use panelcf::inference::{variance_random_unit, PlaceboOptions};
use panelcf::tuning::{cv_elastic_net, CvGrid, EvalPeriods};
use panelcf_bench::panel;

fn fits(c: &mut Criterion) {
    let p = panel(38, 31, 19, 7);
    let mut group = c.benchmark_group("fit_38x31");
    let estimators = [
        ("did", Estimator::Did),
        (
            "constrained",
            Estimator::Constrained {
                relax_intercept: false,
                relax_adding_up: false,
            },
        ),
        (
            "elastic_net",
            Estimator::ElasticNet {
                alpha: 0.1,
                lambda: 1.0,
                restrictions: RestrictionSet::NONE,
            },
        ),
        (
            "best_subset_k2",
            Estimator::BestSubset {
                k: 2,
                restrictions: RestrictionSet::NONE,
            },
        ),
        (
            "adh_3_lags",
            Estimator::Adh {
                predictors: [5, 10, 18].map(|period| Predictor::Outcome { period }).to_vec(),
                options: AdhOptions::default(),
            },
        ),
    ];
    for (name, est) in &estimators {
        group.bench_function(*name, |b| b.iter(|| est.fit_panel(&p).unwrap()));
    }
    group.finish();
}

fn cv_and_placebos(c: &mut Criterion) {
    let p = panel(15, 20, 14, 8);
    let mut group = c.benchmark_group("tuning_15x20");
    group.sample_size(10);
    let grid = CvGrid::default_for(&p).unwrap();
    let small = CvGrid {
        alphas: grid.alphas[..3].to_vec(),
        lambdas: grid.lambdas[..3].iter().map(|l| l.iter().step_by(10).copied().collect()).collect(),
        eval: EvalPeriods::Last,
    };
    group.bench_function("cv_3x10", |b| b.iter(|| cv_elastic_net(&p, &small, RestrictionSet::NONE).unwrap()));
    let constrained = Estimator::Constrained {
        relax_intercept: false,
        relax_adding_up: false,
    };
    group.bench_function("unit_placebo_constrained", |b| {
        b.iter(|| variance_random_unit(&p, &constrained, &PlaceboOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, fits, cv_and_placebos);
criterion_main!(benches);
