use panelcf::estimators::Estimator;
use panelcf::inference::{variance_random_unit, PlaceboOptions};
use panelcf::tuning::{cv_elastic_net, CvGrid};
use panelcf::{datasets, predict_counterfactual, RestrictionSet};

fn main() -> panelcf::Result<()> {
    let panel = datasets::california()?;

    let cv = cv_elastic_net(&panel, &CvGrid::default_for(&panel)?, RestrictionSet::NONE)?;
    let en = Estimator::ElasticNet {
        alpha: cv.best_alpha,
        lambda: cv.best_lambda,
        restrictions: RestrictionSet::NONE,
    };
    let fit = en.fit_panel(&panel)?;
    let path = predict_counterfactual(&fit, &panel)?;
    let se = variance_random_unit(&panel, &en, &PlaceboOptions::default())?.std_error;

    let t = panel.period_index("1995").unwrap();
    println!("effect in 1995: {:.1} (s.e. {:.1})", path.effect_at(t).unwrap(), se);
    Ok(())
}
