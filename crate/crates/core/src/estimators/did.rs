use nalgebra::DVector;

use super::{EstimatorKind, RestrictionSet, Tuning, WeightsFit};
use crate::error::Result;
use crate::panel::{Design, Panel};

/// Equal weights `1/N` and `mu` = treated pre mean minus pooled control pre mean.
pub fn fit_did(panel: &Panel) -> Result<WeightsFit> {
    fit_did_on(&Design::treated(panel))
}

pub fn fit_did_on(design: &Design) -> Result<WeightsFit> {
    let n = design.n_donors();
    let y = design.target_pre();
    let x = design.donors_pre();
    let mu = y.mean() - x.mean();
    let omega = DVector::from_element(n, 1.0 / n as f64);
    WeightsFit::assemble(
        design,
        EstimatorKind::Did,
        RestrictionSet::DID,
        mu,
        omega,
        Tuning::None,
        true,
        Vec::new(),
    )
}
