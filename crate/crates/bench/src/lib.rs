//! Random problem generators shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use panelcf::Panel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A `rows x cols` design of smooth random paths and a target near their hull.
pub fn design(rows: usize, cols: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(rows, cols, |i, _| 10.0 + i as f64 * 0.2 + rng.random::<f64>() * 4.0);
    let y = DVector::from_fn(rows, |i, _| 11.0 + i as f64 * 0.2 + rng.random::<f64>());
    (x, y)
}

/// A panel with `controls` control units, `periods` periods and `t0` pre periods.
pub fn panel(controls: usize, periods: usize, t0: usize, seed: u64) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels: Vec<f64> = (0..=controls).map(|_| 50.0 + 50.0 * rng.random::<f64>()).collect();
    let m = DMatrix::from_fn(controls + 1, periods, |i, t| {
        levels[i] - 0.8 * t as f64 + 3.0 * (rng.random::<f64>() - 0.5)
    });
    let units = (0..=controls).map(|i| format!("u{i}")).collect();
    let labels = (0..periods).map(|t| format!("{}", 1970 + t)).collect();
    Panel::new(m, t0, units, labels).expect("generated panel is valid")
}
