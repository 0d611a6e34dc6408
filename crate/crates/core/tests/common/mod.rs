//! Generators and brute-force reference computations shared by the test
//! targets. Nothing here calls into the solvers under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use panelcf::estimators::Estimator;
use panelcf::Panel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn labelled(outcomes: DMatrix<f64>, t0: usize) -> Panel {
    let units = (0..outcomes.nrows()).map(|i| format!("u{i}")).collect();
    let periods = (0..outcomes.ncols()).map(|t| format!("{}", 1990 + t)).collect();
    Panel::new(outcomes, t0, units, periods).unwrap()
}

/// Two-factor panel with unit effects and noise, treated unit first.
pub fn factor_panel(rng: &mut ChaCha8Rng, controls: usize, periods: usize, t0: usize) -> Panel {
    let f = gaussian(rng, 2, periods);
    let load = gaussian(rng, controls + 1, 2);
    let alpha = gaussian_vec(rng, controls + 1);
    let noise = gaussian(rng, controls + 1, periods);
    let y = DMatrix::from_fn(controls + 1, periods, |i, t| {
        3.0 * alpha[i] + load[(i, 0)] * f[(0, t)] + load[(i, 1)] * f[(1, t)] + 0.3 * noise[(i, t)]
    });
    labelled(y, t0)
}

fn with_intercept_column(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// OLS from the normal equations; returns `(intercept, slopes)`.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>, intercept: bool) -> (f64, DVector<f64>) {
    let a = if intercept { with_intercept_column(x) } else { x.clone() };
    let gram = a.transpose() * &a;
    let rhs = a.transpose() * y;
    let beta = gram.lu().solve(&rhs).expect("full rank");
    if intercept {
        (beta[0], beta.rows(1, x.ncols()).into_owned())
    } else {
        (0.0, beta)
    }
}

pub fn rss(x: &DMatrix<f64>, y: &DVector<f64>, mu: f64, w: &DVector<f64>) -> f64 {
    (0..y.len())
        .map(|i| {
            let fit: f64 = mu + (0..w.len()).map(|j| x[(i, j)] * w[j]).sum::<f64>();
            (y[i] - fit).powi(2)
        })
        .sum()
}

/// Minimum of `||y - X w||^2` over the simplex for up to three columns, by a
/// grid that is refined around its best point down to a step of 1e-7.
pub fn simplex_grid_min(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = x.ncols();
    assert!((1..=3).contains(&n));
    let eval = |a: f64, b: f64| {
        let w = match n {
            1 => DVector::from_vec(vec![1.0]),
            2 => DVector::from_vec(vec![a, 1.0 - a]),
            _ => DVector::from_vec(vec![a, b, 1.0 - a - b]),
        };
        rss(x, y, 0.0, &w)
    };
    if n == 1 {
        return eval(1.0, 0.0);
    }
    let (mut ca, mut cb, mut half) = (0.5, 0.5, 0.5);
    let mut best = f64::INFINITY;
    let steps = 40;
    while half > 1e-7 {
        let h = 2.0 * half / steps as f64;
        let (mut ba, mut bb) = (ca, cb);
        for i in 0..=steps {
            let a = (ca - half + i as f64 * h).clamp(0.0, 1.0);
            let b_range = if n == 2 { 0..=0 } else { 0..=steps };
            for k in b_range {
                let b = if n == 2 { 0.0 } else { (cb - half + k as f64 * h).clamp(0.0, 1.0) };
                if a + b > 1.0 {
                    continue;
                }
                let v = eval(a, b);
                if v < best {
                    best = v;
                    ba = a;
                    bb = b;
                }
            }
        }
        ca = ba;
        cb = bb;
        half = 2.0 * h;
    }
    best
}

/// Largest eigenvalue of `A^T A`.
pub fn gram_top_eigen(a: &DMatrix<f64>) -> f64 {
    let g = a.transpose() * a;
    g.symmetric_eigen().eigenvalues.max().max(0.0)
}

pub fn center_columns(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mut xc = x.clone();
    for mut c in xc.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
    }
    let m = y.mean();
    (xc, y.add_scalar(-m))
}

/// Subgradient residual of `||y - mu - Xw||^2 + lambda (alpha |w|_1 +
/// (1 - alpha)/2 |w|^2)`, divided by `2 |X^T y|_inf` after centering.
pub fn elastic_net_kkt(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    lambda: f64,
    alpha: f64,
    intercept: bool,
    nonnegative: bool,
) -> f64 {
    let (xc, yc) = if intercept { center_columns(x, y) } else { (x.clone(), y.clone()) };
    let r = &yc - &xc * w;
    let scale = 2.0 * (xc.transpose() * &yc).amax();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let l1 = lambda * alpha;
    let mut worst: f64 = 0.0;
    for j in 0..w.len() {
        let c = 2.0 * xc.column(j).dot(&r) - lambda * (1.0 - alpha) * w[j];
        let v = if w[j] > 0.0 {
            (c - l1).abs()
        } else if w[j] < 0.0 {
            (c + l1).abs()
        } else if nonnegative {
            (c - l1).max(0.0)
        } else {
            (c.abs() - l1).max(0.0)
        };
        worst = worst.max(v);
    }
    worst / scale
}

/// Simplex-constrained stationarity and complementarity in weight units:
/// with `g` the gradient, `nu = w.g` and `L = 2 lambda_max(X^T X)`, the worst
/// of `(nu - g_i)+ / L` and `min(w_i, |g_i - nu| / L)`.
pub fn simplex_kkt(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, intercept: bool) -> f64 {
    let (xc, yc) = if intercept { center_columns(x, y) } else { (x.clone(), y.clone()) };
    let g = (xc.transpose() * (&xc * w - &yc)) * 2.0;
    let nu = w.dot(&g);
    let l = 2.0 * gram_top_eigen(&xc);
    let l = if l > 0.0 { l } else { 1.0 };
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        worst = worst.max((nu - g[i]).max(0.0) / l);
        worst = worst.max(w[i].min((g[i] - nu).abs() / l));
    }
    worst
}

fn combinations(n: usize, k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() == k {
        out.push(current.clone());
        return;
    }
    for j in start..n {
        if n - j < k - current.len() {
            break;
        }
        current.push(j);
        combinations(n, k, j + 1, current, out);
        current.pop();
    }
}

/// Every size-`k` subset of `0..n` in lexicographic order.
pub fn all_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    combinations(n, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Best support of size at most `k` for unrestricted OLS with an intercept,
/// by enumeration. Ties within `1e-10 |y|^2` keep the earlier candidate, and
/// sizes are visited in increasing order.
pub fn best_subset_oracle(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> (Vec<usize>, f64) {
    let tol = 1e-10 * y.norm_squared();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for size in 0..=k {
        let mut size_best: Option<(Vec<usize>, f64)> = None;
        for s in all_subsets(x.ncols(), size) {
            let sub = x.select_columns(s.iter());
            let value = if size == 0 {
                let m = y.mean();
                y.iter().map(|v| (v - m).powi(2)).sum()
            } else {
                let (mu, w) = normal_equations(&sub, y, true);
                rss(&sub, y, mu, &w)
            };
            if size_best.as_ref().is_none_or(|(_, b)| value < b - tol) {
                size_best = Some((s, value));
            }
        }
        let (s, value) = size_best.unwrap();
        if best.as_ref().is_none_or(|(_, b)| value < b - tol) {
            best = Some((s, value));
        }
    }
    best.unwrap()
}

fn sub_panel(panel: &Panel, target: usize, last_period: usize, t0: usize) -> Panel {
    let units: Vec<usize> = std::iter::once(target)
        .chain((1..panel.n_units()).filter(|&u| u != target))
        .collect();
    let y = DMatrix::from_fn(units.len(), last_period + 1, |i, t| panel.outcome(units[i], t));
    labelled(y, t0)
}

fn gap(sub: &Panel, estimator: &Estimator) -> f64 {
    let fit = estimator.fit_panel(sub).unwrap();
    let t = sub.n_periods() - 1;
    let mut imputed = fit.mu;
    for (&d, w) in fit.donors.iter().zip(&fit.omega) {
        imputed += w * sub.outcome(d, t);
    }
    sub.outcome(0, t) - imputed
}

/// Each control becomes the treated unit of a freshly built panel without
/// the real treated unit; squared gaps at the last period are averaged.
pub fn unit_variance_double_loop(panel: &Panel, estimator: &Estimator) -> f64 {
    let last = panel.n_periods() - 1;
    let mut total = 0.0;
    let mut count = 0;
    for i in 1..panel.n_units() {
        total += gap(&sub_panel(panel, i, last, panel.t0()), estimator).powi(2);
        count += 1;
    }
    total / count as f64
}

/// The treated unit is refit on periods before each of the last `s` pre
/// periods and scored on that period.
pub fn time_variance_double_loop(panel: &Panel, estimator: &Estimator, s: usize) -> f64 {
    let t0 = panel.t0();
    let mut total = 0.0;
    for h in (t0 - s)..t0 {
        let units: Vec<usize> = (0..panel.n_units()).collect();
        let y = DMatrix::from_fn(units.len(), h + 1, |i, t| panel.outcome(i, t));
        total += gap(&labelled(y, h), estimator).powi(2);
    }
    total / s as f64
}

pub fn combined_variance_double_loop(panel: &Panel, estimator: &Estimator, s: usize) -> f64 {
    let t0 = panel.t0();
    let mut total = 0.0;
    let mut count = 0;
    for i in 1..panel.n_units() {
        for h in (t0 - s)..t0 {
            total += gap(&sub_panel(panel, i, h, h), estimator).powi(2);
            count += 1;
        }
    }
    total / count as f64
}

/// Copy of `panel` with unit 0's outcomes replaced from period `from` on.
pub fn poison_unit0(panel: &Panel, from: usize) -> Panel {
    let mut y = panel.outcomes().clone();
    for t in from..panel.n_periods() {
        y[(0, t)] = 1.0e6 * (1.0 + t as f64);
    }
    panel.with_outcomes(y).unwrap()
}
