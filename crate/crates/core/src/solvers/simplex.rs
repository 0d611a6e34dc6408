use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ols::min_norm_lstsq;
use super::{center, check_shapes, SolverReport};
use crate::error::{Error, Result};

const POWER_SEED: u64 = 0x005E_ED0F_51A1;
const POLISH_EVERY: usize = 50;
const CHECK_EVERY: usize = 5;

/// `min ||target - mu - design w||^2 + ridge ||w||^2` over `w >= 0`, and
/// additionally `sum(w) = 1` when `simplex_on_weights` is set.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub design: DMatrix<f64>,
    pub target: DVector<f64>,
    pub simplex_on_weights: bool,
    pub fit_intercept: bool,
    /// Strictly convex perturbation used to select a canonical minimizer.
    pub ridge: f64,
}

impl QpProblem {
    pub fn simplex(design: DMatrix<f64>, target: DVector<f64>) -> Self {
        Self {
            design,
            target,
            simplex_on_weights: true,
            fit_intercept: false,
            ridge: 0.0,
        }
    }

    pub fn with_intercept(mut self, fit_intercept: bool) -> Self {
        self.fit_intercept = fit_intercept;
        self
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100_000,
            tolerance: 1e-8,
        }
    }
}

/// Accelerated projected gradient on the unit simplex.
///
/// The step size comes from a power-iteration estimate of the largest Gram
/// eigenvalue. Whenever the iterate's support looks stable the equality
/// constrained problem on that support is solved directly and accepted if it
/// is feasible and improves the optimality residual.
///
/// `kkt_residual` is measured in weight units: for gradient `g`, Lipschitz
/// constant `L` and multiplier `nu = w . g`, it is the largest of
/// `max(nu - g_i, 0) / L` and `min(w_i, |g_i - nu| / L)`.
///
/// The returned weights are always on the simplex, converged or not.
pub fn solve_simplex_qp(problem: &QpProblem) -> Result<SolverReport> {
    solve_simplex_qp_with(problem, &QpOptions::default(), None)
}

pub fn solve_simplex_qp_with(
    problem: &QpProblem,
    options: &QpOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<SolverReport> {
    if !problem.simplex_on_weights {
        return Err(Error::invalid("solve_simplex_qp requires simplex_on_weights"));
    }
    if problem.design.ncols() == 0 {
        return Err(Error::invalid("simplex constraint needs at least one weight"));
    }
    solve(problem, Feasible::Simplex, options, warm_start)
}

/// Same as [`solve_simplex_qp`] with only `w >= 0` imposed.
pub fn solve_nonneg_qp(problem: &QpProblem) -> Result<SolverReport> {
    solve_nonneg_qp_with(problem, &QpOptions::default(), None)
}

pub fn solve_nonneg_qp_with(
    problem: &QpProblem,
    options: &QpOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<SolverReport> {
    solve(problem, Feasible::Orthant, options, warm_start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feasible {
    Simplex,
    Orthant,
}

impl Feasible {
    fn project(self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Feasible::Simplex => project_onto_simplex(v),
            Feasible::Orthant => v.map(|x| x.max(0.0)),
        }
    }
}

struct Quadratic {
    gram: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
    lipschitz: f64,
}

impl Quadratic {
    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        (&self.gram * w - &self.linear) * 2.0
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let v = w.dot(&(&self.gram * w)) - 2.0 * self.linear.dot(w) + self.constant;
        v.max(0.0)
    }

    fn kkt(&self, w: &DVector<f64>, set: Feasible) -> f64 {
        let g = self.gradient(w);
        let l = if self.lipschitz > 0.0 { self.lipschitz } else { 1.0 };
        let nu = match set {
            Feasible::Simplex => {
                let s = w.sum();
                if s > 0.0 {
                    w.dot(&g) / s
                } else {
                    g.min()
                }
            }
            Feasible::Orthant => 0.0,
        };
        let mut worst: f64 = 0.0;
        for i in 0..w.len() {
            let dual = (nu - g[i]).max(0.0) / l;
            let comp = w[i].max(0.0).min((g[i] - nu).abs() / l);
            worst = worst.max(dual).max(comp);
        }
        worst
    }
}

fn solve(
    problem: &QpProblem,
    set: Feasible,
    options: &QpOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<SolverReport> {
    check_shapes(&problem.design, &problem.target)?;
    if problem.ridge.is_nan() || problem.ridge < 0.0 {
        return Err(Error::invalid("ridge must be nonnegative"));
    }
    let n = problem.design.ncols();
    let c = center(&problem.design, &problem.target, problem.fit_intercept);
    let mut gram = c.design.tr_mul(&c.design);
    for i in 0..n {
        gram[(i, i)] += problem.ridge;
    }
    let linear = c.design.tr_mul(&c.target);
    let lipschitz = 2.0 * largest_eigenvalue(&gram) * 1.01;
    let quad = Quadratic {
        gram,
        linear,
        constant: c.target.norm_squared(),
        lipschitz,
    };

    let start = match warm_start {
        Some(w) if w.len() == n => set.project(w),
        _ => match set {
            Feasible::Simplex => DVector::from_element(n, 1.0 / n as f64),
            Feasible::Orthant => DVector::zeros(n),
        },
    };

    let (weights, iterations, kkt) = if n == 0 {
        (start, 0, 0.0)
    } else if lipschitz <= 0.0 {
        // zero Gram: the objective is constant on the feasible set
        let k = quad.kkt(&start, set);
        (start, 0, k)
    } else {
        accelerated(&quad, set, start, options)
    };

    let intercept = if problem.fit_intercept { c.intercept(&weights) } else { 0.0 };
    Ok(SolverReport {
        objective_value: quad.value(&weights),
        weights,
        intercept,
        iterations,
        converged: kkt <= options.tolerance,
        kkt_residual: kkt,
        rank: None,
    })
}

fn accelerated(
    quad: &Quadratic,
    set: Feasible,
    start: DVector<f64>,
    options: &QpOptions,
) -> (DVector<f64>, usize, f64) {
    let step = 1.0 / quad.lipschitz;
    let mut x = start;
    let mut best_kkt = quad.kkt(&x, set);
    if best_kkt <= options.tolerance {
        return (x, 0, best_kkt);
    }
    if let Some((p, k)) = polish(quad, set, &x) {
        if k < best_kkt {
            x = p;
            best_kkt = k;
            if best_kkt <= options.tolerance {
                return (x, 0, best_kkt);
            }
        }
    }
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut iter = 0;
    while iter < options.max_iter {
        iter += 1;
        let g = quad.gradient(&y);
        let x_new = set.project(&(&y - g * step));
        let restart = (&y - &x_new).dot(&(&x_new - &x)) > 0.0;
        if restart {
            t = 1.0;
            y = x_new.clone();
        } else {
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
            t = t_new;
        }
        x = x_new;

        if iter % CHECK_EVERY == 0 || iter == options.max_iter {
            let k = quad.kkt(&x, set);
            best_kkt = k;
            if k <= options.tolerance {
                break;
            }
        }
        if iter % POLISH_EVERY == 0 {
            if let Some((p, k)) = polish(quad, set, &x) {
                if k < best_kkt {
                    x = p;
                    y = x.clone();
                    t = 1.0;
                    best_kkt = k;
                    if k <= options.tolerance {
                        break;
                    }
                }
            }
        }
    }
    // a final support solve removes the residual error of the iterates
    if let Some((p, k)) = polish(quad, set, &x) {
        if k <= best_kkt {
            return (p, iter, k);
        }
    }
    (x, iter, best_kkt)
}

/// Solves the stationarity system on the support of `x` and returns the
/// result with its residual if it stays feasible.
fn polish(quad: &Quadratic, set: Feasible, x: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let s = support.len();
    let sub = match set {
        Feasible::Simplex => {
            let mut a = DMatrix::zeros(s + 1, s + 1);
            let mut b = DVector::zeros(s + 1);
            for (ii, &i) in support.iter().enumerate() {
                for (jj, &j) in support.iter().enumerate() {
                    a[(ii, jj)] = 2.0 * quad.gram[(i, j)];
                }
                a[(ii, s)] = 1.0;
                a[(s, ii)] = 1.0;
                b[ii] = 2.0 * quad.linear[i];
            }
            b[s] = 1.0;
            let (sol, _) = min_norm_lstsq(&a, &b);
            sol.rows(0, s).into_owned()
        }
        Feasible::Orthant => {
            let a = DMatrix::from_fn(s, s, |ii, jj| quad.gram[(support[ii], support[jj])]);
            let b = DVector::from_fn(s, |ii, _| quad.linear[support[ii]]);
            min_norm_lstsq(&a, &b).0
        }
    };
    let scale = sub.amax().max(1.0);
    if sub.iter().any(|v| !v.is_finite() || *v < -1e-12 * scale) {
        return None;
    }
    let mut w = DVector::zeros(x.len());
    for (ii, &i) in support.iter().enumerate() {
        w[i] = sub[ii].max(0.0);
    }
    if set == Feasible::Simplex {
        let total = w.sum();
        if total <= 0.0 {
            return None;
        }
        w /= total;
    }
    let k = quad.kkt(&w, set);
    Some((w, k))
}

/// Euclidean projection onto `{w : w >= 0, sum(w) = 1}`.
pub fn project_onto_simplex(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    if n == 0 {
        return DVector::zeros(0);
    }
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Power iteration from a fixed-seed start vector.
fn largest_eigenvalue(gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v = DVector::from_fn(n, |_, _| rng.random::<f64>() + 0.5);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn controls(cols: &[&[f64]]) -> DMatrix<f64> {
        let rows = cols[0].len();
        DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    #[test]
    fn interpolation_inside_hull() {
        let x = controls(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let r = solve_simplex_qp(&QpProblem::simplex(x, y)).unwrap();
        assert!(r.converged);
        assert!((r.weights[0] - 0.5).abs() < 1e-8, "{:?}", r.weights);
        assert!((r.weights[1] - 0.5).abs() < 1e-8);
        assert!(r.objective_value < 1e-12);
    }

    #[test]
    fn outside_hull_goes_to_vertex() {
        let x = controls(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let y = DVector::from_vec(vec![3.0, 3.0]);
        let r = solve_simplex_qp(&QpProblem::simplex(x, y)).unwrap();
        assert!(r.converged);
        assert_eq!(r.weights[0], 0.0);
        assert_eq!(r.weights[1], 1.0);
        assert!((r.objective_value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn projection_examples() {
        let p = project_onto_simplex(&DVector::from_vec(vec![0.5, 0.5]));
        assert_eq!(p.as_slice(), [0.5, 0.5]);
        let p = project_onto_simplex(&DVector::from_vec(vec![3.0, 0.0, -1.0]));
        assert_eq!(p.as_slice(), [1.0, 0.0, 0.0]);
        let p = project_onto_simplex(&DVector::from_vec(vec![0.0, 0.0]));
        assert_eq!(p.as_slice(), [0.5, 0.5]);
    }

    #[test]
    fn nonneg_variant_drops_sum_constraint() {
        let x = controls(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let y = DVector::from_vec(vec![2.0, -1.0]);
        let r = solve_nonneg_qp(&QpProblem::simplex(x, y)).unwrap();
        assert!(r.converged);
        assert!((r.weights[0] - 2.0).abs() < 1e-10);
        assert_eq!(r.weights[1], 0.0);
    }

    #[test]
    fn intercept_is_profiled() {
        // target is control 1 shifted by +10
        let x = controls(&[&[1.0, 4.0, 2.0], &[5.0, 1.0, 0.0]]);
        let y = DVector::from_vec(vec![11.0, 14.0, 12.0]);
        let r = solve_simplex_qp(&QpProblem::simplex(x, y).with_intercept(true)).unwrap();
        assert!((r.weights[0] - 1.0).abs() < 1e-8);
        assert!((r.intercept - 10.0).abs() < 1e-7);
    }

    #[test]
    fn rejects_simplex_flag_off_and_empty() {
        let mut p = QpProblem::simplex(DMatrix::zeros(2, 1), DVector::zeros(2));
        p.simplex_on_weights = false;
        assert!(solve_simplex_qp(&p).is_err());
        let empty = QpProblem::simplex(DMatrix::zeros(2, 0), DVector::zeros(2));
        assert!(solve_simplex_qp(&empty).is_err());
    }

    #[test]
    fn zero_design_stays_feasible() {
        let p = QpProblem::simplex(DMatrix::zeros(3, 4), DVector::from_element(3, 1.0));
        let r = solve_simplex_qp(&p).unwrap();
        assert!((r.weights.sum() - 1.0).abs() < 1e-12);
        assert!(r.converged);
    }
}
