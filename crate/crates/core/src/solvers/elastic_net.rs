use nalgebra::{DMatrix, DVector};

use super::{center, check_shapes, SolverReport};

use crate::error::{Error, Result};

const POLISH_EVERY: usize = 100;

/// `min ||target - mu - design w||^2 + lambda ((1 - alpha)/2 ||w||^2 + alpha ||w||_1)`.
///
/// `mu` is free and unpenalized when `fit_intercept` is set, zero otherwise.
/// With `nonnegative` every coordinate is clamped at zero.
#[derive(Debug, Clone)]
pub struct ElasticNetProblem {
    pub design: DMatrix<f64>,
    pub target: DVector<f64>,
    pub lambda: f64,
    pub alpha: f64,
    pub fit_intercept: bool,
    pub nonnegative: bool,
}

impl ElasticNetProblem {
    pub fn new(design: DMatrix<f64>, target: DVector<f64>, lambda: f64, alpha: f64) -> Self {
        Self {
            design,
            target,
            lambda,
            alpha,
            fit_intercept: true,
            nonnegative: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CdOptions {
    pub max_sweeps: usize,
    /// Bound on `max |dw| / max |w|` over a full sweep.
    pub tolerance: f64,
    /// Bound on the scaled subgradient residual.
    pub kkt_tolerance: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100_000,
            tolerance: 1e-8,
            kkt_tolerance: 1e-6,
        }
    }
}

pub fn solve_elastic_net(problem: &ElasticNetProblem) -> Result<SolverReport> {
    solve_elastic_net_with(problem, &CdOptions::default())
}

/// Cyclic coordinate descent on the Gram matrix of the centered design.
///
/// Full sweeps alternate with sweeps restricted to the current nonzero set.
/// The run stops once a full sweep moves no coefficient by more than
/// `tolerance` relative to the largest one and the subgradient residual is
/// within `kkt_tolerance`. That residual is the largest violation of the
/// coordinatewise optimality conditions divided by `2 max |x_j' y|`.
pub fn solve_elastic_net_with(problem: &ElasticNetProblem, options: &CdOptions) -> Result<SolverReport> {
    check_shapes(&problem.design, &problem.target)?;
    let (lambda, alpha) = (problem.lambda, problem.alpha);
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let n = problem.design.ncols();
    let c = center(&problem.design, &problem.target, problem.fit_intercept);
    let gram = c.design.tr_mul(&c.design);
    let xty = c.design.tr_mul(&c.target);
    let cd = Cd {
        gram: &gram,
        xty: &xty,
        l1: lambda * alpha,
        l2: lambda * (1.0 - alpha),
        nonnegative: problem.nonnegative,
        scale: {
            let s = 2.0 * xty.amax();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        },
    };

    let mut w = DVector::zeros(n);
    let mut gw = DVector::zeros(n);
    let mut sweeps = 0;
    let mut kkt = cd.kkt(&w, &gw);
    let mut converged = n == 0 || kkt == 0.0;
    while !converged && sweeps < options.max_sweeps {
        let change = cd.sweep(&mut w, &mut gw, None);
        sweeps += 1;
        if change <= options.tolerance {
            kkt = cd.kkt(&w, &gw);
            if kkt <= options.kkt_tolerance {
                converged = true;
                break;
            }
        }
        let active: Vec<usize> = (0..n).filter(|&j| w[j] != 0.0).collect();
        let mut inner = 0;
        while sweeps < options.max_sweeps {
            let change = cd.sweep(&mut w, &mut gw, Some(&active));
            sweeps += 1;
            inner += 1;
            if change <= options.tolerance {
                break;
            }
            if inner % POLISH_EVERY == 0 {
                if let Some(k) = cd.try_polish(&mut w, &mut gw, options.kkt_tolerance) {
                    kkt = k;
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            if let Some(k) = cd.try_polish(&mut w, &mut gw, options.kkt_tolerance) {
                kkt = k;
                converged = true;
            }
        }
    }
    if !converged {
        kkt = cd.kkt(&w, &gw);
    }

    let resid = &c.target - &c.design * &w;
    let penalty = lambda * (0.5 * (1.0 - alpha) * w.norm_squared() + alpha * w.lp_norm(1));
    let intercept = if problem.fit_intercept { c.intercept(&w) } else { 0.0 };
    Ok(SolverReport {
        objective_value: resid.norm_squared() + penalty,
        weights: w,
        intercept,
        iterations: sweeps,
        converged,
        kkt_residual: kkt,
        rank: None,
    })
}

struct Cd<'a> {
    gram: &'a DMatrix<f64>,
    xty: &'a DVector<f64>,
    l1: f64,
    l2: f64,
    nonnegative: bool,
    scale: f64,
}

impl Cd<'_> {
    /// One pass over `coords` (all when `None`); keeps `gw = G w` current and
    /// returns the largest relative coefficient change.
    fn sweep(&self, w: &mut DVector<f64>, gw: &mut DVector<f64>, coords: Option<&[usize]>) -> f64 {
        let n = w.len();
        let mut max_change: f64 = 0.0;
        let mut visit = |j: usize, w: &mut DVector<f64>, gw: &mut DVector<f64>| {
            let gjj = self.gram[(j, j)];
            let denom = 2.0 * gjj + self.l2;
            let old = w[j];
            let new = if denom > 0.0 {
                let rho = 2.0 * (self.xty[j] - gw[j] + gjj * old);
                let v = soft_threshold(rho, self.l1) / denom;
                if self.nonnegative {
                    v.max(0.0)
                } else {
                    v
                }
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                w[j] = new;
                for i in 0..n {
                    gw[i] += self.gram[(i, j)] * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        };
        match coords {
            Some(list) => {
                for &j in list {
                    visit(j, w, gw);
                }
            }
            None => {
                for j in 0..n {
                    visit(j, w, gw);
                }
            }
        }
        let size = w.amax();
        if max_change == 0.0 {
            0.0
        } else if size > 0.0 {
            max_change / size
        } else {
            f64::INFINITY
        }
    }

    /// Fixed-sign active-set refinement. Solves the smooth problem on the
    /// nonzero coordinates with their signs held; when that solution leaves
    /// the orthant, steps to the first sign change, drops the coordinate that
    /// hit zero and solves again. The objective never increases. Coordinate
    /// descent can crawl along flat directions when there are more donors
    /// than periods; this jumps ahead.
    fn polish(&self, w: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let mut cur = w.clone();
        let mut moved = false;
        for _ in 0..w.len() {
            let active: Vec<usize> = (0..cur.len()).filter(|&j| cur[j] != 0.0).collect();
            if active.is_empty() {
                break;
            }
            let k = active.len();
            let a = DMatrix::from_fn(k, k, |i, j| {
                2.0 * self.gram[(active[i], active[j])] + if i == j { self.l2 } else { 0.0 }
            });
            let rhs = DVector::from_fn(k, |i, _| 2.0 * self.xty[active[i]] - self.l1 * cur[active[i]].signum());
            let v = a.cholesky()?.solve(&rhs);
            if v.iter().any(|x| !x.is_finite()) {
                return None;
            }
            let mut step: f64 = 1.0;
            let mut blocking = None;
            for (i, &j) in active.iter().enumerate() {
                if v[i].signum() != cur[j].signum() {
                    let t = cur[j] / (cur[j] - v[i]);
                    if t < step {
                        step = t;
                        blocking = Some(j);
                    }
                }
            }
            for (i, &j) in active.iter().enumerate() {
                cur[j] += step * (v[i] - cur[j]);
            }
            moved = true;
            match blocking {
                Some(j) => cur[j] = 0.0,
                None => break,
            }
        }
        if !moved {
            return None;
        }
        let gw = self.gram * &cur;
        Some((cur, gw))
    }

    /// Moves to the polished point and reports its residual when that passes
    /// the KKT check.
    fn try_polish(&self, w: &mut DVector<f64>, gw: &mut DVector<f64>, tol: f64) -> Option<f64> {
        let (pw, pgw) = self.polish(w)?;
        let k = self.kkt(&pw, &pgw);
        if k > tol {
            return None;
        }
        *w = pw;
        *gw = pgw;
        Some(k)
    }

    fn kkt(&self, w: &DVector<f64>, gw: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..w.len() {
            // derivative of the smooth part
            let g = 2.0 * (gw[j] - self.xty[j]) + self.l2 * w[j];
            let v = if w[j] > 0.0 {
                (g + self.l1).abs()
            } else if w[j] < 0.0 {
                (g - self.l1).abs()
            } else if self.nonnegative {
                (-g - self.l1).max(0.0)
            } else {
                (g.abs() - self.l1).max(0.0)
            };
            worst = worst.max(v);
        }
        worst / self.scale
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Smallest `lambda` at which the elastic net with a free intercept returns
/// `w = 0`: `2 max_j |<x_j - mean(x_j), y - mean(y)>| / alpha`.
///
/// The factor 2 comes from the unscaled residual sum of squares in the
/// objective.
pub fn lambda_max(design: &DMatrix<f64>, target: &DVector<f64>, alpha: f64) -> Result<f64> {
    check_shapes(design, target)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "lambda_max needs alpha in (0, 1], got {alpha}"
        )));
    }
    let c = center(design, target, true);
    let xty = c.design.tr_mul(&c.target);
    Ok(2.0 * xty.amax() / alpha)
}
