//! Small unconstrained optimizers: L-BFGS and Levenberg–Marquardt.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    pub memory: usize,
    /// Stop when the gradient's Euclidean norm falls below this.
    pub grad_tol: f64,
    /// Stop when the objective itself falls below this.
    pub f_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { max_iters: 500, memory: 12, grad_tol: 1e-12, f_tol: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` where `fg(x, grad)` returns `f(x)` and writes `∇f(x)`.
pub fn lbfgs<F>(mut fg: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    for iter in 0..cfg.max_iters {
        if f <= cfg.f_tol || dot(&g, &g).sqrt() <= cfg.grad_tol {
            return LbfgsOutcome { x, f, iterations: iter, converged: true };
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| 1.0 / dot(&g, &g).sqrt().max(1.0));
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            history.clear();
        }
        // Backtracking Armijo search.
        let mut step = 1.0;
        let mut accepted = false;
        let mut f_new = f;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = fg(&x_new, &mut g_new);
            if f_new <= f + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return LbfgsOutcome { x, f, iterations: iter, converged: false };
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        core::mem::swap(&mut x, &mut x_new);
        core::mem::swap(&mut g, &mut g_new);
        let stalled = (f - f_new).abs() <= 1e-15 * f.abs().max(1e-300);
        f = f_new;
        if stalled {
            return LbfgsOutcome { x, f, iterations: iter + 1, converged: true };
        }
    }
    LbfgsOutcome { x, f, iterations: cfg.max_iters, converged: false }
}

/// Gauss–Newton normal equations of a least-squares cost `‖r‖²` at a point.
#[derive(Debug, Clone)]
pub struct Normal {
    pub jtj: DMatrix<f64>,
    pub jtr: DVector<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iters: usize,
    /// Stop once the cost drops below this.
    pub cost_tol: f64,
    /// Stop after a step whose relative cost reduction is below this.
    pub rel_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { max_iters: 200, cost_tol: 0.0, rel_tol: 1e-14 }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome<S> {
    pub state: S,
    pub cost: f64,
    pub iterations: usize,
}

/// Levenberg–Marquardt over an arbitrary state. `linearize` gives the normal
/// equations at a state, `retract` applies a parameter step and `cost`
/// evaluates `‖r‖²`.
pub fn levenberg_marquardt<S, L, R, C>(state: S, mut linearize: L, mut retract: R, mut cost: C, cfg: &LmConfig) -> LmOutcome<S>
where
    L: FnMut(&S) -> Normal,
    R: FnMut(&S, &[f64]) -> S,
    C: FnMut(&S) -> f64,
{
    let mut state = state;
    let mut normal = linearize(&state);
    let mut current = normal.cost;
    let max_diag = (0..normal.jtj.nrows()).map(|i| normal.jtj[(i, i)]).fold(0.0f64, f64::max);
    let mut lambda = 1e-6 * max_diag.max(1e-12);
    let mut iterations = 0;
    while iterations < cfg.max_iters && current > cfg.cost_tol {
        iterations += 1;
        let n = normal.jtj.nrows();
        let mut damped = normal.jtj.clone();
        for i in 0..n {
            damped[(i, i)] += lambda;
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let step = chol.solve(&(-&normal.jtr));
        let predicted = -(2.0 * step.dot(&normal.jtr) + step.dot(&(&normal.jtj * &step)));
        let trial = retract(&state, step.as_slice());
        let trial_cost = cost(&trial);
        if trial_cost < current {
            let rho = if predicted > 0.0 { (current - trial_cost) / predicted } else { 0.0 };
            let reduction = (current - trial_cost) / current;
            state = trial;
            current = trial_cost;
            if rho > 0.75 {
                lambda = (lambda / 3.0).max(1e-300);
            } else if rho < 0.25 {
                lambda *= 2.0;
            }
            if reduction < cfg.rel_tol {
                break;
            }
            normal = linearize(&state);
            current = normal.cost;
        } else {
            lambda *= 4.0;
            if lambda > 1e30 || step.norm() < 1e-300 {
                break;
            }
        }
    }
    LmOutcome { state, cost: current, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_rosenbrock() {
        let out = lbfgs(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a)
            },
            vec![-1.2, 1.0],
            &LbfgsConfig { max_iters: 1000, ..Default::default() },
        );
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6, "{:?}", out.x);
    }

    #[test]
    fn lm_fits_exponential() {
        // r_i = p0 exp(p1 t_i) - y_i with exact data.
        let ts: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 * libm::exp(-1.5 * t)).collect();
        let residual = |p: &Vec<f64>| -> Vec<f64> {
            ts.iter().zip(&ys).map(|(t, y)| p[0] * libm::exp(p[1] * t) - y).collect()
        };
        let out = levenberg_marquardt(
            vec![1.0, 0.0],
            |p| {
                let r = residual(p);
                let j = DMatrix::from_fn(ts.len(), 2, |i, k| {
                    let e = libm::exp(p[1] * ts[i]);
                    if k == 0 { e } else { p[0] * ts[i] * e }
                });
                let r = DVector::from_vec(r);
                Normal { jtj: j.transpose() * &j, jtr: j.transpose() * &r, cost: r.norm_squared() }
            },
            |p, s| vec![p[0] + s[0], p[1] + s[1]],
            |p| residual(p).iter().map(|x| x * x).sum(),
            &LmConfig { cost_tol: 1e-28, ..Default::default() },
        );
        assert!((out.state[0] - 2.0).abs() < 1e-10 && (out.state[1] + 1.5).abs() < 1e-10);
    }
}
