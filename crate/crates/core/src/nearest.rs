//! Penalty descent towards the nearest family with vanishing pairwise
//! commutators: minimize `Σ‖a_k − A_k‖²_F + μ Σ_{(k,l)} ‖[a_k, a_l]‖²_F`.
//!
//! Operators are parametrized as offsets `a_k = A_k + Σ_p x_kp D_p` along a
//! real-orthonormal direction basis, so the displacement term is `‖x‖²`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{C64, IM, ONE, ZERO};
use crate::operators::hermitian_basis;
use crate::optim::{self, LbfgsConfig, LmConfig, LmOutcome, Normal};
use crate::small;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Directions {
    /// Hermitian offsets only.
    Hermitian,
    /// Arbitrary complex offsets.
    Complex,
}

pub(crate) struct NearestProblem {
    pub d: usize,
    pub targets: Vec<Vec<C64>>,
    pub pairs: Vec<(usize, usize)>,
    dirs: Vec<Vec<C64>>,
}

impl NearestProblem {
    pub fn new(d: usize, targets: Vec<Vec<C64>>, pairs: Vec<(usize, usize)>, kind: Directions) -> Self {
        let dirs = match kind {
            Directions::Hermitian => hermitian_basis(d).iter().map(small::to_flat).collect(),
            Directions::Complex => {
                let mut dirs = Vec::with_capacity(2 * d * d);
                for unit in [ONE, IM] {
                    for i in 0..d * d {
                        let mut e = vec![ZERO; d * d];
                        e[i] = unit;
                        dirs.push(e);
                    }
                }
                dirs
            }
        };
        Self { d, targets, pairs, dirs }
    }

    pub fn nparams(&self) -> usize {
        self.targets.len() * self.dirs.len()
    }

    pub fn ops(&self, x: &[f64]) -> Vec<Vec<C64>> {
        let np = self.dirs.len();
        self.targets
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let mut a = t.clone();
                for (p, dir) in self.dirs.iter().enumerate() {
                    let c = x[k * np + p];
                    if c != 0.0 {
                        for (ai, di) in a.iter_mut().zip(dir) {
                            *ai += di * c;
                        }
                    }
                }
                a
            })
            .collect()
    }

    pub fn max_residual(&self, ops: &[Vec<C64>]) -> f64 {
        let mut buf = vec![ZERO; self.d * self.d];
        self.pairs
            .iter()
            .map(|&(k, l)| {
                small::comm(&ops[k], &ops[l], self.d, &mut buf);
                small::norm_sqr(&buf).sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn comm_cost(&self, ops: &[Vec<C64>]) -> f64 {
        let mut buf = vec![ZERO; self.d * self.d];
        self.pairs
            .iter()
            .map(|&(k, l)| {
                small::comm(&ops[k], &ops[l], self.d, &mut buf);
                small::norm_sqr(&buf)
            })
            .sum()
    }

    fn value_grad(&self, x: &[f64], mu: f64, g: &mut [f64]) -> f64 {
        let d = self.d;
        let ops = self.ops(x);
        let adj: Vec<Vec<C64>> = ops.iter().map(|a| small::adjoint(a, d)).collect();
        let mut grads = vec![vec![ZERO; d * d]; ops.len()];
        let mut c = vec![ZERO; d * d];
        let mut t = vec![ZERO; d * d];
        let mut value: f64 = x.iter().map(|v| v * v).sum();
        for &(k, l) in &self.pairs {
            small::comm(&ops[k], &ops[l], d, &mut c);
            value += mu * small::norm_sqr(&c);
            small::comm(&c, &adj[l], d, &mut t);
            for (gi, ti) in grads[k].iter_mut().zip(&t) {
                *gi += ti * (2.0 * mu);
            }
            small::comm(&adj[k], &c, d, &mut t);
            for (gi, ti) in grads[l].iter_mut().zip(&t) {
                *gi += ti * (2.0 * mu);
            }
        }
        let np = self.dirs.len();
        for (k, gk) in grads.iter().enumerate() {
            for (p, dir) in self.dirs.iter().enumerate() {
                let proj: f64 = dir.iter().zip(gk).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
                g[k * np + p] = 2.0 * x[k * np + p] + proj;
            }
        }
        value
    }

    /// L-BFGS through an increasing penalty schedule, warm-starting each stage.
    pub fn descend(&self, x0: Vec<f64>, mus: &[f64], iters_per_stage: usize) -> (Vec<f64>, usize) {
        let mut x = x0;
        let mut total = 0;
        let cfg = LbfgsConfig { max_iters: iters_per_stage, grad_tol: 1e-13, ..Default::default() };
        for &mu in mus {
            let out = optim::lbfgs(|x, g| self.value_grad(x, mu, g), x, &cfg);
            total += out.iterations;
            x = out.x;
        }
        (x, total)
    }

    fn normal(&self, x: &[f64], mu: Option<f64>) -> Normal {
        let d = self.d;
        let n = self.nparams();
        let np = self.dirs.len();
        let ops = self.ops(x);
        let mut jtj = DMatrix::zeros(n, n);
        let mut jtr = DVector::zeros(n);
        let mut cost = 0.0;
        let s = match mu {
            Some(mu) => {
                for i in 0..n {
                    jtj[(i, i)] += 1.0;
                    jtr[i] += x[i];
                    cost += x[i] * x[i];
                }
                mu.sqrt()
            }
            None => 1.0,
        };
        let mut r = vec![ZERO; d * d];
        let mut cols = vec![ZERO; 2 * np * d * d];
        let mut idx = vec![0usize; 2 * np];
        for &(k, l) in &self.pairs {
            small::comm(&ops[k], &ops[l], d, &mut r);
            for v in r.iter_mut() {
                *v *= s;
            }
            cost += small::norm_sqr(&r);
            for (p, dir) in self.dirs.iter().enumerate() {
                let col = &mut cols[p * d * d..(p + 1) * d * d];
                small::comm(dir, &ops[l], d, col);
                let col2 = &mut cols[(np + p) * d * d..(np + p + 1) * d * d];
                small::comm(&ops[k], dir, d, col2);
                idx[p] = k * np + p;
                idx[np + p] = l * np + p;
            }
            if s != 1.0 {
                for v in cols.iter_mut() {
                    *v *= s;
                }
            }
            small::accumulate(&mut jtj, &mut jtr, &r, &idx, &cols);
        }
        Normal { jtj, jtr, cost }
    }

    fn cost(&self, x: &[f64], mu: Option<f64>) -> f64 {
        let ops = self.ops(x);
        match mu {
            Some(mu) => x.iter().map(|v| v * v).sum::<f64>() + mu * self.comm_cost(&ops),
            None => self.comm_cost(&ops),
        }
    }

    /// Levenberg–Marquardt on the penalized cost, or on the commutators
    /// alone when `mu` is `None`.
    pub fn lm(&self, x: Vec<f64>, mu: Option<f64>, cfg: &LmConfig) -> LmOutcome<Vec<f64>> {
        optim::levenberg_marquardt(
            x,
            |x| self.normal(x, mu),
            |x, step| x.iter().zip(step).map(|(a, b)| a + b).collect(),
            |x| self.cost(x, mu),
            cfg,
        )
    }
}
