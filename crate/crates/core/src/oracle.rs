//! Desk-scale ground truth: exact diagonalization by a matrix-free Lanczos
//! solver, global-state energies, and a multi-restart nearest-commuting
//! reference for vertex families.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::QuditGraph;
use crate::instance::QsatInstance;
use crate::linalg::{self, CMat, CVec, C64, ZERO};
use crate::nearest::{Directions, NearestProblem};
use crate::optim::LmConfig;
use crate::rounding::VertexFamily;
use crate::seed;
use crate::witness::{Circuit, TensorNetworkWitness};
use crate::small;

/// Default basis-size cap for exact diagonalization.
pub const DEFAULT_CAP: usize = 1 << 14;

/// Amplitudes over `(C^d)^{⊗n}`, vertex 0 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub n: usize,
    pub d: usize,
    pub amplitudes: CVec,
}

impl GlobalState {
    pub fn new(n: usize, d: usize, amplitudes: CVec) -> Result<Self> {
        let dim = checked_dim(n, d, usize::MAX)?;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch { left: amplitudes.len(), right: dim });
        }
        let deviation = (amplitudes.norm() - 1.0).abs();
        if !(deviation <= 1e-10) {
            return Err(Error::NormDeviation { deviation });
        }
        Ok(Self { n, d, amplitudes })
    }

    /// Haar-random state.
    pub fn random<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Self> {
        let dim = checked_dim(n, d, usize::MAX)?;
        Ok(Self { n, d, amplitudes: linalg::random_unit_vector(dim, rng) })
    }

    /// Computational basis state with the given digits.
    pub fn basis(n: usize, d: usize, digits: &[usize]) -> Result<Self> {
        let dim = checked_dim(n, d, usize::MAX)?;
        if digits.len() != n || digits.iter().any(|&x| x >= d) {
            return Err(Error::DimensionMismatch { left: digits.len(), right: n });
        }
        let index = digits.iter().fold(0usize, |acc, &x| acc * d + x);
        let mut amplitudes = CVec::zeros(dim);
        amplitudes[index] = linalg::ONE;
        Ok(Self { n, d, amplitudes })
    }

    pub fn fidelity(&self, other: &GlobalState) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm_sqr()
    }
}

fn checked_dim(n: usize, d: usize, cap: usize) -> Result<usize> {
    let mut dim = 1usize;
    for _ in 0..n {
        dim = match dim.checked_mul(d) {
            Some(x) if x <= cap => x,
            _ => return Err(Error::CapExceeded { dim: dim.saturating_mul(d), cap }),
        };
    }
    Ok(dim)
}

/// `out += Q_e ψ` for one edge term, applied by strided gathers over the
/// two endpoint digits.
fn apply_term(instance: &QsatInstance, e: usize, psi: &CVec, out: &mut CVec) {
    let d = instance.d;
    let n = instance.n();
    let (u, v) = instance.graph.edges[e];
    let q = &instance.terms[e];
    let su = d.pow((n - 1 - u) as u32);
    let sv = d.pow((n - 1 - v) as u32);
    let dd = d * d;
    let dim = psi.len();
    let mut local = vec![ZERO; dd];
    for base in 0..dim {
        if !(base / su).is_multiple_of(d) || !(base / sv).is_multiple_of(d) {
            continue;
        }
        for a in 0..d {
            for b in 0..d {
                local[a * d + b] = psi[base + a * su + b * sv];
            }
        }
        for a in 0..d {
            for b in 0..d {
                let row = a * d + b;
                let mut s = ZERO;
                for (c, l) in local.iter().enumerate() {
                    s += q[(row, c)] * l;
                }
                out[base + a * su + b * sv] += s;
            }
        }
    }
}

/// `H ψ` with `H = Σ_e Q_e`, never materializing `H`.
pub fn apply_hamiltonian(instance: &QsatInstance, psi: &CVec) -> CVec {
    let mut out = CVec::zeros(psi.len());
    for e in 0..instance.m() {
        apply_term(instance, e, psi, &mut out);
    }
    out
}

/// `⟨ψ|H|ψ⟩`. Errors on a cap violation or a state that is not normalized.
pub fn state_energy(state: &GlobalState, instance: &QsatInstance, cap: usize) -> Result<f64> {
    let dim = checked_dim(instance.n(), instance.d, cap)?;
    if state.n != instance.n() || state.d != instance.d || state.amplitudes.len() != dim {
        return Err(Error::DimensionMismatch { left: state.amplitudes.len(), right: dim });
    }
    let deviation = (state.amplitudes.norm() - 1.0).abs();
    if !(deviation <= 1e-8) {
        return Err(Error::NormDeviation { deviation });
    }
    let h = apply_hamiltonian(instance, &state.amplitudes);
    Ok(state.amplitudes.dotc(&h).re)
}

/// Applies `m` to the tensor leg `leg`, whose dimension changes from
/// `m.ncols()` to `m.nrows()`.
fn apply_leg(psi: &CVec, dims: &mut [usize], leg: usize, m: &CMat) -> CVec {
    let outer: usize = dims[..leg].iter().product();
    let inner: usize = dims[leg + 1..].iter().product();
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut out = CVec::zeros(outer * rows * inner);
    for o in 0..outer {
        for r in 0..rows {
            for c in 0..cols {
                let coef = m[(r, c)];
                if coef == ZERO {
                    continue;
                }
                let src = (o * cols + c) * inner;
                let dst = (o * rows + r) * inner;
                for i in 0..inner {
                    out[dst + i] += coef * psi[src + i];
                }
            }
        }
    }
    dims[leg] = rows;
    out
}

/// Global state of a witness: the product of edge and residual states,
/// regrouped by vertex and pushed through each assigned block isometry.
pub fn expand_witness(witness: &TensorNetworkWitness, graph: &QuditGraph, cap: usize) -> Result<GlobalState> {
    checked_dim(witness.n, witness.d, cap)?;
    let mut pieces = Vec::new();
    let mut dims = Vec::new();
    // (vertex, position among that vertex's legs) for every piece leg.
    let mut owners = Vec::new();
    for (e, &(u, v)) in graph.edges.iter().enumerate() {
        pieces.push(witness.edge_states[e].clone());
        for x in [u, v] {
            let leg = witness.structures[x].edges.iter().position(|&f| f == e).ok_or_else(|| Error::StructureMismatch(alloc::format!("vertex {x} does not list edge {e}")))?;
            dims.push(witness.block(x).factor_dims[leg]);
            owners.push((x, leg));
        }
    }
    for v in 0..witness.n {
        pieces.push(witness.residual_states[v].clone());
        dims.push(witness.block(v).residual_dim);
        owners.push((v, witness.block(v).factor_dims.len()));
    }
    let product = linalg::kron_vecs(&pieces);
    let mut target: Vec<usize> = (0..owners.len()).collect();
    target.sort_by_key(|&k| owners[k]);
    let mut psi = linalg::permute_vector(&product, &dims, &target);
    let mut vertex_dims: Vec<usize> = (0..witness.n).map(|v| witness.block(v).dim()).collect();
    for v in 0..witness.n {
        psi = apply_leg(&psi, &mut vertex_dims, v, &witness.block(v).isometry);
    }
    GlobalState::new(witness.n, witness.d, psi)
}

/// Runs a circuit on `|0…0⟩`.
pub fn apply_circuit(circuit: &Circuit, cap: usize) -> Result<GlobalState> {
    let (n, d) = (circuit.n, circuit.d);
    let digits = vec![0usize; n];
    checked_dim(n, d, cap)?;
    let mut psi = GlobalState::basis(n, d, &digits)?.amplitudes;
    for layer in &circuit.layers {
        for gate in layer {
            psi = match *gate.qudits.as_slice() {
                [v] => apply_leg(&psi, &mut vec![d; n], v, &gate.matrix),
                [u, v] if u < v => {
                    // Merge the two legs by moving v next to u.
                    let mut order: Vec<usize> = (0..n).filter(|&k| k != v).collect();
                    let pos = order.iter().position(|&k| k == u).expect("leg") + 1;
                    order.insert(pos, v);
                    let moved = linalg::permute_vector(&psi, &vec![d; n], &order);
                    let mut merged: Vec<usize> = vec![d; n - 1];
                    merged[pos - 1] = d * d;
                    let applied = apply_leg(&moved, &mut merged, pos - 1, &gate.matrix);
                    let back: Vec<usize> = (0..n).map(|k| order.iter().position(|&o| o == k).expect("leg")).collect();
                    linalg::permute_vector(&applied, &vec![d; n], &back)
                }
                _ => return Err(Error::StructureMismatch(alloc::format!("gate on qudits {:?}", gate.qudits))),
            };
        }
    }
    GlobalState::new(n, d, psi)
}

/// Krylov dimension per Lanczos cycle.
const KRYLOV: usize = 48;
/// Required eigen-residual `‖Hψ − Eψ‖`.
pub const EIGEN_RESIDUAL: f64 = 1e-8;

/// Smallest eigenvalue of `H` and an eigenvector, by restarted Lanczos with
/// full reorthogonalization and a seeded start vector.
pub fn exact_ground_energy(instance: &QsatInstance, cap: usize) -> Result<(f64, GlobalState)> {
    let dim = checked_dim(instance.n(), instance.d, cap).map_err(|_| Error::CapExceeded {
        dim: instance.d.checked_pow(instance.n() as u32).unwrap_or(usize::MAX),
        cap,
    })?;
    let mut rng = seed::stream(instance.metadata.seed, "lanczos-start", 0);
    let mut x = linalg::random_unit_vector(dim, &mut rng);
    let m = KRYLOV.min(dim);
    let mut best = (f64::INFINITY, x.clone(), f64::INFINITY);
    for _cycle in 0..200 {
        let mut basis: Vec<CVec> = Vec::with_capacity(m);
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        basis.push(x.clone());
        for j in 0..m {
            let mut w = apply_hamiltonian(instance, &basis[j]);
            alpha.push(basis[j].dotc(&w).re);
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dotc(&w);
                    w.axpy(-c, b, linalg::ONE);
                }
            }
            let nb = w.norm();
            if j + 1 == m || nb < 1e-12 {
                break;
            }
            beta.push(nb);
            basis.push(w / C64::new(nb, 0.0));
        }
        let k = alpha.len();
        let t = nalgebra::DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let (_, vecs) = linalg::eigh_real(&t);
        let mut ritz = CVec::zeros(dim);
        for (i, b) in basis.iter().enumerate().take(k) {
            ritz.axpy(C64::new(vecs[(i, 0)], 0.0), b, linalg::ONE);
        }
        let ritz = &ritz / C64::new(ritz.norm(), 0.0);
        let hr = apply_hamiltonian(instance, &ritz);
        let energy = ritz.dotc(&hr).re;
        let residual = (&hr - &ritz * C64::new(energy, 0.0)).norm();
        best = (energy, ritz.clone(), residual);
        if residual <= EIGEN_RESIDUAL * 0.1 || k < m {
            break;
        }
        x = ritz;
    }
    let (energy, vector, residual) = best;
    if !(residual <= EIGEN_RESIDUAL) {
        return Err(Error::NonConvergence { iterations: 200, best_residual: residual });
    }
    Ok((energy, GlobalState { n: instance.n(), d: instance.d, amplitudes: vector }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub family: VertexFamily,
    /// `max_{i,α} ‖A⁽ⁱ⁾_α − a⁽ⁱ⁾_α‖_F` of the best restart.
    pub displacement: f64,
    /// Largest cross-group commutator of the returned family.
    pub residual: f64,
    /// Index of the winning restart (0 is the unperturbed start).
    pub restart: usize,
}

/// Penalty weights of each descent.
const ORACLE_SCHEDULE: [f64; 7] = [1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6];
const ORACLE_STAGE_ITERS: usize = 80;
/// Relative size of the largest restart perturbation.
const ORACLE_NOISE: f64 = 0.25;

/// Best-of-restarts penalty descent to a commuting family, used only as an
/// upper-bound reference for rounding quality. Restart 0 starts at the input;
/// restart `r` adds complex noise of relative size `0.25·r/restarts`. The
/// best restart (by penalized objective) is polished to exact commutation.
pub fn oracle_nearest_commuting(family: &VertexFamily, restarts: usize, seed: u64) -> OracleOutcome {
    let d = family.d();
    let mut origin = Vec::new();
    let mut targets = Vec::new();
    for (g, ops) in family.groups.iter().enumerate() {
        for a in ops {
            origin.push(g);
            targets.push(small::to_flat(a));
        }
    }
    let mut pairs = Vec::new();
    for i in 0..origin.len() {
        for j in (i + 1)..origin.len() {
            if origin[i] != origin[j] {
                pairs.push((i, j));
            }
        }
    }
    let problem = NearestProblem::new(d, targets, pairs, Directions::Complex);
    let initial = problem.max_residual(&problem.ops(&vec![0.0; problem.nparams()]));
    if initial <= 1e-12 || d == 0 {
        return OracleOutcome { family: family.clone(), displacement: 0.0, residual: initial, restart: 0 };
    }
    let scale = family.groups.iter().flatten().map(linalg::frob_norm).fold(0.0, f64::max);
    let per_entry = 1.0 / libm::sqrt((2 * d * d) as f64);
    let final_mu = ORACLE_SCHEDULE[ORACLE_SCHEDULE.len() - 1];
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = seed::stream(seed, "oracle-restart", r as u64);
        let sigma = ORACLE_NOISE * scale * r as f64 / restarts.max(1) as f64 * per_entry;
        let x0: Vec<f64> = (0..problem.nparams())
            .map(|_| if r == 0 { 0.0 } else { sigma * rng.sample::<f64, _>(StandardNormal) })
            .collect();
        let (x, _) = problem.descend(x0, &ORACLE_SCHEDULE, ORACLE_STAGE_ITERS);
        let objective = x.iter().map(|v| v * v).sum::<f64>() + final_mu * problem.comm_cost(&problem.ops(&x));
        if best.as_ref().is_none_or(|b| objective < b.0) {
            best = Some((objective, x, r));
        }
    }
    let (_, x, restart) = best.expect("at least one restart");
    let polish = problem.lm(x, None, &LmConfig { max_iters: 100, cost_tol: 1e-26, rel_tol: 0.0 });
    let ops = problem.ops(&polish.state);
    let residual = problem.max_residual(&ops);
    let mut groups: Vec<Vec<CMat>> = family.groups.iter().map(|g| Vec::with_capacity(g.len())).collect();
    for (g, flat) in origin.iter().zip(&ops) {
        groups[*g].push(small::from_flat(d, flat));
    }
    let rounded = VertexFamily { vertex: family.vertex, edges: family.edges.clone(), groups };
    OracleOutcome { displacement: family.displacement(&rounded), family: rounded, residual, restart }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::QuditGraph;
    use crate::instance::classical_instance;
    use crate::operators::paulis::{x, z};

    fn odd_cycle() -> QsatInstance {
        let g = QuditGraph::new(5, 2, vec![(0, 1), (0, 4), (1, 2), (2, 3), (3, 4)]).unwrap();
        classical_instance(g, 2, &vec![vec![(0, 0), (1, 1)]; 5], 0).unwrap()
    }

    #[test]
    fn odd_cycle_energy_is_one() {
        let inst = odd_cycle();
        let (e, gs) = exact_ground_energy(&inst, DEFAULT_CAP).unwrap();
        assert!((e - 1.0).abs() < 1e-9, "{e}");
        assert!((state_energy(&gs, &inst, DEFAULT_CAP).unwrap() - e).abs() < 1e-9);
        let zeros = GlobalState::basis(5, 2, &[0; 5]).unwrap();
        assert!((state_energy(&zeros, &inst, DEFAULT_CAP).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let inst = odd_cycle();
        assert!(matches!(exact_ground_energy(&inst, 16), Err(Error::CapExceeded { cap: 16, .. })));
    }

    #[test]
    fn oracle_tilted_pair() {
        let theta = 0.1f64;
        let tilted = z() * C64::new(theta.cos(), 0.0) + x() * C64::new(theta.sin(), 0.0);
        let fam = VertexFamily::new(0, vec![0, 1], vec![vec![z()], vec![tilted]]).unwrap();
        let out = oracle_nearest_commuting(&fam, 8, 1);
        assert!(out.residual <= 1e-10);
        assert!(out.displacement <= 2f64.sqrt() * theta.sin() + 1e-9);
        let fixed = VertexFamily::new(0, vec![0, 1], vec![vec![z()], vec![z()]]).unwrap();
        assert_eq!(oracle_nearest_commuting(&fixed, 4, 1).displacement, 0.0);
    }
}
