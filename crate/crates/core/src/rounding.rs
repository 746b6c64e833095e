//! Rounding nearly-commuting vertex families to exactly commuting ones, and
//! the sweep that turns an instance into a commuting Hamiltonian.
//!
//! At a vertex `v`, every incident edge term is Schmidt-decomposed with the
//! weights on `v`: `Q_i = Σ_α A⁽ⁱ⁾_α ⊗ B⁽ⁱ⁾_α`. Two edge terms sharing `v`
//! commute exactly when every `A⁽ⁱ⁾_α` commutes with every `A⁽ʲ⁾_β`, so
//! rounding acts on the `A` side only and leaves the `B` side untouched.
//!
//! Two solvers are available:
//! * `Structural` gives each edge group its own unitary frame `W_i` and
//!   replaces `A⁽ⁱ⁾_α` by `W_i A⁽ⁱ⁾_α W_i†`. Conjugation keeps norms,
//!   orthogonality, Hermiticity and projectivity exactly, so the rounded term
//!   is `(W_i ⊗ I) Q_i (W_i ⊗ I)†`.
//! * `Penalty` moves the operators freely (Hermitian offsets) under a growing
//!   commutator penalty, then restores within-group orthogonality and norms.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::QuditGraph;
use crate::instance::{self, QsatInstance};
use crate::linalg::{self, CMat, C64, ZERO};
use crate::nearest::{Directions, NearestProblem};
use crate::operators::{self, hermitian_basis, Operator, SchmidtDecomposition, Side, Support};
use crate::optim::{self, LmConfig, Normal};
use crate::small;

/// The `A`-side operators at one vertex, one group per incident edge.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexFamily {
    pub vertex: usize,
    /// Edge id of each group.
    pub edges: Vec<usize>,
    pub groups: Vec<Vec<CMat>>,
}

impl VertexFamily {
    pub fn new(vertex: usize, edges: Vec<usize>, groups: Vec<Vec<CMat>>) -> Result<Self> {
        if edges.len() != groups.len() {
            return Err(Error::InvalidInstance(format!(
                "{} edge ids for {} groups",
                edges.len(),
                groups.len()
            )));
        }
        let mut dim = None;
        for op in groups.iter().flatten() {
            if op.nrows() != op.ncols() {
                return Err(Error::DimensionMismatch { left: op.nrows(), right: op.ncols() });
            }
            match dim {
                None => dim = Some(op.nrows()),
                Some(d) if d != op.nrows() => return Err(Error::DimensionMismatch { left: d, right: op.nrows() }),
                _ => {}
            }
        }
        Ok(Self { vertex, edges, groups })
    }

    /// Local dimension, zero for a family without operators.
    pub fn d(&self) -> usize {
        self.groups.iter().flatten().next().map_or(0, |m| m.nrows())
    }

    pub fn op_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Largest Frobenius commutator between operators of different groups.
    pub fn max_cross_commutator(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, gi) in self.groups.iter().enumerate() {
            for gj in &self.groups[i + 1..] {
                for a in gi {
                    for b in gj {
                        worst = worst.max(linalg::frob_norm(&linalg::commutator(a, b)));
                    }
                }
            }
        }
        worst
    }

    /// Largest `|⟨a, b⟩_F|` between distinct members of one group.
    pub fn orthogonality_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for g in &self.groups {
            for (i, a) in g.iter().enumerate() {
                for b in &g[i + 1..] {
                    worst = worst.max(linalg::frob_inner(a, b).norm());
                }
            }
        }
        worst
    }

    /// Largest `‖a − b‖_F` over matching members.
    pub fn displacement(&self, other: &VertexFamily) -> f64 {
        self.group_displacement(other).into_iter().fold(0.0, f64::max)
    }

    fn group_displacement(&self, other: &VertexFamily) -> Vec<f64> {
        self.groups
            .iter()
            .zip(&other.groups)
            .map(|(g, h)| g.iter().zip(h).map(|(a, b)| linalg::frob_norm(&(a - b))).fold(0.0, f64::max))
            .collect()
    }
}

/// Schmidt decomposition of an edge term with the weights on `vertex`.
fn decompose_at(graph: &QuditGraph, d: usize, term: &CMat, edge: usize, vertex: usize) -> Result<SchmidtDecomposition> {
    let (u, v) = graph.edges[edge];
    let side = Side::of_vertex(u, v, vertex).ok_or_else(|| Error::InvalidInstance(format!("edge {edge} does not touch vertex {vertex}")))?;
    if linalg::hermiticity_residual(term) <= 1e-12 * linalg::frob_norm(term).max(1.0) {
        operators::hermitian_schmidt_decompose(term, d, side)
    } else {
        operators::schmidt_decompose_matrix(term, d, side)
    }
}

fn family_from_terms(graph: &QuditGraph, d: usize, terms: &[CMat], vertex: usize) -> Result<(VertexFamily, Vec<SchmidtDecomposition>)> {
    let edges = graph.incident_edges(vertex);
    let decomps = edges
        .iter()
        .map(|&e| decompose_at(graph, d, &terms[e], e, vertex))
        .collect::<Result<Vec<_>>>()?;
    let groups = decomps.iter().map(SchmidtDecomposition::a_ops).collect();
    Ok((VertexFamily::new(vertex, edges, groups)?, decomps))
}

/// The family at `vertex` together with the Schmidt decompositions it came
/// from (in incident-edge order).
pub fn vertex_family(instance: &QsatInstance, vertex: usize) -> Result<(VertexFamily, Vec<SchmidtDecomposition>)> {
    if vertex >= instance.n() {
        return Err(Error::InvalidInstance(format!("vertex {vertex} out of range")));
    }
    family_from_terms(&instance.graph, instance.d, &instance.terms, vertex)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundingMode {
    Structural,
    Penalty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundingConfig {
    pub mode: RoundingMode,
    /// Required cross-group commutator (Frobenius) after rounding.
    pub tol: f64,
    /// Iteration budget per solver stage.
    pub max_iters: usize,
    pub norm_preserving: bool,
    /// Switch to the penalty solver when the structural one fails.
    pub fallback: bool,
    /// Premise tolerance for hermitization.
    pub premise_tol: f64,
    /// Required intersecting-pair commutator (Frobenius) of the output.
    pub certificate_tol: f64,
}

impl Default for RoundingConfig {
    fn default() -> Self {
        Self {
            mode: RoundingMode::Structural,
            tol: 1e-10,
            max_iters: 200,
            norm_preserving: true,
            fallback: true,
            premise_tol: 1e-9,
            certificate_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundingReport {
    pub vertex: usize,
    pub edges: Vec<usize>,
    /// Solver that produced the output.
    pub mode: RoundingMode,
    pub fell_back: bool,
    /// `max_{i,α} ‖A⁽ⁱ⁾_α − a⁽ⁱ⁾_α‖_F`.
    pub displacement: f64,
    /// Per-group maximum of the same quantity.
    pub group_displacement: Vec<f64>,
    /// Operator-norm change of each edge term, filled in by the sweep.
    pub term_displacement: Vec<f64>,
    /// Largest cross-group commutator after rounding.
    pub residual: f64,
    pub iterations: usize,
    pub norm_preserving: bool,
    /// `max |‖a‖_F − ‖A‖_F|`.
    pub norm_deviation: f64,
    pub orthogonality_residual: f64,
}

/// Rounded family plus, for the structural solver, the unitary frame of
/// each group.
#[derive(Debug, Clone)]
pub struct RoundedVertex {
    pub family: VertexFamily,
    pub report: RoundingReport,
    pub frames: Option<Vec<CMat>>,
}

/// Hermitian components of every operator, `A = H₁ + i H₂`, with zero
/// components dropped. Commutation of all components is equivalent to
/// commutation of the operators and their adjoints, and the displacement
/// splits as `‖ΔA‖² = ‖ΔH₁‖² + ‖ΔH₂‖²`.
struct Components {
    d: usize,
    /// `(group, op index in group, imaginary part?)`.
    origin: Vec<(usize, usize, bool)>,
    flats: Vec<Vec<C64>>,
    pairs: Vec<(usize, usize)>,
}

impl Components {
    fn split(family: &VertexFamily) -> Self {
        let d = family.d();
        let scale = family.groups.iter().flatten().map(linalg::frob_norm).fold(0.0, f64::max);
        let mut origin = Vec::new();
        let mut flats = Vec::new();
        for (g, ops) in family.groups.iter().enumerate() {
            for (k, a) in ops.iter().enumerate() {
                let re = linalg::hermitian_part(a);
                let im = linalg::hermitian_part(&(a * C64::new(0.0, -1.0)));
                for (part, imag) in [(re, false), (im, true)] {
                    if linalg::frob_norm(&part) > 1e-14 * scale {
                        origin.push((g, k, imag));
                        flats.push(small::to_flat(&part));
                    }
                }
            }
        }
        let mut pairs = Vec::new();
        for i in 0..origin.len() {
            for j in (i + 1)..origin.len() {
                if origin[i].0 != origin[j].0 {
                    pairs.push((i, j));
                }
            }
        }
        Self { d, origin, flats, pairs }
    }

    fn recombine(&self, family: &VertexFamily, flats: &[Vec<C64>]) -> VertexFamily {
        let d = self.d;
        let mut groups: Vec<Vec<CMat>> = family.groups.iter().map(|g| vec![CMat::zeros(d, d); g.len()]).collect();
        for (&(g, k, imag), f) in self.origin.iter().zip(flats) {
            let m = small::from_flat(d, f);
            groups[g][k] += if imag { m * C64::new(0.0, 1.0) } else { m };
        }
        VertexFamily { vertex: family.vertex, edges: family.edges.clone(), groups }
    }

    fn max_residual(&self, flats: &[Vec<C64>]) -> f64 {
        let mut buf = vec![ZERO; self.d * self.d];
        self.pairs
            .iter()
            .map(|&(k, l)| {
                small::comm(&flats[k], &flats[l], self.d, &mut buf);
                small::norm_sqr(&buf).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Penalty weights used by the structural solver before its final
/// feasibility polish.
const STRUCTURAL_SCHEDULE: [f64; 5] = [1.0, 1e2, 1e4, 1e6, 1e8];

struct FrameProblem<'a> {
    comps: &'a Components,
    basis: Vec<Vec<C64>>,
    n_groups: usize,
}

impl FrameProblem<'_> {
    fn ops(&self, frames: &[CMat]) -> Vec<Vec<C64>> {
        let d = self.comps.d;
        self.comps
            .origin
            .iter()
            .zip(&self.comps.flats)
            .map(|(&(g, _, _), f)| {
                let w = &frames[g];
                small::to_flat(&(w * small::from_flat(d, f) * w.adjoint()))
            })
            .collect()
    }

    fn cost(&self, frames: &[CMat], mu: Option<f64>) -> f64 {
        let d = self.comps.d;
        let ops = self.ops(frames);
        let mut buf = vec![ZERO; d * d];
        let comm: f64 = self
            .comps
            .pairs
            .iter()
            .map(|&(k, l)| {
                small::comm(&ops[k], &ops[l], d, &mut buf);
                small::norm_sqr(&buf)
            })
            .sum();
        match mu {
            Some(mu) => {
                let disp: f64 = ops
                    .iter()
                    .zip(&self.comps.flats)
                    .map(|(a, h)| a.iter().zip(h).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>())
                    .sum();
                disp + mu * comm
            }
            None => comm,
        }
    }

    fn normal(&self, frames: &[CMat], mu: Option<f64>) -> Normal {
        let d = self.comps.d;
        let dd = d * d;
        let np = self.basis.len();
        let n = self.n_groups * np;
        let ops = self.ops(frames);
        // Derivative of each component along i·H_p: i[H_p, a].
        let derivs: Vec<Vec<C64>> = ops
            .iter()
            .map(|a| {
                let mut out = vec![ZERO; np * dd];
                for (p, h) in self.basis.iter().enumerate() {
                    let col = &mut out[p * dd..(p + 1) * dd];
                    small::comm(h, a, d, col);
                    for z in col.iter_mut() {
                        *z = C64::new(-z.im, z.re);
                    }
                }
                out
            })
            .collect();
        let mut jtj = DMatrix::zeros(n, n);
        let mut jtr = DVector::zeros(n);
        let mut cost = 0.0;
        let mut idx = vec![0usize; 2 * np];
        let s = if let Some(mu) = mu {
            for (c, (a, h)) in ops.iter().zip(&self.comps.flats).enumerate() {
                let r: Vec<C64> = a.iter().zip(h).map(|(x, y)| x - y).collect();
                cost += small::norm_sqr(&r);
                let g = self.comps.origin[c].0;
                for (p, slot) in idx.iter_mut().take(np).enumerate() {
                    *slot = g * np + p;
                }
                small::accumulate(&mut jtj, &mut jtr, &r, &idx[..np], &derivs[c]);
            }
            mu.sqrt()
        } else {
            1.0
        };
        let mut r = vec![ZERO; dd];
        let mut cols = vec![ZERO; 2 * np * dd];
        for &(k, l) in &self.comps.pairs {
            small::comm(&ops[k], &ops[l], d, &mut r);
            for z in r.iter_mut() {
                *z *= s;
            }
            cost += small::norm_sqr(&r);
            let (gk, gl) = (self.comps.origin[k].0, self.comps.origin[l].0);
            for p in 0..np {
                small::comm(&derivs[k][p * dd..(p + 1) * dd], &ops[l], d, &mut cols[p * dd..(p + 1) * dd]);
                small::comm(&ops[k], &derivs[l][p * dd..(p + 1) * dd], d, &mut cols[(np + p) * dd..(np + p + 1) * dd]);
                idx[p] = gk * np + p;
                idx[np + p] = gl * np + p;
            }
            if s != 1.0 {
                for z in cols.iter_mut() {
                    *z *= s;
                }
            }
            small::accumulate(&mut jtj, &mut jtr, &r, &idx, &cols);
        }
        Normal { jtj, jtr, cost }
    }

    fn retract(&self, frames: &[CMat], step: &[f64]) -> Vec<CMat> {
        let d = self.comps.d;
        let np = self.basis.len();
        frames
            .iter()
            .enumerate()
            .map(|(g, w)| {
                let mut h = CMat::zeros(d, d);
                for (p, b) in self.basis.iter().enumerate() {
                    let c = step[g * np + p];
                    if c != 0.0 {
                        h += small::from_flat(d, b) * C64::new(c, 0.0);
                    }
                }
                linalg::expm_i_hermitian(&h, 1.0) * w
            })
            .collect()
    }
}

fn solve_structural(family: &VertexFamily, comps: &Components, cfg: &RoundingConfig) -> Result<(VertexFamily, Vec<CMat>, usize)> {
    let d = comps.d;
    let problem = FrameProblem {
        comps,
        basis: hermitian_basis(d).iter().map(small::to_flat).collect(),
        n_groups: family.groups.len(),
    };
    let mut frames = vec![linalg::identity(d); family.groups.len()];
    let mut iterations = 0;
    let stage = LmConfig { max_iters: cfg.max_iters, cost_tol: 0.0, rel_tol: 1e-12 };
    for mu in STRUCTURAL_SCHEDULE {
        let out = optim::levenberg_marquardt(
            frames,
            |f| problem.normal(f, Some(mu)),
            |f, s| problem.retract(f, s),
            |f| problem.cost(f, Some(mu)),
            &stage,
        );
        iterations += out.iterations;
        frames = out.state;
    }
    let target = cfg.tol * 1e-3;
    let polish = LmConfig { max_iters: cfg.max_iters, cost_tol: target * target, rel_tol: 0.0 };
    let out = optim::levenberg_marquardt(
        frames,
        |f| problem.normal(f, None),
        |f, s| problem.retract(f, s),
        |f| problem.cost(f, None),
        &polish,
    );
    iterations += out.iterations;
    let frames = out.state;
    let ops = problem.ops(&frames);
    let residual = comps.max_residual(&ops);
    if !(residual <= cfg.tol) {
        return Err(Error::NonConvergence { iterations, best_residual: residual });
    }
    let rounded = VertexFamily {
        vertex: family.vertex,
        edges: family.edges.clone(),
        groups: family
            .groups
            .iter()
            .zip(&frames)
            .map(|(g, w)| g.iter().map(|a| w * a * w.adjoint()).collect())
            .collect(),
    };
    Ok((rounded, frames, iterations))
}

/// Number of doubling rounds of the penalty weight.
pub const PENALTY_ROUNDS: usize = 30;

fn solve_penalty(family: &VertexFamily, comps: &Components, cfg: &RoundingConfig) -> Result<(VertexFamily, usize)> {
    let problem = NearestProblem::new(comps.d, comps.flats.clone(), comps.pairs.clone(), Directions::Hermitian);
    let mus: Vec<f64> = (0..PENALTY_ROUNDS).map(|r| libm::pow(2.0, r as f64)).collect();
    let (x, mut iterations) = problem.descend(vec![0.0; problem.nparams()], &mus, cfg.max_iters);
    let target = cfg.tol * 1e-3;
    let out = problem.lm(x, None, &LmConfig { max_iters: cfg.max_iters, cost_tol: target * target, rel_tol: 0.0 });
    iterations += out.iterations;
    let ops = problem.ops(&out.state);
    let residual = problem.max_residual(&ops);
    if !(residual <= cfg.tol) {
        return Err(Error::NonConvergence { iterations, best_residual: residual });
    }
    let mut rounded = comps.recombine(family, &ops);
    if cfg.norm_preserving {
        restore_norms(&mut rounded, family)?;
    }
    Ok((rounded, iterations))
}

/// Gram–Schmidt within each group (original order), then rescaling to the
/// original Frobenius norms. Linear recombination inside a group keeps all
/// cross-group commutators zero.
fn restore_norms(rounded: &mut VertexFamily, original: &VertexFamily) -> Result<()> {
    for (group, orig) in rounded.groups.iter_mut().zip(&original.groups) {
        let mut done: Vec<CMat> = Vec::with_capacity(group.len());
        for (a, target) in group.iter_mut().zip(orig) {
            let want = linalg::frob_norm(target);
            if want == 0.0 {
                *a = CMat::zeros(a.nrows(), a.ncols());
                continue;
            }
            let mut v = a.clone();
            for _ in 0..2 {
                for e in &done {
                    v -= e * linalg::frob_inner(e, &v);
                }
            }
            let n = linalg::frob_norm(&v);
            if !(n > 1e-12 * want) {
                return Err(Error::NormDeviation { deviation: want });
            }
            let e = v / C64::new(n, 0.0);
            *a = &e * C64::new(want, 0.0);
            done.push(e);
        }
    }
    Ok(())
}

fn build_report(original: &VertexFamily, rounded: &VertexFamily, mode: RoundingMode, fell_back: bool, iterations: usize, cfg: &RoundingConfig) -> RoundingReport {
    let group_displacement = original.group_displacement(rounded);
    let norm_deviation = original
        .groups
        .iter()
        .flatten()
        .zip(rounded.groups.iter().flatten())
        .map(|(a, b)| (linalg::frob_norm(a) - linalg::frob_norm(b)).abs())
        .fold(0.0, f64::max);
    RoundingReport {
        vertex: original.vertex,
        edges: original.edges.clone(),
        mode,
        fell_back,
        displacement: group_displacement.iter().copied().fold(0.0, f64::max),
        group_displacement,
        term_displacement: Vec::new(),
        residual: rounded.max_cross_commutator(),
        iterations,
        norm_preserving: cfg.norm_preserving || mode == RoundingMode::Structural,
        norm_deviation,
        orthogonality_residual: rounded.orthogonality_residual(),
    }
}

/// Rounds a vertex family and keeps the structural frames when available.
pub fn round_vertex_detailed(family: &VertexFamily, cfg: &RoundingConfig) -> Result<RoundedVertex> {
    let d = family.d();
    if family.max_cross_commutator() <= cfg.tol * 1e-2 {
        let report = build_report(family, family, cfg.mode, false, 0, cfg);
        let frames = (cfg.mode == RoundingMode::Structural).then(|| vec![linalg::identity(d); family.groups.len()]);
        return Ok(RoundedVertex { family: family.clone(), report, frames });
    }
    let comps = Components::split(family);
    if cfg.mode == RoundingMode::Structural {
        match solve_structural(family, &comps, cfg) {
            Ok((rounded, frames, iters)) => {
                let report = build_report(family, &rounded, RoundingMode::Structural, false, iters, cfg);
                return Ok(RoundedVertex { family: rounded, report, frames: Some(frames) });
            }
            Err(e) if !cfg.fallback => return Err(e),
            Err(_) => {}
        }
    }
    let (rounded, iters) = solve_penalty(family, &comps, cfg)?;
    let fell_back = cfg.mode == RoundingMode::Structural;
    let report = build_report(family, &rounded, RoundingMode::Penalty, fell_back, iters, cfg);
    Ok(RoundedVertex { family: rounded, report, frames: None })
}

/// Replaces a nearly-commuting family by an exactly commuting one.
pub fn round_vertex(family: &VertexFamily, cfg: &RoundingConfig) -> Result<(VertexFamily, RoundingReport)> {
    round_vertex_detailed(family, cfg).map(|r| (r.family, r.report))
}

fn embed_pair(graph: &QuditGraph, d: usize, e: usize, qe: &CMat, f: usize, qf: &CMat) -> (CMat, CMat) {
    let (a, b) = graph.edges[e];
    let (c, dd) = graph.edges[f];
    let mut support = vec![a, b, c, dd];
    support.sort_unstable();
    support.dedup();
    let emb = |q: &CMat, u: usize, v: usize| {
        operators::tensor_embed(&Operator::abstract_op(q.clone()).expect("square"), &[u, v], &support, d)
            .expect("support inside union")
            .into_matrix()
    };
    (emb(qe, a, b), emb(qf, c, dd))
}

fn embedded_commutators(a: &Operator, b: &Operator, d: usize) -> Result<Option<(CMat, CMat)>> {
    match (a.support(), b.support()) {
        (Support::Edge { u: a0, v: a1, .. }, Support::Edge { u: b0, v: b1, .. }) => {
            let sa = [a0, a1];
            let sb = [b0, b1];
            if !sa.iter().any(|x| sb.contains(x)) {
                return Ok(None);
            }
            let mut support = vec![sa[0], sa[1], sb[0], sb[1]];
            support.sort_unstable();
            support.dedup();
            let ea = operators::tensor_embed(a, &sa, &support, d)?.into_matrix();
            let eb = operators::tensor_embed(b, &sb, &support, d)?.into_matrix();
            Ok(Some((ea, eb)))
        }
        _ => {
            if a.dim() != b.dim() {
                return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
            }
            Ok(Some((a.matrix().clone(), b.matrix().clone())))
        }
    }
}

/// `Q ↦ (Q + Q†)/2`, after checking that every pair of terms acting on a
/// common qudit satisfies `‖[Q_i, Q_j]‖_F, ‖[Q_i†, Q_j]‖_F ≤ premise_tol`.
/// Edge-supported terms are compared on their joint support.
pub fn hermitize_terms(terms: &[Operator], d: usize, premise_tol: f64) -> Result<Vec<Operator>> {
    for i in 0..terms.len() {
        for j in (i + 1)..terms.len() {
            if let Some((a, b)) = embedded_commutators(&terms[i], &terms[j], d)? {
                let plain = linalg::frob_norm(&linalg::commutator(&a, &b));
                let dagger = linalg::frob_norm(&linalg::commutator(&a.adjoint(), &b));
                let residual = plain.max(dagger);
                if !(residual <= premise_tol) {
                    return Err(Error::HermitizePremise { first: i, second: j, residual });
                }
            }
        }
    }
    Ok(terms
        .iter()
        .map(|t| t.clone().with_matrix(linalg::hermitian_part(t.matrix())))
        .collect())
}

/// One vertex replacement of the sweep.
#[derive(Debug, Clone)]
pub struct SweepStep {
    pub vertex: usize,
    /// All edge terms just before this vertex was rounded.
    pub before: Vec<CMat>,
    /// New terms of the vertex's incident edges.
    pub replaced: Vec<(usize, CMat)>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepLog {
    pub steps: Vec<SweepStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub vertices: Vec<RoundingReport>,
    /// `‖Q_i − Q̂_i‖` (operator norm) per edge.
    pub term_distance: Vec<f64>,
    /// `2 max_i ‖Q_i − Q̂_i‖`.
    pub epsilon_report: f64,
    /// Largest vertex displacement `max_{i,α} ‖A − a‖_F`.
    pub max_displacement: f64,
    /// Largest intersecting-pair commutator of the output, Frobenius norm.
    pub max_commutator: f64,
    pub max_commutator_op: f64,
}

/// Rounds every vertex in ascending order and hermitizes after each step.
pub fn sweep_round(instance: &QsatInstance, cfg: &RoundingConfig) -> Result<(QsatInstance, SweepReport)> {
    sweep_round_logged(instance, cfg).map(|(h, r, _)| (h, r))
}

pub fn sweep_round_logged(instance: &QsatInstance, cfg: &RoundingConfig) -> Result<(QsatInstance, SweepReport, SweepLog)> {
    instance.validate()?;
    let d = instance.d;
    let graph = &instance.graph;
    let mut terms = instance.terms.clone();
    let mut log = SweepLog::default();
    let mut reports = Vec::with_capacity(graph.n);
    for v in 0..graph.n {
        let step = round_one(graph, d, &terms, v, cfg).map_err(|e| Error::VertexFailed { vertex: v, source: Box::new(e) })?;
        let (replaced, report) = step;
        log.steps.push(SweepStep { vertex: v, before: terms.clone(), replaced: replaced.clone() });
        for (e, q) in replaced {
            terms[e] = q;
        }
        reports.push(report);
    }
    let projective = terms.iter().all(|q| linalg::frob_norm(&(q * q - q)) <= instance::TERM_TOL);
    let mut rounded = QsatInstance {
        d,
        graph: graph.clone(),
        terms,
        metadata: instance.metadata.clone(),
    };
    rounded.metadata.projective = instance.metadata.projective && projective;
    let profile = instance::noncommutativity_profile(&rounded);
    rounded.metadata.delta_actual = profile.max_op;
    if let Some(worst) = profile.pairs.iter().max_by(|a, b| a.frob_norm.total_cmp(&b.frob_norm)) {
        if !(worst.frob_norm <= cfg.certificate_tol) {
            return Err(Error::CommutationCertificate { first: worst.first, second: worst.second, residual: worst.frob_norm });
        }
    }
    let term_distance: Vec<f64> = instance
        .terms
        .iter()
        .zip(&rounded.terms)
        .map(|(a, b)| linalg::normal_spectral_norm(&(a - b)))
        .collect();
    let report = SweepReport {
        epsilon_report: 2.0 * term_distance.iter().copied().fold(0.0, f64::max),
        term_distance,
        max_displacement: reports.iter().map(|r| r.displacement).fold(0.0, f64::max),
        max_commutator: profile.max_frob,
        max_commutator_op: profile.max_op,
        vertices: reports,
    };
    rounded.validate()?;
    Ok((rounded, report, log))
}

fn round_one(graph: &QuditGraph, d: usize, terms: &[CMat], v: usize, cfg: &RoundingConfig) -> Result<(Vec<(usize, CMat)>, RoundingReport)> {
    let (family, decomps) = family_from_terms(graph, d, terms, v)?;
    let rounded = round_vertex_detailed(&family, cfg)?;
    let mut ops = Vec::with_capacity(family.edges.len());
    for (i, &e) in family.edges.iter().enumerate() {
        let (u, w) = graph.edges[e];
        let side = Side::of_vertex(u, w, v).expect("incident edge");
        let q = &terms[e];
        let new = match &rounded.frames {
            Some(frames) => {
                let lift = match side {
                    Side::Left => frames[i].kronecker(&linalg::identity(d)),
                    Side::Right => linalg::identity(d).kronecker(&frames[i]),
                };
                &lift * q * lift.adjoint()
            }
            None => operators::compose(
                d,
                side,
                rounded.family.groups[i].iter().zip(decomps[i].terms.iter().map(|t| &t.b)),
            ),
        };
        ops.push(Operator::new(new, Support::Edge { id: e, u, v: w })?);
    }
    let herm = hermitize_terms(&ops, d, cfg.premise_tol)?;
    let mut report = rounded.report;
    let mut replaced = Vec::with_capacity(herm.len());
    report.term_displacement = family
        .edges
        .iter()
        .zip(herm)
        .map(|(&e, op)| {
            let q = op.into_matrix();
            let dist = linalg::normal_spectral_norm(&(&q - &terms[e]));
            replaced.push((e, q));
            dist
        })
        .collect();
    Ok((replaced, report))
}

/// One norm-preservation comparison: a replaced term against a term meeting it at
/// the far endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct NormCheck {
    pub vertex: usize,
    pub replaced: usize,
    pub partner: usize,
    pub before: f64,
    pub after: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormPreservationReport {
    pub checks: Vec<NormCheck>,
    pub max_deviation: f64,
    /// Same comparison with the partner taken from the final rounded
    /// instance, which probes whether the property survives later steps.
    pub max_deviation_final_partner: f64,
}

/// For each single-vertex replacement `Q → Q̂` at `v` and every term `P`
/// meeting `Q` at its other endpoint (and not touching `v`), compares
/// `‖[Q̂, P]‖_F` with `‖[Q, P]‖_F`.
pub fn norm_preservation_check(instance: &QsatInstance, rounded: &QsatInstance, log: &SweepLog) -> NormPreservationReport {
    let graph = &instance.graph;
    let d = instance.d;
    let mut checks = Vec::new();
    let mut final_dev = 0.0f64;
    for step in &log.steps {
        let v = step.vertex;
        for (e, q_new) in &step.replaced {
            let w = graph.other_endpoint(*e, v);
            for f in graph.incident_edges(w) {
                let (a, b) = graph.edges[f];
                if f == *e || a == v || b == v {
                    continue;
                }
                let p = &step.before[f];
                let frob = |q: &CMat, p: &CMat| {
                    let (x, y) = embed_pair(graph, d, *e, q, f, p);
                    linalg::frob_norm(&linalg::commutator(&x, &y))
                };
                let before = frob(&step.before[*e], p);
                let after = frob(q_new, p);
                let p_final = &rounded.terms[f];
                final_dev = final_dev.max((frob(q_new, p_final) - frob(&step.before[*e], p_final)).abs());
                checks.push(NormCheck { vertex: v, replaced: *e, partner: f, before, after, deviation: (after - before).abs() });
            }
        }
    }
    NormPreservationReport {
        max_deviation: checks.iter().map(|c| c.deviation).fold(0.0, f64::max),
        checks,
        max_deviation_final_partner: final_dev,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_regular_graph;
    use crate::instance::{generate_commuting_instance, perturb_instance, BlockStyle};
    use crate::operators::paulis::{x, z};

    fn small_cfg(mode: RoundingMode) -> RoundingConfig {
        RoundingConfig { mode, fallback: false, ..Default::default() }
    }

    #[test]
    fn commuting_family_is_fixed_point() {
        let fam = VertexFamily::new(0, vec![0, 1], vec![vec![z()], vec![z() * C64::new(0.5, 0.0)]]).unwrap();
        let (out, rep) = round_vertex(&fam, &RoundingConfig::default()).unwrap();
        assert_eq!(out, fam);
        assert_eq!(rep.displacement, 0.0);
    }

    #[test]
    fn tilted_pair_rounds_in_both_modes() {
        let theta = 0.1f64;
        let tilted = z() * C64::new(theta.cos(), 0.0) + x() * C64::new(theta.sin(), 0.0);
        let fam = VertexFamily::new(0, vec![0, 1], vec![vec![z()], vec![tilted]]).unwrap();
        for mode in [RoundingMode::Structural, RoundingMode::Penalty] {
            let (out, rep) = round_vertex(&fam, &small_cfg(mode)).unwrap();
            assert!(out.max_cross_commutator() <= 1e-10, "{mode:?}");
            assert!(rep.displacement <= 2f64.sqrt() * theta.sin() + 1e-9, "{mode:?}: {}", rep.displacement);
            assert!(rep.norm_deviation <= 1e-10);
        }
    }

    #[test]
    fn hermitize_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        use rand::SeedableRng;
        let h = linalg::random_hermitian(3, &mut rng);
        let ops = [Operator::abstract_op(h.clone()).unwrap()];
        assert_eq!(hermitize_terms(&ops, 3, 1e-9).unwrap()[0].matrix(), &linalg::hermitian_part(&h));
        let skew = linalg::random_hermitian(3, &mut rng) * C64::new(0.0, 1e-11);
        let out = hermitize_terms(&[Operator::abstract_op(&h + &skew).unwrap()], 3, 1e-9).unwrap();
        assert!(linalg::max_abs_diff(out[0].matrix(), &h) < 1e-15);
        let bad = [Operator::abstract_op(x()).unwrap(), Operator::abstract_op(z()).unwrap()];
        assert!(matches!(hermitize_terms(&bad, 2, 1e-9), Err(Error::HermitizePremise { .. })));
    }

    #[test]
    fn sweep_of_commuting_instance_is_identity() {
        let g = generate_regular_graph(6, 3, 1).unwrap();
        let inst = generate_commuting_instance(g, 4, 1, true, BlockStyle::Auto).unwrap();
        let (h, rep) = sweep_round(&inst, &RoundingConfig::default()).unwrap();
        assert!(rep.epsilon_report <= 1e-11, "{}", rep.epsilon_report);
        assert!(inst.max_term_distance(&h) <= 1e-11);
    }

    #[test]
    fn sweep_rounds_perturbed_instance() {
        let g = generate_regular_graph(6, 3, 4).unwrap();
        let inst = generate_commuting_instance(g, 4, 4, true, BlockStyle::Auto).unwrap();
        let pert = perturb_instance(&inst, 1e-2, 5).unwrap();
        let (h, rep, log) = sweep_round_logged(&pert, &RoundingConfig::default()).unwrap();
        assert!(rep.max_commutator <= 1e-9);
        assert!(h.metadata.projective);
        for (e, dist) in rep.term_distance.iter().enumerate() {
            let (u, v) = pert.graph.edges[e];
            let share = |x: usize| {
                let r = &rep.vertices[x];
                r.term_displacement[r.edges.iter().position(|&f| f == e).unwrap()]
            };
            assert!(*dist <= share(u) + share(v) + 1e-9);
        }
        let norm = norm_preservation_check(&pert, &h, &log);
        assert!(!norm.checks.is_empty());
        assert!(norm.max_deviation <= 1e-8, "{}", norm.max_deviation);
        let (again, rep2) = sweep_round(&h, &RoundingConfig::default()).unwrap();
        assert!(h.max_term_distance(&again) <= 1e-11 && rep2.epsilon_report <= 1e-11);
    }
}
