//! Tensor-network ground-state witnesses of commuting instances.
//!
//! A witness picks one block per vertex, a state on each edge's pair of
//! factors and a state on each vertex's residual factor. Its global state is
//! `⊗_v V_{b_v}` applied to the product of those pieces, so any two-qudit
//! expectation only needs the two endpoint isometries and the reduced states
//! of the neighbouring edges.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::algebra::{Block, VertexStructure};
use crate::error::{Error, Result};
use crate::graph::QuditGraph;
use crate::instance::{noncommutativity_profile, QsatInstance};
use crate::linalg::{self, CMat, CVec, C64, ONE, ZERO};
use crate::seed;

/// Per-vertex block labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockAssignment(pub Vec<usize>);

impl BlockAssignment {
    pub fn validate(&self, structures: &[VertexStructure]) -> core::result::Result<(), String> {
        if self.0.len() != structures.len() {
            return Err(format!("assignment has {} labels for {} vertices", self.0.len(), structures.len()));
        }
        for (v, (&b, s)) in self.0.iter().zip(structures).enumerate() {
            if b >= s.blocks.len() {
                return Err(format!("vertex {v}: block {b} out of range ({} blocks)", s.blocks.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchStrategy {
    Exhaustive,
    Annealing { steps: usize, restarts: usize, t_start: f64, t_end: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub strategy: SearchStrategy,
    /// `Π_v #blocks`, saturating.
    pub combinations: u64,
    pub evaluated: u64,
    /// Sum of per-edge minima for the chosen assignment.
    pub energy: f64,
}

/// Block assignment, per-vertex structures, edge states on
/// `(factor at u) ⊗ (factor at v)` for `u < v`, and residual states.
///
/// Leg order at a vertex follows `structure.edges`, residual last.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorNetworkWitness {
    pub n: usize,
    pub d: usize,
    pub structures: Vec<VertexStructure>,
    pub assignment: BlockAssignment,
    pub edge_states: Vec<CVec>,
    pub residual_states: Vec<CVec>,
}

impl TensorNetworkWitness {
    pub fn block(&self, v: usize) -> &Block {
        &self.structures[v].blocks[self.assignment.0[v]]
    }

    fn leg(&self, v: usize, e: usize) -> Option<usize> {
        self.structures[v].edges.iter().position(|&x| x == e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessConfig {
    /// Exhaustive search up to this many assignments.
    pub exhaustive_limit: u64,
    pub anneal_steps: usize,
    pub anneal_restarts: usize,
    pub premise_tol: f64,
    pub seed: u64,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        Self { exhaustive_limit: 1_000_000, anneal_steps: 10_000, anneal_restarts: 8, premise_tol: 1e-9, seed: 0 }
    }
}

/// Checks that structures, assignment and states fit the instance graph.
fn check_shapes(w: &TensorNetworkWitness, graph: &QuditGraph, d: usize) -> core::result::Result<(), String> {
    if w.n != graph.n || w.d != d {
        return Err(format!("witness is for n = {}, d = {}; instance has n = {}, d = {d}", w.n, w.d, graph.n));
    }
    if w.structures.len() != graph.n {
        return Err(format!("{} structures for {} vertices", w.structures.len(), graph.n));
    }
    for (v, s) in w.structures.iter().enumerate() {
        check_structure(s, v, graph, d)?;
    }
    w.assignment.validate(&w.structures)?;
    if w.edge_states.len() != graph.edge_count() {
        return Err(format!("{} edge states for {} edges", w.edge_states.len(), graph.edge_count()));
    }
    for (e, &(u, v)) in graph.edges.iter().enumerate() {
        let fu = w.block(u).factor_dims[w.leg(u, e).expect("checked")];
        let fv = w.block(v).factor_dims[w.leg(v, e).expect("checked")];
        if w.edge_states[e].len() != fu * fv {
            return Err(format!("edge {e}: state has length {}, factors need {}", w.edge_states[e].len(), fu * fv));
        }
    }
    if w.residual_states.len() != graph.n {
        return Err(format!("{} residual states for {} vertices", w.residual_states.len(), graph.n));
    }
    for v in 0..graph.n {
        if w.residual_states[v].len() != w.block(v).residual_dim {
            return Err(format!("vertex {v}: residual state has length {}, block needs {}", w.residual_states[v].len(), w.block(v).residual_dim));
        }
    }
    Ok(())
}

fn check_structure(s: &VertexStructure, v: usize, graph: &QuditGraph, d: usize) -> core::result::Result<(), String> {
    if s.vertex != v {
        return Err(format!("structure {v} is labelled vertex {}", s.vertex));
    }
    let mut mine = s.edges.clone();
    mine.sort_unstable();
    if mine != graph.incident_edges(v) {
        return Err(format!("vertex {v}: structure edges {:?} do not match the graph", s.edges));
    }
    if s.blocks.is_empty() {
        return Err(format!("vertex {v} has no blocks"));
    }
    for (b, block) in s.blocks.iter().enumerate() {
        if block.factor_dims.len() != s.edges.len() {
            return Err(format!("vertex {v} block {b}: {} factor dims for {} edges", block.factor_dims.len(), s.edges.len()));
        }
        let legs = block.leg_dims().iter().try_fold(1usize, |acc, &x| acc.checked_mul(x));
        if block.isometry.nrows() != d || legs != Some(block.isometry.ncols()) || block.dim() == 0 {
            return Err(format!("vertex {v} block {b}: isometry shape does not match its legs"));
        }
    }
    Ok(())
}

/// Edge term compressed onto the block pair and reduced to the pair of
/// factors it acts on: `(V_u ⊗ V_v)† Q (V_u ⊗ V_v)` traced over the other
/// legs and divided by their dimension.
fn compressed_term(q: &CMat, bu: &Block, bv: &Block, lu: usize, lv: usize) -> CMat {
    let iso = bu.isometry.kronecker(&bv.isometry);
    let local = iso.adjoint() * q * &iso;
    let mut dims = bu.leg_dims();
    dims.extend(bv.leg_dims());
    let keep = [lu, bu.leg_dims().len() + lv];
    let others: usize = bu.dim() * bv.dim() / (dims[keep[0]] * dims[keep[1]]);
    linalg::partial_trace(&local, &dims, &keep) / C64::new(others as f64, 0.0)
}

struct EdgeTable {
    /// `[b_u][b_v] → (λ_min, ground vector)`.
    entries: Vec<Vec<(f64, CVec)>>,
}

fn minimum_eigenpair(x: &CMat) -> (f64, CVec) {
    let (values, vectors) = linalg::eigh(&linalg::hermitian_part(x));
    (values[0], vectors.column(0).into_owned())
}

/// Witness for a commuting instance: per-edge minimum over the factor pair
/// of each block pair, then the assignment minimizing their sum.
pub fn build_witness(hhat: &QsatInstance, structures: &[VertexStructure], cfg: &WitnessConfig) -> Result<(TensorNetworkWitness, SearchReport)> {
    let profile = noncommutativity_profile(hhat);
    if let Some(worst) = profile.pairs.iter().max_by(|a, b| a.frob_norm.total_cmp(&b.frob_norm)) {
        if !(worst.frob_norm <= cfg.premise_tol) {
            return Err(Error::CommutationPremise { first: worst.first, second: worst.second, residual: worst.frob_norm });
        }
    }
    let graph = &hhat.graph;
    if structures.len() != graph.n {
        return Err(Error::StructureMismatch(format!("{} structures for {} vertices", structures.len(), graph.n)));
    }
    for (v, s) in structures.iter().enumerate() {
        if s.blocks.is_empty() {
            return Err(Error::EmptyBlock { vertex: v });
        }
        check_structure(s, v, graph, hhat.d).map_err(Error::StructureMismatch)?;
    }
    let leg = |v: usize, e: usize| structures[v].edges.iter().position(|&x| x == e).expect("checked");
    let tables: Vec<EdgeTable> = graph
        .edges
        .iter()
        .enumerate()
        .map(|(e, &(u, v))| {
            let entries = structures[u]
                .blocks
                .iter()
                .map(|bu| {
                    structures[v]
                        .blocks
                        .iter()
                        .map(|bv| minimum_eigenpair(&compressed_term(&hhat.terms[e], bu, bv, leg(u, e), leg(v, e))))
                        .collect()
                })
                .collect();
            EdgeTable { entries }
        })
        .collect();
    let counts: Vec<usize> = structures.iter().map(|s| s.blocks.len()).collect();
    let energy_of = |a: &[usize]| -> f64 {
        graph.edges.iter().zip(&tables).map(|(&(u, v), t)| t.entries[a[u]][a[v]].0).sum()
    };
    let combinations = counts.iter().fold(1u64, |acc, &c| acc.saturating_mul(c as u64));
    let (assignment, report) = if combinations <= cfg.exhaustive_limit {
        let mut current = vec![0usize; graph.n];
        let mut best = current.clone();
        let mut best_energy = energy_of(&current);
        let mut evaluated = 1u64;
        'odometer: loop {
            let mut k = graph.n;
            loop {
                if k == 0 {
                    break 'odometer;
                }
                k -= 1;
                current[k] += 1;
                if current[k] < counts[k] {
                    break;
                }
                current[k] = 0;
            }
            evaluated += 1;
            let energy = energy_of(&current);
            if energy < best_energy {
                best_energy = energy;
                best.clone_from(&current);
            }
        }
        (best, SearchReport { strategy: SearchStrategy::Exhaustive, combinations, evaluated, energy: best_energy })
    } else {
        anneal(graph, &tables, &counts, cfg, combinations)
    };
    let edge_states = graph.edges.iter().zip(&tables).map(|(&(u, v), t)| t.entries[assignment[u]][assignment[v]].1.clone()).collect();
    let residual_states = (0..graph.n)
        .map(|v| {
            let r = structures[v].blocks[assignment[v]].residual_dim;
            let mut s = CVec::zeros(r);
            s[0] = ONE;
            s
        })
        .collect();
    let witness = TensorNetworkWitness {
        n: graph.n,
        d: hhat.d,
        structures: structures.to_vec(),
        assignment: BlockAssignment(assignment),
        edge_states,
        residual_states,
    };
    Ok((witness, report))
}

const ANNEAL_T_START: f64 = 1.0;
const ANNEAL_T_END: f64 = 1e-3;

/// Single-vertex relabelling moves under geometric cooling; keeps the best
/// assignment visited across all restarts.
fn anneal(graph: &QuditGraph, tables: &[EdgeTable], counts: &[usize], cfg: &WitnessConfig, combinations: u64) -> (Vec<usize>, SearchReport) {
    let incident: Vec<Vec<usize>> = (0..graph.n).map(|v| graph.incident_edges(v)).collect();
    let local = |a: &[usize], v: usize| -> f64 {
        incident[v].iter().map(|&e| {
            let (x, y) = graph.edges[e];
            tables[e].entries[a[x]][a[y]].0
        }).sum()
    };
    let total = |a: &[usize]| -> f64 {
        graph.edges.iter().zip(tables).map(|(&(u, v), t)| t.entries[a[u]][a[v]].0).sum()
    };
    let steps = cfg.anneal_steps.max(1);
    let cooling = libm::pow(ANNEAL_T_END / ANNEAL_T_START, 1.0 / steps as f64);
    let mut best = vec![0usize; graph.n];
    let mut best_energy = total(&best);
    let mut evaluated = 1u64;
    for restart in 0..cfg.anneal_restarts.max(1) {
        let mut rng = seed::stream(cfg.seed, "anneal", restart as u64);
        let mut current: Vec<usize> = counts.iter().map(|&c| rng.gen_range(0..c)).collect();
        let mut energy = total(&current);
        let mut t = ANNEAL_T_START;
        for _ in 0..steps {
            let v = rng.gen_range(0..graph.n);
            if counts[v] > 1 {
                let old = current[v];
                let mut new = rng.gen_range(0..counts[v] - 1);
                if new >= old {
                    new += 1;
                }
                let before = local(&current, v);
                current[v] = new;
                let delta = local(&current, v) - before;
                evaluated += 1;
                if delta <= 0.0 || rng.gen::<f64>() < libm::exp(-delta / t) {
                    energy += delta;
                    if energy < best_energy {
                        best_energy = total(&current);
                        energy = best_energy;
                        best.clone_from(&current);
                    }
                } else {
                    current[v] = old;
                }
            }
            t *= cooling;
        }
    }
    let strategy = SearchStrategy::Annealing { steps, restarts: cfg.anneal_restarts.max(1), t_start: ANNEAL_T_START, t_end: ANNEAL_T_END, seed: cfg.seed };
    (best, SearchReport { strategy, combinations, evaluated, energy: best_energy })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub per_edge: Vec<f64>,
    pub total: f64,
    pub m: usize,
    pub per_m: f64,
}

impl EnergyReport {
    /// `total < r M`.
    pub fn below(&self, r: f64) -> bool {
        self.total < (r - ACCEPT_MARGIN) * self.m as f64
    }
}

/// Reduced state of edge `e`'s state on the factor at `v`.
fn edge_marginal(w: &TensorNetworkWitness, graph: &QuditGraph, e: usize, v: usize) -> CMat {
    let (a, b) = graph.edges[e];
    let fa = w.block(a).factor_dims[w.leg(a, e).expect("checked")];
    let fb = w.block(b).factor_dims[w.leg(b, e).expect("checked")];
    let psi = &w.edge_states[e];
    let rho = psi * psi.adjoint();
    let keep = if v == a { 0 } else { 1 };
    linalg::partial_trace(&rho, &[fa, fb], &[keep])
}

fn validate_norms(w: &TensorNetworkWitness, tol: f64) -> Result<()> {
    for (e, s) in w.edge_states.iter().enumerate() {
        let deviation = (s.norm() - 1.0).abs();
        if !(deviation <= tol) {
            return Err(Error::EdgeStateNorm { edge: e, deviation });
        }
    }
    for s in &w.residual_states {
        let deviation = (s.norm() - 1.0).abs();
        if !(deviation <= tol) {
            return Err(Error::NormDeviation { deviation });
        }
    }
    Ok(())
}

/// `⟨Q_e⟩` from the endpoint isometries, the edge state and the marginals of
/// the neighbouring edges; cost is independent of `n`.
fn edge_expectation(w: &TensorNetworkWitness, instance: &QsatInstance, e: usize) -> f64 {
    let graph = &instance.graph;
    let (u, v) = graph.edges[e];
    let (bu, bv) = (w.block(u), w.block(v));
    let (lu, lv) = (w.leg(u, e).expect("checked"), w.leg(v, e).expect("checked"));
    // Pieces in the order: edge state, other legs of u, other legs of v.
    let psi = &w.edge_states[e];
    let mut pieces = vec![psi * psi.adjoint()];
    let mut piece_dims = vec![bu.factor_dims[lu], bv.factor_dims[lv]];
    let mut source = Vec::new();
    for (x, block, skip) in [(u, bu, lu), (v, bv, lv)] {
        let mut legs = Vec::new();
        for (k, &other) in w.structures[x].edges.iter().enumerate() {
            if k != skip {
                pieces.push(edge_marginal(w, graph, other, x));
                piece_dims.push(block.factor_dims[k]);
                legs.push(k);
            }
        }
        let r = &w.residual_states[x];
        pieces.push(r * r.adjoint());
        piece_dims.push(block.residual_dim);
        legs.push(block.factor_dims.len());
        source.push(legs);
    }
    // Map the target legs (u legs then v legs) to positions among the pieces.
    let nu = bu.leg_dims().len();
    let nv = bv.leg_dims().len();
    let mut perm = vec![0usize; nu + nv];
    perm[lu] = 0;
    perm[nu + lv] = 1;
    for (pos, &k) in source[0].iter().enumerate() {
        perm[k] = 2 + pos;
    }
    for (pos, &k) in source[1].iter().enumerate() {
        perm[nu + k] = 2 + source[0].len() + pos;
    }
    let rho = linalg::permute_legs(&linalg::kron_all(&pieces), &piece_dims, &perm);
    let iso = bu.isometry.kronecker(&bv.isometry);
    let lifted = iso.adjoint() * &instance.terms[e] * &iso;
    (lifted * rho).trace().re
}

fn energy_with_tolerance(w: &TensorNetworkWitness, instance: &QsatInstance, tol: f64) -> Result<EnergyReport> {
    check_shapes(w, &instance.graph, instance.d).map_err(Error::StructureMismatch)?;
    validate_norms(w, tol)?;
    let per_edge: Vec<f64> = (0..instance.m()).map(|e| edge_expectation(w, instance, e)).collect();
    let total = per_edge.iter().sum();
    let m = instance.m();
    Ok(EnergyReport { per_edge, total, m, per_m: if m == 0 { 0.0 } else { total / m as f64 } })
}

/// Witness energy against any instance on the same graph, by local
/// contraction.
pub fn evaluate_energy(witness: &TensorNetworkWitness, instance: &QsatInstance) -> Result<EnergyReport> {
    energy_with_tolerance(witness, instance, 1e-10)
}

/// Tolerance of the verifier's invariant checks.
pub const VERIFY_TOL: f64 = 1e-8;

/// Per-term margin below `r` that the energy must clear, so that rounding
/// error cannot turn a boundary case into an accept.
pub const ACCEPT_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RejectReason {
    #[error("threshold r = {0} is outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("malformed witness: {0}")]
    Malformed(String),
    #[error("vertex {vertex}: block isometry deviates from orthonormal by {residual:e}")]
    Isometry { vertex: usize, residual: f64 },
    #[error("{what} is not normalized (deviation {deviation:e})")]
    Normalization { what: String, deviation: f64 },
    #[error("energy {energy} is not below r M = {threshold}")]
    Energy { energy: f64, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Accept { report: EnergyReport, threshold: f64 },
    Reject { reason: RejectReason, report: Option<EnergyReport> },
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        matches!(self, Verdict::Accept { .. })
    }
}

/// Checks every witness invariant, then accepts iff the energy against
/// `instance` is below `(r - ACCEPT_MARGIN) M`. States within tolerance of
/// unit norm are renormalized before the energy is computed. Never panics on
/// malformed input.
pub fn np_verify(witness: &TensorNetworkWitness, instance: &QsatInstance, r: f64) -> Verdict {
    let reject = |reason| Verdict::Reject { reason, report: None };
    if !(r > 0.0 && r < 1.0) {
        return reject(RejectReason::InvalidThreshold(r));
    }
    if let Err(e) = instance.validate() {
        return reject(RejectReason::Malformed(format!("instance: {e}")));
    }
    if let Err(msg) = check_shapes(witness, &instance.graph, instance.d) {
        return reject(RejectReason::Malformed(msg));
    }
    for v in 0..witness.n {
        let b = witness.block(v);
        let residual = linalg::frob_norm(&(b.isometry.adjoint() * &b.isometry - linalg::identity(b.dim())));
        if !(residual <= VERIFY_TOL) {
            return reject(RejectReason::Isometry { vertex: v, residual });
        }
    }
    for (e, s) in witness.edge_states.iter().enumerate() {
        let deviation = (s.norm() - 1.0).abs();
        if !(deviation <= VERIFY_TOL) {
            return reject(RejectReason::Normalization { what: format!("edge {e} state"), deviation });
        }
    }
    for (v, s) in witness.residual_states.iter().enumerate() {
        let deviation = (s.norm() - 1.0).abs();
        if !(deviation <= VERIFY_TOL) {
            return reject(RejectReason::Normalization { what: format!("vertex {v} residual state"), deviation });
        }
    }
    let mut normalized = witness.clone();
    for s in normalized.edge_states.iter_mut().chain(normalized.residual_states.iter_mut()) {
        *s /= C64::new(s.norm(), 0.0);
    }
    let report = match energy_with_tolerance(&normalized, instance, VERIFY_TOL) {
        Ok(r) => r,
        Err(e) => return reject(RejectReason::Malformed(format!("{e}"))),
    };
    let threshold = r * report.m as f64;
    if !report.total.is_finite() {
        return reject(RejectReason::Malformed("energy is not finite".into()));
    }
    if report.total < threshold - ACCEPT_MARGIN * report.m as f64 {
        Verdict::Accept { report, threshold }
    } else {
        Verdict::Reject { reason: RejectReason::Energy { energy: report.total, threshold }, report: Some(report) }
    }
}

/// Haar-random witness over the given structures.
pub fn random_witness<R: Rng + ?Sized>(graph: &QuditGraph, d: usize, structures: &[VertexStructure], rng: &mut R) -> TensorNetworkWitness {
    let assignment: Vec<usize> = structures.iter().map(|s| rng.gen_range(0..s.blocks.len())).collect();
    let block = |v: usize| &structures[v].blocks[assignment[v]];
    let leg = |v: usize, e: usize| structures[v].edges.iter().position(|&x| x == e).expect("incident");
    let edge_states = graph
        .edges
        .iter()
        .enumerate()
        .map(|(e, &(u, v))| linalg::random_unit_vector(block(u).factor_dims[leg(u, e)] * block(v).factor_dims[leg(v, e)], rng))
        .collect();
    let residual_states = (0..graph.n).map(|v| linalg::random_unit_vector(block(v).residual_dim, rng)).collect();
    TensorNetworkWitness { n: graph.n, d, structures: structures.to_vec(), assignment: BlockAssignment(assignment), edge_states, residual_states }
}

/// Random valid structure: a Haar-random frame split into blocks with random
/// factor dimensions.
pub fn random_structure<R: Rng + ?Sized>(vertex: usize, edges: &[usize], d: usize, rng: &mut R) -> VertexStructure {
    let frame = linalg::random_unitary(d, rng);
    let mut blocks = Vec::new();
    let mut start = 0;
    while start < d {
        let dim = rng.gen_range(1..=d - start);
        let mut remaining = dim;
        let mut factor_dims = Vec::with_capacity(edges.len());
        for _ in edges {
            let divisors: Vec<usize> = (1..=remaining).filter(|k| remaining % k == 0).collect();
            let f = divisors[rng.gen_range(0..divisors.len())];
            factor_dims.push(f);
            remaining /= f;
        }
        blocks.push(Block { isometry: frame.columns(start, dim).into_owned(), factor_dims, residual_dim: remaining });
        start += dim;
    }
    VertexStructure { vertex, edges: edges.to_vec(), blocks }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    /// Residual preparation followed by the block isometry, completed to a
    /// unitary.
    BlockIsometry,
    StatePreparation { edge: usize },
}

/// A unitary on one qudit or on an ordered pair `(u, v)`, `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub qudits: Vec<usize>,
    pub matrix: CMat,
}

/// Layers of disjoint gates applied in order to `|0…0⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub n: usize,
    pub d: usize,
    pub layers: Vec<Vec<Gate>>,
}

impl Circuit {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Unitary whose leading columns are the given orthonormal columns.
fn complete_unitary(cols: &CMat) -> CMat {
    let n = cols.nrows();
    let k = cols.ncols();
    let projector = linalg::identity(n) - cols * cols.adjoint();
    let (_, vectors) = linalg::eigh(&projector);
    let mut u = CMat::zeros(n, n);
    u.columns_mut(0, k).copy_from(cols);
    // Eigenvalue-one eigenvectors come last.
    u.columns_mut(k, n - k).copy_from(&vectors.columns(k, n - k));
    u
}

/// `L` on the first `m` basis states, identity on the rest.
fn embed_unitary(l: &CMat, d: usize) -> CMat {
    let m = l.nrows();
    let mut out = linalg::identity(d);
    out.view_mut((0, 0), (m, m)).copy_from(l);
    out
}

/// Two-qudit version of [`embed_unitary`] for a logical space of `mu × mv`.
fn embed_pair_unitary(l: &CMat, d: usize, mu: usize, mv: usize) -> CMat {
    let mut out = linalg::identity(d * d);
    let idx = |a: usize, b: usize| a * d + b;
    for a in 0..mu {
        for b in 0..mv {
            out[(idx(a, b), idx(a, b))] = ZERO;
        }
    }
    for a in 0..mu {
        for b in 0..mv {
            for c in 0..mu {
                for e in 0..mv {
                    out[(idx(a, b), idx(c, e))] = l[(a * mv + b, c * mv + e)];
                }
            }
        }
    }
    out
}

/// `G` on legs `(lu, lv)` of the `u`-then-`v` leg layout, identity elsewhere.
fn lift_to_legs(g: &CMat, dims: &[usize], lu: usize, lv: usize) -> CMat {
    let rest: Vec<usize> = (0..dims.len()).filter(|&k| k != lu && k != lv).collect();
    let rest_dim: usize = rest.iter().map(|&k| dims[k]).product();
    let padded = g.kronecker(&linalg::identity(rest_dim));
    let mut order = vec![lu, lv];
    order.extend(&rest);
    let padded_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let perm: Vec<usize> = (0..dims.len()).map(|k| order.iter().position(|&o| o == k).expect("leg")).collect();
    linalg::permute_legs(&padded, &padded_dims, &perm)
}

/// Proper edge coloring with as few colors as a bounded backtracking search
/// finds, starting from the maximum degree.
pub fn edge_coloring(graph: &QuditGraph) -> Vec<usize> {
    let m = graph.edge_count();
    let max_degree = (0..graph.n).map(|v| graph.incident_edges(v).len()).max().unwrap_or(0);
    let conflicts: Vec<Vec<usize>> = (0..m)
        .map(|e| {
            let (a, b) = graph.edges[e];
            (0..m).filter(|&f| f != e && { let (c, d) = graph.edges[f]; a == c || a == d || b == c || b == d }).collect()
        })
        .collect();
    for colors in max_degree.max(1)..=max_degree + 1 {
        let mut assignment = vec![usize::MAX; m];
        let mut budget = 200_000usize;
        if color_backtrack(0, colors, &conflicts, &mut assignment, &mut budget) {
            return assignment;
        }
    }
    let mut greedy = vec![usize::MAX; m];
    for e in 0..m {
        let mut c = 0;
        while conflicts[e].iter().any(|&f| greedy[f] == c) {
            c += 1;
        }
        greedy[e] = c;
    }
    greedy
}

fn color_backtrack(e: usize, colors: usize, conflicts: &[Vec<usize>], assignment: &mut [usize], budget: &mut usize) -> bool {
    if e == assignment.len() {
        return true;
    }
    for c in 0..colors {
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        if conflicts[e].iter().all(|&f| assignment[f] != c) {
            assignment[e] = c;
            if color_backtrack(e + 1, colors, conflicts, assignment, budget) {
                return true;
            }
            assignment[e] = usize::MAX;
        }
    }
    false
}

/// Layered circuit preparing the witness state: one layer of per-vertex
/// block isometries, then one layer of edge state preparations per color.
pub fn witness_to_circuit(witness: &TensorNetworkWitness, graph: &QuditGraph) -> Circuit {
    let d = witness.d;
    let frames: Vec<CMat> = (0..witness.n).map(|v| complete_unitary(&witness.block(v).isometry)).collect();
    let mut iso_layer = Vec::with_capacity(witness.n);
    for (v, frame) in frames.iter().enumerate() {
        let block = witness.block(v);
        let residual = complete_unitary(&CMat::from_column_slice(block.residual_dim, 1, witness.residual_states[v].as_slice()));
        let factors: usize = block.factor_dims.iter().product();
        let prep = embed_unitary(&linalg::identity(factors).kronecker(&residual), d);
        iso_layer.push(Gate { kind: GateKind::BlockIsometry, qudits: vec![v], matrix: frame * prep });
    }
    let coloring = edge_coloring(graph);
    let colors = coloring.iter().map(|&c| c + 1).max().unwrap_or(0);
    let mut layers = vec![iso_layer];
    for color in 0..colors {
        let mut layer = Vec::new();
        for (e, &(u, v)) in graph.edges.iter().enumerate() {
            if coloring[e] != color {
                continue;
            }
            let (bu, bv) = (witness.block(u), witness.block(v));
            let psi = &witness.edge_states[e];
            let g = complete_unitary(&CMat::from_column_slice(psi.len(), 1, psi.as_slice()));
            let mut dims = bu.leg_dims();
            dims.extend(bv.leg_dims());
            let logical = lift_to_legs(&g, &dims, witness.leg(u, e).expect("incident"), bu.leg_dims().len() + witness.leg(v, e).expect("incident"));
            let embedded = embed_pair_unitary(&logical, d, bu.dim(), bv.dim());
            let frame = frames[u].kronecker(&frames[v]);
            layer.push(Gate { kind: GateKind::StatePreparation { edge: e }, qudits: vec![u, v], matrix: &frame * embedded * frame.adjoint() });
        }
        layers.push(layer);
    }
    Circuit { n: witness.n, d, layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{decompose_instance, DecomposeConfig};
    use crate::graph::generate_regular_graph;
    use crate::instance::{classical_instance, generate_commuting_instance, BlockStyle, InstanceMetadata};
    use crate::oracle::{self, DEFAULT_CAP};
    use rand::SeedableRng;

    fn odd_cycle() -> QsatInstance {
        let g = QuditGraph::new(5, 2, vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]).unwrap();
        classical_instance(g, 2, &vec![vec![(0, 0), (1, 1)]; 5], 0).unwrap()
    }

    #[test]
    fn odd_cycle_witness_has_energy_one() {
        let inst = odd_cycle();
        let s = decompose_instance(&inst, &DecomposeConfig::default()).unwrap();
        let (w, report) = build_witness(&inst, &s, &WitnessConfig::default()).unwrap();
        assert_eq!(report.strategy, SearchStrategy::Exhaustive);
        assert_eq!(report.evaluated, 32);
        assert!((report.energy - 1.0).abs() < 1e-12);
        assert!((evaluate_energy(&w, &inst).unwrap().total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_edge_energy_is_minimum_eigenvalue() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let g = QuditGraph::new(2, 1, vec![(0, 1)]).unwrap();
        let q = linalg::random_hermitian(9, &mut rng);
        let inst = QsatInstance::new(3, g, vec![q.clone()], InstanceMetadata { seed: 0, delta_declared: 0.0, delta_actual: 0.0, projective: false }).unwrap();
        let s = decompose_instance(&inst, &DecomposeConfig::default()).unwrap();
        let (w, _) = build_witness(&inst, &s, &WitnessConfig::default()).unwrap();
        let lowest = linalg::eigh(&q).0[0];
        assert!((evaluate_energy(&w, &inst).unwrap().total - lowest).abs() < 1e-10);
        let c = witness_to_circuit(&w, &inst.graph);
        assert_eq!(c.depth(), 2);
    }

    #[test]
    fn satisfiable_witness_is_frustration_free_and_verified() {
        let g = generate_regular_graph(8, 3, 11).unwrap();
        let inst = generate_commuting_instance(g, 4, 11, true, BlockStyle::Auto).unwrap();
        let s = decompose_instance(&inst, &DecomposeConfig::default()).unwrap();
        let (w, _) = build_witness(&inst, &s, &WitnessConfig::default()).unwrap();
        let report = evaluate_energy(&w, &inst).unwrap();
        assert!(report.total.abs() <= 1e-8, "{}", report.total);
        assert!(np_verify(&w, &inst, 0.5).accepted());
        let mut bad = w.clone();
        bad.edge_states[3] *= C64::new(2.0, 0.0);
        assert!(matches!(np_verify(&bad, &inst, 0.5), Verdict::Reject { reason: RejectReason::Normalization { .. }, .. }));
        let c = witness_to_circuit(&w, &inst.graph);
        assert_eq!(c.depth(), 4);
    }

    #[test]
    fn local_energy_matches_global_expansion() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let g = generate_regular_graph(6, 3, 2).unwrap();
        let inst = generate_commuting_instance(g.clone(), 3, 2, false, BlockStyle::Auto).unwrap();
        let noisy = crate::instance::perturb_instance(&inst, 0.3, 4).unwrap();
        for trial in 0..6 {
            let structures: Vec<VertexStructure> = if trial % 2 == 0 {
                decompose_instance(&inst, &DecomposeConfig::default()).unwrap()
            } else {
                (0..g.n).map(|v| random_structure(v, &g.incident_edges(v), 3, &mut rng)).collect()
            };
            let w = random_witness(&g, 3, &structures, &mut rng);
            let local = evaluate_energy(&w, &noisy).unwrap().total;
            let state = oracle::expand_witness(&w, &g, DEFAULT_CAP).unwrap();
            let global = oracle::state_energy(&state, &noisy, DEFAULT_CAP).unwrap();
            assert!((local - global).abs() < 1e-9, "{local} vs {global}");
            let circuit = oracle::apply_circuit(&witness_to_circuit(&w, &g), DEFAULT_CAP).unwrap();
            assert!(circuit.fidelity(&state) > 1.0 - 1e-9);
        }
    }

    #[test]
    fn malformed_witnesses_are_rejected() {
        let inst = odd_cycle();
        let s = decompose_instance(&inst, &DecomposeConfig::default()).unwrap();
        let (w, _) = build_witness(&inst, &s, &WitnessConfig::default()).unwrap();
        assert!(matches!(np_verify(&w, &inst, 1.5), Verdict::Reject { reason: RejectReason::InvalidThreshold(_), .. }));
        let mut bad = w.clone();
        bad.assignment.0[2] = 7;
        assert!(matches!(np_verify(&bad, &inst, 0.5), Verdict::Reject { reason: RejectReason::Malformed(_), .. }));
        let mut bad = w.clone();
        bad.edge_states.pop();
        assert!(matches!(np_verify(&bad, &inst, 0.5), Verdict::Reject { reason: RejectReason::Malformed(_), .. }));
        let mut bad = w.clone();
        bad.structures[1].blocks[w.assignment.0[1]].isometry *= C64::new(1.1, 0.0);
        assert!(matches!(np_verify(&bad, &inst, 0.5), Verdict::Reject { reason: RejectReason::Isometry { vertex: 1, .. }, .. }));
        assert!(matches!(np_verify(&w, &inst, 0.2), Verdict::Reject { reason: RejectReason::Energy { .. }, .. }));
        assert!(np_verify(&w, &inst, 0.21).accepted());
    }

    #[test]
    fn annealing_finds_the_odd_cycle_optimum() {
        let inst = odd_cycle();
        let s = decompose_instance(&inst, &DecomposeConfig::default()).unwrap();
        let cfg = WitnessConfig { exhaustive_limit: 1, ..Default::default() };
        let (_, report) = build_witness(&inst, &s, &cfg).unwrap();
        assert!(matches!(report.strategy, SearchStrategy::Annealing { .. }));
        assert!((report.energy - 1.0).abs() < 1e-12);
    }
}
