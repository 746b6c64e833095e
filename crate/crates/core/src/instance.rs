//! QSAT instances: one two-qudit projection per edge of a regular graph.
//!
//! Edge terms are `d² × d²` matrices on `C^d ⊗ C^d` with the lower vertex id
//! as the first tensor factor.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::{IntersectingPair, QuditGraph};
use crate::linalg::{self, CMat, C64};
use crate::operators::{self, Operator, Support};
use crate::seed;

/// Tolerance for Hermiticity and idempotency of stored terms.
pub const TERM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMetadata {
    pub seed: u64,
    pub delta_declared: f64,
    pub delta_actual: f64,
    pub projective: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QsatInstance {
    pub d: usize,
    pub graph: QuditGraph,
    pub terms: Vec<CMat>,
    pub metadata: InstanceMetadata,
}

impl QsatInstance {
    /// Assembles an instance and checks every invariant.
    pub fn new(d: usize, graph: QuditGraph, terms: Vec<CMat>, metadata: InstanceMetadata) -> Result<Self> {
        let inst = Self { d, graph, terms, metadata };
        inst.validate()?;
        Ok(inst)
    }

    /// Number of terms `M`.
    pub fn m(&self) -> usize {
        self.terms.len()
    }

    pub fn n(&self) -> usize {
        self.graph.n
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidInstance("d must be positive".into()));
        }
        self.graph.validate()?;
        if self.terms.len() != self.graph.edge_count() {
            return Err(Error::InvalidInstance(format!(
                "{} terms for {} edges",
                self.terms.len(),
                self.graph.edge_count()
            )));
        }
        let dd = self.d * self.d;
        for (e, q) in self.terms.iter().enumerate() {
            if q.nrows() != dd || q.ncols() != dd {
                return Err(Error::InvalidInstance(format!(
                    "edge {e}: term is {}x{}, expected {dd}x{dd}",
                    q.nrows(),
                    q.ncols()
                )));
            }
            let herm = linalg::hermiticity_residual(q);
            if !(herm <= TERM_TOL) {
                return Err(Error::InvalidInstance(format!(
                    "edge {e}: term is not Hermitian (residual {herm:e})"
                )));
            }
            if self.metadata.projective {
                let idem = linalg::frob_norm(&(q * q - q));
                if !(idem <= TERM_TOL) {
                    return Err(Error::InvalidInstance(format!(
                        "edge {e}: term is not a projection (residual {idem:e})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn term_operator(&self, e: usize) -> Operator {
        let (u, v) = self.graph.edges[e];
        Operator::new(self.terms[e].clone(), Support::Edge { id: e, u, v }).expect("square term")
    }

    /// The two terms of an intersecting pair embedded on their joint
    /// three-qudit support (ascending vertex order).
    pub fn embedded_pair(&self, pair: &IntersectingPair) -> (CMat, CMat) {
        let (a, b) = self.graph.edges[pair.first];
        let (c, d) = self.graph.edges[pair.second];
        let mut support = vec![a, b, c, d];
        support.sort_unstable();
        support.dedup();
        let embed = |e: usize, (u, v): (usize, usize)| {
            operators::tensor_embed(&self.term_operator(e), &[u, v], &support, self.d)
                .expect("edge support is inside the union")
                .into_matrix()
        };
        (embed(pair.first, (a, b)), embed(pair.second, (c, d)))
    }

    /// Largest distance `‖Q_i − Q'_i‖` (operator norm) to another instance on
    /// the same graph.
    pub fn max_term_distance(&self, other: &QsatInstance) -> f64 {
        self.terms
            .iter()
            .zip(&other.terms)
            .map(|(a, b)| linalg::normal_spectral_norm(&(a - b)))
            .fold(0.0, f64::max)
    }
}

/// Classical instance: each edge term is the diagonal projection onto the
/// listed forbidden assignments `(x_u, x_v)`.
pub fn classical_instance(graph: QuditGraph, d: usize, forbidden: &[Vec<(usize, usize)>], seed: u64) -> Result<QsatInstance> {
    if forbidden.len() != graph.edge_count() {
        return Err(Error::InvalidInstance(format!(
            "{} forbidden lists for {} edges",
            forbidden.len(),
            graph.edge_count()
        )));
    }
    let terms = forbidden
        .iter()
        .map(|list| {
            let mut q = CMat::zeros(d * d, d * d);
            for &(a, b) in list {
                q[(a * d + b, a * d + b)] = linalg::ONE;
            }
            q
        })
        .collect();
    QsatInstance::new(
        d,
        graph,
        terms,
        InstanceMetadata { seed, delta_declared: 0.0, delta_actual: 0.0, projective: true },
    )
}

/// How vertex spaces are split when generating commuting instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStyle {
    /// `Factored` when `d ≥ 4`, otherwise `Classical`.
    Auto,
    /// One-dimensional blocks: diagonal instances.
    Classical,
    /// Blocks of power-of-two dimension whose qubit factors are handed to
    /// distinct incident edges.
    Factored,
}

/// Smallest `d` for which factored blocks are generated.
pub const FACTORED_MIN_D: usize = 4;

#[derive(Debug, Clone)]
struct BlockTemplate {
    /// Factor dimension per incident edge (ascending edge id).
    factors: Vec<usize>,
    residual: usize,
}

impl BlockTemplate {
    fn dim(&self) -> usize {
        self.factors.iter().product::<usize>() * self.residual
    }

    fn leg_dims(&self) -> Vec<usize> {
        let mut legs = self.factors.clone();
        legs.push(self.residual);
        legs
    }
}

fn vertex_template<R: Rng + ?Sized>(d: usize, degree: usize, factored: bool, rng: &mut R) -> Vec<BlockTemplate> {
    let mut parts = Vec::new();
    let mut remaining = d;
    while remaining > 0 {
        let choices: Vec<usize> = if factored {
            (0..)
                .map(|k| 1usize << k)
                .take_while(|&p| p <= remaining)
                .collect()
        } else {
            vec![1]
        };
        let p = choices[rng.gen_range(0..choices.len())];
        parts.push(p);
        remaining -= p;
    }
    parts
        .into_iter()
        .map(|m| {
            let mut factors = vec![1usize; degree];
            if degree == 0 {
                return BlockTemplate { factors, residual: m };
            }
            let mut order: Vec<usize> = (0..degree).collect();
            order.shuffle(rng);
            let twos = m.trailing_zeros() as usize;
            for k in 0..twos {
                factors[order[k % degree]] *= 2;
            }
            BlockTemplate { factors, residual: 1 }
        })
        .collect()
}

fn random_projection<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> CMat {
    let u = linalg::random_unitary(dim, rng);
    let cols = u.columns(0, rank).into_owned();
    &cols * cols.adjoint()
}

/// Commuting projection instance with a planted block structure at every
/// vertex. With `satisfiable`, one block per vertex is designated and each
/// edge term has a nontrivial kernel on the designated factor pair, so the
/// ground energy is zero.
pub fn generate_commuting_instance(
    graph: QuditGraph,
    d: usize,
    seed: u64,
    satisfiable: bool,
    style: BlockStyle,
) -> Result<QsatInstance> {
    let factored = match style {
        BlockStyle::Auto => d >= FACTORED_MIN_D,
        BlockStyle::Classical => false,
        BlockStyle::Factored => {
            if d < FACTORED_MIN_D {
                return Err(Error::DimensionTooSmall { d, required: FACTORED_MIN_D });
            }
            true
        }
    };
    if d == 0 {
        return Err(Error::DimensionTooSmall { d, required: 1 });
    }
    let mut rng = seed::stream(seed, "commuting-structure", 0);
    let templates: Vec<Vec<BlockTemplate>> = (0..graph.n)
        .map(|_| vertex_template(d, graph.degree, factored, &mut rng))
        .collect();
    let designated: Vec<usize> = templates
        .iter()
        .map(|blocks| rng.gen_range(0..blocks.len()))
        .collect();
    let frames: Vec<CMat> = (0..graph.n)
        .map(|_| {
            if factored {
                linalg::random_unitary(d, &mut rng)
            } else {
                linalg::identity(d)
            }
        })
        .collect();

    let incident: Vec<Vec<usize>> = (0..graph.n).map(|v| graph.incident_edges(v)).collect();
    let mut terms = Vec::with_capacity(graph.edge_count());
    for (e, &(u, v)) in graph.edges.iter().enumerate() {
        let mut term_rng = seed::stream(seed, "commuting-term", e as u64);
        let pu = incident[u].iter().position(|&x| x == e).expect("incident");
        let pv = incident[v].iter().position(|&x| x == e).expect("incident");
        let mut q = CMat::zeros(d * d, d * d);
        let mut off_u = 0;
        for (bu, block_u) in templates[u].iter().enumerate() {
            let mut off_v = 0;
            for (bv, block_v) in templates[v].iter().enumerate() {
                let fu = block_u.factors[pu];
                let fv = block_v.factors[pv];
                let f = fu * fv;
                let rank = if satisfiable && bu == designated[u] && bv == designated[v] {
                    if f >= 2 {
                        term_rng.gen_range(1..f)
                    } else {
                        0
                    }
                } else {
                    term_rng.gen_range(0..=f)
                };
                let p = random_projection(f, rank, &mut term_rng);
                let pair = block_pair_operator(&p, block_u, pu, block_v, pv);
                let (mu, mv) = (block_u.dim(), block_v.dim());
                for r in 0..mu * mv {
                    for c in 0..mu * mv {
                        let row = (off_u + r / mv) * d + off_v + r % mv;
                        let col = (off_u + c / mv) * d + off_v + c % mv;
                        q[(row, col)] = pair[(r, c)];
                    }
                }
                off_v += block_v.dim();
            }
            off_u += block_u.dim();
        }
        let frame = frames[u].kronecker(&frames[v]);
        let rotated = &frame * q * frame.adjoint();
        terms.push(linalg::hermitian_part(&rotated));
    }
    let mut inst = QsatInstance {
        d,
        graph,
        terms,
        metadata: InstanceMetadata { seed, delta_declared: 0.0, delta_actual: 0.0, projective: true },
    };
    inst.metadata.delta_actual = noncommutativity_profile(&inst).max_op;
    inst.validate()?;
    Ok(inst)
}

/// `P ⊗ I` on the pair of blocks, with `P` acting on the edge's factors and
/// legs ordered (u block legs, v block legs).
fn block_pair_operator(p: &CMat, block_u: &BlockTemplate, pu: usize, block_v: &BlockTemplate, pv: usize) -> CMat {
    let u_legs = block_u.leg_dims();
    let v_legs = block_v.leg_dims();
    let rest_dim = block_u.dim() * block_v.dim() / (u_legs[pu] * v_legs[pv]);
    let padded = p.kronecker(&linalg::identity(rest_dim));
    let mut dims = vec![u_legs[pu], v_legs[pv]];
    dims.extend(u_legs.iter().enumerate().filter(|&(k, _)| k != pu).map(|(_, &x)| x));
    dims.extend(v_legs.iter().enumerate().filter(|&(k, _)| k != pv).map(|(_, &x)| x));
    let nu = u_legs.len();
    let mut perm = Vec::with_capacity(2 * nu);
    for k in 0..nu {
        perm.push(if k == pu { 0 } else { 2 + k - usize::from(k > pu) });
    }
    for k in 0..v_legs.len() {
        perm.push(if k == pv { 1 } else { 2 + (nu - 1) + k - usize::from(k > pv) });
    }
    linalg::permute_legs(&padded, &dims, &perm)
}

/// Per intersecting pair commutator sizes on the joint support.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCommutator {
    pub first: usize,
    pub second: usize,
    pub shared: usize,
    pub op_norm: f64,
    pub frob_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoncommutativityProfile {
    pub pairs: Vec<PairCommutator>,
    pub max_op: f64,
    pub max_frob: f64,
    pub mean_op: f64,
    pub mean_frob: f64,
}

pub fn pair_commutator(instance: &QsatInstance, pair: &IntersectingPair) -> PairCommutator {
    let (a, b) = instance.embedded_pair(pair);
    let c = linalg::commutator(&a, &b);
    let frob = linalg::frob_norm(&c);
    let anti = linalg::frob_norm(&(&c + c.adjoint()));
    let op = if anti <= 1e-9 * frob.max(1e-300) {
        linalg::normal_spectral_norm(&c)
    } else {
        linalg::spectral_norm(&c)
    };
    PairCommutator {
        first: pair.first,
        second: pair.second,
        shared: pair.shared,
        op_norm: op,
        frob_norm: frob,
    }
}

/// Commutator norms of every pair of edge terms sharing a vertex. Pairs in
/// disjoint position commute identically and are not listed.
pub fn noncommutativity_profile(instance: &QsatInstance) -> NoncommutativityProfile {
    let pairs: Vec<PairCommutator> = instance
        .graph
        .intersecting_pairs()
        .iter()
        .map(|p| pair_commutator(instance, p))
        .collect();
    let count = pairs.len().max(1) as f64;
    NoncommutativityProfile {
        max_op: pairs.iter().map(|p| p.op_norm).fold(0.0, f64::max),
        max_frob: pairs.iter().map(|p| p.frob_norm).fold(0.0, f64::max),
        mean_op: pairs.iter().map(|p| p.op_norm).sum::<f64>() / count,
        mean_frob: pairs.iter().map(|p| p.frob_norm).sum::<f64>() / count,
        pairs,
    }
}

/// Eigen-decomposed generator `K = K_u ⊗ I + I ⊗ K_v`, `‖K‖ = 1`.
struct EdgeGenerator {
    values: Vec<f64>,
    vectors: CMat,
}

impl EdgeGenerator {
    fn unitary(&self, theta: f64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (c, &lambda) in self.values.iter().enumerate() {
            let phase = C64::new(0.0, theta * lambda).exp();
            for r in 0..scaled.nrows() {
                scaled[(r, c)] *= phase;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

fn conjugated(instance: &QsatInstance, generators: &[EdgeGenerator], theta: f64) -> QsatInstance {
    let mut out = instance.clone();
    for (q, g) in out.terms.iter_mut().zip(generators) {
        let u = g.unitary(theta);
        *q = linalg::hermitian_part(&(&u * &*q * u.adjoint()));
    }
    out
}

/// Conjugates every term by `exp(iθK_e)` with a random local generator per
/// edge, tuning the common angle `θ` by bisection until the largest
/// intersecting-pair commutator (operator norm) lies in `[0.9δ, δ]`.
pub fn perturb_instance(instance: &QsatInstance, delta: f64, seed: u64) -> Result<QsatInstance> {
    if !(0.0..=2.0).contains(&delta) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    if delta == 0.0 {
        return Ok(instance.clone());
    }
    let base = noncommutativity_profile(instance).max_op;
    if base > delta {
        return Err(Error::DeltaUnreachable { requested: delta, measured: base });
    }
    let d = instance.d;
    let generators: Vec<EdgeGenerator> = (0..instance.m())
        .map(|e| {
            let mut rng = seed::stream(seed, "perturb-generator", e as u64);
            let ku = linalg::random_hermitian(d, &mut rng);
            let kv = linalg::random_hermitian(d, &mut rng);
            let k = ku.kronecker(&linalg::identity(d)) + linalg::identity(d).kronecker(&kv);
            let norm = linalg::normal_spectral_norm(&k);
            let (values, vectors) = linalg::eigh(&(k / C64::new(norm, 0.0)));
            EdgeGenerator { values, vectors }
        })
        .collect();
    let measure = |theta: f64| {
        let inst = conjugated(instance, &generators, theta);
        let max = noncommutativity_profile(&inst).max_op;
        (inst, max)
    };

    let (mut lo, mut hi) = (0.0f64, core::f64::consts::PI);
    let (mut best, mut best_max) = (instance.clone(), base);
    let (top, top_max) = measure(hi);
    if top_max <= delta {
        best = top;
        best_max = top_max;
    } else {
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let (inst, max) = measure(mid);
            if max <= delta {
                lo = mid;
                best = inst;
                best_max = max;
                if max >= 0.9 * delta {
                    break;
                }
            } else {
                hi = mid;
            }
        }
    }
    best.metadata.delta_declared = delta;
    best.metadata.delta_actual = best_max;
    best.validate()?;
    Ok(best)
}
