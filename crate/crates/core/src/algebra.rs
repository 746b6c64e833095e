//! Finite-dimensional *-algebras and the common block / tensor-factor
//! structure of commuting edge algebras at a vertex.
//!
//! For pairwise commuting *-algebras `A_1, …, A_D` on `C^d` the space splits
//! as `C^d = ⊕_b (F_{b,1} ⊗ … ⊗ F_{b,D} ⊗ R_b)` with `A_i` acting on
//! `F_{b,i}` alone inside block `b`. Blocks come from the joint center, the
//! factors from matrix units of each algebra restricted to a block.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::instance::QsatInstance;
use crate::linalg::{self, CMat, C64};
use crate::operators::{self, Side};
use crate::seed;

/// Linear-independence threshold used while building spans.
const SPAN_TOL: f64 = 1e-10;

/// A unital *-closed, product-closed span with a Frobenius-orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixAlgebra {
    pub d: usize,
    pub basis: Vec<CMat>,
    pub unital: bool,
    pub dagger_closed: bool,
    pub product_closed: bool,
}

impl MatrixAlgebra {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Distance from `x` to the span.
    pub fn membership_residual(&self, x: &CMat) -> f64 {
        linalg::frob_norm(&(x - linalg::project_onto(x, &self.basis)))
    }

    fn closure_residuals(&self) -> (f64, f64, f64) {
        let unit = self.membership_residual(&linalg::identity(self.d));
        let mut dagger = 0.0f64;
        let mut product = 0.0f64;
        for a in &self.basis {
            dagger = dagger.max(self.membership_residual(&a.adjoint()));
            for b in &self.basis {
                product = product.max(self.membership_residual(&(a * b)));
            }
        }
        (unit, dagger, product)
    }

    /// Hermitian elements spanning the algebra (real span).
    pub fn hermitian_generators(&self) -> Vec<CMat> {
        let mut out = Vec::with_capacity(2 * self.basis.len());
        for b in &self.basis {
            out.push(linalg::hermitian_part(b));
            out.push(linalg::hermitian_part(&(b * C64::new(0.0, -1.0))));
        }
        out
    }
}

/// Smallest unital *-algebra containing the generators, by repeatedly adding
/// adjoints and pairwise products until the dimension stops growing.
pub fn close_algebra(d: usize, generators: &[CMat]) -> Result<MatrixAlgebra> {
    for g in generators {
        if g.nrows() != d || g.ncols() != d {
            return Err(Error::DimensionMismatch { left: g.nrows(), right: d });
        }
    }
    let mut seed_ops = vec![linalg::identity(d)];
    for g in generators {
        seed_ops.push(g.clone());
        seed_ops.push(g.adjoint());
    }
    let mut basis = linalg::orthonormalize(&seed_ops, SPAN_TOL);
    loop {
        let mut candidates = basis.clone();
        for a in &basis {
            candidates.push(a.adjoint());
            for b in &basis {
                candidates.push(a * b);
            }
        }
        let next = linalg::orthonormalize(&candidates, SPAN_TOL);
        let grown = next.len() > basis.len();
        basis = next;
        if !grown || basis.len() >= d * d {
            break;
        }
    }
    let mut alg = MatrixAlgebra { d, basis, unital: false, dagger_closed: false, product_closed: false };
    let (unit, dagger, product) = alg.closure_residuals();
    alg.unital = unit <= SPAN_TOL;
    alg.dagger_closed = dagger <= SPAN_TOL;
    alg.product_closed = product <= SPAN_TOL;
    Ok(alg)
}

/// Relative singular value below which a direction of the commutator map
/// counts as central.
const CENTER_TOL: f64 = 1e-8;

/// Orthonormal basis of the center: null space of `x ↦ ([x, b_j])_j` on the
/// algebra, computed by an SVD of the stacked commutator map.
pub fn center_basis(algebra: &MatrixAlgebra) -> Vec<CMat> {
    let k = algebra.dim();
    if k == 0 {
        return Vec::new();
    }
    let d2 = algebra.d * algebra.d;
    let mut map = CMat::zeros(k * d2, k);
    for (i, bi) in algebra.basis.iter().enumerate() {
        for (j, bj) in algebra.basis.iter().enumerate() {
            let c = linalg::commutator(bi, bj);
            for (t, z) in linalg::to_row_major(&c).into_iter().enumerate() {
                map[(j * d2 + t, i)] = z;
            }
        }
    }
    let (_, values, v_adj) = linalg::svd(&map);
    let scale = values.first().copied().unwrap_or(0.0).max(1.0);
    let mut center = Vec::new();
    for (c, &sigma) in values.iter().enumerate() {
        if sigma > CENTER_TOL * scale {
            continue;
        }
        let mut z = CMat::zeros(algebra.d, algebra.d);
        for (i, b) in algebra.basis.iter().enumerate() {
            z += b * v_adj[(c, i)].conj();
        }
        center.push(z);
    }
    linalg::orthonormalize(&center, SPAN_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposeConfig {
    /// Largest tolerated commutator between different edge algebras.
    pub premise_tol: f64,
    /// Eigenvalue gaps above this separate clusters.
    pub cluster_gap: f64,
    /// Gaps below this are treated as numerical noise.
    pub cluster_noise: f64,
    /// Attempts with fresh random elements before reporting ambiguity.
    pub attempts: usize,
    pub seed: u64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self { premise_tol: 1e-9, cluster_gap: 1e-6, cluster_noise: 1e-9, attempts: 8, seed: 0 }
    }
}

/// One block `V (F_1 ⊗ … ⊗ F_D ⊗ R)` of a vertex space. Columns of the
/// isometry enumerate factor indices lexicographically, incident edges in
/// ascending id order first and the residual factor last.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub isometry: CMat,
    pub factor_dims: Vec<usize>,
    pub residual_dim: usize,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.isometry.ncols()
    }

    /// Leg dimensions: factors then residual.
    pub fn leg_dims(&self) -> Vec<usize> {
        let mut legs = self.factor_dims.clone();
        legs.push(self.residual_dim);
        legs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexStructure {
    pub vertex: usize,
    pub edges: Vec<usize>,
    pub blocks: Vec<Block>,
}

/// Measured residuals of the structure invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureResiduals {
    /// `max ‖V_b† V_b − I‖_F`.
    pub isometry: f64,
    /// `max ‖V_b† V_{b'}‖_F`, `b ≠ b'`.
    pub orthogonality: f64,
    /// `|Σ dim − d|`.
    pub completeness: usize,
    /// Largest deviation of a block-restricted algebra element from
    /// `I ⊗ X ⊗ I` on its factor, including off-block leakage.
    pub faithful: f64,
}

impl VertexStructure {
    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(Block::dim).collect()
    }

    pub fn d(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.isometry.nrows())
    }

    /// Structural checks independent of any algebra.
    pub fn geometry_residuals(&self) -> (f64, f64, usize) {
        let d = self.d();
        let mut iso = 0.0f64;
        let mut orth = 0.0f64;
        for (i, b) in self.blocks.iter().enumerate() {
            let g = b.isometry.adjoint() * &b.isometry;
            iso = iso.max(linalg::frob_norm(&(g - linalg::identity(b.dim()))));
            let legs: usize = b.leg_dims().iter().product();
            if legs != b.dim() {
                iso = f64::INFINITY;
            }
            for c in &self.blocks[i + 1..] {
                orth = orth.max(linalg::frob_norm(&(b.isometry.adjoint() * &c.isometry)));
            }
        }
        let total: usize = self.block_dims().iter().sum();
        (iso, orth, total.abs_diff(d))
    }

    /// All invariants, with the faithful-action check against the given edge
    /// algebras (one per incident edge, same order).
    pub fn residuals(&self, algebras: &[MatrixAlgebra]) -> StructureResiduals {
        let (isometry, orthogonality, completeness) = self.geometry_residuals();
        let mut faithful = 0.0f64;
        for (i, alg) in algebras.iter().enumerate() {
            for a in &alg.basis {
                for (bi, block) in self.blocks.iter().enumerate() {
                    let local = block.isometry.adjoint() * a * &block.isometry;
                    faithful = faithful.max(factor_action_residual(&local, &block.leg_dims(), i));
                    for (bj, other) in self.blocks.iter().enumerate() {
                        if bi != bj {
                            let leak = other.isometry.adjoint() * a * &block.isometry;
                            faithful = faithful.max(linalg::frob_norm(&leak));
                        }
                    }
                }
            }
        }
        StructureResiduals { isometry, orthogonality, completeness, faithful }
    }
}

/// Distance of `m` from `I ⊗ X ⊗ I` with `X` on leg `leg`.
fn factor_action_residual(m: &CMat, dims: &[usize], leg: usize) -> f64 {
    let rest: usize = dims.iter().enumerate().filter(|&(k, _)| k != leg).map(|(_, &x)| x).product();
    let x = linalg::partial_trace(m, dims, &[leg]) / C64::new(rest as f64, 0.0);
    let mut order: Vec<usize> = vec![leg];
    order.extend((0..dims.len()).filter(|&k| k != leg));
    let padded = x.kronecker(&linalg::identity(rest));
    let permuted_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let inverse: Vec<usize> = (0..dims.len()).map(|k| order.iter().position(|&o| o == k).expect("leg")).collect();
    let rebuilt = linalg::permute_legs(&padded, &permuted_dims, &inverse);
    linalg::frob_norm(&(m - rebuilt))
}

/// Sorted eigenvalues grouped by gaps. Returns cluster boundaries, or the
/// offending gap when one falls between noise and threshold.
fn cluster(values: &[f64], cfg: &DecomposeConfig) -> core::result::Result<Vec<(usize, usize)>, f64> {
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..values.len() {
        let gap = values[i] - values[i - 1];
        if gap > cfg.cluster_gap {
            clusters.push((start, i));
            start = i;
        } else if gap > cfg.cluster_noise {
            return Err(gap);
        }
    }
    if !values.is_empty() {
        clusters.push((start, values.len()));
    }
    Ok(clusters)
}

fn random_hermitian_element<R: Rng + ?Sized>(generators: &[CMat], dim: usize, rng: &mut R) -> CMat {
    let mut h = CMat::zeros(dim, dim);
    for g in generators {
        let c: f64 = rng.sample(StandardNormal);
        h += g * C64::new(c, 0.0);
    }
    h
}

/// Common block decomposition and per-edge tensor factors of pairwise
/// commuting edge algebras at a vertex.
pub fn block_decompose_vertex(vertex: usize, edges: &[usize], algebras: &[MatrixAlgebra], cfg: &DecomposeConfig) -> Result<VertexStructure> {
    let d = algebras.first().map_or(0, |a| a.d);
    if d == 0 {
        return Err(Error::StructureMismatch("no edge algebras".into()));
    }
    if edges.len() != algebras.len() {
        return Err(Error::StructureMismatch(format!("{} edges for {} algebras", edges.len(), algebras.len())));
    }
    for i in 0..algebras.len() {
        for j in (i + 1)..algebras.len() {
            let mut worst = 0.0f64;
            for a in &algebras[i].basis {
                for b in &algebras[j].basis {
                    worst = worst.max(linalg::frob_norm(&linalg::commutator(a, b)));
                }
            }
            if !(worst <= cfg.premise_tol) {
                return Err(Error::CommutationPremise { first: i, second: j, residual: worst });
            }
        }
    }
    let central: Vec<CMat> = algebras
        .iter()
        .flat_map(|a| {
            let c = MatrixAlgebra { d, basis: center_basis(a), unital: true, dagger_closed: true, product_closed: true };
            c.hermitian_generators()
        })
        .collect();
    let mut rng = seed::stream(cfg.seed, "central-element", vertex as u64);
    let mut last_gap = 0.0;
    for _ in 0..cfg.attempts.max(1) {
        let z = random_hermitian_element(&central, d, &mut rng);
        let (values, vectors) = linalg::eigh(&z);
        let clusters = match cluster(&values, cfg) {
            Ok(c) => c,
            Err(gap) => {
                last_gap = gap;
                continue;
            }
        };
        let mut blocks = Vec::with_capacity(clusters.len());
        let mut ambiguous = None;
        for (lo, hi) in clusters {
            let v = vectors.columns(lo, hi - lo).into_owned();
            match factorize_block(&v, algebras, cfg, &mut rng) {
                Ok(block) => blocks.push(block),
                Err(Error::ClusterAmbiguity { gap }) => {
                    ambiguous = Some(gap);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match ambiguous {
            Some(gap) => last_gap = gap,
            None => return Ok(VertexStructure { vertex, edges: edges.to_vec(), blocks }),
        }
    }
    Err(Error::ClusterAmbiguity { gap: last_gap })
}

/// Splits one block into factors, one algebra at a time. Each nontrivial
/// restricted algebra is a full matrix algebra `M_n ⊗ I`; its matrix units
/// come from the eigenspaces `P_k` of a generic Hermitian element and the
/// polar parts of `P_k x P_0` for a generic element `x`.
fn factorize_block<R: Rng + ?Sized>(v: &CMat, algebras: &[MatrixAlgebra], cfg: &DecomposeConfig, rng: &mut R) -> Result<Block> {
    let mut pieces: Vec<CMat> = vec![v.clone()];
    let mut factor_dims = Vec::with_capacity(algebras.len());
    for alg in algebras {
        let rest = pieces[0].clone();
        let r = rest.ncols();
        let restricted: Vec<CMat> = alg.basis.iter().map(|a| rest.adjoint() * a * &rest).collect();
        let span = linalg::orthonormalize(&restricted, 1e-9);
        let k = span.len();
        let n = (libm::sqrt(k as f64) + 0.5) as usize;
        if n * n != k || n == 0 || !r.is_multiple_of(n) {
            return Err(Error::StructureMismatch(format!(
                "restricted algebra of dimension {k} is not a full matrix algebra on a {r}-dimensional block"
            )));
        }
        factor_dims.push(n);
        if n == 1 {
            continue;
        }
        let herm: Vec<CMat> = span
            .iter()
            .flat_map(|b| [linalg::hermitian_part(b), linalg::hermitian_part(&(b * C64::new(0.0, -1.0)))])
            .collect();
        let h = random_hermitian_element(&herm, r, rng);
        let (values, vecs) = linalg::eigh(&h);
        let clusters = cluster(&values, cfg).map_err(|gap| Error::ClusterAmbiguity { gap })?;
        let m = r / n;
        if clusters.len() != n || clusters.iter().any(|&(lo, hi)| hi - lo != m) {
            return Err(Error::ClusterAmbiguity { gap: 0.0 });
        }
        let eig: Vec<CMat> = clusters.iter().map(|&(lo, _)| vecs.columns(lo, m).into_owned()).collect();
        let mut x = CMat::zeros(r, r);
        for b in &span {
            let c = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            x += b * c;
        }
        let mut units = Vec::with_capacity(n);
        units.push(eig[0].clone());
        for e in &eig[1..] {
            let t = e.adjoint() * &x * &eig[0];
            let s = linalg::singular_values(&t);
            if s.last().copied().unwrap_or(0.0) <= 1e-6 * s.first().copied().unwrap_or(0.0) {
                return Err(Error::ClusterAmbiguity { gap: 0.0 });
            }
            units.push(e * linalg::polar_unitary(&t));
        }
        pieces = pieces
            .iter()
            .flat_map(|p| units.iter().map(move |u| p * u))
            .collect();
    }
    let residual_dim = pieces[0].ncols();
    let dim = pieces.len() * residual_dim;
    let mut isometry = CMat::zeros(v.nrows(), dim);
    for (j, p) in pieces.iter().enumerate() {
        isometry.columns_mut(j * residual_dim, residual_dim).copy_from(p);
    }
    Ok(Block { isometry, factor_dims, residual_dim })
}

/// Algebra generated at `vertex` by the weighted Schmidt factors of each
/// incident edge term, in ascending edge order.
pub fn vertex_edge_algebras(instance: &QsatInstance, vertex: usize) -> Result<Vec<MatrixAlgebra>> {
    instance
        .graph
        .incident_edges(vertex)
        .into_iter()
        .map(|e| {
            let (u, v) = instance.graph.edges[e];
            let side = Side::of_vertex(u, v, vertex).expect("incident");
            let s = operators::hermitian_schmidt_decompose(&instance.terms[e], instance.d, side)?;
            close_algebra(instance.d, &s.a_ops())
        })
        .collect()
}

/// Decomposes every vertex of a commuting instance.
pub fn decompose_instance(instance: &QsatInstance, cfg: &DecomposeConfig) -> Result<Vec<VertexStructure>> {
    (0..instance.n())
        .map(|v| {
            let algebras = vertex_edge_algebras(instance, v)?;
            block_decompose_vertex(v, &instance.graph.incident_edges(v), &algebras, cfg)
                .map_err(|e| Error::VertexFailed { vertex: v, source: alloc::boxed::Box::new(e) })
        })
        .collect()
}
