//! Operators on qudits: Frobenius geometry, commutators, tensor embeddings
//! and the operator Schmidt decomposition of two-qudit operators.
//!
//! Operators on several qudits order their tensor factors by the support
//! list they are built for; edge terms always put the lower vertex id first.

use alloc::vec::Vec;


use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};

/// Where an operator acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Abstract,
    Vertex(usize),
    Edge { id: usize, u: usize, v: usize },
}

/// A dense square operator with support metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMat,
    support: Support,
}

impl Operator {
    pub fn new(matrix: CMat, support: Support) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                left: matrix.nrows(),
                right: matrix.ncols(),
            });
        }
        Ok(Self { matrix, support })
    }

    pub fn abstract_op(matrix: CMat) -> Result<Self> {
        Self::new(matrix, Support::Abstract)
    }

    /// Builds an operator from row-major entries.
    pub fn from_row_major(dim: usize, entries: &[C64], support: Support) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::EntryCount {
                len: entries.len(),
                expected: dim * dim,
            });
        }
        Self::new(linalg::from_row_major(dim, entries), support)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: linalg::identity(dim),
            support: Support::Abstract,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn with_support(mut self, support: Support) -> Self {
        self.support = support;
        self
    }

    /// Replaces the matrix, keeping the support. Panics on a shape change.
    pub fn with_matrix(mut self, matrix: CMat) -> Self {
        assert_eq!(matrix.shape(), self.matrix.shape(), "operator shape changed");
        self.matrix = matrix;
        self
    }

    pub fn row_major(&self) -> Vec<C64> {
        linalg::to_row_major(&self.matrix)
    }

    pub fn dagger(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            support: self.support,
        }
    }

    /// `‖A − A†‖_F`.
    pub fn hermiticity_residual(&self) -> f64 {
        linalg::hermiticity_residual(&self.matrix)
    }

    /// `‖A² − A‖_F`.
    pub fn idempotency_residual(&self) -> f64 {
        linalg::frob_norm(&(&self.matrix * &self.matrix - &self.matrix))
    }
}

fn check_dims(a: &Operator, b: &Operator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// `⟨A|B⟩ = Tr(A†B)`.
pub fn frobenius_inner(a: &Operator, b: &Operator) -> Result<C64> {
    check_dims(a, b)?;
    Ok(linalg::frob_inner(&a.matrix, &b.matrix))
}

pub fn frobenius_norm(a: &Operator) -> f64 {
    linalg::frob_norm(&a.matrix)
}

/// Largest singular value.
pub fn operator_norm(a: &Operator) -> f64 {
    linalg::spectral_norm(&a.matrix)
}

/// `AB − BA`. Operands must already live on the same support.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dims(a, b)?;
    Ok(Operator {
        matrix: linalg::commutator(&a.matrix, &b.matrix),
        support: Support::Abstract,
    })
}

/// Pads an operator acting on the qudits `source` (in its own tensor order)
/// with identities so it acts on `target`, tensor factors ordered as listed
/// in `target`.
pub fn tensor_embed(a: &Operator, source: &[usize], target: &[usize], d: usize) -> Result<Operator> {
    let contained = source.iter().all(|s| target.contains(s));
    let distinct = (1..source.len()).all(|i| !source[..i].contains(&source[i]))
        && (1..target.len()).all(|i| !target[..i].contains(&target[i]));
    if !contained || !distinct {
        return Err(Error::SupportNotContained {
            source_support: source.to_vec(),
            target: target.to_vec(),
        });
    }
    let expected = d.pow(source.len() as u32);
    if a.dim() != expected {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: expected,
        });
    }
    let rest: Vec<usize> = target.iter().copied().filter(|t| !source.contains(t)).collect();
    let padded = a
        .matrix
        .kronecker(&linalg::identity(d.pow(rest.len() as u32)));
    let dims = alloc::vec![d; target.len()];
    let perm: Vec<usize> = target
        .iter()
        .map(|t| match source.iter().position(|s| s == t) {
            Some(p) => p,
            None => source.len() + rest.iter().position(|r| r == t).unwrap_or(0),
        })
        .collect();
    Ok(Operator {
        matrix: linalg::permute_legs(&padded, &dims, &perm),
        support: Support::Abstract,
    })
}

/// Which tensor factor of a two-qudit operator carries the Schmidt weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Side of the edge `(u, v)`, `u < v`, on which `vertex` sits.
    pub fn of_vertex(u: usize, v: usize, vertex: usize) -> Option<Side> {
        if vertex == u {
            Some(Side::Left)
        } else if vertex == v {
            Some(Side::Right)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtTerm {
    /// Weighted factor on the pivot qudit; `‖a‖_F` is the Schmidt coefficient.
    pub a: CMat,
    /// Unit-norm factor on the other qudit.
    pub b: CMat,
}

/// `Q = Σ_α A_α ⊗ B_α` with the pivot factor `A_α` carrying the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtDecomposition {
    pub d: usize,
    pub pivot: Side,
    pub terms: Vec<SchmidtTerm>,
}

/// Singular values below this fraction of the largest are dropped.
pub const SCHMIDT_RANK_CUTOFF: f64 = 1e-12;

impl SchmidtDecomposition {
    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| linalg::frob_norm(&t.a)).collect()
    }

    pub fn max_coefficient(&self) -> f64 {
        self.coefficients().into_iter().fold(0.0, f64::max)
    }

    pub fn a_ops(&self) -> Vec<CMat> {
        self.terms.iter().map(|t| t.a.clone()).collect()
    }

    pub fn b_ops(&self) -> Vec<CMat> {
        self.terms.iter().map(|t| t.b.clone()).collect()
    }

    /// Rebuilds the two-qudit operator in (left ⊗ right) order.
    pub fn reconstruct(&self) -> CMat {
        compose(self.d, self.pivot, self.terms.iter().map(|t| (&t.a, &t.b)))
    }
}

/// `Σ a ⊗ b` (pivot left) or `Σ b ⊗ a` (pivot right).
pub fn compose<'a>(d: usize, pivot: Side, pairs: impl Iterator<Item = (&'a CMat, &'a CMat)>) -> CMat {
    let mut q = CMat::zeros(d * d, d * d);
    for (a, b) in pairs {
        q += match pivot {
            Side::Left => a.kronecker(b),
            Side::Right => b.kronecker(a),
        };
    }
    q
}

/// Realignment of an operator on `C^d ⊗ C^d`:
/// `R[(i1 d + j1), (i2 d + j2)] = Q[(i1 d + i2), (j1 d + j2)]`.
/// Row index pairs the left factor's (row, column); column index the right's.
pub fn realign(q: &CMat, d: usize) -> CMat {
    CMat::from_fn(d * d, d * d, |r, c| {
        let (i1, j1) = (r / d, r % d);
        let (i2, j2) = (c / d, c % d);
        q[(i1 * d + i2, j1 * d + j2)]
    })
}

/// Operator Schmidt decomposition of a two-qudit operator via the SVD of its
/// realignment.
pub fn schmidt_decompose(q: &Operator, d: usize, pivot: Side) -> Result<SchmidtDecomposition> {
    schmidt_decompose_matrix(q.matrix(), d, pivot)
}

pub fn schmidt_decompose_matrix(q: &CMat, d: usize, pivot: Side) -> Result<SchmidtDecomposition> {
    if d == 0 || q.nrows() != d * d || q.ncols() != d * d {
        return Err(Error::NotBipartite { dim: q.nrows(), d });
    }
    let (u, s, v_t) = linalg::svd(&realign(q, d));
    let largest = s.first().copied().unwrap_or(0.0);
    let mut terms = Vec::new();
    if largest > 0.0 {
        for (k, &sigma) in s.iter().enumerate() {
            if sigma < SCHMIDT_RANK_CUTOFF * largest {
                break;
            }
            let left = CMat::from_fn(d, d, |i, j| u[(i * d + j, k)]);
            let right = CMat::from_fn(d, d, |i, j| v_t[(k, i * d + j)]);
            let weight = C64::new(sigma, 0.0);
            let term = match pivot {
                Side::Left => SchmidtTerm { a: left * weight, b: right },
                Side::Right => SchmidtTerm { a: right * weight, b: left },
            };
            terms.push(term);
        }
    }
    Ok(SchmidtDecomposition { d, pivot, terms })
}

/// Frobenius-orthonormal Hermitian basis of `d × d` matrices: diagonal units,
/// then symmetric and antisymmetric off-diagonal pairs.
pub fn hermitian_basis(d: usize) -> Vec<CMat> {
    let h = core::f64::consts::FRAC_1_SQRT_2;
    let mut basis = Vec::with_capacity(d * d);
    for j in 0..d {
        let mut m = CMat::zeros(d, d);
        m[(j, j)] = linalg::ONE;
        basis.push(m);
    }
    for j in 0..d {
        for k in (j + 1)..d {
            let mut s = CMat::zeros(d, d);
            s[(j, k)] = C64::new(h, 0.0);
            s[(k, j)] = C64::new(h, 0.0);
            basis.push(s);
            let mut a = CMat::zeros(d, d);
            a[(j, k)] = C64::new(0.0, -h);
            a[(k, j)] = C64::new(0.0, h);
            basis.push(a);
        }
    }
    basis
}

/// Schmidt decomposition of a Hermitian two-qudit operator with Hermitian
/// factors: the real coefficient matrix in a Hermitian product basis is
/// decomposed by a real SVD.
pub fn hermitian_schmidt_decompose(q: &CMat, d: usize, pivot: Side) -> Result<SchmidtDecomposition> {
    if d == 0 || q.nrows() != d * d || q.ncols() != d * d {
        return Err(Error::NotBipartite { dim: q.nrows(), d });
    }
    let basis = hermitian_basis(d);
    let vecs = CMat::from_fn(d * d, d * d, |r, c| basis[c][(r / d, r % d)].conj());
    let t = (vecs.transpose() * realign(q, d) * &vecs).map(|z| z.re);
    let (u, values, v_t) = linalg::svd_real(&t);
    let largest = values.first().copied().unwrap_or(0.0);
    let mut terms = Vec::new();
    if largest > 0.0 {
        for (k, &sigma) in values.iter().enumerate() {
            if sigma < SCHMIDT_RANK_CUTOFF * largest {
                break;
            }
            let mut left = CMat::zeros(d, d);
            let mut right = CMat::zeros(d, d);
            for (j, h) in basis.iter().enumerate() {
                left += h * C64::new(u[(j, k)] * sigma, 0.0);
                right += h * C64::new(v_t[(k, j)], 0.0);
            }
            terms.push(match pivot {
                Side::Left => SchmidtTerm { a: left, b: right },
                Side::Right => {
                    let scale = C64::new(sigma, 0.0);
                    SchmidtTerm { a: right * scale, b: left / scale }
                }
            });
        }
    }
    Ok(SchmidtDecomposition { d, pivot, terms })
}

/// Largest Frobenius distance from a member's adjoint to the span of the
/// family; zero exactly when the span is closed under conjugation.
pub fn conjugation_closure_residual(family: &[Operator]) -> Result<f64> {
    let first = family.first().ok_or(Error::EmptyFamily)?;
    for op in family {
        check_dims(first, op)?;
    }
    let mats: Vec<CMat> = family.iter().map(|o| o.matrix.clone()).collect();
    Ok(closure_residual_matrices(&mats))
}

pub(crate) fn closure_residual_matrices(mats: &[CMat]) -> f64 {
    let basis = linalg::orthonormalize(mats, 1e-12);
    mats.iter()
        .map(|m| {
            let dag = m.adjoint();
            linalg::frob_norm(&(&dag - linalg::project_onto(&dag, &basis)))
        })
        .fold(0.0, f64::max)
}
