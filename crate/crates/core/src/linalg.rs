//! Dense complex linear algebra on small matrices.
//!
//! Everything here works on `nalgebra` dynamic matrices. Tensor products use
//! the row-major multi-index convention: for legs of dimensions
//! `[d0, d1, ..., dk]` the flat index of `(i0, i1, ..., ik)` is
//! `((i0 * d1 + i1) * d2 + ...) + ik`, so leg 0 is the most significant.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const IM: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `Tr(A† B)`.
pub fn frob_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn frob_norm(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn hermiticity_residual(a: &CMat) -> f64 {
    frob_norm(&(a - a.adjoint()))
}

/// `(A + A†) / 2`, exactly Hermitian entry by entry.
pub fn hermitian_part(a: &CMat) -> CMat {
    let n = a.nrows();
    let mut h = CMat::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = C64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
    }
    h
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// The input is symmetrized first so tiny anti-Hermitian noise is ignored.
/// A decomposition failing its residual check is recomputed by Jacobi.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let h = hermitian_part(a);
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    if eigen_residual(&h, &values, &vectors) <= 1e-12 * frob_norm(&h).max(1.0) {
        return (values, vectors);
    }
    jacobi_eigh(&h)
}

fn eigen_residual(h: &CMat, values: &[f64], vectors: &CMat) -> f64 {
    let mut r = h * vectors;
    for (c, &lambda) in values.iter().enumerate() {
        let col = vectors.column(c) * C64::new(lambda, 0.0);
        let mut rc = r.column_mut(c);
        rc -= col;
    }
    let unitarity = frob_norm(&(vectors.adjoint() * vectors - identity(h.nrows())));
    frob_norm(&r) + unitarity * frob_norm(h).max(1.0)
}

/// Eigenpairs of a Hermitian matrix from the SVD of a positive shift.
fn jacobi_eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    let shift = frob_norm(h) + 1.0;
    let (_, s, v) = jacobi_svd(&(h + identity(n) * C64::new(shift, 0.0)));
    let values: Vec<f64> = s.iter().rev().map(|x| x - shift).collect();
    let vectors = CMat::from_fn(n, n, |r, c| v[(r, n - 1 - c)]);
    (values, vectors)
}

/// Real symmetric eigen-decomposition, eigenvalues ascending.
pub fn eigh_real(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let complex = a.map(|x| C64::new(x, 0.0));
    if eigen_residual(&complex, &values, &vectors.map(|x| C64::new(x, 0.0))) <= 1e-12 * frob_norm(&complex).max(1.0) {
        return (values, vectors);
    }
    let (values, vectors) = jacobi_eigh(&complex);
    (values, vectors.map(|z| z.re))
}

/// One-sided (Hestenes) Jacobi SVD `A = U diag(s) V†` for `rows ≥ cols`,
/// singular values descending. `U` is completed to orthonormal columns when
/// `A` is rank deficient. Real input yields real factors.
fn jacobi_svd(a: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (m, n) = (a.nrows(), a.ncols());
    let mut u = a.clone();
    let mut v = identity(n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha: f64 = u.column(p).iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = u.column(q).iter().map(|z| z.norm_sqr()).sum();
                let gamma: C64 = u.column(p).dotc(&u.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut u, &mut v] {
                    for r in 0..mat.nrows() {
                        let x = mat[(r, p)];
                        let y = mat[(r, q)] * phase.conj();
                        mat[(r, p)] = x * c - y * s;
                        mat[(r, q)] = (x * s + y * c) * phase;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let largest = order.first().map_or(0.0, |&i| norms[i]);
    let values: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let mut u_out = CMat::zeros(m, n);
    let mut filled = 0;
    for (c, &i) in order.iter().enumerate() {
        if norms[i] > 1e-300 && norms[i] > 1e-14 * largest {
            let col = u.column(i) / C64::new(norms[i], 0.0);
            u_out.set_column(c, &col);
            filled = c + 1;
        }
    }
    // Complete with standard basis vectors orthogonalized against the rest.
    let mut candidate = 0;
    while filled < n && candidate < m {
        let mut x = CVec::zeros(m);
        x[candidate] = ONE;
        candidate += 1;
        for _ in 0..2 {
            for c in 0..filled {
                let proj = u_out.column(c).dotc(&x);
                x -= u_out.column(c) * proj;
            }
        }
        let norm = x.norm();
        if norm > 1e-8 {
            u_out.set_column(filled, &(x / C64::new(norm, 0.0)));
            filled += 1;
        }
    }
    let v_out = CMat::from_fn(n, n, |r, c| v[(r, order[c])]);
    (u_out, values, v_out)
}

/// Thin SVD `A = U diag(s) V†` with singular values in descending order,
/// returned as `(U, s, V†)`.
pub fn svd(a: &CMat) -> (CMat, Vec<f64>, CMat) {
    if a.nrows() >= a.ncols() {
        let (u, s, v) = jacobi_svd(a);
        (u, s, v.adjoint())
    } else {
        let (u, s, v) = jacobi_svd(&a.adjoint());
        (v, s, u.adjoint())
    }
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    svd(a).1
}

/// Real SVD through the complex routine, `(U, s, Vᵀ)`.
pub fn svd_real(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (u, s, v_t) = svd(&a.map(|x| C64::new(x, 0.0)));
    (u.map(|z| z.re), s, v_t.map(|z| z.re))
}

/// Largest singular value.
pub fn spectral_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Spectral norm of a matrix known to be Hermitian or anti-Hermitian.
/// Uses the eigen-decomposition of the Hermitian representative, which is
/// cheaper than an SVD.
pub fn normal_spectral_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let h = if hermiticity_residual(a) <= frob_norm(a) * 1e-9 {
        a.clone()
    } else {
        a * IM
    };
    let (values, _) = eigh(&h);
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Nearest unitary (polar factor) of a square matrix.
pub fn polar_unitary(a: &CMat) -> CMat {
    let (u, _, v_t) = svd(a);
    u * v_t
}

/// `exp(i t H)` for Hermitian `H`.
pub fn expm_i_hermitian(h: &CMat, t: f64) -> CMat {
    let (values, vectors) = eigh(h);
    let n = h.nrows();
    let mut scaled = vectors.clone();
    for (c, &lambda) in values.iter().enumerate() {
        let phase = C64::new(0.0, t * lambda).exp();
        for r in 0..n {
            scaled[(r, c)] *= phase;
        }
    }
    scaled * vectors.adjoint()
}

/// `exp(X)` for anti-Hermitian `X`.
pub fn expm_antihermitian(x: &CMat) -> CMat {
    let h = x * C64::new(0.0, -1.0);
    expm_i_hermitian(&h, 1.0)
}

pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    hermitian_part(&random_gaussian(n, n, rng))
}

/// Haar-distributed unitary via QR of a Ginibre matrix with phase correction.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = random_gaussian(n, n, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..n {
        let diag = r[(c, c)];
        let norm = diag.norm();
        let phase = if norm > 0.0 { diag / norm } else { ONE };
        for row in 0..n {
            q[(row, c)] *= phase;
        }
    }
    q
}

pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    let g = random_gaussian(n, 1, rng);
    let norm = frob_norm(&g);
    CVec::from_fn(n, |i, _| g[(i, 0)] / norm)
}

/// Haar-random orthogonal projection of the given rank.
pub fn random_projection<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> CMat {
    let u = random_unitary(n, rng);
    let cols = u.columns(0, rank.min(n));
    hermitian_part(&(cols * cols.adjoint()))
}

/// Strides of a row-major multi-index over `dims`.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// For each output flat index, the input flat index under a leg permutation
/// where output leg `j` is input leg `perm[j]`.
fn permutation_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    assert_eq!(dims.len(), perm.len(), "permutation length mismatch");
    let in_strides = strides(dims);
    let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let total: usize = dims.iter().product();
    let mut map = vec![0usize; total];
    let mut idx = vec![0usize; dims.len()];
    for slot in map.iter_mut() {
        *slot = idx
            .iter()
            .zip(perm)
            .map(|(&i, &p)| i * in_strides[p])
            .sum();
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < out_dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    map
}

/// Reorders the tensor legs of an operator: output leg `j` is input leg `perm[j]`.
pub fn permute_legs(m: &CMat, dims: &[usize], perm: &[usize]) -> CMat {
    let map = permutation_map(dims, perm);
    let n = map.len();
    assert_eq!(m.nrows(), n, "operator does not match leg dimensions");
    CMat::from_fn(n, n, |r, c| m[(map[r], map[c])])
}

/// Reorders the tensor legs of a state vector.
pub fn permute_vector(v: &CVec, dims: &[usize], perm: &[usize]) -> CVec {
    let map = permutation_map(dims, perm);
    CVec::from_fn(map.len(), |r, _| v[map[r]])
}

/// Partial trace keeping the legs listed in `keep`, in that order.
pub fn partial_trace(m: &CMat, dims: &[usize], keep: &[usize]) -> CMat {
    let st = strides(dims);
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let offsets = |legs: &[usize]| -> Vec<usize> {
        let ld: Vec<usize> = legs.iter().map(|&l| dims[l]).collect();
        let total: usize = ld.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; legs.len()];
        for _ in 0..total {
            out.push(idx.iter().zip(legs).map(|(&i, &l)| i * st[l]).sum());
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < ld[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    };
    let keep_off = offsets(keep);
    let tr_off = offsets(&traced);
    let n = keep_off.len();
    CMat::from_fn(n, n, |r, c| {
        tr_off
            .iter()
            .map(|&t| m[(keep_off[r] + t, keep_off[c] + t)])
            .sum()
    })
}

pub fn kron_all(mats: &[CMat]) -> CMat {
    mats.iter()
        .fold(CMat::from_element(1, 1, ONE), |acc, m| acc.kronecker(m))
}

pub fn kron_vecs(vs: &[CVec]) -> CVec {
    let m = vs
        .iter()
        .fold(CMat::from_element(1, 1, ONE), |acc, v| acc.kronecker(v));
    CVec::from_fn(m.nrows(), |i, _| m[(i, 0)])
}

/// Orthonormal basis (Frobenius inner product) of the span of `ops`.
///
/// Vectors whose residual after projection falls below `tol` times the
/// largest input norm are treated as dependent.
pub fn orthonormalize(ops: &[CMat], tol: f64) -> Vec<CMat> {
    let scale = ops.iter().map(frob_norm).fold(0.0, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let mut basis: Vec<CMat> = Vec::new();
    for op in ops {
        let mut r = op.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = frob_inner(b, &r);
                r -= b * c;
            }
        }
        let norm = frob_norm(&r);
        if norm > tol * scale {
            basis.push(r / C64::new(norm, 0.0));
        }
    }
    basis
}

/// Orthogonal projection onto the span of an orthonormal basis.
pub fn project_onto(x: &CMat, basis: &[CMat]) -> CMat {
    let mut p = CMat::zeros(x.nrows(), x.ncols());
    for b in basis {
        p += b * frob_inner(b, x);
    }
    p
}

/// Converts a row-major entry list into a square matrix.
pub fn from_row_major(dim: usize, entries: &[C64]) -> CMat {
    CMat::from_fn(dim, dim, |r, c| entries[r * dim + c])
}

pub fn to_row_major(m: &CMat) -> Vec<C64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svd_reconstructs_rank_deficient_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (rows, cols, rank) in [(16, 16, 2), (9, 9, 9), (5, 3, 1), (3, 7, 2)] {
            let a = random_gaussian(rows, rank, &mut rng) * random_gaussian(rank, cols, &mut rng);
            let (u, s, v_t) = svd(&a);
            let k = rows.min(cols);
            let sigma = CMat::from_fn(k, k, |i, j| if i == j { C64::new(s[i], 0.0) } else { ZERO });
            assert!(frob_norm(&(&u * sigma * &v_t - &a)) < 1e-12 * frob_norm(&a));
            assert!(frob_norm(&(u.adjoint() * &u - identity(k))) < 1e-12);
            assert!(frob_norm(&(&v_t * v_t.adjoint() - identity(k))) < 1e-12);
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
            assert!(s[rank.min(k) - 1] > 1e-6 && s.iter().skip(rank).all(|&x| x < 1e-12));
        }
        let real = DMatrix::from_fn(16, 16, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 0.5 } else { 0.0 });
        let (u, s, v_t) = svd_real(&real);
        let rebuilt = &u * DMatrix::from_diagonal(&DVector::from_vec(s)) * &v_t;
        assert!((rebuilt - real).norm() < 1e-12);
    }

    #[test]
    fn permute_swaps_two_qubits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_gaussian(2, 2, &mut rng);
        let b = random_gaussian(3, 3, &mut rng);
        let ab = a.kronecker(&b);
        let ba = b.kronecker(&a);
        let swapped = permute_legs(&ab, &[2, 3], &[1, 0]);
        assert!(max_abs_diff(&swapped, &ba) < 1e-14);
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_gaussian(2, 2, &mut rng);
        let b = random_gaussian(3, 3, &mut rng);
        let c = random_gaussian(2, 2, &mut rng);
        let abc = kron_all(&[a.clone(), b.clone(), c.clone()]);
        let kept = partial_trace(&abc, &[2, 3, 2], &[2, 0]);
        let expected = c.kronecker(&a) * b.trace();
        assert!(max_abs_diff(&kept, &expected) < 1e-12);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_unitary(5, &mut rng);
        assert!(max_abs_diff(&(u.adjoint() * &u), &identity(5)) < 1e-12);
    }

    #[test]
    fn expm_matches_unitarity_and_small_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_hermitian(4, &mut rng);
        let u = expm_i_hermitian(&h, 1e-7);
        let first_order = identity(4) + &h * C64::new(0.0, 1e-7);
        assert!(max_abs_diff(&u, &first_order) < 1e-12);
        let v = expm_i_hermitian(&h, 0.7);
        assert!(max_abs_diff(&(v.adjoint() * &v), &identity(4)) < 1e-12);
    }

    #[test]
    fn orthonormalize_drops_dependent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_gaussian(3, 3, &mut rng);
        let b = random_gaussian(3, 3, &mut rng);
        let c = &a * C64::new(2.0, 1.0) - &b * C64::new(0.5, 0.0);
        let basis = orthonormalize(&[a, b, c], 1e-10);
        assert_eq!(basis.len(), 2);
        assert!((frob_inner(&basis[0], &basis[1])).norm() < 1e-13);
    }
}
