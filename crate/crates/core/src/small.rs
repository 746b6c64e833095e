//! Flat row-major kernels for many tiny `d × d` products in solver loops.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{CMat, C64, ZERO};

pub(crate) fn to_flat(m: &CMat) -> Vec<C64> {
    let d = m.nrows();
    (0..d * d).map(|i| m[(i / d, i % d)]).collect()
}

pub(crate) fn from_flat(d: usize, v: &[C64]) -> CMat {
    CMat::from_fn(d, d, |i, j| v[i * d + j])
}

/// `out = a b − b a`.
pub(crate) fn comm(a: &[C64], b: &[C64], d: usize, out: &mut [C64]) {
    for i in 0..d {
        for j in 0..d {
            let mut s = ZERO;
            for k in 0..d {
                s += a[i * d + k] * b[k * d + j] - b[i * d + k] * a[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
}

pub(crate) fn adjoint(a: &[C64], d: usize) -> Vec<C64> {
    (0..d * d).map(|i| a[(i % d) * d + i / d].conj()).collect()
}

pub(crate) fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Accumulates the Gauss–Newton blocks of one complex residual block with
/// respect to real parameters: `JᵀJ += Re(C† C)`, `Jᵀr += Re(C† r)`.
/// `cols` holds `idx.len()` columns of length `r.len()` back to back.
pub(crate) fn accumulate(jtj: &mut DMatrix<f64>, jtr: &mut DVector<f64>, r: &[C64], idx: &[usize], cols: &[C64]) {
    let m = r.len();
    for (a, &ia) in idx.iter().enumerate() {
        let ca = &cols[a * m..(a + 1) * m];
        let mut g = 0.0;
        for t in 0..m {
            g += ca[t].re * r[t].re + ca[t].im * r[t].im;
        }
        jtr[ia] += g;
        for (b, &ib) in idx.iter().enumerate().skip(a) {
            let cb = &cols[b * m..(b + 1) * m];
            let mut s = 0.0;
            for t in 0..m {
                s += ca[t].re * cb[t].re + ca[t].im * cb[t].im;
            }
            jtj[(ia, ib)] += s;
            if ia != ib {
                jtj[(ib, ia)] += s;
            }
        }
    }
}
