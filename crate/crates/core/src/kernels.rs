//! Deterministic local BLAS-1 and SpMV kernels. Every multiply-add is an
//! explicit fma and every vector is traversed exactly once, so outputs are
//! bit-identical for identical inputs regardless of how rows are split
//! across ranks.

use crate::eft::fma_op;
use crate::sparsemat::CsrMatrix;

/// SpMV over a block of rows against the replicated vector `e`: each row is
/// a strictly sequential fma chain in canonical column order.
pub fn spmv_local(matrix: &CsrMatrix, rows: std::ops::Range<usize>, e: &[f64]) -> Vec<f64> {
    assert_eq!(e.len(), matrix.n(), "operand vector must be replicated at full length");
    rows.map(|i| {
        let mut acc = 0.0;
        for (c, v) in matrix.row(i) {
            acc = fma_op(v, e[c], acc);
        }
        acc
    })
    .collect()
}

/// Full SpMV as the concatenation of per-row fma chains. Identical to
/// gathering `spmv_local` over any block-row partition.
pub fn spmv(matrix: &CsrMatrix, e: &[f64]) -> Vec<f64> {
    spmv_local(matrix, 0..matrix.n(), e)
}

/// `y[i] := fma(alpha, x[i], y[i])` — one rounding per element.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = fma_op(alpha, xi, *yi);
    }
}

/// `z[i] := fma(alpha, y[i], x[i])`, i.e. `z = x + alpha*y` — one rounding
/// per element. Callers negate `alpha` for subtraction forms.
pub fn axpylike(alpha: f64, x: &[f64], y: &[f64], z: &mut [f64]) {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), z.len());
    for ((zi, &xi), &yi) in z.iter_mut().zip(x).zip(y) {
        *zi = fma_op(alpha, yi, xi);
    }
}

/// `w[i] := fma(beta, fma(-omega, s[i], p[i]), r[i])`, i.e.
/// `w = r + beta*(p - omega*s)` with exactly two roundings per element in
/// this fixed order.
pub fn axpy2like(beta: f64, omega: f64, r: &[f64], p: &[f64], s: &[f64], w: &mut [f64]) {
    assert_eq!(r.len(), p.len());
    assert_eq!(r.len(), s.len());
    assert_eq!(r.len(), w.len());
    for i in 0..r.len() {
        let t = fma_op(-omega, s[i], p[i]);
        w[i] = fma_op(beta, t, r[i]);
    }
}

/// Element-wise product `d[i] * v[i]` (Jacobi application).
pub fn ewmul(d: &[f64], v: &[f64]) -> Vec<f64> {
    assert_eq!(d.len(), v.len());
    d.iter().zip(v).map(|(&a, &b)| a * b).collect()
}

/// In-place scaling `v[i] := c * v[i]` (postponed `1/sqrt(N)` scaling).
pub fn scale(c: f64, v: &mut [f64]) {
    for x in v {
        *x *= c;
    }
}
