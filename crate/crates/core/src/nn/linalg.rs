//! Flat row-major matrix kernels. Everything in the engine reduces to these.

use super::tensor::Real;

/// C (m×n) += A (m×k) · B (k×n).
///
/// Four-row blocking streams each row of B once per four rows of A, which is
/// enough for the autovectorizer to keep the FMA units busy at desk sizes.
pub fn matmul_acc<S: Real>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut i = 0;
    while i + 4 <= m {
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let a2 = &a[(i + 2) * k..(i + 3) * k];
        let a3 = &a[(i + 3) * k..(i + 4) * k];
        let (c01, c23) = c[i * n..(i + 4) * n].split_at_mut(2 * n);
        let (c0, c1) = c01.split_at_mut(n);
        let (c2, c3) = c23.split_at_mut(n);
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let (v0, v1, v2, v3) = (a0[p], a1[p], a2[p], a3[p]);
            for j in 0..n {
                let bv = b_row[j];
                c0[j] += v0 * bv;
                c1[j] += v1 * bv;
                c2[j] += v2 * bv;
                c3[j] += v3 * bv;
            }
        }
        i += 4;
    }
    while i < m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
        i += 1;
    }
}

/// C (m×n) = A (m×k) · B (k×n), overwriting C.
pub fn matmul<S: Real>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    c.fill(S::zero());
    matmul_acc(a, b, c, m, k, n);
}

/// Transpose an (m×n) matrix into (n×m).
pub fn transpose<S: Real>(a: &[S], m: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * n);
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}
