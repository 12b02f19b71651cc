//! Row-major dense kernels used by the layer implementations.
//!
//! All kernels accumulate into `c` and visit the shared dimension in
//! increasing order, so every output element has a fixed summation order.
//! The innermost loops are contiguous AXPYs, which the compiler vectorizes
//! without reassociating any sum.

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

const MR: usize = 4;
const NR: usize = 8;

/// Register tile: `c[r0+r][j0+q] += Σ_s lhs(s, r) · rhs(s)[q]` over `s` in increasing order.
/// A step whose `lhs` values are all zero is skipped.
#[inline(always)]
fn tile<'a>(
    c: &mut [f64],
    ldc: usize,
    r0: usize,
    j0: usize,
    steps: usize,
    lhs: impl Fn(usize) -> [f64; MR],
    rhs: impl Fn(usize) -> &'a [f64],
) {
    let mut acc = [[0.0; NR]; MR];
    for (r, row) in acc.iter_mut().enumerate() {
        row.copy_from_slice(&c[(r0 + r) * ldc + j0..(r0 + r) * ldc + j0 + NR]);
    }
    for s in 0..steps {
        let av = lhs(s);
        if av == [0.0; MR] {
            continue;
        }
        let bv: &[f64; NR] = rhs(s)[..NR].try_into().unwrap();
        for r in 0..MR {
            for q in 0..NR {
                acc[r][q] += av[r] * bv[q];
            }
        }
    }
    for (r, row) in acc.iter().enumerate() {
        c[(r0 + r) * ldc + j0..(r0 + r) * ldc + j0 + NR].copy_from_slice(row);
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`. Zero entries of `a` contribute nothing.
pub fn gemm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (mb, nb) = (m - m % MR, n - n % NR);
    for i in (0..mb).step_by(MR) {
        for j in (0..nb).step_by(NR) {
            tile(
                c,
                n,
                i,
                j,
                k,
                |s| std::array::from_fn(|r| a[(i + r) * k + s]),
                |s| &b[s * n + j..],
            );
        }
    }
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let (lo, hi) = if i < mb { (nb, n) } else { (0, n) };
        if lo == hi {
            continue;
        }
        let crow = &mut c[i * n + lo..i * n + hi];
        for (kk, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                axpy(av, &b[kk * n + lo..kk * n + hi], crow);
            }
        }
    }
}

/// `c[k×n] += aᵀ · b` for `a[m×k]`, `b[m×n]`.
pub fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    let (kb, nb) = (k - k % MR, n - n % NR);
    for r in (0..kb).step_by(MR) {
        for j in (0..nb).step_by(NR) {
            tile(
                c,
                n,
                r,
                j,
                m,
                |s| a[s * k + r..s * k + r + MR].try_into().unwrap(),
                |s| &b[s * n + j..],
            );
        }
    }
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            let lo = if kk < kb { nb } else { 0 };
            if av != 0.0 && lo < n {
                axpy(av, &brow[lo..], &mut c[kk * n + lo..(kk + 1) * n]);
            }
        }
    }
}

/// `c[m×k] += a[m×n] · bᵀ` for `b[k×n]`; `bt` is scratch space of length `n·k`.
pub fn gemm_nt(
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
    m: usize,
    n: usize,
    k: usize,
    bt: &mut Vec<f64>,
) {
    transpose_into(b, k, n, bt);
    gemm(a, bt, c, m, n, k);
}

/// Writes the transpose of the `rows×cols` matrix `src` into `dst`.
pub fn transpose_into(src: &[f64], rows: usize, cols: usize, dst: &mut Vec<f64>) {
    dst.clear();
    dst.resize(rows * cols, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise numerically stable softmax of a `rows×cols` matrix, in place.
pub fn softmax_rows(x: &mut [f64], cols: usize) {
    for row in x.chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    c[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn kernels_match_naive_order_exactly() {
        for &(m, k, n) in &[(3, 4, 5), (8, 9, 16), (13, 7, 21), (4, 8, 8), (1, 1, 1)] {
            let a: Vec<f64> = (0..m * k)
                .map(|i| {
                    if i % 3 == 0 {
                        0.0
                    } else {
                        (i as f64 * 0.37).sin()
                    }
                })
                .collect();
            let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
            let c0: Vec<f64> = (0..m * n).map(|i| i as f64 * 0.01).collect();
            let mut want = naive(&a, &b, m, k, n);
            want.iter_mut().zip(&c0).for_each(|(w, c)| *w += c);
            let mut want_exact = c0.clone();
            for i in 0..m {
                for j in 0..n {
                    for kk in 0..k {
                        want_exact[i * n + j] += a[i * k + kk] * b[kk * n + j];
                    }
                }
            }

            let mut c = c0.clone();
            gemm(&a, &b, &mut c, m, k, n);
            assert_eq!(c, want_exact);

            let mut at = Vec::new();
            transpose_into(&a, m, k, &mut at);
            let mut c2 = c0.clone();
            gemm_tn(&at, &b, &mut c2, k, m, n);
            assert_eq!(c2, want_exact);

            let mut bt = Vec::new();
            transpose_into(&b, k, n, &mut bt);
            let mut c3 = c0.clone();
            let mut scratch = Vec::new();
            gemm_nt(&a, &bt, &mut c3, m, k, n, &mut scratch);
            assert_eq!(c3, want_exact);
            assert!(want.iter().zip(&c3).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn softmax_and_argmax() {
        let mut x = vec![0.0, 0.0, 0.0, 0.0, 1000.0, 1000.0];
        softmax_rows(&mut x, 2);
        assert_eq!(x, vec![0.5; 6]);
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
        assert!((sigmoid(-800.0)).is_finite());
    }
}
