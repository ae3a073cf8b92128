//! Strided matrix products on top of `matrixmultiply`.

use super::Scalar;

/// Row and column strides of a matrix view.
#[derive(Clone, Copy, Debug)]
pub struct Layout {
    pub rs: usize,
    pub cs: usize,
}

impl Layout {
    pub fn row_major(cols: usize) -> Self {
        Self { rs: cols, cs: 1 }
    }

    /// The transpose of a row-major `[cols, rows]` buffer.
    pub fn transposed(cols: usize) -> Self {
        Self { rs: 1, cs: cols }
    }

    fn span(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * self.rs + (cols - 1) * self.cs + 1
        }
    }
}

/// `c = a b + beta c` for `a: [m, k]`, `b: [k, n]`, `c: [m, n]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    la: Layout,
    b: &[T],
    lb: Layout,
    beta: T,
    c: &mut [T],
    lc: Layout,
) {
    assert!(a.len() >= la.span(m, k), "gemm: lhs view out of bounds");
    assert!(b.len() >= lb.span(k, n), "gemm: rhs view out of bounds");
    assert!(c.len() >= lc.span(m, n), "gemm: output view out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c[i * lc.rs + j * lc.cs];
                *v = *v * beta;
            }
        }
        return;
    }
    T::gemm_checked(m, k, n, a, la, b, lb, beta, c, lc)
}

/// Runs `dgemm` on views already checked to be in bounds.
#[allow(clippy::too_many_arguments)]
fn dgemm_views(m: usize, k: usize, n: usize, a: &[f64], la: Layout, b: &[f64], lb: Layout, beta: f64, c: &mut [f64], lc: Layout) {
    // SAFETY: callers bound-check every strided view, and `c` is borrowed
    // mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            la.rs as isize,
            la.cs as isize,
            b.as_ptr(),
            lb.rs as isize,
            lb.cs as isize,
            beta,
            c.as_mut_ptr(),
            lc.rs as isize,
            lc.cs as isize,
        )
    }
}

/// Products always accumulate in f64; f32 operands are widened first.
pub trait GemmKernel: Sized {
    #[allow(clippy::too_many_arguments)]
    #[doc(hidden)]
    fn gemm_checked(m: usize, k: usize, n: usize, a: &[Self], la: Layout, b: &[Self], lb: Layout, beta: Self, c: &mut [Self], lc: Layout);
}

impl GemmKernel for f64 {
    fn gemm_checked(m: usize, k: usize, n: usize, a: &[f64], la: Layout, b: &[f64], lb: Layout, beta: f64, c: &mut [f64], lc: Layout) {
        dgemm_views(m, k, n, a, la, b, lb, beta, c, lc)
    }
}

impl GemmKernel for f32 {
    fn gemm_checked(m: usize, k: usize, n: usize, a: &[f32], la: Layout, b: &[f32], lb: Layout, beta: f32, c: &mut [f32], lc: Layout) {
        let widen = |src: &[f32], l: Layout, rows: usize, cols: usize| -> Vec<f64> {
            let mut out = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                out.extend((0..cols).map(|j| src[i * l.rs + j * l.cs] as f64));
            }
            out
        };
        let wa = widen(a, la, m, k);
        let wb = widen(b, lb, k, n);
        let mut wc = if beta == 0.0 { vec![0.0; m * n] } else { widen(c, lc, m, n) };
        dgemm_views(m, k, n, &wa, Layout::row_major(k), &wb, Layout::row_major(n), beta as f64, &mut wc, Layout::row_major(n));
        for i in 0..m {
            for j in 0..n {
                c[i * lc.rs + j * lc.cs] = wc[i * n + j] as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_views_match_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.7).sin()).collect();
        let bt: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut c = vec![1.0; m * n];
        gemm(m, k, n, &a, Layout::row_major(k), &bt, Layout::transposed(k), 2.0, &mut c, Layout::row_major(n));
        for i in 0..m {
            for j in 0..n {
                let s: f64 = (0..k).map(|p| a[i * k + p] * bt[j * k + p]).sum();
                assert!((c[i * n + j] - (s + 2.0)).abs() < 1e-12);
            }
        }
    }
}
