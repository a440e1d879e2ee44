//! Raw slice kernels shared by the forward and adjoint passes.

use crate::scalar::Scalar;

/// `out[m×n] += a[m×k] · b[k×n]`
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += g[m×n] · b[k×n]ᵀ`
pub fn matmul_nt_acc<T: Scalar>(g: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            out[i * k + p] += dot(g_row, b_row);
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · g[m×n]`
pub fn matmul_tn_acc<T: Scalar>(a: &[T], g: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// In-place stabilized softmax of one row; entries with `keep == false` become exactly 0.
///
/// Returns `false` if every entry is masked.
pub fn softmax_row<T: Scalar>(row: &mut [T], keep: Option<&[bool]>) -> bool {
    let allowed = |j: usize| keep.map_or(true, |k| k[j]);
    let mut max = T::neg_infinity();
    for (j, &x) in row.iter().enumerate() {
        if allowed(j) && x > max {
            max = x;
        }
    }
    if max == T::neg_infinity() {
        return false;
    }
    let mut total = T::zero();
    for (j, x) in row.iter_mut().enumerate() {
        if allowed(j) {
            *x = (*x - max).exp();
            total += *x;
        } else {
            *x = T::zero();
        }
    }
    for x in row.iter_mut() {
        *x /= total;
    }
    true
}

/// Adjoint of softmax for one row: `dx = y ⊙ (dy − ⟨y, dy⟩)`.
pub fn softmax_row_adjoint<T: Scalar>(y: &[T], dy: &[T], dx: &mut [T]) {
    let inner = dot(y, dy);
    for ((d, &yv), &g) in dx.iter_mut().zip(y).zip(dy) {
        *d += yv * (g - inner);
    }
}
