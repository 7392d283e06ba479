//! Fixed-order dense kernels.
//!
//! Every output element accumulates its terms in ascending index order.
//! The inner loops run along contiguous output rows, so the compiler can
//! vectorize them without reassociating any sum.

use super::Scalar;

/// `c[m×n] += a[m×k] · b[k×n]`, each `c[i][j]` accumulated over `k` ascending.
pub fn gemm_acc<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut i = 0;
    while i + 2 <= m {
        let (c0, c1) = c[i * n..(i + 2) * n].split_at_mut(n);
        let (a0, a1) = (&a[i * k..(i + 1) * k], &a[(i + 1) * k..(i + 2) * k]);
        let mut kk = 0;
        while kk + 4 <= k {
            let rows = [&b[kk * n..(kk + 1) * n], &b[(kk + 1) * n..(kk + 2) * n], &b[(kk + 2) * n..(kk + 3) * n], &b[(kk + 3) * n..(kk + 4) * n]];
            axpy4x2([c0, &mut *c1], [&a0[kk..kk + 4], &a1[kk..kk + 4]], rows);
            kk += 4;
        }
        for kk in kk..k {
            axpy(c0, a0[kk], &b[kk * n..(kk + 1) * n]);
            axpy(c1, a1[kk], &b[kk * n..(kk + 1) * n]);
        }
        i += 2;
    }
    if i < m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        let mut kk = 0;
        while kk + 4 <= k {
            let rows = [&b[kk * n..(kk + 1) * n], &b[(kk + 1) * n..(kk + 2) * n], &b[(kk + 2) * n..(kk + 3) * n], &b[(kk + 3) * n..(kk + 4) * n]];
            axpy4(c_row, &a_row[kk..kk + 4], rows);
            kk += 4;
        }
        for kk in kk..k {
            axpy(c_row, a_row[kk], &b[kk * n..(kk + 1) * n]);
        }
    }
}

/// `c[k×n] += aᵀ · b` where `a` is `m×k` and `b` is `m×n`; accumulation over `m` ascending.
pub fn gemm_tn_acc<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), k * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    let mut i = 0;
    while i + 4 <= m {
        let rows = [&b[i * n..(i + 1) * n], &b[(i + 1) * n..(i + 2) * n], &b[(i + 2) * n..(i + 3) * n], &b[(i + 3) * n..(i + 4) * n]];
        for kk in 0..k {
            let coef = [a[i * k + kk], a[(i + 1) * k + kk], a[(i + 2) * k + kk], a[(i + 3) * k + kk]];
            axpy4(&mut c[kk * n..(kk + 1) * n], &coef, rows);
        }
        i += 4;
    }
    for i in i..m {
        let b_row = &b[i * n..(i + 1) * n];
        for kk in 0..k {
            axpy(&mut c[kk * n..(kk + 1) * n], a[i * k + kk], b_row);
        }
    }
}

#[inline]
fn axpy<T: Scalar>(c: &mut [T], a: T, b: &[T]) {
    for (cv, &bv) in c.iter_mut().zip(b) {
        *cv += a * bv;
    }
}

/// Four sequential `axpy`s fused so `c` stays in registers; the rounding
/// sequence per element is unchanged.
/// `axpy4` on two output rows sharing the same four `b` rows.
#[inline]
fn axpy4x2<T: Scalar>(c: [&mut [T]; 2], a: [&[T]; 2], b: [&[T]; 4]) {
    let [c0, c1] = c;
    let n = c0.len();
    let c1 = &mut c1[..n];
    let (x0, x1, x2, x3) = (a[0][0], a[0][1], a[0][2], a[0][3]);
    let (y0, y1, y2, y3) = (a[1][0], a[1][1], a[1][2], a[1][3]);
    let (b0, b1, b2, b3) = (&b[0][..n], &b[1][..n], &b[2][..n], &b[3][..n]);
    for j in 0..n {
        let (p0, p1, p2, p3) = (b0[j], b1[j], b2[j], b3[j]);
        let mut u = c0[j];
        let mut v = c1[j];
        u += x0 * p0;
        v += y0 * p0;
        u += x1 * p1;
        v += y1 * p1;
        u += x2 * p2;
        v += y2 * p2;
        u += x3 * p3;
        v += y3 * p3;
        c0[j] = u;
        c1[j] = v;
    }
}

#[inline]
fn axpy4<T: Scalar>(c: &mut [T], a: &[T], b: [&[T]; 4]) {
    let (a0, a1, a2, a3) = (a[0], a[1], a[2], a[3]);
    let n = c.len();
    let (b0, b1, b2, b3) = (&b[0][..n], &b[1][..n], &b[2][..n], &b[3][..n]);
    for j in 0..n {
        let mut v = c[j];
        v += a0 * b0[j];
        v += a1 * b1[j];
        v += a2 * b2[j];
        v += a3 * b3[j];
        c[j] = v;
    }
}

/// `c[m×k] += a[m×n] · bᵀ` where `b` is `k×n`.
pub fn gemm_nt_acc<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, n: usize, k: usize) {
    let bt = transpose(b, k, n);
    gemm_acc(c, a, &bt, m, n, k);
}

pub fn transpose<T: Scalar>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    const B: usize = 16;
    let mut out = vec![T::zero(); rows * cols];
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    out[c * rows + r] = x[r * cols + c];
                }
            }
        }
    }
    out
}

/// Sequential dot product.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    out[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn variants_agree_with_naive_triple_loop() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|v| (v as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|v| (v as f64 * 0.11).cos()).collect();
        let expect = naive(&a, &b, m, k, n);

        let mut c = vec![0.0; m * n];
        gemm_acc(&mut c, &a, &b, m, k, n);
        assert_eq!(c, expect);

        // aᵀ stored as k×m, then (aᵀ)ᵀ·b via gemm_tn
        let at = transpose(&a, m, k);
        let mut c2 = vec![0.0; m * n];
        gemm_tn_acc(&mut c2, &at, &b, k, m, n);
        assert_eq!(c2, expect);

        let bt = transpose(&b, k, n);
        let mut c3 = vec![0.0; m * n];
        gemm_nt_acc(&mut c3, &a, &bt, m, k, n);
        assert_eq!(c3, expect);
    }
}
