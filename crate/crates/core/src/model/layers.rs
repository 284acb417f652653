//! Dense, temporal convolution and pooling primitives with their backward
//! passes. Activations are `frames x channels`, row-major.

use ndarray::{s, Array2, ArrayView2, Axis};

use super::{Affine, Scalar};

/// `x . W + b`.
pub(crate) fn affine<T: Scalar>(x: ArrayView2<T>, p: &Affine<T>) -> Array2<T> {
    let mut y = x.dot(&p.w);
    y += &p.b;
    y
}

/// Accumulates `dW` and `db` into `grad`; returns `dx` when asked.
pub(crate) fn affine_backward<T: Scalar>(
    x: ArrayView2<T>,
    p: &Affine<T>,
    dy: ArrayView2<T>,
    grad: &mut Affine<T>,
    need_dx: bool,
) -> Option<Array2<T>> {
    grad.w += &x.t().dot(&dy);
    grad.b += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    need_dx.then(|| dy.dot(&p.w.t()))
}

/// Left zero-padding for a same-length convolution of width `k`.
fn pad_left(k: usize) -> usize {
    (k - 1) / 2
}

/// Unfolds `x` (`T x cin`) into `T x (k * cin)`; row `t` holds frames
/// `t - pad .. t - pad + k`, zeros outside the sequence.
pub(crate) fn im2col<T: Scalar>(x: ArrayView2<T>, k: usize) -> Array2<T> {
    let (len, cin) = x.dim();
    let pl = pad_left(k) as isize;
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let mut col = vec![T::zero(); len * k * cin];
    for t in 0..len {
        let row = &mut col[t * k * cin..(t + 1) * k * cin];
        for j in 0..k {
            let f = t as isize + j as isize - pl;
            if f >= 0 && (f as usize) < len {
                let f = f as usize;
                row[j * cin..(j + 1) * cin].copy_from_slice(&src[f * cin..(f + 1) * cin]);
            }
        }
    }
    Array2::from_shape_vec((len, k * cin), col).expect("sized above")
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im<T: Scalar>(dcol: ArrayView2<T>, k: usize, cin: usize) -> Array2<T> {
    let len = dcol.nrows();
    let pl = pad_left(k) as isize;
    let dcol = dcol.as_standard_layout();
    let src = dcol.as_slice().expect("standard layout");
    let mut dx = vec![T::zero(); len * cin];
    for t in 0..len {
        let row = &src[t * k * cin..(t + 1) * k * cin];
        for j in 0..k {
            let f = t as isize + j as isize - pl;
            if f >= 0 && (f as usize) < len {
                let f = f as usize;
                for (d, &g) in dx[f * cin..(f + 1) * cin].iter_mut().zip(&row[j * cin..(j + 1) * cin]) {
                    *d += g;
                }
            }
        }
    }
    Array2::from_shape_vec((len, cin), dx).expect("sized above")
}

pub(crate) fn relu_inplace<T: Scalar>(x: &mut Array2<T>) {
    x.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Masks `dy` where the forward output `y` was clipped to zero.
pub(crate) fn relu_backward<T: Scalar>(dy: &mut Array2<T>, y: ArrayView2<T>) {
    dy.zip_mut_with(&y, |d, &v| {
        if v <= T::zero() {
            *d = T::zero();
        }
    });
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Output length of [`maxpool`].
pub(crate) fn pooled_len(len: usize) -> usize {
    if len == 0 {
        0
    } else {
        (len - 1) / 2 + 1
    }
}

/// Temporal max-pooling, window 3, stride 2, one frame of padding on each
/// side (padding never wins). Returns the pooled map and the source frame
/// of every maximum.
pub(crate) fn maxpool<T: Scalar>(x: ArrayView2<T>) -> (Array2<T>, Array2<usize>) {
    let (len, ch) = x.dim();
    let out_len = pooled_len(len);
    let mut out = Array2::zeros((out_len, ch));
    let mut idx = Array2::zeros((out_len, ch));
    for t in 0..out_len {
        let center = 2 * t;
        let lo = center.saturating_sub(1);
        let hi = (center + 1).min(len - 1);
        for c in 0..ch {
            let mut best = lo;
            for f in lo + 1..=hi {
                if x[[f, c]] > x[[best, c]] {
                    best = f;
                }
            }
            out[[t, c]] = x[[best, c]];
            idx[[t, c]] = best;
        }
    }
    (out, idx)
}

pub(crate) fn maxpool_backward<T: Scalar>(dy: ArrayView2<T>, idx: &Array2<usize>, in_len: usize) -> Array2<T> {
    let ch = dy.ncols();
    let mut dx = Array2::zeros((in_len, ch));
    for ((t, c), &g) in dy.indexed_iter() {
        dx[[idx[[t, c]], c]] += g;
    }
    dx
}

/// Concatenates column blocks.
pub(crate) fn hstack<T: Scalar>(blocks: &[ArrayView2<T>]) -> Array2<T> {
    let rows = blocks[0].nrows();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Array2::zeros((rows, cols));
    let mut at = 0;
    for b in blocks {
        out.slice_mut(s![.., at..at + b.ncols()]).assign(b);
        at += b.ncols();
    }
    out
}
