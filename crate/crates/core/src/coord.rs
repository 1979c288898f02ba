//! Coordinate channels: explicit row/column index planes appended to the
//! network input so convolutions regain access to absolute position.

use crate::tensor::Tensor;
use crate::{s, Scalar};

/// Literal integer index planes: `ci[r][c] = r`, `cj[r][c] = c`.
pub fn coord_channels<T: Scalar>(h: usize, w: usize) -> (Tensor<T>, Tensor<T>) {
    assert!(h >= 1 && w >= 1, "coordinate planes need at least one pixel");
    let mut ci = Tensor::zeros(1, 1, h, w);
    let mut cj = Tensor::zeros(1, 1, h, w);
    for r in 0..h {
        for c in 0..w {
            ci.set(0, 0, r, c, s(r as f64));
            cj.set(0, 0, r, c, s(c as f64));
        }
    }
    (ci, cj)
}

/// Index `r` of `len` mapped affinely onto [-1, 1]; a single-element axis
/// maps to 0.
#[inline]
fn normalized<T: Scalar>(r: usize, len: usize) -> T {
    if len <= 1 {
        T::zero()
    } else {
        s(2.0 * r as f64 / (len as f64 - 1.0) - 1.0)
    }
}

/// Append the two coordinate planes as extra channels after the existing
/// ones, identically for every batch item. With `normalize` the indices are
/// mapped to [-1, 1], which keeps their scale commensurate with the unit
/// input range.
pub fn append_coords<T: Scalar>(x: &Tensor<T>, normalize: bool) -> Tensor<T> {
    let (n, c, h, w) = x.shape();
    let mut out = Tensor::zeros(n, c + 2, h, w);
    for ni in 0..n {
        for ci in 0..c {
            out.plane_mut(ni, ci).copy_from_slice(x.plane(ni, ci));
        }
        for r in 0..h {
            for col in 0..w {
                let (vi, vj) = if normalize {
                    (normalized(r, h), normalized(col, w))
                } else {
                    (s(r as f64), s(col as f64))
                };
                out.set(ni, c, r, col, vi);
                out.set(ni, c + 1, r, col, vj);
            }
        }
    }
    out
}
