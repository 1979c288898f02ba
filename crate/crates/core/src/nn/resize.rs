use num_traits::Float;
use alloc::vec::Vec;

use crate::tensor::Tensor;
use crate::{s, Scalar};

/// Per-axis sampling plan: source index pair and interpolation fraction for
/// each destination index, using half-pixel centers clamped at the border.
fn axis_plan(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let i0 = Float::floor(src) as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling to an arbitrary target size (used for the 2x decoder
/// upsampling and for lifting side outputs to input resolution). Resizing to
/// the source size is an exact copy.
pub fn bilinear_resize<T: Scalar>(x: &Tensor<T>, oh: usize, ow: usize) -> Tensor<T> {
    let (n, c, h, w) = x.shape();
    assert!(oh >= 1 && ow >= 1);
    let ys = axis_plan(oh, h);
    let xs = axis_plan(ow, w);
    let mut out = Tensor::zeros(n, c, oh, ow);
    for ni in 0..n {
        for ci in 0..c {
            let xp = x.plane(ni, ci);
            let op = out.plane_mut(ni, ci);
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                let wy1 = s::<T>(fy);
                let wy0 = T::one() - wy1;
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let wx1 = s::<T>(fx);
                    let wx0 = T::one() - wx1;
                    op[oy * ow + ox] = wy0 * (wx0 * xp[y0 * w + x0] + wx1 * xp[y0 * w + x1])
                        + wy1 * (wx0 * xp[y1 * w + x0] + wx1 * xp[y1 * w + x1]);
                }
            }
        }
    }
    out
}

/// Adjoint of `bilinear_resize`: scatters the output gradient back onto a
/// (ih, iw) input gradient with the same interpolation weights.
pub fn bilinear_resize_back<T: Scalar>(grad_out: &Tensor<T>, ih: usize, iw: usize) -> Tensor<T> {
    let (n, c, oh, ow) = grad_out.shape();
    let ys = axis_plan(oh, ih);
    let xs = axis_plan(ow, iw);
    let mut dx = Tensor::zeros(n, c, ih, iw);
    for ni in 0..n {
        for ci in 0..c {
            let gp = grad_out.plane(ni, ci);
            let dp = dx.plane_mut(ni, ci);
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                let wy1 = s::<T>(fy);
                let wy0 = T::one() - wy1;
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let g = gp[oy * ow + ox];
                    let wx1 = s::<T>(fx);
                    let wx0 = T::one() - wx1;
                    dp[y0 * iw + x0] = dp[y0 * iw + x0] + wy0 * wx0 * g;
                    dp[y0 * iw + x1] = dp[y0 * iw + x1] + wy0 * wx1 * g;
                    dp[y1 * iw + x0] = dp[y1 * iw + x0] + wy1 * wx0 * g;
                    dp[y1 * iw + x1] = dp[y1 * iw + x1] + wy1 * wx1 * g;
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_tensor, rng};

    #[test]
    fn same_size_is_exact_copy() {
        let mut r = rng(41);
        let x = random_tensor(&mut r, 1, 2, 5, 7);
        let y = bilinear_resize(&x, 5, 7);
        assert_eq!(x, y);
    }

    #[test]
    fn constant_field_stays_constant_under_upsampling() {
        let x = Tensor::from_vec(1, 1, 3, 3, alloc::vec![2.5; 9]).unwrap();
        let y = bilinear_resize(&x, 6, 6);
        assert!(y.data().iter().all(|&v| (v - 2.5f64).abs() < 1e-12));
    }

    #[test]
    fn doubling_interpolates_midpoints() {
        let x = Tensor::from_vec(1, 1, 1, 2, alloc::vec![0.0, 1.0]).unwrap();
        let y = bilinear_resize(&x, 1, 4);
        // centers at src -0.25, 0.25, 0.75, 1.25 -> clamped ends
        assert_eq!(y.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn values_stay_within_input_range() {
        let mut r = rng(43);
        let x = random_tensor(&mut r, 1, 1, 6, 6);
        let lo = x.data().iter().cloned().fold(f64::MAX, f64::min);
        let hi = x.data().iter().cloned().fold(f64::MIN, f64::max);
        for &(oh, ow) in &[(12, 12), (9, 5), (48, 48), (3, 3)] {
            let y = bilinear_resize(&x, oh, ow);
            assert!(y.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }
    }

    #[test]
    fn backward_is_the_exact_adjoint() {
        let mut r = rng(47);
        for &(ih, iw, oh, ow) in &[(5usize, 7usize, 11usize, 4usize), (4, 4, 8, 8), (8, 6, 8, 6)] {
            let x = random_tensor(&mut r, 2, 2, ih, iw);
            let m = random_tensor(&mut r, 2, 2, oh, ow);
            let y = bilinear_resize(&x, oh, ow);
            let lhs: f64 = y.data().iter().zip(m.data()).map(|(a, b)| a * b).sum();
            let back = bilinear_resize_back(&m, ih, iw);
            let rhs: f64 = x.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12, "adjoint identity violated: {lhs} vs {rhs}");
        }
    }
}
