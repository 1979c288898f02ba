use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::ParamVisitor;
use crate::tensor::Tensor;
use crate::{s, Scalar};

/// `dst(y, x) += scale * src(y + off_y, x + off_x)` over the positions where
/// both sides are in bounds. The workhorse behind convolution forward and
/// backward: one call per (kernel tap, channel pair), with contiguous row
/// slices in the inner loop.
#[allow(clippy::too_many_arguments)]
fn axpy_shifted<T: Scalar>(
    dst: &mut [T],
    dh: usize,
    dw: usize,
    src: &[T],
    sh: usize,
    sw: usize,
    scale: T,
    off_y: isize,
    off_x: isize,
) {
    let y0 = 0isize.max(-off_y);
    let y1 = (dh as isize).min(sh as isize - off_y);
    let x0 = 0isize.max(-off_x);
    let x1 = (dw as isize).min(sw as isize - off_x);
    if y1 <= y0 || x1 <= x0 {
        return;
    }
    let (x0, x1) = (x0 as usize, x1 as usize);
    for y in y0 as usize..y1 as usize {
        let sy = (y as isize + off_y) as usize;
        let sx = (x0 as isize + off_x) as usize;
        let d = &mut dst[y * dw + x0..y * dw + x1];
        let src_row = &src[sy * sw + sx..sy * sw + sx + (x1 - x0)];
        for (dv, &sv) in d.iter_mut().zip(src_row) {
            *dv = *dv + scale * sv;
        }
    }
}

/// `sum over (y, x) of a(y, x) * b(y + off_y, x + off_x)` where both are in
/// bounds; `a` is (ah, aw), `b` is (bh, bw).
#[allow(clippy::too_many_arguments)]
fn dot_shifted<T: Scalar>(
    a: &[T],
    ah: usize,
    aw: usize,
    b: &[T],
    bh: usize,
    bw: usize,
    off_y: isize,
    off_x: isize,
) -> T {
    let y0 = 0isize.max(-off_y);
    let y1 = (ah as isize).min(bh as isize - off_y);
    let x0 = 0isize.max(-off_x);
    let x1 = (aw as isize).min(bw as isize - off_x);
    let mut acc = T::zero();
    if y1 <= y0 || x1 <= x0 {
        return acc;
    }
    let (x0, x1) = (x0 as usize, x1 as usize);
    for y in y0 as usize..y1 as usize {
        let by = (y as isize + off_y) as usize;
        let bx = (x0 as isize + off_x) as usize;
        let ra = &a[y * aw + x0..y * aw + x1];
        let rb = &b[by * bw + bx..by * bw + bx + (x1 - x0)];
        for (&av, &bv) in ra.iter().zip(rb) {
            acc = acc + av * bv;
        }
    }
    acc
}

/// 2D convolution, stride 1, square kernel, zero padding, optional dilation.
/// Weights are laid out `[out_c][in_c][k][k]`.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub pad: usize,
    pub dilation: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
    pub gw: Vec<T>,
    pub gb: Vec<T>,
    x_cache: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// He-uniform weights (limit sqrt(6 / fan_in)), zero biases. Weights are
    /// drawn in layout order from `rng`, in `f64` regardless of `T`.
    pub fn new(in_c: usize, out_c: usize, k: usize, pad: usize, dilation: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(k >= 1 && dilation >= 1);
        let fan_in = (in_c * k * k) as f64;
        let limit = Float::sqrt(6.0 / fan_in);
        let w = (0..out_c * in_c * k * k).map(|_| s(rng.gen_range(-limit..limit))).collect();
        Conv2d {
            in_c,
            out_c,
            k,
            pad,
            dilation,
            w,
            b: vec![T::zero(); out_c],
            gw: vec![T::zero(); out_c * in_c * k * k],
            gb: vec![T::zero(); out_c],
            x_cache: None,
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let span = (self.dilation * (self.k - 1)) as isize;
        let oh = h as isize + 2 * self.pad as isize - span;
        let ow = w as isize + 2 * self.pad as isize - span;
        assert!(oh > 0 && ow > 0, "kernel span exceeds padded input");
        (oh as usize, ow as usize)
    }

    #[inline]
    fn wi(&self, co: usize, ci: usize, ky: usize, kx: usize) -> usize {
        ((co * self.in_c + ci) * self.k + ky) * self.k + kx
    }

    /// Kernel tap offset into the input for tap index `kk` along one axis.
    #[inline]
    fn tap(&self, kk: usize) -> isize {
        (kk * self.dilation) as isize - self.pad as isize
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let (n, c, h, w) = x.shape();
        assert_eq!(c, self.in_c, "conv input channels");
        let (oh, ow) = self.out_dims(h, w);
        let mut out = Tensor::zeros(n, self.out_c, oh, ow);
        for ni in 0..n {
            for co in 0..self.out_c {
                out.plane_mut(ni, co).fill(self.b[co]);
                for ci in 0..self.in_c {
                    let xp = x.plane(ni, ci);
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let wv = self.w[self.wi(co, ci, ky, kx)];
                            axpy_shifted(
                                out.plane_mut(ni, co),
                                oh,
                                ow,
                                xp,
                                h,
                                w,
                                wv,
                                self.tap(ky),
                                self.tap(kx),
                            );
                        }
                    }
                }
            }
        }
        if train {
            self.x_cache = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let x = self.x_cache.take().expect("conv backward without cached forward");
        let (n, _, h, w) = x.shape();
        let (gn, gc, oh, ow) = grad_out.shape();
        assert_eq!((gn, gc), (n, self.out_c), "conv grad shape");

        self.gw.fill(T::zero());
        self.gb.fill(T::zero());
        let mut dx = Tensor::zeros(n, self.in_c, h, w);

        for ni in 0..n {
            for co in 0..self.out_c {
                let gp = grad_out.plane(ni, co);
                self.gb[co] = gp.iter().fold(self.gb[co], |acc, &v| acc + v);
                for ci in 0..self.in_c {
                    let xp = x.plane(ni, ci);
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let idx = self.wi(co, ci, ky, kx);
                            let d = dot_shifted(gp, oh, ow, xp, h, w, self.tap(ky), self.tap(kx));
                            self.gw[idx] = self.gw[idx] + d;
                        }
                    }
                }
            }
            for ci in 0..self.in_c {
                for co in 0..self.out_c {
                    let gp = grad_out.plane(ni, co);
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let wv = self.w[self.wi(co, ci, ky, kx)];
                            axpy_shifted(
                                dx.plane_mut(ni, ci),
                                h,
                                w,
                                gp,
                                oh,
                                ow,
                                wv,
                                -self.tap(ky),
                                -self.tap(kx),
                            );
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(
            &format!("{prefix}.w"),
            &[self.out_c, self.in_c, self.k, self.k],
            &mut self.w,
            &mut self.gw,
        );
        f(&format!("{prefix}.b"), &[self.out_c], &mut self.b, &mut self.gb);
    }

    pub fn param_count(in_c: usize, out_c: usize, k: usize) -> usize {
        out_c * in_c * k * k + out_c
    }
}
