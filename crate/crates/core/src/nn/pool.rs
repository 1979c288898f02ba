use alloc::vec::Vec;

use crate::tensor::Tensor;
use crate::Scalar;

/// 2x2 max pooling, stride 2. Input spatial dims must be even; ties take the
/// first element in scan order, which keeps the backward pass deterministic.
/// Input shape and the flat argmax index of each pooled cell.
type PoolCache = ((usize, usize, usize, usize), Vec<usize>);

#[derive(Debug, Clone)]
pub struct MaxPool2x2 {
    cache: Option<PoolCache>,
}

impl MaxPool2x2 {
    pub fn new() -> Self {
        MaxPool2x2 { cache: None }
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let (n, c, h, w) = x.shape();
        assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even spatial dims, got {h}x{w}");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros(n, c, oh, ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for ni in 0..n {
            for ci in 0..c {
                let xp = x.plane(ni, ci);
                let op = out.plane_mut(ni, ci);
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut best_idx = 2 * y * w + 2 * xx;
                        let mut best = xp[best_idx];
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = (2 * y + dy) * w + 2 * xx + dx;
                            if xp[idx] > best {
                                best = xp[idx];
                                best_idx = idx;
                            }
                        }
                        op[y * ow + xx] = best;
                        argmax.push(best_idx);
                    }
                }
            }
        }
        if train {
            self.cache = Some(((n, c, h, w), argmax));
        }
        out
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let ((n, c, h, w), argmax) = self.cache.take().expect("pool backward without cached forward");
        let (gn, gc, oh, ow) = grad_out.shape();
        assert_eq!((gn, gc, oh, ow), (n, c, h / 2, w / 2), "pool grad shape");
        let mut dx = Tensor::zeros(n, c, h, w);
        let mut i = 0;
        for ni in 0..n {
            for ci in 0..c {
                let gp = grad_out.plane(ni, ci);
                let dp = dx.plane_mut(ni, ci);
                for &g in gp {
                    let idx = argmax[i];
                    dp[idx] = dp[idx] + g;
                    i += 1;
                }
            }
        }
        dx
    }
}

impl Default for MaxPool2x2 {
    fn default() -> Self {
        MaxPool2x2::new()
    }
}
