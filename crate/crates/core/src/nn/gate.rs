use alloc::format;

use rand_chacha::ChaCha8Rng;

use crate::nn::act::sigmoid;
use crate::nn::conv::Conv2d;
use crate::nn::ParamVisitor;
use crate::tensor::Tensor;
use crate::Scalar;

/// Spatial excitation gate: a 1x1 convolution collapses all channels to one
/// logit per pixel; its sigmoid rescales every channel at that pixel. The
/// counterpart of `SeBlock`, gating locations instead of channels.
#[derive(Debug, Clone)]
pub struct SpatialGate<T> {
    pub conv: Conv2d<T>,
    cache: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> SpatialGate<T> {
    pub fn new(c: usize, rng: &mut ChaCha8Rng) -> Self {
        SpatialGate { conv: Conv2d::new(c, 1, 1, 0, 1, rng), cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let (n, c, h, w) = x.shape();
        let logit = self.conv.forward(x, train);
        let s = logit.map(sigmoid);
        let mut out = Tensor::zeros(n, c, h, w);
        for ni in 0..n {
            let sp = s.plane(ni, 0).to_vec();
            for ci in 0..c {
                let xp = x.plane(ni, ci);
                for ((o, &xv), &sv) in out.plane_mut(ni, ci).iter_mut().zip(xp).zip(&sp) {
                    *o = sv * xv;
                }
            }
        }
        if train {
            self.cache = Some((x.clone(), s));
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let (x, s) = self.cache.take().expect("spatial gate backward without cached forward");
        let (n, c, h, w) = x.shape();
        let mut dlogit = Tensor::zeros(n, 1, h, w);
        let mut dx = Tensor::zeros(n, c, h, w);
        for ni in 0..n {
            let sp = s.plane(ni, 0).to_vec();
            {
                let dl = dlogit.plane_mut(ni, 0);
                for ci in 0..c {
                    let gp = grad_out.plane(ni, ci);
                    let xp = x.plane(ni, ci);
                    for ((o, &gv), &xv) in dl.iter_mut().zip(gp).zip(xp) {
                        *o = *o + gv * xv;
                    }
                }
                for (o, &sv) in dl.iter_mut().zip(&sp) {
                    *o = *o * sv * (T::one() - sv);
                }
            }
            for ci in 0..c {
                let gp = grad_out.plane(ni, ci);
                for ((o, &gv), &sv) in dx.plane_mut(ni, ci).iter_mut().zip(gp).zip(&sp) {
                    *o = sv * gv;
                }
            }
        }
        let dx_conv = self.conv.backward(&dlogit);
        for (o, &v) in dx.data_mut().iter_mut().zip(dx_conv.data()) {
            *o = *o + v;
        }
        dx
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.conv.visit_params(&format!("{prefix}.conv"), f);
    }

    pub fn param_count(c: usize) -> usize {
        Conv2d::<T>::param_count(c, 1, 1)
    }
}
