use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{ParamVisitor, StateVisitor};
use crate::tensor::Tensor;
use crate::{s, Scalar};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

/// Per-channel batch normalization over (batch, rows, cols). Training uses
/// per-batch statistics and folds them into running averages with momentum
/// 0.9; inference normalizes with the running averages.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub c: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub ggamma: Vec<T>,
    pub gbeta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(c: usize) -> Self {
        BatchNorm2d {
            c,
            gamma: vec![T::one(); c],
            beta: vec![T::zero(); c],
            ggamma: vec![T::zero(); c],
            gbeta: vec![T::zero(); c],
            running_mean: vec![T::zero(); c],
            running_var: vec![T::one(); c],
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let (n, c, h, w) = x.shape();
        assert_eq!(c, self.c, "batchnorm channels");
        let eps = s::<T>(BN_EPS);
        let mut out = Tensor::zeros(n, c, h, w);

        if !train {
            for ci in 0..c {
                let scale = self.gamma[ci] / (self.running_var[ci] + eps).sqrt();
                let shift = self.beta[ci] - scale * self.running_mean[ci];
                for ni in 0..n {
                    for (o, &v) in out.plane_mut(ni, ci).iter_mut().zip(x.plane(ni, ci)) {
                        *o = scale * v + shift;
                    }
                }
            }
            return out;
        }

        let m = s::<T>((n * h * w) as f64);
        let momentum = s::<T>(BN_MOMENTUM);
        let mut xhat = Tensor::zeros(n, c, h, w);
        let mut inv_std = vec![T::zero(); c];
        // the channel index drives several parallel per-channel arrays
        #[allow(clippy::needless_range_loop)]
        for ci in 0..c {
            let mut sum = T::zero();
            for ni in 0..n {
                sum = x.plane(ni, ci).iter().fold(sum, |acc, &v| acc + v);
            }
            let mean = sum / m;
            let mut var_sum = T::zero();
            for ni in 0..n {
                var_sum = x.plane(ni, ci).iter().fold(var_sum, |acc, &v| {
                    let d = v - mean;
                    acc + d * d
                });
            }
            let var = var_sum / m;
            let is = T::one() / (var + eps).sqrt();
            inv_std[ci] = is;
            for ni in 0..n {
                let xp = x.plane(ni, ci);
                let hp = xhat.plane_mut(ni, ci);
                for (o, &v) in hp.iter_mut().zip(xp) {
                    *o = (v - mean) * is;
                }
                for (o, &hv) in out.plane_mut(ni, ci).iter_mut().zip(xhat.plane(ni, ci)) {
                    *o = self.gamma[ci] * hv + self.beta[ci];
                }
            }
            self.running_mean[ci] = momentum * self.running_mean[ci] + (T::one() - momentum) * mean;
            self.running_var[ci] = momentum * self.running_var[ci] + (T::one() - momentum) * var;
        }
        self.cache = Some(BnCache { xhat, inv_std });
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let BnCache { xhat, inv_std } =
            self.cache.take().expect("batchnorm backward without cached training forward");
        let (n, c, h, w) = grad_out.shape();
        assert_eq!(c, self.c, "batchnorm grad channels");
        let m = s::<T>((n * h * w) as f64);
        let mut dx = Tensor::zeros(n, c, h, w);
        // the channel index drives several parallel per-channel arrays
        #[allow(clippy::needless_range_loop)]
        for ci in 0..c {
            let mut sum_g = T::zero();
            let mut sum_gh = T::zero();
            for ni in 0..n {
                for (&g, &hv) in grad_out.plane(ni, ci).iter().zip(xhat.plane(ni, ci)) {
                    sum_g = sum_g + g;
                    sum_gh = sum_gh + g * hv;
                }
            }
            self.gbeta[ci] = sum_g;
            self.ggamma[ci] = sum_gh;
            let scale = self.gamma[ci] * inv_std[ci];
            let mean_g = sum_g / m;
            let mean_gh = sum_gh / m;
            for ni in 0..n {
                let gp = grad_out.plane(ni, ci);
                let hp = xhat.plane(ni, ci);
                let dp = dx.plane_mut(ni, ci);
                for ((o, &g), &hv) in dp.iter_mut().zip(gp).zip(hp) {
                    *o = scale * (g - mean_g - hv * mean_gh);
                }
            }
        }
        dx
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&format!("{prefix}.gamma"), &[self.c], &mut self.gamma, &mut self.ggamma);
        f(&format!("{prefix}.beta"), &[self.c], &mut self.beta, &mut self.gbeta);
    }

    pub fn visit_state(&mut self, prefix: &str, f: &mut StateVisitor<'_, T>) {
        f(&format!("{prefix}.running_mean"), &[self.c], &mut self.running_mean);
        f(&format!("{prefix}.running_var"), &[self.c], &mut self.running_var);
    }

    pub fn param_count(c: usize) -> usize {
        2 * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_tensor, rel_err, rng};

    #[test]
    fn training_forward_normalizes_each_channel() {
        let mut r = rng(31);
        let mut bn = BatchNorm2d::<f64>::new(3);
        let x = random_tensor(&mut r, 2, 3, 4, 5);
        let y = bn.forward(&x, true);
        let m = 2.0 * 4.0 * 5.0;
        for ci in 0..3 {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for ni in 0..2 {
                for &v in y.plane(ni, ci) {
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / m;
            let var = sq / m - mean * mean;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4, "eps shifts variance slightly: {var}");
        }
    }

    #[test]
    fn running_stats_blend_with_momentum() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        let x = Tensor::from_vec(1, 1, 1, 4, alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        bn.forward(&x, true);
        // batch mean 2.5, biased var 1.25; running starts at (0, 1)
        assert!((bn.running_mean[0] - 0.25).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.125)).abs() < 1e-12);
    }

    #[test]
    fn inference_uses_running_statistics() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        bn.running_mean[0] = 2.0;
        bn.running_var[0] = 4.0;
        bn.gamma[0] = 3.0;
        bn.beta[0] = 0.5;
        let x = Tensor::from_vec(1, 1, 1, 2, alloc::vec![2.0, 4.0]).unwrap();
        let y = bn.forward(&x, false);
        let scale = 3.0 / (4.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
        assert!((y.data()[1] - (scale * 2.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(33);
        let mut bn = BatchNorm2d::<f64>::new(2);
        for (i, g) in bn.gamma.iter_mut().enumerate() {
            *g = 1.0 + 0.2 * i as f64;
        }
        let x = random_tensor(&mut r, 3, 2, 2, 2);
        let m = random_tensor(&mut r, 3, 2, 2, 2);
        let loss = |bn: &mut BatchNorm2d<f64>, x: &Tensor<f64>| -> f64 {
            let y = bn.forward(x, true);
            y.data().iter().zip(m.data()).map(|(a, b)| a * b).sum()
        };

        bn.forward(&x, true);
        let dx = bn.backward(&m);

        let h = 1e-6;
        for i in 0..2 {
            let orig = bn.gamma[i];
            bn.gamma[i] = orig + h;
            let lp = loss(&mut bn, &x);
            bn.gamma[i] = orig - h;
            let lm = loss(&mut bn, &x);
            bn.gamma[i] = orig;
            assert!(rel_err(bn.ggamma[i], (lp - lm) / (2.0 * h)) < 1e-6);

            let orig = bn.beta[i];
            bn.beta[i] = orig + h;
            let lp = loss(&mut bn, &x);
            bn.beta[i] = orig - h;
            let lm = loss(&mut bn, &x);
            bn.beta[i] = orig;
            assert!(rel_err(bn.gbeta[i], (lp - lm) / (2.0 * h)) < 1e-6);
        }
        let mut xi = x.clone();
        for i in 0..xi.data().len() {
            let orig = xi.data()[i];
            xi.data_mut()[i] = orig + h;
            let lp = loss(&mut bn, &xi);
            xi.data_mut()[i] = orig - h;
            let lm = loss(&mut bn, &xi);
            xi.data_mut()[i] = orig;
            assert!(rel_err(dx.data()[i], (lp - lm) / (2.0 * h)) < 5e-5);
        }
    }
}
