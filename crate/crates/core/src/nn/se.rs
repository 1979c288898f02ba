use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::act::sigmoid;
use crate::nn::ParamVisitor;
use crate::tensor::Tensor;
use crate::{s, Scalar};

#[derive(Debug, Clone)]
struct SeCache<T> {
    x: Tensor<T>,
    z: Vec<T>,
    a: Vec<T>,
    g: Vec<T>,
}

/// Squeeze-and-excitation: global average pool to one scalar per channel, a
/// two-layer bottleneck MLP, and a sigmoid gate rescaling each channel. The
/// bottleneck width is `max(1, c / ratio)`.
#[derive(Debug, Clone)]
pub struct SeBlock<T> {
    pub c: usize,
    pub mid: usize,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
    pub gw1: Vec<T>,
    pub gb1: Vec<T>,
    pub gw2: Vec<T>,
    pub gb2: Vec<T>,
    cache: Option<SeCache<T>>,
}

impl<T: Scalar> SeBlock<T> {
    pub fn new(c: usize, ratio: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(c >= 1 && ratio >= 1);
        let mid = (c / ratio).max(1);
        let l1 = Float::sqrt(6.0 / c as f64);
        let w1 = (0..mid * c).map(|_| s(rng.gen_range(-l1..l1))).collect();
        let l2 = Float::sqrt(6.0 / mid as f64);
        let w2 = (0..c * mid).map(|_| s(rng.gen_range(-l2..l2))).collect();
        SeBlock {
            c,
            mid,
            w1,
            b1: vec![T::zero(); mid],
            w2,
            b2: vec![T::zero(); c],
            gw1: vec![T::zero(); mid * c],
            gb1: vec![T::zero(); mid],
            gw2: vec![T::zero(); c * mid],
            gb2: vec![T::zero(); c],
            cache: None,
        }
    }

    /// Per-batch-item gate vector for `x`; the forward output is `x` scaled
    /// channel-wise by these gates.
    fn gates(&self, x: &Tensor<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
        let (n, c, h, w) = x.shape();
        let area = s::<T>((h * w) as f64);
        let mut z = vec![T::zero(); n * c];
        for ni in 0..n {
            for ci in 0..c {
                let sum = x.plane(ni, ci).iter().fold(T::zero(), |acc, &v| acc + v);
                z[ni * c + ci] = sum / area;
            }
        }
        let mut a = vec![T::zero(); n * self.mid];
        for ni in 0..n {
            for j in 0..self.mid {
                let mut acc = self.b1[j];
                for i in 0..c {
                    acc = acc + self.w1[j * c + i] * z[ni * c + i];
                }
                a[ni * self.mid + j] = if acc > T::zero() { acc } else { T::zero() };
            }
        }
        let mut g = vec![T::zero(); n * c];
        for ni in 0..n {
            for ci in 0..c {
                let mut acc = self.b2[ci];
                for j in 0..self.mid {
                    acc = acc + self.w2[ci * self.mid + j] * a[ni * self.mid + j];
                }
                g[ni * c + ci] = sigmoid(acc);
            }
        }
        (z, a, g)
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let (n, c, h, w) = x.shape();
        assert_eq!(c, self.c, "se channels");
        let (z, a, g) = self.gates(x);
        let mut out = Tensor::zeros(n, c, h, w);
        for ni in 0..n {
            for ci in 0..c {
                let gv = g[ni * c + ci];
                for (o, &v) in out.plane_mut(ni, ci).iter_mut().zip(x.plane(ni, ci)) {
                    *o = gv * v;
                }
            }
        }
        if train {
            self.cache = Some(SeCache { x: x.clone(), z, a, g });
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let SeCache { x, z, a, g } = self.cache.take().expect("se backward without cached forward");
        let (n, c, h, w) = x.shape();
        let area = s::<T>((h * w) as f64);

        self.gw1.fill(T::zero());
        self.gb1.fill(T::zero());
        self.gw2.fill(T::zero());
        self.gb2.fill(T::zero());

        let mut dx = Tensor::zeros(n, c, h, w);
        for ni in 0..n {
            // direct path: out = g * x
            let mut dg = vec![T::zero(); c];
            for ci in 0..c {
                let gv = g[ni * c + ci];
                let gp = grad_out.plane(ni, ci);
                let xp = x.plane(ni, ci);
                let dp = dx.plane_mut(ni, ci);
                let mut acc = T::zero();
                for ((o, &gr), &xv) in dp.iter_mut().zip(gp).zip(xp) {
                    *o = gv * gr;
                    acc = acc + gr * xv;
                }
                dg[ci] = acc;
            }
            // gate path back through sigmoid, dense, relu, dense, pool
            let mut da = vec![T::zero(); self.mid];
            for ci in 0..c {
                let gv = g[ni * c + ci];
                let dl = dg[ci] * gv * (T::one() - gv);
                self.gb2[ci] = self.gb2[ci] + dl;
                for j in 0..self.mid {
                    self.gw2[ci * self.mid + j] =
                        self.gw2[ci * self.mid + j] + dl * a[ni * self.mid + j];
                    da[j] = da[j] + self.w2[ci * self.mid + j] * dl;
                }
            }
            let mut dz = vec![T::zero(); c];
            for j in 0..self.mid {
                if a[ni * self.mid + j] <= T::zero() {
                    continue;
                }
                let dj = da[j];
                self.gb1[j] = self.gb1[j] + dj;
                for i in 0..c {
                    self.gw1[j * c + i] = self.gw1[j * c + i] + dj * z[ni * c + i];
                    dz[i] = dz[i] + self.w1[j * c + i] * dj;
                }
            }
            for (ci, &d) in dz.iter().enumerate() {
                let spread = d / area;
                for o in dx.plane_mut(ni, ci).iter_mut() {
                    *o = *o + spread;
                }
            }
        }
        dx
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&format!("{prefix}.w1"), &[self.mid, self.c], &mut self.w1, &mut self.gw1);
        f(&format!("{prefix}.b1"), &[self.mid], &mut self.b1, &mut self.gb1);
        f(&format!("{prefix}.w2"), &[self.c, self.mid], &mut self.w2, &mut self.gw2);
        f(&format!("{prefix}.b2"), &[self.c], &mut self.b2, &mut self.gb2);
    }

    pub fn param_count(c: usize, ratio: usize) -> usize {
        let mid = (c / ratio).max(1);
        mid * c + mid + c * mid + c
    }
}
