use alloc::format;

use rand_chacha::ChaCha8Rng;

use crate::nn::act::Relu;
use crate::nn::conv::Conv2d;
use crate::nn::norm::BatchNorm2d;
use crate::nn::se::SeBlock;
use crate::nn::{ParamVisitor, StateVisitor};
use crate::tensor::Tensor;
use crate::Scalar;

/// Residual block with a squeeze-and-excitation gate on its convolutional
/// branch: `relu(identity(x) + se(conv-bn-relu-conv-bn-relu(x)))`. The
/// identity is a pass-through when channel counts match, otherwise a 1x1
/// projection. Spatial dimensions are preserved.
#[derive(Debug, Clone)]
pub struct RsBlock<T> {
    pub in_c: usize,
    pub out_c: usize,
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    relu1: Relu,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    relu2: Relu,
    se: SeBlock<T>,
    proj: Option<Conv2d<T>>,
    relu_out: Relu,
}

impl<T: Scalar> RsBlock<T> {
    pub fn new(in_c: usize, out_c: usize, se_ratio: usize, rng: &mut ChaCha8Rng) -> Self {
        RsBlock {
            in_c,
            out_c,
            conv1: Conv2d::new(in_c, out_c, 3, 1, 1, rng),
            bn1: BatchNorm2d::new(out_c),
            relu1: Relu::new(),
            conv2: Conv2d::new(out_c, out_c, 3, 1, 1, rng),
            bn2: BatchNorm2d::new(out_c),
            relu2: Relu::new(),
            se: SeBlock::new(out_c, se_ratio, rng),
            proj: (in_c != out_c).then(|| Conv2d::new(in_c, out_c, 1, 0, 1, rng)),
            relu_out: Relu::new(),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let t = self.conv1.forward(x, train);
        let t = self.bn1.forward(&t, train);
        let t = self.relu1.forward(&t, train);
        let t = self.conv2.forward(&t, train);
        let t = self.bn2.forward(&t, train);
        let t = self.relu2.forward(&t, train);
        let t = self.se.forward(&t, train);
        let mut sum = match &mut self.proj {
            Some(p) => p.forward(x, train),
            None => x.clone(),
        };
        for (o, &v) in sum.data_mut().iter_mut().zip(t.data()) {
            *o = *o + v;
        }
        self.relu_out.forward(&sum, train)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let ds = self.relu_out.backward(grad_out);
        let d = self.se.backward(&ds);
        let d = self.relu2.backward(&d);
        let d = self.bn2.backward(&d);
        let d = self.conv2.backward(&d);
        let d = self.relu1.backward(&d);
        let d = self.bn1.backward(&d);
        let mut dx = self.conv1.backward(&d);
        let d_id = match &mut self.proj {
            Some(p) => p.backward(&ds),
            None => ds,
        };
        for (o, &v) in dx.data_mut().iter_mut().zip(d_id.data()) {
            *o = *o + v;
        }
        dx
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.conv1.visit_params(&format!("{prefix}.conv1"), f);
        self.bn1.visit_params(&format!("{prefix}.bn1"), f);
        self.conv2.visit_params(&format!("{prefix}.conv2"), f);
        self.bn2.visit_params(&format!("{prefix}.bn2"), f);
        self.se.visit_params(&format!("{prefix}.se"), f);
        if let Some(p) = &mut self.proj {
            p.visit_params(&format!("{prefix}.proj"), f);
        }
    }

    pub fn visit_state(&mut self, prefix: &str, f: &mut StateVisitor<'_, T>) {
        self.bn1.visit_state(&format!("{prefix}.bn1"), f);
        self.bn2.visit_state(&format!("{prefix}.bn2"), f);
    }

    pub fn param_count(in_c: usize, out_c: usize, se_ratio: usize) -> usize {
        let mut n = Conv2d::<T>::param_count(in_c, out_c, 3)
            + BatchNorm2d::<T>::param_count(out_c)
            + Conv2d::<T>::param_count(out_c, out_c, 3)
            + BatchNorm2d::<T>::param_count(out_c)
            + SeBlock::<T>::param_count(out_c, se_ratio);
        if in_c != out_c {
            n += Conv2d::<T>::param_count(in_c, out_c, 1);
        }
        n
    }
}
