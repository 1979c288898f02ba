//! Adam optimizer. Moment buffers line up with the model's canonical
//! parameter visitation order, so one optimizer must stay with one model.

use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::network::Model;
use crate::nn::ParamVisitor;
use crate::{s, Scalar};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    /// Current learning rate; the schedule outside may lower it between steps.
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self::with_hyperparams(lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON)
    }

    pub fn with_hyperparams(lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam { lr, beta1, beta2, epsilon, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update over every parameter array the model exposes. Gradients
    /// must already be filled by a backward pass.
    pub fn step(&mut self, model: &mut Model<T>) {
        self.step_arrays(|f| model.visit_params(f));
    }

    /// Core update over any visitation; exposed for tests against
    /// hand-computed values.
    pub fn step_arrays<F: FnOnce(&mut ParamVisitor<'_, T>)>(&mut self, visit: F) {
        self.t += 1;
        let bc1 = 1.0 - Float::powi(self.beta1, self.t as i32);
        let bc2 = 1.0 - Float::powi(self.beta2, self.t as i32);
        let step_size: T = s(self.lr / bc1);
        let inv_bc2: T = s(1.0 / bc2);
        let b1: T = s(self.beta1);
        let nb1: T = s(1.0 - self.beta1);
        let b2: T = s(self.beta2);
        let nb2: T = s(1.0 - self.beta2);
        let eps: T = s(self.epsilon);

        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut idx = 0usize;
        visit(&mut |_name, _dims, vals, grads| {
            if idx == ms.len() {
                ms.push(vec![T::zero(); vals.len()]);
                vs.push(vec![T::zero(); vals.len()]);
            }
            let m = &mut ms[idx];
            let v = &mut vs[idx];
            assert_eq!(m.len(), vals.len(), "parameter array {idx} changed size");
            for i in 0..vals.len() {
                let g = grads[i];
                m[i] = b1 * m[i] + nb1 * g;
                v[i] = b2 * v[i] + nb2 * g * g;
                vals[i] = vals[i] - step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
            idx += 1;
        });
    }
}
