//! Network building blocks. Every layer follows the same conventions:
//!
//! * `forward(&mut self, x, train)` caches whatever the backward pass needs
//!   only when `train` is true; inference leaves no residue beyond batch-norm
//!   running statistics.
//! * `backward(&mut self, grad_out)` consumes the cache, overwrites the
//!   layer's parameter gradients, and returns the gradient w.r.t. the input.
//!   One backward per forward.
//! * `visit_params(prefix, f)` walks `(name, dims, values, grads)` for every
//!   learnable array in a fixed construction order; `visit_state` walks
//!   non-learnable state (batch-norm running stats). The visitation order is
//!   the canonical parameter order for the optimizer and checkpoints.
//!
//! All layers preserve spatial dimensions except the explicit pooling and
//! resizing ops.

pub mod act;
pub mod conv;
pub mod gate;
pub mod norm;
pub mod pool;
pub mod resize;
pub mod rs;
pub mod se;

pub use act::{sigmoid, Relu};
pub use conv::Conv2d;
pub use gate::SpatialGate;
pub use norm::BatchNorm2d;
pub use pool::MaxPool2x2;
pub use resize::{bilinear_resize, bilinear_resize_back};
pub use rs::RsBlock;
pub use se::SeBlock;

/// Visitor over `(name, dims, values, grads)` of learnable arrays.
pub type ParamVisitor<'a, T> = dyn FnMut(&str, &[usize], &mut [T], &mut [T]) + 'a;

/// Visitor over `(name, dims, values)` of non-learnable state arrays.
pub type StateVisitor<'a, T> = dyn FnMut(&str, &[usize], &mut [T]) + 'a;
