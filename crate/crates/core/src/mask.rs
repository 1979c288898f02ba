use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;

/// Single-channel image grid in row-major order. Binary masks hold exactly
/// {0.0, 1.0}; probability maps reuse the same carrier with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub h: usize,
    pub w: usize,
    pub pixels: Vec<f32>,
}

impl Mask {
    pub fn zeros(h: usize, w: usize) -> Self {
        Mask { h, w, pixels: vec![0.0; h * w] }
    }

    pub fn from_pixels(h: usize, w: usize, pixels: Vec<f32>) -> Result<Self, Error> {
        if pixels.len() != h * w {
            return Err(Error::Shape(alloc::format!(
                "expected {} pixels for {h}x{w}, got {}",
                h * w,
                pixels.len()
            )));
        }
        Ok(Mask { h, w, pixels })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.pixels[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.pixels[y * self.w + x] = v;
    }

    pub fn same_dims(&self, other: &Mask) -> bool {
        self.h == other.h && self.w == other.w
    }

    /// Number of foreground (1.0) pixels.
    pub fn foreground(&self) -> usize {
        self.pixels.iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn is_binary(&self) -> bool {
        self.pixels.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// A shape mask with its ground-truth skeleton. `class` groups pairs that
/// depict the same object for the object-wise split; `id` is unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub id: String,
    pub class: String,
    pub shape: Mask,
    pub skeleton: Mask,
}

impl Pair {
    /// Pairs only exist with matching dimensions.
    pub fn new(id: String, class: String, shape: Mask, skeleton: Mask) -> Result<Self, Error> {
        if !shape.same_dims(&skeleton) {
            return Err(Error::PairShape {
                id,
                detail: alloc::format!(
                    "shape is {}x{} but skeleton is {}x{}",
                    shape.h, shape.w, skeleton.h, skeleton.w
                ),
            });
        }
        Ok(Pair { id, class, shape, skeleton })
    }
}
