use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Scalar;

/// Dense (batch, channels, rows, cols) array, row-major innermost over cols.
/// The universal carrier between network blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor { n, c, h, w, data: vec![T::zero(); n * c * h * w] }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self, Error> {
        if data.len() != n * c * h * w {
            return Err(Error::Shape(alloc::format!(
                "expected {} values for ({n},{c},{h},{w}), got {}",
                n * c * h * w,
                data.len()
            )));
        }
        Ok(Tensor { n, c, h, w, data })
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// One (batch, channel) spatial plane as a flat `h*w` slice.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let start = (n * self.c + c) * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let hw = self.h * self.w;
        let start = (n * self.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        self.data[((n * self.c + c) * self.h + y) * self.w + x] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenate along the channel axis. All parts must agree on (n, h, w).
    pub fn concat_channels(parts: &[&Tensor<T>]) -> Result<Tensor<T>, Error> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
        let (n, _, h, w) = first.shape();
        let c_total: usize = parts.iter().map(|p| p.c).sum();
        for p in parts {
            if p.n != n || p.h != h || p.w != w {
                return Err(Error::Shape(alloc::format!(
                    "concat parts disagree: ({n},_,{h},{w}) vs ({},_,{},{})",
                    p.n, p.h, p.w
                )));
            }
        }
        let mut out = Tensor::zeros(n, c_total, h, w);
        for ni in 0..n {
            let mut co = 0;
            for p in parts {
                for ci in 0..p.c {
                    out.plane_mut(ni, co).copy_from_slice(p.plane(ni, ci));
                    co += 1;
                }
            }
        }
        Ok(out)
    }

    /// Copy of the channel range `[start, start + count)`.
    pub fn channels(&self, start: usize, count: usize) -> Tensor<T> {
        assert!(start + count <= self.c, "channel range out of bounds");
        let mut out = Tensor::zeros(self.n, count, self.h, self.w);
        for ni in 0..self.n {
            for ci in 0..count {
                out.plane_mut(ni, ci).copy_from_slice(self.plane(ni, start + ci));
            }
        }
        out
    }
}
