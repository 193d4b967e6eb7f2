//! Channel-major image tensor.

use crate::num::Real;

use super::MicronetError;

/// Dense rank-3 tensor in channel-major (`c`, `h`, `w`) order.
///
/// `data[ch * h * w + y * w + x]` is the value of channel `ch` at row `y`,
/// column `x`. Construction from external data validates length and
/// finiteness; in-crate producers keep those invariants by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<F> {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<F>,
}

impl<F: Real> Tensor3<F> {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<F>) -> Result<Self, MicronetError> {
        if c == 0 || h == 0 || w == 0 {
            return Err(MicronetError::ShapeMismatch {
                context: "tensor".into(),
                detail: format!("dimensions must be positive, got {c}x{h}x{w}"),
            });
        }
        if data.len() != c * h * w {
            return Err(MicronetError::ShapeMismatch {
                context: "tensor".into(),
                detail: format!("data length {} != {c}*{h}*{w}", data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(MicronetError::NonFinite("tensor data".into()));
        }
        Ok(Self { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![F::zero(); c * h * w] }
    }

    /// Build from a function of (channel, row, column).
    pub fn from_fn(c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(ch, y, x));
                }
            }
        }
        Self { c, h, w, data }
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    #[inline]
    pub fn get(&self, ch: usize, y: usize, x: usize) -> F {
        debug_assert!(ch < self.c && y < self.h && x < self.w);
        self.data[(ch * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, ch: usize, y: usize, x: usize, v: F) {
        debug_assert!(ch < self.c && y < self.h && x < self.w);
        self.data[(ch * self.h + y) * self.w + x] = v;
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// One channel as a contiguous row-major slice.
    pub fn channel(&self, ch: usize) -> &[F] {
        let plane = self.h * self.w;
        &self.data[ch * plane..(ch + 1) * plane]
    }

    /// Convert element-wise through f64 (used to move between precisions).
    pub fn cast<G: Real>(&self) -> Tensor3<G> {
        Tensor3 {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self
                .data
                .iter()
                .map(|v| crate::num::real(v.to_f64().unwrap()))
                .collect(),
        }
    }
}
