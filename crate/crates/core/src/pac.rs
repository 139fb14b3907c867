//! Pixel-adaptive convolution guided by a codec partition map.
//!
//! Every tap `j` of the window around output pixel `i` is scaled by
//! `F(Pa_i, Pa_j) = max(0, 1 - 16·(Pa_j - Pa_i)²)`, so taps that cross into a
//! coding unit of a different size are attenuated or cut. The map is side
//! information: it carries no gradient.

use alloc::format;

use crate::conv::{conv_backward_impl, conv_forward_impl, ConvGrads, ConvParams};
use crate::{Error, Real, Result, Shape, Tensor};

/// Sharpness of the partition kernel.
pub const THRESHOLD: f64 = 16.0;

/// Per-pixel coding-unit encoding, `(n, 1, h, w)` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMap<T: Real = f32>(Tensor<T>);

impl<T: Real> PartitionMap<T> {
    pub fn new(plane: Tensor<T>) -> Result<Self> {
        if plane.shape().c != 1 {
            return Err(Error::shape(
                "PartitionMap",
                format!("expected one channel, got {:?}", plane.shape()),
            ));
        }
        Ok(PartitionMap(plane))
    }

    /// Uniform map (every pixel in the same-sized coding unit).
    pub fn constant(n: usize, h: usize, w: usize, value: T) -> Self {
        PartitionMap(Tensor::full([n, 1, h, w], value))
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }

    /// 2×2 average-pooled map for the next depth level.
    pub fn downsample(&self) -> Result<Self> {
        Ok(PartitionMap(crate::ops::avg_pool2(&self.0)?))
    }
}

/// Encoding of a coding-unit side length: `log2(side) / 6`.
pub fn encode_cu_side(side: usize) -> f64 {
    num_traits::Float::log2(side as f64) / 6.0
}

/// `max(0, 1 - THRESHOLD·(pa_j - pa_i)²)`.
#[inline]
pub fn partition_kernel<T: Real>(pa_i: T, pa_j: T) -> T {
    let d = pa_j - pa_i;
    (T::one() - T::lit(THRESHOLD) * d * d).max(T::zero())
}

/// Tap multipliers `(n, 9, h, w)` for a 3×3 window; tap `t = ky·3 + kx`.
///
/// Out-of-image taps are left at 1; the zero padding already removes them.
pub fn partition_taps<T: Real>(part: &PartitionMap<T>) -> Tensor<T> {
    let s = part.shape();
    let t = part.tensor();
    Tensor::from_fn([s.n, 9, s.h, s.w], |n, tap, y, x| {
        let (dy, dx) = (tap / 3, tap % 3);
        let (jy, jx) = (y as isize + dy as isize - 1, x as isize + dx as isize - 1);
        if jy < 0 || jx < 0 || jy as usize >= s.h || jx as usize >= s.w {
            return T::one();
        }
        partition_kernel(t.at(n, 0, y, x), t.at(n, 0, jy as usize, jx as usize))
    })
}

fn check<T: Real>(v: &Tensor<T>, part: &PartitionMap<T>, p: &ConvParams<T>, op: &'static str) -> Result<()> {
    let (vs, ps) = (v.shape(), part.shape());
    if vs.n != ps.n || vs.h != ps.h || vs.w != ps.w {
        return Err(Error::shape(
            op,
            format!("features {:?} vs partition map {:?}", vs, ps),
        ));
    }
    if p.kernel() != 3 || p.stride != 1 || p.padding != 1 {
        return Err(Error::invalid(
            op,
            format!(
                "expects 3x3 kernel, stride 1, padding 1 (got k={}, s={}, p={})",
                p.kernel(),
                p.stride,
                p.padding
            ),
        ));
    }
    Ok(())
}

/// Forward pass with precomputed tap multipliers from [`partition_taps`].
pub fn pac_forward_taps<T: Real>(v: &Tensor<T>, taps: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    conv_forward_impl(v, p.view(), Some(taps), "pac_forward")
}

pub fn pac_forward<T: Real>(v: &Tensor<T>, part: &PartitionMap<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    check(v, part, p, "pac_forward")?;
    pac_forward_taps(v, &partition_taps(part), p)
}

pub(crate) fn pac_backward_taps<T: Real>(
    v: &Tensor<T>,
    taps: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    conv_backward_impl(v, p.view(), Some(taps), grad_out, need_input, "pac_backward")
}

/// Gradients for features, weights and bias, holding `F` constant.
pub fn pac_backward<T: Real>(
    v: &Tensor<T>,
    part: &PartitionMap<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    check(v, part, p, "pac_backward")?;
    pac_backward_taps(v, &partition_taps(part), p, grad_out, true)
}
