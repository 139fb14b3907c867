//! Training objective: mean L1 plus the partitioned focal frequency loss.
//!
//! The frequency term tiles each channel into 32×32 blocks (the coding-unit
//! size), transforms each block, and weights every spectral error by its own
//! magnitude normalized to the block maximum. The weights are treated as
//! constants when differentiating.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex;

use crate::fft::{Fft32, BLOCK, N};
use crate::ops;
use crate::{Error, Real, Result, Tensor};

/// Mixing coefficients of the total loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight of the L1 term.
    pub alpha: f64,
    /// Weight of the frequency term.
    pub beta: f64,
    /// Exponent applied to the spectral error when forming focal weights.
    pub pffl_exponent: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.9,
            beta: 0.1,
            pffl_exponent: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.pffl_exponent.is_finite()) {
            return Err(Error::invalid("LossWeights", format!("{self:?}")));
        }
        Ok(())
    }
}

fn check(sr: &Tensor<impl Real>, hr_shape: crate::Shape, op: &'static str) -> Result<()> {
    sr.expect_shape(hr_shape, op)?;
    let s = sr.shape();
    if s.h % N != 0 || s.w % N != 0 || s.h == 0 || s.w == 0 {
        return Err(Error::invalid(
            op,
            format!("spatial dims {}x{} must be positive multiples of {N}", s.h, s.w),
        ));
    }
    Ok(())
}

/// Visit every 32×32 block in (sample, channel, block-row, block-col) order
/// with the spectrum of `sr - hr` for that block.
fn for_each_block<T: Real>(
    sr: &Tensor<T>,
    hr: &Tensor<T>,
    fft: &Fft32<T>,
    mut f: impl FnMut(usize, usize, usize, usize, &[Complex<T>]) -> Result<()>,
) -> Result<()> {
    let s = sr.shape();
    let mut buf = alloc::vec![Complex::new(T::zero(), T::zero()); BLOCK];
    for n in 0..s.n {
        for c in 0..s.c {
            let (a, b) = (sr.plane(n, c), hr.plane(n, c));
            for by in 0..s.h / N {
                for bx in 0..s.w / N {
                    for y in 0..N {
                        let row = (by * N + y) * s.w + bx * N;
                        for x in 0..N {
                            buf[y * N + x] = Complex::new(a[row + x] - b[row + x], T::zero());
                        }
                    }
                    fft.forward_complex(&mut buf)?;
                    f(n, c, by, bx, &buf)?;
                }
            }
        }
    }
    Ok(())
}

/// Focal weights for one block: `|D|^α / max |D|^α`, all zero if the block
/// has no error.
fn block_weights<T: Real>(d: &[Complex<T>], exponent: f64, out: &mut [T]) {
    let e = T::lit(exponent);
    let mut max = T::zero();
    for (w, z) in out.iter_mut().zip(d) {
        let m = z.norm();
        *w = if exponent == 1.0 { m } else { m.powf(e) };
        max = max.max(*w);
    }
    if max > T::zero() {
        let inv = T::one() / max;
        out.iter_mut().for_each(|w| *w = *w * inv);
    } else {
        out.iter_mut().for_each(|w| *w = T::zero());
    }
}

/// Frozen focal weights for every block, laid out block after block.
pub fn pffl_weights<T: Real>(sr: &Tensor<T>, hr: &Tensor<T>, exponent: f64) -> Result<Vec<T>> {
    check(sr, hr.shape(), "pffl")?;
    let fft = Fft32::new();
    let mut out = Vec::new();
    let mut w = alloc::vec![T::zero(); BLOCK];
    for_each_block(sr, hr, &fft, |_, _, _, _, d| {
        block_weights(d, exponent, &mut w);
        out.extend_from_slice(&w);
        Ok(())
    })?;
    Ok(out)
}

fn prefactor<T: Real>(sr: &Tensor<T>) -> f64 {
    let s = sr.shape();
    1.0 / num_traits::Float::sqrt((s.h * s.w) as f64) / s.n as f64
}

/// Loss with externally supplied block weights (see [`pffl_weights`]).
pub fn pffl_with_weights<T: Real>(sr: &Tensor<T>, hr: &Tensor<T>, weights: &[T]) -> Result<T> {
    check(sr, hr.shape(), "pffl")?;
    let s = sr.shape();
    let blocks = s.n * s.c * (s.h / N) * (s.w / N);
    if weights.len() != blocks * BLOCK {
        return Err(Error::shape(
            "pffl",
            format!("expected {} weights, got {}", blocks * BLOCK, weights.len()),
        ));
    }
    let fft = Fft32::new();
    let mut acc = 0.0f64;
    let mut k = 0;
    for_each_block(sr, hr, &fft, |_, _, _, _, d| {
        let w = &weights[k * BLOCK..(k + 1) * BLOCK];
        acc += d.iter().zip(w).map(|(z, w)| (*w * z.norm_sqr()).as_f64()).sum::<f64>();
        k += 1;
        Ok(())
    })?;
    Ok(T::lit(acc * prefactor(sr)))
}

/// Partitioned focal frequency loss, averaged over the batch.
pub fn pffl<T: Real>(sr: &Tensor<T>, hr: &Tensor<T>, exponent: f64) -> Result<T> {
    check(sr, hr.shape(), "pffl")?;
    let fft = Fft32::new();
    let mut w = alloc::vec![T::zero(); BLOCK];
    let mut acc = 0.0f64;
    for_each_block(sr, hr, &fft, |_, _, _, _, d| {
        block_weights(d, exponent, &mut w);
        acc += d.iter().zip(&w).map(|(z, w)| (*w * z.norm_sqr()).as_f64()).sum::<f64>();
        Ok(())
    })?;
    Ok(T::lit(acc * prefactor(sr)))
}

/// `upstream · ∂pffl/∂sr` with the focal weights held constant.
///
/// Per block this is `2·Re(Fᴴ(w ⊙ D))` times the prefactor.
pub fn pffl_backward<T: Real>(sr: &Tensor<T>, hr: &Tensor<T>, exponent: f64, upstream: T) -> Result<Tensor<T>> {
    check(sr, hr.shape(), "pffl_backward")?;
    let s = sr.shape();
    let fft = Fft32::new();
    let scale = T::lit(2.0 * prefactor(sr)) * upstream;
    let mut grad = Tensor::zeros(s);
    let mut w = alloc::vec![T::zero(); BLOCK];
    let mut weighted = alloc::vec![Complex::new(T::zero(), T::zero()); BLOCK];
    for_each_block(sr, hr, &fft, |n, c, by, bx, d| {
        block_weights(d, exponent, &mut w);
        for ((dst, z), wv) in weighted.iter_mut().zip(d).zip(&w) {
            *dst = *z * *wv;
        }
        let back = fft.adjoint(&weighted)?;
        let plane = grad.plane_mut(n, c);
        for y in 0..N {
            let row = (by * N + y) * s.w + bx * N;
            for x in 0..N {
                plane[row + x] = back[y * N + x].re * scale;
            }
        }
        Ok(())
    })?;
    Ok(grad)
}

/// Components of the total loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T> {
    pub l1: T,
    pub pffl: T,
    pub total: T,
}

/// Combine the two terms: `alpha·l1 + beta·pffl`.
pub fn combine<T: Real>(l1: T, pffl: T, lw: &LossWeights) -> T {
    T::lit(lw.alpha) * l1 + T::lit(lw.beta) * pffl
}

/// `alpha · mean|sr - hr| + beta · pffl(sr, hr)`.
pub fn total_loss<T: Real>(sr: &Tensor<T>, hr: &Tensor<T>, lw: &LossWeights) -> Result<LossBreakdown<T>> {
    lw.validate()?;
    let l1 = ops::l1(sr, hr)?;
    let pf = if lw.beta == 0.0 { T::zero() } else { pffl(sr, hr, lw.pffl_exponent)? };
    Ok(LossBreakdown {
        l1,
        pffl: pf,
        total: combine(l1, pf, lw),
    })
}
