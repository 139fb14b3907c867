//! Fixed-size 32×32 two-dimensional FFT (iterative radix-2).

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex;

use crate::{Error, Real, Result};

pub const N: usize = 32;
pub const BLOCK: usize = N * N;
const LOG2_N: u32 = 5;

/// Precomputed twiddles and bit-reversal permutation for length-32 transforms.
#[derive(Debug, Clone)]
pub struct Fft32<T> {
    twiddles: [Complex<T>; N / 2],
    bitrev: [usize; N],
}

impl<T: Real> Default for Fft32<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Fft32<T> {
    pub fn new() -> Self {
        let mut twiddles = [Complex::new(T::zero(), T::zero()); N / 2];
        for (k, t) in twiddles.iter_mut().enumerate() {
            let angle = -2.0 * core::f64::consts::PI * k as f64 / N as f64;
            *t = Complex::new(
                T::lit(libm_cos(angle)),
                T::lit(libm_sin(angle)),
            );
        }
        let mut bitrev = [0usize; N];
        for (i, b) in bitrev.iter_mut().enumerate() {
            *b = (i as u32).reverse_bits().wrapping_shr(32 - LOG2_N) as usize;
        }
        Fft32 { twiddles, bitrev }
    }

    /// In-place forward 1-D transform of 32 values with the given stride.
    fn fft1(&self, buf: &mut [Complex<T>], offset: usize, stride: usize) {
        for i in 0..N {
            let j = self.bitrev[i];
            if j > i {
                buf.swap(offset + i * stride, offset + j * stride);
            }
        }
        let mut len = 2;
        while len <= N {
            let half = len / 2;
            let step = N / len;
            for start in (0..N).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * step];
                    let a = offset + (start + k) * stride;
                    let b = offset + (start + k + half) * stride;
                    let t = buf[b] * w;
                    buf[b] = buf[a] - t;
                    buf[a] = buf[a] + t;
                }
            }
            len <<= 1;
        }
    }

    /// Unnormalized forward 2-D DFT of a complex 32×32 block, in place.
    pub fn forward_complex(&self, buf: &mut [Complex<T>]) -> Result<()> {
        if buf.len() != BLOCK {
            return Err(Error::invalid(
                "fft2_32",
                format!("expected {BLOCK} values, got {}", buf.len()),
            ));
        }
        for row in 0..N {
            self.fft1(buf, row * N, 1);
        }
        for col in 0..N {
            self.fft1(buf, col, N);
        }
        Ok(())
    }

    /// Unnormalized forward 2-D DFT of a real row-major 32×32 block.
    pub fn forward(&self, block: &[T]) -> Result<Vec<Complex<T>>> {
        if block.len() != BLOCK {
            return Err(Error::invalid(
                "fft2_32",
                format!("expected a 32x32 block ({BLOCK} values), got {}", block.len()),
            ));
        }
        let mut buf: Vec<Complex<T>> = block.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward_complex(&mut buf)?;
        Ok(buf)
    }

    /// Adjoint of the forward transform, `Fᴴ z = conj(F conj(z))`.
    pub fn adjoint(&self, spectrum: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        let mut buf: Vec<Complex<T>> = spectrum.iter().map(|z| z.conj()).collect();
        self.forward_complex(&mut buf)?;
        buf.iter_mut().for_each(|z| *z = z.conj());
        Ok(buf)
    }
}

/// Convenience wrapper: forward 2-D DFT of one 32×32 real block.
pub fn fft2_32<T: Real>(block: &[T]) -> Result<Vec<Complex<T>>> {
    Fft32::new().forward(block)
}

fn libm_cos(x: f64) -> f64 {
    num_traits::Float::cos(x)
}

fn libm_sin(x: f64) -> f64 {
    num_traits::Float::sin(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N⁴) evaluation of the 2-D DFT.
    fn naive_dft(x: &[f64]) -> Vec<Complex<f64>> {
        let mut out = alloc::vec![Complex::new(0.0, 0.0); BLOCK];
        for u in 0..N {
            for v in 0..N {
                let mut acc = Complex::new(0.0, 0.0);
                for y in 0..N {
                    for xx in 0..N {
                        let ang = -2.0 * core::f64::consts::PI * ((u * y + v * xx) % N) as f64 / N as f64;
                        acc += Complex::new(ang.cos(), ang.sin()) * x[y * N + xx];
                    }
                }
                out[u * N + v] = acc;
            }
        }
        out
    }

    fn random_block(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..BLOCK).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zeros_and_constant() {
        let z = fft2_32(&[0.0f64; BLOCK]).unwrap();
        assert!(z.iter().all(|c| c.norm() == 0.0));
        let c = fft2_32(&[0.25f64; BLOCK]).unwrap();
        assert!((c[0].re - 256.0).abs() < 1e-12 && c[0].im.abs() < 1e-12);
        assert!(c[1..].iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn matches_naive_dft() {
        let x = random_block(7);
        let fast = fft2_32(&x).unwrap();
        let slow = naive_dft(&x);
        let scale = slow.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() <= 1e-6 * scale);
        }
    }

    #[test]
    fn parseval_and_linearity() {
        let x = random_block(1);
        let y = random_block(2);
        let fx = fft2_32(&x).unwrap();
        let fy = fft2_32(&y).unwrap();
        let e_time: f64 = x.iter().map(|v| v * v).sum();
        let e_freq: f64 = fx.iter().map(|z| z.norm_sqr()).sum();
        assert!((e_freq - 1024.0 * e_time).abs() <= 1e-6 * e_freq);

        let (a, b) = (0.7, -1.3);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let fm = fft2_32(&mix).unwrap();
        for i in 0..BLOCK {
            let want = fx[i] * a + fy[i] * b;
            assert!((fm[i] - want).norm() <= 1e-9 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn adjoint_identity() {
        // <F x, z> == <x, Fᴴ z>
        let x = random_block(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z: Vec<Complex<f64>> = (0..BLOCK)
            .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let fx = fft2_32(&x).unwrap();
        let lhs: Complex<f64> = fx.iter().zip(&z).map(|(a, b)| a * b.conj()).sum();
        let fhz = Fft32::<f64>::new().adjoint(&z).unwrap();
        let rhs: Complex<f64> = x.iter().zip(&fhz).map(|(a, b)| b.conj() * *a).sum();
        assert!((lhs - rhs).norm() < 1e-9 * lhs.norm().max(1.0));
    }

    #[test]
    fn wrong_size_is_rejected() {
        assert!(fft2_32(&[0.0f32; 31 * 32]).is_err());
    }
}
