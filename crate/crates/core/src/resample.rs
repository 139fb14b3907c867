//! Separable ×2 resampling: bicubic (Catmull-Rom, `a = -0.5`) and bilinear,
//! pixel-centre aligned with edge replication.

use alloc::format;
use alloc::vec::Vec;

use crate::image::{FrameRGB, Plane};
use crate::{Error, Real, Result, Tensor};

pub const CUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn cubic_weight(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = if x < 0.0 { -x } else { x };
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source taps and weights for sampling at continuous source coordinate `pos`.
fn cubic_taps(pos: f64) -> ([isize; 4], [f64; 4]) {
    let base = num_traits::Float::floor(pos) as isize;
    let frac = pos - base as f64;
    let idx = [base - 1, base, base + 1, base + 2];
    let w = [
        cubic_weight(1.0 + frac),
        cubic_weight(frac),
        cubic_weight(1.0 - frac),
        cubic_weight(2.0 - frac),
    ];
    (idx, w)
}

fn resample_plane(src: &Plane, out_w: usize, out_h: usize, map: impl Fn(usize) -> f64) -> Plane {
    // rows first
    let mut tmp = Vec::with_capacity(out_w * src.height);
    for y in 0..src.height {
        for x in 0..out_w {
            let (idx, w) = cubic_taps(map(x));
            let mut acc = 0.0f64;
            for k in 0..4 {
                acc += w[k] * src.get_clamped(idx[k], y as isize) as f64;
            }
            tmp.push(acc);
        }
    }
    Plane::from_fn(out_w, out_h, |x, y| {
        let (idx, w) = cubic_taps(map(y));
        let mut acc = 0.0f64;
        for k in 0..4 {
            let yy = idx[k].clamp(0, src.height as isize - 1) as usize;
            acc += w[k] * tmp[yy * out_w + x];
        }
        acc as f32
    })
}

/// Halve both dimensions; output pixel `X` samples source position `2X + 0.5`.
pub fn bicubic_downsample2_plane(p: &Plane) -> Result<Plane> {
    if p.width % 2 != 0 || p.height % 2 != 0 {
        return Err(Error::invalid(
            "bicubic_downsample2",
            alloc::format!("odd dims {}x{}", p.width, p.height),
        ));
    }
    Ok(resample_plane(p, p.width / 2, p.height / 2, |x| 2.0 * x as f64 + 0.5))
}

/// Double both dimensions; output pixel `X` samples source position `(X + 0.5)/2 − 0.5`.
pub fn bicubic_upsample2_plane(p: &Plane) -> Plane {
    resample_plane(p, p.width * 2, p.height * 2, |x| (x as f64 + 0.5) * 0.5 - 0.5)
}

pub fn bicubic_downsample2(hr: &FrameRGB) -> Result<FrameRGB> {
    let planes: Result<Vec<Plane>> = (0..3).map(|c| bicubic_downsample2_plane(&hr.channel_plane(c))).collect();
    let planes = planes?;
    FrameRGB::from_planes(&planes[0], &planes[1], &planes[2])
}

/// Bicubic ×2 upsampling, clamped to `[0, 1]`.
pub fn bicubic_upsample2(lr: &FrameRGB) -> FrameRGB {
    let planes: Vec<Plane> = (0..3).map(|c| bicubic_upsample2_plane(&lr.channel_plane(c))).collect();
    FrameRGB::from_planes(&planes[0], &planes[1], &planes[2])
        .expect("equal planes")
        .clamped()
}

/// Bilinear ×2 upsampling of an NCHW tensor (weights 3/4 and 1/4, edge clamped).
pub fn bilinear_upsample2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (q1, q3) = (T::lit(0.25), T::lit(0.75));
    // Output index o maps to source (o + 0.5)/2 − 0.5: even o leans on the
    // previous source sample, odd o on the next.
    let pair = |o: usize, len: usize| -> (usize, usize) {
        let i = o / 2;
        let j = if o % 2 == 0 { i.saturating_sub(1) } else { (i + 1).min(len - 1) };
        (i, j)
    };
    Tensor::from_fn([s.n, s.c, 2 * s.h, 2 * s.w], |n, c, oy, ox| {
        let (y0, y1) = pair(oy, s.h);
        let (x0, x1) = pair(ox, s.w);
        let row = |y: usize| q3 * x.at(n, c, y, x0) + q1 * x.at(n, c, y, x1);
        q3 * row(y0) + q1 * row(y1)
    })
}

/// Adjoint of [`bilinear_upsample2`]: maps a `(n,c,2h,2w)` gradient back to `(n,c,h,w)`.
pub fn bilinear_upsample2_backward<T: Real>(g: &Tensor<T>) -> Result<Tensor<T>> {
    let s = g.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape("bilinear_upsample2_backward", format!("{s:?} has odd dims")));
    }
    let (h, w) = (s.h / 2, s.w / 2);
    let (q1, q3) = (T::lit(0.25), T::lit(0.75));
    let pair = |o: usize, len: usize| -> (usize, usize) {
        let i = o / 2;
        let j = if o % 2 == 0 { i.saturating_sub(1) } else { (i + 1).min(len - 1) };
        (i, j)
    };
    let mut out = Tensor::zeros([s.n, s.c, h, w]);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = g.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oy in 0..s.h {
                let (y0, y1) = pair(oy, h);
                for ox in 0..s.w {
                    let (x0, x1) = pair(ox, w);
                    let v = src[oy * s.w + ox];
                    dst[y0 * w + x0] = dst[y0 * w + x0] + q3 * q3 * v;
                    dst[y0 * w + x1] = dst[y0 * w + x1] + q3 * q1 * v;
                    dst[y1 * w + x0] = dst[y1 * w + x0] + q1 * q3 * v;
                    dst[y1 * w + x1] = dst[y1 * w + x1] + q1 * q1 * v;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_partition_of_unity() {
        for i in 0..=20 {
            let f = i as f64 / 20.0;
            let s: f64 = [1.0 + f, f, 1.0 - f, 2.0 - f].iter().map(|&d| cubic_weight(d)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_stays_constant() {
        let p = Plane::filled(8, 6, 77.0);
        let d = bicubic_downsample2_plane(&p).unwrap();
        assert!(d.data.iter().all(|&v| (v - 77.0).abs() < 1e-4));
        let u = bicubic_upsample2_plane(&p);
        assert!(u.data.iter().all(|&v| (v - 77.0).abs() < 1e-4));
    }

    #[test]
    fn linear_ramp_reproduced() {
        let p = Plane::from_fn(16, 4, |x, _| 3.0 * x as f32 + 1.0);
        let d = bicubic_downsample2_plane(&p).unwrap();
        // Interior samples sit at source x = 2X + 0.5 ⇒ slope 6 per output pixel.
        for x in 1..7 {
            let want = 3.0 * (2.0 * x as f32 + 0.5) + 1.0;
            assert!((d.get(x, 1) - want).abs() < 1e-4, "{} vs {want}", d.get(x, 1));
        }
    }

    #[test]
    fn delta_footprints() {
        let p = Plane::from_fn(16, 2, |x, _| if x == 8 { 1.0 } else { 0.0 });
        let d = bicubic_downsample2_plane(&p).unwrap();
        // Sampling phase 0.5: taps at distances 1.5, 0.5, 0.5, 1.5.
        let outer = cubic_weight(1.5) as f32;
        let inner = cubic_weight(0.5) as f32;
        assert!((outer + 0.0625).abs() < 1e-7 && (inner - 0.5625).abs() < 1e-7);
        assert!((d.get(3, 0) - outer).abs() < 1e-7);
        assert!((d.get(4, 0) - inner).abs() < 1e-7);
        assert_eq!(d.get(5, 0), 0.0);
        assert_eq!(d.get(2, 0), 0.0);

        // Upsampling phases 0.25 / 0.75.
        let mut q = Plane::filled(8, 1, 0.0);
        q.set(4, 0, 1.0);
        let u = bicubic_upsample2_plane(&q);
        let want = [
            (6, cubic_weight(1.25)),
            (7, cubic_weight(0.75)),
            (8, cubic_weight(0.25)),
            (9, cubic_weight(0.25)),
            (10, cubic_weight(0.75)),
            (11, cubic_weight(1.25)),
        ];
        for (x, w) in want {
            assert!((u.get(x, 0) as f64 - w).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn bilinear_weights() {
        let x = Tensor::<f64>::new([1, 1, 1, 2], alloc::vec![0.0, 4.0]).unwrap();
        let up = bilinear_upsample2(&x);
        assert_eq!(up.data(), &[0.0, 1.0, 3.0, 4.0, 0.0, 1.0, 3.0, 4.0]);
        let c = Tensor::<f32>::full([2, 3, 4, 4], 0.3);
        assert!(bilinear_upsample2(&c).data().iter().all(|&v| (v - 0.3).abs() < 1e-7));
    }

    #[test]
    fn odd_dims_rejected() {
        assert!(bicubic_downsample2_plane(&Plane::filled(5, 4, 0.0)).is_err());
    }

    #[test]
    fn bilinear_adjoint_identity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::uniform([2, 2, 3, 5], 1.0, &mut rng);
        let y = Tensor::<f64>::uniform([2, 2, 6, 10], 1.0, &mut rng);
        let lhs: f64 = bilinear_upsample2(&x).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = bilinear_upsample2_backward(&y).unwrap().data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
