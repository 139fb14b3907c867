//! Layout, pooling and element-wise operators with their analytic backward
//! passes.

use alloc::format;

use crate::{Error, Real, Result, Shape, Tensor};

/// Depth-to-space: `(n, c·r², h, w) → (n, c, h·r, w·r)`.
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || s.c % (r * r) != 0 {
        return Err(Error::invalid(
            "pixel_shuffle",
            format!("{} channels not divisible by r²={}", s.c, r * r),
        ));
    }
    let c_out = s.c / (r * r);
    Ok(Tensor::from_fn([s.n, c_out, s.h * r, s.w * r], |n, c, y, xx| {
        let (i, j) = (y % r, xx % r);
        x.at(n, c * r * r + i * r + j, y / r, xx / r)
    }))
}

/// Space-to-depth, the inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || s.h % r != 0 || s.w % r != 0 {
        return Err(Error::invalid(
            "pixel_unshuffle",
            format!("spatial dims {}x{} not divisible by {r}", s.h, s.w),
        ));
    }
    Ok(Tensor::from_fn([s.n, s.c * r * r, s.h / r, s.w / r], |n, c, y, xx| {
        let (base, sub) = (c / (r * r), c % (r * r));
        x.at(n, base, y * r + sub / r, xx * r + sub % r)
    }))
}

/// 2×2 mean pooling with stride 2.
pub fn avg_pool2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::invalid(
            "avg_pool2",
            format!("odd spatial dims {}x{}", s.h, s.w),
        ));
    }
    let quarter = T::lit(0.25);
    Ok(Tensor::from_fn([s.n, s.c, s.h / 2, s.w / 2], |n, c, y, xx| {
        let (y0, x0) = (2 * y, 2 * xx);
        (x.at(n, c, y0, x0) + x.at(n, c, y0, x0 + 1) + x.at(n, c, y0 + 1, x0) + x.at(n, c, y0 + 1, x0 + 1))
            * quarter
    }))
}

pub fn avg_pool2_backward<T: Real>(grad_out: &Tensor<T>) -> Tensor<T> {
    let s = grad_out.shape();
    let quarter = T::lit(0.25);
    Tensor::from_fn([s.n, s.c, s.h * 2, s.w * 2], |n, c, y, x| {
        grad_out.at(n, c, y / 2, x / 2) * quarter
    })
}

/// Spatial mean per channel: `(n, c, h, w) → (n, c, 1, 1)`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let inv = T::one() / T::lit(s.plane() as f64);
    Tensor::from_fn([s.n, s.c, 1, 1], |n, c, _, _| {
        x.plane(n, c).iter().copied().sum::<T>() * inv
    })
}

pub fn global_avg_pool_backward<T: Real>(grad_out: &Tensor<T>, input: Shape) -> Tensor<T> {
    let inv = T::one() / T::lit(input.plane() as f64);
    Tensor::from_fn(input, |n, c, _, _| grad_out.at(n, c, 0, 0) * inv)
}

pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, "add", |x, y| x + y)
}

pub fn mul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, "mul", |x, y| x * y)
}

/// Scale every channel plane of `x` by the matching entry of `s: (n, c, 1, 1)`.
pub fn mul_channel<T: Real>(x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    let xs = x.shape();
    s.expect_shape(Shape::new(xs.n, xs.c, 1, 1), "mul_channel")?;
    Ok(Tensor::from_fn(xs, |n, c, y, xx| x.at(n, c, y, xx) * s.at(n, c, 0, 0)))
}

const GELU_CUBIC: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// GELU, tanh approximation: `½x(1 + tanh(√(2/π)(x + 0.044715x³)))`.
#[inline]
pub fn gelu_scalar<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    let inner = T::lit(SQRT_2_OVER_PI) * (x + T::lit(GELU_CUBIC) * x * x * x);
    half * x * (T::one() + inner.tanh())
}

#[inline]
pub fn gelu_grad_scalar<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    let k = T::lit(SQRT_2_OVER_PI);
    let c = T::lit(GELU_CUBIC);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (T::one() + t)
        + half * x * (T::one() - t * t) * k * (T::one() + T::lit(3.0) * c * x * x)
}

#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn gelu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(gelu_scalar)
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Mean absolute difference.
pub fn l1<T: Real>(x: &Tensor<T>, y: &Tensor<T>) -> Result<T> {
    x.expect_shape(y.shape(), "l1")?;
    if x.is_empty() {
        return Err(Error::invalid("l1", "empty tensors"));
    }
    let s: T = x.data().iter().zip(y.data()).map(|(&a, &b)| (a - b).abs()).sum();
    Ok(s / T::lit(x.len() as f64))
}

/// `d l1 / d x`, scaled by `upstream`. The subgradient at zero is 0.
pub fn l1_backward<T: Real>(x: &Tensor<T>, y: &Tensor<T>, upstream: T) -> Tensor<T> {
    let scale = upstream / T::lit(x.len() as f64);
    Tensor::new(
        x.shape(),
        x.data()
            .iter()
            .zip(y.data())
            .map(|(&a, &b)| {
                if a > b {
                    scale
                } else if a < b {
                    -scale
                } else {
                    T::zero()
                }
            })
            .collect(),
    )
    .expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shuffle_identity_and_example() {
        let x = Tensor::<f32>::from_fn([1, 3, 2, 2], |_, c, y, x| (c * 4 + y * 2 + x) as f32);
        assert_eq!(pixel_shuffle(&x, 1).unwrap(), x);
        let v = Tensor::<f32>::new([1, 4, 1, 1], alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = pixel_shuffle(&v, 2).unwrap();
        assert_eq!(s.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(s.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(pixel_shuffle(&Tensor::<f32>::zeros([1, 3, 1, 1]), 2).is_err());
    }

    #[test]
    fn pool_examples() {
        let c = Tensor::<f32>::full([1, 2, 4, 6], 3.5);
        let p = avg_pool2(&c).unwrap();
        assert_eq!(p.shape(), Shape::new(1, 2, 2, 3));
        assert!(p.data().iter().all(|&v| v == 3.5));

        let t = Tensor::<f32>::new([1, 1, 2, 2], alloc::vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(avg_pool2(&t).unwrap().data(), &[4.0]);

        let checker = Tensor::<f32>::from_fn([1, 1, 8, 8], |_, _, y, x| ((y + x) % 2) as f32);
        let twice = avg_pool2(&avg_pool2(&checker).unwrap()).unwrap();
        assert!(twice.data().iter().all(|&v| v == 0.5));

        assert!(avg_pool2(&Tensor::<f32>::zeros([1, 1, 3, 4])).is_err());
    }

    #[test]
    fn scalar_activations() {
        assert_eq!(gelu_scalar(0.0f64), 0.0);
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        let x = Tensor::<f32>::from_fn([1, 1, 3, 3], |_, _, y, x| y as f32 - x as f32);
        assert_eq!(l1(&x, &x).unwrap(), 0.0);
        assert_eq!(relu(&x).data().iter().filter(|&&v| v < 0.0).count(), 0);
    }

    #[test]
    fn activation_derivatives_match_central_differences() {
        let h = 1e-6;
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            let fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad_scalar(x)).abs() < 1e-8, "gelu' at {x}");
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        let a = Tensor::<f32>::zeros([1, 1, 2, 2]);
        let b = Tensor::<f32>::zeros([1, 1, 2, 3]);
        assert!(add(&a, &b).is_err());
        assert!(mul(&a, &b).is_err());
        assert!(l1(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn shuffle_roundtrip(r in 1usize..4, c in 1usize..3, h in 1usize..4, w in 1usize..4, seed in any::<u32>()) {
            let x = Tensor::<f32>::from_fn([1, c * r * r, h, w], |_, ch, y, xx| {
                ((seed as usize ^ (ch * 131 + y * 17 + xx * 7)) % 1000) as f32
            });
            let up = pixel_shuffle(&x, r).unwrap();
            prop_assert_eq!(pixel_unshuffle(&up, r).unwrap(), x);
        }
    }
}
