//! 2-D cross-correlation with zero padding, forward and backward.
//!
//! Every convolution is lowered to `im2col` followed by one GEMM per sample.
//! The pixel-adaptive variant in [`crate::pac`] reuses the same lowering with
//! a per-pixel tap multiplier, which is why the column builder takes an
//! optional `taps` tensor.

use alloc::format;
use alloc::vec;

use crate::{Error, Real, Result, Shape, Tensor};

/// Weights and geometry of one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T: Real = f32> {
    /// `(c_out, c_in, k, k)`
    pub weight: Tensor<T>,
    /// `(c_out, 1, 1, 1)`; `None` means no bias term.
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> ConvParams<T> {
    /// Stride 1 with "same" padding `(k-1)/2`.
    pub fn same(weight: Tensor<T>, bias: Option<Tensor<T>>) -> Self {
        let k = weight.shape().h;
        ConvParams {
            weight,
            bias,
            stride: 1,
            padding: (k - 1) / 2,
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape().n
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape().c
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().h
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }

    pub(crate) fn validate(&self, op: &'static str) -> Result<()> {
        self.view().validate(op)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        conv_output_shape(input, self.weight.shape(), self.stride, self.padding, "conv2d")
    }
}

pub(crate) fn conv_output_shape(
    input: Shape,
    weight: Shape,
    stride: usize,
    padding: usize,
    op: &'static str,
) -> Result<Shape> {
    if input.c != weight.c {
        return Err(Error::shape(
            op,
            format!("input has {} channels, weight expects {}", input.c, weight.c),
        ));
    }
    let k = weight.h;
    let (hp, wp) = (input.h + 2 * padding, input.w + 2 * padding);
    if hp < k || wp < k {
        return Err(Error::invalid(
            op,
            format!("non-positive output size for input {:?}, kernel {k}", input),
        ));
    }
    Ok(Shape::new(
        input.n,
        weight.n,
        (hp - k) / stride + 1,
        (wp - k) / stride + 1,
    ))
}

/// Geometry shared by the column builders.
#[derive(Clone, Copy)]
pub(crate) struct Geometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl Geometry {
    pub fn new(input: Shape, out: Shape, k: usize, stride: usize, padding: usize) -> Self {
        Geometry {
            c_in: input.c,
            h: input.h,
            w: input.w,
            k,
            stride,
            padding,
            h_out: out.h,
            w_out: out.w,
        }
    }

    pub fn rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.h_out * self.w_out
    }

    /// Input coordinate feeding output `o` through tap `t`, if inside the image.
    #[inline]
    fn src(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        let p = (o * self.stride + t) as isize - self.padding as isize;
        if p >= 0 && (p as usize) < extent {
            Some(p as usize)
        } else {
            None
        }
    }
}

/// Build the `(c_in·k·k) × (h_out·w_out)` column matrix for one sample.
///
/// `taps`, when given, holds `k·k` planes of shape `h_out × w_out`; each
/// gathered value is multiplied by the plane entry of its tap.
pub(crate) fn im2col<T: Real>(x: &[T], g: &Geometry, taps: Option<&[T]>, col: &mut [T]) {
    let p = g.cols();
    let kk = g.k * g.k;
    for ci in 0..g.c_in {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let t = ky * g.k + kx;
                let row = &mut col[((ci * kk) + t) * p..((ci * kk) + t + 1) * p];
                let tap_plane = taps.map(|tp| &tp[t * p..(t + 1) * p]);
                for oy in 0..g.h_out {
                    let dst = &mut row[oy * g.w_out..(oy + 1) * g.w_out];
                    match g.src(oy, ky, g.h) {
                        None => dst.iter_mut().for_each(|v| *v = T::zero()),
                        Some(iy) => {
                            let src_row = &plane[iy * g.w..(iy + 1) * g.w];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d = match g.src(ox, kx, g.w) {
                                    None => T::zero(),
                                    Some(ix) => match tap_plane {
                                        None => src_row[ix],
                                        Some(tp) => tp[oy * g.w_out + ox] * src_row[ix],
                                    },
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add a column-gradient matrix back onto the input gradient.
pub(crate) fn col2im<T: Real>(col: &[T], g: &Geometry, taps: Option<&[T]>, dx: &mut [T]) {
    let p = g.cols();
    let kk = g.k * g.k;
    for ci in 0..g.c_in {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let t = ky * g.k + kx;
                let row = &col[((ci * kk) + t) * p..((ci * kk) + t + 1) * p];
                let tap_plane = taps.map(|tp| &tp[t * p..(t + 1) * p]);
                for oy in 0..g.h_out {
                    let Some(iy) = g.src(oy, ky, g.h) else { continue };
                    for ox in 0..g.w_out {
                        let Some(ix) = g.src(ox, kx, g.w) else { continue };
                        let mut v = row[oy * g.w_out + ox];
                        if let Some(tp) = tap_plane {
                            v = v * tp[oy * g.w_out + ox];
                        }
                        let d = &mut plane[iy * g.w + ix];
                        *d = *d + v;
                    }
                }
            }
        }
    }
}

/// Borrowed convolution parameters, used by the kernels and the autodiff tape.
#[derive(Clone, Copy)]
pub(crate) struct ConvView<'a, T: Real> {
    pub weight: &'a Tensor<T>,
    pub bias: Option<&'a Tensor<T>>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> ConvParams<T> {
    pub(crate) fn view(&self) -> ConvView<'_, T> {
        ConvView {
            weight: &self.weight,
            bias: self.bias.as_ref(),
            stride: self.stride,
            padding: self.padding,
        }
    }
}

impl<T: Real> ConvView<'_, T> {
    fn validate(&self, op: &'static str) -> Result<()> {
        let ws = self.weight.shape();
        if ws.h != ws.w || ws.h == 0 {
            return Err(Error::invalid(op, format!("kernel must be square, got {:?}", ws)));
        }
        if self.stride == 0 {
            return Err(Error::invalid(op, "stride must be positive"));
        }
        if let Some(b) = self.bias {
            b.expect_shape(Shape::new(ws.n, 1, 1, 1), op)?;
        }
        Ok(())
    }
}

/// Shared forward path for plain and pixel-adaptive convolution.
pub(crate) fn conv_forward_impl<T: Real>(
    x: &Tensor<T>,
    p: ConvView<'_, T>,
    taps: Option<&Tensor<T>>,
    op: &'static str,
) -> Result<Tensor<T>> {
    p.validate(op)?;
    let out_shape = conv_output_shape(x.shape(), p.weight.shape(), p.stride, p.padding, op)?;
    let g = Geometry::new(x.shape(), out_shape, p.weight.shape().h, p.stride, p.padding);
    let (m, k, n) = (out_shape.c, g.rows(), g.cols());
    let mut out = Tensor::zeros(out_shape);
    let mut col = vec![T::zero(); k * n];
    for s in 0..x.shape().n {
        im2col(x.sample(s), &g, taps.map(|t| t.sample(s)), &mut col);
        let dst = out.sample_mut(s);
        let beta = match p.bias {
            Some(b) => {
                for (co, bv) in b.data().iter().enumerate() {
                    dst[co * n..(co + 1) * n].iter_mut().for_each(|v| *v = *bv);
                }
                T::one()
            }
            None => T::zero(),
        };
        T::gemm(m, k, n, p.weight.data(), false, &col, false, beta, dst);
    }
    Ok(out)
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Real> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) fn conv_backward_impl<T: Real>(
    x: &Tensor<T>,
    p: ConvView<'_, T>,
    taps: Option<&Tensor<T>>,
    grad_out: &Tensor<T>,
    need_input: bool,
    op: &'static str,
) -> Result<ConvGrads<T>> {
    p.validate(op)?;
    let out_shape = conv_output_shape(x.shape(), p.weight.shape(), p.stride, p.padding, op)?;
    grad_out.expect_shape(out_shape, op)?;
    let g = Geometry::new(x.shape(), out_shape, p.weight.shape().h, p.stride, p.padding);
    let (m, k, n) = (out_shape.c, g.rows(), g.cols());

    let mut gw = Tensor::zeros(p.weight.shape());
    let mut gx = Tensor::zeros(if need_input { x.shape() } else { Shape::default() });
    let mut col = vec![T::zero(); k * n];
    let mut dcol = vec![T::zero(); if need_input { k * n } else { 0 }];
    for s in 0..x.shape().n {
        let go = grad_out.sample(s);
        im2col(x.sample(s), &g, taps.map(|t| t.sample(s)), &mut col);
        // dW += dY · colᵀ
        T::gemm(m, n, k, go, false, &col, true, T::one(), gw.data_mut());
        if need_input {
            // dcol = Wᵀ · dY
            T::gemm(k, m, n, p.weight.data(), true, go, false, T::zero(), &mut dcol);
            col2im(&dcol, &g, taps.map(|t| t.sample(s)), gx.sample_mut(s));
        }
    }
    let gb = p.bias.map(|b| {
        let mut gb = Tensor::zeros(b.shape());
        for s in 0..x.shape().n {
            let go = grad_out.sample(s);
            for co in 0..m {
                let acc: T = go[co * n..(co + 1) * n].iter().copied().sum();
                let d = &mut gb.data_mut()[co];
                *d = *d + acc;
            }
        }
        gb
    });
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Standard cross-correlation with zero padding.
pub fn conv2d<T: Real>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    conv_forward_impl(x, p.view(), None, "conv2d")
}

/// Analytic gradients of [`conv2d`].
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    conv_backward_impl(x, p.view(), None, grad_out, true, "conv2d_backward")
}

/// Reference nested-loop convolution, accumulated in `f64`.
///
/// Kept public so tests and the gradient tool can cross-check the GEMM path.
pub fn conv2d_naive<T: Real>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<f64>> {
    let out_shape = p.output_shape(x.shape())?;
    let k = p.kernel();
    let s = x.shape();
    let mut out = Tensor::<f64>::zeros(out_shape);
    for n in 0..out_shape.n {
        for co in 0..out_shape.c {
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let mut acc = p.bias.as_ref().map_or(0.0, |b| b.data()[co].as_f64());
                    for ci in 0..s.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                                let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                                if iy < 0 || ix < 0 || iy as usize >= s.h || ix as usize >= s.w {
                                    continue;
                                }
                                acc += p.weight.at(co, ci, ky, kx).as_f64()
                                    * x.at(n, ci, iy as usize, ix as usize).as_f64();
                            }
                        }
                    }
                    out.set(n, co, oy, ox, acc);
                }
            }
        }
    }
    Ok(out)
}
