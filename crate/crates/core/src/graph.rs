//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] is a single-owner tape: every op evaluates eagerly, stores its
//! output, and records how to push gradients back to its inputs. Calling
//! [`Graph::backward`] walks the tape once in reverse.


use alloc::vec::Vec;

use crate::conv::{conv_backward_impl, conv_forward_impl, ConvView};
use crate::loss;
use crate::ops;
use crate::pac::{partition_taps, PartitionMap};
use crate::{Error, Real, Result, Shape, Tensor};

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T: Real> {
    Input,
    Param,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    },
    Pac {
        x: Var,
        w: Var,
        b: Option<Var>,
        taps: Tensor<T>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    MulChannel(Var, Var),
    Gelu(Var),
    Sigmoid(Var),
    Relu(Var),
    PixelShuffle(Var, usize),
    AvgPool2(Var),
    Upsample2(Var),
    GlobalAvgPool(Var),
    Concat(Vec<Var>),
    L1 {
        x: Var,
        target: Tensor<T>,
    },
    Pffl {
        x: Var,
        target: Tensor<T>,
        exponent: f64,
    },
    WeightedSum(Vec<(Var, T)>),
    Dot {
        x: Var,
        weights: Tensor<T>,
    },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the root with respect to `v`, if any flowed there.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Tape of eagerly evaluated operations.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant leaf; no gradient is accumulated for it.
    pub fn input(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Input, false, "input")
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Param, true, "param")
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let value = conv_forward_impl(
            self.value(x),
            ConvView {
                weight: self.value(w),
                bias: b.map(|b| self.value(b)),
                stride,
                padding,
            },
            None,
            "conv2d",
        )?;
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(value, Op::Conv { x, w, b, stride, padding }, needs, "conv2d")
    }

    /// Pixel-adaptive 3×3 convolution; the partition map is not differentiated.
    pub fn pac(&mut self, x: Var, part: &PartitionMap<T>, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ps) = (self.shape(x), part.shape());
        if xs.n != ps.n || xs.h != ps.h || xs.w != ps.w {
            return Err(Error::shape("pac_forward", alloc::format!("{:?} vs {:?}", xs, ps)));
        }
        if self.shape(w).h != 3 {
            return Err(Error::invalid("pac_forward", "expects a 3x3 kernel"));
        }
        let taps = partition_taps(part);
        let value = conv_forward_impl(
            self.value(x),
            ConvView {
                weight: self.value(w),
                bias: b.map(|b| self.value(b)),
                stride: 1,
                padding: 1,
            },
            Some(&taps),
            "pac_forward",
        )?;
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(value, Op::Pac { x, w, b, taps }, needs, "pac_forward")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::add(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), needs, "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::mul(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), needs, "mul")
    }

    /// `x (n,c,h,w) ⊙ s (n,c,1,1)` broadcast over space.
    pub fn mul_channel(&mut self, x: Var, s: Var) -> Result<Var> {
        let v = ops::mul_channel(self.value(x), self.value(s))?;
        let needs = self.needs(x) || self.needs(s);
        self.push(v, Op::MulChannel(x, s), needs, "mul_channel")
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let v = ops::gelu(self.value(a));
        let needs = self.needs(a);
        self.push(v, Op::Gelu(a), needs, "gelu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = ops::sigmoid(self.value(a));
        let needs = self.needs(a);
        self.push(v, Op::Sigmoid(a), needs, "sigmoid")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = ops::relu(self.value(a));
        let needs = self.needs(a);
        self.push(v, Op::Relu(a), needs, "relu")
    }

    pub fn pixel_shuffle(&mut self, a: Var, r: usize) -> Result<Var> {
        let v = ops::pixel_shuffle(self.value(a), r)?;
        let needs = self.needs(a);
        self.push(v, Op::PixelShuffle(a, r), needs, "pixel_shuffle")
    }

    pub fn avg_pool2(&mut self, a: Var) -> Result<Var> {
        let v = ops::avg_pool2(self.value(a))?;
        let needs = self.needs(a);
        self.push(v, Op::AvgPool2(a), needs, "avg_pool2")
    }

    /// Bilinear ×2 upsampling.
    pub fn upsample2(&mut self, a: Var) -> Result<Var> {
        let v = crate::resample::bilinear_upsample2(self.value(a));
        let needs = self.needs(a);
        self.push(v, Op::Upsample2(a), needs, "upsample2")
    }

    pub fn global_avg_pool(&mut self, a: Var) -> Result<Var> {
        let v = ops::global_avg_pool(self.value(a));
        let needs = self.needs(a);
        self.push(v, Op::GlobalAvgPool(a), needs, "global_avg_pool")
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = crate::tensor::concat_channels(&refs)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(v, Op::Concat(parts.to_vec()), needs, "concat")
    }

    /// Mean absolute error against a constant target; scalar output.
    pub fn l1(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        let v = ops::l1(self.value(x), target)?;
        let needs = self.needs(x);
        self.push(
            Tensor::scalar(v),
            Op::L1 {
                x,
                target: target.clone(),
            },
            needs,
            "l1",
        )
    }

    /// Partitioned focal frequency loss against a constant target.
    pub fn pffl(&mut self, x: Var, target: &Tensor<T>, exponent: f64) -> Result<Var> {
        let v = loss::pffl(self.value(x), target, exponent)?;
        let needs = self.needs(x);
        self.push(
            Tensor::scalar(v),
            Op::Pffl {
                x,
                target: target.clone(),
                exponent,
            },
            needs,
            "pffl",
        )
    }

    /// `Σ cᵢ·vᵢ` over equally shaped values.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let (first, _) = *terms
            .first()
            .ok_or_else(|| Error::invalid("weighted_sum", "no terms"))?;
        let shape = self.shape(first);
        let mut out = Tensor::zeros(shape);
        for &(v, c) in terms {
            let t = self.value(v);
            t.expect_shape(shape, "weighted_sum")?;
            for (o, &x) in out.data_mut().iter_mut().zip(t.data()) {
                *o = *o + c * x;
            }
        }
        let needs = terms.iter().any(|&(v, _)| self.needs(v));
        self.push(out, Op::WeightedSum(terms.to_vec()), needs, "weighted_sum")
    }

    /// `Σ x ⊙ weights` against a constant tensor; scalar output.
    pub fn dot_const(&mut self, x: Var, weights: &Tensor<T>) -> Result<Var> {
        let xv = self.value(x);
        weights.expect_shape(xv.shape(), "dot_const")?;
        let v: T = xv.data().iter().zip(weights.data()).map(|(&a, &b)| a * b).sum();
        let needs = self.needs(x);
        self.push(
            Tensor::scalar(v),
            Op::Dot {
                x,
                weights: weights.clone(),
            },
            needs,
            "dot_const",
        )
    }

    /// Scalar value of a `(1,1,1,1)` node.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v).data()[0]
    }

    /// Back-propagate from `root`, seeding it with ones.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.shape(root), T::one()));

        fn acc<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if !g.all_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    grads[i] = Some(g);
                }
                Op::Conv { x, w, b, stride, padding } => {
                    let view = ConvView {
                        weight: self.value(*w),
                        bias: b.map(|b| self.value(b)),
                        stride: *stride,
                        padding: *padding,
                    };
                    let cg = conv_backward_impl(self.value(*x), view, None, &g, self.needs(*x), "conv2d_backward")?;
                    self.scatter_conv(&mut grads, *x, *w, *b, cg, acc);
                }
                Op::Pac { x, w, b, taps } => {
                    let view = ConvView {
                        weight: self.value(*w),
                        bias: b.map(|b| self.value(b)),
                        stride: 1,
                        padding: 1,
                    };
                    let cg = conv_backward_impl(self.value(*x), view, Some(taps), &g, self.needs(*x), "pac_backward")?;
                    self.scatter_conv(&mut grads, *x, *w, *b, cg, acc);
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, ops::mul(&g, self.value(*b))?);
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, ops::mul(&g, self.value(*a))?);
                    }
                }
                Op::MulChannel(x, s) => {
                    if self.needs(*x) {
                        acc(&mut grads, *x, ops::mul_channel(&g, self.value(*s))?);
                    }
                    if self.needs(*s) {
                        let xv = self.value(*x);
                        let xs = xv.shape();
                        let gs = Tensor::from_fn([xs.n, xs.c, 1, 1], |n, c, _, _| {
                            g.plane(n, c).iter().zip(xv.plane(n, c)).map(|(&a, &b)| a * b).sum()
                        });
                        acc(&mut grads, *s, gs);
                    }
                }
                Op::Gelu(a) => {
                    let gx = g.zip_map(self.value(*a), "gelu_backward", |g, x| g * ops::gelu_grad_scalar(x))?;
                    acc(&mut grads, *a, gx);
                }
                Op::Sigmoid(a) => {
                    let gx = g.zip_map(&node.value, "sigmoid_backward", |g, y| g * y * (T::one() - y))?;
                    acc(&mut grads, *a, gx);
                }
                Op::Relu(a) => {
                    let gx = g.zip_map(self.value(*a), "relu_backward", |g, x| if x > T::zero() { g } else { T::zero() })?;
                    acc(&mut grads, *a, gx);
                }
                Op::PixelShuffle(a, r) => {
                    acc(&mut grads, *a, ops::pixel_unshuffle(&g, *r)?);
                }
                Op::AvgPool2(a) => {
                    acc(&mut grads, *a, ops::avg_pool2_backward(&g));
                }
                Op::Upsample2(a) => {
                    acc(&mut grads, *a, crate::resample::bilinear_upsample2_backward(&g)?);
                }
                Op::GlobalAvgPool(a) => {
                    let shape = self.shape(*a);
                    acc(&mut grads, *a, ops::global_avg_pool_backward(&g, shape));
                }
                Op::Concat(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let c = self.shape(p).c;
                        if self.needs(p) {
                            acc(&mut grads, p, g.slice_channels(c0, c0 + c));
                        }
                        c0 += c;
                    }
                }
                Op::L1 { x, target } => {
                    let up = g.data()[0];
                    acc(&mut grads, *x, ops::l1_backward(self.value(*x), target, up));
                }
                Op::Pffl { x, target, exponent } => {
                    let up = g.data()[0];
                    acc(&mut grads, *x, loss::pffl_backward(self.value(*x), target, *exponent, up)?);
                }
                Op::Dot { x, weights } => {
                    let mut gx = weights.clone();
                    gx.scale(g.data()[0]);
                    acc(&mut grads, *x, gx);
                }
                Op::WeightedSum(terms) => {
                    for &(v, c) in terms {
                        if self.needs(v) {
                            let mut gv = g.clone();
                            gv.scale(c);
                            acc(&mut grads, v, gv);
                        }
                    }
                }
            }
        }
        // Only parameter leaves keep their gradients.
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Param) && i != root.0 {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn scatter_conv(
        &self,
        grads: &mut [Option<Tensor<T>>],
        x: Var,
        w: Var,
        b: Option<Var>,
        cg: crate::conv::ConvGrads<T>,
        acc: fn(&mut [Option<Tensor<T>>], Var, Tensor<T>),
    ) {
        if self.needs(x) {
            acc(grads, x, cg.input);
        }
        if self.needs(w) {
            acc(grads, w, cg.weight);
        }
        if let (Some(b), Some(gb)) = (b, cg.bias) {
            if self.needs(b) {
                acc(grads, b, gb);
            }
        }
    }
}

