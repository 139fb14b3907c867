//! The super-resolution network: head, prior-guided side branch, U-net with
//! attention fusion, Repconv reconstruction and a ×2 pixel-shuffle tail.
//!
//! Weights live in a flat name → tensor map. The forward pass is written once
//! against [`Graph`], so training, inference and gradient checks share it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::conv::ConvParams;
use crate::graph::{Graph, Var};
use crate::pac::PartitionMap;
use crate::reparam::{fuse, RepconvParams};
use crate::{Error, Real, Result, Shape, Tensor};

/// Channels of the prior input: prediction, residual, QP.
pub const PRIOR_CHANNELS: usize = 3;
pub const MAX_BLOCKS: usize = 16;

/// Structural switches for ablation runs. All `false` is the full model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Drop the prior branch; attention blocks receive zero side features.
    pub no_cdgb: bool,
    /// Replace both partition-adaptive convolutions with plain 3×3 convolutions.
    pub no_pac: bool,
    /// Replace attention fusion with a 3×3 convolution over `[x, side]`.
    pub no_attention: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub base_channels: usize,
    /// Repconv blocks in the reconstruction stage.
    pub m: usize,
    pub scale: usize,
    pub depth_multiplier: usize,
    pub unet_levels: usize,
    /// Hidden width of the channel-attention bottleneck.
    pub attention_hidden: usize,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_channels: 32,
            m: 5,
            scale: 2,
            depth_multiplier: 2,
            unet_levels: 3,
            attention_hidden: 8,
            ablation: Ablation::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::invalid("model config", d));
        if self.scale != 2 {
            return bad(format!("scale must be 2, got {}", self.scale));
        }
        if !(1..=MAX_BLOCKS).contains(&self.m) {
            return bad(format!("m must be in 1..={MAX_BLOCKS}, got {}", self.m));
        }
        if self.unet_levels != 3 {
            return bad(format!("unet_levels must be 3, got {}", self.unet_levels));
        }
        if self.base_channels == 0 || self.depth_multiplier == 0 || self.attention_hidden == 0 {
            return bad("channel widths must be positive".to_string());
        }
        Ok(())
    }
}

/// Whether Repconv blocks are stored as branches or as single 3×3 kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Train,
    Fused,
}

/// Prefixes of every Repconv block, in forward order.
pub fn repconv_blocks(cfg: &ModelConfig) -> Vec<String> {
    let mut v = Vec::new();
    if !cfg.ablation.no_cdgb {
        v.push("cdgb.rep".to_string());
    }
    v.extend((0..cfg.m).map(|i| format!("rec.{i}")));
    v
}

/// Every weight name and shape required by `cfg` in the given form.
pub fn schema(cfg: &ModelConfig, form: Form) -> Vec<(String, Shape)> {
    let c = cfg.base_channels;
    let mut s: Vec<(String, Shape)> = Vec::new();
    let mut conv = |name: &str, co: usize, ci: usize, k: usize, bias: bool| {
        s.push((format!("{name}.weight"), Shape::new(co, ci, k, k)));
        if bias {
            s.push((format!("{name}.bias"), Shape::new(co, 1, 1, 1)));
        }
    };
    let rep = |conv: &mut dyn FnMut(&str, usize, usize, usize, bool), p: &str| match form {
        Form::Train => {
            let hidden = cfg.depth_multiplier * c;
            conv(&format!("{p}.a"), c, c, 3, true);
            conv(&format!("{p}.b"), c, c, 3, true);
            conv(&format!("{p}.expand"), hidden, c, 1, false);
            conv(&format!("{p}.mix"), hidden, hidden, 3, true);
            conv(&format!("{p}.project"), c, hidden, 1, true);
        }
        Form::Fused => conv(&format!("{p}.fused"), c, c, 3, true),
    };

    conv("head", c, 3, 3, true);
    if !cfg.ablation.no_cdgb {
        conv("cdgb.prior", c, PRIOR_CHANNELS, 3, true);
        conv("cdgb.gamma", c, 2 * c, 3, true);
        conv("cdgb.beta", c, 2 * c, 3, true);
        rep(&mut conv, "cdgb.rep");
        for k in 1..=2 {
            conv(&format!("cdgb.down{k}"), c, c, 3, true);
            conv(&format!("cdgb.pac{k}"), c, c, 3, true);
        }
    }
    for k in 0..3 {
        if cfg.ablation.no_attention {
            conv(&format!("unet.att{k}.merge"), c, 2 * c, 3, true);
        } else {
            conv(&format!("unet.att{k}.gate"), c, c, 1, true);
            conv(&format!("unet.att{k}.fc1"), cfg.attention_hidden, c, 1, true);
            conv(&format!("unet.att{k}.fc2"), c, cfg.attention_hidden, 1, true);
        }
    }
    for k in 1..=2 {
        conv(&format!("unet.down{k}"), c, c, 3, true);
        conv(&format!("unet.up{k}"), 4 * c, c, 1, true);
    }
    for i in 0..cfg.m {
        rep(&mut conv, &format!("rec.{i}"));
    }
    conv("tail", 3 * cfg.scale * cfg.scale, c, 3, true);
    s
}

/// Scalar parameter count of the configured network.
pub fn param_count(cfg: &ModelConfig, form: Form) -> usize {
    schema(cfg, form).iter().map(|(_, s)| s.numel()).sum()
}

/// Coarse module a weight belongs to, used for reporting.
pub fn module_of(name: &str) -> &str {
    let mut parts = name.splitn(3, '.');
    let first = parts.next().unwrap_or(name);
    match first {
        "unet" => {
            let second = parts.next().unwrap_or("");
            if second.starts_with("att") {
                "attention"
            } else {
                "unet"
            }
        }
        "rec" => "repconv",
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T: Real = f32> {
    pub form: Form,
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ModelWeights<T> {
    /// Documented initialization: fan-in uniform for convolutions, zero biases,
    /// `branch_b` of each Repconv at half gain, γ bias at one (identity
    /// modulation) and an all-zero tail so the untrained network reproduces the
    /// bilinear skip.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut tensors = BTreeMap::new();
        for (name, shape) in schema(cfg, Form::Train) {
            let t = if name.ends_with(".bias") {
                if name == "cdgb.gamma.bias" {
                    Tensor::full(shape, T::one())
                } else {
                    Tensor::zeros(shape)
                }
            } else if name.starts_with("tail.") {
                Tensor::zeros(shape)
            } else {
                let gain = if name.ends_with(".b.weight") { 0.5 } else { 1.0 };
                Tensor::kaiming(shape, gain, rng)
            };
            tensors.insert(name, t);
        }
        Ok(ModelWeights {
            form: Form::Train,
            tensors,
        })
    }

    pub fn zeros(cfg: &ModelConfig, form: Form) -> Self {
        ModelWeights {
            form,
            tensors: schema(cfg, form)
                .into_iter()
                .map(|(n, s)| (n, Tensor::zeros(s)))
                .collect(),
        }
    }

    /// Check that names and shapes match the schema exactly.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        cfg.validate()?;
        let expected = schema(cfg, self.form);
        for (name, shape) in &expected {
            match self.tensors.get(name) {
                None => return Err(Error::MissingTensor(name.clone())),
                Some(t) if t.shape() != *shape => {
                    return Err(Error::shape(
                        "model weights",
                        format!("{name}: expected {shape:?}, got {:?}", t.shape()),
                    ))
                }
                _ => {}
            }
        }
        if self.tensors.len() != expected.len() {
            let known: BTreeMap<&str, ()> = expected.iter().map(|(n, _)| (n.as_str(), ())).collect();
            let extra = self
                .tensors
                .keys()
                .find(|k| !known.contains_key(k.as_str()))
                .cloned()
                .unwrap_or_default();
            return Err(Error::invalid("model weights", format!("unexpected tensor {extra}")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelWeights<U> {
        ModelWeights {
            form: self.form,
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    fn conv_params(&self, name: &str, bias: bool) -> Result<ConvParams<T>> {
        let w = self.get(&format!("{name}.weight"))?.clone();
        let b = if bias {
            Some(self.get(&format!("{name}.bias"))?.clone())
        } else {
            None
        };
        Ok(ConvParams::same(w, b))
    }

    /// Train-form Repconv block stored under `prefix`.
    pub fn repconv(&self, prefix: &str, depth_multiplier: usize) -> Result<RepconvParams<T>> {
        Ok(RepconvParams {
            branch_a: self.conv_params(&format!("{prefix}.a"), true)?,
            branch_b: self.conv_params(&format!("{prefix}.b"), true)?,
            expand: self.conv_params(&format!("{prefix}.expand"), false)?,
            mix: self.conv_params(&format!("{prefix}.mix"), true)?,
            project: self.conv_params(&format!("{prefix}.project"), true)?,
            depth_multiplier,
        })
    }

    /// Collapse every Repconv block into `<block>.fused.{weight,bias}`.
    pub fn fused(&self, cfg: &ModelConfig) -> Result<ModelWeights<T>> {
        self.validate(cfg)?;
        if self.form == Form::Fused {
            return Ok(self.clone());
        }
        let mut tensors = self.tensors.clone();
        for prefix in repconv_blocks(cfg) {
            let f = fuse(&self.repconv(&prefix, cfg.depth_multiplier)?)?;
            let branch = format!("{prefix}.");
            tensors.retain(|k, _| !k.starts_with(&branch));
            tensors.insert(format!("{prefix}.fused.weight"), f.0.weight);
            tensors.insert(
                format!("{prefix}.fused.bias"),
                f.0.bias.expect("fused conv carries a bias"),
            );
        }
        let out = ModelWeights {
            form: Form::Fused,
            tensors,
        };
        out.validate(cfg)?;
        Ok(out)
    }
}

/// Weight tensors registered on a graph.
#[derive(Debug, Clone)]
pub struct Bound {
    pub form: Form,
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Register all weights; as trainable leaves when `trainable`, otherwise
    /// as constants.
    pub fn new<T: Real>(g: &mut Graph<T>, w: &ModelWeights<T>, trainable: bool) -> Result<Self> {
        let mut vars = BTreeMap::new();
        for (name, t) in &w.tensors {
            let v = if trainable {
                g.param(t.clone())?
            } else {
                g.input(t.clone())?
            };
            vars.insert(name.clone(), v);
        }
        Ok(Bound { form: w.form, vars })
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    /// Point `name` at another node, e.g. a probe tensor in a gradient check.
    pub fn rebind(&mut self, name: &str, v: Var) -> Result<()> {
        match self.vars.get_mut(name) {
            Some(slot) => {
                *slot = v;
                Ok(())
            }
            None => Err(Error::MissingTensor(name.to_string())),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn conv<T: Real>(&self, g: &mut Graph<T>, x: Var, name: &str, stride: usize) -> Result<Var> {
        let w = self.var(&format!("{name}.weight"))?;
        let b = self.vars.get(&format!("{name}.bias")).copied();
        let k = g.shape(w).h;
        let pad = (k - 1) / 2;
        g.conv2d(x, w, b, stride, pad)
    }

    fn pac<T: Real>(&self, g: &mut Graph<T>, x: Var, part: &PartitionMap<T>, name: &str) -> Result<Var> {
        let w = self.var(&format!("{name}.weight"))?;
        let b = self.var(&format!("{name}.bias"))?;
        g.pac(x, part, w, Some(b))
    }
}

/// `(n, 3, h, w)` → `(n, C, h, w)`.
pub fn head<T: Real>(g: &mut Graph<T>, w: &Bound, lr: Var) -> Result<Var> {
    if g.shape(lr).c != 3 {
        return Err(Error::shape("head", format!("expected 3 channels, got {:?}", g.shape(lr))));
    }
    w.conv(g, lr, "head", 1)
}

/// A Repconv block in whichever form the weights are stored.
pub fn repconv<T: Real>(g: &mut Graph<T>, w: &Bound, x: Var, prefix: &str) -> Result<Var> {
    match w.form {
        Form::Fused => w.conv(g, x, &format!("{prefix}.fused"), 1),
        Form::Train => {
            let a = w.conv(g, x, &format!("{prefix}.a"), 1)?;
            let b = w.conv(g, x, &format!("{prefix}.b"), 1)?;
            let e = w.conv(g, x, &format!("{prefix}.expand"), 1)?;
            let m = w.conv(g, e, &format!("{prefix}.mix"), 1)?;
            let c = w.conv(g, m, &format!("{prefix}.project"), 1)?;
            let ab = g.add(a, b)?;
            g.add(ab, c)
        }
    }
}

/// Side features of the prior branch at full, half and quarter resolution.
#[derive(Debug, Clone, Copy)]
pub struct CdgbFeatures {
    pub f0: Var,
    pub f1: Var,
    pub f2: Var,
    pub f3: Var,
}

/// Affine modulation of the LR features by the priors, then one Repconv and
/// two downsample + partition-adaptive stages.
pub fn cdgb_forward<T: Real>(
    g: &mut Graph<T>,
    w: &Bound,
    cfg: &ModelConfig,
    f_in: Var,
    priors: Var,
    part: &PartitionMap<T>,
) -> Result<CdgbFeatures> {
    let (fs, ps) = (g.shape(f_in), g.shape(priors));
    if fs.n != ps.n || fs.h != ps.h || fs.w != ps.w || ps.c != PRIOR_CHANNELS {
        return Err(Error::shape("cdgb_forward", format!("features {fs:?} vs priors {ps:?}")));
    }
    if fs.h % 4 != 0 || fs.w % 4 != 0 {
        return Err(Error::shape("cdgb_forward", format!("{}x{} not divisible by 4", fs.h, fs.w)));
    }
    let prior_feat = w.conv(g, priors, "cdgb.prior", 1)?;
    let joint = g.concat(&[prior_feat, f_in])?;
    let gamma = w.conv(g, joint, "cdgb.gamma", 1)?;
    let beta = w.conv(g, joint, "cdgb.beta", 1)?;
    let mod_ = g.mul(gamma, f_in)?;
    let f0 = g.add(mod_, beta)?;
    let f1 = repconv(g, w, f0, "cdgb.rep")?;
    let half = part.downsample()?;
    let stage = |g: &mut Graph<T>, x: Var, k: usize, p: &PartitionMap<T>| -> Result<Var> {
        let d = w.conv(g, x, &format!("cdgb.down{k}"), 2)?;
        if cfg.ablation.no_pac {
            w.conv(g, d, &format!("cdgb.pac{k}"), 1)
        } else {
            w.pac(g, d, p, &format!("cdgb.pac{k}"))
        }
    };
    // The first PAC runs on the half-resolution features, so its guide is the
    // map at that resolution; the second uses the map pooled once more.
    let f2 = stage(g, f1, 1, &half)?;
    let quarter = half.downsample()?;
    let f3 = stage(g, f2, 2, &quarter)?;
    Ok(CdgbFeatures { f0, f1, f2, f3 })
}

/// Gate `x` by `side`, re-weight channels, add `side` back.
pub fn attention_fuse<T: Real>(g: &mut Graph<T>, w: &Bound, x: Var, side: Var, prefix: &str) -> Result<Var> {
    if g.shape(x) != g.shape(side) {
        return Err(Error::shape(
            "attention_fuse",
            format!("{:?} vs {:?}", g.shape(x), g.shape(side)),
        ));
    }
    let gate_logits = w.conv(g, side, &format!("{prefix}.gate"), 1)?;
    let gate = g.sigmoid(gate_logits)?;
    let y = g.mul(gate, x)?;
    let pooled = g.global_avg_pool(y)?;
    let h = w.conv(g, pooled, &format!("{prefix}.fc1"), 1)?;
    let h = g.gelu(h)?;
    let s = w.conv(g, h, &format!("{prefix}.fc2"), 1)?;
    let s = g.sigmoid(s)?;
    let ys = g.mul_channel(y, s)?;
    g.add(ys, side)
}

fn fuse_level<T: Real>(g: &mut Graph<T>, w: &Bound, cfg: &ModelConfig, x: Var, side: Var, k: usize) -> Result<Var> {
    let prefix = format!("unet.att{k}");
    if cfg.ablation.no_attention {
        let cat = g.concat(&[x, side])?;
        w.conv(g, cat, &format!("{prefix}.merge"), 1)
    } else {
        attention_fuse(g, w, x, side, &prefix)
    }
}

/// Three-level U-net; side features enter at each level.
pub fn unet_forward<T: Real>(
    g: &mut Graph<T>,
    w: &Bound,
    cfg: &ModelConfig,
    f_in: Var,
    sides: [Var; 3],
) -> Result<Var> {
    let e0 = fuse_level(g, w, cfg, f_in, sides[0], 0)?;
    let d = w.conv(g, e0, "unet.down1", 2)?;
    let e1 = fuse_level(g, w, cfg, d, sides[1], 1)?;
    let d = w.conv(g, e1, "unet.down2", 2)?;
    let e2 = fuse_level(g, w, cfg, d, sides[2], 2)?;
    let up = |g: &mut Graph<T>, x: Var, k: usize| -> Result<Var> {
        let u = w.conv(g, x, &format!("unet.up{k}"), 1)?;
        g.pixel_shuffle(u, 2)
    };
    let u1 = up(g, e2, 1)?;
    if g.shape(u1) != g.shape(e1) {
        return Err(Error::shape("unet_forward", format!("skip {:?} vs {:?}", g.shape(u1), g.shape(e1))));
    }
    let d1 = g.add(u1, e1)?;
    let u0 = up(g, d1, 2)?;
    g.add(u0, e0)
}

/// `m` Repconv blocks (each followed by GELU), tail conv and pixel shuffle.
pub fn reconstruct<T: Real>(g: &mut Graph<T>, w: &Bound, cfg: &ModelConfig, d0: Var) -> Result<Var> {
    let mut x = d0;
    for i in 0..cfg.m {
        let r = repconv(g, w, x, &format!("rec.{i}"))?;
        x = g.gelu(r)?;
    }
    let t = w.conv(g, x, "tail", 1)?;
    g.pixel_shuffle(t, cfg.scale)
}

/// Full network on graph nodes. `lr` is `(n,3,h,w)` in `[0,1]`, `priors` is
/// `(n,3,h,w)` and `part` `(n,1,h,w)`. Output is unclamped.
pub fn cpgsr_forward<T: Real>(
    g: &mut Graph<T>,
    w: &Bound,
    cfg: &ModelConfig,
    lr: Var,
    priors: Var,
    part: &PartitionMap<T>,
) -> Result<Var> {
    let s = g.shape(lr);
    if s.h % 4 != 0 || s.w % 4 != 0 {
        return Err(Error::shape("cpgsr_forward", format!("{}x{} not divisible by 4", s.h, s.w)));
    }
    let f_in = head(g, w, lr)?;
    let sides = if cfg.ablation.no_cdgb {
        let c = cfg.base_channels;
        let z = |g: &mut Graph<T>, d: usize| g.input(Tensor::zeros([s.n, c, s.h / d, s.w / d]));
        [z(g, 1)?, z(g, 2)?, z(g, 4)?]
    } else {
        let f = cdgb_forward(g, w, cfg, f_in, priors, part)?;
        [f.f1, f.f2, f.f3]
    };
    let d0 = unet_forward(g, w, cfg, f_in, sides)?;
    let rec = reconstruct(g, w, cfg, d0)?;
    let skip = g.upsample2(lr)?;
    g.add(rec, skip)
}

/// Inference on plain tensors.
pub fn forward<T: Real>(
    cfg: &ModelConfig,
    weights: &ModelWeights<T>,
    lr: &Tensor<T>,
    priors: &Tensor<T>,
    part: &PartitionMap<T>,
) -> Result<Tensor<T>> {
    weights.validate(cfg)?;
    let mut g = Graph::new();
    let w = Bound::new(&mut g, weights, false)?;
    let x = g.input(lr.clone())?;
    let p = g.input(priors.clone())?;
    let out = cpgsr_forward(&mut g, &w, cfg, x, p, part)?;
    Ok(g.value(out).clone())
}
