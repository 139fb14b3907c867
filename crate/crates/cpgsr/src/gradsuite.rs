//! Finite-difference suites run by `cpgsr gradcheck` and the acceptance target.

use std::fmt;
use std::str::FromStr;

use cpgsr_core::gradcheck::{gradcheck, gradcheck_frozen, GradcheckOptions, GradcheckReport};
use cpgsr_core::graph::{Graph, Var};
use cpgsr_core::loss::{pffl_weights, pffl_with_weights};
use cpgsr_core::model::{attention_fuse, cpgsr_forward, Bound, ModelConfig, ModelWeights};
use cpgsr_core::ops;
use cpgsr_core::pac::{encode_cu_side, PartitionMap};
use cpgsr_core::{Result, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Normwise relative tolerance for single operators.
pub const PRIMITIVE_TOL: f64 = 1e-3;
/// Tolerance for the whole network under the training loss.
pub const END_TO_END_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Conv2d,
    Pac,
    Attention,
    Pffl,
    Model,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Conv2d, Suite::Pac, Suite::Attention, Suite::Pffl, Suite::Model];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Conv2d => "conv2d",
            Suite::Pac => "pac",
            Suite::Attention => "attention",
            Suite::Pffl => "pffl",
            Suite::Model => "model",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown module {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub report: GradcheckReport,
}

fn rand(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape, 1.0, rng)
}

/// Blocky map mixing three CU sizes so some taps are damped and some cut.
fn patterned_map(n: usize, h: usize, w: usize, seed: u64) -> PartitionMap<f64> {
    let sides = [4usize, 8, 16];
    let t = Tensor::from_fn([n, 1, h, w], |b, _, y, x| {
        encode_cu_side(sides[(y / 3 + x / 2 + b + seed as usize) % 3])
    });
    PartitionMap::new(t).expect("single channel")
}

fn opts(seed: u64, max_coords: usize) -> GradcheckOptions {
    GradcheckOptions {
        seed,
        max_coords,
        ..Default::default()
    }
}

fn conv2d(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for stride in [1, 2] {
        let w = rand([3, 2, 3, 3], &mut rng);
        let b = rand([3, 1, 1, 1], &mut rng);
        let x = rand([2, 2, 6, 6], &mut rng);
        let r = gradcheck(
            |g, xv| {
                let (wv, bv) = (g.input(w.clone())?, g.input(b.clone())?);
                g.conv2d(xv, wv, Some(bv), stride, 1)
            },
            &x,
            PRIMITIVE_TOL,
            opts(seed, 0),
        )?;
        out.push(Check { name: format!("conv2d/input/stride{stride}"), report: r });
        let r = gradcheck(
            |g, wv| {
                let (xv, bv) = (g.input(x.clone())?, g.input(b.clone())?);
                g.conv2d(xv, wv, Some(bv), stride, 1)
            },
            &w,
            PRIMITIVE_TOL,
            opts(seed, 0),
        )?;
        out.push(Check { name: format!("conv2d/weight/stride{stride}"), report: r });
        let r = gradcheck(
            |g, bv| {
                let (xv, wv) = (g.input(x.clone())?, g.input(w.clone())?);
                g.conv2d(xv, wv, Some(bv), stride, 1)
            },
            &b,
            PRIMITIVE_TOL,
            opts(seed, 0),
        )?;
        out.push(Check { name: format!("conv2d/bias/stride{stride}"), report: r });
    }
    Ok(out)
}

fn pac(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let part = patterned_map(2, 6, 6, seed);
    let w = rand([3, 2, 3, 3], &mut rng);
    let b = rand([3, 1, 1, 1], &mut rng);
    let x = rand([2, 2, 6, 6], &mut rng);
    let input = gradcheck(
        |g, xv| {
            let (wv, bv) = (g.input(w.clone())?, g.input(b.clone())?);
            g.pac(xv, &part, wv, Some(bv))
        },
        &x,
        PRIMITIVE_TOL,
        opts(seed, 0),
    )?;
    let weight = gradcheck(
        |g, wv| {
            let (xv, bv) = (g.input(x.clone())?, g.input(b.clone())?);
            g.pac(xv, &part, wv, Some(bv))
        },
        &w,
        PRIMITIVE_TOL,
        opts(seed, 0),
    )?;
    let bias = gradcheck(
        |g, bv| {
            let (xv, wv) = (g.input(x.clone())?, g.input(w.clone())?);
            g.pac(xv, &part, wv, Some(bv))
        },
        &b,
        PRIMITIVE_TOL,
        opts(seed, 0),
    )?;
    Ok(vec![
        Check { name: "pac/input".into(), report: input },
        Check { name: "pac/weight".into(), report: weight },
        Check { name: "pac/bias".into(), report: bias },
    ])
}

fn small_model() -> ModelConfig {
    ModelConfig {
        base_channels: 4,
        m: 2,
        attention_hidden: 2,
        ..Default::default()
    }
}

/// Documented init with the zero tail replaced so every path carries gradient.
fn live_weights(cfg: &ModelConfig, seed: u64) -> Result<ModelWeights<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ModelWeights::<f64>::init(cfg, &mut rng)?;
    for (name, t) in w.tensors.iter_mut() {
        if name.starts_with("tail.") || name.ends_with(".bias") {
            *t = Tensor::uniform(t.shape(), 0.2, &mut rng);
        }
    }
    Ok(w)
}

fn attention(seed: u64) -> Result<Vec<Check>> {
    let cfg = small_model();
    let weights = live_weights(&cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let x = rand([2, 4, 4, 4], &mut rng);
    let side = rand([2, 4, 4, 4], &mut rng);
    let run = |probe_is_x: bool| {
        gradcheck(
            |g, p| {
                let w = Bound::new(g, &weights, false)?;
                let other = g.input(if probe_is_x { side.clone() } else { x.clone() })?;
                let (xv, sv) = if probe_is_x { (p, other) } else { (other, p) };
                attention_fuse(g, &w, xv, sv, "unet.att0")
            },
            if probe_is_x { &x } else { &side },
            PRIMITIVE_TOL,
            opts(seed, 0),
        )
    };
    let gate_w = weights.get("unet.att0.fc1.weight")?.clone();
    let fc = gradcheck(
        |g, p| {
            let mut w = Bound::new(g, &weights, false)?;
            w.rebind("unet.att0.fc1.weight", p)?;
            let (xv, sv) = (g.input(x.clone())?, g.input(side.clone())?);
            attention_fuse(g, &w, xv, sv, "unet.att0")
        },
        &gate_w,
        PRIMITIVE_TOL,
        opts(seed, 0),
    )?;
    Ok(vec![
        Check { name: "attention/x".into(), report: run(true)? },
        Check { name: "attention/side".into(), report: run(false)? },
        Check { name: "attention/fc1.weight".into(), report: fc },
    ])
}

fn pffl(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = rand([2, 1, 32, 64], &mut rng);
    let hr = rand([2, 1, 32, 64], &mut rng);
    let mut out = Vec::new();
    for exponent in [1.0, 2.0] {
        let frozen = pffl_weights(&sr, &hr, exponent)?;
        let r = gradcheck_frozen(
            |g, x| g.pffl(x, &hr, exponent),
            |x| pffl_with_weights(x, &hr, &frozen),
            &sr,
            PRIMITIVE_TOL,
            opts(seed, 256),
        )?;
        out.push(Check { name: format!("pffl/alpha{exponent}"), report: r });
    }
    Ok(out)
}

struct ModelCase {
    cfg: ModelConfig,
    weights: ModelWeights<f64>,
    lr: Tensor<f64>,
    priors: Tensor<f64>,
    part: PartitionMap<f64>,
    hr: Tensor<f64>,
}

const ALPHA: f64 = 0.9;
const BETA: f64 = 0.1;

impl ModelCase {
    fn new(seed: u64) -> Result<Self> {
        let cfg = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        Ok(ModelCase {
            cfg,
            weights: live_weights(&cfg, seed)?,
            lr: rand([1, 3, 16, 16], &mut rng).map(|v| 0.5 + 0.5 * v),
            priors: rand([1, 3, 16, 16], &mut rng),
            part: patterned_map(1, 16, 16, seed),
            hr: rand([1, 3, 32, 32], &mut rng),
        })
    }

    fn graph_loss(&self, g: &mut Graph<f64>, w: &Bound, lr: Var) -> Result<Var> {
        let p = g.input(self.priors.clone())?;
        let sr = cpgsr_forward(g, w, &self.cfg, lr, p, &self.part)?;
        let l1 = g.l1(sr, &self.hr)?;
        let f = g.pffl(sr, &self.hr, 1.0)?;
        g.weighted_sum(&[(l1, ALPHA), (f, BETA)])
    }

    fn sr(&self, weights: &ModelWeights<f64>, lr: &Tensor<f64>) -> Result<Tensor<f64>> {
        let mut g = Graph::new();
        let w = Bound::new(&mut g, weights, false)?;
        let (x, p) = (g.input(lr.clone())?, g.input(self.priors.clone())?);
        let out = cpgsr_forward(&mut g, &w, &self.cfg, x, p, &self.part)?;
        Ok(g.value(out).clone())
    }

    fn frozen_loss(&self, sr: &Tensor<f64>, focal: &[f64]) -> Result<f64> {
        Ok(ALPHA * ops::l1(sr, &self.hr)? + BETA * pffl_with_weights(sr, &self.hr, focal)?)
    }
}

fn model(seed: u64) -> Result<Vec<Check>> {
    let case = ModelCase::new(seed)?;
    let focal = pffl_weights(&case.sr(&case.weights, &case.lr)?, &case.hr, 1.0)?;
    let mut out = Vec::new();
    let r = gradcheck_frozen(
        |g, x| {
            let w = Bound::new(g, &case.weights, false)?;
            case.graph_loss(g, &w, x)
        },
        |x| case.frozen_loss(&case.sr(&case.weights, x)?, &focal),
        &case.lr,
        END_TO_END_TOL,
        opts(seed, 96),
    )?;
    out.push(Check { name: "model/lr".into(), report: r });
    for name in ["head.weight", "cdgb.pac1.weight", "unet.att1.fc2.weight", "rec.0.mix.weight", "tail.weight"] {
        let base = case.weights.get(name)?.clone();
        let r = gradcheck_frozen(
            |g, p| {
                let mut w = Bound::new(g, &case.weights, false)?;
                w.rebind(name, p)?;
                let lr = g.input(case.lr.clone())?;
                case.graph_loss(g, &w, lr)
            },
            |p| {
                let mut w = case.weights.clone();
                w.tensors.insert(name.to_string(), p.clone());
                case.frozen_loss(&case.sr(&w, &case.lr)?, &focal)
            },
            &base,
            END_TO_END_TOL,
            opts(seed, 48),
        )?;
        out.push(Check { name: format!("model/{name}"), report: r });
    }
    Ok(out)
}

pub fn run(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    match suite {
        Suite::Conv2d => conv2d(seed),
        Suite::Pac => pac(seed),
        Suite::Attention => attention(seed),
        Suite::Pffl => pffl(seed),
        Suite::Model => model(seed),
    }
}
