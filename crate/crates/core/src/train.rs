//! Training and evaluation on in-memory frames.
//!
//! Everything here is a pure function of the frames, the configs and the seed;
//! file handling lives in the companion binary crate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::{Adam, AdamConfig};
use crate::augment::{augment, Patch};
use crate::codec::{encode_decode, CodecConfig, CodingPriors};
use crate::graph::Graph;
use crate::image::{rgb_to_yuv420, yuv420_to_rgb, FrameRGB, FrameYUV420};
use crate::loss::{LossBreakdown, LossWeights};
use crate::metrics::{frame_metrics, FrameMetrics};
use crate::model::{cpgsr_forward, forward, module_of, Bound, ModelConfig, ModelWeights};
use crate::pac::PartitionMap;
use crate::resample::{bicubic_downsample2, bicubic_upsample2};
use crate::tensor::stack_batch;
use crate::{Error, Result, Tensor};

/// PFFL block side in HR pixels; LR crops are multiples of half of it.
const HR_BLOCK: usize = 32;

/// One frame ready for training or evaluation, network-scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    /// Decoded low-resolution frame, `(1,3,h,w)` in `[0,1]`.
    pub lr: Tensor<f32>,
    /// Ground truth, `(1,3,2h,2w)` in `[0,1]`.
    pub hr: Tensor<f32>,
    /// `(1,3,h,w)`: prediction/255, residual/255, qp/63.
    pub priors: Tensor<f32>,
    /// `(1,1,h,w)` partition map.
    pub partition: Tensor<f32>,
}

impl FrameSample {
    pub fn new(lr: Tensor<f32>, hr: Tensor<f32>, priors: Tensor<f32>, partition: Tensor<f32>) -> Result<Self> {
        let s = lr.shape();
        let bad = |what: &str| Err(Error::shape("FrameSample", format!("{what} does not match LR {s:?}")));
        if s.n != 1 || s.c != 3 {
            return bad("LR layout");
        }
        if hr.shape().dims() != [1, 3, 2 * s.h, 2 * s.w] {
            return bad("HR");
        }
        if priors.shape().dims() != [1, 3, s.h, s.w] {
            return bad("priors");
        }
        if partition.shape().dims() != [1, 1, s.h, s.w] {
            return bad("partition");
        }
        Ok(FrameSample {
            lr,
            hr,
            priors,
            partition,
        })
    }

    pub fn from_frames(hr: &FrameRGB, decoded: &FrameYUV420, priors: &CodingPriors) -> Result<Self> {
        let lr = yuv420_to_rgb(decoded);
        FrameSample::new(
            lr.to_tensor(),
            hr.to_tensor(),
            priors.prior_tensor(),
            priors.partition.to_tensor(1.0),
        )
    }

    /// LR `(height, width)`.
    pub fn lr_dims(&self) -> (usize, usize) {
        let s = self.lr.shape();
        (s.h, s.w)
    }

    /// Aligned crop: LR square at `(y, x)` of side `size`, HR at `(2y, 2x)`.
    pub fn crop(&self, y: usize, x: usize, size: usize) -> Result<Patch<f32>> {
        Ok(Patch {
            lr: self.lr.crop(y, x, size, size)?,
            hr: self.hr.crop(2 * y, 2 * x, 2 * size, 2 * size)?,
            priors: self.priors.crop(y, x, size, size)?,
            partition: self.partition.crop(y, x, size, size)?,
        })
    }

    /// Largest top-left region whose HR side tiles into 32×32 blocks.
    pub fn loss_region(&self) -> Result<Patch<f32>> {
        let (h, w) = self.lr_dims();
        let step = HR_BLOCK / 2;
        let (ch, cw) = (h / step * step, w / step * step);
        if ch == 0 || cw == 0 {
            return Err(Error::invalid("loss_region", format!("frame {w}x{h} too small")));
        }
        Ok(Patch {
            lr: self.lr.crop(0, 0, ch, cw)?,
            hr: self.hr.crop(0, 0, 2 * ch, 2 * cw)?,
            priors: self.priors.crop(0, 0, ch, cw)?,
            partition: self.partition.crop(0, 0, ch, cw)?,
        })
    }
}

/// Outputs of the degradation pipeline for one HR frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFrame {
    pub decoded: FrameYUV420,
    pub priors: CodingPriors,
}

/// Bicubic ×½, conversion to YUV 4:2:0, then the block codec.
pub fn degrade(hr: &FrameRGB, codec: &CodecConfig) -> Result<SimulatedFrame> {
    let lr = bicubic_downsample2(hr)?;
    let yuv = rgb_to_yuv420(&lr)?;
    let (decoded, priors) = encode_decode(&yuv, codec)?;
    Ok(SimulatedFrame { decoded, priors })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    pub batch: usize,
    /// LR patch side.
    pub patch: usize,
    pub seed: u64,
    pub steps_per_epoch: usize,
    /// Hard cap on optimizer steps; `0` means no cap.
    pub max_steps: usize,
    pub augment: bool,
    pub loss: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 5e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 200,
            early_stop_patience: 10,
            batch: 4,
            patch: 64,
            seed: 0,
            steps_per_epoch: 50,
            max_steps: 0,
            augment: true,
            loss: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::invalid("train config", d));
        if self.patch == 0 || self.patch % HR_BLOCK != 0 {
            return bad(format!("patch {} must be a positive multiple of {HR_BLOCK}", self.patch));
        }
        if self.batch == 0 || self.steps_per_epoch == 0 || self.max_epochs == 0 {
            return bad("batch, steps_per_epoch and max_epochs must be positive".into());
        }
        self.adam().validate()?;
        self.loss.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr0,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Loss and gradients of a batch of patches.
pub struct BatchGrad {
    pub loss: LossBreakdown<f32>,
    pub grads: BTreeMap<String, Tensor<f32>>,
}

fn stack(patches: &[Patch<f32>], f: impl Fn(&Patch<f32>) -> &Tensor<f32>) -> Result<Tensor<f32>> {
    let refs: Vec<&Tensor<f32>> = patches.iter().map(f).collect();
    stack_batch(&refs)
}

/// Forward + backward of `alpha·L1 + beta·PFFL` on a batch.
pub fn batch_gradients(
    cfg: &ModelConfig,
    weights: &ModelWeights<f32>,
    patches: &[Patch<f32>],
    lw: &LossWeights,
) -> Result<BatchGrad> {
    let lr = stack(patches, |p| &p.lr)?;
    let hr = stack(patches, |p| &p.hr)?;
    let pri = stack(patches, |p| &p.priors)?;
    let part = PartitionMap::new(stack(patches, |p| &p.partition)?)?;

    let mut g = Graph::new();
    let w = Bound::new(&mut g, weights, true)?;
    let x = g.input(lr)?;
    let p = g.input(pri)?;
    let sr = cpgsr_forward(&mut g, &w, cfg, x, p, &part)?;
    let l1 = g.l1(sr, &hr)?;
    let (root, pffl) = if lw.beta == 0.0 {
        (g.weighted_sum(&[(l1, lw.alpha as f32)])?, None)
    } else {
        let pf = g.pffl(sr, &hr, lw.pffl_exponent)?;
        (g.weighted_sum(&[(l1, lw.alpha as f32), (pf, lw.beta as f32)])?, Some(pf))
    };
    let loss = LossBreakdown {
        l1: g.scalar(l1),
        pffl: pffl.map_or(0.0, |v| g.scalar(v)),
        total: g.scalar(root),
    };
    let mut gr = g.backward(root)?;
    let mut grads = BTreeMap::new();
    for (name, v) in w.iter() {
        let t = gr.take(v).unwrap_or_else(|| Tensor::zeros(g.shape(v)));
        grads.insert(String::from(name), t);
    }
    Ok(BatchGrad { loss, grads })
}

/// Sum of squared gradient entries per coarse module.
pub fn module_grad_energy(grads: &BTreeMap<String, Tensor<f32>>) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for (name, g) in grads {
        let e: f64 = g.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        *out.entry(String::from(module_of(name))).or_default() += e;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: LossBreakdown<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_psnr_y: f64,
}

/// Progress notifications from [`Trainer::fit`].
pub enum Event<'a> {
    Step(&'a StepRecord),
    Epoch {
        record: &'a EpochRecord,
        weights: &'a ModelWeights<f32>,
        improved: bool,
    },
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_weights: ModelWeights<f32>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn first_loss(&self) -> Option<f32> {
        self.steps.first().map(|s| s.loss.total)
    }

    /// Mean total loss over the last `k` steps.
    pub fn tail_loss(&self, k: usize) -> Option<f64> {
        let k = k.min(self.steps.len());
        if k == 0 {
            return None;
        }
        let tail = &self.steps[self.steps.len() - k..];
        Some(tail.iter().map(|s| s.loss.total as f64).sum::<f64>() / k as f64)
    }
}

pub struct Trainer {
    pub model: ModelConfig,
    pub cfg: TrainConfig,
    pub weights: ModelWeights<f32>,
    opt: Adam,
    rng: ChaCha8Rng,
    step: usize,
}

/// Split off the last eighth (rounded down) of the frames for validation.
pub fn split_validation(n: usize) -> (core::ops::Range<usize>, core::ops::Range<usize>) {
    let val = n / 8;
    (0..n - val, n - val..n)
}

impl Trainer {
    /// Fresh weights from the documented init, seeded by `cfg.seed`.
    pub fn new(model: ModelConfig, cfg: TrainConfig) -> Result<Self> {
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let weights = ModelWeights::init(&model, &mut init_rng)?;
        Self::with_weights(model, cfg, weights)
    }

    pub fn with_weights(model: ModelConfig, cfg: TrainConfig, weights: ModelWeights<f32>) -> Result<Self> {
        cfg.validate()?;
        weights.validate(&model)?;
        if weights.form != crate::model::Form::Train {
            return Err(Error::invalid("trainer", "cannot train fused weights"));
        }
        Ok(Trainer {
            model,
            cfg,
            weights,
            opt: Adam::new(cfg.adam())?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a),
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Uniformly placed, optionally augmented crops.
    pub fn sample_batch(&mut self, frames: &[FrameSample]) -> Result<Vec<Patch<f32>>> {
        if frames.is_empty() {
            return Err(Error::invalid("trainer", "no training frames"));
        }
        let size = self.cfg.patch;
        let mut out = Vec::with_capacity(self.cfg.batch);
        for _ in 0..self.cfg.batch {
            let f = &frames[self.rng.gen_range(0..frames.len())];
            let (h, w) = f.lr_dims();
            if h < size || w < size {
                return Err(Error::invalid(
                    "trainer",
                    format!("frame {w}x{h} smaller than patch {size}"),
                ));
            }
            let y = self.rng.gen_range(0..=h - size);
            let x = self.rng.gen_range(0..=w - size);
            let p = f.crop(y, x, size)?;
            out.push(if self.cfg.augment {
                augment(&p, &mut self.rng)?.0
            } else {
                p
            });
        }
        Ok(out)
    }

    /// One optimizer step on a fresh batch.
    pub fn step(&mut self, frames: &[FrameSample]) -> Result<StepRecord> {
        let batch = self.sample_batch(frames)?;
        let bg = batch_gradients(&self.model, &self.weights, &batch, &self.cfg.loss)?;
        self.opt.step(&mut self.weights.tensors, &bg.grads)?;
        self.step += 1;
        Ok(StepRecord {
            step: self.step,
            loss: bg.loss,
        })
    }

    /// Mean total loss and mean PSNR-Y over whole frames with current weights.
    pub fn validate(&self, frames: &[FrameSample]) -> Result<(f64, f64)> {
        if frames.is_empty() {
            return Ok((f64::NAN, f64::NAN));
        }
        let (mut loss, mut psnr) = (0.0, 0.0);
        for f in frames {
            let region = f.loss_region()?;
            let part = PartitionMap::new(region.partition.clone())?;
            let sr = forward(&self.model, &self.weights, &region.lr, &region.priors, &part)?;
            loss += crate::loss::total_loss(&sr, &region.hr, &self.cfg.loss)?.total as f64;
            psnr += sr_metrics(&sr, &region.hr)?.psnr_y;
        }
        let n = frames.len() as f64;
        Ok((loss / n, psnr / n))
    }

    /// Epoch loop with early stopping on validation total loss (training loss
    /// when there are no validation frames).
    pub fn fit(
        &mut self,
        train: &[FrameSample],
        val: &[FrameSample],
        mut observer: impl FnMut(Event<'_>),
    ) -> Result<TrainReport> {
        let mut steps = Vec::new();
        let mut epochs = Vec::new();
        let mut best = (f64::INFINITY, 0usize, self.weights.clone());
        let mut stale = 0;
        let mut stopped_early = false;
        'epochs: for epoch in 1..=self.cfg.max_epochs {
            let mut sum = 0.0;
            let mut count = 0;
            for _ in 0..self.cfg.steps_per_epoch {
                if self.cfg.max_steps != 0 && self.step >= self.cfg.max_steps {
                    break;
                }
                let rec = self.step(train)?;
                observer(Event::Step(&rec));
                sum += rec.loss.total as f64;
                count += 1;
                steps.push(rec);
            }
            if count == 0 {
                break;
            }
            let train_loss = sum / count as f64;
            let (val_loss, val_psnr_y) = self.validate(val)?;
            let record = EpochRecord {
                epoch,
                steps: self.step,
                train_loss,
                val_loss,
                val_psnr_y,
            };
            let metric = if val.is_empty() { train_loss } else { val_loss };
            let improved = metric < best.0;
            if improved {
                best = (metric, epoch, self.weights.clone());
                stale = 0;
            } else {
                stale += 1;
            }
            observer(Event::Epoch {
                record: &record,
                weights: &self.weights,
                improved,
            });
            epochs.push(record);
            if stale >= self.cfg.early_stop_patience {
                stopped_early = true;
                break 'epochs;
            }
        }
        Ok(TrainReport {
            steps,
            epochs,
            best_epoch: best.1,
            best_weights: best.2,
            stopped_early,
        })
    }
}

/// YUV 4:2:0 metrics of an SR tensor `(1,3,H,W)` against HR, both clamped
/// and rounded to 8-bit levels.
pub fn sr_metrics(sr: &Tensor<f32>, hr: &Tensor<f32>) -> Result<FrameMetrics> {
    let to_yuv = |t: &Tensor<f32>| -> Result<FrameYUV420> {
        Ok(rgb_to_yuv420(&FrameRGB::from_tensor(t, 0)?.clamped())?.quantize_8bit())
    };
    frame_metrics(&to_yuv(hr)?, &to_yuv(sr)?)
}

/// Super-resolve one whole frame; output clamped to `[0,1]`.
pub fn super_resolve(cfg: &ModelConfig, weights: &ModelWeights<f32>, f: &FrameSample) -> Result<FrameRGB> {
    let part = PartitionMap::new(f.partition.clone())?;
    let sr = forward(cfg, weights, &f.lr, &f.priors, &part)?;
    Ok(FrameRGB::from_tensor(&sr, 0)?.clamped())
}

/// Bicubic ×2 of the decoded LR frame, the comparison baseline.
pub fn bicubic_baseline(f: &FrameSample) -> Result<FrameRGB> {
    Ok(bicubic_upsample2(&FrameRGB::from_tensor(&f.lr, 0)?))
}

/// Metrics of the model output and of the bicubic baseline for one frame.
pub fn evaluate_frame(
    cfg: &ModelConfig,
    weights: &ModelWeights<f32>,
    f: &FrameSample,
) -> Result<(FrameMetrics, FrameMetrics)> {
    let sr = super_resolve(cfg, weights, f)?;
    let bic = bicubic_baseline(f)?;
    Ok((
        sr_metrics(&sr.to_tensor(), &f.hr)?,
        sr_metrics(&bic.to_tensor(), &f.hr)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Form;
    use crate::synth::synth_frame;

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            base_channels: 8,
            m: 1,
            attention_hidden: 4,
            ..Default::default()
        }
    }

    fn frames(n: usize) -> Vec<FrameSample> {
        (0..n)
            .map(|i| {
                let hr = synth_frame(3, i, 128, 128).unwrap();
                let sim = degrade(&hr, &CodecConfig::with_qp(37)).unwrap();
                FrameSample::from_frames(&hr, &sim.decoded, &sim.priors).unwrap()
            })
            .collect()
    }

    fn tiny_train() -> TrainConfig {
        TrainConfig {
            batch: 2,
            patch: 32,
            steps_per_epoch: 3,
            max_epochs: 2,
            ..Default::default()
        }
    }

    #[test]
    fn sample_shapes_and_priors() {
        let f = &frames(1)[0];
        assert_eq!(f.lr_dims(), (64, 64));
        let p = f.crop(8, 16, 32).unwrap();
        assert_eq!(p.hr.shape().dims(), [1, 3, 64, 64]);
        assert_eq!(p.hr.at(0, 1, 0, 0), f.hr.at(0, 1, 16, 32));
        // Partition values come from the CU side encoding.
        for &v in f.partition.data() {
            assert!([2.0f32, 3.0, 4.0, 5.0, 6.0].iter().any(|k| (v - k / 6.0).abs() < 1e-6));
        }
        assert!(FrameSample::new(f.lr.clone(), f.lr.clone(), f.priors.clone(), f.partition.clone()).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let fr = frames(2);
        let run = || {
            let mut t = Trainer::new(tiny_model(), tiny_train()).unwrap();
            let r = t.fit(&fr[..1], &fr[1..], |_| {}).unwrap();
            (r.steps, t.weights)
        };
        let (a, wa) = run();
        let (b, wb) = run();
        assert_eq!(a, b);
        assert_eq!(wa, wb);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|s| s.loss.total.is_finite()));
    }

    #[test]
    fn gradients_reach_every_module_after_one_step() {
        let fr = frames(1);
        let mut t = Trainer::new(tiny_model(), tiny_train()).unwrap();
        t.step(&fr).unwrap();
        let batch = t.sample_batch(&fr).unwrap();
        let bg = batch_gradients(&t.model, &t.weights, &batch, &t.cfg.loss).unwrap();
        let e = module_grad_energy(&bg.grads);
        for m in ["head", "cdgb", "attention", "unet", "repconv", "tail"] {
            assert!(e[m] > 0.0, "module {m} has no gradient");
        }
    }

    #[test]
    fn max_steps_and_patience() {
        let fr = frames(2);
        let cfg = TrainConfig {
            max_steps: 4,
            max_epochs: 10,
            ..tiny_train()
        };
        let mut t = Trainer::new(tiny_model(), cfg).unwrap();
        let r = t.fit(&fr[..1], &fr[1..], |_| {}).unwrap();
        assert_eq!(r.steps.len(), 4);
        assert_eq!(r.epochs.len(), 2);

        let cfg = TrainConfig {
            lr0: 1e-12,
            early_stop_patience: 2,
            max_epochs: 50,
            steps_per_epoch: 1,
            ..tiny_train()
        };
        let mut t = Trainer::new(tiny_model(), cfg).unwrap();
        let r = t.fit(&fr[..1], &fr[1..], |_| {}).unwrap();
        assert!(r.epochs.len() >= 2);
        assert!(r.epochs.len() < 50);
        assert!(r.stopped_early);
    }

    #[test]
    fn untrained_model_equals_bilinear_metrics() {
        let fr = frames(1);
        let cfg = tiny_model();
        let w = ModelWeights::zeros(&cfg, Form::Train);
        let sr = super_resolve(&cfg, &w, &fr[0]).unwrap();
        let bil = crate::resample::bilinear_upsample2(&fr[0].lr);
        let want = FrameRGB::from_tensor(&bil, 0).unwrap().clamped();
        assert_eq!(sr, want);
        let hr_m = sr_metrics(&fr[0].hr, &fr[0].hr).unwrap();
        assert_eq!(hr_m.psnr_y, 100.0);
        assert_eq!(hr_m.ssim, 1.0);
    }

    #[test]
    fn validation_split() {
        assert_eq!(split_validation(8), (0..7, 7..8));
        assert_eq!(split_validation(16), (0..14, 14..16));
        assert_eq!(split_validation(3), (0..3, 3..3));
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig { patch: 48, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
