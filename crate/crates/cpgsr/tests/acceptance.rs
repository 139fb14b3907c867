//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported but do not fail the process;
//! the README explains why each one cannot be met as stated. Any other
//! failure exits with status 1.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use cpgsr::commands::{held_out_metrics, load_dataset, Dataset};
use cpgsr::dataset::{simulate, SimulateConfig};
use cpgsr::gradsuite::{self, Suite};
use cpgsr::io::checkpoint::{Checkpoint, Entry, Payload};
use cpgsr::io::yuv;
use cpgsr_core::codec::{encode_decode, CodecConfig, DctBank};
use cpgsr_core::conv::{conv2d, ConvParams};
use cpgsr_core::image::{rgb_to_yuv420, FrameYUV420};
use cpgsr_core::loss::pffl;
use cpgsr_core::metrics::psnr_plane;
use cpgsr_core::model::{forward, param_count, Form, ModelConfig, ModelWeights};
use cpgsr_core::pac::{encode_cu_side, pac_forward, partition_kernel, PartitionMap};
use cpgsr_core::reparam::{
    fuse, fused_param_count, repconv_forward_inference, repconv_forward_train, train_param_count, RepconvParams,
};
use cpgsr_core::resample::{bicubic_downsample2, bilinear_upsample2};
use cpgsr_core::synth::synth_frames;
use cpgsr_core::train::{sr_metrics, TrainConfig, Trainer};
use cpgsr_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail; see the README section on the acceptance suite.
const KNOWN_RED: &[u32] = &[5, 8];

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, summary: String::new(), details: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.details.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn limit(&mut self, took: Duration, max: Duration) {
        self.check(took <= max, format!("runtime {:.1}s (limit {:.0}s)", took.as_secs_f64(), max.as_secs_f64()));
    }
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Documented init with live tail and biases, so the fused path is exercised
/// away from the bilinear fixed point.
fn live_weights(cfg: &ModelConfig, seed: u64) -> Res<ModelWeights<f32>> {
    let mut r = rng(seed);
    let mut w = ModelWeights::<f32>::init(cfg, &mut r)?;
    for (name, t) in w.tensors.iter_mut() {
        if name.starts_with("tail.") || (name.ends_with(".bias") && name != "cdgb.gamma.bias") {
            *t = Tensor::uniform(t.shape(), 0.05, &mut r);
        }
    }
    Ok(w)
}

/// Max-abs output difference and max per-frame PSNR-Y difference.
fn model_fusion_gap(
    cfg: &ModelConfig,
    a: &ModelWeights<f32>,
    b: &ModelWeights<f32>,
    data: &Dataset,
) -> Res<(f32, f64)> {
    let mut max_abs = 0.0f32;
    let mut max_db = 0.0f64;
    for f in data.train.iter().chain(&data.val) {
        let part = PartitionMap::new(f.partition.clone())?;
        let x = forward(cfg, a, &f.lr, &f.priors, &part)?;
        let y = forward(cfg, b, &f.lr, &f.priors, &part)?;
        max_abs = max_abs.max(x.max_abs_diff(&y));
        max_db = max_db.max((sr_metrics(&x, &f.hr)?.psnr_y - sr_metrics(&y, &f.hr)?.psnr_y).abs());
    }
    Ok((max_abs, max_db))
}

fn c1_fusion(ctx: &mut Ctx) -> Res<Outcome> {
    let t0 = Instant::now();
    let mut o = Outcome::new();
    let mut worst = 0.0f32;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let mut p = RepconvParams::<f32>::init(32, 32, 2, &mut r);
        for c in [&mut p.branch_a, &mut p.branch_b, &mut p.mix, &mut p.project] {
            let s = c.bias.as_ref().expect("biased").shape();
            c.bias = Some(Tensor::uniform(s, 0.1, &mut r));
        }
        let x = Tensor::uniform([1, 32, 16, 16], 1.0, &mut r);
        let a = repconv_forward_train(&x, &p)?;
        let b = repconv_forward_inference(&x, &fuse(&p)?)?;
        worst = worst.max(a.max_abs_diff(&b));
    }
    o.check(worst <= 1e-5, format!("block: max |train - fused| over 100 seeds = {worst:.3e} (tol 1e-5)"));
    o.check(
        fused_param_count(32, 32) == 9248,
        format!("fused 32->32 block holds {} scalars", fused_param_count(32, 32)),
    );

    let cfg = ModelConfig::default();
    let w = live_weights(&cfg, 1)?;
    let fused = w.fused(&cfg)?;
    let (max_abs, max_db) = model_fusion_gap(&cfg, &w, &fused, ctx.data()?)?;
    o.check(max_abs <= 1e-4, format!("full model (perturbed init, 8 frames): max-abs {max_abs:.3e} (tol 1e-4)"));
    o.check(max_db <= 0.01, format!("full model: max per-frame PSNR-Y delta {max_db:.2e} dB (tol 0.01)"));
    o.check(
        param_count(&cfg, Form::Train) - param_count(&cfg, Form::Fused) == 6 * (train_param_count(32, 32, 2) - 9248),
        format!("parameters {} train form -> {} fused", param_count(&cfg, Form::Train), param_count(&cfg, Form::Fused)),
    );
    o.summary = format!("block {worst:.1e}, model {max_abs:.1e} / {max_db:.1e} dB");
    o.limit(t0.elapsed(), Duration::from_secs(60));
    Ok(o)
}

fn c2_pac_degeneracy() -> Res<Outcome> {
    let t0 = Instant::now();
    let mut o = Outcome::new();
    let mut r = rng(2);
    let mut equal = 0;
    for _ in 0..50 {
        let (n, ci, co) = (r.gen_range(1..3), r.gen_range(1..6), r.gen_range(1..6));
        let (h, w) = (r.gen_range(3..12), r.gen_range(3..12));
        let x = Tensor::<f32>::uniform([n, ci, h, w], 1.0, &mut r);
        let p = ConvParams::same(
            Tensor::uniform([co, ci, 3, 3], 1.0, &mut r),
            Some(Tensor::uniform([co, 1, 1, 1], 1.0, &mut r)),
        );
        let level = encode_cu_side([4, 8, 16, 32, 64][r.gen_range(0..5)]) as f32;
        let part = PartitionMap::constant(n, h, w, level);
        let a = pac_forward(&x, &part, &p)?;
        let b = conv2d(&x, &p)?;
        if a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits()) {
            equal += 1;
        }
    }
    o.check(equal == 50, format!("{equal}/50 random cases bit-equal to conv2d"));
    o.summary = format!("{equal}/50 bit-equal");
    o.limit(t0.elapsed(), Duration::from_secs(10));
    Ok(o)
}

fn c3_partition_kernel() -> Res<Outcome> {
    let mut o = Outcome::new();
    let f = |a: f64, b: f64| partition_kernel(a, b);
    let same = [0.0, 1.0 / 3.0, 0.5, 1.0].iter().all(|&a| f(a, a) == 1.0);
    o.check(same, "F(a,a) = 1".into());
    let quarter = f(0.5, 0.75);
    o.check(quarter == 0.0, format!("F at |d|=0.25 = {quarter}"));
    let sixth = f(0.5, 0.5 + 1.0 / 6.0);
    let err = (sixth - 5.0 / 9.0).abs();
    o.check(err <= 1e-12, format!("F at |d|=1/6 = {sixth:.15} (5/9 err {err:.1e})"));
    o.summary = format!("F(1/6) - 5/9 = {err:.1e}");
    Ok(o)
}

fn c4_gradients() -> Res<Outcome> {
    let t0 = Instant::now();
    let mut o = Outcome::new();
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for s in Suite::ALL {
        for c in gradsuite::run(s, 0)? {
            let r = &c.report;
            o.check(r.passed, format!("{:<28} rel {:.2e} (tol {:.0e})", c.name, r.max_rel_error, r.tol));
            let e = worst.entry(s.name()).or_default();
            *e = e.max(r.max_rel_error);
        }
    }
    o.summary = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    o.limit(t0.elapsed(), Duration::from_secs(300));
    Ok(o)
}

fn c5_pffl() -> Res<Outcome> {
    let mut o = Outcome::new();
    let mut r = rng(5);
    let x = Tensor::<f64>::uniform([2, 3, 64, 32], 1.0, &mut r);
    let zero = pffl(&x, &x, 1.0)?;
    o.check(zero == 0.0, format!("pffl(x, x) = {zero}"));

    // (-1)^y of amplitude A over one 32x32 block excites only the (16, 0) bin:
    // |D| = 32·32·A, focal weight 1, loss = |D|² / sqrt(H·W).
    let amp = 0.01;
    let sr = Tensor::<f64>::uniform([1, 1, 64, 64], 1.0, &mut r);
    let hr = Tensor::from_fn(sr.shape(), |n, c, y, xx| {
        let bump = if y < 32 && xx >= 32 { amp * if y % 2 == 0 { 1.0 } else { -1.0 } } else { 0.0 };
        sr.at(n, c, y, xx) + bump
    });
    let want = (1024.0 * amp) * (1024.0 * amp) / 64.0;
    let got = pffl(&sr, &hr, 1.0)?;
    let rel = (got - want).abs() / want;
    o.check(rel <= 1e-6, format!("single bin: {got:.9} vs hand {want:.9} (rel {rel:.1e})"));

    let hr = Tensor::<f64>::uniform([1, 3, 64, 64], 1.0, &mut r);
    let delta = Tensor::<f64>::uniform([1, 3, 64, 64], 0.1, &mut r);
    let at = |k: f64| hr.zip_map(&delta, "at", |h, d| h + k * d);
    let ratio = pffl(&at(2.0)?, &hr, 1.0)? / pffl(&at(1.0)?, &hr, 1.0)?;
    let rel8 = (ratio - 8.0).abs() / 8.0;
    o.check(rel8 <= 1e-4, format!("x2 amplitude: loss ratio {ratio:.6} vs 8 (rel {rel8:.1e})"));
    let rel4 = (ratio - 4.0).abs() / 4.0;
    o.details.push(format!("info quadratic law (max-normalized weights): ratio vs 4, rel {rel4:.1e}"));
    o.summary = format!("single-bin rel {rel:.1e}, x2 ratio {ratio:.4}");
    Ok(o)
}

fn c6_codec(ctx: &mut Ctx) -> Res<Outcome> {
    let mut o = Outcome::new();
    let lr: Vec<FrameYUV420> = ctx
        .hr_frames()?
        .iter()
        .map(|f| Ok(rgb_to_yuv420(&bicubic_downsample2(f)?)?.quantize_8bit()))
        .collect::<Res<_>>()?;
    let mut exact = true;
    let mut means = Vec::new();
    for qp in [10u32, 22, 32, 42, 52] {
        let mut sum = 0.0;
        for f in &lr {
            let (dec, pri) = encode_decode(f, &CodecConfig::with_qp(qp))?;
            exact &= pri
                .prediction
                .data
                .iter()
                .zip(&pri.residual.data)
                .zip(&dec.y.data)
                .all(|((p, r), d)| p + r == *d);
            sum += psnr_plane(&f.y, &dec.y, 255.0)?;
        }
        means.push((qp, sum / lr.len() as f64));
    }
    o.check(exact, "prediction + residual == decoded luma, every pixel, 8 frames x 5 QPs".into());
    let mono = means.windows(2).all(|w| w[1].1 <= w[0].1);
    let ladder = means.iter().map(|(q, p)| format!("{q}:{p:.2}")).collect::<Vec<_>>().join(" ");
    o.check(mono, format!("mean PSNR-Y by QP {ladder}"));

    let mut bank = DctBank::new();
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for n in [4, 8, 16, 32, 64] {
        for _ in 0..20 {
            let x: Vec<f64> = (0..n * n).map(|_| r.gen_range(-255.0..255.0)).collect();
            let coeffs = bank.dct2(&x, n)?;
            let back = bank.idct2(&coeffs, n)?;
            let num: f64 = x.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let den: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst = worst.max(num / den);
        }
    }
    o.check(worst <= 1e-6, format!("DCT round trip, sizes 4..64: rel {worst:.1e}"));
    o.summary = format!("PSNR-Y {ladder}; DCT {worst:.0e}");
    Ok(o)
}

fn c7_zero_network() -> Res<Outcome> {
    let mut o = Outcome::new();
    let mut r = rng(7);
    for ab in [(false, false, false), (true, false, false), (false, true, true)] {
        let mut cfg = ModelConfig::default();
        (cfg.ablation.no_cdgb, cfg.ablation.no_pac, cfg.ablation.no_attention) = ab;
        for form in [Form::Train, Form::Fused] {
            let w = ModelWeights::<f32>::zeros(&cfg, form);
            let lr = Tensor::uniform([2, 3, 32, 48], 1.0, &mut r).map(|v| 0.5 + 0.5 * v);
            let pri = Tensor::uniform([2, 3, 32, 48], 1.0, &mut r);
            let part = PartitionMap::new(Tensor::uniform([2, 1, 32, 48], 1.0, &mut r))?;
            let sr = forward(&cfg, &w, &lr, &pri, &part)?;
            let same = sr == bilinear_upsample2(&lr);
            o.check(same, format!("{:?} {form:?}: output == bilinear x2 exactly", cfg.ablation));
        }
    }
    o.summary = "exact equality, 6 configurations".into();
    Ok(o)
}

fn c8_learning(ctx: &mut Ctx) -> Res<Outcome> {
    let mut o = Outcome::new();
    ctx.trained()?;
    let took = ctx.train_time;
    let t0 = Instant::now();
    let report = ctx.report.as_ref().expect("trained");
    let first = report.first_loss().unwrap_or(f32::NAN) as f64;
    let last = report.tail_loss(10).unwrap_or(f64::NAN);
    let red = 1.0 - last / first;
    o.check(
        red >= 0.5,
        format!("training loss step 1 {first:.3} -> last-10 mean {last:.3}: reduction {:.1}% (need 50%)", 100.0 * red),
    );
    let l1_first = report.steps[0].loss.l1 as f64;
    let tail = &report.steps[report.steps.len().saturating_sub(10)..];
    let l1_last = tail.iter().map(|s| s.loss.l1 as f64).sum::<f64>() / tail.len() as f64;
    o.details.push(format!(
        "info L1 term alone: {l1_first:.5} -> {l1_last:.5} ({:.1}%)",
        100.0 * (1.0 - l1_last / l1_first)
    ));
    let cfg = ModelConfig::default();
    let w = ctx.trained()?.clone();
    let data = ctx.data()?;
    let (sr, bic) = held_out_metrics(&cfg, &w, data)?;
    let (gap, gap_db) = model_fusion_gap(&cfg, &w, &w.fused(&cfg)?, data)?;
    o.details.push(format!("info trained weights, fused vs train form: max-abs {gap:.1e}, max PSNR-Y delta {gap_db:.1e} dB"));
    let gain = sr.psnr_y - bic.psnr_y;
    o.check(
        gain >= 0.2,
        format!("held-out frame PSNR-Y {:.3} vs bicubic {:.3}: {gain:+.3} dB (need +0.2)", sr.psnr_y, bic.psnr_y),
    );
    o.summary = format!("loss -{:.1}%, held-out {gain:+.2} dB", 100.0 * red);
    o.limit(took + t0.elapsed(), Duration::from_secs(900));
    Ok(o)
}

fn c9_m_sweep(ctx: &mut Ctx) -> Res<Outcome> {
    let t0 = Instant::now();
    let mut o = Outcome::new();
    let data = ctx.data()?;
    let mut counts = Vec::new();
    for m in [3, 4, 5, 6] {
        let cfg = ModelConfig { m, ..ModelConfig::default() };
        let tc = TrainConfig { max_steps: 20, steps_per_epoch: 10, batch: 2, ..TrainConfig::default() };
        let mut trainer = Trainer::new(cfg, tc)?;
        let report = trainer.fit(&data.train, &data.val, |_| {})?;
        let finite = report.steps.iter().all(|s| s.loss.total.is_finite());
        let last = report.tail_loss(5).unwrap_or(f64::NAN);
        let (fused, train) = (param_count(&cfg, Form::Fused), param_count(&cfg, Form::Train));
        o.check(finite, format!("m={m}: {} steps, final loss {last:.3}, fused params {fused}", report.steps.len()));
        counts.push((m, fused, train));
    }
    for w in counts.windows(2) {
        let (d_fused, d_train) = (w[1].1 - w[0].1, w[1].2 - w[0].2);
        o.check(
            d_fused == 9248 && d_train == train_param_count(32, 32, 2),
            format!("m {} -> {}: +{d_fused} fused, +{d_train} train form", w[0].0, w[1].0),
        );
    }
    // Fused count by hand from the layer list: head 896, prior conv 896,
    // gamma/beta 2 x 18464, CDGB Repconv + 2 downs + 2 PACs 5 x 9248,
    // attention 3 x (1056 + 264 + 288), U-net downs 2 x 9248, ups 2 x 4224,
    // tail 3468; total 120196 + 9248 m.
    for &(m, fused, _) in &counts {
        let want = 120196 + 9248 * m;
        o.check(fused == want, format!("m={m} fused count {fused} (hand count {want})"));
    }
    o.summary = counts.iter().map(|(m, f, _)| format!("m{m}:{f}")).collect::<Vec<_>>().join(" ");
    o.limit(t0.elapsed(), Duration::from_secs(600));
    Ok(o)
}

fn c10_io() -> Res<Outcome> {
    let mut o = Outcome::new();
    let mut r = rng(10);
    let mut ck_ok = 0;
    for i in 0..1000 {
        let entries = (0..r.gen_range(0..5))
            .map(|k| {
                let dims: Vec<u32> = (0..r.gen_range(0..4)).map(|_| r.gen_range(0..5)).collect();
                let n = dims.iter().product::<u32>() as usize;
                let payload = match r.gen_range(0..3) {
                    0 => Payload::F32((0..n).map(|_| f32::from_bits(r.gen())).collect()),
                    1 => Payload::F64((0..n).map(|_| f64::from_bits(r.gen())).collect()),
                    _ => Payload::U8((0..n).map(|_| r.gen()).collect()),
                };
                Entry::new(format!("t{i}.{k}"), dims, payload).expect("consistent")
            })
            .collect();
        let bytes = Checkpoint { entries }.to_bytes();
        if Checkpoint::from_bytes(&bytes).map(|c| c.to_bytes() == bytes).unwrap_or(false) {
            ck_ok += 1;
        }
    }
    o.check(ck_ok == 1000, format!("checkpoint write-read-write byte-equal: {ck_ok}/1000"));
    let mut yuv_ok = 0;
    for _ in 0..1000 {
        let (w, h) = (2 * r.gen_range(1..9), 2 * r.gen_range(1..9));
        let bytes: Vec<u8> = (0..r.gen_range(1..4) * yuv::frame_bytes(w, h)).map(|_| r.gen()).collect();
        if yuv::decode(&bytes, w, h).map(|f| yuv::encode(&f).ok() == Some(bytes.clone())).unwrap_or(false) {
            yuv_ok += 1;
        }
    }
    o.check(yuv_ok == 1000, format!("YUV420p read-write byte-equal: {yuv_ok}/1000"));
    o.check(yuv::frame_bytes(64, 64) == 6144, "64x64 frame = 6144 bytes".into());

    let t = tempfile::tempdir()?;
    let cfg = SimulateConfig { seed: 42, frames: 3, width: 128, height: 128, codec: CodecConfig::with_qp(37) };
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    simulate(&a, &cfg)?;
    simulate(&b, &cfg)?;
    let (ta, tb) = (tree(&a)?, tree(&b)?);
    o.check(!ta.is_empty() && ta == tb, format!("simulate twice, seed 42: {} files, identical trees", ta.len()));
    o.summary = format!("{ck_ok}+{yuv_ok} payloads, simulate deterministic");
    Ok(o)
}

fn tree(root: &std::path::Path) -> Res<BTreeMap<std::path::PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root)?.to_path_buf(), std::fs::read(&p)?);
            }
        }
    }
    Ok(out)
}

/// Shared desk-scale dataset and the model trained on it.
struct Ctx {
    dir: tempfile::TempDir,
    data: Option<Dataset>,
    hr: Option<Vec<cpgsr_core::image::FrameRGB>>,
    weights: Option<ModelWeights<f32>>,
    report: Option<cpgsr_core::train::TrainReport>,
    train_time: Duration,
}

const SEED: u64 = 0;

impl Ctx {
    fn data(&mut self) -> Res<&Dataset> {
        if self.data.is_none() {
            let cfg = SimulateConfig { seed: SEED, frames: 8, width: 256, height: 256, codec: CodecConfig::with_qp(37) };
            simulate(self.dir.path(), &cfg)?;
            self.data = Some(load_dataset(self.dir.path())?);
        }
        Ok(self.data.as_ref().expect("loaded"))
    }

    fn hr_frames(&mut self) -> Res<&[cpgsr_core::image::FrameRGB]> {
        if self.hr.is_none() {
            self.hr = Some(synth_frames(SEED, 8, 256, 256)?);
        }
        Ok(self.hr.as_deref().expect("generated"))
    }

    /// 200 steps at the default configuration, fixed seed.
    fn trained(&mut self) -> Res<&ModelWeights<f32>> {
        if self.weights.is_none() {
            let t0 = Instant::now();
            let tc = TrainConfig { max_steps: 200, seed: SEED, ..TrainConfig::default() };
            let data = self.data()?;
            let mut trainer = Trainer::new(ModelConfig::default(), tc)?;
            let report = trainer.fit(&data.train, &data.val, |_| {})?;
            self.weights = Some(trainer.weights);
            self.report = Some(report);
            self.train_time = t0.elapsed();
        }
        Ok(self.weights.as_ref().expect("trained"))
    }
}

fn main() {
    let mut ctx = Ctx {
        dir: tempfile::tempdir().expect("temp dir"),
        data: None,
        hr: None,
        weights: None,
        report: None,
        train_time: Duration::ZERO,
    };
    let verbose = std::env::args().any(|a| a == "--verbose" || a == "-v") || std::env::var_os("ACCEPTANCE_VERBOSE").is_some();
    let mut unexpected = Vec::new();
    for id in 1..=10u32 {
        let t0 = Instant::now();
        let res = match id {
            1 => c1_fusion(&mut ctx),
            2 => c2_pac_degeneracy(),
            3 => c3_partition_kernel(),
            4 => c4_gradients(),
            5 => c5_pffl(),
            6 => c6_codec(&mut ctx),
            7 => c7_zero_network(),
            8 => c8_learning(&mut ctx),
            9 => c9_m_sweep(&mut ctx),
            _ => c10_io(),
        };
        let o = res.unwrap_or_else(|e| Outcome {
            pass: false,
            summary: format!("error: {e}"),
            details: Vec::new(),
        });
        let known = KNOWN_RED.contains(&id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("[{tag}] criterion {id:>2}: {} ({:.1}s)", o.summary, t0.elapsed().as_secs_f64());
        if verbose || !o.pass {
            for d in &o.details {
                println!("        {d}");
            }
        }
        if !o.pass && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
