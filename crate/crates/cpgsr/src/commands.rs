//! Subcommand implementations. Each takes parsed arguments, does its file
//! I/O and prints a short summary to stdout.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cpgsr_core::codec::CodecConfig;
use cpgsr_core::image::{rgb_to_yuv420, Plane};
use cpgsr_core::metrics::{mean_metrics, FrameMetrics};
use cpgsr_core::model::{param_count, Form, ModelConfig, ModelWeights};
use cpgsr_core::train::{
    evaluate_frame, split_validation, super_resolve, Event, FrameSample, TrainConfig, TrainReport, Trainer,
};

use crate::config::Config;
use crate::dataset::{simulate, SimulateConfig};
use crate::error::{AppError, AppResult};
use crate::gradsuite::{self, Suite};
use crate::io::checkpoint::{load_model, save_model};
use crate::io::manifest::Manifest;
use crate::io::{pnm, yuv};

fn csv_writer(path: &Path) -> AppResult<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> AppError {
    AppError::io(path, std::io::Error::other(e))
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> AppResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// `WxH`, e.g. `256x256`.
pub fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("size {s:?} is not WxH"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad dimension {v:?} in {s:?}"));
    let (w, h) = (p(w)?, p(h)?);
    if w == 0 || h == 0 || w % 64 != 0 || h % 64 != 0 {
        return Err(format!("size {w}x{h} must be positive multiples of 64"));
    }
    Ok((w, h))
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Generator seed; equal seeds give byte-identical output trees.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of frames.
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// HR frame size `WxH`, multiples of 64.
    #[arg(long, default_value = "256x256", value_parser = parse_size)]
    pub size: (usize, usize),
    /// Quantization parameter of the simulated codec (0..=63).
    #[arg(long, default_value_t = 37)]
    pub qp: u32,
    /// Output directory; `manifest.json` is written at its root.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_simulate(a: &SimulateArgs) -> AppResult<()> {
    let cfg = SimulateConfig {
        seed: a.seed,
        frames: a.frames,
        width: a.size.0,
        height: a.size.1,
        codec: CodecConfig::with_qp(a.qp),
    };
    let m = simulate(&a.out, &cfg)?;
    println!(
        "wrote {} frames ({}x{}, qp {}) to {}",
        m.frames.len(),
        a.size.0,
        a.size.1,
        a.qp,
        a.out.display()
    );
    Ok(())
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    /// Override `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override `train.max_steps` (0 = unlimited).
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Override `train.max_epochs`.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Override `train.steps_per_epoch`.
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    /// Override `train.batch`.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Override `train.patch` (LR side, multiple of 32).
    #[arg(long)]
    pub patch: Option<usize>,
    /// Override `train.lr0`.
    #[arg(long)]
    pub lr0: Option<f64>,
    /// Override `train.loss.beta` (0 disables the frequency loss).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Override `model.m`.
    #[arg(long)]
    pub m: Option<usize>,
}

impl TrainOverrides {
    pub fn apply(&self, c: &mut Config) {
        let t = &mut c.train;
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.max_steps {
            t.max_steps = v;
        }
        if let Some(v) = self.max_epochs {
            t.max_epochs = v;
        }
        if let Some(v) = self.steps_per_epoch {
            t.steps_per_epoch = v;
        }
        if let Some(v) = self.batch {
            t.batch = v;
        }
        if let Some(v) = self.patch {
            t.patch = v;
        }
        if let Some(v) = self.lr0 {
            t.lr0 = v;
        }
        if let Some(v) = self.beta {
            t.loss.beta = v;
        }
        if let Some(v) = self.m {
            c.model.m = v;
        }
    }
}

fn load_config(path: Option<&Path>, o: &TrainOverrides) -> AppResult<(ModelConfig, TrainConfig)> {
    let mut c = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    o.apply(&mut c);
    c.resolve()
}

/// Frames of a manifest split into training and validation samples.
pub struct Dataset {
    pub train: Vec<FrameSample>,
    pub val: Vec<FrameSample>,
    pub val_indices: Vec<usize>,
}

pub fn load_dataset(manifest: &Path) -> AppResult<Dataset> {
    let (m, root) = Manifest::load(manifest)?;
    let frames = m.load_all(&root)?;
    let (tr, va) = split_validation(frames.len());
    let samples = frames.iter().map(|f| f.sample()).collect::<AppResult<Vec<_>>>()?;
    Ok(Dataset {
        train: samples[tr].to_vec(),
        val: samples[va.clone()].to_vec(),
        val_indices: va.map(|i| frames[i].index).collect(),
    })
}

/// `ckpt` with `suffix` appended to the file name.
pub fn sibling(ckpt: &Path, suffix: &str) -> PathBuf {
    let mut s = ckpt.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn check_finite(r: &TrainReport) -> AppResult<()> {
    match r.steps.iter().find(|s| !s.loss.total.is_finite()) {
        Some(s) => Err(AppError::Numerical(format!("non-finite loss at step {}", s.step))),
        None => Ok(()),
    }
}

/// Train with per-epoch reporting; writes nothing.
pub fn fit(model: ModelConfig, cfg: TrainConfig, data: &Dataset, quiet: bool) -> AppResult<(Trainer, TrainReport)> {
    let mut trainer = Trainer::new(model, cfg)?;
    let report = trainer.fit(&data.train, &data.val, |e| {
        if let Event::Epoch { record, improved, .. } = e {
            if !quiet {
                eprintln!(
                    "epoch {:>3} step {:>5}  train {:.4}  val {:.4}  val PSNR-Y {:.3}{}",
                    record.epoch,
                    record.steps,
                    record.train_loss,
                    record.val_loss,
                    record.val_psnr_y,
                    if improved { "  *" } else { "" }
                );
            }
        }
    })?;
    check_finite(&report)?;
    Ok((trainer, report))
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Dataset manifest (file or directory containing manifest.json).
    #[arg(long)]
    pub manifest: PathBuf,
    /// TOML config with [model] and [train] sections; defaults if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Final checkpoint path. The best-validation checkpoint goes to `<out>.best`,
    /// the epoch log to `<out>.epochs.csv` and the step log to `<out>.steps.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

pub fn cmd_train(a: &TrainArgs) -> AppResult<()> {
    let (model, cfg) = load_config(a.config.as_deref(), &a.overrides)?;
    let data = load_dataset(&a.manifest)?;
    let (trainer, report) = fit(model, cfg, &data, false)?;
    save_model(&a.out, &model, &trainer.weights)?;
    save_model(&sibling(&a.out, ".best"), &model, &report.best_weights)?;
    let best = report.best_epoch;
    let epochs: Vec<Vec<String>> = report
        .epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                e.steps.to_string(),
                num(e.train_loss),
                num(e.val_loss),
                num(e.val_psnr_y),
                (e.epoch == best).to_string(),
            ]
        })
        .collect();
    write_rows(
        &sibling(&a.out, ".epochs.csv"),
        &["epoch", "step", "train_loss", "val_loss", "val_psnr_y", "best"],
        &epochs,
    )?;
    let steps: Vec<Vec<String>> = report
        .steps
        .iter()
        .map(|s| {
            vec![
                s.step.to_string(),
                num(s.loss.total as f64),
                num(s.loss.l1 as f64),
                num(s.loss.pffl as f64),
            ]
        })
        .collect();
    write_rows(&sibling(&a.out, ".steps.csv"), &["step", "total", "l1", "pffl"], &steps)?;
    println!(
        "{} steps, {} epochs{}; loss {:.4} -> {:.4} (last-10 mean); best epoch {}",
        report.steps.len(),
        report.epochs.len(),
        if report.stopped_early { " (early stop)" } else { "" },
        report.first_loss().unwrap_or(f32::NAN),
        report.tail_loss(10).unwrap_or(f64::NAN),
        best
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    /// Train-form (or already fused) checkpoint.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Fused checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_fuse(a: &FuseArgs) -> AppResult<()> {
    let (cfg, w) = load_model(&a.input)?;
    let before = w.param_count();
    let fused = w.fused(&cfg)?;
    save_model(&a.out, &cfg, &fused)?;
    println!(
        "parameters: {before} ({:?} form) -> {} (fused); {} Repconv blocks",
        w.form,
        fused.param_count(),
        cpgsr_core::model::repconv_blocks(&cfg).len()
    );
    Ok(())
}

fn load_for_inference(ckpt: &Path, fused: bool) -> AppResult<(ModelConfig, ModelWeights<f32>)> {
    let (cfg, w) = load_model(ckpt)?;
    let w = if fused { w.fused(&cfg)? } else { w };
    Ok((cfg, w))
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for `NNNN.ppm` frames and `sr.yuv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Run the fused network (fusing on load if the checkpoint is train-form).
    #[arg(long)]
    pub fused: bool,
}

pub fn cmd_infer(a: &InferArgs) -> AppResult<()> {
    let (cfg, w) = load_for_inference(&a.ckpt, a.fused)?;
    let (m, root) = Manifest::load(&a.manifest)?;
    let mut yuv_frames = Vec::new();
    for i in 0..m.frames.len() {
        let f = m.load_frame(&root, i)?;
        let sr = super_resolve(&cfg, &w, &f.sample()?)?;
        pnm::write_ppm(&a.out.join(format!("{:04}.ppm", f.index)), &sr)?;
        yuv_frames.push(rgb_to_yuv420(&sr)?);
    }
    yuv::write(&a.out.join("sr.yuv"), &yuv_frames)?;
    println!("wrote {} frames to {}", yuv_frames.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    All,
    Train,
    Val,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Output CSV: method,frame_index,psnr_y,psnr_u,psnr_v,ssim.
    #[arg(long)]
    pub csv: PathBuf,
    /// Evaluate the fused network.
    #[arg(long)]
    pub fused: bool,
    /// Frames to evaluate; `val` is the last eighth of the manifest.
    #[arg(long, value_enum, default_value_t = Split::All)]
    pub split: Split,
}

pub struct EvalRow {
    pub method: &'static str,
    pub frame_index: Option<usize>,
    pub m: FrameMetrics,
}

/// Per-frame model and bicubic metrics followed by one mean row per method.
pub fn evaluate(
    cfg: &ModelConfig,
    w: &ModelWeights<f32>,
    frames: &[(usize, FrameSample)],
) -> AppResult<Vec<EvalRow>> {
    let method = if w.form == Form::Fused { "model_fused" } else { "model" };
    let mut model_rows = Vec::new();
    let mut bic_rows = Vec::new();
    for (idx, f) in frames {
        let (m, b) = evaluate_frame(cfg, w, f)?;
        model_rows.push(EvalRow { method, frame_index: Some(*idx), m });
        bic_rows.push(EvalRow { method: "bicubic", frame_index: Some(*idx), m: b });
    }
    let mean = |rows: &[EvalRow], method| {
        let ms: Vec<FrameMetrics> = rows.iter().map(|r| r.m).collect();
        mean_metrics(&ms).map(|m| EvalRow { method, frame_index: None, m })
    };
    let mut out = Vec::new();
    let (mm, bm) = (mean(&model_rows, method), mean(&bic_rows, "bicubic"));
    out.extend(model_rows);
    out.extend(bic_rows);
    out.extend(mm);
    out.extend(bm);
    Ok(out)
}

pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> AppResult<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                r.frame_index.map_or("mean".to_string(), |i| i.to_string()),
                num(r.m.psnr_y),
                num(r.m.psnr_u),
                num(r.m.psnr_v),
                num(r.m.ssim),
            ]
        })
        .collect();
    write_rows(path, &["method", "frame_index", "psnr_y", "psnr_u", "psnr_v", "ssim"], &rows)
}

pub fn cmd_eval(a: &EvalArgs) -> AppResult<()> {
    let (cfg, w) = load_for_inference(&a.ckpt, a.fused)?;
    let (m, root) = Manifest::load(&a.manifest)?;
    let (tr, va) = split_validation(m.frames.len());
    let range = match a.split {
        Split::All => 0..m.frames.len(),
        Split::Train => tr,
        Split::Val => va,
    };
    if range.is_empty() {
        return Err(AppError::Config(format!("split {:?} selects no frames", a.split)));
    }
    let frames = range
        .map(|i| {
            let f = m.load_frame(&root, i)?;
            Ok((f.index, f.sample()?))
        })
        .collect::<AppResult<Vec<_>>>()?;
    let rows = evaluate(&cfg, &w, &frames)?;
    write_eval_csv(&a.csv, &rows)?;
    for r in rows.iter().filter(|r| r.frame_index.is_none()) {
        println!(
            "{:<12} PSNR-Y {:.3}  PSNR-U {:.3}  PSNR-V {:.3}  SSIM {:.4}",
            r.method, r.m.psnr_y, r.m.psnr_u, r.m.psnr_v, r.m.ssim
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// conv2d, pac, attention, pffl, model or all.
    #[arg(long, default_value = "all")]
    pub module: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> AppResult<()> {
    let suites: Vec<Suite> = if a.module == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![a.module.parse().map_err(AppError::Config)?]
    };
    let mut failed = Vec::new();
    for s in suites {
        for c in gradsuite::run(s, a.seed)? {
            let r = &c.report;
            println!(
                "{:<28} max_rel {:.3e}  max_abs {:.3e}  coords {:>4}  tol {:.0e}  {}",
                c.name,
                r.max_rel_error,
                r.max_abs_error,
                r.coords_checked,
                r.tol,
                if r.passed { "ok" } else { "FAIL" }
            );
            if !r.passed {
                failed.push(c.name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(AppError::Numerical(format!("gradient mismatch in {}", failed.join(", "))))
    }
}

#[derive(Debug, Clone, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Position of the frame in the manifest.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Output PGM.
    #[arg(long)]
    pub out: PathBuf,
}

/// Gray level per CU size (larger CUs brighter), CU borders drawn black.
pub fn render_partition(partition: &Plane, cus: &[cpgsr_core::codec::CuRect]) -> Plane {
    let mut p = Plane::from_fn(partition.width, partition.height, |x, y| {
        (partition.get(x, y) * 255.0).round()
    });
    for cu in cus {
        for i in 0..cu.size {
            for (x, y) in [
                (cu.x + i, cu.y),
                (cu.x, cu.y + i),
                (cu.x + i, cu.y + cu.size - 1),
                (cu.x + cu.size - 1, cu.y + i),
            ] {
                if x < p.width && y < p.height {
                    p.set(x, y, 0.0);
                }
            }
        }
    }
    p
}

pub fn cmd_viz_partition(a: &VizArgs) -> AppResult<()> {
    let (m, root) = Manifest::load(&a.manifest)?;
    let f = m.load_frame(&root, a.frame)?;
    let img = render_partition(&f.priors.partition, &f.priors.cus);
    pnm::write_pgm(&a.out, &img)?;
    println!("{} CUs, {}x{} map -> {}", f.priors.cus.len(), img.width, img.height, a.out.display());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV table.
    #[arg(long)]
    pub csv: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

fn held_out(data: &Dataset) -> Vec<(usize, FrameSample)> {
    if data.val.is_empty() {
        data.train.iter().cloned().enumerate().collect()
    } else {
        data.val_indices.iter().copied().zip(data.val.iter().cloned()).collect()
    }
}

/// Model and bicubic mean metrics on the held-out frames.
pub fn held_out_metrics(
    cfg: &ModelConfig,
    w: &ModelWeights<f32>,
    data: &Dataset,
) -> AppResult<(FrameMetrics, FrameMetrics)> {
    let rows = evaluate(cfg, w, &held_out(data))?;
    let mean = |method: &str| {
        rows.iter()
            .find(|r| r.frame_index.is_none() && r.method == method)
            .map(|r| r.m)
            .expect("mean rows present")
    };
    Ok((mean("model"), mean("bicubic")))
}

pub const ABLATIONS: [&str; 5] = ["full", "no_cdgb", "no_pac", "no_attention", "no_pffl"];

pub fn ablate_config(base: (ModelConfig, TrainConfig), variant: &str) -> (ModelConfig, TrainConfig) {
    let (mut m, mut t) = base;
    match variant {
        "no_cdgb" => m.ablation.no_cdgb = true,
        "no_pac" => m.ablation.no_pac = true,
        "no_attention" => m.ablation.no_attention = true,
        "no_pffl" => t.loss.beta = 0.0,
        _ => {}
    }
    (m, t)
}

pub fn cmd_ablate(a: &ExperimentArgs) -> AppResult<()> {
    let base = load_config(a.config.as_deref(), &a.overrides)?;
    let data = load_dataset(&a.manifest)?;
    let mut rows = Vec::new();
    for v in ABLATIONS {
        let (m, t) = ablate_config(base, v);
        eprintln!("== {v}");
        let (trainer, report) = fit(m, t, &data, true)?;
        let (sr, bic) = held_out_metrics(&m, &trainer.weights, &data)?;
        println!("{v:<13} PSNR-Y {:.3}  SSIM {:.4}  (bicubic {:.3})", sr.psnr_y, sr.ssim, bic.psnr_y);
        rows.push(vec![
            v.to_string(),
            param_count(&m, Form::Fused).to_string(),
            report.steps.len().to_string(),
            num(report.tail_loss(10).unwrap_or(f64::NAN)),
            num(sr.psnr_y),
            num(sr.ssim),
            num(bic.psnr_y),
        ]);
    }
    write_rows(
        &a.csv,
        &["variant", "params_fused", "steps", "final_loss", "psnr_y", "ssim", "bicubic_psnr_y"],
        &rows,
    )
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Values of m to train.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6")]
    pub ms: Vec<usize>,
}

pub fn cmd_sweep_m(a: &SweepArgs) -> AppResult<()> {
    let base = load_config(a.exp.config.as_deref(), &a.exp.overrides)?;
    let data = load_dataset(&a.exp.manifest)?;
    let mut rows = Vec::new();
    for &mv in &a.ms {
        let m = ModelConfig { m: mv, ..base.0 };
        m.validate().map_err(|e| AppError::Config(e.to_string()))?;
        eprintln!("== m = {mv}");
        let (trainer, report) = fit(m, base.1, &data, true)?;
        let (sr, _) = held_out_metrics(&m, &trainer.weights, &data)?;
        let final_loss = report.tail_loss(10).unwrap_or(f64::NAN);
        println!(
            "m={mv}  params {} (fused)  final loss {final_loss:.4}  PSNR-Y {:.3}",
            param_count(&m, Form::Fused),
            sr.psnr_y
        );
        rows.push(vec![
            mv.to_string(),
            param_count(&m, Form::Train).to_string(),
            param_count(&m, Form::Fused).to_string(),
            num(report.first_loss().unwrap_or(f32::NAN) as f64),
            num(final_loss),
            final_loss.is_finite().to_string(),
            num(sr.psnr_y),
        ]);
    }
    write_rows(
        &a.exp.csv,
        &["m", "params_train", "params_fused", "first_loss", "final_loss", "finite", "psnr_y"],
        &rows,
    )
}
