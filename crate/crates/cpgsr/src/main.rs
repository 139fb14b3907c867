use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpgsr::commands::*;

/// Super-resolution of compressed frames guided by codec side information.
#[derive(Debug, Parser)]
#[command(name = "cpgsr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic HR frames, bicubic and codec-degraded LR frames, priors and a manifest.
    Simulate(SimulateArgs),
    /// Train on a manifest; writes final and best checkpoints plus CSV logs.
    Train(TrainArgs),
    /// Collapse every Repconv block into a single 3x3 convolution.
    Fuse(FuseArgs),
    /// Super-resolve every manifest frame to PPM and raw YUV 4:2:0.
    Infer(InferArgs),
    /// Per-frame PSNR-Y/U/V and SSIM-Y of the model and of bicubic upsampling.
    Eval(EvalArgs),
    /// Finite-difference checks of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Render a frame's partition map as a grayscale PGM.
    VizPartition(VizArgs),
    /// Train and evaluate each ablation variant.
    Ablate(ExperimentArgs),
    /// Train and evaluate several reconstruction depths m.
    SweepM(SweepArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::VizPartition(a) => cmd_viz_partition(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::SweepM(a) => cmd_sweep_m(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
