//! `mgdm`: metadata-guided diffusion recovery for bitstream-corrupted video.

use clap::{Parser, Subcommand};
use mgdm_train::{Checkpoint, Config, RecoverySettings};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mgdm", version, about = "Blind recovery of bitstream-corrupted video")]
struct Cli {
    /// Base seed for data generation, training and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores). Results are identical for any value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// error | warn | info | debug | trace
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic corrupted clips with codec metadata.
    GenerateData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        clips: usize,
    },
    /// Run one training stage.
    Train {
        #[arg(long)]
        stage: u8,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt_in: Option<PathBuf>,
        #[arg(long)]
        ckpt_out: PathBuf,
    },
    /// Recover one clip: writes recovered/, intermediate/, composed/.
    Recover {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        clip: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict corruption masks: writes mask_pred/ and mask_bin/.
    PredictMask {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        clip: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint over a dataset and write a report.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Record wall time in the report (makes reports run-dependent).
        #[arg(long, default_value_t = false)]
        timing: bool,
    },
}

enum CliError {
    Train(mgdm_train::TrainError),
    Eval(mgdm_eval::EvalError),
    Codec(mgdm_codec::CodecError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        // 2: input/configuration problems, 3: format problems, 1: the rest
        let kind = match self {
            CliError::Train(e) => match e.kind() {
                mgdm_train::ErrorKind::Config | mgdm_train::ErrorKind::Input => 2,
                mgdm_train::ErrorKind::Format => 3,
                _ => 1,
            },
            CliError::Eval(e) => match e.kind() {
                mgdm_eval::ErrorKind::Config | mgdm_eval::ErrorKind::Input => 2,
                mgdm_eval::ErrorKind::Format => 3,
                _ => 1,
            },
            CliError::Codec(e) => match e.kind() {
                mgdm_codec::ErrorKind::Config | mgdm_codec::ErrorKind::Input => 2,
                mgdm_codec::ErrorKind::Format => 3,
                _ => 1,
            },
        };
        kind
    }

    fn message(&self) -> String {
        match self {
            CliError::Train(e) => e.to_string(),
            CliError::Eval(e) => e.to_string(),
            CliError::Codec(e) => e.to_string(),
        }
    }
}

impl From<mgdm_train::TrainError> for CliError {
    fn from(e: mgdm_train::TrainError) -> Self {
        CliError::Train(e)
    }
}
impl From<mgdm_eval::EvalError> for CliError {
    fn from(e: mgdm_eval::EvalError) -> Self {
        CliError::Eval(e)
    }
}
impl From<mgdm_codec::CodecError> for CliError {
    fn from(e: mgdm_codec::CodecError) -> Self {
        CliError::Codec(e)
    }
}

fn write_frames(dir: &Path, sub: &str, frames: &ndarray::Array4<u8>) -> Result<(), CliError> {
    let out = dir.join(sub);
    std::fs::create_dir_all(&out)
        .map_err(|e| mgdm_codec::CodecError::io(out.display().to_string(), e))?;
    let (n, h, w) = (frames.shape()[0], frames.shape()[1], frames.shape()[2]);
    for i in 0..n {
        let frame = frames.index_axis(ndarray::Axis(0), i);
        let buf = frame.as_standard_layout();
        let img = image::RgbImage::from_raw(w as u32, h as u32, buf.as_slice().unwrap().to_vec())
            .expect("frame buffer");
        let path = out.join(format!("{i:05}.png"));
        img.save(&path)
            .map_err(|e| mgdm_codec::CodecError::format(path.display().to_string(), e.to_string()))?;
    }
    Ok(())
}

fn write_gray(dir: &Path, sub: &str, planes: &ndarray::Array3<u8>) -> Result<(), CliError> {
    let out = dir.join(sub);
    std::fs::create_dir_all(&out)
        .map_err(|e| mgdm_codec::CodecError::io(out.display().to_string(), e))?;
    let (n, h, w) = (planes.shape()[0], planes.shape()[1], planes.shape()[2]);
    for i in 0..n {
        let plane = planes.index_axis(ndarray::Axis(0), i);
        let buf = plane.as_standard_layout();
        let img = image::GrayImage::from_raw(w as u32, h as u32, buf.as_slice().unwrap().to_vec())
            .expect("plane buffer");
        let path = out.join(format!("{i:05}.png"));
        img.save(&path)
            .map_err(|e| mgdm_codec::CodecError::format(path.display().to_string(), e.to_string()))?;
    }
    Ok(())
}

fn load_clip_outputs(
    checkpoint: &Path,
    clip: &Path,
    seed: u64,
) -> Result<mgdm_train::RecoveryOutput, CliError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let (models, params) = mgdm_train::models_from_checkpoint(&ckpt)?;
    let bundle = mgdm_codec::read_bundle(clip)?;
    let cfg = ckpt.config()?;
    let out = mgdm_train::recover_clip(
        &models,
        &params,
        ckpt.latent_scale,
        &bundle,
        &RecoverySettings {
            sample_steps: models.cfg.sample_steps,
            noise_seed: seed,
            soft_compose: cfg.bool("compose.soft", false)?,
        },
    )?;
    Ok(out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenerateData { config, out, clips } => {
            let cfg = Config::from_file(&config)?;
            let spec = mgdm_train::generate_spec_from(&cfg)?;
            mgdm_train::generate_dataset(&spec, &out, cli.seed, clips)?;
            println!("generated {clips} clips under {}", out.display());
            Ok(())
        }
        Command::Train {
            stage,
            config,
            data,
            ckpt_in,
            ckpt_out,
        } => {
            let mut cfg = Config::from_file(&config)?;
            if cfg.get("seed").is_none() && cli.seed != 0 {
                cfg.set("seed", &cli.seed.to_string());
            }
            let load_in = |p: &Option<PathBuf>| -> Result<Checkpoint, CliError> {
                let p = p.as_ref().ok_or_else(|| {
                    mgdm_train::TrainError::Input(format!(
                        "stage {stage} requires --ckpt-in from the previous stage"
                    ))
                })?;
                Ok(Checkpoint::load(p)?)
            };
            let (ckpt, report) = match stage {
                1 => mgdm_train::train_stage1(&cfg, &data)?,
                2 => mgdm_train::train_stage2(&cfg, &data, load_in(&ckpt_in)?)?,
                3 => mgdm_train::train_stage3(&cfg, &data, load_in(&ckpt_in)?)?,
                other => {
                    return Err(
                        mgdm_train::TrainError::Input(format!("unknown stage {other}")).into(),
                    )
                }
            };
            ckpt.save(&ckpt_out)?;
            println!(
                "stage {stage} finished: {} steps, checkpoint {}",
                report.loss.len(),
                ckpt_out.display()
            );
            if stage == 1 {
                println!(
                    "probe denoising loss: {:.5} -> {:.5}",
                    report.probe_start, report.probe_end
                );
            }
            if let Some(iou) = report.mask_iou {
                println!("train-clip mask IoU: {iou:.4}");
            }
            if let (Some(pc), Some(pr)) = (report.psnr_composed, report.psnr_refined) {
                println!("train-clip PSNR: composed {pc:.3} dB, refined {pr:.3} dB");
            }
            Ok(())
        }
        Command::Recover {
            checkpoint,
            clip,
            out,
        } => {
            let res = load_clip_outputs(&checkpoint, &clip, cli.seed)?;
            write_frames(&out, "recovered", &res.y_hat)?;
            write_frames(&out, "intermediate", &res.y_tilde)?;
            write_frames(&out, "composed", &res.x_tilde)?;
            println!("recovered clip written to {}", out.display());
            Ok(())
        }
        Command::PredictMask {
            checkpoint,
            clip,
            out,
        } => {
            let res = load_clip_outputs(&checkpoint, &clip, cli.seed)?;
            let probs = res
                .mask
                .probs
                .mapv(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8);
            let binary = res.mask.binary.mapv(|b| if b != 0 { 255u8 } else { 0 });
            write_gray(&out, "mask_pred", &probs)?;
            write_gray(&out, "mask_bin", &binary)?;
            println!("masks written to {}", out.display());
            Ok(())
        }
        Command::Evaluate {
            checkpoint,
            data,
            report,
            timing,
        } => {
            let opts = mgdm_eval::EvaluateOptions {
                seed: cli.seed,
                timing,
                soft_compose: false,
            };
            let rep = mgdm_eval::evaluate(&checkpoint, &data, &opts)?;
            rep.write(&report)?;
            let a = &rep.aggregate;
            println!(
                "evaluated {} clips ({} scored): PSNR corrupted {} -> recovered {}, mask IoU {}",
                a.clips,
                a.scored_clips,
                a.mean_psnr_corrupted.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
                a.mean_psnr_recovered.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
                a.mean_mask_iou.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            );
            println!("report written to {}", report.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
