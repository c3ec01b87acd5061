//! Command-line entry point: training, inference, evaluation, and the
//! three studies (ablation, encoding-dimension sweep, Laplacian study).
//!
//! Exit codes: 0 success, 1 usage error (bad flags, unknown keys), 2
//! runtime error (I/O, bad files, training failures).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use ultrasr::evalbench::{
    evaluate, evaluate_bicubic, laplacian_study, run_ablation, run_dim_sweep, write_json,
    EvalError,
};
use ultrasr::imaging::{bicubic_resize, load_png, save_png, ImagingError};
use ultrasr::model::{render, ModelError};
use ultrasr::synth::make_dataset;
use ultrasr::training::{load_checkpoint, load_dataset_entries, train, TrainConfig, TrainError};

const TRAIN_SCHEMA: &str = "\
Config file schema (JSON, unknown keys rejected):
  {
    \"dataset_dir\": \"path\",          required; directory of HR PNGs
    \"epochs\": 20,                   epochs to run (0 = save initialization)
    \"iters_per_epoch\": 100,
    \"batch_size\": 4,
    \"lr_patch\": 48,                 LR patch side in pixels
    \"queries_per_item\": 2304,       query pixels per batch item
    \"scale_min\": 2.0,               training scale range (uniform)
    \"scale_max\": 4.0,
    \"lr\": 1e-4,                     base learning rate
    \"lr_halve_epochs\": [8, 14],     halve the rate at these epochs
    \"seed\": 0,
    \"precision\": \"single\",          \"single\" or \"double\"
    \"model\": {                      all keys optional
      \"enc_channels\": 32,           encoder feature channels
      \"enc_blocks\": 4,              residual conv blocks
      \"hidden_width\": 256,          decoder hidden width
      \"hidden_layers\": 4,
      \"encoding_dim\": 48,           periodic encoding size (multiple of 4)
      \"use_encoding\": true,         S: periodic spatial encoding
      \"use_fusion\": true,           C: coordinate fusion into every layer
      \"use_residual\": true,         R: decoder skip connections
      \"freq_init\": \"paper_2e_n\"     or \"pow2\"
    }
  }";

#[derive(Parser)]
#[command(
    name = "ultrasr",
    version,
    about = "Continuous arbitrary-scale image upscaling",
    arg_required_else_help = true
)]
struct Cli {
    /// Cap on worker threads (default: machine parallelism). The
    /// ULTRASR_THREADS environment variable is used when the flag is absent.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON config and write a checkpoint.
    #[command(after_long_help = TRAIN_SCHEMA)]
    Train {
        /// Training config (JSON; see --help for the schema).
        #[arg(long)]
        config: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON-lines training log (one record per epoch).
        #[arg(long)]
        log: Option<PathBuf>,
    },

    /// Upscale one PNG by a real factor (or to an explicit size).
    Upscale {
        /// Checkpoint to render with.
        #[arg(long)]
        ckpt: PathBuf,
        /// Input PNG.
        #[arg(long)]
        input: PathBuf,
        /// Upscaling factor; output dims = floor(scale * input dims).
        #[arg(long, required_unless_present = "out_size", conflicts_with = "out_size")]
        scale: Option<f64>,
        /// Explicit output size as HxW (e.g. 192x256).
        #[arg(long, value_name = "HxW")]
        out_size: Option<String>,
        /// Output PNG.
        #[arg(long)]
        output: PathBuf,
    },

    /// Evaluate a checkpoint (or the bicubic baseline) over a dataset.
    Eval {
        /// Checkpoint to evaluate (not needed with --baseline).
        #[arg(long, required_unless_present = "baseline")]
        ckpt: Option<PathBuf>,
        /// Directory of HR PNGs.
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated scale list, e.g. 2,3,4.
        #[arg(long)]
        scales: String,
        /// Where to write the JSON report.
        #[arg(long)]
        report: PathBuf,
        /// Evaluate a model-free baseline instead ("bicubic").
        #[arg(long, value_parser = ["bicubic"])]
        baseline: Option<String>,
    },

    /// Train and compare all 8 residual/fusion/encoding combinations.
    #[command(after_long_help = TRAIN_SCHEMA)]
    Ablate {
        /// Base training config (JSON); toggles are overridden per row.
        #[arg(long)]
        config: PathBuf,
        /// Directory of HR PNGs (training and evaluation).
        #[arg(long)]
        dataset: PathBuf,
        /// Evaluation scales.
        #[arg(long, default_value = "2,4,8")]
        scales: String,
        /// Where to write the JSON report.
        #[arg(long)]
        report: PathBuf,
    },

    /// Sweep the periodic encoding dimension against a no-encoding baseline.
    #[command(after_long_help = TRAIN_SCHEMA)]
    Dimsweep {
        /// Base training config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Encoding dimensions to train (each a positive multiple of 4).
        #[arg(long, default_value = "12,24,48")]
        dims: String,
        /// Directory of HR PNGs (training and evaluation).
        #[arg(long)]
        dataset: PathBuf,
        /// Evaluation scales.
        #[arg(long, default_value = "2,4,8")]
        scales: String,
        /// Where to write the JSON report.
        #[arg(long)]
        report: PathBuf,
    },

    /// Compare Laplacian sharpness statistics of two checkpoints.
    Lapstudy {
        /// Checkpoint trained with the spatial encoding.
        #[arg(long)]
        ckpt_s: PathBuf,
        /// Checkpoint trained without it.
        #[arg(long)]
        ckpt_nos: PathBuf,
        /// Directory of HR PNGs.
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated scale list.
        #[arg(long)]
        scales: String,
        /// Where to write the JSON report.
        #[arg(long)]
        report: PathBuf,
    },

    /// Generate the seeded synthetic corpus (gratings, checkerboards,
    /// gradients).
    MakeDataset {
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Number of images.
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Square image side in pixels.
        #[arg(long, default_value_t = 96)]
        size: usize,
        /// Generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },

    /// Bicubically downscale every PNG in a directory by a factor.
    MakeLr {
        /// Directory of HR PNGs.
        #[arg(long)]
        input: PathBuf,
        /// Downscaling factor; output dims = floor(input dims / scale).
        #[arg(long)]
        scale: f64,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
}

/// Prints a line to stdout, ignoring broken pipes (`ultrasr ... | head`
/// must not crash once the reader goes away).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("ULTRASR_THREADS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                CliError::Invalid(format!("ULTRASR_THREADS must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Invalid("thread count must be >= 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<TrainConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    let cfg: TrainConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn parse_scales(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| CliError::Invalid(format!("bad scale {p:?} in scale list")))
        })
        .collect()
}

fn parse_dims(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| CliError::Invalid(format!("bad dimension {p:?} in dim list")))
        })
        .collect()
}

fn parse_out_size(text: &str) -> Result<(usize, usize), CliError> {
    let err = || CliError::Invalid(format!("--out-size expects HxW (e.g. 192x256), got {text:?}"));
    let (h, w) = text.split_once('x').ok_or_else(err)?;
    let h = h.trim().parse::<usize>().map_err(|_| err())?;
    let w = w.trim().parse::<usize>().map_err(|_| err())?;
    if h == 0 || w == 0 {
        return Err(err());
    }
    Ok((h, w))
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train { config, out, log } => {
            let cfg = read_config(&config)?;
            train(&cfg, &out, log.as_deref(), |e| {
                say!("epoch {:>4}  loss {:.6}  lr {:.3e}", e.epoch, e.mean_loss, e.lr);
            })?;
            say!("wrote checkpoint {}", out.display());
            Ok(())
        }

        Command::Upscale { ckpt, input, scale, out_size, output } => {
            let (params, cfg) = load_checkpoint(&ckpt)?;
            let img = load_png(&input)?;
            let (oh, ow) = match (scale, out_size) {
                (Some(s), None) => {
                    if !(s.is_finite() && s > 0.0) {
                        return Err(CliError::Invalid(format!("scale must be positive, got {s}")));
                    }
                    let oh = (s * img.height() as f64).floor() as usize;
                    let ow = (s * img.width() as f64).floor() as usize;
                    if oh == 0 || ow == 0 {
                        return Err(CliError::Invalid(format!(
                            "scale {s} collapses a {}x{} input to zero size",
                            img.height(),
                            img.width()
                        )));
                    }
                    (oh, ow)
                }
                (None, Some(text)) => parse_out_size(&text)?,
                _ => unreachable!("clap enforces exactly one of --scale/--out-size"),
            };
            let sr = render(&img, oh, ow, &params, &cfg)?;
            save_png(&sr, &output)?;
            say!("wrote {} ({}x{})", output.display(), oh, ow);
            Ok(())
        }

        Command::Eval { ckpt, dataset, scales, report, baseline } => {
            let scales = parse_scales(&scales)?;
            let rep = match baseline {
                Some(_) => evaluate_bicubic(&dataset, &scales)?,
                None => evaluate(&ckpt.expect("clap requires --ckpt"), &dataset, &scales)?,
            };
            write_json(&rep, &report)?;
            say!("{}", rep.text().trim_end());
            say!("wrote report {}", report.display());
            Ok(())
        }

        Command::Ablate { config, dataset, scales, report } => {
            let cfg = read_config(&config)?;
            let scales = parse_scales(&scales)?;
            let rep = run_ablation(&cfg, &dataset, &scales)?;
            write_json(&rep, &report)?;
            say!("{}", rep.text().trim_end());
            say!("wrote report {}", report.display());
            Ok(())
        }

        Command::Dimsweep { config, dims, dataset, scales, report } => {
            let cfg = read_config(&config)?;
            let dims = parse_dims(&dims)?;
            let scales = parse_scales(&scales)?;
            let rep = run_dim_sweep(&cfg, &dims, &dataset, &scales)?;
            write_json(&rep, &report)?;
            say!("{}", rep.text().trim_end());
            say!("wrote report {}", report.display());
            Ok(())
        }

        Command::Lapstudy { ckpt_s, ckpt_nos, dataset, scales, report } => {
            let scales = parse_scales(&scales)?;
            let rep = laplacian_study(&ckpt_s, &ckpt_nos, &dataset, &scales)?;
            write_json(&rep, &report)?;
            say!("{}", rep.text().trim_end());
            say!("wrote report {}", report.display());
            Ok(())
        }

        Command::MakeDataset { out, count, size, seed } => {
            let paths = make_dataset(&out, count, size, seed)?;
            say!("wrote {} images ({size}x{size}) to {}", paths.len(), out.display());
            Ok(())
        }

        Command::MakeLr { input, scale, out } => {
            if !(scale.is_finite() && scale >= 1.0) {
                return Err(CliError::Invalid(format!("scale must be >= 1, got {scale}")));
            }
            let entries = load_dataset_entries(&input)?;
            std::fs::create_dir_all(&out)
                .map_err(|e| CliError::Io { path: out.display().to_string(), source: e })?;
            for (name, img) in &entries {
                let lh = (img.height() as f64 / scale).floor() as usize;
                let lw = (img.width() as f64 / scale).floor() as usize;
                if lh == 0 || lw == 0 {
                    return Err(CliError::Invalid(format!(
                        "{name}: {}x{} image vanishes at scale {scale}",
                        img.height(),
                        img.width()
                    )));
                }
                save_png(&bicubic_resize(img, lh, lw), &out.join(format!("{name}.png")))?;
            }
            say!("wrote {} images to {}", entries.len(), out.display());
            Ok(())
        }
    }
}
