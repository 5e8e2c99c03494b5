//! Command-line interface: `train`, `infer`, `eval`, and `ablate`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use psfnet::config::{parse_run_config, RunConfig};
use psfnet::data::{
    build_network_input, load_scene_with, write_png_u8, write_radiance_hdr, LoadOptions,
};
use psfnet::metrics::{evaluate, EvalOptions, SceneMetrics};
use psfnet::tile::{infer_tiled, TileSpec};
use psfnet::tonemap::mu_law;
use psfnet::trainer::{
    block_count_matrix, component_matrix, fusion_matrix, load_checkpoint, parse_matrix,
    run_ablation, train,
};

#[derive(Parser)]
#[command(
    name = "psfnet",
    about = "Multi-exposure HDR reconstruction: training, inference, evaluation, ablations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a dataset of scene directories.
    Train(TrainArgs),
    /// Reconstruct an HDR image from one scene directory.
    Infer(InferArgs),
    /// Evaluate a checkpoint over a test set and write a metrics report.
    Eval(EvalArgs),
    /// Train and evaluate a matrix of model variants.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset root: a directory of scene directories.
    #[arg(long)]
    data: PathBuf,
    /// Key=value configuration file (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for checkpoints and the training log.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    /// Scene directory (ground truth optional).
    #[arg(long)]
    scene: PathBuf,
    /// Checkpoint to run.
    #[arg(long)]
    ckpt: PathBuf,
    /// Output directory for the HDR result and tone-mapped preview.
    #[arg(long)]
    out: PathBuf,
    /// Tile size for bounded-memory inference.
    #[arg(long, default_value_t = 512)]
    tile: usize,
    /// Overlap between adjacent tiles.
    #[arg(long, default_value_t = 64)]
    overlap: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Test set root: a directory of scene directories with ground truth.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long)]
    ckpt: PathBuf,
    /// Where to write the CSV report (a JSON twin lands next to it).
    #[arg(long)]
    report: PathBuf,
    /// Optional configuration file (tonemap.mu, data.resize).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tile size for inference.
    #[arg(long, default_value_t = 512)]
    tile: usize,
    /// Overlap between adjacent tiles.
    #[arg(long, default_value_t = 64)]
    overlap: usize,
}

#[derive(Args)]
struct AblateArgs {
    /// Training dataset root.
    #[arg(long)]
    data: PathBuf,
    /// Ablation matrix: `fusion`, `components`, `blocks`, or a matrix file.
    #[arg(long)]
    matrix: String,
    /// Output directory for per-variant runs and the report.
    #[arg(long)]
    out: PathBuf,
    /// Evaluation dataset root (defaults to the training root).
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Configuration file with the base model and training recipe.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> psfnet::Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|_| psfnet::Error::NotFound(p.clone()))?;
            parse_run_config(&text, p)
        }
    }
}

fn cmd_train(args: TrainArgs) -> psfnet::Result<()> {
    let config = load_config(&args.config)?;
    let load = LoadOptions {
        resize_to: config.resize_to,
    };
    let outcome = train(&args.data, config.model, &config.train, &args.out, load)?;
    println!("final checkpoint: {}", outcome.final_checkpoint.display());
    println!("training log:     {}", outcome.log_path.display());
    if let Some(loss) = outcome.epoch_losses.last() {
        println!("final epoch loss: {loss:.6}");
    }
    Ok(())
}

fn cmd_infer(args: InferArgs) -> psfnet::Result<()> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let sample = load_scene_with(&args.scene, LoadOptions::default())?;
    let input = build_network_input(&sample.bracket)?;
    let spec = TileSpec {
        tile_size: args.tile,
        overlap: args.overlap,
    };
    let hdr = infer_tiled(&ckpt.model, &input, &spec)?;

    std::fs::create_dir_all(&args.out)?;
    let hdr_path = args.out.join(format!("{}.hdr", sample.scene_id));
    write_radiance_hdr(&hdr_path, &hdr)?;
    let preview = mu_law(&hdr, Default::default())?;
    let preview_path = args.out.join(format!("{}_preview.png", sample.scene_id));
    write_png_u8(&preview_path, &preview)?;
    println!("hdr:     {}", hdr_path.display());
    println!("preview: {}", preview_path.display());

    if let Some(gt) = &sample.ground_truth {
        let m = SceneMetrics::compute(&hdr, gt, Default::default())?;
        println!(
            "psnr_mu {:.4}  psnr_l {:.4}  ssim_mu {:.4}  ssim_l {:.4}",
            m.psnr_mu, m.psnr_l, m.ssim_mu, m.ssim_l
        );
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> psfnet::Result<()> {
    let config = load_config(&args.config)?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    let options = EvalOptions {
        tile: TileSpec {
            tile_size: args.tile,
            overlap: args.overlap,
        },
        tonemap: config.tonemap,
        resize_to: config.resize_to,
    };
    let report = evaluate(&ckpt.model, &args.data, &options)?;
    if let Some(parent) = args.report.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&args.report, report.to_csv())?;
    let json_path = args.report.with_extension("json");
    std::fs::write(&json_path, report.to_json())?;
    print!("{}", report.to_csv());
    println!("report: {} (+ {})", args.report.display(), json_path.display());
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> psfnet::Result<()> {
    let config = load_config(&args.config)?;
    let variants = match args.matrix.as_str() {
        "fusion" => fusion_matrix(&config.model),
        "components" => component_matrix(&config.model),
        "blocks" => block_count_matrix(&config.model),
        path => {
            let p = Path::new(path);
            let text =
                std::fs::read_to_string(p).map_err(|_| psfnet::Error::NotFound(p.to_path_buf()))?;
            parse_matrix(&text, &config.model, p)?
        }
    };
    let test_root = args.test_data.as_ref().unwrap_or(&args.data);
    let eval_options = EvalOptions {
        tile: TileSpec::default(),
        tonemap: config.tonemap,
        resize_to: config.resize_to,
    };
    let report = run_ablation(
        &variants,
        &args.data,
        test_root,
        &config.train,
        &eval_options,
        &args.out,
    )?;
    std::fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("ablation.csv");
    std::fs::write(&csv_path, report.to_csv())?;
    print!("{}", report.to_csv());
    println!("report: {}", csv_path.display());
    Ok(())
}
