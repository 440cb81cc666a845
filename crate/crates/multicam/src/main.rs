use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use multicam::commands::{
    cmd_edit, cmd_eval, cmd_gen, cmd_gradcheck, cmd_train, discover_scenes, CommandError,
    TrainData,
};
use multicam::config::RunConfig;
use multicam::edl::EditOptions;
use multicam::model::{ModelConfig, StreamMode};

#[derive(Parser)]
#[command(
    name = "multicam",
    about = "Multi-camera editing: synthesize shows, train the track scorer, evaluate, and cut EDLs",
    version
)]
struct Cli {
    /// TOML run configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for model init, training and generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes as pool + annotation file pairs.
    Gen(GenArgs),
    /// Train a checkpoint on scene files.
    Train(TrainArgs),
    /// Evaluate a checkpoint against the random baseline.
    Eval(EvalArgs),
    /// Cut a pool into an edit decision list.
    Edit(EditArgs),
    /// Check model gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output directory for scene_NNN.pool / scene_NNN.ann pairs.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    scenes: usize,
    /// Scene length in seconds (overrides the generator config).
    #[arg(long)]
    duration_secs: Option<f64>,
    #[arg(long)]
    tracks: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    min_shot_frames: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of scenes to 4:1-split into train/test.
    #[arg(long, conflicts_with_all = ["train_files"])]
    data: Option<PathBuf>,
    /// Explicit training pool files (each needs a sibling .ann).
    #[arg(long, num_args = 1..)]
    train_files: Vec<PathBuf>,
    /// Explicit held-out pool files for the split manifest.
    #[arg(long, num_args = 0..)]
    test_files: Vec<PathBuf>,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Loss-curve table output (defaults to <out>.loss.txt).
    #[arg(long)]
    loss_curve: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Seed for the 4:1 scene split (defaults to the train seed).
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory whose scenes all serve as test data.
    #[arg(long, conflicts_with = "test_files")]
    data: Option<PathBuf>,
    /// Explicit test pool files (each needs a sibling .ann).
    #[arg(long, num_args = 1..)]
    test_files: Vec<PathBuf>,
    /// Write the model's EvalReport as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ablation: "temporal" or "contextual" keeps only that stream.
    #[arg(long)]
    only: Option<String>,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    /// EDL output path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Decide every N frames.
    #[arg(long, default_value_t = 1)]
    decision_stride: usize,
    /// Suppress cuts before the incumbent shot reaches this length (0 = off).
    #[arg(long, default_value_t = 0)]
    min_shot_frames: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Tracks in the probe group.
    #[arg(long, default_value_t = 3)]
    tracks: usize,
    #[arg(long, default_value_t = 8)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    layers: usize,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CommandError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
        config.apply_master_seed();
    }
    Ok(config)
}

fn scene_pairs(files: &[PathBuf]) -> Vec<(PathBuf, PathBuf)> {
    files
        .iter()
        .map(|p| (p.clone(), p.with_extension("ann")))
        .collect()
}

fn run(cli: Cli) -> Result<(), CommandError> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Gen(args) => {
            if let Some(secs) = args.duration_secs {
                config.generator.duration_frames = (secs * config.generator.fps).round() as usize;
            }
            if let Some(tracks) = args.tracks {
                config.generator.tracks = tracks;
            }
            if let Some(dim) = args.feature_dim {
                config.generator.dim = dim;
                config.model.d_in = dim;
            }
            if let Some(m) = args.min_shot_frames {
                config.generator.min_shot_frames = m;
            }
            let summary = cmd_gen(&config, &args.out, args.scenes)?;
            print!("{summary}");
            Ok(())
        }
        Command::Train(args) => {
            if let Some(e) = args.epochs {
                config.train.epochs = e;
            }
            if let Some(b) = args.batch_size {
                config.train.batch_size = b;
            }
            if let Some(lr) = args.learning_rate {
                config.train.learning_rate = lr;
            }
            let data = if let Some(dir) = &args.data {
                TrainData::SplitFrom {
                    scenes: discover_scenes(dir)?,
                    split_seed: args.split_seed.unwrap_or(config.train.seed),
                }
            } else if !args.train_files.is_empty() {
                TrainData::Explicit {
                    train: scene_pairs(&args.train_files),
                    test: scene_pairs(&args.test_files),
                }
            } else {
                return Err(CommandError::Config(vec![
                    "train: pass --data <dir> or --train-files <pools...>".into(),
                ]));
            };
            let curve = args
                .loss_curve
                .unwrap_or_else(|| args.out.with_extension("loss.txt"));
            let summary = cmd_train(&config, data, &args.out, Some(&curve))?;
            print!("{summary}");
            Ok(())
        }
        Command::Eval(args) => {
            let scenes = if let Some(dir) = &args.data {
                discover_scenes(dir)?
            } else if !args.test_files.is_empty() {
                scene_pairs(&args.test_files)
            } else {
                return Err(CommandError::Config(vec![
                    "eval: pass --data <dir> or --test-files <pools...>".into(),
                ]));
            };
            let mode = match args.only.as_deref() {
                None => StreamMode::Full,
                Some("temporal") => StreamMode::TemporalOnly,
                Some("contextual") => StreamMode::ContextualOnly,
                Some(other) => {
                    return Err(CommandError::Config(vec![format!(
                        "eval: --only must be \"temporal\" or \"contextual\", got {other:?}"
                    )]));
                }
            };
            let summary = cmd_eval(&config, &args.checkpoint, &scenes, args.out.as_deref(), mode)?;
            print!("{summary}");
            Ok(())
        }
        Command::Edit(args) => {
            let options = EditOptions {
                decision_stride: args.decision_stride,
                min_shot_frames: args.min_shot_frames,
            };
            let summary = cmd_edit(&args.checkpoint, &args.pool, &args.out, &options)?;
            print!("{summary}");
            Ok(())
        }
        Command::Gradcheck(args) => {
            let model = ModelConfig {
                d_model: args.d_model,
                w: args.window,
                n_layers_t: args.layers,
                n_layers_c: args.layers,
                n_heads: if args.d_model % 2 == 0 { 2 } else { 1 },
                d_ff: 2 * args.d_model,
                d_fuse: args.d_model,
                d_in: 5,
                seed: config.model.seed,
                ..ModelConfig::default()
            };
            let report = cmd_gradcheck(&model, args.tracks, config.model.seed)?;
            print!("{report}");
            if report.passed() {
                Ok(())
            } else {
                Err(CommandError::Runtime(
                    format!("worst relative error {:.3e} exceeds tolerance", report.worst()).into(),
                ))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; real usage errors exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
