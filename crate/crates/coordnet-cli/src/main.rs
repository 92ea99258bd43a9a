//! `coordnet` — train and evaluate the coordinate-channel MNIST models and
//! run the baseline-vs-coordinate comparison experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coordnet::checkpoint::load_checkpoint;
use coordnet::coords::append_coords_batch;
use coordnet::data::{load_mnist_raw, DatasetSplit};
use coordnet::models::{build_classifier, NetworkSpec};
use coordnet::ops::steps_to_global;
use coordnet::optim::OptimizerKind;
use coordnet::rng::RngState;
use coordnet::train::{evaluate, train, Dtype2, TrainConfig};
use coordnet::{Element, Error};
use coordnet_cli::experiments::{
    classifier_splits, exp_mnist, exp_resolution, exp_translation, exp_vae, ExpOptions,
};
use coordnet_cli::features::dump_feature_maps;
use coordnet_cli::report::ExperimentReport;

#[derive(Parser)]
#[command(
    name = "coordnet",
    version,
    about = "Coordinate-channel MNIST models: training, evaluation, experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one classifier variant and save its best-validation checkpoint
    Train(TrainArgs),
    /// Score a saved classifier checkpoint on the test set
    Eval(EvalArgs),
    /// Run a comparison experiment and write a JSON report
    #[command(subcommand)]
    Exp(ExpCommand),
    /// Export first-layer feature maps from a checkpoint as PNGs
    DumpFeatures(DumpArgs),
    /// Strided-filter steps until the receptive field covers the input
    StepsToGlobal(StepsArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Directory with the four MNIST IDX files, plain or .gz
    /// (falls back to $MNIST_DATA_DIR)
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl DataArgs {
    fn resolve(&self) -> Result<PathBuf, Error> {
        if let Some(d) = &self.data_dir {
            return Ok(d.clone());
        }
        if let Some(d) = std::env::var_os("MNIST_DATA_DIR") {
            return Ok(PathBuf::from(d));
        }
        Err(Error::Data(
            "no dataset location: pass --data-dir or set MNIST_DATA_DIR to a directory \
             holding train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte \
             and t10k-labels-idx1-ubyte (each optionally gzipped)"
                .into(),
        ))
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Copy, Clone, ValueEnum)]
enum CoordMode {
    On,
    Off,
}

#[derive(Copy, Clone, ValueEnum)]
enum Opt {
    Sgd,
    Adam,
}

impl From<Opt> for OptimizerKind {
    fn from(o: Opt) -> Self {
        match o {
            Opt::Sgd => OptimizerKind::Sgd,
            Opt::Adam => OptimizerKind::Adam,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Append the x/y position grids as input channels
    #[arg(long, value_enum, default_value_t = CoordMode::On)]
    coords: CoordMode,
    #[arg(long, value_enum, default_value_t = Opt::Adam)]
    optimizer: Opt,
    /// Epochs without validation improvement before stopping; 0 disables
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Train on N images with max(N/10, 1) validation instead of 45k/5k
    #[arg(long)]
    subset: Option<usize>,
    /// Score only the first N test images
    #[arg(long)]
    test_subset: Option<usize>,
    /// Best-validation checkpoint destination
    #[arg(long, default_value = "model.ckpt")]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Classifier checkpoint to score (the variant is read from it)
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Score only the first N test images
    #[arg(long)]
    test_subset: Option<usize>,
}

#[derive(Subcommand)]
enum ExpCommand {
    /// Baseline vs coordinate classifier on the standard splits
    Mnist(ExpArgs),
    /// Train at halved effective resolution, test on the originals
    Resolution(ExpArgs),
    /// Both variants scored over a 5x5 grid of test-image pixel shifts
    Translation(TranslationArgs),
    /// Position-reconstructing variational autoencoder
    Vae(VaeArgs),
}

#[derive(Args)]
struct ExpArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated run seeds
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Shorthand for a single-seed run
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Train on N images with max(N/10, 1) validation instead of 45k/5k
    #[arg(long)]
    subset: Option<usize>,
    /// Score only the first N test images
    #[arg(long)]
    test_subset: Option<usize>,
    /// Report destination; artifacts go to `<stem>-artifacts/` next to it
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

impl ExpArgs {
    fn options(&self) -> Result<ExpOptions, Error> {
        Ok(ExpOptions {
            data_dir: self.data.resolve()?,
            report_path: self.out.clone(),
            seeds: match self.seed {
                Some(s) => vec![s],
                None => self.seeds.clone(),
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            subset: self.subset,
            test_subset: self.test_subset,
            latent_dim: 16,
            beta: 1.0,
        })
    }
}

#[derive(Args)]
struct TranslationArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Run seed (this experiment measures one run's shift matrix)
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Train on N images with max(N/10, 1) validation instead of 45k/5k
    #[arg(long)]
    subset: Option<usize>,
    /// Score only the first N test images (per shift)
    #[arg(long)]
    test_subset: Option<usize>,
    /// Report destination
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct VaeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated run seeds
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Shorthand for a single-seed run
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Latent dimensionality
    #[arg(long, default_value_t = 16)]
    latent: usize,
    /// Weight on the KL term of the loss
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Train on N images instead of 45k
    #[arg(long)]
    subset: Option<usize>,
    /// Report destination; sample images go to `<stem>-artifacts/`
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Classifier checkpoint to inspect
    #[arg(long)]
    checkpoint: PathBuf,
    /// Test images to run through the layer
    #[arg(long, default_value_t = 16)]
    samples: usize,
    #[arg(long, default_value = "conv1")]
    layer: String,
    /// Activation variance below which a map counts as blank
    #[arg(long, default_value_t = 1e-6)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Destination for the PNGs and summary.json
    #[arg(long, default_value = "features")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StepsArgs {
    /// Input extent
    #[arg(long)]
    n: u64,
    /// Filter stride
    #[arg(long)]
    s: u64,
    /// Field growth per step
    #[arg(long)]
    k: u64,
}

fn cmd_train<E: Element>(args: &TrainArgs) -> Result<(), Error> {
    let data_dir = args.data.resolve()?;
    let use_coords = matches!(args.coords, CoordMode::On);
    let (train_raw, test_raw) = load_mnist_raw::<E>(&data_dir)?;
    let (train_split, val, test) =
        classifier_splits(&train_raw, &test_raw, args.subset, args.test_subset, args.seed)?;
    let spec = if use_coords { NetworkSpec::with_coords() } else { NetworkSpec::baseline() };
    let mut net = build_classifier::<E>(spec, &RngState::new(args.seed))?;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        optimizer: args.optimizer.into(),
        seed: args.seed,
        use_coords,
        precision: Dtype2::from(E::DTYPE),
        patience: args.patience,
        checkpoint_path: Some(args.checkpoint.clone()),
    };
    let history = train(&mut net, &train_split, &val, &config)?;
    for h in &history {
        println!(
            "epoch {:>2}  train_loss {:.4}  val_acc {:.4}",
            h.epoch, h.train_loss, h.val.accuracy
        );
    }
    let m = evaluate(&net, &test, use_coords)?;
    println!("test accuracy {:.4}  error {:.4}  loss {:.4}", m.accuracy, m.error_rate, m.loss);
    println!("checkpoint: {}", args.checkpoint.display());
    Ok(())
}

fn cmd_eval<E: Element>(args: &EvalArgs) -> Result<(), Error> {
    let data_dir = args.data.resolve()?;
    let net = load_checkpoint::<E>(&args.checkpoint)?;
    let use_coords = net.spec.input_channels == 3;
    let (_, test_raw) = load_mnist_raw::<E>(&data_dir)?;
    let mut test = DatasetSplit::new("test", test_raw)?;
    if let Some(n) = args.test_subset {
        test = test.truncated(n, "test")?;
    }
    let m = evaluate(&net, &test, use_coords)?;
    println!(
        "{} variant on {} images: accuracy {:.4}  error {:.4}  loss {:.4}",
        if use_coords { "coordinate" } else { "baseline" },
        test.len(),
        m.accuracy,
        m.error_rate,
        m.loss
    );
    for (digit, acc) in m.per_class_accuracy.iter().enumerate() {
        println!(
            "  digit {digit}: {:.4} ({}/{})",
            acc, m.per_class_correct[digit], m.per_class_total[digit]
        );
    }
    Ok(())
}

fn cmd_dump<E: Element>(args: &DumpArgs) -> Result<(), Error> {
    if args.samples == 0 {
        return Err(Error::InvalidArgument("--samples must be at least 1".into()));
    }
    let data_dir = args.data.resolve()?;
    let net = load_checkpoint::<E>(&args.checkpoint)?;
    let (_, test_raw) = load_mnist_raw::<E>(&data_dir)?;
    let test = DatasetSplit::new("test", test_raw)?;
    let indices: Vec<usize> = (0..args.samples.min(test.len())).collect();
    let (batch, _) = test.gather(&indices)?;
    let batch = if net.spec.input_channels == 3 { append_coords_batch(&batch)? } else { batch };
    let dump = dump_feature_maps(&net, &batch, &args.layer, args.tau, &args.out_dir)?;
    let summary_path = args.out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&dump)
        .map_err(|e| Error::Data(format!("summary encode: {e}")))?;
    std::fs::write(&summary_path, json).map_err(|e| Error::io(&summary_path, e))?;
    println!(
        "{}: {} of {} maps blank at tau {:e}; PNGs + summary.json in {}",
        dump.layer,
        dump.blank_count,
        dump.filter_count,
        dump.tau,
        args.out_dir.display()
    );
    Ok(())
}

fn print_report_summary(report: &ExperimentReport, out: &Path) {
    if let Some(s) = &report.summary {
        println!(
            "{}: median baseline {:.4}, median coord {:.4}, median delta {:+.4}",
            report.experiment,
            s.median_baseline_accuracy,
            s.median_coord_accuracy,
            s.median_delta_accuracy
        );
    }
    if let Some(t) = &report.translation {
        if let Some(c) = t.matrix.iter().find(|e| e.dx == 0 && e.dy == 0) {
            println!(
                "{}: centered baseline {:.4} / coord {:.4}; {} shifted evaluations logged",
                report.experiment,
                c.baseline_accuracy,
                c.coord_accuracy,
                t.matrix.len()
            );
        }
    }
    if let Some(v) = &report.vae {
        for run in &v.runs {
            println!(
                "seed {}: loss {:.4} -> {:.4} ({})",
                run.seed,
                run.total_loss_per_epoch.first().copied().unwrap_or(f64::NAN),
                run.total_loss_per_epoch.last().copied().unwrap_or(f64::NAN),
                if run.loss_decreased { "decreased" } else { "did not decrease" }
            );
        }
        println!("{} samples exported with joint position matrices", v.samples.len());
    }
    println!("wrote {}", out.display());
}

fn cmd_exp(cmd: ExpCommand) -> Result<(), Error> {
    match cmd {
        ExpCommand::Mnist(a) => {
            let opts = a.options()?;
            let report = match a.precision {
                Precision::F32 => exp_mnist::<f32>(&opts)?,
                Precision::F64 => exp_mnist::<f64>(&opts)?,
            };
            print_report_summary(&report, &a.out);
        }
        ExpCommand::Resolution(a) => {
            let opts = a.options()?;
            let report = match a.precision {
                Precision::F32 => exp_resolution::<f32>(&opts)?,
                Precision::F64 => exp_resolution::<f64>(&opts)?,
            };
            print_report_summary(&report, &a.out);
        }
        ExpCommand::Translation(a) => {
            let opts = ExpOptions {
                data_dir: a.data.resolve()?,
                report_path: a.out.clone(),
                seeds: vec![a.seed],
                epochs: a.epochs,
                batch_size: a.batch_size,
                lr: a.lr,
                subset: a.subset,
                test_subset: a.test_subset,
                latent_dim: 16,
                beta: 1.0,
            };
            let report = match a.precision {
                Precision::F32 => exp_translation::<f32>(&opts)?,
                Precision::F64 => exp_translation::<f64>(&opts)?,
            };
            print_report_summary(&report, &a.out);
        }
        ExpCommand::Vae(a) => {
            let opts = ExpOptions {
                data_dir: a.data.resolve()?,
                report_path: a.out.clone(),
                seeds: match a.seed {
                    Some(s) => vec![s],
                    None => a.seeds.clone(),
                },
                epochs: a.epochs,
                batch_size: a.batch_size,
                lr: a.lr,
                subset: a.subset,
                test_subset: None,
                latent_dim: a.latent,
                beta: a.beta,
            };
            let report = match a.precision {
                Precision::F32 => exp_vae::<f32>(&opts)?,
                Precision::F64 => exp_vae::<f64>(&opts)?,
            };
            print_report_summary(&report, &a.out);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(a) => match a.precision {
            Precision::F32 => cmd_train::<f32>(&a),
            Precision::F64 => cmd_train::<f64>(&a),
        },
        Command::Eval(a) => match a.precision {
            Precision::F32 => cmd_eval::<f32>(&a),
            Precision::F64 => cmd_eval::<f64>(&a),
        },
        Command::Exp(e) => cmd_exp(e),
        Command::DumpFeatures(a) => match a.precision {
            Precision::F32 => cmd_dump::<f32>(&a),
            Precision::F64 => cmd_dump::<f64>(&a),
        },
        Command::StepsToGlobal(a) => {
            println!("{}", steps_to_global(a.n, a.s, a.k)?);
            Ok(())
        }
    }
}

/// 1 = bad arguments or configuration, 2 = dataset/checkpoint/file trouble,
/// 3 = numeric failure during training or evaluation.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::Shape { .. } => 1,
        Error::Data(_)
        | Error::Idx { .. }
        | Error::Io { .. }
        | Error::ChecksumMismatch
        | Error::CheckpointVersion { .. }
        | Error::CheckpointFormat(_) => 2,
        Error::NonFinite { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
