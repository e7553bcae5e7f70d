//! Command-line front end. `run_cli` never panics on bad input; it reports
//! on stderr and returns the process exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::compress::{compression_report, CompressedModel, CONTAINER_MAGIC};
use crate::error::{Error, Result};
use crate::io::{load_mnist_idx, load_model, save_model, CompressionMethod, DatasetSplit, Mode, RunConfig, MODEL_MAGIC};
use crate::net::Network;
use crate::pipeline::{self, PretrainedModel, SWEEP_HEADER};
use crate::trainer::evaluate_accuracy;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bvnc", version, about = "Train sparse variational networks and compress them")]
struct Cli {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the MNIST IDX files.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct InitArgs {
    /// Pretrained model to start from; pretrains from scratch when omitted.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Where to write the trained model.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalData {
    /// Image IDX file to score against instead of the configured test set.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    /// Label IDX file matching `--images`.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// L2-regularized pretraining.
    Pretrain {
        /// Where to write the pretrained model.
        #[arg(long)]
        out: PathBuf,
    },
    /// Variational dropout alone, for the warm-up plus joint epoch budget.
    TrainVd(InitArgs),
    /// Variational dropout warm-up followed by joint mixture-prior training.
    TrainVdsws(InitArgs),
    /// Quantize, prune and pack a trained model into a container.
    Compress {
        /// Trained model file (.bvnm).
        #[arg(long)]
        model: PathBuf,
        /// Where to write the container (.bvnc).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Option<CompressionMethod>,
        /// Bit width of the relative column offsets.
        #[arg(long)]
        offset_bits: Option<u8>,
        /// Dropout-rate threshold for the baseline method.
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write the report as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Skip scoring the decoded container on the test set.
        #[arg(long)]
        skip_eval: bool,
    },
    /// Print test accuracy of a model file or a compressed container.
    Evaluate {
        /// Model file or container; the format is detected from its magic bytes.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: EvalData,
    },
    /// Accuracy and compression for several mixture-term scales, as CSV.
    Sweep {
        /// Pretrained model to start from; pretrains from scratch when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated list overriding the configured values.
        #[arg(long, value_delimiter = ',')]
        tau2: Option<Vec<f64>>,
    },
    /// Bit accounting of a container as aligned text followed by JSON.
    Report {
        #[arg(long)]
        container: PathBuf,
        /// Leave the accuracy field empty instead of scoring the test set.
        #[arg(long)]
        skip_eval: bool,
    },
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Pretrain { .. } => Mode::Pretrain,
            Command::TrainVd(_) => Mode::TrainVd,
            Command::TrainVdsws(_) => Mode::TrainVdsws,
            Command::Compress { .. } => Mode::Compress,
            Command::Evaluate { .. } => Mode::Evaluate,
            Command::Sweep { .. } => Mode::Sweep,
            Command::Report { .. } => Mode::Report,
        }
    }
}

/// Parses `argv` (program name first) and runs the selected subcommand.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.mode = Some(cli.command.mode());
    if let Some(d) = &cli.data_dir {
        cfg.data.dir = d.clone();
    }
    if let Some(s) = cli.seed {
        cfg.schedule.seed = s;
    }
    if let Command::Compress {
        method,
        offset_bits,
        threshold,
        ..
    } = &cli.command
    {
        if let Some(m) = method {
            cfg.compression.method = *m;
        }
        if let Some(b) = offset_bits {
            cfg.compression.offset_bits = *b;
        }
        if let Some(t) = threshold {
            cfg.compression.threshold = *t;
        }
    }
    if let Command::Sweep { tau2: Some(v), .. } = &cli.command {
        cfg.sweep.tau2_values = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_train(cfg: &RunConfig) -> Result<DatasetSplit> {
    let d = &cfg.data;
    let split = load_mnist_idx(d.dir.join(&d.train_images), d.dir.join(&d.train_labels))?;
    Ok(match d.train_limit {
        Some(n) => split.take(n),
        None => split,
    })
}

fn load_test(cfg: &RunConfig) -> Result<DatasetSplit> {
    let d = &cfg.data;
    let split = load_mnist_idx(d.dir.join(&d.test_images), d.dir.join(&d.test_labels))?;
    Ok(match d.test_limit {
        Some(n) => split.take(n),
        None => split,
    })
}

fn pretrained(cfg: &RunConfig, init: Option<&Path>, train: &DatasetSplit) -> Result<PretrainedModel> {
    match init {
        Some(p) => {
            let (net, _) = load_model(p)?;
            if net.dims() != cfg.architecture {
                log::warn!("model architecture {:?} differs from the configured {:?}", net.dims(), cfg.architecture);
            }
            let weights = net.flat_theta();
            Ok(PretrainedModel { net, weights })
        }
        None => pipeline::pretrain(&cfg.architecture, train, &cfg.schedule),
    }
}

enum Loaded {
    Model(Network),
    Container(CompressedModel),
}

fn load_any(path: &Path) -> Result<Loaded> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    if bytes.starts_with(CONTAINER_MAGIC) {
        Ok(Loaded::Container(CompressedModel::from_bytes(&bytes)?))
    } else if bytes.starts_with(MODEL_MAGIC) {
        Ok(Loaded::Model(crate::io::model_from_bytes(&bytes)?.0))
    } else {
        Err(Error::Corrupt(format!("{}: neither a model file nor a container", path.display())))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    let mut stdout = std::io::stdout().lock();
    match &cli.command {
        Command::Pretrain { out } => {
            let train = load_train(&cfg)?;
            let pre = pipeline::pretrain(&cfg.architecture, &train, &cfg.schedule)?;
            save_model(out, &pre.net, None)?;
        }
        Command::TrainVd(args) => {
            let train = load_train(&cfg)?;
            let pre = pretrained(&cfg, args.init.as_deref(), &train)?;
            let net = pipeline::train_vd_only(&pre, &train, &cfg.schedule)?;
            save_model(&args.out, &net, None)?;
        }
        Command::TrainVdsws(args) => {
            let train = load_train(&cfg)?;
            let pre = pretrained(&cfg, args.init.as_deref(), &train)?;
            let (net, prior) = pipeline::train_vdsws(&pre, &train, &cfg.schedule)?;
            save_model(&args.out, &net, Some(&prior))?;
        }
        Command::Compress {
            model,
            out,
            report,
            skip_eval,
            ..
        } => {
            let (net, prior) = load_model(model)?;
            let test = if *skip_eval { None } else { Some(load_test(&cfg)?) };
            let outcome = pipeline::compress_model(&net, prior.as_ref(), &cfg.compression, test.as_ref())?;
            std::fs::write(out, &outcome.bytes).map_err(|e| Error::file(out, e))?;
            if let Some(r) = report {
                write_text(r, &outcome.report.to_json()?)?;
            }
            write!(stdout, "{}", outcome.report.to_text())?;
        }
        Command::Evaluate { model, data } => {
            let test = match (&data.images, &data.labels) {
                (Some(i), Some(l)) => load_mnist_idx(i, l)?,
                _ => load_test(&cfg)?,
            };
            let acc = match load_any(model)? {
                Loaded::Model(net) => evaluate_accuracy(&net, &test)?,
                Loaded::Container(c) => evaluate_accuracy(&c.decode()?, &test)?,
            };
            writeln!(stdout, "accuracy {acc:.4}")?;
        }
        Command::Sweep { init, out, .. } => {
            let train = load_train(&cfg)?;
            let test = load_test(&cfg)?;
            let pre = pretrained(&cfg, init.as_deref(), &train)?;
            let rows = pipeline::sweep_tau2(
                &pre,
                &train,
                &test,
                &cfg.schedule,
                &cfg.compression,
                &cfg.sweep.tau2_values,
            )?;
            let mut csv = String::from(SWEEP_HEADER);
            csv.push('\n');
            for r in &rows {
                csv += &r.to_csv();
                csv.push('\n');
            }
            match out {
                Some(p) => write_text(p, &csv)?,
                None => write!(stdout, "{csv}")?,
            }
        }
        Command::Report { container, skip_eval } => {
            let c = CompressedModel::load(container)?;
            let accuracy = if *skip_eval {
                None
            } else {
                Some(evaluate_accuracy(&c.decode()?, &load_test(&cfg)?)?)
            };
            let report = compression_report(&cfg.architecture, &c, accuracy)?;
            write!(stdout, "{}", report.to_text())?;
            writeln!(stdout, "{}", report.to_json()?)?;
        }
    }
    Ok(())
}
