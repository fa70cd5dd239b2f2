use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ecosampler::config::{load_config, PipelineConfig};
use ecosampler::eval::{
    folds, io as eval_io, probe::ProbeConfig, run_protocol, Loss, Method, ProtocolConfig,
    TaskKind, TaskSpec,
};
use ecosampler::manifest::{read_manifest, summarize, FORMAT_VERSION};
use ecosampler::{pipeline, Error};

const LONG_VERSION: &str =
    concat!(env!("CARGO_PKG_VERSION"), "\nmanifest format version: 1");
// keep the literal above in sync with the manifest schema
const _: () = assert!(FORMAT_VERSION == 1);

#[derive(Parser)]
#[command(name = "ecosampler", version, long_version = LONG_VERSION)]
#[command(about = "Phenology-aware satellite dataset construction and embedding evaluation")]
struct Cli {
    /// pipeline config (TOML); required by the pipeline stages
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// override the worker count
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// override the output directory
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the equal-area land grid (writes points.jsonl)
    Grid,
    /// Derive per-point season transition dates (writes pheno.jsonl)
    Pheno,
    /// Select the least-clouded scene per location-season (writes selections.jsonl)
    Select(SelectArgs),
    /// Compute sampling weights and assemble the manifest
    Weights(WeightsArgs),
    /// Run grid, pheno, select, and weights in order
    Run(RunArgs),
    /// Validate a manifest file and print a summary
    ManifestValidate {
        path: PathBuf,
    },
    /// Evaluate frozen embeddings with the fold protocol
    Eval(EvalArgs),
}

#[derive(Args)]
struct SelectArgs {
    /// catalog path or http(s) endpoint (overrides config)
    #[arg(long)]
    catalog: Option<String>,
    /// strict cloud-fraction cutoff in (0, 1]
    #[arg(long)]
    max_cloud: Option<f64>,
    /// acquisition years, inclusive (e.g. 2017,2024)
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["START", "END"])]
    years: Option<Vec<i32>>,
    /// minimum retained scenes per location before exclusion
    #[arg(long)]
    min_images: Option<usize>,
}

#[derive(Args)]
struct WeightsArgs {
    /// seasonal NDVI below this at every season divides the weight
    #[arg(long)]
    nonveg_threshold: Option<f64>,
    /// weight multiplier for mountain locations
    #[arg(long)]
    mountain_multiplier: Option<f64>,
    /// embed a creation timestamp in the manifest header (off by default so
    /// outputs stay byte-deterministic)
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    select: SelectArgs,
    #[command(flatten)]
    weights: WeightsArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Classification,
    Multilabel,
    Regression,
    Distribution,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Knn,
    Probe,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    CrossEntropy,
    MultilabelSoftMargin,
    PresenceWeightedBce,
    Mse,
    Kl,
}

#[derive(Args)]
struct EvalArgs {
    /// embedding stem (<stem>.json + <stem>.bin) or .csv
    #[arg(long)]
    embeddings: PathBuf,
    /// labels as JSON-lines {id, y}
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    /// classes, labels, targets, or bins depending on the task
    #[arg(long)]
    outputs: usize,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// loss override for linear probing
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    /// positive-class weight for presence-weighted-bce
    #[arg(long, default_value_t = 12.0)]
    pos_weight: f64,
    #[arg(long, default_value_t = folds::DEFAULT_K_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = folds::DEFAULT_TRAIN_FRAC)]
    train_frac: f64,
    #[arg(long, default_value_t = folds::DEFAULT_VAL_FRAC)]
    val_frac: f64,
    /// candidate neighborhood sizes for the k-NN grid search
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    /// softmax temperature for k-NN vote weighting
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// write aggregated metrics as JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn pipeline_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for pipeline stages".into()))?;
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.paths.output_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_select_args(cfg: &mut PipelineConfig, args: &SelectArgs) -> Result<(), Error> {
    if let Some(cat) = &args.catalog {
        cfg.paths.catalog = Some(cat.clone());
    }
    if let Some(mc) = args.max_cloud {
        cfg.selection.max_cloud = mc;
    }
    if let Some(years) = &args.years {
        cfg.selection.year_start = years[0];
        cfg.selection.year_end = years[1];
    }
    if let Some(mi) = args.min_images {
        cfg.selection.min_images = mi;
    }
    cfg.selection.validate()
}

fn apply_weights_args(cfg: &mut PipelineConfig, args: &WeightsArgs) -> Result<(), Error> {
    if let Some(t) = args.nonveg_threshold {
        cfg.weights.nonveg_threshold = t;
    }
    if let Some(m) = args.mountain_multiplier {
        cfg.weights.mountain_multiplier = m;
    }
    cfg.weights.validate()
}

fn run_eval(args: &EvalArgs) -> Result<(), Error> {
    let kind = match args.task {
        TaskArg::Classification => TaskKind::Classification,
        TaskArg::Multilabel => TaskKind::Multilabel,
        TaskArg::Regression => TaskKind::Regression,
        TaskArg::Distribution => TaskKind::Distribution,
    };
    let mut task = TaskSpec::new(kind, args.outputs);
    if let Some(loss) = args.loss {
        task.loss = match loss {
            LossArg::CrossEntropy => Loss::CrossEntropy,
            LossArg::MultilabelSoftMargin => Loss::MultilabelSoftMargin,
            LossArg::PresenceWeightedBce => {
                Loss::PresenceWeightedBce { pos_weight: args.pos_weight }
            }
            LossArg::Mse => Loss::Mse,
            LossArg::Kl => Loss::Kl,
        };
    }
    task.validate()?;
    let embeddings = eval_io::read_embeddings(&args.embeddings)?;
    let labels = eval_io::read_labels(&args.labels, kind)?;
    let plan =
        folds::make_folds(embeddings.n, args.folds, args.train_frac, args.val_frac, args.seed)?;
    let mut cfg = ProtocolConfig::default();
    if let Some(grid) = &args.k_grid {
        cfg.knn.k_grid = grid.clone();
    }
    if let Some(t) = args.temperature {
        cfg.knn.temperature = t;
    }
    let probe_defaults = ProbeConfig::default();
    cfg.probe = ProbeConfig {
        learning_rate: args.lr.unwrap_or(probe_defaults.learning_rate),
        batch_size: args.batch_size.unwrap_or(probe_defaults.batch_size),
        max_epochs: args.max_epochs.unwrap_or(probe_defaults.max_epochs),
        patience: args.patience.unwrap_or(probe_defaults.patience),
        weight_decay: args.weight_decay.unwrap_or(probe_defaults.weight_decay),
        seed: args.seed,
    };
    let method = match args.method {
        MethodArg::Knn => Method::Knn,
        MethodArg::Probe => Method::Probe,
    };
    let metrics = run_protocol(&embeddings, &labels, &task, &plan, method, &cfg)?;
    let rendered =
        serde_json::to_string_pretty(&metrics).map_err(|e| Error::Invalid(e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, rendered).map_err(|e| Error::io(path, e))?,
        None => println!("{rendered}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.cmd {
        Cmd::Grid => {
            let cfg = pipeline_config(cli)?;
            let out = pipeline::run_grid(&cfg)?;
            eprintln!("wrote {}", out.display());
        }
        Cmd::Pheno => {
            let cfg = pipeline_config(cli)?;
            let out = pipeline::run_pheno(&cfg)?;
            eprintln!("wrote {}", out.display());
        }
        Cmd::Select(args) => {
            let mut cfg = pipeline_config(cli)?;
            apply_select_args(&mut cfg, args)?;
            let out = pipeline::run_select(&cfg)?;
            eprintln!("wrote {}", out.display());
        }
        Cmd::Weights(args) => {
            let mut cfg = pipeline_config(cli)?;
            apply_weights_args(&mut cfg, args)?;
            let out = pipeline::run_weights(&cfg, args.timestamp.clone())?;
            eprintln!("wrote {}", out.display());
            let manifest = pipeline::manifest_path(&cfg);
            if manifest.exists() {
                eprintln!("wrote {}", manifest.display());
            }
        }
        Cmd::Run(args) => {
            let mut cfg = pipeline_config(cli)?;
            apply_select_args(&mut cfg, &args.select)?;
            apply_weights_args(&mut cfg, &args.weights)?;
            pipeline::run_grid(&cfg)?;
            pipeline::run_pheno(&cfg)?;
            pipeline::run_select(&cfg)?;
            pipeline::run_weights(&cfg, args.weights.timestamp.clone())?;
            eprintln!("wrote {}", pipeline::manifest_path(&cfg).display());
        }
        Cmd::ManifestValidate { path } => {
            let manifest = read_manifest(path)?;
            manifest.validate()?;
            if manifest.header.format_version != FORMAT_VERSION {
                return Err(Error::Invalid(format!(
                    "unsupported manifest format version {}",
                    manifest.header.format_version
                )));
            }
            let summary = summarize(&manifest);
            let rendered = serde_json::to_string_pretty(&summary)
                .map_err(|e| Error::Invalid(e.to_string()))?;
            println!("{rendered}");
        }
        Cmd::Eval(args) => run_eval(args)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
