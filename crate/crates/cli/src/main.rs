use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use blockpred::config::RunConfig;
use blockpred::dataset::{build_meta_dataset, load_dataset, save_dataset, MetaDataset};
use blockpred::evaluation::{adaptation_sweep, InitKind, Initialization};
use blockpred::nn::{init_params, Checkpoint, Lineage, ModelParams};
use blockpred::training::{adapt, curve_csv, CurveRow, JointTrainer, MamlTrainer, CURVE_HEADER};
use clap::{Args, Parser, Subcommand};
use log::info;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Blockage prediction pipeline: generate traces, train predictors, adapt
/// them to new cells and evaluate prediction times.
#[derive(Debug, Parser)]
#[command(name = "blockpred", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a set of tasks and write the labelled dataset.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the joint-training baseline.
    JointTrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Meta-train an initialization with MAML.
    MetaTrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Fine-tune a checkpoint on the first slots of one device.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task index within the dataset.
        #[arg(long, default_value_t = 0)]
        task: usize,
        #[arg(long, default_value_t = 0)]
        device: usize,
        /// Length of the adaptation prefix.
        #[arg(long)]
        slots: usize,
    },
    /// Run the adaptation sweep and write prediction-time CSVs.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        maml: Option<PathBuf>,
        #[arg(long)]
        joint: Option<PathBuf>,
        /// Comma-separated subset of maml,joint,random,naive (default: from the config).
        #[arg(long, value_delimiter = ',')]
        inits: Option<Vec<InitKind>>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    deterministic: bool,
    /// Output file, or output directory for `eval`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<blockpred::Error>()) {
        Some(e) if e.is_numerical() => EXIT_NUMERICAL,
        Some(e) if e.is_io() => EXIT_IO,
        Some(_) => EXIT_CONFIG,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => EXIT_IO,
        None => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => generate(&common),
        Command::JointTrain { common, train } => joint_train(&common, &train),
        Command::MetaTrain { common, train } => meta_train(&common, &train),
        Command::Adapt {
            common,
            dataset,
            checkpoint,
            task,
            device,
            slots,
        } => adapt_one(&common, &dataset, &checkpoint, task, device, slots),
        Command::Eval {
            common,
            dataset,
            maml,
            joint,
            inits,
        } => eval(&common, &dataset, maml.as_deref(), joint.as_deref(), inits),
    }
}

/// Builds the resolved config from `base` (defaults when absent), the config
/// file and the command-line overrides, then sizes the thread pool.
fn resolve(common: &Common, base: Option<RunConfig>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => base.unwrap_or_default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    cfg.deterministic |= common.deterministic;
    let cfg = cfg.resolve()?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(cfg)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn load_data(path: &Path) -> Result<MetaDataset> {
    load_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint<f32>> {
    Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn embedded_config(ck: &Checkpoint<f32>) -> Option<RunConfig> {
    RunConfig::from_json(&ck.config).ok()
}

fn check_devices(cfg: &RunConfig, ds: &MetaDataset) -> Result<()> {
    if ds.devices() != cfg.scenario.devices {
        bail!(blockpred::Error::Dimension {
            what: "devices in dataset vs scenario.devices",
            expected: cfg.scenario.devices,
            actual: ds.devices(),
        });
    }
    Ok(())
}

fn generate(common: &Common) -> Result<()> {
    let cfg = resolve(common, None)?;
    let ds = build_meta_dataset(&cfg.generation())?;
    save_dataset(&ds, &common.out).with_context(|| format!("writing {}", common.out.display()))?;
    cfg.write(&with_suffix(&common.out, ".config.toml"))?;
    println!("tasks,devices,slots,positive_rate");
    println!("{},{},{},{}", ds.tasks.len(), ds.devices(), ds.slots(), ds.positive_rate());
    Ok(())
}

/// Writes the curve CSV; a resumed run appends to the rows already on disk.
fn write_curve_rows(path: &Path, rows: &[CurveRow], resumed: bool) -> Result<()> {
    let fresh = curve_csv(rows);
    let text = match std::fs::read_to_string(path) {
        Ok(old) if resumed && old.starts_with(CURVE_HEADER) => {
            let body = fresh.split_once('\n').map_or("", |(_, b)| b);
            format!("{old}{body}")
        }
        _ => fresh,
    };
    blockpred::container::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn save_outputs(ck: &Checkpoint<f32>, cfg: &RunConfig, out: &Path, rows: &[CurveRow], resumed: bool) -> Result<()> {
    ck.save(out).with_context(|| format!("writing {}", out.display()))?;
    write_curve_rows(&with_suffix(out, ".curve.csv"), rows, resumed)?;
    cfg.write(&with_suffix(out, ".config.toml"))?;
    Ok(())
}

fn lineage(cfg: &RunConfig, trainer: &str) -> Lineage {
    Lineage {
        master_seed: cfg.seed,
        init_seed: cfg.init_seed(),
        trainer: trainer.into(),
    }
}

fn meta_train(common: &Common, args: &TrainArgs) -> Result<()> {
    let resumed = args.resume.as_deref().map(load_checkpoint).transpose()?;
    let cfg = resolve(common, resumed.as_ref().and_then(embedded_config))?;
    let ds = load_data(&args.dataset)?;
    check_devices(&cfg, &ds)?;
    let is_resume = resumed.is_some();
    let mut trainer = match resumed {
        Some(ck) => MamlTrainer::resume(&ds, cfg.meta.clone(), ck)?,
        None => MamlTrainer::new(&ds, cfg.meta.clone(), init_params(cfg.dims(), cfg.init_seed())?)?,
    };
    let rows = trainer.run(|s| {
        if s.iteration % 50 == 0 {
            info!("iteration {} meta-train {:.5} meta-test {:.5}", s.iteration, s.meta_train_loss, s.meta_test_loss);
        }
    })?;
    info!("stopped after {} iterations", trainer.iteration());
    let ck = trainer.checkpoint(lineage(&cfg, "maml"), cfg.to_json());
    save_outputs(&ck, &cfg, &common.out, &rows, is_resume)
}

fn joint_train(common: &Common, args: &TrainArgs) -> Result<()> {
    let resumed = args.resume.as_deref().map(load_checkpoint).transpose()?;
    let cfg = resolve(common, resumed.as_ref().and_then(embedded_config))?;
    let ds = load_data(&args.dataset)?;
    check_devices(&cfg, &ds)?;
    let is_resume = resumed.is_some();
    let mut trainer = match resumed {
        Some(ck) => JointTrainer::resume(&ds, cfg.joint.clone(), ck)?,
        None => JointTrainer::new(&ds, cfg.joint.clone(), init_params(cfg.dims(), cfg.init_seed())?)?,
    };
    let rows = trainer.run(|i, loss| {
        if i % 50 == 0 {
            info!("step {i} loss {loss:.5}");
        }
    })?;
    let ck = trainer.checkpoint(lineage(&cfg, "joint"), cfg.to_json());
    save_outputs(&ck, &cfg, &common.out, &rows, is_resume)
}

fn adapt_one(common: &Common, dataset: &Path, checkpoint: &Path, task: usize, device: usize, slots: usize) -> Result<()> {
    let init = load_checkpoint(checkpoint)?;
    let cfg = resolve(common, embedded_config(&init))?;
    let ds = load_data(dataset)?;
    let Some(t) = ds.tasks.get(task) else {
        bail!(blockpred::Error::config(format!("task {task} out of range ({} tasks)", ds.tasks.len())));
    };
    if device >= t.devices() {
        bail!(blockpred::Error::config(format!("device {device} out of range ({} devices)", t.devices())));
    }
    let prefix = t.slice(0, slots)?;
    let phi = adapt(&init.params, (&prefix.device_sequence(device)).into(), &cfg.adapt)?;
    let mut ck = Checkpoint::new(phi, lineage(&cfg, "adapt"));
    ck.step = init.step;
    ck.config = cfg.to_json();
    ck.save(&common.out).with_context(|| format!("writing {}", common.out.display()))?;
    cfg.write(&with_suffix(&common.out, ".config.toml"))?;
    Ok(())
}

fn model_init(kind: InitKind, path: Option<&Path>) -> Result<Initialization<f32>> {
    let Some(path) = path else {
        bail!(blockpred::Error::config(format!("init `{kind}` needs --{kind} <checkpoint>")));
    };
    Ok(Initialization::model(kind, load_checkpoint(path)?.params))
}

fn eval(
    common: &Common,
    dataset: &Path,
    maml: Option<&Path>,
    joint: Option<&Path>,
    inits: Option<Vec<InitKind>>,
) -> Result<()> {
    let mut cfg = resolve(common, None)?;
    if let Some(inits) = inits {
        cfg.eval.inits = inits;
    }
    let ds = load_data(dataset)?;
    let mut list = Vec::new();
    for &kind in &cfg.eval.inits {
        list.push(match kind {
            InitKind::Maml => model_init(kind, maml)?,
            InitKind::Joint => model_init(kind, joint)?,
            InitKind::Random => {
                let p: ModelParams<f32> = init_params(cfg.dims_for(ds.devices()), cfg.random_init_seed())?;
                Initialization::model(kind, p)
            }
            InitKind::Naive => Initialization::naive(),
        });
    }
    let report = adaptation_sweep(&list, &ds.tasks, &cfg.adapt, &cfg.eval)?;
    report
        .write_csvs(&common.out)
        .with_context(|| format!("writing reports to {}", common.out.display()))?;
    cfg.write(&common.out.join("config.toml"))?;
    print!("{}", report.medians_csv());
    Ok(())
}
