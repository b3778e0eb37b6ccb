//! `mspcg`: extraction, synthetic data, training, evaluation, generation and
//! the HTTP service from one binary.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mspcg_core::autodiff::primitive_gradient_suite;
use mspcg_core::baselines::{Baseline, Generator, DEFAULT_KAPPA};
use mspcg_core::extract::{extract_msg, ExtractParams, KRange, MixMode};
use mspcg_core::geom::{load_cloud, save_cloud};
use mspcg_core::graph::{apply_edits, load_graph, save_graph, GraphEdit};
use mspcg_core::model::{load_checkpoint, save_checkpoint, GradCheckProblem, ModelConfig};
use mspcg_core::par::Parallelism;
use mspcg_core::train::{
    build_dataset, evaluate, loss_history_csv, read_dataset, train_with, write_dataset,
    DatasetSpec, EvalOptions, FamilyCount, GraphSource, ShapeFamily, TrainConfig,
};

/// Largest relative finite-difference error `gradcheck` accepts.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "mspcg",
    version,
    about = "Multiscale structure graphs and similarity-invariant point cloud generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic shape corpus and write it with a manifest
    Synth(SynthArgs),
    /// Extract an MSG from a point cloud (.xyz)
    Extract(ExtractArgs),
    /// Generate a point cloud from an MSG
    Generate(GenerateArgs),
    /// Train the generator on a dataset manifest
    Train(TrainArgs),
    /// Evaluate a checkpoint or baseline on a test manifest
    Eval(EvalArgs),
    /// Apply a JSON list of graph edits to an MSG
    Edit(EditArgs),
    /// Run the finite-difference gradient checks
    Gradcheck(GradcheckArgs),
    /// Start the HTTP service
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Shapes per family
    #[arg(long, default_value_t = 29)]
    per_family: usize,
    /// Comma-separated families (default: all)
    #[arg(long, value_delimiter = ',')]
    families: Vec<ShapeFamily>,
    #[arg(long, default_value_t = 512)]
    points: usize,
    /// MSGs per shape
    #[arg(long, default_value_t = 5)]
    msgs: usize,
    /// Build a test set: one plain k-means MSG per shape with K drawn from
    /// this range (`lo,hi`) instead of extracted MSGs
    #[arg(long)]
    eval_k: Option<KRange>,
    #[command(flatten)]
    extract: ExtractFlags,
}

#[derive(Args)]
struct ExtractFlags {
    /// Coarse k-means vertex range, `lo,hi`
    #[arg(long, default_value = "4,16")]
    coarse_k: KRange,
    /// Fine k-means vertex range, `lo,hi`
    #[arg(long, default_value = "64,128")]
    fine_k: KRange,
    /// Number of fine centroids kept, `lo,hi`
    #[arg(long, default_value = "12,32")]
    pick: KRange,
    /// Edge threshold as a multiple of the mean nearest-vertex distance
    #[arg(long, default_value_t = 1.8)]
    edge_tau: f64,
    /// as_written or union
    #[arg(long, default_value = "as_written")]
    mix_mode: MixMode,
    /// Join connected components with minimum-spanning edges
    #[arg(long)]
    connect: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ExtractFlags {
    fn params(&self) -> ExtractParams {
        ExtractParams {
            coarse_k: self.coarse_k,
            fine_k: self.fine_k,
            pick: self.pick,
            edge_tau: self.edge_tau,
            mix_mode: self.mix_mode,
            connect_components: self.connect,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Input cloud, one `x y z` per line
    #[arg(long = "in")]
    input: PathBuf,
    /// Output MSG JSON (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    extract: ExtractFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Interp,
    Gaussian,
}

/// A checkpoint or one of the baselines.
#[derive(Args)]
struct ModelChoice {
    /// Trained checkpoint JSON
    #[arg(long, conflicts_with = "method")]
    checkpoint: Option<PathBuf>,
    /// Baseline generator
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Standard deviation of the gaussian baseline in units of the vertex scale factor
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
}

impl ModelChoice {
    fn load(&self) -> Result<(String, Box<dyn Generator>)> {
        match (&self.checkpoint, self.method) {
            (Some(path), _) => {
                let ck =
                    load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
                Ok((path.display().to_string(), Box::new(ck.weights)))
            }
            (None, Some(Method::Interp)) => {
                Ok(("interp".into(), Box::new(Baseline::Interpolation)))
            }
            (None, Some(Method::Gaussian)) => {
                if !(self.kappa.is_finite() && self.kappa >= 0.0) {
                    bail!("--kappa must be a non-negative number");
                }
                Ok((
                    format!("gaussian(kappa={})", self.kappa),
                    Box::new(Baseline::Gaussian { kappa: self.kappa }),
                ))
            }
            (None, None) => bail!("pass --checkpoint <file> or --method interp|gaussian"),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    model: ModelChoice,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output cloud (.xyz)
    #[arg(long)]
    out: PathBuf,
    /// Also write the source vertex id of every point, one per line
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset manifest
    #[arg(long)]
    manifest: PathBuf,
    /// TrainConfig JSON; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Feature channels of a fresh model
    #[arg(long)]
    channels: Option<usize>,
    /// Checkpoint to write
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV (`epoch,mean_wCD`)
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Run samples of a batch on one thread
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Test dataset manifest
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    model: ModelChoice,
    /// Rotate every test pair randomly
    #[arg(long)]
    rotate: bool,
    /// Scale every test pair randomly in [0.8, 1.25]
    #[arg(long)]
    scale: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    graph: PathBuf,
    /// JSON array of edits, e.g. `[{"kind":"remove_vertex","id":3}]`
    #[arg(long)]
    edits: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Seed of the full-model check problem
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = mspcg_service::DEFAULT_PORT)]
    port: u16,
    /// Bind address
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::Ipv4Addr,
    /// Checkpoint to serve under its file stem (repeatable)
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    /// Allowed CORS origin (repeatable; replaces the local defaults)
    #[arg(long)]
    cors_origin: Vec<String>,
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let families = if a.families.is_empty() {
        ShapeFamily::ALL.to_vec()
    } else {
        a.families.clone()
    };
    let graphs = match a.eval_k {
        Some(k) => GraphSource::Kmeans {
            k,
            edge_tau: a.extract.edge_tau,
        },
        None => GraphSource::Extract {
            params: a.extract.params(),
        },
    };
    let spec = DatasetSpec {
        counts: families
            .iter()
            .map(|&family| FamilyCount {
                family,
                count: a.per_family,
            })
            .collect(),
        points_per_shape: a.points,
        msgs_per_shape: if a.eval_k.is_some() { 1 } else { a.msgs },
        graphs,
        seed: a.extract.seed,
    };
    let ds = build_dataset(&spec)?;
    let path = write_dataset(&ds, &a.out)?;
    log::info!("{} shapes, {} MSGs", ds.shapes.len(), ds.num_pairs());
    println!("{}", path.display());
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let cloud = load_cloud(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let g = extract_msg(&cloud, &a.extract.params())?;
    match &a.out {
        Some(p) => save_graph(&g, p)?,
        None => println!("{}", mspcg_core::graph::graph_to_json(&g)),
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let g = load_graph(&a.graph).with_context(|| format!("reading {}", a.graph.display()))?;
    let (_, generator) = a.model.load()?;
    let cloud = generator.generate(&g, a.seed)?;
    save_cloud(&cloud, &a.out)?;
    if let (Some(path), Some(labels)) = (&a.labels, &cloud.source_vertex) {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch {
        cfg.batch = v;
    }
    if let Some(v) = a.lr {
        cfg.adam.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(c) = a.channels {
        cfg.model = ModelConfig {
            channels: c,
            ..cfg.model
        };
    }
    let ds =
        read_dataset(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let mode = if a.sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    };
    let ck = train_with(&ds, &cfg, cfg.initial_weights()?, mode, |e| {
        log::info!(
            "epoch {} mean wCD {:.6} ({} steps)",
            e.epoch,
            e.mean_loss,
            e.steps
        )
    })?;
    save_checkpoint(&ck, &a.out)?;
    if let Some(p) = &a.loss_csv {
        std::fs::write(p, loss_history_csv(&ck.meta.loss_history))?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (name, generator) = a.model.load()?;
    let ds =
        read_dataset(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let opts = EvalOptions {
        rotate: a.rotate,
        scale: a.scale,
        seed: a.seed,
    };
    let report = evaluate(generator.as_ref(), &name, &ds, &opts)?;
    log::info!("mean CD x1e4 = {:.4}", report.mean_cd_x1e4);
    write_or_print(a.out.as_deref(), &report.to_json())
}

fn edit(a: EditArgs) -> Result<()> {
    let g = load_graph(&a.graph).with_context(|| format!("reading {}", a.graph.display()))?;
    let text = std::fs::read_to_string(&a.edits)?;
    let edits: Vec<GraphEdit> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.edits.display()))?;
    let out = apply_edits(&g, &edits)?;
    save_graph(&out, &a.out)?;
    Ok(())
}

/// Returns whether every check passed.
fn gradcheck(a: GradcheckArgs) -> Result<bool> {
    let mut worst = 0.0f64;
    for (name, err) in primitive_gradient_suite()? {
        println!("{name:<20} {err:.3e}");
        worst = worst.max(err);
    }
    let problem = GradCheckProblem::new(a.seed)?;
    let report = problem.report(a.step)?;
    println!(
        "{:<20} {:.3e}  ({} coordinates, smoothness margin {:.2e})",
        "full model",
        report.max_rel_error,
        report.coordinates,
        problem.smoothness_margin()?
    );
    worst = worst.max(report.max_rel_error);
    println!("max relative error {worst:.3e}");
    Ok(worst <= GRADCHECK_TOLERANCE)
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut config = mspcg_service::ServiceConfig {
        port: a.port,
        host: a.host.octets(),
        checkpoints: a.checkpoint,
        ..Default::default()
    };
    if !a.cors_origin.is_empty() {
        config.cors_origins = a.cors_origin;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(mspcg_service::serve(config))?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth(a) => synth(a)?,
        Command::Extract(a) => extract(a)?,
        Command::Generate(a) => generate(a)?,
        Command::Train(a) => train(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Edit(a) => edit(a)?,
        Command::Gradcheck(a) => {
            if !gradcheck(a)? {
                eprintln!("error: gradient check exceeds {GRADCHECK_TOLERANCE:e}");
                return Ok(ExitCode::from(1));
            }
        }
        Command::Serve(a) => serve(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // help and version print and exit 0; usage errors exit 2
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
