use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use pltr::analysis::{
    norm_report, read_trace_csv, write_norms_csv, write_separation_csv, write_trace_csv,
};
use pltr::checkpoint::{self, Checkpoint};
use pltr::dataset::{encode_binary, load_features, Format, LoadOptions};
use pltr::gradcheck::{run_gradcheck, supported_combinations};
use pltr::{
    compute_centroids, compute_class_stats, evaluate, init_ncm, synth_longtailed, train,
    train_softmax, DistanceKind, FeatureDataset, SamplerKind, SchemeKind, SplitThresholds,
    SynthSpec, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "pltr",
    version,
    about = "Prototype classifiers for long-tailed feature datasets"
)]
struct Cli {
    /// Worker threads for data-parallel evaluation and gradient checks.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a long-tailed Gaussian train set and a balanced test set.
    Synth(SynthArgs),
    /// Fit a prototype, nearest-class-mean or softmax classifier.
    Train(TrainArgs),
    /// Many/Med/Few/All accuracy of a checkpoint as JSON.
    Eval(EvalArgs),
    /// Compare analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Norm balance and prototype separation reports.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Map the distinct labels onto 0..K in ascending order.
    #[arg(long)]
    remap: bool,
    /// Skip one header line in CSV input.
    #[arg(long)]
    header: bool,
}

impl DataArgs {
    fn load(&self, path: &Path) -> Result<FeatureDataset> {
        let opts = LoadOptions {
            remap: self.remap,
            header: self.header,
        };
        load_features(path, Format::from_path(path), opts)
            .with_context(|| format!("loading {}", path.display()))
    }
}

fn parse_imbalance(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 1.0 {
        Ok(v)
    } else {
        Err(format!("imbalance ratio must be >= 1, got {s}"))
    }
}

fn parse_thresholds(s: &str) -> std::result::Result<SplitThresholds, String> {
    let (many, few) = s.split_once(',').ok_or("expected MANY_MIN,FEW_MAX")?;
    let many = many.trim().parse().map_err(|e| format!("{e}"))?;
    let few = few.trim().parse().map_err(|e| format!("{e}"))?;
    SplitThresholds::new(many, few).map_err(|e| e.to_string())
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 500)]
    nmax: usize,
    /// Ratio between the largest and smallest class, at least 1.
    #[arg(long, default_value_t = 100.0, value_parser = parse_imbalance)]
    imbalance: f64,
    #[arg(long, default_value_t = 1.0)]
    mean_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    std: f64,
    #[arg(long, default_value_t = 100)]
    test_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives train.bin and test.bin.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Pc,
    Ncm,
    Softmax,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = ModelKind::Pc)]
    model: ModelKind,
    /// euclidean, sqeuclidean or cosine.
    #[arg(long, default_value = "euclidean")]
    distance: DistanceKind,
    /// none, channel, class or dense.
    #[arg(long, default_value = "none")]
    temps: SchemeKind,
    #[arg(long, default_value_t = TrainConfig::default().tau)]
    tau: f64,
    #[arg(long, default_value_t = TrainConfig::default().lr_prototypes)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().lr_temps)]
    lr_temps: f64,
    #[arg(long, default_value_t = TrainConfig::default().momentum)]
    momentum: f64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// class or instance; defaults to class for pc and instance for softmax.
    #[arg(long)]
    sampler: Option<SamplerKind>,
    /// L2 penalty on softmax weights.
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1)]
    trace_every: usize,
    /// Many/Few thresholds used as Head/Tail in the trace.
    #[arg(long, default_value = "100,20", value_parser = parse_thresholds)]
    thresholds: SplitThresholds,
    #[arg(long)]
    out: PathBuf,
    /// Trace CSV (pc only).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Training set; its class counts define the splits.
    #[arg(long)]
    train: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "100,20", value_parser = parse_thresholds)]
    thresholds: SplitThresholds,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Only check this distance.
    #[arg(long)]
    kind: Option<DistanceKind>,
    /// Only check this temperature scheme.
    #[arg(long)]
    temps: Option<SchemeKind>,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    h: f64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Training set providing class counts.
    #[arg(long)]
    train: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out_dir: PathBuf,
    /// Trace CSV from `train`; adds separation.csv.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(bytes)?;
    out.flush()?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        num_classes: args.classes,
        dim: args.dim,
        n_max: args.nmax,
        imbalance_ratio: args.imbalance,
        class_mean_scale: args.mean_scale,
        within_class_std: args.std,
        test_per_class: args.test_per_class,
        seed: args.seed,
    };
    let (train_set, test_set) = synth_longtailed(&spec)?;
    let train_path = args.out_dir.join("train.bin");
    let test_path = args.out_dir.join("test.bin");
    write_bytes(&train_path, &encode_binary(&train_set)?)?;
    write_bytes(&test_path, &encode_binary(&test_set)?)?;
    let stats = compute_class_stats(&train_set);
    println!(
        "{}",
        json!({
            "train": train_path,
            "test": test_path,
            "class_sizes": stats.counts,
            "test_size": test_set.len(),
        })
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let ds = args.data.load(&args.train)?;
    let cfg = TrainConfig {
        lr_prototypes: args.lr,
        lr_temps: args.lr_temps,
        momentum: args.momentum,
        tau: args.tau,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        trace_every: args.trace_every,
        sampler: args.sampler.unwrap_or(match args.model {
            ModelKind::Softmax => SamplerKind::InstanceBalanced,
            _ => SamplerKind::ClassBalanced,
        }),
        thresholds: args.thresholds,
        weight_decay: args.weight_decay,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    if args.trace.is_some() && args.model != ModelKind::Pc {
        bail!("--trace is only recorded for --model pc");
    }
    if args.model == ModelKind::Softmax
        && (args.distance != DistanceKind::Euclidean || args.temps != SchemeKind::None)
    {
        bail!("--distance and --temps do not apply to --model softmax");
    }
    info!(
        "training {} samples, {} classes, dim {}",
        ds.len(),
        ds.num_classes(),
        ds.dim()
    );

    let ckpt = match args.model {
        ModelKind::Ncm => {
            ds.require_nonempty_classes()?;
            Checkpoint::Prototype(init_ncm(
                &compute_centroids(&ds)?,
                args.distance,
                args.temps,
            )?)
        }
        ModelKind::Pc => {
            let centroids = compute_centroids(&ds)?;
            let (model, trace) = train(&ds, &centroids, &cfg, args.temps, args.distance)?;
            if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
                info!(
                    "loss {} -> {} over {} iterations",
                    first.loss, last.loss, last.iteration
                );
            }
            if let Some(path) = &args.trace {
                let mut out = create(path)?;
                write_trace_csv(&trace, &mut out)?;
                out.flush()?;
            }
            Checkpoint::Prototype(model)
        }
        ModelKind::Softmax => Checkpoint::Linear(train_softmax(&ds, &cfg, cfg.sampler)?),
    };
    write_bytes(&args.out, &checkpoint::encode(&ckpt)?)?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ckpt = checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let train_set = args.data.load(&args.train)?;
    let test_set = args.data.load(&args.test)?;
    if train_set.num_classes() != ckpt.num_classes() {
        bail!(
            "checkpoint has {} classes but the training set has {}",
            ckpt.num_classes(),
            train_set.num_classes()
        );
    }
    if test_set.num_classes() > ckpt.num_classes() {
        bail!(
            "test set has {} classes but the checkpoint has {}",
            test_set.num_classes(),
            ckpt.num_classes()
        );
    }
    let stats = compute_class_stats(&train_set);
    let report = evaluate(|x| ckpt.predict(x), &test_set, &stats, &args.thresholds)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<bool> {
    let combos: Vec<_> = supported_combinations()
        .into_iter()
        .filter(|(k, s)| {
            args.kind.is_none_or(|want| want == *k) && args.temps.is_none_or(|want| want == *s)
        })
        .collect();
    if combos.is_empty() {
        bail!("no supported combination matches the filters");
    }
    let results = run_gradcheck(&combos, args.instances, args.h, args.tol, args.seed)?;
    for r in &results {
        println!("{}", serde_json::to_string(r)?);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let ckpt = checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let ds = args.data.load(&args.train)?;
    let stats = compute_class_stats(&ds);
    let report = norm_report(ckpt.class_vectors(), &stats)?;
    let norms_path = args.out_dir.join("norms.csv");
    let mut out = create(&norms_path)?;
    write_norms_csv(&report, &mut out)?;
    out.flush()?;
    let mut summary = json!({
        "norms": norms_path,
        "cov": report.cov,
        "spearman": report.spearman,
        "spearman_degenerate": report.spearman_degenerate,
    });
    if let Some(trace_path) = &args.trace {
        let file =
            File::open(trace_path).with_context(|| format!("opening {}", trace_path.display()))?;
        let trace =
            read_trace_csv(file).with_context(|| format!("reading {}", trace_path.display()))?;
        let sep_path = args.out_dir.join("separation.csv");
        let mut out = create(&sep_path)?;
        write_separation_csv(&trace, &mut out)?;
        out.flush()?;
        summary["separation"] = json!(sep_path);
    }
    println!("{summary}");
    Ok(())
}

fn one_line(err: &anyhow::Error) -> String {
    err.chain()
        .map(|e| e.to_string().replace('\n', " "))
        .collect::<Vec<_>>()
        .join(": ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default();
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PLTR_LOG", "warn")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Analyze(a) => cmd_analyze(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
