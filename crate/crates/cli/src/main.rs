use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use incrlin::datamodel::io::{
    load_embeddings, load_features, load_weights, save_features, write_embeddings_csv,
    write_weights_csv, Manifest,
};
use incrlin::datamodel::{
    ClassId, ClassRegistry, EmbeddingTable, FeatureStore, ProtocolKind, RegularizerKind,
    RunConfig, WeightMatrix,
};
use incrlin::protocol::{
    confusion_csv, fit_base_weights, run_multi_session, run_single_session, session_table_csv,
    single_summary_csv, ResultsBody, ResultsFile, SessionStream,
};
use incrlin::synth::{generate, SynthSpec};
use incrlin::trainer::BaseModel;

#[derive(Parser)]
#[command(name = "incrlin", version, about = "Few-shot class-incremental learning of linear classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit base-class weights on the support split of session 0.
    TrainBase(TrainBaseArgs),
    /// Run the multi-session protocol.
    RunMulti(RunArgs),
    /// Run the single-session episodic protocol.
    RunSingle(RunArgs),
    /// Write a synthetic fixture (features, embeddings, manifest, config).
    SynthGen(SynthArgs),
    /// Render results files as CSV tables and confusion grids.
    Report(ReportArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Feature store (CSV, or binary with the FSCF header).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Class embeddings CSV.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Class manifest JSON (labels and sessions).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Run configuration JSON; missing values come from the presets.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Protocol seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainBaseArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output weight CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Base weights CSV; trained in-engine when absent.
    #[arg(long)]
    base_weights: Option<PathBuf>,
    /// finetune, subspace, semantic, linmap or description.
    #[arg(long, value_parser = parse_kind)]
    regularizer: Option<RegularizerKind>,
    /// Replay one stored example per seen class.
    #[arg(long)]
    memory: bool,
    /// Number of episodes (single-session only).
    #[arg(long)]
    episodes: Option<usize>,
    /// Worker threads for episodes.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Run label used in reports; defaults to the regularizer name.
    #[arg(long)]
    label: Option<String>,
    /// Output results JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator parameters as JSON; defaults to the 20+4x5 benchmark.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Generator seed; overrides the parameters file.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the feature store in the binary format.
    #[arg(long)]
    binary: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Results JSON files.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_kind(s: &str) -> std::result::Result<RegularizerKind, String> {
    s.parse().map_err(|e: incrlin::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("INCRLIN_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::TrainBase(a) => train_base(a),
        Command::RunMulti(a) => run(a, ProtocolKind::Multi),
        Command::RunSingle(a) => run(a, ProtocolKind::Single),
        Command::SynthGen(a) => synth_gen(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Config file plus flag overrides, resolved against the presets. Relative
/// data paths in the file are taken relative to the file.
fn resolve_config(data: &DataArgs, overrides: Value) -> Result<RunConfig> {
    let mut partial = match &data.config {
        Some(p) => read_json(p)?,
        None => json!({}),
    };
    incrlin::datamodel::config::merge_json(&mut partial, &overrides);
    if let Some(seed) = data.seed {
        incrlin::datamodel::config::merge_json(&mut partial, &json!({"protocol": {"seed": seed}}));
    }
    let mut cfg = RunConfig::resolve(&partial).context("resolving config")?;

    let dir = data
        .config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let rebase = |p: &mut Option<PathBuf>| {
        if let Some(path) = p.as_mut() {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
    };
    let d = &mut cfg.data;
    for p in [&mut d.features, &mut d.embeddings, &mut d.manifest, &mut d.base_weights] {
        rebase(p);
    }
    let flag = |f: &Option<PathBuf>, slot: &mut Option<PathBuf>| {
        if f.is_some() {
            slot.clone_from(f);
        }
    };
    flag(&data.features, &mut d.features);
    flag(&data.embeddings, &mut d.embeddings);
    flag(&data.manifest, &mut d.manifest);
    Ok(cfg)
}

struct Inputs {
    store: FeatureStore,
    registry: ClassRegistry,
    embeddings: Option<EmbeddingTable>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let path = cfg.data.features.as_ref().context("no feature store given (--features)")?;
    let store = load_features(path).with_context(|| format!("loading {}", path.display()))?;
    let registry = match &cfg.data.manifest {
        Some(p) => Manifest::load(p)
            .and_then(|m| m.registry())
            .with_context(|| format!("loading {}", p.display()))?,
        None => {
            log::warn!("no manifest; treating every class as a base class");
            let mut r = ClassRegistry::new();
            r.register_session(store.classes())?;
            r
        }
    };
    let embeddings = match &cfg.data.embeddings {
        Some(p) => Some(
            load_embeddings(p, cfg.data.embedding_source)
                .with_context(|| format!("loading {}", p.display()))?,
        ),
        None => None,
    };
    Ok(Inputs {
        store,
        registry,
        embeddings,
    })
}

fn base_weights(cfg: &RunConfig, inputs: &Inputs) -> Result<WeightMatrix> {
    match &cfg.data.base_weights {
        Some(p) => load_weights(p).with_context(|| format!("loading {}", p.display())),
        None => {
            let (w, report) = fit_base_weights(&inputs.store, &inputs.registry, cfg)?;
            log::info!("base training: {} epochs, loss {:.6}", report.epochs_run, report.final_loss);
            Ok(w)
        }
    }
}

fn train_base(args: TrainBaseArgs) -> Result<()> {
    let cfg = resolve_config(&args.data, json!({}))?;
    let inputs = load_inputs(&cfg)?;
    let (w, report) = fit_base_weights(&inputs.store, &inputs.registry, &cfg)?;
    log::info!("base training: {} epochs, loss {:.6}", report.epochs_run, report.final_loss);
    let file = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_weights_csv(&w, std::io::BufWriter::new(file))?;
    Ok(())
}

fn run(args: RunArgs, protocol: ProtocolKind) -> Result<()> {
    let mut overrides = json!({"protocol": {"kind": protocol}});
    if let Some(kind) = args.regularizer {
        overrides["regularizer"] = json!({"kind": kind});
    }
    if args.memory {
        incrlin::datamodel::config::merge_json(&mut overrides, &json!({"regularizer": {"memory": true}}));
    }
    if let Some(n) = args.episodes {
        overrides["protocol"]["episodes"] = json!(n);
    }
    let mut cfg = resolve_config(&args.data, overrides)?;
    if args.base_weights.is_some() {
        cfg.data.base_weights.clone_from(&args.base_weights);
    }
    let inputs = load_inputs(&cfg)?;
    let weights = base_weights(&cfg, &inputs)?;

    let body = match protocol {
        ProtocolKind::Multi => {
            let stream = SessionStream::new(&inputs.store, &inputs.registry, inputs.embeddings.as_ref());
            ResultsBody::Multi {
                sessions: run_multi_session(&stream, &weights, &cfg)?,
            }
        }
        ProtocolKind::Single => {
            if inputs.registry.num_sessions() < 2 {
                bail!("single-session runs need a manifest with novel classes (session >= 1)");
            }
            let base = BaseModel::new(&weights, inputs.registry.base_classes())?;
            let pool: Vec<ClassId> = inputs.registry.novel_classes();
            let outcome = run_single_session(
                &inputs.store,
                &base,
                &pool,
                inputs.embeddings.as_ref(),
                &cfg,
                args.jobs,
            )?;
            if outcome.summary.episodes_failed > 0 {
                log::warn!("{} episodes failed", outcome.summary.episodes_failed);
            }
            ResultsBody::Single(outcome)
        }
    };
    let label = args.label.unwrap_or_else(|| {
        let mut l = cfg.regularizer.kind.to_string();
        if cfg.regularizer.memory {
            l.push_str("+M");
        }
        l
    });
    ResultsFile::new(label, cfg, body)
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))
}

fn synth_gen(args: SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => serde_json::from_value::<SynthSpec>(read_json(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SynthSpec::benchmark(0),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (store, embeddings, registry) = generate(&spec)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let features = if args.binary { "features.bin" } else { "features.csv" };
    save_features(&store, &args.out.join(features))?;
    let file = fs::File::create(args.out.join("embeddings.csv"))?;
    write_embeddings_csv(&embeddings, std::io::BufWriter::new(file))?;
    Manifest::from_registry(&registry, |c| format!("class_{}", c.0)).save(&args.out.join("manifest.json"))?;
    let config = json!({
        "data": {
            "features": features,
            "embeddings": "embeddings.csv",
            "manifest": "manifest.json",
        },
        "protocol": {"shots": spec.support_per_class, "seed": spec.seed},
    });
    fs::write(args.out.join("config.json"), serde_json::to_string_pretty(&config)? + "\n")?;
    fs::write(args.out.join("synth.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let files = args
        .results
        .iter()
        .map(|p| ResultsFile::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut multi = Vec::new();
    let mut single = Vec::new();
    for f in &files {
        match &f.body {
            ResultsBody::Multi { sessions } => multi.push((f.label.as_str(), sessions.as_slice())),
            ResultsBody::Single(o) => single.push((f.label.as_str(), o)),
        }
    }
    if !multi.is_empty() {
        session_table_csv(&multi, fs::File::create(args.out.join("sessions.csv"))?)?;
        for (label, sessions) in &multi {
            for s in *sessions {
                let name = format!("confusion_{}_session{}.csv", sanitize(label), s.session);
                confusion_csv(&s.confusion, fs::File::create(args.out.join(name))?)?;
            }
        }
    }
    if !single.is_empty() {
        single_summary_csv(&single, fs::File::create(args.out.join("single.csv"))?)?;
    }
    Ok(())
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
