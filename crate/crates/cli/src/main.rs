use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tabguide::artifact;
use tabguide::backend::textualize_table;
use tabguide::dataset::{load_table, split};
use tabguide::evaluation::{evaluate, ConstraintSet, MetricReport};
use tabguide::migraph::{FeatureMiMode, TauSource};
use tabguide::pipeline::{attach_backend, end_to_end, BackendChoice, PipelineConfig};
use tabguide::sampler::{synthesize, to_table};
use tabguide::sweep::{run_sweep, write_csv, MetricSet, SweepPlan};
use tabguide::{
    BinningMode, Engine, EngineConfig, FeatureSchema, GuidanceConfig, GuidanceMode, MiConfig, PrefixMode,
    SamplerConfig, Table,
};

#[derive(Parser)]
#[command(name = "tabguide", version, about = "MI-guided synthetic tabular data")]
struct Cli {
    /// Seed for sampling, splitting and evaluation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Candidate scorer: builtin, marginal or http:<url>.
    #[arg(long, global = true, default_value = "builtin")]
    backend: BackendChoice,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit pseudo-features, the MI graph and the built-in backend; write a model directory.
    Fit(FitArgs),
    /// Synthesize rows from a model directory.
    Sample(SampleArgs),
    /// Score a synthetic table against real data.
    Eval(EvalArgs),
    /// Re-run synthesis at several selector thresholds.
    Sweep(SweepArgs),
    /// Inspect the MI graph of a model.
    #[command(name = "mi-graph", subcommand)]
    MiGraph(MiGraphCommand),
    /// Split, fit, sample and evaluate in one go.
    Run(RunArgs),
    /// Deterministic train/test split of a CSV.
    Split(SplitArgs),
    /// Write a table as one `feature is value, ...` line per row.
    Corpus(CorpusArgs),
}

#[derive(Subcommand)]
enum MiGraphCommand {
    /// Write the pairwise matrix as CSV and feature-level aggregates as JSON.
    Export(ExportArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args, Clone)]
struct FitOptions {
    /// `auto` (Freedman-Diaconis) or a fixed bin count in 1..=16.
    #[arg(long, default_value = "auto")]
    bins: String,
    /// Feature-level MI: `multiclass` or `max`.
    #[arg(long, default_value = "multiclass")]
    feature_mi: String,
    /// Population the default threshold is the median of: `feature` or `pairs`.
    #[arg(long, default_value = "feature")]
    tau_source: String,
    /// Laplace smoothing of the built-in backend.
    #[arg(long, default_value_t = tabguide::backend::DEFAULT_SMOOTHING)]
    smoothing: f64,
}

#[derive(Args, Clone)]
struct GuidanceArgs {
    /// fs, lc or none.
    #[arg(long)]
    guidance: Option<GuidanceMode>,
    /// Selector threshold: a number or `auto`.
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Clone)]
struct SamplerArgs {
    /// `default` (p 0.95) or `narrow-nucleus` (p 0.7).
    #[arg(long, default_value = "default")]
    preset: String,
    #[arg(long)]
    nucleus_p: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    /// `prompt` or `seed:<k>`.
    #[arg(long, default_value = "prompt")]
    prefix_mode: PrefixMode,
    #[arg(long, default_value_t = 8)]
    max_attempts: u32,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitOptions,
    #[command(flatten)]
    guidance: GuidanceArgs,
    /// Output model directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    /// Rows to generate (default: training size).
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON sidecar with per-value provenance.
    #[arg(long)]
    provenance: Option<PathBuf>,
    #[command(flatten)]
    guidance: GuidanceArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    real_train: PathBuf,
    #[arg(long)]
    real_test: Option<PathBuf>,
    /// Schema of all three tables; defaults to the schema in --model.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    /// Also write per-metric CSVs into this directory.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    real_test: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,0.9")]
    quantiles: Vec<f64>,
    /// Rows per point (default: training size).
    #[arg(long)]
    count: Option<usize>,
    /// fs or lc.
    #[arg(long, default_value = "fs")]
    guidance: GuidanceMode,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Comma-separated subset of utility, realism, privacy.
    #[arg(long, value_delimiter = ',', default_value = "utility,realism,privacy")]
    metrics: Vec<String>,
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    aggregates: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    /// Also write the synthetic table.
    #[arg(long)]
    synthetic_out: Option<PathBuf>,
    #[command(flatten)]
    fit: FitOptions,
    #[command(flatten)]
    guidance: GuidanceArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Args)]
struct CorpusArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Permute phrase order per row.
    #[arg(long)]
    shuffle: bool,
    #[arg(long)]
    out: PathBuf,
}

fn engine_config(fit: &FitOptions, guidance: &GuidanceArgs) -> Result<EngineConfig> {
    let binning = match fit.bins.as_str() {
        "auto" => BinningMode::FreedmanDiaconis,
        k => BinningMode::Fixed(k.parse().with_context(|| format!("--bins expects `auto` or an integer, got `{k}`"))?),
    };
    let feature_mi = match fit.feature_mi.as_str() {
        "multiclass" => FeatureMiMode::MultiClass,
        "max" => FeatureMiMode::MaxOverBins,
        other => bail!("--feature-mi expects `multiclass` or `max`, got `{other}`"),
    };
    let tau_source = match fit.tau_source.as_str() {
        "feature" => TauSource::FeatureLevel,
        "pairs" => TauSource::PseudoPairs,
        other => bail!("--tau-source expects `feature` or `pairs`, got `{other}`"),
    };
    Ok(EngineConfig {
        binning,
        mi: MiConfig {
            feature_mi,
            tau_source,
            tau: None,
        },
        smoothing: fit.smoothing,
        guidance: apply_guidance(GuidanceConfig::default(), guidance)?,
    })
}

fn apply_guidance(mut cfg: GuidanceConfig, args: &GuidanceArgs) -> Result<GuidanceConfig> {
    if let Some(mode) = args.guidance {
        cfg.mode = mode;
    }
    if let Some(tau) = &args.tau {
        cfg.tau = match tau.as_str() {
            "auto" => None,
            t => Some(t.parse().with_context(|| format!("--tau expects a number or `auto`, got `{t}`"))?),
        };
    }
    if let Some(lambda) = args.lambda {
        cfg.lambda = lambda;
    }
    Ok(cfg)
}

fn sampler_config(args: &SamplerArgs, seed: u64) -> Result<SamplerConfig> {
    let mut cfg = SamplerConfig::preset(&args.preset)
        .with_context(|| format!("unknown preset `{}` (default, narrow-nucleus)", args.preset))?;
    if let Some(p) = args.nucleus_p {
        cfg.nucleus_p = p;
    }
    if let Some(t) = args.temperature {
        cfg.temperature = t;
    }
    cfg.prefix_mode = args.prefix_mode;
    cfg.max_attempts = args.max_attempts;
    cfg.seed = seed;
    Ok(cfg)
}

fn load_data(args: &DataArgs) -> Result<Table> {
    let schema = FeatureSchema::from_json_file(&args.schema).map_err(tabguide::Error::from)?;
    Ok(load_table(&args.data, &schema).map_err(tabguide::Error::from)?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_constraints(path: Option<&PathBuf>) -> Result<Vec<tabguide::evaluation::Constraint>> {
    Ok(match path {
        Some(p) => ConstraintSet::from_json_file(p).map_err(tabguide::Error::from)?.constraints,
        None => Vec::new(),
    })
}

fn write_metric_csvs(dir: &Path, report: &MetricReport) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if let Some(dcr) = &report.privacy {
        let mut f = fs::File::create(dir.join("dcr.csv"))?;
        writeln!(f, "row,dcr")?;
        for (i, d) in dcr.distances.iter().enumerate() {
            writeln!(f, "{i},{d}")?;
        }
    }
    if let Some(realism) = &report.realism {
        let mut f = fs::File::create(dir.join("discriminator_folds.csv"))?;
        writeln!(f, "fold,accuracy")?;
        for (i, a) in realism.fold_accuracy.iter().enumerate() {
            writeln!(f, "{i},{a}")?;
        }
    }
    let mut f = fs::File::create(dir.join("violations.csv"))?;
    writeln!(f, "constraint,violations,rows,rate")?;
    for v in &report.fidelity {
        writeln!(f, "{},{},{},{}", v.name, v.violations, v.rows, v.rate)?;
    }
    Ok(())
}

fn load_engine(model: &Path, backend: &BackendChoice) -> Result<Engine> {
    let engine = artifact::load(model).with_context(|| format!("loading model {}", model.display()))?;
    Ok(attach_backend(engine, backend)?)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Fit(args) => {
            let table = load_data(&args.data)?;
            let config = engine_config(&args.fit, &args.guidance)?;
            let engine = Engine::fit(table, config)?;
            let manifest = artifact::save(&engine, &args.out)?;
            log::info!(
                "fitted {} pseudo-features over {} features, tau {:.6}",
                engine.layout.num_pseudo(),
                engine.layout.num_features(),
                engine.tau()
            );
            println!("{}", artifact::content_hash(&manifest));
        }
        Command::Sample(args) => {
            let engine = load_engine(&args.model, &cli.backend)?;
            let guidance = apply_guidance(engine.config.guidance, &args.guidance)?;
            let engine = engine.with_guidance(guidance)?;
            let config = sampler_config(&args.sampler, cli.seed)?;
            let count = args.count.unwrap_or(engine.train.len());
            let records = synthesize(&engine, count, &config)?;
            to_table(&engine, &records)
                .write_csv(&args.out)
                .map_err(tabguide::Error::from)?;
            if let Some(p) = &args.provenance {
                let sidecar: Vec<_> = records
                    .iter()
                    .map(|r| serde_json::json!({"order": r.order, "provenance": r.provenance}))
                    .collect();
                write_json(p, &serde_json::Value::Array(sidecar))?;
            }
        }
        Command::Eval(args) => {
            let schema = match (&args.schema, &args.model) {
                (Some(s), _) => FeatureSchema::from_json_file(s).map_err(tabguide::Error::from)?,
                (None, Some(m)) => artifact::load(m)?.schema().clone(),
                (None, None) => bail!("eval needs --schema or --model"),
            };
            let read = |p: &PathBuf| -> Result<Table> { Ok(load_table(p, &schema).map_err(tabguide::Error::from)?) };
            let synthetic = read(&args.synthetic)?;
            let train = read(&args.real_train)?;
            let test = args.real_test.as_ref().map(read).transpose()?;
            let constraints = load_constraints(args.constraints.as_ref())?;
            let report = evaluate(&synthetic, &train, test.as_ref(), &constraints, cli.seed)
                .map_err(tabguide::Error::from)?;
            write_json(&args.report, &serde_json::to_value(&report)?)?;
            if let Some(dir) = &args.csv_dir {
                write_metric_csvs(dir, &report)?;
            }
        }
        Command::Sweep(args) => {
            let engine = load_engine(&args.model, &cli.backend)?;
            let test = args
                .real_test
                .as_ref()
                .map(|p| load_table(p, engine.schema()).map_err(tabguide::Error::from))
                .transpose()?;
            let mut metrics = MetricSet {
                utility: false,
                realism: false,
                privacy: false,
            };
            for m in &args.metrics {
                match m.as_str() {
                    "utility" => metrics.utility = true,
                    "realism" => metrics.realism = true,
                    "privacy" => metrics.privacy = true,
                    other => bail!("unknown metric `{other}` (utility, realism, privacy)"),
                }
            }
            let plan = SweepPlan {
                quantiles: args.quantiles,
                mode: args.guidance,
                lambda: args.lambda,
                sampler: sampler_config(&args.sampler, cli.seed)?,
                count: args.count.unwrap_or(engine.train.len()),
                metrics,
                probe_rows: 200,
            };
            let points = run_sweep(&engine, &plan, &engine.train, test.as_ref())?;
            let file = fs::File::create(&args.report).with_context(|| format!("writing {}", args.report.display()))?;
            write_csv(&points, file)?;
        }
        Command::MiGraph(MiGraphCommand::Export(args)) => {
            let engine = artifact::load(&args.model)?;
            let file = fs::File::create(&args.pairs).with_context(|| format!("writing {}", args.pairs.display()))?;
            engine.graph.write_pairs_csv(file)?;
            write_json(&args.aggregates, &engine.graph.aggregates_json(&engine.layout))?;
        }
        Command::Run(args) => {
            let table = load_data(&args.data)?;
            let engine_cfg = engine_config(&args.fit, &args.guidance)?;
            let config = PipelineConfig {
                train_fraction: args.train_fraction,
                split_seed: cli.seed,
                engine: engine_cfg,
                sampler: sampler_config(&args.sampler, cli.seed)?,
                count: args.count,
                constraints: load_constraints(args.constraints.as_ref())?,
                backend: cli.backend.clone(),
            };
            let out = end_to_end(&table, &config)?;
            write_json(&args.report, &serde_json::to_value(&out.report)?)?;
            if let Some(p) = &args.synthetic_out {
                out.synthetic.write_csv(p).map_err(tabguide::Error::from)?;
            }
        }
        Command::Split(args) => {
            let table = load_data(&args.data)?;
            let (train, test) = split(&table, args.train_fraction, cli.seed).map_err(tabguide::Error::from)?;
            train.write_csv(&args.train_out).map_err(tabguide::Error::from)?;
            test.write_csv(&args.test_out).map_err(tabguide::Error::from)?;
        }
        Command::Corpus(args) => {
            let table = load_data(&args.data)?;
            let mut text = textualize_table(&table, args.shuffle, cli.seed).join("\n");
            text.push('\n');
            fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
        }
    }
    Ok(())
}

/// Machine-readable error for stderr.
fn error_json(err: &anyhow::Error) -> serde_json::Value {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<tabguide::Error>())
        .map(tabguide::Error::kind)
        .or_else(|| err.chain().find_map(|e| e.downcast_ref::<std::io::Error>()).map(|_| "Io"))
        .unwrap_or("InvalidArgument");
    let chain: Vec<String> = err.chain().map(ToString::to_string).collect();
    serde_json::json!({ "error": kind, "message": chain.join(": ") })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SAGE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::FAILURE
        }
    }
}
