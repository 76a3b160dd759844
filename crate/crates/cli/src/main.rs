use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ijip_core::backend::{Backend, ErrorScaling, HttpBackend, HttpConfig, MockOracle, OracleConfig};
use ijip_core::dataset::{
    load_embeddings, load_manifest, mask_explicit, mask_labels, resolve_payload_paths, IncompleteView, Payload,
    QuerySet, RetrievalDatabase,
};
use ijip_core::engine::Engine;
use ijip_core::harness::{
    render_report, BackendSpec, Experiment, ExperimentConfig, HttpSpec, MockSpec, ReportFormat, SweepResult,
};
use ijip_core::prompting::Templates;
use ijip_core::retrieval::{Selector, StrategyConfig, StrategyKind};

#[derive(Parser)]
#[command(name = "ijip", version, about = "In-context classification with an incomplete demonstration database")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load manifests and embeddings and print a summary.
    Validate(ValidateArgs),
    /// Classify one query and print the outcome as JSON.
    Classify(ClassifyArgs),
    /// Run an experiment config.
    Run(RunArgs),
    /// Run an experiment config over several demonstration counts.
    SweepDemos(SweepArgs),
    /// Re-render a stored results file.
    Report(ReportArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Retrieval database manifest (JSON lines).
    #[arg(long)]
    manifest: PathBuf,
    /// Embedding file matching --manifest.
    #[arg(long)]
    embeddings: PathBuf,
    /// Optional auxiliary embedding channel (used by rerank).
    #[arg(long)]
    aux_embeddings: Option<PathBuf>,
    /// Test-set manifest.
    #[arg(long, requires = "test_embeddings")]
    test_manifest: Option<PathBuf>,
    /// Embedding file matching --test-manifest.
    #[arg(long, requires = "test_manifest")]
    test_embeddings: Option<PathBuf>,
    /// Auxiliary embeddings matching --test-manifest.
    #[arg(long, requires = "test_manifest")]
    test_aux_embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Two-stage iterative judgment + integrated prediction.
    Ijip,
    /// Single m-class query.
    Baseline,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Id of the instance to classify (test set first, then database).
    #[arg(long)]
    query_id: String,
    /// Comma-separated labels to remove from the database.
    #[arg(long, value_delimiter = ',', conflicts_with = "missing")]
    mask: Vec<String>,
    /// Proportion of labels to remove at random, in [0, 1).
    #[arg(long)]
    missing: Option<f64>,
    #[arg(long, default_value = "kate")]
    strategy: StrategyKind,
    /// Number of demonstrations.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Classify without demonstrations.
    #[arg(long)]
    zero_shot: bool,
    #[arg(long, value_enum, default_value = "ijip")]
    method: Method,
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendKind,
    /// Seed for masking, strategy and mock noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mock: per-sub-question flip probability.
    #[arg(long, default_value_t = 0.0)]
    flip_prob: f64,
    /// Mock: multiclass error probability.
    #[arg(long, default_value_t = 0.0)]
    error_prob: f64,
    /// Mock: scale the multiclass error with the number of candidates.
    #[arg(long)]
    scale_by_candidates: bool,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long)]
    template_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    max_tokens: u32,
    /// Print the outcome on one line.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured backend (http reads IJIP_* variables).
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Overrides missing_proportions (comma-separated).
    #[arg(long, value_delimiter = ',')]
    missing: Vec<f64>,
    /// Overrides template_dir.
    #[arg(long)]
    template_dir: Option<PathBuf>,
    /// Directory for results.json, report.csv and report.md.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print aggregates as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Overrides k.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Demonstration counts (comma-separated); defaults to demo_counts.
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// results.json written by run or sweep-demos.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Classify(a) => classify(a),
        Command::Run(a) => run(a),
        Command::SweepDemos(a) => sweep_demos(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn validate(args: ValidateArgs) -> Result<ExitCode> {
    let d = &args.data;
    let manifest = resolve_payload_paths(load_manifest(&d.manifest)?, &d.manifest);
    let count = manifest.instances.len();
    let (emb, norms) = load_embeddings(&d.embeddings, count)?;
    let dim = emb.dim();
    let aux = d
        .aux_embeddings
        .as_deref()
        .map(|p| load_embeddings(p, count))
        .transpose()?;
    let missing_images = manifest
        .instances
        .iter()
        .filter(|i| matches!(&i.payload, Payload::Image(p) if !p.exists()))
        .count();
    let m = manifest.labelset.len();
    let mut per_label: Vec<(String, usize)> = manifest
        .labelset
        .iter()
        .map(|l| (l.to_string(), manifest.instances.iter().filter(|i| i.label == l).count()))
        .collect();
    let mut renormalized = norms.renormalized_rows.len();
    if let Some((_, r)) = &aux {
        renormalized += r.renormalized_rows.len();
    }
    let db = RetrievalDatabase::new(manifest, emb, aux.map(|(m, _)| m))?;

    let mut test_count = None;
    if let (Some(tm), Some(te)) = (&d.test_manifest, &d.test_embeddings) {
        let qs = QuerySet::open(tm, te, d.test_aux_embeddings.as_deref())?;
        if qs.labelset != *db.labelset() {
            bail!("test label set differs from the database label set");
        }
        if let Some(q) = qs.queries.first() {
            if q.embedding.len() != dim {
                bail!("test embeddings have dim {}, database has {dim}", q.embedding.len());
            }
        }
        test_count = Some(qs.len());
    }
    if missing_images > 0 {
        log::warn!("{missing_images} image payload(s) not found on disk");
    }

    if args.json {
        let summary = json!({
            "labels": m,
            "instances": count,
            "dim": dim,
            "aux": db.aux_embeddings().is_some(),
            "renormalized_rows": renormalized,
            "missing_images": missing_images,
            "per_label": per_label.iter().map(|(l, n)| json!({"label": l, "count": n})).collect::<Vec<_>>(),
            "test_instances": test_count,
        });
        println!("{summary}");
    } else {
        println!("labels (m): {m}");
        println!("instances: {count}");
        println!("dim: {dim}");
        println!(
            "norm check: {}",
            if renormalized == 0 {
                "ok".to_string()
            } else {
                format!("{renormalized} row(s) renormalized")
            }
        );
        if missing_images > 0 {
            println!("missing images: {missing_images}");
        }
        per_label.sort_by(|a, b| a.0.cmp(&b.0));
        for (l, n) in &per_label {
            println!("  {l}: {n}");
        }
        if let Some(n) = test_count {
            println!("test instances: {n}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn classify(args: ClassifyArgs) -> Result<ExitCode> {
    let d = &args.data;
    let db = RetrievalDatabase::open(&d.manifest, &d.embeddings, d.aux_embeddings.as_deref())?;
    let tests = match (&d.test_manifest, &d.test_embeddings) {
        (Some(m), Some(e)) => Some(QuerySet::open(m, e, d.test_aux_embeddings.as_deref())?),
        _ => None,
    };

    let mut truth: HashMap<String, String> = db.instances().iter().map(|i| (i.id.clone(), i.label.clone())).collect();
    let mut query = None;
    if let Some(qs) = &tests {
        for (q, g) in qs.queries.iter().zip(&qs.gold) {
            truth.insert(q.id.clone(), g.clone());
            if q.id == args.query_id {
                query = Some(q.clone());
            }
        }
    }
    let query = match query {
        Some(q) => q,
        None => db
            .find(&args.query_id)
            .map(|inst| db.query_for(inst))
            .with_context(|| format!("no instance with id {:?}", args.query_id))?,
    };

    let view: IncompleteView<'_> = match (args.missing, args.mask.is_empty()) {
        (Some(p), _) => mask_labels(&db, p, args.seed)?,
        (None, false) => mask_explicit(&db, &args.mask)?,
        (None, true) => IncompleteView::complete(&db),
    };

    let backend: Arc<dyn Backend> = match args.backend {
        BackendKind::Mock => Arc::new(MockOracle::new(OracleConfig {
            binary_flip_prob: args.flip_prob,
            multiclass_error_prob: args.error_prob,
            seed: args.seed,
            error_scaling: if args.scale_by_candidates {
                ErrorScaling::ByCandidateCount {
                    full: db.labelset().len(),
                }
            } else {
                ErrorScaling::Constant
            },
            truth: Arc::new(truth),
        })?),
        BackendKind::Http => Arc::new(HttpBackend::new(HttpConfig::from_env()?)?),
    };
    let templates = load_templates(args.template_dir.as_deref())?;
    let engine = Engine::new(backend.as_ref(), &templates).with_max_tokens(args.max_tokens);
    let labelset = db.labelset();

    let strategy = StrategyConfig::new(args.strategy, args.k).with_seed(args.seed);
    let value = match (args.method, args.zero_shot) {
        (Method::Ijip, true) => serde_json::to_value(engine.classify_zero_shot(labelset, &query)?)?,
        (Method::Ijip, false) => {
            let selector = Selector::new(strategy, &view)?;
            serde_json::to_value(engine.classify(&selector, labelset, &query)?)?
        }
        (Method::Baseline, true) => serde_json::to_value(engine.baseline_zero_shot(labelset, &query)?)?,
        (Method::Baseline, false) => {
            let selector = Selector::new(strategy, &view)?;
            serde_json::to_value(engine.baseline_classify(&selector, labelset, &query)?)?
        }
    };
    if args.json {
        println!("{value}");
    } else {
        println!("{}", serde_json::to_string_pretty(&value)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn load_templates(dir: Option<&Path>) -> Result<Templates> {
    Ok(match dir {
        Some(d) => Templates::from_dir(d)?,
        None => Templates::default(),
    })
}

fn load_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    match args.backend {
        Some(BackendKind::Mock) if !matches!(config.backend, BackendSpec::Mock(_)) => {
            config.backend = BackendSpec::Mock(MockSpec::default());
        }
        Some(BackendKind::Http) if !matches!(config.backend, BackendSpec::Http(_)) => {
            config.backend = BackendSpec::Http(HttpSpec::default());
        }
        _ => {}
    }
    if !args.missing.is_empty() {
        config.missing_proportions = args.missing.clone();
    }
    if let Some(dir) = &args.template_dir {
        config.template_dir = Some(dir.clone());
    }
    Ok(config)
}

fn finish(sweep: SweepResult, args: &ExperimentArgs) -> Result<ExitCode> {
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, format) in [
            ("results.json", ReportFormat::Json),
            ("report.csv", ReportFormat::Csv),
            ("report.md", ReportFormat::Markdown),
        ] {
            let path = dir.join(name);
            fs::write(&path, render_report(&sweep, format)?).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    if args.json {
        println!("{}", serde_json::to_string(&sweep.aggregates)?);
    } else {
        print!("{}", render_report(&sweep, ReportFormat::Markdown)?);
    }
    let failed: Vec<_> = sweep.failures().collect();
    for t in &failed {
        eprintln!(
            "trial failed: {} p={} k={} repeat {}: {}",
            t.method,
            t.proportion,
            t.k,
            t.repeat,
            t.failure.as_deref().unwrap_or("")
        );
    }
    Ok(if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut config = load_config(&args.exp)?;
    if let Some(k) = args.k {
        config.k = k;
    }
    let experiment = Experiment::open(config)?;
    finish(experiment.run(), &args.exp)
}

fn sweep_demos(args: SweepArgs) -> Result<ExitCode> {
    let config = load_config(&args.exp)?;
    let ks = if args.ks.is_empty() {
        config.demo_counts.clone()
    } else {
        args.ks.clone()
    };
    if ks.is_empty() || ks.contains(&0) {
        bail!("need at least one demonstration count >= 1 (--ks or demo_counts)");
    }
    let experiment = Experiment::open(config)?;
    finish(experiment.sweep_demonstrations(&ks), &args.exp)
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let sweep: SweepResult = serde_json::from_str(&text).context("parsing results")?;
    let rendered = render_report(&sweep, args.format)?;
    match &args.out {
        Some(path) => fs::write(path, rendered).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{rendered}"),
    }
    Ok(ExitCode::SUCCESS)
}
