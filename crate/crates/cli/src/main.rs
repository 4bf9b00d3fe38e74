//! `miko`: one entry point over corpus ingest, distillation, annotation and evaluation.

mod config;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use miko_annotation::{sample_pool, Agreement, AnnotationService, HttpConfig, ServiceConfig};
use miko_core::corpus::{self, Dataset, IngestOptions, SourceFormat};
use miko_core::eval::{self, AugmentOptions, EvalOptions, MissingCandidates, MissingPolicy, Variant};
use miko_core::{DistillOptions, Distiller, KeyInfoMode, KnowledgeBase, Post, PrefixTable, PromptKit, Relation};
use miko_gateway::{
    ChatBackend, EmbedBackend, Gateway, HashEmbedder, HttpEmbedBackend, HttpProfile, MockBackend, OpenAiChatBackend,
};
use serde::Serialize;
use serde_json::Value;
use tracing::{info, warn};

use config::Config;

/// Error that maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "miko", version, about = "Distill, annotate and evaluate posting intentions")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Treat any per-item failure as a run failure.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw corpus into generic jsonl plus a manifest.
    Ingest(IngestArgs),
    /// Run caption, key-information and intention stages into a knowledge base.
    Distill(DistillArgs),
    /// Per-relation record counts of a knowledge base.
    KbStats(KbArgs),
    /// Draw an annotation pool and start a session.
    Sample(SampleArgs),
    /// Serve the annotation API (and the UI bundle, if given).
    AnnotateServe(ServeArgs),
    /// Print per-post aggregates of a session.
    Aggregate(AggregateArgs),
    /// Write admitted intentions as benchmark jsonl plus manifest.
    ExportBenchmark(ExportBenchmarkArgs),
    /// Score candidate generations against a benchmark.
    Eval(EvalArgs),
    /// Write 10-turn instruction conversations.
    ExportInstructions(ExportInstructionsArgs),
    /// Append image descriptions and/or intentions to post text.
    Augment(AugmentArgs),
    /// Accuracy, precision, recall and F1 from label files.
    Metrics(MetricsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Tsv,
    Jsonl,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum KeyInfoModeArg {
    Merged,
    PerSource,
}

#[derive(Clone, Copy, ValueEnum)]
enum MissingArg {
    Skip,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnMissingArg {
    Skip,
    Error,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgreementArg {
    Mean,
    Majority,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long, default_value = "generic")]
    dataset: Dataset,
    /// Defaults to the source file extension.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    require_image: bool,
}

#[derive(Args)]
struct BackendOpts {
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendArg,
    /// Mock backend seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DistillArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    backend: BackendOpts,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    image_root: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "merged")]
    keyinfo_mode: KeyInfoModeArg,
    #[arg(long)]
    max_failure_rate: Option<f64>,
}

#[derive(Args)]
struct KbArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    session: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    session: PathBuf,
    #[arg(long, value_enum, default_value = "mean")]
    agreement: AgreementArg,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    #[arg(long)]
    image_root: Option<PathBuf>,
    /// Comma-separated annotator ids; everyone is accepted when absent.
    #[arg(long, value_delimiter = ',')]
    allowlist: Option<Vec<String>>,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Also write every raw score as CSV.
    #[arg(long)]
    typicality_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ExportBenchmarkArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[command(flatten)]
    backend: BackendOpts,
    #[arg(long, value_enum, default_value = "skip")]
    missing: MissingArg,
    #[arg(long)]
    micro: bool,
    /// CSV destination; JSON report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportInstructionsArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Restrict to these posts; defaults to every post in the knowledge base.
    #[arg(long = "post")]
    posts: Vec<String>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    /// Text, Text+IMGDES, Text+INTE or Text+IMGDES+INTE.
    #[arg(long)]
    variant: Variant,
    #[arg(long, default_value = eval::DEFAULT_SEPARATOR)]
    separator: String,
    #[arg(long, value_enum, default_value = "skip")]
    on_missing: OnMissingArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_tracing(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn init_tracing(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default.into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter)
        .with_ansi(io::stderr().is_terminal())
        .with_writer(io::stderr)
        .try_init();
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let strict = cli.strict || cfg.strict.unwrap_or(false);
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a, strict),
        Command::Distill(a) => cmd_distill(a, &cfg, strict),
        Command::KbStats(a) => cmd_kb_stats(a),
        Command::Sample(a) => cmd_sample(a),
        Command::AnnotateServe(a) => cmd_serve(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::ExportBenchmark(a) => cmd_export_benchmark(a),
        Command::Eval(a) => cmd_eval(a, &cfg),
        Command::ExportInstructions(a) => cmd_export_instructions(a, &cfg),
        Command::Augment(a) => cmd_augment(a, strict),
        Command::Metrics(a) => cmd_metrics(a),
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn infer_format(path: &Path) -> Result<SourceFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => ext.parse().map_err(|_| usage(format!("cannot infer format from `.{ext}`; pass --format"))),
        None => Err(usage("cannot infer format without a file extension; pass --format")),
    }
}

fn load_posts(path: &Path, dataset: Dataset, strict: bool) -> Result<Vec<Post>> {
    let (posts, manifest) = corpus::ingest(
        path,
        dataset,
        infer_format(path)?,
        IngestOptions {
            require_image: false,
            strict,
        },
    )?;
    if manifest.skipped_malformed + manifest.duplicate_ids > 0 {
        warn!(skipped = manifest.skipped_malformed, duplicates = manifest.duplicate_ids, "corpus had bad records");
    }
    Ok(posts)
}

fn cmd_ingest(a: IngestArgs, strict: bool) -> Result<()> {
    let format = match a.format {
        Some(FormatArg::Tsv) => SourceFormat::Tsv,
        Some(FormatArg::Jsonl) => SourceFormat::Jsonl,
        Some(FormatArg::Csv) => SourceFormat::Csv,
        None => infer_format(&a.source)?,
    };
    let opts = IngestOptions {
        require_image: a.require_image,
        strict,
    };
    let (posts, manifest) = corpus::ingest(&a.source, a.dataset, format, opts)?;
    let mut out = create_file(&a.out)?;
    corpus::write_jsonl(&posts, &mut out)?;
    out.flush()?;
    let manifest_path = a.out.with_extension("manifest.json");
    fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    print_json(&manifest)
}

fn prompt_kit(cfg: &Config) -> Result<PromptKit> {
    let mut kit = match &cfg.template_dir {
        Some(dir) => PromptKit::load_dir(dir)?,
        None => PromptKit::bundled(),
    };
    if let Some(path) = &cfg.prefix_table {
        kit = kit.with_prefixes(PrefixTable::load(path).map_err(|e| usage(format!("prefix table: {e}")))?);
    }
    Ok(kit)
}

fn http_profile(name: &str, env_prefix: &str, profile: &config::Profile) -> Result<HttpProfile> {
    let key = std::env::var(format!("MIKO_{env_prefix}_API_KEY")).ok();
    match &profile.base_url {
        Some(url) => Ok(HttpProfile::new(name, url).with_api_key(key)),
        None => HttpProfile::from_env(name, env_prefix)
            .ok_or_else(|| usage(format!("no base_url for {name}: set [{name}] base_url or MIKO_{env_prefix}_BASE_URL"))),
    }
}

fn gateway(opts: &BackendOpts, cfg: &Config, need_chat: bool, need_embed: bool) -> Result<Gateway> {
    let mut b = Gateway::builder();
    if let Some(dir) = opts.cache_dir.as_ref().or(cfg.cache_dir.as_ref()) {
        b = b.cache_dir(dir);
    }
    // Pacing is off for the mock backend unless configured.
    let default_rate = match opts.backend {
        BackendArg::Mock => 0.0,
        BackendArg::Http => miko_gateway::DEFAULT_RATE_PER_SEC,
    };
    b = b.rate_per_sec(cfg.rate_per_sec.unwrap_or(default_rate));
    let llm_model = cfg.llm.model_id.clone().unwrap_or_else(|| DistillOptions::default().llm_model);
    let mllm_model = cfg.mllm.model_id.clone().unwrap_or_else(|| DistillOptions::default().mllm_model);
    match opts.backend {
        BackendArg::Mock => {
            let seed = opts.seed.or(cfg.mock.seed).unwrap_or(0);
            let mock = |name: &str, model: &str| -> Result<Arc<dyn ChatBackend>> {
                let mut m = MockBackend::synthetic(seed).with_name(name).with_model_id(model);
                if let Some(path) = &cfg.mock.fixtures {
                    m = m.with_fixture_file(path)?;
                }
                Ok(Arc::new(m))
            };
            b = b
                .llm(mock("llm", &llm_model)?)
                .mllm(mock("mllm", &mllm_model)?)
                .embed(Arc::new(HashEmbedder::new(seed)) as Arc<dyn EmbedBackend>);
        }
        BackendArg::Http => {
            if need_chat {
                b = b
                    .llm(Arc::new(OpenAiChatBackend::new(http_profile("llm", "LLM", &cfg.llm)?)?))
                    .mllm(Arc::new(OpenAiChatBackend::new(http_profile("mllm", "MLLM", &cfg.mllm)?)?));
            }
            if need_embed {
                let model = cfg.embed.model_id.clone().unwrap_or_else(|| "bert-base-uncased".into());
                b = b.embed(Arc::new(HttpEmbedBackend::new(http_profile("embed", "EMBED", &cfg.embed)?, model)?));
            }
        }
    }
    Ok(b.build()?)
}

fn cmd_distill(a: DistillArgs, cfg: &Config, strict: bool) -> Result<()> {
    let parallel = a.parallel.or(cfg.parallel).unwrap_or(DistillOptions::default().parallel);
    if parallel == 0 {
        return Err(usage("--parallel must be at least 1"));
    }
    let posts = load_posts(&a.corpus, Dataset::Generic, strict)?;
    let image_root = a
        .image_root
        .or_else(|| cfg.image_root.clone())
        .unwrap_or_else(|| a.corpus.parent().map(Path::to_path_buf).unwrap_or_default());
    let defaults = DistillOptions::default();
    let max_failure_rate = a.max_failure_rate.or(cfg.max_failure_rate);
    let opts = DistillOptions {
        llm_model: cfg.llm.model_id.clone().unwrap_or(defaults.llm_model),
        mllm_model: cfg.mllm.model_id.clone().unwrap_or(defaults.mllm_model),
        image_root,
        parallel,
        strict,
        keyinfo_mode: match a.keyinfo_mode {
            KeyInfoModeArg::Merged => KeyInfoMode::Merged,
            KeyInfoModeArg::PerSource => KeyInfoMode::PerSource,
        },
        caption_temperature: cfg.temperatures.caption.unwrap_or(defaults.caption_temperature),
        keyinfo_temperature: cfg.temperatures.keyinfo.unwrap_or(defaults.keyinfo_temperature),
        intention_temperature: cfg.temperatures.intention.unwrap_or(defaults.intention_temperature),
        max_tokens: defaults.max_tokens,
        max_failure_rate,
    };
    let kit = prompt_kit(cfg)?;
    let gw = gateway(&a.backend, cfg, true, false)?;
    let kb = KnowledgeBase::open(&a.out)?;
    let report = Distiller::new(&gw, &kit, opts).run_pipeline(&posts, &kb)?;
    fs::write(a.out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    print_json(&report)?;
    if report.is_failure(strict, max_failure_rate) {
        bail!("{} of {} posts failed", report.posts_failed, report.posts_total);
    }
    Ok(())
}

fn open_kb(path: &Path) -> Result<KnowledgeBase> {
    if !path.is_dir() {
        return Err(usage(format!("knowledge base {} does not exist", path.display())));
    }
    Ok(KnowledgeBase::open(path)?)
}

fn cmd_kb_stats(a: KbArgs) -> Result<()> {
    let kb = open_kb(&a.kb)?;
    let stats = kb.stats();
    if a.json {
        return print_json(&stats);
    }
    let mut out = io::stdout().lock();
    writeln!(out, "{:<10} {:>8}", "relation", "count")?;
    for r in Relation::ALL {
        writeln!(out, "{:<10} {:>8}", r.code(), stats.get(r))?;
    }
    writeln!(out, "{:<10} {:>8}", "total", stats.total)?;
    writeln!(out, "{:<10} {:>8}", "average", stats.average)?;
    writeln!(out, "{:<10} {:>8}", "posts", kb.post_count())?;
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let kb = Arc::new(open_kb(&a.kb)?);
    if a.session.join(miko_annotation::service::POOL_FILE).exists() {
        bail!("session {} already has a pool", a.session.display());
    }
    let pool = sample_pool(&kb, a.n, a.seed)?;
    AnnotationService::create(&a.session, kb, &pool, ServiceConfig::default())?;
    info!(posts = pool.post_ids.len(), "session created");
    print_json(&serde_json::json!({"session": a.session, "seed": pool.seed, "posts": pool.post_ids.len()}))
}

fn open_session(a: &SessionArgs, allowlist: Option<Vec<String>>) -> Result<Arc<AnnotationService>> {
    let kb = Arc::new(open_kb(&a.kb)?);
    let cfg = ServiceConfig {
        allowlist: allowlist.map(|v| v.into_iter().collect()),
        agreement: match a.agreement {
            AgreementArg::Mean => Agreement::Mean,
            AgreementArg::Majority => Agreement::Majority,
        },
        ..Default::default()
    };
    Ok(Arc::new(AnnotationService::open(&a.session, kb, cfg)?))
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let svc = open_session(&a.session, a.allowlist)?;
    let http = HttpConfig {
        ui_dir: a.ui_dir,
        image_root: a.image_root,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(miko_annotation::serve(a.addr, svc, http))?;
    Ok(())
}

fn cmd_aggregate(a: AggregateArgs) -> Result<()> {
    let svc = open_session(&a.session, None)?;
    if let Some(path) = &a.typicality_csv {
        let mut out = create_file(path)?;
        svc.write_typicality_csv(&mut out)?;
        out.flush()?;
    }
    print_json(&svc.aggregate())
}

fn cmd_export_benchmark(a: ExportBenchmarkArgs) -> Result<()> {
    let svc = open_session(&a.session, None)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    print_json(&svc.export_benchmark(&a.out)?)
}

fn cmd_eval(a: EvalArgs, cfg: &Config) -> Result<()> {
    let benchmark = eval::load_benchmark(&a.benchmark)?;
    let candidates = eval::load_candidates(&a.candidates)?;
    let gw = gateway(&a.backend, cfg, false, true)?;
    let opts = EvalOptions {
        missing: match a.missing {
            MissingArg::Skip => MissingCandidates::Skip,
            MissingArg::Zero => MissingCandidates::Zero,
        },
        micro: a.micro,
        prefixes: prompt_kit(cfg)?.prefixes().clone(),
    };
    let report = eval::evaluate(&candidates, &benchmark, &gw, &opts)?;
    if let Some(path) = &a.out {
        let mut out = create_file(path)?;
        report.write_csv(&mut out)?;
        out.flush()?;
    }
    print_json(&report)
}

fn cmd_export_instructions(a: ExportInstructionsArgs, cfg: &Config) -> Result<()> {
    let kb = open_kb(&a.kb)?;
    let posts = if a.posts.is_empty() { kb.post_ids() } else { a.posts };
    let mut buf = Vec::new();
    let n = eval::export_instructions(&kb, &prompt_kit(cfg)?, &posts, &mut buf)?;
    let mut out = create_file(&a.out)?;
    out.write_all(&buf)?;
    out.flush()?;
    print_json(&serde_json::json!({"conversations": n, "out": a.out}))
}

fn cmd_augment(a: AugmentArgs, strict: bool) -> Result<()> {
    let posts = load_posts(&a.corpus, Dataset::Generic, strict)?;
    let kb = open_kb(&a.kb)?;
    let opts = AugmentOptions {
        separator: a.separator,
        on_missing: match a.on_missing {
            OnMissingArg::Skip => MissingPolicy::Skip,
            OnMissingArg::Error => MissingPolicy::Error,
        },
    };
    let (rows, manifest) = eval::augment(&posts, &kb, a.variant, &opts)?;
    let mut out = create_file(&a.out)?;
    for row in &rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    fs::write(a.out.with_extension("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    print_json(&manifest)
}

/// One label per line: a bare integer, or an object with `label`/`pred` and optionally `id`/`post_id`.
fn read_labels(path: &Path, keys: &[&str]) -> Result<Vec<(Option<String>, i64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |reason: &str| usage(format!("{}:{}: {reason}", path.display(), i + 1));
        let v: Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
        let (id, label) = match &v {
            Value::Number(_) => (None, v.as_i64()),
            Value::Object(o) => (
                o.get("id").or_else(|| o.get("post_id")).and_then(|x| x.as_str()).map(String::from),
                keys.iter().find_map(|k| o.get(*k)).and_then(Value::as_i64),
            ),
            _ => (None, None),
        };
        out.push((id, label.ok_or_else(|| bad("no integer label"))?));
    }
    Ok(out)
}

fn align(golds: Vec<(Option<String>, i64)>, preds: Vec<(Option<String>, i64)>) -> Result<(Vec<i64>, Vec<i64>)> {
    let all_ids = golds.iter().chain(&preds).all(|(id, _)| id.is_some());
    if !all_ids {
        return Ok((golds.into_iter().map(|g| g.1).collect(), preds.into_iter().map(|p| p.1).collect()));
    }
    let by_id: HashMap<String, i64> = preds.into_iter().map(|(id, v)| (id.unwrap_or_default(), v)).collect();
    let mut g = Vec::with_capacity(golds.len());
    let mut p = Vec::with_capacity(golds.len());
    for (id, v) in golds {
        let id = id.unwrap_or_default();
        let pred = by_id.get(&id).ok_or_else(|| usage(format!("no prediction for `{id}`")))?;
        g.push(v);
        p.push(*pred);
    }
    if by_id.len() != g.len() {
        return Err(usage(format!("{} predictions for {} gold labels", by_id.len(), g.len())));
    }
    Ok((g, p))
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    let golds = read_labels(&a.gold, &["label", "gold"])?;
    let preds = read_labels(&a.pred, &["pred", "prediction", "label"])?;
    let (g, p) = align(golds, preds)?;
    let m = eval::classification_metrics(&g, &p).map_err(|e| usage(e.to_string()))?;
    print_json(&m)
}
