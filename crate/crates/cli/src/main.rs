//! `ttlqa`: annotate passages, generate synthetic pairs, index, pretrain,
//! run test-time learning and score predictions.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error.

mod config;
mod output;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ttlqa::annotation::{
    heuristic_annotate, load_annotations, load_squad_dataset, save_annotations, write_squad_dataset, Corpus,
};
use ttlqa::bench::planted_corpus;
use ttlqa::eval::{evaluate, load_predictions, save_predictions, Aggregate, EvalReport};
use ttlqa::qgen::{assemble_training_set, parse_methods, write_pairs, AssemblyConfig, Method, QaOrder};
use ttlqa::retrieval::{build_index, Index, DEFAULT_STOPWORDS};
use ttlqa::spanmodel::{pretrain, save_checkpoint, ModelConfig, PretrainConfig};
use ttlqa::ttl::{predictions_map, prepare_with_index, run, Init, Mode, RunRecord, TtlConfig};

use output::{write_atomic, write_json, RunManifest};

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }

    pub fn code(&self) -> u8 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ttlqa::Error> for CliError {
    fn from(e: ttlqa::Error) -> Self {
        use ttlqa::Error::*;
        let message = e.to_string();
        match e {
            Io { .. } | Parse { .. } | Config(_) | CheckpointMismatch(_) | BadCheckpoint(_) | BadIndex(_) => {
                CliError::usage(message)
            }
            _ => CliError::data(message),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "ttlqa",
    version,
    about = "Test-time learning for extractive question answering"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate raw text or a SQuAD file with the built-in heuristics.
    Annotate(AnnotateArgs),
    /// Generate synthetic question/answer pairs for every passage.
    Generate(GenerateArgs),
    /// Build a BM25 index over annotated passages.
    Index(IndexArgs),
    /// Pretrain the span model on synthetic pairs and save a checkpoint.
    Pretrain(PretrainArgs),
    /// Run test-time learning over a dataset and score it.
    Ttl(TtlArgs),
    /// Score a predictions file against a dataset.
    Eval(EvalArgs),
    /// Write the planted-fact benchmark as a dataset and annotation file.
    BenchData(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    /// `.json` files are SQuAD, anything else raw text.
    Auto,
    Squad,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnnotateMode {
    Heuristic,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    format: InputFormat,
    #[arg(long, value_enum, default_value = "heuristic")]
    mode: AnnotateMode,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Comma-separated generators, e.g. `dep_parse,qa_srl`.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, default_value_t = 4000)]
    qa_cap: usize,
    #[arg(long, default_value_t = 1000)]
    per_method_quota: usize,
    /// `random` or a block order such as `qa_srl>template>dep_parse`.
    #[arg(long, default_value = "random")]
    order: QaOrder,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value_t = DEFAULT_STOPWORDS)]
    stopwords: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// TOML file with pretraining settings; its keys win over flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    qa_cap: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TtlArgs {
    /// SQuAD-format dataset with the questions to answer.
    #[arg(long)]
    dataset: PathBuf,
    /// Interchange annotations replacing the heuristic ones, matched by id.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Prebuilt BM25 index for neighbor modes.
    #[arg(long)]
    index: Option<PathBuf>,
    /// TOML run configuration; its keys win over flags. `[[sweep]]`
    /// entries each define one run on top of it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    qa_cap: Option<usize>,
    #[arg(long)]
    per_method_quota: Option<usize>,
    #[arg(long)]
    order: Option<QaOrder>,
    /// `default` or a checkpoint path.
    #[arg(long)]
    init: Option<Init>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Also write the per-question report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = ttlqa::bench::DEFAULT_CONTEXTS)]
    contexts: usize,
    #[arg(long, default_value_t = 1)]
    people: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `dataset.json` and `annotations.json`.
    #[arg(long)]
    out: PathBuf,
}

fn load_dataset(dataset: &Path, annotations: Option<&Path>) -> CliResult<Corpus> {
    let mut corpus = load_squad_dataset(dataset)?;
    if let Some(path) = annotations {
        corpus.attach_annotations(load_annotations(path)?)?;
    }
    Ok(corpus)
}

fn cmd_annotate(a: &AnnotateArgs) -> CliResult<()> {
    let AnnotateMode::Heuristic = a.mode;
    let squad = match a.format {
        InputFormat::Squad => true,
        InputFormat::Text => false,
        InputFormat::Auto => a.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")),
    };
    let contexts = if squad {
        load_squad_dataset(&a.input)?.contexts
    } else {
        let raw = fs::read_to_string(&a.input).map_err(|e| CliError::usage(format!("{}: {e}", a.input.display())))?;
        let paragraphs: Vec<&str> = raw.split("\n\n").map(str::trim).filter(|p| !p.is_empty()).collect();
        paragraphs
            .iter()
            .enumerate()
            .map(|(i, p)| heuristic_annotate(&format!("p{i}"), p))
            .collect::<Result<Vec<_>, _>>()?
    };
    if contexts.is_empty() {
        return Err(CliError::data(format!("{}: no passages", a.input.display())));
    }
    save_annotations(&a.out, &contexts)?;
    eprintln!("annotated {} passages", contexts.len());
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let contexts = load_annotations(&a.annotations)?;
    let methods = match &a.methods {
        Some(list) => parse_methods(list)?,
        None => Method::DEFAULT.to_vec(),
    };
    let cfg = AssemblyConfig {
        methods,
        cap: a.qa_cap,
        per_method_quota: a.per_method_quota,
        order: a.order.clone(),
        seed: a.seed,
    };
    let mut pairs = Vec::new();
    for ctx in &contexts {
        match assemble_training_set(ctx, &cfg) {
            Ok(p) => pairs.extend(p),
            Err(ttlqa::Error::NoTrainablePairs(id)) => log::warn!("no pairs for `{id}`"),
            Err(e) => return Err(e.into()),
        }
    }
    if pairs.is_empty() {
        return Err(CliError::data("no pairs generated from any passage"));
    }
    write_pairs(&a.out, &pairs)?;
    eprintln!("wrote {} pairs from {} passages", pairs.len(), contexts.len());
    Ok(())
}

fn cmd_index(a: &IndexArgs) -> CliResult<()> {
    let contexts = load_annotations(&a.annotations)?;
    let index = build_index(&contexts, a.stopwords)?;
    index.save(&a.out)?;
    eprintln!("indexed {} passages, {} terms", index.len(), index.vocabulary().count());
    Ok(())
}

fn cmd_pretrain(a: &PretrainArgs) -> CliResult<()> {
    let mut flags = PretrainConfig::default();
    if let Some(v) = a.steps {
        flags.steps = v;
    }
    if let Some(v) = a.batch {
        flags.batch = v;
    }
    if let Some(v) = a.lr {
        flags.lr = v;
    }
    if let Some(v) = a.qa_cap {
        flags.qa_cap = v;
    }
    if let Some(v) = a.dim {
        flags.model = ModelConfig { d: v, ..flags.model };
    }
    if let Some(v) = a.seed {
        flags.seed = v;
    }
    let cfg: PretrainConfig = match &a.config {
        Some(path) => config::resolve(&flags, &[&config::load_table(path)?], &path.display().to_string())?,
        None => flags,
    };
    let mut inputs: Vec<&Path> = vec![&a.annotations];
    inputs.extend(a.config.as_deref());
    let snapshot = serde_json::to_value(&cfg).expect("config serializes");
    let mut manifest = RunManifest::begin("pretrain", cfg.seed, snapshot, &inputs)?;

    let contexts = load_annotations(&a.annotations)?;
    let clock = Instant::now();
    let (model, optim, pairs) = pretrain(&contexts, &[], &cfg)?;
    save_checkpoint(&a.out, &model, Some(&optim))?;
    manifest.record(&a.out)?;
    manifest.finish(&sidecar(&a.out, "manifest.json"))?;
    eprintln!(
        "pretrained on {} pairs for {} steps in {:.1?}; checkpoint {}",
        pairs.len(),
        cfg.steps,
        clock.elapsed(),
        a.out.display()
    );
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

fn ttl_flags(a: &TtlArgs) -> TtlConfig {
    let mut cfg = TtlConfig::default();
    if let Some(v) = a.mode {
        cfg.mode = v;
    }
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if a.steps.is_some() {
        cfg.steps = a.steps;
    }
    if let Some(v) = a.batch {
        cfg.batch = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.qa_cap {
        cfg.qa_cap = v;
    }
    if let Some(v) = a.per_method_quota {
        cfg.per_method_quota = v;
    }
    if let Some(v) = &a.order {
        cfg.order = v.clone();
    }
    if let Some(v) = &a.init {
        cfg.init = v.clone();
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    cfg
}

fn ttl_configs(a: &TtlArgs) -> CliResult<Vec<TtlConfig>> {
    let flags = ttl_flags(a);
    let Some(path) = &a.config else {
        flags.validate()?;
        return Ok(vec![flags]);
    };
    let origin = path.display().to_string();
    let (base, sweep) = config::split_sweep(config::load_table(path)?)?;
    let configs: Vec<TtlConfig> = if sweep.is_empty() {
        vec![config::resolve(&flags, &[&base], &origin)?]
    } else {
        sweep
            .iter()
            .enumerate()
            .map(|(i, entry)| config::resolve(&flags, &[&base, entry], &format!("{origin} sweep {i}")))
            .collect::<CliResult<_>>()?
    };
    for cfg in &configs {
        cfg.validate()?;
    }
    Ok(configs)
}

#[derive(Serialize)]
struct MacroScores {
    exact_match: f64,
    f1: f64,
}

impl MacroScores {
    fn of(report: &EvalReport) -> Self {
        let n = report.by_context.len().max(1) as f64;
        MacroScores {
            exact_match: report.by_context.values().map(|a| a.exact_match).sum::<f64>() / n,
            f1: report.by_context.values().map(|a| a.f1).sum::<f64>() / n,
        }
    }
}

#[derive(Serialize)]
struct RunResult {
    run: usize,
    config: TtlConfig,
    overall: Aggregate,
    #[serde(rename = "macro")]
    macro_avg: MacroScores,
    records: Vec<RunRecord>,
}

fn csv_rows(results: &[RunResult]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::data(format!("csv: {e}"));
    w.write_record([
        "run", "mode", "k", "steps", "batch", "lr", "qa_cap", "order", "init", "seed", "scope", "metric", "value",
    ])
    .map_err(fail)?;
    for r in results {
        let c = &r.config;
        let init = match &c.init {
            Init::Default => "default".to_string(),
            Init::Checkpoint(p) => p.display().to_string(),
        };
        let fixed = [
            r.run.to_string(),
            c.mode.to_string(),
            c.k.to_string(),
            c.steps().to_string(),
            c.batch.to_string(),
            c.lr.to_string(),
            c.qa_cap.to_string(),
            c.order.to_string(),
            init,
            c.seed.to_string(),
        ];
        let mut rows: Vec<(String, &str, String)> = vec![
            ("overall".into(), "em", r.overall.em_percent().to_string()),
            ("overall".into(), "f1", r.overall.f1_percent().to_string()),
            ("overall".into(), "questions", r.overall.count.to_string()),
            ("macro".into(), "em", (100.0 * r.macro_avg.exact_match).to_string()),
            ("macro".into(), "f1", (100.0 * r.macro_avg.f1).to_string()),
        ];
        for rec in &r.records {
            rows.push((rec.context_id.clone(), "pairs", rec.pairs.to_string()));
            rows.push((rec.context_id.clone(), "steps", rec.steps.to_string()));
            if let Some(loss) = rec.final_loss() {
                rows.push((rec.context_id.clone(), "final_loss", loss.to_string()));
            }
        }
        for (scope, metric, value) in rows {
            let mut record: Vec<String> = fixed.to_vec();
            record.extend([scope, metric.to_string(), value]);
            w.write_record(&record).map_err(fail)?;
        }
    }
    w.into_inner().map_err(|e| CliError::data(format!("csv: {e}")))
}

fn cmd_ttl(a: &TtlArgs) -> CliResult<()> {
    let configs = ttl_configs(a)?;
    let mut inputs: Vec<&Path> = vec![&a.dataset];
    inputs.extend(a.annotations.as_deref());
    inputs.extend(a.index.as_deref());
    inputs.extend(a.config.as_deref());
    let checkpoints: BTreeSet<&Path> = configs
        .iter()
        .filter_map(|c| match &c.init {
            Init::Checkpoint(p) => Some(p.as_path()),
            Init::Default => None,
        })
        .collect();
    inputs.extend(checkpoints);
    let snapshot = serde_json::to_value(&configs).expect("configs serialize");
    let mut manifest = RunManifest::begin("ttl", configs[0].seed, snapshot, &inputs)?;

    let corpus = load_dataset(&a.dataset, a.annotations.as_deref())?;
    if corpus.questions.is_empty() {
        return Err(CliError::data(format!("{}: no questions", a.dataset.display())));
    }
    let index = a.index.as_deref().map(Index::load).transpose()?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::usage(format!("{}: {e}", a.out.display())))?;

    let mut results = Vec::new();
    let mut summary = String::new();
    let mut written = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        let clock = Instant::now();
        let prep = prepare_with_index(&corpus, cfg, index.clone())?;
        let records = run(&prep)?;
        let predictions = predictions_map(&records);
        let report = evaluate(&predictions, &corpus)?;
        let macro_avg = MacroScores::of(&report);
        let line = format!(
            "run {i}: mode={} k={} steps={} batch={} order={} seed={}  EM {:.2}  F1 {:.2}  macro EM {:.2}  macro F1 {:.2}  ({:.1?})",
            cfg.mode,
            cfg.k,
            cfg.steps(),
            cfg.batch,
            cfg.order,
            cfg.seed,
            report.overall.em_percent(),
            report.overall.f1_percent(),
            100.0 * macro_avg.exact_match,
            100.0 * macro_avg.f1,
            clock.elapsed()
        );
        println!("{line}");
        summary.push_str(&line);
        summary.push('\n');
        let pred_path = if configs.len() == 1 {
            a.out.join("predictions.json")
        } else {
            a.out.join(format!("predictions_{i}.json"))
        };
        save_predictions(&pred_path, &predictions)?;
        written.push(pred_path);
        results.push(RunResult {
            run: i,
            config: cfg.clone(),
            overall: report.overall,
            macro_avg,
            records,
        });
    }
    let results_path = a.out.join("results.json");
    write_json(&results_path, &serde_json::json!({ "runs": results }))?;
    let csv_path = a.out.join("results.csv");
    write_atomic(&csv_path, &csv_rows(&results)?)?;
    let summary_path = a.out.join("summary.txt");
    write_atomic(&summary_path, summary.as_bytes())?;
    for path in [results_path, csv_path, summary_path].iter().chain(&written) {
        manifest.record(path)?;
    }
    manifest.finish(&a.out.join("manifest.json"))
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let predictions = load_predictions(&a.predictions)?;
    let corpus = load_squad_dataset(&a.dataset)?;
    if predictions.is_empty() {
        return Err(CliError::data(format!("{}: no predictions", a.predictions.display())));
    }
    let report = evaluate(&predictions, &corpus)?;
    print!("{}", report.table());
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let corpus = planted_corpus(a.contexts, a.people, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::usage(format!("{}: {e}", a.out.display())))?;
    write_squad_dataset(a.out.join("dataset.json"), &corpus, "planted")?;
    save_annotations(a.out.join("annotations.json"), &corpus.contexts)?;
    let by_context: BTreeMap<&str, usize> = corpus
        .contexts
        .iter()
        .map(|c| (c.id.as_str(), corpus.questions_for(&c.id).count()))
        .collect();
    eprintln!(
        "wrote {} passages and {} questions to {}",
        by_context.len(),
        corpus.questions.len(),
        a.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match &cli.command {
        Command::Annotate(a) => cmd_annotate(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Index(a) => cmd_index(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Ttl(a) => cmd_ttl(a),
        Command::Eval(a) => cmd_eval(a),
        Command::BenchData(a) => cmd_bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
