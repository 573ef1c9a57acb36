//! Command-line front end.
//!
//! Every flag can also come from a JSON config file (`--config run.json`);
//! flags given on the command line take precedence.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::embedding::{Embedder, EmbedderBackend, DEFAULT_HASH_DIM};
use crate::error::{MmsError, Result};
use crate::eval::locomo::load_locomo;
use crate::eval::report::EvalReport;
use crate::eval::runner::{
    ablation_matrix, build_store, evaluate_records, evaluate_store, extract_records,
    naive_rag_config, naive_rag_records, run_ablation, run_metadata, run_overhead, run_topn_sweep,
    Backends, RunOptions, DEFAULT_SWEEP,
};
use crate::extraction::{Extractor, ExtractorBackend};
use crate::generation::{Answerer, ChatBackend};
use crate::model::{compose_retrieval_unit, UnitComposition, DEFAULT_ROUND_WINDOW};
use crate::retrieval::{assemble_context, retrieve, DEFAULT_TOP_K};
use crate::store::{EmbeddingStrategy, MemoryStore, StoreConfig};

#[derive(Debug, Parser)]
#[command(
    name = "mms",
    version,
    about = "Multiple-memory store for dialogue agents",
    args_override_self = true
)]
struct Cli {
    /// JSON file whose keys are flag names; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (0 = one per core). Output order does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and save a memory store from a LoCoMo-format file.
    Ingest(IngestArgs),
    /// Print the top-k memories for a question.
    Retrieve(RetrieveArgs),
    /// Answer a question from the store.
    Answer(AnswerArgs),
    /// Evaluate a store against LoCoMo questions and emit a report.
    Eval(EvalArgs),
    /// Run the module ablation matrix.
    Ablate(AblateArgs),
    /// Evaluate several context sizes over one store.
    Sweep(SweepArgs),
    /// Measure extraction latency and token usage per round.
    Overhead(OverheadArgs),
    /// Dump a record with its fragments and memory units.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Mms,
    NaiveRag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExtractorChoice {
    Deterministic,
    Chat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbedderChoice {
    Hash,
    Api,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Fragment extractor.
    #[arg(long, value_enum, default_value = "deterministic")]
    backend: ExtractorChoice,
    /// Chat backend used by `--backend chat`.
    #[arg(long, default_value = "http")]
    extract_chat: ChatBackend,
    #[arg(long, default_value = "")]
    extract_model: String,
    /// Maximum turns per dialogue round.
    #[arg(long, default_value_t = DEFAULT_ROUND_WINDOW)]
    window: usize,
}

impl ExtractArgs {
    fn build(&self) -> Result<Extractor> {
        match self.backend {
            ExtractorChoice::Deterministic => Ok(Extractor::deterministic()),
            ExtractorChoice::Chat => Extractor::chat(
                ExtractorBackend::chat_model(&self.extract_model),
                self.extract_chat.build()?,
            ),
        }
    }
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long, value_enum, default_value = "hash")]
    embedder: EmbedderChoice,
    /// Vector size; defaults to the store's, or 256 for new stores.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value = "")]
    embed_model: String,
}

impl EmbedArgs {
    fn build(&self, store_dim: Option<usize>) -> Result<Box<dyn Embedder>> {
        let dim = self.dim.or(store_dim).unwrap_or(DEFAULT_HASH_DIM);
        match self.embedder {
            EmbedderChoice::Hash => EmbedderBackend::hash(dim),
            EmbedderChoice::Api => EmbedderBackend::api(&self.embed_model, dim),
        }
        .build()
    }
}

#[derive(Debug, Args)]
struct ChatArgs {
    /// Answering backend: echo-mock, extractive-mock, fixed-mock:<text> or http.
    #[arg(long, default_value = "extractive-mock")]
    chat: ChatBackend,
    #[arg(long, default_value = "")]
    answer_model: String,
    /// Context budget in estimated tokens.
    #[arg(long)]
    budget: Option<usize>,
}

impl ChatArgs {
    fn build(&self) -> Result<Answerer> {
        Ok(Answerer::new(self.chat.build()?).with_model(&self.answer_model))
    }
}

#[derive(Debug, Args)]
struct StoreLayoutArgs {
    #[arg(long, value_enum, default_value = "mms")]
    method: Method,
    #[arg(long, default_value = "unit-concat")]
    strategy: EmbeddingStrategy,
    /// Blocks of the retrieval unit, e.g. key+short+cog+epi.
    #[arg(long)]
    retrieval_comp: Option<UnitComposition>,
    /// Blocks of the contextual unit, e.g. key+short+cog+sem.
    #[arg(long)]
    contextual_comp: Option<UnitComposition>,
}

impl StoreLayoutArgs {
    fn config(&self, dim: usize) -> StoreConfig {
        match self.method {
            Method::NaiveRag => naive_rag_config(dim),
            Method::Mms => StoreConfig::new(dim)
                .with_strategy(self.strategy)
                .with_compositions(
                    self.retrieval_comp.unwrap_or(UnitComposition::RETRIEVAL),
                    self.contextual_comp.unwrap_or(UnitComposition::CONTEXTUAL),
                ),
        }
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    store: PathBuf,
    #[command(flatten)]
    layout: StoreLayoutArgs,
    #[command(flatten)]
    extract: ExtractArgs,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    k: usize,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Debug, Args)]
struct AnswerArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    k: usize,
    /// Also print the context handed to the model.
    #[arg(long)]
    show_context: bool,
    #[command(flatten)]
    chat: ChatArgs,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Prebuilt store to evaluate.
    #[arg(long)]
    store: PathBuf,
    /// LoCoMo-format file with the questions.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    k: usize,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the JSON report here as well.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    chat: ChatArgs,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    k: usize,
    #[arg(long, default_value = "unit-concat")]
    strategy: EmbeddingStrategy,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write the JSON result here as well.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    extract: ExtractArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    #[command(flatten)]
    chat: ChatArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Context sizes to try.
    #[arg(long = "n", value_delimiter = ',', default_values_t = DEFAULT_SWEEP)]
    n_values: Vec<usize>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[command(flatten)]
    chat: ChatArgs,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Debug, Args)]
struct OverheadArgs {
    #[arg(long)]
    input: PathBuf,
    /// Only measure the first N rounds.
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    extract: ExtractArgs,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    store: PathBuf,
    /// Record id or round id; lists all records when omitted.
    #[arg(long)]
    record: Option<String>,
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Parse `argv` and run the command. Returns the process exit code:
/// 0 on success, 1 on usage errors, 2 on runtime errors.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(argv) => argv,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{rendered}")
            } else {
                write!(out, "{rendered}")
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

/// Pull `--config FILE` out of argv and splice the file's flags in right
/// after the subcommand, so that explicit flags come later and win.
fn expand_config(mut argv: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let mut path = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            if i + 1 >= argv.len() {
                return Err("--config needs a file".into());
            }
            path = Some(PathBuf::from(argv.remove(i + 1)));
            argv.remove(i);
            continue;
        }
        if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
            argv.remove(i);
            continue;
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let flags = config_flags(&path)?;
    let at = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 2)
        .unwrap_or(argv.len());
    argv.splice(at..at, flags);
    Ok(argv)
}

fn config_flags(path: &Path) -> std::result::Result<Vec<OsString>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| format!("config {} is not valid JSON: {e}", path.display()))?;
    let Value::Object(map) = value else {
        return Err(format!("config {} must be a JSON object", path.display()));
    };
    let mut flags = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            other => Err(format!("config key {key:?}: unsupported value {other}")),
        };
        match &value {
            Value::Bool(true) => flags.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let joined = items
                    .iter()
                    .map(scalar)
                    .collect::<std::result::Result<Vec<_>, _>>()?
                    .join(",");
                flags.push(flag.into());
                flags.push(joined.into());
            }
            other => {
                flags.push(flag.into());
                flags.push(scalar(other)?.into());
            }
        }
    }
    Ok(flags)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let jobs = cli.jobs;
    match cli.command {
        Command::Ingest(args) => ingest(args, jobs, out),
        Command::Retrieve(args) => retrieve_cmd(args, out),
        Command::Answer(args) => answer_cmd(args, out),
        Command::Eval(args) => eval_cmd(args, jobs, out),
        Command::Ablate(args) => ablate_cmd(args, jobs, out),
        Command::Sweep(args) => sweep_cmd(args, jobs, out),
        Command::Overhead(args) => overhead_cmd(args, out),
        Command::Inspect(args) => inspect_cmd(args, out),
    }
}

fn ingest(args: IngestArgs, jobs: usize, out: &mut dyn Write) -> Result<()> {
    let corpus = load_locomo(&args.input, args.extract.window)?;
    let embedder = args.embed.build(None)?;
    let config = args.layout.config(embedder.dim());
    let records = match args.layout.method {
        Method::Mms => extract_records(&corpus.rounds, &args.extract.build()?, jobs)?,
        Method::NaiveRag => naive_rag_records(&corpus.rounds),
    };
    let store = build_store(&records, config, embedder.as_ref(), jobs)?;
    store.save(&args.store)?;
    writeln!(
        out,
        "ingested {} rounds from {} conversations into {} ({} records, {})",
        corpus.rounds.len(),
        corpus.conversations.len(),
        args.store.display(),
        store.len(),
        embedder.describe()
    )?;
    Ok(())
}

fn open_store(dir: &Path, embed: &EmbedArgs) -> Result<(MemoryStore, Box<dyn Embedder>)> {
    let store = MemoryStore::load(dir)?;
    let embedder = embed.build(Some(store.config().dim))?;
    if embedder.dim() != store.config().dim {
        return Err(MmsError::Dimension {
            expected: store.config().dim,
            actual: embedder.dim(),
        });
    }
    Ok((store, embedder))
}

fn retrieve_cmd(args: RetrieveArgs, out: &mut dyn Write) -> Result<()> {
    let (store, embedder) = open_store(&args.store, &args.embed)?;
    for (rank, hit) in retrieve(&store, &args.question, args.k, embedder.as_ref())?
        .iter()
        .enumerate()
    {
        let round = store
            .record(&hit.record_id)
            .map(|r| r.source.round_id.as_str())
            .unwrap_or("?");
        writeln!(
            out,
            "{}\t{:.6}\t{}\t{}",
            rank + 1,
            hit.score,
            hit.record_id,
            round
        )?;
    }
    Ok(())
}

fn answer_cmd(args: AnswerArgs, out: &mut dyn Write) -> Result<()> {
    let (store, embedder) = open_store(&args.store, &args.embed)?;
    let answerer = args.chat.build()?;
    let hits = retrieve(&store, &args.question, args.k, embedder.as_ref())?;
    let context = assemble_context(&hits, args.chat.budget);
    let answer = answerer.answer(&args.question, &context.text)?.0;
    if args.show_context {
        writeln!(out, "{}\n", context.text)?;
    }
    writeln!(out, "{answer}")?;
    Ok(())
}

fn no_extractor_metadata(store: &MemoryStore) -> &'static str {
    if store.config().retrieval_comp == UnitComposition::SHORT_ONLY {
        "naive-rag"
    } else {
        "mms"
    }
}

fn eval_cmd(args: EvalArgs, jobs: usize, out: &mut dyn Write) -> Result<()> {
    let (store, embedder) = open_store(&args.store, &args.embed)?;
    let corpus = load_locomo(&args.queries, DEFAULT_ROUND_WINDOW)?;
    let answerer = args.chat.build()?;
    let extractor = Extractor::deterministic();
    let backends = Backends {
        extractor: &extractor,
        embedder: embedder.as_ref(),
        answerer: &answerer,
    };
    let method = no_extractor_metadata(&store);
    let label = if method == "naive-rag" {
        "NaiveRAG"
    } else {
        "MMS"
    };
    let mut metadata = run_metadata(method, label, store.config(), backends, args.k);
    metadata.extractor = "prebuilt-store".into();
    let opts = RunOptions {
        k: args.k,
        jobs,
        context_budget: args.chat.budget,
    };
    let report = evaluate_store(&store, &corpus.queries, backends, opts, metadata)?;
    emit_report(&report, args.format, args.out.as_deref(), out)
}

fn emit_report(
    report: &EvalReport,
    format: Format,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let json = report.to_json()?;
    if let Some(path) = path {
        std::fs::write(path, &json)?;
    }
    match format {
        Format::Json => out.write_all(json.as_bytes())?,
        Format::Table => out.write_all(report.to_table().as_bytes())?,
    }
    Ok(())
}

fn ablate_cmd(args: AblateArgs, jobs: usize, out: &mut dyn Write) -> Result<()> {
    let corpus = load_locomo(&args.input, args.extract.window)?;
    let extractor = args.extract.build()?;
    let embedder = args.embed.build(None)?;
    let answerer = args.chat.build()?;
    let backends = Backends {
        extractor: &extractor,
        embedder: embedder.as_ref(),
        answerer: &answerer,
    };
    let opts = RunOptions {
        k: args.k,
        jobs,
        context_budget: args.chat.budget,
    };
    let base = StoreConfig::new(embedder.dim()).with_strategy(args.strategy);

    let records = extract_records(&corpus.rounds, &extractor, jobs)?;
    let mut reports = vec![evaluate_records(
        &records,
        &corpus.queries,
        base,
        "MMS",
        backends,
        opts,
    )?];
    reports.extend(run_ablation(
        &records,
        &corpus.queries,
        &ablation_matrix(),
        base,
        backends,
        opts,
    )?);

    let json = {
        let mut text = serde_json::to_string_pretty(&reports)?;
        text.push('\n');
        text
    };
    if let Some(path) = &args.out {
        std::fs::write(path, &json)?;
    }
    match args.format {
        Format::Json => out.write_all(json.as_bytes())?,
        Format::Table => {
            writeln!(
                out,
                "{:<26} {:>7} {:>7} {:>7} {:>7} {:>7}",
                "Run", "R@1", "R@3", "R@5", "F1", "BLEU-1"
            )?;
            for r in &reports {
                let s = &r.average;
                writeln!(
                    out,
                    "{:<26} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
                    r.metadata.label,
                    100.0 * s.recall_1,
                    100.0 * s.recall_3,
                    100.0 * s.recall_5,
                    100.0 * s.f1,
                    100.0 * s.bleu1
                )?;
            }
        }
    }
    Ok(())
}

fn sweep_cmd(args: SweepArgs, jobs: usize, out: &mut dyn Write) -> Result<()> {
    let (store, embedder) = open_store(&args.store, &args.embed)?;
    let corpus = load_locomo(&args.queries, DEFAULT_ROUND_WINDOW)?;
    let answerer = args.chat.build()?;
    let extractor = Extractor::deterministic();
    let backends = Backends {
        extractor: &extractor,
        embedder: embedder.as_ref(),
        answerer: &answerer,
    };
    let opts = RunOptions {
        k: DEFAULT_TOP_K,
        jobs,
        context_budget: args.chat.budget,
    };
    let rows = run_topn_sweep(&store, &corpus.queries, &args.n_values, backends, opts)?;
    match args.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?,
        Format::Table => {
            writeln!(
                out,
                "{:>3} {:>7} {:>7} {:>9}",
                "n", "F1", "BLEU-1", "coverage"
            )?;
            for r in &rows {
                writeln!(
                    out,
                    "{:>3} {:>7.2} {:>7.2} {:>9.4}",
                    r.n,
                    100.0 * r.f1,
                    100.0 * r.bleu1,
                    r.gold_coverage
                )?;
            }
        }
    }
    Ok(())
}

fn overhead_cmd(args: OverheadArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load_locomo(&args.input, args.extract.window)?;
    let extractor = args.extract.build()?;
    let rounds = match args.limit {
        Some(n) => &corpus.rounds[..n.min(corpus.rounds.len())],
        None => &corpus.rounds[..],
    };
    let summary = run_overhead(rounds, &extractor)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn inspect_cmd(args: InspectArgs, out: &mut dyn Write) -> Result<()> {
    let store = MemoryStore::load(&args.store)?;
    let Some(wanted) = args.record else {
        for record in store.records() {
            writeln!(
                out,
                "{}\t{}\t{} turns",
                record.record_id,
                record.source.round_id,
                record.source.turns.len()
            )?;
        }
        return Ok(());
    };
    let record = store
        .record(&wanted)
        .or_else(|| store.records().find(|r| r.source.round_id == wanted))
        .ok_or_else(|| MmsError::MissingRecord(wanted.clone()))?;
    let retrieval = compose_retrieval_unit(record, &store.config().retrieval_comp)?;
    let contextual = store
        .contextual_unit(&record.record_id)
        .ok_or_else(|| MmsError::MissingRecord(record.record_id.clone()))?;
    let dump = serde_json::json!({
        "record_id": record.record_id,
        "round_id": record.source.round_id,
        "session_id": record.source.session_id,
        "timestamp": record.source.timestamp,
        "fragments": record.fragments,
        "retrieval_unit": retrieval.render(),
        "contextual_unit": contextual.render(),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&dump)?)?;
    Ok(())
}
