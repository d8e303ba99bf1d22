//! `factcheck` command-line interface.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use factcheck::corpus::{ChunkConfig, Corpus, SourceDocument};
use factcheck::decomposition::decompose;
use factcheck::evaluation::{
    load_liar, read_predictions, sample_records, run_benchmark, write_predictions, MetricsReport, RunInfo,
    UncertainMapping,
};
use factcheck::extraction::ClaimExtractor;
use factcheck::llm::CassetteMode;
use factcheck::pipeline::{build_gateway, trace_read, Pipeline, PipelineConfig};
use factcheck::reporting::{render, ReportFormat};
use factcheck::retrieval::{HashEmbedder, HybridIndex, Bm25Params, Retriever, SearchParams};
use factcheck::types::Mode;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

const DEFAULT_TRACE_DIR: &str = ".factcheck/traces";

#[derive(Parser)]
#[command(name = "factcheck", version, about = "Evidence-grounded claim verification")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk source documents into a corpus file.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Build and query the hybrid index.
    #[command(subcommand)]
    Index(IndexCmd),
    /// List the checkable claims in a text.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        heuristics_only: bool,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Check every claim in a text and write one report per claim.
    Check(CheckArgs),
    /// Split one claim into atoms and a logical formula.
    Decompose {
        #[arg(long, conflicts_with = "input")]
        claim: Option<String>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Run the pipeline over a LIAR split and score it.
    Eval(EvalArgs),
    /// Inspect run logs.
    #[command(subcommand)]
    Trace(TraceCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Input is a `.jsonl` file of documents or a directory of `.txt` files.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 160)]
        chunk_size: usize,
        #[arg(long, default_value_t = 20)]
        overlap: usize,
    },
}

#[derive(Subcommand)]
enum IndexCmd {
    Build {
        corpus: PathBuf,
        dir: PathBuf,
    },
    Search {
        dir: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(short, long, default_value_t = 50)]
        k: usize,
        #[arg(short, long, default_value_t = 5)]
        m: usize,
        #[arg(long, default_value_t = 0.7)]
        lambda: f64,
    },
    Stats {
        dir: PathBuf,
    },
    Lookup {
        dir: PathBuf,
        passage_id: String,
    },
}

#[derive(Subcommand)]
enum TraceCmd {
    Show {
        run_id: String,
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Only events of this claim.
        #[arg(long)]
        claim: Option<String>,
    },
}

#[derive(Args, Clone, Default)]
struct GatewayArgs {
    #[arg(long)]
    cassette: Option<PathBuf>,
    #[arg(long)]
    cassette_mode: Option<CassetteMode>,
    /// JSON file of scripted model responses.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long, conflicts_with = "corpus")]
    index: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory for report files; reports go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "structured")]
    format: ReportFormat,
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    #[arg(long)]
    adaptive_threshold: Option<f64>,
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// LIAR directory holding `<split>.tsv`.
    #[arg(long, conflicts_with = "data")]
    liar_dir: Option<PathBuf>,
    /// A single LIAR TSV file.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    mode: Option<Mode>,
    /// `pessimistic`, `optimistic` or `both`.
    #[arg(long, default_value = "both")]
    mapping: String,
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for predictions.jsonl and metrics.json.
    #[arg(long)]
    out: PathBuf,
    /// Score an existing predictions file instead of running the pipeline.
    #[arg(long)]
    from_predictions: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    gateway: GatewayArgs,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    config.apply_process_env()?;
    Ok(config)
}

fn apply_gateway_args(config: &mut PipelineConfig, args: &GatewayArgs) {
    let g = &mut config.gateway;
    if let Some(c) = &args.cassette {
        g.cassette = Some(c.clone());
    }
    if let Some(m) = args.cassette_mode {
        g.cassette_mode = m;
    }
    if let Some(s) = &args.script {
        g.script = Some(s.clone());
    }
    if let Some(p) = args.parallelism {
        g.parallelism = p;
    }
}

fn apply_source_args(config: &mut PipelineConfig, args: &SourceArgs) {
    if let Some(i) = &args.index {
        config.index = Some(i.clone());
        config.corpus = None;
    }
    if let Some(c) = &args.corpus {
        config.corpus = Some(c.clone());
        config.index = None;
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) ends output quietly.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_documents(input: &Path) -> Result<Vec<SourceDocument>> {
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "txt"));
        paths.sort();
        return paths
            .iter()
            .map(|p| {
                let id = p.file_stem().unwrap_or_default().to_string_lossy().to_string();
                Ok(SourceDocument {
                    doc_id: id.clone(),
                    title: id,
                    url: None,
                    source_tier: Default::default(),
                    body: read_text(p)?,
                })
            })
            .collect();
    }
    read_text(input)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", input.display(), i + 1)))
        .collect()
}

fn corpus_cmd(cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Ingest { input, out, chunk_size, overlap } => {
            let docs = read_documents(&input)?;
            let corpus = Corpus::build(docs, ChunkConfig::new(chunk_size, overlap)?)?;
            corpus.save(&out)?;
            eprintln!("{} documents, {} passages -> {}", corpus.documents.len(), corpus.passages.len(), out.display());
        }
    }
    Ok(())
}

fn index_cmd(cmd: IndexCmd) -> Result<()> {
    match cmd {
        IndexCmd::Build { corpus, dir } => {
            let corpus = Corpus::load(&corpus).with_context(|| format!("loading {}", corpus.display()))?;
            let index = HybridIndex::build(&corpus, &HashEmbedder::default(), Bm25Params::default())?;
            index.save(&dir)?;
            print_json(&index.corpus_stats())?;
        }
        IndexCmd::Search { dir, query, k, m, lambda } => {
            let retriever = Retriever::new(HybridIndex::load(&dir)?, Arc::new(HashEmbedder::default()))?;
            let params = SearchParams { k, m, lambda, ..SearchParams::default() };
            params.validate()?;
            print_json(&retriever.retrieve(&query, &params)?)?;
        }
        IndexCmd::Stats { dir } => print_json(&HybridIndex::load(&dir)?.corpus_stats())?,
        IndexCmd::Lookup { dir, passage_id } => print_json(HybridIndex::load(&dir)?.lookup_passage(&passage_id)?)?,
    }
    Ok(())
}

fn extract_cmd(config: PipelineConfig, input: &Path, heuristics_only: bool) -> Result<()> {
    let gateway = build_gateway(&config.gateway)?;
    let mut cfg = config.extraction;
    cfg.heuristics_only |= heuristics_only;
    let (claims, trace) = ClaimExtractor::new(Some(&gateway), cfg).extract(&read_text(input)?);
    print_json(&json!({"claims": claims, "trace": trace}))
}

fn check_cmd(mut config: PipelineConfig, args: CheckArgs) -> Result<()> {
    apply_source_args(&mut config, &args.source);
    apply_gateway_args(&mut config, &args.gateway);
    if let Some(m) = args.mode {
        config.mode = m;
    }
    if args.adaptive_threshold.is_some() {
        config.adaptive_threshold = args.adaptive_threshold;
    }
    config.trace_dir = args.trace_dir.or(config.trace_dir).or_else(|| Some(DEFAULT_TRACE_DIR.into()));

    let pipeline = Pipeline::from_config(config)?;
    let output = pipeline.run(&read_text(&args.input)?)?;
    pipeline.save_cassette()?;

    let ext = match args.format {
        ReportFormat::Structured => "json",
        ReportFormat::HumanReadable => "txt",
    };
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut entries = Vec::new();
            for report in &output.reports {
                let file = format!("{}.{ext}", report.claim_id);
                std::fs::write(dir.join(&file), render(report, args.format))?;
                entries.push(json!({
                    "claim_id": report.claim_id,
                    "verdict": report.verdict,
                    "confidence": report.confidence,
                    "file": file,
                }));
            }
            let index = json!({"run_id": output.run_id, "mode": pipeline.config().mode, "reports": entries});
            std::fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)? + "\n")?;
        }
        None => {
            for report in &output.reports {
                emit(&render(report, args.format))?;
            }
        }
    }
    eprintln!("run {}: {} report(s)", output.run_id, output.reports.len());
    Ok(())
}

fn decompose_cmd(config: PipelineConfig, claim: Option<String>, input: Option<PathBuf>) -> Result<()> {
    let claim = match (claim, input) {
        (Some(c), _) => c,
        (None, Some(p)) => read_text(&p)?.trim().to_string(),
        (None, None) => bail!("pass --claim or --in"),
    };
    let gateway = build_gateway(&config.gateway)?;
    print_json(&decompose(&gateway, &claim))
}

fn parse_mappings(raw: &str) -> Result<Vec<UncertainMapping>> {
    if raw == "both" {
        return Ok(UncertainMapping::BOTH.to_vec());
    }
    Ok(vec![raw.parse().map_err(anyhow::Error::msg)?])
}

fn eval_cmd(mut config: PipelineConfig, args: EvalArgs) -> Result<()> {
    let mappings = parse_mappings(&args.mapping)?;
    std::fs::create_dir_all(&args.out)?;
    let (info, preds) = match &args.from_predictions {
        Some(path) => read_predictions(path)?,
        None => {
            apply_source_args(&mut config, &args.source);
            apply_gateway_args(&mut config, &args.gateway);
            let mode = args.mode.unwrap_or(config.mode);
            let data_path = match (&args.data, &args.liar_dir) {
                (Some(d), _) => d.clone(),
                (None, Some(dir)) => dir.join(format!("{}.tsv", args.split)),
                (None, None) => bail!("pass --data or --liar-dir"),
            };
            let data = load_liar(&data_path)?;
            for s in &data.skipped {
                log::warn!("{} line {}: {}", data_path.display(), s.line, s.reason);
            }
            let records = match args.sample {
                Some(n) => sample_records(&data.records, n, args.seed),
                None => data.records.clone(),
            };
            let pipeline = Pipeline::from_config(config)?;
            let preds = run_benchmark(&records, mode, |r| {
                let report = pipeline.check_statement(&r.id, &r.statement, mode);
                (report.verdict, report.confidence)
            });
            pipeline.save_cassette()?;
            let info = RunInfo {
                split: args.split.clone(),
                pipeline: mode,
                sample: args.sample,
                seed: args.sample.map(|_| args.seed),
                total_records: data.records.len(),
                skipped_lines: data.skipped.len(),
            };
            write_predictions(args.out.join("predictions.jsonl"), &info, &preds)?;
            (info, preds)
        }
    };
    let metrics = MetricsReport::compute(info, &preds, &mappings)?;
    metrics.save(args.out.join("metrics.json"))?;
    print_json(&metrics)
}

fn trace_cmd(config: PipelineConfig, cmd: TraceCmd) -> Result<()> {
    match cmd {
        TraceCmd::Show { run_id, trace_dir, claim } => {
            let dir = trace_dir.or(config.trace_dir).unwrap_or_else(|| DEFAULT_TRACE_DIR.into());
            for event in trace_read(&dir, &run_id)? {
                if claim.as_ref().is_some_and(|c| event.claim_id.as_ref() != Some(c)) {
                    continue;
                }
                emit(&(serde_json::to_string(&event)? + "\n"))?;
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Corpus(cmd) => corpus_cmd(cmd),
        Command::Index(cmd) => index_cmd(cmd),
        Command::Extract { input, heuristics_only, gateway } => {
            apply_gateway_args(&mut config, &gateway);
            extract_cmd(config, &input, heuristics_only)
        }
        Command::Check(args) => check_cmd(config, args),
        Command::Decompose { claim, input, gateway } => {
            apply_gateway_args(&mut config, &gateway);
            decompose_cmd(config, claim, input)
        }
        Command::Eval(args) => eval_cmd(config, args),
        Command::Trace(cmd) => trace_cmd(config, cmd),
    }
}
