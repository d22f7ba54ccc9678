//! `mwpaug` — batch augmentation for math word problem corpora.
//!
//! Subcommands: `augment` runs augmentation methods and builds combined
//! training sets, `validate` audits a corpus, `stats` recomputes set
//! sizes from an existing run directory.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error,
//! 3 transport error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use mwpaug_core::aug_icl::NumericModPolicy;
use mwpaug_core::aug_synonym::{self, LexiconError, SynonymLexicon};
use mwpaug_core::corpus::{self, CorpusFormat, LoadOutcome};
use mwpaug_core::llm_client::{
    mawps_template, svamp_template, Completer, HttpCompleter, LlmEndpointConfig, LlmError,
    MockLlm, PromptTemplate,
};
use mwpaug_core::pipeline::{
    AugmentConfig, Method, Pipeline, PipelineError, RunStats, V1Mode, Variant, STATS_COLUMNS,
};

#[derive(Parser)]
#[command(
    name = "mwpaug",
    version,
    about = "Batch augmentation for math word problem corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run augmentation methods and build combined training sets
    Augment(Box<AugmentArgs>),
    /// Audit a corpus: structure and answer-consistency checks
    Validate(ValidateArgs),
    /// Recompute set sizes from an existing run directory
    Stats(StatsArgs),
}

#[derive(Args)]
struct AugmentArgs {
    /// Input corpus file
    #[arg(long)]
    input: PathBuf,
    /// Input format: unified_jsonl, svamp_json, or mawps_json
    #[arg(long, default_value = "unified_jsonl")]
    format: String,
    /// Parent directory; outputs land in a run directory beneath it
    #[arg(long)]
    out_dir: PathBuf,
    /// Methods to run (comma separated): synonym, qr, reverse, icl
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Combined sets to build (comma separated): v1, v2, v3, v4
    #[arg(long, value_delimiter = ',')]
    combined: Vec<String>,
    /// Random seed; generated and printed when omitted
    #[arg(long)]
    seed: Option<u64>,
    /// Synonym lexicon: TSV file or dictionary-file directory
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Lexicon kind: tsv or wordnet
    #[arg(long, default_value = "tsv")]
    lexicon_kind: String,
    /// Mock completion spec (JSON file); excludes --llm-url
    #[arg(long)]
    mock_llm: Option<PathBuf>,
    /// Completions endpoint base URL (OpenAI-style /completions)
    #[arg(long)]
    llm_url: Option<String>,
    /// Model name sent to the endpoint
    #[arg(long)]
    llm_model: Option<String>,
    /// Sampling temperature for the endpoint
    #[arg(long)]
    temperature: Option<f64>,
    /// Completion token limit for the endpoint
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Per-request timeout in seconds
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Retries for failed endpoint calls
    #[arg(long)]
    llm_retries: Option<u32>,
    /// Concurrent in-flight endpoint requests
    #[arg(long)]
    llm_concurrency: Option<usize>,
    /// Rephrase exemplars: mawps, svamp, or a prompt file path
    #[arg(long)]
    prompt: Option<String>,
    /// Integer replacement range as "low,high" (default 2,100)
    #[arg(long)]
    int_range: Option<String>,
    /// Float replacement range as "low,high" (default 1.0,100.0)
    #[arg(long)]
    float_range: Option<String>,
    /// Decimal places on float replacements (default 1)
    #[arg(long)]
    float_decimals: Option<u32>,
    /// Redraw attempts for numeric modification (default 20)
    #[arg(long)]
    mod_retries: Option<u32>,
    /// Emit every reversal candidate instead of one per record
    #[arg(long)]
    reverse_all: bool,
    /// Combined V1 assembly: union (deduplicated) or concat
    #[arg(long, default_value = "union")]
    v1_mode: String,
    /// Worker threads (0 = one per logical CPU)
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Most words replaced per record by the synonym method
    #[arg(long, default_value_t = 3)]
    max_synonym_replacements: usize,
    /// Run directory name (default: run-<seed>-<unix time>)
    #[arg(long)]
    run_name: Option<String>,
    /// Dataset label for stats.tsv (default: input file stem)
    #[arg(long)]
    dataset_label: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Input corpus file
    #[arg(long)]
    input: PathBuf,
    /// Input format: unified_jsonl, svamp_json, or mawps_json
    #[arg(long, default_value = "unified_jsonl")]
    format: String,
    /// Write rejected records with reasons to this JSONL file
    #[arg(long)]
    rejects: Option<PathBuf>,
    /// Write the validated records as unified JSONL
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Run directory produced by `augment`
    #[arg(long)]
    run_dir: PathBuf,
}

/// Failure classified by exit code: 1 config, 2 data, 3 transport.
#[derive(Debug)]
enum CliError {
    Config(String),
    Data(String),
    Transport(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Transport(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Transport(m) => m,
        }
    }
}

fn config_err(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

fn data_err(message: impl Into<String>) -> CliError {
    CliError::Data(message.into())
}

fn classify_llm(e: LlmError) -> CliError {
    match e {
        LlmError::Config(_) | LlmError::Template(_) | LlmError::Io { .. } => {
            CliError::Config(e.to_string())
        }
        other => CliError::Transport(other.to_string()),
    }
}

fn classify_pipeline(e: PipelineError) -> CliError {
    match e {
        PipelineError::MissingResource { .. }
        | PipelineError::MissingInputSet { .. }
        | PipelineError::Config(_) => CliError::Config(e.to_string()),
        PipelineError::Llm(le) => classify_llm(le),
        other => CliError::Data(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Augment(args) => augment(*args),
        Command::Validate(args) => validate(args),
        Command::Stats(args) => stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn parse_format(name: &str) -> Result<CorpusFormat, CliError> {
    CorpusFormat::parse_name(name).ok_or_else(|| {
        config_err(format!(
            "unknown format `{name}`; expected unified_jsonl, svamp_json, or mawps_json"
        ))
    })
}

fn load_input(path: &Path, format: CorpusFormat) -> Result<LoadOutcome, CliError> {
    corpus::load_corpus(path, format).map_err(|e| data_err(e.to_string()))
}

fn parse_range<T: std::str::FromStr>(raw: &str, flag: &str) -> Result<(T, T), CliError> {
    let mut parts = raw.splitn(2, ',');
    let parse = |s: Option<&str>| -> Result<T, CliError> {
        s.map(str::trim)
            .filter(|s| !s.is_empty())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| config_err(format!("--{flag} expects \"low,high\", got `{raw}`")))
    };
    Ok((parse(parts.next())?, parse(parts.next())?))
}

fn write_rejects(path: &Path, rejects: &[corpus::Reject]) -> Result<(), CliError> {
    let mut buf = String::new();
    for reject in rejects {
        buf.push_str(&serde_json::to_string(reject).expect("rejects serialize"));
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))
}

fn resolve_prompt(spec: &str) -> Result<PromptTemplate, CliError> {
    match spec {
        "mawps" => Ok(mawps_template()),
        "svamp" => Ok(svamp_template()),
        path => {
            let rendered = fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read prompt file {path}: {e}")))?;
            let (template, _target) =
                PromptTemplate::from_rendered(&rendered).map_err(classify_llm)?;
            Ok(template)
        }
    }
}

fn augment(args: AugmentArgs) -> Result<(), CliError> {
    let format = parse_format(&args.format)?;

    let mut methods = Vec::new();
    for name in &args.methods {
        methods.push(Method::parse_name(name).ok_or_else(|| {
            config_err(format!(
                "unknown method `{name}`; expected synonym, qr, reverse, or icl"
            ))
        })?);
    }
    let mut variants = Vec::new();
    for name in &args.combined {
        variants.push(Variant::parse_name(name).ok_or_else(|| {
            config_err(format!("unknown combined set `{name}`; expected v1, v2, v3, or v4"))
        })?);
    }
    if methods.is_empty() && variants.is_empty() {
        return Err(config_err(
            "nothing to do: pass --methods and/or --combined",
        ));
    }
    let v1_mode = V1Mode::parse_name(&args.v1_mode)
        .ok_or_else(|| config_err(format!("unknown v1 mode `{}`; expected union or concat", args.v1_mode)))?;

    let needs_lexicon =
        methods.contains(&Method::Synonym) || variants.contains(&Variant::V2);
    let needs_llm = methods.contains(&Method::Icl)
        || variants.contains(&Variant::V3)
        || variants.contains(&Variant::V4);

    let lexicon: Option<SynonymLexicon> = match (&args.lexicon, needs_lexicon) {
        (Some(path), _) => {
            let loaded = match args.lexicon_kind.as_str() {
                "tsv" => aug_synonym::load_lexicon_tsv(path),
                "wordnet" => aug_synonym::load_lexicon_wordnet(path),
                other => {
                    return Err(config_err(format!(
                        "unknown lexicon kind `{other}`; expected tsv or wordnet"
                    )))
                }
            };
            Some(loaded.map_err(|e| match e {
                LexiconError::Io { .. } => config_err(e.to_string()),
                LexiconError::Malformed { .. } => data_err(e.to_string()),
            })?)
        }
        (None, true) => {
            return Err(config_err(
                "the synonym method and combined v2 require --lexicon",
            ))
        }
        (None, false) => None,
    };

    if args.mock_llm.is_some() && args.llm_url.is_some() {
        return Err(config_err("--mock-llm and --llm-url are mutually exclusive"));
    }
    let completer: Option<Box<dyn Completer>> = if let Some(path) = &args.mock_llm {
        Some(Box::new(MockLlm::from_spec_file(path).map_err(|e| config_err(e.to_string()))?))
    } else if let Some(url) = &args.llm_url {
        let mut endpoint = LlmEndpointConfig {
            base_url: url.clone(),
            ..LlmEndpointConfig::default()
        };
        if let Some(model) = &args.llm_model {
            endpoint.model_name = model.clone();
        }
        if let Some(t) = args.temperature {
            endpoint.temperature = t;
        }
        if let Some(n) = args.max_tokens {
            endpoint.max_tokens = n;
        }
        if let Some(secs) = args.timeout_secs {
            endpoint.timeout = Duration::from_secs(secs);
        }
        if let Some(n) = args.llm_retries {
            endpoint.max_retries = n;
        }
        if let Some(n) = args.llm_concurrency {
            endpoint.max_concurrent_requests = n;
        }
        Some(Box::new(HttpCompleter::new(endpoint).map_err(classify_llm)?))
    } else {
        None
    };
    if needs_llm && completer.is_none() {
        return Err(config_err(
            "the icl method and combined v3/v4 require --mock-llm or --llm-url",
        ));
    }

    let prompt_spec = args.prompt.clone().unwrap_or_else(|| {
        match format {
            CorpusFormat::SvampJson => "svamp",
            _ => "mawps",
        }
        .to_string()
    });
    let template = if needs_llm {
        Some(resolve_prompt(&prompt_spec)?)
    } else {
        None
    };

    let mut policy = NumericModPolicy::default();
    if let Some(raw) = &args.int_range {
        policy.int_range = parse_range(raw, "int-range")?;
    }
    if let Some(raw) = &args.float_range {
        policy.float_range = parse_range(raw, "float-range")?;
    }
    if let Some(d) = args.float_decimals {
        policy.float_decimals = d;
    }
    if let Some(r) = args.mod_retries {
        policy.max_retries = r;
    }
    policy.validate().map_err(|e| config_err(e.to_string()))?;

    let seed = match args.seed {
        Some(seed) => seed,
        None => {
            let seed = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0);
            eprintln!("using generated seed {seed} (pass --seed {seed} to reproduce)");
            seed
        }
    };

    let outcome = load_input(&args.input, format)?;
    if !outcome.rejects.is_empty() {
        eprintln!(
            "warning: {} of {} records rejected during load",
            outcome.rejects.len(),
            outcome.rejects.len() + outcome.records.len()
        );
    }
    if outcome.records.is_empty() {
        return Err(data_err("input contains no valid records"));
    }

    let run_name = args.run_name.clone().unwrap_or_else(|| {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("run-{seed}-{now}")
    });
    let run_dir = args.out_dir.join(&run_name);
    fs::create_dir_all(&run_dir)
        .map_err(|e| data_err(format!("cannot create {}: {e}", run_dir.display())))?;

    let dataset_label = args.dataset_label.clone().unwrap_or_else(|| {
        args.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into())
    });
    write_run_json(
        &run_dir,
        &args,
        format,
        &methods,
        &variants,
        seed,
        &prompt_spec,
        &policy,
        &dataset_label,
    )?;
    if !outcome.rejects.is_empty() {
        write_rejects(&run_dir.join("rejects.jsonl"), &outcome.rejects)?;
    }
    let config = AugmentConfig {
        seed,
        workers: args.workers,
        max_synonym_replacements: args.max_synonym_replacements,
        policy,
        reverse_all: args.reverse_all,
        v1_mode,
        dataset_label,
    };
    let mut pipeline = Pipeline::new(config);
    pipeline.lexicon = lexicon.as_ref();
    pipeline.template = template.as_ref();
    pipeline.llm = completer.as_deref();

    let stats = pipeline
        .run(&outcome.records, &methods, &variants, &run_dir)
        .map_err(classify_pipeline)?;

    print_summary(&run_dir, &stats);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn write_run_json(
    run_dir: &Path,
    args: &AugmentArgs,
    format: CorpusFormat,
    methods: &[Method],
    variants: &[Variant],
    seed: u64,
    prompt_spec: &str,
    policy: &NumericModPolicy,
    dataset_label: &str,
) -> Result<(), CliError> {
    let llm = if let Some(path) = &args.mock_llm {
        serde_json::json!({ "mock": path })
    } else if let Some(url) = &args.llm_url {
        serde_json::json!({
            "endpoint": url,
            "model": args.llm_model,
            "temperature": args.temperature,
            "max_tokens": args.max_tokens,
            "timeout_secs": args.timeout_secs,
            "retries": args.llm_retries,
            "concurrency": args.llm_concurrency,
        })
    } else {
        serde_json::Value::Null
    };
    let echo = serde_json::json!({
        "command": "augment",
        "input": args.input,
        "format": format.name(),
        "methods": methods.iter().map(|m| m.label()).collect::<Vec<_>>(),
        "combined": variants.iter().map(|v| v.label()).collect::<Vec<_>>(),
        "seed": seed,
        "lexicon": args.lexicon.as_ref().map(|p| serde_json::json!({
            "path": p,
            "kind": args.lexicon_kind,
        })),
        "llm": llm,
        "prompt": prompt_spec,
        "policy": {
            "int_range": policy.int_range,
            "float_range": policy.float_range,
            "float_decimals": policy.float_decimals,
            "max_retries": policy.max_retries,
        },
        "reverse_all": args.reverse_all,
        "v1_mode": args.v1_mode,
        "workers": args.workers,
        "max_synonym_replacements": args.max_synonym_replacements,
        "dataset_label": dataset_label,
    });
    let path = run_dir.join("run.json");
    let mut body = serde_json::to_string_pretty(&echo).expect("config serializes");
    body.push('\n');
    fs::write(&path, body).map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))
}

fn print_summary(run_dir: &Path, stats: &RunStats) {
    println!("run directory: {}", run_dir.display());
    println!("trainset: {} records", stats.trainset);
    for method in &stats.methods {
        let skipped: usize = method.skipped.values().sum();
        println!(
            "{}: {} records emitted, {} inputs skipped",
            method.method, method.emitted_records, skipped
        );
    }
    for (variant, size) in &stats.variants {
        println!("combined {variant}: {size} records");
    }
}

fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let format = parse_format(&args.format)?;
    let outcome = load_input(&args.input, format)?;
    let total = outcome.records.len() + outcome.rejects.len();
    for reject in &outcome.rejects {
        eprintln!("reject {}: {}", reject.id, reject.reason);
    }
    if let Some(path) = &args.rejects {
        write_rejects(path, &outcome.rejects)?;
    }
    if let Some(path) = &args.output {
        corpus::write_corpus(&outcome.records, path).map_err(|e| data_err(e.to_string()))?;
    }
    println!("{}/{} records consistent", outcome.records.len(), total);
    if outcome.rejects.is_empty() {
        Ok(())
    } else {
        Err(data_err(format!(
            "{} of {total} records failed validation",
            outcome.rejects.len()
        )))
    }
}

fn stats(args: StatsArgs) -> Result<(), CliError> {
    let dir = &args.run_dir;
    let count = |name: &str| -> Result<Option<usize>, CliError> {
        let path = dir.join(name);
        if !path.exists() {
            return Ok(None);
        }
        let outcome = corpus::load_corpus(&path, CorpusFormat::UnifiedJsonl)
            .map_err(|e| data_err(e.to_string()))?;
        if !outcome.rejects.is_empty() {
            return Err(data_err(format!(
                "{} invalid records in {name}",
                outcome.rejects.len()
            )));
        }
        Ok(Some(outcome.records.len()))
    };

    let trainset = count("trainset.jsonl")?
        .ok_or_else(|| data_err(format!("{}/trainset.jsonl missing", dir.display())))?;
    let dataset = fs::read_to_string(dir.join("run.json"))
        .ok()
        .and_then(|raw| serde_json::from_str::<serde_json::Value>(&raw).ok())
        .and_then(|v| v.get("dataset_label")?.as_str().map(str::to_string))
        .unwrap_or_else(|| "corpus".into());

    let cell = |n: Option<usize>| n.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
    let row = [
        dataset,
        trainset.to_string(),
        cell(count("question_repl.jsonl")?),
        cell(count("reverse.jsonl")?),
        cell(count("synonym.jsonl")?),
        cell(count("icl.jsonl")?),
        cell(count("combined_v1.jsonl")?),
        cell(count("combined_v2.jsonl")?),
        cell(count("combined_v3.jsonl")?),
        cell(count("combined_v4.jsonl")?),
    ]
    .join("\t");
    let header = STATS_COLUMNS.join("\t");
    let recomputed = if trainset > 0 {
        format!("{header}\n{row}\n")
    } else {
        format!("{header}\n")
    };

    let stats_path = dir.join("stats.tsv");
    if stats_path.exists() {
        let existing = fs::read_to_string(&stats_path)
            .map_err(|e| data_err(format!("cannot read {}: {e}", stats_path.display())))?;
        if existing != recomputed {
            return Err(data_err(
                "stats.tsv does not match counts recomputed from the record files",
            ));
        }
        eprintln!("stats.tsv matches recomputed counts");
    }
    print!("{recomputed}");
    Ok(())
}
