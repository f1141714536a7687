//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 backend error. Settings resolve as flags, then environment variables,
//! then the `--config` file, then built-in defaults.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    build_classifier, build_generator, build_judge, BackendConfig, BackendError, BackendKind, Generator, Judge,
    MockGenerator,
};
use crate::eval::{emit_report, evaluate, CommandScorer, EvalError, Metric, ReferenceScorer};
use crate::forge::{filter_corpus, ForgeConfig, ForgeError, ForgeStats, PromptTemplates, ScoringRubric, DEFAULT_MIN_TOTAL};
use crate::gateway::{Gateway, GatewayError};
use crate::generator::{DecodingParams, DEFAULT_MAX_RETRIES};
use crate::model::{read_corpus, Conversation, Corpus, DEFAULT_BUDGET_UNITS};
use crate::pipeline::Pipeline;
use crate::planner::{PlanError, Planner, PlanningSignal};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(m) => CliError::Usage(m),
            other => CliError::Backend(other.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Model(m) => CliError::Data(m.to_string()),
            other => CliError::Backend(other.to_string()),
        }
    }
}

impl From<ForgeError> for CliError {
    fn from(e: ForgeError) -> Self {
        match e {
            ForgeError::InvalidRubric(_) | ForgeError::InvalidTemplate(_) => CliError::Usage(e.to_string()),
            ForgeError::Backend(b) => b.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidRatio(_) | EvalError::UnknownMetric(_) => CliError::Usage(e.to_string()),
            EvalError::Judge(b) => b.into(),
            EvalError::Scorer { .. } => CliError::Backend(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Settings file, JSON. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub planner: Option<BackendConfig>,
    pub generator: Option<BackendConfig>,
    pub judge: Option<BackendConfig>,
    pub decoding: Option<DecodingParams>,
    pub budget_units: Option<usize>,
    pub max_retries: Option<u32>,
    pub min_total: Option<f64>,
    pub jobs: Option<usize>,
    pub addr: Option<String>,
    pub data_dir: Option<PathBuf>,
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(AppConfig::default()) };
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    fn decoding(&self) -> Result<DecodingParams, CliError> {
        let p = self.decoding.unwrap_or_default();
        p.validate().map_err(CliError::Usage)?;
        Ok(p)
    }
}

#[derive(Debug, Parser)]
#[command(name = "socratic", version, about = "Socratic questioning planner, corpus builder and evaluator")]
pub struct Cli {
    /// JSON settings file.
    #[arg(long, global = true, env = "SOCRATIC_CONFIG")]
    pub config: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan strategy and Socratic method for every seeker turn.
    Plan(PlanArgs),
    /// Build contrastive question preference pairs.
    Forge(ForgeArgs),
    /// Split a corpus into train and test sets by conversation.
    Split(SplitArgs),
    /// Compute response metrics.
    Eval(EvalArgs),
    /// Run the session service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlannerChoice {
    Rule,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorChoice {
    Mock,
    Remote,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, default_value = "-")]
    pub input: String,
    #[arg(long, value_enum, env = "SOCRATIC_PLANNER")]
    pub planner: Option<PlannerChoice>,
    #[arg(long, default_value = "-")]
    pub out: String,
    #[arg(long)]
    pub budget_units: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ForgeArgs {
    #[arg(long, default_value = "-")]
    pub input: String,
    /// Rubric JSON; defaults to the built-in weights and lexicons.
    #[arg(long)]
    pub rubric: Option<PathBuf>,
    /// Candidate prompt templates JSON with `direct` and `transition`.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, env = "SOCRATIC_MIN_TOTAL")]
    pub min_total: Option<f64>,
    #[arg(long, default_value = "-")]
    pub out: String,
    #[arg(long)]
    pub stats: Option<String>,
    #[arg(long, env = "SOCRATIC_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long, value_enum, env = "SOCRATIC_GENERATOR")]
    pub generator: Option<GeneratorChoice>,
    /// Rate guidance, empathy and tone with the configured judge backend.
    #[arg(long)]
    pub judge: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, default_value = "-")]
    pub input: String,
    #[arg(long)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON Lines with a `response` field per line, or plain text lines.
    #[arg(long, default_value = "-")]
    pub responses: String,
    #[arg(long, default_value = "pqa,distinct1,distinct2")]
    pub metrics: String,
    #[arg(long, default_value = "-")]
    pub out: String,
    /// Decide PQA with the configured judge backend.
    #[arg(long)]
    pub judge: bool,
    /// Reference responses, aligned with `--responses`.
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// External reference scorer as `name=program args...`; repeatable.
    #[arg(long = "scorer")]
    pub scorers: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SOCRATIC_ADDR")]
    pub addr: Option<String>,
    #[arg(long, env = "SOCRATIC_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_enum, env = "SOCRATIC_PLANNER")]
    pub planner: Option<PlannerChoice>,
    #[arg(long, value_enum, env = "SOCRATIC_GENERATOR")]
    pub generator: Option<GeneratorChoice>,
}

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

fn open_input(path: &str) -> Result<Box<dyn BufRead>, CliError> {
    if path == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = fs::File::open(path).map_err(|e| CliError::Data(format!("cannot open {path}: {e}")))?;
    Ok(Box::new(BufReader::new(f)))
}

fn write_output(path: &str, content: &str) -> Result<(), CliError> {
    let res = if path == "-" {
        let mut out = io::stdout().lock();
        out.write_all(content.as_bytes()).and_then(|_| out.flush())
    } else {
        fs::write(path, content)
    };
    res.map_err(|e| CliError::Data(format!("cannot write {path}: {e}")))
}

fn load_corpus(path: &str, strict: bool) -> Result<Vec<Conversation>, CliError> {
    let Corpus { conversations, skipped } =
        read_corpus(open_input(path)?).map_err(|e| CliError::Data(format!("cannot read {path}: {e}")))?;
    if let Some((line, err)) = skipped.first() {
        if strict {
            return Err(CliError::Data(format!("{path}:{line}: {err}")));
        }
        for (line, err) in &skipped {
            log::warn!("{path}:{line}: skipped: {err}");
        }
    }
    Ok(conversations)
}

fn resolve_planner(choice: Option<PlannerChoice>, config: &AppConfig) -> Result<Planner, CliError> {
    let configured = config.planner.as_ref().filter(|c| c.kind != BackendKind::Rule);
    let choice = choice.unwrap_or(if configured.is_some() { PlannerChoice::Model } else { PlannerChoice::Rule });
    match (choice, configured) {
        (PlannerChoice::Rule, _) => Ok(Planner::rule()),
        (PlannerChoice::Model, Some(c)) => {
            let b = build_classifier(c)?;
            Ok(Planner::new(b.clone(), b))
        }
        (PlannerChoice::Model, None) => {
            Err(CliError::Usage("--planner model needs a mock or remote `planner` section in the config file".into()))
        }
    }
}

/// Offline question bank for candidate generation without a model.
pub fn default_question_bank() -> Vec<String> {
    [
        "What makes you feel that way?",
        "It sounds like this has been weighing on you. What do you think is behind that feeling?",
        "What evidence do you have that things will turn out badly?",
        "I hear how hard this is. How would you see it if a friend were in your place?",
        "What would it mean to you if that were true?",
        "That sounds painful. What might be another way to look at what happened?",
        "How do you know that everyone feels that way about you?",
        "You should try to relax more.",
        "What would happen if you gave yourself permission to rest?",
        "It makes sense that you feel anxious about work. What part of it worries you most?",
        "Why?",
        "Have you tried talking to someone?",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn resolve_generator(
    choice: Option<GeneratorChoice>,
    config: &AppConfig,
    offline: impl FnOnce() -> MockGenerator,
) -> Result<Arc<dyn Generator>, CliError> {
    let configured = config.generator.as_ref();
    let choice = choice.unwrap_or(match configured.map(|c| c.kind) {
        Some(BackendKind::Remote) => GeneratorChoice::Remote,
        _ => GeneratorChoice::Mock,
    });
    match (choice, configured) {
        (GeneratorChoice::Mock, Some(c)) if c.kind == BackendKind::Mock => Ok(build_generator(c)?),
        (GeneratorChoice::Mock, _) => Ok(Arc::new(offline())),
        (GeneratorChoice::Remote, Some(c)) if c.kind == BackendKind::Remote => Ok(build_generator(c)?),
        (GeneratorChoice::Remote, _) => {
            Err(CliError::Usage("--generator remote needs a remote `generator` section in the config file".into()))
        }
    }
}

fn resolve_judge(config: &AppConfig) -> Result<Arc<dyn Judge>, CliError> {
    match &config.judge {
        Some(c) => Ok(build_judge(c)?),
        None => Err(CliError::Usage("--judge needs a `judge` section in the config file".into())),
    }
}

#[derive(Debug, Serialize)]
struct PlanRecord<'a> {
    conversation_id: &'a str,
    turn_index: usize,
    #[serde(flatten)]
    signal: PlanningSignal,
}

pub fn cmd_plan(args: &PlanArgs, config: &AppConfig) -> Result<usize, CliError> {
    let planner = resolve_planner(args.planner, config)?;
    let budget = args.budget_units.or(config.budget_units).unwrap_or(DEFAULT_BUDGET_UNITS);
    let corpus = load_corpus(&args.input, true)?;
    let mut out = String::new();
    let mut n = 0;
    for conv in &corpus {
        for (i, turn) in conv.turns.iter().enumerate() {
            let (_, signal) = planner.plan_turn(&conv.turns[..i], &turn.seeker_utterance, budget)?;
            let rec = PlanRecord { conversation_id: &conv.conversation_id, turn_index: turn.index, signal };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
            n += 1;
        }
    }
    write_output(&args.out, &out)?;
    Ok(n)
}

pub fn cmd_forge(args: &ForgeArgs, config: &AppConfig) -> Result<ForgeStats, CliError> {
    let rubric = match &args.rubric {
        Some(p) => ScoringRubric::from_json(
            &fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?,
        )?,
        None => ScoringRubric::default(),
    };
    let templates = match &args.templates {
        Some(p) => serde_json::from_str::<PromptTemplates>(
            &fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?,
        )
        .map_err(|e| CliError::Usage(format!("invalid templates {}: {e}", p.display())))?,
        None => PromptTemplates::default(),
    };
    let judge = if args.judge { Some(resolve_judge(config)?) } else { None };
    let forge = ForgeConfig {
        rubric,
        templates,
        params: config.decoding()?,
        min_total: args.min_total.or(config.min_total).unwrap_or(DEFAULT_MIN_TOTAL),
        jobs: args.jobs.or(config.jobs).unwrap_or(0),
        judge,
    };
    forge.validate()?;
    let generator = resolve_generator(args.generator, config, || MockGenerator::canned(default_question_bank()))?;
    let corpus = load_corpus(&args.input, false)?;
    let output = filter_corpus(&corpus, generator.as_ref(), &forge)?;

    let mut pairs = String::new();
    for r in &output.records {
        pairs.push_str(&serde_json::to_string(r).expect("record serializes"));
        pairs.push('\n');
    }
    write_output(&args.out, &pairs)?;
    let stats = serde_json::to_string_pretty(&output.stats).expect("stats serialize") + "\n";
    match &args.stats {
        Some(p) => write_output(p, &stats)?,
        None => log::info!("forge stats: {}", stats.trim()),
    }
    Ok(output.stats)
}

pub fn cmd_split(args: &SplitArgs) -> Result<(), CliError> {
    if !(args.ratio > 0.0 && args.ratio < 1.0) {
        return Err(EvalError::InvalidRatio(args.ratio).into());
    }
    let corpus = load_corpus(&args.input, true)?;
    let ids: Vec<&str> = corpus.iter().map(|c| c.conversation_id.as_str()).collect();
    let manifest = crate::eval::session_split(&ids, args.ratio, args.seed)?;
    write_output(&args.out, &manifest.to_json())
}

/// Reads one response per line: a JSON object's `response` (or `supporter`)
/// field, a JSON string, or the raw line.
pub fn read_responses(reader: impl BufRead) -> io::Result<Vec<String>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<serde_json::Value>(&line).ok();
        let text = match parsed {
            Some(serde_json::Value::Object(m)) => {
                match m.get("response").or_else(|| m.get("supporter")).and_then(|v| v.as_str()) {
                    Some(s) => s.to_string(),
                    None => line,
                }
            }
            Some(serde_json::Value::String(s)) => s,
            _ => line,
        };
        out.push(text);
    }
    Ok(out)
}

pub fn cmd_eval(args: &EvalArgs, config: &AppConfig) -> Result<(), CliError> {
    let metrics = Metric::parse_list(&args.metrics)?;
    let scorers: Vec<CommandScorer> = args
        .scorers
        .iter()
        .map(|s| CommandScorer::parse(s).ok_or_else(|| CliError::Usage(format!("bad --scorer {s:?}; want name=program"))))
        .collect::<Result<_, _>>()?;
    if !scorers.is_empty() && args.references.is_none() {
        return Err(CliError::Usage("--scorer needs --references".into()));
    }
    let judge = if args.judge { Some(resolve_judge(config)?) } else { None };

    let responses = read_responses(open_input(&args.responses)?)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.responses)))?;
    let mut results = evaluate(&responses, &metrics, judge.as_deref())?;
    if let Some(path) = &args.references {
        let refs = read_responses(open_input(&path.to_string_lossy())?)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        if refs.len() != responses.len() {
            return Err(CliError::Data(format!("{} responses but {} references", responses.len(), refs.len())));
        }
        results.corpus_sizes.insert("references".into(), refs.len() as u64);
        for s in &scorers {
            let v = s.score(&responses, &refs)?;
            results.insert(s.name(), v, "external");
        }
    }

    let mut fp = std::collections::BTreeMap::new();
    fp.insert("metrics".to_string(), metrics.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
    fp.insert("pqa_mode".to_string(), if judge.is_some() { "judge" } else { "rule" }.to_string());
    fp.insert("scorers".to_string(), scorers.iter().map(|s| s.name.clone()).collect::<Vec<_>>().join(","));
    let report = emit_report(results, &fp)?;
    write_output(&args.out, &report.to_json())
}

fn snapshot(planner: &Planner, config: &AppConfig, pipeline: &Pipeline) -> serde_json::Value {
    let generator = config.generator.as_ref();
    serde_json::json!({
        "planner": planner.provenance(),
        "generator": generator.map_or(BackendKind::Mock, |g| g.kind),
        "model_name": generator.and_then(|g| g.model_name.clone()),
        "decoding": pipeline.params,
        "budget_units": pipeline.budget_units,
        "max_retries": pipeline.max_retries,
    })
}

pub fn build_gateway(
    data_dir: &Path,
    planner: Option<PlannerChoice>,
    generator: Option<GeneratorChoice>,
    config: &AppConfig,
) -> Result<Gateway, CliError> {
    let p = resolve_planner(planner, config)?;
    let g = resolve_generator(generator, config, MockGenerator::echo_utterance)?;
    let mut pipeline = Pipeline::new(p.clone(), g);
    pipeline.params = config.decoding()?;
    pipeline.budget_units = config.budget_units.unwrap_or(DEFAULT_BUDGET_UNITS);
    pipeline.max_retries = config.max_retries.unwrap_or(DEFAULT_MAX_RETRIES);
    let snap = snapshot(&p, config, &pipeline);
    Gateway::new(data_dir, pipeline, snap).map_err(|e| CliError::Data(e.to_string()))
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = match signal(SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => return std::future::pending().await,
        };
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

pub fn cmd_serve(args: &ServeArgs, config: &AppConfig) -> Result<(), CliError> {
    let addr = args.addr.clone().or_else(|| config.addr.clone()).unwrap_or_else(|| DEFAULT_ADDR.to_string());
    let data_dir = args.data_dir.clone().or_else(|| config.data_dir.clone()).unwrap_or_else(|| "sessions".into());
    let gateway = Arc::new(build_gateway(&data_dir, args.planner, args.generator, config)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Backend(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Backend(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Backend(e.to_string()))?;
        log::info!("listening on {local}, sessions in {}", data_dir.display());
        eprintln!("listening on http://{local}");
        crate::gateway::serve(listener, gateway, shutdown_signal())
            .await
            .map_err(|e| CliError::Backend(e.to_string()))
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = AppConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Plan(a) => cmd_plan(a, &config).map(|_| ()),
        Command::Forge(a) => cmd_forge(a, &config).map(|_| ()),
        Command::Split(a) => cmd_split(a),
        Command::Eval(a) => cmd_eval(a, &config),
        Command::Serve(a) => cmd_serve(a, &config),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockSpec;

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["socratic", "split", "--ratio", "1.2"]), 1);
        assert_eq!(main_with_args(["socratic", "bogus"]), 1);
        assert_eq!(main_with_args(["socratic", "plan", "--input", "/nonexistent/x.jsonl"]), 2);
        assert_eq!(main_with_args(["socratic", "eval", "--metrics", "bleu", "--responses", "/dev/null"]), 1);
    }

    #[test]
    fn responses_formats() {
        let text = "{\"response\":\"What if?\"}\n\nplain line\n\"quoted\"\n{\"other\":1}\n";
        let r = read_responses(text.as_bytes()).unwrap();
        assert_eq!(r, ["What if?", "plain line", "quoted", "{\"other\":1}"]);
    }

    #[test]
    fn planner_resolution() {
        let cfg = AppConfig::default();
        assert!(resolve_planner(Some(PlannerChoice::Model), &cfg).is_err());
        let cfg = AppConfig {
            planner: Some(BackendConfig::mock(MockSpec::Label { label: "definition".into() })),
            ..Default::default()
        };
        assert_eq!(resolve_planner(None, &cfg).unwrap().provenance(), crate::model::Provenance::Mock);
        assert_eq!(resolve_planner(Some(PlannerChoice::Rule), &cfg).unwrap().provenance(), crate::model::Provenance::Rule);
    }
}
