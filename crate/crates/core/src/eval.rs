//! Evaluation metrics, session-level splitting, report emission and human
//! rating aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{BackendError, Judge};
use crate::text::{interrogative_sentences, lexicon_hits, terms, DEFAULT_QUESTION_OPENERS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no responses to evaluate")]
    EmptyInput,
    #[error("need at least 2 distinct conversations to split, got {0}")]
    TooFewConversations(usize),
    #[error("ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("metric {metric} is not a valid value: {value}")]
    MetricInvalid { metric: String, value: f64 },
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("{field} = {value} outside 0..={max}")]
    RangeViolation { field: &'static str, value: i64, max: i64 },
    #[error(transparent)]
    Judge(#[from] BackendError),
    #[error("reference scorer {name} failed: {message}")]
    Scorer { name: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Unique n-grams over total n-gram occurrences, pooled over `texts`. Each
/// text contributes its own n-grams; none span text boundaries. 0 when no
/// text has n terms.
pub fn distinct_n<S: AsRef<str>>(texts: &[S], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut seen = BTreeSet::new();
    let mut total = 0usize;
    for t in texts {
        let words = terms(t.as_ref());
        for g in words.windows(n) {
            total += 1;
            seen.insert(g.to_vec());
        }
    }
    if total == 0 {
        0.0
    } else {
        seen.len() as f64 / total as f64
    }
}

/// Probes aimed at beliefs, evidence, alternatives and consequences.
pub fn default_cognition_lexicon() -> Vec<String> {
    [
        "believe", "belief", "beliefs", "think", "thought", "thoughts", "evidence", "proof", "prove", "true",
        "sure", "know", "certain", "assume", "mean", "means", "alternative", "another way", "other way",
        "other explanation", "differently", "possible", "what if", "if", "consequence", "consequences",
        "happen", "would happen", "outcome", "worst", "realistic", "expect", "why", "相信", "证据", "如果", "为什么",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Whether `response` holds an interrogative sentence that also hits the
/// cognition lexicon.
pub fn is_proactive(response: &str, cognition: &[String]) -> bool {
    interrogative_sentences(response, DEFAULT_QUESTION_OPENERS)
        .iter()
        .any(|s| lexicon_hits(&terms(s), cognition) > 0)
}

fn pqa_judge_prompt(response: &str) -> String {
    format!(
        "Does the following counselor response proactively ask a question that leads the client to examine \
         their thoughts, beliefs, evidence or alternatives? Answer yes or no.\n\nResponse: {response}"
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PqaMode {
    Rule,
    Judge,
}

/// Fraction of responses counted as proactive questioning. A judge, when
/// given, decides each response; otherwise the lexical rule does.
pub fn pqa<S: AsRef<str>>(responses: &[S], judge: Option<&dyn Judge>) -> Result<f64, EvalError> {
    pqa_with(responses, judge, &default_cognition_lexicon())
}

pub fn pqa_with<S: AsRef<str>>(
    responses: &[S],
    judge: Option<&dyn Judge>,
    cognition: &[String],
) -> Result<f64, EvalError> {
    if responses.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut hits = 0usize;
    for r in responses {
        let yes = match judge {
            Some(j) => j.verdict(&pqa_judge_prompt(r.as_ref()))?,
            None => is_proactive(r.as_ref(), cognition),
        };
        hits += yes as usize;
    }
    Ok(hits as f64 / responses.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
    pub ratio: f64,
}

impl SplitManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

fn split_key(seed: u64, id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// Assigns whole conversations to train or test. Ids are ranked by a seeded
/// hash; the first round(ratio · n) form the test set, clamped so neither
/// side is empty.
pub fn session_split<S: AsRef<str>>(ids: &[S], ratio: f64, seed: u64) -> Result<SplitManifest, EvalError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(EvalError::InvalidRatio(ratio));
    }
    let unique: BTreeSet<&str> = ids.iter().map(|s| s.as_ref()).collect();
    let n = unique.len();
    if n < 2 {
        return Err(EvalError::TooFewConversations(n));
    }
    let mut ranked: Vec<([u8; 32], &str)> = unique.into_iter().map(|id| (split_key(seed, id), id)).collect();
    ranked.sort();
    let n_test = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut test_ids: Vec<String> = ranked[..n_test].iter().map(|(_, id)| id.to_string()).collect();
    let mut train_ids: Vec<String> = ranked[n_test..].iter().map(|(_, id)| id.to_string()).collect();
    test_ids.sort();
    train_ids.sort();
    Ok(SplitManifest { train_ids, test_ids, seed, ratio })
}

/// Metrics the harness computes in-process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Pqa,
    Distinct(usize),
}

impl Metric {
    pub fn name(self) -> String {
        match self {
            Metric::Pqa => "pqa".into(),
            Metric::Distinct(n) => format!("distinct{n}"),
        }
    }

    pub fn parse(s: &str) -> Result<Metric, EvalError> {
        let s = s.trim().to_ascii_lowercase();
        if s == "pqa" {
            return Ok(Metric::Pqa);
        }
        s.strip_prefix("distinct")
            .map(|r| r.trim_start_matches(['-', '_']))
            .and_then(|r| r.parse::<usize>().ok())
            .filter(|n| *n > 0)
            .map(Metric::Distinct)
            .ok_or(EvalError::UnknownMetric(s))
    }

    pub fn parse_list(s: &str) -> Result<Vec<Metric>, EvalError> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(Metric::parse).collect()
    }
}

/// An external scorer comparing responses with references, such as an
/// embedding-based similarity service.
pub trait ReferenceScorer {
    fn name(&self) -> &str;
    fn score(&self, responses: &[String], references: &[String]) -> Result<f64, EvalError>;
}

/// Runs a command that reads `{"responses": [...], "references": [...]}` on
/// stdin and prints one number on stdout.
#[derive(Debug, Clone)]
pub struct CommandScorer {
    pub name: String,
    pub program: String,
    pub args: Vec<String>,
}

impl CommandScorer {
    /// Parses `name=program arg...`.
    pub fn parse(spec: &str) -> Option<Self> {
        let (name, cmd) = spec.split_once('=')?;
        let mut parts = cmd.split_whitespace().map(String::from);
        let program = parts.next()?;
        Some(CommandScorer { name: name.trim().to_string(), program, args: parts.collect() })
    }
}

impl ReferenceScorer for CommandScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, responses: &[String], references: &[String]) -> Result<f64, EvalError> {
        let fail = |message: String| EvalError::Scorer { name: self.name.clone(), message };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(e.to_string()))?;
        let payload = serde_json::json!({ "responses": responses, "references": references });
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(payload.to_string().as_bytes())
            .map_err(|e| fail(e.to_string()))?;
        let out = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !out.status.success() {
            return Err(fail(format!("exited with {}", out.status)));
        }
        String::from_utf8_lossy(&out.stdout)
            .trim()
            .parse::<f64>()
            .map_err(|e| fail(format!("unparseable output: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_metric: BTreeMap<String, f64>,
    /// How each metric was computed, e.g. `rule` or `judge` for pqa.
    pub metric_modes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_turn: Option<Vec<BTreeMap<String, f64>>>,
    pub corpus_sizes: BTreeMap<String, u64>,
    pub config_fingerprint: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Hex SHA-256 of the canonical JSON of `config`.
pub fn fingerprint(config: &BTreeMap<String, String>) -> String {
    let json = serde_json::to_string(config).expect("map serializes");
    format!("{:x}", Sha256::digest(json.as_bytes()))
}

/// Computed metric values plus how they were obtained.
#[derive(Debug, Clone, Default)]
pub struct MetricResults {
    pub values: BTreeMap<String, f64>,
    pub modes: BTreeMap<String, String>,
    pub per_turn: Option<Vec<BTreeMap<String, f64>>>,
    pub corpus_sizes: BTreeMap<String, u64>,
}

impl MetricResults {
    pub fn insert(&mut self, name: &str, value: f64, mode: &str) {
        self.values.insert(name.to_string(), value);
        self.modes.insert(name.to_string(), mode.to_string());
    }
}

fn bounded_unit(name: &str) -> bool {
    name == "pqa" || name.starts_with("distinct")
}

/// Assembles a report; fails on any non-finite value or on pqa/distinct
/// outside [0, 1].
pub fn emit_report(results: MetricResults, config: &BTreeMap<String, String>) -> Result<EvalReport, EvalError> {
    for (k, v) in &results.values {
        if !v.is_finite() || (bounded_unit(k) && !(0.0..=1.0).contains(v)) {
            return Err(EvalError::MetricInvalid { metric: k.clone(), value: *v });
        }
    }
    Ok(EvalReport {
        per_metric: results.values,
        metric_modes: results.modes,
        per_turn: results.per_turn,
        corpus_sizes: results.corpus_sizes,
        config_fingerprint: fingerprint(config),
    })
}

/// Computes `metrics` over `responses`.
pub fn evaluate<S: AsRef<str>>(
    responses: &[S],
    metrics: &[Metric],
    judge: Option<&dyn Judge>,
) -> Result<MetricResults, EvalError> {
    let mut out = MetricResults::default();
    out.corpus_sizes.insert("responses".into(), responses.len() as u64);
    for m in metrics {
        match m {
            Metric::Pqa => {
                let v = pqa(responses, judge)?;
                out.insert("pqa", v, if judge.is_some() { "judge" } else { "rule" });
            }
            Metric::Distinct(n) => out.insert(&m.name(), distinct_n(responses, *n), "corpus"),
        }
    }
    Ok(out)
}

/// One human rating of a supporter turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRating {
    /// Strategy comprehensiveness, 0..=2.
    pub sc: i64,
    /// Professionalism, 0..=3.
    pub prof: i64,
    /// Authenticity, 0..=3.
    pub auth: i64,
    /// Ethical safety, 0..=1.
    pub es: i64,
    pub rater_id: String,
    pub turn_index: usize,
}

impl TurnRating {
    pub const BOUNDS: [(&'static str, i64); 4] = [("sc", 2), ("prof", 3), ("auth", 3), ("es", 1)];

    pub fn validate(&self) -> Result<(), EvalError> {
        for ((field, max), value) in Self::BOUNDS.iter().zip([self.sc, self.prof, self.auth, self.es]) {
            if !(0..=*max).contains(&value) {
                return Err(EvalError::RangeViolation { field, value, max: *max });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub count: usize,
    pub sc: f64,
    pub prof: f64,
    pub auth: f64,
    pub es: f64,
}

/// Per-metric means over valid ratings; the last rating per (rater, turn)
/// wins.
pub fn aggregate_ratings(ratings: &[TurnRating]) -> Result<Option<RatingSummary>, EvalError> {
    let mut latest: HashMap<(&str, usize), &TurnRating> = HashMap::new();
    for r in ratings {
        r.validate()?;
        latest.insert((r.rater_id.as_str(), r.turn_index), r);
    }
    if latest.is_empty() {
        return Ok(None);
    }
    let n = latest.len() as f64;
    let mean = |f: fn(&TurnRating) -> i64| latest.values().map(|r| f(r) as f64).sum::<f64>() / n;
    Ok(Some(RatingSummary {
        count: latest.len(),
        sc: mean(|r| r.sc),
        prof: mean(|r| r.prof),
        auth: mean(|r| r.auth),
        es: mean(|r| r.es),
    }))
}
