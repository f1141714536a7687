//! Dialogue data model, label vocabularies and context truncation.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::size_units;

/// Default truncation budget in size units.
pub const DEFAULT_BUDGET_UNITS: usize = 3072;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("current utterance needs {needed} units but the budget is {budget}")]
    BudgetTooSmall { needed: usize, budget: usize },
    #[error("unknown {space} label '{label}'")]
    UnknownLabel { space: LabelSpace, label: String },
}

/// A closed, canonically ordered label vocabulary.
pub trait Label: Copy + Eq + fmt::Debug + 'static {
    const SPACE: LabelSpace;
    const ALL: &'static [Self];

    fn as_str(self) -> &'static str;

    fn index(self) -> usize {
        Self::ALL.iter().position(|&l| l == self).expect("label in ALL")
    }

    fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn parse(s: &str) -> Result<Self, ModelError> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| ModelError::UnknownLabel { space: Self::SPACE, label: s.to_string() })
    }

    fn labels() -> Vec<&'static str> {
        Self::ALL.iter().map(|l| l.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace {
    Strategy,
    SocraticMethod,
}

impl LabelSpace {
    pub fn len(self) -> usize {
        match self {
            LabelSpace::Strategy => Strategy::ALL.len(),
            LabelSpace::SocraticMethod => SocraticMethod::ALL.len(),
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn labels(self) -> Vec<&'static str> {
        match self {
            LabelSpace::Strategy => Strategy::labels(),
            LabelSpace::SocraticMethod => SocraticMethod::labels(),
        }
    }
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSpace::Strategy => "strategy",
            LabelSpace::SocraticMethod => "socratic_method",
        })
    }
}

macro_rules! label_enum {
    ($(#[$m:meta])* $name:ident, $space:expr, { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl Label for $name {
            const SPACE: LabelSpace = $space;
            const ALL: &'static [Self] = &[$($name::$variant),+];
            fn as_str(self) -> &'static str {
                match self { $($name::$variant => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ModelError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                <Self as Label>::parse(s)
            }
        }
    };
}

label_enum!(
    /// Supportive strategy, in canonical order. The order fixes logit indices
    /// and tie-breaking.
    Strategy, LabelSpace::Strategy, {
        Question => "question",
        ReflectionOfFeelings => "reflection_of_feelings",
        SelfDisclosure => "self_disclosure",
        Others => "others",
        Information => "information",
        ProvidingSuggestions => "providing_suggestions",
        RolePlay => "role_play",
        RestatementOrParaphrasing => "restatement_or_paraphrasing",
        Unknown => "unknown",
        AffirmationAndReassurance => "affirmation_and_reassurance",
    }
);

label_enum!(
    /// Socratic questioning method, in canonical order.
    SocraticMethod, LabelSpace::SocraticMethod, {
        Definition => "definition",
        CounterQuestioning => "counter_questioning",
        Maieutics => "maieutics",
        Dialectics => "dialectics",
        CounterfactualReasoning => "counterfactual_reasoning",
        Other => "other",
    }
);

/// Where a planning decision came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Rule,
    Model,
    Mock,
}

impl Provenance {
    /// Provenance of a plan built from two stages.
    pub fn combine(self, other: Provenance) -> Provenance {
        use Provenance::*;
        match (self, other) {
            (Model, _) | (_, Model) => Model,
            (Mock, _) | (_, Mock) => Mock,
            _ => Rule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub seeker_utterance: String,
    pub supporter_response: Option<String>,
}

impl Turn {
    pub fn size_units(&self) -> usize {
        size_units(&self.seeker_utterance)
            + self.supporter_response.as_deref().map_or(0, size_units)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Conversation {
    /// Checks the conversation invariants. `allow_empty` admits a turn-less
    /// conversation, which only live sessions use.
    pub fn check(&self, allow_empty: bool) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::MalformedRecord(m));
        if self.conversation_id.trim().is_empty() {
            return bad("missing conversation_id".into());
        }
        if self.turns.is_empty() && !allow_empty {
            return bad(format!("{}: no turns", self.conversation_id));
        }
        for (i, t) in self.turns.iter().enumerate() {
            if t.index != i {
                return bad(format!(
                    "{}: turn indices not contiguous (expected {i}, found {})",
                    self.conversation_id, t.index
                ));
            }
            if t.seeker_utterance.trim().is_empty() {
                return bad(format!("{}: turn {i} has an empty seeker utterance", self.conversation_id));
            }
            if t.supporter_response.is_none() && i + 1 != self.turns.len() {
                return bad(format!(
                    "{}: turn {i} lacks a supporter response but is not the final turn",
                    self.conversation_id
                ));
            }
        }
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// The most recent seeker utterance.
    pub fn last_seeker(&self) -> Option<&str> {
        self.turns.last().map(|t| t.seeker_utterance.as_str())
    }
}

/// One line of the conversation corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub conversation_id: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub turns: Vec<TurnRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    /// Optional explicit ordinal; defaults to the array position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub seeker: Option<String>,
    #[serde(default)]
    pub supporter: Option<String>,
}

impl From<&Conversation> for ConversationRecord {
    fn from(c: &Conversation) -> Self {
        ConversationRecord {
            conversation_id: Some(c.conversation_id.clone()),
            metadata: c
                .metadata
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect(),
            turns: c
                .turns
                .iter()
                .map(|t| TurnRecord {
                    index: None,
                    seeker: Some(t.seeker_utterance.clone()),
                    supporter: t.supporter_response.clone(),
                })
                .collect(),
        }
    }
}

/// Validates a parsed corpus record. Metadata keys are lowercased and
/// non-string values are rendered as JSON text.
pub fn validate_conversation(raw: ConversationRecord) -> Result<Conversation, ModelError> {
    let id = raw
        .conversation_id
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| ModelError::MalformedRecord("missing conversation_id".into()))?;
    let metadata = raw
        .metadata
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            (k.to_lowercase(), v)
        })
        .collect();
    let turns = raw
        .turns
        .into_iter()
        .enumerate()
        .map(|(pos, t)| Turn {
            index: t.index.unwrap_or(pos),
            seeker_utterance: t.seeker.unwrap_or_default(),
            supporter_response: t.supporter,
        })
        .collect();
    let conv = Conversation { conversation_id: id, turns, metadata };
    conv.check(false)?;
    Ok(conv)
}

/// Parses and validates one corpus line.
pub fn parse_conversation_line(line: &str) -> Result<Conversation, ModelError> {
    let raw: ConversationRecord =
        serde_json::from_str(line).map_err(|e| ModelError::MalformedRecord(format!("invalid JSON: {e}")))?;
    validate_conversation(raw)
}

/// Outcome of reading a corpus: valid conversations plus per-line diagnostics
/// for skipped records.
#[derive(Debug, Default)]
pub struct Corpus {
    pub conversations: Vec<Conversation>,
    pub skipped: Vec<(usize, ModelError)>,
}

/// Reads a JSON Lines corpus. Blank lines are ignored; malformed records are
/// skipped with a diagnostic. Only I/O failures abort.
pub fn read_corpus<R: BufRead>(reader: R) -> std::io::Result<Corpus> {
    let mut corpus = Corpus::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_conversation_line(&line) {
            Ok(c) => corpus.conversations.push(c),
            Err(e) => {
                log::warn!("line {}: skipped: {e}", n + 1);
                corpus.skipped.push((n + 1, e));
            }
        }
    }
    Ok(corpus)
}

pub fn conversation_to_line(c: &Conversation) -> String {
    serde_json::to_string(&ConversationRecord::from(c)).expect("conversation serializes")
}

/// The most recent history turns that fit the budget, plus the utterance
/// being planned for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedContext {
    pub turns: Vec<Turn>,
    pub current_utterance: String,
    pub dropped_turn_count: usize,
    pub budget_units: usize,
}

impl TruncatedContext {
    pub fn size_units(&self) -> usize {
        self.turns.iter().map(Turn::size_units).sum::<usize>() + size_units(&self.current_utterance)
    }

    /// Renders history and the current utterance with role markers.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.turns {
            out.push_str("Seeker: ");
            out.push_str(&t.seeker_utterance);
            out.push('\n');
            if let Some(r) = &t.supporter_response {
                out.push_str("Supporter: ");
                out.push_str(r);
                out.push('\n');
            }
        }
        out.push_str("Seeker: ");
        out.push_str(&self.current_utterance);
        out
    }
}

/// Left-truncates `history` so it fits `budget_units` together with the
/// current utterance, dropping whole turns oldest first.
pub fn truncate_turns(
    history: &[Turn],
    current_utterance: &str,
    budget_units: usize,
) -> Result<TruncatedContext, ModelError> {
    let needed = size_units(current_utterance);
    if needed > budget_units {
        return Err(ModelError::BudgetTooSmall { needed, budget: budget_units });
    }
    let mut used = needed;
    let mut keep = 0;
    for t in history.iter().rev() {
        let s = t.size_units();
        if used + s > budget_units {
            break;
        }
        used += s;
        keep += 1;
    }
    let start = history.len() - keep;
    Ok(TruncatedContext {
        turns: history[start..].to_vec(),
        current_utterance: current_utterance.to_string(),
        dropped_turn_count: start,
        budget_units,
    })
}

/// Truncates the turns of `conversation` as history for `current_utterance`.
pub fn truncate_context(
    conversation: &Conversation,
    current_utterance: &str,
    budget_units: usize,
) -> Result<TruncatedContext, ModelError> {
    truncate_turns(&conversation.turns, current_utterance, budget_units)
}
