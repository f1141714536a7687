//! Session service: runs the response pipeline turn by turn and records
//! human ratings.
//!
//! Each session lives in `<data_dir>/<session_id>.jsonl`, an append-only log
//! with one JSON event per line:
//!
//! ```text
//! {"event":"created","session_id":..,"created_at":..,"condition":"planned","config_snapshot":{..}}
//! {"event":"turn","turn":{..},"signal":{..},"outcome":{"attempts":1,"constraint_status":"satisfied"}}
//! {"event":"rating","rating":{"sc":2,"prof":3,"auth":3,"es":1,"rater_id":"r1","turn_index":0}}
//! ```
//!
//! A session is rebuilt by replaying its log. A later rating by the same
//! rater for the same turn supersedes the earlier one.

mod http;

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, TurnRating};
use crate::generator::{ConstraintStatus, ValidatedResponse};
use crate::model::{Conversation, Turn};
use crate::pipeline::{Condition, Pipeline, PipelineError};
use crate::planner::PlanningSignal;

pub use http::{router, serve};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("turn {turn} does not exist (session has {turns} supporter turns)")]
    UnknownTurn { turn: usize, turns: usize },
    #[error("rating out of range: {0}")]
    RangeViolation(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("corrupt session log {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub attempts: u32,
    pub constraint_status: ConstraintStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub condition: Condition,
    pub config_snapshot: serde_json::Value,
    pub conversation: Conversation,
    pub per_turn_signals: Vec<PlanningSignal>,
    pub per_turn_outcomes: Vec<TurnOutcome>,
    /// Latest rating per supporter turn; `null` where unrated.
    pub per_turn_ratings: Vec<Option<TurnRating>>,
    /// Current rating of every (rater, turn), in order of submission.
    pub ratings: Vec<TurnRating>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Created {
        session_id: String,
        created_at: DateTime<Utc>,
        condition: Condition,
        config_snapshot: serde_json::Value,
        #[serde(default)]
        metadata: std::collections::BTreeMap<String, String>,
    },
    Turn {
        turn: Turn,
        signal: PlanningSignal,
        outcome: TurnOutcome,
    },
    Rating {
        rating: TurnRating,
    },
}

impl Session {
    fn apply(&mut self, event: Event) -> Result<(), String> {
        match event {
            Event::Created { .. } => Err("duplicate created event".into()),
            Event::Turn { turn, signal, outcome } => {
                if turn.index != self.conversation.turns.len() {
                    return Err(format!("turn {} out of sequence", turn.index));
                }
                signal.validate()?;
                self.conversation.turns.push(turn);
                self.per_turn_signals.push(signal);
                self.per_turn_outcomes.push(outcome);
                self.per_turn_ratings.push(None);
                Ok(())
            }
            Event::Rating { rating } => {
                if rating.turn_index >= self.conversation.turns.len() {
                    return Err(format!("rating for missing turn {}", rating.turn_index));
                }
                rating.validate().map_err(|e| e.to_string())?;
                self.ratings.retain(|r| !(r.rater_id == rating.rater_id && r.turn_index == rating.turn_index));
                self.per_turn_ratings[rating.turn_index] = Some(rating.clone());
                self.ratings.push(rating);
                Ok(())
            }
        }
    }

    fn events(&self) -> Vec<Event> {
        let mut out = vec![Event::Created {
            session_id: self.session_id.clone(),
            created_at: self.created_at,
            condition: self.condition,
            config_snapshot: self.config_snapshot.clone(),
            metadata: self.conversation.metadata.clone(),
        }];
        for ((turn, signal), outcome) in
            self.conversation.turns.iter().zip(&self.per_turn_signals).zip(&self.per_turn_outcomes)
        {
            out.push(Event::Turn { turn: turn.clone(), signal: signal.clone(), outcome: *outcome });
        }
        for r in &self.ratings {
            out.push(Event::Rating { rating: r.clone() });
        }
        out
    }

    fn replay(path: &Path) -> Result<Session, GatewayError> {
        let corrupt = |message: String| GatewayError::Corrupt { path: path.display().to_string(), message };
        let file = File::open(path).map_err(|e| GatewayError::StorageFailure(e.to_string()))?;
        let mut session: Option<Session> = None;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::StorageFailure(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let event: Event = serde_json::from_str(&line).map_err(|e| corrupt(format!("line {}: {e}", n + 1)))?;
            match (&mut session, event) {
                (None, Event::Created { session_id, created_at, condition, config_snapshot, metadata }) => {
                    session = Some(Session {
                        conversation: Conversation { conversation_id: session_id.clone(), turns: vec![], metadata },
                        session_id,
                        created_at,
                        condition,
                        config_snapshot,
                        per_turn_signals: vec![],
                        per_turn_outcomes: vec![],
                        per_turn_ratings: vec![],
                        ratings: vec![],
                    })
                }
                (None, _) => return Err(corrupt("log does not start with a created event".into())),
                (Some(s), e) => s.apply(e).map_err(|m| corrupt(format!("line {}: {m}", n + 1)))?,
            }
        }
        session.ok_or_else(|| corrupt("empty log".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceReply {
    pub turn_index: usize,
    pub response: ValidatedResponse,
    pub signal: PlanningSignal,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionOptions {
    pub condition: Condition,
    pub metadata: std::collections::BTreeMap<String, String>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn append(path: &Path, events: &[Event]) -> Result<(), GatewayError> {
    let storage = |e: std::io::Error| GatewayError::StorageFailure(format!("{}: {e}", path.display()));
    let mut buf = String::new();
    for e in events {
        buf.push_str(&serde_json::to_string(e).expect("event serializes"));
        buf.push('\n');
    }
    let mut f = OpenOptions::new().append(true).open(path).map_err(storage)?;
    f.write_all(buf.as_bytes()).map_err(storage)?;
    f.sync_data().map_err(storage)
}

/// The session store plus the pipeline that answers seeker utterances.
pub struct Gateway {
    data_dir: PathBuf,
    pipeline: Pipeline,
    config_snapshot: serde_json::Value,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("data_dir", &self.data_dir).finish_non_exhaustive()
    }
}

impl Gateway {
    /// `config_snapshot` is stored with every new session; it must not hold
    /// secrets.
    pub fn new(
        data_dir: impl Into<PathBuf>,
        pipeline: Pipeline,
        config_snapshot: serde_json::Value,
    ) -> Result<Self, GatewayError> {
        let data_dir = data_dir.into();
        fs::create_dir_all(&data_dir)
            .map_err(|e| GatewayError::StorageFailure(format!("{}: {e}", data_dir.display())))?;
        Ok(Gateway { data_dir, pipeline, config_snapshot, sessions: Mutex::new(HashMap::new()) })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.data_dir.join(format!("{id}.jsonl"))
    }

    fn handle(&self, id: &str) -> Result<Arc<Mutex<Session>>, GatewayError> {
        if !valid_id(id) {
            return Err(GatewayError::UnknownSession(id.to_string()));
        }
        let mut map = self.sessions.lock().expect("session map poisoned");
        if let Some(s) = map.get(id) {
            return Ok(s.clone());
        }
        let path = self.path(id);
        if !path.exists() {
            return Err(GatewayError::UnknownSession(id.to_string()));
        }
        let s = Arc::new(Mutex::new(Session::replay(&path)?));
        map.insert(id.to_string(), s.clone());
        Ok(s)
    }

    fn persist_new(&self, session: Session) -> Result<String, GatewayError> {
        let id = session.session_id.clone();
        let path = self.path(&id);
        let storage = |e: std::io::Error| GatewayError::StorageFailure(format!("{}: {e}", path.display()));
        File::options().write(true).create_new(true).open(&path).map_err(storage)?;
        if let Err(e) = append(&path, &session.events()) {
            let _ = fs::remove_file(&path);
            return Err(e);
        }
        self.sessions.lock().expect("session map poisoned").insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn create_session(&self, options: SessionOptions) -> Result<String, GatewayError> {
        let id = uuid::Uuid::new_v4().to_string();
        let mut snapshot = self.config_snapshot.clone();
        if let serde_json::Value::Object(m) = &mut snapshot {
            m.insert("condition".into(), serde_json::to_value(options.condition).expect("condition serializes"));
        }
        let session = Session {
            session_id: id.clone(),
            created_at: Utc::now(),
            condition: options.condition,
            config_snapshot: snapshot,
            conversation: Conversation { conversation_id: id, turns: vec![], metadata: options.metadata },
            per_turn_signals: vec![],
            per_turn_outcomes: vec![],
            per_turn_ratings: vec![],
            ratings: vec![],
        };
        self.persist_new(session)
    }

    /// Runs the pipeline on `text`; the turn is persisted only if generation
    /// succeeds.
    pub fn post_utterance(&self, id: &str, text: &str) -> Result<UtteranceReply, GatewayError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(GatewayError::InvalidRequest("seeker text is empty".into()));
        }
        let handle = self.handle(id)?;
        let mut session = handle.lock().expect("session poisoned");
        let (_, response) = self.pipeline.respond(&session.conversation.turns, text, session.condition)?;
        let turn = Turn {
            index: session.conversation.turns.len(),
            seeker_utterance: text.to_string(),
            supporter_response: Some(response.text.clone()),
        };
        let event = Event::Turn {
            turn: turn.clone(),
            signal: response.signal.clone(),
            outcome: TurnOutcome { attempts: response.attempts, constraint_status: response.constraint_status },
        };
        append(&self.path(id), std::slice::from_ref(&event))?;
        session.apply(event).map_err(GatewayError::InvalidRequest)?;
        Ok(UtteranceReply { turn_index: turn.index, signal: response.signal.clone(), response })
    }

    pub fn rate_turn(&self, id: &str, rating: TurnRating) -> Result<(), GatewayError> {
        rating.validate().map_err(|e| match e {
            EvalError::RangeViolation { .. } => GatewayError::RangeViolation(e.to_string()),
            other => GatewayError::InvalidRequest(other.to_string()),
        })?;
        let handle = self.handle(id)?;
        let mut session = handle.lock().expect("session poisoned");
        let turns = session.conversation.turns.len();
        if rating.turn_index >= turns {
            return Err(GatewayError::UnknownTurn { turn: rating.turn_index, turns });
        }
        let event = Event::Rating { rating };
        append(&self.path(id), std::slice::from_ref(&event))?;
        session.apply(event).map_err(GatewayError::InvalidRequest)
    }

    pub fn get_session(&self, id: &str) -> Result<Session, GatewayError> {
        Ok(self.handle(id)?.lock().expect("session poisoned").clone())
    }

    pub fn export_session(&self, id: &str) -> Result<String, GatewayError> {
        let s = self.get_session(id)?;
        Ok(serde_json::to_string_pretty(&s).expect("session serializes"))
    }

    /// Recreates an exported session under its original id.
    pub fn import_session(&self, exported: &str) -> Result<String, GatewayError> {
        let s: Session = serde_json::from_str(exported).map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        if !valid_id(&s.session_id) {
            return Err(GatewayError::InvalidRequest(format!("invalid session id {:?}", s.session_id)));
        }
        // Replaying the events in memory runs the same checks as a load.
        let mut check = Session { conversation: Conversation { turns: vec![], ..s.conversation.clone() }, ..s.clone() };
        check.per_turn_signals.clear();
        check.per_turn_outcomes.clear();
        check.per_turn_ratings.clear();
        check.ratings.clear();
        for e in s.events().into_iter().skip(1) {
            check.apply(e).map_err(GatewayError::InvalidRequest)?;
        }
        if check != s {
            return Err(GatewayError::InvalidRequest("session record is inconsistent".into()));
        }
        self.persist_new(s)
    }

    /// Ids of every session on disk.
    pub fn list_sessions(&self) -> Result<Vec<String>, GatewayError> {
        let mut ids: Vec<String> = fs::read_dir(&self.data_dir)
            .map_err(|e| GatewayError::StorageFailure(e.to_string()))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str()?.strip_suffix(".jsonl").map(String::from))
            .collect();
        ids.sort();
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, MockGenerator};
    use crate::model::SocraticMethod;
    use crate::planner::Planner;

    fn gateway(dir: &Path, g: MockGenerator) -> Gateway {
        let p = Pipeline::new(Planner::rule(), Arc::new(g));
        Gateway::new(dir, p, serde_json::json!({ "planner": "rule" })).unwrap()
    }

    fn rating(turn: usize, rater: &str, sc: i64) -> TurnRating {
        TurnRating { sc, prof: 3, auth: 3, es: 1, rater_id: rater.into(), turn_index: turn }
    }

    #[test]
    fn create_post_rate_replay() {
        let dir = tempfile::tempdir().unwrap();
        let gw = gateway(dir.path(), MockGenerator::echo_utterance());
        let id = gw.create_session(SessionOptions::default()).unwrap();
        assert_ne!(id, gw.create_session(SessionOptions::default()).unwrap());
        assert_eq!(gw.get_session(&id).unwrap().conversation.turns.len(), 0);

        let r = gw.post_utterance(&id, "maybe I should quit").unwrap();
        assert_eq!(r.signal.method, SocraticMethod::Maieutics);
        gw.post_utterance(&id, "I always fail").unwrap();
        gw.rate_turn(&id, rating(0, "a", 2)).unwrap();
        gw.rate_turn(&id, rating(0, "b", 1)).unwrap();
        gw.rate_turn(&id, rating(0, "a", 0)).unwrap();
        assert!(matches!(
            gw.rate_turn(&id, TurnRating { es: 2, ..rating(0, "a", 0) }),
            Err(GatewayError::RangeViolation(_))
        ));
        assert!(matches!(gw.rate_turn(&id, rating(5, "a", 0)), Err(GatewayError::UnknownTurn { turn: 5, turns: 2 })));

        let s = gw.get_session(&id).unwrap();
        assert_eq!(s.ratings.len(), 2);
        assert_eq!(s.per_turn_ratings[0].as_ref().unwrap().sc, 0);
        assert_eq!(s.per_turn_ratings[1], None);

        // A fresh gateway rebuilds the session from the log.
        let again = gateway(dir.path(), MockGenerator::echo());
        assert_eq!(again.get_session(&id).unwrap(), s);

        let other = tempfile::tempdir().unwrap();
        let imported = gateway(other.path(), MockGenerator::echo());
        assert_eq!(imported.import_session(&gw.export_session(&id).unwrap()).unwrap(), id);
        assert_eq!(gateway(other.path(), MockGenerator::echo()).get_session(&id).unwrap(), s);
    }

    #[test]
    fn failed_generation_is_not_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let gw = gateway(dir.path(), MockGenerator::sequence(vec![Err(BackendError::Timeout)]));
        let id = gw.create_session(SessionOptions::default()).unwrap();
        assert!(matches!(gw.post_utterance(&id, "hi"), Err(GatewayError::Pipeline(_))));
        assert_eq!(gw.get_session(&id).unwrap().conversation.turns.len(), 0);
        let lines = fs::read_to_string(dir.path().join(format!("{id}.jsonl"))).unwrap();
        assert_eq!(lines.lines().count(), 1);
    }

    #[test]
    fn unknown_and_invalid_ids() {
        let dir = tempfile::tempdir().unwrap();
        let gw = gateway(dir.path(), MockGenerator::echo());
        assert!(matches!(gw.post_utterance("nope", "hi"), Err(GatewayError::UnknownSession(_))));
        assert!(matches!(gw.get_session("../etc/passwd"), Err(GatewayError::UnknownSession(_))));
    }

    #[test]
    fn unwritable_store_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let gw = gateway(dir.path(), MockGenerator::echo());
        fs::remove_dir_all(dir.path()).unwrap();
        assert!(matches!(gw.create_session(SessionOptions::default()), Err(GatewayError::StorageFailure(_))));
    }

    #[test]
    fn baseline_condition_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let gw = gateway(dir.path(), MockGenerator::echo_utterance());
        let id = gw.create_session(SessionOptions { condition: Condition::Baseline, ..Default::default() }).unwrap();
        gw.post_utterance(&id, "hello").unwrap();
        let s = gw.get_session(&id).unwrap();
        assert_eq!(s.config_snapshot["condition"], "baseline");
        assert_eq!(s.per_turn_outcomes[0].constraint_status, ConstraintStatus::Unconstrained);
    }

    #[test]
    fn corrupt_log_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.jsonl"), "{\"event\":\"rating\"}\n").unwrap();
        let gw = gateway(dir.path(), MockGenerator::echo());
        assert!(matches!(gw.get_session("bad"), Err(GatewayError::Corrupt { .. })));
    }
}
