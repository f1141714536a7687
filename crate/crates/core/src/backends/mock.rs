use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    one_hot_logits, parse_forced_choice, parse_rating, parse_verdict, BackendError, ClassificationRequest,
    Classifier, Generator, Judge,
};
use crate::generator::DecodingParams;
use crate::model::Provenance;

/// Marker that introduces the current utterance in a composed prompt.
pub const CURRENT_UTTERANCE_MARKER: &str = "[Current utterance]\nSeeker: ";

/// Serializable mock behaviour, usable from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MockSpec {
    /// Return the prompt verbatim.
    Echo,
    /// Return the current-utterance block of a composed prompt.
    EchoUtterance,
    /// Classify everything as this label.
    Label { label: String },
    /// Classify everything with these logits.
    Logits { logits: Vec<f64> },
    /// Cycle through these answers in call order.
    Scripted { responses: Vec<String> },
    /// Pick an answer by a stable hash of the prompt.
    Canned { responses: Vec<String> },
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub(crate) fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

type ScriptFn = dyn Fn(&str, usize) -> Result<String, BackendError> + Send + Sync;

enum Script {
    Echo,
    EchoUtterance,
    Sequence(Mutex<VecDeque<Result<String, BackendError>>>),
    Cycle(Vec<String>),
    Canned(Vec<String>),
    Func(Box<ScriptFn>),
}

impl Script {
    fn from_spec(spec: &MockSpec) -> Result<Self, BackendError> {
        Ok(match spec {
            MockSpec::Echo => Script::Echo,
            MockSpec::EchoUtterance => Script::EchoUtterance,
            MockSpec::Scripted { responses } if !responses.is_empty() => Script::Cycle(responses.clone()),
            MockSpec::Canned { responses } if !responses.is_empty() => Script::Canned(responses.clone()),
            MockSpec::Label { label } => Script::Cycle(vec![label.clone()]),
            MockSpec::Scripted { .. } | MockSpec::Canned { .. } => {
                return Err(BackendError::Config("mock script has no responses".into()))
            }
            MockSpec::Logits { .. } => return Err(BackendError::Config("logits mock only classifies".into())),
        })
    }

    fn answer(&self, prompt: &str, call: usize) -> Result<String, BackendError> {
        match self {
            Script::Echo => Ok(prompt.to_string()),
            Script::EchoUtterance => Ok(match prompt.rfind(CURRENT_UTTERANCE_MARKER) {
                Some(i) => prompt[i + CURRENT_UTTERANCE_MARKER.len()..].trim_end().to_string(),
                None => prompt.to_string(),
            }),
            Script::Sequence(q) => q
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or_else(|| Err(BackendError::Transport("mock script exhausted".into()))),
            Script::Cycle(v) => Ok(v[call % v.len()].clone()),
            Script::Canned(v) => Ok(v[(stable_hash(prompt.as_bytes()) % v.len() as u64) as usize].clone()),
            Script::Func(f) => f(prompt, call),
        }
    }
}

/// Scripted generation backend. Records every prompt it receives.
pub struct MockGenerator {
    script: Script,
    calls: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl std::fmt::Debug for MockGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockGenerator").field("calls", &self.calls()).finish()
    }
}

impl MockGenerator {
    fn with(script: Script) -> Self {
        MockGenerator { script, calls: AtomicUsize::new(0), prompts: Mutex::new(Vec::new()) }
    }

    pub fn echo() -> Self {
        Self::with(Script::Echo)
    }

    pub fn echo_utterance() -> Self {
        Self::with(Script::EchoUtterance)
    }

    /// Answers in order; fails with a transport error once exhausted.
    pub fn sequence(answers: Vec<Result<String, BackendError>>) -> Self {
        Self::with(Script::Sequence(Mutex::new(answers.into())))
    }

    pub fn cycle(answers: Vec<String>) -> Self {
        assert!(!answers.is_empty());
        Self::with(Script::Cycle(answers))
    }

    pub fn canned(answers: Vec<String>) -> Self {
        assert!(!answers.is_empty());
        Self::with(Script::Canned(answers))
    }

    /// Answers computed from `(prompt, call_index)`.
    pub fn from_fn(f: impl Fn(&str, usize) -> Result<String, BackendError> + Send + Sync + 'static) -> Self {
        Self::with(Script::Func(Box::new(f)))
    }

    pub fn from_spec(spec: &MockSpec) -> Self {
        match Script::from_spec(spec) {
            Ok(s) => Self::with(s),
            Err(e) => Self::with(Script::Sequence(Mutex::new(VecDeque::from([Err(e)])))),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl Generator for MockGenerator {
    fn complete(&self, prompt: &str, _params: &DecodingParams) -> Result<String, BackendError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.script.answer(prompt, call)
    }
}

enum ClassifierScript {
    Logits(Vec<f64>),
    Answers(Script),
}

/// Scripted classification backend.
pub struct MockClassifier {
    script: ClassifierScript,
    calls: AtomicUsize,
    requests: Mutex<Vec<ClassificationRequest>>,
}

impl MockClassifier {
    fn with(script: ClassifierScript) -> Self {
        MockClassifier { script, calls: AtomicUsize::new(0), requests: Mutex::new(Vec::new()) }
    }

    /// Always returns these logits, whatever the label space.
    pub fn logits(logits: Vec<f64>) -> Self {
        Self::with(ClassifierScript::Logits(logits))
    }

    /// Always chooses `label`, one-hot over the request's label space.
    pub fn label(label: &str) -> Self {
        Self::with(ClassifierScript::Answers(Script::Cycle(vec![label.to_string()])))
    }

    /// Forced-choice answers in order, parsed like remote answers.
    pub fn answers(answers: Vec<Result<String, BackendError>>) -> Self {
        Self::with(ClassifierScript::Answers(Script::Sequence(Mutex::new(answers.into()))))
    }

    pub fn from_spec(spec: &MockSpec) -> Result<Self, BackendError> {
        match spec {
            MockSpec::Logits { logits } => Ok(Self::logits(logits.clone())),
            MockSpec::Echo | MockSpec::EchoUtterance => {
                Err(BackendError::Config("echo mocks cannot classify".into()))
            }
            other => Ok(Self::with(ClassifierScript::Answers(Script::from_spec(other)?))),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<ClassificationRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl Classifier for MockClassifier {
    fn classify(&self, request: &ClassificationRequest) -> Result<Vec<f64>, BackendError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        self.requests.lock().unwrap().push(request.clone());
        match &self.script {
            ClassifierScript::Logits(z) => Ok(z.clone()),
            ClassifierScript::Answers(s) => {
                let answer = s.answer(&request.current_utterance, call)?;
                let index = parse_forced_choice(&answer, request.label_space)?;
                Ok(one_hot_logits(request.label_space, index))
            }
        }
    }

    fn provenance(&self) -> Provenance {
        Provenance::Mock
    }
}

/// Scripted judge. Answers are parsed like remote answers.
pub struct MockJudge {
    script: Script,
    calls: AtomicUsize,
}

impl MockJudge {
    pub fn cycle(answers: Vec<String>) -> Self {
        assert!(!answers.is_empty());
        MockJudge { script: Script::Cycle(answers), calls: AtomicUsize::new(0) }
    }

    pub fn sequence(answers: Vec<Result<String, BackendError>>) -> Self {
        MockJudge { script: Script::Sequence(Mutex::new(answers.into())), calls: AtomicUsize::new(0) }
    }

    pub fn from_fn(f: impl Fn(&str, usize) -> Result<String, BackendError> + Send + Sync + 'static) -> Self {
        MockJudge { script: Script::Func(Box::new(f)), calls: AtomicUsize::new(0) }
    }

    pub fn from_spec(spec: &MockSpec) -> Self {
        let script = Script::from_spec(spec)
            .unwrap_or_else(|e| Script::Sequence(Mutex::new(VecDeque::from([Err(e)]))));
        MockJudge { script, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn next(&self, prompt: &str) -> Result<String, BackendError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        self.script.answer(prompt, call)
    }
}

impl Judge for MockJudge {
    fn rate(&self, prompt: &str) -> Result<f64, BackendError> {
        parse_rating(&self.next(prompt)?)
    }

    fn verdict(&self, prompt: &str) -> Result<bool, BackendError> {
        parse_verdict(&self.next(prompt)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, LabelSpace, SocraticMethod};

    fn req(space: LabelSpace) -> ClassificationRequest {
        ClassificationRequest {
            rendered_context: "Seeker: hi".into(),
            current_utterance: "hi".into(),
            label_space: space,
            instruction: String::new(),
        }
    }

    #[test]
    fn label_mock_is_one_hot() {
        let m = MockClassifier::label("maieutics");
        let z = m.classify(&req(LabelSpace::SocraticMethod)).unwrap();
        assert_eq!(z, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(SocraticMethod::Maieutics.index(), 2);
        assert_eq!(m.calls(), 1);
    }

    #[test]
    fn echo_modes() {
        let p = DecodingParams::default();
        assert_eq!(MockGenerator::echo().complete("abc", &p).unwrap(), "abc");
        let prompt = format!("[System]\nx\n\n{CURRENT_UTTERANCE_MARKER}I feel stuck\n");
        assert_eq!(MockGenerator::echo_utterance().complete(&prompt, &p).unwrap(), "I feel stuck");
    }

    #[test]
    fn judge_mock_parses() {
        assert_eq!(MockJudge::cycle(vec!["0.8".into()]).rate("p").unwrap(), 0.8);
        assert!(matches!(MockJudge::cycle(vec!["1.7".into()]).rate("p"), Err(BackendError::JudgeFailure(_))));
        assert!(MockJudge::cycle(vec!["yes".into()]).verdict("p").unwrap());
    }

    #[test]
    fn sequence_exhaustion_is_an_error() {
        let g = MockGenerator::sequence(vec![Ok("one".into())]);
        let p = DecodingParams::default();
        assert_eq!(g.complete("x", &p).unwrap(), "one");
        assert!(g.complete("x", &p).is_err());
        assert_eq!(g.prompts().len(), 2);
    }

    #[test]
    fn canned_is_stable() {
        let g = MockGenerator::canned(vec!["a".into(), "b".into(), "c".into()]);
        let p = DecodingParams::default();
        let first = g.complete("same prompt", &p).unwrap();
        for _ in 0..5 {
            assert_eq!(g.complete("same prompt", &p).unwrap(), first);
        }
        assert_eq!(stable_hash(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(stable_hash(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
