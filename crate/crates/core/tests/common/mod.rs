//! Test helpers shared by the integration targets.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use socratic_core::model::{Conversation, Turn};

/// One request as seen by [`FakeEndpoint`].
#[derive(Debug, Clone)]
pub struct Captured {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: serde_json::Value,
}

impl Captured {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// A scripted reply: status, body, delay before answering.
#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    pub fn ok(content: &str) -> Self {
        let body = serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] });
        Reply { status: 200, body: body.to_string(), delay: Duration::ZERO }
    }

    pub fn status(status: u16, body: &str) -> Self {
        Reply { status, body: body.to_string(), delay: Duration::ZERO }
    }

    pub fn delayed(mut self, ms: u64) -> Self {
        self.delay = Duration::from_millis(ms);
        self
    }
}

/// Minimal HTTP/1.1 server on a loopback port that records every request and
/// answers from a script. The last reply repeats once the script runs out.
/// A reply body containing `{auth}` gets the request's Authorization header
/// spliced in.
pub struct FakeEndpoint {
    pub addr: SocketAddr,
    captured: Arc<Mutex<Vec<Captured>>>,
}

impl FakeEndpoint {
    pub fn start(script: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let captured = Arc::new(Mutex::new(Vec::new()));
        let sink = captured.clone();
        thread::spawn(move || {
            let mut n = 0usize;
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let reply = script[n.min(script.len() - 1)].clone();
                n += 1;
                let sink = sink.clone();
                thread::spawn(move || serve_one(stream, reply, sink));
            }
        });
        FakeEndpoint { addr, captured }
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> Vec<Captured> {
        self.captured.lock().unwrap().clone()
    }
}

fn serve_one(stream: TcpStream, reply: Reply, sink: Arc<Mutex<Vec<Captured>>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut headers = Vec::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.trim_end().split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok();
    let body = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    let auth = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("authorization"))
        .map(|(_, v)| v.clone())
        .unwrap_or_default();
    sink.lock().unwrap().push(Captured { path, headers, body });
    thread::sleep(reply.delay);
    let payload = reply.body.replace("{auth}", &auth);
    let response = format!(
        "HTTP/1.1 {} Scripted\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        payload.len(),
        payload
    );
    let mut stream = stream;
    let _ = stream.write_all(response.as_bytes());
}

/// Conversation `id` with one fully answered turn per utterance, the last one
/// left open.
pub fn conversation(id: &str, utterances: &[&str]) -> Conversation {
    let n = utterances.len();
    Conversation {
        conversation_id: id.to_string(),
        turns: utterances
            .iter()
            .enumerate()
            .map(|(i, u)| Turn {
                index: i,
                seeker_utterance: u.to_string(),
                supporter_response: (i + 1 < n).then(|| "I hear you. Tell me more.".to_string()),
            })
            .collect(),
        metadata: Default::default(),
    }
}

/// Seeker utterances mixing anxiety, distortion, hedging and neutral turns.
pub const UTTERANCES: &[&str] = &[
    "I always fail at everything I try",
    "Everyone hates me and my life is ruined forever",
    "Maybe I could possibly talk to my manager",
    "I love my job, but earlier I said I hate going there",
    "If I quit, what then?",
    "I feel so anxious before every meeting at work",
    "My sleep has been terrible and I keep worrying",
    "Thank you, this conversation helped",
    "What should I do about my family?",
    "The weather is nice today",
];

/// `n` synthetic conversations of 1 to 4 turns each, deterministic in `n`.
pub fn synthetic_corpus(n: usize) -> Vec<Conversation> {
    (0..n)
        .map(|i| {
            let turns = 1 + i % 4;
            let us: Vec<&str> = (0..turns).map(|t| UTTERANCES[(i * 3 + t * 7) % UTTERANCES.len()]).collect();
            let mut c = conversation(&format!("conv-{i:04}"), &us);
            if i % 5 == 0 {
                c.metadata.insert("topic".into(), "anxiety".into());
            }
            c
        })
        .collect()
}
