#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use lmprior::causal::direction_query;
use lmprior::lm::StubTable;
use lmprior::prompts::{
    render_causal_prompt, render_feature_prompt, render_rl_prompt, Builtin, TaskContext, VariableMeta, DISTANCE_PHRASES,
};
use lmprior::seed;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Relative path and contents of every bundled fixture file.
pub fn all_fixtures() -> Vec<(String, String)> {
    let mut out = select_fixture();
    out.extend(causal_fixture());
    out.extend(rl_fixture());
    out
}

pub const SELECT_BASE: [(&str, &str); 2] =
    [("x1", "first coordinate of the measured point"), ("x2", "second coordinate of the measured point")];
pub const SELECT_NUISANCE: [(&str, &str); 2] =
    [("noise_a", "reading from an unrelated sensor"), ("noise_b", "serial number of the recording device")];

fn select_fixture() -> Vec<(String, String)> {
    let mut rng = seed::rng(1);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let n = 200;
    let mut base = String::from("x1,x2,label\n");
    let mut nuisance = String::from("noise_a,noise_b\n");
    for i in 0..n {
        let pos = i % 2 == 0;
        // Separable: the blobs are uniform squares two units apart.
        let c = if pos { 2.0 } else { -2.0 };
        let x1: f64 = c + rng.gen_range(-1.0..1.0);
        let x2: f64 = c + rng.gen_range(-1.0..1.0);
        base += &format!("{x1:.6},{x2:.6},{}\n", if pos { "yes" } else { "no" });
        let a: f64 = noise.sample(&mut rng);
        let b: f64 = rng.gen_range(0.0..100.0);
        nuisance += &format!("{a:.6},{b:.3}\n");
    }
    let mut metadata = String::from("name,description\n");
    for (name, desc) in SELECT_BASE.iter().chain(&SELECT_NUISANCE) {
        metadata += &format!("{name},{desc}\n");
    }
    let ctx = TaskContext::builtin(Builtin::FeatureSelection);
    let mut table = StubTable::default();
    for (name, desc) in SELECT_BASE {
        let p = render_feature_prompt(&ctx, &VariableMeta::new(name, desc).unwrap()).unwrap();
        table.insert_scores(p.prompt.text(), [(" Y", -0.2), (" N", -1.8)]);
    }
    for (name, desc) in SELECT_NUISANCE {
        let p = render_feature_prompt(&ctx, &VariableMeta::new(name, desc).unwrap()).unwrap();
        table.insert_scores(p.prompt.text(), [(" Y", -2.1), (" N", -0.15)]);
    }
    vec![
        ("select/base.csv".into(), base),
        ("select/nuisance.csv".into(), nuisance),
        ("select/metadata.csv".into(), metadata),
        ("select/stub.json".into(), table.to_json()),
    ]
}

pub struct PairSpec {
    pub id: &'static str,
    pub a: (&'static str, &'static str),
    pub b: (&'static str, &'static str),
    pub context: &'static str,
    pub a_causes_b: bool,
}

pub const PAIRS: [PairSpec; 4] = [
    PairSpec {
        id: "pair0001",
        a: ("Altitude", "the height above sea level"),
        b: ("Temperature", "the mean annual temperature"),
        context: "the climate of weather stations",
        a_causes_b: true,
    },
    PairSpec {
        id: "pair0002",
        a: ("Blood pressure", "the systolic blood pressure"),
        b: ("Age", "the age of the patient"),
        context: "a medical survey",
        a_causes_b: false,
    },
    PairSpec {
        id: "pair0003",
        a: ("Rainfall", "the total rainfall in a season"),
        b: ("Crop yield", "the harvested grain per hectare"),
        context: "farming records",
        a_causes_b: true,
    },
    PairSpec {
        id: "pair0004",
        a: ("Electricity use", "the daily household electricity consumption"),
        b: ("Outdoor temperature", "the daily mean outdoor temperature"),
        context: "household energy data",
        a_causes_b: false,
    },
];

fn pair_samples(index: u64, cause_first: bool) -> String {
    let mut rng = seed::rng(100 + index);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut s = String::new();
    for _ in 0..60 {
        let cause: f64 = rng.gen_range(0.0..1.0);
        let effect = (cause * 2.0).powi(2) + noise.sample(&mut rng);
        let (x, y) = if cause_first { (cause, effect) } else { (effect, cause) };
        s += &format!("{x:.6} {y:.6}\n");
    }
    s
}

fn causal_fixture() -> Vec<(String, String)> {
    let ctx = TaskContext::builtin(Builtin::Causal);
    let mut table = StubTable::default();
    let mut files = Vec::new();
    for (i, p) in PAIRS.iter().enumerate() {
        let a = VariableMeta::new(p.a.0, p.a.1).unwrap();
        let b = VariableMeta::new(p.b.0, p.b.1).unwrap();
        let r = render_causal_prompt(&ctx, &a, &b, p.context).unwrap();
        let q = direction_query(&r.answer_tokens[0], &r.answer_tokens[1]).unwrap();
        let (lp_a, lp_b) = if p.a_causes_b { (-0.3, -1.6) } else { (-1.6, -0.3) };
        table.insert_scores(
            r.prompt.extended(&q.shared_prefix).text(),
            [(q.candidates[0].as_str(), lp_a), (q.candidates[1].as_str(), lp_b)],
        );
        let meta = serde_json::json!({
            "pair_id": p.id,
            "a": {"name": p.a.0, "description": p.a.1},
            "b": {"name": p.b.0, "description": p.b.1},
            "context": p.context,
            "ground_truth": if p.a_causes_b { "a->b" } else { "b->a" },
        });
        files.push((format!("causal/pairs/{}.json", p.id), serde_json::to_string_pretty(&meta).unwrap() + "\n"));
        files.push((format!("causal/pairs/{}.txt", p.id), pair_samples(i as u64, p.a_causes_b)));
    }
    // Listed in the default exclusion list; never scored.
    let excluded = serde_json::json!({
        "pair_id": "pair0052",
        "a": {"name": "Wind", "description": "the wind vector"},
        "b": {"name": "Pressure", "description": "the air pressure"},
        "context": "weather",
        "ground_truth": "a->b",
    });
    files.push(("causal/pairs/pair0052.json".into(), serde_json::to_string_pretty(&excluded).unwrap() + "\n"));
    files.push(("causal/pairs/pair0052.txt".into(), "1 2 3\n4 5 6\n".into()));
    files.push(("causal/stub.json".into(), table.to_json()));
    files
}

/// Judgment distributions whose `p(Good) - p(Bad)` gives the pinned table.
pub const RL_DISTRIBUTIONS: [[(&str, f64); 3]; 4] = [
    [(" Good", 0.0), (" Neutral", 0.0), (" Bad", 1.0)],
    [(" Good", 0.1), (" Neutral", 0.5), (" Bad", 0.4)],
    [(" Good", 0.7), (" Neutral", 0.2), (" Bad", 0.1)],
    [(" Good", 0.96), (" Neutral", 0.03), (" Bad", 0.01)],
];

pub fn rl_stub_table() -> StubTable {
    let mut table = StubTable::default();
    for (d, dist) in RL_DISTRIBUTIONS.iter().enumerate() {
        let p = render_rl_prompt(DISTANCE_PHRASES[d]).unwrap().prompt;
        let mut entries: Vec<(&str, f64)> = dist.iter().filter(|(_, p)| *p > 0.0).map(|&(t, p)| (t, p.ln())).collect();
        entries.push((" The", (0.5f64).ln()));
        table.insert_distribution(p.text(), entries);
    }
    table
}

fn rl_fixture() -> Vec<(String, String)> {
    vec![
        ("rl/stub.json".into(), rl_stub_table().to_json()),
        ("rl/two_goals.map".into(), "A.G\n..G\n".into()),
    ]
}

pub fn write_fixtures(root: &Path) {
    for (rel, contents) in all_fixtures() {
        let path = root.join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, contents).unwrap();
    }
}

#[derive(Clone, Debug)]
pub struct RecordedRequest {
    pub path: String,
    pub headers: BTreeMap<String, String>,
    pub body: serde_json::Value,
}

type Responder = dyn Fn(&RecordedRequest, usize) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering every request through `respond`,
/// which receives the parsed request and its zero-based index.
pub struct MockServer {
    pub url: String,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
}

impl MockServer {
    pub fn start(respond: impl Fn(&RecordedRequest, usize) -> (u16, String) + Send + Sync + 'static) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let respond: Arc<Responder> = Arc::new(respond);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    continue;
                }
                let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut headers = BTreeMap::new();
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
                    }
                }
                let len: usize = headers.get("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let req = RecordedRequest {
                    path,
                    headers,
                    body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
                };
                let index = {
                    let mut l = log.lock().unwrap();
                    l.push(req.clone());
                    l.len() - 1
                };
                let (status, body) = respond(&req, index);
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
            }
        });
        MockServer { url, requests }
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

/// A completion response whose first generated position has `top` as its
/// top log-probabilities.
pub fn top_logprobs_response(top: &[(&str, f64)]) -> String {
    let map: serde_json::Map<String, serde_json::Value> = top.iter().map(|(t, v)| (t.to_string(), (*v).into())).collect();
    let first = top.first().map(|t| t.0).unwrap_or("");
    serde_json::json!({
        "choices": [{"text": first, "logprobs": {
            "tokens": [first],
            "token_logprobs": [top.first().map(|t| t.1)],
            "top_logprobs": [map],
        }}]
    })
    .to_string()
}

/// An echo response for `tokens` with the given per-token log-probabilities.
pub fn echo_response(tokens: &[&str], logprobs: &[Option<f64>]) -> String {
    serde_json::json!({
        "choices": [{"text": tokens.concat(), "logprobs": {
            "tokens": tokens,
            "token_logprobs": logprobs,
            "top_logprobs": null,
        }}]
    })
    .to_string()
}
