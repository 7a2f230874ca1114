//! Access to a black-box next-token log-probability oracle.
//!
//! A [`Backend`] answers two questions about a prompt: the log-probability
//! of a list of candidate completions, and the top-k next-token
//! distribution. [`LmClient`] wraps a backend with request validation and a
//! deduplicating cache, so that identical requests issue one wire call no
//! matter how many threads ask for them.

mod cache;
mod config;
mod http;
mod stub;
pub mod tokenize;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, ScoreCache};
pub use config::{BackendConfig, BackendKind};
pub use http::{HttpBackend, HttpResponse, ReqwestTransport, RetryPolicy, Transport, TransportError, MAX_HTTP_TOP_K};
pub use stub::{StubBackend, StubEntry, StubTable};

use crate::util::sha256_hex;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("prompt is {len} characters, backend limit is {max}")]
    PromptTooLong { len: usize, max: usize },
    #[error("request has no candidates")]
    NoCandidates,
    #[error("duplicate candidate {0:?}")]
    DuplicateCandidate(String),
    #[error("top_k = {k} outside 1..={max}")]
    TopKOutOfRange { k: usize, max: usize },
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("stub table {path}: {message}")]
    StubTable { path: String, message: String },
    #[error("stub table has no entry for prompt {prompt_sha}{}", candidate.as_ref().map(|c| format!(" candidate {c:?}")).unwrap_or_default())]
    MissingStubEntry { prompt_sha: String, candidate: Option<String> },
    #[error("environment variable {0} holding the API token is not set")]
    MissingAuth(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Protocol(String),
    #[error("candidate {0:?} not found in backend response")]
    CandidateUnavailable(String),
    #[error("non-finite log-probability for {0:?}")]
    NonFinite(String),
    #[error("cache file: {0}")]
    Cache(#[from] std::io::Error),
}

impl LmError {
    /// Whether the error came from talking to (or reading) the backend, as
    /// opposed to a malformed request or configuration.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            LmError::MissingStubEntry { .. }
                | LmError::Transport { .. }
                | LmError::Http { .. }
                | LmError::Protocol(_)
                | LmError::CandidateUnavailable(_)
                | LmError::NonFinite(_)
                | LmError::MissingAuth(_)
        )
    }
}

/// The exact context conditioned on by the model.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Prompt(String);

impl Prompt {
    pub fn new(text: impl Into<String>) -> Result<Self, LmError> {
        let text = text.into();
        if text.is_empty() {
            return Err(LmError::EmptyPrompt);
        }
        Ok(Prompt(text))
    }

    pub fn text(&self) -> &str {
        &self.0
    }

    /// Hex SHA-256 of the prompt bytes; the key used by stub tables.
    pub fn sha256(&self) -> String {
        sha256_hex(self.0.as_bytes())
    }

    /// A new prompt with `suffix` appended verbatim.
    pub fn extended(&self, suffix: &str) -> Prompt {
        Prompt(format!("{}{}", self.0, suffix))
    }
}

impl TryFrom<String> for Prompt {
    type Error = LmError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Prompt::new(s)
    }
}

impl From<Prompt> for String {
    fn from(p: Prompt) -> String {
        p.0
    }
}

impl fmt::Debug for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut preview: String = self.0.chars().take(40).collect();
        if preview.len() < self.0.len() {
            preview.push('…');
        }
        write!(f, "Prompt({preview:?}, sha={})", &self.sha256()[..12])
    }
}

/// How candidate completions are scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Log-probability of each candidate as the single next token.
    FirstToken,
    /// Sum of the token log-probabilities of the whole candidate string.
    Sequence,
}

#[derive(Clone, Debug)]
pub struct TokenScoreRequest {
    pub prompt: Prompt,
    pub candidates: Vec<String>,
    pub mode: ScoreMode,
}

impl TokenScoreRequest {
    pub fn new(prompt: Prompt, candidates: Vec<String>) -> Result<Self, LmError> {
        Self::with_mode(prompt, candidates, ScoreMode::FirstToken)
    }

    pub fn with_mode(prompt: Prompt, candidates: Vec<String>, mode: ScoreMode) -> Result<Self, LmError> {
        if candidates.is_empty() {
            return Err(LmError::NoCandidates);
        }
        for (i, c) in candidates.iter().enumerate() {
            if candidates[..i].contains(c) {
                return Err(LmError::DuplicateCandidate(c.clone()));
            }
        }
        Ok(TokenScoreRequest { prompt, candidates, mode })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProb {
    pub token: String,
    pub logprob: f64,
}

/// Log-probabilities for a set of tokens or candidates.
///
/// For candidate scoring, entries follow request order. For next-token
/// distributions they are sorted by descending log-probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    pub entries: Vec<TokenLogProb>,
    pub backend_id: String,
    pub cached: bool,
}

impl TokenLogProbs {
    pub fn get(&self, token: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.token == token).map(|e| e.logprob)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.token.as_str())
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn model_name(&self) -> &str;
    fn max_top_k(&self) -> usize;
    /// One log-probability per candidate, in candidate order.
    fn score(&self, prompt: &Prompt, candidates: &[String], mode: ScoreMode) -> Result<Vec<f64>, LmError>;
    /// Up to `top_k` next tokens, any order.
    fn top_tokens(&self, prompt: &Prompt, top_k: usize) -> Result<Vec<(String, f64)>, LmError>;
}

/// Validating, caching front end to a [`Backend`].
#[derive(Clone)]
pub struct LmClient {
    backend: Arc<dyn Backend>,
    cache: Arc<ScoreCache>,
    max_prompt_chars: Option<usize>,
}

impl LmClient {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, LmError> {
        cfg.validate()?;
        let backend: Arc<dyn Backend> = match cfg.kind {
            BackendKind::Stub => Arc::new(StubBackend::from_config(cfg)?),
            BackendKind::Http => Arc::new(HttpBackend::from_config(cfg)?),
        };
        Self::with_backend(backend, cfg)
    }

    /// Client over an explicit backend; `cfg` supplies the cache path and
    /// prompt length limit.
    pub fn with_backend(backend: Arc<dyn Backend>, cfg: &BackendConfig) -> Result<Self, LmError> {
        let cache = ScoreCache::open(cfg.cache_path.as_deref())?;
        Ok(LmClient { backend, cache: Arc::new(cache), max_prompt_chars: cfg.max_prompt_chars })
    }

    pub fn in_memory(backend: Arc<dyn Backend>) -> Self {
        LmClient { backend, cache: Arc::new(ScoreCache::in_memory()), max_prompt_chars: None }
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn model_name(&self) -> &str {
        self.backend.model_name()
    }

    pub fn max_top_k(&self) -> usize {
        self.backend.max_top_k()
    }

    fn check_prompt(&self, prompt: &Prompt) -> Result<(), LmError> {
        if let Some(max) = self.max_prompt_chars {
            let len = prompt.text().chars().count();
            if len > max {
                return Err(LmError::PromptTooLong { len, max });
            }
        }
        Ok(())
    }

    fn key(&self, prompt: &Prompt, candidates: Vec<String>, top_k: Option<usize>, mode: &str) -> CacheKey {
        CacheKey {
            backend_id: self.backend.id().to_string(),
            model_name: self.backend.model_name().to_string(),
            prompt_sha: prompt.sha256(),
            candidates,
            top_k,
            mode: mode.to_string(),
        }
    }

    pub fn score_candidates(&self, req: &TokenScoreRequest) -> Result<TokenLogProbs, LmError> {
        self.check_prompt(&req.prompt)?;
        let mode = match req.mode {
            ScoreMode::FirstToken => "first_token",
            ScoreMode::Sequence => "sequence",
        };
        let key = self.key(&req.prompt, req.candidates.clone(), None, mode);
        let (entries, cached) = self.cache.get_or_fetch(key, || {
            let values = self.backend.score(&req.prompt, &req.candidates, req.mode)?;
            if values.len() != req.candidates.len() {
                return Err(LmError::Protocol(format!(
                    "backend returned {} values for {} candidates",
                    values.len(),
                    req.candidates.len()
                )));
            }
            let out: Vec<(String, f64)> = req.candidates.iter().cloned().zip(values).collect();
            check_finite(&out)?;
            Ok(out)
        })?;
        Ok(self.wrap(entries, cached))
    }

    pub fn next_token_distribution(&self, prompt: &Prompt, top_k: usize) -> Result<TokenLogProbs, LmError> {
        let max = self.backend.max_top_k();
        if top_k == 0 || top_k > max {
            return Err(LmError::TopKOutOfRange { k: top_k, max });
        }
        self.check_prompt(prompt)?;
        let key = self.key(prompt, Vec::new(), Some(top_k), "distribution");
        let (entries, cached) = self.cache.get_or_fetch(key, || {
            let mut dist = self.backend.top_tokens(prompt, top_k)?;
            check_finite(&dist)?;
            dist.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            dist.truncate(top_k);
            Ok(dist)
        })?;
        Ok(self.wrap(entries, cached))
    }

    fn wrap(&self, entries: Vec<(String, f64)>, cached: bool) -> TokenLogProbs {
        TokenLogProbs {
            entries: entries.into_iter().map(|(token, logprob)| TokenLogProb { token, logprob }).collect(),
            backend_id: self.backend.id().to_string(),
            cached,
        }
    }
}

fn check_finite(entries: &[(String, f64)]) -> Result<(), LmError> {
    match entries.iter().find(|(_, v)| !v.is_finite()) {
        Some((t, _)) => Err(LmError::NonFinite(t.clone())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn stub_client() -> LmClient {
        let mut t = StubTable::default();
        t.insert_scores("P1", [("Y", -0.2), ("N", -1.8)]);
        t.insert_distribution("P2", [("Good", -0.105), ("Neutral", -2.4), ("Bad", -4.0)]);
        LmClient::in_memory(Arc::new(StubBackend::new(t)))
    }

    fn req(p: &str, c: &[&str]) -> TokenScoreRequest {
        TokenScoreRequest::new(Prompt::new(p).unwrap(), c.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn stub_lookup_returns_table_values() {
        let c = stub_client();
        let out = c.score_candidates(&req("P1", &["Y", "N"])).unwrap();
        assert_eq!(out.get("Y"), Some(-0.2));
        assert_eq!(out.get("N"), Some(-1.8));
        assert!(!out.cached);
    }

    #[test]
    fn repeated_request_is_served_from_cache() {
        let c = stub_client();
        let first = c.score_candidates(&req("P1", &["Y", "N"])).unwrap();
        let second = c.score_candidates(&req("P1", &["Y", "N"])).unwrap();
        assert!(second.cached);
        assert_eq!(first.entries, second.entries);
        assert_eq!(
            serde_json::to_string(&first.entries).unwrap(),
            serde_json::to_string(&second.entries).unwrap()
        );
    }

    #[test]
    fn duplicate_candidates_rejected() {
        let err = TokenScoreRequest::new(Prompt::new("P1").unwrap(), vec!["Y".into(), "Y".into()]).unwrap_err();
        assert!(matches!(err, LmError::DuplicateCandidate(c) if c == "Y"));
        assert!(matches!(
            TokenScoreRequest::new(Prompt::new("P1").unwrap(), vec![]),
            Err(LmError::NoCandidates)
        ));
    }

    #[test]
    fn empty_prompt_rejected() {
        assert!(matches!(Prompt::new(""), Err(LmError::EmptyPrompt)));
    }

    #[test]
    fn missing_stub_entry_is_an_error() {
        let c = stub_client();
        let err = c.score_candidates(&req("P1", &["Y", "maybe"])).unwrap_err();
        assert!(matches!(err, LmError::MissingStubEntry { candidate: Some(ref m), .. } if m == "maybe"));
        let err = c.score_candidates(&req("unknown", &["Y"])).unwrap_err();
        assert!(matches!(err, LmError::MissingStubEntry { candidate: None, .. }));
    }

    #[test]
    fn distribution_sorted_and_truncated() {
        let c = stub_client();
        let d = c.next_token_distribution(&Prompt::new("P2").unwrap(), 2).unwrap();
        assert_eq!(d.tokens().collect::<Vec<_>>(), ["Good", "Neutral"]);
        assert!(matches!(
            c.next_token_distribution(&Prompt::new("P2").unwrap(), 0),
            Err(LmError::TopKOutOfRange { k: 0, .. })
        ));
        assert!(matches!(
            c.next_token_distribution(&Prompt::new("P2").unwrap(), 21),
            Err(LmError::TopKOutOfRange { k: 21, .. })
        ));
    }

    #[test]
    fn prompt_length_limit_is_an_error_not_a_clip() {
        let mut cfg = BackendConfig::stub("unused");
        cfg.max_prompt_chars = Some(3);
        let mut t = StubTable::default();
        t.insert_scores("long prompt", [("Y", -1.0)]);
        let c = LmClient::with_backend(Arc::new(StubBackend::new(t)), &cfg).unwrap();
        let err = c.score_candidates(&req("long prompt", &["Y"])).unwrap_err();
        assert!(matches!(err, LmError::PromptTooLong { len: 11, max: 3 }));
    }

    struct Counting {
        calls: AtomicUsize,
    }

    impl Backend for Counting {
        fn id(&self) -> &str {
            "counting"
        }
        fn model_name(&self) -> &str {
            "m"
        }
        fn max_top_k(&self) -> usize {
            20
        }
        fn score(&self, _: &Prompt, c: &[String], _: ScoreMode) -> Result<Vec<f64>, LmError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(20));
            Ok(c.iter().map(|_| -1.0).collect())
        }
        fn top_tokens(&self, _: &Prompt, _: usize) -> Result<Vec<(String, f64)>, LmError> {
            unreachable!()
        }
    }

    #[test]
    fn concurrent_identical_requests_share_one_backend_call() {
        let backend = Arc::new(Counting { calls: AtomicUsize::new(0) });
        let client = LmClient::in_memory(backend.clone());
        let r = req("same", &["a", "b"]);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| client.score_candidates(&r).unwrap());
            }
        });
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn non_finite_values_rejected() {
        let mut t = StubTable::default();
        t.insert_scores("P", [("Y", f64::NEG_INFINITY)]);
        let c = LmClient::in_memory(Arc::new(StubBackend::new(t)));
        assert!(matches!(c.score_candidates(&req("P", &["Y"])), Err(LmError::NonFinite(_))));
    }
}
