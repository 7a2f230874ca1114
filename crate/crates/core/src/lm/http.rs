//! Completion-with-logprobs HTTP backend.
//!
//! Speaks the `POST {base_url}/v1/completions` protocol. First-token scoring
//! and next-token distributions issue one `max_tokens = 1` request and read
//! `top_logprobs[0]`; sequence scoring echoes `prompt + candidate` with
//! `max_tokens = 0` and sums the log-probabilities of the trailing tokens
//! that spell the candidate.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendConfig, LmError, Prompt, ScoreMode};

pub const MAX_HTTP_TOP_K: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer_token: &str, body: &str) -> Result<HttpResponse, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, LmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LmError::Config(format!("http client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer_token: &str, body: &str) -> Result<HttpResponse, TransportError> {
        let resp = self
            .client
            .post(url)
            .header("Authorization", format!("Bearer {bearer_token}"))
            .header("Content-Type", "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Clone, Debug)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    pub fn new(max_retries: u32) -> Self {
        RetryPolicy { max_retries, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(20) }
    }

    /// Exponential backoff with jitter in [50%, 100%] of the nominal delay.
    pub fn delay(&self, attempt: u32) -> Duration {
        let nominal = self.base_delay.saturating_mul(1u32 << attempt.min(16)).min(self.max_delay);
        nominal.mul_f64(rand::thread_rng().gen_range(0.5..=1.0))
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    logprobs: usize,
    echo: bool,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    logprobs: Option<Logprobs>,
}

#[derive(Deserialize)]
struct Logprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Option<Vec<Option<BTreeMap<String, f64>>>>,
}

pub struct HttpBackend {
    id: String,
    url: String,
    model: String,
    token: String,
    retry: RetryPolicy,
    transport: Arc<dyn Transport>,
}

impl HttpBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, LmError> {
        let transport = ReqwestTransport::new(Duration::from_secs_f64(cfg.request_timeout_secs))?;
        Self::with_transport(cfg, Arc::new(transport))
    }

    /// Backend over a caller-supplied transport; the API token is still
    /// read from the configured environment variable.
    pub fn with_transport(cfg: &BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, LmError> {
        cfg.validate()?;
        let token = std::env::var(&cfg.auth_token_env).map_err(|_| LmError::MissingAuth(cfg.auth_token_env.clone()))?;
        Ok(Self::with_token(cfg, transport, token))
    }

    pub fn with_token(cfg: &BackendConfig, transport: Arc<dyn Transport>, token: String) -> Self {
        let base = cfg.base_url.clone().unwrap_or_default();
        let model = cfg.model_name.clone().unwrap_or_default();
        HttpBackend {
            id: format!("http:{base}"),
            url: format!("{}/v1/completions", base.trim_end_matches('/')),
            model,
            token,
            retry: RetryPolicy::new(cfg.max_retries),
            transport,
        }
    }

    pub fn set_retry_policy(&mut self, retry: RetryPolicy) {
        self.retry = retry;
    }

    fn complete(&self, prompt: &str, max_tokens: u32, logprobs: usize, echo: bool) -> Result<Logprobs, LmError> {
        let body = serde_json::to_string(&CompletionRequest {
            model: &self.model,
            prompt,
            max_tokens,
            temperature: 0.0,
            logprobs,
            echo,
        })
        .expect("request serializes");

        let mut attempt = 0;
        let response = loop {
            let outcome = self.transport.post_json(&self.url, &self.token, &body);
            let retryable = match &outcome {
                Ok(r) => r.status == 429 || r.status >= 500,
                Err(_) => true,
            };
            if !retryable || attempt >= self.retry.max_retries {
                break outcome;
            }
            log::warn!("completion request attempt {} failed, retrying", attempt + 1);
            std::thread::sleep(self.retry.delay(attempt));
            attempt += 1;
        };
        let attempts = attempt + 1;
        let response = response.map_err(|e| LmError::Transport { attempts, message: e.0 })?;
        if !(200..300).contains(&response.status) {
            return Err(LmError::Http { status: response.status, body: response.body });
        }
        parse_logprobs(&response.body)
    }

    fn first_token_map(&self, prompt: &Prompt, top_k: usize) -> Result<BTreeMap<String, f64>, LmError> {
        let lp = self.complete(prompt.text(), 1, top_k, false)?;
        lp.top_logprobs
            .and_then(|v| v.into_iter().next().flatten())
            .ok_or_else(|| LmError::Protocol("missing top_logprobs[0]".into()))
    }

    fn sequence_logprob(&self, prompt: &Prompt, candidate: &str) -> Result<f64, LmError> {
        let full = format!("{}{}", prompt.text(), candidate);
        let lp = self.complete(&full, 0, 1, true)?;
        candidate_suffix_logprob(&lp.tokens, &lp.token_logprobs, candidate)
    }
}

fn parse_logprobs(body: &str) -> Result<Logprobs, LmError> {
    let resp: CompletionResponse = serde_json::from_str(body).map_err(|e| LmError::Protocol(e.to_string()))?;
    resp.choices
        .into_iter()
        .next()
        .and_then(|c| c.logprobs)
        .ok_or_else(|| LmError::Protocol("missing choices[0].logprobs".into()))
}

/// Sum of the trailing token log-probabilities that exactly spell `candidate`.
fn candidate_suffix_logprob(tokens: &[String], logprobs: &[Option<f64>], candidate: &str) -> Result<f64, LmError> {
    if tokens.len() != logprobs.len() {
        return Err(LmError::Protocol("tokens and token_logprobs differ in length".into()));
    }
    let mut suffix = String::new();
    let mut total = 0.0;
    for (tok, lp) in tokens.iter().zip(logprobs).rev() {
        if suffix.len() >= candidate.len() {
            break;
        }
        suffix.insert_str(0, tok);
        total += lp.ok_or_else(|| LmError::Protocol("null logprob inside candidate span".into()))?;
    }
    if suffix != candidate {
        return Err(LmError::Protocol(format!(
            "candidate {candidate:?} does not end on a token boundary (got {suffix:?})"
        )));
    }
    Ok(total)
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_name(&self) -> &str {
        &self.model
    }

    fn max_top_k(&self) -> usize {
        MAX_HTTP_TOP_K
    }

    fn score(&self, prompt: &Prompt, candidates: &[String], mode: ScoreMode) -> Result<Vec<f64>, LmError> {
        match mode {
            ScoreMode::Sequence => candidates.iter().map(|c| self.sequence_logprob(prompt, c)).collect(),
            ScoreMode::FirstToken => {
                let top = self.first_token_map(prompt, MAX_HTTP_TOP_K)?;
                // Candidates outside the top-k fall back to an echo request.
                candidates
                    .iter()
                    .map(|c| match top.get(c) {
                        Some(v) => Ok(*v),
                        None => self.sequence_logprob(prompt, c),
                    })
                    .collect()
            }
        }
    }

    fn top_tokens(&self, prompt: &Prompt, top_k: usize) -> Result<Vec<(String, f64)>, LmError> {
        Ok(self.first_token_map(prompt, top_k)?.into_iter().collect())
    }
}
