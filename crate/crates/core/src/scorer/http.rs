//! Scorer backed by an OpenAI-style `/completions` endpoint.
//!
//! Candidate scores come from echoed prompt log-probabilities: each candidate
//! is appended to the prompt on a new line, the batch is sent with
//! `max_tokens: 0, echo: true`, and the log-probabilities of the tokens that
//! fall after the prompt are summed.

use std::thread;
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{truncate_at_stop, ScoreRequest, ScoreVector, Scorer, ScorerError};

/// Environment variable holding the bearer token. Never read from files.
pub const API_KEY_ENV: &str = "MRPLAN_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout: Duration,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout: Duration::from_secs(60),
            max_tokens: 256,
            seed: None,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug)]
pub struct HttpScorer {
    client: Client,
    config: HttpConfig,
    token: Option<String>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    index: Option<usize>,
    #[serde(default)]
    text: String,
    logprobs: Option<Logprobs>,
}

#[derive(Deserialize)]
struct Logprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    text_offset: Vec<usize>,
}

impl HttpScorer {
    /// Builds a client; the token, if any, comes from [`API_KEY_ENV`].
    pub fn new(config: HttpConfig) -> Result<Self, ScorerError> {
        let token = std::env::var(API_KEY_ENV).ok().filter(|t| !t.is_empty());
        Self::with_token(config, token)
    }

    fn with_token(config: HttpConfig, token: Option<String>) -> Result<Self, ScorerError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ScorerError::BackendUnavailable(e.to_string()))?;
        Ok(Self { client, config, token })
    }

    fn post(&self, mut body: Value) -> Result<CompletionResponse, ScorerError> {
        body["model"] = json!(self.config.model);
        if let Some(seed) = self.config.seed {
            body["seed"] = json!(seed);
        }
        let retry = self.config.retry;
        let mut last_error = String::new();
        for attempt in 0..=retry.retries {
            if attempt > 0 {
                let delay = retry.delay(attempt - 1);
                warn!("retrying {} in {:?}: {last_error}", self.config.endpoint, delay);
                thread::sleep(delay);
            }
            let mut req = self.client.post(&self.config.endpoint).json(&body);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
                last_error = format!("HTTP {status}");
                continue;
            }
            if !status.is_success() {
                let text = resp.text().unwrap_or_default();
                return Err(ScorerError::BackendUnavailable(format!("HTTP {status}: {text}")));
            }
            let text = resp
                .text()
                .map_err(|e| ScorerError::BackendUnavailable(e.to_string()))?;
            debug!("completion response: {} bytes", text.len());
            return serde_json::from_str(&text)
                .map_err(|e| ScorerError::ScoringMismatch(format!("malformed response: {e}")));
        }
        Err(ScorerError::BackendUnavailable(format!(
            "{} after {} retries: {last_error}",
            self.config.endpoint, retry.retries
        )))
    }
}

/// Sum of log-probabilities for tokens that extend past `prefix_chars`.
fn continuation_logprob(lp: &Logprobs, prefix_chars: usize) -> Result<f64, String> {
    if lp.tokens.len() != lp.token_logprobs.len() || lp.tokens.len() != lp.text_offset.len() {
        return Err("logprob arrays differ in length".into());
    }
    let mut total = 0.0;
    let mut counted = 0;
    for ((tok, lp), &offset) in lp.tokens.iter().zip(&lp.token_logprobs).zip(&lp.text_offset) {
        if offset + tok.chars().count() <= prefix_chars {
            continue;
        }
        match lp {
            Some(v) if v.is_finite() => total += v,
            _ => return Err(format!("missing logprob for token `{tok}`")),
        }
        counted += 1;
    }
    if counted == 0 {
        return Err("no candidate tokens echoed".into());
    }
    Ok(total)
}

impl Scorer for HttpScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreVector, ScorerError> {
        let prefix = format!("{}\n", request.prompt());
        let prefix_chars = prefix.chars().count();
        let prompts: Vec<String> = request
            .candidates()
            .iter()
            .map(|c| format!("{prefix}{c}"))
            .collect();
        let resp = self.post(json!({
            "prompt": prompts,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
            "temperature": 0,
        }))?;

        let n = request.candidates().len();
        if resp.choices.len() != n {
            return Err(ScorerError::ScoringMismatch(format!(
                "{n} candidates but {} choices",
                resp.choices.len()
            )));
        }
        let mut scores: Vec<Option<f64>> = vec![None; n];
        for (pos, choice) in resp.choices.iter().enumerate() {
            let i = choice.index.unwrap_or(pos);
            if i >= n || scores[i].is_some() {
                return Err(ScorerError::ScoringMismatch(format!("bad choice index {i}")));
            }
            let lp = choice
                .logprobs
                .as_ref()
                .ok_or_else(|| ScorerError::ScoringMismatch(format!("choice {i} has no logprobs")))?;
            let s = continuation_logprob(lp, prefix_chars)
                .map_err(|e| ScorerError::ScoringMismatch(format!("choice {i}: {e}")))?;
            scores[i] = Some(s);
        }
        ScoreVector::checked(request, scores.into_iter().map(|s| s.unwrap_or(f64::NAN)).collect())
    }

    fn complete(&self, prompt: &str, stop: Option<&str>) -> Result<String, ScorerError> {
        let mut body = json!({
            "prompt": prompt,
            "max_tokens": self.config.max_tokens,
            "temperature": 0,
        });
        if let Some(s) = stop {
            body["stop"] = json!([s]);
        }
        let resp = self.post(body)?;
        let choice = resp
            .choices
            .first()
            .ok_or_else(|| ScorerError::ScoringMismatch("no choices".into()))?;
        Ok(truncate_at_stop(&choice.text, stop))
    }
}
