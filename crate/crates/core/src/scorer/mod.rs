//! Language-model scoring backends.
//!
//! A [`Scorer`] does two things: assigns a log-likelihood to each candidate
//! command as a continuation of a prompt, and produces free-text completions
//! (used for dependency edges). [`MockScorer`] is a deterministic scripted
//! backend; [`HttpScorer`] talks to a completions endpoint.

mod http;
mod mock;
mod prompt;

pub use http::{HttpConfig, HttpScorer, RetryPolicy, API_KEY_ENV};
pub use mock::{MockPolicy, MockScorer};
pub use prompt::{
    assemble_prompt, dependency_prompt, instruction_of, regeneration_attempt, regeneration_note,
    DependencyPromptParts, PromptConfig, PromptParts, PromptSections, INSTRUCTION_PREFIX,
    REGENERATION_PREFIX,
};

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("scoring mismatch: {0}")]
    ScoringMismatch(String),
    #[error("no scripted completion for instruction `{0}`")]
    NoScriptedCompletion(String),
    #[error("invalid score request: {0}")]
    InvalidRequest(String),
}

/// Candidates to score under one prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreRequest {
    prompt: String,
    candidates: Vec<String>,
    instruction: String,
    step: usize,
}

impl ScoreRequest {
    /// `instruction` and `step` identify the decode position for scripted
    /// backends; remote backends only see `prompt` and `candidates`.
    pub fn new(
        prompt: impl Into<String>,
        candidates: Vec<String>,
        instruction: impl Into<String>,
        step: usize,
    ) -> Result<Self, ScorerError> {
        if candidates.is_empty() {
            return Err(ScorerError::InvalidRequest("no candidates".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = candidates.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(ScorerError::InvalidRequest(format!("duplicate candidate `{dup}`")));
        }
        Ok(Self {
            prompt: prompt.into(),
            candidates,
            instruction: instruction.into(),
            step,
        })
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }

    pub fn step(&self) -> usize {
        self.step
    }
}

/// One finite log-likelihood per candidate, index-aligned with the request.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    log_scores: Vec<f64>,
}

impl ScoreVector {
    /// Validates length and finiteness against the request.
    pub fn checked(request: &ScoreRequest, log_scores: Vec<f64>) -> Result<Self, ScorerError> {
        if log_scores.len() != request.candidates.len() {
            return Err(ScorerError::ScoringMismatch(format!(
                "{} candidates but {} scores",
                request.candidates.len(),
                log_scores.len()
            )));
        }
        if let Some(i) = log_scores.iter().position(|s| !s.is_finite()) {
            return Err(ScorerError::ScoringMismatch(format!(
                "non-finite score for `{}`",
                request.candidates[i]
            )));
        }
        Ok(Self { log_scores })
    }

    pub fn log_scores(&self) -> &[f64] {
        &self.log_scores
    }

    /// Index of the highest score; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &s) in self.log_scores.iter().enumerate() {
            if best.is_none_or(|b| s > self.log_scores[b]) {
                best = Some(i);
            }
        }
        best
    }
}

pub trait Scorer: Send + Sync {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreVector, ScorerError>;

    /// Generated continuation of `prompt`, cut before `stop` when present.
    fn complete(&self, prompt: &str, stop: Option<&str>) -> Result<String, ScorerError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreVector, ScorerError> {
        (**self).score(request)
    }

    fn complete(&self, prompt: &str, stop: Option<&str>) -> Result<String, ScorerError> {
        (**self).complete(prompt, stop)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreVector, ScorerError> {
        (**self).score(request)
    }

    fn complete(&self, prompt: &str, stop: Option<&str>) -> Result<String, ScorerError> {
        (**self).complete(prompt, stop)
    }
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreVector, ScorerError> {
        (**self).score(request)
    }

    fn complete(&self, prompt: &str, stop: Option<&str>) -> Result<String, ScorerError> {
        (**self).complete(prompt, stop)
    }
}

/// Wraps a scorer and counts calls, for call-budget accounting.
#[derive(Debug)]
pub struct CountingScorer<S> {
    inner: S,
    scores: AtomicU64,
    completions: AtomicU64,
}

impl<S> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            scores: AtomicU64::new(0),
            completions: AtomicU64::new(0),
        }
    }

    pub fn score_calls(&self) -> u64 {
        self.scores.load(Ordering::Relaxed)
    }

    pub fn completion_calls(&self) -> u64 {
        self.completions.load(Ordering::Relaxed)
    }

    pub fn total_calls(&self) -> u64 {
        self.score_calls() + self.completion_calls()
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreVector, ScorerError> {
        self.scores.fetch_add(1, Ordering::Relaxed);
        self.inner.score(request)
    }

    fn complete(&self, prompt: &str, stop: Option<&str>) -> Result<String, ScorerError> {
        self.completions.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(prompt, stop)
    }
}

/// Cuts `text` before the first occurrence of `stop`.
pub(crate) fn truncate_at_stop(text: &str, stop: Option<&str>) -> String {
    match stop.filter(|s| !s.is_empty()).and_then(|s| text.find(s)) {
        Some(i) => text[..i].to_owned(),
        None => text.to_owned(),
    }
}
