use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::prompt::{instruction_of, regeneration_attempt};
use super::{truncate_at_stop, ScoreRequest, ScoreVector, Scorer, ScorerError};

fn default_score() -> f64 {
    -10.0
}

fn preferred_score() -> f64 {
    -0.1
}

/// Script for [`MockScorer`], keyed by instruction text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockPolicy {
    #[serde(default = "default_score")]
    pub default_score: f64,
    #[serde(default = "preferred_score")]
    pub preferred_score: f64,
    /// Simulated latency per call; only used for virtual timing, never slept.
    #[serde(default)]
    pub latency_ms: u64,
    /// Preferred command per decode step. Past the end nothing is preferred.
    #[serde(default)]
    pub plans: BTreeMap<String, Vec<String>>,
    /// Completion text per dependency attempt. Past the end the last repeats.
    #[serde(default)]
    pub completions: BTreeMap<String, Vec<String>>,
}

impl Default for MockPolicy {
    fn default() -> Self {
        Self {
            default_score: default_score(),
            preferred_score: preferred_score(),
            latency_ms: 0,
            plans: BTreeMap::new(),
            completions: BTreeMap::new(),
        }
    }
}

impl MockPolicy {
    /// Merges another policy's scripts into this one; later entries win.
    pub fn merge(&mut self, other: MockPolicy) {
        self.plans.extend(other.plans);
        self.completions.extend(other.completions);
        self.latency_ms = self.latency_ms.max(other.latency_ms);
    }
}

/// Deterministic scripted scorer with no I/O.
#[derive(Debug, Clone)]
pub struct MockScorer {
    policy: MockPolicy,
}

impl MockScorer {
    pub fn new(policy: MockPolicy) -> Result<Self, ScorerError> {
        if !policy.default_score.is_finite() || !policy.preferred_score.is_finite() {
            return Err(ScorerError::InvalidRequest("mock scores must be finite".into()));
        }
        if policy.preferred_score <= policy.default_score {
            return Err(ScorerError::InvalidRequest(
                "preferred score must exceed the default score".into(),
            ));
        }
        Ok(Self { policy })
    }

    pub fn policy(&self) -> &MockPolicy {
        &self.policy
    }
}

impl Scorer for MockScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreVector, ScorerError> {
        let preferred = self
            .policy
            .plans
            .get(request.instruction())
            .and_then(|plan| plan.get(request.step()));
        let scores = request
            .candidates()
            .iter()
            .map(|c| {
                if preferred == Some(c) {
                    self.policy.preferred_score
                } else {
                    self.policy.default_score
                }
            })
            .collect();
        ScoreVector::checked(request, scores)
    }

    fn complete(&self, prompt: &str, stop: Option<&str>) -> Result<String, ScorerError> {
        let instruction = instruction_of(prompt).unwrap_or_default();
        let responses = self
            .policy
            .completions
            .get(instruction)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| ScorerError::NoScriptedCompletion(instruction.to_owned()))?;
        let attempt = regeneration_attempt(prompt).min(responses.len() - 1);
        Ok(truncate_at_stop(&responses[attempt], stop))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scorer() -> MockScorer {
        let mut p = MockPolicy::default();
        p.plans.insert(
            "put red in the middle".into(),
            vec!["pick_and_place(red block, middle)".into(), "done()".into()],
        );
        p.completions
            .insert("inst-1".into(), vec!["0 -> 1\n1 -> 0".into(), "0 -> 1".into()]);
        MockScorer::new(p).unwrap()
    }

    fn candidates() -> Vec<String> {
        vec![
            "pick_and_place(blue block, middle)".into(),
            "pick_and_place(red block, middle)".into(),
            "done()".into(),
        ]
    }

    #[test]
    fn scripted_step_is_preferred() {
        let s = scorer();
        let r = ScoreRequest::new("p", candidates(), "put red in the middle", 0).unwrap();
        let v = s.score(&r).unwrap();
        assert_eq!(v.log_scores(), &[-10.0, -0.1, -10.0]);
        assert_eq!(v.argmax(), Some(1));
        let r = ScoreRequest::new("p", candidates(), "put red in the middle", 1).unwrap();
        assert_eq!(s.score(&r).unwrap().argmax(), Some(2));
    }

    #[test]
    fn past_the_script_nothing_is_preferred() {
        let s = scorer();
        let r = ScoreRequest::new("p", candidates(), "put red in the middle", 2).unwrap();
        assert_eq!(s.score(&r).unwrap().log_scores(), &[-10.0; 3]);
        let r = ScoreRequest::new("p", candidates(), "unknown", 0).unwrap();
        assert_eq!(s.score(&r).unwrap().argmax(), Some(0));
    }

    #[test]
    fn completion_follows_attempt_number() {
        let s = scorer();
        let first = "Instruction: inst-1\nDependencies:";
        assert_eq!(s.complete(first, None).unwrap(), "0 -> 1\n1 -> 0");
        let second = format!(
            "Instruction: inst-1\n{}\nDependencies:",
            crate::scorer::regeneration_note(&[0, 1])
        );
        assert_eq!(s.complete(&second, None).unwrap(), "0 -> 1");
        let third = format!("{second}\n{}", crate::scorer::regeneration_note(&[0, 1]));
        assert_eq!(s.complete(&third, None).unwrap(), "0 -> 1");
    }

    #[test]
    fn unkeyed_completion_fails() {
        assert_eq!(
            scorer().complete("Instruction: other", None),
            Err(ScorerError::NoScriptedCompletion("other".into()))
        );
    }

    #[test]
    fn stop_sequence_truncates() {
        let s = scorer();
        assert_eq!(s.complete("Instruction: inst-1", Some("\n1")).unwrap(), "0 -> 1");
    }

    #[test]
    fn preferred_must_beat_default() {
        let p = MockPolicy {
            preferred_score: -20.0,
            ..MockPolicy::default()
        };
        assert!(MockScorer::new(p).is_err());
    }

    #[test]
    fn policy_deserializes_with_defaults() {
        let p: MockPolicy = serde_json::from_str(r#"{"plans": {"a": ["done()"]}}"#).unwrap();
        assert_eq!(p.default_score, -10.0);
        assert_eq!(p.preferred_score, -0.1);
        assert_eq!(p.plans["a"], vec!["done()".to_owned()]);
    }
}
