//! Greedy skill-list decoding.
//!
//! At every step the whole skill set (minus `stay()`) is scored as a
//! continuation of the prompt plus the skills chosen so far, and the
//! highest-scoring candidate is appended. Decoding ends when `done()` wins.
//! Output can only ever contain members of the skill set.

use log::debug;
use thiserror::Error;

use crate::scorer::{assemble_prompt, PromptParts, PromptSections, ScoreRequest, Scorer, ScorerError};
use crate::skill::{SkillInstance, SkillList, SkillSet};

pub const DEFAULT_MAX_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("no done() after {max_len} skills")]
    DecodeOverflow {
        max_len: usize,
        decoded: Vec<SkillInstance>,
    },
    #[error("skill set has no done() candidate")]
    NoDoneCandidate,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// Decodes `instruction` into a skill list.
///
/// Makes at most `max_len + 1` scoring calls: if the skill chosen after
/// `max_len` skills is still not `done()`, fails with
/// [`DecodeError::DecodeOverflow`].
pub fn build_skill_list<S: Scorer + ?Sized>(
    instruction: &str,
    skills: &SkillSet,
    scorer: &S,
    sections: &PromptSections,
    max_len: usize,
) -> Result<SkillList, DecodeError> {
    let candidates: Vec<&SkillInstance> = skills.instances().iter().filter(|s| !s.is_stay()).collect();
    if !candidates.iter().any(|s| s.is_done()) {
        return Err(DecodeError::NoDoneCandidate);
    }
    let texts: Vec<String> = candidates.iter().map(|s| s.to_string()).collect();

    let mut history: Vec<SkillInstance> = Vec::new();
    loop {
        let prompt = assemble_prompt(&PromptParts {
            sections,
            instruction,
            history: &history,
        });
        let request = ScoreRequest::new(prompt, texts.clone(), instruction, history.len())?;
        let scores = scorer.score(&request)?;
        let best = scores.argmax().expect("request has candidates");
        let chosen = candidates[best];
        debug!("step {}: {} ({:.3})", history.len(), chosen, scores.log_scores()[best]);
        if chosen.is_done() {
            break;
        }
        if history.len() == max_len {
            return Err(DecodeError::DecodeOverflow {
                max_len,
                decoded: history,
            });
        }
        history.push(chosen.clone());
    }
    Ok(SkillList {
        source_instruction: instruction.to_owned(),
        items: history,
    })
}
