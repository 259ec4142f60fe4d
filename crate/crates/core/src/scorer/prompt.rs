//! Prompt text for skill decoding and dependency generation.

use serde::{Deserialize, Serialize};

use crate::skill::SkillInstance;

pub const INSTRUCTION_PREFIX: &str = "Instruction: ";
pub const REGENERATION_PREFIX: &str = "Note: the previous dependencies contained the cycle";

/// Fixed prompt sections, emitted in order and separated by blank lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSections {
    pub purpose: String,
    #[serde(default)]
    pub rules: String,
    #[serde(default)]
    pub considerations: String,
    #[serde(default)]
    pub examples: Vec<String>,
}

impl PromptSections {
    pub fn default_skills() -> Self {
        Self {
            purpose: "You write plans for a team of robots working together. \
                      Each line of a plan is one skill call. The plan ends with done()."
                .into(),
            rules: "Rules:\n\
                    - pick_and_place(object, place) moves an object with a robot arm.\n\
                    - pick_up(object) and put_down(place) are used by mobile robots to carry an object.\n\
                    - move_to(room) drives a mobile robot to another room.\n\
                    - Use only objects and places that exist."
                .into(),
            considerations: "Considerations:\n\
                             - A block that has something on top of it cannot be picked.\n\
                             - Only one block fits on a cell or on top of another block.\n\
                             - Build stacks from the bottom up."
                .into(),
            examples: vec![
                "Instruction: put the red block in the middle\n\
                 pick_and_place(red block, middle)\n\
                 done()"
                    .into(),
                "Instruction: stack the blue block on the green block\n\
                 pick_and_place(blue block, green block)\n\
                 done()"
                    .into(),
                "Instruction: move the yellow block to the upper left corner and the green block to the lower right corner\n\
                 pick_and_place(yellow block, upper left corner)\n\
                 pick_and_place(green block, lower right corner)\n\
                 done()"
                    .into(),
                "Instruction: make a tower of the red, blue and yellow blocks in the middle, red at the bottom\n\
                 pick_and_place(red block, middle)\n\
                 pick_and_place(blue block, red block)\n\
                 pick_and_place(yellow block, blue block)\n\
                 done()"
                    .into(),
                "Instruction: bring the green block from the kitchen and put it on the table\n\
                 pick_up(green block)\n\
                 move_to(living room)\n\
                 put_down(middle)\n\
                 done()"
                    .into(),
            ],
        }
    }

    pub fn default_dependencies() -> Self {
        Self {
            purpose: "You list ordering constraints between the numbered skills of a plan. \
                      Write one line `i -> j` for each skill j that can only start after skill i has finished."
                .into(),
            rules: "Rules:\n\
                    - Skills that do not depend on each other get no line.\n\
                    - A skill that places something on an object depends on the skill that moves that object.\n\
                    - The dependencies must not contain a cycle."
                .into(),
            considerations: String::new(),
            examples: vec![
                "Instruction: make a tower of the red and blue blocks in the middle, red at the bottom\n\
                 Skills:\n\
                 0: pick_and_place(red block, middle)\n\
                 1: pick_and_place(blue block, red block)\n\
                 Dependencies:\n\
                 0 -> 1"
                    .into(),
                "Instruction: move the yellow block to the upper left corner and the green block to the lower right corner\n\
                 Skills:\n\
                 0: pick_and_place(yellow block, upper left corner)\n\
                 1: pick_and_place(green block, lower right corner)\n\
                 Dependencies:\n\
                 none"
                    .into(),
                "Instruction: bring the green block from the kitchen and put it on the table\n\
                 Skills:\n\
                 0: pick_up(green block)\n\
                 1: move_to(living room)\n\
                 2: put_down(middle)\n\
                 Dependencies:\n\
                 0 -> 1\n\
                 1 -> 2"
                    .into(),
            ],
        }
    }
}

/// Per-environment prompt overrides; missing parts fall back to defaults.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub skills: Option<PromptSections>,
    pub dependencies: Option<PromptSections>,
}

impl PromptConfig {
    pub fn skill_sections(&self) -> PromptSections {
        self.skills.clone().unwrap_or_else(PromptSections::default_skills)
    }

    pub fn dependency_sections(&self) -> PromptSections {
        self.dependencies
            .clone()
            .unwrap_or_else(PromptSections::default_dependencies)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PromptParts<'a> {
    pub sections: &'a PromptSections,
    pub instruction: &'a str,
    pub history: &'a [SkillInstance],
}

fn push_sections(out: &mut Vec<String>, sections: &PromptSections) {
    for s in [&sections.purpose, &sections.rules, &sections.considerations] {
        if !s.trim().is_empty() {
            out.push(s.trim_end().to_owned());
        }
    }
    out.extend(sections.examples.iter().map(|e| e.trim_end().to_owned()));
}

/// Sections, then the instruction line, then one line per decoded skill.
/// With an empty history the prompt ends with the instruction line.
pub fn assemble_prompt(parts: &PromptParts<'_>) -> String {
    let mut blocks = Vec::new();
    push_sections(&mut blocks, parts.sections);
    let mut tail = format!("{INSTRUCTION_PREFIX}{}", parts.instruction);
    for skill in parts.history {
        tail.push('\n');
        tail.push_str(&skill.to_string());
    }
    blocks.push(tail);
    blocks.join("\n\n")
}

#[derive(Debug, Clone, Copy)]
pub struct DependencyPromptParts<'a> {
    pub sections: &'a PromptSections,
    pub instruction: &'a str,
    pub skills: &'a [SkillInstance],
    /// Cycles found in earlier attempts, oldest first.
    pub failed_cycles: &'a [Vec<usize>],
}

/// `Note: ...` line appended for each rejected cyclic answer.
pub fn regeneration_note(cycle: &[usize]) -> String {
    let mut path: Vec<String> = cycle.iter().map(usize::to_string).collect();
    if let Some(first) = cycle.first() {
        path.push(first.to_string());
    }
    format!(
        "{REGENERATION_PREFIX} {}. Write dependencies without a cycle.",
        path.join(" -> ")
    )
}

pub fn dependency_prompt(parts: &DependencyPromptParts<'_>) -> String {
    let mut blocks = Vec::new();
    push_sections(&mut blocks, parts.sections);
    let mut tail = format!("{INSTRUCTION_PREFIX}{}\nSkills:", parts.instruction);
    for (i, skill) in parts.skills.iter().enumerate() {
        tail.push_str(&format!("\n{i}: {skill}"));
    }
    for cycle in parts.failed_cycles {
        tail.push('\n');
        tail.push_str(&regeneration_note(cycle));
    }
    tail.push_str("\nDependencies:");
    blocks.push(tail);
    blocks.join("\n\n")
}

/// Text of the last instruction line in a prompt.
pub fn instruction_of(prompt: &str) -> Option<&str> {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix(INSTRUCTION_PREFIX))
        .map(str::trim)
}

/// Number of regeneration notes in a prompt, i.e. the zero-based attempt.
pub fn regeneration_attempt(prompt: &str) -> usize {
    prompt
        .lines()
        .filter(|l| l.starts_with(REGENERATION_PREFIX))
        .count()
}
