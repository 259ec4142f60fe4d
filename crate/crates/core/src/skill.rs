//! Skill grammar: `name(arg, arg, ...)` commands, skill templates and the
//! enumerated skill set a planner may choose from.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{ObjectKind, WorldState};

/// Name of the terminal command that ends skill-list decoding.
pub const DONE: &str = "done";
/// Name of the idle command handed to robots left without a skill.
pub const STAY: &str = "stay";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SkillError {
    #[error("malformed skill `{text}`: {reason}")]
    MalformedSkill { text: String, reason: String },
    #[error("unknown skill name `{0}`")]
    UnknownSkillName(String),
    #[error("template `{template}` argument {index} has an empty domain")]
    EmptyDomain { template: String, index: usize },
}

/// One executable command: a skill name plus its ordered arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SkillInstance {
    name: String,
    args: Vec<String>,
}

impl SkillInstance {
    pub fn new<N, I, A>(name: N, args: I) -> Self
    where
        N: Into<String>,
        I: IntoIterator<Item = A>,
        A: Into<String>,
    {
        Self {
            name: name.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    pub fn done() -> Self {
        Self::new(DONE, Vec::<String>::new())
    }

    pub fn stay() -> Self {
        Self::new(STAY, Vec::<String>::new())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn args(&self) -> &[String] {
        &self.args
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_done(&self) -> bool {
        self.name == DONE && self.args.is_empty()
    }

    pub fn is_stay(&self) -> bool {
        self.name == STAY && self.args.is_empty()
    }
}

/// Canonical text form: `name(a, b)`.
impl fmt::Display for SkillInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.args.join(", "))
    }
}

impl Serialize for SkillInstance {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SkillInstance {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_skill(&text, None).map_err(serde::de::Error::custom)
    }
}

/// Formats a skill as its canonical command text.
pub fn format_skill(skill: &SkillInstance) -> String {
    skill.to_string()
}

fn malformed(text: &str, reason: impl Into<String>) -> SkillError {
    SkillError::MalformedSkill {
        text: text.to_owned(),
        reason: reason.into(),
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses `name(arg1, arg2, ...)`.
///
/// Arguments are split on top-level commas only, so they may contain spaces
/// (`red block`) and balanced parentheses. When `context` is given the name
/// must be one of its templates (or `done`/`stay`) and the arity must match.
pub fn parse_skill(text: &str, context: Option<&SkillSet>) -> Result<SkillInstance, SkillError> {
    let trimmed = text.trim();
    let open = trimmed
        .find('(')
        .ok_or_else(|| malformed(text, "missing `(`"))?;
    let name = trimmed[..open].trim();
    if name.is_empty() {
        return Err(malformed(text, "empty skill name"));
    }
    if !is_identifier(name) {
        return Err(malformed(text, format!("`{name}` is not an identifier")));
    }

    let body = &trimmed[open + 1..];
    let mut depth = 0usize;
    let mut args = Vec::new();
    let mut current = String::new();
    let mut close = None;
    for (i, c) in body.char_indices() {
        match c {
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' if depth == 0 => {
                close = Some(i);
                break;
            }
            ')' => {
                depth -= 1;
                current.push(c);
            }
            ',' if depth == 0 => {
                args.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    let close = close.ok_or_else(|| malformed(text, "unbalanced parentheses"))?;
    if !body[close + 1..].trim().is_empty() {
        return Err(malformed(text, "trailing text after `)`"));
    }
    args.push(current);

    let args: Vec<String> = if args.len() == 1 && args[0].trim().is_empty() {
        Vec::new()
    } else {
        let mut out = Vec::with_capacity(args.len());
        for arg in args {
            let arg = arg.trim();
            if arg.is_empty() {
                return Err(malformed(text, "empty argument"));
            }
            out.push(arg.to_owned());
        }
        out
    };

    let skill = SkillInstance {
        name: name.to_owned(),
        args,
    };

    let expected = if name == DONE || name == STAY {
        Some(0)
    } else {
        match context {
            Some(set) => match set.template(name) {
                Some(t) => Some(t.arity()),
                None => return Err(SkillError::UnknownSkillName(name.to_owned())),
            },
            None => None,
        }
    };
    if let Some(arity) = expected {
        if arity != skill.arity() {
            return Err(malformed(
                text,
                format!("`{name}` takes {arity} argument(s), got {}", skill.arity()),
            ));
        }
    }
    Ok(skill)
}

/// Which robot kind can execute a template's instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotKind {
    Arm,
    Mobile,
}

impl fmt::Display for RobotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobotKind::Arm => f.write_str("arm"),
            RobotKind::Mobile => f.write_str("mobile"),
        }
    }
}

/// The entities an argument position may range over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ArgDomain {
    /// Movable objects, optionally filtered by kind and color.
    Object {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        object_kinds: Option<Vec<ObjectKind>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        colors: Option<Vec<String>>,
    },
    /// Named surfaces, optionally filtered by area.
    Surface {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        areas: Option<Vec<String>>,
    },
    /// Rooms.
    Room,
    /// Anywhere an object can be put: surfaces (area-filtered) plus all objects.
    Placement {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        areas: Option<Vec<String>>,
    },
}

/// Classification of a single skill argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgRef {
    Object,
    Location,
    Literal,
}

impl ArgDomain {
    fn resolve(&self, world: &WorldState) -> Vec<String> {
        let area_ok = |areas: &Option<Vec<String>>, area: &str| {
            areas.as_ref().is_none_or(|a| a.iter().any(|x| x == area))
        };
        let mut out: Vec<String> = match self {
            ArgDomain::Object {
                object_kinds,
                colors,
            } => world
                .objects()
                .filter(|o| object_kinds.as_ref().is_none_or(|k| k.contains(&o.kind)))
                .filter(|o| colors.as_ref().is_none_or(|c| c.contains(&o.color)))
                .map(|o| o.name.clone())
                .collect(),
            ArgDomain::Surface { areas } => world
                .surfaces()
                .iter()
                .filter(|s| area_ok(areas, &s.area))
                .map(|s| s.name.clone())
                .collect(),
            ArgDomain::Room => world.rooms().iter().map(|r| r.name.clone()).collect(),
            ArgDomain::Placement { areas } => world
                .surfaces()
                .iter()
                .filter(|s| area_ok(areas, &s.area))
                .map(|s| s.name.clone())
                .chain(world.objects().map(|o| o.name.clone()))
                .collect(),
        };
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillTemplate {
    pub name: String,
    pub robot_kind: RobotKind,
    pub params: Vec<ArgDomain>,
}

impl SkillTemplate {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// Templates plus every concrete instance valid in one world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillSet {
    templates: Vec<SkillTemplate>,
    instances: Vec<SkillInstance>,
}

impl SkillSet {
    pub fn templates(&self) -> &[SkillTemplate] {
        &self.templates
    }

    pub fn instances(&self) -> &[SkillInstance] {
        &self.instances
    }

    pub fn template(&self, name: &str) -> Option<&SkillTemplate> {
        self.templates.iter().find(|t| t.name == name)
    }

    pub fn contains(&self, skill: &SkillInstance) -> bool {
        self.instances.contains(skill)
    }

    /// Robot kind able to run `skill`, `None` for `done`/`stay`/unknown names.
    pub fn robot_kind(&self, skill: &SkillInstance) -> Option<RobotKind> {
        self.template(skill.name()).map(|t| t.robot_kind)
    }

    /// Classifies each argument as an object, location or literal reference.
    pub fn classify(&self, skill: &SkillInstance, world: &WorldState) -> Vec<ArgRef> {
        skill
            .args()
            .iter()
            .map(|a| {
                if world.object(a).is_some() {
                    ArgRef::Object
                } else if world.surface(a).is_some() || world.room(a).is_some() {
                    ArgRef::Location
                } else {
                    ArgRef::Literal
                }
            })
            .collect()
    }
}

/// Instantiates every template against `world`.
///
/// Output order is template order, then lexicographic argument order, with
/// duplicates removed and `done()`, `stay()` appended once each.
pub fn enumerate_skill_set(
    world: &WorldState,
    templates: &[SkillTemplate],
) -> Result<SkillSet, SkillError> {
    let mut seen = HashSet::new();
    let mut instances = Vec::new();
    for template in templates {
        let mut domains = Vec::with_capacity(template.params.len());
        for (index, param) in template.params.iter().enumerate() {
            let values = param.resolve(world);
            if values.is_empty() {
                return Err(SkillError::EmptyDomain {
                    template: template.name.clone(),
                    index,
                });
            }
            domains.push(values);
        }
        // odometer over the already-sorted domains gives lexicographic order
        let mut idx = vec![0usize; domains.len()];
        'instances: loop {
            let args: Vec<String> = idx
                .iter()
                .zip(&domains)
                .map(|(&i, d)| d[i].clone())
                .collect();
            let skill = SkillInstance::new(template.name.clone(), args);
            if seen.insert(skill.clone()) {
                instances.push(skill);
            }
            for pos in (0..domains.len()).rev() {
                idx[pos] += 1;
                if idx[pos] < domains[pos].len() {
                    continue 'instances;
                }
                idx[pos] = 0;
            }
            break;
        }
    }
    for terminal in [SkillInstance::done(), SkillInstance::stay()] {
        if seen.insert(terminal.clone()) {
            instances.push(terminal);
        }
    }
    Ok(SkillSet {
        templates: templates.to_vec(),
        instances,
    })
}

/// A decoded plan: skills in decode order, never containing `done()`/`stay()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillList {
    pub source_instruction: String,
    pub items: Vec<SkillInstance>,
}

impl SkillList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
