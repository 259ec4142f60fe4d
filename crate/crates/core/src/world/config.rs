//! Environment and scenario files (JSON).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::exec::EXECUTABLE;
use super::goal::{GoalSpec, Predicate};
use super::{InvalidWorld, Object, ObjectKind, Robot, Room, Support, Surface, WorldState};
use crate::scorer::MockPolicy;
use crate::skill::{enumerate_skill_set, SkillSet, SkillTemplate};

const DONE_TEXT: &str = "done()";

pub use crate::scorer::PromptConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}:{column}: {message}")]
    Syntax {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: {field}: {message}")]
    Invalid {
        origin: String,
        field: String,
        message: String,
    },
}

impl ConfigError {
    fn invalid(origin: &str, field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            origin: origin.to_owned(),
            field: field.into(),
            message: message.into(),
        }
    }

    fn from_world(origin: &str, e: InvalidWorld) -> Self {
        Self::invalid(origin, e.field, e.message)
    }

    fn from_json(origin: &str, e: serde_json::Error) -> Self {
        ConfigError::Syntax {
            origin: origin.to_owned(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// Object as written in config files: resting `on` a surface/object, or `held_by` a robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub name: String,
    pub kind: ObjectKind,
    pub color: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_by: Option<String>,
}

fn resolve_objects(
    origin: &str,
    field: &str,
    entries: &[ObjectEntry],
    surfaces: &[Surface],
) -> Result<Vec<Object>, ConfigError> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let support = match (&e.on, &e.held_by) {
                (Some(on), None) => {
                    if surfaces.iter().any(|s| &s.name == on) {
                        Support::Surface(on.clone())
                    } else {
                        Support::Object(on.clone())
                    }
                }
                (None, Some(r)) => Support::Robot(r.clone()),
                _ => {
                    return Err(ConfigError::invalid(
                        origin,
                        format!("{field}[{i}]"),
                        "exactly one of `on` or `held_by` is required",
                    ))
                }
            };
            Ok(Object {
                name: e.name.clone(),
                kind: e.kind,
                color: e.color.clone(),
                support,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedGoal {
    pub name: String,
    #[serde(default)]
    pub instruction: String,
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    name: String,
    #[serde(default)]
    description: String,
    rooms: Vec<Room>,
    surfaces: Vec<Surface>,
    #[serde(default)]
    objects: Vec<ObjectEntry>,
    robots: Vec<Robot>,
    skill_templates: Vec<SkillTemplate>,
    #[serde(default)]
    conditions: BTreeMap<u32, BTreeMap<String, Vec<String>>>,
    #[serde(default)]
    goals: Vec<NamedGoal>,
    #[serde(default)]
    prompts: PromptConfig,
}

/// A loaded environment: initial world, skill templates, robot constraint
/// conditions and prompt text.
#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub description: String,
    pub world: WorldState,
    pub templates: Vec<SkillTemplate>,
    /// Condition id -> robot id -> graspable colors.
    pub conditions: BTreeMap<u32, BTreeMap<String, Vec<String>>>,
    pub goals: Vec<NamedGoal>,
    pub prompts: PromptConfig,
}

const BUNDLED: [(&str, &str); 3] = [
    ("A", include_str!("../../data/envs/env_a.json")),
    ("B", include_str!("../../data/envs/env_b.json")),
    ("C", include_str!("../../data/envs/env_c.json")),
];

impl Environment {
    /// One of the shipped environments `A`, `B` or `C`.
    pub fn bundled(name: &str) -> Option<Environment> {
        let key = name.trim_start_matches("env_").trim_start_matches("env-").to_ascii_uppercase();
        BUNDLED.iter().find(|(n, _)| *n == key).map(|(n, text)| {
            parse_environment(text, &format!("bundled:{n}")).expect("bundled environment is valid")
        })
    }

    /// Initial world with the given grasp condition applied. Condition ids
    /// absent from the file leave every robot as configured.
    pub fn world_for(&self, condition: u32) -> Result<WorldState, ConfigError> {
        let mut world = self.world.clone();
        if let Some(overrides) = self.conditions.get(&condition) {
            for (robot, colors) in overrides {
                let r = world.robot_mut(robot).ok_or_else(|| {
                    ConfigError::invalid(&self.name, format!("conditions.{condition}"), format!("unknown robot `{robot}`"))
                })?;
                r.graspable = Some(colors.iter().cloned().collect());
            }
        }
        Ok(world)
    }

    pub fn skill_set(&self, world: &WorldState) -> Result<SkillSet, ConfigError> {
        enumerate_skill_set(world, &self.templates)
            .map_err(|e| ConfigError::invalid(&self.name, "skill_templates", e.to_string()))
    }

    pub fn goal(&self, name: &str) -> Option<GoalSpec> {
        self.goals
            .iter()
            .find(|g| g.name == name)
            .map(|g| GoalSpec::new(g.instruction.clone(), g.predicates.clone()))
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_environment(path: impl AsRef<Path>) -> Result<Environment, ConfigError> {
    let path = path.as_ref();
    parse_environment(&read(path)?, &path.display().to_string())
}

/// Parses and validates environment JSON; `origin` labels diagnostics.
pub fn parse_environment(text: &str, origin: &str) -> Result<Environment, ConfigError> {
    let file: EnvFile = serde_json::from_str(text).map_err(|e| ConfigError::from_json(origin, e))?;
    let objects = resolve_objects(origin, "objects", &file.objects, &file.surfaces)?;
    let world = WorldState::new(file.rooms, file.surfaces, objects, file.robots)
        .map_err(|e| ConfigError::from_world(origin, e))?;

    for (i, t) in file.skill_templates.iter().enumerate() {
        match EXECUTABLE.iter().find(|(n, _, _)| *n == t.name) {
            None => {
                return Err(ConfigError::invalid(
                    origin,
                    format!("skill_templates[{i}].name"),
                    format!("`{}` has no execution semantics", t.name),
                ))
            }
            Some(&(_, arity, kind)) => {
                if t.arity() != arity {
                    return Err(ConfigError::invalid(
                        origin,
                        format!("skill_templates[{i}].params"),
                        format!("`{}` takes {arity} argument(s)", t.name),
                    ));
                }
                if t.robot_kind != kind {
                    return Err(ConfigError::invalid(
                        origin,
                        format!("skill_templates[{i}].robot_kind"),
                        format!("`{}` is a {kind} skill", t.name),
                    ));
                }
            }
        }
    }
    enumerate_skill_set(&world, &file.skill_templates)
        .map_err(|e| ConfigError::invalid(origin, "skill_templates", e.to_string()))?;

    for (id, overrides) in &file.conditions {
        for robot in overrides.keys() {
            if world.robot(robot).is_none() {
                return Err(ConfigError::invalid(
                    origin,
                    format!("conditions.{id}"),
                    format!("unknown robot `{robot}`"),
                ));
            }
        }
    }
    for (i, g) in file.goals.iter().enumerate() {
        GoalSpec::new(g.instruction.clone(), g.predicates.clone())
            .validate(&world)
            .map_err(|m| ConfigError::invalid(origin, format!("goals[{i}]"), m))?;
    }

    Ok(Environment {
        name: file.name,
        description: file.description,
        world,
        templates: file.skill_templates,
        conditions: file.conditions,
        goals: file.goals,
        prompts: file.prompts,
    })
}

/// Goal given inline or by name from the environment's `goals` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoalRef {
    Named(String),
    Inline(Vec<Predicate>),
}

/// Scripted responses for the mock scorer bundled with a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSection {
    /// Preferred command per decode step; `done()` is implied after the last.
    pub plan: Vec<String>,
    /// Edge text per dependency-generation attempt.
    #[serde(default)]
    pub graph: Vec<String>,
    #[serde(default)]
    pub latency_ms: u64,
}

/// One evaluation task: instruction, goal, optimum step count and
/// optionally a replacement object layout and a mock script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
    #[serde(default)]
    pub group: String,
    pub instruction: String,
    pub goal: GoalRef,
    pub min_steps: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<ObjectEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockSection>,
}

impl Scenario {
    /// Initial world and goal for this scenario under a grasp condition.
    pub fn resolve(&self, env: &Environment, condition: u32) -> Result<(WorldState, GoalSpec), ConfigError> {
        let origin = format!("scenario {}", self.name);
        let mut world = env.world_for(condition)?;
        if let Some(entries) = &self.objects {
            let objects = resolve_objects(&origin, "objects", entries, world.surfaces())?;
            world
                .replace_objects(objects)
                .map_err(|e| ConfigError::from_world(&origin, e))?;
        }
        let goal = match &self.goal {
            GoalRef::Inline(p) => GoalSpec::new(self.instruction.clone(), p.clone()),
            GoalRef::Named(n) => env
                .goal(n)
                .ok_or_else(|| ConfigError::invalid(&origin, "goal", format!("unknown goal `{n}`")))?,
        };
        goal.validate(&world)
            .map_err(|m| ConfigError::invalid(&origin, "goal", m))?;
        Ok((world, goal))
    }

    pub fn mock_policy(&self) -> Option<MockPolicy> {
        self.mock.as_ref().map(|m| {
            let mut policy = MockPolicy {
                latency_ms: m.latency_ms,
                ..MockPolicy::default()
            };
            let mut plan = m.plan.clone();
            if plan.last().is_none_or(|c| c != DONE_TEXT) {
                plan.push(DONE_TEXT.to_owned());
            }
            policy.plans.insert(self.instruction.clone(), plan);
            if !m.graph.is_empty() {
                policy.completions.insert(self.instruction.clone(), m.graph.clone());
            }
            policy
        })
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ConfigError> {
    let path = path.as_ref();
    parse_scenario(&read(path)?, &path.display().to_string())
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, ConfigError> {
    let s: Scenario = serde_json::from_str(text).map_err(|e| ConfigError::from_json(origin, e))?;
    if s.min_steps == 0 {
        return Err(ConfigError::invalid(origin, "min_steps", "must be at least 1"));
    }
    if let Some(m) = &s.mock {
        for (i, cmd) in m.plan.iter().enumerate() {
            crate::skill::parse_skill(cmd, None)
                .map_err(|e| ConfigError::invalid(origin, format!("mock.plan[{i}]"), e.to_string()))?;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skill::RobotKind;

    #[test]
    fn bundled_environment_a_has_two_arms() {
        let env = Environment::bundled("A").unwrap();
        let kinds: Vec<RobotKind> = env.world.robots().iter().map(|r| r.kind).collect();
        assert_eq!(kinds, [RobotKind::Arm, RobotKind::Arm]);
    }

    #[test]
    fn bundled_environment_b_adds_a_mobile_robot() {
        let env = Environment::bundled("B").unwrap();
        let kinds: Vec<RobotKind> = env.world.robots().iter().map(|r| r.kind).collect();
        assert_eq!(kinds, [RobotKind::Arm, RobotKind::Arm, RobotKind::Mobile]);
    }

    #[test]
    fn bundled_environment_c_has_five_robots() {
        let env = Environment::bundled("C").unwrap();
        let kinds: Vec<RobotKind> = env.world.robots().iter().map(|r| r.kind).collect();
        assert_eq!(
            kinds,
            [RobotKind::Arm, RobotKind::Arm, RobotKind::Arm, RobotKind::Mobile, RobotKind::Mobile]
        );
        let kitchen_arms = env
            .world
            .robots()
            .iter()
            .filter(|r| r.kind == RobotKind::Arm && r.room == "kitchen")
            .count();
        assert_eq!(kitchen_arms, 1);
    }

    #[test]
    fn conditions_follow_the_grasp_table() {
        let env = Environment::bundled("A").unwrap();
        let colors = |w: &WorldState, id: &str| -> Option<Vec<String>> {
            w.robot(id).unwrap().graspable.as_ref().map(|g| g.iter().cloned().collect())
        };
        let c1 = env.world_for(1).unwrap();
        assert_eq!(colors(&c1, "robot1"), None);
        let c2 = env.world_for(2).unwrap();
        assert_eq!(colors(&c2, "robot1").unwrap(), ["blue", "red", "yellow"]);
        assert_eq!(colors(&c2, "robot2").unwrap(), ["green", "red"]);
        let c3 = env.world_for(3).unwrap();
        assert_eq!(colors(&c3, "robot1").unwrap(), ["blue", "red"]);
        assert_eq!(colors(&c3, "robot2").unwrap(), ["green", "yellow"]);
    }

    const MINIMAL: &str = r#"{
        "name": "t",
        "rooms": [{"name": "living room", "dock": [0, -1]}],
        "surfaces": [{"name": "middle", "room": "living room", "area": "table", "position": [0, 0]}],
        "objects": [{"name": "red block", "kind": "block", "color": "red", "on": "OBJECT_SUPPORT"}],
        "robots": [{"id": "robot1", "kind": "arm", "room": "living room", "position": [-0.6, 0], "workspace": "table"}],
        "skill_templates": [{"name": "pick_and_place", "robot_kind": "arm",
            "params": [{"kind": "object"}, {"kind": "placement"}]}]
    }"#;

    #[test]
    fn minimal_config_loads() {
        let env = parse_environment(&MINIMAL.replace("OBJECT_SUPPORT", "middle"), "t").unwrap();
        assert_eq!(env.world.objects().count(), 1);
    }

    #[test]
    fn object_on_missing_surface_is_invalid() {
        let err = parse_environment(&MINIMAL.replace("OBJECT_SUPPORT", "nowhere"), "t").unwrap_err();
        match err {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "objects[0].on"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_environment("{\n  \"name\": \"t\",\n  oops\n}", "t").unwrap_err();
        match err {
            ConfigError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn templates_need_semantics() {
        let text = MINIMAL
            .replace("OBJECT_SUPPORT", "middle")
            .replace("\"pick_and_place\", \"robot_kind\": \"arm\"", "\"teleport\", \"robot_kind\": \"arm\"");
        let err = parse_environment(&text, "t").unwrap_err();
        assert!(err.to_string().contains("teleport"), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_environment("/nonexistent/env.json"),
            Err(ConfigError::Io { .. })
        ));
    }
}
