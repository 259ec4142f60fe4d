//! Tabletop and household world model: rooms, surfaces, stackable objects and
//! robots.

mod config;
mod exec;
mod goal;
mod search;

pub use config::{
    load_environment, load_scenario, parse_environment, parse_scenario, ConfigError,
    Environment, GoalRef, MockSection, NamedGoal, PromptConfig, Scenario,
};
pub use exec::{execute_round, feasible, ActionOutcome, Infeasible};
pub use goal::{check_goal, GoalSpec, Predicate};
pub use search::{min_steps, SearchLimit, SearchOutcome};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::skill::RobotKind;

/// Plan-view coordinates, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub name: String,
    /// Where a mobile robot stands after entering the room.
    pub dock: Point,
    #[serde(default)]
    pub connected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Surface {
    pub name: String,
    pub room: String,
    /// Reach group, e.g. `table`. Arm robots reach exactly one area.
    pub area: String,
    pub position: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Block,
    Bowl,
}

/// What an object rests on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Surface(String),
    Object(String),
    Robot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub name: String,
    pub kind: ObjectKind,
    pub color: String,
    pub support: Support,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub id: String,
    pub kind: RobotKind,
    pub room: String,
    pub position: Point,
    /// Surface area an arm can reach; unused for mobile robots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace: Option<String>,
    /// Colors an arm may grasp, `None` meaning unrestricted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graspable: Option<BTreeSet<String>>,
}

impl Robot {
    pub fn can_grasp(&self, color: &str) -> bool {
        self.graspable.as_ref().is_none_or(|g| g.contains(color))
    }
}

/// Complete world snapshot. Cloned per round; never shared mutably.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    // static layout, shared between the many clones made during planning
    rooms: Arc<[Room]>,
    surfaces: Arc<[Surface]>,
    objects: Vec<Object>,
    robots: Vec<Robot>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidWorld {
    pub field: String,
    pub message: String,
}

impl fmt::Display for InvalidWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for InvalidWorld {}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> InvalidWorld {
    InvalidWorld {
        field: field.into(),
        message: message.into(),
    }
}

impl WorldState {
    /// Builds a world and checks every structural invariant.
    pub fn new(
        rooms: Vec<Room>,
        surfaces: Vec<Surface>,
        objects: Vec<Object>,
        robots: Vec<Robot>,
    ) -> Result<Self, InvalidWorld> {
        let world = Self {
            rooms: rooms.into(),
            surfaces: surfaces.into(),
            objects,
            robots,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn rooms(&self) -> &[Room] {
        &self.rooms
    }

    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn objects(&self) -> impl Iterator<Item = &Object> + '_ {
        self.objects.iter()
    }

    pub fn robots(&self) -> &[Robot] {
        &self.robots
    }

    pub fn room(&self, name: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.name == name)
    }

    pub fn surface(&self, name: &str) -> Option<&Surface> {
        self.surfaces.iter().find(|s| s.name == name)
    }

    pub fn object(&self, name: &str) -> Option<&Object> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn robot(&self, id: &str) -> Option<&Robot> {
        self.robots.iter().find(|r| r.id == id)
    }

    pub(crate) fn object_mut(&mut self, name: &str) -> Option<&mut Object> {
        self.objects.iter_mut().find(|o| o.name == name)
    }

    pub(crate) fn robot_mut(&mut self, id: &str) -> Option<&mut Robot> {
        self.robots.iter_mut().find(|r| r.id == id)
    }

    pub(crate) fn replace_objects(&mut self, objects: Vec<Object>) -> Result<(), InvalidWorld> {
        let previous = std::mem::replace(&mut self.objects, objects);
        if let Err(e) = self.validate() {
            self.objects = previous;
            return Err(e);
        }
        Ok(())
    }

    /// Objects resting directly on `name` (a surface, block, bowl or robot).
    pub fn supported_by<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Object> + 'a {
        self.objects.iter().filter(move |o| match &o.support {
            Support::Surface(s) | Support::Object(s) | Support::Robot(s) => s == name,
        })
    }

    /// True when nothing rests on the object (an empty bowl counts as clear).
    pub fn is_clear(&self, object: &str) -> bool {
        self.supported_by(object).next().is_none()
    }

    pub fn is_surface_empty(&self, surface: &str) -> bool {
        self.objects
            .iter()
            .all(|o| o.support != Support::Surface(surface.to_owned()))
    }

    pub fn carried_by(&self, robot: &str) -> Option<&Object> {
        self.objects
            .iter()
            .find(|o| o.support == Support::Robot(robot.to_owned()))
    }

    /// Surface at the bottom of the object's stack, `None` while carried.
    pub fn base_surface(&self, object: &str) -> Option<&Surface> {
        let mut current = self.object(object)?;
        for _ in 0..=self.objects.len() {
            match &current.support {
                Support::Surface(s) => return self.surface(s),
                Support::Object(o) => current = self.object(o)?,
                Support::Robot(_) => return None,
            }
        }
        None
    }

    /// Robot holding the object, directly or through the stack beneath it.
    pub fn carrier(&self, object: &str) -> Option<&Robot> {
        let mut current = self.object(object)?;
        for _ in 0..=self.objects.len() {
            match &current.support {
                Support::Surface(_) => return None,
                Support::Object(o) => current = self.object(o)?,
                Support::Robot(r) => return self.robot(r),
            }
        }
        None
    }

    pub fn object_room(&self, object: &str) -> Option<&str> {
        if let Some(s) = self.base_surface(object) {
            return Some(&s.room);
        }
        self.carrier(object).map(|r| r.room.as_str())
    }

    pub fn object_position(&self, object: &str) -> Option<Point> {
        if let Some(s) = self.base_surface(object) {
            return Some(s.position);
        }
        self.carrier(object).map(|r| r.position)
    }

    pub fn rooms_connected(&self, a: &str, b: &str) -> bool {
        let listed = |x: &str, y: &str| self.room(x).is_some_and(|r| r.connected.iter().any(|c| c == y));
        listed(a, b) || listed(b, a)
    }

    /// Short stable digest of the dynamic state (object supports, robot poses).
    pub fn state_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for o in &self.objects {
            hasher.update(o.name.as_bytes());
            hasher.update([0]);
            let (tag, target) = match &o.support {
                Support::Surface(s) => (b's', s),
                Support::Object(s) => (b'o', s),
                Support::Robot(s) => (b'r', s),
            };
            hasher.update([tag]);
            hasher.update(target.as_bytes());
            hasher.update([0]);
        }
        for r in &self.robots {
            hasher.update(r.id.as_bytes());
            hasher.update([0]);
            hasher.update(r.room.as_bytes());
            hasher.update([0]);
            hasher.update(r.position.x.to_le_bytes());
            hasher.update(r.position.y.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Ordered key of the dynamic state, used to deduplicate search nodes.
    pub(crate) fn state_key(&self) -> Vec<(String, Support)> {
        let mut key: Vec<(String, Support)> = self
            .objects
            .iter()
            .map(|o| (o.name.clone(), o.support.clone()))
            .collect();
        key.extend(
            self.robots
                .iter()
                .map(|r| (r.id.clone(), Support::Surface(r.room.clone()))),
        );
        key
    }

    fn validate(&self) -> Result<(), InvalidWorld> {
        let mut names = BTreeSet::new();
        for (i, r) in self.rooms.iter().enumerate() {
            if !names.insert(r.name.as_str()) {
                return Err(invalid(format!("rooms[{i}].name"), format!("duplicate name `{}`", r.name)));
            }
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            if !names.insert(s.name.as_str()) {
                return Err(invalid(format!("surfaces[{i}].name"), format!("duplicate name `{}`", s.name)));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !names.insert(o.name.as_str()) {
                return Err(invalid(format!("objects[{i}].name"), format!("duplicate name `{}`", o.name)));
            }
        }
        let mut ids = BTreeSet::new();
        for (i, r) in self.robots.iter().enumerate() {
            if !ids.insert(r.id.as_str()) {
                return Err(invalid(format!("robots[{i}].id"), format!("duplicate robot id `{}`", r.id)));
            }
        }

        for (i, r) in self.rooms.iter().enumerate() {
            for c in &r.connected {
                if self.room(c).is_none() {
                    return Err(invalid(format!("rooms[{i}].connected"), format!("unknown room `{c}`")));
                }
            }
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            if self.room(&s.room).is_none() {
                return Err(invalid(format!("surfaces[{i}].room"), format!("unknown room `{}`", s.room)));
            }
        }
        for (i, r) in self.robots.iter().enumerate() {
            if self.room(&r.room).is_none() {
                return Err(invalid(format!("robots[{i}].room"), format!("unknown room `{}`", r.room)));
            }
            match (r.kind, &r.workspace) {
                (RobotKind::Arm, None) => {
                    return Err(invalid(format!("robots[{i}].workspace"), "arm robots need a workspace area"));
                }
                (RobotKind::Arm, Some(area)) => {
                    if !self.surfaces.iter().any(|s| &s.area == area && s.room == r.room) {
                        return Err(invalid(
                            format!("robots[{i}].workspace"),
                            format!("no surface of area `{area}` in room `{}`", r.room),
                        ));
                    }
                }
                (RobotKind::Mobile, _) => {}
            }
        }

        let mut surface_load: BTreeMap<&str, usize> = BTreeMap::new();
        let mut block_load: BTreeMap<&str, usize> = BTreeMap::new();
        let mut robot_load: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, o) in self.objects.iter().enumerate() {
            let field = format!("objects[{i}]");
            match &o.support {
                Support::Surface(s) => {
                    if self.surface(s).is_none() {
                        return Err(invalid(format!("{field}.on"), format!("unknown surface `{s}`")));
                    }
                    *surface_load.entry(s).or_default() += 1;
                }
                Support::Object(p) => {
                    let parent = self
                        .object(p)
                        .ok_or_else(|| invalid(format!("{field}.on"), format!("unknown object `{p}`")))?;
                    if parent.name == o.name {
                        return Err(invalid(format!("{field}.on"), "object rests on itself"));
                    }
                    if o.kind == ObjectKind::Bowl {
                        return Err(invalid(format!("{field}.on"), "bowls can only rest on surfaces"));
                    }
                    if parent.kind == ObjectKind::Block {
                        *block_load.entry(p).or_default() += 1;
                    }
                }
                Support::Robot(r) => {
                    let robot = self
                        .robot(r)
                        .ok_or_else(|| invalid(format!("{field}.held_by"), format!("unknown robot `{r}`")))?;
                    if robot.kind != RobotKind::Mobile {
                        return Err(invalid(format!("{field}.held_by"), "only mobile robots hold objects"));
                    }
                    *robot_load.entry(r).or_default() += 1;
                }
            }
        }
        if let Some((s, _)) = surface_load.iter().find(|(_, &n)| n > 1) {
            return Err(invalid("objects", format!("surface `{s}` holds more than one stack")));
        }
        if let Some((b, _)) = block_load.iter().find(|(_, &n)| n > 1) {
            return Err(invalid("objects", format!("block `{b}` supports more than one object")));
        }
        if let Some((r, _)) = robot_load.iter().find(|(_, &n)| n > 1) {
            return Err(invalid("objects", format!("robot `{r}` holds more than one object")));
        }
        // stacking relation must be a forest
        for o in &self.objects {
            let mut current = o;
            let mut steps = 0;
            while let Support::Object(p) = &current.support {
                steps += 1;
                if steps > self.objects.len() {
                    return Err(invalid("objects", format!("stacking cycle through `{}`", o.name)));
                }
                current = self.object(p).expect("checked above");
            }
        }
        Ok(())
    }
}

/// Fluent constructor for hand-built worlds, mostly for tests and benches.
#[derive(Debug, Default)]
pub struct WorldBuilder {
    rooms: Vec<Room>,
    surfaces: Vec<Surface>,
    objects: Vec<Object>,
    robots: Vec<Robot>,
}

impl WorldBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn room(mut self, name: &str, dock: Point) -> Self {
        self.rooms.push(Room {
            name: name.into(),
            dock,
            connected: Vec::new(),
        });
        self
    }

    pub fn connect(mut self, a: &str, b: &str) -> Self {
        if let Some(r) = self.rooms.iter_mut().find(|r| r.name == a) {
            r.connected.push(b.into());
        }
        self
    }

    pub fn surface(mut self, name: &str, room: &str, area: &str, position: Point) -> Self {
        self.surfaces.push(Surface {
            name: name.into(),
            room: room.into(),
            area: area.into(),
            position,
        });
        self
    }

    fn object(mut self, name: &str, kind: ObjectKind, color: &str, support: Support) -> Self {
        self.objects.push(Object {
            name: name.into(),
            kind,
            color: color.into(),
            support,
        });
        self
    }

    /// Adds a block resting on a surface or object named `on`.
    pub fn block(self, name: &str, color: &str, on: &str) -> Self {
        let support = self.support_for(on);
        self.object(name, ObjectKind::Block, color, support)
    }

    pub fn bowl(self, name: &str, color: &str, on: &str) -> Self {
        let support = self.support_for(on);
        self.object(name, ObjectKind::Bowl, color, support)
    }

    pub fn held_block(self, name: &str, color: &str, robot: &str) -> Self {
        self.object(name, ObjectKind::Block, color, Support::Robot(robot.into()))
    }

    fn support_for(&self, on: &str) -> Support {
        if self.surfaces.iter().any(|s| s.name == on) {
            Support::Surface(on.into())
        } else {
            Support::Object(on.into())
        }
    }

    pub fn arm(mut self, id: &str, room: &str, workspace: &str, position: Point) -> Self {
        self.robots.push(Robot {
            id: id.into(),
            kind: RobotKind::Arm,
            room: room.into(),
            position,
            workspace: Some(workspace.into()),
            graspable: None,
        });
        self
    }

    pub fn mobile(mut self, id: &str, room: &str, position: Point) -> Self {
        self.robots.push(Robot {
            id: id.into(),
            kind: RobotKind::Mobile,
            room: room.into(),
            position,
            workspace: None,
            graspable: None,
        });
        self
    }

    /// Restricts the most recently added robot to the given colors.
    pub fn graspable(mut self, colors: &[&str]) -> Self {
        if let Some(r) = self.robots.last_mut() {
            r.graspable = Some(colors.iter().map(|c| c.to_string()).collect());
        }
        self
    }

    pub fn build(self) -> Result<WorldState, InvalidWorld> {
        WorldState::new(self.rooms, self.surfaces, self.objects, self.robots)
    }
}
