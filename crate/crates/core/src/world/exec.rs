//! Skill feasibility and synchronous round execution.
//!
//! Executable vocabulary:
//! - arm: `pick_and_place(object, target)` where target is a surface, a block or a bowl
//! - mobile: `pick_up(object)`, `move_to(room)`, `put_down(surface)`
//! - any robot: `stay()`

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ObjectKind, Robot, Support, WorldState};
use crate::skill::{RobotKind, SkillInstance};

pub const PICK_AND_PLACE: &str = "pick_and_place";
pub const PICK_UP: &str = "pick_up";
pub const MOVE_TO: &str = "move_to";
pub const PUT_DOWN: &str = "put_down";

/// Skill names the simulator can execute, with their arity and robot kind.
pub(crate) const EXECUTABLE: [(&str, usize, RobotKind); 4] = [
    (PICK_AND_PLACE, 2, RobotKind::Arm),
    (PICK_UP, 1, RobotKind::Mobile),
    (MOVE_TO, 1, RobotKind::Mobile),
    (PUT_DOWN, 1, RobotKind::Mobile),
];

/// Why a robot cannot run a skill in the current world.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Infeasible {
    UnknownRobot,
    UnknownEntity(String),
    NotExecutable,
    KindMismatch,
    GraspConstraint,
    Carried,
    OutOfReach,
    NotStackTop,
    TargetOccupied,
    InvalidTarget,
    HandsFull,
    NotCarrying,
    AlreadyInRoom,
    RoomsNotConnected,
}

impl fmt::Display for Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasible::UnknownRobot => f.write_str("unknown-robot"),
            Infeasible::UnknownEntity(e) => write!(f, "unknown-entity({e})"),
            Infeasible::NotExecutable => f.write_str("not-executable"),
            Infeasible::KindMismatch => f.write_str("kind-mismatch"),
            Infeasible::GraspConstraint => f.write_str("grasp-constraint"),
            Infeasible::Carried => f.write_str("carried"),
            Infeasible::OutOfReach => f.write_str("out-of-reach"),
            Infeasible::NotStackTop => f.write_str("not-stack-top"),
            Infeasible::TargetOccupied => f.write_str("target-occupied"),
            Infeasible::InvalidTarget => f.write_str("invalid-target"),
            Infeasible::HandsFull => f.write_str("hands-full"),
            Infeasible::NotCarrying => f.write_str("not-carrying"),
            Infeasible::AlreadyInRoom => f.write_str("already-in-room"),
            Infeasible::RoomsNotConnected => f.write_str("rooms-not-connected"),
        }
    }
}

/// Result of one robot's action in a round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionOutcome {
    Success,
    Idle,
    Infeasible(Infeasible),
    ConflictDetected,
}

impl ActionOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, ActionOutcome::Success)
    }
}

impl fmt::Display for ActionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionOutcome::Success => f.write_str("success"),
            ActionOutcome::Idle => f.write_str("idle"),
            ActionOutcome::Infeasible(r) => write!(f, "infeasible: {r}"),
            ActionOutcome::ConflictDetected => f.write_str("conflict"),
        }
    }
}

/// Checks whether `robot` can execute `skill` against `world` right now.
pub fn feasible(robot: &str, skill: &SkillInstance, world: &WorldState) -> Result<(), Infeasible> {
    let robot = world.robot(robot).ok_or(Infeasible::UnknownRobot)?;
    if skill.is_stay() {
        return Ok(());
    }
    let Some(&(_, arity, kind)) = EXECUTABLE.iter().find(|(n, _, _)| *n == skill.name()) else {
        return Err(Infeasible::NotExecutable);
    };
    if skill.arity() != arity {
        return Err(Infeasible::NotExecutable);
    }
    if robot.kind != kind {
        return Err(Infeasible::KindMismatch);
    }
    let args = skill.args();
    match skill.name() {
        PICK_AND_PLACE => arm_pick_and_place(robot, &args[0], &args[1], world),
        PICK_UP => mobile_pick_up(robot, &args[0], world),
        MOVE_TO => mobile_move_to(robot, &args[0], world),
        PUT_DOWN => mobile_put_down(robot, &args[0], world),
        _ => unreachable!("filtered by EXECUTABLE"),
    }
}

fn in_workspace(robot: &Robot, world: &WorldState, object: &str) -> bool {
    match world.base_surface(object) {
        Some(s) => s.room == robot.room && Some(&s.area) == robot.workspace.as_ref(),
        None => false,
    }
}

fn arm_pick_and_place(
    robot: &Robot,
    object: &str,
    target: &str,
    world: &WorldState,
) -> Result<(), Infeasible> {
    let obj = world
        .object(object)
        .ok_or_else(|| Infeasible::UnknownEntity(object.to_owned()))?;
    if !robot.can_grasp(&obj.color) {
        return Err(Infeasible::GraspConstraint);
    }
    if world.carrier(object).is_some() {
        return Err(Infeasible::Carried);
    }
    if !in_workspace(robot, world, object) {
        return Err(Infeasible::OutOfReach);
    }
    if !world.is_clear(object) {
        return Err(Infeasible::NotStackTop);
    }

    if let Some(surface) = world.surface(target) {
        if surface.room != robot.room || Some(&surface.area) != robot.workspace.as_ref() {
            return Err(Infeasible::OutOfReach);
        }
        if !world.is_surface_empty(target) {
            return Err(Infeasible::TargetOccupied);
        }
        return Ok(());
    }

    let dest = world
        .object(target)
        .ok_or_else(|| Infeasible::UnknownEntity(target.to_owned()))?;
    if dest.name == obj.name || obj.kind == ObjectKind::Bowl {
        return Err(Infeasible::InvalidTarget);
    }
    if obj.support == Support::Object(dest.name.clone()) {
        // already there
        return Err(Infeasible::InvalidTarget);
    }
    if world.carrier(target).is_some() {
        return Err(Infeasible::Carried);
    }
    if !in_workspace(robot, world, target) {
        return Err(Infeasible::OutOfReach);
    }
    if dest.kind == ObjectKind::Block && !world.is_clear(target) {
        return Err(Infeasible::TargetOccupied);
    }
    Ok(())
}

fn mobile_pick_up(robot: &Robot, object: &str, world: &WorldState) -> Result<(), Infeasible> {
    world
        .object(object)
        .ok_or_else(|| Infeasible::UnknownEntity(object.to_owned()))?;
    if world.carried_by(&robot.id).is_some() {
        return Err(Infeasible::HandsFull);
    }
    if world.carrier(object).is_some() {
        return Err(Infeasible::Carried);
    }
    if world.object_room(object) != Some(robot.room.as_str()) {
        return Err(Infeasible::OutOfReach);
    }
    if !world.is_clear(object) {
        return Err(Infeasible::NotStackTop);
    }
    Ok(())
}

fn mobile_move_to(robot: &Robot, room: &str, world: &WorldState) -> Result<(), Infeasible> {
    world
        .room(room)
        .ok_or_else(|| Infeasible::UnknownEntity(room.to_owned()))?;
    if robot.room == room {
        return Err(Infeasible::AlreadyInRoom);
    }
    if !world.rooms_connected(&robot.room, room) {
        return Err(Infeasible::RoomsNotConnected);
    }
    Ok(())
}

fn mobile_put_down(robot: &Robot, location: &str, world: &WorldState) -> Result<(), Infeasible> {
    let Some(surface) = world.surface(location) else {
        return Err(if world.object(location).is_some() || world.room(location).is_some() {
            Infeasible::InvalidTarget
        } else {
            Infeasible::UnknownEntity(location.to_owned())
        });
    };
    if world.carried_by(&robot.id).is_none() {
        return Err(Infeasible::NotCarrying);
    }
    if surface.room != robot.room {
        return Err(Infeasible::OutOfReach);
    }
    if !world.is_surface_empty(location) {
        return Err(Infeasible::TargetOccupied);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Object(String),
    Slot(String),
}

/// Exclusive writes and shared reads of one action.
#[derive(Default)]
struct Footprint {
    writes: BTreeSet<Key>,
    reads: BTreeSet<Key>,
}

impl Footprint {
    fn clashes(&self, other: &Footprint) -> bool {
        !self.writes.is_disjoint(&other.writes)
            || !self.writes.is_disjoint(&other.reads)
            || !self.reads.is_disjoint(&other.writes)
    }
}

fn footprint(robot: &str, skill: &SkillInstance, world: &WorldState) -> Footprint {
    let mut fp = Footprint::default();
    let args = skill.args();
    match skill.name() {
        PICK_AND_PLACE => {
            fp.writes.insert(Key::Object(args[0].clone()));
            match world.object(&args[1]) {
                // bowls take any number of blocks
                Some(o) if o.kind == ObjectKind::Bowl => {
                    fp.reads.insert(Key::Object(args[1].clone()));
                }
                Some(_) => {
                    fp.reads.insert(Key::Object(args[1].clone()));
                    fp.writes.insert(Key::Slot(args[1].clone()));
                }
                None => {
                    fp.writes.insert(Key::Slot(args[1].clone()));
                }
            }
        }
        PICK_UP => {
            fp.writes.insert(Key::Object(args[0].clone()));
        }
        PUT_DOWN => {
            fp.writes.insert(Key::Slot(args[0].clone()));
            if let Some(o) = world.carried_by(robot) {
                fp.writes.insert(Key::Object(o.name.clone()));
            }
        }
        _ => {}
    }
    fp
}

fn apply(world: &mut WorldState, robot: &str, skill: &SkillInstance) {
    let args = skill.args();
    match skill.name() {
        PICK_AND_PLACE => {
            let support = if world.surface(&args[1]).is_some() {
                Support::Surface(args[1].clone())
            } else {
                Support::Object(args[1].clone())
            };
            if let Some(o) = world.object_mut(&args[0]) {
                o.support = support;
            }
        }
        PICK_UP => {
            if let Some(o) = world.object_mut(&args[0]) {
                o.support = Support::Robot(robot.to_owned());
            }
        }
        PUT_DOWN => {
            let carried = world.carried_by(robot).map(|o| o.name.clone());
            if let Some(o) = carried.and_then(|name| world.object_mut(&name)) {
                o.support = Support::Surface(args[0].clone());
            }
        }
        MOVE_TO => {
            let dock = world.room(&args[0]).map(|r| r.dock);
            if let (Some(r), Some(dock)) = (world.robot_mut(robot), dock) {
                r.room = args[0].clone();
                r.position = dock;
            }
        }
        _ => {}
    }
}

/// Executes one synchronous round.
///
/// Every action is checked against the pre-round world. Actions whose
/// footprints overlap all fail with [`ActionOutcome::ConflictDetected`] and
/// leave the world untouched; the rest apply together. Each robot may appear
/// at most once in `actions`.
pub fn execute_round(
    world: &WorldState,
    actions: &[(String, SkillInstance)],
) -> (WorldState, Vec<ActionOutcome>) {
    debug_assert!(
        {
            let ids: BTreeSet<&str> = actions.iter().map(|(r, _)| r.as_str()).collect();
            ids.len() == actions.len()
        },
        "robot assigned twice in one round"
    );

    let mut outcomes: Vec<ActionOutcome> = actions
        .iter()
        .map(|(robot, skill)| {
            if skill.is_stay() {
                return match world.robot(robot) {
                    Some(_) => ActionOutcome::Idle,
                    None => ActionOutcome::Infeasible(Infeasible::UnknownRobot),
                };
            }
            match feasible(robot, skill, world) {
                Ok(()) => ActionOutcome::Success,
                Err(reason) => ActionOutcome::Infeasible(reason),
            }
        })
        .collect();

    let footprints: Vec<Option<Footprint>> = actions
        .iter()
        .zip(&outcomes)
        .map(|((robot, skill), outcome)| outcome.is_success().then(|| footprint(robot, skill, world)))
        .collect();
    let mut conflicted = vec![false; actions.len()];
    for i in 0..actions.len() {
        for j in i + 1..actions.len() {
            if let (Some(a), Some(b)) = (&footprints[i], &footprints[j]) {
                if a.clashes(b) {
                    conflicted[i] = true;
                    conflicted[j] = true;
                }
            }
        }
    }

    let mut next = world.clone();
    for (i, (robot, skill)) in actions.iter().enumerate() {
        if conflicted[i] {
            outcomes[i] = ActionOutcome::ConflictDetected;
        } else if outcomes[i].is_success() {
            apply(&mut next, robot, skill);
        }
    }
    (next, outcomes)
}
