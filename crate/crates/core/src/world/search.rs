//! Exhaustive breadth-first search for the minimum number of rounds that
//! reaches a goal. Used to cross-check authored optimum step counts.

use std::collections::{HashSet, VecDeque};

use super::exec::{execute_round, feasible, ActionOutcome};
use super::goal::{check_goal, GoalSpec};
use super::WorldState;
use crate::skill::{SkillInstance, SkillSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchLimit {
    pub max_depth: u32,
    /// Total rounds the search may simulate before giving up.
    pub max_rounds: usize,
}

impl Default for SearchLimit {
    fn default() -> Self {
        Self {
            max_depth: 6,
            max_rounds: 2_000_000,
        }
    }
}

/// Joint actions: one entry per robot, `None` meaning the robot stays.
fn joint_actions(per_robot: &[Vec<&SkillInstance>]) -> Vec<Vec<Option<usize>>> {
    let mut out = vec![Vec::new()];
    for options in per_robot {
        let mut next = Vec::with_capacity(out.len() * (options.len() + 1));
        for prefix in &out {
            let mut idle = prefix.clone();
            idle.push(None);
            next.push(idle);
            for i in 0..options.len() {
                let mut p = prefix.clone();
                p.push(Some(i));
                next.push(p);
            }
        }
        out = next;
    }
    out.retain(|a| a.iter().any(Option::is_some));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOutcome {
    /// Fewest rounds that reach the goal.
    Found(u32),
    /// The goal is not reachable within `max_depth` rounds.
    NotWithinDepth,
    /// Gave up after simulating `max_rounds` rounds.
    BudgetExceeded,
}

/// Fewest synchronous rounds from `world` to a state satisfying `goal`, where
/// each round every robot runs at most one feasible skill from `skills` and
/// no two actions conflict.
pub fn min_steps(world: &WorldState, goal: &GoalSpec, skills: &SkillSet, limit: SearchLimit) -> SearchOutcome {
    if check_goal(world, goal) {
        return SearchOutcome::Found(0);
    }
    if limit.max_depth == 0 {
        return SearchOutcome::NotWithinDepth;
    }
    let mut seen = HashSet::new();
    seen.insert(world.state_key());
    let mut frontier = VecDeque::from([(world.clone(), 0u32)]);
    let mut simulated = 0usize;

    while let Some((state, depth)) = frontier.pop_front() {
        if depth >= limit.max_depth {
            continue;
        }
        let robots: Vec<&str> = state.robots().iter().map(|r| r.id.as_str()).collect();
        let per_robot: Vec<Vec<&SkillInstance>> = robots
            .iter()
            .map(|r| {
                skills
                    .instances()
                    .iter()
                    .filter(|s| !s.is_done() && !s.is_stay())
                    .filter(|s| feasible(r, s, &state).is_ok())
                    .collect()
            })
            .collect();

        for joint in joint_actions(&per_robot) {
            simulated += 1;
            if simulated > limit.max_rounds {
                return SearchOutcome::BudgetExceeded;
            }
            let actions: Vec<(String, SkillInstance)> = joint
                .iter()
                .enumerate()
                .filter_map(|(r, choice)| choice.map(|i| (robots[r].to_owned(), per_robot[r][i].clone())))
                .collect();
            let (next, outcomes) = execute_round(&state, &actions);
            if !outcomes.iter().all(ActionOutcome::is_success) {
                // a conflicting round is dominated by one of its sub-rounds
                continue;
            }
            if check_goal(&next, goal) {
                return SearchOutcome::Found(depth + 1);
            }
            if depth + 1 < limit.max_depth && seen.insert(next.state_key()) {
                frontier.push_back((next, depth + 1));
            }
        }
    }
    SearchOutcome::NotWithinDepth
}
