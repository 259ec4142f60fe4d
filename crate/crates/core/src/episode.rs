//! One planning-and-execution episode, end to end.
//!
//! Decode the instruction into a skill list, generate dependencies, then run
//! synchronous rounds: assign the graph roots to robots, execute, and remove
//! the skills that succeeded. A skill that fails is retried in later rounds
//! until it has failed [`PlanParams::max_node_failures`] times.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::allocate::{build_weight_matrix, solve_assignment, DEFAULT_ALPHA};
use crate::decode::{build_skill_list, DecodeError, DEFAULT_MAX_LEN};
use crate::graph::{generate_dependencies, GraphError, DEFAULT_MAX_ATTEMPTS};
use crate::scorer::{CountingScorer, PromptConfig, Scorer, ScorerError};
use crate::skill::{SkillInstance, SkillSet};
use crate::world::{check_goal, execute_round, ConfigError, Environment, GoalSpec, Scenario, WorldState};

/// How `planning_time_ms` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimingMode {
    /// Wall-clock time spent decoding, generating edges and allocating.
    Wall,
    /// Scorer calls times a fixed latency; reproducible across runs.
    Virtual { latency_ms: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanParams {
    pub alpha: f64,
    pub max_len: usize,
    pub max_graph_attempts: usize,
    /// A skill failing this many times ends the episode.
    pub max_node_failures: u32,
    pub timing: TimingMode,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            max_len: DEFAULT_MAX_LEN,
            max_graph_attempts: DEFAULT_MAX_ATTEMPTS,
            max_node_failures: 3,
            timing: TimingMode::Wall,
        }
    }
}

/// Everything an episode needs besides the scorer.
#[derive(Debug, Clone)]
pub struct Task {
    pub scenario: String,
    pub label: String,
    pub instruction: String,
    pub world: WorldState,
    pub goal: GoalSpec,
    pub skills: SkillSet,
    pub prompts: PromptConfig,
    pub min_steps: u32,
}

impl Task {
    /// Resolves a scenario against its environment under a grasp condition.
    pub fn from_scenario(env: &Environment, scenario: &Scenario, condition: u32) -> Result<Self, ConfigError> {
        let (world, goal) = scenario.resolve(env, condition)?;
        let skills = env.skill_set(&world)?;
        let group = if scenario.group.is_empty() { "default" } else { &scenario.group };
        Ok(Self {
            scenario: scenario.name.clone(),
            label: format!("{}:{}:c{}", env.name, group, condition),
            instruction: scenario.instruction.clone(),
            world,
            goal,
            skills,
            prompts: env.prompts.clone(),
            min_steps: scenario.min_steps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    DecodeOverflow,
    EmptyPlan,
    InvalidDependencies,
    CyclicAfterRetries,
    Deadlock,
    RetryExhausted,
    GoalNotMet,
    BackendUnavailable,
    ScoringMismatch,
    InvalidScript,
}

impl FailureReason {
    fn from_scorer(e: &ScorerError) -> Self {
        match e {
            ScorerError::BackendUnavailable(_) => FailureReason::BackendUnavailable,
            ScorerError::ScoringMismatch(_) => FailureReason::ScoringMismatch,
            ScorerError::NoScriptedCompletion(_) | ScorerError::InvalidRequest(_) => FailureReason::InvalidScript,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure { reason: FailureReason, detail: String },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }

    pub fn failure_reason(&self) -> Option<FailureReason> {
        match self {
            Outcome::Success => None,
            Outcome::Failure { reason, .. } => Some(*reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTrace {
    pub robot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    pub command: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub actions: Vec<ActionTrace>,
}

/// Serializable record of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub scenario: String,
    pub label: String,
    pub instruction: String,
    pub skill_list: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub graph_attempts: usize,
    pub rounds: Vec<RoundTrace>,
    pub step_count: u32,
    pub min_steps: u32,
    pub planning_time_ms: f64,
    pub scorer_calls: u64,
    pub outcome: Outcome,
}

impl PlanTrace {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }
}

/// Result of [`run_episode`]: the trace plus the final world.
#[derive(Debug, Clone)]
pub struct Episode {
    pub trace: PlanTrace,
    pub final_world: WorldState,
}

struct Clock {
    mode: TimingMode,
    wall_ms: f64,
}

impl Clock {
    fn add(&mut self, since: Instant) {
        self.wall_ms += since.elapsed().as_secs_f64() * 1000.0;
    }

    fn total(&self, calls: u64) -> f64 {
        match self.mode {
            TimingMode::Wall => self.wall_ms,
            TimingMode::Virtual { latency_ms } => (calls * latency_ms) as f64,
        }
    }
}

/// Plans and executes `task`. Failures are reported in the trace outcome;
/// this function itself does not fail.
pub fn run_episode<S: Scorer + ?Sized>(task: &Task, scorer: &S, params: &PlanParams) -> Episode {
    let scorer = CountingScorer::new(scorer);
    let mut clock = Clock {
        mode: params.timing,
        wall_ms: 0.0,
    };
    let mut trace = PlanTrace {
        scenario: task.scenario.clone(),
        label: task.label.clone(),
        instruction: task.instruction.clone(),
        skill_list: Vec::new(),
        edges: Vec::new(),
        graph_attempts: 0,
        rounds: Vec::new(),
        step_count: 0,
        min_steps: task.min_steps,
        planning_time_ms: 0.0,
        scorer_calls: 0,
        outcome: Outcome::Success,
    };
    let mut world = task.world.clone();
    let outcome = execute(task, &scorer, params, &mut clock, &mut trace, &mut world);
    trace.outcome = outcome;
    trace.step_count = trace.rounds.len() as u32;
    trace.scorer_calls = scorer.total_calls();
    trace.planning_time_ms = clock.total(trace.scorer_calls);
    Episode {
        trace,
        final_world: world,
    }
}

fn fail(reason: FailureReason, detail: impl Into<String>) -> Outcome {
    Outcome::Failure {
        reason,
        detail: detail.into(),
    }
}

fn execute<S: Scorer>(
    task: &Task,
    scorer: &S,
    params: &PlanParams,
    clock: &mut Clock,
    trace: &mut PlanTrace,
    world: &mut WorldState,
) -> Outcome {
    let started = Instant::now();
    let list = match build_skill_list(
        &task.instruction,
        &task.skills,
        scorer,
        &task.prompts.skill_sections(),
        params.max_len,
    ) {
        Ok(list) => list,
        Err(e) => {
            clock.add(started);
            let reason = match &e {
                DecodeError::DecodeOverflow { decoded, .. } => {
                    trace.skill_list = decoded.iter().map(ToString::to_string).collect();
                    FailureReason::DecodeOverflow
                }
                DecodeError::NoDoneCandidate => FailureReason::InvalidScript,
                DecodeError::Scorer(s) => FailureReason::from_scorer(s),
            };
            return fail(reason, e.to_string());
        }
    };
    trace.skill_list = list.items.iter().map(ToString::to_string).collect();
    if list.is_empty() {
        clock.add(started);
        return fail(FailureReason::EmptyPlan, "decoded plan has no skills");
    }

    let generated = generate_dependencies(
        &list,
        scorer,
        &task.prompts.dependency_sections(),
        params.max_graph_attempts,
    );
    clock.add(started);
    let mut graph = match generated {
        Ok(g) => {
            trace.graph_attempts = g.attempts;
            g.graph
        }
        Err(e) => {
            let reason = match &e {
                GraphError::CyclicAfterRetries { attempts, .. } => {
                    trace.graph_attempts = *attempts;
                    FailureReason::CyclicAfterRetries
                }
                GraphError::Scorer(s) => FailureReason::from_scorer(s),
                _ => FailureReason::InvalidDependencies,
            };
            return fail(reason, e.to_string());
        }
    };
    trace.edges = graph.edges();

    let mut failures: BTreeMap<usize, u32> = BTreeMap::new();
    while !graph.is_empty() {
        let roots = graph.root_nodes();
        let started = Instant::now();
        let matrix = match build_weight_matrix(world, &graph, &roots, &task.skills, params.alpha) {
            Ok(m) => m,
            Err(e) => {
                clock.add(started);
                return fail(FailureReason::InvalidDependencies, e.to_string());
            }
        };
        if !matrix.any_feasible() {
            clock.add(started);
            let pending: Vec<String> = roots
                .iter()
                .filter_map(|&n| graph.skill(n).map(|s| format!("{n}: {s}")))
                .collect();
            return fail(
                FailureReason::Deadlock,
                format!("no robot can run any ready skill ({})", pending.join("; ")),
            );
        }
        let assignment = solve_assignment(&matrix);
        clock.add(started);

        let mut actions: Vec<(String, SkillInstance)> = Vec::new();
        let mut nodes: Vec<Option<usize>> = Vec::new();
        for (r, robot) in matrix.robots().iter().enumerate() {
            let node = assignment.choice[r].map(|c| matrix.nodes()[c]);
            let skill = node
                .and_then(|n| graph.skill(n).cloned())
                .unwrap_or_else(SkillInstance::stay);
            actions.push((robot.clone(), skill));
            nodes.push(node);
        }
        let (next, outcomes) = execute_round(world, &actions);
        *world = next;

        let mut completed = Vec::new();
        let mut exhausted = None;
        let mut round = RoundTrace {
            round: trace.rounds.len() + 1,
            actions: Vec::new(),
        };
        for (((robot, skill), node), outcome) in actions.iter().zip(&nodes).zip(&outcomes) {
            round.actions.push(ActionTrace {
                robot: robot.clone(),
                node: *node,
                command: skill.to_string(),
                outcome: outcome.to_string(),
            });
            if let Some(n) = *node {
                if outcome.is_success() {
                    completed.push(n);
                } else {
                    let count = failures.entry(n).or_default();
                    *count += 1;
                    if *count >= params.max_node_failures && exhausted.is_none() {
                        exhausted = Some((n, skill.to_string(), outcome.to_string()));
                    }
                }
            }
        }
        trace.rounds.push(round);
        graph
            .remove_nodes(&completed)
            .expect("completed nodes come from the graph");
        if let Some((n, skill, why)) = exhausted {
            return fail(
                FailureReason::RetryExhausted,
                format!("skill {n} `{skill}` failed {} times, last: {why}", params.max_node_failures),
            );
        }
    }

    if check_goal(world, &task.goal) {
        Outcome::Success
    } else {
        fail(FailureReason::GoalNotMet, "all skills ran but the goal does not hold")
    }
}
