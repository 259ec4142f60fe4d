//! Multi-robot task planning from natural-language instructions.
//!
//! The pipeline: decode an instruction into a skill list by likelihood
//! ranking ([`decode`]), ask for ordering constraints between skills
//! ([`graph`]), then repeatedly assign the ready skills to robots by solving
//! a weighted assignment problem ([`allocate`]) and execute them in
//! synchronous rounds ([`world`], [`episode`]). [`metrics`] scores finished
//! episodes.

pub mod allocate;
pub mod decode;
pub mod episode;
pub mod graph;
pub mod metrics;
pub mod scorer;
pub mod skill;
pub mod world;

pub use scorer::{MockPolicy, MockScorer, ScoreRequest, ScoreVector, Scorer, ScorerError};
pub use skill::{enumerate_skill_set, format_skill, parse_skill, RobotKind, SkillInstance, SkillList, SkillSet};
pub use world::{check_goal, execute_round, ActionOutcome, Environment, GoalSpec, Scenario, WorldState};
