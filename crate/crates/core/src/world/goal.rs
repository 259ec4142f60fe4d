use serde::{Deserialize, Serialize};

use super::{ObjectKind, Support, WorldState};

/// A single goal condition over the final world.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    /// First object rests directly on the second.
    On(String, String),
    /// Object rests directly on the named surface.
    At(String, String),
    /// Block sits inside the bowl.
    In(String, String),
}

impl Predicate {
    pub fn holds(&self, world: &WorldState) -> bool {
        match self {
            Predicate::On(x, y) => world
                .object(x)
                .is_some_and(|o| o.support == Support::Object(y.clone())),
            Predicate::At(x, loc) => world
                .object(x)
                .is_some_and(|o| o.support == Support::Surface(loc.clone())),
            Predicate::In(x, bowl) => {
                world
                    .object(bowl)
                    .is_some_and(|b| b.kind == ObjectKind::Bowl)
                    && world
                        .object(x)
                        .is_some_and(|o| o.support == Support::Object(bowl.clone()))
            }
        }
    }

    /// Names of the entities the predicate mentions, in argument order.
    pub fn entities(&self) -> [&str; 2] {
        match self {
            Predicate::On(a, b) | Predicate::At(a, b) | Predicate::In(a, b) => [a, b],
        }
    }
}

/// Conjunction of predicates plus the instruction it was authored for.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GoalSpec {
    #[serde(default)]
    pub instruction: String,
    pub predicates: Vec<Predicate>,
}

impl GoalSpec {
    pub fn new(instruction: impl Into<String>, predicates: Vec<Predicate>) -> Self {
        Self {
            instruction: instruction.into(),
            predicates,
        }
    }

    /// Checks that every predicate names entities of the right sort.
    pub fn validate(&self, world: &WorldState) -> Result<(), String> {
        for (i, p) in self.predicates.iter().enumerate() {
            let [a, b] = p.entities();
            if world.object(a).is_none() {
                return Err(format!("predicates[{i}]: unknown object `{a}`"));
            }
            let ok = match p {
                Predicate::On(..) => world.object(b).is_some(),
                Predicate::At(..) => world.surface(b).is_some(),
                Predicate::In(..) => world.object(b).is_some_and(|o| o.kind == ObjectKind::Bowl),
            };
            if !ok {
                return Err(format!("predicates[{i}]: `{b}` is not a valid second argument"));
            }
        }
        Ok(())
    }
}

/// True iff every predicate holds; an empty goal is vacuously satisfied.
pub fn check_goal(world: &WorldState, goal: &GoalSpec) -> bool {
    goal.predicates.iter().all(|p| p.holds(world))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Point, WorldBuilder};

    fn world() -> WorldState {
        WorldBuilder::new()
            .room("living room", Point::new(0.0, -1.0))
            .surface("middle", "living room", "table", Point::new(0.0, 0.0))
            .surface("upper left corner", "living room", "table", Point::new(-0.3, 0.3))
            .block("yellow block", "yellow", "middle")
            .block("red block", "red", "yellow block")
            .bowl("blue bowl", "blue", "upper left corner")
            .block("green block", "green", "blue bowl")
            .build()
            .unwrap()
    }

    #[test]
    fn stacked_block_satisfies_on() {
        let g = GoalSpec::new("", vec![Predicate::On("red block".into(), "yellow block".into())]);
        assert!(check_goal(&world(), &g));
    }

    #[test]
    fn block_in_bowl_is_not_at_the_bowls_cell() {
        let g = GoalSpec::new("", vec![Predicate::At("green block".into(), "upper left corner".into())]);
        assert!(!check_goal(&world(), &g));
        let g = GoalSpec::new("", vec![Predicate::In("green block".into(), "blue bowl".into())]);
        assert!(check_goal(&world(), &g));
    }

    #[test]
    fn empty_goal_is_vacuous() {
        assert!(check_goal(&world(), &GoalSpec::default()));
    }

    #[test]
    fn conjunction_needs_all() {
        let g = GoalSpec::new(
            "",
            vec![
                Predicate::At("yellow block".into(), "middle".into()),
                Predicate::At("red block".into(), "middle".into()),
            ],
        );
        assert!(!check_goal(&world(), &g));
    }

    #[test]
    fn validation_checks_argument_sorts() {
        let w = world();
        let bad = GoalSpec::new("", vec![Predicate::In("red block".into(), "yellow block".into())]);
        assert!(bad.validate(&w).is_err());
        let bad = GoalSpec::new("", vec![Predicate::At("purple block".into(), "middle".into())]);
        assert!(bad.validate(&w).is_err());
        let good = GoalSpec::new("", vec![Predicate::At("red block".into(), "middle".into())]);
        assert!(good.validate(&w).is_ok());
    }

    #[test]
    fn serde_shape() {
        let p: Predicate = serde_json::from_str(r#"{"on": ["red block", "yellow block"]}"#).unwrap();
        assert_eq!(p, Predicate::On("red block".into(), "yellow block".into()));
    }
}
