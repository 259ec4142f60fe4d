//! Per-round task allocation.
//!
//! Each round the ready skills (graph roots) are assigned to robots so that
//! the summed weight is maximal, every robot runs at most one skill, every
//! skill goes to at most one robot, and infeasible pairs are never used.
//! Arm weights fall off linearly with normalized distance to the object;
//! feasible mobile pairs weigh 1.
//!
//! Among optimal assignments the result is fixed: robots are considered in
//! id order and each takes the lowest node id (idle last) that still allows
//! an optimal total.

use thiserror::Error;

use crate::graph::DependencyGraph;
use crate::skill::{ArgRef, RobotKind, SkillSet};
use crate::world::{feasible, WorldState};

pub const DEFAULT_ALPHA: f64 = 0.3;

/// Relative tolerance when comparing assignment totals.
const TIE_EPS: f64 = 1e-9;

/// Cost of an infeasible pair in the minimisation; never beats idling (0).
const INFEASIBLE_COST: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("distance {0} is negative or not finite")]
    NegativeDistance(f64),
    #[error("alpha {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("normalized distance {0} is outside [0, 1]")]
    DistanceOutOfRange(f64),
    #[error("weight matrix shape mismatch: {0}")]
    Shape(String),
    #[error("node {0} is not in the graph")]
    UnknownNode(usize),
}

/// Min-max scales distances into `[0, 1]`. If all distances are equal every
/// output is 0.
pub fn normalize_distances(distances: &[f64]) -> Result<Vec<f64>, AllocError> {
    if let Some(&bad) = distances.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(AllocError::NegativeDistance(bad));
    }
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let max = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    Ok(distances
        .iter()
        .map(|d| if span > 0.0 { (d - min) / span } else { 0.0 })
        .collect())
}

/// `1 - alpha * d` for a normalized distance `d`.
pub fn arm_weight(normalized_distance: f64, alpha: f64) -> Result<f64, AllocError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AllocError::AlphaOutOfRange(alpha));
    }
    if !(0.0..=1.0).contains(&normalized_distance) {
        return Err(AllocError::DistanceOutOfRange(normalized_distance));
    }
    Ok(1.0 - alpha * normalized_distance)
}

pub fn mobile_weight(feasible: bool) -> f64 {
    if feasible {
        1.0
    } else {
        0.0
    }
}

/// Robot-by-node weights with a feasibility mask. Rows follow world robot
/// order, columns follow `nodes` (ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    robots: Vec<String>,
    nodes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    feasible: Vec<Vec<bool>>,
}

impl WeightMatrix {
    pub fn new(
        robots: Vec<String>,
        nodes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        feasible: Vec<Vec<bool>>,
    ) -> Result<Self, AllocError> {
        if weights.len() != robots.len() || feasible.len() != robots.len() {
            return Err(AllocError::Shape("one row per robot".into()));
        }
        for (w, f) in weights.iter().zip(&feasible) {
            if w.len() != nodes.len() || f.len() != nodes.len() {
                return Err(AllocError::Shape("one column per node".into()));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(AllocError::Shape("weights must be finite".into()));
            }
        }
        Ok(Self {
            robots,
            nodes,
            weights,
            feasible,
        })
    }

    pub fn robots(&self) -> &[String] {
        &self.robots
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn weight(&self, robot: usize, column: usize) -> f64 {
        self.weights[robot][column]
    }

    pub fn is_feasible(&self, robot: usize, column: usize) -> bool {
        self.feasible[robot][column]
    }

    pub fn any_feasible(&self) -> bool {
        self.feasible.iter().flatten().any(|&f| f)
    }
}

/// Weights for assigning the graph's `roots` to the world's robots.
///
/// Distances are robot-to-object for arm skills and are normalized over all
/// feasible arm pairs of the round.
pub fn build_weight_matrix(
    world: &WorldState,
    graph: &DependencyGraph,
    roots: &[usize],
    skills: &SkillSet,
    alpha: f64,
) -> Result<WeightMatrix, AllocError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AllocError::AlphaOutOfRange(alpha));
    }
    let robots = world.robots();
    let mut feasible_mask = vec![vec![false; roots.len()]; robots.len()];
    let mut weights = vec![vec![0.0; roots.len()]; robots.len()];
    let mut arm_pairs: Vec<(usize, usize, f64)> = Vec::new();

    for (c, &node) in roots.iter().enumerate() {
        let skill = graph.skill(node).ok_or(AllocError::UnknownNode(node))?;
        let object = skill
            .args()
            .iter()
            .zip(skills.classify(skill, world))
            .find(|(_, kind)| *kind == ArgRef::Object)
            .map(|(a, _)| a.as_str());
        for (r, robot) in robots.iter().enumerate() {
            if feasible(&robot.id, skill, world).is_err() {
                continue;
            }
            feasible_mask[r][c] = true;
            match robot.kind {
                RobotKind::Mobile => weights[r][c] = mobile_weight(true),
                RobotKind::Arm => {
                    let d = object
                        .and_then(|o| world.object_position(o))
                        .map_or(0.0, |p| robot.position.distance(&p));
                    arm_pairs.push((r, c, d));
                }
            }
        }
    }

    let distances: Vec<f64> = arm_pairs.iter().map(|&(_, _, d)| d).collect();
    let normalized = normalize_distances(&distances)?;
    for (&(r, c, _), d) in arm_pairs.iter().zip(normalized) {
        weights[r][c] = arm_weight(d, alpha)?;
    }

    WeightMatrix::new(
        robots.iter().map(|r| r.id.clone()).collect(),
        roots.to_vec(),
        weights,
        feasible_mask,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Per robot row, the assigned column or `None` for idle.
    pub choice: Vec<Option<usize>>,
    pub objective: f64,
}

impl Assignment {
    /// `(robot id, node id)` for every busy robot, in robot order.
    pub fn pairs(&self, matrix: &WeightMatrix) -> Vec<(String, usize)> {
        self.choice
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (matrix.robots[r].clone(), matrix.nodes[c])))
            .collect()
    }
}

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
/// Returns the column per row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    debug_assert!(n <= m);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Best total weight for `rows` using only `cols`, each robot optionally idle.
fn best_total(matrix: &WeightMatrix, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    // real columns, then one idle column per row
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| {
            cols.iter()
                .map(|&c| {
                    if matrix.feasible[r][c] {
                        -matrix.weights[r][c]
                    } else {
                        INFEASIBLE_COST
                    }
                })
                .chain(std::iter::repeat_n(0.0, rows.len()))
                .collect()
        })
        .collect();
    hungarian(&cost)
        .iter()
        .zip(rows)
        .filter(|&(&j, &r)| j < cols.len() && matrix.feasible[r][cols[j]])
        .map(|(&j, &r)| matrix.weights[r][cols[j]])
        .sum()
}

/// Maximum-weight assignment with deterministic tie-breaking.
pub fn solve_assignment(matrix: &WeightMatrix) -> Assignment {
    let n = matrix.robots.len();
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..matrix.nodes.len()).collect();
    let optimum = best_total(matrix, &all_rows, &all_cols);
    let tol = TIE_EPS * optimum.abs().max(1.0);

    let mut choice = vec![None; n];
    let mut free: Vec<usize> = all_cols;
    let mut fixed = 0.0;
    for (r, slot) in choice.iter_mut().enumerate() {
        let rest: Vec<usize> = (r + 1..n).collect();
        let mut options: Vec<Option<usize>> = free
            .iter()
            .copied()
            .filter(|&c| matrix.feasible[r][c])
            .map(Some)
            .collect();
        options.push(None);
        for option in options {
            let (gain, cols) = match option {
                Some(c) => (
                    matrix.weights[r][c],
                    free.iter().copied().filter(|&x| x != c).collect::<Vec<_>>(),
                ),
                None => (0.0, free.clone()),
            };
            if fixed + gain + best_total(matrix, &rest, &cols) >= optimum - tol {
                *slot = option;
                fixed += gain;
                free = cols;
                break;
            }
        }
    }
    let objective = choice
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| matrix.weights[r][c]))
        .sum();
    Assignment { choice, objective }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DependencyGraph;
    use crate::skill::{enumerate_skill_set, ArgDomain, SkillInstance, SkillTemplate};
    use crate::world::{Point, WorldBuilder};
    use proptest::prelude::*;

    fn matrix(weights: Vec<Vec<f64>>, feasible: Vec<Vec<bool>>) -> WeightMatrix {
        let n = weights.len();
        let m = weights.first().map_or(0, Vec::len);
        WeightMatrix::new(
            (0..n).map(|i| format!("robot{}", i + 1)).collect(),
            (0..m).collect(),
            weights,
            feasible,
        )
        .unwrap()
    }

    /// All injective partial assignments, best total, and the first optimal
    /// choice vector in (node ascending, idle last) lexicographic order.
    fn brute_force(m: &WeightMatrix) -> (f64, Vec<Option<usize>>) {
        let n = m.robots().len();
        let cols = m.nodes().len();
        let mut all: Vec<(Vec<Option<usize>>, f64)> = Vec::new();
        fn go(
            m: &WeightMatrix,
            r: usize,
            n: usize,
            cols: usize,
            cur: &mut Vec<Option<usize>>,
            total: f64,
            all: &mut Vec<(Vec<Option<usize>>, f64)>,
        ) {
            if r == n {
                all.push((cur.clone(), total));
                return;
            }
            for c in 0..cols {
                if m.is_feasible(r, c) && !cur.contains(&Some(c)) {
                    cur.push(Some(c));
                    go(m, r + 1, n, cols, cur, total + m.weight(r, c), all);
                    cur.pop();
                }
            }
            cur.push(None);
            go(m, r + 1, n, cols, cur, total, all);
            cur.pop();
        }
        go(m, 0, n, cols, &mut Vec::new(), 0.0, &mut all);
        let best = all.iter().map(|(_, t)| *t).fold(f64::NEG_INFINITY, f64::max);
        let key = |c: &Vec<Option<usize>>| -> Vec<usize> { c.iter().map(|x| x.unwrap_or(usize::MAX)).collect() };
        let first = all
            .iter()
            .filter(|(_, t)| *t >= best - 1e-9)
            .map(|(c, _)| c.clone())
            .min_by_key(key)
            .unwrap();
        (best, first)
    }

    #[test]
    fn normalization_bounds_and_degenerate_case() {
        assert_eq!(normalize_distances(&[1.0, 3.0, 2.0]).unwrap(), vec![0.0, 1.0, 0.5]);
        assert_eq!(normalize_distances(&[2.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert!(normalize_distances(&[]).unwrap().is_empty());
        assert_eq!(normalize_distances(&[-1.0]), Err(AllocError::NegativeDistance(-1.0)));
    }

    #[test]
    fn arm_weight_endpoints() {
        assert_eq!(arm_weight(0.0, 0.3).unwrap(), 1.0);
        assert!((arm_weight(1.0, 0.3).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(arm_weight(0.5, 1.5), Err(AllocError::AlphaOutOfRange(1.5)));
    }

    #[test]
    fn two_by_two_prefers_the_heavier_diagonal() {
        let m = matrix(vec![vec![1.0, 0.7], vec![0.7, 1.0]], vec![vec![true; 2]; 2]);
        let a = solve_assignment(&m);
        assert_eq!(a.choice, vec![Some(0), Some(1)]);
        assert!((a.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_pairs_are_never_chosen_even_at_high_weight() {
        let m = matrix(vec![vec![5.0, 0.1]], vec![vec![false, true]]);
        assert_eq!(solve_assignment(&m).choice, vec![Some(1)]);
    }

    #[test]
    fn more_robots_than_nodes_leaves_some_idle() {
        let m = matrix(vec![vec![0.8], vec![0.9], vec![0.9]], vec![vec![true]; 3]);
        // tie between robot2 and robot3: robot2 comes first
        assert_eq!(solve_assignment(&m).choice, vec![None, Some(0), None]);
    }

    #[test]
    fn equal_weights_give_the_lowest_node_to_the_first_robot() {
        let m = matrix(vec![vec![1.0; 3]; 2], vec![vec![true; 3]; 2]);
        assert_eq!(solve_assignment(&m).choice, vec![Some(0), Some(1)]);
    }

    #[test]
    fn empty_round() {
        let m = matrix(vec![vec![], vec![]], vec![vec![], vec![]]);
        let a = solve_assignment(&m);
        assert_eq!(a.choice, vec![None, None]);
        assert_eq!(a.objective, 0.0);
        assert!(!m.any_feasible());
    }

    #[test]
    fn weights_from_a_world() {
        // two arms at x = -0.6 and 0.6; blocks at x = -0.3 and 0.3
        let world = WorldBuilder::new()
            .room("r", Point::new(0.0, -1.0))
            .surface("left", "r", "table", Point::new(-0.3, 0.0))
            .surface("right", "r", "table", Point::new(0.3, 0.0))
            .surface("middle", "r", "table", Point::new(0.0, 0.0))
            .block("a", "red", "left")
            .block("b", "blue", "right")
            .arm("robot1", "r", "table", Point::new(-0.6, 0.0))
            .arm("robot2", "r", "table", Point::new(0.6, 0.0))
            .graspable(&["red", "blue"])
            .build()
            .unwrap();
        let templates = vec![SkillTemplate {
            name: "pick_and_place".into(),
            robot_kind: RobotKind::Arm,
            params: vec![
                ArgDomain::Object {
                    object_kinds: None,
                    colors: None,
                },
                ArgDomain::Placement { areas: None },
            ],
        }];
        let set = enumerate_skill_set(&world, &templates).unwrap();
        let graph = DependencyGraph::new(
            vec![
                SkillInstance::new("pick_and_place", ["a", "middle"]),
                SkillInstance::new("pick_and_place", ["b", "a"]),
            ],
            &[],
        )
        .unwrap();
        let m = build_weight_matrix(&world, &graph, &[0, 1], &set, 0.3).unwrap();
        assert_eq!(m.weight(0, 0), 1.0);
        assert!((m.weight(0, 1) - 0.7).abs() < 1e-12);
        assert!((m.weight(1, 0) - 0.7).abs() < 1e-12);
        assert_eq!(m.weight(1, 1), 1.0);
        let a = solve_assignment(&m);
        assert_eq!(a.pairs(&m), vec![("robot1".into(), 0), ("robot2".into(), 1)]);
    }

    fn random_matrix() -> impl Strategy<Value = WeightMatrix> {
        (1usize..5, 0usize..6).prop_flat_map(|(n, m)| {
            let levels = prop_oneof![Just(0.0), Just(0.25), Just(0.5), Just(0.7), Just(1.0), 0.0..1.0f64];
            (
                proptest::collection::vec(proptest::collection::vec(levels, m), n),
                proptest::collection::vec(proptest::collection::vec(proptest::bool::weighted(0.7), m), n),
            )
                .prop_map(|(w, f)| matrix(w, f))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn matches_brute_force_including_ties(m in random_matrix()) {
            let a = solve_assignment(&m);
            let (best, first) = brute_force(&m);
            prop_assert!((a.objective - best).abs() < 1e-9, "{} vs {}", a.objective, best);
            prop_assert_eq!(&a.choice, &first);
        }

        #[test]
        fn assignments_are_injective_and_feasible(m in random_matrix()) {
            let a = solve_assignment(&m);
            let mut used = std::collections::BTreeSet::new();
            for (r, c) in a.choice.iter().enumerate() {
                if let Some(c) = c {
                    prop_assert!(m.is_feasible(r, *c));
                    prop_assert!(used.insert(*c));
                }
            }
        }

        #[test]
        fn normalized_distances_stay_in_unit_range(d in proptest::collection::vec(0.0..100.0f64, 0..20)) {
            for x in normalize_distances(&d).unwrap() {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }

        #[test]
        fn weights_stay_in_range(d in 0.0..=1.0f64, alpha in 0.0..=1.0f64) {
            let w = arm_weight(d, alpha).unwrap();
            prop_assert!((1.0 - alpha..=1.0).contains(&w));
        }
    }
}
