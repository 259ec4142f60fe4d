//! Dependency graphs over a skill list.
//!
//! Node ids are skill-list indices. An edge `(i, j)` means skill `j` may only
//! start once skill `i` has completed. Edges come from a free-text completion
//! with one `i -> j` per line; cyclic answers are sent back with a note
//! naming the cycle, up to a fixed number of attempts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::LazyLock;

use log::debug;
use regex::Regex;
use thiserror::Error;

use crate::scorer::{dependency_prompt, DependencyPromptParts, PromptSections, Scorer, ScorerError};
use crate::skill::{SkillInstance, SkillList};

pub const DEFAULT_MAX_ATTEMPTS: usize = 3;

/// Completions stop at the first blank line.
pub const DEPENDENCY_STOP: &str = "\n\n";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge `{text}` refers to a node outside 0..{len}")]
    EdgeOutOfRange { text: String, len: usize },
    #[error("self edge on node {0}")]
    SelfEdge(usize),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("dependencies still cyclic after {attempts} attempt(s); last cycle {cycle:?}")]
    CyclicAfterRetries { attempts: usize, cycle: Vec<usize> },
    #[error("attempt {attempt}: {source}")]
    Attempt {
        attempt: usize,
        #[source]
        source: Box<GraphError>,
    },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

static EDGE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^\s*(?:[-*]\s+)?(?:skill_|v_|v)?(-?\d+)\s*(?:->|→)\s*(?:skill_|v_|v)?(-?\d+)\s*[.,;]?\s*$",
    )
    .expect("valid regex")
});

/// Extracts edges from completion text. Lines that are not edges are
/// ignored; duplicates are dropped, keeping first-appearance order.
pub fn parse_edge_text(text: &str, len: usize) -> Result<Vec<(usize, usize)>, GraphError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for line in text.lines() {
        let Some(caps) = EDGE_LINE.captures(line) else {
            continue;
        };
        let node = |i: usize| -> Option<usize> { caps[i].parse::<usize>().ok().filter(|&n| n < len) };
        let (Some(from), Some(to)) = (node(1), node(2)) else {
            return Err(GraphError::EdgeOutOfRange {
                text: line.trim().to_owned(),
                len,
            });
        };
        if from == to {
            return Err(GraphError::SelfEdge(from));
        }
        if seen.insert((from, to)) {
            out.push((from, to));
        }
    }
    Ok(out)
}

/// One edge per line, `i -> j`.
pub fn render_edges(edges: &[(usize, usize)]) -> String {
    edges
        .iter()
        .map(|(a, b)| format!("{a} -> {b}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    skills: Vec<SkillInstance>,
    alive: BTreeSet<usize>,
    edges: BTreeSet<(usize, usize)>,
}

impl DependencyGraph {
    pub fn new(skills: Vec<SkillInstance>, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let len = skills.len();
        for &(a, b) in edges {
            if a >= len || b >= len {
                return Err(GraphError::EdgeOutOfRange {
                    text: format!("{a} -> {b}"),
                    len,
                });
            }
            if a == b {
                return Err(GraphError::SelfEdge(a));
            }
        }
        Ok(Self {
            alive: (0..len).collect(),
            edges: edges.iter().copied().collect(),
            skills,
        })
    }

    /// Remaining nodes, ascending.
    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.alive.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.alive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alive.is_empty()
    }

    /// Edges between remaining nodes, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    pub fn skill(&self, node: usize) -> Option<&SkillInstance> {
        self.skills.get(node)
    }

    pub fn skills(&self) -> &[SkillInstance] {
        &self.skills
    }

    fn successors(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(a, b) in &self.edges {
            adj.entry(a).or_default().push(b);
        }
        adj
    }

    /// Some cycle among the remaining nodes, as the node sequence
    /// `[v0, v1, ..., vk]` with edges `v0 -> v1 -> ... -> vk -> v0`.
    /// Search starts from the lowest node, so the witness is deterministic.
    pub fn detect_cycle(&self) -> Option<Vec<usize>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Closed,
        }
        let adj = self.successors();
        let mut mark: BTreeMap<usize, Mark> = self.alive.iter().map(|&n| (n, Mark::New)).collect();

        for &start in &self.alive {
            if mark[&start] != Mark::New {
                continue;
            }
            // iterative DFS: (node, next successor index)
            let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
            mark.insert(start, Mark::Open);
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let succ = adj.get(&node).map(Vec::as_slice).unwrap_or(&[]);
                if let Some(&child) = succ.get(*next) {
                    *next += 1;
                    match mark[&child] {
                        Mark::New => {
                            mark.insert(child, Mark::Open);
                            stack.push((child, 0));
                        }
                        Mark::Open => {
                            let from = stack.iter().position(|&(n, _)| n == child).expect("open node on stack");
                            return Some(stack[from..].iter().map(|&(n, _)| n).collect());
                        }
                        Mark::Closed => {}
                    }
                } else {
                    mark.insert(node, Mark::Closed);
                    stack.pop();
                }
            }
        }
        None
    }

    /// Remaining nodes with no remaining predecessor, ascending.
    pub fn root_nodes(&self) -> Vec<usize> {
        let blocked: BTreeSet<usize> = self.edges.iter().map(|&(_, b)| b).collect();
        self.alive.iter().copied().filter(|n| !blocked.contains(n)).collect()
    }

    /// Removes completed nodes and their edges.
    pub fn remove_nodes(&mut self, nodes: &[usize]) -> Result<(), GraphError> {
        if let Some(&bad) = nodes.iter().find(|n| !self.alive.contains(n)) {
            return Err(GraphError::UnknownNode(bad));
        }
        for n in nodes {
            self.alive.remove(n);
        }
        self.edges
            .retain(|(a, b)| self.alive.contains(a) && self.alive.contains(b));
        Ok(())
    }

    /// Graphviz rendering; node labels are the formatted skills.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dependencies {\n");
        for &n in &self.alive {
            let label = self.skills[n].to_string().replace('"', "\\\"");
            let _ = writeln!(out, "  {n} [label=\"{label}\"];");
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "  {a} -> {b};");
        }
        out.push_str("}\n");
        out
    }
}

/// A validated graph and how many completions it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub graph: DependencyGraph,
    pub attempts: usize,
}

/// Asks the scorer for dependency edges until it returns an acyclic set.
///
/// Every cyclic answer adds a note naming the cycle to the next prompt.
/// Malformed edges abort immediately. Lists with fewer than two skills admit
/// no edges, so no completion is requested for them.
pub fn generate_dependencies<S: Scorer + ?Sized>(
    list: &SkillList,
    scorer: &S,
    sections: &PromptSections,
    max_attempts: usize,
) -> Result<Generated, GraphError> {
    let skills = list.items.clone();
    if skills.len() < 2 {
        return Ok(Generated {
            graph: DependencyGraph::new(skills, &[])?,
            attempts: 0,
        });
    }
    let max_attempts = max_attempts.max(1);
    let mut failed: Vec<Vec<usize>> = Vec::new();
    for attempt in 1..=max_attempts {
        let prompt = dependency_prompt(&DependencyPromptParts {
            sections,
            instruction: &list.source_instruction,
            skills: &skills,
            failed_cycles: &failed,
        });
        let text = scorer.complete(&prompt, Some(DEPENDENCY_STOP))?;
        let wrap = |e: GraphError| GraphError::Attempt {
            attempt,
            source: Box::new(e),
        };
        let edges = parse_edge_text(&text, skills.len()).map_err(wrap)?;
        let graph = DependencyGraph::new(skills.clone(), &edges).map_err(wrap)?;
        match graph.detect_cycle() {
            None => return Ok(Generated { graph, attempts: attempt }),
            Some(cycle) => {
                debug!("attempt {attempt}: cycle {cycle:?}");
                failed.push(cycle);
            }
        }
    }
    Err(GraphError::CyclicAfterRetries {
        attempts: max_attempts,
        cycle: failed.pop().unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{regeneration_note, CountingScorer, MockPolicy, MockScorer};
    use proptest::prelude::*;

    fn skills(n: usize) -> Vec<SkillInstance> {
        (0..n)
            .map(|i| SkillInstance::new("pick_and_place", [format!("b{i}"), "middle".to_owned()]))
            .collect()
    }

    fn list(n: usize) -> SkillList {
        SkillList {
            source_instruction: "inst-1".into(),
            items: skills(n),
        }
    }

    fn scripted(responses: &[&str]) -> CountingScorer<MockScorer> {
        let mut p = MockPolicy::default();
        p.completions
            .insert("inst-1".into(), responses.iter().map(|s| s.to_string()).collect());
        CountingScorer::new(MockScorer::new(p).unwrap())
    }

    #[test]
    fn parses_arrows_prefixes_and_ignores_prose() {
        let text = "Dependencies:\n0 -> 1\n  skill_1 → v2.\nThe yellow block waits.\n- v_0 -> 2\n0 -> 1";
        assert_eq!(parse_edge_text(text, 3).unwrap(), vec![(0, 1), (1, 2), (0, 2)]);
    }

    #[test]
    fn out_of_range_and_negative_edges_fail() {
        assert!(matches!(parse_edge_text("0 -> 3", 3), Err(GraphError::EdgeOutOfRange { .. })));
        assert!(matches!(parse_edge_text("-1 -> 0", 3), Err(GraphError::EdgeOutOfRange { .. })));
        assert_eq!(parse_edge_text("2 -> 2", 3), Err(GraphError::SelfEdge(2)));
    }

    #[test]
    fn two_cycle_witness() {
        let g = DependencyGraph::new(skills(2), &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(g.detect_cycle(), Some(vec![0, 1]));
    }

    #[test]
    fn roots_and_removal() {
        let mut g = DependencyGraph::new(skills(4), &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.root_nodes(), vec![0, 3]);
        g.remove_nodes(&[0, 3]).unwrap();
        assert_eq!(g.root_nodes(), vec![1]);
        assert_eq!(g.edges(), vec![(1, 2)]);
        assert_eq!(g.remove_nodes(&[0]), Err(GraphError::UnknownNode(0)));
    }

    #[test]
    fn dot_export_lists_labels_and_edges() {
        let g = DependencyGraph::new(skills(2), &[(0, 1)]).unwrap();
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("0 [label=\"pick_and_place(b0, middle)\"];"));
        assert!(dot.contains("0 -> 1;"));
    }

    #[test]
    fn acyclic_first_answer_uses_one_call() {
        let s = scripted(&["0 -> 1"]);
        let g = generate_dependencies(&list(3), &s, &PromptSections::default_dependencies(), 3).unwrap();
        assert_eq!(g.attempts, 1);
        assert_eq!(g.graph.edges(), vec![(0, 1)]);
        assert_eq!(s.completion_calls(), 1);
    }

    #[test]
    fn cyclic_then_acyclic_regenerates_once() {
        let s = scripted(&["0 -> 1\n1 -> 0", "0 -> 1"]);
        let g = generate_dependencies(&list(2), &s, &PromptSections::default_dependencies(), 3).unwrap();
        assert_eq!(g.attempts, 2);
        assert_eq!(g.graph.edges(), vec![(0, 1)]);
        assert_eq!(s.completion_calls(), 2);
    }

    #[test]
    fn always_cyclic_gives_up_after_max_attempts() {
        let s = scripted(&["0 -> 1\n1 -> 0"]);
        let err = generate_dependencies(&list(2), &s, &PromptSections::default_dependencies(), 3).unwrap_err();
        assert_eq!(
            err,
            GraphError::CyclicAfterRetries {
                attempts: 3,
                cycle: vec![0, 1]
            }
        );
        assert_eq!(s.completion_calls(), 3);
    }

    #[test]
    fn retry_prompt_names_the_cycle() {
        struct Capture(std::sync::Mutex<Vec<String>>);
        impl Scorer for Capture {
            fn score(&self, _: &crate::scorer::ScoreRequest) -> Result<crate::scorer::ScoreVector, ScorerError> {
                unreachable!()
            }
            fn complete(&self, prompt: &str, _: Option<&str>) -> Result<String, ScorerError> {
                let mut v = self.0.lock().unwrap();
                v.push(prompt.to_owned());
                Ok(if v.len() == 1 { "0 -> 1\n1 -> 0" } else { "1 -> 0" }.into())
            }
        }
        let c = Capture(Default::default());
        generate_dependencies(&list(2), &c, &PromptSections::default_dependencies(), 3).unwrap();
        let prompts = c.0.into_inner().unwrap();
        assert!(!prompts[0].contains("Note:"));
        assert!(prompts[1].contains(&regeneration_note(&[0, 1])));
    }

    #[test]
    fn parse_errors_carry_the_attempt() {
        let s = scripted(&["0 -> 1\n1 -> 0", "0 -> 7"]);
        let err = generate_dependencies(&list(2), &s, &PromptSections::default_dependencies(), 3).unwrap_err();
        assert!(matches!(err, GraphError::Attempt { attempt: 2, .. }));
    }

    #[test]
    fn single_skill_needs_no_completion() {
        let s = scripted(&[]);
        let g = generate_dependencies(&list(1), &s, &PromptSections::default_dependencies(), 3).unwrap();
        assert_eq!(g.attempts, 0);
        assert_eq!(s.completion_calls(), 0);
    }

    /// Kahn's algorithm: acyclic iff every node can be peeled.
    fn kahn_acyclic(n: usize, edges: &[(usize, usize)]) -> bool {
        let mut indeg = vec![0; n];
        for &(_, b) in edges {
            indeg[b] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = ready.pop() {
            seen += 1;
            for &(a, b) in edges {
                if a == v {
                    indeg[b] -= 1;
                    if indeg[b] == 0 {
                        ready.push(b);
                    }
                }
            }
        }
        seen == n
    }

    /// Random DAG: edges only go forward in a random topological order.
    fn dag() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1usize..12).prop_flat_map(|n| {
            let order = Just((0..n).collect::<Vec<_>>()).prop_shuffle();
            let pairs = proptest::collection::vec((0..n, 0..n), 0..(n * 2));
            (Just(n), order, pairs).prop_map(|(n, order, pairs)| {
                let mut edges: Vec<(usize, usize)> = pairs
                    .into_iter()
                    .filter(|(a, b)| a < b)
                    .map(|(a, b)| (order[a], order[b]))
                    .collect();
                edges.sort();
                edges.dedup();
                (n, edges)
            })
        })
    }

    fn any_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..9).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..(n * 2)).prop_map(move |pairs| {
                let mut edges: Vec<(usize, usize)> = pairs.into_iter().filter(|(a, b)| a != b).collect();
                edges.sort();
                edges.dedup();
                (n, edges)
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn random_dags_are_acyclic((n, edges) in dag()) {
            let g = DependencyGraph::new(skills(n), &edges).unwrap();
            prop_assert_eq!(g.detect_cycle(), None);
        }

        #[test]
        fn peeling_roots_respects_every_edge((n, edges) in dag()) {
            let mut g = DependencyGraph::new(skills(n), &edges).unwrap();
            let mut done = BTreeSet::new();
            while !g.is_empty() {
                let roots = g.root_nodes();
                prop_assert!(!roots.is_empty());
                for &r in &roots {
                    for &(a, b) in &edges {
                        if b == r {
                            prop_assert!(done.contains(&a), "{} ran before {}", r, a);
                        }
                    }
                }
                g.remove_nodes(&roots).unwrap();
                done.extend(roots);
            }
            prop_assert_eq!(done.len(), n);
        }

        #[test]
        fn cycle_detection_agrees_with_kahn((n, edges) in any_graph()) {
            let g = DependencyGraph::new(skills(n), &edges).unwrap();
            match g.detect_cycle() {
                None => prop_assert!(kahn_acyclic(n, &edges)),
                Some(cycle) => {
                    prop_assert!(!kahn_acyclic(n, &edges));
                    for k in 0..cycle.len() {
                        let edge = (cycle[k], cycle[(k + 1) % cycle.len()]);
                        prop_assert!(edges.contains(&edge), "{:?} not an edge", edge);
                    }
                }
            }
        }

        #[test]
        fn rendered_edges_parse_back((n, edges) in any_graph()) {
            prop_assert_eq!(parse_edge_text(&render_edges(&edges), n).unwrap(), edges);
        }
    }
}
