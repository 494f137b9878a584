//! Graph-level generation grammar.
//!
//! An AQG is built by a fixed operator schedule: the first step adds a
//! vertex, after which every iteration runs `AddVertex`, `SelectVertex`,
//! `AddEdge` and thereby adds one triple `<selected, edge, added>`. Only the
//! last argument of each operator is recorded, so a tree with `n` vertices is
//! described by `3n - 1` actions (including the closing `End`).

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{Aqg, EdgeClass, VertexClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    AddVertex,
    SelectVertex,
    AddEdge,
}

/// Operator applied at step `t` (1-based).
pub fn operator_at(t: usize) -> OperatorKind {
    assert!(t >= 1, "steps are numbered from 1");
    if t == 1 {
        return OperatorKind::AddVertex;
    }
    match (t - 2) % 3 {
        0 => OperatorKind::AddVertex,
        1 => OperatorKind::SelectVertex,
        _ => OperatorKind::AddEdge,
    }
}

/// Argument of `AddVertex`: a vertex class or the terminating `End`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexLabel {
    Class(VertexClass),
    End,
}

impl VertexLabel {
    /// Label set of the add-vertex head, in head order.
    pub const ALL: [VertexLabel; 5] = [
        VertexLabel::Class(VertexClass::Ent),
        VertexLabel::Class(VertexClass::Type),
        VertexLabel::Class(VertexClass::Num),
        VertexLabel::Class(VertexClass::Var),
        VertexLabel::End,
    ];

    pub fn index(self) -> usize {
        match self {
            VertexLabel::Class(c) => c.index(),
            VertexLabel::End => 4,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VertexLabel::Class(c) => c.as_str(),
            VertexLabel::End => "End",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    AddVertex(VertexLabel),
    SelectVertex(usize),
    AddEdge(EdgeClass),
}

impl Action {
    pub fn kind(&self) -> OperatorKind {
        match self {
            Action::AddVertex(_) => OperatorKind::AddVertex,
            Action::SelectVertex(_) => OperatorKind::SelectVertex,
            Action::AddEdge(_) => OperatorKind::AddEdge,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::AddVertex(l) => f.write_str(l.as_str()),
            Action::SelectVertex(i) => write!(f, "{i}"),
            Action::AddEdge(c) => f.write_str(c.as_str()),
        }
    }
}

/// The argument sequence recording (or driving) one generation run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActionSequence(pub Vec<Action>);

impl ActionSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Action> {
        self.0.iter()
    }
}

impl Serialize for ActionSequence {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for a in &self.0 {
            match a {
                Action::SelectVertex(i) => seq.serialize_element(i)?,
                other => seq.serialize_element(&other.to_string())?,
            }
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for ActionSequence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Item {
            Index(usize),
            Label(String),
        }
        let items = Vec::<Item>::deserialize(d)?;
        items
            .into_iter()
            .map(|it| match it {
                Item::Index(i) => Ok(Action::SelectVertex(i)),
                Item::Label(s) if s == "End" => Ok(Action::AddVertex(VertexLabel::End)),
                Item::Label(s) => VertexClass::parse(&s)
                    .map(|c| Action::AddVertex(VertexLabel::Class(c)))
                    .or_else(|| EdgeClass::parse(&s).map(Action::AddEdge))
                    .ok_or_else(|| D::Error::custom(format!("unknown action label {s:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ActionSequence)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("step {step} expects {expected:?}, got {got:?}")]
    KindMismatch {
        step: usize,
        expected: OperatorKind,
        got: OperatorKind,
    },
    #[error("cannot select vertex {0}: it does not exist or is the fresh vertex")]
    BadSelection(usize),
    #[error("End on an empty graph")]
    EndOnEmptyGraph,
    #[error("generation already finished")]
    Finished,
    #[error("action sequence is not terminated by End")]
    MissingEnd,
}

/// Generation state `g^t` plus the pending arguments of the current
/// iteration. `step` is the index of the next action to apply.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationState {
    pub graph: Aqg,
    pub pending_vertex: Option<usize>,
    pub pending_selection: Option<usize>,
    pub step: usize,
    pub finished: bool,
}

impl Default for GenerationState {
    fn default() -> Self {
        Self::new()
    }
}

impl GenerationState {
    pub fn new() -> Self {
        GenerationState {
            graph: Aqg::new(),
            pending_vertex: None,
            pending_selection: None,
            step: 1,
            finished: false,
        }
    }

    pub fn next_operator(&self) -> OperatorKind {
        operator_at(self.step)
    }

    pub fn apply(&self, a: Action) -> Result<GenerationState, GrammarError> {
        let mut s = self.clone();
        s.apply_mut(a)?;
        Ok(s)
    }

    pub fn apply_mut(&mut self, a: Action) -> Result<(), GrammarError> {
        if self.finished {
            return Err(GrammarError::Finished);
        }
        let expected = operator_at(self.step);
        if a.kind() != expected {
            return Err(GrammarError::KindMismatch {
                step: self.step,
                expected,
                got: a.kind(),
            });
        }
        match a {
            Action::AddVertex(VertexLabel::End) => {
                if self.graph.is_empty() {
                    return Err(GrammarError::EndOnEmptyGraph);
                }
                self.finished = true;
            }
            Action::AddVertex(VertexLabel::Class(c)) => {
                let id = self.graph.add_vertex(c);
                if self.step > 1 {
                    self.pending_vertex = Some(id);
                }
            }
            Action::SelectVertex(i) => {
                if i >= self.graph.vertices.len() || Some(i) == self.pending_vertex {
                    return Err(GrammarError::BadSelection(i));
                }
                self.pending_selection = Some(i);
            }
            Action::AddEdge(c) => {
                let (Some(slc), Some(add)) = (self.pending_selection, self.pending_vertex) else {
                    unreachable!("AddEdge always follows AddVertex and SelectVertex");
                };
                self.graph.add_edge(c, slc, add);
                self.pending_selection = None;
                self.pending_vertex = None;
            }
        }
        self.step += 1;
        Ok(())
    }

    /// Vertices a `SelectVertex` step may choose: all but the fresh one.
    pub fn selectable(&self) -> Vec<usize> {
        (0..self.graph.vertices.len())
            .filter(|&i| Some(i) != self.pending_vertex)
            .collect()
    }
}

/// Rebuilds the AQG described by an action sequence.
pub fn replay(actions: &ActionSequence) -> Result<Aqg, GrammarError> {
    let mut s = GenerationState::new();
    for &a in actions.iter() {
        s.apply_mut(a)?;
    }
    if !s.finished {
        return Err(GrammarError::MissingEnd);
    }
    Ok(s.graph)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraversalStrategy {
    DepthFirst,
    BreadthFirst,
    Random(u64),
}

impl TraversalStrategy {
    pub fn parse(s: &str, seed: u64) -> Option<Self> {
        match s {
            "dfs" => Some(TraversalStrategy::DepthFirst),
            "bfs" => Some(TraversalStrategy::BreadthFirst),
            "random" => Some(TraversalStrategy::Random(seed)),
            _ => None,
        }
    }
}

/// Restores a generation process for `g` by traversing it from the answer
/// vertex. Each newly visited vertex `v`, reached from `u` over `e`,
/// contributes `(class(v), generation index of u, class(e))`.
pub fn build_ground_truth(g: &Aqg, strategy: TraversalStrategy) -> ActionSequence {
    assert!(g.validate().is_ok(), "ground truth requires a valid AQG");
    let n = g.vertices.len();
    let mut adj = g.adjacency();
    for nb in &mut adj {
        nb.sort_unstable();
    }
    let mut gen_id = vec![usize::MAX; n];
    let mut next_id = 0;
    let mut out = Vec::with_capacity(3 * n - 1);
    let mut visit = |v: usize, from: Option<(usize, usize)>, out: &mut Vec<Action>| {
        gen_id[v] = next_id;
        next_id += 1;
        out.push(Action::AddVertex(VertexLabel::Class(g.vertices[v])));
        if let Some((u, e)) = from {
            out.push(Action::SelectVertex(gen_id[u]));
            out.push(Action::AddEdge(g.edges[e].class));
        }
    };
    let mut visited = vec![false; n];
    match strategy {
        TraversalStrategy::DepthFirst => {
            let mut stack = vec![(g.answer, None)];
            while let Some((v, from)) = stack.pop() {
                if visited[v] {
                    continue;
                }
                visited[v] = true;
                visit(v, from, &mut out);
                for &(w, e) in adj[v].iter().rev() {
                    if !visited[w] {
                        stack.push((w, Some((v, e))));
                    }
                }
            }
        }
        TraversalStrategy::BreadthFirst => {
            let mut queue = VecDeque::from([(g.answer, None)]);
            visited[g.answer] = true;
            while let Some((v, from)) = queue.pop_front() {
                visit(v, from, &mut out);
                for &(w, e) in &adj[v] {
                    if !visited[w] {
                        visited[w] = true;
                        queue.push_back((w, Some((v, e))));
                    }
                }
            }
        }
        TraversalStrategy::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            visited[g.answer] = true;
            visit(g.answer, None, &mut out);
            loop {
                let frontier: Vec<(usize, usize, usize)> = (0..n)
                    .filter(|&v| visited[v])
                    .flat_map(|v| adj[v].iter().map(move |&(w, e)| (v, w, e)))
                    .filter(|&(_, w, _)| !visited[w])
                    .collect();
                if frontier.is_empty() {
                    break;
                }
                let (v, w, e) = frontier[rng.gen_range(0..frontier.len())];
                visited[w] = true;
                visit(w, Some((v, e)), &mut out);
            }
        }
    }
    out.push(Action::AddVertex(VertexLabel::End));
    ActionSequence(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn av(c: VertexClass) -> Action {
        Action::AddVertex(VertexLabel::Class(c))
    }

    fn seq(json: &str) -> ActionSequence {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn schedule() {
        assert_eq!(operator_at(1), OperatorKind::AddVertex);
        assert_eq!(operator_at(2), OperatorKind::AddVertex);
        assert_eq!(operator_at(3), OperatorKind::SelectVertex);
        assert_eq!(operator_at(4), OperatorKind::AddEdge);
        assert_eq!(operator_at(7), OperatorKind::AddEdge);
    }

    #[test]
    fn apply_single_iteration() {
        let s = GenerationState::new().apply(av(VertexClass::Var)).unwrap();
        assert_eq!(s.graph.vertices, vec![VertexClass::Var]);
        assert_eq!(s.step, 2);
        let s = s.apply(av(VertexClass::Ent)).unwrap();
        assert_eq!(s.pending_vertex, Some(1));
        let s = s.apply(Action::SelectVertex(0)).unwrap();
        assert_eq!((s.pending_vertex, s.pending_selection), (Some(1), Some(0)));
        let s = s.apply(Action::AddEdge(EdgeClass::Rel)).unwrap();
        assert_eq!(s.graph.edges.len(), 1);
        assert_eq!((s.graph.edges[0].u, s.graph.edges[0].v), (0, 1));
        assert!(s.graph.validate().is_ok());
        assert_eq!(s.pending_vertex, None);
    }

    #[test]
    fn apply_errors() {
        let s = GenerationState::new();
        assert!(matches!(
            s.apply(Action::SelectVertex(0)),
            Err(GrammarError::KindMismatch { .. })
        ));
        assert_eq!(
            s.apply(Action::AddVertex(VertexLabel::End)),
            Err(GrammarError::EndOnEmptyGraph)
        );
        let s = s
            .apply(av(VertexClass::Var))
            .unwrap()
            .apply(av(VertexClass::Ent))
            .unwrap();
        assert_eq!(s.apply(Action::SelectVertex(1)), Err(GrammarError::BadSelection(1)));
        assert_eq!(s.apply(Action::SelectVertex(7)), Err(GrammarError::BadSelection(7)));
        assert_eq!(s.selectable(), vec![0]);
    }

    #[test]
    fn replay_examples() {
        assert_eq!(
            replay(&seq(r#"["Var","End"]"#)).unwrap(),
            Aqg::single(VertexClass::Var)
        );
        let g = replay(&seq(r#"["Var","Var",0,"Rel","Ent",1,"Rel","End"]"#)).unwrap();
        assert_eq!(
            g.vertices,
            vec![VertexClass::Var, VertexClass::Var, VertexClass::Ent]
        );
        assert_eq!((g.edges[0].u, g.edges[0].v), (0, 1));
        assert_eq!((g.edges[1].u, g.edges[1].v), (1, 2));
        assert_eq!(g.answer, 0);
        assert_eq!(replay(&seq(r#"["Var"]"#)), Err(GrammarError::MissingEnd));
        assert_eq!(
            replay(&seq(r#"["Var","End","Var"]"#)),
            Err(GrammarError::Finished)
        );
    }

    #[test]
    fn ground_truth_examples() {
        let single = build_ground_truth(&Aqg::single(VertexClass::Var), TraversalStrategy::DepthFirst);
        assert_eq!(serde_json::to_string(&single).unwrap(), r#"["Var","End"]"#);

        let mut chain = Aqg::single(VertexClass::Var);
        chain.add_vertex(VertexClass::Var);
        chain.add_vertex(VertexClass::Ent);
        chain.add_edge(EdgeClass::Rel, 0, 1);
        chain.add_edge(EdgeClass::Rel, 1, 2);
        let pi = build_ground_truth(&chain, TraversalStrategy::DepthFirst);
        assert_eq!(
            serde_json::to_string(&pi).unwrap(),
            r#"["Var","Var",0,"Rel","Ent",1,"Rel","End"]"#
        );
    }

    #[test]
    fn ground_truth_uses_generation_indices() {
        // Answer stored last: the generation index of the answer is 0.
        let mut g = Aqg::new();
        g.add_vertex(VertexClass::Ent);
        g.add_vertex(VertexClass::Var);
        g.add_vertex(VertexClass::Var);
        g.add_edge(EdgeClass::Rel, 0, 1);
        g.add_edge(EdgeClass::Rel, 1, 2);
        g.answer = 2;
        let pi = build_ground_truth(&g, TraversalStrategy::DepthFirst);
        assert_eq!(
            serde_json::to_string(&pi).unwrap(),
            r#"["Var","Var",0,"Rel","Ent",1,"Rel","End"]"#
        );
    }

    #[test]
    fn star_dfs_and_bfs_agree_on_triples() {
        let mut star = Aqg::single(VertexClass::Var);
        star.add_vertex(VertexClass::Ent);
        star.add_vertex(VertexClass::Type);
        star.add_edge(EdgeClass::Rel, 0, 1);
        star.add_edge(EdgeClass::Isa, 0, 2);
        let dfs = build_ground_truth(&star, TraversalStrategy::DepthFirst);
        let bfs = build_ground_truth(&star, TraversalStrategy::BreadthFirst);
        let triples = |pi: &ActionSequence| {
            let mut t: Vec<String> = pi.0[1..pi.len() - 1]
                .chunks(3)
                .map(|c| format!("{} {} {}", c[0], c[1], c[2]))
                .collect();
            t.sort();
            t
        };
        assert_eq!(triples(&dfs), triples(&bfs));
        assert!(replay(&dfs).unwrap().is_isomorphic(&star));
        assert!(replay(&bfs).unwrap().is_isomorphic(&star));
    }

    #[test]
    fn random_traversal_is_seeded() {
        let mut g = Aqg::single(VertexClass::Var);
        for i in 0..6 {
            let v = g.add_vertex(VertexClass::Var);
            g.add_edge(EdgeClass::Rel, i / 2, v);
        }
        let a = build_ground_truth(&g, TraversalStrategy::Random(9));
        let b = build_ground_truth(&g, TraversalStrategy::Random(9));
        assert_eq!(a, b);
        assert!(replay(&a).unwrap().is_isomorphic(&g));
    }
}
