//! Grounding: turning an AQG into the executable query graphs it describes.
//!
//! Grounding runs in two steps. Every non-variable vertex and every built-in
//! edge is first replaced by a candidate instance, giving an intermediate
//! graph in which only `Rel` edges stay abstract. Each `Rel` edge is then
//! oriented both ways and filled with the relations the knowledge base
//! offers for it, closest-to-answer edges first. Only queries with a
//! nonempty answer survive.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    format_number, var_name, Aqg, Direction, Edge, EdgeClass, QueryGraph, Vertex, VertexClass,
};
use crate::kb::KnowledgeBase;

/// Entity, type and number candidates recognised in a question.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkingResults {
    /// One candidate set per entity mention.
    #[serde(default)]
    pub entities: Vec<Vec<String>>,
    #[serde(default)]
    pub types: Vec<String>,
    #[serde(default)]
    pub numbers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GroundingError {
    #[error("vertex {vertex} ({class}) has no candidate instance")]
    UnGroundable { vertex: usize, class: VertexClass },
}

/// An AQG whose constants and built-in edges carry instances; variables and
/// `Rel` edges are still open.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct IntermediateGraph {
    pub aqg: Aqg,
    pub vertex_instances: Vec<Option<String>>,
    pub edge_instances: Vec<Option<String>>,
}

// Aqg has no Ord; compare by its canonical JSON-free shape.
impl PartialOrd for Aqg {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Aqg {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |g: &Aqg| {
            (
                g.vertices.clone(),
                g.edges.iter().map(|e| (e.class, e.u, e.v)).collect::<Vec<_>>(),
                g.answer,
            )
        };
        key(self).cmp(&key(other))
    }
}

/// Query graphs matching one AQG, sorted by canonical key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CandidateSet {
    pub queries: Vec<QueryGraph>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, QueryGraph> {
        self.queries.iter()
    }
}

/// Cartesian product of instance choices for constants and built-in edges.
/// Entity mentions are assigned to `Ent` vertices injectively.
pub fn enumerate_intermediate(
    g: &Aqg,
    r: &LinkingResults,
) -> Result<Vec<IntermediateGraph>, GroundingError> {
    let numbers: Vec<String> = {
        let mut v: Vec<String> = r.numbers.iter().map(|&x| format_number(x)).collect();
        v.sort();
        v.dedup();
        v
    };
    let types: Vec<String> = {
        let mut v = r.types.clone();
        v.sort();
        v.dedup();
        v
    };
    for (id, &class) in g.vertices.iter().enumerate() {
        let empty = match class {
            VertexClass::Ent => r.entities.iter().all(|m| m.is_empty()),
            VertexClass::Type => types.is_empty(),
            VertexClass::Num => numbers.is_empty(),
            VertexClass::Var => false,
        };
        if empty {
            return Err(GroundingError::UnGroundable { vertex: id, class });
        }
    }

    let ent_vertices: Vec<usize> = (0..g.vertices.len())
        .filter(|&i| g.vertices[i] == VertexClass::Ent)
        .collect();
    let mut entity_choices: Vec<Vec<String>> = Vec::new();
    injective_entities(&r.entities, ent_vertices.len(), &mut vec![false; r.entities.len()], &mut Vec::new(), &mut entity_choices);
    entity_choices.sort();
    entity_choices.dedup();
    if entity_choices.is_empty() {
        return Err(GroundingError::UnGroundable {
            vertex: ent_vertices[0],
            class: VertexClass::Ent,
        });
    }

    // Remaining slots, each with its own option list.
    enum Slot {
        Vertex(usize),
        Edge(usize),
    }
    let mut slots: Vec<(Slot, Vec<String>)> = Vec::new();
    for (id, &class) in g.vertices.iter().enumerate() {
        match class {
            VertexClass::Type => slots.push((Slot::Vertex(id), types.clone())),
            VertexClass::Num => slots.push((Slot::Vertex(id), numbers.clone())),
            _ => {}
        }
    }
    for (id, e) in g.edges.iter().enumerate() {
        if let Some(inst) = e.class.builtin_instances() {
            slots.push((Slot::Edge(id), inst.iter().map(|s| s.to_string()).collect()));
        }
    }

    let mut out = Vec::new();
    for ents in &entity_choices {
        let mut base = IntermediateGraph {
            aqg: g.clone(),
            vertex_instances: vec![None; g.vertices.len()],
            edge_instances: vec![None; g.edges.len()],
        };
        for (&v, e) in ent_vertices.iter().zip(ents) {
            base.vertex_instances[v] = Some(e.clone());
        }
        let mut idx = vec![0usize; slots.len()];
        loop {
            let mut ig = base.clone();
            for ((slot, options), &k) in slots.iter().zip(&idx) {
                match *slot {
                    Slot::Vertex(v) => ig.vertex_instances[v] = Some(options[k].clone()),
                    Slot::Edge(e) => ig.edge_instances[e] = Some(options[k].clone()),
                }
            }
            out.push(ig);
            // Odometer increment.
            let mut pos = 0;
            while pos < slots.len() {
                idx[pos] += 1;
                if idx[pos] < slots[pos].1.len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == slots.len() {
                break;
            }
        }
    }
    Ok(out)
}

fn injective_entities(
    mentions: &[Vec<String>],
    remaining: usize,
    used: &mut Vec<bool>,
    current: &mut Vec<String>,
    out: &mut Vec<Vec<String>>,
) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    for m in 0..mentions.len() {
        if used[m] {
            continue;
        }
        used[m] = true;
        for e in &mentions[m] {
            current.push(e.clone());
            injective_entities(mentions, remaining - 1, used, current, out);
            current.pop();
        }
        used[m] = false;
    }
}

/// All orientations of the `Rel` edges of `g`, in edge-id order.
pub fn enumerate_directions(g: &IntermediateGraph) -> Vec<Vec<Direction>> {
    let k = g.aqg.count_edges(EdgeClass::Rel);
    (0..1usize << k)
        .map(|mask| {
            (0..k)
                .map(|b| {
                    if mask >> b & 1 == 0 {
                        Direction::Forward
                    } else {
                        Direction::Backward
                    }
                })
                .collect()
        })
        .collect()
}

const OPEN_RELATION: &str = "?r";

impl IntermediateGraph {
    /// Query graph with the given `Rel` orientations and placeholder
    /// relations. `None` when the answer vertex is not a variable.
    pub fn to_query(&self, directions: &[Direction]) -> Option<QueryGraph> {
        let g = &self.aqg;
        if g.vertices.get(g.answer) != Some(&VertexClass::Var) {
            return None;
        }
        let mut next_var = 1;
        let vertices = g
            .vertices
            .iter()
            .enumerate()
            .map(|(id, &class)| {
                let instance = match class {
                    VertexClass::Var if id == g.answer => var_name(0),
                    VertexClass::Var => {
                        next_var += 1;
                        var_name(next_var - 1)
                    }
                    _ => self.vertex_instances[id].clone().expect("constant instantiated"),
                };
                Vertex { id, class, instance }
            })
            .collect();
        let mut dirs = directions.iter();
        let edges = g
            .edges
            .iter()
            .enumerate()
            .map(|(id, e)| {
                let (instance, dir) = match e.class {
                    EdgeClass::Rel => (OPEN_RELATION.to_string(), *dirs.next().expect("one direction per Rel edge")),
                    _ => (
                        self.edge_instances[id].clone().expect("built-in instantiated"),
                        Direction::Undirected,
                    ),
                };
                Edge {
                    id,
                    class: e.class,
                    instance,
                    u: e.u,
                    v: e.v,
                    dir,
                }
            })
            .collect();
        QueryGraph::new(vertices, edges, g.answer).ok()
    }
}

/// `Rel` edge ids ordered by distance of their nearer endpoint from the
/// answer, ties by id.
fn rel_order(g: &Aqg) -> Vec<usize> {
    let adj = g.adjacency();
    let mut dist = vec![usize::MAX; g.vertices.len()];
    dist[g.answer] = 0;
    let mut queue = VecDeque::from([g.answer]);
    while let Some(x) = queue.pop_front() {
        for &(y, _) in &adj[x] {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    let mut rels: Vec<usize> = (0..g.edges.len())
        .filter(|&i| g.edges[i].class == EdgeClass::Rel)
        .collect();
    rels.sort_by_key(|&i| (dist[g.edges[i].u].min(dist[g.edges[i].v]), i));
    rels
}

struct Grounder<'a> {
    kb: &'a KnowledgeBase,
    order: Vec<usize>,
    early_exit: bool,
    found: BTreeMap<String, QueryGraph>,
}

impl Grounder<'_> {
    fn done(&self) -> bool {
        self.early_exit && !self.found.is_empty()
    }

    fn fill(&mut self, q: &mut QueryGraph, mask: &mut Vec<bool>, depth: usize) {
        if self.done() {
            return;
        }
        let Some(&edge) = self.order.get(depth) else {
            if !self.kb.execute(q).is_empty() {
                self.found.entry(q.canonical_key()).or_insert_with(|| q.clone());
            }
            return;
        };
        let candidates = self.kb.relaxed_relation_candidates(q, edge, mask);
        mask[edge] = true;
        for r in candidates {
            let mut next = q.with_relation(edge, &r);
            self.fill(&mut next, mask, depth + 1);
            if self.done() {
                break;
            }
        }
        mask[edge] = false;
    }
}

fn ground_impl(g: &Aqg, r: &LinkingResults, kb: &KnowledgeBase, early_exit: bool) -> CandidateSet {
    if g.validate().is_err() {
        return CandidateSet::default();
    }
    let Ok(intermediates) = enumerate_intermediate(g, r) else {
        return CandidateSet::default();
    };
    let mut grounder = Grounder {
        kb,
        order: rel_order(g),
        early_exit,
        found: BTreeMap::new(),
    };
    for ig in &intermediates {
        for dirs in enumerate_directions(ig) {
            let Some(mut q) = ig.to_query(&dirs) else {
                return CandidateSet::default();
            };
            let mut mask: Vec<bool> = g.edges.iter().map(|e| e.class != EdgeClass::Rel).collect();
            grounder.fill(&mut q, &mut mask, 0);
            if grounder.done() {
                break;
            }
        }
        if grounder.done() {
            break;
        }
    }
    CandidateSet {
        queries: grounder.found.into_values().collect(),
    }
}

/// Every query graph with structure `g` that executes nonempty on `kb`,
/// deduplicated and sorted by canonical key.
pub fn ground(g: &Aqg, r: &LinkingResults, kb: &KnowledgeBase) -> CandidateSet {
    ground_impl(g, r, kb, false)
}

/// Whether `ground(g, r, kb)` would be nonempty; stops at the first match.
pub fn is_groundable(g: &Aqg, r: &LinkingResults, kb: &KnowledgeBase) -> bool {
    !ground_impl(g, r, kb, true).is_empty()
}

/// Adds a `Type` vertex (joined by `Isa`) to the first variable, in id
/// order, for which the augmented AQG still grounds. Only applies when `g`
/// has no `Type` vertex and type candidates exist.
pub fn attach_type(g: &Aqg, r: &LinkingResults, kb: &KnowledgeBase) -> Option<Aqg> {
    if r.types.is_empty() || g.count_vertices(VertexClass::Type) > 0 {
        return None;
    }
    (0..g.vertices.len())
        .filter(|&v| g.vertices[v] == VertexClass::Var)
        .map(|v| {
            let mut h = g.clone();
            let t = h.add_vertex(VertexClass::Type);
            h.add_edge(EdgeClass::Isa, v, t);
            h
        })
        .find(|h| is_groundable(h, r, kb))
}

/// Distinct relation names mentioned by a set of candidates.
pub fn candidate_relations(c: &CandidateSet) -> BTreeSet<String> {
    c.iter()
        .flat_map(|q| q.edges().iter().filter(|e| e.class == EdgeClass::Rel).map(|e| e.instance.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{KbBuilder, Term};

    fn kb(rows: &[(&str, &str, &str)]) -> KnowledgeBase {
        let mut b = KbBuilder::new();
        for &(s, p, o) in rows {
            b.add(s, p, Term::parse_object(o).unwrap());
        }
        b.build()
    }

    fn var_rel(class: VertexClass) -> Aqg {
        let mut g = Aqg::single(VertexClass::Var);
        let x = g.add_vertex(class);
        g.add_edge(EdgeClass::Rel, 0, x);
        g
    }

    fn link(entities: &[&[&str]], types: &[&str], numbers: &[f64]) -> LinkingResults {
        LinkingResults {
            entities: entities
                .iter()
                .map(|m| m.iter().map(|s| s.to_string()).collect())
                .collect(),
            types: types.iter().map(|s| s.to_string()).collect(),
            numbers: numbers.to_vec(),
        }
    }

    #[test]
    fn intermediate_counts() {
        let g = var_rel(VertexClass::Ent);
        assert_eq!(enumerate_intermediate(&g, &link(&[&["A"]], &[], &[])).unwrap().len(), 1);

        let mut cmp = Aqg::single(VertexClass::Var);
        cmp.add_vertex(VertexClass::Num);
        cmp.add_edge(EdgeClass::Cmp, 0, 1);
        let igs = enumerate_intermediate(&cmp, &link(&[], &[], &[5.0])).unwrap();
        assert_eq!(igs.len(), 3);
        let ops: BTreeSet<_> = igs.iter().map(|ig| ig.edge_instances[0].clone().unwrap()).collect();
        assert_eq!(ops, ["<", "=", ">"].iter().map(|s| s.to_string()).collect());

        assert!(matches!(
            enumerate_intermediate(&g, &link(&[], &[], &[])),
            Err(GroundingError::UnGroundable { vertex: 1, .. })
        ));
    }

    #[test]
    fn entity_mentions_are_used_once() {
        let mut g = Aqg::single(VertexClass::Var);
        for _ in 0..2 {
            let x = g.add_vertex(VertexClass::Ent);
            g.add_edge(EdgeClass::Rel, 0, x);
        }
        // One mention cannot fill two vertices.
        assert!(enumerate_intermediate(&g, &link(&[&["A", "B"]], &[], &[])).is_err());
        // Two mentions: (A,C), (C,A), (B,C), (C,B).
        let igs = enumerate_intermediate(&g, &link(&[&["A", "B"], &["C"]], &[], &[])).unwrap();
        assert_eq!(igs.len(), 4);
    }

    #[test]
    fn direction_counts() {
        let mut g = Aqg::single(VertexClass::Var);
        let ig = |g: &Aqg| IntermediateGraph {
            aqg: g.clone(),
            vertex_instances: vec![None; g.vertices.len()],
            edge_instances: vec![None; g.edges.len()],
        };
        assert_eq!(enumerate_directions(&ig(&g)).len(), 1);
        for _ in 0..2 {
            let x = g.add_vertex(VertexClass::Var);
            g.add_edge(EdgeClass::Rel, 0, x);
        }
        assert_eq!(enumerate_directions(&ig(&g)).len(), 4);
        let x = g.add_vertex(VertexClass::Var);
        g.add_edge(EdgeClass::Rel, 0, x);
        assert_eq!(enumerate_directions(&ig(&g)).len(), 8);
    }

    #[test]
    fn ground_both_directions() {
        let k = kb(&[("A", "p", "B"), ("C", "q", "A")]);
        let g = var_rel(VertexClass::Ent);
        let r = link(&[&["A"]], &[], &[]);
        let c = ground(&g, &r, &k);
        assert_eq!(c.len(), 2);
        let answers: BTreeSet<_> = c.iter().map(|q| k.execute(q)).collect();
        assert!(answers.contains(&["B".to_string()].into_iter().collect()));
        assert!(answers.contains(&["C".to_string()].into_iter().collect()));
        for q in c.iter() {
            assert!(q.to_aqg().is_isomorphic(&g));
        }
        assert!(is_groundable(&g, &r, &k));
        assert!(ground(&g, &r, &KnowledgeBase::empty()).is_empty());
        assert!(!is_groundable(&g, &r, &KnowledgeBase::empty()));
    }

    #[test]
    fn ground_type() {
        let k = kb(&[("B", "rdf:type", "T")]);
        let mut g = Aqg::single(VertexClass::Var);
        g.add_vertex(VertexClass::Type);
        g.add_edge(EdgeClass::Isa, 0, 1);
        let c = ground(&g, &link(&[], &["T"], &[]), &k);
        assert_eq!(c.len(), 1);
        assert_eq!(k.execute(&c.queries[0]), ["B".to_string()].into_iter().collect());
    }

    #[test]
    fn lone_variable_groundability() {
        let g = Aqg::single(VertexClass::Var);
        let r = LinkingResults::default();
        assert!(is_groundable(&g, &r, &kb(&[("A", "p", "B")])));
        assert!(!is_groundable(&g, &r, &KnowledgeBase::empty()));
    }

    #[test]
    fn attach_type_cases() {
        let k = kb(&[
            ("A", "p", "B"),
            ("B", "rdf:type", "T"),
            ("A", "rdf:type", "S"),
        ]);
        let g = var_rel(VertexClass::Ent);
        // No type candidates: nothing to do.
        assert_eq!(attach_type(&g, &link(&[&["A"]], &[], &[]), &k), None);
        let r = link(&[&["A"]], &["T"], &[]);
        let h = attach_type(&g, &r, &k).unwrap();
        assert_eq!(h.vertices.len(), 3);
        assert_eq!(h.edges[1].class, EdgeClass::Isa);
        assert_eq!(h.edges[1].u, 0);
        // Already typed: nothing to do.
        assert_eq!(attach_type(&h, &r, &k), None);
        // No variable binding has type S.
        assert_eq!(attach_type(&g, &link(&[&["A"]], &["S"], &[]), &k), None);
    }
}
