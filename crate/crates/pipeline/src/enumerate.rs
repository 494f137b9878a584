//! Structure-unconstrained baseline: every groundable AQG up to a size.
//!
//! Trees are grown one leaf at a time from a lone answer variable and
//! deduplicated by canonical code. Groundability is monotone under leaf
//! removal except for count assertions (`Cnt` against a number), whose
//! outcome can flip either way; trees containing such an edge are kept in
//! the frontier while they remain instantiable from the linking results.
//! Every groundable tree therefore has a chain of frontier ancestors and
//! the pruned search is exhaustive.

use std::collections::{BTreeMap, BTreeSet};

use aqg_core::{is_groundable, Aqg, CanonicalCode, EdgeClass, KnowledgeBase, LinkingResults, VertexClass};

/// Largest size the enumeration accepts; larger requests are clamped.
pub const MAX_EDGES: usize = 4;

fn extensions(g: &Aqg) -> impl Iterator<Item = Aqg> + '_ {
    (0..g.vertices.len()).flat_map(move |x| {
        VertexClass::ALL.into_iter().flat_map(move |vc| {
            EdgeClass::ALL.into_iter().map(move |ec| {
                let mut h = g.clone();
                let y = h.add_vertex(vc);
                h.add_edge(ec, x, y);
                h
            })
        })
    })
}

fn grow(max_edges: usize, mut keep: impl FnMut(&Aqg) -> bool) -> Vec<Aqg> {
    let root = Aqg::single(VertexClass::Var);
    if !keep(&root) {
        return Vec::new();
    }
    let mut all = vec![root.clone()];
    let mut frontier = vec![root];
    for _ in 0..max_edges.min(MAX_EDGES) {
        let mut next: BTreeMap<CanonicalCode, Aqg> = BTreeMap::new();
        let mut rejected: BTreeSet<CanonicalCode> = BTreeSet::new();
        for g in &frontier {
            for h in extensions(g) {
                let code = h.canonical_code();
                if next.contains_key(&code) || rejected.contains(&code) {
                    continue;
                }
                if keep(&h) {
                    next.insert(code, h);
                } else {
                    rejected.insert(code);
                }
            }
        }
        frontier = next.into_values().collect();
        all.extend(frontier.iter().cloned());
    }
    all
}

/// All answer-rooted AQGs (answer is a `Var`) with at most `max_edges`
/// edges, one per isomorphism class, without any KB filtering.
pub fn enumerate_shapes(max_edges: usize) -> Vec<Aqg> {
    grow(max_edges, |_| true)
}

fn has_count_assertion(g: &Aqg) -> bool {
    g.edges.iter().any(|e| {
        e.class == EdgeClass::Cnt && (g.vertices[e.u] == VertexClass::Num || g.vertices[e.v] == VertexClass::Num)
    })
}

fn instantiable(g: &Aqg, r: &LinkingResults) -> bool {
    let mentions = r.entities.iter().filter(|c| !c.is_empty()).count();
    g.count_vertices(VertexClass::Ent) <= mentions
        && (g.count_vertices(VertexClass::Num) == 0 || !r.numbers.is_empty())
        && (g.count_vertices(VertexClass::Type) == 0 || !r.types.is_empty())
}

/// Non-isomorphic groundable AQGs with at most `max_edges` edges (clamped
/// to [`MAX_EDGES`]), sorted by edge count and then canonical code.
pub fn enumerate_aqgs(max_edges: usize, r: &LinkingResults, kb: &KnowledgeBase) -> Vec<Aqg> {
    let mut groundable = BTreeMap::new();
    let all = grow(max_edges, |g| {
        let ok = instantiable(g, r) && is_groundable(g, r, kb);
        if ok {
            groundable.insert(g.canonical_code(), ());
        }
        ok || (has_count_assertion(g) && instantiable(g, r))
    });
    let mut out: Vec<(usize, CanonicalCode, Aqg)> = all
        .into_iter()
        .map(|g| (g.edges.len(), g.canonical_code(), g))
        .filter(|(_, c, _)| groundable.contains_key(c))
        .collect();
    out.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    out.into_iter().map(|(_, _, g)| g).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_pairwise_non_isomorphic() {
        let shapes = enumerate_shapes(2);
        let codes: BTreeSet<_> = shapes.iter().map(Aqg::canonical_code).collect();
        assert_eq!(codes.len(), shapes.len());
        assert!(shapes.iter().all(|g| g.validate().is_ok() && g.vertices[g.answer] == VertexClass::Var));
    }

    #[test]
    fn one_edge_shapes_count() {
        // Lone Var plus one leaf: 4 leaf classes times 5 edge classes.
        assert_eq!(enumerate_shapes(1).len(), 1 + 4 * 5);
    }
}
