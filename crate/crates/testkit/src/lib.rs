//! Random instance generators and brute-force oracles for the test suites.
//!
//! The oracles here deliberately avoid the library's evaluation paths: the
//! isomorphism oracle tries every vertex bijection, the execution oracle
//! enumerates triple combinations with nested loops, and the grounding
//! oracle enumerates every instance, direction and relation assignment.

use std::collections::{BTreeMap, BTreeSet};

use aqg_core::graph::{format_number, parse_number, var_name, RDF_TYPE};
use aqg_core::{
    Aqg, AnswerSet, Direction, Edge, EdgeClass, KbBuilder, KnowledgeBase, LinkingResults, QueryGraph,
    Term, Vertex, VertexClass,
};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random tree with `n` vertices, uniform labels and a random answer vertex.
pub fn random_aqg(rng: &mut impl Rng, n: usize) -> Aqg {
    let mut g = Aqg::new();
    for i in 0..n {
        g.add_vertex(*VertexClass::ALL.choose(rng).unwrap());
        if i > 0 {
            let parent = rng.gen_range(0..i);
            g.add_edge(*EdgeClass::ALL.choose(rng).unwrap(), parent, i);
        }
    }
    // Shuffle storage order so ids do not follow the tree shape.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut g = g.relabel(&perm);
    g.edges.shuffle(rng);
    g.answer = rng.gen_range(0..n);
    g
}

/// Label- and answer-preserving isomorphism by trying every bijection.
pub fn brute_isomorphic(a: &Aqg, b: &Aqg) -> bool {
    let n = a.vertices.len();
    if n != b.vertices.len() || a.edges.len() != b.edges.len() {
        return false;
    }
    let key = |u: usize, v: usize| (u.min(v), u.max(v));
    let b_edges: BTreeMap<(usize, usize), EdgeClass> =
        b.edges.iter().map(|e| (key(e.u, e.v), e.class)).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut found = false;
    permute(&mut perm, 0, &mut |p| {
        if found || p[a.answer] != b.answer {
            return;
        }
        if (0..n).any(|i| a.vertices[i] != b.vertices[p[i]]) {
            return;
        }
        if a
            .edges
            .iter()
            .all(|e| b_edges.get(&key(p[e.u], p[e.v])) == Some(&e.class))
        {
            found = true;
        }
    });
    found
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

pub const ENTITIES: [&str; 6] = ["E0", "E1", "E2", "E3", "E4", "E5"];
pub const TYPES: [&str; 2] = ["T0", "T1"];
pub const RELATIONS: [&str; 3] = ["p0", "p1", "p2"];

/// Small random store over a fixed vocabulary: entity links, numeric
/// attributes and type assertions.
pub fn random_kb(rng: &mut impl Rng, max_triples: usize) -> KnowledgeBase {
    let mut b = KbBuilder::new();
    let n = rng.gen_range(0..=max_triples);
    for _ in 0..n {
        let s = *ENTITIES.choose(rng).unwrap();
        match rng.gen_range(0..10) {
            0..=5 => {
                b.add_entity(s, RELATIONS.choose(rng).unwrap(), ENTITIES.choose(rng).unwrap());
            }
            6 | 7 => {
                b.add_number(s, RELATIONS.choose(rng).unwrap(), rng.gen_range(1..=6) as f64);
            }
            _ => {
                b.add_entity(s, RDF_TYPE, TYPES.choose(rng).unwrap());
            }
        }
    }
    b.build()
}

/// Random grounded query with at most `max_edges` edges whose answer is
/// vertex 0. Shapes favour meaningful combinations but may include
/// structurally empty ones.
pub fn random_query(rng: &mut impl Rng, max_edges: usize) -> QueryGraph {
    let m = rng.gen_range(0..=max_edges);
    let mut vertices = vec![Vertex {
        id: 0,
        class: VertexClass::Var,
        instance: var_name(0),
    }];
    let mut edges: Vec<Edge> = Vec::new();
    let mut next_var = 1;
    for _ in 0..m {
        let parents: Vec<usize> = vertices
            .iter()
            .filter(|v| v.class == VertexClass::Var)
            .map(|v| v.id)
            .collect();
        let p = *parents.choose(rng).unwrap();
        let id = vertices.len();
        let (class, instance, eclass, einst) = match rng.gen_range(0..9) {
            0 | 1 => {
                next_var += 1;
                (VertexClass::Var, var_name(next_var - 1), EdgeClass::Rel, RELATIONS.choose(rng).unwrap().to_string())
            }
            2 => (
                VertexClass::Ent,
                ENTITIES.choose(rng).unwrap().to_string(),
                EdgeClass::Rel,
                RELATIONS.choose(rng).unwrap().to_string(),
            ),
            3 => (
                VertexClass::Num,
                rng.gen_range(1..=6).to_string(),
                EdgeClass::Rel,
                RELATIONS.choose(rng).unwrap().to_string(),
            ),
            4 => (VertexClass::Type, TYPES.choose(rng).unwrap().to_string(), EdgeClass::Isa, RDF_TYPE.into()),
            5 => (
                VertexClass::Num,
                rng.gen_range(0..=7).to_string(),
                EdgeClass::Cmp,
                ["<", ">", "="].choose(rng).unwrap().to_string(),
            ),
            6 => (
                VertexClass::Num,
                rng.gen_range(1..=3).to_string(),
                EdgeClass::Ord,
                ["min_at_n", "max_at_n"].choose(rng).unwrap().to_string(),
            ),
            7 => (VertexClass::Num, rng.gen_range(0..=3).to_string(), EdgeClass::Cnt, "count".into()),
            _ => {
                next_var += 1;
                (VertexClass::Var, var_name(next_var - 1), EdgeClass::Cnt, "count".into())
            }
        };
        vertices.push(Vertex { id, class, instance });
        let dir = if eclass == EdgeClass::Rel {
            if rng.gen_bool(0.5) {
                Direction::Forward
            } else {
                Direction::Backward
            }
        } else {
            Direction::Undirected
        };
        let (u, v) = if rng.gen_bool(0.5) { (p, id) } else { (id, p) };
        edges.push(Edge {
            id: edges.len(),
            class: eclass,
            instance: einst,
            u,
            v,
            dir,
        });
    }
    QueryGraph::new(vertices, edges, 0).expect("generator builds valid query graphs")
}

/// Random linking results over the test vocabulary, sometimes mentioning
/// entities the store does not contain.
pub fn random_linking(rng: &mut impl Rng) -> LinkingResults {
    let mentions = rng.gen_range(0..=2);
    let entities = (0..mentions)
        .map(|_| {
            let k = rng.gen_range(1..=2);
            (0..k)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        "E9".to_string()
                    } else {
                        ENTITIES.choose(rng).unwrap().to_string()
                    }
                })
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();
    let types = TYPES.iter().filter(|_| rng.gen_bool(0.5)).map(|s| s.to_string()).collect();
    let numbers = (0..rng.gen_range(0..=2)).map(|_| rng.gen_range(1..=4) as f64).collect();
    LinkingResults {
        entities,
        types,
        numbers,
    }
}

/// Random AQG with at most `max_edges` edges and a `Var` answer at vertex 0.
pub fn random_answer_rooted_aqg(rng: &mut impl Rng, max_edges: usize) -> Aqg {
    let m = rng.gen_range(0..=max_edges);
    let mut g = Aqg::single(VertexClass::Var);
    for _ in 0..m {
        let p = rng.gen_range(0..g.vertices.len());
        let class = if rng.gen_bool(0.4) {
            VertexClass::Var
        } else {
            *VertexClass::ALL.choose(rng).unwrap()
        };
        let x = g.add_vertex(class);
        let eclass = if rng.gen_bool(0.5) {
            EdgeClass::Rel
        } else {
            *EdgeClass::ALL.choose(rng).unwrap()
        };
        g.add_edge(eclass, p, x);
    }
    g
}

fn is_numeric(s: &str) -> Option<f64> {
    if s.starts_with('"') {
        return None;
    }
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
        return None;
    }
    parse_number(s)
}

/// Nested-loop evaluator: every pattern edge is matched against every
/// triple, free variables range over all nodes, then filters apply in the
/// order Cmp, Ord, Cnt.
pub fn brute_execute(kb: &KnowledgeBase, q: &QueryGraph) -> AnswerSet {
    let triples = kb.triples();
    let nodes: BTreeSet<String> = triples
        .iter()
        .flat_map(|(s, _, o)| [s.clone(), o.clone()])
        .collect();
    let answer = q.answer();
    let class = |v: usize| q.vertex(v).class;

    // Constants must exist.
    for v in q.vertices() {
        if matches!(v.class, VertexClass::Ent | VertexClass::Type) && !nodes.contains(&v.instance) {
            return AnswerSet::new();
        }
    }
    // Count output.
    let mut count_of: Option<usize> = None;
    let mut outputs = 0;
    for e in q.edges() {
        if e.class == EdgeClass::Cnt && class(e.u) != VertexClass::Num && class(e.v) != VertexClass::Num {
            if e.u != answer && e.v != answer {
                return AnswerSet::new();
            }
            outputs += 1;
            count_of = Some(e.other(answer));
        }
    }
    if outputs > 1 {
        return AnswerSet::new();
    }
    if count_of.is_some() && q.edges().iter().filter(|e| e.u == answer || e.v == answer).count() > 1 {
        return AnswerSet::new();
    }

    // Pattern edges as (subject vertex, relation, object vertex).
    let mut patterns: Vec<(usize, String, usize)> = Vec::new();
    for e in q.edges() {
        match e.class {
            EdgeClass::Rel => {
                if class(e.u) == VertexClass::Type || class(e.v) == VertexClass::Type || e.instance == RDF_TYPE {
                    return AnswerSet::new();
                }
                let (s, o) = e.subject_object();
                patterns.push((s, e.instance.clone(), o));
            }
            EdgeClass::Isa => {
                let (x, t) = match (class(e.u), class(e.v)) {
                    (VertexClass::Type, VertexClass::Var | VertexClass::Ent) => (e.v, e.u),
                    (VertexClass::Var | VertexClass::Ent, VertexClass::Type) => (e.u, e.v),
                    _ => return AnswerSet::new(),
                };
                patterns.push((x, RDF_TYPE.to_string(), t));
            }
            _ => {
                let nums = [class(e.u), class(e.v)].iter().filter(|&&c| c == VertexClass::Num).count();
                if nums == 2 {
                    return AnswerSet::new();
                }
                if nums == 1 {
                    let x = if class(e.u) == VertexClass::Num { e.v } else { e.u };
                    if class(x) == VertexClass::Type {
                        return AnswerSet::new();
                    }
                } else if e.class != EdgeClass::Cnt {
                    return AnswerSet::new();
                }
            }
        }
    }

    let const_value = |v: usize| -> String {
        let vx = q.vertex(v);
        match vx.class {
            VertexClass::Num => format_number(parse_number(&vx.instance).unwrap()),
            _ => vx.instance.clone(),
        }
    };
    let row_vars: Vec<usize> = q
        .vertices()
        .iter()
        .filter(|v| v.class == VertexClass::Var && !(count_of.is_some() && v.id == answer))
        .map(|v| v.id)
        .collect();

    // Nested loops: one triple per pattern.
    let mut rows: BTreeSet<BTreeMap<usize, String>> = BTreeSet::new();
    let mut choice = vec![0usize; patterns.len()];
    if patterns.is_empty() || !triples.is_empty() {
        'outer: loop {
            let mut binding: BTreeMap<usize, String> = BTreeMap::new();
            let mut ok = true;
            for (k, (s, p, o)) in patterns.iter().enumerate() {
                let t = &triples[choice[k]];
                if &t.1 != p {
                    ok = false;
                    break;
                }
                for (vertex, value) in [(*s, &t.0), (*o, &t.2)] {
                    if class(vertex) == VertexClass::Var {
                        match binding.get(&vertex) {
                            Some(b) if b != value => ok = false,
                            Some(_) => {}
                            None => {
                                binding.insert(vertex, value.clone());
                            }
                        }
                    } else if &const_value(vertex) != value {
                        ok = false;
                    }
                }
                if !ok {
                    break;
                }
            }
            if ok {
                // Free variables take every node.
                let free: Vec<usize> = row_vars.iter().copied().filter(|v| !binding.contains_key(v)).collect();
                let mut partial = vec![binding];
                for f in free {
                    partial = partial
                        .into_iter()
                        .flat_map(|b| {
                            nodes.iter().map(move |n| {
                                let mut b = b.clone();
                                b.insert(f, n.clone());
                                b
                            })
                        })
                        .collect();
                }
                rows.extend(partial);
            }
            let mut pos = 0;
            loop {
                if pos == patterns.len() {
                    break 'outer;
                }
                choice[pos] += 1;
                if choice[pos] < triples.len() {
                    break;
                }
                choice[pos] = 0;
                pos += 1;
            }
        }
    }
    let mut rows: Vec<BTreeMap<usize, String>> = rows.into_iter().collect();
    let value_of = |row: &BTreeMap<usize, String>, v: usize| -> String {
        if class(v) == VertexClass::Var {
            row[&v].clone()
        } else {
            const_value(v)
        }
    };

    let builtin = |c: EdgeClass| q.edges().iter().filter(move |e| e.class == c);
    let target = |e: &Edge| -> (usize, f64) {
        let (x, k) = if class(e.u) == VertexClass::Num { (e.v, e.u) } else { (e.u, e.v) };
        (x, parse_number(&q.vertex(k).instance).unwrap())
    };
    for e in builtin(EdgeClass::Cmp) {
        let (x, k) = target(e);
        rows.retain(|r| {
            is_numeric(&value_of(r, x)).is_some_and(|val| match e.instance.as_str() {
                "<" => val < k,
                ">" => val > k,
                _ => val == k,
            })
        });
    }
    for e in builtin(EdgeClass::Ord) {
        let (x, n) = target(e);
        rows.retain(|r| is_numeric(&value_of(r, x)).is_some());
        let mut values: Vec<f64> = rows.iter().map(|r| is_numeric(&value_of(r, x)).unwrap()).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        if e.instance == "max_at_n" {
            values.reverse();
        }
        let pick = if n >= 1.0 && n.fract() == 0.0 { values.get(n as usize - 1).copied() } else { None };
        match pick {
            Some(t) => rows.retain(|r| is_numeric(&value_of(r, x)) == Some(t)),
            None => rows.clear(),
        }
    }
    for e in builtin(EdgeClass::Cnt) {
        if class(e.u) != VertexClass::Num && class(e.v) != VertexClass::Num {
            continue;
        }
        let (x, k) = target(e);
        let distinct: BTreeSet<String> = rows.iter().map(|r| value_of(r, x)).collect();
        if distinct.len() as f64 != k {
            rows.clear();
        }
    }
    match count_of {
        Some(x) => {
            let n = rows.iter().map(|r| value_of(r, x)).collect::<BTreeSet<_>>().len();
            if n > 0 {
                AnswerSet::from([format_number(n as f64)])
            } else {
                AnswerSet::new()
            }
        }
        None => rows.iter().map(|r| r[&answer].clone()).collect(),
    }
}

/// Every assignment of instances, `Rel` directions and relations for `g`,
/// kept when it executes nonempty. Returns canonical keys.
pub fn brute_ground(g: &Aqg, r: &LinkingResults, kb: &KnowledgeBase) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    if g.vertices[g.answer] != VertexClass::Var {
        return out;
    }
    let vocab = kb.relation_vocabulary();
    let numbers: Vec<String> = r.numbers.iter().map(|&x| format_number(x)).collect();

    // One option list per vertex and per edge.
    let ent_vertices: Vec<usize> = (0..g.vertices.len()).filter(|&v| g.vertices[v] == VertexClass::Ent).collect();
    // Mention per Ent vertex, injective.
    let mut mention_maps: Vec<Vec<usize>> = vec![vec![]];
    for _ in &ent_vertices {
        mention_maps = mention_maps
            .into_iter()
            .flat_map(|m| {
                (0..r.entities.len())
                    .filter(|k| !m.contains(k))
                    .map(|k| {
                        let mut m = m.clone();
                        m.push(k);
                        m
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    for mentions in mention_maps {
        let mut vertex_options: Vec<Vec<String>> = Vec::new();
        for (v, &c) in g.vertices.iter().enumerate() {
            vertex_options.push(match c {
                VertexClass::Var => vec![String::new()],
                VertexClass::Ent => {
                    let k = ent_vertices.iter().position(|&x| x == v).unwrap();
                    r.entities[mentions[k]].clone()
                }
                VertexClass::Type => r.types.clone(),
                VertexClass::Num => numbers.clone(),
            });
        }
        let mut edge_options: Vec<Vec<(String, Direction)>> = Vec::new();
        for e in &g.edges {
            edge_options.push(match e.class {
                EdgeClass::Rel => vocab
                    .iter()
                    .flat_map(|p| [(p.clone(), Direction::Forward), (p.clone(), Direction::Backward)])
                    .collect(),
                EdgeClass::Ord => vec![("min_at_n".into(), Direction::Undirected), ("max_at_n".into(), Direction::Undirected)],
                EdgeClass::Cmp => ["<", ">", "="].iter().map(|s| (s.to_string(), Direction::Undirected)).collect(),
                EdgeClass::Cnt => vec![("count".into(), Direction::Undirected)],
                EdgeClass::Isa => vec![(RDF_TYPE.into(), Direction::Undirected)],
            });
        }
        let mut vchoices: Vec<Vec<String>> = vec![vec![]];
        for opts in &vertex_options {
            vchoices = vchoices
                .into_iter()
                .flat_map(|c| {
                    opts.iter().map(move |o| {
                        let mut c = c.clone();
                        c.push(o.clone());
                        c
                    })
                })
                .collect();
        }
        let mut echoices: Vec<Vec<(String, Direction)>> = vec![vec![]];
        for opts in &edge_options {
            echoices = echoices
                .into_iter()
                .flat_map(|c| {
                    opts.iter().map(move |o| {
                        let mut c = c.clone();
                        c.push(o.clone());
                        c
                    })
                })
                .collect();
        }
        for vc in &vchoices {
            let mut next_var = 1;
            let vertices: Vec<Vertex> = g
                .vertices
                .iter()
                .enumerate()
                .map(|(id, &class)| Vertex {
                    id,
                    class,
                    instance: match class {
                        VertexClass::Var if id == g.answer => var_name(0),
                        VertexClass::Var => {
                            next_var += 1;
                            var_name(next_var - 1)
                        }
                        _ => vc[id].clone(),
                    },
                })
                .collect();
            for ec in &echoices {
                let edges: Vec<Edge> = g
                    .edges
                    .iter()
                    .enumerate()
                    .map(|(id, e)| Edge {
                        id,
                        class: e.class,
                        instance: ec[id].0.clone(),
                        u: e.u,
                        v: e.v,
                        dir: ec[id].1,
                    })
                    .collect();
                let q = QueryGraph::new(vertices.clone(), edges, g.answer).unwrap();
                if !kb.execute(&q).is_empty() {
                    out.insert(q.canonical_key());
                }
            }
        }
    }
    out
}

/// Fixture KB used across tests: `(A,p,B)`, `(C,q,A)` and friends.
pub fn kb_from(rows: &[(&str, &str, &str)]) -> KnowledgeBase {
    let mut b = KbBuilder::new();
    for &(s, p, o) in rows {
        b.add(s, p, Term::parse_object(o).unwrap());
    }
    b.build()
}
