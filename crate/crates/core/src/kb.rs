//! Embedded triple store and query-graph execution.
//!
//! Execution of a grounded [`QueryGraph`]:
//! 1. `Rel` edges are directed triple patterns and `Isa` edges are patterns
//!    `<x, rdf:type, T>`; their solutions form rows over the variables.
//! 2. `Cmp` edges `(x, op, k)` keep rows whose numeric `x` satisfies `op k`.
//! 3. `Ord` edges `(x, max_at_n|min_at_n, n)` keep rows whose `x` is the
//!    n-th distinct value in descending (max) or ascending (min) order.
//! 4. `Cnt` edges `(x, count, y)` either assert that `x` has exactly `k`
//!    distinct values (`y` a number) or, when `y` is the answer, produce the
//!    singleton answer `{count}` (only when the count is positive).
//! 5. The distinct values of `?v0` are the answers.
//!
//! Variables untouched by any pattern range over every node in the store.
//! An entity or type constant absent from the store empties the result.
//! Structurally meaningless edges (an `Isa` without a `Type` endpoint, a
//! `Cmp` without exactly one `Num` endpoint, ...) make the result empty.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::graph::{
    format_number, parse_number, EdgeClass, QueryGraph, VertexClass, CMP_EQ, CMP_GT, CMP_LT, ORD_MAX,
    RDF_TYPE,
};

pub type NodeId = u32;
pub type RelId = u32;

/// Answers are rendered nodes: entity ids, canonical numbers, quoted strings.
pub type AnswerSet = BTreeSet<String>;

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Entity(String),
    Number(f64),
    Str(String),
}

impl Term {
    /// Parses an object column: numbers, `"quoted"` strings, else entity ids.
    pub fn parse_object(s: &str) -> Option<Term> {
        if is_numeric_token(s) {
            return parse_number(s).map(Term::Number);
        }
        if s.len() >= 2 && s.starts_with('"') && s.ends_with('"') {
            return Some(Term::Str(s[1..s.len() - 1].to_string()));
        }
        Some(Term::Entity(s.to_string()))
    }

    /// Text form; also the node's lookup key.
    pub fn render(&self) -> String {
        match self {
            Term::Entity(e) => e.clone(),
            Term::Number(x) => format_number(*x),
            Term::Str(s) => format!("\"{s}\""),
        }
    }
}

fn is_numeric_token(s: &str) -> bool {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit() || b == b'.')
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Collects triples before indexing.
#[derive(Default)]
pub struct KbBuilder {
    rows: Vec<(String, String, Term)>,
}

impl KbBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, s: &str, p: &str, o: Term) -> &mut Self {
        self.rows.push((s.to_string(), p.to_string(), o));
        self
    }

    pub fn add_entity(&mut self, s: &str, p: &str, o: &str) -> &mut Self {
        self.add(s, p, Term::Entity(o.to_string()))
    }

    pub fn add_number(&mut self, s: &str, p: &str, x: f64) -> &mut Self {
        self.add(s, p, Term::Number(x))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn build(mut self) -> KnowledgeBase {
        // Sorting first makes node and relation ids independent of insertion
        // order.
        self.rows
            .sort_by(|a, b| (&a.0, &a.1, a.2.render()).cmp(&(&b.0, &b.1, b.2.render())));
        let mut kb = KnowledgeBase::empty();
        for (s, p, o) in self.rows {
            let s = kb.intern_node(Term::Entity(s));
            let p = kb.intern_relation(&p);
            let o = kb.intern_node(o);
            kb.triples.push((s, p, o));
        }
        kb.triples.sort_unstable();
        kb.triples.dedup();
        kb.reindex();
        kb
    }
}

/// In-memory triple set with lookup indexes. Immutable once built.
#[derive(Clone, Debug)]
pub struct KnowledgeBase {
    nodes: Vec<Term>,
    node_index: HashMap<String, NodeId>,
    numeric: Vec<Option<f64>>,
    relations: Vec<String>,
    rel_index: HashMap<String, RelId>,
    triples: Vec<(NodeId, RelId, NodeId)>,
    by_sp: HashMap<(NodeId, RelId), Vec<NodeId>>,
    by_po: HashMap<(RelId, NodeId), Vec<NodeId>>,
    by_so: HashMap<(NodeId, NodeId), Vec<RelId>>,
    by_s: HashMap<NodeId, Vec<(RelId, NodeId)>>,
    by_o: HashMap<NodeId, Vec<(RelId, NodeId)>>,
    by_p: Vec<Vec<(NodeId, NodeId)>>,
    rdf_type: RelId,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::empty()
    }
}

impl KnowledgeBase {
    pub fn empty() -> Self {
        let mut kb = KnowledgeBase {
            nodes: Vec::new(),
            node_index: HashMap::new(),
            numeric: Vec::new(),
            relations: Vec::new(),
            rel_index: HashMap::new(),
            triples: Vec::new(),
            by_sp: HashMap::new(),
            by_po: HashMap::new(),
            by_so: HashMap::new(),
            by_s: HashMap::new(),
            by_o: HashMap::new(),
            by_p: Vec::new(),
            rdf_type: 0,
        };
        kb.rdf_type = kb.intern_relation(RDF_TYPE);
        kb.by_p.push(Vec::new());
        kb
    }

    pub fn from_triples<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, Term)>) -> Self {
        let mut b = KbBuilder::new();
        for (s, p, o) in rows {
            b.add(s, p, o);
        }
        b.build()
    }

    /// Reads the `s<TAB>p<TAB>o` format. Blank lines are skipped.
    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self, KbError> {
        let file = std::fs::File::open(path)?;
        Self::read_tsv(BufReader::new(file))
    }

    pub fn read_tsv(reader: impl BufRead) -> Result<Self, KbError> {
        let mut b = KbBuilder::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let err = |msg: String| KbError::Parse { line: i + 1, msg };
            if cols.len() != 3 {
                return Err(err(format!("expected 3 tab-separated columns, found {}", cols.len())));
            }
            if cols[0].is_empty() || cols[1].is_empty() || cols[2].is_empty() {
                return Err(err("empty column".into()));
            }
            let o = Term::parse_object(cols[2])
                .ok_or_else(|| err(format!("malformed numeric literal {:?}", cols[2])))?;
            b.add(cols[0], cols[1], o);
        }
        Ok(b.build())
    }

    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut lines: Vec<String> = self
            .triples
            .iter()
            .map(|&(s, p, o)| {
                format!(
                    "{}\t{}\t{}",
                    self.nodes[s as usize].render(),
                    self.relations[p as usize],
                    self.nodes[o as usize].render()
                )
            })
            .collect();
        lines.sort();
        for l in lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    }

    fn intern_node(&mut self, t: Term) -> NodeId {
        let key = t.render();
        if let Some(&id) = self.node_index.get(&key) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.numeric.push(match &t {
            Term::Number(x) => Some(*x),
            _ => None,
        });
        self.nodes.push(t);
        self.node_index.insert(key, id);
        id
    }

    fn intern_relation(&mut self, p: &str) -> RelId {
        if let Some(&id) = self.rel_index.get(p) {
            return id;
        }
        let id = self.relations.len() as RelId;
        self.relations.push(p.to_string());
        self.rel_index.insert(p.to_string(), id);
        id
    }

    fn reindex(&mut self) {
        self.by_p = vec![Vec::new(); self.relations.len()];
        for &(s, p, o) in &self.triples {
            self.by_sp.entry((s, p)).or_default().push(o);
            self.by_po.entry((p, o)).or_default().push(s);
            self.by_so.entry((s, o)).or_default().push(p);
            self.by_s.entry(s).or_default().push((p, o));
            self.by_o.entry(o).or_default().push((p, s));
            self.by_p[p as usize].push((s, o));
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Term {
        &self.nodes[id as usize]
    }

    pub fn lookup_node(&self, key: &str) -> Option<NodeId> {
        self.node_index.get(key).copied()
    }

    pub fn relation_name(&self, r: RelId) -> &str {
        &self.relations[r as usize]
    }

    pub fn relation_id(&self, name: &str) -> Option<RelId> {
        self.rel_index.get(name).copied()
    }

    /// Relations usable on `Rel` edges (everything but `rdf:type`), sorted.
    pub fn relation_vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .relations
            .iter()
            .enumerate()
            .filter(|&(i, _)| i as RelId != self.rdf_type && !self.by_p[i].is_empty())
            .map(|(_, r)| r.clone())
            .collect();
        v.sort();
        v
    }

    /// Triples as rendered strings, sorted.
    pub fn triples(&self) -> Vec<(String, String, String)> {
        let mut v: Vec<_> = self
            .triples
            .iter()
            .map(|&(s, p, o)| {
                (
                    self.nodes[s as usize].render(),
                    self.relations[p as usize].clone(),
                    self.nodes[o as usize].render(),
                )
            })
            .collect();
        v.sort();
        v
    }

    pub fn contains(&self, s: NodeId, p: RelId, o: NodeId) -> bool {
        self.by_sp.get(&(s, p)).is_some_and(|os| os.contains(&o))
    }

    pub fn objects(&self, s: NodeId, p: RelId) -> &[NodeId] {
        self.by_sp.get(&(s, p)).map_or(&[], Vec::as_slice)
    }

    pub fn subjects(&self, p: RelId, o: NodeId) -> &[NodeId] {
        self.by_po.get(&(p, o)).map_or(&[], Vec::as_slice)
    }

    pub fn relations_between(&self, s: NodeId, o: NodeId) -> &[RelId] {
        self.by_so.get(&(s, o)).map_or(&[], Vec::as_slice)
    }

    pub fn pairs(&self, p: RelId) -> &[(NodeId, NodeId)] {
        &self.by_p[p as usize]
    }

    /// Nodes typed `T` via `rdf:type`.
    pub fn instances_of(&self, type_id: &str) -> Vec<String> {
        let Some(t) = self.lookup_node(type_id) else {
            return Vec::new();
        };
        let mut v: Vec<String> = self
            .subjects(self.rdf_type, t)
            .iter()
            .map(|&s| self.nodes[s as usize].render())
            .collect();
        v.sort();
        v
    }

    /// Runs a grounded query and returns the distinct values of `?v0`.
    pub fn execute(&self, q: &QueryGraph) -> AnswerSet {
        let Some(plan) = Plan::new(self, q, &vec![true; q.edges().len()], true) else {
            return AnswerSet::new();
        };
        plan.answers(self, q).unwrap_or_default()
    }

    /// All relations that make `q` execute nonempty when placed on the `Rel`
    /// edge `wildcard` (whose current instance is ignored).
    pub fn relation_candidates(&self, q: &QueryGraph, wildcard: usize) -> BTreeSet<String> {
        let mask = vec![true; q.edges().len()];
        self.relaxed_relation_candidates(q, wildcard, &mask)
            .into_iter()
            .filter(|r| !self.execute(&q.with_relation(wildcard, r)).is_empty())
            .collect()
    }

    /// Relations that keep the monotone part (`Rel`, `Isa`, `Cmp` edges
    /// selected by `mask`) of `q` satisfiable when placed on `wildcard`.
    /// This is a superset of the exact candidates for any completion of the
    /// masked-out edges.
    pub fn relaxed_relation_candidates(
        &self,
        q: &QueryGraph,
        wildcard: usize,
        mask: &[bool],
    ) -> BTreeSet<String> {
        let e = &q.edges()[wildcard];
        debug_assert_eq!(e.class, EdgeClass::Rel);
        let mut mask = mask.to_vec();
        mask[wildcard] = false;
        let Some(plan) = Plan::new(self, q, &mask, false) else {
            return BTreeSet::new();
        };
        let Some(rows) = plan.solve(self) else {
            return BTreeSet::new();
        };
        let (s, o) = e.subject_object();
        let (Some(subjects), Some(objects)) = (rows.values_of(&plan, s), rows.values_of(&plan, o)) else {
            return BTreeSet::new();
        };
        let mut found: HashSet<RelId> = HashSet::new();
        if subjects.len() <= objects.len() {
            for &x in &subjects {
                for &(p, y) in self.by_s.get(&x).map_or(&[][..], Vec::as_slice) {
                    if p != self.rdf_type && objects.contains(&y) {
                        found.insert(p);
                    }
                }
            }
        } else {
            for &y in &objects {
                for &(p, x) in self.by_o.get(&y).map_or(&[][..], Vec::as_slice) {
                    if p != self.rdf_type && subjects.contains(&x) {
                        found.insert(p);
                    }
                }
            }
        }
        found
            .into_iter()
            .map(|r| self.relations[r as usize].clone())
            .collect()
    }

    /// True when the monotone edges of `q` selected by `mask` have a solution.
    pub fn satisfiable(&self, q: &QueryGraph, mask: &[bool]) -> bool {
        Plan::new(self, q, mask, false).is_some_and(|p| p.solve(self).is_some())
    }
}

/// A vertex as seen by the evaluator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Const(NodeId),
    /// A constant that does not occur in the store.
    Missing,
    Var(usize),
}

#[derive(Clone, Copy, Debug)]
enum CmpOp {
    Lt,
    Gt,
    Eq,
}

#[derive(Clone, Copy, Debug)]
enum Constraint {
    Cmp { x: usize, op: CmpOp, k: f64 },
    Ord { x: usize, max: bool, n: f64 },
    CountIs { x: usize, k: f64 },
}

impl Constraint {
    fn target(&self) -> usize {
        match *self {
            Constraint::Cmp { x, .. } | Constraint::Ord { x, .. } | Constraint::CountIs { x, .. } => x,
        }
    }
}

/// Compiled form of a query: patterns over variable slots plus constraints.
struct Plan {
    slots: Vec<Slot>,
    nvars: usize,
    patterns: Vec<(Slot, RelId, Slot)>,
    /// Constraints keyed by the vertex they restrict, in evaluation order.
    constraints: Vec<Constraint>,
    /// Vertex whose distinct count is the answer, when `?v0` is a count.
    count_answer: Option<usize>,
}

impl Plan {
    /// `full` includes the non-monotone `Ord`/`Cnt` edges; otherwise they are
    /// skipped. Returns `None` when the query is structurally empty.
    fn new(kb: &KnowledgeBase, q: &QueryGraph, mask: &[bool], full: bool) -> Option<Plan> {
        let answer = q.answer();
        let mut count_answer = None;
        let mut count_output = None;
        if full {
            for e in q.edges().iter().filter(|e| mask[e.id] && e.class == EdgeClass::Cnt) {
                let (a, b) = (q.vertex(e.u).class, q.vertex(e.v).class);
                if a != VertexClass::Num && b != VertexClass::Num {
                    if e.u != answer && e.v != answer {
                        return None;
                    }
                    if count_output.is_some() {
                        return None;
                    }
                    count_output = Some(e.id);
                    count_answer = Some(e.other(answer));
                }
            }
            if count_output.is_some() && q.edges().iter().any(|e| {
                mask[e.id] && Some(e.id) != count_output && (e.u == answer || e.v == answer)
            }) {
                return None;
            }
        }

        let mut slots = Vec::with_capacity(q.vertices().len());
        let mut nvars = 0;
        for v in q.vertices() {
            let slot = match v.class {
                VertexClass::Var => {
                    nvars += 1;
                    Slot::Var(nvars - 1)
                }
                VertexClass::Num => {
                    let x = parse_number(&v.instance)?;
                    kb.lookup_node(&format_number(x)).map_or(Slot::Missing, Slot::Const)
                }
                VertexClass::Ent | VertexClass::Type => Slot::Const(kb.lookup_node(&v.instance)?),
            };
            slots.push(slot);
        }

        let mut patterns = Vec::new();
        let mut cmps = Vec::new();
        let mut ords = Vec::new();
        let mut counts = Vec::new();
        for e in q.edges() {
            if !mask[e.id] {
                continue;
            }
            let (cu, cv) = (q.vertex(e.u).class, q.vertex(e.v).class);
            match e.class {
                EdgeClass::Rel => {
                    if cu == VertexClass::Type || cv == VertexClass::Type {
                        return None;
                    }
                    let (s, o) = e.subject_object();
                    let p = kb.relation_id(&e.instance)?;
                    if p == kb.rdf_type {
                        return None;
                    }
                    patterns.push((slots[s], p, slots[o]));
                }
                EdgeClass::Isa => {
                    let (x, t) = match (cu, cv) {
                        (VertexClass::Type, VertexClass::Var | VertexClass::Ent) => (e.v, e.u),
                        (VertexClass::Var | VertexClass::Ent, VertexClass::Type) => (e.u, e.v),
                        _ => return None,
                    };
                    patterns.push((slots[x], kb.rdf_type, slots[t]));
                }
                EdgeClass::Cmp | EdgeClass::Ord | EdgeClass::Cnt => {
                    let (x, num) = match (cu, cv) {
                        (VertexClass::Num, VertexClass::Num) => return None,
                        (VertexClass::Num, _) => (e.v, e.u),
                        (_, VertexClass::Num) => (e.u, e.v),
                        _ if e.class == EdgeClass::Cnt => continue,
                        _ => return None,
                    };
                    if q.vertex(x).class == VertexClass::Type {
                        return None;
                    }
                    let k = parse_number(&q.vertex(num).instance)?;
                    match e.class {
                        EdgeClass::Cmp => {
                            let op = match e.instance.as_str() {
                                CMP_LT => CmpOp::Lt,
                                CMP_GT => CmpOp::Gt,
                                CMP_EQ => CmpOp::Eq,
                                _ => return None,
                            };
                            cmps.push(Constraint::Cmp { x, op, k });
                        }
                        EdgeClass::Ord if full => ords.push(Constraint::Ord {
                            x,
                            max: e.instance == ORD_MAX,
                            n: k,
                        }),
                        EdgeClass::Cnt if full => counts.push(Constraint::CountIs { x, k }),
                        _ => {}
                    }
                }
            }
        }
        let mut constraints = cmps;
        constraints.extend(ords);
        constraints.extend(counts);
        Some(Plan {
            slots,
            nvars,
            patterns,
            constraints,
            count_answer,
        })
    }

    /// Solves patterns and filters; `None` when some component has no rows.
    fn solve(&self, kb: &KnowledgeBase) -> Option<Rows> {
        // Constant-only patterns are plain membership checks.
        for &(s, p, o) in &self.patterns {
            match (s, o) {
                (Slot::Missing, _) | (_, Slot::Missing) => return None,
                (Slot::Const(s), Slot::Const(o)) if !kb.contains(s, p, o) => return None,
                _ => {}
            }
        }
        // Group variables into components joined by patterns.
        let mut uf: Vec<usize> = (0..self.nvars).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        for &(s, _, o) in &self.patterns {
            if let (Slot::Var(a), Slot::Var(b)) = (s, o) {
                let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
                uf[ra] = rb;
            }
        }
        let mut comp_of = vec![usize::MAX; self.nvars];
        let mut comps: Vec<Component> = Vec::new();
        for v in 0..self.nvars {
            let r = find(&mut uf, v);
            if comp_of[r] == usize::MAX {
                comp_of[r] = comps.len();
                comps.push(Component::default());
            }
            let c = comp_of[r];
            comp_of[v] = c;
            comps[c].vars.push(v);
        }
        for (i, &(s, _, o)) in self.patterns.iter().enumerate() {
            let var = match (s, o) {
                (Slot::Var(a), _) => a,
                (_, Slot::Var(b)) => b,
                _ => continue,
            };
            comps[comp_of[var]].patterns.push(i);
        }

        let mut rows = Rows {
            comp_of,
            comps: Vec::with_capacity(comps.len()),
        };
        for c in comps {
            let solved = self.solve_component(kb, &c);
            if solved.rows.is_empty() {
                return None;
            }
            rows.comps.push(solved);
        }

        // Constraints run in order: Cmp, then Ord, then Cnt assertions.
        for con in &self.constraints {
            match self.slots[con.target()] {
                Slot::Var(v) => {
                    let c = rows.comp_of[v];
                    let comp = &mut rows.comps[c];
                    let col = comp.column(v);
                    apply_constraint(kb, con, &mut comp.rows, col);
                    if comp.rows.is_empty() {
                        return None;
                    }
                }
                Slot::Const(n) => {
                    let mut one = vec![vec![n]];
                    apply_constraint(kb, con, &mut one, 0);
                    if one.is_empty() {
                        return None;
                    }
                }
                Slot::Missing => return None,
            }
        }
        Some(rows)
    }

    fn solve_component(&self, kb: &KnowledgeBase, c: &Component) -> SolvedComponent {
        let mut out = SolvedComponent {
            vars: c.vars.clone(),
            rows: Vec::new(),
        };
        if c.patterns.is_empty() {
            // A free variable ranges over every node.
            debug_assert_eq!(c.vars.len(), 1);
            out.rows = (0..kb.node_count() as NodeId).map(|n| vec![n]).collect();
            return out;
        }
        let mut binding: Vec<Option<NodeId>> = vec![None; self.nvars];
        let mut done = vec![false; c.patterns.len()];
        self.join(kb, c, &mut binding, &mut done, &mut out);
        out.rows.sort_unstable();
        out.rows.dedup();
        out
    }

    fn join(
        &self,
        kb: &KnowledgeBase,
        c: &Component,
        binding: &mut Vec<Option<NodeId>>,
        done: &mut Vec<bool>,
        out: &mut SolvedComponent,
    ) {
        let resolve = |slot: Slot, binding: &[Option<NodeId>]| match slot {
            Slot::Const(n) => Some(n),
            Slot::Var(v) => binding[v],
            Slot::Missing => unreachable!(),
        };
        // Greedy: the pending pattern with the fewest candidates goes next.
        let mut best: Option<(usize, usize)> = None;
        for (i, &pi) in c.patterns.iter().enumerate() {
            if done[i] {
                continue;
            }
            let (s, p, o) = self.patterns[pi];
            let size = match (resolve(s, binding), resolve(o, binding)) {
                (Some(s), Some(o)) => usize::from(kb.contains(s, p, o)),
                (Some(s), None) => kb.objects(s, p).len(),
                (None, Some(o)) => kb.subjects(p, o).len(),
                (None, None) => kb.pairs(p).len(),
            };
            if best.is_none_or(|(_, b)| size < b) {
                best = Some((i, size));
            }
        }
        let Some((i, size)) = best else {
            out.rows
                .push(c.vars.iter().map(|&v| binding[v].expect("bound")).collect());
            return;
        };
        if size == 0 {
            return;
        }
        let (s, p, o) = self.patterns[c.patterns[i]];
        done[i] = true;
        let bind = |slot: Slot, value: NodeId, binding: &mut Vec<Option<NodeId>>| -> bool {
            if let Slot::Var(v) = slot {
                if binding[v].is_none() {
                    binding[v] = Some(value);
                    return true;
                }
            }
            false
        };
        match (resolve(s, binding), resolve(o, binding)) {
            (Some(_), Some(_)) => self.join(kb, c, binding, done, out),
            (Some(sv), None) => {
                for &ov in kb.objects(sv, p) {
                    let set = bind(o, ov, binding);
                    self.join(kb, c, binding, done, out);
                    if set {
                        unbind(o, binding);
                    }
                }
            }
            (None, Some(ov)) => {
                for &sv in kb.subjects(p, ov) {
                    let set = bind(s, sv, binding);
                    self.join(kb, c, binding, done, out);
                    if set {
                        unbind(s, binding);
                    }
                }
            }
            (None, None) => {
                for &(sv, ov) in kb.pairs(p) {
                    // s and o may be the same variable only in cyclic input,
                    // which query graphs exclude.
                    let set_s = bind(s, sv, binding);
                    let set_o = bind(o, ov, binding);
                    self.join(kb, c, binding, done, out);
                    if set_s {
                        unbind(s, binding);
                    }
                    if set_o {
                        unbind(o, binding);
                    }
                }
            }
        }
        done[i] = false;
    }

    fn answers(&self, kb: &KnowledgeBase, q: &QueryGraph) -> Option<AnswerSet> {
        let rows = self.solve(kb)?;
        if let Some(x) = self.count_answer {
            let n = rows.values_of(self, x)?.len();
            return Some(if n > 0 {
                AnswerSet::from([format_number(n as f64)])
            } else {
                AnswerSet::new()
            });
        }
        Some(
            rows.values_of(self, q.answer())?
                .into_iter()
                .map(|n| kb.node(n).render())
                .collect(),
        )
    }
}

fn unbind(slot: Slot, binding: &mut [Option<NodeId>]) {
    if let Slot::Var(v) = slot {
        binding[v] = None;
    }
}

fn apply_constraint(kb: &KnowledgeBase, con: &Constraint, rows: &mut Vec<Vec<NodeId>>, col: usize) {
    let value = |row: &Vec<NodeId>| kb.numeric[row[col] as usize];
    match *con {
        Constraint::Cmp { op, k, .. } => rows.retain(|r| {
            value(r).is_some_and(|x| match op {
                CmpOp::Lt => x < k,
                CmpOp::Gt => x > k,
                CmpOp::Eq => x == k,
            })
        }),
        Constraint::Ord { max, n, .. } => {
            rows.retain(|r| value(r).is_some());
            let mut distinct: Vec<f64> = rows.iter().filter_map(value).collect();
            distinct.sort_by(|a, b| a.total_cmp(b));
            distinct.dedup();
            if max {
                distinct.reverse();
            }
            let rank = if n >= 1.0 && n.fract() == 0.0 {
                Some(n as usize - 1)
            } else {
                None
            };
            match rank.and_then(|r| distinct.get(r)).copied() {
                Some(target) => rows.retain(|r| value(r) == Some(target)),
                None => rows.clear(),
            }
        }
        Constraint::CountIs { k, .. } => {
            let distinct: HashSet<NodeId> = rows.iter().map(|r| r[col]).collect();
            if distinct.len() as f64 != k {
                rows.clear();
            }
        }
    }
}

#[derive(Default)]
struct Component {
    vars: Vec<usize>,
    patterns: Vec<usize>,
}

struct SolvedComponent {
    vars: Vec<usize>,
    rows: Vec<Vec<NodeId>>,
}

impl SolvedComponent {
    fn column(&self, var: usize) -> usize {
        self.vars.iter().position(|&v| v == var).expect("variable in component")
    }
}

struct Rows {
    comp_of: Vec<usize>,
    comps: Vec<SolvedComponent>,
}

impl Rows {
    /// Distinct values a vertex takes across the solution.
    fn values_of(&self, plan: &Plan, vertex: usize) -> Option<HashSet<NodeId>> {
        match plan.slots[vertex] {
            Slot::Const(n) => Some(HashSet::from([n])),
            Slot::Missing => None,
            Slot::Var(v) => {
                let c = &self.comps[self.comp_of[v]];
                let col = c.column(v);
                Some(c.rows.iter().map(|r| r[col]).collect())
            }
        }
    }
}

/// Debug rendering of a grounded query as SPARQL text.
pub fn to_sparql(q: &QueryGraph) -> String {
    let term = |id: usize| {
        let v = q.vertex(id);
        match v.class {
            VertexClass::Var => v.instance.clone(),
            VertexClass::Num => v.instance.clone(),
            _ => format!("<{}>", v.instance),
        }
    };
    let mut patterns = Vec::new();
    let mut filters = Vec::new();
    let mut ords = Vec::new();
    let mut counts = Vec::new();
    let answer = q.answer();
    let mut count_answer = None;
    for e in q.edges() {
        match e.class {
            EdgeClass::Rel => {
                let (s, o) = e.subject_object();
                patterns.push(format!("{} <{}> {} .", term(s), e.instance, term(o)));
            }
            EdgeClass::Isa => {
                let (x, t) = if q.vertex(e.u).class == VertexClass::Type {
                    (e.v, e.u)
                } else {
                    (e.u, e.v)
                };
                patterns.push(format!("{} rdf:type {} .", term(x), term(t)));
            }
            EdgeClass::Cmp | EdgeClass::Ord | EdgeClass::Cnt => {
                let (x, k) = if q.vertex(e.u).class == VertexClass::Num {
                    (e.v, e.u)
                } else {
                    (e.u, e.v)
                };
                match e.class {
                    EdgeClass::Cmp => filters.push(format!("FILTER ({} {} {})", term(x), e.instance, term(k))),
                    EdgeClass::Ord => {
                        let n = parse_number(&q.vertex(k).instance).unwrap_or(1.0);
                        let order = if e.instance == ORD_MAX { "DESC" } else { "ASC" };
                        ords.push((term(x), order, (n as i64 - 1).max(0)));
                    }
                    _ if q.vertex(k).class == VertexClass::Num => {
                        counts.push(format!("HAVING (COUNT(DISTINCT {}) = {})", term(x), term(k)));
                    }
                    _ => count_answer = Some(term(e.other(answer))),
                }
            }
        }
    }
    let mut body = String::new();
    for p in &patterns {
        let _ = writeln!(body, "  {p}");
    }
    for f in &filters {
        let _ = writeln!(body, "  {f}");
    }
    for (x, order, offset) in &ords {
        let _ = writeln!(
            body,
            "  {{ SELECT DISTINCT {x} WHERE {{ {} }} ORDER BY {order}({x}) OFFSET {offset} LIMIT 1 }}",
            patterns.join(" ")
        );
    }
    let head = match &count_answer {
        Some(x) => format!("SELECT (COUNT(DISTINCT {x}) AS ?v0)"),
        None => "SELECT DISTINCT ?v0".to_string(),
    };
    let mut out = format!("{head} WHERE {{\n{body}}}");
    for c in &counts {
        out.push('\n');
        out.push_str(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Direction, Edge, Vertex};

    fn kb(rows: &[(&str, &str, &str)]) -> KnowledgeBase {
        let mut b = KbBuilder::new();
        for &(s, p, o) in rows {
            b.add(s, p, Term::parse_object(o).unwrap());
        }
        b.build()
    }

    fn v(id: usize, class: VertexClass, inst: &str) -> Vertex {
        Vertex {
            id,
            class,
            instance: inst.into(),
        }
    }

    fn e(id: usize, class: EdgeClass, inst: &str, u: usize, v: usize, dir: Direction) -> Edge {
        Edge {
            id,
            class,
            instance: inst.into(),
            u,
            v,
            dir,
        }
    }

    fn set(xs: &[&str]) -> AnswerSet {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn one_rel(dir: Direction) -> QueryGraph {
        QueryGraph::new(
            vec![v(0, VertexClass::Var, "?v0"), v(1, VertexClass::Ent, "A")],
            vec![e(0, EdgeClass::Rel, "p", 0, 1, dir)],
            0,
        )
        .unwrap()
    }

    #[test]
    fn direction_matters() {
        let k = kb(&[("A", "p", "B")]);
        assert_eq!(k.execute(&one_rel(Direction::Backward)), set(&["B"]));
        assert!(k.execute(&one_rel(Direction::Forward)).is_empty());
    }

    fn scores() -> KnowledgeBase {
        kb(&[("A", "score", "3"), ("B", "score", "7"), ("C", "score", "5")])
    }

    #[test]
    fn ordinal_picks_nth_distinct_value() {
        let q = QueryGraph::new(
            vec![
                v(0, VertexClass::Var, "?v0"),
                v(1, VertexClass::Var, "?v1"),
                v(2, VertexClass::Num, "1"),
            ],
            vec![
                e(0, EdgeClass::Rel, "score", 0, 1, Direction::Forward),
                e(1, EdgeClass::Ord, "max_at_n", 1, 2, Direction::Undirected),
            ],
            0,
        )
        .unwrap();
        assert_eq!(scores().execute(&q), set(&["B"]));
        let mut second = q.clone();
        second = QueryGraph::new(
            second.vertices().iter().cloned().map(|mut x| {
                if x.id == 2 {
                    x.instance = "2".into();
                }
                x
            }).collect(),
            second.edges().to_vec(),
            0,
        )
        .unwrap();
        assert_eq!(scores().execute(&second), set(&["C"]));
    }

    #[test]
    fn count_with_filter() {
        // ?v0 = count(?v1) where ?v1 -score-> ?v2, ?v2 > 4
        let q = QueryGraph::new(
            vec![
                v(0, VertexClass::Var, "?v0"),
                v(1, VertexClass::Var, "?v1"),
                v(2, VertexClass::Var, "?v2"),
                v(3, VertexClass::Num, "4"),
            ],
            vec![
                e(0, EdgeClass::Cnt, "count", 1, 0, Direction::Undirected),
                e(1, EdgeClass::Rel, "score", 1, 2, Direction::Forward),
                e(2, EdgeClass::Cmp, ">", 2, 3, Direction::Undirected),
            ],
            0,
        )
        .unwrap();
        assert_eq!(scores().execute(&q), set(&["2"]));
    }

    #[test]
    fn ord_out_of_range_and_non_numeric() {
        let q = |n: &str| {
            QueryGraph::new(
                vec![
                    v(0, VertexClass::Var, "?v0"),
                    v(1, VertexClass::Var, "?v1"),
                    v(2, VertexClass::Num, n),
                ],
                vec![
                    e(0, EdgeClass::Rel, "score", 0, 1, Direction::Forward),
                    e(1, EdgeClass::Ord, "min_at_n", 1, 2, Direction::Undirected),
                ],
                0,
            )
            .unwrap()
        };
        assert_eq!(scores().execute(&q("1")), set(&["A"]));
        assert!(scores().execute(&q("4")).is_empty());
        assert!(scores().execute(&q("0")).is_empty());
        let words = kb(&[("A", "score", "B")]);
        assert!(words.execute(&q("1")).is_empty());
    }

    #[test]
    fn lone_variable_matches_any_node() {
        let q = QueryGraph::new(vec![v(0, VertexClass::Var, "?v0")], vec![], 0).unwrap();
        assert_eq!(kb(&[("A", "p", "B")]).execute(&q), set(&["A", "B"]));
        assert!(KnowledgeBase::empty().execute(&q).is_empty());
    }

    #[test]
    fn relation_candidates_examples() {
        let k = kb(&[("A", "p", "B"), ("C", "q", "A")]);
        let from_a = one_rel(Direction::Backward);
        assert_eq!(
            k.relation_candidates(&from_a, 0),
            ["p".to_string()].into_iter().collect()
        );
        let to_a = one_rel(Direction::Forward);
        assert_eq!(
            k.relation_candidates(&to_a, 0),
            ["q".to_string()].into_iter().collect()
        );
        assert!(KnowledgeBase::empty().relation_candidates(&to_a, 0).is_empty());
    }

    #[test]
    fn load_tsv_dedups_and_reports_lines() {
        let k = KnowledgeBase::read_tsv("A\tp\tB\nA\tp\tB\n\nB\tyear\t2008\nB\tname\t\"Bee\"\n".as_bytes())
            .unwrap();
        assert_eq!(k.len(), 3);
        assert_eq!(k.lookup_node("2008").map(|n| k.node(n).clone()), Some(Term::Number(2008.0)));
        assert!(k.lookup_node("\"Bee\"").is_some());
        let err = KnowledgeBase::read_tsv("A\tp\tB\nA\tp\n".as_bytes()).unwrap_err();
        assert!(matches!(err, KbError::Parse { line: 2, .. }));
        let err = KnowledgeBase::read_tsv("A\tp\t1.2.3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, KbError::Parse { line: 1, .. }));
        assert!(KnowledgeBase::read_tsv("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn sparql_rendering() {
        let s = to_sparql(&one_rel(Direction::Backward));
        assert!(s.contains("<A> <p> ?v0 ."), "{s}");
        assert!(s.starts_with("SELECT DISTINCT ?v0"));
        let isa = QueryGraph::new(
            vec![v(0, VertexClass::Var, "?v0"), v(1, VertexClass::Type, "T")],
            vec![e(0, EdgeClass::Isa, "rdf:type", 0, 1, Direction::Undirected)],
            0,
        )
        .unwrap();
        assert!(to_sparql(&isa).contains("?v0 rdf:type <T> ."));
        let ord = QueryGraph::new(
            vec![
                v(0, VertexClass::Var, "?v0"),
                v(1, VertexClass::Var, "?v1"),
                v(2, VertexClass::Num, "2"),
            ],
            vec![
                e(0, EdgeClass::Rel, "score", 0, 1, Direction::Forward),
                e(1, EdgeClass::Ord, "max_at_n", 1, 2, Direction::Undirected),
            ],
            0,
        )
        .unwrap();
        let s = to_sparql(&ord);
        assert!(s.contains("ORDER BY DESC(?v1) OFFSET 1 LIMIT 1"), "{s}");
    }
}
