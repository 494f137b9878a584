//! Synthetic knowledge base and question generator.
//!
//! Questions come from fixed templates over four complexity levels (edge
//! counts of the gold query). Each template is instantiated from facts
//! sampled out of the generated KB, so every gold query executes nonempty.

use std::collections::{BTreeMap, BTreeSet};

use aqg_core::graph::{format_number, var_name, CMP_GT, CMP_LT, COUNT, ORD_MAX, ORD_MIN, RDF_TYPE};
use aqg_core::{
    Direction, Edge, EdgeClass, KbBuilder, KnowledgeBase, LinkingResults, QueryGraph, Vertex, VertexClass,
};
use aqg_neural::{Mention, MentionKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::PipelineError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub entities: usize,
    pub relations: usize,
    pub numeric_relations: usize,
    pub types: usize,
    pub triples: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Complexity levels (gold edge counts, 1 to 4) to draw templates from.
    pub levels: Vec<usize>,
    /// Wrong candidates added to each entity and type mention.
    pub distractors: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            entities: 80,
            relations: 8,
            numeric_relations: 3,
            types: 5,
            triples: 400,
            train: 600,
            dev: 100,
            test: 100,
            levels: vec![1, 2, 3],
            distractors: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub kb: KnowledgeBase,
    pub train: Vec<DatasetRecord>,
    pub dev: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

const TYPE_WORDS: &[&str] = &["person", "city", "company", "film", "book", "team", "river", "country", "album", "school"];
const RELATION_WORDS: &[&str] = &[
    "director", "author", "founder", "capital", "spouse", "location", "producer", "owner", "member", "creator",
    "employer", "parent", "sponsor", "editor", "coach", "mayor",
];
const NUMERIC_WORDS: &[&str] = &["population", "height", "revenue", "length", "area", "budget", "age", "weight"];

fn pick_name(words: &[&str], i: usize) -> String {
    let w = words[i % words.len()];
    match i / words.len() {
        0 => w.to_string(),
        k => format!("{w}{}", k + 1),
    }
}

fn entity_name(rng: &mut impl Rng) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let syllables = rng.gen_range(2..=3);
    let mut s = String::new();
    for i in 0..syllables {
        let c = C[rng.gen_range(0..C.len())] as char;
        s.push(if i == 0 { c.to_ascii_uppercase() } else { c });
        s.push(V[rng.gen_range(0..V.len())] as char);
    }
    if rng.gen_bool(0.5) {
        s.push(C[rng.gen_range(0..C.len())] as char);
    }
    s
}

struct World {
    entities: Vec<String>,
    entity_type: Vec<usize>,
    types: Vec<String>,
    relations: Vec<String>,
    numeric: Vec<String>,
    numeric_domain: Vec<usize>,
    /// (subject, relation, object) over entity indices.
    facts: Vec<(usize, usize, usize)>,
    out: BTreeMap<usize, Vec<(usize, usize)>>,
    /// numeric relation -> (entity, value)
    values: Vec<Vec<(usize, i64)>>,
}

impl World {
    fn build(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<World, PipelineError> {
        if spec.types == 0 || spec.entities < spec.types || spec.relations == 0 {
            return Err(PipelineError::Infeasible(
                "need at least one type, one relation and one entity per type".into(),
            ));
        }
        let types: Vec<String> = (0..spec.types).map(|i| pick_name(TYPE_WORDS, i)).collect();
        let mut seen = BTreeSet::new();
        let mut entities = Vec::new();
        while entities.len() < spec.entities {
            let n = entity_name(rng);
            if seen.insert(n.clone()) {
                entities.push(n);
            }
        }
        let entity_type: Vec<usize> = (0..spec.entities).map(|i| i % spec.types).collect();
        let mut by_type = vec![Vec::new(); spec.types];
        for (e, &t) in entity_type.iter().enumerate() {
            by_type[t].push(e);
        }
        let relations: Vec<String> = (0..spec.relations).map(|i| pick_name(RELATION_WORDS, i)).collect();
        let signature: Vec<(usize, usize)> = (0..spec.relations)
            .map(|_| (rng.gen_range(0..spec.types), rng.gen_range(0..spec.types)))
            .collect();
        let mut fact_set = BTreeSet::new();
        for _ in 0..spec.triples {
            let r = rng.gen_range(0..spec.relations);
            let (dt, rt) = signature[r];
            let s = *by_type[dt].choose(rng).unwrap();
            let o = *by_type[rt].choose(rng).unwrap();
            if s != o {
                fact_set.insert((s, r, o));
            }
        }
        let facts: Vec<_> = fact_set.into_iter().collect();
        let mut out: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for &(s, r, o) in &facts {
            out.entry(s).or_default().push((r, o));
        }
        let numeric: Vec<String> = (0..spec.numeric_relations).map(|i| pick_name(NUMERIC_WORDS, i)).collect();
        let numeric_domain: Vec<usize> = (0..spec.numeric_relations).map(|_| rng.gen_range(0..spec.types)).collect();
        let values = numeric_domain
            .iter()
            .map(|&t| {
                by_type[t]
                    .iter()
                    .filter_map(|&e| rng.gen_bool(0.7).then(|| (e, rng.gen_range(1..1000))))
                    .collect()
            })
            .collect();
        Ok(World {
            entities,
            entity_type,
            types,
            relations,
            numeric,
            numeric_domain,
            facts,
            out,
            values,
        })
    }

    fn kb(&self) -> KnowledgeBase {
        let mut b = KbBuilder::new();
        for (e, &t) in self.entity_type.iter().enumerate() {
            b.add_entity(&self.entities[e], RDF_TYPE, &self.types[t]);
        }
        for &(s, r, o) in &self.facts {
            b.add_entity(&self.entities[s], &self.relations[r], &self.entities[o]);
        }
        for (r, vals) in self.values.iter().enumerate() {
            for &(e, v) in vals {
                b.add_number(&self.entities[e], &self.numeric[r], v as f64);
            }
        }
        b.build()
    }
}

/// Question text with mention spans in character offsets.
#[derive(Default)]
struct Text {
    s: String,
    mentions: Vec<Mention>,
    entities: Vec<String>,
    numbers: Vec<f64>,
}

impl Text {
    fn push(&mut self, w: &str) -> usize {
        if !self.s.is_empty() {
            self.s.push(' ');
        }
        let start = self.s.chars().count();
        self.s.push_str(w);
        start
    }

    fn words(&mut self, ws: &str) -> &mut Self {
        for w in ws.split_whitespace() {
            self.push(w);
        }
        self
    }

    fn entity(&mut self, name: &str) -> &mut Self {
        let start = self.push(name);
        self.mentions.push(Mention {
            start,
            end: start + name.chars().count(),
            kind: MentionKind::Entity,
        });
        self.entities.push(name.to_string());
        self
    }

    fn number(&mut self, x: i64) -> &mut Self {
        let w = x.to_string();
        let start = self.push(&w);
        self.mentions.push(Mention {
            start,
            end: start + w.chars().count(),
            kind: MentionKind::Number,
        });
        self.numbers.push(x as f64);
        self
    }
}

/// Query under construction; vertex 0 is `?v0`.
struct QueryBuilder {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    vars: usize,
    types: Vec<String>,
}

impl QueryBuilder {
    fn new() -> Self {
        let mut q = QueryBuilder {
            vertices: Vec::new(),
            edges: Vec::new(),
            vars: 0,
            types: Vec::new(),
        };
        q.var();
        q
    }

    fn vertex(&mut self, class: VertexClass, instance: String) -> usize {
        let id = self.vertices.len();
        self.vertices.push(Vertex { id, class, instance });
        id
    }

    fn var(&mut self) -> usize {
        let name = var_name(self.vars);
        self.vars += 1;
        self.vertex(VertexClass::Var, name)
    }

    fn ent(&mut self, name: &str) -> usize {
        self.vertex(VertexClass::Ent, name.to_string())
    }

    fn num(&mut self, x: i64) -> usize {
        self.vertex(VertexClass::Num, format_number(x as f64))
    }

    fn edge(&mut self, class: EdgeClass, instance: &str, u: usize, v: usize, dir: Direction) {
        let id = self.edges.len();
        self.edges.push(Edge {
            id,
            class,
            instance: instance.to_string(),
            u,
            v,
            dir,
        });
    }

    fn rel(&mut self, s: usize, p: &str, o: usize) {
        self.edge(EdgeClass::Rel, p, s, o, Direction::Forward);
    }

    fn isa(&mut self, x: usize, t: &str) {
        let tv = self.vertex(VertexClass::Type, t.to_string());
        self.types.push(t.to_string());
        self.edge(EdgeClass::Isa, RDF_TYPE, x, tv, Direction::Undirected);
    }

    fn cmp(&mut self, x: usize, op: &str, k: i64) {
        let n = self.num(k);
        self.edge(EdgeClass::Cmp, op, x, n, Direction::Undirected);
    }

    fn ord(&mut self, x: usize, which: &str, k: i64) {
        let n = self.num(k);
        self.edge(EdgeClass::Ord, which, x, n, Direction::Undirected);
    }

    fn count(&mut self, counted: usize) {
        self.edge(EdgeClass::Cnt, COUNT, 0, counted, Direction::Undirected);
    }

    fn build(self) -> QueryGraph {
        QueryGraph::new(self.vertices, self.edges, 0).expect("templates build valid query graphs")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Template {
    Object,
    Subject,
    TypeList,
    Chain,
    TypedSubject,
    TwoEntities,
    Count,
    Compare,
    Ordinal,
    TypedChain,
    TypedCompare,
    TypedCount,
    TypedOrdinal,
    Chain3,
    TypedTwoEntities,
    TypedEntityCompare,
    TypedChain3,
}

impl Template {
    const ALL: [Template; 17] = [
        Template::Object,
        Template::Subject,
        Template::TypeList,
        Template::Chain,
        Template::TypedSubject,
        Template::TwoEntities,
        Template::Count,
        Template::Compare,
        Template::Ordinal,
        Template::TypedChain,
        Template::TypedCompare,
        Template::TypedCount,
        Template::TypedOrdinal,
        Template::Chain3,
        Template::TypedTwoEntities,
        Template::TypedEntityCompare,
        Template::TypedChain3,
    ];

    fn level(self) -> usize {
        use Template::*;
        match self {
            Object | Subject | TypeList => 1,
            Chain | TypedSubject | TwoEntities | Count | Compare | Ordinal => 2,
            TypedChain | TypedCompare | TypedCount | TypedOrdinal | Chain3 | TypedTwoEntities => 3,
            TypedEntityCompare | TypedChain3 => 4,
        }
    }

    fn numeric(self) -> bool {
        use Template::*;
        matches!(self, Compare | Ordinal | TypedCompare | TypedOrdinal | TypedEntityCompare)
    }
}

struct Draft {
    text: Text,
    query: QueryGraph,
    types: Vec<String>,
}

impl World {
    fn fact(&self, rng: &mut impl Rng) -> Option<(usize, usize, usize)> {
        self.facts.choose(rng).copied()
    }

    /// A two-hop path `s -r1-> m -r2-> o`.
    fn path(&self, rng: &mut impl Rng, hops: usize) -> Option<Vec<(usize, usize, usize)>> {
        let mut path = vec![self.fact(rng)?];
        while path.len() < hops {
            let (_, _, m) = *path.last().unwrap();
            let next = self.out.get(&m)?.choose(rng)?;
            path.push((m, next.0, next.1));
        }
        Some(path)
    }

    fn numeric_fact(&self, rng: &mut impl Rng) -> Option<(usize, usize, i64)> {
        let r = rng.gen_range(0..self.numeric.len());
        let &(e, v) = self.values[r].choose(rng)?;
        Some((r, e, v))
    }

    fn draft(&self, t: Template, rng: &mut impl Rng) -> Option<Draft> {
        let mut x = Text::default();
        let mut q = QueryBuilder::new();
        let ent = |i: usize| self.entities[i].as_str();
        let rel = |i: usize| self.relations[i].as_str();
        match t {
            Template::Object => {
                let (s, r, _) = self.fact(rng)?;
                x.words("what is the").words(rel(r)).words("of").entity(ent(s)).words("?");
                let sv = q.ent(ent(s));
                q.rel(sv, rel(r), 0);
            }
            Template::Subject => {
                let (_, r, o) = self.fact(rng)?;
                x.words("what has").words(rel(r)).entity(ent(o)).words("?");
                let ov = q.ent(ent(o));
                q.rel(0, rel(r), ov);
            }
            Template::TypeList => {
                let t = self.types.choose(rng)?;
                x.words("list every").words(t);
                q.isa(0, t);
            }
            Template::Chain | Template::TypedChain | Template::Chain3 | Template::TypedChain3 => {
                let hops = if matches!(t, Template::Chain3 | Template::TypedChain3) { 3 } else { 2 };
                let path = self.path(rng, hops)?;
                let typed = matches!(t, Template::TypedChain | Template::TypedChain3);
                let last = path.last().unwrap().2;
                let tname = &self.types[self.entity_type[last]];
                if typed {
                    x.words("which").words(tname).words("is the");
                } else {
                    x.words("what is the");
                }
                for (i, &(_, r, _)) in path.iter().enumerate().rev() {
                    x.words(rel(r)).words("of");
                    if i > 0 {
                        x.words("the");
                    }
                }
                x.entity(ent(path[0].0)).words("?");
                let mut prev = q.ent(ent(path[0].0));
                for (i, &(_, r, _)) in path.iter().enumerate() {
                    let next = if i + 1 == path.len() { 0 } else { q.var() };
                    q.rel(prev, rel(r), next);
                    prev = next;
                }
                if typed {
                    q.isa(0, tname);
                }
            }
            Template::TypedSubject => {
                let (s, r, o) = self.fact(rng)?;
                let tname = &self.types[self.entity_type[s]];
                x.words("which").words(tname).words("has").words(rel(r)).entity(ent(o)).words("?");
                let ov = q.ent(ent(o));
                q.rel(0, rel(r), ov);
                q.isa(0, tname);
            }
            Template::TwoEntities | Template::TypedTwoEntities => {
                let (s, r1, o1) = self.fact(rng)?;
                let others: Vec<(usize, usize)> = self.out.get(&s)?.iter().copied().filter(|&(_, o)| o != o1).collect();
                let &(r2, o2) = others.choose(rng)?;
                let tname = &self.types[self.entity_type[s]];
                if t == Template::TypedTwoEntities {
                    x.words("which").words(tname);
                } else {
                    x.words("what");
                }
                x.words("has").words(rel(r1)).entity(ent(o1)).words("and").words(rel(r2)).entity(ent(o2)).words("?");
                let a = q.ent(ent(o1));
                q.rel(0, rel(r1), a);
                let b = q.ent(ent(o2));
                q.rel(0, rel(r2), b);
                if t == Template::TypedTwoEntities {
                    q.isa(0, tname);
                }
            }
            Template::Count => {
                let (s, r, _) = self.fact(rng)?;
                x.words("how many").words(rel(r)).words("does").entity(ent(s)).words("have ?");
                let c = q.var();
                q.count(c);
                let sv = q.ent(ent(s));
                q.rel(sv, rel(r), c);
            }
            Template::TypedCount => {
                let (s, r, o) = self.fact(rng)?;
                let tname = &self.types[self.entity_type[s]];
                x.words("how many").words(tname).words("have").words(rel(r)).entity(ent(o)).words("?");
                let c = q.var();
                q.count(c);
                let ov = q.ent(ent(o));
                q.rel(c, rel(r), ov);
                q.isa(c, tname);
            }
            Template::Compare | Template::TypedCompare | Template::TypedEntityCompare => {
                let greater = rng.gen_bool(0.5);
                let (nr, e, v) = if t == Template::TypedEntityCompare {
                    // An entity fact and a numeric fact about the same subject.
                    let (nr, e, v) = self.numeric_fact(rng)?;
                    if !self.out.contains_key(&e) {
                        return None;
                    }
                    (nr, e, v)
                } else {
                    self.numeric_fact(rng)?
                };
                let k = if greater { v - rng.gen_range(1..=50) } else { v + rng.gen_range(1..=50) };
                let tname = &self.types[self.numeric_domain[nr]];
                if t == Template::Compare {
                    x.words("what has");
                } else {
                    x.words("which").words(tname).words("has");
                }
                if t == Template::TypedEntityCompare {
                    let &(r, o) = self.out[&e].choose(rng)?;
                    x.words(rel(r)).entity(ent(o)).words("and");
                    let ov = q.ent(ent(o));
                    q.rel(0, rel(r), ov);
                }
                x.words(&self.numeric[nr]).words(if greater { "greater than" } else { "less than" }).number(k).words("?");
                let y = q.var();
                q.rel(0, &self.numeric[nr], y);
                q.cmp(y, if greater { CMP_GT } else { CMP_LT }, k);
                if t != Template::Compare {
                    q.isa(0, tname);
                }
            }
            Template::Ordinal | Template::TypedOrdinal => {
                let nr = rng.gen_range(0..self.numeric.len());
                if self.values[nr].len() < 3 {
                    return None;
                }
                let largest = rng.gen_bool(0.5);
                let n = rng.gen_range(1..=3);
                let tname = &self.types[self.numeric_domain[nr]];
                if t == Template::Ordinal {
                    x.words("what has the");
                } else {
                    x.words("which").words(tname).words("has the");
                }
                x.number(n).words(if largest { "largest" } else { "smallest" }).words(&self.numeric[nr]).words("?");
                let y = q.var();
                q.rel(0, &self.numeric[nr], y);
                q.ord(y, if largest { ORD_MAX } else { ORD_MIN }, n);
                if t == Template::TypedOrdinal {
                    q.isa(0, tname);
                }
            }
        }
        let types = q.types.clone();
        Some(Draft {
            text: x,
            query: q.build(),
            types,
        })
    }

    fn linking(&self, d: &Draft, distractors: usize, rng: &mut impl Rng) -> LinkingResults {
        let entities = d
            .text
            .entities
            .iter()
            .map(|gold| {
                let mut c = vec![gold.clone()];
                while c.len() < (distractors + 1).min(self.entities.len()) {
                    let e = self.entities.choose(rng).unwrap();
                    if !c.contains(e) {
                        c.push(e.clone());
                    }
                }
                c.shuffle(rng);
                c
            })
            .collect();
        let mut types = Vec::new();
        if let Some(gold) = d.types.first() {
            types.push(gold.clone());
            while types.len() < (distractors + 1).min(self.types.len()) {
                let t = self.types.choose(rng).unwrap();
                if !types.contains(t) {
                    types.push(t.clone());
                }
            }
            types.shuffle(rng);
        }
        LinkingResults {
            entities,
            types,
            numbers: d.text.numbers.clone(),
        }
    }
}

/// Builds a KB and train/dev/test splits; deterministic in `seed`.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<SynthData, PipelineError> {
    if spec.levels.is_empty() || spec.levels.iter().any(|l| !(1..=4).contains(l)) {
        return Err(PipelineError::Infeasible("levels must be a nonempty subset of 1..=4".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = World::build(spec, &mut rng)?;
    let kb = world.kb();
    let mut levels: Vec<usize> = spec.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let by_level: Vec<Vec<Template>> = levels
        .iter()
        .map(|&l| {
            Template::ALL
                .iter()
                .copied()
                .filter(|t| t.level() == l && (spec.numeric_relations > 0 || !t.numeric()))
                .collect()
        })
        .collect();
    if let Some(i) = by_level.iter().position(Vec::is_empty) {
        return Err(PipelineError::Infeasible(format!(
            "no template for level {} without numeric relations",
            levels[i]
        )));
    }
    let mut make = |split: &str, n: usize| -> Result<Vec<DatasetRecord>, PipelineError> {
        let mut out = Vec::with_capacity(n);
        let mut failures = 0;
        while out.len() < n {
            let templates = by_level.choose(&mut rng).unwrap();
            let t = *templates.choose(&mut rng).unwrap();
            let draft = world.draft(t, &mut rng).filter(|d| !kb.execute(&d.query).is_empty());
            let Some(draft) = draft else {
                failures += 1;
                if failures > 1000 + 100 * n {
                    return Err(PipelineError::Infeasible(format!(
                        "could not instantiate enough {split} questions from this KB"
                    )));
                }
                continue;
            };
            let linking = world.linking(&draft, spec.distractors, &mut rng);
            let gold_answers = kb.execute(&draft.query);
            out.push(DatasetRecord {
                id: format!("{split}-{:04}", out.len()),
                question: draft.text.s,
                mentions: draft.text.mentions,
                linking,
                gold_query: draft.query,
                gold_answers,
            });
        }
        Ok(out)
    };
    let train = make("train", spec.train)?;
    let dev = make("dev", spec.dev)?;
    let test = make("test", spec.test)?;
    Ok(SynthData { kb, train, dev, test })
}
