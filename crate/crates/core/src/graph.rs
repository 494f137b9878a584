//! Query graphs and abstract query graphs (AQGs).
//!
//! A [`QueryGraph`] is a tree whose vertices are entities, types, numbers or
//! variables and whose edges are relations or built-in constraints. Dropping
//! every instance and every relation direction yields its [`Aqg`], the
//! structure of the query. Both share the same JSON layout:
//!
//! ```json
//! {"vertices":[{"id":0,"class":"Var","instance":"?v0"}],
//!  "edges":[{"id":0,"class":"Rel","instance":"party","u":0,"v":1,"dir":"vu"}],
//!  "answer":0}
//! ```

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Vertex labels of a query graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VertexClass {
    Ent,
    Type,
    Num,
    Var,
}

impl VertexClass {
    pub const ALL: [VertexClass; 4] = [
        VertexClass::Ent,
        VertexClass::Type,
        VertexClass::Num,
        VertexClass::Var,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VertexClass::Ent => "Ent",
            VertexClass::Type => "Type",
            VertexClass::Num => "Num",
            VertexClass::Var => "Var",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn code_byte(self) -> u8 {
        match self {
            VertexClass::Ent => b'E',
            VertexClass::Type => b'T',
            VertexClass::Num => b'N',
            VertexClass::Var => b'V',
        }
    }
}

impl fmt::Display for VertexClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Edge labels of a query graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeClass {
    Rel,
    Ord,
    Cmp,
    Cnt,
    Isa,
}

impl EdgeClass {
    pub const ALL: [EdgeClass; 5] = [
        EdgeClass::Rel,
        EdgeClass::Ord,
        EdgeClass::Cmp,
        EdgeClass::Cnt,
        EdgeClass::Isa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeClass::Rel => "Rel",
            EdgeClass::Ord => "Ord",
            EdgeClass::Cmp => "Cmp",
            EdgeClass::Cnt => "Cnt",
            EdgeClass::Isa => "Isa",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Instances a built-in edge class may take. `None` for `Rel`, whose
    /// instances come from the knowledge base.
    pub fn builtin_instances(self) -> Option<&'static [&'static str]> {
        match self {
            EdgeClass::Rel => None,
            EdgeClass::Ord => Some(&[ORD_MIN, ORD_MAX]),
            EdgeClass::Cmp => Some(&[CMP_LT, CMP_GT, CMP_EQ]),
            EdgeClass::Cnt => Some(&[COUNT]),
            EdgeClass::Isa => Some(&[RDF_TYPE]),
        }
    }

    fn code_byte(self) -> u8 {
        match self {
            EdgeClass::Rel => b'r',
            EdgeClass::Ord => b'o',
            EdgeClass::Cmp => b'c',
            EdgeClass::Cnt => b'n',
            EdgeClass::Isa => b'i',
        }
    }
}

impl fmt::Display for EdgeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const ORD_MIN: &str = "min_at_n";
pub const ORD_MAX: &str = "max_at_n";
pub const CMP_LT: &str = "<";
pub const CMP_GT: &str = ">";
pub const CMP_EQ: &str = "=";
pub const COUNT: &str = "count";
pub const RDF_TYPE: &str = "rdf:type";

/// Orientation of a stored edge relative to its `(u, v)` endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "uv")]
    Forward,
    #[serde(rename = "vu")]
    Backward,
    #[serde(rename = "none")]
    Undirected,
}

/// Ways a vertex/edge list can fail to be a tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum TreeViolation {
    #[error("graph has no vertices")]
    Empty,
    #[error("edge endpoint refers to a missing vertex")]
    DanglingEndpoint,
    #[error("graph contains a cycle")]
    Cycle,
    #[error("graph is disconnected")]
    Disconnected,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GraphError {
    #[error("not a tree: {0}")]
    Tree(#[from] TreeViolation),
    #[error("vertex ids must be dense 0..n, found {0}")]
    SparseVertexIds(usize),
    #[error("edge ids must be dense 0..m, found {0}")]
    SparseEdgeIds(usize),
    #[error("answer vertex {0} does not exist")]
    MissingAnswer(usize),
    #[error("answer vertex must be the variable ?v0")]
    AnswerNotV0,
    #[error("vertex {0} has no instance")]
    UninstantiatedVertex(usize),
    #[error("vertex {id}: instance {instance:?} does not fit class {class}")]
    BadVertexInstance {
        id: usize,
        class: VertexClass,
        instance: String,
    },
    #[error("edge {0} has no instance")]
    UninstantiatedEdge(usize),
    #[error("edge {id}: instance {instance:?} does not fit class {class}")]
    BadEdgeInstance {
        id: usize,
        class: EdgeClass,
        instance: String,
    },
    #[error("edge {0}: Rel edges must be directed and built-in edges undirected")]
    BadDirection(usize),
    #[error("duplicate variable name {0}")]
    DuplicateVariable(String),
}

/// Checks that `n` vertices joined by `edges` form a tree.
pub fn validate_tree(n: usize, edges: &[(usize, usize)]) -> Result<(), TreeViolation> {
    if n == 0 {
        return Err(TreeViolation::Empty);
    }
    if edges.iter().any(|&(u, v)| u >= n || v >= n) {
        return Err(TreeViolation::DanglingEndpoint);
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for &(u, v) in edges {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a == b {
            return Err(TreeViolation::Cycle);
        }
        parent[a] = b;
        components -= 1;
    }
    if components > 1 {
        return Err(TreeViolation::Disconnected);
    }
    Ok(())
}

/// Variable name for the `k`-th variable, `?vK`.
pub fn var_name(k: usize) -> String {
    format!("?v{k}")
}

fn is_var_name(s: &str) -> bool {
    s.strip_prefix("?v")
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

/// Parses a numeric literal as stored on `Num` vertices.
pub fn parse_number(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Formats a number the way `Num` vertex instances and answers carry it:
/// integral values without a fractional part.
pub fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Vertex {
    pub id: usize,
    pub class: VertexClass,
    pub instance: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub id: usize,
    pub class: EdgeClass,
    pub instance: String,
    pub u: usize,
    pub v: usize,
    pub dir: Direction,
}

impl Edge {
    /// Subject and object of a directed edge.
    pub fn subject_object(&self) -> (usize, usize) {
        match self.dir {
            Direction::Backward => (self.v, self.u),
            _ => (self.u, self.v),
        }
    }

    pub fn other(&self, x: usize) -> usize {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

/// A fully instantiated, tree-shaped formal query. The answer vertex is the
/// variable `?v0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    answer: usize,
}

impl QueryGraph {
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>, answer: usize) -> Result<Self, GraphError> {
        for (i, v) in vertices.iter().enumerate() {
            if v.id != i {
                return Err(GraphError::SparseVertexIds(v.id));
            }
        }
        for (i, e) in edges.iter().enumerate() {
            if e.id != i {
                return Err(GraphError::SparseEdgeIds(e.id));
            }
        }
        let pairs: Vec<_> = edges.iter().map(|e| (e.u, e.v)).collect();
        validate_tree(vertices.len(), &pairs)?;
        let a = vertices.get(answer).ok_or(GraphError::MissingAnswer(answer))?;
        if a.class != VertexClass::Var || a.instance != "?v0" {
            return Err(GraphError::AnswerNotV0);
        }
        let mut seen_vars = std::collections::BTreeSet::new();
        for v in &vertices {
            let ok = match v.class {
                VertexClass::Var => is_var_name(&v.instance),
                VertexClass::Num => parse_number(&v.instance).is_some(),
                VertexClass::Ent | VertexClass::Type => !v.instance.is_empty(),
            };
            if !ok {
                return Err(GraphError::BadVertexInstance {
                    id: v.id,
                    class: v.class,
                    instance: v.instance.clone(),
                });
            }
            if v.class == VertexClass::Var && !seen_vars.insert(v.instance.as_str()) {
                return Err(GraphError::DuplicateVariable(v.instance.clone()));
            }
        }
        for e in &edges {
            let ok = match e.class.builtin_instances() {
                None => !e.instance.is_empty(),
                Some(allowed) => allowed.contains(&e.instance.as_str()),
            };
            if !ok {
                return Err(GraphError::BadEdgeInstance {
                    id: e.id,
                    class: e.class,
                    instance: e.instance.clone(),
                });
            }
            let directed = e.dir != Direction::Undirected;
            if directed != (e.class == EdgeClass::Rel) {
                return Err(GraphError::BadDirection(e.id));
            }
        }
        Ok(QueryGraph {
            vertices,
            edges,
            answer,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn answer(&self) -> usize {
        self.answer
    }

    pub fn vertex(&self, id: usize) -> &Vertex {
        &self.vertices[id]
    }

    /// Abstracts the query into its structure: same topology, class labels
    /// only, no directions.
    pub fn to_aqg(&self) -> Aqg {
        Aqg {
            vertices: self.vertices.iter().map(|v| v.class).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| AqgEdge {
                    class: e.class,
                    u: e.u,
                    v: e.v,
                })
                .collect(),
            answer: self.answer,
        }
    }

    /// Replaces the relation of a `Rel` edge, keeping everything else.
    pub fn with_relation(&self, edge: usize, relation: &str) -> QueryGraph {
        let mut q = self.clone();
        q.edges[edge].instance = relation.to_string();
        q
    }

    /// Serialization that is identical for isomorphic queries (variable names
    /// are ignored, the answer is the root). Used to deduplicate and order
    /// candidates.
    pub fn canonical_key(&self) -> String {
        let adj = adjacency(self.vertices.len(), self.edges.iter().map(|e| (e.u, e.v)));
        fn enc(q: &QueryGraph, adj: &[Vec<(usize, usize)>], x: usize, parent: Option<usize>) -> String {
            let v = &q.vertices[x];
            let mut s = String::from(v.class.as_str());
            if v.class != VertexClass::Var {
                s.push(':');
                s.push_str(&v.instance);
            }
            let mut children: Vec<String> = adj[x]
                .iter()
                .filter(|&&(y, _)| Some(y) != parent)
                .map(|&(y, eid)| {
                    let e = &q.edges[eid];
                    let arrow = match e.dir {
                        Direction::Undirected => "-",
                        _ if e.subject_object().0 == x => ">",
                        _ => "<",
                    };
                    format!("{}:{}{}{}", e.class, e.instance, arrow, enc(q, adj, y, Some(x)))
                })
                .collect();
            children.sort();
            s.push('(');
            s.push_str(&children.join(","));
            s.push(')');
            s
        }
        enc(self, &adj, self.answer, None)
    }
}

pub fn abstract_query(q: &QueryGraph) -> Aqg {
    q.to_aqg()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AqgEdge {
    pub class: EdgeClass,
    pub u: usize,
    pub v: usize,
}

impl AqgEdge {
    pub fn other(&self, x: usize) -> usize {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

/// Abstract query graph: an undirected tree labeled with classes only.
///
/// Vertex and edge ids are their positions, assigned at insertion. The empty
/// graph is representable (it is the starting point of generation) but is
/// not a valid AQG.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Aqg {
    pub vertices: Vec<VertexClass>,
    pub edges: Vec<AqgEdge>,
    pub answer: usize,
}

/// Identifies an AQG up to label- and answer-preserving isomorphism.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalCode(pub Vec<u8>);

impl fmt::Display for CanonicalCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

impl Aqg {
    pub fn new() -> Self {
        Self::default()
    }

    /// Single-vertex AQG.
    pub fn single(class: VertexClass) -> Self {
        Aqg {
            vertices: vec![class],
            edges: Vec::new(),
            answer: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn add_vertex(&mut self, class: VertexClass) -> usize {
        self.vertices.push(class);
        self.vertices.len() - 1
    }

    pub fn add_edge(&mut self, class: EdgeClass, u: usize, v: usize) -> usize {
        self.edges.push(AqgEdge { class, u, v });
        self.edges.len() - 1
    }

    pub fn validate(&self) -> Result<(), TreeViolation> {
        let pairs: Vec<_> = self.edges.iter().map(|e| (e.u, e.v)).collect();
        validate_tree(self.vertices.len(), &pairs)?;
        if self.answer >= self.vertices.len() {
            return Err(TreeViolation::DanglingEndpoint);
        }
        Ok(())
    }

    /// Neighbors of each vertex as `(neighbor, edge id)`, in edge-id order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        adjacency(self.vertices.len(), self.edges.iter().map(|e| (e.u, e.v)))
    }

    pub fn count_vertices(&self, class: VertexClass) -> usize {
        self.vertices.iter().filter(|&&c| c == class).count()
    }

    pub fn count_edges(&self, class: EdgeClass) -> usize {
        self.edges.iter().filter(|e| e.class == class).count()
    }

    /// Answer-rooted AHU encoding: each vertex is written as its label
    /// followed by its children's `(edge label, code)` pairs in sorted order.
    pub fn canonical_code(&self) -> CanonicalCode {
        if self.vertices.is_empty() {
            return CanonicalCode(Vec::new());
        }
        let adj = self.adjacency();
        // Iterative post-order so deep chains cannot overflow the stack.
        let n = self.vertices.len();
        let mut parent = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![self.answer];
        let mut seen = vec![false; n];
        seen[self.answer] = true;
        while let Some(x) = stack.pop() {
            order.push(x);
            for &(y, _) in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    parent[y] = x;
                    stack.push(y);
                }
            }
        }
        let mut codes: Vec<Vec<u8>> = vec![Vec::new(); n];
        for &x in order.iter().rev() {
            let mut children: Vec<Vec<u8>> = adj[x]
                .iter()
                .filter(|&&(y, _)| parent[y] == x && y != self.answer)
                .map(|&(y, eid)| {
                    let mut c = vec![self.edges[eid].class.code_byte()];
                    c.extend_from_slice(&codes[y]);
                    c
                })
                .collect();
            children.sort();
            let mut code = vec![self.vertices[x].code_byte(), b'('];
            for c in children {
                code.extend(c);
            }
            code.push(b')');
            codes[x] = code;
        }
        CanonicalCode(std::mem::take(&mut codes[self.answer]))
    }

    pub fn is_isomorphic(&self, other: &Aqg) -> bool {
        self.vertices.len() == other.vertices.len()
            && self.edges.len() == other.edges.len()
            && self.canonical_code() == other.canonical_code()
    }

    /// Returns the AQG with vertex `i` renamed to `perm[i]`; edge order kept.
    pub fn relabel(&self, perm: &[usize]) -> Aqg {
        let mut vertices = vec![VertexClass::Var; self.vertices.len()];
        for (i, &c) in self.vertices.iter().enumerate() {
            vertices[perm[i]] = c;
        }
        Aqg {
            vertices,
            edges: self
                .edges
                .iter()
                .map(|e| AqgEdge {
                    class: e.class,
                    u: perm[e.u],
                    v: perm[e.v],
                })
                .collect(),
            answer: perm[self.answer],
        }
    }
}

pub fn canonical_code(g: &Aqg) -> CanonicalCode {
    g.canonical_code()
}

pub fn is_isomorphic(a: &Aqg, b: &Aqg) -> bool {
    a.is_isomorphic(b)
}

fn adjacency(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n];
    for (i, (u, v)) in edges.enumerate() {
        adj[u].push((v, i));
        if u != v {
            adj[v].push((u, i));
        }
    }
    adj
}

#[derive(Serialize, Deserialize)]
struct VertexJson {
    id: usize,
    class: VertexClass,
    instance: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    id: usize,
    class: EdgeClass,
    instance: Option<String>,
    u: usize,
    v: usize,
    dir: Direction,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    vertices: Vec<VertexJson>,
    edges: Vec<EdgeJson>,
    answer: usize,
}

impl Serialize for QueryGraph {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GraphJson {
            vertices: self
                .vertices
                .iter()
                .map(|v| VertexJson {
                    id: v.id,
                    class: v.class,
                    instance: Some(v.instance.clone()),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeJson {
                    id: e.id,
                    class: e.class,
                    instance: Some(e.instance.clone()),
                    u: e.u,
                    v: e.v,
                    dir: e.dir,
                })
                .collect(),
            answer: self.answer,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QueryGraph {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut g = GraphJson::deserialize(d)?;
        g.vertices.sort_by_key(|v| v.id);
        g.edges.sort_by_key(|e| e.id);
        let vertices = g
            .vertices
            .into_iter()
            .map(|v| {
                let instance = v
                    .instance
                    .ok_or_else(|| D::Error::custom(GraphError::UninstantiatedVertex(v.id)))?;
                Ok(Vertex {
                    id: v.id,
                    class: v.class,
                    instance,
                })
            })
            .collect::<Result<Vec<_>, D::Error>>()?;
        let edges = g
            .edges
            .into_iter()
            .map(|e| {
                let instance = e
                    .instance
                    .ok_or_else(|| D::Error::custom(GraphError::UninstantiatedEdge(e.id)))?;
                Ok(Edge {
                    id: e.id,
                    class: e.class,
                    instance,
                    u: e.u,
                    v: e.v,
                    dir: e.dir,
                })
            })
            .collect::<Result<Vec<_>, D::Error>>()?;
        QueryGraph::new(vertices, edges, g.answer).map_err(D::Error::custom)
    }
}

impl Serialize for Aqg {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GraphJson {
            vertices: self
                .vertices
                .iter()
                .enumerate()
                .map(|(id, &class)| VertexJson {
                    id,
                    class,
                    instance: None,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .enumerate()
                .map(|(id, e)| EdgeJson {
                    id,
                    class: e.class,
                    instance: None,
                    u: e.u,
                    v: e.v,
                    dir: Direction::Undirected,
                })
                .collect(),
            answer: self.answer,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Aqg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut g = GraphJson::deserialize(d)?;
        g.vertices.sort_by_key(|v| v.id);
        g.edges.sort_by_key(|e| e.id);
        for (i, v) in g.vertices.iter().enumerate() {
            if v.id != i {
                return Err(D::Error::custom(GraphError::SparseVertexIds(v.id)));
            }
        }
        for (i, e) in g.edges.iter().enumerate() {
            if e.id != i {
                return Err(D::Error::custom(GraphError::SparseEdgeIds(e.id)));
            }
        }
        let aqg = Aqg {
            vertices: g.vertices.iter().map(|v| v.class).collect(),
            edges: g
                .edges
                .iter()
                .map(|e| AqgEdge {
                    class: e.class,
                    u: e.u,
                    v: e.v,
                })
                .collect(),
            answer: g.answer,
        };
        aqg.validate()
            .map_err(|v| D::Error::custom(GraphError::Tree(v)))?;
        Ok(aqg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(id: usize, k: usize) -> Vertex {
        Vertex {
            id,
            class: VertexClass::Var,
            instance: var_name(k),
        }
    }

    #[test]
    fn single_vertex_is_a_tree() {
        assert_eq!(validate_tree(1, &[]), Ok(()));
    }

    #[test]
    fn triangle_is_a_cycle() {
        assert_eq!(
            validate_tree(3, &[(0, 1), (1, 2), (2, 0)]),
            Err(TreeViolation::Cycle)
        );
    }

    #[test]
    fn two_components_are_disconnected() {
        assert_eq!(
            validate_tree(4, &[(0, 1), (2, 3)]),
            Err(TreeViolation::Disconnected)
        );
    }

    #[test]
    fn dangling_and_empty() {
        assert_eq!(validate_tree(2, &[(0, 5)]), Err(TreeViolation::DanglingEndpoint));
        assert_eq!(validate_tree(0, &[]), Err(TreeViolation::Empty));
        assert_eq!(validate_tree(1, &[(0, 0)]), Err(TreeViolation::Cycle));
    }

    #[test]
    fn abstract_lone_variable() {
        let q = QueryGraph::new(vec![var(0, 0)], vec![], 0).unwrap();
        assert_eq!(q.to_aqg(), Aqg::single(VertexClass::Var));
    }

    #[test]
    fn abstract_relation_edge() {
        let q = QueryGraph::new(
            vec![
                var(0, 0),
                Vertex {
                    id: 1,
                    class: VertexClass::Ent,
                    instance: "A".into(),
                },
            ],
            vec![Edge {
                id: 0,
                class: EdgeClass::Rel,
                instance: "party".into(),
                u: 0,
                v: 1,
                dir: Direction::Forward,
            }],
            0,
        )
        .unwrap();
        let g = q.to_aqg();
        assert_eq!(g.vertices, vec![VertexClass::Var, VertexClass::Ent]);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].class, EdgeClass::Rel);
        assert_eq!(g.answer, 0);
    }

    #[test]
    fn abstract_chain_with_type() {
        let q = QueryGraph::new(
            vec![
                var(0, 0),
                var(1, 1),
                Vertex {
                    id: 2,
                    class: VertexClass::Type,
                    instance: "T".into(),
                },
            ],
            vec![
                Edge {
                    id: 0,
                    class: EdgeClass::Rel,
                    instance: "p".into(),
                    u: 0,
                    v: 1,
                    dir: Direction::Backward,
                },
                Edge {
                    id: 1,
                    class: EdgeClass::Isa,
                    instance: RDF_TYPE.into(),
                    u: 1,
                    v: 2,
                    dir: Direction::Undirected,
                },
            ],
            0,
        )
        .unwrap();
        let g = q.to_aqg();
        assert_eq!(
            g.vertices,
            vec![VertexClass::Var, VertexClass::Var, VertexClass::Type]
        );
        assert_eq!(
            g.edges.iter().map(|e| e.class).collect::<Vec<_>>(),
            vec![EdgeClass::Rel, EdgeClass::Isa]
        );
        assert!(g.validate().is_ok());
    }

    #[test]
    fn query_graph_rejects_bad_instances() {
        let bad_edge = QueryGraph::new(
            vec![
                var(0, 0),
                Vertex {
                    id: 1,
                    class: VertexClass::Num,
                    instance: "5".into(),
                },
            ],
            vec![Edge {
                id: 0,
                class: EdgeClass::Cmp,
                instance: "max_at_n".into(),
                u: 0,
                v: 1,
                dir: Direction::Undirected,
            }],
            0,
        );
        assert!(matches!(bad_edge, Err(GraphError::BadEdgeInstance { .. })));
        let bad_num = QueryGraph::new(
            vec![Vertex {
                id: 0,
                class: VertexClass::Num,
                instance: "five".into(),
            }],
            vec![],
            0,
        );
        assert!(bad_num.is_err());
        let undirected_rel = QueryGraph::new(
            vec![var(0, 0), var(1, 1)],
            vec![Edge {
                id: 0,
                class: EdgeClass::Rel,
                instance: "p".into(),
                u: 0,
                v: 1,
                dir: Direction::Undirected,
            }],
            0,
        );
        assert_eq!(undirected_rel, Err(GraphError::BadDirection(0)));
    }

    #[test]
    fn storage_order_does_not_change_code() {
        let mut a = Aqg::single(VertexClass::Var);
        let e = a.add_vertex(VertexClass::Ent);
        a.add_edge(EdgeClass::Rel, 0, e);
        let t = a.add_vertex(VertexClass::Type);
        a.add_edge(EdgeClass::Isa, 0, t);
        let b = a.relabel(&[2, 0, 1]);
        assert_eq!(a.canonical_code(), b.canonical_code());
        assert!(a.is_isomorphic(&b));
    }

    #[test]
    fn labels_distinguish_codes() {
        let mut a = Aqg::single(VertexClass::Var);
        a.add_vertex(VertexClass::Ent);
        a.add_edge(EdgeClass::Rel, 0, 1);
        let mut b = Aqg::single(VertexClass::Var);
        b.add_vertex(VertexClass::Type);
        b.add_edge(EdgeClass::Isa, 0, 1);
        assert_ne!(a.canonical_code(), b.canonical_code());
        assert!(!a.is_isomorphic(&b));
    }

    #[test]
    fn answer_position_matters() {
        // Var0 - Rel - Var1 - Rel - Ent rooted at either end of the Var pair.
        let mut a = Aqg::single(VertexClass::Var);
        a.add_vertex(VertexClass::Var);
        a.add_vertex(VertexClass::Ent);
        a.add_edge(EdgeClass::Rel, 0, 1);
        a.add_edge(EdgeClass::Rel, 1, 2);
        let mut b = a.clone();
        b.answer = 1;
        assert!(!a.is_isomorphic(&b));
    }

    #[test]
    fn json_layout() {
        let mut a = Aqg::single(VertexClass::Var);
        a.add_vertex(VertexClass::Ent);
        a.add_edge(EdgeClass::Rel, 0, 1);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(
            s,
            r#"{"vertices":[{"id":0,"class":"Var","instance":null},{"id":1,"class":"Ent","instance":null}],"edges":[{"id":0,"class":"Rel","instance":null,"u":0,"v":1,"dir":"none"}],"answer":0}"#
        );
        let back: Aqg = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        let cyclic = r#"{"vertices":[{"id":0,"class":"Var"},{"id":1,"class":"Var"}],"edges":[{"id":0,"class":"Rel","u":0,"v":1,"dir":"none"},{"id":1,"class":"Rel","u":1,"v":0,"dir":"none"}],"answer":0}"#;
        assert!(serde_json::from_str::<Aqg>(cyclic).is_err());
    }

    #[test]
    fn query_json_round_trip() {
        let q: QueryGraph = serde_json::from_str(
            r#"{"vertices":[{"id":1,"class":"Ent","instance":"A"},{"id":0,"class":"Var","instance":"?v0"}],
                "edges":[{"id":0,"class":"Rel","instance":"p","u":0,"v":1,"dir":"vu"}],"answer":0}"#,
        )
        .unwrap();
        assert_eq!(q.edges()[0].subject_object(), (1, 0));
        let back: QueryGraph = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn canonical_key_ignores_variable_names_and_order() {
        let mk = |names: [&str; 2]| {
            QueryGraph::new(
                vec![
                    Vertex {
                        id: 0,
                        class: VertexClass::Var,
                        instance: "?v0".into(),
                    },
                    Vertex {
                        id: 1,
                        class: VertexClass::Var,
                        instance: names[0].into(),
                    },
                    Vertex {
                        id: 2,
                        class: VertexClass::Var,
                        instance: names[1].into(),
                    },
                ],
                vec![
                    Edge {
                        id: 0,
                        class: EdgeClass::Rel,
                        instance: "p".into(),
                        u: 0,
                        v: 1,
                        dir: Direction::Forward,
                    },
                    Edge {
                        id: 1,
                        class: EdgeClass::Rel,
                        instance: "q".into(),
                        u: 0,
                        v: 2,
                        dir: Direction::Backward,
                    },
                ],
                0,
            )
            .unwrap()
        };
        assert_eq!(mk(["?v1", "?v2"]).canonical_key(), mk(["?v2", "?v1"]).canonical_key());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(2008.0), "2008");
        assert_eq!(format_number(-3.5), "-3.5");
        assert_eq!(parse_number("+4.0"), Some(4.0));
        assert_eq!(parse_number("nan"), None);
    }
}
