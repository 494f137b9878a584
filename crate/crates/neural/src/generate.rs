//! Greedy AQG generation with the optional KB constraint.

use aqg_core::{
    attach_type, is_groundable, Action, Aqg, EdgeClass, GenerationState, KnowledgeBase, LinkingResults, OperatorKind,
    VertexClass, VertexLabel,
};
use serde::{Deserialize, Serialize};

use crate::model::{argmax, Forward};
use crate::params::ModelParams;
use crate::tape::{softmax, Var};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    /// Check groundability after every iteration and undo the iteration
    /// that breaks it.
    pub kb_constraint: bool,
    /// Add a `Type` vertex afterwards when the linker found types.
    pub attach_type: bool,
    pub max_vertices: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            kb_constraint: true,
            attach_type: true,
            max_vertices: 8,
        }
    }
}

/// Per-step trace of a generation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenerationTrace {
    pub actions: Vec<Action>,
    /// The probability vector the chosen action was taken from; for
    /// selections it covers every vertex, with the pending one at zero.
    pub distributions: Vec<Vec<f64>>,
    /// Whether the KB constraint undid the last iteration.
    pub reverted: bool,
}

/// Graph encodings are reused while the graph is unchanged, which happens
/// between an iteration's `AddVertex` and `AddEdge` steps.
pub(crate) struct GraphCache {
    key: Option<(usize, usize)>,
    vertices: Option<Var>,
    global: Option<Var>,
}

impl GraphCache {
    pub fn new() -> Self {
        GraphCache {
            key: None,
            vertices: None,
            global: None,
        }
    }

    /// Returns `(Γ_v, h_g)` for `g`. With the graph encoder ablated, `Γ_v`
    /// holds the initial vertex embeddings and no `h_g` is computed.
    pub fn get(&mut self, f: &mut Forward<'_>, g: &Aqg) -> (Option<Var>, Option<Var>) {
        let key = (g.vertices.len(), g.edges.len());
        if self.key != Some(key) {
            if f.p.hyper.ablation.no_graph_encoder {
                self.vertices = (!g.is_empty()).then(|| f.vertex_init(g));
                self.global = None;
            } else {
                let enc = f.graph(g);
                self.vertices = enc.vertices;
                self.global = Some(enc.global);
            }
            self.key = Some(key);
        }
        (self.vertices, self.global)
    }
}

/// Greedy decoding loop. `constraint` carries the linking results and KB
/// used for the groundability check; `None` decodes without it.
pub(crate) fn decode_greedy(
    p: &ModelParams,
    ids: &[usize],
    constraint: Option<(&LinkingResults, &KnowledgeBase)>,
    max_vertices: usize,
) -> (Aqg, GenerationTrace) {
    let mut f = Forward::new(p);
    let (gamma_q, mut st) = f.question(ids);
    let mut prev_out = st.h;
    let mut gs = GenerationState::new();
    let mut cache = GraphCache::new();
    let mut trace = GenerationTrace::default();
    loop {
        let op = gs.next_operator();
        if op == OperatorKind::AddVertex && gs.graph.vertices.len() >= max_vertices {
            break;
        }
        let (gamma_v, global) = cache.get(&mut f, &gs.graph);
        let h_g = global.unwrap_or(prev_out);
        let (out, _) = f.decode(st, h_g, gamma_q);
        st = out;
        prev_out = out.h;
        let (action, dist) = match op {
            OperatorKind::AddVertex => {
                let logits = f.vertex_logits(out.h);
                let mut probs = softmax(&f.tape.value(logits).data);
                // The first vertex is the answer ?v0, which is a variable.
                let choice = if gs.step == 1 {
                    VertexLabel::Class(VertexClass::Var).index()
                } else {
                    argmax(&probs)
                };
                if gs.step == 1 {
                    probs = one_hot(probs.len(), choice);
                }
                (Action::AddVertex(VertexLabel::from_index(choice)), probs)
            }
            OperatorKind::SelectVertex => {
                let sel = gs.selectable();
                let gv = gamma_v.expect("selection happens on a nonempty graph");
                let logits = f.select_logits(out.h, gv, &sel);
                let probs = softmax(&f.tape.value(logits).data);
                let mut full = vec![0.0; gs.graph.vertices.len()];
                for (&i, &q) in sel.iter().zip(&probs) {
                    full[i] = q;
                }
                (Action::SelectVertex(sel[argmax(&probs)]), full)
            }
            OperatorKind::AddEdge => {
                let logits = f.edge_logits(out.h);
                let probs = softmax(&f.tape.value(logits).data);
                (Action::AddEdge(EdgeClass::ALL[argmax(&probs)]), probs)
            }
        };
        trace.actions.push(action);
        trace.distributions.push(dist);
        gs.apply_mut(action).expect("decoded actions follow the grammar");
        if gs.finished {
            break;
        }
        if op == OperatorKind::AddEdge {
            if let Some((r, kb)) = constraint {
                if !is_groundable(&gs.graph, r, kb) {
                    gs.graph.edges.pop();
                    gs.graph.vertices.pop();
                    trace.reverted = true;
                    break;
                }
            }
        }
    }
    (gs.graph, trace)
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Generates an AQG for a preprocessed question.
pub fn generate(
    p: &ModelParams,
    tokens: &[String],
    r: &LinkingResults,
    kb: &KnowledgeBase,
    cfg: &GenerateConfig,
) -> Aqg {
    generate_traced(p, tokens, r, kb, cfg).0
}

pub fn generate_traced(
    p: &ModelParams,
    tokens: &[String],
    r: &LinkingResults,
    kb: &KnowledgeBase,
    cfg: &GenerateConfig,
) -> (Aqg, GenerationTrace) {
    let ids = p.vocab.encode(tokens);
    let constraint = cfg.kb_constraint.then_some((r, kb));
    let (mut g, trace) = decode_greedy(p, &ids, constraint, cfg.max_vertices);
    if cfg.attach_type {
        if let Some(h) = attach_type(&g, r, kb) {
            g = h;
        }
    }
    (g, trace)
}

/// Generation without the KB: no constraint and no type attachment.
pub fn generate_unconstrained(p: &ModelParams, tokens: &[String], max_vertices: usize) -> Aqg {
    let ids = p.vocab.encode(tokens);
    decode_greedy(p, &ids, None, max_vertices).0
}
