//! Forward computation: question encoder, graph encoder, decoder step and
//! the three prediction heads.

use aqg_core::Aqg;

use crate::params::ModelParams;
use crate::tape::{softmax, Matrix, Tape, Var};
use crate::ModelError;

/// One forward pass on a fresh tape. Parameters are bound to tape leaves on
/// first use so the gradient of each array can be read back afterwards.
pub(crate) struct Forward<'a> {
    pub p: &'a ModelParams,
    pub tape: Tape,
    bound: Vec<Option<Var>>,
    frozen: Option<usize>,
}

/// Decoder recurrent state.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CellState {
    pub h: Var,
    pub c: Var,
}

pub(crate) struct EncodedGraph {
    /// `n x d`; `None` for the empty graph.
    pub vertices: Option<Var>,
    /// `m x d`; `None` when there are no edges.
    pub edges: Option<Var>,
    pub global: Var,
}

impl<'a> Forward<'a> {
    pub fn new(p: &'a ModelParams) -> Self {
        Self::with_frozen(p, None)
    }

    /// A pass in which array `frozen` is a constant and gets no gradient.
    pub fn with_frozen(p: &'a ModelParams, frozen: Option<usize>) -> Self {
        Forward {
            p,
            tape: Tape::new(),
            bound: vec![None; p.len()],
            frozen,
        }
    }

    pub fn w(&mut self, id: usize) -> Var {
        if let Some(v) = self.bound[id] {
            return v;
        }
        let m = self.p.value(id).clone();
        let v = if self.frozen == Some(id) {
            self.tape.constant(m)
        } else {
            self.tape.param(m)
        };
        self.bound[id] = Some(v);
        v
    }

    pub fn bound(&self, id: usize) -> Option<Var> {
        self.bound[id]
    }

    fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.tape.constant(Matrix::zeros(rows, cols))
    }

    /// Broadcasts a `1 x c` row to `rows x c`.
    fn broadcast(&mut self, row: Var, rows: usize) -> Var {
        if rows == 1 {
            return row;
        }
        let ones = self.tape.constant(Matrix::from_vec(rows, 1, vec![1.0; rows]));
        self.tape.matmul(ones, row)
    }

    pub fn lstm(&mut self, x: Var, state: CellState, w: usize, b: usize) -> CellState {
        let h = self.tape.value(state.h).cols;
        let (w, b) = (self.w(w), self.w(b));
        let xh = self.tape.concat_cols(&[x, state.h]);
        let z = self.tape.matmul(xh, w);
        let z = self.tape.add(z, b);
        let i = self.tape.slice_cols(z, 0, h);
        let f = self.tape.slice_cols(z, h, h);
        let g = self.tape.slice_cols(z, 2 * h, h);
        let o = self.tape.slice_cols(z, 3 * h, h);
        let (i, f, o) = (self.tape.sigmoid(i), self.tape.sigmoid(f), self.tape.sigmoid(o));
        let g = self.tape.tanh(g);
        let fc = self.tape.mul(f, state.c);
        let ig = self.tape.mul(i, g);
        let c = self.tape.add(fc, ig);
        let tc = self.tape.tanh(c);
        let h = self.tape.mul(o, tc);
        CellState { h, c }
    }

    /// Bidirectional recurrent encoder. Returns `Γ_q` (`l x d`) and the
    /// initial decoder state built from the two final hidden vectors.
    pub fn question(&mut self, ids: &[usize]) -> (Var, CellState) {
        let half = self.p.hyper.hidden / 2;
        let word = self.w(self.p.ids.word);
        let mut input = self.tape.gather_rows(word, ids);
        let l = ids.len();
        let mut summary = None;
        for layer in self.p.ids.question.clone() {
            let [fw, fb, bw, bb] = layer;
            let mut fwd = Vec::with_capacity(l);
            let mut s = CellState {
                h: self.zeros(1, half),
                c: self.zeros(1, half),
            };
            for t in 0..l {
                let x = self.tape.row(input, t);
                s = self.lstm(x, s, fw, fb);
                fwd.push(s.h);
            }
            let mut bwd = vec![s.h; l];
            let mut s = CellState {
                h: self.zeros(1, half),
                c: self.zeros(1, half),
            };
            for t in (0..l).rev() {
                let x = self.tape.row(input, t);
                s = self.lstm(x, s, bw, bb);
                bwd[t] = s.h;
            }
            let rows: Vec<Var> = (0..l).map(|t| self.tape.concat_cols(&[fwd[t], bwd[t]])).collect();
            input = self.tape.concat_rows(&rows);
            summary = Some(self.tape.concat_cols(&[fwd[l - 1], bwd[0]]));
        }
        let h = summary.expect("at least one recurrent layer");
        let c = self.zeros(1, self.p.hyper.hidden);
        (input, CellState { h, c })
    }

    /// Initial vertex states: class embedding plus the answer marker.
    pub fn vertex_init(&mut self, g: &Aqg) -> Var {
        let n = g.vertices.len();
        let table = self.w(self.p.ids.vertex_class);
        let idx: Vec<usize> = g.vertices.iter().map(|c| c.index()).collect();
        let x = self.tape.gather_rows(table, &idx);
        let mut onehot = vec![0.0; n];
        onehot[g.answer] = 1.0;
        let onehot = self.tape.constant(Matrix::from_vec(n, 1, onehot));
        let mark = self.w(self.p.ids.answer_mark);
        let mark = self.tape.matmul(onehot, mark);
        self.tape.add(x, mark)
    }

    pub fn graph(&mut self, g: &Aqg) -> EncodedGraph {
        if g.is_empty() {
            let global = self.w(self.p.ids.empty_graph);
            return EncodedGraph {
                vertices: None,
                edges: None,
                global,
            };
        }
        let d = self.p.hyper.hidden;
        let heads = self.p.hyper.heads;
        let dk = d / heads;
        let n = g.vertices.len();
        let m = g.edges.len();
        let mut x = self.vertex_init(g);
        let mut e = if m > 0 {
            let table = self.w(self.p.ids.edge_class);
            let idx: Vec<usize> = g.edges.iter().map(|e| e.class.index()).collect();
            Some(self.tape.gather_rows(table, &idx))
        } else {
            None
        };
        let adj = g.adjacency();
        let scale = 1.0 / (dk as f64).sqrt();
        for layer in self.p.ids.graph.clone() {
            // Edge rows plus a trailing zero row standing for "no edge" on the
            // self item.
            let zero = self.zeros(1, d);
            let e_ext = match e {
                Some(e) => self.tape.concat_rows(&[e, zero]),
                None => zero,
            };
            let (wq, wk, wv, wo) = (self.w(layer.q), self.w(layer.k), self.w(layer.v), self.w(layer.o));
            let q_all = self.tape.matmul(x, wq);
            let mut outs = Vec::with_capacity(n);
            for (i, nbrs) in adj.iter().enumerate() {
                let vidx: Vec<usize> = std::iter::once(i).chain(nbrs.iter().map(|&(j, _)| j)).collect();
                let eidx: Vec<usize> = std::iter::once(m).chain(nbrs.iter().map(|&(_, k)| k)).collect();
                let xv = self.tape.gather_rows(x, &vidx);
                let ev = self.tape.gather_rows(e_ext, &eidx);
                let items = self.tape.add(xv, ev);
                let k = self.tape.matmul(items, wk);
                let v = self.tape.matmul(items, wv);
                let q = self.tape.row(q_all, i);
                let mut head_out = Vec::with_capacity(heads);
                for h in 0..heads {
                    let qh = self.tape.slice_cols(q, h * dk, dk);
                    let kh = self.tape.slice_cols(k, h * dk, dk);
                    let vh = self.tape.slice_cols(v, h * dk, dk);
                    let s = self.tape.matmul_t(qh, kh);
                    let s = self.tape.scale(s, scale);
                    let a = self.tape.softmax(s);
                    head_out.push(self.tape.matmul(a, vh));
                }
                outs.push(if heads == 1 { head_out[0] } else { self.tape.concat_cols(&head_out) });
            }
            let att = self.tape.concat_rows(&outs);
            let upd = self.tape.matmul(att, wo);
            let upd = self.tape.tanh(upd);
            x = self.tape.add(x, upd);
            if let Some(ev) = e {
                let us: Vec<usize> = g.edges.iter().map(|e| e.u).collect();
                let vs: Vec<usize> = g.edges.iter().map(|e| e.v).collect();
                let xu = self.tape.gather_rows(x, &us);
                let xw = self.tape.gather_rows(x, &vs);
                let ends = self.tape.add(xu, xw);
                let cat = self.tape.concat_cols(&[ev, ends]);
                let (ew, eb) = (self.w(layer.edge_w), self.w(layer.edge_b));
                let z = self.tape.matmul(cat, ew);
                let eb = self.broadcast(eb, m);
                let z = self.tape.add(z, eb);
                let z = self.tape.tanh(z);
                e = Some(self.tape.add(ev, z));
            }
        }
        let all = match e {
            Some(ev) => self.tape.concat_rows(&[x, ev]),
            None => x,
        };
        let r = self.w(self.p.ids.readout);
        let s = self.tape.matmul_t(r, all);
        let a = self.tape.softmax(s);
        let global = self.tape.matmul(a, all);
        EncodedGraph {
            vertices: Some(x),
            edges: e,
            global,
        }
    }

    /// One decoder step. Returns `h_out`, the new state and the attention
    /// weights (`None` when attention is ablated).
    pub fn decode(&mut self, prev: CellState, h_g: Var, gamma_q: Var) -> (CellState, Option<Var>) {
        let ab = self.p.hyper.ablation;
        let (h_q, alpha) = if ab.no_attention {
            (self.tape.mean_rows(gamma_q), None)
        } else {
            let w = self.w(self.p.ids.attention);
            let hw = self.tape.matmul(h_g, w);
            let s = self.tape.matmul_t(hw, gamma_q);
            let a = self.tape.softmax(s);
            (self.tape.matmul(a, gamma_q), Some(a))
        };
        let h_in = if ab.no_skip { h_q } else { self.tape.add(h_g, h_q) };
        let (cw, cb) = (self.p.ids.cell_w, self.p.ids.cell_b);
        (self.lstm(h_in, prev, cw, cb), alpha)
    }

    pub fn vertex_logits(&mut self, h_out: Var) -> Var {
        let beta = self.w(self.p.ids.beta);
        self.tape.matmul_t(h_out, beta)
    }

    pub fn edge_logits(&mut self, h_out: Var) -> Var {
        let rho = self.w(self.p.ids.rho);
        self.tape.matmul_t(h_out, rho)
    }

    /// Logits over the selectable vertices, in the order given.
    pub fn select_logits(&mut self, h_out: Var, gamma_v: Var, selectable: &[usize]) -> Var {
        let rows = self.tape.gather_rows(gamma_v, selectable);
        self.tape.matmul_t(h_out, rows)
    }
}

/// Decoder recurrent state as plain vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Outputs of one decoder step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub h_out: Vec<f64>,
    pub state: DecoderState,
    /// Attention weights over question tokens; empty when attention is
    /// ablated.
    pub alpha: Vec<f64>,
    pub h_q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuestionEncoding {
    /// `Γ_q`, one row per token.
    pub tokens: Matrix,
    /// Decoder state derived from the final forward and backward states.
    pub initial_state: DecoderState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphEncoding {
    /// `Γ_v`, one row per vertex (zero rows for the empty graph).
    pub vertices: Matrix,
    /// `Γ_e`, one row per edge.
    pub edges: Matrix,
    pub global: Vec<f64>,
}

pub fn encode_question(p: &ModelParams, tokens: &[String]) -> QuestionEncoding {
    let ids = p.vocab.encode(tokens);
    encode_question_ids(p, &ids)
}

pub fn encode_question_ids(p: &ModelParams, ids: &[usize]) -> QuestionEncoding {
    let mut f = Forward::new(p);
    let (g, s) = f.question(ids);
    QuestionEncoding {
        tokens: f.tape.value(g).clone(),
        initial_state: DecoderState {
            h: f.tape.value(s.h).data.clone(),
            c: f.tape.value(s.c).data.clone(),
        },
    }
}

pub fn encode_graph(p: &ModelParams, g: &Aqg) -> GraphEncoding {
    let d = p.hyper.hidden;
    let mut f = Forward::new(p);
    let enc = f.graph(g);
    let get = |v: Option<Var>| v.map(|v| f.tape.value(v).clone()).unwrap_or_else(|| Matrix::zeros(0, d));
    GraphEncoding {
        vertices: get(enc.vertices),
        edges: get(enc.edges),
        global: f.tape.value(enc.global).data.clone(),
    }
}

pub fn decode_step(p: &ModelParams, prev: &DecoderState, h_g_prev: &[f64], gamma_q: &Matrix) -> StepOutput {
    let mut f = Forward::new(p);
    let s = CellState {
        h: f.tape.constant(Matrix::row_vector(prev.h.clone())),
        c: f.tape.constant(Matrix::row_vector(prev.c.clone())),
    };
    let hg = f.tape.constant(Matrix::row_vector(h_g_prev.to_vec()));
    let gq = f.tape.constant(gamma_q.clone());
    let (out, alpha) = f.decode(s, hg, gq);
    let h_q = if let Some(a) = alpha {
        f.tape.value(a).matmul(gamma_q).data
    } else {
        let m = f.tape.mean_rows(gq);
        f.tape.value(m).data.clone()
    };
    StepOutput {
        h_out: f.tape.value(out.h).data.clone(),
        state: DecoderState {
            h: f.tape.value(out.h).data.clone(),
            c: f.tape.value(out.c).data.clone(),
        },
        alpha: alpha.map(|a| f.tape.value(a).data.clone()).unwrap_or_default(),
        h_q,
    }
}

fn head(table: &Matrix, h_out: &[f64]) -> Vec<f64> {
    let logits = Matrix::row_vector(h_out.to_vec()).matmul_t(table);
    softmax(&logits.data)
}

/// `p_av` over `Ent, Type, Num, Var, End`.
pub fn predict_add_vertex(p: &ModelParams, h_out: &[f64]) -> Vec<f64> {
    head(p.value(p.ids.beta), h_out)
}

/// `p_ae` over `Rel, Ord, Cmp, Cnt, Isa`.
pub fn predict_add_edge(p: &ModelParams, h_out: &[f64]) -> Vec<f64> {
    head(p.value(p.ids.rho), h_out)
}

/// Distribution over all rows of `gamma_v`; the pending vertex gets exactly
/// zero mass.
pub fn predict_select_vertex(h_out: &[f64], gamma_v: &Matrix, pending: Option<usize>) -> Result<Vec<f64>, ModelError> {
    let selectable: Vec<usize> = (0..gamma_v.rows).filter(|&i| Some(i) != pending).collect();
    if selectable.is_empty() {
        return Err(ModelError::NoSelectableVertex);
    }
    let logits: Vec<f64> = selectable
        .iter()
        .map(|&i| crate::tape::dot(h_out, gamma_v.row(i)))
        .collect();
    let probs = softmax(&logits);
    let mut out = vec![0.0; gamma_v.rows];
    for (&i, p) in selectable.iter().zip(probs) {
        out[i] = p;
    }
    Ok(out)
}

/// Index of the largest probability, ties going to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
