//! Hyperparameters, the trainable parameter set and checkpoint I/O.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tape::Matrix;
use crate::vocab::Vocab;
use crate::ModelError;

/// Architecture switches used by the ablation study.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// `h_q` is the mean of the token vectors instead of attention.
    pub no_attention: bool,
    /// `h_in = h_q` instead of `h_g + h_q`.
    pub no_skip: bool,
    /// The previous decoder output stands in for `h_g` everywhere.
    pub no_graph_encoder: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub hidden: usize,
    pub embedding_dim: usize,
    pub graph_layers: usize,
    pub recurrent_layers: usize,
    pub heads: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub ablation: Ablation,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden: 64,
            embedding_dim: 64,
            graph_layers: 3,
            recurrent_layers: 1,
            heads: 4,
            learning_rate: 2e-4,
            epochs: 30,
            seed: 0,
            ablation: Ablation::default(),
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.hidden;
        if d == 0 || d % 2 != 0 {
            return Err(ModelError::Config(format!("hidden size {d} must be even and positive")));
        }
        if self.heads == 0 || d % self.heads != 0 {
            return Err(ModelError::Config(format!("{} heads do not divide hidden size {d}", self.heads)));
        }
        if self.embedding_dim == 0 || self.recurrent_layers == 0 {
            return Err(ModelError::Config("embedding dim and recurrent layers must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
enum Init {
    Embedding,
    FanIn(usize),
    Zero,
}

/// Ids of every array, resolved once from the layout.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub word: usize,
    pub vertex_class: usize,
    pub edge_class: usize,
    pub answer_mark: usize,
    /// Per recurrent layer: (forward w, forward b, backward w, backward b).
    pub question: Vec<[usize; 4]>,
    pub graph: Vec<GraphLayer>,
    pub readout: usize,
    pub empty_graph: usize,
    pub attention: usize,
    pub cell_w: usize,
    pub cell_b: usize,
    pub beta: usize,
    pub rho: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GraphLayer {
    pub q: usize,
    pub k: usize,
    pub v: usize,
    pub o: usize,
    pub edge_w: usize,
    pub edge_b: usize,
}

fn layout(h: &Hyperparams, vocab_len: usize) -> (Vec<(String, usize, usize, Init)>, Layout) {
    let d = h.hidden;
    let half = d / 2;
    let mut specs = Vec::new();
    let mut add = |name: String, r: usize, c: usize, init: Init| {
        specs.push((name, r, c, init));
        specs.len() - 1
    };
    let word = add("embed.word".into(), vocab_len, h.embedding_dim, Init::Embedding);
    let vertex_class = add("embed.vertex".into(), 4, d, Init::Embedding);
    let edge_class = add("embed.edge".into(), 5, d, Init::Embedding);
    let answer_mark = add("embed.answer".into(), 1, d, Init::Embedding);
    let mut question = Vec::new();
    for k in 0..h.recurrent_layers {
        let input = if k == 0 { h.embedding_dim } else { d };
        let fan = input + half;
        question.push([
            add(format!("question.{k}.fwd.w"), fan, 4 * half, Init::FanIn(fan)),
            add(format!("question.{k}.fwd.b"), 1, 4 * half, Init::Zero),
            add(format!("question.{k}.bwd.w"), fan, 4 * half, Init::FanIn(fan)),
            add(format!("question.{k}.bwd.b"), 1, 4 * half, Init::Zero),
        ]);
    }
    let mut graph = Vec::new();
    for k in 0..h.graph_layers {
        graph.push(GraphLayer {
            q: add(format!("graph.{k}.query"), d, d, Init::FanIn(d)),
            k: add(format!("graph.{k}.key"), d, d, Init::FanIn(d)),
            v: add(format!("graph.{k}.value"), d, d, Init::FanIn(d)),
            o: add(format!("graph.{k}.out"), d, d, Init::FanIn(d)),
            edge_w: add(format!("graph.{k}.edge.w"), 2 * d, d, Init::FanIn(2 * d)),
            edge_b: add(format!("graph.{k}.edge.b"), 1, d, Init::Zero),
        });
    }
    let readout = add("graph.readout".into(), 1, d, Init::FanIn(d));
    let empty_graph = add("graph.empty".into(), 1, d, Init::FanIn(d));
    let attention = add("decoder.attention".into(), d, d, Init::FanIn(d));
    let cell_w = add("decoder.cell.w".into(), 2 * d, 4 * d, Init::FanIn(2 * d));
    let cell_b = add("decoder.cell.b".into(), 1, 4 * d, Init::Zero);
    let beta = add("head.vertex".into(), 5, d, Init::FanIn(d));
    let rho = add("head.edge".into(), 5, d, Init::FanIn(d));
    let ids = Layout {
        word,
        vertex_class,
        edge_class,
        answer_mark,
        question,
        graph,
        readout,
        empty_graph,
        attention,
        cell_w,
        cell_b,
        beta,
        rho,
    };
    (specs, ids)
}

/// Every trainable array of the generator, plus the vocabulary and
/// hyperparameters needed to use them.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub hyper: Hyperparams,
    pub vocab: Vocab,
    names: Vec<String>,
    values: Vec<Matrix>,
    pub(crate) ids: Layout,
}

impl PartialEq for ModelParams {
    fn eq(&self, o: &Self) -> bool {
        self.hyper == o.hyper && self.vocab == o.vocab && self.names == o.names && self.values == o.values
    }
}

#[derive(Serialize, Deserialize)]
struct StoredArray {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    hyper: Hyperparams,
    vocab: Vec<String>,
    params: BTreeMap<String, StoredArray>,
}

const CHECKPOINT_VERSION: u32 = 1;

impl ModelParams {
    /// Randomly initialized parameters; deterministic in `hyper.seed`.
    pub fn init(hyper: &Hyperparams, vocab: Vocab) -> Result<Self, ModelError> {
        hyper.validate()?;
        let (specs, ids) = layout(hyper, vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (name, r, c, init) in specs {
            let bound = match init {
                Init::Embedding => 0.1,
                Init::FanIn(f) => 1.0 / (f as f64).sqrt(),
                Init::Zero => 0.0,
            };
            let data = (0..r * c)
                .map(|_| if bound > 0.0 { rng.gen_range(-bound..bound) } else { 0.0 })
                .collect();
            names.push(name);
            values.push(Matrix::from_vec(r, c, data));
        }
        Ok(ModelParams {
            hyper: hyper.clone(),
            vocab,
            names,
            values,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, id: usize) -> &Matrix {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Matrix {
        &mut self.values[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&Matrix> {
        self.id(name).map(|i| &self.values[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            hyper: self.hyper.clone(),
            vocab: self.vocab.tokens().to_vec(),
            params: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(n, m)| {
                    (
                        n.clone(),
                        StoredArray {
                            shape: [m.rows, m.cols],
                            data: m.data.clone(),
                        },
                    )
                })
                .collect(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint = serde_json::from_str(s).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported checkpoint version {}", ck.version)));
        }
        let vocab = Vocab::from_tokens(ck.vocab).map_err(ModelError::Checkpoint)?;
        let mut p = ModelParams::init(&ck.hyper, vocab)?;
        let mut params = ck.params;
        for (name, value) in p.names.iter().zip(p.values.iter_mut()) {
            let stored = params
                .remove(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing array {name}")))?;
            if stored.shape != [value.rows, value.cols] || stored.data.len() != value.len() {
                return Err(ModelError::Checkpoint(format!(
                    "array {name} has shape {:?}, expected {}x{}",
                    stored.shape, value.rows, value.cols
                )));
            }
            value.data = stored.data;
        }
        if let Some(extra) = params.keys().next() {
            return Err(ModelError::Checkpoint(format!("unknown array {extra}")));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()).map_err(|e| ModelError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let s = std::fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    /// Replaces word-embedding rows from a text file holding one token
    /// followed by `embedding_dim` floats per line. Returns how many rows
    /// were replaced.
    pub fn load_pretrained(&mut self, reader: impl BufRead) -> Result<usize, ModelError> {
        let dim = self.hyper.embedding_dim;
        let word = self.ids.word;
        let mut replaced = 0;
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| ModelError::Io(e.to_string()))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let row: Vec<f64> = parts
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| ModelError::Pretrained(format!("line {}: {e}", n + 1)))?;
            if row.len() != dim {
                return Err(ModelError::Pretrained(format!(
                    "line {}: {} values, expected {dim}",
                    n + 1,
                    row.len()
                )));
            }
            if let Some(id) = self.vocab.get(token) {
                let m = &mut self.values[word];
                m.data[id * dim..(id + 1) * dim].copy_from_slice(&row);
                replaced += 1;
            }
        }
        Ok(replaced)
    }
}
