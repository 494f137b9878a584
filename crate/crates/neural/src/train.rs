//! Teacher-forced loss, Adam training and the finite-difference gradient
//! check.

use aqg_core::{Action, ActionSequence, Aqg, GenerationState, LinkingResults};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::generate::{decode_greedy, GraphCache};
use crate::model::{argmax, Forward};
use crate::params::{Hyperparams, ModelParams};
use crate::tape::{Matrix, Var};
use crate::vocab::Vocab;
use crate::ModelError;

/// One supervised pair: a preprocessed question and its gold actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub tokens: Vec<String>,
    pub actions: ActionSequence,
    pub gold: Aqg,
    #[serde(default)]
    pub linking: LinkingResults,
}

/// Negative log-likelihood of `pi` under teacher forcing, with the number
/// of steps whose argmax matched the gold argument.
pub(crate) fn teacher_forced(f: &mut Forward<'_>, ids: &[usize], pi: &ActionSequence) -> (Var, usize) {
    let (gamma_q, mut st) = f.question(ids);
    let mut prev_out = st.h;
    let mut gs = GenerationState::new();
    let mut cache = GraphCache::new();
    let mut terms = Vec::with_capacity(pi.len());
    let mut correct = 0;
    for &a in pi.iter() {
        let (gamma_v, global) = cache.get(f, &gs.graph);
        let h_g = global.unwrap_or(prev_out);
        let (out, _) = f.decode(st, h_g, gamma_q);
        st = out;
        prev_out = out.h;
        let (logits, target) = match a {
            Action::AddVertex(l) => (f.vertex_logits(out.h), l.index()),
            Action::AddEdge(c) => (f.edge_logits(out.h), c.index()),
            Action::SelectVertex(i) => {
                let sel = gs.selectable();
                let gv = gamma_v.expect("selection happens on a nonempty graph");
                let pos = sel.iter().position(|&s| s == i).expect("gold selection is selectable");
                (f.select_logits(out.h, gv, &sel), pos)
            }
        };
        if argmax(&f.tape.value(logits).data) == target {
            correct += 1;
        }
        let lp = f.tape.log_softmax(logits);
        terms.push(f.tape.pick(lp, 0, target));
        gs.apply_mut(a).expect("gold actions follow the grammar");
    }
    let all = f.tape.concat_cols(&terms);
    let s = f.tape.sum(all);
    (f.tape.scale(s, -1.0), correct)
}

/// `−Σ_t log p(a^t | q, g^{t−1})` for a preprocessed question.
pub fn loss(p: &ModelParams, tokens: &[String], pi: &ActionSequence) -> f64 {
    let ids = p.vocab.encode(tokens);
    let mut f = Forward::new(p);
    let (l, _) = teacher_forced(&mut f, &ids, pi);
    f.tape.scalar(l)
}

/// Loss and the gradient of every array (zeros for arrays that do not
/// take part, or for `frozen`).
pub fn loss_and_gradients(
    p: &ModelParams,
    tokens: &[String],
    pi: &ActionSequence,
    frozen: Option<usize>,
) -> (f64, Vec<Matrix>) {
    let ids = p.vocab.encode(tokens);
    let (l, _, g) = forward_backward(p, &ids, pi, frozen);
    (l, g)
}

fn forward_backward(
    p: &ModelParams,
    ids: &[usize],
    pi: &ActionSequence,
    frozen: Option<usize>,
) -> (f64, usize, Vec<Matrix>) {
    let mut f = Forward::with_frozen(p, frozen);
    let (l, correct) = teacher_forced(&mut f, ids, pi);
    let grads = f.tape.backward(l);
    let out = (0..p.len())
        .map(|id| {
            f.bound(id)
                .and_then(|v| grads.get(v).cloned())
                .unwrap_or_else(|| {
                    let m = p.value(id);
                    Matrix::zeros(m.rows, m.cols)
                })
        })
        .collect();
    (f.tape.scalar(l), correct, out)
}

/// Teacher-forced step accuracy and greedy full-AQG accuracy without the KB.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub action: f64,
    pub aqg: f64,
}

pub fn evaluate(p: &ModelParams, data: &[TrainExample], max_vertices: usize) -> Accuracy {
    if data.is_empty() {
        return Accuracy::default();
    }
    let mut steps = 0;
    let mut correct = 0;
    let mut exact = 0;
    for ex in data {
        let ids = p.vocab.encode(&ex.tokens);
        let mut f = Forward::new(p);
        let (_, c) = teacher_forced(&mut f, &ids, &ex.actions);
        correct += c;
        steps += ex.actions.len();
        let (g, _) = decode_greedy(p, &ids, None, max_vertices);
        if g.is_isomorphic(&ex.gold) {
            exact += 1;
        }
    }
    Accuracy {
        action: correct as f64 / steps as f64,
        aqg: exact as f64 / data.len() as f64,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train: Accuracy,
    pub dev: Option<Accuracy>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    /// Stop as soon as train action and AQG accuracy both reach 1.
    pub stop_when_perfect: bool,
    pub max_vertices: usize,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            stop_when_perfect: false,
            max_vertices: 8,
            verbose: false,
        }
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(p: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = (0..p.len()).map(|i| vec![0.0; p.value(i).len()]).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, p: &mut ModelParams, grads: &[Matrix]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (id, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            let w = &mut p.value_mut(id).data;
            for k in 0..g.data.len() {
                let gk = g.data[k];
                if gk == 0.0 && m[k] == 0.0 && v[k] == 0.0 {
                    continue;
                }
                m[k] = Self::B1 * m[k] + (1.0 - Self::B1) * gk;
                v[k] = Self::B2 * v[k] + (1.0 - Self::B2) * gk * gk;
                w[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains a fresh model. The vocabulary comes from the training questions.
/// Returns the parameters of the best dev epoch (the last epoch when `dev`
/// is empty).
pub fn train(
    data: &[TrainExample],
    dev: &[TrainExample],
    hyper: &Hyperparams,
    opts: &TrainOptions,
) -> Result<(ModelParams, TrainReport), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let vocab = Vocab::build(data.iter().map(|e| e.tokens.as_slice()));
    let mut p = ModelParams::init(hyper, vocab)?;
    let ids: Vec<Vec<usize>> = data.iter().map(|e| p.vocab.encode(&e.tokens)).collect();
    let mut adam = Adam::new(&p, hyper.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    let mut best: Option<(Accuracy, ModelParams)> = None;
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (l, _, grads) = forward_backward(&p, &ids[i], &data[i].actions, None);
            if !l.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFinite {
                    epoch,
                    example: i,
                    loss: l,
                });
            }
            total += l;
            adam.step(&mut p, &grads);
        }
        let train_acc = evaluate(&p, data, opts.max_vertices);
        let dev_acc = (!dev.is_empty()).then(|| evaluate(&p, dev, opts.max_vertices));
        let mean_loss = total / data.len() as f64;
        if opts.verbose {
            eprintln!(
                "epoch {epoch:3} loss {mean_loss:.4} train action {:.3} aqg {:.3}{}",
                train_acc.action,
                train_acc.aqg,
                dev_acc.map(|d| format!(" dev action {:.3} aqg {:.3}", d.action, d.aqg)).unwrap_or_default()
            );
        }
        report.epochs.push(EpochReport {
            epoch,
            mean_loss,
            train: train_acc,
            dev: dev_acc,
        });
        let score = dev_acc.unwrap_or(train_acc);
        let better = match &best {
            None => true,
            Some((b, _)) => dev_acc.is_none() || (score.aqg, score.action) > (b.aqg, b.action),
        };
        if better {
            best = Some((score, p.clone()));
            report.best_epoch = epoch;
        }
        if opts.stop_when_perfect && train_acc.action == 1.0 && train_acc.aqg == 1.0 {
            break;
        }
    }
    let params = best.map(|(_, p)| p).unwrap_or(p);
    Ok((params, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_gradient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub arrays: Vec<ArrayCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ArrayCheck> {
        self.arrays.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Gradients below this magnitude are compared absolutely; finite
/// differences of a loss near 10 carry round-off around 1e-10 / h.
const GRAD_FLOOR: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const COORDS: usize = 20;

/// Compares reverse-mode gradients with central differences at 20 random
/// coordinates of every array. `frozen` names an array to leave off the
/// tape, as a negative control.
pub fn grad_check(
    p: &ModelParams,
    tokens: &[String],
    pi: &ActionSequence,
    seed: u64,
    frozen: Option<&str>,
) -> GradCheckReport {
    let frozen = frozen.and_then(|n| p.id(n));
    let (_, analytic) = loss_and_gradients(p, tokens, pi, frozen);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = p.clone();
    let mut arrays = Vec::with_capacity(p.len());
    for id in 0..p.len() {
        let n = p.value(id).len();
        let mut worst: f64 = 0.0;
        let mut largest: f64 = 0.0;
        for _ in 0..COORDS.min(n) {
            let k = rng.gen_range(0..n);
            let orig = p.value(id).data[k];
            work.value_mut(id).data[k] = orig + FD_STEP;
            let up = loss(&work, tokens, pi);
            work.value_mut(id).data[k] = orig - FD_STEP;
            let down = loss(&work, tokens, pi);
            work.value_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[id].data[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
            largest = largest.max(a.abs().max(numeric.abs()));
        }
        arrays.push(ArrayCheck {
            name: p.names()[id].clone(),
            max_rel_error: worst,
            max_abs_gradient: largest,
        });
    }
    let max_rel_error = arrays.iter().map(|a| a.max_rel_error).fold(0.0, f64::max);
    GradCheckReport { arrays, max_rel_error }
}
