//! Acceptance suite: runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails. Built with `harness = false`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use aqg_core::{
    build_ground_truth, ground, is_groundable, replay, GenerationState, KnowledgeBase, TraversalStrategy,
};
use aqg_neural::{
    decode_step, encode_graph, encode_question, evaluate, generate, grad_check, predict_add_edge,
    predict_add_vertex, predict_select_vertex, Ablation, DecoderState, Hyperparams, ModelParams, TrainOptions, Vocab,
};
use aqg_pipeline::{
    run_e2e, synth_generate, train_examples, DatasetRecord, ExperimentConfig, MetricsReport, Mode, RunConfig,
    SynthData, SynthSpec,
};
use aqg_testkit::{
    brute_execute, brute_ground, brute_isomorphic, random_aqg, random_answer_rooted_aqg, random_kb,
    random_linking, random_query,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STRATEGIES: [&str; 3] = ["dfs", "bfs", "random"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

/// Training budget shared by the generalization, ablation, candidate and
/// soundness experiments.
fn experiment_config() -> ExperimentConfig {
    ExperimentConfig {
        hyper: Hyperparams {
            learning_rate: 1e-3,
            epochs: 12,
            seed: 1,
            ..Hyperparams::default()
        },
        train: TrainOptions::default(),
        traversal: "dfs".into(),
        run: RunConfig {
            st_max_edges: 3,
            ..RunConfig::default()
        },
    }
}

fn multi_edge_accuracy(r: &MetricsReport) -> f64 {
    let (hit, n) = r
        .levels
        .iter()
        .filter(|l| l.level >= 2)
        .fold((0.0, 0usize), |(h, n), l| (h + l.aqg_accuracy * l.questions as f64, n + l.questions));
    hit / n.max(1) as f64
}

fn c1_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut ok, mut total, mut brute_checked) = (0, 0, 0);
    let mut classes = BTreeSet::new();
    for i in 0..1000 {
        let n = rng.gen_range(2..=10);
        let g = random_aqg(&mut rng, n);
        classes.extend(g.vertices.iter().copied());
        for s in STRATEGIES {
            let pi = build_ground_truth(&g, TraversalStrategy::parse(s, i).unwrap());
            let back = replay(&pi);
            total += 1;
            let iso = back.as_ref().is_ok_and(|b| {
                // The permutation oracle is affordable up to 7 vertices.
                if n <= 7 {
                    brute_checked += 1;
                    brute_isomorphic(b, &g)
                } else {
                    b.is_isomorphic(&g)
                }
            });
            ok += usize::from(iso);
        }
    }
    let t = start.elapsed();
    outcome(
        ok == total && classes.len() == 4 && within(t, 5),
        format!("{ok}/{total} isomorphic ({brute_checked} by permutation oracle), {} vertex classes, {t:.2?} (limit 5 s)", classes.len()),
    )
}

fn c2_length_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut ok, mut total) = (0, 0);
    for i in 0..1000 {
        let n = rng.gen_range(2..=10);
        let g = random_aqg(&mut rng, n);
        for s in STRATEGIES {
            let pi = build_ground_truth(&g, TraversalStrategy::parse(s, i).unwrap());
            total += 1;
            ok += usize::from(pi.len() == 3 * n - 1);
        }
    }
    outcome(ok == total, format!("{ok}/{total} sequences of length 3n-1"))
}

fn c3_grounding_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut ok, mut nonempty) = (0, 0);
    for _ in 0..300 {
        let kb = random_kb(&mut rng, 50);
        let g = random_answer_rooted_aqg(&mut rng, 3);
        let r = random_linking(&mut rng);
        let got = ground(&g, &r, &kb);
        let keys: BTreeSet<String> = got.iter().map(|q| q.canonical_key()).collect();
        let oracle = brute_ground(&g, &r, &kb);
        nonempty += usize::from(!oracle.is_empty());
        ok += usize::from(keys.len() == got.len() && keys == oracle);
    }
    let t = start.elapsed();
    outcome(
        ok == 300 && within(t, 60),
        format!("{ok}/300 candidate sets equal the brute-force oracle ({nonempty} nonempty), {t:.2?} (limit 60 s)"),
    )
}

fn c4_execution_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut ok, mut builtin) = (0, 0);
    for _ in 0..300 {
        let kb = random_kb(&mut rng, 50);
        let q = random_query(&mut rng, 4);
        builtin += usize::from(q.edges().iter().any(|e| {
            matches!(e.class, aqg_core::EdgeClass::Cmp | aqg_core::EdgeClass::Ord | aqg_core::EdgeClass::Cnt)
        }));
        ok += usize::from(kb.execute(&q) == brute_execute(&kb, &q));
    }
    outcome(
        ok == 300 && builtin > 0,
        format!("{ok}/300 answer sets equal the nested-loop oracle ({builtin} with Cmp/Ord/Cnt)"),
    )
}

fn c5_gradient_check(data: &SynthData) -> Outcome {
    let start = Instant::now();
    let rec = data.train.iter().max_by_key(|r| r.level()).unwrap();
    let ex = rec.train_example(TraversalStrategy::DepthFirst).unwrap();
    let vocab = Vocab::build(data.train.iter().map(|r| r.tokens().unwrap()).collect::<Vec<_>>().iter().map(Vec::as_slice));
    let p = ModelParams::init(&Hyperparams { seed: 5, ..Hyperparams::default() }, vocab).unwrap();
    let report = grad_check(&p, &ex.tokens, &ex.actions, 5, None);
    let t = start.elapsed();
    let worst = report.worst().map_or("-".to_string(), |a| a.name.clone());
    outcome(
        report.max_rel_error <= 1e-3 && report.arrays.len() == p.len() && within(t, 30),
        format!(
            "max relative error {:.2e} over {} arrays (worst {worst}), {t:.2?} (limit 30 s)",
            report.max_rel_error,
            report.arrays.len()
        ),
    )
}

fn c6_probability_hygiene() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let models: Vec<ModelParams> = [
        Ablation::default(),
        Ablation { no_attention: true, ..Ablation::default() },
        Ablation { no_skip: true, ..Ablation::default() },
        Ablation { no_graph_encoder: true, ..Ablation::default() },
    ]
    .into_iter()
    .enumerate()
    .map(|(i, ablation)| {
        let h = Hyperparams { seed: i as u64, ablation, ..Hyperparams::default() };
        ModelParams::init(&h, Vocab::build([words.as_slice()])).unwrap()
    })
    .collect();
    let (mut dists, mut worst, mut masked, mut mask_ok) = (0usize, 0.0f64, 0usize, true);
    let mut check = |d: &[f64]| {
        dists += 1;
        worst = worst.max((d.iter().sum::<f64>() - 1.0).abs());
    };
    for i in 0..1000 {
        let p = &models[i % models.len()];
        let d = p.hyper.hidden;
        let g = random_answer_rooted_aqg(&mut rng, 6);
        let pi = build_ground_truth(&g, TraversalStrategy::DepthFirst);
        let t = rng.gen_range(0..pi.len());
        let mut s = GenerationState::new();
        for &a in &pi.0[..t] {
            s.apply_mut(a).unwrap();
        }
        let l = rng.gen_range(1..=10);
        let tokens: Vec<String> = (0..l).map(|_| words.choose(&mut rng).unwrap().clone()).collect();
        let q = encode_question(p, &tokens);
        let ge = encode_graph(p, &s.graph);
        let scale = rng.gen_range(0.1..20.0);
        let prev = DecoderState {
            h: (0..d).map(|_| rng.gen_range(-scale..scale)).collect(),
            c: (0..d).map(|_| rng.gen_range(-scale..scale)).collect(),
        };
        let out = decode_step(p, &prev, &ge.global, &q.tokens);
        if !out.alpha.is_empty() {
            check(&out.alpha);
        }
        // Large activations stress the stability of the heads.
        let h: Vec<f64> = out.h_out.iter().map(|x| x * rng.gen_range(1.0..100.0)).collect();
        check(&predict_add_vertex(p, &h));
        check(&predict_add_edge(p, &h));
        if s.graph.vertices.len() >= 2 {
            let pending = s.pending_vertex.unwrap_or_else(|| rng.gen_range(0..s.graph.vertices.len()));
            let dist = predict_select_vertex(&h, &ge.vertices, Some(pending)).unwrap();
            check(&dist);
            masked += 1;
            mask_ok &= dist[pending] == 0.0;
        }
    }
    outcome(
        worst <= 1e-6 && mask_ok && masked > 0,
        format!("{dists} distributions over 1000 states, max |sum-1| {worst:.1e}; pending vertex exactly 0 in {masked} selections: {mask_ok}"),
    )
}

fn c7_overfit() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec { train: 50, dev: 0, test: 0, ..SynthSpec::default() };
    let data = synth_generate(&spec, 7).unwrap();
    let examples = train_examples(&data.train, TraversalStrategy::DepthFirst).unwrap();
    let hyper = Hyperparams { learning_rate: 1e-3, epochs: 200, seed: 7, ..Hyperparams::default() };
    let opts = TrainOptions { stop_when_perfect: true, ..TrainOptions::default() };
    let (p, report) = aqg_neural::train(&examples, &[], &hyper, &opts).unwrap();
    let acc = evaluate(&p, &examples, opts.max_vertices);
    let t = start.elapsed();
    outcome(
        acc.action == 1.0 && acc.aqg == 1.0 && report.epochs.len() <= 200 && within(t, 300),
        format!(
            "d={} action accuracy {:.3}, AQG accuracy {:.3} after {} epochs, {t:.1?} (limit 5 min)",
            p.hyper.hidden,
            acc.action,
            acc.aqg,
            report.epochs.len()
        ),
    )
}

struct Trained {
    data: SynthData,
    cfg: ExperimentConfig,
    full: ModelParams,
    full_run: MetricsReport,
    trace_candidates: Vec<usize>,
}

fn c8_generalization(data: SynthData) -> (Outcome, Option<Trained>) {
    let cfg = experiment_config();
    let train_levels: BTreeSet<usize> = data.train.iter().map(DatasetRecord::level).collect();
    let (full, report) = match cfg.train_model(&data.train, &data.dev) {
        Ok(x) => x,
        Err(e) => return (outcome(false, format!("training failed: {e}")), None),
    };
    let run = run_e2e(Some(&full), &data.kb, &data.test, &cfg.run).unwrap();
    let acc = run.report.aqg_accuracy;
    let o = outcome(
        acc >= 0.90 && data.train.len() >= 500 && data.test.len() >= 100,
        format!(
            "{} train / {} test, levels {:?}: test AQG accuracy {acc:.3} (need >= 0.90), best epoch {}",
            data.train.len(),
            data.test.len(),
            train_levels,
            report.best_epoch
        ),
    );
    let trace_candidates = run.trace.iter().map(|t| t.candidates).collect();
    (
        o,
        Some(Trained {
            data,
            cfg,
            full,
            full_run: run.report,
            trace_candidates,
        }),
    )
}

fn c9_ablation(t: &Trained, extra_models: &mut Vec<ModelParams>) -> Outcome {
    let full_acc = t.full_run.aqg_accuracy;
    let full_multi = multi_edge_accuracy(&t.full_run);
    let mut rows = Vec::new();
    for (name, ablation) in [
        ("no-attention", Ablation { no_attention: true, ..Ablation::default() }),
        ("no-skip", Ablation { no_skip: true, ..Ablation::default() }),
        ("no-graph-encoder", Ablation { no_graph_encoder: true, ..Ablation::default() }),
    ] {
        let mut cfg = t.cfg.clone();
        cfg.hyper.ablation = ablation;
        let (p, _) = cfg.train_model(&t.data.train, &t.data.dev).unwrap();
        let r = run_e2e(Some(&p), &t.data.kb, &t.data.test, &cfg.run).unwrap().report;
        extra_models.push(p);
        rows.push((name, r.aqg_accuracy, multi_edge_accuracy(&r)));
    }
    let mut cfg = t.cfg.run.clone();
    cfg.generate.kb_constraint = false;
    let r = run_e2e(Some(&t.full), &t.data.kb, &t.data.test, &cfg).unwrap().report;
    rows.push(("no-kb-constraint", r.aqg_accuracy, multi_edge_accuracy(&r)));

    let ordering = rows.iter().all(|&(_, acc, _)| full_acc >= acc);
    let margin = |m: f64| full_multi - m;
    let ge = rows.iter().find(|r| r.0 == "no-graph-encoder").unwrap().2;
    let largest = margin(ge) > 0.0 && rows.iter().all(|&(_, _, m)| margin(ge) >= margin(m));
    let table: Vec<String> = rows
        .iter()
        .map(|(n, a, m)| format!("{n} {a:.3} (multi-edge {m:.3})"))
        .collect();
    outcome(
        ordering && largest,
        format!(
            "full {full_acc:.3} (multi-edge {full_multi:.3}) vs {}; full >= all: {ordering}; graph encoder removal costs most on multi-edge: {largest}",
            table.join(", ")
        ),
    )
}

fn c10_candidates(t: &Trained) -> Outcome {
    let mut cfg = t.cfg.run.clone();
    cfg.mode = Mode::St;
    let st = run_e2e(None, &t.data.kb, &t.data.test, &cfg).unwrap();
    let le = t.trace_candidates.iter().zip(&st.trace).filter(|(a, s)| **a <= s.candidates).count();
    let n = st.trace.len();
    let mean_aqg = t.full_run.mean_candidates;
    outcome(
        le == n && mean_aqg < st.report.mean_candidates,
        format!(
            "N_c(AQG) <= N_c(ST) on {le}/{n} questions; mean N_c {mean_aqg:.1} (AQG) vs {:.1} (ST, <= {} edges)",
            st.report.mean_candidates, cfg.st_max_edges
        ),
    )
}

fn c11_soundness(data: &SynthData, trained: Option<&Trained>, extra: &[ModelParams]) -> Outcome {
    let cfg = RunConfig::default().generate;
    let vocab = Vocab::build(data.train.iter().map(|r| r.tokens().unwrap()).collect::<Vec<_>>().iter().map(Vec::as_slice));
    let mut models: Vec<(String, ModelParams)> = (0..20)
        .map(|s| {
            let h = Hyperparams { seed: 1000 + s, ..Hyperparams::default() };
            (format!("untrained-{s}"), ModelParams::init(&h, vocab.clone()).unwrap())
        })
        .collect();
    if let Some(t) = trained {
        models.push(("trained".into(), t.full.clone()));
    }
    models.extend(extra.iter().cloned().enumerate().map(|(i, p)| (format!("ablation-{i}"), p)));
    let check = |kb: &KnowledgeBase, p: &ModelParams, recs: &[DatasetRecord]| {
        recs.iter()
            .filter(|r| {
                let g = generate(p, &r.tokens().unwrap(), &r.linking, kb, &cfg);
                is_groundable(&g, &r.linking, kb)
            })
            .count()
    };
    let (mut ok, mut total, mut trained_count) = (0, 0, 0);
    for (name, p) in &models {
        let recs: Vec<DatasetRecord> = data.test.iter().chain(data.dev.iter()).cloned().collect();
        ok += check(&data.kb, p, &recs);
        total += recs.len();
        if !name.starts_with("untrained") {
            trained_count += 1;
        }
    }
    outcome(
        ok == total,
        format!("{ok}/{total} generated AQGs groundable over {} untrained and {trained_count} trained checkpoints", 20),
    )
}

fn small_pipeline() -> Vec<u8> {
    let spec = SynthSpec { entities: 30, triples: 150, train: 60, dev: 10, test: 20, ..SynthSpec::default() };
    let data = synth_generate(&spec, 12).unwrap();
    let mut cfg = experiment_config();
    cfg.hyper.epochs = 3;
    cfg.hyper.hidden = 16;
    cfg.hyper.embedding_dim = 16;
    cfg.hyper.seed = 12;
    cfg.traversal = "random".into();
    let (p, _) = cfg.train_model(&data.train, &data.dev).unwrap();
    let run = run_e2e(Some(&p), &data.kb, &data.test, &cfg.run).unwrap();
    let mut bytes = serde_json::to_vec(&run.report).unwrap();
    for t in &run.trace {
        bytes.extend(serde_json::to_vec(t).unwrap());
    }
    bytes
}

fn c12_determinism() -> Outcome {
    let a = small_pipeline();
    let b = small_pipeline();
    outcome(a == b, format!("two full runs (synth, train, eval) produced {} and {} identical bytes: {}", a.len(), b.len(), a == b))
}

fn main() {
    let mut results = Vec::new();
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "[{}] {n:>2} {name}: {} [{:.1?}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed()
        );
        results.push(o.pass);
    };
    report(1, "grammar round-trip", &mut c1_round_trip);
    report(2, "action-length law", &mut c2_length_law);
    report(3, "grounding oracle", &mut c3_grounding_oracle);
    report(4, "execution oracle", &mut c4_execution_oracle);

    let data = synth_generate(&SynthSpec::default(), 2024).expect("synthetic data");
    report(5, "gradient check", &mut || c5_gradient_check(&data));
    report(6, "probability hygiene", &mut c6_probability_hygiene);
    report(7, "overfit", &mut c7_overfit);

    let mut trained = None;
    report(8, "generalization", &mut || {
        let (o, t) = c8_generalization(data.clone());
        trained = t;
        o
    });
    let mut extra = Vec::new();
    match &trained {
        Some(t) => {
            report(9, "ablation direction", &mut || c9_ablation(t, &mut extra));
            report(10, "candidate reduction", &mut || c10_candidates(t));
        }
        None => {
            report(9, "ablation direction", &mut || outcome(false, "no trained model".into()));
            report(10, "candidate reduction", &mut || outcome(false, "no trained model".into()));
        }
    }
    report(11, "KB-constraint soundness", &mut || c11_soundness(&data, trained.as_ref(), &extra));
    report(12, "determinism", &mut c12_determinism);

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
