//! End-to-end evaluation and the ablation matrix.

use aqg_core::{ground, to_sparql, Aqg, KnowledgeBase, QueryGraph, TraversalStrategy};
use aqg_neural::{generate, train, Ablation, GenerateConfig, Hyperparams, ModelParams, TrainOptions, TrainReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{train_examples, DatasetRecord};
use crate::enumerate::enumerate_aqgs;
use crate::metrics::{aggregate, evaluate_answers, MetricsReport, TraceLine};
use crate::rank::{question_words, select, OverlapRanker, Ranker};
use crate::PipelineError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Generate one AQG per question and ground it.
    #[default]
    Aqg,
    /// Ground every groundable AQG up to `st_max_edges` edges.
    St,
    /// Ground the gold AQG.
    OracleAqg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub generate: GenerateConfig,
    pub st_max_edges: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Aqg,
            generate: GenerateConfig::default(),
            st_max_edges: 4,
        }
    }
}

/// Everything a CLI run needs besides file paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub hyper: Hyperparams,
    pub train: TrainOptions,
    /// `dfs`, `bfs` or `random`.
    pub traversal: String,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            hyper: Hyperparams::default(),
            train: TrainOptions::default(),
            traversal: "dfs".into(),
            run: RunConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn strategy(&self) -> Result<TraversalStrategy, PipelineError> {
        TraversalStrategy::parse(&self.traversal, self.hyper.seed)
            .ok_or_else(|| PipelineError::Format(format!("unknown traversal {:?}", self.traversal)))
    }

    /// Trains on `train`, selecting the epoch by accuracy on `dev`.
    pub fn train_model(
        &self,
        train_set: &[DatasetRecord],
        dev: &[DatasetRecord],
    ) -> Result<(ModelParams, TrainReport), PipelineError> {
        let strategy = self.strategy()?;
        let data = train_examples(train_set, strategy)?;
        let dev = train_examples(dev, strategy)?;
        Ok(train(&data, &dev, &self.hyper, &self.train)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: Vec<TraceLine>,
}

fn answer_one(
    p: Option<&ModelParams>,
    kb: &KnowledgeBase,
    rec: &DatasetRecord,
    cfg: &RunConfig,
    ranker: &dyn Ranker,
) -> Result<TraceLine, PipelineError> {
    let gold = rec.gold_aqg();
    let (generated, structures, candidates): (Option<Aqg>, usize, Vec<QueryGraph>) = match cfg.mode {
        Mode::Aqg => {
            let p = p.ok_or(PipelineError::MissingCheckpoint)?;
            let g = generate(p, &rec.tokens()?, &rec.linking, kb, &cfg.generate);
            let c = ground(&g, &rec.linking, kb).queries;
            (Some(g), 1, c)
        }
        Mode::OracleAqg => {
            let c = ground(&gold, &rec.linking, kb).queries;
            (Some(gold.clone()), 1, c)
        }
        Mode::St => {
            let shapes = enumerate_aqgs(cfg.st_max_edges, &rec.linking, kb);
            let c = shapes.iter().flat_map(|g| ground(g, &rec.linking, kb).queries).collect();
            (None, shapes.len(), c)
        }
    };
    let words = question_words(&rec.question);
    let chosen = (!candidates.is_empty())
        .then(|| select(ranker, &words, &candidates))
        .transpose()?;
    let answers = chosen.map(|(i, _)| kb.execute(&candidates[i])).unwrap_or_default();
    let (precision, recall, f1) = evaluate_answers(&answers, &rec.gold_answers);
    let predicted = generated.or_else(|| chosen.map(|(i, _)| candidates[i].to_aqg()));
    Ok(TraceLine {
        id: rec.id.clone(),
        level: rec.level(),
        gold_aqg: gold.canonical_code().to_string(),
        predicted_aqg: predicted.as_ref().map(|g| g.canonical_code().to_string()),
        aqg_correct: predicted.is_some_and(|g| g.is_isomorphic(&gold)),
        candidates: candidates.len(),
        structures,
        chosen_query: chosen.map(|(i, _)| to_sparql(&candidates[i])),
        score: chosen.map(|(_, s)| s),
        answers,
        gold_answers: rec.gold_answers.clone(),
        precision,
        recall,
        f1,
    })
}

/// Answers every test question with the given ranker. Questions are
/// processed in parallel; the trace keeps test-set order.
pub fn run_with_ranker(
    p: Option<&ModelParams>,
    kb: &KnowledgeBase,
    test: &[DatasetRecord],
    cfg: &RunConfig,
    ranker: &dyn Ranker,
) -> Result<RunOutput, PipelineError> {
    if test.is_empty() {
        return Err(PipelineError::EmptyTestSet);
    }
    if cfg.mode == Mode::Aqg && p.is_none() {
        return Err(PipelineError::MissingCheckpoint);
    }
    let trace = test
        .par_iter()
        .map(|rec| answer_one(p, kb, rec, cfg, ranker))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunOutput {
        report: aggregate(&trace),
        trace,
    })
}

/// Generate (or enumerate), ground, rank with the overlap baseline, execute
/// and score.
pub fn run_e2e(
    p: Option<&ModelParams>,
    kb: &KnowledgeBase,
    test: &[DatasetRecord],
    cfg: &RunConfig,
) -> Result<RunOutput, PipelineError> {
    run_with_ranker(p, kb, test, cfg, &OverlapRanker)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    Full,
    NoAttention,
    NoSkip,
    NoGraphEncoder,
    NoKbConstraint,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::NoAttention,
        AblationVariant::NoSkip,
        AblationVariant::NoGraphEncoder,
        AblationVariant::NoKbConstraint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoAttention => "no-attention",
            AblationVariant::NoSkip => "no-skip",
            AblationVariant::NoGraphEncoder => "no-graph-encoder",
            AblationVariant::NoKbConstraint => "no-kb-constraint",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    fn ablation(self) -> Ablation {
        Ablation {
            no_attention: self == AblationVariant::NoAttention,
            no_skip: self == AblationVariant::NoSkip,
            no_graph_encoder: self == AblationVariant::NoGraphEncoder,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub traversal: String,
    pub best_epoch: usize,
    pub report: MetricsReport,
}

/// Trains one model per (architecture, traversal) pair and evaluates it in
/// AQG mode. The KB-constraint variant reuses the full architecture and
/// only switches the constraint off at generation time.
pub fn ablate(
    kb: &KnowledgeBase,
    train_set: &[DatasetRecord],
    dev: &[DatasetRecord],
    test: &[DatasetRecord],
    base: &ExperimentConfig,
    variants: &[AblationVariant],
    traversals: &[String],
) -> Result<Vec<AblationRow>, PipelineError> {
    let mut models: Vec<((Ablation, String), ModelParams, usize)> = Vec::new();
    let mut rows = Vec::new();
    for traversal in traversals {
        for &variant in variants {
            let mut cfg = base.clone();
            cfg.traversal = traversal.clone();
            cfg.hyper.ablation = variant.ablation();
            cfg.run.mode = Mode::Aqg;
            if variant == AblationVariant::NoKbConstraint {
                cfg.run.generate.kb_constraint = false;
            }
            let key = (cfg.hyper.ablation, traversal.clone());
            let i = match models.iter().position(|(k, _, _)| *k == key) {
                Some(i) => i,
                None => {
                    let (p, report) = cfg.train_model(train_set, dev)?;
                    models.push((key, p, report.best_epoch));
                    models.len() - 1
                }
            };
            let (_, p, best_epoch) = &models[i];
            let out = run_e2e(Some(p), kb, test, &cfg.run)?;
            rows.push(AblationRow {
                variant,
                traversal: traversal.clone(),
                best_epoch: *best_epoch,
                report: out.report,
            });
        }
    }
    Ok(rows)
}
