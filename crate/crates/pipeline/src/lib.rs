//! End-to-end question answering: synthetic datasets, structure generation
//! or exhaustive structure enumeration, grounding, ranking and metrics.

use std::path::Path;

pub mod dataset;
pub mod enumerate;
pub mod metrics;
pub mod rank;
pub mod run;
pub mod synth;

pub use dataset::{read_jsonl, train_examples, write_jsonl, DatasetRecord};
pub use enumerate::{enumerate_aqgs, enumerate_shapes};
pub use metrics::{aggregate, evaluate_answers, LevelMetrics, MetricsReport, TraceLine};
pub use rank::{question_words, rank_baseline, surface_lexicon, OverlapRanker, Ranker};
pub use run::{ablate, run_e2e, AblationRow, AblationVariant, ExperimentConfig, Mode, RunConfig, RunOutput};
pub use synth::{synth_generate, SynthData, SynthSpec};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format: {0}")]
    Format(String),
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
    #[error("no checkpoint given for a mode that needs a trained model")]
    MissingCheckpoint,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("no candidates to rank")]
    EmptyCandidates,
    #[error(transparent)]
    Model(#[from] aqg_neural::ModelError),
    #[error(transparent)]
    Kb(#[from] aqg_core::KbError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
