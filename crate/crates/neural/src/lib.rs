//! Neural AQG generator: a bidirectional recurrent question encoder, a graph
//! transformer over the partial AQG, an attention decoder with a skip
//! connection, and three heads that emit grammar actions.

pub mod generate;
pub mod model;
pub mod params;
pub mod tape;
pub mod train;
pub mod vocab;

pub use generate::{generate, generate_traced, generate_unconstrained, GenerateConfig, GenerationTrace};
pub use model::{
    argmax, decode_step, encode_graph, encode_question, encode_question_ids, predict_add_edge, predict_add_vertex,
    predict_select_vertex, DecoderState, GraphEncoding, QuestionEncoding, StepOutput,
};
pub use params::{Ablation, Hyperparams, ModelParams};
pub use train::{
    evaluate, grad_check, loss, loss_and_gradients, train, Accuracy, EpochReport, GradCheckReport, TrainExample,
    TrainOptions, TrainReport,
};
pub use vocab::{preprocess, Mention, MentionKind, Vocab};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error("bad mention: {0}")]
    Mention(String),
    #[error("no selectable vertex")]
    NoSelectableVertex,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("pretrained embeddings: {0}")]
    Pretrained(String),
    #[error("io: {0}")]
    Io(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("non-finite loss {loss} at epoch {epoch}, example {example}")]
    NonFinite { epoch: usize, example: usize, loss: f64 },
}
