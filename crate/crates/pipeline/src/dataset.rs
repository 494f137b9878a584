use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use aqg_core::{build_ground_truth, AnswerSet, Aqg, LinkingResults, QueryGraph, TraversalStrategy};
use aqg_neural::{preprocess, Mention, TrainExample};
use serde::{Deserialize, Serialize};

use crate::PipelineError;

/// One question with its linking results and gold query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub mentions: Vec<Mention>,
    #[serde(default)]
    pub linking: LinkingResults,
    pub gold_query: QueryGraph,
    #[serde(default)]
    pub gold_answers: AnswerSet,
}

impl DatasetRecord {
    pub fn gold_aqg(&self) -> Aqg {
        self.gold_query.to_aqg()
    }

    /// Complexity level: the number of edges of the gold query.
    pub fn level(&self) -> usize {
        self.gold_query.edges().len()
    }

    pub fn tokens(&self) -> Result<Vec<String>, PipelineError> {
        Ok(preprocess(&self.question, &self.mentions)?)
    }

    pub fn train_example(&self, strategy: TraversalStrategy) -> Result<TrainExample, PipelineError> {
        let gold = self.gold_aqg();
        Ok(TrainExample {
            tokens: self.tokens()?,
            actions: build_ground_truth(&gold, strategy),
            gold,
            linking: self.linking.clone(),
        })
    }
}

/// Training examples; a random traversal draws a different order per record.
pub fn train_examples(
    records: &[DatasetRecord],
    strategy: TraversalStrategy,
) -> Result<Vec<TrainExample>, PipelineError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| match strategy {
            TraversalStrategy::Random(seed) => r.train_example(TraversalStrategy::Random(seed.wrapping_add(i as u64))),
            s => r.train_example(s),
        })
        .collect()
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetRecord>, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| PipelineError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let file = std::fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|e| PipelineError::Format(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}
