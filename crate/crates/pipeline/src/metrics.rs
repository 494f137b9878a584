use std::collections::BTreeMap;

use aqg_core::AnswerSet;
use serde::{Deserialize, Serialize};

/// Set precision, recall and F1. Two empty sets agree perfectly; any other
/// pair without overlap scores zero everywhere.
pub fn evaluate_answers(predicted: &AnswerSet, gold: &AnswerSet) -> (f64, f64, f64) {
    if predicted.is_empty() && gold.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let hit = predicted.intersection(gold).count() as f64;
    if hit == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let p = hit / predicted.len() as f64;
    let r = hit / gold.len() as f64;
    (p, r, 2.0 * p * r / (p + r))
}

/// What happened to one test question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub id: String,
    pub level: usize,
    /// Canonical code of the gold AQG.
    pub gold_aqg: String,
    /// Canonical code of the generated AQG (AQG and oracle modes) or of the
    /// chosen candidate's structure (ST mode).
    pub predicted_aqg: Option<String>,
    pub aqg_correct: bool,
    pub candidates: usize,
    /// Number of structures grounded for this question.
    pub structures: usize,
    pub chosen_query: Option<String>,
    pub score: Option<f64>,
    pub answers: AnswerSet,
    pub gold_answers: AnswerSet,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: usize,
    pub questions: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_candidates: f64,
    pub aqg_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub questions: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_candidates: f64,
    pub aqg_accuracy: f64,
    /// Level is the gold query's edge count.
    pub levels: Vec<LevelMetrics>,
}

fn summarize(level: usize, rows: &[&TraceLine]) -> LevelMetrics {
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&TraceLine) -> f64| rows.iter().map(|t| f(t)).sum::<f64>() / n;
    LevelMetrics {
        level,
        questions: rows.len(),
        precision: mean(|t| t.precision),
        recall: mean(|t| t.recall),
        f1: mean(|t| t.f1),
        mean_candidates: mean(|t| t.candidates as f64),
        aqg_accuracy: mean(|t| f64::from(u8::from(t.aqg_correct))),
    }
}

/// Macro averages over the trace, overall and per level.
pub fn aggregate(trace: &[TraceLine]) -> MetricsReport {
    let all: Vec<&TraceLine> = trace.iter().collect();
    let total = summarize(0, &all);
    let mut by_level: BTreeMap<usize, Vec<&TraceLine>> = BTreeMap::new();
    for t in trace {
        by_level.entry(t.level).or_default().push(t);
    }
    MetricsReport {
        questions: trace.len(),
        precision: total.precision,
        recall: total.recall,
        f1: total.f1,
        mean_candidates: total.mean_candidates,
        aqg_accuracy: total.aqg_accuracy,
        levels: by_level.iter().map(|(&l, rows)| summarize(l, rows)).collect(),
    }
}
