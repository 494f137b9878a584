//! Candidate ranking. The baseline scores lexical overlap between the
//! question and the names a candidate mentions.

use std::collections::BTreeSet;

use aqg_core::graph::{CMP_EQ, CMP_GT, CMP_LT, COUNT, ORD_MAX, ORD_MIN};
use aqg_core::{EdgeClass, QueryGraph, VertexClass};

use crate::PipelineError;

/// Scores candidates for one question; must be deterministic.
pub trait Ranker: Sync {
    fn score(&self, question: &[String], candidates: &[QueryGraph]) -> Vec<f64>;
}

/// Words the built-in edges are usually phrased with.
fn builtin_words(instance: &str) -> &'static [&'static str] {
    match instance {
        ORD_MAX => &["largest", "max", "most", "highest"],
        ORD_MIN => &["smallest", "min", "least", "lowest"],
        CMP_GT => &["greater", "more", "than", "after", "above"],
        CMP_LT => &["less", "fewer", "before", "below"],
        CMP_EQ => &["equal", "exactly"],
        COUNT => &["how", "many", "count", "number"],
        _ => &[],
    }
}

fn split_name(name: &str, out: &mut BTreeSet<String>) {
    let name = name.rsplit(['/', '#']).next().unwrap_or(name);
    for w in name.split(|c: char| !c.is_alphanumeric()) {
        if !w.is_empty() {
            out.insert(w.to_lowercase());
        }
    }
}

/// Lowercased words of the entity, type, number and relation names in `q`,
/// plus the phrasing words of its built-in edges.
pub fn surface_lexicon(q: &QueryGraph) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for v in q.vertices() {
        match v.class {
            VertexClass::Ent | VertexClass::Type | VertexClass::Num => split_name(&v.instance, &mut out),
            VertexClass::Var => {}
        }
    }
    for e in q.edges() {
        match e.class {
            EdgeClass::Rel => split_name(&e.instance, &mut out),
            EdgeClass::Isa => {}
            _ => out.extend(builtin_words(&e.instance).iter().map(|w| w.to_string())),
        }
    }
    out
}

/// Lowercased words of a raw question, punctuation stripped.
pub fn question_words(question: &str) -> Vec<String> {
    question
        .split(|c: char| !c.is_alphanumeric() && c != '.' && c != '-')
        .map(|w| w.trim_matches(|c: char| c == '.' || c == '-').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Number of distinct lexicon words present in the question.
#[derive(Clone, Copy, Debug, Default)]
pub struct OverlapRanker;

impl Ranker for OverlapRanker {
    fn score(&self, question: &[String], candidates: &[QueryGraph]) -> Vec<f64> {
        let words: BTreeSet<&str> = question.iter().map(String::as_str).collect();
        candidates
            .iter()
            .map(|q| surface_lexicon(q).iter().filter(|w| words.contains(w.as_str())).count() as f64)
            .collect()
    }
}

/// Index and score of the best candidate under `ranker`: highest score,
/// then fewer edges, then smallest canonical key.
pub fn select(
    ranker: &dyn Ranker,
    question: &[String],
    candidates: &[QueryGraph],
) -> Result<(usize, f64), PipelineError> {
    if candidates.is_empty() {
        return Err(PipelineError::EmptyCandidates);
    }
    let scores = ranker.score(question, candidates);
    let keys: Vec<String> = candidates.iter().map(QueryGraph::canonical_key).collect();
    let best = (0..candidates.len())
        .min_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(candidates[a].edges().len().cmp(&candidates[b].edges().len()))
                .then(keys[a].cmp(&keys[b]))
        })
        .unwrap();
    Ok((best, scores[best]))
}

/// The baseline ranker's choice.
pub fn rank_baseline<'a>(question: &[String], candidates: &'a [QueryGraph]) -> Result<&'a QueryGraph, PipelineError> {
    select(&OverlapRanker, question, candidates).map(|(i, _)| &candidates[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_split_into_words() {
        let mut s = BTreeSet::new();
        split_name("http://kb/resource/Barack_Obama", &mut s);
        assert_eq!(s, ["barack", "obama"].iter().map(|w| w.to_string()).collect());
    }

    #[test]
    fn question_words_drop_punctuation() {
        assert_eq!(question_words("What is the height of Tovu?"), ["what", "is", "the", "height", "of", "tovu"]);
        assert_eq!(question_words("greater than 2.5 ?"), ["greater", "than", "2.5"]);
    }
}
