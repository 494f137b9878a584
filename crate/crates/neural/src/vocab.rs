//! Question preprocessing and the word vocabulary.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::ModelError;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const ENTITY: &str = "<e>";
pub const NUMBER: &str = "<n>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Entity,
    Number,
}

/// A mention span in character offsets, end exclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub kind: MentionKind,
}

/// Lowercased whitespace tokens with every mention collapsed to `<e>` or
/// `<n>`.
pub fn preprocess(question: &str, mentions: &[Mention]) -> Result<Vec<String>, ModelError> {
    let chars: Vec<char> = question.chars().collect();
    let mut spans = mentions.to_vec();
    spans.sort_by_key(|m| (m.start, m.end));
    let mut out = Vec::new();
    let mut pos = 0;
    let push_text = |out: &mut Vec<String>, from: usize, to: usize| {
        let s: String = chars[from..to].iter().collect();
        out.extend(s.split_whitespace().map(str::to_lowercase));
    };
    for m in &spans {
        if m.start >= m.end || m.end > chars.len() {
            return Err(ModelError::Mention(format!("span {}..{} out of range", m.start, m.end)));
        }
        if m.start < pos {
            return Err(ModelError::Mention(format!("span {}..{} overlaps another mention", m.start, m.end)));
        }
        push_text(&mut out, pos, m.start);
        out.push(match m.kind {
            MentionKind::Entity => ENTITY,
            MentionKind::Number => NUMBER,
        }
        .to_string());
        pos = m.end;
    }
    push_text(&mut out, pos, chars.len());
    Ok(out)
}

/// Token table. The four special tokens always occupy ids 0..4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Specials followed by the distinct corpus tokens in sorted order.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a [String]>) -> Self {
        let words: BTreeSet<&str> = corpus.into_iter().flatten().map(String::as_str).collect();
        let mut tokens: Vec<String> = [PAD, UNK, ENTITY, NUMBER].iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().filter(|w| ![PAD, UNK, ENTITY, NUMBER].contains(w)).map(String::from));
        Self::from_tokens(tokens).expect("built vocabulary is well formed")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, String> {
        if tokens.len() < 4 || tokens[..4] != [PAD, UNK, ENTITY, NUMBER] {
            return Err("vocabulary must start with the special tokens".into());
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(format!("duplicate vocabulary token {t}"));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Ids for a token sequence, unknown words mapped to `<unk>`. An empty
    /// question becomes a single `<pad>`.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        if tokens.is_empty() {
            return vec![0];
        }
        tokens.iter().map(|t| self.get(t).unwrap_or(1)).collect()
    }
}
