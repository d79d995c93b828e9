//! Closed-vocabulary tokenization for tagged problem text and equations.

use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use regex::Regex;

use crate::ModelError;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const SPECIALS: [&str; 4] = [PAD, UNK, BOS, EOS];
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;

static TEXT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[Q[1-9][0-9]*\]|[A-Za-z]+|[0-9]+(?:\.[0-9]+)?|\S").unwrap());
static EQ_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[Q[1-9][0-9]*\]|[0-9]+(?:\.[0-9]+)?|[xX=+\-*/()]|\S").unwrap());

/// Lowercased words, numbers, tags and single punctuation marks.
pub fn text_tokens(text: &str) -> Vec<String> {
    TEXT_RE
        .find_iter(text)
        .map(|m| {
            let t = m.as_str();
            if t.starts_with("[Q") {
                t.to_string()
            } else {
                t.to_lowercase()
            }
        })
        .collect()
}

pub fn equation_tokens(equation: &str) -> Vec<String> {
    EQ_RE
        .find_iter(equation)
        .map(|m| match m.as_str() {
            "X" => "x".to_string(),
            t => t.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    /// Specials first, then every token seen, sorted.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, equations: impl IntoIterator<Item = &'a str>) -> Self {
        let mut seen = BTreeSet::new();
        for t in texts {
            seen.extend(text_tokens(t));
        }
        for e in equations {
            seen.extend(equation_tokens(e));
        }
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(seen.into_iter().filter(|t| !SPECIALS.contains(&t.as_str())));
        Self::from_tokens(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Unknown words map to `<unk>`.
    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        text_tokens(text).iter().map(|t| self.id(t).unwrap_or(UNK_ID)).collect()
    }

    /// `<s> tokens </s>`; an equation token outside the vocabulary is an error.
    pub fn encode_equation(&self, equation: &str) -> Result<Vec<usize>, ModelError> {
        let mut ids = vec![BOS_ID];
        for t in equation_tokens(equation) {
            ids.push(self.id(&t).ok_or(ModelError::UnknownToken(t))?);
        }
        ids.push(EOS_ID);
        Ok(ids)
    }

    /// Concatenates tokens up to the first `</s>`, skipping specials.
    pub fn decode_equation(&self, ids: &[usize]) -> String {
        ids.iter()
            .take_while(|&&i| i != EOS_ID)
            .filter(|&&i| i >= SPECIALS.len())
            .map(|&i| self.token(i))
            .collect()
    }
}
