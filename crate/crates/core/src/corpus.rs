//! Problem corpora: JSONL loading and saving, validation, statistics, splits.
//!
//! One JSON object per line with the keys `id`, `text`, `equation`,
//! `answer`, `group_id` and `variation_type`. Blank lines and lines starting
//! with `#` are skipped on load. `answer` is a JSON number or a string
//! holding a decimal or `p/q`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{extract_template, parse_equation, Equation, Expr, ParseError};
use crate::quantity::{align, tag_quantities, values};
use crate::rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationType {
    Original,
    PhraseOrder,
    EntitySwap,
    Distractor,
    Inverted,
    LlmParaphrase,
}

impl VariationType {
    pub const ALL: [VariationType; 6] = [
        VariationType::Original,
        VariationType::PhraseOrder,
        VariationType::EntitySwap,
        VariationType::Distractor,
        VariationType::Inverted,
        VariationType::LlmParaphrase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariationType::Original => "original",
            VariationType::PhraseOrder => "phrase_order",
            VariationType::EntitySwap => "entity_swap",
            VariationType::Distractor => "distractor",
            VariationType::Inverted => "inverted",
            VariationType::LlmParaphrase => "llm_paraphrase",
        }
    }

    /// Variants whose quantity multiset must equal the seed's.
    pub fn is_paraphrase(self) -> bool {
        matches!(
            self,
            VariationType::PhraseOrder | VariationType::EntitySwap | VariationType::LlmParaphrase
        )
    }
}

impl fmt::Display for VariationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemRecord {
    pub id: String,
    pub text: String,
    pub equation: String,
    #[serde(with = "answer_serde")]
    pub answer: BigRational,
    pub group_id: String,
    pub variation_type: VariationType,
}

impl ProblemRecord {
    /// An original record (its own group).
    pub fn original(id: &str, text: &str, equation: &str, answer: BigRational) -> Self {
        ProblemRecord {
            id: id.to_string(),
            text: text.to_string(),
            equation: equation.to_string(),
            answer,
            group_id: id.to_string(),
            variation_type: VariationType::Original,
        }
    }

    pub fn parsed_equation(&self) -> Result<Equation, ParseError> {
        parse_equation(&self.equation)
    }

    /// Equation with literals replaced by the text's quantity tags, plus the
    /// tag values.
    pub fn aligned(&self) -> Result<(Equation, Vec<BigRational>), ParseError> {
        let (_, quantities) = tag_quantities(&self.text);
        let eq = align(&self.parsed_equation()?, &quantities);
        Ok((eq, values(&quantities)))
    }

    /// Checks the single-record invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err("empty text".into());
        }
        let eq = self
            .parsed_equation()
            .map_err(|e| format!("equation {:?} does not parse: {e}", self.equation))?;
        if let Some(rhs) = eq.closed_form() {
            let (_, quantities) = tag_quantities(&self.text);
            let v = rhs
                .evaluate(&values(&quantities))
                .map_err(|e| format!("equation cannot be evaluated: {e}"))?;
            let (v, a) = (rational::to_f64(&v), rational::to_f64(&self.answer));
            if !rational::answer_matches(v, a) {
                return Err(format!("equation evaluates to {v} but answer is {a}"));
            }
        }
        if self.variation_type == VariationType::Original && self.group_id != self.id {
            return Err(format!("original record has group_id {:?}", self.group_id));
        }
        Ok(())
    }
}

mod answer_serde {
    use super::*;
    use serde::de::Error;
    use serde::{Deserializer, Serializer};
    use serde_json::Value;

    /// Integers that fit in an `i64` are written as JSON numbers, everything
    /// else as an exact string.
    pub fn serialize<S: Serializer>(v: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        match v.is_integer().then(|| v.to_integer().to_i64()).flatten() {
            Some(i) => s.serialize_i64(i),
            None => s.serialize_str(&rational::format_rational(v)),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let text = match Value::deserialize(d)? {
            Value::Number(n) => n.to_string(),
            Value::String(s) => s,
            other => {
                return Err(D::Error::custom(format!(
                    "answer must be a number or string, got {other}"
                )))
            }
        };
        rational::parse_rational(&text).ok_or_else(|| D::Error::custom(format!("bad answer {text:?}")))
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {id}: {reason}")]
    Invariant { id: String, reason: String },
}

/// Parses JSONL text and checks every invariant.
pub fn parse_corpus(content: &str) -> Result<Vec<ProblemRecord>, CorpusError> {
    let mut records = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: ProblemRecord = serde_json::from_str(trimmed).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    validate_corpus(&records)?;
    Ok(records)
}

/// Record invariants, unique ids, and one original per group.
pub fn validate_corpus(records: &[ProblemRecord]) -> Result<(), CorpusError> {
    let mut ids = HashSet::new();
    let mut originals: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for r in records {
        r.validate().map_err(|reason| CorpusError::Invariant {
            id: r.id.clone(),
            reason,
        })?;
        if !ids.insert(r.id.as_str()) {
            return Err(CorpusError::Invariant {
                id: r.id.clone(),
                reason: "duplicate id".into(),
            });
        }
        let entry = originals.entry(&r.group_id).or_insert((0, &r.id));
        if r.variation_type == VariationType::Original {
            entry.0 += 1;
        }
    }
    for (group, (count, first)) in originals {
        if count != 1 {
            return Err(CorpusError::Invariant {
                id: first.to_string(),
                reason: format!("group {group:?} has {count} original records, expected 1"),
            });
        }
    }
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<ProblemRecord>, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&content)
}

pub fn corpus_to_string(records: &[ProblemRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Writes `header` lines (each prefixed with `# `) followed by the records.
pub fn save_corpus(path: impl AsRef<Path>, records: &[ProblemRecord], header: &[String]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = String::new();
    for h in header {
        out.push_str("# ");
        out.push_str(h);
        out.push('\n');
    }
    out.push_str(&corpus_to_string(records));
    fs::write(path, out).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_problems: usize,
    pub n_unique_templates: usize,
    pub avg_operators: f64,
    pub avg_quantities_per_problem: f64,
    pub avg_quantities_per_equation: f64,
    pub n_problems_with_constants: usize,
}

/// Statistics in the shape of a dataset comparison table.
///
/// Operators are counted on the equation as written. Templates, quantities
/// per equation and constants are measured on the equation after aligning
/// its literals to the text's quantity tags.
pub fn corpus_stats(records: &[ProblemRecord]) -> Result<CorpusStats, ParseError> {
    let mut templates = BTreeSet::new();
    let (mut ops, mut text_q, mut eq_q, mut with_constants) = (0usize, 0usize, 0usize, 0usize);
    for r in records {
        let raw = r.parsed_equation()?;
        ops += raw.operator_count();
        let (_, quantities) = tag_quantities(&r.text);
        text_q += quantities.len();
        let aligned = align(&raw, &quantities);
        let mut has_constant = false;
        aligned.for_each_leaf(&mut |leaf| match leaf {
            Expr::Quant(_) => eq_q += 1,
            Expr::Number(_) => has_constant = true,
            _ => {}
        });
        with_constants += has_constant as usize;
        templates.insert(extract_template(&aligned));
    }
    let n = records.len();
    let avg = |total: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    Ok(CorpusStats {
        n_problems: n,
        n_unique_templates: templates.len(),
        avg_operators: avg(ops),
        avg_quantities_per_problem: avg(text_q),
        avg_quantities_per_equation: avg(eq_q),
        n_problems_with_constants: with_constants,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Kfold { n_folds: usize },
    Ratio { train: f64, val: f64, test: f64 },
}

impl SplitMode {
    pub fn n_partitions(&self) -> usize {
        match self {
            SplitMode::Kfold { n_folds } => *n_folds,
            SplitMode::Ratio { .. } => 3,
        }
    }
}

/// Partition index 0/1/2 means train/val/test in ratio mode, the fold
/// number in k-fold mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

impl SplitPlan {
    /// Indices into `records` assigned to partition `p`, in corpus order.
    pub fn members(&self, records: &[ProblemRecord], p: usize) -> Vec<usize> {
        (0..records.len())
            .filter(|&i| self.assignments.get(&records[i].id) == Some(&p))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("cannot split an empty corpus")]
    Empty,
    #[error("ratio components must be non-negative and sum to 1.0 (got {0})")]
    BadRatio(f64),
    #[error("k-fold needs at least 2 folds and no more folds than groups ({groups} groups, {folds} folds)")]
    BadFolds { folds: usize, groups: usize },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
}

/// Assigns whole groups to partitions.
///
/// The sorted group ids are shuffled by a ChaCha8 stream seeded with `seed`;
/// k-fold deals them round-robin, ratio mode cuts the shuffled list at the
/// rounded group counts.
pub fn make_splits(records: &[ProblemRecord], mode: SplitMode, seed: u64) -> Result<SplitPlan, SplitError> {
    if records.is_empty() {
        return Err(SplitError::Empty);
    }
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(SplitError::DuplicateId(r.id.clone()));
        }
    }
    let mut groups: Vec<&str> = records
        .iter()
        .map(|r| r.group_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let g = groups.len();

    let group_part: BTreeMap<&str, usize> = match mode {
        SplitMode::Kfold { n_folds } => {
            if n_folds < 2 || n_folds > g {
                return Err(SplitError::BadFolds {
                    folds: n_folds,
                    groups: g,
                });
            }
            groups.iter().enumerate().map(|(i, id)| (*id, i % n_folds)).collect()
        }
        SplitMode::Ratio { train, val, test } => {
            let sum = train + val + test;
            if train < 0.0 || val < 0.0 || test < 0.0 || (sum - 1.0).abs() > 1e-9 {
                return Err(SplitError::BadRatio(sum));
            }
            let n_train = ((train * g as f64).round() as usize).min(g);
            let n_val = ((val * g as f64).round() as usize).min(g - n_train);
            groups
                .iter()
                .enumerate()
                .map(|(i, id)| {
                    let p = if i < n_train {
                        0
                    } else if i < n_train + n_val {
                        1
                    } else {
                        2
                    };
                    (*id, p)
                })
                .collect()
        }
    };
    let assignments = records
        .iter()
        .map(|r| (r.id.clone(), group_part[r.group_id.as_str()]))
        .collect();
    Ok(SplitPlan {
        mode,
        seed,
        assignments,
    })
}
