//! Linguistic variants of seed problems: prompt construction, validation,
//! a deterministic rule-based generator and a chat-completion client.

mod offline;
mod remote;

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ProblemRecord, VariationType};
use crate::quantity::{tag_quantities, values, TaggedProblem};

pub use offline::generate_offline;
pub use remote::{generate_remote, split_response, RemoteConfig};

pub const SYSTEM_PROMPT: &str =
    "You are a Math Word Problem rephraser that generates variations of math word problem statements.";

/// Instruction text per prompt family; the count goes between the halves.
const FAMILIES: [(&str, VariationType); 3] = [
    (
        "paraphrased variations of the problem by changing the sentence structure.",
        VariationType::PhraseOrder,
    ),
    (
        "paraphrased variations of the problem by changing the named entities and objects.",
        VariationType::EntitySwap,
    ),
    (
        "paraphrased variations of the problem with irrelevant numerical information.",
        VariationType::Distractor,
    ),
];

pub const MIN_K: usize = 5;
pub const MAX_K: usize = 15;

/// Variants requested per family: sentence structure, entities, distractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantCounts {
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
}

impl VariantCounts {
    pub fn new(k1: usize, k2: usize, k3: usize) -> Self {
        VariantCounts { k1, k2, k3 }
    }

    /// Spreads `k` over the three families, remainder to the first ones.
    pub fn split(k: usize) -> Self {
        let base = k / 3;
        let rem = k % 3;
        VariantCounts {
            k1: base + (rem > 0) as usize,
            k2: base + (rem > 1) as usize,
            k3: base,
        }
    }

    pub fn total(&self) -> usize {
        self.k1 + self.k2 + self.k3
    }

    pub fn per_family(&self) -> [usize; 3] {
        [self.k1, self.k2, self.k3]
    }

    pub fn check_bounds(&self) -> Result<(), VariantError> {
        let k = self.total();
        if (MIN_K..=MAX_K).contains(&k) {
            Ok(())
        } else {
            Err(VariantError::KOutOfRange(k))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRequest {
    pub seed: ProblemRecord,
    pub counts: VariantCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub seed_id: String,
    pub seed_text: String,
    pub counts: VariantCounts,
    pub system_text: String,
    /// One prompt per family, in the order of [`VariantCounts::per_family`].
    pub user_texts: Vec<String>,
}

impl PromptSpec {
    pub fn family_types() -> [VariationType; 3] {
        FAMILIES.map(|(_, t)| t)
    }
}

pub fn build_prompts(req: &VariantRequest) -> Result<PromptSpec, VariantError> {
    req.counts.check_bounds()?;
    let user_texts = FAMILIES
        .iter()
        .zip(req.counts.per_family())
        .map(|((instruction, _), k)| format!("Generate {k} {instruction}\n\n{}", req.seed.text))
        .collect();
    Ok(PromptSpec {
        seed_id: req.seed.id.clone(),
        seed_text: req.seed.text.clone(),
        counts: req.counts,
        system_text: SYSTEM_PROMPT.to_string(),
        user_texts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub text: String,
    pub variation_type: VariationType,
    pub valid: bool,
    pub rejection_reason: Option<String>,
}

/// A requested variant that could not be produced at all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub variation_type: VariationType,
    pub reason: String,
}

/// `variants.len() + shortfalls.len()` equals the number requested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSet {
    pub seed_id: String,
    pub variants: Vec<Variant>,
    pub shortfalls: Vec<Shortfall>,
}

impl VariantSet {
    pub fn valid(&self) -> impl Iterator<Item = &Variant> {
        self.variants.iter().filter(|v| v.valid)
    }

    pub fn rejection_count(&self) -> usize {
        self.shortfalls.len()
    }
}

#[derive(Debug, Error)]
pub enum VariantError {
    #[error("k = k1 + k2 + k3 = {0} is outside [{MIN_K}, {MAX_K}]")]
    KOutOfRange(usize),
    #[error("environment variable {0} with the API key is not set")]
    MissingCredentials(String),
    #[error("request failed after {attempts} attempts: {message}")]
    Network { attempts: u32, message: String },
    #[error("endpoint answered HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("archiving response: {0}")]
    Archive(#[from] std::io::Error),
}

fn multiset(v: Vec<BigRational>) -> BTreeMap<BigRational, usize> {
    let mut m = BTreeMap::new();
    for x in v {
        *m.entry(x).or_insert(0) += 1;
    }
    m
}

fn normalized(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Checks a candidate against the seed's quantity multiset.
///
/// Paraphrase types must keep it exactly, distractors must strictly extend
/// it. Returns `(valid, reason)` with a reason only for invalid candidates.
pub fn validate_variant(seed: &TaggedProblem, candidate: &str, ty: VariationType) -> (bool, Option<String>) {
    let reject = |r: &str| (false, Some(r.to_string()));
    if candidate.trim().is_empty() {
        return reject("empty text");
    }
    if normalized(candidate) == normalized(&seed.untagged()) {
        return reject("identical to seed");
    }
    if ty == VariationType::Original {
        return reject("not a variant type");
    }
    let mut have = multiset(values(&tag_quantities(candidate).1));
    let want = multiset(seed.values());
    if ty == VariationType::Inverted {
        return (true, None);
    }
    for (v, n) in &want {
        match have.get_mut(v) {
            Some(m) if *m >= *n => *m -= *n,
            _ => return reject("quantity lost"),
        }
    }
    let extra = have.values().sum::<usize>();
    match (ty, extra) {
        (VariationType::Distractor, 0) => reject("no added quantity"),
        (VariationType::Distractor, _) => (true, None),
        (_, 0) => (true, None),
        _ => reject("unexpected extra quantity"),
    }
}

/// Records for the valid variants, in the seed's group. The equation is the
/// seed equation with its tags replaced by the seed's values, so it holds
/// for the variant text whatever order the quantities appear in.
pub fn variant_records(seed: &ProblemRecord, set: &VariantSet) -> Vec<ProblemRecord> {
    let equation = match seed.parsed_equation() {
        Ok(eq) => eq.substitute(&values(&tag_quantities(&seed.text).1)).to_string(),
        Err(_) => seed.equation.clone(),
    };
    set.valid()
        .enumerate()
        .map(|(i, v)| ProblemRecord {
            id: format!("{}-v{}", seed.id, i + 1),
            text: v.text.clone(),
            equation: equation.clone(),
            answer: seed.answer.clone(),
            group_id: seed.group_id.clone(),
            variation_type: v.variation_type,
        })
        .collect()
}
