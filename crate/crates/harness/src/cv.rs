//! Group-cohesive k-fold cross-validation with optional variant
//! augmentation and voting.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use mwp_core::corpus::{make_splits, validate_corpus, ProblemRecord, SplitMode, VariationType};
use mwp_core::expr::parse_equation;
use mwp_core::quantity::{reframe, tag_quantities, values};
use mwp_core::variants::{generate_offline, variant_records, VariantCounts};
use mwp_core::voting::vote;
use mwp_model::{fit, Example, SolverConfig, SolverModel, TrainConfig, Vocab};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{equation_correct, value_correct};
use crate::HarnessError;

/// Model dimensions; the vocabulary is built per fold from its training
/// samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub d: usize,
    pub h: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    pub d_ff: usize,
    pub max_rel: usize,
    pub dropout: f64,
    pub max_len: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            d: 64,
            h: 4,
            n_enc: 2,
            n_dec: 2,
            d_ff: 128,
            max_rel: 8,
            dropout: 0.1,
            max_len: 96,
        }
    }
}

impl ModelSpec {
    pub fn solver_config(&self, vocab: &Vocab) -> SolverConfig {
        SolverConfig {
            d: self.d,
            h: self.h,
            n_enc: self.n_enc,
            n_dec: self.n_dec,
            d_ff: self.d_ff,
            max_rel: self.max_rel,
            dropout: self.dropout,
            max_len: self.max_len,
            vocab: vocab.tokens().to_vec(),
        }
    }
}

/// Where variants of a problem come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantSource {
    /// The rule-based generator, seeded from the run seed.
    Offline,
    /// Variant records already in the corpus, in file order.
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    /// Variants per problem and family; all zero disables augmentation.
    pub variants: VariantCounts,
    pub source: VariantSource,
    pub voting: bool,
    pub seed: u64,
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Run folds on the rayon pool.
    pub parallel: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            variants: VariantCounts::new(0, 0, 0),
            source: VariantSource::Offline,
            voting: false,
            seed: 0,
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            parallel: true,
        }
    }
}

/// A tagged training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tagged_text: String,
    pub tagged_equation: String,
}

impl Sample {
    pub fn from_record(r: &ProblemRecord) -> Result<Self, HarnessError> {
        let (eq, _) = r.aligned().map_err(|e| HarnessError::Record {
            id: r.id.clone(),
            reason: e.to_string(),
        })?;
        Ok(Sample {
            tagged_text: tag_quantities(&r.text).0,
            tagged_equation: eq.to_string(),
        })
    }
}

/// Emits an equation in the tag frame of the record's text.
pub trait Predictor: Sync {
    fn predict(&self, record: &ProblemRecord) -> String;
}

/// Produces a predictor from one fold's training samples.
pub trait Learner: Sync {
    type Model: Predictor + Send;
    /// Returns the predictor and its final training loss.
    fn fit(&self, samples: &[Sample], fold: usize) -> Result<(Self::Model, f64), HarnessError>;
}

impl Predictor for SolverModel {
    fn predict(&self, record: &ProblemRecord) -> String {
        let ids = self.encode_source(&tag_quantities(&record.text).0);
        match self.greedy_decode_ids(&ids) {
            Ok(out) => self.vocab.decode_equation(&out),
            Err(_) => String::new(),
        }
    }
}

/// Trains a fresh solver per fold, seeded from the run seed and fold index.
#[derive(Debug, Clone)]
pub struct SolverLearner {
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub seed: u64,
}

impl SolverLearner {
    pub fn from_config(cfg: &CvConfig) -> Self {
        SolverLearner {
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            seed: cfg.seed,
        }
    }
}

/// Trains a solver on tagged samples with a vocabulary built from them.
/// `on_epoch(epoch, mean loss)` is called after each epoch.
pub fn train_solver(
    samples: &[Sample],
    spec: &ModelSpec,
    train: &TrainConfig,
    seed: u64,
    on_epoch: impl FnMut(usize, f64),
) -> Result<SolverModel, HarnessError> {
    let vocab = Vocab::build(
        samples.iter().map(|s| s.tagged_text.as_str()),
        samples.iter().map(|s| s.tagged_equation.as_str()),
    );
    let mut model = SolverModel::new(spec.solver_config(&vocab), seed)?;
    let mut examples = Vec::with_capacity(samples.len());
    for s in samples {
        let tgt = model.vocab.encode_equation(&s.tagged_equation)?;
        // equations too long to decode are left out
        if tgt.len() <= model.config.max_len {
            examples.push(Example {
                src: model.encode_source(&s.tagged_text),
                tgt,
            });
        }
    }
    let train = TrainConfig { seed, ..train.clone() };
    fit(&mut model, &examples, &train, on_epoch)?;
    Ok(model)
}

impl Learner for SolverLearner {
    type Model = SolverModel;

    fn fit(&self, samples: &[Sample], fold: usize) -> Result<(SolverModel, f64), HarnessError> {
        let seed = self.seed.wrapping_mul(1_000_003).wrapping_add(fold as u64);
        let mut last = f64::NAN;
        let model = train_solver(samples, &self.model, &self.train, seed, |_, loss| last = loss)?;
        Ok((model, last))
    }
}

/// Predicts the gold equation of every record.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, record: &ProblemRecord) -> String {
        record.aligned().map(|(eq, _)| eq.to_string()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleLearner;

impl Learner for OracleLearner {
    type Model = OraclePredictor;

    fn fit(&self, _: &[Sample], _: usize) -> Result<(OraclePredictor, f64), HarnessError> {
        Ok((OraclePredictor, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemResult {
    pub id: String,
    pub fold: usize,
    pub gold_equation: String,
    /// The original-text prediction first, then one per variant, all in the
    /// original tag frame.
    pub candidates: Vec<String>,
    /// Equation scored in the headline metrics.
    pub prediction: String,
    pub tie: bool,
    pub value_correct_without_voting: bool,
    pub value_correct_with_voting: Option<bool>,
    pub equation_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_problems: usize,
    pub train_samples: usize,
    pub test_problems: usize,
    pub equation_accuracy: f64,
    pub value_accuracy: f64,
    pub value_accuracy_without_voting: f64,
    pub value_accuracy_with_voting: Option<f64>,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean over folds.
    pub equation_accuracy: f64,
    /// Mean over folds, with voting when enabled.
    pub value_accuracy: f64,
    pub value_accuracy_without_voting: f64,
    pub value_accuracy_with_voting: Option<f64>,
    pub per_fold: Vec<FoldReport>,
    pub config: CvConfig,
    pub runtime_seconds: f64,
    pub problems: Vec<ProblemResult>,
}

impl EvalReport {
    /// Everything except the wall-clock time.
    pub fn same_metrics(&self, other: &EvalReport) -> bool {
        EvalReport {
            runtime_seconds: 0.0,
            ..self.clone()
        } == EvalReport {
            runtime_seconds: 0.0,
            ..other.clone()
        }
    }

    /// Plain-text table, one row per fold plus the mean.
    pub fn table(&self) -> String {
        let pct = |v: f64| format!("{:.1}", 100.0 * v);
        let opt = |v: Option<f64>| v.map(pct).unwrap_or_else(|| "-".into());
        let mut s = String::new();
        let _ = writeln!(
            s,
            "k={} voting={} folds={} seed={}",
            self.config.variants.total(),
            self.config.voting,
            self.config.folds,
            self.config.seed
        );
        let _ = writeln!(
            s,
            "{:<6} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8}",
            "fold", "train", "test", "eq_acc", "val_acc", "no_vote", "vote"
        );
        for f in &self.per_fold {
            let _ = writeln!(
                s,
                "{:<6} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8}",
                f.fold,
                f.train_samples,
                f.test_problems,
                pct(f.equation_accuracy),
                pct(f.value_accuracy),
                pct(f.value_accuracy_without_voting),
                opt(f.value_accuracy_with_voting)
            );
        }
        let _ = writeln!(
            s,
            "{:<6} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8}",
            "mean",
            "",
            "",
            pct(self.equation_accuracy),
            pct(self.value_accuracy),
            pct(self.value_accuracy_without_voting),
            opt(self.value_accuracy_with_voting)
        );
        s
    }
}

/// Variants of `original`: generated, or taken from `corpus_variants` up to
/// the per-family counts.
fn variants_of(
    original: &ProblemRecord,
    cfg: &CvConfig,
    corpus_variants: &BTreeMap<&str, Vec<&ProblemRecord>>,
) -> Vec<ProblemRecord> {
    if cfg.variants.total() == 0 {
        return Vec::new();
    }
    match cfg.source {
        VariantSource::Offline => variant_records(original, &generate_offline(original, cfg.variants, cfg.seed)),
        VariantSource::Corpus => {
            let mut left: BTreeMap<VariationType, usize> = BTreeMap::new();
            let family = [
                VariationType::PhraseOrder,
                VariationType::EntitySwap,
                VariationType::Distractor,
            ];
            for (t, n) in family.iter().zip(cfg.variants.per_family()) {
                left.insert(*t, n);
            }
            let mut out = Vec::new();
            for v in corpus_variants.get(original.group_id.as_str()).into_iter().flatten() {
                let t = if v.variation_type.is_paraphrase() {
                    VariationType::PhraseOrder
                } else {
                    v.variation_type
                };
                if let Some(n) = left.get_mut(&t).filter(|n| **n > 0) {
                    *n -= 1;
                    out.push((*v).clone());
                }
            }
            out
        }
    }
}

/// A candidate from a variant, moved into the original's tag frame;
/// malformed text is kept as is.
pub fn to_original_frame(prediction: &str, variant: &ProblemRecord, original: &ProblemRecord) -> String {
    match parse_equation(prediction) {
        Ok(eq) => {
            let from = values(&tag_quantities(&variant.text).1);
            let to = tag_quantities(&original.text).1;
            reframe(&eq, &from, &to).to_string()
        }
        Err(_) => prediction.to_string(),
    }
}

fn evaluate_problem<P: Predictor>(
    model: &P,
    original: &ProblemRecord,
    fold: usize,
    cfg: &CvConfig,
    corpus_variants: &BTreeMap<&str, Vec<&ProblemRecord>>,
) -> Result<ProblemResult, HarnessError> {
    let (gold_eq, bindings) = original.aligned().map_err(|e| HarnessError::Record {
        id: original.id.clone(),
        reason: e.to_string(),
    })?;
    let gold_equation = gold_eq.to_string();
    let first = model.predict(original);
    let without = value_correct(&first, &bindings, &original.answer);
    let mut candidates = vec![first.clone()];
    let (prediction, with, tie) = if cfg.voting {
        for v in variants_of(original, cfg, corpus_variants) {
            candidates.push(to_original_frame(&model.predict(&v), &v, original));
        }
        match vote(&candidates) {
            Ok((winner, ballot)) => {
                let w = winner.to_string();
                let ok = value_correct(&w, &bindings, &original.answer);
                (w, Some(ok), ballot.tie)
            }
            Err(_) => (first, Some(false), false),
        }
    } else {
        (first, None, false)
    };
    Ok(ProblemResult {
        id: original.id.clone(),
        fold,
        equation_correct: equation_correct(&prediction, &gold_equation),
        gold_equation,
        candidates,
        prediction,
        tie,
        value_correct_without_voting: without,
        value_correct_with_voting: with,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn run_fold<L: Learner>(
    corpus: &[ProblemRecord],
    test_groups: &HashSet<&str>,
    fold: usize,
    cfg: &CvConfig,
    learner: &L,
    corpus_variants: &BTreeMap<&str, Vec<&ProblemRecord>>,
) -> Result<(FoldReport, Vec<ProblemResult>), HarnessError> {
    let is_original = |r: &&ProblemRecord| r.variation_type == VariationType::Original;
    let train: Vec<&ProblemRecord> = corpus
        .iter()
        .filter(is_original)
        .filter(|r| !test_groups.contains(r.group_id.as_str()))
        .collect();
    let test: Vec<&ProblemRecord> = corpus
        .iter()
        .filter(is_original)
        .filter(|r| test_groups.contains(r.group_id.as_str()))
        .collect();
    if train.is_empty() {
        return Err(HarnessError::EmptyTrain { fold });
    }
    let mut samples = Vec::new();
    for r in &train {
        samples.push(Sample::from_record(r)?);
        for v in variants_of(r, cfg, corpus_variants) {
            samples.push(Sample::from_record(&v)?);
        }
    }
    let (model, final_loss) = learner.fit(&samples, fold)?;
    let results = test
        .iter()
        .map(|r| evaluate_problem(&model, r, fold, cfg, corpus_variants))
        .collect::<Result<Vec<_>, _>>()?;
    let n = results.len().max(1) as f64;
    let count = |f: &dyn Fn(&ProblemResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n;
    let without = count(&|r| r.value_correct_without_voting);
    let with = cfg
        .voting
        .then(|| count(&|r| r.value_correct_with_voting == Some(true)));
    let report = FoldReport {
        fold,
        train_problems: train.len(),
        train_samples: samples.len(),
        test_problems: test.len(),
        equation_accuracy: count(&|r| r.equation_correct),
        value_accuracy: with.unwrap_or(without),
        value_accuracy_without_voting: without,
        value_accuracy_with_voting: with,
        final_loss,
    };
    Ok((report, results))
}

/// Cross-validates the given learner. Folds split whole groups; training
/// uses each training original plus its variants as separate samples;
/// evaluation covers the originals of the held-out groups.
pub fn run_cv_with<L: Learner>(
    corpus: &[ProblemRecord],
    cfg: &CvConfig,
    learner: &L,
) -> Result<EvalReport, HarnessError> {
    let start = Instant::now();
    validate_corpus(corpus)?;
    let plan = make_splits(corpus, SplitMode::Kfold { n_folds: cfg.folds }, cfg.seed)?;
    let mut corpus_variants: BTreeMap<&str, Vec<&ProblemRecord>> = BTreeMap::new();
    for r in corpus.iter().filter(|r| r.variation_type != VariationType::Original) {
        corpus_variants.entry(r.group_id.as_str()).or_default().push(r);
    }
    let fold_groups: Vec<HashSet<&str>> = (0..cfg.folds)
        .map(|f| {
            plan.members(corpus, f)
                .into_iter()
                .map(|i| corpus[i].group_id.as_str())
                .collect()
        })
        .collect();
    let job = |f: usize| run_fold(corpus, &fold_groups[f], f, cfg, learner, &corpus_variants);
    let outcomes: Vec<_> = if cfg.parallel {
        (0..cfg.folds).into_par_iter().map(job).collect()
    } else {
        (0..cfg.folds).map(job).collect()
    };
    let mut per_fold = Vec::new();
    let mut problems = Vec::new();
    for o in outcomes {
        let (f, p) = o?;
        per_fold.push(f);
        problems.extend(p);
    }
    let with = cfg
        .voting
        .then(|| mean(per_fold.iter().map(|f| f.value_accuracy_with_voting.unwrap_or(0.0))));
    Ok(EvalReport {
        equation_accuracy: mean(per_fold.iter().map(|f| f.equation_accuracy)),
        value_accuracy: mean(per_fold.iter().map(|f| f.value_accuracy)),
        value_accuracy_without_voting: mean(per_fold.iter().map(|f| f.value_accuracy_without_voting)),
        value_accuracy_with_voting: with,
        per_fold,
        config: cfg.clone(),
        runtime_seconds: start.elapsed().as_secs_f64(),
        problems,
    })
}

/// Cross-validates freshly trained solvers.
pub fn run_cv(corpus: &[ProblemRecord], cfg: &CvConfig) -> Result<EvalReport, HarnessError> {
    run_cv_with(corpus, cfg, &SolverLearner::from_config(cfg))
}

/// One report per total variant count, spread over the families.
pub fn run_k_grid(corpus: &[ProblemRecord], cfg: &CvConfig, ks: &[usize]) -> Result<Vec<EvalReport>, HarnessError> {
    ks.iter()
        .map(|&k| {
            let cell = CvConfig {
                variants: VariantCounts::split(k),
                ..cfg.clone()
            };
            run_cv(corpus, &cell)
        })
        .collect()
}
