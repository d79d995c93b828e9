//! Accuracy metrics, a synthetic problem grammar, the cross-validation
//! driver and a seeded noisy-ensemble generator for voting studies.

pub mod cv;
pub mod ensemble;
pub mod metrics;
pub mod synthetic;

pub use cv::{
    run_cv, run_cv_with, run_k_grid, to_original_frame, train_solver, CvConfig, EvalReport, FoldReport, Learner,
    ModelSpec, OracleLearner, OraclePredictor, Predictor, ProblemResult, Sample, SolverLearner, VariantSource,
};
pub use metrics::{equation_accuracy, equation_correct, value_accuracy, value_correct};
pub use synthetic::synthetic_corpus;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] mwp_core::corpus::CorpusError),
    #[error("cannot split corpus: {0}")]
    Split(#[from] mwp_core::corpus::SplitError),
    #[error("record {id}: {reason}")]
    Record { id: String, reason: String },
    #[error("fold {fold} has no training problems")]
    EmptyTrain { fold: usize },
    #[error(transparent)]
    Model(#[from] mwp_model::ModelError),
}
