use mwp_core::corpus::ProblemRecord;
use mwp_core::variants::{generate_offline, variant_records, VariantCounts};
use mwp_core::voting::vote_accuracy_delta;
use mwp_harness::ensemble::noisy_ensemble;
use mwp_harness::*;
use mwp_model::{Schedule, TrainConfig};

fn tiny_cv() -> CvConfig {
    CvConfig {
        folds: 5,
        model: ModelSpec {
            d: 16,
            h: 2,
            n_enc: 1,
            n_dec: 1,
            d_ff: 16,
            max_rel: 4,
            dropout: 0.1,
            max_len: 64,
        },
        train: TrainConfig {
            epochs: 1,
            schedule: Schedule::Fixed { lr: 1e-3 },
            ..TrainConfig::default()
        },
        ..CvConfig::default()
    }
}

#[test]
fn oracle_predictor_scores_one() {
    let corpus = synthetic_corpus(60, 3);
    for (k, voting) in [(0, false), (6, true)] {
        let cfg = CvConfig {
            variants: VariantCounts::split(k),
            voting,
            ..tiny_cv()
        };
        let r = run_cv_with(&corpus, &cfg, &OracleLearner).unwrap();
        assert_eq!(r.value_accuracy, 1.0);
        assert_eq!(r.equation_accuracy, 1.0);
        if voting {
            assert!(r.problems.iter().all(|p| p.candidates.len() == k + 1));
            assert_eq!(r.value_accuracy_with_voting, Some(1.0));
        }
    }
}

#[test]
fn oracle_with_corpus_variants() {
    let originals = synthetic_corpus(20, 4);
    let mut corpus = originals.clone();
    for r in &originals {
        corpus.extend(variant_records(r, &generate_offline(r, VariantCounts::new(1, 1, 1), 9)));
    }
    let cfg = CvConfig {
        variants: VariantCounts::new(1, 1, 1),
        source: VariantSource::Corpus,
        voting: true,
        ..tiny_cv()
    };
    let r = run_cv_with(&corpus, &cfg, &OracleLearner).unwrap();
    assert_eq!(r.value_accuracy, 1.0);
    assert_eq!(r.problems.len(), 20);
    assert!(r.per_fold.iter().all(|f| f.train_samples > f.train_problems));
}

#[test]
fn fold_arithmetic() {
    let corpus = synthetic_corpus(50, 5);
    let r = run_cv_with(&corpus, &tiny_cv(), &OracleLearner).unwrap();
    assert_eq!(r.per_fold.len(), 5);
    assert!(r
        .per_fold
        .iter()
        .all(|f| f.test_problems == 10 && f.train_problems == 40));
    let mut ids: Vec<&str> = r.problems.iter().map(|p| p.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 50);
}

#[test]
fn malformed_corpus_is_rejected() {
    let mut corpus = synthetic_corpus(10, 5);
    corpus.push(ProblemRecord {
        group_id: "missing".into(),
        ..corpus[0].clone()
    });
    assert!(run_cv_with(&corpus, &tiny_cv(), &OracleLearner).is_err());
}

#[test]
fn trained_runs_are_reproducible_and_voting_degenerates_at_k0() {
    let corpus = synthetic_corpus(30, 6);
    let cfg = tiny_cv();
    let a = run_cv(&corpus, &cfg).unwrap();
    let b = run_cv(&corpus, &cfg).unwrap();
    assert!(a.same_metrics(&b));
    let voted = run_cv(&corpus, &CvConfig { voting: true, ..cfg }).unwrap();
    assert_eq!(voted.value_accuracy_with_voting, Some(a.value_accuracy));
    assert!((0.0..=1.0).contains(&a.value_accuracy));
    let json = serde_json::to_string(&a).unwrap();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert!(back.same_metrics(&a));
    assert!(a.table().lines().count() == 8);
}

#[test]
fn ensemble_degenerate_cases() {
    // every candidate correct or every candidate wrong: voting changes nothing
    for p in [0.0, 1.0] {
        let (without, with) = vote_accuracy_delta(&noisy_ensemble(50, 4, p, 1));
        assert_eq!(without, with);
        assert_eq!(with, p);
    }
}
