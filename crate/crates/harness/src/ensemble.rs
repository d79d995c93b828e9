//! Seeded candidate ensembles with a controlled per-candidate accuracy.

use mwp_core::voting::VoteProblem;
use mwp_core::BigRational;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Equivalent spellings of the gold equation `x = [Q1] + [Q2]`.
pub const CORRECT_FORMS: [&str; 4] = ["x=[Q1]+[Q2]", "x=[Q2]+[Q1]", "x=([Q1]+[Q2])", "x=[Q1]+[Q2]+0"];
/// Equivalent spellings of one wrong equation.
pub const WRONG_FORMS: [&str; 3] = ["x=[Q1]-[Q2]", "x=-[Q2]+[Q1]", "x=([Q1]-[Q2])"];

/// `n` problems with `k + 1` candidates each; every candidate is
/// independently correct with probability `p`, otherwise it is the one
/// wrong equation. Candidate 0 stands for the original-text prediction.
pub fn noisy_ensemble(n: usize, k: usize, p: f64, seed: u64) -> Vec<VoteProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a: i64 = rng.random_range(2..50);
            let b: i64 = rng.random_range(2..50);
            let candidates = (0..=k)
                .map(|_| {
                    let forms: &[&str] = if rng.random_bool(p) {
                        &CORRECT_FORMS
                    } else {
                        &WRONG_FORMS
                    };
                    forms.choose(&mut rng).unwrap().to_string()
                })
                .collect();
            VoteProblem {
                candidates,
                original: 0,
                bindings: vec![BigRational::from_integer(a.into()), BigRational::from_integer(b.into())],
                gold: BigRational::from_integer((a + b).into()),
            }
        })
        .collect()
}
