//! Majority voting over canonicalized candidate equations.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{answer_matches, canonicalize, parse_equation, Equation, FINGERPRINT_POINTS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub raw: String,
    pub parse_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub fingerprint: [u64; FINGERPRINT_POINTS],
    /// Smallest structural key among the members; the tie-break key.
    pub structural_key: String,
    pub count: usize,
    /// First-seen member, printed.
    pub representative: String,
    /// Indices into [`Ballot::candidates`].
    pub members: Vec<usize>,
}

/// Full tally of one vote. Buckets are listed in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub candidates: Vec<Candidate>,
    pub buckets: Vec<Bucket>,
    /// Index of the winning bucket.
    pub winner: usize,
    /// More than one bucket reached the top count.
    pub tie: bool,
}

impl Ballot {
    pub fn winning_bucket(&self) -> &Bucket {
        &self.buckets[self.winner]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VoteError {
    #[error("no candidates to vote on")]
    NoCandidates,
    #[error("all {0} candidates are malformed")]
    AllMalformed(usize),
}

/// Elects the most frequent equivalence class.
///
/// Malformed candidates are listed in the ballot but not counted. Ties go to
/// the bucket with the lexicographically smallest structural key, which does
/// not depend on candidate order.
pub fn vote<S: AsRef<str>>(candidates: &[S]) -> Result<(Equation, Ballot), VoteError> {
    if candidates.is_empty() {
        return Err(VoteError::NoCandidates);
    }
    let mut entries = Vec::with_capacity(candidates.len());
    let mut buckets: Vec<Bucket> = Vec::new();
    let mut reps: Vec<Equation> = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        let raw = c.as_ref();
        let parsed = parse_equation(raw).ok();
        entries.push(Candidate {
            raw: raw.to_string(),
            parse_ok: parsed.is_some(),
        });
        let Some(eq) = parsed else { continue };
        let form = canonicalize(&eq);
        match buckets.iter_mut().find(|b| b.fingerprint == form.fingerprint) {
            Some(b) => {
                b.count += 1;
                b.members.push(i);
                if form.structural_key < b.structural_key {
                    b.structural_key = form.structural_key;
                }
            }
            None => {
                buckets.push(Bucket {
                    fingerprint: form.fingerprint,
                    structural_key: form.structural_key,
                    count: 1,
                    representative: eq.to_string(),
                    members: vec![i],
                });
                reps.push(eq);
            }
        }
    }
    if buckets.is_empty() {
        return Err(VoteError::AllMalformed(candidates.len()));
    }
    let top = buckets.iter().map(|b| b.count).max().unwrap_or(0);
    let winner = (0..buckets.len())
        .filter(|&i| buckets[i].count == top)
        .min_by(|&a, &b| buckets[a].structural_key.cmp(&buckets[b].structural_key))
        .expect("at least one bucket");
    let tie = buckets.iter().filter(|b| b.count == top).count() > 1;
    let eq = reps.swap_remove(winner);
    Ok((
        eq,
        Ballot {
            candidates: entries,
            buckets,
            winner,
            tie,
        },
    ))
}

/// Candidates for one problem, all in the tag frame of `bindings`.
#[derive(Debug, Clone)]
pub struct VoteProblem {
    pub candidates: Vec<String>,
    /// Index of the prediction made on the original problem text.
    pub original: usize,
    pub bindings: Vec<BigRational>,
    pub gold: BigRational,
}

fn scores(eq: &str, p: &VoteProblem) -> bool {
    parse_equation(eq).is_ok_and(|e| answer_matches(&e, &p.bindings, &p.gold))
}

/// Value accuracy of the original-problem prediction alone and of the voted
/// winner, as `(without, with)`.
pub fn vote_accuracy_delta(problems: &[VoteProblem]) -> (f64, f64) {
    if problems.is_empty() {
        return (0.0, 0.0);
    }
    let (mut without, mut with) = (0usize, 0usize);
    for p in problems {
        if p.candidates.get(p.original).is_some_and(|c| scores(c, p)) {
            without += 1;
        }
        if let Ok((eq, _)) = vote(&p.candidates) {
            if answer_matches(&eq, &p.bindings, &p.gold) {
                with += 1;
            }
        }
    }
    let n = problems.len() as f64;
    (without as f64 / n, with as f64 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    #[test]
    fn commuted_sums_share_a_bucket() {
        let (eq, ballot) = vote(&["x=[Q1]+[Q2]", "x=[Q2]+[Q1]", "x=[Q1]-[Q2]"]).unwrap();
        assert_eq!(eq.to_string(), "x=[Q1]+[Q2]");
        assert_eq!(ballot.winning_bucket().count, 2);
        assert!(!ballot.tie);
    }

    #[test]
    fn folded_constants_share_a_bucket() {
        let (_, ballot) = vote(&["x=5", "x=2+3"]).unwrap();
        assert_eq!(ballot.buckets.len(), 1);
        assert_eq!(ballot.buckets[0].count, 2);
    }

    #[test]
    fn ties_go_to_the_smallest_key() {
        let (a, ballot) = vote(&["x=[Q2]", "x=[Q1]"]).unwrap();
        assert!(ballot.tie);
        let (b, _) = vote(&["x=[Q1]", "x=[Q2]"]).unwrap();
        assert_eq!(a, b);
        let keys: Vec<&str> = ballot.buckets.iter().map(|b| b.structural_key.as_str()).collect();
        assert_eq!(ballot.winning_bucket().structural_key, *keys.iter().min().unwrap());
    }

    #[test]
    fn malformed_candidates() {
        let (_, ballot) = vote(&["x=((", "x=[Q1]"]).unwrap();
        assert!(!ballot.candidates[0].parse_ok);
        assert_eq!(ballot.buckets.iter().map(|b| b.count).sum::<usize>(), 1);
        assert_eq!(vote(&["x=((", "=="]).unwrap_err(), VoteError::AllMalformed(2));
        assert_eq!(vote::<&str>(&[]).unwrap_err(), VoteError::NoCandidates);
    }

    #[test]
    fn ballot_field_names_are_stable() {
        let (_, ballot) = vote(&["x=1"]).unwrap();
        let v = serde_json::to_value(&ballot).unwrap();
        for key in ["candidates", "buckets", "winner", "tie"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in ["fingerprint", "structural_key", "count", "representative", "members"] {
            assert!(v["buckets"][0].get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn accuracy_delta_edge_cases() {
        let p = |cands: &[&str], original| VoteProblem {
            candidates: cands.iter().map(|s| s.to_string()).collect(),
            original,
            bindings: vec![q(4), q(9)],
            gold: q(13),
        };
        // correct class holds a strict majority everywhere
        let probs = vec![
            p(&["x=[Q1]-[Q2]", "x=[Q1]+[Q2]", "x=[Q2]+[Q1]", "x=13"], 0),
            p(&["x=[Q1]+[Q2]", "x=[Q1]*[Q2]", "x=[Q2]+[Q1]"], 1),
        ];
        assert_eq!(vote_accuracy_delta(&probs), (0.0, 1.0));
        let same = vec![p(&["x=[Q1]*[Q2]"; 3], 0), p(&["x=[Q1]+[Q2]"; 3], 2)];
        let (a, b) = vote_accuracy_delta(&same);
        assert_eq!(a, b);
    }

    fn pool() -> impl Strategy<Value = Vec<String>> {
        let atoms = prop::sample::select(vec![
            "x=[Q1]+[Q2]",
            "x=[Q2]+[Q1]",
            "x=[Q1]-[Q2]",
            "x=[Q1]*[Q2]",
            "x=[Q2]*[Q1]",
            "x=[Q1]",
            "x=[Q2]",
            "x=5",
            "x=2+3",
            "x=((",
            "x=[Q1]/[Q2]",
            "x*[Q2]=[Q1]",
        ]);
        prop::collection::vec(atoms.prop_map(String::from), 1..12)
    }

    proptest! {
        #[test]
        fn order_does_not_change_the_winning_class(cands in pool(), seed in any::<u64>()) {
            let Ok((a, ba)) = vote(&cands) else { return Ok(()) };
            let mut shuffled = cands.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let (b, bb) = vote(&shuffled).unwrap();
            prop_assert_eq!(canonicalize(&a).fingerprint, canonicalize(&b).fingerprint);
            prop_assert_eq!(ba.tie, bb.tie);
            prop_assert_eq!(ba.winning_bucket().count, bb.winning_bucket().count);
        }

        #[test]
        fn duplicating_the_winner_keeps_it(cands in pool()) {
            let Ok((a, _)) = vote(&cands) else { return Ok(()) };
            let mut more = cands.clone();
            more.push(a.to_string());
            let (b, _) = vote(&more).unwrap();
            prop_assert_eq!(canonicalize(&a).fingerprint, canonicalize(&b).fingerprint);
        }

        #[test]
        fn winner_has_the_top_count(cands in pool()) {
            let Ok((_, ballot)) = vote(&cands) else { return Ok(()) };
            let w = ballot.winning_bucket().count;
            prop_assert!(ballot.buckets.iter().all(|b| b.count <= w));
            let parsed = ballot.candidates.iter().filter(|c| c.parse_ok).count();
            prop_assert_eq!(ballot.buckets.iter().map(|b| b.count).sum::<usize>(), parsed);
        }
    }
}
