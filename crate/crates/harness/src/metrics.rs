//! Equation and value accuracy.

use mwp_core::expr::{answer_matches, equivalent, parse_equation};
use mwp_core::BigRational;

/// The equation parses and yields `gold` under `bindings` (closed forms
/// evaluated, others solved for `x`).
pub fn value_correct(prediction: &str, bindings: &[BigRational], gold: &BigRational) -> bool {
    parse_equation(prediction).is_ok_and(|eq| answer_matches(&eq, bindings, gold))
}

/// Both sides parse and are equivalent as equations.
pub fn equation_correct(prediction: &str, gold: &str) -> bool {
    match (parse_equation(prediction), parse_equation(gold)) {
        (Ok(p), Ok(g)) => equivalent(&p, &g),
        _ => false,
    }
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Fraction of predictions whose value matches; malformed ones score 0.
/// Lists are aligned; an empty list scores 0.
pub fn value_accuracy<S: AsRef<str>>(predictions: &[S], golds: &[BigRational], bindings: &[Vec<BigRational>]) -> f64 {
    assert!(
        predictions.len() == golds.len() && golds.len() == bindings.len(),
        "unaligned lists"
    );
    let hits = predictions
        .iter()
        .zip(golds)
        .zip(bindings)
        .filter(|((p, g), b)| value_correct(p.as_ref(), b, g))
        .count();
    fraction(hits, predictions.len())
}

pub fn equation_accuracy<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], golds: &[T]) -> f64 {
    assert_eq!(predictions.len(), golds.len(), "unaligned lists");
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| equation_correct(p.as_ref(), g.as_ref()))
        .count();
    fraction(hits, predictions.len())
}
