use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use super::eval::EvalError;
use super::poly::RationalFunction;
use super::{Equation, Expr, Op};
use crate::rational::{self, to_f64};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("equation has degree {0} in x after clearing denominators; at most 2 is supported")]
    DegreeTooHigh(usize),
    #[error("equation holds for every x")]
    IdenticallyZero,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A solution for `x`: exact when rational, otherwise a polished float.
#[derive(Debug, Clone, PartialEq)]
pub enum Root {
    Exact(BigRational),
    Approx(f64),
}

impl Root {
    pub fn to_f64(&self) -> f64 {
        match self {
            Root::Exact(r) => to_f64(r),
            Root::Approx(v) => *v,
        }
    }
}

impl fmt::Display for Root {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Root::Exact(r) => f.write_str(&rational::format_rational(r)),
            Root::Approx(v) => write!(f, "{v}"),
        }
    }
}

fn to_function(e: &Expr, bindings: &[BigRational]) -> Result<RationalFunction<BigRational>, EvalError> {
    Ok(match e {
        Expr::Number(n) => RationalFunction::constant(n.clone()),
        Expr::Quant(i) => RationalFunction::constant(
            bindings
                .get(i.wrapping_sub(1))
                .cloned()
                .ok_or(EvalError::UnboundTag(*i))?,
        ),
        Expr::Unknown => RationalFunction::x(),
        Expr::Binary(op, l, r) => {
            let l = to_function(l, bindings)?;
            let r = to_function(r, bindings)?;
            match op {
                Op::Add => l.add(&r),
                Op::Sub => l.sub(&r),
                Op::Mul => l.mul(&r),
                Op::Div => l.div(&r).ok_or(EvalError::DivisionByZero)?,
            }
        }
    })
}

fn exact_sqrt(r: &BigRational) -> Option<BigRational> {
    if r.is_negative() {
        return None;
    }
    let n: &BigInt = r.numer();
    let d: &BigInt = r.denom();
    let sn = n.sqrt();
    let sd = d.sqrt();
    (&sn * &sn == *n && &sd * &sd == *d).then(|| BigRational::new(sn, sd))
}

fn newton_polish(coeffs: &[f64], mut x: f64) -> f64 {
    for _ in 0..3 {
        let (mut p, mut dp) = (0.0, 0.0);
        for &c in coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        if dp == 0.0 || !dp.is_finite() {
            break;
        }
        let next = x - p / dp;
        if !next.is_finite() {
            break;
        }
        x = next;
    }
    x
}

/// Solves for `x` after substituting the tag bindings.
///
/// Denominators are cleared and factors shared with the denominator are
/// cancelled first, so roots that would zero a denominator never appear.
/// Roots come back in descending order.
pub fn solve_for_x(eq: &Equation, bindings: &[BigRational]) -> Result<Vec<Root>, SolveError> {
    let lhs = to_function(&eq.lhs, bindings)?;
    let rhs = to_function(&eq.rhs, bindings)?;
    let f = lhs.sub(&rhs).reduced();
    let num = f.num;
    let Some(degree) = num.degree() else {
        return Err(SolveError::IdenticallyZero);
    };
    let mut roots = match degree {
        0 => Vec::new(),
        1 => vec![Root::Exact(-num.coeff(0) / num.coeff(1))],
        2 => {
            let (a, b, c) = (num.coeff(2), num.coeff(1), num.coeff(0));
            let disc = &b * &b - BigRational::from_integer(4.into()) * &a * &c;
            let two_a = BigRational::from_integer(2.into()) * &a;
            if disc.is_negative() {
                Vec::new()
            } else if let Some(s) = exact_sqrt(&disc) {
                let r1 = (-&b + &s) / &two_a;
                let r2 = (-&b - &s) / &two_a;
                if disc.is_zero() {
                    vec![Root::Exact(r1)]
                } else {
                    vec![Root::Exact(r1), Root::Exact(r2)]
                }
            } else {
                let (af, bf, cf) = (to_f64(&a), to_f64(&b), to_f64(&c));
                let sq = to_f64(&disc).sqrt();
                // cancellation-free pair
                let q = -0.5 * (bf + bf.signum() * sq);
                let coeffs = [cf, bf, af];
                let mut pair = [q / af, cf / q];
                if bf == 0.0 {
                    pair = [sq / (2.0 * af), -sq / (2.0 * af)];
                }
                pair.iter().map(|&r| Root::Approx(newton_polish(&coeffs, r))).collect()
            }
        }
        d => return Err(SolveError::DegreeTooHigh(d)),
    };
    // cancellation can hide a divisor of the original equation that vanishes at a root
    let float_bindings: Vec<f64> = bindings.iter().map(to_f64).collect();
    roots.retain(|r| match r {
        Root::Exact(v) => eq.lhs.evaluate_at(bindings, v).is_ok() && eq.rhs.evaluate_at(bindings, v).is_ok(),
        Root::Approx(v) => {
            let mut min_divisor = f64::INFINITY;
            let ok = eq
                .lhs
                .evaluate_f64_tracking(&float_bindings, *v, &mut min_divisor)
                .is_ok()
                && eq
                    .rhs
                    .evaluate_f64_tracking(&float_bindings, *v, &mut min_divisor)
                    .is_ok();
            ok && min_divisor > 1e-9 * v.abs().max(1.0)
        }
    });
    roots.sort_by(|a, b| b.to_f64().partial_cmp(&a.to_f64()).unwrap_or(std::cmp::Ordering::Equal));
    Ok(roots)
}

/// Whether the equation yields the gold answer under the bindings, within
/// the relative answer tolerance. Closed forms are evaluated directly; other
/// equations match when any root does.
pub fn answer_matches(eq: &Equation, bindings: &[BigRational], gold: &BigRational) -> bool {
    let gold = to_f64(gold);
    if let Some(rhs) = eq.closed_form() {
        return rhs
            .evaluate(bindings)
            .ok()
            .and_then(|v| v.to_f64())
            .is_some_and(|v| rational::answer_matches(v, gold));
    }
    match solve_for_x(eq, bindings) {
        Ok(roots) => roots.iter().any(|r| rational::answer_matches(r.to_f64(), gold)),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_equation;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn solve(s: &str) -> Result<Vec<Root>, SolveError> {
        solve_for_x(&parse_equation(s).unwrap(), &[])
    }

    #[test]
    fn closed_and_symmetric() {
        assert_eq!(solve("x=3354").unwrap(), vec![Root::Exact(q(3354))]);
        assert_eq!(solve("x*x=4").unwrap(), vec![Root::Exact(q(2)), Root::Exact(q(-2))]);
        assert_eq!(solve("x*x=-4").unwrap(), vec![]);
    }

    #[test]
    fn spurious_roots_are_removed() {
        // x^2/x = 0 has no solution: x = 0 zeroes the denominator
        assert_eq!(solve("x*x/x=0").unwrap(), vec![]);
        // (x^2 - 9)/(x - 3) = 6  ->  x + 3 = 6 with x != 3: no solution
        assert_eq!(solve("(x*x-9)/(x-3)=6").unwrap(), vec![]);
        assert_eq!(solve("(x*x-9)/(x-3)=7").unwrap(), vec![Root::Exact(q(4))]);
    }

    #[test]
    fn errors() {
        assert_eq!(solve("x*x*x=8"), Err(SolveError::DegreeTooHigh(3)));
        assert_eq!(solve("x+1=1+x"), Err(SolveError::IdenticallyZero));
        assert_eq!(
            solve_for_x(&parse_equation("x=[Q3]").unwrap(), &[q(1)]),
            Err(SolveError::Eval(EvalError::UnboundTag(3)))
        );
    }

    #[test]
    fn answers() {
        let eq = parse_equation("x=[Q2]+[Q1]").unwrap();
        assert!(answer_matches(&eq, &[q(4), q(9)], &q(13)));
        assert!(!answer_matches(&eq, &[q(4), q(9)], &q(14)));
        let eq = parse_equation("x*x=16").unwrap();
        assert!(answer_matches(&eq, &[], &q(-4)));
    }
}
