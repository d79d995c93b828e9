//! Structural normal form of `lhs - rhs` and the derived vote-bucket key.

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use super::fingerprint::fingerprint;
use super::{Equation, Expr, Op};
use crate::rational;

/// Evaluation points per fingerprint.
pub const FINGERPRINT_POINTS: usize = 4;

/// Vote-bucket key of an equation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonicalForm {
    /// Normal form of `lhs - rhs`, printed as the parseable equation `<form>=0`.
    pub structural_key: String,
    pub fingerprint: [u64; FINGERPRINT_POINTS],
}

/// Normal-form node. The derived ordering (variant order, then contents) is
/// the total order used to sort operands.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Num(BigRational),
    Quant(usize),
    X,
    Inv(Box<Node>),
    Prod(Vec<Node>),
    Sum(Vec<Node>),
}

fn num(n: BigRational) -> Node {
    Node::Num(n)
}

fn minus_one() -> Node {
    Node::Num(-BigRational::one())
}

fn sum(terms: Vec<Node>) -> Node {
    let mut flat = Vec::with_capacity(terms.len());
    let mut constant = BigRational::zero();
    for t in terms {
        match t {
            Node::Sum(inner) => {
                for u in inner {
                    match u {
                        Node::Num(c) => constant += c,
                        other => flat.push(other),
                    }
                }
            }
            Node::Num(c) => constant += c,
            other => flat.push(other),
        }
    }
    if !constant.is_zero() {
        flat.push(num(constant));
    }
    flat.sort();
    match flat.len() {
        0 => num(BigRational::zero()),
        1 => flat.pop().unwrap(),
        _ => Node::Sum(flat),
    }
}

fn prod(factors: Vec<Node>) -> Node {
    let mut flat = Vec::with_capacity(factors.len());
    let mut coeff = BigRational::one();
    for f in factors {
        match f {
            Node::Prod(inner) => {
                for u in inner {
                    match u {
                        Node::Num(c) => coeff *= c,
                        other => flat.push(other),
                    }
                }
            }
            Node::Num(c) => coeff *= c,
            other => flat.push(other),
        }
    }
    if coeff.is_zero() {
        return num(BigRational::zero());
    }
    if !coeff.is_one() {
        flat.push(num(coeff));
    }
    flat.sort();
    match flat.len() {
        0 => num(BigRational::one()),
        1 => flat.pop().unwrap(),
        _ => Node::Prod(flat),
    }
}

fn inv(n: Node) -> Node {
    match n {
        Node::Num(c) if !c.is_zero() => num(c.recip()),
        Node::Inv(inner) => *inner,
        Node::Prod(factors) => prod(factors.into_iter().map(inv).collect()),
        // a literal 0 here comes from folding, e.g. 1/(2-2); kept symbolic
        other => Node::Inv(Box::new(other)),
    }
}

fn normalize(e: &Expr) -> Node {
    match e {
        Expr::Number(n) => num(n.clone()),
        Expr::Quant(i) => Node::Quant(*i),
        Expr::Unknown => Node::X,
        Expr::Binary(op, l, r) => {
            let a = normalize(l);
            let b = normalize(r);
            match op {
                Op::Add => sum(vec![a, b]),
                Op::Sub => sum(vec![a, prod(vec![minus_one(), b])]),
                Op::Mul => prod(vec![a, b]),
                Op::Div => prod(vec![a, inv(b)]),
            }
        }
    }
}

fn normalize_equation(eq: &Equation) -> Node {
    let l = normalize(&eq.lhs);
    let r = normalize(&eq.rhs);
    sum(vec![l, prod(vec![minus_one(), r])])
}

impl Node {
    fn is_compound(&self) -> bool {
        matches!(self, Node::Sum(_) | Node::Prod(_))
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(c) => match rational::to_decimal_string(c) {
                Some(s) if c.is_negative() => write!(f, "({s})"),
                Some(s) => f.write_str(&s),
                None => write!(f, "({}/{})", c.numer(), c.denom()),
            },
            Node::Quant(i) => write!(f, "[Q{i}]"),
            Node::X => f.write_str("x"),
            Node::Inv(inner) => match inner.as_ref() {
                Node::Num(c) if c.is_zero() => f.write_str("1/(1-1)"),
                n if n.is_compound() => write!(f, "1/({n})"),
                n => write!(f, "1/{n}"),
            },
            Node::Prod(factors) => {
                for (i, x) in factors.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    match x {
                        Node::Sum(_) | Node::Inv(_) => write!(f, "({x})")?,
                        _ => write!(f, "{x}")?,
                    }
                }
                Ok(())
            }
            Node::Sum(terms) => {
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    match t {
                        Node::Inv(_) => write!(f, "({t})")?,
                        _ => write!(f, "{t}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

/// Builds the structural key and the fingerprint of an equation.
pub fn canonicalize(eq: &Equation) -> CanonicalForm {
    let node = normalize_equation(eq);
    CanonicalForm {
        structural_key: format!("{node}=0"),
        fingerprint: fingerprint::<FINGERPRINT_POINTS>(eq),
    }
}

/// True when the fingerprints agree: same solution set for every
/// assignment of the quantity tags, with overwhelming probability.
pub fn equivalent(a: &Equation, b: &Equation) -> bool {
    fingerprint::<FINGERPRINT_POINTS>(a) == fingerprint::<FINGERPRINT_POINTS>(b)
}

/// Template node: like [`Node`] but with quantities and constants erased.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Shape {
    /// A quantity tag or a positive constant.
    Slot,
    /// A negative constant other than -1.
    NegSlot,
    MinusOne,
    X,
    Inv(Box<Shape>),
    Prod(Vec<Shape>),
    Sum(Vec<Shape>),
}

fn erase(n: &Node) -> Shape {
    match n {
        Node::Num(c) if *c == -BigRational::one() => Shape::MinusOne,
        Node::Num(c) if c.is_negative() => Shape::NegSlot,
        Node::Num(_) | Node::Quant(_) => Shape::Slot,
        Node::X => Shape::X,
        Node::Inv(inner) => Shape::Inv(Box::new(erase(inner))),
        Node::Prod(fs) => {
            let mut v: Vec<Shape> = fs.iter().map(erase).collect();
            v.sort();
            Shape::Prod(v)
        }
        Node::Sum(ts) => {
            let mut v: Vec<Shape> = ts.iter().map(erase).collect();
            v.sort();
            Shape::Sum(v)
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Slot => f.write_str("n"),
            Shape::NegSlot => f.write_str("-n"),
            Shape::MinusOne => f.write_str("-1"),
            Shape::X => f.write_str("x"),
            Shape::Inv(inner) => match inner.as_ref() {
                s @ (Shape::Sum(_) | Shape::Prod(_)) => write!(f, "1/({s})"),
                s => write!(f, "1/{s}"),
            },
            Shape::Prod(fs) => {
                let parts: Vec<String> = fs
                    .iter()
                    .map(|s| match s {
                        Shape::Sum(_) | Shape::Inv(_) => format!("({s})"),
                        _ => s.to_string(),
                    })
                    .collect();
                f.write_str(&parts.join("*"))
            }
            Shape::Sum(ts) => {
                let parts: Vec<String> = ts
                    .iter()
                    .map(|s| match s {
                        Shape::Inv(_) => format!("({s})"),
                        _ => s.to_string(),
                    })
                    .collect();
                f.write_str(&parts.join("+"))
            }
        }
    }
}

/// Operator skeleton of the normal form with every quantity and constant
/// replaced by `n` (`-n` for negative constants; the sign coefficient `-1`
/// that encodes subtraction is kept).
pub fn extract_template(eq: &Equation) -> String {
    erase(&normalize_equation(eq)).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_equation;

    fn key(s: &str) -> String {
        canonicalize(&parse_equation(s).unwrap()).structural_key
    }

    fn fp(s: &str) -> [u64; FINGERPRINT_POINTS] {
        canonicalize(&parse_equation(s).unwrap()).fingerprint
    }

    #[test]
    fn commutativity_and_folding() {
        assert_eq!(key("x=[Q1]+[Q2]"), key("x=[Q2]+[Q1]"));
        assert_eq!(key("x=2+3"), key("x=5"));
        assert_eq!(key("x=[Q1]*[Q2]*[Q3]"), key("x=[Q3]*([Q1]*[Q2])"));
        assert_eq!(key("x=2*[Q1]*3"), key("x=[Q1]*6"));
        assert_eq!(key("x=[Q1]/([Q2]*[Q3])"), key("x=[Q1]/[Q2]/[Q3]"));
        assert_ne!(key("x=[Q1]-[Q2]"), key("x=[Q2]-[Q1]"));
    }

    #[test]
    fn structural_key_shape() {
        assert_eq!(key("x=[Q1]+[Q2]"), "x+(-1)*([Q1]+[Q2])=0");
        assert_eq!(key("x=[Q1]/[Q2]"), "x+(-1)*[Q1]*(1/[Q2])=0");
        assert_eq!(key("x=1/3"), "(-1/3)+x=0");
        assert_eq!(key("x=5"), "(-5)+x=0");
    }

    #[test]
    fn key_is_idempotent() {
        for s in [
            "x=[Q1]+[Q2]",
            "x=([Q1]*[Q2])/[Q2]",
            "x=1/3+[Q1]",
            "(60/(x-3))+(60/(3+x))=9",
            "x=[Q1]/(2-2)",
            "x=(1.0-((1.0+(10.0*0.01))*(1.0-(10.0*0.01))))*100.0",
        ] {
            let k = key(s);
            assert_eq!(key(&k), k, "{s}");
        }
    }

    #[test]
    fn cancellation_is_structural_only() {
        assert_ne!(key("x=([Q1]*[Q2])/[Q2]"), key("x=[Q1]"));
        assert_eq!(fp("x=([Q1]*[Q2])/[Q2]"), fp("x=[Q1]"));
    }

    #[test]
    fn equivalence_examples() {
        let t1 = parse_equation("x=69*13+(420-69)*7").unwrap();
        assert!(equivalent(&t1, &parse_equation("x=3354").unwrap()));
        assert!(!equivalent(
            &parse_equation("x=[Q1]-[Q2]").unwrap(),
            &parse_equation("x=[Q2]-[Q1]").unwrap()
        ));
        // clearing denominators by hand: 60(x+3) + 60(x-3) = 9(x-3)(x+3)
        //   => 120x = 9x^2 - 81  =>  9x^2 - 120x - 81 = 0
        let boat = parse_equation("(60/(x-3))+(60/(3+x))=9").unwrap();
        let cleared = parse_equation("9*x*x-120*x-81=0").unwrap();
        assert!(equivalent(&boat, &cleared));
        assert!(equivalent(
            &parse_equation("x=[Q1]").unwrap(),
            &parse_equation("[Q1]=x").unwrap()
        ));
    }

    #[test]
    fn special_residues() {
        assert_eq!(fp("x=x"), [super::super::IDENTITY_RESIDUE; FINGERPRINT_POINTS]);
        assert_eq!(
            fp("x=[Q1]/([Q2]-[Q2])"),
            [super::super::UNDEFINED_RESIDUE; FINGERPRINT_POINTS]
        );
    }

    #[test]
    fn templates() {
        let t = |s: &str| extract_template(&parse_equation(s).unwrap());
        assert_eq!(t("x=[Q1]+[Q2]"), t("x=[Q3]+[Q7]"));
        assert_ne!(t("x=[Q1]+[Q2]"), t("x=[Q1]*[Q2]"));
        assert_ne!(t("x=[Q1]-[Q2]"), t("x=[Q1]+[Q2]"));
        assert_eq!(t("x=[Q1]*[Q2]+[Q3]"), t("x=[Q3]+[Q2]*[Q1]"));
        assert_eq!(t("x=[Q1]+[Q2]"), "x+-1*(n+n)");
    }
}
