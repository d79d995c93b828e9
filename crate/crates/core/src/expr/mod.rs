//! Arithmetic equations over quantity tags, constants and one unknown.
//!
//! Equations are parsed from infix strings (`x=[Q1]*[Q2]+([Q3]-[Q1])*[Q4]`),
//! evaluated with exact rationals, reduced to a canonical vote-bucket form
//! ([`CanonicalForm`]) and solved for `x` when at most quadratic.

mod canon;
mod eval;
mod fingerprint;
mod parse;
mod poly;
mod solve;

use std::fmt;

use num_rational::BigRational;
use num_traits::Signed;

pub use canon::{canonicalize, equivalent, extract_template, CanonicalForm, FINGERPRINT_POINTS};
pub use eval::EvalError;
pub use fingerprint::{FINGERPRINT_PRIME, IDENTITY_RESIDUE, UNDEFINED_RESIDUE};
pub use parse::{parse_equation, parse_expr, ParseError};
pub use solve::{answer_matches, solve_for_x, Root, SolveError};

use crate::rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            Op::Add | Op::Sub => 1,
            Op::Mul | Op::Div => 2,
        }
    }
}

/// Expression tree. `Quant(i)` is the tag `[Qi]` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Number(BigRational),
    Quant(usize),
    Unknown,
    Binary(Op, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn binary(op: Op, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn int(n: i64) -> Expr {
        Expr::Number(BigRational::from_integer(n.into()))
    }

    /// Number of operator nodes.
    pub fn operator_count(&self) -> usize {
        match self {
            Expr::Binary(_, l, r) => 1 + l.operator_count() + r.operator_count(),
            _ => 0,
        }
    }

    pub fn contains_unknown(&self) -> bool {
        match self {
            Expr::Unknown => true,
            Expr::Binary(_, l, r) => l.contains_unknown() || r.contains_unknown(),
            _ => false,
        }
    }

    /// Visits leaves left to right.
    pub fn for_each_leaf<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match self {
            Expr::Binary(_, l, r) => {
                l.for_each_leaf(f);
                r.for_each_leaf(f);
            }
            leaf => f(leaf),
        }
    }

    /// Rebuilds the tree, replacing leaves left to right.
    pub fn map_leaves(&self, f: &mut impl FnMut(&Expr) -> Expr) -> Expr {
        match self {
            Expr::Binary(op, l, r) => Expr::binary(*op, l.map_leaves(f), r.map_leaves(f)),
            leaf => f(leaf),
        }
    }

    /// Replaces every `[Qi]` with its bound value; unbound tags are kept.
    pub fn substitute(&self, bindings: &[BigRational]) -> Expr {
        self.map_leaves(&mut |leaf| match leaf {
            Expr::Quant(i) if *i >= 1 && *i <= bindings.len() => Expr::Number(bindings[*i - 1].clone()),
            other => other.clone(),
        })
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parent: Op, right: bool) -> fmt::Result {
        let needs_parens = match self {
            Expr::Binary(op, _, _) => {
                if right {
                    op.precedence() <= parent.precedence()
                } else {
                    op.precedence() < parent.precedence()
                }
            }
            Expr::Number(n) => n.is_negative(),
            _ => false,
        };
        if needs_parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(n) => match rational::to_decimal_string(n) {
                Some(s) => f.write_str(&s),
                None => write!(f, "({}/{})", n.numer(), n.denom()),
            },
            Expr::Quant(i) => write!(f, "[Q{i}]"),
            Expr::Unknown => f.write_str("x"),
            Expr::Binary(op, l, r) => {
                l.fmt_child(f, *op, false)?;
                write!(f, "{}", op.symbol())?;
                r.fmt_child(f, *op, true)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Equation {
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Equation {
    pub fn new(lhs: Expr, rhs: Expr) -> Self {
        Equation { lhs, rhs }
    }

    /// `x = rhs`.
    pub fn closed(rhs: Expr) -> Self {
        Equation {
            lhs: Expr::Unknown,
            rhs,
        }
    }

    /// The right-hand side when the equation reads `x = <expr without x>`.
    pub fn closed_form(&self) -> Option<&Expr> {
        match (&self.lhs, &self.rhs) {
            (Expr::Unknown, rhs) if !rhs.contains_unknown() => Some(rhs),
            _ => None,
        }
    }

    pub fn operator_count(&self) -> usize {
        self.lhs.operator_count() + self.rhs.operator_count()
    }

    pub fn for_each_leaf<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        self.lhs.for_each_leaf(f);
        self.rhs.for_each_leaf(f);
    }

    pub fn map_leaves(&self, f: &mut impl FnMut(&Expr) -> Expr) -> Equation {
        let lhs = self.lhs.map_leaves(f);
        let rhs = self.rhs.map_leaves(f);
        Equation { lhs, rhs }
    }

    pub fn substitute(&self, bindings: &[BigRational]) -> Equation {
        Equation {
            lhs: self.lhs.substitute(bindings),
            rhs: self.rhs.substitute(bindings),
        }
    }

    /// Highest quantity tag index referenced, 0 when none.
    pub fn max_quant(&self) -> usize {
        let mut max = 0;
        self.for_each_leaf(&mut |leaf| {
            if let Expr::Quant(i) = leaf {
                max = max.max(*i);
            }
        });
        max
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.lhs, self.rhs)
    }
}

impl std::str::FromStr for Equation {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_equation(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prints_minimal_parentheses() {
        let eq = parse_equation("x=69*13+(420-69)*7").unwrap();
        assert_eq!(eq.to_string(), "x=69*13+(420-69)*7");
        let eq = parse_equation("x = [Q1] - ([Q2] - [Q3])").unwrap();
        assert_eq!(eq.to_string(), "x=[Q1]-([Q2]-[Q3])");
        let eq = parse_equation("x=([Q1]-[Q2])-[Q3]").unwrap();
        assert_eq!(eq.to_string(), "x=[Q1]-[Q2]-[Q3]");
        let eq = parse_equation("x=-3+2*-4").unwrap();
        assert_eq!(eq.to_string(), "x=(-3)+2*(-4)");
        assert_eq!(parse_equation("x=-5").unwrap().to_string(), "x=-5");
    }

    #[test]
    fn counts_operators() {
        let table1 = parse_equation("x=69*13+(420-69)*7").unwrap();
        assert_eq!(table1.operator_count(), 4);
        let diesel = parse_equation("x=(1.0-((1.0+(10.0*0.01))*(1.0-(10.0*0.01))))*100.0").unwrap();
        assert_eq!(diesel.operator_count(), 7);
    }
}
