use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use super::{Expr, Op};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("tag [Q{0}] is not bound")]
    UnboundTag(usize),
    #[error("expression contains the unknown x")]
    UnknownPresent,
}

impl Expr {
    /// Exact evaluation; `bindings[i - 1]` is the value of `[Qi]`.
    pub fn evaluate(&self, bindings: &[BigRational]) -> Result<BigRational, EvalError> {
        self.evaluate_with_x(bindings, None)
    }

    /// Exact evaluation with `x` bound.
    pub fn evaluate_at(&self, bindings: &[BigRational], x: &BigRational) -> Result<BigRational, EvalError> {
        self.evaluate_with_x(bindings, Some(x))
    }

    fn evaluate_with_x(&self, bindings: &[BigRational], x: Option<&BigRational>) -> Result<BigRational, EvalError> {
        match self {
            Expr::Number(n) => Ok(n.clone()),
            Expr::Quant(i) => bindings
                .get(i.wrapping_sub(1))
                .cloned()
                .ok_or(EvalError::UnboundTag(*i)),
            Expr::Unknown => x.cloned().ok_or(EvalError::UnknownPresent),
            Expr::Binary(op, l, r) => {
                let a = l.evaluate_with_x(bindings, x)?;
                let b = r.evaluate_with_x(bindings, x)?;
                Ok(match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => {
                        if b.is_zero() {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                })
            }
        }
    }

    /// Floating-point evaluation with `x` bound to `x_value`.
    pub fn evaluate_f64(&self, bindings: &[f64], x_value: f64) -> Result<f64, EvalError> {
        let mut min_divisor = f64::INFINITY;
        self.evaluate_f64_tracking(bindings, x_value, &mut min_divisor)
    }

    /// Like [`Expr::evaluate_f64`], also recording the smallest divisor magnitude seen.
    pub(crate) fn evaluate_f64_tracking(
        &self,
        bindings: &[f64],
        x_value: f64,
        min_divisor: &mut f64,
    ) -> Result<f64, EvalError> {
        match self {
            Expr::Number(n) => Ok(crate::rational::to_f64(n)),
            Expr::Quant(i) => bindings
                .get(i.wrapping_sub(1))
                .copied()
                .ok_or(EvalError::UnboundTag(*i)),
            Expr::Unknown => Ok(x_value),
            Expr::Binary(op, l, r) => {
                let a = l.evaluate_f64_tracking(bindings, x_value, min_divisor)?;
                let b = r.evaluate_f64_tracking(bindings, x_value, min_divisor)?;
                Ok(match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => {
                        *min_divisor = min_divisor.min(b.abs());
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_equation, parse_expr};

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    #[test]
    fn table_one_value() {
        let eq = parse_equation("x=69*13+(420-69)*7").unwrap();
        assert_eq!(eq.rhs.evaluate(&[]), Ok(q(3354)));
    }

    #[test]
    fn tags_and_errors() {
        let e = parse_expr("[Q1]+[Q2]").unwrap();
        assert_eq!(e.evaluate(&[q(4), q(9)]), Ok(q(13)));
        assert_eq!(e.evaluate(&[q(4)]), Err(EvalError::UnboundTag(2)));
        let e = parse_expr("[Q1]/([Q2]-[Q2])").unwrap();
        assert_eq!(e.evaluate(&[q(1), q(2)]), Err(EvalError::DivisionByZero));
        assert_eq!(parse_expr("x+1").unwrap().evaluate(&[]), Err(EvalError::UnknownPresent));
    }
}
