use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use super::{Equation, Expr, Op};
use crate::rational::parse_decimal;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unexpected character {found:?} at column {column}")]
    UnexpectedChar { found: char, column: usize },
    #[error("unexpected {found} at column {column}, expected {expected}")]
    UnexpectedToken {
        found: String,
        expected: &'static str,
        column: usize,
    },
    #[error("unexpected end of input, expected {expected}")]
    UnexpectedEnd { expected: &'static str },
    #[error("unbalanced parentheses at column {column}")]
    Unbalanced { column: usize },
    #[error("malformed quantity tag at column {column}")]
    BadTag { column: usize },
    #[error("malformed number at column {column}")]
    BadNumber { column: usize },
    #[error("division by a literal zero at column {column}")]
    ZeroDenominator { column: usize },
    #[error("second '=' at column {column}")]
    ExtraEquals { column: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Quant(usize),
    X,
    Op(Op),
    LParen,
    RParen,
    Equals,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number {n}"),
            Tok::Quant(i) => format!("tag [Q{i}]"),
            Tok::X => "'x'".into(),
            Tok::Op(op) => format!("'{}'", op.symbol()),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Equals => "'='".into(),
        }
    }
}

/// Token plus 1-based column.
type Spanned = (Tok, usize);

fn lex(input: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '+' => out.push((Tok::Op(Op::Add), column)),
            '-' | '−' | '–' => out.push((Tok::Op(Op::Sub), column)),
            '*' | '×' | '·' => out.push((Tok::Op(Op::Mul), column)),
            '/' | '÷' => out.push((Tok::Op(Op::Div), column)),
            '(' => out.push((Tok::LParen, column)),
            ')' => out.push((Tok::RParen, column)),
            '=' => out.push((Tok::Equals, column)),
            'x' | 'X' => out.push((Tok::X, column)),
            '[' => {
                let close = chars[i..]
                    .iter()
                    .position(|&c| c == ']')
                    .ok_or(ParseError::BadTag { column })?;
                let body: String = chars[i + 1..i + close].iter().collect();
                let index = body
                    .strip_prefix('Q')
                    .filter(|d| !d.is_empty() && !d.starts_with('0'))
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or(ParseError::BadTag { column })?;
                out.push((Tok::Quant(index), column));
                i += close + 1;
                continue;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let value = parse_decimal(&text).ok_or(ParseError::BadNumber { column })?;
                out.push((Tok::Num(value), column));
                continue;
            }
            found => return Err(ParseError::UnexpectedChar { found, column }),
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    open_parens: Vec<usize>,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some((Tok::Op(op @ (Op::Add | Op::Sub)), _)) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some((Tok::Op(op @ (Op::Mul | Op::Div)), _)) = self.peek() {
            let op = *op;
            self.pos += 1;
            let column = self.peek().map(|t| t.1).unwrap_or(0);
            let rhs = self.factor()?;
            if op == Op::Div {
                if let Expr::Number(n) = &rhs {
                    if n.is_zero() {
                        return Err(ParseError::ZeroDenominator { column });
                    }
                }
            }
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some((Tok::Op(Op::Sub), _)) => {
                self.pos += 1;
                match self.factor()? {
                    Expr::Number(n) if !n.is_negative() => Ok(Expr::Number(-n)),
                    other => Ok(Expr::binary(Op::Mul, Expr::int(-1), other)),
                }
            }
            Some((Tok::Op(Op::Add), _)) => {
                self.pos += 1;
                self.factor()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        const EXPECTED: &str = "a number, tag, 'x' or '('";
        match self.next() {
            Some((Tok::Num(n), _)) => Ok(Expr::Number(n)),
            Some((Tok::Quant(i), _)) => Ok(Expr::Quant(i)),
            Some((Tok::X, _)) => Ok(Expr::Unknown),
            Some((Tok::LParen, column)) => {
                self.open_parens.push(column);
                let inner = self.expr()?;
                match self.next() {
                    Some((Tok::RParen, _)) => {
                        self.open_parens.pop();
                        Ok(inner)
                    }
                    _ => Err(ParseError::Unbalanced { column }),
                }
            }
            Some((Tok::RParen, column)) => Err(ParseError::Unbalanced { column }),
            Some((tok, column)) => Err(ParseError::UnexpectedToken {
                found: tok.describe(),
                expected: EXPECTED,
                column,
            }),
            None => match self.open_parens.last() {
                Some(&column) => Err(ParseError::Unbalanced { column }),
                None => Err(ParseError::UnexpectedEnd { expected: EXPECTED }),
            },
        }
    }

    fn finish(&mut self, expected: &'static str) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some((Tok::RParen, column)) => Err(ParseError::Unbalanced { column: *column }),
            Some((Tok::Equals, column)) => Err(ParseError::ExtraEquals { column: *column }),
            Some((tok, column)) => Err(ParseError::UnexpectedToken {
                found: tok.describe(),
                expected,
                column: *column,
            }),
        }
    }
}

/// Parses a bare expression (no `=`).
pub fn parse_expr(input: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(input)?,
        pos: 0,
        open_parens: Vec::new(),
    };
    let e = p.expr()?;
    p.finish("an operator or end of input")?;
    Ok(e)
}

/// Parses `lhs = rhs`; a string without `=` reads as `x = <expr>`.
pub fn parse_equation(input: &str) -> Result<Equation, ParseError> {
    let mut p = Parser {
        toks: lex(input)?,
        pos: 0,
        open_parens: Vec::new(),
    };
    let has_equals = p.toks.iter().any(|(t, _)| *t == Tok::Equals);
    let first = p.expr()?;
    if !has_equals {
        p.finish("an operator or end of input")?;
        return Ok(Equation::closed(first));
    }
    match p.next() {
        Some((Tok::Equals, _)) => {}
        Some((Tok::RParen, column)) => return Err(ParseError::Unbalanced { column }),
        Some((tok, column)) => {
            return Err(ParseError::UnexpectedToken {
                found: tok.describe(),
                expected: "'=' or an operator",
                column,
            })
        }
        None => unreachable!("an '=' token is present"),
    }
    let second = p.expr()?;
    p.finish("an operator or end of input")?;
    Ok(Equation::new(first, second))
}
