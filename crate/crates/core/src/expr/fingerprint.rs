//! Random-evaluation fingerprints over the Mersenne prime field `2^61 - 1`.
//!
//! Every quantity tag receives a pseudorandom field element per evaluation
//! point. The unknown `x` is kept symbolic: the equation `lhs - rhs = 0` is
//! turned into a rational function of `x`, common factors are cancelled, and
//! the monic numerator (which determines the solution set) is evaluated at one
//! more pseudorandom element. Equations with the same solutions for every
//! assignment of the tags therefore collide, while different ones collide
//! with probability about `deg / p` per point.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use super::poly::{Field, RationalFunction};
use super::{Equation, Expr, Op};

pub const FINGERPRINT_PRIME: u64 = (1 << 61) - 1;
/// Residue reported when `lhs - rhs` vanishes identically (every `x` solves it).
pub const IDENTITY_RESIDUE: u64 = FINGERPRINT_PRIME;
/// Residue reported when every redraw hits a vanishing denominator.
pub const UNDEFINED_RESIDUE: u64 = FINGERPRINT_PRIME + 1;

const SEED: u64 = 0x6d77_705f_7669_7274;
const MAX_REDRAWS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Fp(u64);

impl Fp {
    pub fn new(v: u64) -> Self {
        Fp(v % FINGERPRINT_PRIME)
    }

    fn pow(self, mut e: u64) -> Fp {
        let mut base = self;
        let mut acc = Fp(1);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }

    /// Reduces an exact rational; `None` when its denominator is divisible by `p`.
    fn from_rational(r: &BigRational) -> Option<Fp> {
        let p = BigInt::from(FINGERPRINT_PRIME);
        let n = r.numer().mod_floor(&p).to_u64()?;
        let d = r.denom().mod_floor(&p).to_u64()?;
        if d == 0 {
            return None;
        }
        Some(Fp(n).mul(&Fp(d).inv()))
    }
}

impl Field for Fp {
    fn zero() -> Self {
        Fp(0)
    }
    fn one() -> Self {
        Fp(1)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
    fn add(&self, o: &Self) -> Self {
        let s = self.0 + o.0;
        Fp(if s >= FINGERPRINT_PRIME {
            s - FINGERPRINT_PRIME
        } else {
            s
        })
    }
    fn sub(&self, o: &Self) -> Self {
        Fp(if self.0 >= o.0 {
            self.0 - o.0
        } else {
            self.0 + FINGERPRINT_PRIME - o.0
        })
    }
    fn mul(&self, o: &Self) -> Self {
        let wide = self.0 as u128 * o.0 as u128;
        let lo = (wide as u64) & FINGERPRINT_PRIME;
        let hi = (wide >> 61) as u64;
        let s = lo + hi;
        Fp(if s >= FINGERPRINT_PRIME {
            s - FINGERPRINT_PRIME
        } else {
            s
        })
    }
    fn inv(&self) -> Self {
        self.pow(FINGERPRINT_PRIME - 2)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic field element for (point, redraw attempt, symbol slot).
fn draw(point: u64, attempt: u64, slot: u64) -> Fp {
    let h = splitmix64(SEED ^ splitmix64(point ^ splitmix64(attempt ^ splitmix64(slot))));
    Fp::new(h)
}

/// Symbol slot 0 is the evaluation point of the reduced numerator; slot `i`
/// is the tag `[Qi]`.
struct Assignment {
    point: u64,
    attempt: u64,
}

impl Assignment {
    fn quant(&self, i: usize) -> Fp {
        draw(self.point, self.attempt, i as u64)
    }

    fn probe(&self) -> Fp {
        draw(self.point, self.attempt, 0)
    }
}

/// `None` when some denominator vanishes at this assignment.
fn to_function(e: &Expr, a: &Assignment) -> Option<RationalFunction<Fp>> {
    Some(match e {
        Expr::Number(n) => RationalFunction::constant(Fp::from_rational(n)?),
        Expr::Quant(i) => RationalFunction::constant(a.quant(*i)),
        Expr::Unknown => RationalFunction::x(),
        Expr::Binary(op, l, r) => {
            let l = to_function(l, a)?;
            let r = to_function(r, a)?;
            match op {
                Op::Add => l.add(&r),
                Op::Sub => l.sub(&r),
                Op::Mul => l.mul(&r),
                Op::Div => l.div(&r)?,
            }
        }
    })
}

fn residue_at(eq: &Equation, point: u64) -> u64 {
    for attempt in 0..MAX_REDRAWS {
        let a = Assignment { point, attempt };
        let (Some(l), Some(r)) = (to_function(&eq.lhs, &a), to_function(&eq.rhs, &a)) else {
            continue;
        };
        let f = l.sub(&r).reduced();
        if f.num.is_zero() {
            return IDENTITY_RESIDUE;
        }
        return f.num.monic().eval(&a.probe()).0;
    }
    UNDEFINED_RESIDUE
}

pub(crate) fn fingerprint<const N: usize>(eq: &Equation) -> [u64; N] {
    std::array::from_fn(|point| residue_at(eq, point as u64))
}
