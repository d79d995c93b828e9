//! Quantity detection and tagging.
//!
//! Numerals (`4`, `8.9`, `1,600`, the `10` of `10%`) and number words
//! (`zero` to `nineteen`, the tens, and compounds such as `twenty-one`) are
//! replaced by `[Q1]`, `[Q2]`, ... in order of appearance. Ordinals
//! (`first`, `3rd`) are left alone, as are existing tags, so tagging is
//! idempotent.

use std::sync::LazyLock;

use num_rational::BigRational;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::expr::{parse_equation, Equation, Expr, ParseError};
use crate::rational::{parse_decimal, to_decimal_string};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantity {
    /// 1-based tag index.
    pub index: usize,
    #[serde(with = "rational_string")]
    pub value: BigRational,
    /// Original substring, e.g. `1,600` or `twelve`.
    pub surface: String,
    /// Character offsets `[start, end)` in the original text.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedProblem {
    pub tagged_text: String,
    pub quantities: Vec<Quantity>,
    pub tagged_equation: Option<String>,
}

impl TaggedProblem {
    /// Tags the text and, when given, aligns the equation to its quantities.
    pub fn new(text: &str, equation: Option<&str>) -> Result<Self, ParseError> {
        let (tagged_text, quantities) = tag_quantities(text);
        let tagged_equation = equation.map(|e| align_equation(e, &quantities)).transpose()?;
        Ok(TaggedProblem {
            tagged_text,
            quantities,
            tagged_equation,
        })
    }

    pub fn values(&self) -> Vec<BigRational> {
        values(&self.quantities)
    }

    /// The original text with every tag replaced by its surface form.
    pub fn untagged(&self) -> String {
        untag(&self.tagged_text, &self.quantities)
    }
}

pub fn values(quantities: &[Quantity]) -> Vec<BigRational> {
    quantities.iter().map(|q| q.value.clone()).collect()
}

const UNITS: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];
const TENS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

static TAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[Q(\d+)\]").unwrap());

static QUANTITY_RE: LazyLock<Regex> = LazyLock::new(|| {
    let tens = TENS.join("|");
    let units = UNITS[1..10].join("|");
    let all_units = UNITS.join("|");
    Regex::new(&format!(
        r"(?x)
        (?P<tag>\[Q\d+\])
        | (?P<num>\d{{1,3}}(?:,\d{{3}})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+)
        | (?i:\b(?P<word>(?:{tens})(?:[-\ ](?:{units}))?|{all_units})\b)
        "
    ))
    .unwrap()
});

fn word_value(word: &str) -> Option<u32> {
    let lower = word.to_lowercase();
    if let Some(i) = UNITS.iter().position(|u| *u == lower) {
        return Some(i as u32);
    }
    let mut parts = lower.split(['-', ' ']);
    let tens = parts.next()?;
    let t = TENS.iter().position(|x| *x == tens)? as u32;
    let unit = match parts.next() {
        Some(u) => UNITS[1..10].iter().position(|x| *x == u)? as u32 + 1,
        None => 0,
    };
    Some((t + 2) * 10 + unit)
}

fn is_ordinal_suffix(rest: &str) -> bool {
    let lower: String = rest.chars().take(3).collect::<String>().to_lowercase();
    ["st", "nd", "rd", "th"]
        .iter()
        .any(|s| lower.starts_with(s) && !lower[s.len()..].starts_with(|c: char| c.is_alphabetic()))
}

/// Replaces each quantity with `[Qi]` and returns the tagged text and the
/// ordered quantity list.
pub fn tag_quantities(text: &str) -> (String, Vec<Quantity>) {
    let mut tagged = String::with_capacity(text.len());
    let mut quantities = Vec::new();
    let mut last = 0;
    for caps in QUANTITY_RE.captures_iter(text) {
        let m = caps.get(0).unwrap();
        if caps.name("tag").is_some() {
            continue;
        }
        let value = if let Some(num) = caps.name("num") {
            let before = text[..m.start()].chars().next_back();
            if before.is_some_and(|c| c.is_alphabetic() || c == '_') {
                continue;
            }
            if is_ordinal_suffix(&text[m.end()..]) {
                continue;
            }
            match parse_decimal(&num.as_str().replace(',', "")) {
                Some(v) => v,
                None => continue,
            }
        } else {
            let word = caps.name("word").unwrap().as_str();
            match word_value(word) {
                Some(v) => BigRational::from_integer(v.into()),
                None => continue,
            }
        };
        tagged.push_str(&text[last..m.start()]);
        let index = quantities.len() + 1;
        tagged.push_str(&format!("[Q{index}]"));
        let start = text[..m.start()].chars().count();
        let len = m.as_str().chars().count();
        quantities.push(Quantity {
            index,
            value,
            surface: m.as_str().to_string(),
            span: (start, start + len),
        });
        last = m.end();
    }
    tagged.push_str(&text[last..]);
    (tagged, quantities)
}

/// Substitutes surface forms back for tags.
pub fn untag(tagged_text: &str, quantities: &[Quantity]) -> String {
    TAG_RE
        .replace_all(tagged_text, |caps: &regex::Captures<'_>| {
            let i: usize = caps[1].parse().unwrap_or(0);
            match quantities.get(i.wrapping_sub(1)) {
                Some(q) => q.surface.clone(),
                None => caps[0].to_string(),
            }
        })
        .into_owned()
}

/// Replaces equation literals by quantity tags.
///
/// Literals are visited left to right; each takes the lowest-index matching
/// quantity not yet used, or the lowest-index match when all are used.
/// Literals matching no quantity stay as constants.
pub fn align(eq: &Equation, quantities: &[Quantity]) -> Equation {
    let mut used = vec![false; quantities.len()];
    eq.map_leaves(&mut |leaf| match leaf {
        Expr::Number(n) => {
            let matching = || quantities.iter().enumerate().filter(|(_, q)| q.value == *n);
            let pick = matching().find(|(i, _)| !used[*i]).or_else(|| matching().next());
            match pick {
                Some((i, q)) => {
                    used[i] = true;
                    Expr::Quant(q.index)
                }
                None => leaf.clone(),
            }
        }
        other => other.clone(),
    })
}

/// Moves an equation from one tag frame to another: tags are replaced by the
/// `from` values, then the literals are aligned to `to`.
pub fn reframe(eq: &Equation, from: &[BigRational], to: &[Quantity]) -> Equation {
    align(&eq.substitute(from), to)
}

/// String form of [`align`].
pub fn align_equation(equation: &str, quantities: &[Quantity]) -> Result<String, ParseError> {
    Ok(align(&parse_equation(equation)?, quantities).to_string())
}

mod rational_string {
    use super::*;
    use serde::{de::Error, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_decimal_string(v).unwrap_or_else(|| format!("{}/{}", v.numer(), v.denom())))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        crate::rational::parse_rational(&s).ok_or_else(|| D::Error::custom(format!("bad rational {s:?}")))
    }
}
