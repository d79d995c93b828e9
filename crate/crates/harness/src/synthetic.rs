//! Templated one- and two-operator word problems whose gold equation and
//! answer come from the template itself.

use mwp_core::corpus::ProblemRecord;
use mwp_core::BigRational;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NAMES: &[(&str, &str)] = &[
    ("Tom", "he"),
    ("Anna", "she"),
    ("Mike", "he"),
    ("Lucy", "she"),
    ("Sam", "he"),
    ("Emma", "she"),
    ("Jack", "he"),
    ("Mia", "she"),
    ("Ben", "he"),
    ("Sara", "she"),
    ("Leo", "he"),
    ("Nina", "she"),
];

const OBJECTS: &[&str] = &[
    "apples", "pencils", "marbles", "cookies", "stickers", "books", "oranges", "cards", "shells", "balloons",
];

/// Numbers drawn for one problem, pairwise distinct.
struct Draw {
    a: i64,
    b: i64,
    c: i64,
}

fn distinct(rng: &mut ChaCha8Rng, lo: i64, hi: i64, taken: &[i64]) -> i64 {
    loop {
        let v = rng.random_range(lo..=hi);
        if !taken.contains(&v) {
            return v;
        }
    }
}

fn cap(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Number of templates in the grammar.
pub const TEMPLATES: usize = 12;

/// Renders template `t` as (text, literal equation, answer).
fn render(t: usize, rng: &mut ChaCha8Rng) -> (String, String, i64) {
    let (a_name, a_pron) = *NAMES.choose(rng).unwrap();
    let (b_name, _) = *NAMES
        .iter()
        .filter(|n| n.0 != a_name)
        .collect::<Vec<_>>()
        .choose(rng)
        .unwrap();
    let obj = *OBJECTS.choose(rng).unwrap();
    let pron = cap(a_pron);
    let mut d = Draw { a: 0, b: 0, c: 0 };
    let (text, eq, ans) = match t {
        0 => {
            d.a = distinct(rng, 2, 60, &[]);
            d.b = distinct(rng, 2, 60, &[d.a]);
            (
                format!("{a_name} has {} {obj}. {b_name} gives {a_name} {} more {obj}. How many {obj} does {a_name} have now?", d.a, d.b),
                format!("x={}+{}", d.a, d.b),
                d.a + d.b,
            )
        }
        1 => {
            d.a = distinct(rng, 20, 90, &[]);
            d.b = distinct(rng, 2, d.a - 1, &[d.a]);
            (
                format!(
                    "{a_name} had {} {obj}. {pron} gave {} {obj} to {b_name}. How many {obj} does {a_name} have left?",
                    d.a, d.b
                ),
                format!("x={}-{}", d.a, d.b),
                d.a - d.b,
            )
        }
        2 => {
            d.a = distinct(rng, 2, 12, &[]);
            d.b = distinct(rng, 2, 12, &[d.a]);
            (
                format!("{a_name} buys {} boxes of {obj}. Each box holds {} {obj}. How many {obj} does {a_name} buy in total?", d.a, d.b),
                format!("x={}*{}", d.a, d.b),
                d.a * d.b,
            )
        }
        3 => {
            d.b = distinct(rng, 2, 9, &[]);
            let q = distinct(rng, 2, 12, &[d.b]);
            d.a = d.b * q;
            (
                format!(
                    "{a_name} shares {} {obj} equally among {} friends. How many {obj} does each friend get?",
                    d.a, d.b
                ),
                format!("x={}/{}", d.a, d.b),
                q,
            )
        }
        4 => {
            d.a = distinct(rng, 2, 40, &[]);
            d.b = distinct(rng, 2, 40, &[d.a]);
            d.c = distinct(rng, 2, 40, &[d.a, d.b]);
            (
                format!("{a_name} has {} {obj}, {b_name} has {} {obj} and their teacher has {} {obj}. How many {obj} do they have altogether?", d.a, d.b, d.c),
                format!("x={}+{}+{}", d.a, d.b, d.c),
                d.a + d.b + d.c,
            )
        }
        5 => {
            d.a = distinct(rng, 2, 40, &[]);
            d.b = distinct(rng, 2, 9, &[d.a]);
            d.c = distinct(rng, 2, 9, &[d.a, d.b]);
            (
                format!("{a_name} has {} {obj}. {pron} buys {} bags with {} {obj} in each bag. How many {obj} does {a_name} have now?", d.a, d.b, d.c),
                format!("x={}+{}*{}", d.a, d.b, d.c),
                d.a + d.b * d.c,
            )
        }
        6 => {
            d.a = distinct(rng, 20, 80, &[]);
            d.b = distinct(rng, 2, d.a - 1, &[d.a]);
            d.c = distinct(rng, 2, 30, &[d.a, d.b]);
            (
                format!("{a_name} had {} {obj}. {pron} lost {} of them and then found {} more. How many {obj} does {a_name} have now?", d.a, d.b, d.c),
                format!("x={}-{}+{}", d.a, d.b, d.c),
                d.a - d.b + d.c,
            )
        }
        7 => {
            d.a = distinct(rng, 2, 20, &[]);
            d.b = distinct(rng, 2, 6, &[d.a]);
            (
                format!("{a_name} has {} {obj}. {b_name} has {} times as many {obj} as {a_name}. How many {obj} does {b_name} have?", d.a, d.b),
                format!("x={}*{}", d.a, d.b),
                d.a * d.b,
            )
        }
        8 => {
            d.a = distinct(rng, 20, 60, &[]);
            d.b = distinct(rng, 2, d.a - 1, &[d.a]);
            (
                format!("{a_name} has {} {obj}. {b_name} has {} fewer {obj} than {a_name}. How many {obj} do they have together?", d.a, d.b),
                format!("x={}+({}-{})", d.a, d.a, d.b),
                2 * d.a - d.b,
            )
        }
        9 => {
            d.a = distinct(rng, 5, 20, &[]);
            d.b = distinct(rng, 2, 9, &[d.a]);
            d.c = distinct(rng, 2, d.a * d.b - 1, &[d.a, d.b]);
            (
                format!("{a_name} earns {} dollars per hour and works {} hours. {pron} spends {} dollars. How much money does {a_name} have left?", d.a, d.b, d.c),
                format!("x={}*{}-{}", d.a, d.b, d.c),
                d.a * d.b - d.c,
            )
        }
        10 => {
            d.b = distinct(rng, 2, 9, &[]);
            let q = distinct(rng, 2, 12, &[d.b]);
            d.a = d.b * q;
            d.c = distinct(rng, 2, 20, &[d.a, d.b]);
            (
                format!("{a_name} splits {} {obj} into {} equal piles and then adds {} {obj} to one pile. How many {obj} are in that pile?", d.a, d.b, d.c),
                format!("x={}/{}+{}", d.a, d.b, d.c),
                q + d.c,
            )
        }
        _ => {
            d.a = distinct(rng, 40, 99, &[]);
            d.b = distinct(rng, 2, 19, &[d.a]);
            d.c = distinct(rng, 2, 19, &[d.a, d.b]);
            (
                format!("There are {} {obj} in a basket. {a_name} takes away {} and {b_name} takes away {}. How many {obj} remain in the basket?", d.a, d.b, d.c),
                format!("x={}-{}-{}", d.a, d.b, d.c),
                d.a - d.b - d.c,
            )
        }
    };
    (text, eq, ans)
}

/// `n` original records cycling through the templates, ids `syn-0001…`.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<ProblemRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (text, eq, ans) = render(i % TEMPLATES, &mut rng);
            ProblemRecord::original(
                &format!("syn-{:04}", i + 1),
                &text,
                &eq,
                BigRational::from_integer(ans.into()),
            )
        })
        .collect()
}
