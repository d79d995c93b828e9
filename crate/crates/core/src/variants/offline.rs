//! Rule-based variant generation: clause reordering, name and object
//! substitution, and distractor sentences.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use num_rational::BigRational;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use super::{validate_variant, Shortfall, Variant, VariantCounts, VariantSet};
use crate::corpus::{ProblemRecord, VariationType};
use crate::expr::Expr;
use crate::quantity::TaggedProblem;

pub(crate) const MALE_NAMES: &[&str] = &[
    "Mike", "Tom", "Dan", "John", "Sam", "Keith", "Jack", "Paul", "Mark", "David", "Luke", "Ryan", "Peter", "Adam",
    "Ben", "Carl", "Fred", "Gary", "Henry", "Oliver", "Leo", "Max", "Nick", "Tim",
];
pub(crate) const FEMALE_NAMES: &[&str] = &[
    "Emily", "Mary", "Sally", "Melanie", "Alyssa", "Sara", "Joan", "Jessica", "Nancy", "Sandy", "Alice", "Betty",
    "Clara", "Diana", "Grace", "Helen", "Julia", "Kate", "Lucy", "Olivia", "Anna", "Emma", "Mia", "Nina", "Ruby",
    "Zoe",
];

/// Interchangeable object nouns as (singular, plural).
pub(crate) const OBJECT_GROUPS: &[&[(&str, &str)]] = &[
    &[
        ("apple", "apples"),
        ("pear", "pears"),
        ("orange", "oranges"),
        ("peach", "peaches"),
        ("plum", "plums"),
    ],
    &[
        ("marble", "marbles"),
        ("bead", "beads"),
        ("button", "buttons"),
        ("sticker", "stickers"),
    ],
    &[
        ("question", "questions"),
        ("puzzle", "puzzles"),
        ("riddle", "riddles"),
        ("problem", "problems"),
    ],
    &[
        ("book", "books"),
        ("magazine", "magazines"),
        ("comic", "comics"),
        ("notebook", "notebooks"),
    ],
    &[
        ("cookie", "cookies"),
        ("cupcake", "cupcakes"),
        ("muffin", "muffins"),
        ("brownie", "brownies"),
    ],
    &[
        ("pencil", "pencils"),
        ("pen", "pens"),
        ("crayon", "crayons"),
        ("marker", "markers"),
    ],
    &[
        ("dog", "dogs"),
        ("cat", "cats"),
        ("rabbit", "rabbits"),
        ("puppy", "puppies"),
    ],
    &[("car", "cars"), ("truck", "trucks"), ("bus", "buses"), ("van", "vans")],
    &[
        ("flower", "flowers"),
        ("rose", "roses"),
        ("tulip", "tulips"),
        ("daisy", "daisies"),
    ],
    &[
        ("shirt", "shirts"),
        ("sock", "socks"),
        ("hat", "hats"),
        ("scarf", "scarves"),
    ],
    &[
        ("balloon", "balloons"),
        ("kite", "kites"),
        ("ball", "balls"),
        ("toy", "toys"),
    ],
    &[
        ("card", "cards"),
        ("stamp", "stamps"),
        ("coin", "coins"),
        ("badge", "badges"),
    ],
    &[
        ("shell", "shells"),
        ("pebble", "pebbles"),
        ("stone", "stones"),
        ("acorn", "acorns"),
    ],
    &[
        ("wood", "wood"),
        ("plank", "planks"),
        ("board", "boards"),
        ("log", "logs"),
    ],
];

const TRAILING_CONNECTIVES: &[&str] = &[
    "given that",
    "if",
    "knowing that",
    "when",
    "assuming that",
    "provided that",
];
const LEADING_CONNECTIVES: &[&str] = &[
    "Given that",
    "If",
    "Knowing that",
    "Since",
    "Assuming that",
    "Suppose that",
];

const ACTIVITIES: &[&str] = &[
    "reading a book",
    "walking the dog",
    "listening to music",
    "cleaning the room",
    "watching a movie",
    "playing the piano",
    "drawing pictures",
    "talking on the phone",
];

/// First words lowercased when a sentence moves away from the start.
const STARTERS: &[&str] = &[
    "a", "an", "the", "there", "he", "she", "they", "it", "if", "during", "each", "every", "in", "on", "at", "after",
    "before", "then", "while", "when", "his", "her", "their", "some", "how", "what", "who", "which", "this", "that",
    "these", "those", "for", "one", "all", "we", "you", "i",
];

static WORD_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z]+").unwrap());

fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        cur.push(c);
        let at_end = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if matches!(c, '.' | '?' | '!') && at_end {
            let s = cur.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            cur.clear();
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn lower_first(s: &str) -> String {
    let first = s.split(|c: char| !c.is_alphabetic()).next().unwrap_or("");
    if STARTERS.contains(&first.to_lowercase().as_str()) {
        let mut cs = s.chars();
        match cs.next() {
            Some(c) => c.to_lowercase().chain(cs).collect(),
            None => String::new(),
        }
    } else {
        s.to_string()
    }
}

fn upper_first(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

fn strip_end(s: &str) -> &str {
    s.trim_end_matches(['.', '?', '!']).trim_end()
}

/// Index of the question sentence, the last one ending with `?`.
fn question_index(sentences: &[String]) -> Option<usize> {
    sentences.iter().rposition(|s| s.ends_with('?'))
}

fn phrase_order_candidates(text: &str) -> Result<Vec<String>, String> {
    let sentences = split_sentences(text);
    let q = question_index(&sentences).ok_or("no question sentence")?;
    if sentences.len() < 2 {
        return Err("no context to move".into());
    }
    let question = strip_end(&sentences[q]).to_string();
    let clauses: Vec<String> = sentences
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != q)
        .map(|(_, s)| lower_first(strip_end(s)))
        .collect();
    let mut out = Vec::new();
    for joiner in [" and ", "; "] {
        let ctx = clauses.join(joiner);
        for conn in TRAILING_CONNECTIVES {
            out.push(format!("{question}, {conn} {ctx}?"));
        }
        for conn in LEADING_CONNECTIVES {
            out.push(format!("{conn} {ctx}, {}?", lower_first(&question)));
        }
    }
    Ok(out)
}

fn gender_of(name: &str) -> Option<&'static [&'static str]> {
    if MALE_NAMES.contains(&name) {
        Some(MALE_NAMES)
    } else if FEMALE_NAMES.contains(&name) {
        Some(FEMALE_NAMES)
    } else {
        None
    }
}

fn object_group(word: &str) -> Option<usize> {
    let w = word.to_lowercase();
    OBJECT_GROUPS
        .iter()
        .position(|g| g.iter().any(|(s, p)| *s == w || *p == w))
}

fn match_case(template: &str, word: &str) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        upper_first(word)
    } else {
        word.to_string()
    }
}

/// One consistent substitution of the names and objects found in `text`.
fn entity_swap(text: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    let words: Vec<&str> = WORD_RE.find_iter(text).map(|m| m.as_str()).collect();
    let names: BTreeSet<&str> = words.iter().copied().filter(|w| gender_of(w).is_some()).collect();
    let groups: BTreeSet<usize> = words.iter().filter_map(|w| object_group(w)).collect();
    if names.is_empty() && groups.is_empty() {
        return None;
    }
    let mut name_map: BTreeMap<&str, &str> = BTreeMap::new();
    for name in &names {
        let pool = gender_of(name).expect("known name");
        let choices: Vec<&str> = pool
            .iter()
            .copied()
            .filter(|c| !names.contains(c) && !name_map.values().any(|v| v == c))
            .collect();
        if let Some(c) = choices.choose(rng) {
            name_map.insert(name, c);
        }
    }
    // which member of each group the text uses -> replacement member
    let mut object_map: BTreeMap<String, String> = BTreeMap::new();
    for g in groups {
        let members = OBJECT_GROUPS[g];
        let used: BTreeSet<usize> = words
            .iter()
            .filter_map(|w| {
                let w = w.to_lowercase();
                members.iter().position(|(s, p)| *s == w || *p == w)
            })
            .collect();
        let free: Vec<usize> = (0..members.len()).filter(|i| !used.contains(i)).collect();
        let mut targets = free.clone();
        targets.shuffle(rng);
        for (src, dst) in used.iter().zip(targets) {
            let (s0, p0) = members[*src];
            let (s1, p1) = members[dst];
            object_map.insert(s0.to_string(), s1.to_string());
            object_map.insert(p0.to_string(), p1.to_string());
        }
    }
    let out = WORD_RE
        .replace_all(text, |c: &regex::Captures<'_>| {
            let w = &c[0];
            if let Some(n) = name_map.get(w) {
                return n.to_string();
            }
            match object_map.get(&w.to_lowercase()) {
                Some(o) => match_case(w, o),
                None => w.to_string(),
            }
        })
        .into_owned();
    (out != text).then_some(out)
}

/// Values that a distractor must avoid: the text's quantities and every
/// literal in the seed equation.
fn taken_values(seed: &ProblemRecord, tagged: &TaggedProblem) -> BTreeSet<BigRational> {
    let mut taken: BTreeSet<BigRational> = tagged.values().into_iter().collect();
    if let Ok(eq) = seed.parsed_equation() {
        eq.for_each_leaf(&mut |leaf| {
            if let Expr::Number(n) = leaf {
                taken.insert(n.clone());
            }
        });
    }
    taken
}

fn distractor(text: &str, taken: &BTreeSet<BigRational>, rng: &mut ChaCha8Rng) -> Option<String> {
    let free: Vec<i64> = (2..100)
        .filter(|n| !taken.contains(&BigRational::from_integer((*n).into())))
        .collect();
    let n = *free.choose(rng)?;
    let who = WORD_RE
        .find_iter(text)
        .map(|m| m.as_str())
        .find(|w| gender_of(w).is_some())
        .map(str::to_string)
        .unwrap_or_else(|| {
            let pool = if rng.random_bool(0.5) { MALE_NAMES } else { FEMALE_NAMES };
            pool.choose(rng).expect("non-empty").to_string()
        });
    let activity = ACTIVITIES.choose(rng).expect("non-empty");
    let sentence = if rng.random_bool(0.5) {
        format!("{who} also spent {n} minutes {activity}.")
    } else {
        format!("Earlier that day, {who} spent {n} minutes {activity}.")
    };
    let mut sentences = split_sentences(text);
    let at = question_index(&sentences).unwrap_or(sentences.len());
    sentences.insert(at, sentence);
    Some(sentences.join(" "))
}

fn mix(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, folded into the caller's seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Deterministic variants of `seed` for a given `rng_seed`.
///
/// Each family draws until it has its count of distinct texts or runs out
/// of attempts; the missing ones are reported as shortfalls.
pub fn generate_offline(seed: &ProblemRecord, counts: VariantCounts, rng_seed: u64) -> VariantSet {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(rng_seed, &seed.id));
    let tagged = TaggedProblem::new(&seed.text, None).expect("no equation to parse");
    let mut set = VariantSet {
        seed_id: seed.id.clone(),
        variants: Vec::new(),
        shortfalls: Vec::new(),
    };
    let mut seen: BTreeSet<String> = BTreeSet::from([seed.text.clone()]);
    let mut push = |set: &mut VariantSet, texts: Vec<String>, want: usize, ty: VariationType, why: &str| {
        let mut got = 0;
        for t in texts {
            if got == want {
                break;
            }
            if seen.insert(t.clone()) {
                let (valid, rejection_reason) = validate_variant(&tagged, &t, ty);
                set.variants.push(Variant {
                    text: t,
                    variation_type: ty,
                    valid,
                    rejection_reason,
                });
                got += 1;
            }
        }
        for _ in got..want {
            set.shortfalls.push(Shortfall {
                variation_type: ty,
                reason: why.to_string(),
            });
        }
    };

    let phrase = match phrase_order_candidates(&seed.text) {
        Ok(mut c) => {
            c.shuffle(&mut rng);
            (c, "no further distinct reordering")
        }
        Err(e) => (
            Vec::new(),
            if e.contains("question") {
                "no question sentence"
            } else {
                "no context to move"
            },
        ),
    };
    push(&mut set, phrase.0, counts.k1, VariationType::PhraseOrder, phrase.1);

    let attempts = 20 * counts.k2;
    let swaps: Vec<String> = (0..attempts)
        .filter_map(|_| entity_swap(&seed.text, &mut rng))
        .collect();
    let why = if swaps.is_empty() {
        "no known names or objects"
    } else {
        "no further distinct substitution"
    };
    push(&mut set, swaps, counts.k2, VariationType::EntitySwap, why);

    let taken = taken_values(seed, &tagged);
    let attempts = 20 * counts.k3;
    let extras: Vec<String> = (0..attempts)
        .filter_map(|_| distractor(&seed.text, &taken, &mut rng))
        .collect();
    push(
        &mut set,
        extras,
        counts.k3,
        VariationType::Distractor,
        "no further distinct distractor",
    );
    set
}
