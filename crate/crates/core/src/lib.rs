//! Core algebra and data handling for the math-word-problem toolkit.
//!
//! * [`expr`] parses, evaluates, canonicalizes and solves equations over
//!   quantity tags `[Qi]`, constants and the unknown `x`.
//! * [`quantity`] finds numeric quantities in problem text and aligns
//!   equation literals to them.
//! * [`corpus`] loads, validates, summarizes and splits JSON-lines corpora.
//! * [`variants`] builds paraphrasing prompts, talks to a chat-completion
//!   endpoint, and provides a deterministic rule-based generator.
//! * [`voting`] elects one equation among candidate predictions.

pub mod corpus;
pub mod expr;
pub mod quantity;
pub mod rational;
pub mod variants;
pub mod voting;

pub use expr::{CanonicalForm, Equation, Expr, Op};
pub use num_rational::BigRational;
