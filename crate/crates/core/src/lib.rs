//! Semiring parsing with tensor-valued rule weights.
//!
//! Every rule of a context-free grammar carries a tensor over a semiring
//! whose ranks are the dimensions of its nonterminals. The crate computes
//! derivation values, inner values over a CKY chart (including cyclic
//! buckets by fixpoint iteration), outer values, and expected rule counts.

pub mod cli;
pub mod deduction;
pub mod derivation;
pub mod error;
pub mod grammar;
pub mod outside;
pub mod semiring;
pub mod tensor;

pub use error::{Error, Result};
