//! Building blocks for a closed-vocabulary, count-based ASR pipeline.
//!
//! The crate covers vocabulary selection from raw training text, interpolated
//! modified Kneser-Ney n-gram models with ARPA I/O, a joint-sequence
//! grapheme-to-phoneme model, pronunciation lexica compiled into lexical prefix
//! trees, CTC decoding over emission matrices, and word error rate scoring.

pub mod corpus;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod g2p;
pub mod lexicon;
pub mod ngram;

pub use error::{Error, Result};
