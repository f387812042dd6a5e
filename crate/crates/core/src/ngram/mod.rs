//! Backoff n-gram language models: counting, interpolated modified
//! Kneser-Ney estimation, ARPA I/O, scoring and perplexity.

mod arpa;
mod counts;
mod kneser_ney;
mod model;

pub use arpa::{format_arpa_float, read_arpa, write_arpa};
pub use counts::{count_ngrams, NGramCounts, RawNGramCounts, SymbolTable, MAX_ORDER};
pub use kneser_ney::{estimate_discounts, train, Discounts, DiscountSet, PruneThresholds};
pub use model::{perplexity, Entry, LMState, NGramModel, PerplexityReport};
