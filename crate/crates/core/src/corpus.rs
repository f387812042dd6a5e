//! Token counting, closed-vocabulary selection and OOV statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const SENTENCE_BEGIN: &str = "<s>";
pub const SENTENCE_END: &str = "</s>";
pub const UNKNOWN: &str = "<unk>";

/// Returns true for the reserved tokens that can never be vocabulary words.
pub fn is_special(token: &str) -> bool {
    token == SENTENCE_BEGIN || token == SENTENCE_END || token == UNKNOWN
}

/// Occurrence counts of whitespace-delimited tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenCountTable {
    counts: BTreeMap<String, u64>,
    total_tokens: u64,
}

impl TokenCountTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_line(&mut self, line: &str) {
        for token in line.split_whitespace() {
            self.add(token, 1);
        }
    }

    pub fn add(&mut self, token: &str, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(token.to_string()).or_insert(0) += count;
        self.total_tokens += count;
    }

    /// Commutative merge, used when counting is sharded.
    pub fn merge(&mut self, other: &TokenCountTable) {
        for (token, &count) in &other.counts {
            self.add(token, count);
        }
    }

    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Writes `word<TAB>count` lines sorted by word.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        for (word, count) in &self.counts {
            writeln!(sink, "{word}\t{count}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut table = TokenCountTable::new();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(idx + 1, "expected word<TAB>count"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| Error::parse(idx + 1, format!("invalid count {count:?}")))?;
            if word.is_empty() || word.contains(char::is_whitespace) {
                return Err(Error::parse(idx + 1, format!("invalid token {word:?}")));
            }
            table.add(word, count);
        }
        Ok(table)
    }
}

/// Counts every whitespace-delimited token of a line-oriented text stream.
pub fn count_tokens<R: BufRead>(source: R) -> Result<TokenCountTable> {
    let mut table = TokenCountTable::new();
    for line in source.lines() {
        table.add_line(&line?);
    }
    Ok(table)
}

/// A closed word set. Iteration order is lexicographic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: BTreeSet<String>,
}

impl Vocabulary {
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for word in words {
            let word = word.into();
            if word.is_empty() || word.contains(char::is_whitespace) {
                return Err(Error::Data(format!("invalid vocabulary word {word:?}")));
            }
            if is_special(&word) {
                return Err(Error::Data(format!(
                    "reserved token {word:?} cannot be a vocabulary word"
                )));
            }
            set.insert(word);
        }
        Ok(Vocabulary { words: set })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn is_subset(&self, other: &Vocabulary) -> bool {
        self.words.is_subset(&other.words)
    }

    pub fn specials(&self) -> [&'static str; 3] {
        [SENTENCE_BEGIN, SENTENCE_END, UNKNOWN]
    }

    /// One word per line, sorted, specials excluded.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        for word in &self.words {
            writeln!(sink, "{word}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut words = Vec::new();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            let word = line.trim();
            if word.is_empty() {
                continue;
            }
            if is_special(word) || word.contains(char::is_whitespace) {
                return Err(Error::parse(idx + 1, format!("invalid vocabulary word {word:?}")));
            }
            words.push(word.to_string());
        }
        Vocabulary::from_words(words)
    }
}

/// Selects base-dictionary words seen at least once in the counts, plus every
/// token seen at least `min_count` times.
pub fn build_vocabulary(
    counts: &TokenCountTable,
    base_dict_words: &BTreeSet<String>,
    min_count: u64,
) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let mut words = BTreeSet::new();
    for word in base_dict_words {
        if counts.get(word) >= 1 && !is_special(word) {
            words.insert(word.clone());
        }
    }
    for (word, count) in counts.iter() {
        if count >= min_count && !is_special(word) {
            words.insert(word.to_string());
        }
    }
    Ok(Vocabulary { words })
}

/// Fraction of running tokens not in the vocabulary. Specials count as OOV.
pub fn oov_rate<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Domain("OOV rate of an empty token sequence".into()));
    }
    let oov = tokens
        .iter()
        .filter(|t| !vocab.contains(t.as_ref()))
        .count();
    Ok(oov as f64 / tokens.len() as f64)
}
