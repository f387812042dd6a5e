use std::collections::HashMap;
use std::io::BufRead;

use crate::corpus::{Vocabulary, SENTENCE_BEGIN, SENTENCE_END, UNKNOWN};
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 6;

/// Dense token ids for the vocabulary plus the three reserved tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
    unk: u32,
    bos: u32,
    eos: u32,
}

impl SymbolTable {
    /// Ids 0, 1, 2 are `<unk>`, `<s>`, `</s>`; words follow in vocabulary order.
    pub fn from_vocabulary(vocab: &Vocabulary) -> Self {
        let symbols = [UNKNOWN, SENTENCE_BEGIN, SENTENCE_END]
            .into_iter()
            .chain(vocab.iter())
            .map(str::to_string)
            .collect();
        Self::from_symbols(symbols).expect("vocabulary is duplicate free")
    }

    /// Builds a table from an arbitrary symbol list that must contain the
    /// three reserved tokens.
    pub fn from_symbols(symbols: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate symbol {s:?}")));
            }
        }
        let find = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| Error::Data(format!("missing reserved token {s}")))
        };
        let (unk, bos, eos) = (find(UNKNOWN)?, find(SENTENCE_BEGIN)?, find(SENTENCE_END)?);
        Ok(SymbolTable {
            symbols,
            index,
            unk,
            bos,
            eos,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or of `<unk>` when the token is unknown.
    pub fn id_or_unk(&self, token: &str) -> u32 {
        match self.index.get(token) {
            Some(&id) if id != self.bos && id != self.eos => id,
            Some(_) => self.unk,
            None => self.unk,
        }
    }

    pub fn symbol(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn unk(&self) -> u32 {
        self.unk
    }

    pub fn bos(&self) -> u32 {
        self.bos
    }

    pub fn eos(&self) -> u32 {
        self.eos
    }

    pub fn is_special(&self, id: u32) -> bool {
        id == self.unk || id == self.bos || id == self.eos
    }

    /// Ids that can be predicted: every symbol except `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.symbols.len() as u32).filter(move |&id| id != self.bos)
    }
}

/// Raw occurrence counts for every order. Shards merge by addition.
#[derive(Debug, Clone)]
pub struct RawNGramCounts {
    order: usize,
    symbols: SymbolTable,
    raw: Vec<HashMap<Vec<u32>, u64>>,
}

impl RawNGramCounts {
    pub fn new(order: usize, vocab: &Vocabulary) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::Config(format!(
                "n-gram order {order} outside 1..={MAX_ORDER}"
            )));
        }
        Ok(RawNGramCounts {
            order,
            symbols: SymbolTable::from_vocabulary(vocab),
            raw: vec![HashMap::new(); order],
        })
    }

    /// Adds one sentence, wrapped in `<s> .. </s>`, mapping unknown words to `<unk>`.
    pub fn add_sentence(&mut self, line: &str) {
        let mut ids = vec![self.symbols.bos()];
        ids.extend(line.split_whitespace().map(|w| self.symbols.id_or_unk(w)));
        ids.push(self.symbols.eos());
        for n in 1..=self.order {
            for gram in ids.windows(n) {
                *self.raw[n - 1].entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &RawNGramCounts) -> Result<()> {
        if self.order != other.order || self.symbols != other.symbols {
            return Err(Error::Config("cannot merge counts of different shape".into()));
        }
        for (mine, theirs) in self.raw.iter_mut().zip(&other.raw) {
            for (gram, &c) in theirs {
                *mine.entry(gram.clone()).or_insert(0) += c;
            }
        }
        Ok(())
    }

    pub fn raw(&self, n: usize) -> &HashMap<Vec<u32>, u64> {
        &self.raw[n - 1]
    }

    /// Replaces lower-order counts by continuation counts (number of distinct
    /// one-token left extensions). N-grams starting with `<s>` cannot be
    /// extended and keep their raw counts.
    pub fn finalize(self) -> NGramCounts {
        let bos = self.symbols.bos();
        let mut counts: Vec<HashMap<Vec<u32>, u64>> = Vec::with_capacity(self.order);
        for n in 1..=self.order {
            if n == self.order {
                counts.push(self.raw[n - 1].clone());
                continue;
            }
            let mut adjusted: HashMap<Vec<u32>, u64> = HashMap::new();
            for (gram, &c) in &self.raw[n - 1] {
                if gram[0] == bos {
                    adjusted.insert(gram.clone(), c);
                }
            }
            for longer in self.raw[n].keys() {
                let suffix = &longer[1..];
                if suffix[0] != bos {
                    *adjusted.entry(suffix.to_vec()).or_insert(0) += 1;
                }
            }
            counts.push(adjusted);
        }
        NGramCounts {
            order: self.order,
            symbols: self.symbols,
            counts,
        }
    }
}

/// Counts used for estimation: continuation counts below the highest order,
/// raw counts at the highest order.
#[derive(Debug, Clone)]
pub struct NGramCounts {
    order: usize,
    symbols: SymbolTable,
    counts: Vec<HashMap<Vec<u32>, u64>>,
}

impl NGramCounts {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    /// Counts at order `n` (1-based).
    pub fn at(&self, n: usize) -> &HashMap<Vec<u32>, u64> {
        &self.counts[n - 1]
    }

    pub fn get(&self, gram: &[u32]) -> u64 {
        self.counts
            .get(gram.len().wrapping_sub(1))
            .and_then(|t| t.get(gram))
            .copied()
            .unwrap_or(0)
    }

    /// Looks up an n-gram by its token strings.
    pub fn get_words(&self, words: &[&str]) -> u64 {
        let ids: Option<Vec<u32>> = words.iter().map(|w| self.symbols.get(w)).collect();
        ids.map_or(0, |ids| self.get(&ids))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(HashMap::is_empty)
    }
}

/// Counts all n-grams up to `order` over a sentence-per-line corpus.
pub fn count_ngrams<R: BufRead>(corpus: R, order: usize, vocab: &Vocabulary) -> Result<NGramCounts> {
    let mut raw = RawNGramCounts::new(order, vocab)?;
    for line in corpus.lines() {
        raw.add_sentence(&line?);
    }
    Ok(raw.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_words(words.iter().copied()).unwrap()
    }

    #[test]
    fn single_sentence_bigrams() {
        let c = count_ngrams("a b".as_bytes(), 2, &vocab(&["a", "b"])).unwrap();
        let bigrams = c.at(2);
        assert_eq!(bigrams.len(), 3);
        assert_eq!(c.get_words(&["<s>", "a"]), 1);
        assert_eq!(c.get_words(&["a", "b"]), 1);
        assert_eq!(c.get_words(&["b", "</s>"]), 1);
    }

    #[test]
    fn continuation_counts() {
        let c = count_ngrams("a b\nc b".as_bytes(), 2, &vocab(&["a", "b", "c"])).unwrap();
        assert_eq!(c.get_words(&["b"]), 2);
        // `a` and `c` only ever follow <s>
        assert_eq!(c.get_words(&["a"]), 1);
        assert_eq!(c.get_words(&["</s>"]), 1);
        // <s>-initial n-grams keep raw counts
        assert_eq!(c.get_words(&["<s>"]), 2);
    }

    #[test]
    fn oov_tokens_become_unk() {
        let c = count_ngrams("a x".as_bytes(), 2, &vocab(&["a"])).unwrap();
        assert_eq!(c.get_words(&["a", "<unk>"]), 1);
        assert_eq!(c.get_words(&["<unk>", "</s>"]), 1);
        assert!(c.symbols().get("x").is_none());
    }

    #[test]
    fn order_out_of_range() {
        for order in [0, 7] {
            assert!(matches!(
                count_ngrams("a".as_bytes(), order, &vocab(&["a"])),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn sharded_merge_matches_single_pass() {
        let v = vocab(&["a", "b", "c"]);
        let lines = ["a b c", "b b", "c a", "a"];
        let mut whole = RawNGramCounts::new(3, &v).unwrap();
        lines.iter().for_each(|l| whole.add_sentence(l));
        let mut left = RawNGramCounts::new(3, &v).unwrap();
        let mut right = RawNGramCounts::new(3, &v).unwrap();
        lines[..2].iter().for_each(|l| left.add_sentence(l));
        lines[2..].iter().for_each(|l| right.add_sentence(l));
        right.merge(&left).unwrap();
        for n in 1..=3 {
            assert_eq!(right.raw(n), whole.raw(n));
        }
    }
}
