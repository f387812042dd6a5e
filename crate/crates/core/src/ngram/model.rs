use std::collections::HashMap;
use std::io::BufRead;

use super::counts::SymbolTable;
use super::kneser_ney::backoff_score;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// log10 value written for impossible events such as predicting `<s>`.
pub const LOG10_ZERO: f64 = -99.0;

pub(crate) type NGramTable = HashMap<Box<[u32]>, Entry>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub log10_prob: f64,
    pub log10_backoff: Option<f64>,
}

/// Scoring context: the longest stored suffix of the word history.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LMState(Vec<u32>);

impl LMState {
    pub fn empty() -> Self {
        LMState(Vec::new())
    }

    pub fn tokens(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// An ARPA-style backoff model. Immutable once built.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    symbols: SymbolTable,
    tables: Vec<NGramTable>,
}

impl NGramModel {
    pub(crate) fn from_tables(
        order: usize,
        symbols: SymbolTable,
        tables: Vec<NGramTable>,
    ) -> Result<Self> {
        let model = NGramModel {
            order,
            symbols,
            tables,
        };
        if let Some(gram) = model.prefix_closure_violation() {
            return Err(Error::Data(format!(
                "n-gram {:?} has no stored prefix",
                model.render(&gram)
            )));
        }
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    /// Non-special words of the model.
    pub fn vocabulary(&self) -> Vocabulary {
        let words = self
            .symbols
            .symbols()
            .iter()
            .enumerate()
            .filter(|&(id, _)| !self.symbols.is_special(id as u32))
            .map(|(_, s)| s.clone());
        Vocabulary::from_words(words).expect("model symbols are valid words")
    }

    pub fn ngram_count(&self, n: usize) -> usize {
        self.tables.get(n.wrapping_sub(1)).map_or(0, HashMap::len)
    }

    pub fn total_ngrams(&self) -> usize {
        self.tables.iter().map(HashMap::len).sum()
    }

    pub fn entry(&self, gram: &[u32]) -> Option<&Entry> {
        if gram.is_empty() {
            return None;
        }
        self.tables.get(gram.len() - 1)?.get(gram)
    }

    pub fn entry_words(&self, words: &[&str]) -> Option<&Entry> {
        let ids: Option<Vec<u32>> = words.iter().map(|w| self.symbols.get(w)).collect();
        self.entry(&ids?)
    }

    /// Entries of order `n`, in unspecified order.
    pub fn entries(&self, n: usize) -> impl Iterator<Item = (&[u32], &Entry)> {
        self.tables[n - 1].iter().map(|(g, e)| (&g[..], e))
    }

    pub fn render(&self, gram: &[u32]) -> String {
        gram.iter()
            .map(|&id| self.symbols.symbol(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub(crate) fn prefix_closure_violation(&self) -> Option<Vec<u32>> {
        for n in 2..=self.order {
            for gram in self.tables[n - 1].keys() {
                if !self.tables[n - 2].contains_key(&gram[..n - 1]) {
                    return Some(gram.to_vec());
                }
            }
        }
        None
    }

    /// State before the first word of a sentence.
    pub fn begin_state(&self) -> LMState {
        if self.order >= 2 {
            LMState(vec![self.symbols.bos()])
        } else {
            LMState::empty()
        }
    }

    /// Scores `word` (a symbol id) after `state`. Returns log10 P and the next state.
    pub fn score(&self, state: &LMState, word: u32) -> (f64, LMState) {
        let log10_prob = backoff_score(&self.tables, &state.0, word);
        if word == self.symbols.eos() {
            return (log10_prob, LMState::empty());
        }
        let mut history = Vec::with_capacity(state.0.len() + 1);
        history.extend_from_slice(&state.0);
        history.push(word);
        let max_len = self.order - 1;
        let start = history.len().saturating_sub(max_len);
        for s in start..history.len() {
            let suffix = &history[s..];
            if self.tables[suffix.len() - 1].contains_key(suffix) {
                return (log10_prob, LMState(suffix.to_vec()));
            }
        }
        (log10_prob, LMState::empty())
    }

    /// Scores a word given as text; unknown words are scored as `<unk>`.
    pub fn score_word(&self, state: &LMState, word: &str) -> (f64, LMState) {
        let id = if word == crate::corpus::SENTENCE_END {
            self.symbols.eos()
        } else {
            self.symbols.id_or_unk(word)
        };
        self.score(state, id)
    }

    /// log10 probability of a whole sentence including `</s>`.
    pub fn score_sentence(&self, words: &[&str]) -> f64 {
        let mut state = self.begin_state();
        let mut total = 0.0;
        for w in words {
            let (lp, next) = self.score(&state, self.symbols.id_or_unk(w));
            total += lp;
            state = next;
        }
        total + self.score(&state, self.symbols.eos()).0
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PerplexityReport {
    pub ppl: f64,
    pub oov_percent: f64,
    /// Scored tokens, including one `</s>` per sentence.
    pub tokens: u64,
    pub words: u64,
    pub oov_words: u64,
    pub sentences: u64,
    pub log10_prob: f64,
}

/// Perplexity over a sentence-per-line text. OOV words are scored as `<unk>`
/// and also reported as an OOV percentage of running words.
pub fn perplexity<R: BufRead>(model: &NGramModel, test: R) -> Result<PerplexityReport> {
    let vocab = model.vocabulary();
    let eos = model.symbols.eos();
    let mut report = PerplexityReport {
        ppl: 0.0,
        oov_percent: 0.0,
        tokens: 0,
        words: 0,
        oov_words: 0,
        sentences: 0,
        log10_prob: 0.0,
    };
    for line in test.lines() {
        let line = line?;
        let mut state = model.begin_state();
        for word in line.split_whitespace() {
            if !vocab.contains(word) {
                report.oov_words += 1;
            }
            let (lp, next) = model.score(&state, model.symbols.id_or_unk(word));
            report.log10_prob += lp;
            report.words += 1;
            state = next;
        }
        report.log10_prob += model.score(&state, eos).0;
        report.sentences += 1;
    }
    if report.sentences == 0 {
        return Err(Error::Domain("perplexity of an empty test set".into()));
    }
    report.tokens = report.words + report.sentences;
    report.ppl = 10f64.powf(-report.log10_prob / report.tokens as f64);
    report.oov_percent = if report.words == 0 {
        0.0
    } else {
        100.0 * report.oov_words as f64 / report.words as f64
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::{count_ngrams, read_arpa, train, PruneThresholds};
    use approx::assert_relative_eq;

    const BIGRAM_ARPA: &str = "\\data\\
ngram 1=6
ngram 2=2

\\1-grams:
-99\t<s>\t-0.30103
-0.69897\t</s>
-0.69897\t<unk>
-0.3\ta\t-1
-0.69897\tb
-0.69897\tc

\\2-grams:
-0.60206\t<s> a
-0.60206\ta b

\\end\\
";

    fn bigram() -> NGramModel {
        read_arpa(BIGRAM_ARPA.as_bytes()).unwrap()
    }

    #[test]
    fn direct_lookup() {
        let m = bigram();
        let a = m.symbols().get("a").unwrap();
        let b = m.symbols().get("b").unwrap();
        let (lp, next) = m.score(&LMState(vec![a]), b);
        assert_relative_eq!(lp, -0.60206, epsilon = 1e-12);
        assert_eq!(next, LMState(vec![b]));
    }

    #[test]
    fn backoff_rule() {
        let m = bigram();
        let a = m.symbols().get("a").unwrap();
        let (lp, _) = m.score_word(&LMState(vec![a]), "c");
        assert_relative_eq!(10f64.powf(lp), 0.02, epsilon = 1e-6);
    }

    #[test]
    fn sentence_end_resets_state() {
        let m = bigram();
        let (_, next) = m.score_word(&m.begin_state(), "</s>");
        assert!(next.is_empty());
    }

    #[test]
    fn oov_scored_as_unk() {
        let m = bigram();
        let s = m.begin_state();
        assert_eq!(m.score_word(&s, "zzz"), m.score_word(&s, "<unk>"));
    }

    #[test]
    fn uniform_unigram_perplexity() {
        let mut arpa = String::from("\\data\\\nngram 1=11\n\n\\1-grams:\n-99\t<s>\n-1\t</s>\n-1\t<unk>\n");
        for w in "a b c d e f g h".split(' ') {
            arpa.push_str(&format!("-1\t{w}\n"));
        }
        arpa.push_str("\n\\end\\\n");
        let m = read_arpa(arpa.as_bytes()).unwrap();
        let r = perplexity(&m, "a b c\nh h\nzz a".as_bytes()).unwrap();
        assert_relative_eq!(r.ppl, 10.0, max_relative = 1e-9);
        assert_eq!(r.tokens, 3 + 2 + 2 + 3);
        assert_eq!(r.oov_words, 1);
        assert_relative_eq!(r.oov_percent, 100.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn certain_model_has_unit_perplexity() {
        let arpa = "\\data\\\nngram 1=4\nngram 2=2\n\n\\1-grams:\n-99\t<s>\t0\n-99\t</s>\n-99\t<unk>\n-99\ta\t0\n\n\\2-grams:\n0\t<s> a\n0\ta </s>\n\n\\end\\\n";
        let m = read_arpa(arpa.as_bytes()).unwrap();
        let r = perplexity(&m, "a\na\n".as_bytes()).unwrap();
        assert_eq!(r.ppl, 1.0);
    }

    #[test]
    fn empty_test_set() {
        assert!(matches!(perplexity(&bigram(), "".as_bytes()), Err(Error::Domain(_))));
    }

    #[test]
    fn trained_model_sums_to_one() {
        let vocab = Vocabulary::from_words(["a", "b", "c"]).unwrap();
        let c = count_ngrams("a b c\na b\nb c a\nc c".as_bytes(), 3, &vocab).unwrap();
        let m = train(&c, &PruneThresholds::none(3)).unwrap();
        let ids: Vec<u32> = m.symbols().predictable().collect();
        let mut contexts = vec![LMState::empty(), m.begin_state()];
        for &x in &ids {
            contexts.push(m.score(&m.begin_state(), x).1);
            for &y in &ids {
                let s = m.score(&m.begin_state(), x).1;
                contexts.push(m.score(&s, y).1);
            }
        }
        for ctx in contexts {
            let total: f64 = ids.iter().map(|&w| 10f64.powf(m.score(&ctx, w).0)).sum();
            assert!((total - 1.0).abs() < 1e-9, "{ctx:?} {total}");
        }
    }
}
