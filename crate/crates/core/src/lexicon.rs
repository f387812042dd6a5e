//! Pronunciation lexica and their compilation into lexical prefix trees.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read, Write};

use rayon::prelude::*;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::g2p::{apply_g2p, GraphoneModel, PhonemeAlphabet};

pub const BLANK: &str = "<blank>";
pub const WORD_FINAL_SUFFIX: &str = "#";
const TREE_MAGIC: &[u8; 5] = b"TREE1";
const G2P_NBEST: usize = 10;

/// Removes CMUdict stress digits (0, 1, 2) from the end of each phoneme.
pub fn strip_stress<S: AsRef<str>>(pron: &[S]) -> Vec<String> {
    pron.iter()
        .map(|p| {
            let p = p.as_ref();
            p.strip_suffix(['0', '1', '2']).unwrap_or(p).to_string()
        })
        .collect()
}

/// Reads a CMUdict-style dictionary (`WORD  PH1 PH2`, `WORD(2)  ...`, `;;;`
/// comments) or a tab-separated lexicon. Words are uppercased; variant order
/// is kept and exact duplicates dropped.
pub fn read_pronunciation_dict<R: BufRead>(source: R) -> Result<BTreeMap<String, Vec<Vec<String>>>> {
    let mut dict: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with(";;;") {
            continue;
        }
        let (word, pron) = match text.split_once('\t') {
            Some((w, p)) => (w.trim(), p),
            None => text
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::parse(idx + 1, "entry without pronunciation"))?,
        };
        let word = match word.rfind('(') {
            Some(open) if word.ends_with(')') && open > 0 => &word[..open],
            _ => word,
        };
        let phonemes: Vec<String> = pron.split_whitespace().map(str::to_string).collect();
        if phonemes.is_empty() {
            return Err(Error::parse(idx + 1, format!("empty pronunciation for {word:?}")));
        }
        let variants = dict.entry(word.to_uppercase()).or_default();
        if !variants.contains(&phonemes) {
            variants.push(phonemes);
        }
    }
    Ok(dict)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PronunciationSource {
    BaseDictionary,
    G2p,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pronunciation {
    pub phonemes: Vec<String>,
    pub source: PronunciationSource,
    /// Natural-log weight used at decode time.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub word: String,
    pub pronunciations: Vec<Pronunciation>,
}

impl LexiconEntry {
    fn push(&mut self, phonemes: Vec<String>, source: PronunciationSource) {
        if !self.pronunciations.iter().any(|p| p.phonemes == phonemes) {
            self.pronunciations.push(Pronunciation {
                phonemes,
                source,
                weight: 0.0,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariantPolicy {
    /// Only the best G2P variant.
    Single,
    /// Also the second variant when the first one's posterior is below the threshold.
    Threshold(f64),
}

impl VariantPolicy {
    /// Parses `single` or `threshold-<T>`.
    pub fn parse(text: &str) -> Result<Self> {
        if text == "single" {
            return Ok(VariantPolicy::Single);
        }
        text.strip_prefix("threshold-")
            .and_then(|t| t.parse::<f64>().ok())
            .filter(|t| (0.0..=1.0).contains(t))
            .map(VariantPolicy::Threshold)
            .ok_or_else(|| Error::Config(format!("unknown variant policy {text:?}")))
    }

    /// Whether a second variant is admitted given the first variant's posterior.
    pub fn admits_second(&self, first_posterior: f64) -> bool {
        match *self {
            VariantPolicy::Single => false,
            VariantPolicy::Threshold(t) => first_posterior < t,
        }
    }
}

/// Word → pronunciations, words uppercase and sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, LexiconEntry>,
    alphabet: PhonemeAlphabet,
}

impl Lexicon {
    pub fn new(alphabet: PhonemeAlphabet) -> Self {
        Lexicon {
            entries: BTreeMap::new(),
            alphabet,
        }
    }

    pub fn alphabet(&self) -> &PhonemeAlphabet {
        &self.alphabet
    }

    pub fn add(&mut self, word: &str, phonemes: Vec<String>, source: PronunciationSource) -> Result<()> {
        if phonemes.is_empty() {
            return Err(Error::Data(format!("empty pronunciation for {word:?}")));
        }
        if let Some(bad) = phonemes.iter().find(|p| self.alphabet.get(p).is_none()) {
            return Err(Error::Data(format!("{word:?} uses unknown phoneme {bad:?}")));
        }
        let word = word.to_uppercase();
        self.entries
            .entry(word.clone())
            .or_insert_with(|| LexiconEntry {
                word,
                pronunciations: Vec::new(),
            })
            .push(phonemes, source);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(&word.to_uppercase())
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.values()
    }

    pub fn word_count(&self) -> usize {
        self.entries.len()
    }

    pub fn pronunciation_count(&self) -> usize {
        self.entries.values().map(|e| e.pronunciations.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All (word, pronunciation) pairs sorted by word, then pronunciation.
    pub fn pairs(&self) -> Vec<(String, Vec<String>)> {
        let mut out: Vec<(String, Vec<String>)> = self
            .entries
            .values()
            .flat_map(|e| e.pronunciations.iter().map(|p| (e.word.clone(), p.phonemes.clone())))
            .collect();
        out.sort();
        out
    }

    /// `WORD<TAB>PH1 PH2 ...`, one line per pronunciation.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        for (word, pron) in self.pairs() {
            writeln!(sink, "{word}\t{}", pron.join(" "))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(source: R, alphabet: PhonemeAlphabet) -> Result<Self> {
        let mut lex = Lexicon::new(alphabet);
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (word, pron) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(idx + 1, "expected WORD<TAB>PHONEMES"))?;
            let phonemes = pron.split_whitespace().map(str::to_string).collect();
            lex.add(word.trim(), phonemes, PronunciationSource::BaseDictionary)
                .map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        }
        Ok(lex)
    }

    /// Reads a lexicon file, inferring the phoneme alphabet from its contents.
    pub fn read_inferring_alphabet<R: Read>(mut source: R) -> Result<Self> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        let symbols: BTreeSet<&str> = text
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .flat_map(|(_, p)| p.split_whitespace())
            .collect();
        let alphabet = PhonemeAlphabet::new(symbols.into_iter())?;
        Lexicon::read(text.as_bytes(), alphabet)
    }
}

/// Base-dictionary words keep all their stress-stripped pronunciations; other
/// vocabulary words get G2P variants according to `policy`.
pub fn build_lexicon(
    vocab: &Vocabulary,
    base_dict: &BTreeMap<String, Vec<Vec<String>>>,
    g2p: Option<&GraphoneModel>,
    policy: VariantPolicy,
    alphabet: &PhonemeAlphabet,
) -> Result<Lexicon> {
    let mut lex = Lexicon::new(alphabet.clone());
    let words: BTreeSet<String> = vocab.iter().map(str::to_uppercase).collect();
    let mut missing = Vec::new();
    for word in &words {
        match base_dict.get(word) {
            Some(variants) => {
                for v in variants {
                    lex.add(word, strip_stress(v), PronunciationSource::BaseDictionary)?;
                }
            }
            None => missing.push(word.clone()),
        }
    }
    if missing.is_empty() {
        return Ok(lex);
    }
    let model = g2p.ok_or_else(|| {
        Error::Data(format!(
            "{} words need G2P but no model was given: {}",
            missing.len(),
            preview(&missing)
        ))
    })?;
    let converted: Vec<(String, Result<Vec<Vec<String>>>)> = missing
        .par_iter()
        .map(|w| {
            let variants = apply_g2p(model, w, G2P_NBEST).map(|hyps| {
                let mut chosen = vec![hyps[0].phonemes.clone()];
                if hyps.len() > 1 && policy.admits_second(hyps[0].posterior) {
                    chosen.push(hyps[1].phonemes.clone());
                }
                chosen
            });
            (w.clone(), variants)
        })
        .collect();
    let mut failed = Vec::new();
    for (word, variants) in converted {
        match variants {
            Ok(vs) => {
                for v in vs {
                    lex.add(&word, v, PronunciationSource::G2p)?;
                }
            }
            Err(e) => {
                log::warn!("G2P failed for {word:?}: {e}");
                failed.push(word);
            }
        }
    }
    if !failed.is_empty() {
        return Err(Error::Data(format!(
            "G2P conversion failed for {} words: {}",
            failed.len(),
            preview(&failed)
        )));
    }
    Ok(lex)
}

fn preview(words: &[String]) -> String {
    let mut s = words.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
    if words.len() > 20 {
        s.push_str(", ...");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// (label, child) sorted by label.
    pub arcs: Vec<(u32, u32)>,
    /// (word id, natural-log pronunciation weight).
    pub word_ends: Vec<(u32, f32)>,
}

/// Trie over pronunciations. Labels: 0 is the CTC blank, `1..=P` word-internal
/// phonemes, `P+1..=2P` their word-final copies. Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixTree {
    labels: Vec<String>,
    words: Vec<String>,
    nodes: Vec<TreeNode>,
}

impl PrefixTree {
    pub const ROOT: u32 = 0;

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> &TreeNode {
        &self.nodes[id as usize]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn phoneme_count(&self) -> u32 {
        ((self.labels.len() - 1) / 2) as u32
    }

    pub fn is_word_final(&self, label: u32) -> bool {
        label > self.phoneme_count()
    }

    /// Phoneme symbol of a (possibly word-final) label.
    pub fn phoneme_of(&self, label: u32) -> &str {
        let p = self.phoneme_count();
        let base = if label > p { label - p } else { label };
        &self.labels[base as usize]
    }

    /// Enumerates every root-to-word-end path as (word, phonemes), sorted.
    pub fn decompile(&self) -> Vec<(String, Vec<String>)> {
        let mut out = Vec::new();
        let mut stack: Vec<(u32, Vec<String>)> = vec![(Self::ROOT, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            let n = self.node(node);
            for &(w, _) in &n.word_ends {
                out.push((self.word(w).to_string(), path.clone()));
            }
            for &(label, child) in &n.arcs {
                let mut p = path.clone();
                p.push(self.phoneme_of(label).to_string());
                stack.push((child, p));
            }
        }
        out.sort();
        out
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(TREE_MAGIC)?;
        let u32le = |v: usize| (v as u32).to_le_bytes();
        let put_strings = |sink: &mut W, items: &[String]| -> Result<()> {
            sink.write_all(&u32le(items.len()))?;
            for s in items {
                sink.write_all(&u32le(s.len()))?;
                sink.write_all(s.as_bytes())?;
            }
            Ok(())
        };
        put_strings(&mut sink, &self.labels)?;
        put_strings(&mut sink, &self.words)?;
        sink.write_all(&u32le(self.nodes.len()))?;
        for n in &self.nodes {
            sink.write_all(&u32le(n.arcs.len()))?;
            for &(label, child) in &n.arcs {
                sink.write_all(&label.to_le_bytes())?;
                sink.write_all(&child.to_le_bytes())?;
            }
            sink.write_all(&u32le(n.word_ends.len()))?;
            for &(w, weight) in &n.word_ends {
                sink.write_all(&w.to_le_bytes())?;
                sink.write_all(&weight.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut source: R) -> Result<Self> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        let mut cur = ByteCursor { bytes: &bytes, pos: 0 };
        if cur.take(5)? != TREE_MAGIC {
            return Err(Error::Data("not a prefix tree file (bad magic)".into()));
        }
        let labels = cur.strings()?;
        let words = cur.strings()?;
        if labels.first().map(String::as_str) != Some(BLANK) || labels.len() % 2 == 0 {
            return Err(Error::Data("prefix tree label set is malformed".into()));
        }
        let n_nodes = cur.u32()? as usize;
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
        for _ in 0..n_nodes {
            let n_arcs = cur.u32()? as usize;
            let mut arcs = Vec::with_capacity(n_arcs.min(1 << 16));
            for _ in 0..n_arcs {
                arcs.push((cur.u32()?, cur.u32()?));
            }
            let n_ends = cur.u32()? as usize;
            let mut word_ends = Vec::with_capacity(n_ends.min(1 << 16));
            for _ in 0..n_ends {
                word_ends.push((cur.u32()?, f32::from_le_bytes(cur.take(4)?.try_into().unwrap())));
            }
            nodes.push(TreeNode { arcs, word_ends });
        }
        if cur.pos != bytes.len() {
            return Err(Error::Data("trailing bytes in prefix tree file".into()));
        }
        let tree = PrefixTree { labels, words, nodes };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len() as u32;
        for node in &self.nodes {
            for &(label, child) in &node.arcs {
                if label == 0 || label as usize >= self.labels.len() || child >= n || child == Self::ROOT {
                    return Err(Error::Data("prefix tree arc out of range".into()));
                }
            }
            if node.word_ends.iter().any(|&(w, _)| w as usize >= self.words.len()) {
                return Err(Error::Data("prefix tree word id out of range".into()));
            }
        }
        if n == 0 {
            return Err(Error::Data("prefix tree without root".into()));
        }
        Ok(())
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteCursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Data("truncated prefix tree file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = self.u32()? as usize;
            let s = std::str::from_utf8(self.take(len)?)
                .map_err(|_| Error::Data("invalid UTF-8 in prefix tree file".into()))?;
            out.push(s.to_string());
        }
        Ok(out)
    }
}

/// Compiles a lexicon into a prefix tree with word-final phoneme labels.
pub fn compile_prefix_tree(lexicon: &Lexicon) -> Result<PrefixTree> {
    if lexicon.is_empty() {
        return Err(Error::Data("cannot compile an empty lexicon".into()));
    }
    let alphabet = lexicon.alphabet();
    let p = alphabet.len() as u32;
    let mut labels = vec![BLANK.to_string()];
    labels.extend(alphabet.symbols().iter().cloned());
    labels.extend(alphabet.symbols().iter().map(|s| format!("{s}{WORD_FINAL_SUFFIX}")));
    let words: Vec<String> = lexicon.entries().map(|e| e.word.clone()).collect();

    let mut nodes = vec![TreeNode {
        arcs: Vec::new(),
        word_ends: Vec::new(),
    }];
    for (wid, entry) in lexicon.entries().enumerate() {
        for pron in &entry.pronunciations {
            if pron.phonemes.is_empty() {
                return Err(Error::Data(format!("empty pronunciation for {:?}", entry.word)));
            }
            let mut node = 0usize;
            let last = pron.phonemes.len() - 1;
            for (k, ph) in pron.phonemes.iter().enumerate() {
                let base = alphabet
                    .get(ph)
                    .ok_or_else(|| Error::Data(format!("unknown phoneme {ph:?}")))? as u32
                    + 1;
                let label = if k == last { base + p } else { base };
                node = match nodes[node].arcs.binary_search_by_key(&label, |a| a.0) {
                    Ok(i) => nodes[node].arcs[i].1 as usize,
                    Err(i) => {
                        let child = nodes.len();
                        nodes.push(TreeNode {
                            arcs: Vec::new(),
                            word_ends: Vec::new(),
                        });
                        nodes[node].arcs.insert(i, (label, child as u32));
                        child
                    }
                };
            }
            let ends = &mut nodes[node].word_ends;
            if !ends.iter().any(|&(w, _)| w == wid as u32) {
                ends.push((wid as u32, pron.weight as f32));
            }
        }
    }
    Ok(PrefixTree { labels, words, nodes })
}
