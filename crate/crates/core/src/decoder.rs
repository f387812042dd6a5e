//! CTC decoding of emission matrices: greedy, open-vocabulary beam search and
//! lexical prefix-tree beam search with optional n-gram LM and label prior.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::f64::consts::LN_10;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{PrefixTree, BLANK};
use crate::ngram::{LMState, NGramModel};

pub const EMISSION_MAGIC: &[u8; 5] = b"EMIT1";
pub const EMISSION_FLOOR: f64 = -1e5;
pub const PRIOR_FLOOR: f64 = 1e-10;
const ROW_TOLERANCE: f64 = 1e-4;
const MARKER_HEADER: &str = "#marker";

/// T×L natural-log posteriors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    frames: usize,
    labels: usize,
    values: Vec<f64>,
}

impl EmissionMatrix {
    /// Validates row normalization; values below the floor (including -inf) are raised to it.
    pub fn new(frames: usize, labels: usize, values: Vec<f64>) -> Result<Self> {
        if labels == 0 {
            return Err(Error::Shape("emission matrix without labels".into()));
        }
        if values.len() != frames * labels {
            return Err(Error::Shape(format!(
                "{} values for a {frames}x{labels} emission matrix",
                values.len()
            )));
        }
        let mut values = values;
        for (t, row) in values.chunks_mut(labels).enumerate() {
            let mut mass = 0.0;
            for v in row.iter_mut() {
                if v.is_nan() || *v == f64::INFINITY {
                    return Err(Error::Data(format!("non-finite emission in frame {t}")));
                }
                *v = v.max(EMISSION_FLOOR);
                mass += v.exp();
            }
            if (mass - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Data(format!(
                    "frame {t} posteriors sum to {mass}, expected 1"
                )));
            }
        }
        Ok(EmissionMatrix {
            frames,
            labels,
            values,
        })
    }

    /// Builds a matrix from rows of probabilities (not logs).
    pub fn from_probabilities(rows: &[Vec<f64>]) -> Result<Self> {
        let labels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != labels) {
            return Err(Error::Shape("ragged probability rows".into()));
        }
        let values = rows.iter().flatten().map(|p| p.ln()).collect();
        EmissionMatrix::new(rows.len(), labels, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.labels..(t + 1) * self.labels]
    }

    pub fn get(&self, t: usize, label: usize) -> f64 {
        self.values[t * self.labels + label]
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(EMISSION_MAGIC)?;
        sink.write_all(&(self.frames as u32).to_le_bytes())?;
        sink.write_all(&(self.labels as u32).to_le_bytes())?;
        for &v in &self.values {
            sink.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut source: R) -> Result<Self> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        if bytes.len() < 13 || &bytes[..5] != EMISSION_MAGIC {
            return Err(Error::Data("not an emission file (bad magic)".into()));
        }
        let frames = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let labels = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let body = &bytes[13..];
        if body.len() != frames * labels * 4 {
            return Err(Error::Shape(format!(
                "emission file declares {frames}x{labels} but holds {} bytes of values",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        EmissionMatrix::new(frames, labels, values)
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        EmissionMatrix::read(std::io::BufReader::new(file))
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Subword units; tokens carrying the marker start a new word.
    Subword,
    /// Phonemes with word-final copies, usable only with a prefix tree.
    Phoneme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelInventory {
    symbols: Vec<String>,
    marker: Option<String>,
}

impl LabelInventory {
    pub fn new(symbols: Vec<String>, marker: Option<String>) -> Result<Self> {
        if symbols.first().map(String::as_str) != Some(BLANK) {
            return Err(Error::Data(format!("first label must be {BLANK}")));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = symbols.iter().find(|s| !seen.insert(s.as_str())) {
            return Err(Error::Data(format!("duplicate label {dup:?}")));
        }
        if marker.as_deref() == Some("") {
            return Err(Error::Data("empty word-start marker".into()));
        }
        Ok(LabelInventory { symbols, marker })
    }

    pub fn from_tree(tree: &PrefixTree) -> Self {
        LabelInventory {
            symbols: tree.labels().to_vec(),
            marker: None,
        }
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank_index(&self) -> usize {
        0
    }

    pub fn marker(&self) -> Option<&str> {
        self.marker.as_deref()
    }

    pub fn kind(&self) -> LabelKind {
        if self.marker.is_some() {
            LabelKind::Subword
        } else {
            LabelKind::Phoneme
        }
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut symbols = Vec::new();
        let mut marker = None;
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            let text = line.trim_end_matches(['\r', '\n']);
            if idx == 0 {
                if let Some(rest) = text.strip_prefix(MARKER_HEADER) {
                    marker = Some(rest.trim().to_string());
                    continue;
                }
            }
            if text.is_empty() || text.chars().any(char::is_whitespace) {
                return Err(Error::parse(idx + 1, format!("invalid label {text:?}")));
            }
            symbols.push(text.to_string());
        }
        LabelInventory::new(symbols, marker)
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        if let Some(m) = &self.marker {
            writeln!(sink, "{MARKER_HEADER} {m}")?;
        }
        for s in &self.symbols {
            writeln!(sink, "{s}")?;
        }
        Ok(())
    }

    /// Joins subword labels into words using the word-start marker.
    pub fn detokenize(&self, labels: &[u32]) -> Vec<String> {
        let marker = self.marker.as_deref().unwrap_or("");
        let mut words: Vec<String> = Vec::new();
        for &l in labels {
            let sym = &self.symbols[l as usize];
            match sym.strip_prefix(marker).filter(|_| !marker.is_empty()) {
                Some(rest) => words.push(rest.to_string()),
                None => match words.last_mut() {
                    Some(w) => w.push_str(sym),
                    None => words.push(sym.clone()),
                },
            }
        }
        words.retain(|w| !w.is_empty());
        words
    }

    fn check_subword(&self, em: &EmissionMatrix) -> Result<()> {
        if self.kind() != LabelKind::Subword {
            return Err(Error::Config(
                "phoneme labels require lexical prefix-tree decoding".into(),
            ));
        }
        check_shape(em, self.len())
    }
}

fn check_shape(em: &EmissionMatrix, labels: usize) -> Result<()> {
    if em.labels() != labels {
        return Err(Error::Shape(format!(
            "emissions have {} labels, inventory has {labels}",
            em.labels()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub beam_size: usize,
    /// Hypotheses worse than the frame best by more than this are dropped.
    pub score_threshold: Option<f64>,
    pub lm_scale: f64,
    pub prior_scale: f64,
    pub word_insertion_score: f64,
    pub n_best: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            beam_size: 512,
            score_threshold: None,
            lm_scale: 0.0,
            prior_scale: 0.0,
            word_insertion_score: 0.0,
            n_best: 1,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        if !(self.lm_scale >= 0.0 && self.lm_scale.is_finite()) {
            return Err(Error::Config(format!("invalid LM scale {}", self.lm_scale)));
        }
        if !(self.prior_scale >= 0.0 && self.prior_scale.is_finite()) {
            return Err(Error::Config(format!("invalid prior scale {}", self.prior_scale)));
        }
        if self.score_threshold.is_some_and(|t| t.is_nan() || t < 0.0) {
            return Err(Error::Config("score threshold must be non-negative".into()));
        }
        if !self.word_insertion_score.is_finite() {
            return Err(Error::Config("word insertion score must be finite".into()));
        }
        Ok(())
    }
}

/// Per-label natural-log prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorVector(Vec<f64>);

impl PriorVector {
    pub fn new(log_prior: Vec<f64>) -> Result<Self> {
        if log_prior.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite prior value".into()));
        }
        let mass: f64 = log_prior.iter().map(|v| v.exp()).sum();
        if (mass - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::Data(format!("prior sums to {mass}, expected 1")));
        }
        Ok(PriorVector(log_prior))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One natural-log value per line, in label order.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        for v in &self.0 {
            writeln!(sink, "{v:e}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut values = Vec::new();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::parse(idx + 1, format!("non-numeric prior {text:?}")))?;
            values.push(v);
        }
        PriorVector::new(values)
    }
}

/// Frame-average of posteriors over all matrices, floored and logged.
pub fn estimate_prior<'a, I>(emissions: I) -> Result<PriorVector>
where
    I: IntoIterator<Item = &'a EmissionMatrix>,
{
    let mut sums: Vec<f64> = Vec::new();
    let mut frames = 0usize;
    for em in emissions {
        if sums.is_empty() {
            sums = vec![0.0; em.labels()];
        } else if sums.len() != em.labels() {
            return Err(Error::Shape("emission matrices disagree on label count".into()));
        }
        for t in 0..em.frames() {
            for (s, v) in sums.iter_mut().zip(em.row(t)) {
                *s += v.exp();
            }
        }
        frames += em.frames();
    }
    if frames == 0 {
        return Err(Error::Domain("prior estimation needs at least one frame".into()));
    }
    Ok(PriorVector(
        sums.into_iter()
            .map(|s| (s / frames as f64).max(PRIOR_FLOOR).ln())
            .collect(),
    ))
}

fn argmax(row: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

/// CTC collapse: merge repeats, then drop blanks.
pub fn ctc_collapse(path: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let mut prev = None;
    for &l in path {
        if Some(l) != prev && l != 0 {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

/// Frame-wise argmax (lowest index on ties), collapsed and detokenized.
pub fn greedy_decode(em: &EmissionMatrix, inv: &LabelInventory) -> Result<Vec<String>> {
    inv.check_subword(em)?;
    let path: Vec<u32> = (0..em.frames()).map(|t| argmax(em.row(t))).collect();
    Ok(inv.detokenize(&ctc_collapse(&path)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenResult {
    pub words: Vec<String>,
    pub labels: Vec<u32>,
    pub score: f64,
}

fn better(a_score: f64, a_seq: &[u32], b_score: f64, b_seq: &[u32]) -> bool {
    match a_score.total_cmp(&b_score) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a_seq < b_seq,
    }
}

/// Viterbi beam search over collapsed label prefixes.
pub fn beam_search_open(
    em: &EmissionMatrix,
    inv: &LabelInventory,
    config: &DecoderConfig,
) -> Result<OpenResult> {
    inv.check_subword(em)?;
    config.validate()?;
    // (prefix, last label) -> score
    let mut beam: Vec<((Vec<u32>, u32), f64)> = vec![((Vec::new(), 0), 0.0)];
    for t in 0..em.frames() {
        let row = em.row(t);
        let mut next: HashMap<(Vec<u32>, u32), f64> = HashMap::new();
        let mut push = |key: (Vec<u32>, u32), score: f64| {
            let slot = next.entry(key).or_insert(f64::NEG_INFINITY);
            if score > *slot {
                *slot = score;
            }
        };
        for ((prefix, last), score) in &beam {
            for (l, &e) in row.iter().enumerate() {
                let l = l as u32;
                if l == 0 || l == *last {
                    push((prefix.clone(), l), score + e);
                } else {
                    let mut p = prefix.clone();
                    p.push(l);
                    push((p, l), score + e);
                }
            }
        }
        let mut items: Vec<_> = next.into_iter().collect();
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        prune(&mut items, config, |i| i.1);
        beam = items;
    }
    let ((labels, _), score) = beam
        .into_iter()
        .reduce(|a, b| if better(b.1, &b.0 .0, a.1, &a.0 .0) { b } else { a })
        .expect("beam is never empty");
    Ok(OpenResult {
        words: inv.detokenize(&labels),
        labels,
        score,
    })
}

fn prune<T>(items: &mut Vec<T>, config: &DecoderConfig, score: impl Fn(&T) -> f64) {
    if let (Some(threshold), Some(first)) = (config.score_threshold, items.first()) {
        let floor = score(first) - threshold;
        items.retain(|i| score(i) >= floor);
    }
    items.truncate(config.beam_size);
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalResult {
    pub words: Vec<String>,
    pub word_ids: Vec<u32>,
    pub score: f64,
    /// Best distinct final hypotheses, best first; includes the top result.
    pub n_best: Vec<(Vec<String>, f64)>,
}

#[derive(Debug, Clone)]
struct Hyp {
    node: u32,
    last: u32,
    lm: LMState,
    score: f64,
    words: Vec<u32>,
}

impl Hyp {
    fn rank(&self, other: &Hyp) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.words.cmp(&other.words))
            .then_with(|| (self.node, self.last, &self.lm).cmp(&(other.node, other.last, &other.lm)))
    }
}

/// Lexical decoder with its shared read-only resources resolved once.
pub struct LexicalDecoder<'a> {
    tree: &'a PrefixTree,
    lm: Option<(&'a NGramModel, Vec<u32>)>,
    prior: Option<&'a PriorVector>,
    config: DecoderConfig,
}

impl<'a> LexicalDecoder<'a> {
    /// A zero LM or prior scale detaches the respective model.
    pub fn new(
        tree: &'a PrefixTree,
        inv: &LabelInventory,
        lm: Option<&'a NGramModel>,
        prior: Option<&'a PriorVector>,
        config: &DecoderConfig,
    ) -> Result<Self> {
        config.validate()?;
        if inv.symbols() != tree.labels() {
            return Err(Error::Shape(
                "label inventory does not match the prefix tree labels".into(),
            ));
        }
        let lm = lm.filter(|_| config.lm_scale != 0.0).map(|m| {
            let mut by_upper: HashMap<String, u32> = HashMap::new();
            for (id, sym) in m.symbols().symbols().iter().enumerate() {
                if !m.symbols().is_special(id as u32) {
                    by_upper.entry(sym.to_uppercase()).or_insert(id as u32);
                }
            }
            let ids = tree
                .words()
                .iter()
                .map(|w| {
                    by_upper
                        .get(&w.to_uppercase())
                        .copied()
                        .unwrap_or_else(|| m.symbols().unk())
                })
                .collect();
            (m, ids)
        });
        let prior = prior.filter(|_| config.prior_scale != 0.0);
        if let Some(p) = prior {
            if p.len() != inv.len() {
                return Err(Error::Shape(format!(
                    "prior has {} values, inventory has {} labels",
                    p.len(),
                    inv.len()
                )));
            }
        }
        Ok(LexicalDecoder {
            tree,
            lm,
            prior,
            config: config.clone(),
        })
    }

    pub fn decode(&self, em: &EmissionMatrix) -> Result<LexicalResult> {
        check_shape(em, self.tree.labels().len())?;
        if em.frames() == 0 {
            return Err(Error::EmptyResult("zero frames".into()));
        }
        let tree = self.tree;
        let cfg = &self.config;
        let ln10_scale = cfg.lm_scale * LN_10;
        let begin = self.lm.as_ref().map_or_else(LMState::empty, |(m, _)| m.begin_state());
        let mut beam = vec![Hyp {
            node: PrefixTree::ROOT,
            last: 0,
            lm: begin,
            score: 0.0,
            words: Vec::new(),
        }];
        let mut acoustic = vec![0.0; em.labels()];
        for t in 0..em.frames() {
            for (l, a) in acoustic.iter_mut().enumerate() {
                *a = em.get(t, l) - self.prior.map_or(0.0, |p| cfg.prior_scale * p.values()[l]);
            }
            let mut next: HashMap<(u32, u32, LMState), Hyp> = HashMap::new();
            let mut push = |h: Hyp| match next.entry((h.node, h.last, h.lm.clone())) {
                std::collections::hash_map::Entry::Occupied(mut e) => {
                    if better(h.score, &h.words, e.get().score, &e.get().words) {
                        e.insert(h);
                    }
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(h);
                }
            };
            for h in &beam {
                push(Hyp {
                    last: 0,
                    score: h.score + acoustic[0],
                    ..h.clone()
                });
                if h.last != 0 {
                    push(Hyp {
                        score: h.score + acoustic[h.last as usize],
                        ..h.clone()
                    });
                }
                for &(label, child) in &tree.node(h.node).arcs {
                    if label == h.last {
                        continue;
                    }
                    let score = h.score + acoustic[label as usize];
                    let target = tree.node(child);
                    if !target.arcs.is_empty() || target.word_ends.is_empty() {
                        push(Hyp {
                            node: child,
                            last: label,
                            lm: h.lm.clone(),
                            score,
                            words: h.words.clone(),
                        });
                    }
                    for &(word, weight) in &target.word_ends {
                        let (lm_score, lm) = match &self.lm {
                            Some((m, ids)) => {
                                let (lp, next) = m.score(&h.lm, ids[word as usize]);
                                (ln10_scale * lp, next)
                            }
                            None => (0.0, h.lm.clone()),
                        };
                        let mut words = h.words.clone();
                        words.push(word);
                        push(Hyp {
                            node: PrefixTree::ROOT,
                            last: label,
                            lm,
                            score: score + lm_score + cfg.word_insertion_score + weight as f64,
                            words,
                        });
                    }
                }
            }
            let mut items: Vec<Hyp> = next.into_values().collect();
            items.sort_by(Hyp::rank);
            prune(&mut items, cfg, |h| h.score);
            beam = items;
        }
        let mut finals: Vec<Hyp> = beam
            .into_iter()
            .filter(|h| h.node == PrefixTree::ROOT)
            .map(|mut h| {
                if let Some((m, _)) = &self.lm {
                    h.score += ln10_scale * m.score(&h.lm, m.symbols().eos()).0;
                }
                h
            })
            .collect();
        finals.sort_by(Hyp::rank);
        finals.dedup_by(|b, a| a.words == b.words);
        let best = finals
            .first()
            .ok_or_else(|| Error::EmptyResult("no hypothesis ended at a word boundary".into()))?;
        let spell = |ids: &[u32]| ids.iter().map(|&w| tree.word(w).to_string()).collect::<Vec<_>>();
        Ok(LexicalResult {
            words: spell(&best.words),
            word_ids: best.words.clone(),
            score: best.score,
            n_best: finals
                .iter()
                .take(cfg.n_best.max(1))
                .map(|h| (spell(&h.words), h.score))
                .collect(),
        })
    }
}

/// One-shot lexical decode; see [`LexicalDecoder`] for repeated use.
pub fn beam_search_lexical(
    em: &EmissionMatrix,
    tree: &PrefixTree,
    inv: &LabelInventory,
    lm: Option<&NGramModel>,
    prior: Option<&PriorVector>,
    config: &DecoderConfig,
) -> Result<LexicalResult> {
    LexicalDecoder::new(tree, inv, lm, prior, config)?.decode(em)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub emissions: PathBuf,
    #[serde(rename = "ref")]
    pub reference: String,
    pub subset: String,
}

/// Reads a JSONL manifest. Relative emission paths are resolved against `base`.
pub fn read_manifest<R: BufRead>(source: R, base: Option<&Path>) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::parse(idx + 1, format!("duplicate id {:?}", rec.id)));
        }
        if let Some(base) = base {
            if rec.emissions.is_relative() {
                rec.emissions = base.join(&rec.emissions);
            }
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub id: String,
    pub hyp: String,
}

pub fn write_hypotheses<W: Write>(records: &[HypothesisRecord], mut sink: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut sink, r).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(sink)?;
    }
    Ok(())
}

pub fn read_hypotheses<R: BufRead>(source: R) -> Result<Vec<HypothesisRecord>> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::g2p::PhonemeAlphabet;
    use crate::lexicon::{compile_prefix_tree, Lexicon, PronunciationSource};

    fn subwords() -> LabelInventory {
        let syms = ["<blank>", "▁HE", "LLO", "▁A"].map(String::from).to_vec();
        LabelInventory::new(syms, Some("▁".into())).unwrap()
    }

    fn one_hot(labels: usize, path: &[usize]) -> EmissionMatrix {
        let hi = 0.97;
        let lo = (1.0 - hi) / (labels - 1) as f64;
        let rows: Vec<Vec<f64>> = path
            .iter()
            .map(|&k| (0..labels).map(|l| if l == k { hi } else { lo }).collect())
            .collect();
        EmissionMatrix::from_probabilities(&rows).unwrap()
    }

    #[test]
    fn greedy_examples() {
        let inv = subwords();
        assert_eq!(greedy_decode(&one_hot(4, &[0, 1, 2, 0]), &inv).unwrap(), vec!["HELLO"]);
        assert_eq!(greedy_decode(&one_hot(4, &[3, 3, 0, 3]), &inv).unwrap(), vec!["A", "A"]);
        assert!(greedy_decode(&one_hot(4, &[0, 0, 0]), &inv).unwrap().is_empty());
    }

    #[test]
    fn greedy_rejects_phoneme_inventory_and_bad_shapes() {
        let phon = LabelInventory::new(vec!["<blank>".into(), "A".into()], None).unwrap();
        assert!(matches!(greedy_decode(&one_hot(2, &[1]), &phon), Err(Error::Config(_))));
        assert!(matches!(greedy_decode(&one_hot(3, &[1]), &subwords()), Err(Error::Shape(_))));
    }

    #[test]
    fn prior_examples() {
        let uniform = EmissionMatrix::from_probabilities(&[vec![0.25; 4], vec![0.25; 4]]).unwrap();
        let p = estimate_prior([&uniform]).unwrap();
        for v in p.values() {
            assert!((v.exp() - 0.25).abs() < 1e-12);
        }
        let a = EmissionMatrix::from_probabilities(&[vec![1.0, 0.0]]).unwrap();
        let b = EmissionMatrix::from_probabilities(&[vec![0.0, 1.0]]).unwrap();
        let p = estimate_prior([&a, &b]).unwrap();
        assert!((p.values()[0].exp() - 0.5).abs() < 1e-9);
        assert!((p.values()[1].exp() - 0.5).abs() < 1e-9);
        let hot = EmissionMatrix::from_probabilities(&vec![vec![0.0, 0.0, 1.0]; 3]).unwrap();
        let p = estimate_prior([&hot]).unwrap();
        assert!((p.values()[2].exp() - 1.0).abs() < 1e-9);
        assert!((p.values()[0] - PRIOR_FLOOR.ln()).abs() < 1e-9);
        assert!(matches!(estimate_prior(std::iter::empty()), Err(Error::Domain(_))));
    }

    #[test]
    fn emission_validation_and_roundtrip() {
        assert!(EmissionMatrix::new(1, 2, vec![0.5f64.ln(), 0.4f64.ln()]).is_err());
        assert!(EmissionMatrix::new(1, 2, vec![f64::NAN, 0.0]).is_err());
        let m = EmissionMatrix::new(1, 2, vec![f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(m.get(0, 0), EMISSION_FLOOR);
        let m = one_hot(4, &[0, 1, 3]);
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back = EmissionMatrix::read(buf.as_slice()).unwrap();
        assert_eq!((back.frames(), back.labels()), (3, 4));
        assert!((back.get(1, 1) - m.get(1, 1)).abs() < 1e-6);
        assert!(EmissionMatrix::read(&buf[..buf.len() - 2]).is_err());
    }

    #[test]
    fn label_file_with_marker_header() {
        let inv = LabelInventory::read("#marker ▁\n<blank>\n▁HE\nLLO\n".as_bytes()).unwrap();
        assert_eq!(inv.len(), 3);
        assert_eq!(inv.kind(), LabelKind::Subword);
        let mut buf = Vec::new();
        inv.write(&mut buf).unwrap();
        assert_eq!(LabelInventory::read(buf.as_slice()).unwrap(), inv);
        assert!(LabelInventory::read("A\n<blank>\n".as_bytes()).is_err());
    }

    fn tree(entries: &[(&str, &str)]) -> PrefixTree {
        let mut lex = Lexicon::new(PhonemeAlphabet::new(["A", "B", "C"]).unwrap());
        for (w, p) in entries {
            lex.add(w, p.split(' ').map(String::from).collect(), PronunciationSource::BaseDictionary)
                .unwrap();
        }
        compile_prefix_tree(&lex).unwrap()
    }

    #[test]
    fn single_feasible_path() {
        let t = tree(&[("AB", "A B")]);
        let inv = LabelInventory::from_tree(&t);
        let a = t.labels().iter().position(|s| s == "A").unwrap();
        let b = t.labels().iter().position(|s| s == "B#").unwrap();
        let em = one_hot(t.labels().len(), &[a, b]);
        let r = beam_search_lexical(&em, &t, &inv, None, None, &DecoderConfig::default()).unwrap();
        assert_eq!(r.words, vec!["AB"]);
        assert!((r.score - (em.get(0, a) + em.get(1, b))).abs() < 1e-12);
    }

    #[test]
    fn zero_frames_is_empty_result() {
        let t = tree(&[("AB", "A B")]);
        let em = EmissionMatrix::new(0, t.labels().len(), Vec::new()).unwrap();
        let r = beam_search_lexical(&em, &t, &LabelInventory::from_tree(&t), None, None, &DecoderConfig::default());
        assert!(matches!(r, Err(Error::EmptyResult(_))));
    }

    #[test]
    fn mid_word_hypotheses_are_discarded() {
        let t = tree(&[("AB", "A B")]);
        let a = t.labels().iter().position(|s| s == "A").unwrap();
        let em = one_hot(t.labels().len(), &[a]);
        let r = beam_search_lexical(&em, &t, &LabelInventory::from_tree(&t), None, None, &DecoderConfig::default())
            .unwrap();
        assert!(r.words.is_empty());
    }

    #[test]
    fn repeated_word_needs_blank() {
        let t = tree(&[("A", "A")]);
        let inv = LabelInventory::from_tree(&t);
        let a = t.labels().iter().position(|s| s == "A#").unwrap();
        let cfg = DecoderConfig::default();
        let r = beam_search_lexical(&one_hot(t.labels().len(), &[a, a]), &t, &inv, None, None, &cfg).unwrap();
        assert_eq!(r.words, vec!["A"]);
        let r = beam_search_lexical(&one_hot(t.labels().len(), &[a, 0, a]), &t, &inv, None, None, &cfg).unwrap();
        assert_eq!(r.words, vec!["A", "A"]);
    }

    #[test]
    fn manifest_and_hypothesis_io() {
        let text = r#"{"id":"u1","emissions":"e/u1.emit","ref":"a b","subset":"yodas"}"#;
        let m = read_manifest(text.as_bytes(), Some(Path::new("/data"))).unwrap();
        assert_eq!(m[0].emissions, PathBuf::from("/data/e/u1.emit"));
        assert!(read_manifest(format!("{text}\n{text}").as_bytes(), None).is_err());
        let hyps = vec![HypothesisRecord { id: "u1".into(), hyp: "A B".into() }];
        let mut buf = Vec::new();
        write_hypotheses(&hyps, &mut buf).unwrap();
        assert_eq!(read_hypotheses(buf.as_slice()).unwrap(), hyps);
    }
}
