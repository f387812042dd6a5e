//! Joint-sequence grapheme-to-phoneme conversion with singular graphones.
//!
//! A word and its pronunciation are segmented into graphones, each pairing at
//! most one letter with at most one phoneme. A smoothed joint n-gram over
//! graphone sequences is trained with EM over all segmentations, growing the
//! order one step at a time. Conversion searches graphone sequences whose
//! letters spell the word.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::io::{BufRead, Write};
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The stress-free CMUdict phone set.
pub const CMU_PHONEMES: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH",
];

const MODEL_MAGIC: &str = "G2P1";
const BOUNDARY: u32 = 0;
const MAX_CONSECUTIVE_INSERTIONS: usize = 1;
const SEARCH_BUDGET: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeAlphabet {
    symbols: Vec<String>,
    index: HashMap<String, u16>,
}

impl PhonemeAlphabet {
    pub fn new<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list = Vec::new();
        let mut index = HashMap::new();
        for s in symbols {
            let s = s.into();
            if s.is_empty() || s == "-" || s.contains(char::is_whitespace) || s.ends_with('#') {
                return Err(Error::Data(format!("invalid phoneme symbol {s:?}")));
            }
            if index.insert(s.clone(), list.len() as u16).is_some() {
                return Err(Error::Data(format!("duplicate phoneme symbol {s:?}")));
            }
            list.push(s);
        }
        if list.is_empty() {
            return Err(Error::Data("empty phoneme alphabet".into()));
        }
        Ok(PhonemeAlphabet {
            symbols: list,
            index,
        })
    }

    pub fn cmu() -> Self {
        Self::new(CMU_PHONEMES).expect("valid phone set")
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn get(&self, symbol: &str) -> Option<u16> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: u16) -> &str {
        &self.symbols[id as usize]
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// At most one letter joined with at most one phoneme; never both empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Graphone {
    pub letter: Option<char>,
    pub phoneme: Option<u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PronunciationHypothesis {
    pub phonemes: Vec<String>,
    pub log_joint: f64,
    pub posterior: f64,
}

#[derive(Debug, Clone)]
pub struct G2pConfig {
    pub order: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop when the held-out log-likelihood per pair improves by less than this.
    pub tolerance: f64,
    pub discount_grid: Vec<f64>,
}

impl Default for G2pConfig {
    fn default() -> Self {
        G2pConfig {
            order: 5,
            holdout_fraction: 0.05,
            seed: 0,
            max_iterations: 20,
            tolerance: 1e-4,
            discount_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub order: usize,
    pub discount: f64,
    pub iterations: usize,
    /// Mean natural-log likelihood per held-out pair (training pairs when the
    /// held-out set is empty).
    pub heldout_log_likelihood: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingReport {
    pub orders: Vec<OrderReport>,
    pub training_pairs: usize,
    pub heldout_pairs: usize,
}

#[derive(Debug, Clone)]
struct ContextStats {
    total: f64,
    gamma: f64,
    next: BTreeMap<u32, f64>,
}

/// Smoothed joint n-gram over graphones. Graphone ids start at 1; id 0 is the
/// sequence boundary, used as left padding and as the final event.
#[derive(Debug, Clone)]
pub struct GraphoneModel {
    order: usize,
    alphabet: PhonemeAlphabet,
    inventory: Vec<Graphone>,
    graphone_ids: HashMap<Graphone, u32>,
    discounts: Vec<f64>,
    counts: BTreeMap<Vec<u32>, f64>,
    levels: Vec<HashMap<Vec<u32>, ContextStats>>,
    by_letter: HashMap<Option<char>, Vec<u32>>,
}

impl GraphoneModel {
    fn build(
        order: usize,
        alphabet: PhonemeAlphabet,
        inventory: Vec<Graphone>,
        discounts: Vec<f64>,
        counts: BTreeMap<Vec<u32>, f64>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("G2P order must be at least 1".into()));
        }
        if discounts.len() != order {
            return Err(Error::Data(format!(
                "{} discounts for an order-{order} model",
                discounts.len()
            )));
        }
        let mut levels: Vec<HashMap<Vec<u32>, ContextStats>> = vec![HashMap::new(); order];
        for (event, &c) in &counts {
            if event.len() != order {
                return Err(Error::Data(format!("event of length {} in order-{order} model", event.len())));
            }
            if !(c.is_finite() && c >= 0.0) || event.iter().any(|&g| g as usize > inventory.len()) {
                return Err(Error::Data(format!("invalid graphone event {event:?} {c}")));
            }
            if c == 0.0 {
                continue;
            }
            let g = event[order - 1];
            for (j, level) in levels.iter_mut().enumerate() {
                let ctx = event[order - 1 - j..order - 1].to_vec();
                let st = level.entry(ctx).or_insert_with(|| ContextStats {
                    total: 0.0,
                    gamma: 0.0,
                    next: BTreeMap::new(),
                });
                st.total += c;
                *st.next.entry(g).or_insert(0.0) += c;
            }
        }
        for (level, &d) in levels.iter_mut().zip(&discounts) {
            for st in level.values_mut() {
                st.gamma = st.next.values().map(|&c| c.min(d)).sum::<f64>() / st.total;
            }
        }
        let graphone_ids = inventory
            .iter()
            .enumerate()
            .map(|(i, &g)| (g, i as u32 + 1))
            .collect();
        let mut by_letter: HashMap<Option<char>, Vec<u32>> = HashMap::new();
        for (i, g) in inventory.iter().enumerate() {
            by_letter.entry(g.letter).or_default().push(i as u32 + 1);
        }
        Ok(GraphoneModel {
            order,
            alphabet,
            inventory,
            graphone_ids,
            discounts,
            counts,
            levels,
            by_letter,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet(&self) -> &PhonemeAlphabet {
        &self.alphabet
    }

    pub fn inventory(&self) -> &[Graphone] {
        &self.inventory
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    fn symbols(&self) -> usize {
        self.inventory.len() + 1
    }

    /// P(graphone | history) for a history of any length (oldest first).
    pub fn prob(&self, history: &[u32], graphone: u32) -> f64 {
        let keep = history.len().min(self.order - 1);
        self.prob_at(&history[history.len() - keep..], graphone)
    }

    fn prob_at(&self, ctx: &[u32], g: u32) -> f64 {
        let lower = if ctx.is_empty() {
            1.0 / self.symbols() as f64
        } else {
            self.prob_at(&ctx[1..], g)
        };
        match self.levels[ctx.len()].get(ctx) {
            Some(st) => {
                let c = st.next.get(&g).copied().unwrap_or(0.0);
                (c - self.discounts[ctx.len()]).max(0.0) / st.total + st.gamma * lower
            }
            None => lower,
        }
    }

    /// Writes the self-describing text container.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "{MODEL_MAGIC}")?;
        writeln!(sink, "order {}", self.order)?;
        writeln!(sink, "phonemes {}", self.alphabet.symbols.join(" "))?;
        let ds: Vec<String> = self.discounts.iter().map(|d| d.to_string()).collect();
        writeln!(sink, "discounts {}", ds.join(" "))?;
        writeln!(sink, "graphones {}", self.inventory.len())?;
        for g in &self.inventory {
            let letter = g.letter.map_or("-".to_string(), |c| format!("U+{:04X}", c as u32));
            let phoneme = g.phoneme.map_or("-", |p| self.alphabet.symbol(p));
            writeln!(sink, "{letter}\t{phoneme}")?;
        }
        writeln!(sink, "events {}", self.counts.len())?;
        for (event, c) in &self.counts {
            let ids: Vec<String> = event.iter().map(u32::to_string).collect();
            writeln!(sink, "{}\t{c}", ids.join(" "))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut lines = source.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(Error::parse(0, format!("unexpected end of G2P model, expected {what}"))),
            }
        };
        let (ln, magic) = next("magic")?;
        if magic.trim() != MODEL_MAGIC {
            return Err(Error::parse(ln, format!("bad magic {magic:?}")));
        }
        let field = |ln: usize, line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' ').or(Some(r).filter(|r| r.is_empty())))
                .map(str::to_string)
                .ok_or_else(|| Error::parse(ln, format!("expected {key:?}")))
        };
        let num = |ln: usize, s: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| Error::parse(ln, format!("invalid number {s:?}")))
        };
        let (ln, l) = next("order")?;
        let order = num(ln, &field(ln, &l, "order")?)?;
        let (ln, l) = next("phonemes")?;
        let alphabet = PhonemeAlphabet::new(field(ln, &l, "phonemes")?.split_whitespace())
            .map_err(|e| Error::parse(ln, e.to_string()))?;
        let (ln, l) = next("discounts")?;
        let discounts = field(ln, &l, "discounts")?
            .split_whitespace()
            .map(|d| d.parse::<f64>().map_err(|_| Error::parse(ln, format!("invalid discount {d:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let (ln, l) = next("graphones")?;
        let n_graphones = num(ln, &field(ln, &l, "graphones")?)?;
        let mut inventory = Vec::with_capacity(n_graphones);
        for _ in 0..n_graphones {
            let (ln, l) = next("graphone")?;
            let (letter, phoneme) = l
                .split_once('\t')
                .ok_or_else(|| Error::parse(ln, "expected letter<TAB>phoneme"))?;
            let letter = if letter == "-" {
                None
            } else {
                let code = letter
                    .strip_prefix("U+")
                    .and_then(|h| u32::from_str_radix(h, 16).ok())
                    .and_then(char::from_u32)
                    .ok_or_else(|| Error::parse(ln, format!("invalid letter {letter:?}")))?;
                Some(code)
            };
            let phoneme = if phoneme == "-" {
                None
            } else {
                Some(
                    alphabet
                        .get(phoneme)
                        .ok_or_else(|| Error::parse(ln, format!("unknown phoneme {phoneme:?}")))?,
                )
            };
            if letter.is_none() && phoneme.is_none() {
                return Err(Error::parse(ln, "empty graphone"));
            }
            inventory.push(Graphone { letter, phoneme });
        }
        let (ln, l) = next("events")?;
        let n_events = num(ln, &field(ln, &l, "events")?)?;
        let mut counts = BTreeMap::new();
        for _ in 0..n_events {
            let (ln, l) = next("event")?;
            let (ids, c) = l
                .split_once('\t')
                .ok_or_else(|| Error::parse(ln, "expected ids<TAB>count"))?;
            let ids = ids
                .split_whitespace()
                .map(|t| t.parse::<u32>().map_err(|_| Error::parse(ln, format!("invalid id {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let c: f64 = c.trim().parse().map_err(|_| Error::parse(ln, format!("invalid count {c:?}")))?;
            counts.insert(ids, c);
        }
        GraphoneModel::build(order, alphabet, inventory, discounts, counts)
    }
}

/// Memoized dense next-graphone distributions for a fixed model.
struct DistCache<'m> {
    model: &'m GraphoneModel,
    memo: HashMap<Vec<u32>, Rc<Vec<f64>>>,
}

impl<'m> DistCache<'m> {
    fn new(model: &'m GraphoneModel) -> Self {
        DistCache {
            model,
            memo: HashMap::new(),
        }
    }

    /// Distribution after `history`; only the last `order - 1` entries matter.
    fn after(&mut self, history: &[u32]) -> Rc<Vec<f64>> {
        let keep = history.len().min(self.model.order - 1);
        self.at(&history[history.len() - keep..])
    }

    fn at(&mut self, ctx: &[u32]) -> Rc<Vec<f64>> {
        if let Some(d) = self.memo.get(ctx) {
            return d.clone();
        }
        let n = self.model.symbols();
        let lower = if ctx.is_empty() {
            Rc::new(vec![1.0 / n as f64; n])
        } else {
            self.at(&ctx[1..])
        };
        let dist = match self.model.levels[ctx.len()].get(ctx) {
            Some(st) => {
                let d = self.model.discounts[ctx.len()];
                let mut v: Vec<f64> = lower.iter().map(|&x| st.gamma * x).collect();
                for (&g, &c) in &st.next {
                    v[g as usize] += (c - d).max(0.0) / st.total;
                }
                Rc::new(v)
            }
            None => lower,
        };
        self.memo.insert(ctx.to_vec(), dist.clone());
        dist
    }
}

#[derive(Debug, Clone)]
struct Pair {
    letters: Vec<char>,
    phonemes: Vec<u16>,
}

/// Graphone ids of the possible next steps from lattice cell (i, j).
fn lattice_steps(
    ids: &HashMap<Graphone, u32>,
    pair: &Pair,
    i: usize,
    j: usize,
) -> impl Iterator<Item = (u32, usize, usize)> {
    let (m, n) = (pair.letters.len(), pair.phonemes.len());
    let mut out: [Option<(u32, usize, usize)>; 3] = [None; 3];
    if i < m && j < n {
        let g = Graphone { letter: Some(pair.letters[i]), phoneme: Some(pair.phonemes[j]) };
        out[0] = ids.get(&g).map(|&id| (id, i + 1, j + 1));
    }
    if i < m {
        let g = Graphone { letter: Some(pair.letters[i]), phoneme: None };
        out[1] = ids.get(&g).map(|&id| (id, i + 1, j));
    }
    if j < n {
        let g = Graphone { letter: None, phoneme: Some(pair.phonemes[j]) };
        out[2] = ids.get(&g).map(|&id| (id, i, j + 1));
    }
    out.into_iter().flatten()
}

fn shift(history: &[u32], g: u32) -> Vec<u32> {
    if history.is_empty() {
        return Vec::new();
    }
    let mut h = history[1..].to_vec();
    h.push(g);
    h
}

type Cells = Vec<BTreeMap<Vec<u32>, f64>>;

/// Forward pass over the segmentation lattice with histories of length `h`.
fn forward(cache: &mut DistCache, pair: &Pair, h: usize) -> (Cells, f64) {
    let ids = &cache.model.graphone_ids;
    let (m, n) = (pair.letters.len(), pair.phonemes.len());
    let cell = |i: usize, j: usize| i * (n + 1) + j;
    let mut alpha: Cells = vec![BTreeMap::new(); (m + 1) * (n + 1)];
    alpha[0].insert(vec![BOUNDARY; h], 1.0);
    for s in 0..=(m + n) {
        for i in s.saturating_sub(n)..=s.min(m) {
            let j = s - i;
            let here = std::mem::take(&mut alpha[cell(i, j)]);
            for (hist, &a) in &here {
                let dist = cache.after(hist);
                for (g, ni, nj) in lattice_steps(ids, pair, i, j) {
                    *alpha[cell(ni, nj)].entry(shift(hist, g)).or_insert(0.0) += a * dist[g as usize];
                }
            }
            alpha[cell(i, j)] = here;
        }
    }
    let mut z = 0.0;
    for (hist, &a) in &alpha[cell(m, n)] {
        z += a * cache.after(hist)[BOUNDARY as usize];
    }
    (alpha, z)
}

/// Adds expected counts of `(history, graphone)` events for one pair.
/// Returns the pair likelihood.
fn accumulate(
    cache: &mut DistCache,
    pair: &Pair,
    h: usize,
    counts: &mut BTreeMap<Vec<u32>, f64>,
) -> f64 {
    let (alpha, z) = forward(cache, pair, h);
    if !(z > 0.0) {
        return z;
    }
    let ids = &cache.model.graphone_ids;
    let (m, n) = (pair.letters.len(), pair.phonemes.len());
    let cell = |i: usize, j: usize| i * (n + 1) + j;
    let mut beta: Cells = vec![BTreeMap::new(); (m + 1) * (n + 1)];
    for s in (0..=(m + n)).rev() {
        for i in s.saturating_sub(n)..=s.min(m) {
            let j = s - i;
            for (hist, &a) in &alpha[cell(i, j)] {
                let dist = cache.after(hist);
                let mut b = 0.0;
                if i == m && j == n {
                    let p = dist[BOUNDARY as usize];
                    b += p;
                    let mut ev = hist.clone();
                    ev.push(BOUNDARY);
                    *counts.entry(ev).or_insert(0.0) += a * p / z;
                }
                for (g, ni, nj) in lattice_steps(ids, pair, i, j) {
                    let p = dist[g as usize];
                    let next_beta = beta[cell(ni, nj)].get(&shift(hist, g)).copied().unwrap_or(0.0);
                    b += p * next_beta;
                    let mut ev = hist.clone();
                    ev.push(g);
                    *counts.entry(ev).or_insert(0.0) += a * p * next_beta / z;
                }
                beta[cell(i, j)].insert(hist.clone(), b);
            }
        }
    }
    z
}

fn mean_log_likelihood(model: &GraphoneModel, pairs: &[Pair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut cache = DistCache::new(model);
    let h = model.order - 1;
    pairs
        .iter()
        .map(|p| forward(&mut cache, p, h).1.max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / pairs.len() as f64
}

fn to_pair(word: &str, pron: &[String], alphabet: &PhonemeAlphabet) -> Result<Pair> {
    let letters: Vec<char> = word.to_uppercase().chars().collect();
    if letters.is_empty() {
        return Err(Error::Data("empty word in dictionary".into()));
    }
    let phonemes = pron
        .iter()
        .map(|p| {
            alphabet.get(p).ok_or_else(|| {
                Error::Data(format!("entry {word:?} uses unknown phoneme symbol {p:?}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pair { letters, phonemes })
}

/// Trains a graphone model by EM with order ramp-up. A fixed fraction of the
/// (seeded-shuffled) dictionary is held out to pick discounts and decide
/// convergence.
pub fn train_g2p(
    dictionary: &[(String, Vec<String>)],
    alphabet: &PhonemeAlphabet,
    config: &G2pConfig,
) -> Result<(GraphoneModel, TrainingReport)> {
    if dictionary.is_empty() {
        return Err(Error::Training("empty dictionary".into()));
    }
    if config.order == 0 || config.discount_grid.is_empty() {
        return Err(Error::Config("G2P order and discount grid must be non-empty".into()));
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::Config("holdout fraction must lie in [0, 1)".into()));
    }
    let pairs = dictionary
        .iter()
        .map(|(w, p)| to_pair(w, p, alphabet))
        .collect::<Result<Vec<_>>>()?;

    let mut inventory = BTreeSet::new();
    for p in &pairs {
        for &l in &p.letters {
            inventory.insert(Graphone { letter: Some(l), phoneme: None });
            for &ph in &p.phonemes {
                inventory.insert(Graphone { letter: Some(l), phoneme: Some(ph) });
            }
        }
        for &ph in &p.phonemes {
            inventory.insert(Graphone { letter: None, phoneme: Some(ph) });
        }
    }
    let inventory: Vec<Graphone> = inventory.into_iter().collect();

    let mut order_idx: Vec<usize> = (0..pairs.len()).collect();
    order_idx.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_holdout = (pairs.len() as f64 * config.holdout_fraction).floor() as usize;
    let (held, trained) = order_idx.split_at(n_holdout);
    let mut held: Vec<usize> = held.to_vec();
    let mut trained: Vec<usize> = trained.to_vec();
    held.sort_unstable();
    trained.sort_unstable();
    let train_pairs: Vec<Pair> = trained.iter().map(|&i| pairs[i].clone()).collect();
    let heldout_pairs: Vec<Pair> = held.iter().map(|&i| pairs[i].clone()).collect();
    let eval_pairs = if heldout_pairs.is_empty() { &train_pairs } else { &heldout_pairs };

    let mut report = TrainingReport {
        orders: Vec::new(),
        training_pairs: train_pairs.len(),
        heldout_pairs: heldout_pairs.len(),
    };

    let mut current = GraphoneModel::build(1, alphabet.clone(), inventory.clone(), vec![0.0], BTreeMap::new())?;
    let mut discounts: Vec<f64> = Vec::new();
    for order in 1..=config.order {
        let mut best: Option<(f64, GraphoneModel, OrderReport)> = None;
        for &d in &config.discount_grid {
            let mut ds = discounts.clone();
            ds.push(d);
            let mut model = current.clone();
            let mut last_ll = f64::NEG_INFINITY;
            let mut iterations = 0;
            while iterations < config.max_iterations {
                iterations += 1;
                let mut counts = BTreeMap::new();
                let mut cache = DistCache::new(&model);
                for p in &train_pairs {
                    accumulate(&mut cache, p, order - 1, &mut counts);
                }
                model = GraphoneModel::build(order, alphabet.clone(), inventory.clone(), ds.clone(), counts)?;
                let ll = mean_log_likelihood(&model, eval_pairs);
                let improved = ll - last_ll;
                last_ll = ll;
                if improved < config.tolerance {
                    break;
                }
            }
            log::debug!("g2p order {order} discount {d}: {iterations} iterations, ll {last_ll:.6}");
            let rep = OrderReport {
                order,
                discount: d,
                iterations,
                heldout_log_likelihood: last_ll,
            };
            if best.as_ref().map_or(true, |(ll, _, _)| last_ll > *ll) {
                best = Some((last_ll, model, rep));
            }
        }
        let (_, model, rep) = best.expect("non-empty grid");
        log::info!(
            "g2p order {order}: discount {} held-out ll {:.6}",
            rep.discount,
            rep.heldout_log_likelihood
        );
        discounts.push(rep.discount);
        report.orders.push(rep);
        current = model;
    }
    Ok((current, report))
}

#[derive(Debug, Clone)]
struct Partial {
    cost: f64,
    seq: Vec<u32>,
    letters: usize,
    complete: bool,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Partial {}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partial {
    // min-heap on cost, then on the graphone sequence
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.seq.cmp(&self.seq))
            .then_with(|| other.complete.cmp(&self.complete))
    }
}

/// Converts a word to up to `n_best` pronunciations, best first. Posteriors
/// are renormalized over the returned list. At most one phoneme-only
/// graphone may occur in a row.
pub fn apply_g2p(
    model: &GraphoneModel,
    word: &str,
    n_best: usize,
) -> Result<Vec<PronunciationHypothesis>> {
    if n_best == 0 {
        return Err(Error::Config("n_best must be at least 1".into()));
    }
    let letters: Vec<char> = word.to_uppercase().chars().collect();
    if letters.is_empty() {
        return Err(Error::Config("cannot convert an empty word".into()));
    }
    let mut missing: Vec<char> = letters
        .iter()
        .copied()
        .filter(|c| !model.by_letter.contains_key(&Some(*c)))
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(Error::Conversion {
            word: word.to_string(),
            chars: missing,
        });
    }
    let no_insertions = Vec::new();
    let insertions = model.by_letter.get(&None).unwrap_or(&no_insertions);
    let h = model.order - 1;
    let mut cache = DistCache::new(model);
    let mut heap = BinaryHeap::new();
    heap.push(Partial {
        cost: 0.0,
        seq: Vec::new(),
        letters: 0,
        complete: false,
    });
    let mut found: Vec<(Vec<u16>, Vec<f64>)> = Vec::new();
    let mut pops = 0;
    while let Some(p) = heap.pop() {
        pops += 1;
        if pops > SEARCH_BUDGET {
            log::warn!("G2P search budget exhausted for {word:?}");
            break;
        }
        if p.complete {
            let phonemes: Vec<u16> = p
                .seq
                .iter()
                .filter_map(|&g| model.inventory[g as usize - 1].phoneme)
                .collect();
            match found.iter_mut().find(|(ph, _)| *ph == phonemes) {
                Some((_, logs)) => logs.push(-p.cost),
                None => {
                    found.push((phonemes, vec![-p.cost]));
                    if found.len() == n_best {
                        break;
                    }
                }
            }
            continue;
        }
        let mut history = vec![BOUNDARY; h];
        history.extend_from_slice(&p.seq);
        let dist = cache.after(&history[history.len() - h..]);
        let extend = |g: u32, letters: usize| -> Option<Partial> {
            let prob = dist[g as usize];
            (prob > 0.0).then(|| {
                let mut seq = p.seq.clone();
                seq.push(g);
                Partial {
                    cost: p.cost - prob.ln(),
                    seq,
                    letters,
                    complete: false,
                }
            })
        };
        if p.letters == letters.len() {
            let prob = dist[BOUNDARY as usize];
            if prob > 0.0 {
                heap.push(Partial {
                    cost: p.cost - prob.ln(),
                    seq: p.seq.clone(),
                    letters: p.letters,
                    complete: true,
                });
            }
        } else {
            for &g in &model.by_letter[&Some(letters[p.letters])] {
                heap.extend(extend(g, p.letters + 1));
            }
        }
        let trailing = p
            .seq
            .iter()
            .rev()
            .take_while(|&&g| model.inventory[g as usize - 1].letter.is_none())
            .count();
        if trailing < MAX_CONSECUTIVE_INSERTIONS {
            for &g in insertions {
                heap.extend(extend(g, p.letters));
            }
        }
    }
    if found.is_empty() {
        return Err(Error::Conversion {
            word: word.to_string(),
            chars: Vec::new(),
        });
    }
    let mut hyps: Vec<(Vec<u16>, f64)> = found
        .into_iter()
        .map(|(ph, logs)| (ph, log_sum_exp(&logs)))
        .collect();
    hyps.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let norm = log_sum_exp(&hyps.iter().map(|h| h.1).collect::<Vec<_>>());
    Ok(hyps
        .into_iter()
        .map(|(ph, lj)| PronunciationHypothesis {
            phonemes: ph.iter().map(|&p| model.alphabet.symbol(p).to_string()).collect(),
            log_joint: lj,
            posterior: (lj - norm).exp(),
        })
        .collect())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
