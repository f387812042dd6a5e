use std::collections::HashMap;

use super::counts::NGramCounts;
use super::model::{Entry, NGramModel, NGramTable, LOG10_ZERO};
use crate::error::{Error, Result};

const FALLBACK_DISCOUNT: f64 = 0.5;

/// Modified Kneser-Ney discounts of one order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounts {
    pub d1: f64,
    pub d2: f64,
    pub d3plus: f64,
}

impl Discounts {
    /// Closed-form estimate from the counts-of-counts `n1..n4`. A discount whose
    /// formula involves a zero count-of-count falls back to 0.5.
    pub fn from_counts_of_counts(n: [u64; 4]) -> Self {
        let [n1, n2, n3, n4] = n.map(|x| x as f64);
        if n1 == 0.0 {
            return Discounts {
                d1: FALLBACK_DISCOUNT,
                d2: FALLBACK_DISCOUNT,
                d3plus: FALLBACK_DISCOUNT,
            };
        }
        let y = n1 / (n1 + 2.0 * n2);
        let pick = |num: f64, den: f64, k: f64| {
            if num == 0.0 || den == 0.0 {
                FALLBACK_DISCOUNT
            } else {
                (k - (k + 1.0) * y * num / den).clamp(0.0, k)
            }
        };
        Discounts {
            d1: pick(n2, n1, 1.0),
            d2: pick(n3, n2, 2.0),
            d3plus: pick(n4, n3, 3.0),
        }
    }

    pub fn for_count(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3plus,
        }
    }
}

/// Discounts for orders 1..=N (index 0 is the unigram order).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountSet {
    pub per_order: Vec<Discounts>,
}

impl DiscountSet {
    pub fn order(&self, n: usize) -> &Discounts {
        &self.per_order[n - 1]
    }
}

pub fn estimate_discounts(counts: &NGramCounts) -> DiscountSet {
    let bos = counts.symbols().bos();
    let per_order = (1..=counts.order())
        .map(|n| {
            let mut coc = [0u64; 4];
            for (gram, &c) in counts.at(n) {
                if n == 1 && gram[0] == bos {
                    continue;
                }
                if (1..=4).contains(&c) {
                    coc[c as usize - 1] += 1;
                }
            }
            Discounts::from_counts_of_counts(coc)
        })
        .collect();
    DiscountSet { per_order }
}

/// Per-order pruning thresholds: an n-gram whose estimation count is at most
/// the threshold is dropped. Zero keeps everything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneThresholds(pub Vec<u64>);

impl PruneThresholds {
    pub fn none(order: usize) -> Self {
        PruneThresholds(vec![0; order])
    }

    /// Parses a comma-separated list such as `0,0,1,1`.
    pub fn parse(text: &str) -> Result<Self> {
        text.split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("invalid prune threshold {t:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(PruneThresholds)
    }

    fn at(&self, n: usize) -> u64 {
        self.0.get(n - 1).copied().unwrap_or(0)
    }

    fn validate(&self, order: usize) -> Result<()> {
        if self.0.len() > order {
            return Err(Error::Config(format!(
                "{} prune thresholds given for an order-{order} model",
                self.0.len()
            )));
        }
        if self.at(1) != 0 {
            return Err(Error::Config("unigrams cannot be pruned".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct ContextStats {
    total: u64,
    n1: u64,
    n2: u64,
    n3plus: u64,
}

impl ContextStats {
    fn add(&mut self, count: u64) {
        self.total += count;
        match count {
            1 => self.n1 += 1,
            2 => self.n2 += 1,
            _ => self.n3plus += 1,
        }
    }

    fn gamma(&self, d: &Discounts) -> f64 {
        (d.d1 * self.n1 as f64 + d.d2 * self.n2 as f64 + d.d3plus * self.n3plus as f64)
            / self.total as f64
    }
}

/// Prunes, estimates an interpolated modified Kneser-Ney model and converts
/// it to backoff form. Discounts come from the unpruned counts.
pub fn train(counts: &NGramCounts, thresholds: &PruneThresholds) -> Result<NGramModel> {
    let order = counts.order();
    thresholds.validate(order)?;
    let symbols = counts.symbols();
    let bos = symbols.bos();
    if counts.at(1).keys().all(|g| g[0] == bos) {
        return Err(Error::Training("no training tokens".into()));
    }
    let discounts = estimate_discounts(counts);

    // kept[n - 1]: surviving n-grams, closed under prefixes.
    let mut kept: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
    for n in (1..=order).rev() {
        let threshold = thresholds.at(n);
        let mut table: HashMap<Vec<u32>, u64> = counts
            .at(n)
            .iter()
            .filter(|&(_, &c)| c > threshold)
            .map(|(g, &c)| (g.clone(), c))
            .collect();
        if n < order {
            for longer in kept[n].keys() {
                let prefix = &longer[..n];
                if !table.contains_key(prefix) {
                    table.insert(prefix.to_vec(), counts.get(prefix).max(1));
                }
            }
        }
        if n == order && table.is_empty() {
            return Err(Error::Training(format!(
                "pruning removed every {order}-gram"
            )));
        }
        kept[n - 1] = table;
    }

    // stats[n - 1]: statistics of contexts of length n - 1 over kept n-grams.
    let mut stats: Vec<HashMap<Vec<u32>, ContextStats>> = vec![HashMap::new(); order];
    for n in 1..=order {
        for (gram, &c) in &kept[n - 1] {
            if n == 1 && gram[0] == bos {
                continue;
            }
            stats[n - 1].entry(gram[..n - 1].to_vec()).or_default().add(c);
        }
    }
    let gamma = |n: usize, ctx: &[u32]| -> Option<f64> {
        stats
            .get(n - 1)
            .and_then(|s| s.get(ctx))
            .map(|st| st.gamma(discounts.order(n)))
    };
    let backoff_of = |gram: &[u32]| -> Option<f64> {
        if gram.len() >= order {
            return None;
        }
        gamma(gram.len() + 1, gram).map(log10_floor)
    };

    let mut tables: Vec<NGramTable> = Vec::with_capacity(order);

    let root = stats[0]
        .get(&Vec::new())
        .copied()
        .ok_or_else(|| Error::Training("no unigram counts".into()))?;
    let root_gamma = root.gamma(discounts.order(1));
    let uniform = 1.0 / symbols.predictable().count() as f64;
    let mut unigrams = NGramTable::new();
    for id in 0..symbols.len() as u32 {
        let gram = [id];
        let log10_prob = if id == bos {
            LOG10_ZERO
        } else {
            let c = kept[0].get(&gram[..]).copied().unwrap_or(0);
            let d = discounts.order(1).for_count(c);
            let p = (c as f64 - d).max(0.0) / root.total as f64 + root_gamma * uniform;
            log10_floor(p)
        };
        unigrams.insert(
            gram.into(),
            Entry {
                log10_prob,
                log10_backoff: backoff_of(&gram),
            },
        );
    }
    tables.push(unigrams);

    for n in 2..=order {
        let d = discounts.order(n);
        let mut table = NGramTable::with_capacity(kept[n - 1].len());
        for (gram, &c) in &kept[n - 1] {
            let (ctx, word) = gram.split_at(n - 1);
            let st = &stats[n - 1][ctx];
            let lower = 10f64.powf(backoff_score(&tables, &ctx[1..], word[0]));
            let p = (c as f64 - d.for_count(c)).max(0.0) / st.total as f64
                + st.gamma(d) * lower;
            table.insert(
                gram.clone().into_boxed_slice(),
                Entry {
                    log10_prob: log10_floor(p),
                    log10_backoff: backoff_of(gram),
                },
            );
        }
        tables.push(table);
    }

    NGramModel::from_tables(order, symbols.clone(), tables)
}

fn log10_floor(p: f64) -> f64 {
    if p > 0.0 {
        p.log10().max(LOG10_ZERO)
    } else {
        LOG10_ZERO
    }
}

/// Backoff lookup over partially built tables.
pub(super) fn backoff_score(tables: &[NGramTable], ctx: &[u32], word: u32) -> f64 {
    let mut acc = 0.0;
    let mut gram: Vec<u32> = Vec::with_capacity(ctx.len() + 1);
    for start in 0..=ctx.len() {
        let sub = &ctx[start..];
        if sub.len() + 1 > tables.len() {
            continue;
        }
        gram.clear();
        gram.extend_from_slice(sub);
        gram.push(word);
        if let Some(e) = tables[sub.len()].get(&gram[..]) {
            return acc + e.log10_prob;
        }
        if !sub.is_empty() {
            if let Some(bo) = tables[sub.len() - 1]
                .get(sub)
                .and_then(|e| e.log10_backoff)
            {
                acc += bo;
            }
        }
    }
    acc + LOG10_ZERO
}
