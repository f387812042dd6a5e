//! Direct evaluation of interpolated modified Kneser-Ney probabilities from a
//! raw corpus. Shares no code with the trainer.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

pub struct KnOracle {
    order: usize,
    words: HashSet<String>,
    counts: Vec<HashMap<Vec<String>, u64>>,
    discounts: Vec<[f64; 3]>,
    predictable: usize,
}

fn closed_form(n: [f64; 4]) -> [f64; 3] {
    let [n1, n2, n3, n4] = n;
    if n1 == 0.0 {
        return [0.5; 3];
    }
    let y = n1 / (n1 + 2.0 * n2);
    let d1 = if n2 == 0.0 { 0.5 } else { (1.0 - 2.0 * y * n2 / n1).clamp(0.0, 1.0) };
    let d2 = if n2 == 0.0 || n3 == 0.0 { 0.5 } else { (2.0 - 3.0 * y * n3 / n2).clamp(0.0, 2.0) };
    let d3 = if n3 == 0.0 || n4 == 0.0 { 0.5 } else { (3.0 - 4.0 * y * n4 / n3).clamp(0.0, 3.0) };
    [d1, d2, d3]
}

impl KnOracle {
    pub fn new(sentences: &[Vec<String>], vocab: &[&str], order: usize) -> Self {
        let words: HashSet<String> = vocab.iter().map(|w| w.to_string()).collect();
        let mut raw: Vec<HashMap<Vec<String>, u64>> = vec![HashMap::new(); order + 1];
        for s in sentences {
            let mut toks = vec!["<s>".to_string()];
            for w in s {
                toks.push(if words.contains(w) { w.clone() } else { "<unk>".to_string() });
            }
            toks.push("</s>".to_string());
            for n in 1..=order {
                for i in 0..=toks.len().saturating_sub(n) {
                    if i + n <= toks.len() {
                        *raw[n].entry(toks[i..i + n].to_vec()).or_insert(0) += 1;
                    }
                }
            }
        }
        let mut counts = vec![HashMap::new(); order + 1];
        for n in 1..=order {
            if n == order {
                counts[n] = raw[n].clone();
                continue;
            }
            for g in raw[n].keys() {
                let c = if g[0] == "<s>" {
                    raw[n][g]
                } else {
                    raw[n + 1].keys().filter(|l| l[1..] == g[..]).count() as u64
                };
                counts[n].insert(g.clone(), c);
            }
        }
        let mut discounts = vec![[0.0; 3]; order + 1];
        for n in 1..=order {
            let mut coc = [0.0; 4];
            for (g, &c) in &counts[n] {
                if n == 1 && g[0] == "<s>" {
                    continue;
                }
                if (1..=4).contains(&c) {
                    coc[c as usize - 1] += 1.0;
                }
            }
            discounts[n] = closed_form(coc);
        }
        KnOracle { order, predictable: words.len() + 2, words, counts, discounts }
    }

    fn c(&self, gram: &[String]) -> u64 {
        self.counts[gram.len()].get(gram).copied().unwrap_or(0)
    }

    fn d(&self, n: usize, c: u64) -> f64 {
        match c {
            0 => 0.0,
            1 => self.discounts[n][0],
            2 => self.discounts[n][1],
            _ => self.discounts[n][2],
        }
    }

    pub fn predictable_words(&self) -> Vec<String> {
        let mut v: Vec<String> = self.words.iter().cloned().collect();
        v.push("<unk>".into());
        v.push("</s>".into());
        v.sort();
        v
    }

    /// P(word | history), history given oldest first and possibly longer than order - 1.
    pub fn prob(&self, history: &[String], word: &str) -> f64 {
        let keep = history.len().min(self.order - 1);
        self.interp(&history[history.len() - keep..], word)
    }

    fn interp(&self, h: &[String], w: &str) -> f64 {
        let n = h.len() + 1;
        let cands = self.predictable_words();
        let mut total = 0u64;
        let (mut n1, mut n2, mut n3) = (0.0, 0.0, 0.0);
        for v in &cands {
            let mut g = h.to_vec();
            g.push(v.clone());
            let c = self.c(&g);
            total += c;
            match c {
                0 => {}
                1 => n1 += 1.0,
                2 => n2 += 1.0,
                _ => n3 += 1.0,
            }
        }
        let lower = if h.is_empty() { 1.0 / self.predictable as f64 } else { self.interp(&h[1..], w) };
        if total == 0 {
            return lower;
        }
        let [d1, d2, d3] = self.discounts[n];
        let gamma = (d1 * n1 + d2 * n2 + d3 * n3) / total as f64;
        let mut g = h.to_vec();
        g.push(w.to_string());
        let c = self.c(&g);
        (c as f64 - self.d(n, c)).max(0.0) / total as f64 + gamma * lower
    }
}
