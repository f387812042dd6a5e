//! Word error rate scoring and LM/prior scale tuning.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::decoder::{HypothesisRecord, ManifestRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Match,
    Substitute,
    Delete,
    Insert,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ErrorCounts {
    pub sub: u64,
    pub del: u64,
    pub ins: u64,
    pub matches: u64,
    /// Reference tokens.
    pub tokens: u64,
}

impl ErrorCounts {
    pub fn errors(&self) -> u64 {
        self.sub + self.del + self.ins
    }

    pub fn add(&mut self, other: &ErrorCounts) {
        self.sub += other.sub;
        self.del += other.del;
        self.ins += other.ins;
        self.matches += other.matches;
        self.tokens += other.tokens;
    }

    fn percent(&self, n: u64) -> Option<f64> {
        match (self.tokens, n) {
            (0, 0) => Some(0.0),
            (0, _) => None,
            (t, n) => Some(100.0 * n as f64 / t as f64),
        }
    }

    /// None when errors occur against an empty reference.
    pub fn wer(&self) -> Option<f64> {
        self.percent(self.errors())
    }

    pub fn sub_rate(&self) -> Option<f64> {
        self.percent(self.sub)
    }

    pub fn del_rate(&self) -> Option<f64> {
        self.percent(self.del)
    }

    pub fn ins_rate(&self) -> Option<f64> {
        self.percent(self.ins)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentResult {
    pub ops: Vec<EditOp>,
    pub counts: ErrorCounts,
}

impl AlignmentResult {
    pub fn edit_distance(&self) -> u64 {
        self.counts.errors()
    }
}

/// Uppercased whitespace tokens.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_uppercase).collect()
}

/// Levenshtein alignment with unit costs. The backtrace prefers
/// match, then substitution, deletion, insertion.
pub fn align<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> AlignmentResult {
    let r: Vec<String> = reference.iter().map(|w| w.as_ref().trim().to_uppercase()).collect();
    let h: Vec<String> = hypothesis.iter().map(|w| w.as_ref().trim().to_uppercase()).collect();
    let (n, m) = (r.len(), h.len());
    let mut d = vec![vec![0u32; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i as u32;
    }
    for j in 0..=m {
        d[0][j] = j as u32;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + u32::from(r[i - 1] != h[j - 1]);
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let mut counts = ErrorCounts {
        tokens: n as u64,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i][j];
        if i > 0 && j > 0 && r[i - 1] == h[j - 1] && d[i - 1][j - 1] == here {
            ops.push(EditOp::Match);
            counts.matches += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && d[i - 1][j - 1] + 1 == here {
            ops.push(EditOp::Substitute);
            counts.sub += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i - 1][j] + 1 == here {
            ops.push(EditOp::Delete);
            counts.del += 1;
            i -= 1;
        } else {
            ops.push(EditOp::Insert);
            counts.ins += 1;
            j -= 1;
        }
    }
    ops.reverse();
    AlignmentResult { ops, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetScore {
    pub counts: ErrorCounts,
    pub utterances: u64,
    pub wer: Option<f64>,
    pub sub_rate: Option<f64>,
    pub del_rate: Option<f64>,
    pub ins_rate: Option<f64>,
}

impl SubsetScore {
    fn new(counts: ErrorCounts, utterances: u64) -> Self {
        SubsetScore {
            counts,
            utterances,
            wer: counts.wer(),
            sub_rate: counts.sub_rate(),
            del_rate: counts.del_rate(),
            ins_rate: counts.ins_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub subsets: BTreeMap<String, SubsetScore>,
    pub overall: SubsetScore,
}

impl CorpusReport {
    /// `subset wer sub del ins tokens`, percentages at 0.1 resolution.
    pub fn write_tsv<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "subset\twer\tsub\tdel\tins\ttokens")?;
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}"));
        let rows = self
            .subsets
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .chain(std::iter::once(("overall", &self.overall)));
        for (name, s) in rows {
            writeln!(
                sink,
                "{name}\t{}\t{}\t{}\t{}\t{}",
                pct(s.wer),
                pct(s.sub_rate),
                pct(s.del_rate),
                pct(s.ins_rate),
                s.counts.tokens
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores hypotheses against manifest references, per subset and overall.
pub fn corpus_score(refs: &[ManifestRecord], hyps: &[HypothesisRecord]) -> Result<CorpusReport> {
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    for h in hyps {
        if by_id.insert(&h.id, &h.hyp).is_some() {
            return Err(Error::Data(format!("duplicate hypothesis id {:?}", h.id)));
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut triples = Vec::with_capacity(refs.len());
    for r in refs {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Data(format!("duplicate reference id {:?}", r.id)));
        }
        let hyp = by_id
            .get(r.id.as_str())
            .ok_or_else(|| Error::Data(format!("no hypothesis for id {:?}", r.id)))?;
        triples.push((r.subset.as_str(), r.reference.as_str(), *hyp));
    }
    if let Some(extra) = hyps.iter().find(|h| !seen.contains(h.id.as_str())) {
        return Err(Error::Data(format!("hypothesis id {:?} has no reference", extra.id)));
    }
    Ok(score_triples(&triples))
}

/// Scores (subset, reference, hypothesis) text triples.
pub fn score_triples(triples: &[(&str, &str, &str)]) -> CorpusReport {
    let aligned: Vec<ErrorCounts> = triples
        .par_iter()
        .map(|(_, r, h)| align(&normalize_words(r), &normalize_words(h)).counts)
        .collect();
    let mut subsets: BTreeMap<String, (ErrorCounts, u64)> = BTreeMap::new();
    let mut overall = ErrorCounts::default();
    for ((subset, _, _), counts) in triples.iter().zip(&aligned) {
        let slot = subsets.entry(subset.to_string()).or_default();
        slot.0.add(counts);
        slot.1 += 1;
        overall.add(counts);
    }
    CorpusReport {
        subsets: subsets
            .into_iter()
            .map(|(k, (c, n))| (k, SubsetScore::new(c, n)))
            .collect(),
        overall: SubsetScore::new(overall, triples.len() as u64),
    }
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("invalid grid {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let values = if parts.len() == 3 {
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else if parts.len() == 1 {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?
    } else {
        return Err(bad());
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(bad());
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub lm_scale: f64,
    pub prior_scale: f64,
    pub errors: u64,
    pub tokens: u64,
    pub wer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub lm_scale: f64,
    pub prior_scale: f64,
    pub wer: Option<f64>,
    pub sampled_ids: Vec<String>,
    pub grid: Vec<GridPoint>,
}

/// Seeded subset of `ceil(fraction * n)` records, in manifest order.
pub fn sample_records(records: &[ManifestRecord], fraction: f64, seed: u64) -> Result<Vec<&ManifestRecord>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("tuning fraction {fraction} outside (0, 1]")));
    }
    let k = (fraction * records.len() as f64).ceil() as usize;
    if k == 0 {
        return Err(Error::Config("tuning subset is empty".into()));
    }
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| &records[i]).collect())
}

/// Grid search over (lm_scale, prior_scale) on a seeded dev subset.
/// `decode` maps a record and scales to hypothesis text. The result minimizes
/// the error count; ties go to the smaller lm_scale, then prior_scale.
pub fn tune_scales<F>(
    records: &[ManifestRecord],
    decode: F,
    lm_scales: &[f64],
    prior_scales: &[f64],
    fraction: f64,
    seed: u64,
) -> Result<TuneResult>
where
    F: Fn(&ManifestRecord, f64, f64) -> Result<String> + Sync,
{
    if lm_scales.is_empty() || prior_scales.is_empty() {
        return Err(Error::Config("empty tuning grid".into()));
    }
    let sample = sample_records(records, fraction, seed)?;
    let points: Vec<(f64, f64)> = lm_scales
        .iter()
        .flat_map(|&l| prior_scales.iter().map(move |&p| (l, p)))
        .collect();
    let grid: Vec<GridPoint> = points
        .par_iter()
        .map(|&(lm_scale, prior_scale)| {
            let mut total = ErrorCounts::default();
            for rec in &sample {
                let hyp = decode(rec, lm_scale, prior_scale)?;
                total.add(&align(&normalize_words(&rec.reference), &normalize_words(&hyp)).counts);
            }
            Ok(GridPoint {
                lm_scale,
                prior_scale,
                errors: total.errors(),
                tokens: total.tokens,
                wer: total.wer(),
            })
        })
        .collect::<Result<_>>()?;
    let best = grid
        .iter()
        .min_by(|a, b| {
            a.errors
                .cmp(&b.errors)
                .then(a.lm_scale.total_cmp(&b.lm_scale))
                .then(a.prior_scale.total_cmp(&b.prior_scale))
        })
        .expect("grid is non-empty");
    Ok(TuneResult {
        lm_scale: best.lm_scale,
        prior_scale: best.prior_scale,
        wer: best.wer,
        sampled_ids: sample.iter().map(|r| r.id.clone()).collect(),
        grid,
    })
}

/// Runs [`tune_scales`] separately for each subset of the manifest.
pub fn tune_scales_per_subset<F>(
    records: &[ManifestRecord],
    decode: F,
    lm_scales: &[f64],
    prior_scales: &[f64],
    fraction: f64,
    seed: u64,
) -> Result<BTreeMap<String, TuneResult>>
where
    F: Fn(&ManifestRecord, f64, f64) -> Result<String> + Sync,
{
    let mut groups: BTreeMap<&str, Vec<ManifestRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.subset).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(name, recs)| {
            tune_scales(&recs, &decode, lm_scales, prior_scales, fraction, seed).map(|t| (name.to_string(), t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        normalize_words(s)
    }

    fn record(id: &str, reference: &str, subset: &str) -> ManifestRecord {
        ManifestRecord {
            id: id.into(),
            emissions: "x".into(),
            reference: reference.into(),
            subset: subset.into(),
        }
    }

    fn hyp(id: &str, text: &str) -> HypothesisRecord {
        HypothesisRecord {
            id: id.into(),
            hyp: text.into(),
        }
    }

    #[test]
    fn alignment_examples() {
        let a = align(&words("a b c"), &words("a x c"));
        assert_eq!((a.counts.sub, a.counts.del, a.counts.ins), (1, 0, 0));
        assert!((a.counts.wer().unwrap() - 100.0 / 3.0).abs() < 1e-12);
        let a = align(&words("a b"), &words("a"));
        assert_eq!((a.counts.sub, a.counts.del, a.counts.ins), (0, 1, 0));
        let a = align(&words("await"), &words("a weight"));
        assert_eq!((a.counts.sub, a.counts.del, a.counts.ins), (1, 0, 1));
        assert_eq!(a.edit_distance(), 2);
        assert_eq!(a.ops, vec![EditOp::Insert, EditOp::Substitute]);
    }

    #[test]
    fn case_insensitive() {
        assert_eq!(align(&words("Hello World"), &words("hello WORLD")).edit_distance(), 0);
    }

    #[test]
    fn pooling_examples() {
        let refs = [record("1", "a b c d e", "A"), record("2", "f g h i j", "B")];
        let r = corpus_score(&refs, &[hyp("1", "a b c d x"), hyp("2", "f g h i j")]).unwrap();
        assert_eq!(r.subsets["A"].wer, Some(20.0));
        assert_eq!(r.subsets["B"].wer, Some(0.0));
        assert_eq!(r.overall.wer, Some(10.0));
        let r = corpus_score(&refs, &[hyp("1", ""), hyp("2", "")]).unwrap();
        assert_eq!(r.overall.counts.del, 10);
        assert_eq!(r.overall.wer, Some(100.0));
        let mut tsv = Vec::new();
        r.write_tsv(&mut tsv).unwrap();
        assert_eq!(
            String::from_utf8(tsv).unwrap(),
            "subset\twer\tsub\tdel\tins\ttokens\nA\t100.0\t0.0\t100.0\t0.0\t5\nB\t100.0\t0.0\t100.0\t0.0\t5\noverall\t100.0\t0.0\t100.0\t0.0\t10\n"
        );
    }

    #[test]
    fn id_mismatches_are_data_errors() {
        let refs = [record("1", "a", "A")];
        assert!(corpus_score(&refs, &[]).is_err());
        assert!(corpus_score(&refs, &[hyp("1", "a"), hyp("1", "a")]).is_err());
        assert!(corpus_score(&refs, &[hyp("1", "a"), hyp("2", "a")]).is_err());
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.2:1.0:0.2").unwrap(), vec![0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(parse_grid("0.0:1.0:0.1").unwrap().len(), 11);
        assert_eq!(parse_grid("0.5,1.5").unwrap(), vec![0.5, 1.5]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("x").is_err());
    }

    #[test]
    fn singleton_grid_and_determinism() {
        let recs: Vec<ManifestRecord> = (0..8).map(|i| record(&i.to_string(), "a b", "A")).collect();
        let decode = |r: &ManifestRecord, _: f64, _: f64| Ok(if r.id == "0" { "a".to_string() } else { "a b".to_string() });
        let t = tune_scales(&recs, decode, &[1.0], &[0.5], 1.0, 42).unwrap();
        assert_eq!((t.lm_scale, t.prior_scale), (1.0, 0.5));
        assert_eq!(t.wer, Some(100.0 / 16.0));
        let a = tune_scales(&recs, decode, &[1.0], &[0.5], 0.25, 42).unwrap();
        let b = tune_scales(&recs, decode, &[1.0], &[0.5], 0.25, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sampled_ids.len(), 2);
        assert!(tune_scales(&[], decode, &[1.0], &[0.5], 0.25, 42).is_err());
    }

    #[test]
    fn ties_prefer_smaller_scales() {
        let recs = vec![record("1", "a", "A")];
        let decode = |_: &ManifestRecord, l: f64, _: f64| Ok(if l >= 1.0 { "a" } else { "b" }.to_string());
        let t = tune_scales(&recs, decode, &[2.0, 1.0, 0.5], &[0.3, 0.1], 1.0, 0).unwrap();
        assert_eq!((t.lm_scale, t.prior_scale), (1.0, 0.1));
    }

    proptest! {
        #[test]
        fn alignment_invariants(r in prop::collection::vec(0u8..3, 0..7), h in prop::collection::vec(0u8..3, 0..7)) {
            let rs: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            let hs: Vec<String> = h.iter().map(|x| x.to_string()).collect();
            let a = align(&rs, &hs);
            prop_assert_eq!(a.counts.sub + a.counts.del + a.counts.matches, rs.len() as u64);
            prop_assert_eq!(a.counts.sub + a.counts.ins + a.counts.matches, hs.len() as u64);
            prop_assert!(a.edit_distance() <= rs.len().max(hs.len()) as u64);
        }

        #[test]
        fn pooling_is_token_weighted(parts in prop::collection::vec((0u64..5, 1u64..10), 1..6)) {
            let refs: Vec<ManifestRecord> = parts.iter().enumerate()
                .map(|(i, &(_, n))| record(&i.to_string(), &vec!["w"; n as usize].join(" "), &format!("s{}", i % 2)))
                .collect();
            let hyps: Vec<HypothesisRecord> = parts.iter().enumerate()
                .map(|(i, &(e, n))| hyp(&i.to_string(), &vec!["w"; (n + e) as usize].join(" ")))
                .collect();
            let r = corpus_score(&refs, &hyps).unwrap();
            let mut sum = ErrorCounts::default();
            for s in r.subsets.values() {
                sum.add(&s.counts);
            }
            prop_assert_eq!(sum, r.overall.counts);
            let errors: u64 = parts.iter().map(|p| p.0).sum();
            let tokens: u64 = parts.iter().map(|p| p.1).sum();
            prop_assert_eq!(r.overall.counts.errors(), errors);
            prop_assert_eq!(r.overall.counts.tokens, tokens);
        }
    }
}
