use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use asrkit::corpus::{build_vocabulary, count_tokens, oov_rate, TokenCountTable, Vocabulary};
use asrkit::decoder::{
    beam_search_open, estimate_prior, greedy_decode, read_hypotheses, read_manifest, write_hypotheses,
    DecoderConfig, EmissionMatrix, HypothesisRecord, LabelInventory, LabelKind, LexicalDecoder,
    ManifestRecord, PriorVector,
};
use asrkit::eval::{corpus_score, parse_grid, sample_records, tune_scales, tune_scales_per_subset};
use asrkit::g2p::{apply_g2p, train_g2p, G2pConfig, GraphoneModel, PhonemeAlphabet};
use asrkit::lexicon::{
    build_lexicon, compile_prefix_tree, read_pronunciation_dict, strip_stress, Lexicon, PrefixTree,
    VariantPolicy,
};
use asrkit::ngram::{perplexity, read_arpa, train, write_arpa, NGramModel, PruneThresholds, RawNGramCounts};

use crate::{
    DecodeArgs, G2pApplyArgs, G2pTrainArgs, Globals, LexiconBuildArgs, LexiconCompileArgs, LmPplArgs,
    LmTrainArgs, Mode, ModelArgs, PriorArgs, ScoreArgs, TuneArgs, UsageError, VocabBuildArgs,
    VocabOovArgs,
};

const DEFAULT_MIN_COUNT: u64 = 4;
const DEFAULT_LM_ORDER: usize = 4;
const DEFAULT_TUNE_SEED: u64 = 42;
const DEFAULT_TUNE_FRACTION: f64 = 0.25;

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Attaches the file name to a library error while keeping it downcastable.
fn in_file<T>(path: &Path, r: asrkit::Result<T>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(e).context(path.display().to_string()))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    in_file(path, Vocabulary::read(open(path)?))
}

fn read_dict(path: &Path) -> Result<BTreeMap<String, Vec<Vec<String>>>> {
    in_file(path, read_pronunciation_dict(open(path)?))
}

fn read_model(path: &Path) -> Result<NGramModel> {
    in_file(path, read_arpa(open(path)?))
}

fn read_g2p(path: &Path) -> Result<GraphoneModel> {
    in_file(path, GraphoneModel::read(open(path)?))
}

fn read_tree(path: &Path) -> Result<PrefixTree> {
    in_file(path, PrefixTree::read(open(path)?))
}

fn manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    in_file(path, read_manifest(open(path)?, path.parent()))
}

pub fn vocab_build(a: &VocabBuildArgs, g: &Globals) -> Result<()> {
    let mut counts = TokenCountTable::new();
    for path in &a.corpus {
        counts.merge(&in_file(path, count_tokens(open(path)?))?);
    }
    let base: BTreeSet<String> = match &a.base_dict {
        Some(p) => read_dict(p)?.into_keys().collect(),
        None => BTreeSet::new(),
    };
    let min_count = a.min_count.or(g.config.vocab.min_count).unwrap_or(DEFAULT_MIN_COUNT);
    let vocab = build_vocabulary(&counts, &base, min_count)?;
    log::info!("vocabulary: {} words from {} token types", vocab.len(), counts.len());
    let mut w = create(&a.out)?;
    vocab.write(&mut w)?;
    finish(w, &a.out)?;
    if let Some(path) = &a.counts_out {
        let mut w = create(path)?;
        counts.write(&mut w)?;
        finish(w, path)?;
    }
    Ok(())
}

pub fn vocab_oov(a: &VocabOovArgs) -> Result<()> {
    let vocab = read_vocab(&a.vocab)?;
    let mut tokens = Vec::new();
    for line in open(&a.text)?.lines() {
        tokens.extend(line?.split_whitespace().map(str::to_string));
    }
    let rate = in_file(&a.text, oov_rate(&tokens, &vocab))?;
    println!("OOV={:.2}%", 100.0 * rate);
    Ok(())
}

pub fn lm_train(a: &LmTrainArgs, g: &Globals) -> Result<()> {
    let vocab = read_vocab(&a.vocab)?;
    let order = a.order.or(g.config.lm.order).unwrap_or(DEFAULT_LM_ORDER);
    let thresholds = match a.prune.as_ref().or(g.config.lm.prune.as_ref()) {
        Some(spec) => PruneThresholds::parse(spec)?,
        None => PruneThresholds::none(order),
    };
    let mut raw = RawNGramCounts::new(order, &vocab)?;
    for path in &a.corpus {
        for line in open(path)?.lines() {
            raw.add_sentence(&line.with_context(|| format!("reading {}", path.display()))?);
        }
    }
    let model = train(&raw.finalize(), &thresholds)?;
    log::info!(
        "trained {order}-gram model: {}",
        (1..=order)
            .map(|n| format!("{n}-grams={}", model.ngram_count(n)))
            .collect::<Vec<_>>()
            .join(" ")
    );
    let mut w = create(&a.out)?;
    write_arpa(&model, &mut w)?;
    finish(w, &a.out)
}

pub fn lm_ppl(a: &LmPplArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let report = in_file(&a.text, perplexity(&model, open(&a.text)?))?;
    println!(
        "PPL={:.2} OOV={:.2}% tokens={}",
        report.ppl, report.oov_percent, report.tokens
    );
    if let Some(path) = &a.json {
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

pub fn g2p_train(a: &G2pTrainArgs, g: &Globals) -> Result<()> {
    let dict = read_dict(&a.dict)?;
    let pairs: Vec<(String, Vec<String>)> = dict
        .into_iter()
        .flat_map(|(w, vs)| {
            let mut stripped: Vec<Vec<String>> = vs.iter().map(|v| strip_stress(v)).collect();
            stripped.dedup();
            stripped.into_iter().map(move |v| (w.clone(), v))
        })
        .collect();
    let symbols: BTreeSet<&str> = pairs.iter().flat_map(|(_, p)| p.iter().map(String::as_str)).collect();
    let alphabet = PhonemeAlphabet::new(symbols)?;
    let c = &g.config.g2p;
    let defaults = G2pConfig::default();
    let config = G2pConfig {
        order: a.order.or(c.order).unwrap_or(defaults.order),
        holdout_fraction: a.holdout.or(c.holdout_fraction).unwrap_or(defaults.holdout_fraction),
        seed: g.seed.unwrap_or(defaults.seed),
        max_iterations: a.iterations.or(c.max_iterations).unwrap_or(defaults.max_iterations),
        tolerance: c.tolerance.unwrap_or(defaults.tolerance),
        discount_grid: c.discount_grid.clone().unwrap_or(defaults.discount_grid),
    };
    let (model, report) = train_g2p(&pairs, &alphabet, &config)?;
    for o in &report.orders {
        log::info!(
            "order {}: discount {} after {} iterations, held-out log-likelihood {:.4}",
            o.order,
            o.discount,
            o.iterations,
            o.heldout_log_likelihood
        );
    }
    let mut w = create(&a.out)?;
    model.write(&mut w)?;
    finish(w, &a.out)
}

/// Writes `WORD<TAB>posterior<TAB>PH1 PH2 ...`, best variant first.
pub fn g2p_apply(a: &G2pApplyArgs) -> Result<()> {
    if a.variants == 0 {
        return Err(UsageError("--variants must be at least 1".into()).into());
    }
    let model = read_g2p(&a.model)?;
    let words: Vec<String> = open(&a.words)?
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter_map(|l| l.split_whitespace().next().map(str::to_uppercase))
        .collect();
    let results: Vec<_> = words
        .par_iter()
        .map(|w| apply_g2p(&model, w, a.variants.max(10)).map(|h| (w, h)))
        .collect::<asrkit::Result<_>>()?;
    let mut out = create(&a.out)?;
    for (word, hyps) in results {
        for h in hyps.iter().take(a.variants) {
            writeln!(out, "{word}\t{:.6}\t{}", h.posterior, h.phonemes.join(" "))?;
        }
    }
    finish(out, &a.out)
}

pub fn lexicon_build(a: &LexiconBuildArgs, g: &Globals) -> Result<()> {
    let vocab = read_vocab(&a.vocab)?;
    let base = match &a.base_dict {
        Some(p) => read_dict(p)?,
        None => BTreeMap::new(),
    };
    let g2p = a.g2p.as_deref().map(read_g2p).transpose()?;
    let policy = VariantPolicy::parse(
        a.variants
            .as_deref()
            .or(g.config.lexicon.variants.as_deref())
            .unwrap_or("single"),
    )?;
    let mut symbols: BTreeSet<String> = base
        .values()
        .flatten()
        .flat_map(|v| strip_stress(v))
        .collect();
    if let Some(m) = &g2p {
        symbols.extend(m.alphabet().symbols().iter().cloned());
    }
    let alphabet = PhonemeAlphabet::new(symbols)?;
    let lex = build_lexicon(&vocab, &base, g2p.as_ref(), policy, &alphabet)?;
    log::info!("lexicon: {} words, {} pronunciations", lex.word_count(), lex.pronunciation_count());
    let mut w = create(&a.out)?;
    lex.write(&mut w)?;
    finish(w, &a.out)
}

pub fn lexicon_compile(a: &LexiconCompileArgs) -> Result<()> {
    let lex = in_file(&a.lexicon, Lexicon::read_inferring_alphabet(open(&a.lexicon)?))?;
    let tree = compile_prefix_tree(&lex)?;
    log::info!("prefix tree: {} nodes, {} labels", tree.node_count(), tree.labels().len());
    let mut w = create(&a.out)?;
    tree.write(&mut w)?;
    finish(w, &a.out)?;
    if let Some(path) = &a.labels_out {
        let mut w = create(path)?;
        LabelInventory::from_tree(&tree).write(&mut w)?;
        finish(w, path)?;
    }
    Ok(())
}

fn load_emissions(records: &[&ManifestRecord]) -> Result<HashMap<String, EmissionMatrix>> {
    records
        .par_iter()
        .map(|r| Ok((r.id.clone(), EmissionMatrix::read_path(&r.emissions)?)))
        .collect()
}

pub fn prior(a: &PriorArgs) -> Result<()> {
    let records = manifest(&a.manifest)?;
    let refs: Vec<&ManifestRecord> = records.iter().collect();
    let emissions = load_emissions(&refs)?;
    let prior = estimate_prior(records.iter().map(|r| &emissions[&r.id]))?;
    let mut w = create(&a.out)?;
    prior.write(&mut w)?;
    finish(w, &a.out)
}

struct Models {
    inventory: LabelInventory,
    tree: Option<PrefixTree>,
    lm: Option<NGramModel>,
    prior: Option<PriorVector>,
}

impl Models {
    fn load(m: &ModelArgs) -> Result<Self> {
        Ok(Models {
            inventory: in_file(&m.labels, LabelInventory::read(open(&m.labels)?))?,
            tree: m.tree.as_deref().map(read_tree).transpose()?,
            lm: m.lm.as_deref().map(read_model).transpose()?,
            prior: match &m.prior {
                Some(p) => Some(in_file(p, PriorVector::read(open(p)?))?),
                None => None,
            },
        })
    }
}

fn decoder_config(m: &ModelArgs, g: &Globals, lm_scale: f64, prior_scale: f64) -> DecoderConfig {
    let c = &g.config.decode;
    let d = DecoderConfig::default();
    DecoderConfig {
        beam_size: m.beam.or(c.beam).unwrap_or(d.beam_size),
        score_threshold: m.score_threshold.or(c.score_threshold),
        lm_scale,
        prior_scale,
        word_insertion_score: m
            .word_insertion_score
            .or(c.word_insertion_score)
            .unwrap_or(d.word_insertion_score),
        n_best: 1,
    }
}

/// Lexical decode; an utterance that ends mid-word under pruning yields an
/// empty hypothesis with a warning.
fn decode_lexical(dec: &LexicalDecoder, id: &str, em: &EmissionMatrix) -> Result<String> {
    match dec.decode(em) {
        Ok(r) => Ok(r.words.join(" ")),
        Err(asrkit::Error::EmptyResult(msg)) => {
            log::warn!("{id}: {msg}; writing an empty hypothesis");
            Ok(String::new())
        }
        Err(e) => Err(anyhow::Error::new(e).context(id.to_string())),
    }
}

pub fn decode(a: &DecodeArgs, g: &Globals) -> Result<()> {
    let c = &g.config.decode;
    let mode = match (a.mode, c.mode.as_deref()) {
        (Some(m), _) => m,
        (None, Some(s)) => <Mode as clap::ValueEnum>::from_str(s, true)
            .map_err(|_| UsageError(format!("unknown decode mode {s:?} in config")))?,
        (None, None) if a.models.tree.is_some() => Mode::Lexical,
        (None, None) => Mode::Greedy,
    };
    let records = manifest(&a.manifest)?;
    let models = Models::load(&a.models)?;
    let cfg = decoder_config(
        &a.models,
        g,
        a.lm_scale.or(c.lm_scale).unwrap_or(0.0),
        a.prior_scale.or(c.prior_scale).unwrap_or(0.0),
    );
    let lexical = match mode {
        Mode::Lexical => {
            let tree = models
                .tree
                .as_ref()
                .ok_or_else(|| UsageError("lexical decoding needs --tree".into()))?;
            Some(LexicalDecoder::new(tree, &models.inventory, models.lm.as_ref(), models.prior.as_ref(), &cfg)?)
        }
        _ if models.inventory.kind() == LabelKind::Phoneme => {
            return Err(UsageError("phoneme labels are only supported in lexical mode".into()).into())
        }
        _ => None,
    };
    let hyps: Vec<HypothesisRecord> = records
        .par_iter()
        .map(|r| {
            let em = EmissionMatrix::read_path(&r.emissions)?;
            let hyp = match (mode, &lexical) {
                (Mode::Lexical, Some(dec)) => decode_lexical(dec, &r.id, &em)?,
                (Mode::Open, _) => beam_search_open(&em, &models.inventory, &cfg)
                    .with_context(|| r.id.clone())?
                    .words
                    .join(" "),
                _ => greedy_decode(&em, &models.inventory)
                    .with_context(|| r.id.clone())?
                    .join(" "),
            };
            Ok(HypothesisRecord {
                id: r.id.clone(),
                hyp,
            })
        })
        .collect::<Result<_>>()?;
    let mut w = create(&a.out)?;
    write_hypotheses(&hyps, &mut w)?;
    finish(w, &a.out)
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let refs = manifest(&a.refs)?;
    let hyps = in_file(&a.hyps, read_hypotheses(open(&a.hyps)?))?;
    let report = corpus_score(&refs, &hyps)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            report.write_tsv(&mut w)?;
            finish(w, path)?;
            let o = &report.overall;
            println!(
                "WER={} errors={} tokens={}",
                o.wer.map_or_else(|| "n/a".into(), |v| format!("{v:.1}%")),
                o.counts.errors(),
                o.counts.tokens
            );
        }
        None => report.write_tsv(std::io::stdout().lock())?,
    }
    if let Some(path) = &a.json {
        std::fs::write(path, report.to_json() + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

pub fn tune(a: &TuneArgs, g: &Globals) -> Result<()> {
    let c = &g.config.tune;
    let lm_scales = parse_grid(a.lm_scales.as_deref().or(c.lm_scales.as_deref()).unwrap_or("0"))?;
    let prior_scales = parse_grid(a.prior_scales.as_deref().or(c.prior_scales.as_deref()).unwrap_or("0"))?;
    let fraction = a.fraction.or(c.fraction).unwrap_or(DEFAULT_TUNE_FRACTION);
    let seed = g.seed.unwrap_or(DEFAULT_TUNE_SEED);
    let records = manifest(&a.manifest)?;
    let models = Models::load(&a.models)?;
    let tree = models
        .tree
        .as_ref()
        .ok_or_else(|| UsageError("tuning needs --tree".into()))?;

    // load only the emissions the sampler can pick
    let needed: Vec<&ManifestRecord> = if a.per_subset {
        let mut groups: BTreeMap<&str, Vec<ManifestRecord>> = BTreeMap::new();
        for r in &records {
            groups.entry(&r.subset).or_default().push(r.clone());
        }
        let ids: BTreeSet<String> = groups
            .values()
            .map(|recs| sample_records(recs, fraction, seed).map(|s| s.into_iter().map(|r| r.id.clone()).collect::<Vec<_>>()))
            .collect::<asrkit::Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        records.iter().filter(|r| ids.contains(&r.id)).collect()
    } else {
        sample_records(&records, fraction, seed)?
    };
    let emissions = load_emissions(&needed)?;
    let decode = |r: &ManifestRecord, lm_scale: f64, prior_scale: f64| -> asrkit::Result<String> {
        let cfg = decoder_config(&a.models, g, lm_scale, prior_scale);
        let dec = LexicalDecoder::new(tree, &models.inventory, models.lm.as_ref(), models.prior.as_ref(), &cfg)?;
        match dec.decode(&emissions[&r.id]) {
            Ok(res) => Ok(res.words.join(" ")),
            Err(asrkit::Error::EmptyResult(_)) => Ok(String::new()),
            Err(e) => Err(e),
        }
    };
    let wer = |w: Option<f64>| w.map_or_else(|| "n/a".into(), |v| format!("{v:.1}%"));
    let json = if a.per_subset {
        let results = tune_scales_per_subset(&records, decode, &lm_scales, &prior_scales, fraction, seed)?;
        for (subset, t) in &results {
            println!("{subset}: lm_scale={} prior_scale={} WER={}", t.lm_scale, t.prior_scale, wer(t.wer));
        }
        serde_json::to_string_pretty(&results)?
    } else {
        let t = tune_scales(&records, decode, &lm_scales, &prior_scales, fraction, seed)?;
        println!("lm_scale={} prior_scale={} WER={}", t.lm_scale, t.prior_scale, wer(t.wer));
        serde_json::to_string_pretty(&t)?
    };
    if let Some(path) = &a.out {
        std::fs::write(path, json + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

