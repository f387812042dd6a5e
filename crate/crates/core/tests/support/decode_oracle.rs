//! Exhaustive lexical CTC decoding: enumerates every frame label path, splits
//! its collapsed form into pronunciations and scores every word parse.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::LN_10;

use asrkit::corpus::Vocabulary;
use asrkit::decoder::{EmissionMatrix, PriorVector};
use asrkit::g2p::PhonemeAlphabet;
use asrkit::lexicon::{Lexicon, PronunciationSource};
use asrkit::ngram::{count_ngrams, train, NGramModel, PruneThresholds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct OracleInput<'a> {
    /// (word, phonemes) pairs.
    pub lexicon: &'a [(String, Vec<String>)],
    /// Label strings; index 0 is blank, word-final labels end in '#'.
    pub labels: &'a [String],
    pub emissions: &'a EmissionMatrix,
    pub lm: Option<&'a NGramModel>,
    pub prior: Option<&'a PriorVector>,
    pub lm_scale: f64,
    pub prior_scale: f64,
    pub word_insertion_score: f64,
}

fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, &l) in path.iter().enumerate() {
        if l != 0 && (i == 0 || path[i - 1] != l) {
            out.push(l);
        }
    }
    out
}

/// Returns the best word sequence and score; ties go to the lexicographically
/// smallest sequence of word indices (words sorted alphabetically).
pub fn exhaustive_decode(input: &OracleInput) -> Option<(Vec<String>, f64)> {
    let words: Vec<String> = {
        let mut w: Vec<String> = input.lexicon.iter().map(|(w, _)| w.to_uppercase()).collect();
        w.sort();
        w.dedup();
        w
    };
    let mut by_pron: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for (w, p) in input.lexicon {
        let id = words.binary_search(&w.to_uppercase()).unwrap();
        let slot = by_pron.entry(p.clone()).or_default();
        if !slot.contains(&id) {
            slot.push(id);
        }
    }
    let t_len = input.emissions.frames();
    let l_len = input.labels.len();
    let use_lm = input.lm.filter(|_| input.lm_scale != 0.0);
    let use_prior = input.prior.filter(|_| input.prior_scale != 0.0);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let total_paths = l_len.pow(t_len as u32);
    for code in 0..total_paths {
        let mut path = Vec::with_capacity(t_len);
        let mut c = code;
        for _ in 0..t_len {
            path.push(c % l_len);
            c /= l_len;
        }
        let mut acoustic = 0.0;
        for (t, &l) in path.iter().enumerate() {
            acoustic += input.emissions.get(t, l);
            if let Some(p) = use_prior {
                acoustic -= input.prior_scale * p.values()[l];
            }
        }
        let mut prons: Vec<Vec<String>> = Vec::new();
        let mut current: Vec<String> = Vec::new();
        for l in collapse(&path) {
            let sym = &input.labels[l];
            match sym.strip_suffix('#') {
                Some(base) => {
                    current.push(base.to_string());
                    prons.push(std::mem::take(&mut current));
                }
                None => current.push(sym.clone()),
            }
        }
        if !current.is_empty() {
            continue;
        }
        let choices: Option<Vec<&Vec<usize>>> = prons.iter().map(|p| by_pron.get(p)).collect();
        let Some(choices) = choices else { continue };
        let mut idx = vec![0usize; choices.len()];
        loop {
            let seq: Vec<usize> = idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
            let mut score = acoustic + input.word_insertion_score * seq.len() as f64;
            if let Some(lm) = use_lm {
                let mut text: Vec<&str> = seq.iter().map(|&w| words[w].as_str()).collect();
                text.push("</s>");
                let mut state = lm.begin_state();
                for w in text {
                    let (lp, next) = lm.score_word(&state, w);
                    score += input.lm_scale * LN_10 * lp;
                    state = next;
                }
            }
            let wins = match &best {
                None => true,
                Some((bseq, bscore)) => score > *bscore || (score == *bscore && seq < *bseq),
            };
            if wins {
                best = Some((seq, score));
            }
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < choices[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }
    best.map(|(seq, score)| (seq.into_iter().map(|w| words[w].clone()).collect(), score))
}

/// Best path score over all frame label paths for each collapsed label sequence,
/// maximized over sequences (open-vocabulary oracle).
pub fn exhaustive_open(em: &EmissionMatrix) -> (Vec<usize>, f64) {
    let (t_len, l_len) = (em.frames(), em.labels());
    let mut best: Option<(Vec<usize>, f64)> = None;
    for code in 0..l_len.pow(t_len as u32) {
        let mut path = Vec::with_capacity(t_len);
        let mut c = code;
        for _ in 0..t_len {
            path.push(c % l_len);
            c /= l_len;
        }
        let score: f64 = path.iter().enumerate().map(|(t, &l)| em.get(t, l)).sum();
        let seq = collapse(&path);
        let wins = match &best {
            None => true,
            Some((bseq, bscore)) => score > *bscore || (score == *bscore && seq < *bseq),
        };
        if wins {
            best = Some((seq, score));
        }
    }
    best.unwrap()
}

/// Random log-softmax emissions.
pub fn random_emissions(rng: &mut ChaCha8Rng, frames: usize, labels: usize, sharpness: f64) -> EmissionMatrix {
    let mut values = Vec::with_capacity(frames * labels);
    for _ in 0..frames {
        let logits: Vec<f64> = (0..labels).map(|_| sharpness * rng.gen::<f64>()).collect();
        let norm = logits.iter().map(|x| x.exp()).sum::<f64>().ln();
        values.extend(logits.iter().map(|x| x - norm));
    }
    EmissionMatrix::new(frames, labels, values).unwrap()
}

pub fn random_prior(rng: &mut ChaCha8Rng, labels: usize) -> PriorVector {
    let raw: Vec<f64> = (0..labels).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    PriorVector::new(raw.iter().map(|p| (p / total).ln()).collect()).unwrap()
}

pub struct Instance {
    pub lexicon: Lexicon,
    pub pairs: Vec<(String, Vec<String>)>,
    pub emissions: EmissionMatrix,
    pub lm: NGramModel,
    pub prior: PriorVector,
}

const WORDS: [&str; 6] = ["AA", "BO", "CE", "DI", "EU", "FY"];

/// Lexicon of up to 6 words over at most 2 phonemes (so at most 5 labels),
/// emissions with up to 4 frames, a bigram LM over the words and a prior.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phonemes: Vec<&str> = if rng.gen_bool(0.3) { vec!["A"] } else { vec!["A", "B"] };
    let alphabet = PhonemeAlphabet::new(phonemes.iter().copied()).unwrap();
    let mut lexicon = Lexicon::new(alphabet);
    let n_words = rng.gen_range(1..=6);
    for w in &WORDS[..n_words] {
        for _ in 0..rng.gen_range(1..=2) {
            let len = rng.gen_range(1..=3);
            let pron: Vec<String> = (0..len)
                .map(|_| phonemes[rng.gen_range(0..phonemes.len())].to_string())
                .collect();
            lexicon.add(w, pron, PronunciationSource::BaseDictionary).unwrap();
        }
    }
    let pairs = lexicon.pairs();
    let labels = 1 + 2 * phonemes.len();
    let frames = rng.gen_range(1..=4);
    let emissions = random_emissions(&mut rng, frames, labels, 4.0);
    let vocab = Vocabulary::from_words(WORDS[..n_words].iter().copied()).unwrap();
    let text: Vec<String> = (0..12)
        .map(|_| {
            (0..rng.gen_range(1..4))
                .map(|_| WORDS[rng.gen_range(0..n_words)])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let counts = count_ngrams(text.join("\n").as_bytes(), 2, &vocab).unwrap();
    let lm = train(&counts, &PruneThresholds::none(2)).unwrap();
    let prior = random_prior(&mut rng, labels);
    Instance {
        lexicon,
        pairs,
        emissions,
        lm,
        prior,
    }
}
