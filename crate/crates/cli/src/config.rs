use std::path::Path;

use serde::Deserialize;

/// Pipeline settings loaded from `--config`. Command-line flags take
/// precedence over values here.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub log_level: Option<String>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub vocab: VocabSection,
    #[serde(default)]
    pub lm: LmSection,
    #[serde(default)]
    pub g2p: G2pSection,
    #[serde(default)]
    pub lexicon: LexiconSection,
    #[serde(default)]
    pub decode: DecodeSection,
    #[serde(default)]
    pub tune: TuneSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabSection {
    pub min_count: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmSection {
    pub order: Option<usize>,
    pub prune: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2pSection {
    pub order: Option<usize>,
    pub holdout_fraction: Option<f64>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub discount_grid: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconSection {
    pub variants: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeSection {
    pub mode: Option<String>,
    pub beam: Option<usize>,
    pub score_threshold: Option<f64>,
    pub lm_scale: Option<f64>,
    pub prior_scale: Option<f64>,
    pub word_insertion_score: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub lm_scales: Option<String>,
    pub prior_scales: Option<String>,
    pub fraction: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }
}
