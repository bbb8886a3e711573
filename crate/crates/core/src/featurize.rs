//! Text to sparse feature vectors via the hashing trick.
//!
//! Tokens are maximal runs of alphanumeric characters. Each token is hashed
//! with 64-bit xxHash (XXH64) keyed by the configured seed and reduced modulo
//! the power-of-two dimension, so a given `(seed, dim)` pair produces the same
//! indices on every platform and build. Distinct tokens may collide.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xxhash_rust::xxh64::xxh64;

use crate::corpus::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 1 << 15;
pub const DEFAULT_MAX_TOKENS: usize = 150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    RawCount,
    Tfidf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub max_tokens: usize,
    pub weighting: Weighting,
    pub lowercase: bool,
    pub seed: u64,
    /// Scale each vector to unit L2 norm after weighting.
    pub normalize: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            max_tokens: DEFAULT_MAX_TOKENS,
            weighting: Weighting::Tfidf,
            lowercase: true,
            seed: 0,
            normalize: true,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || !self.dim.is_power_of_two() {
            return Err(Error::Config(format!(
                "featurizer dim must be a power of two >= 2, got {}",
                self.dim
            )));
        }
        if self.dim > u32::MAX as usize {
            return Err(Error::Config("featurizer dim too large".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be >= 1".into()));
        }
        Ok(())
    }

    /// Short content hash identifying everything that affects feature indices and weights.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    #[inline]
    pub fn index_of(&self, token: &str) -> u32 {
        (xxh64(token.as_bytes(), self.seed) & (self.dim as u64 - 1)) as u32
    }
}

/// Sparse feature vector with entries sorted by index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
    norm: f64,
}

impl FeatureVector {
    /// Builds a vector from `(index, weight)` pairs. Duplicate indices are summed.
    pub fn from_pairs<I: IntoIterator<Item = (u32, f64)>>(pairs: I) -> Self {
        let mut map: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, w) in pairs {
            *map.entry(i).or_insert(0.0) += w;
        }
        Self::from_sorted(map.into_iter().collect())
    }

    /// Dense input; zero entries are dropped.
    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_sorted(
            values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .collect(),
        )
    }

    fn from_sorted(entries: Vec<(u32, f64)>) -> Self {
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        Self { entries, norm }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Largest index plus one, or 0 for an empty vector.
    pub fn min_dim(&self) -> usize {
        self.entries.last().map_or(0, |(i, _)| *i as usize + 1)
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map_or(0.0, |p| self.entries[p].1)
    }

    fn scaled(mut self, s: f64) -> Self {
        for (_, w) in &mut self.entries {
            *w *= s;
        }
        self.norm *= s.abs();
        self
    }
}

/// Splits text into alphanumeric runs, truncated to `max_tokens`.
pub fn tokenize(text: &str, cfg: &FeaturizerConfig) -> Vec<String> {
    let mut out = Vec::new();
    for run in text.split(|c: char| !c.is_alphanumeric()) {
        if run.is_empty() {
            continue;
        }
        if out.len() == cfg.max_tokens {
            break;
        }
        out.push(if cfg.lowercase {
            run.to_lowercase()
        } else {
            run.to_string()
        });
    }
    out
}

fn hashed_counts(text: &str, cfg: &FeaturizerConfig) -> BTreeMap<u32, f64> {
    let mut counts = BTreeMap::new();
    for tok in tokenize(text, cfg) {
        *counts.entry(cfg.index_of(&tok)).or_insert(0.0) += 1.0;
    }
    counts
}

/// Inverse document frequency per hashed index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdfTable(pub Vec<f64>);

impl IdfTable {
    pub fn get(&self, index: u32) -> f64 {
        self.0[index as usize]
    }
}

/// Smoothed idf: `ln((1 + m) / (1 + df)) + 1`, where `m` is the number of documents.
pub fn fit_idf(ds: &Dataset, cfg: &FeaturizerConfig) -> IdfTable {
    fit_idf_texts(ds.samples.iter().map(|s| s.text.as_str()), cfg)
}

pub fn fit_idf_texts<'a, I: IntoIterator<Item = &'a str>>(texts: I, cfg: &FeaturizerConfig) -> IdfTable {
    let mut df = vec![0u64; cfg.dim];
    let mut m = 0u64;
    for text in texts {
        m += 1;
        for idx in hashed_counts(text, cfg).into_keys() {
            df[idx as usize] += 1;
        }
    }
    let numer = (1 + m) as f64;
    IdfTable(df.iter().map(|&d| (numer / (1 + d) as f64).ln() + 1.0).collect())
}

/// Hashed bag of words for one text.
///
/// Panics if `cfg.weighting` is tf-idf and no table is given.
pub fn featurize(text: &str, cfg: &FeaturizerConfig, idf: Option<&IdfTable>) -> FeatureVector {
    let counts = hashed_counts(text, cfg);
    let fv = match cfg.weighting {
        Weighting::RawCount => FeatureVector::from_sorted(counts.into_iter().collect()),
        Weighting::Tfidf => {
            let idf = idf.expect("tf-idf weighting requires an idf table");
            FeatureVector::from_sorted(counts.into_iter().map(|(i, c)| (i, c * idf.get(i))).collect())
        }
    };
    if cfg.normalize && fv.norm > 0.0 {
        let n = fv.norm;
        let mut out = fv.scaled(1.0 / n);
        out.norm = out.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        out
    } else {
        fv
    }
}

/// A featurizer config together with the statistics fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub config: FeaturizerConfig,
    pub idf: Option<IdfTable>,
}

impl Featurizer {
    pub fn fit(ds: &Dataset, config: &FeaturizerConfig) -> Result<Self> {
        config.validate()?;
        let idf = match config.weighting {
            Weighting::Tfidf => Some(fit_idf(ds, config)),
            Weighting::RawCount => None,
        };
        Ok(Self {
            config: config.clone(),
            idf,
        })
    }

    pub fn transform(&self, text: &str) -> FeatureVector {
        featurize(text, &self.config, self.idf.as_ref())
    }

    pub fn transform_all(&self, ds: &Dataset) -> Vec<FeatureVector> {
        use rayon::prelude::*;
        ds.samples.par_iter().map(|s| self.transform(&s.text)).collect()
    }

    pub fn fingerprint(&self) -> String {
        self.config.fingerprint()
    }
}
