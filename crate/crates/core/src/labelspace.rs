//! Full-label intensity vectors and the operations defined on them.
//!
//! Every label of a sample carries a real intensity on a fixed 0–10 scale.
//! Gold labels start at the maximum, everything else at the minimum, and a
//! trained regressor later fills in the intermediate values.

use std::collections::BTreeSet;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_INTENSITY: f64 = 0.0;
pub const MAX_INTENSITY: f64 = 10.0;

/// Default annotation threshold.
pub const DEFAULT_THRESHOLD: f64 = 1.0;

/// Set of label indices, kept sorted.
pub type LabelSet = BTreeSet<usize>;

/// One intensity per label, in vocabulary order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntensityVector(pub Vec<f64>);

impl IntensityVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Clamp every value into `[MIN_INTENSITY, MAX_INTENSITY]`. NaN maps to the minimum.
    pub fn clamped(&self) -> Self {
        Self(self.0.iter().map(|&v| clamp_intensity(v)).collect())
    }

    pub fn in_range(&self) -> bool {
        self.0.iter().all(|v| (MIN_INTENSITY..=MAX_INTENSITY).contains(v))
    }
}

impl From<Vec<f64>> for IntensityVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for IntensityVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for IntensityVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub(crate) fn clamp_intensity(v: f64) -> f64 {
    if v.is_nan() {
        MIN_INTENSITY
    } else {
        v.clamp(MIN_INTENSITY, MAX_INTENSITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationConfig {
    /// Values below this are zeroed during threshold annotation.
    pub threshold: f64,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl AnnotationConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        let cfg = Self { threshold };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_INTENSITY..=MAX_INTENSITY).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold {} outside [{MIN_INTENSITY}, {MAX_INTENSITY}]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Maps a gold label set onto a full-label vector: gold positions get the
/// maximum intensity, all others the minimum.
pub fn init_full_labels(gold: &LabelSet, count: usize) -> Result<IntensityVector> {
    let mut out = IntensityVector::zeros(count);
    for &j in gold {
        if j >= count {
            return Err(Error::LabelOutOfRange { index: j, count });
        }
        out[j] = MAX_INTENSITY;
    }
    Ok(out)
}

/// Restores gold positions of a model annotation to the maximum intensity,
/// leaving every other learned value untouched.
pub fn regress_labels(gold: &LabelSet, annotation: &IntensityVector) -> Result<IntensityVector> {
    let count = annotation.len();
    let mut out = annotation.clone();
    for &j in gold {
        if j >= count {
            return Err(Error::LengthMismatch {
                expected: j + 1,
                got: count,
            });
        }
        out[j] = MAX_INTENSITY;
    }
    Ok(out)
}

/// Checks the post-condition of [`regress_labels`] for one sample.
pub fn is_regressed(gold: &LabelSet, before: &IntensityVector, after: &IntensityVector) -> bool {
    before.len() == after.len()
        && after.iter().enumerate().all(|(j, &v)| {
            if gold.contains(&j) {
                v == MAX_INTENSITY
            } else {
                v.to_bits() == before[j].to_bits()
            }
        })
}

/// Clamps raw scores into range, then zeroes every value below the threshold.
pub fn annotate_threshold(raw: &IntensityVector, cfg: &AnnotationConfig) -> IntensityVector {
    IntensityVector(
        raw.iter()
            .map(|&v| {
                let v = clamp_intensity(v);
                if v < cfg.threshold {
                    0.0
                } else {
                    v
                }
            })
            .collect(),
    )
}

/// Indices of the `k` largest values. Ties go to the lower label index.
pub fn top_k(raw: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > raw.len() {
        return Err(Error::Config(format!(
            "top-k requires 1 <= k <= {}, got k = {k}",
            raw.len()
        )));
    }
    Ok(ranking(raw).into_iter().take(k).collect())
}

/// Like [`top_k`] but returned as a set.
pub fn top_k_set(raw: &[f64], k: usize) -> Result<LabelSet> {
    Ok(top_k(raw, k)?.into_iter().collect())
}

/// All label indices ordered by descending value, ties by ascending index.
/// NaN sorts last.
pub fn ranking(raw: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..raw.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (raw[a], raw[b]);
        match (x.is_nan(), y.is_nan()) {
            (true, true) => a.cmp(&b),
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            (false, false) => y.partial_cmp(&x).unwrap().then(a.cmp(&b)),
        }
    });
    idx
}

/// Index of the highest value; the lowest index wins ties.
///
/// Panics on an empty slice.
pub fn arg_max(raw: &[f64]) -> usize {
    assert!(!raw.is_empty(), "arg_max of an empty vector");
    let mut best = 0;
    for (j, &v) in raw.iter().enumerate().skip(1) {
        if v > raw[best] || (raw[best].is_nan() && !v.is_nan()) {
            best = j;
        }
    }
    best
}
