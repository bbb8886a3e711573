//! Synthetic corpora with known per-label intensities.
//!
//! Each sample draws a latent label distribution, optionally mixes it through
//! a row-stochastic correlation matrix, and emits a bag of label-specific
//! pseudo-words (`em{label}w{index}`) sampled from that distribution. Gold
//! labels are a binarisation of the latent intensities, which are returned
//! separately and never stored in the dataset.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelVocabulary, Sample, Split};
use crate::error::{Error, Result};
use crate::labelspace::{arg_max, IntensityVector, LabelSet, MAX_INTENSITY};

/// Latent intensity at or above which a label is gold in multi-label mode.
pub const MULTI_LABEL_GOLD_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `10 * p_j`: intensities sum to 10.
    #[default]
    Share,
    /// `10 * p_j / max_k p_k`: the dominant label is always 10.
    Peak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct IntensityLaw {
    pub normalization: Normalization,
    /// Standard deviation of Gaussian noise added to each latent intensity (then clamped).
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub labels: usize,
    /// Optional label names; defaults to `emotion0..`.
    pub label_names: Option<Vec<String>>,
    pub vocab_per_label: usize,
    pub words_per_text: usize,
    pub samples: usize,
    pub law: IntensityLaw,
    /// Symmetric Dirichlet concentration of the base label distribution.
    pub concentration: f64,
    /// Row-stochastic `C x C` mixing weights applied to the base distribution.
    pub mixing: Option<Vec<Vec<f64>>>,
    /// Gold is the single arg-max label instead of every label with latent >= 5.
    pub collapse: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            labels: 5,
            label_names: None,
            vocab_per_label: 40,
            words_per_text: 60,
            samples: 2000,
            law: IntensityLaw::default(),
            concentration: 1.0,
            mixing: None,
            collapse: true,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.labels < 2 {
            return bad(format!("synth needs at least 2 labels, got {}", self.labels));
        }
        if self.samples < 10 {
            return bad(format!("synth needs at least 10 samples, got {}", self.samples));
        }
        if self.vocab_per_label == 0 || self.words_per_text == 0 {
            return bad("vocab_per_label and words_per_text must be >= 1".into());
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return bad("concentration must be > 0".into());
        }
        if !(self.law.noise_sd >= 0.0 && self.law.noise_sd.is_finite()) {
            return bad("noise_sd must be >= 0".into());
        }
        if let Some(names) = &self.label_names {
            if names.len() != self.labels {
                return bad(format!("{} label names for {} labels", names.len(), self.labels));
            }
        }
        if let Some(mix) = &self.mixing {
            if mix.len() != self.labels || mix.iter().any(|r| r.len() != self.labels) {
                return bad("mixing matrix must be labels x labels".into());
            }
            for (i, row) in mix.iter().enumerate() {
                if row.iter().any(|&w| w.is_nan() || w < 0.0) {
                    return bad(format!("mixing row {i} has a negative weight"));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return bad(format!("mixing row {i} sums to {s}, not 1"));
                }
            }
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<LabelVocabulary> {
        match &self.label_names {
            Some(names) => LabelVocabulary::new(names.iter().cloned()),
            None => LabelVocabulary::new((0..self.labels).map(|j| format!("emotion{j}"))),
        }
    }
}

/// Pseudo-word for label `label`, vocabulary slot `index`.
pub fn pseudo_word(label: usize, index: usize) -> String {
    format!("em{label}w{index:03}")
}

/// Block mixing matrix: each label keeps `1 - strength` of its mass and shares
/// `strength` evenly with the other members of its group of `group` consecutive labels.
pub fn grouped_mixing(labels: usize, group: usize, strength: f64) -> Vec<Vec<f64>> {
    let group = group.max(1);
    (0..labels)
        .map(|i| {
            let start = i / group * group;
            let end = (start + group).min(labels);
            let peers = end - start - 1;
            (0..labels)
                .map(|j| {
                    if i == j {
                        if peers == 0 {
                            1.0
                        } else {
                            1.0 - strength
                        }
                    } else if (start..end).contains(&j) {
                        strength / peers as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Latent intensities, one row per sample in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    pub labels: Vec<String>,
    pub rows: Vec<IntensityVector>,
    /// Token-sampling distribution per sample.
    pub distributions: Vec<Vec<f64>>,
}

impl LatentTable {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// `id,<label>...` with full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for n in &self.labels {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(out, "{i}");
            for v in r.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let labels: Vec<String> = rdr.headers()?.iter().skip(1).map(String::from).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().skip(1).map(str::parse).collect();
            rows.push(IntensityVector(
                vals.map_err(|_| Error::row(path, i + 1, "non-numeric latent value"))?,
            ));
        }
        Ok(Self {
            labels,
            rows,
            distributions: Vec::new(),
        })
    }
}

fn dirichlet<R: Rng>(alpha: f64, c: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    loop {
        let draws: Vec<f64> = (0..c).map(|_| gamma.sample(rng)).collect();
        let s: f64 = draws.iter().sum();
        if s > 0.0 {
            return draws.into_iter().map(|d| d / s).collect();
        }
    }
}

/// Generates a corpus and its hidden intensities. Pure function of `spec`.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, LatentTable)> {
    spec.validate()?;
    let vocab = spec.vocabulary()?;
    let c = spec.labels;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.law.noise_sd.max(f64::MIN_POSITIVE)).expect("finite sd");

    let mut samples = Vec::with_capacity(spec.samples);
    let mut rows = Vec::with_capacity(spec.samples);
    let mut dists = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let base = dirichlet(spec.concentration, c, &mut rng);
        let p: Vec<f64> = match &spec.mixing {
            Some(mix) => (0..c).map(|k| (0..c).map(|j| base[j] * mix[j][k]).sum()).collect(),
            None => base,
        };
        let peak = p.iter().cloned().fold(0.0, f64::max);
        let mut latent: Vec<f64> = p
            .iter()
            .map(|&pj| match spec.law.normalization {
                Normalization::Share => MAX_INTENSITY * pj,
                Normalization::Peak => MAX_INTENSITY * pj / peak,
            })
            .collect();
        if spec.law.noise_sd > 0.0 {
            for v in &mut latent {
                *v = (*v + noise.sample(&mut rng)).clamp(0.0, MAX_INTENSITY);
            }
        }

        let pick = WeightedIndex::new(&p).expect("distribution has positive mass");
        let words: Vec<String> = (0..spec.words_per_text)
            .map(|_| {
                let k = pick.sample(&mut rng);
                pseudo_word(k, rng.gen_range(0..spec.vocab_per_label))
            })
            .collect();

        let gold: LabelSet = if spec.collapse {
            LabelSet::from([arg_max(&latent)])
        } else {
            let g: LabelSet = (0..c).filter(|&j| latent[j] >= MULTI_LABEL_GOLD_THRESHOLD).collect();
            if g.is_empty() {
                LabelSet::from([arg_max(&latent)])
            } else {
                g
            }
        };
        samples.push(Sample::new(i.to_string(), words.join(" "), gold));
        rows.push(IntensityVector(latent));
        dists.push(p);
    }

    let ds = Dataset::new(vocab.clone(), samples, Split::Train)?;
    Ok((
        ds,
        LatentTable {
            labels: vocab.names().to_vec(),
            rows,
            distributions: dists,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub per_label: Vec<f64>,
    pub mean: f64,
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Per-label Pearson r between annotated and latent intensities, plus the unweighted mean.
pub fn recovery_score(annotated: &Dataset, latent: &LatentTable) -> Result<RecoveryScore> {
    if annotated.len() != latent.rows.len() {
        return Err(Error::LengthMismatch {
            expected: latent.rows.len(),
            got: annotated.len(),
        });
    }
    let c = annotated.label_count();
    if latent.labels.len() != c {
        return Err(Error::LengthMismatch {
            expected: latent.labels.len(),
            got: c,
        });
    }
    let mut cols = vec![Vec::with_capacity(annotated.len()); c];
    for s in &annotated.samples {
        let v = s.intensities.as_ref().ok_or_else(|| Error::Sample {
            id: s.id.clone(),
            msg: "missing intensities".into(),
        })?;
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(v[j]);
        }
    }
    let per_label: Vec<f64> = (0..c).map(|j| pearson(&cols[j], &latent.column(j))).collect();
    let mean = per_label.iter().sum::<f64>() / c as f64;
    Ok(RecoveryScore { per_label, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;

    fn small(collapse: bool) -> SynthSpec {
        SynthSpec {
            labels: 3,
            samples: 200,
            collapse,
            seed: 7,
            ..Default::default()
        }
    }

    fn label_of(word: &str) -> usize {
        word[2..word.find('w').unwrap()].parse().unwrap()
    }

    #[test]
    fn seeded_generation_is_pure() {
        let (a, la) = generate(&small(true)).unwrap();
        let (b, lb) = generate(&small(true)).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let (c, _) = generate(&SynthSpec { seed: 8, ..small(true) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn collapse_mode_gold_is_argmax_and_dominates_text() {
        let (ds, latent) = generate(&small(true)).unwrap();
        for (s, l) in ds.samples.iter().zip(&latent.rows) {
            assert_eq!(s.gold, LabelSet::from([arg_max(l)]));
            assert!((l.iter().sum::<f64>() - 10.0).abs() < 1e-9);
        }
        // A sample whose latent is concentrated on one label is dominated by its words.
        let (i, row) = latent
            .rows
            .iter()
            .enumerate()
            .find(|(_, r)| r[arg_max(r)] >= 8.0)
            .expect("some sample has a dominant label");
        let dom = arg_max(row);
        let words: Vec<&str> = ds.samples[i].text.split(' ').collect();
        let share = words.iter().filter(|w| label_of(w) == dom).count() as f64 / words.len() as f64;
        assert!(share > 0.6, "{share}");
    }

    #[test]
    fn multi_label_gold_uses_midpoint() {
        let spec = SynthSpec {
            law: IntensityLaw {
                normalization: Normalization::Peak,
                noise_sd: 0.0,
            },
            ..small(false)
        };
        let (ds, latent) = generate(&spec).unwrap();
        let mut multi = 0;
        for (s, l) in ds.samples.iter().zip(&latent.rows) {
            let expect: LabelSet = (0..3).filter(|&j| l[j] >= 5.0).collect();
            assert_eq!(s.gold, expect);
            multi += usize::from(s.gold.len() > 1);
        }
        assert!(multi > 0);
    }

    #[test]
    fn token_shares_follow_the_latent_distribution() {
        // Per-text chi-square against n * p averages to its degrees of freedom.
        let spec = SynthSpec {
            labels: 4,
            words_per_text: 400,
            samples: 300,
            concentration: 2.0,
            seed: 3,
            ..Default::default()
        };
        let (ds, latent) = generate(&spec).unwrap();
        let mut total = 0.0;
        for (s, row) in ds.samples.iter().zip(&latent.rows) {
            let mut counts = [0.0f64; 4];
            for w in s.text.split(' ') {
                counts[label_of(w)] += 1.0;
            }
            let n = spec.words_per_text as f64;
            let sum: f64 = row.iter().sum();
            for j in 0..4 {
                let q = row[j] / sum;
                if q > 0.0 {
                    total += (counts[j] - n * q).powi(2) / (n * q);
                }
            }
        }
        let mean_chi2 = total / ds.len() as f64;
        // df = 3; the mean of 300 draws has sd about sqrt(6/300) ~ 0.14
        assert!((mean_chi2 - 3.0).abs() < 0.6, "{mean_chi2}");
    }

    #[test]
    fn recovery_identity_and_shuffle() {
        let (ds, latent) = generate(&small(true)).unwrap();
        let mut exact = ds.clone();
        for (s, l) in exact.samples.iter_mut().zip(&latent.rows) {
            s.intensities = Some(l.clone());
        }
        let r = recovery_score(&exact, &latent).unwrap();
        assert!(r.per_label.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let mut rows = latent.rows.clone();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let mut shuffled = ds.clone();
        for (s, l) in shuffled.samples.iter_mut().zip(rows) {
            s.intensities = Some(l);
        }
        let r = recovery_score(&shuffled, &latent).unwrap();
        // permutation null: |r| ~ 1/sqrt(200)
        assert!(r.mean.abs() < 0.15, "{}", r.mean);

        let short = Dataset::new(ds.vocab.clone(), ds.samples[..10].to_vec(), Split::Test).unwrap();
        assert!(recovery_score(&short, &latent).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec {
            samples: 9,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            labels: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        let bad = vec![vec![0.5, 0.4], vec![0.0, 1.0]];
        assert!(SynthSpec {
            labels: 2,
            mixing: Some(bad),
            ..Default::default()
        }
        .validate()
        .is_err());
        let good = grouped_mixing(4, 2, 0.3);
        for row in &good {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(SynthSpec {
            labels: 4,
            mixing: Some(good),
            ..Default::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn latent_csv_round_trip() {
        let (_, latent) = generate(&small(true)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("latent.csv");
        latent.save(&p).unwrap();
        let back = LatentTable::load(&p).unwrap();
        assert_eq!(back.rows, latent.rows);
        assert_eq!(back.labels, latent.labels);
    }
}
