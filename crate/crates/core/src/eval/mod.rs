//! Evaluation of annotated datasets.
//!
//! Sample-level precision/recall/F1 average per-sample ratios over the
//! dataset; per-label metrics count TP/FP/FN per label and report the
//! unweighted mean and the spread across labels. Predicted label sets come
//! from one of two policies: `oracle-k` takes the top `|T_i|` intensities,
//! `threshold` keeps every label whose clamped intensity reaches `h`.

mod hits;
mod pearson;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::labelspace::{annotate_threshold, top_k_set, AnnotationConfig, LabelSet};

pub use hits::{hit_table, HitRow, HitTable, TopRow};
pub use pearson::{export_heatmap, pearson_matrix, read_pearson_csv, render_svg, PearsonMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    OracleK,
    Threshold,
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle-k" => Ok(Policy::OracleK),
            "threshold" => Ok(Policy::Threshold),
            other => Err(Error::Config(format!(
                "unknown policy {other:?} (expected oracle-k or threshold)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    /// Divide by the number of labels.
    #[default]
    Population,
    /// Divide by the number of labels minus one.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-sample precision, recall and F1.
///
/// Empty sets: an empty prediction for a non-empty gold set scores 0; both
/// empty scores 1 everywhere; a non-empty prediction against an empty gold
/// set scores 0.
pub fn sample_scores(gold: &LabelSet, pred: &LabelSet) -> SampleMetrics {
    match (gold.is_empty(), pred.is_empty()) {
        (true, true) => SampleMetrics {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        },
        (false, true) | (true, false) => SampleMetrics {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        },
        (false, false) => {
            let hit = gold.intersection(pred).count() as f64;
            let precision = hit / pred.len() as f64;
            let recall = hit / gold.len() as f64;
            SampleMetrics {
                precision,
                recall,
                f1: harmonic(precision, recall),
            }
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Averages of the per-sample scores.
pub fn sample_metrics(gold: &[LabelSet], pred: &[LabelSet]) -> Result<SampleMetrics> {
    check_lengths(gold, pred)?;
    let m = gold.len() as f64;
    let mut acc = SampleMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for (g, p) in gold.iter().zip(pred) {
        let s = sample_scores(g, p);
        acc.precision += s.precision;
        acc.recall += s.recall;
        acc.f1 += s.f1;
    }
    Ok(SampleMetrics {
        precision: acc.precision / m,
        recall: acc.recall / m,
        f1: acc.f1 / m,
    })
}

fn check_lengths(gold: &[LabelSet], pred: &[LabelSet]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            got: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Config("metrics need at least one sample".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerLabelMetrics {
    pub rows: Vec<LabelMetrics>,
    pub macro_avg: SampleMetrics,
    pub std: SampleMetrics,
    pub std_kind: StdKind,
}

/// Per-label confusion counts and scores. Zero denominators give 0.
pub fn per_label_metrics(
    gold: &[LabelSet],
    pred: &[LabelSet],
    names: &[String],
    std_kind: StdKind,
) -> Result<PerLabelMetrics> {
    check_lengths(gold, pred)?;
    let c = names.len();
    let mut tp = vec![0usize; c];
    let mut fp = vec![0usize; c];
    let mut fn_ = vec![0usize; c];
    for (g, p) in gold.iter().zip(pred) {
        for &j in g.iter().chain(p.iter()) {
            if j >= c {
                return Err(Error::LabelOutOfRange { index: j, count: c });
            }
        }
        for &j in p {
            if g.contains(&j) {
                tp[j] += 1;
            } else {
                fp[j] += 1;
            }
        }
        for &j in g.difference(p) {
            fn_[j] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let rows: Vec<LabelMetrics> = (0..c)
        .map(|j| {
            let precision = ratio(tp[j], tp[j] + fp[j]);
            let recall = ratio(tp[j], tp[j] + fn_[j]);
            LabelMetrics {
                label: names[j].clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                tp: tp[j],
                fp: fp[j],
                fn_: fn_[j],
            }
        })
        .collect();
    let column = |f: fn(&LabelMetrics) -> f64| -> Vec<f64> { rows.iter().map(f).collect() };
    let (p, r, f) = (column(|x| x.precision), column(|x| x.recall), column(|x| x.f1));
    Ok(PerLabelMetrics {
        macro_avg: SampleMetrics {
            precision: mean(&p),
            recall: mean(&r),
            f1: mean(&f),
        },
        std: SampleMetrics {
            precision: std_dev(&p, std_kind),
            recall: std_dev(&r, std_kind),
            f1: std_dev(&f, std_kind),
        },
        std_kind,
        rows,
    })
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub(crate) fn std_dev(xs: &[f64], kind: StdKind) -> f64 {
    let n = xs.len();
    let denom = match kind {
        StdKind::Population => n,
        StdKind::Sample => n.saturating_sub(1),
    };
    if denom == 0 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / denom as f64).sqrt()
}

fn intensities_of(ds: &Dataset) -> Result<Vec<&[f64]>> {
    ds.samples
        .iter()
        .map(|s| {
            s.intensities.as_deref().ok_or_else(|| Error::Sample {
                id: s.id.clone(),
                msg: "missing intensities".into(),
            })
        })
        .collect()
}

/// Top-`|T_i|` predictions per sample.
pub fn oracle_k_predictions(ds: &Dataset) -> Result<Vec<LabelSet>> {
    let vals = intensities_of(ds)?;
    ds.samples
        .iter()
        .zip(vals)
        .map(|(s, v)| {
            if s.gold.is_empty() {
                return Err(Error::Sample {
                    id: s.id.clone(),
                    msg: "oracle-k prediction needs at least one gold label".into(),
                });
            }
            top_k_set(v, s.gold.len())
        })
        .collect()
}

/// Labels that survive threshold annotation (non-zero after clamping and thresholding).
pub fn threshold_predictions(ds: &Dataset, cfg: &AnnotationConfig) -> Result<Vec<LabelSet>> {
    let vals = intensities_of(ds)?;
    Ok(vals
        .into_iter()
        .map(|v| {
            let a = annotate_threshold(&v.to_vec().into(), cfg);
            a.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(j, _)| j).collect()
        })
        .collect())
}

pub fn predictions(ds: &Dataset, policy: Policy, cfg: &AnnotationConfig) -> Result<Vec<LabelSet>> {
    match policy {
        Policy::OracleK => oracle_k_predictions(ds),
        Policy::Threshold => threshold_predictions(ds, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: Policy,
    pub threshold: f64,
    pub samples: usize,
    pub sample_precision: f64,
    pub sample_recall: f64,
    pub sample_f1: f64,
    /// Fraction of samples whose highest-intensity label is a gold label.
    pub top1_accuracy: f64,
    pub per_label: Vec<LabelMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub std_precision: f64,
    pub std_recall: f64,
    pub std_f1: f64,
    pub std_kind: StdKind,
}

/// Full metrics for an annotated dataset under `policy`.
pub fn evaluate(ds: &Dataset, policy: Policy, cfg: &AnnotationConfig, std_kind: StdKind) -> Result<MetricsReport> {
    let gold: Vec<LabelSet> = ds.samples.iter().map(|s| s.gold.clone()).collect();
    let pred = predictions(ds, policy, cfg)?;
    let sm = sample_metrics(&gold, &pred)?;
    let pl = per_label_metrics(&gold, &pred, ds.vocab.names(), std_kind)?;
    let vals = intensities_of(ds)?;
    let top1 = ds
        .samples
        .iter()
        .zip(&vals)
        .filter(|(s, v)| s.gold.contains(&crate::labelspace::arg_max(v)))
        .count() as f64
        / ds.len() as f64;
    Ok(MetricsReport {
        policy,
        threshold: cfg.threshold,
        samples: ds.len(),
        sample_precision: sm.precision,
        sample_recall: sm.recall,
        sample_f1: sm.f1,
        top1_accuracy: top1,
        macro_precision: pl.macro_avg.precision,
        macro_recall: pl.macro_avg.recall,
        macro_f1: pl.macro_avg.f1,
        std_precision: pl.std.precision,
        std_recall: pl.std.recall,
        std_f1: pl.std.f1,
        std_kind,
        per_label: pl.rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelVocabulary, Sample, Split};
    use crate::labelspace::IntensityVector;

    fn set(xs: &[usize]) -> LabelSet {
        xs.iter().copied().collect()
    }

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|j| format!("l{j}")).collect()
    }

    #[test]
    fn half_overlap() {
        let m = sample_metrics(&[set(&[2, 5])], &[set(&[2, 7])]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn identity_scores_one() {
        let g = vec![set(&[1]), set(&[0, 3])];
        let m = sample_metrics(&g, &g).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_edges() {
        let s = sample_scores(&set(&[1]), &set(&[]));
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = sample_scores(&set(&[]), &set(&[]));
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = sample_scores(&set(&[]), &set(&[0]));
        assert_eq!(s.f1, 0.0);
        assert!(sample_metrics(&[], &[]).is_err());
        assert!(sample_metrics(&[set(&[0])], &[]).is_err());
    }

    #[test]
    fn per_label_edge_rules() {
        // label 0 predicted and present everywhere, label 1 present once but never predicted
        let gold = vec![set(&[0]), set(&[0, 1]), set(&[0])];
        let pred = vec![set(&[0]), set(&[0]), set(&[0])];
        let pl = per_label_metrics(&gold, &pred, &names(3), StdKind::Population).unwrap();
        assert_eq!(
            (pl.rows[0].precision, pl.rows[0].recall, pl.rows[0].f1),
            (1.0, 1.0, 1.0)
        );
        assert_eq!(
            (pl.rows[1].precision, pl.rows[1].recall, pl.rows[1].f1),
            (0.0, 0.0, 0.0)
        );
        assert_eq!(pl.rows[1].fn_, 1);
        assert!((pl.macro_avg.f1 - 1.0 / 3.0).abs() < 1e-15);
        let expect_std = ((2.0f64 / 3.0).powi(2) + 2.0 * (1.0f64 / 3.0).powi(2)) / 3.0;
        assert!((pl.std.f1 - expect_std.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn std_kinds() {
        let xs = [1.0, 3.0];
        assert_eq!(std_dev(&xs, StdKind::Population), 1.0);
        assert!((std_dev(&xs, StdKind::Sample) - 2f64.sqrt()).abs() < 1e-15);
    }

    fn annotated(rows: &[(&[usize], &[f64])]) -> Dataset {
        let c = rows[0].1.len();
        let vocab = LabelVocabulary::new(names(c)).unwrap();
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, (g, v))| Sample::new(i.to_string(), "", set(g)).with_intensities(IntensityVector(v.to_vec())))
            .collect();
        Dataset::new(vocab, samples, Split::Test).unwrap()
    }

    #[test]
    fn oracle_k_examples() {
        let ds = annotated(&[
            (&[0, 2], &[1.0, 9.0, 0.5, 8.0]),
            (&[3], &[2.0, 2.0, 1.0, 0.0]),
            (&[1], &[5.0, 5.0, 5.0, 5.0]),
        ]);
        let p = oracle_k_predictions(&ds).unwrap();
        assert_eq!(p, vec![set(&[1, 3]), set(&[0]), set(&[0])]);

        let unlabeled = annotated(&[(&[], &[1.0, 2.0])]);
        assert!(oracle_k_predictions(&unlabeled).is_err());
    }

    #[test]
    fn threshold_policy_and_report() {
        let ds = annotated(&[(&[0], &[5.0, 0.5, 1.0]), (&[1, 2], &[0.0, 10.0, 0.2])]);
        let cfg = AnnotationConfig { threshold: 1.0 };
        let p = threshold_predictions(&ds, &cfg).unwrap();
        assert_eq!(p, vec![set(&[0, 2]), set(&[1])]);
        let r = evaluate(&ds, Policy::Threshold, &cfg, StdKind::Population).unwrap();
        assert_eq!(r.policy, Policy::Threshold);
        assert_eq!(r.threshold, 1.0);
        // sample 0: P=1/2 R=1 F=2/3; sample 1: P=1 R=1/2 F=2/3
        assert!((r.sample_precision - 0.75).abs() < 1e-15);
        assert!((r.sample_f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.top1_accuracy, 1.0);
    }

    #[test]
    fn policy_parses() {
        assert_eq!("oracle-k".parse::<Policy>().unwrap(), Policy::OracleK);
        assert!("topk".parse::<Policy>().is_err());
    }
}
