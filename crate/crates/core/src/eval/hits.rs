use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::labelspace::{ranking, top_k_set};

/// Samples grouped by gold-label cardinality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRow {
    pub cardinality: usize,
    pub corpus: usize,
    pub labels: usize,
    pub hits: usize,
    pub hit_rate: f64,
}

/// Single-label samples whose gold label ranks within the top `n` intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopRow {
    pub n: usize,
    pub corpus: usize,
    /// Cumulative hits at rank `<= n`.
    pub hits: usize,
    /// Hits first reached at rank `n`.
    pub added: usize,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitTable {
    pub rows: Vec<HitRow>,
    pub total: HitRow,
    pub top: Vec<TopRow>,
    /// Samples with an empty gold set, left out of every row.
    pub unlabeled: usize,
}

fn rate(hits: usize, labels: usize) -> f64 {
    if labels == 0 {
        0.0
    } else {
        hits as f64 / labels as f64
    }
}

/// Counts oracle-k hits per cardinality bucket plus cumulative Top-1..3 rows.
pub fn hit_table(ds: &Dataset) -> Result<HitTable> {
    let c = ds.label_count();
    let top_n = c.min(3);
    let mut buckets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut rank_hits = vec![0usize; top_n];
    let mut singles = 0usize;
    let mut unlabeled = 0usize;

    for s in &ds.samples {
        let v = s.intensities.as_deref().ok_or_else(|| Error::Sample {
            id: s.id.clone(),
            msg: "missing intensities".into(),
        })?;
        let k = s.gold.len();
        if k == 0 {
            unlabeled += 1;
            continue;
        }
        let pred = top_k_set(v, k.min(c))?;
        let hits = s.gold.intersection(&pred).count();
        let e = buckets.entry(k).or_insert((0, 0));
        e.0 += 1;
        e.1 += hits;

        if k == 1 {
            singles += 1;
            let gold = *s.gold.iter().next().unwrap();
            let pos = ranking(v).iter().position(|&j| j == gold).unwrap();
            if pos < top_n {
                rank_hits[pos] += 1;
            }
        }
    }

    let rows: Vec<HitRow> = buckets
        .into_iter()
        .map(|(k, (corpus, hits))| HitRow {
            cardinality: k,
            corpus,
            labels: corpus * k,
            hits,
            hit_rate: rate(hits, corpus * k),
        })
        .collect();
    let (corpus, labels, hits) = rows
        .iter()
        .fold((0, 0, 0), |acc, r| (acc.0 + r.corpus, acc.1 + r.labels, acc.2 + r.hits));
    let total = HitRow {
        cardinality: 0,
        corpus,
        labels,
        hits,
        hit_rate: rate(hits, labels),
    };
    let mut cumulative = 0;
    let top = rank_hits
        .iter()
        .enumerate()
        .map(|(i, &added)| {
            cumulative += added;
            TopRow {
                n: i + 1,
                corpus: singles,
                hits: cumulative,
                added,
                hit_rate: rate(cumulative, singles),
            }
        })
        .collect();
    Ok(HitTable {
        rows,
        total,
        top,
        unlabeled,
    })
}

impl HitTable {
    pub fn row(&self, cardinality: usize) -> Option<&HitRow> {
        self.rows.iter().find(|r| r.cardinality == cardinality)
    }

    pub fn top_rate(&self, n: usize) -> Option<f64> {
        self.top.iter().find(|r| r.n == n).map(|r| r.hit_rate)
    }

    /// `class,corpus,labels,hits,hit_rate` rows: one per cardinality, a total, then Top-n.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,corpus,labels,hits,hit_rate\n");
        for r in &self.rows {
            let name = if r.cardinality == 1 {
                "1 label".to_string()
            } else {
                format!("{} labels", r.cardinality)
            };
            let _ = writeln!(out, "{name},{},{},{},{:.4}", r.corpus, r.labels, r.hits, r.hit_rate);
        }
        let t = &self.total;
        let _ = writeln!(out, "Total,{},{},{},{:.4}", t.corpus, t.labels, t.hits, t.hit_rate);
        for r in &self.top {
            let _ = writeln!(out, "Top{},{},{},{},{:.4}", r.n, r.corpus, r.corpus, r.hits, r.hit_rate);
        }
        out
    }
}
