use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Pearson correlations between label intensity columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonMatrix {
    pub labels: Vec<String>,
    /// Row-major `C x C`.
    pub values: Vec<f64>,
    /// Labels whose column is constant; their rows and columns are 0.
    pub constant: Vec<String>,
}

impl PearsonMatrix {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.size() + b]
    }

    /// Comma-separated matrix with a header row and a label column.
    pub fn to_csv(&self) -> String {
        let c = self.size();
        let mut out = String::from("label");
        for n in &self.labels {
            out.push(',');
            out.push_str(&csv_field(n));
        }
        out.push('\n');
        for a in 0..c {
            out.push_str(&csv_field(&self.labels[a]));
            for b in 0..c {
                let _ = write!(out, ",{:.9}", self.get(a, b));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Pearson r for every pair of intensity columns.
///
/// A constant column has no defined correlation; it is reported as 0 against
/// every column, including itself, and listed in `constant`.
pub fn pearson_matrix(ds: &Dataset) -> Result<PearsonMatrix> {
    if ds.len() < 2 {
        return Err(Error::Config("Pearson correlation needs at least 2 samples".into()));
    }
    let c = ds.label_count();
    let m = ds.len() as f64;
    let mut cols = vec![Vec::with_capacity(ds.len()); c];
    for s in &ds.samples {
        let v = s.intensities.as_deref().ok_or_else(|| Error::Sample {
            id: s.id.clone(),
            msg: "missing intensities".into(),
        })?;
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(v[j]);
        }
    }
    for col in &mut cols {
        let mu = col.iter().sum::<f64>() / m;
        col.iter_mut().for_each(|x| *x -= mu);
    }
    let norms: Vec<f64> = cols
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let constant: Vec<usize> = (0..c).filter(|&j| norms[j] == 0.0).collect();
    if !constant.is_empty() {
        warn!(
            count = constant.len(),
            "constant intensity columns; correlation reported as 0"
        );
    }

    let mut values = vec![0.0; c * c];
    for a in 0..c {
        if norms[a] == 0.0 {
            continue;
        }
        values[a * c + a] = 1.0;
        for b in a + 1..c {
            if norms[b] == 0.0 {
                continue;
            }
            let dot: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
            let r = (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0);
            values[a * c + b] = r;
            values[b * c + a] = r;
        }
    }
    Ok(PearsonMatrix {
        labels: ds.vocab.names().to_vec(),
        values,
        constant: constant.iter().map(|&j| ds.vocab.names()[j].clone()).collect(),
    })
}

/// Parses the output of [`PearsonMatrix::to_csv`]; `#` lines are skipped.
pub fn read_pearson_csv(path: &Path) -> Result<PearsonMatrix> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let labels: Vec<String> = rdr.headers()?.iter().skip(1).map(String::from).collect();
    let c = labels.len();
    let mut values = Vec::with_capacity(c * c);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != c + 1 {
            return Err(Error::row(path, i + 1, format!("expected {} columns", c + 1)));
        }
        for f in rec.iter().skip(1) {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| Error::row(path, i + 1, format!("bad value {f:?}")))?,
            );
        }
    }
    if values.len() != c * c {
        return Err(Error::File {
            path: path.to_path_buf(),
            msg: format!("expected {c} rows"),
        });
    }
    Ok(PearsonMatrix {
        labels,
        values,
        constant: Vec::new(),
    })
}

const CELL: usize = 28;
const MARGIN: usize = 120;

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round() as u8
}

/// Diverging scale: -1 blue, 0 white, +1 red.
fn color(r: f64) -> String {
    const BLUE: (u8, u8, u8) = (33, 102, 172);
    const RED: (u8, u8, u8) = (178, 24, 43);
    let t = r.clamp(-1.0, 1.0);
    let (end, t) = if t < 0.0 { (BLUE, -t) } else { (RED, t) };
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(255, end.0, t),
        lerp(255, end.1, t),
        lerp(255, end.2, t)
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG heatmap with the value printed in each cell.
pub fn render_svg(pm: &PearsonMatrix) -> String {
    let c = pm.size();
    let side = MARGIN + c * CELL + 10;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" viewBox="0 0 {side} {side}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="{side}" height="{side}" fill="white"/>"#);
    for (i, name) in pm.labels.iter().enumerate() {
        let name = xml_escape(name);
        let y = MARGIN + i * CELL + CELL / 2 + 4;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-size="10" text-anchor="end">{name}</text>"#,
            MARGIN - 4
        );
        let x = MARGIN + i * CELL + CELL / 2 + 4;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-size="10" transform="rotate(-90 {x} {})">{name}</text>"#,
            MARGIN - 4,
            MARGIN - 4
        );
    }
    for a in 0..c {
        for b in 0..c {
            let r = pm.get(a, b);
            let (x, y) = (MARGIN + b * CELL, MARGIN + a * CELL);
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="white" stroke-width="0.5"/>"#,
                color(r)
            );
            let ink = if r.abs() > 0.6 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="8" text-anchor="middle" fill="{ink}">{:.2}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 3,
                r
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `pearson.csv` and `pearson.svg` into `dir`.
pub fn export_heatmap(pm: &PearsonMatrix, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("pearson.csv"), pm.to_csv())?;
    fs::write(dir.join("pearson.svg"), render_svg(pm))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelVocabulary, Sample, Split};
    use crate::labelspace::{IntensityVector, LabelSet};
    use tempfile::tempdir;

    fn ds(rows: &[Vec<f64>]) -> Dataset {
        let c = rows[0].len();
        let vocab = LabelVocabulary::new((0..c).map(|j| format!("l{j}"))).unwrap();
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, v)| Sample::new(i.to_string(), "", LabelSet::new()).with_intensities(IntensityVector(v.clone())))
            .collect();
        Dataset::new(vocab, samples, Split::Test).unwrap()
    }

    #[test]
    fn duplicate_and_negated_columns() {
        let rows: Vec<Vec<f64>> = [1.0, 4.0, 2.5, 9.0]
            .iter()
            .map(|&x| vec![x, x, 10.0 - x, 3.0])
            .collect();
        let pm = pearson_matrix(&ds(&rows)).unwrap();
        assert!((pm.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((pm.get(0, 2) + 1.0).abs() < 1e-12);
        assert_eq!(pm.get(3, 3), 0.0);
        assert_eq!(pm.get(0, 3), 0.0);
        assert_eq!(pm.constant, ["l3"]);
        assert_eq!(pm.get(0, 0), 1.0);
    }

    #[test]
    fn needs_two_samples() {
        assert!(pearson_matrix(&ds(&[vec![1.0, 2.0]])).is_err());
    }

    #[test]
    fn identity_svg_and_csv_round_trip() {
        let pm = PearsonMatrix {
            labels: vec!["joy".into(), "fear".into()],
            values: vec![1.0, 0.0, 0.0, 1.0],
            constant: vec![],
        };
        let svg = render_svg(&pm);
        assert_eq!(svg.matches("#b2182b").count(), 2);
        assert_eq!(svg.matches(">1.00<").count(), 2);
        assert_eq!(svg, render_svg(&pm));

        let dir = tempdir().unwrap();
        export_heatmap(&pm, dir.path()).unwrap();
        let back = read_pearson_csv(&dir.path().join("pearson.csv")).unwrap();
        assert_eq!(back.labels, pm.labels);
        assert_eq!(back.values, pm.values);
    }

    #[test]
    fn color_scale_endpoints() {
        assert_eq!(color(-1.0), "#2166ac");
        assert_eq!(color(0.0), "#ffffff");
        assert_eq!(color(1.0), "#b2182b");
    }
}
