//! Datasets and their CSV layouts.
//!
//! Two layouts are supported:
//!
//! * **compact**: `text,labels[,id]`, where `labels` is a comma-separated list of
//!   label indices inside one quoted field (`"8,20"`), possibly empty.
//! * **full**: `text,labels,<label 0>,...,<label C-1>`, one intensity column per
//!   label in vocabulary order, written with two decimals.
//!
//! A single leading line starting with `#` is treated as a provenance comment
//! and skipped by the readers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::{IntensityVector, LabelSet, MAX_INTENSITY, MIN_INTENSITY};

/// Ordered set of label names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::Vocabulary(format!(
                "need at least 2 labels, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::Vocabulary(format!("label {j} has an empty name")));
            }
            if index.insert(name.clone(), j).is_some() {
                return Err(Error::Vocabulary(format!("duplicate label name {name:?}")));
            }
        }
        Ok(Self { names, index })
    }

    /// Reads one label name per non-blank line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from)).map_err(|e| Error::File {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for name in &self.names {
            out.push_str(name);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, j: usize) -> Option<&str> {
        self.names.get(j).map(String::as_str)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub gold: LabelSet,
    pub intensities: Option<IntensityVector>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold: LabelSet) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            gold,
            intensities: None,
        }
    }

    pub fn with_intensities(mut self, v: IntensityVector) -> Self {
        self.intensities = Some(v);
        self
    }

    fn check(&self, count: usize) -> Result<()> {
        if let Some(&j) = self.gold.iter().find(|&&j| j >= count) {
            return Err(Error::Sample {
                id: self.id.clone(),
                msg: format!("gold label {j} out of range for {count} labels"),
            });
        }
        if let Some(v) = &self.intensities {
            if v.len() != count {
                return Err(Error::Sample {
                    id: self.id.clone(),
                    msg: format!("{} intensities for {count} labels", v.len()),
                });
            }
            if !v.in_range() {
                return Err(Error::Sample {
                    id: self.id.clone(),
                    msg: format!("intensity outside [{MIN_INTENSITY}, {MAX_INTENSITY}]"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
    Validation,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: LabelVocabulary,
    pub samples: Vec<Sample>,
    pub split: Split,
}

impl Dataset {
    pub fn new(vocab: LabelVocabulary, samples: Vec<Sample>, split: Split) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("a dataset needs at least one sample".into()));
        }
        for s in &samples {
            s.check(vocab.len())?;
        }
        Ok(Self { vocab, samples, split })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label_count(&self) -> usize {
        self.vocab.len()
    }

    pub fn has_intensities(&self) -> bool {
        self.samples.iter().all(|s| s.intensities.is_some())
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

/// Which CSV layout a file header describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Compact,
    Full,
}

fn read_body(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path)?;
    Ok(strip_comment(&text).to_string())
}

fn strip_comment(text: &str) -> &str {
    if text.starts_with('#') {
        match text.find('\n') {
            Some(i) => &text[i + 1..],
            None => "",
        }
    } else {
        text
    }
}

fn reader(body: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes())
}

fn header_of(path: &Path, rdr: &mut csv::Reader<&[u8]>) -> Result<Vec<String>> {
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 2 || header[0] != "text" || header[1] != "labels" {
        return Err(Error::File {
            path: path.to_path_buf(),
            msg: format!("header must start with text,labels; got {}", header.join(",")),
        });
    }
    Ok(header)
}

/// Detects the layout from the header row.
pub fn detect_layout(path: &Path) -> Result<Layout> {
    let body = read_body(path)?;
    let mut rdr = reader(&body);
    let header = header_of(path, &mut rdr)?;
    Ok(match header.len() {
        2 => Layout::Compact,
        3 if header[2] == "id" => Layout::Compact,
        _ => Layout::Full,
    })
}

fn parse_gold(field: &str, count: usize) -> std::result::Result<LabelSet, String> {
    let mut gold = LabelSet::new();
    for part in field.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let j: usize = part
            .parse()
            .map_err(|_| format!("label {part:?} is not a non-negative integer"))?;
        if j >= count {
            return Err(format!("label index {j} out of range for {count} labels"));
        }
        gold.insert(j);
    }
    Ok(gold)
}

fn format_gold(gold: &LabelSet) -> String {
    let parts: Vec<String> = gold.iter().map(usize::to_string).collect();
    parts.join(",")
}

/// Loads the compact layout. Row order is preserved; sample ids come from the
/// optional `id` column, otherwise the 0-based data row position.
pub fn load_compact(path: &Path, vocab: &LabelVocabulary) -> Result<Dataset> {
    let body = read_body(path)?;
    let mut rdr = reader(&body);
    let header = header_of(path, &mut rdr)?;
    let has_id = match header.len() {
        2 => false,
        3 if header[2] == "id" => true,
        _ => {
            return Err(Error::File {
                path: path.to_path_buf(),
                msg: format!("not a compact layout header: {}", header.join(",")),
            })
        }
    };
    let width = header.len();
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::row(path, row, e.to_string()))?;
        if rec.len() != width {
            return Err(Error::row(
                path,
                row,
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        let gold = parse_gold(&rec[1], vocab.len()).map_err(|m| Error::row(path, row, m))?;
        let id = if has_id { rec[2].to_string() } else { i.to_string() };
        samples.push(Sample::new(id, &rec[0], gold));
    }
    if samples.is_empty() {
        return Err(Error::File {
            path: path.to_path_buf(),
            msg: "no data rows".into(),
        });
    }
    Dataset::new(vocab.clone(), samples, Split::Train)
}

/// Loads the full layout, reconstructing the vocabulary from the header.
pub fn load_full(path: &Path) -> Result<Dataset> {
    let body = read_body(path)?;
    let mut rdr = reader(&body);
    let header = header_of(path, &mut rdr)?;
    let vocab = LabelVocabulary::new(header[2..].iter().cloned()).map_err(|e| Error::File {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let count = vocab.len();
    let width = header.len();
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::row(path, row, e.to_string()))?;
        if rec.len() != width {
            return Err(Error::row(
                path,
                row,
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        let gold = parse_gold(&rec[1], count).map_err(|m| Error::row(path, row, m))?;
        let mut values = Vec::with_capacity(count);
        for (j, field) in rec.iter().skip(2).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::row(
                    path,
                    row,
                    format!("non-numeric intensity {field:?} for label {}", vocab.names()[j]),
                )
            })?;
            if !(MIN_INTENSITY..=MAX_INTENSITY).contains(&v) {
                return Err(Error::row(
                    path,
                    row,
                    format!(
                        "intensity {v} for label {} outside [{MIN_INTENSITY}, {MAX_INTENSITY}]",
                        vocab.names()[j]
                    ),
                ));
            }
            values.push(v);
        }
        samples.push(Sample::new(i.to_string(), &rec[0], gold).with_intensities(IntensityVector(values)));
    }
    if samples.is_empty() {
        return Err(Error::File {
            path: path.to_path_buf(),
            msg: "no data rows".into(),
        });
    }
    Dataset::new(vocab, samples, Split::Train)
}

/// Loads the full layout and requires its header to name exactly `vocab`, in order.
pub fn load_full_with_vocab(path: &Path, vocab: &LabelVocabulary) -> Result<Dataset> {
    let ds = load_full(path)?;
    if ds.vocab != *vocab {
        let unknown: Vec<&str> = ds
            .vocab
            .names()
            .iter()
            .filter(|n| vocab.index(n).is_none())
            .map(String::as_str)
            .collect();
        let msg = if unknown.is_empty() {
            "label columns do not match the vocabulary order".to_string()
        } else {
            format!("unknown label columns: {}", unknown.join(", "))
        };
        return Err(Error::File {
            path: path.to_path_buf(),
            msg,
        });
    }
    Ok(ds)
}

/// Loads either layout. The compact layout needs a vocabulary.
pub fn load_any(path: &Path, vocab: Option<&LabelVocabulary>) -> Result<Dataset> {
    match (detect_layout(path)?, vocab) {
        (Layout::Compact, Some(v)) => load_compact(path, v),
        (Layout::Compact, None) => Err(Error::File {
            path: path.to_path_buf(),
            msg: "compact layout requires a label vocabulary".into(),
        }),
        (Layout::Full, Some(v)) => load_full_with_vocab(path, v),
        (Layout::Full, None) => load_full(path),
    }
}

fn quote(field: &str) -> String {
    format!("\"{}\"", field.replace('"', "\"\""))
}

fn format_intensity(v: f64) -> String {
    // avoid "-0.00"
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.2}")
}

/// Writes the full layout. Output bytes depend only on the dataset.
pub fn write_full<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let mut buf = String::new();
    let mut header = vec![quote("text"), quote("labels")];
    header.extend(ds.vocab.names().iter().map(|n| quote(n)));
    buf.push_str(&header.join(","));
    buf.push('\n');
    for s in &ds.samples {
        let v = s.intensities.as_ref().ok_or_else(|| Error::Sample {
            id: s.id.clone(),
            msg: "missing intensities".into(),
        })?;
        if v.len() != ds.vocab.len() {
            return Err(Error::Sample {
                id: s.id.clone(),
                msg: format!("{} intensities for {} labels", v.len(), ds.vocab.len()),
            });
        }
        let _ = write!(buf, "{},{}", quote(&s.text), quote(&format_gold(&s.gold)));
        for &x in v.iter() {
            buf.push(',');
            buf.push_str(&format_intensity(x));
        }
        buf.push('\n');
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn emit_full(ds: &Dataset, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_full(ds, &mut bytes)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes the compact layout (`text,labels`).
pub fn write_compact<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let mut buf = String::from("\"text\",\"labels\"\n");
    for s in &ds.samples {
        let _ = writeln!(buf, "{},{}", quote(&s.text), quote(&format_gold(&s.gold)));
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn emit_compact(ds: &Dataset, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_compact(ds, &mut bytes)?;
    fs::write(path, bytes)?;
    Ok(())
}
