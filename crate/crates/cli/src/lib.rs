//! Command implementations behind the `eqn` binary.
//!
//! Every command writes plain files. Each output carries a provenance stamp
//! (config fingerprint and seed): a leading `# eqn ...` line in CSVs, an XML
//! comment in SVGs and a `provenance` field in JSON reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::info;

use eqn_core::corpus::{self, Layout};
use eqn_core::eval::{self, hit_table, HitTable, MetricsReport, Policy, StdKind};
use eqn_core::labelspace::init_full_labels;
use eqn_core::pipeline::{self, write_annotated, Mode, PipelineConfig, Provenance};
use eqn_core::synth::{self, SynthSpec};
use eqn_core::{AnnotationConfig, Checkpoint, Dataset, Error, LabelVocabulary, Result};

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

/// Run configuration file: data paths plus the pipeline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    #[serde(default)]
    pub validation: Option<PathBuf>,
    /// Label names, one per line. Needed for compact-layout inputs.
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Content hash of everything that affects results. `out` is excluded.
    pub fn fingerprint(&self) -> String {
        fingerprint(&Self {
            out: None,
            ..self.clone()
        })
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_fingerprint: self.fingerprint(),
            seed: self.pipeline.train.seed,
        }
    }
}

/// First 8 bytes of SHA-256 over the value's JSON, as hex.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable");
    Sha256::digest(json)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(h) = self.threshold {
            cfg.annotation = AnnotationConfig::new(h)?;
        }
        Ok(())
    }
}

/// Caps the global worker pool. Later calls have no effect.
pub fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn load_vocab(path: Option<&Path>) -> Result<Option<LabelVocabulary>> {
    path.map(LabelVocabulary::load).transpose()
}

fn write_stamped(path: &Path, prov: &Provenance, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, format!("{}{body}", prov.comment()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[derive(Serialize)]
struct InitStamp<'a> {
    command: &'static str,
    input: &'a Path,
    labels: &'a [String],
}

/// Compact CSV to full-label CSV: gold labels at 10, everything else 0.
pub fn cmd_init(input: &Path, vocab: &Path, out: &Path) -> Result<Dataset> {
    let vocab = LabelVocabulary::load(vocab)?;
    let mut ds = corpus::load_compact(input, &vocab)?;
    for s in &mut ds.samples {
        s.intensities = Some(init_full_labels(&s.gold, vocab.len())?);
    }
    let prov = Provenance {
        config_fingerprint: fingerprint(&InitStamp {
            command: "init",
            input,
            labels: vocab.names(),
        }),
        seed: 0,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_annotated(&ds, out, &prov)?;
    info!(rows = ds.len(), out = %out.display(), "wrote full-label csv");
    Ok(ds)
}

/// Trains and annotates per `cfg`, writing the run directory. Returns its path.
pub fn cmd_run(cfg: &CliConfig, mode: Mode, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::Config("no output directory (use --out or \"out\")".into()))?;
    let vocab = load_vocab(cfg.vocab.as_deref())?;
    let train = corpus::load_any(&cfg.train, vocab.as_ref())?;
    let vocab = vocab.unwrap_or_else(|| train.vocab.clone());
    let test = corpus::load_any(&cfg.test, Some(&vocab))?;
    let validation = cfg
        .validation
        .as_deref()
        .map(|p| corpus::load_any(p, Some(&vocab)))
        .transpose()?;
    info!(train = train.len(), test = test.len(), ?mode, "starting run");
    let run = pipeline::run(mode, &train, validation.as_ref(), &test, &cfg.pipeline)?;
    run.save(&dir, &cfg.provenance())?;
    info!(dir = %dir.display(), "run saved");
    Ok(dir)
}

#[derive(Serialize)]
struct AnnotateStamp<'a> {
    command: &'static str,
    input: &'a Path,
    featurizer: &'a str,
}

/// Annotates `input` with a saved checkpoint. `featurizer` defaults to the
/// checkpoint's own configuration.
pub fn cmd_annotate(
    checkpoint: &Path,
    input: &Path,
    vocab: Option<&Path>,
    featurizer: Option<&eqn_core::FeaturizerConfig>,
    out: &Path,
) -> Result<Dataset> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let vocab = match load_vocab(vocab)? {
        Some(v) => v,
        None => LabelVocabulary::new(ckpt.labels.iter().cloned())?,
    };
    let ds = corpus::load_any(input, Some(&vocab))?;
    let fcfg = featurizer.unwrap_or(&ckpt.featurizer.config);
    let annotated = pipeline::annotate_dataset(&ckpt, &ds, fcfg)?;
    let prov = Provenance {
        config_fingerprint: fingerprint(&AnnotateStamp {
            command: "annotate",
            input,
            featurizer: &ckpt.featurizer_fingerprint,
        }),
        seed: 0,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_annotated(&annotated, out, &prov)?;
    Ok(annotated)
}

/// Settings for [`cmd_eval`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOptions {
    pub policy: Policy,
    pub threshold: f64,
    pub std_kind: StdKind,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            policy: Policy::OracleK,
            threshold: eqn_core::labelspace::DEFAULT_THRESHOLD,
            std_kind: StdKind::Population,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    pub input: PathBuf,
    pub metrics: MetricsReport,
    pub hits: HitTable,
}

fn load_annotated(input: &Path, vocab: Option<&Path>) -> Result<Dataset> {
    let vocab = load_vocab(vocab)?;
    if corpus::detect_layout(input)? == Layout::Compact {
        return Err(Error::File {
            path: input.to_path_buf(),
            msg: "no intensity columns; expected an annotated full-label csv".into(),
        });
    }
    corpus::load_any(input, vocab.as_ref())
}

fn per_label_csv(m: &MetricsReport) -> String {
    let mut out = String::from("label,precision,recall,f1,tp,fp,fn\n");
    for r in &m.per_label {
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{},{},{}\n",
            csv_field(&r.label),
            r.precision,
            r.recall,
            r.f1,
            r.tp,
            r.fp,
            r.fn_
        ));
    }
    out.push_str(&format!(
        "macro,{:.4},{:.4},{:.4},,,\n",
        m.macro_precision, m.macro_recall, m.macro_f1
    ));
    out.push_str(&format!(
        "std,{:.4},{:.4},{:.4},,,\n",
        m.std_precision, m.std_recall, m.std_f1
    ));
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Metrics for an annotated CSV: `report.json`, `hit_table.csv` and `per_label.csv` in `out`.
pub fn cmd_eval(input: &Path, vocab: Option<&Path>, opts: &EvalOptions, out: &Path) -> Result<EvalReport> {
    let ds = load_annotated(input, vocab)?;
    let annotation = AnnotationConfig::new(opts.threshold)?;
    let metrics = eval::evaluate(&ds, opts.policy, &annotation, opts.std_kind)?;
    let hits = hit_table(&ds)?;
    let prov = Provenance {
        config_fingerprint: fingerprint(&("eval", input, opts)),
        seed: 0,
    };
    fs::create_dir_all(out)?;
    write_stamped(&out.join("hit_table.csv"), &prov, &hits.to_csv())?;
    write_stamped(&out.join("per_label.csv"), &prov, &per_label_csv(&metrics))?;
    let report = EvalReport {
        provenance: prov,
        input: input.to_path_buf(),
        metrics,
        hits,
    };
    write_json(&out.join("report.json"), &report)?;
    info!(f1 = report.metrics.sample_f1, "evaluation written");
    Ok(report)
}

/// Label correlation heatmap: `pearson.csv` and `pearson.svg` in `out`.
pub fn cmd_pearson(input: &Path, vocab: Option<&Path>, out: &Path) -> Result<eval::PearsonMatrix> {
    let ds = load_annotated(input, vocab)?;
    let pm = eval::pearson_matrix(&ds)?;
    let prov = Provenance {
        config_fingerprint: fingerprint(&("pearson", input)),
        seed: 0,
    };
    fs::create_dir_all(out)?;
    write_stamped(&out.join("pearson.csv"), &prov, &pm.to_csv())?;
    let svg = eval::render_svg(&pm);
    let stamp = format!("<!-- {} -->\n", prov.comment().trim_start_matches("# ").trim_end());
    fs::write(out.join("pearson.svg"), format!("{stamp}{svg}"))?;
    Ok(pm)
}

/// Synthetic corpus (compact CSV), its vocabulary and the latent intensity table.
pub fn cmd_synth(
    spec: &Path,
    seed: Option<u64>,
    out: &Path,
    latent: &Path,
    vocab_out: Option<&Path>,
) -> Result<Dataset> {
    let text = fs::read_to_string(spec)?;
    let mut spec: SynthSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", spec.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (ds, table) = synth::generate(&spec)?;
    let prov = Provenance {
        config_fingerprint: fingerprint(&spec),
        seed: spec.seed,
    };
    let mut body = Vec::new();
    corpus::write_compact(&ds, &mut body)?;
    write_stamped(out, &prov, &String::from_utf8(body).expect("utf-8 csv"))?;
    write_stamped(latent, &prov, &table.to_csv())?;
    let vocab_path = vocab_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("vocab.txt"));
    ds.vocab.save(&vocab_path)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Divergence { epoch: 2 }), 3);
        assert_eq!(exit_code(&Error::Vocabulary("x".into())), 2);
    }

    #[test]
    fn fingerprint_ignores_out_dir() {
        let a: CliConfig = serde_json::from_str(r#"{"train": "a.csv", "test": "b.csv", "out": "x"}"#).unwrap();
        let b = CliConfig {
            out: Some("y".into()),
            ..a.clone()
        };
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = a.clone();
        c.pipeline.train.seed = 9;
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn unknown_keys_rejected() {
        let r = serde_json::from_str::<CliConfig>(r#"{"train": "a", "test": "b", "tset": "c"}"#);
        assert!(r.is_err());
    }

    #[test]
    fn overrides() {
        let mut p = PipelineConfig::default();
        Overrides {
            seed: Some(4),
            threshold: Some(2.5),
        }
        .apply(&mut p)
        .unwrap();
        assert_eq!((p.train.seed, p.annotation.threshold), (4, 2.5));
        assert!(Overrides {
            seed: None,
            threshold: Some(11.0)
        }
        .apply(&mut p)
        .is_err());
    }
}
