//! The annotation workflow.
//!
//! CoEQN: fit the featurizer on the training split, expand gold labels into
//! full-label targets, train Model 1 (best validation checkpoint) and annotate
//! the test split. EQN continues: annotate the training split with Model 1,
//! restore every gold position to the maximum intensity, retrain on those
//! targets to get Model 2 and annotate the test split again.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::info;

use crate::corpus::{write_full, Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, hit_table, HitTable, MetricsReport, Policy, StdKind};
use crate::featurize::{FeatureVector, Featurizer, FeaturizerConfig};
use crate::labelspace::{
    annotate_threshold, init_full_labels, is_regressed, regress_labels, AnnotationConfig, IntensityVector,
};
use crate::regressor::{self, train_from, Backend, Checkpoint, Model, TrainConfig, TrainData, TrainReport};

const SPLIT_SALT: u64 = 0x5eed_0f5a_117c_e000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    #[default]
    Off,
    Oversample,
    Undersample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub featurizer: FeaturizerConfig,
    pub train: TrainConfig,
    pub annotation: AnnotationConfig,
    pub backend: Backend,
    /// Share of the training split held out for model selection, in `(0, 0.5]`.
    pub validation_fraction: f64,
    pub resampling: Resampling,
    /// Start Model 2 from Model 1's parameters instead of a fresh initialisation.
    pub warm_start: bool,
    /// Threshold Model 1's training-set annotation before label regression.
    pub regress_threshold: Option<f64>,
    pub std_kind: StdKind,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            featurizer: FeaturizerConfig::default(),
            train: TrainConfig::default(),
            annotation: AnnotationConfig::default(),
            backend: Backend::Linear,
            validation_fraction: 0.1,
            resampling: Resampling::Off,
            warm_start: false,
            regress_threshold: None,
            std_kind: StdKind::Population,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.featurizer.validate()?;
        self.train.validate()?;
        self.annotation.validate()?;
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0, 0.5], got {}",
                self.validation_fraction
            )));
        }
        if let Some(h) = self.regress_threshold {
            AnnotationConfig::new(h)?;
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Coeqn,
    Eqn,
}

/// Training samples whose targets satisfy the label-regression post-condition.
/// Only [`RegressedTrainingSet::build`] constructs one, and Model 2 training
/// requires it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressedTrainingSet(Dataset);

impl RegressedTrainingSet {
    /// Restores gold positions in `annotated` (Model 1's clamped annotation of
    /// `train`) and verifies the result sample by sample.
    pub fn build(train: &Dataset, annotated: &Dataset, regress_threshold: Option<f64>) -> Result<Self> {
        if train.len() != annotated.len() {
            return Err(Error::LengthMismatch {
                expected: train.len(),
                got: annotated.len(),
            });
        }
        let mut out = train.clone();
        for (s, a) in out.samples.iter_mut().zip(&annotated.samples) {
            let raw = a.intensities.as_ref().ok_or_else(|| Error::Sample {
                id: a.id.clone(),
                msg: "training annotation missing".into(),
            })?;
            let before = match regress_threshold {
                Some(h) => annotate_threshold(raw, &AnnotationConfig { threshold: h }),
                None => raw.clamped(),
            };
            let after = regress_labels(&s.gold, &before)?;
            if !is_regressed(&s.gold, &before, &after) {
                return Err(Error::Sample {
                    id: s.id.clone(),
                    msg: "label regression post-condition violated".into(),
                });
            }
            s.intensities = Some(after);
        }
        Ok(Self(out))
    }

    pub fn dataset(&self) -> &Dataset {
        &self.0
    }

    pub fn into_dataset(self) -> Dataset {
        self.0
    }

    fn targets(&self) -> Vec<IntensityVector> {
        self.0
            .samples
            .iter()
            .map(|s| s.intensities.clone().expect("built with intensities"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalBundle {
    /// Absent when some test sample has no gold label.
    pub oracle_k: Option<MetricsReport>,
    pub threshold: MetricsReport,
    pub hits: HitTable,
}

pub fn evaluate_bundle(ds: &Dataset, cfg: &PipelineConfig) -> Result<EvalBundle> {
    let oracle_k = if ds.samples.iter().all(|s| !s.gold.is_empty()) {
        Some(evaluate(ds, Policy::OracleK, &cfg.annotation, cfg.std_kind)?)
    } else {
        None
    };
    Ok(EvalBundle {
        oracle_k,
        threshold: evaluate(ds, Policy::Threshold, &cfg.annotation, cfg.std_kind)?,
        hits: hit_table(ds)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub mode: Mode,
    pub config: PipelineConfig,
    pub model1: Checkpoint,
    pub model2: Option<Checkpoint>,
    pub train_regressed: Option<RegressedTrainingSet>,
    pub test_coeqn: Dataset,
    pub test_eqn: Option<Dataset>,
    pub report1: TrainReport,
    pub report2: Option<TrainReport>,
}

/// Where a run's outputs came from; written into every emitted file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_fingerprint: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!("# eqn config={} seed={}\n", self.config_fingerprint, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub provenance: Provenance,
    pub featurizer_fingerprint: String,
    pub threshold: f64,
    pub model1_training: TrainReport,
    pub model2_training: Option<TrainReport>,
    pub coeqn: Option<EvalBundle>,
    pub eqn: Option<EvalBundle>,
}

/// Writes a full-layout CSV preceded by the provenance comment.
pub fn write_annotated(ds: &Dataset, path: &Path, prov: &Provenance) -> Result<()> {
    let mut bytes = prov.comment().into_bytes();
    write_full(ds, &mut bytes)?;
    fs::write(path, bytes)?;
    Ok(())
}

impl PipelineRun {
    pub fn report(&self, prov: &Provenance) -> Result<RunReport> {
        let has_gold = self.test_coeqn.samples.iter().any(|s| !s.gold.is_empty());
        let coeqn = has_gold
            .then(|| evaluate_bundle(&self.test_coeqn, &self.config))
            .transpose()?;
        let eqn = match (&self.test_eqn, has_gold) {
            (Some(ds), true) => Some(evaluate_bundle(ds, &self.config)?),
            _ => None,
        };
        Ok(RunReport {
            mode: self.mode,
            provenance: prov.clone(),
            featurizer_fingerprint: self.model1.featurizer_fingerprint.clone(),
            threshold: self.config.annotation.threshold,
            model1_training: self.report1.clone(),
            model2_training: self.report2.clone(),
            coeqn,
            eqn,
        })
    }

    /// Persists the run: `config.json`, `model1.ckpt`, `test_annotated_coeqn.csv`,
    /// `report.json`, plus `model2.ckpt`, `train_regressed.csv` and
    /// `test_annotated_eqn.csv` in EQN mode. Output bytes depend only on the run.
    pub fn save(&self, dir: &Path, prov: &Provenance) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut config = serde_json::to_string_pretty(&self.config)?;
        config.push('\n');
        fs::write(dir.join("config.json"), config)?;
        self.model1.save(&dir.join("model1.ckpt"))?;
        write_annotated(&self.test_coeqn, &dir.join("test_annotated_coeqn.csv"), prov)?;
        if let Some(m2) = &self.model2 {
            m2.save(&dir.join("model2.ckpt"))?;
        }
        if let Some(r) = &self.train_regressed {
            write_annotated(r.dataset(), &dir.join("train_regressed.csv"), prov)?;
        }
        if let Some(ds) = &self.test_eqn {
            write_annotated(ds, &dir.join("test_annotated_eqn.csv"), prov)?;
        }
        let mut report = serde_json::to_string_pretty(&self.report(prov)?)?;
        report.push('\n');
        fs::write(dir.join("report.json"), report)?;
        Ok(())
    }
}

/// Splits `0..m` into training and validation indices under `seed`:
/// the last `round(fraction * m)` positions of a seeded shuffle (at least one,
/// and never all) become validation. A single sample yields no validation split.
pub fn split_indices(m: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..m).collect();
    if m < 2 {
        return (idx, Vec::new());
    }
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
    let n_val = ((fraction * m as f64).round() as usize).clamp(1, m - 1);
    let val = idx.split_off(m - n_val);
    (idx, val)
}

fn label_counts(ds: &Dataset, idx: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; ds.label_count()];
    for &i in idx {
        for &j in &ds.samples[i].gold {
            counts[j] += 1;
        }
    }
    counts
}

fn median_count(counts: &[usize]) -> Option<usize> {
    let mut present: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    if present.is_empty() {
        return None;
    }
    present.sort_unstable();
    Some(present[present.len() / 2])
}

/// Rebalances the multiplicity of the samples at `idx`. Only indices are
/// duplicated or dropped; samples themselves are never modified.
pub fn resample(ds: &Dataset, idx: &[usize], mode: Resampling, seed: u64) -> Vec<usize> {
    let mut out = idx.to_vec();
    let mut counts = label_counts(ds, &out);
    let Some(median) = median_count(&counts) else {
        return out;
    };
    match mode {
        Resampling::Off => {}
        Resampling::Oversample => {
            let mut labels: Vec<usize> = (0..counts.len())
                .filter(|&j| counts[j] > 0 && counts[j] < median)
                .collect();
            labels.sort_by_key(|&j| (counts[j], j));
            for j in labels {
                let members: Vec<usize> = idx
                    .iter()
                    .copied()
                    .filter(|&i| ds.samples[i].gold.contains(&j))
                    .collect();
                for &i in members.iter().cycle() {
                    if counts[j] >= median {
                        break;
                    }
                    out.push(i);
                    for &g in &ds.samples[i].gold {
                        counts[g] += 1;
                    }
                }
            }
        }
        Resampling::Undersample => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT.rotate_left(17));
            let mut labels: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] > median).collect();
            labels.sort_by_key(|&j| (std::cmp::Reverse(counts[j]), j));
            let mut keep = vec![true; out.len()];
            for j in labels {
                let mut cands: Vec<usize> = (0..out.len())
                    .filter(|&p| keep[p] && ds.samples[out[p]].gold.contains(&j))
                    .collect();
                cands.shuffle(&mut rng);
                for p in cands {
                    if counts[j] <= median {
                        break;
                    }
                    let gold = &ds.samples[out[p]].gold;
                    if gold.iter().all(|&g| counts[g] > median) {
                        keep[p] = false;
                        for &g in gold {
                            counts[g] -= 1;
                        }
                    }
                }
            }
            out = out.into_iter().zip(keep).filter_map(|(i, k)| k.then_some(i)).collect();
        }
    }
    out
}

/// Annotates `ds` with a checkpoint: clamped intensities, gold and order untouched.
pub fn annotate_dataset(ckpt: &Checkpoint, ds: &Dataset, featurizer: &FeaturizerConfig) -> Result<Dataset> {
    ckpt.check_featurizer(featurizer)?;
    if ckpt.labels != ds.vocab.names() {
        return Err(Error::Config(
            "dataset label vocabulary differs from the checkpoint's".into(),
        ));
    }
    let xs = ckpt.featurizer.transform_all(ds);
    let preds = ckpt.model.predict_batch(&xs);
    let mut out = ds.clone();
    for (s, p) in out.samples.iter_mut().zip(preds) {
        s.intensities = Some(p.clamped());
    }
    Ok(out)
}

struct Prepared {
    featurizer: Featurizer,
    train_x: Vec<FeatureVector>,
    /// External validation split, if one was given.
    val: Option<(Dataset, Vec<FeatureVector>)>,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
}

fn check_vocab(a: &Dataset, b: &Dataset, what: &str) -> Result<()> {
    if a.vocab != b.vocab {
        return Err(Error::Config(format!(
            "{what} label vocabulary differs from the training split's"
        )));
    }
    Ok(())
}

fn prepare(train: &Dataset, validation: Option<&Dataset>, test: &Dataset, cfg: &PipelineConfig) -> Result<Prepared> {
    cfg.validate()?;
    check_vocab(train, test, "test")?;
    if let Some(v) = validation {
        check_vocab(train, v, "validation")?;
    }
    let featurizer = Featurizer::fit(train, &cfg.featurizer)?;
    let train_x = featurizer.transform_all(train);
    let (train_idx, val_idx, val) = match validation {
        Some(v) => {
            let vx = featurizer.transform_all(v);
            ((0..train.len()).collect(), Vec::new(), Some((v.clone(), vx)))
        }
        None => {
            let (t, v) = split_indices(train.len(), cfg.validation_fraction, cfg.train.seed);
            (t, v, None)
        }
    };
    Ok(Prepared {
        featurizer,
        train_x,
        val,
        train_idx,
        val_idx,
    })
}

fn gather<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

fn fit(
    prep: &Prepared,
    train: &Dataset,
    train_targets: &[IntensityVector],
    val_targets: Option<&[IntensityVector]>,
    cfg: &PipelineConfig,
    init: Option<Model>,
) -> Result<(Model, TrainReport)> {
    let idx = resample(train, &prep.train_idx, cfg.resampling, cfg.train.seed);
    let tx = gather(&prep.train_x, &idx);
    let ty = gather(train_targets, &idx);
    let (vx, vy) = match (&prep.val, val_targets) {
        (Some((_, vx)), Some(vy)) => (vx.clone(), vy.to_vec()),
        _ => (
            gather(&prep.train_x, &prep.val_idx),
            gather(train_targets, &prep.val_idx),
        ),
    };
    let data = TrainData::new(cfg.featurizer.dim, &tx, &ty).with_validation(&vx, &vy);
    match init {
        Some(m) => train_from(m, &data, &cfg.train),
        None => regressor::train(&data, &cfg.train, cfg.backend),
    }
}

fn initial_targets(ds: &Dataset) -> Result<Vec<IntensityVector>> {
    ds.samples
        .iter()
        .map(|s| init_full_labels(&s.gold, ds.label_count()))
        .collect()
}

struct CoeqnStage {
    prep: Prepared,
    model1: Checkpoint,
    report1: TrainReport,
    test_coeqn: Dataset,
}

fn coeqn_stage(
    train: &Dataset,
    validation: Option<&Dataset>,
    test: &Dataset,
    cfg: &PipelineConfig,
) -> Result<CoeqnStage> {
    if train.samples.iter().all(|s| s.gold.is_empty()) {
        return Err(Error::Config("training split has no gold labels".into()));
    }
    let prep = prepare(train, validation, test, cfg)?;
    let targets = initial_targets(train)?;
    let val_targets = prep.val.as_ref().map(|(v, _)| initial_targets(v)).transpose()?;
    info!(samples = train.len(), "training model 1");
    let (model, report1) = fit(&prep, train, &targets, val_targets.as_deref(), cfg, None)?;
    let model1 = Checkpoint::new(train.vocab.names().to_vec(), prep.featurizer.clone(), model);
    let test_coeqn = annotate_dataset(&model1, test, &cfg.featurizer)?.with_split(Split::Test);
    Ok(CoeqnStage {
        prep,
        model1,
        report1,
        test_coeqn,
    })
}

/// Initialise, train Model 1, annotate the test split.
pub fn run_coeqn(train: &Dataset, test: &Dataset, cfg: &PipelineConfig) -> Result<PipelineRun> {
    run_coeqn_with(train, None, test, cfg)
}

/// [`run_coeqn`] with an explicit validation split instead of a held-out fraction.
pub fn run_coeqn_with(
    train: &Dataset,
    validation: Option<&Dataset>,
    test: &Dataset,
    cfg: &PipelineConfig,
) -> Result<PipelineRun> {
    let st = coeqn_stage(train, validation, test, cfg)?;
    Ok(PipelineRun {
        mode: Mode::Coeqn,
        config: cfg.clone(),
        model1: st.model1,
        model2: None,
        train_regressed: None,
        test_coeqn: st.test_coeqn,
        test_eqn: None,
        report1: st.report1,
        report2: None,
    })
}

/// CoEQN, then label regression of the training split and retraining to Model 2.
pub fn run_eqn(train: &Dataset, test: &Dataset, cfg: &PipelineConfig) -> Result<PipelineRun> {
    run_eqn_with(train, None, test, cfg)
}

pub fn run_eqn_with(
    train: &Dataset,
    validation: Option<&Dataset>,
    test: &Dataset,
    cfg: &PipelineConfig,
) -> Result<PipelineRun> {
    let st = coeqn_stage(train, validation, test, cfg)?;
    let annotated = annotate_dataset(&st.model1, train, &cfg.featurizer)?;
    let regressed = RegressedTrainingSet::build(train, &annotated, cfg.regress_threshold)?;
    let val_regressed = match &st.prep.val {
        Some((v, _)) => {
            let a = annotate_dataset(&st.model1, v, &cfg.featurizer)?;
            Some(RegressedTrainingSet::build(v, &a, cfg.regress_threshold)?)
        }
        None => None,
    };
    let (model2, report2) = train_model2(&st, train, &regressed, val_regressed.as_ref(), cfg)?;
    let test_eqn = annotate_dataset(&model2, test, &cfg.featurizer)?.with_split(Split::Test);
    Ok(PipelineRun {
        mode: Mode::Eqn,
        config: cfg.clone(),
        model1: st.model1,
        model2: Some(model2),
        train_regressed: Some(regressed),
        test_coeqn: st.test_coeqn,
        test_eqn: Some(test_eqn),
        report1: st.report1,
        report2: Some(report2),
    })
}

fn train_model2(
    st: &CoeqnStage,
    train: &Dataset,
    regressed: &RegressedTrainingSet,
    val_regressed: Option<&RegressedTrainingSet>,
    cfg: &PipelineConfig,
) -> Result<(Checkpoint, TrainReport)> {
    let targets = regressed.targets();
    let val_targets = val_regressed.map(RegressedTrainingSet::targets);
    let init = cfg.warm_start.then(|| st.model1.model.clone());
    info!(samples = train.len(), warm_start = cfg.warm_start, "training model 2");
    let (model, report) = fit(&st.prep, train, &targets, val_targets.as_deref(), cfg, init)?;
    Ok((
        Checkpoint::new(train.vocab.names().to_vec(), st.prep.featurizer.clone(), model),
        report,
    ))
}

/// Runs either mode.
pub fn run(
    mode: Mode,
    train: &Dataset,
    validation: Option<&Dataset>,
    test: &Dataset,
    cfg: &PipelineConfig,
) -> Result<PipelineRun> {
    match mode {
        Mode::Coeqn => run_coeqn_with(train, validation, test, cfg),
        Mode::Eqn => run_eqn_with(train, validation, test, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelVocabulary, Sample};
    use crate::featurize::fit_idf;
    use crate::labelspace::{arg_max, LabelSet, MAX_INTENSITY};
    use crate::regressor::Regressor;
    use crate::synth::{generate, SynthSpec};

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            featurizer: FeaturizerConfig {
                dim: 1 << 10,
                ..Default::default()
            },
            train: TrainConfig {
                epochs: 15,
                seed: 3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn synth(samples: usize, labels: usize, seed: u64) -> (Dataset, Dataset) {
        let (ds, _) = generate(&SynthSpec {
            labels,
            samples,
            seed,
            ..Default::default()
        })
        .unwrap();
        let cut = samples * 4 / 5;
        let train = Dataset::new(ds.vocab.clone(), ds.samples[..cut].to_vec(), Split::Train).unwrap();
        let test = Dataset::new(ds.vocab.clone(), ds.samples[cut..].to_vec(), Split::Test).unwrap();
        (train, test)
    }

    #[test]
    fn coeqn_beats_chance() {
        let (train, test) = synth(600, 3, 1);
        let run = run_coeqn(&train, &test, &small_cfg()).unwrap();
        let hits = hit_table(&run.test_coeqn).unwrap();
        assert!(hits.top_rate(1).unwrap() > 1.0 / 3.0 + 0.2, "{:?}", hits.top);
        assert!(run.test_coeqn.has_intensities());
        assert!(run.model2.is_none());
    }

    #[test]
    fn single_sample_overfit() {
        let vocab = LabelVocabulary::new(["a", "b", "c"]).unwrap();
        let ds = Dataset::new(
            vocab,
            vec![Sample::new("0", "happy sunny day", LabelSet::from([0]))],
            Split::Train,
        )
        .unwrap();
        let mut cfg = small_cfg();
        cfg.train.epochs = 60;
        let run = run_coeqn(&ds, &ds, &cfg).unwrap();
        let v = run.test_coeqn.samples[0].intensities.as_ref().unwrap();
        assert_eq!(arg_max(v), 0);
        assert!(v[0] > 5.0, "{v:?}");
    }

    #[test]
    fn eqn_regressed_set_contract() {
        let (train, test) = synth(300, 4, 2);
        let cfg = small_cfg();
        let run = run_eqn(&train, &test, &cfg).unwrap();
        let regressed = run.train_regressed.as_ref().unwrap().dataset();
        let m1 = annotate_dataset(&run.model1, &train, &cfg.featurizer).unwrap();
        for ((r, a), t) in regressed.samples.iter().zip(&m1.samples).zip(&train.samples) {
            assert_eq!(r.gold, t.gold);
            assert_eq!(r.text, t.text);
            let (rv, av) = (r.intensities.as_ref().unwrap(), a.intensities.as_ref().unwrap());
            for j in 0..rv.len() {
                if r.gold.contains(&j) {
                    assert_eq!(rv[j], MAX_INTENSITY);
                } else {
                    assert_eq!(rv[j].to_bits(), av[j].to_bits());
                }
            }
        }
        assert!(run.test_eqn.is_some() && run.model2.is_some());
    }

    #[test]
    fn regressed_set_with_threshold() {
        let (train, _) = synth(50, 3, 4);
        let mut annotated = train.clone();
        for s in &mut annotated.samples {
            s.intensities = Some(IntensityVector(vec![0.5, 3.0, 12.0]));
        }
        let r = RegressedTrainingSet::build(&train, &annotated, Some(1.0)).unwrap();
        for s in &r.dataset().samples {
            let v = s.intensities.as_ref().unwrap();
            for j in 0..3 {
                let expect = if s.gold.contains(&j) { 10.0 } else { [0.0, 3.0, 10.0][j] };
                assert_eq!(v[j], expect);
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let (train, test) = synth(200, 3, 5);
        let cfg = small_cfg();
        let a = run_eqn(&train, &test, &cfg).unwrap();
        let b = run_eqn(&train, &test, &cfg).unwrap();
        assert_eq!(a.model1, b.model1);
        assert_eq!(a.model2, b.model2);
        assert_eq!(a.test_eqn, b.test_eqn);
    }

    #[test]
    fn featurizer_uses_training_split_only() {
        let (train, test) = synth(100, 3, 6);
        let cfg = small_cfg();
        let run = run_coeqn(&train, &test, &cfg).unwrap();
        let expect = fit_idf(&train, &cfg.featurizer);
        assert_eq!(run.model1.featurizer.idf.as_ref(), Some(&expect));
        let with_test = Dataset::new(
            train.vocab.clone(),
            train.samples.iter().chain(&test.samples).cloned().collect(),
            Split::Train,
        )
        .unwrap();
        assert_ne!(
            run.model1.featurizer.idf.as_ref(),
            Some(&fit_idf(&with_test, &cfg.featurizer))
        );
    }

    #[test]
    fn annotate_edge_cases() {
        let (train, _) = synth(100, 3, 7);
        let cfg = small_cfg();
        let run = run_coeqn(&train, &train, &cfg).unwrap();
        let unlabeled = Dataset::new(
            train.vocab.clone(),
            vec![
                Sample::new("a", "", LabelSet::new()),
                Sample::new("b", "em0w001 em1w002", LabelSet::new()),
            ],
            Split::Unlabeled,
        )
        .unwrap();
        let out = annotate_dataset(&run.model1, &unlabeled, &cfg.featurizer).unwrap();
        let bias = run.model1.model.predict(&FeatureVector::default()).clamped();
        assert_eq!(out.samples[0].intensities.as_ref().unwrap(), &bias);
        assert_eq!(out, annotate_dataset(&run.model1, &unlabeled, &cfg.featurizer).unwrap());
        assert!(out.samples.iter().all(|s| s.gold.is_empty()));

        let other = FeaturizerConfig {
            seed: 1,
            ..cfg.featurizer.clone()
        };
        assert!(matches!(
            annotate_dataset(&run.model1, &unlabeled, &other),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn vocab_mismatch_is_rejected() {
        let (train, test) = synth(100, 3, 8);
        let vocab = LabelVocabulary::new(["x", "y", "z"]).unwrap();
        let test = Dataset { vocab, ..test };
        assert!(run_coeqn(&train, &test, &small_cfg()).is_err());
    }

    #[test]
    fn split_properties() {
        let (t, v) = split_indices(10, 0.2, 1);
        assert_eq!((t.len(), v.len()), (8, 2));
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(1, 0.5, 1).1.len(), 0);
        assert_eq!(split_indices(2, 0.01, 1).1.len(), 1);
    }

    #[test]
    fn resampling_changes_only_multiplicity() {
        let vocab = LabelVocabulary::new(["a", "b", "c"]).unwrap();
        let golds = [&[0][..], &[0], &[0], &[0], &[0], &[1], &[1], &[1], &[2], &[0, 2]];
        let samples = golds
            .iter()
            .enumerate()
            .map(|(i, g)| Sample::new(i.to_string(), format!("t{i}"), g.iter().copied().collect()))
            .collect();
        let ds = Dataset::new(vocab, samples, Split::Train).unwrap();
        let idx: Vec<usize> = (0..10).collect();

        let over = resample(&ds, &idx, Resampling::Oversample, 0);
        let c = label_counts(&ds, &over);
        // counts before: a=6, b=3, c=2; median of present counts = 3
        assert!(c[2] >= 3, "{c:?}");
        assert!(over.len() > idx.len());
        assert!(over.iter().all(|i| idx.contains(i)));

        let under = resample(&ds, &idx, Resampling::Undersample, 0);
        let c = label_counts(&ds, &under);
        assert!(c[0] <= 3, "{c:?}");
        assert_eq!(c[1], 3);
        assert_eq!(c[2], 2);

        assert_eq!(resample(&ds, &idx, Resampling::Off, 0), idx);
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.validation_fraction = 0.6;
        assert!(cfg.validate().is_err());
        cfg.validation_fraction = 0.0;
        assert!(cfg.validate().is_err());
        let json = r#"{"backend": "mlp", "bogus": 1}"#;
        assert!(serde_json::from_str::<PipelineConfig>(json).is_err());
    }
}
