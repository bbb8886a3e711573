//! Full-label emotion intensity annotation.
//!
//! Discretely labelled text corpora are turned into continuous per-label
//! intensity annotations on a 0–10 scale: gold labels are expanded into full
//! label vectors, a regressor learns them from hashed text features, and an
//! optional label-regression pass retrains on the model's own annotations of
//! the training set with the gold positions restored.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod labelspace;
pub mod pipeline;
pub mod regressor;
pub mod synth;

pub use corpus::{Dataset, LabelVocabulary, Sample, Split};
pub use error::{Error, Result};
pub use featurize::{FeatureVector, Featurizer, FeaturizerConfig, Weighting};
pub use labelspace::{AnnotationConfig, IntensityVector, LabelSet};
pub use pipeline::{Mode, PipelineConfig, PipelineRun, Provenance};
pub use regressor::{Backend, Checkpoint, Model, Regressor, TrainConfig, TrainReport};
pub use synth::{LatentTable, SynthSpec};
