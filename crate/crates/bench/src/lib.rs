//! Fixtures shared by the throughput benchmarks.

use eqn_core::labelspace::{init_full_labels, IntensityVector};
use eqn_core::synth::{generate, SynthSpec};
use eqn_core::Dataset;

/// Synthetic corpus of `samples` texts over `labels` labels.
pub fn corpus(labels: usize, samples: usize) -> Dataset {
    let spec = SynthSpec {
        labels,
        samples,
        seed: 42,
        ..Default::default()
    };
    generate(&spec).expect("valid spec").0
}

/// Full-label initial targets for every sample.
pub fn targets(ds: &Dataset) -> Vec<IntensityVector> {
    ds.samples
        .iter()
        .map(|s| init_full_labels(&s.gold, ds.label_count()).expect("gold in range"))
        .collect()
}

/// `ds` with its initial targets attached as intensities.
pub fn annotated(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    for (s, t) in out.samples.iter_mut().zip(targets(ds)) {
        s.intensities = Some(t);
    }
    out
}
