//! Trainable maps from sparse features to raw (unclamped) intensity vectors.
//!
//! Both backends minimise
//! `L = 1/(2m) * sum_i (1/C) * sum_j (yhat_ij - y_ij)^2 + (l2/2) * |W|^2`
//! with mini-batch gradient descent and momentum. Biases are not decayed.

mod checkpoint;
mod gradcheck;
mod linear;
mod mlp;
mod train;

use serde::{Deserialize, Serialize};

use crate::featurize::FeatureVector;
use crate::labelspace::IntensityVector;

pub use checkpoint::Checkpoint;
pub use gradcheck::gradient_check;
pub use linear::LinearModel;
pub use mlp::MlpModel;
pub use train::{train, train_from, TrainConfig, TrainData, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Linear,
    Mlp,
}

impl Backend {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            Backend::Linear => 0.05,
            Backend::Mlp => 0.01,
        }
    }
}

/// Common surface of the trainable backends.
///
/// Parameters are exposed as flat blocks so the optimizer and the gradient
/// checker can treat every backend alike. `decayed()` lists, per block,
/// whether the L2 penalty applies.
pub trait Regressor {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn predict(&self, x: &FeatureVector) -> IntensityVector;
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;
    fn decayed(&self) -> Vec<bool>;
    /// Adds the gradient of `d_out . f(x)` with respect to every parameter into `grads`.
    fn backprop(&self, x: &FeatureVector, d_out: &[f64], grads: &mut [Vec<f64>]);

    /// `(block, width)` of a block stored as one contiguous row of `width`
    /// parameters per input feature, whose data gradient is non-zero only in
    /// rows of features present in the input. Lets the optimizer skip rows.
    fn feature_rows(&self) -> Option<(usize, usize)> {
        None
    }

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.blocks().iter().map(|b| vec![0.0; b.len()]).collect()
    }

    fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// A trained model of either backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn backend(&self) -> Backend {
        match self {
            Model::Linear(_) => Backend::Linear,
            Model::Mlp(_) => Backend::Mlp,
        }
    }

    pub fn predict_batch(&self, xs: &[FeatureVector]) -> Vec<IntensityVector> {
        use rayon::prelude::*;
        xs.par_iter().map(|x| self.predict(x)).collect()
    }
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Model::Linear($m) => $e,
            Model::Mlp($m) => $e,
        }
    };
}

impl Regressor for Model {
    fn input_dim(&self) -> usize {
        delegate!(self, m => m.input_dim())
    }
    fn output_dim(&self) -> usize {
        delegate!(self, m => m.output_dim())
    }
    fn predict(&self, x: &FeatureVector) -> IntensityVector {
        delegate!(self, m => m.predict(x))
    }
    fn blocks(&self) -> Vec<&[f64]> {
        delegate!(self, m => m.blocks())
    }
    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        delegate!(self, m => m.blocks_mut())
    }
    fn decayed(&self) -> Vec<bool> {
        delegate!(self, m => m.decayed())
    }
    fn backprop(&self, x: &FeatureVector, d_out: &[f64], grads: &mut [Vec<f64>]) {
        delegate!(self, m => m.backprop(x, d_out, grads))
    }
    fn feature_rows(&self) -> Option<(usize, usize)> {
        delegate!(self, m => m.feature_rows())
    }
}

/// Data term of the objective: `1/(2m) * sum_i mean_j (yhat - y)^2`.
pub fn mse_loss<R: Regressor + ?Sized>(model: &R, xs: &[FeatureVector], ys: &[IntensityVector]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let c = model.output_dim() as f64;
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let p = model.predict(x);
            p.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / c
        })
        .sum();
    total / (2.0 * xs.len() as f64)
}

/// Full objective including the L2 penalty on decayed blocks.
pub fn objective<R: Regressor + ?Sized>(model: &R, xs: &[FeatureVector], ys: &[IntensityVector], l2: f64) -> f64 {
    let penalty: f64 = model
        .blocks()
        .iter()
        .zip(model.decayed())
        .filter(|(_, d)| *d)
        .map(|(b, _)| b.iter().map(|w| w * w).sum::<f64>())
        .sum();
    mse_loss(model, xs, ys) + 0.5 * l2 * penalty
}

/// Gradient of [`objective`] over `xs`, one vector per parameter block.
/// Also returns the data loss computed along the way.
pub fn objective_gradient<R: Regressor + ?Sized>(
    model: &R,
    xs: &[FeatureVector],
    ys: &[IntensityVector],
    l2: f64,
    grads: &mut [Vec<f64>],
) -> f64 {
    let idx: Vec<usize> = (0..xs.len()).collect();
    batch_gradient(model, xs, ys, &idx, l2, grads)
}

/// [`objective_gradient`] restricted to the samples at `batch`.
pub fn batch_gradient<R: Regressor + ?Sized>(
    model: &R,
    xs: &[FeatureVector],
    ys: &[IntensityVector],
    batch: &[usize],
    l2: f64,
    grads: &mut [Vec<f64>],
) -> f64 {
    for g in grads.iter_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let loss = data_gradient(model, xs, ys, batch, grads);
    if l2 != 0.0 {
        for ((g, b), d) in grads.iter_mut().zip(model.blocks()).zip(model.decayed()) {
            if d {
                for (gv, w) in g.iter_mut().zip(b) {
                    *gv += l2 * w;
                }
            }
        }
    }
    loss
}

/// Accumulates the data-term gradient over `batch` into `grads` (not zeroed
/// first, no L2). Returns the batch data loss.
pub(crate) fn data_gradient<R: Regressor + ?Sized>(
    model: &R,
    xs: &[FeatureVector],
    ys: &[IntensityVector],
    batch: &[usize],
    grads: &mut [Vec<f64>],
) -> f64 {
    let m = batch.len() as f64;
    let c = model.output_dim() as f64;
    let scale = 1.0 / (m * c);
    let mut loss = 0.0;
    let mut d_out = vec![0.0; model.output_dim()];
    for &i in batch {
        let (x, y) = (&xs[i], &ys[i]);
        let p = model.predict(x);
        for j in 0..d_out.len() {
            let r = p[j] - y[j];
            loss += r * r;
            d_out[j] = r * scale;
        }
        model.backprop(x, &d_out, grads);
    }
    loss * scale / 2.0
}
