use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::featurize::FeatureVector;
use crate::labelspace::IntensityVector;

/// One linear regressor per label: `yhat_j = w_j . x + b_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    dim: usize,
    outputs: usize,
    /// Feature-major `dim x outputs`: the weights of input feature `i` are contiguous.
    weights: Vec<f64>,
    biases: Vec<f64>,
    pub l2: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize, outputs: usize, l2: f64) -> Self {
        Self {
            dim,
            outputs,
            weights: vec![0.0; dim * outputs],
            biases: vec![0.0; outputs],
            l2,
        }
    }

    pub fn from_parts(dim: usize, weights: Vec<f64>, biases: Vec<f64>, l2: f64) -> Self {
        assert_eq!(weights.len(), dim * biases.len(), "weights must be dim x outputs");
        Self {
            dim,
            outputs: biases.len(),
            weights,
            biases,
            l2,
        }
    }

    /// Weight of input feature `i` for label `j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.outputs + j]
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

impl Regressor for LinearModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.outputs
    }

    fn predict(&self, x: &FeatureVector) -> IntensityVector {
        let mut out = self.biases.clone();
        let c = self.outputs;
        for &(i, v) in x.entries() {
            let row = &self.weights[i as usize * c..(i as usize + 1) * c];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
        IntensityVector(out)
    }

    fn blocks(&self) -> Vec<&[f64]> {
        vec![&self.weights, &self.biases]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, &mut self.biases]
    }

    fn decayed(&self) -> Vec<bool> {
        vec![true, false]
    }

    fn feature_rows(&self) -> Option<(usize, usize)> {
        Some((0, self.outputs))
    }

    fn backprop(&self, x: &FeatureVector, d_out: &[f64], grads: &mut [Vec<f64>]) {
        let (gw, rest) = grads.split_at_mut(1);
        let gw = &mut gw[0];
        let gb = &mut rest[0];
        let c = self.outputs;
        for (b, &d) in gb.iter_mut().zip(d_out) {
            *b += d;
        }
        for &(i, v) in x.entries() {
            let row = &mut gw[i as usize * c..(i as usize + 1) * c];
            for (g, &d) in row.iter_mut().zip(d_out) {
                *g += d * v;
            }
        }
    }
}
