use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::featurize::FeatureVector;
use crate::labelspace::IntensityVector;

/// One ReLU hidden layer followed by a linear output layer with one unit per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    dim: usize,
    hidden: usize,
    outputs: usize,
    /// Feature-major `dim x hidden`: the weights of input feature `i` are contiguous.
    hidden_weights: Vec<f64>,
    hidden_bias: Vec<f64>,
    /// Row-major `outputs x hidden`.
    output_weights: Vec<f64>,
    output_bias: Vec<f64>,
}

impl MlpModel {
    /// Hidden weights uniform in `±sqrt(6 / (dim + hidden))`; every other parameter zero,
    /// so an untrained model predicts its (zero) output bias.
    pub fn init<R: Rng + ?Sized>(dim: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        assert!(hidden >= 1, "hidden layer needs at least one unit");
        let limit = (6.0 / (dim + hidden) as f64).sqrt();
        let hidden_weights = (0..hidden * dim).map(|_| rng.gen_range(-limit..=limit)).collect();
        Self {
            dim,
            hidden,
            outputs,
            hidden_weights,
            hidden_bias: vec![0.0; hidden],
            output_weights: vec![0.0; outputs * hidden],
            output_bias: vec![0.0; outputs],
        }
    }

    /// Every parameter drawn uniformly from `±scale`. Useful for gradient checks,
    /// where a zero output layer would hide the hidden-layer gradients.
    pub fn random<R: Rng + ?Sized>(dim: usize, hidden: usize, outputs: usize, scale: f64, rng: &mut R) -> Self {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-scale..=scale)).collect() };
        Self {
            dim,
            hidden,
            outputs,
            hidden_weights: draw(hidden * dim),
            hidden_bias: draw(hidden),
            output_weights: draw(outputs * hidden),
            output_bias: draw(outputs),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn hidden_pre(&self, x: &FeatureVector) -> Vec<f64> {
        let mut pre = self.hidden_bias.clone();
        let h = self.hidden;
        for &(i, v) in x.entries() {
            let row = &self.hidden_weights[i as usize * h..(i as usize + 1) * h];
            for (p, w) in pre.iter_mut().zip(row) {
                *p += w * v;
            }
        }
        pre
    }

    fn output_from(&self, act: &[f64]) -> Vec<f64> {
        let mut out = self.output_bias.clone();
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.output_weights[j * self.hidden..(j + 1) * self.hidden];
            *o += row.iter().zip(act).map(|(w, a)| w * a).sum::<f64>();
        }
        out
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

impl Regressor for MlpModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.outputs
    }

    fn predict(&self, x: &FeatureVector) -> IntensityVector {
        let act: Vec<f64> = self.hidden_pre(x).into_iter().map(relu).collect();
        IntensityVector(self.output_from(&act))
    }

    fn blocks(&self) -> Vec<&[f64]> {
        vec![
            &self.hidden_weights,
            &self.hidden_bias,
            &self.output_weights,
            &self.output_bias,
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.hidden_weights,
            &mut self.hidden_bias,
            &mut self.output_weights,
            &mut self.output_bias,
        ]
    }

    fn decayed(&self) -> Vec<bool> {
        vec![true, false, true, false]
    }

    fn feature_rows(&self) -> Option<(usize, usize)> {
        Some((0, self.hidden))
    }

    fn backprop(&self, x: &FeatureVector, d_out: &[f64], grads: &mut [Vec<f64>]) {
        let pre = self.hidden_pre(x);
        let act: Vec<f64> = pre.iter().copied().map(relu).collect();
        let mut d_hidden = vec![0.0; self.hidden];
        {
            let (gow, gob) = grads[2..].split_at_mut(1);
            let (gow, gob) = (&mut gow[0], &mut gob[0]);
            for (j, &d) in d_out.iter().enumerate() {
                gob[j] += d;
                let w = &self.output_weights[j * self.hidden..(j + 1) * self.hidden];
                let g = &mut gow[j * self.hidden..(j + 1) * self.hidden];
                for h in 0..self.hidden {
                    g[h] += d * act[h];
                    d_hidden[h] += d * w[h];
                }
            }
        }
        for (d, &p) in d_hidden.iter_mut().zip(&pre) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        let (ghw, ghb) = grads[..2].split_at_mut(1);
        let (ghw, ghb) = (&mut ghw[0], &mut ghb[0]);
        for (b, &d) in ghb.iter_mut().zip(&d_hidden) {
            *b += d;
        }
        let h = self.hidden;
        for &(i, v) in x.entries() {
            let row = &mut ghw[i as usize * h..(i as usize + 1) * h];
            for (g, &d) in row.iter_mut().zip(&d_hidden) {
                *g += d * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_model_predicts_output_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MlpModel::init(16, 4, 3, &mut rng);
        let x = FeatureVector::from_dense(&[0.5; 16]);
        assert_eq!(m.predict(&x).0, vec![0.0; 3]);
        let limit = (6.0f64 / 20.0).sqrt();
        assert!(m.blocks()[0].iter().all(|w| w.abs() <= limit));
    }
}
