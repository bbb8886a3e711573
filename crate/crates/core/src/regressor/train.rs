use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::{data_gradient, mse_loss, Backend, LinearModel, MlpModel, Model, Regressor};
use crate::error::{Error, Result};
use crate::featurize::FeatureVector;
use crate::labelspace::IntensityVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` picks the backend default (0.05 linear, 0.01 MLP).
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
    pub hidden_size: usize,
    /// Stop after this many epochs without validation improvement. 0 disables early stopping.
    pub patience: usize,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: None,
            batch_size: 32,
            seed: 0,
            l2: 1e-4,
            hidden_size: 256,
            patience: 0,
            momentum: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn learning_rate_for(&self, backend: Backend) -> f64 {
        self.learning_rate.unwrap_or_else(|| backend.default_learning_rate())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning_rate must be > 0, got {lr}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.hidden_size == 0 {
            return Err(Error::Config("hidden_size must be >= 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Borrowed training and validation splits.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub dim: usize,
    pub train_x: &'a [FeatureVector],
    pub train_y: &'a [IntensityVector],
    pub val_x: &'a [FeatureVector],
    pub val_y: &'a [IntensityVector],
}

impl<'a> TrainData<'a> {
    pub fn new(dim: usize, train_x: &'a [FeatureVector], train_y: &'a [IntensityVector]) -> Self {
        Self {
            dim,
            train_x,
            train_y,
            val_x: &[],
            val_y: &[],
        }
    }

    pub fn with_validation(mut self, val_x: &'a [FeatureVector], val_y: &'a [IntensityVector]) -> Self {
        self.val_x = val_x;
        self.val_y = val_y;
        self
    }

    fn outputs(&self) -> usize {
        self.train_y.first().map_or(0, |y| y.len())
    }

    fn validate(&self) -> Result<()> {
        if self.train_x.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        if self.train_x.len() != self.train_y.len() {
            return Err(Error::LengthMismatch {
                expected: self.train_x.len(),
                got: self.train_y.len(),
            });
        }
        if self.val_x.len() != self.val_y.len() {
            return Err(Error::LengthMismatch {
                expected: self.val_x.len(),
                got: self.val_y.len(),
            });
        }
        let c = self.outputs();
        if c == 0 {
            return Err(Error::Config("targets must have at least one label".into()));
        }
        for y in self.train_y.iter().chain(self.val_y) {
            if y.len() != c {
                return Err(Error::LengthMismatch {
                    expected: c,
                    got: y.len(),
                });
            }
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::Config("non-finite training target".into()));
            }
        }
        for x in self.train_x.iter().chain(self.val_x) {
            if x.min_dim() > self.dim {
                return Err(Error::Config(format!(
                    "feature index {} outside input dimension {}",
                    x.min_dim() - 1,
                    self.dim
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Data loss on the training split after each epoch.
    pub train_loss: Vec<f64>,
    /// Data loss on the validation split after each epoch; empty without validation data.
    pub val_loss: Vec<f64>,
    /// 0-based epoch of the returned checkpoint.
    pub best_epoch: usize,
    pub stopped_early: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Trains a freshly initialised model of `backend`.
pub fn train(data: &TrainData<'_>, cfg: &TrainConfig, backend: Backend) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    data.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = data.outputs();
    let model = match backend {
        Backend::Linear => Model::Linear(LinearModel::zeros(data.dim, c, cfg.l2)),
        Backend::Mlp => Model::Mlp(MlpModel::init(data.dim, cfg.hidden_size, c, &mut rng)),
    };
    run(model, data, cfg, rng)
}

/// Continues training from an existing model.
pub fn train_from(init: Model, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    data.validate()?;
    if init.input_dim() != data.dim || init.output_dim() != data.outputs() {
        return Err(Error::Config(format!(
            "model shape {}x{} does not match data {}x{}",
            init.input_dim(),
            init.output_dim(),
            data.dim,
            data.outputs()
        )));
    }
    let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run(init, data, cfg, rng)
}

fn run(mut model: Model, data: &TrainData<'_>, cfg: &TrainConfig, mut rng: ChaCha8Rng) -> Result<(Model, TrainReport)> {
    if cfg.patience > 0 && data.val_x.is_empty() {
        return Err(Error::Config(
            "early stopping (patience > 0) needs a non-empty validation split".into(),
        ));
    }
    let start = Instant::now();
    let lr = cfg.learning_rate_for(model.backend());
    let has_val = !data.val_x.is_empty();
    let m = data.train_x.len();

    let mut opt = Momentum::new(&model, lr, cfg.momentum, cfg.l2);
    let mut order: Vec<usize> = (0..m).collect();

    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        wall_time: Duration::ZERO,
    };
    let mut best: Option<(f64, Model)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let loss = opt.step(&mut model, data.train_x, data.train_y, chunk);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
        }
        opt.flush(&mut model);

        let train_loss = mse_loss(&model, data.train_x, data.train_y);
        if !train_loss.is_finite() || !model.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        report.train_loss.push(train_loss);
        let score = if has_val {
            let v = mse_loss(&model, data.val_x, data.val_y);
            if !v.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            report.val_loss.push(v);
            v
        } else {
            train_loss
        };
        debug!(epoch, train_loss, score, "epoch done");

        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, model.clone()));
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }

    report.wall_time = start.elapsed();
    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, report))
}

/// Mini-batch gradient descent with momentum:
/// `v <- mu * v + grad + l2 * w`, `w <- w - lr * v`.
///
/// The model's feature-row block (see [`Regressor::feature_rows`]) is updated
/// lazily. A row the batch does not touch has no data gradient, so its
/// `(w, v)` pairs evolve under the fixed linear map
/// `A = [[1 - lr*l2, -lr*mu], [l2, mu]]`. Each row records the step it was
/// last brought current and catches up with `A^k` before it is read again;
/// [`Momentum::flush`] brings every row current.
struct Momentum {
    lr: f64,
    mu: f64,
    l2: f64,
    grads: Vec<Vec<f64>>,
    velocity: Vec<Vec<f64>>,
    decayed: Vec<bool>,
    /// `(block, width)` of the lazily updated block.
    rows: Option<(usize, usize)>,
    last: Vec<usize>,
    step: usize,
    /// `powers[k] = A^k` as `[a, b, c, d]` (row-major).
    powers: Vec<[f64; 4]>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl Momentum {
    fn new(model: &Model, lr: f64, mu: f64, l2: f64) -> Self {
        let rows = model.feature_rows();
        let n_rows = rows.map_or(0, |(b, w)| model.blocks()[b].len() / w.max(1));
        Self {
            lr,
            mu,
            l2,
            grads: model.zero_grads(),
            velocity: model.zero_grads(),
            decayed: model.decayed(),
            rows,
            last: vec![0; n_rows],
            step: 0,
            powers: vec![[1.0, 0.0, 0.0, 1.0]],
            seen: vec![false; n_rows],
            touched: Vec::new(),
        }
    }

    fn l2_for(&self, block: usize) -> f64 {
        if self.decayed[block] {
            self.l2
        } else {
            0.0
        }
    }

    fn power(&mut self, k: usize, l2: f64) -> [f64; 4] {
        let a = [1.0 - self.lr * l2, -self.lr * self.mu, l2, self.mu];
        while self.powers.len() <= k {
            let p = self.powers[self.powers.len() - 1];
            self.powers.push([
                a[0] * p[0] + a[1] * p[2],
                a[0] * p[1] + a[1] * p[3],
                a[2] * p[0] + a[3] * p[2],
                a[2] * p[1] + a[3] * p[3],
            ]);
        }
        self.powers[k]
    }

    fn catch_up(&mut self, params: &mut [f64], block: usize, width: usize, row: usize) {
        let k = self.step - self.last[row];
        if k == 0 {
            return;
        }
        let l2 = self.l2_for(block);
        let p = self.power(k, l2);
        let range = row * width..(row + 1) * width;
        for (w, v) in params[range.clone()].iter_mut().zip(&mut self.velocity[block][range]) {
            let (w0, v0) = (*w, *v);
            *w = p[0] * w0 + p[1] * v0;
            *v = p[2] * w0 + p[3] * v0;
        }
        self.last[row] = self.step;
    }

    /// One update on `batch`; returns the batch data loss.
    fn step(&mut self, model: &mut Model, xs: &[FeatureVector], ys: &[IntensityVector], batch: &[usize]) -> f64 {
        if let Some((block, width)) = self.rows {
            self.touched.clear();
            for &i in batch {
                for &(f, _) in xs[i].entries() {
                    let f = f as usize;
                    if !self.seen[f] {
                        self.seen[f] = true;
                        self.touched.push(f);
                    }
                }
            }
            self.touched.sort_unstable();
            let touched = std::mem::take(&mut self.touched);
            {
                let mut blocks = model.blocks_mut();
                for &f in &touched {
                    self.seen[f] = false;
                    self.catch_up(blocks[block], block, width, f);
                }
            }
            self.touched = touched;
        }

        for (b, g) in self.grads.iter_mut().enumerate() {
            if self.rows.is_none_or(|(rb, _)| rb != b) {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let loss = data_gradient(&*model, xs, ys, batch, &mut self.grads);

        let (lr, mu) = (self.lr, self.mu);
        let rows = self.rows;
        let l2s: Vec<f64> = (0..self.grads.len()).map(|b| self.l2_for(b)).collect();
        for (b, params) in model.blocks_mut().into_iter().enumerate() {
            let (g, v, l2) = (&mut self.grads[b], &mut self.velocity[b], l2s[b]);
            match rows {
                Some((rb, width)) if rb == b => {
                    for &f in &self.touched {
                        let range = f * width..(f + 1) * width;
                        for k in range {
                            v[k] = mu * v[k] + g[k] + l2 * params[k];
                            params[k] -= lr * v[k];
                            g[k] = 0.0;
                        }
                        self.last[f] = self.step + 1;
                    }
                }
                _ => {
                    for k in 0..params.len() {
                        v[k] = mu * v[k] + g[k] + l2 * params[k];
                        params[k] -= lr * v[k];
                    }
                }
            }
        }
        self.step += 1;
        loss
    }

    /// Brings every lazily updated row current.
    fn flush(&mut self, model: &mut Model) {
        let Some((block, width)) = self.rows else { return };
        let mut blocks = model.blocks_mut();
        for row in 0..self.last.len() {
            self.catch_up(blocks[block], block, width, row);
        }
    }
}
