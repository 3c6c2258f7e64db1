use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::persist::b64_mat;
use super::{check_targets, mean_std, to_matrix, Standardizer};
use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
// keeps exp(-log_var) finite during early training
const LOG_VAR_CLAMP: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mae,
    Mse,
    /// Gaussian negative log likelihood; outputs (mean, log variance).
    Gnll,
    /// Two-class softmax cross entropy.
    CrossEntropy,
}

impl Loss {
    pub fn outputs(self) -> usize {
        match self {
            Loss::Mae | Loss::Mse => 1,
            Loss::Gnll | Loss::CrossEntropy => 2,
        }
    }

    fn is_regression(self) -> bool {
        !matches!(self, Loss::CrossEntropy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch: usize,
    pub loss: Loss,
    pub epochs: usize,
    /// Early stopping on validation loss; ignored without a validation set.
    pub patience: usize,
    /// Inverse-frequency class weights for cross entropy.
    pub class_weights: bool,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            dropout: 0.5,
            lr: 0.01,
            batch: 32,
            loss: Loss::Mae,
            epochs: 100,
            patience: 10,
            class_weights: false,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidSpec(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.lr > 0.0) || self.hidden == 0 || self.batch == 0 {
            return Err(Error::InvalidSpec("lr, hidden and batch must be positive".into()));
        }
        Ok(())
    }
}

/// Mean GNLL over a batch, including the ½·ln 2π constant.
pub fn gnll_loss(mean: &[f64], log_var: &[f64], target: &[f64]) -> f64 {
    let n = mean.len() as f64;
    mean.iter()
        .zip(log_var)
        .zip(target)
        .map(|((m, s), y)| 0.5 * (s + (y - m).powi(2) * (-s).exp()) + HALF_LN_2PI)
        .sum::<f64>()
        / n
}

/// Per-element gradients of `gnll_loss` w.r.t. mean and log variance.
pub fn gnll_grad(mean: &[f64], log_var: &[f64], target: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = mean.len() as f64;
    mean.iter()
        .zip(log_var)
        .zip(target)
        .map(|((m, s), y)| {
            let inv = (-s).exp();
            ((m - y) * inv / n, 0.5 * (1.0 - (y - m).powi(2) * inv) / n)
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DMatrix<f64>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .flat_map(|m| m.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McPrediction {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// One hidden layer (ReLU, inverted dropout) trained with Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub config: MlpConfig,
    #[serde(with = "b64_mat")]
    w1: DMatrix<f64>,
    #[serde(with = "b64_mat")]
    b1: DMatrix<f64>,
    #[serde(with = "b64_mat")]
    w2: DMatrix<f64>,
    #[serde(with = "b64_mat")]
    b2: DMatrix<f64>,
    x_scaler: Standardizer,
    y_mean: f64,
    y_std: f64,
    /// Full-pass training loss after each epoch (dropout off).
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

struct Forward {
    z1: DMatrix<f64>,
    h: DMatrix<f64>,
    out: DMatrix<f64>,
}

fn add_row(m: &mut DMatrix<f64>, row: &DMatrix<f64>) {
    for mut r in m.row_iter_mut() {
        r += row;
    }
}

impl Mlp {
    /// Untrained network with He-uniform weights and zero biases.
    pub fn init(inputs: usize, config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (h, o) = (config.hidden, config.loss.outputs());
        let b1 = (6.0 / inputs as f64).sqrt();
        let b2 = (6.0 / h as f64).sqrt();
        let w1 = DMatrix::from_fn(inputs, h, |_, _| rng.random_range(-b1..b1));
        let w2 = DMatrix::from_fn(h, o, |_, _| rng.random_range(-b2..b2));
        Ok(Self {
            config,
            w1,
            b1: DMatrix::zeros(1, h),
            w2,
            b2: DMatrix::zeros(1, o),
            x_scaler: Standardizer::identity(inputs),
            y_mean: 0.0,
            y_std: 1.0,
            train_loss: Vec::new(),
            val_loss: Vec::new(),
        })
    }

    pub fn inputs(&self) -> usize {
        self.w1.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .flat_map(|m| m.iter().copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::InvalidInput(format!("expected {} parameters", self.n_params())));
        }
        let mut off = 0;
        for m in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let n = m.len();
            m.as_mut_slice().copy_from_slice(&p[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn forward(&self, x: &DMatrix<f64>, mask: Option<&DMatrix<f64>>) -> Forward {
        let mut z1 = x * &self.w1;
        add_row(&mut z1, &self.b1);
        let mut h = z1.map(|v| v.max(0.0));
        if let Some(m) = mask {
            h.component_mul_assign(m);
        }
        let mut out = &h * &self.w2;
        add_row(&mut out, &self.b2);
        Forward { z1, h, out }
    }

    /// Loss value and gradient of the output layer, for targets `y` in
    /// model space (standardized for regression, 0/1 for classification).
    fn loss_and_dout(&self, out: &DMatrix<f64>, y: &[f64], weights: &[f64]) -> (f64, DMatrix<f64>) {
        let b = out.nrows();
        let nb = b as f64;
        let mut d = DMatrix::zeros(b, out.ncols());
        let loss = match self.config.loss {
            Loss::Mse => (0..b)
                .map(|i| {
                    let r = out[(i, 0)] - y[i];
                    d[(i, 0)] = 2.0 * r / nb;
                    r * r / nb
                })
                .sum(),
            Loss::Mae => (0..b)
                .map(|i| {
                    let r = out[(i, 0)] - y[i];
                    d[(i, 0)] = r.signum() * (r != 0.0) as u8 as f64 / nb;
                    r.abs() / nb
                })
                .sum(),
            Loss::Gnll => {
                let mu: Vec<f64> = (0..b).map(|i| out[(i, 0)]).collect();
                let raw: Vec<f64> = (0..b).map(|i| out[(i, 1)]).collect();
                let s: Vec<f64> = raw.iter().map(|v| v.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP)).collect();
                let (dm, ds) = gnll_grad(&mu, &s, y);
                for i in 0..b {
                    d[(i, 0)] = dm[i];
                    d[(i, 1)] = if raw[i].abs() < LOG_VAR_CLAMP { ds[i] } else { 0.0 };
                }
                gnll_loss(&mu, &s, y)
            }
            Loss::CrossEntropy => {
                let wsum: f64 = weights.iter().sum();
                (0..b)
                    .map(|i| {
                        let (l0, l1) = (out[(i, 0)], out[(i, 1)]);
                        let m = l0.max(l1);
                        let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
                        let p1 = (l1 - lse).exp();
                        let cls = y[i] > 0.5;
                        d[(i, 0)] = weights[i] * ((1.0 - p1) - (!cls) as u8 as f64) / wsum;
                        d[(i, 1)] = weights[i] * (p1 - cls as u8 as f64) / wsum;
                        weights[i] * (lse - if cls { l1 } else { l0 }) / wsum
                    })
                    .sum()
            }
        };
        (loss, d)
    }

    fn backward(&self, x: &DMatrix<f64>, f: &Forward, dout: &DMatrix<f64>, mask: Option<&DMatrix<f64>>) -> Gradients {
        let w2 = f.h.transpose() * dout;
        let b2 = DMatrix::from_fn(1, dout.ncols(), |_, j| dout.column(j).sum());
        let mut dh = dout * self.w2.transpose();
        if let Some(m) = mask {
            dh.component_mul_assign(m);
        }
        dh.zip_apply(&f.z1, |g, z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
        let w1 = x.transpose() * &dh;
        let b1 = DMatrix::from_fn(1, dh.ncols(), |_, j| dh.column(j).sum());
        Gradients { w1, b1, w2, b2 }
    }

    /// Loss and analytic gradients on already-scaled inputs and model-space
    /// targets, with an explicit dropout mask (entries 0 or 1/(1−p)).
    pub fn loss_and_grad(&self, x: &DMatrix<f64>, y: &[f64], mask: Option<&DMatrix<f64>>) -> (f64, Gradients) {
        let w = vec![1.0; y.len()];
        let f = self.forward(x, mask);
        let (loss, dout) = self.loss_and_dout(&f.out, y, &w);
        (loss, self.backward(x, &f, &dout, mask))
    }

    pub fn loss_only(&self, x: &DMatrix<f64>, y: &[f64], mask: Option<&DMatrix<f64>>) -> f64 {
        let w = vec![1.0; y.len()];
        self.loss_and_dout(&self.forward(x, mask).out, y, &w).0
    }

    fn dropout_mask(&self, rows: usize, rng: &mut ChaCha8Rng) -> Option<DMatrix<f64>> {
        let p = self.config.dropout;
        (p > 0.0).then(|| {
            let keep = 1.0 / (1.0 - p);
            DMatrix::from_fn(rows, self.config.hidden, |_, _| if rng.random::<f64>() < p { 0.0 } else { keep })
        })
    }

    fn model_targets(&self, y: &[f64]) -> Vec<f64> {
        if self.config.loss.is_regression() {
            y.iter().map(|v| (v - self.y_mean) / self.y_std).collect()
        } else {
            y.to_vec()
        }
    }

    /// Train on `rows`/`y`; `validation` enables early stopping with the
    /// best-epoch weights restored. Classification targets are 0/1.
    pub fn fit(
        rows: &[Vec<f64>],
        y: &[f64],
        validation: Option<(&[Vec<f64>], &[f64])>,
        config: MlpConfig,
    ) -> Result<Self> {
        let x_raw = to_matrix(rows)?;
        check_targets(y, x_raw.nrows())?;
        let mut model = Self::init(x_raw.ncols(), config)?;
        let cfg = model.config.clone();
        if !cfg.loss.is_regression() && y.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::InvalidInput("classification targets must be 0 or 1".into()));
        }
        model.x_scaler = Standardizer::fit(&x_raw);
        if cfg.loss.is_regression() {
            (model.y_mean, model.y_std) = mean_std(y);
        }
        let x = model.x_scaler.transform(&x_raw)?;
        let yt = model.model_targets(y);
        let val = match validation {
            Some((vr, vy)) => {
                let vx = model.x_scaler.transform(&to_matrix(vr)?)?;
                check_targets(vy, vx.nrows())?;
                Some((vx, model.model_targets(vy)))
            }
            None => None,
        };
        let weights: Vec<f64> = if cfg.class_weights && !cfg.loss.is_regression() {
            let pos = yt.iter().filter(|v| **v > 0.5).count() as f64;
            let n = yt.len() as f64;
            yt.iter()
                .map(|v| {
                    let c = if *v > 0.5 { pos } else { n - pos };
                    if c > 0.0 { n / (2.0 * c) } else { 1.0 }
                })
                .collect()
        } else {
            vec![1.0; yt.len()]
        };

        // separate stream so weight init is independent of epoch count
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
        let mut m = model.zero_like();
        let mut v = model.zero_like();
        let mut step = 0i32;
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut since_best = 0;

        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch) {
                let xb = DMatrix::from_fn(chunk.len(), x.ncols(), |i, j| x[(chunk[i], j)]);
                let yb: Vec<f64> = chunk.iter().map(|&i| yt[i]).collect();
                let wb: Vec<f64> = chunk.iter().map(|&i| weights[i]).collect();
                let mask = model.dropout_mask(chunk.len(), &mut rng);
                let f = model.forward(&xb, mask.as_ref());
                let (_, dout) = model.loss_and_dout(&f.out, &yb, &wb);
                let g = model.backward(&xb, &f, &dout, mask.as_ref());
                step += 1;
                model.adam_step(&g, &mut m, &mut v, step);
            }
            let f = model.forward(&x, None);
            model.train_loss.push(model.loss_and_dout(&f.out, &yt, &weights).0);
            if let Some((vx, vy)) = &val {
                let vl = model.loss_only(vx, vy, None);
                model.val_loss.push(vl);
                if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                    best = Some((vl, model.params_flat()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.patience {
                        break;
                    }
                }
            }
        }
        if let Some((_, p)) = best {
            model.set_params_flat(&p)?;
        }
        Ok(model)
    }

    fn zero_like(&self) -> Gradients {
        Gradients {
            w1: DMatrix::zeros(self.w1.nrows(), self.w1.ncols()),
            b1: DMatrix::zeros(1, self.b1.ncols()),
            w2: DMatrix::zeros(self.w2.nrows(), self.w2.ncols()),
            b2: DMatrix::zeros(1, self.b2.ncols()),
        }
    }

    fn adam_step(&mut self, g: &Gradients, m: &mut Gradients, v: &mut Gradients, t: i32) {
        let lr = self.config.lr;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let update = |p: &mut DMatrix<f64>, g: &DMatrix<f64>, m: &mut DMatrix<f64>, v: &mut DMatrix<f64>| {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        };
        update(&mut self.w1, &g.w1, &mut m.w1, &mut v.w1);
        update(&mut self.b1, &g.b1, &mut m.b1, &mut v.b1);
        update(&mut self.w2, &g.w2, &mut m.w2, &mut v.w2);
        update(&mut self.b2, &g.b2, &mut m.b2, &mut v.b2);
    }

    fn raw_outputs(&self, rows: &[Vec<f64>], mask_rng: Option<&mut ChaCha8Rng>) -> Result<DMatrix<f64>> {
        let x = self.x_scaler.transform(&to_matrix(rows)?)?;
        let mask = mask_rng.and_then(|rng| self.dropout_mask(x.nrows(), rng));
        Ok(self.forward(&x, mask.as_ref()).out)
    }

    /// Point predictions in target units (regression) or class-1
    /// probabilities (classification), dropout off.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.decode(&self.raw_outputs(rows, None)?).0)
    }

    /// Predictive mean and variance of a GNLL model, in target units.
    pub fn predict_gnll(&self, rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.config.loss != Loss::Gnll {
            return Err(Error::InvalidSpec("predict_gnll requires a GNLL model".into()));
        }
        let (mean, var) = self.decode(&self.raw_outputs(rows, None)?);
        Ok((mean, var.unwrap_or_default()))
    }

    fn decode(&self, out: &DMatrix<f64>) -> (Vec<f64>, Option<Vec<f64>>) {
        let n = out.nrows();
        match self.config.loss {
            Loss::Mae | Loss::Mse => ((0..n).map(|i| out[(i, 0)] * self.y_std + self.y_mean).collect(), None),
            Loss::Gnll => (
                (0..n).map(|i| out[(i, 0)] * self.y_std + self.y_mean).collect(),
                Some(
                    (0..n)
                        .map(|i| out[(i, 1)].clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP).exp() * self.y_std.powi(2))
                        .collect(),
                ),
            ),
            Loss::CrossEntropy => (
                (0..n)
                    .map(|i| 1.0 / (1.0 + (out[(i, 0)] - out[(i, 1)]).exp()))
                    .collect(),
                None,
            ),
        }
    }

    /// Monte-Carlo dropout: `passes` stochastic forward passes with dropout
    /// active; mean and population std of the point predictions.
    pub fn predict_mc_dropout(&self, rows: &[Vec<f64>], passes: usize, seed: u64) -> Result<McPrediction> {
        if passes == 0 {
            return Err(Error::InvalidSpec("passes must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rows.len();
        // Welford accumulation
        let mut mean = DVector::<f64>::zeros(n);
        let mut m2 = DVector::<f64>::zeros(n);
        for k in 1..=passes {
            let out = self.raw_outputs(rows, Some(&mut rng))?;
            let (p, _) = self.decode(&out);
            for (i, v) in p.iter().enumerate() {
                let delta = v - mean[i];
                mean[i] += delta / k as f64;
                m2[i] += delta * (v - mean[i]);
            }
        }
        Ok(McPrediction {
            mean: mean.iter().copied().collect(),
            std: m2.iter().map(|s| (s / passes as f64).max(0.0).sqrt()).collect(),
        })
    }
}
