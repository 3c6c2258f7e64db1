use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::persist::{b64_mat, b64_vec};
use super::{check_targets, mean_std, to_matrix, Standardizer};
use crate::error::{Error, Result};

const JITTERS: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
// ridge term on the linear mean coefficients
const GLS_RIDGE: f64 = 1e-6;

/// Kernel hyperparameters in standardized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprHyper {
    pub signal_var: f64,
    pub lengthscale: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GprConfig {
    /// Signal standard deviations searched.
    pub sigma_grid: Vec<f64>,
    /// Lengthscales searched, as multiples of √(feature count).
    pub lengthscale_grid: Vec<f64>,
    /// Noise standard deviations searched.
    pub noise_grid: Vec<f64>,
    /// Fraction held out for the search when no validation set is given.
    pub holdout: f64,
    /// Rows used during the search; the final fit uses all rows.
    pub max_search_rows: usize,
    pub max_train_rows: usize,
    pub seed: u64,
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            sigma_grid: logspace(-0.5, 0.5, 3),
            lengthscale_grid: logspace(-1.0, 1.0, 7),
            noise_grid: logspace(-2.0, 0.0, 5),
            holdout: 0.2,
            max_search_rows: 600,
            max_train_rows: 5000,
            seed: 0,
        }
    }
}

/// Exact GP regression with a squared-exponential kernel and linear mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gpr {
    pub hyper: GprHyper,
    x_scaler: Standardizer,
    y_mean: f64,
    y_std: f64,
    #[serde(with = "b64_mat")]
    x: DMatrix<f64>,
    #[serde(with = "b64_vec")]
    beta: Vec<f64>,
    #[serde(with = "b64_vec")]
    alpha: Vec<f64>,
    /// Lower Cholesky factor of the noisy training covariance.
    #[serde(with = "b64_mat")]
    chol: DMatrix<f64>,
}

fn sq_dists(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let na: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let nb: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let mut d = a * b.transpose();
    for i in 0..d.nrows() {
        for j in 0..d.ncols() {
            d[(i, j)] = (na[i] + nb[j] - 2.0 * d[(i, j)]).max(0.0);
        }
    }
    d
}

fn design(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

fn cholesky_with_jitter(k: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    for jitter in JITTERS {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok(c);
        }
    }
    Err(Error::NumericalFailure("covariance not positive definite after jitter 1e-6".into()))
}

struct Posterior {
    beta: DVector<f64>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

fn posterior(x: &DMatrix<f64>, y: &DVector<f64>, d2: &DMatrix<f64>, h: GprHyper) -> Result<Posterior> {
    let mut k = d2.map(|d| h.signal_var * (-d / (2.0 * h.lengthscale.powi(2))).exp());
    for i in 0..k.nrows() {
        k[(i, i)] += h.noise_var;
    }
    let chol = cholesky_with_jitter(&k)?;
    let hm = design(x);
    let kinv_h = chol.solve(&hm);
    let kinv_y = chol.solve(y);
    let mut a = hm.transpose() * &kinv_h;
    for i in 0..a.nrows() {
        a[(i, i)] += GLS_RIDGE;
    }
    let beta = a
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("linear mean system is singular".into()))?
        .solve(&(hm.transpose() * kinv_y));
    let alpha = chol.solve(&(y - &hm * &beta));
    Ok(Posterior { beta, alpha, chol })
}

impl Gpr {
    fn grid(cfg: &GprConfig, p: usize) -> Vec<GprHyper> {
        let root = (p as f64).sqrt();
        let mut out = Vec::new();
        for s in &cfg.sigma_grid {
            for l in &cfg.lengthscale_grid {
                for n in &cfg.noise_grid {
                    out.push(GprHyper { signal_var: s * s, lengthscale: l * root, noise_var: n * n });
                }
            }
        }
        out
    }

    /// Fit with fixed hyperparameters (standardized units).
    pub fn fit_fixed(rows: &[Vec<f64>], y: &[f64], hyper: GprHyper) -> Result<Self> {
        let x_raw = to_matrix(rows)?;
        check_targets(y, x_raw.nrows())?;
        if !(hyper.signal_var > 0.0 && hyper.lengthscale > 0.0 && hyper.noise_var >= 0.0) {
            return Err(Error::InvalidSpec(format!("invalid kernel hyperparameters {hyper:?}")));
        }
        let x_scaler = Standardizer::fit(&x_raw);
        let x = x_scaler.transform(&x_raw)?;
        let (y_mean, y_std) = mean_std(y);
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_std));
        let post = posterior(&x, &ys, &sq_dists(&x, &x), hyper)?;
        Ok(Self {
            hyper,
            x_scaler,
            y_mean,
            y_std,
            x,
            beta: post.beta.as_slice().to_vec(),
            alpha: post.alpha.as_slice().to_vec(),
            chol: post.chol.l(),
        })
    }

    /// Grid search (σ, ℓ, σₙ) minimizing validation MAE, then refit on all
    /// training rows.
    pub fn fit(
        rows: &[Vec<f64>],
        y: &[f64],
        validation: Option<(&[Vec<f64>], &[f64])>,
        cfg: &GprConfig,
    ) -> Result<Self> {
        let x_all = to_matrix(rows)?;
        check_targets(y, x_all.nrows())?;
        if rows.len() > cfg.max_train_rows {
            return Err(Error::InvalidInput(format!(
                "exact GP limited to {} training rows, got {}",
                cfg.max_train_rows,
                rows.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (search_rows, search_y, val_rows, val_y): (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<f64>) =
            match validation {
                Some((vr, vy)) => (rows.to_vec(), y.to_vec(), vr.to_vec(), vy.to_vec()),
                None => {
                    let n_val = ((rows.len() as f64 * cfg.holdout).round() as usize).clamp(1, rows.len() - 1);
                    let picked = sample(&mut rng, rows.len(), n_val);
                    let mut is_val = vec![false; rows.len()];
                    picked.iter().for_each(|i| is_val[i] = true);
                    let split = |want: bool| -> (Vec<Vec<f64>>, Vec<f64>) {
                        (0..rows.len())
                            .filter(|&i| is_val[i] == want)
                            .map(|i| (rows[i].clone(), y[i]))
                            .unzip()
                    };
                    let (tr, ty) = split(false);
                    let (vr, vy) = split(true);
                    (tr, ty, vr, vy)
                }
            };
        let (search_rows, search_y) = if search_rows.len() > cfg.max_search_rows {
            let idx = sample(&mut rng, search_rows.len(), cfg.max_search_rows).into_vec();
            (idx.iter().map(|&i| search_rows[i].clone()).collect(), idx.iter().map(|&i| search_y[i]).collect())
        } else {
            (search_rows, search_y)
        };

        let xs_raw = to_matrix(&search_rows)?;
        let scaler = Standardizer::fit(&xs_raw);
        let xs = scaler.transform(&xs_raw)?;
        let xv = scaler.transform(&to_matrix(&val_rows)?)?;
        let (ym, ysd) = mean_std(&search_y);
        let ys = DVector::from_iterator(search_y.len(), search_y.iter().map(|v| (v - ym) / ysd));
        let d2 = sq_dists(&xs, &xs);
        let d2v = sq_dists(&xv, &xs);
        let hv = design(&xv);

        let mut best: Option<(f64, GprHyper)> = None;
        for h in Self::grid(cfg, x_all.ncols()) {
            let Ok(post) = posterior(&xs, &ys, &d2, h) else { continue };
            let ks = d2v.map(|d| h.signal_var * (-d / (2.0 * h.lengthscale.powi(2))).exp());
            let pred = &hv * &post.beta + ks * &post.alpha;
            let mae = pred
                .iter()
                .zip(&val_y)
                .map(|(p, t)| (p * ysd + ym - t).abs())
                .sum::<f64>()
                / val_y.len() as f64;
            if best.is_none_or(|(b, _)| mae < b) {
                best = Some((mae, h));
            }
        }
        let (_, hyper) = best.ok_or_else(|| Error::NumericalFailure("no grid point gave a valid fit".into()))?;
        Self::fit_fixed(rows, y, hyper)
    }

    /// Latent posterior mean and variance at `rows`, in target units.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let xq = self.x_scaler.transform(&to_matrix(rows)?)?;
        let h = self.hyper;
        let ks = sq_dists(&xq, &self.x).map(|d| h.signal_var * (-d / (2.0 * h.lengthscale.powi(2))).exp());
        let beta = DVector::from_column_slice(&self.beta);
        let alpha = DVector::from_column_slice(&self.alpha);
        let mean = design(&xq) * beta + &ks * alpha;
        let v = self
            .chol
            .solve_lower_triangular(&ks.transpose())
            .ok_or_else(|| Error::NumericalFailure("singular Cholesky factor".into()))?;
        let var: Vec<f64> = v
            .column_iter()
            .map(|c| (h.signal_var - c.norm_squared()).max(0.0) * self.y_std.powi(2))
            .collect();
        Ok((mean.iter().map(|m| m * self.y_std + self.y_mean).collect(), var))
    }

    /// Linear mean function alone, in target units.
    pub fn prior_mean(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let xq = self.x_scaler.transform(&to_matrix(rows)?)?;
        let m = design(&xq) * DVector::from_column_slice(&self.beta);
        Ok(m.iter().map(|v| v * self.y_std + self.y_mean).collect())
    }

    pub fn prior_variance(&self) -> f64 {
        self.hyper.signal_var * self.y_std.powi(2)
    }
}
