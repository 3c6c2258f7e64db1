//! Desk-scale predictors: median baselines, a one-hidden-layer MLP, exact
//! Gaussian-process regression and MiniRocket with a linear head.

mod baseline;
mod external;
mod gpr;
mod linear;
mod minirocket;
mod mlp;
mod persist;

pub use baseline::{BaselineMode, BaselineModel, BaselinePredictions};
pub use external::{load_external_predictions, ExternalPredictions};
pub use gpr::{Gpr, GprConfig, GprHyper};
pub use linear::{LogisticRegressor, RidgeRegressor, LOGISTIC_TOLERANCE, RIDGE_LAMBDA_FLOOR};
pub use minirocket::{minirocket_kernels, MiniRocket, MINIROCKET_FEATURES, MINIROCKET_KERNELS};
pub use mlp::{gnll_grad, gnll_loss, Gradients, Loss, McPrediction, Mlp, MlpConfig};
pub use persist::{load_model, save_model, SavedModel, MODEL_FORMAT_VERSION};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature rows with one target per row and the owning subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub subject_ids: Vec<String>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>, subject_ids: Vec<String>) -> Result<Self> {
        if rows.len() != targets.len() || rows.len() != subject_ids.len() {
            return Err(Error::InvalidInput(format!(
                "dataset lengths differ: {} rows, {} targets, {} subjects",
                rows.len(),
                targets.len(),
                subject_ids.len()
            )));
        }
        Ok(Self { rows, targets, subject_ids })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Row matrix from equal-width, finite feature rows.
pub fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || p == 0 {
        return Err(Error::InvalidInput("empty feature matrix".into()));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != p {
            return Err(Error::InvalidInput(format!("row {i} has {} features, expected {p}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("row {i} contains non-finite values")));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

pub(crate) fn check_targets(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::InvalidInput(format!("{} targets for {n} rows", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("targets contain non-finite values".into()));
    }
    Ok(())
}

/// Column z-scoring; zero-variance columns keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    #[serde(with = "persist::b64_vec")]
    pub mean: Vec<f64>,
    #[serde(with = "persist::b64_vec")]
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let (mean, scale) = x
            .column_iter()
            .map(|c| {
                let m = c.sum() / n;
                let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                (m, if sd > 1e-12 { sd } else { 1.0 })
            })
            .unzip();
        Self { mean, scale }
    }

    pub fn identity(p: usize) -> Self {
        Self { mean: vec![0.0; p], scale: vec![1.0; p] }
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} features, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.scale[j]))
    }
}

pub(crate) fn mean_std(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    (m, if sd > 1e-12 { sd } else { 1.0 })
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    crate::morph::nan_median(&mut v)
}
