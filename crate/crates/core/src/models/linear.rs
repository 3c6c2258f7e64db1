use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::persist::b64_vec;
use super::{check_targets, to_matrix, Standardizer};
use crate::error::{Error, Result};

pub const RIDGE_LAMBDA_FLOOR: f64 = 1e-8;
pub const LOGISTIC_TOLERANCE: f64 = 1e-6;
const LOGISTIC_MAX_ITER: usize = 200;

fn default_ridge_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect()
}

fn default_logistic_grid() -> Vec<f64> {
    (0..5).map(|i| 10f64.powf(-4.0 + i as f64)).collect()
}

/// Ridge regression on standardized features with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeRegressor {
    pub lambda: f64,
    x_scaler: Standardizer,
    #[serde(with = "b64_vec")]
    w: Vec<f64>,
    intercept: f64,
}

/// Eigendecomposition of the Gram system, reused across a λ grid. Primal
/// (XᵀX) when p ≤ n, dual (XXᵀ) otherwise.
struct RidgeSystem {
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
    /// Vᵀ·(Xᵀy) in primal form, Vᵀ·y in dual form.
    proj: DVector<f64>,
    dual: bool,
}

impl RidgeSystem {
    fn new(x: &DMatrix<f64>, yc: &DVector<f64>) -> Self {
        let dual = x.ncols() > x.nrows();
        let (gram, rhs) = if dual {
            (x * x.transpose(), yc.clone())
        } else {
            (x.transpose() * x, x.transpose() * yc)
        };
        let eig = SymmetricEigen::new(gram);
        let proj = eig.eigenvectors.transpose() * rhs;
        Self { eig, proj, dual }
    }

    fn weights(&self, x: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            self.proj.len(),
            self.proj
                .iter()
                .zip(self.eig.eigenvalues.iter())
                .map(|(p, e)| p / (e.max(0.0) + lambda)),
        );
        let sol = &self.eig.eigenvectors * scaled;
        if self.dual {
            x.transpose() * sol
        } else {
            sol
        }
    }
}

impl RidgeRegressor {
    fn prepare(rows: &[Vec<f64>], y: &[f64]) -> Result<(Standardizer, DMatrix<f64>, f64, DVector<f64>)> {
        let raw = to_matrix(rows)?;
        check_targets(y, raw.nrows())?;
        let scaler = Standardizer::fit(&raw);
        let x = scaler.transform(&raw)?;
        let ym = y.iter().sum::<f64>() / y.len() as f64;
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ym));
        Ok((scaler, x, ym, yc))
    }

    pub fn fit(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Self> {
        let (x_scaler, x, intercept, yc) = Self::prepare(rows, y)?;
        let lambda = lambda.max(RIDGE_LAMBDA_FLOOR);
        let w = RidgeSystem::new(&x, &yc).weights(&x, lambda);
        Ok(Self { lambda, x_scaler, w: w.as_slice().to_vec(), intercept })
    }

    /// Choose λ from `grid` (default 1e-3..1e3) by validation MAE.
    pub fn fit_validated(
        rows: &[Vec<f64>],
        y: &[f64],
        val_rows: &[Vec<f64>],
        val_y: &[f64],
        grid: Option<&[f64]>,
    ) -> Result<Self> {
        let default = default_ridge_grid();
        let grid = grid.unwrap_or(&default);
        let (x_scaler, x, intercept, yc) = Self::prepare(rows, y)?;
        let sys = RidgeSystem::new(&x, &yc);
        let xv = x_scaler.transform(&to_matrix(val_rows)?)?;
        check_targets(val_y, xv.nrows())?;
        let mut best: Option<(f64, f64, DVector<f64>)> = None;
        for &l in grid {
            let lambda = l.max(RIDGE_LAMBDA_FLOOR);
            let w = sys.weights(&x, lambda);
            let pred = &xv * &w;
            let mae = pred.iter().zip(val_y).map(|(p, t)| (p + intercept - t).abs()).sum::<f64>()
                / val_y.len() as f64;
            if best.as_ref().is_none_or(|(b, _, _)| mae < *b) {
                best = Some((mae, lambda, w));
            }
        }
        let (_, lambda, w) = best.ok_or_else(|| Error::InvalidSpec("empty lambda grid".into()))?;
        Ok(Self { lambda, x_scaler, w: w.as_slice().to_vec(), intercept })
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let x = self.x_scaler.transform(&to_matrix(rows)?)?;
        Ok((x * DVector::from_column_slice(&self.w)).iter().map(|v| v + self.intercept).collect())
    }

    /// Weights and intercept in original feature units.
    pub fn coefficients(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self.w.iter().zip(&self.x_scaler.scale).map(|(w, s)| w / s).collect();
        let b = self.intercept - w.iter().zip(&self.x_scaler.mean).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }

    /// Weights on the standardized features.
    pub fn standardized_weights(&self) -> &[f64] {
        &self.w
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// L2-penalized logistic regression fitted by damped Newton descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegressor {
    pub lambda: f64,
    x_scaler: Standardizer,
    /// Standardized-feature weights followed by the intercept.
    #[serde(with = "b64_vec")]
    w: Vec<f64>,
    pub gradient_norm: f64,
}

struct LogisticProblem<'a> {
    xa: &'a DMatrix<f64>,
    y: &'a [f64],
    lambda: f64,
    /// Xa·Xaᵀ for the dual Newton solve when q > n.
    gram: Option<DMatrix<f64>>,
}

impl LogisticProblem<'_> {
    fn objective(&self, w: &DVector<f64>) -> f64 {
        let f = self.xa * w;
        let n = self.y.len() as f64;
        f.iter().zip(self.y).map(|(f, y)| log1p_exp(*f) - y * f).sum::<f64>() / n
            + 0.5 * self.lambda * w.norm_squared()
    }

    fn gradient(&self, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let f = self.xa * w;
        let n = self.y.len() as f64;
        let p = f.map(sigmoid);
        let r = DVector::from_iterator(p.len(), p.iter().zip(self.y).map(|(p, y)| (p - y) / n));
        (self.xa.transpose() * r + self.lambda * w, p)
    }

    /// Solve (XaᵀDXa/n + λI)·d = g.
    fn newton_direction(&self, g: &DVector<f64>, p: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.y.len() as f64;
        let dw: Vec<f64> = p.iter().map(|p| (p * (1.0 - p) / n).max(0.0)).collect();
        match &self.gram {
            None => {
                let mut h = self.xa.transpose() * DMatrix::from_fn(self.xa.nrows(), self.xa.ncols(), |i, j| dw[i] * self.xa[(i, j)]);
                for i in 0..h.nrows() {
                    h[(i, i)] += self.lambda;
                }
                h.cholesky().map(|c| c.solve(g))
            }
            Some(gram) => {
                // Woodbury with S = D^{1/2}
                let s: Vec<f64> = dw.iter().map(|v| v.sqrt()).collect();
                let m = gram.nrows();
                let mut inner = DMatrix::from_fn(m, m, |i, j| s[i] * gram[(i, j)] * s[j]);
                for i in 0..m {
                    inner[(i, i)] += self.lambda;
                }
                let sxg = DVector::from_iterator(m, (self.xa * g).iter().zip(&s).map(|(v, s)| v * s));
                let t = inner.cholesky()?.solve(&sxg);
                let st = DVector::from_iterator(m, t.iter().zip(&s).map(|(v, s)| v * s));
                Some((g - self.xa.transpose() * st) / self.lambda)
            }
        }
    }

    fn solve(&self) -> Result<(DVector<f64>, f64)> {
        let mut w = DVector::zeros(self.xa.ncols());
        let mut obj = self.objective(&w);
        for _ in 0..LOGISTIC_MAX_ITER {
            let (g, p) = self.gradient(&w);
            let gnorm = g.norm();
            if gnorm < LOGISTIC_TOLERANCE {
                return Ok((w, gnorm));
            }
            let d = self.newton_direction(&g, &p).unwrap_or_else(|| g.clone());
            let slope = g.dot(&d);
            let mut t = 1.0;
            loop {
                let cand = &w - t * &d;
                let c = self.objective(&cand);
                if c <= obj - 1e-4 * t * slope || t < 1e-12 {
                    w = cand;
                    obj = c;
                    break;
                }
                t *= 0.5;
            }
        }
        let gnorm = self.gradient(&w).0.norm();
        if gnorm < LOGISTIC_TOLERANCE * 1e3 {
            Ok((w, gnorm))
        } else {
            Err(Error::NumericalFailure(format!("logistic fit stalled at gradient norm {gnorm:.3e}")))
        }
    }
}

impl LogisticRegressor {
    fn augmented(scaler: &Standardizer, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let x = scaler.transform(&to_matrix(rows)?)?;
        let p = x.ncols();
        Ok(DMatrix::from_fn(x.nrows(), p + 1, |i, j| if j < p { x[(i, j)] } else { 1.0 }))
    }

    /// Targets are 0/1. The penalty also applies to the intercept, which is
    /// negligible at the small λ values used.
    pub fn fit(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Self> {
        let raw = to_matrix(rows)?;
        check_targets(y, raw.nrows())?;
        if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::InvalidInput("logistic targets must be 0 or 1".into()));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidSpec("logistic penalty must be positive".into()));
        }
        let x_scaler = Standardizer::fit(&raw);
        let xa = Self::augmented(&x_scaler, rows)?;
        let gram = (xa.ncols() > xa.nrows()).then(|| &xa * xa.transpose());
        let (w, gradient_norm) = LogisticProblem { xa: &xa, y, lambda, gram }.solve()?;
        Ok(Self { lambda, x_scaler, w: w.as_slice().to_vec(), gradient_norm })
    }

    /// Choose λ from `grid` (default 1e-4..1) by validation log loss.
    pub fn fit_validated(
        rows: &[Vec<f64>],
        y: &[f64],
        val_rows: &[Vec<f64>],
        val_y: &[f64],
        grid: Option<&[f64]>,
    ) -> Result<Self> {
        let default = default_logistic_grid();
        let mut best: Option<(f64, Self)> = None;
        for &l in grid.unwrap_or(&default) {
            let m = Self::fit(rows, y, l)?;
            let p = m.predict_proba(val_rows)?;
            let ll = p
                .iter()
                .zip(val_y)
                .map(|(p, y)| {
                    let p = p.clamp(1e-12, 1.0 - 1e-12);
                    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                })
                .sum::<f64>();
            if best.as_ref().is_none_or(|(b, _)| ll < *b) {
                best = Some((ll, m));
            }
        }
        best.map(|(_, m)| m).ok_or_else(|| Error::InvalidSpec("empty lambda grid".into()))
    }

    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let xa = Self::augmented(&self.x_scaler, rows)?;
        Ok((xa * DVector::from_column_slice(&self.w)).iter().map(|f| sigmoid(*f)).collect())
    }
}
