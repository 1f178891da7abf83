use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DEFAULT_COV_REG: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    Full,
    Diagonal,
}

impl CovarianceKind {
    pub fn name(self) -> &'static str {
        match self {
            CovarianceKind::Full => "full",
            CovarianceKind::Diagonal => "diag",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "full" => Some(CovarianceKind::Full),
            "diag" | "diagonal" => Some(CovarianceKind::Diagonal),
            _ => None,
        }
    }
}

/// Multivariate normal with a cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: Matrix,
    /// Lower-triangular factor of `cov`.
    chol: Matrix,
    log_norm: f64,
}

impl Gaussian {
    /// Fails with a model-invalid error unless `cov` is symmetric positive definite.
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        let d = mean.len();
        if cov.rows() != d || cov.cols() != d {
            return Err(Error::shape(format!("covariance must be {d}x{d}")));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (cov.get(i, j), cov.get(j, i));
                if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::ModelInvalid("covariance is not symmetric".into()));
                }
            }
        }
        let dm = DMatrix::from_row_slice(d, d, cov.data());
        let l = Cholesky::new(dm)
            .ok_or_else(|| Error::ModelInvalid("covariance is not positive definite".into()))?
            .unpack();
        let mut chol = Matrix::zeros(d, d);
        let mut log_det = 0.0;
        for i in 0..d {
            for j in 0..=i {
                chol.set(i, j, l[(i, j)]);
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        if !log_det.is_finite() {
            return Err(Error::ModelInvalid("covariance determinant is degenerate".into()));
        }
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Gaussian {
            mean,
            cov,
            chol,
            log_norm,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        // forward substitution L z = x − μ
        let mut z = vec![0.0; d];
        let mut quad = 0.0;
        for i in 0..d {
            let row = self.chol.row(i);
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= row[j] * z[j];
            }
            z[i] = s / row[i];
            quad += z[i] * z[i];
        }
        self.log_norm - 0.5 * quad
    }

    /// Weighted maximum-likelihood fit plus `reg · I`. `None` when the weight
    /// mass is negligible.
    pub fn fit_weighted<R: AsRef<[f64]>>(
        data: &[R],
        weights: &[f64],
        kind: CovarianceKind,
        reg: f64,
    ) -> Option<Result<Gaussian>> {
        let stats = SufficientStats::accumulate(data, weights);
        stats.to_gaussian(kind, reg)
    }
}

/// Weighted first and second moments.
#[derive(Debug, Clone)]
pub(crate) struct SufficientStats {
    pub weight: f64,
    pub sum: Vec<f64>,
    /// Upper triangle used; `outer[i * d + j]` holds `Σ w x_i x_j`.
    pub outer: Vec<f64>,
}

impl SufficientStats {
    pub fn new(d: usize) -> Self {
        SufficientStats {
            weight: 0.0,
            sum: vec![0.0; d],
            outer: vec![0.0; d * d],
        }
    }

    pub fn add(&mut self, x: &[f64], w: f64) {
        if w == 0.0 {
            return;
        }
        let d = self.sum.len();
        self.weight += w;
        for i in 0..d {
            let wx = w * x[i];
            self.sum[i] += wx;
            let row = &mut self.outer[i * d..(i + 1) * d];
            for j in i..d {
                row[j] += wx * x[j];
            }
        }
    }

    pub fn accumulate<R: AsRef<[f64]>>(data: &[R], weights: &[f64]) -> Self {
        let d = data.first().map_or(0, |x| x.as_ref().len());
        let mut s = SufficientStats::new(d);
        for (x, &w) in data.iter().zip(weights) {
            s.add(x.as_ref(), w);
        }
        s
    }

    pub fn to_gaussian(&self, kind: CovarianceKind, reg: f64) -> Option<Result<Gaussian>> {
        if self.weight < 1e-8 {
            return None;
        }
        let d = self.sum.len();
        let mean: Vec<f64> = self.sum.iter().map(|s| s / self.weight).collect();
        let mut cov = Matrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                if kind == CovarianceKind::Diagonal && i != j {
                    continue;
                }
                let mut c = self.outer[i * d + j] / self.weight - mean[i] * mean[j];
                if i == j {
                    c = c.max(0.0) + reg;
                }
                cov.set(i, j, c);
                cov.set(j, i, c);
            }
        }
        Some(Gaussian::new(mean, cov))
    }
}
