use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Incremental PCA: mean, variance and the top components are updated one
/// batch at a time without keeping past batches.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalPca {
    n_components: usize,
    n_samples_seen: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
    /// `n_components × F`, rows orthonormal.
    components: Option<Matrix>,
    singular_values: Vec<f64>,
    explained_variance: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
}

impl IncrementalPca {
    pub fn new(n_components: usize) -> Result<Self> {
        if n_components == 0 {
            return Err(Error::InvalidArgument("n_components must be positive".into()));
        }
        Ok(IncrementalPca {
            n_components,
            n_samples_seen: 0,
            mean: Vec::new(),
            var: Vec::new(),
            components: None,
            singular_values: Vec::new(),
            explained_variance: Vec::new(),
            explained_variance_ratio: Vec::new(),
        })
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn n_samples_seen(&self) -> usize {
        self.n_samples_seen
    }

    pub fn is_fitted(&self) -> bool {
        self.components.is_some()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> Option<&Matrix> {
        self.components.as_ref()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    pub fn partial_fit<R: AsRef<[f64]>>(&mut self, batch: &[R]) -> Result<()> {
        ipca_fit_partial(self, batch)
    }

    pub fn transform(&self, frame: &[f64]) -> Result<Vec<f64>> {
        ipca_transform(self, frame)
    }
}

/// Folds one batch of rows into the running decomposition.
pub fn ipca_fit_partial<R: AsRef<[f64]>>(state: &mut IncrementalPca, batch: &[R]) -> Result<()> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Empty("ipca batch"));
    }
    let width = batch[0].as_ref().len();
    if batch.iter().any(|r| r.as_ref().len() != width) {
        return Err(Error::shape("ipca batch rows differ in width"));
    }
    let first = state.components.is_none();
    if !first && width != state.mean.len() {
        return Err(Error::shape(format!(
            "batch width {width} differs from fitted width {}",
            state.mean.len()
        )));
    }
    if state.n_components > width {
        return Err(Error::InvalidArgument(format!(
            "{} components requested from {width}-wide data",
            state.n_components
        )));
    }
    if first && n < state.n_components {
        return Err(Error::InvalidArgument(format!(
            "first batch has {n} rows, fewer than {} components",
            state.n_components
        )));
    }

    let nf = n as f64;
    let mut batch_mean = vec![0.0; width];
    for r in batch {
        for (m, x) in batch_mean.iter_mut().zip(r.as_ref()) {
            *m += x;
        }
    }
    batch_mean.iter_mut().for_each(|m| *m /= nf);
    let mut batch_ss = vec![0.0; width];
    for r in batch {
        for (j, x) in r.as_ref().iter().enumerate() {
            batch_ss[j] += (x - batch_mean[j]).powi(2);
        }
    }

    let last_n = state.n_samples_seen as f64;
    let total = last_n + nf;
    let (mean, var) = if first {
        (batch_mean.clone(), batch_ss.iter().map(|s| s / nf).collect::<Vec<_>>())
    } else {
        // pooled mean and variance from the two groups' moments
        let mean: Vec<f64> = (0..width)
            .map(|j| (last_n * state.mean[j] + nf * batch_mean[j]) / total)
            .collect();
        let var: Vec<f64> = (0..width)
            .map(|j| {
                let d = state.mean[j] - batch_mean[j];
                (state.var[j] * last_n + batch_ss[j] + d * d * last_n * nf / total) / total
            })
            .collect();
        (mean, var)
    };

    let mut rows: Vec<f64> = Vec::new();
    let mut row_count = 0;
    if let Some(c) = &state.components {
        for k in 0..c.rows() {
            rows.extend(c.row(k).iter().map(|v| v * state.singular_values[k]));
            row_count += 1;
        }
    }
    for r in batch {
        rows.extend(r.as_ref().iter().zip(&batch_mean).map(|(x, m)| x - m));
        row_count += 1;
    }
    if !first {
        let f = (last_n * nf / total).sqrt();
        rows.extend((0..width).map(|j| f * (state.mean[j] - batch_mean[j])));
        row_count += 1;
    }

    let stacked = DMatrix::from_row_slice(row_count, width, &rows);
    let svd = stacked.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("singular value decomposition failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let k = state.n_components.min(order.len());
    let mut components = Matrix::zeros(k, width);
    let mut singular = Vec::with_capacity(k);
    for (i, &o) in order.iter().take(k).enumerate() {
        let mut row: Vec<f64> = v_t.row(o).iter().copied().collect();
        // sign convention: largest-magnitude loading positive
        let big = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if big < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.row_mut(i).copy_from_slice(&row);
        singular.push(svd.singular_values[o]);
    }

    let total_var: f64 = var.iter().sum::<f64>() * total;
    state.explained_variance = singular
        .iter()
        .map(|s| s * s / (total - 1.0).max(1.0))
        .collect();
    state.explained_variance_ratio = singular
        .iter()
        .map(|s| if total_var > 0.0 { s * s / total_var } else { 0.0 })
        .collect();
    state.singular_values = singular;
    state.components = Some(components);
    state.mean = mean;
    state.var = var;
    state.n_samples_seen += n;
    Ok(())
}

/// Projects a centered frame onto the fitted components.
pub fn ipca_transform(state: &IncrementalPca, frame: &[f64]) -> Result<Vec<f64>> {
    let c = state.components.as_ref().ok_or(Error::Unfitted("incremental PCA"))?;
    if frame.len() != c.cols() {
        return Err(Error::shape(format!(
            "frame width {} differs from fitted width {}",
            frame.len(),
            c.cols()
        )));
    }
    let centered: Vec<f64> = frame.iter().zip(&state.mean).map(|(x, m)| x - m).collect();
    c.matvec(&centered)
}
