//! Dense linear algebra, feedforward layers with hand-written gradients,
//! first-order optimizers and a central-difference gradient checker.
//!
//! Everything runs in `f64`. Parameters of every learnable model can be
//! flattened into one vector so that the optimizers and the checker only ever
//! deal with slices.

mod matrix;
mod mlp;
mod optim;

pub use matrix::{
    argmax, axpy, dot, log_add_exp, log_sum_exp, norm, softmax, squared_distance, Matrix,
};
pub use mlp::{
    mlp_backward, mlp_backward_acc, mlp_forward, mlp_predict, Activation, Layer, MlpCache,
    MlpParams,
};
pub use optim::{adam_step, clip_grad_norm, sgd_step, Algorithm, OptimizerState};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The generator used for every seeded computation in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const DEFAULT_NORM_EPS: f64 = 1e-12;

/// Scales `v` to unit L2 norm. Vectors with norm `<= eps` map to `e1`.
pub fn l2_normalize(v: &[f64], eps: f64) -> Vec<f64> {
    let n = norm(v);
    if n <= eps {
        let mut e1 = vec![0.0; v.len()];
        if let Some(first) = e1.first_mut() {
            *first = 1.0;
        }
        return e1;
    }
    v.iter().map(|x| x / n).collect()
}

/// Gradient of a loss with respect to `v`, given its gradient with respect to
/// `l2_normalize(v, eps)`. Zero on the degenerate branch.
pub fn l2_normalize_backward(v: &[f64], grad_unit: &[f64], eps: f64) -> Vec<f64> {
    let n = norm(v);
    if n <= eps {
        return vec![0.0; v.len()];
    }
    let proj: f64 = v.iter().zip(grad_unit).map(|(a, g)| a * g).sum::<f64>() / (n * n);
    v.iter()
        .zip(grad_unit)
        .map(|(a, g)| (g - a * proj) / n)
        .collect()
}

/// Largest relative disagreement between an analytic gradient and central
/// differences.
///
/// `loss_fn` returns the loss together with its analytic gradient. The relative
/// error of coordinate `i` is `|a − fd| / max(|a|, |fd|, 1e-8)`.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[f64], epsilon: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let (l0, analytic) = loss_fn(params)?;
    if !l0.is_finite() {
        return Err(Error::Numeric("loss is not finite".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape("analytic gradient length differs from parameters"));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        probe[i] = params[i] + epsilon;
        let (lp, _) = loss_fn(&probe)?;
        probe[i] = params[i] - epsilon;
        let (lm, _) = loss_fn(&probe)?;
        probe[i] = params[i];
        if !lp.is_finite() || !lm.is_finite() {
            return Err(Error::Numeric("loss is not finite".into()));
        }
        let fd = (lp - lm) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
