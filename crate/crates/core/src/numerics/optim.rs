use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Sgd,
    Adam,
}

/// Optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn adam(num_params: usize, learning_rate: f64) -> Self {
        OptimizerState {
            algorithm: Algorithm::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn sgd(num_params: usize, learning_rate: f64) -> Self {
        OptimizerState {
            algorithm: Algorithm::Sgd,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            ..OptimizerState::adam(num_params, learning_rate)
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update of the configured algorithm.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        match self.algorithm {
            Algorithm::Adam => adam_step(params, grads, self),
            Algorithm::Sgd => sgd_step(params, grads, self),
        }
    }
}

fn check(params: &[f64], grads: &[f64]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok(())
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState) -> Result<()> {
    check(params, grads)?;
    if state.first_moment.len() != params.len() || state.second_moment.len() != params.len() {
        return Err(Error::shape("optimizer moments do not match parameters"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.first_moment[i] + (1.0 - b1) * g;
        let v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        params[i] -= state.learning_rate * (m / c1) / ((v / c2).sqrt() + state.epsilon);
    }
    Ok(())
}

pub fn sgd_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState) -> Result<()> {
    check(params, grads)?;
    state.step += 1;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= state.learning_rate * g;
    }
    Ok(())
}

/// Rescales `grads` in place so that its L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
