use rand::Rng;

use super::matrix::{axpy, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// One affine layer followed by an elementwise activation. `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Parameters of a feedforward network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("an MLP needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.rows() {
                return Err(Error::shape(format!(
                    "layer {i}: bias width {} but {} outputs",
                    layer.bias.len(),
                    layer.weight.rows()
                )));
            }
            if i > 0 && layers[i - 1].weight.rows() != layer.weight.cols() {
                return Err(Error::shape(format!(
                    "layer {i}: expects {} inputs, previous layer emits {}",
                    layer.weight.cols(),
                    layers[i - 1].weight.rows()
                )));
            }
        }
        Ok(MlpParams { layers })
    }

    /// Glorot-uniform weights and zero biases. `widths` lists every layer width
    /// including input and output; hidden layers use `hidden`, the last uses `output`.
    pub fn xavier<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::shape("need at least input and output widths"));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut weight = Matrix::zeros(fan_out, fan_in);
                for w in weight.data_mut() {
                    *w = rng.random_range(-limit..=limit);
                }
                Layer {
                    weight,
                    bias: vec![0.0; fan_out],
                    activation: if i + 1 == n { output } else { hidden },
                }
            })
            .collect();
        MlpParams::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Same architecture, every parameter zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                bias: vec![0.0; l.bias.len()],
                activation: l.activation,
            })
            .collect();
        MlpParams { layers }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let w = l.weight.data_mut();
            w.copy_from_slice(&flat[offset..offset + w.len()]);
            offset += w.len();
            let b = l.bias.len();
            l.bias.copy_from_slice(&flat[offset..offset + b]);
            offset += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight.data_mut().iter_mut().for_each(|w| *w *= s);
            l.bias.iter_mut().for_each(|b| *b *= s);
        }
    }
}

/// Per-layer activations recorded by [`mlp_forward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `outputs[0]` is the network input, `outputs[i + 1]` the output of layer `i`.
    outputs: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("cache holds at least the input")
    }
}

pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
    if input.len() != params.input_dim() {
        return Err(Error::shape(format!(
            "network expects {} inputs, got {}",
            params.input_dim(),
            input.len()
        )));
    }
    let mut outputs = Vec::with_capacity(params.layers.len() + 1);
    outputs.push(input.to_vec());
    for layer in &params.layers {
        let x = outputs.last().unwrap();
        let mut y = vec![0.0; layer.weight.rows()];
        layer.weight.matvec_into(x, &mut y);
        for (yi, bi) in y.iter_mut().zip(&layer.bias) {
            *yi = layer.activation.apply(*yi + bi);
        }
        outputs.push(y);
    }
    let out = outputs.last().unwrap().clone();
    Ok((out, MlpCache { outputs }))
}

/// Forward pass without keeping the cache.
pub fn mlp_predict(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != params.input_dim() {
        return Err(Error::shape(format!(
            "network expects {} inputs, got {}",
            params.input_dim(),
            input.len()
        )));
    }
    let mut x = input.to_vec();
    for layer in &params.layers {
        let mut y = vec![0.0; layer.weight.rows()];
        layer.weight.matvec_into(&x, &mut y);
        for (yi, bi) in y.iter_mut().zip(&layer.bias) {
            *yi = layer.activation.apply(*yi + bi);
        }
        x = y;
    }
    Ok(x)
}

fn check_cache(params: &MlpParams, cache: &MlpCache, grad_output: &[f64]) -> Result<()> {
    let stale = cache.outputs.len() != params.layers.len() + 1
        || cache
            .outputs
            .iter()
            .skip(1)
            .zip(&params.layers)
            .any(|(o, l)| o.len() != l.weight.rows())
        || cache.outputs[0].len() != params.input_dim();
    if stale {
        return Err(Error::shape("cache does not match network architecture"));
    }
    if grad_output.len() != params.output_dim() {
        return Err(Error::shape(format!(
            "output gradient has width {}, network emits {}",
            grad_output.len(),
            params.output_dim()
        )));
    }
    Ok(())
}

/// Backpropagates `grad_output`, adding parameter gradients into `grads` and
/// returning the gradient with respect to the network input.
pub fn mlp_backward_acc(
    params: &MlpParams,
    cache: &MlpCache,
    grad_output: &[f64],
    grads: &mut MlpParams,
) -> Result<Vec<f64>> {
    check_cache(params, cache, grad_output)?;
    if grads.layers.len() != params.layers.len() {
        return Err(Error::shape("gradient accumulator architecture differs"));
    }
    let mut delta = grad_output.to_vec();
    for (i, layer) in params.layers.iter().enumerate().rev() {
        let y = &cache.outputs[i + 1];
        for (d, &yi) in delta.iter_mut().zip(y) {
            *d *= layer.activation.derivative_from_output(yi);
        }
        let x = &cache.outputs[i];
        let g = &mut grads.layers[i];
        g.weight.add_outer(1.0, &delta, x);
        axpy(1.0, &delta, &mut g.bias);
        let mut next = vec![0.0; layer.weight.cols()];
        layer.weight.matvec_t_acc(&delta, &mut next);
        delta = next;
    }
    Ok(delta)
}

/// Gradients of a scalar loss with respect to every parameter and to the input,
/// given the loss gradient at the network output.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &MlpCache,
    grad_output: &[f64],
) -> Result<(MlpParams, Vec<f64>)> {
    let mut grads = params.zeros_like();
    let grad_input = mlp_backward_acc(params, cache, grad_output, &mut grads)?;
    Ok((grads, grad_input))
}
