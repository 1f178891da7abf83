use rand_distr::{Distribution, StandardNormal};

use super::SegmentLabel;
use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, seeded_rng, Matrix};

pub const DEFAULT_CRF_FEATURES: usize = 32;

/// Linear-chain CRF over a fixed random tanh basis of the input.
///
/// Unary potential of label `c` at frame `t` is `w_c · φ(x_t) + b_c` with
/// `φ(x) = tanh(s · P x)`; `P` and `s` are fixed at construction and only
/// `w`, `b` and the transition scores are learned.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearChainCrf {
    projection: Matrix,
    input_scale: f64,
    weights: Matrix,
    bias: Vec<f64>,
    transitions: Matrix,
}

impl LinearChainCrf {
    /// Zero-weight CRF whose basis is drawn from `seed`.
    pub fn new(input_dim: usize, classes: usize, features: usize, input_scale: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 || classes == 0 || features == 0 {
            return Err(Error::InvalidArgument("crf dimensions must be positive".into()));
        }
        if !(input_scale.is_finite() && input_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("input scale {input_scale} must be positive")));
        }
        let mut rng = seeded_rng(seed);
        let data: Vec<f64> = (0..features * input_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(LinearChainCrf {
            projection: Matrix::from_vec(features, input_dim, data)?,
            input_scale,
            weights: Matrix::zeros(classes, features),
            bias: vec![0.0; classes],
            transitions: Matrix::zeros(classes, classes),
        })
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn features(&self) -> usize {
        self.projection.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn transitions(&self) -> &Matrix {
        &self.transitions
    }

    pub fn num_params(&self) -> usize {
        let c = self.classes();
        c * self.features() + c + c * c
    }

    /// Learned parameters in the order weights, bias, transitions.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.weights.data().to_vec();
        v.extend_from_slice(&self.bias);
        v.extend_from_slice(self.transitions.data());
        v
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("flat crf parameter length"));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("crf weights must be finite".into()));
        }
        let (w, rest) = flat.split_at(self.weights.data().len());
        let (b, t) = rest.split_at(self.bias.len());
        self.weights.data_mut().copy_from_slice(w);
        self.bias.copy_from_slice(b);
        self.transitions.data_mut().copy_from_slice(t);
        Ok(())
    }

    pub fn features_of(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.projection.matvec(x)?.into_iter().map(|v| (self.input_scale * v).tanh()).collect())
    }

    fn unaries<R: AsRef<[f64]>>(&self, seq: &[R]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        if seq.is_empty() {
            return Err(Error::Empty("crf sequence"));
        }
        let mut phis = Vec::with_capacity(seq.len());
        let mut unary = Vec::with_capacity(seq.len());
        for x in seq {
            let phi = self.features_of(x.as_ref())?;
            let mut u = self.weights.matvec(&phi)?;
            for (u, b) in u.iter_mut().zip(&self.bias) {
                *u += b;
            }
            phis.push(phi);
            unary.push(u);
        }
        Ok((phis, unary))
    }

    /// Unnormalized log-score of a label path.
    pub fn score<R: AsRef<[f64]>>(&self, seq: &[R], labels: &[SegmentLabel]) -> Result<f64> {
        let (_, unary) = self.unaries(seq)?;
        check_labels(labels, seq.len(), self.classes())?;
        Ok(path_score(&unary, &self.transitions, labels))
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new("crf");
        a.set_meta("classes", self.classes());
        a.set_meta("features", self.features());
        a.put("projection", self.projection.clone());
        a.put_vec("input_scale", &[self.input_scale]);
        a.put("weights", self.weights.clone());
        a.put_vec("bias", &self.bias);
        a.put("transitions", self.transitions.clone());
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_kind("crf")?;
        let crf = LinearChainCrf {
            projection: a.tensor("projection")?.clone(),
            input_scale: a.vector("input_scale")?.first().copied().unwrap_or(f64::NAN),
            weights: a.tensor("weights")?.clone(),
            bias: a.vector("bias")?,
            transitions: a.tensor("transitions")?.clone(),
        };
        let c = crf.bias.len();
        if crf.weights.rows() != c
            || crf.weights.cols() != crf.projection.rows()
            || crf.transitions.rows() != c
            || crf.transitions.cols() != c
            || !(crf.input_scale > 0.0)
        {
            return Err(Error::ModelInvalid("crf tensors have inconsistent shapes".into()));
        }
        Ok(crf)
    }
}

fn check_labels(labels: &[SegmentLabel], len: usize, classes: usize) -> Result<()> {
    if labels.len() != len {
        return Err(Error::shape("one label per frame required"));
    }
    if let Some(l) = labels.iter().find(|l| l.index() >= classes) {
        return Err(Error::InvalidArgument(format!("label {} exceeds {classes} classes", l.get())));
    }
    Ok(())
}

fn path_score(unary: &[Vec<f64>], trans: &Matrix, labels: &[SegmentLabel]) -> f64 {
    let mut s = 0.0;
    for (t, l) in labels.iter().enumerate() {
        s += unary[t][l.index()];
        if t > 0 {
            s += trans.get(labels[t - 1].index(), l.index());
        }
    }
    s
}

/// `alpha[t][c]` = log-sum of scores of all prefixes ending in `c` at `t`.
fn forward(unary: &[Vec<f64>], trans: &Matrix) -> Vec<Vec<f64>> {
    let c = trans.rows();
    let mut alpha = vec![unary[0].clone()];
    let mut buf = vec![0.0; c];
    for u in &unary[1..] {
        let prev = alpha.last().unwrap();
        let next: Vec<f64> = (0..c)
            .map(|j| {
                for i in 0..c {
                    buf[i] = prev[i] + trans.get(i, j);
                }
                log_sum_exp(&buf) + u[j]
            })
            .collect();
        alpha.push(next);
    }
    alpha
}

fn backward(unary: &[Vec<f64>], trans: &Matrix) -> Vec<Vec<f64>> {
    let (t_len, c) = (unary.len(), trans.rows());
    let mut beta = vec![vec![0.0; c]; t_len];
    let mut buf = vec![0.0; c];
    for t in (0..t_len - 1).rev() {
        for i in 0..c {
            for j in 0..c {
                buf[j] = trans.get(i, j) + unary[t + 1][j] + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&buf);
        }
    }
    beta
}

pub fn crf_log_partition<R: AsRef<[f64]>>(crf: &LinearChainCrf, seq: &[R]) -> Result<f64> {
    let (_, unary) = crf.unaries(seq)?;
    Ok(log_sum_exp(forward(&unary, &crf.transitions).last().unwrap()))
}

/// Per-frame label marginals.
pub fn crf_marginals<R: AsRef<[f64]>>(crf: &LinearChainCrf, seq: &[R]) -> Result<Vec<Vec<f64>>> {
    let (_, unary) = crf.unaries(seq)?;
    let alpha = forward(&unary, &crf.transitions);
    let beta = backward(&unary, &crf.transitions);
    let z = log_sum_exp(alpha.last().unwrap());
    Ok(alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| a.iter().zip(b).map(|(a, b)| (a + b - z).exp()).collect())
        .collect())
}

/// Highest-scoring label path; ties go to the lower label.
pub fn crf_viterbi<R: AsRef<[f64]>>(crf: &LinearChainCrf, seq: &[R]) -> Result<Vec<SegmentLabel>> {
    let (_, unary) = crf.unaries(seq)?;
    let c = crf.classes();
    let mut delta = unary[0].clone();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(unary.len());
    for u in &unary[1..] {
        let mut next = vec![0.0; c];
        let mut ptr = vec![0; c];
        for j in 0..c {
            let mut best = (f64::NEG_INFINITY, 0);
            for i in 0..c {
                let v = delta[i] + crf.transitions.get(i, j);
                if v > best.0 {
                    best = (v, i);
                }
            }
            next[j] = best.0 + u[j];
            ptr[j] = best.1;
        }
        delta = next;
        back.push(ptr);
    }
    let mut j = (0..c).fold(0, |b, i| if delta[i] > delta[b] { i } else { b });
    let mut path = vec![j];
    for ptr in back.iter().rev() {
        j = ptr[j];
        path.push(j);
    }
    path.reverse();
    Ok(path.into_iter().map(SegmentLabel::from_index).collect())
}

/// Conditional log-likelihood `log p(y | x)` of one sequence and its gradient
/// with respect to the flat parameters.
pub fn crf_log_likelihood<R: AsRef<[f64]>>(
    crf: &LinearChainCrf,
    seq: &[R],
    labels: &[SegmentLabel],
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; crf.num_params()];
    let ll = accumulate_ll(crf, seq, labels, &mut grad)?;
    Ok((ll, grad))
}

fn accumulate_ll<R: AsRef<[f64]>>(
    crf: &LinearChainCrf,
    seq: &[R],
    labels: &[SegmentLabel],
    grad: &mut [f64],
) -> Result<f64> {
    let (phis, unary) = crf.unaries(seq)?;
    let (c, e) = (crf.classes(), crf.features());
    check_labels(labels, seq.len(), c)?;
    let trans = &crf.transitions;
    let alpha = forward(&unary, trans);
    let beta = backward(&unary, trans);
    let z = log_sum_exp(alpha.last().unwrap());
    let (gw, rest) = grad.split_at_mut(c * e);
    let (gb, gt) = rest.split_at_mut(c);
    for t in 0..seq.len() {
        let y = labels[t].index();
        for k in 0..c {
            let p = (alpha[t][k] + beta[t][k] - z).exp();
            let coef = if k == y { 1.0 - p } else { -p };
            gb[k] += coef;
            for (g, f) in gw[k * e..(k + 1) * e].iter_mut().zip(&phis[t]) {
                *g += coef * f;
            }
        }
        if t > 0 {
            gt[labels[t - 1].index() * c + y] += 1.0;
            for i in 0..c {
                for j in 0..c {
                    gt[i * c + j] -= (alpha[t - 1][i] + trans.get(i, j) + unary[t][j] + beta[t][j] - z).exp();
                }
            }
        }
    }
    Ok(path_score(&unary, trans, labels) - z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfConfig {
    pub features: usize,
    pub iterations: usize,
    /// L2 penalty on the learned parameters.
    pub l2: f64,
    pub initial_step: f64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            features: DEFAULT_CRF_FEATURES,
            iterations: 150,
            l2: 1e-4,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrfFit {
    pub model: LinearChainCrf,
    /// Objective before training and after every accepted step.
    pub objective: Vec<f64>,
}

/// Per-frame mean conditional log-likelihood minus `l2/2 · ‖θ‖²`, with gradient.
pub fn crf_objective<R: AsRef<[f64]>>(
    crf: &LinearChainCrf,
    data: &[(Vec<R>, Vec<SegmentLabel>)],
    l2: f64,
) -> Result<(f64, Vec<f64>)> {
    let frames: usize = data.iter().map(|(s, _)| s.len()).sum();
    if frames == 0 {
        return Err(Error::Empty("crf training set"));
    }
    let mut grad = vec![0.0; crf.num_params()];
    let mut total = 0.0;
    for (seq, labels) in data {
        total += accumulate_ll(crf, seq, labels, &mut grad)?;
    }
    let theta = crf.flatten();
    let n = frames as f64;
    let penalty: f64 = theta.iter().map(|v| v * v).sum::<f64>();
    for (g, t) in grad.iter_mut().zip(&theta) {
        *g = *g / n - l2 * t;
    }
    Ok((total / n - 0.5 * l2 * penalty, grad))
}

/// Gradient ascent with backtracking: a step is taken only if it raises the
/// objective (Armijo condition), so the returned trace is non-decreasing.
pub fn crf_train<R: AsRef<[f64]>>(
    data: &[(Vec<R>, Vec<SegmentLabel>)],
    classes: usize,
    config: &CrfConfig,
    seed: u64,
) -> Result<CrfFit> {
    let first = data
        .iter()
        .flat_map(|(s, _)| s.first())
        .next()
        .ok_or(Error::Empty("crf training set"))?;
    let dim = first.as_ref().len();
    // scale so that `P x` has roughly unit variance per coordinate
    let (mut sq, mut n) = (0.0, 0usize);
    for (seq, _) in data {
        for x in seq {
            sq += x.as_ref().iter().map(|v| v * v).sum::<f64>();
            n += 1;
        }
    }
    let rms = (sq / n as f64).sqrt();
    let scale = if rms > 1e-12 { 1.0 / rms } else { 1.0 };
    let mut crf = LinearChainCrf::new(dim, classes, config.features, scale, seed)?;
    let (mut obj, mut grad) = crf_objective(&crf, data, config.l2)?;
    let mut trace = vec![obj];
    let mut step = config.initial_step;
    let mut theta = crf.flatten();
    let mut candidate = crf.clone();
    for _ in 0..config.iterations {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2 < 1e-20 {
            break;
        }
        let mut accepted = false;
        while step > 1e-12 {
            let next: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
            candidate.assign_flat(&next)?;
            let (o, g) = crf_objective(&candidate, data, config.l2)?;
            if o >= obj + 1e-4 * step * g2 {
                theta = next;
                obj = o;
                grad = g;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(obj);
    }
    crf.assign_flat(&theta)?;
    Ok(CrfFit { model: crf, objective: trace })
}
