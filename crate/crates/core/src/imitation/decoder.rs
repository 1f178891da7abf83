use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::pose::{EndEffectorPose, ARM_WIDTH, POSE_WIDTH};
use crate::archive::Archive;
use crate::data::Demonstration;
use crate::embedding::Encoder;
use crate::error::{Error, Result};
use crate::numerics::{
    clip_grad_norm, l2_normalize, l2_normalize_backward, mlp_backward_acc, mlp_forward, mlp_predict, seeded_rng,
    Activation, MlpParams, OptimizerState, DEFAULT_NORM_EPS,
};

pub const DEFAULT_POSITION_WEIGHT: f64 = 0.5;
pub const DEFAULT_DECODER_HIDDEN: [usize; 6] = [512, 256, 128, 64, 32, 16];

/// Offsets of the position and jaw entries inside the flat pose.
const REGRESSED: [usize; 8] = [0, 1, 2, 7, 8, 9, 10, 15];
const QUATS: [usize; 2] = [3, 3 + ARM_WIDTH];

/// Weighted pose loss of a raw 16-value prediction against the truth, with
/// its gradient with respect to the raw prediction.
///
/// `w_pos · Σ r² / 16 + (1 − w_pos) · mean_arms (1 − |⟨q̂, q⟩|)`, where `r`
/// runs over position and jaw residuals and `q̂` is the renormalized predicted
/// quaternion. The squared-error sum is divided by the full pose width, so a
/// single 1 cm residual costs exactly `1/16`.
pub fn pose_loss(pred: &[f64], truth: &EndEffectorPose, w_pos: f64) -> Result<(f64, Vec<f64>)> {
    if pred.len() != POSE_WIDTH {
        return Err(Error::shape(format!("pose needs {POSE_WIDTH} values, got {}", pred.len())));
    }
    if !(0.0..=1.0).contains(&w_pos) {
        return Err(Error::InvalidArgument(format!("position weight {w_pos} outside [0, 1]")));
    }
    let t = truth.to_vec();
    let mut grad = vec![0.0; POSE_WIDTH];
    let mut sq = 0.0;
    for &i in &REGRESSED {
        let r = pred[i] - t[i];
        sq += r * r;
        grad[i] = w_pos * 2.0 * r / POSE_WIDTH as f64;
    }
    let mut orient = 0.0;
    for &o in &QUATS {
        let raw = &pred[o..o + 4];
        let q = l2_normalize(raw, DEFAULT_NORM_EPS);
        let d: f64 = q.iter().zip(&t[o..o + 4]).map(|(a, b)| a * b).sum();
        orient += 1.0 - d.abs();
        let sign = if d < 0.0 { -1.0 } else { 1.0 };
        let g_unit: Vec<f64> = t[o..o + 4].iter().map(|b| -(1.0 - w_pos) * 0.5 * sign * b).collect();
        grad[o..o + 4].copy_from_slice(&l2_normalize_backward(raw, &g_unit, DEFAULT_NORM_EPS));
    }
    Ok((w_pos * sq / POSE_WIDTH as f64 + (1.0 - w_pos) * 0.5 * orient, grad))
}

/// Orientation part of the loss for one pose pair: mean over arms of `1 − |⟨q̂, q⟩|`.
pub fn quaternion_loss(pred: &EndEffectorPose, truth: &EndEffectorPose) -> f64 {
    pred.arms
        .iter()
        .zip(&truth.arms)
        .map(|(a, b)| {
            let d: f64 = a.orientation.iter().zip(&b.orientation).map(|(x, y)| x * y).sum();
            1.0 - d.abs()
        })
        .sum::<f64>()
        / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseScope {
    Pooled,
    PerDemonstrator,
}

impl PoseScope {
    pub fn name(self) -> &'static str {
        match self {
            PoseScope::Pooled => "pooled",
            PoseScope::PerDemonstrator => "per_demonstrator",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseDecoderConfig {
    pub hidden: Vec<usize>,
    pub w_pos: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_grad_norm: f64,
}

impl Default for PoseDecoderConfig {
    fn default() -> Self {
        PoseDecoderConfig {
            hidden: DEFAULT_DECODER_HIDDEN.to_vec(),
            w_pos: DEFAULT_POSITION_WEIGHT,
            learning_rate: 1e-3,
            batch_size: 64,
            max_grad_norm: 10.0,
        }
    }
}

/// Feedforward regressor from an embedding to a two-arm pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseDecoder {
    mlp: MlpParams,
    w_pos: f64,
}

impl PoseDecoder {
    /// Glorot init with relu hidden layers; the output bias starts at `mean_target`.
    pub fn new(dim: usize, config: &PoseDecoderConfig, mean_target: &[f64], seed: u64) -> Result<Self> {
        let mut widths = vec![dim];
        widths.extend(&config.hidden);
        widths.push(POSE_WIDTH);
        let mut mlp = MlpParams::xavier(&widths, Activation::Relu, Activation::Identity, &mut seeded_rng(seed))?;
        if mean_target.len() != POSE_WIDTH {
            return Err(Error::shape("mean target must be a full pose"));
        }
        mlp.layers_mut().last_mut().expect("at least one layer").bias = mean_target.to_vec();
        Ok(PoseDecoder {
            mlp,
            w_pos: config.w_pos,
        })
    }

    pub fn params(&self) -> &MlpParams {
        &self.mlp
    }

    pub fn w_pos(&self) -> f64 {
        self.w_pos
    }

    pub fn predict_raw(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        mlp_predict(&self.mlp, embedding)
    }

    /// Pose with renormalized quaternions.
    pub fn predict(&self, embedding: &[f64]) -> Result<EndEffectorPose> {
        EndEffectorPose::from_raw(&self.predict_raw(embedding)?)
    }
}

/// One decoder for everybody, or one per demonstrator.
#[derive(Debug, Clone, PartialEq)]
pub enum PoseDecoders {
    Pooled(PoseDecoder),
    PerDemonstrator(BTreeMap<u32, PoseDecoder>),
}

impl PoseDecoders {
    pub fn scope(&self) -> PoseScope {
        match self {
            PoseDecoders::Pooled(_) => PoseScope::Pooled,
            PoseDecoders::PerDemonstrator(_) => PoseScope::PerDemonstrator,
        }
    }

    pub fn decoder_for(&self, demonstrator: u32) -> Option<&PoseDecoder> {
        match self {
            PoseDecoders::Pooled(d) => Some(d),
            PoseDecoders::PerDemonstrator(m) => m.get(&demonstrator),
        }
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new("pose");
        a.set_meta("scope", self.scope().name());
        let entries: Vec<(String, &PoseDecoder)> = match self {
            PoseDecoders::Pooled(d) => vec![("all".into(), d)],
            PoseDecoders::PerDemonstrator(m) => m.iter().map(|(k, d)| (k.to_string(), d)).collect(),
        };
        a.set_meta("decoders", entries.iter().map(|e| e.0.as_str()).collect::<Vec<_>>().join(","));
        for (name, d) in entries {
            a.put_mlp(&format!("decoder.{name}"), &d.mlp);
            a.put_vec(&format!("decoder.{name}.w_pos"), &[d.w_pos]);
        }
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_kind("pose")?;
        let read = |name: &str| -> Result<PoseDecoder> {
            Ok(PoseDecoder {
                mlp: a.mlp(&format!("decoder.{name}"))?,
                w_pos: a.vector(&format!("decoder.{name}.w_pos"))?.first().copied().unwrap_or(DEFAULT_POSITION_WEIGHT),
            })
        };
        match a.meta_str("scope")? {
            "pooled" => Ok(PoseDecoders::Pooled(read("all")?)),
            "per_demonstrator" => {
                let mut m = BTreeMap::new();
                for name in a.meta_str("decoders")?.split(',').filter(|s| !s.is_empty()) {
                    let id: u32 = name.parse().map_err(|_| Error::ModelInvalid(format!("bad decoder id `{name}`")))?;
                    m.insert(id, read(name)?);
                }
                Ok(PoseDecoders::PerDemonstrator(m))
            }
            other => Err(Error::ModelInvalid(format!("unknown pose scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoseTraining {
    pub decoders: PoseDecoders,
    /// Mean batch loss per optimizer step, per decoder in key order.
    pub loss_traces: Vec<Vec<f64>>,
}

fn fit_one(
    inputs: &[Vec<f64>],
    targets: &[EndEffectorPose],
    config: &PoseDecoderConfig,
    epochs: usize,
    seed: u64,
) -> Result<(PoseDecoder, Vec<f64>)> {
    let mut mean = vec![0.0; POSE_WIDTH];
    for t in targets {
        for (m, v) in mean.iter_mut().zip(t.to_vec()) {
            *m += v / targets.len() as f64;
        }
    }
    let mut dec = PoseDecoder::new(inputs[0].len(), config, &mean, seed)?;
    let mut theta = dec.mlp.flatten();
    let mut opt = OptimizerState::adam(theta.len(), config.learning_rate);
    let mut rng = seeded_rng(seed ^ 0x2545_f491_4f6c_dd1d);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut trace = Vec::new();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut grads = dec.mlp.zeros_like();
            let mut loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (out, cache) = mlp_forward(&dec.mlp, &inputs[i])?;
                let (l, g) = pose_loss(&out, &targets[i], dec.w_pos)?;
                loss += l * scale;
                let g: Vec<f64> = g.iter().map(|v| v * scale).collect();
                mlp_backward_acc(&dec.mlp, &cache, &g, &mut grads)?;
            }
            let mut flat = grads.flatten();
            clip_grad_norm(&mut flat, config.max_grad_norm);
            opt.update(&mut theta, &flat)?;
            dec.mlp.assign_flat(&theta)?;
            trace.push(loss);
        }
    }
    Ok((dec, trace))
}

/// Trains pose decoders on top of a frozen encoder. The encoder is only read.
pub fn train_pose_decoder(
    encoder: &Encoder,
    demos: &[Demonstration],
    scope: PoseScope,
    config: &PoseDecoderConfig,
    epochs: usize,
    seed: u64,
) -> Result<PoseTraining> {
    let mut groups: BTreeMap<u32, (Vec<Vec<f64>>, Vec<EndEffectorPose>)> = BTreeMap::new();
    for d in demos {
        let poses = d
            .poses()
            .ok_or_else(|| Error::InvalidArgument(format!("demo {} has no poses", d.id)))?;
        let key = match scope {
            PoseScope::Pooled => 0,
            PoseScope::PerDemonstrator => d.demonstrator,
        };
        let g = groups.entry(key).or_default();
        for (f, p) in d.frames().iter().zip(poses) {
            g.0.push(encoder.encode_values(&f.values)?);
            g.1.push(*p);
        }
    }
    if groups.values().all(|g| g.0.is_empty()) {
        return Err(Error::Empty("pose training set"));
    }
    let mut traces = Vec::new();
    let mut fitted = BTreeMap::new();
    for (key, (x, y)) in groups.iter().filter(|g| !g.1 .0.is_empty()) {
        let (dec, trace) = fit_one(x, y, config, epochs, seed.wrapping_add(*key as u64))?;
        fitted.insert(*key, dec);
        traces.push(trace);
    }
    let decoders = match scope {
        PoseScope::Pooled => PoseDecoders::Pooled(fitted.remove(&0).expect("pooled group")),
        PoseScope::PerDemonstrator => PoseDecoders::PerDemonstrator(fitted),
    };
    Ok(PoseTraining {
        decoders,
        loss_traces: traces,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseMetrics {
    /// Root mean squared Euclidean position error over both arms, in cm.
    pub rmse_position_cm: f64,
    pub median_quat_loss: f64,
    pub frames: usize,
}

/// Per-demo predictions, optionally with i.i.d. Gaussian noise of standard
/// deviation `noise_sigma` added to the input features before encoding.
pub fn decode_demos(
    decoders: &PoseDecoders,
    encoder: &Encoder,
    demos: &[Demonstration],
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<Vec<EndEffectorPose>>> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma {noise_sigma} must be non-negative")));
    }
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut rng = seeded_rng(seed);
    demos
        .iter()
        .map(|d| {
            let dec = decoders
                .decoder_for(d.demonstrator)
                .ok_or_else(|| Error::InvalidArgument(format!("no decoder for demonstrator {}", d.demonstrator)))?;
            d.frames()
                .iter()
                .map(|f| {
                    let emb = if noise_sigma > 0.0 {
                        let x: Vec<f64> = f.values.iter().map(|v| v + noise.sample(&mut rng)).collect();
                        encoder.encode_values(&x)?
                    } else {
                        encoder.encode_values(&f.values)?
                    };
                    dec.predict(&emb)
                })
                .collect()
        })
        .collect()
}

pub fn pose_metrics(pred: &[Vec<EndEffectorPose>], demos: &[Demonstration]) -> Result<PoseMetrics> {
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut quat = Vec::new();
    for (p, d) in pred.iter().zip(demos) {
        let truth = d
            .poses()
            .ok_or_else(|| Error::InvalidArgument(format!("demo {} has no poses", d.id)))?;
        if truth.len() != p.len() {
            return Err(Error::shape("prediction length differs from demo"));
        }
        for (a, b) in p.iter().zip(truth) {
            for (pa, pb) in a.arms.iter().zip(&b.arms) {
                sq += pa.position.iter().zip(&pb.position).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
                count += 1;
            }
            quat.push(quaternion_loss(a, b));
        }
    }
    if quat.is_empty() {
        return Err(Error::Empty("pose evaluation set"));
    }
    quat.sort_by(f64::total_cmp);
    let n = quat.len();
    let median = if n % 2 == 1 {
        quat[n / 2]
    } else {
        0.5 * (quat[n / 2 - 1] + quat[n / 2])
    };
    Ok(PoseMetrics {
        rmse_position_cm: (sq / count as f64).sqrt(),
        median_quat_loss: median,
        frames: n,
    })
}

/// Decodes `demos` and scores the result against their ground-truth poses.
pub fn eval_pose(
    decoders: &PoseDecoders,
    encoder: &Encoder,
    demos: &[Demonstration],
    noise_sigma: f64,
    seed: u64,
) -> Result<PoseMetrics> {
    if demos.is_empty() {
        return Err(Error::Empty("pose evaluation set"));
    }
    let pred = decode_demos(decoders, encoder, demos, noise_sigma, seed)?;
    pose_metrics(&pred, demos)
}

/// Plot-ready trajectory table: `demo_id,frame`, then the 16 pose values.
pub fn trajectory_csv(demos: &[Demonstration], poses: &[Vec<EndEffectorPose>]) -> String {
    let mut out = String::from("demo_id,frame");
    for arm in ["l", "r"] {
        for f in ["px", "py", "pz", "qw", "qx", "qy", "qz", "jaw"] {
            write!(out, ",{arm}_{f}").unwrap();
        }
    }
    out.push('\n');
    for (d, ps) in demos.iter().zip(poses) {
        for (t, p) in ps.iter().enumerate() {
            write!(out, "{},{t}", d.id).unwrap();
            for v in p.to_vec() {
                write!(out, ",{v:.12e}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}
