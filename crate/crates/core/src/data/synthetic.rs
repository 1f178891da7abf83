//! Suturing-like synthetic demonstrations.
//!
//! Every demonstration walks the classes `1..=C` in order, `cycles` times.
//! Segment lengths are `1 + Poisson(mean_c − 1)`, so each class's expected
//! duration is exactly its configured mean.
//!
//! Feature vectors are laid out as three blocks:
//!
//! * `signal_dims` coordinates carry the class prototype, a within-segment
//!   motion direction scaled by the segment phase, and a small per-demonstrator
//!   style offset;
//! * `nuisance_dims` coordinates carry a per-demonstration offset (camera and
//!   lighting stand-in) and a slow sinusoidal drift, both larger in variance
//!   than the class signal;
//! * the remaining coordinates are noise only.
//!
//! Isotropic Gaussian noise of `noise_sigma` is added everywhere. Poses are a
//! smooth closed-form function of the cycle progress `s = (c − 1 + phase) / C`
//! plus a per-demonstrator offset.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{Dataset, Demonstration};
use crate::error::{Error, Result};
use crate::imitation::{ArmPose, EndEffectorPose};
use crate::numerics::{seeded_rng, SeededRng};
use crate::seqmodels::{SegmentLabel, DEFAULT_CLASSES};

/// Parameters of the ground-truth pose function.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFunction {
    /// Radius of the circular position path, in cm.
    pub amplitude_cm: f64,
    /// Standard deviation of the per-demonstrator position offset, in cm.
    pub demonstrator_offset_cm: f64,
    /// Amplitude of the orientation angle swing, in radians.
    pub orientation_swing: f64,
    /// Standard deviation of the per-demonstrator orientation angle offset.
    pub demonstrator_angle: f64,
    /// Amplitude of the jaw angle swing, in radians.
    pub jaw_swing: f64,
}

impl Default for PoseFunction {
    fn default() -> Self {
        PoseFunction {
            amplitude_cm: 1.0,
            demonstrator_offset_cm: 0.4,
            orientation_swing: 0.5,
            demonstrator_angle: 0.15,
            jaw_swing: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub demonstrators: usize,
    pub demos_per_demonstrator: usize,
    pub classes: usize,
    pub feature_width: usize,
    pub signal_dims: usize,
    pub nuisance_dims: usize,
    /// Passes through the class cycle per demonstration.
    pub cycles: usize,
    /// Mean segment duration per class, in frames. Empty means the default pattern.
    pub mean_durations: Vec<f64>,
    pub class_scale: f64,
    pub motion_scale: f64,
    /// Scales every demonstrator- and demonstration-level variation
    /// (style offsets, view offsets, drift).
    pub style_scale: f64,
    pub noise_sigma: f64,
    pub pose: PoseFunction,
    pub frame_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            demonstrators: 8,
            demos_per_demonstrator: 5,
            classes: DEFAULT_CLASSES,
            feature_width: 64,
            signal_dims: 16,
            nuisance_dims: 24,
            cycles: 2,
            mean_durations: Vec::new(),
            class_scale: 1.0,
            motion_scale: 0.8,
            style_scale: 1.0,
            noise_sigma: 0.6,
            pose: PoseFunction::default(),
            frame_rate: super::DEFAULT_FRAME_RATE,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Per-class mean durations, filling in the default pattern when unset.
    pub fn durations(&self) -> Vec<f64> {
        if self.mean_durations.is_empty() {
            (0..self.classes).map(|c| 9.0 + ((3 * c) % 8) as f64).collect()
        } else {
            self.mean_durations.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.classes < 2 {
            return bad("synthetic data needs at least 2 classes");
        }
        if self.demonstrators == 0 || self.demos_per_demonstrator == 0 || self.cycles == 0 {
            return bad("demonstrators, demos per demonstrator and cycles must be positive");
        }
        if self.signal_dims == 0 || self.signal_dims + self.nuisance_dims > self.feature_width {
            return bad("signal_dims + nuisance_dims must fit in feature_width, signal_dims > 0");
        }
        let d = self.durations();
        if d.len() != self.classes {
            return bad("mean_durations must list one value per class");
        }
        if d.iter().any(|&m| !(m >= 1.0)) {
            return bad("mean durations must be at least 1 frame");
        }
        if [self.class_scale, self.motion_scale, self.style_scale, self.noise_sigma]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return bad("scales and noise must be non-negative");
        }
        if !(self.frame_rate > 0.0) {
            return bad("frame rate must be positive");
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut SeededRng, len: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; len];
    }
    let n = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    (0..len).map(|_| n.sample(rng)).collect()
}

struct ArmFrame {
    center: [f64; 3],
    axis: [f64; 3],
    base_angle: f64,
    phase_shift: f64,
}

fn arm_pose(
    arm: &ArmFrame,
    pose: &PoseFunction,
    progress: f64,
    offset: &[f64],
    angle_offset: f64,
) -> ArmPose {
    let w = 2.0 * PI * progress + arm.phase_shift;
    let a = pose.amplitude_cm;
    let position = [
        arm.center[0] + a * w.cos() + offset[0],
        arm.center[1] + a * w.sin() + offset[1],
        arm.center[2] + 0.5 * a * (2.0 * w).sin() + offset[2],
    ];
    let theta = arm.base_angle + pose.orientation_swing * w.sin() + angle_offset;
    let (s, c) = (0.5 * theta).sin_cos();
    ArmPose {
        position,
        orientation: [c, s * arm.axis[0], s * arm.axis[1], s * arm.axis[2]],
        jaw: 0.4 + pose.jaw_swing * (2.0 * w).sin(),
    }
}

/// Generates a dataset of `demonstrators × demos_per_demonstrator` labeled
/// demonstrations with poses. Identical configs give identical datasets.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = seeded_rng(config.seed);
    let f = config.feature_width;
    let sig = config.signal_dims;
    let nui = config.nuisance_dims;
    let style = config.style_scale;
    let durations = config.durations();

    let embed_signal = |v: Vec<f64>| {
        let mut full = vec![0.0; f];
        full[..sig].copy_from_slice(&v);
        full
    };
    let prototypes: Vec<Vec<f64>> = (0..config.classes)
        .map(|_| embed_signal(gaussian_vec(&mut rng, sig, config.class_scale)))
        .collect();
    let motions: Vec<Vec<f64>> = (0..config.classes)
        .map(|_| embed_signal(gaussian_vec(&mut rng, sig, config.motion_scale)))
        .collect();

    let arms = [
        ArmFrame {
            center: [-4.0, 0.0, 10.0],
            axis: [0.0, 0.6, 0.8],
            base_angle: 0.8,
            phase_shift: 0.0,
        },
        ArmFrame {
            center: [4.0, 0.0, 10.0],
            axis: [0.6, 0.0, 0.8],
            base_angle: -0.6,
            phase_shift: 0.5 * PI,
        },
    ];

    let mut demos = Vec::new();
    for m in 0..config.demonstrators {
        let style_offset = gaussian_vec(&mut rng, f, 0.3 * style);
        let pose_offsets: Vec<Vec<f64>> = (0..2)
            .map(|_| gaussian_vec(&mut rng, 3, config.pose.demonstrator_offset_cm))
            .collect();
        let angle_offsets = gaussian_vec(&mut rng, 2, config.pose.demonstrator_angle);

        for k in 0..config.demos_per_demonstrator {
            let id = (m * config.demos_per_demonstrator + k) as u32;
            let mut view = vec![0.0; f];
            view[sig..sig + nui].copy_from_slice(&gaussian_vec(&mut rng, nui, 1.5 * style));
            let mut drift_dir = vec![0.0; f];
            drift_dir[sig..sig + nui].copy_from_slice(&gaussian_vec(&mut rng, nui, style));
            let drift_phase = rng.random_range(0.0..2.0 * PI);

            // segment layout
            let mut labels = Vec::new();
            let mut phases = Vec::new();
            for _ in 0..config.cycles {
                for (c, &mean) in durations.iter().enumerate() {
                    let extra = if mean > 1.0 {
                        Poisson::new(mean - 1.0)
                            .map_err(|e| Error::InvalidArgument(e.to_string()))?
                            .sample(&mut rng) as usize
                    } else {
                        0
                    };
                    let len = 1 + extra;
                    for j in 0..len {
                        labels.push(SegmentLabel::from_index(c));
                        phases.push((j as f64 + 0.5) / len as f64);
                    }
                }
            }
            let t_total = labels.len();

            let mut features = Vec::with_capacity(t_total);
            let mut poses = Vec::with_capacity(t_total);
            for t in 0..t_total {
                let c = labels[t].index();
                let phase = phases[t];
                let drift = (2.0 * PI * t as f64 / t_total as f64 + drift_phase).sin();
                let noise = gaussian_vec(&mut rng, f, config.noise_sigma);
                let x: Vec<f64> = (0..f)
                    .map(|i| {
                        prototypes[c][i]
                            + (phase - 0.5) * motions[c][i]
                            + style_offset[i] * (i < sig) as u8 as f64
                            + view[i]
                            + drift * drift_dir[i]
                            + noise[i]
                    })
                    .collect();
                features.push(x);

                let progress = (c as f64 + phase) / config.classes as f64;
                let arm_poses = [0, 1].map(|a| {
                    arm_pose(&arms[a], &config.pose, progress, &pose_offsets[a], angle_offsets[a])
                });
                poses.push(EndEffectorPose { arms: arm_poses });
            }

            let mut demo = Demonstration::new(
                id,
                m as u32,
                k as u32,
                features,
                Some(labels),
                Some(poses),
            )?;
            demo.frame_rate = config.frame_rate;
            demos.push(demo);
        }
    }

    let mut ds = Dataset::new(config.classes, f, demos)?;
    ds.metadata.insert("source".into(), "synthetic".into());
    ds.metadata.insert("seed".into(), config.seed.to_string());
    Ok(ds)
}
