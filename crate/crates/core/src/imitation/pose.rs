use crate::error::{Error, Result};
use crate::numerics::{l2_normalize, DEFAULT_NORM_EPS};

/// Width of the flattened two-arm pose: per arm 3 position + 4 quaternion + 1 jaw.
pub const POSE_WIDTH: usize = 16;
pub const ARM_WIDTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPose {
    /// Centimeters.
    pub position: [f64; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub orientation: [f64; 4],
    /// Radians.
    pub jaw: f64,
}

/// Left and right end-effector poses at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndEffectorPose {
    pub arms: [ArmPose; 2],
}

impl EndEffectorPose {
    /// Layout: `[left pos(3), left quat(4), left jaw, right pos(3), right quat(4), right jaw]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(POSE_WIDTH);
        for arm in &self.arms {
            out.extend_from_slice(&arm.position);
            out.extend_from_slice(&arm.orientation);
            out.push(arm.jaw);
        }
        out
    }

    /// Parses the flat layout, requiring unit quaternions.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let pose = Self::from_slice_unchecked(v)?;
        for arm in &pose.arms {
            let n: f64 = arm.orientation.iter().map(|q| q * q).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "quaternion norm {n} is not 1"
                )));
            }
        }
        Ok(pose)
    }

    /// Parses the flat layout and renormalizes quaternions (degenerate ones become identity).
    pub fn from_raw(v: &[f64]) -> Result<Self> {
        let mut pose = Self::from_slice_unchecked(v)?;
        for arm in &mut pose.arms {
            let q = l2_normalize(&arm.orientation, DEFAULT_NORM_EPS);
            arm.orientation.copy_from_slice(&q);
        }
        Ok(pose)
    }

    fn from_slice_unchecked(v: &[f64]) -> Result<Self> {
        if v.len() != POSE_WIDTH {
            return Err(Error::shape(format!(
                "pose needs {POSE_WIDTH} values, got {}",
                v.len()
            )));
        }
        let arm = |o: usize| ArmPose {
            position: [v[o], v[o + 1], v[o + 2]],
            orientation: [v[o + 3], v[o + 4], v[o + 5], v[o + 6]],
            jaw: v[o + 7],
        };
        Ok(EndEffectorPose {
            arms: [arm(0), arm(ARM_WIDTH)],
        })
    }
}
