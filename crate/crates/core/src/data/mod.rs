//! Demonstrations, datasets, the synthetic generator, on-disk format, splits
//! and segmentation metrics.

mod io;
mod metrics;
mod split;
mod synthetic;

pub use io::{load_dataset, save_dataset, MANIFEST_FILE};
pub use metrics::{confusion_matrix, segmentation_accuracy, ConfusionMatrix};
pub use split::{mask_labels, split_leave_one_out};
pub use synthetic::{generate_synthetic, PoseFunction, SyntheticConfig};

use std::collections::BTreeMap;

use crate::embedding::FrameFeatures;
use crate::error::{Error, Result};
use crate::imitation::EndEffectorPose;
use crate::seqmodels::SegmentLabel;

pub const DEFAULT_FRAME_RATE: f64 = 3.0;

/// One recorded demonstration.
///
/// Labels come in two flavours: training-visible labels stored on the frames,
/// and ground truth that was hidden by [`mask_labels`]. Only
/// [`Demonstration::evaluation_labels`] exposes the latter.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub id: u32,
    pub demonstrator: u32,
    /// Recording session within the demonstrator. Several demonstrations (camera
    /// views) may share a trial; splits never separate them.
    pub trial: u32,
    pub frame_rate: f64,
    frames: Vec<FrameFeatures>,
    hidden_labels: Option<Vec<SegmentLabel>>,
    poses: Option<Vec<EndEffectorPose>>,
}

impl Demonstration {
    pub fn new(
        id: u32,
        demonstrator: u32,
        trial: u32,
        features: Vec<Vec<f64>>,
        labels: Option<Vec<SegmentLabel>>,
        poses: Option<Vec<EndEffectorPose>>,
    ) -> Result<Self> {
        let t = features.len();
        if let Some(l) = &labels {
            if l.len() != t {
                return Err(Error::shape(format!(
                    "demo {id}: {} labels for {t} frames",
                    l.len()
                )));
            }
        }
        if let Some(p) = &poses {
            if p.len() != t {
                return Err(Error::shape(format!(
                    "demo {id}: {} poses for {t} frames",
                    p.len()
                )));
            }
        }
        let frames = features
            .into_iter()
            .enumerate()
            .map(|(i, values)| FrameFeatures {
                values,
                demo_id: id,
                frame_index: i,
                label: labels.as_ref().map(|l| l[i]),
            })
            .collect();
        Ok(Demonstration {
            id,
            demonstrator,
            trial,
            frame_rate: DEFAULT_FRAME_RATE,
            frames,
            hidden_labels: None,
            poses,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[FrameFeatures] {
        &self.frames
    }

    /// Feature rows, borrowed.
    pub fn features(&self) -> Vec<&[f64]> {
        self.frames.iter().map(|f| f.values.as_slice()).collect()
    }

    /// Labels visible to training, if this demonstration is labeled.
    pub fn training_labels(&self) -> Option<Vec<SegmentLabel>> {
        self.frames.iter().map(|f| f.label).collect()
    }

    pub fn is_labeled(&self) -> bool {
        !self.frames.is_empty() && self.frames.iter().all(|f| f.label.is_some())
    }

    /// Ground truth for scoring: visible labels, or the hidden ones after masking.
    pub fn evaluation_labels(&self) -> Option<Vec<SegmentLabel>> {
        self.training_labels().or_else(|| self.hidden_labels.clone())
    }

    pub fn poses(&self) -> Option<&[EndEffectorPose]> {
        self.poses.as_deref()
    }

    /// Moves visible labels into hidden ground truth.
    pub(crate) fn hide_labels(&mut self) {
        if let Some(labels) = self.training_labels() {
            self.hidden_labels = Some(labels);
        }
        for f in &mut self.frames {
            f.label = None;
        }
    }

    pub(crate) fn hidden_labels(&self) -> Option<&[SegmentLabel]> {
        self.hidden_labels.as_deref()
    }

    pub(crate) fn set_hidden_labels(&mut self, labels: Option<Vec<SegmentLabel>>) -> Result<()> {
        if let Some(l) = &labels {
            if l.len() != self.frames.len() {
                return Err(Error::shape("hidden labels do not align with frames"));
            }
        }
        self.hidden_labels = labels;
        Ok(())
    }

    /// Copy with every feature replaced by `f(frame_index, values)`.
    pub fn map_features<F>(&self, mut f: F) -> Demonstration
    where
        F: FnMut(usize, &[f64]) -> Vec<f64>,
    {
        let mut out = self.clone();
        for fr in &mut out.frames {
            fr.values = f(fr.frame_index, &fr.values);
        }
        out
    }
}

/// A collection of demonstrations sharing a feature width and class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub feature_width: usize,
    pub demos: Vec<Demonstration>,
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    pub fn new(classes: usize, feature_width: usize, demos: Vec<Demonstration>) -> Result<Self> {
        let ds = Dataset {
            classes,
            feature_width,
            demos,
            metadata: BTreeMap::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 1 {
            return Err(Error::InvalidArgument("class count must be positive".into()));
        }
        for d in &self.demos {
            for f in d.frames() {
                if f.values.len() != self.feature_width {
                    return Err(Error::shape(format!(
                        "demo {} frame {}: width {} but dataset width {}",
                        d.id,
                        f.frame_index,
                        f.values.len(),
                        self.feature_width
                    )));
                }
            }
            let labels = d
                .frames()
                .iter()
                .filter_map(|f| f.label)
                .chain(d.hidden_labels().unwrap_or(&[]).iter().copied());
            for l in labels {
                if l.index() >= self.classes {
                    return Err(Error::InvalidArgument(format!(
                        "demo {}: label {l} outside 1..={}",
                        d.id, self.classes
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        self.demos.iter().map(Demonstration::len).sum()
    }

    /// Sorted distinct demonstrator ids.
    pub fn demonstrators(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.demos.iter().map(|d| d.demonstrator).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn labeled(&self) -> impl Iterator<Item = &Demonstration> {
        self.demos.iter().filter(|d| d.is_labeled())
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = &Demonstration> {
        self.demos.iter().filter(|d| !d.is_labeled())
    }

    /// Same metadata and dimensions, different demonstrations.
    pub fn with_demos(&self, demos: Vec<Demonstration>) -> Dataset {
        Dataset {
            classes: self.classes,
            feature_width: self.feature_width,
            demos,
            metadata: self.metadata.clone(),
        }
    }
}
