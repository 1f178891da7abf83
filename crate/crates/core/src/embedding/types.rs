use crate::seqmodels::SegmentLabel;

/// One observation: a precomputed per-frame feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub values: Vec<f64>,
    pub demo_id: u32,
    pub frame_index: usize,
    pub label: Option<SegmentLabel>,
}

/// A unit-norm embedding of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub demo_id: u32,
    pub frame_index: usize,
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

impl AsRef<[f64]> for FrameFeatures {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}
