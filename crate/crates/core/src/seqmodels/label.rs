use std::fmt;

use crate::error::{Error, Result};

/// A 1-based segment label `z ∈ {1..C}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentLabel(u16);

pub const DEFAULT_CLASSES: usize = 11;

impl SegmentLabel {
    pub fn new(value: u16) -> Option<Self> {
        (value >= 1).then_some(SegmentLabel(value))
    }

    /// Validates `value` against a class count.
    pub fn checked(value: i64, classes: usize) -> Result<Self> {
        if value < 1 || value as usize > classes {
            return Err(Error::InvalidArgument(format!(
                "label {value} outside 1..={classes}"
            )));
        }
        Ok(SegmentLabel(value as u16))
    }

    /// Label for a 0-based class index.
    pub fn from_index(index: usize) -> Self {
        SegmentLabel(index as u16 + 1)
    }

    pub fn get(self) -> u16 {
        self.0
    }

    /// 0-based class index.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for SegmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
