use std::collections::BTreeMap;

use super::SegmentLabel;
use crate::error::{Error, Result};

/// Maps each hidden state to the label it most often co-occurs with on
/// labeled frames. States never seen on a labeled frame get the globally most
/// frequent label. Count ties go to the smaller label.
pub fn greedy_state_label_map(
    state_paths: &[Vec<usize>],
    labels: &[Vec<Option<SegmentLabel>>],
    num_states: usize,
) -> Result<Vec<SegmentLabel>> {
    if state_paths.len() != labels.len() {
        return Err(Error::shape("one label sequence per state path required"));
    }
    let mut counts: Vec<BTreeMap<SegmentLabel, usize>> = vec![BTreeMap::new(); num_states];
    let mut global: BTreeMap<SegmentLabel, usize> = BTreeMap::new();
    for (path, labs) in state_paths.iter().zip(labels) {
        if path.len() != labs.len() {
            return Err(Error::shape("state path and labels differ in length"));
        }
        for (&s, l) in path.iter().zip(labs) {
            if s >= num_states {
                return Err(Error::InvalidArgument(format!("state {s} outside 0..{num_states}")));
            }
            if let Some(l) = *l {
                *counts[s].entry(l).or_default() += 1;
                *global.entry(l).or_default() += 1;
            }
        }
    }
    let majority = |m: &BTreeMap<SegmentLabel, usize>| {
        m.iter()
            .fold(None, |best: Option<(SegmentLabel, usize)>, (&l, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((l, n)),
            })
            .map(|(l, _)| l)
    };
    let fallback = majority(&global).ok_or_else(|| Error::DegenerateDataset("no labeled frames to map states".into()))?;
    Ok(counts.iter().map(|m| majority(m).unwrap_or(fallback)).collect())
}
