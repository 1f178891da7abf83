use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::seeded_rng;

/// Leave-one-trial-out split: for each demonstrator, the trial at position
/// `held_out_index` (in ascending trial order) goes to the test set, every
/// other demonstration to the training set. Demonstration order is preserved.
pub fn split_leave_one_out(dataset: &Dataset, held_out_index: usize) -> Result<(Dataset, Dataset)> {
    let mut trials: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for d in &dataset.demos {
        trials.entry(d.demonstrator).or_default().push(d.trial);
    }
    let mut held_out = BTreeMap::new();
    for (demonstrator, mut ts) in trials {
        ts.sort_unstable();
        ts.dedup();
        let Some(&trial) = ts.get(held_out_index) else {
            return Err(Error::InvalidArgument(format!(
                "demonstrator {demonstrator} has {} trials, cannot hold out index {held_out_index}",
                ts.len()
            )));
        };
        held_out.insert(demonstrator, trial);
    }
    let (test, train): (Vec<_>, Vec<_>) = dataset
        .demos
        .iter()
        .cloned()
        .partition(|d| held_out[&d.demonstrator] == d.trial);
    Ok((dataset.with_demos(train), dataset.with_demos(test)))
}

/// Keeps the labels of `max(1, ⌊fraction · n⌋)` of the `n` labeled
/// demonstrations (seeded choice) and hides the rest. Features and poses are
/// untouched; hidden labels stay available to evaluation.
pub fn mask_labels(dataset: &Dataset, labeled_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "labeled fraction {labeled_fraction} outside (0, 1]"
        )));
    }
    let mut candidates: Vec<usize> = (0..dataset.demos.len())
        .filter(|&i| dataset.demos[i].is_labeled())
        .collect();
    let keep = ((labeled_fraction * candidates.len() as f64).floor() as usize)
        .max(1)
        .min(candidates.len());
    candidates.shuffle(&mut seeded_rng(seed));
    let mut out = dataset.clone();
    for &i in &candidates[keep..] {
        out.demos[i].hide_labels();
    }
    Ok(out)
}
