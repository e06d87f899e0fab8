//! Stratified k-fold, train/validation and leave-one-record-out splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

/// Stratified k-fold: each class is shuffled and dealt round-robin, with the
/// starting fold rotating between classes so fold sizes differ by at most one.
pub fn kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return invalid(format!("k-fold needs k >= 2, got {k}"));
    }
    if k > labels.len() {
        return invalid(format!("k = {k} exceeds the {} available trials", labels.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests = vec![Vec::new(); k];
    let mut next = 0;
    for (class, mut group) in by_class(labels).into_iter().enumerate() {
        if !group.is_empty() && group.len() < k {
            log::warn!("class {class} has {} trials for {k} folds; stratification is best effort", group.len());
        }
        group.shuffle(&mut rng);
        for i in group {
            tests[next].push(i);
            next = (next + 1) % k;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; labels.len()];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..labels.len()).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect())
}

/// Seeded stratified split; `val_fraction` of each class (rounded) goes to
/// validation. Classes with fewer than two samples stay in training.
pub fn stratified_split(labels: &[usize], val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return invalid(format!("validation fraction must be in [0, 1), got {val_fraction}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (class, mut group) in by_class(labels).into_iter().enumerate() {
        if group.len() < 2 {
            if !group.is_empty() {
                log::warn!("class {class} has a single sample; keeping it in the training split");
            }
            train.extend(group);
            continue;
        }
        group.shuffle(&mut rng);
        let n_val = ((group.len() as f64 * val_fraction).round() as usize).min(group.len() - 1);
        val.extend_from_slice(&group[..n_val]);
        train.extend_from_slice(&group[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordSplit {
    pub train: Vec<usize>,
    pub test: usize,
}

/// One split per seizure record: that record is held out, every other
/// record (seizure or not) trains.
pub fn leave_one_record_out(seizure: &[bool]) -> Result<Vec<RecordSplit>> {
    let held: Vec<usize> = (0..seizure.len()).filter(|&i| seizure[i]).collect();
    if held.len() < 2 {
        return invalid(format!("leave-one-record-out needs at least 2 seizure records, got {}", held.len()));
    }
    Ok(held
        .into_iter()
        .map(|test| RecordSplit { train: (0..seizure.len()).filter(|&i| i != test).collect(), test })
        .collect())
}
