use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent random stream for one trial of a seeded experiment.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Train/test partition of one trial plus the order in which training points get labels.
///
/// The labeled set for a fraction is a prefix of `label_order`, so sets for larger
/// fractions contain those for smaller ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSplit {
    /// Indices into the full dataset, ascending.
    pub train: Vec<usize>,
    /// Indices into the full dataset, ascending.
    pub test: Vec<usize>,
    /// Positions within `train`, in labeling order.
    pub label_order: Vec<usize>,
    pub n_total: usize,
}

/// Number of labels for a fraction of the whole dataset, at least one.
pub fn label_count(fraction: f64, n_total: usize) -> usize {
    ((fraction * n_total as f64).round() as usize).max(1)
}

impl TrialSplit {
    pub fn new(n_total: usize, test_fraction: f64, seed: u64, trial: usize) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction", "must be in (0, 1)"));
        }
        let n_test = (test_fraction * n_total as f64).round() as usize;
        if n_test == 0 || n_test >= n_total {
            return Err(Error::invalid(
                "test_fraction",
                format!("leaves an empty train or test set for {n_total} points"),
            ));
        }
        let mut rng = trial_rng(seed, trial);
        let mut perm: Vec<usize> = (0..n_total).collect();
        perm.shuffle(&mut rng);
        let mut test = perm[..n_test].to_vec();
        let mut train = perm[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        let mut label_order: Vec<usize> = (0..train.len()).collect();
        label_order.shuffle(&mut rng);
        Ok(TrialSplit {
            train,
            test,
            label_order,
            n_total,
        })
    }

    /// Labeled positions within `train` for a fraction of the whole dataset.
    pub fn labeled(&self, fraction: f64) -> Result<&[usize]> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::invalid("label_fraction", "must be in (0, 1)"));
        }
        let n = label_count(fraction, self.n_total);
        if n > self.train.len() {
            return Err(Error::invalid(
                "label_fraction",
                format!("{n} labels exceed the {} training points", self.train.len()),
            ));
        }
        Ok(&self.label_order[..n])
    }
}

/// Validation folds over `n` labeled points: position `i` goes to fold `i % k`.
/// Falls back to leave-one-out when fewer than `k` points are available.
pub fn folds(n: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if n < 2 {
        return Err(Error::invalid(
            "labels",
            format!("cross-validation needs at least 2 labeled points, found {n}"),
        ));
    }
    let k = if n < k || k < 2 { n } else { k };
    Ok((0..k).map(|f| (f..n).step_by(k).collect()).collect())
}
