//! Day-split cross-validation folds.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajtensor_datagen::MctfSample;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    folds: usize,
    assignment: BTreeMap<usize, usize>,
}

impl FoldPlan {
    /// Assigns days to folds: the sorted distinct days are shuffled with
    /// `seed` and dealt round-robin, so each fold tests ⌊d/f⌋ or ⌈d/f⌉ days.
    pub fn new(days: &[usize], folds: usize, seed: u64) -> Result<Self> {
        let mut days = days.to_vec();
        days.sort_unstable();
        days.dedup();
        if folds < 2 {
            return Err(HarnessError::Config("cross-validation needs at least 2 folds".into()));
        }
        if days.len() < folds {
            return Err(HarnessError::Config(format!(
                "{} distinct days cannot fill {folds} day-disjoint folds",
                days.len()
            )));
        }
        days.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let assignment = days.iter().enumerate().map(|(i, &d)| (d, i % folds)).collect();
        Ok(Self { folds, assignment })
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn fold_of(&self, day: usize) -> Option<usize> {
        self.assignment.get(&day).copied()
    }

    pub fn test_days(&self, fold: usize) -> Vec<usize> {
        self.assignment.iter().filter(|(_, &f)| f == fold).map(|(&d, _)| d).collect()
    }

    pub fn train_days(&self, fold: usize) -> Vec<usize> {
        self.assignment.iter().filter(|(_, &f)| f != fold).map(|(&d, _)| d).collect()
    }

    /// Sample indices `(train, test)` for `fold`.
    pub fn split(&self, samples: &[MctfSample], fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            match self.fold_of(s.day) {
                Some(f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => {}
            }
        }
        (train, test)
    }
}

/// Splits `indices` into `(fit, validation)` with a seeded shuffle. The
/// validation share is rounded, and kept non-empty when `fraction > 0` and
/// at least two indices are available.
pub fn validation_split(indices: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_val = (indices.len() as f64 * fraction).round() as usize;
    if fraction > 0.0 && n_val == 0 && indices.len() >= 2 {
        n_val = 1;
    }
    let val = shuffled.split_off(indices.len() - n_val);
    shuffled.sort_unstable();
    let mut val = val;
    val.sort_unstable();
    (shuffled, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_days_give_two_test_days_per_fold() {
        let days: Vec<usize> = (0..10).collect();
        let plan = FoldPlan::new(&days, 5, 3).unwrap();
        let mut seen = Vec::new();
        for f in 0..5 {
            let test = plan.test_days(f);
            assert_eq!(test.len(), 2);
            let train = plan.train_days(f);
            assert_eq!(train.len(), 8);
            assert!(test.iter().all(|d| !train.contains(d)));
            seen.extend(test);
        }
        seen.sort_unstable();
        assert_eq!(seen, days);
    }

    #[test]
    fn input_order_does_not_matter() {
        let a = FoldPlan::new(&[0, 1, 2, 3, 4, 5, 6], 5, 9).unwrap();
        let b = FoldPlan::new(&[6, 3, 5, 0, 2, 1, 4, 4], 5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_days_is_a_config_error() {
        assert!(matches!(FoldPlan::new(&[0, 1, 2, 3], 5, 0), Err(HarnessError::Config(_))));
    }

    #[test]
    fn validation_split_sizes() {
        let idx: Vec<usize> = (0..50).collect();
        let (fit, val) = validation_split(&idx, 0.1, 1);
        assert_eq!((fit.len(), val.len()), (45, 5));
        assert!(val.iter().all(|i| !fit.contains(i)));
        assert_eq!(validation_split(&[4, 7], 0.1, 1).1.len(), 1);
        assert!(validation_split(&[4, 7], 0.0, 1).1.is_empty());
        assert!(validation_split(&[4], 0.1, 1).1.is_empty());
    }
}
