//! Seeded train/validation/test partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;

pub const MIN_SPLIT_ITEMS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffles `items` and cuts it by `ratios = (train, val, test)`.
/// Validation and test sizes are rounded down; the remainder goes to train.
pub fn split_dataset<T: Clone>(items: &[T], ratios: [f64; 3], seed: u64) -> Result<Split<T>, TrainError> {
    validate_ratios(ratios)?;
    if items.len() < MIN_SPLIT_ITEMS {
        return Err(TrainError::TooFewGraphs {
            needed: MIN_SPLIT_ITEMS,
            found: items.len(),
        });
    }
    let n = items.len();
    let take = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let (n_val, n_test) = (take(ratios[1]), take(ratios[2]));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    let n_train = n - n_val - n_test;
    Ok(Split {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

pub(crate) fn validate_ratios(ratios: [f64; 3]) -> Result<(), TrainError> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(TrainError::Config(format!("split ratios {ratios:?} must be in [0, 1] and sum to 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_items() {
        let items: Vec<u32> = (0..10).collect();
        let s = split_dataset(&items, [0.7, 0.2, 0.1], 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 2, 1));
        assert_eq!(s, split_dataset(&items, [0.7, 0.2, 0.1], 3).unwrap());
        let mut all: Vec<u32> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
    }

    #[test]
    fn remainder_goes_to_train() {
        let items: Vec<u32> = (0..19).collect();
        let s = split_dataset(&items, [0.7, 0.2, 0.1], 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (15, 3, 1));
    }

    #[test]
    fn rejects_small_inputs_and_bad_ratios() {
        let items: Vec<u32> = (0..9).collect();
        assert!(matches!(
            split_dataset(&items, [0.7, 0.2, 0.1], 0),
            Err(TrainError::TooFewGraphs { .. })
        ));
        let items: Vec<u32> = (0..10).collect();
        assert!(split_dataset(&items, [0.7, 0.2, 0.2], 0).is_err());
    }
}
