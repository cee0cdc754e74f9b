use rand::seq::SliceRandom;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Shuffles sample indices with `seed` and cuts them into train/val/test.
///
/// Sizes are `round(N·train)` and `round(N·val)` (clamped to what remains),
/// with the remainder going to test.
pub fn split_dataset(
    ds: LabeledDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<LabeledDataset> {
    let (tr, va, te) = fractions;
    let valid = [tr, va, te].iter().all(|f| f.is_finite() && (0.0..=1.0).contains(f))
        && (tr + va + te - 1.0).abs() <= 1e-9;
    if !valid {
        return Err(Error::InvalidFractions(fractions));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(seed));
    let n_train = ((n as f64 * tr).round() as usize).min(n);
    let n_val = ((n as f64 * va).round() as usize).min(n - n_train);
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    ds.with_split(Split {
        train: order,
        val,
        test,
    })
}
