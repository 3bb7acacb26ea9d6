use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Stream index separating validation-split randomness from other uses of a seed.
const SPLIT_STREAM: u64 = 0x5A11_7000;

/// Subject-grouped validation split: `ceil(fraction * n)` subjects (at least
/// one, at most `n - 1`) are held out. Both halves keep the input order.
pub fn make_validation_split(subjects: &[String], fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    let n = subjects.len();
    if n < 2 {
        return Err(Error::Data(format!(
            "validation split needs at least 2 training subjects, got {n}"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config("train.val_fraction_subjects", "must lie in (0, 1)"));
    }
    let n_val = ((fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[SPLIT_STREAM]));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (val, fit): (Vec<_>, Vec<_>) = subjects.iter().cloned().zip(is_val).partition(|(_, v)| *v);
    Ok((
        fit.into_iter().map(|(s, _)| s).collect(),
        val.into_iter().map(|(s, _)| s).collect(),
    ))
}
