//! Seeded inverted dropout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NumericsError, Tensor};

/// Mask whose entries are 0 with probability `p` and `1/(1-p)` otherwise.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, seed: u64) -> Result<Tensor, NumericsError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NumericsError::InvalidProbability(p));
    }
    let keep = 1.0 / (1.0 - p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    Tensor::from_vec(rows, cols, data)
}

/// Applies dropout outside of a tape. In eval mode (`training == false`) the
/// input is returned unchanged.
pub fn dropout(x: &Tensor, p: f64, seed: u64, training: bool) -> Result<Tensor, NumericsError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NumericsError::InvalidProbability(p));
    }
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.rows(), x.cols(), p, seed)?;
    let data = x.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
    Tensor::from_vec(x.rows(), x.cols(), data)
}
