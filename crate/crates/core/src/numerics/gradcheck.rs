//! Central finite-difference check of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// Loss value at a parameter setting together with the activation
/// fingerprint of the forward pass that produced it.
#[derive(Clone, Copy, Debug)]
pub struct Probe {
    pub loss: f64,
    pub signature: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Check at most this many randomly chosen coordinates per tensor.
    /// `None` checks every coordinate.
    pub coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            coords_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor, coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates whose ±step probes crossed a ReLU kink.
    pub skipped: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` gradients against `(f(θ+h) − f(θ−h)) / 2h`.
///
/// A coordinate is skipped when the activation fingerprint at either probe
/// differs from the unperturbed one: the loss is not differentiable across
/// that interval.
pub fn grad_check<E>(
    params: &[Tensor],
    analytic: &[Tensor],
    mut loss_fn: impl FnMut(&[Tensor]) -> Result<Probe, E>,
    options: GradCheckOptions,
) -> Result<GradCheckReport, E> {
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter tensor");
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let base = loss_fn(params)?;
    let mut work = params.to_vec();
    let mut report = GradCheckReport::default();
    let h = options.step;

    for (t, grad) in analytic.iter().enumerate() {
        assert_eq!(grad.shape(), params[t].shape(), "gradient shape for tensor {t}");
        let n = params[t].len();
        let coords: Vec<usize> = match options.coords_per_tensor {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for c in coords {
            let original = work[t].data()[c];
            work[t].data_mut()[c] = original + h;
            let plus = loss_fn(&work)?;
            work[t].data_mut()[c] = original - h;
            let minus = loss_fn(&work)?;
            work[t].data_mut()[c] = original;

            if plus.signature != base.signature || minus.signature != base.signature {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * h);
            let err = relative_error(grad.data()[c], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((t, c));
            }
        }
    }
    Ok(report)
}
