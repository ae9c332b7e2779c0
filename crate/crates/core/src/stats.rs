//! Time-series error bars: integrated autocorrelation times and batch means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Batches are at least this many integrated autocorrelation times long.
pub const BATCH_TAU_FACTOR: f64 = 20.0;
/// Fewer batches than this produces a warning on the estimate.
pub const MIN_BATCHES: usize = 30;
/// Window constant of the automatic windowing rule.
const WINDOW_C: f64 = 5.0;

/// Integrated autocorrelation time in samples, `1 + 2 sum_t rho(t)`, with the
/// self-consistent window `M >= 5 tau(M)`. White noise gives 1.
pub fn integrated_autocorr_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= WINDOW_C * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Mean of a (possibly multi-replica) series with a batch-means standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub tau: f64,
    pub batch_len: usize,
    pub batches: usize,
    pub warning: Option<String>,
}

/// Batch means with a fixed batch length, pooling complete batches of every replica.
pub fn batch_means(replicas: &[&[f64]], batch_len: usize) -> Result<BatchEstimate> {
    let batch_len = batch_len.max(1);
    let mut means = Vec::new();
    for series in replicas {
        for chunk in series.chunks_exact(batch_len) {
            means.push(chunk.iter().sum::<f64>() / batch_len as f64);
        }
    }
    let b = means.len();
    if b < 2 {
        return Err(Error::Insufficient(format!(
            "{b} batch(es) of length {batch_len}; need at least 2"
        )));
    }
    let mean = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    let warning = (b < MIN_BATCHES).then(|| format!("only {b} batches (< {MIN_BATCHES})"));
    Ok(BatchEstimate {
        mean,
        standard_error: (var / b as f64).sqrt(),
        tau: f64::NAN,
        batch_len,
        batches: b,
        warning,
    })
}

/// Batch means with batches of `ceil(20 tau)` samples, `tau` averaged over replicas.
pub fn auto_batch_means(replicas: &[&[f64]]) -> Result<BatchEstimate> {
    if replicas.is_empty() {
        return Err(Error::Insufficient("no series".into()));
    }
    let tau = replicas.iter().map(|s| integrated_autocorr_time(s)).sum::<f64>() / replicas.len() as f64;
    let batch_len = (BATCH_TAU_FACTOR * tau).ceil() as usize;
    let mut est = batch_means(replicas, batch_len)?;
    est.tau = tau;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        let s = (1.0 - phi * phi).sqrt();
        (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + s * z;
                x
            })
            .collect()
    }

    #[test]
    fn white_noise_has_unit_tau() {
        let v = ar1(0.0, 100_000, 1);
        let tau = integrated_autocorr_time(&v);
        assert!((tau - 1.0).abs() < 0.05, "{tau}");
    }

    #[test]
    fn ar1_tau_matches_closed_form() {
        // tau = (1 + phi) / (1 - phi)
        let v = ar1(0.8, 400_000, 2);
        let tau = integrated_autocorr_time(&v);
        assert!((tau - 9.0).abs() < 0.6, "{tau}");
    }

    #[test]
    fn batch_standard_error_covers_ar1_mean() {
        // standard error of the mean of an AR(1) is sqrt(tau / N)
        let v = ar1(0.8, 400_000, 3);
        let est = auto_batch_means(&[&v]).unwrap();
        let expected = (9.0f64 / 400_000.0).sqrt();
        assert!((est.standard_error / expected - 1.0).abs() < 0.25, "{est:?}");
        assert!(est.batch_len >= 170);
        assert!(est.warning.is_none());
    }

    #[test]
    fn pooled_replicas_and_warnings() {
        let a = ar1(0.0, 100, 4);
        let b = ar1(0.0, 100, 5);
        let est = batch_means(&[&a, &b], 10).unwrap();
        assert_eq!(est.batches, 20);
        assert!(est.warning.is_some());
        assert!(batch_means(&[&a[..5]], 10).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let est = batch_means(&[&c], 1).unwrap();
        assert!((est.mean - 0.5).abs() < 4.0 * est.standard_error);
    }
}
