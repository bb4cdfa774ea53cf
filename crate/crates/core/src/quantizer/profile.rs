//! Empirical `(theta, eps)` profiles of operational quantizers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::{Quantizer, QuantizerOutput};
use crate::scalar::{dist_sq, norm_sq, Scalar};
use crate::seed::{derive_seed, rng_from_seed};

/// Uniform draw on the unit sphere in `R^n` (normalised Gaussian).
pub fn sample_unit_sphere<S: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<S> {
    loop {
        let v: Vec<S> = (0..n).map(|_| S::sample_standard_normal(rng)).collect();
        let norm = norm_sq(&v).sqrt();
        if norm > S::zero() {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `shells` radii spread over `(0, sqrt(n) M]`, offset from multiples of
/// `sqrt(n) M / shells` by a quarter cell.
pub fn default_norm_grid<S: Scalar>(n: usize, range: S, shells: usize) -> Vec<S> {
    let top = S::from_count(n).sqrt() * range;
    (1..=shells)
        .map(|i| top * (S::from_count(i) - S::lit(0.25)) / S::from_count(shells))
        .collect()
}

/// [`default_norm_grid`] plus `shells` radii over `(0, sqrt(n) inner]`,
/// sorted. Tracking errors concentrate at small norms, where coarse gain
/// cells dominate, so a fit used for prediction must see that region.
pub fn tracking_norm_grid<S: Scalar>(n: usize, range: S, inner: S, shells: usize) -> Vec<S> {
    let mut grid = default_norm_grid(n, range, shells);
    grid.extend(default_norm_grid(n, inner.min(range), shells));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ShellStat<S: Scalar> {
    pub norm: S,
    pub mean_error: S,
    /// Standard error of `mean_error`.
    pub std_error: S,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ProfileFit<S: Scalar> {
    pub theta: S,
    pub eps: S,
    pub n: usize,
    pub shells: Vec<ShellStat<S>>,
    /// Only one shell was measured; `theta` is a slope through the origin.
    pub single_shell: bool,
}

impl<S: Scalar> ProfileFit<S> {
    /// `rho^2 theta + n eps^2`.
    pub fn bound(&self, norm: S) -> S {
        norm * norm * self.theta + S::from_count(self.n) * self.eps * self.eps
    }

    /// Shells whose mean error exceeds the bound by more than `k` standard errors.
    pub fn violations(&self, shells: &[ShellStat<S>], k: S) -> Vec<usize> {
        shells
            .iter()
            .enumerate()
            .filter(|(_, s)| s.mean_error > self.bound(s.norm) + k * s.std_error)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Mean squared error on each norm shell, `trials` uniform directions per shell.
pub fn measure_shells<S: Scalar>(
    q: &dyn Quantizer<S>,
    norm_grid: &[S],
    trials: usize,
    seed: u64,
) -> Result<Vec<ShellStat<S>>> {
    if trials < 2 {
        return Err(Error::invalid("at least two trials per shell are required"));
    }
    let n = q.dim();
    let top = S::from_count(n).sqrt() * q.dynamic_range();
    let slack = S::one() + S::lit(1e-12);
    let mut stats = Vec::with_capacity(norm_grid.len());
    for (i, &rho) in norm_grid.iter().enumerate() {
        if !(rho > S::zero() && rho <= top * slack) {
            return Err(Error::invalid(format!(
                "shell radius {rho} outside (0, {top}]"
            )));
        }
        let mut rng = rng_from_seed(derive_seed(seed, "shell", i as u64));
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut failures = 0;
        for _ in 0..trials {
            let y: Vec<S> = sample_unit_sphere::<S, _>(n, &mut rng)
                .into_iter()
                .map(|x| x * rho)
                .collect();
            let err = match q.quantize(&y)? {
                QuantizerOutput::Code { reconstruction, .. } => {
                    dist_sq(&y, &reconstruction).as_f64()
                }
                QuantizerOutput::Failure => {
                    failures += 1;
                    norm_sq(&y).as_f64()
                }
            };
            sum += err;
            sum_sq += err * err;
        }
        let count = trials as f64;
        let mean = sum / count;
        let var = ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0);
        stats.push(ShellStat {
            norm: rho,
            mean_error: S::lit(mean),
            std_error: S::lit((var / count).sqrt()),
            failures,
        });
    }
    Ok(stats)
}

/// Fits `d(rho) = theta rho^2 + n eps^2` to measured shell errors.
///
/// `theta` is the least-squares slope clamped to `[0, 1]`. The intercept
/// starts at the least-squares value for that slope and is then raised to
/// the largest shell residual, so the fitted line sits on or above every
/// measured shell mean.
pub fn profile_quantizer<S: Scalar>(
    q: &dyn Quantizer<S>,
    norm_grid: &[S],
    trials: usize,
    seed: u64,
) -> Result<ProfileFit<S>> {
    if norm_grid.is_empty() {
        return Err(Error::invalid("norm grid is empty"));
    }
    let shells = measure_shells(q, norm_grid, trials, seed)?;
    let n = q.dim();
    let xs: Vec<f64> = shells.iter().map(|s| s.norm.as_f64().powi(2)).collect();
    let ys: Vec<f64> = shells.iter().map(|s| s.mean_error.as_f64()).collect();

    let distinct = xs.iter().any(|&x| x != xs[0]);
    if !distinct {
        let theta = (ys.iter().sum::<f64>() / xs.iter().sum::<f64>()).clamp(0.0, 1.0);
        return Ok(ProfileFit {
            theta: S::lit(theta),
            eps: S::zero(),
            n,
            shells,
            single_shell: true,
        });
    }

    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let theta = (sxy / sxx).clamp(0.0, 1.0);
    let ls_intercept = my - theta * mx;
    let envelope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - theta * x)
        .fold(ls_intercept, f64::max)
        .max(0.0);
    let eps = (envelope / n as f64).sqrt();
    Ok(ProfileFit {
        theta: S::lit(theta),
        eps: S::lit(eps),
        n,
        shells,
        single_shell: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BenchRow<S: Scalar> {
    pub norm: S,
    pub mean_error: S,
    pub std_error: S,
    pub bound: S,
}

/// Fits a profile with `fit_seed`, then measures the same shells with the
/// independent `measure_seed` and reports each against the fitted bound.
pub fn bench_quantizer<S: Scalar>(
    q: &dyn Quantizer<S>,
    norm_grid: &[S],
    trials: usize,
    fit_seed: u64,
    measure_seed: u64,
) -> Result<(ProfileFit<S>, Vec<BenchRow<S>>)> {
    let fit = profile_quantizer(q, norm_grid, trials, fit_seed)?;
    let rows = measure_shells(q, norm_grid, trials, measure_seed)?
        .into_iter()
        .map(|s| BenchRow {
            norm: s.norm,
            mean_error: s.mean_error,
            std_error: s.std_error,
            bound: fit.bound(s.norm),
        })
        .collect();
    Ok((fit, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::{
        build_shape_codebook, GainShapeQuantizer, LosslessQuantizer, UniformVectorQuantizer,
    };

    #[test]
    fn unit_sphere_samples_are_unit() {
        let mut rng = rng_from_seed(1);
        for n in [1, 2, 7] {
            let v: Vec<f64> = sample_unit_sphere(n, &mut rng);
            assert!((norm_sq(&v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_is_inside_range() {
        let g = default_norm_grid(8, 2.0_f64, 8);
        assert_eq!(g.len(), 8);
        let top = 8f64.sqrt() * 2.0;
        assert!(g.iter().all(|&r| r > 0.0 && r <= top));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn lossless_profile_is_zero() {
        let q = LosslessQuantizer::<f64>::with_range(4, 2.0);
        let fit = profile_quantizer(&q, &default_norm_grid(4, 2.0, 5), 50, 3).unwrap();
        assert_eq!(fit.theta, 0.0);
        assert_eq!(fit.eps, 0.0);
    }

    #[test]
    fn uniform_profile_within_declared_eps() {
        let (n, m, r) = (4usize, 1.0_f64, 4u32);
        let q = UniformVectorQuantizer::new(n, m, r).unwrap();
        let fit = profile_quantizer(&q, &default_norm_grid(n, m, 8), 400, 5).unwrap();
        assert!(fit.theta < 0.01, "theta {}", fit.theta);
        let declared = n as f64 * m * m * 2f64.powi(-2 * r as i32);
        assert!(
            fit.eps * fit.eps <= declared,
            "{} > {declared}",
            fit.eps * fit.eps
        );
    }

    #[test]
    fn single_shell_is_flagged() {
        let q = UniformVectorQuantizer::new(2, 1.0_f64, 2).unwrap();
        let fit = profile_quantizer(&q, &[1.0], 100, 5).unwrap();
        assert!(fit.single_shell);
        assert_eq!(fit.eps, 0.0);
        assert!(fit.theta >= 0.0 && fit.theta <= 1.0);
    }

    #[test]
    fn grid_outside_range_rejected() {
        let q = UniformVectorQuantizer::new(2, 1.0_f64, 2).unwrap();
        assert!(profile_quantizer(&q, &[2.0], 10, 0).is_err());
        assert!(profile_quantizer(&q, &[0.0], 10, 0).is_err());
        assert!(profile_quantizer(&q, &[], 10, 0).is_err());
    }

    #[test]
    fn fitted_bound_envelopes_measured_shells() {
        let cb = build_shape_codebook::<f64>(6, 8, 4, 256, 20).unwrap();
        let q = GainShapeQuantizer::new(cb, 3.0, 3).unwrap();
        let fit = profile_quantizer(&q, &default_norm_grid(6, 3.0, 10), 200, 6).unwrap();
        assert!(fit.violations(&fit.shells, 0.0).is_empty());
    }
}
