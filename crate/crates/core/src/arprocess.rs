//! First-order autoregressive source: `X_t = alpha * X_{t-1} + xi_t`.
//!
//! Coordinates are independent. `X_0` is zero-mean with per-coordinate
//! variance `sigma2`, and innovations have per-coordinate variance
//! `sigma2 * (1 - alpha^2)`, so every `X_t` has variance `sigma2`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{norm_sq, Scalar};
use crate::seed::rng_from_seed;

/// Law of the (unit-variance) driving noise, scaled to the target variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
#[derive(Default)]
pub enum Innovation {
    #[default]
    Gaussian,
    /// Standard normal truncated to `[-c, c]` and rescaled to unit variance.
    TruncatedGaussian { c: f64 },
    /// Null process: `X_0 = 0` and every innovation is zero.
    Degenerate,
}

impl Innovation {
    fn validate(&self) -> Result<()> {
        match *self {
            Innovation::TruncatedGaussian { c } if !(c.is_finite() && c > 0.0) => Err(
                Error::invalid(format!("truncation point must be positive, got {c}")),
            ),
            _ => Ok(()),
        }
    }

    /// Variance of a standard normal conditioned on `|Z| <= c`.
    fn truncated_variance(c: f64) -> f64 {
        let mass = statrs::function::erf::erf(c / std::f64::consts::SQRT_2);
        let density = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
        1.0 - 2.0 * c * density / mass
    }

    /// One zero-mean, unit-variance draw.
    fn sample_unit<S: Scalar, R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> S {
        match *self {
            Innovation::Gaussian => S::sample_standard_normal(rng),
            Innovation::TruncatedGaussian { c } => loop {
                let z: f64 = f64::sample_standard_normal(rng);
                if z.abs() <= c {
                    return S::lit(z * scale);
                }
            },
            Innovation::Degenerate => S::zero(),
        }
    }

    fn unit_scale(&self) -> f64 {
        match *self {
            Innovation::TruncatedGaussian { c } => 1.0 / Self::truncated_variance(c).sqrt(),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ProcessParams<S: Scalar> {
    pub alpha: S,
    pub sigma2: S,
    pub n: usize,
    #[serde(default)]
    pub innovation: Innovation,
}

impl<S: Scalar> ProcessParams<S> {
    pub fn new(alpha: S, sigma2: S, n: usize, innovation: Innovation) -> Result<Self> {
        let params = ProcessParams {
            alpha,
            sigma2,
            n,
            innovation,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn gaussian(alpha: S, sigma2: S, n: usize) -> Result<Self> {
        Self::new(alpha, sigma2, n, Innovation::Gaussian)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > S::zero() && self.alpha < S::one()) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.sigma2 > S::zero() && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if self.n == 0 {
            return Err(Error::invalid("dimension n must be at least 1"));
        }
        self.innovation.validate()
    }

    /// Per-coordinate innovation variance `sigma2 * (1 - alpha^2)`.
    pub fn innovation_variance(&self) -> S {
        self.sigma2 * (S::one() - self.alpha * self.alpha)
    }
}

/// A realised path `X_0 .. X_{T-1}` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S: Scalar> {
    values: Vec<S>,
    horizon: usize,
    pub params: ProcessParams<S>,
    pub seed: u64,
}

impl<S: Scalar> Trajectory<S> {
    /// Wraps externally produced samples. `values.len()` must be `horizon * n`.
    pub fn from_values(params: ProcessParams<S>, values: Vec<S>, seed: u64) -> Result<Self> {
        params.validate()?;
        if values.is_empty() || !values.len().is_multiple_of(params.n) {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                got: values.len(),
            });
        }
        let horizon = values.len() / params.n;
        Ok(Trajectory {
            values,
            horizon,
            params,
            seed,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.params.n
    }

    pub fn row(&self, t: usize) -> &[S] {
        let n = self.params.n;
        &self.values[t * n..(t + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.values.chunks_exact(self.params.n)
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }
}

/// One AR(1) transition: `alpha * x + xi`.
pub fn step<S: Scalar>(x: &[S], xi: &[S], alpha: S) -> Result<Vec<S>> {
    if x.len() != xi.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: xi.len(),
        });
    }
    Ok(x.iter().zip(xi).map(|(&a, &b)| alpha * a + b).collect())
}

/// Draws a trajectory of length `horizon`. Replays exactly for a given seed.
pub fn generate<S: Scalar>(
    params: &ProcessParams<S>,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory<S>> {
    params.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let n = params.n;
    let law = params.innovation;
    let unit_scale = law.unit_scale();
    let state_sd = params.sigma2.sqrt();
    let innovation_sd = params.innovation_variance().sqrt();
    let mut rng = rng_from_seed(seed);

    let mut values = Vec::with_capacity(horizon * n);
    for _ in 0..n {
        values.push(state_sd * law.sample_unit::<S, _>(&mut rng, unit_scale));
    }
    let mut xi = vec![S::zero(); n];
    for t in 1..horizon {
        for v in xi.iter_mut() {
            *v = innovation_sd * law.sample_unit::<S, _>(&mut rng, unit_scale);
        }
        let next = step(&values[(t - 1) * n..t * n], &xi, params.alpha)?;
        values.extend_from_slice(&next);
    }
    Ok(Trajectory {
        values,
        horizon,
        params: params.clone(),
        seed,
    })
}

/// Samples taken every `s` steps, as `(k, X_{ks})`.
pub fn subsample<S: Scalar>(traj: &Trajectory<S>, s: usize) -> Result<Vec<(usize, &[S])>> {
    if s == 0 {
        return Err(Error::invalid("sampling period must be at least 1"));
    }
    Ok((0..traj.horizon())
        .step_by(s)
        .enumerate()
        .map(|(k, t)| (k, traj.row(t)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MomentEstimate<S: Scalar> {
    /// `max_t (1/n) sqrt(mean ||X_t||^4)`.
    pub kappa_hat: S,
    /// Mean per-coordinate second moment over all samples.
    pub variance_hat: S,
    /// Set when the expectation was taken over a single trial.
    pub high_variance: bool,
}

/// Estimates the fourth-moment bound across independent trials.
pub fn estimate_kappa<S: Scalar>(trials: &[Trajectory<S>]) -> Result<MomentEstimate<S>> {
    let first = trials
        .first()
        .ok_or_else(|| Error::invalid("at least one trajectory is required"))?;
    let n = first.dim();
    if let Some(bad) = trials.iter().find(|tr| tr.dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.dim(),
        });
    }
    let horizon = trials.iter().map(Trajectory::horizon).min().unwrap_or(0);
    let count = S::from_count(trials.len());
    let nn = S::from_count(n);

    let mut kappa = S::zero();
    let mut second = S::zero();
    for t in 0..horizon {
        let mut fourth = S::zero();
        for tr in trials {
            let sq = norm_sq(tr.row(t));
            fourth += sq * sq;
            second += sq;
        }
        kappa = kappa.max((fourth / count).sqrt() / nn);
    }
    let variance_hat = second / (count * nn * S::from_count(horizon));
    Ok(MomentEstimate {
        kappa_hat: kappa,
        variance_hat,
        high_variance: trials.len() == 1,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "")]
struct DumpSidecar<S: Scalar> {
    params: ProcessParams<S>,
    seed: u64,
    n: u32,
    horizon: u32,
}

/// Writes the binary dump (`u32 n`, `u32 T`, then row-major `f64`, all
/// little-endian) and a JSON sidecar next to it.
pub fn write_dump<S: Scalar>(
    traj: &Trajectory<S>,
    bin_path: &Path,
    sidecar_path: &Path,
) -> Result<()> {
    let n =
        u32::try_from(traj.dim()).map_err(|_| Error::invalid("dimension does not fit in u32"))?;
    let horizon =
        u32::try_from(traj.horizon()).map_err(|_| Error::invalid("horizon does not fit in u32"))?;
    let mut out = BufWriter::new(File::create(bin_path)?);
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&horizon.to_le_bytes())?;
    for v in traj.values() {
        out.write_all(&v.as_f64().to_le_bytes())?;
    }
    out.flush()?;

    let sidecar = DumpSidecar {
        params: traj.params.clone(),
        seed: traj.seed,
        n,
        horizon,
    };
    let mut side = BufWriter::new(File::create(sidecar_path)?);
    serde_json::to_writer_pretty(&mut side, &sidecar)?;
    side.write_all(b"\n")?;
    side.flush()?;
    Ok(())
}

/// Reads a binary dump back as `(n, T, values)`.
pub fn read_dump(bin_path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut input = BufReader::new(File::open(bin_path)?);
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let n = u32::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let horizon = u32::from_le_bytes(word) as usize;
    let mut values = Vec::with_capacity(n * horizon);
    let mut buf = [0u8; 8];
    for _ in 0..n * horizon {
        input.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok((n, horizon, values))
}
