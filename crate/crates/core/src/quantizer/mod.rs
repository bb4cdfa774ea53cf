//! Vector quantizers with a dynamic range and an explicit failure symbol.
//!
//! A quantizer maps `y` in `R^n` to a fixed number of bits. Inputs with
//! `||y||^2 > n M^2` are outside the dynamic range `M` and yield
//! [`QuantizerOutput::Failure`]. The analytic error model is
//! `E||y - Q(y)||^2 <= ||y||^2 theta + n eps^2`, captured by
//! [`QuantizerProfile`] or measured with [`profile_quantizer`].

mod gain_shape;
mod profile;
mod shape;
mod uniform;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{norm_sq, Scalar};

pub use gain_shape::{gain_shape_quantize, quantize_gain, GainShapeQuantizer};
pub use profile::{
    bench_quantizer, default_norm_grid, measure_shells, profile_quantizer, sample_unit_sphere,
    tracking_norm_grid, BenchRow, ProfileFit, ShellStat,
};
pub use shape::{
    build_shape_codebook, read_codebook, write_codebook, ShapeCodebook, DEFAULT_CODEBOOK_CAP_BITS,
};
pub use uniform::{uniform_vector_quantize, UniformVectorQuantizer};

/// Big-endian bit string carried over the channel.
pub type Bits = BitVec<u64, Msb0>;
pub type BitsRef = BitSlice<u64, Msb0>;

/// Appends the low `width` bits of `value`, most significant first.
pub fn push_uint(bits: &mut Bits, value: u64, width: usize) {
    debug_assert!(width <= 64);
    for i in (0..width).rev() {
        bits.push((value >> i) & 1 == 1);
    }
}

/// Reads an unsigned integer stored most significant bit first.
pub fn read_uint(bits: &BitsRef) -> u64 {
    debug_assert!(bits.len() <= 64);
    bits.iter().fold(0u64, |acc, b| (acc << 1) | u64::from(*b))
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantizerOutput<S: Scalar> {
    Code {
        bits: Bits,
        reconstruction: Vec<S>,
    },
    /// Input outside the dynamic range.
    Failure,
}

impl<S: Scalar> QuantizerOutput<S> {
    pub fn is_failure(&self) -> bool {
        matches!(self, QuantizerOutput::Failure)
    }

    pub fn reconstruction(&self) -> Option<&[S]> {
        match self {
            QuantizerOutput::Code { reconstruction, .. } => Some(reconstruction),
            QuantizerOutput::Failure => None,
        }
    }
}

/// A fixed-rate quantizer whose randomness (if any) is baked in at
/// construction, so encoder and decoder copies built from the same seed agree.
pub trait Quantizer<S: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// Length of every emitted code.
    fn bits(&self) -> usize;

    fn dynamic_range(&self) -> S;

    fn quantize(&self, y: &[S]) -> Result<QuantizerOutput<S>>;

    /// Decodes a code produced by [`Quantizer::quantize`].
    fn reconstruct(&self, code: &BitsRef) -> Result<Vec<S>>;

    /// Analytic error model, when one is known.
    fn declared_profile(&self) -> Option<QuantizerProfile<S>> {
        None
    }

    /// `||y||^2 <= n M^2`.
    fn in_range(&self, y: &[S]) -> bool {
        let m = self.dynamic_range();
        norm_sq(y) <= S::from_count(self.dim()) * m * m
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_code_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::contract(format!(
            "code has {got} bits, expected {expected}"
        )));
    }
    Ok(())
}

/// Sends the raw IEEE-754 words of every coordinate. Exact up to the
/// dynamic range, at `n * S::RAW_BITS` bits.
#[derive(Debug, Clone)]
pub struct LosslessQuantizer<S: Scalar> {
    n: usize,
    range: S,
}

impl<S: Scalar> LosslessQuantizer<S> {
    /// Unbounded dynamic range: never fails.
    pub fn new(n: usize) -> Self {
        LosslessQuantizer {
            n,
            range: S::infinity(),
        }
    }

    pub fn with_range(n: usize, range: S) -> Self {
        LosslessQuantizer { n, range }
    }
}

impl<S: Scalar> Quantizer<S> for LosslessQuantizer<S> {
    fn dim(&self) -> usize {
        self.n
    }

    fn bits(&self) -> usize {
        self.n * S::RAW_BITS
    }

    fn dynamic_range(&self) -> S {
        self.range
    }

    fn quantize(&self, y: &[S]) -> Result<QuantizerOutput<S>> {
        check_dim(self.n, y.len())?;
        if !self.in_range(y) {
            return Ok(QuantizerOutput::Failure);
        }
        let mut bits = Bits::with_capacity(self.bits());
        for v in y {
            push_uint(&mut bits, v.to_raw_bits(), S::RAW_BITS);
        }
        Ok(QuantizerOutput::Code {
            bits,
            reconstruction: y.to_vec(),
        })
    }

    fn reconstruct(&self, code: &BitsRef) -> Result<Vec<S>> {
        check_code_len(self.bits(), code.len())?;
        Ok(code
            .chunks_exact(S::RAW_BITS)
            .map(|w| S::from_raw_bits(read_uint(w)))
            .collect())
    }

    fn declared_profile(&self) -> Option<QuantizerProfile<S>> {
        Some(QuantizerProfile::Fixed {
            theta: S::zero(),
            eps: S::zero(),
        })
    }
}

/// Analytic `(theta(R), eps)` description of a quantizer family, with `R`
/// the rate in bits per dimension of one quantization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", bound = "")]
pub enum QuantizerProfile<S: Scalar> {
    /// `theta(R) = 2^{-2R}`, `eps = 0`.
    Ideal,
    /// Coordinate-wise uniform quantizer of `[-M sqrt(n), M sqrt(n)]`:
    /// `theta = 0`, `eps^2 = n M^2 2^{-2R}`.
    UniformScalar { n: usize, range: S },
    /// Gain-shape with an ideal shape quantizer and `gain_bits` of a uniform
    /// gain: `theta(R) = 2^{-2(R - l/n) + 1}` (capped at 1),
    /// `eps^2 = M^2 2^{-2l-1}`.
    GainShape { n: usize, range: S, gain_bits: u32 },
    /// Rate-independent constants, e.g. a measured profile.
    Fixed { theta: S, eps: S },
}

impl<S: Scalar> QuantizerProfile<S> {
    pub fn theta(&self, rate: S) -> S {
        let two = S::lit(2.0);
        match *self {
            QuantizerProfile::Ideal => two.powf(-two * rate),
            QuantizerProfile::UniformScalar { .. } => S::zero(),
            QuantizerProfile::GainShape { n, gain_bits, .. } => {
                let shape_rate = rate - S::lit(f64::from(gain_bits)) / S::from_count(n);
                two.powf(-two * shape_rate + S::one()).min(S::one())
            }
            QuantizerProfile::Fixed { theta, .. } => theta,
        }
    }

    /// `eps^2` at the given rate.
    pub fn eps2(&self, rate: S) -> S {
        let two = S::lit(2.0);
        match *self {
            QuantizerProfile::Ideal => S::zero(),
            QuantizerProfile::UniformScalar { n, range } => {
                S::from_count(n) * range * range * two.powf(-two * rate)
            }
            QuantizerProfile::GainShape {
                range, gain_bits, ..
            } => range * range * two.powf(-two * S::lit(f64::from(gain_bits)) - S::one()),
            QuantizerProfile::Fixed { eps, .. } => eps * eps,
        }
    }

    /// Right-hand side of the error model for an input of squared norm `norm2`.
    pub fn bound(&self, rate: S, norm2: S, n: usize) -> S {
        norm2 * self.theta(rate) + S::from_count(n) * self.eps2(rate)
    }
}

/// Operational quantizer selection used by the experiment harness and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QuantizerSpec {
    /// Raw floating-point words; needs at least 64 bits per coordinate.
    Lossless,
    /// Coordinate-wise uniform; `range` is `M` in units of sigma.
    Uniform { range: f64 },
    /// Uniform gain plus random spherical shape codebook; `range` is `M` in
    /// units of sigma. Shape bits are whatever remains of the budget.
    GainShape { range: f64, gain_bits: u32 },
}

impl QuantizerSpec {
    pub fn label(&self) -> String {
        match self {
            QuantizerSpec::Lossless => "lossless".to_string(),
            QuantizerSpec::Uniform { range } => format!("uniform(M={range})"),
            QuantizerSpec::GainShape { range, gain_bits } => {
                format!("gain-shape(M={range},l={gain_bits})")
            }
        }
    }

    /// Builds a quantizer for `n` dimensions using exactly `total_bits`
    /// bits (the lossless mock may use fewer; the remainder is padding).
    pub fn build<S: Scalar>(
        &self,
        n: usize,
        total_bits: usize,
        sigma: S,
        seed: u64,
        probe_count: usize,
        cap_bits: u32,
    ) -> Result<Box<dyn Quantizer<S>>> {
        match *self {
            QuantizerSpec::Lossless => {
                if total_bits < n * S::RAW_BITS {
                    return Err(Error::invalid(format!(
                        "lossless quantizer needs {} bits, budget is {total_bits}",
                        n * S::RAW_BITS
                    )));
                }
                Ok(Box::new(LosslessQuantizer::<S>::new(n)))
            }
            QuantizerSpec::Uniform { range } => {
                if !total_bits.is_multiple_of(n) {
                    return Err(Error::invalid(format!(
                        "uniform quantizer needs a whole number of bits per coordinate ({total_bits} bits, n = {n})"
                    )));
                }
                let per_coord =
                    u32::try_from(total_bits / n).map_err(|_| Error::invalid("rate too large"))?;
                Ok(Box::new(UniformVectorQuantizer::new(
                    n,
                    S::lit(range) * sigma,
                    per_coord,
                )?))
            }
            QuantizerSpec::GainShape { range, gain_bits } => {
                let gain_bits_usize = gain_bits as usize;
                if total_bits <= gain_bits_usize {
                    return Err(Error::invalid(format!(
                        "budget of {total_bits} bits leaves no shape bits after {gain_bits} gain bits"
                    )));
                }
                let shape_bits = u32::try_from(total_bits - gain_bits_usize)
                    .map_err(|_| Error::invalid("shape budget too large"))?;
                let codebook =
                    build_shape_codebook::<S>(n, shape_bits, seed, probe_count, cap_bits)?;
                Ok(Box::new(GainShapeQuantizer::new(
                    codebook,
                    S::lit(range) * sigma,
                    gain_bits,
                )?))
            }
        }
    }
}
