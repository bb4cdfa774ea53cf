//! Coordinate-wise uniform quantizer over `[-M sqrt(n), M sqrt(n)]`.

use crate::error::{Error, Result};
use crate::quantizer::{
    check_code_len, check_dim, push_uint, read_uint, Bits, BitsRef, Quantizer, QuantizerOutput,
    QuantizerProfile,
};
use crate::scalar::{norm_sq, Scalar};

#[derive(Debug, Clone)]
pub struct UniformVectorQuantizer<S: Scalar> {
    n: usize,
    range: S,
    bits_per_coord: u32,
}

impl<S: Scalar> UniformVectorQuantizer<S> {
    pub fn new(n: usize, range: S, bits_per_coord: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(range > S::zero() && range.is_finite()) {
            return Err(Error::invalid(format!(
                "dynamic range must be positive, got {range}"
            )));
        }
        if bits_per_coord == 0 || bits_per_coord > 32 {
            return Err(Error::invalid(format!(
                "bits per coordinate must lie in 1..=32, got {bits_per_coord}"
            )));
        }
        Ok(UniformVectorQuantizer {
            n,
            range,
            bits_per_coord,
        })
    }

    fn half_width(&self) -> S {
        self.range * S::from_count(self.n).sqrt()
    }

    fn cell_width(&self) -> S {
        S::lit(2.0) * self.half_width() / S::lit((1u64 << self.bits_per_coord) as f64)
    }

    fn cell_index(&self, v: S) -> u64 {
        let cells = 1u64 << self.bits_per_coord;
        let raw = ((v + self.half_width()) / self.cell_width()).floor();
        if raw <= S::zero() {
            0
        } else {
            raw.to_u64().unwrap_or(cells - 1).min(cells - 1)
        }
    }

    fn midpoint(&self, index: u64) -> S {
        -self.half_width() + (S::lit(index as f64) + S::lit(0.5)) * self.cell_width()
    }
}

impl<S: Scalar> Quantizer<S> for UniformVectorQuantizer<S> {
    fn dim(&self) -> usize {
        self.n
    }

    fn bits(&self) -> usize {
        self.n * self.bits_per_coord as usize
    }

    fn dynamic_range(&self) -> S {
        self.range
    }

    fn quantize(&self, y: &[S]) -> Result<QuantizerOutput<S>> {
        check_dim(self.n, y.len())?;
        if norm_sq(y) > S::from_count(self.n) * self.range * self.range {
            return Ok(QuantizerOutput::Failure);
        }
        let width = self.bits_per_coord as usize;
        let mut bits = Bits::with_capacity(self.bits());
        let mut reconstruction = Vec::with_capacity(self.n);
        for &v in y {
            let idx = self.cell_index(v);
            push_uint(&mut bits, idx, width);
            reconstruction.push(self.midpoint(idx));
        }
        Ok(QuantizerOutput::Code {
            bits,
            reconstruction,
        })
    }

    fn reconstruct(&self, code: &BitsRef) -> Result<Vec<S>> {
        check_code_len(self.bits(), code.len())?;
        Ok(code
            .chunks_exact(self.bits_per_coord as usize)
            .map(|c| self.midpoint(read_uint(c)))
            .collect())
    }

    fn declared_profile(&self) -> Option<QuantizerProfile<S>> {
        Some(QuantizerProfile::UniformScalar {
            n: self.n,
            range: self.range,
        })
    }
}

/// Convenience wrapper around [`UniformVectorQuantizer`].
pub fn uniform_vector_quantize<S: Scalar>(
    y: &[S],
    range: S,
    bits_per_coord: u32,
) -> Result<QuantizerOutput<S>> {
    UniformVectorQuantizer::new(y.len(), range, bits_per_coord)?.quantize(y)
}
