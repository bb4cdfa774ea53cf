//! Gain-shape quantizer: `Q(y) = sqrt(n) * q_M(||y|| / sqrt(n)) * Q_shape(y / ||y||)`.

use crate::error::{Error, Result};
use crate::quantizer::shape::ShapeCodebook;
use crate::quantizer::{
    check_code_len, check_dim, push_uint, read_uint, Bits, BitsRef, Quantizer, QuantizerOutput,
};
use crate::scalar::{norm_sq, Scalar};

/// Uniform floor quantizer of `[0, M]` with `2^gain_bits` cells of width
/// `M 2^{-gain_bits}`. Returns `(index, value)`; `a = M` lands in the top cell.
pub fn quantize_gain<S: Scalar>(a: S, range: S, gain_bits: u32) -> Result<(u64, S)> {
    if gain_bits >= 64 {
        return Err(Error::invalid(format!(
            "gain bits must be below 64, got {gain_bits}"
        )));
    }
    if !(a >= S::zero() && a <= range) {
        return Err(Error::contract(format!("gain {a} outside [0, {range}]")));
    }
    let cells = 1u64 << gain_bits;
    let step = gain_step(range, gain_bits);
    let raw = (a / step).floor().to_u64().unwrap_or(0);
    let index = raw.min(cells - 1);
    Ok((index, step * S::lit(index as f64)))
}

fn gain_step<S: Scalar>(range: S, gain_bits: u32) -> S {
    range / S::lit((1u64 << gain_bits) as f64)
}

fn assemble<S: Scalar>(
    codebook: &ShapeCodebook<S>,
    range: S,
    gain_bits: u32,
    gain_index: u64,
    shape_index: usize,
) -> Result<Vec<S>> {
    let n = codebook.dim();
    let shape = codebook.decode_shape(shape_index)?;
    if gain_index == 0 {
        return Ok(vec![S::zero(); n]);
    }
    let gain = S::from_count(n).sqrt() * gain_step(range, gain_bits) * S::lit(gain_index as f64);
    Ok(shape.into_iter().map(|x| gain * x).collect())
}

/// One gain-shape quantization. The code is the gain index (`gain_bits`)
/// followed by the shape index (`codebook.bits()`), both big-endian.
/// The zero vector maps to gain index 0 and shape index 0.
pub fn gain_shape_quantize<S: Scalar>(
    y: &[S],
    codebook: &ShapeCodebook<S>,
    range: S,
    gain_bits: u32,
) -> Result<QuantizerOutput<S>> {
    let n = codebook.dim();
    check_dim(n, y.len())?;
    let nn = S::from_count(n);
    let norm2 = norm_sq(y);
    if norm2 > nn * range * range {
        return Ok(QuantizerOutput::Failure);
    }
    let norm = norm2.sqrt();
    let (gain_index, shape_index) = if norm == S::zero() {
        (0, 0)
    } else {
        let a = (norm / nn.sqrt()).min(range);
        let (gi, _) = quantize_gain(a, range, gain_bits)?;
        let unit: Vec<S> = y.iter().map(|&v| v / norm).collect();
        (gi, codebook.encode_shape(&unit)?)
    };
    let mut bits = Bits::with_capacity(gain_bits as usize + codebook.bits() as usize);
    push_uint(&mut bits, gain_index, gain_bits as usize);
    push_uint(&mut bits, shape_index as u64, codebook.bits() as usize);
    let reconstruction = assemble(codebook, range, gain_bits, gain_index, shape_index)?;
    Ok(QuantizerOutput::Code {
        bits,
        reconstruction,
    })
}

#[derive(Debug, Clone)]
pub struct GainShapeQuantizer<S: Scalar> {
    codebook: ShapeCodebook<S>,
    range: S,
    gain_bits: u32,
}

impl<S: Scalar> GainShapeQuantizer<S> {
    pub fn new(codebook: ShapeCodebook<S>, range: S, gain_bits: u32) -> Result<Self> {
        if !(range > S::zero() && range.is_finite()) {
            return Err(Error::invalid(format!(
                "dynamic range must be positive, got {range}"
            )));
        }
        if gain_bits >= 64 {
            return Err(Error::invalid(format!(
                "gain bits must be below 64, got {gain_bits}"
            )));
        }
        Ok(GainShapeQuantizer {
            codebook,
            range,
            gain_bits,
        })
    }

    pub fn codebook(&self) -> &ShapeCodebook<S> {
        &self.codebook
    }

    pub fn gain_bits(&self) -> u32 {
        self.gain_bits
    }
}

impl<S: Scalar> Quantizer<S> for GainShapeQuantizer<S> {
    fn dim(&self) -> usize {
        self.codebook.dim()
    }

    fn bits(&self) -> usize {
        (self.gain_bits + self.codebook.bits()) as usize
    }

    fn dynamic_range(&self) -> S {
        self.range
    }

    fn quantize(&self, y: &[S]) -> Result<QuantizerOutput<S>> {
        gain_shape_quantize(y, &self.codebook, self.range, self.gain_bits)
    }

    fn reconstruct(&self, code: &BitsRef) -> Result<Vec<S>> {
        check_code_len(self.bits(), code.len())?;
        let (gain, shape) = code.split_at(self.gain_bits as usize);
        assemble(
            &self.codebook,
            self.range,
            self.gain_bits,
            read_uint(gain),
            read_uint(shape) as usize,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::build_shape_codebook;
    use crate::quantizer::sample_unit_sphere;
    use crate::scalar::dist_sq;
    use crate::seed::rng_from_seed;

    #[test]
    fn gain_examples() {
        assert_eq!(quantize_gain(2.7_f64, 4.0, 2).unwrap(), (2, 2.0));
        assert_eq!(quantize_gain(0.0_f64, 4.0, 2).unwrap(), (0, 0.0));
        assert_eq!(quantize_gain(4.0_f64, 4.0, 2).unwrap(), (3, 3.0));
        assert!(matches!(
            quantize_gain(4.5_f64, 4.0, 2),
            Err(Error::Contract(_))
        ));
        assert!(quantize_gain(-0.1_f64, 4.0, 2).is_err());
    }

    #[test]
    fn gain_never_overshoots() {
        let mut rng = rng_from_seed(4);
        for _ in 0..10_000 {
            let a = f64::sample_unit(&mut rng) * 3.0;
            let (idx, v) = quantize_gain(a, 3.0, 5).unwrap();
            assert!(v <= a);
            assert!(a - v < 3.0 / 32.0);
            assert!(idx < 32);
        }
    }

    #[test]
    fn failure_and_zero() {
        let cb = build_shape_codebook::<f64>(4, 6, 1, 64, 20).unwrap();
        let q = GainShapeQuantizer::new(cb, 1.0, 3).unwrap();
        assert!(q
            .quantize(&[2.0, 0.0, 0.0, 0.0])
            .unwrap()
            .reconstruction()
            .is_some());
        assert!(q.quantize(&[2.0, 0.01, 0.0, 0.0]).unwrap().is_failure());
        let zero = q.quantize(&[0.0; 4]).unwrap();
        let QuantizerOutput::Code {
            bits,
            reconstruction,
        } = zero
        else {
            panic!("zero vector must not fail")
        };
        assert_eq!(reconstruction, vec![0.0; 4]);
        assert!(bits.not_any());
    }

    #[test]
    fn aligned_input_error_is_shrink_only() {
        // y along a codeword with a gain exactly on the grid: error is ||y||^2 (1-c)^2.
        let cb = build_shape_codebook::<f64>(3, 5, 9, 256, 20).unwrap();
        let c = cb.scale();
        let dir = cb.codeword(6).to_vec();
        let range = 4.0;
        let gain_bits = 3;
        let b = 2.5; // multiple of the 0.5 step
        let y: Vec<f64> = dir.iter().map(|x| x * b * 3f64.sqrt()).collect();
        let out = gain_shape_quantize(&y, &cb, range, gain_bits).unwrap();
        let err = dist_sq(&y, out.reconstruction().unwrap());
        let expect = norm_sq(&y) * (1.0 - c) * (1.0 - c);
        assert!((err - expect).abs() < 1e-12, "{err} vs {expect}");
    }

    #[test]
    fn decoder_matches_encoder_and_no_amplification() {
        let cb = build_shape_codebook::<f64>(6, 8, 2, 128, 20).unwrap();
        let q = GainShapeQuantizer::new(cb, 2.0, 4).unwrap();
        let mut rng = rng_from_seed(8);
        let limit = 6f64.sqrt() * 2.0;
        for _ in 0..500 {
            let r = f64::sample_unit(&mut rng) * limit;
            let y: Vec<f64> = sample_unit_sphere::<f64, _>(6, &mut rng)
                .iter()
                .map(|x| x * r)
                .collect();
            let QuantizerOutput::Code {
                bits,
                reconstruction,
            } = q.quantize(&y).unwrap()
            else {
                panic!("in range")
            };
            assert_eq!(bits.len(), 12);
            assert_eq!(q.reconstruct(&bits).unwrap(), reconstruction);
            assert!(norm_sq(&reconstruction).sqrt() <= limit + 1e-12);
        }
    }
}
