//! Random spherical codebooks for the shape part of a gain-shape quantizer.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::profile::sample_unit_sphere;
use crate::scalar::{dot, norm_sq, Scalar};
use crate::seed::rng_from_seed;

/// Largest codebook is `2^DEFAULT_CODEBOOK_CAP_BITS` vectors.
pub const DEFAULT_CODEBOOK_CAP_BITS: u32 = 20;

/// `2^bits` unit vectors in `R^n`, stored in antipodal pairs
/// (`v[2i+1] = -v[2i]`), decoded with a common shrink factor `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCodebook<S: Scalar> {
    n: usize,
    bits: u32,
    vectors: Vec<S>,
    scale: S,
    seed: u64,
    probe_count: usize,
    /// Mean of `1 - <y, c(y)>^2` over the calibration probes.
    shape_distortion: Option<S>,
}

fn unit_tolerance<S: Scalar>(n: usize) -> S {
    S::lit(1e-9).max(S::epsilon() * S::lit(8.0) * S::from_count(n).sqrt())
}

/// Draws a codebook and calibrates its decode scale.
///
/// The scale is the mean, over `probe_count` fresh uniform probes, of the
/// largest inner product between the probe and the codebook. With no probes
/// the scale is 1.
pub fn build_shape_codebook<S: Scalar>(
    n: usize,
    bits: u32,
    seed: u64,
    probe_count: usize,
    cap_bits: u32,
) -> Result<ShapeCodebook<S>> {
    if n == 0 {
        return Err(Error::invalid("codebook dimension must be at least 1"));
    }
    if bits == 0 {
        return Err(Error::invalid("shape codebook needs at least one bit"));
    }
    if bits > cap_bits || bits >= 48 {
        return Err(Error::CodebookTooLarge { bits, cap_bits });
    }
    let size = 1usize << bits;
    let mut rng = rng_from_seed(seed);
    let mut vectors = Vec::with_capacity(size * n);
    for _ in 0..size / 2 {
        let v: Vec<S> = sample_unit_sphere(n, &mut rng);
        vectors.extend_from_slice(&v);
        vectors.extend(v.iter().map(|&x| -x));
    }
    let mut cb = ShapeCodebook {
        n,
        bits,
        vectors,
        scale: S::one(),
        seed,
        probe_count,
        shape_distortion: None,
    };
    if probe_count > 0 {
        let mut sum_ip = S::zero();
        let mut sum_dist = S::zero();
        for _ in 0..probe_count {
            let probe: Vec<S> = sample_unit_sphere(n, &mut rng);
            let (_, ip) = cb.nearest(&probe);
            sum_ip += ip;
            sum_dist += S::one() - ip * ip;
        }
        let count = S::from_count(probe_count);
        cb.scale = (sum_ip / count).min(S::one()).max(S::epsilon());
        cb.shape_distortion = Some(sum_dist / count);
    }
    Ok(cb)
}

impl<S: Scalar> ShapeCodebook<S> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn scale(&self) -> S {
        self.scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shape_distortion(&self) -> Option<S> {
        self.shape_distortion
    }

    pub fn codeword(&self, index: usize) -> &[S] {
        &self.vectors[index * self.n..(index + 1) * self.n]
    }

    /// Index of the largest inner product (lowest index on ties) and the product.
    fn nearest(&self, y: &[S]) -> (usize, S) {
        let mut best = 0;
        let mut best_ip = S::neg_infinity();
        for (i, c) in self.vectors.chunks_exact(self.n).enumerate() {
            let ip = dot(c, y);
            if ip > best_ip {
                best_ip = ip;
                best = i;
            }
        }
        (best, best_ip)
    }

    /// Exhaustive nearest-codeword search for a unit-norm input.
    pub fn encode_shape(&self, y_s: &[S]) -> Result<usize> {
        if y_s.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: y_s.len(),
            });
        }
        let norm = norm_sq(y_s).sqrt();
        if (norm - S::one()).abs() > unit_tolerance::<S>(self.n) {
            return Err(Error::contract(format!(
                "shape input must have unit norm, got {norm}"
            )));
        }
        Ok(self.nearest(y_s).0)
    }

    /// `scale * codeword(index)`.
    pub fn decode_shape(&self, index: usize) -> Result<Vec<S>> {
        if index >= self.len() {
            return Err(Error::contract(format!(
                "shape index {index} out of range for {} codewords",
                self.len()
            )));
        }
        Ok(self
            .codeword(index)
            .iter()
            .map(|&x| self.scale * x)
            .collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CodebookHeader {
    n: usize,
    b: u32,
    scale: f64,
    seed: u64,
    probe_count: usize,
    shape_distortion: Option<f64>,
}

/// Writes a one-line JSON header followed by the little-endian `f64`
/// codeword block (row-major, `2^b * n` values).
pub fn write_codebook<S: Scalar>(cb: &ShapeCodebook<S>, path: &Path) -> Result<()> {
    let header = CodebookHeader {
        n: cb.n,
        b: cb.bits,
        scale: cb.scale.as_f64(),
        seed: cb.seed,
        probe_count: cb.probe_count,
        shape_distortion: cb.shape_distortion.map(Scalar::as_f64),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for v in &cb.vectors {
        out.write_all(&v.as_f64().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_codebook<S: Scalar>(path: &Path) -> Result<ShapeCodebook<S>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: CodebookHeader = serde_json::from_str(line.trim_end())?;
    if header.n == 0 || header.b == 0 || header.b >= 48 {
        return Err(Error::invalid("corrupt codebook header"));
    }
    let count = (1usize << header.b) * header.n;
    let mut vectors = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        input.read_exact(&mut buf)?;
        vectors.push(S::lit(f64::from_le_bytes(buf)));
    }
    let tol = unit_tolerance::<S>(header.n);
    if vectors
        .chunks_exact(header.n)
        .any(|c| (norm_sq(c).sqrt() - S::one()).abs() > tol)
    {
        return Err(Error::invalid("codebook contains non-unit vectors"));
    }
    Ok(ShapeCodebook {
        n: header.n,
        bits: header.b,
        vectors,
        scale: S::lit(header.scale),
        seed: header.seed,
        probe_count: header.probe_count,
        shape_distortion: header.shape_distortion.map(S::lit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_codebook() {
        let cb = build_shape_codebook::<f64>(1, 1, 3, 64, 20).unwrap();
        let mut words: Vec<f64> = (0..2).map(|i| cb.codeword(i)[0]).collect();
        words.sort_by(f64::total_cmp);
        assert_eq!(words, vec![-1.0, 1.0]);
        assert_eq!(cb.scale(), 1.0);
        let neg = cb.encode_shape(&[-1.0]).unwrap();
        assert_eq!(cb.codeword(neg), &[-1.0]);
    }

    #[test]
    fn codewords_are_unit_and_antipodal() {
        let cb = build_shape_codebook::<f64>(5, 6, 11, 0, 20).unwrap();
        assert_eq!(cb.len(), 64);
        for i in 0..cb.len() {
            assert!((norm_sq(cb.codeword(i)).sqrt() - 1.0).abs() < 1e-9);
        }
        for i in (0..cb.len()).step_by(2) {
            let a = cb.codeword(i);
            let b = cb.codeword(i + 1);
            assert!(a.iter().zip(b).all(|(x, y)| *x == -*y));
        }
        assert_eq!(cb.scale(), 1.0);
        assert!(cb.shape_distortion().is_none());
    }

    #[test]
    fn circle_scale_close_to_one() {
        // Oracle: the worst probe is half the largest angular gap away from a codeword.
        let cb = build_shape_codebook::<f64>(2, 8, 5, 1024, 20).unwrap();
        let mut angles: Vec<f64> = (0..cb.len())
            .map(|i| cb.codeword(i)[1].atan2(cb.codeword(i)[0]))
            .collect();
        angles.sort_by(f64::total_cmp);
        let mut gap: f64 = angles[0] + std::f64::consts::TAU - angles[angles.len() - 1];
        for w in angles.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        let floor = (gap / 2.0).cos();
        assert!(cb.scale() > floor && cb.scale() <= 1.0);
        assert!(
            cb.scale() > 0.99 && cb.scale() < 1.0,
            "scale {}",
            cb.scale()
        );
    }

    #[test]
    fn shape_distortion_matches_probe_scan() {
        let cb = build_shape_codebook::<f64>(8, 12, 21, 2000, 20).unwrap();
        let d = cb.shape_distortion().unwrap();
        assert!(d > 0.0 && d < 1.0);
        // Independent Monte Carlo over fresh probes.
        let mut rng = rng_from_seed(99);
        let probes = 2000;
        let mut acc = 0.0;
        for _ in 0..probes {
            let y: Vec<f64> = sample_unit_sphere(8, &mut rng);
            let ip = (0..cb.len())
                .map(|i| dot(cb.codeword(i), &y))
                .fold(f64::NEG_INFINITY, f64::max);
            acc += 1.0 - ip * ip;
        }
        let fresh = acc / probes as f64;
        assert!((fresh - d).abs() < 0.02, "fresh {fresh} vs build-time {d}");
    }

    #[test]
    fn encode_rejects_bad_inputs() {
        let cb = build_shape_codebook::<f64>(3, 4, 1, 0, 20).unwrap();
        assert!(matches!(
            cb.encode_shape(&[1.0, 0.0, 0.5]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            cb.encode_shape(&[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(cb.decode_shape(16).is_err());
        for j in 0..cb.len() {
            let c = cb.codeword(j).to_vec();
            let i = cb.encode_shape(&c).unwrap();
            assert_eq!(cb.codeword(i), c.as_slice());
        }
    }

    #[test]
    fn decode_has_scale_norm() {
        let cb = build_shape_codebook::<f64>(4, 5, 2, 128, 20).unwrap();
        for i in 0..cb.len() {
            let v = cb.decode_shape(i).unwrap();
            assert!((norm_sq(&v).sqrt() - cb.scale()).abs() < 1e-12);
        }
        let c = cb.codeword(7).to_vec();
        let round = cb.decode_shape(cb.encode_shape(&c).unwrap()).unwrap();
        let expect: Vec<f64> = c.iter().map(|x| x * cb.scale()).collect();
        assert_eq!(round, expect);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            build_shape_codebook::<f64>(4, 21, 0, 0, 20),
            Err(Error::CodebookTooLarge {
                bits: 21,
                cap_bits: 20
            })
        ));
        assert!(build_shape_codebook::<f64>(4, 0, 0, 0, 20).is_err());
    }

    #[test]
    fn same_seed_same_codebook() {
        let a = build_shape_codebook::<f64>(6, 7, 77, 32, 20).unwrap();
        let b = build_shape_codebook::<f64>(6, 7, 77, 32, 20).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn file_round_trip() {
        let cb = build_shape_codebook::<f64>(3, 5, 8, 50, 20).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.bin");
        write_codebook(&cb, &path).unwrap();
        let back: ShapeCodebook<f64> = read_codebook(&path).unwrap();
        assert_eq!(back, cb);
    }
}
