use proptest::prelude::*;
use sutrack::quantizer::{Quantizer, QuantizerOutput, QuantizerSpec};
use sutrack::scalar::norm_sq;

fn build(spec: QuantizerSpec, n: usize, bits: usize, seed: u64) -> Box<dyn Quantizer<f64>> {
    spec.build::<f64>(n, bits, 1.0, seed, 64, 16)
        .expect("quantizer builds")
}

fn scaled(dir: &[f64], norm: f64) -> Vec<f64> {
    let len = norm_sq(dir).sqrt();
    dir.iter().map(|v| v / len * norm).collect()
}

fn specs() -> impl Strategy<Value = (QuantizerSpec, usize, usize)> {
    prop_oneof![
        (1usize..=3, 1usize..=6, 0.5f64..8.0).prop_map(|(b, n, m)| (
            QuantizerSpec::Uniform { range: m },
            n,
            b * n
        )),
        (2usize..=8, 1u32..=4, 0.5f64..8.0, 2usize..=8).prop_map(|(n, l, m, shape)| {
            (
                QuantizerSpec::GainShape {
                    range: m,
                    gain_bits: l,
                },
                n,
                l as usize + shape,
            )
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Codes have the advertised length, decode to the encoder's own
    // reconstruction, and fail exactly outside the dynamic range.
    #[test]
    fn code_contract(
        (spec, n, bits) in specs(),
        seed in any::<u64>(),
        dir in prop::collection::vec(-1.0f64..1.0, 8),
        frac in 0.0f64..1.6,
    ) {
        prop_assume!(norm_sq(&dir[..n]) > 1e-6);
        let q = build(spec, n, bits, seed);
        prop_assert_eq!(q.bits(), bits);
        let limit = (n as f64).sqrt() * q.dynamic_range();
        let y = scaled(&dir[..n], frac * limit);
        prop_assume!((frac - 1.0).abs() > 1e-9);
        match q.quantize(&y).unwrap() {
            QuantizerOutput::Failure => prop_assert!(frac > 1.0),
            QuantizerOutput::Code { bits: code, reconstruction } => {
                prop_assert!(frac < 1.0);
                prop_assert_eq!(code.len(), bits);
                prop_assert_eq!(q.reconstruct(&code).unwrap(), reconstruction);
            }
        }
    }

    // A second copy built from the same seed decodes identically.
    #[test]
    fn copies_from_one_seed_agree(
        (spec, n, bits) in specs(),
        seed in any::<u64>(),
        dir in prop::collection::vec(-1.0f64..1.0, 8),
        frac in 0.0f64..0.99,
    ) {
        prop_assume!(norm_sq(&dir[..n]) > 1e-6);
        let enc = build(spec, n, bits, seed);
        let dec = build(spec, n, bits, seed);
        let y = scaled(&dir[..n], frac * (n as f64).sqrt() * enc.dynamic_range());
        if let QuantizerOutput::Code { bits: code, reconstruction } = enc.quantize(&y).unwrap() {
            prop_assert_eq!(dec.reconstruct(&code).unwrap(), reconstruction);
        }
    }

    // Gain-shape never returns something longer than its input.
    #[test]
    fn gain_shape_does_not_amplify(
        n in 2usize..=8,
        l in 1u32..=4,
        seed in any::<u64>(),
        dir in prop::collection::vec(-1.0f64..1.0, 8),
        frac in 0.0f64..1.0,
    ) {
        prop_assume!(norm_sq(&dir[..n]) > 1e-6);
        let q = build(QuantizerSpec::GainShape { range: 4.0, gain_bits: l }, n, l as usize + 6, seed);
        let y = scaled(&dir[..n], frac * (n as f64).sqrt() * 4.0);
        let out = q.quantize(&y).unwrap();
        let rec = out.reconstruction().unwrap();
        prop_assert!(norm_sq(rec) <= norm_sq(&y) * (1.0 + 1e-12) + 1e-15);
    }

    // The coordinate-wise quantizer meets its declared bound on every draw,
    // not only in expectation.
    #[test]
    fn uniform_meets_declared_bound_per_draw(
        n in 1usize..=6,
        b in 1usize..=4,
        m in 0.5f64..8.0,
        dir in prop::collection::vec(-1.0f64..1.0, 8),
        frac in 0.0f64..1.0,
    ) {
        prop_assume!(norm_sq(&dir[..n]) > 1e-6);
        let q = build(QuantizerSpec::Uniform { range: m }, n, b * n, 0);
        let y = scaled(&dir[..n], frac * (n as f64).sqrt() * m);
        let rec = q.quantize(&y).unwrap().reconstruction().unwrap().to_vec();
        let err: f64 = y.iter().zip(&rec).map(|(a, r)| (a - r).powi(2)).sum();
        let bound = q.declared_profile().unwrap().bound(b as f64, norm_sq(&y), n);
        prop_assert!(err <= bound * (1.0 + 1e-9), "err={} bound={}", err, bound);
    }
}

#[test]
fn lossless_is_exact_and_sized_by_word_width() {
    let q = build(QuantizerSpec::Lossless, 3, 3 * 64, 0);
    let y = [1.0e-300, -7.25, f64::MAX / 4.0];
    let out = q.quantize(&y).unwrap();
    assert_eq!(out.reconstruction().unwrap(), &y);
    assert!(QuantizerSpec::Lossless
        .build::<f64>(3, 3 * 64 - 1, 1.0, 0, 64, 16)
        .is_err());
}
