//! Encode/decode/pack against brute-force oracles and constructed fixed points.

use std::sync::Arc;

use grassq_core::codebook::{design_line_packing, random_line_codebook, random_positive_codebook};
use grassq_core::quantizer::{decompose, norm_reconstruction, quantize_norm};
use grassq_core::vector::{norm, sample_gaussian_vector};
use grassq_core::{BitAllocation, Error, GrassmannCodebook, HierarchicalCode, QuantizerConfig, SeededRng, Sign};

#[allow(clippy::too_many_arguments)]
fn config(dim: usize, m: usize, l: usize, b_rho: u32, b_s: u32, b_h: u32, rho_max: f64, seed: u64) -> QuantizerConfig {
    let alloc = BitAllocation::manual(m, l, b_rho, b_s, b_h).unwrap();
    let block = if b_s <= 6 {
        design_line_packing(l, b_s, seed, 500).unwrap()
    } else {
        random_line_codebook(l, b_s, seed).unwrap()
    };
    let hinge = (b_h > 0).then(|| Arc::new(random_positive_codebook(m, b_h, seed + 1).unwrap()));
    QuantizerConfig::new(dim, alloc, Arc::new(block), hinge, rho_max).unwrap()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Signed codeword nearest in Euclidean distance; scan order (+c_0, -c_0, +c_1, ...),
/// strict improvement only.
fn brute_signed(cb: &GrassmannCodebook, x: &[f64]) -> Vec<f64> {
    let mut best = (f64::INFINITY, Vec::new());
    for c in cb.codewords() {
        for s in [1.0, -1.0] {
            let cand: Vec<f64> = c.iter().map(|v| s * v).collect();
            let d = sq_dist(x, &cand);
            if d < best.0 {
                best = (d, cand);
            }
        }
    }
    best.1
}

fn brute_positive(cb: &GrassmannCodebook, x: &[f64]) -> Vec<f64> {
    let mut best = (f64::INFINITY, Vec::new());
    for c in cb.codewords() {
        let d = sq_dist(x, c);
        if d < best.0 {
            best = (d, c.to_vec());
        }
    }
    best.1
}

/// Stage-wise oracle written from the definitions: norm cell midpoint,
/// Euclidean-nearest signed line per block, Euclidean-nearest hinge codeword.
fn oracle_reconstruction(cfg: &QuantizerConfig, g: &[f64]) -> Vec<f64> {
    let (m, l) = (cfg.m(), cfg.l());
    let b_rho = cfg.allocation().b_rho;
    let rho: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let delta = cfg.rho_max() / 2f64.powi(b_rho as i32);
    let cell = ((rho / delta).floor()).min(2f64.powi(b_rho as i32) - 1.0);
    let rho_hat = (cell + 0.5) * delta;
    let mut padded = g.to_vec();
    padded.resize(m * l, 0.0);
    let norms: Vec<f64> = padded
        .chunks(l)
        .map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let total: f64 = norms.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h: Vec<f64> = norms.iter().map(|v| v / total).collect();
    let h_hat = match cfg.hinge_codebook() {
        Some(cb) => brute_positive(cb, &h),
        None => vec![1.0 / (m as f64).sqrt(); m],
    };
    let mut out = Vec::new();
    for (i, block) in padded.chunks(l).enumerate() {
        let s: Vec<f64> = block.iter().map(|v| v / norms[i]).collect();
        let s_hat = brute_signed(cfg.block_codebook(), &s);
        out.extend(s_hat.iter().map(|v| rho_hat * h_hat[i] * v));
    }
    out.truncate(g.len());
    out
}

#[test]
fn stagewise_brute_force_oracle_small_config() {
    let cfg = config(4, 2, 2, 4, 2, 2, 6.0, 11);
    let mut rng = SeededRng::new(5);
    for _ in 0..1000 {
        let g = sample_gaussian_vector(4, &mut rng).unwrap().into_vec();
        let got = cfg.quantize(&g).unwrap();
        let want = oracle_reconstruction(&cfg, &g);
        assert!(sq_dist(got.as_slice(), &want) < 1e-24, "g={g:?}");
    }
}

#[test]
fn stagewise_oracle_with_padding_and_surrogate_hinge() {
    let cfg = config(7, 2, 4, 6, 4, 0, 10.0, 3);
    let mut rng = SeededRng::new(6);
    for _ in 0..500 {
        let g = sample_gaussian_vector(7, &mut rng).unwrap().into_vec();
        let got = cfg.quantize(&g).unwrap();
        assert!(sq_dist(got.as_slice(), &oracle_reconstruction(&cfg, &g)) < 1e-24);
    }
}

#[test]
fn per_block_euclidean_optimality_up_to_six_bits() {
    let mut rng = SeededRng::new(8);
    for b_s in 1..=6 {
        for l in [2, 3, 5] {
            let cb = design_line_packing(l, b_s, 100 + b_s as u64, 300).unwrap();
            for _ in 0..200 {
                let x = grassq_core::vector::sample_uniform_sphere(l, &mut rng).unwrap();
                let q = cb.quantize_line(&x).unwrap();
                let r: Vec<f64> = cb.codeword(q.index).iter().map(|v| q.sign * v).collect();
                let want = brute_signed(&cb, x.as_slice());
                assert!((sq_dist(x.as_slice(), &r) - sq_dist(x.as_slice(), &want)).abs() < 1e-12);
                assert!(x.as_slice().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() >= 0.0);
            }
        }
    }
}

#[test]
fn constructed_fixed_points_decode_exactly() {
    let mut rng = SeededRng::new(9);
    for (m, l, b_rho, b_s, b_h) in [(2, 2, 4, 2, 2), (4, 3, 8, 3, 3), (8, 4, 12, 6, 6), (3, 5, 10, 4, 0)] {
        let cfg = config(m * l, m, l, b_rho, b_s, b_h, 20.0, 21);
        for _ in 0..200 {
            let code = random_code(&cfg, &mut rng);
            let g = cfg.decode(&code).unwrap();
            let again = cfg.quantize(g.as_slice()).unwrap();
            let scale = norm(g.as_slice());
            assert!(sq_dist(g.as_slice(), again.as_slice()).sqrt() <= 1e-9 * scale);
            // The norm identity: padding-free reconstructions have norm rho_hat.
            let rho_hat = norm_reconstruction(code.norm_index, b_rho, 20.0);
            assert!((scale - rho_hat).abs() <= 1e-9 * rho_hat);
        }
    }
}

#[test]
fn all_zero_code_layout() {
    let cfg = config(6, 3, 2, 4, 3, 0, 8.0, 2);
    let code = HierarchicalCode {
        norm_index: 0,
        line_indices: vec![0; 3],
        signs: vec![Sign::Plus; 3],
        hinge_index: None,
    };
    assert_eq!(cfg.pack(&code).unwrap(), vec![0u8; 2]);
    let g = cfg.decode(&code).unwrap();
    let c0 = cfg.block_codebook().codeword(0);
    let scale = 0.25 / 3f64.sqrt();
    for (i, v) in g.as_slice().iter().enumerate() {
        assert!((v - scale * c0[i % 2]).abs() < 1e-15);
    }
}

fn random_code(cfg: &QuantizerConfig, rng: &mut SeededRng) -> HierarchicalCode {
    let a = cfg.allocation();
    let lines = cfg.block_codebook().len();
    HierarchicalCode {
        norm_index: if a.b_rho == 0 {
            0
        } else {
            (rng.uniform() * 2f64.powi(a.b_rho as i32)) as u64
        },
        line_indices: (0..cfg.m()).map(|_| rng.below(lines) as u32).collect(),
        signs: (0..cfg.m())
            .map(|_| if rng.uniform() < 0.5 { Sign::Plus } else { Sign::Minus })
            .collect(),
        hinge_index: cfg.hinge_codebook().map(|cb| rng.below(cb.len()) as u32),
    }
}

#[test]
fn pack_round_trips_random_codes() {
    let mut rng = SeededRng::new(10);
    let shapes = [
        (2, 2, 4, 2, 2),
        (2, 3, 4, 3, 2),
        (5, 4, 7, 5, 3),
        (50, 10, 26, 5, 0),
        (3, 2, 0, 1, 0),
        (7, 3, 63, 9, 11),
    ];
    for (m, l, b_rho, b_s, b_h) in shapes {
        let cfg = config(m * l, m, l, b_rho, b_s, b_h, 50.0, 4);
        let bits = b_rho as u64 + m as u64 * b_s as u64 + b_h as u64;
        assert_eq!(cfg.packed_len() as u64, bits.div_ceil(8));
        for _ in 0..10_000 / shapes.len() + 1 {
            let code = random_code(&cfg, &mut rng);
            let bytes = cfg.pack(&code).unwrap();
            assert_eq!(bytes.len(), cfg.packed_len());
            assert_eq!(cfg.unpack(&bytes).unwrap(), code);
        }
    }
}

#[test]
fn pack_layout_is_msb_first() {
    // B_rho=4, M=2, B_s=3, B_h=2: 12 bits in 2 bytes.
    let cfg = config(4, 2, 2, 4, 3, 2, 8.0, 1);
    assert_eq!(cfg.packed_len(), 2);
    let code = HierarchicalCode {
        norm_index: 0b1011,
        line_indices: vec![0b01, 0b10],
        signs: vec![Sign::Minus, Sign::Plus],
        hinge_index: Some(0b11),
    };
    // 1011 | 1 01 | 0 10 | 11 | 0000
    assert_eq!(cfg.pack(&code).unwrap(), vec![0b1011_1010, 0b1011_0000]);
}

#[test]
fn unpack_rejects_corrupt_input() {
    let cfg = config(4, 2, 2, 4, 3, 2, 8.0, 1);
    assert!(matches!(cfg.unpack(&[0]), Err(Error::CorruptCode(_))));
    assert!(matches!(cfg.unpack(&[0, 0, 0]), Err(Error::CorruptCode(_))));
    assert!(matches!(cfg.unpack(&[0, 0b0000_0001]), Err(Error::CorruptCode(_))));
    let mut code = random_code(&cfg, &mut SeededRng::new(1));
    code.line_indices[1] = 7;
    assert!(matches!(cfg.decode(&code), Err(Error::CorruptCode(_))));
    assert!(matches!(cfg.pack(&code), Err(Error::CorruptCode(_))));
}

#[test]
fn decomposition_is_lossless() {
    let mut rng = SeededRng::new(12);
    for i in 0..1000 {
        let (m, l) = (1 + i % 6, 1 + (i / 6) % 5);
        let dim = 1 + rng.below(m * l);
        let mut g = sample_gaussian_vector(dim, &mut rng).unwrap().into_vec();
        if i % 7 == 0 && dim > l {
            g[..l].iter_mut().for_each(|v| *v = 0.0);
        }
        let d = decompose(&g, m, l).unwrap();
        let back = d.reassemble(dim);
        assert!(sq_dist(&g, &back).sqrt() <= 1e-9 * norm(&g));
        let hh: f64 = d.hinge.as_slice().iter().map(|v| v * v).sum();
        assert!((hh - 1.0).abs() < 1e-9);
    }
    let d = decompose(&[3.0, 0.0, 0.0, 4.0], 2, 2).unwrap();
    assert_eq!(d.rho, 5.0);
    assert_eq!(d.blocks[0].as_slice(), &[1.0, 0.0]);
    assert_eq!(d.blocks[1].as_slice(), &[0.0, 1.0]);
    assert!((d.hinge.as_slice()[0] - 0.6).abs() < 1e-15 && (d.hinge.as_slice()[1] - 0.8).abs() < 1e-15);
}

#[test]
fn sign_equivariance_and_scale_covariance() {
    let cfg = config(12, 4, 3, 10, 4, 3, 40.0, 7);
    let mut rng = SeededRng::new(13);
    for _ in 0..300 {
        let g = sample_gaussian_vector(12, &mut rng).unwrap().into_vec();
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let (a, b) = (cfg.encode(&g).unwrap(), cfg.encode(&neg).unwrap());
        assert_eq!(a.line_indices, b.line_indices);
        assert_eq!((a.norm_index, a.hinge_index), (b.norm_index, b.hinge_index));
        assert!(a.signs.iter().zip(&b.signs).all(|(x, y)| x.flip() == *y));
        let (ra, rb) = (cfg.decode(&a).unwrap(), cfg.decode(&b).unwrap());
        assert!(ra.as_slice().iter().zip(rb.as_slice()).all(|(x, y)| x == &-y));

        let scaled: Vec<f64> = g.iter().map(|v| 2.5 * v).collect();
        let c = cfg.encode(&scaled).unwrap();
        assert_eq!(
            (&a.line_indices, &a.signs, a.hinge_index),
            (&c.line_indices, &c.signs, c.hinge_index)
        );
    }
}

#[test]
fn norm_quantizer_examples() {
    assert_eq!(quantize_norm(3.0, 2, 8.0).unwrap(), (1, 3.0));
    assert_eq!(quantize_norm(100.0, 2, 8.0).unwrap(), (3, 7.0));
    assert_eq!(quantize_norm(0.0, 5, 8.0).unwrap(), (0, 0.125));
    assert!(quantize_norm(-1.0, 2, 8.0).is_err());
    let mut rng = SeededRng::new(3);
    for _ in 0..1000 {
        let rho = rng.uniform() * 8.0;
        let (_, hat) = quantize_norm(rho, 6, 8.0).unwrap();
        assert!((rho - hat).abs() <= 8.0 / 64.0 / 2.0 + 1e-15);
    }
}
