//! Line packing, Lloyd and the codebook file against direct scans.

use grassq_core::codebook::{
    design_line_packing, design_line_packing_with, lloyd_positive, load_codebook, min_pairwise_chordal,
    random_positive_codebook, read_codebook, save_codebook, write_codebook, LloydOptions, PackingOptions,
};
use grassq_core::distortion::sample_hinge;
use grassq_core::vector::{chordal_from_dot, dot, sample_uniform_sphere, UnitVector};
use grassq_core::{Error, GrassmannCodebook, SeededRng};

fn pairwise_scan(cb: &GrassmannCodebook) -> f64 {
    let mut best = 1.0f64;
    for i in 0..cb.len() {
        for j in i + 1..cb.len() {
            best = best.min(chordal_from_dot(dot(cb.codeword(i), cb.codeword(j))));
        }
    }
    best
}

#[test]
fn two_lines_in_the_plane_are_orthogonal() {
    // Exhaustive angle search: two lines at angle a have chordal distance
    // |sin a|, maximized at a = 90 degrees.
    let oracle = (0..=9000)
        .map(|k| (k as f64 / 100.0).to_radians().sin().abs())
        .fold(0.0, f64::max);
    let cb = design_line_packing(2, 2, 1, 2000).unwrap();
    assert!((cb.meta().min_pairwise_chordal - oracle).abs() < 1e-6);
}

#[test]
fn four_lines_in_r3() {
    let cb = design_line_packing(3, 3, 1, 20_000).unwrap();
    assert!(cb.meta().min_pairwise_chordal >= 0.90);
    assert_eq!(cb.meta().min_pairwise_chordal, pairwise_scan(&cb));
    assert_eq!(min_pairwise_chordal(&cb), pairwise_scan(&cb));
}

#[test]
fn single_line_and_degenerate_pairs() {
    let cb = design_line_packing(7, 1, 1, 100).unwrap();
    assert_eq!(cb.len(), 1);
    assert_eq!(cb.meta().min_pairwise_chordal, 1.0);
    let dup = GrassmannCodebook::from_codewords(
        grassq_core::CodebookKind::EvenLine,
        2,
        2,
        vec![0.6, 0.8, 0.6, 0.8],
        0,
        0,
    )
    .unwrap();
    assert_eq!(min_pairwise_chordal(&dup), 0.0);
}

#[test]
fn packing_gets_harder_with_more_lines() {
    for l in [3, 4, 6] {
        let d: Vec<f64> = (1..=6)
            .map(|b| design_line_packing(l, b, 5, 3000).unwrap().meta().min_pairwise_chordal)
            .collect();
        assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-12), "L={l}: {d:?}");
    }
}

#[test]
fn more_iterations_never_hurt() {
    let run = |iterations| {
        design_line_packing_with(
            5,
            5,
            &PackingOptions {
                seed: 3,
                iterations,
                restarts: 3,
            },
        )
        .unwrap()
        .meta()
        .min_pairwise_chordal
    };
    let d: Vec<f64> = [10, 100, 1000, 5000].iter().map(|&n| run(n)).collect();
    assert!(d.windows(2).all(|w| w[1] >= w[0]), "{d:?}");
    assert_eq!(run(1000), run(1000));
}

#[test]
fn lloyd_beats_random_baseline_and_is_monotone() {
    let (m, l) = (8, 32);
    let mut rng = SeededRng::new(17);
    let samples: Vec<UnitVector> = (0..10_000).map(|_| sample_hinge(m, l, &mut rng).unwrap()).collect();
    let out = lloyd_positive(
        &samples,
        &LloydOptions {
            bits: 4,
            seed: 2,
            max_iterations: 100,
            tolerance: 1e-6,
        },
    )
    .unwrap();
    let h = &out.distortion_history;
    assert!(h.windows(2).all(|w| w[1] <= w[0]), "{h:?}");
    assert!(out.final_distortion() <= h[0]);

    let flat: Vec<f64> = samples.iter().flat_map(|s| s.as_slice().iter().copied()).collect();
    assert!((out.codebook.chordal_distortion(&flat) - out.final_distortion()).abs() < 1e-12);
    for seed in 0..5 {
        let random = random_positive_codebook(m, 4, seed).unwrap();
        assert!(out.final_distortion() <= random.chordal_distortion(&flat));
    }
}

#[test]
fn lloyd_on_identical_samples() {
    let v = UnitVector::normalize(vec![1.0, 2.0, 3.0]).unwrap();
    let out = lloyd_positive(
        &vec![v.clone(); 20],
        &LloydOptions {
            bits: 1,
            seed: 0,
            max_iterations: 10,
            tolerance: 1e-9,
        },
    )
    .unwrap();
    assert!(out.final_distortion() < 1e-20);
    let (_, c) = out.codebook.quantize_positive(&v).unwrap();
    assert!(chordal_from_dot(dot(c.as_slice(), v.as_slice())) < 1e-9);
}

#[test]
fn positive_chordal_nearest_is_euclidean_nearest() {
    let cb = random_positive_codebook(6, 5, 3).unwrap();
    let mut rng = SeededRng::new(4);
    for _ in 0..2000 {
        let x = sample_hinge(6, 4, &mut rng).unwrap();
        let (i, _) = cb.quantize_positive(&x).unwrap();
        let eu = |j: usize| -> f64 {
            x.as_slice()
                .iter()
                .zip(cb.codeword(j))
                .map(|(a, b)| (a - b).powi(2))
                .sum()
        };
        let best = (0..cb.len()).min_by(|&a, &b| eu(a).total_cmp(&eu(b))).unwrap();
        assert!((eu(i) - eu(best)).abs() < 1e-12);
    }
    let neg = UnitVector::normalize(vec![-1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
    assert!(cb.quantize_positive(&neg).is_err());
}

#[test]
fn file_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cs.gcb");
    let cb = design_line_packing(6, 5, 8, 1000).unwrap();
    save_codebook(&cb, &path).unwrap();
    let back = load_codebook(&path).unwrap();
    assert_eq!(back, cb);
    assert_eq!(back.as_flat(), cb.as_flat());
    let mut rng = SeededRng::new(1);
    for _ in 0..100 {
        let x = sample_uniform_sphere(6, &mut rng).unwrap();
        assert_eq!(back.quantize_line(&x).unwrap(), cb.quantize_line(&x).unwrap());
    }

    let mut bytes = Vec::new();
    write_codebook(&cb, &mut bytes).unwrap();
    assert_eq!(&bytes[..4], b"GQCB");
    let corrupt = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut b = bytes.clone();
        f(&mut b);
        read_codebook(b.as_slice())
    };
    assert!(matches!(corrupt(&|b| b[0] = b'X'), Err(Error::CodebookFormat(_))));
    assert!(matches!(corrupt(&|b| b[4] = 9), Err(Error::CodebookFormat(_))));
    assert!(matches!(
        corrupt(&|b| b.truncate(b.len() - 3)),
        Err(Error::CodebookFormat(_))
    ));
    assert!(matches!(corrupt(&|b| b.push(0)), Err(Error::CodebookFormat(_))));
    // First codeword entry scaled: no longer unit norm.
    let first = bytes.len() - cb.as_flat().len() * 8;
    assert!(matches!(
        corrupt(&|b| b[first..first + 8].copy_from_slice(&3.0f64.to_le_bytes())),
        Err(Error::CodebookFormat(_))
    ));
    assert!(matches!(load_codebook(dir.path().join("missing")), Err(Error::Io(_))));
}

#[test]
fn size_cap() {
    assert!(matches!(
        design_line_packing(4, 22, 1, 10),
        Err(Error::ResourceLimit(_))
    ));
    assert!(matches!(
        random_positive_codebook(4, 21, 1),
        Err(Error::ResourceLimit(_))
    ));
}
