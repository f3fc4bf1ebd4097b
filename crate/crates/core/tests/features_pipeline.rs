use std::f64::consts::PI;

use lgprep::features::{flatten_baseline, lg_preprocess, lg_preprocess_with, FeatureConfig};
use lgprep::lgfilter::FilterParams;
use lgprep::spectral::{dft2_naive, Complex64};
use lgprep::{ComplexMatrix, Error, FeatureKind, GrayImage, PipelineMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(seed: u64, n: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::new(n, n, (0..n * n).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Filter written straight from the closed form, pixel grid centred on n/2,
/// with the unpaired first row and column replaced by the mean of their two
/// aliases.
fn reference_filter(omega: f64, n: usize) -> ComplexMatrix {
    let lg = |x: f64, y: f64| {
        Complex64::new(0.0, PI.powi(2) * omega.powi(4))
            * Complex64::new(x, y)
            * (-(PI * omega).powi(2) * (x * x + y * y)).exp()
    };
    let half = (n / 2) as f64;
    ComplexMatrix::from_fn(n, n, |r, c| {
        let (x, y) = (c as f64 - half, r as f64 - half);
        let even = n.is_multiple_of(2);
        match (even && r == 0, even && c == 0) {
            (true, true) => Complex64::new(0.0, 0.0),
            (true, false) => (lg(x, y) + lg(x, -y)) / 2.0,
            (false, true) => (lg(x, y) + lg(-x, y)) / 2.0,
            (false, false) => lg(x, y),
        }
    })
}

/// Every step by hand: naive DFTs, explicit product, index-arithmetic
/// shift, then the middle row and column.
fn reference_features(img: &GrayImage, omega: f64, mode: PipelineMode) -> Vec<f64> {
    let n = img.width();
    let mut spectrum = dft2_naive(&ComplexMatrix::from(img));
    if mode != PipelineMode::NoConvolution {
        let f = dft2_naive(&reference_filter(omega, n));
        spectrum = ComplexMatrix::from_fn(n, n, |r, c| spectrum.get(r, c) * f.get(r, c));
    }
    let shift = if mode == PipelineMode::NoShift {
        0
    } else {
        n / 2
    };
    let at = |r: usize, c: usize| {
        spectrum
            .get((r + n - shift) % n, (c + n - shift) % n)
            .norm()
    };
    let mid = n / 2;
    let mut out: Vec<f64> = (0..n).map(|c| at(mid, c)).collect();
    out.extend((0..n).map(|r| at(r, mid)));
    out
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

#[test]
fn pipeline_matches_step_by_step_reference() {
    for (seed, n) in [(1, 8), (2, 16), (3, 64), (4, 12)] {
        let img = random_image(seed, n);
        for mode in PipelineMode::ALL {
            let got = lg_preprocess(&img, 0.9, mode).unwrap();
            let want = reference_features(&img, 0.9, mode);
            assert_eq!(got.len(), 2 * n);
            let d = max_rel_diff(got.values(), &want);
            assert!(d < 1e-9, "n={n} {mode}: {d}");
        }
    }
}

#[test]
fn filtered_magnitudes_match_spatial_circular_convolution() {
    let n = 8;
    let img = random_image(9, n);
    let kernel = reference_filter(0.7, n);
    let conv = ComplexMatrix::from_fn(n, n, |r, c| {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += img.get(i, j) * kernel.get((r + n - i) % n, (c + n - j) % n);
            }
        }
        acc
    });
    let spectrum = dft2_naive(&conv);
    let want: Vec<f64> = (0..n)
        .map(|c| spectrum.get(0, (c + n / 2) % n).norm())
        .chain((0..n).map(|r| spectrum.get((r + n / 2) % n, 0).norm()))
        .collect();
    let got = lg_preprocess(&img, 0.7, PipelineMode::Full).unwrap();
    assert!(max_rel_diff(got.values(), &want) < 1e-9);
}

#[test]
fn dimensions_for_64() {
    let img = random_image(5, 64);
    assert_eq!(
        lg_preprocess(&img, 0.9, PipelineMode::Full).unwrap().len(),
        128
    );
    assert_eq!(flatten_baseline(&img).len(), 4096);
    let cfg = FeatureConfig {
        kind: FeatureKind::Flattened,
        ..FeatureConfig::default()
    };
    assert_eq!(cfg.extract(&img).unwrap().len(), 4096);
}

#[test]
fn features_scale_with_intensity() {
    let img = random_image(6, 32);
    let base = lg_preprocess(&img, 0.9, PipelineMode::Full).unwrap();
    let scaled = lg_preprocess(&img.scaled(0.25), 0.9, PipelineMode::Full).unwrap();
    for (a, b) in base.values().iter().zip(scaled.values()) {
        assert!((0.25 * a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn shift_changes_the_profiles() {
    let img = random_image(7, 64);
    let full = lg_preprocess(&img, 0.9, PipelineMode::Full).unwrap();
    let unshifted = lg_preprocess(&img, 0.9, PipelineMode::NoShift).unwrap();
    assert!(max_rel_diff(full.values(), unshifted.values()) > 1e-3);
}

#[test]
fn normalized_grid_is_available() {
    let img = random_image(8, 16);
    let params = FilterParams::normalized(0.9, 16);
    let fv = lg_preprocess_with(&img, &params, PipelineMode::Full).unwrap();
    assert_eq!(fv.len(), 32);
    assert!(lg_preprocess_with(&img, &FilterParams::new(0.9, 8), PipelineMode::Full).is_err());
}

#[test]
fn non_square_is_rejected() {
    let img = GrayImage::filled(16, 8, 0.5).unwrap();
    assert!(matches!(
        lg_preprocess(&img, 0.9, PipelineMode::Full),
        Err(Error::InvalidArgument(_))
    ));
}
