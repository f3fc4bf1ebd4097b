//! Laguerre-Gauss spatial filter
//!
//! `LG(x, y) = (iπ²ω⁴)(x + iy)·exp(−π²ω²(x² + y²))`
//!
//! sampled on an n×n grid whose origin sits at index `(n/2, n/2)` (floor).
//! Entry `(r, c)` is evaluated at `x = (c − n/2)·step`, `y = (r − n/2)·step`.
//! The default step is one pixel; [`FilterParams::normalized`] uses `1/n`,
//! which maps the grid onto `[-0.5, 0.5)`.
//!
//! For even n the first row and column sit at `−n/2·step`, whose mirror
//! `+n/2·step` is the same sample on the periodic grid. Those entries hold the
//! mean of the two aliases so the sampled filter stays exactly odd
//! (`LG(−x, −y) = −LG(x, y)`) and its DC response vanishes.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::spectral::{dft2_forward, Complex64, ComplexMatrix};

pub const DEFAULT_OMEGA: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    /// Bandpass control ω; values toward 1 favor higher frequencies.
    pub omega: f64,
    /// Filter side length in pixels.
    pub size: usize,
    /// Spatial distance between neighbouring grid samples.
    pub grid_step: f64,
}

impl FilterParams {
    /// Pixel-spaced grid (step 1).
    pub fn new(omega: f64, size: usize) -> Self {
        Self {
            omega,
            size,
            grid_step: 1.0,
        }
    }

    /// Grid spanning `[-0.5, 0.5)` with step `1/size`.
    pub fn normalized(omega: f64, size: usize) -> Self {
        Self {
            omega,
            size,
            grid_step: 1.0 / size as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::invalid(format!(
                "filter size {} is below 2",
                self.size
            )));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if !(self.grid_step.is_finite() && self.grid_step > 0.0) {
            return Err(Error::invalid(format!(
                "grid step must be positive, got {}",
                self.grid_step
            )));
        }
        if self.omega > 1.0 {
            log::warn!("omega {} is above 1", self.omega);
        }
        Ok(())
    }

    fn cache_key(&self) -> (u64, usize, u64) {
        (self.omega.to_bits(), self.size, self.grid_step.to_bits())
    }
}

/// Evaluates the continuous filter at `(x, y)`.
pub fn laguerre_gauss_at(omega: f64, x: f64, y: f64) -> Complex64 {
    let gain = Complex64::new(0.0, PI * PI * omega.powi(4));
    let envelope = (-PI * PI * omega * omega * (x * x + y * y)).exp();
    gain * Complex64::new(x, y) * envelope
}

/// Samples the filter on the spatial grid described in the module docs.
pub fn laguerre_gauss_filter(params: &FilterParams) -> Result<ComplexMatrix> {
    params.validate()?;
    let n = params.size;
    let center = (n / 2) as f64;
    let step = params.grid_step;
    let w = params.omega;
    let coord = |i: usize| (i as f64 - center) * step;
    // Only the first index of an even grid lacks a mirror.
    let unpaired = |i: usize| n.is_multiple_of(2) && i == 0;
    Ok(ComplexMatrix::from_fn(n, n, |r, c| {
        let (x, y) = (coord(c), coord(r));
        match (unpaired(r), unpaired(c)) {
            (false, false) => laguerre_gauss_at(w, x, y),
            (false, true) => (laguerre_gauss_at(w, x, y) + laguerre_gauss_at(w, -x, y)) * 0.5,
            (true, false) => (laguerre_gauss_at(w, x, y) + laguerre_gauss_at(w, x, -y)) * 0.5,
            // The four aliases of the corner cancel pairwise.
            (true, true) => Complex64::new(0.0, 0.0),
        }
    }))
}

type SpectrumCache = RwLock<HashMap<(u64, usize, u64), Arc<ComplexMatrix>>>;

fn spectrum_cache() -> &'static SpectrumCache {
    static CACHE: OnceLock<SpectrumCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Forward DFT of [`laguerre_gauss_filter`], memoized per parameter set.
pub fn filter_spectrum(params: &FilterParams) -> Result<Arc<ComplexMatrix>> {
    params.validate()?;
    let key = params.cache_key();
    if let Some(hit) = spectrum_cache()
        .read()
        .expect("filter cache poisoned")
        .get(&key)
    {
        return Ok(Arc::clone(hit));
    }
    let fresh = Arc::new(dft2_forward(&laguerre_gauss_filter(params)?)?);
    let mut cache = spectrum_cache().write().expect("filter cache poisoned");
    // Another thread may have raced us here; both values are identical.
    Ok(Arc::clone(cache.entry(key).or_insert(fresh)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{dft2_naive, fftshift, magnitude};

    #[test]
    fn origin_is_exactly_zero() {
        for n in [2, 7, 64] {
            for p in [FilterParams::new(0.9, n), FilterParams::normalized(0.5, n)] {
                let f = laguerre_gauss_filter(&p).unwrap();
                assert_eq!(f.get(n / 2, n / 2), Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn rejects_tiny_or_bad_params() {
        assert!(laguerre_gauss_filter(&FilterParams::new(0.9, 1)).is_err());
        assert!(laguerre_gauss_filter(&FilterParams::new(0.0, 8)).is_err());
        assert!(laguerre_gauss_filter(&FilterParams::new(f64::NAN, 8)).is_err());
        // Above 1 only warns.
        assert!(laguerre_gauss_filter(&FilterParams::new(1.5, 8)).is_ok());
    }

    #[test]
    fn odd_symmetry_of_samples() {
        for p in [
            FilterParams::new(0.9, 16),
            FilterParams::normalized(0.9, 16),
        ] {
            let f = laguerre_gauss_filter(&p).unwrap();
            let n = p.size;
            for r in 1..n {
                for c in 1..n {
                    let (mr, mc) = (n - r, n - c);
                    let a = f.get(r, c);
                    let b = f.get(mr, mc);
                    assert!((a + b).norm() <= 1e-15 * a.norm().max(1e-300));
                    assert_eq!(a.norm(), b.norm());
                }
            }
        }
    }

    #[test]
    fn normalized_grid_sample_value() {
        // n = 64, column 40 → x = 8/64 = 0.125, y = 0.
        let f = laguerre_gauss_filter(&FilterParams::normalized(0.9, 64)).unwrap();
        let got = f.get(32, 40).norm();
        let want = PI * PI * 0.9f64.powi(4) * 0.125 * (-PI * PI * 0.81 * 0.015625).exp();
        assert!((got - want).abs() < 1e-14 * want);
    }

    #[test]
    fn pixel_grid_sample_value() {
        // One pixel right of the origin: x = 1.
        let f = laguerre_gauss_filter(&FilterParams::new(0.9, 64)).unwrap();
        let want = PI * PI * 0.9f64.powi(4) * (-PI * PI * 0.81f64).exp();
        assert!((f.get(32, 33).norm() - want).abs() < 1e-15);
        // i·(x + iy) at (x, y) = (1, 0) is purely imaginary.
        assert_eq!(f.get(32, 33).re, 0.0);
    }

    #[test]
    fn spectrum_has_no_dc() {
        for p in [
            FilterParams::new(0.9, 64),
            FilterParams::normalized(0.9, 64),
        ] {
            let spec = dft2_naive(&laguerre_gauss_filter(&p).unwrap());
            let peak = magnitude(&spec).into_iter().fold(0.0, f64::max);
            assert!(spec.get(0, 0).norm() < 1e-6 * peak);
        }
    }

    #[test]
    fn cache_returns_identical_values() {
        let p = FilterParams::new(0.77, 24);
        let fresh = dft2_forward(&laguerre_gauss_filter(&p).unwrap()).unwrap();
        let first = filter_spectrum(&p).unwrap();
        let second = filter_spectrum(&p).unwrap();
        assert_eq!(*first, fresh);
        assert!(Arc::ptr_eq(&first, &second));
    }

    #[test]
    fn construction_is_deterministic() {
        let p = FilterParams::new(0.9, 33);
        assert_eq!(
            laguerre_gauss_filter(&p).unwrap(),
            laguerre_gauss_filter(&p).unwrap()
        );
    }

    #[test]
    fn shifted_spectrum_is_bandpass() {
        let spec = fftshift(&filter_spectrum(&FilterParams::new(0.9, 64)).unwrap());
        let row: Vec<f64> = (0..64).map(|c| spec.get(32, c).norm()).collect();
        assert!(row[32] < 1e-9 * row[48]);
        assert!(row[48] > row[33] && row[48] > row[63]);
    }
}
