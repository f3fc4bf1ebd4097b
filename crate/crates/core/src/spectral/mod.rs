//! Complex matrices and the two-dimensional discrete Fourier transform.
//!
//! Convention: `F[v, u] = Σ_y Σ_x f[y, x] · exp(-2πi (u·x/W + v·y/H))`,
//! unnormalized, indexed `(row, col)` with rows along `y`. The inverse
//! carries the `1/(W·H)` factor.

mod fft;

use std::f64::consts::PI;

pub use num_complex::Complex64;

use self::fft::Fft1d;
use crate::error::{Error, Result};
use crate::imagecore::GrayImage;

/// Row-major complex matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(width: usize, height: usize, data: Vec<Complex64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("complex matrix needs non-zero dimensions"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "complex buffer has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("complex matrix contains a non-finite value"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Complex64::new(0.0, 0.0); width * height],
        }
    }

    /// Real matrix lifted to the complex plane.
    pub fn from_real(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        Self::new(
            width,
            height,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖self − other‖_F / ‖other‖_F`, or the absolute distance when `other`
    /// is zero.
    pub fn relative_error(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let diff = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let reference = other.frobenius_norm();
        if reference == 0.0 {
            diff
        } else {
            diff / reference
        }
    }
}

impl From<&GrayImage> for ComplexMatrix {
    fn from(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

fn check_finite(m: &ComplexMatrix) -> Result<()> {
    if m.data
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::invalid("DFT input contains a non-finite value"));
    }
    Ok(())
}

/// Applies a 1D transform to every row, then every column.
fn transform_2d(m: &ComplexMatrix, inverse: bool) -> ComplexMatrix {
    let (w, h) = (m.width, m.height);
    let mut data = m.data.clone();
    let row_plan = Fft1d::new(w);
    for row in data.chunks_exact_mut(w) {
        if inverse {
            row_plan.inverse(row);
        } else {
            row_plan.forward(row);
        }
    }
    let col_plan = Fft1d::new(h);
    let mut column = vec![Complex64::new(0.0, 0.0); col_plan.len()];
    for c in 0..w {
        for (r, slot) in column.iter_mut().enumerate() {
            *slot = data[r * w + c];
        }
        if inverse {
            col_plan.inverse(&mut column);
        } else {
            col_plan.forward(&mut column);
        }
        for (r, v) in column.iter().enumerate() {
            data[r * w + c] = *v;
        }
    }
    ComplexMatrix {
        width: w,
        height: h,
        data,
    }
}

/// Fast 2D forward DFT (radix-2 or Bluestein per axis).
pub fn dft2_forward(input: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_finite(input)?;
    Ok(transform_2d(input, false))
}

/// 2D inverse DFT with the `1/(W·H)` factor.
pub fn dft2_inverse(input: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_finite(input)?;
    Ok(transform_2d(input, true))
}

/// Literal quadruple-loop evaluation of the forward DFT. O(W²H²); meant as a
/// reference for checking [`dft2_forward`].
pub fn dft2_naive(input: &ComplexMatrix) -> ComplexMatrix {
    let (w, h) = (input.width, input.height);
    let roots = |n: usize| -> Vec<Complex64> {
        (0..n)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect()
    };
    let (wx, wy) = (roots(w), roots(h));
    ComplexMatrix::from_fn(w, h, |v, u| {
        let mut acc = Complex64::new(0.0, 0.0);
        for y in 0..h {
            let ry = wy[(v * y) % h];
            for x in 0..w {
                acc += input.data[y * w + x] * wx[(u * x) % w] * ry;
            }
        }
        acc
    })
}

fn rotate(m: &ComplexMatrix, shift_rows: usize, shift_cols: usize) -> ComplexMatrix {
    let (w, h) = (m.width, m.height);
    let mut data = vec![Complex64::new(0.0, 0.0); m.data.len()];
    for r in 0..h {
        let nr = (r + shift_rows) % h;
        for c in 0..w {
            data[nr * w + (c + shift_cols) % w] = m.data[r * w + c];
        }
    }
    ComplexMatrix {
        width: w,
        height: h,
        data,
    }
}

/// Moves bin `(0, 0)` to `(H/2, W/2)` (floor division).
pub fn fftshift(m: &ComplexMatrix) -> ComplexMatrix {
    rotate(m, m.height / 2, m.width / 2)
}

/// Inverse of [`fftshift`] for every size.
pub fn ifftshift(m: &ComplexMatrix) -> ComplexMatrix {
    rotate(m, m.height.div_ceil(2), m.width.div_ceil(2))
}

/// Element-wise product; the spectral form of circular convolution.
pub fn pointwise_mul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::invalid(format!(
            "pointwise product of {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(ComplexMatrix {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

/// Element-wise modulus, row-major, same shape as `m`.
pub fn magnitude(m: &ComplexMatrix) -> Vec<f64> {
    m.data.iter().map(|z| z.norm()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pseudo_random(w: usize, h: usize, seed: u64) -> ComplexMatrix {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        ComplexMatrix::from_fn(w, h, |_, _| c(next(), next()))
    }

    #[test]
    fn zeros_and_constant() {
        let z = ComplexMatrix::zeros(8, 8);
        assert!(dft2_forward(&z)
            .unwrap()
            .data()
            .iter()
            .all(|v| v.norm() == 0.0));
        let k = ComplexMatrix::from_real(8, 8, &[0.3; 64]).unwrap();
        let f = dft2_forward(&k).unwrap();
        assert!((f.get(0, 0) - c(0.3 * 64.0, 0.0)).norm() < 1e-12);
        for (i, v) in f.data().iter().enumerate().skip(1) {
            assert!(v.norm() < 1e-9 * 0.3 * 64.0, "bin {i}");
        }
    }

    #[test]
    fn rectangular_fast_matches_naive() {
        let m = pseudo_random(6, 4, 3);
        let err = dft2_forward(&m).unwrap().relative_error(&dft2_naive(&m));
        assert!(err < 1e-12, "err {err}");
    }

    #[test]
    fn inverse_round_trip() {
        let m = pseudo_random(12, 8, 5);
        let back = dft2_inverse(&dft2_forward(&m).unwrap()).unwrap();
        assert!(back.relative_error(&m) < 1e-13);
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = ComplexMatrix::zeros(2, 2);
        m.data[1] = c(f64::NAN, 0.0);
        assert!(matches!(dft2_forward(&m), Err(Error::InvalidArgument(_))));
        assert!(ComplexMatrix::new(1, 1, vec![c(f64::INFINITY, 0.0)]).is_err());
    }

    #[test]
    fn shift_examples() {
        let row = ComplexMatrix::from_real(4, 1, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        let re: Vec<f64> = fftshift(&row).data().iter().map(|z| z.re).collect();
        assert_eq!(re, vec![2.0, 3.0, 0.0, 1.0]);

        let mut delta = ComplexMatrix::zeros(4, 4);
        delta.data[0] = c(1.0, 0.0);
        let s = fftshift(&delta);
        assert_eq!(s.get(2, 2), c(1.0, 0.0));
        assert_eq!(fftshift(&s), delta);
    }

    #[test]
    fn ifftshift_inverts_odd_sizes() {
        let m = pseudo_random(5, 3, 9);
        assert_eq!(ifftshift(&fftshift(&m)), m);
        assert_eq!(fftshift(&ifftshift(&m)), m);
    }

    #[test]
    fn pointwise_identities() {
        let a = pseudo_random(3, 3, 1);
        let ones = ComplexMatrix::from_real(3, 3, &[1.0; 9]).unwrap();
        assert_eq!(pointwise_mul(&a, &ones).unwrap(), a);
        let zero = pointwise_mul(&a, &ComplexMatrix::zeros(3, 3)).unwrap();
        assert!(zero.data().iter().all(|z| z.norm() == 0.0));
        assert!(pointwise_mul(&a, &ComplexMatrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn magnitude_examples() {
        let m = ComplexMatrix::new(2, 1, vec![c(3.0, 4.0), c(-2.0, 0.0)]).unwrap();
        assert_eq!(magnitude(&m), vec![5.0, 2.0]);
        let r = pseudo_random(4, 4, 2);
        assert_eq!(
            magnitude(&fftshift(&r)),
            magnitude(&fftshift(
                &ComplexMatrix::from_real(4, 4, &magnitude(&r)).unwrap()
            ))
        );
    }
}
