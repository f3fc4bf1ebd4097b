//! Image representation and the geometric operations used before feature
//! extraction.
//!
//! Intensities are kept as `f64` in `[0, 1]` everywhere; quantization to
//! 8 bits happens only when reading or writing files.

mod dataset;
mod io;

pub use dataset::{augment_dataset, Augmentation, LabeledDataset, Split};
pub use io::{
    decode_pgm, encode_pgm, load_dataset_dir, read_image, read_pgm, write_dataset_dir, write_pgm,
};

use crate::error::{Error, Result};

/// Single-channel image, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Three-channel image, row-major `(r, g, b)` triples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    /// Left-to-right mirror (columns reversed).
    Horizontal,
    /// Top-to-bottom mirror (rows reversed).
    Vertical,
}

impl GrayImage {
    /// Builds an image, rejecting a wrong buffer length or values outside
    /// `[0, 1]`.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image buffer has {} values, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image, clamping every value into `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    /// Multiplies every intensity by `factor`, clamping into `[0, 1]`.
    pub fn scaled(&self, factor: f64) -> Self {
        let data = self
            .data
            .iter()
            .map(|v| (v * factor).clamp(0.0, 1.0))
            .collect();
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Bilinear resize using pixel-center alignment.
    pub fn resize(&self, out_w: usize, out_h: usize) -> Result<Self> {
        if out_w == 0 || out_h == 0 {
            return Err(Error::invalid(format!(
                "resize target {out_w}x{out_h} has a zero dimension"
            )));
        }
        if out_w == self.width && out_h == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut data = Vec::with_capacity(out_w * out_h);
        for r in 0..out_h {
            let y = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            for c in 0..out_w {
                let x = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                data.push(self.bilinear(x, y));
            }
        }
        Ok(Self {
            width: out_w,
            height: out_h,
            data,
        })
    }

    /// Rotates counter-clockwise by `degrees` about the image center.
    /// Samples that fall outside the source read `fill`.
    pub fn rotate(&self, degrees: f64, fill: f64) -> Self {
        let (sin, cos) = exact_sin_cos(degrees);
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        const EDGE: f64 = 1e-9;
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.height {
            let dy = r as f64 - cy;
            for c in 0..self.width {
                let dx = c as f64 - cx;
                // Inverse map: rotate the output position back by -degrees.
                // Rows grow downward, so a visual counter-clockwise turn is a
                // clockwise turn in (col, row) coordinates.
                let sx = cos * dx - sin * dy + cx;
                let sy = sin * dx + cos * dy + cy;
                if sx < -EDGE || sy < -EDGE || sx > max_x + EDGE || sy > max_y + EDGE {
                    data.push(fill);
                } else {
                    data.push(self.bilinear(sx.clamp(0.0, max_x), sy.clamp(0.0, max_y)));
                }
            }
        }
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn flip(&self, axis: FlipAxis) -> Self {
        let (w, h) = (self.width, self.height);
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..h {
            for c in 0..w {
                let (sr, sc) = match axis {
                    FlipAxis::Horizontal => (r, w - 1 - c),
                    FlipAxis::Vertical => (h - 1 - r, c),
                };
                data.push(self.data[sr * w + sc]);
            }
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }

    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let at = |r: usize, c: usize| self.data[r * self.width + c];
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        // Bilinear weights are convex; clamp only guards last-ulp overshoot.
        (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0)
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
fn exact_sin_cos(degrees: f64) -> (f64, f64) {
    let turn = degrees.rem_euclid(360.0);
    if turn == 0.0 {
        (0.0, 1.0)
    } else if turn == 90.0 {
        (1.0, 0.0)
    } else if turn == 180.0 {
        (0.0, -1.0)
    } else if turn == 270.0 {
        (-1.0, 0.0)
    } else {
        turn.to_radians().sin_cos()
    }
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "rgb buffer has {} pixels, expected {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("rgb channel outside [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    /// ITU-R BT.601 luma.
    pub fn to_grayscale(&self) -> GrayImage {
        let data = self
            .data
            .iter()
            .map(|&[r, g, b]| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0))
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, v: &[f64]) -> GrayImage {
        GrayImage::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn grayscale_weights() {
        let rgb = RgbImage::new(
            3,
            1,
            vec![[1.0, 1.0, 1.0], [0.3, 0.3, 0.3], [1.0, 0.0, 0.0]],
        )
        .unwrap();
        let g = rgb.to_grayscale();
        assert!((g.data()[0] - 1.0).abs() < 1e-12);
        assert!((g.data()[1] - 0.3).abs() < 1e-12);
        assert!((g.data()[2] - 0.299).abs() < 1e-15);
    }

    #[test]
    fn grayscale_is_idempotent_on_gray() {
        let g = img(2, 2, &[0.1, 0.5, 0.9, 0.0]);
        let again = RgbImage::from_gray(&g).to_grayscale();
        for (a, b) in g.data().iter().zip(again.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(RgbImage::new(1, 1, vec![[0.0, -0.1, 0.0]]).is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let a = img(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(a.resize(3, 2).unwrap(), a);
        let c = GrayImage::filled(5, 7, 0.37).unwrap();
        let r = c.resize(11, 3).unwrap();
        assert!(r.data().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn resize_checkerboard_to_single_pixel() {
        let a = img(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = a.resize(1, 1).unwrap();
        assert_eq!(r.data(), &[0.5]);
    }

    #[test]
    fn resize_rejects_zero() {
        let a = img(1, 1, &[0.0]);
        assert!(matches!(a.resize(0, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn resize_round_trip_smooth() {
        let n = 16;
        let data: Vec<f64> = (0..n * n)
            .map(|i| {
                let (r, c) = ((i / n) as f64, (i % n) as f64);
                0.5 + 0.4 * (r / 5.0).sin() * (c / 7.0).cos()
            })
            .collect();
        let a = img(n, n, &data);
        let back = a.resize(2 * n, 2 * n).unwrap().resize(n, n).unwrap();
        let mae: f64 = a
            .data()
            .iter()
            .zip(back.data())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / (n * n) as f64;
        assert!(mae < 0.05, "mae {mae}");
    }

    #[test]
    fn rotate_identity_and_full_turn() {
        let a = img(3, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(a.rotate(0.0, 0.0), a);
        let full = a.rotate(360.0, 0.0);
        for (x, y) in a.data().iter().zip(full.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn rotate_90_is_a_permutation() {
        // [[a, b], [c, d]] turned a quarter counter-clockwise is [[b, d], [a, c]].
        let a = img(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let r = a.rotate(90.0, 0.0);
        assert_eq!(r.data(), &[0.2, 0.4, 0.1, 0.3]);
        let r270 = a.rotate(270.0, 0.0);
        assert_eq!(r270.data(), &[0.3, 0.1, 0.4, 0.2]);
    }

    #[test]
    fn rotate_fills_outside() {
        let a = GrayImage::filled(8, 8, 1.0).unwrap();
        let r = a.rotate(45.0, 0.0);
        assert_eq!(r.get(0, 0), 0.0);
        assert_eq!(r.get(4, 4), 1.0);
    }

    #[test]
    fn flips() {
        let a = img(2, 1, &[0.0, 1.0]);
        assert_eq!(a.flip(FlipAxis::Horizontal).data(), &[1.0, 0.0]);
        let b = img(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            assert_eq!(b.flip(axis).flip(axis), b);
        }
        assert_eq!(
            b.flip(FlipAxis::Vertical).data(),
            &[0.4, 0.5, 0.6, 0.1, 0.2, 0.3]
        );
    }

    #[test]
    fn double_flip_is_half_turn_on_4x4() {
        let data: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let a = img(4, 4, &data);
        let flipped = a.flip(FlipAxis::Vertical).flip(FlipAxis::Horizontal);
        // Exhaustive permutation check: (r, c) -> (3 - r, 3 - c).
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(flipped.get(r, c), a.get(3 - r, 3 - c));
            }
        }
        assert_eq!(flipped, a.rotate(180.0, 0.0));
    }
}
