//! Synthetic geometric-shapes corpus: filled (or outlined) circles/ellipses,
//! squares/rectangles and triangles, anti-aliased by 4×4 supersampling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::{GrayImage, LabeledDataset, Split};

const SUPERSAMPLE: usize = 4;
/// Smallest allowed interior angle of a triangle, degrees.
pub const MIN_TRIANGLE_ANGLE: f64 = 15.0;
pub const MIN_SCALE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Circle,
    Square,
    Triangle,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Circle, ShapeClass::Square, ShapeClass::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Circle => "circle",
            ShapeClass::Square => "square",
            ShapeClass::Triangle => "triangle",
        }
    }
}

/// Everything needed to draw one shape.
///
/// `scale` is the half-length of the major axis for ellipses, the
/// half-diagonal for rectangles and the circumradius of the undeformed
/// triangle. `aspect` squeezes the minor axis; `skew` slides the triangle
/// apex sideways as a fraction of `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSpec {
    pub class: ShapeClass,
    pub center: (f64, f64),
    pub scale: f64,
    pub rotation_deg: f64,
    pub aspect: f64,
    pub skew: f64,
    /// Outline width in pixels; `None` draws a filled shape.
    pub stroke: Option<f64>,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
}

enum Geometry {
    Ellipse { a: f64, b: f64 },
    Polygon(Vec<(f64, f64)>),
}

impl ShapeSpec {
    fn geometry(&self) -> Result<Geometry> {
        let s = self.scale;
        let q = self.aspect;
        Ok(match self.class {
            ShapeClass::Circle => Geometry::Ellipse { a: s, b: s * q },
            ShapeClass::Square => {
                let h = s / (1.0 + q * q).sqrt();
                Geometry::Polygon(vec![(-h, -h * q), (h, -h * q), (h, h * q), (-h, h * q)])
            }
            ShapeClass::Triangle => {
                let half = 3f64.sqrt() / 2.0;
                let verts = vec![
                    (s * self.skew, -s * q),
                    (-s * half, s * q * 0.5),
                    (s * half, s * q * 0.5),
                ];
                let min_angle = min_interior_angle(&verts);
                if min_angle < MIN_TRIANGLE_ANGLE {
                    return Err(Error::invalid(format!(
                        "triangle interior angle {min_angle:.1}° is below {MIN_TRIANGLE_ANGLE}°"
                    )));
                }
                Geometry::Polygon(verts)
            }
        })
    }

    /// Half-extents of the axis-aligned bounding box after rotation.
    fn half_extents(&self, geometry: &Geometry) -> (f64, f64) {
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        match geometry {
            Geometry::Ellipse { a, b } => (
                ((a * cos).powi(2) + (b * sin).powi(2)).sqrt(),
                ((a * sin).powi(2) + (b * cos).powi(2)).sqrt(),
            ),
            Geometry::Polygon(verts) => verts.iter().fold((0.0, 0.0), |(hx, hy), &(x, y)| {
                let rx = cos * x - sin * y;
                let ry = sin * x + cos * y;
                (f64::max(hx, rx.abs()), f64::max(hy, ry.abs()))
            }),
        }
    }

    fn validate(&self, n: usize) -> Result<Geometry> {
        if self.scale.is_nan() || self.scale < MIN_SCALE {
            return Err(Error::invalid(format!(
                "shape scale {} is below {MIN_SCALE} px",
                self.scale
            )));
        }
        if !(self.aspect > 0.0 && self.aspect <= 1.0) {
            return Err(Error::invalid(format!(
                "aspect {} outside (0, 1]",
                self.aspect
            )));
        }
        if self.noise.is_nan() || self.noise < 0.0 {
            return Err(Error::invalid("noise level must be non-negative"));
        }
        if let Some(t) = self.stroke {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::invalid("stroke width must be positive"));
            }
        }
        let geometry = self.geometry()?;
        let (hx, hy) = self.half_extents(&geometry);
        let (cx, cy) = self.center;
        let size = n as f64;
        // Allow for offsets in the last digit when a vertex touches the edge.
        let tol = 1e-9;
        if cx - hx < -tol || cy - hy < -tol || cx + hx > size + tol || cy + hy > size + tol {
            return Err(Error::invalid(format!(
                "shape around ({cx:.2}, {cy:.2}) with half extents ({hx:.2}, {hy:.2}) exceeds the {n}x{n} canvas"
            )));
        }
        Ok(geometry)
    }
}

fn min_interior_angle(verts: &[(f64, f64)]) -> f64 {
    (0..verts.len())
        .map(|i| {
            let p = verts[i];
            let a = verts[(i + 1) % verts.len()];
            let b = verts[(i + 2) % verts.len()];
            let (ux, uy) = (a.0 - p.0, a.1 - p.1);
            let (vx, vy) = (b.0 - p.0, b.1 - p.1);
            let cos =
                (ux * vx + uy * vy) / ((ux * ux + uy * uy).sqrt() * (vx * vx + vy * vy).sqrt());
            cos.clamp(-1.0, 1.0).acos().to_degrees()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Signed distances of `p` to the edges of a convex polygon, positive inside.
fn min_edge_distance(verts: &[(f64, f64)], orientation: f64, p: (f64, f64)) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..verts.len() {
        let (x0, y0) = verts[i];
        let (x1, y1) = verts[(i + 1) % verts.len()];
        let (ex, ey) = (x1 - x0, y1 - y0);
        let cross = ex * (p.1 - y0) - ey * (p.0 - x0);
        best = best.min(orientation * cross / (ex * ex + ey * ey).sqrt());
    }
    best
}

fn covered(geometry: &Geometry, orientation: f64, stroke: Option<f64>, p: (f64, f64)) -> bool {
    match geometry {
        Geometry::Ellipse { a, b } => {
            let inside = (p.0 / a).powi(2) + (p.1 / b).powi(2) <= 1.0;
            match stroke {
                Some(t) if a - t > 0.0 && b - t > 0.0 => {
                    inside && (p.0 / (a - t)).powi(2) + (p.1 / (b - t)).powi(2) > 1.0
                }
                _ => inside,
            }
        }
        Geometry::Polygon(verts) => {
            let d = min_edge_distance(verts, orientation, p);
            match stroke {
                Some(t) => d >= 0.0 && d < t,
                None => d >= 0.0,
            }
        }
    }
}

/// Renders a white shape on a black n×n canvas, then adds noise.
pub fn render_shape(spec: &ShapeSpec, n: usize) -> Result<GrayImage> {
    let geometry = spec.validate(n)?;
    let orientation = match &geometry {
        Geometry::Polygon(v) => {
            let (a, b, c) = (v[0], v[1], v[2]);
            ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).signum()
        }
        Geometry::Ellipse { .. } => 1.0,
    };
    let (sin, cos) = spec.rotation_deg.to_radians().sin_cos();
    let (cx, cy) = spec.center;
    let (hx, hy) = spec.half_extents(&geometry);
    let col_range =
        ((cx - hx).floor().max(0.0) as usize)..((cx + hx).ceil().min(n as f64) as usize);
    let row_range =
        ((cy - hy).floor().max(0.0) as usize)..((cy + hy).ceil().min(n as f64) as usize);
    let per_pixel = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut data = vec![0.0; n * n];
    for r in row_range {
        for c in col_range.clone() {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                let y = r as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64 - cy;
                for sx in 0..SUPERSAMPLE {
                    let x = c as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64 - cx;
                    // Undo the rotation to get shape-local coordinates.
                    let local = (cos * x + sin * y, -sin * x + cos * y);
                    if covered(&geometry, orientation, spec.stroke, local) {
                        hits += 1;
                    }
                }
            }
            data[r * n + c] = hits as f64 / per_pixel;
        }
    }
    if spec.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid(e.to_string()))?;
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    GrayImage::from_clamped(n, n, data)
}

/// Parameter ranges for random shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeRanges {
    pub min_scale: f64,
    pub aspect: (f64, f64),
    pub noise: (f64, f64),
    pub skew: (f64, f64),
    pub stroke_probability: f64,
    pub stroke_width: (f64, f64),
}

impl Default for ShapeRanges {
    fn default() -> Self {
        Self {
            min_scale: 8.0,
            aspect: (0.5, 1.0),
            noise: (0.0, 0.05),
            skew: (-0.3, 0.3),
            stroke_probability: 0.0,
            stroke_width: (1.5, 3.5),
        }
    }
}

/// Draws a random valid spec of `class` for an n×n canvas.
pub fn sample_spec<R: Rng>(
    rng: &mut R,
    class: ShapeClass,
    n: usize,
    ranges: &ShapeRanges,
) -> Result<ShapeSpec> {
    let max_scale = n as f64 / 2.0 - 2.0;
    if max_scale < MIN_SCALE {
        return Err(Error::invalid(format!(
            "canvas {n} is too small for shapes"
        )));
    }
    let low = ranges.min_scale.clamp(MIN_SCALE, max_scale);
    let uniform = |rng: &mut R, (a, b): (f64, f64)| if a < b { rng.random_range(a..b) } else { a };
    let scale = uniform(rng, (low, max_scale));
    let rotation_deg = uniform(rng, (0.0, 360.0));
    let aspect = uniform(rng, ranges.aspect);
    let noise = uniform(rng, ranges.noise);
    let stroke = (rng.random::<f64>() < ranges.stroke_probability)
        .then(|| uniform(rng, ranges.stroke_width));
    let seed = rng.random();
    let mut spec = ShapeSpec {
        class,
        center: (0.0, 0.0),
        scale,
        rotation_deg,
        aspect,
        skew: 0.0,
        stroke,
        noise,
        seed,
    };
    if class == ShapeClass::Triangle {
        loop {
            spec.skew = uniform(rng, ranges.skew);
            if spec.geometry().is_ok() {
                break;
            }
        }
    }
    let (hx, hy) = spec.half_extents(&spec.geometry()?);
    let size = n as f64;
    let place = |rng: &mut R, half: f64| {
        let (lo, hi) = (half + 0.5, size - half - 0.5);
        if lo < hi {
            rng.random_range(lo..hi)
        } else {
            size / 2.0
        }
    };
    spec.center = (place(rng, hx), place(rng, hy));
    Ok(spec)
}

/// Per-class instance counts for train, validation and test.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub counts: [[usize; 3]; 3],
    pub size: usize,
    pub seed: u64,
    pub ranges: ShapeRanges,
}

/// Class counts of the reference corpus (circles, squares, triangles).
pub const REFERENCE_COUNTS: [[usize; 3]; 3] =
    [[3277, 4058, 3608], [859, 803, 720], [889, 847, 600]];

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            counts: REFERENCE_COUNTS,
            size: 64,
            seed: 0,
            ranges: ShapeRanges::default(),
        }
    }
}

impl SynthConfig {
    /// Same counts for every class: `per_class[split]`.
    pub fn uniform(train: usize, val: usize, test: usize) -> Self {
        Self {
            counts: [[train; 3], [val; 3], [test; 3]],
            ..Self::default()
        }
    }
}

/// SplitMix64 finalizer, used to give every item an independent stream.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D1_049B_133B_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn split_index(split: Split) -> u64 {
    match split {
        Split::Train => 0,
        Split::Validation => 1,
        Split::Test => 2,
    }
}

/// Generates train, validation and test sets. Items are ordered by class,
/// then index; each item draws from a stream keyed by
/// `(seed, split, class, index)`, so splits never share draws.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<[LabeledDataset<GrayImage>; 3]> {
    let names: Vec<String> = ShapeClass::ALL
        .iter()
        .map(|c| c.name().to_string())
        .collect();
    let build = |split: Split| -> Result<LabeledDataset<GrayImage>> {
        let counts = cfg.counts[split_index(split) as usize];
        let jobs: Vec<(usize, usize)> = (0..3)
            .flat_map(|class| (0..counts[class]).map(move |i| (class, i)))
            .collect();
        let items = jobs
            .par_iter()
            .map(|&(class, i)| {
                let seed = mix_seed(&[cfg.seed, split_index(split), class as u64, i as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let spec = sample_spec(&mut rng, ShapeClass::ALL[class], cfg.size, &cfg.ranges)?;
                Ok((render_shape(&spec, cfg.size)?, class))
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(items, names.clone(), split)
    };
    Ok([
        build(Split::Train)?,
        build(Split::Validation)?,
        build(Split::Test)?,
    ])
}

/// Two-class stand-in for scene imagery: class 0 ("background") is a smooth
/// random texture, class 1 ("object") is the same kind of texture with a
/// bright shape drawn over it.
pub fn generate_binary_proxy(
    counts: [usize; 2],
    n: usize,
    seed: u64,
    split: Split,
) -> Result<LabeledDataset<GrayImage>> {
    let jobs: Vec<(usize, usize)> = (0..2)
        .flat_map(|class| (0..counts[class]).map(move |i| (class, i)))
        .collect();
    let items = jobs
        .par_iter()
        .map(|&(class, i)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
                seed,
                100 + split_index(split),
                class as u64,
                i as u64,
            ]));
            let mut canvas = texture(&mut rng, n);
            if class == 1 {
                let shape_class = ShapeClass::ALL[rng.random_range(0..3)];
                let ranges = ShapeRanges {
                    min_scale: 6.0,
                    ..ShapeRanges::default()
                };
                let spec = sample_spec(&mut rng, shape_class, n, &ranges)?;
                let shape = render_shape(&ShapeSpec { noise: 0.0, ..spec }, n)?;
                for (v, s) in canvas.iter_mut().zip(shape.data()) {
                    *v = *v * (1.0 - s) + s;
                }
            }
            Ok((GrayImage::from_clamped(n, n, canvas)?, class))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(items, vec!["background".into(), "object".into()], split)
}

fn texture<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.5..4.0) * 2.0 * PI / n as f64,
                rng.random_range(0.0..PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.02..0.08),
            )
        })
        .collect();
    let base = rng.random_range(0.25..0.55);
    let noise = Normal::new(0.0, 0.03).expect("valid sigma");
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let mut v = base;
            for &(freq, dir, phase, amp) in &waves {
                let t = (c as f64 * dir.cos() + r as f64 * dir.sin()) * freq;
                v += amp * (t + phase).sin();
            }
            out.push(v + noise.sample(rng));
        }
    }
    out
}
