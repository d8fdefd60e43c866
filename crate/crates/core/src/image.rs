//! Grayscale raster utilities: integer shifts, small rotations, moment-based
//! deskewing and generation of transformation tangents.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::FeatureVector;

pub const MAX_ROTATION_DEGREES: f64 = 15.0;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || width * height != pixels.len() {
            return Err(Error::InvalidInput(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "pixel intensity {v} outside [0, 1]"
            )));
        }
        Ok(RasterImage {
            width,
            height,
            pixels,
        })
    }

    pub fn blank(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height])
    }

    /// Builds an image from raw values, clamping them into `[0, 1]`.
    fn clamped(width: usize, height: usize, mut pixels: Vec<f64>) -> Self {
        for v in &mut pixels {
            *v = v.clamp(0.0, 1.0);
        }
        RasterImage {
            width,
            height,
            pixels,
        }
    }

    pub fn from_feature(width: usize, height: usize, v: &FeatureVector) -> Result<Self> {
        Self::new(width, height, v.to_vec())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn total_intensity(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn to_feature(&self) -> FeatureVector {
        FeatureVector::new(self.pixels.clone()).expect("pixels are finite and non-empty")
    }

    /// Intensity centroid `(x̄, ȳ)`.
    pub fn centroid(&self) -> Result<(f64, f64)> {
        let m = self.moments()?;
        Ok((m.cx, m.cy))
    }

    pub fn moments(&self) -> Result<Moments> {
        let total = self.total_intensity();
        if total <= 0.0 {
            return Err(Error::BlankImage);
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = self.get(x, y);
                sx += v * x as f64;
                sy += v * y as f64;
            }
        }
        let (cx, cy) = (sx / total, sy / total);
        let (mut mu11, mut mu02, mut mu20) = (0.0, 0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = self.get(x, y);
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                mu11 += v * dx * dy;
                mu02 += v * dy * dy;
                mu20 += v * dx * dx;
            }
        }
        Ok(Moments {
            total,
            cx,
            cy,
            mu11,
            mu02,
            mu20,
        })
    }
}

/// Zeroth, first and second-order central moments (x = column, y = row).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub total: f64,
    pub cx: f64,
    pub cy: f64,
    pub mu11: f64,
    pub mu02: f64,
    pub mu20: f64,
}

impl Moments {
    /// Horizontal drift of the mass per row, `μ₁₁ / μ₀₂`.
    pub fn skew(&self) -> f64 {
        if self.mu02 > 0.0 {
            self.mu11 / self.mu02
        } else {
            0.0
        }
    }
}

/// Integer translation; exposed pixels are zero.
pub fn shift(img: &RasterImage, dx: i64, dy: i64) -> Result<RasterImage> {
    let limit = img.width.min(img.height) as i64;
    if 2 * dx.abs() > limit || 2 * dy.abs() > limit {
        return Err(Error::ShiftTooLarge { dx, dy });
    }
    let (w, h) = (img.width as i64, img.height as i64);
    let mut out = vec![0.0; img.pixels.len()];
    for y in 0..h {
        let sy = y - dy;
        if !(0..h).contains(&sy) {
            continue;
        }
        for x in 0..w {
            let sx = x - dx;
            if (0..w).contains(&sx) {
                out[(y * w + x) as usize] = img.pixels[(sy * w + sx) as usize];
            }
        }
    }
    Ok(RasterImage::clamped(img.width, img.height, out))
}

/// Rotation about the image center by `degrees` (counter-clockwise as
/// displayed, rows growing downward). Each source pixel is splatted onto the
/// four output pixels around its rotated position with bilinear weights, so
/// mass is conserved except where it leaves the frame.
pub fn rotate_small(img: &RasterImage, degrees: f64) -> Result<RasterImage> {
    if !(degrees.abs() <= MAX_ROTATION_DEGREES) {
        return Err(Error::AngleTooLarge(degrees));
    }
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width, img.height);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = vec![0.0; img.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let v = img.get(x, y);
            if v == 0.0 {
                continue;
            }
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let tx = c * dx + s * dy + cx;
            let ty = -s * dx + c * dy + cy;
            splat(&mut out, w, h, tx, ty, v);
        }
    }
    Ok(RasterImage::clamped(w, h, out))
}

fn splat(out: &mut [f64], w: usize, h: usize, x: f64, y: f64, v: f64) {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    for (oy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (ox, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (px, py) = (x0 as i64 + ox, y0 as i64 + oy);
            let weight = wx * wy;
            if weight > 0.0 && px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                out[py as usize * w + px as usize] += weight * v;
            }
        }
    }
}

/// Samples row `y` at fractional column `x` by linear interpolation, zero
/// outside the frame.
#[inline]
fn sample_row(img: &RasterImage, y: usize, x: f64) -> f64 {
    let x0 = x.floor();
    let f = x - x0;
    let i = x0 as i64;
    let at = |k: i64| {
        if k >= 0 && (k as usize) < img.width {
            img.get(k as usize, y)
        } else {
            0.0
        }
    };
    if f == 0.0 {
        at(i)
    } else {
        (1.0 - f) * at(i) + f * at(i + 1)
    }
}

/// Resamples every row `y` at `x + offset(y)`.
fn resample_rows(img: &RasterImage, offset: impl Fn(f64) -> f64) -> RasterImage {
    let (w, h) = (img.width, img.height);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let o = offset(y as f64);
        for x in 0..w {
            out[y * w + x] = sample_row(img, y, x as f64 + o);
        }
    }
    RasterImage::clamped(w, h, out)
}

/// Moment-based shear correction.
///
/// Each row is resampled at `x + (μ₁₁/μ₀₂)(y − ȳ)`, which makes the mass of
/// every row line up vertically, then the result is translated so that its
/// centroid returns to the original one.
pub fn deskew(img: &RasterImage) -> Result<RasterImage> {
    let m = img.moments()?;
    let skew = m.skew();
    if skew == 0.0 {
        return Ok(img.clone());
    }
    let sheared = resample_rows(img, |y| skew * (y - m.cy));
    let drift = match sheared.centroid() {
        Ok((cx, _)) => cx - m.cx,
        // everything sheared out of frame
        Err(_) => return Ok(sheared),
    };
    if drift.abs() <= 1e-12 {
        return Ok(sheared);
    }
    Ok(resample_rows(&sheared, |_| drift))
}

/// A transformation whose effect at `x₀` defines a tangent direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Shift { dx: i64, dy: i64 },
    Rotate { degrees: f64 },
}

impl Transform {
    pub fn apply(&self, img: &RasterImage) -> Result<RasterImage> {
        match *self {
            Transform::Shift { dx, dy } => shift(img, dx, dy),
            Transform::Rotate { degrees } => rotate_small(img, degrees),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Shift { dx, dy } => write!(f, "dshift:{dx}:{dy}"),
            Transform::Rotate { degrees } => write!(f, "drot:{degrees}"),
        }
    }
}

/// Parsed list of transformations.
///
/// Comma-separated items:
/// `shift:N` four shifts by N pixels along the axes, `shift8:N` the eight
/// shifts including diagonals, `dshift:DX:DY` one shift, `rot:DEG` rotations
/// by ±DEG and `drot:DEG` one rotation. The empty string is the empty list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TangentSpec(pub Vec<Transform>);

impl TangentSpec {
    /// Four unit shifts.
    pub fn unit_shifts() -> Self {
        TangentSpec(axis_shifts(1))
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn axis_shifts(n: i64) -> Vec<Transform> {
    vec![
        Transform::Shift { dx: n, dy: 0 },
        Transform::Shift { dx: -n, dy: 0 },
        Transform::Shift { dx: 0, dy: n },
        Transform::Shift { dx: 0, dy: -n },
    ]
}

impl FromStr for TangentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |item: &str| Error::InvalidConfig(format!("bad tangent descriptor '{item}'"));
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            let int = |k: usize| -> Result<i64> {
                parts
                    .get(k)
                    .and_then(|p| p.parse().ok())
                    .ok_or_else(|| bad(item))
            };
            let real = |k: usize| -> Result<f64> {
                parts
                    .get(k)
                    .and_then(|p| p.parse().ok())
                    .ok_or_else(|| bad(item))
            };
            match (parts[0], parts.len()) {
                ("shift", 2) => out.extend(axis_shifts(int(1)?)),
                ("shift8", 2) => {
                    let n = int(1)?;
                    out.extend(axis_shifts(n));
                    for (dx, dy) in [(n, n), (n, -n), (-n, n), (-n, -n)] {
                        out.push(Transform::Shift { dx, dy });
                    }
                }
                ("dshift", 3) => out.push(Transform::Shift {
                    dx: int(1)?,
                    dy: int(2)?,
                }),
                ("rot", 2) => {
                    let d = real(1)?;
                    out.push(Transform::Rotate { degrees: d });
                    out.push(Transform::Rotate { degrees: -d });
                }
                ("drot", 2) => out.push(Transform::Rotate { degrees: real(1)? }),
                _ => return Err(bad(item)),
            }
        }
        Ok(TangentSpec(out))
    }
}

impl fmt::Display for TangentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(Transform::to_string).collect();
        f.write_str(&items.join(","))
    }
}

/// Flattened `T_j(img)` for each transformation, in order.
pub fn make_tangents(img: &RasterImage, spec: &[Transform]) -> Result<Vec<FeatureVector>> {
    spec.iter()
        .map(|t| t.apply(img).map(|out| out.to_feature()))
        .collect()
}
