//! Pinhole camera model, per-pixel geometric grids, and the camera-facing
//! normal convention.
//!
//! Camera frame: +x right, +y down, +z forward. Every stored normal faces the
//! camera, i.e. has a negative dot product with the ray through its point.

use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Image coordinates: `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Pixel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0) {
            return Err(Error::Intrinsics("fx must be positive".into()));
        }
        if !(fy.is_finite() && fy > 0.0) {
            return Err(Error::Intrinsics("fy must be positive".into()));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::Intrinsics("principal point must be finite".into()));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Ray through pixel `(u, v)` scaled so that its z component is 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn ray_at(&self, p: Pixel) -> Vec3 {
        self.ray(p.x as f64, p.y as f64)
    }

    #[inline]
    pub fn unproject_pixel(&self, p: Pixel, depth: f64) -> Vec3 {
        Vec3::new(
            (p.x as f64 - self.cx) / self.fx * depth,
            (p.y as f64 - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Image coordinates of a camera-frame point with `z > 0`.
    #[inline]
    pub fn project(&self, point: &Vec3) -> (f64, f64) {
        (
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        )
    }
}

/// Row-major grid of values with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub values: Vec<T>,
    pub valid: Vec<bool>,
}

pub type DepthMap = Grid<f64>;
pub type PointMap = Grid<Vec3>;
pub type NormalMap = Grid<Vec3>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T, valid: bool) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
            valid: vec![valid; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_parts(
        width: usize,
        height: usize,
        values: Vec<T>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if values.len() != n || valid.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} grid needs {n} entries, got {} values and {} mask flags",
                values.len(),
                valid.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, p: Pixel) -> usize {
        p.y * self.width + p.x
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> Pixel {
        Pixel::new(index % self.width, index / self.width)
    }

    #[inline]
    pub fn contains(&self, p: Pixel) -> bool {
        p.x < self.width && p.y < self.height
    }

    #[inline]
    pub fn is_valid(&self, p: Pixel) -> bool {
        self.contains(p) && self.valid[self.index(p)]
    }

    #[inline]
    pub fn get(&self, p: Pixel) -> Option<&T> {
        if self.is_valid(p) {
            Some(&self.values[self.index(p)])
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_shape<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Iterator over all pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Pixel::new(x, y)))
    }
}

impl DepthMap {
    /// Depth map whose mask marks every finite positive value valid.
    pub fn from_depths(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Self::from_parts(width, height, values, valid)
    }

    /// Checks `values > 0` wherever the mask is set.
    pub fn validate(&self) -> Result<()> {
        for (i, (&d, &ok)) in self.values.iter().zip(&self.valid).enumerate() {
            if ok && !(d.is_finite() && d > 0.0) {
                return Err(Error::Domain(format!(
                    "depth {d} at pixel {} is not positive",
                    self.pixel(i)
                )));
            }
        }
        Ok(())
    }
}

/// Back-projects every valid depth through the pinhole model.
pub fn unproject(depth: &DepthMap, k: &Intrinsics) -> PointMap {
    let values = depth
        .values
        .iter()
        .zip(&depth.valid)
        .enumerate()
        .map(|(i, (&d, &ok))| {
            if ok {
                k.unproject_pixel(depth.pixel(i), d)
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    Grid {
        width: depth.width,
        height: depth.height,
        values,
        valid: depth.valid.clone(),
    }
}

/// Flips `n` so that it faces the camera as seen from `p`.
///
/// Exact tangency (`n · p == 0`) leaves `n` unchanged.
#[inline]
pub fn orient_to_camera(n: Vec3, p: &Vec3) -> Vec3 {
    if n.dot(p) > 0.0 {
        -n
    } else {
        n
    }
}

/// Sign applied by [`orient_to_camera`]: `-1.0` if the normal gets flipped.
#[inline]
pub(crate) fn orientation_sign(n: &Vec3, p: &Vec3) -> f64 {
    if n.dot(p) > 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// One valid pixel of a local window and its 3D point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchEntry {
    pub pixel: Pixel,
    pub point: Vec3,
}

/// Valid in-bounds pixels of the `r x r` window around `center`, row-major,
/// center included. Windows are clipped at the image border.
pub fn extract_patch(pm: &PointMap, center: Pixel, r: usize) -> Result<Vec<PatchEntry>> {
    if r < 3 || r.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "patch size must be odd and >= 3, got {r}"
        )));
    }
    if !pm.is_valid(center) {
        return Err(Error::InvalidCenter(center));
    }
    let half = r / 2;
    let x0 = center.x.saturating_sub(half);
    let y0 = center.y.saturating_sub(half);
    let x1 = (center.x + half).min(pm.width - 1);
    let y1 = (center.y + half).min(pm.height - 1);
    let mut out = Vec::with_capacity(r * r);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let idx = y * pm.width + x;
            if pm.valid[idx] {
                out.push(PatchEntry {
                    pixel: Pixel::new(x, y),
                    point: pm.values[idx],
                });
            }
        }
    }
    Ok(out)
}

/// Angle between two unit vectors in radians, with the cosine clamped.
#[inline]
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}
