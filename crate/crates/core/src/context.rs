//! Geometric context maps, the similarity kernel over context features,
//! triplet confidence, and context-guided pixel sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pixel;

/// Per-pixel feature vectors with `channels` entries, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub features: Vec<f64>,
}

impl ContextMap {
    pub fn new(width: usize, height: usize, channels: usize, features: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("context needs at least one channel".into()));
        }
        if features.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "context {width}x{height}x{channels} needs {} features, got {}",
                width * height * channels,
                features.len()
            )));
        }
        if let Some(i) = features.iter().position(|f| !f.is_finite()) {
            return Err(Error::NonFinite(format!("context feature {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            features,
        })
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            features: vec![value; width * height * channels],
        }
    }

    #[inline]
    pub fn feature(&self, p: Pixel) -> &[f64] {
        let start = (p.y * self.width + p.x) * self.channels;
        &self.features[start..start + self.channels]
    }

    #[inline]
    pub fn feature_mut(&mut self, p: Pixel) -> &mut [f64] {
        let start = (p.y * self.width + p.x) * self.channels;
        &mut self.features[start..start + self.channels]
    }

    pub fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        if self.width == width && self.height == height {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "context is {}x{}, expected {width}x{height}",
                self.width, self.height
            )))
        }
    }
}

/// Row-major scalar image without a mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Non-negative per-pixel guidance weights, normalized per image to `[0, 1]`.
pub type GuidanceMap = ScalarGrid;

/// Pixels picked by [`top_v_sample`], highest weight first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub pixels: Vec<Pixel>,
    pub v: usize,
}

/// Derivative order used for guidance weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// `exp(-0.5 * ||fi - fj||)` with the unsquared Euclidean distance.
#[inline]
pub fn similarity(fi: &[f64], fj: &[f64]) -> f64 {
    (-0.5 * feature_distance(fi, fj)).exp()
}

#[inline]
pub(crate) fn feature_distance(fi: &[f64], fj: &[f64]) -> f64 {
    debug_assert_eq!(fi.len(), fj.len());
    fi.iter()
        .zip(fj)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Similarities of every patch pixel to `center`, divided by their sum.
pub fn normalized_similarities(ctx: &ContextMap, center: Pixel, patch: &[Pixel]) -> Vec<f64> {
    let fc = ctx.feature(center);
    let mut out: Vec<f64> = patch
        .iter()
        .map(|&p| similarity(fc, ctx.feature(p)))
        .collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Product of the three normalized similarities of a triple.
#[inline]
pub fn triplet_confidence(lbar: &[f64], triple: [usize; 3]) -> f64 {
    lbar[triple[0]] * lbar[triple[1]] * lbar[triple[2]]
}

/// Channel-wise absolute sum of the context features.
pub fn intensity_map(ctx: &ContextMap) -> ScalarGrid {
    let values = ctx
        .features
        .chunks_exact(ctx.channels)
        .map(|f| f.iter().map(|v| v.abs()).sum())
        .collect();
    ScalarGrid {
        width: ctx.width,
        height: ctx.height,
        values,
    }
}

/// Derivative magnitudes of `intensity`, scaled so the image maximum is 1.
///
/// First order uses central differences in the interior and one-sided
/// differences on the border. Second order applies the 3-point stencil
/// `I[-1] - 2 I[0] + I[+1]`, shifted inward on the border.
pub fn guidance_weights(intensity: &ScalarGrid, order: DerivativeOrder) -> Result<GuidanceMap> {
    let (w, h) = (intensity.width, intensity.height);
    if w < 3 || h < 3 {
        return Err(Error::Config(format!(
            "guidance needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let at = |x: usize, y: usize| intensity.at(x, y);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = match order {
                DerivativeOrder::First => (
                    first_difference(x, w, |i| at(i, y)),
                    first_difference(y, h, |j| at(x, j)),
                ),
                DerivativeOrder::Second => (
                    second_difference(x, w, |i| at(i, y)),
                    second_difference(y, h, |j| at(x, j)),
                ),
            };
            values.push((dx * dx + dy * dy).sqrt());
        }
    }
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    Ok(ScalarGrid {
        width: w,
        height: h,
        values,
    })
}

fn first_difference(i: usize, n: usize, f: impl Fn(usize) -> f64) -> f64 {
    if i == 0 {
        f(1) - f(0)
    } else if i == n - 1 {
        f(n - 1) - f(n - 2)
    } else {
        0.5 * (f(i + 1) - f(i - 1))
    }
}

fn second_difference(i: usize, n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let c = i.clamp(1, n - 2);
    f(c - 1) - 2.0 * f(c) + f(c + 1)
}

/// Picks the `round(ratio * valid)` highest-weight pixels. Ties go to the
/// smaller row-major index.
pub fn top_v_sample(gm: &GuidanceMap, ratio: f64) -> Result<SampleSet> {
    top_v_sample_masked(gm, ratio, None)
}

/// [`top_v_sample`] restricted to pixels whose mask entry is set.
pub fn top_v_sample_masked(
    gm: &GuidanceMap,
    ratio: f64,
    mask: Option<&[bool]>,
) -> Result<SampleSet> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "sampling ratio must lie in (0, 1], got {ratio}"
        )));
    }
    if let Some(m) = mask {
        if m.len() != gm.values.len() {
            return Err(Error::ShapeMismatch(
                "sampling mask does not match guidance map".into(),
            ));
        }
    }
    let mut order: Vec<usize> = (0..gm.values.len())
        .filter(|&i| mask.is_none_or(|m| m[i]))
        .collect();
    let v = (ratio * order.len() as f64).round() as usize;
    order.sort_by(|&a, &b| gm.values[b].total_cmp(&gm.values[a]).then(a.cmp(&b)));
    order.truncate(v);
    let pixels = order
        .into_iter()
        .map(|i| Pixel::new(i % gm.width, i / gm.width))
        .collect();
    Ok(SampleSet { pixels, v })
}
