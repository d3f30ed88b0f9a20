//! Depth and normal training losses.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{GuidanceMap, SampleSet};
use crate::error::{Error, Result};
use crate::geometry::{unproject, DepthMap, Intrinsics, NormalMap};
use crate::normals::{projected_area, triplet_normal};

/// Sign of the squared-mean term in the log-depth loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SilogVariant {
    /// `mean(e²) + mean(e)²`, as printed with the loss definition.
    #[default]
    Plus,
    /// `mean(e²) - mean(e)²`, the scale-invariant form.
    Minus,
}

impl SilogVariant {
    #[inline]
    pub(crate) fn sign(self) -> f64 {
        match self {
            SilogVariant::Plus => 1.0,
            SilogVariant::Minus => -1.0,
        }
    }
}

/// Where the guidance weight `w` of the normal loss applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GuidanceScope {
    /// `w` is the guidance value on sampled pixels and 0 elsewhere.
    #[default]
    SampledOnly,
    /// `w` is the guidance value on every pixel.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_d: f64,
    pub lambda_n: f64,
    pub alpha: f64,
    pub beta: f64,
    pub silog_variant: SilogVariant,
    pub guidance_scope: GuidanceScope,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_d: 0.8,
            lambda_n: 0.8,
            alpha: 5.0,
            beta: 5.0,
            silog_variant: SilogVariant::Plus,
            guidance_scope: GuidanceScope::SampledOnly,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_d", self.lambda_d), ("lambda_n", self.lambda_n)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Predictions at scales `0..=3` (coarse to fine), each paired with its
/// ground truth.
#[derive(Debug, Clone, Default)]
pub struct ScaleStack {
    pub levels: Vec<(usize, DepthMap, DepthMap)>,
}

impl ScaleStack {
    pub fn push(&mut self, scale: usize, pred: DepthMap, gt: DepthMap) -> Result<()> {
        if let Some((last, ..)) = self.levels.last() {
            if scale <= *last {
                return Err(Error::Config(format!(
                    "scale {scale} does not follow scale {last}"
                )));
            }
        }
        if scale > 3 {
            return Err(Error::Config(format!("scale index {scale} outside 0..=3")));
        }
        self.levels.push((scale, pred, gt));
        Ok(())
    }
}

/// Log residuals on the shared valid mask, as `(pixel index, e)`.
pub(crate) fn log_residuals(pred: &DepthMap, gt: &DepthMap) -> Result<Vec<(usize, f64)>> {
    pred.check_shape(gt, "silog")?;
    let mut out = Vec::new();
    for i in 0..pred.len() {
        if !(pred.valid[i] && gt.valid[i]) {
            continue;
        }
        let (p, g) = (pred.values[i], gt.values[i]);
        if !(p > 0.0 && g > 0.0) {
            return Err(Error::Domain(format!(
                "non-positive depth at pixel {}",
                pred.pixel(i)
            )));
        }
        out.push((i, p.ln() - g.ln()));
    }
    if out.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(out)
}

/// Log-depth loss over pixels valid in both maps.
pub fn silog_loss(pred: &DepthMap, gt: &DepthMap, variant: SilogVariant) -> Result<f64> {
    let e = log_residuals(pred, gt)?;
    let m = e.len() as f64;
    let sq: f64 = e.iter().map(|(_, r)| r * r).sum::<f64>() / m;
    let mean: f64 = e.iter().map(|(_, r)| r).sum::<f64>() / m;
    Ok(sq + variant.sign() * mean * mean)
}

/// `Σ_s λ_d^(s-3) · silog(s)`. All four scales must be present.
pub fn multiscale_depth_loss(stack: &ScaleStack, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let scales: Vec<usize> = stack.levels.iter().map(|(s, ..)| *s).collect();
    if scales != [0, 1, 2, 3] {
        return Err(Error::Config(format!(
            "expected scales [0, 1, 2, 3], got {scales:?}"
        )));
    }
    let mut total = 0.0;
    for (s, pred, gt) in &stack.levels {
        total += cfg.lambda_d.powi(*s as i32 - 3) * silog_loss(pred, gt, cfg.silog_variant)?;
    }
    Ok(total)
}

/// Mean cosine distance between recovered and ground-truth normals.
pub fn asn_loss(recovered: &NormalMap, gt: &NormalMap) -> Result<f64> {
    recovered.check_shape(gt, "asn loss")?;
    let mut sum = 0.0;
    let mut m = 0usize;
    for i in 0..recovered.len() {
        if recovered.valid[i] && gt.valid[i] {
            sum += 1.0 - recovered.values[i].dot(&gt.values[i]);
            m += 1;
        }
    }
    if m == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(sum / m as f64)
}

/// Per-pixel importance weights `w` for the guided normal loss.
pub fn importance_weights(gm: &GuidanceMap, sampled: &SampleSet, scope: GuidanceScope) -> Vec<f64> {
    match scope {
        GuidanceScope::Global => gm.values.clone(),
        GuidanceScope::SampledOnly => {
            let mut w = vec![0.0; gm.values.len()];
            for p in &sampled.pixels {
                let i = p.y * gm.width + p.x;
                w[i] = gm.values[i];
            }
            w
        }
    }
}

/// `λ_n^(s-3) / m · Σ (1 + w_i)(1 - ñ_i · n_i)` at one scale.
pub fn weighted_normal_loss(
    pred: &NormalMap,
    gt: &NormalMap,
    gm: &GuidanceMap,
    sampled: &SampleSet,
    cfg: &LossConfig,
    scale: usize,
) -> Result<f64> {
    cfg.validate()?;
    pred.check_shape(gt, "normal loss")?;
    if gm.width != pred.width || gm.height != pred.height {
        return Err(Error::ShapeMismatch(
            "guidance map does not match normals".into(),
        ));
    }
    if scale > 3 {
        return Err(Error::Config(format!("scale index {scale} outside 0..=3")));
    }
    let w = importance_weights(gm, sampled, cfg.guidance_scope);
    let mut sum = 0.0;
    let mut m = 0usize;
    for i in 0..pred.len() {
        if pred.valid[i] && gt.valid[i] {
            sum += (1.0 + w[i]) * (1.0 - pred.values[i].dot(&gt.values[i]));
            m += 1;
        }
    }
    if m == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(cfg.lambda_n.powi(scale as i32 - 3) * sum / m as f64)
}

/// `L_d + α L_asn + β L_n`.
pub fn total_loss(depth: f64, asn: f64, normal: f64, cfg: &LossConfig) -> Result<f64> {
    for (name, v) in [("depth", depth), ("asn", asn), ("normal", normal)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} loss")));
        }
    }
    Ok(depth + cfg.alpha * asn + cfg.beta * normal)
}

/// Mean cosine distance between normals of `m` global triangles taken from
/// the predicted and ground-truth point clouds.
pub fn virtual_normal_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    k: &Intrinsics,
    m: usize,
    seed: u64,
) -> Result<f64> {
    const MIN_AREA: f64 = 1e-6;
    pred.check_shape(gt, "virtual normal")?;
    if m == 0 {
        return Err(Error::Config("triplet count must be >= 1".into()));
    }
    pred.validate()?;
    gt.validate()?;
    let shared: Vec<usize> = (0..pred.len())
        .filter(|&i| pred.valid[i] && gt.valid[i])
        .collect();
    if shared.len() < 3 {
        return Err(Error::NoOverlap);
    }
    let pp = unproject(pred, k);
    let gp = unproject(gt, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut draws = 0usize;
    while used < m && draws < 3 * m {
        draws += 1;
        let pick = index::sample(&mut rng, shared.len(), 3);
        let [a, b, c] = [pick.index(0), pick.index(1), pick.index(2)].map(|j| shared[j]);
        let xy = |i: usize| {
            let p = pred.pixel(i);
            (p.x as f64, p.y as f64)
        };
        if projected_area(xy(a), xy(b), xy(c)) < MIN_AREA {
            continue;
        }
        let centroid_p = (pp.values[a] + pp.values[b] + pp.values[c]) / 3.0;
        let centroid_g = (gp.values[a] + gp.values[b] + gp.values[c]) / 3.0;
        let (Ok(np), Ok(ng)) = (
            triplet_normal(&pp.values[a], &pp.values[b], &pp.values[c], &centroid_p),
            triplet_normal(&gp.values[a], &gp.values[b], &gp.values[c], &centroid_g),
        ) else {
            continue;
        };
        sum += 1.0 - np.dot(&ng);
        used += 1;
    }
    if used == 0 {
        return Err(Error::Domain("no usable virtual-normal triplet".into()));
    }
    Ok(sum / used as f64)
}
