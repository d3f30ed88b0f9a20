//! Analytic gradients of the log-depth and adaptive-normal losses, and a
//! central-difference oracle to check them against.
//!
//! Triplet samples are frozen by the per-pixel seed, so the adaptive loss is a
//! smooth function of depth and context away from orientation flips and
//! coincident context features.

use rayon::prelude::*;

use crate::context::{feature_distance, normalized_similarities, triplet_confidence, ContextMap};
use crate::error::{Error, Result};
use crate::geometry::{
    orientation_sign, unproject, DepthMap, Intrinsics, NormalMap, Pixel, PointMap, Vec3,
};
use crate::losses::{log_residuals, SilogVariant};
use crate::normals::{
    cross_of, gather_support, recover_normals_from_points, AsnConfig, Method, Support,
};

/// `∂ silog / ∂ pred`, zero outside the shared valid mask.
pub fn grad_silog_wrt_depth(
    pred: &DepthMap,
    gt: &DepthMap,
    variant: SilogVariant,
) -> Result<Vec<f64>> {
    let e = log_residuals(pred, gt)?;
    let m = e.len() as f64;
    let sum: f64 = e.iter().map(|(_, r)| r).sum();
    let shared = variant.sign() * 2.0 * sum / (m * m);
    let mut grad = vec![0.0; pred.len()];
    for (i, r) in e {
        grad[i] = (2.0 * r / m + shared) / pred.values[i];
    }
    Ok(grad)
}

/// Adaptive-normal loss of `depth` against `gt_normals`: recovers normals
/// with the ASN estimator and averages `1 - n̂ · n` over the shared mask.
pub fn asn_loss_of_depth(
    depth: &DepthMap,
    gt_normals: &NormalMap,
    k: &Intrinsics,
    ctx: &ContextMap,
    cfg: &AsnConfig,
) -> Result<f64> {
    let pm = unproject(depth, k);
    let rec = recover_normals_from_points(&pm, ctx, cfg, Method::Asn)?;
    crate::losses::asn_loss(&rec, gt_normals)
}

/// Everything the backward pass needs about one recovered pixel.
struct Forward {
    center: Pixel,
    support: Support,
    lbar: Vec<f64>,
    weights: Vec<f64>,
    sum: Vec3,
    sign: f64,
}

fn forward_pixel(
    pm: &PointMap,
    ctx: &ContextMap,
    center: Pixel,
    cfg: &AsnConfig,
) -> Option<Forward> {
    let support = gather_support(pm, center, cfg).ok()?;
    let pixels: Vec<Pixel> = support.patch.iter().map(|e| e.pixel).collect();
    let lbar = normalized_similarities(ctx, center, &pixels);
    let mut sum = Vec3::zeros();
    let mut total = 0.0;
    let weights: Vec<f64> = support
        .candidates
        .iter()
        .map(|c| {
            let w = c.area * triplet_confidence(&lbar, c.triple);
            sum += c.normal * w;
            total += w;
            w
        })
        .collect();
    if !(total >= 1e-12) || !(sum.norm() > 1e-12) {
        return None;
    }
    let sign = orientation_sign(&sum, &support.center_point);
    Some(Forward {
        center,
        support,
        lbar,
        weights,
        sum,
        sign,
    })
}

/// Pixels contributing to the loss, with their forward state and `m`.
fn forward_all(
    pm: &PointMap,
    gt: &NormalMap,
    ctx: &ContextMap,
    cfg: &AsnConfig,
) -> Result<(Vec<Forward>, f64)> {
    cfg.validate()?;
    pm.check_shape(gt, "ground-truth normals")?;
    ctx.check_shape(pm.width, pm.height)?;
    let fwd: Vec<Forward> = (0..pm.len())
        .into_par_iter()
        .filter(|&i| pm.valid[i] && gt.valid[i])
        .filter_map(|i| forward_pixel(pm, ctx, pm.pixel(i), cfg))
        .collect();
    if fwd.is_empty() {
        return Err(Error::NoOverlap);
    }
    let m = fwd.len() as f64;
    Ok((fwd, m))
}

/// `∂L/∂u` for the unnormalized weighted sum `u` of one pixel.
fn grad_wrt_sum(f: &Forward, gt: &Vec3, m: f64) -> Vec3 {
    let norm = f.sum.norm();
    let y = f.sum / norm;
    let g = gt * (-f.sign / m);
    (g - y * y.dot(&g)) / norm
}

/// `∂ asn_loss / ∂ depth` per pixel. Areas and confidences are constant in
/// depth; pixels that fail recovery contribute nothing.
pub fn grad_asn_wrt_depth(
    depth: &DepthMap,
    gt_normals: &NormalMap,
    k: &Intrinsics,
    ctx: &ContextMap,
    cfg: &AsnConfig,
) -> Result<Vec<f64>> {
    depth.validate()?;
    let pm = unproject(depth, k);
    let (fwd, m) = forward_all(&pm, gt_normals, ctx, cfg)?;

    let partials: Vec<Vec<(usize, Vec3)>> = fwd
        .par_iter()
        .map(|f| {
            let gt = gt_normals.values[gt_normals.index(f.center)];
            let du = grad_wrt_sum(f, &gt, m);
            let mut out = Vec::with_capacity(3 * f.support.candidates.len());
            for (c, &w) in f.support.candidates.iter().zip(&f.weights) {
                let [ia, ib, ic] = c.triple;
                let (a, b, cc) = (
                    &f.support.patch[ia].point,
                    &f.support.patch[ib].point,
                    &f.support.patch[ic].point,
                );
                let cross = cross_of(a, b, cc);
                let cn = cross.norm();
                let unit = cross / cn;
                // normal = s_k · cross / |cross|, with s_k the orientation sign.
                let s_k = c.normal.dot(&unit).signum();
                let gn = du * (w * s_k);
                let gc = (gn - unit * unit.dot(&gn)) / cn;
                let ab = b - a;
                let ac = cc - a;
                let g_ab = ac.cross(&gc);
                let g_ac = gc.cross(&ab);
                out.push((ia, -(g_ab + g_ac)));
                out.push((ib, g_ab));
                out.push((ic, g_ac));
            }
            out.into_iter()
                .map(|(j, g)| (pm.index(f.support.patch[j].pixel), g))
                .collect()
        })
        .collect();

    let mut grad_points = vec![Vec3::zeros(); pm.len()];
    for list in partials {
        for (i, g) in list {
            grad_points[i] += g;
        }
    }
    Ok(grad_points
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if depth.valid[i] {
                g.dot(&k.ray_at(depth.pixel(i)))
            } else {
                0.0
            }
        })
        .collect())
}

/// `∂ asn_loss / ∂ context`, laid out like `ContextMap::features`. Normals and
/// areas are constant in the context. Coincident features get subgradient 0.
pub fn grad_asn_wrt_context(
    depth: &DepthMap,
    gt_normals: &NormalMap,
    k: &Intrinsics,
    ctx: &ContextMap,
    cfg: &AsnConfig,
) -> Result<Vec<f64>> {
    depth.validate()?;
    let pm = unproject(depth, k);
    grad_asn_wrt_context_points(&pm, gt_normals, ctx, cfg)
}

pub(crate) fn grad_asn_wrt_context_points(
    pm: &PointMap,
    gt_normals: &NormalMap,
    ctx: &ContextMap,
    cfg: &AsnConfig,
) -> Result<Vec<f64>> {
    let (fwd, m) = forward_all(pm, gt_normals, ctx, cfg)?;
    let channels = ctx.channels;

    let partials: Vec<Vec<(Pixel, Vec<f64>)>> = fwd
        .par_iter()
        .map(|f| {
            let gt = gt_normals.values[gt_normals.index(f.center)];
            let du = grad_wrt_sum(f, &gt, m);
            // ∂L/∂L̄_j accumulated over all candidates.
            let mut g_lbar = vec![0.0; f.lbar.len()];
            for c in &f.support.candidates {
                let g_w = du.dot(&c.normal) * c.area;
                let [a, b, cc] = c.triple;
                g_lbar[a] += g_w * f.lbar[b] * f.lbar[cc];
                g_lbar[b] += g_w * f.lbar[a] * f.lbar[cc];
                g_lbar[cc] += g_w * f.lbar[a] * f.lbar[b];
            }
            // L̄_j = L_j / Z with Z = Σ L_n, so ∂L/∂L_j = (g_j - Σ g_n L̄_n) / Z.
            let fc = ctx.feature(f.center);
            let sims: Vec<f64> = f
                .support
                .patch
                .iter()
                .map(|e| (-0.5 * feature_distance(fc, ctx.feature(e.pixel))).exp())
                .collect();
            let z: f64 = sims.iter().sum();
            let dot: f64 = g_lbar.iter().zip(&f.lbar).map(|(g, l)| g * l).sum();
            let mut grad_center = vec![0.0; channels];
            let mut out = Vec::with_capacity(f.support.patch.len() + 1);
            for (j, e) in f.support.patch.iter().enumerate() {
                let fj = ctx.feature(e.pixel);
                let rho = feature_distance(fc, fj);
                if rho == 0.0 {
                    continue;
                }
                let g_l = (g_lbar[j] - dot) / z;
                let g_rho = -0.5 * sims[j] * g_l;
                let scale = g_rho / rho;
                let mut gj = vec![0.0; channels];
                for ch in 0..channels {
                    let d = (fc[ch] - fj[ch]) * scale;
                    grad_center[ch] += d;
                    gj[ch] = -d;
                }
                out.push((e.pixel, gj));
            }
            out.push((f.center, grad_center));
            out
        })
        .collect();

    let mut grad = vec![0.0; ctx.features.len()];
    for list in partials {
        for (p, g) in list {
            let start = (p.y * ctx.width + p.x) * channels;
            for (dst, v) in grad[start..start + channels].iter_mut().zip(g) {
                *dst += v;
            }
        }
    }
    Ok(grad)
}

/// Step used by [`finite_difference`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStep {
    Absolute(f64),
    /// `h = factor · max(|x|, 1)` per entry.
    Relative(f64),
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every entry.
pub fn finite_difference<F>(mut f: F, x: &[f64], step: FdStep) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let base = match step {
        FdStep::Absolute(h) | FdStep::Relative(h) => h,
    };
    if !(base > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {base}"
        )));
    }
    let mut work = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = match step {
            FdStep::Absolute(h) => h,
            FdStep::Relative(r) => r * x[i].abs().max(1.0),
        };
        work[i] = x[i] + h;
        let plus = f(&work)?;
        work[i] = x[i] - h;
        let minus = f(&work)?;
        work[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss at entry {i}")));
        }
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Largest per-entry relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
