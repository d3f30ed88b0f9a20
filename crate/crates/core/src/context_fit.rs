//! Learning a free context map by gradient descent on the adaptive-normal
//! loss, with depth and ground-truth normals held fixed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::ContextMap;
use crate::error::{Error, Result};
use crate::experiments::masked_normal_metrics;
use crate::geometry::{unproject, DepthMap, Intrinsics, NormalMap, PointMap};
use crate::gradients::grad_asn_wrt_context_points;
use crate::losses::asn_loss;
use crate::normals::{recover_normals_from_points, AsnConfig, Method};
use crate::synthetics::{boundary_mask, gen_scene, SceneSpec};

/// Channels of the learned context.
pub const FIT_CHANNELS: usize = 3;

/// Amplitude of the seeded perturbation applied before the first step.
///
/// At the all-zero start every feature pair coincides, where the kernel's
/// distance term has only the zero subgradient.
pub const SYMMETRY_BREAK: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ContextFit {
    pub context: ContextMap,
    /// Loss before the first step, then after every step.
    pub loss_trace: Vec<f64>,
}

fn loss_at(pm: &PointMap, gt: &NormalMap, ctx: &ContextMap, cfg: &AsnConfig) -> Result<f64> {
    let rec = recover_normals_from_points(pm, ctx, cfg, Method::Asn)?;
    asn_loss(&rec, gt)
}

/// Runs `steps` iterations of plain gradient descent from a zero context.
pub fn fit_context_demo(
    depth_gt: &DepthMap,
    normals_gt: &NormalMap,
    k: &Intrinsics,
    cfg: &AsnConfig,
    steps: usize,
    lr: f64,
) -> Result<ContextFit> {
    cfg.validate()?;
    depth_gt.validate()?;
    depth_gt.check_shape(normals_gt, "context fit")?;
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let pm = unproject(depth_gt, k);
    let mut ctx = ContextMap::constant(depth_gt.width, depth_gt.height, FIT_CHANNELS, 0.0);
    let mut trace = vec![loss_at(&pm, normals_gt, &ctx, cfg)?];
    if steps == 0 {
        return Ok(ContextFit {
            context: ctx,
            loss_trace: trace,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for f in &mut ctx.features {
        *f = SYMMETRY_BREAK * rng.random_range(-1.0..1.0);
    }
    for step in 0..steps {
        let grad = grad_asn_wrt_context_points(&pm, normals_gt, &ctx, cfg)?;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "context gradient entry {i} at step {step}"
            )));
        }
        for (f, g) in ctx.features.iter_mut().zip(&grad) {
            *f -= lr * g;
        }
        trace.push(loss_at(&pm, normals_gt, &ctx, cfg)?);
    }
    Ok(ContextFit {
        context: ctx,
        loss_trace: trace,
    })
}

/// A context fit on a piecewise scene, with the mean angle error on pixels
/// whose window straddles a region boundary before and after fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFitReport {
    pub fit: ContextFit,
    pub crease_deg_before: f64,
    pub crease_deg_after: f64,
}

pub fn run_context_fit(
    spec: &SceneSpec,
    cfg: &AsnConfig,
    steps: usize,
    lr: f64,
) -> Result<ContextFitReport> {
    let scene = gen_scene(spec)?;
    let labels = scene
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("context fit needs a piecewise scene".into()))?;
    let crease = boundary_mask(
        labels,
        &scene.depth.valid,
        spec.width,
        spec.height,
        cfg.patch,
    );
    let fit = fit_context_demo(
        &scene.depth,
        &scene.normals,
        &spec.intrinsics,
        cfg,
        steps,
        lr,
    )?;
    let pm = unproject(&scene.depth, &spec.intrinsics);
    let crease_error = |ctx: &ContextMap| -> Result<f64> {
        let rec = recover_normals_from_points(&pm, ctx, cfg, Method::Asn)?;
        Ok(masked_normal_metrics(&rec, &scene.normals, &crease)?.mean_deg)
    };
    let zero = ContextMap::constant(spec.width, spec.height, FIT_CHANNELS, 0.0);
    Ok(ContextFitReport {
        crease_deg_before: crease_error(&zero)?,
        crease_deg_after: crease_error(&fit.context)?,
        fit,
    })
}
