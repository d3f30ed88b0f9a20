//! Seeded random problems for checking the analytic gradients against
//! central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::ContextMap;
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Grid, Intrinsics, NormalMap, Vec3};
use crate::gradients::{
    asn_loss_of_depth, finite_difference, grad_asn_wrt_context, grad_asn_wrt_depth,
    grad_silog_wrt_depth, max_relative_error, FdStep,
};
use crate::losses::{silog_loss, SilogVariant};
use crate::normals::AsnConfig;
use crate::synthetics::centered_intrinsics;

/// Relative depth step of the difference quotient.
pub const DEPTH_STEP: f64 = 1e-6;
/// Absolute context step of the difference quotient.
pub const CONTEXT_STEP: f64 = 1e-5;
/// Context channels of a generated problem.
pub const CHECK_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradTarget {
    Depth,
    Context,
}

impl std::str::FromStr for GradTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(GradTarget::Depth),
            "context" => Ok(GradTarget::Context),
            other => Err(Error::Config(format!("unknown gradient target {other:?}"))),
        }
    }
}

/// A smooth random surface with perturbed target normals, a random context,
/// and a second depth map that serves as log-depth ground truth.
#[derive(Debug, Clone)]
pub struct GradProblem {
    pub depth: DepthMap,
    pub gt_depth: DepthMap,
    pub normals: NormalMap,
    pub context: ContextMap,
    pub intrinsics: Intrinsics,
}

pub fn random_problem(size: usize, seed: u64) -> Result<GradProblem> {
    if size < 3 {
        return Err(Error::Config(format!(
            "problem size must be >= 3, got {size}"
        )));
    }
    let n = size * size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intrinsics = centered_intrinsics(size, size, rng.random_range(1.0..2.0) * size as f64);
    let mid = (size as f64 - 1.0) / 2.0;
    let (a, b, c) = (
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(1.5..3.0),
    );
    let (fa, fb) = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let (x, y) = ((i % size) as f64, (i / size) as f64);
            c + (a * (x - mid) + b * (y - mid)) / mid
                + 0.1 * (fa * x).sin() * (fb * y).cos()
                + rng.random_range(-0.01..0.01)
        })
        .collect();
    let depth = DepthMap::from_depths(size, size, values)?;
    let gt_depth = DepthMap::from_depths(
        size,
        size,
        depth
            .values
            .iter()
            .map(|d| d * rng.random_range(0.7..1.4))
            .collect(),
    )?;
    let normals = Grid::from_parts(
        size,
        size,
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                    -1.0,
                )
                .normalize()
            })
            .collect(),
        vec![true; n],
    )?;
    let context = ContextMap::new(
        size,
        size,
        CHECK_CHANNELS,
        (0..n * CHECK_CHANNELS)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )?;
    Ok(GradProblem {
        depth,
        gt_depth,
        normals,
        context,
        intrinsics,
    })
}

/// Worst disagreement between one analytic gradient and its difference quotient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub gradient: &'static str,
    pub max_rel_error: f64,
}

/// Error floor for [`max_relative_error`]. Entries below 0.1% of the largest
/// one are compared absolutely, since there the quotient is mostly roundoff.
pub fn error_floor(analytic: &[f64]) -> f64 {
    1e-3 * analytic.iter().fold(1e-8f64, |m, v| m.max(v.abs()))
}

fn compare(gradient: &'static str, analytic: &[f64], numeric: &[f64]) -> GradCheck {
    GradCheck {
        gradient,
        max_rel_error: max_relative_error(analytic, numeric, error_floor(analytic)),
    }
}

/// Checks the gradients with respect to `target`: log-depth and adaptive-normal
/// losses for depth, the adaptive-normal loss for context.
pub fn check_problem(
    p: &GradProblem,
    target: GradTarget,
    cfg: &AsnConfig,
) -> Result<Vec<GradCheck>> {
    let (w, h) = (p.depth.width, p.depth.height);
    let asn = |depth: &DepthMap, ctx: &ContextMap| {
        asn_loss_of_depth(depth, &p.normals, &p.intrinsics, ctx, cfg)
    };
    match target {
        GradTarget::Depth => {
            let mut out = Vec::new();
            for (name, variant) in [
                ("silog_plus", SilogVariant::Plus),
                ("silog_minus", SilogVariant::Minus),
            ] {
                let analytic = grad_silog_wrt_depth(&p.depth, &p.gt_depth, variant)?;
                let numeric = finite_difference(
                    |x| {
                        silog_loss(
                            &DepthMap::from_depths(w, h, x.to_vec())?,
                            &p.gt_depth,
                            variant,
                        )
                    },
                    &p.depth.values,
                    FdStep::Relative(DEPTH_STEP),
                )?;
                out.push(compare(name, &analytic, &numeric));
            }
            let analytic =
                grad_asn_wrt_depth(&p.depth, &p.normals, &p.intrinsics, &p.context, cfg)?;
            let numeric = finite_difference(
                |x| asn(&DepthMap::from_depths(w, h, x.to_vec())?, &p.context),
                &p.depth.values,
                FdStep::Relative(DEPTH_STEP),
            )?;
            out.push(compare("asn_depth", &analytic, &numeric));
            Ok(out)
        }
        GradTarget::Context => {
            let c = p.context.channels;
            let analytic =
                grad_asn_wrt_context(&p.depth, &p.normals, &p.intrinsics, &p.context, cfg)?;
            let numeric = finite_difference(
                |x| asn(&p.depth, &ContextMap::new(w, h, c, x.to_vec())?),
                &p.context.features,
                FdStep::Absolute(CONTEXT_STEP),
            )?;
            Ok(vec![compare("asn_context", &analytic, &numeric)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problems_are_seeded_and_checks_pass() {
        let cfg = AsnConfig {
            patch: 3,
            triplets: 8,
            ..AsnConfig::default()
        };
        let a = random_problem(8, 3).unwrap();
        let b = random_problem(8, 3).unwrap();
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.context, b.context);
        for target in [GradTarget::Depth, GradTarget::Context] {
            for c in check_problem(&a, target, &cfg).unwrap() {
                assert!(
                    c.max_rel_error < 1e-4,
                    "{}: {}",
                    c.gradient,
                    c.max_rel_error
                );
            }
        }
        assert!(random_problem(2, 0).is_err());
    }

    #[test]
    fn floor_scales_with_largest_entry() {
        assert_eq!(error_floor(&[0.5, -2.0]), 2e-3);
        assert_eq!(error_floor(&[0.0]), 1e-3 * 1e-8);
    }
}
