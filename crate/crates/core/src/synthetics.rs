//! Ray-cast synthetic scenes with analytic ground-truth normals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::context::ContextMap;
use crate::error::{Error, Result};
use crate::geometry::{orient_to_camera, DepthMap, Grid, Intrinsics, NormalMap, Vec3};

/// Scale of the one-hot region context emitted with piecewise scenes.
pub const CONTEXT_CONTRAST: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SceneKind {
    /// Plane `normal · X = offset`.
    Plane { normal: [f64; 3], offset: f64 },
    /// Concave vertical crease through the optical axis: the two faces meet at
    /// depth `apex_depth` with interior angle `dihedral_deg`.
    Corner { apex_depth: f64, dihedral_deg: f64 },
    /// Front half of a sphere centered on the optical axis.
    SemiSphere { radius: f64, center_depth: f64 },
    /// Two fronto-parallel planes split at `x = 0`.
    Step { near: f64, far: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    /// Standard deviation of the Gaussian depth noise in meters.
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Rendered scene. `labels` and `context` are set for piecewise scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub depth: DepthMap,
    pub clean_depth: DepthMap,
    pub normals: NormalMap,
    pub labels: Option<Vec<u8>>,
    pub context: Option<ContextMap>,
}

/// Intrinsics with the principal point at the center of the pixel grid.
pub fn centered_intrinsics(width: usize, height: usize, focal: f64) -> Intrinsics {
    Intrinsics {
        fx: focal,
        fy: focal,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
    }
}

impl SceneSpec {
    pub fn new(kind: SceneKind, width: usize, height: usize, focal: f64) -> Self {
        Self {
            kind,
            width,
            height,
            intrinsics: centered_intrinsics(width, height, focal),
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.seed = seed;
        self
    }

    pub fn slanted_plane(width: usize, height: usize, focal: f64) -> Self {
        // z = 1 + 0.1 x
        Self::new(
            SceneKind::Plane {
                normal: [-0.1, 0.0, 1.0],
                offset: 1.0,
            },
            width,
            height,
            focal,
        )
    }

    pub fn corner(width: usize, height: usize, focal: f64) -> Self {
        Self::new(
            SceneKind::Corner {
                apex_depth: 3.0,
                dihedral_deg: 90.0,
            },
            width,
            height,
            focal,
        )
    }

    pub fn semisphere(width: usize, height: usize, focal: f64) -> Self {
        Self::new(
            SceneKind::SemiSphere {
                radius: 1.0,
                center_depth: 3.0,
            },
            width,
            height,
            focal,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::Config(format!(
                "scene must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Intrinsics::new(
            self.intrinsics.fx,
            self.intrinsics.fy,
            self.intrinsics.cx,
            self.intrinsics.cy,
        )?;
        match self.kind {
            SceneKind::Plane { normal, .. } => {
                if Vec3::from(normal).norm() == 0.0 {
                    return Err(Error::Config("plane normal must be non-zero".into()));
                }
            }
            SceneKind::Corner {
                apex_depth,
                dihedral_deg,
            } => {
                if !(apex_depth > 0.0) || !(dihedral_deg > 0.0 && dihedral_deg < 180.0) {
                    return Err(Error::Config(
                        "corner needs apex_depth > 0 and dihedral in (0, 180)".into(),
                    ));
                }
            }
            SceneKind::SemiSphere {
                radius,
                center_depth,
            } => {
                if !(radius > 0.0) || !(center_depth > radius) {
                    return Err(Error::Config(
                        "semi-sphere needs 0 < radius < center_depth".into(),
                    ));
                }
            }
            SceneKind::Step { near, far } => {
                if !(near > 0.0 && far > 0.0) {
                    return Err(Error::Config("step depths must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Casts the ray `(a, b, 1)`; returns depth, outward normal, and region.
    fn cast(&self, a: f64, b: f64) -> Option<(f64, Vec3, u8)> {
        let ray = Vec3::new(a, b, 1.0);
        match self.kind {
            SceneKind::Plane { normal, offset } => {
                let n = Vec3::from(normal);
                let denom = n.dot(&ray);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = offset / denom;
                (t > 0.0).then(|| (t, n.normalize(), 0))
            }
            SceneKind::Corner {
                apex_depth,
                dihedral_deg,
            } => {
                let slope = ((180.0 - dihedral_deg) / 2.0).to_radians().tan();
                if a < 0.0 {
                    // z - slope·x = apex
                    let t = apex_depth / (1.0 - slope * a);
                    Some((t, Vec3::new(-slope, 0.0, 1.0).normalize(), 0))
                } else {
                    // z + slope·x = apex
                    let t = apex_depth / (1.0 + slope * a);
                    (t > 0.0).then(|| (t, Vec3::new(slope, 0.0, 1.0).normalize(), 1))
                }
            }
            SceneKind::SemiSphere {
                radius,
                center_depth,
            } => {
                let c = Vec3::new(0.0, 0.0, center_depth);
                let rr = ray.norm_squared();
                let rc = ray.dot(&c);
                let disc = rc * rc - rr * (c.norm_squared() - radius * radius);
                if disc < 0.0 {
                    return None;
                }
                let t = (rc - disc.sqrt()) / rr;
                let n = (ray * t - c) / radius;
                (t > 0.0).then_some((t, n, 0))
            }
            SceneKind::Step { near, far } => Some(if a < 0.0 {
                (near, Vec3::z(), 0)
            } else {
                (far, Vec3::z(), 1)
            }),
        }
    }
}

/// Renders depth, analytic normals, and (for piecewise scenes) the one-hot
/// region context. Noise is added to depth after the normals are computed.
pub fn gen_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let k = &spec.intrinsics;
    let n = w * h;
    let mut depth = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut normals = vec![Vec3::zeros(); n];
    let mut labels = vec![0u8; n];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let ray = k.ray(u as f64, v as f64);
            if let Some((t, normal, label)) = spec.cast(ray.x, ray.y) {
                let point = ray * t;
                depth[i] = t;
                valid[i] = true;
                normals[i] = orient_to_camera(normal, &point);
                labels[i] = label;
            }
        }
    }
    let clean_depth = Grid::from_parts(w, h, depth.clone(), valid.clone())?;
    let normals = Grid::from_parts(w, h, normals, valid.clone())?;

    let mut noisy = depth;
    let mut noisy_valid = valid;
    if spec.noise_sigma > 0.0 {
        let dist = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for (d, ok) in noisy.iter_mut().zip(noisy_valid.iter_mut()) {
            let e: f64 = dist.sample(&mut rng);
            if *ok {
                *d += e;
                if *d <= 0.0 {
                    *ok = false;
                    *d = 0.0;
                }
            }
        }
    }
    let depth = Grid::from_parts(w, h, noisy, noisy_valid)?;

    let piecewise = matches!(spec.kind, SceneKind::Corner { .. } | SceneKind::Step { .. });
    let (labels, context) = if piecewise {
        let features = labels
            .iter()
            .flat_map(|&l| {
                if l == 0 {
                    [CONTEXT_CONTRAST, 0.0]
                } else {
                    [0.0, CONTEXT_CONTRAST]
                }
            })
            .collect();
        (Some(labels), Some(ContextMap::new(w, h, 2, features)?))
    } else {
        (None, None)
    };
    Ok(Scene {
        depth,
        clean_depth,
        normals,
        labels,
        context,
    })
}

/// Pixels whose full `r x r` window lies inside the image and is valid.
pub fn interior_mask(valid: &[bool], width: usize, height: usize, r: usize) -> Vec<bool> {
    let half = r / 2;
    (0..width * height)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            if x < half || y < half || x + half >= width || y + half >= height {
                return false;
            }
            (y - half..=y + half).all(|yy| (x - half..=x + half).all(|xx| valid[yy * width + xx]))
        })
        .collect()
}

/// Valid pixels whose `r x r` window contains a valid pixel of another region.
pub fn boundary_mask(
    labels: &[u8],
    valid: &[bool],
    width: usize,
    height: usize,
    r: usize,
) -> Vec<bool> {
    let half = (r / 2) as isize;
    (0..width * height)
        .map(|i| {
            if !valid[i] {
                return false;
            }
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for dy in -half..=half {
                for dx in -half..=half {
                    let (xx, yy) = (x + dx, y + dy);
                    if xx < 0 || yy < 0 || xx >= width as isize || yy >= height as isize {
                        continue;
                    }
                    let j = yy as usize * width + xx as usize;
                    if valid[j] && labels[j] != labels[i] {
                        return true;
                    }
                }
            }
            false
        })
        .collect()
}
