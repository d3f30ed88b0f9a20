//! Normal recovery from depth: adaptive triplet sampling (ASN), the Sobel-like
//! operator, the total-least-squares plane fit, and the unweighted triplet
//! average.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{normalized_similarities, triplet_confidence, ContextMap};
use crate::error::{Error, Result};
use crate::geometry::{
    extract_patch, orient_to_camera, unproject, DepthMap, Grid, Intrinsics, NormalMap, PatchEntry,
    Pixel, PointMap, Vec3,
};
use crate::linalg::sym_eigen3;

const CROSS_EPS: f64 = 1e-12;
const WEIGHT_EPS: f64 = 1e-12;
const RANK_EPS: f64 = 1e-12;

/// How candidate triplets are chosen inside a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Sampling {
    /// `K` seeded random draws per pixel.
    #[default]
    Random,
    /// Every `a < b < c` triple in lexicographic order; `K` is ignored.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsnConfig {
    /// Odd window size `r`.
    pub patch: usize,
    /// Triplets per pixel `K`.
    pub triplets: usize,
    /// Triangles with a smaller projected area (pixels²) are rejected.
    pub min_area: f64,
    pub seed: u64,
    pub sampling: Sampling,
}

impl Default for AsnConfig {
    fn default() -> Self {
        Self {
            patch: 5,
            triplets: 40,
            min_area: 1e-6,
            seed: 42,
            sampling: Sampling::Random,
        }
    }
}

impl AsnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch < 3 || self.patch.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "patch size must be odd and >= 3, got {}",
                self.patch
            )));
        }
        if self.triplets == 0 {
            return Err(Error::Config("triplet count must be >= 1".into()));
        }
        if !(self.min_area > 0.0) {
            return Err(Error::Config(format!(
                "min_area must be positive, got {}",
                self.min_area
            )));
        }
        Ok(())
    }
}

/// `K` index triples into a patch list, drawn for one center pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletSet {
    pub center: Pixel,
    pub triplets: Vec<[usize; 3]>,
}

/// One triangle candidate: oriented unit normal, projected area, confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedCandidate {
    pub normal: Vec3,
    pub area: f64,
    pub confidence: f64,
}

/// Normal recovery method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Asn,
    Sobel,
    Lsq,
    Average,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Asn, Method::Sobel, Method::Lsq, Method::Average];

    pub fn name(self) -> &'static str {
        match self {
            Method::Asn => "asn",
            Method::Sobel => "sobel",
            Method::Lsq => "lsq",
            Method::Average => "average",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asn" => Ok(Method::Asn),
            "sobel" => Ok(Method::Sobel),
            "lsq" => Ok(Method::Lsq),
            "average" => Ok(Method::Average),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the per-pixel stream, a hash of `(seed, row, col)`.
pub fn pixel_seed(seed: u64, center: Pixel) -> u64 {
    let h = splitmix64(seed);
    let h = splitmix64(h ^ center.y as u64);
    splitmix64(h ^ (center.x as u64).rotate_left(32))
}

/// Endless stream of distinct-index triples over a patch of `n` entries.
pub struct TripletSampler {
    rng: ChaCha8Rng,
    n: usize,
}

impl TripletSampler {
    pub fn new(n: usize, center: Pixel, seed: u64) -> Result<Self> {
        if n < 3 {
            return Err(Error::DegeneratePatch { count: n });
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(pixel_seed(seed, center)),
            n,
        })
    }

    pub fn draw(&mut self) -> [usize; 3] {
        let idx = index::sample(&mut self.rng, self.n, 3);
        [idx.index(0), idx.index(1), idx.index(2)]
    }
}

/// First `k` triples of the stream for `center`.
pub fn sample_triplets(
    patch_size: usize,
    k: usize,
    center: Pixel,
    seed: u64,
) -> Result<TripletSet> {
    let mut sampler = TripletSampler::new(patch_size, center, seed)?;
    Ok(TripletSet {
        center,
        triplets: (0..k).map(|_| sampler.draw()).collect(),
    })
}

#[inline]
pub(crate) fn cross_of(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    (b - a).cross(&(c - a))
}

/// Oriented unit normal of triangle `abc`.
pub fn triplet_normal(a: &Vec3, b: &Vec3, c: &Vec3, center: &Vec3) -> Result<Vec3> {
    let cross = cross_of(a, b, c);
    let norm = cross.norm();
    if !(norm > CROSS_EPS) {
        return Err(Error::DegenerateTriplet);
    }
    Ok(orient_to_camera(cross / norm, center))
}

/// Area of the 2D triangle `abc` in pixels².
#[inline]
pub fn projected_area(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let (ux, uy) = (b.0 - a.0, b.1 - a.1);
    let (vx, vy) = (c.0 - a.0, c.1 - a.1);
    0.5 * (ux * vy - uy * vx).abs()
}

#[inline]
fn pixel_xy(p: Pixel) -> (f64, f64) {
    (p.x as f64, p.y as f64)
}

/// A triangle that passed the degeneracy checks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub triple: [usize; 3],
    pub normal: Vec3,
    pub area: f64,
}

/// Patch and accepted triangles for one center pixel.
#[derive(Debug, Clone)]
pub(crate) struct Support {
    pub center_point: Vec3,
    pub patch: Vec<PatchEntry>,
    pub candidates: Vec<Candidate>,
}

fn try_candidate(
    patch: &[PatchEntry],
    triple: [usize; 3],
    center: &Vec3,
    min_area: f64,
) -> Option<Candidate> {
    let [a, b, c] = triple.map(|i| &patch[i]);
    let area = projected_area(pixel_xy(a.pixel), pixel_xy(b.pixel), pixel_xy(c.pixel));
    if area < min_area {
        return None;
    }
    let normal = triplet_normal(&a.point, &b.point, &c.point, center).ok()?;
    Some(Candidate {
        triple,
        normal,
        area,
    })
}

/// Collects triangle candidates for `center`. Degenerate random draws are
/// replaced, up to `3K` draws in total.
pub(crate) fn gather_support(pm: &PointMap, center: Pixel, cfg: &AsnConfig) -> Result<Support> {
    let patch = extract_patch(pm, center, cfg.patch)?;
    if patch.len() < 3 {
        return Err(Error::DegeneratePatch { count: patch.len() });
    }
    let center_point = pm.values[pm.index(center)];
    let mut candidates = Vec::with_capacity(cfg.triplets);
    match cfg.sampling {
        Sampling::Random => {
            let mut sampler = TripletSampler::new(patch.len(), center, cfg.seed)?;
            let budget = 3 * cfg.triplets;
            let mut draws = 0;
            while candidates.len() < cfg.triplets && draws < budget {
                draws += 1;
                let triple = sampler.draw();
                if let Some(c) = try_candidate(&patch, triple, &center_point, cfg.min_area) {
                    candidates.push(c);
                }
            }
        }
        Sampling::Exhaustive => {
            let n = patch.len();
            for a in 0..n {
                for b in a + 1..n {
                    for c in b + 1..n {
                        if let Some(cand) =
                            try_candidate(&patch, [a, b, c], &center_point, cfg.min_area)
                        {
                            candidates.push(cand);
                        }
                    }
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::UnrecoverablePixel {
            pixel: center,
            reason: "no usable triplet",
        });
    }
    Ok(Support {
        center_point,
        patch,
        candidates,
    })
}

/// Weighted candidates for `center` with confidences from the context map.
pub fn asn_candidates(
    pm: &PointMap,
    ctx: &ContextMap,
    center: Pixel,
    cfg: &AsnConfig,
) -> Result<Vec<WeightedCandidate>> {
    let support = gather_support(pm, center, cfg)?;
    Ok(weighted_candidates(&support, ctx, center))
}

fn weighted_candidates(
    support: &Support,
    ctx: &ContextMap,
    center: Pixel,
) -> Vec<WeightedCandidate> {
    let pixels: Vec<Pixel> = support.patch.iter().map(|e| e.pixel).collect();
    let lbar = normalized_similarities(ctx, center, &pixels);
    support
        .candidates
        .iter()
        .map(|c| WeightedCandidate {
            normal: c.normal,
            area: c.area,
            confidence: triplet_confidence(&lbar, c.triple),
        })
        .collect()
}

/// Area- and confidence-weighted combination of candidates, renormalized to
/// unit length and oriented toward the camera from `center_point`.
///
/// Summation runs in candidate order.
pub fn combine_weighted(candidates: &[WeightedCandidate], center_point: &Vec3) -> Result<Vec3> {
    let mut sum = Vec3::zeros();
    let mut total = 0.0;
    for c in candidates {
        let w = c.area * c.confidence;
        sum += c.normal * w;
        total += w;
    }
    if !(total >= WEIGHT_EPS) {
        return Err(Error::ZeroWeight(total));
    }
    let norm = sum.norm();
    if !(norm > WEIGHT_EPS) {
        return Err(Error::ZeroMean);
    }
    Ok(orient_to_camera(sum / norm, center_point))
}

/// Adaptive surface normal at `center`.
pub fn asn_normal(pm: &PointMap, ctx: &ContextMap, center: Pixel, cfg: &AsnConfig) -> Result<Vec3> {
    let support = gather_support(pm, center, cfg)?;
    let cands = weighted_candidates(&support, ctx, center);
    combine_weighted(&cands, &support.center_point)
}

/// Unweighted mean of candidate normals, renormalized.
///
/// Candidates oriented toward the same point keep that orientation under
/// averaging, so no further flip is applied.
pub fn average_normal(candidates: &[WeightedCandidate]) -> Result<Vec3> {
    if candidates.is_empty() {
        return Err(Error::ZeroMean);
    }
    let sum: Vec3 = candidates
        .iter()
        .fold(Vec3::zeros(), |acc, c| acc + c.normal);
    let mean = sum / candidates.len() as f64;
    let norm = mean.norm();
    if !(norm >= WEIGHT_EPS) {
        return Err(Error::ZeroMean);
    }
    Ok(mean / norm)
}

/// Cross product of the horizontal and vertical central differences.
pub fn sobel_normal(pm: &PointMap, center: Pixel) -> Result<Vec3> {
    let Pixel { x, y } = center;
    if !pm.is_valid(center) || x == 0 || y == 0 {
        return Err(Error::InsufficientSupport(center));
    }
    let at = |p: Pixel| pm.get(p).copied().ok_or(Error::InsufficientSupport(center));
    let right = at(Pixel::new(x + 1, y))?;
    let left = at(Pixel::new(x - 1, y))?;
    let down = at(Pixel::new(x, y + 1))?;
    let up = at(Pixel::new(x, y - 1))?;
    let n = (right - left).cross(&(down - up));
    let norm = n.norm();
    if !(norm > CROSS_EPS) {
        return Err(Error::InsufficientSupport(center));
    }
    Ok(orient_to_camera(n / norm, &pm.values[pm.index(center)]))
}

/// Normal of the total-least-squares plane through `points`, oriented toward
/// the camera from their centroid.
pub fn least_squares_normal(points: &[Vec3]) -> Result<Vec3> {
    if points.len() < 3 {
        return Err(Error::RankDeficient);
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        let d = p - centroid;
        for i in 0..3 {
            for j in i..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    let eig = sym_eigen3(cov);
    if eig.values[0] < RANK_EPS && eig.values[1] < RANK_EPS {
        return Err(Error::RankDeficient);
    }
    let normal = eig.vectors[0].normalize();
    Ok(orient_to_camera(normal, &centroid))
}

/// Applies one estimator at one pixel of a point map.
pub fn estimate_at(
    pm: &PointMap,
    ctx: &ContextMap,
    center: Pixel,
    cfg: &AsnConfig,
    method: Method,
) -> Result<Vec3> {
    match method {
        Method::Asn => asn_normal(pm, ctx, center, cfg),
        Method::Sobel => sobel_normal(pm, center),
        Method::Lsq => {
            let patch = extract_patch(pm, center, cfg.patch)?;
            let points: Vec<Vec3> = patch.iter().map(|e| e.point).collect();
            least_squares_normal(&points)
        }
        Method::Average => {
            let support = gather_support(pm, center, cfg)?;
            let cands: Vec<WeightedCandidate> = support
                .candidates
                .iter()
                .map(|c| WeightedCandidate {
                    normal: c.normal,
                    area: c.area,
                    confidence: 1.0,
                })
                .collect();
            average_normal(&cands)
        }
    }
}

/// Per-pixel normals of a point map; pixels whose estimator fails are invalid.
pub fn recover_normals_from_points(
    pm: &PointMap,
    ctx: &ContextMap,
    cfg: &AsnConfig,
    method: Method,
) -> Result<NormalMap> {
    cfg.validate()?;
    if method == Method::Asn {
        ctx.check_shape(pm.width, pm.height)?;
    }
    let results: Vec<Option<Vec3>> = (0..pm.len())
        .into_par_iter()
        .map(|i| {
            if !pm.valid[i] {
                return None;
            }
            estimate_at(pm, ctx, pm.pixel(i), cfg, method).ok()
        })
        .collect();
    let valid = results.iter().map(Option::is_some).collect();
    let values = results
        .into_iter()
        .map(|n| n.unwrap_or_else(Vec3::zeros))
        .collect();
    Ok(Grid {
        width: pm.width,
        height: pm.height,
        values,
        valid,
    })
}

/// Unprojects `depth` and recovers a normal map with `method`.
pub fn recover_normal_map(
    depth: &DepthMap,
    k: &Intrinsics,
    ctx: &ContextMap,
    cfg: &AsnConfig,
    method: Method,
) -> Result<NormalMap> {
    depth.validate()?;
    ctx.check_shape(depth.width, depth.height)?;
    recover_normals_from_points(&unproject(depth, k), ctx, cfg, method)
}
