//! Independent reference implementations checked against the library.

use asn_core::normals::{asn_normal, least_squares_normal, AsnConfig, Sampling};
use asn_core::synthetics::{gen_scene, SceneSpec};
use asn_core::*;
use nalgebra::{DMatrix, Vector3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight enumeration of every triangle in the window, written without the
/// library's sampling, support, or weighting code.
fn brute_force_normal(pm: &PointMap, ctx: &ContextMap, center: Pixel, r: usize) -> Option<Vec3> {
    let half = r / 2;
    let cp = pm.values[center.y * pm.width + center.x];
    let mut pix = Vec::new();
    for y in center.y.saturating_sub(half)..=(center.y + half).min(pm.height - 1) {
        for x in center.x.saturating_sub(half)..=(center.x + half).min(pm.width - 1) {
            if pm.valid[y * pm.width + x] {
                pix.push((x, y));
            }
        }
    }
    let fc = ctx.feature(center);
    let sim: Vec<f64> = pix
        .iter()
        .map(|&(x, y)| {
            let fj = ctx.feature(Pixel::new(x, y));
            let d2: f64 = fc.iter().zip(fj).map(|(a, b)| (a - b) * (a - b)).sum();
            (-0.5 * d2.sqrt()).exp()
        })
        .collect();
    let z: f64 = sim.iter().sum();
    let lbar: Vec<f64> = sim.iter().map(|s| s / z).collect();

    let face = |n: Vec3| if n.dot(&cp) > 0.0 { -n } else { n };
    let mut acc = Vec3::zeros();
    let mut total = 0.0;
    let n = pix.len();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let (pa, pb, pc) = (pix[a], pix[b], pix[c]);
                let area = 0.5
                    * ((pb.0 as f64 - pa.0 as f64) * (pc.1 as f64 - pa.1 as f64)
                        - (pb.1 as f64 - pa.1 as f64) * (pc.0 as f64 - pa.0 as f64))
                        .abs();
                if area < 1e-6 {
                    continue;
                }
                let [xa, xb, xc] = [pa, pb, pc].map(|(x, y)| pm.values[y * pm.width + x]);
                let cross = (xb - xa).cross(&(xc - xa));
                let len = cross.norm();
                if len.is_nan() || len <= 1e-12 {
                    continue;
                }
                let w = area * (lbar[a] * lbar[b] * lbar[c]);
                acc += face(cross / len) * w;
                total += w;
            }
        }
    }
    (total >= 1e-12 && acc.norm() > 1e-12).then(|| face(acc / acc.norm()))
}

#[test]
fn exhaustive_asn_equals_brute_force_bitwise() {
    let spec = SceneSpec::corner(24, 18, 24.0).with_noise(0.002, 3);
    let scene = gen_scene(&spec).unwrap();
    let pm = unproject(&scene.depth, &spec.intrinsics);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let random_ctx = ContextMap::new(
        24,
        18,
        2,
        (0..24 * 18 * 2)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    for ctx in [scene.context.clone().unwrap(), random_ctx] {
        for r in [3, 5] {
            let cfg = AsnConfig {
                patch: r,
                sampling: Sampling::Exhaustive,
                ..AsnConfig::default()
            };
            for p in pm.pixels().collect::<Vec<_>>() {
                let lib = asn_normal(&pm, &ctx, p, &cfg).ok();
                let oracle = brute_force_normal(&pm, &ctx, p, r);
                assert_eq!(lib, oracle, "pixel {p}, r {r}");
            }
        }
    }
}

fn svd_normal(points: &[Vec3]) -> Vec3 {
    let n = points.len() as f64;
    let c = points.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let m = DMatrix::from_fn(points.len(), 3, |i, j| points[i][j] - c[j]);
    let svd = m.svd(false, true);
    let vt = svd.v_t.unwrap();
    let (imin, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (i, &s)| if s < best.1 { (i, s) } else { best },
            );
    let v: Vector3<f64> = Vector3::new(vt[(imin, 0)], vt[(imin, 1)], vt[(imin, 2)]).normalize();
    orient_to_camera(v, &c)
}

#[test]
fn least_squares_matches_svd_on_random_patches() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.random_range(5..=49);
        let normal = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-2.0..-0.5),
        )
        .normalize();
        let e1 = normal.cross(&Vec3::x()).normalize();
        let e2 = normal.cross(&e1);
        let origin = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(2.0..6.0),
        );
        let noise = rng.random_range(0.0..0.05);
        let points: Vec<Vec3> = (0..n)
            .map(|_| {
                origin
                    + e1 * rng.random_range(-0.5..0.5)
                    + e2 * rng.random_range(-0.5..0.5)
                    + normal * rng.random_range(-noise..=noise)
            })
            .collect();
        let lib = least_squares_normal(&points).unwrap();
        let oracle = svd_normal(&points);
        assert!(angle_between(&lib, &oracle) < 1e-6, "{lib} vs {oracle}");
    }
}

#[test]
fn normalized_similarities_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ctx = ContextMap::new(
        5,
        5,
        4,
        (0..100).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .unwrap();
    let center = Pixel::new(2, 2);
    let patch: Vec<Pixel> = (0..25).map(|i| Pixel::new(i % 5, i / 5)).collect();
    let lbar = normalized_similarities(&ctx, center, &patch);
    let raw: Vec<f64> = patch
        .iter()
        .map(|&p| {
            let d = ctx
                .feature(center)
                .iter()
                .zip(ctx.feature(p))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            (-d / 2.0).exp()
        })
        .collect();
    let z: f64 = raw.iter().sum();
    for (l, r) in lbar.iter().zip(&raw) {
        assert!((l - r / z).abs() < 1e-15);
    }
    assert!((lbar.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(lbar[12], lbar.iter().cloned().fold(0.0, f64::max));
}

/// Replays the global triangle stream and scores it directly.
fn virtual_normal_reference(
    pred: &DepthMap,
    gt: &DepthMap,
    k: &Intrinsics,
    m: usize,
    seed: u64,
) -> f64 {
    let shared: Vec<usize> = (0..pred.len())
        .filter(|&i| pred.valid[i] && gt.valid[i])
        .collect();
    let pp = unproject(pred, k);
    let gp = unproject(gt, k);
    let normal = |pts: &PointMap, t: [usize; 3]| {
        let [a, b, c] = t.map(|i| pts.values[i]);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        (len > 1e-12).then(|| orient_to_camera(n / len, &((a + b + c) / 3.0)))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut used, mut draws) = (0.0, 0, 0);
    while used < m && draws < 3 * m {
        draws += 1;
        let s = index::sample(&mut rng, shared.len(), 3);
        let t = [s.index(0), s.index(1), s.index(2)].map(|j| shared[j]);
        let px = t.map(|i| pred.pixel(i));
        let area = 0.5
            * ((px[1].x as f64 - px[0].x as f64) * (px[2].y as f64 - px[0].y as f64)
                - (px[1].y as f64 - px[0].y as f64) * (px[2].x as f64 - px[0].x as f64))
                .abs();
        if area < 1e-6 {
            continue;
        }
        if let (Some(a), Some(b)) = (normal(&pp, t), normal(&gp, t)) {
            sum += 1.0 - a.dot(&b);
            used += 1;
        }
    }
    sum / used as f64
}

#[test]
fn virtual_normal_matches_reference() {
    let spec = SceneSpec::semisphere(20, 20, 25.0);
    let gt = gen_scene(&spec).unwrap().clean_depth;
    let pred = gen_scene(&spec.with_noise(0.02, 8)).unwrap().depth;
    for (m, seed) in [(50, 1), (400, 9)] {
        let lib = virtual_normal_loss(&pred, &gt, &spec.intrinsics, m, seed).unwrap();
        let oracle = virtual_normal_reference(&pred, &gt, &spec.intrinsics, m, seed);
        assert!((lib - oracle).abs() < 1e-12, "{lib} vs {oracle}");
        assert!(lib > 0.0);
    }
}
