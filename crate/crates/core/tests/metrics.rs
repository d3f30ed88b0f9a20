//! Ordering invariants of the evaluation metrics on random map pairs.

use asn_core::metrics::{depth_metrics, normal_metrics, pointcloud_metrics};
use asn_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

#[test]
fn invariants_hold_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..8), rng.random_range(1..8));
        let n = w * h;
        let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        mask[0] = true;
        let gt: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
        let scale = rng.random_range(0.0..1.0);
        let pred: Vec<f64> = gt
            .iter()
            .map(|g| g * (1.0 + scale * rng.random_range(-0.9..2.0)))
            .collect();
        let gt = DepthMap::from_parts(w, h, gt, mask.clone()).unwrap();
        let pred = DepthMap::from_parts(w, h, pred, vec![true; n]).unwrap();
        let d = depth_metrics(&pred, &gt).unwrap();
        assert!(d.delta1 <= d.delta2 && d.delta2 <= d.delta3 && d.delta3 <= 1.0 && d.delta1 >= 0.0);
        assert!(d.rel >= 0.0 && d.log10 >= 0.0 && d.rmse >= 0.0);
        assert_eq!(d.count, gt.valid_count());

        let ng =
            Grid::from_parts(w, h, (0..n).map(|_| unit(&mut rng)).collect(), mask.clone()).unwrap();
        let np = Grid::from_parts(
            w,
            h,
            (0..n).map(|_| unit(&mut rng)).collect(),
            vec![true; n],
        )
        .unwrap();
        let m = normal_metrics(&np, &ng).unwrap();
        assert!(m.pct_11_25 <= m.pct_22_5 && m.pct_22_5 <= m.pct_30 && m.pct_30 <= 1.0);
        assert!((0.0..=180.0).contains(&m.mean_deg) && (0.0..=180.0).contains(&m.median_deg));
        let same = normal_metrics(&ng, &ng).unwrap();
        assert!(same.mean_deg < 1e-5 && same.pct_11_25 == 1.0);

        let pg = unproject(&gt, &Intrinsics::new(2.0, 2.0, 0.5, 0.5).unwrap());
        let pp = unproject(&pred, &Intrinsics::new(2.0, 2.0, 0.5, 0.5).unwrap());
        let c = pointcloud_metrics(&pp, &pg).unwrap();
        assert!(c.pct_0_1 <= c.pct_0_3 && c.pct_0_3 <= c.pct_0_5 && c.pct_0_5 <= 1.0);
        assert!(c.dist <= c.rms + 1e-12 && c.dist >= 0.0);
    }
}
