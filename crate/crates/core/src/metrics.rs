//! Depth, surface-normal, and point-cloud evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_between, DepthMap, NormalMap, PointMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub rel: f64,
    pub log10: f64,
    pub rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalMetrics {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub pct_11_25: f64,
    pub pct_22_5: f64,
    pub pct_30: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCloudMetrics {
    pub dist: f64,
    pub rms: f64,
    pub pct_0_1: f64,
    pub pct_0_3: f64,
    pub pct_0_5: f64,
    pub count: usize,
}

/// Full evaluation table; sections are present when their inputs were given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub depth: Option<DepthMetrics>,
    pub normal: Option<NormalMetrics>,
    pub pointcloud: Option<PointCloudMetrics>,
}

fn shared<T, U>(
    a: &crate::geometry::Grid<T>,
    b: &crate::geometry::Grid<U>,
    what: &str,
) -> Result<Vec<usize>> {
    a.check_shape(b, what)?;
    let idx: Vec<usize> = (0..a.len()).filter(|&i| a.valid[i] && b.valid[i]).collect();
    if idx.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(idx)
}

fn fraction(count: usize, total: usize) -> f64 {
    count as f64 / total as f64
}

pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMetrics> {
    let idx = shared(pred, gt, "depth metrics")?;
    let n = idx.len();
    let (mut rel, mut log10, mut sq) = (0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    for &i in &idx {
        let (p, g) = (pred.values[i], gt.values[i]);
        if !(p > 0.0 && g > 0.0) {
            return Err(Error::Domain(format!(
                "non-positive depth at pixel {}",
                pred.pixel(i)
            )));
        }
        rel += (p - g).abs() / g;
        log10 += (p.log10() - g.log10()).abs();
        sq += (p - g) * (p - g);
        let ratio = (p / g).max(g / p);
        for (j, h) in hits.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(j as i32 + 1) {
                *h += 1;
            }
        }
    }
    let m = n as f64;
    Ok(DepthMetrics {
        rel: rel / m,
        log10: log10 / m,
        rmse: (sq / m).sqrt(),
        delta1: fraction(hits[0], n),
        delta2: fraction(hits[1], n),
        delta3: fraction(hits[2], n),
        count: n,
    })
}

/// Per-pixel angle errors in degrees over the shared mask.
pub fn angle_errors_deg(pred: &NormalMap, gt: &NormalMap) -> Result<Vec<f64>> {
    let idx = shared(pred, gt, "normal metrics")?;
    Ok(idx
        .into_iter()
        .map(|i| angle_between(&pred.values[i], &gt.values[i]).to_degrees())
        .collect())
}

/// Summary statistics of a list of angle errors in degrees. The median is the
/// lower median.
pub fn summarize_angles(angles: &[f64]) -> Result<NormalMetrics> {
    if angles.is_empty() {
        return Err(Error::NoOverlap);
    }
    let n = angles.len();
    let mut sorted = angles.to_vec();
    sorted.sort_by(f64::total_cmp);
    let below = |t: f64| fraction(angles.iter().filter(|&&a| a < t).count(), n);
    Ok(NormalMetrics {
        mean_deg: angles.iter().sum::<f64>() / n as f64,
        median_deg: sorted[(n - 1) / 2],
        pct_11_25: below(11.25),
        pct_22_5: below(22.5),
        pct_30: below(30.0),
        count: n,
    })
}

pub fn normal_metrics(pred: &NormalMap, gt: &NormalMap) -> Result<NormalMetrics> {
    summarize_angles(&angle_errors_deg(pred, gt)?)
}

pub fn pointcloud_metrics(pred: &PointMap, gt: &PointMap) -> Result<PointCloudMetrics> {
    let idx = shared(pred, gt, "point-cloud metrics")?;
    let n = idx.len();
    let d: Vec<f64> = idx
        .iter()
        .map(|&i| (pred.values[i] - gt.values[i]).norm())
        .collect();
    let below = |t: f64| fraction(d.iter().filter(|&&v| v < t).count(), n);
    Ok(PointCloudMetrics {
        dist: d.iter().sum::<f64>() / n as f64,
        rms: (d.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt(),
        pct_0_1: below(0.1),
        pct_0_3: below(0.3),
        pct_0_5: below(0.5),
        count: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Grid, Vec3};

    fn depth(v: Vec<f64>) -> DepthMap {
        let n = v.len();
        DepthMap::from_depths(n, 1, v).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn depth_examples() {
        let gt = depth(vec![1.0, 2.5, 4.0]);
        let m = depth_metrics(&gt, &gt).unwrap();
        assert_eq!(
            (m.rel, m.rmse, m.delta1, m.delta2, m.delta3),
            (0.0, 0.0, 1.0, 1.0, 1.0)
        );

        let m = depth_metrics(&depth(gt.values.iter().map(|g| 1.3 * g).collect()), &gt).unwrap();
        assert!(close(m.rel, 0.3));
        assert_eq!((m.delta1, m.delta2), (0.0, 1.0));

        let m = depth_metrics(&depth(vec![1.0, 2.0]), &depth(vec![2.0, 2.0])).unwrap();
        assert!(close(m.rel, 0.25) && close(m.rmse, 0.5f64.sqrt()) && close(m.delta1, 0.5));
    }

    #[test]
    fn normal_examples() {
        let z = Vec3::new(0.0, 0.0, -1.0);
        let same = Grid::from_parts(2, 1, vec![z, z], vec![true; 2]).unwrap();
        let m = normal_metrics(&same, &same).unwrap();
        assert_eq!(
            (m.mean_deg, m.median_deg, m.pct_11_25, m.pct_30),
            (0.0, 0.0, 1.0, 1.0)
        );

        let x = Grid::from_parts(2, 1, vec![Vec3::x(), Vec3::y()], vec![true; 2]).unwrap();
        let m = normal_metrics(&x, &same).unwrap();
        assert!(close(m.mean_deg, 90.0));
        assert_eq!((m.pct_11_25, m.pct_22_5, m.pct_30), (0.0, 0.0, 0.0));

        let m = summarize_angles(&[40.0, 0.0, 20.0, 10.0]).unwrap();
        assert!(close(m.mean_deg, 17.5));
        assert_eq!(
            (m.median_deg, m.pct_11_25, m.pct_22_5, m.pct_30),
            (10.0, 0.5, 0.75, 0.75)
        );
    }

    #[test]
    fn pointcloud_examples() {
        let pts = |v: Vec<Vec3>| {
            let n = v.len();
            Grid::from_parts(n, 1, v, vec![true; n]).unwrap()
        };
        let gt = pts(vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 2.0)]);
        let m = pointcloud_metrics(&gt, &gt).unwrap();
        assert_eq!(
            (m.dist, m.pct_0_1, m.pct_0_3, m.pct_0_5),
            (0.0, 1.0, 1.0, 1.0)
        );

        let shifted = pts(gt
            .values
            .iter()
            .map(|p| p + Vec3::new(0.2, 0.0, 0.0))
            .collect());
        let m = pointcloud_metrics(&shifted, &gt).unwrap();
        assert!(close(m.dist, 0.2));
        assert_eq!((m.pct_0_1, m.pct_0_3), (0.0, 1.0));

        let two = pts(vec![Vec3::new(0.05, 0.0, 1.0), Vec3::new(1.0, 0.45, 2.0)]);
        let m = pointcloud_metrics(&two, &gt).unwrap();
        assert!(close(m.dist, 0.25) && close(m.rms, 0.1025f64.sqrt()));
        assert_eq!((m.pct_0_1, m.pct_0_5), (0.5, 1.0));
    }

    #[test]
    fn empty_overlap_errors() {
        let mut a = depth(vec![1.0]);
        a.valid[0] = false;
        assert_eq!(depth_metrics(&a, &depth(vec![1.0])), Err(Error::NoOverlap));
        assert!(summarize_angles(&[]).is_err());
    }
}
