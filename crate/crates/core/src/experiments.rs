//! Ablation drivers over synthetic scenes: depth-noise robustness of area
//! weighting, triplet-count and patch-size sweeps, and the window-size rule.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::context::ContextMap;
use crate::error::{Error, Result};
use crate::geometry::{unproject, Grid, NormalMap};
use crate::metrics::{angle_errors_deg, summarize_angles, NormalMetrics};
use crate::normals::{recover_normals_from_points, AsnConfig, Method};
use crate::synthetics::{gen_scene, interior_mask, Scene, SceneKind, SceneSpec};

/// One sweep point for one method. Metrics are averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub method: String,
    pub metrics: NormalMetrics,
    /// Best wall-clock time of the recovery in milliseconds, when measured.
    pub time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub experiment: String,
    pub parameter: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

/// Column order of sweep CSV files.
pub const SWEEP_CSV_HEADER: [&str; 11] = [
    "experiment",
    "parameter",
    "value",
    "method",
    "seeds",
    "mean_deg",
    "median_deg",
    "pct_11_25",
    "pct_22_5",
    "pct_30",
    "count",
];

impl SweepResult {
    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn mean_errors(&self, method: &str) -> Vec<f64> {
        self.rows_for(method).map(|r| r.metrics.mean_deg).collect()
    }

    /// Writes the metric rows. Timings are left out so reruns are byte-identical.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let seeds = self
            .seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(";");
        w.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            let m = &r.metrics;
            w.write_record([
                self.experiment.clone(),
                self.parameter.clone(),
                r.value.to_string(),
                r.method.clone(),
                seeds.clone(),
                m.mean_deg.to_string(),
                m.median_deg.to_string(),
                m.pct_11_25.to_string(),
                m.pct_22_5.to_string(),
                m.pct_30.to_string(),
                m.count.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `value,method,time_ms` rows for the timed sweeps.
    pub fn write_timing_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["value", "method", "time_ms"])
            .map_err(csv_err)?;
        for r in &self.rows {
            if let Some(t) = r.time_ms {
                w.write_record([r.value.to_string(), r.method.clone(), t.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Angle-error summary of `rec` over `mask` pixels where both maps are valid.
pub fn masked_normal_metrics(
    rec: &NormalMap,
    gt: &NormalMap,
    mask: &[bool],
) -> Result<NormalMetrics> {
    let valid: Vec<bool> = gt.valid.iter().zip(mask).map(|(&v, &m)| v && m).collect();
    let gt_masked = Grid {
        valid,
        ..gt.clone()
    };
    summarize_angles(&angle_errors_deg(rec, &gt_masked)?)
}

fn average_metrics(all: &[NormalMetrics]) -> NormalMetrics {
    let n = all.len() as f64;
    let avg = |f: fn(&NormalMetrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    NormalMetrics {
        mean_deg: avg(|m| m.mean_deg),
        median_deg: avg(|m| m.median_deg),
        pct_11_25: avg(|m| m.pct_11_25),
        pct_22_5: avg(|m| m.pct_22_5),
        pct_30: avg(|m| m.pct_30),
        count: all.iter().map(|m| m.count).sum::<usize>() / all.len(),
    }
}

/// Context used for a scene: its region context if it has one, else uniform.
pub fn scene_context(scene: &Scene) -> ContextMap {
    scene
        .context
        .clone()
        .unwrap_or_else(|| ContextMap::constant(scene.depth.width, scene.depth.height, 1, 0.0))
}

/// Standard noise grid: `{0, 0.002, 0.005, 0.01, 0.02} · radius`.
pub fn default_noise_sigmas(radius: f64) -> Vec<f64> {
    [0.0, 0.002, 0.005, 0.01, 0.02]
        .iter()
        .map(|f| f * radius)
        .collect()
}

/// Area-weighted (uniform context) vs. simple-average recovery on the same
/// triplet samples, as a function of depth noise. Errors are averaged over
/// seeds; each seed drives both the noise and the triplet streams.
pub fn run_noise_experiment(
    base: &SceneSpec,
    sigmas: &[f64],
    seeds: &[u64],
    cfg: &AsnConfig,
) -> Result<SweepResult> {
    if sigmas.len() < 2 || seeds.len() < 3 {
        return Err(Error::Config(
            "noise experiment needs >= 2 sigma levels and >= 3 seeds".into(),
        ));
    }
    cfg.validate()?;
    let uniform = ContextMap::constant(base.width, base.height, 1, 0.0);
    let mut rows = Vec::new();
    for &sigma in sigmas {
        let mut area = Vec::new();
        let mut avg = Vec::new();
        for &seed in seeds {
            let scene = gen_scene(&base.with_noise(sigma, seed))?;
            let mask = interior_mask(&scene.clean_depth.valid, base.width, base.height, cfg.patch);
            let pm = unproject(&scene.depth, &base.intrinsics);
            let run_cfg = AsnConfig { seed, ..*cfg };
            let a = recover_normals_from_points(&pm, &uniform, &run_cfg, Method::Asn)?;
            let b = recover_normals_from_points(&pm, &uniform, &run_cfg, Method::Average)?;
            area.push(masked_normal_metrics(&a, &scene.normals, &mask)?);
            avg.push(masked_normal_metrics(&b, &scene.normals, &mask)?);
        }
        for (method, list) in [("area", &area), ("average", &avg)] {
            rows.push(SweepRow {
                value: sigma,
                method: method.into(),
                metrics: average_metrics(list),
                time_ms: None,
            });
        }
    }
    Ok(SweepResult {
        experiment: "noise".into(),
        parameter: "sigma".into(),
        seeds: seeds.to_vec(),
        rows,
    })
}

/// Best-of-`repeats` single-threaded wall-clock time of `f` in milliseconds,
/// with the result of the last run.
fn timed<T>(repeats: usize, mut f: impl FnMut() -> Result<T> + Send) -> Result<(T, f64)>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        let mut best = f64::INFINITY;
        let mut out = None;
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            let v = f()?;
            best = best.min(start.elapsed().as_secs_f64() * 1e3);
            out = Some(v);
        }
        Ok((out.expect("at least one run"), best))
    })
}

/// ASN accuracy and single-threaded runtime as a function of `K` on one
/// fixed scene.
pub fn run_triplet_sweep(
    spec: &SceneSpec,
    ks: &[usize],
    cfg: &AsnConfig,
    repeats: usize,
) -> Result<SweepResult> {
    if ks.windows(2).any(|w| w[0] >= w[1]) || ks.is_empty() {
        return Err(Error::Config(
            "triplet counts must be strictly ascending".into(),
        ));
    }
    let scene = gen_scene(spec)?;
    let ctx = scene_context(&scene);
    let mask = interior_mask(&scene.clean_depth.valid, spec.width, spec.height, cfg.patch);
    let pm = unproject(&scene.depth, &spec.intrinsics);
    let mut rows = Vec::new();
    for &k in ks {
        let run_cfg = AsnConfig {
            triplets: k,
            ..*cfg
        };
        run_cfg.validate()?;
        let (rec, ms) = timed(repeats, || {
            recover_normals_from_points(&pm, &ctx, &run_cfg, Method::Asn)
        })?;
        rows.push(SweepRow {
            value: k as f64,
            method: "asn".into(),
            metrics: masked_normal_metrics(&rec, &scene.normals, &mask)?,
            time_ms: Some(ms),
        });
    }
    Ok(SweepResult {
        experiment: "triplets".into(),
        parameter: "k".into(),
        seeds: vec![spec.seed, cfg.seed],
        rows,
    })
}

/// ASN accuracy and runtime per patch size. All sizes are scored on the
/// pixels whose window of the largest size is fully valid.
pub fn run_patch_sweep(
    spec: &SceneSpec,
    sizes: &[usize],
    cfg: &AsnConfig,
    repeats: usize,
) -> Result<SweepResult> {
    let largest = *sizes
        .iter()
        .max()
        .ok_or_else(|| Error::Config("no patch sizes".into()))?;
    let scene = gen_scene(spec)?;
    let ctx = scene_context(&scene);
    let mask = interior_mask(&scene.clean_depth.valid, spec.width, spec.height, largest);
    let pm = unproject(&scene.depth, &spec.intrinsics);
    let mut rows = Vec::new();
    for &r in sizes {
        let run_cfg = AsnConfig { patch: r, ..*cfg };
        run_cfg.validate()?;
        let (rec, ms) = timed(repeats, || {
            recover_normals_from_points(&pm, &ctx, &run_cfg, Method::Asn)
        })?;
        rows.push(SweepRow {
            value: r as f64,
            method: "asn".into(),
            metrics: masked_normal_metrics(&rec, &scene.normals, &mask)?,
            time_ms: Some(ms),
        });
    }
    Ok(SweepResult {
        experiment: "patch".into(),
        parameter: "size".into(),
        seeds: vec![spec.seed, cfg.seed],
        rows,
    })
}

/// Odd window size whose area is about `ratio` of the image area:
/// `floor(sqrt(w·h·ratio))` rounded down to odd, at least 3.
pub fn window_from_ratio(width: usize, height: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::Config(format!(
            "ratio must be positive, got {ratio}"
        )));
    }
    let raw = ((width * height) as f64 * ratio).sqrt().floor() as usize;
    let odd = if raw.is_multiple_of(2) {
        raw.saturating_sub(1)
    } else {
        raw
    };
    let size = odd.max(3);
    if size > width.min(height) {
        return Err(Error::Range(format!(
            "window {size} exceeds image {width}x{height}"
        )));
    }
    Ok(size)
}

/// Least-squares line fit of `y` on `x`; returns `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, my - slope * mx, r2)
}

/// Semi-sphere used by the noise experiment.
pub fn noise_scene(width: usize, height: usize) -> SceneSpec {
    let focal = 0.9 * width.min(height) as f64;
    SceneSpec::semisphere(width, height, focal)
}

/// Radius of a semi-sphere spec, or 1 for other scenes.
pub fn scene_scale(spec: &SceneSpec) -> f64 {
    match spec.kind {
        SceneKind::SemiSphere { radius, .. } => radius,
        _ => 1.0,
    }
}
