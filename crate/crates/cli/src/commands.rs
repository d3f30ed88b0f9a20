use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use asn_core::experiments::{
    default_noise_sigmas, noise_scene, run_noise_experiment, run_patch_sweep, run_triplet_sweep,
    scene_scale,
};
use asn_core::gradients::asn_loss_of_depth;
use asn_core::io::{
    context_from_bytes, depth_from_pfm, normals_from_pfm, points_to_pfm, read_intrinsics, read_pfm,
    scalar_to_pfm, vectors_to_pfm, write_pfm, PfmImage,
};
use asn_core::{
    check_problem, guidance_weights, intensity_map, random_problem, recover_normal_map,
    run_context_fit, silog_loss, top_v_sample_masked, total_loss, unproject, virtual_normal_loss,
    weighted_normal_loss, window_from_ratio, AsnConfig, ContextMap, DepthMap, DerivativeOrder,
    GradTarget, GuidanceScope, Intrinsics, LossConfig, Method, MetricsReport, NormalMap, Sampling,
    SceneSpec, SilogVariant, SweepResult,
};
use serde_json::json;

use crate::args::{
    Cli, Command, Experiment, Format, LossArgs, MethodArg, MetricsArgs, TargetArg, Term,
};
use crate::error::{CliError, CliResult};

struct Globals {
    seed: u64,
    patch: Option<usize>,
    k: Option<usize>,
    out: Option<PathBuf>,
}

impl Globals {
    fn asn_config(&self, default_patch: usize, default_k: usize) -> CliResult<AsnConfig> {
        let cfg = AsnConfig {
            patch: self.patch.unwrap_or(default_patch),
            triplets: self.k.unwrap_or(default_k),
            seed: self.seed,
            ..AsnConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_path(&self, command: &str) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("{command} writes an image and needs --out")))
    }

    /// Writes text results to `--out`, or to stdout without it.
    fn emit(&self, bytes: &[u8]) -> CliResult<()> {
        match &self.out {
            Some(path) => write_file(path, bytes),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(bytes)
                    .and_then(|_| stdout.flush())
                    .map_err(|e| CliError::Core(e.into()))
            }
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let g = Globals {
        seed: cli.seed,
        patch: cli.patch,
        k: cli.k,
        out: cli.out,
    };
    match cli.command {
        Command::Unproject { depth, intrinsics } => {
            let out = g.out_path("unproject")?;
            let pm = unproject(&load_depth(&depth)?, &load_intrinsics(&intrinsics)?);
            save_pfm(out, &points_to_pfm(&pm))
        }
        Command::Normals {
            method,
            depth,
            intrinsics,
            context,
            exhaustive,
        } => {
            let out = g.out_path("normals")?;
            let mut cfg = g.asn_config(5, 40)?;
            if exhaustive {
                cfg.sampling = Sampling::Exhaustive;
            }
            let depth = load_depth(&depth)?;
            let ctx = load_context_or_uniform(context.as_deref(), &depth)?;
            let normals = recover_normal_map(
                &depth,
                &load_intrinsics(&intrinsics)?,
                &ctx,
                &cfg,
                method.into(),
            )?;
            save_pfm(out, &vectors_to_pfm(&normals))
        }
        Command::Metrics(args) => metrics(&g, args),
        Command::Guidance { context, order } => {
            let out = g.out_path("guidance")?;
            let gm = guidance_weights(
                &intensity_map(&load_context(&context)?),
                derivative_order(order),
            )?;
            save_pfm(out, &scalar_to_pfm(&gm))
        }
        Command::Sample {
            context,
            ratio,
            order,
            depth,
        } => {
            let gm = guidance_weights(
                &intensity_map(&load_context(&context)?),
                derivative_order(order),
            )?;
            let mask = depth.as_deref().map(load_depth).transpose()?;
            let set = top_v_sample_masked(&gm, ratio, mask.as_ref().map(|d| d.valid.as_slice()))?;
            let mut w = csv_writer();
            w.write_record(["x", "y", "weight"]).map_err(csv_err)?;
            for p in &set.pixels {
                w.write_record([
                    p.x.to_string(),
                    p.y.to_string(),
                    gm.at(p.x, p.y).to_string(),
                ])
                .map_err(csv_err)?;
            }
            g.emit(&csv_bytes(w)?)
        }
        Command::Loss(args) => loss(&g, args),
        Command::Gradcheck {
            target,
            instances,
            size,
            tol,
        } => gradcheck(&g, target, instances, size, tol),
        Command::Experiment(e) => experiment(&g, e),
    }
}

fn metrics(g: &Globals, a: MetricsArgs) -> CliResult<()> {
    let mut report = MetricsReport::default();
    match (&a.pred_depth, &a.gt_depth) {
        (Some(p), Some(t)) => {
            let (pred, gt) = (load_depth(p)?, load_depth(t)?);
            report.depth = Some(asn_core::depth_metrics(&pred, &gt)?);
            if let Some(k) = &a.intrinsics {
                let k = load_intrinsics(k)?;
                report.pointcloud = Some(asn_core::pointcloud_metrics(
                    &unproject(&pred, &k),
                    &unproject(&gt, &k),
                )?);
            }
        }
        (None, None) => {}
        _ => {
            return Err(CliError::Usage(
                "depth metrics need both --pred-depth and --gt-depth".into(),
            ))
        }
    }
    match (&a.pred_normals, &a.gt_normals) {
        (Some(p), Some(t)) => {
            report.normal = Some(asn_core::normal_metrics(
                &load_normals(p)?,
                &load_normals(t)?,
            )?)
        }
        (None, None) => {}
        _ => {
            return Err(CliError::Usage(
                "normal metrics need both --pred-normals and --gt-normals".into(),
            ))
        }
    }
    if report == MetricsReport::default() {
        return Err(CliError::Usage(
            "metrics needs a depth pair or a normal pair".into(),
        ));
    }
    let bytes = match a.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let value = serde_json::to_value(&report).expect("report serializes");
            let mut w = csv_writer();
            w.write_record(["section", "metric", "value"])
                .map_err(csv_err)?;
            for section in ["depth", "normal", "pointcloud"] {
                if let Some(fields) = value[section].as_object() {
                    for (name, v) in fields {
                        w.write_record([section, name, &v.to_string()])
                            .map_err(csv_err)?;
                    }
                }
            }
            csv_bytes(w)?
        }
    };
    g.emit(&bytes)
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str, term: &str) -> CliResult<&'a Path> {
    v.as_deref()
        .ok_or_else(|| CliError::Usage(format!("loss --term {term} requires --{flag}")))
}

fn loss(g: &Globals, a: LossArgs) -> CliResult<()> {
    let cfg = LossConfig {
        silog_variant: if a.silog_minus {
            SilogVariant::Minus
        } else {
            SilogVariant::Plus
        },
        guidance_scope: if a.global_guidance {
            GuidanceScope::Global
        } else {
            GuidanceScope::SampledOnly
        },
        ..LossConfig::default()
    };
    let name = match a.term {
        Term::Silog => "silog",
        Term::Asn => "asn",
        Term::Normal => "normal",
        Term::Total => "total",
        Term::Vn => "vn",
    };
    let silog = || -> CliResult<f64> {
        let pred = load_depth(require(&a.pred_depth, "pred-depth", name)?)?;
        let gt = load_depth(require(&a.gt_depth, "gt-depth", name)?)?;
        Ok(silog_loss(&pred, &gt, cfg.silog_variant)?)
    };
    let asn = || -> CliResult<f64> {
        let pred = load_depth(require(&a.pred_depth, "pred-depth", name)?)?;
        let gt = load_normals(require(&a.gt_normals, "gt-normals", name)?)?;
        let k = load_intrinsics(require(&a.intrinsics, "intrinsics", name)?)?;
        let ctx = load_context_or_uniform(a.context.as_deref(), &pred)?;
        Ok(asn_loss_of_depth(
            &pred,
            &gt,
            &k,
            &ctx,
            &g.asn_config(5, 40)?,
        )?)
    };
    let normal = || -> CliResult<f64> {
        let pred = load_normals(require(&a.pred_normals, "pred-normals", name)?)?;
        let gt = load_normals(require(&a.gt_normals, "gt-normals", name)?)?;
        let ctx = load_context(require(&a.context, "context", name)?)?;
        let gm = guidance_weights(&intensity_map(&ctx), derivative_order(a.order))?;
        let sampled = top_v_sample_masked(&gm, a.ratio, Some(&gt.valid))?;
        Ok(weighted_normal_loss(&pred, &gt, &gm, &sampled, &cfg, 3)?)
    };
    let value = match a.term {
        Term::Silog => json!({ "term": name, "value": silog()? }),
        Term::Asn => json!({ "term": name, "value": asn()? }),
        Term::Normal => json!({ "term": name, "value": normal()? }),
        Term::Vn => {
            let pred = load_depth(require(&a.pred_depth, "pred-depth", name)?)?;
            let gt = load_depth(require(&a.gt_depth, "gt-depth", name)?)?;
            let k = load_intrinsics(require(&a.intrinsics, "intrinsics", name)?)?;
            json!({ "term": name, "value": virtual_normal_loss(&pred, &gt, &k, a.vn_triplets, g.seed)? })
        }
        Term::Total => {
            let (d, s, n) = (silog()?, asn()?, normal()?);
            json!({ "term": name, "value": total_loss(d, s, n, &cfg)?, "depth": d, "asn": s, "normal": n })
        }
    };
    g.emit(format!("{value}\n").as_bytes())
}

fn gradcheck(
    g: &Globals,
    target: TargetArg,
    instances: usize,
    size: usize,
    tol: f64,
) -> CliResult<()> {
    if instances == 0 {
        return Err(CliError::Usage("--instances must be >= 1".into()));
    }
    let cfg = g.asn_config(3, 8)?;
    let target = match target {
        TargetArg::Depth => GradTarget::Depth,
        TargetArg::Context => GradTarget::Context,
    };
    let mut w = csv_writer();
    w.write_record(["instance", "seed", "gradient", "max_rel_error"])
        .map_err(csv_err)?;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let seed = g.seed.wrapping_add(i as u64);
        let problem = random_problem(size, seed)?;
        for c in check_problem(&problem, target, &AsnConfig { seed, ..cfg })? {
            worst = worst.max(c.max_rel_error);
            w.write_record([
                i.to_string(),
                seed.to_string(),
                c.gradient.to_string(),
                c.max_rel_error.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    g.emit(&csv_bytes(w)?)?;
    eprintln!("worst relative error {worst:e} over {instances} instances (tolerance {tol:e})");
    if worst < tol {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "gradient check failed: {worst:e} >= {tol:e}"
        )))
    }
}

fn experiment(g: &Globals, e: Experiment) -> CliResult<()> {
    match e {
        Experiment::Noise {
            width,
            height,
            seeds,
            sigmas,
        } => {
            let base = noise_scene(width, height);
            let sigmas = sigmas.unwrap_or_else(|| default_noise_sigmas(scene_scale(&base)));
            let seeds: Vec<u64> = (0..seeds as u64).map(|i| g.seed.wrapping_add(i)).collect();
            let r = run_noise_experiment(&base, &sigmas, &seeds, &g.asn_config(5, 40)?)?;
            write_sweep(g, &r, None)
        }
        Experiment::Triplets {
            ks,
            width,
            height,
            noise,
            repeats,
            timing,
        } => {
            let base = noise_scene(width, height);
            let spec = base.with_noise(noise * scene_scale(&base), g.seed);
            let r = run_triplet_sweep(&spec, &ks, &g.asn_config(5, 40)?, repeats)?;
            write_sweep(g, &r, timing.as_deref())
        }
        Experiment::Patch {
            sizes,
            width,
            height,
            repeats,
            timing,
        } => {
            let spec = SceneSpec::corner(width, height, 0.9 * width.min(height) as f64);
            let r = run_patch_sweep(&spec, &sizes, &g.asn_config(5, 40)?, repeats)?;
            write_sweep(g, &r, timing.as_deref())
        }
        Experiment::Window {
            width,
            height,
            ratio,
        } => {
            let size = window_from_ratio(width, height, ratio)?;
            g.emit(format!("{size}\n").as_bytes())
        }
        Experiment::FitContext {
            width,
            height,
            steps,
            lr,
            context_out,
            report,
        } => {
            let spec = SceneSpec::corner(width, height, 0.9 * width.min(height) as f64);
            let r = run_context_fit(&spec, &g.asn_config(5, 40)?, steps, lr)?;
            let mut w = csv_writer();
            w.write_record(["step", "loss"]).map_err(csv_err)?;
            for (i, l) in r.fit.loss_trace.iter().enumerate() {
                w.write_record([i.to_string(), l.to_string()])
                    .map_err(csv_err)?;
            }
            g.emit(&csv_bytes(w)?)?;
            if let Some(path) = context_out {
                write_file(&path, &asn_core::io::context_to_bytes(&r.fit.context)?)?;
            }
            let first = r.fit.loss_trace[0];
            let last = *r.fit.loss_trace.last().expect("trace is never empty");
            if let Some(path) = report {
                let summary = json!({
                    "steps": steps,
                    "lr": lr,
                    "loss_before": first,
                    "loss_after": last,
                    "crease_deg_before": r.crease_deg_before,
                    "crease_deg_after": r.crease_deg_after,
                });
                write_file(&path, format!("{summary:#}\n").as_bytes())?;
            }
            eprintln!(
                "loss {first:.6} -> {last:.6}, crease error {:.3} -> {:.3} deg",
                r.crease_deg_before, r.crease_deg_after
            );
            Ok(())
        }
    }
}

fn write_sweep(g: &Globals, r: &SweepResult, timing: Option<&Path>) -> CliResult<()> {
    let mut bytes = Vec::new();
    r.write_csv(&mut bytes)?;
    g.emit(&bytes)?;
    if let Some(path) = timing {
        let mut t = Vec::new();
        r.write_timing_csv(&mut t)?;
        write_file(path, &t)?;
    }
    Ok(())
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Asn => Method::Asn,
            MethodArg::Sobel => Method::Sobel,
            MethodArg::Lsq => Method::Lsq,
            MethodArg::Average => Method::Average,
        }
    }
}

fn derivative_order(order: u8) -> DerivativeOrder {
    if order == 1 {
        DerivativeOrder::First
    } else {
        DerivativeOrder::Second
    }
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::file(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::file(path, e))
}

fn load_pfm(path: &Path) -> CliResult<PfmImage> {
    read_pfm(&read_file(path)?).map_err(|e| CliError::file(path, e))
}

fn save_pfm(path: &Path, img: &PfmImage) -> CliResult<()> {
    write_file(path, &write_pfm(img).map_err(|e| CliError::file(path, e))?)
}

fn load_depth(path: &Path) -> CliResult<DepthMap> {
    depth_from_pfm(&load_pfm(path)?).map_err(|e| CliError::file(path, e))
}

fn load_normals(path: &Path) -> CliResult<NormalMap> {
    normals_from_pfm(&load_pfm(path)?).map_err(|e| CliError::file(path, e))
}

fn load_context(path: &Path) -> CliResult<ContextMap> {
    context_from_bytes(&read_file(path)?).map_err(|e| CliError::file(path, e))
}

fn load_context_or_uniform(path: Option<&Path>, depth: &DepthMap) -> CliResult<ContextMap> {
    match path {
        Some(p) => load_context(p),
        None => Ok(ContextMap::constant(depth.width, depth.height, 1, 0.0)),
    }
}

fn load_intrinsics(path: &Path) -> CliResult<Intrinsics> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| {
        CliError::file(
            path,
            asn_core::Error::Intrinsics("document is not UTF-8".into()),
        )
    })?;
    read_intrinsics(&text).map_err(|e| CliError::file(path, e))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn csv_bytes(w: csv::Writer<Vec<u8>>) -> CliResult<Vec<u8>> {
    w.into_inner()
        .map_err(|e| CliError::Core(asn_core::Error::Io(e.to_string())))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Core(asn_core::Error::Io(e.to_string()))
}
