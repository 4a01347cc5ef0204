use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ncf_core::eval::{
    bin_fractions, bins_to_csv, evaluate_instance, instance_inlier_fractions, visible_mask, InlierFractions, InstanceErrors,
    PoseErrorReport, VisibilityBin, VisibilityInstance,
};
use ncf_core::field::{
    estimate_pose, read_correspondences, train, write_correspondences, CorrespondenceField, EpochLog, NcfModel, OracleField, TrainingImage,
    Y_SCALE_MARGIN,
};
use ncf_core::geometry::remap_to_reference;
use ncf_core::image::RgbImage;
use ncf_core::mesh::{box_mesh, cylinder, icosphere, l_prism, marching_cubes, read_ply, write_ply, MeshSdf, ScalarGrid, TriangleMesh};
use ncf_core::sampling::sample_test_grid;
use ncf_core::synth::{generate_dataset, DatasetManifest, OcclusionConfig, MANIFEST_FILE};
use ncf_core::{PinholeCamera, Pose, Vec3};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, Command, Common};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Mesh { shape, out } => cmd_mesh(&shape, &out),
        Command::GenData {
            common,
            out,
            count,
            occlusion,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(c) = count {
                cfg.dataset.count = c;
            }
            if let Some(o) = occlusion {
                cfg.dataset.occlusion = parse_occlusion(&o)?;
            }
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            let path = cmd_gen_data(&cfg, &out)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Train {
            common,
            manifest,
            out,
            epochs,
            log,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            let log = log.unwrap_or_else(|| out.with_extension("log.jsonl"));
            cmd_train(&cfg, &manifest, &out, &log)
        }
        Command::Estimate {
            common,
            weights,
            oracle_pose,
            oracle,
            image,
            manifest,
            out,
            dump_corr,
            grid_step,
            workers,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = grid_step {
                cfg.sampling.grid_step = s;
            }
            cfg.validate()?;
            let field = FieldSource::new(&cfg, weights, oracle_pose, oracle)?;
            with_workers(workers, || match (image, manifest) {
                (Some(img), None) => cmd_estimate(&cfg, &field, &img, &out, dump_corr.as_deref()),
                (None, Some(m)) => cmd_estimate_manifest(&cfg, &field, &m, &out, dump_corr.is_some()),
                _ => Err(CliError::Usage("estimate needs exactly one of --image or --manifest".into())),
            })?
        }
        Command::Eval {
            common,
            manifest,
            estimates,
            out,
            csv,
            workers,
        } => {
            let cfg = load_config(&common)?;
            with_workers(workers, || cmd_eval(&cfg, &manifest, &estimates, &out, csv.as_deref()))?
        }
        Command::Reconstruct {
            common,
            weights,
            oracle_pose,
            image,
            out,
            step,
        } => {
            let cfg = load_config(&common)?;
            let field = FieldSource::new(&cfg, weights, oracle_pose, false)?;
            cmd_reconstruct(&cfg, &field, &image, &out, step.unwrap_or(cfg.sampling.grid_step))
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(m) = &common.mesh {
        cfg.mesh = Some(m.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn parse_occlusion(s: &str) -> Result<OcclusionConfig> {
    if s == "none" {
        return Ok(OcclusionConfig::None);
    }
    let bad = || CliError::Usage(format!("--occlusion expects `none` or `MIN-MAX`, got {s:?}"));
    let (lo, hi) = s.split_once('-').ok_or_else(bad)?;
    let min: f64 = lo.trim().parse().map_err(|_| bad())?;
    let max: f64 = hi.trim().parse().map_err(|_| bad())?;
    let o = OcclusionConfig::Visibility { min, max };
    o.validate()?;
    Ok(o)
}

fn load_mesh(cfg: &RunConfig) -> Result<TriangleMesh> {
    Ok(read_ply(cfg.mesh_path()?)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn pose_json(p: &Pose) -> String {
    let mut s = serde_json::to_string_pretty(p).expect("pose serializes");
    s.push('\n');
    s
}

fn read_pose(path: &Path) -> Result<Pose> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn builtin_mesh(shape: &str) -> Result<TriangleMesh> {
    Ok(match shape {
        "l-prism" => l_prism(),
        "box" => box_mesh(80.0, 60.0, 40.0),
        "cylinder" => cylinder(40.0, 100.0, 36),
        "sphere" => icosphere(50.0, 3),
        other => return Err(CliError::Usage(format!("unknown shape {other:?} (l-prism, box, cylinder, sphere)"))),
    })
}

pub fn cmd_mesh(shape: &str, out: &Path) -> Result<()> {
    write_ply(out, &builtin_mesh(shape)?)?;
    Ok(())
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let mesh = load_mesh(cfg)?;
    generate_dataset(&mesh, &cfg.camera, &cfg.dataset_config(), out)?;
    Ok(out.join(MANIFEST_FILE))
}

/// Image in the configured camera; other cameras are remapped onto it.
fn image_in_camera(img: RgbImage, src: &PinholeCamera, cfg: &RunConfig) -> Result<RgbImage> {
    if (img.width(), img.height()) != (src.width, src.height) {
        return Err(CliError::Data(format!(
            "image is {}×{}, camera expects {}×{}",
            img.width(),
            img.height(),
            src.width,
            src.height
        )));
    }
    Ok(if src == &cfg.camera {
        img
    } else {
        remap_to_reference(&img, src, &cfg.camera)
    })
}

pub fn cmd_train(cfg: &RunConfig, manifest: &Path, out: &Path, log: &Path) -> Result<()> {
    let mesh = load_mesh(cfg)?;
    let sdf = MeshSdf::new(mesh)?;
    let sym = cfg.symmetry_set()?;
    let m = DatasetManifest::read(manifest)?;
    let images = (0..m.records.len())
        .map(|k| {
            Ok(TrainingImage {
                image: image_in_camera(m.load_image(k)?, &m.camera, cfg)?,
                pose: m.records[k].pose,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut log_file = fs::File::create(log).map_err(|e| CliError::Data(format!("{}: {e}", log.display())))?;
    let tcfg = cfg.train_config();
    let mut on_epoch = |model: &NcfModel, entry: &EpochLog| -> ncf_core::Result<()> {
        model.save(out)?;
        let line = serde_json::to_string(entry)?;
        writeln!(log_file, "{line}").map_err(|e| ncf_core::Error::Format(format!("{}: {e}", log.display())))
    };
    let (model, _) = train(&images, &cfg.camera, &sdf, &sym, &tcfg, &mut on_epoch)?;
    model.save(out)?;
    Ok(())
}

/// Where predictions come from: trained weights, or the analytic field of the
/// object at a given (or per-record ground-truth) pose.
pub enum FieldSource {
    Weights(Box<NcfModel>),
    Oracle { sdf: Box<MeshSdf>, pose: Option<Pose> },
}

impl FieldSource {
    pub fn new(cfg: &RunConfig, weights: Option<PathBuf>, oracle_pose: Option<PathBuf>, oracle: bool) -> Result<Self> {
        match (weights, oracle_pose, oracle) {
            (Some(w), None, false) => Ok(FieldSource::Weights(Box::new(NcfModel::load(&w)?))),
            (None, Some(p), false) => Ok(FieldSource::Oracle {
                sdf: Box::new(MeshSdf::new(load_mesh(cfg)?)?),
                pose: Some(read_pose(&p)?),
            }),
            (None, None, true) => Ok(FieldSource::Oracle {
                sdf: Box::new(MeshSdf::new(load_mesh(cfg)?)?),
                pose: None,
            }),
            _ => Err(CliError::Usage("choose one of --weights, --oracle-pose or --oracle".into())),
        }
    }

    fn with_field<T>(&self, cfg: &RunConfig, gt: Option<&Pose>, f: impl FnOnce(&dyn CorrespondenceField) -> T) -> Result<T> {
        match self {
            FieldSource::Weights(m) => Ok(f(m.as_ref())),
            FieldSource::Oracle { sdf, pose } => {
                let pose = pose
                    .or(gt.copied())
                    .ok_or_else(|| CliError::Usage("--oracle needs a manifest".into()))?;
                Ok(f(&OracleField {
                    sdf,
                    pose,
                    mode: cfg.sampling.sdf_mode,
                }))
            }
        }
    }

    /// Output scaling used to color reconstructions.
    fn y_scale(&self) -> f64 {
        match self {
            FieldSource::Weights(m) => m.scaling.y_scale,
            FieldSource::Oracle { sdf, .. } => Y_SCALE_MARGIN * sdf.mesh().half_extent(),
        }
    }
}

fn grid(cfg: &RunConfig) -> Result<Vec<Vec3>> {
    Ok(sample_test_grid(&cfg.camera, cfg.sampling.z_near, cfg.sampling.z_far, cfg.sampling.grid_step)?.points)
}

pub fn cmd_estimate(cfg: &RunConfig, field: &FieldSource, image: &Path, out: &Path, dump: Option<&Path>) -> Result<()> {
    let img = image_in_camera(RgbImage::read_ppm(image)?, &cfg.camera, cfg)?;
    let grid = grid(cfg)?;
    let (fit, corr) = field
        .with_field(cfg, None, |f| estimate_pose(f, &img, &cfg.camera, &grid, &cfg.estimate_params()))?
        .map_err(|e| match e {
            ncf_core::Error::NoNearSurface | ncf_core::Error::InsufficientCorrespondences(_) => {
                CliError::Numerical(format!("no pose found: {e}"))
            }
            e => e.into(),
        })?;
    if let Some(d) = dump {
        write_correspondences(d, &corr)?;
    }
    write_text(out, &pose_json(&fit.pose))
}

fn stem(image: &str) -> String {
    Path::new(image)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image.to_string())
}

pub fn cmd_estimate_manifest(cfg: &RunConfig, field: &FieldSource, manifest: &Path, out_dir: &Path, dump: bool) -> Result<()> {
    let m = DatasetManifest::read(manifest)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
    let grid = grid(cfg)?;
    for (k, rec) in m.records.iter().enumerate() {
        let img = image_in_camera(m.load_image(k)?, &m.camera, cfg)?;
        let name = stem(&rec.image);
        let res = field.with_field(cfg, Some(&rec.pose), |f| {
            estimate_pose(f, &img, &cfg.camera, &grid, &cfg.estimate_params())
        })?;
        match res {
            Ok((fit, corr)) => {
                write_text(&out_dir.join(format!("{name}.json")), &pose_json(&fit.pose))?;
                if dump {
                    write_correspondences(&out_dir.join(format!("{name}.corr")), &corr)?;
                }
            }
            Err(e) if e.is_numerical() => log::warn!("{name}: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub report: PoseErrorReport,
    /// Instances without an estimate file.
    pub missing: Vec<String>,
    /// Present when correspondence dumps were found.
    pub visibility_bins: Option<Vec<VisibilityBin>>,
}

pub fn cmd_eval(cfg: &RunConfig, manifest: &Path, estimates: &Path, out: &Path, csv: Option<&Path>) -> Result<()> {
    let mesh = load_mesh(cfg)?;
    let sdf = MeshSdf::new(mesh)?;
    let sym = cfg.symmetry_set()?;
    let m = DatasetManifest::read(manifest)?;
    let diameter = sdf.mesh().diameter();
    let th = cfg.eval.thresholds();
    let cam = m.camera;

    type Row = (InstanceErrors, Option<(f64, InlierFractions)>);
    let rows: Vec<Result<Row>> = m
        .records
        .par_iter()
        .enumerate()
        .map(|(k, rec)| {
            let name = stem(&rec.image);
            let est_path = estimates.join(format!("{name}.json"));
            let depth = m.load_depth(k)?;
            let est = if est_path.exists() { Some(read_pose(&est_path)) } else { None };
            let errors = match est {
                None => InstanceErrors::failure(&name, rec.visib_fraction, "missing estimate"),
                Some(Err(e)) => InstanceErrors::failure(&name, rec.visib_fraction, e.to_string()),
                Some(Ok(p)) => evaluate_instance(
                    &name,
                    Some(&p),
                    &rec.pose,
                    rec.visib_fraction,
                    sdf.mesh(),
                    &sym,
                    &cam,
                    &depth,
                    diameter,
                    &th,
                ),
            };
            let corr_path = estimates.join(format!("{name}.corr"));
            let fractions = if corr_path.exists() {
                let corr = read_correspondences(&corr_path)?;
                let mask = visible_mask(sdf.mesh(), &rec.pose, &cam, &depth)?;
                let inst = VisibilityInstance {
                    correspondences: &corr,
                    gt: rec.pose,
                    visib_fraction: rec.visib_fraction,
                    mask: &mask,
                    depth: &depth,
                };
                Some((
                    rec.visib_fraction,
                    instance_inlier_fractions(&inst, &sdf, &cam, cfg.ransac.tau3d, cfg.sampling.delta),
                ))
            } else {
                None
            };
            Ok((errors, fractions))
        })
        .collect();
    let mut instances = Vec::new();
    let mut fractions = Vec::new();
    for r in rows {
        let (e, f) = r?;
        instances.push(e);
        fractions.extend(f);
    }
    let missing = instances
        .iter()
        .filter(|i| i.note.as_deref() == Some("missing estimate"))
        .map(|i| i.name.clone())
        .collect();
    let bins = if fractions.is_empty() {
        None
    } else {
        Some(bin_fractions(&fractions, cfg.eval.bins)?)
    };
    if let (Some(path), Some(b)) = (csv, &bins) {
        write_text(path, &bins_to_csv(b))?;
    }
    let report = EvalReport {
        report: PoseErrorReport::new(instances, diameter, cam.width, th)?,
        missing,
        visibility_bins: bins,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    write_text(out, &text)?;
    let a = report.report.aggregate;
    println!("AR {:.4} (VSD {:.4}, MSSD {:.4}, MSPD {:.4})", a.ar, a.ar_vsd, a.ar_mssd, a.ar_mspd);
    Ok(())
}

pub fn cmd_reconstruct(cfg: &RunConfig, field: &FieldSource, image: &Path, out: &Path, step: f64) -> Result<()> {
    if !(step > 0.0) {
        return Err(CliError::Usage("--step must be positive".into()));
    }
    let cam = cfg.camera;
    let img = image_in_camera(RgbImage::read_ppm(image)?, &cam, cfg)?;
    let (z0, z1) = (cfg.sampling.z_near, cfg.sampling.z_far);
    let x_min = -cam.cx * z1 / cam.fx;
    let x_max = (cam.width as f64 - cam.cx) * z1 / cam.fx;
    let y_min = -cam.cy * z1 / cam.fy;
    let y_max = (cam.height as f64 - cam.cy) * z1 / cam.fy;
    let n = |lo: f64, hi: f64| ((hi - lo) / step).floor() as usize + 1;
    let dims = [n(x_min, x_max), n(y_min, y_max), n(z0, z1)];
    let origin = Vec3::new(x_min, y_min, z0);
    let mut points = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                points.push(origin + Vec3::new(i as f64, j as f64, k as f64) * step);
            }
        }
    }
    let inside: Vec<usize> = (0..points.len())
        .filter(|&i| cam.project(&points[i]).map(|uv| cam.contains(&uv)).unwrap_or(false))
        .collect();
    let query: Vec<Vec3> = inside.iter().map(|&i| points[i]).collect();
    let pred = field.with_field(cfg, None, |f| f.predict(&img, &cam, &query))??;
    // Lattice nodes outside the image count as free space.
    let mut values = vec![cfg.sampling.delta; points.len()];
    for (&i, (_, s)) in inside.iter().zip(&pred) {
        values[i] = *s;
    }
    let grid = ScalarGrid::new(dims, origin, step, values)?;
    let mut mesh = marching_cubes(&grid, 0.0, None)?;
    if !mesh.is_empty() {
        let ys = field.with_field(cfg, None, |f| f.predict(&img, &cam, mesh.vertices()))??;
        let scale = field.y_scale();
        let colors = ys
            .iter()
            .map(|(y, _)| std::array::from_fn(|c| ((y[c] / scale + 1.0) * 0.5).clamp(0.0, 1.0) as f32))
            .collect();
        mesh.set_colors(colors)?;
    }
    write_ply(out, &mesh)?;
    Ok(())
}
