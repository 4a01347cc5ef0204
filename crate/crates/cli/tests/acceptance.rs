//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Set `NCF_ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero exit.

#![allow(clippy::needless_range_loop)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ncf_core::eval::{instance_inlier_fractions, mspd, mssd, visible_mask, vsd, InlierFractions, VisibilityInstance};
use ncf_core::field::{loss_and_grad, loss_from_outputs, read_correspondences, FieldNetwork, LossConfig, OutputScaling};
use ncf_core::geometry::{kabsch, ransac_fit, Correspondence, CorrespondenceSet};
use ncf_core::mesh::{
    box_mesh, cylinder, discretize_symmetry, icosphere, l_prism, marching_cubes, read_ply, write_ply, MeshSdf, ScalarGrid, SymmetrySet,
    TriangleMesh,
};
use ncf_core::rng::stream_rng;
use ncf_core::sampling::{sample_training_points, QueryBatch, SamplingConfig};
use ncf_core::synth::{render_depth, DatasetManifest};
use ncf_core::{PinholeCamera, Pose, Vec3};
use rand::Rng;
use tempfile::TempDir;

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
    secs: f64,
}

fn cam() -> PinholeCamera {
    PinholeCamera::new(600.0, 600.0, 160.0, 120.0, 320, 240).unwrap()
}

fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_pose<R: Rng>(rng: &mut R, t: f64) -> Pose {
    let axis = random_unit(rng);
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let tr = Vec3::new(rng.random_range(-t..t), rng.random_range(-t..t), rng.random_range(-t..t));
    Pose::from_axis_angle(axis, angle, tr)
}

fn ncf(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ncf"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "`ncf {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn read_pose(p: &Path) -> Option<Pose> {
    serde_json::from_str(&fs::read_to_string(p).ok()?).ok()
}

fn report(dir: &Path, name: &str) -> Result<serde_json::Value, String> {
    let text = fs::read_to_string(dir.join(name)).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn stem(image: &str) -> String {
    Path::new(image).file_stem().unwrap().to_string_lossy().into_owned()
}

fn c1_kabsch() -> (bool, String) {
    let start = Instant::now();
    let mut rng = stream_rng(101, 0);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        let n = [3, 10, 100][trial % 3];
        let pose = random_pose(&mut rng, 1000.0);
        let y: Vec<Vec3> = (0..n).map(|_| random_unit(&mut rng) * rng.random_range(10.0..100.0)).collect();
        let x: Vec<Vec3> = y.iter().map(|p| pose.transform(p)).collect();
        let est = match kabsch(&x, &y) {
            Ok(p) => p,
            Err(e) => return (false, format!("trial {trial}: {e}")),
        };
        let res = x.iter().zip(&y).map(|(a, b)| (est.transform(b) - a).norm()).fold(0.0, f64::max);
        worst = worst.max(res);
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst < 1e-9 && secs < 1.0,
        format!("max residual {worst:.2e} mm over 1000 trials in {secs:.3} s"),
    )
}

fn c2_ransac() -> (bool, String) {
    let trials = 500;
    let (m, inliers) = (1000, 200);
    let mut ok = 0;
    for seed in 0..trials as u64 {
        let mut rng = stream_rng(202, seed);
        let gt = random_pose(&mut rng, 200.0);
        let pairs: Vec<Correspondence> = (0..m)
            .map(|i| {
                let y = Vec3::new(
                    rng.random_range(-60.0..60.0),
                    rng.random_range(-60.0..60.0),
                    rng.random_range(-60.0..60.0),
                );
                let x = if i < inliers {
                    gt.transform(&y) + random_unit(&mut rng) * rng.random_range(0.0..2.0)
                } else {
                    gt.transform(&Vec3::new(
                        rng.random_range(-60.0..60.0),
                        rng.random_range(-60.0..60.0),
                        rng.random_range(-60.0..60.0),
                    ))
                };
                Correspondence { x, y, s: 0.0 }
            })
            .collect();
        let c = CorrespondenceSet::new(pairs, 5.0);
        if let Ok(o) = ransac_fit(&c, 200, 20.0, seed) {
            if o.pose.rotation_angle_to(&gt).to_degrees() < 2.0 && o.pose.translation_distance_to(&gt) < 5.0 {
                ok += 1;
            }
        }
    }
    let rate = ok as f64 / trials as f64;
    let w3 = (inliers as f64 * (inliers - 1) as f64 * (inliers - 2) as f64) / (m as f64 * (m - 1) as f64 * (m - 2) as f64);
    let expected = 1.0 - (1.0 - w3).powi(200);
    (
        rate >= 0.8,
        format!("success {ok}/{trials} = {rate:.3} (all-inlier triplet probability gives {expected:.3})"),
    )
}

/// Central differences of the full objective against the analytic gradient.
fn c3_gradients() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut total = 0;
    for cfg_id in 0..20u64 {
        let mut rng = stream_rng(303, cfg_id);
        let d_in = rng.random_range(2..7);
        let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(2..7)).collect();
        let net = FieldNetwork::<f64>::init(d_in, &hidden, &mut rng).unwrap();
        let n = rng.random_range(4..16);
        let delta = rng.random_range(2.0..8.0);
        let gt = random_pose(&mut rng, 50.0);
        let gt_y: Vec<Vec3> = (0..n).map(|_| random_unit(&mut rng) * rng.random_range(0.0..30.0)).collect();
        let batch = QueryBatch {
            points: gt_y.iter().map(|y| gt.transform(y)).collect(),
            gt_y,
            gt_sdf: (0..n).map(|_| rng.random_range(-2.0 * delta..2.0 * delta)).collect(),
        };
        let sym = match cfg_id % 3 {
            0 => SymmetrySet::identity(),
            1 => discretize_symmetry(Vec3::z(), 2).unwrap(),
            _ => discretize_symmetry(random_unit(&mut rng), 4).unwrap(),
        };
        let inputs: Vec<f64> = (0..n * d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaling = OutputScaling {
            y_scale: rng.random_range(20.0..80.0),
            delta,
        };
        let lc = LossConfig {
            lambda: rng.random_range(0.5..2.0),
            delta,
            huber: rng.random_range(1.0..15.0),
        };
        let f = |net: &FieldNetwork<f64>| {
            let mut g = vec![0.0; net.param_count()];
            loss_and_grad(net, &inputs, &batch, &sym, &gt, &scaling, &lc, &mut g, 1.0)
                .unwrap()
                .total
        };
        let mut grad = vec![0.0; net.param_count()];
        loss_and_grad(&net, &inputs, &batch, &sym, &gt, &scaling, &lc, &mut grad, 1.0).unwrap();
        let f0 = f(&net);
        let h = 1e-6;
        for k in 0..net.param_count() {
            total += 1;
            let mut p = net.clone();
            p.params_mut()[k] += h;
            let mut q = net.clone();
            q.params_mut()[k] -= h;
            let (fp, fm) = (f(&p), f(&q));
            let (right, left) = ((fp - f0) / h, (f0 - fm) / h);
            // A kink (ramp, |·|, clamp or symmetry switch) inside the stencil.
            if (right - left).abs() > 1e-3 * right.abs().max(left.abs()).max(1e-3) {
                continue;
            }
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-4));
            checked += 1;
        }
    }
    let coverage = checked as f64 / total as f64;
    (
        worst < 1e-4 && coverage > 0.5,
        format!("max relative error {worst:.2e} over {checked}/{total} smooth parameters in 20 configurations"),
    )
}

fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return (p - (a + ab * (d1 / (d1 - d3)))).norm();
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return (p - (a + ac * (d2 / (d2 - d6)))).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return (p - (b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))))).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm()
}

fn ray_parity(mesh: &TriangleMesh, p: &Vec3, d: &Vec3) -> bool {
    let mut n = 0;
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f);
        let (e1, e2) = (b - a, c - a);
        let h = d.cross(&e2);
        let det = e1.dot(&h);
        if det.abs() < 1e-12 {
            continue;
        }
        let s = p - a;
        let q = s.cross(&e1);
        let (u, v, t) = (s.dot(&h) / det, d.dot(&q) / det, e2.dot(&q) / det);
        if u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0 {
            n += 1;
        }
    }
    n % 2 == 1
}

fn c4_sdf() -> (bool, String) {
    let mut rng = stream_rng(404, 0);
    let mut worst: f64 = 0.0;
    let mut sign_errors = 0;
    for mesh in [icosphere(50.0, 2), cylinder(30.0, 80.0, 24), l_prism()] {
        let sdf = MeshSdf::new(mesh).unwrap();
        let m = sdf.mesh();
        let (lo, hi) = m
            .vertices()
            .iter()
            .fold((Vec3::repeat(f64::MAX), Vec3::repeat(f64::MIN)), |(lo, hi), v| {
                (lo.inf(v), hi.sup(v))
            });
        for _ in 0..1000 {
            let p = Vec3::from_fn(|k, _| rng.random_range(lo[k] - 30.0..hi[k] + 30.0));
            let brute = (0..m.faces().len())
                .map(|f| {
                    let [a, b, c] = m.triangle(f);
                    point_triangle_distance(&p, &a, &b, &c)
                })
                .fold(f64::INFINITY, f64::min);
            let s = sdf.signed_distance(&p);
            worst = worst.max((s.abs() - brute).abs());
            let votes = (0..3).filter(|_| ray_parity(m, &p, &random_unit(&mut rng))).count();
            if (s < 0.0) != (votes >= 2) {
                sign_errors += 1;
            }
        }
    }
    (
        worst < 1e-9 && sign_errors == 0,
        format!("max |magnitude − brute force| {worst:.2e} mm, {sign_errors} sign disagreements in 3000 points"),
    )
}

fn c5_symmetry() -> (bool, String) {
    let c = cam();
    let mut worst: f64 = 0.0;
    let cases = [
        (box_mesh(60.0, 60.0, 100.0), discretize_symmetry(Vec3::z(), 4).unwrap()),
        (cylinder(40.0, 100.0, 36), discretize_symmetry(Vec3::z(), 36).unwrap()),
    ];
    for (k, (mesh, sym)) in cases.into_iter().enumerate() {
        let sdf = MeshSdf::new(mesh).unwrap();
        let mut rng = stream_rng(505, k as u64);
        for _ in 0..5 {
            let gt = Pose::from_axis_angle(random_unit(&mut rng), rng.random_range(0.0..3.0), Vec3::new(10.0, -5.0, 1000.0));
            let est = Pose::from_axis_angle(random_unit(&mut rng), rng.random_range(0.0..0.5), Vec3::new(0.0, 0.0, 15.0)).compose(&gt);
            let cfg = SamplingConfig {
                pool_scale: 0.2,
                points_per_side: 300,
                ..Default::default()
            };
            let (batch, _) = sample_training_points(&sdf, &gt, &c, &cfg, rng.random()).unwrap();
            let outputs: Vec<f64> = (0..batch.len() * 4).map(|_| rng.random_range(-0.9..0.9)).collect();
            let scaling = OutputScaling { y_scale: 60.0, delta: 5.0 };
            let lc = LossConfig::default();
            let ly = |g: &Pose| loss_from_outputs(&outputs, &batch, &sym, g, &scaling, &lc).unwrap().0.loss_y;
            let (l0, m0, p0) = (
                ly(&gt),
                mssd(&est, &gt, sdf.mesh(), &sym),
                mspd(&est, &gt, sdf.mesh(), &sym, &c).unwrap(),
            );
            for s in sym.transforms() {
                let g = gt.compose(s);
                worst = worst
                    .max((ly(&g) - l0).abs())
                    .max((mssd(&est, &g, sdf.mesh(), &sym) - m0).abs())
                    .max((mspd(&est, &g, sdf.mesh(), &sym, &c).unwrap() - p0).abs());
            }
        }
    }
    (
        worst <= 1e-9,
        format!("max change of L_y / MSSD / MSPD along the orbit {worst:.2e}"),
    )
}

fn c9_metrics() -> (bool, String) {
    let c = cam();
    let mesh = l_prism();
    let id = SymmetrySet::identity();
    let gt = Pose::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.7, Vec3::new(10.0, -5.0, 1000.0));
    let depth = render_depth(&mesh, &gt, &c).unwrap();
    let e_vsd = vsd(&gt, &gt, &mesh, &c, &depth, &[7.5, 15.0, 30.0], 15.0).unwrap();
    let zero = mssd(&gt, &gt, &mesh, &id) == 0.0 && mspd(&gt, &gt, &mesh, &id, &c).unwrap() == 0.0 && e_vsd.iter().all(|e| *e == 0.0);
    let shifted = Pose {
        translation: gt.translation + Vec3::new(7.0, 0.0, 0.0),
        ..gt
    };
    let e7 = mssd(&shifted, &gt, &mesh, &id);
    let plate = TriangleMesh::new(
        vec![
            Vec3::new(-40.0, -30.0, 0.0),
            Vec3::new(40.0, -30.0, 0.0),
            Vec3::new(40.0, 30.0, 0.0),
            Vec3::new(-40.0, 30.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
        Vec::new(),
    )
    .unwrap();
    let (dx, z) = (3.0, 900.0);
    let at = Pose::from_translation(Vec3::new(0.0, 0.0, z));
    let moved = Pose::from_translation(Vec3::new(dx, 0.0, z));
    let e_px = mspd(&moved, &at, &plate, &id, &c).unwrap();
    let expect_px = dx * c.fx / z;
    let pass = zero && (e7 - 7.0).abs() <= 1e-12 && (e_px - expect_px).abs() < 1e-6;
    (
        pass,
        format!("identity errors zero: {zero}; 7 mm shift MSSD {e7:.12}; MSPD {e_px:.9} px vs {expect_px:.9} px"),
    )
}

fn c10_marching_cubes(dir: &Path) -> (bool, String) {
    let n = 31;
    let grid = ScalarGrid::from_fn([n, n, n], Vec3::repeat(-75.0), 5.0, |p| p.norm() - 60.0).unwrap();
    let mesh = marching_cubes(&grid, 0.0, None).unwrap();
    let worst = mesh.vertices().iter().map(|v| (v.norm() - 60.0).abs()).fold(0.0, f64::max);
    let path = dir.join("sphere.ply");
    write_ply(&path, &mesh).unwrap();
    let back = read_ply(&path).unwrap();
    let same_faces = back.faces() == mesh.faces();
    let max_dv = back
        .vertices()
        .iter()
        .zip(mesh.vertices())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let pass = !mesh.is_empty() && worst <= 5.0 && same_faces && max_dv < 1e-4 && back.vertices().len() == mesh.vertices().len();
    (
        pass,
        format!(
            "{} vertices, max |r − 60| = {worst:.3} mm; PLY round trip faces equal: {same_faces}, max vertex change {max_dv:.1e}",
            mesh.vertices().len()
        ),
    )
}

fn pose_errors(dir: &Path, manifest: &str, est: &str) -> Result<(f64, f64, usize), String> {
    let m = DatasetManifest::read(&dir.join(manifest)).map_err(|e| e.to_string())?;
    let (mut rot, mut tr, mut missing) = (0.0f64, 0.0f64, 0);
    for r in &m.records {
        match read_pose(&dir.join(est).join(format!("{}.json", stem(&r.image)))) {
            Some(p) => {
                rot = rot.max(p.rotation_angle_to(&r.pose).to_degrees());
                tr = tr.max(p.translation_distance_to(&r.pose));
            }
            None => missing += 1,
        }
    }
    Ok((rot, tr, missing))
}

fn ar(dir: &Path, name: &str) -> Result<f64, String> {
    report(dir, name)?["aggregate"]["ar"]
        .as_f64()
        .ok_or_else(|| "report without AR".to_string())
}

fn c6_oracle(dir: &Path) -> Result<(bool, String), String> {
    let start = Instant::now();
    ncf(
        dir,
        &[
            "gen-data",
            "-c",
            "base.toml",
            "--seed",
            "61",
            "--count",
            "50",
            "--occlusion",
            "none",
            "--out",
            "oracle",
        ],
    )?;
    ncf(
        dir,
        &[
            "estimate",
            "-c",
            "base.toml",
            "--oracle",
            "--manifest",
            "oracle/manifest.json",
            "--out",
            "oracle_est",
        ],
    )?;
    ncf(
        dir,
        &[
            "eval",
            "-c",
            "base.toml",
            "--manifest",
            "oracle/manifest.json",
            "--estimates",
            "oracle_est",
            "--out",
            "oracle_report.json",
        ],
    )?;
    let (rot, tr, missing) = pose_errors(dir, "oracle/manifest.json", "oracle_est")?;
    let a = ar(dir, "oracle_report.json")?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        missing == 0 && rot <= 0.1 && tr <= 1.0 && a == 1.0 && secs < 120.0,
        format!(
            "{}/50 poses, max error {rot:.2e}° / {tr:.2e} mm, AR {a:.4}, {secs:.1} s end to end",
            50 - missing
        ),
    ))
}

fn c12_oracle_steps(dir: &Path) -> Result<(bool, Vec<(String, f64)>), String> {
    let mut out = Vec::new();
    for step in ["5", "10", "20"] {
        let est = format!("oracle_est_{step}");
        let rep = format!("oracle_report_{step}.json");
        ncf(
            dir,
            &[
                "estimate",
                "-c",
                "base.toml",
                "--oracle",
                "--manifest",
                "oracle/manifest.json",
                "--out",
                &est,
                "--grid-step",
                step,
            ],
        )?;
        ncf(
            dir,
            &[
                "eval",
                "-c",
                "base.toml",
                "--manifest",
                "oracle/manifest.json",
                "--estimates",
                &est,
                "--out",
                &rep,
            ],
        )?;
        out.push((step.to_string(), ar(dir, &rep)?));
    }
    Ok((out.iter().all(|(_, a)| *a == 1.0), out))
}

const SMALL: &str = r#"
[dataset]
count = 4
[sampling]
pool_scale = 0.2
points_per_side = 200
[field]
hidden = [32, 16]
[training]
epochs = 2
batch_images = 2
"#;

fn same_tree(a: &Path, b: &Path) -> bool {
    let list = |d: &Path| -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = fs::read_dir(d)
            .map(|it| {
                it.map(|e| {
                    let p = e.unwrap().path();
                    (
                        p.file_name().unwrap().to_string_lossy().into_owned(),
                        fs::read(&p).unwrap_or_default(),
                    )
                })
                .collect()
            })
            .unwrap_or_default();
        v.sort();
        v
    };
    let (x, y) = (list(a), list(b));
    !x.is_empty() && x == y
}

fn c11_determinism(dir: &Path) -> Result<(bool, String), String> {
    fs::write(dir.join("small.toml"), format!("mesh = \"obj.ply\"\nseed = 5\n{SMALL}")).map_err(|e| e.to_string())?;
    let mut checks = Vec::new();
    for run in ["a", "b"] {
        ncf(dir, &["gen-data", "-c", "small.toml", "--out", &format!("det_data_{run}")])?;
        ncf(
            dir,
            &[
                "train",
                "-c",
                "small.toml",
                "--manifest",
                "det_data_a/manifest.json",
                "--out",
                &format!("det_w_{run}.bin"),
            ],
        )?;
        ncf(
            dir,
            &[
                "estimate",
                "-c",
                "small.toml",
                "--weights",
                "det_w_a.bin",
                "--manifest",
                "det_data_a/manifest.json",
                "--out",
                &format!("det_est_{run}"),
                "--dump-corr",
                "yes",
            ],
        )?;
        ncf(
            dir,
            &[
                "eval",
                "-c",
                "small.toml",
                "--manifest",
                "det_data_a/manifest.json",
                "--estimates",
                "det_est_a",
                "--out",
                &format!("det_rep_{run}.json"),
            ],
        )?;
    }
    let same_file = |a: &str, b: &str| fs::read(dir.join(a)).ok().is_some_and(|x| Some(x) == fs::read(dir.join(b)).ok());
    checks.push(("gen-data", same_tree(&dir.join("det_data_a"), &dir.join("det_data_b"))));
    checks.push((
        "train",
        same_file("det_w_a.bin", "det_w_b.bin") && same_file("det_w_a.log.jsonl", "det_w_b.log.jsonl"),
    ));
    checks.push(("estimate", same_tree(&dir.join("det_est_a"), &dir.join("det_est_b"))));
    checks.push(("eval", same_file("det_rep_a.json", "det_rep_b.json")));
    for (w, out) in [("1", "det_w1"), ("8", "det_w8")] {
        ncf(
            dir,
            &[
                "estimate",
                "-c",
                "small.toml",
                "--weights",
                "det_w_a.bin",
                "--manifest",
                "det_data_a/manifest.json",
                "--out",
                out,
                "--workers",
                w,
            ],
        )?;
    }
    checks.push(("workers 1 vs 8", same_tree(&dir.join("det_w1"), &dir.join("det_w8"))));
    let pass = checks.iter().all(|(_, ok)| *ok);
    let detail = checks
        .iter()
        .map(|(n, ok)| format!("{n} {}", if *ok { "identical" } else { "DIFFERS" }))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((pass, detail))
}

struct Trained {
    mssd_ok: usize,
    mssd_total: usize,
    near_mean: Option<f64>,
    occluded_instances: usize,
    ar10: f64,
    ar20: f64,
    curve: Vec<(usize, Option<f64>, Option<f64>, usize)>,
    train_secs: f64,
}

fn fractions(dir: &Path, manifest: &str, est: &str, sdf: &MeshSdf) -> Result<Vec<(f64, InlierFractions)>, String> {
    let m = DatasetManifest::read(&dir.join(manifest)).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for (k, r) in m.records.iter().enumerate() {
        let path = dir.join(est).join(format!("{}.corr", stem(&r.image)));
        if !path.exists() {
            continue;
        }
        let corr = read_correspondences(&path).map_err(|e| e.to_string())?;
        let depth = m.load_depth(k).map_err(|e| e.to_string())?;
        let mask = visible_mask(sdf.mesh(), &r.pose, &m.camera, &depth).map_err(|e| e.to_string())?;
        let inst = VisibilityInstance {
            correspondences: &corr,
            gt: r.pose,
            visib_fraction: r.visib_fraction,
            mask: &mask,
            depth: &depth,
        };
        out.push((r.visib_fraction, instance_inlier_fractions(&inst, sdf, &m.camera, 20.0, 5.0)));
    }
    Ok(out)
}

fn trained_runs(dir: &Path) -> Result<Trained, String> {
    let base = ["-c", "base.toml"];
    let run = |args: &[&str]| ncf(dir, &[&args[..1], &base[..], &args[1..]].concat());
    run(&["gen-data", "--seed", "71", "--count", "200", "--out", "train"])?;
    run(&[
        "gen-data",
        "--seed",
        "72",
        "--count",
        "50",
        "--occlusion",
        "none",
        "--out",
        "test_clear",
    ])?;
    run(&[
        "gen-data",
        "--seed",
        "73",
        "--count",
        "50",
        "--occlusion",
        "0.4-0.6",
        "--out",
        "test_occ",
    ])?;
    run(&[
        "gen-data",
        "--seed",
        "74",
        "--count",
        "50",
        "--occlusion",
        "0.1-1.0",
        "--out",
        "test_curve",
    ])?;
    let t = Instant::now();
    run(&["train", "--manifest", "train/manifest.json", "--out", "model.bin", "--epochs", "60"])?;
    let train_secs = t.elapsed().as_secs_f64();
    eprintln!("  trained in {train_secs:.0} s");

    for (set, est) in [("test_clear", "est_clear"), ("test_occ", "est_occ"), ("test_curve", "est_curve")] {
        let manifest = format!("{set}/manifest.json");
        // A failed estimate leaves no pose file and is scored as incorrect.
        let _ = run(&[
            "estimate",
            "--weights",
            "model.bin",
            "--manifest",
            &manifest,
            "--out",
            est,
            "--dump-corr",
            "yes",
        ]);
    }
    let _ = run(&[
        "estimate",
        "--weights",
        "model.bin",
        "--manifest",
        "test_clear/manifest.json",
        "--out",
        "est_clear_20",
        "--grid-step",
        "20",
    ]);
    run(&[
        "eval",
        "--manifest",
        "test_clear/manifest.json",
        "--estimates",
        "est_clear",
        "--out",
        "rep_clear.json",
    ])?;
    run(&[
        "eval",
        "--manifest",
        "test_clear/manifest.json",
        "--estimates",
        "est_clear_20",
        "--out",
        "rep_clear_20.json",
    ])?;

    let rep = report(dir, "rep_clear.json")?;
    let diameter = rep["diameter"].as_f64().unwrap();
    let inst = rep["instances"].as_array().unwrap();
    let mssd_ok = inst
        .iter()
        .filter(|i| i["e_mssd"].as_f64().is_some_and(|e| e < 0.1 * diameter))
        .count();

    let sdf = MeshSdf::new(read_ply(&dir.join("obj.ply")).unwrap()).unwrap();
    let occ = fractions(dir, "test_occ/manifest.json", "est_occ", &sdf)?;
    let near: Vec<f64> = occ.iter().filter_map(|(_, f)| f.near).collect();
    // Images without any near-surface correspondence count as zero.
    let m_occ = DatasetManifest::read(&dir.join("test_occ/manifest.json")).map_err(|e| e.to_string())?;
    let near_mean = (!m_occ.records.is_empty()).then(|| near.iter().sum::<f64>() / m_occ.records.len() as f64);

    let curve_inst = fractions(dir, "test_curve/manifest.json", "est_curve", &sdf)?;
    let bins = ncf_core::eval::bin_fractions(&curve_inst, 5).map_err(|e| e.to_string())?;
    let curve = bins
        .iter()
        .enumerate()
        .map(|(k, b)| (k, b.visible, b.invisible, b.instances))
        .collect();

    Ok(Trained {
        mssd_ok,
        mssd_total: inst.len(),
        near_mean,
        occluded_instances: m_occ.records.len(),
        ar10: ar(dir, "rep_clear.json")?,
        ar20: ar(dir, "rep_clear_20.json")?,
        curve,
        train_secs,
    })
}

/// Spearman rank correlation with average ranks for ties; `None` if either side is constant.
fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let (vx, vy): (f64, f64) = (rx.iter().map(|a| (a - mx).powi(2)).sum(), ry.iter().map(|b| (b - my).powi(2)).sum());
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

fn c8_curve(t: &Trained) -> (bool, String) {
    let both: Vec<_> = t.curve.iter().filter_map(|&(k, v, i, _)| Some((k as f64, v?, i?))).collect();
    let ordered = both.iter().all(|(_, v, i)| v >= i);
    let xs: Vec<f64> = both.iter().map(|b| b.0).collect();
    let rv = spearman(&xs, &both.iter().map(|b| b.1).collect::<Vec<_>>());
    let ri = spearman(&xs, &both.iter().map(|b| b.2).collect::<Vec<_>>());
    let pass = both.len() >= 2 && ordered && rv.is_some_and(|r| r > 0.0) && ri.is_some_and(|r| r > 0.0);
    let cells = t
        .curve
        .iter()
        .map(|(k, v, i, n)| {
            let f = |x: &Option<f64>| x.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
            format!("bin{k}[n={n} vis {} inv {}]", f(v), f(i))
        })
        .collect::<Vec<_>>()
        .join(" ");
    (
        pass,
        format!("{cells}; visible ≥ invisible: {ordered}; Spearman ρ visible {rv:.3?}, invisible {ri:.3?}"),
    )
}

fn timed(id: usize, f: impl FnOnce() -> (bool, String)) -> Verdict {
    eprintln!("criterion {id} ...");
    let t = Instant::now();
    let (pass, detail) = f();
    Verdict {
        id,
        pass,
        detail,
        secs: t.elapsed().as_secs_f64(),
    }
}

fn or_fail(r: Result<(bool, String), String>) -> (bool, String) {
    r.unwrap_or_else(|e| (false, e))
}

fn main() {
    // Libtest-style flags (e.g. `--list`) are accepted and ignored.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let tmp = TempDir::new().expect("temp dir");
    let dir: PathBuf = tmp.path().to_path_buf();
    ncf(&dir, &["mesh", "--shape", "l-prism", "--out", "obj.ply"]).expect("mesh");
    fs::write(dir.join("base.toml"), "mesh = \"obj.ply\"\n").unwrap();

    let mut v = vec![
        timed(1, c1_kabsch),
        timed(2, c2_ransac),
        timed(3, c3_gradients),
        timed(4, c4_sdf),
        timed(5, c5_symmetry),
        timed(6, || or_fail(c6_oracle(&dir))),
    ];
    let t_all = Instant::now();
    let trained = trained_runs(&dir);
    let trained_secs = t_all.elapsed().as_secs_f64();
    v.push(match &trained {
        Ok(t) => {
            let frac = t.mssd_ok as f64 / t.mssd_total as f64;
            let near_ok = t.near_mean.is_some_and(|m| m >= 0.2);
            Verdict {
                id: 7,
                pass: frac >= 0.7 && near_ok,
                detail: format!(
                    "MSSD < 10% diameter on {}/{} = {frac:.2} (need ≥ 0.70); near-surface inlier fraction at 40–60% visibility {} over {} images (need ≥ 0.20); training {:.0} s",
                    t.mssd_ok,
                    t.mssd_total,
                    t.near_mean.map(|m| format!("{m:.3}")).unwrap_or_else(|| "n/a".into()),
                    t.occluded_instances,
                    t.train_secs
                ),
                secs: trained_secs,
            }
        }
        Err(e) => Verdict { id: 7, pass: false, detail: e.clone(), secs: trained_secs },
    });
    v.push(match &trained {
        Ok(t) => timed(8, || c8_curve(t)),
        Err(e) => Verdict {
            id: 8,
            pass: false,
            detail: format!("no trained model: {e}"),
            secs: 0.0,
        },
    });
    v.push(timed(9, c9_metrics));
    v.push(timed(10, || c10_marching_cubes(&dir)));
    v.push(timed(11, || or_fail(c11_determinism(&dir))));
    v.push(timed(12, || {
        let (oracle_ok, steps) = match c12_oracle_steps(&dir) {
            Ok(x) => x,
            Err(e) => return (false, e),
        };
        let oracle = steps
            .iter()
            .map(|(s, a)| format!("{s} mm AR {a:.3}"))
            .collect::<Vec<_>>()
            .join(", ");
        match &trained {
            Ok(t) => (
                oracle_ok && t.ar20 >= t.ar10 - 0.05,
                format!("oracle: {oracle}; trained: AR(20 mm) {:.3} vs AR(10 mm) {:.3}", t.ar20, t.ar10),
            ),
            Err(e) => (false, format!("oracle: {oracle}; no trained model: {e}")),
        }
    }));

    v.sort_by_key(|x| x.id);
    println!();
    for x in &v {
        println!(
            "criterion {:2}: {} ({:.1} s) {}",
            x.id,
            if x.pass { "PASS" } else { "FAIL" },
            x.secs,
            x.detail
        );
    }
    let failed = v.iter().filter(|x| !x.pass).count();
    println!("acceptance: {} passed, {failed} failed", v.len() - failed);
    if failed > 0 && std::env::var_os("NCF_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
