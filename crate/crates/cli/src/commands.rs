use std::path::{Path, PathBuf};
use std::time::Instant;

use authalic::diagnostics::{fd_check_gradient, smallest_hessian_eigenvalue, ProbeOptions};
use authalic::energy::{assemble_global_hessian, evaluate_energy, stretch_energy};
use authalic::mesh::{load_landmarks, load_mesh, validate_landmarks, MeshFormat, SimplicialSurface, ValidationOptions};
use authalic::pipeline::{parameterize, ParamResult};
use authalic::registration::{geodesic_distance, homotopy_frame, register, AlignmentConfig};
use authalic::rgd::{riemannian_gradient, SolverConfig};
use authalic::sphere::{
    count_folds, inverse_stereographic, project_tangent, project_to_manifold, retract_scaled, stereographic,
    SphericalMapping,
};
use authalic::Vec3;

use crate::args::{CheckArgs, MorphArgs, ParamArgs, RegisterArgs, SolverArgs};
use crate::error::{require_file, CliError, CliResult};
use crate::output::{
    ensure_dir, read_composed_map, stem, write_composed_map, write_log_csv, write_obj, write_vertex_ids, RunManifest,
};

fn load_input(path: &Path, what: &str) -> CliResult<SimplicialSurface> {
    require_file(path, what)?;
    Ok(load_mesh(path, MeshFormat::Auto, ValidationOptions::default())?)
}

/// Applies `--noise-sigma` and runs the pipeline.
fn run_pipeline(surface: &SimplicialSurface, solver: &SolverArgs) -> CliResult<ParamResult> {
    let config = solver.param_config();
    config.rgd.validate()?;
    if !(solver.radius > 1.0) {
        return Err(CliError::Usage(format!("--r {} must exceed 1", solver.radius)));
    }
    if !(solver.noise_sigma >= 0.0) {
        return Err(CliError::Usage(format!("--noise-sigma {} is negative", solver.noise_sigma)));
    }
    let input = surface.perturb_vertices(solver.noise_sigma, solver.seed)?;
    Ok(parameterize(&input, &config)?)
}

pub fn param(args: &ParamArgs) -> CliResult<()> {
    let surface = load_input(&args.mesh, "mesh")?;
    let result = run_pipeline(&surface, &args.solver)?;
    ensure_dir(&args.out_dir)?;
    let name = stem(&args.mesh);
    let obj = args.out_dir.join(format!("{name}_sphere.obj"));
    let ids = args.out_dir.join(format!("{name}_sphere.vid"));
    let csv = args.log.clone().unwrap_or_else(|| args.out_dir.join(format!("{name}.csv")));
    let manifest_path = args.out_dir.join(format!("{name}_manifest.json"));

    write_obj(&obj, result.f.rows(), surface.faces())?;
    write_vertex_ids(&ids, surface.num_vertices())?;
    write_log_csv(&csv, &result.log_rows())?;

    let mut manifest = RunManifest::new("param", vec![args.mesh.clone()], args, Some(args.solver.seed));
    let t = result.timings;
    manifest.timings.extend([
        ("init".to_string(), t.init),
        ("fpi".to_string(), t.fpi),
        ("rgd".to_string(), t.rgd),
        ("correction".to_string(), t.correction),
        ("total".to_string(), t.total),
    ]);
    manifest.outputs = vec![obj, ids, csv, manifest_path.clone()];
    manifest.write(&manifest_path)?;

    let m = result.metrics;
    if m.folds > 0 {
        log::warn!("{} folded faces remain", m.folds);
    }
    log::info!("descent stopped: {}", result.rgd.status);
    println!(
        "SD/Mean = {:.4e}, E_A = {:.4e}, time = {:.3} s, folds = {}",
        m.sd_over_mean, m.authalic, t.total, m.folds
    );
    Ok(())
}

fn spherical_map(
    surface: &SimplicialSurface,
    given: Option<&PathBuf>,
    solver: &SolverArgs,
    what: &str,
) -> CliResult<(SphericalMapping, f64)> {
    match given {
        Some(path) => {
            let map = load_input(path, what)?;
            if map.num_vertices() != surface.num_vertices() {
                return Err(CliError::Usage(format!(
                    "{what} {} has {} vertices, the mesh has {}",
                    path.display(),
                    map.num_vertices(),
                    surface.num_vertices()
                )));
            }
            Ok((project_to_manifold(map.vertices())?, 0.0))
        }
        None => {
            let r = run_pipeline(surface, solver)?;
            Ok((r.f, r.timings.total))
        }
    }
}

fn mean_pair_mismatch(a: &SphericalMapping, b: &SphericalMapping, pairs: &[(usize, usize)]) -> f64 {
    let total: f64 = pairs
        .iter()
        .map(|&(p, q)| geodesic_distance(&a.rows()[p], &b.rows()[q]))
        .sum();
    total / pairs.len().max(1) as f64
}

pub fn register_cmd(args: &RegisterArgs) -> CliResult<()> {
    require_file(&args.landmarks, "landmark file")?;
    let m0 = load_input(&args.mesh0, "mesh")?;
    let m1 = load_input(&args.mesh1, "mesh")?;
    let pairs = load_landmarks(&args.landmarks)?;
    validate_landmarks(&pairs, m0.num_vertices(), m1.num_vertices())?;
    if pairs.is_empty() {
        return Err(CliError::Usage(format!("{} holds no landmark pairs", args.landmarks.display())));
    }
    if !(args.lambda >= 0.0) {
        return Err(CliError::Usage(format!("--lambda {} is negative", args.lambda)));
    }
    let pairs: Vec<(usize, usize)> = pairs.iter().map(|p| (p.source_index, p.target_index)).collect();

    let t0 = Instant::now();
    let (f0, param0) = spherical_map(&m0, args.sphere0.as_ref(), &args.solver, "sphere0")?;
    let (f1, param1) = spherical_map(&m1, args.sphere1.as_ref(), &args.solver, "sphere1")?;
    let config = AlignmentConfig {
        solver: SolverConfig {
            max_iters: args.reg_iters,
            ..args.solver.param_config().rgd
        },
        ..AlignmentConfig::default()
    };
    let t_reg = Instant::now();
    let reg = register(&m0, &m1, &f0, &f1, &pairs, args.lambda, !args.raw_midpoints, &config)?;
    let reg_secs = t_reg.elapsed().as_secs_f64();

    ensure_dir(&args.out_dir)?;
    let out = |name: &str| args.out_dir.join(name);
    let mut outputs = Vec::new();
    for (path, map, mesh) in [
        (out("sphere0.obj"), &f0, &m0),
        (out("sphere1.obj"), &f1, &m1),
        (out("aligned0.obj"), &reg.align0.h, &m0),
        (out("aligned1.obj"), &reg.align1.h, &m1),
    ] {
        write_obj(&path, map.rows(), mesh.faces())?;
        outputs.push(path);
    }
    let map_path = out("map.txt");
    write_composed_map(&map_path, &reg.composition.locations)?;
    outputs.push(map_path);

    let before = mean_pair_mismatch(&f0, &f1, &pairs);
    let after = mean_pair_mismatch(&reg.align0.h, &reg.align1.h, &pairs);
    let report = serde_json::json!({
        "landmarks": pairs.len(),
        "mismatch_before": before,
        "mismatch_after": after,
        "side0": { "before": reg.align0.mismatch_before, "after": reg.align0.mismatch_after, "status": reg.align0.run.status.as_str() },
        "side1": { "before": reg.align1.mismatch_before, "after": reg.align1.mismatch_after, "status": reg.align1.run.status.as_str() },
        "fallback_locations": reg.composition.fallbacks,
    });
    let report_path = out("registration.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
        .map_err(|e| CliError::write(&report_path, e))?;
    outputs.push(report_path);

    let manifest_path = out("manifest.json");
    let mut manifest = RunManifest::new(
        "register",
        vec![args.mesh0.clone(), args.mesh1.clone(), args.landmarks.clone()],
        args,
        Some(args.solver.seed),
    );
    manifest.timings.extend([
        ("param0".to_string(), param0),
        ("param1".to_string(), param1),
        ("registration".to_string(), reg_secs),
        ("total".to_string(), t0.elapsed().as_secs_f64()),
    ]);
    outputs.push(manifest_path.clone());
    manifest.outputs = outputs;
    manifest.write(&manifest_path)?;

    let reduction = if before > 0.0 { 100.0 * (1.0 - after / before) } else { 0.0 };
    println!("landmark mismatch: before {before:.6e} rad, after {after:.6e} rad ({reduction:.1}% reduction)");
    if reg.composition.fallbacks > 0 {
        println!("nearest-face fallback used for {} vertices", reg.composition.fallbacks);
    }
    Ok(())
}

pub fn morph(args: &MorphArgs) -> CliResult<()> {
    if args.frames < 2 {
        return Err(CliError::Usage(format!("--frames {} must be at least 2", args.frames)));
    }
    require_file(&args.map, "composed map")?;
    let m0 = load_input(&args.mesh0, "mesh")?;
    let m1 = load_input(&args.mesh1, "mesh")?;
    let records = read_composed_map(&args.map)?;
    let artifact = |message: String| CliError::Artifact {
        path: args.map.clone(),
        line: 0,
        message,
    };
    if records.len() != m0.num_vertices() {
        return Err(artifact(format!(
            "{} records for a mesh with {} vertices",
            records.len(),
            m0.num_vertices()
        )));
    }
    let mut g = Vec::with_capacity(records.len());
    for r in &records {
        let face = *m1
            .faces()
            .get(r.face)
            .ok_or_else(|| artifact(format!("face {} out of range ({} faces)", r.face, m1.num_faces())))?;
        g.push((0..3).map(|c| m1.vertices()[face[c]] * r.weights[c]).sum::<Vec3>());
    }

    ensure_dir(&args.out_dir)?;
    let mut outputs = Vec::new();
    let last = (args.frames - 1) as f64;
    for k in 0..args.frames {
        let t = k as f64 / last;
        let frame = homotopy_frame(m0.vertices(), &g, t)?;
        let path = args.out_dir.join(format!("frame_{k:03}.obj"));
        write_obj(&path, &frame, m0.faces())?;
        println!("t = {t:.6}: {}", path.display());
        outputs.push(path);
    }
    let manifest_path = args.out_dir.join("morph_manifest.json");
    let mut manifest = RunManifest::new(
        "morph",
        vec![args.mesh0.clone(), args.mesh1.clone(), args.map.clone()],
        args,
        None,
    );
    outputs.push(manifest_path.clone());
    manifest.outputs = outputs;
    manifest.write(&manifest_path)
}

struct CheckLine {
    name: &'static str,
    ok: bool,
    detail: String,
}

fn max_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

pub fn check(args: &CheckArgs) -> CliResult<()> {
    let mesh = load_input(&args.mesh, "mesh")?;
    let f = match &args.map {
        Some(path) => {
            let map = load_input(path, "map")?;
            if map.num_vertices() != mesh.num_vertices() {
                return Err(CliError::Usage(format!(
                    "map has {} vertices, the mesh has {}",
                    map.num_vertices(),
                    mesh.num_vertices()
                )));
            }
            project_to_manifold(map.vertices())?
        }
        None => {
            let n = mesh.num_vertices() as f64;
            let c: Vec3 = mesh.vertices().iter().sum::<Vec3>() / n;
            project_to_manifold(&mesh.vertices().iter().map(|v| v - c).collect::<Vec<_>>())?
        }
    };
    let mut lines = vec![CheckLine {
        name: "mesh",
        ok: true,
        detail: format!(
            "{} vertices, {} faces, Euler characteristic {}",
            mesh.num_vertices(),
            mesh.num_faces(),
            mesh.euler_characteristic()
        ),
    }];

    let folds = count_folds(&mesh, &f);
    lines.push(CheckLine {
        name: "folds",
        ok: folds == 0,
        detail: format!("{folds} folded faces"),
    });

    // the remaining checks need a nondegenerate image
    let area = match evaluate_energy(&mesh, f.rows()) {
        Ok(e) => Some(e.image_area),
        Err(e) => {
            lines.push(CheckLine {
                name: "image",
                ok: false,
                detail: e.to_string(),
            });
            None
        }
    };
    if let Some(area) = area {
        let s = mesh.scaled_to_area(area)?;
        let fd = fd_check_gradient(&s, f.rows(), args.fd_step)?;
        lines.push(CheckLine {
            name: "gradient",
            ok: fd.max_relative_error < args.fd_tol,
            detail: format!(
                "max relative error {:.3e} over {} entries (step {:e})",
                fd.max_relative_error, fd.entries_checked, args.fd_step
            ),
        });

        let h = assemble_global_hessian(&s, f.rows())?;
        let n = s.num_vertices();
        let scale = h.norm_inf().max(1.0);
        let mut kernel = 0.0_f64;
        for c in 0..3 {
            let mut t = vec![0.0; 3 * n];
            t[c * n..(c + 1) * n].fill(1.0);
            kernel = h.mul_vec(&t).iter().fold(kernel, |m, x| m.max(x.abs()));
        }
        let asym = h.asymmetry();
        lines.push(CheckLine {
            name: "hessian",
            ok: kernel <= 1e-10 * scale && asym <= 1e-12 * scale,
            detail: format!("max |H t| = {kernel:.3e}, asymmetry {asym:.3e}, |H| = {scale:.3e}"),
        });

        let fast = evaluate_energy(&s, f.rows())?;
        let assembled = stretch_energy(&s, f.rows())?;
        let gap = (fast.stretch - assembled.stretch).abs() / fast.stretch;
        lines.push(CheckLine {
            name: "energy",
            ok: gap <= 1e-10 && fast.authalic >= -1e-12 * fast.stretch,
            detail: format!("E_A = {:.6e}, E_S paths differ by {gap:.2e} relative", fast.authalic),
        });

        let back = inverse_stereographic(&stereographic(&f));
        let grad = riemannian_gradient(&s, &f)?;
        let twice = project_tangent(&f, grad.rows())?;
        let moved = retract_scaled(&f, &grad, -1.0)?;
        let (stereo, proj, unit) = (
            max_diff(f.rows(), back.rows()),
            max_diff(grad.rows(), twice.rows()) / grad.norm_fro().max(1.0),
            moved.max_unit_deviation(),
        );
        lines.push(CheckLine {
            name: "manifold",
            ok: stereo <= 1e-12 && proj <= 1e-12 && unit <= 1e-12,
            detail: format!("stereographic {stereo:.1e}, projector {proj:.1e}, retraction {unit:.1e}"),
        });

        if args.probe_eigen {
            let opts = ProbeOptions::default();
            let probe = smallest_hessian_eigenvalue(&s, f.rows(), args.krylov_dim, args.eigen_mode.into())?;
            lines.push(CheckLine {
                name: "eigen",
                ok: probe.certified(opts.residual_factor),
                detail: format!(
                    "smallest eigenvalue {:.6e}, residual {:.3e}, |H| {:.3e}, {} iterations",
                    probe.smallest_eigenvalue, probe.residual, probe.matrix_norm, probe.iterations
                ),
            });
        }
    }

    let mut failed = 0;
    for l in &lines {
        println!("{}: {} - {}", l.name, if l.ok { "PASS" } else { "FAIL" }, l.detail);
        failed += usize::from(!l.ok);
    }
    if failed > 0 {
        Err(CliError::Check(failed))
    } else {
        Ok(())
    }
}
