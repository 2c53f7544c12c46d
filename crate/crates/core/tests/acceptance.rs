//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use authalic::bijectivity::correct_bijectivity;
use authalic::diagnostics::{area_ratio_stats, fd_check_gradient};
use authalic::energy::{
    assemble_global_hessian, euclidean_gradient, evaluate_energy, face_laplacian, stretch_gradient, FaceGeometry,
};
use authalic::fpi::{conformal_initial_map, fpi_minimize, FpiConfig};
use authalic::linesearch::{cubic_fit, cubic_minimizer, quadratic_minimizer, LineSearchStrategy};
use authalic::mesh::{load_mesh, make_bumpy_sphere, make_icosphere, MeshFormat, SimplicialSurface, ValidationOptions};
use authalic::pipeline::{parameterize, ParamConfig};
use authalic::registration::{compose_registration, geodesic_distance, homotopy_frame, register, AlignmentConfig};
use authalic::rgd::{NormalizedStretch, RgdDriver, SolverConfig};
use authalic::sphere::{
    count_folds, invert_plane, inverse_stereographic, project_tangent, project_to_manifold, retract, retract_scaled,
    stereographic, PlanarPoint, SphericalMapping, TangentField,
};
use authalic::Vec3;
use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

type Check = fn() -> Result<Outcome, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn radial(surface: &SimplicialSurface) -> Result<SphericalMapping, String> {
    project_to_manifold(surface.vertices()).map_err(err)
}

fn area_preservation() -> Result<Outcome, String> {
    let s = make_icosphere(3, [1.0; 3]);
    let t = Instant::now();
    let f = SphericalMapping::new(s.vertices().to_vec()).map_err(err)?;
    let e = evaluate_energy(&s, f.rows()).map_err(err)?;
    let stats = area_ratio_stats(&s, f.rows()).map_err(err)?;
    let secs = t.elapsed().as_secs_f64();
    Ok(verdict(
        s.num_vertices() == 642 && e.authalic.abs() <= 1e-10 && stats.sd_over_mean.abs() <= 1e-12 && secs < 1.0,
        format!(
            "n = {}, E_A = {:.3e}, SD/Mean = {:.3e}, {secs:.3} s",
            s.num_vertices(),
            e.authalic,
            stats.sd_over_mean
        ),
    ))
}

fn gradient_fd() -> Result<Outcome, String> {
    let s = make_icosphere(2, [1.0; 3]).perturb_vertices(0.02, 11).map_err(err)?;
    let f = radial(&s)?;
    let t = Instant::now();
    let fd = fd_check_gradient(&s, f.rows(), 1e-6).map_err(err)?;
    let secs = t.elapsed().as_secs_f64();
    Ok(verdict(
        s.num_vertices() == 162 && fd.max_relative_error < 1e-6 && secs < 5.0,
        format!(
            "n = {}, max rel err = {:.3e} over {} entries, {secs:.3} s",
            s.num_vertices(),
            fd.max_relative_error,
            fd.entries_checked
        ),
    ))
}

fn hessian_fd() -> Result<Outcome, String> {
    let s = make_icosphere(1, [1.0; 3]).perturb_vertices(0.03, 5).map_err(err)?;
    let n = s.num_vertices();
    let f = radial(&s)?;
    let h = assemble_global_hessian(&s, f.rows()).map_err(err)?;
    let dense = h.to_dense();
    let step = 1e-5;
    let mut worst = 0.0_f64;
    for c in 0..3 {
        for v in 0..n {
            let mut plus = f.rows().to_vec();
            let mut minus = plus.clone();
            plus[v][c] += step;
            minus[v][c] -= step;
            let gp = stretch_gradient(&s, &plus).map_err(err)?;
            let gm = stretch_gradient(&s, &minus).map_err(err)?;
            let col = c * n + v;
            for r in 0..3 {
                for w in 0..n {
                    let fd = (gp[w][r] - gm[w][r]) / (2.0 * step);
                    worst = worst.max((fd - dense[(r * n + w, col)]).abs());
                }
            }
        }
    }
    let rel = worst / dense.amax();
    let mut annihilate = 0.0_f64;
    for c in 0..3 {
        let mut t = vec![0.0; 3 * n];
        t[c * n..(c + 1) * n].fill(1.0);
        let ht = h.mul_vec(&t);
        annihilate = annihilate.max(ht.iter().fold(0.0, |m, x| m.max(x.abs())));
    }
    Ok(verdict(
        n == 42 && rel < 1e-5 && annihilate <= 1e-10,
        format!("n = {n}, FD rel err = {rel:.3e}, max |H t| = {annihilate:.3e}"),
    ))
}

fn area_gradient_duality() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa4ea);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let p: [Vec3; 3] = std::array::from_fn(|_| {
            Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let reference = rng.random_range(0.1..2.0);
        let g = FaceGeometry::new(p[0], p[1], p[2], reference);
        let partials = g.area_partials();
        let l = face_laplacian(p[0], p[1], p[2], reference);
        let scale = reference / g.image_area;
        let mut diff = 0.0_f64;
        let mut size = 0.0_f64;
        for a in 0..3 {
            let via_l: Vec3 = (0..3).map(|b| p[b] * l[(a, b)]).sum::<Vec3>() * scale;
            diff = diff.max((via_l - partials[a]).amax());
            size = size.max(partials[a].amax());
        }
        worst = worst.max(diff / size);
    }
    Ok(verdict(worst <= 1e-10, format!("100 faces, max rel diff = {worst:.3e}")))
}

fn descent_contract() -> Result<Outcome, String> {
    let s0 = make_icosphere(3, [1.0, 0.8, 0.6]);
    let f0 = radial(&s0)?;
    let area = evaluate_energy(&s0, f0.rows()).map_err(err)?.image_area;
    let s = s0.scaled_to_area(area).map_err(err)?;
    let initial = evaluate_energy(&s, f0.rows()).map_err(err)?;
    let config = SolverConfig {
        max_iters: 100,
        grad_tol: Some(0.0),
        energy_tol: 0.0,
        strategy: LineSearchStrategy::Interpolant,
        ..SolverConfig::default()
    };
    let c1 = config.line_search.c1;
    let obj = NormalizedStretch::new(&s);
    let mut driver = RgdDriver::new(&obj, f0, config).map_err(err)?;
    let mut steps = Vec::new();
    let mut solve_secs = 0.0;
    loop {
        let t = Instant::now();
        let step = driver.step().map_err(err)?;
        solve_secs += t.elapsed().as_secs_f64();
        match step {
            Some(r) => steps.push(r),
            None => break,
        }
    }
    let status = driver.status();
    let result = driver.finish();

    let mut armijo_ok = true;
    let mut strict = true;
    let mut prev = initial.normalized;
    for r in &steps {
        let phi0 = evaluate_energy(&s, r.from.rows()).map_err(err)?.normalized;
        let egrad = euclidean_gradient(&s, r.from.rows()).map_err(err)?;
        let dphi0: f64 = egrad.iter().zip(r.direction.rows()).map(|(g, d)| g.dot(d)).sum();
        let moved = retract_scaled(&r.from, &r.direction, r.search.alpha).map_err(err)?;
        let phi = evaluate_energy(&s, moved.rows()).map_err(err)?.normalized;
        armijo_ok &= dphi0 < 0.0 && phi <= phi0 + c1 * r.search.alpha * dphi0;
        strict &= phi < prev;
        prev = phi;
    }
    let last = evaluate_energy(&s, result.f.rows()).map_err(err)?;
    let corrected = correct_bijectivity(&s, &result.f, 1.2).map_err(err)?;
    let ok = steps.len() == 100
        && s.num_vertices() == 642
        && armijo_ok
        && strict
        && last.authalic < 0.5 * initial.authalic
        && corrected.folds_after == 0
        && solve_secs < 10.0;
    Ok(verdict(
        ok,
        format!(
            "{} accepted ({}), Armijo {}, strictly decreasing {}, E_A {:.4e} -> {:.4e}, folds after correction {}, {solve_secs:.2} s",
            steps.len(),
            status.map(|s| s.as_str()).unwrap_or("running"),
            if armijo_ok { "held" } else { "violated" },
            strict,
            initial.authalic,
            last.authalic,
            corrected.folds_after
        ),
    ))
}

fn line_search_algebra() -> Result<Outcome, String> {
    let q = quadratic_minimizer(1.0, -1.0, 1.0, 1.0).ok_or("no quadratic minimizer")?;
    let (a, b) = cubic_fit(1.0, -2.0, 1.0, 0.0, 2.0, 5.0);
    let m = cubic_minimizer(a, b, -2.0).ok_or("no cubic minimizer")?;
    let expect = (2.0_f64 / 3.0).sqrt();
    let ok = (q - 0.5).abs() <= 1e-12 && (a - 1.0).abs() <= 1e-10 && b.abs() <= 1e-10 && (m - expect).abs() <= 1e-10;
    Ok(verdict(ok, format!("quadratic {q}, cubic (a, b) = ({a}, {b}), minimizer {m:.12}")))
}

fn round_trips() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let rows: Vec<Vec3> = (0..500)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let f = project_to_manifold(&rows).map_err(err)?;
    let back = inverse_stereographic(&stereographic(&f));
    let stereo = f.rows().iter().zip(back.rows()).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);

    let ambient: Vec<Vec3> = (0..500)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let xi = project_tangent(&f, &ambient).map_err(err)?;
    let twice = project_tangent(&f, xi.rows()).map_err(err)?;
    let idem = xi.rows().iter().zip(twice.rows()).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    let moved = retract(&f, &TangentField::from_rows(xi.rows().to_vec())).map_err(err)?;
    let unit = moved.max_unit_deviation();

    let h = stereographic(&f);
    let hh = invert_plane(&invert_plane(&h));
    let mut inv = 0.0_f64;
    for (a, b) in h.values.iter().zip(&hh.values) {
        inv = inv.max(match (a, b) {
            (PlanarPoint::Finite(x), PlanarPoint::Finite(y)) => (x - y).norm() / x.norm().max(1.0),
            (PlanarPoint::Infinity, PlanarPoint::Infinity) => 0.0,
            _ => f64::INFINITY,
        });
    }
    let ok = stereo <= 1e-12 && unit <= 1e-12 && idem <= 1e-12 && inv <= 1e-12;
    Ok(verdict(
        ok,
        format!("stereographic {stereo:.1e}, retraction {unit:.1e}, projector {idem:.1e}, inversion {inv:.1e}"),
    ))
}

fn fpi_behavior() -> Result<Outcome, String> {
    let raw = make_bumpy_sphere(3, 0.2, 3.0);
    let param = parameterize(&raw, &ParamConfig::default()).map_err(err)?;
    let s = &param.surface;
    let init = conformal_initial_map(&raw).map_err(err)?;
    let only = fpi_minimize(
        s,
        &init,
        &FpiConfig {
            max_iters: 30,
            stop_on_increase: false,
            ..FpiConfig::default()
        },
    )
    .map_err(err)?;
    let fpi_min = only.records.iter().map(|r| r.authalic).fold(f64::INFINITY, f64::min);
    let warm = param.fpi.as_ref().ok_or("pipeline skipped FPI")?;
    let boundary = only.boundary_fixed && warm.boundary_fixed;
    let ok = only.first_increase_iter.is_some() && param.metrics.authalic <= fpi_min && boundary;
    Ok(verdict(
        ok,
        format!(
            "first increase at {:?}, FPI-only min E_A {:.4e}, pipeline E_A {:.4e}, boundary fixed {}",
            only.first_increase_iter, fpi_min, param.metrics.authalic, boundary
        ),
    ))
}

fn bijectivity() -> Result<Outcome, String> {
    let s = make_icosphere(2, [1.0; 3]);
    let mut rows = radial(&s)?.into_rows();
    let v = 17;
    let nbr = s
        .edges()
        .iter()
        .find_map(|&[a, b]| if a == v { Some(b) } else if b == v { Some(a) } else { None })
        .ok_or("isolated vertex")?;
    rows[v] = (2.0 * rows[nbr] - rows[v]).normalize();
    let f = SphericalMapping::new(rows).map_err(err)?;
    let r = correct_bijectivity(&s, &f, 1.2).map_err(err)?;
    let ok = r.folds_before >= 1 && r.folds_after == 0 && r.boundary_fixed && count_folds(&s, &r.f) == 0;
    Ok(verdict(
        ok,
        format!(
            "folds {} -> {} in {} sweeps, boundary fixed {}",
            r.folds_before, r.folds_after, r.sweeps, r.boundary_fixed
        ),
    ))
}

fn pair_mismatch(a: &SphericalMapping, b: &SphericalMapping, pairs: &[(usize, usize)]) -> f64 {
    pairs
        .iter()
        .map(|&(p, q)| geodesic_distance(&a.rows()[p], &b.rows()[q]))
        .sum::<f64>()
        / pairs.len() as f64
}

fn registration() -> Result<Outcome, String> {
    let m0 = make_icosphere(2, [1.0; 3]);
    let f0 = radial(&m0)?;
    let rot = Rotation3::from_euler_angles(0.2, -0.15, 0.1);
    let m1 = m0.with_vertices(m0.vertices().iter().map(|v| rot * v).collect()).map_err(err)?;
    let f1 = radial(&m1)?;
    let pairs: Vec<(usize, usize)> = [3, 40, 77, 101, 150].iter().map(|&v| (v, v)).collect();
    let config = AlignmentConfig::default();
    let reg = register(&m0, &m1, &f0, &f1, &pairs, 10.0, true, &config).map_err(err)?;
    let before = pair_mismatch(&f0, &f1, &pairs);
    let after = pair_mismatch(&reg.align0.h, &reg.align1.h, &pairs);

    let g = &reg.composition.points;
    let start = homotopy_frame(m0.vertices(), g, 0.0).map_err(err)?;
    let end = homotopy_frame(m0.vertices(), g, 1.0).map_err(err)?;
    let endpoints = start.as_slice() == m0.vertices() && end.as_slice() == g.as_slice();

    let same = compose_registration(&m0, &m0, &f0, &f0).map_err(err)?;
    let identity = m0
        .vertices()
        .iter()
        .zip(&same.points)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    let ok = after <= 0.1 * before && endpoints && identity <= 1e-10;
    Ok(verdict(
        ok,
        format!(
            "mismatch {before:.4e} -> {after:.4e} ({:.1}% reduction), endpoints exact {endpoints}, identity error {identity:.1e}",
            100.0 * (1.0 - after / before)
        ),
    ))
}

fn find_benchmark(dir: &Path) -> Option<PathBuf> {
    let entries = std::fs::read_dir(dir).ok()?;
    entries.filter_map(|e| e.ok().map(|e| e.path())).find(|p| {
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_ascii_lowercase().replace(['_', '-', ' '], "");
        let ext = p.extension().and_then(|s| s.to_str()).unwrap_or("").to_ascii_lowercase();
        name == "davidhead" && (ext == "obj" || ext == "off")
    })
}

fn benchmark() -> Result<Outcome, String> {
    let Some(dir) = std::env::var_os("AUTHALIC_BENCH_DIR") else {
        return Ok(Outcome::Skip("AUTHALIC_BENCH_DIR not set".into()));
    };
    let Some(path) = find_benchmark(Path::new(&dir)) else {
        return Ok(Outcome::Skip(format!("no David Head mesh in {}", Path::new(&dir).display())));
    };
    let surface = load_mesh(&path, MeshFormat::Auto, ValidationOptions::default()).map_err(err)?;
    let t = Instant::now();
    let param = parameterize(&surface, &ParamConfig::default()).map_err(err)?;
    let secs = t.elapsed().as_secs_f64();
    let init = conformal_initial_map(&surface).map_err(err)?;
    let only = fpi_minimize(
        &param.surface,
        &init,
        &FpiConfig {
            max_iters: 30,
            stop_on_increase: false,
            ..FpiConfig::default()
        },
    )
    .map_err(err)?;
    let m = param.metrics;
    let sd_ok = (m.sd_over_mean - 0.0156).abs() <= 0.25 * 0.0156;
    let ea_ok = (m.authalic - 3.04e-3).abs() <= 0.5 * 3.04e-3;
    let inc_ok = only.first_increase_iter.is_some_and(|k| k.abs_diff(8) <= 3);
    let time_ok = secs <= 91.6;
    Ok(verdict(
        sd_ok && ea_ok && inc_ok && time_ok,
        format!(
            "SD/Mean {:.4e}, E_A {:.4e}, FPI first increase {:?}, {secs:.2} s",
            m.sd_over_mean, m.authalic, only.first_increase_iter
        ),
    ))
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 11] = [
        ("exactness at area preservation", area_preservation),
        ("gradient correctness", gradient_fd),
        ("Hessian correctness", hessian_fd),
        ("area-gradient duality", area_gradient_duality),
        ("descent contract", descent_contract),
        ("line-search algebra", line_search_algebra),
        ("geometry round trips", round_trips),
        ("FPI behavior", fpi_behavior),
        ("bijectivity correction", bijectivity),
        ("registration", registration),
        ("benchmark reproduction", benchmark),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let (tag, detail) = match check() {
            Ok(Outcome::Pass(d)) => ("PASS", d),
            Ok(Outcome::Skip(d)) => ("SKIP", d),
            Ok(Outcome::Fail(d)) => ("FAIL", d),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("criterion {} ({name}): {tag} - {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
