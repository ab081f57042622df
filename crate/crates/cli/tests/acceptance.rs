//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roa_core::levelset::sampled_min;
use roa_core::lmikit::fit_lambdas;
use roa_core::reference::*;
use roa_core::simcheck::sample_region;
use roa_core::{
    area_estimate, integrate, max_level, run_case, run_multi, solve_pwq, solve_quadratic_ldi, validate_region,
    verify_certificate, BoxDomain, LdiSystem, PipelineSpec, PolyMap, Region, SimOptions, SolverOptions, SymMatrix,
    TsModel, DEFAULT_LAMBDA_GRID,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let took = start.elapsed();
    if took <= limit {
        Ok(format!("{detail} [{:.2?}]", took))
    } else {
        Err(format!("{detail}, but took {took:.2?} (limit {limit:?})"))
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn vertices_reproduce() -> Outcome {
    let start = Instant::now();
    let model = TsModel::build(&planar_field(), &identity_premises(), &identity_factorization(), &identity_box())
        .map_err(|e| e.to_string())?;
    let expected = identity_vertices();
    ensure(model.vertices().len() == expected.len(), || "wrong vertex count".into())?;
    let diff = model.vertices().iter().zip(&expected).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    ensure(diff <= 1e-12, || format!("max entry difference {diff:e}"))?;
    within(Duration::from_secs(1), start, format!("4 vertices, max entry difference {diff:e}"))
}

fn level_check(pieces: &[SymMatrix], bx: &BoxDomain, lo: f64, hi: f64) -> Outcome {
    let start = Instant::now();
    let r = max_level(pieces, bx).map_err(|e| e.to_string())?;
    ensure((lo..=hi).contains(&r.k), || format!("k = {} outside [{lo}, {hi}]", r.k))?;
    within(Duration::from_secs(1), start, format!("k = {:.6} in [{lo}, {hi}]", r.k))
}

fn published_certificates_verify() -> Outcome {
    let start = Instant::now();
    let tol = -1e-4;
    let sys = LdiSystem::new(identity_vertices()).map_err(|e| e.to_string())?;
    let cert = fit_lambdas(&identity_pieces(), &sys, &DEFAULT_LAMBDA_GRID).map_err(|e| e.to_string())?;
    let r = verify_certificate(&cert, &sys, tol).map_err(|e| e.to_string())?;
    ensure(r.accepted, || format!("identity pieces margin {:e}", r.min_margin))?;
    let mut detail = format!("identity margin {:.4} at lambda {:?}", r.min_margin, rounded(&cert.lambdas));

    let mut any = false;
    for (name, sign) in [("published", -1.0), ("flipped", 1.0)] {
        let sys = LdiSystem::new(shear_vertices(sign)).map_err(|e| e.to_string())?;
        let cert = fit_lambdas(&shear_pieces(), &sys, &DEFAULT_LAMBDA_GRID).map_err(|e| e.to_string())?;
        let r = verify_certificate(&cert, &sys, tol).map_err(|e| e.to_string())?;
        any |= r.accepted;
        detail.push_str(&format!(
            "; shear A8 {name} sign: {} (margin {:.4})",
            if r.accepted { "verifies" } else { "fails" },
            r.min_margin
        ));
    }
    ensure(any, || format!("no A8 variant verifies: {detail}"))?;
    within(Duration::from_secs(10), start, detail)
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

fn fresh_solves_are_sound() -> Outcome {
    let start = Instant::now();
    let solver = SolverOptions::default();
    let mut detail = Vec::new();
    for case in [identity_case(), shear_case()] {
        let name = case.label.clone().unwrap_or_default();
        let r = run_case(&case, &planar_field(), &solver).map_err(|e| format!("{name}: {e}"))?;
        ensure(r.margins.accepted && r.margins.min_margin >= 1e-9, || {
            format!("{name}: margin {:e}", r.margins.min_margin)
        })?;
        let report = validate_region(&r.estimate, &planar_field(), 500, 1, &SimOptions::default());
        ensure(report.all_converged(), || format!("{name}: {}/{} converged", report.converged, report.tested))?;
        detail.push(format!(
            "{name}: margin {:.3e}, k {:.4}, {}/{} converged",
            r.margins.min_margin, r.level.k, report.converged, report.tested
        ));
    }
    within(Duration::from_secs(60), start, detail.join("; "))
}

fn union_enlarges_region() -> Outcome {
    let start = Instant::now();
    let spec = PipelineSpec {
        system: planar_field(),
        original_box: identity_box(),
        cases: vec![identity_published_case(), shear_published_case()],
        solver: SolverOptions::default(),
    };
    let out = run_multi(&spec).map_err(|e| e.to_string())?;
    ensure(out.region.members().len() == 2, || "both published cases must certify".into())?;
    let (ident, sheared) = (&out.region.members()[0], &out.region.members()[1]);

    let beyond = sample_region(sheared, 5000, 3).into_iter().filter(|x| !ident.contains(x)).count();
    ensure(beyond > 0, || "no sampled point of the shear estimate lies outside the identity estimate".into())?;

    let bbox = identity_box().hull(&out.region.bounding_box());
    let single = area_estimate(ident, &bbox, 1_000_000, 42);
    let union = area_estimate(&out.region, &bbox, 1_000_000, 42);
    let (_, single_hi) = single.interval();
    let (union_lo, _) = union.interval();
    ensure(union_lo > single_hi, || {
        format!("union {:.4}+/-{:.4} vs single {:.4}+/-{:.4}", union.area, union.half_width, single.area, single.half_width)
    })?;
    within(
        Duration::from_secs(30),
        start,
        format!(
            "{beyond}/5000 shear samples outside; area union {:.4}+/-{:.4} > single {:.4}+/-{:.4}",
            union.area, union.half_width, single.area, single.half_width
        ),
    )
}

fn random_pd(rng: &mut ChaCha8Rng) -> SymMatrix {
    let l = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::new(&l * l.transpose() + DMatrix::identity(2, 2) * rng.random_range(0.01..0.5)).expect("symmetric")
}

fn level_matches_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let pieces = vec![random_pd(&mut rng), random_pd(&mut rng)];
        let lower: Vec<f64> = (0..2).map(|_| -rng.random_range(0.1..2.0)).collect();
        let upper: Vec<f64> = (0..2).map(|_| rng.random_range(0.1..2.0)).collect();
        let bx = BoxDomain::new(lower, upper).map_err(|e| e.to_string())?;
        let exact = max_level(&pieces, &bx).map_err(|e| e.to_string())?.k;
        let oracle = sampled_min(&pieces, &bx, 1_000_000).k;
        ensure(exact <= oracle * (1.0 + 1e-12), || format!("pair {i}: exact {exact} above oracle {oracle}"))?;
        let rel = (oracle - exact) / oracle;
        ensure(rel <= 1e-3, || format!("pair {i}: relative gap {rel:e}"))?;
        worst = worst.max(rel);
    }
    within(Duration::from_secs(30), start, format!("50 pairs, worst relative gap {worst:.2e}"))
}

fn hurwitz_ldi(rng: &mut ChaCha8Rng) -> LdiSystem {
    let count = rng.random_range(2..=4);
    let vertices = (0..count)
        .map(|_| {
            let s = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
            let abscissa = s.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            s - DMatrix::identity(2, 2) * (abscissa + rng.random_range(0.05..1.0))
        })
        .collect();
    LdiSystem::new(vertices).expect("square vertices")
}

fn m2(rows: [[f64; 2]; 2]) -> DMatrix<f64> {
    DMatrix::from_fn(2, 2, |i, j| rows[i][j])
}

fn zero_lambda_reduction() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut feasible = 0;
    for i in 0..20 {
        let sys = hurwitz_ldi(&mut rng);
        let pwq = solve_pwq(&sys, &[0.0]).is_ok();
        let quad = solve_quadratic_ldi(&sys).is_ok();
        ensure(pwq == quad, || format!("random LDI {i}: pwq {pwq}, quadratic {quad}"))?;
        feasible += usize::from(quad);
    }
    // Hurwitz pairs whose midpoint is unstable, and one unstable vertex.
    let infeasible = [
        vec![m2([[-1.0, 10.0], [0.0, -1.0]]), m2([[-1.0, 0.0], [10.0, -1.0]])],
        vec![m2([[-1.0, 4.0], [0.0, -1.0]]), m2([[-1.0, 0.0], [4.0, -1.0]])],
        vec![m2([[-0.5, 6.0], [0.0, -2.0]]), m2([[-2.0, 0.0], [6.0, -0.5]])],
        vec![m2([[-1.0, 10.0], [0.0, -1.0]]), m2([[-1.0, 0.0], [10.0, -1.0]]), m2([[-3.0, 0.0], [0.0, -3.0]])],
        vec![m2([[-1.0, 0.0], [0.0, -1.0]]), m2([[0.2, 1.0], [0.0, -1.0]])],
    ];
    for (i, v) in infeasible.into_iter().enumerate() {
        let sys = LdiSystem::new(v).map_err(|e| e.to_string())?;
        let pwq = solve_pwq(&sys, &[0.0]).is_ok();
        let quad = solve_quadratic_ldi(&sys).is_ok();
        ensure(!pwq && !quad, || format!("constructed LDI {i}: pwq {pwq}, quadratic {quad}"))?;
    }
    within(Duration::from_secs(60), start, format!("20 random ({feasible} feasible) and 5 infeasible agree"))
}

fn rk4_order() -> Outcome {
    let start = Instant::now();
    let f = PolyMap::linear(&DMatrix::from_element(1, 1, -1.0)).map_err(|e| e.to_string())?;
    let err = |dt: f64| {
        let tr = integrate(&f, &[1.0], &SimOptions { dt, horizon: 1.0, conv_radius: 0.0 });
        (tr.states.last().expect("non-empty")[0] - (-1.0f64).exp()).abs()
    };
    let ratio = err(0.05) / err(0.025);
    ensure((12.0..=20.0).contains(&ratio), || format!("error ratio {ratio:.2}"))?;
    within(Duration::from_secs(5), start, format!("error ratio {ratio:.2} on halving dt"))
}

fn estimate_is_deterministic() -> Outcome {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/sec4_union.json");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("sec4_union.json");
    std::fs::copy(&src, &config).map_err(|e| e.to_string())?;
    let results = dir.path().join("sec4_union.results.json");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let status = Command::new(env!("CARGO_BIN_EXE_roa-forge"))
            .args(["estimate", config.to_str().expect("utf-8 path"), "--seed", "1234"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || format!("estimate exited with {:?}", status.status.code()))?;
        runs.push(std::fs::read(&results).map_err(|e| e.to_string())?);
        std::fs::remove_file(&results).map_err(|e| e.to_string())?;
    }
    ensure(runs[0] == runs[1], || "results files differ".into())?;
    Ok(format!("two runs, {} identical bytes", runs[0].len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("vertex matrices reproduce", vertices_reproduce),
        ("identity-coordinate level", || level_check(&identity_pieces(), &identity_box(), 0.0513, 0.0567)),
        ("shear-coordinate level", || level_check(&shear_pieces(), &shear_box(), 1.463, 1.617)),
        ("published certificates verify", published_certificates_verify),
        ("fresh solves are sound", fresh_solves_are_sound),
        ("union enlarges the estimate", union_enlarges_region),
        ("exact level matches sampling oracle", level_matches_oracle),
        ("zero-lambda reduction", zero_lambda_reduction),
        ("RK4 convergence order", rk4_order),
        ("estimate is deterministic", estimate_is_deterministic),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
