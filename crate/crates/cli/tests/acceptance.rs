//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! (visible with `--nocapture`) before asserting.

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use urom::benchmarks::{merit_lower_bound, parse_instance, BenchmarkInstance};
use urom::curvature::checks::{check_compatibility, check_quadratic_growth, check_two_point};
use urom::curvature::{
    gcb_estimate, CurvatureProfile, GcbOptions, KappaForm, MetricKind, Provenance, SamplingRegion, SmoothedCurvature,
};
use urom::problem::taylor_model;
use urom::solver::{check_telescoped_guarantee, predicted_iterations, run, PredictionMode, RunResult, SolverConfig};
use urom::step::{
    alpha_from, c_p_constant, check_subproblem_monotone, monotone_threshold, regularization_threshold, solve_step,
    verify_progress, StepParams,
};
use urom_cli::sweep::{run_sweep, Axis};

fn report(id: u32, title: &str, passed: bool, elapsed: Duration, detail: &str) {
    let mark = if passed { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} [{mark}] {title} ({:.2} s): {detail}", elapsed.as_secs_f64());
}

fn solve(spec: &str, p: usize, delta: f64, epsilon: f64) -> (BenchmarkInstance, RunResult) {
    let inst = parse_instance(spec).unwrap();
    let cfg = SolverConfig { p, delta, epsilon, x0: Some(inst.start.clone()), ..Default::default() };
    let res = run(&inst.problem, &cfg).unwrap();
    (inst, res)
}

#[test]
fn criterion_01_gcb_exactness() {
    let start = Instant::now();
    let map = |x: &DVector<f64>| x.map(|v| v * v);
    let grid = CurvatureProfile::uniform_grid(1.0, 20);
    let region = SamplingRegion::boxed(DVector::from_element(1, -2.0), DVector::from_element(1, 2.0));
    let scalar = MetricKind::scalar();
    let opts = GcbOptions { n_pairs: 32, seed: 1, ..Default::default() };
    let profile = gcb_estimate(&map, &scalar, &scalar, &region, &grid, &opts).unwrap();
    let worst = profile
        .r_grid()
        .iter()
        .zip(profile.kappa_values())
        .map(|(&r, &k)| ((k - r * r) / (r * r)).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let passed = profile.r_grid().len() == 20 && worst <= 1e-9 && elapsed < Duration::from_secs(1);
    report(1, "GCB exactness on x^2", passed, elapsed, &format!("max relative error {worst:.2e}"));
    assert!(passed);
}

#[test]
fn criterion_02_quadratic_growth() {
    let start = Instant::now();
    let grid = CurvatureProfile::uniform_grid(1.0, 20);
    let cubic = parse_instance("cubic_field:n=5,set=ball:D=1").unwrap();
    let forms = [
        ("r^2", KappaForm::Power { coef: 1.0, exponent: 2.0 }),
        ("r^1.5", KappaForm::Power { coef: 1.0, exponent: 1.5 }),
        ("cubic kappa_DV", cubic.known.kappa_jacobian.clone().unwrap()),
    ];
    let mut worst = f64::INFINITY;
    for (_, form) in &forms {
        let profile = CurvatureProfile::analytic(form.clone(), grid.clone(), Provenance::ClosedForm).unwrap();
        let rep = check_quadratic_growth(&profile, &[0.25, 0.5, 0.75], 1e-9).unwrap();
        worst = worst.min(rep.worst_margin);
    }
    let elapsed = start.elapsed();
    let passed = worst >= -1e-9 && elapsed < Duration::from_secs(1);
    report(2, "quadratic growth of kappa", passed, elapsed, &format!("worst margin {worst:.2e}"));
    assert!(passed);
}

#[test]
fn criterion_03_smoothing_identities() {
    let start = Instant::now();
    let profile = CurvatureProfile::analytic(
        KappaForm::Power { coef: 1.0, exponent: 2.0 },
        CurvatureProfile::uniform_grid(1.0, 20),
        Provenance::ClosedForm,
    )
    .unwrap();
    let sm = SmoothedCurvature::new(1, profile).unwrap();
    let at_one = sm.sigma(1.0).unwrap();
    let compat = check_compatibility(&sm, 1e-9, 0.0).unwrap();
    let two_point = check_two_point(&sm, 100, 3, 1e-9).unwrap();
    let elapsed = start.elapsed();
    let passed = (at_one - 1.0 / 3.0).abs() <= 1e-8
        && compat.passed
        && two_point.passed
        && two_point.evaluated == 100
        && elapsed < Duration::from_secs(1);
    report(
        3,
        "smoothing identities",
        passed,
        elapsed,
        &format!(
            "sigma_1(1) = {at_one:.12}, compat margin {:.2e}, two-point margin {:.2e}",
            compat.worst_margin, two_point.worst_margin
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_04_taylor_error_bounds() {
    let start = Instant::now();
    let inst = parse_instance("cubic_field:n=5,set=ball:D=1").unwrap();
    let prob = &inst.problem;
    let sigma0 = inst.sigma(1).unwrap();
    let sigma1 = inst.sigma(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst1, mut worst2) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..1000 {
        let x = prob.set.sample(&prob.space, &mut rng).unwrap();
        let y = prob.set.sample(&prob.space, &mut rng).unwrap();
        let r = prob.space.distance(&x, &y);
        let v = prob.oracle.eval(&y);
        let e1 = prob.space.dual_norm(&(&v - taylor_model(prob.oracle.as_ref(), &x, &y, 1).unwrap()));
        let e2 = prob.space.dual_norm(&(&v - taylor_model(prob.oracle.as_ref(), &x, &y, 2).unwrap()));
        worst1 = worst1.min(sigma0.sigma(r).unwrap() - e1);
        worst2 = worst2.min(sigma1.sigma(r).unwrap() - e2);
    }
    let elapsed = start.elapsed();
    let passed = worst1 >= -1e-8 && worst2 >= -1e-8 && elapsed < Duration::from_secs(5);
    report(4, "Taylor error bounds", passed, elapsed, &format!("margins p=1 {worst1:.2e}, p=2 {worst2:.2e}"));
    assert!(passed);
}

#[test]
fn criterion_05_step_soundness() {
    let start = Instant::now();
    let inst = parse_instance("power_potential:n=10,nu=1,set=ball:D=1").unwrap();
    let prob = &inst.problem;
    let delta = 1e-3;
    let m = regularization_threshold(inst.sigma(1).unwrap().as_ref(), 1, delta).unwrap();
    let params = StepParams::new(1, alpha_from(m, delta, 1), m, delta);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut checked, mut violations) = (0, 0);
    for _ in 0..100 {
        let x = prob.set.sample(&prob.space, &mut rng).unwrap();
        let step = solve_step(prob, &x, &params).unwrap();
        let check = verify_progress(prob, &step, &x, m, delta, 1);
        if check.norm_v_psi >= delta {
            checked += 1;
            if check.progress_ok != Some(true) || check.radius_ok != Some(true) {
                violations += 1;
            }
        }
    }
    let c1 = c_p_constant(1);
    let elapsed = start.elapsed();
    let passed = checked > 0 && violations == 0 && (c1 - 0.4856).abs() < 5e-4 && elapsed < Duration::from_secs(30);
    report(
        5,
        "step soundness",
        passed,
        elapsed,
        &format!("M = {m:.6}, c_1 = {c1:.7}, {violations} violations in {checked} steps"),
    );
    assert!(passed);
}

#[test]
fn criterion_06_subproblem_monotonicity() {
    let start = Instant::now();
    let inst = parse_instance("cubic_field:n=5,set=ball:D=1").unwrap();
    let prob = &inst.problem;
    let sigma = inst.sigma(2).unwrap();
    let delta = 1e-3;
    let m = monotone_threshold(sigma.as_ref(), 2, delta).unwrap();
    let x = inst.start.clone();
    let above =
        check_subproblem_monotone(prob, &x, alpha_from(m, delta, 2), m, 2, delta, Some(sigma.as_ref()), 1000, 6, 1e-9)
            .unwrap();
    let small = m * 1e-4;
    let below = check_subproblem_monotone(
        prob,
        &x,
        alpha_from(small, delta, 2),
        small,
        2,
        delta,
        Some(sigma.as_ref()),
        1000,
        6,
        1e-9,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let passed = above.condition_holds == Some(true)
        && above.negative_count == 0
        && above.min_form >= -1e-9
        && below.negative_count > 0
        && elapsed < Duration::from_secs(10);
    report(
        6,
        "subproblem monotonicity",
        passed,
        elapsed,
        &format!(
            "M = {m:.4}: condition {:?}, min form {:.2e}; M/1e4: {} negative forms",
            above.condition, above.min_form, below.negative_count
        ),
    );
    assert!(passed);
}

const RUNS: [(&str, usize, f64, f64); 8] = [
    ("zero:n=3", 1, 1e-6, 0.0),
    ("matrix_game:game=pennies", 1, 0.0, 1e-3),
    ("matrix_game:game=rps", 1, 0.0, 1e-3),
    ("affine:n=4", 1, 1e-6, 0.0),
    ("power_potential:n=10,nu=1,set=ball:D=1", 1, 1e-5, 0.0),
    ("power_potential:n=5,nu=0.5,set=ball:D=1", 1, 0.0, 1e-4),
    ("cubic_field:n=5,set=ball:D=1", 2, 1e-6, 0.0),
    ("holder_mixture:n=4,set=ball:D=1", 1, 0.0, 1e-4),
];

#[test]
fn criterion_07_telescoped_guarantee() {
    let start = Instant::now();
    let mut failures = Vec::new();
    for (spec, p, delta, epsilon) in RUNS {
        let (inst, res) = solve(spec, p, delta, epsilon);
        let x_star = inst.known.x_star.clone().unwrap();
        let tol = 1e-8 * inst.problem.space.distance(&res.x0, &x_star).powi(2);
        let rep = check_telescoped_guarantee(&res.x0, &res.trace, &x_star, &inst.problem.space, tol);
        if !rep.passed {
            failures.push(format!("{spec}: {} > {}", rep.rhs, rep.lhs));
        }
    }
    let elapsed = start.elapsed();
    let passed = failures.is_empty() && elapsed < Duration::from_secs(10);
    report(7, "telescoped guarantee", passed, elapsed, &format!("{} runs, failures {failures:?}", RUNS.len()));
    assert!(passed);
}

#[test]
fn criterion_08_certificate_sandwich() {
    let start = Instant::now();
    let cases = [
        ("matrix_game:game=pennies", 1e-3),
        ("power_potential:n=10,nu=1,set=ball:D=1", 1e-4),
        ("power_potential:n=5,nu=0.5,set=ball:D=1", 1e-4),
    ];
    let mut failures = Vec::new();
    let mut records = 0;
    for (spec, eps) in cases {
        let (inst, res) = solve(spec, 1, 0.0, eps);
        let prob = &inst.problem;
        for rec in &res.trace {
            if let (Some(cert), Some(x_bar)) = (rec.certificate, &rec.x_bar) {
                records += 1;
                let low = merit_lower_bound(prob, x_bar, 500, rec.k as u64).unwrap();
                if cert < low - 1e-9 {
                    failures.push(format!("{spec} k={}: {cert:e} < {low:e}", rec.k));
                }
            }
        }
        let low = merit_lower_bound(prob, res.output_point(), 500, 0).unwrap();
        let fin = res.final_certificate.unwrap();
        if fin < low - 1e-9 || fin > eps {
            failures.push(format!("{spec}: final certificate {fin:e} (merit >= {low:e}, eps {eps:e})"));
        }
    }
    let elapsed = start.elapsed();
    let passed = failures.is_empty() && records > 0 && elapsed < Duration::from_secs(30);
    report(8, "certificate sandwich", passed, elapsed, &format!("{records} certificates, failures {failures:?}"));
    assert!(passed);
}

#[test]
fn criterion_09_rate_exponents() {
    let start = Instant::now();
    let spec = "power_potential:n=10,nu=1,set=ball:D=1";
    let inst = parse_instance(spec).unwrap();
    let values = [1e-1, 1e-2, 1e-3, 1e-4];
    let base = SolverConfig::default();
    let eps = run_sweep(&inst, spec, &base, Axis::Eps, &values, 4).unwrap();
    let delta = run_sweep(&inst, spec, &base, Axis::Delta, &values, 4).unwrap();
    let slope_eps = eps.fit.map_or(f64::NAN, |f| f.slope);
    let slope_delta = delta.fit.map_or(f64::NAN, |f| f.slope);
    let counts = |o: &urom_cli::sweep::SweepOutcome| o.points.iter().map(|p| p.iterations).collect::<Vec<_>>();
    let elapsed = start.elapsed();
    let bounded = eps.within_prediction && delta.within_prediction && !eps.failed() && !delta.failed();
    let passed = (0.47..=0.87).contains(&slope_eps)
        && (0.7..=1.3).contains(&slope_delta)
        && bounded
        && elapsed < Duration::from_secs(300);
    report(
        9,
        "rate exponents",
        passed,
        elapsed,
        &format!(
            "eps slope {slope_eps:.3} (K = {:?}), delta slope {slope_delta:.3} (K = {:?}), within predictions: {bounded}",
            counts(&eps),
            counts(&delta)
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_universality() {
    let start = Instant::now();
    let inst = parse_instance("holder_mixture:n=4,nu1=0.3,nu2=1.0,set=ball:D=1").unwrap();
    let eps = 1e-4;
    let cfg = SolverConfig { p: 1, delta: 0.0, epsilon: eps, x0: Some(inst.start.clone()), ..Default::default() };
    let res = run(&inst.problem, &cfg).unwrap();
    let diameter = inst.problem.diameter().unwrap();
    let predictions: Vec<f64> = [0.3, 1.0]
        .iter()
        .map(|&nu| match inst.single_class_sigma(1, nu) {
            Some(s) => predicted_iterations(&s, 1, eps, res.m0, diameter, PredictionMode::Epsilon).unwrap(),
            // the smoother class does not contain the mixture
            None => f64::INFINITY,
        })
        .collect();
    let best = predictions.iter().copied().fold(f64::INFINITY, f64::min);
    let k = res.iterations();
    let elapsed = start.elapsed();
    let stopped = matches!(res.status, urom::solver::Status::StoppedOnDelta | urom::solver::Status::StoppedOnEpsilon);
    let passed = stopped && (k as f64) <= 4.0 * best && elapsed < Duration::from_secs(300);
    report(
        10,
        "universality on the Hölder mixture",
        passed,
        elapsed,
        &format!("{} after {k} iterations, single-class predictions {predictions:?}", res.status),
    );
    assert!(passed);
}

#[test]
fn criterion_11_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_urom"))
            .args(["solve", "power_potential:n=5,nu=0.5,set=ball:D=1", "--eps", "1e-4", "--seed", "7", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        traces.push(std::fs::read(out.join("trace.csv")).unwrap());
    }
    let elapsed = start.elapsed();
    let passed = traces[0] == traces[1] && !traces[0].is_empty() && elapsed < Duration::from_secs(5);
    report(11, "deterministic traces", passed, elapsed, &format!("{} bytes per trace", traces[0].len()));
    assert!(passed);
}
