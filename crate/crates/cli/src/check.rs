use anyhow::Result;
use clap::Args;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use urom::benchmarks::{merit_lower_bound, parse_instance, weak_solution_margin, BenchmarkInstance};
use urom::curvature::checks::{
    check_busemann_convexity, check_compatibility, check_envelope_domination, check_geodesic_identity,
    check_quadratic_growth, check_two_point,
};
use urom::curvature::{
    gcb_estimate, CurvatureProfile, GcbOptions, KappaForm, MetricKind, Provenance, SamplingRegion,
    SmoothedCurvature,
};
use urom::oracle::finite_difference_error;
use urom::solver::{check_telescoped_guarantee, run, trace_csv, SolverConfig};
use urom::step::{
    alpha_from, check_subproblem_monotone, monotone_threshold, regularization_threshold, solve_step,
    verify_progress, StepParams,
};
use urom::{EuclideanSpace, FeasibleSet};

use crate::{EXIT_CHECK_FAILED, EXIT_OK};

#[derive(Debug, Clone, Default, Args)]
pub struct CheckArgs {
    /// Run only the checks whose name contains this string.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturb the affine benchmark so its curvature profile is nonzero.
    #[arg(long, hide = true)]
    pub inject_affine_nonzero_kappa: bool,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

struct Ctx {
    seed: u64,
    inject: bool,
}

type CheckFn = fn(&Ctx) -> Result<(bool, String)>;

const BENCHMARKS: [&str; 7] = [
    "zero:n=3",
    "affine:n=4",
    "matrix_game:game=pennies",
    "matrix_game:game=random,n=3,m=4,seed=11",
    "power_potential:n=6,nu=0.5,set=ball:D=2",
    "cubic_field:n=5,set=ball:D=1",
    "holder_mixture:n=4,set=ball:D=1",
];

const CHECKS: [(&str, CheckFn); 16] = [
    ("space/norm-duality", norm_duality),
    ("space/projection", projections),
    ("oracle/finite-difference", finite_differences),
    ("oracle/monotone-pairs", monotone_pairs),
    ("benchmarks/weak-solution", weak_solutions),
    ("benchmarks/holder-constants", holder_constants),
    ("gcb/affine-kappa-zero", affine_kappa_zero),
    ("gcb/quadratic-exact", quadratic_exact),
    ("gcb/quadratic-growth", quadratic_growth),
    ("gcb/smoothing", smoothing_identities),
    ("gcb/analytic-dominance", analytic_dominance),
    ("gcb/log-orthant", log_orthant),
    ("step/progress", step_progress),
    ("step/subproblem-monotone", subproblem_monotone),
    ("solver/telescoped-and-sandwich", telescoped_and_sandwich),
    ("solver/determinism", determinism),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

pub fn run_checks(args: &CheckArgs) -> Vec<CheckResult> {
    let ctx = Ctx { seed: args.seed, inject: args.inject_affine_nonzero_kappa };
    CHECKS
        .iter()
        .filter(|(name, _)| args.filter.as_deref().is_none_or(|f| name.contains(f)))
        .map(|&(name, check)| match check(&ctx) {
            Ok((passed, detail)) => CheckResult { name, passed, detail },
            Err(err) => CheckResult { name, passed: false, detail: format!("error: {err:#}") },
        })
        .collect()
}

pub fn execute(args: &CheckArgs) -> Result<i32> {
    let results = run_checks(args);
    for r in &results {
        let mark = if r.passed { "pass" } else { "FAIL" };
        if args.verbose || !r.passed {
            println!("{mark}  {:<34} {}", r.name, r.detail);
        } else {
            println!("{mark}  {}", r.name);
        }
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {} failed", results.len(), failed);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn instances() -> Result<Vec<BenchmarkInstance>> {
    BENCHMARKS.iter().map(|s| parse_instance(s).map_err(Into::into)).collect()
}

fn verdict(worst: f64, allowed: f64, what: &str) -> (bool, String) {
    (worst >= -allowed, format!("worst {what} margin {worst:.3e}"))
}

fn norm_duality(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let w = DVector::from_fn(4, |_, _| rand::Rng::random_range(&mut rng, 0.1..5.0));
        let space = EuclideanSpace::diagonal(w)?;
        let x = space.random_unit(&mut rng);
        let s = space.random_unit(&mut rng);
        worst = worst.min(space.norm(&x) * space.dual_norm(&s) - s.dot(&x).abs());
        worst = worst.min(-(space.dual_norm(&space.apply(&x)) - space.norm(&x)).abs());
    }
    Ok(verdict(worst, 1e-12, "duality"))
}

fn projections(ctx: &Ctx) -> Result<(bool, String)> {
    let space = EuclideanSpace::diagonal(DVector::from_vec(vec![1.0, 2.0, 0.5]))?;
    let sets = [
        FeasibleSet::ball(DVector::from_vec(vec![0.2, -0.1, 0.0]), 0.7)?,
        FeasibleSet::boxed(DVector::from_element(3, -0.5), DVector::from_element(3, 0.25))?,
        FeasibleSet::simplex(3)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut worst = f64::INFINITY;
    for set in &sets {
        for _ in 0..300 {
            let y = FeasibleSet::gaussian(3, 2.0, &mut rng);
            let p = set.project(&space, &y)?;
            if !set.contains(&space, &p, 1e-10) {
                return Ok((false, format!("projection left {}", set.short_name())));
            }
            worst = worst.min(-(set.project(&space, &p)? - &p).norm());
            let q = set.sample(&space, &mut rng)?;
            worst = worst.min(-space.apply(&(&y - &p)).dot(&(&q - &p)));
        }
    }
    Ok(verdict(worst, 1e-9, "projection"))
}

fn finite_differences(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut worst: f64 = 0.0;
    for inst in instances()? {
        let (space, set) = (&inst.problem.space, &inst.problem.set);
        for _ in 0..50 {
            let x = set.sample(space, &mut rng)?;
            let h = space.random_unit(&mut rng);
            worst = worst.max(finite_difference_error(inst.problem.oracle.as_ref(), space, &x, &h));
        }
    }
    Ok((worst <= 1e-5, format!("largest relative error {worst:.3e}")))
}

fn monotone_pairs(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut worst = f64::INFINITY;
    for inst in instances()? {
        let prob = &inst.problem;
        for _ in 0..10_000 {
            let x = prob.set.sample(&prob.space, &mut rng)?;
            let y = prob.set.sample(&prob.space, &mut rng)?;
            worst = worst.min((prob.oracle.eval(&y) - prob.oracle.eval(&x)).dot(&(&y - &x)));
        }
    }
    Ok(verdict(worst, 1e-10, "monotonicity"))
}

fn weak_solutions(ctx: &Ctx) -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    for inst in instances()? {
        let Some(x_star) = &inst.known.x_star else { continue };
        worst = worst.min(weak_solution_margin(&inst.problem, x_star, 1000, ctx.seed)?);
    }
    Ok(verdict(worst, 1e-8, "weak-solution"))
}

fn holder_constants(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut worst = f64::INFINITY;
    for inst in instances()? {
        let prob = &inst.problem;
        let (space, set) = (&prob.space, &prob.set);
        for p in [1usize, 2] {
            let terms: Vec<(f64, f64)> =
                inst.known.holder.iter().filter(|t| t.0 == p).map(|&(_, nu, h)| (nu, h)).collect();
            if terms.is_empty() {
                continue;
            }
            for _ in 0..10_000 {
                let x = set.sample(space, &mut rng)?;
                let y = set.sample(space, &mut rng)?;
                let h = space.random_unit(&mut rng);
                let gap = if p == 1 {
                    prob.oracle.jvp(&x, &h) - prob.oracle.jvp(&y, &h)
                } else {
                    let g = space.random_unit(&mut rng);
                    let second = |z: &DVector<f64>| prob.oracle.d2vp(z, &h, &g).expect("order-2 Hölder data implies d2vp");
                    second(&x) - second(&y)
                };
                let dist = space.distance(&x, &y);
                let bound: f64 = terms.iter().map(|&(nu, c)| c * dist.powf(nu)).sum();
                worst = worst.min(bound - space.dual_norm(&gap));
            }
        }
    }
    Ok(verdict(worst, 1e-9, "Hölder"))
}

fn affine_kappa_zero(ctx: &Ctx) -> Result<(bool, String)> {
    let inst = parse_instance("affine:n=4")?;
    let prob = &inst.problem;
    let oracle = prob.oracle.clone();
    let bump = if ctx.inject { 1e-2 } else { 0.0 };
    let map = move |x: &DVector<f64>| {
        let mut v = oracle.eval(x);
        v[0] += bump * x.norm_squared();
        v
    };
    let diameter = prob.diameter().unwrap_or(1.0);
    let grid = CurvatureProfile::uniform_grid(0.5 * diameter, 10);
    let region = SamplingRegion::in_set(prob.set.clone(), prob.space.clone());
    let opts = GcbOptions { n_pairs: 64, seed: ctx.seed, ..Default::default() };
    let profile =
        gcb_estimate(&map, &MetricKind::primal(&prob.space), &MetricKind::dual(&prob.space), &region, &grid, &opts)?;
    let largest = profile.kappa_values().iter().fold(0.0f64, |a, &b| a.max(b));
    Ok((largest <= 1e-10, format!("largest kappa {largest:.3e}")))
}

fn quadratic_exact(ctx: &Ctx) -> Result<(bool, String)> {
    let map = |x: &DVector<f64>| x.map(|v| v * v);
    let grid = CurvatureProfile::uniform_grid(1.0, 20);
    let region = SamplingRegion::boxed(DVector::from_element(1, -2.0), DVector::from_element(1, 2.0));
    let opts = GcbOptions { n_pairs: 16, seed: ctx.seed, ..Default::default() };
    let scalar = MetricKind::scalar();
    let profile = gcb_estimate(&map, &scalar, &scalar, &region, &grid, &opts)?;
    let worst = profile
        .r_grid()
        .iter()
        .zip(profile.kappa_values())
        .map(|(&r, &k)| ((k - r * r) / (r * r)).abs())
        .fold(0.0, f64::max);
    Ok((worst <= 1e-9, format!("largest relative error {worst:.3e}")))
}

fn quadratic_growth(_: &Ctx) -> Result<(bool, String)> {
    let grid = CurvatureProfile::uniform_grid(1.0, 20);
    let mut worst = f64::INFINITY;
    for (coef, exponent) in [(1.0, 2.0), (1.0, 1.5), (3.0, 2.0)] {
        let profile =
            CurvatureProfile::analytic(KappaForm::Power { coef, exponent }, grid.clone(), Provenance::ClosedForm)?;
        worst = worst.min(check_quadratic_growth(&profile, &[0.25, 0.5, 0.75], 1e-9)?.worst_margin);
    }
    Ok(verdict(worst, 1e-9, "growth"))
}

fn smoothing_identities(ctx: &Ctx) -> Result<(bool, String)> {
    let profile = CurvatureProfile::analytic(
        KappaForm::Power { coef: 1.0, exponent: 2.0 },
        CurvatureProfile::uniform_grid(1.0, 20),
        Provenance::ClosedForm,
    )?;
    let sm = SmoothedCurvature::new(1, profile)?;
    let at_one = sm.sigma(1.0)?;
    let compat = check_compatibility(&sm, 1e-12, 1e-8)?;
    let two_point = check_two_point(&sm, 100, ctx.seed, 1e-12)?;
    let passed = (at_one - 1.0 / 3.0).abs() <= 1e-8 && compat.passed && two_point.passed;
    Ok((passed, format!("sigma_1(1) = {at_one:.12}, compat {}, two-point {}", compat.passed, two_point.passed)))
}

fn analytic_dominance(ctx: &Ctx) -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    for inst in instances()? {
        let Some(form) = inst.known.kappa.clone() else { continue };
        let prob = &inst.problem;
        let diameter = prob.diameter().unwrap_or(1.0);
        let grid = CurvatureProfile::uniform_grid(0.5 * diameter, 8);
        let region = SamplingRegion::in_set(prob.set.clone(), prob.space.clone());
        let oracle = prob.oracle.clone();
        let map = move |x: &DVector<f64>| oracle.eval(x);
        let opts = GcbOptions { n_pairs: 64, seed: ctx.seed, ..Default::default() };
        let profile =
            gcb_estimate(&map, &MetricKind::primal(&prob.space), &MetricKind::dual(&prob.space), &region, &grid, &opts)?;
        let rep = check_envelope_domination(&profile, &|r| form.eval(r) * (1.0 + 1e-9), 1e-12);
        worst = worst.min(rep.worst_margin);
    }
    Ok(verdict(worst, 1e-12, "envelope"))
}

fn log_orthant(ctx: &Ctx) -> Result<(bool, String)> {
    let geo = check_geodesic_identity(4, 200, ctx.seed, 1e-10);
    let bus = check_busemann_convexity(4, 200, ctx.seed, 1e-10);
    Ok((geo.passed && bus.passed, format!("geodesic {}, busemann {}", geo.passed, bus.passed)))
}

fn step_progress(ctx: &Ctx) -> Result<(bool, String)> {
    let inst = parse_instance("power_potential:n=10,nu=1,set=ball:D=1")?;
    let prob = &inst.problem;
    let sigma = inst.sigma(1).expect("power potential stores its Hölder data");
    let delta = 1e-3;
    let m = regularization_threshold(sigma.as_ref(), 1, delta)?;
    let params = StepParams::new(1, alpha_from(m, delta, 1), m, delta);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let (mut checked, mut bad) = (0, 0);
    for _ in 0..30 {
        let x = prob.set.sample(&prob.space, &mut rng)?;
        let step = solve_step(prob, &x, &params)?;
        let check = verify_progress(prob, &step, &x, m, delta, 1);
        if check.norm_v_psi >= delta {
            checked += 1;
            if check.progress_ok != Some(true) || check.radius_ok != Some(true) {
                bad += 1;
            }
        }
    }
    Ok((bad == 0, format!("{bad} of {checked} steps violate the progress bound (M = {m:.4})")))
}

fn subproblem_monotone(ctx: &Ctx) -> Result<(bool, String)> {
    let inst = parse_instance("cubic_field:n=3,set=ball:D=1")?;
    let prob = &inst.problem;
    let sigma = inst.sigma(2).expect("cubic field stores its Hölder data");
    let delta = 1e-3;
    let m = monotone_threshold(sigma.as_ref(), 2, delta)?;
    let x = inst.start.clone();
    let big = check_subproblem_monotone(prob, &x, alpha_from(m, delta, 2), m, 2, delta, Some(sigma.as_ref()), 500, ctx.seed, 1e-9)?;
    let small_m = m * 1e-4;
    let small = check_subproblem_monotone(
        prob,
        &x,
        alpha_from(small_m, delta, 2),
        small_m,
        2,
        delta,
        Some(sigma.as_ref()),
        500,
        ctx.seed,
        1e-9,
    )?;
    let passed = big.negative_count == 0 && small.negative_count > 0;
    Ok((passed, format!("above threshold: {}; below: {}", big.message, small.message)))
}

const SOLVER_CASES: [(&str, usize, f64, f64); 3] = [
    ("matrix_game:game=pennies", 1, 0.0, 1e-3),
    ("power_potential:n=5,nu=0.5,set=ball:D=1", 1, 0.0, 1e-3),
    ("cubic_field:n=3,set=ball:D=1", 2, 1e-5, 0.0),
];

fn solve_case(spec: &str, p: usize, delta: f64, epsilon: f64) -> Result<(BenchmarkInstance, urom::solver::RunResult)> {
    let inst = parse_instance(spec)?;
    let cfg = SolverConfig { p, delta, epsilon, x0: Some(inst.start.clone()), ..Default::default() };
    let res = run(&inst.problem, &cfg)?;
    Ok((inst, res))
}

fn telescoped_and_sandwich(_: &Ctx) -> Result<(bool, String)> {
    for (spec, p, delta, epsilon) in SOLVER_CASES {
        let (inst, res) = solve_case(spec, p, delta, epsilon)?;
        let prob = &inst.problem;
        let x_star = inst.known.x_star.as_ref().expect("benchmark solution");
        let tol = 1e-8 * prob.space.distance(&res.x0, x_star).powi(2);
        let rep = check_telescoped_guarantee(&res.x0, &res.trace, x_star, &prob.space, tol);
        if !rep.passed {
            return Ok((false, format!("{spec}: telescoped sum {} exceeds {}", rep.rhs, rep.lhs)));
        }
        let slack = 1e-8 * prob.diameter().unwrap_or(1.0) + 1e-9;
        for rec in &res.trace {
            if let (Some(cert), Some(x_bar)) = (rec.certificate, &rec.x_bar) {
                let low = merit_lower_bound(prob, x_bar, 200, rec.k as u64)?;
                if cert < low - slack {
                    return Ok((false, format!("{spec} k={}: certificate {cert:e} below merit {low:e}", rec.k)));
                }
            }
        }
    }
    Ok((true, format!("{} runs", SOLVER_CASES.len())))
}

fn determinism(_: &Ctx) -> Result<(bool, String)> {
    let (spec, p, delta, epsilon) = SOLVER_CASES[1];
    let (_, a) = solve_case(spec, p, delta, epsilon)?;
    let (_, b) = solve_case(spec, p, delta, epsilon)?;
    Ok((trace_csv(&a.trace) == trace_csv(&b.trace), format!("{} iterations", a.iterations())))
}
