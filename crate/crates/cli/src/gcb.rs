use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use urom::benchmarks::{parse_spec, BenchmarkInstance};
use urom::curvature::checks::{
    check_busemann_convexity, check_compatibility, check_envelope_domination, check_geodesic_identity,
    check_quadratic_growth, check_sigma_growth, check_two_point, PropertyReport,
};
use urom::curvature::{gcb_estimate, CurvatureProfile, GcbOptions, MetricKind, SamplingRegion, SmoothedCurvature};
use urom::solver::format_float;
use urom::EuclideanSpace;

use crate::{timestamp, write_file, write_json, ProblemArgs, Usage, EXIT_INNER_FAILURE, EXIT_OK};

const GROWTH_BETAS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, Args)]
pub struct GcbArgs {
    /// Instance spec; `log_orthant:n=3` profiles the logarithm map on the log-metric orthant.
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Smoothing orders to tabulate.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pub q: Vec<usize>,
    /// Number of grid radii.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    /// Sampled pairs per radius.
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    /// Largest radius; defaults to half the diameter of the feasible set.
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct GcbSettings {
    pub q: Vec<usize>,
    pub points: usize,
    pub pairs: usize,
    pub r_max: Option<f64>,
    pub seed: u64,
}

impl Default for GcbSettings {
    fn default() -> Self {
        Self { q: vec![0, 1], points: 20, pairs: 200, r_max: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GcbOutcome {
    pub name: String,
    pub profile: CurvatureProfile,
    pub smoothings: Vec<SmoothedCurvature>,
    pub reports: Vec<PropertyReport>,
    /// The profile vanishes up to rounding.
    pub zero: bool,
}

impl GcbOutcome {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }

    pub fn report(&self, name: &str) -> Option<&PropertyReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    pub fn profile_csv(&self) -> String {
        let mut out = String::from("r,kappa\n");
        for (&r, &k) in self.profile.r_grid().iter().zip(self.profile.kappa_values()) {
            out.push_str(&format!("{},{}\n", format_float(Some(r)), format_float(Some(k))));
        }
        out
    }

    pub fn sigma_csv(sm: &SmoothedCurvature) -> String {
        let mut out = String::from("r,sigma,sigma_prime\n");
        for (i, &r) in sm.r_grid().iter().enumerate() {
            let prime = sm.sigma_prime_values.as_ref().map(|v| v[i]);
            out.push_str(&format!(
                "{},{},{}\n",
                format_float(Some(r)),
                format_float(Some(sm.sigma_values[i])),
                format_float(prime)
            ));
        }
        out
    }
}

/// Growth and smoothing checks shared by every profile. `zero_floor` is the
/// level below which sampled curvature is rounding noise.
fn profile_checks(
    profile: &CurvatureProfile,
    q: &[usize],
    seed: u64,
    zero_floor: f64,
) -> Result<(Vec<SmoothedCurvature>, Vec<PropertyReport>, bool)> {
    let scale = profile.kappa_values().iter().fold(0.0f64, |a, &b| a.max(b));
    let zero = scale <= zero_floor;
    // sampled profiles are lower estimates; allow 0.1% sampling error
    let tol = if profile.sample_meta().is_some() { 1e-3 * scale } else { 0.0 } + 1e-9 * (1.0 + scale);
    let mut growth = check_quadratic_growth(profile, &GROWTH_BETAS, tol)?;
    if zero {
        growth.detail = format!("vacuous: profile is zero up to {zero_floor:.1e}");
    }
    let mut reports = vec![growth];
    let mut smoothings = Vec::new();
    for &order in q {
        let sm = SmoothedCurvature::new(order, profile.clone())?;
        for mut rep in [
            check_sigma_growth(&sm, &GROWTH_BETAS, 1e-12 + tol, 1e-8)?,
            check_compatibility(&sm, 1e-12, 1e-8)?,
            check_two_point(&sm, 100, seed, 1e-9)?,
        ] {
            rep.name = format!("q{order}/{}", rep.name);
            reports.push(rep);
        }
        smoothings.push(sm);
    }
    Ok((smoothings, reports, zero))
}

/// Sampled `κ_V` on the instance's feasible set, measured primal to dual.
pub fn profile_instance(inst: &BenchmarkInstance, settings: &GcbSettings) -> Result<GcbOutcome> {
    let prob = &inst.problem;
    let diameter = prob.diameter().ok_or(urom::Error::EmptySamplingRegion)?;
    let r_max = settings.r_max.unwrap_or(0.5 * diameter);
    if !(r_max > 0.0) || settings.points == 0 {
        return Err(Usage("the radius grid must be non-empty with a positive r_max".into()).into());
    }
    let grid = CurvatureProfile::uniform_grid(r_max, settings.points);
    let region = SamplingRegion::in_set(prob.set.clone(), prob.space.clone());
    let oracle = prob.oracle.clone();
    let map = move |x: &DVector<f64>| oracle.eval(x);
    let opts = GcbOptions { n_pairs: settings.pairs, seed: settings.seed, ..Default::default() };
    let profile =
        gcb_estimate(&map, &MetricKind::primal(&prob.space), &MetricKind::dual(&prob.space), &region, &grid, &opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut v_scale: f64 = 1.0;
    for _ in 0..64 {
        v_scale = v_scale.max(prob.space.dual_norm(&prob.oracle.eval(&prob.set.sample(&prob.space, &mut rng)?)));
    }
    let (smoothings, mut reports, zero) = profile_checks(&profile, &settings.q, settings.seed, 1e-10 * v_scale)?;
    if let Some(form) = &inst.known.kappa {
        let envelope = |r: f64| form.eval(r) * (1.0 + 1e-9);
        reports.push(check_envelope_domination(&profile, &envelope, 1e-12));
    }
    Ok(GcbOutcome { name: inst.name.clone(), profile, smoothings, reports, zero })
}

/// The logarithm map of the log-metric orthant into Euclidean space. It is
/// affine along geodesics, so its profile vanishes.
pub fn profile_log_orthant(n: usize, settings: &GcbSettings) -> Result<GcbOutcome> {
    if n == 0 {
        return Err(Usage("log_orthant needs n >= 1".into()).into());
    }
    let r_max = settings.r_max.unwrap_or(1.0);
    let grid = CurvatureProfile::uniform_grid(r_max, settings.points.max(1));
    let region = SamplingRegion::boxed(DVector::from_element(n, 0.1), DVector::from_element(n, 10.0));
    let codomain = MetricKind::primal(&EuclideanSpace::identity(n)?);
    let map = |x: &DVector<f64>| x.map(f64::ln);
    let opts = GcbOptions { n_pairs: settings.pairs, seed: settings.seed, ..Default::default() };
    let profile = gcb_estimate(&map, &MetricKind::LogOrthant, &codomain, &region, &grid, &opts)?;
    let (smoothings, mut reports, zero) = profile_checks(&profile, &settings.q, settings.seed, 1e-9)?;
    reports.push(check_envelope_domination(&profile, &|_| 0.0, 1e-9));
    reports.push(check_geodesic_identity(n, 200, settings.seed, 1e-10));
    reports.push(check_busemann_convexity(n, 200, settings.seed, 1e-10));
    Ok(GcbOutcome { name: format!("log_orthant(n={n})"), profile, smoothings, reports, zero })
}

/// Dispatches on the spec: `log_orthant` is handled here, everything else by the benchmarks.
pub fn profile_problem(problem: &ProblemArgs, settings: &GcbSettings) -> Result<GcbOutcome> {
    if let Some(spec) = problem.instance.as_deref().filter(|s| s.trim_start().starts_with("log_orthant")) {
        let parsed = parse_spec(spec).map_err(|e| Usage(e.to_string()))?;
        if parsed.name != "log_orthant" || parsed.set.is_some() {
            return Err(Usage(format!("malformed log_orthant spec {spec:?}")).into());
        }
        parsed.params.check_keys(&["n"]).map_err(|e| Usage(e.to_string()))?;
        let n = parsed.params.usize_or("n", 3).map_err(|e| Usage(e.to_string()))?;
        return profile_log_orthant(n, settings);
    }
    profile_instance(&problem.load()?, settings)
}

pub fn execute(args: &GcbArgs) -> Result<i32> {
    let settings =
        GcbSettings { q: args.q.clone(), points: args.points, pairs: args.pairs, r_max: args.r_max, seed: args.seed };
    let outcome = match profile_problem(&args.problem, &settings) {
        Ok(outcome) => outcome,
        Err(err) if matches!(err.downcast_ref::<urom::Error>(), Some(urom::Error::EmptySamplingRegion)) => {
            eprintln!("error: sampling failed: {err}");
            return Ok(EXIT_INNER_FAILURE);
        }
        Err(err) => return Err(err),
    };
    write_file(&args.out, "kappa_profile.csv", &outcome.profile_csv())?;
    for sm in &outcome.smoothings {
        write_file(&args.out, &format!("sigma_q{}.csv", sm.q), &GcbOutcome::sigma_csv(sm))?;
    }
    let checks: Vec<_> = outcome
        .reports
        .iter()
        .map(|r| {
            json!({
                "name": r.name,
                "passed": r.passed,
                "worst_margin": r.worst_margin,
                "evaluated": r.evaluated,
                "detail": r.detail,
            })
        })
        .collect();
    let meta = outcome.profile.sample_meta();
    let summary = json!({
        "command": "gcb",
        "instance": outcome.name,
        "pairs": args.pairs,
        "seed": args.seed,
        "r_max": outcome.profile.r_max(),
        "skipped_pairs": meta.map(|m| m.skipped.clone()),
        "zero_profile": outcome.zero,
        "checks": checks,
        "created_unix": timestamp(),
    });
    write_json(&args.out, "report.json", &summary)?;
    for r in &outcome.reports {
        if args.verbose || !r.passed {
            println!("{:<28} {:<4} margin={:.3e} {}", r.name, if r.passed { "ok" } else { "FAIL" }, r.worst_margin, r.detail);
        }
    }
    let failed = outcome.reports.iter().filter(|r| !r.passed).count();
    println!("{}: {} checks, {} failed", outcome.name, outcome.reports.len(), failed);
    Ok(EXIT_OK)
}
