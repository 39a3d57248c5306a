//! Property checks for curvature profiles and their smoothings.
//!
//! Every check is report-only: it evaluates an inequality on the profile
//! grid (or on sampled pairs) and records the worst margin. A negative margin
//! beyond the tolerance marks the report as failed.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry::MetricKind;
use super::profile::CurvatureProfile;
use super::smoothing::SmoothedCurvature;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: String,
    pub passed: bool,
    /// Smallest observed `rhs − lhs` of the checked inequality (tolerance not included).
    pub worst_margin: f64,
    pub evaluated: usize,
    pub detail: String,
}

impl PropertyReport {
    fn new(name: &str) -> Self {
        Self { name: name.into(), passed: true, worst_margin: f64::INFINITY, evaluated: 0, detail: String::new() }
    }

    /// Records one instance of `lhs ≤ rhs + allowed`.
    fn record(&mut self, margin: f64, allowed: f64, at: impl FnOnce() -> String) {
        self.evaluated += 1;
        if margin < self.worst_margin {
            self.worst_margin = margin;
            if margin < -allowed || margin.is_nan() {
                self.detail = at();
            }
        }
        if margin < -allowed || margin.is_nan() {
            self.passed = false;
        }
    }

    fn finish(mut self) -> Self {
        if self.evaluated == 0 {
            self.worst_margin = 0.0;
            self.detail = "vacuous".into();
        }
        self
    }
}

/// `κ(βr) ≥ β²κ(r) − tol` for every grid `r` and listed `β`.
pub fn check_quadratic_growth(profile: &CurvatureProfile, betas: &[f64], tol: f64) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("quadratic-growth");
    for &r in profile.r_grid() {
        let full = profile.kappa_at(r)?;
        for &beta in betas {
            let margin = profile.kappa_at(beta * r)? - beta * beta * full;
            report.record(margin, tol, || format!("beta={beta}, r={r}"));
        }
    }
    Ok(report.finish())
}

/// Growth of the smoothing: `σ̂_q(βr) ≥ β^{q+2}σ̂_q(r)` and, for `q ≥ 1`,
/// `σ̂_q′(βr) ≥ β^{q+1}σ̂_q′(r)`. Allowed slack is `abs_tol + rel_tol·value(r)`.
pub fn check_sigma_growth(sm: &SmoothedCurvature, betas: &[f64], abs_tol: f64, rel_tol: f64) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("sigma-growth");
    let q = sm.q as i32;
    for &r in sm.r_grid() {
        let full = sm.sigma(r)?;
        let full_prime = if sm.q >= 1 { Some(sm.sigma_prime(r)?) } else { None };
        for &beta in betas {
            let margin = sm.sigma(beta * r)? - beta.powi(q + 2) * full;
            report.record(margin, abs_tol + rel_tol * full, || format!("sigma, beta={beta}, r={r}"));
            if let Some(fp) = full_prime {
                let margin = sm.sigma_prime(beta * r)? - beta.powi(q + 1) * fp;
                report.record(margin, abs_tol + rel_tol * fp, || format!("sigma', beta={beta}, r={r}"));
            }
        }
    }
    Ok(report.finish())
}

/// `σ̂_q(r) ≤ rσ̂_q′(r) ≤ (q+2)σ̂_q(r)` on the grid, for `q ≥ 1`.
pub fn check_compatibility(sm: &SmoothedCurvature, abs_tol: f64, rel_tol: f64) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("compatibility");
    if sm.q == 0 {
        return Ok(report.finish());
    }
    let q = sm.q as f64;
    for &r in sm.r_grid() {
        let s = sm.sigma(r)?;
        let rs = r * sm.sigma_prime(r)?;
        let allowed = abs_tol + rel_tol * rs.abs().max(s.abs());
        report.record(rs - s, allowed, || format!("lower, r={r}"));
        report.record((q + 2.0) * s - rs, allowed, || format!("upper, r={r}"));
    }
    Ok(report.finish())
}

/// `σ̂_q(r)/r^{q+2}` and `σ̂_{q+1}′(r)/r^{q+2}` are nonincreasing along the grid.
pub fn check_ratio_monotone(sm: &SmoothedCurvature, slack: f64) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("ratio-monotone");
    let q = sm.q as i32;
    let next = SmoothedCurvature::new(sm.q + 1, sm.base.clone())?;
    let mut prev: Option<(f64, f64, f64)> = None;
    for &r in sm.r_grid() {
        let scale = r.powi(q + 2);
        let a = sm.sigma(r)? / scale;
        let b = next.sigma_prime(r)? / scale;
        if let Some((r0, a0, b0)) = prev {
            report.record(a0 - a, slack * a0.abs().max(1e-300), || format!("sigma ratio, {r0} -> {r}"));
            report.record(b0 - b, slack * b0.abs().max(1e-300), || format!("sigma' ratio, {r0} -> {r}"));
        }
        prev = Some((r, a, b));
    }
    Ok(report.finish())
}

/// `σ̂_q′(r) ≤ σ̂_q′(s) + σ̂_q′(s)/s^{q+1}·r^{q+1} + tol` on random grid pairs, `q ≥ 1`.
pub fn check_two_point(sm: &SmoothedCurvature, n_pairs: usize, seed: u64, tol: f64) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("two-point");
    if sm.q == 0 {
        return Ok(report.finish());
    }
    let grid = sm.r_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = sm.q as i32;
    for _ in 0..n_pairs {
        let r = grid[rng.random_range(0..grid.len())];
        let s = grid[rng.random_range(0..grid.len())];
        let ps = sm.sigma_prime(s)?;
        let rhs = ps + ps / s.powi(q + 1) * r.powi(q + 1);
        report.record(rhs - sm.sigma_prime(r)?, tol, || format!("r={r}, s={s}"));
    }
    Ok(report.finish())
}

/// Discrete second differences of `σ̂_q` on the grid are ≥ `−tol` (q ≥ 1).
pub fn check_convexity(sm: &SmoothedCurvature, tol: f64) -> PropertyReport {
    let mut report = PropertyReport::new("sigma-convex");
    if sm.q == 0 {
        return report.finish();
    }
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(sm.r_grid().iter().copied().zip(sm.sigma_values.iter().copied()));
    for w in pts.windows(3) {
        let (r0, s0) = w[0];
        let (r1, s1) = w[1];
        let (r2, s2) = w[2];
        let slope_a = (s1 - s0) / (r1 - r0);
        let slope_b = (s2 - s1) / (r2 - r1);
        report.record(slope_b - slope_a, tol * slope_b.abs().max(1.0), || format!("around r={r1}"));
    }
    report.finish()
}

/// `κ(r) ≤ envelope(r) + tol` on the grid.
pub fn check_envelope_domination(profile: &CurvatureProfile, envelope: &dyn Fn(f64) -> f64, tol: f64) -> PropertyReport {
    let mut report = PropertyReport::new("envelope-domination");
    for (&r, &k) in profile.r_grid().iter().zip(profile.kappa_values()) {
        report.record(envelope(r) - k, tol, || format!("r={r}, kappa={k}"));
    }
    report.finish()
}

/// `d(γ(s), γ(t)) = |s − t|·d(x, y)` for the log-orthant metric, with
/// endpoint checks.
pub fn check_geodesic_identity(dim: usize, samples: usize, seed: u64, tol: f64) -> PropertyReport {
    let metric = MetricKind::LogOrthant;
    let mut report = PropertyReport::new("log-orthant-geodesic");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x = DVector::from_fn(dim, |_, _| (rng.random_range(-3.0..3.0f64)).exp());
        let y = DVector::from_fn(dim, |_, _| (rng.random_range(-3.0..3.0f64)).exp());
        let d = metric.distance(&x, &y);
        let (s, t): (f64, f64) = (rng.random(), rng.random());
        let gap = metric.distance(&metric.geodesic(&x, &y, s), &metric.geodesic(&x, &y, t)) - (s - t).abs() * d;
        report.record(-gap.abs(), tol * (1.0 + d), || format!("s={s}, t={t}"));
        let ends = metric.distance(&metric.geodesic(&x, &y, 0.0), &x) + metric.distance(&metric.geodesic(&x, &y, 1.0), &y);
        report.record(-ends, tol, || "endpoints".into());
    }
    report.finish()
}

/// Busemann convexity of `t ↦ d(γ(t), η(t))` for pairs of log-orthant
/// geodesics, checked at interior points against the chord.
pub fn check_busemann_convexity(dim: usize, samples: usize, seed: u64, tol: f64) -> PropertyReport {
    let metric = MetricKind::LogOrthant;
    let mut report = PropertyReport::new("log-orthant-busemann");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| DVector::from_fn(dim, |_, _| (rng.random_range(-3.0..3.0f64)).exp());
    for _ in 0..samples {
        let (a, b, c, d) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let start = metric.distance(&a, &c);
        let end = metric.distance(&b, &d);
        for t in [0.25, 0.5, 0.75] {
            let mid = metric.distance(&metric.geodesic(&a, &b, t), &metric.geodesic(&c, &d, t));
            let chord = (1.0 - t) * start + t * end;
            report.record(chord - mid, tol * (1.0 + chord), || format!("t={t}"));
        }
    }
    report.finish()
}
