//! The universal reduced-operator method.
//!
//! Each iteration runs an `M` line search on the regularized step from the
//! dual point `v_k`, then either stops (small reduced operator) or takes a
//! projection step on `v` and updates the accuracy certificate.

use std::fmt;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::curvature::SigmaFunction;
use crate::error::{check_dim, Error, Result};
use crate::problem::CompositeVI;
use crate::set::FeasibleSet;
use crate::space::EuclideanSpace;
use crate::step::{alpha_from, c_p_constant, default_tol_inner, solve_step, verify_progress, StepParams, StepResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub p: usize,
    /// Target for `‖V_ψ‖_*`; zero disables the test unless `epsilon` is also zero.
    pub delta: f64,
    /// Target for the accuracy certificate; zero disables it.
    pub epsilon: f64,
    /// Initial regularization; `None` uses [`default_m0`].
    pub m0: Option<f64>,
    pub max_outer_iters: usize,
    pub max_doublings: usize,
    pub m_min: f64,
    pub seed: u64,
    /// Start point; `None` projects the origin onto `Q`.
    #[serde(skip)]
    pub x0: Option<DVector<f64>>,
    /// `None` uses `min(δ/100, 1e-8)`.
    pub tol_inner: Option<f64>,
    pub max_inner_iters: usize,
    /// Record wall time per iteration. Off by default so traces are reproducible.
    pub timing: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p: 1,
            delta: 1e-4,
            epsilon: 0.0,
            m0: None,
            max_outer_iters: 10_000,
            max_doublings: 60,
            m_min: 1e-300,
            seed: 0,
            x0: None,
            tol_inner: None,
            max_inner_iters: 200_000,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    StoppedOnDelta,
    StoppedOnEpsilon,
    MaxIters,
    InnerFailure,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StoppedOnDelta => "stopped-on-delta",
            Self::StoppedOnEpsilon => "stopped-on-epsilon",
            Self::MaxIters => "max-iters",
            Self::InnerFailure => "inner-failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Index of the point `x_k` produced by this iteration (starts at 1).
    pub k: usize,
    pub m_before: f64,
    pub doublings: usize,
    pub m_plus: f64,
    pub alpha: f64,
    pub r: f64,
    pub norm_v_psi: f64,
    pub a: Option<f64>,
    pub a_sum: Option<f64>,
    pub certificate: Option<f64>,
    pub progress_lhs: f64,
    pub progress_rhs: Option<f64>,
    pub time_ms: f64,
    pub x: DVector<f64>,
    pub v_psi: DVector<f64>,
    /// `v_k` after the projection step, when one was taken.
    pub v_next: Option<DVector<f64>>,
    /// Weighted average `x̄_k`, when the certificate was updated.
    pub x_bar: Option<DVector<f64>>,
    pub inner_iters: usize,
}

impl IterationRecord {
    pub fn progress_margin(&self) -> Option<f64> {
        self.progress_rhs.map(|rhs| self.progress_lhs - rhs)
    }
}

/// Running sums `s = Σaᵢ V_ψ(xᵢ)`, `c = Σaᵢ⟨V_ψ(xᵢ), xᵢ⟩`, `A = Σaᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub s: DVector<f64>,
    pub c: f64,
    pub a_sum: f64,
    weighted_x: DVector<f64>,
}

impl Certificate {
    pub fn new(n: usize) -> Self {
        Self { s: DVector::zeros(n), c: 0.0, a_sum: 0.0, weighted_x: DVector::zeros(n) }
    }

    /// Adds one term and returns `Δ = (c − ⟨s, lmo(s)⟩)/A`.
    pub fn update(
        &mut self,
        a: f64,
        x: &DVector<f64>,
        v_psi: &DVector<f64>,
        set: &FeasibleSet,
        space: &EuclideanSpace,
    ) -> Result<f64> {
        if !(self.a_sum + a > 0.0) {
            return Err(Error::InvalidParameter("certificate weights must have positive sum".into()));
        }
        self.s += v_psi * a;
        self.c += a * v_psi.dot(x);
        self.a_sum += a;
        self.weighted_x += x * a;
        self.value(set, space)
    }

    pub fn value(&self, set: &FeasibleSet, space: &EuclideanSpace) -> Result<f64> {
        let vertex = set.lmo(space, &self.s)?;
        Ok((self.c - self.s.dot(&vertex)) / self.a_sum)
    }

    pub fn average(&self) -> Option<DVector<f64>> {
        (self.a_sum > 0.0).then(|| &self.weighted_x / self.a_sum)
    }
}

/// `max_{z∈Q} ⟨V_ψ(x), x − z⟩`, which bounds the merit at `x` alone.
pub fn point_certificate(x: &DVector<f64>, v_psi: &DVector<f64>, set: &FeasibleSet, space: &EuclideanSpace) -> Result<f64> {
    Ok(v_psi.dot(x) - v_psi.dot(&set.lmo(space, v_psi)?))
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub status: Status,
    pub x0: DVector<f64>,
    pub x_last: DVector<f64>,
    pub v_last: DVector<f64>,
    pub x_bar: Option<DVector<f64>>,
    /// Certificate of the returned point: `Δ_K` for `x̄` after an ε-stop or
    /// a cap, the single-point bound at `x_last` after a δ-stop.
    pub final_certificate: Option<f64>,
    pub final_norm_v_psi: Option<f64>,
    pub trace: Vec<IterationRecord>,
    pub accumulators: Certificate,
    pub delta_eff: f64,
    pub m0: f64,
    pub failure: Option<String>,
}

impl RunResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn max_m_plus(&self) -> f64 {
        self.trace.iter().map(|r| r.m_plus).fold(0.0, f64::max)
    }

    /// The point the certificate refers to.
    pub fn output_point(&self) -> &DVector<f64> {
        match (self.status, &self.x_bar) {
            (Status::StoppedOnDelta, _) | (_, None) => &self.x_last,
            (_, Some(avg)) => avg,
        }
    }
}

/// `(2ε/5)(1/c_p)^{p+1} D^p`; in δ-only mode `ε` is taken as `δD`.
pub fn default_m0(problem: &CompositeVI, config: &SolverConfig) -> Result<f64> {
    let diameter = problem.diameter().ok_or(Error::UnboundedSet("default M0 needs a finite diameter"))?;
    let eps = if config.epsilon > 0.0 { config.epsilon } else { config.delta * diameter };
    let p = config.p as i32;
    Ok(0.4 * eps * (1.0 / c_p_constant(config.p)).powi(p + 1) * diameter.powi(p))
}

/// Effective `δ` used for `α` and for the small-operator test: `δ` when
/// positive, otherwise `ε/D`.
pub fn effective_delta(problem: &CompositeVI, config: &SolverConfig) -> Result<f64> {
    if config.delta > 0.0 {
        return Ok(config.delta);
    }
    if config.epsilon > 0.0 {
        let diameter = problem.diameter().ok_or(Error::UnboundedSet("accuracy certificate needs a bounded set"))?;
        if diameter > 0.0 {
            return Ok(config.epsilon / diameter);
        }
        return Ok(config.epsilon);
    }
    Err(Error::InvalidParameter("at least one of delta and epsilon must be positive".into()))
}

pub fn dual_step(
    set: &FeasibleSet,
    space: &EuclideanSpace,
    v: &DVector<f64>,
    a: f64,
    v_psi: &DVector<f64>,
) -> Result<DVector<f64>> {
    set.project(space, &(v - space.solve(v_psi) * a))
}

/// Accepted step of one line search.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub m_plus: f64,
    pub alpha: f64,
    pub doublings: usize,
    pub step: StepResult,
    pub progress_lhs: f64,
    pub progress_rhs: Option<f64>,
    pub small: bool,
}

/// Doubles `M` from `m_k` until the step from `v` shows progress or has a
/// small reduced operator. Inner-solver failures count as "M too small".
pub fn line_search_m(
    problem: &CompositeVI,
    v: &DVector<f64>,
    m_k: f64,
    delta: f64,
    config: &SolverConfig,
) -> Result<LineSearchOutcome> {
    let mut last_reason = String::from("progress test failed");
    for i in 0..=config.max_doublings {
        let m_plus = m_k * 2f64.powi(i as i32);
        let alpha = alpha_from(m_plus, delta, config.p);
        let params = StepParams {
            tol_inner: config.tol_inner.unwrap_or_else(|| default_tol_inner(delta)),
            max_inner_iters: config.max_inner_iters,
            ..StepParams::new(config.p, alpha, m_plus, delta)
        };
        let step = match solve_step(problem, v, &params) {
            Ok(s) => s,
            Err(e @ Error::InnerNoConvergence { .. }) => {
                last_reason = e.to_string();
                continue;
            }
            Err(e) => return Err(e),
        };
        let check = verify_progress(problem, &step, v, m_plus, delta, config.p);
        if check.accepted() {
            return Ok(LineSearchOutcome {
                m_plus,
                alpha,
                doublings: i,
                progress_lhs: check.lhs,
                progress_rhs: check.rhs,
                small: check.delta_ok,
                step,
            });
        }
        last_reason = format!("progress {:.3e} < {:.3e}", check.lhs, check.rhs.unwrap_or(f64::NAN));
    }
    Err(Error::LineSearchStalled {
        doublings: config.max_doublings,
        m: m_k * 2f64.powi(config.max_doublings as i32),
        reason: last_reason,
    })
}

pub fn run(problem: &CompositeVI, config: &SolverConfig) -> Result<RunResult> {
    if config.p == 0 || config.p > problem.oracle.max_order() {
        return Err(Error::OrderTooHigh { requested: config.p, max: problem.oracle.max_order() });
    }
    if config.delta < 0.0 || config.epsilon < 0.0 {
        return Err(Error::InvalidParameter("targets must be nonnegative".into()));
    }
    let delta = effective_delta(problem, config)?;
    if config.epsilon > 0.0 && !problem.set.is_bounded() {
        return Err(Error::UnboundedSet("accuracy certificate needs a bounded set"));
    }
    let m0 = match config.m0 {
        Some(m) if m > 0.0 => m,
        Some(m) => return Err(Error::InvalidParameter(format!("M0 must be positive, got {m}"))),
        None => default_m0(problem, config)?.max(config.m_min),
    };
    let (space, set) = (&problem.space, &problem.set);
    let x0 = match &config.x0 {
        Some(x) => {
            check_dim(problem.dim(), x.len())?;
            set.project(space, x)?
        }
        None => set.project(space, &DVector::zeros(problem.dim()))?,
    };

    let mut v = x0.clone();
    let mut x_last = x0.clone();
    let mut m_k = m0;
    let mut acc = Certificate::new(problem.dim());
    let mut trace = Vec::new();
    let mut status = Status::MaxIters;
    let mut final_certificate = None;
    let mut failure = None;
    let bounded = set.is_bounded();

    for k in 1..=config.max_outer_iters {
        let started = config.timing.then(Instant::now);
        let outcome = match line_search_m(problem, &v, m_k, delta, config) {
            Ok(o) => o,
            Err(e @ Error::LineSearchStalled { .. }) => {
                status = Status::InnerFailure;
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let step = outcome.step;
        let norm = space.dual_norm(&step.v_psi);
        let mut record = IterationRecord {
            k,
            m_before: m_k,
            doublings: outcome.doublings,
            m_plus: outcome.m_plus,
            alpha: outcome.alpha,
            r: step.r,
            norm_v_psi: norm,
            a: None,
            a_sum: None,
            certificate: None,
            progress_lhs: outcome.progress_lhs,
            progress_rhs: outcome.progress_rhs,
            time_ms: 0.0,
            x: step.x_plus.clone(),
            v_psi: step.v_psi.clone(),
            v_next: None,
            x_bar: None,
            inner_iters: step.inner_iters,
        };
        x_last = step.x_plus.clone();

        if norm == 0.0 || outcome.small {
            record.time_ms = elapsed_ms(started);
            trace.push(record);
            status = Status::StoppedOnDelta;
            if bounded {
                final_certificate = Some(point_certificate(&x_last, &step.v_psi, set, space)?);
            }
            break;
        }

        let a = (step.v_psi.dot(&(&v - &step.x_plus)) / (norm * norm)).max(0.0);
        if a > 0.0 {
            if bounded {
                let cert = acc.update(a, &step.x_plus, &step.v_psi, set, space)?;
                record.certificate = Some(cert);
                final_certificate = Some(cert);
            } else {
                acc.s += &step.v_psi * a;
                acc.c += a * step.v_psi.dot(&step.x_plus);
                acc.a_sum += a;
                acc.weighted_x += &step.x_plus * a;
            }
            record.a = Some(a);
            record.a_sum = Some(acc.a_sum);
            record.x_bar = acc.average();
            v = dual_step(set, space, &v, a, &step.v_psi)?;
            record.v_next = Some(v.clone());
        }
        m_k = (outcome.m_plus / 2.0).max(config.m_min);
        record.time_ms = elapsed_ms(started);
        let cert = record.certificate;
        trace.push(record);
        if config.epsilon > 0.0 && cert.is_some_and(|c| c <= config.epsilon) {
            status = Status::StoppedOnEpsilon;
            break;
        }
    }

    Ok(RunResult {
        status,
        x0,
        x_bar: acc.average(),
        x_last,
        v_last: v,
        final_certificate,
        final_norm_v_psi: trace.last().map(|r| r.norm_v_psi),
        trace,
        accumulators: acc,
        delta_eff: delta,
        m0,
        failure,
    })
}

fn elapsed_ms(started: Option<Instant>) -> f64 {
    started.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionMode {
    Delta,
    Epsilon,
}

/// Iteration bound of the method for a given smoothing `σ̂_{p−1}`.
///
/// `radius` is `R₀ = ‖x₀ − x⋆‖` in δ-mode and the diameter `D` in ε-mode.
pub fn predicted_iterations(
    sigma: &dyn SigmaFunction,
    p: usize,
    target: f64,
    m0: f64,
    radius: f64,
    mode: PredictionMode,
) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::InvalidParameter("target must be positive".into()));
    }
    let pf = p as f64;
    let cp = c_p_constant(p);
    match mode {
        PredictionMode::Delta => {
            let inv = sigma.inverse(target / 5.0)?.r;
            let inner = (1.0 / inv).max((5.0 * m0 / (2.0 * target)).powf(1.0 / (pf + 1.0)));
            Ok(0.8f64.powf(2.0 / (pf + 1.0)) * (radius / cp * inner).powi(2))
        }
        PredictionMode::Epsilon => {
            let inv = sigma.inverse(target / (5.0 * radius))?.r;
            let inner = (1.0 / inv).max((5.0 * m0 * radius / (2.0 * target)).powf(1.0 / (pf + 1.0)));
            Ok(0.8f64.powf(2.0 / (pf + 2.0)) * (radius / cp * inner).powf(2.0 * (pf + 1.0) / (pf + 2.0)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelescopeReport {
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
    /// Smallest `⟨V_ψ(xᵢ), xᵢ − x_ref⟩` over the weighted steps.
    pub min_term: f64,
    pub terms: usize,
}

/// Replays the trace and checks
/// `½‖x₀ − x_ref‖² ≥ ½‖v_K − x_ref‖² + ½Σaᵢ²‖V_ψ(xᵢ)‖²_* + Σaᵢ⟨V_ψ(xᵢ), xᵢ − x_ref⟩ − tol`.
pub fn check_telescoped_guarantee(
    x0: &DVector<f64>,
    trace: &[IterationRecord],
    x_ref: &DVector<f64>,
    space: &EuclideanSpace,
    tol: f64,
) -> TelescopeReport {
    let lhs = 0.5 * space.distance(x0, x_ref).powi(2);
    let mut v_last = x0.clone();
    let mut sum = 0.0;
    let mut min_term = f64::INFINITY;
    let mut terms = 0;
    for rec in trace {
        let (Some(a), Some(v_next)) = (rec.a, &rec.v_next) else { continue };
        let term = rec.v_psi.dot(&(&rec.x - x_ref));
        min_term = min_term.min(term);
        sum += 0.5 * a * a * rec.norm_v_psi.powi(2) + a * term;
        v_last = v_next.clone();
        terms += 1;
    }
    let rhs = 0.5 * space.distance(&v_last, x_ref).powi(2) + sum;
    TelescopeReport { lhs, rhs, passed: lhs >= rhs - tol, min_term, terms }
}

/// Header of the trace CSV.
pub const TRACE_COLUMNS: [&str; 12] = [
    "k",
    "i_k",
    "M_plus",
    "alpha",
    "r",
    "norm_v_psi",
    "a_k",
    "A_k",
    "Delta_k",
    "progress_lhs",
    "progress_rhs",
    "time_ms",
];

/// 17 significant digits; empty for absent values.
pub fn format_float(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.16e}"),
        None => String::new(),
    }
}

pub fn trace_csv(trace: &[IterationRecord]) -> String {
    let mut out = TRACE_COLUMNS.join(",");
    out.push('\n');
    for r in trace {
        let row = [
            r.k.to_string(),
            r.doublings.to_string(),
            format_float(Some(r.m_plus)),
            format_float(Some(r.alpha)),
            format_float(Some(r.r)),
            format_float(Some(r.norm_v_psi)),
            format_float(r.a),
            format_float(r.a_sum),
            format_float(r.certificate),
            format_float(Some(r.progress_lhs)),
            format_float(r.progress_rhs),
            format_float(Some(r.time_ms)),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
