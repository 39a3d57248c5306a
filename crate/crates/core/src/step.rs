//! The doubly regularized subproblem and the reduced operator.
//!
//! Given `x`, the step looks for `x⁺ ∈ Q` solving the variational inequality
//! of `Φ(y) = T^p_x(y) + (α + M‖y − x‖^p)·B(y − x)`. For a frozen weight `β`
//! the operator `Φ_β(y) = T^p_x(y) + βB(y − x)` is handled by an inner solver;
//! the self-consistent radius is then found by bisection, because
//! `r ↦ ‖y(α + Mr^p) − x‖` is nonincreasing. When the frozen problem has
//! several solutions the bisection can land between branches; the coupled
//! operator `Φ` is then solved directly from the bisection point.

use nalgebra::{DMatrix, DVector};

use crate::curvature::SigmaFunction;
use crate::error::{check_dim, Error, Result};
use crate::problem::CompositeVI;

/// `α = M^{1/(p+1)} (2δ/5)^{p/(p+1)}`.
pub fn alpha_from(m: f64, delta: f64, p: usize) -> f64 {
    let p = p as f64;
    m.powf(1.0 / (p + 1.0)) * (0.4 * delta).powf(p / (p + 1.0))
}

/// Progress constant `c_p` of the step lemma.
pub fn c_p_constant(p: usize) -> f64 {
    let p = p as f64;
    let e = p / (2.0 * (p + 1.0));
    0.25 * 1.5f64.powf(e) * (((p + 2.0) / p).powf(e) + (p / (p + 2.0)).powf((p + 2.0) / (2.0 * (p + 1.0))))
}

/// `(2δ/(5M))^{1/(p+1)}`, the radius every step reaches while `‖V_ψ‖_* ≥ δ`.
pub fn radius_lower_bound(m: f64, delta: f64, p: usize) -> f64 {
    (0.4 * delta / m).powf(1.0 / (p as f64 + 1.0))
}

// keeps the defining inequality true after rounding
const THRESHOLD_SLACK: f64 = 1.0 + 1e-12;

/// Smallest `M` with `σ̂_{p−1}((2δ/(5M))^{1/(p+1)}) ≤ δ/5`.
pub fn regularization_threshold(sigma: &dyn SigmaFunction, p: usize, delta: f64) -> Result<f64> {
    let r = sigma.inverse(delta / 5.0)?.r;
    Ok(0.4 * delta / r.powi(p as i32 + 1) * THRESHOLD_SLACK)
}

/// Smallest `M` with `σ̂_{p−1}((2δ/(5M))^{1/(p+1)}) ≤ 2δ/(5(p+1))`, which
/// makes the subproblem operator monotone.
pub fn monotone_threshold(sigma: &dyn SigmaFunction, p: usize, delta: f64) -> Result<f64> {
    let r = sigma.inverse(0.4 * delta / (p as f64 + 1.0))?.r;
    Ok(0.4 * delta / r.powi(p as i32 + 1) * THRESHOLD_SLACK)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub p: usize,
    pub alpha: f64,
    pub m: f64,
    pub tol_inner: f64,
    /// Absolute bisection tolerance on the radius; `None` means `1e-10·max(1, r_hi)`.
    pub tol_r: Option<f64>,
    pub max_inner_iters: usize,
}

impl StepParams {
    /// Parameters with the default tolerances tied to `δ`.
    pub fn new(p: usize, alpha: f64, m: f64, delta: f64) -> Self {
        Self { p, alpha, m, tol_inner: default_tol_inner(delta), tol_r: None, max_inner_iters: 200_000 }
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 || self.p > 2 {
            return Err(Error::InvalidParameter(format!("model order must be 1 or 2, got {}", self.p)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.m >= 0.0) || !self.m.is_finite() {
            return Err(Error::InvalidParameter(format!("M must be nonnegative, got {}", self.m)));
        }
        if !(self.tol_inner > 0.0) {
            return Err(Error::InvalidParameter("inner tolerance must be positive".into()));
        }
        Ok(())
    }
}

pub fn default_tol_inner(delta: f64) -> f64 {
    if delta > 0.0 {
        (delta / 100.0).min(1e-8)
    } else {
        1e-8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub x_plus: DVector<f64>,
    /// `‖x⁺ − x‖`
    pub r: f64,
    /// Root of the radius bisection; `x⁺` solves the frozen problem at
    /// `β = α + M·r_fixed^p`.
    pub r_fixed: f64,
    pub beta: f64,
    pub v_psi: DVector<f64>,
    pub inner_residual: f64,
    pub inner_iters: usize,
    pub bracket_ok: bool,
    /// `(β, ‖y(β) − x‖)` for every inner solve, in order.
    pub trajectory: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub y: DVector<f64>,
    /// Dual-norm bound on the violation of the variational inequality at `y`.
    pub residual: f64,
    pub iters: usize,
}

/// Weight of the proximal term `w·B(y − x)`: frozen, or `α + M‖y − x‖^p`.
#[derive(Debug, Clone, Copy)]
enum Weight {
    Frozen(f64),
    Coupled { alpha: f64, m: f64 },
}

/// Taylor model at a fixed base point, with its derivative data cached.
struct LocalModel<'a> {
    problem: &'a CompositeVI,
    x: DVector<f64>,
    vx: DVector<f64>,
    jac: DMatrix<f64>,
    p: usize,
}

impl<'a> LocalModel<'a> {
    fn new(problem: &'a CompositeVI, x: &DVector<f64>, p: usize) -> Result<Self> {
        check_dim(problem.dim(), x.len())?;
        let max = problem.oracle.max_order();
        if p > max {
            return Err(Error::OrderTooHigh { requested: p, max });
        }
        Ok(Self { problem, x: x.clone(), vx: problem.oracle.eval(x), jac: problem.oracle.jacobian(x), p })
    }

    fn taylor(&self, y: &DVector<f64>) -> DVector<f64> {
        let d = y - &self.x;
        let mut out = &self.vx + &self.jac * &d;
        if self.p >= 2 {
            let second = self.problem.oracle.d2vp(&self.x, &d, &d).expect("order checked at construction");
            out += second * 0.5;
        }
        out
    }

    fn weight(&self, y: &DVector<f64>, weight: Weight) -> f64 {
        match weight {
            Weight::Frozen(beta) => beta,
            Weight::Coupled { alpha, m } => alpha + m * self.problem.space.distance(&self.x, y).powi(self.p as i32),
        }
    }

    fn phi(&self, y: &DVector<f64>, weight: Weight) -> DVector<f64> {
        self.taylor(y) + self.problem.space.apply(&(y - &self.x)) * self.weight(y, weight)
    }

    fn phi_jacobian(&self, y: &DVector<f64>, weight: Weight) -> DMatrix<f64> {
        let n = self.x.len();
        let space = &self.problem.space;
        let d = y - &self.x;
        let mut jac = &self.jac + space.matrix() * self.weight(y, weight);
        if self.p >= 2 {
            for j in 0..n {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                let col = self.problem.oracle.d2vp(&self.x, &d, &e).expect("order checked at construction");
                jac.set_column(j, &(jac.column(j) + col));
            }
        }
        if let Weight::Coupled { m, .. } = weight {
            let dn = space.norm(&d);
            if dn > 0.0 {
                let bd = space.apply(&d);
                jac += &bd * bd.transpose() * (self.p as f64 * m * dn.powi(self.p as i32 - 2));
            }
        }
        jac
    }
}

/// Solves the frozen-weight subproblem: `y ∈ Q` with
/// `⟨Φ_β(y), z − y⟩ ≥ −tol·‖z − y‖` for all `z ∈ Q`.
pub fn solve_inner_vi(
    problem: &CompositeVI,
    x: &DVector<f64>,
    beta: f64,
    p: usize,
    tol: f64,
    max_iters: usize,
) -> Result<InnerSolution> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("regularization weight must be positive, got {beta}")));
    }
    let model = LocalModel::new(problem, x, p)?;
    inner_solve(&model, Weight::Frozen(beta), tol, max_iters, None)
}

fn inner_solve(
    model: &LocalModel<'_>,
    beta: Weight,
    tol: f64,
    max_iters: usize,
    warm: Option<&DVector<f64>>,
) -> Result<InnerSolution> {
    let problem = model.problem;
    let (space, set) = (&problem.space, &problem.set);

    // Unconstrained root of Φ_β: one linear solve for p = 1, damped Newton otherwise.
    let newton = if model.p == 1 && matches!(beta, Weight::Frozen(_)) {
        let a = model.phi_jacobian(&model.x, beta);
        a.lu().solve(&(-&model.vx)).map(|d| (&model.x + d, 1))
    } else {
        damped_newton(model, beta, tol, warm)
    };
    if let Some((y, iters)) = &newton {
        if set.contains(space, y, 0.0) {
            let residual = space.dual_norm(&model.phi(y, beta));
            if residual <= tol {
                return Ok(InnerSolution { y: y.clone(), residual, iters: *iters });
            }
        }
    }

    let start = match (warm, &newton) {
        (Some(w), _) => set.project(space, w)?,
        (None, Some((y, _))) => set.project(space, y)?,
        (None, None) => set.project(space, &model.x)?,
    };
    extragradient(model, beta, tol, max_iters, start)
}

fn damped_newton(
    model: &LocalModel<'_>,
    beta: Weight,
    tol: f64,
    warm: Option<&DVector<f64>>,
) -> Option<(DVector<f64>, usize)> {
    let space = &model.problem.space;
    let mut y = warm.cloned().unwrap_or_else(|| model.x.clone());
    let mut g = model.phi(&y, beta);
    let mut res = space.dual_norm(&g);
    for it in 1..=100 {
        if res <= tol {
            return Some((y, it));
        }
        let step = model.phi_jacobian(&y, beta).lu().solve(&(-&g))?;
        let mut t = 1.0;
        loop {
            let trial = &y + &step * t;
            let gt = model.phi(&trial, beta);
            let rt = space.dual_norm(&gt);
            if rt < (1.0 - 1e-4 * t) * res {
                y = trial;
                g = gt;
                res = rt;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return None;
            }
        }
    }
    (res <= tol).then_some((y, 100))
}

/// Projected extragradient. The constant step `0.9/L_β` is used when the
/// model is affine (p = 1); otherwise the step is halved until
/// `γ‖Φ(ŷ) − Φ(y)‖_* ≤ 0.9‖ŷ − y‖`, at most 60 times per iteration.
fn extragradient(
    model: &LocalModel<'_>,
    beta: Weight,
    tol: f64,
    max_iters: usize,
    start: DVector<f64>,
) -> Result<InnerSolution> {
    let problem = model.problem;
    let (space, set) = (&problem.space, &problem.set);
    let backtrack = model.p >= 2 || matches!(beta, Weight::Coupled { .. });
    let mut gamma = {
        let lip = space.operator_norm(&model.phi_jacobian(&start, beta));
        0.9 / lip.max(1e-300)
    };
    let mut y = start;
    let mut best = f64::INFINITY;
    for it in 1..=max_iters {
        let g = model.phi(&y, beta);
        let mut halvings = 0;
        let (y_half, g_half) = loop {
            let y_half = set.project(space, &(&y - space.solve(&g) * gamma))?;
            let g_half = model.phi(&y_half, beta);
            if !backtrack {
                break (y_half, g_half);
            }
            let moved = space.norm(&(&y_half - &y));
            if gamma * space.dual_norm(&(&g_half - &g)) <= 0.9 * moved || moved == 0.0 {
                break (y_half, g_half);
            }
            gamma *= 0.5;
            halvings += 1;
            if halvings > 60 {
                return Err(Error::InnerNoConvergence { iters: it, residual: best });
            }
        };
        // y_half solves the VI of Φ up to w = Φ(ŷ) − Φ(y) + B(y − ŷ)/γ
        let w = &g_half - &g + space.apply(&(&y - &y_half)) / gamma;
        let residual = space.dual_norm(&w);
        if residual <= tol {
            return Ok(InnerSolution { y: y_half, residual, iters: it });
        }
        best = best.min(residual);
        y = set.project(space, &(&y - space.solve(&g_half) * gamma))?;
        if backtrack {
            gamma *= 1.2;
        }
    }
    Err(Error::InnerNoConvergence { iters: max_iters, residual: best })
}

/// Solves the regularized subproblem from `x`.
pub fn solve_step(problem: &CompositeVI, x: &DVector<f64>, params: &StepParams) -> Result<StepResult> {
    params.validate()?;
    let model = LocalModel::new(problem, x, params.p)?;
    let space = &problem.space;
    let p = params.p as i32;
    let weight = |r: f64| params.alpha + params.m * r.powi(p);

    let mut trajectory = Vec::new();
    let mut total_iters = 0;
    let mut solve_at = |beta: f64, warm: Option<&DVector<f64>>| -> Result<InnerSolution> {
        let sol = inner_solve(&model, Weight::Frozen(beta), params.tol_inner, params.max_inner_iters, warm)?;
        total_iters += sol.iters;
        trajectory.push((beta, space.distance(x, &sol.y)));
        Ok(sol)
    };

    let at_alpha = solve_at(params.alpha, None)?;
    let r_hi = space.distance(x, &at_alpha.y);
    let (sol, r_fixed, bracket_ok) = if params.m == 0.0 || r_hi == 0.0 {
        (at_alpha, r_hi, true)
    } else {
        let tol_r = params.tol_r.unwrap_or(1e-10 * r_hi.max(1.0));
        let mut upper = solve_at(weight(r_hi), Some(&at_alpha.y))?;
        let bracket_ok = space.distance(x, &upper.y) <= r_hi + tol_r;
        let (mut lo, mut hi) = (0.0, r_hi);
        let mut warm = upper.y.clone();
        while hi - lo > tol_r {
            let mid = 0.5 * (lo + hi);
            let trial = solve_at(weight(mid), Some(&warm))?;
            warm = trial.y.clone();
            if space.distance(x, &trial.y) > mid {
                lo = mid;
            } else {
                hi = mid;
                upper = trial;
            }
        }
        (upper, hi, bracket_ok)
    };

    let tol_r = params.tol_r.unwrap_or(1e-10 * r_hi.max(1.0));
    let (sol, r_fixed) = if (space.distance(x, &sol.y) - r_fixed).abs() > 2.0 * tol_r {
        // the frozen-weight solution jumped between branches; solve the coupled problem directly
        let coupled = Weight::Coupled { alpha: params.alpha, m: params.m };
        let polished = inner_solve(&model, coupled, params.tol_inner, params.max_inner_iters, Some(&sol.y))?;
        total_iters += polished.iters;
        let r = space.distance(x, &polished.y);
        trajectory.push((weight(r), r));
        (polished, r)
    } else {
        (sol, r_fixed)
    };
    let beta = weight(r_fixed);
    let x_plus = sol.y;
    let d = &x_plus - x;
    let v_psi = problem.oracle.eval(&x_plus) - model.taylor(&x_plus) - space.apply(&d) * beta;
    Ok(StepResult {
        r: space.norm(&d),
        x_plus,
        r_fixed,
        beta,
        v_psi,
        inner_residual: sol.residual,
        inner_iters: total_iters,
        bracket_ok,
        trajectory,
    })
}

/// `V(x⁺) − T^p_x(x⁺) − (α + Mr^p)B(x⁺ − x)` with `r = ‖x⁺ − x‖`.
pub fn reduced_operator(
    problem: &CompositeVI,
    x: &DVector<f64>,
    x_plus: &DVector<f64>,
    alpha: f64,
    m: f64,
    p: usize,
) -> Result<DVector<f64>> {
    let model = LocalModel::new(problem, x, p)?;
    check_dim(problem.dim(), x_plus.len())?;
    let d = x_plus - x;
    let r = problem.space.norm(&d);
    Ok(problem.oracle.eval(x_plus) - model.taylor(x_plus) - problem.space.apply(&d) * (alpha + m * r.powi(p as i32)))
}

/// Outcome of the step-progress tests.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressCheck {
    /// `⟨V_ψ(x⁺), x − x⁺⟩`
    pub lhs: f64,
    /// `c_p (‖V_ψ‖_*^{p+2}/M)^{1/(p+1)}`; absent when `M = 0`.
    pub rhs: Option<f64>,
    pub progress_ok: Option<bool>,
    pub norm_v_psi: f64,
    pub delta_ok: bool,
    pub radius_bound: Option<f64>,
    pub radius_ok: Option<bool>,
}

impl ProgressCheck {
    /// The line-search acceptance rule: progress, or a small reduced operator.
    pub fn accepted(&self) -> bool {
        self.delta_ok || self.progress_ok.unwrap_or(false)
    }
}

/// Relative slack on the progress inequality, covering rounding in the
/// inner products.
const PROGRESS_RTOL: f64 = 1e-12;

pub fn verify_progress(
    problem: &CompositeVI,
    step: &StepResult,
    x: &DVector<f64>,
    m: f64,
    delta: f64,
    p: usize,
) -> ProgressCheck {
    let space = &problem.space;
    let norm = space.dual_norm(&step.v_psi);
    let lhs = step.v_psi.dot(&(x - &step.x_plus));
    let pf = p as f64;
    let (rhs, progress_ok, radius_bound, radius_ok) = if m > 0.0 {
        let rhs = c_p_constant(p) * (norm.powf(pf + 2.0) / m).powf(1.0 / (pf + 1.0));
        let lb = if delta > 0.0 { Some(radius_lower_bound(m, delta, p)) } else { None };
        let radius_ok = lb.map(|b| step.r >= b * (1.0 - 1e-9));
        (Some(rhs), Some(lhs >= rhs * (1.0 - PROGRESS_RTOL)), lb, radius_ok)
    } else {
        (None, None, None, None)
    };
    ProgressCheck { lhs, rhs, progress_ok, norm_v_psi: norm, delta_ok: norm <= delta, radius_bound, radius_ok }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub trivially_monotone: bool,
    /// `σ̂_{p−1}((2δ/(5M))^{1/(p+1)})` and `2δ/(5(p+1))`, when a σ̂ was supplied.
    pub condition: Option<(f64, f64)>,
    pub condition_holds: Option<bool>,
    pub min_form: f64,
    pub negative_count: usize,
    pub samples: usize,
    pub message: String,
}

/// Samples `⟨DΦ(y)h, h⟩` for the subproblem operator at base point `x`.
#[allow(clippy::too_many_arguments)]
pub fn check_subproblem_monotone(
    problem: &CompositeVI,
    x: &DVector<f64>,
    alpha: f64,
    m: f64,
    p: usize,
    delta: f64,
    sigma: Option<&dyn SigmaFunction>,
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<MonotonicityReport> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    if p == 1 {
        let monotone = problem.oracle.is_monotone();
        return Ok(MonotonicityReport {
            trivially_monotone: monotone,
            condition: None,
            condition_holds: None,
            min_form: f64::NAN,
            negative_count: 0,
            samples: 0,
            message: if monotone {
                "monotone by construction".into()
            } else {
                "order-one model of a non-monotone operator".into()
            },
        });
    }
    let oracle = &problem.oracle;
    if oracle.max_order() < p {
        return Err(Error::OrderTooHigh { requested: p, max: oracle.max_order() });
    }
    let space = &problem.space;
    let condition = match sigma {
        Some(s) if m > 0.0 => {
            let lhs = s.sigma(radius_lower_bound(m, delta, p))?;
            Some((lhs, 0.4 * delta / (p as f64 + 1.0)))
        }
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_form = f64::INFINITY;
    let mut negative = 0;
    let pf = p as f64;
    for _ in 0..n_samples {
        let y = if problem.set.is_bounded() {
            problem.set.sample(space, &mut rng)?
        } else {
            x + space.random_unit(&mut rng) * rand::Rng::random::<f64>(&mut rng)
        };
        let h = space.random_unit(&mut rng);
        let d = &y - x;
        let dn = space.norm(&d);
        let bh = space.apply(&h);
        let mut image = oracle.jvp(x, &h) + bh * (alpha + m * dn.powf(pf));
        if p >= 2 {
            image += oracle.d2vp(x, &d, &h).expect("order checked");
        }
        if dn > 0.0 {
            let bd = space.apply(&d);
            image += &bd * (pf * m * dn.powf(pf - 2.0) * bd.dot(&h));
        }
        let form = image.dot(&h);
        min_form = min_form.min(form);
        if form < -tol {
            negative += 1;
        }
    }
    Ok(MonotonicityReport {
        trivially_monotone: false,
        condition_holds: condition.map(|(l, r)| l <= r),
        condition,
        min_form,
        negative_count: negative,
        samples: n_samples,
        message: format!("{negative} of {n_samples} sampled forms below -{tol:e}"),
    })
}
