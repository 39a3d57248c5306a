//! Benchmark instances with known solutions and curvature envelopes.
//!
//! Instances are addressable by a flat spec string,
//! `name:key=value,...,set=kind:key=value,...`, where `set=` must come last.
//! Known names: `zero`, `affine`, `matrix_game`, `bilinear`,
//! `power_potential`, `cubic_field`, `holder_mixture`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curvature::{HolderSigma, HolderSum, KappaForm, SigmaFunction};
use crate::error::{Error, Result};
use crate::oracle::{AffineOperator, CubicField, OperatorOracle, PowerPotential, SumOperator};
use crate::problem::{CompositeVI, ProblemDocument, SetDoc};
use crate::set::{FeasibleSet, SetKind};
use crate::space::EuclideanSpace;

/// Ground truth stored with an instance.
#[derive(Debug, Clone, Default)]
pub struct KnownData {
    pub x_star: Option<DVector<f64>>,
    /// `(p, ν, H)` valid on the feasible set: `D^pV` is `ν`-Hölder with constant `H`.
    pub holder: Vec<(usize, f64, f64)>,
    /// Closed form of `κ_V` on the feasible set.
    pub kappa: Option<KappaForm>,
    /// Closed form of `κ_{DV}` (operator norm).
    pub kappa_jacobian: Option<KappaForm>,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkInstance {
    pub name: String,
    pub problem: CompositeVI,
    pub known: KnownData,
    /// A feasible start away from the known solution.
    pub start: DVector<f64>,
}

impl BenchmarkInstance {
    /// Analytic `σ̂_{p−1}` from the stored Hölder data of order `p`.
    pub fn sigma(&self, p: usize) -> Option<Box<dyn SigmaFunction>> {
        let terms: Vec<HolderSigma> = self
            .known
            .holder
            .iter()
            .filter(|(order, _, _)| *order == p)
            .map(|&(p, nu, h)| HolderSigma { p, nu, h })
            .collect();
        match terms.len() {
            0 => None,
            1 => Some(Box::new(terms[0])),
            _ => Some(Box::new(HolderSum(terms))),
        }
    }

    /// `σ̂_{p−1}` of the instance viewed in the single class of exponent `nu`:
    /// every term with a larger exponent is rescaled by `D^{νᵢ−ν}`. `None`
    /// when some term is rougher than `nu`.
    pub fn single_class_sigma(&self, p: usize, nu: f64) -> Option<HolderSigma> {
        let diameter = self.problem.diameter()?;
        let mut h_total = 0.0;
        for &(order, nu_i, h_i) in self.known.holder.iter().filter(|t| t.0 == p) {
            debug_assert_eq!(order, p);
            if nu_i + 1e-15 < nu {
                return None;
            }
            h_total += h_i * diameter.powf(nu_i - nu);
        }
        (h_total > 0.0).then_some(HolderSigma { p, nu, h: h_total })
    }
}

/// Largest `‖x‖` over the set, when bounded.
pub fn max_norm(set: &FeasibleSet, space: &EuclideanSpace) -> Option<f64> {
    match set.kind() {
        SetKind::WholeSpace { radius, .. } => *radius,
        SetKind::Ball { center, radius } => Some(space.norm(center) + radius),
        SetKind::Box { lower, upper } => {
            let w = space.diagonal_weights()?;
            Some((0..lower.len()).map(|i| w[i] * lower[i].abs().max(upper[i].abs()).powi(2)).sum::<f64>().sqrt())
        }
        SetKind::Simplex { n } => {
            let w = space.diagonal_weights().unwrap_or_else(|| DVector::from_element(*n, 1.0));
            Some(w.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt())
        }
        SetKind::Product(blocks) => {
            let mut start = 0;
            let mut total = 0.0;
            for b in blocks {
                let sub = space.block(start, b.dim()).ok()?;
                total += max_norm(b, &sub)?.powi(2);
                start += b.dim();
            }
            Some(total.sqrt())
        }
    }
}

/// Deterministic unit direction `(1, −1/2, 1/3, …)` normalized in the space.
fn pattern_direction(space: &EuclideanSpace) -> DVector<f64> {
    let z = DVector::from_fn(space.dim(), |i, _| if i % 2 == 0 { 1.0 } else { -1.0 } / (i as f64 + 1.0));
    let len = space.norm(&z);
    z / len
}

fn suggested_start(set: &FeasibleSet, space: &EuclideanSpace) -> Result<DVector<f64>> {
    let dir = pattern_direction(space);
    let reach = set.diameter(space).map_or(1.0, |d| 0.5 * d);
    set.project(space, &(set.center() + dir * reach))
}

fn origin_if_feasible(set: &FeasibleSet, space: &EuclideanSpace) -> Option<DVector<f64>> {
    let origin = DVector::zeros(set.dim());
    set.contains(space, &origin, 1e-12).then_some(origin)
}

fn finish(name: String, problem: CompositeVI, known: KnownData) -> Result<BenchmarkInstance> {
    let start = suggested_start(&problem.set, &problem.space)?;
    Ok(BenchmarkInstance { name, problem, known, start })
}

pub fn make_zero(space: EuclideanSpace, set: FeasibleSet) -> Result<BenchmarkInstance> {
    let n = space.dim();
    let x_star = Some(set.center());
    let problem = CompositeVI::new(space, set, Arc::new(AffineOperator::zero(n)))?;
    let known = KnownData { x_star, kappa: Some(KappaForm::Zero), lipschitz: Some(0.0), ..Default::default() };
    finish("zero".into(), problem, known)
}

/// `V(x) = A(x − x⋆)` with `A = S + μI`, `S` a chain skew matrix.
pub fn make_affine(space: EuclideanSpace, set: FeasibleSet, skew: f64, mu: f64) -> Result<BenchmarkInstance> {
    let n = space.dim();
    let matrix = CubicField::chain_skew(n, skew) + DMatrix::identity(n, n) * mu;
    let target = set.project(&space, &(set.center() + pattern_direction(&space) * 0.1))?;
    let offset = -(&matrix * &target);
    let lipschitz = space.operator_norm(&matrix);
    let oracle = AffineOperator::new(matrix, offset)?;
    let problem = CompositeVI::new(space, set, Arc::new(oracle))?;
    let known = KnownData {
        x_star: Some(target),
        kappa: Some(KappaForm::Zero),
        lipschitz: Some(lipschitz),
        ..Default::default()
    };
    finish("affine".into(), problem, known)
}

/// Saddle-point operator `V(u, w) = (Aw + b, −Aᵀu + c)` on `Q_u × Q_w`.
pub fn make_bilinear_saddle(
    matrix: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    set_u: FeasibleSet,
    set_w: FeasibleSet,
) -> Result<BenchmarkInstance> {
    let (n, m) = matrix.shape();
    if b.len() != n || c.len() != m || set_u.dim() != n || set_w.dim() != m {
        return Err(Error::DimensionMismatch { expected: n + m, got: b.len() + c.len() });
    }
    let dim = n + m;
    let mut op = DMatrix::zeros(dim, dim);
    op.view_mut((0, n), (n, m)).copy_from(&matrix);
    op.view_mut((n, 0), (m, n)).copy_from(&(-matrix.transpose()));
    let mut offset = DVector::zeros(dim);
    offset.rows_mut(0, n).copy_from(&b);
    offset.rows_mut(n, m).copy_from(&c);
    let space = EuclideanSpace::identity(dim)?;
    let lipschitz = space.operator_norm(&op);

    let both_simplex = matches!(set_u.kind(), SetKind::Simplex { .. }) && matches!(set_w.kind(), SetKind::Simplex { .. });
    let x_star = if both_simplex {
        let payoff = DMatrix::from_fn(n, m, |i, j| matrix[(i, j)] + b[i] - c[j]);
        solve_zero_sum(&payoff).map(|(u, w)| concat(&u, &w))
    } else if n == m {
        // interior stationary point, if it is feasible
        let w = matrix.clone().lu().solve(&(-&b));
        let u = matrix.transpose().lu().solve(&c);
        match (u, w) {
            (Some(u), Some(w)) => {
                let cand = concat(&u, &w);
                let set = FeasibleSet::product(vec![set_u.clone(), set_w.clone()])?;
                set.contains(&space, &cand, 1e-12).then_some(cand)
            }
            _ => None,
        }
    } else {
        None
    };
    let set = FeasibleSet::product(vec![set_u, set_w])?;
    let problem = CompositeVI::new(space, set, Arc::new(AffineOperator::new(op, offset)?))?;
    let known = KnownData { x_star, kappa: Some(KappaForm::Zero), lipschitz: Some(lipschitz), ..Default::default() };
    finish("bilinear".into(), problem, known)
}

fn concat(u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(u.len() + w.len(), u.iter().chain(w.iter()).copied())
}

/// Equilibrium of the zero-sum game where the row player minimizes
/// `uᵀGw`, by enumeration of equal-size supports.
pub fn solve_zero_sum(payoff: &DMatrix<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, m) = payoff.shape();
    if n > 12 || m > 12 {
        return None;
    }
    let tol = 1e-10;
    for k in 1..=n.min(m) {
        for rows in subsets(n, k) {
            for cols in subsets(m, k) {
                let sub = DMatrix::from_fn(k, k, |i, j| payoff[(rows[i], cols[j])]);
                let Some((w_sub, v_w)) = indifference(&sub) else { continue };
                let Some((u_sub, v_u)) = indifference(&sub.transpose()) else { continue };
                if w_sub.iter().chain(u_sub.iter()).any(|x| *x < -tol) || (v_w - v_u).abs() > 1e-9 {
                    continue;
                }
                let mut u = DVector::zeros(n);
                let mut w = DVector::zeros(m);
                for (i, &r) in rows.iter().enumerate() {
                    u[r] = u_sub[i].max(0.0);
                }
                for (j, &c) in cols.iter().enumerate() {
                    w[c] = w_sub[j].max(0.0);
                }
                let row_values = payoff * &w;
                let col_values = payoff.transpose() * &u;
                if row_values.iter().all(|x| *x >= v_w - 1e-9) && col_values.iter().all(|x| *x <= v_w + 1e-9) {
                    return Some((u, w));
                }
            }
        }
    }
    None
}

/// Mixed strategy `w` with `Gw = v·1`, `Σw = 1`.
fn indifference(g: &DMatrix<f64>) -> Option<(DVector<f64>, f64)> {
    let k = g.nrows();
    let mut sys = DMatrix::zeros(k + 1, k + 1);
    sys.view_mut((0, 0), (k, k)).copy_from(g);
    for i in 0..k {
        sys[(i, k)] = -1.0;
        sys[(k, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = sys.lu().solve(&rhs)?;
    Some((sol.rows(0, k).into_owned(), sol[k]))
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

pub fn make_power_potential(space: EuclideanSpace, set: FeasibleSet, nu: f64, scale: f64) -> Result<BenchmarkInstance> {
    let oracle = PowerPotential::new(space.clone(), nu, scale)?;
    let h = oracle.holder_constant();
    let x_star = origin_if_feasible(&set, &space);
    let problem = CompositeVI::new(space, set, Arc::new(oracle))?;
    let known = KnownData {
        x_star,
        holder: vec![(1, nu, h)],
        kappa: Some(KappaForm::holder(nu, h)),
        ..Default::default()
    };
    finish(format!("power_potential(nu={nu})"), problem, known)
}

/// `V(x) = ‖x‖²Bx + Sx`. On a set inside the ball of radius `ρ`,
/// `σ̂_0(r) ≤ 3ρr²`; globally `κ_{DV}(r) = 3r²` and `σ̂_1(r) = r³`.
pub fn make_cubic_field(space: EuclideanSpace, set: FeasibleSet, skew: f64) -> Result<BenchmarkInstance> {
    let n = space.dim();
    let oracle = CubicField::new(space.clone(), CubicField::chain_skew(n, skew))?;
    let x_star = origin_if_feasible(&set, &space);
    let mut holder = vec![(2, 1.0, 6.0)];
    let mut kappa = None;
    if let Some(rho) = max_norm(&set, &space) {
        holder.push((1, 1.0, 6.0 * rho));
        kappa = Some(KappaForm::Power { coef: 3.0 * rho, exponent: 2.0 });
    }
    let problem = CompositeVI::new(space, set, Arc::new(oracle))?;
    let known = KnownData {
        x_star,
        holder,
        kappa,
        kappa_jacobian: Some(KappaForm::Power { coef: 3.0, exponent: 2.0 }),
        ..Default::default()
    };
    finish("cubic_field".into(), problem, known)
}

/// Sum of two power potentials with different exponents; on an unbounded
/// set it belongs to no single Hölder class.
pub fn make_holder_mixture(
    space: EuclideanSpace,
    set: FeasibleSet,
    terms: &[(f64, f64)],
) -> Result<BenchmarkInstance> {
    let mut parts: Vec<Arc<dyn OperatorOracle>> = Vec::new();
    let mut holder = Vec::new();
    let mut forms = Vec::new();
    for &(nu, scale) in terms {
        let pot = PowerPotential::new(space.clone(), nu, scale)?;
        holder.push((1, nu, pot.holder_constant()));
        forms.push(KappaForm::holder(nu, pot.holder_constant()));
        parts.push(Arc::new(pot));
    }
    let x_star = origin_if_feasible(&set, &space);
    let problem = CompositeVI::new(space, set, Arc::new(SumOperator::new(parts)?))?;
    let known = KnownData { x_star, holder, kappa: Some(KappaForm::Sum(forms)), ..Default::default() };
    finish("holder_mixture".into(), problem, known)
}

/// Sampled lower bound on the merit `max_{x∈Q} ⟨V(x), x̄ − x⟩`. Candidates
/// are uniform samples of `Q`, `x̄` itself, the set center, and the LMO
/// vertices along `±V(x̄)`.
pub fn merit_lower_bound(problem: &CompositeVI, x_bar: &DVector<f64>, n_samples: usize, seed: u64) -> Result<f64> {
    let (space, set) = (&problem.space, &problem.set);
    if !set.is_bounded() {
        return Err(Error::UnboundedSet("merit needs a bounded set"));
    }
    let value = |x: &DVector<f64>| problem.oracle.eval(x).dot(&(x_bar - x));
    let v_bar = problem.oracle.eval(x_bar);
    let mut best = value(x_bar);
    for cand in [set.center(), set.lmo(space, &v_bar)?, set.lmo(space, &(-&v_bar))?] {
        best = best.max(value(&cand));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        best = best.max(value(&set.sample(space, &mut rng)?));
    }
    Ok(best)
}

/// Smallest `⟨V(x), x − x⋆⟩` over sampled `x ∈ Q`; nonnegative for a weak solution.
pub fn weak_solution_margin(problem: &CompositeVI, x_star: &DVector<f64>, n_samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..n_samples {
        let x = problem.set.sample(&problem.space, &mut rng)?;
        worst = worst.min(problem.oracle.eval(&x).dot(&(&x - x_star)));
    }
    Ok(worst)
}

/// Flat `key=value` parameters of an instance spec.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params(BTreeMap<String, String>);

impl Params {
    pub fn insert(&mut self, key: &str, value: &str) {
        self.0.insert(key.into(), value.into());
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Spec(format!("unknown parameter {k:?}; expected one of {allowed:?}"))),
            None => Ok(()),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Spec(format!("{key}={v} is not a number"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Spec(format!("{key}={v} is not a nonnegative integer"))),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.0.get(key).map_or(default, String::as_str)
    }
}

/// Parsed form of `name:k=v,...,set=kind:k=v,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub name: String,
    pub params: Params,
    pub set: Option<SetDoc>,
}

pub fn parse_spec(spec: &str) -> Result<InstanceSpec> {
    let spec = spec.trim();
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(Error::Spec(format!("bad instance name {name:?}")));
    }
    let (own, set_part) = split_set(rest);
    let params = parse_pairs(own)?;
    let set = match set_part {
        None => None,
        Some(s) => {
            let (kind, set_rest) = s.split_once(':').unwrap_or((s, ""));
            if kind.is_empty() {
                return Err(Error::Spec("empty set kind".into()));
            }
            let mut map = serde_json::Map::new();
            for (k, v) in parse_pairs(set_rest)?.0 {
                let num: f64 = v.parse().map_err(|_| Error::Spec(format!("set parameter {k}={v} is not a number")))?;
                map.insert(k, num.into());
            }
            Some(SetDoc { kind: kind.into(), n: None, params: map, diameter: None })
        }
    };
    Ok(InstanceSpec { name: name.into(), params, set })
}

fn split_set(rest: &str) -> (&str, Option<&str>) {
    if let Some(s) = rest.strip_prefix("set=") {
        return ("", Some(s));
    }
    match rest.find(",set=") {
        Some(i) => (&rest[..i], Some(&rest[i + 5..])),
        None => (rest, None),
    }
}

fn parse_pairs(s: &str) -> Result<Params> {
    let mut params = Params::default();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| Error::Spec(format!("expected key=value, got {item:?}")))?;
        if k.is_empty() || v.is_empty() {
            return Err(Error::Spec(format!("expected key=value, got {item:?}")));
        }
        params.insert(k.trim(), v.trim());
    }
    Ok(params)
}

fn default_ball() -> SetDoc {
    let mut params = serde_json::Map::new();
    params.insert("D".into(), 1.0.into());
    SetDoc { kind: "ball".into(), n: None, params, diameter: None }
}

/// Builds an instance from its spec string.
pub fn parse_instance(spec: &str) -> Result<BenchmarkInstance> {
    let parsed = parse_spec(spec)?;
    build_instance(&parsed.name, &parsed.params, parsed.set.as_ref(), None)
}

/// Builds an instance from a JSON problem document; the oracle's `builtin`
/// name and parameters follow the spec-string names.
pub fn from_document(doc: &ProblemDocument) -> Result<BenchmarkInstance> {
    let mut params = Params::default();
    for (k, v) in &doc.oracle.params {
        let text = match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        params.insert(k, &text);
    }
    if !params.0.contains_key("n") {
        params.insert("n", &doc.space.n.to_string());
    }
    let space = doc.space.build()?;
    build_instance(&doc.oracle.builtin, &params, Some(&doc.set), Some(space))
}

fn spec_err(e: Error) -> Error {
    match e {
        Error::Spec(_) => e,
        other => Error::Spec(other.to_string()),
    }
}

fn build_instance(
    name: &str,
    params: &Params,
    set_doc: Option<&SetDoc>,
    space: Option<EuclideanSpace>,
) -> Result<BenchmarkInstance> {
    let make_space = |n: usize| -> Result<EuclideanSpace> {
        match &space {
            Some(s) if s.dim() == n => Ok(s.clone()),
            Some(s) => Err(Error::Spec(format!("space has dimension {}, instance needs {n}", s.dim()))),
            None => EuclideanSpace::identity(n).map_err(spec_err),
        }
    };
    let ball = default_ball();
    let set_doc = set_doc.unwrap_or(&ball);
    let make_set = |n: usize| set_doc.build(n).map_err(spec_err);
    let mut instance = match name {
        "zero" => {
            params.check_keys(&["n"])?;
            let n = params.usize_or("n", 2)?;
            make_zero(make_space(n)?, make_set(n)?)
        }
        "affine" => {
            params.check_keys(&["n", "skew", "mu"])?;
            let n = params.usize_or("n", 2)?;
            make_affine(make_space(n)?, make_set(n)?, params.f64_or("skew", 1.0)?, params.f64_or("mu", 0.5)?)
        }
        "matrix_game" | "bilinear" => {
            params.check_keys(&["game", "n", "m", "seed"])?;
            let (matrix, b, c) = game_matrix(params)?;
            let (n, m) = matrix.shape();
            let (set_u, set_w) = if name == "matrix_game" {
                (FeasibleSet::simplex(n)?, FeasibleSet::simplex(m)?)
            } else {
                (make_set(n)?, make_set(m)?)
            };
            make_bilinear_saddle(matrix, b, c, set_u, set_w)
        }
        "power_potential" => {
            params.check_keys(&["n", "nu", "scale", "s"])?;
            let n = params.usize_or("n", 2)?;
            let scale = params.f64_or("scale", params.f64_or("s", 1.0)?)?;
            make_power_potential(make_space(n)?, make_set(n)?, params.f64_or("nu", 1.0)?, scale)
        }
        "cubic_field" => {
            params.check_keys(&["n", "skew"])?;
            let n = params.usize_or("n", 2)?;
            make_cubic_field(make_space(n)?, make_set(n)?, params.f64_or("skew", 1.0)?)
        }
        "holder_mixture" => {
            params.check_keys(&["n", "nu1", "nu2", "s1", "s2"])?;
            let n = params.usize_or("n", 2)?;
            let terms = [
                (params.f64_or("nu1", 0.3)?, params.f64_or("s1", 1.0)?),
                (params.f64_or("nu2", 1.0)?, params.f64_or("s2", 1.0)?),
            ];
            make_holder_mixture(make_space(n)?, make_set(n)?, &terms)
        }
        other => return Err(Error::Spec(format!("unknown instance {other:?}"))),
    }
    .map_err(spec_err)?;
    instance.name = name.into();
    Ok(instance)
}

fn game_matrix(params: &Params) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let matrix = match params.str_or("game", "pennies") {
        "pennies" => DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
        "rps" => DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 1.0, -1.0, 0.0]),
        "zero" => DMatrix::zeros(1, 1),
        "random" => {
            let n = params.usize_or("n", 3)?;
            let m = params.usize_or("m", n)?;
            if n == 0 || m == 0 {
                return Err(Error::Spec("game dimensions must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(params.usize_or("seed", 0)? as u64);
            DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
        }
        other => return Err(Error::Spec(format!("unknown game {other:?}"))),
    };
    let (n, m) = matrix.shape();
    Ok((matrix, DVector::zeros(n), DVector::zeros(m)))
}
