//! Point-wise curvature and global curvature bound (GCB) profiles.

use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::geometry::MetricKind;
use crate::error::{Error, Result};
use crate::set::FeasibleSet;
use crate::space::EuclideanSpace;

/// A map between the point sets of two metrics.
pub type Map<'a> = &'a (dyn Fn(&DVector<f64>) -> DVector<f64> + Sync);

/// 33 Chebyshev–Lobatto points on `[0.01, 0.99]`, both ends included.
pub fn default_t_grid() -> Vec<f64> {
    (0..=32)
        .map(|k| 0.5 - 0.49 * (std::f64::consts::PI * k as f64 / 32.0).cos())
        .collect()
}

/// `max_t d(A(γ(t)), ξ(t)) / (t(1−t))` over `t_grid`, where `γ` joins `x` to
/// `y` in `domain` and `ξ` joins `A(x)` to `A(y)` in `codomain`.
pub fn pointwise_delta(
    map: Map<'_>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    domain: &MetricKind,
    codomain: &MetricKind,
    t_grid: &[f64],
) -> f64 {
    if domain.distance(x, y) == 0.0 {
        return 0.0;
    }
    let ax = map(x);
    let ay = map(y);
    let mut best: f64 = 0.0;
    for &t in t_grid {
        if !(t > 0.0 && t < 1.0) {
            continue;
        }
        let image = map(&domain.geodesic(x, y, t));
        let chord = codomain.geodesic(&ax, &ay, t);
        best = best.max(codomain.distance(&image, &chord) / (t * (1.0 - t)));
    }
    best
}

/// `2^{1−ν}H/(1+ν) · r^{1+ν}`, the curvature bound of a map whose derivative
/// is `ν`-Hölder with constant `H`.
pub fn holder_kappa_envelope(nu: f64, h: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    2f64.powf(1.0 - nu) * h / (1.0 + nu) * r.powf(1.0 + nu)
}

/// Closed-form curvature bound.
#[derive(Debug, Clone, PartialEq)]
pub enum KappaForm {
    Zero,
    /// `coef · r^exponent`
    Power { coef: f64, exponent: f64 },
    Sum(Vec<KappaForm>),
}

impl KappaForm {
    pub fn holder(nu: f64, h: f64) -> Self {
        Self::Power { coef: 2f64.powf(1.0 - nu) * h / (1.0 + nu), exponent: 1.0 + nu }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            Self::Zero => 0.0,
            Self::Power { coef, exponent } => coef * r.powf(*exponent),
            Self::Sum(parts) => parts.iter().map(|p| p.eval(r)).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Empirical,
    AnalyticHolder { p: usize, nu: f64, h: f64 },
    ClosedForm,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empirical => write!(f, "empirical"),
            Self::AnalyticHolder { p, nu, h } => write!(f, "analytic-holder(p={p};nu={nu};H={h})"),
            Self::ClosedForm => write!(f, "closed-form"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub n_pairs: usize,
    pub seed: u64,
    /// Pairs per grid point that could not be placed inside the region.
    pub skipped: Vec<usize>,
    pub domain: &'static str,
    pub codomain: &'static str,
}

/// Nondecreasing curvature profile on `Γ = [0, r_max]`, anchored at `κ(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile {
    r_grid: Vec<f64>,
    kappa: Vec<f64>,
    provenance: Provenance,
    form: Option<KappaForm>,
    sample_meta: Option<SampleMeta>,
}

fn validate_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(Error::InvalidParameter("empty r grid".into()));
    }
    if r_grid[0] <= 0.0 || r_grid.windows(2).any(|w| !(w[1] > w[0])) || r_grid.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidParameter("r grid must be positive and strictly increasing".into()));
    }
    Ok(())
}

fn running_max(values: &mut [f64]) {
    let mut best: f64 = 0.0;
    for v in values.iter_mut() {
        best = best.max(*v);
        *v = best;
    }
}

impl CurvatureProfile {
    /// Profile defined by a closed form, tabulated on `r_grid` for output.
    pub fn analytic(form: KappaForm, r_grid: Vec<f64>, provenance: Provenance) -> Result<Self> {
        validate_grid(&r_grid)?;
        let kappa = r_grid.iter().map(|&r| form.eval(r)).collect();
        Ok(Self { r_grid, kappa, provenance, form: Some(form), sample_meta: None })
    }

    /// Tabulated profile; values are monotonized by running maximum.
    pub fn tabulated(r_grid: Vec<f64>, mut kappa: Vec<f64>, provenance: Provenance) -> Result<Self> {
        validate_grid(&r_grid)?;
        if kappa.len() != r_grid.len() {
            return Err(Error::DimensionMismatch { expected: r_grid.len(), got: kappa.len() });
        }
        if kappa.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
            return Err(Error::InvalidParameter("curvature values must be finite and nonnegative".into()));
        }
        running_max(&mut kappa);
        Ok(Self { r_grid, kappa, provenance, form: None, sample_meta: None })
    }

    /// Uniform grid of `points` values on `(0, r_max]`.
    pub fn uniform_grid(r_max: f64, points: usize) -> Vec<f64> {
        (1..=points).map(|i| r_max * i as f64 / points as f64).collect()
    }

    pub fn r_grid(&self) -> &[f64] {
        &self.r_grid
    }

    pub fn kappa_values(&self) -> &[f64] {
        &self.kappa
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn form(&self) -> Option<&KappaForm> {
        self.form.as_ref()
    }

    pub fn sample_meta(&self) -> Option<&SampleMeta> {
        self.sample_meta.as_ref()
    }

    pub fn r_max(&self) -> f64 {
        *self.r_grid.last().expect("validated non-empty")
    }

    pub fn is_identically_zero(&self) -> bool {
        match &self.form {
            Some(KappaForm::Zero) => true,
            Some(form) => form.eval(self.r_max()) == 0.0,
            None => self.kappa.iter().all(|k| *k == 0.0),
        }
    }

    pub(crate) fn check_domain(&self, r: f64) -> Result<()> {
        let r_max = self.r_max();
        if !(r >= 0.0) || r > r_max * (1.0 + 1e-12) {
            return Err(Error::OutOfDomain { r, r_max });
        }
        Ok(())
    }

    /// `κ(r)`: exact for closed forms, otherwise linear interpolation with the
    /// origin as an extra node.
    pub fn kappa_at(&self, r: f64) -> Result<f64> {
        self.check_domain(r)?;
        Ok(self.kappa_unchecked(r))
    }

    pub(crate) fn kappa_unchecked(&self, r: f64) -> f64 {
        if let Some(form) = &self.form {
            return form.eval(r);
        }
        if r <= 0.0 {
            return 0.0;
        }
        let idx = self.r_grid.partition_point(|&g| g < r);
        if idx >= self.r_grid.len() {
            return *self.kappa.last().expect("non-empty");
        }
        let (r0, k0) = if idx == 0 { (0.0, 0.0) } else { (self.r_grid[idx - 1], self.kappa[idx - 1]) };
        let (r1, k1) = (self.r_grid[idx], self.kappa[idx]);
        if r1 == r {
            return k1;
        }
        k0 + (k1 - k0) * (r - r0) / (r1 - r0)
    }

    /// Points where the interpolant has kinks below `r` (for quadrature).
    pub(crate) fn breakpoints_below(&self, r: f64) -> Vec<f64> {
        if self.form.is_some() {
            return Vec::new();
        }
        self.r_grid.iter().copied().filter(|&g| g > 0.0 && g < r).collect()
    }
}

/// Box from which base points are drawn, optionally intersected with a set.
/// A bounded set is sampled directly and the box is then ignored.
#[derive(Debug, Clone)]
pub struct SamplingRegion {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub set: Option<(FeasibleSet, EuclideanSpace)>,
}

impl SamplingRegion {
    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        Self { lower, upper, set: None }
    }

    pub fn in_set(set: FeasibleSet, space: EuclideanSpace) -> Self {
        let n = set.dim();
        Self { lower: DVector::zeros(n), upper: DVector::zeros(n), set: Some((set, space)) }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn draw_base<R: Rng + ?Sized>(&self, domain: &MetricKind, rng: &mut R) -> Option<DVector<f64>> {
        if let Some((q, space)) = self.set.as_ref().filter(|(q, _)| q.is_bounded()) {
            for _ in 0..1000 {
                let x = q.sample(space, rng).ok()?;
                if domain.in_domain(&x) {
                    return Some(x);
                }
            }
            return None;
        }
        for _ in 0..1000 {
            let x = DVector::from_fn(self.dim(), |i, _| {
                if self.upper[i] > self.lower[i] {
                    rng.random_range(self.lower[i]..=self.upper[i])
                } else {
                    self.lower[i]
                }
            });
            let inside = self.set.as_ref().is_none_or(|(q, s)| q.contains(s, &x, 0.0));
            if inside && domain.in_domain(&x) {
                return Some(x);
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct GcbOptions {
    pub n_pairs: usize,
    pub t_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for GcbOptions {
    fn default() -> Self {
        Self { n_pairs: 200, t_grid: default_t_grid(), seed: 0 }
    }
}

/// Largest `s ∈ [0, cap]` with `x + s·u ∈ Q` (Q convex, x ∈ Q).
fn chord_extent(q: &FeasibleSet, space: &EuclideanSpace, x: &DVector<f64>, u: &DVector<f64>, cap: f64) -> f64 {
    if q.contains(space, &(x + u * cap), 0.0) {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if q.contains(space, &(x + u * mid), 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn sample_pair(
    region: &SamplingRegion,
    domain: &MetricKind,
    r: f64,
    rng: &mut ChaCha8Rng,
) -> Option<(DVector<f64>, DVector<f64>)> {
    for _ in 0..100 {
        // a quarter of the pairs pass through the center of a bounded set,
        // where fields with a kink at a symmetric solution are roughest
        let through_center = region.set.as_ref().is_some_and(|(q, _)| q.is_bounded()) && rng.random::<f64>() < 0.25;
        let x = match &region.set {
            Some((q, _)) if through_center => q.center(),
            _ => region.draw_base(domain, rng)?,
        };
        let u = match &region.set {
            // a direction between two points of Q also works for flat sets such as simplices
            Some((q, space)) if q.is_bounded() && matches!(domain, MetricKind::Normed { .. }) => {
                let z = q.sample(space, rng).ok()?;
                let len = domain.distance(&x, &z);
                if len <= 1e-12 {
                    continue;
                }
                (z - &x) / len
            }
            _ => domain.random_direction(region.dim(), rng),
        };
        match (&region.set, domain) {
            (Some((q, space)), MetricKind::Normed { .. }) => {
                // slide the pair along the chord through x so both ends stay in Q
                let ahead = chord_extent(q, space, &x, &u, r);
                let behind = chord_extent(q, space, &x, &(-&u), r);
                if ahead + behind < r * (1.0 - 1e-12) {
                    continue;
                }
                let room = (ahead + behind - r).max(0.0);
                let offset = if through_center {
                    (-rng.random::<f64>() * r).clamp(-behind, ahead - r)
                } else {
                    -behind + rng.random::<f64>() * room
                };
                let start = &x + &u * offset;
                let end = domain.shoot(&start, &u, r);
                if q.contains(space, &start, 0.0) && q.contains(space, &end, 0.0) {
                    return Some((start, end));
                }
            }
            (Some((q, space)), _) => {
                let y = domain.shoot(&x, &u, r);
                if q.contains(space, &y, 0.0) && domain.in_domain(&y) {
                    return Some((x, y));
                }
            }
            (None, _) => {
                let y = domain.shoot(&x, &u, r);
                if domain.in_domain(&y) {
                    return Some((x, y));
                }
            }
        }
    }
    None
}

/// Sampled lower estimate of `κ_A(r)` on `r_grid`.
///
/// Each pair uses its own RNG stream, and per-pair values are reduced by
/// `max`, so the result does not depend on thread scheduling.
pub fn gcb_estimate(
    map: Map<'_>,
    domain: &MetricKind,
    codomain: &MetricKind,
    region: &SamplingRegion,
    r_grid: &[f64],
    opts: &GcbOptions,
) -> Result<CurvatureProfile> {
    validate_grid(r_grid)?;
    if opts.n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be at least 1".into()));
    }
    if region.upper.len() != region.lower.len() {
        return Err(Error::DimensionMismatch { expected: region.lower.len(), got: region.upper.len() });
    }
    {
        let mut probe = ChaCha8Rng::seed_from_u64(opts.seed);
        if region.draw_base(domain, &mut probe).is_none() {
            return Err(Error::EmptySamplingRegion);
        }
    }
    let mut kappa = Vec::with_capacity(r_grid.len());
    let mut skipped = Vec::with_capacity(r_grid.len());
    for (ri, &r) in r_grid.iter().enumerate() {
        let results: Vec<Option<f64>> = (0..opts.n_pairs)
            .into_par_iter()
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream((ri * opts.n_pairs + j) as u64);
                sample_pair(region, domain, r, &mut rng)
                    .map(|(x, y)| pointwise_delta(map, &x, &y, domain, codomain, &opts.t_grid))
            })
            .collect();
        let miss = results.iter().filter(|v| v.is_none()).count();
        if miss == opts.n_pairs {
            return Err(Error::EmptySamplingRegion);
        }
        skipped.push(miss);
        kappa.push(results.into_iter().flatten().fold(0.0, f64::max));
    }
    let mut profile = CurvatureProfile::tabulated(r_grid.to_vec(), kappa, Provenance::Empirical)?;
    profile.sample_meta = Some(SampleMeta {
        n_pairs: opts.n_pairs,
        seed: opts.seed,
        skipped,
        domain: domain.name(),
        codomain: codomain.name(),
    });
    Ok(profile)
}
