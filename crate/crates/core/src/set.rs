//! Feasible sets: projection, linear minimization, diameter and sampling.
//!
//! Projections are taken in the metric of the ambient [`EuclideanSpace`].
//! Balls admit a closed form for any metric; boxes, simplices and products
//! need a separable (diagonal) metric.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::space::EuclideanSpace;

/// Absolute tolerance used by the closed-form projections and membership tests.
pub const TOL_PROJ: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    /// `ℝⁿ`. The optional radius bounds the region used by certificates and
    /// sampling; projection ignores it.
    WholeSpace { n: usize, radius: Option<f64> },
    Box { lower: DVector<f64>, upper: DVector<f64> },
    Ball { center: DVector<f64>, radius: f64 },
    /// Standard simplex `{x ≥ 0, Σxᵢ = 1}`.
    Simplex { n: usize },
    /// Cartesian product, blocks laid out consecutively.
    Product(Vec<FeasibleSet>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    kind: SetKind,
}

impl FeasibleSet {
    pub fn whole_space(n: usize, radius: Option<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if let Some(r) = radius {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidParameter(format!("radius bound must be positive, got {r}")));
            }
        }
        Ok(Self { kind: SetKind::WholeSpace { n, radius } })
    }

    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidParameter("box bounds must satisfy lower ≤ upper".into()));
        }
        Ok(Self { kind: SetKind::Box { lower, upper } })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("ball radius must be nonnegative, got {radius}")));
        }
        Ok(Self { kind: SetKind::Ball { center, radius } })
    }

    pub fn simplex(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { kind: SetKind::Simplex { n } })
    }

    pub fn product(blocks: Vec<FeasibleSet>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidParameter("product of zero sets".into()));
        }
        Ok(Self { kind: SetKind::Product(blocks) })
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SetKind::WholeSpace { n, .. } | SetKind::Simplex { n } => *n,
            SetKind::Box { lower, .. } => lower.len(),
            SetKind::Ball { center, .. } => center.len(),
            SetKind::Product(blocks) => blocks.iter().map(|b| b.dim()).sum(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        match &self.kind {
            SetKind::WholeSpace { radius, .. } => radius.is_some(),
            SetKind::Product(blocks) => blocks.iter().all(|b| b.is_bounded()),
            _ => true,
        }
    }

    /// True when projection is the identity map.
    pub fn is_whole_space(&self) -> bool {
        match &self.kind {
            SetKind::WholeSpace { .. } => true,
            SetKind::Product(blocks) => blocks.iter().all(|b| b.is_whole_space()),
            _ => false,
        }
    }

    pub fn short_name(&self) -> String {
        match &self.kind {
            SetKind::WholeSpace { radius: Some(r), .. } => format!("whole(R={r})"),
            SetKind::WholeSpace { radius: None, .. } => "whole".into(),
            SetKind::Box { .. } => "box".into(),
            SetKind::Ball { radius, .. } => format!("ball(R={radius})"),
            SetKind::Simplex { .. } => "simplex".into(),
            SetKind::Product(blocks) => {
                let names: Vec<String> = blocks.iter().map(|b| b.short_name()).collect();
                names.join("x")
            }
        }
    }

    fn separable_weights(&self, space: &EuclideanSpace, what: &str) -> Result<DVector<f64>> {
        space
            .diagonal_weights()
            .ok_or_else(|| Error::Unsupported(format!("{what} requires a diagonal metric")))
    }

    /// Metric projection onto the set.
    pub fn project(&self, space: &EuclideanSpace, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), y.len())?;
        check_dim(space.dim(), y.len())?;
        match &self.kind {
            SetKind::WholeSpace { .. } => Ok(y.clone()),
            SetKind::Box { lower, upper } => {
                self.separable_weights(space, "box projection")?;
                Ok(DVector::from_fn(y.len(), |i, _| y[i].clamp(lower[i], upper[i])))
            }
            SetKind::Ball { center, radius } => {
                let offset = y - center;
                let dist = space.norm(&offset);
                if dist <= *radius {
                    Ok(y.clone())
                } else {
                    Ok(center + offset * (*radius / dist))
                }
            }
            SetKind::Simplex { .. } => {
                let w = self.separable_weights(space, "simplex projection")?;
                Ok(project_weighted_simplex(y, &w))
            }
            SetKind::Product(blocks) => {
                let mut out = DVector::zeros(y.len());
                let mut start = 0;
                for block in blocks {
                    let len = block.dim();
                    let sub = space.block(start, len)?;
                    let p = block.project(&sub, &y.rows(start, len).into_owned())?;
                    out.rows_mut(start, len).copy_from(&p);
                    start += len;
                }
                Ok(out)
            }
        }
    }

    /// A minimizer of `⟨s, x⟩` over the set. Ties go to the lowest index for
    /// simplex vertices and to the lower bound for box coordinates; a zero
    /// functional on a ball returns the lexicographically smallest point.
    pub fn lmo(&self, space: &EuclideanSpace, s: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), s.len())?;
        match &self.kind {
            SetKind::WholeSpace { n, radius } => match radius {
                Some(r) => FeasibleSet::ball(DVector::zeros(*n), *r)?.lmo(space, s),
                None => Err(Error::UnboundedLmo),
            },
            SetKind::Box { lower, upper } => Ok(DVector::from_fn(s.len(), |i, _| {
                if s[i] < 0.0 {
                    upper[i]
                } else {
                    lower[i]
                }
            })),
            SetKind::Ball { center, radius } => {
                let dir = if s.iter().all(|v| *v == 0.0) {
                    let mut e = DVector::zeros(s.len());
                    e[0] = 1.0;
                    e
                } else {
                    s.clone()
                };
                let dn = space.dual_norm(&dir);
                Ok(center - space.solve(&dir) * (*radius / dn))
            }
            SetKind::Simplex { n } => {
                let mut best = 0;
                for i in 1..*n {
                    if s[i] < s[best] {
                        best = i;
                    }
                }
                let mut e = DVector::zeros(*n);
                e[best] = 1.0;
                Ok(e)
            }
            SetKind::Product(blocks) => {
                let mut out = DVector::zeros(s.len());
                let mut start = 0;
                for block in blocks {
                    let len = block.dim();
                    let sub = space.block(start, len)?;
                    let v = block.lmo(&sub, &s.rows(start, len).into_owned())?;
                    out.rows_mut(start, len).copy_from(&v);
                    start += len;
                }
                Ok(out)
            }
        }
    }

    /// Diameter under `‖·‖`. `None` for unbounded sets.
    pub fn diameter(&self, space: &EuclideanSpace) -> Option<f64> {
        match &self.kind {
            SetKind::WholeSpace { radius, .. } => radius.map(|r| 2.0 * r),
            SetKind::Box { lower, upper } => Some(space.norm(&(upper - lower))),
            SetKind::Ball { radius, .. } => Some(2.0 * radius),
            SetKind::Simplex { n } => {
                let w = space.diagonal_weights()?;
                let mut best: f64 = 0.0;
                for i in 0..*n {
                    for j in (i + 1)..*n {
                        best = best.max((w[i] + w[j]).sqrt());
                    }
                }
                Some(best)
            }
            SetKind::Product(blocks) => {
                let mut total = 0.0;
                let mut start = 0;
                for block in blocks {
                    let len = block.dim();
                    let sub = space.block(start, len).ok()?;
                    total += block.diameter(&sub)?.powi(2);
                    start += len;
                }
                Some(total.sqrt())
            }
        }
    }

    pub fn contains(&self, space: &EuclideanSpace, x: &DVector<f64>, tol: f64) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.kind {
            SetKind::WholeSpace { .. } => true,
            SetKind::Box { lower, upper } => {
                (0..x.len()).all(|i| x[i] >= lower[i] - tol && x[i] <= upper[i] + tol)
            }
            SetKind::Ball { center, radius } => space.norm(&(x - center)) <= radius + tol,
            SetKind::Simplex { .. } => x.iter().all(|v| *v >= -tol) && (x.sum() - 1.0).abs() <= tol * x.len() as f64,
            SetKind::Product(blocks) => {
                let mut start = 0;
                for block in blocks {
                    let len = block.dim();
                    let Ok(sub) = space.block(start, len) else { return false };
                    if !block.contains(&sub, &x.rows(start, len).into_owned(), tol) {
                        return false;
                    }
                    start += len;
                }
                true
            }
        }
    }

    /// A canonical interior-ish point: box midpoint, ball center, simplex barycenter.
    pub fn center(&self) -> DVector<f64> {
        match &self.kind {
            SetKind::WholeSpace { n, .. } => DVector::zeros(*n),
            SetKind::Box { lower, upper } => (lower + upper) * 0.5,
            SetKind::Ball { center, .. } => center.clone(),
            SetKind::Simplex { n } => DVector::from_element(*n, 1.0 / *n as f64),
            SetKind::Product(blocks) => {
                let parts: Vec<f64> = blocks.iter().flat_map(|b| b.center().iter().copied().collect::<Vec<_>>()).collect();
                DVector::from_vec(parts)
            }
        }
    }

    /// Uniform sample from the set (uniform in the metric ball for balls and
    /// radius-bounded whole spaces, flat Dirichlet on simplices).
    pub fn sample<R: Rng + ?Sized>(&self, space: &EuclideanSpace, rng: &mut R) -> Result<DVector<f64>> {
        match &self.kind {
            SetKind::WholeSpace { n, radius } => match radius {
                Some(r) => FeasibleSet::ball(DVector::zeros(*n), *r)?.sample(space, rng),
                None => Err(Error::UnboundedSet("cannot sample an unbounded whole space")),
            },
            SetKind::Box { lower, upper } => Ok(DVector::from_fn(lower.len(), |i, _| {
                if upper[i] > lower[i] {
                    rng.random_range(lower[i]..=upper[i])
                } else {
                    lower[i]
                }
            })),
            SetKind::Ball { center, radius } => {
                let n = center.len();
                let u = space.random_unit(rng);
                let scale = radius * rng.random::<f64>().powf(1.0 / n as f64);
                Ok(center + u * scale)
            }
            SetKind::Simplex { n } => {
                let e = DVector::from_fn(*n, |_, _| {
                    let u: f64 = rng.random();
                    -(1.0 - u).ln()
                });
                let total = e.sum();
                if total > 0.0 {
                    Ok(e / total)
                } else {
                    Ok(self.center())
                }
            }
            SetKind::Product(blocks) => {
                let mut parts = Vec::with_capacity(self.dim());
                let mut start = 0;
                for block in blocks {
                    let len = block.dim();
                    let sub = space.block(start, len)?;
                    parts.extend(block.sample(&sub, rng)?.iter().copied());
                    start += len;
                }
                Ok(DVector::from_vec(parts))
            }
        }
    }

    /// Standard normal draw, handy for exterior points in tests.
    pub fn gaussian<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
    }
}

/// Projection onto the simplex under `‖x‖² = Σ wᵢxᵢ²`:
/// `xᵢ = max(0, yᵢ − λ/wᵢ)` with `λ` fixed by `Σxᵢ = 1`.
fn project_weighted_simplex(y: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    // breakpoints λ = wᵢyᵢ, descending
    order.sort_by(|&a, &b| (w[b] * y[b]).total_cmp(&(w[a] * y[a])).then(a.cmp(&b)));
    let mut sum_y = 0.0;
    let mut sum_inv_w = 0.0;
    let mut lambda = 0.0;
    for (k, &i) in order.iter().enumerate() {
        sum_y += y[i];
        sum_inv_w += 1.0 / w[i];
        let candidate = (sum_y - 1.0) / sum_inv_w;
        let next_break = order.get(k + 1).map(|&j| w[j] * y[j]);
        lambda = candidate;
        if next_break.is_none_or(|b| candidate >= b) {
            break;
        }
    }
    DVector::from_fn(n, |i, _| (y[i] - lambda / w[i]).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn projection_examples() {
        let id = EuclideanSpace::identity(2).unwrap();
        let ball = FeasibleSet::ball(DVector::zeros(2), 1.0).unwrap();
        assert_eq!(ball.project(&id, &v(&[2.0, 0.0])).unwrap(), v(&[1.0, 0.0]));
        let bx = FeasibleSet::boxed(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        assert_eq!(bx.project(&id, &v(&[-1.0, 0.5])).unwrap(), v(&[0.0, 0.5]));
        let simplex = FeasibleSet::simplex(2).unwrap();
        let p = simplex.project(&id, &v(&[0.8, 0.8])).unwrap();
        assert!((p - v(&[0.5, 0.5])).norm() < 1e-15);
    }

    #[test]
    fn lmo_examples() {
        let id3 = EuclideanSpace::identity(3).unwrap();
        let simplex = FeasibleSet::simplex(3).unwrap();
        assert_eq!(simplex.lmo(&id3, &v(&[3.0, 1.0, 2.0])).unwrap(), v(&[0.0, 1.0, 0.0]));
        let id2 = EuclideanSpace::identity(2).unwrap();
        let ball = FeasibleSet::ball(DVector::zeros(2), 2.0).unwrap();
        let s = v(&[3.0, 4.0]);
        assert!((ball.lmo(&id2, &s).unwrap() - (-2.0 / 5.0) * &s).norm() < 1e-15);
        let bx = FeasibleSet::boxed(v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap();
        assert_eq!(bx.lmo(&id2, &v(&[1.0, -2.0])).unwrap(), v(&[-1.0, 1.0]));
        let whole = FeasibleSet::whole_space(2, None).unwrap();
        assert_eq!(whole.lmo(&id2, &s).unwrap_err(), Error::UnboundedLmo);
        assert_eq!(whole.project(&id2, &s).unwrap(), s);
    }

    #[test]
    fn lmo_ties() {
        let id3 = EuclideanSpace::identity(3).unwrap();
        let simplex = FeasibleSet::simplex(3).unwrap();
        assert_eq!(simplex.lmo(&id3, &v(&[1.0, 0.0, 0.0])).unwrap(), v(&[0.0, 1.0, 0.0]));
        assert_eq!(simplex.lmo(&id3, &v(&[0.0, 0.0, 0.0])).unwrap(), v(&[1.0, 0.0, 0.0]));
        let bx = FeasibleSet::boxed(v(&[-1.0, 2.0, 0.0]), v(&[1.0, 3.0, 5.0])).unwrap();
        assert_eq!(bx.lmo(&id3, &v(&[0.0, 0.0, 0.0])).unwrap(), v(&[-1.0, 2.0, 0.0]));
    }

    #[test]
    fn weighted_simplex_projection_is_stationary() {
        let w = v(&[1.0, 4.0, 0.5, 2.0]);
        let space = EuclideanSpace::diagonal(w.clone()).unwrap();
        let simplex = FeasibleSet::simplex(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let y = FeasibleSet::gaussian(4, 2.0, &mut rng);
            let p = simplex.project(&space, &y).unwrap();
            assert!(simplex.contains(&space, &p, 1e-12));
            for _ in 0..20 {
                let z = simplex.sample(&space, &mut rng).unwrap();
                let vi = space.apply(&(&y - &p)).dot(&(z - &p));
                assert!(vi <= 1e-12, "variational inequality violated by {vi}");
            }
        }
    }

    #[test]
    fn diameter_of_simplex_under_weights() {
        let space = EuclideanSpace::diagonal(v(&[1.0, 4.0, 2.0])).unwrap();
        let d = FeasibleSet::simplex(3).unwrap().diameter(&space).unwrap();
        assert!((d - 6f64.sqrt()).abs() < 1e-15);
        let id = EuclideanSpace::identity(1).unwrap();
        assert_eq!(FeasibleSet::simplex(1).unwrap().diameter(&id), Some(0.0));
    }

    #[test]
    fn product_blocks_act_independently() {
        let id = EuclideanSpace::identity(4).unwrap();
        let q = FeasibleSet::product(vec![FeasibleSet::simplex(2).unwrap(), FeasibleSet::simplex(2).unwrap()]).unwrap();
        let p = q.project(&id, &v(&[0.8, 0.8, 2.0, 0.0])).unwrap();
        assert!((p - v(&[0.5, 0.5, 1.0, 0.0])).norm() < 1e-15);
        assert_eq!(q.lmo(&id, &v(&[1.0, 0.0, -1.0, 2.0])).unwrap(), v(&[0.0, 1.0, 1.0, 0.0]));
        assert!((q.diameter(&id).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dense_metric_rejected_for_polytopes() {
        let b = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let space = EuclideanSpace::dense(b).unwrap();
        let bx = FeasibleSet::boxed(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        assert!(matches!(bx.project(&space, &v(&[2.0, 2.0])), Err(Error::Unsupported(_))));
        let ball = FeasibleSet::ball(DVector::zeros(2), 1.0).unwrap();
        let p = ball.project(&space, &v(&[2.0, -1.0])).unwrap();
        assert!((space.norm(&p) - 1.0).abs() < 1e-12);
    }
}
