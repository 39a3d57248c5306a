//! Geodesic metric spaces used by the curvature estimators.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::space::EuclideanSpace;

/// Which norm of a [`EuclideanSpace`] a normed metric uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Primal,
    Dual,
    /// Points are `n×n` matrices stored column-major, measured as maps from
    /// the primal to the dual space.
    Operator,
}

#[derive(Debug, Clone)]
pub enum MetricKind {
    Normed { space: EuclideanSpace, norm: NormKind },
    /// Positive orthant with `d(x, y) = ‖ln y − ln x‖₂` and geodesics
    /// `γ(t)ᵢ = xᵢ^{1−t} yᵢ^t`.
    LogOrthant,
}

impl MetricKind {
    pub fn primal(space: &EuclideanSpace) -> Self {
        Self::Normed { space: space.clone(), norm: NormKind::Primal }
    }

    pub fn dual(space: &EuclideanSpace) -> Self {
        Self::Normed { space: space.clone(), norm: NormKind::Dual }
    }

    pub fn operator(space: &EuclideanSpace) -> Self {
        Self::Normed { space: space.clone(), norm: NormKind::Operator }
    }

    /// Absolute value on the real line.
    pub fn scalar() -> Self {
        Self::primal(&EuclideanSpace::identity(1).expect("positive dimension"))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Normed { norm: NormKind::Primal, .. } => "normed-primal",
            Self::Normed { norm: NormKind::Dual, .. } => "normed-dual",
            Self::Normed { norm: NormKind::Operator, .. } => "normed-operator",
            Self::LogOrthant => "log-orthant",
        }
    }

    pub fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self {
            Self::Normed { space, norm } => {
                let diff = b - a;
                match norm {
                    NormKind::Primal => space.norm(&diff),
                    NormKind::Dual => space.dual_norm(&diff),
                    NormKind::Operator => {
                        let n = space.dim();
                        space.operator_norm(&DMatrix::from_column_slice(n, n, diff.as_slice()))
                    }
                }
            }
            Self::LogOrthant => a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (y.ln() - x.ln()).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn geodesic(&self, a: &DVector<f64>, b: &DVector<f64>, t: f64) -> DVector<f64> {
        match self {
            Self::Normed { .. } => a * (1.0 - t) + b * t,
            Self::LogOrthant => a.zip_map(b, |x, y| x.powf(1.0 - t) * y.powf(t)),
        }
    }

    pub fn in_domain(&self, x: &DVector<f64>) -> bool {
        match self {
            Self::Normed { .. } => x.iter().all(|v| v.is_finite()),
            Self::LogOrthant => x.iter().all(|v| *v > 0.0 && v.is_finite()),
        }
    }

    /// Unit-speed direction for [`shoot`](Self::shoot), uniform on the sphere.
    pub fn random_direction<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> DVector<f64> {
        match self {
            Self::Normed { space, norm: NormKind::Primal } => space.random_unit(rng),
            _ => loop {
                let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let len = z.norm();
                if len > 1e-12 {
                    let z = z / len;
                    // renormalize in the metric so that shooting travels exactly r
                    let probe = self.shoot(&DVector::from_element(dim, 1.0), &z, 1.0);
                    let d = self.distance(&DVector::from_element(dim, 1.0), &probe);
                    break if d > 0.0 { z / d } else { z };
                }
            },
        }
    }

    /// Point at distance `r` from `x` along the geodesic with initial
    /// direction `dir` (which must have unit speed).
    pub fn shoot(&self, x: &DVector<f64>, dir: &DVector<f64>, r: f64) -> DVector<f64> {
        match self {
            Self::Normed { .. } => x + dir * r,
            Self::LogOrthant => x.zip_map(dir, |xi, ui| xi * (r * ui).exp()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn positive(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(0.1..10.0))
    }

    #[test]
    fn log_orthant_geodesic_identity() {
        let metric = MetricKind::LogOrthant;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let x = positive(&mut rng, 4);
            let y = positive(&mut rng, 4);
            assert!((metric.geodesic(&x, &y, 0.0) - &x).norm() <= 1e-12 * x.norm());
            assert!((metric.geodesic(&x, &y, 1.0) - &y).norm() <= 1e-12 * y.norm());
            let d = metric.distance(&x, &y);
            let s: f64 = rng.random();
            let t: f64 = rng.random();
            let gs = metric.geodesic(&x, &y, s);
            let gt = metric.geodesic(&x, &y, t);
            assert!((metric.distance(&gs, &gt) - (s - t).abs() * d).abs() <= 1e-10 * (1.0 + d));
        }
    }

    #[test]
    fn shooting_travels_requested_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let space = EuclideanSpace::diagonal(DVector::from_vec(vec![1.0, 3.0, 0.2])).unwrap();
        for metric in [MetricKind::LogOrthant, MetricKind::primal(&space), MetricKind::dual(&space)] {
            for _ in 0..50 {
                let x = positive(&mut rng, 3);
                let u = metric.random_direction(3, &mut rng);
                let y = metric.shoot(&x, &u, 0.7);
                assert!((metric.distance(&x, &y) - 0.7).abs() < 1e-12, "{}", metric.name());
            }
        }
    }

    #[test]
    fn normed_geodesic_is_segment() {
        let metric = MetricKind::scalar();
        let a = DVector::from_element(1, -2.0);
        let b = DVector::from_element(1, 4.0);
        assert_eq!(metric.geodesic(&a, &b, 0.25)[0], -0.5);
        assert_eq!(metric.distance(&a, &b), 6.0);
    }
}
