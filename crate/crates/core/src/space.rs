//! Finite-dimensional spaces equipped with a positive-definite metric operator.
//!
//! The primal norm is `‖x‖ = ⟨Bx, x⟩^½` and the dual norm is `‖s‖_* = ⟨s, B⁻¹s⟩^½`.
//! Internally every metric is handled through a factor `B = L Lᵀ`, which lets
//! the norms, random directions and operator norms share one code path.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone)]
pub enum Metric {
    Identity,
    /// Positive diagonal entries of `B`.
    Diagonal(DVector<f64>),
    Dense {
        matrix: DMatrix<f64>,
        factor: Cholesky<f64, Dyn>,
    },
}

#[derive(Debug, Clone)]
pub struct EuclideanSpace {
    n: usize,
    metric: Metric,
}

impl EuclideanSpace {
    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { n, metric: Metric::Identity })
    }

    pub fn diagonal(weights: DVector<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { n: weights.len(), metric: Metric::Diagonal(weights) })
    }

    /// Dense metric. Symmetry is checked exactly on the stored entries and
    /// positive definiteness by attempting a Cholesky factorization.
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        check_dim(n, matrix.ncols())?;
        for i in 0..n {
            for j in 0..i {
                if matrix[(i, j)] != matrix[(j, i)] {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        let factor = Cholesky::new(matrix.clone()).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { n, metric: Metric::Dense { matrix, factor } })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn is_diagonal(&self) -> bool {
        !matches!(self.metric, Metric::Dense { .. })
    }

    /// Diagonal of `B` when the metric is separable.
    pub fn diagonal_weights(&self) -> Option<DVector<f64>> {
        match &self.metric {
            Metric::Identity => Some(DVector::from_element(self.n, 1.0)),
            Metric::Diagonal(w) => Some(w.clone()),
            Metric::Dense { .. } => None,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.metric {
            Metric::Identity => DMatrix::identity(self.n, self.n),
            Metric::Diagonal(w) => DMatrix::from_diagonal(w),
            Metric::Dense { matrix, .. } => matrix.clone(),
        }
    }

    /// Restriction of a separable metric to coordinates `start..start + len`.
    pub fn block(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: start + len });
        }
        match &self.metric {
            Metric::Identity => Self::identity(len),
            Metric::Diagonal(w) => Self::diagonal(w.rows(start, len).into_owned()),
            Metric::Dense { .. } => Err(Error::Unsupported(
                "product sets require a diagonal metric".into(),
            )),
        }
    }

    /// `Bx`
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.metric {
            Metric::Identity => x.clone(),
            Metric::Diagonal(w) => x.component_mul(w),
            Metric::Dense { matrix, .. } => matrix * x,
        }
    }

    /// `B⁻¹s`
    pub fn solve(&self, s: &DVector<f64>) -> DVector<f64> {
        match &self.metric {
            Metric::Identity => s.clone(),
            Metric::Diagonal(w) => s.component_div(w),
            Metric::Dense { factor, .. } => factor.solve(s),
        }
    }

    /// `Lᵀx`, so that `‖x‖` is the Euclidean length of the result.
    pub fn whiten_primal(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.metric {
            Metric::Identity => x.clone(),
            Metric::Diagonal(w) => x.zip_map(w, |a, b| a * b.sqrt()),
            Metric::Dense { factor, .. } => factor.l().transpose() * x,
        }
    }

    /// `L⁻¹s`, so that `‖s‖_*` is the Euclidean length of the result.
    pub fn whiten_dual(&self, s: &DVector<f64>) -> DVector<f64> {
        match &self.metric {
            Metric::Identity => s.clone(),
            Metric::Diagonal(w) => s.zip_map(w, |a, b| a / b.sqrt()),
            Metric::Dense { factor, .. } => factor
                .l()
                .solve_lower_triangular(s)
                .expect("Cholesky factor has a positive diagonal"),
        }
    }

    /// `L⁻ᵀz`, the inverse of [`whiten_primal`](Self::whiten_primal).
    pub fn unwhiten_primal(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.metric {
            Metric::Identity => z.clone(),
            Metric::Diagonal(w) => z.zip_map(w, |a, b| a / b.sqrt()),
            Metric::Dense { factor, .. } => factor
                .l()
                .transpose()
                .solve_upper_triangular(z)
                .expect("Cholesky factor has a positive diagonal"),
        }
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        match &self.metric {
            Metric::Identity => x.norm(),
            Metric::Diagonal(w) => x.iter().zip(w.iter()).map(|(a, b)| b * a * a).sum::<f64>().sqrt(),
            Metric::Dense { matrix, .. } => x.dot(&(matrix * x)).max(0.0).sqrt(),
        }
    }

    pub fn dual_norm(&self, s: &DVector<f64>) -> f64 {
        match &self.metric {
            Metric::Identity => s.norm(),
            Metric::Diagonal(w) => s.iter().zip(w.iter()).map(|(a, b)| a * a / b).sum::<f64>().sqrt(),
            Metric::Dense { .. } => self.whiten_dual(s).norm(),
        }
    }

    /// Checked primal norm.
    pub fn norm_primal(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.n, x.len())?;
        Ok(self.norm(x))
    }

    /// Checked dual norm.
    pub fn norm_dual(&self, s: &DVector<f64>) -> Result<f64> {
        check_dim(self.n, s.len())?;
        Ok(self.dual_norm(s))
    }

    pub fn distance(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.norm(&(y - x))
    }

    /// Norm of a linear map from the primal to the dual space,
    /// `sup ‖Jh‖_* / ‖h‖ = ‖L⁻¹ J L⁻ᵀ‖₂`.
    pub fn operator_norm(&self, jac: &DMatrix<f64>) -> f64 {
        let whitened = match &self.metric {
            Metric::Identity => jac.clone(),
            Metric::Diagonal(w) => {
                let scale = w.map(|v| 1.0 / v.sqrt());
                DMatrix::from_fn(self.n, self.n, |i, j| jac[(i, j)] * scale[i] * scale[j])
            }
            Metric::Dense { factor, .. } => {
                let l = factor.l();
                let left = l.solve_lower_triangular(jac).expect("positive diagonal");
                let right = l
                    .solve_lower_triangular(&left.transpose())
                    .expect("positive diagonal");
                right.transpose()
            }
        };
        spectral_norm(&whitened)
    }

    /// Uniformly distributed direction on the unit sphere of `‖·‖`.
    pub fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        loop {
            let z = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let len = z.norm();
            if len > 1e-12 {
                return self.unwhiten_primal(&(z / len));
            }
        }
    }
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_example() -> EuclideanSpace {
        EuclideanSpace::dense(DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]))
            .unwrap()
    }

    #[test]
    fn norms_small_cases() {
        let id = EuclideanSpace::identity(2).unwrap();
        assert_eq!(id.norm_primal(&DVector::from_vec(vec![3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(id.norm_dual(&DVector::from_vec(vec![3.0, 4.0])).unwrap(), 5.0);
        let diag = EuclideanSpace::diagonal(DVector::from_vec(vec![4.0, 1.0])).unwrap();
        assert_eq!(diag.norm_primal(&DVector::from_vec(vec![1.0, 0.0])).unwrap(), 2.0);
        assert_eq!(diag.norm_dual(&DVector::from_vec(vec![2.0, 0.0])).unwrap(), 1.0);
        assert_eq!(diag.norm_primal(&DVector::zeros(2)).unwrap(), 0.0);
        assert!(matches!(
            diag.norm_primal(&DVector::zeros(3)),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn construction_rejects_bad_metrics() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert_eq!(EuclideanSpace::dense(asym).unwrap_err(), Error::NotSymmetric);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(EuclideanSpace::dense(indefinite).unwrap_err(), Error::NotPositiveDefinite);
        assert!(EuclideanSpace::diagonal(DVector::from_vec(vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn whitening_round_trips() {
        let space = dense_example();
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let back = space.unwhiten_primal(&space.whiten_primal(&x));
        assert!((back - &x).norm() < 1e-12);
        assert!((space.whiten_primal(&x).norm() - space.norm(&x)).abs() < 1e-12);
        let s = DVector::from_vec(vec![1.0, 2.0, -0.5]);
        let expected = s.dot(&space.solve(&s)).sqrt();
        assert!((space.dual_norm(&s) - expected).abs() < 1e-12);
    }

    #[test]
    fn operator_norm_of_metric_itself_is_one() {
        let space = dense_example();
        assert!((space.operator_norm(&space.matrix()) - 1.0).abs() < 1e-10);
        let diag = EuclideanSpace::diagonal(DVector::from_vec(vec![2.0, 5.0])).unwrap();
        assert!((diag.operator_norm(&diag.matrix()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_units_have_unit_norm_and_cauchy_holds() {
        let space = dense_example();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let u = space.random_unit(&mut rng);
            assert!((space.norm(&u) - 1.0).abs() < 1e-12);
            let s = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            assert!(s.dot(&u).abs() <= space.dual_norm(&s) * space.norm(&u) + 1e-12);
        }
    }
}
