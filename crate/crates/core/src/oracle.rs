//! Operator oracles `V: E → E*` with first and (optionally) second derivatives.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::space::EuclideanSpace;

/// Known regularity of an oracle. Used by benchmarks and diagnostics only;
/// the solver never reads it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleMetadata {
    /// Hölder data `(p, ν, H)`: `D^pV` is `ν`-Hölder with constant `H`.
    pub holder: Vec<(usize, f64, f64)>,
    pub x_star: Option<DVector<f64>>,
}

pub trait OperatorOracle: Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// Highest derivative order the oracle can evaluate (1 or 2).
    fn max_order(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Full Jacobian `DV(x)` as a matrix mapping primal to dual coordinates.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `DV(x)[h]`
    fn jvp(&self, x: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
        self.jacobian(x) * h
    }

    /// `D²V(x)[h₁, h₂]`, present iff `max_order() ≥ 2`.
    fn d2vp(&self, _x: &DVector<f64>, _h1: &DVector<f64>, _h2: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn is_monotone(&self) -> bool {
        false
    }

    fn metadata(&self) -> OracleMetadata {
        OracleMetadata::default()
    }

    fn name(&self) -> String;
}

/// `V(x) = Ax + b`.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
    monotone: bool,
}

impl AffineOperator {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        check_dim(matrix.nrows(), matrix.ncols())?;
        check_dim(matrix.nrows(), offset.len())?;
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().min();
        let scale = matrix.amax().max(1.0);
        Ok(Self { matrix, offset, monotone: min_eig >= -1e-12 * scale })
    }

    pub fn zero(n: usize) -> Self {
        Self { matrix: DMatrix::zeros(n, n), offset: DVector::zeros(n), monotone: true }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }
}

impl OperatorOracle for AffineOperator {
    fn dim(&self) -> usize {
        self.offset.len()
    }
    fn max_order(&self) -> usize {
        2
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }
    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.matrix.clone()
    }
    fn jvp(&self, _x: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
        &self.matrix * h
    }
    fn d2vp(&self, _x: &DVector<f64>, _h1: &DVector<f64>, _h2: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.dim()))
    }
    fn is_monotone(&self) -> bool {
        self.monotone
    }
    fn name(&self) -> String {
        "affine".into()
    }
}

/// Gradient of `f(x) = scale·‖x‖^{2+ν}/(2+ν)`: `V(x) = scale·‖x‖^ν Bx`.
#[derive(Debug, Clone)]
pub struct PowerPotential {
    space: EuclideanSpace,
    nu: f64,
    scale: f64,
}

impl PowerPotential {
    pub fn new(space: EuclideanSpace, nu: f64, scale: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::InvalidParameter(format!("power potential needs nu in (0, 1], got {nu}")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { space, nu, scale })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Hölder constant of `DV` with exponent `ν`.
    pub fn holder_constant(&self) -> f64 {
        self.scale * (1.0 + self.nu)
    }
}

impl OperatorOracle for PowerPotential {
    fn dim(&self) -> usize {
        self.space.dim()
    }
    fn max_order(&self) -> usize {
        1
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let norm = self.space.norm(x);
        if norm == 0.0 {
            return DVector::zeros(x.len());
        }
        self.space.apply(x) * (self.scale * norm.powf(self.nu))
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let norm = self.space.norm(x);
        if norm == 0.0 {
            return DMatrix::zeros(n, n);
        }
        let bx = self.space.apply(x);
        let mut jac = self.space.matrix() * (self.scale * norm.powf(self.nu));
        jac += &bx * bx.transpose() * (self.scale * self.nu * norm.powf(self.nu - 2.0));
        jac
    }
    fn jvp(&self, x: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
        let norm = self.space.norm(x);
        if norm == 0.0 {
            return DVector::zeros(x.len());
        }
        let bx = self.space.apply(x);
        self.space.apply(h) * (self.scale * norm.powf(self.nu))
            + &bx * (self.scale * self.nu * norm.powf(self.nu - 2.0) * bx.dot(h))
    }
    fn is_monotone(&self) -> bool {
        true
    }
    fn metadata(&self) -> OracleMetadata {
        OracleMetadata {
            holder: vec![(1, self.nu, self.holder_constant())],
            x_star: Some(DVector::zeros(self.dim())),
        }
    }
    fn name(&self) -> String {
        format!("power_potential(nu={}, scale={})", self.nu, self.scale)
    }
}

/// `V(x) = ‖x‖²Bx + Sx` with `S` skew-symmetric. Monotone, with constant
/// third derivative and `κ_{DV}(r) = 3r²`.
#[derive(Debug, Clone)]
pub struct CubicField {
    space: EuclideanSpace,
    skew: DMatrix<f64>,
}

impl CubicField {
    pub fn new(space: EuclideanSpace, skew: DMatrix<f64>) -> Result<Self> {
        let n = space.dim();
        check_dim(n, skew.nrows())?;
        check_dim(n, skew.ncols())?;
        if (&skew + skew.transpose()).amax() > 0.0 {
            return Err(Error::InvalidParameter("cubic field coupling must be skew-symmetric".into()));
        }
        Ok(Self { space, skew })
    }

    /// Skew coupling with `S[i][i+1] = strength`, `S[i+1][i] = −strength`.
    pub fn chain_skew(n: usize, strength: f64) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            s[(i, i + 1)] = strength;
            s[(i + 1, i)] = -strength;
        }
        s
    }
}

impl OperatorOracle for CubicField {
    fn dim(&self) -> usize {
        self.space.dim()
    }
    fn max_order(&self) -> usize {
        2
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let bx = self.space.apply(x);
        let sq = bx.dot(x);
        bx * sq + &self.skew * x
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let bx = self.space.apply(x);
        let sq = bx.dot(x);
        self.space.matrix() * sq + &bx * bx.transpose() * 2.0 + &self.skew
    }
    fn jvp(&self, x: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
        let bx = self.space.apply(x);
        let sq = bx.dot(x);
        self.space.apply(h) * sq + &bx * (2.0 * bx.dot(h)) + &self.skew * h
    }
    fn d2vp(&self, x: &DVector<f64>, h1: &DVector<f64>, h2: &DVector<f64>) -> Option<DVector<f64>> {
        let bx = self.space.apply(x);
        let bh1 = self.space.apply(h1);
        let bh2 = self.space.apply(h2);
        Some(&bh1 * (2.0 * bx.dot(h2)) + &bh2 * (2.0 * bx.dot(h1)) + &bx * (2.0 * bh1.dot(h2)))
    }
    fn is_monotone(&self) -> bool {
        true
    }
    fn metadata(&self) -> OracleMetadata {
        OracleMetadata { holder: vec![(2, 1.0, 6.0)], x_star: Some(DVector::zeros(self.dim())) }
    }
    fn name(&self) -> String {
        "cubic_field".into()
    }
}

/// Pointwise sum of oracles of equal dimension.
#[derive(Debug, Clone)]
pub struct SumOperator {
    parts: Vec<Arc<dyn OperatorOracle>>,
}

impl SumOperator {
    pub fn new(parts: Vec<Arc<dyn OperatorOracle>>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("sum of zero operators".into()))?;
        for p in &parts {
            check_dim(first.dim(), p.dim())?;
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[Arc<dyn OperatorOracle>] {
        &self.parts
    }
}

impl OperatorOracle for SumOperator {
    fn dim(&self) -> usize {
        self.parts[0].dim()
    }
    fn max_order(&self) -> usize {
        self.parts.iter().map(|p| p.max_order()).min().unwrap_or(1)
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = self.parts[0].eval(x);
        for p in &self.parts[1..] {
            out += p.eval(x);
        }
        out
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.parts[0].jacobian(x);
        for p in &self.parts[1..] {
            out += p.jacobian(x);
        }
        out
    }
    fn jvp(&self, x: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
        let mut out = self.parts[0].jvp(x, h);
        for p in &self.parts[1..] {
            out += p.jvp(x, h);
        }
        out
    }
    fn d2vp(&self, x: &DVector<f64>, h1: &DVector<f64>, h2: &DVector<f64>) -> Option<DVector<f64>> {
        let mut out = self.parts[0].d2vp(x, h1, h2)?;
        for p in &self.parts[1..] {
            out += p.d2vp(x, h1, h2)?;
        }
        Some(out)
    }
    fn is_monotone(&self) -> bool {
        self.parts.iter().all(|p| p.is_monotone())
    }
    fn metadata(&self) -> OracleMetadata {
        let mut meta = OracleMetadata::default();
        for p in &self.parts {
            meta.holder.extend(p.metadata().holder);
        }
        meta
    }
    fn name(&self) -> String {
        let names: Vec<String> = self.parts.iter().map(|p| p.name()).collect();
        format!("sum[{}]", names.join(" + "))
    }
}

/// Central finite-difference check of `jvp`. Returns the relative error
/// `‖FD − jvp‖_* / max(‖jvp‖_*, ‖V(x)‖_* · ε, tiny)`.
pub fn finite_difference_error(
    oracle: &dyn OperatorOracle,
    space: &EuclideanSpace,
    x: &DVector<f64>,
    h: &DVector<f64>,
) -> f64 {
    let eps = 1e-6 * space.norm(x).max(1.0);
    let plus = oracle.eval(&(x + h * eps));
    let minus = oracle.eval(&(x - h * eps));
    let fd = (plus - minus) / (2.0 * eps);
    let exact = oracle.jvp(x, h);
    let denom = space.dual_norm(&exact).max(1e-8);
    space.dual_norm(&(fd - exact)) / denom
}
