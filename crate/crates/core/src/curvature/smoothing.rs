//! Integral smoothings `σ̂_q` of a curvature profile, their derivatives and inverses.
//!
//! `σ̂_0 = κ` and, for `q ≥ 1`, `σ̂_q(r) = 1/(q−1)! ∫₀^r (r−t)^{q−1} κ(t) dt`.
//! The derivative is `σ̂_1′ = κ` and `σ̂_q′(r) = 1/(q−2)! ∫₀^r (r−t)^{q−2} κ(t) dt`.

use super::profile::CurvatureProfile;
use crate::error::{Error, Result};

/// Initial node count of the composite Simpson rule.
pub const DEFAULT_QUADRATURE_NODES: usize = 129;
const QUADRATURE_RTOL: f64 = 1e-10;
const MAX_INTERVALS: usize = 1 << 22;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Composite Simpson over `[0, r]`, with the mesh aligned to `breaks` so that
/// piecewise-polynomial integrands are integrated segment by segment.
fn composite_simpson(f: &dyn Fn(f64) -> f64, r: f64, breaks: &[f64], nodes: usize) -> f64 {
    let mut knots = Vec::with_capacity(breaks.len() + 2);
    knots.push(0.0);
    knots.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < r));
    knots.push(r);
    let base_intervals = (nodes.max(3) - 1).max(2);
    let mut per_segment: Vec<usize> = knots
        .windows(2)
        .map(|w| {
            let share = ((w[1] - w[0]) / r * base_intervals as f64).ceil() as usize;
            let k = share.max(2);
            k + (k % 2)
        })
        .collect();

    let eval = |per_segment: &[usize]| -> f64 {
        let mut total = 0.0;
        for (w, &k) in knots.windows(2).zip(per_segment) {
            let (a, b) = (w[0], w[1]);
            let h = (b - a) / k as f64;
            let mut acc = f(a) + f(b);
            for i in 1..k {
                let t = a + h * i as f64;
                acc += if i % 2 == 1 { 4.0 * f(t) } else { 2.0 * f(t) };
            }
            total += acc * h / 3.0;
        }
        total
    };

    let mut prev = eval(&per_segment);
    loop {
        if per_segment.iter().sum::<usize>() * 2 > MAX_INTERVALS {
            return prev;
        }
        for k in per_segment.iter_mut() {
            *k *= 2;
        }
        let next = eval(&per_segment);
        if (next - prev).abs() <= QUADRATURE_RTOL * next.abs() || next.abs() < 1e-300 {
            return next;
        }
        prev = next;
    }
}

/// `1/(m−1)! ∫₀^r (r−t)^{m−1} κ(t) dt` for `m ≥ 1`.
fn smoothing_integral(profile: &CurvatureProfile, m: usize, r: f64, nodes: usize) -> f64 {
    debug_assert!(m >= 1);
    if r <= 0.0 {
        return 0.0;
    }
    let scale = 1.0 / factorial(m - 1);
    let f = |t: f64| (r - t).max(0.0).powi(m as i32 - 1) * profile.kappa_unchecked(t);
    scale * composite_simpson(&f, r, &profile.breakpoints_below(r), nodes)
}

pub fn sigma_hat(q: usize, profile: &CurvatureProfile, r: f64) -> Result<f64> {
    sigma_hat_with_nodes(q, profile, r, DEFAULT_QUADRATURE_NODES)
}

pub fn sigma_hat_with_nodes(q: usize, profile: &CurvatureProfile, r: f64, nodes: usize) -> Result<f64> {
    profile.check_domain(r)?;
    if q == 0 {
        return Ok(profile.kappa_unchecked(r));
    }
    Ok(smoothing_integral(profile, q, r, nodes))
}

pub fn sigma_hat_prime(q: usize, profile: &CurvatureProfile, r: f64) -> Result<f64> {
    sigma_hat_prime_with_nodes(q, profile, r, DEFAULT_QUADRATURE_NODES)
}

pub fn sigma_hat_prime_with_nodes(q: usize, profile: &CurvatureProfile, r: f64, nodes: usize) -> Result<f64> {
    if q == 0 {
        return Err(Error::InvalidParameter("the derivative of the order-0 smoothing is not defined".into()));
    }
    profile.check_domain(r)?;
    if q == 1 {
        return Ok(profile.kappa_unchecked(r));
    }
    Ok(smoothing_integral(profile, q - 1, r, nodes))
}

/// Result of inverting a smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaInverse {
    pub r: f64,
    /// The target exceeded the range of `σ̂` on its domain; `r` is the domain end.
    pub saturated: bool,
}

/// `σ̂_q⁻¹(y)` by bisection on `[0, r_max]`.
pub fn sigma_hat_inverse(q: usize, profile: &CurvatureProfile, y: f64) -> Result<SigmaInverse> {
    if !(y >= 0.0) {
        return Err(Error::InvalidParameter(format!("cannot invert at negative level {y}")));
    }
    let r_max = profile.r_max();
    let top = sigma_hat(q, profile, r_max)?;
    if top <= 0.0 || profile.is_identically_zero() {
        return Err(Error::AssumptionViolated(
            "curvature profile vanishes identically, so its smoothing is not invertible".into(),
        ));
    }
    if y == 0.0 {
        return Ok(SigmaInverse { r: 0.0, saturated: false });
    }
    if y >= top {
        return Ok(SigmaInverse { r: r_max, saturated: y > top });
    }
    let (mut lo, mut hi) = (0.0, r_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sigma_hat(q, profile, mid)? < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(SigmaInverse { r: 0.5 * (lo + hi), saturated: false })
}

/// `c_{p,ν} = 2^{1−ν} / ((1+ν)(2+ν)···(p+ν))`.
pub fn holder_sigma_coefficient(p: usize, nu: f64) -> f64 {
    let denom: f64 = (1..=p).map(|k| k as f64 + nu).product();
    2f64.powf(1.0 - nu) / denom
}

/// `c_{p,ν} H r^{p+ν}`, an upper bound on `σ̂_{p−1}(r)` when `D^pV` is
/// `ν`-Hölder with constant `H`.
pub fn holder_sigma_envelope(p: usize, nu: f64, h: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    holder_sigma_coefficient(p, nu) * h * r.powf(p as f64 + nu)
}

/// Tabulated smoothing of order `q` on the base profile grid.
#[derive(Debug, Clone)]
pub struct SmoothedCurvature {
    pub q: usize,
    pub base: CurvatureProfile,
    pub sigma_values: Vec<f64>,
    /// `σ̂_q′` on the grid; absent for `q = 0`.
    pub sigma_prime_values: Option<Vec<f64>>,
    pub quadrature_nodes: usize,
}

impl SmoothedCurvature {
    pub fn new(q: usize, base: CurvatureProfile) -> Result<Self> {
        let nodes = DEFAULT_QUADRATURE_NODES;
        let sigma_values = base
            .r_grid()
            .iter()
            .map(|&r| sigma_hat_with_nodes(q, &base, r, nodes))
            .collect::<Result<Vec<_>>>()?;
        let sigma_prime_values = if q == 0 {
            None
        } else {
            Some(
                base.r_grid()
                    .iter()
                    .map(|&r| sigma_hat_prime_with_nodes(q, &base, r, nodes))
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        Ok(Self { q, base, sigma_values, sigma_prime_values, quadrature_nodes: nodes })
    }

    pub fn r_grid(&self) -> &[f64] {
        self.base.r_grid()
    }

    pub fn sigma(&self, r: f64) -> Result<f64> {
        sigma_hat_with_nodes(self.q, &self.base, r, self.quadrature_nodes)
    }

    pub fn sigma_prime(&self, r: f64) -> Result<f64> {
        sigma_hat_prime_with_nodes(self.q, &self.base, r, self.quadrature_nodes)
    }
}

/// A smoothing `σ̂_{p−1}` that can be evaluated and inverted; the solver's
/// complexity predictions are written against this.
pub trait SigmaFunction: Send + Sync {
    fn sigma(&self, r: f64) -> Result<f64>;
    fn inverse(&self, y: f64) -> Result<SigmaInverse>;
    fn describe(&self) -> String;
}

/// `σ̂_q` of a curvature profile, by quadrature.
#[derive(Debug, Clone)]
pub struct ProfileSigma {
    pub q: usize,
    pub profile: CurvatureProfile,
}

impl SigmaFunction for ProfileSigma {
    fn sigma(&self, r: f64) -> Result<f64> {
        sigma_hat(self.q, &self.profile, r)
    }
    fn inverse(&self, y: f64) -> Result<SigmaInverse> {
        sigma_hat_inverse(self.q, &self.profile, y)
    }
    fn describe(&self) -> String {
        format!("sigma_{} of {} profile", self.q, self.profile.provenance())
    }
}

/// Hölder envelope `c_{p,ν} H r^{p+ν}` with its closed-form inverse.
#[derive(Debug, Clone, Copy)]
pub struct HolderSigma {
    pub p: usize,
    pub nu: f64,
    pub h: f64,
}

impl SigmaFunction for HolderSigma {
    fn sigma(&self, r: f64) -> Result<f64> {
        Ok(holder_sigma_envelope(self.p, self.nu, self.h, r))
    }
    fn inverse(&self, y: f64) -> Result<SigmaInverse> {
        if !(y >= 0.0) {
            return Err(Error::InvalidParameter(format!("cannot invert at negative level {y}")));
        }
        let c = holder_sigma_coefficient(self.p, self.nu) * self.h;
        if !(c > 0.0) {
            return Err(Error::AssumptionViolated("Hölder constant is zero".into()));
        }
        Ok(SigmaInverse { r: (y / c).powf(1.0 / (self.p as f64 + self.nu)), saturated: false })
    }
    fn describe(&self) -> String {
        format!("holder envelope (p={}, nu={}, H={})", self.p, self.nu, self.h)
    }
}

/// Sum of Hölder envelopes, as for an operator built from several classes.
/// The inverse is found by bisection.
#[derive(Debug, Clone)]
pub struct HolderSum(pub Vec<HolderSigma>);

impl SigmaFunction for HolderSum {
    fn sigma(&self, r: f64) -> Result<f64> {
        self.0.iter().map(|h| h.sigma(r)).sum()
    }
    fn inverse(&self, y: f64) -> Result<SigmaInverse> {
        if !(y >= 0.0) {
            return Err(Error::InvalidParameter(format!("cannot invert at negative level {y}")));
        }
        if self.0.iter().all(|h| !(holder_sigma_coefficient(h.p, h.nu) * h.h > 0.0)) {
            return Err(Error::AssumptionViolated("all Hölder constants are zero".into()));
        }
        if y == 0.0 {
            return Ok(SigmaInverse { r: 0.0, saturated: false });
        }
        // each term alone overshoots the joint inverse
        let mut hi = self.0.iter().filter_map(|h| h.inverse(y).ok()).map(|s| s.r).fold(f64::INFINITY, f64::min);
        let mut lo = 0.0;
        while self.sigma(hi)? < y {
            hi *= 2.0;
        }
        while hi - lo > 1e-14 * hi {
            let mid = 0.5 * (lo + hi);
            if self.sigma(mid)? < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(SigmaInverse { r: 0.5 * (lo + hi), saturated: false })
    }
    fn describe(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|h| h.describe()).collect();
        parts.join(" + ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::profile::{KappaForm, Provenance};

    fn squared(r_max: f64) -> CurvatureProfile {
        CurvatureProfile::analytic(
            KappaForm::Power { coef: 1.0, exponent: 2.0 },
            CurvatureProfile::uniform_grid(r_max, 20),
            Provenance::ClosedForm,
        )
        .unwrap()
    }

    #[test]
    fn holder_sum_inverse() {
        let a = HolderSigma { p: 1, nu: 1.0, h: 2.0 };
        let b = HolderSigma { p: 1, nu: 0.3, h: 1.3 };
        let sum = HolderSum(vec![a, b]);
        for y in [1e-6, 1e-2, 0.7, 5.0] {
            let r = sum.inverse(y).unwrap().r;
            assert!((sum.sigma(r).unwrap() - y).abs() <= 1e-12 * y);
        }
        let alone = HolderSum(vec![a]).inverse(0.25).unwrap().r;
        assert!((alone - 0.5).abs() < 1e-13);
    }

    #[test]
    fn smoothing_of_square() {
        let prof = squared(2.0);
        assert!((sigma_hat(1, &prof, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((sigma_hat_prime(2, &prof, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        // ∫₀¹ (1−t) t² dt = 1/12
        assert!((sigma_hat(2, &prof, 1.0).unwrap() - 1.0 / 12.0).abs() < 1e-12);
        assert_eq!(sigma_hat(0, &prof, 1.5).unwrap(), 2.25);
        assert_eq!(sigma_hat(1, &prof, 0.0).unwrap(), 0.0);
        assert_eq!(sigma_hat_prime(1, &prof, 0.5).unwrap(), 0.25);
        assert!(sigma_hat_prime(0, &prof, 0.5).is_err());
        assert!(matches!(sigma_hat(1, &prof, 2.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn tabulated_quadratic_is_integrated_exactly() {
        let grid = CurvatureProfile::uniform_grid(1.0, 10);
        let kappa: Vec<f64> = grid.iter().map(|r| 2.0 * r).collect();
        let prof = CurvatureProfile::tabulated(grid, kappa, Provenance::Empirical).unwrap();
        // linear κ is reproduced exactly by the interpolant
        assert!((sigma_hat(1, &prof, 0.73).unwrap() - 0.73f64.powi(2)).abs() < 1e-14);
        assert!((sigma_hat(2, &prof, 0.73).unwrap() - 0.73f64.powi(3) / 3.0).abs() < 1e-14);
    }

    #[test]
    fn fractional_power_converges() {
        let prof = CurvatureProfile::analytic(
            KappaForm::Power { coef: 1.0, exponent: 1.3 },
            vec![1.0],
            Provenance::ClosedForm,
        )
        .unwrap();
        let exact = 1.0 / 2.3;
        assert!((sigma_hat(1, &prof, 1.0).unwrap() - exact).abs() < 1e-8);
    }

    #[test]
    fn inverse_examples() {
        let prof = squared(3.0);
        let inv = sigma_hat_inverse(1, &prof, 1.0 / 3.0).unwrap();
        assert!((inv.r - 1.0).abs() < 1e-9 && !inv.saturated);
        assert_eq!(sigma_hat_inverse(1, &prof, 0.0).unwrap().r, 0.0);
        let sat = sigma_hat_inverse(1, &prof, 100.0).unwrap();
        assert!(sat.saturated && sat.r == 3.0);
        let zero = CurvatureProfile::analytic(KappaForm::Zero, vec![1.0], Provenance::ClosedForm).unwrap();
        assert!(matches!(sigma_hat_inverse(0, &zero, 0.1), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn holder_envelope_examples() {
        assert!((holder_sigma_envelope(1, 1.0, 1.0, 2.0) - 2.0).abs() < 1e-15);
        assert_eq!(holder_sigma_envelope(1, 0.5, 1.0, 0.0), 0.0);
        assert!((holder_sigma_envelope(2, 0.0, 3.0, 1.0) - 3.0).abs() < 1e-15);
        let hs = HolderSigma { p: 1, nu: 1.0, h: 2.0 };
        let r = hs.inverse(0.25).unwrap().r;
        assert!((hs.sigma(r).unwrap() - 0.25).abs() < 1e-15);
    }
}
