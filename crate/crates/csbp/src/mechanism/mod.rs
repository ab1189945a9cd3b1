//! Branching mechanisms: evaluation, Esscher shifts, roots and boundary tests.

mod ladder;
mod measure;

pub use ladder::{EsscherLadder, LadderSpec};

pub use measure::{JumpLaw, LevyMeasure, TabulatedDensity};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::NumericPolicy;
use crate::quad::integrate;
use crate::roots::{bisect_increasing, newton_bracketed};

/// Lévy–Khintchine data of a mechanism.
///
/// `a` is the drift of the compensated form; when omitted, `b` (the linear
/// coefficient once the jump integral is written as ∫(e^{-λx}−1)π) is used,
/// defaulting to 0 so that `stable` alone means varphi(λ) = −kλ^α.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct MechanismSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default)]
    pub sigma2: f64,
    pub measure: LevyMeasure,
}

impl Default for LevyMeasure {
    fn default() -> Self {
        LevyMeasure::None
    }
}

#[derive(Clone, Debug)]
pub struct BranchingMechanism {
    b: f64,
    sigma2: f64,
    measure: LevyMeasure,
    compensator: f64,
    rho: f64,
    gamma: f64,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct BoundaryTest {
    /// Whether the singular integral converges.
    pub finite: bool,
    /// Value of the integral, or the partial sum over the examined shells when divergent.
    pub integral: f64,
    pub shells: usize,
}

impl BranchingMechanism {
    pub fn from_spec(spec: &MechanismSpec) -> Result<Self> {
        spec.measure.validate()?;
        let comp = spec.measure.compensator();
        let b = match (spec.a, spec.b) {
            (Some(_), Some(_)) => return Err(Error::validation("give either `a` or `b`, not both")),
            (Some(a), None) => a + comp,
            (None, Some(b)) => b,
            (None, None) => 0.0,
        };
        Self::with_linear(b, spec.sigma2, spec.measure.clone())
    }

    /// Mechanism varphi(λ) = bλ + ½σ²λ² + ∫(e^{-λx} − 1)π(dx).
    pub fn with_linear(b: f64, sigma2: f64, measure: LevyMeasure) -> Result<Self> {
        if !b.is_finite() {
            return Err(Error::validation(format!("linear coefficient must be finite, got {b}")));
        }
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::validation(format!("sigma2 must be nonnegative, got {sigma2}")));
        }
        measure.validate()?;
        let compensator = measure.compensator();
        let mut m = BranchingMechanism { b, sigma2, measure, compensator, rho: f64::NAN, gamma: f64::NAN };
        m.rho = m.compute_rho(&NumericPolicy::default())?;
        m.gamma = m.compute_gamma();
        Ok(m)
    }

    /// Literal Lévy–Khintchine triplet (a, σ², π).
    pub fn from_triplet(a: f64, sigma2: f64, measure: LevyMeasure) -> Result<Self> {
        measure.validate()?;
        let comp = measure.compensator();
        Self::with_linear(a + comp, sigma2, measure)
    }

    pub fn stable(alpha: f64, k: f64) -> Result<Self> {
        Self::with_linear(0.0, 0.0, LevyMeasure::Stable { alpha, k })
    }

    pub fn spec(&self) -> MechanismSpec {
        MechanismSpec { a: Some(self.a()), b: None, sigma2: self.sigma2, measure: self.measure.clone() }
    }

    /// Drift of the compensated (Lévy–Khintchine) form.
    pub fn a(&self) -> f64 {
        self.b - self.compensator
    }

    /// Linear coefficient of the uncompensated form.
    pub fn linear(&self) -> f64 {
        self.b
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn measure(&self) -> &LevyMeasure {
        &self.measure
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Drift of the Lévy path X_t = x0 + d·t + σB_t + Σ jumps.
    pub fn path_drift(&self) -> f64 {
        -self.b
    }

    pub fn is_subordinator(&self) -> bool {
        self.sigma2 == 0.0 && self.b <= 0.0
    }

    pub fn regular_variation_index(&self) -> Option<f64> {
        self.measure.regular_variation_index()
    }

    pub fn varphi(&self, lambda: f64) -> f64 {
        self.b * lambda + 0.5 * self.sigma2 * lambda * lambda + self.measure.laplace_part(lambda)
    }

    pub fn phi(&self, lambda: f64) -> f64 {
        -self.varphi(lambda)
    }

    /// d varphi/dλ; at λ = 0 this is −∞ when ∫x π(dx) diverges.
    pub fn varphi_prime(&self, lambda: f64) -> f64 {
        let m1 = self.measure.first_moment_tilted(lambda);
        if m1.is_infinite() {
            return f64::NEG_INFINITY;
        }
        self.b + self.sigma2 * lambda - m1
    }

    pub fn phi_prime(&self, lambda: f64) -> f64 {
        -self.varphi_prime(lambda)
    }

    pub fn varphi_second(&self, lambda: f64) -> f64 {
        self.sigma2 + self.measure.second_moment_tilted(lambda)
    }

    /// varphi^(ε)(λ) = varphi(λ+ε) − varphi(ε).
    pub fn esscher_shift(&self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::validation(format!("shift must be nonnegative and finite, got {eps}")));
        }
        if eps == 0.0 {
            return Ok(self.clone());
        }
        Self::with_linear(self.b + self.sigma2 * eps, self.sigma2, self.measure.tilt(eps))
    }

    fn compute_rho(&self, pol: &NumericPolicy) -> Result<f64> {
        if self.is_subordinator() {
            return Ok(f64::INFINITY);
        }
        if self.varphi_prime(0.0) >= 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.varphi(hi) <= 0.0 {
            hi *= 2.0;
            if hi > pol.bracket_max {
                return Err(Error::numeric("no sign change of varphi below the bracket limit", hi));
            }
        }
        let mut lo = hi / 2.0;
        while self.varphi(lo) > 0.0 {
            lo /= 2.0;
            if lo < 1e-300 {
                return Ok(0.0);
            }
        }
        // varphi is convex with varphi(lo) <= 0 < varphi(hi): increasing on [lo, hi]
        Ok(bisect_increasing(|x| self.varphi(x), lo, hi))
    }

    fn compute_gamma(&self) -> f64 {
        if self.rho.is_infinite() {
            return f64::INFINITY;
        }
        if self.rho == 0.0 {
            return 0.0;
        }
        let mut lo = self.rho;
        while self.varphi_prime(lo) > 0.0 {
            lo /= 2.0;
            if lo < 1e-300 {
                return 0.0;
            }
        }
        bisect_increasing(|x| self.varphi_prime(x), lo, self.rho)
    }

    /// Largest root ρ (cached at construction).
    pub fn largest_root(&self) -> f64 {
        self.rho
    }

    /// Inverse of varphi on [ρ, ∞).
    pub fn psi_inverse(&self, y: f64) -> Result<f64> {
        if self.is_subordinator() {
            return Err(Error::domain("psi is identically +inf for a subordinator"));
        }
        if !(y >= 0.0) {
            return Err(Error::domain(format!("psi_inverse needs y >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(self.rho);
        }
        let lo = self.rho;
        let mut hi = lo.max(1.0);
        while self.varphi(hi) < y {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::numeric("psi_inverse bracket overflow", hi));
            }
        }
        let x = newton_bracketed(|x| (self.varphi(x) - y, self.varphi_prime(x)), lo, hi, hi, 1e-16);
        let resid = (self.varphi(x) - y).abs();
        if resid > 1e-12 * (1.0 + y) {
            // fall back to plain bisection to the last representable bracket
            let x = bisect_increasing(|x| self.varphi(x) - y, lo, hi);
            return Ok(x);
        }
        Ok(x)
    }

    /// Default cap for θ: min(ρ/2, γ/2), capped at 1 when both are infinite.
    pub fn default_theta(&self) -> f64 {
        let t = (self.rho / 2.0).min(self.gamma / 2.0);
        if t.is_finite() {
            t
        } else {
            1.0
        }
    }

    /// ∫₀^θ du/φ(u) by dyadic shells [2^{-m-1}θ, 2^{-m}θ].
    pub fn explosion_test(&self, theta: f64, pol: &NumericPolicy) -> Result<BoundaryTest> {
        if !(theta > 0.0 && theta < self.rho) {
            return Err(Error::domain(format!("explosion test needs θ in (0, ρ={}), got {theta}", self.rho)));
        }
        let mut shells = Vec::with_capacity(pol.shell_cap);
        let mut hi = theta.ln();
        let step = std::f64::consts::LN_2;
        for _ in 0..pol.shell_cap {
            let lo = hi - step;
            let q = integrate(|s: f64| { let u = s.exp(); u / self.phi(u) }, lo, hi, 1e-300, 1e-12, pol.max_subdivisions)?;
            shells.push(q.value);
            hi = lo;
        }
        Ok(dyadic_verdict(&shells))
    }

    /// ∫_θ^∞ du/varphi(u) by dyadic shells [2^mθ, 2^{m+1}θ].
    pub fn extinction_test(&self, theta: f64, pol: &NumericPolicy) -> Result<BoundaryTest> {
        if self.is_subordinator() {
            return Ok(BoundaryTest { finite: false, integral: f64::INFINITY, shells: 0 });
        }
        if !(theta > self.rho) {
            return Err(Error::domain(format!("extinction test needs θ > ρ={}, got {theta}", self.rho)));
        }
        let mut shells = Vec::with_capacity(pol.shell_cap);
        let mut lo = theta.ln();
        let step = std::f64::consts::LN_2;
        for _ in 0..pol.shell_cap {
            let hi = lo + step;
            let q = integrate(|s: f64| { let u = s.exp(); u / self.varphi(u) }, lo, hi, 1e-300, 1e-12, pol.max_subdivisions)?;
            shells.push(q.value);
            lo = hi;
        }
        Ok(dyadic_verdict(&shells))
    }

    /// Explosive iff ρ > 0 and ∫₀ du/φ converges.
    pub fn is_explosive(&self) -> bool {
        if !(self.rho > 0.0) {
            return false;
        }
        let theta = self.default_theta().min(self.rho / 2.0);
        self.explosion_test(theta, &NumericPolicy::default()).map(|t| t.finite).unwrap_or(false)
    }
}

/// Growth test on a sequence of positive shell integrals.
///
/// Convergent when the tail decays geometrically (ratio < 0.98 per shell) or
/// like m^{-p} with p > 1.5; the returned value then includes a tail estimate.
pub(crate) fn dyadic_verdict(shells: &[f64]) -> BoundaryTest {
    let n = shells.len();
    let partial: f64 = shells.iter().sum();
    let k = 12.min(n - 1);
    let last = shells[n - 1];
    let earlier = shells[n - 1 - k];
    if last == 0.0 || (last / partial) < 1e-17 {
        return BoundaryTest { finite: true, integral: partial, shells: n };
    }
    let ratio = (last / earlier).powf(1.0 / k as f64);
    if ratio < 0.98 {
        return BoundaryTest { finite: true, integral: partial + last * ratio / (1.0 - ratio), shells: n };
    }
    let p = (earlier / last).ln() / ((n as f64) / ((n - k) as f64)).ln();
    if p > 1.5 {
        return BoundaryTest { finite: true, integral: partial + last * n as f64 / (p - 1.0), shells: n };
    }
    BoundaryTest { finite: false, integral: f64::INFINITY, shells: n }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> BranchingMechanism {
        BranchingMechanism::from_triplet(-1.0, 2.0, LevyMeasure::None).unwrap()
    }

    #[test]
    fn eval_examples() {
        let m = BranchingMechanism::from_triplet(2.0, 0.0, LevyMeasure::None).unwrap();
        assert_eq!(m.varphi(1.0), 2.0);
        assert_eq!(quadratic().varphi(1.0), 0.0);
        let s = BranchingMechanism::stable(0.5, 1.0).unwrap();
        assert!((s.varphi(4.0) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn stable_from_literal_triplet() {
        // drift a = -c/(1-α) reproduces the pure stable exponent
        let c = 0.5 / std::f64::consts::PI.sqrt();
        let m = BranchingMechanism::from_triplet(-c / 0.5, 0.0, LevyMeasure::Stable { alpha: 0.5, k: 1.0 }).unwrap();
        assert!((m.varphi(4.0) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_examples() {
        assert!(quadratic().varphi_prime(0.5).abs() < 1e-15);
        let s = BranchingMechanism::stable(0.5, 1.0).unwrap();
        assert!((s.phi_prime(1.0) - 0.5).abs() < 1e-15);
        assert_eq!(s.phi_prime(0.0), f64::INFINITY);
    }

    #[test]
    fn shift_examples() {
        let q = quadratic();
        assert_eq!(q.esscher_shift(0.0).unwrap().varphi(1.7), q.varphi(1.7));
        let q5 = q.esscher_shift(0.5).unwrap();
        assert!(q5.linear().abs() < 1e-15);
        assert!((q5.varphi(3.0) - 9.0).abs() < 1e-14);
        let s = BranchingMechanism::stable(0.5, 1.0).unwrap().esscher_shift(0.04).unwrap();
        assert!((s.varphi(1.0) - (-(1.04f64).sqrt() + 0.2)).abs() < 1e-14);
    }

    #[test]
    fn roots() {
        let q = quadratic();
        assert!((q.rho() - 1.0).abs() < 1e-15);
        assert!((q.gamma() - 0.5).abs() < 1e-15);
        let s = BranchingMechanism::stable(0.5, 1.0).unwrap();
        assert_eq!(s.rho(), f64::INFINITY);
        assert_eq!(s.gamma(), f64::INFINITY);
        assert_eq!(s.esscher_shift(0.25).unwrap().rho(), f64::INFINITY);
    }

    #[test]
    fn psi_examples() {
        let q = quadratic();
        assert_eq!(q.psi_inverse(0.0).unwrap(), 1.0);
        assert!((q.psi_inverse(2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((q.psi_inverse(6.0).unwrap() - 3.0).abs() < 1e-12);
        let s = BranchingMechanism::stable(0.5, 1.0).unwrap();
        assert!(matches!(s.psi_inverse(1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn explosion_examples() {
        let pol = NumericPolicy::default();
        let s = BranchingMechanism::stable(0.5, 1.0).unwrap();
        let t = s.explosion_test(1.0, &pol).unwrap();
        assert!(t.finite);
        assert!((t.integral - 2.0).abs() < 1e-9);
        let drift = BranchingMechanism::with_linear(-1.0, 0.0, LevyMeasure::None).unwrap();
        assert!(!drift.explosion_test(1.0, &pol).unwrap().finite);
        assert!(!quadratic().explosion_test(0.5, &pol).unwrap().finite);
        assert!(matches!(quadratic().explosion_test(1.5, &pol), Err(Error::Domain(_))));
    }

    #[test]
    fn extinction_examples() {
        let pol = NumericPolicy::default();
        let t = quadratic().extinction_test(2.0, &pol).unwrap();
        assert!(t.finite);
        assert!((t.integral - std::f64::consts::LN_2).abs() < 1e-9);
        let lin = BranchingMechanism::with_linear(1.0, 0.0, LevyMeasure::None).unwrap();
        assert!(!lin.extinction_test(1.0, &pol).unwrap().finite);
        let s = BranchingMechanism::stable(0.5, 1.0).unwrap();
        assert!(!s.extinction_test(1.0, &pol).unwrap().finite);
    }

    #[test]
    fn stable_family_explosion_integrals() {
        let pol = NumericPolicy::default();
        for i in 1..=9 {
            let alpha = i as f64 / 10.0;
            let s = BranchingMechanism::stable(alpha, 1.0).unwrap();
            let t = s.explosion_test(1.0, &pol).unwrap();
            assert!(t.finite, "alpha={alpha}");
            let exact = 1.0 / (1.0 - alpha);
            assert!((t.integral - exact).abs() < 1e-6 * exact, "alpha={alpha}: {} vs {exact}", t.integral);
        }
    }
}
