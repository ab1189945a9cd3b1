//! Flow u_t(λ) of the backward equation and the analytic laws of the explosion time.

mod rate;

pub use rate::{CumulativeRate, Side};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanism::BranchingMechanism;
use crate::quad::{gk21, integrate};

/// Flow of one mechanism: cumulative rate tables on both sides of ρ.
#[derive(Clone, Debug)]
pub struct Flow {
    mech: BranchingMechanism,
    explosive_side: Option<CumulativeRate>,
    extinction_side: Option<CumulativeRate>,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct FlowValue {
    pub value: f64,
    /// Set when the value is a convention rather than a solution (u_t(0) of a conservative mechanism).
    pub flagged: bool,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct LawValue {
    pub value: f64,
    pub error: f64,
    /// Estimated contribution of the truncated upper range.
    pub remainder: f64,
}

impl Flow {
    pub fn new(mech: &BranchingMechanism) -> Result<Self> {
        let rho = mech.rho();
        let explosive_side = if rho > 0.0 { Some(CumulativeRate::new(mech, Side::Explosive)?) } else { None };
        let extinction_side = if rho.is_finite() { Some(CumulativeRate::new(mech, Side::Extinction)?) } else { None };
        Ok(Flow { mech: mech.clone(), explosive_side, extinction_side })
    }

    pub fn mechanism(&self) -> &BranchingMechanism {
        &self.mech
    }

    pub fn explosive(&self) -> bool {
        self.explosive_side.as_ref().map(|r| r.finite_at_zero()).unwrap_or(false)
    }

    pub fn rate(&self) -> Option<&CumulativeRate> {
        self.explosive_side.as_ref()
    }

    pub fn extinction_rate(&self) -> Option<&CumulativeRate> {
        self.extinction_side.as_ref()
    }

    /// u_t(λ) solving ∫_{u}^{λ} ds/varphi(s) = t.
    pub fn ut(&self, t: f64, lambda: f64) -> Result<FlowValue> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::domain(format!("t must be finite and >= 0, got {t}")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
        }
        if t == 0.0 {
            return Ok(FlowValue { value: lambda, flagged: false });
        }
        let rho = self.mech.rho();
        if lambda == rho {
            return Ok(FlowValue { value: rho, flagged: false });
        }
        if lambda < rho {
            let r = self.explosive_side.as_ref().expect("rho > 0 implies explosive-side table");
            if lambda == 0.0 {
                if !r.finite_at_zero() {
                    return Ok(FlowValue { value: 0.0, flagged: true });
                }
                let s = r.inverse(r.g_at_zero() + t);
                return Ok(FlowValue { value: r.y_of_s(s), flagged: false });
            }
            let s = r.inverse(r.g(r.s_of_y(lambda)) + t);
            Ok(FlowValue { value: r.y_of_s(s), flagged: false })
        } else {
            let r = self.extinction_side.as_ref().expect("finite rho implies extinction-side table");
            let s = r.inverse(r.g(r.s_of_y(lambda)) - t);
            Ok(FlowValue { value: r.y_of_s(s), flagged: false })
        }
    }

    /// u_t(e^{ln_lambda}) on the explosive side, for starting points below the f64 range.
    pub fn ut_ln(&self, t: f64, ln_lambda: f64) -> Result<f64> {
        if ln_lambda == f64::NEG_INFINITY {
            return Ok(self.ut(t, 0.0)?.value);
        }
        let r = match &self.explosive_side {
            Some(r) if ln_lambda < r.rho().ln() => r,
            _ => return Err(Error::domain("ut_ln needs 0 < lambda < rho")),
        };
        let s = r.inverse(r.g(r.s_of_ln_y(ln_lambda)) + t);
        Ok(r.y_of_s(s))
    }

    /// P_x(ζ > t) = exp(−x u_t(0)).
    pub fn survival_probability(&self, x: f64, t: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!("initial mass must be positive, got {x}")));
        }
        Ok((-x * self.ut(t, 0.0)?.value).exp())
    }

    fn law_integral<G: Fn(f64, f64) -> f64>(&self, x: f64, weight: G) -> Result<LawValue> {
        let r = match &self.explosive_side {
            Some(r) if r.finite_at_zero() => r,
            _ => return Ok(LawValue { value: 0.0, error: 0.0, remainder: 0.0 }),
        };
        if !(x > 0.0) {
            return Err(Error::domain(format!("initial mass must be positive, got {x}")));
        }
        let f0 = r.g_at_zero();
        let s_start = r.s_of_y(1e-22 / x).max(r.s_lo());
        let s_end = if r.rho().is_infinite() { r.s_of_y(40.0 / x) } else { r.s_hi() + 10.0 };
        let integrand = |s: f64| {
            let y = r.y_of_s(s);
            let f = r.g(s) - f0;
            x * weight(f, y) * (-x * y).exp() * r.dy_ds(s)
        };
        let mut cuts = vec![s_start];
        while *cuts.last().unwrap() < s_end {
            let a = *cuts.last().unwrap();
            cuts.push((a + 0.5).min(s_end));
        }
        // rough pass fixes an absolute tolerance for the refined pass
        let rough: f64 = cuts.windows(2).map(|w| gk21(&mut &integrand, w[0], w[1]).value.abs()).sum();
        let abs = 1e-12 * rough / cuts.len() as f64;
        let mut total = 0.0;
        let mut err = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let q = integrate(&integrand, a, b, abs.max(1e-300), 1e-11, 200)?;
            total += q.value;
            err += q.error;
        }
        let remainder = if r.rho().is_infinite() {
            integrate(&integrand, s_end, s_end + 2.0, 1e-300, 1e-10, 200)?.value.abs()
        } else {
            0.0
        };
        Ok(LawValue { value: total, error: err + remainder, remainder })
    }

    /// E_x(ζ^n 1{ζ<∞}) = x ∫₀^ρ F(y)^n e^{−xy} dy.
    pub fn zeta_moment(&self, x: f64, n: u32) -> Result<LawValue> {
        let v = self.law_integral(x, |f, _| f.powi(n as i32))?;
        if n == 1 && v.value > 0.0 {
            let alt = self.first_moment_alt(x)?;
            if (alt - v.value).abs() > 1e-8 * (1.0 + v.value.abs()) {
                return Err(Error::numeric(
                    format!("first-moment forms disagree: {} vs {alt}", v.value),
                    (alt - v.value).abs(),
                ));
            }
        }
        Ok(v)
    }

    /// ∫₀^ρ (e^{−λx} − e^{−ρx})/φ(λ) dλ.
    pub fn first_moment_alt(&self, x: f64) -> Result<f64> {
        let r = match &self.explosive_side {
            Some(r) if r.finite_at_zero() => r,
            _ => return Ok(0.0),
        };
        let rho = r.rho();
        let tail = if rho.is_finite() { (-rho * x).exp() } else { 0.0 };
        let s_start = r.s_of_y(1e-22 / x).max(r.s_lo());
        let s_end = if rho.is_infinite() { r.s_of_y(40.0 / x) } else { r.s_hi() };
        let mut total = 0.0;
        let mut a = s_start;
        while a < s_end {
            let b = (a + 0.5).min(s_end);
            total += integrate(|s| ((-x * r.y_of_s(s)).exp() - tail) * r.integrand(s), a, b, 1e-300, 1e-12, 200)?.value;
            a = b;
        }
        Ok(total)
    }

    /// E_x(e^{−lam ζ} 1{ζ<∞}) = x ∫₀^ρ e^{−lam F(y)} e^{−xy} dy.
    pub fn zeta_laplace(&self, x: f64, lam: f64) -> Result<LawValue> {
        if !(lam >= 0.0) {
            return Err(Error::domain(format!("rate must be >= 0, got {lam}")));
        }
        self.law_integral(x, |f, _| (-lam * f).exp())
    }
}

/// u_t(λ) for a single query; builds the rate tables.
pub fn solve_ut(mech: &BranchingMechanism, t: f64, lambda: f64) -> Result<FlowValue> {
    Flow::new(mech)?.ut(t, lambda)
}

pub fn survival_probability(mech: &BranchingMechanism, x: f64, t: f64) -> Result<f64> {
    Flow::new(mech)?.survival_probability(x, t)
}

pub fn zeta_moment(mech: &BranchingMechanism, x: f64, n: u32) -> Result<LawValue> {
    Flow::new(mech)?.zeta_moment(x, n)
}

pub fn zeta_laplace(mech: &BranchingMechanism, x: f64, lam: f64) -> Result<LawValue> {
    Flow::new(mech)?.zeta_laplace(x, lam)
}

/// ∫₀^ρ (e^{−λx} − e^{−ψ(h)x}) / (h + φ(λ)) dλ for a level mechanism.
pub fn expected_truncated_integral(mech: &BranchingMechanism, x: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("killing rate must be positive, got {h}")));
    }
    if !(x > 0.0) {
        return Err(Error::domain(format!("initial mass must be positive, got {x}")));
    }
    let rho = mech.rho();
    if !(rho > 0.0) {
        return Err(Error::domain("level mechanism must have rho > 0"));
    }
    let psi_term = if mech.is_subordinator() { 0.0 } else { (-mech.psi_inverse(h)? * x).exp() };
    let s_lo = (h.ln().min(0.0) - x.max(1.0).ln() - 40.0).max(-740.0);
    let (s_hi, coord): (f64, Box<dyn Fn(f64) -> (f64, f64)>) = if rho.is_infinite() {
        ((60.0 / x).ln(), Box::new(|s: f64| { let y = s.exp(); (y, y) }))
    } else {
        (40.0, Box::new(move |s: f64| {
            let p = 1.0 / (1.0 + (-s).exp());
            let q = 1.0 / (1.0 + s.exp());
            (rho * p, rho * p * q)
        }))
    };
    let lo = if rho.is_infinite() { s_lo } else { s_lo - rho.ln() };
    let f = |s: f64| {
        let (y, dy) = coord(s);
        ((-x * y).exp() - psi_term) * dy / (h + mech.phi(y))
    };
    let mut total = 0.0;
    let mut a = lo;
    while a < s_hi {
        let b = (a + 1.0).min(s_hi);
        total += integrate(&f, a, b, 1e-300, 1e-12, 400)?.value;
        a = b;
    }
    Ok(total)
}

#[cfg(test)]
mod tests;
