//! Tabulated cumulative rate G(s) = ∫ ds' (dy/ds')/|varphi(y(s'))| in a log-type coordinate.

use crate::error::{Error, Result};
use crate::mechanism::BranchingMechanism;
use crate::quad::integrate;
use crate::roots::newton_bracketed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// (0, ρ), where φ > 0.
    Explosive,
    /// (ρ, ∞), where varphi > 0.
    Extinction,
}

const STEP: f64 = 0.5;

/// On the explosive side y = e^s (ρ = ∞) or y = ρ/(1+e^{−s}); on the extinction
/// side y = ρ + e^s. G is anchored at s = 0 and extended linearly past the table.
#[derive(Clone, Debug)]
pub struct CumulativeRate {
    mech: BranchingMechanism,
    side: Side,
    rho: f64,
    s_lo: f64,
    s_hi: f64,
    nodes: Vec<f64>,
    slope_lo: f64,
    slope_hi: f64,
    at_zero: Option<f64>,
    // varphi'(ρ), varphi''(ρ) for evaluation next to the root
    d1: f64,
    d2: f64,
}

impl CumulativeRate {
    pub fn new(mech: &BranchingMechanism, side: Side) -> Result<Self> {
        let rho = mech.rho();
        let (s_lo, s_hi) = match side {
            Side::Explosive => {
                if !(rho > 0.0) {
                    return Err(Error::domain("explosive side needs rho > 0"));
                }
                if rho.is_infinite() {
                    (-690.0, 690.0)
                } else {
                    ((-690.0 - rho.ln()).floor(), 20.0)
                }
            }
            Side::Extinction => {
                if !rho.is_finite() {
                    return Err(Error::domain("extinction side needs finite rho"));
                }
                let lo = if rho > 0.0 { (rho * 1e-9).ln().floor() } else { -690.0 };
                (lo, 300.0)
            }
        };
        let n = ((s_hi - s_lo) / STEP).round() as usize;
        let s_hi = s_lo + n as f64 * STEP;
        let mut r = CumulativeRate {
            mech: mech.clone(),
            side,
            rho,
            s_lo,
            s_hi,
            nodes: vec![0.0; n + 1],
            slope_lo: 0.0,
            slope_hi: 0.0,
            at_zero: None,
            d1: 0.0,
            d2: 0.0,
        };
        if rho.is_finite() && rho > 0.0 {
            r.d1 = mech.varphi_prime(rho);
            r.d2 = mech.varphi_second(rho);
        }
        let anchor = ((0.0 - s_lo) / STEP).round() as usize;
        for i in anchor..n {
            let q = integrate(|s| r.integrand(s), r.node(i), r.node(i + 1), 1e-300, 1e-10, 400)?;
            r.nodes[i + 1] = r.nodes[i] + q.value;
        }
        for i in (0..anchor).rev() {
            let q = integrate(|s| r.integrand(s), r.node(i), r.node(i + 1), 1e-300, 1e-10, 400)?;
            r.nodes[i] = r.nodes[i + 1] - q.value;
        }
        r.slope_lo = r.integrand(s_lo);
        r.slope_hi = match side {
            Side::Explosive if rho.is_finite() => 1.0 / mech.varphi_prime(rho),
            _ => r.integrand(s_hi),
        };
        if side == Side::Explosive && mech.is_explosive() {
            // remaining mass below s_lo decays at least geometrically in s
            let g0 = r.integrand(s_lo);
            let g1 = r.integrand(s_lo + 1.0);
            let rate = (g1 / g0).ln();
            let tail = if rate > 0.0 && rate.is_finite() { g0 / rate } else { 0.0 };
            r.at_zero = Some(r.nodes[0] - tail);
        }
        Ok(r)
    }

    fn node(&self, i: usize) -> f64 {
        self.s_lo + i as f64 * STEP
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn s_lo(&self) -> f64 {
        self.s_lo
    }

    pub fn s_hi(&self) -> f64 {
        self.s_hi
    }

    pub fn mechanism(&self) -> &BranchingMechanism {
        &self.mech
    }

    /// Whether G has a finite limit as y ↓ 0 (explosive mechanism).
    pub fn finite_at_zero(&self) -> bool {
        self.at_zero.is_some()
    }

    pub fn g_at_zero(&self) -> f64 {
        self.at_zero.unwrap_or(f64::NEG_INFINITY)
    }

    pub fn y_of_s(&self, s: f64) -> f64 {
        match self.side {
            Side::Explosive if self.rho.is_infinite() => s.exp(),
            Side::Explosive => self.rho / (1.0 + (-s).exp()),
            Side::Extinction => self.rho + s.exp(),
        }
    }

    /// ln y without forming y (usable when y underflows).
    pub fn ln_y_of_s(&self, s: f64) -> f64 {
        match self.side {
            Side::Explosive if self.rho.is_infinite() => s,
            Side::Explosive => self.rho.ln() - softplus(-s),
            Side::Extinction => self.y_of_s(s).ln(),
        }
    }

    pub fn s_of_y(&self, y: f64) -> f64 {
        match self.side {
            Side::Explosive if self.rho.is_infinite() => y.ln(),
            Side::Explosive => (y / (self.rho - y)).ln(),
            Side::Extinction => (y - self.rho).ln(),
        }
    }

    pub fn s_of_ln_y(&self, ly: f64) -> f64 {
        match self.side {
            Side::Explosive if self.rho.is_infinite() => ly,
            Side::Explosive => {
                let l = ly - self.rho.ln();
                l - (-l.exp_m1()).ln()
            }
            Side::Extinction => self.s_of_y(ly.exp()),
        }
    }

    pub fn dy_ds(&self, s: f64) -> f64 {
        match self.side {
            Side::Explosive if self.rho.is_infinite() => s.exp(),
            Side::Explosive => {
                let p = 1.0 / (1.0 + (-s).exp());
                let q = 1.0 / (1.0 + s.exp());
                self.rho * p * q
            }
            Side::Extinction => s.exp(),
        }
    }

    /// dG/ds.
    pub fn integrand(&self, s: f64) -> f64 {
        let y = self.y_of_s(s);
        let near = self.d1 > 0.0;
        match self.side {
            Side::Explosive if near && self.rho.is_finite() && s > 11.5 => {
                let g = self.rho / (1.0 + s.exp());
                self.dy_ds(s) / (g * (self.d1 - 0.5 * self.d2 * g))
            }
            Side::Extinction if near && s < (self.rho * 1e-5).ln() => {
                let g = s.exp();
                1.0 / (self.d1 + 0.5 * self.d2 * g)
            }
            Side::Explosive => self.dy_ds(s) / self.mech.phi(y),
            Side::Extinction => self.dy_ds(s) / self.mech.varphi(y),
        }
    }

    /// G(s).
    pub fn g(&self, s: f64) -> f64 {
        if s <= self.s_lo {
            return self.nodes[0] + (s - self.s_lo) * self.slope_lo;
        }
        if s >= self.s_hi {
            return self.nodes[self.nodes.len() - 1] + (s - self.s_hi) * self.slope_hi;
        }
        let i = (((s - self.s_lo) / STEP).floor() as usize).min(self.nodes.len() - 2);
        let a = self.node(i);
        let q = integrate(|x| self.integrand(x), a, s, 1e-300, 1e-11, 200)
            .map(|q| q.value)
            .unwrap_or(f64::NAN);
        self.nodes[i] + q
    }

    /// Solves G(s) = v.
    pub fn inverse(&self, v: f64) -> f64 {
        let last = self.nodes.len() - 1;
        if v <= self.nodes[0] {
            if self.slope_lo > 0.0 {
                return self.s_lo + (v - self.nodes[0]) / self.slope_lo;
            }
            return f64::NEG_INFINITY;
        }
        if v >= self.nodes[last] {
            return self.s_hi + (v - self.nodes[last]) / self.slope_hi;
        }
        let i = self.nodes.partition_point(|g| *g <= v) - 1;
        let (a, b) = (self.node(i), self.node(i + 1));
        let span = self.nodes[i + 1] - self.nodes[i];
        let x0 = a + STEP * (v - self.nodes[i]) / span;
        newton_bracketed(
            |s| {
                let val = if s == a { self.nodes[i] } else { self.g(s).min(f64::MAX) };
                (val - v, self.integrand(s))
            },
            a,
            b,
            x0,
            1e-15,
        )
    }

    /// F(y) = ∫₀^y du/φ(u) (explosive side of an explosive mechanism).
    pub fn f(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        self.g(self.s_of_y(y)) - self.g_at_zero()
    }

    /// F⁻¹(v).
    pub fn f_inverse(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        self.y_of_s(self.inverse(self.g_at_zero() + v))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}
