//! Lamperti time change of simulated Lévy paths: CSBP paths, first passages and
//! explosion functionals.
//!
//! Paths are piecewise linear between breakpoints (jumps appear as two points at
//! the same time). On a linear piece the clock A(s) = ∫ du/X_u has the primitive
//! ln(x_b/x_a)/slope, so Z is exponential between breakpoints.

#[cfg(test)]
mod tests;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::serde_ext::f64_ext;

/// ∫ ds/X over a piece where X moves linearly from `xa` to `xb` (both > 0) in time `len`.
pub fn piece_clock(xa: f64, xb: f64, len: f64) -> f64 {
    let z = (xb - xa) / xa;
    if z.abs() < 1e-6 {
        len / xa * (1.0 - z / 2.0 + z * z / 3.0)
    } else {
        len / xa * z.ln_1p() / z
    }
}

/// Clock over the last stretch of a grid step that ends at zero, with a √ profile
/// X ≈ x_a √((L−s)/L) in place of the linear interpolation (whose clock diverges).
pub fn clock_to_zero(xa: f64, len: f64) -> f64 {
    2.0 * len / xa
}

/// One level of a coupled sample: breakpoints (s, X_s) with X linear in between.
#[derive(Clone, Debug)]
pub struct PathView {
    pub eps: f64,
    pub x0: f64,
    pub points: Vec<(f64, f64)>,
    pub horizon: f64,
    /// Whether the continuous part was discretized on a grid (Brownian or Gaussian small jumps).
    pub gridded: bool,
}

impl PathView {
    /// Right-continuous value at time s (post-jump value at a jump time).
    pub fn value_at(&self, s: f64) -> f64 {
        let p = &self.points;
        let i = p.partition_point(|q| q.0 <= s);
        if i == 0 {
            return p[0].1;
        }
        if i == p.len() {
            return p[i - 1].1;
        }
        let (sa, xa) = p[i - 1];
        let (sb, xb) = p[i];
        if sb == sa {
            return xb;
        }
        xa + (xb - xa) * (s - sa) / (sb - sa)
    }

    /// τ = inf{s : X_s ≤ 0} with linear localisation inside the piece.
    pub fn zero_time(&self) -> Option<f64> {
        for w in self.points.windows(2) {
            let ((sa, xa), (sb, xb)) = (w[0], w[1]);
            if xb <= 0.0 {
                return Some(if sb == sa || xa <= 0.0 { sa } else { sa + (sb - sa) * xa / (xa - xb) });
            }
        }
        None
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ExitReason {
    Reached,
    HitZeroFirst,
    Horizon,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct PassageRecord {
    pub target: f64,
    /// σ_y, +∞ unless reached.
    #[serde(serialize_with = "f64_ext")]
    pub sigma: f64,
    /// X-time of the passage (NaN when closed analytically or not reached).
    #[serde(serialize_with = "f64_ext")]
    pub x_time: f64,
    pub reason: ExitReason,
}

/// CSBP path Z_t = X(A⁻¹(t) ∧ τ) with exponential interpolation between breakpoints.
#[derive(Clone, Debug)]
pub struct CsbpPath {
    pub eps: f64,
    /// (t, Z_t, slope of X on the following piece).
    pub points: Vec<(f64, f64, f64)>,
    pub hit_zero: bool,
    /// Clock reached at the end of the X path without hitting zero.
    pub clock_end: f64,
    pub clock_horizon: f64,
    /// Whether the grid was used for the continuous part (zero-hitting carries O(Δt) bias).
    pub grid_bias: bool,
}

impl CsbpPath {
    /// Z_t; NaN beyond the simulated range (neither clock horizon nor end reached).
    pub fn value_at(&self, t: f64) -> f64 {
        let p = &self.points;
        if p.is_empty() {
            return f64::NAN;
        }
        let i = p.partition_point(|q| q.0 <= t);
        if i == 0 {
            return p[0].1;
        }
        let (ta, za, k) = p[i - 1];
        if i == p.len() {
            if self.hit_zero {
                return 0.0;
            }
            if t > self.clock_end {
                return f64::NAN;
            }
        }
        if k == 0.0 {
            return za;
        }
        za * (k * (t - ta)).exp()
    }

    pub fn running_sup(&self, t: f64) -> f64 {
        let mut m = self.points.first().map_or(f64::NAN, |p| p.1);
        for &(ta, za, _) in &self.points {
            if ta > t {
                break;
            }
            m = m.max(za);
        }
        m.max(self.value_at(t))
    }
}

/// Z from a level view, up to clock `horizon_clock` or until X hits zero.
pub fn lamperti_transform(view: &PathView, horizon_clock: f64) -> Result<CsbpPath> {
    if !(view.x0 > 0.0) {
        return Err(Error::domain(format!("path must start above zero, got {}", view.x0)));
    }
    let mut pts = Vec::new();
    let mut clock = 0.0;
    let mut hit_zero = false;
    for w in view.points.windows(2) {
        let ((sa, xa), (sb, xb)) = (w[0], w[1]);
        let len = sb - sa;
        if len == 0.0 {
            // jump: Z jumps at the same clock value
            continue;
        }
        let k = (xb - xa) / len;
        pts.push((clock, xa, k));
        if xb <= 0.0 {
            hit_zero = true;
            clock += if view.gridded { clock_to_zero(xa, len * xa / (xa - xb)) } else { f64::INFINITY };
            break;
        }
        clock += piece_clock(xa, xb, len);
        if clock >= horizon_clock {
            break;
        }
    }
    if !hit_zero {
        let last = *view.points.last().unwrap();
        pts.push((clock, last.1, 0.0));
    } else if clock.is_finite() {
        pts.push((clock, 0.0, 0.0));
    }
    Ok(CsbpPath { eps: view.eps, points: pts, hit_zero, clock_end: clock, clock_horizon: horizon_clock, grid_bias: view.gridded })
}

/// σ_y = A(τ_y^X) when the X path reaches y before hitting zero.
pub fn first_passage(view: &PathView, y: f64) -> PassageRecord {
    if y <= view.x0 {
        return PassageRecord { target: y, sigma: 0.0, x_time: 0.0, reason: ExitReason::Reached };
    }
    let mut clock = 0.0;
    for w in view.points.windows(2) {
        let ((sa, xa), (sb, xb)) = (w[0], w[1]);
        let len = sb - sa;
        if xb >= y {
            if len == 0.0 {
                return PassageRecord { target: y, sigma: clock, x_time: sa, reason: ExitReason::Reached };
            }
            let f = (y - xa) / (xb - xa);
            return PassageRecord {
                target: y,
                sigma: clock + piece_clock(xa, y, f * len),
                x_time: sa + f * len,
                reason: ExitReason::Reached,
            };
        }
        if xb <= 0.0 {
            return PassageRecord { target: y, sigma: f64::INFINITY, x_time: f64::NAN, reason: ExitReason::HitZeroFirst };
        }
        if len > 0.0 {
            clock += piece_clock(xa, xb, len);
        }
    }
    PassageRecord { target: y, sigma: f64::INFINITY, x_time: f64::NAN, reason: ExitReason::Horizon }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct ExplosionEstimate {
    /// ∫₀^{τ_M} du/X_u on {τ = ∞}, 0 when τ < ∞.
    #[serde(serialize_with = "f64_ext")]
    pub zeta: f64,
    /// Analytic bound on the omitted part beyond M.
    pub tail_bound: f64,
    pub tau_finite: bool,
    pub censored: bool,
}

/// ζ 1{ζ<∞} ≈ clock to level M, with the caller's analytic tail bound attached.
pub fn explosion_functional(view: &PathView, big_level: f64, tail_bound: f64) -> ExplosionEstimate {
    let p = first_passage(view, big_level);
    match p.reason {
        ExitReason::Reached => ExplosionEstimate { zeta: p.sigma, tail_bound, tau_finite: false, censored: false },
        ExitReason::HitZeroFirst => ExplosionEstimate { zeta: 0.0, tail_bound, tau_finite: true, censored: false },
        ExitReason::Horizon => ExplosionEstimate { zeta: f64::NAN, tail_bound, tau_finite: false, censored: true },
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct KilledValue {
    pub value: f64,
    pub killed_by_zero: bool,
    pub censored: bool,
}

/// ∫₀^{e/h} du/X_u · 1{e/h < τ}.
pub fn killed_explosion_functional(view: &PathView, e_draw: f64, h_n: f64) -> Result<KilledValue> {
    if !(h_n > 0.0) || !(e_draw >= 0.0) {
        return Err(Error::domain("killing needs h > 0 and a nonnegative exponential draw"));
    }
    let w = e_draw / h_n;
    if w == 0.0 {
        return Ok(KilledValue { value: 0.0, killed_by_zero: false, censored: false });
    }
    if w > view.horizon {
        return Ok(KilledValue { value: f64::NAN, killed_by_zero: false, censored: true });
    }
    let mut clock = 0.0;
    for win in view.points.windows(2) {
        let ((sa, xa), (sb, xb)) = (win[0], win[1]);
        let len = sb - sa;
        if xb <= 0.0 && sb <= w {
            return Ok(KilledValue { value: 0.0, killed_by_zero: true, censored: false });
        }
        if sb >= w && len > 0.0 {
            let f = (w - sa) / len;
            let xw = xa + f * (xb - xa);
            if xw <= 0.0 {
                return Ok(KilledValue { value: 0.0, killed_by_zero: true, censored: false });
            }
            return Ok(KilledValue { value: clock + piece_clock(xa, xw, w - sa), killed_by_zero: false, censored: false });
        }
        if len > 0.0 {
            clock += piece_clock(xa, xb, len);
        }
    }
    Ok(KilledValue { value: clock, killed_by_zero: false, censored: false })
}
