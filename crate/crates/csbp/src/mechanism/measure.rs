//! Lévy measures on (0, ∞) and the functionals the rest of the crate needs.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma as GammaDist};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur};

use crate::error::{Error, Result};
use crate::quad::integrate;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum JumpLaw {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl JumpLaw {
    fn shape_rate(&self) -> (f64, f64) {
        match *self {
            JumpLaw::Exponential { rate } => (1.0, rate),
            JumpLaw::Gamma { shape, rate } => (shape, rate),
        }
    }
}

/// Piecewise-linear density on a grid, optionally tilted by `exp(-tilt x)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TabulatedDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    #[serde(default)]
    pub tilt: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevyMeasure {
    None,
    CompoundPoisson { rate: f64, jumps: JumpLaw },
    Stable { alpha: f64, k: f64 },
    TemperedStable { alpha: f64, k: f64, tilt: f64 },
    Tabulated(TabulatedDensity),
}

/// ∫₀¹ y^p e^{-zy} dy for p > -1, z ≥ 0.
pub(crate) fn kfun(p: f64, z: f64) -> f64 {
    if z < 2.0 {
        let mut term = 1.0;
        let mut sum = 1.0 / (p + 1.0);
        for j in 1..200 {
            term *= -z / j as f64;
            let add = term / (j as f64 + p + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        gamma_lr(p + 1.0, z) * gamma(p + 1.0) / z.powf(p + 1.0)
    }
}

/// Upper incomplete gamma Γ(a, z) for a ∈ (-1, 0), z > 0.
fn upper_gamma_neg(a: f64, z: f64) -> f64 {
    if z < 1.0 {
        // Γ(a,z) = (Γ(a+1,z) − z^a e^{−z}) / a
        (gamma(a + 1.0) * gamma_ur(a + 1.0, z) - z.powf(a) * (-z).exp()) / a
    } else {
        // modified Lentz continued fraction
        let tiny = 1e-300;
        let mut b = z + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-z + a * z.ln()).exp() * h
    }
}

fn stable_constant(alpha: f64, k: f64) -> f64 {
    k * alpha / gamma(1.0 - alpha)
}

impl TabulatedDensity {
    fn validate(&self) -> Result<()> {
        if self.grid.len() < 2 || self.grid.len() != self.density.len() {
            return Err(Error::validation("tabulated density needs matching grid/density of length >= 2"));
        }
        if self.grid[0] < 0.0 || self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("tabulated grid must be nonnegative and strictly increasing"));
        }
        if self.density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::validation("tabulated density values must be finite and nonnegative"));
        }
        if !(self.tilt >= 0.0) {
            return Err(Error::validation("tilt must be nonnegative"));
        }
        Ok(())
    }

    fn density_at(&self, cell: usize, x: f64) -> f64 {
        let (x0, x1) = (self.grid[cell], self.grid[cell + 1]);
        let (f0, f1) = (self.density[cell], self.density[cell + 1]);
        (f0 + (f1 - f0) * (x - x0) / (x1 - x0)) * (-self.tilt * x).exp()
    }

    /// ∫ g(x) π(dx) over [lo, hi] ∩ support, cell by cell.
    fn integral<G: Fn(f64) -> f64>(&self, g: G, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for c in 0..self.grid.len() - 1 {
            let a = self.grid[c].max(lo);
            let b = self.grid[c + 1].min(hi);
            if b <= a {
                continue;
            }
            let q = integrate(|x| g(x) * self.density_at(c, x), a, b, 1e-15, 1e-13, 400)
                .map(|q| q.value)
                .unwrap_or_else(|e| match e {
                    Error::Numeric { .. } => f64::NAN,
                    _ => f64::NAN,
                });
            total += q;
        }
        total
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let masses: Vec<f64> = (0..self.grid.len() - 1)
            .map(|c| 0.5 * (self.density[c] + self.density[c + 1]) * (self.grid[c + 1] - self.grid[c]))
            .collect();
        let total: f64 = masses.iter().sum();
        loop {
            let mut target = rng.random::<f64>() * total;
            let mut cell = masses.len() - 1;
            for (c, m) in masses.iter().enumerate() {
                if target < *m {
                    cell = c;
                    break;
                }
                target -= m;
            }
            let (x0, x1) = (self.grid[cell], self.grid[cell + 1]);
            let w = x1 - x0;
            let f0 = self.density[cell];
            let s = (self.density[cell + 1] - f0) / w;
            let t = if s.abs() * w < 1e-12 * f0.max(1e-300) {
                target / f0
            } else {
                (-f0 + (f0 * f0 + 2.0 * s * target).max(0.0).sqrt()) / s
            };
            let x = (x0 + t.clamp(0.0, w)).min(x1);
            if self.tilt == 0.0 || rng.random::<f64>() <= (-self.tilt * x).exp() {
                return x;
            }
        }
    }
}

impl LevyMeasure {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!("{what} must be positive and finite, got {v}")))
            }
        };
        match self {
            LevyMeasure::None => Ok(()),
            LevyMeasure::CompoundPoisson { rate, jumps } => {
                if !(*rate >= 0.0) || !rate.is_finite() {
                    return Err(Error::validation(format!("rate must be nonnegative, got {rate}")));
                }
                let (s, m) = jumps.shape_rate();
                pos(s, "jump shape")?;
                pos(m, "jump rate")
            }
            LevyMeasure::Stable { alpha, k } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::validation(format!("alpha must lie in (0,1), got {alpha}")));
                }
                pos(*k, "scale k")
            }
            LevyMeasure::TemperedStable { alpha, k, tilt } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::validation(format!("alpha must lie in (0,1), got {alpha}")));
                }
                pos(*k, "scale k")?;
                if !(*tilt >= 0.0) || !tilt.is_finite() {
                    return Err(Error::validation(format!("tilt must be nonnegative, got {tilt}")));
                }
                Ok(())
            }
            LevyMeasure::Tabulated(t) => {
                t.validate()?;
                let m = t.integral(|x| (x * x).min(1.0), 0.0, f64::INFINITY);
                if !m.is_finite() {
                    return Err(Error::validation("tabulated density: ∫(x²∧1)π(dx) is not finite"));
                }
                Ok(())
            }
        }
    }

    pub fn is_none(&self) -> bool {
        match self {
            LevyMeasure::None => true,
            LevyMeasure::CompoundPoisson { rate, .. } => *rate == 0.0,
            _ => false,
        }
    }

    pub fn finite_activity(&self) -> bool {
        !matches!(self, LevyMeasure::Stable { .. } | LevyMeasure::TemperedStable { .. })
    }

    /// Index of regular variation at 0 of the exponent this measure induces, when declared.
    pub fn regular_variation_index(&self) -> Option<f64> {
        match self {
            LevyMeasure::Stable { alpha, .. } => Some(*alpha),
            LevyMeasure::TemperedStable { alpha, tilt, .. } if *tilt == 0.0 => Some(*alpha),
            _ => None,
        }
    }

    /// Exponential tilt e^{-εx} π(dx).
    pub fn tilt(&self, eps: f64) -> LevyMeasure {
        if eps == 0.0 {
            return self.clone();
        }
        match self {
            LevyMeasure::None => LevyMeasure::None,
            LevyMeasure::CompoundPoisson { rate, jumps } => {
                let (s, m) = jumps.shape_rate();
                let rate = rate * (-s * (eps / m).ln_1p()).exp();
                let jumps = match jumps {
                    JumpLaw::Exponential { .. } => JumpLaw::Exponential { rate: m + eps },
                    JumpLaw::Gamma { .. } => JumpLaw::Gamma { shape: s, rate: m + eps },
                };
                LevyMeasure::CompoundPoisson { rate, jumps }
            }
            LevyMeasure::Stable { alpha, k } => LevyMeasure::TemperedStable { alpha: *alpha, k: *k, tilt: eps },
            LevyMeasure::TemperedStable { alpha, k, tilt } => {
                LevyMeasure::TemperedStable { alpha: *alpha, k: *k, tilt: tilt + eps }
            }
            LevyMeasure::Tabulated(t) => {
                LevyMeasure::Tabulated(TabulatedDensity { tilt: t.tilt + eps, ..t.clone() })
            }
        }
    }

    /// J(λ) = ∫(e^{-λx} − 1) π(dx) ≤ 0.
    pub fn laplace_part(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::CompoundPoisson { rate, jumps } => {
                let (s, m) = jumps.shape_rate();
                rate * (-s * (lambda / m).ln_1p()).exp_m1()
            }
            LevyMeasure::Stable { alpha, k } => -k * lambda.powf(*alpha),
            LevyMeasure::TemperedStable { alpha, k, tilt } => {
                if *tilt == 0.0 {
                    -k * lambda.powf(*alpha)
                } else {
                    -k * tilt.powf(*alpha) * (alpha * (lambda / tilt).ln_1p()).exp_m1()
                }
            }
            LevyMeasure::Tabulated(t) => t.integral(|x| (-lambda * x).exp_m1(), 0.0, f64::INFINITY),
        }
    }

    /// ∫ x e^{-λx} π(dx) (may be +∞ at λ = 0).
    pub fn first_moment_tilted(&self, lambda: f64) -> f64 {
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::CompoundPoisson { rate, jumps } => {
                let (s, m) = jumps.shape_rate();
                rate * s / m * (-(s + 1.0) * (lambda / m).ln_1p()).exp()
            }
            LevyMeasure::Stable { alpha, k } => k * alpha * lambda.powf(alpha - 1.0),
            LevyMeasure::TemperedStable { alpha, k, tilt } => k * alpha * (lambda + tilt).powf(alpha - 1.0),
            LevyMeasure::Tabulated(t) => t.integral(|x| x * (-lambda * x).exp(), 0.0, f64::INFINITY),
        }
    }

    /// ∫ x² e^{-λx} π(dx).
    pub fn second_moment_tilted(&self, lambda: f64) -> f64 {
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::CompoundPoisson { rate, jumps } => {
                let (s, m) = jumps.shape_rate();
                rate * s * (s + 1.0) / (m * m) * (-(s + 2.0) * (lambda / m).ln_1p()).exp()
            }
            LevyMeasure::Stable { alpha, k } => k * alpha * (1.0 - alpha) * lambda.powf(alpha - 2.0),
            LevyMeasure::TemperedStable { alpha, k, tilt } => {
                k * alpha * (1.0 - alpha) * (lambda + tilt).powf(alpha - 2.0)
            }
            LevyMeasure::Tabulated(t) => t.integral(|x| x * x * (-lambda * x).exp(), 0.0, f64::INFINITY),
        }
    }

    /// ∫₀^δ x π(dx).
    pub fn truncated_mean(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            return 0.0;
        }
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::CompoundPoisson { rate, jumps } => {
                let (s, m) = jumps.shape_rate();
                rate * s / m * gamma_lr(s + 1.0, m * delta)
            }
            LevyMeasure::Stable { alpha, k } => {
                stable_constant(*alpha, *k) * delta.powf(1.0 - alpha) / (1.0 - alpha)
            }
            LevyMeasure::TemperedStable { alpha, k, tilt } => {
                stable_constant(*alpha, *k) * delta.powf(1.0 - alpha) * kfun(-alpha, tilt * delta)
            }
            LevyMeasure::Tabulated(t) => t.integral(|x| x, 0.0, delta),
        }
    }

    /// ∫₀^δ x² π(dx).
    pub fn truncated_second(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            return 0.0;
        }
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::CompoundPoisson { rate, jumps } => {
                let (s, m) = jumps.shape_rate();
                rate * s * (s + 1.0) / (m * m) * gamma_lr(s + 2.0, m * delta)
            }
            LevyMeasure::Stable { alpha, k } => {
                stable_constant(*alpha, *k) * delta.powf(2.0 - alpha) / (2.0 - alpha)
            }
            LevyMeasure::TemperedStable { alpha, k, tilt } => {
                stable_constant(*alpha, *k) * delta.powf(2.0 - alpha) * kfun(1.0 - alpha, tilt * delta)
            }
            LevyMeasure::Tabulated(t) => t.integral(|x| x * x, 0.0, delta),
        }
    }

    /// ∫₀¹ x π(dx), the compensator constant of the Lévy–Khintchine form.
    pub fn compensator(&self) -> f64 {
        self.truncated_mean(1.0)
    }

    /// π((δ, ∞)); infinite for infinite-activity kinds at δ = 0.
    pub fn tail_mass(&self, delta: f64) -> f64 {
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::CompoundPoisson { rate, jumps } => {
                let (s, m) = jumps.shape_rate();
                if delta <= 0.0 {
                    *rate
                } else {
                    rate * gamma_ur(s, m * delta)
                }
            }
            LevyMeasure::Stable { alpha, k } => {
                if delta <= 0.0 {
                    f64::INFINITY
                } else {
                    stable_constant(*alpha, *k) * delta.powf(-alpha) / alpha
                }
            }
            LevyMeasure::TemperedStable { alpha, k, tilt } => {
                if delta <= 0.0 {
                    f64::INFINITY
                } else if *tilt == 0.0 {
                    stable_constant(*alpha, *k) * delta.powf(-alpha) / alpha
                } else {
                    stable_constant(*alpha, *k) * tilt.powf(*alpha) * upper_gamma_neg(-alpha, tilt * delta)
                }
            }
            LevyMeasure::Tabulated(t) => t.integral(|_| 1.0, delta.max(0.0), f64::INFINITY),
        }
    }

    /// One jump drawn from π restricted to (δ, ∞), normalized.
    pub fn sample_tail<R: Rng + ?Sized>(&self, delta: f64, rng: &mut R) -> f64 {
        match self {
            LevyMeasure::None => f64::NAN,
            LevyMeasure::CompoundPoisson { jumps, .. } => {
                let (s, m) = jumps.shape_rate();
                let g = GammaDist::new(s, 1.0 / m).expect("validated gamma law");
                loop {
                    let x = g.sample(rng);
                    if x > delta {
                        return x;
                    }
                }
            }
            LevyMeasure::Stable { alpha, .. } => delta * (1.0 - rng.random::<f64>()).powf(-1.0 / alpha),
            LevyMeasure::TemperedStable { alpha, tilt, .. } => {
                if *tilt * delta < 1.0 {
                    loop {
                        let x = delta * (1.0 - rng.random::<f64>()).powf(-1.0 / alpha);
                        if rng.random::<f64>() <= (-tilt * (x - delta)).exp() {
                            return x;
                        }
                    }
                } else {
                    loop {
                        let e: f64 = Exp1.sample(rng);
                        let x = delta + e / tilt;
                        if rng.random::<f64>() <= (x / delta).powf(-1.0 - alpha) {
                            return x;
                        }
                    }
                }
            }
            LevyMeasure::Tabulated(t) => loop {
                let x = t.sample(rng);
                if x > delta {
                    return x;
                }
            },
        }
    }
}
