//! Speed sequences h(n): classification into Z0 / Zc / Zinf, the limits l_t(h),
//! constructions with a prescribed c, and the summability conditions.

#[cfg(test)]
mod tests;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::Flow;
use crate::mechanism::{BranchingMechanism, EsscherLadder};
use crate::policy::NumericPolicy;
use crate::quad::integrate;
use crate::roots::newton_bracketed;
use crate::sequence::{SeqSpec, format_from_ln};
use crate::serde_ext::{f64_ext, opt_f64_ext, vec_f64_ext};

/// Doublings of N probed when both the ladder and h have closed forms.
const PROBE_DOUBLINGS: u32 = 20;
/// Probing stops once ε_n falls below this (φ(ε) loses meaning near underflow).
const PROBE_EPS_FLOOR: f64 = 1e-280;

#[derive(Clone, Debug)]
pub struct SpeedSequence {
    label: String,
    seq: SeqSpec,
    n0: Option<u64>,
}

impl SpeedSequence {
    /// Parses a sequence spec; `construct:c` (c a number or `inf`) builds h_c on the ladder.
    pub fn parse(spec: &str, ladder: &EsscherLadder, theta: Option<f64>) -> Result<Self> {
        if let Some(c) = spec.strip_prefix("construct:") {
            let c = parse_c(c)?;
            let theta = theta.unwrap_or_else(|| ladder.base().default_theta());
            return construct_speed_for_c(ladder, c, theta);
        }
        Ok(SpeedSequence { label: spec.to_string(), seq: SeqSpec::parse(spec, ladder.first())?, n0: None })
    }

    pub fn from_ln_values(label: impl Into<String>, rows: &[(u64, f64)]) -> Self {
        let map = rows.iter().copied().collect();
        SpeedSequence { label: label.into(), seq: SeqSpec::Table(map), n0: None }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn extendable(&self) -> bool {
        self.seq.extendable()
    }

    /// Index from which a constructed sequence is decreasing.
    pub fn construction_n0(&self) -> Option<u64> {
        self.n0
    }

    pub fn ln_h(&self, n: u64) -> Result<f64> {
        self.seq
            .ln_value(n)?
            .ok_or_else(|| Error::domain(format!("speed sequence '{}' has no value at n={n}", self.label)))
    }

    pub fn h(&self, n: u64) -> Result<f64> {
        Ok(self.ln_h(n)?.exp())
    }

    pub fn ln_h_beyond(&self, n: f64) -> Result<Option<f64>> {
        if !self.extendable() {
            return Ok(None);
        }
        self.seq.ln_value_f(n)
    }

    /// Smallest n0 with h strictly decreasing on n0..=N.
    pub fn decreasing_from(&self, ladder: &EsscherLadder) -> Result<u64> {
        let mut n0 = ladder.last();
        let mut next = self.ln_h(ladder.last())?;
        for n in (ladder.first()..ladder.last()).rev() {
            let v = self.ln_h(n)?;
            if !(v > next) {
                break;
            }
            n0 = n;
            next = v;
        }
        Ok(n0)
    }

    pub fn rows(&self, ladder: &EsscherLadder) -> Result<Vec<(u64, f64)>> {
        ladder.indices().map(|n| Ok((n, self.ln_h(n)?))).collect()
    }
}

pub fn parse_c(s: &str) -> Result<f64> {
    let s = s.trim();
    if matches!(s, "inf" | "infinity" | "Inf" | "∞") {
        return Ok(f64::INFINITY);
    }
    let c: f64 = s.parse().map_err(|_| Error::validation(format!("'{s}' is not a value of c")))?;
    if !(c >= 0.0) {
        return Err(Error::domain(format!("c must be >= 0, got {c}")));
    }
    Ok(c)
}

/// ∫_{h}^θ du/φ(u) for a mechanism with finite φ'(0), given ln h (h may underflow).
/// Below a curvature-scaled cutoff φ(u) = a u − v u²/2 + O(u³) is integrated exactly.
pub fn level_integral_ln(mech: &BranchingMechanism, ln_h: f64, theta: f64) -> Result<f64> {
    let rho = mech.rho();
    if !(theta > 0.0 && theta < rho) {
        return Err(Error::domain(format!("theta must lie in (0, rho_n) = (0, {rho}), got {theta}")));
    }
    let ln_t = theta.ln();
    if ln_h == ln_t {
        return Ok(0.0);
    }
    if ln_h > ln_t {
        if !(ln_h < rho.ln()) {
            return Err(Error::domain("h must stay below rho_n"));
        }
        return Ok(-numeric_part(mech, ln_t, ln_h)?);
    }
    let a = -mech.varphi_prime(0.0);
    if !(a > 0.0 && a.is_finite()) {
        return numeric_part(mech, ln_h.max(-700.0), ln_t);
    }
    let v = mech.varphi_second(0.0);
    let ln_us = if v > 0.0 { (1e-5 * a / v).ln() } else { ln_t - 12.0 }.min(ln_t);
    let mut total = 0.0;
    if ln_h < ln_us {
        total += (ln_us - ln_h) / a + v * (ln_us.exp() - ln_h.exp()) / (2.0 * a * a);
    }
    Ok(total + numeric_part(mech, ln_h.max(ln_us), ln_t)?)
}

fn numeric_part(mech: &BranchingMechanism, lo: f64, hi: f64) -> Result<f64> {
    let f = |s: f64| {
        let u = s.exp();
        u / mech.phi(u)
    };
    let mut total = 0.0;
    let mut a = lo;
    while a < hi {
        let b = (a + 1.0).min(hi);
        total += integrate(f, a, b, 1e-300, 1e-12, 400)?.value;
        a = b;
    }
    Ok(total)
}

/// I_n(θ) = ∫_{h(n)}^θ du/φ^(n)(u).
pub fn shifted_integral(ladder: &EsscherLadder, n: u64, h_n: f64, theta: f64) -> Result<f64> {
    if !(h_n > 0.0) {
        return Err(Error::domain(format!("h(n) must be positive, got {h_n}")));
    }
    shifted_integral_ln(ladder, n, h_n.ln(), theta)
}

pub fn shifted_integral_ln(ladder: &EsscherLadder, n: u64, ln_h: f64, theta: f64) -> Result<f64> {
    level_integral_ln(ladder.level(n)?, ln_h, theta)
}

/// ∫₀^θ du/φ(u) for the (explosive) base mechanism.
pub fn reference_integral(base: &BranchingMechanism, theta: f64) -> Result<f64> {
    let flow = Flow::new(base)?;
    match flow.rate() {
        Some(r) if r.finite_at_zero() && theta < base.rho() => Ok(r.f(theta)),
        _ => Err(Error::domain("base mechanism must be explosive with theta < rho")),
    }
}

/// |ln h(n)| / φ'(ε_n).
pub fn rv_ratio(ladder: &EsscherLadder, h: &SpeedSequence, n: u64) -> Result<f64> {
    let ln_h = h.ln_h(n)?;
    Ok(ln_h.abs() / ladder.base().phi_prime(ladder.eps(n)?))
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum SpeedClass {
    Z0,
    Zc,
    Zinf,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct Evidence {
    pub n: Vec<u64>,
    #[serde(serialize_with = "vec_f64_ext")]
    pub ln_h: Vec<f64>,
    /// I_n(θ).
    #[serde(serialize_with = "vec_f64_ext")]
    pub shifted_integral: Vec<f64>,
    /// I_n(θ) − ∫₀^θ du/φ.
    #[serde(serialize_with = "vec_f64_ext")]
    pub excess: Vec<f64>,
    #[serde(serialize_with = "vec_f64_ext")]
    pub rv_ratio: Vec<f64>,
    /// φ(h(n)+ε_n)/φ(ε_n).
    #[serde(serialize_with = "vec_f64_ext")]
    pub phi_ratio: Vec<f64>,
    #[serde(serialize_with = "vec_f64_ext")]
    pub rv_probe_n: Vec<f64>,
    #[serde(serialize_with = "vec_f64_ext")]
    pub rv_probe_ratio: Vec<f64>,
    pub reference_integral: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub class: SpeedClass,
    #[serde(serialize_with = "f64_ext")]
    pub c_estimate: f64,
    #[serde(serialize_with = "f64_ext")]
    pub c_uncertainty: f64,
    /// Which test decided: rv-ratio, phi-ratio, integral, rv-ratio-finite or none.
    pub criterion: String,
    pub theta: f64,
    pub first: u64,
    pub levels: u64,
    pub speed: String,
    #[serde(serialize_with = "opt_f64_ext")]
    pub regular_variation_index: Option<f64>,
    pub decreasing_from: u64,
    pub h_first_below_rho: bool,
    pub evidence: Evidence,
}

enum Trend {
    Settled(f64, f64),
    Growing,
    Other,
}

/// Last-quarter behaviour of a sequence: settled (spread < tol(1+|v|)) or growing past 1/tol.
fn trend(v: &[f64], tol: f64) -> Trend {
    let k = (v.len() / 4).max(2).min(v.len());
    let tail = &v[v.len() - k..];
    let last = *tail.last().unwrap();
    if tail.iter().any(|x| !x.is_finite()) {
        return if last == f64::INFINITY { Trend::Growing } else { Trend::Other };
    }
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= tol * (1.0 + last.abs()) {
        return Trend::Settled(last, hi - lo);
    }
    if tail.windows(2).all(|w| w[1] > w[0]) && last > 1.0 / tol {
        return Trend::Growing;
    }
    Trend::Other
}

fn verdict(value: f64, tol: f64) -> (SpeedClass, f64) {
    if value.abs() <= tol {
        (SpeedClass::Z0, 0.0)
    } else if value > 0.0 {
        (SpeedClass::Zc, value)
    } else {
        (SpeedClass::Inconclusive, value)
    }
}

/// Classifies h on the ladder at level N = ladder.last().
pub fn classify(
    ladder: &EsscherLadder,
    h: &SpeedSequence,
    theta: Option<f64>,
    pol: &NumericPolicy,
) -> Result<ClassificationReport> {
    let base = ladder.base();
    if !base.is_explosive() {
        return Err(Error::domain("classification needs an explosive base mechanism"));
    }
    let theta = theta.unwrap_or_else(|| base.default_theta());
    let tol = pol.stabilization_tol;
    let i0 = reference_integral(base, theta)?;
    let rv = base.regular_variation_index();

    let mut ev = Evidence {
        n: vec![],
        ln_h: vec![],
        shifted_integral: vec![],
        excess: vec![],
        rv_ratio: vec![],
        phi_ratio: vec![],
        rv_probe_n: vec![],
        rv_probe_ratio: vec![],
        reference_integral: i0,
    };
    for n in ladder.indices() {
        let ln_h = h.ln_h(n)?;
        let eps = ladder.eps(n)?;
        let i_n = if ln_h < theta.ln() { shifted_integral_ln(ladder, n, ln_h, theta)? } else { f64::NAN };
        ev.n.push(n);
        ev.ln_h.push(ln_h);
        ev.shifted_integral.push(i_n);
        ev.excess.push(i_n - i0);
        ev.rv_ratio.push(ln_h.abs() / base.phi_prime(eps));
        ev.phi_ratio.push(base.phi(ln_h.exp() + eps) / base.phi(eps));
    }

    let mut report = ClassificationReport {
        class: SpeedClass::Inconclusive,
        c_estimate: f64::NAN,
        c_uncertainty: f64::NAN,
        criterion: "none".into(),
        theta,
        first: ladder.first(),
        levels: ladder.last(),
        speed: h.label().to_string(),
        regular_variation_index: rv,
        decreasing_from: h.decreasing_from(ladder)?,
        h_first_below_rho: h.ln_h(ladder.first())? < ladder.rho(ladder.first())?.ln(),
        evidence: ev,
    };
    let set = |r: &mut ClassificationReport, class, c, unc, crit: &str| {
        r.class = class;
        r.c_estimate = c;
        r.c_uncertainty = unc;
        r.criterion = crit.into();
    };

    // (i) ratio limit under regular variation, probed along n = N 2^j
    if rv.is_some() && ladder.extendable() && h.extendable() {
        let nn = ladder.last() as f64;
        for j in 0..=PROBE_DOUBLINGS {
            let n = nn * 2f64.powi(j as i32);
            let (Some(eps), Some(ln_h)) = (ladder.eps_beyond(n)?, h.ln_h_beyond(n)?) else { break };
            if !(eps > PROBE_EPS_FLOOR) {
                break;
            }
            report.evidence.rv_probe_n.push(n);
            report.evidence.rv_probe_ratio.push(ln_h.abs() / base.phi_prime(eps));
        }
        let probe = &report.evidence.rv_probe_ratio;
        if probe.len() >= 4 {
            let k = probe.len();
            let last = probe[k - 1];
            let d1 = (probe[k - 1] - probe[k - 2]).abs();
            let d2 = (probe[k - 2] - probe[k - 3]).abs();
            if d1.max(d2) <= tol * (1.0 + last.abs()) {
                let (class, c) = verdict(last, tol);
                set(&mut report, class, c, d1, "rv-ratio");
                return Ok(report);
            }
            if probe[k - 4..].windows(2).all(|w| w[1] > w[0]) && last > 1.0 / tol {
                set(&mut report, SpeedClass::Zinf, f64::INFINITY, 0.0, "rv-ratio");
                return Ok(report);
            }
        }
    }

    // (ii) liminf φ(h+ε)/φ(ε) > 1 is sufficient for Z0
    {
        let pr = &report.evidence.phi_ratio;
        let k = (pr.len() / 4).max(2).min(pr.len());
        let m = pr[pr.len() - k..].iter().cloned().fold(f64::INFINITY, f64::min);
        if m > 1.0 + tol {
            set(&mut report, SpeedClass::Z0, 0.0, 0.0, "phi-ratio");
            return Ok(report);
        }
    }

    // (iii) stabilization of I_n(θ) − ∫₀^θ du/φ
    match trend(&report.evidence.excess, tol) {
        Trend::Settled(c, spread) => {
            let (class, c) = verdict(c, tol);
            let unc = theta_sweep(ladder, h, theta, c)?.max(spread);
            set(&mut report, class, c, unc, "integral");
            return Ok(report);
        }
        Trend::Growing => {
            set(&mut report, SpeedClass::Zinf, f64::INFINITY, 0.0, "integral");
            return Ok(report);
        }
        Trend::Other => {}
    }

    // (iv) ratio on the available levels only
    if rv.is_some() {
        match trend(&report.evidence.rv_ratio, tol) {
            Trend::Settled(c, spread) => {
                let (class, c) = verdict(c, tol);
                set(&mut report, class, c, spread, "rv-ratio-finite");
            }
            Trend::Growing => set(&mut report, SpeedClass::Zinf, f64::INFINITY, 0.0, "rv-ratio-finite"),
            Trend::Other => {}
        }
    }
    Ok(report)
}

/// Spread of the level-N excess over θ, θ/2, θ/4 around c.
fn theta_sweep(ladder: &EsscherLadder, h: &SpeedSequence, theta: f64, c: f64) -> Result<f64> {
    let n = ladder.last();
    let ln_h = h.ln_h(n)?;
    let mut spread: f64 = 0.0;
    for th in [theta, theta / 2.0, theta / 4.0] {
        if ln_h >= th.ln() {
            continue;
        }
        let e = shifted_integral_ln(ladder, n, ln_h, th)? - reference_integral(ladder.base(), th)?;
        spread = spread.max((e - c).abs());
    }
    Ok(spread)
}

/// h_c(n) = F_n^{-1}(∫₀^θ du/φ + c) with F_n(x) = ∫_x^θ du/φ^(n)(u); c = ∞ uses + n.
pub fn construct_speed_for_c(ladder: &EsscherLadder, c: f64, theta: f64) -> Result<SpeedSequence> {
    if !(c >= 0.0) {
        return Err(Error::domain(format!("target c must be >= 0, got {c}")));
    }
    let base = ladder.base();
    if !(theta > 0.0 && theta < ladder.rho(ladder.first())?) {
        return Err(Error::domain(format!("theta must lie in (0, rho_0), got {theta}")));
    }
    let i0 = reference_integral(base, theta)?;
    let ln_t = theta.ln();
    let mut rows = Vec::new();
    for n in ladder.indices() {
        let target = i0 + if c.is_infinite() { n as f64 } else { c };
        let mech = ladder.level(n)?;
        let f = |s: f64| level_integral_ln(mech, s, theta);
        // G(s) = target − F_n(e^s) increases in s
        let mut lo = ln_t - 1.0;
        while f(lo)? < target {
            lo = ln_t - 2.0 * (ln_t - lo);
            if lo < -1e12 {
                return Err(Error::numeric("construction target out of reach", lo));
            }
        }
        let hi = ln_t;
        let mut err = None;
        let s = newton_bracketed(
            |s| match f(s) {
                Ok(v) => {
                    let u = s.exp();
                    (target - v, u / mech.phi(u))
                }
                Err(e) => {
                    err.get_or_insert(e);
                    (f64::NAN, f64::NAN)
                }
            },
            lo,
            hi,
            0.5 * (lo + hi),
            1e-14,
        );
        if let Some(e) = err {
            return Err(e);
        }
        rows.push((n, s));
    }
    let label = if c.is_infinite() { "construct:inf".to_string() } else { format!("construct:{c}") };
    let mut seq = SpeedSequence::from_ln_values(label, &rows);
    seq.n0 = Some(seq.decreasing_from(ladder)?);
    Ok(seq)
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowLimit {
    pub t: f64,
    pub n: Vec<u64>,
    /// u_t^{(n)}(h(n)).
    pub values: Vec<f64>,
    pub tail: f64,
    pub stabilized: bool,
    /// t − F(u_t^{(N)}(h(N))), an estimate of c(h) when the tail is positive.
    #[serde(serialize_with = "opt_f64_ext")]
    pub c_from_tail: Option<f64>,
}

/// u_t^{(n)}(h(n)) over the ladder.
pub fn flow_limit_l(ladder: &EsscherLadder, h: &SpeedSequence, t: f64, pol: &NumericPolicy) -> Result<FlowLimit> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("t must be >= 0, got {t}")));
    }
    let mut n_out = Vec::new();
    let mut values = Vec::new();
    for n in ladder.indices() {
        let flow = Flow::new(ladder.level(n)?)?;
        let ln_h = h.ln_h(n)?;
        let u = if t == 0.0 { ln_h.exp() } else { flow.ut_ln(t, ln_h)? };
        n_out.push(n);
        values.push(u);
    }
    let tail = *values.last().unwrap();
    let stabilized = matches!(trend(&values, pol.stabilization_tol), Trend::Settled(..));
    let base = Flow::new(ladder.base())?;
    let c_from_tail = match base.rate() {
        Some(r) if r.finite_at_zero() && tail > 0.0 && tail < ladder.base().rho() => Some(t - r.f(tail)),
        _ => None,
    };
    Ok(FlowLimit { t, n: n_out, values, tail, stabilized, c_from_tail })
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Summability {
    Summable,
    Divergent,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesCheck {
    pub partial_sum: f64,
    #[serde(serialize_with = "vec_f64_ext")]
    pub terms: Vec<f64>,
    /// Decay exponent p of the terms (~ n^{-p}) from the tail, or +∞ for geometric decay.
    #[serde(serialize_with = "f64_ext")]
    pub decay_exponent: f64,
    pub verdict: Summability,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummabilityReport {
    /// Σ φ(ε_n)/φ(ε_n + h(n)).
    pub tilt_series: SeriesCheck,
    /// Σ φ(ε_n)/h(n).
    pub killing_series: SeriesCheck,
}

pub fn summability_checks(ladder: &EsscherLadder, h: &SpeedSequence) -> Result<SummabilityReport> {
    let base = ladder.base();
    let ln_terms = |eps: f64, ln_h: f64| {
        let pe = base.phi(eps);
        let a = pe.ln() - base.phi(eps + ln_h.exp()).ln();
        let b = pe.ln() - ln_h;
        (a, b)
    };
    let mut ta = Vec::new();
    let mut tb = Vec::new();
    let mut ns = Vec::new();
    for n in ladder.indices() {
        let (a, b) = ln_terms(ladder.eps(n)?, h.ln_h(n)?);
        ns.push(n as f64);
        ta.push(a);
        tb.push(b);
    }
    // far-tail probes for closed forms
    let mut pa = Vec::new();
    let mut pb = Vec::new();
    let mut pn = Vec::new();
    if ladder.extendable() && h.extendable() {
        for j in 0..=PROBE_DOUBLINGS {
            let n = ladder.last() as f64 * 2f64.powi(j as i32);
            let (Some(eps), Some(ln_h)) = (ladder.eps_beyond(n)?, h.ln_h_beyond(n)?) else { break };
            if !(eps > PROBE_EPS_FLOOR) {
                break;
            }
            let (a, b) = ln_terms(eps, ln_h);
            pn.push(n);
            pa.push(a);
            pb.push(b);
        }
    }
    Ok(SummabilityReport {
        tilt_series: series_check(&ns, &ta, &pn, &pa),
        killing_series: series_check(&ns, &tb, &pn, &pb),
    })
}

/// Verdict from ln-terms: geometric decay or a power tail with exponent p > 1.1 is summable,
/// p < 0.9 divergent.
fn series_check(ns: &[f64], ln_t: &[f64], probe_n: &[f64], probe_ln: &[f64]) -> SeriesCheck {
    let terms: Vec<f64> = ln_t.iter().map(|l| l.exp()).collect();
    let partial_sum = terms.iter().sum();
    let (xs, ys) = if probe_n.len() >= 3 { (probe_n, probe_ln) } else { (ns, ln_t) };
    let k = ys.len();
    let mut p = f64::NAN;
    let mut geometric = false;
    if k >= 3 {
        let (n1, n2) = (xs[k / 2], xs[k - 1]);
        let (l1, l2) = (ys[k / 2], ys[k - 1]);
        if l2 == f64::NEG_INFINITY {
            geometric = true;
        } else {
            p = -(l2 - l1) / (n2 / n1).ln();
            // geometric: ln-terms fall at least linearly in n
            let slope = (l2 - l1) / (n2 - n1);
            geometric = slope < -0.01 && p > 5.0;
        }
    }
    let verdict = if geometric {
        p = f64::INFINITY;
        Summability::Summable
    } else if p > 1.1 {
        Summability::Summable
    } else if p < 0.9 {
        Summability::Divergent
    } else {
        Summability::Inconclusive
    };
    SeriesCheck { partial_sum, terms, decay_exponent: p, verdict }
}

/// CSV rows "n,h" for a sequence over the ladder.
pub fn speed_csv(ladder: &EsscherLadder, h: &SpeedSequence) -> Result<String> {
    let mut out = String::from("n,h\n");
    for (n, l) in h.rows(ladder)? {
        out.push_str(&format!("{n},{}\n", format_from_ln(l)));
    }
    Ok(out)
}
