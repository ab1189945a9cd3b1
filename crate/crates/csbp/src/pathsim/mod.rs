//! Coupled simulation of the Esscher family {X^(ε)} and the limit X.
//!
//! One Poisson field of jumps with intensity 1_{x>δ} e^{-ε_min x} π(dx) dt
//! carries a uniform mark per jump; a jump of size x enters the level with
//! tilt ε iff u ≤ e^{-(ε−ε_min)x}. Brownian increments (and, in Gaussian mode,
//! the small-jump surrogate) are shared by every level. Between events each
//! level moves linearly with its own slope, so the Lamperti clock is exact on
//! every piece.

#[cfg(test)]
mod tests;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lamperti::{piece_clock, ExitReason, KilledValue, PassageRecord, PathView};
use crate::mechanism::{BranchingMechanism, EsscherLadder, LevyMeasure};
use crate::rng::{stream, Role};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SmallJumps {
    #[default]
    CompensateMean,
    Gaussian,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimPolicy {
    /// Horizon in X-time.
    #[serde(serialize_with = "crate::serde_ext::f64_ext")]
    pub horizon: f64,
    /// Grid step for the continuous part.
    pub dt: f64,
    /// Small-jump cutoff floor.
    pub delta: f64,
    /// Cutoff relative to the smallest running level value (0 keeps δ fixed).
    pub delta_rel: f64,
    pub small_jumps: SmallJumps,
    pub seed: u64,
    /// Per-replication budget of simulated segments.
    pub max_events: u64,
    /// Gaussian closure of far passages once X ≥ κ·max(x0, v/b², v/b); 0 disables it.
    pub closure_kappa: f64,
    /// Passages whose clock exceeds this value are censored.
    #[serde(serialize_with = "crate::serde_ext::f64_ext")]
    pub clock_cap: f64,
}

impl Default for SimPolicy {
    fn default() -> Self {
        SimPolicy {
            horizon: 1e9,
            dt: 1e-3,
            delta: 1e-6,
            delta_rel: 1e-3,
            small_jumps: SmallJumps::CompensateMean,
            seed: 0,
            max_events: 100_000_000,
            closure_kappa: 1e3,
            clock_cap: f64::INFINITY,
        }
    }
}

impl SimPolicy {
    pub fn validate(&self, field: &LevyMeasure) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::validation(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.delta >= 0.0 && self.delta_rel >= 0.0) {
            return Err(Error::validation("cutoffs must be nonnegative"));
        }
        if !field.finite_activity() && self.delta == 0.0 && self.delta_rel == 0.0 {
            return Err(Error::validation("δ = 0 is only allowed for finite-activity measures"));
        }
        if !field.finite_activity() && self.delta == 0.0 {
            return Err(Error::validation("infinite-activity measures need a positive cutoff floor δ"));
        }
        if !(self.closure_kappa >= 0.0) {
            return Err(Error::validation("closure_kappa must be nonnegative"));
        }
        Ok(())
    }
}

/// Mark inclusion rule: a jump of size x with mark u enters the level at relative tilt d iff u ≤ e^{-d x}.
pub fn included(mark: f64, rel_eps: f64, x: f64) -> bool {
    rel_eps * x <= -mark.ln()
}

/// The levels simulated together, ordered by decreasing ε (ε = 0 is the limit X).
#[derive(Clone, Debug)]
pub struct LevelSet {
    base: BranchingMechanism,
    labels: Vec<i64>,
    eps: Vec<f64>,
    mechs: Vec<BranchingMechanism>,
    eps_min: f64,
    field: LevyMeasure,
    sigma: f64,
}

impl LevelSet {
    /// Levels with tilts `eps` (strictly decreasing, ≥ 0) and free-form labels.
    pub fn new(base: &BranchingMechanism, eps: Vec<f64>, labels: Vec<i64>) -> Result<Self> {
        if eps.is_empty() || eps.len() != labels.len() {
            return Err(Error::validation("level set needs one label per tilt and at least one level"));
        }
        if eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) || eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::validation("level tilts must be nonnegative and strictly decreasing"));
        }
        let mechs = eps.iter().map(|&e| base.esscher_shift(e)).collect::<Result<Vec<_>>>()?;
        let eps_min = *eps.last().unwrap();
        Ok(LevelSet {
            base: base.clone(),
            labels,
            field: base.measure().tilt(eps_min),
            eps,
            mechs,
            eps_min,
            sigma: base.sigma2().sqrt(),
        })
    }

    /// Ladder levels `ns` (any order), plus the limit X labelled −1 when requested.
    pub fn from_ladder(ladder: &EsscherLadder, ns: &[u64], limit: bool) -> Result<Self> {
        let mut ns = ns.to_vec();
        ns.sort_unstable();
        ns.dedup();
        let mut eps = Vec::new();
        let mut labels = Vec::new();
        for n in ns {
            eps.push(ladder.eps(n)?);
            labels.push(n as i64);
        }
        if limit {
            eps.push(0.0);
            labels.push(-1);
        }
        Self::new(ladder.base(), eps, labels)
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn mechanism(&self, j: usize) -> &BranchingMechanism {
        &self.mechs[j]
    }

    pub fn base(&self) -> &BranchingMechanism {
        &self.base
    }

    pub fn field(&self) -> &LevyMeasure {
        &self.field
    }

    pub fn eps_min(&self) -> f64 {
        self.eps_min
    }

    pub fn index_of(&self, label: i64) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    fn gridded(&self, pol: &SimPolicy) -> bool {
        self.sigma > 0.0 || (pol.small_jumps == SmallJumps::Gaussian && !self.field.finite_activity())
    }

    /// Per-level slope and Gaussian small-jump scale at cutoff δ; slopes are made
    /// nondecreasing along the set so that pathwise order survives rounding.
    pub fn slopes(&self, delta: f64, mode: SmallJumps) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(self.len());
        for (j, m) in self.mechs.iter().enumerate() {
            let mut s = m.path_drift() + m.measure().truncated_mean(delta);
            if j > 0 {
                s = s.max(out[j - 1].0);
            }
            let g = match mode {
                SmallJumps::CompensateMean => 0.0,
                SmallJumps::Gaussian => m.measure().truncated_second(delta).sqrt(),
            };
            out.push((s, g));
        }
        out
    }

    /// (b, v) = (−varphi'(0), varphi''(0)) when both are finite and b > 0.
    fn closure_params(&self, j: usize) -> Option<(f64, f64)> {
        let m = &self.mechs[j];
        let b = -m.varphi_prime(0.0);
        let v = m.varphi_second(0.0);
        (b.is_finite() && b > 0.0 && v.is_finite()).then_some((b, v))
    }
}

/// Bound on |varphi_δ(λ) − varphi(λ)| for the δ-truncated exponent of a level measure.
pub fn exponent_gap(measure: &LevyMeasure, delta: f64, lambda: f64, mode: SmallJumps) -> f64 {
    let m2 = measure.truncated_second(delta);
    match mode {
        SmallJumps::CompensateMean => 0.5 * lambda * lambda * m2,
        SmallJumps::Gaussian => lambda.powi(3) * delta * m2 / 6.0,
    }
}

/// Exponent gap at the path's own scale when δ = max(δ0, δ_rel·X): sup over x of
/// gap(δ(x), 1/x)/|varphi(1/x)| on a log grid of x ∈ [x_lo, x_hi].
pub fn relative_truncation_bound(mech: &BranchingMechanism, pol: &SimPolicy, x_lo: f64, x_hi: f64) -> f64 {
    if mech.measure().finite_activity() {
        return 0.0;
    }
    let steps = 200;
    let (a, b) = (x_lo.ln(), x_hi.max(x_lo).ln());
    (0..=steps)
        .map(|i| {
            let x = (a + (b - a) * i as f64 / steps as f64).exp();
            let lam = 1.0 / x;
            let delta = pol.delta.max(pol.delta_rel * x);
            exponent_gap(mech.measure(), delta, lam, pol.small_jumps) / mech.varphi(lam).abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// What a replication must resolve at one level.
#[derive(Clone, Debug, Default)]
pub struct LevelTask {
    /// ln of the passage targets, increasing.
    pub ln_targets: Vec<f64>,
    /// Killing window e/h (X-time).
    pub window: Option<f64>,
}

pub struct RunRequest<'a> {
    pub set: &'a LevelSet,
    pub x0: f64,
    /// One per level, or empty.
    pub tasks: &'a [LevelTask],
    /// Times at which every level's X value is recorded.
    pub sample_times: &'a [f64],
    /// Keep the full event record (runs to the horizon).
    pub record: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelOutcome {
    pub passages: Vec<PassageRecord>,
    /// Passage resolved by the Gaussian closure.
    pub closure: bool,
    pub window: Option<KilledValue>,
    pub samples: Vec<f64>,
    pub hit_zero_at: Option<f64>,
    /// −Σ ln(1 − p) over grid pieces, p = exp(−2 x_a x_b/(s² Δ)) the chance that the bridge
    /// dips below zero; 1 − e^{−bridge_miss} is the chance of a crossing the grid did not see.
    pub bridge_miss: f64,
    /// Σ |trapezoid − exact| clock over grid pieces.
    pub clock_err: f64,
    /// Clock reached when the level stopped.
    pub clock: f64,
}

/// One segment of the event record: pieces end at `t`; a jump of size `jump` (0 if none) with mark `mark` follows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Seg {
    pub t: f64,
    pub w: f64,
    pub g: f64,
    pub delta: f64,
    pub jump: f64,
    pub mark: f64,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct MarkedJump {
    pub time: f64,
    pub size: f64,
    pub mark: f64,
}

/// One realization of the field and skeleton, viewable at any tilt ε ≥ ε_min.
#[derive(Clone, Debug)]
pub struct CoupledFamilySample {
    pub rep: u64,
    pub x0: f64,
    pub horizon: f64,
    pub gridded: bool,
    pub eps_min: f64,
    pub mode: SmallJumps,
    pub segs: Vec<Seg>,
}

#[derive(Clone, Debug)]
pub struct Replication {
    pub levels: Vec<LevelOutcome>,
    pub events: u64,
    pub delta_max: f64,
    pub sample: Option<CoupledFamilySample>,
}

struct Lv {
    x: f64,
    clock: f64,
    alive: bool,
    done: bool,
    ln_targets: Vec<f64>,
    passages: Vec<PassageRecord>,
    window: Option<f64>,
    window_value: Option<KilledValue>,
    samples: Vec<f64>,
    hit_zero_at: Option<f64>,
    bridge: f64,
    clock_err: f64,
    closure: bool,
}

impl Lv {
    fn pending_targets(&self) -> bool {
        self.passages.len() < self.ln_targets.len()
    }

    fn reach(&mut self, clock: f64, x_time: f64) {
        let k = self.passages.len();
        self.passages.push(PassageRecord {
            target: self.ln_targets[k].exp(),
            sigma: clock,
            x_time,
            reason: ExitReason::Reached,
        });
    }

    fn fail_rest(&mut self, reason: ExitReason) {
        while self.pending_targets() {
            let k = self.passages.len();
            self.passages.push(PassageRecord { target: self.ln_targets[k].exp(), sigma: f64::INFINITY, x_time: f64::NAN, reason });
        }
    }

    /// Targets crossed on a piece from xa to xb (> 0) of length len starting at s.
    fn cross(&mut self, xa: f64, xb: f64, s: f64, len: f64) {
        while self.pending_targets() {
            let ly = self.ln_targets[self.passages.len()];
            if ly > xb.ln() {
                break;
            }
            let y = ly.exp();
            if y <= xa || len == 0.0 {
                let c = self.clock;
                self.reach(c, s + len);
            } else {
                let f = ((y - xa) / (xb - xa)).clamp(0.0, 1.0);
                let c = self.clock + piece_clock(xa, y, f * len);
                self.reach(c, s + f * len);
            }
        }
    }

    fn kill(&mut self, tau: f64) {
        self.alive = false;
        self.hit_zero_at = Some(tau);
        self.fail_rest(ExitReason::HitZeroFirst);
        if self.window_value.is_none() && self.window.is_some() {
            self.window_value = Some(KilledValue { value: 0.0, killed_by_zero: true, censored: false });
        }
    }

    fn outcome(self) -> LevelOutcome {
        LevelOutcome {
            passages: self.passages,
            closure: self.closure,
            window: self.window_value,
            samples: self.samples,
            hit_zero_at: self.hit_zero_at,
            bridge_miss: self.bridge,
            clock_err: self.clock_err,
            clock: self.clock,
        }
    }
}

/// Mean and variance of ∫ ds/X from level x to y for drift b and variance rate v (first order in v).
pub fn closure_moments(b: f64, v: f64, ln_x: f64, ln_y: f64) -> (f64, f64) {
    let ix = (-ln_x).exp();
    let iy = (-ln_y).exp();
    let r = (ln_x - ln_y).exp();
    let mean = (ln_y - ln_x) / b + v / (b * b) * (0.5 * ix - iy + 0.5 * r * iy);
    let var = v / (b * b * b) * (ix - iy);
    (mean, var.max(0.0))
}

/// Simulate one replication of the coupled family.
pub fn simulate_replication(req: &RunRequest, pol: &SimPolicy, rep: u64) -> Result<Replication> {
    let set = req.set;
    let nl = set.len();
    if !(req.x0 > 0.0 && req.x0.is_finite()) {
        return Err(Error::validation(format!("x0 must be positive, got {}", req.x0)));
    }
    if !req.tasks.is_empty() && req.tasks.len() != nl {
        return Err(Error::validation("one task per level is required"));
    }
    pol.validate(&set.field)?;
    if req.sample_times.windows(2).any(|w| w[1] <= w[0]) || req.sample_times.iter().any(|&t| !(t >= 0.0 && t <= pol.horizon)) {
        return Err(Error::validation("sample times must be increasing and within the horizon"));
    }

    let gridded = set.gridded(pol);
    let finite = set.field.finite_activity();
    let adaptive = !finite && pol.delta_rel > 0.0;
    let target_delta = |xmin: f64| if finite { 0.0 } else { pol.delta.max(pol.delta_rel * xmin) };
    let rel: Vec<f64> = set.eps.iter().map(|e| e - set.eps_min).collect();
    let closure: Vec<Option<(f64, f64, f64)>> = (0..nl)
        .map(|j| {
            if pol.closure_kappa == 0.0 || req.record {
                return None;
            }
            set.closure_params(j).map(|(b, v)| (b, v, pol.closure_kappa * req.x0.max(v / (b * b)).max(v / b)))
        })
        .collect();

    let mut rng_j = stream(pol.seed, rep, Role::Jumps);
    let mut rng_m = stream(pol.seed, rep, Role::Marks);
    let mut rng_g = stream(pol.seed, rep, Role::Gaussian);
    let mut rng_a = stream(pol.seed, rep, Role::Aux);

    let mut lv: Vec<Lv> = (0..nl)
        .map(|j| {
            let task = req.tasks.get(j).cloned().unwrap_or_default();
            Lv {
                x: req.x0,
                clock: 0.0,
                alive: true,
                done: false,
                ln_targets: task.ln_targets,
                passages: Vec::new(),
                window: task.window,
                window_value: None,
                samples: Vec::with_capacity(req.sample_times.len()),
                hit_zero_at: None,
                bridge: 0.0,
                clock_err: 0.0,
                closure: false,
            }
        })
        .collect();
    for l in lv.iter_mut() {
        if l.ln_targets.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::validation("passage targets must be increasing"));
        }
        l.cross(req.x0, req.x0, 0.0, 0.0);
        if let Some(w) = l.window {
            if !(w >= 0.0) {
                return Err(Error::validation("killing window must be nonnegative"));
            }
            if w == 0.0 {
                l.window_value = Some(KilledValue { value: 0.0, killed_by_zero: false, censored: false });
            } else if w > pol.horizon {
                l.window_value = Some(KilledValue { value: f64::NAN, killed_by_zero: false, censored: true });
            }
        }
    }

    let mut checkpoints: Vec<f64> = req.sample_times.to_vec();
    checkpoints.extend(lv.iter().filter_map(|l| l.window.filter(|&w| w > 0.0 && w <= pol.horizon)));
    checkpoints.sort_by(f64::total_cmp);
    checkpoints.dedup();
    let mut ci = 0;
    let mut si = 0;
    // samples at time 0
    while si < req.sample_times.len() && req.sample_times[si] == 0.0 {
        for l in lv.iter_mut() {
            l.samples.push(l.x);
        }
        si += 1;
    }
    while ci < checkpoints.len() && checkpoints[ci] == 0.0 {
        ci += 1;
    }

    let mut delta = target_delta(req.x0);
    let mut delta_max = delta;
    let mut slopes = set.slopes(delta, pol.small_jumps);
    let mut rate = set.field.tail_mass(delta);
    let draw_gap = |rate: f64, rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        if rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            e / rate
        } else {
            f64::INFINITY
        }
    };
    let mut s = 0.0f64;
    let mut next_jump = draw_gap(rate, &mut rng_j);
    let mut gi: u64 = 0;
    let mut events: u64 = 0;
    let mut segs = Vec::new();
    let sig2_eff = |g: f64| set.sigma * set.sigma + g * g;

    let finished = |lv: &[Lv], si: usize| -> bool {
        !req.record && si == req.sample_times.len() && lv.iter().all(|l| l.done)
    };
    let update_done = |l: &mut Lv, si: usize| {
        if !l.done && !l.pending_targets() && (l.window.is_none() || l.window_value.is_some()) && si == req.sample_times.len() {
            l.done = true;
        }
    };
    for l in lv.iter_mut() {
        update_done(l, si);
    }

    while !finished(&lv, si) {
        events += 1;
        if events > pol.max_events {
            return Err(Error::numeric(
                format!("replication {rep} exceeded {} events; raise the cutoff δ or lower the horizon", pol.max_events),
                s,
            ));
        }
        let next_grid = if gridded { (gi + 1) as f64 * pol.dt } else { f64::INFINITY };
        let next_cp = checkpoints.get(ci).copied().unwrap_or(f64::INFINITY);
        let t_end = next_jump.min(next_grid).min(next_cp).min(pol.horizon);
        let len = t_end - s;
        let (w, g) = if gridded && len > 0.0 {
            let sq = len.sqrt();
            let w = if set.sigma > 0.0 { set.sigma * sq * rng_g.sample::<f64, _>(StandardNormal) } else { 0.0 };
            let g = if pol.small_jumps == SmallJumps::Gaussian { sq * rng_g.sample::<f64, _>(StandardNormal) } else { 0.0 };
            (w, g)
        } else {
            (0.0, 0.0)
        };

        for (j, l) in lv.iter_mut().enumerate() {
            if l.done {
                continue;
            }
            let (sl, gs) = slopes[j];
            let xa = l.x;
            let xb = xa + (sl * len + w + gs * g);
            if l.alive && len > 0.0 {
                if xb <= 0.0 {
                    let f = xa / (xa - xb);
                    let tau = s + f * len;
                    l.kill(tau);
                } else {
                    if xb > xa {
                        l.cross(xa, xb, s, len);
                    }
                    let pc = piece_clock(xa, xb, len);
                    if gridded {
                        let s2 = sig2_eff(gs);
                        l.bridge -= (-(-2.0 * xa * xb / (s2 * len)).exp()).ln_1p();
                        l.clock_err += (0.5 * len * (1.0 / xa + 1.0 / xb) - pc).abs();
                    }
                    l.clock += pc;
                    if l.clock > pol.clock_cap && l.pending_targets() {
                        l.fail_rest(ExitReason::Horizon);
                    }
                }
            }
            l.x = xb;
        }
        s = t_end;
        if t_end == next_grid {
            gi += 1;
        }

        let mut jump = 0.0;
        let mut mark = 0.0;
        if t_end == next_jump {
            jump = set.field.sample_tail(delta, &mut rng_j);
            mark = rng_m.random::<f64>();
            let e = -mark.ln();
            for (j, l) in lv.iter_mut().enumerate() {
                if l.done || rel[j] * jump > e {
                    continue;
                }
                let xa = l.x;
                l.x = xa + jump;
                if l.alive && xa > 0.0 {
                    let xb = l.x;
                    l.cross(xa, xb, s, 0.0);
                }
            }
        }
        if req.record {
            segs.push(Seg { t: s, w, g, delta, jump, mark });
        }

        if t_end == next_cp {
            if si < req.sample_times.len() && req.sample_times[si] == s {
                for l in lv.iter_mut() {
                    l.samples.push(l.x);
                }
                si += 1;
            }
            for l in lv.iter_mut() {
                if l.window == Some(s) && l.window_value.is_none() {
                    l.window_value = Some(KilledValue { value: l.clock, killed_by_zero: false, censored: false });
                }
            }
            ci += 1;
        }

        if s >= pol.horizon {
            for l in lv.iter_mut() {
                l.fail_rest(ExitReason::Horizon);
                if l.window.is_some() && l.window_value.is_none() {
                    l.window_value = Some(KilledValue { value: f64::NAN, killed_by_zero: false, censored: true });
                }
            }
            break;
        }

        // Gaussian closure of the remaining passages once far above the start.
        for (j, l) in lv.iter_mut().enumerate() {
            if let Some((b, v, big)) = closure[j] {
                if !l.done
                    && l.alive
                    && l.x >= big
                    && l.pending_targets()
                    && (l.window.is_none() || l.window_value.is_some())
                    && si == req.sample_times.len()
                {
                    let mut ln_prev = l.x.ln();
                    let mut acc = l.clock;
                    while l.pending_targets() {
                        let ly = l.ln_targets[l.passages.len()];
                        let (m, var) = closure_moments(b, v, ln_prev, ly);
                        let z: f64 = rng_a.sample(StandardNormal);
                        acc += (m + var.sqrt() * z).max(0.0);
                        l.reach(acc, f64::NAN);
                        ln_prev = ly;
                    }
                    l.closure = true;
                }
            }
        }
        for l in lv.iter_mut() {
            update_done(l, si);
        }

        if t_end == next_jump {
            next_jump = s + draw_gap(rate, &mut rng_j);
        }
        if adaptive {
            let xmin = lv.iter().filter(|l| !l.done && l.alive).map(|l| l.x).fold(f64::INFINITY, f64::min);
            if xmin.is_finite() {
                let td = target_delta(xmin);
                if td >= 2.0 * delta || td <= 0.5 * delta {
                    delta = td;
                    delta_max = delta_max.max(delta);
                    slopes = set.slopes(delta, pol.small_jumps);
                    rate = set.field.tail_mass(delta);
                    next_jump = s + draw_gap(rate, &mut rng_j);
                }
            }
        }
    }

    let sample = req.record.then(|| CoupledFamilySample {
        rep,
        x0: req.x0,
        horizon: pol.horizon,
        gridded,
        eps_min: set.eps_min,
        mode: pol.small_jumps,
        segs,
    });
    Ok(Replication { levels: lv.into_iter().map(Lv::outcome).collect(), events, delta_max, sample })
}

/// Record one coupled realization on [0, horizon].
pub fn simulate_coupled(set: &LevelSet, x0: f64, pol: &SimPolicy, rep: u64) -> Result<CoupledFamilySample> {
    if !pol.horizon.is_finite() {
        return Err(Error::validation("recording a path needs a finite horizon"));
    }
    let exp_jumps = set.field.tail_mass(pol.delta) * pol.horizon;
    if pol.delta_rel == 0.0 && exp_jumps > 1e8 {
        return Err(Error::validation(format!(
            "about {exp_jumps:.3e} jumps expected on [0, {}]; raise the cutoff δ",
            pol.horizon
        )));
    }
    let req = RunRequest { set, x0, tasks: &[], sample_times: &[], record: true };
    Ok(simulate_replication(&req, pol, rep)?.sample.expect("recording requested"))
}

impl CoupledFamilySample {
    pub fn jumps(&self) -> Vec<MarkedJump> {
        self.segs.iter().filter(|s| s.jump > 0.0).map(|s| MarkedJump { time: s.t, size: s.jump, mark: s.mark }).collect()
    }

    /// Paths of every level of `set`; bitwise identical to the engine's evolution when `set`
    /// is the set the sample was drawn with.
    pub fn views(&self, set: &LevelSet) -> Result<Vec<PathView>> {
        if set.eps_min < self.eps_min {
            return Err(Error::domain(format!(
                "tilt {} is below the field's tilt {}; the sample cannot represent it",
                set.eps_min, self.eps_min
            )));
        }
        let rel: Vec<f64> = set.eps.iter().map(|e| e - self.eps_min).collect();
        let mut out: Vec<PathView> = set
            .eps
            .iter()
            .map(|&e| PathView {
                eps: e,
                x0: self.x0,
                points: vec![(0.0, self.x0)],
                horizon: self.horizon,
                gridded: self.gridded,
            })
            .collect();
        let mut xs = vec![self.x0; set.len()];
        let mut cur_delta = f64::NAN;
        let mut slopes = Vec::new();
        let mut s = 0.0;
        for seg in &self.segs {
            if seg.delta.to_bits() != cur_delta.to_bits() {
                cur_delta = seg.delta;
                slopes = set.slopes(cur_delta, self.mode);
            }
            let len = seg.t - s;
            for j in 0..set.len() {
                let (sl, gs) = slopes[j];
                xs[j] += sl * len + seg.w + gs * seg.g;
                if len > 0.0 {
                    out[j].points.push((seg.t, xs[j]));
                }
                if seg.jump > 0.0 && included(seg.mark, rel[j], seg.jump) {
                    xs[j] += seg.jump;
                    out[j].points.push((seg.t, xs[j]));
                }
            }
            s = seg.t;
        }
        Ok(out)
    }

    /// A single level at tilt ε (ε ≥ ε_min); new tilts need no re-marking.
    pub fn view_at(&self, base: &BranchingMechanism, eps: f64) -> Result<PathView> {
        let set = LevelSet::new(base, vec![eps], vec![0])?;
        Ok(self.views(&set)?.remove(0))
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct LaplaceEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Mean of e^{−λ(X_t − x0)} with its standard error.
pub fn laplace_from_values(values: &[f64], x0: f64, lambda: f64) -> LaplaceEstimate {
    let n = values.len();
    let terms: Vec<f64> = values.iter().map(|x| (-lambda * (x - x0)).exp()).collect();
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    LaplaceEstimate { estimate: mean, std_error: (var / n as f64).sqrt(), n }
}

/// Empirical Laplace transform of level `level` of `set` at time t over recorded samples.
pub fn empirical_laplace(samples: &[CoupledFamilySample], set: &LevelSet, level: usize, lambda: f64, t: f64) -> Result<LaplaceEstimate> {
    if samples.is_empty() {
        return Err(Error::validation("no samples"));
    }
    let mut vals = Vec::with_capacity(samples.len());
    for smp in samples {
        if t > smp.horizon {
            return Err(Error::domain(format!("t = {t} exceeds the horizon {}", smp.horizon)));
        }
        let views = smp.views(set)?;
        vals.push(views[level].value_at(t));
    }
    Ok(laplace_from_values(&vals, samples[0].x0, lambda))
}

/// Positive strictly stable draw with E e^{−λS} = e^{−dt·k·λ^α} (Kanter's representation).
pub fn exact_stable_increment<R: Rng + ?Sized>(alpha: f64, k: f64, dt: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || !(k > 0.0) || !(dt > 0.0) {
        return Err(Error::validation("need α ∈ (0,1), k > 0 and dt > 0"));
    }
    let u = std::f64::consts::PI * (1.0 - rng.random::<f64>());
    let e: f64 = Exp1.sample(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / e).powf((1.0 - alpha) / alpha);
    Ok((k * dt).powf(1.0 / alpha) * a * b)
}
