//! Weak, strong and law-validation experiments.

use std::path::Path;

use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::stats::{frequency, mean_se, KmCdf, Obs};
use super::{run_reps, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::flow::{expected_truncated_integral, Flow};
use crate::lamperti::ExitReason;
use crate::mechanism::{BranchingMechanism, EsscherLadder};
use crate::pathsim::{
    exponent_gap, laplace_from_values, relative_truncation_bound, simulate_replication, LevelOutcome, LevelSet, LevelTask,
    RunRequest, SimPolicy,
};
use crate::policy::NumericPolicy;
use crate::rng::{stream, Role};
use crate::serde_ext::{f64_ext, opt_f64_ext};
use crate::speed::{classify, parse_c, summability_checks, ClassificationReport, SpeedClass, SpeedSequence, Summability, SummabilityReport};

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<i64>,
    #[serde(serialize_with = "f64_ext")]
    pub estimate: f64,
    #[serde(serialize_with = "f64_ext")]
    pub std_error: f64,
    #[serde(serialize_with = "f64_ext")]
    pub reference: f64,
    /// Deterministic bias allowance added to the 3σ band.
    #[serde(serialize_with = "f64_ext")]
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, level: Option<i64>, estimate: f64, std_error: f64, reference: f64, bound: f64) -> Self {
        let passed = (estimate - reference).abs() <= 3.0 * std_error + bound;
        Check { name: name.into(), level, estimate, std_error, reference, bound, passed }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LevelReport {
    /// Ladder index; −1 is the limit X.
    pub level: i64,
    pub eps: f64,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_f64_ext")]
    pub ln_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_f64_ext")]
    pub k: Option<f64>,
    pub reached: f64,
    pub hit_zero: f64,
    pub censored: f64,
    pub closure: f64,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_f64_ext")]
    pub ks: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_f64_ext")]
    pub p_below_t: Option<f64>,
    /// (t, ECDF, reference CDF) at empirical quantiles.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ecdf: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_f64_ext")]
    pub gap_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_f64_ext")]
    pub gap_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_f64_ext")]
    pub within_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_f64_ext")]
    pub tail_deviation_q: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub reps: usize,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summability: Option<SummabilityReport>,
    /// Shift c(h) used by the reference law of ζ + c(h).
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_f64_ext")]
    pub c_reference: Option<f64>,
    /// Analytic bound on the part of ζ beyond the level M.
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_f64_ext")]
    pub tail_bound: Option<f64>,
    /// Relative exponent gap of the small-jump truncation.
    pub truncation_bound: f64,
    pub levels: Vec<LevelReport>,
    pub checks: Vec<Check>,
    pub verdicts: Vec<Verdict>,
    /// False when the run cannot support its verdicts (censoring, inconclusive class).
    pub valid: bool,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    fn new(cfg: &ExperimentConfig, name: &str) -> Self {
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            experiment: name.to_string(),
            seed: cfg.sim.seed,
            reps: cfg.experiment.reps,
            config: cfg.clone(),
            classification: None,
            summability: None,
            c_reference: None,
            tail_bound: None,
            truncation_bound: 0.0,
            levels: vec![],
            checks: vec![],
            verdicts: vec![],
            valid: true,
            notes: vec![],
        }
    }

    pub fn passed(&self) -> bool {
        self.valid && !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::validation(format!("report serialization: {e}")))
    }

    fn verdict(&mut self, criterion: &str, passed: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict { criterion: criterion.to_string(), passed, detail: detail.into() });
    }

    fn refuse(&mut self, criterion: &str, why: impl Into<String>) {
        let why = why.into();
        self.valid = false;
        self.notes.push(why.clone());
        self.verdict(criterion, false, why);
    }
}

struct Setup {
    base: BranchingMechanism,
    ladder: EsscherLadder,
    h: SpeedSequence,
    levels: Vec<u64>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let base = BranchingMechanism::from_spec(&cfg.mechanism)?;
    let lspec = cfg.ladder.as_ref().ok_or_else(|| Error::validation("a [ladder] section is required"))?;
    let ladder = EsscherLadder::new(&base, lspec)?;
    let hspec = cfg.speed.h.as_deref().ok_or_else(|| Error::validation("speed.h is required"))?;
    let h = SpeedSequence::parse(hspec, &ladder, cfg.speed.theta)?;
    let mut levels = cfg.experiment.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    for &n in &levels {
        if !ladder.contains(n) {
            return Err(Error::validation(format!("level {n} is outside the ladder")));
        }
    }
    Ok(Setup { base, ladder, h, levels })
}

/// c(h): the construction target when h was built for a given c, else the classifier's estimate.
fn c_reference(cfg: &ExperimentConfig, class: &ClassificationReport) -> Result<f64> {
    match cfg.speed.h.as_deref().and_then(|s| s.strip_prefix("construct:")) {
        Some(c) => parse_c(c),
        None => Ok(class.c_estimate),
    }
}

/// Streams for different sub-runs of one experiment never overlap.
fn rep_id(block: u64, rep: u64) -> u64 {
    (block << 40) | rep
}

fn outcome_fractions(lr: &mut LevelReport, outs: &[&LevelOutcome], k: usize) {
    let n = outs.len() as f64;
    let count = |r: ExitReason| outs.iter().filter(|o| o.passages[k].reason == r).count() as f64 / n;
    lr.reached = count(ExitReason::Reached);
    lr.hit_zero = count(ExitReason::HitZeroFirst);
    lr.censored = count(ExitReason::Horizon);
    lr.closure = outs.iter().filter(|o| o.closure).count() as f64 / n;
}

fn passage_obs(o: &LevelOutcome, k: usize) -> Obs {
    let p = o.passages[k];
    match p.reason {
        ExitReason::Reached => Obs::Event(p.sigma),
        ExitReason::HitZeroFirst => Obs::Infinite,
        ExitReason::Horizon => Obs::Censored(o.clock),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    w.write_record(header).map_err(|e| Error::io(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.experiment.kind {
        ExperimentKind::Weak => run_weak_convergence(cfg),
        ExperimentKind::StrongL1 | ExperimentKind::StrongAs | ExperimentKind::Killed => run_strong_convergence(cfg),
        ExperimentKind::Law => run_law_validation(cfg),
    }
}

/// ECDFs of σ^(n)_{k/h(n)} against the law of ζ + c(h).
pub fn run_weak_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let s = setup(cfg)?;
    let e = &cfg.experiment;
    let mut rep = ExperimentReport::new(cfg, "weak");
    let class = classify(&s.ladder, &s.h, cfg.speed.theta, &NumericPolicy::default())?;
    rep.classification = Some(class.clone());
    if class.class == SpeedClass::Inconclusive {
        rep.refuse("classification", "the speed sequence could not be classified; no reference law exists");
        return Ok(rep);
    }
    let zinf = class.class == SpeedClass::Zinf;
    let c = if zinf { f64::INFINITY } else { c_reference(cfg, &class)? };
    rep.c_reference = Some(c);

    let set = LevelSet::from_ladder(&s.ladder, &s.levels, false)?;
    let ln_h: Vec<f64> = s.levels.iter().map(|&n| s.h.ln_h(n)).collect::<Result<_>>()?;
    let mut ks_mult: Vec<f64> = if e.exponential_level { vec![f64::NAN] } else { e.k.clone() };
    ks_mult.sort_by(f64::total_cmp);
    let t_fixed = e.horizon_clock.unwrap_or(5.0);
    let mut pol = cfg.sim.clone();
    if zinf {
        pol.clock_cap = pol.clock_cap.min(t_fixed);
    }
    rep.truncation_bound = relative_truncation_bound(&s.base, &pol, e.x0, e.x0.max(1.0) * 1e12);

    let outs = run_reps(e.reps, |r| {
        let tasks: Vec<LevelTask> = ln_h
            .iter()
            .map(|lh| {
                let ln_targets = if e.exponential_level {
                    let draw: f64 = Exp1.sample(&mut stream(pol.seed, r, Role::Driver));
                    vec![draw.ln() - lh]
                } else {
                    ks_mult.iter().map(|k| k.ln() - lh).collect()
                };
                LevelTask { ln_targets, window: None }
            })
            .collect();
        let req = RunRequest { set: &set, x0: e.x0, tasks: &tasks, sample_times: &[], record: false };
        Ok(simulate_replication(&req, &pol, r)?.levels)
    })?;

    let flow = Flow::new(&s.base)?;
    let f_inf = 1.0 - (-s.base.rho() * e.x0).exp();
    let reference = |t: f64| -> f64 {
        if t < c {
            0.0
        } else {
            1.0 - flow.survival_probability(e.x0, t - c).unwrap_or(f64::NAN)
        }
    };
    for (ki, &k) in ks_mult.iter().enumerate() {
        let mut stat = Vec::new();
        for (j, &n) in s.levels.iter().enumerate() {
            let level_outs: Vec<&LevelOutcome> = outs.iter().map(|o| &o[j]).collect();
            let mut lr = LevelReport {
                level: n as i64,
                eps: set.eps()[j],
                ln_h: Some(ln_h[j]),
                k: (!e.exponential_level).then_some(k),
                ..Default::default()
            };
            outcome_fractions(&mut lr, &level_outs, ki);
            // with a clock cap at T, censoring beyond T does not affect P(σ ≤ T)
            let undecided = if zinf {
                level_outs
                    .iter()
                    .filter(|o| o.passages[ki].reason == ExitReason::Horizon && o.clock < t_fixed)
                    .count() as f64
                    / level_outs.len() as f64
            } else {
                lr.censored
            };
            if undecided > e.censor_limit {
                rep.valid = false;
                rep.notes.push(format!(
                    "level {n}: {:.1}% of passages undecided at the horizon; raise sim.horizon",
                    100.0 * undecided
                ));
            }
            let obs: Vec<Obs> = level_outs.iter().map(|o| passage_obs(o, ki)).collect();
            let km = KmCdf::new(&obs);
            if zinf {
                let p = km.eval(t_fixed);
                lr.p_below_t = Some(p);
                stat.push(p);
            } else {
                let ks = km.ks(reference, f_inf);
                lr.ks = Some(ks);
                stat.push(ks);
                let mut ev: Vec<f64> = obs.iter().filter_map(|o| if let Obs::Event(t) = o { Some(*t) } else { None }).collect();
                ev.sort_by(f64::total_cmp);
                if !ev.is_empty() {
                    lr.ecdf = Some(
                        (1..20)
                            .map(|q| {
                                let t = ev[(q * (ev.len() - 1)) / 20];
                                [t, km.eval(t), reference(t)]
                            })
                            .collect(),
                    );
                }
            }
            rep.levels.push(lr);
        }
        let tail = &stat[stat.len().saturating_sub(3)..];
        let last = *stat.last().unwrap();
        let label = if e.exponential_level { "exponential level".to_string() } else { format!("k = {k}") };
        if zinf {
            let ok = tail.windows(2).all(|w| w[1] <= w[0]) && last < e.p_threshold;
            rep.verdict(
                "weak convergence, infinite speed: P(σ ≤ T) vanishes",
                ok,
                format!("{label}: P(σ ≤ {t_fixed}) over levels {stat:?}, last {last:.4} vs {}", e.p_threshold),
            );
        } else {
            let ok = strictly_decreasing(tail) && last < e.ks_threshold;
            rep.verdict(
                "weak convergence to ζ + c(h): KS decreasing and small",
                ok,
                format!("{label}: KS over levels {stat:?}, last {last:.4} vs {}", e.ks_threshold),
            );
        }
    }

    if let Some(path) = &cfg.output.csv {
        let rows = outs.iter().enumerate().flat_map(|(r, o)| {
            let levels = &s.levels;
            o.iter().enumerate().flat_map(move |(j, lo)| {
                lo.passages.iter().map(move |p| {
                    vec![r.to_string(), levels[j].to_string(), format!("{:e}", p.target), p.sigma.to_string(), format!("{:?}", p.reason)]
                })
            })
        });
        write_csv(path, &["rep", "level", "target", "sigma", "reason"], rows)?;
    }
    Ok(rep)
}

/// L¹, almost-sure and killed-functional comparisons on coupled paths.
pub fn run_strong_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let s = setup(cfg)?;
    let e = &cfg.experiment;
    let kind = e.kind;
    let mut rep = ExperimentReport::new(cfg, kind.name());
    let pol = cfg.sim.clone();
    let ln_h: Vec<f64> = s.levels.iter().map(|&n| s.h.ln_h(n)).collect::<Result<_>>()?;
    rep.truncation_bound = relative_truncation_bound(&s.base, &pol, e.x0, e.big_level);

    match kind {
        ExperimentKind::Killed => {
            let set = LevelSet::from_ladder(&s.ladder, &s.levels, false)?;
            let outs = run_reps(e.reps, |r| {
                let draw: f64 = Exp1.sample(&mut stream(pol.seed, r, Role::Driver));
                let tasks: Vec<LevelTask> =
                    ln_h.iter().map(|lh| LevelTask { ln_targets: vec![], window: Some(draw * (-lh).exp()) }).collect();
                let req = RunRequest { set: &set, x0: e.x0, tasks: &tasks, sample_times: &[], record: false };
                Ok(simulate_replication(&req, &pol, r)?.levels)
            })?;
            for (j, &n) in s.levels.iter().enumerate() {
                let vals: Vec<f64> = outs.iter().filter_map(|o| o[j].window.filter(|w| !w.censored).map(|w| w.value)).collect();
                let censored = 1.0 - vals.len() as f64 / outs.len() as f64;
                if censored > e.censor_limit {
                    rep.valid = false;
                    rep.notes.push(format!("level {n}: {:.1}% of windows exceed the horizon", 100.0 * censored));
                }
                let (m, se) = mean_se(&vals);
                let h = ln_h[j].exp();
                let reference = expected_truncated_integral(set.mechanism(j), e.x0, h)?;
                rep.checks.push(Check::new("killed functional mean", Some(n as i64), m, se, reference, rep.truncation_bound * reference));
                rep.levels.push(LevelReport {
                    level: n as i64,
                    eps: set.eps()[j],
                    ln_h: Some(ln_h[j]),
                    censored,
                    gap_mean: Some(m),
                    gap_se: Some(se),
                    ..Default::default()
                });
            }
            let ok = rep.checks.iter().all(|c| c.passed);
            rep.verdict("killed explosion time matches its analytic mean", ok, format!("{} levels checked", rep.checks.len()));
        }
        ExperimentKind::StrongL1 | ExperimentKind::StrongAs => {
            if kind == ExperimentKind::StrongL1 {
                let class = classify(&s.ladder, &s.h, cfg.speed.theta, &NumericPolicy::default())?;
                let z0 = class.class == SpeedClass::Z0;
                rep.classification = Some(class);
                if !z0 {
                    rep.refuse("L1 convergence", "L1 mode needs a speed of class Z0");
                    return Ok(rep);
                }
            } else {
                let sm = summability_checks(&s.ladder, &s.h)?;
                let ok = sm.tilt_series.verdict == Summability::Summable;
                rep.summability = Some(sm);
                if !ok {
                    rep.refuse("almost-sure convergence", "a.s. mode needs a summable tilt series");
                    return Ok(rep);
                }
            }
            let set = LevelSet::from_ladder(&s.ladder, &s.levels, true)?;
            let lim = set.len() - 1;
            let flow = Flow::new(&s.base)?;
            let tail = flow.zeta_moment(e.big_level, 1)?.value;
            rep.tail_bound = Some(tail);
            let mut tasks: Vec<LevelTask> = ln_h.iter().map(|lh| LevelTask { ln_targets: vec![-lh], window: None }).collect();
            tasks.push(LevelTask { ln_targets: vec![e.big_level.ln()], window: None });
            let outs = run_reps(e.reps, |r| {
                let req = RunRequest { set: &set, x0: e.x0, tasks: &tasks, sample_times: &[], record: false };
                Ok(simulate_replication(&req, &pol, r)?.levels)
            })?;
            let killed_value = |o: &LevelOutcome| -> Option<f64> {
                let p = o.passages[0];
                match p.reason {
                    ExitReason::Reached => Some(p.sigma),
                    ExitReason::HitZeroFirst => Some(0.0),
                    ExitReason::Horizon => None,
                }
            };
            let zeta: Vec<Option<f64>> = outs.iter().map(|o| killed_value(&o[lim])).collect();
            let mut devs: Vec<Vec<f64>> = vec![Vec::new(); s.levels.len()];
            let mut per_seed: Vec<Vec<f64>> = vec![vec![f64::NAN; s.levels.len()]; outs.len()];
            for (r, o) in outs.iter().enumerate() {
                for j in 0..s.levels.len() {
                    if let (Some(sv), Some(z)) = (killed_value(&o[j]), zeta[r]) {
                        devs[j].push((sv - z).abs());
                        per_seed[r][j] = (sv - z).abs();
                    }
                }
            }
            let mut gaps = Vec::new();
            for (j, &n) in s.levels.iter().enumerate() {
                let level_outs: Vec<&LevelOutcome> = outs.iter().map(|o| &o[j]).collect();
                let mut lr = LevelReport { level: n as i64, eps: set.eps()[j], ln_h: Some(ln_h[j]), ..Default::default() };
                outcome_fractions(&mut lr, &level_outs, 0);
                let usable = devs[j].len() as f64 / outs.len() as f64;
                if 1.0 - usable > e.censor_limit {
                    rep.valid = false;
                    rep.notes.push(format!("level {n}: too many censored passages"));
                }
                let (m, se) = mean_se(&devs[j]);
                lr.gap_mean = Some(m);
                lr.gap_se = Some(se);
                lr.within_tol = Some(devs[j].iter().filter(|d| **d < e.deviation_tol).count() as f64 / devs[j].len() as f64);
                gaps.push(m);
                rep.levels.push(lr);
            }
            if kind == ExperimentKind::StrongL1 {
                let ok = strictly_decreasing(&gaps);
                rep.verdict("L1 convergence of σ·1 to ζ·1: gap decreasing", ok, format!("gaps {gaps:?}, ζ tail bound {tail:.3e}"));
            } else {
                let jl = s.levels.len() - 1;
                let tail_levels = s.levels.len().saturating_sub(3);
                let mut tail_dev: Vec<f64> = per_seed
                    .iter()
                    .map(|d| d[tail_levels..].iter().copied().fold(0.0, f64::max))
                    .filter(|d| d.is_finite())
                    .collect();
                tail_dev.sort_by(f64::total_cmp);
                if !tail_dev.is_empty() {
                    let qi = ((e.seed_quantile * tail_dev.len() as f64).ceil() as usize).clamp(1, tail_dev.len()) - 1;
                    rep.levels[jl].tail_deviation_q = Some(tail_dev[qi]);
                }
                let frac = rep.levels[jl].within_tol.unwrap_or(0.0);
                rep.verdict(
                    "almost-sure convergence: per-seed deviation at the last level",
                    frac >= e.seed_quantile,
                    format!(
                        "{:.1}% of seeds within {} at level {} (need {:.0}%)",
                        100.0 * frac,
                        e.deviation_tol,
                        s.levels[jl],
                        100.0 * e.seed_quantile
                    ),
                );
            }
            if let Some(path) = &cfg.output.csv {
                let levels = &s.levels;
                let rows = per_seed.iter().enumerate().flat_map(|(r, d)| {
                    d.iter().enumerate().map(move |(j, v)| vec![r.to_string(), levels[j].to_string(), v.to_string()])
                });
                write_csv(path, &["rep", "level", "deviation"], rows)?;
            }
        }
        _ => unreachable!("dispatched by kind"),
    }
    Ok(rep)
}

/// Laplace transforms per level, explosion law, ζ moments and extinction frequencies.
pub fn run_law_validation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let e = &cfg.experiment;
    let base = BranchingMechanism::from_spec(&cfg.mechanism)?;
    let mut rep = ExperimentReport::new(cfg, "law");
    let pol = cfg.sim.clone();

    // Laplace transforms of X^(ε)_t at every requested level.
    if !e.lambdas.is_empty() && !e.times.is_empty() {
        let mut times = e.times.clone();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut eps = Vec::new();
        let mut labels = Vec::new();
        if let Some(ls) = &cfg.ladder {
            let ladder = EsscherLadder::new(&base, ls)?;
            let ns: Vec<u64> = if e.levels.is_empty() { ladder.indices().collect() } else { e.levels.clone() };
            for n in ns {
                eps.push(ladder.eps(n)?);
                labels.push(n as i64);
            }
        }
        if e.laplace_limit || eps.is_empty() {
            eps.push(0.0);
            labels.push(-1);
        }
        let set = LevelSet::new(&base, eps, labels)?;
        let lp = SimPolicy { horizon: *times.last().unwrap(), ..pol.clone() };
        let outs = run_reps(e.reps, |r| {
            let req = RunRequest { set: &set, x0: e.x0, tasks: &[], sample_times: &times, record: false };
            simulate_replication(&req, &lp, rep_id(1, r))
        })?;
        let delta_max = outs.iter().map(|o| o.delta_max).fold(0.0, f64::max);
        for j in 0..set.len() {
            let m = set.mechanism(j);
            for (ti, &t) in times.iter().enumerate() {
                let vals: Vec<f64> = outs.iter().map(|o| o.levels[j].samples[ti]).collect();
                for &lam in &e.lambdas {
                    let est = laplace_from_values(&vals, e.x0, lam);
                    let a = m.varphi(lam);
                    let gap = exponent_gap(m.measure(), delta_max, lam, lp.small_jumps);
                    let bound = t * gap * (t * a).exp().max((t * (a + gap)).exp());
                    rep.checks.push(Check::new(
                        format!("laplace λ={lam} t={t}"),
                        Some(set.labels()[j]),
                        est.estimate,
                        est.std_error,
                        (t * a).exp(),
                        bound,
                    ));
                }
            }
        }
        let n = rep.checks.len();
        let ok = rep.checks.iter().all(|c| c.passed);
        rep.verdict("Esscher laws: E e^{-λ(X_t - x)} = e^{t varphi(λ)} per level", ok, format!("{n} checks"));
    }

    // Explosion law and ζ moments from the limit X up to level M.
    if base.is_explosive() && (!e.survival_t.is_empty() || e.moments) {
        let flow = Flow::new(&base)?;
        let big = e.big_level;
        let set = LevelSet::new(&base, vec![0.0], vec![-1])?;
        let tasks = vec![LevelTask { ln_targets: vec![big.ln()], window: None }];
        let outs = run_reps(e.reps, |r| {
            let req = RunRequest { set: &set, x0: e.x0, tasks: &tasks, sample_times: &[], record: false };
            Ok(simulate_replication(&req, &pol, rep_id(2, r))?.levels.remove(0))
        })?;
        let rel = relative_truncation_bound(&base, &pol, e.x0, big);
        rep.truncation_bound = rel;
        let tail1 = flow.zeta_moment(big, 1)?.value;
        rep.tail_bound = Some(tail1);
        // ζ·1{ζ<∞} estimate (None when censored) and the τ < ∞ flag
        let z: Vec<(Option<f64>, bool)> = outs
            .iter()
            .map(|o| match o.passages[0].reason {
                ExitReason::Reached => (Some(o.passages[0].sigma), false),
                ExitReason::HitZeroFirst => (Some(0.0), true),
                ExitReason::Horizon => (None, false),
            })
            .collect();
        let usable: Vec<(f64, bool)> = z.iter().filter_map(|(v, f)| v.map(|v| (v, *f))).collect();
        let censored = 1.0 - usable.len() as f64 / z.len() as f64;
        if censored > e.censor_limit {
            rep.valid = false;
            rep.notes.push(format!("{:.1}% of paths did not reach M before the horizon", 100.0 * censored));
        }
        let n = usable.len();
        for &t in &e.survival_t {
            // η with P_M(ζ > η) ≤ 1e-6 bounds the unseen part of ζ beyond M
            let target = 1e-6;
            let (mut lo, mut hi) = (0.0f64, t.max(1e-12));
            while flow.survival_probability(big, hi)? > target {
                hi *= 2.0;
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if flow.survival_probability(big, mid)? > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let eta = hi;
            let hits = usable.iter().filter(|(v, f)| *f || *v > t).count();
            let near = usable.iter().filter(|(v, f)| !*f && *v > t - eta && *v <= t).count();
            let (p, se) = frequency(hits, n);
            let reference = flow.survival_probability(e.x0, t)?;
            let bound = near as f64 / n as f64 + target + rel;
            rep.checks.push(Check::new(format!("survival P(ζ > {t})"), Some(-1), p, se, reference, bound));
        }
        if e.moments {
            let v1: Vec<f64> = usable.iter().map(|(v, _)| *v).collect();
            let v2: Vec<f64> = v1.iter().map(|v| v * v).collect();
            let r1 = flow.zeta_moment(e.x0, 1)?.value;
            let r2 = flow.zeta_moment(e.x0, 2)?.value;
            let tail2 = flow.zeta_moment(big, 2)?.value;
            let (m1, s1) = mean_se(&v1);
            let (m2, s2) = mean_se(&v2);
            rep.checks.push(Check::new("zeta first moment", Some(-1), m1, s1, r1, tail1 + rel * r1));
            rep.checks.push(Check::new("zeta second moment", Some(-1), m2, s2, r2, 2.0 * r1 * tail1 + tail2 + rel * r2));
        }
        let ok = rep.checks.iter().filter(|c| c.name.starts_with("survival") || c.name.starts_with("zeta")).all(|c| c.passed);
        rep.verdict("explosion law of the limit CSBP", ok, format!("M = {big:e}, ζ tail bound {tail1:.3e}"));
    }

    // P_x(extinction) = e^{-ρx} for mechanisms with a finite root.
    let rho = base.rho();
    if rho.is_finite() && rho > 0.0 {
        let xs = if e.x_values.is_empty() { vec![e.x0] } else { e.x_values.clone() };
        let set = LevelSet::new(&base, vec![0.0], vec![-1])?;
        let mut all_ok = true;
        for (i, &x) in xs.iter().enumerate() {
            let big = x + 16.0 / rho;
            let tasks = vec![LevelTask { ln_targets: vec![big.ln()], window: None }];
            let outs = run_reps(e.reps, |r| {
                let req = RunRequest { set: &set, x0: x, tasks: &tasks, sample_times: &[], record: false };
                Ok(simulate_replication(&req, &pol, rep_id(3 + i as u64, r))?.levels.remove(0))
            })?;
            let hits = outs.iter().filter(|o| o.passages[0].reason == ExitReason::HitZeroFirst).count();
            let undecided = outs.iter().filter(|o| o.passages[0].reason == ExitReason::Horizon).count();
            let (p, se) = frequency(hits, outs.len());
            // paths the grid saw escape but whose bridges may have touched zero
            let bridge = outs
                .iter()
                .filter(|o| o.passages[0].reason != ExitReason::HitZeroFirst)
                .map(|o| -(-o.bridge_miss).exp_m1())
                .sum::<f64>()
                / outs.len() as f64;
            let bound = bridge + (-rho * big).exp() + undecided as f64 / outs.len() as f64;
            let c = Check::new(format!("extinction frequency x={x}"), Some(-1), p, se, (-rho * x).exp(), bound);
            all_ok &= c.passed;
            rep.checks.push(c);
            rep.notes.push(format!("x={x}: grid bias estimate {bridge:.3e} (probability of a zero crossing missed by the grid)"));
        }
        rep.verdict("extinction probability e^{-ρx}", all_ok, format!("ρ = {rho}"));
    }
    if rep.verdicts.is_empty() {
        rep.refuse("law validation", "nothing to check: set lambdas/times, survival_t/moments, or use a mechanism with finite ρ");
    }
    Ok(rep)
}
