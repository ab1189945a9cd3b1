//! `csbp` command line.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use super::config::{parse_mechanism, ExperimentConfig};
use super::experiments::run_experiment;
use crate::error::{Error, Result};
use crate::flow::Flow;
use crate::lamperti::{explosion_functional, first_passage, PathView};
use crate::mechanism::{BranchingMechanism, EsscherLadder, LadderSpec};
use crate::pathsim::{simulate_coupled, LevelSet, SimPolicy, SmallJumps};
use crate::policy::NumericPolicy;
use crate::serde_ext::Ext;
use crate::speed::{classify, construct_speed_for_c, parse_c, speed_csv, SpeedSequence};

const DEFAULT_MECHANISM: &str = "kind=stable,alpha=0.5,k=1";

#[derive(Parser, Debug)]
#[command(name = "csbp", version, about = "Esscher-coupled CSBP approximations: quadrature, simulation and experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Exponent values, roots and boundary integrals of a branching mechanism.
    Mechanism {
        #[arg(value_enum)]
        action: MechAction,
        /// File or inline `kind=stable,alpha=0.5,k=1`.
        #[arg(long, default_value = DEFAULT_MECHANISM)]
        spec: String,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Flow u_t(λ), survival probability and ODE residual.
    Ut {
        #[arg(long, default_value = DEFAULT_MECHANISM)]
        mechanism: String,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        x: f64,
    },
    /// Moments and Laplace transform of the explosion time.
    Zeta {
        #[arg(long, default_value = DEFAULT_MECHANISM)]
        mechanism: String,
        #[arg(long, default_value_t = 1.0)]
        x: f64,
        /// Highest moment order.
        #[arg(long, default_value_t = 2)]
        moments: u32,
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        laplace: Vec<f64>,
    },
    /// Classify a speed sequence h as Z0, Zc or Zinf.
    Classify {
        #[command(flatten)]
        ladder: LadderArgs,
        #[arg(long)]
        h: String,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Tabulate h_c on the ladder (CSV n,h).
    ConstructH {
        #[command(flatten)]
        ladder: LadderArgs,
        /// Target c, a number or `inf`.
        #[arg(long)]
        c: String,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate coupled Lévy paths at every ladder level and the limit.
    Simulate(SimulateArgs),
    /// Lamperti transform of simulated paths: passage times and explosion estimates.
    Transform {
        #[arg(long)]
        paths: PathBuf,
        /// Passage targets, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<f64>,
        /// Level standing in for explosion.
        #[arg(long = "M", default_value_t = 1e8)]
        big_level: f64,
        /// Mechanism of the limit, for the analytic tail bound beyond M.
        #[arg(long)]
        mechanism: Option<String>,
        /// Paths were discretized on a grid (Brownian or Gaussian small jumps).
        #[arg(long)]
        gridded: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment from a config file.
    Experiment {
        #[arg(value_enum)]
        kind: KindArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        /// `section.key=value` override, repeatable.
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Report path (JSON); also printed to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MechAction {
    Eval,
    Root,
    ClassifyBoundary,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Weak,
    StrongL1,
    StrongAs,
    Killed,
    Law,
}

impl KindArg {
    fn name(self) -> &'static str {
        match self {
            KindArg::Weak => "weak",
            KindArg::StrongL1 => "strong-l1",
            KindArg::StrongAs => "strong-as",
            KindArg::Killed => "killed",
            KindArg::Law => "law",
        }
    }
}

#[derive(Args, Debug)]
struct LadderArgs {
    #[arg(long, default_value = DEFAULT_MECHANISM)]
    mechanism: String,
    /// ε sequence spec (`pow:2`, `geom:4`, `list:...`, `expr:...`, `table:PATH`).
    #[arg(long, default_value = "pow:2")]
    ladder: String,
    #[arg(long, default_value_t = 1)]
    first: u64,
    /// Last level N.
    #[arg(long = "N", default_value_t = 64)]
    n: u64,
}

impl LadderArgs {
    fn build(&self) -> Result<EsscherLadder> {
        let base = mechanism(&self.mechanism)?;
        EsscherLadder::new(&base, &LadderSpec { eps: self.ladder.clone(), first: self.first, levels: self.n })
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    ladder: LadderArgs,
    /// Levels to simulate (default: all of first..=N).
    #[arg(long, value_delimiter = ',')]
    levels: Vec<u64>,
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    delta_rel: Option<f64>,
    #[arg(long)]
    gaussian: bool,
    #[arg(long, default_value_t = 1)]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML file with a [sim] table; flags given explicitly win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn mechanism(spec: &str) -> Result<BranchingMechanism> {
    BranchingMechanism::from_spec(&parse_mechanism(spec)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

fn print_json(v: &Value) {
    // a closed stdout (e.g. piped into `head`) is not an error
    let _ = emit(None, &(serde_json::to_string_pretty(v).expect("json value") + "\n"));
}

fn f(v: f64) -> Value {
    serde_json::to_value(Ext(v)).expect("float")
}

/// Runs the command line; returns the process exit status.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("csbp: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Mechanism { action, spec, lambda, theta } => {
            let m = mechanism(&spec)?;
            let pol = NumericPolicy::default();
            let rho = m.rho();
            let mut out = json!({
                "spec": m.spec(),
                "rho": f(rho),
                "gamma": f(m.gamma()),
                "explosive": m.is_explosive(),
            });
            match action {
                MechAction::Eval => {
                    let l = lambda.ok_or_else(|| Error::validation("eval needs --lambda"))?;
                    out["lambda"] = f(l);
                    out["varphi"] = f(m.varphi(l));
                    out["phi"] = f(m.phi(l));
                }
                MechAction::Root => {}
                MechAction::ClassifyBoundary => {
                    let th = theta.unwrap_or_else(|| m.default_theta());
                    let explosion = if rho > 0.0 { Some(m.explosion_test(th.min(rho / 2.0), &pol)?) } else { None };
                    let th_ext = if rho.is_finite() { (2.0 * rho).max(rho + 1.0) } else { f64::INFINITY };
                    let extinction = if th_ext.is_finite() { Some(m.extinction_test(th_ext, &pol)?) } else { None };
                    out["extinctive"] = json!(extinction.is_some_and(|t| t.finite));
                    out["integrals"] = json!({
                        "explosion": explosion.map(|t| json!({"theta": th.min(rho / 2.0), "finite": t.finite, "value": f(t.integral), "shells": t.shells})),
                        "extinction": extinction.map(|t| json!({"theta": th_ext, "finite": t.finite, "value": f(t.integral), "shells": t.shells})),
                    });
                }
            }
            print_json(&out);
            Ok(0)
        }
        Cmd::Ut { mechanism: spec, t, lambda, x } => {
            let m = mechanism(&spec)?;
            let flow = Flow::new(&m)?;
            let u = flow.ut(t, lambda)?;
            // ∂u/∂t + varphi(u) = 0, central differences (one-sided near t = 0)
            let h = 1e-5 * t.max(1e-2);
            let du = if t > h {
                (flow.ut(t + h, lambda)?.value - flow.ut(t - h, lambda)?.value) / (2.0 * h)
            } else {
                (flow.ut(t + h, lambda)?.value - u.value) / h
            };
            let residual = (du + m.varphi(u.value)).abs();
            let survival = flow.survival_probability(x, t).ok();
            print_json(&json!({
                "t": t, "lambda": lambda, "x": x,
                "u_t": f(u.value),
                "flagged": u.flagged,
                "laplace": f((-x * u.value).exp()),
                "survival": survival.map(f),
                "residual": f(residual),
            }));
            Ok(0)
        }
        Cmd::Zeta { mechanism: spec, x, moments, laplace } => {
            let m = mechanism(&spec)?;
            let flow = Flow::new(&m)?;
            let mut ms = Vec::new();
            for n in 1..=moments {
                let v = flow.zeta_moment(x, n)?;
                ms.push(json!({"n": n, "value": f(v.value), "error": f(v.error)}));
            }
            let mut ls = Vec::new();
            for &l in &laplace {
                let v = flow.zeta_laplace(x, l)?;
                ls.push(json!({"lambda": l, "value": f(v.value), "error": f(v.error)}));
            }
            print_json(&json!({"x": x, "moments": ms, "laplace": ls}));
            Ok(0)
        }
        Cmd::Classify { ladder, h, theta } => {
            let l = ladder.build()?;
            let seq = SpeedSequence::parse(&h, &l, theta)?;
            let r = classify(&l, &seq, theta, &NumericPolicy::default())?;
            print_json(&serde_json::to_value(&r).expect("report"));
            Ok(0)
        }
        Cmd::ConstructH { ladder, c, theta, out } => {
            let l = ladder.build()?;
            let theta = theta.unwrap_or_else(|| l.base().default_theta());
            let seq = construct_speed_for_c(&l, parse_c(&c)?, theta)?;
            emit(out.as_deref(), &speed_csv(&l, &seq)?)?;
            Ok(0)
        }
        Cmd::Simulate(a) => simulate(a),
        Cmd::Transform { paths, y, big_level, mechanism: spec, gridded, out } => {
            transform(&paths, &y, big_level, spec.as_deref(), gridded, out.as_deref())
        }
        Cmd::Experiment { kind, config, seed, reps, overrides, out } => {
            let mut ov = vec![format!("experiment.kind=\"{}\"", kind.name())];
            if let Some(s) = seed {
                ov.push(format!("sim.seed={s}"));
            }
            if let Some(r) = reps {
                ov.push(format!("experiment.reps={r}"));
            }
            ov.extend(overrides);
            let cfg = ExperimentConfig::load(&config, &ov)?;
            let report = run_experiment(&cfg)?;
            let text = report.to_json()? + "\n";
            if let Some(p) = out.as_deref().or(cfg.output.report.as_deref()) {
                emit(Some(p), &text)?;
            }
            emit(None, &text)?;
            Ok(if report.passed() { 0 } else { 3 })
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<i32> {
    let ladder = a.ladder.build()?;
    let mut pol = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let mut t: toml::Table = text.parse().map_err(|e| Error::validation(format!("{}: {e}", p.display())))?;
            match t.remove("sim") {
                Some(v) => v.try_into().map_err(|e| Error::validation(format!("{}: {e}", p.display())))?,
                None => SimPolicy::default(),
            }
        }
        None => SimPolicy::default(),
    };
    pol.horizon = a.horizon;
    pol.seed = a.seed;
    if let Some(v) = a.dt {
        pol.dt = v;
    }
    if let Some(v) = a.delta {
        pol.delta = v;
    }
    if let Some(v) = a.delta_rel {
        pol.delta_rel = v;
    }
    if a.gaussian {
        pol.small_jumps = SmallJumps::Gaussian;
    }
    let levels: Vec<u64> = if a.levels.is_empty() { ladder.indices().collect() } else { a.levels.clone() };
    let set = LevelSet::from_ladder(&ladder, &levels, true)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let bad = |e: csv::Error| Error::validation(format!("csv: {e}"));
    w.write_record(["rep", "level", "t", "value"]).map_err(bad)?;
    for rep in 0..a.reps {
        let sample = simulate_coupled(&set, a.x0, &pol, rep)?;
        for (view, &label) in sample.views(&set)?.iter().zip(set.labels()) {
            for &(t, x) in &view.points {
                w.write_record([rep.to_string(), label.to_string(), t.to_string(), x.to_string()]).map_err(bad)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::validation(format!("csv: {e}")))?;
    emit(a.out.as_deref(), &String::from_utf8(bytes).expect("utf8 csv"))?;
    Ok(0)
}

fn transform(paths: &Path, ys: &[f64], big: f64, spec: Option<&str>, gridded: bool, out: Option<&Path>) -> Result<i32> {
    let tail = match spec {
        Some(s) => Flow::new(&mechanism(s)?)?.zeta_moment(big, 1)?.value,
        None => f64::NAN,
    };
    let mut rd = csv::Reader::from_path(paths).map_err(|e| Error::io(paths, e))?;
    let mut groups: BTreeMap<(u64, i64), Vec<(f64, f64)>> = BTreeMap::new();
    for row in rd.deserialize::<(u64, i64, f64, f64)>() {
        let (rep, level, t, x) = row.map_err(|e| Error::validation(format!("{}: {e}", paths.display())))?;
        groups.entry((rep, level)).or_default().push((t, x));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let bad = |e: csv::Error| Error::validation(format!("csv: {e}"));
    w.write_record(["rep", "level", "y", "sigma_y", "zeta_est", "tail_bound", "flags"]).map_err(bad)?;
    for ((rep, level), points) in groups {
        let horizon = points.last().map_or(0.0, |p| p.0);
        let view = PathView { eps: f64::NAN, x0: points[0].1, points, horizon, gridded };
        let z = explosion_functional(&view, big, tail);
        let mut zflags = Vec::new();
        if z.tau_finite {
            zflags.push("tau-finite");
        }
        if z.censored {
            zflags.push("zeta-censored");
        }
        for &y in ys {
            let p = first_passage(&view, y);
            let reason = serde_json::to_value(p.reason).expect("reason");
            let mut flags = vec![reason.as_str().unwrap_or("").to_string()];
            flags.extend(zflags.iter().map(|s| s.to_string()));
            w.write_record([
                rep.to_string(),
                level.to_string(),
                y.to_string(),
                p.sigma.to_string(),
                z.zeta.to_string(),
                tail.to_string(),
                flags.join(";"),
            ])
            .map_err(bad)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::validation(format!("csv: {e}")))?;
    emit(out, &String::from_utf8(bytes).expect("utf8 csv"))?;
    Ok(0)
}
