//! Experiment configuration (TOML, one section per module) with `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{LadderSpec, LevyMeasure, MechanismSpec};
use crate::pathsim::SimPolicy;
use crate::serde_ext::{f64_ext, opt_f64_ext};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Weak,
    StrongL1,
    StrongAs,
    Killed,
    Law,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Weak => "weak",
            ExperimentKind::StrongL1 => "strong-l1",
            ExperimentKind::StrongAs => "strong-as",
            ExperimentKind::Killed => "killed",
            ExperimentKind::Law => "law",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "weak" => ExperimentKind::Weak,
            "strong-l1" | "l1" => ExperimentKind::StrongL1,
            "strong-as" | "as" => ExperimentKind::StrongAs,
            "killed" => ExperimentKind::Killed,
            "law" => ExperimentKind::Law,
            _ => return Err(Error::validation(format!("unknown experiment '{s}'"))),
        })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedConfig {
    /// Sequence spec (`pow:1`, `exp:-n^2`, `construct:1`, `table:PATH`, ...).
    pub h: Option<String>,
    pub theta: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub kind: ExperimentKind,
    pub x0: f64,
    pub reps: usize,
    /// Ladder levels under test.
    pub levels: Vec<u64>,
    /// Passage targets k/h(n).
    pub k: Vec<f64>,
    /// Replace k by a fresh exp(1) draw per replication.
    pub exponential_level: bool,
    /// Level M standing in for explosion.
    #[serde(serialize_with = "f64_ext")]
    pub big_level: f64,
    /// Fixed clock T for P(σ ≤ T) in the Z∞ case.
    #[serde(serialize_with = "opt_f64_ext")]
    pub horizon_clock: Option<f64>,
    pub ks_threshold: f64,
    /// Gate on P(σ ≤ T) at the last level for Z∞ speeds.
    pub p_threshold: f64,
    /// Largest admissible censored fraction.
    pub censor_limit: f64,
    pub deviation_tol: f64,
    pub seed_quantile: f64,
    pub lambdas: Vec<f64>,
    pub times: Vec<f64>,
    /// Times t for the survival check P(ζ > t).
    pub survival_t: Vec<f64>,
    pub moments: bool,
    /// Starting masses for the extinction-frequency check.
    pub x_values: Vec<f64>,
    /// Include the limit X in the Laplace checks.
    pub laplace_limit: bool,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            kind: ExperimentKind::Weak,
            x0: 1.0,
            reps: 1000,
            levels: vec![],
            k: vec![1.0],
            exponential_level: false,
            big_level: 1e8,
            horizon_clock: None,
            ks_threshold: 0.03,
            p_threshold: 0.01,
            censor_limit: 0.2,
            deviation_tol: 0.05,
            seed_quantile: 0.95,
            lambdas: vec![],
            times: vec![],
            survival_t: vec![],
            moments: false,
            x_values: vec![],
            laplace_limit: true,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mechanism: MechanismSpec,
    #[serde(default)]
    pub ladder: Option<LadderSpec>,
    #[serde(default)]
    pub speed: SpeedConfig,
    #[serde(default)]
    pub sim: SimPolicy,
    #[serde(default)]
    pub experiment: ExperimentParams,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies `section.key=value` overrides (values parsed as TOML).
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table = text.parse().map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mechanism.measure.validate()?;
        let e = &self.experiment;
        if e.reps < 100 {
            return Err(Error::validation(format!("at least 100 replications are required, got {}", e.reps)));
        }
        if !(e.x0 > 0.0) {
            return Err(Error::validation(format!("x0 must be positive, got {}", e.x0)));
        }
        if e.k.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::validation("target multipliers k must be positive"));
        }
        if !(e.big_level > e.x0) {
            return Err(Error::validation("big_level must exceed x0"));
        }
        let needs_ladder = !matches!(e.kind, ExperimentKind::Law);
        if needs_ladder && (self.ladder.is_none() || self.speed.h.is_none() || e.levels.is_empty()) {
            return Err(Error::validation(format!(
                "experiment '{}' needs [ladder], speed.h and experiment.levels",
                e.kind.name()
            )));
        }
        Ok(())
    }
}

/// `a.b=value`: sets key b of table a, creating the table when missing.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::validation(format!("override '{spec}' needs the form section.key=value")))?;
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::validation(format!("'{p}' in '{key}' is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Mechanism from a TOML file (a `[mechanism]` table or a bare spec) or an inline
/// `kind=stable,alpha=0.5,k=1` list. Inline keys: kind, alpha, k, tilt, rate,
/// law (exponential|gamma), jump_rate, shape, a, b, sigma2.
pub fn parse_mechanism(spec: &str) -> Result<MechanismSpec> {
    let p = Path::new(spec);
    if p.is_file() {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let mut t: toml::Table = text.parse().map_err(|e| Error::validation(format!("{}: {e}", p.display())))?;
        let v = t.remove("mechanism").unwrap_or(toml::Value::Table(t));
        return v.try_into().map_err(|e| Error::validation(format!("{}: {e}", p.display())));
    }
    if !spec.contains('=') {
        return Err(Error::validation(format!("'{spec}' is neither a file nor an inline kind=... spec")));
    }
    let mut m = toml::Table::new();
    let mut top = toml::Table::new();
    let mut law = toml::Table::new();
    for kv in spec.split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::validation(format!("bad inline item '{kv}'")))?;
        let (k, v) = (k.trim(), v.trim());
        let num = || v.parse::<f64>().map_err(|_| Error::validation(format!("'{v}' is not a number for {k}")));
        match k {
            "kind" => {
                m.insert("kind".into(), v.into());
            }
            "alpha" | "k" | "tilt" | "rate" => {
                m.insert(k.into(), num()?.into());
            }
            "law" => {
                law.insert("law".into(), v.into());
            }
            "jump_rate" => {
                law.insert("rate".into(), num()?.into());
            }
            "shape" => {
                law.insert("shape".into(), num()?.into());
            }
            "a" | "b" | "sigma2" => {
                top.insert(k.into(), num()?.into());
            }
            _ => return Err(Error::validation(format!("unknown inline mechanism key '{k}'"))),
        }
    }
    if !m.contains_key("kind") {
        m.insert("kind".into(), "none".into());
    }
    if !law.is_empty() {
        m.insert("jumps".into(), law.into());
    }
    top.insert("measure".into(), m.into());
    let spec: MechanismSpec = toml::Value::Table(top)
        .try_into()
        .map_err(|e| Error::validation(format!("inline mechanism: {e}")))?;
    spec.measure.validate()?;
    let _: &LevyMeasure = &spec.measure;
    Ok(spec)
}
