use serde::{Deserialize, Serialize};

use super::BranchingMechanism;
use crate::error::{Error, Result};
use crate::sequence::SeqSpec;

/// Ladder description as it appears in configs: `eps` is a sequence spec
/// (see [`crate::sequence`]), levels run over `first..=levels`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LadderSpec {
    pub eps: String,
    #[serde(default = "one")]
    pub first: u64,
    pub levels: u64,
}

fn one() -> u64 {
    1
}

/// Decreasing shifts ε_first > … > ε_N with the shifted mechanisms, all built up front.
#[derive(Clone, Debug)]
pub struct EsscherLadder {
    base: BranchingMechanism,
    spec: LadderSpec,
    seq: SeqSpec,
    eps: Vec<f64>,
    levels: Vec<BranchingMechanism>,
}

impl EsscherLadder {
    pub fn new(base: &BranchingMechanism, spec: &LadderSpec) -> Result<Self> {
        if spec.levels < spec.first {
            return Err(Error::validation(format!(
                "ladder needs levels >= first, got first={} levels={}",
                spec.first, spec.levels
            )));
        }
        let seq = SeqSpec::parse(&spec.eps, spec.first)?;
        let mut eps = Vec::new();
        for n in spec.first..=spec.levels {
            let l = seq
                .ln_value(n)?
                .ok_or_else(|| Error::validation(format!("ladder table has no value for n={n}")))?;
            let e = l.exp();
            if !(e > 0.0) {
                return Err(Error::validation(format!("ladder value at n={n} underflows")));
            }
            if let Some(&prev) = eps.last() {
                if !(e < prev) {
                    return Err(Error::validation(format!("ladder must be strictly decreasing, fails at n={n}")));
                }
            }
            eps.push(e);
        }
        if !(base.varphi_prime(eps[0]) < 0.0) {
            return Err(Error::domain(format!(
                "varphi' must be negative on [0, eps_0]; varphi'({}) = {}",
                eps[0],
                base.varphi_prime(eps[0])
            )));
        }
        let levels = eps.iter().map(|&e| base.esscher_shift(e)).collect::<Result<Vec<_>>>()?;
        Ok(EsscherLadder { base: base.clone(), spec: spec.clone(), seq, eps, levels })
    }

    pub fn base(&self) -> &BranchingMechanism {
        &self.base
    }

    pub fn spec(&self) -> &LadderSpec {
        &self.spec
    }

    pub fn first(&self) -> u64 {
        self.spec.first
    }

    pub fn last(&self) -> u64 {
        self.spec.levels
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<u64> {
        self.spec.first..=self.spec.levels
    }

    pub fn contains(&self, n: u64) -> bool {
        self.indices().contains(&n)
    }

    fn slot(&self, n: u64) -> Result<usize> {
        if !self.contains(n) {
            return Err(Error::domain(format!("level {n} outside ladder {}..={}", self.first(), self.last())));
        }
        Ok((n - self.spec.first) as usize)
    }

    pub fn eps(&self, n: u64) -> Result<f64> {
        Ok(self.eps[self.slot(n)?])
    }

    /// ε at an arbitrary (possibly real) index; closed-form ladders only.
    pub fn eps_beyond(&self, n: f64) -> Result<Option<f64>> {
        if !self.seq.extendable() {
            return Ok(None);
        }
        Ok(self.seq.ln_value_f(n)?.map(f64::exp))
    }

    pub fn extendable(&self) -> bool {
        self.seq.extendable()
    }

    pub fn level(&self, n: u64) -> Result<&BranchingMechanism> {
        Ok(&self.levels[self.slot(n)?])
    }

    pub fn rho(&self, n: u64) -> Result<f64> {
        Ok(self.level(n)?.rho())
    }

    pub fn eps_values(&self) -> &[f64] {
        &self.eps
    }

    pub fn mechanisms(&self) -> &[BranchingMechanism] {
        &self.levels
    }
}
