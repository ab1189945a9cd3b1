//! Positive sequences n ↦ s(n) given by short spec strings, evaluated in log space.
//!
//! Spec forms: `pow:p` (n^{-p}), `geom:b` (b^{-n}), `exp:EXPR` (EXPR is ln s(n)),
//! `expr:EXPR` (EXPR is s(n)), `list:v1,v2,...` (values for n = first, first+1, ...),
//! `table:PATH` (CSV with columns n,value). Expressions use the variable `n` and the
//! functions ln, log, exp, sqrt, pow, abs.

use std::collections::BTreeMap;
use std::f64::consts::LN_10;
use std::path::Path;

use evalexpr::{ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, Function, HashMapContext, Node, Value};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub enum SeqSpec {
    Pow(f64),
    Geom(f64),
    LnExpr(Formula),
    Expr(Formula),
    /// ln values keyed by n.
    Table(BTreeMap<u64, f64>),
}

#[derive(Clone, Debug)]
pub struct Formula {
    src: String,
    node: Node<DefaultNumericTypes>,
}

impl Formula {
    pub fn parse(src: &str) -> Result<Self> {
        let node = evalexpr::build_operator_tree::<DefaultNumericTypes>(src)
            .map_err(|e| Error::validation(format!("cannot parse expression '{src}': {e}")))?;
        Ok(Formula { src: src.to_string(), node })
    }

    pub fn eval(&self, n: f64) -> Result<f64> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        ctx.set_value("n".into(), Value::Float(n)).expect("fresh context");
        for (name, f) in [("ln", f64::ln as fn(f64) -> f64), ("exp", f64::exp), ("sqrt", f64::sqrt), ("abs", f64::abs)] {
            ctx.set_function(
                name.into(),
                Function::new(move |v: &Value<DefaultNumericTypes>| Ok(Value::Float(f(v.as_number()?)))),
            )
            .expect("fresh context");
        }
        ctx.set_function("log".into(), Function::new(|v: &Value<DefaultNumericTypes>| Ok(Value::Float(v.as_number()?.log10()))))
            .expect("fresh context");
        ctx.set_function(
            "pow".into(),
            Function::new(|v: &Value<DefaultNumericTypes>| {
                let t = v.as_fixed_len_tuple(2)?;
                Ok(Value::Float(t[0].as_number()?.powf(t[1].as_number()?)))
            }),
        )
        .expect("fresh context");
        self.node
            .eval_number_with_context(&ctx)
            .map_err(|e| Error::validation(format!("cannot evaluate '{}' at n={n}: {e}", self.src)))
    }

    pub fn source(&self) -> &str {
        &self.src
    }
}

impl SeqSpec {
    pub fn parse(spec: &str, first: u64) -> Result<Self> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::validation(format!("sequence spec '{spec}' needs the form kind:value")))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::validation(format!("'{s}' is not a number in spec '{spec}'")))
        };
        Ok(match kind.trim() {
            "pow" => {
                let p = num(rest)?;
                if !(p > 0.0) {
                    return Err(Error::validation(format!("pow exponent must be positive, got {p}")));
                }
                SeqSpec::Pow(p)
            }
            "geom" => {
                let b = num(rest)?;
                if !(b > 1.0) {
                    return Err(Error::validation(format!("geom base must exceed 1, got {b}")));
                }
                SeqSpec::Geom(b)
            }
            "exp" => SeqSpec::LnExpr(Formula::parse(rest)?),
            "expr" => SeqSpec::Expr(Formula::parse(rest)?),
            "list" => {
                let mut m = BTreeMap::new();
                for (i, v) in rest.split(',').enumerate() {
                    let v = num(v)?;
                    if !(v > 0.0) {
                        return Err(Error::validation(format!("list values must be positive, got {v}")));
                    }
                    m.insert(first + i as u64, v.ln());
                }
                SeqSpec::Table(m)
            }
            "table" => SeqSpec::Table(read_table(Path::new(rest.trim()))?),
            other => return Err(Error::validation(format!("unknown sequence kind '{other}'"))),
        })
    }

    /// Whether values exist for every n (closed form).
    pub fn extendable(&self) -> bool {
        !matches!(self, SeqSpec::Table(_))
    }

    /// ln s(n); None outside a table.
    pub fn ln_value(&self, n: u64) -> Result<Option<f64>> {
        self.ln_value_f(n as f64)
    }

    /// ln s(n) at a real index (closed forms), used when probing far beyond the table.
    pub fn ln_value_f(&self, n: f64) -> Result<Option<f64>> {
        Ok(Some(match self {
            SeqSpec::Pow(p) => -p * n.ln(),
            SeqSpec::Geom(b) => -n * b.ln(),
            SeqSpec::LnExpr(f) => f.eval(n)?,
            SeqSpec::Expr(f) => f.eval(n)?.ln(),
            SeqSpec::Table(m) => match m.get(&(n as u64)) {
                Some(v) if n.fract() == 0.0 => *v,
                _ => return Ok(None),
            },
        }))
    }

    pub fn describe(&self) -> String {
        match self {
            SeqSpec::Pow(p) => format!("pow:{p}"),
            SeqSpec::Geom(b) => format!("geom:{b}"),
            SeqSpec::LnExpr(f) => format!("exp:{}", f.source()),
            SeqSpec::Expr(f) => format!("expr:{}", f.source()),
            SeqSpec::Table(m) => format!("table[{} rows]", m.len()),
        }
    }
}

/// Decimal text for e^{ln_v}, valid far outside the f64 exponent range.
pub fn format_from_ln(ln_v: f64) -> String {
    let l10 = ln_v / LN_10;
    let e = l10.floor();
    let mut m = 10f64.powf(l10 - e);
    let mut e = e as i64;
    if m >= 9.999_999_999_999_999 {
        m /= 10.0;
        e += 1;
    }
    format!("{m:.17}e{e}")
}

/// Inverse of [`format_from_ln`]; accepts any float literal.
pub fn parse_to_ln(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::validation(format!("'{s}' is not a positive number"));
    let (m, e) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m.parse::<f64>().map_err(|_| bad())?, e.parse::<i64>().map_err(|_| bad())?),
        None => (s.parse::<f64>().map_err(|_| bad())?, 0),
    };
    if !(m > 0.0) {
        return Err(bad());
    }
    Ok(m.ln() + e as f64 * LN_10)
}

pub fn read_table(path: &Path) -> Result<BTreeMap<u64, f64>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, e))?;
    let mut m = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::io(path, e))?;
        if rec.len() < 2 {
            return Err(Error::validation(format!("{}: rows need n,value", path.display())));
        }
        let n: u64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("{}: bad index '{}'", path.display(), &rec[0])))?;
        m.insert(n, parse_to_ln(&rec[1])?);
    }
    if m.is_empty() {
        return Err(Error::validation(format!("{}: empty table", path.display())));
    }
    Ok(m)
}

pub fn write_table(path: &Path, header: &str, rows: &[(u64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    w.write_record(["n", header]).map_err(|e| Error::io(path, e))?;
    for (n, ln_v) in rows {
        w.write_record([n.to_string(), format_from_ln(*ln_v)]).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
