//! JSON helpers for floats that may be infinite or NaN (written as strings).

use serde::Serializer;

pub fn f64_ext<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn vec_f64_ext<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&Ext(*x))?;
    }
    seq.end()
}

pub fn opt_f64_ext<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => f64_ext(x, s),
        None => s.serialize_none(),
    }
}

/// Wrapper serializing through [`f64_ext`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ext(pub f64);

impl serde::Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        f64_ext(&self.0, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_as_strings() {
        let j = serde_json::to_string(&[Ext(1.5), Ext(f64::INFINITY), Ext(f64::NEG_INFINITY), Ext(f64::NAN)]).unwrap();
        assert_eq!(j, r#"[1.5,"inf","-inf","nan"]"#);
    }
}
