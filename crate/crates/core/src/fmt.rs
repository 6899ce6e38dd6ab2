//! Fixed 17-significant-digit float rendering for every text output.
//!
//! Seventeen significant digits round-trip any `f64` exactly. Non-finite
//! values serialize as JSON `null` and read back as NaN.

use serde::{Deserialize, Deserializer, Serializer};
use serde_json::value::RawValue;

/// Scientific notation with 17 significant digits, e.g. `-1.2500000000000000e-1`.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn raw(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { sig17(x) } else { "null".to_owned() };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

pub fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&raw(*x), s)
}

pub fn ser_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => ser_f64(v, s),
        None => s.serialize_none(),
    }
}

pub fn ser_vec_f64<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        seq.serialize_element(&raw(x))?;
    }
    seq.end()
}

pub fn ser_points<S: Serializer>(pts: &Option<Vec<(f64, f64)>>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let Some(pts) = pts else {
        return s.serialize_none();
    };
    let mut seq = s.serialize_seq(Some(pts.len()))?;
    for &(a, b) in pts {
        seq.serialize_element(&[raw(a), raw(b)])?;
    }
    seq.end()
}

pub fn de_f64_or_nan<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}
