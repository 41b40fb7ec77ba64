//! Number formatting for emitted files.
//!
//! Floats are written with 17 significant digits in scientific notation
//! (`{:.16e}`), which round-trips every `f64` exactly and does not depend on
//! shortest-representation heuristics. Non-finite values become `null`.

use serde::ser::Error as _;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

/// `x` with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn num17<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if !x.is_finite() {
        return s.serialize_none();
    }
    RawValue::from_string(fmt17(*x))
        .map_err(S::Error::custom)?
        .serialize(s)
}

pub fn opt_num17<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => num17(v, s),
        None => s.serialize_none(),
    }
}

/// `f64` that serializes through [`num17`]; for use inside collections.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct Num17(pub f64);

impl Serialize for Num17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        num17(&self.0, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Probe {
        #[serde(serialize_with = "num17")]
        x: f64,
        #[serde(serialize_with = "opt_num17")]
        y: Option<f64>,
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 123456.789, 0.0] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn serializes_raw_numbers() {
        let text = serde_json::to_string(&Probe { x: 0.5, y: None }).unwrap();
        assert_eq!(text, r#"{"x":5.0000000000000000e-1,"y":null}"#);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["x"].as_f64(), Some(0.5));
        let nan = serde_json::to_string(&Probe { x: f64::NAN, y: Some(2.0) }).unwrap();
        assert_eq!(nan, r#"{"x":null,"y":2.0000000000000000e0}"#);
    }

    #[test]
    fn json_parse_is_exact() {
        for x in [11.0 / 12.0, 0.1 + 0.2, std::f64::consts::PI * 1e-7] {
            let text = serde_json::to_string(&Num17(x)).unwrap();
            let back: Num17 = serde_json::from_str(&text).unwrap();
            assert_eq!(back.0.to_bits(), x.to_bits(), "{text}");
        }
    }
}
