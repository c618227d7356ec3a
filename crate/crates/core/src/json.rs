//! JSON encodings for matrices and reports.
//!
//! Parsing goes through `serde_json`. Output uses a small writer of its own so
//! that keys are sorted and every float is printed in scientific notation with
//! 17 significant digits, which makes reports byte-stable.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde_json::Value;

use crate::algebra::{MatrixElement, Scalar, ScalarField};
use crate::error::{Error, Result};

/// Output-side JSON tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<Json>),
    Object(BTreeMap<String, Json>),
}

impl Json {
    pub fn object<K: Into<String>>(entries: impl IntoIterator<Item = (K, Json)>) -> Json {
        Json::Object(entries.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn str(s: impl Into<String>) -> Json {
        Json::Str(s.into())
    }

    /// Compact rendering, sorted keys.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write_to(&mut out);
        out
    }

    fn write_to(&self, out: &mut String) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Json::Float(x) => out.push_str(&format_float(*x)),
            Json::Str(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
            Json::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item.write_to(out);
                }
                out.push(']');
            }
            Json::Object(map) => {
                out.push('{');
                for (i, (k, v)) in map.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(k).expect("key serializes"));
                    out.push(':');
                    v.write_to(out);
                }
                out.push('}');
            }
        }
    }
}

/// 17 significant digits in scientific notation; non-finite values become
/// `null` since JSON has no spelling for them.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

/// A real number, or an `[re, im]` pair.
pub fn parse_scalar(v: &Value) -> Result<Scalar> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .map(|x| Complex64::new(x, 0.0))
            .ok_or_else(|| Error::InvalidInput(format!("not a finite number: {n}"))),
        Value::Array(pair) if pair.len() == 2 => {
            let part = |p: &Value| {
                p.as_f64().ok_or_else(|| {
                    Error::InvalidInput(format!("complex part is not a number: {p}"))
                })
            };
            Ok(Complex64::new(part(&pair[0])?, part(&pair[1])?))
        }
        other => Err(Error::InvalidInput(format!(
            "expected number or [re, im], got {other}"
        ))),
    }
}

/// `{"dim": n, "field": "real"|"complex", "entries": [...]}`, row-major.
pub fn matrix_from_json(v: &Value) -> Result<MatrixElement> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::InvalidInput("matrix must be a JSON object".into()))?;
    let dim = obj
        .get("dim")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::InvalidInput("matrix needs a nonnegative integer 'dim'".into()))?
        as usize;
    let field: ScalarField = obj
        .get("field")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::InvalidInput("matrix needs a 'field'".into()))?
        .parse()?;
    let entries = obj
        .get("entries")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("matrix needs an 'entries' array".into()))?;
    match field {
        ScalarField::Real => {
            let xs = entries
                .iter()
                .map(|e| {
                    e.as_f64()
                        .ok_or_else(|| Error::InvalidInput(format!("real entry expected, got {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            MatrixElement::from_real(dim, &xs)
        }
        ScalarField::Complex => {
            let zs = entries
                .iter()
                .map(|e| match e {
                    Value::Array(_) => parse_scalar(e),
                    _ => Err(Error::InvalidInput(format!(
                        "complex entry must be [re, im], got {e}"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            MatrixElement::from_complex(dim, &zs)
        }
    }
}

pub fn matrix_to_json(m: &MatrixElement) -> Json {
    let entries = m
        .entries()
        .into_iter()
        .map(|z| match m.field() {
            ScalarField::Real => Json::Float(z.re),
            ScalarField::Complex => Json::Array(vec![Json::Float(z.re), Json::Float(z.im)]),
        })
        .collect();
    Json::object([
        ("dim", Json::Int(m.dim() as i64)),
        ("entries", Json::Array(entries)),
        ("field", Json::str(m.field().as_str())),
    ])
}

pub fn parse(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::MalformedJson(e.to_string()))
}
