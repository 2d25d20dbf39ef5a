use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// Values within this distance of an integer collapse to it.
pub const INTEGER_SNAP: f64 = 1e-9;
/// Absolute tolerance for decimal comparison.
pub const DECIMAL_TOLERANCE: f64 = 1e-6;

/// A normalized answer. Build with [`normalize_answer`] or the `From` impls so
/// integers are never held as decimals.
#[derive(Debug, Clone, PartialEq)]
pub enum AnswerValue {
    Integer(BigInt),
    Decimal(f64),
    Literal(String),
}

impl AnswerValue {
    pub fn kind(&self) -> &'static str {
        match self {
            AnswerValue::Integer(_) => "integer",
            AnswerValue::Decimal(_) => "decimal",
            AnswerValue::Literal(_) => "literal",
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            AnswerValue::Integer(i) => i.to_f64(),
            AnswerValue::Decimal(d) => Some(*d),
            AnswerValue::Literal(_) => None,
        }
    }
}

impl From<i64> for AnswerValue {
    fn from(value: i64) -> Self {
        AnswerValue::Integer(value.into())
    }
}

impl From<f64> for AnswerValue {
    fn from(value: f64) -> Self {
        from_float(value).unwrap_or_else(|| AnswerValue::Literal(value.to_string()))
    }
}

impl From<&str> for AnswerValue {
    fn from(value: &str) -> Self {
        normalize_answer(value)
    }
}

impl fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerValue::Integer(i) => write!(f, "{}", i),
            AnswerValue::Decimal(d) => write!(f, "{}", d),
            AnswerValue::Literal(s) => f.write_str(s),
        }
    }
}

fn from_float(value: f64) -> Option<AnswerValue> {
    if !value.is_finite() {
        return None;
    }
    let nearest = value.round();
    if (value - nearest).abs() < INTEGER_SNAP {
        BigInt::from_f64(nearest).map(AnswerValue::Integer)
    } else {
        Some(AnswerValue::Decimal(value))
    }
}

fn parse_integer(text: &str) -> Option<BigInt> {
    let digits = text.strip_prefix('+').unwrap_or(text);
    let unsigned = digits.strip_prefix('-').unwrap_or(digits);
    if unsigned.is_empty() || !unsigned.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    BigInt::from_str(digits).ok()
}

fn parse_float(text: &str) -> Option<f64> {
    // Rust also accepts "inf" and "NaN"; only plain numerals count here.
    let looks_numeric = text
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'+' | b'-'))
        && text.bytes().any(|b| b.is_ascii_digit());
    if !looks_numeric {
        return None;
    }
    text.parse::<f64>().ok()
}

/// Integer first, then decimal (snapping near-integers), else the trimmed text.
pub fn normalize_answer(raw: &str) -> AnswerValue {
    let text = raw.trim();
    if let Some(i) = parse_integer(text) {
        return AnswerValue::Integer(i);
    }
    if let Some(value) = parse_float(text).and_then(from_float) {
        return value;
    }
    AnswerValue::Literal(text.to_string())
}

pub fn compare_answers(a: &AnswerValue, b: &AnswerValue) -> bool {
    match (a, b) {
        (AnswerValue::Integer(x), AnswerValue::Integer(y)) => x == y,
        (AnswerValue::Literal(x), AnswerValue::Literal(y)) => x == y,
        (AnswerValue::Literal(_), _) | (_, AnswerValue::Literal(_)) => false,
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => (x - y).abs() <= DECIMAL_TOLERANCE,
            _ => false,
        },
    }
}

impl Serialize for AnswerValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            AnswerValue::Integer(i) => match i.to_i64() {
                Some(small) => serializer.serialize_i64(small),
                None => serializer.serialize_str(&i.to_string()),
            },
            AnswerValue::Decimal(d) => serializer.serialize_f64(*d),
            AnswerValue::Literal(s) => serializer.serialize_str(s),
        }
    }
}

impl<'de> Deserialize<'de> for AnswerValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct AnswerVisitor;

        impl Visitor<'_> for AnswerVisitor {
            type Value = AnswerValue;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<AnswerValue, E> {
                Ok(v.into())
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<AnswerValue, E> {
                Ok(AnswerValue::Integer(v.into()))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<AnswerValue, E> {
                Ok(v.into())
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<AnswerValue, E> {
                Ok(normalize_answer(v))
            }
        }

        deserializer.deserialize_any(AnswerVisitor)
    }
}
