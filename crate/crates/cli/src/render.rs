use serde_json::{json, Value};
use stopwalk_core::scalar::{format_decimal, format_rational, parse_rational};
use stopwalk_core::{Error, LatticePoint, Rational};

/// Digits used for `f64` inputs when no `--digits` is given.
pub const FLOAT_DIGITS: u32 = 12;

/// One rendering mode per invocation: exact fractions or fixed decimals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Render {
    Exact,
    Decimal(u32),
}

impl Render {
    /// Exact unless digits were requested or the inputs are floating point.
    pub fn choose(digits: Option<u32>, exact_inputs: bool) -> Self {
        match digits {
            Some(d) => Render::Decimal(d),
            None if exact_inputs => Render::Exact,
            None => Render::Decimal(FLOAT_DIGITS),
        }
    }

    pub fn rational(self, value: &Rational) -> String {
        match self {
            Render::Exact => format_rational(value),
            Render::Decimal(d) => format_decimal(value, d),
        }
    }

    pub fn rationals(self, values: &[Rational]) -> Value {
        values.iter().map(|v| Value::String(self.rational(v))).collect()
    }

    /// Floats never appear in exact mode; a float rendered there is printed
    /// as its exact binary fraction.
    pub fn float(self, value: f64) -> String {
        match self {
            Render::Decimal(d) => format!("{value:.*}", d as usize),
            Render::Exact => match Rational::from_float(value) {
                Some(r) => format_rational(&r),
                None => value.to_string(),
            },
        }
    }
}

pub fn point(x: &LatticePoint) -> Value {
    Value::String(x.to_string())
}

/// Comma-separated probabilities, e.g. `1/3,1/3,1/3` or `0.2,0.8`.
pub fn parse_rational_list(text: &str) -> Result<Vec<Rational>, Error> {
    text.split(',').map(|s| parse_rational(s.trim())).collect()
}

fn snake_case(name: &str) -> String {
    let mut out = String::new();
    for (i, c) in name.chars().enumerate() {
        if c.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

/// Machine-readable error body: `{"error": "<variant>", "message": "..."}`.
pub fn error_json(kind: &str, message: &str) -> Value {
    json!({ "error": kind, "message": message })
}

pub fn core_error_json(err: &Error) -> Value {
    let debug = format!("{err:?}");
    let variant: String = debug.chars().take_while(char::is_ascii_alphanumeric).collect();
    error_json(&snake_case(&variant), &err.to_string())
}
