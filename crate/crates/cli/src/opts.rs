//! Typed access to a scenario section with field names in errors.

use eo_transducer::config::{parse_duration, parse_quantity, ConfigError};
use toml::{Table, Value};

use crate::CliError;

pub struct Opts<'a> {
    table: Option<&'a Table>,
    path: String,
}

fn invalid(field: String, reason: impl Into<String>) -> CliError {
    CliError::Config(ConfigError::Invalid {
        field,
        reason: reason.into(),
    })
}

impl<'a> Opts<'a> {
    pub fn root(doc: &'a Table, name: &str) -> Result<Self, CliError> {
        Self::child(Some(doc), name.to_string())
    }

    fn child(parent: Option<&'a Table>, path: String) -> Result<Self, CliError> {
        let name = path.rsplit('.').next().unwrap();
        let table = match parent.and_then(|t| t.get(name)) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(invalid(path, "must be a table")),
        };
        Ok(Self { table, path })
    }

    pub fn sub(&self, name: &str) -> Result<Opts<'a>, CliError> {
        Self::child(self.table, self.field(name))
    }

    pub fn is_present(&self) -> bool {
        self.table.is_some()
    }

    pub fn field(&self, key: &str) -> String {
        format!("{}.{key}", self.path)
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn missing(&self, key: &str) -> CliError {
        CliError::Config(ConfigError::Missing(self.field(key)))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) if f.is_finite() => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(invalid(self.field(key), "expected a finite number")),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, CliError> {
        self.f64(key)?.ok_or_else(|| self.missing(key))
    }

    /// A rate in rad/s, accepting unit strings.
    pub fn rate(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.get(key).map(|v| parse_quantity(v, &self.field(key))).transpose().map_err(CliError::Config)
    }

    pub fn rate_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.rate(key)?.unwrap_or(default))
    }

    pub fn require_rate(&self, key: &str) -> Result<f64, CliError> {
        self.rate(key)?.ok_or_else(|| self.missing(key))
    }

    pub fn duration(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.get(key).map(|v| parse_duration(v, &self.field(key))).transpose().map_err(CliError::Config)
    }

    pub fn duration_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.duration(key)?.unwrap_or(default))
    }

    pub fn require_duration(&self, key: &str) -> Result<f64, CliError> {
        self.duration(key)?.ok_or_else(|| self.missing(key))
    }

    pub fn string(&self, key: &str) -> Result<Option<&'a str>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(invalid(self.field(key), "expected a string")),
        }
    }

    pub fn require_string(&self, key: &str) -> Result<&'a str, CliError> {
        self.string(key)?.ok_or_else(|| self.missing(key))
    }

    /// A string or an array of strings.
    pub fn strings(&self, key: &str) -> Result<Option<Vec<&'a str>>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(vec![s.as_str()])),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| v.as_str().ok_or_else(|| invalid(self.field(key), "expected strings")))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(invalid(self.field(key), "expected a string or an array of strings")),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(_) => Err(invalid(self.field(key), "expected a non-negative integer")),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(invalid(self.field(key), "expected true or false")),
        }
    }

    pub fn invalid(&self, key: &str, reason: impl Into<String>) -> CliError {
        invalid(self.field(key), reason)
    }

    pub fn to_json(&self) -> serde_json::Value {
        self.table
            .map(|t| serde_json::to_value(t).expect("toml table converts to json"))
            .unwrap_or(serde_json::Value::Null)
    }
}

/// `[section.<name>]` grid: `min`, `max`, `points`, `scale = "log" | "linear"`.
pub fn grid(o: &Opts) -> Result<Vec<f64>, CliError> {
    let lo = o.require_f64("min")?;
    let hi = o.require_f64("max")?;
    let n = o.usize_or("points", 21)?;
    if n < 1 {
        return Err(o.invalid("points", "must be >= 1"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = |k: usize| k as f64 / (n - 1) as f64;
    match o.string("scale")?.unwrap_or("linear") {
        "linear" => Ok((0..n).map(|k| lo + (hi - lo) * step(k)).collect()),
        "log" => {
            if !(lo > 0.0 && hi > 0.0) {
                return Err(o.invalid("min", "log grids need positive bounds"));
            }
            Ok((0..n).map(|k| lo * (hi / lo).powf(step(k))).collect())
        }
        other => Err(o.invalid("scale", format!("unknown scale `{other}` (expected log or linear)"))),
    }
}
