//! TOML loading of [`SystemParams`].
//!
//! ```toml
//! [system]
//! preset = "high"            # optional: "high" or "low"
//! g0 = "37 Hz/2pi"
//! j = "26.21 MHz/2pi"
//! lambda_mm = 0.78
//!
//! [system.signal]
//! kappa = "25.8 MHz/2pi"     # or kappa_in / kappa_ex
//! eta = 0.58
//! omega = "193 THz/2pi"
//!
//! [system.microwave]
//! kappa = "13.706 MHz/2pi"
//! eta = 0.408
//! n_bath = 0.05
//! ```
//!
//! Rates are either plain numbers in rad/s, strings with a `rad/s` unit, or
//! strings in `Hz`/`kHz`/`MHz`/`GHz`/`THz` (cyclic, optionally tagged
//! `/2pi`), converted to rad/s on load.

use thiserror::Error;
use toml::{Table, Value};

use crate::params::{ModeParams, ParamError, SystemParams};
use crate::units::TWO_PI;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("missing required field `{0}`")]
    Missing(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("could not parse configuration: {0}")]
    Syntax(String),
}

impl ConfigError {
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Missing(f) | ConfigError::Invalid { field: f, .. } => Some(f),
            ConfigError::Syntax(_) => None,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

pub fn parse_document(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>().map_err(|e| ConfigError::Syntax(e.to_string()))
}

/// Applies a `dotted.key=value` override. The value is read as TOML when it
/// parses, otherwise as a bare string.
pub fn apply_override(doc: &mut Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Syntax(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::Syntax(format!("bad override key `{key}`")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));

    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap();
    let mut table = doc;
    let mut path = String::new();
    for p in parts {
        if !path.is_empty() {
            path.push('.');
        }
        path.push_str(p);
        let entry = table.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| invalid(&path, "is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Reads a number, or a string `"<number> <unit>"` for rates.
pub fn parse_quantity(v: &Value, field: &str) -> Result<f64, ConfigError> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        Value::String(s) => parse_unit_string(s).map_err(|r| invalid(field, r))?,
        other => return Err(invalid(field, format!("expected a number, got {}", other.type_str()))),
    };
    if !x.is_finite() {
        return Err(invalid(field, "must be finite"));
    }
    Ok(x)
}

/// Reads a duration in seconds: a number, or `"<number> <unit>"` with unit
/// `s`, `ms`, `us` or `ns`.
pub fn parse_duration(v: &Value, field: &str) -> Result<f64, ConfigError> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        Value::String(s) => {
            let (num, unit) = split_number(s.trim());
            let x: f64 = num
                .trim()
                .parse()
                .map_err(|_| invalid(field, format!("cannot read a number from `{s}`")))?;
            let scale = match unit.trim() {
                "" | "s" => 1.0,
                "ms" => 1e-3,
                "us" | "µs" => 1e-6,
                "ns" => 1e-9,
                other => return Err(invalid(field, format!("unknown time unit `{other}`"))),
            };
            x * scale
        }
        other => return Err(invalid(field, format!("expected a duration, got {}", other.type_str()))),
    };
    if !(x.is_finite() && x >= 0.0) {
        return Err(invalid(field, "must be finite and >= 0"));
    }
    Ok(x)
}

fn split_number(s: &str) -> (&str, &str) {
    let split = s
        .find(|c: char| c.is_whitespace() || (c.is_alphabetic() && c != 'e' && c != 'E'))
        .unwrap_or(s.len());
    s.split_at(split)
}

fn parse_unit_string(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (num, unit) = split_number(s);
    let x: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("cannot read a number from `{s}`"))?;
    let unit = unit.trim();
    let unit = unit
        .strip_suffix("/2pi")
        .or_else(|| unit.strip_suffix("/2π"))
        .unwrap_or(unit)
        .trim();
    let scale = match unit {
        "" | "rad/s" => 1.0,
        "Hz" => TWO_PI,
        "kHz" => TWO_PI * 1e3,
        "MHz" => TWO_PI * 1e6,
        "GHz" => TWO_PI * 1e9,
        "THz" => TWO_PI * 1e12,
        other => return Err(format!("unknown unit `{other}`")),
    };
    Ok(x * scale)
}

struct Section<'a> {
    table: Option<&'a Table>,
    path: String,
}

impl<'a> Section<'a> {
    fn new(parent: Option<&'a Table>, name: &str, prefix: &str) -> Result<Self, ConfigError> {
        let path = if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}.{name}")
        };
        let table = match parent.and_then(|t| t.get(name)) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(invalid(&path, "must be a table")),
        };
        Ok(Self { table, path })
    }

    fn field(&self, name: &str) -> String {
        format!("{}.{name}", self.path)
    }

    fn get(&self, name: &str) -> Result<Option<f64>, ConfigError> {
        match self.table.and_then(|t| t.get(name)) {
            None => Ok(None),
            Some(v) => parse_quantity(v, &self.field(name)).map(Some),
        }
    }

    fn require(&self, name: &str, base: Option<f64>) -> Result<f64, ConfigError> {
        match self.get(name)? {
            Some(x) => Ok(x),
            None => base.ok_or_else(|| ConfigError::Missing(self.field(name))),
        }
    }
}

fn load_mode(sec: &Section, base: Option<&ModeParams>, intrinsic_only: bool) -> Result<ModeParams, ConfigError> {
    let kappa = sec.get("kappa")?;
    let eta = sec.get("eta")?;
    let kin = sec.get("kappa_in")?;
    let kex = sec.get("kappa_ex")?;
    if kappa.is_some() && (kin.is_some() || kex.is_some()) {
        return Err(invalid(&sec.field("kappa"), "give either kappa (+ eta) or kappa_in/kappa_ex, not both"));
    }
    let (kappa_in, kappa_ex) = if intrinsic_only {
        if eta.is_some() || kex.is_some() {
            return Err(invalid(&sec.path, "this mode has no external channel"));
        }
        let k = match (kappa, kin) {
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => base.map(|b| b.kappa()).ok_or_else(|| ConfigError::Missing(sec.field("kappa")))?,
        };
        (k, 0.0)
    } else if let (None, None, None, None, Some(b)) = (kappa, eta, kin, kex, base) {
        (b.kappa_in, b.kappa_ex)
    } else if kin.is_some() || kex.is_some() {
        (
            sec.require("kappa_in", base.map(|b| b.kappa_in))?,
            sec.require("kappa_ex", base.map(|b| b.kappa_ex))?,
        )
    } else {
        let k = match kappa {
            Some(k) => k,
            None => base.map(|b| b.kappa()).ok_or_else(|| ConfigError::Missing(sec.field("kappa")))?,
        };
        let e = match eta {
            Some(e) => e,
            None => base.map(|b| b.eta()).ok_or_else(|| ConfigError::Missing(sec.field("eta")))?,
        };
        if !(0.0..=1.0).contains(&e) {
            return Err(invalid(&sec.field("eta"), "must lie in [0, 1]"));
        }
        (k * (1.0 - e), k * e)
    };
    Ok(ModeParams {
        omega: sec.get("omega")?.or(base.map(|b| b.omega)).unwrap_or(0.0),
        kappa_in,
        kappa_ex,
        delta: sec.get("delta")?.or(base.map(|b| b.delta)).unwrap_or(0.0),
        n_bath: sec.get("n_bath")?.or(base.map(|b| b.n_bath)).unwrap_or(0.0),
        n_waveguide: sec.get("n_waveguide")?.or(base.map(|b| b.n_waveguide)).unwrap_or(0.0),
    })
}

pub fn preset(name: &str) -> Option<SystemParams> {
    match name {
        "high" => Some(SystemParams::high_cooperativity()),
        "low" => Some(SystemParams::low_cooperativity()),
        _ => None,
    }
}

/// Reads the `[system]` section of `doc`.
pub fn load_system(doc: &Table) -> Result<SystemParams, ConfigError> {
    let sys = Section::new(Some(doc), "system", "")?;
    let base = match sys.table.and_then(|t| t.get("preset")) {
        None => None,
        Some(Value::String(name)) => Some(preset(name).ok_or_else(|| {
            invalid("system.preset", format!("unknown preset `{name}` (expected high or low)"))
        })?),
        Some(_) => return Err(invalid("system.preset", "must be a string")),
    };

    let sec = |name: &str| Section::new(sys.table, name, "system");
    let signal = load_mode(&sec("signal")?, base.as_ref().map(|b| &b.signal), false)?;
    let microwave = load_mode(&sec("microwave")?, base.as_ref().map(|b| &b.microwave), false)?;

    // pump and Stokes default to the signal linewidth
    let pump_base = base.map(|b| b.pump).unwrap_or(signal);
    let pump = load_mode(&sec("pump")?, Some(&pump_base), false)?;
    let stokes_base = base.map(|b| b.stokes).unwrap_or(ModeParams { delta: 0.0, ..signal });
    let stokes = load_mode(&sec("stokes")?, Some(&stokes_base), false)?;

    let g0 = sys.require("g0", base.map(|b| b.g0))?;
    let lambda_mm = sys.require("lambda_mm", base.map(|b| b.lambda_mm))?;
    let j = sys.get("j")?.or(base.map(|b| b.j)).unwrap_or(0.0);
    let tm_sec = sec("tm")?;
    let tm_base = match base {
        Some(b) => Some(b.tm),
        // with J = 0 the TM mode is decoupled and its linewidth irrelevant
        None if j == 0.0 => Some(ModeParams::new(0.0, signal.kappa(), 0.0)),
        None => None,
    };
    let tm = load_mode(&tm_sec, tm_base.as_ref(), true)?;

    let out = SystemParams {
        pump,
        signal,
        stokes,
        tm,
        microwave,
        g0,
        j,
        lambda_mm,
    };
    out.validate().map_err(|e| match e {
        ParamError::Invalid { field, reason } => invalid(&format!("system.{field}"), reason),
        ParamError::Domain(r) => invalid("system", r),
    })?;
    Ok(out)
}

/// Parses `text` and applies `overrides` before loading the system.
pub fn load_system_str(text: &str, overrides: &[String]) -> Result<SystemParams, ConfigError> {
    let mut doc = parse_document(text)?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    load_system(&doc)
}
