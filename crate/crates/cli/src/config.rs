//! Layered configuration: built-in defaults, then a JSON file, then flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::{self, DeserializeOwned, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::CliError;

/// A real number that may be infinite; written as "inf" / "-inf".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl FromStr for Real {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "+inf" => Ok(Real(f64::INFINITY)),
            "-inf" => Ok(Real(f64::NEG_INFINITY)),
            t => match t.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Real(x)),
                _ => Err(format!("expected a number, inf or -inf, got {s:?}")),
            },
        }
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            x if x == f64::INFINITY => f.write_str("inf"),
            x if x == f64::NEG_INFINITY => f.write_str("-inf"),
            x => write!(f, "{x}"),
        }
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.collect_str(self)
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RealVisitor;
        impl Visitor<'_> for RealVisitor {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(RealVisitor)
    }
}

/// Where a generation trace starts: a number, the objective cutoff
/// (`c_star`) or an offset from the steady-state cutoff (`c_inf-1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartPoint {
    At(f64),
    Objective,
    SteadyOffset(f64),
}

impl FromStr for StartPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t == "c_star" {
            return Ok(StartPoint::Objective);
        }
        if let Some(rest) = t.strip_prefix("c_inf") {
            if rest.is_empty() {
                return Ok(StartPoint::SteadyOffset(0.0));
            }
            let off: f64 = rest.trim_start_matches('+').parse().map_err(|_| format!("bad offset in {s:?}"))?;
            return Ok(StartPoint::SteadyOffset(off));
        }
        t.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(StartPoint::At)
            .ok_or_else(|| format!("expected a number, c_star or c_inf[+-offset], got {s:?}"))
    }
}

impl fmt::Display for StartPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StartPoint::At(x) => write!(f, "{x}"),
            StartPoint::Objective => f.write_str("c_star"),
            StartPoint::SteadyOffset(o) if o == 0.0 => f.write_str("c_inf"),
            StartPoint::SteadyOffset(o) => write!(f, "c_inf{o:+}"),
        }
    }
}

impl Serialize for StartPoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            StartPoint::At(x) => s.serialize_f64(x),
            _ => s.collect_str(self),
        }
    }
}

impl<'de> Deserialize<'de> for StartPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => n.as_f64().map(StartPoint::At).ok_or_else(|| de::Error::custom("bad number")),
            Value::String(s) => s.parse().map_err(de::Error::custom),
            other => Err(de::Error::custom(format!("expected a number or string, got {other}"))),
        }
    }
}

/// Lag weights for periods 2..L: row i lists the weights on periods
/// 1..i-1. Written on the command line as "0.5;0.25,0.5".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LagRows(pub Vec<Vec<f64>>);

impl FromStr for LagRows {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(';')
            .map(|row| {
                row.split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad lag weight {x:?} in {s:?}")))
                    .collect()
            })
            .collect::<Result<_, _>>()
            .map(LagRows)
    }
}

/// Declares a resolved parameter struct (with defaults) and a matching
/// clap flag struct whose fields are all optional.
macro_rules! params {
    (
        $(#[$meta:meta])*
        $params:ident / $args:ident {
            $( $(#[$fmeta:meta])* $field:ident : $ty:ty = $default:expr ),* $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct $params {
            $( pub $field: $ty, )*
        }

        impl Default for $params {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        #[derive(Debug, Clone, Default, clap::Args, serde::Serialize)]
        pub struct $args {
            $(
                #[arg(long, allow_hyphen_values = true)]
                $(#[$fmeta])*
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}
pub(crate) use params;

/// Contents of a `--config` file: either a bare parameter object or a
/// scenario record `{command, seed, name, config}` such as a sidecar.
#[derive(Debug, Default)]
pub struct ConfigFile {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub name: Option<String>,
    pub params: Map<String, Value>,
}

const SCENARIO_KEYS: [&str; 3] = ["command", "seed", "name"];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(None, format!("{} is not valid JSON: {e}", path.display())))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, CliError> {
        let Value::Object(mut obj) = value else {
            return Err(CliError::config(None, "config file must hold a JSON object"));
        };
        let command = match obj.get("command") {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(CliError::config(Some("command"), "must be a string")),
        };
        let seed = match obj.get("seed") {
            None => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| CliError::config(Some("seed"), "must be a non-negative integer"))?),
        };
        let name = match obj.get("name") {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(CliError::config(Some("name"), "must be a string")),
        };
        let params = match obj.remove("config") {
            Some(Value::Object(p)) => p,
            Some(_) => return Err(CliError::config(Some("config"), "must be an object")),
            None => {
                for k in SCENARIO_KEYS {
                    obj.remove(k);
                }
                obj
            }
        };
        Ok(Self { command, seed, name, params })
    }
}

/// Defaults, overlaid by the file's parameters, overlaid by flags.
pub fn resolve<P>(file: &Map<String, Value>, flags: Value) -> Result<P, CliError>
where
    P: Serialize + DeserializeOwned + Default,
{
    let mut merged = match serde_json::to_value(P::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("parameter structs serialize to objects"),
    };
    merged.extend(file.iter().map(|(k, v)| (k.clone(), v.clone())));
    if let Value::Object(f) = flags {
        merged.extend(f);
    }
    serde_path_to_error::deserialize(Value::Object(merged)).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        CliError::Config { field, message: e.into_inner().to_string() }
    })
}
