//! Flat `key = value` configuration with dotted section prefixes, or JSON by extension.
//!
//! Lookups record the keys they touch and [`Config::finish`] rejects the rest.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Unreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::parse_json(&text)
        } else {
            Self::parse_text(&text)
        }
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("config line {}: expected `key = value`, got `{line}`", n + 1))
            })?;
            let key = k.trim();
            if key.is_empty() || key.split('.').any(str::is_empty) {
                return Err(CliError::Validation(format!("config line {}: malformed key `{key}`", n + 1)));
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(CliError::Validation(format!("config line {}: duplicate key `{key}`", n + 1)));
            }
        }
        Ok(Self { entries, used: RefCell::default() })
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config JSON: {e}")))?;
        let mut entries = BTreeMap::new();
        match v {
            Value::Object(_) => flatten("", &v, &mut entries)?,
            _ => return Err(CliError::Validation("config JSON must be an object".into())),
        }
        Ok(Self { entries, used: RefCell::default() })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(String::as_str)
    }

    pub fn has(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    fn parse<T: FromStr>(&self, key: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| CliError::Validation(format!("`{key}`: cannot parse `{v}`")))
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            Some(v) => self.parse(key, v),
            None => Ok(default),
        }
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).to_string()
    }

    pub fn list<T: FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>> {
        match self.raw(key) {
            Some(v) => {
                let items: Vec<T> = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| self.parse(key, s))
                    .collect::<Result<_>>()?;
                if items.is_empty() {
                    return Err(CliError::Validation(format!("`{key}` must not be empty")));
                }
                Ok(items)
            }
            None => Ok(default.to_vec()),
        }
    }

    /// A point given as one or two comma-separated coordinates.
    pub fn point(&self, key: &str, default: [f64; 2], dim: usize) -> Result<[f64; 2]> {
        let Some(v) = self.raw(key) else {
            return Ok(default);
        };
        let c: Vec<f64> = v
            .split(',')
            .map(|s| self.parse(key, s.trim()))
            .collect::<Result<_>>()?;
        match (c.as_slice(), dim) {
            ([x], 1) => Ok([*x, 0.0]),
            ([x, y], 2) => Ok([*x, *y]),
            _ => Err(CliError::Validation(format!("`{key}` needs {dim} coordinate(s), got `{v}`"))),
        }
    }

    /// Pairs written as `a:b`, separated by commas.
    pub fn pairs(&self, key: &str, default: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
        let Some(v) = self.raw(key) else {
            return Ok(default.to_vec());
        };
        v.split(',')
            .map(|s| {
                let (a, b) = s
                    .split_once(':')
                    .ok_or_else(|| CliError::Validation(format!("`{key}`: expected `a:b`, got `{}`", s.trim())))?;
                Ok((self.parse(key, a.trim())?, self.parse(key, b.trim())?))
            })
            .collect()
    }

    /// Rejects keys that no runner read.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .entries
            .keys()
            .filter(|k| !used.contains(k.as_str()))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(format!("unrecognised config keys: {}", unknown.join(", "))))
        }
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries.clone()
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) -> Result<()> {
    let scalar = |v: &Value| -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            _ => Err(CliError::Validation(format!("`{prefix}`: unsupported JSON value"))),
        }
    };
    match v {
        Value::Object(m) => {
            for (k, c) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, c, out)?;
            }
        }
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(scalar).collect::<Result<_>>()?;
            out.insert(prefix.to_string(), parts.join(", "));
        }
        other => {
            out.insert(prefix.to_string(), scalar(other)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_format() {
        let c = Config::parse_text("# grid\ngrid.M = 2048  # even\ngrid.L=40\nT = 0.5, 1\n\nradii = 2:2, 4:2\n").unwrap();
        assert_eq!(c.get::<usize>("grid.M", 0).unwrap(), 2048);
        assert_eq!(c.get::<f64>("grid.L", 0.0).unwrap(), 40.0);
        assert_eq!(c.list::<f64>("T", &[]).unwrap(), vec![0.5, 1.0]);
        assert_eq!(c.pairs("radii", &[]).unwrap(), vec![(2.0, 2.0), (4.0, 2.0)]);
        assert_eq!(c.get::<f64>("missing", 3.0).unwrap(), 3.0);
        c.finish().unwrap();
    }

    #[test]
    fn rejects_malformed_and_unused() {
        assert!(Config::parse_text("grid.M 2048").is_err());
        assert!(Config::parse_text("a = 1\na = 2").is_err());
        assert!(Config::parse_text("grid..M = 1").is_err());
        let c = Config::parse_text("grid.M = x\ntypo = 1").unwrap();
        assert!(c.get::<usize>("grid.M", 0).is_err());
        assert!(c.finish().is_err());
    }

    #[test]
    fn json_flattens_to_dotted_keys() {
        let c = Config::parse_json(r#"{"grid": {"M": 256, "L": 12.5}, "T": [0.5, 1], "u0": {"profile": "bump"}}"#).unwrap();
        assert_eq!(c.get::<usize>("grid.M", 0).unwrap(), 256);
        assert_eq!(c.get::<f64>("grid.L", 0.0).unwrap(), 12.5);
        assert_eq!(c.list::<f64>("T", &[]).unwrap(), vec![0.5, 1.0]);
        assert_eq!(c.string("u0.profile", "gaussian"), "bump");
        assert!(Config::parse_json("[1, 2]").is_err());
    }

    #[test]
    fn points_follow_dimension() {
        let c = Config::parse_text("a = 1\nb = 1, 2").unwrap();
        assert_eq!(c.point("a", [0.0; 2], 1).unwrap(), [1.0, 0.0]);
        assert_eq!(c.point("b", [0.0; 2], 2).unwrap(), [1.0, 2.0]);
        assert!(c.point("b", [0.0; 2], 1).is_err());
    }
}
