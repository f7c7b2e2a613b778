//! Flat `key=value` experiment configuration.
//!
//! Each subcommand owns a schema of dotted keys with built-in defaults. Values are layered
//! in the order default < preset < config file < command line, and every value is checked
//! against its key's type when it is set, so a bad value fails before any work starts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{key}`{}; valid keys: {valid}", at_line(*.line))]
    UnknownKey { key: String, line: Option<usize>, valid: String },
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("unknown preset `{name}`; available: {available}")]
    UnknownPreset { name: String, available: String },
}

fn at_line(line: Option<usize>) -> String {
    line.map(|l| format!(" on line {l}")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Float,
    PositiveFloat,
    Int,
    FloatList,
    IntList,
    Bool,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub kind: Kind,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, kind: Kind, help: &'static str) -> Key {
    Key { name, default, kind, help }
}

/// A named bundle of overrides applied on top of the defaults.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub values: &'static [(&'static str, &'static str)],
}

fn check(kind: Kind, key: &str, value: &str) -> Result<(), ConfigError> {
    let bad = |reason: &str| ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.into() };
    let float = |v: &str| v.trim().parse::<f64>().ok().filter(|x| x.is_finite());
    let int = |v: &str| v.trim().parse::<u64>().ok();
    match kind {
        Kind::Float => float(value).map(|_| ()).ok_or_else(|| bad("expected a finite number")),
        Kind::PositiveFloat => match float(value) {
            Some(v) if v > 0.0 => Ok(()),
            _ => Err(bad("expected a positive number")),
        },
        Kind::Int => int(value).map(|_| ()).ok_or_else(|| bad("expected a non-negative integer")),
        Kind::FloatList => {
            if value.trim().is_empty() {
                return Err(bad("list is empty"));
            }
            value.split(',').try_for_each(|v| float(v).map(|_| ()).ok_or_else(|| bad("expected comma-separated numbers")))
        }
        Kind::IntList => {
            if value.trim().is_empty() {
                return Err(bad("list is empty"));
            }
            value.split(',').try_for_each(|v| int(v).map(|_| ()).ok_or_else(|| bad("expected comma-separated integers")))
        }
        Kind::Bool => match value.trim() {
            "true" | "false" => Ok(()),
            _ => Err(bad("expected true or false")),
        },
        Kind::Choice(opts) => {
            if opts.contains(&value.trim()) {
                Ok(())
            } else {
                Err(bad(&format!("expected one of {}", opts.join(", "))))
            }
        }
    }
}

/// A fully resolved configuration for one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
    schema: &'static [Key],
}

impl Config {
    /// Defaults only.
    pub fn defaults(schema: &'static [Key]) -> Config {
        let values = schema.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect();
        Config { values, schema }
    }

    fn lookup(&self, name: &str, line: Option<usize>) -> Result<&'static Key, ConfigError> {
        self.schema.iter().find(|k| k.name == name).ok_or_else(|| ConfigError::UnknownKey {
            key: name.into(),
            line,
            valid: self.schema.iter().map(|k| k.name).collect::<Vec<_>>().join(", "),
        })
    }

    pub fn set(&mut self, name: &str, value: &str) -> Result<(), ConfigError> {
        self.set_at(name, value, None)
    }

    fn set_at(&mut self, name: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        let k = self.lookup(name, line)?;
        check(k.kind, name, value)?;
        self.values.insert(name.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn apply_preset(&mut self, presets: &[Preset], name: &str) -> Result<(), ConfigError> {
        let p = presets.iter().find(|p| p.name == name).ok_or_else(|| ConfigError::UnknownPreset {
            name: name.into(),
            available: if presets.is_empty() { "none".into() } else { presets.iter().map(|p| p.name).collect::<Vec<_>>().join(", ") },
        })?;
        for (k, v) in p.values {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies a config file: one `key=value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Malformed { line: idx + 1, text: raw.to_string() })?;
            self.set_at(k.trim(), v, Some(idx + 1))?;
        }
        Ok(())
    }

    /// Resolves the layers in precedence order.
    pub fn resolve(
        schema: &'static [Key],
        presets: &[Preset],
        preset: Option<&str>,
        file: Option<&str>,
        cli: &[(String, String)],
    ) -> Result<Config, ConfigError> {
        let mut c = Config::defaults(schema);
        if let Some(p) = preset {
            c.apply_preset(presets, p)?;
        }
        if let Some(text) = file {
            c.apply_text(text)?;
        }
        for (k, v) in cli {
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn raw(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or_else(|| panic!("key `{name}` is not in the schema"))
    }

    fn parsed<T: FromStr>(&self, name: &str) -> T {
        // Values were type-checked when set, so parsing cannot fail here.
        self.raw(name).parse().unwrap_or_else(|_| panic!("key `{name}` holds an unchecked value"))
    }

    pub fn f64(&self, name: &str) -> f64 {
        self.parsed(name)
    }

    pub fn usize(&self, name: &str) -> usize {
        self.parsed(name)
    }

    pub fn u64(&self, name: &str) -> u64 {
        self.parsed(name)
    }

    pub fn bool(&self, name: &str) -> bool {
        self.raw(name) == "true"
    }

    pub fn f64_list(&self, name: &str) -> Vec<f64> {
        self.raw(name).split(',').map(|v| v.trim().parse().expect("checked list")).collect()
    }

    pub fn usize_list(&self, name: &str) -> Vec<usize> {
        self.raw(name).split(',').map(|v| v.trim().parse().expect("checked list")).collect()
    }

    /// Sorted `key=value` lines; also the on-disk format, so a snapshot can be fed back in
    /// with `--config`.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn schema(&self) -> &'static [Key] {
        self.schema
    }
}
