//! `key = value` text files with `#` comments, used by pipeline configs and
//! `scenario.cfg`.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_entries(text: &str, source_name: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                source_name: source_name.to_string(),
                line: i + 1,
                content: raw.to_string(),
            });
        };
        let key = k.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                source_name: source_name.to_string(),
                line: i + 1,
                content: raw.to_string(),
            });
        }
        out.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

impl Entry {
    pub fn bad(&self, source_name: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            source_name: source_name.to_string(),
            line: self.line,
            key: self.key.clone(),
            reason: reason.into(),
        }
    }

    pub fn unknown(&self, source_name: &str) -> ConfigError {
        ConfigError::UnknownKey {
            source_name: source_name.to_string(),
            line: self.line,
            key: self.key.clone(),
        }
    }

    pub fn parse<T: FromStr>(&self, source_name: &str) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        self.value
            .parse()
            .map_err(|e: T::Err| self.bad(source_name, e.to_string()))
    }

    pub fn parse_vec3(&self, source_name: &str) -> Result<[f64; 3], ConfigError> {
        crate::io_util::parse_floats::<3>(&self.value)
            .ok_or_else(|| self.bad(source_name, "expected three numbers"))
    }

    pub fn parse_bool(&self, source_name: &str) -> Result<bool, ConfigError> {
        match self.value.as_str() {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(self.bad(source_name, "expected true or false")),
        }
    }
}

/// Appends `key = value` to `out`.
pub fn push(out: &mut String, key: &str, value: impl Display) {
    out.push_str(key);
    out.push_str(" = ");
    out.push_str(&value.to_string());
    out.push('\n');
}
