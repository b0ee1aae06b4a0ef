//! The `parameters.json` configuration file.
//!
//! A single JSON object keyed by parameter name. Each entry carries a
//! string-encoded `value`, its `type`, an optional list of
//! `recommended_values` and a `helpTip`. Fields this crate does not know
//! about are carried through load and save untouched.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("parameters file not found: {0}")]
    MissingFile(PathBuf),
    #[error("I/O error reading parameters: {0}")]
    Io(#[from] std::io::Error),
    #[error("parameters file is not a JSON object of entries: {0}")]
    MalformedJson(String),
    #[error("parameter '{0}' is malformed or its value does not parse as its type")]
    MalformedEntry(String),
    #[error("parameter '{0}' is not defined")]
    Missing(String),
    #[error("parameter '{name}' has type {actual}, expected {expected}")]
    WrongType {
        name: String,
        expected: ParamType,
        actual: ParamType,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Str,
    Float,
    Int,
    Bool,
    #[serde(rename = "directorypath")]
    DirectoryPath,
    #[serde(rename = "filepath")]
    FilePath,
}

impl ParamType {
    fn parse_name(s: &str) -> Option<ParamType> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }

    /// Whether `value` is a valid encoding for this type.
    pub fn accepts(self, value: &str) -> bool {
        match self {
            ParamType::Str | ParamType::DirectoryPath | ParamType::FilePath => true,
            ParamType::Float => value.trim().parse::<f64>().is_ok_and(f64::is_finite),
            ParamType::Int => value.trim().parse::<i64>().is_ok(),
            ParamType::Bool => parse_bool(value).is_some(),
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParamType::Str => "str",
            ParamType::Float => "float",
            ParamType::Int => "int",
            ParamType::Bool => "bool",
            ParamType::DirectoryPath => "directorypath",
            ParamType::FilePath => "filepath",
        };
        f.write_str(s)
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub value: String,
    #[serde(rename = "type")]
    pub kind: ParamType,
    #[serde(default)]
    pub recommended_values: Vec<String>,
    #[serde(rename = "helpTip", default)]
    pub help_tip: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ParamEntry {
    pub fn new(value: impl Into<String>, kind: ParamType, help_tip: impl Into<String>) -> Self {
        ParamEntry {
            value: value.into(),
            kind,
            recommended_values: Vec::new(),
            help_tip: help_tip.into(),
            extra: Map::new(),
        }
    }

    pub fn with_recommended(mut self, values: &[&str]) -> Self {
        self.recommended_values = values.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Missing(String),
    NotRecommended { name: String, value: String },
    BadValue { name: String, value: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing(name) => write!(f, "required parameter '{name}' is missing"),
            Violation::NotRecommended { name, value } => {
                write!(f, "'{name}' = '{value}' is not one of the recommended values")
            }
            Violation::BadValue { name, value } => {
                write!(f, "'{name}' = '{value}' does not parse as its declared type")
            }
        }
    }
}

/// Ordered collection of parameter entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Parameters {
    entries: IndexMap<String, ParamEntry>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, ParamError> {
        if !path.is_file() {
            return Err(ParamError::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ParamError> {
        let raw: IndexMap<String, Value> =
            serde_json::from_str(text).map_err(|e| ParamError::MalformedJson(e.to_string()))?;
        let mut entries = IndexMap::with_capacity(raw.len());
        for (name, value) in raw {
            let entry = parse_entry(&value).ok_or_else(|| ParamError::MalformedEntry(name.clone()))?;
            entries.insert(name, entry);
        }
        Ok(Parameters { entries })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("parameter entries always serialize")
    }

    pub fn save(&self, path: &Path) -> Result<(), ParamError> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, entry: ParamEntry) {
        self.entries.insert(name.into(), entry);
    }

    /// Replaces the value of an existing entry, keeping its type.
    pub fn set(&mut self, name: &str, value: impl Into<String>) -> Result<(), ParamError> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| ParamError::Missing(name.to_string()))?;
        let value = value.into();
        if !entry.kind.accepts(&value) {
            return Err(ParamError::MalformedEntry(name.to_string()));
        }
        entry.value = value;
        Ok(())
    }

    /// Overlays every entry of `other` onto this set.
    pub fn merge(&mut self, other: &Parameters) {
        for (name, entry) in &other.entries {
            self.entries.insert(name.clone(), entry.clone());
        }
    }

    fn typed(&self, name: &str, expected: &[ParamType]) -> Result<&ParamEntry, ParamError> {
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| ParamError::Missing(name.to_string()))?;
        if !expected.contains(&entry.kind) {
            return Err(ParamError::WrongType {
                name: name.to_string(),
                expected: expected[0],
                actual: entry.kind,
            });
        }
        Ok(entry)
    }

    pub fn float(&self, name: &str) -> Result<f64, ParamError> {
        // Integers are acceptable wherever a real is expected.
        let entry = self.typed(name, &[ParamType::Float, ParamType::Int])?;
        entry
            .value
            .trim()
            .parse()
            .map_err(|_| ParamError::MalformedEntry(name.to_string()))
    }

    pub fn int(&self, name: &str) -> Result<i64, ParamError> {
        let entry = self.typed(name, &[ParamType::Int])?;
        entry
            .value
            .trim()
            .parse()
            .map_err(|_| ParamError::MalformedEntry(name.to_string()))
    }

    pub fn bool(&self, name: &str) -> Result<bool, ParamError> {
        let entry = self.typed(name, &[ParamType::Bool])?;
        parse_bool(&entry.value).ok_or_else(|| ParamError::MalformedEntry(name.to_string()))
    }

    pub fn string(&self, name: &str) -> Result<&str, ParamError> {
        let entry = self.typed(
            name,
            &[ParamType::Str, ParamType::DirectoryPath, ParamType::FilePath],
        )?;
        Ok(&entry.value)
    }

    /// Returns every problem with the set: missing required names, values
    /// outside their recommended list, and values that no longer parse.
    pub fn validate(&self, required: &[&str]) -> Vec<Violation> {
        let mut out: Vec<Violation> = required
            .iter()
            .filter(|name| !self.entries.contains_key(**name))
            .map(|name| Violation::Missing(name.to_string()))
            .collect();
        for (name, entry) in &self.entries {
            if !entry.kind.accepts(&entry.value) {
                out.push(Violation::BadValue {
                    name: name.clone(),
                    value: entry.value.clone(),
                });
            } else if !entry.recommended_values.is_empty()
                && !entry.recommended_values.contains(&entry.value)
            {
                out.push(Violation::NotRecommended {
                    name: name.clone(),
                    value: entry.value.clone(),
                });
            }
        }
        out
    }
}

fn parse_entry(value: &Value) -> Option<ParamEntry> {
    let obj = value.as_object()?;
    let kind = ParamType::parse_name(obj.get("type")?.as_str()?)?;
    let value = obj.get("value")?.as_str()?.to_string();
    if !kind.accepts(&value) {
        return None;
    }
    let recommended_values = match obj.get("recommended_values") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()?,
        Some(_) => return None,
    };
    let help_tip = match obj.get("helpTip") {
        None => String::new(),
        Some(v) => v.as_str()?.to_string(),
    };
    let extra = obj
        .iter()
        .filter(|(k, _)| !matches!(k.as_str(), "value" | "type" | "recommended_values" | "helpTip"))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Some(ParamEntry {
        value,
        kind,
        recommended_values,
        help_tip,
        extra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_values() {
        let p = Parameters::from_json(
            r#"{"trial_length": {"value": "0.5", "type": "float"},
                "downsample_rate": {"value": "2", "type": "int"},
                "lm_enabled": {"value": "true", "type": "bool", "helpTip": "use the LM"}}"#,
        )
        .unwrap();
        assert_eq!(p.float("trial_length").unwrap(), 0.5);
        assert_eq!(p.int("downsample_rate").unwrap(), 2);
        assert!(p.bool("lm_enabled").unwrap());
        assert_eq!(p.get("lm_enabled").unwrap().help_tip, "use the LM");
    }

    #[test]
    fn bad_bool_names_the_entry() {
        let err = Parameters::from_json(
            r#"{"ok": {"value": "1", "type": "int"}, "flag": {"value": "abc", "type": "bool"}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ParamError::MalformedEntry(ref n) if n == "flag"));
    }

    #[test]
    fn unknown_type_is_malformed() {
        let err = Parameters::from_json(r#"{"x": {"value": "1", "type": "complex"}}"#).unwrap_err();
        assert!(matches!(err, ParamError::MalformedEntry(ref n) if n == "x"));
    }

    #[test]
    fn missing_file() {
        let err = Parameters::load(Path::new("/definitely/not/here.json")).unwrap_err();
        assert!(matches!(err, ParamError::MissingFile(_)));
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let text = r#"{"fake": {"value": "a", "type": "str", "section": "bci_config", "readableName": "Fake"}}"#;
        let p = Parameters::from_json(text).unwrap();
        let again = Parameters::from_json(&p.to_json()).unwrap();
        assert_eq!(p, again);
        assert_eq!(again.get("fake").unwrap().extra["section"], "bci_config");
    }

    #[test]
    fn validation() {
        let mut p = Parameters::new();
        p.insert("sample_rate", ParamEntry::new("300", ParamType::Float, ""));
        p.insert(
            "flag",
            ParamEntry::new("true", ParamType::Str, "").with_recommended(&["true", "false"]),
        );
        assert!(p.validate(&["sample_rate", "flag"]).is_empty());
        assert_eq!(
            p.validate(&["sample_rate", "flag", "stim_count"]),
            vec![Violation::Missing("stim_count".into())]
        );
        p.set("flag", "maybe").unwrap();
        assert_eq!(
            p.validate(&[]),
            vec![Violation::NotRecommended {
                name: "flag".into(),
                value: "maybe".into()
            }]
        );
    }

    #[test]
    fn set_checks_type() {
        let mut p = Parameters::new();
        p.insert("n", ParamEntry::new("3", ParamType::Int, ""));
        assert!(p.set("n", "3.5").is_err());
        assert!(p.set("missing", "1").is_err());
        p.set("n", "4").unwrap();
        assert_eq!(p.int("n").unwrap(), 4);
        assert!(matches!(p.bool("n"), Err(ParamError::WrongType { .. })));
    }
}
