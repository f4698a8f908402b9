//! `key = value` configuration files and the rules for merging them with
//! command-line flags. A flag given on the command line always wins over the
//! file, and the file wins over built-in defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::Failure;

/// Keys accepted in a configuration file; each matches a long flag name.
pub const KEYS: &[&str] = &[
    "format",
    "blur-sigma",
    "scales",
    "scale-selection",
    "percentile",
    "min-region-px",
    "nested-pass",
    "centroid",
    "r0",
    "annulus",
    "nn-radius",
    "accept-counts",
    "cross-vote",
    "bin-width",
    "region",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    path: Option<PathBuf>,
    /// key -> (line number, raw value)
    entries: BTreeMap<String, (usize, String)>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, Some(path))
    }

    pub fn parse(text: &str, path: Option<&Path>) -> Result<Self, Failure> {
        let name = path.map_or_else(|| "<config>".to_string(), |p| p.display().to_string());
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Failure::usage(format!("{name}:{}: expected `key = value`", n + 1)));
            };
            let key = key.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Failure::usage(format!("{name}:{}: unknown key `{key}`", n + 1)));
            }
            if entries.insert(key.clone(), (n + 1, value.trim().to_string())).is_some() {
                return Err(Failure::usage(format!("{name}:{}: duplicate key `{key}`", n + 1)));
            }
        }
        Ok(Self { path: path.map(Path::to_path_buf), entries })
    }

    pub fn from_flag(path: Option<&Path>) -> Result<Self, Failure> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Flag value if present, else the parsed file entry, else `None`.
    pub fn pick<T: Clone>(&self, flag: Option<&T>, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, Failure> {
        if let Some(v) = flag {
            return Ok(Some(v.clone()));
        }
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, raw)) => parse(raw).map(Some).map_err(|e| {
                let name = self.path.as_ref().map_or_else(|| "<config>".into(), |p| p.display().to_string());
                Failure::usage(format!("{name}:{line}: {key}: {e}"))
            }),
        }
    }

    /// Like [`Config::pick`] for on/off switches: a flag that is set wins,
    /// an unset flag defers to the file.
    pub fn switch(&self, flag: Option<bool>, key: &str) -> Result<Option<bool>, Failure> {
        self.pick(flag.as_ref(), key, parse_bool)
    }
}

pub fn parse_value<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: Display,
{
    s.trim().parse::<T>().map_err(|e| format!("invalid value `{s}`: {e}"))
}

pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: Display,
{
    s.split(',').map(parse_value).collect()
}

pub fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    match parse_list::<f64>(s)?[..] {
        [a, b] => Ok((a, b)),
        _ => Err(format!("expected two comma-separated numbers, got `{s}`")),
    }
}

pub fn parse_set(s: &str) -> Result<BTreeSet<usize>, String> {
    Ok(parse_list(s)?.into_iter().collect())
}

pub fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        other => Err(format!("expected true or false, got `{other}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_comments() {
        let c = Config::parse("# detection\npercentile = 0.7\n\nscales=2,4 # two only\n", None).unwrap();
        assert_eq!(c.pick(None, "percentile", parse_value::<f64>).unwrap(), Some(0.7));
        assert_eq!(c.pick(None, "scales", parse_list::<f64>).unwrap(), Some(vec![2.0, 4.0]));
        assert_eq!(c.pick(None, "r0", parse_value::<f64>).unwrap(), None);
    }

    #[test]
    fn flag_beats_file() {
        let c = Config::parse("r0 = 10\ncross-vote = off\n", None).unwrap();
        assert_eq!(c.pick(Some(&12.0), "r0", parse_value::<f64>).unwrap(), Some(12.0));
        assert_eq!(c.switch(None, "cross-vote").unwrap(), Some(false));
        assert_eq!(c.switch(Some(true), "cross-vote").unwrap(), Some(true));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Config::parse("percentile 0.6", None).is_err());
        assert!(Config::parse("colour = red", None).is_err());
        assert!(Config::parse("r0 = 1\nr0 = 2", None).is_err());
        let c = Config::parse("r0 = fast", None).unwrap();
        let err = c.pick(None, "r0", parse_value::<f64>).unwrap_err();
        assert!(err.to_string().contains(":1: r0"));
    }

    #[test]
    fn value_helpers() {
        assert_eq!(parse_pair("20,30").unwrap(), (20.0, 30.0));
        assert!(parse_pair("20").is_err());
        assert_eq!(parse_set("4,2,3,2").unwrap(), BTreeSet::from([2, 3, 4]));
        assert!(parse_bool("maybe").is_err());
    }
}
