//! Flat `key = value` run configuration. Command-line flags take precedence
//! over file values; keys outside a command's schema are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;
use crate::formats::read_text;

#[derive(Debug, Default)]
pub struct RunConfig {
    path: Option<PathBuf>,
    /// key → (value, line)
    values: BTreeMap<String, (String, usize)>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, schema: &[&str]) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = read_text(path)?;
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let number = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::parse(path, number, 1, "expected key = value"));
            };
            let key = key.trim();
            let column = raw.find(key).map_or(1, |c| c + 1);
            if !schema.contains(&key) {
                return Err(CliError::parse(
                    path,
                    number,
                    column,
                    format!("unknown key {key:?}; accepted keys: {}", schema.join(", ")),
                ));
            }
            if values.insert(key.to_string(), (value.trim().to_string(), number)).is_some() {
                return Err(CliError::parse(path, number, column, format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { path: Some(path.to_path_buf()), values })
    }

    /// Flag value if given, else the parsed config value.
    pub fn get<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some((value, line)) => value.parse::<T>().map(Some).map_err(|_| {
                let path = self.path.as_deref().unwrap_or(Path::new("config"));
                CliError::parse(path, *line, 1, format!("invalid value {value:?} for {key}"))
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<T, CliError> {
        self.get(key, flag)?
            .ok_or_else(|| CliError::usage(format!("missing required setting {key} (flag --{} or config key {key})", key.replace('_', "-"))))
    }

    /// Boolean setting; `override_flag` is true when a negating flag was given.
    pub fn switch(&self, key: &str, override_flag: bool, flag_value: bool, default: bool) -> Result<bool, CliError> {
        if override_flag {
            return Ok(flag_value);
        }
        Ok(self.get::<bool>(key, None)?.unwrap_or(default))
    }

    /// Comma-separated list of numbers.
    pub fn list(&self, key: &str, flag: Option<&str>) -> Result<Option<Vec<f64>>, CliError> {
        let raw = match flag {
            Some(v) => Some((v.to_string(), None)),
            None => self.values.get(key).map(|(v, l)| (v.clone(), Some(*l))),
        };
        let Some((raw, line)) = raw else {
            return Ok(None);
        };
        raw.split(',')
            .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<_>>>()
            .map(Some)
            .ok_or_else(|| match (line, &self.path) {
                (Some(l), Some(p)) => CliError::parse(p, l, 1, format!("invalid list {raw:?} for {key}")),
                _ => CliError::usage(format!("invalid list {raw:?} for --{}", key.replace('_', "-"))),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn flags_override_file() {
        let f = write("sigma = 4\n# comment\nzpl = 1350\n");
        let c = RunConfig::load(Some(f.path()), &["sigma", "zpl"]).unwrap();
        assert_eq!(c.get::<f64>("sigma", None).unwrap(), Some(4.0));
        assert_eq!(c.get::<f64>("sigma", Some(6.0)).unwrap(), Some(6.0));
        assert_eq!(c.require::<f64>("zpl", None).unwrap(), 1350.0);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let f = write("sigma = 4\nsigmaa = 5\n");
        let e = RunConfig::load(Some(f.path()), &["sigma"]).unwrap_err();
        assert_eq!(e.code, 2);
        assert!(e.message.contains(":2:1:"), "{}", e.message);
    }

    #[test]
    fn lists_and_switches() {
        let f = write("cutoffs = 50, 80\nasr = false\n");
        let c = RunConfig::load(Some(f.path()), &["cutoffs", "asr"]).unwrap();
        assert_eq!(c.list("cutoffs", None).unwrap(), Some(vec![50.0, 80.0]));
        assert!(!c.switch("asr", false, false, true).unwrap());
        assert!(c.switch("asr", true, true, true).unwrap());
    }
}
