//! Resolves each option from flag, then config file, then default, and
//! records the effective value for the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use tasa_core::sim::KvConfig;
use tasa_core::{Error, Result};

pub struct Settings {
    file: KvConfig,
    used: BTreeSet<String>,
    pub effective: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::new(),
        };
        Ok(Settings { file, used: BTreeSet::new(), effective: BTreeMap::new() })
    }

    fn from_file<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        match self.file.get_str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::config(format!("config key `{key}`: cannot parse `{v}`: {e}"))),
        }
    }

    /// Flag, else config file, else `None`.
    pub fn opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let from_file = self.from_file(key)?;
        let v = flag.or(from_file);
        if let Some(v) = &v {
            self.effective.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn require<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| Error::usage(format!("missing required option --{}", key.replace('_', "-"))))
    }

    /// Boolean switch: set by the flag or by `key = true` in the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool> {
        self.get(key, flag.then_some(true), false)
    }

    pub fn record(&mut self, key: &str, value: impl Display) {
        self.effective.insert(key.to_string(), value.to_string());
    }

    /// Rejects config keys no option asked for.
    pub fn finish(&self) -> Result<()> {
        let unknown: Vec<&str> = self.file.iter().map(|(k, _)| k).filter(|k| !self.used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let mut s = Settings { file: KvConfig::parse("seed = 7\nbudget = 100").unwrap(), ..Settings::load(None).unwrap() };
        assert_eq!(s.get("seed", Some(3u64), 0).unwrap(), 3);
        assert_eq!(s.get("budget", None::<usize>, 5).unwrap(), 100);
        assert_eq!(s.get("k", None::<usize>, 5).unwrap(), 5);
        assert_eq!(s.effective["seed"], "3");
        assert_eq!(s.effective["budget"], "100");
        assert!(s.finish().is_ok());
    }

    #[test]
    fn unknown_and_malformed_keys() {
        let mut s = Settings { file: KvConfig::parse("sede = 7\nk = x").unwrap(), ..Settings::load(None).unwrap() };
        assert!(s.get("k", None::<usize>, 5).unwrap_err().is_usage());
        assert!(s.finish().unwrap_err().to_string().contains("sede"));
        assert!(s.require::<u64>("seed", None).unwrap_err().is_usage());
    }
}
