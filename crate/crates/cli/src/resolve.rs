//! Merging command-line flags with a `key = value` config file. Flags win.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pidd_core::{Error, Result};
use pidd_train::parse_kv;

pub struct Resolver {
    kv: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self> {
        let kv = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_kv(&text)?.into_iter().collect()
            }
            None => BTreeMap::new(),
        };
        Ok(Self {
            kv,
            resolved: Vec::new(),
        })
    }

    /// The flag value if given, else the config value, else `None`.
    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let from_file = self.kv.remove(key);
        let v = match (flag, from_file) {
            (Some(v), _) => Some(v),
            (None, Some(s)) => Some(
                s.parse()
                    .map_err(|_| Error::invalid(format!("config key {key}: cannot parse '{s}'")))?,
            ),
            (None, None) => None,
        };
        if let Some(v) = &v {
            self.resolved.push((key.to_string(), v.to_string()));
        }
        Ok(v)
    }

    pub fn or<T: FromStr + Display + Clone>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        match self.get(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.push((key.to_string(), default.to_string()));
                Ok(default)
            }
        }
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        Ok(self.get::<String>(key, flag.map(|p| p.to_string_lossy().into_owned()))?.map(PathBuf::from))
    }

    pub fn require_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.path(key, flag)?
            .ok_or_else(|| Error::invalid(format!("missing required setting --{}", key.replace('_', "-"))))
    }

    pub fn flag(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = self.get(key, flag.then_some(true))?.unwrap_or(false);
        Ok(v)
    }

    /// Config keys nobody asked for.
    pub fn leftover(&mut self) -> Vec<(String, String)> {
        std::mem::take(&mut self.kv).into_iter().collect()
    }

    pub fn reject_leftover(&mut self) -> Result<()> {
        match self.kv.keys().next() {
            Some(k) => Err(Error::invalid(format!("unknown config key '{k}'"))),
            None => Ok(()),
        }
    }

    pub fn resolved_text(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
