//! Config-file overlay: every subcommand reads its section of the JSON
//! config, then command-line flags replace individual keys.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    qdeval::Error::Config(msg.into()).into()
}

#[derive(Debug, Default)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(root)) => Ok(Self { root }),
            Ok(_) => Err(config_error(format!("{}: config must be a JSON object", path.display()))),
            Err(e) => Err(config_error(format!("{}: {e}", path.display()))),
        }
    }

    pub fn global<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.root.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| config_error(format!("config key {key:?}: {e}"))),
        }
    }

    /// Merges `cli` over the `section` object; flags left unset keep the
    /// file's value.
    pub fn resolve<T: Serialize + DeserializeOwned>(&self, section: &str, cli: &T) -> Result<T> {
        let mut base = match self.root.get(section) {
            None => Map::new(),
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Err(config_error(format!("config section {section:?} must be an object"))),
        };
        if let Value::Object(flags) = serde_json::to_value(cli)? {
            for (k, v) in flags {
                if !v.is_null() {
                    base.insert(k, v);
                }
            }
        }
        serde_json::from_value(Value::Object(base)).map_err(|e| config_error(format!("config section {section:?}: {e}")))
    }
}

pub fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| config_error(format!("missing required option --{flag}")))
}
