//! Settings files: a JSON object keyed by subcommand name whose sections
//! hold flag values. Explicit flags win over the file, which wins over the
//! built-in defaults.

use std::path::Path;

use anyhow::Context;
use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::exit::usage;

#[derive(Debug, Default)]
pub struct Settings {
    sections: Map<String, Value>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading settings {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("settings {}: {e}", path.display())))?;
        match v {
            Value::Object(sections) => Ok(Settings { sections }),
            _ => Err(usage(format!("settings {}: expected a JSON object", path.display()))),
        }
    }

    pub fn section(&self, subcommand: &str) -> Option<&Map<String, Value>> {
        self.sections.get(subcommand).and_then(Value::as_object)
    }
}

/// Overlays `section` onto `args` for every key not given on the command
/// line or through the environment.
pub fn merge<T>(args: T, matches: &ArgMatches, section: Option<&Map<String, Value>>) -> anyhow::Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let Some(section) = section else {
        return Ok(args);
    };
    let mut v = serde_json::to_value(&args)?;
    let obj = v.as_object_mut().expect("argument structs serialize to objects");
    for (key, value) in section {
        let id = key.replace('-', "_");
        if !obj.contains_key(&id) {
            return Err(usage(format!("unknown setting {key:?}")));
        }
        let explicit = matches!(
            matches.value_source(&id),
            Some(ValueSource::CommandLine | ValueSource::EnvVariable)
        );
        if !explicit {
            obj.insert(id, value.clone());
        }
    }
    serde_json::from_value(v).map_err(|e| usage(format!("settings: {e}")))
}
