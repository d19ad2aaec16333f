//! Resolution of settings from flags, config files and defaults, recording
//! where each value came from.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Flag,
    Config,
    Default,
}

#[derive(Debug, Clone, Serialize)]
pub struct Setting {
    pub value: Value,
    pub source: Source,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub settings: BTreeMap<String, Setting>,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        Provenance {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            settings: BTreeMap::new(),
        }
    }

    /// Flag > config file > default.
    pub fn resolve<T: Serialize>(&mut self, name: &str, flag: Option<T>, config: Option<T>, default: T) -> T {
        let (value, source) = match (flag, config) {
            (Some(v), _) => (v, Source::Flag),
            (None, Some(v)) => (v, Source::Config),
            (None, None) => (default, Source::Default),
        };
        self.record(name, &value, source);
        value
    }

    /// As [`Provenance::resolve`] for settings without a default.
    pub fn resolve_opt<T: Serialize>(&mut self, name: &str, flag: Option<T>, config: Option<T>) -> Option<T> {
        let (value, source) = match (flag, config) {
            (Some(v), _) => (Some(v), Source::Flag),
            (None, Some(v)) => (Some(v), Source::Config),
            (None, None) => (None, Source::Default),
        };
        self.record(name, &value, source);
        value
    }

    pub fn record<T: Serialize>(&mut self, name: &str, value: &T, source: Source) {
        self.settings.insert(
            name.into(),
            Setting {
                value: serde_json::to_value(value).expect("setting serializes"),
                source,
            },
        );
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("provenance serializes")
    }
}
