use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;

use fishlen::Error;

/// Flat `key = value` defaults read from a TOML file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, toml::Value>,
}

const KEYS: &[&str] = &[
    "threads",
    "force",
    "groups",
    "regime",
    "conf-threshold",
    "clip-cm",
    "bin-cm",
    "step-px",
    "samples",
    "trials",
    "seed",
    "fish-per-group",
    "images-per-set",
    "no-occlusion",
];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let values: BTreeMap<String, toml::Value> =
            toml::from_str(text).map_err(|e| Error::Input(format!("invalid config: {e}")))?;
        for (k, v) in &values {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Input(format!("unknown config key {k:?}")));
            }
            if matches!(v, toml::Value::Table(_)) {
                return Err(Error::Input(format!("config key {k:?} must hold a plain value")));
            }
        }
        Ok(Self { values })
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| Error::Input(format!("config key {key:?}: {e}"))),
        }
    }

    /// The flag value when given, otherwise the config value.
    pub fn or<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Error> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let c = ConfigFile::parse("seed = 7\nregime = \"touching\"\nclip-cm = 4.0\n").unwrap();
        assert_eq!(c.or(None::<u64>, "seed").unwrap(), Some(7));
        assert_eq!(c.or(Some(9u64), "seed").unwrap(), Some(9));
        assert_eq!(c.get::<String>("regime").unwrap().as_deref(), Some("touching"));
        assert_eq!(c.get::<f64>("clip-cm").unwrap(), Some(4.0));
        assert!(c.get::<u64>("regime").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::parse("colour = 1").is_err());
    }
}
