//! Merge command-line flags with an optional key=value config file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Comma-separated layer widths, bottom first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Widths(pub Vec<usize>);

impl FromStr for Widths {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad layer width '{p}'")))
            .collect::<Result<Vec<_>, _>>()?;
        if v.is_empty() || v.contains(&0) {
            return Err("layer widths must be positive".into());
        }
        Ok(Widths(v))
    }
}

impl Display for Widths {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|k| k.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Flag value, else config-file value, else default. Every value that ends
/// up set is recorded for echoing into the output directory.
pub struct Resolver {
    file: BTreeMap<String, String>,
    pub resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self, CliError> {
        let file = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                dpgds::config::parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            resolved: BTreeMap::new(),
        })
    }

    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(
                    raw.parse::<T>()
                        .map_err(|e| CliError::Config(format!("config key '{key}': {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| CliError::Config(format!("missing required setting '{key}'")))
    }

    /// Keys in the config file that no setting consumed.
    pub fn check_unused(&self) -> Result<(), CliError> {
        for k in self.file.keys() {
            if !self.resolved.contains_key(k) && k != "out" {
                return Err(CliError::Config(format!("unknown config key '{k}'")));
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut map = self.resolved.clone();
        map.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        std::fs::write(dir.join("config.resolved"), dpgds::config::render_config(&map))
            .map_err(|e| CliError::Data(format!("cannot write resolved config: {e}")))
    }
}
