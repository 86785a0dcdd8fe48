//! Flat `key = value` configuration files, with CLI overrides layered
//! on top by the binary.

use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub node_id: u32,
    /// Logical hosts this process runs (all-in-one topology).
    pub hosts: u32,
    pub port: u16,
    pub data_dir: PathBuf,
    pub slow_query_threshold_ms: u64,
    pub kv_separation: bool,
    pub seed: u64,
    /// Wall-clock milliseconds per cluster tick.
    pub tick_ms: u64,
}

impl Default for ServerConfig {
    fn default() -> ServerConfig {
        ServerConfig {
            node_id: 1,
            hosts: 1,
            port: 9669,
            data_dir: PathBuf::from("data"),
            slow_query_threshold_ms: 50,
            kv_separation: false,
            seed: 42,
            tick_ms: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: expected 'key = value'")]
    BadLine(usize),
    #[error("bad value for '{key}': {value}")]
    BadValue { key: String, value: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
}

impl ServerConfig {
    pub fn from_file(path: &Path) -> Result<ServerConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ServerConfig, ConfigError> {
        let mut config = ServerConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or(ConfigError::BadLine(i + 1))?;
            let key = key.trim();
            let value = value.trim().trim_matches('"');
            let bad = || ConfigError::BadValue { key: key.into(), value: value.into() };
            match key {
                "node_id" => config.node_id = value.parse().map_err(|_| bad())?,
                "hosts" => config.hosts = value.parse().map_err(|_| bad())?,
                "port" => config.port = value.parse().map_err(|_| bad())?,
                "data_dir" => config.data_dir = PathBuf::from(value),
                "slow_query_threshold_ms" => {
                    config.slow_query_threshold_ms = value.parse().map_err(|_| bad())?
                }
                "kv_separation" => config.kv_separation = value.parse().map_err(|_| bad())?,
                "seed" => config.seed = value.parse().map_err(|_| bad())?,
                "tick_ms" => config.tick_ms = value.parse().map_err(|_| bad())?,
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_value_lines() {
        let text = "# cluster\nhosts = 3\nport = 7700\nkv_separation = true\n";
        let c = ServerConfig::parse(text).unwrap();
        assert_eq!((c.hosts, c.port, c.kv_separation), (3, 7700, true));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            ServerConfig::parse("nope = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            ServerConfig::parse("port = banana"),
            Err(ConfigError::BadValue { .. })
        ));
    }
}
