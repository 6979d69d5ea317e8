//! `key = value` configuration file and its merge with command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::ValueEnum;
use soapforge_core::pipeline::FlowConfig;
use soapforge_core::{Direction, EngineConfig, MockServer};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportKind {
    Http,
    Loopback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Csv,
    JsonLines,
}

/// Settings after merging defaults, the config file, the environment and
/// flags, in increasing order of precedence.
#[derive(Debug, Clone)]
pub struct Settings {
    pub endpoint: Option<String>,
    pub wsdl: Option<PathBuf>,
    pub transport: TransportKind,
    pub timeout_ms: u64,
    pub output: OutputFormat,
    pub addressing: bool,
    pub out_phases: Option<Vec<String>>,
    pub in_phases: Option<Vec<String>>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            endpoint: None,
            wsdl: None,
            transport: TransportKind::Http,
            timeout_ms: 10_000,
            output: OutputFormat::Csv,
            addressing: true,
            out_phases: None,
            in_phases: None,
        }
    }
}

fn phases(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, CliError> {
    match raw {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!(
            "config key {key}: expected a boolean, got {raw:?}"
        ))),
    }
}

impl Settings {
    /// Applies a config file. Blank lines and `#` comments are ignored;
    /// values may be wrapped in double quotes.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.display().to_string(),
            source,
        })?;
        self.apply_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected key = value",
                    n + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            match key {
                "endpoint" => self.endpoint = Some(value.to_string()),
                "wsdl" => self.wsdl = Some(PathBuf::from(value)),
                "transport" => {
                    self.transport = TransportKind::from_str(value, true).map_err(|_| {
                        CliError::Usage(format!("config key transport: unknown value {value:?}"))
                    })?
                }
                "timeout_ms" => {
                    self.timeout_ms = value.parse().map_err(|_| {
                        CliError::Usage(format!("config key timeout_ms: not a number: {value:?}"))
                    })?
                }
                "output" => {
                    self.output = OutputFormat::from_str(value, true).map_err(|_| {
                        CliError::Usage(format!("config key output: unknown value {value:?}"))
                    })?
                }
                "addressing" => self.addressing = parse_bool(key, value)?,
                "out_phases" => self.out_phases = Some(phases(value)),
                "in_phases" => self.in_phases = Some(phases(value)),
                other => return Err(CliError::Usage(format!("unknown config key {other:?}"))),
            }
        }
        Ok(())
    }

    /// Builds the engine configuration. Loopback runs against an in-process
    /// mock host carrying the built-in services.
    pub fn engine_config(&self) -> Result<EngineConfig, CliError> {
        if self.timeout_ms == 0 {
            return Err(CliError::Usage("timeout must be greater than zero".into()));
        }
        let mut config = match self.transport {
            TransportKind::Http => EngineConfig::default(),
            TransportKind::Loopback => {
                EngineConfig::loopback(Arc::new(MockServer::with_builtin_services()))
            }
        };
        config.timeout = Duration::from_millis(self.timeout_ms);
        config.addressing = self.addressing;
        let flow = |direction, names: &Vec<String>| {
            FlowConfig::new(direction, names.iter().cloned())
                .map_err(|e| CliError::Usage(e.to_string()))
        };
        if let Some(names) = &self.out_phases {
            config.out_flow = flow(Direction::Out, names)?;
        }
        if let Some(names) = &self.in_phases {
            config.in_flow = flow(Direction::In, names)?;
        }
        Ok(config)
    }
}
