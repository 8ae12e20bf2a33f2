//! Pipeline configuration in a `key = value` text format. Lines starting
//! with `#` are comments; unknown keys are errors.
//!
//! ```text
//! cwe = CWE-79
//! seed = 7
//! normalize.enabled = true
//! dedup.threshold = 0.9
//! split.ratios = 0.8,0.1,0.1
//! endpoint.url = http://127.0.0.1:8000
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::classify::EndpointConfig;
use crate::dataset::Ratios;
use crate::dedup::DedupConfig;
use crate::normalize::NormalizeConfig;
use crate::sinks::SinkKind;
use crate::synth::SynthConfig;

/// Environment variable supplying the default `endpoint.url`.
pub const ENDPOINT_ENV: &str = "PHPVUL_ENDPOINT";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub cwe: SinkKind,
    pub seed: u64,
    pub normalize: NormalizeConfig,
    pub dedup: DedupConfig,
    pub synth: SynthConfig,
    pub ratios: Ratios,
    pub rules: Option<PathBuf>,
    pub endpoint: Option<EndpointConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cwe: SinkKind::Cwe79,
            seed: 0,
            normalize: NormalizeConfig::default(),
            dedup: DedupConfig::default(),
            synth: SynthConfig::default(),
            ratios: Ratios::default(),
            rules: None,
            endpoint: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

impl PipelineConfig {
    /// Defaults with `endpoint.url` taken from [`ENDPOINT_ENV`] if set.
    pub fn from_env() -> Self {
        let mut cfg = PipelineConfig::default();
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            if !url.trim().is_empty() {
                cfg.endpoint = Some(EndpointConfig::new(url.trim()));
            }
        }
        cfg
    }

    pub fn load(path: &Path, base: PipelineConfig) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        base.apply_text(&text)
    }

    pub fn apply_text(mut self, text: &str) -> Result<Self, ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ConfigError::Line {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "cwe" => {
                self.cwe = v
                    .parse()
                    .map_err(|e: crate::sinks::UnknownCwe| e.to_string())?
            }
            "seed" => self.seed = parse_num(v)?,
            "rules" => self.rules = Some(PathBuf::from(v)),
            "normalize.enabled" => self.normalize.enabled = parse_bool(v)?,
            "normalize.max_string_len" => self.normalize.max_string_len = parse_num(v)?,
            "normalize.placeholder" => self.normalize.placeholder = v.to_string(),
            "normalize.html_markers" => {
                self.normalize.html_markers = v
                    .split(',')
                    .map(str::trim)
                    .filter(|m| !m.is_empty())
                    .map(String::from)
                    .collect()
            }
            "dedup.threshold" => self.dedup.threshold = parse_num(v)?,
            "synth.rounds" => self.synth.rounds = parse_num(v)?,
            "synth.max_path_blocks" => self.synth.max_path_blocks = parse_num(v)?,
            "synth.select_simple" => self.synth.select_simple = parse_bool(v)?,
            "split.ratios" => {
                self.ratios = v
                    .parse()
                    .map_err(|e: crate::dataset::DatasetError| e.to_string())?
            }
            "endpoint.url" => self.endpoint_mut(v).base_url = v.to_string(),
            k if k.starts_with("endpoint.") => {
                let ep = self
                    .endpoint
                    .as_mut()
                    .ok_or_else(|| format!("`{k}` needs `endpoint.url` first"))?;
                match k {
                    "endpoint.timeout_secs" => ep.timeout = Duration::from_secs_f64(parse_num(v)?),
                    "endpoint.batch_size" => ep.batch_size = parse_num(v)?,
                    "endpoint.retries" => ep.retries = parse_num(v)?,
                    "endpoint.max_in_flight" => ep.max_in_flight = parse_num(v)?,
                    "endpoint.backoff_ms" => ep.backoff = Duration::from_millis(parse_num(v)?),
                    _ => return Err(format!("unknown key `{k}`")),
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn endpoint_mut(&mut self, url: &str) -> &mut EndpointConfig {
        self.endpoint
            .get_or_insert_with(|| EndpointConfig::new(url))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks = [
            self.normalize.validate(),
            self.dedup.validate(),
            self.synth.validate(),
            self.ratios.validate().map_err(|e| e.to_string()),
            self.endpoint.as_ref().map_or(Ok(()), |e| e.validate()),
        ];
        for c in checks {
            c.map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }
}

/// The resolved configuration, in the same format [`PipelineConfig::apply_text`] reads.
impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cwe = {}", self.cwe)?;
        writeln!(f, "seed = {}", self.seed)?;
        if let Some(r) = &self.rules {
            writeln!(f, "rules = {}", r.display())?;
        }
        writeln!(f, "normalize.enabled = {}", self.normalize.enabled)?;
        writeln!(
            f,
            "normalize.max_string_len = {}",
            self.normalize.max_string_len
        )?;
        writeln!(f, "normalize.placeholder = {}", self.normalize.placeholder)?;
        writeln!(
            f,
            "normalize.html_markers = {}",
            self.normalize.html_markers.join(",")
        )?;
        writeln!(f, "dedup.threshold = {}", self.dedup.threshold)?;
        writeln!(f, "synth.rounds = {}", self.synth.rounds)?;
        writeln!(f, "synth.max_path_blocks = {}", self.synth.max_path_blocks)?;
        writeln!(f, "synth.select_simple = {}", self.synth.select_simple)?;
        writeln!(f, "split.ratios = {}", self.ratios)?;
        if let Some(e) = &self.endpoint {
            writeln!(f, "endpoint.url = {}", e.base_url)?;
            writeln!(f, "endpoint.timeout_secs = {}", e.timeout.as_secs_f64())?;
            writeln!(f, "endpoint.batch_size = {}", e.batch_size)?;
            writeln!(f, "endpoint.retries = {}", e.retries)?;
            writeln!(f, "endpoint.max_in_flight = {}", e.max_in_flight)?;
            writeln!(f, "endpoint.backoff_ms = {}", e.backoff.as_millis())?;
        }
        Ok(())
    }
}
