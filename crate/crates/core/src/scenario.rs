//! Scenario configuration.
//!
//! A scenario file is flat TOML: one `key = value` per line, no tables.
//! Every key is optional; missing keys take the default scenario values
//! (the standard 802.11g parameter set, deterministic sweep over 1..=5
//! relay transmissions). Unknown keys are rejected.
//!
//! ```toml
//! # system parameters
//! mac_header_bytes = 34
//! phy_header_us = 96.0
//! data_payload_bytes = 1500
//! ctrl_packet_bytes = 14
//! sifs_us = 10.0
//! difs_us = 50.0
//! source_control_rate_bps = 6000000.0
//! source_data_rate_bps = 6000000.0
//! relay_control_rate_bps = 6000000.0
//! relay_data_rate_bps = 54000000.0
//! t_onc_us = 0.0
//! per_sd = 0.0
//! per_rd = 0.0
//! per_rs = 0.0
//!
//! # run selection
//! variant = "both"          # "ncc-arq" | "c-arq" | "both"
//! mode = "both"             # "analytic" | "sim" | "both"
//! retx_list = [1, 2, 3, 4, 5]   # deterministic sweep ...
//! # per_rd_list = [0.1, 0.5]    # ... or stochastic sweep, never both
//! cycles = 10000
//! seed = 1
//! both_legs = false
//! max_attempts = 100
//! format = "csv"            # "csv" | "json"
//! # out = "results.csv"     # stdout when absent
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_parameters, SystemParameters};
use crate::protocol::ProtocolVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantSelection {
    #[serde(rename = "ncc-arq")]
    NccArq,
    #[serde(rename = "c-arq")]
    CArq,
    #[serde(rename = "both")]
    Both,
}

impl VariantSelection {
    pub fn variants(self) -> &'static [ProtocolVariant] {
        match self {
            VariantSelection::NccArq => &[ProtocolVariant::NccArq],
            VariantSelection::CArq => &[ProtocolVariant::CArq],
            VariantSelection::Both => &[ProtocolVariant::NccArq, ProtocolVariant::CArq],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelection {
    Analytic,
    Sim,
    Both,
}

impl ModeSelection {
    pub fn analytic(self) -> bool {
        matches!(self, ModeSelection::Analytic | ModeSelection::Both)
    }

    pub fn sim(self) -> bool {
        matches!(self, ModeSelection::Sim | ModeSelection::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// The x-axis of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Exact relay transmission counts, simulated with a scripted channel.
    Retx(Vec<u32>),
    /// Relay→destination PERs, simulated with a seeded Bernoulli channel.
    PerRd(Vec<f64>),
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::Retx(v) => v.len(),
            Sweep::PerRd(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: SystemParameters,
    pub variant: VariantSelection,
    pub mode: ModeSelection,
    pub sweep: Sweep,
    pub cycles: u64,
    pub seed: u64,
    pub both_legs: bool,
    pub max_attempts: u32,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            params: SystemParameters::default(),
            variant: VariantSelection::Both,
            mode: ModeSelection::Both,
            sweep: Sweep::Retx(vec![1, 2, 3, 4, 5]),
            cycles: 10_000,
            seed: 1,
            both_legs: false,
            max_attempts: 100,
            format: OutputFormat::Csv,
            out: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`{}: {message}", line_suffix(*.line))]
    Invalid {
        key: String,
        line: Option<usize>,
        message: String,
    },
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

/// On-disk form: every key optional, nothing else allowed.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    mac_header_bytes: Option<u32>,
    phy_header_us: Option<f64>,
    data_payload_bytes: Option<u32>,
    ctrl_packet_bytes: Option<u32>,
    sifs_us: Option<f64>,
    difs_us: Option<f64>,
    source_control_rate_bps: Option<f64>,
    source_data_rate_bps: Option<f64>,
    relay_control_rate_bps: Option<f64>,
    relay_data_rate_bps: Option<f64>,
    t_onc_us: Option<f64>,
    per_sd: Option<f64>,
    per_rd: Option<f64>,
    per_rs: Option<f64>,
    variant: Option<VariantSelection>,
    mode: Option<ModeSelection>,
    retx_list: Option<Vec<u32>>,
    per_rd_list: Option<Vec<f64>>,
    cycles: Option<u64>,
    seed: Option<u64>,
    both_legs: Option<bool>,
    max_attempts: Option<u32>,
    format: Option<OutputFormat>,
    out: Option<PathBuf>,
}

/// 1-based line on which `key` is assigned in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            l.trim_start()
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

impl ScenarioConfig {
    /// Loads `path`, or the defaults when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                Self::from_toml_str(&text)
            }
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let cfg = Self::from_file(file)?;
        cfg.validate().map_err(|e| match e {
            ConfigError::Invalid { key, message, .. } => ConfigError::Invalid {
                line: line_of(text, &key),
                key,
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    fn from_file(f: ConfigFile) -> Result<Self, ConfigError> {
        let d = Self::default();
        let p = d.params.clone();
        let sweep = match (f.retx_list, f.per_rd_list) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid {
                    key: "per_rd_list".into(),
                    line: None,
                    message: "give exactly one of retx_list and per_rd_list".into(),
                })
            }
            (Some(r), None) => Sweep::Retx(r),
            (None, Some(p)) => Sweep::PerRd(p),
            (None, None) => d.sweep,
        };
        Ok(Self {
            params: SystemParameters {
                mac_header_bytes: f.mac_header_bytes.unwrap_or(p.mac_header_bytes),
                phy_header_us: f.phy_header_us.unwrap_or(p.phy_header_us),
                data_payload_bytes: f.data_payload_bytes.unwrap_or(p.data_payload_bytes),
                ctrl_packet_bytes: f.ctrl_packet_bytes.unwrap_or(p.ctrl_packet_bytes),
                sifs_us: f.sifs_us.unwrap_or(p.sifs_us),
                difs_us: f.difs_us.unwrap_or(p.difs_us),
                source_control_rate_bps: f
                    .source_control_rate_bps
                    .unwrap_or(p.source_control_rate_bps),
                source_data_rate_bps: f.source_data_rate_bps.unwrap_or(p.source_data_rate_bps),
                relay_control_rate_bps: f
                    .relay_control_rate_bps
                    .unwrap_or(p.relay_control_rate_bps),
                relay_data_rate_bps: f.relay_data_rate_bps.unwrap_or(p.relay_data_rate_bps),
                t_onc_us: f.t_onc_us.unwrap_or(p.t_onc_us),
                per_sd: f.per_sd.unwrap_or(p.per_sd),
                per_rd: f.per_rd.unwrap_or(p.per_rd),
                per_rs: f.per_rs.unwrap_or(p.per_rs),
            },
            variant: f.variant.unwrap_or(d.variant),
            mode: f.mode.unwrap_or(d.mode),
            sweep,
            cycles: f.cycles.unwrap_or(d.cycles),
            seed: f.seed.unwrap_or(d.seed),
            both_legs: f.both_legs.unwrap_or(d.both_legs),
            max_attempts: f.max_attempts.unwrap_or(d.max_attempts),
            format: f.format.unwrap_or(d.format),
            out: f.out.or(d.out),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: String| ConfigError::Invalid {
            key: key.to_string(),
            line: None,
            message,
        };
        if let Err(violations) = validate_parameters(&self.params) {
            let v = &violations[0];
            return Err(invalid(v.field, v.message.clone()));
        }
        match &self.sweep {
            Sweep::Retx(list) => {
                if list.is_empty() {
                    return Err(invalid("retx_list", "must not be empty".into()));
                }
                if let Some(r) = list.iter().find(|&&r| r < 1) {
                    return Err(invalid(
                        "retx_list",
                        format!("entries must be >= 1, got {r}"),
                    ));
                }
            }
            Sweep::PerRd(list) => {
                if list.is_empty() {
                    return Err(invalid("per_rd_list", "must not be empty".into()));
                }
                if let Some(p) = list.iter().find(|p| !(0.0..1.0).contains(*p)) {
                    return Err(invalid(
                        "per_rd_list",
                        format!("entries must lie in [0, 1), got {p}"),
                    ));
                }
            }
        }
        if self.cycles == 0 {
            return Err(invalid("cycles", "must be >= 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(invalid("max_attempts", "must be >= 1".into()));
        }
        Ok(())
    }

    /// Full configuration as a scenario file that loads back to `self`.
    pub fn to_toml_string(&self) -> String {
        let p = &self.params;
        let (retx_list, per_rd_list) = match &self.sweep {
            Sweep::Retx(r) => (Some(r.clone()), None),
            Sweep::PerRd(v) => (None, Some(v.clone())),
        };
        let file = ConfigFile {
            mac_header_bytes: Some(p.mac_header_bytes),
            phy_header_us: Some(p.phy_header_us),
            data_payload_bytes: Some(p.data_payload_bytes),
            ctrl_packet_bytes: Some(p.ctrl_packet_bytes),
            sifs_us: Some(p.sifs_us),
            difs_us: Some(p.difs_us),
            source_control_rate_bps: Some(p.source_control_rate_bps),
            source_data_rate_bps: Some(p.source_data_rate_bps),
            relay_control_rate_bps: Some(p.relay_control_rate_bps),
            relay_data_rate_bps: Some(p.relay_data_rate_bps),
            t_onc_us: Some(p.t_onc_us),
            per_sd: Some(p.per_sd),
            per_rd: Some(p.per_rd),
            per_rs: Some(p.per_rs),
            variant: Some(self.variant),
            mode: Some(self.mode),
            retx_list,
            per_rd_list,
            cycles: Some(self.cycles),
            seed: Some(self.seed),
            both_legs: Some(self.both_legs),
            max_attempts: Some(self.max_attempts),
            format: Some(self.format),
            out: self.out.clone(),
        };
        toml::to_string(&file).expect("flat scenario always serializes")
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_toml_string())
    }
}
