//! Run configuration: a TOML document with every key defaulted.
//!
//! Unknown keys are rejected and reported with their full dotted path.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coexistence::{CycleConfig, ThresholdTable};
use crate::phy::{CcaThresholds, McsTable};
use crate::topology::{FloorPlan, Heights, PathlossModel};
use crate::traffic::RampProfile;
use crate::wlan_mac::{DcfParams, RateLadder};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config key `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("config key `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, e: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: e.to_string(),
    }
}

/// Which systems are on air and how LTE picks its mute subframes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RunKind {
    LteOnly,
    WlanOnly,
    Adaptive,
    /// One of the preset patterns, 1..=4.
    Fixed(u8),
}

impl RunKind {
    pub fn has_lte(self) -> bool {
        self != RunKind::WlanOnly
    }

    pub fn has_wlan(self) -> bool {
        self != RunKind::LteOnly
    }
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunKind::LteOnly => f.write_str("lte_only"),
            RunKind::WlanOnly => f.write_str("wlan_only"),
            RunKind::Adaptive => f.write_str("adaptive"),
            RunKind::Fixed(m) => write!(f, "mode{m}"),
        }
    }
}

impl TryFrom<String> for RunKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        match s.as_str() {
            "lte_only" => Ok(RunKind::LteOnly),
            "wlan_only" => Ok(RunKind::WlanOnly),
            "adaptive" => Ok(RunKind::Adaptive),
            "mode1" => Ok(RunKind::Fixed(1)),
            "mode2" => Ok(RunKind::Fixed(2)),
            "mode3" => Ok(RunKind::Fixed(3)),
            "mode4" => Ok(RunKind::Fixed(4)),
            other => Err(format!(
                "unknown run kind `{other}` (expected lte_only, wlan_only, adaptive, mode1..mode4)"
            )),
        }
    }
}

impl From<RunKind> for String {
    fn from(k: RunKind) -> Self {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub floor: FloorPlan,
    pub heights: Heights,
    pub pathloss: PathlossModel,
    pub min_infrastructure_distance: f64,
    pub n_lte_users: usize,
    pub n_wlan_users: usize,
    pub tx_power_dbm: f64,
    pub antenna_gain_db: f64,
    pub noise_floor_dbm: f64,
    pub bandwidth_hz: f64,
    /// Redraw attempts for a user that cannot reach the lowest MCS or rate.
    pub coverage_attempts: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            floor: FloorPlan::default(),
            heights: Heights::default(),
            pathloss: PathlossModel::default(),
            min_infrastructure_distance: 10.0,
            n_lte_users: 10,
            n_wlan_users: 10,
            tx_power_dbm: 23.0,
            antenna_gain_db: 3.0,
            noise_floor_dbm: -101.0,
            bandwidth_hz: 20e6,
            coverage_attempts: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LteConfig {
    /// Packets per ms.
    pub arrival_rate: f64,
    /// Rates swept by multi-rate experiments.
    pub rate_grid: Vec<f64>,
    pub packet_bits: u64,
    pub full_buffer: bool,
    pub max_retx: u32,
    pub mcs_lag_ms: u64,
    pub mcs_table: McsTable,
}

impl Default for LteConfig {
    fn default() -> Self {
        Self {
            arrival_rate: 0.5,
            rate_grid: vec![0.5, 1.0, 1.5, 2.0],
            packet_bits: 20_000,
            full_buffer: false,
            max_retx: 3,
            mcs_lag_ms: 2,
            mcs_table: McsTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WlanConfig {
    pub dcf: DcfParams,
    pub ramp: RampProfile,
    pub payload_bits: u64,
    pub full_buffer: bool,
    pub rate_ladder: RateLadder,
}

impl Default for WlanConfig {
    fn default() -> Self {
        Self {
            dcf: DcfParams::default(),
            ramp: RampProfile::default(),
            payload_bits: 12_000,
            full_buffer: false,
            rate_ladder: RateLadder::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoexistenceConfig {
    pub mode: RunKind,
    pub t_c_ms: u64,
    pub initial_spared: usize,
    pub cca: CcaThresholds,
    pub thresholds: ThresholdTable,
}

impl CoexistenceConfig {
    pub fn cycle(&self) -> CycleConfig {
        CycleConfig {
            t_c_ms: self.t_c_ms,
            initial_spared: self.initial_spared,
        }
    }
}

impl Default for CoexistenceConfig {
    fn default() -> Self {
        Self {
            mode: RunKind::Adaptive,
            t_c_ms: CycleConfig::default().t_c_ms,
            initial_spared: CycleConfig::default().initial_spared,
            cca: CcaThresholds::default(),
            thresholds: ThresholdTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub duration_ms: u64,
    pub drops: usize,
    pub seed_base: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            duration_ms: 20_000,
            drops: 20,
            seed_base: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub cycles_csv: String,
    pub summary_csv: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            cycles_csv: "cycles.csv".into(),
            summary_csv: "summary.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Option<String>,
    pub scenario: ScenarioConfig,
    pub lte: LteConfig,
    pub wlan: WlanConfig,
    pub coexistence: CoexistenceConfig,
    pub engine: EngineConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            ConfigError::Schema {
                key,
                message: e.into_inner().message().trim().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        crate::topology::generate_floor(&self.scenario.floor).map_err(|e| invalid("scenario.floor", e))?;
        if self.scenario.bandwidth_hz.is_nan() || self.scenario.bandwidth_hz <= 0.0 {
            return Err(invalid("scenario.bandwidth_hz", "must be positive"));
        }
        self.lte.mcs_table.validate().map_err(|e| invalid("lte.mcs_table", e))?;
        if self.lte.arrival_rate < 0.0 || self.lte.rate_grid.iter().any(|&r| r < 0.0) {
            return Err(invalid("lte.arrival_rate", "rates must be non-negative"));
        }
        if self.lte.packet_bits == 0 {
            return Err(invalid("lte.packet_bits", "must be positive"));
        }
        self.wlan.dcf.validate().map_err(|e| invalid("wlan.dcf", e))?;
        self.wlan.rate_ladder.validate().map_err(|e| invalid("wlan.rate_ladder", e))?;
        if self.wlan.payload_bits == 0 {
            return Err(invalid("wlan.payload_bits", "must be positive"));
        }
        if self.wlan.ramp.start_rate < 0.0 || self.wlan.ramp.end_rate < 0.0 {
            return Err(invalid("wlan.ramp", "rates must be non-negative"));
        }
        self.coexistence.cycle().validate().map_err(|e| invalid("coexistence.t_c_ms", e))?;
        self.coexistence.cca.validate().map_err(|e| invalid("coexistence.cca", e))?;
        self.coexistence
            .thresholds
            .validate()
            .map_err(|e| invalid("coexistence.thresholds", e))?;
        let t_c = self.coexistence.t_c_ms;
        if self.engine.duration_ms == 0 || !self.engine.duration_ms.is_multiple_of(t_c) {
            return Err(invalid(
                "engine.duration_ms",
                format!(
                    "{} ms is not a positive multiple of the {t_c} ms reallocation cycle",
                    self.engine.duration_ms
                ),
            ));
        }
        if self.engine.drops == 0 {
            return Err(invalid("engine.drops", "need at least one drop"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Ramp duration defaults to the drop length.
    pub fn wlan_ramp(&self) -> RampProfile {
        let mut ramp = self.wlan.ramp;
        if ramp.duration_ms == 0 {
            ramp.duration_ms = self.engine.duration_ms;
        }
        ramp
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = RunConfig::from_toml_str("experiment = \"fig2\"\n").unwrap();
        assert_eq!(cfg.experiment.as_deref(), Some("fig2"));
        assert_eq!(cfg.lte.packet_bits, 20_000);
        assert_eq!(cfg.coexistence.t_c_ms, 1_000);
        assert_eq!(cfg.engine.duration_ms, 20_000);
        assert_eq!(cfg.scenario.floor.rooms_per_row, 20);
    }

    #[test]
    fn cycle_divisibility_enforced() {
        let err = RunConfig::from_toml_str(
            "[coexistence]\nt_c_ms = 700\n[engine]\nduration_ms = 100000\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("engine.duration_ms"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml_str("[lte]\nbandwith = 20\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lte"), "{msg}");
        assert!(msg.contains("bandwith"), "{msg}");
    }

    #[test]
    fn nested_keys_parse() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [coexistence]
            mode = "mode3"
            t_c_ms = 500
            initial_spared = 2
            [coexistence.cca]
            ed_threshold = -60.0
            [wlan.ramp]
            start_rate = 0.1
            end_rate = 0.2
            [engine]
            duration_ms = 5000
            "#,
        )
        .unwrap();
        assert_eq!(cfg.coexistence.mode, RunKind::Fixed(3));
        assert_eq!(cfg.coexistence.initial_spared, 2);
        assert_eq!(cfg.coexistence.cca.ed_threshold, -60.0);
        assert_eq!(cfg.coexistence.cca.cs_threshold, -82.0);
        assert_eq!(cfg.wlan_ramp().duration_ms, 5_000);
    }

    #[test]
    fn bad_mode_rejected() {
        let err = RunConfig::from_toml_str("[coexistence]\nmode = \"mode7\"\n").unwrap_err();
        assert!(err.to_string().contains("coexistence.mode"), "{err}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash_hex(), b.hash_hex());
        b.engine.seed_base = 2;
        assert_ne!(a.hash_hex(), b.hash_hex());
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            parse_config(Path::new("/nonexistent/run.toml")),
            Err(ConfigError::Io { .. })
        ));
    }
}
