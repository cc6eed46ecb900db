//! Run configuration: one TOML document per run.
//!
//! ```toml
//! seed = 7
//!
//! [device]
//! preset = "qubitA"
//!
//! [environment.charge]
//! amplitude_at_1hz = 2.9e-4
//! exponent = 1.93
//!
//! [environment.parity]
//! gamma = 1602.2
//!
//! [protocol]
//! kind = "fast"
//! duration = 60.0
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cpsd::{HighBandConfig, LowBandConfig};
use crate::electrostatics::GeometrySpec;
use crate::error::{Error, Result};
use crate::model::DeviceParams;
use crate::noise::EnvironmentSpec;
use crate::pulse::FastProtocolConfig;

pub const DEFAULT_SEED: u64 = 1;
/// Rows per shot-record chunk file.
pub const DEFAULT_CHUNK_ROWS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetRef {
    pub preset: String,
}

/// Either a named preset or a full parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceConfig {
    Preset(PresetRef),
    Explicit(DeviceParams),
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig::Preset(PresetRef {
            preset: "qubitA".into(),
        })
    }
}

impl DeviceConfig {
    pub fn resolve(&self) -> Result<DeviceParams> {
        let p = match self {
            DeviceConfig::Preset(r) => DeviceParams::preset(&r.preset)?,
            DeviceConfig::Explicit(p) => *p,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSeriesConfig {
    /// Total simulated time; one scan per `scan_period`.
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolConfig {
    /// Slow charge scans at the device scan cadence.
    Scan(ScanSeriesConfig),
    /// Parity and charge shots at the fast duty cycle.
    Fast(FastProtocolConfig),
    LowBandCpsd(LowBandConfig),
    HighBandCpsd(HighBandConfig),
}

impl ProtocolConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolConfig::Scan(_) => "scan",
            ProtocolConfig::Fast(_) => "fast",
            ProtocolConfig::LowBandCpsd(_) => "low_band_cpsd",
            ProtocolConfig::HighBandCpsd(_) => "high_band_cpsd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub chunk_rows: usize,
    /// Write the sampled environment next to the protocol output.
    pub environment: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            chunk_rows: DEFAULT_CHUNK_ROWS,
            environment: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub device: DeviceConfig,
    #[serde(default = "EnvironmentSpec::qubit_a")]
    pub environment: EnvironmentSpec,
    /// Environment sampling step; protocol-specific default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_dt: Option<f64>,
    #[serde(default)]
    pub geometry: GeometrySpec,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl RunConfig {
    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Schema {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.device.resolve()?;
        if let Some(c) = self.environment.charge {
            c.validate()?;
        }
        if let Some(f) = self.environment.flux {
            f.validate()?;
        }
        if let Some(dt) = self.env_dt {
            if !(dt > 0.0) {
                return Err(Error::Config("env_dt must be positive".into()));
            }
        }
        if self.output.chunk_rows == 0 {
            return Err(Error::Config("output.chunk_rows must be ≥ 1".into()));
        }
        match &self.protocol {
            ProtocolConfig::Scan(s) if !(s.duration >= 0.0) => {
                Err(Error::Config("scan duration must be ≥ 0".into()))
            }
            ProtocolConfig::Fast(f) => match f.flux {
                Some(fx) => fx.validate(),
                None => Ok(()),
            },
            ProtocolConfig::LowBandCpsd(l) => l.validate(),
            ProtocolConfig::HighBandCpsd(h) => {
                h.flux.validate()?;
                if h.n_spectra == 0 || h.segment_len < 2 {
                    return Err(Error::Config(
                        "high band needs ≥ 1 spectrum of ≥ 2 samples".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn params(&self) -> Result<DeviceParams> {
        self.device.resolve()
    }

    /// Simulated span of the environment the protocol needs.
    pub fn env_duration(&self) -> Result<f64> {
        let p = self.params()?;
        Ok(match &self.protocol {
            ProtocolConfig::Scan(s) => s.duration,
            ProtocolConfig::Fast(f) => f.duration,
            ProtocolConfig::LowBandCpsd(l) => l.duration(),
            // one spare second for dead time and the final cycle
            ProtocolConfig::HighBandCpsd(h) => h.duration(&p) + 1.0,
        })
    }

    pub fn env_step(&self) -> Result<f64> {
        if let Some(dt) = self.env_dt {
            return Ok(dt);
        }
        let p = self.params()?;
        Ok(match &self.protocol {
            ProtocolConfig::Scan(_) => p.scan_period / (p.scan_points * p.shots_per_point) as f64,
            ProtocolConfig::Fast(_) | ProtocolConfig::HighBandCpsd(_) => 1.0 / p.shot_rate,
            ProtocolConfig::LowBandCpsd(_) => 0.1,
        })
    }

    /// Parity–charge cycles a fast run records, one per `1/shot_rate`.
    pub fn shot_budget(&self) -> Result<Option<u64>> {
        let p = self.params()?;
        Ok(match &self.protocol {
            ProtocolConfig::Fast(f) => Some((f.duration * p.shot_rate + 1e-9).floor() as u64),
            _ => None,
        })
    }

    /// True when the shot record is sure to span several output chunks.
    pub fn streams_shots(&self) -> Result<bool> {
        Ok(self
            .shot_budget()?
            .is_some_and(|b| b > self.output.chunk_rows as u64))
    }

    /// Fully expanded TOML with every default filled in.
    pub fn resolved_toml(&self) -> Result<String> {
        let mut resolved = self.clone();
        resolved.device = DeviceConfig::Explicit(self.params()?);
        resolved.env_dt = Some(self.env_step()?);
        resolved.out = None;
        toml::to_string(&resolved).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAST: &str = r#"
seed = 3
[device]
preset = "qubitB"
[environment.charge]
amplitude_at_1hz = 2.9e-4
exponent = 1.93
[protocol]
kind = "fast"
duration = 2.0
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = RunConfig::from_toml_str(FAST, "inline").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.params().unwrap(), DeviceParams::qubit_b());
        assert!(cfg.environment.parity.is_none());
        match cfg.protocol {
            ProtocolConfig::Fast(f) => {
                assert_eq!(f.duration, 2.0);
                assert!(f.recalibrate);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.env_step().unwrap(), 1e-4);
    }

    #[test]
    fn resolved_copy_round_trips() {
        let cfg = RunConfig::from_toml_str(FAST, "inline").unwrap();
        let text = cfg.resolved_toml().unwrap();
        let back = RunConfig::from_toml_str(&text, "resolved").unwrap();
        assert_eq!(back.params().unwrap(), cfg.params().unwrap());
        assert_eq!(back.protocol, cfg.protocol);
        assert_eq!(back.resolved_toml().unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [
            format!("{FAST}\nextra = 1\n"),
            FAST.replace("duration = 2.0", "duration = 2.0\nspeed = 4"),
            FAST.replace("exponent = 1.93", "exponent = 1.93\nslope = 1"),
            FAST.replace("preset = \"qubitB\"", "preset = \"qubitB\"\nej = 3"),
            FAST.replace("kind = \"fast\"", "kind = \"warp\""),
        ] {
            let err = RunConfig::from_toml_str(&bad, "bad").unwrap_err();
            assert!(matches!(err, Error::Schema { .. }), "{bad}: {err}");
        }
        let preset = FAST.replace("qubitB", "qubitZ");
        assert!(RunConfig::from_toml_str(&preset, "p").is_err());
    }

    #[test]
    fn one_hour_fast_run_is_streamed() {
        let hour = FAST
            .replace("qubitB", "qubitA")
            .replace("duration = 2.0", "duration = 3600.0");
        let cfg = RunConfig::from_toml_str(&hour, "hour").unwrap();
        assert_eq!(cfg.shot_budget().unwrap(), Some(36_000_000));
        assert!(cfg.streams_shots().unwrap());
        let short = RunConfig::from_toml_str(FAST, "short").unwrap();
        assert!(!short.streams_shots().unwrap());
    }

    #[test]
    fn defaults_cover_a_minimal_file() {
        let cfg = RunConfig::from_toml_str("[protocol]\nkind = \"low_band_cpsd\"\n", "m").unwrap();
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.environment, EnvironmentSpec::qubit_a());
        assert_eq!(cfg.env_duration().unwrap(), 50_000.0);
        let scan = RunConfig::from_toml_str("[protocol]\nkind = \"scan\"\nduration = 100.0\n", "s")
            .unwrap();
        assert!((scan.env_step().unwrap() - 20.0 / 150.0).abs() < 1e-15);
    }
}
