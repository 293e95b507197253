//! Flat key-value server configuration (TOML syntax).
//!
//! Every key is optional; see [`RawConfig`] for names and defaults. Command
//! line overrides are applied as `key=value` pairs on top of the file.

use needleguide_core::guidance::GuidanceParams;
use needleguide_core::simulator::{bodies, NoiseModel, Scenario, DEFAULT_RATE_HZ};
use serde::Deserialize;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// On-disk form. Lengths in millimetres and angles in degrees, as an
/// operator would type them.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub tcp_bind: String,
    /// Empty disables the WebSocket bridge.
    pub ws_bind: String,
    /// `simulator`, `recording` or `external`.
    pub source: String,
    pub scenario: String,
    pub scenario_samples: Option<usize>,
    pub recording: Option<PathBuf>,
    pub external: Option<String>,
    pub rate_hz: f64,
    /// Playback speed multiplier for simulator and recording sources;
    /// 0 runs unpaced.
    pub speed: f64,
    pub noise_position_mm: f64,
    pub noise_orientation_deg: f64,
    pub seed: u64,
    pub magnification: f64,
    pub on_track_radius_mm: f64,
    pub on_track_angle_deg: f64,
    pub handedness_conversion: bool,
    pub stale_after_s: f64,
    pub heartbeat_interval_s: f64,
    pub history_capacity: usize,
    pub history_retention_s: f64,
    pub us_pixel_spacing_mm: Option<f64>,
    pub debug_echo: bool,
    pub client_queue_limit: usize,
    /// Hold the source until this many clients have said Hello.
    pub wait_for_clients: usize,
    pub body_headset: u16,
    pub body_needle: u16,
    pub body_probe: u16,
    pub body_headset_display: u16,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig {
            tcp_bind: "127.0.0.1:7878".into(),
            ws_bind: "127.0.0.1:7879".into(),
            source: "simulator".into(),
            scenario: "insertion".into(),
            scenario_samples: None,
            recording: None,
            external: None,
            rate_hz: DEFAULT_RATE_HZ,
            speed: 1.0,
            noise_position_mm: 0.0,
            noise_orientation_deg: 0.0,
            seed: 0,
            magnification: 5.0,
            on_track_radius_mm: 3.0,
            on_track_angle_deg: 5.0,
            handedness_conversion: true,
            stale_after_s: 0.5,
            heartbeat_interval_s: 1.0,
            history_capacity: needleguide_core::pose_history::DEFAULT_CAPACITY,
            history_retention_s: needleguide_core::pose_history::DEFAULT_RETENTION,
            us_pixel_spacing_mm: None,
            debug_echo: false,
            client_queue_limit: 1 << 16,
            wait_for_clients: 0,
            body_headset: bodies::HEADSET,
            body_needle: bodies::NEEDLE,
            body_probe: bodies::PROBE,
            body_headset_display: bodies::HEADSET_DISPLAY,
        }
    }
}

/// Which rigid body id plays which role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BodyRegistry {
    pub headset: u16,
    pub needle: u16,
    pub probe: u16,
    /// Headset pose reported by the display's own tracking.
    pub headset_display: u16,
}

impl Default for BodyRegistry {
    fn default() -> Self {
        BodyRegistry {
            headset: bodies::HEADSET,
            needle: bodies::NEEDLE,
            probe: bodies::PROBE,
            headset_display: bodies::HEADSET_DISPLAY,
        }
    }
}

impl BodyRegistry {
    pub fn name(&self, id: u16) -> Option<&'static str> {
        match id {
            x if x == self.headset => Some("headset"),
            x if x == self.needle => Some("needle"),
            x if x == self.probe => Some("probe"),
            x if x == self.headset_display => Some("headset_display"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceConfig {
    Simulator { scenario: Scenario, noise: NoiseModel, rate_hz: f64, speed: f64 },
    Recording { path: PathBuf, speed: f64 },
    ExternalTcp { address: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub handedness_conversion: bool,
    pub guidance: GuidanceParams,
    /// Needle samples older than this (s) turn guidance Lost.
    pub stale_after: f64,
    pub history_capacity: usize,
    pub history_retention: f64,
    /// Known ultrasound pixel spacing (m).
    pub us_pixel_spacing: Option<f64>,
    pub debug_echo: bool,
    pub bodies: BodyRegistry,
}

impl Default for SessionConfig {
    fn default() -> Self {
        RawConfig::default().session()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub tcp_bind: SocketAddr,
    pub ws_bind: Option<SocketAddr>,
    pub source: SourceConfig,
    pub session: SessionConfig,
    pub heartbeat_interval: f64,
    /// Reliable frames a client may have queued before it is disconnected.
    pub client_queue_limit: usize,
    /// The source starts once this many clients have said Hello.
    pub wait_for_clients: usize,
}

impl RawConfig {
    fn session(&self) -> SessionConfig {
        SessionConfig {
            handedness_conversion: self.handedness_conversion,
            guidance: GuidanceParams {
                magnification: self.magnification,
                on_track_radius: self.on_track_radius_mm * 1e-3,
                on_track_angle_deg: self.on_track_angle_deg,
            },
            stale_after: self.stale_after_s,
            history_capacity: self.history_capacity,
            history_retention: self.history_retention_s,
            us_pixel_spacing: self.us_pixel_spacing_mm.map(|s| s * 1e-3),
            debug_echo: self.debug_echo,
            bodies: BodyRegistry {
                headset: self.body_headset,
                needle: self.body_needle,
                probe: self.body_probe,
                headset_display: self.body_headset_display,
            },
        }
    }

    pub fn validate(&self) -> Result<ServerConfig, ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let addr = |key: &str, v: &str| -> Result<SocketAddr, ConfigError> {
            v.parse().map_err(|_| ConfigError::Invalid(format!("{key}: `{v}` is not an address:port")))
        };
        let tcp_bind = addr("tcp_bind", &self.tcp_bind)?;
        let ws_bind = if self.ws_bind.is_empty() { None } else { Some(addr("ws_bind", &self.ws_bind)?) };
        if let Some(ws) = ws_bind {
            if ws == tcp_bind && ws.port() != 0 {
                return bad(format!("tcp_bind and ws_bind must differ, both are {ws}"));
            }
        }
        if !(self.magnification >= 1.0) || !self.magnification.is_finite() {
            return bad(format!("magnification must be >= 1, got {}", self.magnification));
        }
        for (key, v) in [
            ("on_track_radius_mm", self.on_track_radius_mm),
            ("on_track_angle_deg", self.on_track_angle_deg),
            ("stale_after_s", self.stale_after_s),
            ("heartbeat_interval_s", self.heartbeat_interval_s),
            ("history_retention_s", self.history_retention_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{key} must be positive, got {v}"));
            }
        }
        if !(self.speed >= 0.0) || !self.speed.is_finite() {
            return bad(format!("speed must be >= 0, got {}", self.speed));
        }
        if self.history_capacity < 2 {
            return bad("history_capacity must be at least 2".into());
        }
        if let Some(s) = self.us_pixel_spacing_mm {
            if !(s > 0.0) {
                return bad(format!("us_pixel_spacing_mm must be positive, got {s}"));
            }
        }
        let ids = [self.body_headset, self.body_needle, self.body_probe, self.body_headset_display];
        if (0..ids.len()).any(|i| ids[i + 1..].contains(&ids[i])) {
            return bad("body ids must be distinct".into());
        }
        let source = match self.source.as_str() {
            "simulator" => {
                let scenario = Scenario::by_name(&self.scenario, self.scenario_samples)
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown scenario `{}`", self.scenario)))?;
                if !(1.0..=1000.0).contains(&self.rate_hz) {
                    return bad(format!("rate_hz must be within [1, 1000], got {}", self.rate_hz));
                }
                let noise = NoiseModel::new(
                    self.noise_position_mm * 1e-3,
                    self.noise_orientation_deg.to_radians(),
                    self.seed,
                );
                if !noise.is_valid() {
                    return bad("noise sigmas must be non-negative".into());
                }
                SourceConfig::Simulator { scenario, noise, rate_hz: self.rate_hz, speed: self.speed }
            }
            "recording" => match &self.recording {
                Some(path) => SourceConfig::Recording { path: path.clone(), speed: self.speed },
                None => return bad("source = \"recording\" needs `recording`".into()),
            },
            "external" => match &self.external {
                Some(address) => SourceConfig::ExternalTcp { address: address.clone() },
                None => return bad("source = \"external\" needs `external`".into()),
            },
            other => return bad(format!("unknown source `{other}` (simulator, recording, external)")),
        };
        Ok(ServerConfig {
            tcp_bind,
            ws_bind,
            source,
            session: self.session(),
            heartbeat_interval: self.heartbeat_interval_s,
            client_queue_limit: self.client_queue_limit.max(16),
            wait_for_clients: self.wait_for_clients,
        })
    }
}

/// Parses TOML text plus `key=value` overrides. Override values are read as
/// TOML when they parse and as bare strings otherwise.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<ServerConfig, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    for (key, value) in overrides {
        let v = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.clone()));
        table.insert(key.clone(), v);
    }
    let raw: RawConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    raw.validate()
}

pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<ServerConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    parse_config(&text, overrides)
}
