//! Scenario configuration (TOML, schema version 1) and its hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use gridsleuth_core::feeder::{FeederModel, PhaseSet};
use gridsleuth_core::loads::LoadAllocation;
use gridsleuth_core::simulator::{EventKind, NoiseModel, ScenarioEvent};

use crate::formats::allocation::load_allocation;
use crate::formats::feeder::load_feeder;
use crate::formats::parse_complex;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Detection threshold: calibrated on an event-free companion run, or fixed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Gamma {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Gamma::Auto => s.serialize_str("auto"),
            Gamma::Fixed(g) => s.serialize_f64(*g),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(g) => Ok(Gamma::Fixed(g)),
            Raw::Int(g) => Ok(Gamma::Fixed(g as f64)),
            Raw::Text(t) if t == "auto" => Ok(Gamma::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("gamma must be a number or \"auto\", found \"{t}\""))),
        }
    }
}

impl std::str::FromStr for Gamma {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Gamma::Auto);
        }
        s.parse().map(Gamma::Fixed).map_err(|_| format!("`{s}` is neither a number nor `auto`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub magnitude_std: f64,
    pub angle_std: f64,
    pub current_magnitude_std: f64,
    pub current_angle_std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { magnitude_std: 0.0, angle_std: 0.0, current_magnitude_std: 0.0, current_angle_std: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum EventConfig {
    LineTrip { slot: u64, line: String },
    LineClose { slot: u64, line: String },
    /// `delta` lists the added shunt admittance (siemens) as `re+imj`
    /// strings, upper triangle or full.
    ShuntChange { slot: u64, bus: String, phases: String, delta: Vec<String> },
}

impl EventConfig {
    pub fn slot(&self) -> u64 {
        match self {
            EventConfig::LineTrip { slot, .. }
            | EventConfig::LineClose { slot, .. }
            | EventConfig::ShuntChange { slot, .. } => *slot,
        }
    }

    pub fn to_event(&self) -> Result<ScenarioEvent, String> {
        let kind = match self {
            EventConfig::LineTrip { line, .. } => EventKind::LineTrip { line: line.clone() },
            EventConfig::LineClose { line, .. } => EventKind::LineClose { line: line.clone() },
            EventConfig::ShuntChange { bus, phases, delta, .. } => {
                let ph = PhaseSet::parse(phases).ok_or_else(|| format!("invalid phase set `{phases}`"))?;
                let vals = delta
                    .iter()
                    .map(|s| parse_complex(s).ok_or_else(|| format!("invalid complex number `{s}`")))
                    .collect::<Result<Vec<_>, _>>()?;
                let n = ph.len();
                let m = if vals.len() == n * (n + 1) / 2 {
                    gridsleuth_core::feeder::symmetric_from_upper(n, &vals)
                } else if vals.len() == n * n {
                    gridsleuth_core::numerics::ComplexMatrix::new(n, n, vals).map_err(|e| e.to_string())?
                } else {
                    return Err(format!("shunt delta needs {} or {} entries", n * (n + 1) / 2, n * n));
                };
                EventKind::ShuntChange { bus: bus.clone(), phases: ph, delta: m }
            }
        };
        Ok(ScenarioEvent { slot: self.slot(), kind })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifyConfig {
    pub tau: f64,
    pub first_slot: u64,
    /// Window length; 0 means every slot from `first_slot` on.
    pub samples: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self { tau: 1e-6, first_slot: 1, samples: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    pub alpha: f64,
    pub gamma: Gamma,
    pub calibration_slots: u64,
    pub safety: f64,
    /// Residual floor in per-unit of base current.
    pub floor_pu: f64,
    pub history: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self { alpha: 0.01, gamma: Gamma::Auto, calibration_slots: 1000, safety: 1.5, floor_pu: 1e-8, history: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizeConfig {
    pub k: usize,
    /// Offset of the window start from the alarm slot. Negative values make
    /// the window overlap the event and exist for diagnostics.
    pub guard: i64,
    /// Snapshots after the window used to verify the update.
    pub holdout: usize,
    /// Frobenius misfit allowed by the noisy variant.
    pub epsilon: Option<f64>,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self { k: 10, guard: 1, holdout: 2, epsilon: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    /// Paths are relative to the config file.
    pub feeder: PathBuf,
    pub allocation: PathBuf,
    #[serde(default)]
    pub unloaded_buses: Vec<String>,
    pub slots: u64,
    pub seed: u64,
    #[serde(default = "default_pf")]
    pub power_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub events: Vec<EventConfig>,
    #[serde(default)]
    pub identify: IdentifyConfig,
    #[serde(default)]
    pub detect: DetectConfig,
    #[serde(default)]
    pub localize: LocalizeConfig,
}

fn default_pf() -> f64 {
    0.95
}

/// Command-line overrides applied before validation and hashing.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<Gamma>,
    pub k_localize: Option<usize>,
}

/// A validated config with its inputs loaded.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub feeder: FeederModel,
    pub allocation: LoadAllocation,
    pub events: Vec<ScenarioEvent>,
    pub feeder_sha256: String,
    pub allocation_sha256: String,
    /// SHA-256 of the canonical JSON of the effective config plus input hashes.
    pub hash: [u8; 32],
}

impl Scenario {
    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash)
    }

    pub fn household_seed(&self) -> u64 {
        self.config.seed
    }

    pub fn noise_seed(&self) -> u64 {
        derive_seed(self.config.seed, 1)
    }

    /// Seeds of the event-free run used to calibrate `γ`.
    pub fn calibration_seeds(&self) -> (u64, u64) {
        (derive_seed(self.config.seed, 2), derive_seed(self.config.seed, 3))
    }

    pub fn noise_model(&self, seed: u64) -> NoiseModel {
        let n = &self.config.noise;
        NoiseModel {
            magnitude_std: n.magnitude_std,
            angle_std: n.angle_std,
            current_magnitude_std: n.current_magnitude_std,
            current_angle_std: n.current_angle_std,
            seed,
        }
    }
}

/// SplitMix64 step over `seed + stream`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.tau {
            self.identify.tau = t;
        }
        if let Some(a) = o.alpha {
            self.detect.alpha = a;
        }
        if let Some(g) = o.gamma {
            self.detect.gamma = g;
        }
        if let Some(k) = o.k_localize {
            self.localize.k = k;
        }
    }

    /// Range checks that need no files.
    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |s: String| Err(ConfigError::Invalid(s));
        if self.version != SCHEMA_VERSION {
            return bad(format!("unsupported version {} (expected {SCHEMA_VERSION})", self.version));
        }
        if self.slots < 1 {
            return bad("slots must be at least 1".into());
        }
        if !(self.identify.tau > 0.0 && self.identify.tau.is_finite()) {
            return bad("identify.tau must be positive".into());
        }
        if self.identify.first_slot < 1 || self.identify.first_slot > self.slots {
            return bad("identify.first_slot must lie in 1..=slots".into());
        }
        if !(self.detect.alpha > 0.0 && self.detect.alpha < 1.0) {
            return bad("detect.alpha must lie in (0, 1)".into());
        }
        if let Gamma::Fixed(g) = self.detect.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad("detect.gamma must be positive or \"auto\"".into());
            }
        }
        if self.detect.calibration_slots < 1000 {
            return bad("detect.calibration_slots must be at least 1000".into());
        }
        if !(self.detect.safety >= 1.0 && self.detect.safety.is_finite()) {
            return bad("detect.safety must be at least 1".into());
        }
        if !(self.detect.floor_pu >= 0.0 && self.detect.floor_pu.is_finite()) {
            return bad("detect.floor_pu must be nonnegative".into());
        }
        if self.detect.history < 1 {
            return bad("detect.history must be at least 1".into());
        }
        if self.localize.k < 1 {
            return bad("localize.k must be at least 1".into());
        }
        if let Some(e) = self.localize.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return bad("localize.epsilon must be nonnegative".into());
            }
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return bad("power_factor must lie in (0, 1]".into());
        }
        let n = &self.noise;
        if [n.magnitude_std, n.angle_std, n.current_magnitude_std, n.current_angle_std]
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return bad("noise standard deviations must be nonnegative".into());
        }
        let mut last = 0;
        for e in &self.events {
            if e.slot() < 1 || e.slot() > self.slots {
                return bad(format!("event slot {} outside 1..={}", e.slot(), self.slots));
            }
            if e.slot() < last {
                return bad("events must be sorted by slot".into());
            }
            last = e.slot();
        }
        Ok(())
    }

    /// Loads referenced files, validates everything and computes the hash.
    pub fn resolve(self, base_dir: &Path) -> Result<Scenario, ConfigError> {
        self.check()?;
        let fpath = base_dir.join(&self.feeder);
        let ftext = read(&fpath)?;
        let feeder = load_feeder(&ftext).map_err(|e| ConfigError::File { path: fpath.clone(), reason: e.to_string() })?;
        if !feeder.is_connected() {
            return Err(ConfigError::File { path: fpath, reason: "in-service lines do not connect every bus".into() });
        }
        let apath = base_dir.join(&self.allocation);
        let atext = read(&apath)?;
        let allocation = load_allocation(&atext).map_err(|e| ConfigError::File { path: apath.clone(), reason: e.to_string() })?;
        let excluded: Vec<&str> = self.unloaded_buses.iter().map(String::as_str).collect();
        allocation
            .validate(&feeder, &excluded)
            .map_err(|e| ConfigError::File { path: apath, reason: e.to_string() })?;
        let mut events = Vec::with_capacity(self.events.len());
        let mut state = feeder.clone();
        for e in &self.events {
            let ev = e.to_event().map_err(ConfigError::Invalid)?;
            state = ev
                .apply(&state)
                .map_err(|err| ConfigError::Invalid(format!("event at slot {}: {err}", ev.slot)))?;
            events.push(ev);
        }
        let feeder_sha256 = sha256_hex(ftext.as_bytes());
        let allocation_sha256 = sha256_hex(atext.as_bytes());
        let hash = effective_hash(&self, &feeder_sha256, &allocation_sha256);
        Ok(Scenario { config: self, feeder, allocation, events, feeder_sha256, allocation_sha256, hash })
    }
}

/// Hash of the effective configuration. The output directory is excluded so
/// that reruns into different directories stay comparable.
fn effective_hash(c: &ScenarioConfig, feeder_sha: &str, alloc_sha: &str) -> [u8; 32] {
    #[derive(Serialize)]
    struct Canonical<'a> {
        config: &'a ScenarioConfig,
        feeder_sha256: &'a str,
        allocation_sha256: &'a str,
    }
    let mut c = c.clone();
    c.output = None;
    let json = serde_json::to_vec(&Canonical { config: &c, feeder_sha256: feeder_sha, allocation_sha256: alloc_sha })
        .expect("config serializes");
    Sha256::digest(&json).into()
}

/// Reads, overrides, validates and resolves a config file.
pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<Scenario, ConfigError> {
    let mut c = ScenarioConfig::parse(&read(path)?)?;
    c.apply(overrides);
    c.resolve(path.parent().unwrap_or(Path::new(".")))
}
