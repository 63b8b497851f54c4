//! Experiment configuration: parameter record, use-case presets, the flat
//! `key=value` scenario format and validation.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Uplink scheduling policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SchedulerKind {
    /// Request-driven baseline.
    Bsps,
    /// Scheduler with full knowledge of the activation process.
    Ssps,
    /// Scheduler that learns the activation period and count online.
    Asps,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [SchedulerKind::Bsps, SchedulerKind::Ssps, SchedulerKind::Asps];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Bsps => "BSPS",
            SchedulerKind::Ssps => "SSPS",
            SchedulerKind::Asps => "ASPS",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BSPS" => Ok(SchedulerKind::Bsps),
            "SSPS" => Ok(SchedulerKind::Ssps),
            "ASPS" => Ok(SchedulerKind::Asps),
            other => Err(format!("unknown scheduler `{other}` (expected BSPS, SSPS or ASPS)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UseCase {
    AugmentedReality,
    RemoteAccessMaintenance,
}

impl UseCase {
    pub const ALL: [UseCase; 2] = [UseCase::AugmentedReality, UseCase::RemoteAccessMaintenance];

    pub fn as_str(self) -> &'static str {
        match self {
            UseCase::AugmentedReality => "augmented_reality",
            UseCase::RemoteAccessMaintenance => "remote_access_maintenance",
        }
    }

    pub fn preset(self) -> UseCasePreset {
        match self {
            UseCase::AugmentedReality => UseCasePreset {
                name: self,
                n_lines: 4,
                machines_per_line: 4,
                floor_length_m: 20.0,
                floor_width_m: 20.0,
                floor_height_m: 4.0,
                inter_machine_distance_m: 5.0,
                machine_side_m: 2.0,
            },
            // 16 machines do not fit on a 50 x 10 m floor at D = 10 m, so this
            // layout keeps the 5 m spacing.
            UseCase::RemoteAccessMaintenance => UseCasePreset {
                name: self,
                n_lines: 2,
                machines_per_line: 8,
                floor_length_m: 50.0,
                floor_width_m: 10.0,
                floor_height_m: 10.0,
                inter_machine_distance_m: 5.0,
                machine_side_m: 3.0,
            },
        }
    }
}

impl fmt::Display for UseCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UseCase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "augmented_reality" | "1" => Ok(UseCase::AugmentedReality),
            "remote_access_maintenance" | "2" => Ok(UseCase::RemoteAccessMaintenance),
            other => Err(other.to_string()),
        }
    }
}

/// Production-line structure and factory layout bound to a use case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UseCasePreset {
    pub name: UseCase,
    pub n_lines: u32,
    pub machines_per_line: u32,
    pub floor_length_m: f64,
    pub floor_width_m: f64,
    pub floor_height_m: f64,
    pub inter_machine_distance_m: f64,
    pub machine_side_m: f64,
}

impl UseCasePreset {
    fn fields(&self) -> [(&'static str, f64); 7] {
        [
            ("n_lines", self.n_lines as f64),
            ("machines_per_line", self.machines_per_line as f64),
            ("floor_length_m", self.floor_length_m),
            ("floor_width_m", self.floor_width_m),
            ("floor_height_m", self.floor_height_m),
            ("inter_machine_distance_m", self.inter_machine_distance_m),
            ("machine_side_m", self.machine_side_m),
        ]
    }
}

/// Full parameterisation of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub carrier_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub snr_threshold_db: f64,
    pub noise_temperature_k: f64,

    pub t_p_symbols: u32,
    pub t_tx_symbols: u32,
    pub tau_p_s: f64,
    pub t_fh_s: f64,
    pub tau_fh_s: f64,
    pub t_gnb_symbols: u32,
    pub t_cn_s: f64,

    pub sim_time_s: f64,
    pub antenna_gain_ue_db: f64,
    pub antenna_gain_gnb_db: f64,
    pub tx_power_ul_dbm: f64,
    pub tx_power_dl_dbm: f64,

    pub inter_machine_distance_m: f64,
    pub machine_side_m: f64,
    pub min_machines: u32,
    pub floor_length_m: f64,
    pub floor_width_m: f64,
    pub floor_height_m: f64,

    pub header_bytes: u32,
    pub bucket_fraction: f64,
    pub ue_activation_prob: f64,

    pub n_lines: u32,
    pub machines_per_line: u32,
    pub num_ues: u32,
    pub tau_on_s: f64,
    pub n_on: u32,
    pub scheduler_kind: SchedulerKind,
    pub dropping_enabled: bool,

    /// Fraction of UEs generating aperiodic traffic.
    pub traffic_mix: f64,
    pub periodic_period_s: f64,
    pub aperiodic_tmin_s: f64,
    pub aperiodic_tmax_s: f64,
    pub offered_traffic_bps: f64,
    pub rng_seed: u64,

    /// Use case label (informational unless loaded through `preset=`).
    pub use_case: Option<UseCase>,
    pub shadowing_enabled: bool,
    /// Lower SNR edge of the 16-QAM class.
    pub qam16_snr_db: f64,
    /// Lower SNR edge of the 64-QAM class.
    pub qam64_snr_db: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::from_preset(UseCase::AugmentedReality)
    }
}

/// A preset value that replaced a conflicting free-form key.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetResolution {
    pub key: String,
    pub requested: String,
    pub applied: String,
}

impl fmt::Display for PresetResolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}={}` overridden by preset value {}", self.key, self.requested, self.applied)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub resolutions: Vec<PresetResolution>,
}

const REQUIRED_KEYS: [&str; 2] = ["num_ues", "scheduler_kind"];
const LAYOUT_KEYS: [&str; 7] = [
    "n_lines",
    "machines_per_line",
    "floor_length_m",
    "floor_width_m",
    "floor_height_m",
    "inter_machine_distance_m",
    "machine_side_m",
];

impl ScenarioConfig {
    /// Default cell and traffic parameters with the layout of `use_case`.
    pub fn from_preset(use_case: UseCase) -> Self {
        let p = use_case.preset();
        ScenarioConfig {
            carrier_frequency_hz: 3.5e9,
            bandwidth_hz: 60e6,
            subcarrier_spacing_hz: 60e3,
            snr_threshold_db: -5.0,
            noise_temperature_k: 290.0,
            t_p_symbols: 7,
            t_tx_symbols: 4,
            tau_p_s: 0.0,
            t_fh_s: 0.05 / 1000.0,
            tau_fh_s: 0.0,
            t_gnb_symbols: 7,
            t_cn_s: 0.1 / 1000.0,
            sim_time_s: 10.0,
            antenna_gain_ue_db: 0.0,
            antenna_gain_gnb_db: 0.0,
            tx_power_ul_dbm: 23.0,
            tx_power_dl_dbm: 30.0,
            inter_machine_distance_m: p.inter_machine_distance_m,
            machine_side_m: p.machine_side_m,
            min_machines: 16,
            floor_length_m: p.floor_length_m,
            floor_width_m: p.floor_width_m,
            floor_height_m: p.floor_height_m,
            header_bytes: 72,
            bucket_fraction: 0.4,
            ue_activation_prob: 1.0,
            n_lines: p.n_lines,
            machines_per_line: p.machines_per_line,
            num_ues: 60,
            tau_on_s: 8.0 / 1000.0,
            n_on: 5,
            scheduler_kind: SchedulerKind::Ssps,
            dropping_enabled: false,
            traffic_mix: 0.0,
            periodic_period_s: 2.0 / 1000.0,
            aperiodic_tmin_s: 2.0 / 1000.0,
            aperiodic_tmax_s: 6.0 / 1000.0,
            offered_traffic_bps: 2.75e6,
            rng_seed: 1,
            use_case: Some(use_case),
            shadowing_enabled: true,
            qam16_snr_db: 10.0,
            qam64_snr_db: 20.0,
        }
    }

    /// Parses and validates a scenario document.
    pub fn load(source: &str) -> Result<LoadedConfig, ConfigError> {
        let entries = parse_kv(source)?;

        let preset = match entries.get("preset") {
            Some((value, line)) => Some(value.parse::<UseCase>().map_err(|v| {
                if v.is_empty() {
                    ConfigError::Parse { line: *line, message: "empty preset".into() }
                } else {
                    ConfigError::UnknownPreset(v)
                }
            })?),
            None => None,
        };

        for key in REQUIRED_KEYS {
            if !entries.contains_key(key) {
                return Err(ConfigError::MissingKey(key.to_string()));
            }
        }
        if preset.is_none() {
            for key in LAYOUT_KEYS {
                if !entries.contains_key(key) {
                    return Err(ConfigError::MissingKey(format!("{key} (no preset given)")));
                }
            }
        }

        let mut cfg = ScenarioConfig::from_preset(preset.unwrap_or(UseCase::AugmentedReality));
        if preset.is_none() {
            cfg.use_case = None;
        }

        let preset_values: BTreeMap<&str, f64> =
            preset.map(|u| u.preset().fields().into_iter().collect()).unwrap_or_default();

        let mut resolutions = Vec::new();
        for (key, (value, line)) in &entries {
            if key == "preset" {
                continue;
            }
            if let Some(&applied) = preset_values.get(key.as_str()) {
                let requested = parse_f64(key, value)?;
                if requested != applied {
                    resolutions.push(PresetResolution {
                        key: key.clone(),
                        requested: value.clone(),
                        applied: format_f64(applied),
                    });
                }
                continue;
            }
            cfg.set_key(key, value).map_err(|e| match e {
                ConfigError::Value { key, message } => {
                    ConfigError::Parse { line: *line, message: format!("key `{key}`: {message}") }
                }
                other => other,
            })?;
        }

        cfg.normalize();
        cfg.validate()?;
        Ok(LoadedConfig { config: cfg, resolutions })
    }

    /// Applies one `key=value` override. Setting `preset` re-applies the
    /// whole use-case layout.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "preset" => {
                let uc = v.parse::<UseCase>().map_err(ConfigError::UnknownPreset)?;
                let p = uc.preset();
                self.n_lines = p.n_lines;
                self.machines_per_line = p.machines_per_line;
                self.floor_length_m = p.floor_length_m;
                self.floor_width_m = p.floor_width_m;
                self.floor_height_m = p.floor_height_m;
                self.inter_machine_distance_m = p.inter_machine_distance_m;
                self.machine_side_m = p.machine_side_m;
                self.use_case = Some(uc);
            }
            "use_case" => {
                self.use_case = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(v.parse::<UseCase>().map_err(ConfigError::UnknownPreset)?)
                };
            }
            "carrier_frequency_hz" => self.carrier_frequency_hz = parse_f64(key, v)?,
            "bandwidth_hz" => self.bandwidth_hz = parse_f64(key, v)?,
            "subcarrier_spacing_hz" => self.subcarrier_spacing_hz = parse_f64(key, v)?,
            "snr_threshold_db" => self.snr_threshold_db = parse_f64(key, v)?,
            "noise_temperature_k" => self.noise_temperature_k = parse_f64(key, v)?,
            "t_p_symbols" => self.t_p_symbols = parse_u32(key, v)?,
            "t_tx_symbols" => self.t_tx_symbols = parse_u32(key, v)?,
            "tau_p_s" => self.tau_p_s = parse_duration(key, v)?,
            "t_fh_s" => self.t_fh_s = parse_duration(key, v)?,
            "tau_fh_s" => self.tau_fh_s = parse_duration(key, v)?,
            "t_gnb_symbols" => self.t_gnb_symbols = parse_u32(key, v)?,
            "t_cn_s" => self.t_cn_s = parse_duration(key, v)?,
            "sim_time_s" => self.sim_time_s = parse_duration(key, v)?,
            "antenna_gain_ue_db" => self.antenna_gain_ue_db = parse_f64(key, v)?,
            "antenna_gain_gnb_db" => self.antenna_gain_gnb_db = parse_f64(key, v)?,
            "tx_power_ul_dbm" => self.tx_power_ul_dbm = parse_f64(key, v)?,
            "tx_power_dl_dbm" => self.tx_power_dl_dbm = parse_f64(key, v)?,
            "inter_machine_distance_m" => self.inter_machine_distance_m = parse_f64(key, v)?,
            "machine_side_m" => self.machine_side_m = parse_f64(key, v)?,
            "min_machines" => self.min_machines = parse_u32(key, v)?,
            "floor_length_m" => self.floor_length_m = parse_f64(key, v)?,
            "floor_width_m" => self.floor_width_m = parse_f64(key, v)?,
            "floor_height_m" => self.floor_height_m = parse_f64(key, v)?,
            "header_bytes" => self.header_bytes = parse_u32(key, v)?,
            "bucket_fraction" => self.bucket_fraction = parse_fraction(key, v)?,
            "ue_activation_prob" => self.ue_activation_prob = parse_fraction(key, v)?,
            "n_lines" => self.n_lines = parse_u32(key, v)?,
            "machines_per_line" => self.machines_per_line = parse_u32(key, v)?,
            "num_ues" => self.num_ues = parse_u32(key, v)?,
            "tau_on_s" => self.tau_on_s = parse_duration(key, v)?,
            "n_on" => self.n_on = parse_u32(key, v)?,
            "scheduler_kind" => {
                self.scheduler_kind =
                    v.parse().map_err(|message| ConfigError::Value { key: key.to_string(), message })?
            }
            "dropping_enabled" => self.dropping_enabled = parse_bool(key, v)?,
            "traffic_mix" => self.traffic_mix = parse_fraction(key, v)?,
            "periodic_period_s" => self.periodic_period_s = parse_duration(key, v)?,
            "aperiodic_tmin_s" => self.aperiodic_tmin_s = parse_duration(key, v)?,
            "aperiodic_tmax_s" => self.aperiodic_tmax_s = parse_duration(key, v)?,
            "offered_traffic_bps" => self.offered_traffic_bps = parse_f64(key, v)?,
            "rng_seed" => {
                self.rng_seed = v.parse().map_err(|_| ConfigError::Value {
                    key: key.to_string(),
                    message: format!("`{v}` is not an unsigned integer"),
                })?
            }
            "shadowing_enabled" => self.shadowing_enabled = parse_bool(key, v)?,
            "qam16_snr_db" => self.qam16_snr_db = parse_f64(key, v)?,
            "qam64_snr_db" => self.qam64_snr_db = parse_f64(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` overrides on top of a loaded config and revalidates.
    pub fn with_overrides<'a, I>(mut self, overrides: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (k, v) in overrides {
            self.set_key(k.trim(), v)?;
        }
        self.normalize();
        self.validate()?;
        Ok(self)
    }

    /// Snaps the activation period to a whole number of scheduling units.
    pub fn normalize(&mut self) {
        if let Some(su_rate) = su_rate_hz(self.subcarrier_spacing_hz) {
            let sus = (self.tau_on_s * su_rate).round().max(1.0);
            self.tau_on_s = sus / su_rate;
        }
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.bandwidth_hz != 60e6 && self.bandwidth_hz != 120e6 {
            return invalid("bandwidth_hz must be 60e6 or 120e6");
        }
        if self.subcarrier_spacing_hz != 60e3 {
            return invalid("subcarrier_spacing_hz must be 60e3");
        }
        if !(self.bucket_fraction > 0.0 && self.bucket_fraction <= 1.0) {
            return invalid("0 < bucket_fraction <= 1 violated");
        }
        if !(0.0..=1.0).contains(&self.ue_activation_prob) {
            return invalid("0 <= ue_activation_prob <= 1 violated");
        }
        if !(0.0..=1.0).contains(&self.traffic_mix) {
            return invalid("0 <= traffic_mix <= 1 violated");
        }
        if !(self.aperiodic_tmin_s > 0.0) {
            return invalid("t_min > 0 violated");
        }
        if !(self.aperiodic_tmin_s < self.aperiodic_tmax_s) {
            return invalid("t_min < t_max violated");
        }
        if !(self.aperiodic_tmax_s <= self.tau_on_s) {
            return invalid("t_max <= tau_on violated");
        }
        if self.n_on < 1 {
            return invalid("n_on >= 1 violated");
        }
        if self.n_lines < 1 || self.machines_per_line < 1 {
            return invalid("n_lines and machines_per_line must be >= 1");
        }
        if self.use_case.is_some() && self.n_lines * self.machines_per_line < self.min_machines {
            return invalid("n_lines * machines_per_line >= min_machines violated");
        }
        for (name, v) in
            [("tau_p_s", self.tau_p_s), ("t_fh_s", self.t_fh_s), ("tau_fh_s", self.tau_fh_s), ("t_cn_s", self.t_cn_s)]
        {
            if !(v >= 0.0) {
                return invalid(&format!("{name} must be non-negative"));
            }
        }
        for (name, v) in [
            ("sim_time_s", self.sim_time_s),
            ("tau_on_s", self.tau_on_s),
            ("periodic_period_s", self.periodic_period_s),
            ("offered_traffic_bps", self.offered_traffic_bps),
            ("floor_length_m", self.floor_length_m),
            ("floor_width_m", self.floor_width_m),
            ("floor_height_m", self.floor_height_m),
            ("machine_side_m", self.machine_side_m),
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("noise_temperature_k", self.noise_temperature_k),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(&format!("{name} must be positive"));
            }
        }
        if !(self.inter_machine_distance_m >= 0.0) {
            return invalid("inter_machine_distance_m must be non-negative");
        }
        if !(self.qam16_snr_db <= self.qam64_snr_db && self.snr_threshold_db <= self.qam16_snr_db) {
            return invalid("snr_threshold_db <= qam16_snr_db <= qam64_snr_db violated");
        }
        Ok(())
    }

    /// Serialises to the flat `key=value` format accepted by [`ScenarioConfig::load`].
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        if let Some(uc) = self.use_case {
            put("use_case", uc.to_string());
        }
        put("scheduler_kind", self.scheduler_kind.to_string());
        put("num_ues", self.num_ues.to_string());
        put("n_lines", self.n_lines.to_string());
        put("machines_per_line", self.machines_per_line.to_string());
        put("floor_length_m", format_f64(self.floor_length_m));
        put("floor_width_m", format_f64(self.floor_width_m));
        put("floor_height_m", format_f64(self.floor_height_m));
        put("inter_machine_distance_m", format_f64(self.inter_machine_distance_m));
        put("machine_side_m", format_f64(self.machine_side_m));
        put("min_machines", self.min_machines.to_string());
        put("carrier_frequency_hz", format_f64(self.carrier_frequency_hz));
        put("bandwidth_hz", format_f64(self.bandwidth_hz));
        put("subcarrier_spacing_hz", format_f64(self.subcarrier_spacing_hz));
        put("snr_threshold_db", format_f64(self.snr_threshold_db));
        put("noise_temperature_k", format_f64(self.noise_temperature_k));
        put("t_p_symbols", self.t_p_symbols.to_string());
        put("t_tx_symbols", self.t_tx_symbols.to_string());
        put("tau_p_s", format_f64(self.tau_p_s));
        put("t_fh_s", format_f64(self.t_fh_s));
        put("tau_fh_s", format_f64(self.tau_fh_s));
        put("t_gnb_symbols", self.t_gnb_symbols.to_string());
        put("t_cn_s", format_f64(self.t_cn_s));
        put("sim_time_s", format_f64(self.sim_time_s));
        put("antenna_gain_ue_db", format_f64(self.antenna_gain_ue_db));
        put("antenna_gain_gnb_db", format_f64(self.antenna_gain_gnb_db));
        put("tx_power_ul_dbm", format_f64(self.tx_power_ul_dbm));
        put("tx_power_dl_dbm", format_f64(self.tx_power_dl_dbm));
        put("header_bytes", self.header_bytes.to_string());
        put("bucket_fraction", format_f64(self.bucket_fraction));
        put("ue_activation_prob", format_f64(self.ue_activation_prob));
        put("tau_on_s", format_f64(self.tau_on_s));
        put("n_on", self.n_on.to_string());
        put("dropping_enabled", self.dropping_enabled.to_string());
        put("traffic_mix", format_f64(self.traffic_mix));
        put("periodic_period_s", format_f64(self.periodic_period_s));
        put("aperiodic_tmin_s", format_f64(self.aperiodic_tmin_s));
        put("aperiodic_tmax_s", format_f64(self.aperiodic_tmax_s));
        put("offered_traffic_bps", format_f64(self.offered_traffic_bps));
        put("rng_seed", self.rng_seed.to_string());
        put("shadowing_enabled", self.shadowing_enabled.to_string());
        put("qam16_snr_db", format_f64(self.qam16_snr_db));
        put("qam64_snr_db", format_f64(self.qam64_snr_db));
        out
    }

    /// Total machine count `M`.
    pub fn num_machines(&self) -> usize {
        (self.n_lines * self.machines_per_line) as usize
    }
}

/// Data block payload: `ceil(G·τ/8)` bytes, at least one.
pub fn derive_block_size_bytes(cfg: &ScenarioConfig) -> u32 {
    block_size_bytes(cfg.offered_traffic_bps, cfg.periodic_period_s)
}

pub fn block_size_bytes(offered_traffic_bps: f64, period_s: f64) -> u32 {
    let bytes = offered_traffic_bps * period_s / 8.0;
    // absorb representation error of decimal inputs before the ceiling
    let rounded = (bytes - 1e-9).ceil();
    rounded.max(1.0) as u32
}

/// Scheduling units per second for a subcarrier spacing (7-symbol SU).
pub(crate) fn su_rate_hz(subcarrier_spacing_hz: f64) -> Option<f64> {
    let ratio = subcarrier_spacing_hz / 15e3;
    if ratio >= 1.0 && ratio.fract() == 0.0 && (ratio as u32).is_power_of_two() {
        // 14 symbols per slot, slot = 1 ms / ratio, two SUs per slot
        Some(2000.0 * ratio)
    } else {
        None
    }
}

fn parse_kv(source: &str) -> Result<BTreeMap<String, (String, usize)>, ConfigError> {
    let mut entries = BTreeMap::new();
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Parse { line: line_no, message: format!("expected `key=value`, found `{line}`") });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Parse { line: line_no, message: "empty key".into() });
        }
        let value = value.trim().trim_matches('"').to_string();
        if entries.insert(key.to_string(), (value, line_no)).is_some() {
            return Err(ConfigError::Parse { line: line_no, message: format!("duplicate key `{key}`") });
        }
    }
    Ok(entries)
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| ConfigError::Value { key: key.to_string(), message: format!("`{v}` is not a number") })
}

fn parse_u32(key: &str, v: &str) -> Result<u32, ConfigError> {
    v.trim()
        .parse::<u32>()
        .map_err(|_| ConfigError::Value { key: key.to_string(), message: format!("`{v}` is not an unsigned integer") })
}

fn parse_fraction(key: &str, v: &str) -> Result<f64, ConfigError> {
    match v.trim().strip_suffix('%') {
        Some(pct) => Ok(parse_f64(key, pct)? / 100.0),
        None => parse_f64(key, v),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::Value { key: key.to_string(), message: format!("`{v}` is not a boolean") }),
    }
}

/// Durations accept `ms`, `us` and `s` suffixes; bare numbers are seconds.
pub fn parse_duration(key: &str, v: &str) -> Result<f64, ConfigError> {
    let v = v.trim();
    let (num, divisor) = if let Some(n) = v.strip_suffix("ms") {
        (n, 1e3)
    } else if let Some(n) = v.strip_suffix("us") {
        (n, 1e6)
    } else if let Some(n) = v.strip_suffix('s') {
        (n, 1.0)
    } else {
        (v, 1.0)
    };
    Ok(parse_f64(key, num.trim())? / divisor)
}

fn format_f64(v: f64) -> String {
    // Display for f64 is the shortest representation that round-trips
    format!("{v}")
}
