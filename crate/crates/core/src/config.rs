//! Physical and numerical parameters.
//!
//! A run is described by a TOML document in human units ([`ConfigDocument`]).
//! [`PhysicsConfig`] is the validated SI view every other module consumes.
//! The document is kept alongside the SI view so that a config written back
//! to disk reloads bit-for-bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{consts, to_human, to_si, Unit};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config document: {0}")]
    Parse(String),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("override `{path}`: {reason}")]
    OverridePath { path: String, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(path: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    TE,
    TM,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayModel {
    AnalyticHalfspace,
    /// Free-space rate everywhere.
    FreeSpace,
}

// ---------------------------------------------------------------------------
// Human-unit document
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub toroid: ToroidDoc,
    pub mode: ModeDoc,
    pub cavity: CavityDoc,
    #[serde(default)]
    pub atom: AtomDoc,
    #[serde(default)]
    pub surface: SurfaceDoc,
    #[serde(default)]
    pub probe: ProbeDoc,
    #[serde(default)]
    pub detection: DetectionDoc,
    #[serde(default)]
    pub cloud: CloudDoc,
    #[serde(default)]
    pub fort: FortDoc,
    #[serde(default)]
    pub model: ModelDoc,
    #[serde(default)]
    pub numerics: NumericsDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToroidDoc {
    pub principal_diameter_um: f64,
    pub minor_diameter_um: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeDoc {
    pub g_max_mhz: f64,
    #[serde(default = "defaults::decay_length_nm")]
    pub decay_length_nm: f64,
    #[serde(default = "defaults::waist_nm")]
    pub waist_nm: f64,
    #[serde(default = "defaults::effective_index")]
    pub effective_index: f64,
    #[serde(default = "defaults::polarization")]
    pub polarization: Polarization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityDoc {
    pub kappa_i_mhz: f64,
    pub kappa_ex_mhz: f64,
    pub h_mhz: f64,
    #[serde(default)]
    pub delta_ca_mhz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtomDoc {
    pub gamma0_mhz: f64,
    pub mass_kg: f64,
    pub wavelength_nm: f64,
}

impl Default for AtomDoc {
    fn default() -> Self {
        Self {
            gamma0_mhz: 2.6,
            mass_kg: consts::CS_MASS,
            wavelength_nm: consts::CS_D2_WAVELENGTH * 1e9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceDoc {
    /// Ground-state `C3 / h`.
    pub c3_ground_khz_um3: f64,
    /// Excited-state `C3 / h`.
    pub c3_excited_khz_um3: f64,
    /// Retardation crossover; `None` means `λ_a / 2π`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retardation_length_nm: Option<f64>,
    pub d_min_nm: f64,
    pub refractive_index: f64,
    pub decay_model: DecayModel,
}

impl Default for SurfaceDoc {
    fn default() -> Self {
        Self {
            // |U_s(65 nm)| = ħγ₀
            c3_ground_khz_um3: 1.056,
            // |δ_a(60 nm)| / 2π = 10 MHz
            c3_excited_khz_um3: 4.176,
            retardation_length_nm: None,
            d_min_nm: 1.0,
            refractive_index: 1.45,
            decay_model: DecayModel::AnalyticHalfspace,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeDoc {
    pub power_before_pw: f64,
    pub power_after_pw: f64,
    /// `None` keeps the probe on the cavity (`Δ_pa = Δ_ca`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_pa_before_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_pa_after_mhz: Option<f64>,
    pub switch_latency_ns: f64,
}

impl Default for ProbeDoc {
    fn default() -> Self {
        Self {
            power_before_pw: 4.0,
            power_after_pw: 2.0,
            delta_pa_before_mhz: None,
            delta_pa_after_mhz: None,
            switch_latency_ns: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionDoc {
    /// Overall detection efficiency per output port (taper to SPCM click).
    pub efficiency: f64,
    /// Dark/background counts per second on each detector.
    pub background_cps: f64,
    pub window_ns: f64,
    pub threshold: u32,
    pub clock_period_ns: f64,
    pub timestamp_resolution_ns: f64,
    pub record_length_us: f64,
    /// Duration of one cloud drop, used for false-trigger statistics.
    pub drop_window_ms: f64,
}

impl Default for DetectionDoc {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            background_cps: 200.0,
            window_ns: 750.0,
            threshold: 5,
            clock_period_ns: 25.0,
            timestamp_resolution_ns: 2.0,
            record_length_us: 8.0,
            drop_window_ms: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudDoc {
    pub temperature_uk: f64,
    pub release_height_um: f64,
    /// Mean downward speed at mode height, m/s.
    pub mean_arrival_speed: f64,
    /// Atoms are launched uniformly in `0 < d < transverse_extent`.
    pub transverse_extent_nm: f64,
    /// Launch height above the equator, in units of the mode waist.
    pub start_height_waists: f64,
}

impl Default for CloudDoc {
    fn default() -> Self {
        Self {
            temperature_uk: 10.0,
            release_height_um: 800.0,
            mean_arrival_speed: 0.17,
            transverse_extent_nm: 600.0,
            start_height_waists: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FortDoc {
    pub enabled: bool,
    pub radiation_pressure: bool,
    pub red_wavelength_nm: f64,
    pub blue_wavelength_nm: f64,
    pub red_power_uw: f64,
    pub blue_power_uw: f64,
    /// Decay-length multiplier of the higher-order red mode relative to a
    /// fundamental mode at the same wavelength.
    pub red_mode_decay_factor: f64,
    /// Surface light shift per unit power, `|U| / k_B` in mK per μW.
    pub red_shift_mk_per_uw: f64,
    pub blue_shift_mk_per_uw: f64,
    /// Azimuthal radiation-pressure acceleration at the surface, m/s².
    pub radiation_acceleration: f64,
    /// Post-trigger integration horizon.
    pub horizon_us: f64,
    /// Residence time above which an atom counts as captured.
    pub capture_time_us: f64,
}

impl Default for FortDoc {
    fn default() -> Self {
        Self {
            enabled: false,
            radiation_pressure: true,
            red_wavelength_nm: 898.0,
            blue_wavelength_nm: 848.0,
            red_power_uw: 50.0,
            blue_power_uw: 50.0,
            red_mode_decay_factor: 1.6,
            red_shift_mk_per_uw: 0.246,
            blue_shift_mk_per_uw: 0.338,
            radiation_acceleration: 2.8e6,
            horizon_us: 120.0,
            capture_time_us: 50.0,
        }
    }
}

/// Physics switches; the spectra/transit variants toggle these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDoc {
    pub surface_force: bool,
    pub dipole_force: bool,
    pub level_shift: bool,
    pub modified_decay: bool,
    /// Azimuthal force from the probe's traveling-wave phase gradient.
    pub probe_radiation_pressure: bool,
    pub recoil_heating: bool,
}

impl Default for ModelDoc {
    fn default() -> Self {
        Self {
            surface_force: true,
            dipole_force: true,
            level_shift: true,
            modified_decay: true,
            probe_radiation_pressure: true,
            recoil_heating: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsDoc {
    pub rel_tol: f64,
    pub abs_tol_nm: f64,
    pub max_step_ns: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub window_start_ns: f64,
    pub window_end_ns: f64,
    pub sample_interval_ns: f64,
    /// Untriggered atoms are dropped once they fall this many waists below
    /// the equator.
    pub interaction_half_height_waists: f64,
}

impl Default for NumericsDoc {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol_nm: 1e-3,
            max_step_ns: 25.0,
            trajectories: 20_000,
            seed: 20_100_301,
            window_start_ns: 200.0,
            window_end_ns: 700.0,
            sample_interval_ns: 20.0,
            interaction_half_height_waists: 4.0,
        }
    }
}

mod defaults {
    use super::Polarization;
    pub fn decay_length_nm() -> f64 {
        136.0
    }
    pub fn waist_nm() -> f64 {
        590.0
    }
    pub fn effective_index() -> f64 {
        1.41
    }
    pub fn polarization() -> Polarization {
        Polarization::TE
    }
}

impl Default for ConfigDocument {
    /// The experimental apparatus: {κ_i, κ_ex, h}/2π = {8, 13, 10} MHz,
    /// g_max/2π = 100 MHz, (D_p, D_m) = (24, 3) μm.
    fn default() -> Self {
        Self {
            toroid: ToroidDoc {
                principal_diameter_um: 24.0,
                minor_diameter_um: 3.0,
            },
            mode: ModeDoc {
                g_max_mhz: 100.0,
                decay_length_nm: defaults::decay_length_nm(),
                waist_nm: defaults::waist_nm(),
                effective_index: defaults::effective_index(),
                polarization: defaults::polarization(),
            },
            cavity: CavityDoc {
                kappa_i_mhz: 8.0,
                kappa_ex_mhz: 13.0,
                h_mhz: 10.0,
                delta_ca_mhz: 0.0,
            },
            atom: AtomDoc::default(),
            surface: SurfaceDoc::default(),
            probe: ProbeDoc::default(),
            detection: DetectionDoc::default(),
            cloud: CloudDoc::default(),
            fort: FortDoc::default(),
            model: ModelDoc::default(),
            numerics: NumericsDoc::default(),
        }
    }
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config document is always serializable")
    }

    /// Applies `section.key=value` overrides; the value is read as a TOML
    /// literal, falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ConfigError> {
        let mut table = toml::Table::try_from(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item.as_ref())?;
        }
        Self::from_table(table)
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(item.to_string()))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = parse_literal(raw);
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::BadOverride(item.to_string()));
    }
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut cursor = table;
    for key in parents {
        let entry = cursor
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| ConfigError::OverridePath {
            path: path.to_string(),
            reason: format!("`{key}` is not a table"),
        })?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

// ---------------------------------------------------------------------------
// SI view
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct ToroidGeometry {
    pub principal_diameter: f64,
    pub minor_diameter: f64,
}

impl ToroidGeometry {
    pub fn major_radius(&self) -> f64 {
        0.5 * self.principal_diameter
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeParams {
    pub g_max: f64,
    pub decay_length: f64,
    pub waist: f64,
    pub effective_index: f64,
    pub polarization: Polarization,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CavityRates {
    pub kappa_i: f64,
    pub kappa_ex: f64,
    pub h: f64,
    pub delta_ca: f64,
}

impl CavityRates {
    pub fn kappa(&self) -> f64 {
        self.kappa_i + self.kappa_ex
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomParams {
    pub gamma0: f64,
    pub mass: f64,
    pub wavelength: f64,
}

impl AtomParams {
    pub fn transition_frequency(&self) -> f64 {
        2.0 * std::f64::consts::PI * consts::C_LIGHT / self.wavelength
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceParams {
    pub c3_ground: f64,
    pub c3_excited: f64,
    pub retardation_length: f64,
    pub d_min: f64,
    pub refractive_index: f64,
    pub decay_model: DecayModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeParams {
    pub power_before: f64,
    pub power_after: f64,
    pub delta_pa_before: Option<f64>,
    pub delta_pa_after: Option<f64>,
    pub switch_latency: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionParams {
    pub efficiency: f64,
    pub background_rate: f64,
    pub window: f64,
    pub threshold: u32,
    pub clock_period: f64,
    pub timestamp_resolution: f64,
    pub record_length: f64,
    pub drop_window: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CloudParams {
    pub temperature: f64,
    pub release_height: f64,
    pub mean_arrival_speed: f64,
    pub transverse_extent: f64,
    pub start_height: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FortParams {
    pub enabled: bool,
    pub radiation_pressure: bool,
    pub red_wavelength: f64,
    pub blue_wavelength: f64,
    pub red_power: f64,
    pub blue_power: f64,
    pub red_mode_decay_factor: f64,
    /// J per W.
    pub red_shift_per_power: f64,
    pub blue_shift_per_power: f64,
    pub radiation_acceleration: f64,
    pub horizon: f64,
    pub capture_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSwitches {
    pub surface_force: bool,
    pub dipole_force: bool,
    pub level_shift: bool,
    pub modified_decay: bool,
    pub probe_radiation_pressure: bool,
    pub recoil_heating: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Numerics {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub window: (f64, f64),
    pub sample_interval: f64,
    pub interaction_half_height: f64,
}

/// Validated parameters in SI units. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicsConfig {
    pub toroid: ToroidGeometry,
    pub mode: ModeParams,
    pub cavity: CavityRates,
    pub atom: AtomParams,
    pub surface: SurfaceParams,
    pub probe: ProbeParams,
    pub detection: DetectionParams,
    pub cloud: CloudParams,
    pub fort: FortParams,
    pub model: ModelSwitches,
    pub numerics: Numerics,
    document: ConfigDocument,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self::from_document(ConfigDocument::default()).expect("default config is valid")
    }
}

/// Named parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Calibrated coupling, g_max/2π = 100 MHz.
    Apparatus,
    /// Finite-element estimate of the fundamental TE mode, g_max/2π = 140 MHz.
    FiniteElementCoupling,
}

impl Preset {
    pub fn document(self) -> ConfigDocument {
        let mut doc = ConfigDocument::default();
        if self == Preset::FiniteElementCoupling {
            doc.mode.g_max_mhz = 140.0;
        }
        doc
    }
}

/// Parses and validates a config document.
pub fn load_config(text: &str) -> Result<PhysicsConfig, ConfigError> {
    PhysicsConfig::from_document(ConfigDocument::parse(text)?)
}

pub fn load_config_file(path: &Path) -> Result<PhysicsConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_config(&text)
}

impl PhysicsConfig {
    pub fn from_document(doc: ConfigDocument) -> Result<Self, ConfigError> {
        validate(&doc)?;
        let d = &doc;
        let wavelength = to_si(d.atom.wavelength_nm, Unit::Nanometre);
        let retardation_length = match d.surface.retardation_length_nm {
            Some(v) => to_si(v, Unit::Nanometre),
            None => wavelength / (2.0 * std::f64::consts::PI),
        };
        let waist = to_si(d.mode.waist_nm, Unit::Nanometre);
        Ok(Self {
            toroid: ToroidGeometry {
                principal_diameter: to_si(d.toroid.principal_diameter_um, Unit::Micrometre),
                minor_diameter: to_si(d.toroid.minor_diameter_um, Unit::Micrometre),
            },
            mode: ModeParams {
                g_max: to_si(d.mode.g_max_mhz, Unit::MHz),
                decay_length: to_si(d.mode.decay_length_nm, Unit::Nanometre),
                waist,
                effective_index: d.mode.effective_index,
                polarization: d.mode.polarization,
            },
            cavity: CavityRates {
                kappa_i: to_si(d.cavity.kappa_i_mhz, Unit::MHz),
                kappa_ex: to_si(d.cavity.kappa_ex_mhz, Unit::MHz),
                h: to_si(d.cavity.h_mhz, Unit::MHz),
                delta_ca: to_si(d.cavity.delta_ca_mhz, Unit::MHz),
            },
            atom: AtomParams {
                gamma0: to_si(d.atom.gamma0_mhz, Unit::MHz),
                mass: d.atom.mass_kg,
                wavelength,
            },
            surface: SurfaceParams {
                c3_ground: to_si(d.surface.c3_ground_khz_um3, Unit::KHzCubicMicrometre),
                c3_excited: to_si(d.surface.c3_excited_khz_um3, Unit::KHzCubicMicrometre),
                retardation_length,
                d_min: to_si(d.surface.d_min_nm, Unit::Nanometre),
                refractive_index: d.surface.refractive_index,
                decay_model: d.surface.decay_model,
            },
            probe: ProbeParams {
                power_before: to_si(d.probe.power_before_pw, Unit::Picowatt),
                power_after: to_si(d.probe.power_after_pw, Unit::Picowatt),
                delta_pa_before: d.probe.delta_pa_before_mhz.map(|v| to_si(v, Unit::MHz)),
                delta_pa_after: d.probe.delta_pa_after_mhz.map(|v| to_si(v, Unit::MHz)),
                switch_latency: to_si(d.probe.switch_latency_ns, Unit::Nanosecond),
            },
            detection: DetectionParams {
                efficiency: d.detection.efficiency,
                background_rate: d.detection.background_cps,
                window: to_si(d.detection.window_ns, Unit::Nanosecond),
                threshold: d.detection.threshold,
                clock_period: to_si(d.detection.clock_period_ns, Unit::Nanosecond),
                timestamp_resolution: to_si(d.detection.timestamp_resolution_ns, Unit::Nanosecond),
                record_length: to_si(d.detection.record_length_us, Unit::Microsecond),
                drop_window: to_si(d.detection.drop_window_ms, Unit::Millisecond),
            },
            cloud: CloudParams {
                temperature: to_si(d.cloud.temperature_uk, Unit::Microkelvin),
                release_height: to_si(d.cloud.release_height_um, Unit::Micrometre),
                mean_arrival_speed: d.cloud.mean_arrival_speed,
                transverse_extent: to_si(d.cloud.transverse_extent_nm, Unit::Nanometre),
                start_height: d.cloud.start_height_waists * waist,
            },
            fort: FortParams {
                enabled: d.fort.enabled,
                radiation_pressure: d.fort.radiation_pressure,
                red_wavelength: to_si(d.fort.red_wavelength_nm, Unit::Nanometre),
                blue_wavelength: to_si(d.fort.blue_wavelength_nm, Unit::Nanometre),
                red_power: to_si(d.fort.red_power_uw, Unit::Microwatt),
                blue_power: to_si(d.fort.blue_power_uw, Unit::Microwatt),
                red_mode_decay_factor: d.fort.red_mode_decay_factor,
                red_shift_per_power: to_si(d.fort.red_shift_mk_per_uw, Unit::MillikelvinEnergy)
                    / Unit::Microwatt.scale(),
                blue_shift_per_power: to_si(d.fort.blue_shift_mk_per_uw, Unit::MillikelvinEnergy)
                    / Unit::Microwatt.scale(),
                radiation_acceleration: d.fort.radiation_acceleration,
                horizon: to_si(d.fort.horizon_us, Unit::Microsecond),
                capture_time: to_si(d.fort.capture_time_us, Unit::Microsecond),
            },
            model: ModelSwitches {
                surface_force: d.model.surface_force,
                dipole_force: d.model.dipole_force,
                level_shift: d.model.level_shift,
                modified_decay: d.model.modified_decay,
                probe_radiation_pressure: d.model.probe_radiation_pressure,
                recoil_heating: d.model.recoil_heating,
            },
            numerics: Numerics {
                rel_tol: d.numerics.rel_tol,
                abs_tol: to_si(d.numerics.abs_tol_nm, Unit::Nanometre),
                max_step: to_si(d.numerics.max_step_ns, Unit::Nanosecond),
                trajectories: d.numerics.trajectories,
                seed: d.numerics.seed,
                window: (
                    to_si(d.numerics.window_start_ns, Unit::Nanosecond),
                    to_si(d.numerics.window_end_ns, Unit::Nanosecond),
                ),
                sample_interval: to_si(d.numerics.sample_interval_ns, Unit::Nanosecond),
                interaction_half_height: d.numerics.interaction_half_height_waists * waist,
            },
            document: doc,
        })
    }

    pub fn document(&self) -> &ConfigDocument {
        &self.document
    }

    /// Serializes the source document; `load_config(cfg.to_toml())` is exact.
    pub fn to_toml(&self) -> String {
        self.document.to_toml()
    }

    /// Rebuilds the human view from the SI fields.
    pub fn to_human_document(&self) -> ConfigDocument {
        let mut doc = self.document.clone();
        doc.toroid.principal_diameter_um = to_human(self.toroid.principal_diameter, Unit::Micrometre);
        doc.toroid.minor_diameter_um = to_human(self.toroid.minor_diameter, Unit::Micrometre);
        doc.mode.g_max_mhz = to_human(self.mode.g_max, Unit::MHz);
        doc.mode.decay_length_nm = to_human(self.mode.decay_length, Unit::Nanometre);
        doc.mode.waist_nm = to_human(self.mode.waist, Unit::Nanometre);
        doc.cavity.kappa_i_mhz = to_human(self.cavity.kappa_i, Unit::MHz);
        doc.cavity.kappa_ex_mhz = to_human(self.cavity.kappa_ex, Unit::MHz);
        doc.cavity.h_mhz = to_human(self.cavity.h, Unit::MHz);
        doc.cavity.delta_ca_mhz = to_human(self.cavity.delta_ca, Unit::MHz);
        doc.atom.gamma0_mhz = to_human(self.atom.gamma0, Unit::MHz);
        doc.atom.wavelength_nm = to_human(self.atom.wavelength, Unit::Nanometre);
        doc.surface.c3_ground_khz_um3 = to_human(self.surface.c3_ground, Unit::KHzCubicMicrometre);
        doc.surface.c3_excited_khz_um3 = to_human(self.surface.c3_excited, Unit::KHzCubicMicrometre);
        doc.surface.d_min_nm = to_human(self.surface.d_min, Unit::Nanometre);
        doc.probe.power_before_pw = to_human(self.probe.power_before, Unit::Picowatt);
        doc.probe.power_after_pw = to_human(self.probe.power_after, Unit::Picowatt);
        doc.detection.window_ns = to_human(self.detection.window, Unit::Nanosecond);
        doc.detection.clock_period_ns = to_human(self.detection.clock_period, Unit::Nanosecond);
        doc.cloud.temperature_uk = to_human(self.cloud.temperature, Unit::Microkelvin);
        doc.cloud.transverse_extent_nm = to_human(self.cloud.transverse_extent, Unit::Nanometre);
        doc
    }

    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ConfigError> {
        Self::from_document(self.document.with_overrides(overrides)?)
    }

    /// Applies a closure to the source document and revalidates.
    pub fn modified(&self, f: impl FnOnce(&mut ConfigDocument)) -> Result<Self, ConfigError> {
        let mut doc = self.document.clone();
        f(&mut doc);
        Self::from_document(doc)
    }

    /// Pre-trigger probe detuning from the free-space atomic line.
    pub fn delta_pa_before(&self) -> f64 {
        self.probe.delta_pa_before.unwrap_or(self.cavity.delta_ca)
    }

    pub fn delta_pa_after(&self) -> f64 {
        self.probe.delta_pa_after.unwrap_or(self.cavity.delta_ca)
    }

    /// Stable 64-bit FNV-1a hash of the serialized document, for output headers.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_toml().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

fn validate(doc: &ConfigDocument) -> Result<(), ConfigError> {
    let non_negative = [
        ("cavity.kappa_i_mhz", doc.cavity.kappa_i_mhz),
        ("cavity.kappa_ex_mhz", doc.cavity.kappa_ex_mhz),
        ("cavity.h_mhz", doc.cavity.h_mhz),
        ("mode.g_max_mhz", doc.mode.g_max_mhz),
        ("atom.gamma0_mhz", doc.atom.gamma0_mhz),
        ("probe.power_before_pw", doc.probe.power_before_pw),
        ("probe.power_after_pw", doc.probe.power_after_pw),
        ("probe.switch_latency_ns", doc.probe.switch_latency_ns),
        ("detection.background_cps", doc.detection.background_cps),
        ("cloud.temperature_uk", doc.cloud.temperature_uk),
        ("fort.red_power_uw", doc.fort.red_power_uw),
        ("fort.blue_power_uw", doc.fort.blue_power_uw),
        ("fort.red_shift_mk_per_uw", doc.fort.red_shift_mk_per_uw),
        ("fort.blue_shift_mk_per_uw", doc.fort.blue_shift_mk_per_uw),
        ("fort.radiation_acceleration", doc.fort.radiation_acceleration),
    ];
    for (path, v) in non_negative {
        if !v.is_finite() {
            return Err(invalid(path, "value is not finite"));
        }
        if v < 0.0 {
            return Err(invalid(path, format!("negative value {v}")));
        }
    }
    let positive = [
        ("toroid.principal_diameter_um", doc.toroid.principal_diameter_um),
        ("toroid.minor_diameter_um", doc.toroid.minor_diameter_um),
        ("mode.decay_length_nm", doc.mode.decay_length_nm),
        ("mode.waist_nm", doc.mode.waist_nm),
        ("atom.mass_kg", doc.atom.mass_kg),
        ("atom.wavelength_nm", doc.atom.wavelength_nm),
        ("surface.c3_ground_khz_um3", doc.surface.c3_ground_khz_um3),
        ("surface.d_min_nm", doc.surface.d_min_nm),
        ("detection.window_ns", doc.detection.window_ns),
        ("detection.clock_period_ns", doc.detection.clock_period_ns),
        ("detection.timestamp_resolution_ns", doc.detection.timestamp_resolution_ns),
        ("detection.record_length_us", doc.detection.record_length_us),
        ("detection.drop_window_ms", doc.detection.drop_window_ms),
        ("cloud.mean_arrival_speed", doc.cloud.mean_arrival_speed),
        ("cloud.transverse_extent_nm", doc.cloud.transverse_extent_nm),
        ("cloud.start_height_waists", doc.cloud.start_height_waists),
        ("fort.red_wavelength_nm", doc.fort.red_wavelength_nm),
        ("fort.blue_wavelength_nm", doc.fort.blue_wavelength_nm),
        ("fort.red_mode_decay_factor", doc.fort.red_mode_decay_factor),
        ("fort.horizon_us", doc.fort.horizon_us),
        ("numerics.rel_tol", doc.numerics.rel_tol),
        ("numerics.abs_tol_nm", doc.numerics.abs_tol_nm),
        ("numerics.max_step_ns", doc.numerics.max_step_ns),
        ("numerics.sample_interval_ns", doc.numerics.sample_interval_ns),
        ("numerics.interaction_half_height_waists", doc.numerics.interaction_half_height_waists),
    ];
    for (path, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(path, format!("must be positive, got {v}")));
        }
    }
    if let Some(v) = doc.surface.retardation_length_nm {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid("surface.retardation_length_nm", "must be positive"));
        }
    }
    if doc.surface.c3_excited_khz_um3 < doc.surface.c3_ground_khz_um3 {
        return Err(invalid(
            "surface.c3_excited_khz_um3",
            "excited-state coefficient must not be below the ground-state one",
        ));
    }
    if doc.surface.refractive_index < 1.0 {
        return Err(invalid("surface.refractive_index", "must be at least 1"));
    }
    if doc.mode.effective_index <= 1.0 {
        return Err(invalid("mode.effective_index", "must exceed 1 for a guided mode"));
    }
    let eta = doc.detection.efficiency;
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid("detection.efficiency", format!("efficiency out of range: {eta}")));
    }
    if doc.detection.threshold < 1 {
        return Err(invalid("detection.threshold", "threshold must be at least 1"));
    }
    let ticks = doc.detection.window_ns / doc.detection.clock_period_ns;
    if (ticks - ticks.round()).abs() > 1e-9 * ticks.max(1.0) {
        return Err(invalid(
            "detection.window_ns",
            "window must be an integer number of clock periods",
        ));
    }
    if doc.numerics.window_end_ns <= doc.numerics.window_start_ns {
        return Err(invalid("numerics.window_end_ns", "averaging window is not ordered"));
    }
    if doc.numerics.trajectories == 0 {
        return Err(invalid("numerics.trajectories", "need at least one trajectory"));
    }
    if doc.fort.capture_time_us < 0.0 || doc.fort.capture_time_us > doc.fort.horizon_us {
        return Err(invalid("fort.capture_time_us", "must lie within the horizon"));
    }
    Ok(())
}
