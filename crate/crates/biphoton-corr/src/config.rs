//! Strict JSON experiment configuration.
//!
//! Unknown keys are rejected everywhere so that silent unit mistakes cannot
//! slip in; units are embedded in the key names (`sigma_1_m`,
//! `sigma_1_per_m`, `dwell_s`). Every section accepts an optional `notes`
//! list for documenting where a value comes from.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{Axis, CorrelationModel, CovarianceMatrix2, Plane};
use crate::optics::OpticalTrain;
use crate::simulator::{DetectorSpec, ScanPlan, ScanProtocol};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("config invalid: {0}")]
    Invalid(String),
}

/// Env var pointing at a directory with a default `paper_bbo.json`.
pub const CONFIG_DIR_ENV: &str = "BIPHOTON_CONFIG_DIR";

/// Full experiment description: optics, source models, detectors, scans.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub optics: OpticsConfig,
    pub source: SourceConfig,
    pub detector: DetectorConfig,
    pub scan: ScanConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub pump_waist_m: f64,
    pub pump_wavelength_m: f64,
    pub pump_divergence_rad: f64,
    pub signal_wavelength_m: f64,
    pub signal_divergence_rad: f64,
    pub crystal_length_m: f64,
    pub crystal_index: f64,
    pub nearfield_magnification: f64,
    pub momentum_calibration_k_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub near_x: PositionModelConfig,
    pub near_y: PositionModelConfig,
    pub far_x: MomentumModelConfig,
    pub far_y: MomentumModelConfig,
}

/// Near-field (crystal-plane position) model parameters, meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionModelConfig {
    pub sigma_1_m: f64,
    pub sigma_2_m: f64,
    pub rho: f64,
    #[serde(default)]
    pub center_1_m: f64,
    #[serde(default)]
    pub center_2_m: f64,
}

/// Far-field (transverse momentum) model parameters, p/ħ in m⁻¹.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentumModelConfig {
    pub sigma_1_per_m: f64,
    pub sigma_2_per_m: f64,
    pub rho: f64,
    #[serde(default)]
    pub center_1_per_m: f64,
    #[serde(default)]
    pub center_2_per_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub fiber_mode_field_diameter_m: f64,
    pub near: RatesConfig,
    pub far: RatesConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub peak_coincidence_rate_hz: f64,
    pub peak_singles_rate_hz: f64,
    pub dark_rate_hz: f64,
    /// Optional flat accidental-coincidence floor; 0 when omitted.
    #[serde(default)]
    pub accidental_rate_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub near: PlanConfig,
    pub far: PlanConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    /// Active-probe steps across the window (per axis for full grids).
    pub points: usize,
    /// Scan window span (m) in the measurement plane.
    pub span_m: f64,
    /// Number of passive-probe positions, spread evenly over `passive_span_m`.
    pub passive_count: usize,
    pub passive_span_m: f64,
    pub dwell_s: f64,
    /// Optional pointing-drift random-walk step between line scans (m);
    /// 0 when omitted.
    #[serde(default)]
    pub center_drift_per_line_m: f64,
}

impl ExperimentConfig {
    /// Load and validate a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    /// Check that every section builds a valid domain object. Returns the
    /// optical-train warnings (non-fatal).
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let train = self.optical_train();
        let warnings = train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for plane in [Plane::NearField, Plane::FarField] {
            self.detector(plane)
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            for axis in [Axis::X, Axis::Y] {
                self.source_model(plane, axis)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                self.scan_plan(plane, axis, ScanProtocol::LineScan)
                    .validate()
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
        }
        Ok(warnings)
    }

    pub fn optical_train(&self) -> OpticalTrain {
        OpticalTrain {
            pump_waist: self.optics.pump_waist_m,
            pump_wavevector: 2.0 * PI / self.optics.pump_wavelength_m,
            pump_divergence: self.optics.pump_divergence_rad,
            signal_wavevector: 2.0 * PI / self.optics.signal_wavelength_m,
            signal_divergence: self.optics.signal_divergence_rad,
            crystal_length: self.optics.crystal_length_m,
            crystal_index: self.optics.crystal_index,
            nearfield_magnification: self.optics.nearfield_magnification,
            momentum_calibration_k: self.optics.momentum_calibration_k_m,
            fiber_mode_field_diameter: self.detector.fiber_mode_field_diameter_m,
        }
    }

    /// Source-plane correlation model for one plane/axis.
    pub fn source_model(
        &self,
        plane: Plane,
        axis: Axis,
    ) -> Result<CorrelationModel, crate::correlation::ModelError> {
        match plane {
            Plane::NearField => {
                let s = match axis {
                    Axis::X => &self.source.near_x,
                    Axis::Y => &self.source.near_y,
                };
                Ok(CorrelationModel::new(
                    plane,
                    axis,
                    s.center_1_m,
                    s.center_2_m,
                    CovarianceMatrix2::from_sigmas(s.sigma_1_m, s.sigma_2_m, s.rho)?,
                ))
            }
            Plane::FarField => {
                let s = match axis {
                    Axis::X => &self.source.far_x,
                    Axis::Y => &self.source.far_y,
                };
                Ok(CorrelationModel::new(
                    plane,
                    axis,
                    s.center_1_per_m,
                    s.center_2_per_m,
                    CovarianceMatrix2::from_sigmas(s.sigma_1_per_m, s.sigma_2_per_m, s.rho)?,
                ))
            }
        }
    }

    pub fn detector(&self, plane: Plane) -> DetectorSpec {
        let rates = match plane {
            Plane::NearField => &self.detector.near,
            Plane::FarField => &self.detector.far,
        };
        DetectorSpec {
            fiber_mode_field_diameter: self.detector.fiber_mode_field_diameter_m,
            peak_coincidence_rate: rates.peak_coincidence_rate_hz,
            peak_singles_rate: rates.peak_singles_rate_hz,
            dark_rate: rates.dark_rate_hz,
            accidental_rate: rates.accidental_rate_hz,
        }
    }

    pub fn scan_plan(&self, plane: Plane, axis: Axis, protocol: ScanProtocol) -> ScanPlan {
        let plan = match plane {
            Plane::NearField => &self.scan.near,
            Plane::FarField => &self.scan.far,
        };
        let passive_positions = if plan.passive_count == 1 {
            vec![0.0]
        } else {
            let half = plan.passive_span_m / 2.0;
            (0..plan.passive_count)
                .map(|i| -half + plan.passive_span_m * i as f64 / (plan.passive_count - 1) as f64)
                .collect()
        };
        ScanPlan {
            plane,
            axis,
            protocol,
            points: plan.points,
            spacing: plan.span_m / (plan.points - 1).max(1) as f64,
            passive_positions,
            dwell_time: plan.dwell_s,
            center_drift_per_line: plan.center_drift_per_line_m,
        }
    }

    /// Provenance tag for simulated records, e.g. `near_x@seed7`.
    pub fn model_tag(&self, plane: Plane, axis: Axis, seed: u64) -> String {
        format!("{plane}_{axis}@seed{seed}")
    }
}

/// Path of the bundled reference configuration.
pub fn reference_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/paper_bbo.json")
}
