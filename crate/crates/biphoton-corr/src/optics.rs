//! Measurement-plane ↔ source-plane coordinate maps and physical limits.
//!
//! The near field of the crystal is imaged onto the fiber plane with a fixed
//! magnification; the far field is mapped so that a probe position x
//! corresponds to a transverse momentum p = ħ·k·x/K for a calibration
//! length K. This module also computes the floors that pump geometry,
//! signal divergence and crystal thickness place on the observable
//! correlation strength.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{CorrelationModel, CovarianceMatrix2, ModelError, Plane};

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("refractive index must be >= 1, got {0}")]
    IndexBelowOne(f64),
    #[error("M^2 must be >= 1, got {0}")]
    MSquaredBelowOne(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Pump, crystal and relay-optics parameters of the measurement train.
///
/// Wavevectors are 2π/λ in m⁻¹; divergences are half-angles in rad;
/// `momentum_calibration_k` is the length K in p = ħ·k·x/K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalTrain {
    /// Pump waist radius at the crystal (m); the signal/idler emission
    /// radius equals it by construction.
    pub pump_waist: f64,
    /// Pump wavevector (m⁻¹).
    pub pump_wavevector: f64,
    /// Pump far-field divergence half-angle (rad).
    pub pump_divergence: f64,
    /// Signal/idler wavevector (m⁻¹), degenerate case.
    pub signal_wavevector: f64,
    /// Signal/idler divergence half-angle (rad).
    pub signal_divergence: f64,
    /// Crystal length (m).
    pub crystal_length: f64,
    /// Refractive index of the nonlinear crystal.
    pub crystal_index: f64,
    /// Near-field image-plane displacement per crystal-plane displacement.
    pub nearfield_magnification: f64,
    /// Far-field momentum calibration length K (m).
    pub momentum_calibration_k: f64,
    /// Mode field diameter of the probe fibers (m).
    pub fiber_mode_field_diameter: f64,
}

impl OpticalTrain {
    /// Validate positivity/index invariants. Returns non-fatal warnings
    /// (e.g. a pump/signal wavevector pair far from degeneracy).
    pub fn validate(&self) -> Result<Vec<String>, OpticsError> {
        let positives = [
            ("pump_waist", self.pump_waist),
            ("pump_wavevector", self.pump_wavevector),
            ("pump_divergence", self.pump_divergence),
            ("signal_wavevector", self.signal_wavevector),
            ("signal_divergence", self.signal_divergence),
            ("crystal_length", self.crystal_length),
            ("nearfield_magnification", self.nearfield_magnification),
            ("momentum_calibration_k", self.momentum_calibration_k),
            ("fiber_mode_field_diameter", self.fiber_mode_field_diameter),
        ];
        for (name, value) in positives {
            if !value.is_finite() || value <= 0.0 {
                return Err(OpticsError::NonPositive { name, value });
            }
        }
        if self.crystal_index < 1.0 {
            return Err(OpticsError::IndexBelowOne(self.crystal_index));
        }
        let mut warnings = Vec::new();
        // degenerate down-conversion: the pump wavevector is twice the signal's
        let ratio = self.pump_wavevector / (2.0 * self.signal_wavevector);
        if (ratio - 1.0).abs() > 0.05 {
            warnings.push(format!(
                "pump/signal wavevectors are not degenerate: k_pump/(2 k_signal) = {ratio:.4}"
            ));
        }
        Ok(warnings)
    }

    /// Gaussian width of the fiber-probe response in the measurement plane:
    /// mode-field radius w = MFD/2, intensity σ = w/2.
    pub fn probe_sigma_measurement(&self) -> f64 {
        self.fiber_mode_field_diameter / 4.0
    }

    /// Measurement-plane displacement per source-plane unit for the given
    /// plane: the near-field magnification, or K/k for the far field
    /// (meters of probe travel per unit of p/ħ).
    pub fn measurement_scale(&self, plane: Plane) -> f64 {
        match plane {
            Plane::NearField => self.nearfield_magnification,
            Plane::FarField => self.momentum_calibration_k / self.signal_wavevector,
        }
    }

    /// Fiber-probe response width referred to the source plane.
    pub fn probe_sigma_source(&self, plane: Plane) -> f64 {
        self.probe_sigma_measurement() / self.measurement_scale(plane)
    }
}

/// Transverse momentum (as p/ħ, in m⁻¹) for a far-field probe position:
/// p = k·x/K. Linear and odd in the position.
pub fn momentum_from_position(x_meas: f64, k_signal: f64, calibration_k: f64) -> f64 {
    k_signal * x_meas / calibration_k
}

/// Inverse of [`momentum_from_position`]: probe position for a momentum.
pub fn position_from_momentum(p: f64, k_signal: f64, calibration_k: f64) -> f64 {
    p * calibration_k / k_signal
}

/// Crystal-plane position for a near-field image-plane position.
pub fn nearfield_to_crystal(x_meas: f64, magnification: f64) -> f64 {
    x_meas / magnification
}

/// Near-field image-plane position for a crystal-plane position.
pub fn crystal_to_nearfield(x_crystal: f64, magnification: f64) -> f64 {
    x_crystal * magnification
}

/// Map a source-plane model (crystal position or transverse momentum) to
/// measurement-plane probe coordinates. Linear, so Gaussians stay Gaussians
/// and ρ is unchanged.
pub fn model_to_measurement(
    model: &CorrelationModel,
    train: &OpticalTrain,
) -> Result<CorrelationModel, OpticsError> {
    scale_model(model, train.measurement_scale(model.plane()))
}

/// Map a measurement-plane model back to source-plane units.
pub fn model_to_source(
    model: &CorrelationModel,
    train: &OpticalTrain,
) -> Result<CorrelationModel, OpticsError> {
    scale_model(model, 1.0 / train.measurement_scale(model.plane()))
}

fn scale_model(model: &CorrelationModel, scale: f64) -> Result<CorrelationModel, OpticsError> {
    let cov = model.covariance();
    Ok(CorrelationModel::new(
        model.plane(),
        model.axis(),
        model.center_1() * scale,
        model.center_2() * scale,
        CovarianceMatrix2::from_variances(
            cov.var_1() * scale * scale,
            cov.var_2() * scale * scale,
            cov.cov_12() * scale * scale,
        )?,
    ))
}

/// Floors on the observable correlation strength set by the source geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalLimits {
    /// Floor on Δ(p₁+p₂) from the pump: max(1/w_p, k_pump·Θ_pump/2), in ħ/m.
    pub dp_sum_min_pump: f64,
    /// Floor on Δ(x₁−x₂) from the signal divergence: 1/(k·Θ), in m.
    pub dx_diff_min_divergence: f64,
    /// Floor on Δ(x₁−x₂) from the crystal thickness: Θ/(2n)·L/2, in m.
    pub dx_diff_min_crystal: f64,
    /// Binding position floor: the larger of the two Δx floors (m).
    pub dx_diff_min: f64,
    /// Floor on the variance product, in ħ²: (dx floor)²·(dp floor)².
    pub product_floor: f64,
}

/// Compute the physical limits for a measurement train.
pub fn physical_limits(train: &OpticalTrain) -> Result<PhysicalLimits, OpticsError> {
    train.validate()?;
    let dp_pump_waist = 1.0 / train.pump_waist;
    let dp_pump_divergence = train.pump_wavevector * train.pump_divergence / 2.0;
    // both are stated lower bounds; the tighter one governs
    let dp_sum_min_pump = dp_pump_waist.max(dp_pump_divergence);
    let dx_diff_min_divergence = 1.0 / (train.signal_wavevector * train.signal_divergence);
    let dx_diff_min_crystal =
        train.signal_divergence / (2.0 * train.crystal_index) * train.crystal_length / 2.0;
    let dx_diff_min = dx_diff_min_divergence.max(dx_diff_min_crystal);
    let product_floor = (dx_diff_min * dp_sum_min_pump).powi(2);
    Ok(PhysicalLimits {
        dp_sum_min_pump,
        dx_diff_min_divergence,
        dx_diff_min_crystal,
        dx_diff_min,
        product_floor,
    })
}

/// Comparison of a measured variance product against the physical floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorCheck {
    pub floor: f64,
    pub measured: f64,
    /// measured / floor.
    pub ratio: f64,
    /// True when the measured product undercuts the floor — a physically
    /// suspicious result (over-deconvolution or fit artifact).
    pub suspicious: bool,
}

/// Compare a measured variance product (ħ²) against the product floor.
pub fn product_floor_check(
    limits: &PhysicalLimits,
    measured_product: f64,
) -> Result<FloorCheck, OpticsError> {
    if !measured_product.is_finite() || measured_product <= 0.0 {
        return Err(OpticsError::NonPositive {
            name: "measured_product",
            value: measured_product,
        });
    }
    Ok(FloorCheck {
        floor: limits.product_floor,
        measured: measured_product,
        ratio: measured_product / limits.product_floor,
        suspicious: measured_product < limits.product_floor,
    })
}

/// Bracket for the covariance criterion of a beam with M² modes:
/// the value is bounded below by 1/(2M²)² (within the margin of the
/// aperture model behind it) and non-separability requires < 1.
pub fn mode_limited_bounds(m_squared: f64) -> Result<(f64, f64), OpticsError> {
    if !m_squared.is_finite() || m_squared < 1.0 {
        return Err(OpticsError::MSquaredBelowOne(m_squared));
    }
    Ok(((2.0 * m_squared).powi(-2), 1.0))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::correlation::Axis;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Reference train used across the tests (constructed like the shipped
    /// config): 390 nm pump with 80 μm waist, 780 nm signal, back-solved
    /// signal divergence reproducing a 19 μm separation floor.
    pub(crate) fn reference_train() -> OpticalTrain {
        let pump_wavevector = 2.0 * std::f64::consts::PI / 390e-9;
        let signal_wavevector = 2.0 * std::f64::consts::PI / 780e-9;
        OpticalTrain {
            pump_waist: 80e-6,
            pump_wavevector,
            // diffraction-limited pump: θ = λ/(π w) = 2/(k w)
            pump_divergence: 2.0 / (pump_wavevector * 80e-6),
            signal_wavevector,
            signal_divergence: 1.0 / (signal_wavevector * 19e-6),
            crystal_length: 1.0e-3,
            crystal_index: 1.66,
            nearfield_magnification: 0.15,
            momentum_calibration_k: 4.417e-3,
            fiber_mode_field_diameter: 5.3e-6,
        }
    }

    #[test]
    fn momentum_on_axis_is_zero() {
        assert_eq!(momentum_from_position(0.0, 8.055e6, 226.4), 0.0);
    }

    #[test]
    fn momentum_calibration_literal_value() {
        // p = k·x/K for x = 10 μm, k = 2π/780 nm, K = 226.4 m
        let p = momentum_from_position(10e-6, 8.055e6, 226.4);
        assert_abs_diff_eq!(p, 0.3558, epsilon = 5e-4);
    }

    #[test]
    fn momentum_is_linear_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (k, kk) = (8.0553e6, 4.417e-3);
        for _ in 0..20 {
            let x: f64 = rng.gen_range(-1e-5..1e-5);
            assert_relative_eq!(
                momentum_from_position(2.0 * x, k, kk),
                2.0 * momentum_from_position(x, k, kk),
                max_relative = 1e-14
            );
            assert_relative_eq!(
                position_from_momentum(momentum_from_position(x, k, kk), k, kk),
                x,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn nearfield_mapping_and_inverse() {
        assert_eq!(nearfield_to_crystal(0.0, 0.15), 0.0);
        assert_relative_eq!(nearfield_to_crystal(6e-6, 0.15), 40e-6, epsilon = 1e-18);
        let x = 12.3e-6;
        assert_relative_eq!(
            nearfield_to_crystal(crystal_to_nearfield(x, 0.15), 0.15),
            x,
            max_relative = 1e-15
        );
    }

    #[test]
    fn limits_reference_values() {
        let lim = physical_limits(&reference_train()).unwrap();
        assert_relative_eq!(lim.dp_sum_min_pump, 12_500.0, max_relative = 1e-10);
        assert_relative_eq!(lim.dx_diff_min_divergence, 19e-6, max_relative = 1e-10);
        // crystal-thickness contribution ≈ 1 μm, negligible against 19 μm
        assert_abs_diff_eq!(lim.dx_diff_min_crystal, 0.98e-6, epsilon = 0.02e-6);
        assert!(lim.dx_diff_min_crystal < lim.dx_diff_min_divergence);
        assert_eq!(lim.dx_diff_min, lim.dx_diff_min_divergence);
        assert_abs_diff_eq!(lim.product_floor, 0.0564, epsilon = 5e-4);
    }

    #[test]
    fn limits_monotonicity() {
        let base = reference_train();
        let lim0 = physical_limits(&base).unwrap();

        let mut wide_pump = base;
        wide_pump.pump_waist *= 2.0;
        wide_pump.pump_divergence /= 2.0; // keep the pump diffraction-limited
        let lim1 = physical_limits(&wide_pump).unwrap();
        assert!(lim1.dp_sum_min_pump < lim0.dp_sum_min_pump);

        let mut diverging = base;
        diverging.signal_divergence *= 2.0;
        let lim2 = physical_limits(&diverging).unwrap();
        assert!(lim2.dx_diff_min_divergence < lim0.dx_diff_min_divergence);
        assert!(lim2.dx_diff_min_crystal > lim0.dx_diff_min_crystal);
    }

    #[test]
    fn floor_check_reference_and_flagging() {
        let lim = physical_limits(&reference_train()).unwrap();
        let ok = product_floor_check(&lim, 0.16).unwrap();
        assert!(!ok.suspicious);
        assert_abs_diff_eq!(ok.ratio, 2.86, epsilon = 0.06);
        let bad = product_floor_check(&lim, 0.01).unwrap();
        assert!(bad.suspicious);
        assert!(product_floor_check(&lim, 0.0).is_err());
    }

    #[test]
    fn mode_limited_bounds_values() {
        assert_eq!(mode_limited_bounds(1.0).unwrap(), (0.25, 1.0));
        let (lo, hi) = mode_limited_bounds(1.215).unwrap();
        assert_abs_diff_eq!(lo, 0.169, epsilon = 5e-4);
        assert_eq!(hi, 1.0);
        assert_relative_eq!(mode_limited_bounds(2.0).unwrap().0, 0.0625);
        assert!(mode_limited_bounds(0.9).is_err());
    }

    #[test]
    fn degeneracy_warning_fires_for_mismatched_wavevectors() {
        let mut train = reference_train();
        assert!(train.validate().unwrap().is_empty());
        train.signal_wavevector *= 1.2;
        assert_eq!(train.validate().unwrap().len(), 1);
    }

    #[test]
    fn model_measurement_round_trip_preserves_rho() {
        let train = reference_train();
        for plane in [Plane::NearField, Plane::FarField] {
            let sigma = match plane {
                Plane::NearField => 39.7e-6,
                Plane::FarField => 15_300.0,
            };
            let m = CorrelationModel::equal_width(plane, Axis::X, sigma, 0.53).unwrap();
            let meas = model_to_measurement(&m, &train).unwrap();
            assert_relative_eq!(meas.rho(), 0.53, epsilon = 1e-12);
            let back = model_to_source(&meas, &train).unwrap();
            assert_relative_eq!(back.sigma_1(), sigma, max_relative = 1e-12);
        }
    }

    #[test]
    fn farfield_measurement_width_fits_scan_window() {
        // σ_p = 15300 ħ/m maps to ≈ 8.4 μm of probe travel
        let train = reference_train();
        let m = CorrelationModel::equal_width(Plane::FarField, Axis::X, 15_300.0, -0.77).unwrap();
        let meas = model_to_measurement(&m, &train).unwrap();
        assert_abs_diff_eq!(meas.sigma_1(), 8.39e-6, epsilon = 0.02e-6);
    }
}
