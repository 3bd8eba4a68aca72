//! Bivariate Gaussian correlation models for one conjugate plane.
//!
//! A [`CorrelationModel`] describes the joint statistics of the two probe
//! coordinates (x₁, x₂) — or (p₁, p₂) in the far field — as a bivariate
//! normal with first moments and a 2×2 covariance matrix. The module also
//! provides the sum/difference coordinate transforms used by the
//! non-separability criteria and the principal-axis (rotated ellipse)
//! parameterization used by the fitter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Conjugate measurement plane of the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    /// Imaged crystal plane; coordinates are positions (m).
    #[serde(rename = "near")]
    NearField,
    /// Imaged Fourier plane; coordinates map to transverse momenta (ħ/m).
    #[serde(rename = "far")]
    FarField,
}

impl std::fmt::Display for Plane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Plane::NearField => write!(f, "near"),
            Plane::FarField => write!(f, "far"),
        }
    }
}

/// Transverse axis of the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::X => write!(f, "x"),
            Axis::Y => write!(f, "y"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("width must be strictly positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("variance must be strictly positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("correlation coefficient must lie in [-1, 1], got {0}")]
    RhoOutOfRange(f64),
    #[error("covariance {cov:?} violates positive semidefiniteness (var product {var_product:?})")]
    NotPositiveSemidefinite { cov: f64, var_product: f64 },
    #[error("degenerate covariance (|rho| = 1): the density is a line measure")]
    DegenerateDensity,
    #[error("sum and difference widths cannot both be zero")]
    ZeroWidths,
    #[error("principal-axis angle must lie in (-90, 90] degrees, got {0}")]
    AngleOutOfRange(f64),
}

/// 2×2 covariance matrix of the two probe coordinates, with validated
/// positive semidefiniteness.
///
/// Units are m² in position planes and (ħ/m)² in momentum planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix2 {
    var_1: f64,
    var_2: f64,
    cov_12: f64,
}

impl CovarianceMatrix2 {
    /// Build from the two variances and the covariance.
    pub fn from_variances(var_1: f64, var_2: f64, cov_12: f64) -> Result<Self, ModelError> {
        if !var_1.is_finite() || var_1 <= 0.0 {
            return Err(ModelError::NonPositiveVariance(var_1));
        }
        if !var_2.is_finite() || var_2 <= 0.0 {
            return Err(ModelError::NonPositiveVariance(var_2));
        }
        let var_product = var_1 * var_2;
        if cov_12 * cov_12 > var_product * (1.0 + 1e-12) {
            return Err(ModelError::NotPositiveSemidefinite {
                cov: cov_12,
                var_product,
            });
        }
        Ok(Self {
            var_1,
            var_2,
            cov_12,
        })
    }

    /// Build from standard deviations and a correlation coefficient, so that
    /// `var_1 = sigma_1²`, `var_2 = sigma_2²` and `cov_12 = rho·sigma_1·sigma_2`.
    pub fn from_sigmas(sigma_1: f64, sigma_2: f64, rho: f64) -> Result<Self, ModelError> {
        if !sigma_1.is_finite() || sigma_1 <= 0.0 {
            return Err(ModelError::NonPositiveSigma(sigma_1));
        }
        if !sigma_2.is_finite() || sigma_2 <= 0.0 {
            return Err(ModelError::NonPositiveSigma(sigma_2));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(ModelError::RhoOutOfRange(rho));
        }
        Ok(Self {
            var_1: sigma_1 * sigma_1,
            var_2: sigma_2 * sigma_2,
            cov_12: rho * sigma_1 * sigma_2,
        })
    }

    pub fn var_1(&self) -> f64 {
        self.var_1
    }

    pub fn var_2(&self) -> f64 {
        self.var_2
    }

    pub fn cov_12(&self) -> f64 {
        self.cov_12
    }

    pub fn sigma_1(&self) -> f64 {
        self.var_1.sqrt()
    }

    pub fn sigma_2(&self) -> f64 {
        self.var_2.sqrt()
    }

    /// Pearson correlation coefficient, guaranteed to lie in [-1, 1].
    pub fn rho(&self) -> f64 {
        (self.cov_12 / (self.var_1 * self.var_2).sqrt()).clamp(-1.0, 1.0)
    }

    pub fn determinant(&self) -> f64 {
        self.var_1 * self.var_2 - self.cov_12 * self.cov_12
    }

    /// Variance of the coordinate sum x₁ + x₂.
    pub fn sum_variance(&self) -> f64 {
        self.var_1 + self.var_2 + 2.0 * self.cov_12
    }

    /// Variance of the coordinate difference x₁ − x₂.
    pub fn diff_variance(&self) -> f64 {
        self.var_1 + self.var_2 - 2.0 * self.cov_12
    }
}

/// Principal-axis form of a model: ellipse orientation and axis widths.
///
/// `alpha_deg` is the angle of the first principal axis against the x₁
/// coordinate axis, normalized to (−90°, +90°]; `sigma_n ≥ sigma_m` by
/// convention (isotropic models report 0°).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedAxes {
    pub alpha_deg: f64,
    pub sigma_m: f64,
    pub sigma_n: f64,
}

/// Bivariate normal description of one conjugate plane.
///
/// Coordinates and first moments are in meters for position planes and in
/// ħ/m for momentum planes. Plane and axis tags are fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationModel {
    plane: Plane,
    axis: Axis,
    center_1: f64,
    center_2: f64,
    cov: CovarianceMatrix2,
}

impl CorrelationModel {
    pub fn new(
        plane: Plane,
        axis: Axis,
        center_1: f64,
        center_2: f64,
        cov: CovarianceMatrix2,
    ) -> Self {
        Self {
            plane,
            axis,
            center_1,
            center_2,
            cov,
        }
    }

    /// Centered model with equal marginal widths, the usual case for the
    /// two modes of a biphoton beam.
    pub fn equal_width(
        plane: Plane,
        axis: Axis,
        sigma_in: f64,
        rho: f64,
    ) -> Result<Self, ModelError> {
        Ok(Self::new(
            plane,
            axis,
            0.0,
            0.0,
            CovarianceMatrix2::from_sigmas(sigma_in, sigma_in, rho)?,
        ))
    }

    /// Build the covariance parameterization whose density equals the
    /// rotated-axis Gaussian
    /// `exp(−x_m²/(2σ_m²) − y_n²/(2σ_n²))` with
    /// `x_m = Δx₁·cos α − Δx₂·sin α`, `y_n = Δx₁·sin α + Δx₂·cos α`.
    pub fn from_rotated(
        plane: Plane,
        axis: Axis,
        alpha_deg: f64,
        sigma_m: f64,
        sigma_n: f64,
        center_1: f64,
        center_2: f64,
    ) -> Result<Self, ModelError> {
        if !sigma_m.is_finite() || sigma_m <= 0.0 {
            return Err(ModelError::NonPositiveSigma(sigma_m));
        }
        if !sigma_n.is_finite() || sigma_n <= 0.0 {
            return Err(ModelError::NonPositiveSigma(sigma_n));
        }
        if alpha_deg.is_nan() || alpha_deg <= -90.0 || alpha_deg > 90.0 {
            return Err(ModelError::AngleOutOfRange(alpha_deg));
        }
        let (s, c) = alpha_deg.to_radians().sin_cos();
        let (vm, vn) = (sigma_m * sigma_m, sigma_n * sigma_n);
        let var_1 = vm * c * c + vn * s * s;
        let var_2 = vm * s * s + vn * c * c;
        let cov_12 = (vn - vm) * s * c;
        Ok(Self::new(
            plane,
            axis,
            center_1,
            center_2,
            CovarianceMatrix2::from_variances(var_1, var_2, cov_12)?,
        ))
    }

    /// Principal-axis decomposition of the covariance.
    ///
    /// The returned angle is normalized to (−90°, +90°] with `sigma_n` the
    /// major-axis width; isotropic models report 0° by convention.
    pub fn to_rotated(&self) -> RotatedAxes {
        let (a, b, c) = (self.cov.var_1, self.cov.var_2, self.cov.cov_12);
        // (2c, b−a) is parallel to (sin 2α, cos 2α) scaled by σ_n² − σ_m²,
        // so the atan2 branch lands on the representative with σ_n ≥ σ_m.
        // Adding 0.0 turns a negative-zero covariance into +0.0, keeping
        // the angle inside (−90°, +90°].
        let two_alpha = (2.0 * c + 0.0).atan2(b - a);
        let alpha = 0.5 * two_alpha;
        let (s, co) = alpha.sin_cos();
        let var_m = (co * co * a - 2.0 * s * co * c + s * s * b).max(0.0);
        let var_n = (s * s * a + 2.0 * s * co * c + co * co * b).max(0.0);
        RotatedAxes {
            alpha_deg: alpha.to_degrees(),
            sigma_m: var_m.sqrt(),
            sigma_n: var_n.sqrt(),
        }
    }

    pub fn plane(&self) -> Plane {
        self.plane
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn center_1(&self) -> f64 {
        self.center_1
    }

    pub fn center_2(&self) -> f64 {
        self.center_2
    }

    pub fn covariance(&self) -> &CovarianceMatrix2 {
        &self.cov
    }

    pub fn sigma_1(&self) -> f64 {
        self.cov.sigma_1()
    }

    pub fn sigma_2(&self) -> f64 {
        self.cov.sigma_2()
    }

    pub fn rho(&self) -> f64 {
        self.cov.rho()
    }

    /// Quadratic form Δᵀ Σ⁻¹ Δ of the density exponent; zero at the centers.
    pub fn quadratic_form(&self, point_1: f64, point_2: f64) -> Result<f64, ModelError> {
        let det = self.cov.determinant();
        if det <= 0.0 {
            return Err(ModelError::DegenerateDensity);
        }
        let d1 = point_1 - self.center_1;
        let d2 = point_2 - self.center_2;
        Ok((self.cov.var_2 * d1 * d1 - 2.0 * self.cov.cov_12 * d1 * d2 + self.cov.var_1 * d2 * d2)
            / det)
    }

    /// Normalized bivariate normal density at (point_1, point_2).
    ///
    /// Fails for degenerate covariances (|ρ| = 1), where the distribution
    /// collapses onto a line and has no density.
    pub fn pdf(&self, point_1: f64, point_2: f64) -> Result<f64, ModelError> {
        let det = self.cov.determinant();
        if det <= 0.0 {
            return Err(ModelError::DegenerateDensity);
        }
        let q = self.quadratic_form(point_1, point_2)?;
        Ok((-0.5 * q).exp() / (2.0 * PI * det.sqrt()))
    }

    /// Widths along the sum/difference coordinates, computed from the
    /// covariance (valid for unequal marginal widths as well).
    pub fn sum_diff_widths(&self) -> SumDiffWidths {
        SumDiffWidths::from_sum_diff(
            0.5 * self.cov.sum_variance().sqrt(),
            0.5 * self.cov.diff_variance().sqrt(),
        )
    }

    /// Effective single-mode width: RMS of the two marginal widths.
    ///
    /// Together with [`CorrelationModel::rho_sum_diff`] this keeps
    /// `2σ_in²(1∓ρ)` exactly equal to the variances of the difference/sum
    /// coordinates even for slightly unequal marginals.
    pub fn sigma_in(&self) -> f64 {
        (0.5 * (self.cov.var_1 + self.cov.var_2)).sqrt()
    }

    /// Correlation coefficient in the sum/difference-width form
    /// (σ_s² − σ_t²)/(σ_s² + σ_t²); equals the Pearson ρ for equal widths.
    pub fn rho_sum_diff(&self) -> f64 {
        let w = self.sum_diff_widths();
        rho_from_widths(w.sigma_s, w.sigma_t).expect("positive-definite covariance")
    }
}

/// JSON shape of a [`CorrelationModel`]: widths and correlation coefficient.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    plane: Plane,
    axis: Axis,
    center_1: f64,
    center_2: f64,
    sigma_1: f64,
    sigma_2: f64,
    rho: f64,
}

impl Serialize for CorrelationModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ModelJson {
            plane: self.plane,
            axis: self.axis,
            center_1: self.center_1,
            center_2: self.center_2,
            sigma_1: self.sigma_1(),
            sigma_2: self.sigma_2(),
            rho: self.rho(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CorrelationModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = ModelJson::deserialize(deserializer)?;
        let cov = CovarianceMatrix2::from_sigmas(raw.sigma_1, raw.sigma_2, raw.rho)
            .map_err(serde::de::Error::custom)?;
        Ok(CorrelationModel::new(
            raw.plane, raw.axis, raw.center_1, raw.center_2, cov,
        ))
    }
}

/// Widths along the sum/difference coordinates.
///
/// `s = (x₁+x₂)/2`, `t = (x₂−x₁)/2` keep the metric of a two-probe scan;
/// `u = x₁+x₂`, `v = x₁−x₂` are the unscaled diagonals, so `σ_u = 2σ_s`
/// and `σ_v = 2σ_t` always hold. `σ_v` is the width Δ(x₁−x₂) entering the
/// variance-product criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SumDiffWidths {
    pub sigma_s: f64,
    pub sigma_t: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
}

impl SumDiffWidths {
    fn from_sum_diff(sigma_s: f64, sigma_t: f64) -> Self {
        Self {
            sigma_s,
            sigma_t,
            sigma_u: 2.0 * sigma_s,
            sigma_v: 2.0 * sigma_t,
        }
    }
}

/// Sum/difference widths of an equal-width model:
/// `σ_s = σ_in·√((1+ρ)/2)`, `σ_t = σ_in·√((1−ρ)/2)`.
pub fn sum_diff_widths(sigma_in: f64, rho: f64) -> Result<SumDiffWidths, ModelError> {
    if !sigma_in.is_finite() || sigma_in <= 0.0 {
        return Err(ModelError::NonPositiveSigma(sigma_in));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(ModelError::RhoOutOfRange(rho));
    }
    Ok(SumDiffWidths::from_sum_diff(
        sigma_in * (0.5 * (1.0 + rho)).sqrt(),
        sigma_in * (0.5 * (1.0 - rho)).sqrt(),
    ))
}

/// Correlation coefficient from the sum/difference widths:
/// ρ = (σ_s² − σ_t²)/(σ_s² + σ_t²). Inverse of [`sum_diff_widths`].
pub fn rho_from_widths(sigma_s: f64, sigma_t: f64) -> Result<f64, ModelError> {
    if sigma_s < 0.0 || sigma_t < 0.0 {
        return Err(ModelError::NonPositiveSigma(sigma_s.min(sigma_t)));
    }
    let (s2, t2) = (sigma_s * sigma_s, sigma_t * sigma_t);
    if s2 + t2 == 0.0 {
        return Err(ModelError::ZeroWidths);
    }
    Ok((s2 - t2) / (s2 + t2))
}

/// Width of the conditional slice of the coincidence map along x₁ at fixed
/// x₂ = center: `σ_in·√(1−ρ²)`.
pub fn conditional_sigma(sigma_in: f64, rho: f64) -> Result<f64, ModelError> {
    if !sigma_in.is_finite() || sigma_in <= 0.0 {
        return Err(ModelError::NonPositiveSigma(sigma_in));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(ModelError::RhoOutOfRange(rho));
    }
    Ok(sigma_in * (1.0 - rho * rho).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SIGMA_X_IN: f64 = 39.7e-6;
    const RHO_X: f64 = 0.53;

    #[test]
    fn covariance_from_sigmas_uncorrelated_identity() {
        let cov = CovarianceMatrix2::from_sigmas(1.0, 1.0, 0.0).unwrap();
        assert_eq!(cov.var_1(), 1.0);
        assert_eq!(cov.var_2(), 1.0);
        assert_eq!(cov.cov_12(), 0.0);
    }

    #[test]
    fn covariance_from_sigmas_reference_nearfield() {
        let cov = CovarianceMatrix2::from_sigmas(SIGMA_X_IN, SIGMA_X_IN, RHO_X).unwrap();
        assert_relative_eq!(cov.cov_12(), 0.53 * SIGMA_X_IN * SIGMA_X_IN, epsilon = 1e-18);
        assert_relative_eq!(cov.rho(), RHO_X, epsilon = 1e-12);
    }

    #[test]
    fn covariance_determinant_matches_arithmetic() {
        // det = var_1·var_2·(1−ρ²) = 36·0.75 = 27
        let cov = CovarianceMatrix2::from_sigmas(2.0, 3.0, -0.5).unwrap();
        assert_eq!(cov.cov_12(), -3.0);
        assert_relative_eq!(cov.determinant(), 27.0, epsilon = 1e-12);
    }

    #[test]
    fn covariance_rejects_bad_inputs() {
        assert!(matches!(
            CovarianceMatrix2::from_sigmas(-1.0, 1.0, 0.0),
            Err(ModelError::NonPositiveSigma(_))
        ));
        assert!(matches!(
            CovarianceMatrix2::from_sigmas(1.0, 1.0, 1.5),
            Err(ModelError::RhoOutOfRange(_))
        ));
        assert!(matches!(
            CovarianceMatrix2::from_variances(1.0, 1.0, 1.1),
            Err(ModelError::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn pdf_standard_normal_peak() {
        let m = CorrelationModel::equal_width(Plane::NearField, Axis::X, 1.0, 0.0).unwrap();
        assert_relative_eq!(m.pdf(0.0, 0.0).unwrap(), 1.0 / (2.0 * PI), epsilon = 1e-15);
    }

    #[test]
    fn pdf_degenerate_rho_is_rejected() {
        let m = CorrelationModel::equal_width(Plane::NearField, Axis::X, 1.0, 1.0).unwrap();
        assert_eq!(m.pdf(0.1, 0.1), Err(ModelError::DegenerateDensity));
    }

    #[test]
    fn pdf_symmetric_under_joint_swap() {
        let cov = CovarianceMatrix2::from_sigmas(1.3, 0.7, 0.4).unwrap();
        let m = CorrelationModel::new(Plane::NearField, Axis::X, 0.2, -0.1, cov);
        let cov_swapped = CovarianceMatrix2::from_sigmas(0.7, 1.3, 0.4).unwrap();
        let m_swapped = CorrelationModel::new(Plane::NearField, Axis::X, -0.1, 0.2, cov_swapped);
        for &(a, b) in &[(0.3, -0.5), (1.1, 0.9), (-0.2, 0.4)] {
            assert_relative_eq!(
                m.pdf(a, b).unwrap(),
                m_swapped.pdf(b, a).unwrap(),
                epsilon = 1e-15
            );
        }
    }

    /// For equal widths the general density must agree with the specialized
    /// closed form exp(−(x₁²+x₂²−2ρx₁x₂)/(2σ²(1−ρ²)))/(2πσ²√(1−ρ²)).
    #[test]
    fn pdf_matches_equal_width_closed_form() {
        let (sigma, rho) = (1.7, 0.62);
        let m = CorrelationModel::equal_width(Plane::NearField, Axis::X, sigma, rho).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x1: f64 = rng.gen_range(-3.0 * sigma..3.0 * sigma);
            let x2: f64 = rng.gen_range(-3.0 * sigma..3.0 * sigma);
            let norm = 2.0 * PI * sigma * sigma * (1.0 - rho * rho).sqrt();
            let expected = (-(x1 * x1 + x2 * x2 - 2.0 * rho * x1 * x2)
                / (2.0 * sigma * sigma * (1.0 - rho * rho)))
                .exp()
                / norm;
            assert_relative_eq!(m.pdf(x1, x2).unwrap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn sum_diff_widths_no_correlation_shrinks_by_sqrt2() {
        let w = sum_diff_widths(2.0, 0.0).unwrap();
        assert_relative_eq!(w.sigma_s, 2.0 / 2.0_f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w.sigma_t, 2.0 / 2.0_f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn sum_diff_widths_perfect_correlation() {
        let w = sum_diff_widths(2.0, 1.0).unwrap();
        assert_eq!(w.sigma_t, 0.0);
        assert_relative_eq!(w.sigma_s, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn sum_diff_widths_reference_difference_width() {
        // σ_v = √(2σ²(1−ρ)) = 38.5 μm for σ = 39.7 μm, ρ = 0.53
        let w = sum_diff_widths(SIGMA_X_IN, RHO_X).unwrap();
        assert_relative_eq!(
            w.sigma_v,
            (2.0 * SIGMA_X_IN * SIGMA_X_IN * (1.0 - RHO_X)).sqrt(),
            epsilon = 1e-18
        );
        assert_abs_diff_eq!(w.sigma_v, 38.5e-6, epsilon = 0.05e-6);
        assert_eq!(w.sigma_u, 2.0 * w.sigma_s);
        assert_eq!(w.sigma_v, 2.0 * w.sigma_t);
    }

    #[test]
    fn moment_consistency_s2_plus_t2() {
        for rho in [-0.9, -0.3, 0.0, 0.4, 0.97] {
            let w = sum_diff_widths(1.3, rho).unwrap();
            assert_relative_eq!(
                w.sigma_s * w.sigma_s + w.sigma_t * w.sigma_t,
                1.3 * 1.3,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn rho_from_widths_isotropic_is_zero() {
        assert_eq!(rho_from_widths(1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn rho_from_widths_round_trip() {
        let w = sum_diff_widths(5.0, 0.8).unwrap();
        assert_relative_eq!(
            rho_from_widths(w.sigma_s, w.sigma_t).unwrap(),
            0.8,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rho_from_widths_reference_value() {
        // forward widths for ρ = 0.53, then invert
        let w = sum_diff_widths(1.0, RHO_X).unwrap();
        assert_abs_diff_eq!(w.sigma_s, 0.875, epsilon = 5e-4);
        assert_abs_diff_eq!(w.sigma_t, 0.485, epsilon = 5e-4);
        assert_relative_eq!(
            rho_from_widths(w.sigma_s, w.sigma_t).unwrap(),
            RHO_X,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rho_from_widths_rejects_double_zero() {
        assert_eq!(rho_from_widths(0.0, 0.0), Err(ModelError::ZeroWidths));
    }

    #[test]
    fn conditional_sigma_limits() {
        assert_relative_eq!(conditional_sigma(2.0, 0.0).unwrap(), 2.0);
        assert_eq!(conditional_sigma(2.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn conditional_sigma_reference_value() {
        let s = conditional_sigma(SIGMA_X_IN, RHO_X).unwrap();
        assert_abs_diff_eq!(s, 33.66e-6, epsilon = 0.01e-6);
    }

    /// The conditional width equals the width of a Gaussian fitted to the
    /// density slice along x₁ at x₂ = 0 (exact log-parabola regression).
    #[test]
    fn conditional_sigma_matches_density_slice() {
        let m =
            CorrelationModel::equal_width(Plane::NearField, Axis::X, SIGMA_X_IN, RHO_X).unwrap();
        let expected = conditional_sigma(SIGMA_X_IN, RHO_X).unwrap();
        // regress ln pdf(x1, 0) on x1²: slope = −1/(2σ²)
        let n = 41;
        let (mut sxx, mut sxy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let x1 = (i as f64 / (n - 1) as f64 - 0.5) * 4.0 * expected;
            let u = x1 * x1;
            let y = m.pdf(x1, 0.0).unwrap().ln();
            sxx += u * u;
            sxy += u * y;
            sx += u;
            sy += y;
        }
        let nf = n as f64;
        let slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
        let sigma_slice = (-0.5 / slope).sqrt();
        assert_relative_eq!(sigma_slice, expected, max_relative = 1e-9);
    }

    #[test]
    fn rotated_axis_aligned() {
        let m =
            CorrelationModel::from_rotated(Plane::NearField, Axis::X, 0.0, 2.0, 3.0, 0.0, 0.0)
                .unwrap();
        assert_relative_eq!(m.covariance().var_1(), 4.0, epsilon = 1e-14);
        assert_relative_eq!(m.covariance().var_2(), 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.covariance().cov_12(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rotated_45_degrees_expansion() {
        // at α = 45°: var_1 = var_2 = (σ_m²+σ_n²)/2, cov = (σ_n²−σ_m²)/2
        let (sm, sn) = (1.5, 2.5);
        let m =
            CorrelationModel::from_rotated(Plane::NearField, Axis::X, 45.0, sm, sn, 0.0, 0.0)
                .unwrap();
        assert_relative_eq!(
            m.covariance().var_1(),
            (sm * sm + sn * sn) / 2.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            m.covariance().var_2(),
            (sm * sm + sn * sn) / 2.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            m.covariance().cov_12(),
            (sn * sn - sm * sm) / 2.0,
            epsilon = 1e-14
        );
    }

    /// The rotated form and the covariance form must be the same density.
    #[test]
    fn rotated_density_equals_covariance_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let alpha: f64 = rng.gen_range(-89.9..90.0);
            let sm: f64 = rng.gen_range(0.5..2.0);
            let sn: f64 = rng.gen_range(0.5..2.0);
            let (c1, c2): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let m = CorrelationModel::from_rotated(
                Plane::NearField,
                Axis::X,
                alpha,
                sm,
                sn,
                c1,
                c2,
            )
            .unwrap();
            let (s, c) = alpha.to_radians().sin_cos();
            for _ in 0..5 {
                let x1: f64 = rng.gen_range(-4.0..4.0);
                let x2: f64 = rng.gen_range(-4.0..4.0);
                let (d1, d2) = (x1 - c1, x2 - c2);
                let xm = d1 * c - d2 * s;
                let yn = d1 * s + d2 * c;
                let expected_exponent = -xm * xm / (2.0 * sm * sm) - yn * yn / (2.0 * sn * sn);
                assert_relative_eq!(
                    -0.5 * m.quadratic_form(x1, x2).unwrap(),
                    expected_exponent,
                    max_relative = 1e-10,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn principal_axes_isotropic_reports_zero_angle() {
        let m = CorrelationModel::equal_width(Plane::NearField, Axis::X, 1.0, 0.0).unwrap();
        let r = m.to_rotated();
        assert_eq!(r.alpha_deg, 0.0);
        assert_relative_eq!(r.sigma_m, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.sigma_n, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn principal_axes_reference_nearfield_model() {
        let m =
            CorrelationModel::equal_width(Plane::NearField, Axis::X, SIGMA_X_IN, RHO_X).unwrap();
        let r = m.to_rotated();
        assert_relative_eq!(r.alpha_deg, 45.0, epsilon = 1e-9);
        // anti-diagonal (minor) width σ_in√(1−ρ), diagonal (major) σ_in√(1+ρ)
        assert_abs_diff_eq!(r.sigma_m, 27.2e-6, epsilon = 0.05e-6);
        assert_abs_diff_eq!(r.sigma_n, 49.1e-6, epsilon = 0.05e-6);
        assert_relative_eq!(r.sigma_m, SIGMA_X_IN * (1.0 - RHO_X).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r.sigma_n, SIGMA_X_IN * (1.0 + RHO_X).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn principal_axes_anticorrelated_is_minus_45() {
        let m = CorrelationModel::equal_width(Plane::FarField, Axis::X, 1.0, -0.77).unwrap();
        let r = m.to_rotated();
        assert_relative_eq!(r.alpha_deg, -45.0, epsilon = 1e-9);
        assert!(r.sigma_n > r.sigma_m);
    }

    #[test]
    fn negative_zero_covariance_stays_in_the_canonical_branch() {
        let cov = CovarianceMatrix2::from_sigmas(2.0, 1.0, -0.0).unwrap();
        let r = CorrelationModel::new(Plane::NearField, Axis::X, 0.0, 0.0, cov).to_rotated();
        assert_eq!(r.alpha_deg, 90.0);
        assert_relative_eq!(r.sigma_m, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.sigma_n, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rotated_round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            // canonical inputs: σ_m < σ_n, α in (−90, 90]
            let sm: f64 = rng.gen_range(0.4..1.4);
            let sn: f64 = sm * rng.gen_range(1.05..3.0);
            let alpha: f64 = rng.gen_range(-89.99..90.0);
            let m = CorrelationModel::from_rotated(
                Plane::NearField,
                Axis::X,
                alpha,
                sm,
                sn,
                0.0,
                0.0,
            )
            .unwrap();
            let r = m.to_rotated();
            assert_relative_eq!(r.alpha_deg, alpha, max_relative = 1e-10, epsilon = 1e-9);
            assert_relative_eq!(r.sigma_m, sm, max_relative = 1e-10);
            assert_relative_eq!(r.sigma_n, sn, max_relative = 1e-10);
            // and back: covariance rebuilt from the decomposition matches
            let m2 = CorrelationModel::from_rotated(
                Plane::NearField,
                Axis::X,
                r.alpha_deg,
                r.sigma_m,
                r.sigma_n,
                0.0,
                0.0,
            )
            .unwrap();
            assert_relative_eq!(
                m2.covariance().var_1(),
                m.covariance().var_1(),
                max_relative = 1e-10
            );
            assert_relative_eq!(
                m2.covariance().var_2(),
                m.covariance().var_2(),
                max_relative = 1e-10
            );
            assert_relative_eq!(
                m2.covariance().cov_12(),
                m.covariance().cov_12(),
                max_relative = 1e-10,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn model_json_round_trip() {
        let m =
            CorrelationModel::equal_width(Plane::FarField, Axis::Y, 15300.0, -0.77).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"plane\":\"far\""));
        assert!(json.contains("\"axis\":\"y\""));
        assert!(json.contains("\"sigma_1\""));
        let back: CorrelationModel = serde_json::from_str(&json).unwrap();
        assert_relative_eq!(back.sigma_1(), 15300.0, epsilon = 1e-9);
        assert_relative_eq!(back.rho(), -0.77, epsilon = 1e-12);
    }

    #[test]
    fn model_json_rejects_unknown_fields() {
        let json = r#"{"plane":"near","axis":"x","center_1":0,"center_2":0,
                       "sigma_1":1,"sigma_2":1,"rho":0,"extra":1}"#;
        assert!(serde_json::from_str::<CorrelationModel>(json).is_err());
    }
}
