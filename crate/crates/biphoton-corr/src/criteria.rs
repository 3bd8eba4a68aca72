//! Non-separability criteria for the measured correlations.
//!
//! The variance-product criterion certifies entanglement when
//! Δ²(x₁−x₂)·Δ²(p₁+p₂) < ħ². With the covariance parameters of the two
//! conjugate planes it reads 2σ_x²(1−ρ_x)·2σ_p²(1+ρ_p) < ħ², and with the
//! phase-cell count M² = 2σ_x·σ_p/ħ it becomes (1−ρ_x)(1+ρ_p)(M²)² < 1.
//! All three forms are algebraically identical; the report carries them
//! side by side together with the physical floors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{Axis, Plane};
use crate::fitter::{FitError, FitResult};
use crate::optics::{
    mode_limited_bounds, model_to_source, physical_limits, product_floor_check, FloorCheck,
    OpticalTrain, OpticsError, PhysicalLimits,
};

#[derive(Debug, Error)]
pub enum CriteriaError {
    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("correlation coefficient must lie in [-1, 1], got {0}")]
    RhoOutOfRange(f64),
    #[error("M^2 must be >= 1, got {0}")]
    MSquaredBelowOne(f64),
    #[error("expected a {expected} fit, got {got}")]
    PlaneMismatch { expected: Plane, got: Plane },
    #[error("fits are for different axes ({near} vs {far})")]
    AxisMismatch { near: Axis, far: Axis },
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Outcome of a non-separability test. Exact equality with the bound is
/// `NotProven` — the criterion is a strict inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Entangled,
    NotProven,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Entangled => write!(f, "entangled"),
            Verdict::NotProven => write!(f, "not proven"),
        }
    }
}

fn verdict_for(value: f64) -> Verdict {
    if value < 1.0 {
        Verdict::Entangled
    } else {
        Verdict::NotProven
    }
}

/// Variance-product criterion from the raw variances (ħ-normalized units):
/// the product Δ²(x₁−x₂)·Δ²(p₁+p₂) and its verdict against ħ².
pub fn mancini_product(var_x_diff: f64, var_p_sum: f64) -> Result<(f64, Verdict), CriteriaError> {
    if !var_x_diff.is_finite() || var_x_diff <= 0.0 {
        return Err(CriteriaError::NonPositive {
            name: "var_x_diff",
            value: var_x_diff,
        });
    }
    if !var_p_sum.is_finite() || var_p_sum <= 0.0 {
        return Err(CriteriaError::NonPositive {
            name: "var_p_sum",
            value: var_p_sum,
        });
    }
    let value = var_x_diff * var_p_sum;
    Ok((value, verdict_for(value)))
}

/// Variance-product criterion from covariance parameters:
/// 2σ_x²(1−ρ_x) · 2σ_p²(1+ρ_p), in ħ².
pub fn mancini_from_covariance(
    sigma_x_in: f64,
    rho_x: f64,
    sigma_p_in: f64,
    rho_p: f64,
) -> Result<(f64, Verdict), CriteriaError> {
    for (name, value) in [("sigma_x_in", sigma_x_in), ("sigma_p_in", sigma_p_in)] {
        if !value.is_finite() || value <= 0.0 {
            return Err(CriteriaError::NonPositive { name, value });
        }
    }
    for rho in [rho_x, rho_p] {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(CriteriaError::RhoOutOfRange(rho));
        }
    }
    let var_x_diff = 2.0 * sigma_x_in * sigma_x_in * (1.0 - rho_x);
    let var_p_sum = 2.0 * sigma_p_in * sigma_p_in * (1.0 + rho_p);
    let value = var_x_diff * var_p_sum;
    Ok((value, verdict_for(value)))
}

/// Phase-cell count of the beam: M² = 2σ_x·σ_p (ħ-normalized), the ratio of
/// the phase-space volume σ_x·σ_p to a single phase cell ħ/2. Values below 1
/// are unphysical for a proper beam; callers should surface a warning.
pub fn m_squared(sigma_x: f64, sigma_p: f64) -> Result<f64, CriteriaError> {
    for (name, value) in [("sigma_x", sigma_x), ("sigma_p", sigma_p)] {
        if !value.is_finite() || value <= 0.0 {
            return Err(CriteriaError::NonPositive { name, value });
        }
    }
    Ok(2.0 * sigma_x * sigma_p)
}

/// Result of the M²-form covariance criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCriterion {
    /// (1−ρ_x)(1+ρ_p)(M²)².
    pub value: f64,
    pub verdict: Verdict,
    /// Mode-limited floor 1/(2M²)² for context.
    pub lower_bound: f64,
}

/// Covariance criterion for non-separability: (1−ρ_x)(1+ρ_p)(M²)² < 1.
pub fn covariance_criterion(
    rho_x: f64,
    rho_p: f64,
    m_squared: f64,
) -> Result<CovarianceCriterion, CriteriaError> {
    for rho in [rho_x, rho_p] {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(CriteriaError::RhoOutOfRange(rho));
        }
    }
    if !m_squared.is_finite() || m_squared < 1.0 {
        return Err(CriteriaError::MSquaredBelowOne(m_squared));
    }
    let value = (1.0 - rho_x) * (1.0 + rho_p) * m_squared * m_squared;
    let (lower_bound, _) = mode_limited_bounds(m_squared)?;
    Ok(CovarianceCriterion {
        value,
        verdict: verdict_for(value),
        lower_bound,
    })
}

/// Full evaluation of one axis: variance product, covariance parameters,
/// M², both criterion forms, physical floors and the verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionReport {
    pub axis: Axis,
    /// Δ²(x₁−x₂)·Δ²(p₁+p₂) in ħ² (the sum form; far-field anti-correlation
    /// makes the momentum sum the narrow quantity).
    pub var_product: f64,
    pub rho_x: f64,
    pub rho_p: f64,
    /// Effective single-mode position width at the crystal (m).
    pub sigma_x_in: f64,
    /// Effective single-mode momentum width (ħ/m).
    pub sigma_p_in: f64,
    /// Phase-cell count 2σ_x·σ_p.
    pub m_squared: f64,
    /// (1−ρ_x)(1+ρ_p)(M²)² — identical to `var_product` in ħ² units.
    pub m2_criterion_value: f64,
    /// Mode-limited floor 1/(2M²)², when M² ≥ 1.
    pub m2_criterion_lower: Option<f64>,
    pub verdict: Verdict,
    pub limits: Option<PhysicalLimits>,
    pub floor_check: Option<FloorCheck>,
    pub warnings: Vec<String>,
}

/// Compose the criterion report for one axis from a near-field fit and a
/// far-field fit (both in measurement-plane coordinates).
///
/// The fits are converted to crystal-plane position and transverse-momentum
/// units through `train`; widths and correlation coefficients are extracted
/// in the sum/difference form, which keeps the variance product and the
/// covariance form exactly equal even for slightly unequal marginals.
pub fn build_report(
    axis: Axis,
    near_fit: &FitResult,
    far_fit: &FitResult,
    train: &OpticalTrain,
) -> Result<CriterionReport, CriteriaError> {
    if near_fit.plane != Plane::NearField {
        return Err(CriteriaError::PlaneMismatch {
            expected: Plane::NearField,
            got: near_fit.plane,
        });
    }
    if far_fit.plane != Plane::FarField {
        return Err(CriteriaError::PlaneMismatch {
            expected: Plane::FarField,
            got: far_fit.plane,
        });
    }
    if near_fit.axis != axis || far_fit.axis != axis {
        return Err(CriteriaError::AxisMismatch {
            near: near_fit.axis,
            far: far_fit.axis,
        });
    }

    let near = model_to_source(&near_fit.to_model()?, train)?;
    let far = model_to_source(&far_fit.to_model()?, train)?;

    let sigma_x_in = near.sigma_in();
    let rho_x = near.rho_sum_diff();
    let sigma_p_in = far.sigma_in();
    let rho_p = far.rho_sum_diff();

    let var_x_diff = near.covariance().diff_variance();
    let var_p_sum = far.covariance().sum_variance();
    let (var_product, verdict) = mancini_product(var_x_diff, var_p_sum)?;

    let m2 = m_squared(sigma_x_in, sigma_p_in)?;
    let m2_criterion_value = (1.0 - rho_x) * (1.0 + rho_p) * m2 * m2;

    let mut warnings = Vec::new();
    let m2_criterion_lower = if m2 >= 1.0 {
        Some(mode_limited_bounds(m2)?.0)
    } else {
        warnings.push(format!(
            "M^2 = {m2:.4} is below one phase cell; fitted widths are \
             narrower than physical for a proper beam"
        ));
        None
    };

    let limits = physical_limits(train)?;
    let floor_check = product_floor_check(&limits, var_product)?;
    if floor_check.suspicious {
        warnings.push(format!(
            "measured product {:.4} undercuts the physical floor {:.4}; \
             possible over-deconvolution or fit artifact",
            var_product, limits.product_floor
        ));
    }

    Ok(CriterionReport {
        axis,
        var_product,
        rho_x,
        rho_p,
        sigma_x_in,
        sigma_p_in,
        m_squared: m2,
        m2_criterion_value,
        m2_criterion_lower,
        verdict,
        limits: Some(limits),
        floor_check: Some(floor_check),
        warnings,
    })
}

impl std::fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "non-separability report, {}-axis", self.axis)?;
        writeln!(
            f,
            "  sigma_x,in = {:.3} um   rho_x = {:+.4}",
            self.sigma_x_in * 1e6,
            self.rho_x
        )?;
        writeln!(
            f,
            "  sigma_p,in = {:.0} hbar/m   rho_p = {:+.4}",
            self.sigma_p_in, self.rho_p
        )?;
        writeln!(
            f,
            "  variance product  D2(x1-x2)*D2(p1+p2) = {:.4} hbar^2  (< 1 required)",
            self.var_product
        )?;
        writeln!(
            f,
            "  covariance form   (1-rho_x)(1+rho_p)(M^2)^2 = {:.4} with M^2 = {:.4}",
            self.m2_criterion_value, self.m_squared
        )?;
        match self.m2_criterion_lower {
            Some(lo) => writeln!(
                f,
                "  mode-limited bracket: {:.4} <= value < 1 (floor holds within a margin)",
                lo
            )?,
            None => writeln!(f, "  mode-limited bracket: n/a (M^2 < 1)")?,
        }
        if let Some(lim) = &self.limits {
            writeln!(
                f,
                "  physical floors: dp_sum >= {:.0} hbar/m, dx_diff >= {:.2} um \
                 (divergence {:.2} um, crystal {:.2} um)",
                lim.dp_sum_min_pump,
                lim.dx_diff_min * 1e6,
                lim.dx_diff_min_divergence * 1e6,
                lim.dx_diff_min_crystal * 1e6
            )?;
            writeln!(f, "  product floor: {:.4} hbar^2", lim.product_floor)?;
        }
        if let Some(chk) = &self.floor_check {
            writeln!(
                f,
                "  measured/floor ratio: {:.2}{}",
                chk.ratio,
                if chk.suspicious { "  ** BELOW FLOOR **" } else { "" }
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "  warning: {w}")?;
        }
        write!(f, "  verdict: {}", self.verdict)
    }
}
