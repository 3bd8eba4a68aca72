//! Damped least-squares estimation of the coincidence-rate surface.
//!
//! A line-scan record samples the coincidence rate over the (active,
//! passive) probe plane; the surface is a single 2D Gaussian peak in either
//! of two equivalent parameterizations:
//!
//! - rotated form: amplitude, centers, principal-axis angle α and widths
//!   (σ_m, σ_n) along the rotated axes;
//! - covariance form: amplitude, centers, marginal widths (σ₁, σ₂) and the
//!   correlation coefficient ρ.
//!
//! The optimizer is a Levenberg-damped Gauss-Newton iteration on the
//! normal equations with multiplicative damping updates (×10 on reject,
//! ÷10 on accept). Internally all six parameters are mapped to
//! unconstrained, order-one variables (centers and log-widths scaled by
//! the initial width, log-amplitude, atanh ρ, free angle) so iterates stay
//! feasible without constraint handling. Initialization is by
//! count-weighted moments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{Axis, CorrelationModel, CovarianceMatrix2, ModelError, Plane};
use crate::optics::OpticalTrain;
use crate::simulator::{DetectorSpec, ScanError, ScanProtocol, ScanRecord};

const MAX_ITERATIONS: usize = 200;
const PARAM_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-10;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e14;
const LAMBDA_MIN: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("insufficient data: {found} informative points, need at least {need}")]
    InsufficientData { found: usize, need: usize },
    #[error("rank-deficient curvature: the normal equations are singular")]
    RankDeficient,
    #[error("expected a covariance-form fit (convert with `as_covariance` first)")]
    WrongForm,
    #[error("fit expects a line-scan record, got a full-grid record")]
    WrongProtocol,
    #[error(
        "over-deconvolution: probe blur variance {blur_var:.3e} meets or exceeds \
         a fitted variance ({var_1:.3e}, {var_2:.3e})"
    )]
    OverDeconvolution {
        blur_var: f64,
        var_1: f64,
        var_2: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scan(#[from] ScanError),
}

/// Which parameterization the optimizer ran in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitForm {
    #[serde(rename = "rotated")]
    Rotated,
    #[serde(rename = "covariance")]
    Covariance,
}

/// Residual weighting of the rate samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    /// Unit weights; appropriate for noiseless rate surfaces.
    #[serde(rename = "uniform")]
    Uniform,
    /// Per-point variance max(count, 1), the Poisson estimate with a floor
    /// that keeps empty pixels from diverging. Observed-count weights bias
    /// the fitted widths low when typical counts are small (low-count
    /// pixels that fluctuate down get overweighted); prefer `Uniform` for
    /// records with fewer than a few tens of counts per informative pixel.
    #[serde(rename = "poisson")]
    PoissonVariance,
}

/// Fitted Gaussian surface with convergence diagnostics. Both parameter
/// forms are stored and kept exactly consistent; `form` records which one
/// the optimizer ran in. Coordinates are measurement-plane meters.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub plane: Plane,
    pub axis: Axis,
    pub form: FitForm,
    pub center_1: f64,
    pub center_2: f64,
    pub amplitude: f64,
    pub sigma_1: f64,
    pub sigma_2: f64,
    pub rho: f64,
    /// Principal-axis angle in (−90°, +90°], σ_n ≥ σ_m.
    pub alpha_deg: f64,
    pub sigma_m: f64,
    pub sigma_n: f64,
    /// Weighted sum of squared residuals at the solution.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Curvature-based 6×6 covariance of the natural parameters, ordered
    /// [center_1, center_2, amplitude, ρ|α(rad), σ₁|σ_m, σ₂|σ_n] per `form`.
    pub covariance_of_estimates: Option<[[f64; 6]; 6]>,
}

impl FitResult {
    /// Build a result from covariance-form parameters, filling the rotated
    /// form through the principal-axis decomposition.
    #[allow(clippy::too_many_arguments)]
    pub fn from_covariance_params(
        plane: Plane,
        axis: Axis,
        form: FitForm,
        center_1: f64,
        center_2: f64,
        amplitude: f64,
        sigma_1: f64,
        sigma_2: f64,
        rho: f64,
        residual_norm: f64,
        converged: bool,
        iterations: usize,
        covariance_of_estimates: Option<[[f64; 6]; 6]>,
    ) -> Result<Self, FitError> {
        let cov = CovarianceMatrix2::from_sigmas(sigma_1, sigma_2, rho)?;
        let model = CorrelationModel::new(plane, axis, center_1, center_2, cov);
        let rot = model.to_rotated();
        Ok(Self {
            plane,
            axis,
            form,
            center_1,
            center_2,
            amplitude,
            sigma_1,
            sigma_2,
            rho,
            alpha_deg: rot.alpha_deg,
            sigma_m: rot.sigma_m,
            sigma_n: rot.sigma_n,
            residual_norm,
            converged,
            iterations,
            covariance_of_estimates,
        })
    }

    /// The fitted correlation model (measurement-plane units).
    pub fn to_model(&self) -> Result<CorrelationModel, FitError> {
        Ok(CorrelationModel::new(
            self.plane,
            self.axis,
            self.center_1,
            self.center_2,
            CovarianceMatrix2::from_sigmas(self.sigma_1, self.sigma_2, self.rho)?,
        ))
    }

    /// The same result tagged as covariance form (the stored parameters are
    /// already both-form consistent). Estimate covariance is dropped when
    /// the form changes, as it refers to the fitted parameter set.
    pub fn as_covariance(&self) -> Self {
        if self.form == FitForm::Covariance {
            return self.clone();
        }
        Self {
            form: FitForm::Covariance,
            covariance_of_estimates: None,
            ..self.clone()
        }
    }

    /// Fitted rate at a probe configuration.
    pub fn rate(&self, x1: f64, x2: f64) -> Result<f64, FitError> {
        let q = self.to_model()?.quadratic_form(x1, x2)?;
        Ok(self.amplitude * (-0.5 * q).exp())
    }
}

/// Sum/difference widths of the fitted surface; the difference width σ_v
/// feeds Δ(x₁−x₂) and the sum width σ_u feeds Δ(x₁+x₂) in the criteria.
pub fn widths_for_criterion(
    fit: &FitResult,
) -> Result<crate::correlation::SumDiffWidths, FitError> {
    Ok(fit.to_model()?.sum_diff_widths())
}

/// Initial estimate from count-weighted moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentInit {
    pub center_1: f64,
    pub center_2: f64,
    pub sigma_1: f64,
    pub sigma_2: f64,
    pub rho: f64,
    pub amplitude: f64,
}

/// Count-weighted first/second moments of the coincidence map. Ignores the
/// probe blur; |ρ| is clamped to 0.95 so the starting point is feasible.
pub fn moment_init(record: &ScanRecord) -> Result<MomentInit, FitError> {
    let informative = record
        .points
        .iter()
        .filter(|p| p.coincidences > 0)
        .count();
    if informative < 6 {
        return Err(FitError::InsufficientData {
            found: informative,
            need: 6,
        });
    }
    let mut total = 0.0;
    let (mut m1, mut m2) = (0.0, 0.0);
    for p in &record.points {
        let c = p.coincidences as f64;
        total += c;
        m1 += c * record.active_coord(p);
        m2 += c * p.passive_pos;
    }
    m1 /= total;
    m2 /= total;
    let (mut v1, mut v2, mut c12) = (0.0, 0.0, 0.0);
    for p in &record.points {
        let c = p.coincidences as f64;
        let d1 = record.active_coord(p) - m1;
        let d2 = p.passive_pos - m2;
        v1 += c * d1 * d1;
        v2 += c * d2 * d2;
        c12 += c * d1 * d2;
    }
    v1 /= total;
    v2 /= total;
    c12 /= total;
    // keep widths off zero even for pathological count patterns
    let floor = record.plan.spacing / 2.0;
    let sigma_1 = v1.sqrt().max(floor);
    let sigma_2 = v2.sqrt().max(floor);
    let rho = (c12 / (sigma_1 * sigma_2)).clamp(-0.95, 0.95);
    let amplitude = record
        .points
        .iter()
        .map(|p| p.coincidences as f64 / record.plan.dwell_time)
        .fold(0.0, f64::max);
    Ok(MomentInit {
        center_1: m1,
        center_2: m2,
        sigma_1,
        sigma_2,
        rho,
        amplitude,
    })
}

#[derive(Clone)]
struct FitPoint {
    x1: f64,
    x2: f64,
    rate: f64,
    weight: f64,
}

fn fit_points(record: &ScanRecord, weights: WeightScheme) -> Result<Vec<FitPoint>, FitError> {
    if record.plan.protocol != ScanProtocol::LineScan {
        return Err(FitError::WrongProtocol);
    }
    let dwell = record.plan.dwell_time;
    Ok(record
        .points
        .iter()
        .map(|p| {
            let weight = match weights {
                WeightScheme::Uniform => 1.0,
                WeightScheme::PoissonVariance => dwell / (p.coincidences.max(1) as f64).sqrt(),
            };
            FitPoint {
                x1: record.active_coord(p),
                x2: p.passive_pos,
                rate: p.coincidences as f64 / dwell,
                weight,
            }
        })
        .collect())
}

/// Model value and Jacobian row (w.r.t. the six internal parameters) for
/// one data point.
trait SurfaceParam {
    fn decode(&self, theta: &[f64; 6]) -> NaturalParams;
    fn eval(&self, natural: &NaturalParams, x1: f64, x2: f64, jac: &mut [f64; 6]) -> f64;
    /// d(natural)/d(theta) diagonal, used to map the curvature back to
    /// natural parameters.
    fn chain(&self, natural: &NaturalParams) -> [f64; 6];
}

#[derive(Debug, Clone, Copy)]
struct NaturalParams {
    center_1: f64,
    center_2: f64,
    amplitude: f64,
    // covariance form: (rho, sigma_1, sigma_2); rotated: (alpha_rad, sigma_m, sigma_n)
    p3: f64,
    p4: f64,
    p5: f64,
}

struct CovarianceSurface {
    scale: f64,
}

impl SurfaceParam for CovarianceSurface {
    fn decode(&self, theta: &[f64; 6]) -> NaturalParams {
        NaturalParams {
            center_1: theta[0] * self.scale,
            center_2: theta[1] * self.scale,
            amplitude: theta[2].exp(),
            p3: theta[3].clamp(-15.0, 15.0).tanh(),
            p4: self.scale * theta[4].exp(),
            p5: self.scale * theta[5].exp(),
        }
    }

    fn eval(&self, n: &NaturalParams, x1: f64, x2: f64, jac: &mut [f64; 6]) -> f64 {
        let (rho, s1, s2) = (n.p3, n.p4, n.p5);
        let omr2 = 1.0 - rho * rho;
        let u1 = (x1 - n.center_1) / s1;
        let u2 = (x2 - n.center_2) / s2;
        let q = (u1 * u1 - 2.0 * rho * u1 * u2 + u2 * u2) / omr2;
        let value = n.amplitude * (-0.5 * q).exp();
        let g1 = (u1 - rho * u2) / omr2; // ∂(Q/2)/∂u1
        let g2 = (u2 - rho * u1) / omr2;
        let dq_drho = 2.0 * (rho * q - u1 * u2) / omr2;
        // dR/dp = −R/2 · dQ/dp, then the chain to internal variables
        jac[0] = value * g1 / s1 * self.scale; // center_1 via θ0·scale
        jac[1] = value * g2 / s2 * self.scale;
        jac[2] = value; // ln amplitude
        jac[3] = -0.5 * value * dq_drho * omr2; // atanh ρ: dρ/dθ = 1−ρ²
        jac[4] = value * g1 * u1; // ln σ1: dσ/dθ = σ, dQ/dσ1 = −2 g1 u1/σ1
        jac[5] = value * g2 * u2;
        value
    }

    fn chain(&self, n: &NaturalParams) -> [f64; 6] {
        [
            self.scale,
            self.scale,
            n.amplitude,
            1.0 - n.p3 * n.p3,
            n.p4,
            n.p5,
        ]
    }
}

struct RotatedSurface {
    scale: f64,
}

impl SurfaceParam for RotatedSurface {
    fn decode(&self, theta: &[f64; 6]) -> NaturalParams {
        NaturalParams {
            center_1: theta[0] * self.scale,
            center_2: theta[1] * self.scale,
            amplitude: theta[2].exp(),
            p3: theta[3],
            p4: self.scale * theta[4].exp(),
            p5: self.scale * theta[5].exp(),
        }
    }

    fn eval(&self, n: &NaturalParams, x1: f64, x2: f64, jac: &mut [f64; 6]) -> f64 {
        let (alpha, sm, sn) = (n.p3, n.p4, n.p5);
        let (s, c) = alpha.sin_cos();
        let d1 = x1 - n.center_1;
        let d2 = x2 - n.center_2;
        let xm = d1 * c - d2 * s;
        let yn = d1 * s + d2 * c;
        let (im2, in2) = (1.0 / (sm * sm), 1.0 / (sn * sn));
        let g = xm * xm * im2 + yn * yn * in2;
        let value = n.amplitude * (-0.5 * g).exp();
        jac[0] = value * (xm * c * im2 + yn * s * in2) * self.scale;
        jac[1] = value * (-xm * s * im2 + yn * c * in2) * self.scale;
        jac[2] = value;
        jac[3] = value * xm * yn * (im2 - in2); // ∂G/∂α = 2 xm yn (1/σn²−1/σm²)
        jac[4] = value * xm * xm * im2; // ln σm
        jac[5] = value * yn * yn * in2;
        value
    }

    fn chain(&self, n: &NaturalParams) -> [f64; 6] {
        [self.scale, self.scale, n.amplitude, 1.0, n.p4, n.p5]
    }
}

/// Fit the coincidence surface of a line-scan record.
///
/// Converges when both the relative parameter change drops below 1e-8 and
/// the relative residual change below 1e-10 within 200 iterations;
/// otherwise the best-so-far parameters are returned with
/// `converged = false`. Accepted steps never increase the weighted
/// residual.
pub fn fit(
    record: &ScanRecord,
    form: FitForm,
    weights: WeightScheme,
) -> Result<FitResult, FitError> {
    fit_with_cap(record, form, weights, MAX_ITERATIONS)
}

/// [`fit`] with an explicit iteration cap.
pub fn fit_with_cap(
    record: &ScanRecord,
    form: FitForm,
    weights: WeightScheme,
    max_iterations: usize,
) -> Result<FitResult, FitError> {
    let data = fit_points(record, weights)?;
    let init = moment_init(record)?;
    let scale = (init.sigma_1 * init.sigma_2).sqrt();
    let amplitude0 = init.amplitude.max(f64::MIN_POSITIVE);

    let theta0: [f64; 6];
    let outcome = match form {
        FitForm::Covariance => {
            theta0 = [
                init.center_1 / scale,
                init.center_2 / scale,
                amplitude0.ln(),
                init.rho.atanh(),
                (init.sigma_1 / scale).ln(),
                (init.sigma_2 / scale).ln(),
            ];
            lm_minimize(&CovarianceSurface { scale }, &data, theta0, max_iterations)?
        }
        FitForm::Rotated => {
            let cov = CovarianceMatrix2::from_sigmas(init.sigma_1, init.sigma_2, init.rho)?;
            let rot = CorrelationModel::new(record.plan.plane, record.plan.axis, 0.0, 0.0, cov)
                .to_rotated();
            theta0 = [
                init.center_1 / scale,
                init.center_2 / scale,
                amplitude0.ln(),
                rot.alpha_deg.to_radians(),
                (rot.sigma_m / scale).ln(),
                (rot.sigma_n / scale).ln(),
            ];
            lm_minimize(&RotatedSurface { scale }, &data, theta0, max_iterations)?
        }
    };

    let n = &outcome.natural;
    let (sigma_1, sigma_2, rho) = match form {
        FitForm::Covariance => (n.p4, n.p5, n.p3),
        FitForm::Rotated => {
            let alpha = wrap_angle_deg(n.p3.to_degrees());
            let model = CorrelationModel::from_rotated(
                record.plan.plane,
                record.plan.axis,
                alpha,
                n.p4,
                n.p5,
                n.center_1,
                n.center_2,
            )?;
            (model.sigma_1(), model.sigma_2(), model.rho())
        }
    };
    FitResult::from_covariance_params(
        record.plan.plane,
        record.plan.axis,
        form,
        n.center_1,
        n.center_2,
        n.amplitude,
        sigma_1,
        sigma_2,
        rho,
        outcome.residual_norm,
        outcome.converged,
        outcome.iterations,
        outcome.covariance,
    )
}

fn wrap_angle_deg(alpha: f64) -> f64 {
    let mut a = (alpha + 90.0).rem_euclid(180.0) - 90.0;
    if a <= -90.0 {
        a = 90.0;
    }
    a
}

struct LmOutcome {
    natural: NaturalParams,
    residual_norm: f64,
    converged: bool,
    iterations: usize,
    covariance: Option<[[f64; 6]; 6]>,
    /// Residual norm after each accepted step (for the monotonicity check).
    #[allow(dead_code)]
    accepted_history: Vec<f64>,
}

fn residual_norm<S: SurfaceParam>(surface: &S, data: &[FitPoint], theta: &[f64; 6]) -> f64 {
    let natural = surface.decode(theta);
    let mut jac = [0.0; 6];
    data.iter()
        .map(|p| {
            let r = p.weight * (p.rate - surface.eval(&natural, p.x1, p.x2, &mut jac));
            r * r
        })
        .sum()
}

#[allow(clippy::needless_range_loop)]
fn lm_minimize<S: SurfaceParam>(
    surface: &S,
    data: &[FitPoint],
    theta0: [f64; 6],
    max_iterations: usize,
) -> Result<LmOutcome, FitError> {
    let mut theta = theta0;
    let mut cost = residual_norm(surface, data, &theta);
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;
    let mut accepted_history = vec![cost];
    // scale for "residual change is numerically zero" in noiseless fits
    let data_scale: f64 = data.iter().map(|p| (p.weight * p.rate).powi(2)).sum();
    let residual_floor = f64::EPSILON * data_scale.max(f64::MIN_POSITIVE);

    let mut jac = [0.0; 6];

    while iterations < max_iterations {
        iterations += 1;
        let natural = surface.decode(&theta);
        let mut jtj = [[0.0; 6]; 6];
        let mut jtr = [0.0; 6];
        for p in data {
            let model = surface.eval(&natural, p.x1, p.x2, &mut jac);
            let r = p.weight * (p.rate - model);
            for a in 0..6 {
                let ja = p.weight * jac[a];
                jtr[a] += ja * r;
                for b in a..6 {
                    jtj[a][b] += ja * p.weight * jac[b];
                }
            }
        }
        for a in 0..6 {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }

        // damped step; grow λ until the step is accepted or hopeless
        let mut stepped = false;
        let mut solvable = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = jtj;
            for (d, row) in damped.iter_mut().enumerate() {
                row[d] += lambda * jtj[d][d].max(1e-30);
            }
            let delta = match cholesky_solve6(&damped, &jtr) {
                Some(d) => d,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            solvable = true;
            let mut trial = theta;
            for (t, d) in trial.iter_mut().zip(delta.iter()) {
                *t += d;
            }
            let trial_cost = residual_norm(surface, data, &trial);
            if trial_cost <= cost {
                let param_change = delta
                    .iter()
                    .zip(theta.iter())
                    .map(|(d, t)| d.abs() / (1.0 + t.abs()))
                    .fold(0.0, f64::max);
                let residual_change = cost - trial_cost;
                theta = trial;
                cost = trial_cost;
                accepted_history.push(cost);
                lambda = (lambda / 10.0).max(LAMBDA_MIN);
                stepped = true;
                if param_change < PARAM_TOL
                    && residual_change <= RESIDUAL_TOL * cost.max(residual_floor)
                {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            if !solvable {
                // the damped normal equations never admitted a solution:
                // the curvature is genuinely rank-deficient (or NaN-laden)
                return Err(FitError::RankDeficient);
            }
            // no acceptable step even at maximum damping: the iterate is
            // already at (or numerically below) a stationary point
            let gradient_flat = jtr.iter().all(|g| g.abs() <= 1e-12 * (1.0 + cost));
            if gradient_flat || cost <= residual_floor {
                converged = true;
            }
            break;
        }
        if converged {
            break;
        }
    }

    let natural = surface.decode(&theta);
    let covariance = estimate_covariance(surface, data, &theta, cost);
    Ok(LmOutcome {
        natural,
        residual_norm: cost,
        converged,
        iterations,
        covariance,
        accepted_history,
    })
}

/// (JᵀWJ)⁻¹ in natural-parameter space at the solution. Uniform-weight fits
/// are scaled by the reduced residual S/(n−6); Poisson weights are already
/// absolute. `None` when the curvature is singular or n ≤ 6.
#[allow(clippy::needless_range_loop)]
fn estimate_covariance<S: SurfaceParam>(
    surface: &S,
    data: &[FitPoint],
    theta: &[f64; 6],
    cost: f64,
) -> Option<[[f64; 6]; 6]> {
    if data.len() <= 6 {
        return None;
    }
    let natural = surface.decode(theta);
    let chain = surface.chain(&natural);
    let mut jtj = [[0.0; 6]; 6];
    let mut jac = [0.0; 6];
    for p in data {
        surface.eval(&natural, p.x1, p.x2, &mut jac);
        // Jacobian w.r.t. natural parameters: divide out the chain factors
        let jn: Vec<f64> = jac
            .iter()
            .zip(chain.iter())
            .map(|(j, c)| p.weight * j / c)
            .collect();
        for a in 0..6 {
            for b in a..6 {
                jtj[a][b] += jn[a] * jn[b];
            }
        }
    }
    for a in 0..6 {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    let mut cov = invert6(&jtj)?;
    let uniform = data.iter().all(|p| p.weight == 1.0);
    if uniform {
        let s2 = cost / (data.len() - 6) as f64;
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v *= s2;
            }
        }
    }
    Some(cov)
}

/// Cholesky solve of a 6×6 symmetric positive-definite system.
fn cholesky_solve6(mat: &[[f64; 6]; 6], rhs: &[f64; 6]) -> Option<[f64; 6]> {
    let l = cholesky6(mat)?;
    // forward substitution L y = rhs
    let mut y = [0.0; 6];
    for i in 0..6 {
        let mut sum = rhs[i];
        for j in 0..i {
            sum -= l[i][j] * y[j];
        }
        y[i] = sum / l[i][i];
    }
    // back substitution Lᵀ x = y
    let mut x = [0.0; 6];
    for i in (0..6).rev() {
        let mut sum = y[i];
        for j in (i + 1)..6 {
            sum -= l[j][i] * x[j];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

#[allow(clippy::needless_range_loop)]
fn cholesky6(mat: &[[f64; 6]; 6]) -> Option<[[f64; 6]; 6]> {
    let mut l = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..=i {
            let mut sum = mat[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn invert6(mat: &[[f64; 6]; 6]) -> Option<[[f64; 6]; 6]> {
    let mut inv = [[0.0; 6]; 6];
    for col in 0..6 {
        let mut e = [0.0; 6];
        e[col] = 1.0;
        let x = cholesky_solve6(mat, &e)?;
        for row in 0..6 {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

/// Remove the fiber-probe blur from a covariance-form fit: both fitted
/// variances lose the probe variance (MFD/4)² in quadrature while the
/// covariance stays, so |ρ| grows. Fails when the blur meets or exceeds a
/// fitted width, or when the deconvolved matrix would stop being a valid
/// covariance.
pub fn deconvolve_fiber(
    fit: &FitResult,
    det: &DetectorSpec,
    _train: &OpticalTrain,
) -> Result<FitResult, FitError> {
    if fit.form != FitForm::Covariance {
        return Err(FitError::WrongForm);
    }
    let sigma_blur = det.fiber_mode_field_diameter / 4.0;
    let blur_var = sigma_blur * sigma_blur;
    let var_1 = fit.sigma_1 * fit.sigma_1 - blur_var;
    let var_2 = fit.sigma_2 * fit.sigma_2 - blur_var;
    let cov_12 = fit.rho * fit.sigma_1 * fit.sigma_2;
    if var_1 <= 0.0 || var_2 <= 0.0 || cov_12 * cov_12 >= var_1 * var_2 {
        return Err(FitError::OverDeconvolution {
            blur_var,
            var_1,
            var_2,
        });
    }
    FitResult::from_covariance_params(
        fit.plane,
        fit.axis,
        FitForm::Covariance,
        fit.center_1,
        fit.center_2,
        fit.amplitude,
        var_1.sqrt(),
        var_2.sqrt(),
        cov_12 / (var_1 * var_2).sqrt(),
        fit.residual_norm,
        fit.converged,
        fit.iterations,
        None,
    )
}

/// One exported iso-rate contour of the fitted surface.
#[derive(Debug, Clone, Serialize)]
pub struct ContourLine {
    pub label: String,
    /// Fraction of the peak rate this contour traces.
    pub level_fraction: f64,
    pub points: Vec<(f64, f64)>,
}

/// Contours of the fitted surface at 1/2, 1/e and 1/e² of the peak rate.
pub fn contour_lines(fit: &FitResult, points_per_line: usize) -> Vec<ContourLine> {
    let levels = [
        ("half", 0.5),
        ("1_over_e", (-1.0_f64).exp()),
        ("1_over_e2", (-2.0_f64).exp()),
    ];
    let (s, c) = fit.alpha_deg.to_radians().sin_cos();
    levels
        .iter()
        .map(|(label, fraction)| {
            let q0 = -2.0 * fraction.ln();
            let points = (0..points_per_line)
                .map(|i| {
                    let t = 2.0 * std::f64::consts::PI * i as f64 / points_per_line as f64;
                    let w1 = fit.sigma_m * q0.sqrt() * t.cos();
                    let w2 = fit.sigma_n * q0.sqrt() * t.sin();
                    // rotate the principal-axis offsets back to probe axes
                    (
                        fit.center_1 + c * w1 + s * w2,
                        fit.center_2 - s * w1 + c * w2,
                    )
                })
                .collect();
            ContourLine {
                label: (*label).to_string(),
                level_fraction: *fraction,
                points,
            }
        })
        .collect()
}

/// JSON shape of a fit result: both parameter forms side by side.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitResultJson {
    plane: Plane,
    axis: Axis,
    form: FitForm,
    center_1: f64,
    center_2: f64,
    amplitude: f64,
    covariance: CovarianceFormJson,
    rotated: RotatedFormJson,
    residual_norm: f64,
    converged: bool,
    iterations: usize,
    parameter_order: Vec<String>,
    covariance_of_estimates: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct CovarianceFormJson {
    sigma_1: f64,
    sigma_2: f64,
    rho: f64,
}

#[derive(Serialize, Deserialize)]
struct RotatedFormJson {
    alpha_deg: f64,
    sigma_m: f64,
    sigma_n: f64,
}

impl Serialize for FitResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let (p3, p4, p5) = match self.form {
            FitForm::Covariance => ("rho", "sigma_1", "sigma_2"),
            FitForm::Rotated => ("alpha_rad", "sigma_m", "sigma_n"),
        };
        FitResultJson {
            plane: self.plane,
            axis: self.axis,
            form: self.form,
            center_1: self.center_1,
            center_2: self.center_2,
            amplitude: self.amplitude,
            covariance: CovarianceFormJson {
                sigma_1: self.sigma_1,
                sigma_2: self.sigma_2,
                rho: self.rho,
            },
            rotated: RotatedFormJson {
                alpha_deg: self.alpha_deg,
                sigma_m: self.sigma_m,
                sigma_n: self.sigma_n,
            },
            residual_norm: self.residual_norm,
            converged: self.converged,
            iterations: self.iterations,
            parameter_order: ["center_1", "center_2", "amplitude", p3, p4, p5]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            covariance_of_estimates: self
                .covariance_of_estimates
                .map(|m| m.iter().map(|row| row.to_vec()).collect()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FitResult {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = FitResultJson::deserialize(deserializer)?;
        let covariance_of_estimates = match raw.covariance_of_estimates {
            None => None,
            Some(rows) => {
                if rows.len() != 6 || rows.iter().any(|r| r.len() != 6) {
                    return Err(serde::de::Error::custom("estimate covariance must be 6x6"));
                }
                let mut m = [[0.0; 6]; 6];
                for (i, row) in rows.iter().enumerate() {
                    m[i].copy_from_slice(row);
                }
                Some(m)
            }
        };
        // the covariance block is authoritative; the rotated block is
        // recomputed so hand-edited files cannot go inconsistent
        FitResult::from_covariance_params(
            raw.plane,
            raw.axis,
            raw.form,
            raw.center_1,
            raw.center_2,
            raw.amplitude,
            raw.covariance.sigma_1,
            raw.covariance.sigma_2,
            raw.covariance.rho,
            raw.residual_norm,
            raw.converged,
            raw.iterations,
            covariance_of_estimates,
        )
        .map_err(serde::de::Error::custom)
    }
}
