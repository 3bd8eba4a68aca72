//! Forward model of the scanning-fiber coincidence experiment.
//!
//! One fiber probe (the passive probe) is parked at a fixed position while
//! the other (the active probe) is stepped across the beam; singles and
//! coincidence counts are recorded at every step as independent Poisson
//! draws of the expected rates. The probe's Gaussian mode blurs the source
//! correlations; the blur is applied to the model before rates are formed.
//!
//! Per-point RNG streams are derived from (seed, point index), so a record
//! is reproducible bit for bit regardless of evaluation order.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{Axis, CorrelationModel, CovarianceMatrix2, ModelError, Plane};
use crate::optics::{model_to_measurement, OpticalTrain, OpticsError};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("scan plan invalid: {0}")]
    InvalidPlan(String),
    #[error("detector spec invalid: {0}")]
    InvalidDetector(String),
    #[error("plan is for plane {plan} but the model describes plane {model}")]
    PlaneMismatch { plan: Plane, model: Plane },
    #[error("plan is for axis {plan} but the model describes axis {model}")]
    AxisMismatch { plan: Axis, model: Axis },
    #[error("full-grid simulation needs one model per transverse axis")]
    BadAxisPair,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("record I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("record CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("record parse: {0}")]
    Parse(String),
}

/// Scan protocol: a line scan of the active probe for a list of passive
/// positions, or a full 2D active-probe raster per passive position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanProtocol {
    #[serde(rename = "line")]
    LineScan,
    #[serde(rename = "grid")]
    FullGrid,
}

/// Geometry and timing of one measurement campaign. Active-grid coordinates
/// are measurement-plane meters, centered on the optical axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanPlan {
    pub plane: Plane,
    pub axis: Axis,
    pub protocol: ScanProtocol,
    /// Number of active-probe steps (per axis for the full grid).
    pub points: usize,
    /// Step size (m).
    pub spacing: f64,
    /// Fixed positions of the passive probe along the scan axis (m).
    pub passive_positions: Vec<f64>,
    /// Integration time per grid point (s).
    pub dwell_time: f64,
    /// Pointing drift: standard deviation (m, measurement plane) of the
    /// random walk the beam center takes between line scans. 0 = off.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub center_drift_per_line: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl ScanPlan {
    pub fn validate(&self) -> Result<(), ScanError> {
        if self.points < 2 {
            return Err(ScanError::InvalidPlan(format!(
                "need at least 2 active points, got {}",
                self.points
            )));
        }
        if !self.spacing.is_finite() || self.spacing <= 0.0 {
            return Err(ScanError::InvalidPlan(format!(
                "spacing must be positive, got {}",
                self.spacing
            )));
        }
        if !self.dwell_time.is_finite() || self.dwell_time <= 0.0 {
            return Err(ScanError::InvalidPlan(format!(
                "dwell time must be positive, got {}",
                self.dwell_time
            )));
        }
        if self.passive_positions.is_empty() {
            return Err(ScanError::InvalidPlan(
                "passive position list is empty".into(),
            ));
        }
        if !self.center_drift_per_line.is_finite() || self.center_drift_per_line < 0.0 {
            return Err(ScanError::InvalidPlan(format!(
                "center drift must be nonnegative, got {}",
                self.center_drift_per_line
            )));
        }
        Ok(())
    }

    /// Active-probe step positions, centered on zero.
    pub fn active_grid(&self) -> Vec<f64> {
        let half = (self.points - 1) as f64 / 2.0;
        (0..self.points)
            .map(|i| (i as f64 - half) * self.spacing)
            .collect()
    }
}

/// Fiber probe and counting electronics parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    /// Mode field diameter of the probe fibers (m).
    pub fiber_mode_field_diameter: f64,
    /// Coincidence rate at the joint center of the blurred model (counts/s).
    pub peak_coincidence_rate: f64,
    /// Singles rate at the marginal center (counts/s), dark rate excluded.
    pub peak_singles_rate: f64,
    /// Dark counts per detector (counts/s).
    pub dark_rate: f64,
    /// Flat accidental-coincidence floor (counts/s). Pairs are sparse
    /// enough that this is negligible in the reference setup; the knob
    /// exists for robustness testing. 0 = off.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub accidental_rate: f64,
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<(), ScanError> {
        if !self.fiber_mode_field_diameter.is_finite() || self.fiber_mode_field_diameter <= 0.0 {
            return Err(ScanError::InvalidDetector(format!(
                "mode field diameter must be positive, got {}",
                self.fiber_mode_field_diameter
            )));
        }
        for (name, rate) in [
            ("peak_coincidence_rate", self.peak_coincidence_rate),
            ("peak_singles_rate", self.peak_singles_rate),
            ("dark_rate", self.dark_rate),
            ("accidental_rate", self.accidental_rate),
        ] {
            if !rate.is_finite() || rate < 0.0 {
                return Err(ScanError::InvalidDetector(format!(
                    "{name} must be nonnegative, got {rate}"
                )));
            }
        }
        Ok(())
    }
}

/// One grid point of a scan: probe positions and raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub active_x: f64,
    pub active_y: f64,
    /// Passive-probe coordinate along the plan's scan axis (m).
    pub passive_pos: f64,
    pub singles_active: u64,
    pub singles_passive: u64,
    pub coincidences: u64,
}

/// One measurement campaign: the plan, provenance, and per-point counts.
///
/// `seed`/`model_tag` are absent for ingested real data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub plan: ScanPlan,
    pub seed: Option<u64>,
    pub model_tag: Option<String>,
    pub points: Vec<ScanPoint>,
}

/// Expected detection rates at one probe configuration (counts/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub singles_active: f64,
    pub singles_passive: f64,
    pub coincidences: f64,
}

/// Widen a source-plane model by the fiber-probe response: each probe
/// convolves its coordinate independently with a Gaussian of width
/// MFD/4 (measurement plane), referred here to the model's source units.
/// Variances grow by σ_blur²; the covariance is unchanged, so |ρ| shrinks.
pub fn blurred_model(
    model: &CorrelationModel,
    det: &DetectorSpec,
    train: &OpticalTrain,
) -> Result<CorrelationModel, ScanError> {
    det.validate()?;
    let sigma_blur =
        det.fiber_mode_field_diameter / 4.0 / train.measurement_scale(model.plane());
    let blur_var = sigma_blur * sigma_blur;
    let cov = model.covariance();
    Ok(CorrelationModel::new(
        model.plane(),
        model.axis(),
        model.center_1(),
        model.center_2(),
        CovarianceMatrix2::from_variances(
            cov.var_1() + blur_var,
            cov.var_2() + blur_var,
            cov.cov_12(),
        )?,
    ))
}

/// Expected rates for probe positions in the model's own plane/units.
///
/// The true-pair coincidence rate is normalized so that it equals
/// `peak_coincidence_rate` at the joint center (plus any accidental
/// floor); singles follow the marginal Gaussians of the respective mode
/// plus the dark rate, independent of the other probe.
pub fn expected_rates(
    model: &CorrelationModel,
    det: &DetectorSpec,
    active_pos: f64,
    passive_pos: f64,
) -> Result<Rates, ScanError> {
    let q = model.quadratic_form(active_pos, passive_pos)?;
    let cov = model.covariance();
    let da = active_pos - model.center_1();
    let dp = passive_pos - model.center_2();
    Ok(Rates {
        singles_active: det.dark_rate
            + det.peak_singles_rate * (-0.5 * da * da / cov.var_1()).exp(),
        singles_passive: det.dark_rate
            + det.peak_singles_rate * (-0.5 * dp * dp / cov.var_2()).exp(),
        coincidences: det.accidental_rate + det.peak_coincidence_rate * (-0.5 * q).exp(),
    })
}

/// Expected rates for a 2D probe configuration; the coincidence surface is
/// the product of the per-axis correlation models, the singles are the
/// product of the active probe's marginals.
fn expected_rates_2d(
    model_scan: &CorrelationModel,
    model_trans: &CorrelationModel,
    det: &DetectorSpec,
    active_scan: f64,
    active_trans: f64,
    passive_scan: f64,
    passive_trans: f64,
) -> Result<Rates, ScanError> {
    let q_scan = model_scan.quadratic_form(active_scan, passive_scan)?;
    let q_trans = model_trans.quadratic_form(active_trans, passive_trans)?;
    let marginal = |model: &CorrelationModel, pos: f64, mode_2: bool| -> f64 {
        let cov = model.covariance();
        let (center, var) = if mode_2 {
            (model.center_2(), cov.var_2())
        } else {
            (model.center_1(), cov.var_1())
        };
        let d = pos - center;
        (-0.5 * d * d / var).exp()
    };
    Ok(Rates {
        singles_active: det.dark_rate
            + det.peak_singles_rate
                * marginal(model_scan, active_scan, false)
                * marginal(model_trans, active_trans, false),
        singles_passive: det.dark_rate
            + det.peak_singles_rate
                * marginal(model_scan, passive_scan, true)
                * marginal(model_trans, passive_trans, true),
        coincidences: det.accidental_rate
            + det.peak_coincidence_rate * (-0.5 * (q_scan + q_trans)).exp(),
    })
}

fn poisson_draw(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// Draw one point's counts; coincidences are resampled conditioned on not
/// exceeding the smaller singles count (a coincidence needs a photon at
/// each detector), with a clamp after repeated rejection.
fn draw_counts(rng: &mut ChaCha8Rng, rates: &Rates, dwell: f64) -> (u64, u64, u64) {
    let singles_active = poisson_draw(rng, rates.singles_active * dwell);
    let singles_passive = poisson_draw(rng, rates.singles_passive * dwell);
    let cap = singles_active.min(singles_passive);
    let mut coincidences = poisson_draw(rng, rates.coincidences * dwell);
    let mut rejections = 0;
    while coincidences > cap && rejections < 100 {
        coincidences = poisson_draw(rng, rates.coincidences * dwell);
        rejections += 1;
    }
    (singles_active, singles_passive, coincidences.min(cap))
}

fn point_rng(seed: u64, point_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(point_index);
    rng
}

// stream indices reserved for the per-line pointing-drift steps; point
// indices stay far below this
const DRIFT_STREAM_BASE: u64 = 1 << 62;

/// Advance the pointing-drift random walk before line scan `line_index`.
fn drift_step(seed: u64, line_index: usize, step_sigma: f64) -> f64 {
    let mut rng = point_rng(seed, DRIFT_STREAM_BASE + line_index as u64);
    let z: f64 = StandardNormal.sample(&mut rng);
    z * step_sigma
}

/// Beam shifted by a common pointing offset: both mode centers move.
fn shifted_model(model: &CorrelationModel, offset: f64) -> CorrelationModel {
    CorrelationModel::new(
        model.plane(),
        model.axis(),
        model.center_1() + offset,
        model.center_2() + offset,
        *model.covariance(),
    )
}

fn check_plan_model(plan: &ScanPlan, model: &CorrelationModel) -> Result<(), ScanError> {
    if plan.plane != model.plane() {
        return Err(ScanError::PlaneMismatch {
            plan: plan.plane,
            model: model.plane(),
        });
    }
    if plan.axis != model.axis() {
        return Err(ScanError::AxisMismatch {
            plan: plan.axis,
            model: model.axis(),
        });
    }
    Ok(())
}

/// Simulate a line-scan campaign: for every passive position, the active
/// probe steps along the scan axis and Poisson counts are drawn at each
/// point. `model` is the source-plane correlation model of the scan axis;
/// probe blur and the measurement-plane mapping are applied internally.
/// Deterministic for a fixed seed.
pub fn run_scan(
    plan: &ScanPlan,
    model: &CorrelationModel,
    det: &DetectorSpec,
    train: &OpticalTrain,
    seed: u64,
) -> Result<ScanRecord, ScanError> {
    plan.validate()?;
    det.validate()?;
    check_plan_model(plan, model)?;
    if plan.protocol != ScanProtocol::LineScan {
        return Err(ScanError::InvalidPlan(
            "run_scan expects a line-scan plan; use run_full_grid for grids".into(),
        ));
    }
    let meas = model_to_measurement(&blurred_model(model, det, train)?, train)?;
    let actives = plan.active_grid();
    let mut points = Vec::with_capacity(actives.len() * plan.passive_positions.len());
    let mut index = 0u64;
    let mut drift_offset = 0.0;
    for (line, &passive) in plan.passive_positions.iter().enumerate() {
        if plan.center_drift_per_line > 0.0 && line > 0 {
            drift_offset += drift_step(seed, line, plan.center_drift_per_line);
        }
        let line_model = shifted_model(&meas, drift_offset);
        for &active in &actives {
            let rates = expected_rates(&line_model, det, active, passive)?;
            let mut rng = point_rng(seed, index);
            let (sa, sp, c) = draw_counts(&mut rng, &rates, plan.dwell_time);
            let (active_x, active_y) = match plan.axis {
                Axis::X => (active, 0.0),
                Axis::Y => (0.0, active),
            };
            points.push(ScanPoint {
                active_x,
                active_y,
                passive_pos: passive,
                singles_active: sa,
                singles_passive: sp,
                coincidences: c,
            });
            index += 1;
        }
    }
    Ok(ScanRecord {
        plan: plan.clone(),
        seed: Some(seed),
        model_tag: None,
        points,
    })
}

/// Simulate full 2D rasters of the active probe, one record per passive
/// position. The coincidence surface is the product of the two per-axis
/// models (`model_scan` along `plan.axis`, `model_trans` on the other
/// axis); the passive probe sits at (passive, 0) in scan/transverse
/// coordinates. The coincidence centroid of each map follows the passive
/// position with slope ρ·σ₁/σ₂ while the singles map stays put.
pub fn run_full_grid(
    plan: &ScanPlan,
    model_scan: &CorrelationModel,
    model_trans: &CorrelationModel,
    det: &DetectorSpec,
    train: &OpticalTrain,
    seed: u64,
) -> Result<Vec<ScanRecord>, ScanError> {
    plan.validate()?;
    det.validate()?;
    check_plan_model(plan, model_scan)?;
    if plan.protocol != ScanProtocol::FullGrid {
        return Err(ScanError::InvalidPlan(
            "run_full_grid expects a full-grid plan".into(),
        ));
    }
    if model_trans.axis() == plan.axis || model_trans.plane() != plan.plane {
        return Err(ScanError::BadAxisPair);
    }
    let meas_scan = model_to_measurement(&blurred_model(model_scan, det, train)?, train)?;
    let meas_trans = model_to_measurement(&blurred_model(model_trans, det, train)?, train)?;
    let actives = plan.active_grid();
    let n = actives.len();
    let mut records = Vec::with_capacity(plan.passive_positions.len());
    let mut drift_offset = 0.0;
    for (pi, &passive) in plan.passive_positions.iter().enumerate() {
        if plan.center_drift_per_line > 0.0 && pi > 0 {
            drift_offset += drift_step(seed, pi, plan.center_drift_per_line);
        }
        let raster_scan = shifted_model(&meas_scan, drift_offset);
        let raster_trans = shifted_model(&meas_trans, drift_offset);
        let mut points = Vec::with_capacity(n * n);
        for (i, &a_scan) in actives.iter().enumerate() {
            for (j, &a_trans) in actives.iter().enumerate() {
                let rates = expected_rates_2d(
                    &raster_scan,
                    &raster_trans,
                    det,
                    a_scan,
                    a_trans,
                    passive,
                    0.0,
                )?;
                let index = (pi * n * n + i * n + j) as u64;
                let mut rng = point_rng(seed, index);
                let (sa, sp, c) = draw_counts(&mut rng, &rates, plan.dwell_time);
                let (active_x, active_y) = match plan.axis {
                    Axis::X => (a_scan, a_trans),
                    Axis::Y => (a_trans, a_scan),
                };
                points.push(ScanPoint {
                    active_x,
                    active_y,
                    passive_pos: passive,
                    singles_active: sa,
                    singles_passive: sp,
                    coincidences: c,
                });
            }
        }
        records.push(ScanRecord {
            plan: ScanPlan {
                passive_positions: vec![passive],
                ..plan.clone()
            },
            seed: Some(seed),
            model_tag: None,
            points,
        });
    }
    Ok(records)
}

impl ScanRecord {
    /// Active-probe coordinate along the record's scan axis.
    pub fn active_coord(&self, point: &ScanPoint) -> f64 {
        match self.plan.axis {
            Axis::X => point.active_x,
            Axis::Y => point.active_y,
        }
    }

    pub fn total_coincidences(&self) -> u64 {
        self.points.iter().map(|p| p.coincidences).sum()
    }

    pub fn max_coincidences(&self) -> u64 {
        self.points.iter().map(|p| p.coincidences).max().unwrap_or(0)
    }

    /// Write the flat CSV form (one row per grid point).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ScanError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "plane",
            "axis",
            "passive_pos",
            "active_pos_x",
            "active_pos_y",
            "dwell_s",
            "singles_a",
            "singles_p",
            "coinc",
        ])?;
        for p in &self.points {
            w.write_record([
                self.plan.plane.to_string(),
                self.plan.axis.to_string(),
                format_f64(p.passive_pos),
                format_f64(p.active_x),
                format_f64(p.active_y),
                format_f64(self.plan.dwell_time),
                p.singles_active.to_string(),
                p.singles_passive.to_string(),
                p.coincidences.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), ScanError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Read a record from the flat CSV form, reconstructing the plan from
    /// the rows. Real lab data in the same shape is ingested unchanged.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self, ScanError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let expected = [
            "plane",
            "axis",
            "passive_pos",
            "active_pos_x",
            "active_pos_y",
            "dwell_s",
            "singles_a",
            "singles_p",
            "coinc",
        ];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(ScanError::Parse(format!(
                "unexpected CSV header: {headers:?}"
            )));
        }
        let mut plane_axis_dwell: Option<(Plane, Axis, f64)> = None;
        let mut points = Vec::new();
        for row in r.records() {
            let row = row?;
            let get = |i: usize| -> Result<&str, ScanError> {
                row.get(i)
                    .ok_or_else(|| ScanError::Parse(format!("short row: {row:?}")))
            };
            let plane = match get(0)? {
                "near" => Plane::NearField,
                "far" => Plane::FarField,
                other => return Err(ScanError::Parse(format!("unknown plane {other:?}"))),
            };
            let axis = match get(1)? {
                "x" => Axis::X,
                "y" => Axis::Y,
                other => return Err(ScanError::Parse(format!("unknown axis {other:?}"))),
            };
            let parse_f = |s: &str| -> Result<f64, ScanError> {
                let v: f64 = s
                    .parse()
                    .map_err(|e| ScanError::Parse(format!("bad float {s:?}: {e}")))?;
                if !v.is_finite() {
                    return Err(ScanError::Parse(format!("non-finite value {s:?}")));
                }
                Ok(v)
            };
            let parse_u = |s: &str| -> Result<u64, ScanError> {
                s.parse()
                    .map_err(|e| ScanError::Parse(format!("bad count {s:?}: {e}")))
            };
            let dwell = parse_f(get(5)?)?;
            if !dwell.is_finite() || dwell <= 0.0 {
                return Err(ScanError::Parse(format!("dwell must be positive, got {dwell}")));
            }
            match plane_axis_dwell {
                None => plane_axis_dwell = Some((plane, axis, dwell)),
                Some(first) => {
                    if first != (plane, axis, dwell) {
                        return Err(ScanError::Parse(
                            "mixed plane/axis/dwell values in one record".into(),
                        ));
                    }
                }
            }
            points.push(ScanPoint {
                passive_pos: parse_f(get(2)?)?,
                active_x: parse_f(get(3)?)?,
                active_y: parse_f(get(4)?)?,
                singles_active: parse_u(get(6)?)?,
                singles_passive: parse_u(get(7)?)?,
                coincidences: parse_u(get(8)?)?,
            });
        }
        let (plane, axis, dwell) = plane_axis_dwell
            .ok_or_else(|| ScanError::Parse("record has no data rows".into()))?;

        let mut passives: Vec<f64> = Vec::new();
        for p in &points {
            if !passives.contains(&p.passive_pos) {
                passives.push(p.passive_pos);
            }
        }
        let mut actives: Vec<f64> = Vec::new();
        let mut transverse: Vec<f64> = Vec::new();
        for p in &points {
            let (along, across) = match axis {
                Axis::X => (p.active_x, p.active_y),
                Axis::Y => (p.active_y, p.active_x),
            };
            if !actives.contains(&along) {
                actives.push(along);
            }
            if !transverse.contains(&across) {
                transverse.push(across);
            }
        }
        if actives.len() < 2 {
            return Err(ScanError::Parse(
                "record has fewer than 2 active positions".into(),
            ));
        }
        let mut sorted = actives.clone();
        sorted.sort_by(f64::total_cmp);
        let spacing = (sorted[sorted.len() - 1] - sorted[0]) / (sorted.len() - 1) as f64;
        let protocol = if transverse.len() > 1 {
            ScanProtocol::FullGrid
        } else {
            ScanProtocol::LineScan
        };
        Ok(ScanRecord {
            plan: ScanPlan {
                plane,
                axis,
                protocol,
                points: actives.len(),
                spacing,
                passive_positions: passives,
                dwell_time: dwell,
                center_drift_per_line: 0.0,
            },
            seed: None,
            model_tag: None,
            points,
        })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self, ScanError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

// shortest round-trip float representation, without a trailing ".0"
fn format_f64(v: f64) -> String {
    let mut buf = format!("{v}");
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}
