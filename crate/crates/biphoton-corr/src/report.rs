//! Correlation-diagram grids and the combined text report.
//!
//! A correlation diagram plots the coincidence rate over the two probe
//! coordinates (x₁, x₂): uncorrelated beams give circular contours,
//! position-correlated beams an ellipse along x₂ = x₁, momentum
//! anti-correlated beams an ellipse along x₂ = −x₁. The grids exported
//! here are plain CSV tables for external plotting tools.

use std::io::Write;

use thiserror::Error;

use crate::correlation::{CorrelationModel, ModelError};
use crate::fitter::{FitError, FitResult};
use crate::simulator::{ScanError, ScanRecord};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error("diagram I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("diagram CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Rectangular sample of a density or rate surface over (x₁, x₂).
#[derive(Debug, Clone)]
pub struct DiagramGrid {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// Row-major values, index = i1 * x2.len() + i2.
    pub values: Vec<f64>,
}

impl DiagramGrid {
    pub fn value(&self, i1: usize, i2: usize) -> f64 {
        self.values[i1 * self.x2.len() + i2]
    }

    /// Value-weighted second moments (var₁, var₂, cov₁₂) of the surface;
    /// the covariance sign gives the ellipse orientation.
    pub fn second_moments(&self) -> (f64, f64, f64) {
        let (mut total, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (i1, &a) in self.x1.iter().enumerate() {
            for (i2, &b) in self.x2.iter().enumerate() {
                let w = self.value(i1, i2);
                total += w;
                m1 += w * a;
                m2 += w * b;
            }
        }
        m1 /= total;
        m2 /= total;
        let (mut v1, mut v2, mut c) = (0.0, 0.0, 0.0);
        for (i1, &a) in self.x1.iter().enumerate() {
            for (i2, &b) in self.x2.iter().enumerate() {
                let w = self.value(i1, i2);
                v1 += w * (a - m1) * (a - m1);
                v2 += w * (b - m2) * (b - m2);
                c += w * (a - m1) * (b - m2);
            }
        }
        (v1 / total, v2 / total, c / total)
    }
}

/// Sample a model's density over ±`half_span_sigmas` marginal widths.
pub fn model_diagram(
    model: &CorrelationModel,
    points: usize,
    half_span_sigmas: f64,
) -> Result<DiagramGrid, ReportError> {
    let span1 = half_span_sigmas * model.sigma_1();
    let span2 = half_span_sigmas * model.sigma_2();
    let axis = |center: f64, span: f64| -> Vec<f64> {
        (0..points)
            .map(|i| center - span + 2.0 * span * i as f64 / (points - 1) as f64)
            .collect()
    };
    let x1 = axis(model.center_1(), span1);
    let x2 = axis(model.center_2(), span2);
    let mut values = Vec::with_capacity(points * points);
    for &a in &x1 {
        for &b in &x2 {
            values.push(model.pdf(a, b)?);
        }
    }
    Ok(DiagramGrid { x1, x2, values })
}

/// Write a diagram as `x1,x2,value` rows.
pub fn write_diagram_csv<W: Write>(grid: &DiagramGrid, writer: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x1", "x2", "value"])?;
    for (i1, &a) in grid.x1.iter().enumerate() {
        for (i2, &b) in grid.x2.iter().enumerate() {
            w.write_record([
                format!("{a}"),
                format!("{b}"),
                format!("{}", grid.value(i1, i2)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write measured rates and the fitted surface side by side, one row per
/// record point: `x1,x2,measured_rate,fitted_rate`.
pub fn write_surface_csv<W: Write>(
    record: &ScanRecord,
    fit: &FitResult,
    writer: W,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x1", "x2", "measured_rate", "fitted_rate"])?;
    let dwell = record.plan.dwell_time;
    for p in &record.points {
        let x1 = record.active_coord(p);
        let x2 = p.passive_pos;
        w.write_record([
            format!("{x1}"),
            format!("{x2}"),
            format!("{}", p.coincidences as f64 / dwell),
            format!("{}", fit.rate(x1, x2)?),
        ])?;
    }
    w.flush()?;
    Ok(())
}
