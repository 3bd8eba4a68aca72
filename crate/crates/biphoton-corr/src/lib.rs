//! Simulation and covariance analysis of space-momentum correlated photon pairs.
//!
//! A biphoton beam carries position correlations in the near field of its
//! source and momentum anti-correlations in the far field. This crate
//! forward-models scanning-fiber coincidence measurements of such a beam,
//! fits the resulting count maps with bivariate Gaussians, and evaluates
//! continuous-variable entanglement criteria (the Mancini variance product
//! and its covariance/M² form) together with the physical bounds set by the
//! pump geometry and the crystal thickness.
//!
//! # Units
//!
//! Positions are in meters. Transverse momenta are stored as p/ħ in m⁻¹,
//! so every variance product `Δ²(x₁−x₂)·Δ²(p₁+p₂)` is numerically in units
//! of ħ² with ħ = 1. Angles in the public API are degrees.
//!
//! # Modules
//!
//! - [`correlation`] — bivariate Gaussian correlation models: covariance
//!   matrices, densities, sum/difference coordinates, principal axes.
//! - [`optics`] — measurement-plane ↔ source-plane coordinate maps and the
//!   physical limits on the observable correlation strength.
//! - [`criteria`] — non-separability criteria and the combined report.
//! - [`simulator`] — forward model of the scanning-fiber experiment with
//!   Poisson counting noise.
//! - [`fitter`] — damped least-squares estimation of the coincidence
//!   surface in rotated-axis or covariance parameterization.
//! - [`config`] — strict JSON experiment configuration.
//! - [`report`] — correlation-diagram grids and the text report.
//! - [`cli`] — the `biphoton-corr` command-line pipeline.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --example correlation_diagrams   # density grids over (x1, x2)
//! cargo run --example sum_difference_widths  # widths vs correlation strength
//! cargo run --example physical_limits        # floors from the optical train
//! cargo run --example entanglement_criteria  # the three criterion forms
//! cargo run --example simulate_scan          # Poisson-count line scan
//! cargo run --example passive_sweep          # 2D rasters vs passive position
//! cargo run --example fit_scan               # surface fits + contours
//! cargo run --example deconvolution          # probe-blur removal
//! cargo run --example full_pipeline          # simulate → fit → analyze
//! ```

pub mod cli;
pub mod config;
pub mod correlation;
pub mod criteria;
pub mod fitter;
pub mod optics;
pub mod report;
pub mod simulator;

pub use config::ExperimentConfig;
pub use correlation::{Axis, CorrelationModel, CovarianceMatrix2, Plane, SumDiffWidths};
pub use criteria::{CriterionReport, Verdict};
pub use fitter::{FitForm, FitResult};
pub use optics::{OpticalTrain, PhysicalLimits};
pub use simulator::{DetectorSpec, ScanPlan, ScanProtocol, ScanRecord};
