//! The `biphoton-corr` command-line pipeline.
//!
//! Five subcommands compose the workflow:
//!
//! ```text
//! simulate → fit → analyze        (records → fits → criterion report)
//!            limits               (physical floors from the config)
//!            report               (text report + correlation-diagram grids)
//! ```
//!
//! Exit codes: 0 success, 1 I/O or missing artifacts, 2 configuration or
//! data-shape errors, 3 fit non-convergence, 4 physically suspicious
//! result (measured product below the floor).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, CONFIG_DIR_ENV};
use crate::correlation::{Axis, CorrelationModel, Plane};
use crate::criteria::{build_report, CriteriaError, CriterionReport};
use crate::fitter::{
    contour_lines, deconvolve_fiber, fit_with_cap, FitError, FitForm, FitResult, WeightScheme,
};
use crate::optics::{physical_limits, OpticsError};
use crate::report::{
    model_diagram, write_diagram_csv, write_surface_csv, ReportError,
};
use crate::simulator::{run_full_grid, run_scan, ScanError, ScanProtocol, ScanRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_PHYSICAL_FLAG: i32 = 4;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Criteria(_) => EXIT_CONFIG,
            CliError::Scan(ScanError::InvalidPlan(_))
            | CliError::Scan(ScanError::InvalidDetector(_))
            | CliError::Scan(ScanError::PlaneMismatch { .. })
            | CliError::Scan(ScanError::AxisMismatch { .. }) => EXIT_CONFIG,
            _ => EXIT_ERROR,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "biphoton-corr",
    version,
    about = "Simulate, fit and analyze scanning-fiber coincidence measurements \
             of space-momentum correlated photon pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a coincidence scan from the configured source models
    Simulate(SimulateArgs),
    /// Fit a record with a 2D Gaussian surface and export contours
    Fit(FitArgs),
    /// Evaluate the non-separability criteria from a near/far fit pair
    Analyze(AnalyzeArgs),
    /// Compute the physical floors for the configured optics
    Limits(LimitsArgs),
    /// Write the text report and correlation-diagram grids
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigOpts {
    /// Experiment configuration (falls back to $BIPHOTON_CONFIG_DIR/paper_bbo.json)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: the config's output_dir, or ./out)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlaneArg {
    Near,
    Far,
}

impl From<PlaneArg> for Plane {
    fn from(p: PlaneArg) -> Self {
        match p {
            PlaneArg::Near => Plane::NearField,
            PlaneArg::Far => Plane::FarField,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Line,
    Grid,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Rotated,
    Covariance,
}

impl From<FormArg> for FitForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Rotated => FitForm::Rotated,
            FormArg::Covariance => FitForm::Covariance,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Uniform,
    Poisson,
}

impl From<WeightsArg> for WeightScheme {
    fn from(w: WeightsArg) -> Self {
        match w {
            WeightsArg::Uniform => WeightScheme::Uniform,
            WeightsArg::Poisson => WeightScheme::PoissonVariance,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigOpts,
    #[arg(long)]
    plane: PlaneArg,
    #[arg(long)]
    axis: AxisArg,
    /// Line scan (default) or a full 2D raster per passive position
    #[arg(long, value_enum, default_value_t = ProtocolArg::Line)]
    protocol: ProtocolArg,
    /// RNG seed (default: the config's seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    config: ConfigOpts,
    /// Record file (.csv or .json) produced by `simulate`, or lab data in
    /// the same CSV shape
    #[arg(long)]
    record: PathBuf,
    #[arg(long, value_enum, default_value_t = FormArg::Covariance)]
    form: FormArg,
    #[arg(long, value_enum, default_value_t = WeightsArg::Poisson)]
    weights: WeightsArg,
    /// Iteration cap of the damped least-squares loop
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    config: ConfigOpts,
    /// Near-field fit JSON
    #[arg(long)]
    near: PathBuf,
    /// Far-field fit JSON
    #[arg(long)]
    far: PathBuf,
    /// Remove the fiber-probe blur from both fits before evaluating
    #[arg(long)]
    deconvolve: bool,
}

#[derive(Args)]
struct LimitsArgs {
    #[command(flatten)]
    config: ConfigOpts,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    config: ConfigOpts,
    /// Directory with records/fits/reports from earlier pipeline steps
    #[arg(long)]
    artifacts: Option<PathBuf>,
}

/// Parse and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 { EXIT_OK } else { EXIT_CONFIG };
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Limits(args) => cmd_limits(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(opts: &ConfigOpts) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let path = match &opts.config {
        Some(p) => p.clone(),
        None => match std::env::var_os(CONFIG_DIR_ENV) {
            Some(dir) => Path::new(&dir).join("paper_bbo.json"),
            None => {
                return Err(CliError::Usage(format!(
                    "no --config given and {CONFIG_DIR_ENV} is not set"
                )))
            }
        },
    };
    let config = ExperimentConfig::load(&path)?;
    for warning in config.validate()? {
        eprintln!("warning: {warning}");
    }
    Ok((config, path))
}

fn out_dir(opts: &ConfigOpts, config: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = opts
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(dir)
}

fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn other_axis(axis: Axis) -> Axis {
    match axis {
        Axis::X => Axis::Y,
        Axis::Y => Axis::X,
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32, CliError> {
    let (config, _) = load_config(&args.config)?;
    let out = out_dir(&args.config, &config)?;
    let plane: Plane = args.plane.into();
    let axis: Axis = args.axis.into();
    let seed = args.seed.unwrap_or(config.seed);
    let train = config.optical_train();
    let det = config.detector(plane);
    let model = config
        .source_model(plane, axis)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let tag = config.model_tag(plane, axis, seed);

    match args.protocol {
        ProtocolArg::Line => {
            let plan = config.scan_plan(plane, axis, ScanProtocol::LineScan);
            let mut record = run_scan(&plan, &model, &det, &train, seed)?;
            record.model_tag = Some(tag);
            let csv_path = out.join(format!("record_{plane}_{axis}.csv"));
            let json_path = out.join(format!("record_{plane}_{axis}.json"));
            record.write_csv_path(&csv_path)?;
            write_json(&json_path, &record)?;
            print_record_summary(&record, &det);
            println!("wrote {} and {}", csv_path.display(), json_path.display());
        }
        ProtocolArg::Grid => {
            let plan = config.scan_plan(plane, axis, ScanProtocol::FullGrid);
            let transverse = config
                .source_model(plane, other_axis(axis))
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let mut records = run_full_grid(&plan, &model, &transverse, &det, &train, seed)?;
            for r in &mut records {
                r.model_tag = Some(tag.clone());
            }
            let combined = ScanRecord {
                plan: plan.clone(),
                seed: Some(seed),
                model_tag: Some(tag),
                points: records.iter().flat_map(|r| r.points.clone()).collect(),
            };
            let csv_path = out.join(format!("record_{plane}_{axis}_grid.csv"));
            let json_path = out.join(format!("record_{plane}_{axis}_grid.json"));
            combined.write_csv_path(&csv_path)?;
            write_json(&json_path, &records)?;
            print_record_summary(&combined, &det);
            println!("wrote {} and {}", csv_path.display(), json_path.display());
        }
    }
    Ok(EXIT_OK)
}

fn print_record_summary(record: &ScanRecord, det: &crate::simulator::DetectorSpec) {
    let total: u64 = record.total_coincidences();
    let peak_observed = record.max_coincidences() as f64 / record.plan.dwell_time;
    println!(
        "simulated {}-field {}-axis scan: {} points, {} coincidences total",
        record.plan.plane,
        record.plan.axis,
        record.points.len(),
        total
    );
    println!(
        "peak rates: configured {:.1}/s coincidence, observed {:.1}/s at the best point",
        det.peak_coincidence_rate, peak_observed
    );
}

fn read_record(path: &Path) -> Result<ScanRecord, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_json(path),
        _ => Ok(ScanRecord::read_csv_path(path)?),
    }
}

fn cmd_fit(args: FitArgs) -> Result<i32, CliError> {
    let (config, _) = load_config(&args.config)?;
    let out = out_dir(&args.config, &config)?;
    let record = read_record(&args.record)?;
    let result = fit_with_cap(
        &record,
        args.form.into(),
        args.weights.into(),
        args.max_iterations,
    )?;
    let plane = result.plane;
    let axis = result.axis;
    let fit_path = out.join(format!("fit_{plane}_{axis}.json"));
    write_json(&fit_path, &result)?;
    let contour_path = out.join(format!("contours_{plane}_{axis}.csv"));
    write_contours(&result, &contour_path)?;
    println!(
        "fit {}-field {}-axis ({:?} form): alpha = {:.2} deg, sigma_1 = {:.4e}, \
         sigma_2 = {:.4e}, rho = {:+.4}, amplitude = {:.2}/s",
        plane, axis, result.form, result.alpha_deg, result.sigma_1, result.sigma_2, result.rho,
        result.amplitude
    );
    println!(
        "residual = {:.6e} after {} iterations, converged = {}",
        result.residual_norm, result.iterations, result.converged
    );
    println!("wrote {} and {}", fit_path.display(), contour_path.display());
    if result.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "fit did not converge within {} iterations (best-so-far parameters written)",
            args.max_iterations
        );
        Ok(EXIT_NONCONVERGENCE)
    }
}

fn write_contours(result: &FitResult, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(ScanError::from)?;
    w.write_record(["level", "level_fraction", "point", "x1", "x2"])
        .map_err(ScanError::from)?;
    for line in contour_lines(result, 128) {
        for (i, (x1, x2)) in line.points.iter().enumerate() {
            w.write_record([
                line.label.clone(),
                format!("{}", line.level_fraction),
                i.to_string(),
                format!("{x1}"),
                format!("{x2}"),
            ])
            .map_err(ScanError::from)?;
        }
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<i32, CliError> {
    let (config, _) = load_config(&args.config)?;
    let out = out_dir(&args.config, &config)?;
    let train = config.optical_train();
    let mut near: FitResult = read_json(&args.near)?;
    let mut far: FitResult = read_json(&args.far)?;
    if args.deconvolve {
        near = deconvolve_fiber(&near.as_covariance(), &config.detector(near.plane), &train)?;
        far = deconvolve_fiber(&far.as_covariance(), &config.detector(far.plane), &train)?;
    }
    if near.axis != far.axis {
        return Err(CliError::Usage(format!(
            "near fit is {}-axis but far fit is {}-axis",
            near.axis, far.axis
        )));
    }
    let report = build_report(near.axis, &near, &far, &train)?;
    let path = out.join(format!("report_{}.json", report.axis));
    write_json(&path, &report)?;
    println!("{report}");
    println!("wrote {}", path.display());
    match &report.floor_check {
        Some(chk) if chk.suspicious => {
            eprintln!("physically suspicious: measured product is below the floor");
            Ok(EXIT_PHYSICAL_FLAG)
        }
        _ => Ok(EXIT_OK),
    }
}

fn cmd_limits(args: LimitsArgs) -> Result<i32, CliError> {
    let (config, _) = load_config(&args.config)?;
    let out = out_dir(&args.config, &config)?;
    let limits = physical_limits(&config.optical_train())?;
    let path = out.join("limits.json");
    write_json(&path, &limits)?;
    println!("physical limits for the configured train:");
    println!("  dp_sum floor (pump):        {:.1} hbar/m", limits.dp_sum_min_pump);
    println!(
        "  dx_diff floor (divergence): {:.3} um",
        limits.dx_diff_min_divergence * 1e6
    );
    println!(
        "  dx_diff floor (crystal):    {:.3} um",
        limits.dx_diff_min_crystal * 1e6
    );
    println!("  binding dx_diff floor:      {:.3} um", limits.dx_diff_min * 1e6);
    println!("  product floor:              {:.4} hbar^2", limits.product_floor);
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_report(args: ReportArgs) -> Result<i32, CliError> {
    let (config, config_path) = load_config(&args.config)?;
    let out = out_dir(&args.config, &config)?;
    let train = config.optical_train();
    let limits = physical_limits(&train)?;

    // correlation-diagram grids from the configured models
    let mut diagram_files = Vec::new();
    let near_x = config
        .source_model(Plane::NearField, Axis::X)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let uncorrelated =
        CorrelationModel::equal_width(Plane::NearField, Axis::X, near_x.sigma_in(), 0.0)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut diagrams = vec![("diagram_uncorrelated.csv".to_string(), uncorrelated)];
    for plane in [Plane::NearField, Plane::FarField] {
        for axis in [Axis::X, Axis::Y] {
            let model = config
                .source_model(plane, axis)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            diagrams.push((format!("diagram_{plane}_{axis}.csv"), model));
        }
    }
    for (name, model) in &diagrams {
        let grid = model_diagram(model, 61, 3.0)?;
        let path = out.join(name);
        let file = std::fs::File::create(&path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        write_diagram_csv(&grid, file)?;
        diagram_files.push(name.clone());
    }

    // measured/fitted surfaces and criterion reports from earlier steps
    let mut surfaces = Vec::new();
    let mut criterion_reports: Vec<CriterionReport> = Vec::new();
    if let Some(artifacts) = &args.artifacts {
        if !artifacts.is_dir() {
            return Err(CliError::MissingArtifact(format!(
                "artifact directory {} does not exist",
                artifacts.display()
            )));
        }
        let mut found_any = false;
        for plane in [Plane::NearField, Plane::FarField] {
            for axis in [Axis::X, Axis::Y] {
                let record_path = artifacts.join(format!("record_{plane}_{axis}.csv"));
                let fit_path = artifacts.join(format!("fit_{plane}_{axis}.json"));
                if record_path.is_file() && fit_path.is_file() {
                    let record = ScanRecord::read_csv_path(&record_path)?;
                    let fitted: FitResult = read_json(&fit_path)?;
                    let name = format!("surface_{plane}_{axis}.csv");
                    let path = out.join(&name);
                    let file = std::fs::File::create(&path).map_err(|source| CliError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    write_surface_csv(&record, &fitted, file)?;
                    surfaces.push((name, fitted));
                    found_any = true;
                }
            }
        }
        for axis in [Axis::X, Axis::Y] {
            let path = artifacts.join(format!("report_{axis}.json"));
            if path.is_file() {
                criterion_reports.push(read_json(&path)?);
                found_any = true;
            }
        }
        if !found_any {
            return Err(CliError::MissingArtifact(format!(
                "no records, fits or reports found under {}",
                artifacts.display()
            )));
        }
    }

    let text = render_report_text(
        &config_path,
        &config,
        &limits,
        &diagram_files,
        &surfaces,
        &criterion_reports,
    );
    let path = out.join("report.txt");
    write_text(&path, &text)?;
    print!("{text}");
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn render_report_text(
    config_path: &Path,
    config: &ExperimentConfig,
    limits: &crate::optics::PhysicalLimits,
    diagram_files: &[String],
    surfaces: &[(String, FitResult)],
    criterion_reports: &[CriterionReport],
) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "biphoton correlation report");
    let _ = writeln!(s, "===========================");
    let _ = writeln!(s, "configuration: {}", config_path.display());
    let _ = writeln!(s, "seed: {}", config.seed);
    let _ = writeln!(s);
    let _ = writeln!(s, "optical train");
    let _ = writeln!(
        s,
        "  pump waist {:.1} um, near-field magnification {:.3}, momentum calibration {:.4e} m",
        config.optics.pump_waist_m * 1e6,
        config.optics.nearfield_magnification,
        config.optics.momentum_calibration_k_m
    );
    let _ = writeln!(
        s,
        "  fiber mode field diameter {:.2} um",
        config.detector.fiber_mode_field_diameter_m * 1e6
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "physical floors");
    let _ = writeln!(
        s,
        "  dp_sum >= {:.1} hbar/m, dx_diff >= {:.3} um (divergence {:.3} um, crystal {:.3} um)",
        limits.dp_sum_min_pump,
        limits.dx_diff_min * 1e6,
        limits.dx_diff_min_divergence * 1e6,
        limits.dx_diff_min_crystal * 1e6
    );
    let _ = writeln!(s, "  product floor {:.4} hbar^2", limits.product_floor);
    let _ = writeln!(s);
    if !criterion_reports.is_empty() {
        let _ = writeln!(s, "criteria");
        for report in criterion_reports {
            let _ = writeln!(s, "{report}");
            let _ = writeln!(s);
        }
    }
    if !surfaces.is_empty() {
        let _ = writeln!(s, "fitted surfaces (measured vs fit grids exported)");
        for (name, fitted) in surfaces {
            let _ = writeln!(
                s,
                "  {}: alpha = {:.2} deg, sigma_1 = {:.4e}, sigma_2 = {:.4e}, rho = {:+.4} ({})",
                name,
                fitted.alpha_deg,
                fitted.sigma_1,
                fitted.sigma_2,
                fitted.rho,
                if fitted.converged { "converged" } else { "NOT converged" }
            );
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "correlation diagrams");
    for name in diagram_files {
        let _ = writeln!(s, "  {name}");
    }
    s
}
