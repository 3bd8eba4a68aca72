//! Simulate the near-field line-scan campaign and print a coarse count
//! map of one passive position.
//!
//! ```bash
//! cargo run --example simulate_scan
//! ```

use biphoton_corr::config::{reference_config_path, ExperimentConfig};
use biphoton_corr::correlation::{Axis, Plane};
use biphoton_corr::simulator::{run_scan, ScanProtocol};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig::load(&reference_config_path())?;
    let train = config.optical_train();
    let det = config.detector(Plane::NearField);
    let model = config.source_model(Plane::NearField, Axis::X)?;
    let plan = config.scan_plan(Plane::NearField, Axis::X, ScanProtocol::LineScan);

    let record = run_scan(&plan, &model, &det, &train, config.seed)?;
    println!(
        "simulated {} points ({} active x {} passive), {} coincidences total",
        record.points.len(),
        plan.points,
        plan.passive_positions.len(),
        record.total_coincidences()
    );

    // coincidence counts along the line scan at the central passive position
    let central = plan.passive_positions[plan.passive_positions.len() / 2];
    println!("counts with the passive probe at {:.2} um:", central * 1e6);
    let max = record.max_coincidences().max(1);
    for p in record.points.iter().filter(|p| p.passive_pos == central) {
        let bar = "#".repeat((p.coincidences * 50 / max) as usize);
        println!("  {:>7.2} um  {:>4}  {bar}", p.active_x * 1e6, p.coincidences);
    }

    let out = std::path::Path::new("out/examples");
    std::fs::create_dir_all(out)?;
    let path = out.join("record_near_x.csv");
    record.write_csv_path(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
