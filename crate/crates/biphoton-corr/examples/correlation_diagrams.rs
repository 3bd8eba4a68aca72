//! Export correlation diagrams for an uncorrelated beam and for the
//! reference near/far-field biphoton models.
//!
//! ```bash
//! cargo run --example correlation_diagrams
//! ```

use biphoton_corr::config::{reference_config_path, ExperimentConfig};
use biphoton_corr::correlation::{Axis, CorrelationModel, Plane};
use biphoton_corr::report::{model_diagram, write_diagram_csv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig::load(&reference_config_path())?;
    let out = std::path::Path::new("out/examples");
    std::fs::create_dir_all(out)?;

    let near = config.source_model(Plane::NearField, Axis::X)?;
    let far = config.source_model(Plane::FarField, Axis::X)?;
    let uncorrelated =
        CorrelationModel::equal_width(Plane::NearField, Axis::X, near.sigma_in(), 0.0)?;

    for (name, model) in [
        ("uncorrelated", &uncorrelated),
        ("near_x", &near),
        ("far_x", &far),
    ] {
        let grid = model_diagram(model, 61, 3.0)?;
        let (v1, v2, cov) = grid.second_moments();
        let orientation = if cov.abs() < 0.05 * (v1 * v2).sqrt() {
            "circular"
        } else if cov > 0.0 {
            "ellipse along x2 = x1 (correlated)"
        } else {
            "ellipse along x2 = -x1 (anti-correlated)"
        };
        let path = out.join(format!("diagram_{name}.csv"));
        write_diagram_csv(&grid, std::fs::File::create(&path)?)?;
        println!(
            "{name:>13}: rho = {:+.2}, diagram {} -> {}",
            model.rho(),
            orientation,
            path.display()
        );
    }
    Ok(())
}
