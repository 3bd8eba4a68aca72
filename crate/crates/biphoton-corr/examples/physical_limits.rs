//! Physical floors on the observable correlation strength for the
//! reference optical train, and a check of a measured product against
//! them.
//!
//! ```bash
//! cargo run --example physical_limits
//! ```

use biphoton_corr::config::{reference_config_path, ExperimentConfig};
use biphoton_corr::optics::{mode_limited_bounds, physical_limits, product_floor_check};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig::load(&reference_config_path())?;
    let limits = physical_limits(&config.optical_train())?;

    println!("pump-limited momentum-sum floor:   {:>9.0} hbar/m", limits.dp_sum_min_pump);
    println!(
        "divergence-limited position floor: {:>9.2} um",
        limits.dx_diff_min_divergence * 1e6
    );
    println!(
        "crystal-thickness position floor:  {:>9.2} um (negligible here)",
        limits.dx_diff_min_crystal * 1e6
    );
    println!("variance-product floor:            {:>9.4} hbar^2", limits.product_floor);
    println!();

    for measured in [0.16, 0.095, 0.01] {
        let check = product_floor_check(&limits, measured)?;
        println!(
            "measured {measured:.3} hbar^2: {:.2}x the floor{}",
            check.ratio,
            if check.suspicious {
                "  ** below the floor: physically suspicious **"
            } else {
                ""
            }
        );
    }
    println!();
    for m2 in [1.0, 1.215, 2.0] {
        let (lo, hi) = mode_limited_bounds(m2)?;
        println!("M^2 = {m2:<6}: criterion bracket [{lo:.4}, {hi:.1})");
    }
    Ok(())
}
