//! Effect of the fiber-probe blur on the measured correlation, and its
//! removal by variance-domain deconvolution.
//!
//! ```bash
//! cargo run --example deconvolution
//! ```

use biphoton_corr::config::{reference_config_path, ExperimentConfig};
use biphoton_corr::correlation::{Axis, Plane};
use biphoton_corr::criteria::build_report;
use biphoton_corr::fitter::{deconvolve_fiber, FitForm, FitResult};
use biphoton_corr::optics::model_to_measurement;
use biphoton_corr::simulator::blurred_model;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig::load(&reference_config_path())?;
    let train = config.optical_train();

    // exact measurement-plane fits of the blurred reference models
    let mut blurred_fits = Vec::new();
    for plane in [Plane::NearField, Plane::FarField] {
        let det = config.detector(plane);
        let model = config.source_model(plane, Axis::X)?;
        let meas = model_to_measurement(&blurred_model(&model, &det, &train)?, &train)?;
        println!(
            "{plane}-field probe blur: sigma {:.3} um -> {:.3} um, rho {:+.3} -> {:+.3}",
            model_to_measurement(&model, &train)?.sigma_1() * 1e6,
            meas.sigma_1() * 1e6,
            model.rho(),
            meas.rho()
        );
        blurred_fits.push(FitResult::from_covariance_params(
            plane,
            Axis::X,
            FitForm::Covariance,
            meas.center_1(),
            meas.center_2(),
            det.peak_coincidence_rate,
            meas.sigma_1(),
            meas.sigma_2(),
            meas.rho(),
            0.0,
            true,
            0,
            None,
        )?);
    }

    let raw = build_report(Axis::X, &blurred_fits[0], &blurred_fits[1], &train)?;
    let near_dec = deconvolve_fiber(&blurred_fits[0], &config.detector(Plane::NearField), &train)?;
    let far_dec = deconvolve_fiber(&blurred_fits[1], &config.detector(Plane::FarField), &train)?;
    let corrected = build_report(Axis::X, &near_dec, &far_dec, &train)?;

    println!();
    println!("variance product as measured (blurred):   {:.4} hbar^2", raw.var_product);
    println!("variance product after deconvolution:      {:.4} hbar^2", corrected.var_product);
    println!("verdicts: {} -> {}", raw.verdict, corrected.verdict);
    Ok(())
}
