//! Evaluate the variance-product criterion in its three equivalent forms
//! for both transverse axes of the reference measurement.
//!
//! ```bash
//! cargo run --example entanglement_criteria
//! ```

use biphoton_corr::criteria::{
    covariance_criterion, m_squared, mancini_from_covariance, mancini_product,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // (sigma_x_in [m], rho_x, sigma_p_in [hbar/m], rho_p) per axis
    let axes = [
        ("x", 39.7e-6, 0.53, 15_300.0, -0.77),
        ("y", 41.5e-6, 0.45, 25_100.0, -0.86),
    ];
    for (axis, sigma_x, rho_x, sigma_p, rho_p) in axes {
        let var_x_diff = 2.0 * sigma_x * sigma_x * (1.0 - rho_x);
        let var_p_sum = 2.0 * sigma_p * sigma_p * (1.0 + rho_p);
        let (from_variances, _) = mancini_product(var_x_diff, var_p_sum)?;
        let (from_covariance, verdict) =
            mancini_from_covariance(sigma_x, rho_x, sigma_p, rho_p)?;
        let m2 = m_squared(sigma_x, sigma_p)?;
        let crit = covariance_criterion(rho_x, rho_p, m2)?;

        println!("{axis}-axis:");
        println!("  D2(x1-x2)*D2(p1+p2)        = {from_variances:.4} hbar^2");
        println!("  2s_x^2(1-rx)*2s_p^2(1+rp)  = {from_covariance:.4} hbar^2");
        println!(
            "  (1-rx)(1+rp)(M^2)^2        = {:.4}   with M^2 = {m2:.3}",
            crit.value
        );
        println!(
            "  mode-limited bracket         [{:.4}, 1); verdict: {verdict}",
            crit.lower_bound
        );
        println!();
    }
    Ok(())
}
