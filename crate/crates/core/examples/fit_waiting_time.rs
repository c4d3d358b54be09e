//! Fit a four-state exponential sum to the power law t^{-3/2}, then compare
//! the resulting mixture density with the exact waiting-time density.

use subdiffusion::specfun::waiting_time_pdf;
use subdiffusion::wtfit::{approx_waiting_pdf, fit_exponential_sum, model_error, to_state_params, FitProblem};

fn main() -> subdiffusion::Result<()> {
    let p = FitProblem::new(0.5, 1e-4, 5e-2, 4)?;
    let fit = fit_exponential_sum(&p)?;
    let sp = to_state_params(&fit, 0.04, &p)?;
    println!("eps_mod = {:.3e}, tau = {:.4e}, sigma2 = {:.4e}", model_error(&fit, &p), sp.tau, sp.sigma2);
    println!("{:>4} {:>12} {:>12}", "i", "tau_i", "weight");
    for i in 0..sp.n {
        println!("{i:>4} {:>12.4e} {:>12.4e}", sp.tau_i[i], sp.mu_i[i]);
    }
    println!("\n{:>10} {:>12} {:>12} {:>12}", "t", "sum*t^1.5", "mixture", "exact");
    for t in [1e-4, 1e-3, 1e-2, 5e-2] {
        let flat = fit.evaluate(t) * t.powf(1.5);
        println!("{t:>10.1e} {flat:>12.5} {:>12.4e} {:>12.4e}", approx_waiting_pdf(&sp, t), waiting_time_pdf(0.5, sp.tau, t)?);
    }
    Ok(())
}
