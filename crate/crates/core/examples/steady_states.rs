//! Well-mixed steady states, equivalent macroscopic rates and generator checks
//! for the shipped reaction configs.

use std::path::PathBuf;

use subdiffusion::cli::{steady_report, RunConfig};

fn main() -> subdiffusion::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["mono_modelI", "bimolecular_reaction1", "bimolecular_reaction2", "annihilation_run1_modelI"] {
        let doc = steady_report(&RunConfig::load(&dir.join(format!("{name}.json")), &[])?)?;
        println!("{name}");
        println!("  stationary occupation {}", doc["stationary"]);
        if let Some(eq) = doc.get("equivalent") {
            println!("  k_eq = {:.4e}, l_eq = {:.4e}", eq["k_eq"].as_f64().unwrap_or(f64::NAN), eq["l_eq"].as_f64().unwrap_or(f64::NAN));
        }
        if let Some(kp) = doc.get("kprime") {
            println!("  apparent rate from {:.4} down to {:.4}", kp["k0"].as_f64().unwrap_or(f64::NAN), kp["k_inf"].as_f64().unwrap_or(f64::NAN));
        }
        if let Some(w) = doc.get("jacobian_w") {
            println!("  jacobian checks {w}");
        }
    }
    Ok(())
}
