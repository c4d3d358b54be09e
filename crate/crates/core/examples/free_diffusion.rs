//! Integrate the four-state diffusion config and compare the summed field
//! with the subdiffusive Green's function smoothed by the initial Gaussian.

use std::path::PathBuf;

use subdiffusion::analysis::l2_rel_error;
use subdiffusion::cli::{analytic_fields, simulate, RunConfig};
use subdiffusion::rdsolver::observable_sum;

fn main() -> subdiffusion::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/diffusion_set1.json");
    // a shorter run keeps the example quick
    let cfg = RunConfig::load(&path, &["t_end=5e-3".to_string()])?;
    let sim = simulate(&cfg)?;
    let u = &observable_sum(&sim.last)[0];
    let exact = &analytic_fields(&cfg, sim.last.t)?[0];
    println!("t = {:.1e}, steps = {}, relative L2 error = {:.3e}", sim.last.t, sim.report.steps, l2_rel_error(u, exact)?);
    let nodes = sim.last.grid.nodes();
    for j in (0..nodes.len()).step_by(nodes.len() / 8) {
        println!("x = {:>8.4}  numeric {:>12.5e}  analytic {:>12.5e}", nodes[j], u[j], exact[j]);
    }
    Ok(())
}
