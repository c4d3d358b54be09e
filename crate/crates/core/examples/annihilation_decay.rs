//! First-order removal with a state-independent rate: the total amount decays
//! exponentially no matter how molecules are spread over the states.

use subdiffusion::analysis::fit_exp_decay;
use subdiffusion::rdsolver::{gaussian_ic, integrate, species_totals, Grid1D, SystemDef};
use subdiffusion::states::{ReactionKind, ReactionSpec, Scaling};
use subdiffusion::wtfit::StateParams;

fn main() -> subdiffusion::Result<()> {
    let sp = StateParams::from_tabulated(0.5, 0.04, 7.62e-5, &[9.51e-5, 5.40e-4, 3.09e-3, 2.13e-2], &[0.496, 0.207, 0.088, 0.0442])?;
    let weights = sp.mu_i.clone();
    let k = 50.0;
    let sys = SystemDef::new(sp, ReactionSpec::simple(ReactionKind::Annihilation, Scaling::ModelII, k, 0.0))?;
    let mut f = gaussian_ic(Grid1D::new(-1.0, 1.0, 200)?, 1e-3, 0.0, &[1.0], &weights)?;
    let mut totals = Vec::new();
    integrate(&sys, &mut f, 1e-5, 2e-2, 100, |s| totals.push((s.t, species_totals(s)[0])))?;
    for (t, m) in &totals {
        println!("t = {t:.1e}  total = {m:.6e}");
    }
    let r = fit_exp_decay(&totals, (0.0, 2e-2))?;
    println!("fitted rate {:.4} (k = {k})", r.value);
    Ok(())
}
