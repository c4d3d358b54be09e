//! Particle sampling of the multistate random walk: one path, then the
//! ensemble MSD and its local slope.

use subdiffusion::stochastic::{ctrw_msd, ctrw_trajectory};
use subdiffusion::wtfit::StateParams;

fn main() -> subdiffusion::Result<()> {
    let sp = StateParams::from_tabulated(0.5, 0.04, 7.62e-5, &[9.51e-5, 5.40e-4, 3.09e-3, 2.13e-2], &[0.496, 0.207, 0.088, 0.0442])?;
    let path = ctrw_trajectory(&sp, 1e-2, 0.0, 1)?;
    println!("{} jumps by t = 1e-2, final position {:.4e}", path.times.len() - 1, path.positions.last().unwrap());
    let times: Vec<f64> = (0..=8).map(|k| 1e-4 * 10f64.powf(k as f64 * 0.25)).collect();
    let msd = ctrw_msd(&sp, 20_000, &times, 7, 0.0)?;
    for w in times.windows(2).zip(msd.windows(2)) {
        let ((t0, t1), (m0, m1)) = ((w.0[0], w.0[1]), (w.1[0], w.1[1]));
        println!("t = {t1:.3e}  msd = {m1:.4e}  local slope {:.3}", (m1 / m0).ln() / (t1 / t0).ln());
    }
    Ok(())
}
