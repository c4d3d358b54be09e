//! Mean-square displacement of the deterministic field on a log time grid,
//! with power-law slopes over the anomalous and asymptotic regimes.

use std::path::PathBuf;

use subdiffusion::cli::{msd_series, RunConfig};

fn main() -> subdiffusion::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/msd_set1.json");
    let r = msd_series(&RunConfig::load(&path, &[])?)?;
    for (t, m) in r.times.iter().zip(&r.msd).step_by(4) {
        println!("t = {t:.3e}  msd = {m:.4e}");
    }
    println!("anomalous slope {:.4} (rms residual {:.2e}, {} points)", r.alpha.value, r.alpha.residual, r.alpha.points);
    if let (Some(e), Some(l)) = (r.early, r.late) {
        println!("early slope {:.3}, late slope {:.3}", e.value, l.value);
    }
    Ok(())
}
