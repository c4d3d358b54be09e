//! Lattice SSA ensemble against the deterministic solver on the same voxels.

use std::path::PathBuf;

use subdiffusion::cli::{ssa_compare, RunConfig};

fn main() -> subdiffusion::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/ssa_mono.json");
    let cfg = RunConfig::load(&path, &["ssa.replicas=200".to_string()])?;
    let c = ssa_compare(&cfg)?;
    let m = c.x.len();
    for (k, t) in c.times.iter().enumerate() {
        println!("t = {t:.1e}");
        for s in 0..c.species {
            let i = s * m + m / 2;
            println!("  species {s}, centre voxel: ssa {:.4} ± {:.4}, deterministic {:.4}", c.mean[k][i], c.stderr[k][i], c.deterministic[k][i]);
        }
    }
    println!("worst |z| = {:.2}", c.worst_z(cfg.ssa.replicas));
    Ok(())
}
