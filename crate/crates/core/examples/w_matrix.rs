//! Generator checks on the exchange matrix and the adjoint envelope of a
//! linear reaction Jacobian.

use nalgebra::DVector;
use subdiffusion::states::{
    adjoint_envelope, assemble_jacobian, build_reaction_ops, build_state_matrix, is_w_matrix, ReactionKind, ReactionSpec,
    Scaling,
};
use subdiffusion::wtfit::StateParams;

fn main() -> subdiffusion::Result<()> {
    let sp = StateParams::from_tabulated(0.5, 0.04, 7.62e-5, &[9.51e-5, 5.40e-4, 3.09e-3, 2.13e-2], &[0.496, 0.207, 0.088, 0.0442])?;
    let m = build_state_matrix(&sp, true);
    println!("exchange matrix: {:?}", is_w_matrix(&m.a));
    let leaky = build_state_matrix(&sp, false);
    println!("raw weights: {:?}", is_w_matrix(&leaky.a).reason());

    let rs = ReactionSpec::simple(ReactionKind::Monomolecular, Scaling::ModelI, 1.0, 2.0);
    let ops = build_reaction_ops(&rs, &sp)?;
    let jac = assemble_jacobian(&rs, &m, &ops, None)?;
    println!("jacobian passes: {}", is_w_matrix(&jac.b).passes());
    let eta0 = DVector::from_fn(jac.b.nrows(), |i, _| (i as f64).sin());
    for (t, (hi, lo)) in [0.0, 1e-4, 1e-3, 1e-2].iter().zip(adjoint_envelope(&jac.b, &eta0, &[0.0, 1e-4, 1e-3, 1e-2])) {
        println!("t = {t:.0e}  max {hi:+.5}  min {lo:+.5}");
    }
    Ok(())
}
