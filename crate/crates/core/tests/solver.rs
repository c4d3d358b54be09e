use proptest::prelude::*;

use subdiffusion::rdsolver::{
    conserved_totals, gaussian_ic, integrate, integrate_collect, species_totals, uniform_ic, FieldSet, Grid1D, SystemDef,
};
use subdiffusion::states::{ReactionKind, ReactionSpec, Scaling};
use subdiffusion::wtfit::StateParams;

fn params(alpha: f64, taus: &[f64], weights: &[f64]) -> StateParams {
    StateParams::from_tabulated(alpha, 0.04, 1e-3, taus, weights).unwrap()
}

fn arb_params() -> impl Strategy<Value = StateParams> {
    (0.3f64..1.0, prop::collection::vec((1.0f64..5.0, 0.05f64..1.0), 1..4)).prop_map(|(alpha, raw)| {
        let mut tau = 1e-4;
        let mut taus = Vec::new();
        let mut weights = Vec::new();
        for (step, w) in raw {
            tau *= step;
            taus.push(tau);
            weights.push(w);
        }
        params(alpha, &taus, &weights)
    })
}

fn grid() -> Grid1D {
    Grid1D::new(-0.5, 0.5, 40).unwrap()
}

fn run(sys: &SystemDef, f0: &FieldSet, dt: f64, steps: usize) -> FieldSet {
    let mut f = f0.clone();
    integrate(sys, &mut f, dt, dt * steps as f64, steps, |_| {}).unwrap();
    f
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn free_diffusion_keeps_mass_and_mirror_symmetry(sp in arb_params(), var in 1e-3f64..1e-2) {
        let weights = sp.mu_i.clone();
        let sys = SystemDef::new(sp, ReactionSpec::none()).unwrap();
        let f0 = gaussian_ic(grid(), var, 0.0, &[1.0], &weights).unwrap();
        let f = run(&sys, &f0, 1e-4, 20);
        prop_assert!(close(species_totals(&f)[0], species_totals(&f0)[0], 1e-11));
        let nx = f.grid.nx;
        for i in 0..sys.states() {
            let c = f.component(0, i);
            for j in 0..nx / 2 {
                prop_assert!((c[j] - c[nx - 1 - j]).abs() <= 1e-12 * c.iter().cloned().fold(0.0, f64::max));
            }
        }
    }

    #[test]
    fn free_diffusion_stays_nonnegative(sp in arb_params()) {
        let weights = sp.mu_i.clone();
        let sys = SystemDef::new(sp, ReactionSpec::none()).unwrap();
        let f0 = gaussian_ic(grid(), 4e-3, 0.1, &[1.0], &weights).unwrap();
        let f = run(&sys, &f0, 2e-5, 50);
        let peak = f.data.iter().cloned().fold(0.0, f64::max);
        prop_assert!(f.data.iter().all(|v| *v >= -1e-9 * peak));
    }

    #[test]
    fn monomolecular_total_is_conserved(sp in arb_params(), k in 0.0f64..50.0, l in 0.0f64..50.0, model in prop::bool::ANY) {
        let weights = sp.mu_i.clone();
        let scaling = if model { Scaling::ModelI } else { Scaling::ModelII };
        let sys = SystemDef::new(sp, ReactionSpec::simple(ReactionKind::Monomolecular, scaling, k, l)).unwrap();
        let f0 = gaussian_ic(grid(), 5e-3, 0.0, &[1.0, 0.3], &weights).unwrap();
        let before = conserved_totals(&f0, &sys)[0].1;
        let f = run(&sys, &f0, 2e-6, 20);
        prop_assert!(close(conserved_totals(&f, &sys)[0].1, before, 1e-11));
    }

    // A uniform per-state rate removes the same fraction of every component,
    // so the total follows the scalar Crank-Nicolson factor exactly.
    #[test]
    fn uniform_decay_follows_the_scalar_factor(sp in arb_params(), k in 1.0f64..200.0) {
        let weights = sp.mu_i.clone();
        let sys = SystemDef::new(sp, ReactionSpec::simple(ReactionKind::Annihilation, Scaling::ModelII, k, 0.0)).unwrap();
        let f0 = gaussian_ic(grid(), 5e-3, 0.0, &[1.0], &weights).unwrap();
        let dt = 2e-6;
        let steps = 30;
        let f = run(&sys, &f0, dt, steps);
        let factor = ((1.0 - 0.5 * k * dt) / (1.0 + 0.5 * k * dt)).powi(steps as i32);
        prop_assert!(close(species_totals(&f)[0], factor * species_totals(&f0)[0], 1e-10));
    }

    #[test]
    fn bimolecular_keeps_both_conserved_pairs(sp in arb_params(), k in 0.0f64..20.0, l in 0.0f64..20.0) {
        let n = sp.n;
        let sys = SystemDef::new(sp, ReactionSpec::simple(ReactionKind::Bimolecular, Scaling::ModelII, k, l)).unwrap();
        let f0 = gaussian_ic(grid(), 5e-3, 0.0, &[1.0, 0.7, 0.2], &vec![1.0 / n as f64; n]).unwrap();
        let before = conserved_totals(&f0, &sys);
        let f = run(&sys, &f0, 1e-5, 20);
        for (a, b) in conserved_totals(&f, &sys).iter().zip(&before) {
            prop_assert!(close(a.1, b.1, 1e-11), "{} drifted from {} to {}", a.0, b.1, a.1);
        }
    }
}

#[test]
fn uniform_data_at_equilibrium_does_not_move() {
    let sp = params(0.5, &[1e-4, 1e-3], &[0.6, 0.4]);
    let sys = SystemDef::new(sp, ReactionSpec::none()).unwrap();
    // uniform occupation proportional to the stationary distribution of the exchange operator
    let pi = subdiffusion::states::stationary_distribution(&sys.matrices).unwrap();
    let f0 = uniform_ic(grid(), &[pi.iter().cloned().collect()]).unwrap();
    let f = run(&sys, &f0, 1e-4, 10);
    for (a, b) in f.data.iter().zip(&f0.data) {
        assert!((a - b).abs() <= 1e-14, "{a} vs {b}");
    }
}

#[test]
fn collect_returns_the_requested_snapshots() {
    let sp = params(0.5, &[1e-4], &[1.0]);
    let sys = SystemDef::new(sp, ReactionSpec::none()).unwrap();
    let f0 = gaussian_ic(grid(), 5e-3, 0.0, &[1.0], &[1.0]).unwrap();
    let snaps = integrate_collect(&sys, &f0, 1e-4, 1e-3, 5).unwrap();
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    assert_eq!(times.len(), 3);
    assert!((times[1] - 5e-4).abs() < 1e-15 && (times[2] - 1e-3).abs() < 1e-15);
}

#[test]
fn mismatched_end_time_is_rejected() {
    let sp = params(0.5, &[1e-4], &[1.0]);
    let sys = SystemDef::new(sp, ReactionSpec::none()).unwrap();
    let mut f = gaussian_ic(grid(), 5e-3, 0.0, &[1.0], &[1.0]).unwrap();
    assert!(integrate(&sys, &mut f, 3e-4, 1e-3, 1, |_| {}).is_err());
    let mut wrong = gaussian_ic(grid(), 5e-3, 0.0, &[1.0, 1.0], &[1.0]).unwrap();
    assert!(integrate(&sys, &mut wrong, 1e-4, 1e-3, 1, |_| {}).is_err());
}
