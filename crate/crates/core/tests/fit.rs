//! Waiting-time fitting and the mapping to internal states.

use proptest::prelude::*;
use subdiffusion::quad::integrate_pieces;
use subdiffusion::wtfit::{
    approx_waiting_pdf, fit_auto, fit_exponential_sum, model_error, tau_eq, to_state_params, FitProblem, StateParams,
};

const SET1_TAU_I: [f64; 4] = [9.51e-5, 5.40e-4, 3.09e-3, 2.13e-2];
const SET1_MU: [f64; 4] = [0.496, 0.207, 0.088, 0.0442];
const SET2_TAU_I: [f64; 5] = [7.58e-4, 3.55e-3, 1.66e-2, 7.89e-2, 4.78e-1];
const SET2_MU: [f64; 5] = [0.323, 0.148, 0.0684, 0.0324, 0.0185];

#[test]
fn tabulated_sigma2_for_both_sets() {
    let s1 = StateParams::from_tabulated(0.5, 0.04, 7.62e-5, &SET1_TAU_I, &SET1_MU).unwrap();
    let s2 = StateParams::from_tabulated(0.5, 0.04, 3.22e-4, &SET2_TAU_I, &SET2_MU).unwrap();
    // tabulated to three digits
    assert!((s1.sigma2 / 3.49e-4 - 1.0).abs() < 5e-3);
    assert!((s2.sigma2 / 7.18e-4 - 1.0).abs() < 5e-3);
}

#[test]
fn fits_beat_the_reference_error() {
    for (t_min, t_max, n, reference) in [(1e-4, 5e-2, 4, 5.25e-2), (1e-3, 1.0, 5, 2.92e-2)] {
        let p = FitProblem::new(0.5, t_min, t_max, n).unwrap();
        let fit = fit_exponential_sum(&p).unwrap();
        assert!(fit.eps_mod <= reference, "{t_min}..{t_max}: {}", fit.eps_mod);
        assert!((fit.eps_mod - model_error(&fit, &p)).abs() < 1e-15);
    }
}

#[test]
fn fitted_states_resemble_the_table() {
    let p = FitProblem::new(0.5, 1e-4, 5e-2, 4).unwrap();
    let sp = to_state_params(&fit_exponential_sum(&p).unwrap(), 0.04, &p).unwrap();
    // time scales spread over the window like the tabulated ones, within a factor 3
    for (a, b) in sp.tau_i.iter().zip(SET1_TAU_I) {
        assert!(a / b > 1.0 / 3.0 && a / b < 3.0, "{a} vs {b}");
    }
    assert!((sp.mu_i.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn more_terms_do_not_hurt() {
    let mut last = f64::INFINITY;
    for n in 2..=5 {
        let p = FitProblem::new(0.5, 1e-4, 5e-2, n).unwrap();
        let e = fit_exponential_sum(&p).unwrap().eps_mod;
        assert!(e <= last * 1.001, "N={n}: {e} after {last}");
        last = e;
    }
}

#[test]
fn auto_fit_reaches_target() {
    let p = FitProblem::new(0.7, 1e-3, 1.0, 2).unwrap();
    let fit = fit_auto(&p, 3e-2, 8).unwrap();
    assert!(fit.eps_mod <= 3e-2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigma2_identity(alpha in 0.1f64..0.95, k in 1e-3f64..1.0, tau in 1e-6f64..1e-1) {
        let sp = StateParams::from_tabulated(alpha, k, tau, &[tau, 10.0 * tau], &[0.6, 0.3]).unwrap();
        prop_assert!((sp.sigma2 / (k * tau.powf(alpha)) - 1.0).abs() < 1e-12);
        let c = sp.self_consistent();
        prop_assert!((c.sigma2 / (k * c.tau.powf(alpha)) - 1.0).abs() < 1e-12);
        prop_assert_eq!(&c.tau_i, &sp.tau_i);
        for (a, b) in c.mu_i.iter().zip(&sp.mu_i) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_density_is_normalized(t1 in 1e-5f64..1e-3, r in 2.0f64..50.0, w in 0.05f64..0.95) {
        let sp = StateParams::from_tabulated(0.5, 0.04, t1, &[t1, r * t1], &[w, 1.0 - w]).unwrap();
        let breaks: Vec<f64> = (0..=40).map(|k| k as f64 * r * t1).collect();
        let mass = integrate_pieces(|t| approx_waiting_pdf(&sp, t), &breaks, 1e-14, 1e-12);
        prop_assert!((mass - 1.0).abs() < 1e-9, "{}", mass);
        let te = tau_eq(&sp);
        prop_assert!(te >= t1 * (1.0 - 1e-12) && te <= r * t1 * (1.0 + 1e-12));
    }
}
