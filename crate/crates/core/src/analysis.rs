//! Moments, regressions and error norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::integrate_pieces;
use crate::rdsolver::Grid1D;

/// Least-squares line through transformed samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    /// Exponent for power laws, decay rate for exponentials.
    pub value: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the transformed fit.
    pub residual: f64,
    pub points: usize,
    pub window: (f64, f64),
}

/// Second moment of a summed field about `origin`: h·Σ(x−o)²U / h·ΣU.
pub fn msd_of_field(grid: &Grid1D, u: &[f64], origin: f64) -> Result<f64> {
    if u.len() != grid.nx {
        return Err(Error::invalid("field length does not match the grid"));
    }
    let (mut m0, mut m2) = (0.0, 0.0);
    for (j, v) in u.iter().enumerate() {
        let d = grid.x(j) - origin;
        m0 += v;
        m2 += d * d * v;
    }
    if !(m0.abs() > 0.0) {
        return Err(Error::invalid("field has vanishing total"));
    }
    Ok(m2 / m0)
}

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    (slope, icpt, (rss / n).sqrt())
}

fn in_window(points: &[(f64, f64)], window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    if !(window.0 < window.1) {
        return Err(Error::invalid("regression window must have t_a < t_b"));
    }
    let pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if pts.len() < 3 {
        return Err(Error::invalid(format!("only {} samples in the regression window", pts.len())));
    }
    Ok(pts)
}

/// Slope of log y against log t.
pub fn fit_power_law(points: &[(f64, f64)], window: (f64, f64)) -> Result<RegressionResult> {
    let pts = in_window(points, window)?;
    if pts.iter().any(|(t, y)| !(*t > 0.0 && *y > 0.0)) {
        return Err(Error::invalid("power-law fit needs positive t and y"));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, residual) = line_fit(&xs, &ys);
    Ok(RegressionResult { value: slope, intercept, residual, points: pts.len(), window })
}

/// Decay rate −d log y / dt.
pub fn fit_exp_decay(points: &[(f64, f64)], window: (f64, f64)) -> Result<RegressionResult> {
    let pts = in_window(points, window)?;
    if pts.iter().any(|(_, y)| !(*y > 0.0)) {
        return Err(Error::invalid("exponential fit needs positive y"));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, residual) = line_fit(&xs, &ys);
    Ok(RegressionResult { value: -slope, intercept, residual, points: pts.len(), window })
}

/// ‖a − b‖₂ / ‖b‖₂ over grid nodes.
pub fn l2_rel_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("fields differ in length"));
    }
    let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(den > 0.0) {
        return Err(Error::invalid("reference field has zero norm"));
    }
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Convolve `f` with a centred Gaussian of the given variance, at `x`.
/// A kink of `f` at the origin is handled by splitting there.
pub fn gaussian_smooth(f: impl Fn(f64) -> f64, x: f64, variance: f64) -> f64 {
    let s = variance.sqrt();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * variance).sqrt();
    let g = |y: f64| f(x - y) * norm * (-y * y / (2.0 * variance)).exp();
    let (lo, hi) = (-9.0 * s, 9.0 * s);
    let mut breaks = vec![lo, hi];
    if x > lo && x < hi {
        breaks.insert(1, x);
    }
    integrate_pieces(g, &breaks, 1e-15, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..20).map(|k| (k as f64 * 0.1, 3.0 * (k as f64 * 0.1).powf(0.7))).collect();
        let r = fit_power_law(&pts, (0.0, 10.0)).unwrap();
        assert!((r.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn exact_exponential() {
        let pts: Vec<(f64, f64)> = (0..20).map(|k| (k as f64 * 0.1, 5.0 * (-2.0 * k as f64 * 0.1).exp())).collect();
        let r = fit_exp_decay(&pts, (0.0, 10.0)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let pts = [(1.0, 1.0), (2.0, 2.0)];
        assert!(fit_power_law(&pts, (0.0, 3.0)).is_err());
    }

    #[test]
    fn point_mass_has_zero_msd() {
        let g = Grid1D::new(-1.0, 1.0, 5).unwrap();
        let u = [0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(msd_of_field(&g, &u, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn smoothing_a_gaussian_adds_variance() {
        let n = |x: f64, v: f64| (-x * x / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let got = gaussian_smooth(|y| n(y, 0.3), 0.4, 0.1);
        assert!((got - n(0.4, 0.4)).abs() < 1e-10);
    }
}
