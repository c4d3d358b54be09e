//! Special functions and closed-form Green's functions for order one half.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::quad::integrate_pieces;

/// Orders of the two-parameter Mittag-Leffler function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLParams {
    pub alpha: f64,
    pub beta: f64,
}

impl MLParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(beta > 0.0) {
            return Err(Error::invalid(format!("Mittag-Leffler orders out of range: alpha={alpha}, beta={beta}")));
        }
        Ok(Self { alpha, beta })
    }
}

/// 1/Γ(x), zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x < 0.5 {
        // reflection keeps the large-negative branch finite
        let s = (PI * x).sin();
        return s * (ln_gamma(1.0 - x)).exp() / PI;
    }
    if x > 170.0 {
        return (-ln_gamma(x)).exp();
    }
    1.0 / gamma(x)
}

/// Neumaier compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

const ML_TERM_CAP: usize = 2000;
const ML_TAYLOR_RADIUS: f64 = 1.0;
const ML_ASYMPTOTIC_RADIUS: f64 = 30.0;
// more nodes push the contour further right and lose digits to exp(s)
const ML_CONTOUR_NODES: i32 = 20;

/// Two-parameter Mittag-Leffler function E_{α,β}(z) for real z.
///
/// Taylor series near the origin and for positive arguments, a hyperbolic
/// Bromwich contour for moderate negative arguments, and the algebraic
/// asymptotic series far out on the negative axis. Target relative accuracy
/// is 1e-10 for |z| ≤ 50 (a few 1e-10 on the contour branch).
pub fn mittag_leffler(p: MLParams, z: f64) -> Result<f64> {
    let MLParams { alpha, beta } = MLParams::new(p.alpha, p.beta)?;
    if !z.is_finite() {
        return Err(Error::invalid("Mittag-Leffler argument must be finite"));
    }
    if alpha == 1.0 && beta == 1.0 {
        return Ok(z.exp());
    }
    if z >= -ML_TAYLOR_RADIUS {
        return ml_taylor(alpha, beta, z);
    }
    if alpha == 1.0 {
        // the contour below assumes no pole on the principal sheet
        return ml_taylor(alpha, beta, z);
    }
    if -z >= ML_ASYMPTOTIC_RADIUS {
        if let Some(v) = ml_asymptotic(alpha, beta, z) {
            return Ok(v);
        }
    }
    Ok(ml_contour(alpha, beta, z))
}

fn ml_taylor(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    let mut acc = KahanSum::default();
    let mut abs_sum = 0.0;
    let mut last = f64::INFINITY;
    let lnz = z.abs().ln();
    for k in 0..ML_TERM_CAP {
        let arg = alpha * k as f64 + beta;
        let mag = if k == 0 { rgamma(beta) } else { (k as f64 * lnz - ln_gamma(arg)).exp() };
        let term = if z < 0.0 && k % 2 == 1 { -mag } else { mag };
        acc.add(term);
        abs_sum += mag;
        last = mag;
        let s = acc.value();
        if !s.is_finite() {
            break;
        }
        // terms decrease monotonically once αk exceeds |z|^{1/α}
        if k > 2 && mag <= 1e-17 * s.abs().max(1e-300) && (k as f64 * alpha) > z.abs().powf(1.0 / alpha) {
            if abs_sum * f64::EPSILON > 1e-10 * s.abs() {
                return Err(Error::Cancellation { z, digits: (abs_sum / s.abs()).log10() });
            }
            return Ok(s);
        }
        if z == 0.0 {
            return Ok(s);
        }
    }
    Err(Error::NoConvergence { terms: ML_TERM_CAP, partial: acc.value(), last })
}

fn ml_asymptotic(alpha: f64, beta: f64, z: f64) -> Option<f64> {
    // −Σ_{k≥1} z^{−k}/Γ(β−αk); stop at the smallest term
    let mut acc = KahanSum::default();
    let mut prev = f64::INFINITY;
    let mut zpow = 1.0;
    for k in 1..200 {
        zpow /= z;
        let arg = beta - alpha * k as f64;
        // arguments that land on a pole up to rounding give a spurious tiny term
        if arg <= 0.0 && (arg - arg.round()).abs() < 1e-9 {
            continue;
        }
        let term = -zpow * rgamma(arg);
        if term.abs() > prev && k > 3 {
            break;
        }
        acc.add(term);
        prev = term.abs();
        let s = acc.value();
        if prev <= 1e-16 * s.abs() {
            return Some(s);
        }
    }
    None
}

fn ml_contour(alpha: f64, beta: f64, z: f64) -> f64 {
    // hyperbola s(u) = μ(1 + sin(iu − φ)) with Weideman–Trefethen parameters
    let n = ML_CONTOUR_NODES;
    let phi = 1.1721;
    let h = 1.0818 / n as f64;
    let mu = 4.4921 * n as f64;
    let i = Complex64::i();
    let mut acc = Complex64::new(0.0, 0.0);
    for k in -n..=n {
        let u = k as f64 * h;
        let w = i * u - phi;
        let s = mu * (1.0 + w.sin());
        let ds = i * mu * w.cos();
        let f = s.powf(alpha - beta) / (s.powf(alpha) - z);
        acc += s.exp() * f * ds;
    }
    (acc * h / (2.0 * PI * i)).re
}

/// Mittag-Leffler waiting-time density ψ(t).
pub fn waiting_time_pdf(alpha: f64, tau: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && tau > 0.0) {
        return Err(Error::invalid("waiting time density needs t > 0 and tau > 0"));
    }
    if alpha == 1.0 {
        return Ok((-t / tau).exp() / tau);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1], got {alpha}")));
    }
    let x = (t / tau).powf(alpha);
    let e = mittag_leffler(MLParams { alpha, beta: alpha }, -x)?;
    Ok(t.powf(alpha - 1.0) / tau.powf(alpha) * e)
}

/// Amplitude of the power-law tail, sin(πα)Γ(1+α)/π.
pub fn tail_amplitude(alpha: f64) -> f64 {
    (PI * alpha).sin() * gamma(1.0 + alpha) / PI
}

/// Power-law tail of the waiting-time density.
pub fn waiting_time_tail(alpha: f64, tau: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && tau > 0.0 && alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("waiting time tail needs t > 0, tau > 0, alpha in (0,1]"));
    }
    Ok(tail_amplitude(alpha) * tau.powf(alpha) / t.powf(1.0 + alpha))
}

const MEIJER_TERM_CAP: usize = 500;
/// Above this argument the exponential asymptotic form is used.
pub const MEIJER_CROSSOVER: f64 = 40.0;
/// Estimated relative error tolerated from cancellation in the residue sum.
const MEIJER_CANCELLATION_BUDGET: f64 = 1e-6;

/// G^{3,0}_{0,3}(z | b₁, b₂, b₃) for z ≥ 0 and indices distinct modulo 1.
pub fn meijer_g_303(z: f64, b: [f64; 3]) -> Result<f64> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::invalid(format!("Meijer-G argument must be finite and nonnegative, got {z}")));
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            let d = b[i] - b[j];
            if (d - d.round()).abs() < 1e-12 {
                return Err(Error::invalid(format!("Meijer-G indices {} and {} differ by an integer", b[i], b[j])));
            }
        }
    }
    if z >= MEIJER_CROSSOVER {
        if let Some(v) = meijer_asymptotic(z, b) {
            return Ok(v);
        }
    }
    meijer_residues(z, b)
}

fn meijer_residues(z: f64, b: [f64; 3]) -> Result<f64> {
    if z == 0.0 {
        let bmin = b.iter().cloned().fold(f64::INFINITY, f64::min);
        if bmin > 0.0 {
            return Ok(0.0);
        }
        if bmin < 0.0 {
            return Err(Error::invalid("Meijer-G diverges at z = 0 for a negative index"));
        }
    }
    let mut total = KahanSum::default();
    let mut abs_total = 0.0;
    for h in 0..3 {
        let (o1, o2) = match h {
            0 => (b[1], b[2]),
            1 => (b[0], b[2]),
            _ => (b[0], b[1]),
        };
        let zb = if z == 0.0 {
            if b[h] == 0.0 {
                1.0
            } else {
                continue;
            }
        } else {
            z.powf(b[h])
        };
        let pref = gamma(o1 - b[h]) * gamma(o2 - b[h]) * zb;
        let mut acc = KahanSum::default();
        let mut term = 1.0;
        let mut abs_acc = 1.0;
        acc.add(term);
        let mut converged = z == 0.0;
        let mut n = 0usize;
        while !converged && n < MEIJER_TERM_CAP {
            let m = (n + 1) as f64;
            term *= -z / (m * (m + b[h] - o1) * (m + b[h] - o2));
            acc.add(term);
            abs_acc += term.abs();
            n += 1;
            if term.abs() <= 1e-17 * acc.value().abs() && m > z.cbrt() {
                converged = true;
            }
        }
        if !converged {
            return Err(Error::NoConvergence { terms: MEIJER_TERM_CAP, partial: acc.value(), last: term });
        }
        total.add(pref * acc.value());
        abs_total += (pref * abs_acc).abs();
    }
    let value = total.value();
    let est = abs_total * f64::EPSILON / value.abs();
    if est > MEIJER_CANCELLATION_BUDGET {
        return Err(Error::Cancellation { z, digits: (abs_total / value.abs()).log10() });
    }
    Ok(value)
}

/// Coefficients of Π(E − 3w − βⱼ) applied to w^e, by power offset 0..=3.
fn conjugated_operator(e: f64, betas: &[f64; 3]) -> [f64; 4] {
    let mut poly = [1.0, 0.0, 0.0, 0.0];
    for (applied, beta) in betas.iter().enumerate() {
        let mut next = [0.0; 4];
        for d in 0..=applied {
            next[d] += poly[d] * (e + d as f64 - beta);
            next[d + 1] -= 3.0 * poly[d];
        }
        poly = next;
    }
    poly
}

/// Exponential asymptotic expansion in w = z^{1/3}, truncated at its smallest
/// term. Returns `None` when the terms stop decreasing too early.
fn meijer_asymptotic(z: f64, b: [f64; 3]) -> Option<f64> {
    let betas = [3.0 * b[0], 3.0 * b[1], 3.0 * b[2]];
    let rho = b[0] + b[1] + b[2] - 1.0;
    let w = z.cbrt();
    let mut c = vec![1.0];
    let mut acc = KahanSum::default();
    acc.add(1.0);
    let mut prev = 1.0;
    let mut smallest = 1.0;
    for m in 1..80usize {
        let mf = m as f64;
        let c2 = conjugated_operator(rho - mf, &betas)[2];
        let c1 = conjugated_operator(rho - mf + 1.0, &betas)[1];
        let mut num = c1 * c[m - 1];
        if m >= 2 {
            num += conjugated_operator(rho - mf + 2.0, &betas)[0] * c[m - 2];
        }
        let cm = -num / c2;
        c.push(cm);
        let term = cm * w.powi(-(m as i32));
        if term.abs() > prev && m > 3 {
            break;
        }
        acc.add(term);
        prev = term.abs();
        smallest = prev;
        if prev < 1e-16 * acc.value().abs() {
            break;
        }
    }
    if smallest > 1e-5 {
        return None;
    }
    Some(2.0 * PI / 3f64.sqrt() * (-3.0 * w).exp() * w.powf(rho) * acc.value())
}

/// Coefficients of the order-one-half reference solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenCoeffs {
    pub k_alpha: f64,
    pub k_star: f64,
    pub ell_star: f64,
    pub mass: f64,
}

impl GreenCoeffs {
    pub fn diffusion(k_alpha: f64, mass: f64) -> Self {
        Self { k_alpha, k_star: 0.0, ell_star: 0.0, mass }
    }

    fn validate(&self) -> Result<()> {
        if !(self.k_alpha > 0.0 && self.k_star >= 0.0 && self.ell_star >= 0.0 && self.mass > 0.0) {
            return Err(Error::invalid(format!("bad Green coefficients {self:?}")));
        }
        Ok(())
    }
}

/// How the reaction couples to the fractional derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KineticsModel {
    /// Reaction inside the fractional derivative: anomalous kinetics.
    #[serde(rename = "I")]
    One,
    /// Reaction outside the fractional derivative: ordinary kinetics.
    #[serde(rename = "II")]
    Two,
}

fn half_order_scale(x: f64, t: f64, k_alpha: f64) -> (f64, f64) {
    let st = t.sqrt();
    let y = x * x / (16.0 * k_alpha * st);
    (y * y, 1.0 / (8.0 * PI.powi(3) * k_alpha * st).sqrt())
}

/// Free-space Green's function of the order-one-half diffusion equation.
pub fn green_pure_half(x: f64, t: f64, c: GreenCoeffs) -> Result<f64> {
    c.validate()?;
    if !(t > 0.0) {
        return Err(Error::invalid("Green's function needs t > 0"));
    }
    if c.k_star != 0.0 {
        return Err(Error::invalid("pure diffusion Green's function needs k_star = 0"));
    }
    let (z, norm) = half_order_scale(x, t, c.k_alpha);
    Ok(c.mass * norm * meijer_g_303(z, [0.0, 0.25, 0.5])?)
}

/// Value of a truncated series with its truncation record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub terms: usize,
    pub last_term: f64,
}

const GREEN_J_CAP: usize = 200;
const GREEN_J_TOL: f64 = 1e-12;

/// Anomalous-kinetics annihilation Green's function as a series in k*√t.
pub fn green_model_one_series(x: f64, t: f64, c: GreenCoeffs) -> Result<SeriesValue> {
    let (z, norm) = half_order_scale(x, t, c.k_alpha);
    let r = -2.0 * c.k_star * t.sqrt();
    let mut acc = KahanSum::default();
    let mut abs_acc = 0.0;
    let mut coef = 1.0;
    for j in 0..GREEN_J_CAP {
        if j > 0 {
            coef *= r / j as f64;
        }
        let g = meijer_g_303(z, [0.0, 0.25 + 0.5 * j as f64, 0.5])?;
        let term = coef * g;
        acc.add(term);
        abs_acc += term.abs();
        if coef == 0.0 || (j > 0 && term.abs() <= GREEN_J_TOL * acc.value().abs()) {
            let value = acc.value();
            if abs_acc > 1e8 * value.abs() {
                return Err(Error::Cancellation { z, digits: (abs_acc / value.abs()).log10() });
            }
            return Ok(SeriesValue { value: c.mass * norm * value, terms: j + 1, last_term: term });
        }
    }
    Err(Error::NoConvergence { terms: GREEN_J_CAP, partial: c.mass * norm * acc.value(), last: coef })
}

/// Annihilation Green's function under either kinetics model.
pub fn green_annihilation_half(model: KineticsModel, x: f64, t: f64, c: GreenCoeffs) -> Result<f64> {
    c.validate()?;
    if !(t > 0.0) {
        return Err(Error::invalid("Green's function needs t > 0"));
    }
    match model {
        // the series stalls or cancels once k*√t is large; the subordination
        // integral has no such limit
        KineticsModel::One => match green_model_one_series(x, t, c) {
            Ok(v) if v.value.is_finite() => Ok(v.value),
            _ => Ok(c.mass * smoothed_green_half_decay(x, t, c.k_alpha, 0.0, c.k_star)?),
        },
        KineticsModel::Two => {
            let pure = green_pure_half(x, t, GreenCoeffs { k_star: 0.0, ..c })?;
            Ok((-c.k_star * t).exp() * pure)
        }
    }
}

/// Reversible isomerization A ⇌ B: returns (U, V) for initial amounts u0, v0.
pub fn green_mono_half(model: KineticsModel, x: f64, t: f64, c: GreenCoeffs, u0: f64, v0: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::invalid("Green's function needs t > 0"));
    }
    if !(c.k_alpha > 0.0 && c.k_star >= 0.0 && c.ell_star >= 0.0 && u0 >= 0.0 && v0 >= 0.0) {
        return Err(Error::invalid("bad coefficients for the isomerization Green's function"));
    }
    let unit = GreenCoeffs { k_alpha: c.k_alpha, k_star: 0.0, ell_star: 0.0, mass: 1.0 };
    let g0 = green_pure_half(x, t, unit)?;
    let rate = c.k_star + c.ell_star;
    if rate == 0.0 {
        return Ok((u0 * g0, v0 * g0));
    }
    // null direction (ℓ, k)/(k+ℓ) carries the total; (1, −1) decays at k+ℓ
    let total = u0 + v0;
    let excess = (c.k_star * u0 - c.ell_star * v0) / rate;
    let gr = green_annihilation_half(model, x, t, GreenCoeffs { k_star: rate, ..unit })?;
    let u = total * c.ell_star / rate * g0 + excess * gr;
    let v = total * c.k_star / rate * g0 - excess * gr;
    Ok((u, v))
}

/// Order-one-half Green's function (unit mass) convolved with a centred
/// Gaussian of the given variance.
///
/// Uses the subordination form ∫ (πt)^{-1/2} e^{−s²/4t} N(x; 0, 2K_α s) ds,
/// in which the convolution only adds `variance` to the inner Gaussian. The
/// substitution s = r² removes the endpoint singularity at x = 0.
pub fn smoothed_green_half(x: f64, t: f64, k_alpha: f64, variance: f64) -> Result<f64> {
    smoothed_green_half_decay(x, t, k_alpha, variance, 0.0)
}

/// As [`smoothed_green_half`] for anomalous first-order decay at rate k*
/// (model I kinetics): the inner operational time s is weighted by e^{−k* s}.
pub fn smoothed_green_half_decay(x: f64, t: f64, k_alpha: f64, variance: f64, k_star: f64) -> Result<f64> {
    if !(t > 0.0 && k_alpha > 0.0 && variance >= 0.0 && k_star >= 0.0) {
        return Err(Error::invalid("smoothed Green's function needs t, K_alpha > 0 and variance, k* ≥ 0"));
    }
    let pre = 1.0 / (PI * t).sqrt();
    let f = |r: f64| {
        let var = 2.0 * k_alpha * r * r + variance;
        let weighted = if var > 0.0 {
            2.0 * r * (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
        } else if x == 0.0 {
            // limit of 2r·N(0; 0, 2K r²) as r → 0
            1.0 / (PI * k_alpha).sqrt()
        } else {
            0.0
        };
        let s = r * r;
        pre * (-(s * s) / (4.0 * t) - k_star * s).exp() * weighted
    };
    let s_max = if k_star > 0.0 { (40.0 * t.sqrt()).min(40.0 / k_star) } else { 40.0 * t.sqrt() };
    let r_max = s_max.sqrt();
    let breaks: Vec<f64> = (0..=16).map(|k| r_max * k as f64 / 16.0).collect();
    Ok(integrate_pieces(f, &breaks, 1e-14, 1e-11))
}
