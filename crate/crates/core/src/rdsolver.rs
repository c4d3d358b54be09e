//! Finite-difference integrator for internal-state reaction-diffusion systems
//! on a 1D cell-centred grid with reflecting ends.
//!
//! Linear terms (diffusion, state exchange, linear reactions and
//! dissociation) are treated with Crank-Nicolson; bimolecular association is
//! explicit at the old time level. The Crank-Nicolson operator does not
//! depend on time, so its block-tridiagonal factorization is computed once
//! per step size.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{
    build_reaction_ops, build_state_matrix, diffusion_diag, ReactionKind, ReactionOps, ReactionSpec,
    StateMatrixSet, Tensor3,
};
use crate::wtfit::StateParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
}

impl Grid1D {
    pub fn new(x_lo: f64, x_hi: f64, nx: usize) -> Result<Self> {
        if nx < 3 || !(x_hi > x_lo) || !x_lo.is_finite() || !x_hi.is_finite() {
            return Err(Error::invalid(format!("need nx ≥ 3 and x_lo < x_hi, got {nx} on [{x_lo}, {x_hi}]")));
        }
        Ok(Grid1D { x_lo, x_hi, nx })
    }

    pub fn h(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64
    }

    /// Cell centre j.
    pub fn x(&self, j: usize) -> f64 {
        self.x_lo + (j as f64 + 0.5) * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|j| self.x(j)).collect()
    }

    pub fn length(&self) -> f64 {
        self.x_hi - self.x_lo
    }
}

/// Concentrations per (node, species, state), node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    pub grid: Grid1D,
    pub species: usize,
    pub states: usize,
    pub t: f64,
    pub data: Vec<f64>,
}

impl FieldSet {
    pub fn zeros(grid: Grid1D, species: usize, states: usize) -> Self {
        FieldSet { grid, species, states, t: 0.0, data: vec![0.0; grid.nx * species * states] }
    }

    #[inline]
    pub fn index(&self, node: usize, species: usize, state: usize) -> usize {
        (node * self.species + species) * self.states + state
    }

    #[inline]
    pub fn get(&self, node: usize, species: usize, state: usize) -> f64 {
        self.data[self.index(node, species, state)]
    }

    pub fn set(&mut self, node: usize, species: usize, state: usize, v: f64) {
        let k = self.index(node, species, state);
        self.data[k] = v;
    }

    /// Values of one (species, state) pair across the grid.
    pub fn component(&self, species: usize, state: usize) -> Vec<f64> {
        (0..self.grid.nx).map(|j| self.get(j, species, state)).collect()
    }
}

/// Summed fields U, V, W (one per species).
pub fn observable_sum(f: &FieldSet) -> Vec<Vec<f64>> {
    (0..f.species)
        .map(|s| (0..f.grid.nx).map(|j| (0..f.states).map(|i| f.get(j, s, i)).sum()).collect())
        .collect()
}

/// Total amount h·Σ of each species.
pub fn species_totals(f: &FieldSet) -> Vec<f64> {
    let h = f.grid.h();
    observable_sum(f).iter().map(|u| h * u.iter().sum::<f64>()).collect()
}

/// Gaussian initial data normalized to unit discrete sum, each species
/// scaled by `species_scales[s]` and each state by `weights[i]`.
pub fn gaussian_ic(grid: Grid1D, variance: f64, center: f64, species_scales: &[f64], weights: &[f64]) -> Result<FieldSet> {
    if !(variance > 0.0) {
        return Err(Error::invalid("initial variance must be positive"));
    }
    if species_scales.is_empty() || weights.is_empty() {
        return Err(Error::invalid("need at least one species and one state"));
    }
    let g: Vec<f64> = (0..grid.nx).map(|j| (-(grid.x(j) - center).powi(2) / (2.0 * variance)).exp()).collect();
    let total: f64 = g.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("initial Gaussian does not overlap the grid"));
    }
    let mut f = FieldSet::zeros(grid, species_scales.len(), weights.len());
    for (j, gj) in g.iter().enumerate() {
        for (s, sc) in species_scales.iter().enumerate() {
            for (i, w) in weights.iter().enumerate() {
                f.set(j, s, i, sc * w * gj / total);
            }
        }
    }
    Ok(f)
}

/// Spatially uniform data with per-species, per-state values.
pub fn uniform_ic(grid: Grid1D, values: &[Vec<f64>]) -> Result<FieldSet> {
    let n = values.first().map_or(0, Vec::len);
    if n == 0 || values.iter().any(|v| v.len() != n) {
        return Err(Error::invalid("uniform data must give every species the same number of states"));
    }
    let mut f = FieldSet::zeros(grid, values.len(), n);
    for j in 0..grid.nx {
        for (s, v) in values.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                f.set(j, s, i, *x);
            }
        }
    }
    Ok(f)
}

/// A fully specified internal-state system.
#[derive(Debug, Clone)]
pub struct SystemDef {
    pub params: StateParams,
    pub reaction: ReactionSpec,
    pub matrices: StateMatrixSet,
    pub ops: ReactionOps,
    /// Diffusion coefficient per state.
    pub diffusion: DVector<f64>,
}

impl SystemDef {
    pub fn new(params: StateParams, reaction: ReactionSpec) -> Result<Self> {
        let matrices = build_state_matrix(&params, true);
        let ops = build_reaction_ops(&reaction, &params)?;
        let diffusion = diffusion_diag(&reaction, &params);
        Ok(SystemDef { params, reaction, matrices, ops, diffusion })
    }

    pub fn species(&self) -> usize {
        self.reaction.kind.species()
    }

    pub fn states(&self) -> usize {
        self.params.n
    }

    /// Linear reaction-exchange operator acting on one node's (species, state) block.
    pub fn local_linear(&self) -> DMatrix<f64> {
        let n = self.states();
        let s = self.species();
        let a = &self.matrices.a;
        let mut m = DMatrix::zeros(s * n, s * n);
        for k in 0..s {
            m.view_mut((k * n, k * n), (n, n)).copy_from(a);
        }
        match &self.ops {
            ReactionOps::None => {}
            ReactionOps::Linear { k1, k2, l1, l2 } => {
                let mut top = m.view_mut((0, 0), (n, n));
                top -= k1;
                if s == 2 {
                    m.view_mut((0, n), (n, n)).copy_from(l2);
                    m.view_mut((n, 0), (n, n)).copy_from(k2);
                    let mut bottom = m.view_mut((n, n), (n, n));
                    bottom -= l1;
                }
            }
            ReactionOps::Bimolecular { l, .. } => {
                for i in 0..n {
                    for j in 0..n {
                        for c in 0..n {
                            let r = l.get(i, j, c);
                            m[(i, 2 * n + c)] += r;
                            m[(n + j, 2 * n + c)] += r;
                            m[(2 * n + c, 2 * n + c)] -= r;
                        }
                    }
                }
            }
        }
        m
    }

    fn check_fields(&self, f: &FieldSet) -> Result<()> {
        if f.species != self.species() || f.states != self.states() {
            return Err(Error::invalid(format!(
                "fields have {}×{} components, system needs {}×{}",
                f.species,
                f.states,
                self.species(),
                self.states()
            )));
        }
        Ok(())
    }
}

/// Conserved combinations h·Σ: each species without reactions, the total for
/// linear reactions, and A+C, B+C for bimolecular ones.
pub fn conserved_totals(f: &FieldSet, sys: &SystemDef) -> Vec<(String, f64)> {
    let t = species_totals(f);
    match sys.reaction.kind {
        ReactionKind::None => t.iter().enumerate().map(|(s, v)| (format!("species_{s}"), *v)).collect(),
        ReactionKind::Annihilation => vec![("A".into(), t[0])],
        ReactionKind::Monomolecular => vec![("A+B".into(), t[0] + t[1])],
        ReactionKind::Bimolecular => vec![("A+C".into(), t[0] + t[2]), ("B+C".into(), t[1] + t[2])],
    }
}

/// Negativity thresholds: warn below `warn`, abort below −`abort_rel`·peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativityPolicy {
    pub warn: f64,
    pub abort_rel: f64,
}

impl Default for NegativityPolicy {
    fn default() -> Self {
        NegativityPolicy { warn: -1e-12, abort_rel: 1e-6 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub steps: usize,
    pub negativity_warnings: usize,
    pub most_negative: f64,
}

/// Factored Crank-Nicolson stepper for a fixed dt.
pub struct Stepper<'a> {
    sys: &'a SystemDef,
    grid: Grid1D,
    dt: f64,
    local: DMatrix<f64>,
    /// Diffusion coefficient per block component divided by h².
    dcoef: DVector<f64>,
    /// Inverses of the eliminated diagonal blocks.
    dinv: Vec<DMatrix<f64>>,
    assoc: Option<&'a Tensor3>,
    policy: NegativityPolicy,
    report: RunReport,
    scratch: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a SystemDef, grid: Grid1D, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        let local = sys.local_linear();
        let b = local.nrows();
        let n = sys.states();
        let h2 = grid.h() * grid.h();
        let dcoef = DVector::from_fn(b, |k, _| sys.diffusion[k % n] / h2);
        // off-diagonal blocks are −dt/2·diag(dcoef)
        let e = &dcoef * (-0.5 * dt);
        let mut dinv = Vec::with_capacity(grid.nx);
        for j in 0..grid.nx {
            let ends = if j == 0 || j == grid.nx - 1 { 1.0 } else { 2.0 };
            let mut dj = DMatrix::identity(b, b) - &local * (0.5 * dt);
            for k in 0..b {
                dj[(k, k)] += 0.5 * dt * ends * dcoef[k];
            }
            if let Some(prev) = dinv.last() {
                let prev: &DMatrix<f64> = prev;
                // D_j − E D_{j−1}⁻¹ E with diagonal E
                for r in 0..b {
                    for c in 0..b {
                        dj[(r, c)] -= e[r] * prev[(r, c)] * e[c];
                    }
                }
            }
            let inv = dj
                .try_inverse()
                .ok_or_else(|| Error::Numerical(format!("singular Crank-Nicolson block at node {j}")))?;
            dinv.push(inv);
        }
        let assoc = match &sys.ops {
            ReactionOps::Bimolecular { k, .. } => Some(k),
            _ => None,
        };
        Ok(Stepper {
            sys,
            grid,
            dt,
            local,
            dcoef,
            dinv,
            assoc,
            policy: NegativityPolicy::default(),
            report: RunReport { most_negative: 0.0, ..Default::default() },
            scratch: Vec::new(),
        })
    }

    pub fn with_policy(mut self, policy: NegativityPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn report(&self) -> &RunReport {
        &self.report
    }

    /// Apply the linear operator L to the whole field.
    fn apply_linear(&self, u: &[f64], out: &mut [f64]) {
        let b = self.local.nrows();
        let nx = self.grid.nx;
        for j in 0..nx {
            let base = j * b;
            for r in 0..b {
                let mut acc = 0.0;
                for c in 0..b {
                    acc += self.local[(r, c)] * u[base + c];
                }
                let here = u[base + r];
                let left = if j > 0 { u[base - b + r] } else { here };
                let right = if j + 1 < nx { u[base + b + r] } else { here };
                acc += self.dcoef[r] * (left - 2.0 * here + right);
                out[base + r] = acc;
            }
        }
    }

    fn add_association(&self, u: &[f64], out: &mut [f64], scale: f64) {
        let Some(k) = self.assoc else { return };
        let n = self.sys.states();
        let b = 3 * n;
        for j in 0..self.grid.nx {
            let base = j * b;
            for i in 0..n {
                let ui = u[base + i];
                if ui == 0.0 {
                    continue;
                }
                for jj in 0..n {
                    let uv = ui * u[base + n + jj];
                    for c in 0..n {
                        let f = scale * k.get(i, jj, c) * uv;
                        out[base + i] -= f;
                        out[base + n + jj] -= f;
                        out[base + 2 * n + c] += f;
                    }
                }
            }
        }
    }

    /// One step in place.
    pub fn step(&mut self, f: &mut FieldSet) -> Result<()> {
        let b = self.local.nrows();
        let nx = self.grid.nx;
        let len = f.data.len();
        let mut rhs = std::mem::take(&mut self.scratch);
        rhs.resize(len, 0.0);
        self.apply_linear(&f.data, &mut rhs);
        for (r, u) in rhs.iter_mut().zip(&f.data) {
            *r = u + 0.5 * self.dt * *r;
        }
        self.add_association(&f.data, &mut rhs, self.dt);
        // block Thomas sweep; E = −dt/2·diag(dcoef)
        let e: Vec<f64> = self.dcoef.iter().map(|d| -0.5 * self.dt * d).collect();
        let mut y = vec![0.0; b];
        for j in 1..nx {
            let prev = &self.dinv[j - 1];
            let (done, rest) = rhs.split_at_mut(j * b);
            let g = &done[(j - 1) * b..j * b];
            for r in 0..b {
                y[r] = (0..b).map(|c| prev[(r, c)] * g[c]).sum();
            }
            for r in 0..b {
                rest[r] -= e[r] * y[r];
            }
        }
        let out = &mut f.data;
        for j in (0..nx).rev() {
            let inv = &self.dinv[j];
            for r in 0..b {
                y[r] = rhs[j * b + r] - if j + 1 < nx { e[r] * out[(j + 1) * b + r] } else { 0.0 };
            }
            for r in 0..b {
                out[j * b + r] = (0..b).map(|c| inv[(r, c)] * y[c]).sum();
            }
        }
        self.scratch = rhs;
        f.t += self.dt;
        self.report.steps += 1;
        self.check(f)
    }

    fn check(&mut self, f: &FieldSet) -> Result<()> {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for v in &f.data {
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite concentration at t = {:e}", f.t)));
            }
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if lo < self.policy.warn {
            self.report.negativity_warnings += 1;
            self.report.most_negative = self.report.most_negative.min(lo);
            if lo < -self.policy.abort_rel * hi {
                return Err(Error::Negativity { value: lo, peak: hi, t: f.t });
            }
        }
        Ok(())
    }
}

/// Number of steps of size dt from t0 to t_end, if it is an integer.
fn step_count(t0: f64, t_end: f64, dt: f64) -> Result<usize> {
    let span = t_end - t0;
    if span < 0.0 {
        return Err(Error::invalid(format!("t_end {t_end} before current time {t0}")));
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > 1e-9 * span.max(dt) {
        return Err(Error::invalid(format!("t_end − t = {span} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

/// Advance `f` to `t_end`, calling `observer` on the initial state and every
/// `every` steps (and on the final state).
pub fn integrate(
    sys: &SystemDef,
    f: &mut FieldSet,
    dt: f64,
    t_end: f64,
    every: usize,
    mut observer: impl FnMut(&FieldSet),
) -> Result<RunReport> {
    integrate_segments(sys, f, &[(dt, t_end)], every, &mut observer)
}

/// Chain several (dt, t_end) segments, e.g. a fine step through an initial
/// transient followed by a coarser one.
pub fn integrate_segments(
    sys: &SystemDef,
    f: &mut FieldSet,
    segments: &[(f64, f64)],
    every: usize,
    mut observer: impl FnMut(&FieldSet),
) -> Result<RunReport> {
    sys.check_fields(f)?;
    let every = every.max(1);
    let mut total = RunReport::default();
    observer(f);
    for &(dt, t_end) in segments {
        let steps = step_count(f.t, t_end, dt)?;
        if steps == 0 {
            continue;
        }
        let t0 = f.t;
        let mut stepper = Stepper::new(sys, f.grid, dt)?;
        for s in 1..=steps {
            stepper.step(f)?;
            // keep time exact rather than accumulated
            f.t = t0 + s as f64 * dt;
            if s % every == 0 || s == steps {
                observer(f);
            }
        }
        let r = stepper.report();
        total.steps += r.steps;
        total.negativity_warnings += r.negativity_warnings;
        total.most_negative = total.most_negative.min(r.most_negative);
    }
    Ok(total)
}

/// Collect snapshots at the requested cadence.
pub fn integrate_collect(sys: &SystemDef, f0: &FieldSet, dt: f64, t_end: f64, every: usize) -> Result<Vec<FieldSet>> {
    let mut out = Vec::new();
    let mut f = f0.clone();
    integrate(sys, &mut f, dt, t_end, every, |s| out.push(s.clone()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state() -> StateParams {
        StateParams::from_tabulated(0.5, 1.0, 1.0, &[1.0], &[1.0]).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = Grid1D::new(-1.0, 1.0, 4).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.nodes(), vec![-0.75, -0.25, 0.25, 0.75]);
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn ic_has_unit_discrete_sum() {
        let g = Grid1D::new(-1.0, 1.0, 64).unwrap();
        let f = gaussian_ic(g, 1e-2, 0.0, &[2.0], &[0.25, 0.5]).unwrap();
        let s: f64 = f.data.iter().sum();
        assert!((s - 1.5).abs() < 1e-14);
    }

    #[test]
    fn step_count_checks_multiples() {
        assert_eq!(step_count(0.0, 1e-2, 1e-5).unwrap(), 1000);
        assert!(step_count(0.0, 1e-2, 3e-3).is_err());
    }

    #[test]
    fn thomas_solve_matches_dense() {
        // one CN step against a dense solve of the same system
        let sys = SystemDef::new(single_state(), ReactionSpec::none()).unwrap();
        let g = Grid1D::new(0.0, 1.0, 6).unwrap();
        let mut f = gaussian_ic(g, 0.02, 0.4, &[1.0], &[1.0]).unwrap();
        let u0 = DVector::from_column_slice(&f.data);
        let dt = 0.01;
        let h2 = g.h() * g.h();
        let lap = DMatrix::from_fn(6, 6, |i, j| {
            if i == j {
                if i == 0 || i == 5 { -1.0 } else { -2.0 }
            } else if i.abs_diff(j) == 1 {
                1.0
            } else {
                0.0
            }
        }) / h2;
        let id = DMatrix::<f64>::identity(6, 6);
        let want = (&id - &lap * (dt / 2.0)).lu().solve(&((&id + &lap * (dt / 2.0)) * u0)).unwrap();
        let mut st = Stepper::new(&sys, g, dt).unwrap();
        st.step(&mut f).unwrap();
        for j in 0..6 {
            assert!((f.data[j] - want[j]).abs() < 1e-14);
        }
    }
}
