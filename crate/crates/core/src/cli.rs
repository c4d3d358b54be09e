//! Command-line front end: JSON run configs, dotted overrides, CSV and JSON
//! artifacts.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{fit_power_law, l2_rel_error, msd_of_field, RegressionResult};
use crate::error::{Error, Result};
use crate::rdsolver::{
    conserved_totals, gaussian_ic, integrate, integrate_segments, observable_sum, FieldSet, Grid1D, RunReport, SystemDef,
};
use crate::specfun::{smoothed_green_half, smoothed_green_half_decay, KineticsModel};
use crate::states::{
    assemble_jacobian, bimolecular_steady_state, build_state_matrix, equivalent_rates, is_w_matrix, kprime_curve,
    linear_steady_state, longtime_diffusion_coeff, macroscopic_rate, stationary_distribution, ReactionKind, ReactionOps,
    ReactionSpec, Scaling,
};
use crate::stochastic::{ctrw_msd, ssa_ensemble, EventTable, LatticeState};
use crate::wtfit::{fit_exponential_sum, to_state_params, FitOptions, FitProblem, QuadratureFit, StateParams};

pub const SPECIES: [&str; 3] = ["A", "B", "C"];
const OBSERVABLES: [&str; 3] = ["U", "V", "W"];

/// Tabulated internal states used instead of a fresh fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedStates {
    pub tau: f64,
    pub tau_i: Vec<f64>,
    pub weights: Vec<f64>,
    /// Rescale τ and σ² so the normalized weights keep the tabulated tail.
    #[serde(default = "yes")]
    pub consistent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Raw,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcConfig {
    #[serde(default = "ic_variance")]
    pub variance: f64,
    #[serde(default)]
    pub center: f64,
    /// Keyed by species name; missing species get 1.
    #[serde(default)]
    pub species_scales: BTreeMap<String, f64>,
    #[serde(default)]
    pub weights: WeightMode,
}

impl Default for IcConfig {
    fn default() -> Self {
        IcConfig { variance: ic_variance(), center: 0.0, species_scales: BTreeMap::new(), weights: WeightMode::Raw }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "out_path")]
    pub path: String,
    #[serde(default = "every")]
    pub every: usize,
    /// Also dump every (species, state) field.
    #[serde(default)]
    pub full: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { path: out_path(), every: every(), full: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub multistarts: Option<usize>,
    pub max_iter: Option<usize>,
    pub ceiling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdConfig {
    /// Regression window for the exponent; defaults to [t_min, t_max].
    pub window: Option<[f64; 2]>,
    /// Windows for the short- and long-time slopes of the increment.
    pub early: Option<[f64; 2]>,
    pub late: Option<[f64; 2]>,
    pub t_first: Option<f64>,
    pub t_last: Option<f64>,
    #[serde(default = "per_decade")]
    pub per_decade: usize,
    #[serde(default = "substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub stochastic: bool,
    #[serde(default = "particles")]
    pub particles: usize,
}

impl Default for MsdConfig {
    fn default() -> Self {
        MsdConfig {
            window: None,
            early: None,
            late: None,
            t_first: None,
            t_last: None,
            per_decade: per_decade(),
            substeps: substeps(),
            stochastic: false,
            particles: particles(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsaConfig {
    #[serde(default = "voxels")]
    pub voxels: usize,
    #[serde(default = "replicas")]
    pub replicas: usize,
    /// Copy numbers per unit amount.
    #[serde(default = "molecules")]
    pub molecules: f64,
    pub sample_times: Option<Vec<f64>>,
}

impl Default for SsaConfig {
    fn default() -> Self {
        SsaConfig { voxels: voxels(), replicas: replicas(), molecules: molecules(), sample_times: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticConfig {
    pub times: Option<Vec<f64>>,
    /// Convolve with the initial Gaussian.
    #[serde(default = "yes")]
    pub smooth: bool,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        AnalyticConfig { times: None, smooth: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyConfig {
    #[serde(default = "omegas")]
    pub omega: Vec<f64>,
    pub kprime_times: Option<Vec<f64>>,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        SteadyConfig { omega: omegas(), kprime_times: None }
    }
}

fn yes() -> bool {
    true
}
fn ic_variance() -> f64 {
    1e-3
}
fn out_path() -> String {
    "out".into()
}
fn every() -> usize {
    100
}
fn per_decade() -> usize {
    10
}
fn substeps() -> usize {
    20
}
fn particles() -> usize {
    100_000
}
fn voxels() -> usize {
    16
}
fn replicas() -> usize {
    1000
}
fn molecules() -> f64 {
    200.0
}
fn omegas() -> Vec<f64> {
    vec![1e-3, 1.0, 10.0]
}
fn domain() -> [f64; 2] {
    [-1.0, 1.0]
}
fn nx() -> usize {
    128
}
fn no_reaction() -> ReactionSpec {
    ReactionSpec::none()
}

/// One run, fully described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    #[serde(rename = "K_alpha")]
    pub k_alpha: f64,
    pub t_min: f64,
    pub t_max: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub states: Option<TabulatedStates>,
    #[serde(default = "domain")]
    pub domain: [f64; 2],
    #[serde(default = "nx")]
    pub nx: usize,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// Chained (dt, t_end) pairs replacing dt/t_end.
    #[serde(default)]
    pub segments: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub ic: IcConfig,
    #[serde(default = "no_reaction")]
    pub reaction: ReactionSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub msd: MsdConfig,
    #[serde(default)]
    pub ssa: SsaConfig,
    #[serde(default)]
    pub analytic: AnalyticConfig,
    #[serde(default)]
    pub steady: SteadyConfig,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => write!(s, "/{index}").unwrap(),
            Segment::Map { key } => write!(s, "/{}", key.replace('~', "~0").replace('/', "~1")).unwrap(),
            Segment::Enum { variant } => write!(s, "/{variant}").unwrap(),
            Segment::Unknown => s.push_str("/?"),
        }
    }
    if s.is_empty() {
        s.push('/');
    }
    s
}

/// Apply `key.sub.0=value` to a JSON document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override `{assignment}` is not key=value")))?;
    if key.is_empty() {
        return Err(Error::invalid("override has an empty key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = doc;
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        let here = format!("/{}", parts[..=k].join("/"));
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config { path: here.clone(), message: "array index expected".into() })?;
                items.get_mut(idx).ok_or_else(|| Error::Config { path: here.clone(), message: "index out of range".into() })?
            }
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), Value::Null);
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Null => {
                *cur = Value::Object(Default::default());
                cur.as_object_mut().expect("just set").entry(part.to_string()).or_insert(Value::Null)
            }
            _ => return Err(Error::Config { path: here, message: "cannot descend into a scalar".into() }),
        };
        if last {
            *cur = value.clone();
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_value(doc: Value) -> Result<Self> {
        let cfg: RunConfig = serde_path_to_error::deserialize(doc)
            .map_err(|e| Error::Config { path: pointer(e.path()), message: e.inner().to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file and apply overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut doc: Value = serde_json::from_str(&text).map_err(|e| Error::Config {
            path: "/".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        RunConfig::from_value(doc)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |path: &str, message: &str| Err(Error::Config { path: path.into(), message: message.into() });
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return cfg("/alpha", "must lie in (0,1)");
        }
        if !(self.k_alpha > 0.0) {
            return cfg("/K_alpha", "must be positive");
        }
        if !(self.t_min > 0.0 && self.t_max > self.t_min) {
            return cfg("/t_max", "need 0 < t_min < t_max");
        }
        if self.n == 0 {
            return cfg("/N", "must be at least 1");
        }
        if !(self.domain[1] > self.domain[0]) {
            return cfg("/domain", "need lo < hi");
        }
        if self.nx < 3 {
            return cfg("/nx", "must be at least 3");
        }
        if self.dt.is_some_and(|d| !(d > 0.0)) {
            return cfg("/dt", "must be positive");
        }
        if self.t_end.is_some_and(|t| !(t > 0.0)) {
            return cfg("/t_end", "must be positive");
        }
        if !(self.ic.variance > 0.0) {
            return cfg("/ic/variance", "must be positive");
        }
        for (name, v) in &self.ic.species_scales {
            if !SPECIES[..self.reaction.kind.species()].contains(&name.as_str()) {
                return Err(Error::Config {
                    path: format!("/ic/species_scales/{name}"),
                    message: "not a species of this reaction".into(),
                });
            }
            if !(*v >= 0.0) {
                return Err(Error::Config { path: format!("/ic/species_scales/{name}"), message: "must be ≥ 0".into() });
            }
        }
        if let Some(s) = &self.states {
            if s.tau_i.len() != self.n || s.weights.len() != self.n {
                return cfg("/states", "tau_i and weights must have N entries");
            }
        }
        self.reaction
            .validate()
            .map_err(|e| Error::Config { path: "/reaction".into(), message: e.to_string() })
    }

    pub fn fit_problem(&self) -> Result<FitProblem> {
        let mut o = FitOptions { seed: self.seed, ..FitOptions::default() };
        if let Some(m) = self.fit.multistarts {
            o.multistarts = m;
        }
        if let Some(m) = self.fit.max_iter {
            o.max_iter = m;
        }
        o.ceiling = self.fit.ceiling;
        Ok(FitProblem::new(self.alpha, self.t_min, self.t_max, self.n)?.with_options(o))
    }

    /// Internal states from the tabulated set if given, else from a fit.
    pub fn state_params(&self) -> Result<StateParams> {
        match &self.states {
            Some(s) => {
                let sp = StateParams::from_tabulated(self.alpha, self.k_alpha, s.tau, &s.tau_i, &s.weights)?;
                // tabulated weights still set the initial masses
                Ok(if s.consistent { StateParams { raw_weights: sp.raw_weights.clone(), ..sp.self_consistent() } } else { sp })
            }
            None => {
                let p = self.fit_problem()?;
                to_state_params(&fit_exponential_sum(&p)?, self.k_alpha, &p)
            }
        }
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.domain[0], self.domain[1], self.nx)
    }

    pub fn species_scales(&self) -> Vec<f64> {
        SPECIES[..self.reaction.kind.species()]
            .iter()
            .map(|s| self.ic.species_scales.get(*s).copied().unwrap_or(1.0))
            .collect()
    }

    pub fn ic_weights(&self, sp: &StateParams) -> Vec<f64> {
        match self.ic.weights {
            WeightMode::Raw => sp.raw_weights.clone(),
            WeightMode::Normalized => sp.mu_i.clone(),
        }
    }

    pub fn initial_fields(&self, sp: &StateParams) -> Result<FieldSet> {
        gaussian_ic(self.grid()?, self.ic.variance, self.ic.center, &self.species_scales(), &self.ic_weights(sp))
    }

    pub fn segments(&self) -> Result<Vec<(f64, f64)>> {
        match (&self.segments, self.dt, self.t_end) {
            (Some(s), _, _) if !s.is_empty() => Ok(s.iter().map(|p| (p[0], p[1])).collect()),
            (_, Some(dt), Some(t)) => Ok(vec![(dt, t)]),
            _ => Err(Error::Config { path: "/dt".into(), message: "dt and t_end (or segments) are required".into() }),
        }
    }

    pub fn t_final(&self) -> Result<f64> {
        Ok(self.segments()?.last().expect("nonempty").1)
    }
}

/// `%.12e` formatting: 12 fraction digits, signed exponent of at least two digits.
pub fn fmt_e(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

/// CSV text with a header row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text)?;
        Ok(())
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Parsed CSV: header and float rows (non-numeric cells kept as text).
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::invalid(format!("{} is empty", path.display())))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(|s| s.trim().to_string()).collect()).collect();
        if rows.iter().any(|r| r.len() != header.len()) {
            return Err(Error::invalid(format!("{}: ragged rows", path.display())));
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn float(&self, row: usize, col: usize) -> Result<f64> {
        self.rows[row][col]
            .parse()
            .map_err(|_| Error::invalid(format!("cell `{}` is not a number", self.rows[row][col])))
    }
}

fn observable_header(species: usize) -> Vec<&'static str> {
    let mut h = vec!["t", "x"];
    h.extend_from_slice(&OBSERVABLES[..species]);
    h
}

fn push_observables(csv: &mut Csv, f: &FieldSet) {
    let obs = observable_sum(f);
    for j in 0..f.grid.nx {
        let mut row = vec![fmt_e(f.t), fmt_e(f.grid.x(j))];
        row.extend(obs.iter().map(|o| fmt_e(o[j])));
        csv.row(&row);
    }
}

fn push_full(csv: &mut Csv, f: &FieldSet) {
    for j in 0..f.grid.nx {
        for s in 0..f.species {
            for i in 0..f.states {
                csv.row(&[fmt_e(f.t), fmt_e(f.grid.x(j)), SPECIES[s].into(), i.to_string(), fmt_e(f.get(j, s, i))]);
            }
        }
    }
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn params_json(sp: &StateParams) -> Value {
    json!({
        "N": sp.n, "tau_i": sp.tau_i, "mu_i": sp.mu_i, "raw_weights": sp.raw_weights,
        "tau": sp.tau, "sigma2": sp.sigma2, "alpha": sp.alpha, "K_alpha": sp.k_alpha,
    })
}

/// Fit document with the fixed key set.
pub fn fit_document(cfg: &RunConfig, fit: &QuadratureFit, sp: &StateParams) -> Value {
    json!({
        "alpha": cfg.alpha, "K_alpha": cfg.k_alpha, "t_min": cfg.t_min, "t_max": cfg.t_max, "N": sp.n,
        "tau_i": sp.tau_i, "mu_i": sp.mu_i, "raw_weights": sp.raw_weights,
        "tau": sp.tau, "sigma2": sp.sigma2, "eps_mod": fit.eps_mod,
    })
}

pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let p = cfg.fit_problem()?;
    let fit = fit_exponential_sum(&p)?;
    let sp = to_state_params(&fit, cfg.k_alpha, &p)?;
    let doc = fit_document(cfg, &fit, &sp);
    write_json(&out.join("fit.json"), &doc)?;
    Ok(doc)
}

/// Result of a deterministic run: final fields and the run report.
pub struct Simulation {
    pub system: SystemDef,
    pub initial: FieldSet,
    pub last: FieldSet,
    pub report: RunReport,
    pub observables: Csv,
}

pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    let sp = cfg.state_params()?;
    let system = SystemDef::new(sp.clone(), cfg.reaction.clone())?;
    let initial = cfg.initial_fields(&sp)?;
    let mut last = initial.clone();
    let mut observables = Csv::new(&observable_header(system.species()));
    let report = integrate_segments(&system, &mut last, &cfg.segments()?, cfg.output.every, |f| push_observables(&mut observables, f))?;
    Ok(Simulation { system, initial, last, report, observables })
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let sim = simulate(cfg)?;
    sim.observables.write(&out.join("observables.csv"))?;
    if cfg.output.full {
        let mut csv = Csv::new(&["t", "x", "species", "state", "value"]);
        let mut f = sim.initial.clone();
        integrate_segments(&sim.system, &mut f, &cfg.segments()?, cfg.output.every, |s| push_full(&mut csv, s))?;
        csv.write(&out.join("fields.csv"))?;
    }
    let before = conserved_totals(&sim.initial, &sim.system);
    let after = conserved_totals(&sim.last, &sim.system);
    let totals: Vec<Value> = before
        .iter()
        .zip(&after)
        .map(|((name, a), (_, b))| json!({"name": name, "initial": a, "final": b}))
        .collect();
    let doc = json!({
        "t_end": sim.last.t,
        "steps": sim.report.steps,
        "negativity_warnings": sim.report.negativity_warnings,
        "most_negative": sim.report.most_negative,
        "totals": totals,
        "params": params_json(&sim.system.params),
    });
    write_json(&out.join("run.json"), &doc)?;
    Ok(doc)
}

fn kinetics(model: Scaling) -> Result<KineticsModel> {
    match model {
        Scaling::ModelI => Ok(KineticsModel::One),
        Scaling::ModelII => Ok(KineticsModel::Two),
        other => Err(Error::invalid(format!("no closed form for {other:?} scaling"))),
    }
}

/// Closed-form order-one-half solutions on the config grid, with the
/// initial masses of the configured data.
pub fn analytic_fields(cfg: &RunConfig, t: f64) -> Result<Vec<Vec<f64>>> {
    if (cfg.alpha - 0.5).abs() > 1e-12 {
        return Err(Error::invalid("closed-form solutions exist only for alpha = 0.5"));
    }
    let sp = cfg.state_params()?;
    let g = cfg.grid()?;
    let h = g.h();
    let wsum: f64 = cfg.ic_weights(&sp).iter().sum();
    let masses: Vec<f64> = cfg.species_scales().iter().map(|s| s * wsum * h).collect();
    let v = if cfg.analytic.smooth { cfg.ic.variance } else { 0.0 };
    let xs: Vec<f64> = g.nodes().iter().map(|x| x - cfg.ic.center).collect();
    let rs = &cfg.reaction;
    let k_star = macroscopic_rate(rs.model, rs.k, &sp);
    let ell_star = macroscopic_rate(rs.model, rs.l, &sp);
    let pure = || xs.iter().map(|&x| smoothed_green_half(x, t, cfg.k_alpha, v)).collect::<Result<Vec<f64>>>();
    // unit-mass profile relaxing at `rate` under the configured kinetics
    let relaxing = |rate: f64| -> Result<Vec<f64>> {
        match kinetics(rs.model)? {
            KineticsModel::One => {
                xs.iter().map(|&x| smoothed_green_half_decay(x, t, cfg.k_alpha, v, rate)).collect()
            }
            KineticsModel::Two => Ok(pure()?.into_iter().map(|g| g * (-rate * t).exp()).collect()),
        }
    };
    match rs.kind {
        ReactionKind::None => Ok(vec![pure()?.into_iter().map(|g| masses[0] * g).collect()]),
        ReactionKind::Annihilation => Ok(vec![relaxing(k_star)?.into_iter().map(|g| masses[0] * g).collect()]),
        ReactionKind::Monomolecular => {
            let rate = k_star + ell_star;
            if !(rate > 0.0) {
                return Err(Error::invalid("isomerization needs k + l > 0"));
            }
            let (g0, gr) = (pure()?, relaxing(rate)?);
            // the total spreads freely; the excess k·u − l·v relaxes
            let total = masses[0] + masses[1];
            let excess = (k_star * masses[0] - ell_star * masses[1]) / rate;
            let u = g0.iter().zip(&gr).map(|(a, b)| total * ell_star / rate * a + excess * b).collect();
            let w = g0.iter().zip(&gr).map(|(a, b)| total * k_star / rate * a - excess * b).collect();
            Ok(vec![u, w])
        }
        ReactionKind::Bimolecular => Err(Error::invalid("no closed form for bimolecular reactions")),
    }
}

fn analytic_times(cfg: &RunConfig) -> Result<Vec<f64>> {
    match &cfg.analytic.times {
        Some(t) if !t.is_empty() => Ok(t.clone()),
        _ => cfg
            .t_end
            .map(|t| vec![t])
            .ok_or_else(|| Error::Config { path: "/analytic/times".into(), message: "need times or t_end".into() }),
    }
}

pub fn cmd_analytic(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let g = cfg.grid()?;
    let times = analytic_times(cfg)?;
    let species = cfg.reaction.kind.species();
    let mut csv = Csv::new(&observable_header(species));
    for &t in &times {
        let fields = analytic_fields(cfg, t)?;
        for j in 0..g.nx {
            let mut row = vec![fmt_e(t), fmt_e(g.x(j))];
            row.extend(fields.iter().map(|f| fmt_e(f[j])));
            csv.row(&row);
        }
    }
    csv.write(&out.join("analytic.csv"))?;
    Ok(json!({"times": times}))
}

/// Log-spaced sample times and matching (dt, t_end) segments with
/// `substeps` steps between consecutive samples.
pub fn log_schedule(t_first: f64, t_last: f64, per_decade: usize, substeps: usize) -> Result<(Vec<f64>, Vec<(f64, f64)>)> {
    if !(t_first > 0.0 && t_last > t_first) || per_decade == 0 || substeps == 0 {
        return Err(Error::invalid("log schedule needs 0 < t_first < t_last and positive counts"));
    }
    let decades = (t_last / t_first).log10();
    let m = (decades * per_decade as f64).ceil() as usize;
    let times: Vec<f64> = (0..=m).map(|k| t_first * 10f64.powf(decades * k as f64 / m as f64)).collect();
    let mut segs = vec![(t_first / substeps as f64, t_first)];
    for w in times.windows(2) {
        segs.push(((w[1] - w[0]) / substeps as f64, w[1]));
    }
    Ok((times, segs))
}

/// Mean squared displacement series and its three regressions.
pub struct MsdResult {
    pub times: Vec<f64>,
    pub msd: Vec<f64>,
    pub alpha: RegressionResult,
    pub early: Option<RegressionResult>,
    pub late: Option<RegressionResult>,
}

pub fn msd_series(cfg: &RunConfig) -> Result<MsdResult> {
    let sp = cfg.state_params()?;
    let t_first = cfg.msd.t_first.unwrap_or(sp.tau_i[0] / 1000.0);
    let t_last = cfg.msd.t_last.unwrap_or(100.0 * sp.tau_i[sp.n - 1]);
    let (times, segs) = log_schedule(t_first, t_last, cfg.msd.per_decade, cfg.msd.substeps)?;
    let msd = if cfg.msd.stochastic {
        ctrw_msd(&sp, cfg.msd.particles, &times, cfg.seed, cfg.ic.variance)?
    } else {
        let sys = SystemDef::new(sp.clone(), ReactionSpec::none())?;
        let mut f = gaussian_ic(cfg.grid()?, cfg.ic.variance, cfg.ic.center, &[1.0], &sp.mu_i)?;
        let mut out = Vec::with_capacity(times.len());
        let mut err = None;
        integrate_segments(&sys, &mut f, &segs, usize::MAX, |s| {
            if s.t > 0.0 {
                match msd_of_field(&s.grid, &observable_sum(s)[0], cfg.ic.center) {
                    Ok(m) => out.push(m),
                    Err(e) => {
                        err.get_or_insert(e);
                    }
                }
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        out
    };
    let pts: Vec<(f64, f64)> = times.iter().copied().zip(msd.iter().copied()).collect();
    let w = cfg.msd.window.unwrap_or([cfg.t_min, cfg.t_max]);
    let alpha = fit_power_law(&pts, (w[0], w[1]))?;
    // the flat regimes are read off the displacement gained since t = 0
    let m0 = if cfg.msd.stochastic { cfg.ic.variance } else { discrete_ic_variance(cfg)? };
    let inc: Vec<(f64, f64)> = pts.iter().map(|(t, m)| (*t, m - m0)).collect();
    let early_w = cfg.msd.early.unwrap_or([sp.tau_i[0] / 100.0, sp.tau_i[0] / 10.0]);
    let late_w = cfg.msd.late.unwrap_or([10.0 * sp.tau_i[sp.n - 1], 100.0 * sp.tau_i[sp.n - 1]]);
    let early = fit_power_law(&inc, (early_w[0], early_w[1])).ok();
    let late = fit_power_law(&inc, (late_w[0], late_w[1])).ok();
    Ok(MsdResult { times, msd, alpha, early, late })
}

fn discrete_ic_variance(cfg: &RunConfig) -> Result<f64> {
    let f = gaussian_ic(cfg.grid()?, cfg.ic.variance, cfg.ic.center, &[1.0], &[1.0])?;
    msd_of_field(&f.grid, &observable_sum(&f)[0], cfg.ic.center)
}

pub fn cmd_msd(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let r = msd_series(cfg)?;
    let mut csv = Csv::new(&["t", "msd"]);
    for (t, m) in r.times.iter().zip(&r.msd) {
        csv.row(&[fmt_e(*t), fmt_e(*m)]);
    }
    csv.write(&out.join("msd.csv"))?;
    let doc = json!({
        "source": if cfg.msd.stochastic { "ctrw" } else { "deterministic" },
        "alpha": r.alpha, "early": r.early, "late": r.late,
    });
    write_json(&out.join("msd_fit.json"), &doc)?;
    Ok(doc)
}

/// SSA ensemble statistics next to the deterministic solution on the same lattice.
pub struct SsaComparison {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub species: usize,
    /// [time][species·M + voxel]
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub deterministic: Vec<Vec<f64>>,
}

impl SsaComparison {
    /// Largest |mean − deterministic| in units of max(SE, 1/replicas).
    pub fn worst_z(&self, replicas: usize) -> f64 {
        let floor = 1.0 / replicas as f64;
        let mut worst: f64 = 0.0;
        for k in 0..self.times.len() {
            for ((m, s), d) in self.mean[k].iter().zip(&self.stderr[k]).zip(&self.deterministic[k]) {
                worst = worst.max((m - d).abs() / s.max(floor));
            }
        }
        worst
    }
}

pub fn ssa_compare(cfg: &RunConfig) -> Result<SsaComparison> {
    let sp = cfg.state_params()?;
    let sys = SystemDef::new(sp.clone(), cfg.reaction.clone())?;
    let m = cfg.ssa.voxels;
    let grid = Grid1D::new(cfg.domain[0], cfg.domain[1], m)?;
    let s = sys.species();
    let n = sp.n;
    let ic = gaussian_ic(grid, cfg.ic.variance, cfg.ic.center, &cfg.species_scales(), &cfg.ic_weights(&sp))?;
    let mut lattice = LatticeState::empty(m, grid.h(), s, n)?;
    let mut det = FieldSet::zeros(grid, s, n);
    for v in 0..m {
        for sp_ in 0..s {
            for i in 0..n {
                let c = (cfg.ssa.molecules * ic.get(v, sp_, i)).round();
                lattice.set(v, sp_, i, c as u64);
                det.set(v, sp_, i, c / cfg.ssa.molecules);
            }
        }
    }
    let times = match &cfg.ssa.sample_times {
        Some(t) if !t.is_empty() => t.clone(),
        _ => vec![cfg.t_end.ok_or_else(|| Error::Config { path: "/ssa/sample_times".into(), message: "need sample times or t_end".into() })?],
    };
    let table = EventTable::from_system(&sys, grid.h(), cfg.ssa.molecules / grid.h())?;
    let stats = ssa_ensemble(&lattice, &table, &times, cfg.ssa.replicas, cfg.seed, |l| {
        (0..s).flat_map(|k| l.species_profile(k)).map(|c| c as f64).collect()
    })?;
    let dt = cfg.dt.ok_or_else(|| Error::Config { path: "/dt".into(), message: "ssa needs dt for the deterministic reference".into() })?;
    let mut deterministic = Vec::with_capacity(times.len());
    for &t in &times {
        integrate(&sys, &mut det, dt, t, usize::MAX, |_| {})?;
        deterministic.push(observable_sum(&det).into_iter().flatten().map(|c| c * cfg.ssa.molecules).collect());
    }
    Ok(SsaComparison {
        times,
        x: grid.nodes(),
        species: s,
        mean: stats.iter().map(|e| e.mean.clone()).collect(),
        stderr: stats.iter().map(|e| e.stderr.clone()).collect(),
        deterministic,
    })
}

pub fn cmd_ssa(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let c = ssa_compare(cfg)?;
    let m = c.x.len();
    let mut csv = Csv::new(&["t", "x", "species", "mean", "stderr", "deterministic"]);
    for (k, t) in c.times.iter().enumerate() {
        for s in 0..c.species {
            for v in 0..m {
                let idx = s * m + v;
                csv.row(&[fmt_e(*t), fmt_e(c.x[v]), OBSERVABLES[s].into(), fmt_e(c.mean[k][idx]), fmt_e(c.stderr[k][idx]), fmt_e(c.deterministic[k][idx])]);
            }
        }
    }
    csv.write(&out.join("ssa.csv"))?;
    let doc = json!({"replicas": cfg.ssa.replicas, "voxels": m, "worst_z": c.worst_z(cfg.ssa.replicas)});
    write_json(&out.join("ssa.json"), &doc)?;
    Ok(doc)
}

fn verdict_json(v: &crate::states::WVerdict) -> Value {
    json!({"pass": v.passes(), "column_sums_zero": v.column_sums_zero, "reason": v.reason()})
}

/// Well-mixed analysis of the configured system.
pub fn steady_report(cfg: &RunConfig) -> Result<Value> {
    let sp = cfg.state_params()?;
    let m = build_state_matrix(&sp, true);
    let u_inf = stationary_distribution(&m)?;
    let gammas: Vec<Value> = cfg
        .steady
        .omega
        .iter()
        .map(|&w| Ok(json!({"omega": w, "gamma": longtime_diffusion_coeff(&m, w)?})))
        .collect::<Result<_>>()?;
    let mut doc = json!({
        "params": params_json(&sp),
        "stationary": u_inf.as_slice(),
        "gamma_bar": gammas,
        "state_matrix_w": verdict_json(&is_w_matrix(&m.a)),
    });
    let rs = &cfg.reaction;
    let ops = crate::states::build_reaction_ops(rs, &sp)?;
    let h = cfg.grid()?.h();
    let length = cfg.domain[1] - cfg.domain[0];
    let w = cfg.ic_weights(&sp);
    let scales = cfg.species_scales();
    // mean initial concentration per species and state
    let conc = |s: usize| DVector::from_iterator(sp.n, w.iter().map(|wi| scales[s] * wi * h / length));
    match (&ops, rs.kind) {
        (ReactionOps::Linear { k1, .. }, ReactionKind::Annihilation) => {
            let times = cfg.steady.kprime_times.clone().unwrap_or_else(|| {
                (0..=40).map(|k| sp.tau_i[0] * 1e-2 * 10f64.powf(k as f64 / 40.0 * (1e4 * sp.tau_i[sp.n - 1] / sp.tau_i[0]).log10())).collect()
            });
            let ub0 = DVector::from_vec(w.clone());
            let kp = kprime_curve(&m, k1, &ub0, &times)?;
            doc["kprime"] = json!({"k0": kp.k0, "k_inf": kp.k_inf, "times": kp.times, "values": kp.values});
        }
        (ReactionOps::Linear { .. }, ReactionKind::Monomolecular) => {
            let jac = assemble_jacobian(rs, &m, &ops, None)?;
            let total = conc(0).sum() + conc(1).sum();
            let st = linear_steady_state(&jac, total)?;
            let (k_eq, l_eq) = equivalent_rates(&ops, &(&st[0] / st[0].sum()), &(&st[1] / st[1].sum()), &u_inf);
            doc["equivalent"] = json!({"k_eq": k_eq, "l_eq": l_eq});
            doc["steady"] = json!({"U": st[0].sum(), "V": st[1].sum(), "u": st[0].as_slice(), "v": st[1].as_slice()});
            doc["jacobian_w"] = verdict_json(&is_w_matrix(&jac.b));
        }
        (ReactionOps::Bimolecular { .. }, _) => {
            let [u, v, ww] = bimolecular_steady_state(&m, &ops, &conc(0), &conc(1), &conc(2))?;
            let (su, sv, sw) = (u.sum(), v.sum(), ww.sum());
            let (k_eq, l_eq) = equivalent_rates(&ops, &(&u / su), &(&v / sv), &(&ww / sw));
            let jac = assemble_jacobian(rs, &m, &ops, Some((&u, &v)))?;
            doc["equivalent"] = json!({"k_eq": k_eq, "l_eq": l_eq, "balance": k_eq * su * sv - l_eq * sw});
            doc["steady"] = json!({"U": su, "V": sv, "W": sw, "u": u.as_slice(), "v": v.as_slice(), "w": ww.as_slice()});
            doc["jacobian_w"] = json!({"raw": verdict_json(&is_w_matrix(&jac.b)), "weighted": verdict_json(&is_w_matrix(&jac.weighted()))});
        }
        _ => {}
    }
    Ok(doc)
}

pub fn cmd_steady(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let doc = steady_report(cfg)?;
    write_json(&out.join("steady.json"), &doc)?;
    Ok(doc)
}

/// Relative L2 error of each shared observable column at one time.
pub fn compare_tables(numeric: &Table, reference: &Table, time: Option<f64>) -> Result<Value> {
    let col = |t: &Table, name: &str| t.column(name).ok_or_else(|| Error::invalid(format!("missing column `{name}`")));
    let (nt, nx) = (col(numeric, "t")?, col(numeric, "x")?);
    let (rt, rx) = (col(reference, "t")?, col(reference, "x")?);
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1e-300);
    let t = match time {
        Some(t) => t,
        None => {
            // latest time present in both tables
            let times = |tab: &Table, c: usize| (0..tab.rows.len()).map(|r| tab.float(r, c)).collect::<Result<Vec<f64>>>();
            let rts = times(reference, rt)?;
            times(numeric, nt)?
                .into_iter()
                .filter(|a| rts.iter().any(|b| same(*a, *b)))
                .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.max(a))))
                .ok_or_else(|| Error::invalid("tables share no time"))?
        }
    };
    let close = |a: f64| same(a, t);
    let pick = |tab: &Table, tc: usize| -> Result<Vec<usize>> {
        let mut rows = Vec::new();
        for r in 0..tab.rows.len() {
            if close(tab.float(r, tc)?) {
                rows.push(r);
            }
        }
        Ok(rows)
    };
    let nr = pick(numeric, nt)?;
    let rr = pick(reference, rt)?;
    if nr.is_empty() || nr.len() != rr.len() {
        return Err(Error::invalid(format!("tables do not share a grid at t = {t}")));
    }
    for (a, b) in nr.iter().zip(&rr) {
        let (xa, xb) = (numeric.float(*a, nx)?, reference.float(*b, rx)?);
        if (xa - xb).abs() > 1e-9 * xa.abs().max(1.0) {
            return Err(Error::invalid(format!("grid mismatch: x = {xa} vs {xb}")));
        }
    }
    let mut eps = serde_json::Map::new();
    for name in OBSERVABLES {
        if let (Some(a), Some(b)) = (numeric.column(name), reference.column(name)) {
            let va = nr.iter().map(|r| numeric.float(*r, a)).collect::<Result<Vec<_>>>()?;
            let vb = rr.iter().map(|r| reference.float(*r, b)).collect::<Result<Vec<_>>>()?;
            eps.insert(name.into(), json!(l2_rel_error(&va, &vb)?));
        }
    }
    if eps.is_empty() {
        return Err(Error::invalid("no observable column in common"));
    }
    Ok(json!({"t": t, "eps_tot": eps}))
}

pub fn cmd_compare(numeric: &Path, reference: &Path, time: Option<f64>, out: &Path) -> Result<Value> {
    let doc = compare_tables(&Table::read(numeric)?, &Table::read(reference)?, time)?;
    write_json(&out.join("compare.json"), &doc)?;
    Ok(doc)
}

#[derive(Debug, Parser)]
#[command(name = "subdiff", version, about = "Internal-states reaction-subdiffusion toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. --set reaction.k=50 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default: output.path of the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the exponential sum and map it to internal states.
    Fit,
    /// Integrate the reaction-diffusion system.
    Simulate,
    /// Evaluate closed-form solutions (alpha = 0.5).
    Analytic,
    /// Mean squared displacement and its regressions.
    Msd {
        /// Use the particle CTRW instead of the field solver.
        #[arg(long)]
        stochastic: bool,
    },
    /// SSA ensemble on a voxel lattice.
    Ssa,
    /// Well-mixed steady state, equivalent rates and operator checks.
    Steady,
    /// Relative L2 error between two observable CSVs.
    Compare {
        #[arg(long)]
        numeric: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Time to compare at (default: latest time in both tables).
        #[arg(long)]
        time: Option<f64>,
    },
}

fn execute(cli: Cli) -> Result<Value> {
    let load = || -> Result<RunConfig> {
        let path = cli.config.as_ref().ok_or_else(|| Error::invalid("--config is required"))?;
        let mut cfg = RunConfig::load(path, &cli.overrides)?;
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    };
    let out_dir = |cfg: Option<&RunConfig>| -> Result<PathBuf> {
        let dir = cli
            .out
            .clone()
            .or_else(|| cfg.map(|c| PathBuf::from(&c.output.path)))
            .unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    };
    match &cli.command {
        Command::Compare { numeric, reference, time } => cmd_compare(numeric, reference, *time, &out_dir(None)?),
        cmd => {
            let mut cfg = load()?;
            let out = out_dir(Some(&cfg))?;
            match cmd {
                Command::Fit => cmd_fit(&cfg, &out),
                Command::Simulate => cmd_simulate(&cfg, &out),
                Command::Analytic => cmd_analytic(&cfg, &out),
                Command::Msd { stochastic } => {
                    cfg.msd.stochastic |= *stochastic;
                    cmd_msd(&cfg, &out)
                }
                Command::Ssa => cmd_ssa(&cfg, &out),
                Command::Steady => cmd_steady(&cfg, &out),
                Command::Compare { .. } => unreachable!(),
            }
        }
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(doc) => {
            use std::io::Write;
            // a closed pipe downstream is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&doc).unwrap_or_default());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printf_style_exponent() {
        assert_eq!(fmt_e(1e-3), "1.000000000000e-03");
        assert_eq!(fmt_e(-2.5e12), "-2.500000000000e+12");
        assert_eq!(fmt_e(0.0), "0.000000000000e+00");
        assert_eq!(fmt_e(1e-300), "1.000000000000e-300");
    }

    #[test]
    fn dotted_override() {
        let mut v = json!({"reaction": {"k": 1.0}, "domain": [-1.0, 1.0]});
        apply_override(&mut v, "reaction.k=50").unwrap();
        apply_override(&mut v, "domain.1=2").unwrap();
        apply_override(&mut v, "reaction.model=II").unwrap();
        assert_eq!(v, json!({"reaction": {"k": 50, "model": "II"}, "domain": [-1.0, 2]}));
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn schedule_hits_samples_exactly() {
        let (t, s) = log_schedule(1e-6, 1e-2, 5, 10).unwrap();
        assert_eq!(t.len(), s.len());
        assert!((t[t.len() - 1] - 1e-2).abs() < 1e-15);
        for (ti, si) in t.iter().zip(&s) {
            assert_eq!(*ti, si.1);
        }
    }
}
