//! Stochastic validators: a voxel-lattice SSA (direct method) for internal-state
//! systems and particle sampling of the multistate CTRW.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdsolver::SystemDef;
use crate::states::ReactionOps;
use crate::wtfit::StateParams;

/// Copy numbers on a row of voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeState {
    pub voxels: usize,
    pub h: f64,
    pub species: usize,
    pub states: usize,
    /// Index (voxel·S + species)·N + state.
    pub counts: Vec<u64>,
    pub t: f64,
}

impl LatticeState {
    pub fn empty(voxels: usize, h: f64, species: usize, states: usize) -> Result<Self> {
        if voxels == 0 || species == 0 || states == 0 || !(h > 0.0) {
            return Err(Error::invalid("lattice needs at least one voxel, species and state, and h > 0"));
        }
        Ok(LatticeState { voxels, h, species, states, counts: vec![0; voxels * species * states], t: 0.0 })
    }

    pub fn index(&self, voxel: usize, species: usize, state: usize) -> usize {
        (voxel * self.species + species) * self.states + state
    }

    pub fn get(&self, voxel: usize, species: usize, state: usize) -> u64 {
        self.counts[self.index(voxel, species, state)]
    }

    pub fn set(&mut self, voxel: usize, species: usize, state: usize, n: u64) {
        let k = self.index(voxel, species, state);
        self.counts[k] = n;
    }

    /// Molecules of one species summed over states, per voxel.
    pub fn species_profile(&self, species: usize) -> Vec<u64> {
        (0..self.voxels).map(|v| (0..self.states).map(|i| self.get(v, species, i)).sum()).collect()
    }

    pub fn species_total(&self, species: usize) -> u64 {
        self.species_profile(species).iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    StateChange,
    Diffusion,
    MonoReaction,
    BiReaction,
    Production,
    Annihilation,
}

type Slot = (usize, usize);

/// One molecule of `from` turns into `products`; the outcome is drawn from
/// cumulative probabilities.
#[derive(Debug, Clone)]
struct Unimolecular {
    kind: EventKind,
    from: Slot,
    rate: f64,
    outcomes: Vec<(f64, Vec<Slot>)>,
}

#[derive(Debug, Clone)]
struct Bimolecular {
    a: Slot,
    b: Slot,
    /// Per pair of molecules in one voxel.
    rate: f64,
    outcomes: Vec<(f64, Slot)>,
}

#[derive(Debug, Clone)]
struct Production {
    rate: f64,
    outcomes: Vec<(f64, Slot)>,
}

/// Event channels with their propensity parameters.
#[derive(Debug, Clone)]
pub struct EventTable {
    species: usize,
    states: usize,
    uni: Vec<Unimolecular>,
    bi: Vec<Bimolecular>,
    production: Vec<Production>,
    /// Per (species, state): σ²/τ times the unit jump coefficient 1/h².
    hop: Vec<f64>,
}

fn cumulative<T>(items: Vec<(f64, T)>) -> Vec<(f64, T)> {
    let total: f64 = items.iter().map(|p| p.0).sum();
    let mut acc = 0.0;
    items
        .into_iter()
        .map(|(w, x)| {
            acc += w / total;
            (acc, x)
        })
        .collect()
}

fn pick<T>(outcomes: &[(f64, T)], r: f64) -> &T {
    outcomes.iter().find(|o| r < o.0).map_or(&outcomes[outcomes.len() - 1].1, |o| &o.1)
}

impl EventTable {
    /// Channels for the mean-field system `sys` on voxels of width `h`.
    /// Concentrations relate to counts by c = n/(scale·h), which enters only
    /// the bimolecular propensities.
    pub fn from_system(sys: &SystemDef, h: f64, scale: f64) -> Result<Self> {
        if !(h > 0.0 && scale > 0.0) {
            return Err(Error::invalid("lattice spacing and copy-number scale must be positive"));
        }
        let n = sys.states();
        let s = sys.species();
        let m = &sys.matrices;
        let mut uni = Vec::new();
        for sp in 0..s {
            for j in 0..n {
                uni.push(Unimolecular {
                    kind: EventKind::StateChange,
                    from: (sp, j),
                    rate: m.t[j],
                    outcomes: cumulative((0..n).map(|i| (m.mu_hat[i], vec![(sp, i)])).collect()),
                });
            }
        }
        let mut bi = Vec::new();
        match &sys.ops {
            ReactionOps::None => {}
            ReactionOps::Linear { k1, k2, l1, l2 } => {
                if s == 1 {
                    for j in 0..n {
                        uni.push(Unimolecular { kind: EventKind::Annihilation, from: (0, j), rate: k1[(j, j)], outcomes: vec![(1.0, vec![])] });
                    }
                } else {
                    for j in 0..n {
                        let fwd: Vec<_> = (0..n).map(|i| (k2[(i, j)], vec![(1, i)])).collect();
                        if k1[(j, j)] > 0.0 {
                            uni.push(Unimolecular { kind: EventKind::MonoReaction, from: (0, j), rate: k1[(j, j)], outcomes: cumulative(fwd) });
                        }
                        let back: Vec<_> = (0..n).map(|i| (l2[(i, j)], vec![(0, i)])).collect();
                        if l1[(j, j)] > 0.0 {
                            uni.push(Unimolecular { kind: EventKind::MonoReaction, from: (1, j), rate: l1[(j, j)], outcomes: cumulative(back) });
                        }
                    }
                }
            }
            ReactionOps::Bimolecular { k, l } => {
                for i in 0..n {
                    for j in 0..n {
                        let total: f64 = (0..n).map(|c| k.get(i, j, c)).sum();
                        if total > 0.0 {
                            bi.push(Bimolecular {
                                a: (0, i),
                                b: (1, j),
                                rate: total / (scale * h),
                                outcomes: cumulative((0..n).map(|c| (k.get(i, j, c), (2, c))).collect()),
                            });
                        }
                    }
                }
                for c in 0..n {
                    let mut outs = Vec::new();
                    for i in 0..n {
                        for j in 0..n {
                            outs.push((l.get(i, j, c), vec![(0, i), (1, j)]));
                        }
                    }
                    let total: f64 = outs.iter().map(|o| o.0).sum();
                    if total > 0.0 {
                        uni.push(Unimolecular { kind: EventKind::MonoReaction, from: (2, c), rate: total, outcomes: cumulative(outs) });
                    }
                }
            }
        }
        let mut hop = Vec::with_capacity(s * n);
        for _ in 0..s {
            for i in 0..n {
                hop.push(sys.diffusion[i] / (h * h));
            }
        }
        Ok(EventTable { species: s, states: n, uni, bi, production: Vec::new(), hop })
    }

    /// Add a per-molecule removal channel for every state of `species`.
    pub fn with_annihilation(mut self, species: usize, rates: &[f64]) -> Result<Self> {
        if species >= self.species || rates.len() != self.states || rates.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::invalid("annihilation rates must be nonnegative, one per state"));
        }
        for (j, r) in rates.iter().enumerate() {
            self.uni.push(Unimolecular { kind: EventKind::Annihilation, from: (species, j), rate: *r, outcomes: vec![(1.0, vec![])] });
        }
        Ok(self)
    }

    /// Add a zero-order source of `species` per voxel; `rates[i]` feeds state i.
    pub fn with_production(mut self, species: usize, rates: &[f64]) -> Result<Self> {
        if species >= self.species || rates.len() != self.states || rates.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::invalid("production rates must be nonnegative, one per state"));
        }
        let total: f64 = rates.iter().sum();
        if total > 0.0 {
            let outs = cumulative(rates.iter().enumerate().map(|(i, r)| (*r, (species, i))).collect());
            self.production.push(Production { rate: total, outcomes: outs });
        }
        Ok(self)
    }

    fn check(&self, l: &LatticeState) -> Result<()> {
        if l.species != self.species || l.states != self.states {
            return Err(Error::invalid("lattice and event table disagree on species or states"));
        }
        Ok(())
    }
}

enum Channel {
    Uni(usize),
    Bi(usize),
    Prod(usize),
    Hop(usize),
}

struct Propensities {
    per_voxel: Vec<Vec<f64>>,
    totals: Vec<f64>,
}

fn channel_of(e: &EventTable, k: usize) -> Channel {
    let (nu, nb, np) = (e.uni.len(), e.bi.len(), e.production.len());
    if k < nu {
        Channel::Uni(k)
    } else if k < nu + nb {
        Channel::Bi(k - nu)
    } else if k < nu + nb + np {
        Channel::Prod(k - nu - nb)
    } else {
        Channel::Hop(k - nu - nb - np)
    }
}

fn voxel_propensities(e: &EventTable, l: &LatticeState, v: usize, out: &mut Vec<f64>) {
    out.clear();
    for c in &e.uni {
        out.push(c.rate * l.get(v, c.from.0, c.from.1) as f64);
    }
    for c in &e.bi {
        out.push(c.rate * l.get(v, c.a.0, c.a.1) as f64 * l.get(v, c.b.0, c.b.1) as f64);
    }
    for c in &e.production {
        out.push(c.rate);
    }
    let neighbours = (v > 0) as usize + (v + 1 < l.voxels) as usize;
    for s in 0..e.species {
        for i in 0..e.states {
            out.push(e.hop[s * e.states + i] * neighbours as f64 * l.get(v, s, i) as f64);
        }
    }
}

fn add(l: &mut LatticeState, v: usize, slot: Slot, delta: i64) {
    let k = l.index(v, slot.0, slot.1);
    l.counts[k] = (l.counts[k] as i64 + delta) as u64;
}

/// Events fired during one run, by kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    pub state_change: u64,
    pub diffusion: u64,
    pub mono_reaction: u64,
    pub bi_reaction: u64,
    pub production: u64,
    pub annihilation: u64,
}

impl EventCounts {
    fn bump(&mut self, k: EventKind) {
        match k {
            EventKind::StateChange => self.state_change += 1,
            EventKind::Diffusion => self.diffusion += 1,
            EventKind::MonoReaction => self.mono_reaction += 1,
            EventKind::BiReaction => self.bi_reaction += 1,
            EventKind::Production => self.production += 1,
            EventKind::Annihilation => self.annihilation += 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SsaRun {
    /// State at each requested sample time.
    pub snapshots: Vec<LatticeState>,
    pub events: EventCounts,
}

/// Direct-method SSA from `l0`, recording the state at each of `sample_times`
/// (ascending, ≥ l0.t). Stops early if every propensity vanishes.
pub fn ssa_run(l0: &LatticeState, e: &EventTable, sample_times: &[f64], seed: u64) -> Result<SsaRun> {
    ssa_run_with(l0, e, sample_times, stream_rng(seed, 0))
}

/// Independent generator number `stream` under one seed.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn ssa_run_with(l0: &LatticeState, e: &EventTable, sample_times: &[f64], mut rng: ChaCha8Rng) -> Result<SsaRun> {
    e.check(l0)?;
    if sample_times.windows(2).any(|w| w[1] < w[0]) || sample_times.first().is_some_and(|t| *t < l0.t) {
        return Err(Error::invalid("sample times must be ascending and not before the initial time"));
    }
    let mut l = l0.clone();
    let mut props = Propensities { per_voxel: vec![Vec::new(); l.voxels], totals: vec![0.0; l.voxels] };
    for v in 0..l.voxels {
        voxel_propensities(e, &l, v, &mut props.per_voxel[v]);
        props.totals[v] = props.per_voxel[v].iter().sum();
    }
    let mut snapshots = Vec::with_capacity(sample_times.len());
    let mut events = EventCounts::default();
    let mut next = 0;
    loop {
        let a0: f64 = props.totals.iter().sum();
        if !a0.is_finite() {
            return Err(Error::Numerical(format!("propensity overflow at t = {}", l.t)));
        }
        let t_next = if a0 > 0.0 { l.t + Exp::new(a0).expect("positive rate").sample(&mut rng) } else { f64::INFINITY };
        while next < sample_times.len() && sample_times[next] < t_next {
            let mut snap = l.clone();
            snap.t = sample_times[next];
            snapshots.push(snap);
            next += 1;
        }
        if next == sample_times.len() {
            break;
        }
        l.t = t_next;
        let mut r = rng.random::<f64>() * a0;
        let mut v = 0;
        while v + 1 < l.voxels && r >= props.totals[v] {
            r -= props.totals[v];
            v += 1;
        }
        let pv = &props.per_voxel[v];
        let mut k = 0;
        while k + 1 < pv.len() && (r >= pv[k] || pv[k] == 0.0) {
            r -= pv[k];
            k += 1;
        }
        let u = rng.random::<f64>();
        let mut touched = [v, usize::MAX];
        match channel_of(e, k) {
            Channel::Uni(c) => {
                let ch = &e.uni[c];
                add(&mut l, v, ch.from, -1);
                for p in pick(&ch.outcomes, u) {
                    add(&mut l, v, *p, 1);
                }
                events.bump(ch.kind);
            }
            Channel::Bi(c) => {
                let ch = &e.bi[c];
                add(&mut l, v, ch.a, -1);
                add(&mut l, v, ch.b, -1);
                add(&mut l, v, *pick(&ch.outcomes, u), 1);
                events.bump(EventKind::BiReaction);
            }
            Channel::Prod(c) => {
                add(&mut l, v, *pick(&e.production[c].outcomes, u), 1);
                events.bump(EventKind::Production);
            }
            Channel::Hop(c) => {
                let slot = (c / e.states, c % e.states);
                let dest = match (v > 0, v + 1 < l.voxels) {
                    (true, true) => if u < 0.5 { v - 1 } else { v + 1 },
                    (true, false) => v - 1,
                    _ => v + 1,
                };
                add(&mut l, v, slot, -1);
                add(&mut l, dest, slot, 1);
                touched[1] = dest;
                events.bump(EventKind::Diffusion);
            }
        }
        for &w in touched.iter().filter(|w| **w != usize::MAX) {
            voxel_propensities(e, &l, w, &mut props.per_voxel[w]);
            props.totals[w] = props.per_voxel[w].iter().sum();
        }
    }
    Ok(SsaRun { snapshots, events })
}

/// Mean and standard error of an observable across replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub runs: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Unbiased mean and standard error per component over equally long samples.
pub fn ensemble_mean(samples: &[Vec<f64>]) -> Result<EnsembleStats> {
    let runs = samples.len();
    if runs < 2 {
        return Err(Error::invalid("ensemble statistics need at least two runs"));
    }
    let len = samples[0].len();
    if samples.iter().any(|s| s.len() != len) {
        return Err(Error::invalid("ensemble samples differ in length"));
    }
    let n = runs as f64;
    let mut mean = vec![0.0; len];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; len];
    for s in samples {
        for ((v, x), m) in var.iter_mut().zip(s).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let stderr = var.iter().map(|v| (v / (n - 1.0) / n).sqrt()).collect();
    Ok(EnsembleStats { runs, mean, stderr })
}

/// Run `replicas` independent SSA runs (stream r of `seed_base`) in parallel and
/// reduce each snapshot through `observe`. Returns one [`EnsembleStats`] per
/// sample time.
pub fn ssa_ensemble(
    l0: &LatticeState,
    e: &EventTable,
    sample_times: &[f64],
    replicas: usize,
    seed_base: u64,
    observe: impl Fn(&LatticeState) -> Vec<f64> + Sync,
) -> Result<Vec<EnsembleStats>> {
    let runs: Vec<Vec<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let run = ssa_run_with(l0, e, sample_times, stream_rng(seed_base, r as u64))?;
            Ok(run.snapshots.iter().map(&observe).collect())
        })
        .collect::<Result<_>>()?;
    (0..sample_times.len())
        .map(|k| {
            let at: Vec<Vec<f64>> = runs.iter().map(|r| r[k].clone()).collect();
            ensemble_mean(&at)
        })
        .collect()
}

/// One particle path of the multistate CTRW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    /// Jump times, strictly increasing, starting with 0.
    pub times: Vec<f64>,
    /// Position after each jump; `positions[0]` is the start.
    pub positions: Vec<f64>,
}

impl Trajectory {
    pub fn position_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|s| *s <= t);
        self.positions[k.saturating_sub(1)]
    }
}

struct Walker {
    states: Vec<(f64, Exp<f64>)>,
    jump: Normal<f64>,
}

impl Walker {
    fn new(sp: &StateParams) -> Result<Self> {
        let mut acc = 0.0;
        let mut states = Vec::with_capacity(sp.n);
        for (mu, tau) in sp.mu_i.iter().zip(&sp.tau_i) {
            acc += mu;
            states.push((acc, Exp::new(1.0 / tau).map_err(|e| Error::invalid(e.to_string()))?));
        }
        let jump = Normal::new(0.0, (2.0 * sp.sigma2).sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(Walker { states, jump })
    }

    fn wait(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u = rng.random::<f64>() * self.states[self.states.len() - 1].0;
        let k = self.states.partition_point(|s| s.0 <= u).min(self.states.len() - 1);
        self.states[k].1.sample(rng)
    }
}

/// Sample one path up to `t_end`: draw a state by its weight, wait an
/// exponential time with that state's mean, then jump with variance 2σ².
pub fn ctrw_trajectory(sp: &StateParams, t_end: f64, x0: f64, seed: u64) -> Result<Trajectory> {
    let w = Walker::new(sp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut t, mut x) = (0.0, x0);
    let (mut times, mut positions) = (vec![0.0], vec![x0]);
    loop {
        t += w.wait(&mut rng);
        if t > t_end {
            break;
        }
        x += w.jump.sample(&mut rng);
        times.push(t);
        positions.push(x);
    }
    Ok(Trajectory { seed, times, positions })
}

const CTRW_CHUNK: usize = 1000;

/// Mean of x(t)² over `n_particles` free-space walkers started from
/// N(0, x0_variance), at each of the ascending `times`.
pub fn ctrw_msd(sp: &StateParams, n_particles: usize, times: &[f64], seed: u64, x0_variance: f64) -> Result<Vec<f64>> {
    if n_particles == 0 {
        return Err(Error::invalid("need at least one particle"));
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 {
        return Err(Error::invalid("sample times must be nonnegative and ascending"));
    }
    if !(x0_variance >= 0.0) {
        return Err(Error::invalid("initial variance must be nonnegative"));
    }
    let walker = Walker::new(sp)?;
    let start = Normal::new(0.0, x0_variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let chunks = n_particles.div_ceil(CTRW_CHUNK);
    let sums: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let count = CTRW_CHUNK.min(n_particles - c * CTRW_CHUNK);
            let mut acc = vec![0.0; times.len()];
            for _ in 0..count {
                let mut x = start.sample(&mut rng);
                let mut t = walker.wait(&mut rng);
                for (k, s) in times.iter().enumerate() {
                    while t <= *s {
                        x += walker.jump.sample(&mut rng);
                        t += walker.wait(&mut rng);
                    }
                    acc[k] += x * x;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; times.len()];
    for s in &sums {
        for (a, b) in total.iter_mut().zip(s) {
            *a += b;
        }
    }
    Ok(total.into_iter().map(|s| s / n_particles as f64).collect())
}
