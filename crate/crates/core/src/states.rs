//! Internal-state operators and their mean-field analysis.
//!
//! Species vectors are indexed by internal state. A monomolecular general
//! matrix entry `K[i][j]` is the rate of A in state i turning into B in
//! state j; a bimolecular tensor entry `K[i][j][c]` is the rate of A in
//! state i meeting B in state j to form C in state c, and `L[i][j][c]` the
//! reverse dissociation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wtfit::StateParams;

/// Transition structure of the internal states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrixSet {
    /// Diagonal of T, i.e. 1/τᵢ.
    pub t: DVector<f64>,
    /// Exchange generator (μ eᵀ − I) T.
    pub a: DMatrix<f64>,
    /// Redistribution vector used in A.
    pub mu_hat: DVector<f64>,
    /// Diagonal of the diffusion matrix σ² T.
    pub d: DVector<f64>,
}

impl StateMatrixSet {
    pub fn n(&self) -> usize {
        self.t.len()
    }

    /// Largest |Σᵢ Aᵢⱼ| over columns.
    pub fn column_sum_deficit(&self) -> f64 {
        column_sums(&self.a).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Assemble A and D. With `normalize` off the raw weights go into A, which
/// then leaks mass unless they already sum to one.
pub fn build_state_matrix(sp: &StateParams, normalize: bool) -> StateMatrixSet {
    let n = sp.n;
    let t = DVector::from_iterator(n, sp.tau_i.iter().map(|v| 1.0 / v));
    let w = if normalize { &sp.mu_i } else { &sp.raw_weights };
    let mu_hat = DVector::from_column_slice(w);
    let a = DMatrix::from_fn(n, n, |i, j| (mu_hat[i] - if i == j { 1.0 } else { 0.0 }) * t[j]);
    let d = &t * sp.sigma2;
    StateMatrixSet { t, a, mu_hat, d }
}

fn column_sums(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.sum()).collect()
}

/// Solve [M; cᵀ] x = [0; total] for a generator with one-dimensional kernel.
fn bordered_kernel(m: &DMatrix<f64>, c: &DVector<f64>, total: f64) -> Result<DVector<f64>> {
    let n = m.ncols();
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max().max(1e-300);
    let small = sv.iter().filter(|s| **s <= 1e-10 * top).count();
    if small != 1 {
        return Err(Error::Numerical(format!("kernel dimension {small} at tolerance, expected 1")));
    }
    let mut b = DMatrix::zeros(n + 1, n);
    b.view_mut((0, 0), (n, n)).copy_from(m);
    for j in 0..n {
        b[(n, j)] = c[j];
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = total;
    b.svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numerical(format!("bordered solve failed: {e}")))
}

/// Nonnegative null vector of A with unit 1-norm.
pub fn stationary_distribution(m: &StateMatrixSet) -> Result<DVector<f64>> {
    let n = m.n();
    if m.column_sum_deficit() > 1e-10 * m.t.max() {
        return Err(Error::invalid("stationary distribution needs a mass-conserving A"));
    }
    let x = bordered_kernel(&m.a, &DVector::from_element(n, 1.0), 1.0)?;
    if x.iter().any(|v| *v < -1e-12) {
        return Err(Error::Numerical("null vector has negative entries".into()));
    }
    Ok(x.map(|v| v.max(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactionKind {
    None,
    Annihilation,
    Monomolecular,
    Bimolecular,
}

impl ReactionKind {
    pub fn species(self) -> usize {
        match self {
            ReactionKind::None | ReactionKind::Annihilation => 1,
            ReactionKind::Monomolecular => 2,
            ReactionKind::Bimolecular => 3,
        }
    }
}

/// How the per-state rates are derived from the scalar rates k and ℓ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Rates k/τᵢ: reactions share the state waiting times.
    #[serde(rename = "I")]
    ModelI,
    /// Rates k in every state.
    #[serde(rename = "II")]
    ModelII,
    /// Rates k/τᵢ with state-independent diffusion σ².
    AnomalousReaction,
    /// Bimolecular, every (i, j) pair reacts at k(θ/τᵢ + (1−θ)/τⱼ) into any
    /// product state c, which dissociates at ℓ/τ_c into any (i, j).
    CrossState,
    /// Caller-supplied matrices or tensors.
    General,
}

/// Dense N×N×N rate tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 { n, data: vec![0.0; n * n * n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for c in 0..n {
                    t.data[(i * n + j) * n + c] = f(i, j, c);
                }
            }
        }
        t
    }

    pub fn from_nested(v: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n = v.len();
        if v.iter().any(|r| r.len() != n || r.iter().any(|c| c.len() != n)) {
            return Err(Error::invalid("rate tensor must be N×N×N"));
        }
        Ok(Tensor3::from_fn(n, |i, j, c| v[i][j][c]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + c]
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..n).all(|j| (0..n).all(|c| (i == j && j == c) || self.get(i, j, c) == 0.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSpec {
    pub kind: ReactionKind,
    #[serde(default = "default_scaling")]
    pub model: Scaling,
    #[serde(default)]
    pub k: f64,
    #[serde(default)]
    pub l: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default, rename = "K_matrix", skip_serializing_if = "Option::is_none")]
    pub k_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "L_matrix", skip_serializing_if = "Option::is_none")]
    pub l_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "K_tensor", skip_serializing_if = "Option::is_none")]
    pub k_tensor: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, rename = "L_tensor", skip_serializing_if = "Option::is_none")]
    pub l_tensor: Option<Vec<Vec<Vec<f64>>>>,
}

fn default_scaling() -> Scaling {
    Scaling::ModelI
}

fn default_theta() -> f64 {
    0.5
}

impl ReactionSpec {
    pub fn none() -> Self {
        ReactionSpec::simple(ReactionKind::None, Scaling::ModelI, 0.0, 0.0)
    }

    pub fn simple(kind: ReactionKind, model: Scaling, k: f64, l: f64) -> Self {
        ReactionSpec {
            kind,
            model,
            k,
            l,
            theta: 0.5,
            k_matrix: None,
            l_matrix: None,
            k_tensor: None,
            l_tensor: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0 && self.l >= 0.0 && self.k.is_finite() && self.l.is_finite()) {
            return Err(Error::invalid("rates must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid("theta must lie in [0,1]"));
        }
        let bad = |m: &Option<Vec<Vec<f64>>>| m.iter().flatten().flatten().any(|v| !(*v >= 0.0));
        let bad3 = |m: &Option<Vec<Vec<Vec<f64>>>>| m.iter().flatten().flatten().flatten().any(|v| !(*v >= 0.0));
        if bad(&self.k_matrix) || bad(&self.l_matrix) || bad3(&self.k_tensor) || bad3(&self.l_tensor) {
            return Err(Error::invalid("general rate entries must be nonnegative"));
        }
        match (self.kind, self.model) {
            (ReactionKind::Bimolecular, Scaling::AnomalousReaction) => {
                Err(Error::invalid("anomalous_reaction scaling applies to linear reactions only"))
            }
            (k, Scaling::CrossState) if k != ReactionKind::Bimolecular => {
                Err(Error::invalid("cross_state scaling applies to bimolecular reactions only"))
            }
            (ReactionKind::Bimolecular, Scaling::General) if self.k_tensor.is_none() || self.l_tensor.is_none() => {
                Err(Error::invalid("general bimolecular reactions need K_tensor and L_tensor"))
            }
            (ReactionKind::Annihilation, Scaling::General) if self.k_matrix.is_none() => {
                Err(Error::invalid("general annihilation needs K_matrix"))
            }
            (ReactionKind::Monomolecular, Scaling::General) if self.k_matrix.is_none() || self.l_matrix.is_none() => {
                Err(Error::invalid("general monomolecular reactions need K_matrix and L_matrix"))
            }
            _ => Ok(()),
        }
    }
}

/// Assembled reaction operators.
#[derive(Debug, Clone, PartialEq)]
pub enum ReactionOps {
    None,
    /// du = −K₁u + L₂v, dv = K₂u − L₁v. For annihilation only K₁ is used.
    Linear {
        k1: DMatrix<f64>,
        k2: DMatrix<f64>,
        l1: DMatrix<f64>,
        l2: DMatrix<f64>,
    },
    Bimolecular { k: Tensor3, l: Tensor3 },
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!("rate matrix must be {n}×{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Macroscopic FPDE rate that the internal-state rate k stands for.
/// Model I rates k/τᵢ carry the same 1/τ^α scaling as the diffusion
/// coefficient, so k* = k/τ^α (units s^−α).
pub fn macroscopic_rate(model: Scaling, k: f64, sp: &StateParams) -> f64 {
    match model {
        Scaling::ModelI => k / sp.tau.powf(sp.alpha),
        _ => k,
    }
}

pub fn build_reaction_ops(rs: &ReactionSpec, sp: &StateParams) -> Result<ReactionOps> {
    rs.validate()?;
    let n = sp.n;
    let inv: Vec<f64> = sp.tau_i.iter().map(|t| 1.0 / t).collect();
    match rs.kind {
        ReactionKind::None => Ok(ReactionOps::None),
        ReactionKind::Annihilation | ReactionKind::Monomolecular => {
            let (k, l) = match rs.model {
                Scaling::ModelI | Scaling::AnomalousReaction => (
                    DMatrix::from_diagonal(&DVector::from_iterator(n, inv.iter().map(|v| rs.k * v))),
                    DMatrix::from_diagonal(&DVector::from_iterator(n, inv.iter().map(|v| rs.l * v))),
                ),
                Scaling::ModelII => (DMatrix::identity(n, n) * rs.k, DMatrix::identity(n, n) * rs.l),
                Scaling::General => {
                    let k = matrix_from_rows(rs.k_matrix.as_deref().unwrap_or_default(), n)?;
                    let l = match &rs.l_matrix {
                        Some(m) => matrix_from_rows(m, n)?,
                        None => DMatrix::zeros(n, n),
                    };
                    (k, l)
                }
                Scaling::CrossState => unreachable!("rejected by validate"),
            };
            let e = DVector::from_element(n, 1.0);
            let l = if rs.kind == ReactionKind::Annihilation { DMatrix::zeros(n, n) } else { l };
            Ok(ReactionOps::Linear {
                k1: DMatrix::from_diagonal(&(&k * &e)),
                k2: k.transpose(),
                l1: DMatrix::from_diagonal(&(&l * &e)),
                l2: l.transpose(),
            })
        }
        ReactionKind::Bimolecular => {
            let (k, l) = match rs.model {
                Scaling::ModelI => (
                    Tensor3::from_fn(n, |i, j, c| if i == j && j == c { rs.k * inv[i] } else { 0.0 }),
                    Tensor3::from_fn(n, |i, j, c| if i == j && j == c { rs.l * inv[i] } else { 0.0 }),
                ),
                Scaling::ModelII => (
                    Tensor3::from_fn(n, |i, j, c| if i == j && j == c { rs.k } else { 0.0 }),
                    Tensor3::from_fn(n, |i, j, c| if i == j && j == c { rs.l } else { 0.0 }),
                ),
                Scaling::CrossState => (
                    Tensor3::from_fn(n, |i, j, _| rs.k * (rs.theta * inv[i] + (1.0 - rs.theta) * inv[j])),
                    Tensor3::from_fn(n, |_, _, c| rs.l * inv[c]),
                ),
                Scaling::General => {
                    let k = Tensor3::from_nested(rs.k_tensor.as_deref().unwrap_or_default())?;
                    let l = Tensor3::from_nested(rs.l_tensor.as_deref().unwrap_or_default())?;
                    if k.n() != n || l.n() != n {
                        return Err(Error::invalid(format!("rate tensors must be {n}×{n}×{n}")));
                    }
                    (k, l)
                }
                Scaling::AnomalousReaction => unreachable!("rejected by validate"),
            };
            Ok(ReactionOps::Bimolecular { k, l })
        }
    }
}

/// Diffusion coefficients per state for a given reaction setup.
pub fn diffusion_diag(rs: &ReactionSpec, sp: &StateParams) -> DVector<f64> {
    match rs.model {
        Scaling::AnomalousReaction => DVector::from_element(sp.n, sp.sigma2),
        _ => DVector::from_iterator(sp.n, sp.tau_i.iter().map(|t| sp.sigma2 / t)),
    }
}

/// Per-state reaction rates of a bimolecular system at concentrations (u, v, w).
/// Returns (association rate into each product state, dissociation gains for
/// A and B states, loss rate of each C state) without the exchange terms.
pub struct BimolecularRates {
    pub du: DVector<f64>,
    pub dv: DVector<f64>,
    pub dw: DVector<f64>,
}

pub fn bimolecular_rates(k: &Tensor3, l: &Tensor3, u: &[f64], v: &[f64], w: &[f64]) -> BimolecularRates {
    let n = k.n();
    let mut du = DVector::zeros(n);
    let mut dv = DVector::zeros(n);
    let mut dw = DVector::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let uv = u[i] * v[j];
            for c in 0..n {
                let f = k.get(i, j, c) * uv;
                let b = l.get(i, j, c) * w[c];
                let net = f - b;
                du[i] -= net;
                dv[j] -= net;
                dw[c] += net;
            }
        }
    }
    BimolecularRates { du, dv, dw }
}

/// Linearized generator of the well-mixed system around a state.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobian {
    pub b: DMatrix<f64>,
    pub species: Vec<&'static str>,
    /// Conservation weights per species.
    pub weights: Vec<f64>,
}

impl BlockJacobian {
    fn weight_vector(&self) -> DVector<f64> {
        let n = self.b.nrows() / self.weights.len();
        DVector::from_iterator(self.b.nrows(), self.weights.iter().flat_map(|w| std::iter::repeat_n(*w, n)))
    }

    /// Column sums with the conservation weights applied.
    pub fn weighted_column_sums(&self) -> Vec<f64> {
        let w = self.weight_vector();
        (w.transpose() * &self.b).iter().copied().collect()
    }

    pub fn raw_column_sums(&self) -> Vec<f64> {
        column_sums(&self.b)
    }

    /// diag(w) B diag(w)⁻¹, whose plain column sums are the weighted sums.
    pub fn weighted(&self) -> DMatrix<f64> {
        let w = self.weight_vector();
        DMatrix::from_fn(self.b.nrows(), self.b.ncols(), |i, j| w[i] * self.b[(i, j)] / w[j])
    }
}

/// Jacobian of the well-mixed reaction-exchange system. Bimolecular systems
/// need the state (u, v) around which to linearize.
pub fn assemble_jacobian(
    rs: &ReactionSpec,
    m: &StateMatrixSet,
    ops: &ReactionOps,
    steady: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<BlockJacobian> {
    let n = m.n();
    let a = &m.a;
    match (rs.kind, ops) {
        (ReactionKind::None, _) => Ok(BlockJacobian { b: a.clone(), species: vec!["A"], weights: vec![1.0] }),
        (ReactionKind::Annihilation, ReactionOps::Linear { k1, .. }) => {
            Ok(BlockJacobian { b: a - k1, species: vec!["A"], weights: vec![1.0] })
        }
        (ReactionKind::Monomolecular, ReactionOps::Linear { k1, k2, l1, l2 }) => {
            let mut b = DMatrix::zeros(2 * n, 2 * n);
            b.view_mut((0, 0), (n, n)).copy_from(&(a - k1));
            b.view_mut((0, n), (n, n)).copy_from(l2);
            b.view_mut((n, 0), (n, n)).copy_from(k2);
            b.view_mut((n, n), (n, n)).copy_from(&(a - l1));
            Ok(BlockJacobian { b, species: vec!["A", "B"], weights: vec![1.0, 1.0] })
        }
        (ReactionKind::Bimolecular, ReactionOps::Bimolecular { k, l }) => {
            let (u, v) = steady.ok_or_else(|| Error::invalid("bimolecular Jacobian needs the steady state (u, v)"))?;
            if u.len() != n || v.len() != n {
                return Err(Error::invalid("steady vectors must have one entry per state"));
            }
            let mut b = DMatrix::zeros(3 * n, 3 * n);
            b.view_mut((0, 0), (n, n)).copy_from(a);
            b.view_mut((n, n), (n, n)).copy_from(a);
            b.view_mut((2 * n, 2 * n), (n, n)).copy_from(a);
            for i in 0..n {
                for j in 0..n {
                    for c in 0..n {
                        let kk = k.get(i, j, c);
                        let ll = l.get(i, j, c);
                        // ∂/∂u_i and ∂/∂v_j of the association flux K_ijc u_i v_j
                        let fu = kk * v[j];
                        let fv = kk * u[i];
                        b[(i, i)] -= fu;
                        b[(i, n + j)] -= fv;
                        b[(n + j, i)] -= fu;
                        b[(n + j, n + j)] -= fv;
                        b[(2 * n + c, i)] += fu;
                        b[(2 * n + c, n + j)] += fv;
                        // dissociation flux L_ijc w_c
                        b[(i, 2 * n + c)] += ll;
                        b[(n + j, 2 * n + c)] += ll;
                        b[(2 * n + c, 2 * n + c)] -= ll;
                    }
                }
            }
            Ok(BlockJacobian { b, species: vec!["A", "B", "C"], weights: vec![1.0, 1.0, 2.0] })
        }
        _ => Err(Error::invalid("reaction operators do not match the reaction kind")),
    }
}

/// Outcome of the three generator checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WVerdict {
    pub max_column_sum: f64,
    pub column_sums_zero: bool,
    pub min_off_diagonal: f64,
    pub off_diagonal_nonnegative: bool,
    pub irreducible: bool,
}

impl WVerdict {
    pub fn passes(&self) -> bool {
        self.column_sums_zero && self.off_diagonal_nonnegative && self.irreducible
    }

    pub fn reason(&self) -> Option<String> {
        let mut why = Vec::new();
        if !self.column_sums_zero {
            why.push(format!("column sums up to {:e}", self.max_column_sum));
        }
        if !self.off_diagonal_nonnegative {
            why.push(format!("negative off-diagonal {:e}", self.min_off_diagonal));
        }
        if !self.irreducible {
            why.push("reducible".to_string());
        }
        (!why.is_empty()).then(|| why.join("; "))
    }
}

/// Zero column sums, nonnegative off-diagonals and strong connectivity.
pub fn is_w_matrix(m: &DMatrix<f64>) -> WVerdict {
    let n = m.nrows();
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let max_column_sum = column_sums(m).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut min_off = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                min_off = min_off.min(m[(i, j)]);
            }
        }
    }
    if n == 1 {
        min_off = 0.0;
    }
    let tol = 1e-12 * scale;
    WVerdict {
        max_column_sum,
        column_sums_zero: max_column_sum <= tol,
        min_off_diagonal: min_off,
        off_diagonal_nonnegative: min_off >= -tol,
        irreducible: strongly_connected(m, tol),
    }
}

fn strongly_connected(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(p) = stack.pop() {
            for q in 0..n {
                let w = if forward { m[(q, p)] } else { m[(p, q)] };
                if q != p && !seen[q] && w.abs() > tol {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    n <= 1 || (reach(true) && reach(false))
}

/// Max and min of e^{Bᵀt} η₀ at each sample time.
pub fn adjoint_envelope(b: &DMatrix<f64>, eta0: &DVector<f64>, times: &[f64]) -> Vec<(f64, f64)> {
    let bt = b.transpose();
    times
        .iter()
        .map(|&t| {
            let eta = (&bt * t).exp() * eta0;
            (eta.max(), eta.min())
        })
        .collect()
}

/// Equivalent macroscopic rates from normalized state distributions.
pub fn equivalent_rates(ops: &ReactionOps, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> (f64, f64) {
    match ops {
        ReactionOps::None => (0.0, 0.0),
        ReactionOps::Linear { k1, l1, .. } => ((k1 * u).sum(), (l1 * v).sum()),
        ReactionOps::Bimolecular { k, l } => {
            let n = k.n();
            let (mut keq, mut leq) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    for c in 0..n {
                        keq += k.get(i, j, c) * u[i] * v[j];
                        leq += l.get(i, j, c) * w[c];
                    }
                }
            }
            (keq, leq)
        }
    }
}

/// Eigenvalue with the largest real part.
fn leading_eigenvalue(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.complex_eigenvalues();
    let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    (re[0], re.get(1).copied().unwrap_or(f64::NEG_INFINITY))
}

fn null_vector(m: &DMatrix<f64>) -> DVector<f64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let k = svd.singular_values.imin();
    let v: DVector<f64> = vt.row(k).transpose();
    if v.sum() < 0.0 {
        -v
    } else {
        v
    }
}

/// Long-time diffusion coefficient of a spatial cosine mode with frequency ω.
pub fn longtime_diffusion_coeff(m: &StateMatrixSet, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::invalid("omega must be positive"));
    }
    let n = m.n();
    let mm = &m.a - DMatrix::from_diagonal(&m.d) * (omega * omega);
    let (l1, l2) = leading_eigenvalue(&mm);
    if n > 1 && (l1 - l2).abs() <= 1e-10 * l1.abs().max(1.0) {
        return Err(Error::Numerical("dominant eigenvalue is not simple".into()));
    }
    let s = null_vector(&(mm - DMatrix::identity(n, n) * l1));
    Ok(m.d.dot(&s) / s.sum())
}

/// Apparent first-order rate k′(t) of the total amount under A − K₁.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KPrime {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub k0: f64,
    pub k_inf: f64,
}

pub fn kprime_curve(m: &StateMatrixSet, k1: &DMatrix<f64>, ubar0: &DVector<f64>, times: &[f64]) -> Result<KPrime> {
    if times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::invalid("times must be nonnegative"));
    }
    let g = &m.a - k1;
    let e = DVector::from_element(m.n(), 1.0);
    let values = times
        .iter()
        .map(|&t| {
            let ub = (&g * t).exp() * ubar0;
            (k1 * &ub).sum() / ub.sum()
        })
        .collect();
    let (l1, _) = leading_eigenvalue(&g);
    Ok(KPrime {
        times: times.to_vec(),
        values,
        k0: e.dot(&(k1 * ubar0)) / ubar0.sum(),
        k_inf: -l1,
    })
}

/// Total amount per state at time t: e^{(A−K₁)t} ū(0).
pub fn total_amount_evolution(m: &StateMatrixSet, k1: &DMatrix<f64>, ubar0: &DVector<f64>, t: f64) -> DVector<f64> {
    ((&m.a - k1) * t).exp() * ubar0
}

/// Spectral abscissa of A − K₁.
pub fn decay_abscissa(m: &StateMatrixSet, k1: &DMatrix<f64>) -> f64 {
    leading_eigenvalue(&(&m.a - k1)).0
}

/// Well-mixed steady state per species for linear systems, with the total
/// amount (summed over species and states) fixed.
pub fn linear_steady_state(jac: &BlockJacobian, total: f64) -> Result<Vec<DVector<f64>>> {
    let s = jac.weights.len();
    let n = jac.b.nrows() / s;
    let c = DVector::from_element(jac.b.nrows(), 1.0);
    let x = bordered_kernel(&jac.b, &c, total)?;
    Ok((0..s).map(|k| x.rows(k * n, n).into_owned()).collect())
}

/// Right-hand side of the well-mixed bimolecular system.
fn bimolecular_rhs(a: &DMatrix<f64>, k: &Tensor3, l: &Tensor3, y: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let (u, v, w) = (y.rows(0, n), y.rows(n, n), y.rows(2 * n, n));
    let r = bimolecular_rates(k, l, u.as_slice(), v.as_slice(), w.as_slice());
    let mut out = DVector::zeros(3 * n);
    out.rows_mut(0, n).copy_from(&(a * u + r.du));
    out.rows_mut(n, n).copy_from(&(a * v + r.dv));
    out.rows_mut(2 * n, n).copy_from(&(a * w + r.dw));
    out
}

/// Well-mixed steady state of a bimolecular system reached from the state
/// concentrations (u0, v0, w0). Pseudo-transient continuation keeps the
/// conserved sums e(u+w) and e(v+w) exact, then Newton polishes.
pub fn bimolecular_steady_state(
    m: &StateMatrixSet,
    ops: &ReactionOps,
    u0: &DVector<f64>,
    v0: &DVector<f64>,
    w0: &DVector<f64>,
) -> Result<[DVector<f64>; 3]> {
    let ReactionOps::Bimolecular { k, l } = ops else {
        return Err(Error::invalid("bimolecular steady state needs bimolecular operators"));
    };
    let n = m.n();
    let rs = ReactionSpec::simple(ReactionKind::Bimolecular, Scaling::General, 0.0, 0.0);
    let mut y = DVector::zeros(3 * n);
    y.rows_mut(0, n).copy_from(u0);
    y.rows_mut(n, n).copy_from(v0);
    y.rows_mut(2 * n, n).copy_from(w0);
    let scale = y.amax().max(1e-300);
    let fast = m.t.max();
    let mut dt = 0.1 / fast;
    for _ in 0..400 {
        let f = bimolecular_rhs(&m.a, k, l, &y);
        let un = y.rows(0, n).into_owned();
        let vn = y.rows(n, n).into_owned();
        let jac = assemble_jacobian(&rs, m, ops, Some((&un, &vn)))?.b;
        let lhs = DMatrix::identity(3 * n, 3 * n) / dt - &jac;
        let step = lhs.lu().solve(&f).ok_or_else(|| Error::Numerical("singular continuation step".into()))?;
        let trial = &y + &step;
        if trial.iter().any(|v| *v < -1e-12 * scale) {
            dt *= 0.25;
            continue;
        }
        y = trial.map(|v| v.max(0.0));
        let res = bimolecular_rhs(&m.a, k, l, &y).amax();
        if res <= 1e-12 * fast * scale && step.amax() <= 1e-12 * scale {
            return Ok([y.rows(0, n).into_owned(), y.rows(n, n).into_owned(), y.rows(2 * n, n).into_owned()]);
        }
        // past this the continuation matrix is as singular as the Jacobian
        dt = (dt * 2.0).min(1e6 / fast);
    }
    Err(Error::Numerical("bimolecular steady state did not converge".into()))
}
