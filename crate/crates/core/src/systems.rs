//! State-space systems `x_t = F(x_{t-1}, z_t)` with scalar inputs: the
//! linear map `Ax + Cz`, echo state networks, filter evaluation, the echo
//! state property check, system morphisms, and state standardization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// Default number of discarded initial states.
pub const DEFAULT_WASHOUT: usize = 1_000;

/// A state map `F: R^N x R -> R^N`.
pub trait StateMap<T: Real>: Send + Sync {
    fn state_dim(&self) -> usize;

    fn apply(&self, state: &DVector<T>, input: T) -> DVector<T>;

    /// Lipschitz constant of `F` in the state argument. Below one it
    /// certifies the echo state property.
    fn contraction_constant(&self) -> T;

    fn apply_into(&self, state: &DVector<T>, input: T, out: &mut DVector<T>) {
        *out = self.apply(state, input);
    }
}

impl<T: Real, S: StateMap<T> + ?Sized> StateMap<T> for &S {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn apply(&self, state: &DVector<T>, input: T) -> DVector<T> {
        (**self).apply(state, input)
    }
    fn contraction_constant(&self) -> T {
        (**self).contraction_constant()
    }
    fn apply_into(&self, state: &DVector<T>, input: T, out: &mut DVector<T>) {
        (**self).apply_into(state, input, out)
    }
}

fn check_square_and_vector<T: Real>(a: &DMatrix<T>, c: &DVector<T>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "connectivity matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if c.len() != a.nrows() {
        return Err(Error::Dimension(format!(
            "input vector has length {}, state dimension is {}",
            c.len(),
            a.nrows()
        )));
    }
    if a.iter().chain(c.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("system matrix entry"));
    }
    Ok(())
}

fn check_contractive<T: Real>(a: &DMatrix<T>) -> Result<T> {
    let s = linalg::spectral_norm(a);
    if s >= T::one() {
        return Err(Error::NotContractive(s.as_f64()));
    }
    Ok(s)
}

/// `F(x, z) = A x + C z` with `sigma_max(A) < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStateSystem<T: Real> {
    a: DMatrix<T>,
    c: DVector<T>,
    sigma_max: T,
}

impl<T: Real> LinearStateSystem<T> {
    pub fn new(a: DMatrix<T>, c: DVector<T>) -> Result<Self> {
        check_square_and_vector(&a, &c)?;
        let sigma_max = check_contractive(&a)?;
        Ok(Self { a, c, sigma_max })
    }

    /// Rescales `a` so that its largest singular value equals `target`.
    pub fn with_sigma_max(a: DMatrix<T>, c: DVector<T>, target: T) -> Result<Self> {
        let s = linalg::spectral_norm(&a);
        let a = if s > T::zero() { a * (target / s) } else { a };
        Self::new(a, c)
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn c(&self) -> &DVector<T> {
        &self.c
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn sigma_max(&self) -> T {
        self.sigma_max
    }
}

impl<T: Real> StateMap<T> for LinearStateSystem<T> {
    fn state_dim(&self) -> usize {
        self.dim()
    }

    fn apply(&self, state: &DVector<T>, input: T) -> DVector<T> {
        &self.a * state + &self.c * input
    }

    fn contraction_constant(&self) -> T {
        self.sigma_max
    }

    fn apply_into(&self, state: &DVector<T>, input: T, out: &mut DVector<T>) {
        out.copy_from(&self.c);
        out.gemv(T::one(), &self.a, state, input);
    }
}

/// Componentwise nonlinearity of an echo state network. Both are odd and
/// 1-Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn eval<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn lipschitz<T: Real>(self) -> T {
        T::one()
    }
}

/// `F(x, z) = sigma(A x + C z + zeta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoStateNetwork<T: Real> {
    a: DMatrix<T>,
    c: DVector<T>,
    zeta: DVector<T>,
    activation: Activation,
    sigma_max: T,
}

impl<T: Real> EchoStateNetwork<T> {
    pub fn new(
        a: DMatrix<T>,
        c: DVector<T>,
        zeta: DVector<T>,
        activation: Activation,
    ) -> Result<Self> {
        check_square_and_vector(&a, &c)?;
        if zeta.len() != c.len() {
            return Err(Error::Dimension(format!(
                "bias has length {}, state dimension is {}",
                zeta.len(),
                c.len()
            )));
        }
        if zeta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("bias entry"));
        }
        let sigma_max = check_contractive(&a)?;
        Ok(Self {
            a,
            c,
            zeta,
            activation,
            sigma_max,
        })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn c(&self) -> &DVector<T> {
        &self.c
    }

    pub fn zeta(&self) -> &DVector<T> {
        &self.zeta
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

impl<T: Real> StateMap<T> for EchoStateNetwork<T> {
    fn state_dim(&self) -> usize {
        self.c.len()
    }

    fn apply(&self, state: &DVector<T>, input: T) -> DVector<T> {
        let mut out = DVector::zeros(self.c.len());
        self.apply_into(state, input, &mut out);
        out
    }

    fn contraction_constant(&self) -> T {
        self.sigma_max * self.activation.lipschitz::<T>()
    }

    fn apply_into(&self, state: &DVector<T>, input: T, out: &mut DVector<T>) {
        out.copy_from(&self.zeta);
        out.axpy(input, &self.c, T::one());
        out.gemv(T::one(), &self.a, state, T::one());
        let act = self.activation;
        out.apply(|x| *x = act.eval(*x));
    }
}

/// Either system kind, as stored in JSON documents.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSystem<T: Real> {
    Linear(LinearStateSystem<T>),
    Esn(EchoStateNetwork<T>),
}

impl<T: Real> StateMap<T> for StateSystem<T> {
    fn state_dim(&self) -> usize {
        match self {
            StateSystem::Linear(s) => s.state_dim(),
            StateSystem::Esn(s) => s.state_dim(),
        }
    }
    fn apply(&self, state: &DVector<T>, input: T) -> DVector<T> {
        match self {
            StateSystem::Linear(s) => s.apply(state, input),
            StateSystem::Esn(s) => s.apply(state, input),
        }
    }
    fn contraction_constant(&self) -> T {
        match self {
            StateSystem::Linear(s) => s.contraction_constant(),
            StateSystem::Esn(s) => s.contraction_constant(),
        }
    }
    fn apply_into(&self, state: &DVector<T>, input: T, out: &mut DVector<T>) {
        match self {
            StateSystem::Linear(s) => s.apply_into(state, input, out),
            StateSystem::Esn(s) => s.apply_into(state, input, out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Linear,
    Esn,
}

/// JSON form of a system: `{type, A (rows), C, zeta?, activation?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDocument {
    #[serde(rename = "type")]
    pub kind: SystemKind,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
}

pub(crate) fn matrix_rows<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.as_f64()).collect())
        .collect()
}

pub(crate) fn vector_f64<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn matrix_from_rows<T: Real>(rows: &[Vec<f64>]) -> Result<DMatrix<T>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| T::lit(rows[i][j])))
}

fn vector_from(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

impl<T: Real> StateSystem<T> {
    pub fn to_document(&self) -> SystemDocument {
        match self {
            StateSystem::Linear(s) => SystemDocument {
                kind: SystemKind::Linear,
                a: matrix_rows(s.a()),
                c: vector_f64(s.c()),
                zeta: None,
                activation: None,
            },
            StateSystem::Esn(s) => SystemDocument {
                kind: SystemKind::Esn,
                a: matrix_rows(s.a()),
                c: vector_f64(s.c()),
                zeta: Some(vector_f64(s.zeta())),
                activation: Some(s.activation()),
            },
        }
    }

    pub fn from_document(doc: &SystemDocument) -> Result<Self> {
        let a = matrix_from_rows::<T>(&doc.a)?;
        let c = vector_from(&doc.c).map(T::lit);
        match doc.kind {
            SystemKind::Linear => Ok(StateSystem::Linear(LinearStateSystem::new(a, c)?)),
            SystemKind::Esn => {
                let zeta = doc
                    .zeta
                    .as_deref()
                    .map(|z| vector_from(z).map(T::lit))
                    .unwrap_or_else(|| DVector::zeros(c.len()));
                let act = doc.activation.unwrap_or(Activation::Tanh);
                Ok(StateSystem::Esn(EchoStateNetwork::new(a, c, zeta, act)?))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("system document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDocument =
            serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn as_linear(&self) -> Option<&LinearStateSystem<T>> {
        match self {
            StateSystem::Linear(s) => Some(s),
            StateSystem::Esn(_) => None,
        }
    }
}

impl<T: Real> From<LinearStateSystem<T>> for StateSystem<T> {
    fn from(s: LinearStateSystem<T>) -> Self {
        StateSystem::Linear(s)
    }
}

impl<T: Real> From<EchoStateNetwork<T>> for StateSystem<T> {
    fn from(s: EchoStateNetwork<T>) -> Self {
        StateSystem::Esn(s)
    }
}

/// A state trajectory with its aligned inputs, `states[t] = F(states[t-1], inputs[t])`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun<T: Real> {
    /// `T x N`, one state per row.
    pub states: DMatrix<T>,
    pub inputs: Vec<T>,
    pub washout: usize,
}

impl<T: Real> FilterRun<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn state(&self, t: usize) -> DVector<T> {
        self.states.row(t).transpose()
    }

    /// Re-applies the state map at up to `samples` random interior indices
    /// and checks the recursion holds exactly.
    pub fn satisfies_recursion(&self, system: &impl StateMap<T>, samples: usize, seed: u64) -> bool {
        if self.len() < 2 {
            return true;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = DVector::zeros(self.dim());
        (0..samples).all(|_| {
            let t = rng.random_range(1..self.len());
            system.apply_into(&self.state(t - 1), self.inputs[t], &mut next);
            next == self.state(t)
        })
    }
}

/// Runs the filter from the zero state and drops the first `washout` states.
pub fn run_filter<T: Real>(
    system: &impl StateMap<T>,
    inputs: &[T],
    washout: usize,
) -> Result<FilterRun<T>> {
    run_filter_from(system, &DVector::zeros(system.state_dim()), inputs, washout)
}

pub fn run_filter_from<T: Real>(
    system: &impl StateMap<T>,
    initial: &DVector<T>,
    inputs: &[T],
    washout: usize,
) -> Result<FilterRun<T>> {
    let n = system.state_dim();
    if initial.len() != n {
        return Err(Error::Dimension(format!(
            "initial state has length {}, state dimension is {n}",
            initial.len()
        )));
    }
    if inputs.len() <= washout {
        return Err(Error::SeriesTooShort {
            len: inputs.len(),
            lag: washout,
        });
    }
    if inputs.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("input sample"));
    }
    let kept = inputs.len() - washout;
    let mut states = DMatrix::zeros(kept, n);
    let mut x = initial.clone();
    let mut next = DVector::zeros(n);
    for (t, &z) in inputs.iter().enumerate() {
        system.apply_into(&x, z, &mut next);
        std::mem::swap(&mut x, &mut next);
        if t >= washout {
            states.set_row(t - washout, &x.transpose());
        }
    }
    Ok(FilterRun {
        states,
        inputs: inputs[washout..].to_vec(),
        washout,
    })
}

/// Outcome of running one input from several random initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct EspReport<T> {
    pub initial_gap: T,
    pub max_final_gap: T,
    /// Geometric decay rate fitted to the pairwise gap sequence.
    pub rate_estimate: T,
    pub contraction: T,
    /// Set when the fitted rate exceeds the contraction constant by more
    /// than 0.05.
    pub flagged: bool,
    /// Largest pairwise gap after each input.
    pub gaps: Vec<T>,
}

pub fn verify_esp_convergence<T: Real>(
    system: &impl StateMap<T>,
    inputs: &[T],
    trials: usize,
    seed: u64,
) -> Result<EspReport<T>>
where
    StandardNormal: Distribution<T>,
{
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least two trials".into()));
    }
    if inputs.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("input sample"));
    }
    let n = system.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<DVector<T>> = (0..trials)
        .map(|_| DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let max_gap = |xs: &[DVector<T>]| {
        let mut g = T::zero();
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                g = g.max((&xs[i] - &xs[j]).norm());
            }
        }
        g
    };
    let initial_gap = max_gap(&xs);
    let mut gaps = Vec::with_capacity(inputs.len());
    let mut buf = DVector::zeros(n);
    for &z in inputs {
        for x in xs.iter_mut() {
            system.apply_into(x, z, &mut buf);
            std::mem::swap(x, &mut buf);
        }
        gaps.push(max_gap(&xs));
    }
    let rate_estimate = fit_geometric_rate(initial_gap, &gaps);
    let contraction = system.contraction_constant();
    Ok(EspReport {
        initial_gap,
        max_final_gap: gaps.last().copied().unwrap_or(initial_gap),
        rate_estimate,
        contraction,
        flagged: rate_estimate > contraction + T::lit(0.05),
        gaps,
    })
}

// Least-squares slope of log(gap) against time over the stretch before the
// gap reaches the rounding floor.
fn fit_geometric_rate<T: Real>(initial: T, gaps: &[T]) -> T {
    if initial <= T::zero() {
        return T::zero();
    }
    let floor = initial * T::lit(1e-12);
    let mut pts = vec![(0.0f64, initial.as_f64().ln())];
    for (t, &g) in gaps.iter().enumerate() {
        if g <= floor {
            break;
        }
        pts.push(((t + 1) as f64, g.as_f64().ln()));
    }
    if pts.len() < 2 {
        return T::zero();
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    T::lit((sxy / sxx).exp())
}

/// `f(x) = M x + b` from `R^{in}` to `R^{out}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap<T: Real> {
    pub matrix: DMatrix<T>,
    pub offset: DVector<T>,
}

impl<T: Real> AffineMap<T> {
    pub fn new(matrix: DMatrix<T>, offset: DVector<T>) -> Result<Self> {
        if offset.len() != matrix.nrows() {
            return Err(Error::Dimension("offset length differs from output dimension".into()));
        }
        Ok(Self { matrix, offset })
    }

    pub fn linear(matrix: DMatrix<T>) -> Self {
        let offset = DVector::zeros(matrix.nrows());
        Self { matrix, offset }
    }

    pub fn identity(n: usize) -> Self {
        Self::linear(DMatrix::identity(n, n))
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        &self.matrix * x + &self.offset
    }
}

/// A point where system equivariance failed.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphismWitness<T: Real> {
    pub state: DVector<T>,
    pub input: T,
    pub discrepancy: T,
    pub tolerance: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphismCheck<T: Real> {
    pub holds: bool,
    pub probes_checked: usize,
    pub witness: Option<MorphismWitness<T>>,
}

/// Checks `f(F1(x, z)) = F2(f(x), z)` on random Gaussian probes with
/// tolerance `1e-9 (1 + |x|)`. Readouts are not stored on systems, so the
/// readout condition holds by taking `h1 = h2 o f`.
pub fn verify_morphism<T: Real>(
    f: &AffineMap<T>,
    sys1: &impl StateMap<T>,
    sys2: &impl StateMap<T>,
    probes: usize,
    seed: u64,
) -> Result<MorphismCheck<T>>
where
    StandardNormal: Distribution<T>,
{
    if f.in_dim() != sys1.state_dim() || f.out_dim() != sys2.state_dim() {
        return Err(Error::Dimension(format!(
            "map is {}->{}, systems have dimensions {} and {}",
            f.in_dim(),
            f.out_dim(),
            sys1.state_dim(),
            sys2.state_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..probes {
        let x: DVector<T> = DVector::from_fn(sys1.state_dim(), |_, _| StandardNormal.sample(&mut rng));
        let z: T = StandardNormal.sample(&mut rng);
        let lhs = f.apply(&sys1.apply(&x, z));
        let rhs = sys2.apply(&f.apply(&x), z);
        let discrepancy = (lhs - rhs).amax();
        let tolerance = T::lit(1e-9) * (T::one() + x.norm());
        if !(discrepancy <= tolerance) {
            return Ok(MorphismCheck {
                holds: false,
                probes_checked: k + 1,
                witness: Some(MorphismWitness {
                    state: x,
                    input: z,
                    discrepancy,
                    tolerance,
                }),
            });
        }
    }
    Ok(MorphismCheck {
        holds: true,
        probes_checked: probes,
        witness: None,
    })
}

/// `F~(x, z) = G^{-1/2} (F(G^{1/2} x + mu, z) - mu)` for `G = Gamma_X`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedSystem<S, T: Real> {
    inner: S,
    mu: DVector<T>,
    sqrt: DMatrix<T>,
    inv_sqrt: DMatrix<T>,
    lipschitz: T,
}

impl<S: StateMap<T>, T: Real> StandardizedSystem<S, T> {
    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mu
    }

    pub fn covariance_sqrt(&self) -> &DMatrix<T> {
        &self.sqrt
    }
}

impl<S: StateMap<T>, T: Real> StateMap<T> for StandardizedSystem<S, T> {
    fn state_dim(&self) -> usize {
        self.mu.len()
    }

    fn apply(&self, state: &DVector<T>, input: T) -> DVector<T> {
        let lifted = &self.sqrt * state + &self.mu;
        &self.inv_sqrt * (self.inner.apply(&lifted, input) - &self.mu)
    }

    /// `c * sqrt(cond(Gamma_X))`; the conjugated map contracts in the
    /// transported norm even when this Euclidean bound exceeds one.
    fn contraction_constant(&self) -> T {
        self.lipschitz
    }
}

/// The standardized system together with the isomorphism
/// `f(x) = Gamma_X^{-1/2} (x - mu)` from the original state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization<S, T: Real> {
    pub system: StandardizedSystem<S, T>,
    pub map: AffineMap<T>,
}

pub fn standardize<S: StateMap<T>, T: Real>(
    system: S,
    mu: DVector<T>,
    gamma_x: &DMatrix<T>,
) -> Result<Standardization<S, T>> {
    let n = system.state_dim();
    if mu.len() != n || gamma_x.nrows() != n || gamma_x.ncols() != n {
        return Err(Error::Dimension(format!(
            "mean/covariance do not match state dimension {n}"
        )));
    }
    let roots = linalg::symmetric_roots(gamma_x, T::lit(1e-14), T::lit(1e-10));
    let Some(inv_sqrt) = roots.inv_sqrt else {
        let hi = roots.eigenvalues.first().copied().unwrap_or_else(T::zero);
        let lo = roots.eigenvalues.last().copied().unwrap_or_else(T::zero);
        let ratio = if hi > T::zero() { (lo / hi).as_f64() } else { 0.0 };
        return Err(Error::NotPositiveDefinite { ratio });
    };
    let hi = roots.eigenvalues[0];
    let lo = roots.eigenvalues[n - 1];
    let lipschitz = system.contraction_constant() * (hi / lo).sqrt();
    let offset = -(&inv_sqrt * &mu);
    let map = AffineMap::new(inv_sqrt.clone(), offset)?;
    Ok(Standardization {
        system: StandardizedSystem {
            inner: system,
            mu,
            sqrt: roots.sqrt,
            inv_sqrt,
            lipschitz,
        },
        map,
    })
}

/// Sample mean and biased sample covariance of the rows of `states`.
pub fn state_moments<T: Real>(states: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let t = T::from_usize_lossy(states.nrows().max(1));
    let mean = states.row_mean().transpose();
    let mut centered = states.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / t;
    (mean, cov)
}
