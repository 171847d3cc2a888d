//! Exact analytics for linear systems `x_t = A x_{t-1} + C z_t`: state and
//! cross covariances, capacities from covariance formulas and from
//! B-vectors, controllability diagnostics, and the reduction to the
//! controllable subspace.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use crate::capacity::{CapacityReport, Estimator};
use crate::error::{Error, Result};
use crate::inputs::{self, AutocovarianceFunction};
use crate::linalg;
use crate::scalar::Real;
use crate::systems::LinearStateSystem;

/// Condition number beyond which `Gamma_X` is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;
/// Relative eigenvalue gap below which two eigenvalues count as equal.
pub const EIGEN_GAP_REL: f64 = 1e-8;
/// Default Toeplitz window for the B-vector routes.
pub const DEFAULT_WINDOW: usize = 500;
/// Default relative threshold of [`kernel_equality_check`].
pub const KERNEL_REL: f64 = 1e-6;
/// Target of the default truncation certificate, relative to `gamma(0)`.
pub const TRUNCATION_REL: f64 = 1e-12;
const MAX_TRUNCATION: usize = 200_000;

/// A truncated series together with a certified bound on the omitted part.
#[derive(Debug, Clone, PartialEq)]
pub struct Certified<V, T> {
    pub value: V,
    /// Upper bound on the norm of the omitted terms.
    pub tail_bound: T,
    /// Number of retained terms per index.
    pub terms: usize,
}

impl<T: Real> Certified<DMatrix<T>, T> {
    /// True when the certified tail exceeds `1e-8 * trace`.
    pub fn flagged(&self) -> bool {
        self.tail_bound > T::lit(1e-8) * self.value.trace().abs()
    }
}

impl<T: Real> Certified<DVector<T>, T> {
    /// True when the certified tail exceeds `1e-8 * gamma0 * |C|`.
    pub fn flagged_against(&self, scale: T) -> bool {
        self.tail_bound > T::lit(1e-8) * scale
    }
}

/// Solution of `Gamma = A Gamma A^T + gamma0 C C^T` by doubling.
pub fn state_covariance_white<T: Real>(system: &LinearStateSystem<T>, gamma0: T) -> Result<DMatrix<T>> {
    if !(gamma0 > T::zero()) {
        return Err(Error::InvalidArgument(format!("gamma0 must be positive, got {gamma0}")));
    }
    let c = system.c();
    let mut g = c * c.transpose() * gamma0;
    let mut ak = system.a().clone();
    for _ in 0..64 {
        let inc = &ak * &g * ak.transpose();
        let small = linalg::max_abs(&inc) <= T::eps() * linalg::max_abs(&g);
        g += inc;
        if small {
            break;
        }
        ak = &ak * &ak;
        if linalg::max_abs(&ak) == T::zero() {
            break;
        }
    }
    Ok(linalg::symmetrize(&g))
}

/// `|A Gamma A^T + gamma0 C C^T - Gamma| / |Gamma|` in the spectral norm.
pub fn lyapunov_residual<T: Real>(system: &LinearStateSystem<T>, gamma: &DMatrix<T>, gamma0: T) -> T {
    let a = system.a();
    let c = system.c();
    let r = a * gamma * a.transpose() + c * c.transpose() * gamma0 - gamma;
    let scale = linalg::spectral_norm(gamma);
    if scale == T::zero() {
        linalg::spectral_norm(&r)
    } else {
        linalg::spectral_norm(&r) / scale
    }
}

/// `sum_{d in Z} |gamma(d)|`, with the certified tail included.
fn absolute_sum<T: Real>(acvf: &impl AutocovarianceFunction<T>) -> T {
    let d = inputs::truncation_for(acvf, 1e-16, 10_000_000);
    let partial = (1..=d).fold(T::zero(), |acc, k| acc + acvf.gamma(k as i64).abs());
    acvf.gamma(0) + T::lit(2.0) * (partial + acvf.tail_bound(d))
}

struct TailModel<T> {
    s: T,
    c_norm: T,
    gamma0: T,
    /// `min(gamma0/(1-s), sum |gamma|)`.
    row_sum: T,
}

impl<T: Real> TailModel<T> {
    fn new(system: &LinearStateSystem<T>, acvf: &impl AutocovarianceFunction<T>) -> Self {
        let s = system.sigma_max();
        let gamma0 = acvf.gamma(0);
        let row_sum = (gamma0 / (T::one() - s)).min(absolute_sum(acvf));
        Self {
            s,
            c_norm: system.c().norm(),
            gamma0,
            row_sum,
        }
    }

    // Terms with j >= terms in `sum_{j,k} A^j C gamma(j-k) C^T (A^k)^T`.
    fn covariance_tail(&self, terms: usize) -> T {
        let sj = self.s.powi(terms as i32);
        T::lit(2.0) * self.c_norm * self.c_norm * sj / (T::one() - self.s) * self.row_sum
    }

    // Terms with j >= terms in `sum_j A^j C gamma(j + tau)`.
    fn cross_tail(&self, terms: usize) -> T {
        let sj = self.s.powi(terms as i32);
        self.c_norm * sj / (T::one() - self.s) * self.gamma0
    }

    fn default_terms(&self) -> usize {
        if self.s == T::zero() || self.c_norm == T::zero() {
            return 1;
        }
        let target = T::lit(TRUNCATION_REL) * self.gamma0;
        let mut terms = 1usize;
        // Both tails are geometric in `terms`; solve the logarithm, then
        // step up for rounding.
        for tail in [self.covariance_tail(0), self.cross_tail(0)] {
            if tail > target {
                let need = ((target / tail).ln() / self.s.ln()).ceil();
                terms = terms.max(need.as_f64().max(1.0) as usize);
            }
        }
        terms = terms.min(MAX_TRUNCATION);
        while terms < MAX_TRUNCATION && self.covariance_tail(terms).max(self.cross_tail(terms)) >= target {
            terms += 1;
        }
        terms
    }
}

/// Number of terms used when no truncation is given: the smallest `J` for
/// which both tail certificates fall below `1e-12 * gamma(0)`.
pub fn default_truncation<T: Real>(system: &LinearStateSystem<T>, acvf: &impl AutocovarianceFunction<T>) -> usize {
    TailModel::new(system, acvf).default_terms()
}

fn resolve_truncation<T: Real>(
    system: &LinearStateSystem<T>,
    acvf: &impl AutocovarianceFunction<T>,
    truncation: Option<usize>,
) -> Result<(usize, TailModel<T>)> {
    let model = TailModel::new(system, acvf);
    match truncation {
        Some(0) => Err(Error::ZeroLength("truncation")),
        Some(j) => Ok((j, model)),
        None => Ok((model.default_terms(), model)),
    }
}

/// `Gamma_X = sum_{j,k >= 0} A^j C gamma(j - k) C^T (A^k)^T` truncated at
/// `j, k < J`. Lags beyond the point where `gamma` is negligible are dropped
/// and accounted for in the certificate.
pub fn state_covariance_general<T: Real>(
    system: &LinearStateSystem<T>,
    acvf: &impl AutocovarianceFunction<T>,
    truncation: Option<usize>,
) -> Result<Certified<DMatrix<T>, T>> {
    let (terms, model) = resolve_truncation(system, acvf, truncation)?;
    let lag_cut = inputs::truncation_for(acvf, 1e-16, terms);
    let g: Vec<T> = (0..=lag_cut).map(|d| acvf.gamma(d as i64)).collect();
    let k = linalg::krylov_matrix(system.a(), system.c(), terms);
    let n = system.dim();
    let mut w = DMatrix::<T>::zeros(n, terms);
    for col in 0..terms {
        let lo = col.saturating_sub(lag_cut);
        let hi = (col + lag_cut).min(terms - 1);
        let mut acc = DVector::<T>::zeros(n);
        for j in lo..=hi {
            acc.axpy(g[j.abs_diff(col)], &k.column(j), T::one());
        }
        w.set_column(col, &acc);
    }
    let value = linalg::symmetrize(&(w * k.transpose()));
    let dropped_lags = if lag_cut >= terms {
        T::zero()
    } else {
        T::lit(2.0) * model.c_norm * model.c_norm * acvf.tail_bound(lag_cut) / (T::one() - model.s)
    };
    Ok(Certified {
        value,
        tail_bound: model.covariance_tail(terms) + dropped_lags,
        terms,
    })
}

/// `Cov(X_t, Z_{t+tau}) = sum_{j >= 0} A^j C gamma(j + tau)` truncated at `j < J`.
pub fn cross_covariance<T: Real>(
    system: &LinearStateSystem<T>,
    acvf: &impl AutocovarianceFunction<T>,
    tau: i64,
    truncation: Option<usize>,
) -> Result<Certified<DVector<T>, T>> {
    let (terms, model) = resolve_truncation(system, acvf, truncation)?;
    let k = linalg::krylov_matrix(system.a(), system.c(), terms);
    let g = DVector::from_fn(terms, |j, _| acvf.gamma(j as i64 + tau));
    Ok(Certified {
        value: k * g,
        tail_bound: model.cross_tail(terms),
        terms,
    })
}

fn full_covariance<T: Real>(
    system: &LinearStateSystem<T>,
    acvf: &impl AutocovarianceFunction<T>,
    truncation: Option<usize>,
    flags: &mut Vec<String>,
) -> Result<DMatrix<T>> {
    if acvf.is_white() {
        return state_covariance_white(system, acvf.gamma(0));
    }
    let cov = state_covariance_general(system, acvf, truncation)?;
    if cov.flagged() {
        flags.push(format!(
            "covariance-truncation-tail({:.3e})",
            cov.tail_bound.as_f64()
        ));
    }
    Ok(cov.value)
}

fn require_regular<T: Real>(gamma: &DMatrix<T>) -> Result<T> {
    let condition = linalg::spd_condition_number(gamma);
    if !(condition < T::lit(SINGULAR_CONDITION)) {
        return Err(Error::SingularCovariance {
            condition: condition.as_f64(),
        });
    }
    Ok(condition)
}

/// `MC_tau = c_tau^T Gamma_X^{-1} c_tau / gamma(0)` for `tau = 0..-tau_max`
/// and the same at horizons `1..=tau_max`, with `c_tau = Cov(X_t, Z_{t+tau})`.
///
/// Fails with [`Error::SingularCovariance`] when `Gamma_X` has condition
/// number at least `1e12`; reduce the system first in that case.
pub fn analytic_capacities_linear<T: Real>(
    system: &LinearStateSystem<T>,
    acvf: &impl AutocovarianceFunction<T>,
    tau_max: usize,
    truncation: Option<usize>,
) -> Result<CapacityReport<T>> {
    let mut flags = Vec::new();
    let gamma = full_covariance(system, acvf, truncation, &mut flags)?;
    require_regular(&gamma)?;
    let chol = gamma
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { ratio: 0.0 })?;
    let (terms, model) = resolve_truncation(system, acvf, truncation)?;
    let terms = terms.max(tau_max + 1);
    let k = linalg::krylov_matrix(system.a(), system.c(), terms);
    let gamma0 = acvf.gamma(0);
    let capacity = |tau: i64| {
        let g = DVector::from_fn(terms, |j, _| acvf.gamma(j as i64 + tau));
        let c = &k * g;
        let y = chol.l().solve_lower_triangular(&c).expect("cholesky factor is nonsingular");
        y.norm_squared() / gamma0
    };
    let mc: Vec<T> = (0..=tau_max as i64).map(|m| capacity(-m)).collect();
    let fc: Vec<T> = (1..=tau_max as i64).map(capacity).collect();
    if model.cross_tail(terms) > T::lit(1e-8) * gamma0 * model.c_norm.max(T::one()) {
        flags.push(format!(
            "cross-covariance-truncation-tail({:.3e})",
            model.cross_tail(terms).as_f64()
        ));
    }
    Ok(CapacityReport::from_terms(mc, fc, Estimator::AnalyticLinear, flags))
}

fn inverse_sqrt_covariance<T: Real>(gamma: &DMatrix<T>) -> Result<DMatrix<T>> {
    require_regular(gamma)?;
    let roots = linalg::symmetric_roots(gamma, T::zero(), T::zero());
    roots.inv_sqrt.ok_or(Error::SingularCovariance {
        condition: f64::INFINITY,
    })
}

struct ToeplitzRoot<T: Real> {
    matrix: DMatrix<T>,
    sqrt: DMatrix<T>,
    condition: T,
}

fn toeplitz_root<T: Real>(acvf: &impl AutocovarianceFunction<T>, order: usize) -> Result<ToeplitzRoot<T>> {
    let matrix = inputs::toeplitz_block(acvf, order)?.into_matrix();
    let roots = linalg::symmetric_roots(&matrix, T::zero(), T::zero());
    let hi = roots.eigenvalues.first().copied().unwrap_or_else(T::zero);
    let lo = roots.eigenvalues.last().copied().unwrap_or_else(T::zero);
    let condition = if lo > T::zero() {
        hi / lo
    } else {
        T::max_value().unwrap_or_else(|| T::lit(f64::MAX))
    };
    Ok(ToeplitzRoot {
        matrix,
        sqrt: roots.sqrt,
        condition,
    })
}

/// Output of [`b_vectors_memory`].
#[derive(Debug, Clone)]
pub struct MemoryBVectors<T: Real> {
    /// `N x L`; row `i` is the truncated sequence `B_i`.
    pub b: DMatrix<T>,
    /// `(1/gamma0) sum_i <B_i, H^L B_i>`.
    pub mc_estimate: T,
    /// Same estimate with window `L/2`.
    pub mc_half_window: T,
    /// `max |B B^T - I|`.
    pub gram_error: T,
    pub h_condition: T,
    pub flags: Vec<String>,
}

fn memory_window<T: Real>(
    system: &LinearStateSystem<T>,
    acvf: &impl AutocovarianceFunction<T>,
    inv_sqrt: &DMatrix<T>,
    window: usize,
) -> Result<(DMatrix<T>, T, T)> {
    let root = toeplitz_root(acvf, window)?;
    let k = linalg::krylov_matrix(system.a(), system.c(), window);
    let b = inv_sqrt * k * &root.sqrt;
    let mc = (&b * &root.matrix).component_mul(&b).sum() / acvf.gamma(0);
    Ok((b, mc, root.condition))
}

/// B-vectors of the memory capacity on a window of `L` lags:
/// `B = Gamma_X^{-1/2} [C, AC, ..., A^{L-1}C] (H^L)^{1/2}`.
pub fn b_vectors_memory<T: Real>(
    system: &LinearStateSystem<T>,
    acvf: &impl AutocovarianceFunction<T>,
    window: usize,
) -> Result<MemoryBVectors<T>> {
    if window == 0 {
        return Err(Error::ZeroLength("window"));
    }
    let mut flags = Vec::new();
    let gamma = full_covariance(system, acvf, None, &mut flags)?;
    let inv_sqrt = inverse_sqrt_covariance(&gamma)?;
    let (b, mc_estimate, h_condition) = memory_window(system, acvf, &inv_sqrt, window)?;
    let mc_half_window = if window >= 2 {
        memory_window(system, acvf, &inv_sqrt, window / 2)?.1
    } else {
        mc_estimate
    };
    if !(h_condition < T::lit(SINGULAR_CONDITION)) {
        flags.push(format!("ill-conditioned-toeplitz(cond={:.3e})", h_condition.as_f64()));
    }
    let n = system.dim();
    let gram_error = linalg::max_abs(&(&b * b.transpose() - DMatrix::<T>::identity(n, n)));
    Ok(MemoryBVectors {
        b,
        mc_estimate,
        mc_half_window,
        gram_error,
        h_condition,
        flags,
    })
}

/// Output of [`b_vectors_forecasting`].
#[derive(Debug, Clone)]
pub struct ForecastBVectors<T> {
    pub fc_estimate: T,
    pub fc_half_window: T,
    /// Covariance-formula total over horizons `1..=L`.
    pub analytic_fc: T,
    pub h_condition: T,
    pub flags: Vec<String>,
}

fn forecast_window<T: Real>(
    system: &LinearStateSystem<T>,
    acvf: &impl AutocovarianceFunction<T>,
    inv_sqrt: &DMatrix<T>,
    window: usize,
) -> Result<(T, T)> {
    // Index position p in 0..=2L stands for the lag p - L.
    let size = 2 * window + 1;
    let root = toeplitz_root(acvf, size)?;
    let k = linalg::krylov_matrix(system.a(), system.c(), window + 1);
    let mut rows = DMatrix::<T>::zeros(window + 1, size);
    for lag in 0..=window {
        rows.set_row(lag, &root.sqrt.row(window - lag));
    }
    let b = inv_sqrt * k * rows;
    // Keep only strictly positive indices.
    let projected = root.sqrt.rows(window + 1, window) * b.transpose();
    Ok((projected.norm_squared() / acvf.gamma(0), root.condition))
}

/// Forecasting capacity from B-vectors on the index window `[-L, L]`,
/// projected onto the positive indices, cross-checked against the
/// covariance formula.
pub fn b_vectors_forecasting<T: Real>(
    system: &LinearStateSystem<T>,
    acvf: &impl AutocovarianceFunction<T>,
    window: usize,
) -> Result<ForecastBVectors<T>> {
    if window == 0 {
        return Err(Error::ZeroLength("window"));
    }
    let mut flags = Vec::new();
    let gamma = full_covariance(system, acvf, None, &mut flags)?;
    let inv_sqrt = inverse_sqrt_covariance(&gamma)?;
    let (fc_estimate, h_condition) = forecast_window(system, acvf, &inv_sqrt, window)?;
    let fc_half_window = if window >= 2 {
        forecast_window(system, acvf, &inv_sqrt, window / 2)?.0
    } else {
        fc_estimate
    };
    let analytic_fc = analytic_capacities_linear(system, acvf, window, None)?.fc_total;
    if !(h_condition < T::lit(SINGULAR_CONDITION)) {
        flags.push(format!("ill-conditioned-toeplitz(cond={:.3e})", h_condition.as_f64()));
    }
    if (fc_estimate - analytic_fc).abs() > T::lit(1e-2) {
        flags.push(format!(
            "window-truncation(b={:.6}, analytic={:.6})",
            fc_estimate.as_f64(),
            analytic_fc.as_f64()
        ));
    }
    Ok(ForecastBVectors {
        fc_estimate,
        fc_half_window,
        analytic_fc,
        h_condition,
        flags,
    })
}

/// Eigenvalue clusters, eigenvectors and diagonalizability of a real matrix.
#[derive(Debug, Clone)]
pub struct EigenStructure<T: Real> {
    pub eigenvalues: Vec<Complex<T>>,
    pub distinct: bool,
    pub nonzero: bool,
    pub diagonalizable: bool,
    /// Unit eigenvector columns, ordered by cluster, when diagonalizable.
    pub vectors: Option<DMatrix<Complex<T>>>,
    /// Column indices of `vectors` belonging to each eigenvalue cluster.
    pub clusters: Vec<Vec<usize>>,
}

pub fn eigen_structure<T: Real>(a: &DMatrix<T>) -> EigenStructure<T> {
    let n = a.nrows();
    let eigenvalues = linalg::complex_eigenvalues(a);
    let scale = linalg::spectral_norm(a);
    let gap = T::lit(EIGEN_GAP_REL) * scale;

    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if linalg::modulus(eigenvalues[i] - eigenvalues[j]) <= gap {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    let distinct = groups.iter().all(|g| g.len() == 1);
    let nonzero = scale > T::zero() && eigenvalues.iter().all(|&z| linalg::modulus(z) > gap);

    let ac: DMatrix<Complex<T>> = a.map(|x| Complex::new(x, T::zero()));
    let null_tol = T::lit(1e-6) * scale;
    let mut columns: Vec<DVector<Complex<T>>> = Vec::with_capacity(n);
    let mut clusters = Vec::with_capacity(groups.len());
    let mut geometric_ok = true;
    for g in &groups {
        let m = g.len();
        let mean = g.iter().fold(Complex::new(T::zero(), T::zero()), |acc, &i| acc + eigenvalues[i])
            * Complex::new(T::one() / T::from_usize_lossy(m), T::zero());
        let shifted = &ac - DMatrix::<Complex<T>>::identity(n, n) * mean;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&x, &y| {
            svd.singular_values[x]
                .partial_cmp(&svd.singular_values[y])
                .expect("finite singular values")
        });
        if svd.singular_values[order[m - 1]] > null_tol {
            geometric_ok = false;
        }
        let start = columns.len();
        for &k in order.iter().take(m) {
            let v: DVector<Complex<T>> = v_t.row(k).adjoint();
            let norm = v.norm();
            columns.push(v.unscale(norm));
        }
        clusters.push((start..start + m).collect());
    }
    let vectors = (n > 0 && geometric_ok)
        .then(|| DMatrix::from_columns(&columns))
        .filter(|v| {
            let sv = v.singular_values();
            let hi = sv.iter().fold(T::zero(), |acc, &s| acc.max(s));
            let lo = sv.iter().fold(hi, |acc, &s| acc.min(s));
            lo > T::lit(1e-10) * hi
        });
    EigenStructure {
        eigenvalues,
        distinct,
        nonzero,
        diagonalizable: n == 0 || vectors.is_some(),
        vectors,
        clusters,
    }
}

impl<T: Real> EigenStructure<T> {
    /// Norms of the components of `c` in each eigenspace, when the matrix is
    /// diagonalizable. For simple eigenvalues these are the `|c_i|` of
    /// `C = sum_i c_i v_i` with unit `v_i`.
    pub fn eigenspace_components(&self, c: &DVector<T>) -> Option<Vec<T>> {
        let v = self.vectors.as_ref()?;
        let cc: DVector<Complex<T>> = c.map(|x| Complex::new(x, T::zero()));
        let coeffs = v.clone().lu().solve(&cc)?;
        Some(
            self.clusters
                .iter()
                .map(|cl| {
                    let mut part = DVector::<Complex<T>>::zeros(c.len());
                    for &i in cl {
                        part.axpy(coeffs[i], &v.column(i), Complex::new(T::one(), T::zero()));
                    }
                    part.norm()
                })
                .collect(),
        )
    }
}

/// Kalman controllability diagnostics of a linear system.
#[derive(Debug, Clone)]
pub struct ControllabilityReport<T: Real> {
    /// `(C | AC | ... | A^{N-1} C)`.
    pub r: DMatrix<T>,
    pub rank: usize,
    /// `rank == N` and every eigenvalue of `A` nonzero.
    pub kalman_full: bool,
    pub eigen_distinct: bool,
    pub eigen_nonzero: bool,
    /// `None` when `A` is not diagonalizable.
    pub coeffs_nonzero: Option<bool>,
    /// Descending.
    pub singular_values: Vec<T>,
    pub eigenvalues: Vec<Complex<T>>,
    /// Relative rank threshold that was applied.
    pub threshold: T,
}

fn rank_threshold<T: Real>(n: usize, threshold: Option<T>) -> T {
    threshold.unwrap_or_else(|| T::from_usize_lossy(n.max(1)) * T::eps())
}

/// Rank of `R(A, C)` counts singular values above `threshold * sigma_max(R)`;
/// the default threshold is `N * eps`.
pub fn controllability<T: Real>(system: &LinearStateSystem<T>, threshold: Option<T>) -> ControllabilityReport<T> {
    let n = system.dim();
    let threshold = rank_threshold(n, threshold);
    let r = linalg::krylov_matrix(system.a(), system.c(), n);
    let singular_values = linalg::singular_values_desc(&r);
    let rank = linalg::numerical_rank(&singular_values, threshold);
    let eig = eigen_structure(system.a());
    let c_norm = system.c().norm();
    let coeffs_nonzero = eig.eigenspace_components(system.c()).map(|parts| {
        c_norm > T::zero() && parts.iter().all(|&p| p > T::lit(1e-8) * c_norm)
    });
    ControllabilityReport {
        rank,
        kalman_full: rank == n && eig.nonzero,
        eigen_distinct: eig.distinct,
        eigen_nonzero: eig.nonzero,
        coeffs_nonzero,
        singular_values,
        eigenvalues: eig.eigenvalues,
        threshold,
        r,
    }
}

pub(crate) fn rows_of<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect()
}

fn vec_of<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

impl<T: Real> ControllabilityReport<T> {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "R": rows_of(&self.r),
            "rank": self.rank,
            "kalman_full": self.kalman_full,
            "eigen_distinct": self.eigen_distinct,
            "eigen_nonzero": self.eigen_nonzero,
            "coeffs_nonzero": self.coeffs_nonzero,
            "singular_values": vec_of(&self.singular_values),
            "eigenvalues": self.eigenvalues.iter().map(|z| [z.re.as_f64(), z.im.as_f64()]).collect::<Vec<_>>(),
            "threshold": self.threshold.as_f64(),
        })
    }
}

/// Result of [`kernel_equality_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCheck<T> {
    pub matches: bool,
    pub gamma_kernel_dim: usize,
    pub r_kernel_dim: usize,
    /// Principal angles in radians between the two kernels, ascending.
    pub principal_angles: Vec<T>,
}

/// Compares `ker Gamma_X` (white noise) with `ker R(A, C)^T`.
pub fn kernel_equality_check<T: Real>(system: &LinearStateSystem<T>, gamma0: T, rel: T) -> Result<KernelCheck<T>> {
    let gamma = state_covariance_white(system, gamma0)?;
    let r = linalg::krylov_matrix(system.a(), system.c(), system.dim());
    Ok(kernel_equality_for(&gamma, &r, rel))
}

/// Kernel comparison for a given covariance. `Gamma` is quadratic in the
/// Krylov vectors, so its eigenvalues are compared through `sqrt(lambda /
/// lambda_max)` against the same `rel` as the singular values of `R`.
pub fn kernel_equality_for<T: Real>(gamma: &DMatrix<T>, r: &DMatrix<T>, rel: T) -> KernelCheck<T> {
    let n = gamma.nrows();
    let (values, vectors) = linalg::symmetric_eigen_desc(gamma);
    let top = values.first().copied().unwrap_or_else(T::zero).max(T::zero());
    let null_idx: Vec<usize> = (0..n)
        .filter(|&k| top == T::zero() || (values[k].max(T::zero()) / top).sqrt() <= rel)
        .collect();
    let mut q1 = DMatrix::<T>::zeros(n, null_idx.len());
    for (dst, &k) in null_idx.iter().enumerate() {
        q1.set_column(dst, &vectors.column(k));
    }
    let q2 = linalg::left_split(r, rel).null;
    let (small, large) = if q1.ncols() <= q2.ncols() { (&q1, &q2) } else { (&q2, &q1) };
    let mut principal_angles: Vec<T> = if small.ncols() == 0 {
        Vec::new()
    } else {
        let residual = small - large * (large.transpose() * small);
        residual
            .singular_values()
            .iter()
            .map(|&s| s.min(T::one()).asin())
            .collect()
    };
    principal_angles.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    let largest = principal_angles.last().copied().unwrap_or_else(T::zero);
    KernelCheck {
        matches: q1.ncols() == q2.ncols() && largest < T::lit(1e-6),
        gamma_kernel_dim: q1.ncols(),
        r_kernel_dim: q2.ncols(),
        principal_angles,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionDiagnostics {
    pub abar_diagonalizable: bool,
    pub abar_eigen_nonzero: bool,
    /// `rank R(A_bar, C_bar) == rank R(A, C)`.
    pub rank_preserved: bool,
    pub sigma_max: f64,
}

/// Restriction of a linear system to the column space of `R(A, C)`.
#[derive(Debug, Clone)]
pub struct ReducedSystem<T: Real> {
    pub a_bar: DMatrix<T>,
    pub c_bar: DVector<T>,
    /// `N x r`, orthonormal columns spanning `col R(A, C)`.
    pub injection: DMatrix<T>,
    pub diagnostics: ReductionDiagnostics,
}

impl<T: Real> ReducedSystem<T> {
    pub fn rank(&self) -> usize {
        self.c_bar.len()
    }

    /// `None` for the empty system.
    pub fn linear_system(&self) -> Option<LinearStateSystem<T>> {
        (self.rank() > 0).then(|| {
            LinearStateSystem::new(self.a_bar.clone(), self.c_bar.clone())
                .expect("restriction of a contraction is a contraction")
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "A_bar": rows_of(&self.a_bar),
            "C_bar": vec_of(self.c_bar.as_slice()),
            "injection": rows_of(&self.injection),
            "diagnostics": self.diagnostics,
        })
    }
}

/// `A_bar = Q^T A Q`, `C_bar = Q^T C` for an orthonormal basis `Q` of
/// `col R(A, C)`. Column signs are fixed so that `q . C >= 0`, falling back
/// to the first Krylov column with a non-negligible projection.
pub fn reduce_system<T: Real>(system: &LinearStateSystem<T>, threshold: Option<T>) -> ReducedSystem<T> {
    let n = system.dim();
    let threshold = rank_threshold(n, threshold);
    let r = linalg::krylov_matrix(system.a(), system.c(), n);
    let mut q = linalg::left_split(&r, threshold).range;
    for mut col in q.column_iter_mut() {
        let sign = r
            .column_iter()
            .map(|k| col.dot(&k))
            .zip(r.column_iter().map(|k| k.norm()))
            .find(|&(p, norm)| p.abs() > T::lit(1e-8) * norm)
            .map(|(p, _)| p);
        if matches!(sign, Some(p) if p < T::zero()) {
            col.neg_mut();
        }
    }
    let a_bar = q.transpose() * system.a() * &q;
    let c_bar = q.transpose() * system.c();
    let rank = q.ncols();
    let eig = eigen_structure(&a_bar);
    let sigma_max = linalg::spectral_norm(&a_bar);
    let reduced_rank = if rank == 0 {
        0
    } else {
        let rr = linalg::krylov_matrix(&a_bar, &c_bar, rank);
        linalg::numerical_rank(&linalg::singular_values_desc(&rr), threshold)
    };
    ReducedSystem {
        diagnostics: ReductionDiagnostics {
            abar_diagonalizable: eig.diagonalizable,
            abar_eigen_nonzero: rank == 0 || eig.nonzero,
            rank_preserved: reduced_rank == rank,
            sigma_max: sigma_max.as_f64(),
        },
        a_bar,
        c_bar,
        injection: q,
    }
}

/// White-noise memory capacity as `rank R(A, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankCapacity {
    pub mc: usize,
    pub fc: usize,
    /// Reduced `A_bar` diagonalizable with nonzero eigenvalues. The value is
    /// reported either way.
    pub hypotheses_met: bool,
}

pub fn memory_capacity_via_rank<T: Real>(system: &LinearStateSystem<T>, threshold: Option<T>) -> RankCapacity {
    let reduced = reduce_system(system, threshold);
    let d = &reduced.diagnostics;
    RankCapacity {
        mc: reduced.rank(),
        fc: 0,
        hypotheses_met: d.abar_diagonalizable && d.abar_eigen_nonzero,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::ArmaProcessSpec;

    fn sys(a: &[f64], c: &[f64]) -> LinearStateSystem<f64> {
        let n = c.len();
        LinearStateSystem::new(DMatrix::<f64>::from_row_slice(n, n, a), DVector::<f64>::from_column_slice(c)).unwrap()
    }

    fn ar1(phi: f64) -> inputs::ArmaAutocovariance<f64> {
        ArmaProcessSpec::<f64>::ar1(phi, 1.0).unwrap().autocovariance()
    }

    // Oracle: gamma(h) = phi^|h| / (1 - phi^2) by direct definition.
    fn ar1_gamma(phi: f64, h: i64) -> f64 {
        phi.powi(h.unsigned_abs() as i32) / (1.0 - phi * phi)
    }

    #[test]
    fn scalar_lyapunov() {
        let g = state_covariance_white(&sys(&[0.5], &[1.0]), 1.0).unwrap();
        assert!((g[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_dynamics_covariance() {
        let s = sys(&[0.0; 4], &[1.0, 2.0]);
        let g = state_covariance_white(&s, 3.0).unwrap();
        let want = DMatrix::<f64>::from_row_slice(2, 2, &[3.0, 6.0, 6.0, 12.0]);
        assert!(linalg::max_abs(&(g - want)) < 1e-15);
    }

    #[test]
    fn lyapunov_residual_small() {
        let s = sys(
            &[0.3, 0.2, -0.1, 0.0, 0.1, 0.4, 0.2, 0.0, -0.2, 0.1, 0.3, 0.1, 0.0, 0.2, 0.1, 0.5],
            &[1.0, -0.5, 0.3, 0.8],
        );
        let g = state_covariance_white(&s, 2.0).unwrap();
        assert!(lyapunov_residual(&s, &g, 2.0) <= 1e-10);
        assert!(state_covariance_white(&s, 0.0).is_err());
    }

    #[test]
    fn general_covariance_matches_brute_force() {
        let s = sys(&[0.5], &[1.0]);
        let cov = state_covariance_general(&s, &ar1(0.5), None).unwrap();
        let mut oracle = 0.0;
        for j in 0..=200 {
            for k in 0..=200 {
                oracle += 0.5f64.powi(j + k) * ar1_gamma(0.5, j as i64 - k as i64);
            }
        }
        assert!((cov.value[(0, 0)] - oracle).abs() < 1e-10);
        // X_t = sum_j (j + 1) 2^-j eps_{t-j}, so Var X = sum (j + 1)^2 4^-j.
        let ma: f64 = (0..200).map(|j| ((j + 1) as f64).powi(2) * 0.25f64.powi(j)).sum();
        assert!((oracle - ma).abs() < 1e-12);
        assert!((oracle - 80.0 / 27.0).abs() < 1e-12);
        assert!(!cov.flagged());
        assert!(cov.tail_bound < 1e-12 * 4.0 / 3.0);
    }

    #[test]
    fn general_covariance_reduces_to_white() {
        let s = sys(&[0.4, 0.3, -0.2, 0.5], &[1.0, 0.7]);
        let w = ArmaProcessSpec::<f64>::white_noise(1.5).unwrap().autocovariance();
        let general = state_covariance_general(&s, &w, None).unwrap().value;
        let white = state_covariance_white(&s, 2.25).unwrap();
        assert!(linalg::max_abs(&(general - white)) < 1e-10);
    }

    #[test]
    fn short_truncation_is_flagged() {
        let s = sys(&[0.9], &[1.0]);
        let cov = state_covariance_general(&s, &ar1(0.5), Some(5)).unwrap();
        assert!(cov.flagged());
        assert!(state_covariance_general(&s, &ar1(0.5), Some(0)).is_err());
    }

    #[test]
    fn cross_covariance_examples() {
        let s = sys(&[0.2, 0.5, -0.3, 0.4], &[1.0, 2.0]);
        let w = ArmaProcessSpec::<f64>::white_noise(1.0).unwrap().autocovariance();
        let c0 = cross_covariance(&s, &w, 0, None).unwrap().value;
        assert!((c0 - s.c()).norm() < 1e-15);
        let c2 = cross_covariance(&s, &w, -2, None).unwrap().value;
        let want = s.a() * s.a() * s.c();
        assert!((c2 - want).norm() < 1e-15);

        let one = sys(&[0.5], &[1.0]);
        let c = cross_covariance(&one, &ar1(0.5), 1, None).unwrap();
        let oracle: f64 = (0..400).map(|j| 0.5f64.powi(j) * ar1_gamma(0.5, j as i64 + 1)).sum();
        assert!((c.value[0] - oracle).abs() < 1e-12);
        assert!((oracle - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_scalar_ar1() {
        let s = sys(&[0.5], &[1.0]);
        let r = analytic_capacities_linear(&s, &ar1(0.5), 50, None).unwrap();
        let mut g = 0.0;
        for j in 0..=200 {
            for k in 0..=200 {
                g += 0.5f64.powi(j + k) * ar1_gamma(0.5, j as i64 - k as i64);
            }
        }
        let cov: f64 = (0..400).map(|j| 0.5f64.powi(j) * ar1_gamma(0.5, j as i64)).sum();
        let oracle = cov * cov / (g * ar1_gamma(0.5, 0));
        assert!((cov - 16.0 / 9.0).abs() < 1e-12);
        assert!((r.mc_tau[0] - oracle).abs() < 1e-10);
        assert!((oracle - 0.8).abs() < 1e-12);
        assert_eq!(r.estimator, Estimator::AnalyticLinear);
    }

    #[test]
    fn white_noise_full_rank_gives_n() {
        let s = sys(&[0.3, 0.0, 0.0, 0.6], &[1.0, 1.0]);
        let w = ArmaProcessSpec::<f64>::white_noise(1.0).unwrap().autocovariance();
        let r = analytic_capacities_linear(&s, &w, 200, None).unwrap();
        assert!((r.mc_total - 2.0).abs() < 1e-6);
        assert!(r.fc_total.abs() < 1e-12);
    }

    #[test]
    fn singular_covariance_rejected() {
        let s = sys(&[0.5, 0.0, 0.0, 0.5], &[1.0, 1.0]);
        let w = ArmaProcessSpec::<f64>::white_noise(1.0).unwrap().autocovariance();
        assert!(matches!(
            analytic_capacities_linear(&s, &w, 10, None),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn memory_b_vectors_white_noise() {
        let s = sys(&[0.3, 0.1, 0.0, 0.6], &[1.0, -0.5]);
        let w = ArmaProcessSpec::<f64>::white_noise(2.0).unwrap().autocovariance();
        let b = b_vectors_memory(&s, &w, 200).unwrap();
        assert!((b.mc_estimate - 2.0).abs() < 1e-8);
        assert!(b.gram_error < 1e-8);
        // B_i^j = sqrt(gamma0) (Gamma^{-1/2} A^{j-1} C)_i
        let g = state_covariance_white(&s, 4.0).unwrap();
        let inv = linalg::symmetric_roots(&g, 0.0, 0.0).inv_sqrt.unwrap();
        let col3 = &inv * (s.a() * s.a() * s.a() * s.c()) * 2.0;
        assert!((b.b.column(3) - col3).norm() < 1e-10);
    }

    #[test]
    fn memory_b_vectors_match_covariance_route() {
        let s = sys(&[0.5], &[1.0]);
        let b = b_vectors_memory(&s, &ar1(0.5), 500).unwrap();
        let r = analytic_capacities_linear(&s, &ar1(0.5), 499, None).unwrap();
        assert!((b.mc_estimate - r.mc_total).abs() < 1e-3);
        assert!(b.gram_error < 1e-3);
        assert!((b.mc_estimate - b.mc_half_window).abs() < 1e-3);
    }

    #[test]
    fn forecast_b_vectors() {
        let s = sys(&[0.5], &[1.0]);
        let w = ArmaProcessSpec::<f64>::white_noise(1.0).unwrap().autocovariance();
        let f = b_vectors_forecasting(&s, &w, 100).unwrap();
        assert!(f.fc_estimate.abs() < 1e-10);
        let f = b_vectors_forecasting(&s, &ar1(0.5), 500).unwrap();
        assert!((f.fc_estimate - f.analytic_fc).abs() < 1e-3, "{f:?}");
        assert!(f.flags.is_empty());
    }

    #[test]
    fn ma1_forecast_vanishes_beyond_one() {
        let s = sys(&[0.2, 0.4, -0.3, 0.1], &[1.0, 0.5]);
        let m = ArmaProcessSpec::<f64>::ma1(0.5, 1.0).unwrap().autocovariance();
        let r = analytic_capacities_linear(&s, &m, 20, None).unwrap();
        assert!(r.fc_h[0] > 1e-3);
        assert!(r.fc_h[1..].iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn controllability_examples() {
        let r = controllability(&sys(&[0.3, 0.0, 0.0, 0.6], &[1.0, 1.0]), None);
        assert_eq!(r.rank, 2);
        assert!(r.kalman_full && r.eigen_distinct && r.eigen_nonzero);
        assert_eq!(r.coeffs_nonzero, Some(true));

        let r = controllability(&sys(&[0.5, 0.0, 0.0, 0.5], &[1.0, 1.0]), None);
        assert_eq!(r.rank, 1);
        assert!(!r.kalman_full && !r.eigen_distinct);

        let r = controllability(&sys(&[0.3, 0.1, 0.0, 0.6], &[0.0, 0.0]), None);
        assert_eq!(r.rank, 0);
        assert_eq!(r.coeffs_nonzero, Some(false));
    }

    #[test]
    fn defective_matrix_has_undefined_coefficients() {
        let r = controllability(&sys(&[0.5, 0.3, 0.0, 0.5], &[0.0, 1.0]), None);
        assert_eq!(r.coeffs_nonzero, None);
        assert_eq!(r.rank, 2);
    }

    #[test]
    fn zero_eigenvalue_blocks_kalman_flag() {
        let r = controllability(&sys(&[0.0, 0.0, 1.0, 0.5].map(|x| x * 0.5), &[1.0, 0.0]), None);
        assert_eq!(r.rank, 2);
        assert!(!r.eigen_nonzero && !r.kalman_full);
    }

    #[test]
    fn kernel_examples() {
        let full = sys(
            &[0.3, 0.1, 0.0, 0.0, -0.4, 0.2, 0.1, 0.0, 0.6],
            &[1.0, 0.5, -0.7],
        );
        let k = kernel_equality_check(&full, 1.0, KERNEL_REL).unwrap();
        assert!(k.matches && k.gamma_kernel_dim == 0 && k.r_kernel_dim == 0);

        let rep = sys(&[0.5, 0.0, 0.0, 0.5], &[1.0, 1.0]);
        let k = kernel_equality_check(&rep, 1.0, KERNEL_REL).unwrap();
        assert!(k.matches, "{k:?}");
        assert_eq!(k.gamma_kernel_dim, 1);

        let g = state_covariance_white(&rep, 1.0).unwrap();
        let v = DVector::<f64>::from_column_slice(&[1.0, -1.0]) / 2f64.sqrt();
        let perturbed = g + &v * v.transpose() * 1e-3;
        let r = linalg::krylov_matrix(rep.a(), rep.c(), 2);
        assert!(!kernel_equality_for(&perturbed, &r, KERNEL_REL).matches);
    }

    #[test]
    fn reduction_examples() {
        let rep = sys(&[0.5, 0.0, 0.0, 0.5], &[1.0, 1.0]);
        let red = reduce_system(&rep, None);
        assert_eq!(red.rank(), 1);
        assert!((red.a_bar[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((red.c_bar[0] - 2f64.sqrt()).abs() < 1e-14);
        assert!(red.diagnostics.rank_preserved && red.diagnostics.sigma_max < 1.0);

        let w = ArmaProcessSpec::<f64>::white_noise(1.0).unwrap().autocovariance();
        let mc = analytic_capacities_linear(&red.linear_system().unwrap(), &w, 200, None)
            .unwrap()
            .mc_total;
        assert!((mc - 1.0).abs() < 1e-6);
        let rank = memory_capacity_via_rank(&rep, None);
        assert_eq!((rank.mc, rank.fc, rank.hypotheses_met), (1, 0, true));

        let full = sys(&[0.3, 0.2, 0.0, 0.6], &[1.0, -0.4]);
        let red = reduce_system(&full, None);
        assert_eq!(red.rank(), 2);
        let a = analytic_capacities_linear(&full, &ar1(0.6), 100, None).unwrap();
        let b = analytic_capacities_linear(&red.linear_system().unwrap(), &ar1(0.6), 100, None).unwrap();
        assert!((a.mc_total - b.mc_total).abs() < 1e-9);
        assert!((a.fc_total - b.fc_total).abs() < 1e-9);
    }

    #[test]
    fn rank_zero_and_zero_dynamics() {
        let none = sys(&[0.5, 0.1, 0.0, 0.3], &[0.0, 0.0]);
        let rc = memory_capacity_via_rank(&none, None);
        assert_eq!(rc.mc, 0);
        assert!(reduce_system(&none, None).linear_system().is_none());

        let nil = sys(&[0.0], &[1.0]);
        let rc = memory_capacity_via_rank(&nil, None);
        assert_eq!(rc.mc, 1);
        assert!(!rc.hypotheses_met);
    }

    #[test]
    fn json_rows_are_row_major() {
        let r = controllability(&sys(&[0.3, 0.0, 0.0, 0.6], &[1.0, 2.0]), None);
        let v = r.to_json();
        assert_eq!(v["R"][0][1].as_f64().unwrap(), 0.3);
        assert_eq!(v["R"][1][1].as_f64().unwrap(), 1.2);
    }
}
