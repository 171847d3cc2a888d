//! Memory and forecasting capacities estimated from simulated runs, and the
//! input-dependent upper bounds that hold for every system with the echo
//! state property.
//!
//! Lag conventions: memory capacities are indexed by `tau = 0, -1, ...,
//! -tau_max` (the state at `t` recovering `Z_{t+tau}`); forecasting
//! capacities by horizons `h = 1..=tau_max` (the state at `t` predicting
//! `Z_{t+h}`).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inputs::{self, ArmaProcessSpec, AutocovarianceFunction};
use crate::linalg;
use crate::scalar::Real;
use crate::systems::{self, StateMap};

/// Default lag truncation.
pub const DEFAULT_TAU_MAX: usize = 250;
/// Default simulated path length.
pub const DEFAULT_LENGTH: usize = 10_000;
/// Conditioning threshold above which an unregularized estimate is flagged.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Per-lag range tolerance for empirical estimates.
pub const EMPIRICAL_TOL: f64 = 0.02;
/// Per-lag range tolerance for analytic estimates.
pub const ANALYTIC_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Empirical,
    AnalyticLinear,
    Rank,
}

impl Estimator {
    pub fn range_tolerance(self) -> f64 {
        match self {
            Estimator::Empirical => EMPIRICAL_TOL,
            Estimator::AnalyticLinear | Estimator::Rank => ANALYTIC_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityMode {
    Memory,
    Forecast,
}

impl CapacityMode {
    fn name(self) -> &'static str {
        match self {
            CapacityMode::Memory => "memory",
            CapacityMode::Forecast => "forecast",
        }
    }
}

/// Per-lag capacities and their totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport<T> {
    /// `MC_tau` for `tau = 0, -1, ..., -tau_max`.
    pub mc_tau: Vec<T>,
    /// `FC` at horizons `1..=h_max`.
    pub fc_h: Vec<T>,
    pub mc_total: T,
    pub fc_total: T,
    /// Sum of the last ten included terms of both sequences; a heuristic
    /// size of what the truncation left out. Never added to the totals.
    pub truncation_tail_estimate: T,
    pub estimator: Estimator,
    pub flags: Vec<String>,
}

impl<T: Real> CapacityReport<T> {
    pub fn from_terms(mc_tau: Vec<T>, fc_h: Vec<T>, estimator: Estimator, flags: Vec<String>) -> Self {
        let sum = |v: &[T]| v.iter().fold(T::zero(), |a, &x| a + x);
        let last10 = |v: &[T]| sum(&v[v.len().saturating_sub(10)..]);
        Self {
            mc_total: sum(&mc_tau),
            fc_total: sum(&fc_h),
            truncation_tail_estimate: last10(&mc_tau) + last10(&fc_h),
            mc_tau,
            fc_h,
            estimator,
            flags,
        }
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Options for the empirical estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOptions {
    /// Tikhonov term added to the state covariance. Zero by default.
    pub ridge: f64,
    /// Apply the degrees-of-freedom correction `1 - (1 - R^2)(n - 1)/(n - p - 1)`
    /// to every per-lag value. Only used when `ridge == 0`.
    pub debias: bool,
    pub washout: usize,
    pub burn_in: usize,
}

impl Default for EmpiricalOptions {
    fn default() -> Self {
        Self {
            ridge: 0.0,
            debias: false,
            washout: systems::DEFAULT_WASHOUT,
            burn_in: inputs::DEFAULT_BURN_IN,
        }
    }
}

/// One per-lag empirical capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagCapacity<T> {
    pub value: T,
    /// Condition number of the sample state covariance over the overlap.
    pub condition: T,
    /// Set when `ridge == 0` and the condition number exceeds `1e12`.
    pub ill_conditioned: bool,
}

fn check_lag(tau: i64, mode: CapacityMode, len: usize) -> Result<usize> {
    let bad = || Error::InvalidLag {
        tau,
        mode: mode.name(),
        len,
    };
    let shift = match mode {
        CapacityMode::Memory if tau <= 0 => tau.unsigned_abs(),
        CapacityMode::Forecast if tau >= 1 => tau as u64,
        _ => return Err(bad()),
    };
    let shift = usize::try_from(shift).map_err(|_| bad())?;
    if 2 * shift >= len {
        return Err(bad());
    }
    Ok(shift)
}

// `c^T (G + ridge I)^+ c / var`, with the pseudo-inverse cut at the usual
// `N eps lambda_max` level. Returns (value, condition, effective rank).
fn explained_fraction<T: Real>(gamma: &DMatrix<T>, cross: &DVector<T>, var_z: T, ridge: T) -> (T, T, usize) {
    let n = gamma.nrows();
    let (values, vectors) = linalg::symmetric_eigen_desc(gamma);
    let top = values.first().copied().unwrap_or_else(T::zero).max(T::zero());
    let lo = values.last().copied().unwrap_or_else(T::zero);
    let condition = if lo > T::zero() {
        top / lo
    } else {
        T::max_value().unwrap_or_else(|| T::lit(f64::MAX))
    };
    let cut = T::from_usize_lossy(n.max(1)) * T::eps() * (top + ridge);
    let mut acc = T::zero();
    let mut rank = 0;
    for (k, &l) in values.iter().enumerate() {
        let d = l + ridge;
        if d > cut && d > T::zero() {
            let p = vectors.column(k).dot(cross);
            acc += p * p / d;
            if l > cut {
                rank += 1;
            }
        }
    }
    let value = if var_z > T::zero() { acc / var_z } else { T::zero() };
    (value, condition, rank)
}

fn adjust_for_dof<T: Real>(r2: T, n: usize, p: usize) -> T {
    if n <= p + 1 {
        return r2;
    }
    let num = T::from_usize_lossy(n - 1);
    let den = T::from_usize_lossy(n - p - 1);
    T::one() - (T::one() - r2) * num / den
}

/// `Cov(Z_{t+tau}, X_t) (Gamma_X + ridge I)^{-1} Cov(X_t, Z_{t+tau}) / Var(Z)`
/// from sample moments over the aligned overlap of `states` (`T x N`) and
/// `inputs`. Memory mode takes `tau <= 0`; forecast mode takes horizons
/// `tau >= 1`. With `ridge = 0` this is the `R^2` of the least-squares
/// affine readout.
pub fn capacity_tau_empirical<T: Real>(
    states: &DMatrix<T>,
    inputs: &[T],
    tau: i64,
    mode: CapacityMode,
    ridge: T,
) -> Result<LagCapacity<T>> {
    let len = inputs.len();
    if states.nrows() != len {
        return Err(Error::Dimension(format!(
            "{} states for {len} inputs",
            states.nrows()
        )));
    }
    if !(ridge >= T::zero()) {
        return Err(Error::InvalidArgument("ridge must be nonnegative".into()));
    }
    let shift = check_lag(tau, mode, len)?;
    let n = len - shift;
    let (x_start, z_start) = match mode {
        CapacityMode::Memory => (shift, 0),
        CapacityMode::Forecast => (0, shift),
    };
    let x = states.rows(x_start, n);
    let z = &inputs[z_start..z_start + n];
    let nt = T::from_usize_lossy(n);
    let x_mean = x.row_mean().transpose();
    let z_mean = z.iter().fold(T::zero(), |a, &v| a + v) / nt;
    let mut xc = x.into_owned();
    for mut row in xc.row_iter_mut() {
        row -= x_mean.transpose();
    }
    let zc = DVector::from_iterator(n, z.iter().map(|&v| v - z_mean));
    let gamma = xc.transpose() * &xc / nt;
    let cross = xc.transpose() * &zc / nt;
    let var_z = zc.dot(&zc) / nt;
    let (value, condition, _) = explained_fraction(&gamma, &cross, var_z, ridge);
    Ok(LagCapacity {
        value,
        condition,
        ill_conditioned: ridge == T::zero() && condition > T::lit(CONDITION_LIMIT),
    })
}

/// All per-lag empirical capacities for `tau_max` lags in each direction.
///
/// Uses running window sums for the state covariances, so the per-lag cost
/// is one `O(T N)` cross product plus an `N x N` eigensolve. Agrees with
/// [`capacity_tau_empirical`] lag by lag up to rounding.
pub fn empirical_capacity_profile<T: Real>(
    states: &DMatrix<T>,
    inputs: &[T],
    tau_max: usize,
    options: &EmpiricalOptions,
) -> Result<CapacityReport<T>> {
    let len = inputs.len();
    let dim = states.ncols();
    if states.nrows() != len {
        return Err(Error::Dimension(format!(
            "{} states for {len} inputs",
            states.nrows()
        )));
    }
    if 2 * tau_max >= len {
        return Err(Error::InvalidLag {
            tau: tau_max as i64,
            mode: "memory",
            len,
        });
    }
    let ridge = T::lit(options.ridge);
    if !(ridge >= T::zero()) {
        return Err(Error::InvalidArgument("ridge must be nonnegative".into()));
    }

    let nt = T::from_usize_lossy(len);
    let x_mean = states.row_mean().transpose();
    let mut xc = states.clone();
    for mut row in xc.row_iter_mut() {
        row -= x_mean.transpose();
    }
    let z_mean = inputs.iter().fold(T::zero(), |a, &v| a + v) / nt;
    let zc: Vec<T> = inputs.iter().map(|&v| v - z_mean).collect();

    let g_all = xc.transpose() * &xc;
    let s_all = xc.row_sum().transpose();
    let zz_all = zc.iter().fold(T::zero(), |a, &v| a + v * v);
    let sz_all = zc.iter().fold(T::zero(), |a, &v| a + v);

    // head[k]: sums over the first k rows; tail[k]: over the last k rows.
    struct Partial<T: Real> {
        xx: DMatrix<T>,
        x: DVector<T>,
        zz: T,
        z: T,
    }
    let partials = |from_end: bool| {
        let mut out = Vec::with_capacity(tau_max + 1);
        let mut acc = Partial {
            xx: DMatrix::<T>::zeros(dim, dim),
            x: DVector::<T>::zeros(dim),
            zz: T::zero(),
            z: T::zero(),
        };
        for k in 0..=tau_max {
            out.push(Partial {
                xx: acc.xx.clone(),
                x: acc.x.clone(),
                zz: acc.zz,
                z: acc.z,
            });
            let t = if from_end { len - 1 - k } else { k };
            let row = xc.row(t).transpose();
            acc.xx.ger(T::one(), &row, &row, T::one());
            acc.x += &row;
            acc.zz += zc[t] * zc[t];
            acc.z += zc[t];
        }
        out
    };
    let head = partials(false);
    let tail = partials(true);

    let columns = xc.as_slice();
    let lags: Vec<(CapacityMode, usize)> = (0..=tau_max)
        .map(|k| (CapacityMode::Memory, k))
        .chain((1..=tau_max).map(|h| (CapacityMode::Forecast, h)))
        .collect();
    let results: Vec<LagCapacity<T>> = lags
        .par_iter()
        .map(|&(mode, shift)| {
            let n = len - shift;
            let (x_start, z_start, x_cut, z_cut) = match mode {
                CapacityMode::Memory => (shift, 0, &head[shift], &tail[shift]),
                CapacityMode::Forecast => (0, shift, &tail[shift], &head[shift]),
            };
            let zs = &zc[z_start..z_start + n];
            let cross_sum = DVector::from_fn(dim, |i, _| {
                dot(&columns[i * len + x_start..i * len + x_start + n], zs)
            });
            let nn = T::from_usize_lossy(n);
            let sx = (&s_all - &x_cut.x) / nn;
            let sz = (sz_all - z_cut.z) / nn;
            let mut gamma = (&g_all - &x_cut.xx) / nn;
            gamma.ger(-T::one(), &sx, &sx, T::one());
            let cross = cross_sum / nn - &sx * sz;
            let var_z = (zz_all - z_cut.zz) / nn - sz * sz;
            let (mut value, condition, rank) = explained_fraction(&gamma, &cross, var_z, ridge);
            if options.debias && ridge == T::zero() {
                value = adjust_for_dof(value, n, rank);
            }
            LagCapacity {
                value,
                condition,
                ill_conditioned: ridge == T::zero() && condition > T::lit(CONDITION_LIMIT),
            }
        })
        .collect();

    let mut flags = Vec::new();
    let worst = results
        .iter()
        .fold(T::zero(), |acc, r| acc.max(r.condition));
    if results.iter().any(|r| r.ill_conditioned) {
        flags.push(format!("ill-conditioned-state-covariance(cond={:.3e})", worst.as_f64()));
    }
    let mc = results[..=tau_max].iter().map(|r| r.value).collect();
    let fc = results[tau_max + 1..].iter().map(|r| r.value).collect();
    Ok(CapacityReport::from_terms(mc, fc, Estimator::Empirical, flags))
}

// Four independent accumulators so the loop vectorizes.
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let xc = x.chunks_exact(4);
    let yc = y.chunks_exact(4);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    let tail = xr.iter().zip(yr).fold(T::zero(), |s, (&a, &b)| s + a * b);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Capacity report of an existing filter run.
pub fn capacity_report_from_run<T: Real>(
    run: &systems::FilterRun<T>,
    tau_max: usize,
    options: &EmpiricalOptions,
) -> Result<CapacityReport<T>> {
    empirical_capacity_profile(&run.states, &run.inputs, tau_max, options)
}

/// Simulates one input path of `length` aligned samples (plus washout),
/// runs the filter and sums the per-lag empirical capacities.
pub fn total_capacity_empirical<T: Real>(
    system: &impl StateMap<T>,
    input: &ArmaProcessSpec<T>,
    tau_max: usize,
    length: usize,
    seed: u64,
    options: &EmpiricalOptions,
) -> Result<CapacityReport<T>> {
    if tau_max == 0 {
        return Err(Error::ZeroLength("tau_max"));
    }
    if length < 4 * tau_max {
        return Err(Error::InvalidArgument(format!(
            "length {length} must be at least 4 * tau_max = {}",
            4 * tau_max
        )));
    }
    let z = inputs::simulate_arma(input, length + options.washout, options.burn_in, seed)?;
    let run = systems::run_filter(system, &z, options.washout)?;
    capacity_report_from_run(&run, tau_max, options)
}

/// The three capacity bounds: `N rho(H)/gamma0`, `2 pi N M_f/gamma0`, and
/// the Gershgorin bound `N (1 + (2/gamma0) sum |gamma(j)|)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport<T> {
    pub rho_bound: T,
    pub spectral_bound: T,
    pub gershgorin: T,
    /// Toeplitz order at which `rho(H^L)` was taken.
    pub rho_order: usize,
    pub rho_converged: bool,
    pub flags: Vec<String>,
}

impl<T: Real> BoundsReport<T> {
    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsOptions {
    pub rho_rel_tol: f64,
    pub rho_max_order: usize,
    /// Intervals of the `[0, pi]` grid used for `max f`.
    pub spectral_grid: usize,
}

impl Default for BoundsOptions {
    fn default() -> Self {
        Self {
            rho_rel_tol: 1e-4,
            rho_max_order: 1024,
            spectral_grid: 4096,
        }
    }
}

pub fn theoretical_bounds<T: Real>(
    acvf: &impl AutocovarianceFunction<T>,
    n: usize,
    options: &BoundsOptions,
) -> Result<BoundsReport<T>> {
    if n == 0 {
        return Err(Error::ZeroLength("state dimension"));
    }
    let g0 = acvf.gamma(0);
    let nn = T::from_usize_lossy(n);
    let rho = inputs::spectral_radius_limit(acvf, T::lit(options.rho_rel_tol), options.rho_max_order)?;
    let trunc = inputs::truncation_for(acvf, inputs::DEFAULT_TAIL_REL, inputs::DEFAULT_SPECTRAL_TRUNCATION);
    let ext = inputs::spectral_extrema(acvf, options.spectral_grid, trunc);
    let g_trunc = inputs::truncation_for(acvf, inputs::DEFAULT_TAIL_REL, 10_000_000);
    let gersh = inputs::gershgorin_bound(acvf, n, g_trunc);

    let report = BoundsReport {
        rho_bound: nn * rho.value / g0,
        spectral_bound: T::two_pi() * nn * ext.max / g0,
        gershgorin: gersh.certified(),
        rho_order: rho.order,
        rho_converged: rho.converged,
        flags: Vec::new(),
    };
    let mut flags = Vec::new();
    if !rho.converged {
        flags.push(format!("rho-not-converged(order={})", rho.order));
    }
    flags.extend(chain_violations(&report).into_iter().map(|v| v.to_string()));
    Ok(BoundsReport { flags, ..report })
}

fn chain_violations<T: Real>(b: &BoundsReport<T>) -> Vec<Violation> {
    let rel = T::lit(1e-8);
    let mut out = Vec::new();
    if b.rho_bound > b.spectral_bound * (T::one() + rel) {
        out.push(Violation::BoundChain {
            lower: "rho",
            upper: "spectral",
            lower_value: b.rho_bound.as_f64(),
            upper_value: b.spectral_bound.as_f64(),
        });
    }
    if b.spectral_bound > b.gershgorin * (T::one() + rel) {
        out.push(Violation::BoundChain {
            lower: "spectral",
            upper: "gershgorin",
            lower_value: b.spectral_bound.as_f64(),
            upper_value: b.gershgorin.as_f64(),
        });
    }
    out
}

/// A failed check from [`validate_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    LagOutOfRange {
        mode: CapacityMode,
        /// `tau <= 0` for memory, horizon `h >= 1` for forecasting.
        lag: i64,
        value: f64,
        tolerance: f64,
    },
    TotalExceedsBound {
        total: &'static str,
        bound: &'static str,
        value: f64,
        limit: f64,
    },
    BoundChain {
        lower: &'static str,
        upper: &'static str,
        lower_value: f64,
        upper_value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LagOutOfRange {
                mode,
                lag,
                value,
                tolerance,
            } => write!(
                f,
                "{} capacity at lag {lag} is {value}, outside [-{tolerance}, 1 + {tolerance}]",
                mode.name()
            ),
            Violation::TotalExceedsBound {
                total,
                bound,
                value,
                limit,
            } => write!(f, "{total} total {value} exceeds {bound} bound (limit {limit})"),
            Violation::BoundChain {
                lower,
                upper,
                lower_value,
                upper_value,
            } => write!(
                f,
                "bound chain broken: {lower} bound {lower_value} above {upper} bound {upper_value}"
            ),
        }
    }
}

/// Checks per-lag ranges, each total against each bound, and the bound
/// chain. Slack on the totals is `0.02` per summed term for empirical
/// reports and `1e-8` (relative) for analytic ones. An empty list is a pass.
pub fn validate_report<T: Real>(report: &CapacityReport<T>, bounds: &BoundsReport<T>) -> Vec<Violation> {
    let tol = report.estimator.range_tolerance();
    let mut out = Vec::new();
    let in_range = |v: f64| v >= -tol && v <= 1.0 + tol;
    for (k, v) in report.mc_tau.iter().enumerate() {
        let value = v.as_f64();
        if !in_range(value) {
            out.push(Violation::LagOutOfRange {
                mode: CapacityMode::Memory,
                lag: -(k as i64),
                value,
                tolerance: tol,
            });
        }
    }
    for (k, v) in report.fc_h.iter().enumerate() {
        let value = v.as_f64();
        if !in_range(value) {
            out.push(Violation::LagOutOfRange {
                mode: CapacityMode::Forecast,
                lag: k as i64 + 1,
                value,
                tolerance: tol,
            });
        }
    }
    let named = [
        ("rho", bounds.rho_bound.as_f64()),
        ("spectral", bounds.spectral_bound.as_f64()),
        ("gershgorin", bounds.gershgorin.as_f64()),
    ];
    let totals = [
        ("mc", report.mc_total.as_f64(), report.mc_tau.len()),
        ("fc", report.fc_total.as_f64(), report.fc_h.len()),
    ];
    for (total, value, count) in totals {
        for (bound, b) in named {
            let limit = match report.estimator {
                Estimator::Empirical => b + EMPIRICAL_TOL * count as f64,
                _ => b + ANALYTIC_TOL * b.abs().max(1.0),
            };
            if value > limit {
                out.push(Violation::TotalExceedsBound {
                    total,
                    bound,
                    value,
                    limit,
                });
            }
        }
    }
    out.extend(chain_violations(bounds));
    out
}
