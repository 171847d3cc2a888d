//! Stationary scalar input processes: ARMA(1,1) simulation, exact second
//! moments, spectral density, and the lag-covariance Toeplitz blocks that
//! back the capacity bounds.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// Default number of terms in a spectral density evaluation.
pub const DEFAULT_SPECTRAL_TRUNCATION: usize = 10_000;
/// Default ARMA burn-in.
pub const DEFAULT_BURN_IN: usize = 1_000;
/// Gershgorin and bound sums run until the certified tail drops below this
/// fraction of `gamma(0)`.
pub const DEFAULT_TAIL_REL: f64 = 1e-12;

/// ARMA(1,1) input model `Z_t = phi Z_{t-1} + eps_t + theta eps_{t-1}` with
/// Gaussian innovations of standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaProcessSpec<T> {
    phi: T,
    theta: T,
    sigma: T,
}

impl<T: Real> ArmaProcessSpec<T> {
    pub fn new(phi: T, theta: T, sigma: T) -> Result<Self> {
        if !(phi.is_finite() && theta.is_finite() && sigma.is_finite()) {
            return Err(Error::NonFinite("ARMA parameter"));
        }
        if phi.abs() >= T::one() {
            return Err(Error::NonStationaryAr(phi.as_f64()));
        }
        if sigma <= T::zero() {
            return Err(Error::NonPositiveSigma(sigma.as_f64()));
        }
        Ok(Self { phi, theta, sigma })
    }

    pub fn white_noise(sigma: T) -> Result<Self> {
        Self::new(T::zero(), T::zero(), sigma)
    }

    pub fn ar1(phi: T, sigma: T) -> Result<Self> {
        Self::new(phi, T::zero(), sigma)
    }

    pub fn ma1(theta: T, sigma: T) -> Result<Self> {
        Self::new(T::zero(), theta, sigma)
    }

    pub fn phi(&self) -> T {
        self.phi
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn is_white_noise(&self) -> bool {
        self.phi == T::zero() && self.theta == T::zero()
    }

    pub fn autocovariance(&self) -> ArmaAutocovariance<T> {
        autocovariance(self)
    }
}

/// An absolutely summable scalar autocovariance function.
pub trait AutocovarianceFunction<T: Real>: Send + Sync {
    /// `gamma(h) = Cov(Z_t, Z_{t+h})`; symmetric in `h`.
    fn gamma(&self, lag: i64) -> T;

    /// Certified upper bound on `sum_{j > from} |gamma(j)|`.
    fn tail_bound(&self, from: usize) -> T;

    fn variance(&self) -> T {
        self.gamma(0)
    }

    /// True when every nonzero lag has zero covariance.
    fn is_white(&self) -> bool {
        self.tail_bound(0) == T::zero()
    }
}

impl<T: Real, A: AutocovarianceFunction<T> + ?Sized> AutocovarianceFunction<T> for &A {
    fn gamma(&self, lag: i64) -> T {
        (**self).gamma(lag)
    }
    fn tail_bound(&self, from: usize) -> T {
        (**self).tail_bound(from)
    }
}

/// Closed-form ARMA(1,1) autocovariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmaAutocovariance<T> {
    phi: T,
    gamma0: T,
    gamma1: T,
}

pub fn autocovariance<T: Real>(spec: &ArmaProcessSpec<T>) -> ArmaAutocovariance<T> {
    let (phi, theta, s2) = (spec.phi, spec.theta, spec.sigma * spec.sigma);
    let denom = T::one() - phi * phi;
    let two = T::lit(2.0);
    ArmaAutocovariance {
        phi,
        gamma0: s2 * (T::one() + two * phi * theta + theta * theta) / denom,
        gamma1: s2 * (phi + theta) * (T::one() + phi * theta) / denom,
    }
}

impl<T: Real> AutocovarianceFunction<T> for ArmaAutocovariance<T> {
    fn gamma(&self, lag: i64) -> T {
        match lag.unsigned_abs() {
            0 => self.gamma0,
            1 => self.gamma1,
            h => self.gamma1 * self.phi.powi((h - 1).min(i32::MAX as u64) as i32),
        }
    }

    fn tail_bound(&self, from: usize) -> T {
        // sum_{j > J} |gamma1| |phi|^{j-1} = |gamma1| |phi|^J / (1 - |phi|)
        let r = self.phi.abs();
        let pow = if from == 0 {
            T::one()
        } else {
            r.powi(from.min(i32::MAX as usize) as i32)
        };
        self.gamma1.abs() * pow / (T::one() - r)
    }
}

/// Autocovariance known on lags `0..=max_lag` and taken as zero beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalAutocovariance<T> {
    values: Vec<T>,
}

impl<T: Real> EmpiricalAutocovariance<T> {
    pub fn from_values(values: Vec<T>) -> Result<Self> {
        match values.first() {
            Some(&g0) if g0 > T::zero() => Ok(Self { values }),
            Some(_) => Err(Error::InvalidArgument("gamma(0) must be positive".into())),
            None => Err(Error::ZeroLength("autocovariance values")),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

impl<T: Real> AutocovarianceFunction<T> for EmpiricalAutocovariance<T> {
    fn gamma(&self, lag: i64) -> T {
        usize::try_from(lag.unsigned_abs())
            .ok()
            .and_then(|h| self.values.get(h).copied())
            .unwrap_or_else(T::zero)
    }

    fn tail_bound(&self, from: usize) -> T {
        self.values
            .iter()
            .skip(from + 1)
            .fold(T::zero(), |acc, g| acc + g.abs())
    }
}

/// Smallest `J` with `tail_bound(J) < rel * gamma(0)`, capped at `cap`.
pub fn truncation_for<T: Real>(acvf: &impl AutocovarianceFunction<T>, rel: f64, cap: usize) -> usize {
    let target = T::lit(rel) * acvf.gamma(0);
    if acvf.tail_bound(0) < target {
        return 0;
    }
    // Exponential search, then bisection; tail_bound is nonincreasing.
    let mut hi = 1usize;
    while hi < cap && acvf.tail_bound(hi) >= target {
        hi = (hi * 2).min(cap);
    }
    if acvf.tail_bound(hi) >= target {
        return cap;
    }
    let mut lo = hi / 2;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if acvf.tail_bound(mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Draws `length` samples of the ARMA(1,1) process after discarding
/// `burn_in` samples from a zero start. Deterministic for a fixed seed.
pub fn simulate_arma<T: Real>(
    spec: &ArmaProcessSpec<T>,
    length: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<T>> {
    let spec = ArmaProcessSpec::new(spec.phi, spec.theta, spec.sigma)?;
    if length == 0 {
        return Err(Error::ZeroLength("length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(length);
    let (mut z_prev, mut e_prev) = (T::zero(), T::zero());
    for t in 0..burn_in + length {
        let draw: f64 = StandardNormal.sample(&mut rng);
        let e = spec.sigma * T::lit(draw);
        let z = spec.phi * z_prev + e + spec.theta * e_prev;
        if t >= burn_in {
            out.push(z);
        }
        z_prev = z;
        e_prev = e;
    }
    Ok(out)
}

/// A truncated spectral density evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDensityValue<T> {
    pub value: T,
    /// Certified bound on the discarded part of the Fourier series.
    pub truncation_error: T,
}

/// `f(lambda) = (1/2pi) sum_{|n| <= truncation} e^{-i n lambda} gamma(n)`.
pub fn spectral_density<T: Real>(
    acvf: &impl AutocovarianceFunction<T>,
    lambda: T,
    truncation: usize,
) -> Result<SpectralDensityValue<T>> {
    if !lambda.is_finite() || lambda.abs() > T::pi() {
        return Err(Error::FrequencyOutOfRange(lambda.as_f64()));
    }
    let gammas: Vec<T> = (0..=truncation as i64).map(|h| acvf.gamma(h)).collect();
    Ok(SpectralDensityValue {
        value: density_from_gammas(&gammas, lambda),
        truncation_error: acvf.tail_bound(truncation) / T::pi(),
    })
}

fn density_from_gammas<T: Real>(gammas: &[T], lambda: T) -> T {
    let two = T::lit(2.0);
    let mut acc = gammas[0];
    for (n, &g) in gammas.iter().enumerate().skip(1) {
        if g != T::zero() {
            acc += two * g * (T::from_usize_lossy(n) * lambda).cos();
        }
    }
    acc / T::two_pi()
}

/// Minimum and maximum of the spectral density over a uniform grid of
/// `[0, pi]` (the density is even) with `grid` intervals, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralExtrema<T> {
    pub min: T,
    pub max: T,
    pub argmax: T,
    pub truncation_error: T,
}

pub fn spectral_extrema<T: Real>(
    acvf: &impl AutocovarianceFunction<T>,
    grid: usize,
    truncation: usize,
) -> SpectralExtrema<T> {
    let grid = grid.max(1);
    let gammas: Vec<T> = (0..=truncation as i64).map(|h| acvf.gamma(h)).collect();
    let step = T::pi() / T::from_usize_lossy(grid);
    let mut min = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
    let mut max = -min;
    let mut argmax = T::zero();
    for k in 0..=grid {
        let lambda = if k == grid { T::pi() } else { step * T::from_usize_lossy(k) };
        let f = density_from_gammas(&gammas, lambda);
        min = min.min(f);
        if f > max {
            max = f;
            argmax = lambda;
        }
    }
    SpectralExtrema {
        min,
        max,
        argmax,
        truncation_error: acvf.tail_bound(truncation) / T::pi(),
    }
}

/// Symmetric Toeplitz lag-covariance matrix `H_{ij} = gamma(|i - j|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzBlock<T: Real> {
    entries: DMatrix<T>,
}

impl<T: Real> ToeplitzBlock<T> {
    pub fn order(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.entries
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        linalg::symmetric_eigenvalues_desc(&self.entries)
    }

    pub fn spectral_radius(&self) -> T {
        self.eigenvalues()
            .iter()
            .fold(T::zero(), |acc, l| acc.max(l.abs()))
    }

    /// Diagnostic for nearly singular blocks (e.g. MA(1) with |theta| = 1).
    pub fn condition_number(&self) -> T {
        linalg::spd_condition_number(&self.entries)
    }
}

pub fn toeplitz_block<T: Real>(
    acvf: &impl AutocovarianceFunction<T>,
    order: usize,
) -> Result<ToeplitzBlock<T>> {
    if order == 0 {
        return Err(Error::ZeroLength("order"));
    }
    let gammas: Vec<T> = (0..order as i64).map(|h| acvf.gamma(h)).collect();
    Ok(ToeplitzBlock {
        entries: DMatrix::from_fn(order, order, |i, j| gammas[i.abs_diff(j)]),
    })
}

/// Result of growing-order estimation of `rho(H) = lim rho(H^L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRadiusLimit<T> {
    pub value: T,
    pub order: usize,
    pub converged: bool,
    /// `2 pi max f`, the analytic ceiling on every `rho(H^L)`.
    pub ceiling: T,
    /// `(order, rho(H^order))` for every order evaluated.
    pub history: Vec<(usize, T)>,
}

/// Evaluates `rho(H^L)` at orders 1, 2, 4, ... until two successive values
/// differ relatively by less than `rel_tol` (checked from order 8 on) or
/// `max_order` is reached.
pub fn spectral_radius_limit<T: Real>(
    acvf: &impl AutocovarianceFunction<T>,
    rel_tol: T,
    max_order: usize,
) -> Result<SpectralRadiusLimit<T>> {
    if !(rel_tol > T::zero() && rel_tol < T::one()) {
        return Err(Error::InvalidArgument("rel_tol must lie in (0, 1)".into()));
    }
    if max_order == 0 {
        return Err(Error::ZeroLength("max_order"));
    }
    let truncation = truncation_for(acvf, DEFAULT_TAIL_REL, DEFAULT_SPECTRAL_TRUNCATION);
    let ceiling = T::two_pi() * spectral_extrema(acvf, 4096, truncation).max;
    if acvf.is_white() {
        return Ok(SpectralRadiusLimit {
            value: acvf.gamma(0),
            order: 1,
            converged: true,
            ceiling,
            history: vec![(1, acvf.gamma(0))],
        });
    }
    let mut history = Vec::new();
    let mut order = 1usize;
    loop {
        let rho = toeplitz_block(acvf, order)?.spectral_radius();
        let converged = match history.last() {
            Some(&(_, prev)) if order >= 8.min(max_order) => {
                let prev: T = prev;
                (rho - prev).abs() < rel_tol * rho.abs()
            }
            _ => false,
        };
        history.push((order, rho));
        if converged || order >= max_order {
            return Ok(SpectralRadiusLimit {
                value: rho,
                order,
                converged,
                ceiling,
                history,
            });
        }
        order = (order * 2).min(max_order);
    }
}

/// Gershgorin bound `N (1 + (2/gamma0) sum_{j=1}^{J} |gamma(j)|)` with the
/// certified contribution of the neglected lags kept separate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GershgorinBound<T> {
    pub value: T,
    pub remainder: T,
}

impl<T: Real> GershgorinBound<T> {
    /// Value plus remainder: a rigorous upper bound on the infinite sum.
    pub fn certified(&self) -> T {
        self.value + self.remainder
    }
}

pub fn gershgorin_bound<T: Real>(
    acvf: &impl AutocovarianceFunction<T>,
    n: usize,
    truncation: usize,
) -> GershgorinBound<T> {
    let g0 = acvf.gamma(0);
    let partial = (1..=truncation as i64).fold(T::zero(), |acc, j| acc + acvf.gamma(j).abs());
    let nn = T::from_usize_lossy(n);
    let two = T::lit(2.0);
    GershgorinBound {
        value: nn * (T::one() + two * partial / g0),
        remainder: nn * two * acvf.tail_bound(truncation) / g0,
    }
}

/// Biased (1/T) sample autocovariances for lags `0..=max_lag`.
pub fn empirical_autocovariance<T: Real>(series: &[T], max_lag: usize) -> Result<Vec<T>> {
    let len = series.len();
    if max_lag >= len {
        return Err(Error::SeriesTooShort { len, lag: max_lag });
    }
    let nt = T::from_usize_lossy(len);
    let mean = series.iter().fold(T::zero(), |a, &x| a + x) / nt;
    let centered: Vec<T> = series.iter().map(|&x| x - mean).collect();
    Ok((0..=max_lag)
        .map(|h| {
            centered[..len - h]
                .iter()
                .zip(&centered[h..])
                .fold(T::zero(), |a, (&x, &y)| a + x * y)
                / nt
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar1(phi: f64) -> ArmaAutocovariance<f64> {
        ArmaProcessSpec::<f64>::ar1(phi, 1.0).unwrap().autocovariance()
    }

    fn ma1(theta: f64) -> ArmaAutocovariance<f64> {
        ArmaProcessSpec::<f64>::ma1(theta, 1.0).unwrap().autocovariance()
    }

    fn white() -> ArmaAutocovariance<f64> {
        ArmaProcessSpec::<f64>::white_noise(1.0).unwrap().autocovariance()
    }

    // Independent oracle: ARMA(1,1) spectral density in closed form.
    fn arma_density(phi: f64, theta: f64, sigma: f64, lambda: f64) -> f64 {
        let num = 1.0 + theta * theta + 2.0 * theta * lambda.cos();
        let den = 1.0 + phi * phi - 2.0 * phi * lambda.cos();
        sigma * sigma * num / (2.0 * std::f64::consts::PI * den)
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(matches!(
            ArmaProcessSpec::<f64>::new(1.0, 0.0, 1.0),
            Err(Error::NonStationaryAr(_))
        ));
        assert!(matches!(
            ArmaProcessSpec::<f64>::new(-1.2, 0.0, 1.0),
            Err(Error::NonStationaryAr(_))
        ));
        assert!(matches!(
            ArmaProcessSpec::<f64>::new(0.2, 0.0, 0.0),
            Err(Error::NonPositiveSigma(_))
        ));
        assert!(ArmaProcessSpec::<f64>::new(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_values() {
        let w = white();
        assert_eq!(w.gamma(0), 1.0);
        assert_eq!(w.gamma(3), 0.0);
        let a = ar1(0.5);
        assert!((a.gamma(0) - 4.0 / 3.0).abs() < 1e-15);
        assert!((a.gamma(1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((a.gamma(2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((a.gamma(-2) - 1.0 / 3.0).abs() < 1e-15);
        let m = ma1(0.5);
        assert!((m.gamma(0) - 1.25).abs() < 1e-15);
        assert!((m.gamma(1) - 0.5).abs() < 1e-15);
        assert_eq!(m.gamma(2), 0.0);
    }

    #[test]
    fn tail_bound_matches_brute_force_sum() {
        let acvf = ArmaProcessSpec::<f64>::new(0.7, -0.3, 1.3).unwrap().autocovariance();
        for j in [0usize, 1, 5, 20] {
            let brute: f64 = (j as i64 + 1..5000).map(|h| acvf.gamma(h).abs()).sum();
            assert!((acvf.tail_bound(j) - brute).abs() < 1e-12, "J={j}");
        }
        assert_eq!(ma1(0.5).tail_bound(1), 0.0);
        assert_eq!(ma1(0.5).tail_bound(0), 0.5);
    }

    #[test]
    fn truncation_search() {
        assert_eq!(truncation_for(&white(), 1e-12, 100), 0);
        assert_eq!(truncation_for(&ma1(0.5), 1e-12, 100), 1);
        let a = ar1(0.5);
        let j = truncation_for(&a, 1e-12, 10_000);
        assert!(a.tail_bound(j) < 1e-12 * a.gamma(0));
        assert!(a.tail_bound(j - 1) >= 1e-12 * a.gamma(0));
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = ArmaProcessSpec::<f64>::new(0.4, 0.3, 1.0).unwrap();
        let a = simulate_arma(&spec, 500, 100, 11).unwrap();
        let b = simulate_arma(&spec, 500, 100, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_arma(&spec, 500, 100, 12).unwrap();
        assert_ne!(a, c);
        assert!(simulate_arma(&spec, 0, 0, 1).is_err());
    }

    #[test]
    fn white_noise_simulation_is_uncorrelated() {
        let spec = ArmaProcessSpec::<f64>::white_noise(1.0).unwrap();
        let z = simulate_arma(&spec, 100_000, DEFAULT_BURN_IN, 7).unwrap();
        let g: Vec<f64> = empirical_autocovariance(&z, 1).unwrap();
        assert!((g[1] / g[0]).abs() < 0.02);
    }

    #[test]
    fn ar1_simulation_matches_yule_walker() {
        let spec = ArmaProcessSpec::<f64>::ar1(0.5, 1.0).unwrap();
        let z = simulate_arma(&spec, 100_000, DEFAULT_BURN_IN, 3).unwrap();
        let g: Vec<f64> = empirical_autocovariance(&z, 1).unwrap();
        assert!((g[1] / g[0] - 0.5).abs() < 0.03);
    }

    #[test]
    fn closed_form_agrees_with_long_simulation() {
        // Oracle for the closed form: a 10^6-step path, tolerance 1%.
        for (spec, lags) in [
            (ArmaProcessSpec::<f64>::ar1(0.5, 1.0).unwrap(), 2usize),
            (ArmaProcessSpec::<f64>::ma1(0.5, 1.0).unwrap(), 1),
        ] {
            let z = simulate_arma(&spec, 1_000_000, DEFAULT_BURN_IN, 2024).unwrap();
            let g: Vec<f64> = empirical_autocovariance(&z, lags).unwrap();
            let acvf = spec.autocovariance();
            for h in 0..=lags {
                let exact = acvf.gamma(h as i64);
                assert!(
                    (g[h] - exact).abs() <= 0.01 * exact.abs(),
                    "lag {h}: {} vs {exact}",
                    g[h]
                );
            }
        }
    }

    #[test]
    fn spectral_density_values() {
        let f = spectral_density(&white(), 1.1, 100).unwrap();
        assert!((f.value - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        let f0 = spectral_density(&ar1(0.5), 0.0, DEFAULT_SPECTRAL_TRUNCATION).unwrap();
        assert!((f0.value - 2.0 / std::f64::consts::PI).abs() < 1e-6);
        assert!(f0.truncation_error < 1e-12);
        for lambda in [-3.0, -1.0, 0.3, 2.2, std::f64::consts::PI] {
            let f = spectral_density(&ar1(0.5), lambda, 200).unwrap();
            assert!((f.value - arma_density(0.5, 0.0, 1.0, lambda)).abs() < 1e-12);
        }
        assert!(matches!(
            spectral_density(&white(), 3.2, 10),
            Err(Error::FrequencyOutOfRange(_))
        ));
    }

    #[test]
    fn spectral_density_integrates_to_variance() {
        // Composite Simpson on [-pi, pi].
        let acvf = ArmaProcessSpec::<f64>::new(0.6, 0.4, 1.0).unwrap().autocovariance();
        let n = 2000;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let mut sum = 0.0;
        for k in 0..=n {
            let x = -std::f64::consts::PI + h * k as f64;
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sum += w * spectral_density(&acvf, x.clamp(-std::f64::consts::PI, std::f64::consts::PI), 200)
                .unwrap()
                .value;
        }
        assert!((sum * h / 3.0 - acvf.gamma(0)).abs() < 1e-6);
    }

    #[test]
    fn toeplitz_examples() {
        let t = toeplitz_block(&white(), 3).unwrap();
        assert_eq!(t.matrix(), &DMatrix::<f64>::identity(3, 3));
        let t = toeplitz_block(&ar1(0.5), 2).unwrap();
        let expect = DMatrix::<f64>::from_row_slice(2, 2, &[4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]);
        assert!(linalg::max_abs(&(t.matrix() - expect)) < 1e-15);
        let small = toeplitz_block(&ar1(0.5), 5).unwrap();
        let big = toeplitz_block(&ar1(0.5), 6).unwrap();
        assert_eq!(small.matrix(), &big.matrix().view((0, 0), (5, 5)).into_owned());
        assert!(toeplitz_block(&white(), 0).is_err());
    }

    #[test]
    fn ma1_unit_root_is_ill_conditioned() {
        let m = ma1(1.0);
        let k = toeplitz_block(&m, 200).unwrap().condition_number();
        assert!(k > 1e3, "{k}");
        let ok = toeplitz_block(&ma1(0.5), 200).unwrap().condition_number();
        assert!(ok < 20.0, "{ok}");
    }

    #[test]
    fn spectral_radius_examples() {
        let w = spectral_radius_limit(&white(), 1e-6, 64).unwrap();
        assert_eq!(w.value, 1.0);
        assert!(w.converged);
        let a = spectral_radius_limit(&ar1(0.5), 1e-9, 512).unwrap();
        assert!(a.value >= 3.9 && a.value <= 4.0 + 1e-9, "{}", a.value);
        assert!((a.ceiling - 4.0).abs() < 1e-9);
        // Oracle: dense eigensolve of H^500.
        let dense = toeplitz_block(&ar1(0.5), 500).unwrap().spectral_radius();
        assert!(dense >= 3.9);
        assert!(a.value <= a.ceiling + 1e-9 * a.ceiling);
        assert!(spectral_radius_limit(&ar1(0.5), 0.0, 8).is_err());
    }

    #[test]
    fn spectral_radius_flags_non_convergence() {
        let r = spectral_radius_limit(&ar1(0.95), 1e-12, 16).unwrap();
        assert!(!r.converged);
        assert_eq!(r.order, 16);
    }

    #[test]
    fn gershgorin_examples() {
        let g = gershgorin_bound(&white(), 15, 10);
        assert_eq!(g.certified(), 15.0);
        let a = ar1(0.5);
        let j = truncation_for(&a, DEFAULT_TAIL_REL, 100_000);
        assert!((gershgorin_bound(&a, 15, j).certified() - 45.0).abs() < 1e-6);
        assert!((gershgorin_bound(&ma1(0.5), 15, 1).certified() - 27.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_autocovariance_examples() {
        let c = vec![3.0; 20];
        assert!(empirical_autocovariance(&c, 5).unwrap().iter().all(|&g| g == 0.0));
        let t = 10usize;
        let alt: Vec<f64> = (0..t).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let g = empirical_autocovariance(&alt, 1).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[1] + (t as f64 - 1.0) / t as f64).abs() < 1e-15);
        assert!(matches!(
            empirical_autocovariance(&alt, 10),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn empirical_acvf_wrapper() {
        let e = EmpiricalAutocovariance::from_values(vec![2.0, 0.5, -0.25]).unwrap();
        assert_eq!(e.gamma(-2), -0.25);
        assert_eq!(e.gamma(7), 0.0);
        assert_eq!(e.tail_bound(0), 0.75);
        assert!(EmpiricalAutocovariance::<f64>::from_values(vec![0.0]).is_err());
    }

    #[test]
    fn f32_instantiation() {
        let spec = ArmaProcessSpec::<f32>::ar1(0.5, 1.0).unwrap();
        let acvf = spec.autocovariance();
        assert!((acvf.gamma(0) - 4.0 / 3.0).abs() < 1e-6);
        let z = simulate_arma(&spec, 10, 0, 1).unwrap();
        assert_eq!(z.len(), 10);
    }
}
