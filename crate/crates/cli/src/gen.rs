//! Random system generators for experiments and property batteries.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rccap_core::lincap::memory_capacity_via_rank;
use rccap_core::{linalg, Activation, ArmaProcessSpec, EchoStateNetwork, Error, LinearSystem, Result};

/// Per-stream seed derived from a base seed and an index (splitmix64).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn unit_sphere(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Haar-distributed orthogonal matrix.
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let qr = gaussian_matrix(n, n, rng).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// The Figure-1 style system and how its normalization went.
#[derive(Debug, Clone)]
pub struct Figure1System {
    pub system: LinearSystem,
    /// Spectral radius after all rescaling.
    pub achieved_rho: f64,
    /// True when the spectral-radius scaling left `sigma_max >= 1` and the
    /// matrix was shrunk to `sigma_max = 0.99`.
    pub sigma_capped: bool,
    pub attempts: usize,
}

pub const FIGURE1_SIGMA_CAP: f64 = 0.99;
const MAX_ATTEMPTS: usize = 100;

/// Gaussian `A` scaled to spectral radius `rho` (then capped at
/// `sigma_max = 0.99`), `C` uniform on the sphere, redrawn until the
/// controllability rank is `n`.
pub fn make_figure1_system(n: usize, rho: f64, seed: u64) -> Result<Figure1System> {
    if n == 0 {
        return Err(Error::ZeroLength("n"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("spectral radius {rho} outside (0, 1)")));
    }
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    for attempt in 1..=MAX_ATTEMPTS {
        let g = gaussian_matrix(n, n, &mut rng);
        let c = unit_sphere(n, &mut rng);
        let r0 = linalg::spectral_radius(&g);
        if r0 <= 0.0 {
            continue;
        }
        let mut a = g * (rho / r0);
        let s = linalg::spectral_norm(&a);
        let sigma_capped = s >= 1.0;
        if sigma_capped {
            a *= FIGURE1_SIGMA_CAP / s;
        }
        let achieved_rho = linalg::spectral_radius(&a);
        let Ok(system) = LinearSystem::new(a, c) else {
            continue;
        };
        if memory_capacity_via_rank(&system, None).mc == n {
            return Ok(Figure1System {
                system,
                achieved_rho,
                sigma_capped,
                attempts: attempt,
            });
        }
    }
    Err(Error::GenerationFailed(MAX_ATTEMPTS))
}

// Real block-diagonal matrix with the given conjugate-closed spectrum:
// `pairs` as (radius, angle) 2x2 blocks followed by real eigenvalues.
fn block_diagonal(pairs: &[(f64, f64)], reals: &[f64]) -> DMatrix<f64> {
    let n = 2 * pairs.len() + reals.len();
    let mut d = DMatrix::zeros(n, n);
    for (k, &(r, th)) in pairs.iter().enumerate() {
        let i = 2 * k;
        d[(i, i)] = r * th.cos();
        d[(i, i + 1)] = -r * th.sin();
        d[(i + 1, i)] = r * th.sin();
        d[(i + 1, i + 1)] = r * th.cos();
    }
    for (k, &l) in reals.iter().enumerate() {
        let i = 2 * pairs.len() + k;
        d[(i, i)] = l;
    }
    d
}

fn magnitude_bounded(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.random_range(0.5..1.5);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

// Random pair angles spread over (0, pi) and radii in [0.45, 0.85].
fn spread_pairs(p: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let spacing = std::f64::consts::PI / (p as f64 + 1.0);
    (0..p)
        .map(|k| {
            let th = spacing * (k as f64 + 1.0) + rng.random_range(-0.15..0.15) * spacing;
            (rng.random_range(0.45..0.85), th)
        })
        .collect()
}

// Rotated normal matrix with the given spectrum and a vector whose
// component in every eigenspace has norm in [0.5, 1.5].
fn normal_with_spectrum(pairs: &[(f64, f64)], reals: &[f64], rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DVector<f64>) {
    let d = block_diagonal(pairs, reals);
    let r = d.nrows();
    let mut coeff = DVector::zeros(r);
    for k in 0..pairs.len() {
        let m = magnitude_bounded(rng).abs();
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        coeff[2 * k] = m * phase.cos();
        coeff[2 * k + 1] = m * phase.sin();
    }
    for k in 2 * pairs.len()..r {
        coeff[k] = magnitude_bounded(rng);
    }
    let p_mat = random_orthogonal(r, rng);
    (&p_mat * d * p_mat.transpose(), p_mat * coeff)
}

// Normal `r x r` matrix with well-separated spectrum in the annulus
// `0.45 <= |z| <= 0.85`, controllable from the returned vector.
fn controllable_block(r: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DVector<f64>) {
    let pairs = spread_pairs(r / 2, rng);
    let reals: Vec<f64> = (0..r % 2)
        .map(|_| rng.random_range(0.45..0.85) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    normal_with_spectrum(&pairs, &reals, rng)
}

/// Random `n`-dimensional system with `rank R(A, C) = r` by construction:
/// a rotated block upper-triangular `A` whose leading `r x r` block is
/// controllable from `C`, and `C` with no component outside that block.
pub fn forced_rank_system(n: usize, r: usize, rng: &mut ChaCha8Rng) -> LinearSystem {
    assert!(r <= n && n >= 1);
    let mut a = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    if r > 0 {
        let (a11, c1) = controllable_block(r, rng);
        a.view_mut((0, 0), (r, r)).copy_from(&a11);
        c.rows_mut(0, r).copy_from(&c1);
    }
    if r < n {
        let m = n - r;
        let a22 = gaussian_matrix(m, m, rng);
        let s = linalg::spectral_norm(&a22).max(1e-12);
        a.view_mut((r, r), (m, m)).copy_from(&(a22 * (rng.random_range(0.2..0.8) / s)));
        if r > 0 {
            a.view_mut((0, r), (r, m)).copy_from(&(gaussian_matrix(r, m, rng) * 0.1));
        }
    }
    let s = linalg::spectral_norm(&a);
    if s >= 0.95 {
        a *= 0.95 / s;
    }
    let q = random_orthogonal(n, rng);
    let a = &q * a * q.transpose();
    let c = q * c;
    LinearSystem::new(a, c).expect("construction is contractive")
}

/// Random normal, diagonalizable system. With `repeated`, one real
/// eigenvalue appears twice; otherwise the spectrum is well separated and
/// every eigenspace component of `C` is bounded away from zero.
pub fn diagonalizable_system(n: usize, repeated: bool, rng: &mut ChaCha8Rng) -> LinearSystem {
    assert!(n >= 2 || !repeated);
    let (a, c) = if repeated {
        // The twin sits in [0.1, 0.35], away from the rest of the spectrum.
        let rest = n - 2;
        let pairs = spread_pairs(rest / 2, rng);
        let mut reals: Vec<f64> = (0..rest % 2).map(|_| -rng.random_range(0.45..0.85)).collect();
        let twin = rng.random_range(0.1..0.35);
        reals.extend([twin, twin]);
        normal_with_spectrum(&pairs, &reals, rng)
    } else {
        controllable_block(n, rng)
    };
    LinearSystem::new(a, c).expect("construction is contractive")
}

/// Gaussian `A` rescaled to `sigma_max`.
pub fn random_contractive(n: usize, sigma_max: f64, rng: &mut ChaCha8Rng) -> LinearSystem {
    let a = gaussian_matrix(n, n, rng);
    let c = unit_sphere(n, rng);
    LinearSystem::with_sigma_max(a, c, sigma_max).expect("target below one")
}

/// Random tanh echo state network with `sigma_max(A)` in `[0.5, 0.95]`.
pub fn random_esn(n: usize, rng: &mut ChaCha8Rng) -> EchoStateNetwork<f64> {
    let a = gaussian_matrix(n, n, rng);
    let s = linalg::spectral_norm(&a);
    let a = a * (rng.random_range(0.5..0.95) / s);
    let c = unit_sphere(n, rng) * rng.random_range(0.2..1.5);
    let zeta = DVector::from_fn(n, |_, _| rng.random_range(-0.2..0.2));
    EchoStateNetwork::new(a, c, zeta, Activation::Tanh).expect("contractive by construction")
}

/// Random stationary, invertible ARMA(1,1) input.
pub fn random_arma(rng: &mut ChaCha8Rng) -> ArmaProcessSpec<f64> {
    ArmaProcessSpec::new(
        rng.random_range(-0.9..0.9),
        rng.random_range(-0.9..0.9),
        rng.random_range(0.5..2.0),
    )
    .expect("parameters in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rccap_core::lincap;

    #[test]
    fn forced_ranks_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=8 {
            for r in 0..=n {
                let s = forced_rank_system(n, r, &mut rng);
                let ctrl = lincap::controllability(&s, Some(1e-9));
                assert_eq!(ctrl.rank, r, "n={n} r={r} sv={:?}", ctrl.singular_values);
            }
        }
    }

    #[test]
    fn repeated_eigenvalue_drops_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in 2..=6 {
            let s = diagonalizable_system(n, true, &mut rng);
            let ctrl = lincap::controllability(&s, Some(1e-9));
            assert!(!ctrl.eigen_distinct);
            assert_eq!(ctrl.rank, n - 1);
            let s = diagonalizable_system(n, false, &mut rng);
            assert!(lincap::controllability(&s, None).eigen_distinct);
        }
    }

    #[test]
    fn figure1_scalar_case() {
        let f = make_figure1_system(1, 0.5, 3).unwrap();
        assert!((f.system.a()[(0, 0)].abs() - 0.5).abs() < 1e-15);
        assert!((f.system.c()[0].abs() - 1.0).abs() < 1e-15);
        assert!(!f.sigma_capped);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }
}
