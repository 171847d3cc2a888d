//! Property batteries for every module, runnable at two scales.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rccap_core::capacity::{self, BoundsOptions, EmpiricalOptions};
use rccap_core::inputs::{self, AutocovarianceFunction};
use rccap_core::systems::{self, FilterRun};
use rccap_core::{lincap, linalg, Activation, ArmaProcessSpec, EchoStateNetwork, LinearSystem, StateMap};
use serde::Serialize;

use crate::config::{ExperimentConfig, Model};
use crate::figure1;
use crate::gen::{self, derive_seed};
use crate::stats::{isotonic_max_deviation, median_absolute_deviation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Quick,
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub scale: Scale,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Total white-noise memory capacity of a filter run, `tau = 0..-tau_max`.
pub type McEstimator = dyn Fn(&FilterRun<f64>, usize) -> rccap_core::Result<f64> + Sync;

pub fn default_mc_estimator(run: &FilterRun<f64>, tau_max: usize) -> rccap_core::Result<f64> {
    Ok(capacity::capacity_report_from_run(run, tau_max, &EmpiricalOptions::default())?.mc_total)
}

struct Plan {
    specs: usize,
    toeplitz_max_order: usize,
    acvf_lengths: &'static [usize],
    bound_pairs: usize,
    bound_length: usize,
    white_systems: usize,
    consistency_seeds: usize,
    route_systems: usize,
    rank_systems: usize,
    rank_length: usize,
    kernel_systems: usize,
    eigen_systems: usize,
}

impl Plan {
    fn new(scale: Scale) -> Self {
        match scale {
            Scale::Quick => Self {
                specs: 6,
                toeplitz_max_order: 64,
                acvf_lengths: &[10_000, 100_000],
                bound_pairs: 10,
                bound_length: 5_000,
                white_systems: 3,
                consistency_seeds: 20,
                route_systems: 1,
                rank_systems: 24,
                rank_length: 50_000,
                kernel_systems: 30,
                eigen_systems: 20,
            },
            Scale::Full => Self {
                specs: 20,
                toeplitz_max_order: 200,
                acvf_lengths: &[10_000, 100_000, 1_000_000],
                bound_pairs: 50,
                bound_length: 10_000,
                white_systems: 10,
                consistency_seeds: 20,
                route_systems: 4,
                rank_systems: 200,
                rank_length: 200_000,
                kernel_systems: 100,
                eigen_systems: 50,
            },
        }
    }
}

fn timed(
    module: &'static str,
    name: &'static str,
    f: impl FnOnce() -> Result<String, String>,
) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult {
        module,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err_str(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn random_specs(count: usize, rng: &mut ChaCha8Rng) -> Vec<ArmaProcessSpec<f64>> {
    let mut specs = vec![
        ArmaProcessSpec::white_noise(1.0).expect("valid"),
        ArmaProcessSpec::ar1(0.5, 1.0).expect("valid"),
        ArmaProcessSpec::ma1(0.5, 1.0).expect("valid"),
    ];
    while specs.len() < count {
        specs.push(gen::random_arma(rng));
    }
    specs
}

pub fn acvf_symmetry(specs: &[ArmaProcessSpec<f64>]) -> Result<String, String> {
    for s in specs {
        let a = s.autocovariance();
        let g0 = a.gamma(0);
        for h in 0..60i64 {
            ensure(a.gamma(h) == a.gamma(-h), || format!("{s:?}: gamma({h}) asymmetric"))?;
            ensure(g0 >= a.gamma(h).abs(), || format!("{s:?}: |gamma({h})| > gamma(0)"))?;
        }
        for j in [0usize, 3, 10] {
            let brute: f64 = (j as i64 + 1..j as i64 + 4000).map(|h| a.gamma(h).abs()).sum();
            ensure(a.tail_bound(j) >= brute - 1e-12 * g0, || {
                format!("{s:?}: tail_bound({j}) = {} below {brute}", a.tail_bound(j))
            })?;
        }
    }
    Ok(format!("{} specs", specs.len()))
}

pub fn toeplitz_nesting(specs: &[ArmaProcessSpec<f64>], max_order: usize) -> Result<String, String> {
    for s in specs {
        let a = s.autocovariance();
        let mut prev = 0.0f64;
        for l in 2..=max_order {
            let rho = inputs::toeplitz_block(&a, l).map_err(err_str)?.spectral_radius();
            ensure(rho >= prev - 1e-12 * prev.abs(), || {
                format!("{s:?}: rho(H^{l}) = {rho} < rho(H^{}) = {prev}", l - 1)
            })?;
            prev = rho;
        }
    }
    Ok(format!("orders 2..={max_order} on {} specs", specs.len()))
}

pub fn toeplitz_sandwich(specs: &[ArmaProcessSpec<f64>]) -> Result<String, String> {
    for s in specs {
        let a = s.autocovariance();
        let g0 = a.gamma(0);
        let trunc = inputs::truncation_for(&a, inputs::DEFAULT_TAIL_REL, inputs::DEFAULT_SPECTRAL_TRUNCATION);
        let ext = inputs::spectral_extrema(&a, 4096, trunc);
        let two_pi = std::f64::consts::TAU;
        for l in [5usize, 40, 120] {
            let ev = inputs::toeplitz_block(&a, l).map_err(err_str)?.eigenvalues();
            let (hi, lo) = (ev[0], ev[ev.len() - 1]);
            ensure(lo >= two_pi * ext.min - 1e-8 * g0 && hi <= two_pi * ext.max + 1e-8 * g0, || {
                format!(
                    "{s:?}, L={l}: eigenvalues [{lo}, {hi}] outside [{}, {}]",
                    two_pi * ext.min,
                    two_pi * ext.max
                )
            })?;
        }
    }
    Ok(format!("{} specs", specs.len()))
}

pub fn gershgorin_dominates(specs: &[ArmaProcessSpec<f64>]) -> Result<String, String> {
    for s in specs {
        let b = capacity::theoretical_bounds(&s.autocovariance(), 10, &BoundsOptions::default()).map_err(err_str)?;
        ensure(b.gershgorin >= b.rho_bound * (1.0 - 1e-8), || {
            format!("{s:?}: gershgorin {} < rho bound {}", b.gershgorin, b.rho_bound)
        })?;
        ensure(b.spectral_bound <= b.gershgorin * (1.0 + 1e-8), || {
            format!("{s:?}: spectral {} > gershgorin {}", b.spectral_bound, b.gershgorin)
        })?;
    }
    Ok(format!("{} specs", specs.len()))
}

pub fn acvf_convergence(seed: u64, lengths: &[usize]) -> Result<String, String> {
    let specs = [
        ArmaProcessSpec::ar1(0.5, 1.0).expect("valid"),
        ArmaProcessSpec::ma1(0.5, 1.0).expect("valid"),
        ArmaProcessSpec::new(0.3, 0.4, 1.0).expect("valid"),
    ];
    let mut worst = 0.0f64;
    for (i, s) in specs.iter().enumerate() {
        let a = s.autocovariance();
        for &t in lengths {
            let z = inputs::simulate_arma(s, t, inputs::DEFAULT_BURN_IN, derive_seed(seed, (i * 10 + t) as u64))
                .map_err(err_str)?;
            let g = inputs::empirical_autocovariance(&z, 3).map_err(err_str)?;
            let tol = 10.0 * a.gamma(0) / (t as f64).sqrt();
            for (h, &gh) in g.iter().enumerate() {
                let err = (gh - a.gamma(h as i64)).abs();
                worst = worst.max(err * (t as f64).sqrt() / a.gamma(0));
                ensure(err <= tol, || format!("{s:?}, T={t}, lag {h}: error {err} > {tol}"))?;
            }
        }
    }
    Ok(format!("max sqrt(T)-scaled error {worst:.3}"))
}

fn small_systems(count: usize, rng: &mut ChaCha8Rng) -> Vec<LinearSystem> {
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=5);
            gen::random_contractive(n, rng.random_range(0.3..0.95), rng)
        })
        .collect()
}

pub fn filter_determinism(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let esn = gen::random_esn(6, &mut rng);
    let z = inputs::simulate_arma(&gen::random_arma(&mut rng), 2000, 100, seed).map_err(err_str)?;
    let a = systems::run_filter(&esn, &z, 100).map_err(err_str)?;
    let b = systems::run_filter(&esn, &z, 100).map_err(err_str)?;
    ensure(a == b, || "two runs differ".into())?;
    Ok("identical runs".into())
}

pub fn linear_closed_form(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for s in small_systems(10, &mut rng) {
        let z: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let run = systems::run_filter(&s, &z, 0).map_err(err_str)?;
        for t in 0..z.len() {
            // x_t = sum_{j=0}^{t} A^j C z_{t-j}, zero state before t = 0.
            let mut direct = DVector::zeros(s.dim());
            let mut v = s.c().clone();
            for j in 0..=t {
                direct += &v * z[t - j];
                v = s.a() * v;
            }
            let err = (run.state(t) - direct).amax();
            worst = worst.max(err);
            ensure(err <= 1e-10, || format!("t={t}: error {err}"))?;
        }
    }
    Ok(format!("max error {worst:.2e}"))
}

pub fn time_invariance(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lin = gen::random_contractive(4, 0.8, &mut rng);
    let esn = EchoStateNetwork::new(
        gen::gaussian_matrix(5, 5, &mut rng) * 0.1,
        gen::unit_sphere(5, &mut rng),
        DVector::zeros(5),
        Activation::Tanh,
    )
    .map_err(err_str)?;
    let z: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
    for k in [1usize, 7, 40] {
        let mut shifted = vec![0.0; k];
        shifted.extend_from_slice(&z);
        let check = |sys: &dyn Fn(&[f64], usize) -> FilterRun<f64>| {
            let a = sys(&z, 50);
            let b = sys(&shifted, 50 + k);
            a.states == b.states
        };
        ensure(check(&|z, w| systems::run_filter(&lin, z, w).expect("valid run")), || {
            format!("linear system, shift {k}")
        })?;
        ensure(check(&|z, w| systems::run_filter(&esn, z, w).expect("valid run")), || {
            format!("tanh network, shift {k}")
        })?;
    }
    Ok("shifts 1, 7, 40 exact".into())
}

pub fn solution_transport(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = gen::forced_rank_system(5, 5, &mut rng);
    let g = lincap::state_covariance_white(&sys, 1.0).map_err(err_str)?;
    let st = systems::standardize(&sys, DVector::zeros(5), &g).map_err(err_str)?;
    ensure(
        systems::verify_morphism(&st.map, &sys, &st.system, 1000, seed).map_err(err_str)?.holds,
        || "standardization is not equivariant".into(),
    )?;
    let z: Vec<f64> = (0..300).map(|_| rng.random_range(-2.0..2.0)).collect();
    let orig = systems::run_filter(&sys, &z, 0).map_err(err_str)?;
    let start = st.map.apply(&DVector::zeros(5));
    let image = systems::run_filter_from(&st.system, &start, &z, 0).map_err(err_str)?;
    let mut worst = 0.0f64;
    for t in 0..z.len() {
        let x = orig.state(t);
        let err = (st.map.apply(&x) - image.state(t)).amax();
        worst = worst.max(err / (1.0 + x.norm()));
    }
    ensure(worst <= 1e-10, || format!("standardized trajectory off by {worst:.2e}"))?;

    let deficient = gen::forced_rank_system(6, 3, &mut rng);
    let red = lincap::reduce_system(&deficient, Some(1e-9));
    let small = red.linear_system().ok_or("empty reduction")?;
    let f = systems::AffineMap::linear(red.injection.clone());
    let reduced_run = systems::run_filter(&small, &z, 0).map_err(err_str)?;
    let full_run = systems::run_filter(&deficient, &z, 0).map_err(err_str)?;
    let mut worst_inj = 0.0f64;
    for t in 0..z.len() {
        let err = (f.apply(&reduced_run.state(t)) - full_run.state(t)).amax();
        worst_inj = worst_inj.max(err);
    }
    ensure(worst_inj <= 1e-10, || format!("injected trajectory off by {worst_inj:.2e}"))?;
    Ok(format!("standardization {worst:.1e}, injection {worst_inj:.1e}"))
}

pub fn range_and_bounds(seed: u64, pairs: usize, length: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_lag = 0.0f64;
    for k in 0..pairs {
        let spec = gen::random_arma(&mut rng);
        let n = rng.random_range(1..=20);
        let system: rccap_core::StateSystem<f64> = if k % 2 == 0 {
            gen::random_esn(n, &mut rng).into()
        } else {
            gen::random_contractive(n, rng.random_range(0.3..0.95), &mut rng).into()
        };
        let report = capacity::total_capacity_empirical(
            &system,
            &spec,
            50,
            length,
            derive_seed(seed, k as u64),
            &EmpiricalOptions::default(),
        )
        .map_err(err_str)?;
        let bounds =
            capacity::theoretical_bounds(&spec.autocovariance(), system.state_dim(), &BoundsOptions::default())
                .map_err(err_str)?;
        let v = capacity::validate_report(&report, &bounds);
        ensure(v.is_empty(), || format!("pair {k}: {}", v[0]))?;
        for x in report.mc_tau.iter().chain(&report.fc_h) {
            worst_lag = worst_lag.max(*x);
        }
    }
    Ok(format!("{pairs} pairs, largest per-lag value {worst_lag:.4}"))
}

pub fn white_noise_fc_zero(seed: u64, systems_count: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = ArmaProcessSpec::white_noise(1.0).expect("valid");
    let mut worst = 0.0f64;
    for (k, s) in small_systems(systems_count, &mut rng).iter().enumerate() {
        let r = capacity::total_capacity_empirical(s, &w, 50, 100_000, derive_seed(seed, k as u64), &EmpiricalOptions::default())
            .map_err(err_str)?;
        for (h, &v) in r.fc_h.iter().enumerate() {
            worst = worst.max(v.abs());
            ensure(v.abs() <= 0.02, || format!("system {k}, horizon {}: {v}", h + 1))?;
        }
    }
    Ok(format!("max |FC_h| {worst:.4}"))
}

pub fn monotone_trend(seed: u64) -> Result<String, String> {
    let cfg = ExperimentConfig {
        seed,
        models: vec![Model::Ar1],
        ..Default::default()
    };
    let out = figure1::compute_figure1(&cfg).map_err(err_str)?;
    let mc: Vec<f64> = out.rows.iter().map(|r| r.mc).collect();
    let fc: Vec<f64> = out.rows.iter().map(|r| r.fc).collect();
    let (dm, df) = (isotonic_max_deviation(&mc), isotonic_max_deviation(&fc));
    ensure(dm <= 0.5 && df <= 0.5, || {
        format!("isotonic deviation mc {dm:.3}, fc {df:.3}; mc {mc:.2?}; fc {fc:.2?}")
    })?;
    Ok(format!("isotonic deviation mc {dm:.3}, fc {df:.3}"))
}

pub fn estimator_consistency(seed: u64, seeds: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = gen::forced_rank_system(3, 3, &mut rng);
    let spec = ArmaProcessSpec::ar1(0.5, 1.0).expect("valid");
    let totals = |length: usize, salt: u64| -> Result<Vec<f64>, String> {
        (0..seeds)
            .map(|k| {
                capacity::total_capacity_empirical(
                    &sys,
                    &spec,
                    30,
                    length,
                    derive_seed(seed ^ salt, k as u64),
                    &EmpiricalOptions::default(),
                )
                .map(|r| r.mc_total)
                .map_err(err_str)
            })
            .collect()
    };
    let short = median_absolute_deviation(&totals(5_000, 1)?);
    let long = median_absolute_deviation(&totals(10_000, 2)?);
    let ratio = long / short;
    ensure((0.4..=0.85).contains(&ratio), || {
        format!("MAD ratio {ratio:.3} (T=5000: {short:.4}, T=10000: {long:.4})")
    })?;
    Ok(format!("MAD ratio {ratio:.3}"))
}

pub fn lyapunov_battery(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..=10);
        let s = gen::random_contractive(n, rng.random_range(0.1..0.99), &mut rng);
        let g0 = rng.random_range(0.1..5.0);
        let g = lincap::state_covariance_white(&s, g0).map_err(err_str)?;
        let r = lincap::lyapunov_residual(&s, &g, g0);
        worst = worst.max(r);
        ensure(r <= 1e-10, || format!("residual {r:e} for N={n}"))?;
    }
    Ok(format!("max residual {worst:.2e}"))
}

pub fn route_equivalence(seed: u64, systems_count: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = [
        ArmaProcessSpec::ar1(0.5, 1.0).expect("valid"),
        ArmaProcessSpec::ma1(0.5, 1.0).expect("valid"),
        ArmaProcessSpec::new(0.5, 0.3, 1.0).expect("valid"),
    ];
    let mut worst: f64 = 0.0;
    for k in 0..systems_count {
        let n = 1 + k % 5;
        let s = gen::forced_rank_system(n, n, &mut rng);
        for spec in &inputs {
            let a = spec.autocovariance();
            let analytic = lincap::analytic_capacities_linear(&s, &a, 499, None).map_err(err_str)?;
            let mem = lincap::b_vectors_memory(&s, &a, 500).map_err(err_str)?;
            let fc = lincap::b_vectors_forecasting(&s, &a, 500).map_err(err_str)?;
            let d = (mem.mc_estimate - analytic.mc_total)
                .abs()
                .max((fc.fc_estimate - fc.analytic_fc).abs())
                .max((fc.analytic_fc - analytic.fc_total).abs());
            worst = worst.max(d).max(mem.gram_error);
            ensure(d <= 1e-3 && mem.gram_error <= 1e-3, || {
                format!("N={n}, {spec:?}: route gap {d:e}, gram error {:e}", mem.gram_error)
            })?;
        }
    }
    Ok(format!("max discrepancy {worst:.2e}"))
}

pub fn reduction_invariance(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ArmaProcessSpec::new(0.6, 0.2, 1.0).expect("valid");
    let a = spec.autocovariance();
    let mut worst = 0.0f64;
    for n in 1..=6 {
        let s = gen::forced_rank_system(n, n, &mut rng);
        let red = lincap::reduce_system(&s, Some(1e-9));
        let rs = red.linear_system().ok_or("empty reduction")?;
        let x = lincap::analytic_capacities_linear(&s, &a, 200, None).map_err(err_str)?;
        let y = lincap::analytic_capacities_linear(&rs, &a, 200, None).map_err(err_str)?;
        let d = (x.mc_total - y.mc_total).abs().max((x.fc_total - y.fc_total).abs());
        worst = worst.max(d);
        ensure(d <= 1e-6, || format!("N={n}: reduced capacities differ by {d:e}"))?;
    }
    let mut worst_emp = 0.0f64;
    for (k, (n, r)) in [(4usize, 2usize), (6, 3), (5, 1)].into_iter().enumerate() {
        let s = gen::forced_rank_system(n, r, &mut rng);
        let red = lincap::reduce_system(&s, Some(1e-9));
        let rs = red.linear_system().ok_or("empty reduction")?;
        let opts = EmpiricalOptions::default();
        let sd = derive_seed(seed, k as u64);
        let x = capacity::total_capacity_empirical(&s, &spec, 50, 50_000, sd, &opts).map_err(err_str)?;
        let y = capacity::total_capacity_empirical(&rs, &spec, 50, 50_000, sd, &opts).map_err(err_str)?;
        let analytic = lincap::analytic_capacities_linear(&rs, &a, 50, None).map_err(err_str)?;
        let d = (x.mc_total - y.mc_total).abs().max((x.mc_total - analytic.mc_total).abs());
        worst_emp = worst_emp.max(d);
        ensure(d <= 0.3, || format!("N={n}, r={r}: empirical capacities differ by {d}"))?;
    }
    Ok(format!("analytic {worst:.1e}, empirical {worst_emp:.3}"))
}

pub fn injection_equivariant(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..10 {
        let n = rng.random_range(2..=8);
        let r = rng.random_range(1..=n);
        let s = gen::forced_rank_system(n, r, &mut rng);
        let red = lincap::reduce_system(&s, Some(1e-9));
        let rs = red.linear_system().ok_or("empty reduction")?;
        let f = systems::AffineMap::linear(red.injection.clone());
        let check = systems::verify_morphism(&f, &rs, &s, 1000, derive_seed(seed, k)).map_err(err_str)?;
        ensure(check.holds, || format!("N={n}, r={r}: witness {:?}", check.witness))?;
    }
    Ok("10 systems, 1000 probes each".into())
}

/// Empirical white-noise MC within 0.3 of `rank R(A, C)` on systems with
/// forced ranks, plus the analytic value on the reduced system within
/// `1e-6` whenever the reduced system is diagonalizable with nonzero eigenvalues.
pub fn rank_theorem_battery(
    seed: u64,
    count: usize,
    length: usize,
    tau_max: usize,
    estimator: &McEstimator,
) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = ArmaProcessSpec::white_noise(1.0).expect("valid");
    let acvf = w.autocovariance();
    let mut worst = 0.0f64;
    let mut worst_analytic = 0.0f64;
    for k in 0..count {
        let n = 1 + k % 10;
        let r = rng.random_range(0..=n);
        let s = gen::forced_rank_system(n, r, &mut rng);
        let rank = lincap::memory_capacity_via_rank(&s, Some(1e-9));
        ensure(rank.mc == r, || format!("system {k}: rank {} but forced {r}", rank.mc))?;
        let z = inputs::simulate_arma(&w, length + 1000, 0, derive_seed(seed, k as u64)).map_err(err_str)?;
        let run = systems::run_filter(&s, &z, 1000).map_err(err_str)?;
        let mc = estimator(&run, tau_max).map_err(err_str)?;
        let d = (mc - r as f64).abs();
        worst = worst.max(d);
        ensure(d <= 0.3, || format!("system {k} (N={n}, rank {r}): empirical MC {mc:.4}"))?;
        if rank.hypotheses_met && r > 0 {
            let red = lincap::reduce_system(&s, Some(1e-9)).linear_system().ok_or("empty reduction")?;
            let a = lincap::analytic_capacities_linear(&red, &acvf, 400, None).map_err(err_str)?;
            let d = (a.mc_total - r as f64).abs();
            worst_analytic = worst_analytic.max(d);
            ensure(d <= 1e-6, || format!("system {k}: analytic reduced MC {}", a.mc_total))?;
        }
    }
    Ok(format!("{count} systems; max empirical gap {worst:.3}, analytic {worst_analytic:.1e}"))
}

pub fn kernel_battery(seed: u64, count: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for k in 0..count {
        let n = 1 + k % 8;
        let r = rng.random_range(0..=n);
        let s = gen::forced_rank_system(n, r, &mut rng);
        let check = lincap::kernel_equality_check(&s, 1.0, lincap::KERNEL_REL).map_err(err_str)?;
        let angle = check.principal_angles.last().copied().unwrap_or(0.0);
        worst = worst.max(angle);
        ensure(check.matches && check.r_kernel_dim == n - r, || {
            format!("system {k} (N={n}, rank {r}): {check:?}")
        })?;
    }
    Ok(format!("{count} systems, largest angle {worst:.1e}"))
}

pub fn repeated_eigenvalue_battery(seed: u64, count: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_regular = 0.0f64;
    let mut min_repeated = f64::INFINITY;
    for k in 0..count {
        let n = 2 + k % 5;
        let repeated = k % 2 == 0;
        let s = gen::diagonalizable_system(n, repeated, &mut rng);
        let g = lincap::state_covariance_white(&s, 1.0).map_err(err_str)?;
        let kappa = linalg::spd_condition_number(&g);
        let eig = lincap::eigen_structure(s.a());
        ensure(eig.diagonalizable && eig.distinct != repeated, || {
            format!("system {k}: generator produced distinct={}", eig.distinct)
        })?;
        if repeated {
            min_repeated = min_repeated.min(kappa);
        } else {
            max_regular = max_regular.max(kappa);
        }
        ensure((kappa > 1e10) == repeated, || {
            format!("system {k} (N={n}, repeated={repeated}): condition {kappa:e}")
        })?;
    }
    Ok(format!(
        "largest regular condition {max_regular:.2e}, smallest repeated {min_repeated:.2e}"
    ))
}

pub fn csv_determinism(seed: u64) -> Result<String, String> {
    let dir = std::env::temp_dir().join(format!("rccap-selftest-{}-{seed}", std::process::id()));
    let cfg = ExperimentConfig {
        n: 4,
        tau_max: 20,
        length: 2_000,
        seed,
        grid: vec![0.0, 0.4, 0.8],
        output_dir: dir.clone(),
        ..Default::default()
    };
    let read = |plot: bool| -> Result<Vec<u8>, String> {
        figure1::run_figure1(&cfg, plot).map_err(err_str)?;
        std::fs::read(dir.join("figure1.csv")).map_err(err_str)
    };
    let a = read(false)?;
    let b = read(false)?;
    let c = read(true)?;
    let _ = std::fs::remove_dir_all(&dir);
    ensure(a == b, || "repeated runs differ".into())?;
    ensure(a == c, || "plot emission changed the CSV".into())?;
    Ok(format!("{} bytes identical across 3 runs", a.len()))
}

pub fn run_property_suite(seed: u64, scale: Scale) -> SuiteReport {
    run_property_suite_with(seed, scale, &default_mc_estimator)
}

/// Runs every battery. `estimator` is used by the rank-theorem battery only.
pub fn run_property_suite_with(seed: u64, scale: Scale, estimator: &McEstimator) -> SuiteReport {
    let start = Instant::now();
    let plan = Plan::new(scale);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = random_specs(plan.specs, &mut rng);
    let s = |k: u64| derive_seed(seed, 1000 + k);
    let checks = vec![
        timed("inputs", "acvf_symmetry_and_tail", || acvf_symmetry(&specs)),
        timed("inputs", "toeplitz_nesting", || toeplitz_nesting(&specs[..specs.len().min(4)], plan.toeplitz_max_order)),
        timed("inputs", "toeplitz_spectral_sandwich", || toeplitz_sandwich(&specs)),
        timed("inputs", "gershgorin_dominates_rho", || gershgorin_dominates(&specs)),
        timed("inputs", "empirical_acvf_convergence", || acvf_convergence(s(1), plan.acvf_lengths)),
        timed("systems", "filter_determinism", || filter_determinism(s(2))),
        timed("systems", "linear_closed_form", || linear_closed_form(s(3))),
        timed("systems", "time_invariance", || time_invariance(s(4))),
        timed("systems", "solution_transport", || solution_transport(s(5))),
        timed("capacity", "range_and_bounds", || range_and_bounds(s(6), plan.bound_pairs, plan.bound_length)),
        timed("capacity", "white_noise_fc_zero", || white_noise_fc_zero(s(7), plan.white_systems)),
        timed("capacity", "monotone_trend", || monotone_trend(s(8))),
        timed("capacity", "estimator_consistency", || estimator_consistency(s(9), plan.consistency_seeds)),
        timed("lincap", "lyapunov_residual", || lyapunov_battery(s(10))),
        timed("lincap", "route_equivalence", || route_equivalence(s(11), plan.route_systems)),
        timed("lincap", "reduction_invariance", || reduction_invariance(s(12))),
        timed("lincap", "injection_equivariant", || injection_equivariant(s(13))),
        timed("lincap", "rank_theorem", || {
            rank_theorem_battery(s(14), plan.rank_systems, plan.rank_length, 100, estimator)
        }),
        timed("lincap", "kernel_equality", || kernel_battery(s(15), plan.kernel_systems)),
        timed("lincap", "repeated_eigenvalue_iff_singular", || repeated_eigenvalue_battery(s(16), plan.eigen_systems)),
        timed("cli", "csv_determinism", || csv_determinism(s(17))),
    ];
    SuiteReport {
        seed,
        scale,
        passed: checks.iter().all(|c| c.passed),
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_mutation_breaks_rank_battery() {
        let mutant = |run: &FilterRun<f64>, tau_max: usize| -> rccap_core::Result<f64> {
            let report = capacity::capacity_report_from_run(run, tau_max, &EmpiricalOptions::default())?;
            Ok(report.mc_tau.iter().map(|v| -v).sum())
        };
        assert!(rank_theorem_battery(3, 6, 20_000, 50, &mutant).is_err());
        assert!(rank_theorem_battery(3, 6, 20_000, 50, &default_mc_estimator).is_ok());
    }
}
