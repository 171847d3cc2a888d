use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rccap_core::capacity::{self, EmpiricalOptions};
use rccap_core::inputs::{self, AutocovarianceFunction};
use rccap_core::systems::{self, AffineMap};
use rccap_core::{lincap, Activation, ArmaProcessSpec, EchoStateNetwork, LinearSystem};

fn arma() -> impl Strategy<Value = ArmaProcessSpec<f64>> {
    (-0.9..0.9f64, -0.9..0.9f64, 0.5..2.0f64).prop_map(|(p, t, s)| ArmaProcessSpec::new(p, t, s).unwrap())
}

fn matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v))
}

fn linear(max_n: usize) -> impl Strategy<Value = LinearSystem> {
    (1..=max_n).prop_flat_map(|n| {
        (matrix(n), prop::collection::vec(-1.0..1.0f64, n), 0.2..0.9f64).prop_map(move |(a, c, s)| {
            let mut c = DVector::from_vec(c);
            c[0] += 2.0;
            let a = if a.norm() < 1e-6 { DMatrix::identity(n, n) } else { a };
            LinearSystem::with_sigma_max(a, c, s).unwrap()
        })
    })
}

fn inputs_path(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn toeplitz_radius_grows_with_order(spec in arma()) {
        let a = spec.autocovariance();
        let mut prev = 0.0f64;
        for l in 1..40 {
            let rho = inputs::toeplitz_block(&a, l).unwrap().spectral_radius();
            prop_assert!(rho >= prev * (1.0 - 1e-12));
            prev = rho;
        }
    }

    #[test]
    fn toeplitz_eigenvalues_inside_spectral_range(spec in arma(), l in 2usize..60) {
        let a = spec.autocovariance();
        let g0 = a.gamma(0);
        let trunc = inputs::truncation_for(&a, inputs::DEFAULT_TAIL_REL, inputs::DEFAULT_SPECTRAL_TRUNCATION);
        let ext = inputs::spectral_extrema(&a, 4096, trunc);
        let ev = inputs::toeplitz_block(&a, l).unwrap().eigenvalues();
        let tau = std::f64::consts::TAU;
        prop_assert!(ev[0] <= tau * ext.max + 1e-8 * g0);
        prop_assert!(ev[l - 1] >= tau * ext.min - 1e-3 * g0);
    }

    #[test]
    fn gershgorin_dominates_finite_radius(spec in arma(), n in 1usize..20) {
        let a = spec.autocovariance();
        let g = inputs::gershgorin_bound(&a, n, 2000).certified();
        let rho = inputs::toeplitz_block(&a, 120).unwrap().spectral_radius();
        prop_assert!(g >= n as f64 * rho / a.gamma(0) * (1.0 - 1e-10));
    }

    #[test]
    fn linear_filter_matches_convolution(sys in linear(5), z in inputs_path(40)) {
        let run = systems::run_filter(&sys, &z, 0).unwrap();
        for t in 0..z.len() {
            let mut direct = DVector::zeros(sys.dim());
            let mut v = sys.c().clone();
            for j in 0..=t {
                direct += &v * z[t - j];
                v = sys.a() * v;
            }
            prop_assert!((run.state(t) - direct).amax() <= 1e-10);
        }
    }

    #[test]
    fn shifting_by_zero_prefix_is_exact(sys in linear(4), w in matrix(4), z in inputs_path(80), k in 1usize..20) {
        let esn = EchoStateNetwork::new(w * 0.2, DVector::from_element(4, 0.5), DVector::zeros(4), Activation::Tanh).unwrap();
        let mut shifted = vec![0.0; k];
        shifted.extend_from_slice(&z);
        let a = systems::run_filter(&sys, &z, 10).unwrap();
        let b = systems::run_filter(&sys, &shifted, 10 + k).unwrap();
        prop_assert_eq!(a.states, b.states);
        let a = systems::run_filter(&esn, &z, 10).unwrap();
        let b = systems::run_filter(&esn, &shifted, 10 + k).unwrap();
        prop_assert_eq!(a.states, b.states);
    }

    #[test]
    fn standardization_transports_solutions(sys in linear(4), z in inputs_path(100)) {
        let n = sys.dim();
        let g = lincap::state_covariance_white(&sys, 1.0).unwrap();
        prop_assume!(rccap_core::linalg::spd_condition_number(&g) < 1e8);
        let st = systems::standardize(&sys, DVector::zeros(n), &g).unwrap();
        let orig = systems::run_filter(&sys, &z, 0).unwrap();
        let start = st.map.apply(&DVector::zeros(n));
        let image = systems::run_filter_from(&st.system, &start, &z, 0).unwrap();
        let scale = st.map.matrix.amax().max(1.0);
        for t in 0..z.len() {
            let x = orig.state(t);
            prop_assert!((st.map.apply(&x) - image.state(t)).amax() <= 1e-9 * scale * (1.0 + x.norm()));
        }
    }

    #[test]
    fn lyapunov_residual_is_tiny(sys in linear(8), g0 in 0.1..5.0f64) {
        let g = lincap::state_covariance_white(&sys, g0).unwrap();
        prop_assert!(lincap::lyapunov_residual(&sys, &g, g0) <= 1e-10 * g0);
        prop_assert!((&g - g.transpose()).amax() <= 1e-12 * g.amax());
    }

    #[test]
    fn reduced_system_injects_equivariantly(sys in linear(6)) {
        let red = lincap::reduce_system(&sys, Some(1e-9));
        let small = red.linear_system().unwrap();
        let f = AffineMap::linear(red.injection.clone());
        let check = systems::verify_morphism(&f, &small, &sys, 200, 7).unwrap();
        prop_assert!(check.holds);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Window 300 keeps the dropped Krylov tail below 0.9^300.
    #[test]
    fn b_vector_route_matches_covariance_route(sys in linear(3), spec in arma()) {
        let a = spec.autocovariance();
        let analytic = lincap::analytic_capacities_linear(&sys, &a, 299, None);
        prop_assume!(analytic.is_ok());
        let analytic = analytic.unwrap();
        prop_assume!(analytic.flags.is_empty());
        let mem = lincap::b_vectors_memory(&sys, &a, 300).unwrap();
        let fc = lincap::b_vectors_forecasting(&sys, &a, 300).unwrap();
        prop_assert!((mem.mc_estimate - analytic.mc_total).abs() <= 1e-6);
        prop_assert!((fc.analytic_fc - analytic.fc_total).abs() <= 1e-6);
        prop_assert!((fc.fc_estimate - fc.analytic_fc).abs() <= 1e-6);
    }

    #[test]
    fn empirical_capacities_stay_in_range(sys in linear(6), spec in arma(), seed in any::<u64>()) {
        let r = capacity::total_capacity_empirical(&sys, &spec, 20, 4000, seed, &EmpiricalOptions::default()).unwrap();
        for v in r.mc_tau.iter().chain(&r.fc_h) {
            prop_assert!((-0.02..=1.02).contains(v));
        }
        let bound = inputs::gershgorin_bound(&spec.autocovariance(), sys.dim(), 2000).certified();
        prop_assert!(r.mc_total <= bound + 0.5 && r.fc_total <= bound + 0.5);
    }
}
