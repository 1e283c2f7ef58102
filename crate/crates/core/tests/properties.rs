use ham_core::config::{network_from_toml, network_to_toml};
use ham_core::container;
use ham_core::memory::{corrupt, NoiseKind, NoiseModel};
use ham_core::presets::{random_network, RandomNetOptions};
use ham_core::rng;
use ham_core::{
    energy_rate, feature_map_extent, ConnectionSpec, ConvKernel, Elementwise, LayerLagrangian, NetworkSpec,
    NetworkState, Shape,
};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn lagrangian() -> impl Strategy<Value = LayerLagrangian> {
    prop_oneof![
        Just(LayerLagrangian::QUADRATIC),
        (0.05f64..20.0).prop_map(LayerLagrangian::log_sum_exp),
        (0.05f64..20.0).prop_map(LayerLagrangian::channel_log_sum_exp),
        Just(LayerLagrangian::elementwise(Elementwise::Tanh)),
        Just(LayerLagrangian::elementwise(Elementwise::Relu)),
        Just(LayerLagrangian::elementwise(Elementwise::Identity)),
    ]
}

fn random_state(spec: &NetworkSpec, seed: u64, sigma: f64) -> NetworkState {
    let mut r = rng::rng(seed);
    NetworkState::new(spec.layers.iter().map(|l| rng::gaussian(&mut r, l.len(), sigma)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_backward_is_adjoint(rows in 1usize..9, cols in 1usize..9, seed: u64) {
        let mut r = rng::rng(seed);
        let c = ConnectionSpec::dense(0, rows, cols, rng::gaussian(&mut r, rows * cols, 1.0));
        let (lo, up) = (Shape::Flat(cols), Shape::Flat(rows));
        let u = rng::gaussian(&mut r, cols, 1.0);
        let v = rng::gaussian(&mut r, rows, 1.0);
        let lhs = dot(&v, &c.forward(&lo, &up, &u).unwrap());
        let rhs = dot(&c.backward(&lo, &up, &v).unwrap(), &u);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (norm(&u) * norm(&v)).max(1.0));
    }

    #[test]
    fn conv_and_pool_backward_are_adjoint(
        side in 2usize..9, cin in 1usize..4, cout in 1usize..4, w in 1usize..4, s in 1usize..4, seed: u64,
    ) {
        prop_assume!(w <= side);
        let e = feature_map_extent(side, w, s).unwrap();
        let mut r = rng::rng(seed);
        let lo = Shape::map(side, side, cin);
        let u = rng::gaussian(&mut r, lo.len(), 1.0);
        let kernel = ConvKernel { size: w, in_channels: cin, out_channels: cout, data: rng::gaussian(&mut r, w * w * cin * cout, 1.0) };
        for (c, up) in [
            (ConnectionSpec::conv(0, kernel, s), Shape::map(e, e, cout)),
            (ConnectionSpec::avg_pool(0, w, s), Shape::map(e, e, cin)),
        ] {
            let v = rng::gaussian(&mut r, up.len(), 1.0);
            let lhs = dot(&v, &c.forward(&lo, &up, &u).unwrap());
            let rhs = dot(&c.backward(&lo, &up, &v).unwrap(), &u);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (norm(&u) * norm(&v)).max(1.0));
        }
    }

    #[test]
    fn extent_matches_window_count(input in 1usize..40, window in 1usize..40, stride in 1usize..8) {
        let brute = (0..input).step_by(stride).filter(|o| o + window <= input).count();
        match feature_map_extent(input, window, stride) {
            Ok(e) => prop_assert_eq!(e, brute),
            Err(_) => prop_assert!(window > input),
        }
    }

    #[test]
    fn activations_are_lagrangian_gradients(lag in lagrangian(), h in 1usize..4, c in 1usize..4, seed: u64) {
        let shape = Shape::map(h, 2, c);
        let mut r = rng::rng(seed);
        let x = rng::gaussian(&mut r, shape.len(), 1.5);
        let g = lag.activations(&shape, &x).unwrap();
        let eps = 1e-6;
        let fd: Vec<f64> = (0..x.len()).map(|i| {
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += eps;
            m[i] -= eps;
            (lag.value(&shape, &p).unwrap() - lag.value(&shape, &m).unwrap()) / (2.0 * eps)
        }).collect();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        // Relu is not differentiable at 0; a Gaussian draw lands within eps of it with negligible probability.
        prop_assert!(norm(&diff) <= 1e-6 * norm(&g).max(1.0), "{:?} vs {:?}", g, fd);
    }

    #[test]
    fn hessian_is_positive_semidefinite(lag in lagrangian(), h in 1usize..4, c in 1usize..4, seed: u64, scale in 0.1f64..50.0) {
        let shape = Shape::map(h, 3, c);
        let mut r = rng::rng(seed);
        let x = rng::gaussian(&mut r, shape.len(), scale);
        let v = rng::gaussian(&mut r, shape.len(), 1.0);
        let q = lag.hessian_quadratic_form(&shape, &x, &v).unwrap();
        prop_assert!(q >= -1e-12 * dot(&v, &v), "vᵀHv = {}", q);
        let hv = lag.hessian_vector_product(&shape, &x, &v).unwrap();
        prop_assert!((dot(&v, &hv) - q).abs() <= 1e-10 * q.abs().max(1.0));
    }

    #[test]
    fn legendre_respects_lower_bound(lag in lagrangian(), n in 1usize..10, seed: u64, scale in 0.1f64..30.0) {
        let shape = Shape::Flat(n);
        prop_assume!(!matches!(lag.kind(), ham_core::LagrangianKind::ChannelLogSumExp { .. }));
        let x = rng::gaussian(&mut rng::rng(seed), n, scale);
        if let Some(bound) = lag.legendre_lower_bound(&shape) {
            prop_assert!(lag.legendre(&shape, &x).unwrap() >= bound - 1e-12 * bound.abs().max(1.0));
        }
    }

    #[test]
    fn energy_never_increases(seed: u64, state_seed: u64, sigma in 0.1f64..5.0) {
        let spec = random_network(seed, &RandomNetOptions::default());
        let rate = energy_rate(&spec, &random_state(&spec, state_seed, sigma)).unwrap();
        prop_assert!(rate <= 1e-12, "dE/dt = {}", rate);
    }

    #[test]
    fn containers_round_trip(seed: u64, adiabatic: bool) {
        let spec = random_network(seed, &RandomNetOptions { adiabatic_top: adiabatic, ..Default::default() });
        let bytes = container::encode(&spec);
        let back = container::decode(&bytes).unwrap();
        prop_assert_eq!(container::encode(&back), bytes);
        let text = network_to_toml(&spec);
        let parsed = network_from_toml(&text).unwrap();
        prop_assert_eq!(network_to_toml(&parsed), text);
        prop_assert_eq!(parsed, spec);
    }

    #[test]
    fn corruption_is_deterministic(n in 1usize..64, seed: u64, rate in 0.0f64..=1.0, sigma in 0.0f64..3.0) {
        let p = rng::random_pm1(&mut rng::rng(seed ^ 1), n);
        for kind in [
            NoiseKind::BitFlip { rate },
            NoiseKind::GaussianAdditive { sigma },
            NoiseKind::Mask { fraction: rate },
        ] {
            let model = NoiseModel::new(kind, seed);
            let a = corrupt(&p, &model).unwrap();
            prop_assert_eq!(&a, &corrupt(&p, &model).unwrap());
            match kind {
                NoiseKind::BitFlip { .. } => prop_assert!(a.iter().all(|v| v.abs() == 1.0)),
                NoiseKind::Mask { fraction } => {
                    let zeros = a.iter().filter(|v| **v == 0.0).count();
                    prop_assert_eq!(zeros, (fraction * n as f64).round() as usize);
                }
                NoiseKind::GaussianAdditive { .. } => prop_assert_eq!(a.len(), n),
            }
        }
    }
}
