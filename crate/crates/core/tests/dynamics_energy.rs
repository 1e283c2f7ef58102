use ham_core::dynamics::{relax_endpoints, IntegratorConfig, Method};
use ham_core::energy::{energy_lower_bound, top_residual};
use ham_core::fully_connected::FullyConnectedNet;
use ham_core::memory::store_single_hidden;
use ham_core::patterns::PatternSet;
use ham_core::presets::{self, ConvStack, RandomNetOptions};
use ham_core::{
    energy_rate, equilibrate_top_layer, global_energy, reduced_energy_adiabatic, relax, step, velocity, LayerLagrangian,
    LayerSpec, NetworkSpec, NetworkState, Shape,
};

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b}");
}

#[test]
fn singleton_hidden_unit_drives_input_to_its_weights() {
    let (a, b, tau) = (0.7, -1.3, 2.0);
    let spec = presets::one_hidden_layer(Shape::Flat(2), 1, vec![a, b], 1.0, [tau, 0.5]);
    let v = velocity(&spec, &NetworkState::zeros(&spec)).unwrap();
    close(v[0][0], a / tau, 1e-15);
    close(v[0][1], b / tau, 1e-15);
}

#[test]
fn two_hidden_top_velocity_at_origin() {
    let psi = vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.5];
    let tau3 = 0.4;
    let spec = presets::two_dense_hidden(2, 3, 2, vec![0.0; 6], psi.clone(), 1.0, 1.0, [1.0, 0.5, tau3]);
    let v = velocity(&spec, &NetworkState::zeros(&spec)).unwrap();
    for a in 0..2 {
        let expect: f64 = (0..3).map(|j| psi[a * 3 + j] / 3.0).sum::<f64>() / tau3;
        close(v[2][a], expect, 1e-15);
    }
}

#[test]
fn rk4_on_linear_decay_scales_by_three_eighths() {
    let spec = NetworkSpec::new(vec![LayerSpec::new("x", Shape::Flat(2), LayerLagrangian::QUADRATIC, 1.5)], vec![]);
    let cfg = IntegratorConfig {
        method: Method::Rk4,
        dt: 1.5,
        adaptive: false,
        convergence_eps: 1e-8,
        max_steps: 10,
        clamp_input: false,
    };
    let s = step(&spec, &NetworkState::new(vec![vec![2.0, -4.0]]), &cfg).unwrap();
    close(s.layers[0][0], 0.75, 1e-15);
    close(s.layers[0][1], -1.5, 1e-15);
}

#[test]
fn stored_pattern_is_a_fixed_point() {
    let set = PatternSet::hadamard(4, 16).unwrap();
    let stored = store_single_hidden(&set, 4.0).unwrap();
    let cfg = IntegratorConfig::for_spec(&stored.spec);
    let init = NetworkState::with_input(&stored.spec, &set.patterns[2]).unwrap();
    let out = relax(&stored.spec, &init, &cfg).unwrap();
    assert!(out.converged);
    for (x, p) in out.state.layers[0].iter().zip(&set.patterns[2]) {
        assert!((x - p).abs() < 1e-6, "{x} vs {p}");
    }
}

#[test]
fn trace_times_increase_and_energy_descends() {
    let spec = presets::random_network(42, &RandomNetOptions::default());
    let mut state = NetworkState::zeros(&spec);
    state.layers[0].iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64).sin());
    let cfg = IntegratorConfig {
        max_steps: 300,
        ..IntegratorConfig::for_spec(&spec)
    };
    let out = relax(&spec, &state, &cfg).unwrap();
    let rows = &out.trace.rows;
    assert_eq!(rows.len(), out.steps + 1);
    for w in rows.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!(w[1].energy <= w[0].energy + 1e-10);
        assert!(w[0].energy_rate <= 1e-12);
    }
    let mut csv = Vec::new();
    out.trace.write_csv(&mut csv, false).unwrap();
    let header = String::from_utf8(csv).unwrap().lines().next().unwrap().to_string();
    let names: Vec<String> = spec.layers.iter().map(|l| format!("norm_{}", l.name)).collect();
    assert_eq!(header, format!("t,energy,dE_dt,max_velocity,{}", names.join(",")));
}

#[test]
fn endpoints_match_full_relaxation() {
    let spec = presets::random_network(9, &RandomNetOptions::default());
    let cfg = IntegratorConfig::for_spec(&spec);
    let init = NetworkState::new(spec.layers.iter().map(|l| vec![0.3; l.len()]).collect());
    let full = relax(&spec, &init, &cfg).unwrap();
    let ends = relax_endpoints(&spec, &init, &cfg).unwrap();
    assert_eq!(full.state, ends.state);
    assert_eq!(full.steps, ends.steps);
    assert_eq!(ends.trace.rows.len(), 2);
    assert_eq!(ends.trace.rows[1].energy, full.trace.rows.last().unwrap().energy);
}

#[test]
fn equilibrate_examples() {
    let spec = presets::two_dense_hidden(3, 2, 2, vec![0.4; 6], vec![0.0; 4], 1.0, 1.0, [1.0, 0.5, 0.0]);
    let s = NetworkState::new(vec![vec![1.0, 2.0, 3.0], vec![0.5, -0.5], vec![9.0, 9.0]]);
    assert_eq!(equilibrate_top_layer(&spec, &s).unwrap().layers[2], vec![0.0, 0.0]);

    // A strongly peaked y makes the softmax one-hot, so z is column μ of Ψ.
    let psi = vec![1.0, 2.0, 3.0, 4.0];
    let spec = presets::two_dense_hidden(3, 2, 2, vec![0.4; 6], psi, 1.0, 1.0, [1.0, 0.5, 0.0]);
    let s = NetworkState::new(vec![vec![0.0; 3], vec![-800.0, 0.0], vec![0.0, 0.0]]);
    let eq = equilibrate_top_layer(&spec, &s).unwrap();
    assert_eq!(eq.layers[2], vec![2.0, 4.0]);
    assert_eq!(top_residual(&spec, &eq).unwrap(), 0.0);
    assert!(velocity(&spec, &eq).unwrap()[2].iter().all(|v| *v == 0.0));
}

#[test]
fn adiabatic_limit_matches_small_tau() {
    let mut r = ham_core::rng::rng(12);
    let xi = ham_core::rng::gaussian(&mut r, 24, 0.5);
    let psi = ham_core::rng::gaussian(&mut r, 12, 0.8);
    let taus = [1.0, 0.5];
    let adiabatic = presets::two_dense_hidden(6, 4, 3, xi.clone(), psi.clone(), 1.5, 2.0, [taus[0], taus[1], 0.0]);
    let fast = presets::two_dense_hidden(6, 4, 3, xi, psi, 1.5, 2.0, [taus[0], taus[1], 1e-3 * taus[1]]);
    let mut init = NetworkState::zeros(&adiabatic);
    init.layers[0] = ham_core::rng::gaussian(&mut r, 6, 1.0);
    let a = relax(&adiabatic, &init, &IntegratorConfig::for_spec(&adiabatic)).unwrap();
    let b = relax(
        &fast,
        &init,
        &IntegratorConfig {
            max_steps: 2_000_000,
            ..IntegratorConfig::for_spec(&fast)
        },
    )
    .unwrap();
    assert!(a.converged, "adiabatic run");
    assert!(b.converged, "fast run, {} steps", b.steps);
    for (x, y) in a.state.layers.iter().flatten().zip(b.state.layers.iter().flatten()) {
        assert!((x - y).abs() < 1e-4, "{x} vs {y}");
    }
}

#[test]
fn energy_examples() {
    let beta = 1.7;
    let one_hidden = presets::one_hidden_layer(Shape::Flat(5), 3, vec![0.3; 15], beta, [1.0, 0.5]);
    close(global_energy(&one_hidden, &NetworkState::zeros(&one_hidden)).unwrap().total, -(3f64.ln()) / beta, 1e-15);

    // At the origin the interaction Ψ term is −(1ᵀΨ1)/(N₂N₃); the Ξ term vanishes with x.
    let (b2, b3) = (2.0, 0.5);
    let psi = vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.5];
    let two = presets::two_dense_hidden(2, 3, 2, vec![1.0; 6], psi.clone(), b2, b3, [1.0, 0.5, 0.25]);
    let sum: f64 = psi.iter().sum();
    let expect = -(3f64.ln()) / b2 - (2f64.ln()) / b3 - sum / 6.0;
    close(global_energy(&two, &NetworkState::zeros(&two)).unwrap().total, expect, 1e-14);

    let single = NetworkSpec::new(vec![LayerSpec::new("x", Shape::Flat(2), LayerLagrangian::QUADRATIC, 1.0)], vec![]);
    let b = global_energy(&single, &NetworkState::new(vec![vec![3.0, 4.0]])).unwrap();
    close(b.total, 12.5, 0.0);
}

#[test]
fn breakdown_sums_to_total() {
    for seed in 0..20 {
        let spec = presets::random_network(seed, &RandomNetOptions::default());
        let mut r = ham_core::rng::rng(seed);
        let s = NetworkState::new(spec.layers.iter().map(|l| ham_core::rng::gaussian(&mut r, l.len(), 1.0)).collect());
        let b = global_energy(&spec, &s).unwrap();
        let sum: f64 = b.legendre.iter().chain(&b.interaction).sum();
        close(b.total, sum, 1e-12 * b.total.abs().max(1.0));
    }
}

#[test]
fn conv_origin_closed_form() {
    let g = ConvStack {
        image: 5,
        in_channels: 1,
        window: 2,
        stride: 1,
        out_channels: 3,
        top: 4,
        beta2: 1.5,
        beta3: 2.5,
        taus: [1.0, 0.1, 0.0],
    };
    let spec = g.build(vec![0.7; 12], vec![0.0; 4 * g.feature_len()]);
    let eq = equilibrate_top_layer(&spec, &NetworkState::zeros(&spec)).unwrap();
    let expect = -(16.0 * 3f64.ln()) / 1.5 - 4f64.ln() / 2.5;
    close(reduced_energy_adiabatic(&spec, &eq).unwrap(), expect, 1e-13);
    close(global_energy(&spec, &eq).unwrap().total, expect, 1e-13);
}

#[test]
fn energy_stays_above_lower_bound() {
    let mut r = ham_core::rng::rng(77);
    let xi = ham_core::rng::gaussian(&mut r, 8 * 12, 1.0);
    let psi = ham_core::rng::gaussian(&mut r, 4 * 8, 1.0);
    let spec = presets::two_dense_hidden(12, 8, 4, xi, psi, 2.0, 3.0, [1.0, 0.3, 0.2]);
    let bound = energy_lower_bound(&spec).expect("softmax hidden layers over a quadratic input");
    for seed in 0..10 {
        let mut init = NetworkState::zeros(&spec);
        init.layers[0] = ham_core::rng::gaussian(&mut ham_core::rng::rng(seed), 12, 3.0);
        let out = relax(&spec, &init, &IntegratorConfig::for_spec(&spec)).unwrap();
        for row in &out.trace.rows {
            assert!(row.energy >= bound, "{} < {bound}", row.energy);
        }
    }
}

#[test]
fn fully_connected_form_agrees_with_layers() {
    for seed in 0..15 {
        let spec = presets::random_network(500 + seed, &RandomNetOptions::default());
        let fc = FullyConnectedNet::from_layered(&spec).unwrap();
        let mut r = ham_core::rng::rng(seed);
        let state = NetworkState::new(spec.layers.iter().map(|l| ham_core::rng::gaussian(&mut r, l.len(), 1.0)).collect());
        let flat: Vec<f64> = state.layers.iter().flatten().copied().collect();
        let e = global_energy(&spec, &state).unwrap().total;
        close(fc.energy(&flat).unwrap(), e, 1e-11 * e.abs().max(1.0));
        let rate = energy_rate(&spec, &state).unwrap();
        close(fc.energy_rate(&flat).unwrap(), rate, 1e-10 * rate.abs().max(1.0));
        let v: Vec<f64> = velocity(&spec, &state).unwrap().into_iter().flatten().collect();
        for (a, b) in fc.velocity(&flat).unwrap().iter().zip(&v) {
            close(*a, *b, 1e-12 * b.abs().max(1.0));
        }
    }
}
