use ham_core::dynamics::IntegratorConfig;
use ham_core::memory::{
    build_assembly_demo, capacity_sweep, corrupt, retrieve, store_single_hidden, AssemblyDemo, CapacitySweep,
    NoiseKind, NoiseModel,
};
use ham_core::patterns::PatternSet;
use ham_core::presets::{one_hidden_layer, random_network, RandomNetOptions};
use ham_core::trainer::{gradient, train, unroll_loss, TrainConfig};
use ham_core::{rng, ConnectionSpec, Elementwise, HamError, LayerLagrangian, LayerSpec, NetworkSpec, Shape};

fn recall_from(set: &PatternSet, beta: f64, cue: &[f64], target: &[f64]) -> (Vec<f64>, ham_core::memory::RecallReport) {
    let stored = store_single_hidden(set, beta).unwrap();
    retrieve(&stored.spec, cue, Some(target), &IntegratorConfig::for_spec(&stored.spec)).unwrap()
}

#[test]
fn single_memory_is_recalled_from_any_flip() {
    let set = PatternSet::random_pm1(&mut rng::rng(3), 1, 32).unwrap();
    let p = &set.patterns[0];
    for seed in 0..5 {
        let cue = corrupt(p, &NoiseModel::new(NoiseKind::BitFlip { rate: 0.4 }, seed)).unwrap();
        let (x, rep) = recall_from(&set, 1.0, &cue, p);
        assert!(rep.success(true) && rep.converged);
        assert!(x.iter().zip(p).all(|(a, b)| (a - b).abs() < 1e-6));
    }
}

#[test]
fn orthogonal_pair_is_separated_at_high_beta() {
    let set = PatternSet::hadamard(2, 16).unwrap();
    for (mu, p) in set.patterns.iter().enumerate() {
        let cue = corrupt(p, &NoiseModel::new(NoiseKind::BitFlip { rate: 0.25 }, mu as u64)).unwrap();
        let (_, rep) = recall_from(&set, 5.0, &cue, p);
        assert_eq!(rep.bit_error, 0, "pattern {mu}");
        assert!(rep.overlap > 1.0 - 1e-9);
    }
}

#[test]
fn vanishing_beta_converges_to_pattern_mean() {
    let set = PatternSet::random_pm1(&mut rng::rng(8), 3, 12).unwrap();
    let mean: Vec<f64> = (0..12).map(|i| set.patterns.iter().map(|p| p[i]).sum::<f64>() / 3.0).collect();
    let (x, rep) = recall_from(&set, 1e-6, &set.patterns[0], &mean);
    assert!(rep.converged);
    for (a, b) in x.iter().zip(&mean) {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}

#[test]
fn zero_weights_relax_to_origin() {
    let spec = one_hidden_layer(Shape::Flat(6), 3, vec![0.0; 18], 2.0, [1.0, 0.0]);
    let cue = vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.25];
    let (x, rep) = retrieve(&spec, &cue, None, &IntegratorConfig::for_spec(&spec)).unwrap();
    assert!(rep.converged);
    assert!(x.iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn retrieval_never_raises_energy() {
    let mut finished = 0;
    for seed in 0..10 {
        let spec = random_network(seed, &RandomNetOptions::default());
        let cue = rng::gaussian(&mut rng::rng(seed + 100), spec.layers[0].len(), 1.0);
        match retrieve(&spec, &cue, None, &IntegratorConfig::for_spec(&spec)) {
            Ok((_, rep)) => {
                assert!(rep.energy_final <= rep.energy_initial + 1e-10, "seed {seed}: {rep:?}");
                finished += 1;
            }
            // Linear and rectified layers can leave the energy unbounded below.
            Err(e) => assert!(matches!(e, HamError::EnergyOverflow { .. }), "seed {seed}: {e}"),
        }
    }
    assert!(finished >= 5);
}

#[test]
fn unbounded_energy_is_an_error() {
    let spec = NetworkSpec::new(
        vec![
            LayerSpec::new("x", Shape::Flat(1), LayerLagrangian::elementwise(Elementwise::Identity), 1.0),
            LayerSpec::new("h", Shape::Flat(1), LayerLagrangian::elementwise(Elementwise::Identity), 1.0),
        ],
        vec![ConnectionSpec::dense(0, 1, 1, vec![2.0])],
    );
    let cue = vec![1.0];
    let err = retrieve(&spec, &cue, None, &IntegratorConfig::for_spec(&spec)).unwrap_err();
    assert!(matches!(err, HamError::EnergyOverflow { .. }), "{err}");
}

#[test]
fn duplicates_are_reported() {
    let p = vec![1.0, -1.0, 1.0, 1.0];
    let set = PatternSet::new(Shape::Flat(4), vec![p.clone(), vec![-1.0; 4], p]).unwrap();
    assert_eq!(store_single_hidden(&set, 1.0).unwrap().duplicates, vec![(0, 2)]);
}

#[test]
fn capacity_single_pattern_always_succeeds_and_is_reproducible() {
    let sweep = CapacitySweep {
        n1: 24,
        k_list: vec![1, 3],
        beta_list: vec![0.05, 1.0],
        noise: NoiseModel::new(NoiseKind::BitFlip { rate: 0.1 }, 4),
        trials: 6,
        seed: 9,
        integrator: None,
    };
    let rows = capacity_sweep(&sweep).unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows.iter().filter(|r| r.k == 1) {
        assert_eq!(r.success_rate, 1.0);
    }
    assert_eq!(rows, capacity_sweep(&sweep).unwrap());
}

#[test]
fn single_patch_single_layout_assembly() {
    let patch = vec![1.0, -1.0, 1.0, -1.0];
    let demo = AssemblyDemo::build(2, 3, vec![patch], vec![vec![0; 9]], 2.0, 4.0, [1.0, 0.1, 0.0]).unwrap();
    let target = &demo.memories.patterns[0];
    assert_eq!(target.len(), 36);
    let cue = corrupt(target, &NoiseModel::new(NoiseKind::Mask { fraction: 0.5 }, 1)).unwrap();
    let (_, rep) = retrieve(&demo.spec, &cue, Some(target), &IntegratorConfig::for_spec(&demo.spec)).unwrap();
    assert!(rep.success(true), "{rep:?}");
}

#[test]
fn assembly_patches_are_shared() {
    let demo = build_assembly_demo().unwrap();
    for c in 0..demo.patches.len() {
        assert!(demo.layouts_using(c).len() >= 2, "patch {c}");
    }
}

fn stored_fixture() -> (ham_core::NetworkSpec, PatternSet, TrainConfig) {
    let set = PatternSet::hadamard(4, 16).unwrap();
    let spec = store_single_hidden(&set, 4.0).unwrap().spec;
    let cfg = TrainConfig {
        unroll_steps: 20,
        dt: 0.5,
        ..TrainConfig::default()
    };
    (spec, set, cfg)
}

#[test]
fn stored_patterns_have_negligible_loss_and_gradient() {
    let (spec, set, cfg) = stored_fixture();
    assert!(unroll_loss(&spec, &set.patterns, &cfg).unwrap() < 1e-6);
    let g = gradient(&spec, &set.patterns, &cfg).unwrap();
    let max = g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max < 1e-6, "max |grad| {max}");
}

#[test]
fn duplicating_a_batch_leaves_the_gradient_unchanged() {
    let spec = random_network(4, &RandomNetOptions { adiabatic_top: true, ..Default::default() });
    let n = spec.layers[0].len();
    let mut r = rng::rng(4);
    let batch: Vec<Vec<f64>> = (0..3).map(|_| rng::random_pm1(&mut r, n)).collect();
    let doubled: Vec<Vec<f64>> = batch.iter().chain(&batch).cloned().collect();
    let cfg = TrainConfig {
        unroll_steps: 5,
        ..TrainConfig::default()
    };
    let a = gradient(&spec, &batch, &cfg).unwrap();
    let b = gradient(&spec, &doubled, &cfg).unwrap();
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-3), "{x} vs {y}");
    }
}

#[test]
fn backtracking_with_frozen_noise_is_monotone() {
    let set = PatternSet::hadamard(4, 8).unwrap();
    let spec = one_hidden_layer(Shape::Flat(8), 6, rng::gaussian(&mut rng::rng(6), 48, 0.4), 3.0, [1.0, 0.0]);
    let cfg = TrainConfig {
        unroll_steps: 6,
        learning_rate: 50.0,
        epochs: 15,
        batch_size: 4,
        noise: NoiseModel::new(NoiseKind::BitFlip { rate: 0.125 }, 2),
        freeze_noise: true,
        ..TrainConfig::default()
    };
    let out = train(&spec, &set, &cfg).unwrap();
    assert!(!out.diverged);
    for w in out.loss_curve.windows(2) {
        assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
    }
}

#[test]
fn runaway_learning_rate_aborts() {
    let (spec, set, _) = stored_fixture();
    let cfg = TrainConfig {
        unroll_steps: 5,
        learning_rate: 1e12,
        epochs: 50,
        batch_size: 4,
        noise: NoiseModel::new(NoiseKind::GaussianAdditive { sigma: 1.0 }, 1),
        backtracking: false,
        ..TrainConfig::default()
    };
    let out = train(&spec, &set, &cfg).unwrap();
    assert!(out.diverged, "curve {:?}", out.loss_curve);
    assert!(out.loss_curve.len() < 50);
}
