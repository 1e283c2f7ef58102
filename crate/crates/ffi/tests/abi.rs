use std::ffi::{CStr, CString};
use std::ptr;

use ham_core::config::network_to_toml;
use ham_core::memory::store_single_hidden;
use ham_core::patterns::PatternSet;
use ham_core::presets::{random_network, RandomNetOptions};
use ham_core::{container, NetworkState};
use ham_ffi::*;

struct Handle(*mut HamNetwork);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { ham_network_free(self.0) };
    }
}

fn from_spec(spec: &ham_core::NetworkSpec) -> Handle {
    let bytes = container::encode(spec);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ham_network_from_bytes(bytes.as_ptr(), bytes.len(), &mut h) }, HamStatus::Ok);
    Handle(h)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ham_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn energy_rate_and_velocity_match_core() {
    for seed in 0..10 {
        let spec = random_network(seed, &RandomNetOptions::default());
        let h = from_spec(&spec);
        let n = unsafe { ham_network_state_len(h.0) };
        assert_eq!(unsafe { ham_network_layer_count(h.0) }, spec.layers.len());
        let state: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut rest = state.as_slice();
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(a, l)| {
                assert_eq!(unsafe { ham_network_layer_len(h.0, a) }, l.len());
                let (head, tail) = rest.split_at(l.len());
                rest = tail;
                head.to_vec()
            })
            .collect();
        let s = NetworkState::new(layers);

        let mut e = 0.0;
        assert_eq!(unsafe { ham_energy(h.0, state.as_ptr(), n, &mut e) }, HamStatus::Ok);
        assert_eq!(e, ham_core::global_energy(&spec, &s).unwrap().total);
        let mut r = 0.0;
        assert_eq!(unsafe { ham_energy_rate(h.0, state.as_ptr(), n, &mut r) }, HamStatus::Ok);
        assert_eq!(r, ham_core::energy_rate(&spec, &s).unwrap());
        let mut v = vec![f64::NAN; n];
        assert_eq!(unsafe { ham_velocity(h.0, state.as_ptr(), n, v.as_mut_ptr()) }, HamStatus::Ok);
        let expect: Vec<f64> = ham_core::velocity(&spec, &s).unwrap().into_iter().flatten().collect();
        assert_eq!(v, expect);
    }
}

#[test]
fn relax_in_place_matches_core() {
    let spec = random_network(3, &RandomNetOptions { adiabatic_top: true, ..Default::default() });
    let h = from_spec(&spec);
    assert_eq!(unsafe { ham_network_is_adiabatic(h.0) }, 1);
    let n = unsafe { ham_network_state_len(h.0) };
    let mut state = vec![0.5; n];
    let mut cfg = HamIntegrator {
        method: 99,
        dt: 0.0,
        adaptive: 0,
        convergence_eps: 0.0,
        max_steps: 0,
        clamp_input: 0,
    };
    assert_eq!(unsafe { ham_integrator_default(h.0, &mut cfg) }, HamStatus::Ok);
    let mut res = HamRelaxResult::default();
    assert_eq!(unsafe { ham_relax(h.0, state.as_mut_ptr(), n, &cfg, &mut res) }, HamStatus::Ok);
    assert_eq!(res.converged, 1);
    assert!(res.energy_final <= res.energy_initial);

    let init = NetworkState::new(spec.layers.iter().map(|l| vec![0.5; l.len()]).collect());
    let core = ham_core::relax(&spec, &init, &ham_core::IntegratorConfig::for_spec(&spec)).unwrap();
    let flat: Vec<f64> = core.state.layers.into_iter().flatten().collect();
    assert_eq!(state, flat);
    assert_eq!(res.steps, core.steps);
}

#[test]
fn retrieve_recovers_stored_pattern() {
    let set = PatternSet::hadamard(4, 16).unwrap();
    let spec = store_single_hidden(&set, 4.0).unwrap().spec;
    let text = CString::new(network_to_toml(&spec)).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ham_network_from_toml(text.as_ptr(), &mut h) }, HamStatus::Ok);
    let h = Handle(h);
    let target = &set.patterns[1];
    let mut cue = target.clone();
    cue[0] = -cue[0];
    cue[5] = -cue[5];
    let mut x = vec![0.0; 16];
    let mut rep = HamRecallReport::default();
    let status = unsafe {
        ham_retrieve(h.0, cue.as_ptr(), target.as_ptr(), 16, ptr::null(), x.as_mut_ptr(), &mut rep)
    };
    assert_eq!(status, HamStatus::Ok);
    assert_eq!(rep.bit_error, 0);
    assert_eq!(rep.converged, 1);
    assert!(x.iter().zip(target).all(|(a, b)| (a - b).abs() < 1e-6));
}

#[test]
fn equilibrate_sets_top_fixed_point() {
    let set = PatternSet::hadamard(2, 4).unwrap();
    let spec = store_single_hidden(&set, 1.0).unwrap().spec;
    let h = from_spec(&spec);
    let mut state = vec![1.0, 1.0, 1.0, 1.0, 7.0, 7.0];
    assert_eq!(unsafe { ham_equilibrate_top(h.0, state.as_mut_ptr(), 6) }, HamStatus::Ok);
    assert_eq!(&state[4..], &[4.0, 0.0]);
}

#[test]
fn bytes_and_files_round_trip() {
    let spec = random_network(11, &RandomNetOptions::default());
    let h = from_spec(&spec);
    let (mut buf, mut len) = (ptr::null_mut(), 0usize);
    assert_eq!(unsafe { ham_network_to_bytes(h.0, &mut buf, &mut len) }, HamStatus::Ok);
    let copy = unsafe { std::slice::from_raw_parts(buf, len) }.to_vec();
    unsafe { ham_bytes_free(buf, len) };
    assert_eq!(copy, container::encode(&spec));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("n.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ham_network_save(h.0, path.as_ptr()) }, HamStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { ham_network_load(path.as_ptr(), &mut back) }, HamStatus::Ok);
    let back = Handle(back);
    assert_eq!(unsafe { ham_network_state_len(back.0) }, unsafe { ham_network_state_len(h.0) });
}

#[test]
fn errors_are_reported_with_messages() {
    let spec = random_network(5, &RandomNetOptions::default());
    let h = from_spec(&spec);
    let n = unsafe { ham_network_state_len(h.0) };
    let state = vec![0.0; n + 1];
    let mut e = 0.0;
    assert_eq!(unsafe { ham_energy(h.0, state.as_ptr(), n + 1, &mut e) }, HamStatus::ShapeMismatch);
    assert!(last_error().contains("flat state buffer"), "{}", last_error());
    assert_eq!(unsafe { ham_energy(ptr::null(), state.as_ptr(), n, &mut e) }, HamStatus::NullPointer);
    assert_eq!(unsafe { ham_energy(h.0, state.as_ptr(), n, ptr::null_mut()) }, HamStatus::NullPointer);

    let mut nan = vec![0.0; n];
    nan[0] = f64::NAN;
    let mut res = HamRelaxResult::default();
    assert_eq!(unsafe { ham_relax(h.0, nan.as_mut_ptr(), n, ptr::null(), &mut res) }, HamStatus::Numerical);

    let bad_cfg = HamIntegrator {
        method: 7,
        dt: 0.1,
        adaptive: 1,
        convergence_eps: 1e-8,
        max_steps: 10,
        clamp_input: 0,
    };
    let mut zeros = vec![0.0; n];
    assert_eq!(
        unsafe { ham_relax(h.0, zeros.as_mut_ptr(), n, &bad_cfg, ptr::null_mut()) },
        HamStatus::InvalidArgument
    );
    assert!(last_error().contains("method 7"));

    let mut out = ptr::null_mut();
    let garbage = [1u8, 2, 3];
    assert_eq!(unsafe { ham_network_from_bytes(garbage.as_ptr(), 3, &mut out) }, HamStatus::Parse);
    assert!(out.is_null());
    let bad_toml = CString::new("[[layer]]\nname = 1\n").unwrap();
    assert_eq!(unsafe { ham_network_from_toml(bad_toml.as_ptr(), &mut out) }, HamStatus::Parse);
    let missing = CString::new("/nonexistent/net.bin").unwrap();
    assert_eq!(unsafe { ham_network_load(missing.as_ptr(), &mut out) }, HamStatus::Io);

    let mut zeros = vec![0.0; n];
    assert_eq!(unsafe { ham_relax(h.0, zeros.as_mut_ptr(), n, ptr::null(), ptr::null_mut()) }, HamStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { ham_network_free(ptr::null_mut()) };
}

#[test]
fn invalid_network_is_rejected() {
    let mut spec = random_network(2, &RandomNetOptions::default());
    spec.layers[0].tau = 0.0;
    let bytes = container::encode(&spec);
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { ham_network_from_bytes(bytes.as_ptr(), bytes.len(), &mut out) },
        HamStatus::InvalidNetwork
    );
    assert!(out.is_null());
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(ham_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
