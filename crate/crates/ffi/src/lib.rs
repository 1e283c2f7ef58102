//! C ABI over `ham-core`.
//!
//! A network lives behind an opaque [`HamNetwork`] handle created by one of
//! the `ham_network_*` constructors and released with [`ham_network_free`].
//! Every fallible function returns a [`HamStatus`]; on failure a message is
//! available from [`ham_last_error`] on the same thread.
//!
//! States cross the boundary as one flat `double` buffer holding every layer
//! in order (bottom layer first), `ham_network_state_len` values long.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use ham_core::dynamics::{IntegratorConfig, Method, NetworkState};
use ham_core::{config, container, energy, memory, HamError, NetworkSpec};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidNetwork = 3,
    ShapeMismatch = 4,
    Numerical = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

/// Opaque network handle.
pub struct HamNetwork {
    spec: NetworkSpec,
}

pub const HAM_METHOD_EULER: u32 = 0;
pub const HAM_METHOD_RK4: u32 = 1;

/// Integrator settings; fill with [`ham_integrator_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamIntegrator {
    /// `HAM_METHOD_EULER` or `HAM_METHOD_RK4`.
    pub method: u32,
    pub dt: f64,
    /// Nonzero enables step halving on energy increase.
    pub adaptive: u8,
    pub convergence_eps: f64,
    pub max_steps: usize,
    /// Nonzero holds the input layer fixed.
    pub clamp_input: u8,
}

/// Summary of a relaxation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HamRelaxResult {
    pub converged: u8,
    pub steps: usize,
    pub energy_initial: f64,
    pub energy_final: f64,
}

/// Outcome of a retrieval.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HamRecallReport {
    pub overlap: f64,
    pub bit_error: usize,
    pub converged: u8,
    pub steps: usize,
    pub energy_initial: f64,
    pub energy_final: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(HamStatus, String);

impl From<HamError> for Failure {
    fn from(e: HamError) -> Self {
        let status = match &e {
            HamError::ShapeMismatch { .. } => HamStatus::ShapeMismatch,
            HamError::InvalidNetwork(_)
            | HamError::ZeroTauBelowTop { .. }
            | HamError::AdiabaticLayer { .. }
            | HamError::NotAdiabatic { .. }
            | HamError::NotEquilibrated { .. }
            | HamError::Unsupported(_) => HamStatus::InvalidNetwork,
            HamError::NonFinite { .. } | HamError::EnergyOverflow { .. } => HamStatus::Numerical,
            HamError::InvalidArgument(_) => HamStatus::InvalidArgument,
            HamError::Container(_) | HamError::PatternFile(_) => HamStatus::Parse,
            HamError::Io(_) => HamStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure(HamStatus::Parse, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(HamStatus::NullPointer, format!("{what} is null"))
}

// Runs `f`, converting errors and panics into a status and the last-error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HamStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            HamStatus::Panic
        }
    }
}

unsafe fn net<'a>(p: *const HamNetwork) -> Result<&'a HamNetwork, Failure> {
    p.as_ref().ok_or_else(|| null("network"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HamStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return if len == 0 { Ok(&[]) } else { Err(null(what)) };
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return if len == 0 { Ok(&mut []) } else { Err(null(what)) };
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn state_len(spec: &NetworkSpec) -> usize {
    spec.layers.iter().map(|l| l.len()).sum()
}

fn check_len(expected: usize, found: usize, what: &str) -> Result<(), Failure> {
    if expected != found {
        return Err(HamError::ShapeMismatch {
            context: what.into(),
            expected,
            found,
        }
        .into());
    }
    Ok(())
}

fn unflatten(spec: &NetworkSpec, flat: &[f64]) -> Result<NetworkState, Failure> {
    check_len(state_len(spec), flat.len(), "flat state buffer")?;
    let mut rest = flat;
    let layers = spec
        .layers
        .iter()
        .map(|l| {
            let (head, tail) = rest.split_at(l.len());
            rest = tail;
            head.to_vec()
        })
        .collect();
    Ok(NetworkState::new(layers))
}

fn flatten_into(layers: &[Vec<f64>], out: &mut [f64]) {
    for (dst, src) in out.iter_mut().zip(layers.iter().flatten()) {
        *dst = *src;
    }
}

fn boxed(spec: NetworkSpec, out: *mut *mut HamNetwork) -> Result<(), Failure> {
    let spec = spec.validated()?;
    unsafe { *out = Box::into_raw(Box::new(HamNetwork { spec })) };
    Ok(())
}

unsafe fn integrator(spec: &NetworkSpec, cfg: *const HamIntegrator) -> Result<IntegratorConfig, Failure> {
    let Some(c) = cfg.as_ref() else {
        return Ok(IntegratorConfig::for_spec(spec));
    };
    let method = match c.method {
        HAM_METHOD_EULER => Method::Euler,
        HAM_METHOD_RK4 => Method::Rk4,
        m => return Err(Failure(HamStatus::InvalidArgument, format!("unknown integrator method {m}"))),
    };
    let cfg = IntegratorConfig {
        method,
        dt: c.dt,
        adaptive: c.adaptive != 0,
        convergence_eps: c.convergence_eps,
        max_steps: c.max_steps,
        clamp_input: c.clamp_input != 0,
    };
    cfg.check()?;
    Ok(cfg)
}

/// Message describing the last failure on this thread, or an empty string.
/// The pointer stays valid until the next `ham_*` call on this thread.
#[no_mangle]
pub extern "C" fn ham_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ham_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a binary network container.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ham_network_load(path: *const c_char, out: *mut *mut HamNetwork) -> HamStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = c_str(path, "path")?;
        boxed(container::load(Path::new(path))?, out)
    })
}

/// Decodes a binary network container held in memory.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ham_network_from_bytes(bytes: *const u8, len: usize, out: *mut *mut HamNetwork) -> HamStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        boxed(container::decode(slice::from_raw_parts(bytes, len))?, out)
    })
}

/// Parses a network from TOML text with `[[layer]]` and `[[connection]]` tables.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ham_network_from_toml(text: *const c_char, out: *mut *mut HamNetwork) -> HamStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        boxed(config::network_from_toml(c_str(text, "text")?)?, out)
    })
}

/// Writes the network as a binary container.
///
/// # Safety
/// `network` must come from a `ham_network_*` constructor; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ham_network_save(network: *const HamNetwork, path: *const c_char) -> HamStatus {
    guard(|| {
        let n = net(network)?;
        container::save(&n.spec, Path::new(c_str(path, "path")?))?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `network` must be null or an unreleased handle from a `ham_network_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn ham_network_free(network: *mut HamNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Number of layers, or 0 for a null handle.
///
/// # Safety
/// `network` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ham_network_layer_count(network: *const HamNetwork) -> usize {
    network.as_ref().map_or(0, |n| n.spec.layers.len())
}

/// Number of units in `layer` (0-based), or 0 when out of range.
///
/// # Safety
/// `network` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ham_network_layer_len(network: *const HamNetwork, layer: usize) -> usize {
    network
        .as_ref()
        .and_then(|n| n.spec.layers.get(layer))
        .map_or(0, |l| l.len())
}

/// Length of the flat state buffer.
///
/// # Safety
/// `network` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ham_network_state_len(network: *const HamNetwork) -> usize {
    network.as_ref().map_or(0, |n| state_len(&n.spec))
}

/// Nonzero when the top layer has `tau = 0`.
///
/// # Safety
/// `network` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ham_network_is_adiabatic(network: *const HamNetwork) -> u8 {
    network.as_ref().map_or(0, |n| n.spec.is_adiabatic() as u8)
}

/// Default integrator for this network.
///
/// # Safety
/// `network` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ham_integrator_default(network: *const HamNetwork, out: *mut HamIntegrator) -> HamStatus {
    guard(|| {
        let n = net(network)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = IntegratorConfig::for_spec(&n.spec);
        *out = HamIntegrator {
            method: match c.method {
                Method::Euler => HAM_METHOD_EULER,
                Method::Rk4 => HAM_METHOD_RK4,
            },
            dt: c.dt,
            adaptive: c.adaptive as u8,
            convergence_eps: c.convergence_eps,
            max_steps: c.max_steps,
            clamp_input: c.clamp_input as u8,
        };
        Ok(())
    })
}

/// Global energy of a flat state.
///
/// # Safety
/// `state` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn ham_energy(
    network: *const HamNetwork,
    state: *const f64,
    len: usize,
    out: *mut f64,
) -> HamStatus {
    guard(|| {
        let n = net(network)?;
        let s = unflatten(&n.spec, input(state, len, "state")?)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = energy::global_energy(&n.spec, &s)?.total;
        Ok(())
    })
}

/// Analytic `dE/dt` at a flat state.
///
/// # Safety
/// `state` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn ham_energy_rate(
    network: *const HamNetwork,
    state: *const f64,
    len: usize,
    out: *mut f64,
) -> HamStatus {
    guard(|| {
        let n = net(network)?;
        let s = unflatten(&n.spec, input(state, len, "state")?)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = energy::energy_rate(&n.spec, &s)?;
        Ok(())
    })
}

/// Writes `dx/dt` for every layer into `out`; an adiabatic top layer gets zeros.
///
/// # Safety
/// `state` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ham_velocity(
    network: *const HamNetwork,
    state: *const f64,
    len: usize,
    out: *mut f64,
) -> HamStatus {
    guard(|| {
        let n = net(network)?;
        let s = unflatten(&n.spec, input(state, len, "state")?)?;
        let v = ham_core::velocity(&n.spec, &s)?;
        let out = output(out, len, "out")?;
        out.fill(0.0);
        flatten_into(&v, out);
        Ok(())
    })
}

/// Sets the adiabatic top layer of `state` to its fixed point, in place.
///
/// # Safety
/// `state` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ham_equilibrate_top(network: *const HamNetwork, state: *mut f64, len: usize) -> HamStatus {
    guard(|| {
        let n = net(network)?;
        let buf = output(state, len, "state")?;
        let s = unflatten(&n.spec, buf)?;
        let eq = ham_core::equilibrate_top_layer(&n.spec, &s)?;
        flatten_into(&eq.layers, buf);
        Ok(())
    })
}

/// Relaxes `state` in place. `cfg` may be null for the defaults; `result`
/// may be null.
///
/// # Safety
/// `state` must hold `len` writable doubles; `cfg` and `result` must be
/// null or valid.
#[no_mangle]
pub unsafe extern "C" fn ham_relax(
    network: *const HamNetwork,
    state: *mut f64,
    len: usize,
    cfg: *const HamIntegrator,
    result: *mut HamRelaxResult,
) -> HamStatus {
    guard(|| {
        let n = net(network)?;
        let buf = output(state, len, "state")?;
        let s = unflatten(&n.spec, buf)?;
        let out = ham_core::dynamics::relax_endpoints(&n.spec, &s, &integrator(&n.spec, cfg)?)?;
        flatten_into(&out.state.layers, buf);
        if let Some(r) = result.as_mut() {
            let rows = &out.trace.rows;
            *r = HamRelaxResult {
                converged: out.converged as u8,
                steps: out.steps,
                energy_initial: rows[0].energy,
                energy_final: rows[rows.len() - 1].energy,
            };
        }
        Ok(())
    })
}

/// Retrieves from `cue` (input layer; hidden layers start at zero), writes
/// the relaxed input layer to `retrieved` and scores it against `target`,
/// or against the cue when `target` is null.
///
/// # Safety
/// `cue`, `target` (unless null) and `retrieved` must each hold `len`
/// doubles; `cfg` may be null; `report` may be null.
#[no_mangle]
pub unsafe extern "C" fn ham_retrieve(
    network: *const HamNetwork,
    cue: *const f64,
    target: *const f64,
    len: usize,
    cfg: *const HamIntegrator,
    retrieved: *mut f64,
    report: *mut HamRecallReport,
) -> HamStatus {
    guard(|| {
        let n = net(network)?;
        check_len(n.spec.layers[0].len(), len, "input layer buffer")?;
        let cue = input(cue, len, "cue")?;
        let target = if target.is_null() {
            None
        } else {
            Some(input(target, len, "target")?)
        };
        let (x, rep) = memory::retrieve(&n.spec, cue, target, &integrator(&n.spec, cfg)?)?;
        output(retrieved, len, "retrieved")?.copy_from_slice(&x);
        if let Some(r) = report.as_mut() {
            *r = HamRecallReport {
                overlap: rep.overlap,
                bit_error: rep.bit_error,
                converged: rep.converged as u8,
                steps: rep.steps,
                energy_initial: rep.energy_initial,
                energy_final: rep.energy_final,
            };
        }
        Ok(())
    })
}

/// Binary container bytes of a network. On success `*bytes` owns `*len`
/// bytes that must be released with [`ham_bytes_free`].
///
/// # Safety
/// `bytes` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ham_network_to_bytes(
    network: *const HamNetwork,
    bytes: *mut *mut u8,
    len: *mut usize,
) -> HamStatus {
    guard(|| {
        let n = net(network)?;
        if bytes.is_null() || len.is_null() {
            return Err(null("bytes/len"));
        }
        let data = container::encode(&n.spec).into_boxed_slice();
        *len = data.len();
        *bytes = Box::into_raw(data).cast();
        Ok(())
    })
}

/// Releases a buffer from [`ham_network_to_bytes`]. Null is ignored.
///
/// # Safety
/// `bytes`/`len` must be exactly what [`ham_network_to_bytes`] returned.
#[no_mangle]
pub unsafe extern "C" fn ham_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(bytes, len)));
    }
}
