//! Continuous-time relaxation.
//!
//! Layer `A` obeys `τ_A ẋ^A = backward(g^{A+1}) + forward(g^{A−1}) − x^A`
//! with zero activations outside the stack. A top layer with `τ = 0` is not
//! integrated; it is held at its own fixed point `x^top = forward(g^{top−1})`
//! after every state update.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::energy::{self, EnergyBreakdown};
use crate::error::{HamError, Result};
use crate::topology::NetworkSpec;

/// Energy increases smaller than this (relative to `max(1, |E|)`) are treated
/// as round-off by the adaptive controller.
pub const ENERGY_ROUNDOFF: f64 = 1e-13;

/// Maximum number of step halvings; the smallest trial step is `dt / 2^10`.
pub const MAX_HALVINGS: u32 = 10;

/// Per-layer activities at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<Vec<f64>>,
    pub t: f64,
}

impl NetworkState {
    pub fn new(layers: Vec<Vec<f64>>) -> Self {
        NetworkState { layers, t: 0.0 }
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        NetworkState::new(spec.layers.iter().map(|l| vec![0.0; l.len()]).collect())
    }

    /// Input layer set to `cue`, every hidden layer at zero.
    pub fn with_input(spec: &NetworkSpec, cue: &[f64]) -> Result<Self> {
        let mut s = NetworkState::zeros(spec);
        if cue.len() != s.layers[0].len() {
            return Err(HamError::ShapeMismatch {
                context: format!("cue for input layer '{}'", spec.layers[0].name),
                expected: s.layers[0].len(),
                found: cue.len(),
            });
        }
        s.layers[0].copy_from_slice(cue);
        Ok(s)
    }

    pub fn input(&self) -> &[f64] {
        &self.layers[0]
    }

    /// Euclidean norm of every layer.
    pub fn norms(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

pub(crate) fn check_state(spec: &NetworkSpec, state: &NetworkState) -> Result<()> {
    if state.layers.len() != spec.layers.len() {
        return Err(HamError::ShapeMismatch {
            context: "number of layers in state".into(),
            expected: spec.layers.len(),
            found: state.layers.len(),
        });
    }
    for (layer, x) in spec.layers.iter().zip(&state.layers) {
        if x.len() != layer.len() {
            return Err(HamError::ShapeMismatch {
                context: format!("layer '{}' with shape {}", layer.name, layer.shape),
                expected: layer.len(),
                found: x.len(),
            });
        }
    }
    Ok(())
}

fn check_finite(spec: &NetworkSpec, state: &NetworkState) -> Result<()> {
    for (layer, x) in spec.layers.iter().zip(&state.layers) {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HamError::NonFinite {
                layer: layer.name.clone(),
            });
        }
    }
    Ok(())
}

/// Activations of every layer. Assumes a checked state.
pub(crate) fn activations(spec: &NetworkSpec, state: &NetworkState) -> Vec<Vec<f64>> {
    spec.layers
        .iter()
        .zip(&state.layers)
        .map(|(layer, x)| {
            let mut g = vec![0.0; x.len()];
            layer.lagrangian.activations_into(&layer.shape, x, &mut g);
            g
        })
        .collect()
}

/// Total synaptic input to every layer from the given activations.
pub(crate) fn drives(spec: &NetworkSpec, g: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut d: Vec<Vec<f64>> = spec.layers.iter().map(|l| vec![0.0; l.len()]).collect();
    for c in &spec.connections {
        let lower = &spec.layers[c.lower].shape;
        let upper = &spec.layers[c.upper].shape;
        c.forward_acc(lower, upper, &g[c.lower], &mut d[c.upper]);
        c.backward_acc(lower, upper, &g[c.upper], &mut d[c.lower]);
    }
    d
}

/// The fixed-point value of the top layer given the rest of the state.
pub(crate) fn top_drive(spec: &NetworkSpec, state: &NetworkState) -> Result<Vec<f64>> {
    let top = spec.top();
    let c = spec.connection_below(top).ok_or_else(|| {
        HamError::InvalidArgument("the top layer has no connection below it".into())
    })?;
    let below = &spec.layers[c.lower];
    let mut g = vec![0.0; below.len()];
    below
        .lagrangian
        .activations_into(&below.shape, &state.layers[c.lower], &mut g);
    let mut out = vec![0.0; spec.layers[top].len()];
    c.forward_acc(&below.shape, &spec.layers[top].shape, &g, &mut out);
    Ok(out)
}

/// `dx^A/dt` for every layer. An adiabatic top layer gets a zero tensor.
pub fn velocity(spec: &NetworkSpec, state: &NetworkState) -> Result<Vec<Vec<f64>>> {
    check_state(spec, state)?;
    let top = spec.top();
    for (a, layer) in spec.layers.iter().enumerate() {
        if layer.tau == 0.0 && a != top {
            return Err(HamError::ZeroTauBelowTop {
                layer: layer.name.clone(),
            });
        }
    }
    Ok(velocity_unchecked(spec, state))
}

fn velocity_unchecked(spec: &NetworkSpec, state: &NetworkState) -> Vec<Vec<f64>> {
    let g = activations(spec, state);
    let mut d = drives(spec, &g);
    for ((layer, x), da) in spec.layers.iter().zip(&state.layers).zip(d.iter_mut()) {
        if layer.tau == 0.0 {
            da.fill(0.0);
            continue;
        }
        let inv = 1.0 / layer.tau;
        for (v, &xi) in da.iter_mut().zip(x) {
            *v = (*v - xi) * inv;
        }
    }
    d
}

/// Sets an adiabatic top layer to its closed-form fixed point.
pub fn equilibrate_top_layer(spec: &NetworkSpec, state: &NetworkState) -> Result<NetworkState> {
    check_state(spec, state)?;
    let top = spec.layers.last().expect("non-empty network");
    if top.tau != 0.0 {
        return Err(HamError::NotAdiabatic {
            layer: top.name.clone(),
            tau: top.tau,
        });
    }
    let mut out = state.clone();
    equilibrate_in_place(spec, &mut out)?;
    Ok(out)
}

fn equilibrate_in_place(spec: &NetworkSpec, state: &mut NetworkState) -> Result<()> {
    let z = top_drive(spec, state)?;
    let top = spec.top();
    state.layers[top] = z;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    /// Halve the step while the energy increases.
    pub adaptive: bool,
    /// Relaxation stops once `max |dx/dt|` falls below this.
    pub convergence_eps: f64,
    pub max_steps: usize,
    /// Hold the input layer fixed. Off in the standard retrieval protocol.
    pub clamp_input: bool,
}

impl IntegratorConfig {
    /// Defaults for `spec`: Euler with `dt = 0.1 · min τ` over layers with
    /// `τ > 0`, adaptive halving, `eps = 1e-8`, at most 10⁵ steps.
    pub fn for_spec(spec: &NetworkSpec) -> Self {
        let min_tau = spec
            .layers
            .iter()
            .map(|l| l.tau)
            .filter(|&t| t > 0.0)
            .fold(f64::INFINITY, f64::min);
        let dt = if min_tau.is_finite() { 0.1 * min_tau } else { 0.1 };
        IntegratorConfig {
            method: Method::Euler,
            dt,
            adaptive: true,
            convergence_eps: 1e-8,
            max_steps: 100_000,
            clamp_input: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(HamError::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.convergence_eps.is_finite() && self.convergence_eps > 0.0) {
            return Err(HamError::InvalidArgument(format!(
                "convergence_eps must be positive, got {}",
                self.convergence_eps
            )));
        }
        Ok(())
    }
}

/// Result of one accepted integration step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: NetworkState,
    pub dt: f64,
    /// The energy still rose at the smallest trial step.
    pub flagged: bool,
}

// Velocity seen by the integrator: the adiabatic top layer is re-equilibrated
// first, and a clamped input layer does not move.
fn field(spec: &NetworkSpec, state: &NetworkState, clamp: bool) -> Result<Vec<Vec<f64>>> {
    let mut v = if spec.is_adiabatic() {
        let mut s = state.clone();
        equilibrate_in_place(spec, &mut s)?;
        velocity_unchecked(spec, &s)
    } else {
        velocity_unchecked(spec, state)
    };
    if clamp {
        v[0].fill(0.0);
    }
    Ok(v)
}

fn axpy(state: &NetworkState, h: f64, v: &[Vec<f64>]) -> NetworkState {
    NetworkState {
        layers: state
            .layers
            .iter()
            .zip(v)
            .map(|(x, va)| x.iter().zip(va).map(|(a, b)| a + h * b).collect())
            .collect(),
        t: state.t + h,
    }
}

fn trial_step(
    spec: &NetworkSpec,
    state: &NetworkState,
    k1: &[Vec<f64>],
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<NetworkState> {
    let mut next = match cfg.method {
        Method::Euler => axpy(state, dt, k1),
        Method::Rk4 => {
            let k2 = field(spec, &axpy(state, 0.5 * dt, k1), cfg.clamp_input)?;
            let k3 = field(spec, &axpy(state, 0.5 * dt, &k2), cfg.clamp_input)?;
            let k4 = field(spec, &axpy(state, dt, &k3), cfg.clamp_input)?;
            let combined: Vec<Vec<f64>> = (0..k1.len())
                .map(|a| {
                    (0..k1[a].len())
                        .map(|i| (k1[a][i] + 2.0 * k2[a][i] + 2.0 * k3[a][i] + k4[a][i]) / 6.0)
                        .collect()
                })
                .collect();
            axpy(state, dt, &combined)
        }
    };
    next.t = state.t + dt;
    if spec.is_adiabatic() {
        equilibrate_in_place(spec, &mut next)?;
    }
    check_finite(spec, &next)?;
    Ok(next)
}

fn validate_for_dynamics(spec: &NetworkSpec, state: &NetworkState, cfg: &IntegratorConfig) -> Result<()> {
    spec.validate().map_err(HamError::InvalidNetwork)?;
    cfg.check()?;
    check_state(spec, state)?;
    check_finite(spec, state)
}

/// One integration step from `state`.
pub fn step(spec: &NetworkSpec, state: &NetworkState, cfg: &IntegratorConfig) -> Result<NetworkState> {
    validate_for_dynamics(spec, state, cfg)?;
    let mut start = state.clone();
    if spec.is_adiabatic() {
        equilibrate_in_place(spec, &mut start)?;
    }
    let k1 = field(spec, &start, cfg.clamp_input)?;
    Ok(step_from(spec, &start, &k1, cfg)?.state)
}

// `start` must already be equilibrated; `k1` is its field.
fn step_from(
    spec: &NetworkSpec,
    start: &NetworkState,
    k1: &[Vec<f64>],
    cfg: &IntegratorConfig,
) -> Result<StepOutcome> {
    let mut dt = cfg.dt;
    let mut next = trial_step(spec, start, k1, dt, cfg)?;
    if !cfg.adaptive {
        return Ok(StepOutcome {
            state: next,
            dt,
            flagged: false,
        });
    }
    let e0 = energy::global_energy(spec, start)?.total;
    let tol = ENERGY_ROUNDOFF * e0.abs().max(1.0);
    let mut halvings = 0;
    loop {
        let e1 = energy::global_energy(spec, &next)?.total;
        if !e1.is_finite() {
            return Err(HamError::EnergyOverflow { t: next.t });
        }
        if e1 <= e0 + tol {
            return Ok(StepOutcome {
                state: next,
                dt,
                flagged: false,
            });
        }
        if halvings == MAX_HALVINGS {
            log::debug!("energy rose by {:e} at the smallest step {dt:e}", e1 - e0);
            return Ok(StepOutcome {
                state: next,
                dt,
                flagged: true,
            });
        }
        halvings += 1;
        dt *= 0.5;
        next = trial_step(spec, start, k1, dt, cfg)?;
    }
}

/// One row of a relaxation trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub energy: f64,
    /// Analytic `dE/dt` over the integrated layers.
    pub energy_rate: f64,
    pub max_velocity: f64,
    pub norms: Vec<f64>,
    pub flagged: bool,
    pub breakdown: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationTrace {
    pub layer_names: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl RelaxationTrace {
    /// Writes `t,energy,dE_dt,max_velocity,norm_<layer>...`, optionally
    /// followed by `legendre_<layer>...` and `interaction_<a>_<b>...`.
    pub fn write_csv<W: Write>(&self, mut w: W, with_breakdown: bool) -> std::io::Result<()> {
        write!(w, "t,energy,dE_dt,max_velocity")?;
        for n in &self.layer_names {
            write!(w, ",norm_{n}")?;
        }
        if with_breakdown {
            for n in &self.layer_names {
                write!(w, ",legendre_{n}")?;
            }
            if let Some(row) = self.rows.first() {
                for i in 0..row.breakdown.interaction.len() {
                    write!(w, ",interaction_{}_{}", i + 1, i + 2)?;
                }
            }
        }
        writeln!(w)?;
        for r in &self.rows {
            write!(w, "{},{},{},{}", r.t, r.energy, r.energy_rate, r.max_velocity)?;
            for n in &r.norms {
                write!(w, ",{n}")?;
            }
            if with_breakdown {
                for v in r.breakdown.legendre.iter().chain(&r.breakdown.interaction) {
                    write!(w, ",{v}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Relaxation {
    pub state: NetworkState,
    pub trace: RelaxationTrace,
    pub converged: bool,
    pub steps: usize,
}

fn max_abs(v: &[Vec<f64>]) -> f64 {
    v.iter()
        .flat_map(|x| x.iter())
        .fold(0.0f64, |m, a| m.max(a.abs()))
}

fn row(spec: &NetworkSpec, state: &NetworkState, v: &[Vec<f64>], flagged: bool) -> Result<TraceRow> {
    let breakdown = energy::global_energy(spec, state)?;
    if !breakdown.total.is_finite() {
        return Err(HamError::EnergyOverflow { t: state.t });
    }
    Ok(TraceRow {
        t: state.t,
        energy: breakdown.total,
        energy_rate: energy::rate_from_velocity(spec, state, v),
        max_velocity: max_abs(v),
        norms: state.norms(),
        flagged,
        breakdown,
    })
}

/// Integrates until `max |dx/dt| < eps` or `max_steps` steps have been taken,
/// recording a trace row for the initial state and every accepted step.
pub fn relax(spec: &NetworkSpec, state: &NetworkState, cfg: &IntegratorConfig) -> Result<Relaxation> {
    relax_impl(spec, state, cfg, true)
}

/// Like [`relax`], but the trace keeps only the first and last rows.
pub fn relax_endpoints(spec: &NetworkSpec, state: &NetworkState, cfg: &IntegratorConfig) -> Result<Relaxation> {
    relax_impl(spec, state, cfg, false)
}

fn relax_impl(
    spec: &NetworkSpec,
    state: &NetworkState,
    cfg: &IntegratorConfig,
    record: bool,
) -> Result<Relaxation> {
    validate_for_dynamics(spec, state, cfg)?;
    let mut current = state.clone();
    if spec.is_adiabatic() {
        equilibrate_in_place(spec, &mut current)?;
    }
    let mut v = field(spec, &current, cfg.clamp_input)?;
    let mut rows = vec![row(spec, &current, &v, false)?];
    let mut steps = 0;
    let mut converged = max_abs(&v) < cfg.convergence_eps;
    let mut any_flagged = false;
    while !converged && steps < cfg.max_steps {
        let out = step_from(spec, &current, &v, cfg)?;
        current = out.state;
        steps += 1;
        any_flagged |= out.flagged;
        v = field(spec, &current, cfg.clamp_input)?;
        converged = max_abs(&v) < cfg.convergence_eps;
        if record {
            rows.push(row(spec, &current, &v, out.flagged)?);
        }
    }
    if !record && steps > 0 {
        rows.push(row(spec, &current, &v, any_flagged)?);
    }
    Ok(Relaxation {
        state: current,
        trace: RelaxationTrace {
            layer_names: spec.layers.iter().map(|l| l.name.clone()).collect(),
            rows,
        },
        converged,
        steps,
    })
}
