//! Global energy, its analytic time derivative, and the adiabatic reduced form.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, NetworkState};
use crate::error::{HamError, Result};
use crate::lagrangian::{dot, LagrangianKind};
use crate::topology::NetworkSpec;

/// Relative tolerance for deciding that the top layer sits at its own fixed
/// point.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-9;

/// Energy split into its per-layer and per-connection parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `Σ x g − L` for each layer.
    pub legendre: Vec<f64>,
    /// `−⟨g_upper, forward(g_lower)⟩` for each connection, in spec order.
    pub interaction: Vec<f64>,
    pub total: f64,
}

/// Energy of `state` under `spec`.
pub fn global_energy(spec: &NetworkSpec, state: &NetworkState) -> Result<EnergyBreakdown> {
    dynamics::check_state(spec, state)?;
    let g = dynamics::activations(spec, state);
    Ok(breakdown_from(spec, state, &g))
}

pub(crate) fn breakdown_from(spec: &NetworkSpec, state: &NetworkState, g: &[Vec<f64>]) -> EnergyBreakdown {
    let legendre: Vec<f64> = spec
        .layers
        .iter()
        .zip(&state.layers)
        .zip(g)
        .map(|((layer, x), ga)| {
            let l = layer
                .lagrangian
                .value(&layer.shape, x)
                .expect("state checked against spec");
            dot(x, ga) - l
        })
        .collect();
    let interaction: Vec<f64> = spec
        .connections
        .iter()
        .map(|c| {
            let lower = &spec.layers[c.lower].shape;
            let upper = &spec.layers[c.upper].shape;
            let mut m = vec![0.0; upper.len()];
            c.forward_acc(lower, upper, &g[c.lower], &mut m);
            -dot(&g[c.upper], &m)
        })
        .collect();
    let total = legendre.iter().sum::<f64>() + interaction.iter().sum::<f64>();
    EnergyBreakdown {
        legendre,
        interaction,
        total,
    }
}

/// `dE/dt = −Σ_A τ_A ẋᵀ ∇²L^A ẋ` at `state`. Requires every `τ > 0`.
pub fn energy_rate(spec: &NetworkSpec, state: &NetworkState) -> Result<f64> {
    if let Some(layer) = spec.layers.iter().find(|l| l.tau == 0.0) {
        return Err(HamError::AdiabaticLayer {
            layer: layer.name.clone(),
        });
    }
    let v = dynamics::velocity(spec, state)?;
    Ok(rate_from_velocity(spec, state, &v))
}

/// The rate restricted to layers with `τ > 0`, using precomputed velocities.
/// Layers with zero velocity (clamped, or an equilibrated adiabatic top)
/// contribute nothing.
pub(crate) fn rate_from_velocity(spec: &NetworkSpec, state: &NetworkState, v: &[Vec<f64>]) -> f64 {
    -spec
        .layers
        .iter()
        .zip(&state.layers)
        .zip(v)
        .filter(|((layer, _), _)| layer.tau > 0.0)
        .map(|((layer, x), va)| {
            layer.tau
                * layer
                    .lagrangian
                    .hessian_quadratic_form(&layer.shape, x, va)
                    .expect("state checked against spec")
        })
        .sum::<f64>()
}

/// Energy with the adiabatic top layer eliminated.
///
/// When the top layer sits at `z = forward(g_below)`, its Legendre term
/// `⟨z, p⟩ − L(z)` and its interaction term `−⟨p, z⟩` cancel except for
/// `−L(z)`, so the energy needs no top-layer activations at all.
pub fn reduced_energy_adiabatic(spec: &NetworkSpec, state: &NetworkState) -> Result<f64> {
    dynamics::check_state(spec, state)?;
    let top = spec.top();
    let top_layer = &spec.layers[top];
    if top_layer.tau != 0.0 {
        return Err(HamError::NotAdiabatic {
            layer: top_layer.name.clone(),
            tau: top_layer.tau,
        });
    }
    let residual = top_residual(spec, state)?;
    if residual > EQUILIBRIUM_TOLERANCE {
        return Err(HamError::NotEquilibrated {
            layer: top_layer.name.clone(),
            residual,
        });
    }
    let g = dynamics::activations(spec, state);
    let mut e = 0.0;
    for (a, layer) in spec.layers.iter().enumerate().take(top) {
        let x = &state.layers[a];
        e += dot(x, &g[a]) - layer.lagrangian.value(&layer.shape, x)?;
    }
    for c in spec.connections.iter().filter(|c| c.upper != top) {
        let lower = &spec.layers[c.lower].shape;
        let upper = &spec.layers[c.upper].shape;
        let mut m = vec![0.0; upper.len()];
        c.forward_acc(lower, upper, &g[c.lower], &mut m);
        e -= dot(&g[c.upper], &m);
    }
    e -= top_layer.lagrangian.value(&top_layer.shape, &state.layers[top])?;
    Ok(e)
}

/// Relative residual `max|z − forward(g_below)| / (1 + max|forward(g_below)|)`
/// of the top layer's own fixed-point equation.
pub fn top_residual(spec: &NetworkSpec, state: &NetworkState) -> Result<f64> {
    let top = spec.top();
    if top == 0 {
        return Ok(state.layers[0].iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let target = dynamics::top_drive(spec, state)?;
    let diff = state.layers[top]
        .iter()
        .zip(&target)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(diff / (1.0 + scale))
}

/// A state-independent lower bound on the energy, available when the input
/// layer is quadratic and every other layer is softmax-type.
///
/// Softmax activations lie in `[0, 1]`, so each hidden-hidden interaction is
/// at least `−⟨1, |W| 1⟩`, and the input layer's `½‖x‖² − ⟨x, Wᵀg⟩` is at
/// least `−½‖|W|ᵀ 1‖²`.
pub fn energy_lower_bound(spec: &NetworkSpec) -> Option<f64> {
    let first = spec.layers.first()?;
    if !matches!(first.lagrangian.kind(), LagrangianKind::Quadratic) {
        return None;
    }
    let mut bound = 0.0;
    for layer in &spec.layers[1..] {
        layer.lagrangian.groups(&layer.shape)?;
        bound += layer.lagrangian.legendre_lower_bound(&layer.shape)?;
    }
    for c in &spec.connections {
        let lower = &spec.layers[c.lower].shape;
        let upper = &spec.layers[c.upper].shape;
        let abs = c.abs();
        if c.lower == 0 {
            let mut col = vec![0.0; lower.len()];
            abs.backward_acc(lower, upper, &vec![1.0; upper.len()], &mut col);
            bound -= 0.5 * dot(&col, &col);
        } else {
            let mut m = vec![0.0; upper.len()];
            abs.forward_acc(lower, upper, &vec![1.0; lower.len()], &mut m);
            bound -= m.iter().sum::<f64>();
        }
    }
    Some(bound)
}
