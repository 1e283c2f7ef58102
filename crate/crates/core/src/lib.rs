//! Hierarchical associative memory.
//!
//! Layered recurrent networks whose layers are described by Lagrangian
//! functions. Activations are gradients of the Lagrangians, the connections
//! between consecutive layers are used in both directions (bottom-up and
//! top-down, as a linear operator and its adjoint), and the resulting
//! continuous-time dynamics descend a global energy.
//!
//! - [`lagrangian`]: per-layer Lagrangians, activations and Hessians
//! - [`topology`]: layers, dense/conv/pool connections, shape validation
//! - [`dynamics`]: velocity field, Euler/RK4 relaxation, adiabatic top layer
//! - [`energy`]: global energy, analytic `dE/dt`, reduced adiabatic energy
//! - [`fully_connected`]: the single symmetric-matrix formulation
//! - [`memory`]: pattern storage, corruption, retrieval, capacity sweeps
//! - [`trainer`]: denoising training by backpropagation through the unrolled dynamics
//! - [`container`]: binary and text network formats
//! - [`config`] and [`cli`]: the `ham` command-line front end

pub mod cli;
pub mod config;
pub mod container;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod fully_connected;
pub mod lagrangian;
pub mod memory;
pub mod patterns;
pub mod presets;
pub mod rng;
pub mod topology;
pub mod trainer;

pub use dynamics::{
    equilibrate_top_layer, relax, step, velocity, IntegratorConfig, Method, NetworkState,
    Relaxation, RelaxationTrace,
};
pub use energy::{energy_rate, global_energy, reduced_energy_adiabatic, EnergyBreakdown};
pub use error::{HamError, Result};
pub use lagrangian::{Elementwise, LagrangianKind, LayerLagrangian};
pub use topology::{
    feature_map_extent, ConnectionKind, ConnectionSpec, ConvKernel, LayerSpec, NetworkSpec, Shape,
    Violation,
};
