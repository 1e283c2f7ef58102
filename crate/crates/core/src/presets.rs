//! Ready-made architectures.
//!
//! The three reference stacks (one softmax hidden layer; two dense softmax
//! hidden layers; a convolutional softmax layer under a dense softmax layer)
//! and a random-network generator used by the test suites and the CLI.

use rand::Rng;

use crate::lagrangian::{Elementwise, LayerLagrangian};
use crate::rng::{self, HamRng};
use crate::topology::{feature_map_extent, ConnectionSpec, ConvKernel, LayerSpec, NetworkSpec, Shape};

/// Quadratic input layer under a log-sum-exp hidden layer.
///
/// `memories` holds one row per hidden unit (row-major `[hidden × input]`).
pub fn one_hidden_layer(
    input: Shape,
    hidden: usize,
    memories: Vec<f64>,
    beta: f64,
    taus: [f64; 2],
) -> NetworkSpec {
    NetworkSpec::new(
        vec![
            LayerSpec::new("input", input, LayerLagrangian::QUADRATIC, taus[0]),
            LayerSpec::new("hidden", Shape::Flat(hidden), LayerLagrangian::log_sum_exp(beta), taus[1]),
        ],
        vec![ConnectionSpec::dense(0, hidden, input.len(), memories)],
    )
}

/// Quadratic input, then two dense log-sum-exp layers.
///
/// `xi` is `[n2 × n1]`, `psi` is `[n3 × n2]`.
#[allow(clippy::too_many_arguments)]
pub fn two_dense_hidden(
    n1: usize,
    n2: usize,
    n3: usize,
    xi: Vec<f64>,
    psi: Vec<f64>,
    beta2: f64,
    beta3: f64,
    taus: [f64; 3],
) -> NetworkSpec {
    NetworkSpec::new(
        vec![
            LayerSpec::new("x", Shape::Flat(n1), LayerLagrangian::QUADRATIC, taus[0]),
            LayerSpec::new("y", Shape::Flat(n2), LayerLagrangian::log_sum_exp(beta2), taus[1]),
            LayerSpec::new("z", Shape::Flat(n3), LayerLagrangian::log_sum_exp(beta3), taus[2]),
        ],
        vec![
            ConnectionSpec::dense(0, n2, n1, xi),
            ConnectionSpec::dense(1, n3, n2, psi),
        ],
    )
}

/// Geometry of the convolutional reference stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvStack {
    pub image: usize,
    pub in_channels: usize,
    pub window: usize,
    pub stride: usize,
    pub out_channels: usize,
    pub top: usize,
    pub beta2: f64,
    pub beta3: f64,
    pub taus: [f64; 3],
}

impl ConvStack {
    pub fn feature_extent(&self) -> usize {
        feature_map_extent(self.image, self.window, self.stride).expect("window fits the image")
    }

    pub fn feature_len(&self) -> usize {
        let e = self.feature_extent();
        e * e * self.out_channels
    }

    /// Builds the network from a `[w, w, c_in, c_out]` kernel and a
    /// `[top × L̃² c_out]` dense matrix.
    pub fn build(&self, kernel: Vec<f64>, psi: Vec<f64>) -> NetworkSpec {
        let e = self.feature_extent();
        NetworkSpec::new(
            vec![
                LayerSpec::new(
                    "X",
                    Shape::map(self.image, self.image, self.in_channels),
                    LayerLagrangian::QUADRATIC,
                    self.taus[0],
                ),
                LayerSpec::new(
                    "Y",
                    Shape::map(e, e, self.out_channels),
                    LayerLagrangian::channel_log_sum_exp(self.beta2),
                    self.taus[1],
                ),
                LayerSpec::new("Z", Shape::Flat(self.top), LayerLagrangian::log_sum_exp(self.beta3), self.taus[2]),
            ],
            vec![
                ConnectionSpec::conv(
                    0,
                    ConvKernel {
                        size: self.window,
                        in_channels: self.in_channels,
                        out_channels: self.out_channels,
                        data: kernel,
                    },
                    self.stride,
                ),
                ConnectionSpec::dense(1, self.top, self.feature_len(), psi),
            ],
        )
    }
}

/// Knobs for [`random_network`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomNetOptions {
    pub min_layers: usize,
    pub max_layers: usize,
    /// Weights are drawn from `N(0, (scale / √fan_in)²)`.
    pub weight_scale: f64,
    pub tau_range: (f64, f64),
    pub beta_range: (f64, f64),
    /// Make the top layer adiabatic (`τ = 0`).
    pub adiabatic_top: bool,
}

impl Default for RandomNetOptions {
    fn default() -> Self {
        RandomNetOptions {
            min_layers: 2,
            max_layers: 5,
            weight_scale: 0.8,
            tau_range: (0.5, 2.0),
            beta_range: (0.5, 3.0),
            adiabatic_top: false,
        }
    }
}

fn uniform(rng: &mut HamRng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_lagrangian(rng: &mut HamRng, shape: &Shape, opts: &RandomNetOptions) -> LayerLagrangian {
    let beta = uniform(rng, opts.beta_range);
    let map = matches!(shape, Shape::Map { .. });
    match rng.random_range(0..if map { 6 } else { 5 }) {
        0 => LayerLagrangian::QUADRATIC,
        1 => LayerLagrangian::log_sum_exp(beta),
        2 => LayerLagrangian::elementwise(Elementwise::Tanh),
        3 => LayerLagrangian::elementwise(Elementwise::Relu),
        4 => LayerLagrangian::elementwise(Elementwise::Identity),
        _ => LayerLagrangian::channel_log_sum_exp(beta),
    }
}

/// A random valid network mixing dense, conv and average-pool connections
/// and every Lagrangian kind.
pub fn random_network(seed: u64, opts: &RandomNetOptions) -> NetworkSpec {
    let mut r = rng::rng(seed);
    let depth = r.random_range(opts.min_layers..=opts.max_layers);
    let mut shapes = Vec::with_capacity(depth);
    shapes.push(if r.random_bool(0.6) {
        let side = r.random_range(4..=7);
        Shape::map(side, side, r.random_range(1..=2))
    } else {
        Shape::Flat(r.random_range(2..=6))
    });
    let mut connections = Vec::with_capacity(depth - 1);
    for a in 1..depth {
        let below = shapes[a - 1];
        let (shape, conn) = match below {
            Shape::Map {
                height,
                channels,
                ..
            } if height >= 2 && r.random_bool(0.7) => {
                if r.random_bool(0.6) {
                    let w = r.random_range(1..=height.min(3));
                    let s = r.random_range(1..=2);
                    let c_out = r.random_range(1..=3);
                    let e = feature_map_extent(height, w, s).expect("window fits");
                    let fan_in = (w * w * channels) as f64;
                    let data = rng::gaussian(&mut r, w * w * channels * c_out, opts.weight_scale / fan_in.sqrt());
                    (
                        Shape::map(e, e, c_out),
                        ConnectionSpec::conv(
                            a - 1,
                            ConvKernel {
                                size: w,
                                in_channels: channels,
                                out_channels: c_out,
                                data,
                            },
                            s,
                        ),
                    )
                } else {
                    let p = r.random_range(1..=2.min(height));
                    let s = if r.random_bool(0.5) { p } else { 1 };
                    let e = feature_map_extent(height, p, s).expect("window fits");
                    (Shape::map(e, e, channels), ConnectionSpec::avg_pool(a - 1, p, s))
                }
            }
            _ => {
                let n = r.random_range(2..=6);
                let fan_in = below.len() as f64;
                let data = rng::gaussian(&mut r, n * below.len(), opts.weight_scale / fan_in.sqrt());
                (Shape::Flat(n), ConnectionSpec::dense(a - 1, n, below.len(), data))
            }
        };
        shapes.push(shape);
        connections.push(conn);
    }
    let layers = shapes
        .iter()
        .enumerate()
        .map(|(a, shape)| {
            let lagrangian = random_lagrangian(&mut r, shape, opts);
            let tau = if opts.adiabatic_top && a + 1 == depth {
                0.0
            } else {
                uniform(&mut r, opts.tau_range)
            };
            LayerSpec::new(format!("l{}", a + 1), *shape, lagrangian, tau)
        })
        .collect();
    NetworkSpec::new(layers, connections)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_networks_validate() {
        for seed in 0..200 {
            let spec = random_network(seed, &RandomNetOptions::default());
            assert!(spec.validate().is_ok(), "seed {seed}: {:?}", spec.validate());
            assert!((2..=5).contains(&spec.layers.len()));
        }
    }

    #[test]
    fn random_networks_cover_every_connection_kind() {
        let mut kinds = std::collections::BTreeSet::new();
        for seed in 0..50 {
            for c in random_network(seed, &RandomNetOptions::default()).connections {
                kinds.insert(c.kind_name());
            }
        }
        assert_eq!(kinds.len(), 3, "{kinds:?}");
    }

    #[test]
    fn conv_stack_shapes() {
        let g = ConvStack {
            image: 8,
            in_channels: 1,
            window: 3,
            stride: 1,
            out_channels: 2,
            top: 4,
            beta2: 1.0,
            beta3: 1.0,
            taus: [1.0, 0.1, 0.0],
        };
        assert_eq!(g.feature_extent(), 6);
        let spec = g.build(vec![0.0; 18], vec![0.0; 4 * 72]);
        assert!(spec.validate().is_ok());
    }
}
