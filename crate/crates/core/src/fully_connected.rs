//! The fully connected formulation: one symmetric weight matrix over all
//! neurons, a Lagrangian over all neurons, and a time constant per neuron.
//!
//! The Lagrangian is given as a list of blocks, each a contiguous run of
//! neurons with its own [`LayerLagrangian`]; its Hessian is block diagonal.
//! A layered network maps onto this form by placing each connection's
//! operator and its transpose in the off-diagonal blocks
//! ([`FullyConnectedNet::from_layered`]).

use crate::error::{HamError, Result};
use crate::lagrangian::{dot, LayerLagrangian};
use crate::topology::{NetworkSpec, Shape};

#[derive(Debug, Clone, PartialEq)]
pub struct FullyConnectedNet {
    pub size: usize,
    /// Symmetric, row-major `size × size`.
    pub weights: Vec<f64>,
    pub blocks: Vec<(Shape, LayerLagrangian)>,
    /// One positive time constant per neuron.
    pub taus: Vec<f64>,
}

impl FullyConnectedNet {
    pub fn new(
        weights: Vec<f64>,
        blocks: Vec<(Shape, LayerLagrangian)>,
        taus: Vec<f64>,
    ) -> Result<Self> {
        let size: usize = blocks.iter().map(|(s, _)| s.len()).sum();
        if weights.len() != size * size {
            return Err(HamError::ShapeMismatch {
                context: "fully connected weight matrix".into(),
                expected: size * size,
                found: weights.len(),
            });
        }
        if taus.len() != size {
            return Err(HamError::ShapeMismatch {
                context: "per-neuron time constants".into(),
                expected: size,
                found: taus.len(),
            });
        }
        if let Some(t) = taus.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(HamError::InvalidArgument(format!(
                "time constants must be positive, got {t}"
            )));
        }
        for i in 0..size {
            for j in 0..i {
                if weights[i * size + j] != weights[j * size + i] {
                    return Err(HamError::InvalidArgument(format!(
                        "weight matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        for (_, l) in &blocks {
            if let Some(m) = l.check() {
                return Err(HamError::InvalidArgument(m));
            }
        }
        Ok(FullyConnectedNet {
            size,
            weights,
            blocks,
            taus,
        })
    }

    /// Materialises a layered network as one symmetric matrix. Every
    /// connection operator is expanded column by column from its forward
    /// message. All layers need `τ > 0`.
    pub fn from_layered(spec: &NetworkSpec) -> Result<Self> {
        spec.validate().map_err(HamError::InvalidNetwork)?;
        let offsets: Vec<usize> = spec
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.len();
                Some(o)
            })
            .collect();
        let size: usize = spec.layers.iter().map(|l| l.len()).sum();
        let mut w = vec![0.0; size * size];
        for c in &spec.connections {
            let lower = &spec.layers[c.lower];
            let upper = &spec.layers[c.upper];
            let mut e = vec![0.0; lower.len()];
            for j in 0..lower.len() {
                e[j] = 1.0;
                let col = c.forward(&lower.shape, &upper.shape, &e)?;
                e[j] = 0.0;
                for (i, v) in col.into_iter().enumerate() {
                    let (r, k) = (offsets[c.upper] + i, offsets[c.lower] + j);
                    w[r * size + k] = v;
                    w[k * size + r] = v;
                }
            }
        }
        let mut taus = Vec::with_capacity(size);
        for l in &spec.layers {
            if l.tau == 0.0 {
                return Err(HamError::AdiabaticLayer {
                    layer: l.name.clone(),
                });
            }
            taus.extend(std::iter::repeat_n(l.tau, l.len()));
        }
        let blocks = spec.layers.iter().map(|l| (l.shape, l.lagrangian)).collect();
        FullyConnectedNet::new(w, blocks, taus)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.size {
            return Err(HamError::ShapeMismatch {
                context: "fully connected state".into(),
                expected: self.size,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn block_ranges(&self) -> impl Iterator<Item = (std::ops::Range<usize>, &Shape, &LayerLagrangian)> {
        self.blocks.iter().scan(0, |acc, (s, l)| {
            let r = *acc..*acc + s.len();
            *acc += s.len();
            Some((r, s, l))
        })
    }

    pub fn activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut g = vec![0.0; self.size];
        for (r, s, l) in self.block_ranges() {
            l.activations_into(s, &x[r.clone()], &mut g[r]);
        }
        Ok(g)
    }

    fn lagrangian(&self, x: &[f64]) -> Result<f64> {
        self.block_ranges().map(|(r, s, l)| l.value(s, &x[r])).sum()
    }

    fn hessian_vector_product(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (r, s, l) in self.block_ranges() {
            l.hessian_vector_product_into(s, &x[r.clone()], &v[r.clone()], &mut out[r]);
        }
        out
    }

    fn matvec(&self, g: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.size)
            .map(|row| dot(row, g))
            .collect()
    }

    /// `dx_I/dt = (Σ_J W_IJ g_J − x_I) / τ_I`.
    pub fn velocity(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.activations(x)?;
        Ok(self
            .matvec(&g)
            .into_iter()
            .zip(x)
            .zip(&self.taus)
            .map(|((d, xi), t)| (d - xi) / t)
            .collect())
    }

    /// `E = Σ x g − L − ½ gᵀ W g`.
    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        let g = self.activations(x)?;
        let wg = self.matvec(&g);
        Ok(dot(x, &g) - self.lagrangian(x)? - 0.5 * dot(&g, &wg))
    }

    /// `dE/dt = −Σ_{I,K} ẋ_I (τ_I ∂²L/∂x_I∂x_K) ẋ_K`.
    ///
    /// Non-positive whenever `diag(τ) ∇²L` has a positive semi-definite
    /// symmetric part, e.g. for additive Lagrangians or uniform `τ` within
    /// each block.
    pub fn energy_rate(&self, x: &[f64]) -> Result<f64> {
        let v = self.velocity(x)?;
        let scaled: Vec<f64> = v.iter().zip(&self.taus).map(|(a, t)| a * t).collect();
        let hv = self.hessian_vector_product(x, &scaled);
        Ok(-dot(&v, &hv))
    }
}
