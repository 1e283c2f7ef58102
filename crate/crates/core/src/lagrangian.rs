//! Per-layer Lagrangian functions.
//!
//! A layer's activation vector is the gradient of its Lagrangian, and the
//! Hessian of the Lagrangian controls how fast the global energy falls. Every
//! kind here has a positive semi-definite Hessian, which is what makes the
//! relaxation dynamics a descent on the energy.
//!
//! Softmax-type kinds normalise over *groups* of neurons. For
//! [`LagrangianKind::LogSumExp`] the whole layer is one group; for
//! [`LagrangianKind::ChannelLogSumExp`] each spatial site of a map-shaped layer
//! is a group over its channels. Storage is row-major `(h, w, c)`, so every
//! group is a contiguous run of values.

use serde::{Deserialize, Serialize};

use crate::error::{HamError, Result};
use crate::topology::Shape;

/// Scalar profile `F` of an additive Lagrangian `L(x) = Σ F(x_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elementwise {
    /// `F(x) = x²/2`, activation `x`.
    Identity,
    /// `F(x) = log cosh x`, activation `tanh x`.
    Tanh,
    /// `F(x) = max(x, 0)²/2`, activation `max(x, 0)`.
    ///
    /// `F''` is taken as 1 for `x > 0` and 0 otherwise, so the subgradient
    /// choice at the kink is 0.
    Relu,
}

impl Elementwise {
    fn value(self, x: f64) -> f64 {
        match self {
            Elementwise::Identity => 0.5 * x * x,
            Elementwise::Tanh => log_cosh(x),
            Elementwise::Relu => {
                let p = x.max(0.0);
                0.5 * p * p
            }
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Elementwise::Identity => x,
            Elementwise::Tanh => x.tanh(),
            Elementwise::Relu => x.max(0.0),
        }
    }

    fn second_derivative(self, x: f64) -> f64 {
        match self {
            Elementwise::Identity => 1.0,
            Elementwise::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Elementwise::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Elementwise::Identity => "identity",
            Elementwise::Tanh => "tanh",
            Elementwise::Relu => "relu",
        }
    }
}

// log cosh x = |x| + log(1 + e^{-2|x|}) - log 2, stable for large |x|.
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LagrangianKind {
    /// `L = ½ Σ x²`; linear activations.
    Quadratic,
    /// `L = (1/β) log Σ exp(β x)` over the whole layer; softmax activations.
    LogSumExp { beta: f64 },
    /// Log-sum-exp over channels at each spatial site, summed over sites.
    ChannelLogSumExp { beta: f64 },
    /// Additive Lagrangian `Σ F(x_i)`.
    Elementwise { profile: Elementwise },
}

/// A Lagrangian bound to nothing in particular; callers pass the layer shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerLagrangian(pub LagrangianKind);

impl LayerLagrangian {
    pub const QUADRATIC: LayerLagrangian = LayerLagrangian(LagrangianKind::Quadratic);

    pub fn log_sum_exp(beta: f64) -> Self {
        LayerLagrangian(LagrangianKind::LogSumExp { beta })
    }

    pub fn channel_log_sum_exp(beta: f64) -> Self {
        LayerLagrangian(LagrangianKind::ChannelLogSumExp { beta })
    }

    pub fn elementwise(profile: Elementwise) -> Self {
        LayerLagrangian(LagrangianKind::Elementwise { profile })
    }

    pub fn kind(&self) -> &LagrangianKind {
        &self.0
    }

    /// Inverse temperature for softmax-type kinds.
    pub fn beta(&self) -> Option<f64> {
        match self.0 {
            LagrangianKind::LogSumExp { beta } | LagrangianKind::ChannelLogSumExp { beta } => {
                Some(beta)
            }
            _ => None,
        }
    }

    /// Returns a description of the problem if the parameters are out of range.
    pub fn check(&self) -> Option<String> {
        match self.beta() {
            Some(b) if !(b.is_finite() && b > 0.0) => {
                Some(format!("beta must be a positive finite number, got {b}"))
            }
            _ => None,
        }
    }

    /// Normalisation groups as `(count, size)`, for softmax-type kinds.
    pub fn groups(&self, shape: &Shape) -> Option<(usize, usize)> {
        match self.0 {
            LagrangianKind::LogSumExp { .. } => Some((1, shape.len())),
            LagrangianKind::ChannelLogSumExp { .. } => match *shape {
                Shape::Flat(n) => Some((1, n)),
                Shape::Map {
                    height,
                    width,
                    channels,
                } => Some((height * width, channels)),
            },
            _ => None,
        }
    }

    fn expect_len(&self, shape: &Shape, x: &[f64], what: &str) -> Result<()> {
        if x.len() != shape.len() {
            return Err(HamError::ShapeMismatch {
                context: format!("{what} of a {shape} layer"),
                expected: shape.len(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `L(x)`.
    pub fn value(&self, shape: &Shape, x: &[f64]) -> Result<f64> {
        self.expect_len(shape, x, "Lagrangian value")?;
        Ok(match self.0 {
            LagrangianKind::Quadratic => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            LagrangianKind::Elementwise { profile } => x.iter().map(|&v| profile.value(v)).sum(),
            LagrangianKind::LogSumExp { beta } | LagrangianKind::ChannelLogSumExp { beta } => {
                let (_, size) = self.groups(shape).expect("softmax kind");
                x.chunks(size).map(|g| log_sum_exp(beta, g)).sum()
            }
        })
    }

    /// Activations `g = ∂L/∂x`.
    pub fn activations(&self, shape: &Shape, x: &[f64]) -> Result<Vec<f64>> {
        self.expect_len(shape, x, "activations")?;
        let mut out = vec![0.0; x.len()];
        self.activations_into(shape, x, &mut out);
        Ok(out)
    }

    /// Unchecked variant writing into a caller-owned buffer of the same length.
    pub(crate) fn activations_into(&self, shape: &Shape, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), out.len());
        match self.0 {
            LagrangianKind::Quadratic => out.copy_from_slice(x),
            LagrangianKind::Elementwise { profile } => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = profile.derivative(v);
                }
            }
            LagrangianKind::LogSumExp { beta } | LagrangianKind::ChannelLogSumExp { beta } => {
                let (_, size) = self.groups(shape).expect("softmax kind");
                for (o, g) in out.chunks_mut(size).zip(x.chunks(size)) {
                    softmax_into(beta, g, o);
                }
            }
        }
    }

    /// `vᵀ (∂²L/∂x∂x) v`, evaluated from the analytic Hessian.
    pub fn hessian_quadratic_form(&self, shape: &Shape, x: &[f64], v: &[f64]) -> Result<f64> {
        self.expect_len(shape, x, "Hessian point")?;
        self.expect_len(shape, v, "Hessian direction")?;
        Ok(match self.0 {
            LagrangianKind::Quadratic => v.iter().map(|a| a * a).sum(),
            LagrangianKind::Elementwise { profile } => x
                .iter()
                .zip(v)
                .map(|(&xi, &vi)| profile.second_derivative(xi) * vi * vi)
                .sum(),
            LagrangianKind::LogSumExp { beta } | LagrangianKind::ChannelLogSumExp { beta } => {
                let (_, size) = self.groups(shape).expect("softmax kind");
                let mut f = vec![0.0; size];
                let mut total = 0.0;
                for (xg, vg) in x.chunks(size).zip(v.chunks(size)) {
                    softmax_into(beta, xg, &mut f);
                    // β (Σ f v² − (Σ f v)²) written as a weighted variance,
                    // which cannot go negative through cancellation.
                    let mean: f64 = f.iter().zip(vg).map(|(a, b)| a * b).sum();
                    let var: f64 = f
                        .iter()
                        .zip(vg)
                        .map(|(a, b)| a * (b - mean) * (b - mean))
                        .sum();
                    total += beta * var;
                }
                total
            }
        })
    }

    /// Hessian-vector product `(∂²L/∂x∂x) v`. The Hessian is symmetric, so
    /// this is also the transpose of the activation Jacobian applied to `v`.
    pub fn hessian_vector_product(&self, shape: &Shape, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.expect_len(shape, x, "Hessian point")?;
        self.expect_len(shape, v, "Hessian direction")?;
        let mut out = vec![0.0; x.len()];
        self.hessian_vector_product_into(shape, x, v, &mut out);
        Ok(out)
    }

    pub(crate) fn hessian_vector_product_into(
        &self,
        shape: &Shape,
        x: &[f64],
        v: &[f64],
        out: &mut [f64],
    ) {
        match self.0 {
            LagrangianKind::Quadratic => out.copy_from_slice(v),
            LagrangianKind::Elementwise { profile } => {
                for ((o, &xi), &vi) in out.iter_mut().zip(x).zip(v) {
                    *o = profile.second_derivative(xi) * vi;
                }
            }
            LagrangianKind::LogSumExp { beta } | LagrangianKind::ChannelLogSumExp { beta } => {
                let (_, size) = self.groups(shape).expect("softmax kind");
                for ((o, xg), vg) in out.chunks_mut(size).zip(x.chunks(size)).zip(v.chunks(size)) {
                    softmax_into(beta, xg, o);
                    let mean: f64 = o.iter().zip(vg).map(|(a, b)| a * b).sum();
                    for (oi, &vi) in o.iter_mut().zip(vg) {
                        *oi = beta * *oi * (vi - mean);
                    }
                }
            }
        }
    }

    /// Legendre transform `Σ x g − L` at `x`.
    pub fn legendre(&self, shape: &Shape, x: &[f64]) -> Result<f64> {
        let g = self.activations(shape, x)?;
        let l = self.value(shape, x)?;
        Ok(dot(x, &g) - l)
    }

    /// Lower bound of the Legendre term over all states: `-(groups/β) ln(size)`
    /// for softmax kinds, 0 otherwise.
    pub fn legendre_lower_bound(&self, shape: &Shape) -> Option<f64> {
        match self.0 {
            // x F'(x) - F(x) is minimised at x = 0 for all three profiles.
            LagrangianKind::Quadratic | LagrangianKind::Elementwise { .. } => Some(0.0),
            LagrangianKind::LogSumExp { beta } | LagrangianKind::ChannelLogSumExp { beta } => {
                let (count, size) = self.groups(shape).expect("softmax kind");
                Some(-(count as f64) * (size as f64).ln() / beta)
            }
        }
    }
}

/// `(1/β) log Σ exp(β x)`, with max subtraction.
pub fn log_sum_exp(beta: f64, x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = x.iter().map(|&v| (beta * (v - m)).exp()).sum();
    m + s.ln() / beta
}

/// Softmax of `β x` written into `out`.
pub fn softmax_into(beta: f64, x: &[f64], out: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (beta * (v - m)).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
