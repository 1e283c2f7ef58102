//! Network architecture: layers, inter-layer connections and shape checking.
//!
//! Each connection owns exactly one weight tensor. The bottom-up message is
//! the linear operator defined by that tensor and the top-down message is its
//! adjoint, so symmetric feedback holds by construction rather than by a
//! runtime comparison of two copies.
//!
//! Map-shaped activity is stored row-major as `(height, width, channels)`.
//! Convolution is unpadded cross-correlation (no kernel flip). Conv kernels
//! are stored row-major as `(w, w, c_in, c_out)` and dense weights as
//! `(rows = upper size, cols = lower size)`; dense connections read map
//! layers through the same row-major flattening.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HamError, Result};
use crate::lagrangian::LayerLagrangian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Flat(usize),
    Map {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl Shape {
    pub fn map(height: usize, width: usize, channels: usize) -> Self {
        Shape::Map {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Map {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(height, width, channels)` for map shapes.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        match *self {
            Shape::Flat(_) => None,
            Shape::Map {
                height,
                width,
                channels,
            } => Some((height, width, channels)),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Flat(n) => write!(f, "[{n}]"),
            Shape::Map {
                height,
                width,
                channels,
            } => write!(f, "[{height}, {width}, {channels}]"),
        }
    }
}

/// Side length of a valid (unpadded) sliding-window output: `⌊(L − w)/s⌋ + 1`.
pub fn feature_map_extent(input: usize, window: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(HamError::InvalidArgument("stride must be at least 1".into()));
    }
    if window == 0 {
        return Err(HamError::InvalidArgument("window must be at least 1".into()));
    }
    if window > input {
        return Err(HamError::InvalidArgument(format!(
            "window {window} is larger than the input extent {input}"
        )));
    }
    Ok((input - window) / stride + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub shape: Shape,
    pub lagrangian: LayerLagrangian,
    /// Time constant; 0 marks an adiabatic (instantaneous) top layer.
    pub tau: f64,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, shape: Shape, lagrangian: LayerLagrangian, tau: f64) -> Self {
        LayerSpec {
            name: name.into(),
            shape,
            lagrangian,
            tau,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(HamError::ShapeMismatch {
                context: format!("layer '{}' with shape {}", self.name, self.shape),
                expected: self.len(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn lagrangian_value(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        self.lagrangian.value(&self.shape, x)
    }

    pub fn activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        self.lagrangian.activations(&self.shape, x)
    }

    pub fn hessian_quadratic_form(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        self.check_len(v)?;
        self.lagrangian.hessian_quadratic_form(&self.shape, x, v)
    }
}

/// Square convolution kernel, row-major `(size, size, in_channels, out_channels)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvKernel {
    pub size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub data: Vec<f64>,
}

impl ConvKernel {
    pub fn zeros(size: usize, in_channels: usize, out_channels: usize) -> Self {
        ConvKernel {
            size,
            in_channels,
            out_channels,
            data: vec![0.0; size * size * in_channels * out_channels],
        }
    }

    pub fn expected_len(&self) -> usize {
        self.size * self.size * self.in_channels * self.out_channels
    }

    #[inline]
    pub fn index(&self, ky: usize, kx: usize, ci: usize, co: usize) -> usize {
        ((ky * self.size + kx) * self.in_channels + ci) * self.out_channels + co
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConnectionKind {
    /// Weight matrix, row-major `[rows = upper size][cols = lower size]`.
    Dense {
        rows: usize,
        cols: usize,
        weights: Vec<f64>,
    },
    Conv { kernel: ConvKernel, stride: usize },
    /// Parameter-free average pooling over `window × window` blocks.
    AvgPool { window: usize, stride: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSpec {
    /// Index of the lower layer.
    pub lower: usize,
    /// Index of the upper layer; must be `lower + 1`.
    pub upper: usize,
    pub kind: ConnectionKind,
}

impl ConnectionSpec {
    pub fn dense(lower: usize, rows: usize, cols: usize, weights: Vec<f64>) -> Self {
        ConnectionSpec {
            lower,
            upper: lower + 1,
            kind: ConnectionKind::Dense {
                rows,
                cols,
                weights,
            },
        }
    }

    pub fn conv(lower: usize, kernel: ConvKernel, stride: usize) -> Self {
        ConnectionSpec {
            lower,
            upper: lower + 1,
            kind: ConnectionKind::Conv { kernel, stride },
        }
    }

    pub fn avg_pool(lower: usize, window: usize, stride: usize) -> Self {
        ConnectionSpec {
            lower,
            upper: lower + 1,
            kind: ConnectionKind::AvgPool { window, stride },
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ConnectionKind::Dense { .. } => "dense",
            ConnectionKind::Conv { .. } => "conv",
            ConnectionKind::AvgPool { .. } => "avgpool",
        }
    }

    /// The trainable weights (empty for pooling).
    pub fn weights(&self) -> &[f64] {
        match &self.kind {
            ConnectionKind::Dense { weights, .. } => weights,
            ConnectionKind::Conv { kernel, .. } => &kernel.data,
            ConnectionKind::AvgPool { .. } => &[],
        }
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        match &mut self.kind {
            ConnectionKind::Dense { weights, .. } => weights,
            ConnectionKind::Conv { kernel, .. } => &mut kernel.data,
            ConnectionKind::AvgPool { .. } => &mut [],
        }
    }

    /// The same operator with every weight replaced by its absolute value.
    pub fn abs(&self) -> ConnectionSpec {
        let mut c = self.clone();
        for w in c.weights_mut() {
            *w = w.abs();
        }
        c
    }

    /// Bottom-up message: drive delivered to the upper layer by lower-layer
    /// activations `g`. Shapes are those of the endpoint layers.
    pub fn forward(&self, lower: &Shape, upper: &Shape, g: &[f64]) -> Result<Vec<f64>> {
        check_message_len("forward message input", lower, g)?;
        let mut out = vec![0.0; upper.len()];
        self.forward_acc(lower, upper, g, &mut out);
        Ok(out)
    }

    /// Top-down message: the adjoint of [`ConnectionSpec::forward`] applied to
    /// upper-layer activations `g`.
    pub fn backward(&self, lower: &Shape, upper: &Shape, g: &[f64]) -> Result<Vec<f64>> {
        check_message_len("backward message input", upper, g)?;
        let mut out = vec![0.0; lower.len()];
        self.backward_acc(lower, upper, g, &mut out);
        Ok(out)
    }

    /// `out += forward(g)`. Assumes a validated connection and matching lengths.
    pub(crate) fn forward_acc(&self, lower: &Shape, upper: &Shape, g: &[f64], out: &mut [f64]) {
        match &self.kind {
            ConnectionKind::Dense { cols, weights, .. } => {
                for (o, row) in out.iter_mut().zip(weights.chunks_exact(*cols)) {
                    *o += row.iter().zip(g).map(|(w, v)| w * v).sum::<f64>();
                }
            }
            ConnectionKind::Conv { kernel, stride } => {
                let (_, w_in, c_in) = map_dims(lower);
                let (h_out, w_out, c_out) = map_dims(upper);
                let k = kernel.size;
                for oy in 0..h_out {
                    for ox in 0..w_out {
                        let o_base = (oy * w_out + ox) * c_out;
                        for ky in 0..k {
                            for kx in 0..k {
                                let i_base = ((oy * stride + ky) * w_in + ox * stride + kx) * c_in;
                                for ci in 0..c_in {
                                    let v = g[i_base + ci];
                                    if v == 0.0 {
                                        continue;
                                    }
                                    let k_base = kernel.index(ky, kx, ci, 0);
                                    let taps = &kernel.data[k_base..k_base + c_out];
                                    for (o, t) in out[o_base..o_base + c_out].iter_mut().zip(taps) {
                                        *o += t * v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            ConnectionKind::AvgPool { window, stride } => {
                let (_, w_in, c) = map_dims(lower);
                let (h_out, w_out, _) = map_dims(upper);
                let scale = 1.0 / (window * window) as f64;
                for oy in 0..h_out {
                    for ox in 0..w_out {
                        let o_base = (oy * w_out + ox) * c;
                        for ky in 0..*window {
                            for kx in 0..*window {
                                let i_base = ((oy * stride + ky) * w_in + ox * stride + kx) * c;
                                for ch in 0..c {
                                    out[o_base + ch] += scale * g[i_base + ch];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// `out += backward(g)`. Assumes a validated connection and matching lengths.
    pub(crate) fn backward_acc(&self, lower: &Shape, upper: &Shape, g: &[f64], out: &mut [f64]) {
        match &self.kind {
            ConnectionKind::Dense { cols, weights, .. } => {
                for (row, &v) in weights.chunks_exact(*cols).zip(g) {
                    if v == 0.0 {
                        continue;
                    }
                    for (o, w) in out.iter_mut().zip(row) {
                        *o += w * v;
                    }
                }
            }
            ConnectionKind::Conv { kernel, stride } => {
                let (_, w_in, c_in) = map_dims(lower);
                let (h_out, w_out, c_out) = map_dims(upper);
                let k = kernel.size;
                for oy in 0..h_out {
                    for ox in 0..w_out {
                        let o_base = (oy * w_out + ox) * c_out;
                        let gv = &g[o_base..o_base + c_out];
                        for ky in 0..k {
                            for kx in 0..k {
                                let i_base = ((oy * stride + ky) * w_in + ox * stride + kx) * c_in;
                                for ci in 0..c_in {
                                    let k_base = kernel.index(ky, kx, ci, 0);
                                    let taps = &kernel.data[k_base..k_base + c_out];
                                    out[i_base + ci] +=
                                        taps.iter().zip(gv).map(|(t, v)| t * v).sum::<f64>();
                                }
                            }
                        }
                    }
                }
            }
            ConnectionKind::AvgPool { window, stride } => {
                let (_, w_in, c) = map_dims(lower);
                let (h_out, w_out, _) = map_dims(upper);
                let scale = 1.0 / (window * window) as f64;
                for oy in 0..h_out {
                    for ox in 0..w_out {
                        let o_base = (oy * w_out + ox) * c;
                        for ky in 0..*window {
                            for kx in 0..*window {
                                let i_base = ((oy * stride + ky) * w_in + ox * stride + kx) * c;
                                for ch in 0..c {
                                    out[i_base + ch] += scale * g[o_base + ch];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// `grad += ∂/∂W ⟨upper_adj, forward_W(lower)⟩`. A no-op for pooling.
    pub(crate) fn weight_grad_acc(
        &self,
        lower_shape: &Shape,
        upper_shape: &Shape,
        upper_adj: &[f64],
        lower: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) {
        match &self.kind {
            ConnectionKind::Dense { cols, .. } => {
                for (grow, &a) in grad.chunks_exact_mut(*cols).zip(upper_adj) {
                    let a = a * scale;
                    if a == 0.0 {
                        continue;
                    }
                    for (gr, &u) in grow.iter_mut().zip(lower) {
                        *gr += a * u;
                    }
                }
            }
            ConnectionKind::Conv { kernel, stride } => {
                let (_, w_in, c_in) = map_dims(lower_shape);
                let (h_out, w_out, c_out) = map_dims(upper_shape);
                let k = kernel.size;
                for oy in 0..h_out {
                    for ox in 0..w_out {
                        let o_base = (oy * w_out + ox) * c_out;
                        let av = &upper_adj[o_base..o_base + c_out];
                        for ky in 0..k {
                            for kx in 0..k {
                                let i_base = ((oy * stride + ky) * w_in + ox * stride + kx) * c_in;
                                for ci in 0..c_in {
                                    let u = lower[i_base + ci] * scale;
                                    if u == 0.0 {
                                        continue;
                                    }
                                    let k_base = kernel.index(ky, kx, ci, 0);
                                    for (gr, a) in grad[k_base..k_base + c_out].iter_mut().zip(av) {
                                        *gr += a * u;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            ConnectionKind::AvgPool { .. } => {}
        }
    }
}

fn map_dims(shape: &Shape) -> (usize, usize, usize) {
    shape
        .dims()
        .expect("conv/pool endpoints are map-shaped after validation")
}

fn check_message_len(context: &str, shape: &Shape, g: &[f64]) -> Result<()> {
    if g.len() != shape.len() {
        return Err(HamError::ShapeMismatch {
            context: format!("{context} (layer shape {shape})"),
            expected: shape.len(),
            found: g.len(),
        });
    }
    Ok(())
}

/// One failed structural check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// The offending layer or connection, e.g. `layer 2 'hidden'` or
    /// `connection 1→2`. Layers are numbered from 1.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Ordered layer stack plus one connection per adjacent pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub connections: Vec<ConnectionSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, connections: Vec<ConnectionSpec>) -> Self {
        NetworkSpec {
            layers,
            connections,
        }
    }

    /// Validates and returns the spec, or every violation found.
    pub fn validated(self) -> Result<Self> {
        self.validate().map_err(HamError::InvalidNetwork)?;
        Ok(self)
    }

    pub fn top(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn is_adiabatic(&self) -> bool {
        self.layers.last().is_some_and(|l| l.tau == 0.0)
    }

    /// The connection whose lower endpoint is `layer`.
    pub fn connection_above(&self, layer: usize) -> Option<&ConnectionSpec> {
        self.connections.iter().find(|c| c.lower == layer)
    }

    /// The connection whose upper endpoint is `layer`.
    pub fn connection_below(&self, layer: usize) -> Option<&ConnectionSpec> {
        self.connections.iter().find(|c| c.upper == layer)
    }

    pub fn num_weights(&self) -> usize {
        self.connections.iter().map(|c| c.weights().len()).sum()
    }

    /// Bottom-up message through connection `index`.
    pub fn forward_message(&self, index: usize, g_below: &[f64]) -> Result<Vec<f64>> {
        let c = self.connection(index)?;
        c.forward(&self.layers[c.lower].shape, &self.layers[c.upper].shape, g_below)
    }

    /// Top-down message through connection `index`.
    pub fn backward_message(&self, index: usize, g_above: &[f64]) -> Result<Vec<f64>> {
        let c = self.connection(index)?;
        c.backward(&self.layers[c.lower].shape, &self.layers[c.upper].shape, g_above)
    }

    fn connection(&self, index: usize) -> Result<&ConnectionSpec> {
        self.connections.get(index).ok_or_else(|| {
            HamError::InvalidArgument(format!(
                "connection index {index} out of range ({} connections)",
                self.connections.len()
            ))
        })
    }

    /// Checks every structural invariant and reports all violations.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let n = self.layers.len();
        if n == 0 {
            out.push(Violation {
                location: "network".into(),
                message: "at least one layer is required".into(),
            });
            return Err(out);
        }

        for (i, layer) in self.layers.iter().enumerate() {
            let loc = format!("layer {} '{}'", i + 1, layer.name);
            let mut push = |m: String| {
                out.push(Violation {
                    location: loc.clone(),
                    message: m,
                })
            };
            match layer.shape {
                Shape::Flat(0) => push("size must be at least 1".into()),
                Shape::Map {
                    height,
                    width,
                    channels,
                } if height == 0 || width == 0 || channels == 0 => {
                    push(format!("map dimensions must be positive, got {}", layer.shape))
                }
                _ => {}
            }
            if !(layer.tau.is_finite() && layer.tau >= 0.0) {
                push(format!("tau must be finite and non-negative, got {}", layer.tau));
            } else if layer.tau == 0.0 && i + 1 != n {
                push("tau = 0 is only allowed for the top layer".into());
            } else if layer.tau == 0.0 && n == 1 {
                push("a single-layer network cannot be adiabatic".into());
            }
            if let Some(m) = layer.lagrangian.check() {
                push(m);
            }
        }

        let mut seen = vec![0usize; n.saturating_sub(1)];
        for (ci, c) in self.connections.iter().enumerate() {
            let loc = format!("connection {}→{}", c.lower + 1, c.upper + 1);
            if c.upper != c.lower + 1 {
                out.push(Violation {
                    location: loc,
                    message: "connections must link consecutive layers (no skip or lateral connections)".into(),
                });
                continue;
            }
            if c.upper >= n {
                out.push(Violation {
                    location: loc,
                    message: format!("references layer {} but the network has {n} layers", c.upper + 1),
                });
                continue;
            }
            seen[c.lower] += 1;
            if seen[c.lower] == 2 {
                out.push(Violation {
                    location: loc.clone(),
                    message: format!("duplicate connection (entry {})", ci + 1),
                });
            }
            self.check_connection(c, &loc, &mut out);
        }
        for (a, count) in seen.iter().enumerate() {
            if *count == 0 {
                out.push(Violation {
                    location: format!("connection {}→{}", a + 1, a + 2),
                    message: format!(
                        "missing connection {}→{} ('{}' → '{}')",
                        a + 1,
                        a + 2,
                        self.layers[a].name,
                        self.layers[a + 1].name
                    ),
                });
            }
        }

        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    fn check_connection(&self, c: &ConnectionSpec, loc: &str, out: &mut Vec<Violation>) {
        let lower = &self.layers[c.lower].shape;
        let upper = &self.layers[c.upper].shape;
        let mut push = |m: String| {
            out.push(Violation {
                location: loc.to_string(),
                message: m,
            })
        };
        if c.weights().iter().any(|w| !w.is_finite()) {
            push("weights contain non-finite values".into());
        }
        match &c.kind {
            ConnectionKind::Dense {
                rows,
                cols,
                weights,
            } => {
                if *rows != upper.len() {
                    push(format!("dense rows {rows} must equal the upper layer size {}", upper.len()));
                }
                if *cols != lower.len() {
                    push(format!("dense cols {cols} must equal the lower layer size {}", lower.len()));
                }
                if weights.len() != rows * cols {
                    push(format!("dense weights hold {} values, expected {}", weights.len(), rows * cols));
                }
            }
            ConnectionKind::Conv { kernel, stride } => {
                let (Some((h, w, ci)), Some((uh, uw, uc))) = (lower.dims(), upper.dims()) else {
                    push("conv connections require map-shaped layers at both ends".into());
                    return;
                };
                if *stride == 0 {
                    push("conv stride must be at least 1".into());
                    return;
                }
                if kernel.data.len() != kernel.expected_len() {
                    push(format!(
                        "conv kernel holds {} values, expected {}",
                        kernel.data.len(),
                        kernel.expected_len()
                    ));
                }
                if kernel.in_channels != ci {
                    push(format!("kernel input channels {} must equal lower channels {ci}", kernel.in_channels));
                }
                if kernel.out_channels != uc {
                    push(format!("kernel output channels {} must equal upper channels {uc}", kernel.out_channels));
                }
                check_extents(h, w, uh, uw, kernel.size, *stride, "conv", &mut push);
            }
            ConnectionKind::AvgPool { window, stride } => {
                let (Some((h, w, c)), Some((uh, uw, uc))) = (lower.dims(), upper.dims()) else {
                    push("avgpool connections require map-shaped layers at both ends".into());
                    return;
                };
                if *stride == 0 {
                    push("avgpool stride must be at least 1".into());
                    return;
                }
                if c != uc {
                    push(format!("avgpool preserves channels: lower has {c}, upper has {uc}"));
                }
                check_extents(h, w, uh, uw, *window, *stride, "avgpool", &mut push);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn check_extents(
    h: usize,
    w: usize,
    uh: usize,
    uw: usize,
    window: usize,
    stride: usize,
    what: &str,
    push: &mut impl FnMut(String),
) {
    for (axis, input, got) in [("height", h, uh), ("width", w, uw)] {
        match feature_map_extent(input, window, stride) {
            Ok(expected) if expected != got => push(format!(
                "{what} upper {axis} is {got}, expected {expected} from (L={input}, w={window}, s={stride})"
            )),
            Ok(_) => {}
            Err(e) => push(format!("{what} {axis}: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(name: &str, shape: Shape) -> LayerSpec {
        LayerSpec::new(name, shape, LayerLagrangian::QUADRATIC, 1.0)
    }

    #[test]
    fn extent_examples() {
        assert_eq!(feature_map_extent(8, 3, 1).unwrap(), 6);
        assert_eq!(feature_map_extent(28, 4, 2).unwrap(), 13);
        for l in 1..10 {
            for s in 1..4 {
                assert_eq!(feature_map_extent(l, l, s).unwrap(), 1);
            }
        }
        assert!(feature_map_extent(3, 4, 1).is_err());
        assert!(feature_map_extent(3, 2, 0).is_err());
    }

    #[test]
    fn dense_messages() {
        let c = ConnectionSpec::dense(0, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let s = Shape::Flat(2);
        assert_eq!(c.forward(&s, &s, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert_eq!(c.backward(&s, &s, &[1.0, 0.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn conv_messages_by_hand() {
        let mut k = ConvKernel::zeros(2, 1, 1);
        k.data.fill(1.0);
        let c = ConnectionSpec::conv(0, k, 1);
        let lo = Shape::map(2, 2, 1);
        let up = Shape::map(1, 1, 1);
        assert_eq!(c.forward(&lo, &up, &[1.0; 4]).unwrap(), vec![4.0]);
        assert_eq!(c.backward(&lo, &up, &[1.0]).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn strided_conv_skips_rows() {
        // 3x3 input, 1x1 kernel of weight 2, stride 2 → picks the corners.
        let mut k = ConvKernel::zeros(1, 1, 1);
        k.data[0] = 2.0;
        let c = ConnectionSpec::conv(0, k, 2);
        let lo = Shape::map(3, 3, 1);
        let up = Shape::map(2, 2, 1);
        let x: Vec<f64> = (0..9).map(f64::from).collect();
        assert_eq!(c.forward(&lo, &up, &x).unwrap(), vec![0.0, 4.0, 12.0, 16.0]);
    }

    #[test]
    fn avg_pool_messages() {
        let c = ConnectionSpec::avg_pool(0, 2, 2);
        let lo = Shape::map(2, 2, 1);
        let up = Shape::map(1, 1, 1);
        assert_eq!(c.forward(&lo, &up, &[3.5; 4]).unwrap(), vec![3.5]);
        assert_eq!(c.backward(&lo, &up, &[4.0]).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn overlapping_pool_sums_overlaps() {
        let c = ConnectionSpec::avg_pool(0, 2, 1);
        let lo = Shape::map(2, 3, 1);
        let up = Shape::map(1, 2, 1);
        let b = c.backward(&lo, &up, &[4.0, 4.0]).unwrap();
        assert_eq!(b, vec![1.0, 2.0, 1.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn validate_accepts_dense_chain() {
        let spec = NetworkSpec::new(
            vec![q("a", Shape::Flat(3)), q("b", Shape::Flat(2)), q("c", Shape::Flat(4))],
            vec![
                ConnectionSpec::dense(0, 2, 3, vec![0.0; 6]),
                ConnectionSpec::dense(1, 4, 2, vec![0.0; 8]),
            ],
        );
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn validate_reports_missing_connection() {
        let spec = NetworkSpec::new(
            vec![q("a", Shape::Flat(3)), q("b", Shape::Flat(2)), q("c", Shape::Flat(4))],
            vec![ConnectionSpec::dense(0, 2, 3, vec![0.0; 6])],
        );
        let v = spec.validate().unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("missing connection 2→3"), "{}", v[0]);
    }

    #[test]
    fn validate_reports_conv_extent() {
        let spec = NetworkSpec::new(
            vec![q("img", Shape::map(8, 8, 1)), q("fm", Shape::map(7, 7, 2))],
            vec![ConnectionSpec::conv(0, ConvKernel::zeros(3, 1, 2), 1)],
        );
        let v = spec.validate().unwrap_err();
        assert!(v.iter().any(|x| x.message.contains("expected 6")), "{v:?}");
        assert!(v.iter().all(|x| x.location == "connection 1→2"));
    }

    #[test]
    fn validate_rejects_skip_and_misplaced_zero_tau() {
        let mut a = q("a", Shape::Flat(2));
        a.tau = 0.0;
        let spec = NetworkSpec::new(
            vec![a, q("b", Shape::Flat(2)), q("c", Shape::Flat(2))],
            vec![
                ConnectionSpec::dense(0, 2, 2, vec![0.0; 4]),
                ConnectionSpec {
                    lower: 0,
                    upper: 2,
                    kind: ConnectionKind::Dense {
                        rows: 2,
                        cols: 2,
                        weights: vec![0.0; 4],
                    },
                },
            ],
        );
        let v = spec.validate().unwrap_err();
        let text: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        assert!(text.iter().any(|t| t.contains("only allowed for the top")), "{text:?}");
        assert!(text.iter().any(|t| t.contains("consecutive")), "{text:?}");
        assert!(text.iter().any(|t| t.contains("missing connection 2→3")), "{text:?}");
    }

    #[test]
    fn message_shape_errors() {
        let c = ConnectionSpec::dense(0, 2, 2, vec![1.0; 4]);
        let s = Shape::Flat(2);
        assert!(matches!(
            c.forward(&s, &s, &[1.0]),
            Err(HamError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            c.backward(&s, &s, &[1.0, 2.0, 3.0]),
            Err(HamError::ShapeMismatch { .. })
        ));
    }
}
