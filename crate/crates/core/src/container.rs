//! Self-describing binary network container.
//!
//! All integers are little-endian `u64` unless noted, all reals are
//! little-endian IEEE-754 `f64`, so a round trip is bit-exact.
//!
//! ```text
//! magic             8 bytes  "HAMNET01"
//! layer count       u64
//! connection count  u64
//! layer table, per layer:
//!   name length     u64, then UTF-8 bytes
//!   shape tag       u8   0 = flat, 1 = map
//!   dims            3 × u64   flat: (n, 0, 0); map: (height, width, channels)
//!   lagrangian tag  u8   0 = quadratic, 1 = log-sum-exp, 2 = channel log-sum-exp, 3 = elementwise
//!   beta            f64  (0 when unused)
//!   profile         u8   0 = identity, 1 = tanh, 2 = relu (0 when unused)
//!   tau             f64
//! connection table, per connection:
//!   kind tag        u8   0 = dense, 1 = conv, 2 = avg-pool
//!   lower, upper    2 × u64
//!   params          4 × u64  dense: (rows, cols, 0, 0); conv: (size, c_in, c_out, stride);
//!                            avg-pool: (window, stride, 0, 0)
//!   weight count    u64
//! weights           f64 × total weight count, connection by connection, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{HamError, Result};
use crate::lagrangian::{Elementwise, LagrangianKind, LayerLagrangian};
use crate::topology::{ConnectionKind, ConnectionSpec, ConvKernel, LayerSpec, NetworkSpec, Shape};

pub const MAGIC: &[u8; 8] = b"HAMNET01";

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode(spec: &NetworkSpec) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * spec.num_weights());
    out.extend_from_slice(MAGIC);
    put_u64(&mut out, spec.layers.len());
    put_u64(&mut out, spec.connections.len());
    for l in &spec.layers {
        put_u64(&mut out, l.name.len());
        out.extend_from_slice(l.name.as_bytes());
        let (tag, dims) = match l.shape {
            Shape::Flat(n) => (0u8, [n, 0, 0]),
            Shape::Map {
                height,
                width,
                channels,
            } => (1, [height, width, channels]),
        };
        out.push(tag);
        dims.iter().for_each(|d| put_u64(&mut out, *d));
        let (tag, beta, profile) = match l.lagrangian.0 {
            LagrangianKind::Quadratic => (0u8, 0.0, 0u8),
            LagrangianKind::LogSumExp { beta } => (1, beta, 0),
            LagrangianKind::ChannelLogSumExp { beta } => (2, beta, 0),
            LagrangianKind::Elementwise { profile } => (
                3,
                0.0,
                match profile {
                    Elementwise::Identity => 0,
                    Elementwise::Tanh => 1,
                    Elementwise::Relu => 2,
                },
            ),
        };
        out.push(tag);
        put_f64(&mut out, beta);
        out.push(profile);
        put_f64(&mut out, l.tau);
    }
    for c in &spec.connections {
        let (tag, params) = match &c.kind {
            ConnectionKind::Dense { rows, cols, .. } => (0u8, [*rows, *cols, 0, 0]),
            ConnectionKind::Conv { kernel, stride } => {
                (1, [kernel.size, kernel.in_channels, kernel.out_channels, *stride])
            }
            ConnectionKind::AvgPool { window, stride } => (2, [*window, *stride, 0, 0]),
        };
        out.push(tag);
        put_u64(&mut out, c.lower);
        put_u64(&mut out, c.upper);
        params.iter().for_each(|p| put_u64(&mut out, *p));
        put_u64(&mut out, c.weights().len());
    }
    for c in &spec.connections {
        c.weights().iter().for_each(|w| put_f64(&mut out, *w));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(HamError::Container(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| HamError::Container(format!("{what} {v} does not fit in memory")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    /// A count that must be satisfiable by the remaining bytes at `unit` bytes each.
    fn count(&mut self, what: &str, unit: usize) -> Result<usize> {
        let n = self.u64(what)?;
        if n.saturating_mul(unit) > self.bytes.len() - self.pos {
            return Err(HamError::Container(format!("{what} {n} exceeds the file size")));
        }
        Ok(n)
    }
}

/// Decodes a container. The result is structurally decoded but not
/// validated; call [`NetworkSpec::validated`] before use.
pub fn decode(bytes: &[u8]) -> Result<NetworkSpec> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(HamError::Container("not a network container (bad magic)".into()));
    }
    let n_layers = r.count("layer count", 1)?;
    let n_conns = r.count("connection count", 1)?;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let len = r.count("name length", 1)?;
        let name = std::str::from_utf8(r.take(len, "layer name")?)
            .map_err(|_| HamError::Container(format!("layer {} name is not UTF-8", i + 1)))?
            .to_string();
        let shape_tag = r.u8("shape tag")?;
        let d = [r.u64("dim")?, r.u64("dim")?, r.u64("dim")?];
        let shape = match shape_tag {
            0 => Shape::Flat(d[0]),
            1 => Shape::map(d[0], d[1], d[2]),
            t => return Err(HamError::Container(format!("layer {}: unknown shape tag {t}", i + 1))),
        };
        let tag = r.u8("lagrangian tag")?;
        let beta = r.f64("beta")?;
        let profile = match r.u8("profile")? {
            0 => Elementwise::Identity,
            1 => Elementwise::Tanh,
            2 => Elementwise::Relu,
            t => return Err(HamError::Container(format!("layer {}: unknown profile tag {t}", i + 1))),
        };
        let lagrangian = LayerLagrangian(match tag {
            0 => LagrangianKind::Quadratic,
            1 => LagrangianKind::LogSumExp { beta },
            2 => LagrangianKind::ChannelLogSumExp { beta },
            3 => LagrangianKind::Elementwise { profile },
            t => return Err(HamError::Container(format!("layer {}: unknown lagrangian tag {t}", i + 1))),
        });
        let tau = r.f64("tau")?;
        layers.push(LayerSpec::new(name, shape, lagrangian, tau));
    }
    let mut headers = Vec::with_capacity(n_conns);
    for _ in 0..n_conns {
        let tag = r.u8("connection tag")?;
        let lower = r.u64("lower index")?;
        let upper = r.u64("upper index")?;
        let p = [r.u64("param")?, r.u64("param")?, r.u64("param")?, r.u64("param")?];
        let count = r.u64("weight count")?;
        headers.push((tag, lower, upper, p, count));
    }
    let mut connections = Vec::with_capacity(n_conns);
    for (i, (tag, lower, upper, p, count)) in headers.into_iter().enumerate() {
        if count.saturating_mul(8) > bytes.len() - r.pos {
            return Err(HamError::Container(format!("connection {}: weight data truncated", i + 1)));
        }
        let weights = (0..count).map(|_| r.f64("weight")).collect::<Result<Vec<f64>>>()?;
        let kind = match tag {
            0 => ConnectionKind::Dense {
                rows: p[0],
                cols: p[1],
                weights,
            },
            1 => ConnectionKind::Conv {
                kernel: ConvKernel {
                    size: p[0],
                    in_channels: p[1],
                    out_channels: p[2],
                    data: weights,
                },
                stride: p[3],
            },
            2 if count == 0 => ConnectionKind::AvgPool {
                window: p[0],
                stride: p[1],
            },
            2 => return Err(HamError::Container(format!("connection {}: pooling carries no weights", i + 1))),
            t => return Err(HamError::Container(format!("connection {}: unknown kind tag {t}", i + 1))),
        };
        connections.push(ConnectionSpec { lower, upper, kind });
    }
    if r.pos != bytes.len() {
        return Err(HamError::Container(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(NetworkSpec::new(layers, connections))
}

pub fn save(spec: &NetworkSpec, path: &Path) -> Result<()> {
    fs::write(path, encode(spec))?;
    Ok(())
}

/// Reads and validates a container file.
pub fn load(path: &Path) -> Result<NetworkSpec> {
    decode(&fs::read(path)?)
        .map_err(|e| match e {
            HamError::Container(m) => HamError::Container(format!("{}: {m}", path.display())),
            other => other,
        })?
        .validated()
}
