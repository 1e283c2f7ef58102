//! Experiment configuration files (TOML).
//!
//! A config describes a network either inline, with `[[layer]]` and
//! `[[connection]]` tables, or by pointing `network = "model.bin"` at a
//! binary container. Optional sections configure the integrator, the noise
//! model and each experiment. Unknown keys are rejected. Relative paths are
//! resolved against the config file's directory.
//!
//! ```toml
//! [[layer]]
//! name = "input"
//! shape = [16]             # [n] or [height, width, channels]
//! lagrangian = "quadratic" # quadratic | log_sum_exp | channel_log_sum_exp | identity | tanh | relu
//! tau = 1.0
//!
//! [[layer]]
//! name = "hidden"
//! shape = [8]
//! lagrangian = "log_sum_exp"
//! beta = 2.0
//! tau = 0.0
//!
//! [[connection]]
//! between = ["input", "hidden"]
//! kind = "dense"           # dense | conv | avg_pool
//! init = "random"          # zeros | random | patterns | weights
//! scale = 0.25
//! seed = 7
//! ```
//!
//! The same layer/connection schema with `init = "weights"` is the
//! human-readable network format written by [`network_to_toml`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::container;
use crate::dynamics::{IntegratorConfig, Method};
use crate::lagrangian::{Elementwise, LagrangianKind, LayerLagrangian};
use crate::memory::{CapacitySweep, NoiseKind, NoiseModel};
use crate::patterns::{self, PatternSet};
use crate::rng;
use crate::topology::{ConnectionKind, ConnectionSpec, ConvKernel, LayerSpec, NetworkSpec, Shape};
use crate::trainer::{GradientMode, TrainConfig};

/// A malformed or inconsistent config, with its location when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    /// The offending table or key, e.g. `connection 2 field 'window'`.
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.file {
            write!(f, "{}", p.display())?;
            if let Some(l) = self.line {
                write!(f, ":{l}")?;
            }
            write!(f, ": ")?;
        } else if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub lagrangian: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionEntry {
    /// Lower and upper layer names.
    pub between: [String; 2],
    pub kind: String,
    /// Conv kernel size or pooling window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    /// `zeros` (default), `random`, `patterns` (dense only) or `weights`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    /// Standard deviation for `random`; defaults to `1/√fan_in`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Pattern file whose rows become the dense rows for `patterns`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patterns: Option<PathBuf>,
    /// Inline row-major weights for `weights`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorEntry {
    pub method: Option<Method>,
    pub dt: Option<f64>,
    pub adaptive: Option<bool>,
    pub convergence_eps: Option<f64>,
    pub max_steps: Option<usize>,
    pub clamp_input: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    /// `bit_flip`, `gaussian` or `mask`.
    pub kind: String,
    pub rate: Option<f64>,
    pub sigma: Option<f64>,
    pub fraction: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxEntry {
    /// `zeros` (default), `random` or `cue`.
    pub init: Option<String>,
    pub cue: Option<PathBuf>,
    pub seed: Option<u64>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveEntry {
    /// Pattern file holding the retrieval target.
    pub target: Option<PathBuf>,
    /// Row of `target` to score against (default 0).
    pub target_index: Option<usize>,
    /// Corrupt the cue with `[noise]` before retrieval.
    #[serde(default)]
    pub corrupt: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityEntry {
    pub n1: usize,
    pub k_list: Vec<usize>,
    pub beta_list: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainEntry {
    /// Pattern file with the clean corpus.
    pub corpus: Option<PathBuf>,
    /// `[k, n]`: the first `k` Sylvester-Hadamard rows of order `n`.
    pub hadamard: Option<[usize; 2]>,
    pub unroll_steps: Option<usize>,
    pub dt: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub gradient_mode: Option<GradientMode>,
    pub fd_step: Option<f64>,
    pub backtracking: Option<bool>,
    pub freeze_noise: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    network: Option<Spanned<PathBuf>>,
    #[serde(default)]
    layer: Vec<Spanned<LayerEntry>>,
    #[serde(default)]
    connection: Vec<Spanned<ConnectionEntry>>,
    integrator: Option<Spanned<IntegratorEntry>>,
    noise: Option<Spanned<NoiseEntry>>,
    relax: Option<Spanned<RelaxEntry>>,
    retrieve: Option<Spanned<RetrieveEntry>>,
    capacity: Option<Spanned<CapacityEntry>>,
    train: Option<Spanned<TrainEntry>>,
}

/// A parsed config. Network construction is deferred to [`Self::network`]
/// so that configs without a network (capacity sweeps) are valid.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    raw: RawConfig,
    text: String,
    file: Option<PathBuf>,
    base: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.to_path_buf()),
            line: None,
            field: None,
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_with(&text, Some(path.to_path_buf()), base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> ConfigResult<Self> {
        Self::parse_with(text, None, base.to_path_buf())
    }

    fn parse_with(text: &str, file: Option<PathBuf>, base: PathBuf) -> ConfigResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            file: file.clone(),
            line: e.span().map(|s| line_of(text, s.start)),
            field: None,
            message: e.message().to_string(),
        })?;
        Ok(ExperimentConfig {
            raw,
            text: text.to_string(),
            file,
            base,
        })
    }

    fn err<T>(&self, span: Option<std::ops::Range<usize>>, field: impl Into<String>, msg: impl Into<String>) -> ConfigResult<T> {
        Err(ConfigError {
            file: self.file.clone(),
            line: span.map(|s| line_of(&self.text, s.start)),
            field: Some(field.into()),
            message: msg.into(),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn has_network(&self) -> bool {
        self.raw.network.is_some() || !self.raw.layer.is_empty()
    }

    /// Builds the described network. The result is not yet validated.
    pub fn network(&self) -> ConfigResult<NetworkSpec> {
        if let Some(p) = &self.raw.network {
            if !self.raw.layer.is_empty() || !self.raw.connection.is_empty() {
                return self.err(Some(p.span()), "network", "give either a container file or [[layer]] tables, not both");
            }
            let path = self.resolve(p.get_ref());
            let bytes = fs::read(&path).or_else(|e| self.err(Some(p.span()), "network", format!("{}: {e}", path.display())))?;
            return container::decode(&bytes).or_else(|e| self.err(Some(p.span()), "network", e.to_string()));
        }
        if self.raw.layer.is_empty() {
            return self.err(None, "layer", "no network: add [[layer]] tables or a `network` file");
        }
        let mut layers = Vec::with_capacity(self.raw.layer.len());
        for (i, entry) in self.raw.layer.iter().enumerate() {
            layers.push(self.layer(i, entry)?);
        }
        let mut connections = Vec::with_capacity(self.raw.connection.len());
        for (i, entry) in self.raw.connection.iter().enumerate() {
            connections.push(self.connection(i, entry, &layers)?);
        }
        Ok(NetworkSpec::new(layers, connections))
    }

    fn layer(&self, i: usize, entry: &Spanned<LayerEntry>) -> ConfigResult<LayerSpec> {
        let span = Some(entry.span());
        let e = entry.get_ref();
        let at = |f: &str| format!("layer {} '{}' field '{f}'", i + 1, e.name);
        let shape = match e.shape.as_slice() {
            [n] => Shape::Flat(*n),
            [h, w, c] => Shape::map(*h, *w, *c),
            _ => return self.err(span, at("shape"), "expected [n] or [height, width, channels]"),
        };
        let needs_beta = matches!(e.lagrangian.as_str(), "log_sum_exp" | "channel_log_sum_exp");
        let beta = match (needs_beta, e.beta) {
            (true, Some(b)) => b,
            (true, None) => return self.err(span, at("beta"), format!("required for '{}'", e.lagrangian)),
            (false, Some(_)) => return self.err(span, at("beta"), format!("not used by '{}'", e.lagrangian)),
            (false, None) => 0.0,
        };
        let kind = match e.lagrangian.as_str() {
            "quadratic" => LagrangianKind::Quadratic,
            "log_sum_exp" => LagrangianKind::LogSumExp { beta },
            "channel_log_sum_exp" => LagrangianKind::ChannelLogSumExp { beta },
            "identity" => LagrangianKind::Elementwise {
                profile: Elementwise::Identity,
            },
            "tanh" => LagrangianKind::Elementwise {
                profile: Elementwise::Tanh,
            },
            "relu" => LagrangianKind::Elementwise {
                profile: Elementwise::Relu,
            },
            other => {
                return self.err(
                    span,
                    at("lagrangian"),
                    format!("unknown kind '{other}' (expected quadratic, log_sum_exp, channel_log_sum_exp, identity, tanh or relu)"),
                )
            }
        };
        Ok(LayerSpec::new(e.name.clone(), shape, LayerLagrangian(kind), e.tau))
    }

    fn connection(&self, i: usize, entry: &Spanned<ConnectionEntry>, layers: &[LayerSpec]) -> ConfigResult<ConnectionSpec> {
        let span = Some(entry.span());
        let e = entry.get_ref();
        let at = |f: &str| format!("connection {} field '{f}'", i + 1);
        let index = |name: &str| layers.iter().position(|l| l.name == name);
        let Some(lower) = index(&e.between[0]) else {
            return self.err(span, at("between"), format!("no layer named '{}'", e.between[0]));
        };
        let Some(upper) = index(&e.between[1]) else {
            return self.err(span, at("between"), format!("no layer named '{}'", e.between[1]));
        };
        let (lo, up) = (&layers[lower].shape, &layers[upper].shape);
        let init = e.init.as_deref().unwrap_or("zeros");
        let kind = match e.kind.as_str() {
            "dense" => {
                if e.window.is_some() || e.stride.is_some() {
                    return self.err(span, at("window"), "dense connections take no window or stride");
                }
                let (rows, cols) = (up.len(), lo.len());
                let weights = self.init_weights(span.clone(), i, e, rows * cols, cols, init, Some(rows))?;
                ConnectionKind::Dense { rows, cols, weights }
            }
            "conv" => {
                let Some(size) = e.window else {
                    return self.err(span, at("window"), "required for conv");
                };
                let c_in = lo.dims().map_or(0, |d| d.2);
                let c_out = up.dims().map_or(0, |d| d.2);
                let n = size * size * c_in * c_out;
                if init == "patterns" {
                    return self.err(span, at("init"), "'patterns' applies to dense connections only");
                }
                let data = self.init_weights(span.clone(), i, e, n, size * size * c_in, init, None)?;
                ConnectionKind::Conv {
                    kernel: ConvKernel {
                        size,
                        in_channels: c_in,
                        out_channels: c_out,
                        data,
                    },
                    stride: e.stride.unwrap_or(1),
                }
            }
            "avg_pool" => {
                let Some(window) = e.window else {
                    return self.err(span, at("window"), "required for avg_pool");
                };
                if e.init.is_some() || e.weights.is_some() || e.seed.is_some() || e.scale.is_some() || e.patterns.is_some() {
                    return self.err(span, at("init"), "avg_pool has no weights");
                }
                ConnectionKind::AvgPool {
                    window,
                    stride: e.stride.unwrap_or(window),
                }
            }
            other => return self.err(span, at("kind"), format!("unknown kind '{other}' (expected dense, conv or avg_pool)")),
        };
        Ok(ConnectionSpec { lower, upper, kind })
    }

    #[allow(clippy::too_many_arguments)]
    fn init_weights(
        &self,
        span: Option<std::ops::Range<usize>>,
        i: usize,
        e: &ConnectionEntry,
        n: usize,
        fan_in: usize,
        init: &str,
        dense_rows: Option<usize>,
    ) -> ConfigResult<Vec<f64>> {
        let at = |f: &str| format!("connection {} field '{f}'", i + 1);
        let stray = |f: &str, present: bool| -> ConfigResult<()> {
            if present {
                self.err(span.clone(), at(f), format!("not used with init = '{init}'"))
            } else {
                Ok(())
            }
        };
        stray("weights", init != "weights" && e.weights.is_some())?;
        stray("patterns", init != "patterns" && e.patterns.is_some())?;
        stray("seed", init != "random" && e.seed.is_some())?;
        stray("scale", init != "random" && e.scale.is_some())?;
        match init {
            "zeros" => Ok(vec![0.0; n]),
            "random" => {
                let Some(seed) = e.seed else {
                    return self.err(span, at("seed"), "required for init = 'random'");
                };
                let scale = e.scale.unwrap_or(1.0 / (fan_in.max(1) as f64).sqrt());
                Ok(rng::gaussian(&mut rng::rng(seed), n, scale))
            }
            "weights" => match &e.weights {
                Some(w) if w.len() == n => Ok(w.clone()),
                Some(w) => self.err(span, at("weights"), format!("expected {n} values, found {}", w.len())),
                None => self.err(span, at("weights"), "required for init = 'weights'"),
            },
            "patterns" => {
                let Some(p) = &e.patterns else {
                    return self.err(span, at("patterns"), "required for init = 'patterns'");
                };
                let set = self.patterns(span.clone(), &at("patterns"), p)?;
                if Some(set.len()) != dense_rows || set.dim() != fan_in {
                    return self.err(
                        span,
                        at("patterns"),
                        format!(
                            "{} patterns of length {} do not fill a {}×{fan_in} matrix",
                            set.len(),
                            set.dim(),
                            dense_rows.unwrap_or(0)
                        ),
                    );
                }
                Ok(set.as_rows())
            }
            other => self.err(span, at("init"), format!("unknown init '{other}' (expected zeros, random, patterns or weights)")),
        }
    }

    fn patterns(&self, span: Option<std::ops::Range<usize>>, field: &str, p: &Path) -> ConfigResult<PatternSet> {
        patterns::read_any(&self.resolve(p)).or_else(|e| self.err(span, field, e.to_string()))
    }

    /// Integrator settings; unset keys take the network defaults.
    pub fn integrator(&self, spec: &NetworkSpec) -> ConfigResult<IntegratorConfig> {
        let mut cfg = IntegratorConfig::for_spec(spec);
        if let Some(s) = &self.raw.integrator {
            let e = s.get_ref();
            cfg.method = e.method.unwrap_or(cfg.method);
            cfg.dt = e.dt.unwrap_or(cfg.dt);
            cfg.adaptive = e.adaptive.unwrap_or(cfg.adaptive);
            cfg.convergence_eps = e.convergence_eps.unwrap_or(cfg.convergence_eps);
            cfg.max_steps = e.max_steps.unwrap_or(cfg.max_steps);
            cfg.clamp_input = e.clamp_input.unwrap_or(cfg.clamp_input);
            cfg.check().or_else(|err| self.err(Some(s.span()), "integrator", err.to_string()))?;
        }
        Ok(cfg)
    }

    /// Integrator settings given explicitly, if any.
    pub fn integrator_override(&self, spec: &NetworkSpec) -> ConfigResult<Option<IntegratorConfig>> {
        match &self.raw.integrator {
            Some(_) => self.integrator(spec).map(Some),
            None => Ok(None),
        }
    }

    pub fn noise(&self) -> ConfigResult<Option<NoiseModel>> {
        let Some(s) = &self.raw.noise else {
            return Ok(None);
        };
        let span = Some(s.span());
        let e = s.get_ref();
        let need = |v: Option<f64>, f: &str| match v {
            Some(x) => Ok(x),
            None => self.err(span.clone(), format!("noise field '{f}'"), format!("required for kind = '{}'", e.kind)),
        };
        let (kind, used) = match e.kind.as_str() {
            "bit_flip" => (NoiseKind::BitFlip { rate: need(e.rate, "rate")? }, "rate"),
            "gaussian" => (NoiseKind::GaussianAdditive { sigma: need(e.sigma, "sigma")? }, "sigma"),
            "mask" => (NoiseKind::Mask { fraction: need(e.fraction, "fraction")? }, "fraction"),
            other => return self.err(span, "noise field 'kind'", format!("unknown kind '{other}' (expected bit_flip, gaussian or mask)")),
        };
        for (f, v) in [("rate", e.rate), ("sigma", e.sigma), ("fraction", e.fraction)] {
            if f != used && v.is_some() {
                return self.err(span, format!("noise field '{f}'"), format!("not used by kind = '{}'", e.kind));
            }
        }
        let model = NoiseModel::new(kind, e.seed);
        model.check().or_else(|err| self.err(span, "noise", err.to_string()))?;
        Ok(Some(model))
    }

    pub fn relax(&self) -> RelaxEntry {
        self.raw.relax.as_ref().map(|s| s.get_ref().clone()).unwrap_or_default()
    }

    /// Initial state for `relax`.
    pub fn relax_init(&self, spec: &NetworkSpec) -> ConfigResult<crate::dynamics::NetworkState> {
        use crate::dynamics::NetworkState;
        let span = self.raw.relax.as_ref().map(|s| s.span());
        let e = self.relax();
        let init = e.init.as_deref().unwrap_or("zeros");
        let stray = |f: &str, present: bool| -> ConfigResult<()> {
            if present {
                self.err(span.clone(), format!("relax field '{f}'"), format!("not used with init = '{init}'"))
            } else {
                Ok(())
            }
        };
        stray("cue", init != "cue" && e.cue.is_some())?;
        stray("seed", init != "random" && e.seed.is_some())?;
        stray("scale", init != "random" && e.scale.is_some())?;
        match init {
            "zeros" => Ok(NetworkState::zeros(spec)),
            "random" => {
                let Some(seed) = e.seed else {
                    return self.err(span, "relax field 'seed'", "required for init = 'random'");
                };
                let scale = e.scale.unwrap_or(1.0);
                let mut r = rng::rng(seed);
                Ok(NetworkState::new(
                    spec.layers.iter().map(|l| rng::gaussian(&mut r, l.len(), scale)).collect(),
                ))
            }
            "cue" => {
                let Some(p) = &e.cue else {
                    return self.err(span, "relax field 'cue'", "required for init = 'cue'");
                };
                let set = self.patterns(span.clone(), "relax field 'cue'", p)?;
                NetworkState::with_input(spec, &set.patterns[0]).or_else(|err| self.err(span, "relax field 'cue'", err.to_string()))
            }
            other => self.err(span, "relax field 'init'", format!("unknown init '{other}' (expected zeros, random or cue)")),
        }
    }

    pub fn retrieve(&self) -> RetrieveEntry {
        self.raw.retrieve.as_ref().map(|s| s.get_ref().clone()).unwrap_or_default()
    }

    /// The retrieval target named by `[retrieve]`, if any.
    pub fn retrieve_target(&self) -> ConfigResult<Option<Vec<f64>>> {
        let Some(s) = &self.raw.retrieve else {
            return Ok(None);
        };
        let e = s.get_ref();
        let Some(p) = &e.target else {
            if e.target_index.is_some() {
                return self.err(Some(s.span()), "retrieve field 'target_index'", "needs 'target'");
            }
            return Ok(None);
        };
        let set = self.patterns(Some(s.span()), "retrieve field 'target'", p)?;
        let i = e.target_index.unwrap_or(0);
        match set.patterns.get(i) {
            Some(t) => Ok(Some(t.clone())),
            None => self.err(Some(s.span()), "retrieve field 'target_index'", format!("{i} is out of range for {} patterns", set.len())),
        }
    }

    /// Capacity sweep parameters; `[noise]` supplies the corruption and an
    /// explicit `[integrator]` overrides the per-network default.
    pub fn capacity(&self) -> ConfigResult<CapacitySweep> {
        let Some(s) = &self.raw.capacity else {
            return self.err(None, "capacity", "missing [capacity] section");
        };
        let e = s.get_ref();
        let span = Some(s.span());
        if e.trials == 0 {
            return self.err(span, "capacity field 'trials'", "must be at least 1");
        }
        if e.n1 == 0 {
            return self.err(span, "capacity field 'n1'", "must be at least 1");
        }
        if e.k_list.is_empty() || e.k_list.contains(&0) {
            return self.err(span, "capacity field 'k_list'", "needs at least one entry, all ≥ 1");
        }
        if e.beta_list.is_empty() || e.beta_list.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return self.err(span, "capacity field 'beta_list'", "needs at least one entry, all positive");
        }
        let Some(noise) = self.noise()? else {
            return self.err(span, "noise", "capacity sweeps need a [noise] section");
        };
        let integrator = match &self.raw.integrator {
            Some(_) => {
                let probe = crate::presets::one_hidden_layer(Shape::Flat(e.n1), 1, vec![0.0; e.n1], 1.0, [1.0, 0.0]);
                Some(self.integrator(&probe)?)
            }
            None => None,
        };
        Ok(CapacitySweep {
            n1: e.n1,
            k_list: e.k_list.clone(),
            beta_list: e.beta_list.clone(),
            noise,
            trials: e.trials,
            seed: e.seed,
            integrator,
        })
    }

    /// Training corpus and settings.
    pub fn train(&self) -> ConfigResult<(PatternSet, TrainConfig)> {
        let Some(s) = &self.raw.train else {
            return self.err(None, "train", "missing [train] section");
        };
        let e = s.get_ref();
        let span = Some(s.span());
        let corpus = match (&e.corpus, e.hadamard) {
            (Some(p), None) => self.patterns(span.clone(), "train field 'corpus'", p)?,
            (None, Some([k, n])) => {
                PatternSet::hadamard(k, n).or_else(|err| self.err(span.clone(), "train field 'hadamard'", err.to_string()))?
            }
            _ => return self.err(span, "train", "give exactly one of 'corpus' or 'hadamard'"),
        };
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            unroll_steps: e.unroll_steps.unwrap_or(d.unroll_steps),
            dt: e.dt.unwrap_or(d.dt),
            learning_rate: e.learning_rate.unwrap_or(d.learning_rate),
            epochs: e.epochs.unwrap_or(d.epochs),
            batch_size: e.batch_size.unwrap_or(d.batch_size),
            noise: self.noise()?.unwrap_or(d.noise),
            gradient_mode: e.gradient_mode.unwrap_or(d.gradient_mode),
            fd_step: e.fd_step.unwrap_or(d.fd_step),
            backtracking: e.backtracking.unwrap_or(d.backtracking),
            freeze_noise: e.freeze_noise.unwrap_or(d.freeze_noise),
        };
        cfg.check().or_else(|err| self.err(span, "train", err.to_string()))?;
        Ok((corpus, cfg))
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

#[derive(Serialize)]
struct NetworkText {
    layer: Vec<LayerEntry>,
    connection: Vec<ConnectionEntry>,
}

/// The human-readable description of `spec`: layer and connection tables
/// with inline weights. Parsing it back reproduces `spec` bit for bit.
pub fn network_to_toml(spec: &NetworkSpec) -> String {
    let layer = spec
        .layers
        .iter()
        .map(|l| {
            let (lagrangian, beta) = match l.lagrangian.0 {
                LagrangianKind::Quadratic => ("quadratic", None),
                LagrangianKind::LogSumExp { beta } => ("log_sum_exp", Some(beta)),
                LagrangianKind::ChannelLogSumExp { beta } => ("channel_log_sum_exp", Some(beta)),
                LagrangianKind::Elementwise { profile } => (profile.name(), None),
            };
            LayerEntry {
                name: l.name.clone(),
                shape: match l.shape {
                    Shape::Flat(n) => vec![n],
                    Shape::Map {
                        height,
                        width,
                        channels,
                    } => vec![height, width, channels],
                },
                lagrangian: lagrangian.to_string(),
                beta,
                tau: l.tau,
            }
        })
        .collect();
    let connection = spec
        .connections
        .iter()
        .map(|c| {
            let names = [spec.layers[c.lower].name.clone(), spec.layers[c.upper].name.clone()];
            let (kind, window, stride) = match &c.kind {
                ConnectionKind::Dense { .. } => ("dense", None, None),
                ConnectionKind::Conv { kernel, stride } => ("conv", Some(kernel.size), Some(*stride)),
                ConnectionKind::AvgPool { window, stride } => ("avg_pool", Some(*window), Some(*stride)),
            };
            let pool = matches!(c.kind, ConnectionKind::AvgPool { .. });
            ConnectionEntry {
                between: names,
                kind: kind.to_string(),
                window,
                stride,
                init: (!pool).then(|| "weights".to_string()),
                scale: None,
                seed: None,
                patterns: None,
                weights: (!pool).then(|| c.weights().to_vec()),
            }
        })
        .collect();
    toml::to_string(&NetworkText { layer, connection }).expect("network tables serialize")
}

/// Parses a network description written by [`network_to_toml`] (or any
/// config with inline layers).
pub fn network_from_toml(text: &str) -> ConfigResult<NetworkSpec> {
    ExperimentConfig::parse(text, Path::new("."))?.network()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{random_network, RandomNetOptions};

    #[test]
    fn text_round_trip_is_bit_exact() {
        for seed in 0..30 {
            let spec = random_network(seed, &RandomNetOptions::default());
            let back = network_from_toml(&network_to_toml(&spec)).unwrap();
            assert_eq!(container::encode(&back), container::encode(&spec), "seed {seed}");
        }
    }

    #[test]
    fn extreme_floats_round_trip() {
        let w = vec![1e300, -0.0, 5e-324, 0.1 + 0.2, -1.0 / 3.0, 1e16];
        let spec = crate::presets::one_hidden_layer(Shape::Flat(3), 2, w.clone(), 1.0, [1.0, 0.5]);
        let back = network_from_toml(&network_to_toml(&spec)).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.connections[0].weights()), bits(&w));
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "[[layer]]\nname = \"a\"\nshape = [2]\nlagrangian = \"quadratic\"\ntau = 1.0\ncolour = 3\n";
        let err = ExperimentConfig::parse(text, Path::new(".")).unwrap_err();
        assert_eq!(err.line, Some(6), "{err}");
        assert!(err.message.contains("colour"), "{err}");
    }

    #[test]
    fn semantic_error_names_field_and_line() {
        let text = "[[layer]]\nname = \"a\"\nshape = [2]\nlagrangian = \"quadratic\"\ntau = 1.0\n\n[[layer]]\nname = \"b\"\nshape = [2]\nlagrangian = \"log_sum_exp\"\ntau = 1.0\n";
        let err = ExperimentConfig::parse(text, Path::new(".")).unwrap().network().unwrap_err();
        assert_eq!(err.field.as_deref(), Some("layer 2 'b' field 'beta'"));
        assert_eq!(err.line, Some(7), "{err}");
    }

    #[test]
    fn missing_layer_in_connection() {
        let text = "[[layer]]\nname = \"a\"\nshape = [2]\nlagrangian = \"quadratic\"\ntau = 1.0\n[[connection]]\nbetween = [\"a\", \"zz\"]\nkind = \"dense\"\n";
        let err = ExperimentConfig::parse(text, Path::new(".")).unwrap().network().unwrap_err();
        assert!(err.message.contains("zz"));
    }
}
