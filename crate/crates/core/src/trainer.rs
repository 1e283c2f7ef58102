//! Self-supervised denoising training by backpropagation through a
//! fixed-horizon Euler unroll, plus a central-difference gradient oracle.
//!
//! One unroll step from state `x` is
//!
//! ```text
//! x_top  <- forward(g_{top-1})           (adiabatic top only)
//! g_A     = ∇L_A(x_A)
//! x'_A    = (1 − α_A) x_A + α_A d_A      α_A = dt / τ_A, d = total drive
//! ```
//!
//! starting from the retrieval protocol (input = corrupted cue, hidden = 0).
//! The loss is `‖x_T^input − clean‖² / N` averaged over the batch.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{activations, drives, NetworkState};
use crate::error::{HamError, Result};
use crate::memory::{corrupt, NoiseModel};
use crate::patterns::PatternSet;
use crate::rng;
use crate::topology::NetworkSpec;

/// Above this many weights the finite-difference oracle logs a warning.
pub const FD_WEIGHT_WARNING: usize = 10_000;
/// Training stops once a loss exceeds this value.
pub const DIVERGENCE_LOSS: f64 = 1e6;
/// Maximum learning-rate halvings per update when backtracking.
pub const MAX_BACKTRACKS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of Euler steps `T ≥ 1`.
    pub unroll_steps: usize,
    pub dt: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Corruption model. Pattern `i` of a batch is corrupted with seed
    /// `derive_seed(noise.seed, [epoch, i])` where `i` is the corpus index.
    pub noise: NoiseModel,
    pub gradient_mode: GradientMode,
    /// Central-difference step.
    pub fd_step: f64,
    /// Halve the step until the batch loss does not increase.
    pub backtracking: bool,
    /// Reuse the epoch-0 corruption every epoch.
    pub freeze_noise: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            unroll_steps: 20,
            dt: 0.5,
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 8,
            noise: NoiseModel::none(),
            gradient_mode: GradientMode::Analytic,
            fd_step: 1e-5,
            backtracking: true,
            freeze_noise: false,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(HamError::InvalidArgument(m.to_string()));
        if self.unroll_steps == 0 {
            return bad("unroll_steps must be at least 1");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return bad("fd_step must be positive");
        }
        self.noise.check()
    }
}

/// One unroll's forward tape: the post-equilibration state and activations
/// entering each step, plus the final state.
struct Tape {
    states: Vec<Vec<Vec<f64>>>,
    acts: Vec<Vec<Vec<f64>>>,
    last: Vec<Vec<f64>>,
}

fn alphas(spec: &NetworkSpec, dt: f64) -> Vec<f64> {
    spec.layers
        .iter()
        .map(|l| if l.tau > 0.0 { dt / l.tau } else { 0.0 })
        .collect()
}

fn equilibrate(spec: &NetworkSpec, x: &mut [Vec<f64>]) {
    let top = spec.top();
    let c = &spec.connections[top - 1];
    let below = &spec.layers[top - 1];
    let mut g = vec![0.0; below.len()];
    below.lagrangian.activations_into(&below.shape, &x[top - 1], &mut g);
    let out = &mut x[top];
    out.fill(0.0);
    c.forward_acc(&below.shape, &spec.layers[top].shape, &g, out);
}

fn unroll(spec: &NetworkSpec, cue: &[f64], steps: usize, alpha: &[f64], record: bool) -> Result<Tape> {
    let mut x = NetworkState::with_input(spec, cue)?.layers;
    let adiabatic = spec.is_adiabatic();
    let mut tape = Tape {
        states: Vec::new(),
        acts: Vec::new(),
        last: Vec::new(),
    };
    let state = |layers: Vec<Vec<f64>>| NetworkState::new(layers);
    for _ in 0..steps {
        if adiabatic {
            equilibrate(spec, &mut x);
        }
        let s = state(x);
        let g = activations(spec, &s);
        let d = drives(spec, &g);
        let mut next = s.layers.clone();
        for (a, layer) in spec.layers.iter().enumerate() {
            if layer.tau == 0.0 {
                continue;
            }
            for (n, &di) in next[a].iter_mut().zip(&d[a]) {
                *n += alpha[a] * (di - *n);
            }
            if next[a].iter().any(|v| !v.is_finite()) {
                return Err(HamError::NonFinite {
                    layer: layer.name.clone(),
                });
            }
        }
        if record {
            tape.states.push(s.layers);
            tape.acts.push(g);
        }
        x = next;
    }
    tape.last = x;
    Ok(tape)
}

fn sq_error(x: &[f64], clean: &[f64]) -> f64 {
    x.iter().zip(clean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / clean.len() as f64
}

fn hvp_acc(spec: &NetworkSpec, layer: usize, x: &[f64], v: &[f64], out: &mut [f64]) {
    let l = &spec.layers[layer];
    let mut tmp = vec![0.0; v.len()];
    l.lagrangian.hessian_vector_product_into(&l.shape, x, v, &mut tmp);
    for (o, t) in out.iter_mut().zip(tmp) {
        *o += t;
    }
}

/// Adds `scale · ∂(‖x_T − clean‖²/N)/∂W` for one unroll to `grad`.
fn backprop(spec: &NetworkSpec, tape: &Tape, clean: &[f64], alpha: &[f64], scale: f64, grad: &mut [Vec<f64>]) {
    let n = clean.len() as f64;
    let top = spec.top();
    let adiabatic = spec.is_adiabatic();
    let mut lam: Vec<Vec<f64>> = spec.layers.iter().map(|l| vec![0.0; l.len()]).collect();
    for (l, (x, c)) in lam[0].iter_mut().zip(tape.last[0].iter().zip(clean)) {
        *l = scale * 2.0 * (x - c) / n;
    }
    for k in (0..tape.states.len()).rev() {
        let x = &tape.states[k];
        let g = &tape.acts[k];
        let mut adj_d = lam.clone();
        let mut next = lam;
        for (a, layer) in spec.layers.iter().enumerate() {
            if layer.tau == 0.0 {
                adj_d[a].fill(0.0);
            } else {
                adj_d[a].iter_mut().for_each(|v| *v *= alpha[a]);
                next[a].iter_mut().for_each(|v| *v *= 1.0 - alpha[a]);
            }
        }
        let mut adj_g: Vec<Vec<f64>> = spec.layers.iter().map(|l| vec![0.0; l.len()]).collect();
        for (ci, c) in spec.connections.iter().enumerate() {
            let (lo, up) = (&spec.layers[c.lower].shape, &spec.layers[c.upper].shape);
            c.backward_acc(lo, up, &adj_d[c.upper], &mut adj_g[c.lower]);
            c.forward_acc(lo, up, &adj_d[c.lower], &mut adj_g[c.upper]);
            c.weight_grad_acc(lo, up, &adj_d[c.upper], &g[c.lower], 1.0, &mut grad[ci]);
            c.weight_grad_acc(lo, up, &g[c.upper], &adj_d[c.lower], 1.0, &mut grad[ci]);
        }
        for a in 0..spec.layers.len() {
            hvp_acc(spec, a, &x[a], &adj_g[a], &mut next[a]);
        }
        if adiabatic {
            let below = top - 1;
            let c = &spec.connections[below];
            let (lo, up) = (&spec.layers[below].shape, &spec.layers[top].shape);
            let lz = std::mem::replace(&mut next[top], vec![0.0; spec.layers[top].len()]);
            let mut extra = vec![0.0; spec.layers[below].len()];
            c.backward_acc(lo, up, &lz, &mut extra);
            c.weight_grad_acc(lo, up, &lz, &g[below], 1.0, &mut grad[below]);
            hvp_acc(spec, below, &x[below], &extra, &mut next[below]);
        }
        lam = next;
    }
}

fn noise_for(cfg: &TrainConfig, epoch: u64, index: u64) -> NoiseModel {
    cfg.noise.with_seed(rng::derive_seed(cfg.noise.seed, &[epoch, index]))
}

fn cues(batch: &[(u64, &[f64])], cfg: &TrainConfig, epoch: u64) -> Result<Vec<Vec<f64>>> {
    batch
        .iter()
        .map(|(i, p)| corrupt(p, &noise_for(cfg, epoch, *i)))
        .collect()
}

fn check_batch(spec: &NetworkSpec, clean: &[Vec<f64>], cfg: &TrainConfig) -> Result<()> {
    cfg.check()?;
    spec.validate().map_err(HamError::InvalidNetwork)?;
    if clean.is_empty() {
        return Err(HamError::InvalidArgument("empty batch".into()));
    }
    Ok(())
}

fn indexed(clean: &[Vec<f64>]) -> Vec<(u64, &[f64])> {
    clean.iter().enumerate().map(|(i, p)| (i as u64, p.as_slice())).collect()
}

fn batch_loss(spec: &NetworkSpec, batch: &[(u64, &[f64])], cues: &[Vec<f64>], cfg: &TrainConfig) -> Result<f64> {
    let alpha = alphas(spec, cfg.dt);
    let losses = batch
        .par_iter()
        .zip(cues)
        .map(|((_, clean), cue)| {
            let tape = unroll(spec, cue, cfg.unroll_steps, &alpha, false)?;
            Ok(sq_error(&tape.last[0], clean))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}

fn analytic_gradient(
    spec: &NetworkSpec,
    batch: &[(u64, &[f64])],
    cues: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let alpha = alphas(spec, cfg.dt);
    let scale = 1.0 / batch.len() as f64;
    let per: Vec<(f64, Vec<Vec<f64>>)> = batch
        .par_iter()
        .zip(cues)
        .map(|((_, clean), cue)| {
            let tape = unroll(spec, cue, cfg.unroll_steps, &alpha, true)?;
            let mut grad: Vec<Vec<f64>> = spec.connections.iter().map(|c| vec![0.0; c.weights().len()]).collect();
            backprop(spec, &tape, clean, &alpha, scale, &mut grad);
            Ok((sq_error(&tape.last[0], clean), grad))
        })
        .collect::<Result<_>>()?;
    let mut total: Vec<Vec<f64>> = spec.connections.iter().map(|c| vec![0.0; c.weights().len()]).collect();
    let mut loss = 0.0;
    for (l, g) in per {
        loss += l;
        for (t, gi) in total.iter_mut().zip(g) {
            for (a, b) in t.iter_mut().zip(gi) {
                *a += b;
            }
        }
    }
    Ok((loss * scale, total))
}

fn fd_gradient(
    spec: &NetworkSpec,
    batch: &[(u64, &[f64])],
    cues: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = spec.num_weights();
    if n > FD_WEIGHT_WARNING {
        log::warn!("finite-difference gradient over {n} weights needs {} unrolls per pattern", 2 * n);
    }
    let h = cfg.fd_step;
    let mut work = spec.clone();
    let mut grad = Vec::with_capacity(spec.connections.len());
    for ci in 0..spec.connections.len() {
        let mut gc = vec![0.0; spec.connections[ci].weights().len()];
        for (j, gj) in gc.iter_mut().enumerate() {
            let w0 = spec.connections[ci].weights()[j];
            work.connections[ci].weights_mut()[j] = w0 + h;
            let plus = batch_loss(&work, batch, cues, cfg)?;
            work.connections[ci].weights_mut()[j] = w0 - h;
            let minus = batch_loss(&work, batch, cues, cfg)?;
            work.connections[ci].weights_mut()[j] = w0;
            *gj = (plus - minus) / (2.0 * h);
        }
        grad.push(gc);
    }
    Ok((batch_loss(spec, batch, cues, cfg)?, grad))
}

/// Batch loss, per-connection gradients and the corrupted cues used.
struct BatchGradient {
    loss: f64,
    grad: Vec<Vec<f64>>,
    cues: Vec<Vec<f64>>,
}

fn gradient_indexed(
    spec: &NetworkSpec,
    batch: &[(u64, &[f64])],
    cfg: &TrainConfig,
    epoch: u64,
) -> Result<BatchGradient> {
    let cues = cues(batch, cfg, epoch)?;
    let (loss, grad) = match cfg.gradient_mode {
        GradientMode::Analytic => analytic_gradient(spec, batch, &cues, cfg)?,
        GradientMode::FiniteDifference => fd_gradient(spec, batch, &cues, cfg)?,
    };
    Ok(BatchGradient { loss, grad, cues })
}

/// Mean denoising loss of `clean_batch`; pattern `i` is corrupted with the
/// epoch-0 seed for index `i`.
pub fn unroll_loss(spec: &NetworkSpec, clean_batch: &[Vec<f64>], cfg: &TrainConfig) -> Result<f64> {
    check_batch(spec, clean_batch, cfg)?;
    let batch = indexed(clean_batch);
    let cues = cues(&batch, cfg, 0)?;
    batch_loss(spec, &batch, &cues, cfg)
}

/// Gradient of [`unroll_loss`] with respect to every connection's weights,
/// in connection order. Pooling connections get an empty tensor.
pub fn gradient(spec: &NetworkSpec, clean_batch: &[Vec<f64>], cfg: &TrainConfig) -> Result<Vec<Vec<f64>>> {
    check_batch(spec, clean_batch, cfg)?;
    Ok(gradient_indexed(spec, &indexed(clean_batch), cfg, 0)?.grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub spec: NetworkSpec,
    /// Mean pre-update batch loss per completed epoch.
    pub loss_curve: Vec<f64>,
    /// Loss of the returned weights on the whole corpus with the last
    /// epoch's corruption.
    pub final_loss: f64,
    pub diverged: bool,
}

impl TrainOutcome {
    pub fn write_curve<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,loss")?;
        for (e, l) in self.loss_curve.iter().enumerate() {
            writeln!(w, "{},{}", e + 1, l)?;
        }
        Ok(())
    }
}

/// Plain gradient descent over `epochs` passes of consecutive batches.
///
/// With backtracking the step for a batch is halved (up to
/// [`MAX_BACKTRACKS`] times) until the batch loss under the same corruption
/// does not increase; if it never stops increasing the update is skipped.
/// A loss above [`DIVERGENCE_LOSS`] stops training with `diverged = true`.
pub fn train(spec: &NetworkSpec, corpus: &PatternSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_batch(spec, &corpus.patterns, cfg)?;
    if corpus.dim() != spec.layers[0].len() {
        return Err(HamError::ShapeMismatch {
            context: "training corpus vs input layer".into(),
            expected: spec.layers[0].len(),
            found: corpus.dim(),
        });
    }
    let all = indexed(&corpus.patterns);
    let mut current = spec.clone();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut diverged = false;
    let mut last_epoch = 0;
    'epochs: for epoch in 0..cfg.epochs {
        let noise_epoch = if cfg.freeze_noise { 0 } else { epoch as u64 };
        last_epoch = noise_epoch;
        let mut sum = 0.0;
        let mut batches = 0;
        for batch in all.chunks(cfg.batch_size) {
            let BatchGradient { loss, grad, cues } = gradient_indexed(&current, batch, cfg, noise_epoch)?;
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                log::warn!("training diverged at epoch {} (loss {loss})", epoch + 1);
                diverged = true;
                break 'epochs;
            }
            sum += loss;
            batches += 1;
            let mut lr = cfg.learning_rate;
            let mut tries = 0;
            loop {
                let candidate = apply(&current, &grad, lr);
                if !cfg.backtracking || lr == 0.0 {
                    current = candidate;
                    break;
                }
                match batch_loss(&candidate, batch, &cues, cfg) {
                    Ok(l) if l <= loss => {
                        current = candidate;
                        break;
                    }
                    _ if tries < MAX_BACKTRACKS => {
                        lr *= 0.5;
                        tries += 1;
                    }
                    _ => break,
                }
            }
        }
        curve.push(sum / batches as f64);
        log::debug!("epoch {} loss {}", epoch + 1, curve[epoch]);
    }
    let cues = cues(&all, cfg, last_epoch)?;
    let final_loss = batch_loss(&current, &all, &cues, cfg)?;
    Ok(TrainOutcome {
        spec: current,
        loss_curve: curve,
        final_loss,
        diverged,
    })
}

fn apply(spec: &NetworkSpec, grad: &[Vec<f64>], lr: f64) -> NetworkSpec {
    let mut out = spec.clone();
    for (c, g) in out.connections.iter_mut().zip(grad) {
        for (w, gi) in c.weights_mut().iter_mut().zip(g) {
            *w -= lr * gi;
        }
    }
    out
}
