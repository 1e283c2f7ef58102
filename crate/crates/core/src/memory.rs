//! Associative-memory harness: storing patterns, corrupting cues, retrieving
//! by relaxation, capacity sweeps, and the hierarchical assembly demo.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, IntegratorConfig, NetworkState};
use crate::error::{HamError, Result};
use crate::patterns::PatternSet;
use crate::presets::{self, ConvStack};
use crate::rng;
use crate::topology::{NetworkSpec, Shape};

/// Overlap threshold for calling a real-valued retrieval a success.
pub const OVERLAP_SUCCESS: f64 = 0.99;

/// Entries with `|x| ≤ SIGN_TIE_TOLERANCE · |target|` count as sign zero.
///
/// A relaxation stopped at `max |dx/dt| < eps` leaves O(eps) residue on
/// entries whose exact fixed-point value is 0; the sign of that residue
/// carries no retrieved information.
pub const SIGN_TIE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Negate each ±1 entry independently with probability `rate`.
    BitFlip { rate: f64 },
    /// Add independent `N(0, σ²)` noise to each entry.
    GaussianAdditive { sigma: f64 },
    /// Set exactly `round(fraction · n)` entries, chosen uniformly, to zero.
    Mask { fraction: f64 },
}

/// A corruption process with its seed.
///
/// The generator is `rng::rng(seed)`. `BitFlip` draws one `random::<f64>()`
/// per entry in order and flips the entry when the draw is below `rate`;
/// `GaussianAdditive` draws one standard normal per entry; `Mask` picks the
/// masked indices with `rand::seq::index::sample`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        NoiseModel { kind, seed }
    }

    pub fn none() -> Self {
        NoiseModel::new(NoiseKind::BitFlip { rate: 0.0 }, 0)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseModel { seed, ..self }
    }

    pub fn check(&self) -> Result<()> {
        let ok = match self.kind {
            NoiseKind::BitFlip { rate } => (0.0..=1.0).contains(&rate),
            NoiseKind::GaussianAdditive { sigma } => sigma.is_finite() && sigma >= 0.0,
            NoiseKind::Mask { fraction } => (0.0..=1.0).contains(&fraction),
        };
        if ok {
            Ok(())
        } else {
            Err(HamError::InvalidArgument(format!("noise parameter out of range: {:?}", self.kind)))
        }
    }
}

/// A corrupted copy of `pattern`, deterministic in the model's seed.
pub fn corrupt(pattern: &[f64], model: &NoiseModel) -> Result<Vec<f64>> {
    model.check()?;
    let mut r = rng::rng(model.seed);
    let mut out = pattern.to_vec();
    match model.kind {
        NoiseKind::BitFlip { rate } => {
            if let Some(v) = pattern.iter().find(|v| **v != 1.0 && **v != -1.0) {
                return Err(HamError::InvalidArgument(format!(
                    "bit-flip noise needs ±1 data, found {v}"
                )));
            }
            for v in out.iter_mut() {
                if r.random::<f64>() < rate {
                    *v = -*v;
                }
            }
        }
        NoiseKind::GaussianAdditive { sigma } => {
            for (v, n) in out.iter_mut().zip(rng::gaussian(&mut r, pattern.len(), sigma)) {
                *v += n;
            }
        }
        NoiseKind::Mask { fraction } => {
            let count = ((fraction * pattern.len() as f64).round() as usize).min(pattern.len());
            for i in index::sample(&mut r, pattern.len(), count) {
                out[i] = 0.0;
            }
        }
    }
    Ok(out)
}

/// A single-hidden-layer memory and any storage warnings.
#[derive(Debug, Clone)]
pub struct StoredMemory {
    pub spec: NetworkSpec,
    /// Index pairs of identical stored patterns; each pair shares one
    /// degenerate attractor.
    pub duplicates: Vec<(usize, usize)>,
}

/// Stores `patterns` as the rows of the input→hidden matrix of a quadratic
/// input layer under a log-sum-exp hidden layer with one unit per pattern.
///
/// The input layer has `τ = 1` and the hidden layer is adiabatic (`τ = 0`).
pub fn store_single_hidden(patterns: &PatternSet, beta: f64) -> Result<StoredMemory> {
    store_single_hidden_with_taus(patterns, beta, [1.0, 0.0])
}

pub fn store_single_hidden_with_taus(
    patterns: &PatternSet,
    beta: f64,
    taus: [f64; 2],
) -> Result<StoredMemory> {
    let duplicates = patterns.duplicates();
    for (i, j) in &duplicates {
        log::warn!("patterns {i} and {j} are identical; they share one degenerate attractor");
    }
    let spec = presets::one_hidden_layer(patterns.shape, patterns.len(), patterns.as_rows(), beta, taus)
        .validated()?;
    Ok(StoredMemory { spec, duplicates })
}

/// Outcome of one retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    /// Cosine similarity between the retrieved input layer and the target.
    pub overlap: f64,
    /// Entries whose sign disagrees with a ±1 target; entries within
    /// [`SIGN_TIE_TOLERANCE`] of zero count as wrong.
    pub bit_error: usize,
    pub converged: bool,
    pub steps: usize,
    pub energy_initial: f64,
    pub energy_final: f64,
}

impl RecallReport {
    pub const CSV_HEADER: &'static str = "overlap,bit_error,converged,steps,energy_initial,energy_final";

    /// Exact sign match for ±1 targets, overlap ≥ 0.99 otherwise.
    pub fn success(&self, pm1_target: bool) -> bool {
        if pm1_target {
            self.bit_error == 0
        } else {
            self.overlap >= OVERLAP_SUCCESS
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            self.overlap, self.bit_error, self.converged, self.steps, self.energy_initial, self.energy_final
        )
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn sign_errors(x: &[f64], target: &[f64]) -> usize {
    x.iter()
        .zip(target)
        .filter(|(a, t)| !(a.signum() == t.signum() && a.abs() > SIGN_TIE_TOLERANCE * t.abs()))
        .count()
}

/// Relaxes from the retrieval protocol (input layer = cue, hidden layers =
/// 0) and scores the input-layer fixed point against `target`, or against the
/// cue when no target is given. Non-convergence is reported, not raised.
pub fn retrieve(
    spec: &NetworkSpec,
    cue: &[f64],
    target: Option<&[f64]>,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, RecallReport)> {
    let init = NetworkState::with_input(spec, cue)?;
    let energy_initial = crate::energy::global_energy(spec, &init)?.total;
    let out = dynamics::relax_endpoints(spec, &init, cfg)?;
    let energy_final = out.trace.rows.last().expect("at least one row").energy;
    let retrieved = out.state.layers[0].clone();
    let target = target.unwrap_or(cue);
    let report = RecallReport {
        overlap: cosine(&retrieved, target),
        bit_error: sign_errors(&retrieved, target),
        converged: out.converged,
        steps: out.steps,
        energy_initial,
        energy_final,
    };
    Ok((retrieved, report))
}

/// Parameters of a capacity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySweep {
    pub n1: usize,
    pub k_list: Vec<usize>,
    pub beta_list: Vec<f64>,
    /// Seed of the per-trial corruption streams; see [`capacity_sweep`].
    pub noise: NoiseModel,
    pub trials: usize,
    /// Seed of the per-trial pattern sets.
    pub seed: u64,
    /// Integrator for every retrieval; `None` uses the network default.
    pub integrator: Option<IntegratorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub k: usize,
    pub beta: f64,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
}

pub const CAPACITY_CSV_HEADER: &str = "K,beta,trials,success_rate,mean_steps";

pub fn write_capacity_csv<W: Write>(mut w: W, rows: &[CapacityRow]) -> std::io::Result<()> {
    writeln!(w, "{CAPACITY_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.k, r.beta, r.trials, r.success_rate, r.mean_steps)?;
    }
    Ok(())
}

/// Recall success rates over a `(K, β)` grid.
///
/// Trial `t` at load `K` stores `K` fresh uniform ±1 patterns drawn from
/// seed `derive_seed(seed, [K, t])`, corrupts every pattern `μ` with the noise
/// model reseeded to `derive_seed(noise.seed, [K, t, μ])`, retrieves each,
/// and counts exact sign matches. The same patterns and cues are reused for
/// every `β`. The rate is over all `trials × K` retrievals. Trials run in
/// parallel and are reduced in trial order.
pub fn capacity_sweep(sweep: &CapacitySweep) -> Result<Vec<CapacityRow>> {
    if sweep.trials == 0 {
        return Err(HamError::InvalidArgument("trials must be at least 1".into()));
    }
    if sweep.n1 == 0 {
        return Err(HamError::InvalidArgument("n1 must be at least 1".into()));
    }
    sweep.noise.check()?;
    let mut rows = Vec::with_capacity(sweep.k_list.len() * sweep.beta_list.len());
    for &k in &sweep.k_list {
        if k == 0 {
            return Err(HamError::InvalidArgument("K must be at least 1".into()));
        }
        for &beta in &sweep.beta_list {
            let per_trial: Vec<(usize, usize)> = (0..sweep.trials)
                .into_par_iter()
                .map(|t| run_trial(sweep, k, beta, t))
                .collect::<Result<Vec<_>>>()?;
            let (hits, steps) = per_trial
                .iter()
                .fold((0usize, 0usize), |(h, s), (a, b)| (h + a, s + b));
            let total = (sweep.trials * k) as f64;
            rows.push(CapacityRow {
                k,
                beta,
                trials: sweep.trials,
                success_rate: hits as f64 / total,
                mean_steps: steps as f64 / total,
            });
        }
    }
    Ok(rows)
}

fn run_trial(sweep: &CapacitySweep, k: usize, beta: f64, trial: usize) -> Result<(usize, usize)> {
    let mut r = rng::rng(rng::derive_seed(sweep.seed, &[k as u64, trial as u64]));
    let set = PatternSet::random_pm1(&mut r, k, sweep.n1)?;
    let stored = store_single_hidden(&set, beta)?;
    let cfg = sweep
        .integrator
        .clone()
        .unwrap_or_else(|| IntegratorConfig::for_spec(&stored.spec));
    let mut hits = 0;
    let mut steps = 0;
    for (mu, p) in set.patterns.iter().enumerate() {
        let noise = sweep
            .noise
            .with_seed(rng::derive_seed(sweep.noise.seed, &[k as u64, trial as u64, mu as u64]));
        let cue = corrupt(p, &noise)?;
        let (_, report) = retrieve(&stored.spec, &cue, Some(p), &cfg)?;
        steps += report.steps;
        if report.success(true) {
            hits += 1;
        }
    }
    Ok((hits, steps))
}

/// The hand-built convolutional assembly network and the composite images
/// it stores.
#[derive(Debug, Clone)]
pub struct AssemblyDemo {
    pub spec: NetworkSpec,
    /// Composite images, one per layout, as `[L, L, 1]` maps.
    pub memories: PatternSet,
    /// Patch dictionary: one `w × w` ±1 patch per conv channel.
    pub patches: Vec<Vec<f64>>,
    /// For each layout, the patch index placed at each feature-map site.
    pub layouts: Vec<Vec<usize>>,
    pub geometry: ConvStack,
}

impl AssemblyDemo {
    /// Builds a demo from an arbitrary patch dictionary and layout list.
    ///
    /// Patches tile the image without overlap (`stride = window`). The conv
    /// kernel's channel `c` is patch `c`; row `α` of the dense matrix is the
    /// one-hot indicator of layout `α`'s patch choices.
    pub fn build(
        window: usize,
        sites_per_side: usize,
        patches: Vec<Vec<f64>>,
        layouts: Vec<Vec<usize>>,
        beta2: f64,
        beta3: f64,
        taus: [f64; 3],
    ) -> Result<Self> {
        let c_out = patches.len();
        let sites = sites_per_side * sites_per_side;
        if patches.iter().any(|p| p.len() != window * window) {
            return Err(HamError::InvalidArgument("every patch must have window² pixels".into()));
        }
        if layouts.iter().any(|l| l.len() != sites || l.iter().any(|&c| c >= c_out)) {
            return Err(HamError::InvalidArgument("every layout must name one patch per site".into()));
        }
        let geometry = ConvStack {
            image: window * sites_per_side,
            in_channels: 1,
            window,
            stride: window,
            out_channels: c_out,
            top: layouts.len(),
            beta2,
            beta3,
            taus,
        };
        let mut kernel = vec![0.0; window * window * c_out];
        for (c, p) in patches.iter().enumerate() {
            for (i, v) in p.iter().enumerate() {
                kernel[i * c_out + c] = *v;
            }
        }
        let mut psi = vec![0.0; layouts.len() * sites * c_out];
        for (a, layout) in layouts.iter().enumerate() {
            for (site, &c) in layout.iter().enumerate() {
                psi[a * sites * c_out + site * c_out + c] = 1.0;
            }
        }
        let spec = geometry.build(kernel, psi).validated()?;
        let side = geometry.image;
        let memories = layouts
            .iter()
            .map(|layout| {
                let mut img = vec![0.0; side * side];
                for (site, &c) in layout.iter().enumerate() {
                    let (sy, sx) = (site / sites_per_side, site % sites_per_side);
                    for ky in 0..window {
                        for kx in 0..window {
                            img[(sy * window + ky) * side + sx * window + kx] = patches[c][ky * window + kx];
                        }
                    }
                }
                img
            })
            .collect();
        let memories = PatternSet::new(Shape::map(side, side, 1), memories)?;
        Ok(AssemblyDemo {
            spec,
            memories,
            patches,
            layouts,
            geometry,
        })
    }

    /// Layouts that use patch `c`.
    pub fn layouts_using(&self, c: usize) -> Vec<usize> {
        (0..self.layouts.len())
            .filter(|&a| self.layouts[a].contains(&c))
            .collect()
    }
}

/// Three 3×3 ±1 patches (pairwise overlaps ±1) assembled by three layouts
/// on a 2×2 grid of sites into 6×6 images. Patch 1 appears in every layout.
pub fn build_assembly_demo() -> Result<AssemblyDemo> {
    #[rustfmt::skip]
    let patches = vec![
        vec![ 1.0,  1.0,  1.0,   1.0,  1.0,  1.0,  -1.0, -1.0, -1.0],
        vec![ 1.0,  1.0, -1.0,   1.0,  1.0, -1.0,   1.0,  1.0, -1.0],
        vec![ 1.0, -1.0,  1.0,  -1.0,  1.0, -1.0,   1.0, -1.0,  1.0],
    ];
    let layouts = vec![vec![0, 1, 1, 2], vec![1, 0, 2, 1], vec![2, 2, 0, 1]];
    AssemblyDemo::build(3, 2, patches, layouts, 2.0, 4.0, [1.0, 0.1, 0.0])
}
