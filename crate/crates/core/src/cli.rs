//! The `ham` command-line front end.
//!
//! Exit codes: 0 on success, 1 on a domain error (invalid network, numerical
//! failure, unreadable data), 2 on a malformed config or bad arguments.
//! Relative output paths are resolved against `$HAM_OUTPUT_DIR` when it is set.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{ConfigError, ExperimentConfig};
use crate::dynamics;
use crate::error::HamError;
use crate::memory::{self, NoiseKind, NoiseModel, RecallReport};
use crate::patterns;
use crate::rng;
use crate::topology::NetworkSpec;
use crate::{container, trainer};

pub const OUTPUT_DIR_ENV: &str = "HAM_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "ham", version, about = "Hierarchical associative memory networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a config and its network.
    Validate { config: PathBuf },
    /// Relax a network from the configured initial state.
    Relax {
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Add per-layer Legendre and per-connection interaction columns.
        #[arg(long)]
        energy_breakdown: bool,
    },
    /// Retrieve a memory from a cue.
    Retrieve {
        config: PathBuf,
        /// Cue file (CSV, first row, or PGM).
        #[arg(long)]
        cue: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Also write the retrieved input-layer state as one CSV row.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Recall success over a grid of loads and inverse temperatures.
    Capacity {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured network by unrolled backpropagation.
    Train {
        config: PathBuf,
        /// Trained network, binary container.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        curve: PathBuf,
        /// Also write the trained network as TOML text.
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Built-in demonstrations.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
}

#[derive(Debug, Subcommand)]
pub enum Demo {
    /// Composite memories assembled from shared convolutional patches.
    Assembly {
        /// Directory for `assembly.csv` and the PGM images.
        #[arg(long, default_value = "assembly")]
        out_dir: PathBuf,
        /// Seed of the masking noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of pixels zeroed in each cue.
        #[arg(long, default_value_t = 0.5)]
        mask: f64,
    },
}

/// A failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Domain(HamError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Domain(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<HamError> for CliError {
    fn from(e: HamError) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(e.into())
    }
}

type CliResult = Result<(), CliError>;

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> CliResult {
    match command {
        Command::Validate { config } => validate(config),
        Command::Relax {
            config,
            trace,
            energy_breakdown,
        } => relax(config, trace, *energy_breakdown),
        Command::Retrieve {
            config,
            cue,
            report,
            output,
        } => retrieve(config, cue, report, output.as_deref()),
        Command::Capacity { config, out } => capacity(config, out),
        Command::Train {
            config,
            out,
            curve,
            text,
        } => train(config, out, curve, text.as_deref()),
        Command::Demo {
            which: Demo::Assembly { out_dir, seed, mask },
        } => demo_assembly(out_dir, *seed, *mask),
    }
}

/// `path` under `$HAM_OUTPUT_DIR` when it is relative and the variable is set.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let path = output_path(path);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(&path).map_err(|e| {
        HamError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

fn network(cfg: &ExperimentConfig) -> Result<NetworkSpec, CliError> {
    Ok(cfg.network()?.validated()?)
}

fn validate(path: &Path) -> CliResult {
    let cfg = ExperimentConfig::load(path)?;
    if cfg.has_network() {
        let spec = network(&cfg)?;
        cfg.integrator(&spec)?;
        println!("{}: valid network", path.display());
        for (i, l) in spec.layers.iter().enumerate() {
            println!("  layer {} '{}': shape {}, tau {}", i + 1, l.name, l.shape, l.tau);
        }
        for c in &spec.connections {
            println!("  connection {}→{}: {} ({} weights)", c.lower + 1, c.upper + 1, c.kind_name(), c.weights().len());
        }
    } else {
        println!("{}: valid config (no network)", path.display());
    }
    cfg.noise()?;
    Ok(())
}

fn relax(path: &Path, trace: &Path, breakdown: bool) -> CliResult {
    let cfg = ExperimentConfig::load(path)?;
    let spec = network(&cfg)?;
    let integ = cfg.integrator(&spec)?;
    let init = cfg.relax_init(&spec)?;
    let out = dynamics::relax(&spec, &init, &integ)?;
    let mut w = create(trace)?;
    out.trace.write_csv(&mut w, breakdown)?;
    w.flush()?;
    let last = out.trace.rows.last().expect("at least one row");
    println!(
        "steps {} converged {} energy {:.12e} max_velocity {:.3e}",
        out.steps, out.converged, last.energy, last.max_velocity
    );
    Ok(())
}

fn retrieve(path: &Path, cue: &Path, report: &Path, output: Option<&Path>) -> CliResult {
    let cfg = ExperimentConfig::load(path)?;
    let spec = network(&cfg)?;
    let integ = cfg.integrator(&spec)?;
    let target = cfg.retrieve_target()?;
    let mut cue = patterns::read_any(cue)?.patterns.swap_remove(0);
    if cfg.retrieve().corrupt {
        let Some(noise) = cfg.noise()? else {
            return Err(ConfigError {
                file: Some(path.to_path_buf()),
                line: None,
                field: Some("retrieve field 'corrupt'".into()),
                message: "needs a [noise] section".into(),
            }
            .into());
        };
        cue = memory::corrupt(&cue, &noise)?;
    }
    let (retrieved, rep) = memory::retrieve(&spec, &cue, target.as_deref(), &integ)?;
    let mut w = create(report)?;
    rep.write_csv(&mut w)?;
    w.flush()?;
    if let Some(o) = output {
        let mut w = create(o)?;
        patterns::write_csv(&mut w, &patterns::PatternSet::new(spec.layers[0].shape, vec![retrieved])?)?;
        w.flush()?;
    }
    println!(
        "overlap {:.6} bit_error {} converged {} steps {}",
        rep.overlap, rep.bit_error, rep.converged, rep.steps
    );
    Ok(())
}

fn capacity(path: &Path, out: &Path) -> CliResult {
    let cfg = ExperimentConfig::load(path)?;
    let sweep = cfg.capacity()?;
    let rows = memory::capacity_sweep(&sweep)?;
    let mut w = create(out)?;
    memory::write_capacity_csv(&mut w, &rows)?;
    w.flush()?;
    for r in &rows {
        println!("K {:>4} beta {:<8} success {:.3} mean_steps {:.1}", r.k, r.beta, r.success_rate, r.mean_steps);
    }
    Ok(())
}

fn train(path: &Path, out: &Path, curve: &Path, text: Option<&Path>) -> CliResult {
    let cfg = ExperimentConfig::load(path)?;
    let spec = network(&cfg)?;
    let (corpus, tcfg) = cfg.train()?;
    let result = trainer::train(&spec, &corpus, &tcfg)?;
    let mut w = create(curve)?;
    result.write_curve(&mut w)?;
    w.flush()?;
    let mut w = create(out)?;
    w.write_all(&container::encode(&result.spec))?;
    w.flush()?;
    if let Some(t) = text {
        let mut w = create(t)?;
        w.write_all(crate::config::network_to_toml(&result.spec).as_bytes())?;
        w.flush()?;
    }
    println!(
        "epochs {} final_loss {:.6e}{}",
        result.loss_curve.len(),
        result.final_loss,
        if result.diverged { " (diverged)" } else { "" }
    );
    if result.diverged {
        return Err(HamError::InvalidArgument("training diverged; partial loss curve written".into()).into());
    }
    Ok(())
}

fn demo_assembly(out_dir: &Path, seed: u64, mask: f64) -> CliResult {
    let demo = memory::build_assembly_demo()?;
    let integ = dynamics::IntegratorConfig::for_spec(&demo.spec);
    let mut w = create(&out_dir.join("assembly.csv"))?;
    writeln!(w, "memory,layout,{}", RecallReport::CSV_HEADER)?;
    let side = demo.geometry.image;
    for (a, target) in demo.memories.patterns.iter().enumerate() {
        let noise = NoiseModel::new(NoiseKind::Mask { fraction: mask }, rng::derive_seed(seed, &[a as u64]));
        let cue = memory::corrupt(target, &noise)?;
        let (x, rep) = memory::retrieve(&demo.spec, &cue, Some(target), &integ)?;
        let layout: Vec<String> = demo.layouts[a].iter().map(|c| c.to_string()).collect();
        writeln!(
            w,
            "{a},{},{},{},{},{},{},{}",
            layout.join(" "),
            rep.overlap,
            rep.bit_error,
            rep.converged,
            rep.steps,
            rep.energy_initial,
            rep.energy_final
        )?;
        for (name, img) in [("memory", target), ("cue", &cue), ("retrieved", &x)] {
            let mut p = create(&out_dir.join(format!("{name}_{a}.pgm")))?;
            patterns::write_pgm(&mut p, side, side, img)?;
            p.flush()?;
        }
        println!(
            "memory {a} (patches {}): overlap {:.6} bit_error {} converged {}",
            layout.join(" "),
            rep.overlap,
            rep.bit_error,
            rep.converged
        );
    }
    w.flush()?;
    for c in 0..demo.patches.len() {
        println!("patch {c} is used by layouts {:?}", demo.layouts_using(c));
    }
    Ok(())
}
