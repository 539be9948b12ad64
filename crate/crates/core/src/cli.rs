//! Command-line front end.
//!
//! Every subcommand prints one JSON object on success. Failures print a JSON
//! error object on stderr and exit with 2 (configuration), 3 (training
//! diverged) or 4 (numerical or I/O failure).

use crate::config::{parse_config, ConfigError, Experiment};
use crate::geometry::{PerforatedDomain, Rect, Vec2};
use crate::homog::{effective_tensor, relative_l2, solve_homogenized, CellGeometry, GridField, HomogError};
use crate::network::{load_checkpoint, FourierNetwork, NetworkError};
use crate::oracle::{default_probes, estimate_table, ring_probes, OracleError, OracleRecord};
use crate::sde::Fields;
use crate::trainer::{train, RunOutput, TrainError};
use clap::{Parser, Subcommand};
use serde_json::json;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "dflm", version, about = "Mesh-free solver for elliptic problems on perforated domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network; writes metrics.jsonl and checkpoints to DIR.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Evaluate a checkpoint on an N x N lattice and write it as CSV.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_name = "N")]
        grid: usize,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Monte Carlo reference values at probe points.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// JSON array of [x1, x2] pairs.
        #[arg(long, value_name = "FILE", conflicts_with = "ring")]
        points: Option<PathBuf>,
        /// Two rings of N points each around the perforations.
        #[arg(long, value_name = "N")]
        ring: Option<usize>,
        #[arg(long)]
        walkers: Option<usize>,
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Effective tensor and homogenized solution for a periodic lattice.
    Homogenize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_name = "N")]
        resolution: usize,
        /// JSON summary; the field goes next to it with a .csv extension.
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Relative L2 difference of two grid CSV files, relative to A.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Homog(#[from] HomogError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Train(TrainError::Diverged { .. }) => 3,
            CliError::Train(TrainError::Timestep { .. } | TrainError::Invalid(_)) => 2,
            CliError::Oracle(OracleError::Nonlinear | OracleError::Timestep { .. } | OracleError::Invalid(_)) => 2,
            _ => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "diverged",
            _ => "numerical",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Config(c) = self {
            v["problems"] = json!(c.problems());
        }
        v
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Network values on the `n × n` lattice over the domain rectangle, with
/// nodes inside perforations masked out.
pub fn export_grid(net: &FourierNetwork, domain: &PerforatedDomain, n: usize) -> Result<GridField, NetworkError> {
    let mut field = GridField::lattice(domain.rect(), n, |_| 0.0);
    let pts: Vec<Vec2> = (0..n * n).map(|k| field.point(k % n, k / n)).collect();
    field.values = net.forward(&pts)?;
    field.apply_mask(domain);
    Ok(field)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    std::fs::write(path, text + "\n").map_err(io_err(format!("writing {}", path.display())))
}

fn probe_points(exp: &Experiment, points: Option<&Path>, ring: Option<usize>) -> Result<Vec<Vec2>, CliError> {
    if let Some(path) = points {
        let text = std::fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        let pts: Vec<Vec2> = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: expected a JSON array of [x1, x2] pairs ({e})", path.display())))?;
        if let Some(p) = pts.iter().find(|p| !exp.domain.is_interior(**p)) {
            return Err(CliError::Usage(format!("point ({}, {}) is not an interior point", p[0], p[1])));
        }
        return Ok(pts);
    }
    if let Some(n) = ring {
        if n == 0 {
            return Err(CliError::Usage("--ring needs at least one point per ring".into()));
        }
        return Ok(ring_probes(&exp.domain, n, exp.config.seed));
    }
    Ok(exp
        .config
        .oracle
        .probes
        .clone()
        .unwrap_or_else(|| default_probes(&exp.domain, exp.config.seed)))
}

fn run_train(config: &Path, out: &Path, seed: Option<u64>, iterations: Option<u64>) -> Result<serde_json::Value, CliError> {
    let mut exp = parse_config(config)?;
    if let Some(s) = seed {
        exp = exp.with_seed(s);
    }
    if let Some(n) = iterations {
        exp.config.training.iterations = n;
    }
    std::fs::create_dir_all(out).map_err(io_err(format!("creating {}", out.display())))?;
    let problem = exp.problem();
    let cfg = exp.train_config();
    cfg.validate(&problem.domain)?;

    let mut net = FourierNetwork::init(&exp.config.network, exp.config.seed)?;
    if let Some(c) = exp.config.training.init_constant {
        net.set_constant_output(c);
    }

    let probes = if cfg.validate_every > 0 {
        let pts = probe_points(&exp, None, None)?;
        let table = estimate_table(&problem.domain, problem.fields.as_ref(), problem.dirichlet.as_ref(), &pts, &exp.oracle_config())?;
        write_json(&out.join("probes.json"), &json!(table))?;
        Some(table)
    } else {
        None
    };

    let metrics_path = out.join("metrics.jsonl");
    let file = std::fs::File::create(&metrics_path).map_err(io_err(format!("creating {}", metrics_path.display())))?;
    let mut output = RunOutput {
        metrics: Some(Box::new(std::io::BufWriter::new(file))),
        checkpoint_dir: Some(out.to_path_buf()),
        log_wall_time: exp.config.output.log_wall_time,
    };
    let (_, history) = train(&problem, &cfg, net, probes.as_deref(), &mut output)?;
    drop(output);
    let last = history.last();
    Ok(json!({
        "iterations": history.len(),
        "final_loss": last.map(|h| h.loss),
        "metrics": metrics_path,
        "checkpoint": out.join(crate::trainer::FINAL_CHECKPOINT),
    }))
}

fn run_evaluate(checkpoint: &Path, grid: usize, out: &Path) -> Result<serde_json::Value, CliError> {
    if grid < 2 {
        return Err(CliError::Usage("--grid must be at least 2".into()));
    }
    let file = std::fs::File::open(checkpoint).map_err(io_err(format!("opening {}", checkpoint.display())))?;
    let (net, header) = load_checkpoint(std::io::BufReader::new(file))?;
    let domain = match header.domain {
        Some(layout) => PerforatedDomain::from(layout),
        None => PerforatedDomain::new(Rect::unit_square(), vec![]),
    };
    let field = export_grid(&net, &domain, grid)?;
    field.save(out)?;
    Ok(json!({
        "rows": field.values.len(),
        "masked_out": field.masked_out(),
        "out": out,
        "iteration": header.iteration,
    }))
}

fn run_oracle(
    config: &Path,
    points: Option<&Path>,
    ring: Option<usize>,
    walkers: Option<usize>,
    out: &Path,
) -> Result<serde_json::Value, CliError> {
    let exp = parse_config(config)?;
    let problem = exp.problem();
    let mut cfg = exp.oracle_config();
    if let Some(n) = walkers {
        cfg.n_walkers = n;
    }
    let pts = probe_points(&exp, points, ring)?;
    let table: Vec<OracleRecord> =
        estimate_table(&problem.domain, problem.fields.as_ref(), problem.dirichlet.as_ref(), &pts, &cfg)?;
    write_json(out, &json!(table))?;
    Ok(json!({ "points": table.len(), "out": out, "records": table }))
}

fn run_homogenize(config: &Path, resolution: usize, out: &Path) -> Result<serde_json::Value, CliError> {
    let exp = parse_config(config)?;
    let d = &exp.config.domain;
    let Some(lattice) = d.lattice else {
        return Err(CliError::Usage("homogenize needs a domain.lattice section".into()));
    };
    if !d.perforations.is_empty() {
        return Err(CliError::Usage("homogenize needs a purely periodic domain (no extra perforations)".into()));
    }
    let px = (d.hi[0] - d.lo[0]) / lattice.count[0] as f64;
    let py = (d.hi[1] - d.lo[1]) / lattice.count[1] as f64;
    if (px - py).abs() > 1e-12 * px.max(py) {
        return Err(CliError::Usage(format!("lattice cells are not square ({px} x {py})")));
    }
    if exp.fields.has_drift() || exp.fields.uses_solution() {
        return Err(CliError::Usage("homogenize supports drift-free linear problems only".into()));
    }
    if resolution < 3 {
        return Err(CliError::Usage("--resolution must be at least 3".into()));
    }
    let cell = CellGeometry::from_lattice(px, lattice.radius)?;
    let a0 = effective_tensor(&cell, exp.config.homogenization.cell_resolution)?;

    // the generator is ½Δ, so the divergence-form source is 2G
    let fields = exp.fields.clone();
    let source = move |x: Vec2| 2.0 * fields.source(x, 0.0);
    let problem = exp.problem();
    let g = problem.dirichlet.clone();
    let mut field = solve_homogenized(&a0, &source, &move |x| g(x), exp.domain.rect(), resolution)?;
    field.apply_mask(&exp.domain);
    let csv = out.with_extension("csv");
    field.save(&csv)?;
    let summary = json!({
        "a0": a0.a,
        "porosity": a0.porosity,
        "cell_resolution": exp.config.homogenization.cell_resolution,
        "resolution": resolution,
        "field": csv,
    });
    write_json(out, &summary)?;
    Ok(summary)
}

fn run_compare(a: &Path, b: &Path) -> Result<serde_json::Value, CliError> {
    let fa = GridField::load(a)?;
    let fb = GridField::load(b)?;
    let err = relative_l2(&fa, &fb)?;
    Ok(json!({ "relative_l2": err, "nodes": fa.values.len(), "masked_out": fa.masked_out() }))
}

pub fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    match &cli.command {
        Command::Train {
            config,
            out,
            seed,
            iterations,
        } => run_train(config, out, *seed, *iterations),
        Command::Evaluate { checkpoint, grid, out } => run_evaluate(checkpoint, *grid, out),
        Command::Oracle {
            config,
            points,
            ring,
            walkers,
            out,
        } => run_oracle(config, points.as_deref(), *ring, *walkers, out),
        Command::Homogenize { config, resolution, out } => run_homogenize(config, *resolution, out),
        Command::Compare { a, b } => run_compare(a, b),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(v) => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{v}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
