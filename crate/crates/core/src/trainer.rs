//! The derivative-free training loop.
//!
//! Each outer iteration draws fresh collocation points, builds martingale
//! targets from short walker paths and a frozen copy of the network, takes a
//! few Adam steps on the squared deviation, and then refreshes the frozen
//! copy.

use crate::geometry::{GeometryError, PerforatedDomain, Perforation, Vec2};
use crate::network::{
    adam_step, learning_rate, save_checkpoint, AdamState, CheckpointHeader, FourierNetwork, NetworkError,
};
use crate::oracle::{compare_network, OracleRecord};
use crate::rng::{self, tag};
use crate::sde::{check_timestep, simulate_paths, Fields, SdeError, StepConfig, StreamKey, WalkerStatus};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

/// Losses above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Diverged { iteration: u64, loss: f64 },
    #[error("timestep check failed: mean step {mean_step:.4e} exceeds 0.2 x min radius {min_radius}")]
    Timestep { mean_step: f64, min_radius: f64 },
    #[error("invalid training settings: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type BoundaryFn = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;

/// Domain, fields and Dirichlet data of one boundary value problem.
#[derive(Clone)]
pub struct Problem {
    pub domain: PerforatedDomain,
    pub fields: Arc<dyn Fields>,
    pub dirichlet: BoundaryFn,
}

impl Problem {
    pub fn new(domain: PerforatedDomain, fields: impl Fields + 'static, dirichlet: impl Fn(Vec2) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            domain,
            fields: Arc::new(fields),
            dirichlet: Arc::new(dirichlet),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_collocation: usize,
    pub n_walkers: usize,
    pub step: StepConfig,
    pub inner_steps: usize,
    pub iterations: u64,
    pub alpha0: f64,
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Oracle probe comparison every this many iterations; 0 disables it.
    pub validate_every: u64,
    /// Checkpoint every this many iterations; 0 keeps only the final one.
    pub checkpoint_every: u64,
}

impl TrainConfig {
    pub fn validate(&self, domain: &PerforatedDomain) -> Result<(), TrainError> {
        if self.n_collocation == 0 || self.n_walkers == 0 || self.inner_steps == 0 {
            return Err(TrainError::Invalid(
                "n_collocation, n_walkers and inner_steps must be at least 1".into(),
            ));
        }
        if !self.step.is_valid() {
            return Err(TrainError::Invalid("dt_micro must be positive and M at least 1".into()));
        }
        if !(self.alpha0 > 0.0) || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(TrainError::Invalid("need alpha0 > 0 and gamma in (0, 1]".into()));
        }
        if let Some(r) = domain.min_radius() {
            let c = check_timestep(self.step.dt_micro, r);
            if !c.ok {
                return Err(TrainError::Timestep {
                    mean_step: c.mean_step,
                    min_radius: r,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: u64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_rmse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub current: FourierNetwork,
    pub frozen: FourierNetwork,
    pub adam: AdamState,
    pub iteration: u64,
    pub history: Vec<HistoryEntry>,
}

impl TrainState {
    pub fn new(net: FourierNetwork, cfg: &TrainConfig) -> Self {
        let adam = AdamState::new(net.num_params(), cfg.beta1, cfg.beta2);
        Self {
            frozen: net.clone(),
            current: net,
            adam,
            iteration: 0,
            history: Vec::new(),
        }
    }
}

/// Collocation points of outer iteration `iteration`.
pub fn collocation_points(problem: &Problem, cfg: &TrainConfig, iteration: u64) -> Result<Vec<Vec2>, TrainError> {
    let mut rng = rng::substream(cfg.seed, &[tag::COLLOCATION, iteration]);
    Ok(problem.domain.sample_collocation(cfg.n_collocation, &mut rng)?)
}

/// Martingale targets at `points`, built from walkers of outer iteration
/// `iteration` and the network `frozen`.
pub fn compute_targets(
    frozen: &FourierNetwork,
    problem: &Problem,
    points: &[Vec2],
    cfg: &TrainConfig,
    iteration: u64,
) -> Result<Vec<f64>, TrainError> {
    let u_eval = |x: Vec2| frozen.eval(x);
    let batch = simulate_paths(
        &problem.domain,
        problem.fields.as_ref(),
        &u_eval,
        points,
        cfg.n_walkers,
        &cfg.step,
        StreamKey {
            seed: cfg.seed,
            iteration,
        },
    )?;

    // one batched network call for every walker still inside
    let terminals: Vec<Vec2> = batch.states.iter().filter(|w| w.is_active()).map(|w| w.position).collect();
    let values = frozen.forward(&terminals)?;
    let mut next_value = values.into_iter();

    let g = problem.dirichlet.as_ref();
    let mut targets = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let mut sum = 0.0;
        for w in batch.walkers_of(i) {
            let terminal = match w.status {
                WalkerStatus::Active => next_value.next().expect("one value per active walker"),
                WalkerStatus::Killed { exit_point, .. } => g(exit_point),
            };
            sum += (terminal - w.integral_g) * w.weight();
        }
        targets.push(sum / cfg.n_walkers as f64);
    }
    Ok(targets)
}

/// Mean squared deviation from `targets` and its parameter gradient.
pub fn loss_and_grad(net: &FourierNetwork, points: &[Vec2], targets: &[f64]) -> Result<(f64, Vec<f64>), TrainError> {
    assert_eq!(points.len(), targets.len());
    let n = points.len() as f64;
    let tape = net.forward_with_tape(points)?;
    let out = tape.output();
    let mut loss = 0.0;
    let mut upstream = Vec::with_capacity(points.len());
    for (u, t) in out.iter().zip(targets) {
        let r = u - t;
        loss += r * r;
        upstream.push(2.0 * r / n);
    }
    let mut grads = vec![0.0; net.num_params()];
    net.backward_from(&tape, &upstream, &mut grads);
    Ok((loss / n, grads))
}

/// What one outer iteration did.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: u64,
    /// Loss before the first inner step.
    pub loss: f64,
    /// Loss before each inner step.
    pub inner_losses: Vec<f64>,
    pub lr: f64,
}

/// One outer iteration: targets once, `inner_steps` Adam updates, then the
/// frozen copy catches up.
pub fn train_iteration(state: &mut TrainState, problem: &Problem, cfg: &TrainConfig) -> Result<IterationReport, TrainError> {
    let n = state.iteration;
    let points = collocation_points(problem, cfg, n)?;
    let targets = compute_targets(&state.frozen, problem, &points, cfg, n)?;
    let lr = learning_rate(cfg.alpha0, cfg.gamma, n);
    let mut inner_losses = Vec::with_capacity(cfg.inner_steps);
    for _ in 0..cfg.inner_steps {
        let (loss, grads) = loss_and_grad(&state.current, &points, &targets)?;
        inner_losses.push(loss);
        if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
            return Err(TrainError::Diverged { iteration: n, loss });
        }
        adam_step(state.current.params_mut(), &grads, &mut state.adam, lr);
    }
    state.frozen = state.current.clone();
    state.iteration += 1;
    let loss = inner_losses[0];
    state.history.push(HistoryEntry {
        iteration: n,
        loss,
        probe_rmse: None,
    });
    Ok(IterationReport {
        iteration: n,
        loss,
        inner_losses,
        lr,
    })
}

/// One metrics line per outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub loss: f64,
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Where a run writes its artifacts.
#[derive(Default)]
pub struct RunOutput {
    pub metrics: Option<Box<dyn Write>>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Adds `wall_ms` to metrics lines, which makes logs differ between runs.
    pub log_wall_time: bool,
}

pub fn checkpoint_name(iteration: u64) -> String {
    format!("checkpoint_{iteration:07}.bin")
}

pub const FINAL_CHECKPOINT: &str = "final.bin";

fn write_checkpoint(net: &FourierNetwork, problem: &Problem, cfg: &TrainConfig, iteration: u64, path: PathBuf) -> Result<(), TrainError> {
    let header = CheckpointHeader {
        config: net.config().clone(),
        seed: cfg.seed,
        iteration,
        domain: Some(problem.domain.layout()),
    };
    let file = std::fs::File::create(path)?;
    save_checkpoint(net, &header, std::io::BufWriter::new(file))?;
    Ok(())
}

/// Runs `cfg.iterations` outer iterations from `init`.
///
/// `probes` is an oracle table used for the periodic validation metric.
pub fn train(
    problem: &Problem,
    cfg: &TrainConfig,
    init: FourierNetwork,
    probes: Option<&[OracleRecord]>,
    output: &mut RunOutput,
) -> Result<(FourierNetwork, Vec<HistoryEntry>), TrainError> {
    cfg.validate(&problem.domain)?;
    if let Some(dir) = &output.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut state = TrainState::new(init, cfg);
    let started = Instant::now();
    while state.iteration < cfg.iterations {
        let report = match train_iteration(&mut state, problem, cfg) {
            Ok(r) => r,
            Err(e) => {
                if let (TrainError::Diverged { iteration, loss }, Some(out)) = (&e, output.metrics.as_mut()) {
                    let rec = MetricsRecord {
                        iteration: *iteration,
                        loss: *loss,
                        lr: learning_rate(cfg.alpha0, cfg.gamma, *iteration),
                        wall_ms: None,
                        probe_rmse: None,
                        error: Some(e.to_string()),
                    };
                    writeln!(out, "{}", serde_json::to_string(&rec).expect("metrics serialize"))?;
                    out.flush()?;
                }
                return Err(e);
            }
        };
        let done = state.iteration;
        let probe_rmse = match probes {
            Some(table) if cfg.validate_every > 0 && done % cfg.validate_every == 0 => {
                compare_network(&state.current, table, 0.0).rms_relative
            }
            _ => None,
        };
        if let Some(last) = state.history.last_mut() {
            last.probe_rmse = probe_rmse;
        }
        if let Some(out) = output.metrics.as_mut() {
            let rec = MetricsRecord {
                iteration: report.iteration,
                loss: report.loss,
                lr: report.lr,
                wall_ms: output.log_wall_time.then(|| started.elapsed().as_millis() as u64),
                probe_rmse,
                error: None,
            };
            writeln!(out, "{}", serde_json::to_string(&rec).expect("metrics serialize"))?;
        }
        if let Some(dir) = &output.checkpoint_dir {
            if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
                write_checkpoint(&state.current, problem, cfg, done, dir.join(checkpoint_name(done)))?;
            }
        }
    }
    if let Some(out) = output.metrics.as_mut() {
        out.flush()?;
    }
    if let Some(dir) = &output.checkpoint_dir {
        write_checkpoint(&state.current, problem, cfg, state.iteration, dir.join(FINAL_CHECKPOINT))?;
    }
    Ok((state.current, state.history))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeumannReport {
    /// Mean of `|∂u/∂n|` over the probe points.
    pub mean_normal: f64,
    /// Mean of `|∇u|` over the same points.
    pub mean_gradient: f64,
}

impl NeumannReport {
    pub fn ratio(&self) -> f64 {
        self.mean_normal / self.mean_gradient
    }
}

/// Central-difference normal derivative at `n_points` equally spaced points
/// on the perforation boundary.
pub fn neumann_residual(net: &FourierNetwork, perf: &Perforation, n_points: usize, h: f64) -> NeumannReport {
    let mut pts = Vec::with_capacity(6 * n_points);
    for k in 0..n_points {
        let t = std::f64::consts::TAU * k as f64 / n_points as f64;
        let nrm = [t.cos(), t.sin()];
        let p = [perf.center[0] + perf.radius * nrm[0], perf.center[1] + perf.radius * nrm[1]];
        pts.push([p[0] + h * nrm[0], p[1] + h * nrm[1]]);
        pts.push([p[0] - h * nrm[0], p[1] - h * nrm[1]]);
        pts.push([p[0] + h, p[1]]);
        pts.push([p[0] - h, p[1]]);
        pts.push([p[0], p[1] + h]);
        pts.push([p[0], p[1] - h]);
    }
    let u = net.forward(&pts).unwrap_or_else(|_| vec![f64::NAN; pts.len()]);
    let (mut sn, mut sg) = (0.0, 0.0);
    for c in u.chunks_exact(6) {
        sn += ((c[0] - c[1]) / (2.0 * h)).abs();
        sg += ((c[2] - c[3]) / (2.0 * h)).hypot((c[4] - c[5]) / (2.0 * h));
    }
    NeumannReport {
        mean_normal: sn / n_points as f64,
        mean_gradient: sg / n_points as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeResidualReport {
    /// Median of `|½Δu − G|` over the sampled points.
    pub median: f64,
    pub max: f64,
    pub n_points: usize,
}

/// Five-point Laplacian residual at `n_points` random points at least
/// `margin` away from every boundary.
pub fn pde_residual(
    net: &FourierNetwork,
    problem: &Problem,
    n_points: usize,
    h: f64,
    margin: f64,
    seed: u64,
) -> PdeResidualReport {
    let d = &problem.domain;
    let mut rng = rng::substream(seed, &[tag::PROBES, 1]);
    let mut centres = Vec::with_capacity(n_points);
    let mut attempts = 0usize;
    while centres.len() < n_points && attempts < 10_000 * n_points.max(1) {
        attempts += 1;
        let r = d.rect();
        let p = [
            r.lo[0] + rng.random::<f64>() * r.width(0),
            r.lo[1] + rng.random::<f64>() * r.width(1),
        ];
        let clear = r.distance_to_boundary(p) > margin
            && d.perforations().iter().all(|q| (p[0] - q.center[0]).hypot(p[1] - q.center[1]) - q.radius > margin);
        if clear {
            centres.push(p);
        }
    }
    let mut pts = Vec::with_capacity(5 * centres.len());
    for p in &centres {
        pts.extend_from_slice(&[*p, [p[0] + h, p[1]], [p[0] - h, p[1]], [p[0], p[1] + h], [p[0], p[1] - h]]);
    }
    let u = net.forward(&pts).unwrap_or_else(|_| vec![f64::NAN; pts.len()]);
    let mut res: Vec<f64> = u
        .chunks_exact(5)
        .zip(&centres)
        .map(|(c, &p)| {
            let lap = (c[1] + c[2] + c[3] + c[4] - 4.0 * c[0]) / (h * h);
            (0.5 * lap - problem.fields.source(p, c[0])).abs()
        })
        .collect();
    res.sort_by(|a, b| a.total_cmp(b));
    let median = if res.is_empty() { f64::NAN } else { res[res.len() / 2] };
    PdeResidualReport {
        median,
        max: res.last().copied().unwrap_or(f64::NAN),
        n_points: res.len(),
    }
}
