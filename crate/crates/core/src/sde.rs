//! Micro-stepped walkers: killed at the outer rectangle, reflected at the
//! perforations by the symmetrized Euler scheme.
//!
//! Each walker carries two path integrals alongside its position: the source
//! integral `∫ G ds` and the Girsanov log-weight `∫ V·dB − ½∫ |V|² ds`.
//! Both use left-endpoint quadrature, split at the estimated exit or
//! reflection time inside the micro step where a boundary event occurs.

use crate::geometry::{
    add, dot, norm, project_to_circle, scale, sub, GeometryError, PerforatedDomain, Vec2,
};
use crate::rng::{self, tag};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean-step to radius ratio accepted by [`check_timestep`].
pub const RATIO_THRESHOLD: f64 = 0.2;

/// Maximum number of mirror images applied in a single micro step.
pub const MAX_REFLECTIONS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("timestep too large for geometry: walker at ({x}, {y}) could not be reflected back into the domain", x = .0[0], y = .0[1])]
    TimestepTooLarge(Vec2),
    #[error("walker start ({x}, {y}) is not an interior point", x = .0[0], y = .0[1])]
    StartNotInterior(Vec2),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which process the walkers follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WalkMode {
    /// Walkers carry the drift `V`; no weight is tracked.
    Drifted,
    /// Walkers are Brownian; the drift enters through the Girsanov weight.
    #[default]
    BrownianWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt_micro: f64,
    pub steps_per_macro: usize,
    pub mode: WalkMode,
}

impl StepConfig {
    pub fn new(dt_micro: f64, steps_per_macro: usize, mode: WalkMode) -> Self {
        Self {
            dt_micro,
            steps_per_macro,
            mode,
        }
    }

    /// Macro horizon `M·δt`.
    pub fn dt_macro(&self) -> f64 {
        self.dt_micro * self.steps_per_macro as f64
    }

    pub fn is_valid(&self) -> bool {
        self.dt_micro > 0.0 && self.dt_micro.is_finite() && self.steps_per_macro >= 1
    }
}

/// Drift and source of `½Δu + V·∇u = G`.
pub trait Fields: Send + Sync {
    fn drift(&self, x: Vec2, u: f64) -> Vec2;
    fn source(&self, x: Vec2, u: f64) -> f64;

    /// Whether either field reads the solution value `u`.
    fn uses_solution(&self) -> bool {
        false
    }

    /// Whether the drift can be nonzero anywhere.
    fn has_drift(&self) -> bool {
        true
    }
}

/// Zero drift and constant source: the Poisson problems of the bundled
/// experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSource(pub f64);

impl Fields for ConstantSource {
    fn drift(&self, _x: Vec2, _u: f64) -> Vec2 {
        [0.0, 0.0]
    }
    fn source(&self, _x: Vec2, _u: f64) -> f64 {
        self.0
    }
    fn has_drift(&self) -> bool {
        false
    }
}

/// Fields given by closures of `(x, u)`.
pub struct FnFields<D, S> {
    pub drift: D,
    pub source: S,
    pub uses_solution: bool,
}

impl<D, S> Fields for FnFields<D, S>
where
    D: Fn(Vec2, f64) -> Vec2 + Send + Sync,
    S: Fn(Vec2, f64) -> f64 + Send + Sync,
{
    fn drift(&self, x: Vec2, u: f64) -> Vec2 {
        (self.drift)(x, u)
    }
    fn source(&self, x: Vec2, u: f64) -> f64 {
        (self.source)(x, u)
    }
    fn uses_solution(&self) -> bool {
        self.uses_solution
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WalkerStatus {
    Active,
    /// Absorbed at `exit_point` after fraction `alpha` of the last micro step.
    Killed { exit_point: Vec2, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerState {
    pub position: Vec2,
    pub status: WalkerStatus,
    /// Accumulated `∫ G ds`.
    pub integral_g: f64,
    /// Accumulated `∫ V·dB − ½∫ |V|² ds`.
    pub log_weight: f64,
    pub elapsed: f64,
    /// Completed micro steps, including a final partial one.
    pub steps: u64,
    pub reflections: u32,
}

impl WalkerState {
    pub fn new(position: Vec2) -> Self {
        Self {
            position,
            status: WalkerStatus::Active,
            integral_g: 0.0,
            log_weight: 0.0,
            elapsed: 0.0,
            steps: 0,
            reflections: 0,
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self.status, WalkerStatus::Active)
    }

    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimestepCheck {
    pub mean_step: f64,
    pub ok: bool,
}

/// Compares the mean 2-D Brownian increment `√(π/2)·√δt` with the smallest
/// perforation radius.
pub fn check_timestep(dt_micro: f64, min_radius: f64) -> TimestepCheck {
    let mean_step = (std::f64::consts::FRAC_PI_2).sqrt() * dt_micro.sqrt();
    TimestepCheck {
        mean_step,
        ok: mean_step <= RATIO_THRESHOLD * min_radius,
    }
}

/// Two-segment quadrature of `∫ h ds` over a micro step reflected at
/// fraction `beta`. With `beta = 0` this is the plain left-endpoint rule.
#[inline]
pub fn accumulate_source(h_left: f64, h_proj: f64, beta: f64, dt: f64) -> f64 {
    h_left * (1.0 - beta) * dt + h_proj * beta * dt
}

/// Segment data for a reflected micro step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    /// Projection of the proposal onto the perforation boundary.
    pub proj: Vec2,
    /// Drift evaluated at `proj`.
    pub v_proj: Vec2,
}

/// Increment of `∫ V·dB` over one micro step.
///
/// Without reflection this is `V(B)·(Y − B)`. With reflection the path goes
/// into the boundary and back out: `V(B)·(π − B) + V(π)·(π − Y)`.
#[inline]
pub fn accumulate_girsanov(
    v_left: Vec2,
    b_left: Vec2,
    proposal: Vec2,
    reflection: Option<Reflection>,
) -> f64 {
    match reflection {
        None => dot(v_left, sub(proposal, b_left)),
        Some(r) => dot(v_left, sub(r.proj, b_left)) + dot(r.v_proj, sub(r.proj, proposal)),
    }
}

/// Advances an active walker by one micro step with a standard normal draw.
pub fn micro_step<R: Rng + ?Sized>(
    domain: &PerforatedDomain,
    fields: &dyn Fields,
    u_prev: f64,
    state: &mut WalkerState,
    cfg: &StepConfig,
    rng: &mut R,
) -> Result<(), SdeError> {
    let z = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
    micro_step_with_normal(domain, fields, u_prev, state, cfg, z)
}

/// [`micro_step`] with the Gaussian draw supplied by the caller, so that
/// proposals can be dictated exactly.
pub fn micro_step_with_normal(
    domain: &PerforatedDomain,
    fields: &dyn Fields,
    u_prev: f64,
    state: &mut WalkerState,
    cfg: &StepConfig,
    z: Vec2,
) -> Result<(), SdeError> {
    debug_assert!(state.is_active());
    let dt = cfg.dt_micro;
    let weighted = cfg.mode == WalkMode::BrownianWeighted;
    let x = state.position;

    let has_drift = fields.has_drift();
    let v_left = if has_drift {
        fields.drift(x, u_prev)
    } else {
        [0.0, 0.0]
    };
    let g_left = fields.source(x, u_prev);

    let mut y = add(x, scale(z, dt.sqrt()));
    if !weighted && has_drift {
        y = add(y, scale(v_left, dt));
    }

    state.steps += 1;

    // Dirichlet exit takes precedence over reflection.
    if let Some((exit, alpha)) = domain.segment_domain_exit(x, y) {
        state.integral_g += g_left * alpha * dt;
        if weighted && has_drift {
            state.log_weight +=
                accumulate_girsanov(v_left, x, exit, None) - 0.5 * dot(v_left, v_left) * alpha * dt;
        }
        state.elapsed += alpha * dt;
        state.position = exit;
        state.status = WalkerStatus::Killed {
            exit_point: exit,
            alpha,
        };
        return Ok(());
    }

    state.elapsed += dt;

    let Some(idx) = domain.perforation_containing(y) else {
        state.integral_g += g_left * dt;
        if weighted && has_drift {
            state.log_weight +=
                accumulate_girsanov(v_left, x, y, None) - 0.5 * dot(v_left, v_left) * dt;
        }
        state.position = y;
        return Ok(());
    };

    let perf = &domain.perforations()[idx];
    let proj = project_to_circle(perf, y)?;
    let inward = norm(sub(proj, y));
    let travel = norm(sub(x, proj)) + inward;
    let beta = if travel > 0.0 { inward / travel } else { 0.0 };

    let g_proj = fields.source(proj, u_prev);
    state.integral_g += accumulate_source(g_left, g_proj, beta, dt);
    if weighted && has_drift {
        let v_proj = fields.drift(proj, u_prev);
        let reflection = Reflection { proj, v_proj };
        state.log_weight += accumulate_girsanov(v_left, x, y, Some(reflection))
            - 0.5 * accumulate_source(dot(v_left, v_left), dot(v_proj, v_proj), beta, dt);
    }

    let mut next = sub(scale(proj, 2.0), y);
    state.reflections += 1;
    let mut mirrored = 1;
    loop {
        if !domain.rect().contains(next) {
            return Err(SdeError::TimestepTooLarge(next));
        }
        match domain.classify_point(next) {
            crate::geometry::Region::Interior => break,
            crate::geometry::Region::InPerforation(j) => {
                if mirrored >= MAX_REFLECTIONS {
                    return Err(SdeError::TimestepTooLarge(next));
                }
                let p = project_to_circle(&domain.perforations()[j], next)?;
                next = sub(scale(p, 2.0), next);
                mirrored += 1;
                state.reflections += 1;
            }
            crate::geometry::Region::OutsideRect => return Err(SdeError::TimestepTooLarge(next)),
        }
    }
    state.position = next;
    Ok(())
}

/// Key identifying the random substreams of one batch of walkers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub iteration: u64,
}

/// Final walker states for a batch of starting points, start-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub n_starts: usize,
    pub n_each: usize,
    pub states: Vec<WalkerState>,
}

impl PathBatch {
    pub fn walkers_of(&self, start: usize) -> &[WalkerState] {
        &self.states[start * self.n_each..(start + 1) * self.n_each]
    }
}

/// Evolves `n_each` walkers from every start for one macro step or until
/// they are killed.
///
/// `u_eval` supplies the solution value for fields that read it; it is
/// evaluated at the left endpoint of every micro step and never called for
/// fields that ignore `u`.
pub fn simulate_paths(
    domain: &PerforatedDomain,
    fields: &dyn Fields,
    u_eval: &(dyn Fn(Vec2) -> f64 + Sync),
    starts: &[Vec2],
    n_each: usize,
    cfg: &StepConfig,
    key: StreamKey,
) -> Result<PathBatch, SdeError> {
    if let Some(&bad) = starts.iter().find(|&&p| !domain.is_interior(p)) {
        return Err(SdeError::StartNotInterior(bad));
    }
    let uses_u = fields.uses_solution();
    let states = starts
        .par_iter()
        .enumerate()
        .map(|(i, &start)| {
            (0..n_each)
                .map(|j| {
                    let mut rng = rng::substream(
                        key.seed,
                        &[tag::WALKERS, key.iteration, i as u64, j as u64],
                    );
                    let mut w = WalkerState::new(start);
                    for _ in 0..cfg.steps_per_macro {
                        let u = if uses_u { u_eval(w.position) } else { 0.0 };
                        micro_step(domain, fields, u, &mut w, cfg, &mut rng)?;
                        if !w.is_active() {
                            break;
                        }
                    }
                    Ok(w)
                })
                .collect::<Result<Vec<_>, SdeError>>()
        })
        .collect::<Result<Vec<_>, SdeError>>()?;
    Ok(PathBatch {
        n_starts: starts.len(),
        n_each,
        states: states.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Perforation, Rect, Region};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp1() -> PerforatedDomain {
        PerforatedDomain::new(Rect::unit_square(), vec![Perforation::new([0.0, 0.0], 0.4)])
    }

    fn z_for(x: Vec2, y: Vec2, dt: f64) -> Vec2 {
        scale(sub(y, x), 1.0 / dt.sqrt())
    }

    #[test]
    fn timestep_examples() {
        let c = check_timestep(1e-6, 0.014);
        assert!((c.mean_step - 1.2533e-3).abs() < 1e-7 && c.ok);
        let c = check_timestep(5e-6, 0.4);
        assert!((c.mean_step - 2.8025e-3).abs() < 1e-7 && c.ok);
        let c = check_timestep(1e-2, 0.014);
        assert!((c.mean_step - 0.12533).abs() < 1e-5 && !c.ok);
    }

    #[test]
    fn source_quadrature_examples() {
        assert!((accumulate_source(-1.0, -1.0, 0.5, 1e-6) + 1e-6).abs() < 1e-20);
        assert_eq!(accumulate_source(2.0, 0.0, 0.25, 1.0), 1.5);
        assert!((accumulate_source(3.0, 99.0, 0.0, 0.1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn girsanov_examples() {
        assert_eq!(accumulate_girsanov([0.0, 0.0], [0.1, 0.2], [0.3, 0.1], None), 0.0);
        let inc = accumulate_girsanov([1.0, 0.0], [0.0, 0.0], [0.1, -0.2], None);
        assert!((inc - 0.1).abs() < 1e-15);
        let inc = accumulate_girsanov(
            [0.0, 1.0],
            [0.45, 0.0],
            [0.35, 0.0],
            Some(Reflection {
                proj: [0.4, 0.0],
                v_proj: [0.0, 1.0],
            }),
        );
        assert_eq!(inc, 0.0);
    }

    #[test]
    fn reflection_example() {
        let d = exp1();
        let cfg = StepConfig::new(1e-4, 1, WalkMode::Drifted);
        let mut w = WalkerState::new([0.45, 0.0]);
        let fields = ConstantSource(-1.0);
        let z = z_for([0.45, 0.0], [0.35, 0.0], cfg.dt_micro);
        micro_step_with_normal(&d, &fields, 0.0, &mut w, &cfg, z).unwrap();
        assert!((w.position[0] - 0.45).abs() < 1e-12 && w.position[1].abs() < 1e-12);
        assert!(w.is_active());
        assert_eq!(w.reflections, 1);
        // beta = 0.5 with equal source on both segments
        assert!((w.integral_g + cfg.dt_micro).abs() < 1e-18);
    }

    #[test]
    fn reflection_splits_source_at_beta() {
        let d = exp1();
        let cfg = StepConfig::new(1e-4, 1, WalkMode::Drifted);
        // G = x1: left endpoint 0.45, projection 0.4, beta 0.5
        let fields = FnFields {
            drift: |_x: Vec2, _u: f64| [0.0, 0.0],
            source: |x: Vec2, _u: f64| x[0],
            uses_solution: false,
        };
        let mut w = WalkerState::new([0.45, 0.0]);
        let z = z_for([0.45, 0.0], [0.35, 0.0], cfg.dt_micro);
        micro_step_with_normal(&d, &fields, 0.0, &mut w, &cfg, z).unwrap();
        let expect = 0.45 * 0.5 * 1e-4 + 0.4 * 0.5 * 1e-4;
        assert!((w.integral_g - expect).abs() < 1e-16);
    }

    #[test]
    fn kill_example() {
        let d = exp1();
        let cfg = StepConfig::new(1e-4, 1, WalkMode::BrownianWeighted);
        let fields = ConstantSource(2.0);
        let mut w = WalkerState::new([0.45, 0.0]);
        let z = z_for([0.45, 0.0], [0.55, 0.0], cfg.dt_micro);
        micro_step_with_normal(&d, &fields, 0.0, &mut w, &cfg, z).unwrap();
        match w.status {
            WalkerStatus::Killed { exit_point, alpha } => {
                assert!((exit_point[0] - 0.5).abs() < 1e-12 && exit_point[1].abs() < 1e-12);
                assert!((alpha - 0.5).abs() < 1e-12);
            }
            WalkerStatus::Active => panic!("walker should be killed"),
        }
        assert!((w.integral_g - 2.0 * 0.5 * 1e-4).abs() < 1e-18);
        assert!((w.elapsed - 0.5e-4).abs() < 1e-18);
        assert_eq!(w.log_weight, 0.0);
    }

    #[test]
    fn constant_source_is_exact_without_events() {
        let d = PerforatedDomain::new(Rect::new([-10.0, -10.0], [10.0, 10.0]), vec![]);
        let cfg = StepConfig::new(1e-6, 64, WalkMode::BrownianWeighted);
        let fields = ConstantSource(-1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut w = WalkerState::new([0.0, 0.0]);
        for _ in 0..cfg.steps_per_macro {
            micro_step(&d, &fields, 0.0, &mut w, &cfg, &mut rng).unwrap();
        }
        let mut expect = 0.0;
        for _ in 0..64 {
            expect += -1.0 * 1e-6;
        }
        assert_eq!(w.integral_g, expect);
        assert!((w.integral_g + 64e-6).abs() < 1e-18);
    }

    #[test]
    fn oversized_step_is_reported() {
        // A proposal deep inside a tiny disk mirrors to another disk's interior.
        let d = PerforatedDomain::new(
            Rect::unit_square(),
            vec![Perforation::new([0.0, 0.0], 0.05), Perforation::new([0.0, 0.2], 0.1)],
        );
        let cfg = StepConfig::new(1e-2, 1, WalkMode::Drifted);
        let fields = ConstantSource(0.0);
        let x = [0.0, -0.06];
        let y = [0.0, -0.049];
        // mirrored to (0, -0.051): interior, fine
        let mut w = WalkerState::new(x);
        micro_step_with_normal(&d, &fields, 0.0, &mut w, &cfg, z_for(x, y, 0.01)).unwrap();
        assert_eq!(d.classify_point(w.position), Region::Interior);
        // two disks 0.01 apart: the mirror image keeps bouncing between them
        let d = PerforatedDomain::new(
            Rect::unit_square(),
            vec![Perforation::new([0.0, 0.0], 0.1), Perforation::new([0.0, 0.3], 0.19)],
        );
        let x = [0.0, 0.105];
        let y = [0.0, 0.05];
        let mut w = WalkerState::new(x);
        let err = micro_step_with_normal(&d, &fields, 0.0, &mut w, &cfg, z_for(x, y, 0.01));
        assert!(matches!(err, Err(SdeError::TimestepTooLarge(_))), "{err:?}");
    }

    #[test]
    fn empty_batch_and_determinism() {
        let d = exp1();
        let cfg = StepConfig::new(5e-6, 16, WalkMode::BrownianWeighted);
        let fields = ConstantSource(-1.0);
        let key = StreamKey { seed: 5, iteration: 2 };
        let none = simulate_paths(&d, &fields, &|_| 0.0, &[[0.45, 0.0]], 0, &cfg, key).unwrap();
        assert!(none.states.is_empty());
        let starts = [[0.45, 0.0], [0.0, -0.45], [0.43, 0.43]];
        let a = simulate_paths(&d, &fields, &|_| 0.0, &starts, 50, &cfg, key).unwrap();
        let b = simulate_paths(&d, &fields, &|_| 0.0, &starts, 50, &cfg, key).unwrap();
        assert_eq!(a, b);
        assert!(simulate_paths(&d, &fields, &|_| 0.0, &[[0.0, 0.0]], 1, &cfg, key).is_err());
    }

    #[test]
    fn u_eval_not_called_for_linear_fields() {
        let d = exp1();
        let cfg = StepConfig::new(5e-6, 8, WalkMode::BrownianWeighted);
        let key = StreamKey { seed: 1, iteration: 0 };
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let u = |_p: Vec2| {
            calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            0.0
        };
        simulate_paths(&d, &ConstantSource(1.0), &u, &[[0.45, 0.0]], 10, &cfg, key).unwrap();
        assert_eq!(calls.load(std::sync::atomic::Ordering::Relaxed), 0);
    }

    #[test]
    fn active_walkers_stay_interior_and_exits_are_consistent() {
        let d = PerforatedDomain::periodic_lattice(Rect::unit_square(), [20, 20], 1.0 / 70.0);
        let cfg = StepConfig::new(1e-6, 64, WalkMode::BrownianWeighted);
        let fields = ConstantSource(-1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let starts = d.sample_collocation(200, &mut rng).unwrap();
        let batch = simulate_paths(
            &d,
            &fields,
            &|_| 0.0,
            &starts,
            20,
            &cfg,
            StreamKey { seed: 3, iteration: 0 },
        )
        .unwrap();
        let mut reflected = 0;
        for w in &batch.states {
            reflected += w.reflections;
            match w.status {
                WalkerStatus::Active => {
                    assert_eq!(d.classify_point(w.position), Region::Interior);
                    assert_eq!(w.steps, 64);
                }
                WalkerStatus::Killed { exit_point, alpha } => {
                    assert!(d.rect().on_boundary(exit_point));
                    assert!(alpha > 0.0 && alpha <= 1.0);
                    let expect = (w.steps as f64 - 1.0 + alpha) * cfg.dt_micro;
                    assert!((w.elapsed - expect).abs() < 1e-15);
                }
            }
        }
        assert!(reflected > 0);
    }

    #[test]
    fn gaussian_increment_statistics() {
        // Far from every boundary a single micro step is a plain Gaussian
        // increment: covariance δt·I within four-sigma bands.
        let d = PerforatedDomain::new(Rect::unit_square(), vec![]);
        let dt = 1e-4;
        let cfg = StepConfig::new(dt, 1, WalkMode::BrownianWeighted);
        let start = [0.0, 0.45];
        let n = 100_000;
        let batch = simulate_paths(
            &d,
            &ConstantSource(0.0),
            &|_| 0.0,
            &[start],
            n,
            &cfg,
            StreamKey { seed: 17, iteration: 0 },
        )
        .unwrap();
        let active: Vec<Vec2> = batch
            .states
            .iter()
            .filter(|w| w.is_active())
            .map(|w| sub(w.position, start))
            .collect();
        // exit needs a 5-sigma move
        assert!(active.len() > n - 10);
        let m = active.len() as f64;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for d in &active {
            sxx += d[0] * d[0];
            syy += d[1] * d[1];
            sxy += d[0] * d[1];
        }
        let (sxx, syy, sxy) = (sxx / m, syy / m, sxy / m);
        // Var of a squared normal is 2σ⁴, of a product σ⁴.
        let band_diag = 4.0 * (2.0f64).sqrt() * dt / m.sqrt();
        let band_off = 4.0 * dt / m.sqrt();
        assert!((sxx - dt).abs() < band_diag, "{sxx}");
        assert!((syy - dt).abs() < band_diag, "{syy}");
        assert!(sxy.abs() < band_off, "{sxy}");
    }

    #[test]
    fn girsanov_weight_has_unit_mean() {
        let d = PerforatedDomain::new(Rect::new([-10.0, -10.0], [10.0, 10.0]), vec![]);
        let cfg = StepConfig::new(1e-4, 100, WalkMode::BrownianWeighted);
        let v = [0.8, -0.5];
        let fields = FnFields {
            drift: move |_x: Vec2, _u: f64| v,
            source: |_x: Vec2, _u: f64| 0.0,
            uses_solution: false,
        };
        let n = 20_000;
        let batch = simulate_paths(
            &d,
            &fields,
            &|_| 0.0,
            &[[0.0, 0.0]],
            n,
            &cfg,
            StreamKey { seed: 23, iteration: 0 },
        )
        .unwrap();
        let w: Vec<f64> = batch.states.iter().map(|s| s.weight()).collect();
        let mean = w.iter().sum::<f64>() / n as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
        // zero drift gives weight exactly one
        let batch = simulate_paths(
            &d,
            &ConstantSource(0.0),
            &|_| 0.0,
            &[[0.0, 0.0]],
            100,
            &cfg,
            StreamKey { seed: 23, iteration: 0 },
        )
        .unwrap();
        assert!(batch.states.iter().all(|s| s.weight() == 1.0));
    }

    #[test]
    fn drifted_mode_moves_the_mean() {
        let d = PerforatedDomain::new(Rect::new([-10.0, -10.0], [10.0, 10.0]), vec![]);
        let cfg = StepConfig::new(1e-3, 100, WalkMode::Drifted);
        let fields = FnFields {
            drift: |_x: Vec2, _u: f64| [1.0, 0.0],
            source: |_x: Vec2, _u: f64| 0.0,
            uses_solution: false,
        };
        let n = 10_000;
        let batch = simulate_paths(
            &d,
            &fields,
            &|_| 0.0,
            &[[0.0, 0.0]],
            n,
            &cfg,
            StreamKey { seed: 2, iteration: 0 },
        )
        .unwrap();
        let mean_x = batch.states.iter().map(|s| s.position[0]).sum::<f64>() / n as f64;
        // drift 1 over t = 0.1, spread sqrt(0.1)/sqrt(n)
        assert!((mean_x - 0.1).abs() < 4.0 * (0.1f64 / n as f64).sqrt());
        assert!(batch.states.iter().all(|s| s.log_weight == 0.0));
    }
}
