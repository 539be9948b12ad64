//! Pointwise Monte Carlo reference values.
//!
//! Walkers start at a probe point, reflect off perforations and run until
//! they leave the rectangle. The estimate is the sample mean of
//! `[g(X_τ) − ∫₀^τ G ds]·D_τ`, where `D` is the Girsanov weight (1 when the
//! walkers carry the drift themselves).

use crate::geometry::{PerforatedDomain, Region, Vec2};
use crate::network::FourierNetwork;
use crate::rng::{self, tag};
use crate::sde::{check_timestep, micro_step, Fields, SdeError, StepConfig, WalkMode, WalkerState, WalkerStatus};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest tolerated fraction of walkers still running at `max_steps`.
pub const MAX_CENSORED_FRACTION: f64 = 1e-3;

/// Default time budget per walker; `max_steps` is this divided by `δt`.
pub const DEFAULT_MAX_TIME: f64 = 10.0;

/// Floor on the denominator of relative errors.
pub const RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{censored} of {n_walkers} walkers did not exit within {max_steps} steps; increase max_steps")]
    Censored {
        censored: usize,
        n_walkers: usize,
        max_steps: u64,
    },
    #[error("oracle requires linear problem (fields must not depend on u)")]
    Nonlinear,
    #[error("timestep check failed: mean step {mean_step:.4e} exceeds 0.2 x min radius {min_radius}")]
    Timestep { mean_step: f64, min_radius: f64 },
    #[error("invalid oracle settings: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub n_walkers: usize,
    pub dt_micro: f64,
    pub max_steps: u64,
    pub mode: WalkMode,
    pub seed: u64,
}

impl OracleConfig {
    /// Settings with `max_steps` derived from [`DEFAULT_MAX_TIME`].
    pub fn new(n_walkers: usize, dt_micro: f64, seed: u64) -> Self {
        Self {
            n_walkers,
            dt_micro,
            max_steps: (DEFAULT_MAX_TIME / dt_micro).ceil() as u64,
            mode: WalkMode::Drifted,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n_walkers`.
    pub stderr: f64,
    pub n_walkers: usize,
    pub mean_exit_time: f64,
}

/// One line of oracle output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub point: Vec2,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub mean_exit_time: f64,
}

impl OracleRecord {
    pub fn new(point: Vec2, e: &OracleEstimate) -> Self {
        Self {
            point,
            mean: e.mean,
            stderr: e.stderr,
            n: e.n_walkers,
            mean_exit_time: e.mean_exit_time,
        }
    }

    pub fn estimate(&self) -> OracleEstimate {
        OracleEstimate {
            mean: self.mean,
            stderr: self.stderr,
            n_walkers: self.n,
            mean_exit_time: self.mean_exit_time,
        }
    }
}

/// Checks the problem and settings shared by every probe.
pub fn validate(domain: &PerforatedDomain, fields: &dyn Fields, cfg: &OracleConfig) -> Result<(), OracleError> {
    if fields.uses_solution() {
        return Err(OracleError::Nonlinear);
    }
    if cfg.n_walkers < 2 {
        return Err(OracleError::Invalid("need at least 2 walkers".into()));
    }
    if !(cfg.dt_micro > 0.0 && cfg.dt_micro.is_finite()) || cfg.max_steps == 0 {
        return Err(OracleError::Invalid("dt_micro and max_steps must be positive".into()));
    }
    if let Some(r) = domain.min_radius() {
        let c = check_timestep(cfg.dt_micro, r);
        if !c.ok {
            return Err(OracleError::Timestep {
                mean_step: c.mean_step,
                min_radius: r,
            });
        }
    }
    Ok(())
}

/// Estimates the solution at `x`.
pub fn estimate_point(
    domain: &PerforatedDomain,
    fields: &dyn Fields,
    dirichlet: &(dyn Fn(Vec2) -> f64 + Sync),
    x: Vec2,
    cfg: &OracleConfig,
) -> Result<OracleEstimate, OracleError> {
    validate(domain, fields, cfg)?;
    if domain.classify_point(x) != Region::Interior {
        return Err(SdeError::StartNotInterior(x).into());
    }
    let step = StepConfig::new(cfg.dt_micro, 1, cfg.mode);
    let (px, py) = (x[0].to_bits(), x[1].to_bits());

    // (payoff, exit time) per walker; None when censored
    let samples: Vec<Option<(f64, f64)>> = (0..cfg.n_walkers)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::substream(cfg.seed, &[tag::ORACLE, px, py, j as u64]);
            run_walker(domain, fields, dirichlet, x, &step, cfg.max_steps, &mut rng)
        })
        .collect::<Result<_, SdeError>>()?;

    let censored = samples.iter().filter(|s| s.is_none()).count();
    if censored as f64 > MAX_CENSORED_FRACTION * cfg.n_walkers as f64 {
        return Err(OracleError::Censored {
            censored,
            n_walkers: cfg.n_walkers,
            max_steps: cfg.max_steps,
        });
    }
    let done: Vec<(f64, f64)> = samples.into_iter().flatten().collect();
    let n = done.len() as f64;
    let mean = done.iter().map(|s| s.0).sum::<f64>() / n;
    let var = done.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(OracleEstimate {
        mean,
        stderr: (var / n).sqrt(),
        n_walkers: done.len(),
        mean_exit_time: done.iter().map(|s| s.1).sum::<f64>() / n,
    })
}

fn run_walker<R: Rng + ?Sized>(
    domain: &PerforatedDomain,
    fields: &dyn Fields,
    dirichlet: &(dyn Fn(Vec2) -> f64 + Sync),
    x: Vec2,
    step: &StepConfig,
    max_steps: u64,
    rng: &mut R,
) -> Result<Option<(f64, f64)>, SdeError> {
    let mut w = WalkerState::new(x);
    for _ in 0..max_steps {
        micro_step(domain, fields, 0.0, &mut w, step, rng)?;
        if let WalkerStatus::Killed { exit_point, .. } = w.status {
            let payoff = (dirichlet(exit_point) - w.integral_g) * w.weight();
            return Ok(Some((payoff, w.elapsed)));
        }
    }
    Ok(None)
}

/// Estimates every point in turn.
pub fn estimate_table(
    domain: &PerforatedDomain,
    fields: &dyn Fields,
    dirichlet: &(dyn Fn(Vec2) -> f64 + Sync),
    points: &[Vec2],
    cfg: &OracleConfig,
) -> Result<Vec<OracleRecord>, OracleError> {
    points
        .iter()
        .map(|&p| estimate_point(domain, fields, dirichlet, p, cfg).map(|e| OracleRecord::new(p, &e)))
        .collect()
}

/// Sixteen probe points on two concentric rings, eight per ring, with a
/// random phase per ring.
///
/// Rings are centred on the centroid of the perforation centres. When that
/// centroid lies inside a perforation the rings start at its rim; points
/// that still land in a perforation are pushed radially outwards.
pub fn default_probes(domain: &PerforatedDomain, seed: u64) -> Vec<Vec2> {
    ring_probes(domain, 8, seed)
}

/// `2·per_ring` probe points; see [`default_probes`].
pub fn ring_probes(domain: &PerforatedDomain, per_ring: usize, seed: u64) -> Vec<Vec2> {
    let rect = domain.rect();
    let perfs = domain.perforations();
    let center = if perfs.is_empty() {
        rect.center()
    } else {
        let k = perfs.len() as f64;
        let s = perfs.iter().fold([0.0, 0.0], |a, p| [a[0] + p.center[0], a[1] + p.center[1]]);
        [s[0] / k, s[1] / k]
    };
    let base = match domain.perforation_containing(center) {
        Some(i) => {
            let p = &perfs[i];
            p.radius - ((center[0] - p.center[0]).hypot(center[1] - p.center[1]))
        }
        None => 0.0,
    };
    let reach = rect.distance_to_boundary(center);
    let span = (reach - base).max(0.0);
    let mut rng = rng::substream(seed, &[tag::PROBES]);
    let mut out = Vec::with_capacity(2 * per_ring);
    for frac in [0.3, 0.7] {
        let rho = base + frac * span;
        let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        for k in 0..per_ring {
            let theta = phase + std::f64::consts::TAU * k as f64 / per_ring as f64;
            let dir = [theta.cos(), theta.sin()];
            let mut r = rho;
            let mut p = [center[0] + r * dir[0], center[1] + r * dir[1]];
            while !domain.is_interior(p) && r < reach {
                r += 1e-3 * span.max(1e-3);
                p = [center[0] + r * dir[0], center[1] + r * dir[1]];
            }
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointComparison {
    pub point: Vec2,
    pub network: f64,
    pub oracle_mean: f64,
    pub oracle_stderr: f64,
    pub relative_error: f64,
    /// Deviation beyond `3·stderr + tol`, or a non-finite network value.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub points: Vec<PointComparison>,
    /// Root mean square of the finite relative errors, if there are any.
    pub rms_relative: Option<f64>,
    pub max_relative: Option<f64>,
    pub n_flagged: usize,
    pub n_nonfinite: usize,
}

/// Compares network values with oracle records point by point.
pub fn compare_values(values: &[f64], table: &[OracleRecord], tol: f64) -> ComparisonReport {
    assert_eq!(values.len(), table.len(), "one value per oracle record");
    let points: Vec<PointComparison> = values
        .iter()
        .zip(table)
        .map(|(&u, rec)| {
            let diff = (u - rec.mean).abs();
            let relative_error = diff / rec.mean.abs().max(RELATIVE_FLOOR);
            PointComparison {
                point: rec.point,
                network: u,
                oracle_mean: rec.mean,
                oracle_stderr: rec.stderr,
                relative_error,
                flagged: !diff.is_finite() || diff > 3.0 * rec.stderr + tol,
            }
        })
        .collect();
    let finite: Vec<f64> = points.iter().map(|p| p.relative_error).filter(|e| e.is_finite()).collect();
    let (rms_relative, max_relative) = if finite.is_empty() {
        (None, None)
    } else {
        let ms = finite.iter().map(|e| e * e).sum::<f64>() / finite.len() as f64;
        (Some(ms.sqrt()), Some(finite.iter().copied().fold(0.0, f64::max)))
    };
    ComparisonReport {
        n_flagged: points.iter().filter(|p| p.flagged).count(),
        n_nonfinite: points.len() - finite.len(),
        points,
        rms_relative,
        max_relative,
    }
}

/// [`compare_values`] with the network evaluated at the table's points.
pub fn compare_network(net: &FourierNetwork, table: &[OracleRecord], tol: f64) -> ComparisonReport {
    let pts: Vec<Vec2> = table.iter().map(|r| r.point).collect();
    let values = match net.forward(&pts) {
        Ok(v) => v,
        Err(_) => vec![f64::NAN; pts.len()],
    };
    compare_values(&values, table, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Perforation, Rect};
    use crate::sde::{ConstantSource, FnFields};

    fn open_square() -> PerforatedDomain {
        PerforatedDomain::new(Rect::unit_square(), vec![])
    }

    fn exp1() -> PerforatedDomain {
        PerforatedDomain::new(Rect::unit_square(), vec![Perforation::new([0.0, 0.0], 0.4)])
    }

    #[test]
    fn constant_payoff_is_exact() {
        let cfg = OracleConfig::new(500, 1e-4, 3);
        let e = estimate_point(&open_square(), &ConstantSource(0.0), &|_| 1.0, [0.1, -0.2], &cfg).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert!(e.mean_exit_time > 0.0);
    }

    #[test]
    fn affine_payoffs_are_unbiased() {
        let cfg = OracleConfig::new(4000, 1e-4, 11);
        let g = |p: Vec2| 0.3 + p[0] - 2.0 * p[1];
        for x in [[0.0, 0.0], [0.2, -0.1]] {
            let e = estimate_point(&open_square(), &ConstantSource(0.0), &g, x, &cfg).unwrap();
            assert!((e.mean - g(x)).abs() < 3.0 * e.stderr, "{e:?} at {x:?}");
        }
    }

    #[test]
    fn exit_bias_shrinks_with_the_step() {
        // kills are only seen at step ends, so walkers near the wall leak
        // inward and the estimate is pulled towards the interior, O(√δt)
        let x = [0.45, 0.0];
        let g = |p: Vec2| p[0];
        let bias = |dt: f64| {
            let e = estimate_point(&open_square(), &ConstantSource(0.0), &g, x, &OracleConfig::new(20_000, dt, 4)).unwrap();
            (e.mean - x[0], e.stderr)
        };
        let (coarse, s1) = bias(1e-2);
        let (fine, s2) = bias(1e-4);
        assert!(coarse < -10.0 * s1, "{coarse} +/- {s1}");
        assert!(fine.abs() < coarse.abs() / 3.0 + 3.0 * s2, "{fine} vs {coarse}");
    }

    #[test]
    fn poisson_exit_time_matches_source_integral() {
        // with G ≡ −1 and g ≡ 0 the payoff is the exit time itself
        let cfg = OracleConfig::new(2000, 1e-4, 5);
        let e = estimate_point(&open_square(), &ConstantSource(-1.0), &|_| 0.0, [0.0, 0.0], &cfg).unwrap();
        assert!((e.mean - e.mean_exit_time).abs() < 1e-12);
        // E[τ] at the centre of the unit square for ½Δ is ≈ 0.1473
        assert!((e.mean - 0.1473).abs() < 3.0 * e.stderr + 2e-3, "{e:?}");
    }

    #[test]
    fn exit_time_grows_away_from_the_boundary() {
        let cfg = OracleConfig::new(2000, 1e-4, 9);
        let d = exp1();
        let times: Vec<f64> = [0.49, 0.46, 0.43]
            .iter()
            .map(|&r| estimate_point(&d, &ConstantSource(0.0), &|_| 1.0, [r, 0.0], &cfg).unwrap().mean_exit_time)
            .collect();
        assert!(times[0] > 0.0);
        assert!(times[0] < times[1] && times[1] < times[2], "{times:?}");
    }

    #[test]
    fn rejects_nonlinear_and_oversized_steps() {
        let nonlinear = FnFields {
            drift: |_: Vec2, _: f64| [0.0, 0.0],
            source: |_: Vec2, u: f64| u,
            uses_solution: true,
        };
        let cfg = OracleConfig::new(10, 1e-4, 1);
        let err = estimate_point(&open_square(), &nonlinear, &|_| 1.0, [0.0, 0.0], &cfg).unwrap_err();
        assert!(err.to_string().contains("oracle requires linear problem"));

        let d = PerforatedDomain::new(Rect::unit_square(), vec![Perforation::new([0.0, 0.0], 0.014)]);
        let cfg = OracleConfig::new(10, 1e-2, 1);
        assert!(matches!(
            estimate_point(&d, &ConstantSource(0.0), &|_| 1.0, [0.3, 0.0], &cfg),
            Err(OracleError::Timestep { .. })
        ));
    }

    #[test]
    fn censoring_is_an_error() {
        let mut cfg = OracleConfig::new(100, 1e-4, 1);
        cfg.max_steps = 5;
        let err = estimate_point(&open_square(), &ConstantSource(0.0), &|_| 1.0, [0.0, 0.0], &cfg).unwrap_err();
        assert!(err.to_string().contains("increase max_steps"));
    }

    #[test]
    fn estimates_are_reproducible() {
        let cfg = OracleConfig::new(300, 1e-4, 42);
        let d = exp1();
        let a = estimate_point(&d, &ConstantSource(-1.0), &|_| 1.0, [0.45, 0.0], &cfg).unwrap();
        let b = estimate_point(&d, &ConstantSource(-1.0), &|_| 1.0, [0.45, 0.0], &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.mean > 1.0);
    }

    #[test]
    fn probes_are_interior_and_fixed_by_seed() {
        for d in [exp1(), open_square(), PerforatedDomain::periodic_lattice(Rect::unit_square(), [20, 20], 1.0 / 70.0)] {
            let p = default_probes(&d, 7);
            assert_eq!(p.len(), 16);
            assert!(p.iter().all(|&x| d.is_interior(x)), "{p:?}");
            assert_eq!(p, default_probes(&d, 7));
            assert_ne!(p, default_probes(&d, 8));
        }
        let p = default_probes(&exp1(), 1);
        assert!(p.iter().all(|x| x[0].hypot(x[1]) > 0.4));
    }

    #[test]
    fn comparison_examples() {
        let rec = |m: f64| OracleRecord {
            point: [0.0, 0.0],
            mean: m,
            stderr: 1e-4,
            n: 100,
            mean_exit_time: 0.1,
        };
        let table = vec![rec(1.0), rec(2.0)];
        let r = compare_values(&[1.0, 2.0], &table, 0.0);
        assert_eq!(r.rms_relative, Some(0.0));
        assert_eq!(r.n_flagged, 0);

        let r = compare_values(&[1.001], &[rec(1.0)], 0.0);
        assert!((r.points[0].relative_error - 1e-3).abs() < 1e-12);
        assert_eq!(r.n_flagged, 1);

        let r = compare_values(&[f64::NAN], &[rec(1.0)], 0.0);
        assert_eq!(r.rms_relative, None);
        assert_eq!((r.n_flagged, r.n_nonfinite), (1, 1));

        let r = compare_values(&[1e-9], &[rec(0.0)], 0.0);
        assert!((r.points[0].relative_error - 0.1).abs() < 1e-12);
    }
}
