//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (outside the test harness capture) before asserting.
//!
//! Criteria 5 and 7 need many CPU-hours and are `#[ignore]`d; run them with
//! `cargo test --release --test acceptance -- --ignored`.

use dflm::cli::{export_grid, main_with_args};
use dflm::config::{bundled, parse_config_str};
use dflm::geometry::{PerforatedDomain, Perforation, Rect, Vec2};
use dflm::homog::{effective_tensor, relative_l2, solve_homogenized, CellGeometry};
use dflm::network::{Activation, FourierNetwork, NetworkConfig};
use dflm::oracle::{compare_network, default_probes, estimate_point, estimate_table, OracleConfig};
use dflm::rng;
use dflm::sde::{simulate_paths, ConstantSource, StepConfig, StreamKey, WalkMode};
use dflm::trainer::{collocation_points, compute_targets, loss_and_grad, neumann_residual, train, RunOutput};
use rand::Rng;
use std::io::Write;

fn report(criterion: u32, name: &str, pass: bool, detail: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{status} criterion {criterion} ({name}): {detail}");
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn exp1_domain() -> PerforatedDomain {
    PerforatedDomain::new(Rect::unit_square(), vec![Perforation::new([0.0, 0.0], 0.4)])
}

/// Reference gradient by central differences of `Σ wᵢ u(xᵢ)`.
fn finite_difference_gradient(net: &FourierNetwork, pts: &[Vec2], w: &[f64], h: f64) -> Vec<f64> {
    let objective = |n: &FourierNetwork| -> f64 { n.forward(pts).unwrap().iter().zip(w).map(|(u, c)| u * c).sum() };
    let mut probe = net.clone();
    (0..net.num_params())
        .map(|k| {
            let p0 = probe.params()[k];
            probe.params_mut()[k] = p0 + h;
            let up = objective(&probe);
            probe.params_mut()[k] = p0 - h;
            let down = objective(&probe);
            probe.params_mut()[k] = p0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn criterion_1_gradient_correctness() {
    let mut rng = rng::substream(2024, &[1]);
    let mut worst = 0.0f64;
    for trial in 0..100u64 {
        let depth = rng.random_range(1..=3);
        let cfg = NetworkConfig {
            fourier_pairs: rng.random_range(1..=4),
            sigma2: rng.random_range(0.5..4.0),
            hidden_dims: (0..depth).map(|_| rng.random_range(2..=6)).collect(),
            activation: Activation::Tanh,
        };
        let mut net = FourierNetwork::init(&cfg, trial).unwrap();
        // nonzero biases so every parameter is exercised away from init
        for p in net.params_mut() {
            *p += 0.1 * (rng.random::<f64>() - 0.5);
        }
        let pts: Vec<Vec2> = (0..5).map(|_| [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]).collect();
        let w: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let analytic = net.backward(&pts, &w).unwrap();
        let numeric = finite_difference_gradient(&net, &pts, &w, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    report(1, "gradient correctness", worst < 1e-6, format!("max relative error {worst:.3e} over 100 networks (< 1e-6)"));
}

#[test]
fn criterion_2_reflected_diffusion_law() {
    // wall y = 0 is the top of a disk of radius 1000
    let domain = PerforatedDomain::new(
        Rect::new([-1.0, -1.0], [1.0, 1.0]),
        vec![Perforation::new([0.0, -1000.0], 1000.0)],
    );
    let t = 1e-4;
    let n = 100_000;
    let cfg = StepConfig::new(1e-6, 100, WalkMode::BrownianWeighted);
    let batch = simulate_paths(
        &domain,
        &ConstantSource(0.0),
        &|_| 0.0,
        &[[0.0, 0.0]],
        n,
        &cfg,
        StreamKey { seed: 5, iteration: 0 },
    )
    .unwrap();
    let dist: Vec<f64> = batch
        .states
        .iter()
        .map(|w| (w.position[0].hypot(w.position[1] + 1000.0) - 1000.0).max(0.0))
        .collect();
    let mean = dist.iter().sum::<f64>() / n as f64;
    let var = dist.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let stderr = (var / n as f64).sqrt();
    let exact = (2.0 * t / std::f64::consts::PI).sqrt();
    let dev = (mean - exact).abs();
    report(
        2,
        "reflected diffusion law",
        dev < 0.02 * exact + 3.0 * stderr,
        format!("mean distance {mean:.5e} vs sqrt(2t/pi) = {exact:.5e}, |diff| {dev:.2e} < {:.2e}", 0.02 * exact + 3.0 * stderr),
    );
}

#[test]
fn criterion_3_constant_fixed_point() {
    let exp = parse_config_str(bundled("constant").unwrap()).unwrap();
    let problem = exp.problem();
    let cfg = exp.train_config();
    let mut net = FourierNetwork::init(&exp.config.network, exp.config.seed).unwrap();
    net.set_constant_output(1.0);

    let pts = collocation_points(&problem, &cfg, 0).unwrap();
    let targets = compute_targets(&net, &problem, &pts, &cfg, 0).unwrap();
    let (loss0, _) = loss_and_grad(&net, &pts, &targets).unwrap();

    assert_eq!((cfg.iterations, cfg.n_collocation, cfg.n_walkers), (200, 100, 50));
    let (trained, history) = train(&problem, &cfg, net, None, &mut RunOutput::default()).unwrap();
    let grid = export_grid(&trained, &exp.domain, 32).unwrap();
    let sup = grid
        .values
        .iter()
        .zip(&grid.mask)
        .filter(|(_, m)| **m)
        .map(|(u, _)| (u - 1.0).abs())
        .fold(0.0f64, f64::max);
    let all_zero = history.iter().all(|h| h.loss == 0.0);
    report(
        3,
        "constant-solution fixed point",
        loss0 == 0.0 && all_zero && sup < 1e-3,
        format!("initial loss {loss0}, every loss zero: {all_zero}, sup|u-1| {sup:.3e} after {} iterations", history.len()),
    );
}

#[test]
fn criterion_4_harmonic_sanity() {
    let exp = parse_config_str(bundled("harmonic").unwrap()).unwrap();
    let problem = exp.problem();

    let oracle_cfg = OracleConfig::new(100_000, 1e-4, exp.config.seed);
    let est = estimate_point(&problem.domain, problem.fields.as_ref(), problem.dirichlet.as_ref(), [0.0, 0.0], &oracle_cfg).unwrap();
    let oracle_ok = est.mean.abs() < 3.0 * est.stderr;

    let cfg = exp.train_config();
    assert_eq!((cfg.iterations, cfg.n_collocation, cfg.n_walkers), (5000, 500, 100));
    let net = FourierNetwork::init(&exp.config.network, exp.config.seed).unwrap();
    let (trained, _) = train(&problem, &cfg, net, None, &mut RunOutput::default()).unwrap();
    let grid = export_grid(&trained, &problem.domain, 21).unwrap();
    let mut worst = 0.0f64;
    for j in 0..21 {
        for i in 0..21 {
            worst = worst.max((grid.get(i, j) - grid.point(i, j)[0]).abs());
        }
    }
    report(
        4,
        "harmonic sanity",
        oracle_ok && worst < 1e-2,
        format!(
            "oracle u(0,0) = {:.2e} +/- {:.2e} (|mean| < 3 stderr: {oracle_ok}); trained max error on 21x21 grid {worst:.3e} (< 1e-2)",
            est.mean, est.stderr
        ),
    );
}

#[test]
#[ignore = "CPU-days on one core: 20k iterations on the full-width network plus 16 x 10^6 oracle walkers at dt = 1e-7"]
fn criterion_5_exp1_desk_scale() {
    let exp = parse_config_str(bundled("exp1_desk").unwrap()).unwrap();
    let problem = exp.problem();
    let cfg = exp.train_config();
    assert_eq!(
        (cfg.iterations, cfg.n_collocation, cfg.n_walkers, cfg.step.dt_micro, cfg.step.steps_per_macro),
        (20_000, 1000, 200, 5e-6, 128)
    );
    let net = FourierNetwork::init(&exp.config.network, exp.config.seed).unwrap();
    let (trained, _) = train(&problem, &cfg, net, None, &mut RunOutput::default()).unwrap();

    let probes = default_probes(&problem.domain, exp.config.seed);
    let oracle_cfg = OracleConfig::new(1_000_000, 1e-7, exp.config.seed);
    let table = estimate_table(&problem.domain, problem.fields.as_ref(), problem.dirichlet.as_ref(), &probes, &oracle_cfg).unwrap();
    let cmp = compare_network(&trained, &table, 0.0);
    let rms = cmp.rms_relative.unwrap_or(f64::INFINITY);

    let neumann = neumann_residual(&trained, &problem.domain.perforations()[0], 64, 1e-4);
    report(
        5,
        "Exp-1 at desk scale",
        rms < 5e-3 && neumann.ratio() < 0.05,
        format!("probe RMS relative difference {rms:.3e} (< 5e-3); Neumann ratio {:.3e} (< 0.05)", neumann.ratio()),
    );
}

#[test]
fn criterion_6_effective_tensor() {
    let cell = CellGeometry::centered(2.0 / 7.0).unwrap();
    let t = effective_tensor(&cell, 512).unwrap();
    let target = 0.80783;
    let rel = [(t.a[0][0] - target).abs() / target, (t.a[1][1] - target).abs() / target];
    let off = t.a[0][1].abs().max(t.a[1][0].abs());
    report(
        6,
        "effective tensor",
        rel[0] < 0.03 && rel[1] < 0.03 && off < 1e-3,
        format!(
            "A0 = [[{:.5}, {:.2e}], [{:.2e}, {:.5}]], diagonal within {:.2}% of {target} (< 3%), |off-diagonal| {off:.2e} (< 1e-3)",
            t.a[0][0],
            t.a[0][1],
            t.a[1][0],
            t.a[1][1],
            100.0 * rel[0].max(rel[1])
        ),
    );
}

#[test]
#[ignore = "CPU-days on one core: 20k iterations with 2000 x 200 walkers at dt = 1e-6 and M = 64"]
fn criterion_7_exp3_desk_scale() {
    let exp = parse_config_str(bundled("exp3_desk").unwrap()).unwrap();
    let problem = exp.problem();
    let cfg = exp.train_config();
    assert_eq!((cfg.iterations, cfg.n_collocation, cfg.n_walkers), (20_000, 2000, 200));
    let net = FourierNetwork::init(&exp.config.network, exp.config.seed).unwrap();
    let (trained, _) = train(&problem, &cfg, net, None, &mut RunOutput::default()).unwrap();

    let lattice = exp.config.domain.lattice.unwrap();
    let cell = CellGeometry::from_lattice(1.0 / lattice.count[0] as f64, lattice.radius).unwrap();
    let a0 = effective_tensor(&cell, 512).unwrap();
    let mut reference = solve_homogenized(&a0, &|_| -2.0, &|_| 1.0, problem.domain.rect(), 201).unwrap();
    reference.apply_mask(&problem.domain);
    let dflm = export_grid(&trained, &problem.domain, 201).unwrap();
    let err = relative_l2(&reference, &dflm).unwrap();
    report(7, "Exp-3 at desk scale", err < 1e-2, format!("masked relative L2 on 201x201 grid {err:.3e} (< 1e-2)"));
}

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    let text = bundled("harmonic")
        .unwrap()
        .replace("iterations = 5000", "iterations = 30")
        .replace("validate_every = 500", "validate_every = 10\ncheckpoint_every = 10")
        .replace("n_walkers = 100000", "n_walkers = 500");
    std::fs::write(&config, text).unwrap();

    let run = |name: &str| {
        let out = dir.path().join(name);
        let code = main_with_args([
            "dflm",
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let csv = dir.path().join(format!("{name}.csv"));
        let code = main_with_args([
            "dflm",
            "evaluate",
            "--checkpoint",
            out.join("final.bin").to_str().unwrap(),
            "--grid",
            "41",
            "--out",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let mut files = Vec::new();
        for f in ["metrics.jsonl", "probes.json", "checkpoint_0000010.bin", "checkpoint_0000030.bin", "final.bin"] {
            files.push(std::fs::read(out.join(f)).unwrap());
        }
        files.push(std::fs::read(csv).unwrap());
        files
    };
    let a = run("a");
    let b = run("b");
    let same = a == b;
    let log = String::from_utf8(a[0].clone()).unwrap();
    let has_probe_metric = log.lines().filter(|l| l.contains("probe_rmse")).count() == 3;
    report(
        8,
        "determinism",
        same && has_probe_metric,
        format!("metrics log, probe table, 3 checkpoints and grid export byte-identical across runs: {same}"),
    );
}

#[test]
fn criterion_9_monte_carlo_scaling() {
    let domain = exp1_domain();
    let probes: Vec<Vec2> = default_probes(&domain, 9).into_iter().step_by(5).take(3).collect();
    let mut ratios = Vec::new();
    for p in &probes {
        let small = OracleConfig::new(4_000, 1e-5, 21);
        let large = OracleConfig::new(16_000, 1e-5, 22);
        let a = estimate_point(&domain, &ConstantSource(-1.0), &|_| 1.0, *p, &small).unwrap();
        let b = estimate_point(&domain, &ConstantSource(-1.0), &|_| 1.0, *p, &large).unwrap();
        ratios.push(a.stderr / b.stderr);
    }
    let ok = ratios.iter().all(|r| (r / 2.0 - 1.0).abs() <= 0.2);
    report(
        9,
        "Monte Carlo scaling",
        ok,
        format!("stderr(N) / stderr(4N) at 3 probes = {ratios:.3?} (2 +/- 20%)"),
    );
}
