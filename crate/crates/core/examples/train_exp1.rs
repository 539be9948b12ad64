//! The single-disk Poisson problem with the bundled configuration, trained
//! for a short budget and compared with oracle values at the probe rings.
//!
//! Usage: `cargo run --release --example train_exp1 [iterations] [walkers per probe]`
//!
//! The full configuration (200-wide layers, 3000 x 400 walkers) costs
//! seconds per iteration on one core; the defaults here keep the run short.

use dflm::config::{bundled, parse_config_str};
use dflm::network::FourierNetwork;
use dflm::oracle::{compare_network, default_probes, estimate_table};
use dflm::trainer::{neumann_residual, pde_residual, train, RunOutput};

fn main() {
    let mut args = std::env::args().skip(1);
    let iterations: u64 = args.next().map(|s| s.parse().expect("iterations")).unwrap_or(300);
    let walkers: usize = args.next().map(|s| s.parse().expect("walkers")).unwrap_or(20_000);

    let mut exp = parse_config_str(bundled("exp1_desk").unwrap()).unwrap();
    exp.config.training.iterations = iterations;
    exp.config.training.n_collocation = 300;
    exp.config.training.n_walkers = 50;
    exp.config.network.hidden_dims = vec![64, 64, 64];
    exp.config.network.fourier_pairs = 32;
    let problem = exp.problem();
    let cfg = exp.train_config();

    let net = FourierNetwork::init(&exp.config.network, exp.config.seed).unwrap();
    let mut out = RunOutput {
        metrics: Some(Box::new(std::io::stdout())),
        ..Default::default()
    };
    let started = std::time::Instant::now();
    let (net, _) = train(&problem, &cfg, net, None, &mut out).unwrap();
    drop(out);
    println!("trained {iterations} iterations in {:.1?}", started.elapsed());

    let mut ocfg = exp.oracle_config();
    ocfg.n_walkers = walkers;
    ocfg.dt_micro = 1e-5;
    let table = estimate_table(&problem.domain, problem.fields.as_ref(), problem.dirichlet.as_ref(), &default_probes(&problem.domain, 1), &ocfg).unwrap();
    let report = compare_network(&net, &table, 0.0);
    for p in &report.points {
        println!(
            "({:+.3}, {:+.3}) network {:.5} oracle {:.5} +/- {:.1e} rel {:.2e}",
            p.point[0], p.point[1], p.network, p.oracle_mean, p.oracle_stderr, p.relative_error
        );
    }
    println!("RMS relative difference {:.3e}", report.rms_relative.unwrap_or(f64::NAN));
    let n = neumann_residual(&net, &problem.domain.perforations()[0], 64, 1e-4);
    println!("Neumann: mean |du/dn| {:.3e}, mean |grad u| {:.3e}, ratio {:.3}", n.mean_normal, n.mean_gradient, n.ratio());
    let r = pde_residual(&net, &problem, 256, 1e-3, 0.05, 1);
    println!("PDE residual |Lap u / 2 - G|: median {:.3e} (|G| = 1)", r.median);
}
