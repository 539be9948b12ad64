//! Trains on the plain square with boundary data `g = x1`, whose exact
//! solution is `u = x1`, and reports the error on a 21 x 21 grid.
//!
//! Usage: `cargo run --release --example train_harmonic [iterations] [dt_micro] [steps_per_macro] [alpha0] [gamma]`

use dflm::config::{bundled, parse_config_str};
use dflm::network::FourierNetwork;
use dflm::trainer::{train, RunOutput};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut exp = parse_config_str(bundled("harmonic").unwrap()).unwrap();
    if let Some(n) = args.first() {
        exp.config.training.iterations = n.parse().expect("iterations");
    }
    if let Some(dt) = args.get(1) {
        exp.config.training.dt_micro = dt.parse().expect("dt_micro");
    }
    if let Some(m) = args.get(2) {
        exp.config.training.steps_per_macro = m.parse().expect("steps_per_macro");
    }
    if let Some(a) = args.get(3) {
        exp.config.training.alpha0 = a.parse().expect("alpha0");
    }
    if let Some(g) = args.get(4) {
        exp.config.training.gamma = g.parse().expect("gamma");
    }
    let problem = exp.problem();
    let cfg = exp.train_config();
    let net = FourierNetwork::init(&exp.config.network, exp.config.seed).unwrap();

    let started = std::time::Instant::now();
    let (net, history) = train(&problem, &cfg, net, None, &mut RunOutput::default()).unwrap();
    let n = 21;
    let mut worst = 0.0f64;
    let mut at = [0.0, 0.0];
    for j in 0..n {
        for i in 0..n {
            let x = [-0.5 + i as f64 / (n - 1) as f64, -0.5 + j as f64 / (n - 1) as f64];
            let e = (net.eval(x) - x[0]).abs();
            if e > worst {
                worst = e;
                at = x;
            }
        }
    }
    let tail: Vec<f64> = history.iter().rev().take(100).map(|h| h.loss).collect();
    println!(
        "iterations {} | mean loss (last 100) {:.3e} | max |u - x1| on 21x21 grid {:.3e} at ({:+.2}, {:+.2}) | u(0,0) {:+.3e} | {:.1?}",
        history.len(),
        tail.iter().sum::<f64>() / tail.len() as f64,
        worst,
        at[0],
        at[1],
        net.eval([0.0, 0.0]),
        started.elapsed()
    );
}
