//! The constant problem around the single disk: a network that starts at
//! the exact solution u = 1 has zero loss and never moves.

use dflm::cli::export_grid;
use dflm::config::{bundled, parse_config_str};
use dflm::network::FourierNetwork;
use dflm::trainer::{train, RunOutput};

fn main() {
    let exp = parse_config_str(bundled("constant").unwrap()).unwrap();
    let problem = exp.problem();
    let cfg = exp.train_config();
    let mut net = FourierNetwork::init(&exp.config.network, exp.config.seed).unwrap();
    net.set_constant_output(1.0);
    let before = net.params().to_vec();
    let (net, history) = train(&problem, &cfg, net, None, &mut RunOutput::default()).unwrap();
    let grid = export_grid(&net, &exp.domain, 32).unwrap();
    let sup = grid.values.iter().map(|u| (u - 1.0).abs()).fold(0.0f64, f64::max);
    println!(
        "{} iterations, max loss {:e}, parameters unchanged: {}, sup|u - 1| = {sup:e}",
        history.len(),
        history.iter().map(|h| h.loss).fold(0.0, f64::max),
        net.params() == &before[..]
    );
}
