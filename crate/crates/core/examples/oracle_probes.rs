//! Monte Carlo reference values for the single-disk problem at the default
//! probe rings, and the effect of quadrupling the walker count.
//!
//! Usage: `cargo run --release --example oracle_probes [walkers]`

use dflm::geometry::{PerforatedDomain, Perforation, Rect};
use dflm::oracle::{default_probes, estimate_point, OracleConfig};
use dflm::sde::ConstantSource;

fn main() {
    let walkers: usize = std::env::args().nth(1).map(|s| s.parse().expect("walkers")).unwrap_or(4000);
    let domain = PerforatedDomain::new(Rect::unit_square(), vec![Perforation::new([0.0, 0.0], 0.4)]);
    let source = ConstantSource(-1.0);
    let g = |_: [f64; 2]| 1.0;
    for p in default_probes(&domain, 1) {
        let a = estimate_point(&domain, &source, &g, p, &OracleConfig::new(walkers, 1e-5, 1)).unwrap();
        let b = estimate_point(&domain, &source, &g, p, &OracleConfig::new(4 * walkers, 1e-5, 2)).unwrap();
        println!(
            "({:+.3}, {:+.3})  u = {:.5} +/- {:.1e}  | 4x walkers: {:.5} +/- {:.1e}  | stderr ratio {:.2}  | E[tau] {:.4}",
            p[0],
            p[1],
            a.mean,
            a.stderr,
            b.mean,
            b.stderr,
            a.stderr / b.stderr,
            b.mean_exit_time
        );
    }
}
