//! Effective tensor of the periodic cell with a centred disk of radius 2/7,
//! its grid convergence, and the homogenized solution on the unit square.
//!
//! Usage: `cargo run --release --example homogenization [out.csv]`

use dflm::geometry::{PerforatedDomain, Rect};
use dflm::homog::{effective_tensor, solve_homogenized, CellGeometry};

fn main() {
    let cell = CellGeometry::centered(2.0 / 7.0).unwrap();
    let mut previous: Option<f64> = None;
    for n in [64, 128, 256, 512] {
        let t = effective_tensor(&cell, n).unwrap();
        let change = previous.map(|p| format!("{:.2e}", (t.a[0][0] - p).abs())).unwrap_or_else(|| "-".into());
        println!(
            "n = {n:>3}: A0 = [[{:.5}, {:+.1e}], [{:+.1e}, {:.5}]], material fraction {:.4}, change {change}",
            t.a[0][0], t.a[0][1], t.a[1][0], t.a[1][1], t.porosity
        );
        previous = Some(t.a[0][0]);
    }

    let a0 = effective_tensor(&cell, 256).unwrap();
    let rect = Rect::unit_square();
    let domain = PerforatedDomain::periodic_lattice(rect, [20, 20], 1.0 / 70.0);
    // -1/2 Lap u = 1 in divergence form is div(A0 grad u) = -2
    let mut u = solve_homogenized(&a0, &|_| -2.0, &|_| 1.0, &rect, 201).unwrap();
    println!("homogenized u at the centre {:.5}, max {:.5}", u.get(100, 100), u.values.iter().cloned().fold(f64::MIN, f64::max));
    u.apply_mask(&domain);
    println!("{} of {} lattice nodes fall inside perforations", u.masked_out(), u.values.len());
    if let Some(path) = std::env::args().nth(1) {
        u.save(std::path::Path::new(&path)).unwrap();
        println!("wrote {path}");
    }
}
