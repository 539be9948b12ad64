//! Builds the 400-disk periodic domain, checks it, and draws collocation
//! points by rejection sampling.

use dflm::geometry::{validate_configuration, PerforatedDomain, Rect, Region};
use dflm::rng;

fn main() {
    let domain = PerforatedDomain::periodic_lattice(Rect::unit_square(), [20, 20], 1.0 / 70.0);
    let violations = validate_configuration(&domain);
    println!(
        "{} perforations, min radius {:.6}, violations: {}",
        domain.perforations().len(),
        domain.min_radius().unwrap(),
        violations.len()
    );

    let mut rng = rng::substream(42, &[rng::tag::COLLOCATION, 0]);
    let pts = domain.sample_collocation(20_000, &mut rng).unwrap();
    let fluid = 1.0 - domain.perforations().iter().map(|p| std::f64::consts::PI * p.radius * p.radius).sum::<f64>();
    let inside = pts.iter().filter(|p| domain.classify_point(**p) == Region::Interior).count();
    println!("sampled {} points, all interior: {}", pts.len(), inside == pts.len());
    println!("fluid area fraction {fluid:.4}; expected rejections per point {:.4}", 1.0 / fluid - 1.0);

    let probe = [0.025, 0.025];
    println!("({}, {}) classifies as {:?}", probe[0], probe[1], domain.classify_point(probe));
    let exit = domain.segment_domain_exit([0.49, 0.0], [0.51, 0.0]);
    println!("segment (0.49,0) -> (0.51,0) leaves the square at {exit:?}");
}
