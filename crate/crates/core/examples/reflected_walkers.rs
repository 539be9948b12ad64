//! Walkers launched next to the single large disk: counts kills and
//! reflections over one macro step and checks the Girsanov weights.

use dflm::geometry::{PerforatedDomain, Perforation, Rect};
use dflm::sde::{check_timestep, simulate_paths, FnFields, StepConfig, StreamKey, WalkMode, RATIO_THRESHOLD};

fn main() {
    let domain = PerforatedDomain::new(Rect::unit_square(), vec![Perforation::new([0.0, 0.0], 0.4)]);
    let cfg = StepConfig::new(5e-6, 128, WalkMode::BrownianWeighted);
    let check = check_timestep(cfg.dt_micro, 0.4);
    println!("mean micro step {:.3e} (limit {:.3e}): ok = {}", check.mean_step, RATIO_THRESHOLD * 0.4, check.ok);

    // a rotating drift, so the weights are not all one
    let fields = FnFields {
        drift: |x: [f64; 2], _u: f64| [-x[1], x[0]],
        source: |_x: [f64; 2], _u: f64| -1.0,
        uses_solution: false,
    };
    let starts = [[0.401, 0.0], [0.45, 0.0], [0.499, 0.0]];
    let batch = simulate_paths(&domain, &fields, &|_| 0.0, &starts, 20_000, &cfg, StreamKey { seed: 7, iteration: 0 }).unwrap();
    for (i, s) in starts.iter().enumerate() {
        let w = batch.walkers_of(i);
        let killed = w.iter().filter(|w| !w.is_active()).count();
        let reflections: u32 = w.iter().map(|w| w.reflections).sum();
        let mean_weight = w.iter().map(|w| w.weight()).sum::<f64>() / w.len() as f64;
        let mean_time = w.iter().map(|w| w.elapsed).sum::<f64>() / w.len() as f64;
        println!(
            "start ({:.3}, {:.1}): killed {:>5}, reflections {:>6}, mean weight {:.4}, mean elapsed {:.3e} (macro step {:.3e})",
            s[0],
            s[1],
            killed,
            reflections,
            mean_weight,
            mean_time,
            cfg.dt_macro()
        );
    }
}
