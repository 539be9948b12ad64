//! Compares reverse-mode gradients with central differences on a small
//! Fourier-feature network, then takes a few Adam steps on a toy fit.

use dflm::network::{adam_step, learning_rate, Activation, AdamState, FourierNetwork, NetworkConfig};

fn main() {
    let cfg = NetworkConfig {
        fourier_pairs: 4,
        sigma2: 2.0,
        hidden_dims: vec![6, 5],
        activation: Activation::Tanh,
    };
    let mut net = FourierNetwork::init(&cfg, 3).unwrap();
    let pts = [[0.1, -0.2], [0.3, 0.4], [-0.45, 0.05]];
    let upstream = [1.0, -0.5, 0.25];
    let analytic = net.backward(&pts, &upstream).unwrap();

    let h = 1e-5;
    let objective = |n: &FourierNetwork| n.forward(&pts).unwrap().iter().zip(&upstream).map(|(u, w)| u * w).sum::<f64>();
    let mut worst = 0.0f64;
    for k in 0..net.num_params() {
        let p0 = net.params()[k];
        net.params_mut()[k] = p0 + h;
        let up = objective(&net);
        net.params_mut()[k] = p0 - h;
        let down = objective(&net);
        net.params_mut()[k] = p0;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-3));
    }
    println!("{} parameters, max relative gradient error {worst:.2e}", net.num_params());

    // fit u(x) = x1 * x2 at a handful of points
    let target: Vec<f64> = pts.iter().map(|p| p[0] * p[1]).collect();
    let mut adam = AdamState::new(net.num_params(), 0.99, 0.99);
    for it in 0..300u64 {
        let u = net.forward(&pts).unwrap();
        let up: Vec<f64> = u.iter().zip(&target).map(|(a, b)| 2.0 * (a - b) / pts.len() as f64).collect();
        let g = net.backward(&pts, &up).unwrap();
        adam_step(net.params_mut(), &g, &mut adam, learning_rate(1e-2, 0.9, it));
        if it % 100 == 0 {
            let loss: f64 = u.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pts.len() as f64;
            println!("step {it:>3}: loss {loss:.3e}");
        }
    }
}
