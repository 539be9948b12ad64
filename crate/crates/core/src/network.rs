//! Fourier-feature network `x ↦ MLP([cos(Ax); sin(Ax)])` with hand-written
//! reverse-mode gradients and Adam.
//!
//! The frequency matrix `A` is drawn once from `N(0, σ²)` and never trained.
//! All dense-layer parameters live in one flat vector so the optimizer and
//! the checkpoint format can treat them uniformly.

use crate::geometry::{DomainLayout, Vec2};
use crate::rng::{self, tag};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use rayon::prelude::*;
use std::io::{BufRead, Write};
use thiserror::Error;

/// Rows per block in batched forward and backward passes.
const BLOCK_ROWS: usize = 2048;

/// Learning-rate decay is applied once per this many iterations.
pub const DECAY_PERIOD: u64 = 1000;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("non-finite input at batch index {0}")]
    NonFiniteInput(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of frequency rows `m`; the embedding has width `2m`.
    pub fourier_pairs: usize,
    /// Variance of the frequency entries.
    pub sigma2: f64,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.fourier_pairs == 0 {
            return Err(NetworkError::Config("fourier_pairs must be at least 1".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(NetworkError::Config("hidden_dims must be nonempty and positive".into()));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(NetworkError::Config("sigma2 must be positive".into()));
        }
        Ok(())
    }

    /// Dense layer widths from the embedding to the scalar output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(2 * self.fourier_pairs);
        w.extend_from_slice(&self.hidden_dims);
        w.push(1);
        w
    }
}

/// Location of one dense layer inside the flat parameter vector. The weight
/// block is `n_out × n_in` row-major, followed by `n_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weights_len(&self) -> usize {
        self.n_in * self.n_out
    }
    pub fn len(&self) -> usize {
        self.weights_len() + self.n_out
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn bias_offset(&self) -> usize {
        self.offset + self.weights_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierNetwork {
    config: NetworkConfig,
    freqs: Vec<f64>,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

fn layout(config: &NetworkConfig) -> (Vec<LayerShape>, usize) {
    let widths = config.widths();
    let mut offset = 0;
    let layers = widths
        .windows(2)
        .map(|w| {
            let l = LayerShape {
                n_in: w[0],
                n_out: w[1],
                offset,
            };
            offset += l.len();
            l
        })
        .collect();
    (layers, offset)
}

/// `C = A·B` (or `C += A·B`) for row/column-strided matrices.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices covering every strided index of an
    // m×k, k×n and m×n matrix respectively.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            if accumulate { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Intermediate activations of one forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct Tape {
    rows: usize,
    /// `acts[0]` is the embedding; `acts[l]` is the output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl FourierNetwork {
    /// Frequencies from `N(0, σ²)`, Glorot-normal weights, zero biases.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self, NetworkError> {
        config.validate()?;
        let mut rng = rng::substream(seed, &[tag::INIT]);
        let freq_dist = Normal::new(0.0, config.sigma2.sqrt()).expect("positive variance");
        let freqs = (0..2 * config.fourier_pairs)
            .map(|_| freq_dist.sample(&mut rng))
            .collect();
        let (layers, total) = layout(config);
        let mut params = vec![0.0; total];
        for l in &layers {
            let std = (2.0 / (l.n_in + l.n_out) as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("positive std");
            for w in &mut params[l.offset..l.bias_offset()] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(Self {
            config: config.clone(),
            freqs,
            layers,
            params,
        })
    }

    /// Builds a network from explicit arrays, checking shapes.
    pub fn from_parts(
        config: NetworkConfig,
        freqs: Vec<f64>,
        params: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        config.validate()?;
        let (layers, total) = layout(&config);
        if freqs.len() != 2 * config.fourier_pairs {
            return Err(NetworkError::Shape(format!(
                "expected {} frequencies, got {}",
                2 * config.fourier_pairs,
                freqs.len()
            )));
        }
        if params.len() != total {
            return Err(NetworkError::Shape(format!(
                "expected {total} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            config,
            freqs,
            layers,
            params,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Frequency matrix, `m × 2` row-major.
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Makes the network output exactly `c` everywhere.
    pub fn set_constant_output(&mut self, c: f64) {
        let last = *self.layers.last().expect("at least one layer");
        self.params[last.offset..last.bias_offset()].fill(0.0);
        self.params[last.bias_offset()] = c;
    }

    fn embed_into(&self, points: &[Vec2], out: &mut [f64]) {
        let m = self.config.fourier_pairs;
        for (row, p) in out.chunks_exact_mut(2 * m).zip(points) {
            let (cos_half, sin_half) = row.split_at_mut(m);
            for j in 0..m {
                let s = self.freqs[2 * j] * p[0] + self.freqs[2 * j + 1] * p[1];
                let (sn, cs) = s.sin_cos();
                cos_half[j] = cs;
                sin_half[j] = sn;
            }
        }
    }

    /// Fourier embedding of each point, `n × 2m` row-major.
    pub fn embed(&self, points: &[Vec2]) -> Vec<f64> {
        let mut out = vec![0.0; points.len() * 2 * self.config.fourier_pairs];
        self.embed_into(points, &mut out);
        out
    }

    fn check_finite(points: &[Vec2]) -> Result<(), NetworkError> {
        match points.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            Some(i) => Err(NetworkError::NonFiniteInput(i)),
            None => Ok(()),
        }
    }

    /// Runs one block through all layers, keeping every activation.
    fn forward_block(&self, points: &[Vec2]) -> Tape {
        let rows = points.len();
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut input = vec![0.0; rows * 2 * self.config.fourier_pairs];
        self.embed_into(points, &mut input);
        let last = self.layers.len() - 1;
        let mut output = Vec::new();
        for (idx, l) in self.layers.iter().enumerate() {
            let w = &self.params[l.offset..l.bias_offset()];
            let b = &self.params[l.bias_offset()..l.offset + l.len()];
            let mut next = vec![0.0; rows * l.n_out];
            gemm(
                rows,
                l.n_in,
                l.n_out,
                &input,
                (l.n_in as isize, 1),
                w,
                (1, l.n_in as isize),
                &mut next,
                false,
            );
            let act = self.config.activation;
            for row in next.chunks_exact_mut(l.n_out) {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                    if idx != last {
                        *v = act.apply(*v);
                    }
                }
            }
            acts.push(std::mem::replace(&mut input, next));
            if idx == last {
                output = std::mem::take(&mut input);
            }
        }
        Tape { rows, acts, output }
    }

    /// Network values at a batch of points.
    pub fn forward(&self, points: &[Vec2]) -> Result<Vec<f64>, NetworkError> {
        Self::check_finite(points)?;
        let blocks: Vec<Vec<f64>> = points
            .par_chunks(BLOCK_ROWS)
            .map(|block| self.forward_block(block).output)
            .collect();
        Ok(blocks.concat())
    }

    /// Single-point convenience wrapper around [`forward`](Self::forward).
    pub fn eval(&self, p: Vec2) -> f64 {
        self.forward_block(&[p]).output[0]
    }

    /// Forward pass that keeps the activations for [`backward_from`](Self::backward_from).
    pub fn forward_with_tape(&self, points: &[Vec2]) -> Result<Tape, NetworkError> {
        Self::check_finite(points)?;
        Ok(self.forward_block(points))
    }

    /// Accumulates `Σᵢ upstreamᵢ · ∂u(xᵢ)/∂θ` into `grads`.
    pub fn backward_from(&self, tape: &Tape, upstream: &[f64], grads: &mut [f64]) {
        assert_eq!(upstream.len(), tape.rows);
        assert_eq!(grads.len(), self.params.len());
        let rows = tape.rows;
        let act = self.config.activation;
        let mut delta = upstream.to_vec();
        for (idx, l) in self.layers.iter().enumerate().rev() {
            let input = &tape.acts[idx];
            // weights: dW = deltaᵀ · input
            gemm(
                l.n_out,
                rows,
                l.n_in,
                &delta,
                (1, l.n_out as isize),
                input,
                (l.n_in as isize, 1),
                &mut grads[l.offset..l.bias_offset()],
                true,
            );
            let db = &mut grads[l.bias_offset()..l.offset + l.len()];
            for row in delta.chunks_exact(l.n_out) {
                for (g, d) in db.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if idx == 0 {
                break;
            }
            let w = &self.params[l.offset..l.bias_offset()];
            let mut prev = vec![0.0; rows * l.n_in];
            gemm(
                rows,
                l.n_out,
                l.n_in,
                &delta,
                (l.n_out as isize, 1),
                w,
                (l.n_in as isize, 1),
                &mut prev,
                false,
            );
            for (d, &h) in prev.iter_mut().zip(input) {
                *d *= act.derivative_from_output(h);
            }
            delta = prev;
        }
    }

    /// Gradient of `Σᵢ upstreamᵢ · u(xᵢ; θ)` with respect to the trainable
    /// parameters. The frequencies receive no gradient.
    pub fn backward(&self, points: &[Vec2], upstream: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if points.len() != upstream.len() {
            return Err(NetworkError::Shape(format!(
                "{} points but {} upstream values",
                points.len(),
                upstream.len()
            )));
        }
        Self::check_finite(points)?;
        let mut grads = vec![0.0; self.params.len()];
        for (pts, up) in points.chunks(BLOCK_ROWS).zip(upstream.chunks(BLOCK_ROWS)) {
            let tape = self.forward_block(pts);
            self.backward_from(&tape, up, &mut grads);
        }
        Ok(grads)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(n_params: usize, beta1: f64, beta2: f64) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            beta1,
            beta2,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.first_moment.len());
    state.step_count += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.step_count as i32);
    let c2 = 1.0 - b2.powi(state.step_count as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}

/// Staircase exponential decay: `α₀·γ^⌊n/1000⌋`.
pub fn learning_rate(alpha0: f64, gamma: f64, iteration: u64) -> f64 {
    alpha0 * gamma.powi((iteration / DECAY_PERIOD) as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: NetworkConfig,
    pub seed: u64,
    pub iteration: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainLayout>,
}

/// Writes a JSON header line followed by the frequencies and the flat
/// parameter vector as little-endian `f64`.
pub fn save_checkpoint<W: Write>(
    net: &FourierNetwork,
    header: &CheckpointHeader,
    mut out: W,
) -> Result<(), NetworkError> {
    if header.config != net.config {
        return Err(NetworkError::Checkpoint("header config differs from network".into()));
    }
    let line = serde_json::to_string(header).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(8 * (net.freqs.len() + net.params.len()));
    for v in net.freqs.iter().chain(&net.params) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<R: BufRead>(
    mut input: R,
) -> Result<(FourierNetwork, CheckpointHeader), NetworkError> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: CheckpointHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
    header.config.validate()?;
    let n_freqs = 2 * header.config.fourier_pairs;
    let (_, n_params) = layout(&header.config);
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * (n_freqs + n_params) {
        return Err(NetworkError::Checkpoint(format!(
            "expected {} payload bytes, found {}",
            8 * (n_freqs + n_params),
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let freqs: Vec<f64> = values.by_ref().take(n_freqs).collect();
    let params: Vec<f64> = values.collect();
    let net = FourierNetwork::from_parts(header.config.clone(), freqs, params)?;
    Ok((net, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(act: Activation) -> NetworkConfig {
        NetworkConfig {
            fourier_pairs: 3,
            sigma2: 2.0,
            hidden_dims: vec![5, 4],
            activation: act,
        }
    }

    #[test]
    fn init_shapes_and_variance() {
        let cfg = NetworkConfig {
            fourier_pairs: 100,
            sigma2: 9.0,
            hidden_dims: vec![200, 200, 200],
            activation: Activation::Tanh,
        };
        let net = FourierNetwork::init(&cfg, 1).unwrap();
        assert_eq!(net.freqs().len(), 200);
        let mean = net.freqs().iter().sum::<f64>() / 200.0;
        let var = net.freqs().iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 199.0;
        assert!((7.5..=10.5).contains(&var), "sample variance {var}");
        let dims: Vec<(usize, usize)> = net.layers().iter().map(|l| (l.n_in, l.n_out)).collect();
        assert_eq!(dims, vec![(200, 200), (200, 200), (200, 200), (200, 1)]);
        assert!(net
            .layers()
            .iter()
            .all(|l| net.params()[l.bias_offset()..l.offset + l.len()].iter().all(|&b| b == 0.0)));
        assert_eq!(net, FourierNetwork::init(&cfg, 1).unwrap());
        assert_ne!(net, FourierNetwork::init(&cfg, 2).unwrap());
    }

    #[test]
    fn embedding_at_origin() {
        let net = FourierNetwork::init(&small(Activation::Tanh), 0).unwrap();
        assert_eq!(net.embed(&[[0.0, 0.0]]), vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut net = FourierNetwork::init(&small(Activation::Relu), 0).unwrap();
        net.params_mut().fill(0.0);
        let out = net.forward(&[[0.1, 0.2], [-0.3, 0.4]]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_output() {
        let mut net = FourierNetwork::init(&small(Activation::Tanh), 4).unwrap();
        net.set_constant_output(1.0);
        let out = net.forward(&[[0.1, 0.2], [-0.3, 0.4], [0.5, -0.5]]).unwrap();
        assert!(out.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn batching_matches_single_calls() {
        let net = FourierNetwork::init(&small(Activation::Tanh), 3).unwrap();
        let pts: Vec<Vec2> = (0..5000)
            .map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let batch = net.forward(&pts).unwrap();
        for (p, b) in pts.iter().zip(&batch).step_by(97) {
            assert_eq!(net.eval(*p), *b);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let net = FourierNetwork::init(&small(Activation::Tanh), 3).unwrap();
        assert!(matches!(
            net.forward(&[[0.0, 0.0], [f64::NAN, 0.0]]),
            Err(NetworkError::NonFiniteInput(1))
        ));
    }

    #[test]
    fn backward_linearity_and_zero_upstream() {
        let net = FourierNetwork::init(&small(Activation::Tanh), 8).unwrap();
        let a = [0.1, -0.2];
        let b = [0.3, 0.25];
        let ga = net.backward(&[a], &[1.0]).unwrap();
        let gb = net.backward(&[b], &[1.0]).unwrap();
        let gab = net.backward(&[a, b], &[1.0, 1.0]).unwrap();
        for i in 0..ga.len() {
            assert!((ga[i] + gb[i] - gab[i]).abs() < 1e-14);
        }
        let gz = net.backward(&[a, b], &[0.0, 0.0]).unwrap();
        assert!(gz.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_matches_central_differences() {
        for act in [Activation::Tanh, Activation::Relu] {
            let net = FourierNetwork::init(&small(act), 21).unwrap();
            let p = [0.13, -0.41];
            let g = net.backward(&[p], &[1.0]).unwrap();
            let h = 1e-6;
            let mut probe = net.clone();
            for i in 0..net.num_params() {
                let orig = probe.params()[i];
                probe.params_mut()[i] = orig + h;
                let up = probe.eval(p);
                probe.params_mut()[i] = orig - h;
                let down = probe.eval(p);
                probe.params_mut()[i] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-7 * (1.0 + g[i].abs()), "{act:?} {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn adam_examples() {
        let mut p = vec![0.5, -1.0];
        let mut s = AdamState::new(2, 0.99, 0.99);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1);
        assert_eq!(p, vec![0.5, -1.0]);

        let mut p = vec![0.0];
        let mut s = AdamState::new(1, 0.99, 0.99);
        adam_step(&mut p, &[1.0], &mut s, 0.1);
        // m̂ = v̂ = 1 after bias correction
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(s.step_count, 1);

        let mut p = vec![2.0];
        let mut s = AdamState::new(1, 0.99, 0.99);
        adam_step(&mut p, &[3.0], &mut s, 0.0);
        assert_eq!(p, vec![2.0]);
        assert!((s.first_moment[0] - 0.03).abs() < 1e-15);
        assert!((s.second_moment[0] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn learning_rate_examples() {
        assert_eq!(learning_rate(1e-3, 0.9, 0), 1e-3);
        assert!((learning_rate(1e-3, 0.9, 1000) - 9e-4).abs() < 1e-18);
        assert!((learning_rate(1e-3, 0.9, 2500) - 8.1e-4).abs() < 1e-18);
        assert!((learning_rate(1e-3, 0.9, 999) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = FourierNetwork::init(&small(Activation::Relu), 77).unwrap();
        let header = CheckpointHeader {
            config: net.config().clone(),
            seed: 77,
            iteration: 12,
            domain: None,
        };
        let mut buf = Vec::new();
        save_checkpoint(&net, &header, &mut buf).unwrap();
        let (back, h) = load_checkpoint(&buf[..]).unwrap();
        assert_eq!(h, header);
        assert!(back
            .params()
            .iter()
            .zip(net.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(back
            .freqs()
            .iter()
            .zip(net.freqs())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        // truncated payload is rejected
        assert!(load_checkpoint(&buf[..buf.len() - 3]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn embedding_rows_lie_on_unit_circles(x in -50.0f64..50.0, y in -50.0f64..50.0, seed in 0u64..1000) {
                let net = FourierNetwork::init(&small(Activation::Tanh), seed).unwrap();
                let e = net.embed(&[[x, y]]);
                let m = net.config().fourier_pairs;
                for j in 0..m {
                    prop_assert!((e[j] * e[j] + e[m + j] * e[m + j] - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn adam_never_touches_frequencies(seed in 0u64..1000, steps in 1usize..5) {
                let mut net = FourierNetwork::init(&small(Activation::Tanh), seed).unwrap();
                let before = net.freqs().to_vec();
                let mut state = AdamState::new(net.num_params(), 0.99, 0.99);
                for _ in 0..steps {
                    let g = net.backward(&[[0.2, 0.1]], &[1.0]).unwrap();
                    adam_step(net.params_mut(), &g, &mut state, 1e-2);
                }
                prop_assert!(before.iter().zip(net.freqs()).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }
}
