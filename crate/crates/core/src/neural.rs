//! Minimal feed-forward network machinery: an MLP with ReLU hidden layers and
//! a linear output, hand-derived backpropagation, Adam, and a categorical
//! distribution head. No autodiff; gradients are exact for this topology and
//! are checked against finite differences in the tests.
//!
//! Parameters live in one flat vector laid out layer by layer as
//! `[W0 (out x in, row-major), b0, W1, b1, ...]`, which keeps optimizer state,
//! snapshots, and weight exchange trivial.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the largest value, ties to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    assert!(!xs.is_empty(), "argmax of empty slice");
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Dot product with a four-way unrolled accumulator; the independent partial
/// sums let the compiler vectorize despite float non-associativity, and the
/// fixed order keeps results bit-reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let lanes = n - n % 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut j = 0;
    while j < lanes {
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
        j += 4;
    }
    let mut s = (s0 + s2) + (s1 + s3);
    while j < n {
        s += a[j] * b[j];
        j += 1;
    }
    s
}

/// Fully connected network `dims[0] -> dims[1] -> ... -> dims.last()`, ReLU on
/// hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
    /// Flat offset of each layer's `[W, b]` block.
    offsets: Vec<usize>,
}

/// Total parameter count for a layer-dims list.
pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// He-style uniform fan-in initialization, biases zero.
    pub fn new_seeded<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(dims);
        for l in 0..net.layers() {
            let (din, dout) = (dims[l], dims[l + 1]);
            let bound = (6.0 / din as f64).sqrt();
            let off = net.offsets[l];
            for w in &mut net.params[off..off + din * dout] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "network needs at least input and output dims");
        assert!(dims.iter().all(|&d| d > 0), "zero-width layer");
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        let mut off = 0;
        for w in dims.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        Mlp { dims: dims.to_vec(), params: vec![0.0; off], offsets }
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let expected = param_count(dims);
        if params.len() != expected {
            return Err(Error::CorruptArtifact(format!(
                "parameter count {} does not match dims {:?} (expected {})",
                params.len(),
                dims,
                expected
            )));
        }
        let mut net = Self::zeros(dims);
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64], usize, usize) {
        let (din, dout) = (self.dims[l], self.dims[l + 1]);
        let off = self.offsets[l];
        (&self.params[off..off + din * dout], &self.params[off + din * dout..off + din * dout + dout], din, dout)
    }

    /// Output for one input. Panics on input length mismatch.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input length does not match network input dim");
        let mut a = x.to_vec();
        for l in 0..self.layers() {
            let (w, b, din, dout) = self.layer(l);
            let mut z = Vec::with_capacity(dout);
            for i in 0..dout {
                z.push(b[i] + dot(&w[i * din..(i + 1) * din], &a));
            }
            if l + 1 != self.layers() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        a
    }

    /// Forward pass retaining every layer's pre-activation and activation for
    /// [`Mlp::backward_into`].
    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        assert_eq!(x.len(), self.input_dim(), "input length does not match network input dim");
        let mut acts = Vec::with_capacity(self.dims.len());
        let mut zs = Vec::with_capacity(self.layers());
        acts.push(x.to_vec());
        for l in 0..self.layers() {
            let (w, b, din, dout) = self.layer(l);
            let a_prev = acts.last().unwrap();
            let mut z = Vec::with_capacity(dout);
            for i in 0..dout {
                z.push(b[i] + dot(&w[i * din..(i + 1) * din], a_prev));
            }
            let a = if l + 1 == self.layers() { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() };
            zs.push(z);
            acts.push(a);
        }
        ForwardCache { acts, zs }
    }

    /// Accumulates `d loss / d params` into `grads` given the gradient of the
    /// loss with respect to the network output. `grads` must have full
    /// parameter length; it is not cleared first, so batches can sum in place.
    pub fn backward_into(&self, cache: &ForwardCache, dout: &[f64], grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer length mismatch");
        assert_eq!(dout.len(), self.output_dim(), "output gradient length mismatch");
        assert_eq!(cache.acts.len(), self.dims.len(), "stale forward cache");
        let mut delta = dout.to_vec();
        for l in (0..self.layers()).rev() {
            let (w, _, din, dn) = self.layer(l);
            let off = self.offsets[l];
            let a_prev = &cache.acts[l];
            for i in 0..dn {
                let d = delta[i];
                if d != 0.0 {
                    let gw = &mut grads[off + i * din..off + (i + 1) * din];
                    for j in 0..din {
                        gw[j] += d * a_prev[j];
                    }
                }
                grads[off + din * dn + i] += d;
            }
            if l > 0 {
                let z_prev = &cache.zs[l - 1];
                let mut next = vec![0.0; din];
                for i in 0..dn {
                    let d = delta[i];
                    if d != 0.0 {
                        let row = &w[i * din..(i + 1) * din];
                        for j in 0..din {
                            next[j] += d * row[j];
                        }
                    }
                }
                for j in 0..din {
                    if z_prev[j] <= 0.0 {
                        next[j] = 0.0;
                    }
                }
                delta = next;
            }
        }
    }

    /// Allocating wrapper around [`Mlp::backward_into`].
    pub fn backward(&self, cache: &ForwardCache, dout: &[f64]) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, dout, &mut grads);
        grads
    }

    pub fn snapshot(&self) -> MlpSnapshot {
        MlpSnapshot { dims: self.dims.clone(), params: self.params.clone() }
    }

    pub fn from_snapshot(snap: &MlpSnapshot) -> Result<Self> {
        Self::from_params(&snap.dims, snap.params.clone())
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts.last()` the output.
    pub acts: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pub zs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

/// Adam optimizer state over one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(lr: f64, param_count: usize) -> Self {
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; param_count], v: vec![0.0; param_count], t: 0 }
    }

    /// One bias-corrected Adam update; `params` and `grads` must match the
    /// state's parameter count.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Max-subtracted softmax; stable for any finite logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Discrete distribution over action indices built from logits.
#[derive(Debug, Clone)]
pub struct Categorical {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Self {
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = logits.iter().map(|&x| x - m).collect();
        let log_sum = shifted.iter().map(|&x| x.exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = shifted.iter().map(|&x| x - log_sum).collect();
        let probs = log_probs.iter().map(|&lp| lp.exp()).collect();
        Categorical { probs, log_probs }
    }

    /// Inverse-CDF sample from one uniform draw.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.log_probs[action]
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .map(|(&p, &lp)| if p > 0.0 { p * lp } else { 0.0 })
            .sum::<f64>()
    }

    /// Most probable action, ties to the lowest index.
    pub fn mode(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Owned copy of network parameters, the unit of weight exchange and of the
/// on-disk policy format (flat little-endian f64 plus a JSON sidecar).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSnapshot {
    pub dims: Vec<usize>,
    pub params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    label: String,
    dims: Vec<usize>,
    param_count: usize,
}

impl MlpSnapshot {
    /// Writes `<stem>.bin` (flat little-endian f64) and `<stem>.json`
    /// (layer dims sidecar).
    pub fn write(&self, stem: &Path, label: &str) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        fs::write(stem.with_extension("bin"), bytes)?;
        let sidecar = Sidecar { label: label.to_string(), dims: self.dims.clone(), param_count: self.params.len() };
        fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
        let bytes = fs::read(stem.with_extension("bin"))?;
        if bytes.len() != sidecar.param_count * 8 || sidecar.param_count != param_count(&sidecar.dims) {
            return Err(Error::CorruptArtifact(format!(
                "weight file {} does not match its sidecar",
                stem.display()
            )));
        }
        let params = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(MlpSnapshot { dims: sidecar.dims, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_for;
    use approx::assert_abs_diff_eq;

    /// Straight-line reimplementation of the forward pass used as an oracle.
    fn naive_forward(dims: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..dims.len() - 1 {
            let (din, dout) = (dims[l], dims[l + 1]);
            let mut z = vec![0.0; dout];
            for i in 0..dout {
                z[i] = params[off + din * dout + i];
                for j in 0..din {
                    z[i] += params[off + i * din + j] * a[j];
                }
            }
            if l + 2 != dims.len() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            off += din * dout + dout;
            a = z;
        }
        a
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 64, 64, 5]);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]), vec![0.0; 5]);
    }

    #[test]
    fn two_unit_chain_acts_as_relu() {
        let mut net = Mlp::zeros(&[1, 1, 1]);
        net.params_mut()[0] = 1.0; // W0
        net.params_mut()[2] = 1.0; // W1 (after b0)
        assert_eq!(net.forward(&[2.0]), vec![2.0]);
        assert_eq!(net.forward(&[-3.0]), vec![0.0]);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = rng_for(11, 0);
        for dims in [vec![2, 5, 3], vec![4, 8, 8, 2], vec![1, 1]] {
            let net = Mlp::new_seeded(&dims, &mut rng);
            for _ in 0..10 {
                let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let got = net.forward(&x);
                let want = naive_forward(&dims, net.params(), &x);
                for (g, w) in got.iter().zip(&want) {
                    assert_abs_diff_eq!(g, w, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_linear_layer_gradient_is_analytic() {
        // Squared loss on a 3 -> 1 linear map: dL/dw = 2 (pred - y) x.
        let mut rng = rng_for(5, 0);
        let net = Mlp::new_seeded(&[3, 1], &mut rng);
        let x = [0.3, -1.2, 0.7];
        let y = 0.25;
        let cache = net.forward_cached(&x);
        let pred = cache.output()[0];
        let grads = net.backward(&cache, &[2.0 * (pred - y)]);
        for j in 0..3 {
            assert_abs_diff_eq!(grads[j], 2.0 * (pred - y) * x[j], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(grads[3], 2.0 * (pred - y), epsilon = 1e-12);
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let mut rng = rng_for(6, 0);
        let net = Mlp::new_seeded(&[4, 16, 3], &mut rng);
        let cache = net.forward_cached(&[0.1, 0.2, 0.3, 0.4]);
        let grads = net.backward(&cache, &[0.0, 0.0, 0.0]);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_matches_central_finite_differences() {
        // Loss: sum of outputs, so dL/dout = 1. Small net keeps this fast.
        let mut rng = rng_for(12, 0);
        let mut net = Mlp::new_seeded(&[3, 6, 4, 2], &mut rng);
        let x: Vec<f64> = vec![0.4, -0.9, 1.3];
        let cache = net.forward_cached(&x);
        let grads = net.backward(&cache, &[1.0, 1.0]);
        let h = 1e-5;
        for i in 0..net.params().len() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up: f64 = net.forward(&x).iter().sum();
            net.params_mut()[i] = orig - h;
            let down: f64 = net.forward(&x).iter().sum();
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = grads[i].abs().max(fd.abs()).max(1e-6);
            assert!(
                ((grads[i] - fd) / denom).abs() <= 1e-4,
                "param {i}: analytic {} vs fd {}",
                grads[i],
                fd
            );
        }
    }

    #[test]
    fn adam_ignores_zero_gradients() {
        let mut params = vec![0.5, -0.25, 1.0];
        let mut adam = AdamState::new(1e-3, 3);
        let before = params.clone();
        for _ in 0..5 {
            adam.step(&mut params, &[0.0, 0.0, 0.0]);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut params = vec![1.0];
        let mut adam = AdamState::new(0.01, 1);
        adam.step(&mut params, &[1.0]);
        // Bias correction makes m_hat / sqrt(v_hat) = 1 on the first step.
        assert_abs_diff_eq!(params[0], 1.0 - 0.01, epsilon = 1e-9);
    }

    #[test]
    fn adam_matches_hand_trace() {
        // Three steps on a scalar with gradients 1.0, -0.5, 2.0, traced with
        // the textbook update formulas.
        let grads = [1.0, -0.5, 2.0];
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut expect = 0.0_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        for (t, &g) in grads.iter().enumerate() {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32 + 1));
            let v_hat = v / (1.0 - b2.powi(t as i32 + 1));
            expect -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        let mut params = vec![0.0];
        let mut adam = AdamState::new(lr, 1);
        for &g in &grads {
            adam.step(&mut params, &[g]);
        }
        assert_abs_diff_eq!(params[0], expect, epsilon = 1e-15);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = Mlp::new_seeded(&[2, 64, 64, 15], &mut rng_for(99, 1));
        let b = Mlp::new_seeded(&[2, 64, 64, 15], &mut rng_for(99, 1));
        assert_eq!(a.params(), b.params());
        let c = Mlp::new_seeded(&[2, 64, 64, 15], &mut rng_for(100, 1));
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        let d = Categorical::from_logits(&vec![0.7; 15]);
        for &p in &d.probs {
            assert_abs_diff_eq!(p, 1.0 / 15.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(d.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.entropy(), (15.0_f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn softmax_is_stable_for_extreme_logits() {
        let mut rng = rng_for(21, 0);
        for _ in 0..500 {
            let logits: Vec<f64> = (0..8).map(|_| rng.gen_range(-1e4..1e4)).collect();
            let d = Categorical::from_logits(&logits);
            assert!(d.probs.iter().all(|p| p.is_finite()));
            assert!(d.log_probs.iter().all(|lp| !lp.is_nan()));
            assert_abs_diff_eq!(d.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dominant_logit_is_sampled_almost_always() {
        let mut logits = vec![0.0; 15];
        logits[7] = 1000.0;
        let d = Categorical::from_logits(&logits);
        let mut rng = rng_for(33, 0);
        let hits = (0..10_000).filter(|_| d.sample(&mut rng) == 7).count();
        assert!(hits >= 9990, "dominant logit sampled {hits}/10000 times");
        assert_eq!(d.mode(), 7);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.0, 5.0, 1.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0, 2.0]), 0);
        assert_eq!(argmax(&[-1.0]), 0);
    }

    #[test]
    fn snapshot_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let net = Mlp::new_seeded(&[2, 8, 3], &mut rng_for(4, 2));
        let stem = dir.path().join("weights");
        net.snapshot().write(&stem, "actor").unwrap();
        let back = MlpSnapshot::read(&stem).unwrap();
        assert_eq!(back, net.snapshot());
        let restored = Mlp::from_snapshot(&back).unwrap();
        assert_eq!(restored.forward(&[0.3, -0.4]), net.forward(&[0.3, -0.4]));
    }

    #[test]
    fn corrupt_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let net = Mlp::new_seeded(&[2, 4, 2], &mut rng_for(4, 2));
        let stem = dir.path().join("weights");
        net.snapshot().write(&stem, "critic").unwrap();
        let bin = stem.with_extension("bin");
        let mut bytes = std::fs::read(&bin).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&bin, bytes).unwrap();
        assert!(matches!(MlpSnapshot::read(&stem), Err(Error::CorruptArtifact(_))));
    }
}
