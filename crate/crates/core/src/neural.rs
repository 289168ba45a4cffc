//! Small dense Q-network with hand-written backpropagation and Adam.
//!
//! Weights are stored row-major as `out × in`, so a forward pass is a run of
//! contiguous dot products and the backward pass a run of axpys.
//!
//! # Checkpoint format
//!
//! Plain UTF-8 text, version 1:
//!
//! ```text
//! beamloc-qnet 1
//! layers <L>
//! dense <in> <out>          (repeated L times, each followed by)
//! <out lines of <in> weights, space separated>
//! <one line of <out> biases>
//! ```
//!
//! Values use Rust's shortest round-trip exponent notation (`{:e}`), so a
//! save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "beamloc-qnet 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.biases
                .iter()
                .enumerate()
                .map(|(o, b)| b + dot(self.row(o), x)),
        );
    }
}

/// Dot product with four partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `fan_out × fan_in` matrix with entries `~ N(0, 2/fan_in)`.
pub fn he_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Vec<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// MLP with ReLU on hidden layers and identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub layers: Vec<Dense>,
}

impl QNetwork {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("network: bad layer sizes {sizes:?}")));
        }
        Ok(Self {
            layers: sizes.windows(2).map(|p| Dense::zeros(p[0], p[1])).collect(),
        })
    }

    /// He-initialized weights, zero biases. Layers are drawn in order.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in &mut net.layers {
            layer.weights = he_init(layer.inputs, layer.outputs, rng);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if l < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass over a batch. Row `k` of the result equals
    /// `forward(xs[k])` bit for bit.
    pub fn forward_batch<S: AsRef<[f64]>>(&self, xs: &[S]) -> Result<Vec<Vec<f64>>> {
        let acts = self.batch_activations(xs)?;
        let out = acts.last().map(Vec::as_slice).unwrap_or(&[]);
        Ok(out.chunks(self.output_dim()).map(<[f64]>::to_vec).collect())
    }

    /// Flat `B × n_l` activations: index 0 is the input, the last entry the
    /// output, hidden entries are post-ReLU.
    fn batch_activations<S: AsRef<[f64]>>(&self, xs: &[S]) -> Result<Vec<Vec<f64>>> {
        let b = xs.len();
        let mut input = Vec::with_capacity(b * self.input_dim());
        for x in xs {
            self.check_input(x.as_ref())?;
            input.extend_from_slice(x.as_ref());
        }
        let mut acts = vec![input];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let x = &acts[l];
            let mut out = vec![0.0; b * layer.outputs];
            for o in 0..layer.outputs {
                let row = layer.row(o);
                let bias = layer.biases[o];
                for k in 0..b {
                    let v = bias + dot(row, &x[k * layer.inputs..(k + 1) * layer.inputs]);
                    out[k * layer.outputs + o] = if l < last { v.max(0.0) } else { v };
                }
            }
            acts.push(out);
        }
        Ok(acts)
    }

    /// Makes `self` a bit-identical copy of `other`.
    pub fn copy_from(&mut self, other: &QNetwork) -> Result<()> {
        if self.layer_sizes() != other.layer_sizes() {
            return Err(Error::Config(format!(
                "network: architecture mismatch {:?} vs {:?}",
                self.layer_sizes(),
                other.layer_sizes()
            )));
        }
        self.clone_from(other);
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(s, "layers {}", self.layers.len());
        let line = |s: &mut String, vals: &[f64]| {
            let mut first = true;
            for v in vals {
                if !first {
                    s.push(' ');
                }
                first = false;
                let _ = write!(s, "{v:e}");
            }
            s.push('\n');
        };
        for layer in &self.layers {
            let _ = writeln!(s, "dense {} {}", layer.inputs, layer.outputs);
            for o in 0..layer.outputs {
                line(&mut s, layer.row(o));
            }
            line(&mut s, &layer.biases);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: String| Error::Checkpoint(what);
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| bad(format!("unexpected end of file, expected {what}")))
        };
        let (_, magic) = next("header")?;
        if magic.trim() != CHECKPOINT_MAGIC {
            return Err(bad(format!("line 1: expected '{CHECKPOINT_MAGIC}', got '{magic}'")));
        }
        let (n, l) = next("layer count")?;
        let count: usize = l
            .strip_prefix("layers ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(format!("line {}: expected 'layers <n>'", n + 1)))?;
        let parse_row = |n: usize, l: &str, len: usize| -> Result<Vec<f64>> {
            let vals = l
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
            if vals.len() != len {
                return Err(bad(format!("line {}: expected {len} values, got {}", n + 1, vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("line {}: non-finite parameter", n + 1)));
            }
            Ok(vals)
        };
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, l) = next("dense header")?;
            let dims: Vec<usize> = l
                .strip_prefix("dense ")
                .map(|r| r.split_whitespace().filter_map(|v| v.parse().ok()).collect())
                .unwrap_or_default();
            if dims.len() != 2 || dims.contains(&0) {
                return Err(bad(format!("line {}: expected 'dense <in> <out>'", n + 1)));
            }
            let mut layer = Dense::zeros(dims[0], dims[1]);
            layer.weights.clear();
            for _ in 0..dims[1] {
                let (n, l) = next("weight row")?;
                layer.weights.extend(parse_row(n, l, dims[0])?);
            }
            let (n, l) = next("bias row")?;
            layer.biases = parse_row(n, l, dims[1])?;
            if let Some(prev) = layers.last().map(|p: &Dense| p.outputs) {
                if prev != layer.inputs {
                    return Err(bad(format!("line {}: layer input {} does not match previous output {prev}", n + 1, layer.inputs)));
                }
            }
            layers.push(layer);
        }
        if layers.is_empty() {
            return Err(bad("no layers".into()));
        }
        Ok(Self { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Gradient container shaped like the network.
pub type Gradients = QNetwork;

impl QNetwork {
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.params().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// `½δ²` for `|δ| < 1`, `|δ| − ½` otherwise.
pub fn huber(delta: f64) -> f64 {
    if delta.abs() < 1.0 {
        0.5 * delta * delta
    } else {
        delta.abs() - 0.5
    }
}

pub fn huber_grad(delta: f64) -> f64 {
    delta.clamp(-1.0, 1.0)
}

/// Gradient of the batch-mean Huber loss on `Q(s_k, a_k) − y_k`, plus the
/// loss itself.
pub fn backward<S: AsRef<[f64]>>(
    net: &QNetwork,
    states: &[S],
    actions: &[usize],
    targets: &[f64],
) -> Result<(Gradients, f64)> {
    let b = states.len();
    if b == 0 {
        return Err(Error::Config("backward: empty batch".into()));
    }
    for len in [actions.len(), targets.len()] {
        if len != b {
            return Err(Error::DimensionMismatch { expected: b, got: len });
        }
    }
    let n_out = net.output_dim();
    if let Some(&a) = actions.iter().find(|&&a| a >= n_out) {
        return Err(Error::ActionOutOfRange { index: a, len: n_out });
    }
    let acts = net.batch_activations(states)?;
    let q = &acts[acts.len() - 1];
    let mut loss = 0.0;
    let mut delta = vec![0.0; b * n_out];
    for (k, (&a, &y)) in actions.iter().zip(targets).enumerate() {
        let td = q[k * n_out + a] - y;
        loss += huber(td);
        delta[k * n_out + a] = huber_grad(td) / b as f64;
    }
    let mut grads = net.zeros_like();
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let (n_in, n_o) = (layer.inputs, layer.outputs);
        let x = &acts[l];
        let g = &mut grads.layers[l];
        for o in 0..n_o {
            let grow = &mut g.weights[o * n_in..(o + 1) * n_in];
            for k in 0..b {
                let d = delta[k * n_o + o];
                if d != 0.0 {
                    g.biases[o] += d;
                    axpy(d, &x[k * n_in..(k + 1) * n_in], grow);
                }
            }
        }
        if l == 0 {
            break;
        }
        let mut prev = vec![0.0; b * n_in];
        for o in 0..n_o {
            let row = layer.row(o);
            for k in 0..b {
                let d = delta[k * n_o + o];
                if d != 0.0 {
                    axpy(d, row, &mut prev[k * n_in..(k + 1) * n_in]);
                }
            }
        }
        // ReLU mask of the layer that produced x
        for (p, xi) in prev.iter_mut().zip(x) {
            if *xi <= 0.0 {
                *p = 0.0;
            }
        }
        delta = prev;
    }
    Ok((grads, loss / b as f64))
}

/// Rescales `grads` so its global ℓ2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.params_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &QNetwork, lr: f64) -> Self {
        Self {
            m: net.zeros_like(),
            v: net.zeros_like(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut QNetwork, grads: &Gradients, adam: &mut AdamState) -> Result<()> {
    if net.layer_sizes() != grads.layer_sizes() || net.layer_sizes() != adam.m.layer_sizes() {
        return Err(Error::Config("adam: shape mismatch".into()));
    }
    adam.t += 1;
    let t = adam.t as i32;
    let c1 = 1.0 - adam.beta1.powi(t);
    let c2 = 1.0 - adam.beta2.powi(t);
    let (b1, b2, eps) = (adam.beta1, adam.beta2, adam.eps);
    let step = adam.lr / c1;
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            p[i] -= step * m[i] / ((v[i] / c2).sqrt() + eps);
        }
    };
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let (gl, ml, vl) = (&grads.layers[l], &mut adam.m.layers[l], &mut adam.v.layers[l]);
        update(&mut layer.weights, &gl.weights, &mut ml.weights, &mut vl.weights);
        update(&mut layer.biases, &gl.biases, &mut ml.biases, &mut vl.biases);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn huber_values() {
        assert_eq!(huber(0.5), 0.125);
        assert_eq!(huber(1.0), 0.5);
        assert_eq!(huber(-3.0), 2.5);
        assert_eq!(huber_grad(-3.0), -1.0);
        assert_eq!(huber_grad(0.3), 0.3);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = QNetwork::zeros(&[6, 8, 4]).unwrap();
        assert_eq!(net.forward(&[1.0; 6]).unwrap(), vec![0.0; 4]);
        assert!(matches!(net.forward(&[1.0; 5]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn identity_passthrough() {
        let mut net = QNetwork::zeros(&[3, 3, 3]).unwrap();
        for l in &mut net.layers {
            for i in 0..3 {
                l.weights[i * 3 + i] = 1.0;
            }
        }
        assert_eq!(net.forward(&[0.5, 2.0, 3.5]).unwrap(), vec![0.5, 2.0, 3.5]);
    }

    #[test]
    fn clip_cases() {
        let mut g = QNetwork::zeros(&[1, 2]).unwrap();
        g.layers[0].weights = vec![6.0, 8.0];
        let n = clip_global_norm(&mut g, 5.0);
        assert_eq!(n, 10.0);
        assert_eq!(g.layers[0].weights, vec![3.0, 4.0]);
        assert!((g.global_norm() - 5.0).abs() < 1e-12);

        let mut small = QNetwork::zeros(&[1, 2]).unwrap();
        small.layers[0].weights = vec![1.2, 1.6];
        let before = small.clone();
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = QNetwork::zeros(&[1, 1]).unwrap();
        let mut g = net.zeros_like();
        g.layers[0].weights[0] = 1.0;
        let mut adam = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &g, &mut adam).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = lr / (1 + eps)
        assert!((net.layers[0].weights[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(net.layers[0].biases[0], 0.0);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let net = QNetwork::new(&[6, 8, 4], &mut rng_from(9)).unwrap();
        let back = QNetwork::from_text(&net.to_text()).unwrap();
        assert_eq!(net, back);
        assert!(QNetwork::from_text("beamloc-qnet 2\n").is_err());
        let truncated: String = net.to_text().lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(QNetwork::from_text(&truncated), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn he_init_is_seeded() {
        let a = QNetwork::new(&[6, 8, 4], &mut rng_from(1)).unwrap();
        let b = QNetwork::new(&[6, 8, 4], &mut rng_from(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }
}
