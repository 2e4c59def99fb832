//! Actor-critic network with a temporal convolution input layer, explicit
//! reverse-mode gradients and an Adam optimizer.
//!
//! All parameters live in one flat vector. [`Layout`] maps every layer onto
//! a slice of it, which keeps the optimizer, gradient checks and
//! checkpoints oblivious to the architecture.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    /// Time steps per observation.
    pub history: usize,
    /// Values per time step.
    pub components: usize,
    /// Temporal filters, shared by all components.
    pub filters: usize,
    pub hidden: Vec<usize>,
    pub action_dim: usize,
    /// Starting value of every log standard deviation.
    pub initial_log_std: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            history: 5,
            components: 12,
            filters: 3,
            hidden: vec![64, 64],
            action_dim: 3,
            initial_log_std: 0.0,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.history == 0
            || self.components == 0
            || self.filters == 0
            || self.action_dim == 0
            || self.hidden.contains(&0)
            || !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.initial_log_std)
        {
            return Err(Error::InvalidConfig(format!("network dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.history * self.components
    }

    /// Width of the convolution output.
    pub fn features(&self) -> usize {
        self.filters * self.components
    }

    pub fn parameter_count(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dense {
    w: usize,
    b: usize,
    inputs: usize,
    outputs: usize,
}

impl Dense {
    fn new(offset: &mut usize, inputs: usize, outputs: usize) -> Self {
        let w = *offset;
        let b = w + inputs * outputs;
        *offset = b + outputs;
        Self { w, b, inputs, outputs }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct TrunkLayout {
    conv_w: usize,
    conv_b: usize,
    dense: Vec<Dense>,
}

impl TrunkLayout {
    fn new(offset: &mut usize, spec: &NetworkSpec) -> Self {
        let conv_w = *offset;
        let conv_b = conv_w + spec.filters * spec.history;
        *offset = conv_b + spec.filters;
        let mut inputs = spec.features();
        let dense = spec
            .hidden
            .iter()
            .map(|&h| {
                let d = Dense::new(offset, inputs, h);
                inputs = h;
                d
            })
            .collect();
        Self { conv_w, conv_b, dense }
    }

    fn width(&self) -> usize {
        self.dense.last().map_or(0, |d| d.outputs)
    }
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    actor: TrunkLayout,
    mean: Dense,
    log_std: usize,
    critic: TrunkLayout,
    value: Dense,
    total: usize,
}

impl Layout {
    pub fn new(spec: &NetworkSpec) -> Self {
        let mut offset = 0;
        let actor = TrunkLayout::new(&mut offset, spec);
        let mean = Dense::new(&mut offset, actor.width(), spec.action_dim);
        let log_std = offset;
        offset += spec.action_dim;
        let critic = TrunkLayout::new(&mut offset, spec);
        let value = Dense::new(&mut offset, critic.width(), 1);
        Self {
            actor,
            mean,
            log_std,
            critic,
            value,
            total: offset,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Range of the critic head weights and bias.
    pub fn value_head(&self) -> std::ops::Range<usize> {
        self.value.w..self.value.b + 1
    }

    pub fn log_std(&self) -> std::ops::Range<usize> {
        self.log_std..self.log_std + self.mean.outputs
    }
}

/// Post-activation values of one trunk, kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct TrunkCache {
    conv: Vec<f64>,
    layers: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    input: Vec<f64>,
    actor: TrunkCache,
    critic: TrunkCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// Gradient of a scalar loss with respect to the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrad {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

impl OutputGrad {
    pub fn zeros(action_dim: usize) -> Self {
        Self {
            mean: vec![0.0; action_dim],
            log_std: vec![0.0; action_dim],
            value: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkData {
    spec: NetworkSpec,
    params: Vec<f64>,
}

/// Separate actor and critic trunks of identical shape, a linear Gaussian
/// mean head with state-independent log standard deviations, and a linear
/// value head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkData", into = "NetworkData")]
pub struct Network {
    spec: NetworkSpec,
    layout: Layout,
    pub params: Vec<f64>,
}

impl TryFrom<NetworkData> for Network {
    type Error = Error;

    fn try_from(d: NetworkData) -> Result<Self> {
        Network::from_params(d.spec, d.params)
    }
}

impl From<Network> for NetworkData {
    fn from(n: Network) -> Self {
        NetworkData {
            spec: n.spec,
            params: n.params,
        }
    }
}

impl Network {
    /// All parameters zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        let params = vec![0.0; layout.total];
        Ok(Self { spec, layout, params })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape {
                what: "network parameters",
                expected: net.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        net.params = params;
        Ok(net)
    }

    /// Orthogonal weights (gain √2 in the trunks, 0.01 on the policy mean,
    /// 1 on the value head), zero biases and log standard deviations at
    /// `spec.initial_log_std`.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let l = net.layout.clone();
        let h = net.spec.history;
        let f = net.spec.filters;
        for trunk in [&l.actor, &l.critic] {
            orthogonal(&mut net.params[trunk.conv_w..trunk.conv_w + f * h], f, h, 2f64.sqrt(), rng);
            for d in &trunk.dense {
                orthogonal(&mut net.params[d.w..d.b], d.outputs, d.inputs, 2f64.sqrt(), rng);
            }
        }
        orthogonal(&mut net.params[l.mean.w..l.mean.b], l.mean.outputs, l.mean.inputs, 0.01, rng);
        orthogonal(&mut net.params[l.value.w..l.value.b], 1, l.value.inputs, 1.0, rng);
        let s0 = net.spec.initial_log_std;
        net.params[l.log_std()].fill(s0);
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.spec.input_len() {
            return Err(Error::Shape {
                what: "observation",
                expected: self.spec.input_len(),
                got: obs.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, obs: &[f64]) -> Result<PolicyOutput> {
        let mut cache = ForwardCache::default();
        self.forward_cached(obs, &mut cache)
    }

    /// Forward pass that records the activations needed by [`backward`](Self::backward).
    pub fn forward_cached(&self, obs: &[f64], cache: &mut ForwardCache) -> Result<PolicyOutput> {
        self.check_input(obs)?;
        cache.input.clear();
        cache.input.extend_from_slice(obs);
        let p = &self.params;
        let l = &self.layout;
        self.trunk_forward(&l.actor, obs, &mut cache.actor);
        self.trunk_forward(&l.critic, obs, &mut cache.critic);
        let mut mean = vec![0.0; l.mean.outputs];
        linear(p, &l.mean, last(&cache.actor), &mut mean);
        let mut value = [0.0];
        linear(p, &l.value, last(&cache.critic), &mut value);
        Ok(PolicyOutput {
            mean,
            log_std: self.log_std(),
            value: value[0],
        })
    }

    /// Policy mean only, for deployment.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_input(obs)?;
        let mut cache = TrunkCache::default();
        self.trunk_forward(&self.layout.actor, obs, &mut cache);
        let mut mean = vec![0.0; self.layout.mean.outputs];
        linear(&self.params, &self.layout.mean, last(&cache), &mut mean);
        Ok(mean)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        self.check_input(obs)?;
        let mut cache = TrunkCache::default();
        self.trunk_forward(&self.layout.critic, obs, &mut cache);
        let mut value = [0.0];
        linear(&self.params, &self.layout.value, last(&cache), &mut value);
        Ok(value[0])
    }

    /// Log standard deviations clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn log_std(&self) -> Vec<f64> {
        self.params[self.layout.log_std()]
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect()
    }

    fn trunk_forward(&self, t: &TrunkLayout, obs: &[f64], cache: &mut TrunkCache) {
        let p = &self.params;
        let (h, c, f) = (self.spec.history, self.spec.components, self.spec.filters);
        cache.conv.resize(f * c, 0.0);
        for fi in 0..f {
            let w = &p[t.conv_w + fi * h..t.conv_w + (fi + 1) * h];
            let b = p[t.conv_b + fi];
            for ci in 0..c {
                let mut z = b;
                for (k, wk) in w.iter().enumerate() {
                    z += wk * obs[k * c + ci];
                }
                cache.conv[fi * c + ci] = z.tanh();
            }
        }
        cache.layers.resize_with(t.dense.len(), Vec::new);
        for (i, d) in t.dense.iter().enumerate() {
            let (done, rest) = cache.layers.split_at_mut(i);
            let input = if i == 0 { &cache.conv } else { &done[i - 1] };
            let out = &mut rest[0];
            out.resize(d.outputs, 0.0);
            linear(p, d, input, out);
            for v in out.iter_mut() {
                *v = v.tanh();
            }
        }
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// gradient with respect to this sample's outputs is `dout`.
    pub fn backward(&self, cache: &ForwardCache, dout: &OutputGrad, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let l = &self.layout;
        let mut dh = vec![0.0; l.mean.inputs];
        linear_backward(&self.params, &l.mean, last(&cache.actor), &dout.mean, grad, &mut dh);
        self.trunk_backward(&l.actor, &cache.input, &cache.actor, dh, grad);

        for (i, (g, raw)) in dout.log_std.iter().zip(&self.params[l.log_std()]).enumerate() {
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(raw) {
                grad[l.log_std + i] += g;
            }
        }

        let mut dh = vec![0.0; l.value.inputs];
        linear_backward(&self.params, &l.value, last(&cache.critic), &[dout.value], grad, &mut dh);
        self.trunk_backward(&l.critic, &cache.input, &cache.critic, dh, grad);
    }

    fn trunk_backward(&self, t: &TrunkLayout, input: &[f64], cache: &TrunkCache, mut dh: Vec<f64>, grad: &mut [f64]) {
        let p = &self.params;
        for (i, d) in t.dense.iter().enumerate().rev() {
            let out = &cache.layers[i];
            for (g, y) in dh.iter_mut().zip(out) {
                *g *= 1.0 - y * y;
            }
            let x = if i == 0 { &cache.conv } else { &cache.layers[i - 1] };
            let mut dx = vec![0.0; d.inputs];
            linear_backward(p, d, x, &dh, grad, &mut dx);
            dh = dx;
        }
        let (h, c, f) = (self.spec.history, self.spec.components, self.spec.filters);
        for fi in 0..f {
            let mut db = 0.0;
            for ci in 0..c {
                let y = cache.conv[fi * c + ci];
                let dz = dh[fi * c + ci] * (1.0 - y * y);
                db += dz;
                for k in 0..h {
                    grad[t.conv_w + fi * h + k] += dz * input[k * c + ci];
                }
            }
            grad[t.conv_b + fi] += db;
        }
    }
}

fn last(cache: &TrunkCache) -> &[f64] {
    cache.layers.last().map_or(&cache.conv, |v| v)
}

fn linear(p: &[f64], d: &Dense, x: &[f64], out: &mut [f64]) {
    for (o, y) in out.iter_mut().enumerate() {
        let row = &p[d.w + o * d.inputs..d.w + (o + 1) * d.inputs];
        *y = p[d.b + o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
}

/// Adds the weight and bias gradients of `y = W x + b` for output gradient
/// `dy` and writes `Wᵀ dy` into `dx`.
fn linear_backward(p: &[f64], d: &Dense, x: &[f64], dy: &[f64], grad: &mut [f64], dx: &mut [f64]) {
    dx.iter_mut().for_each(|v| *v = 0.0);
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let base = d.w + o * d.inputs;
        for i in 0..d.inputs {
            grad[base + i] += g * x[i];
            dx[i] += g * p[base + i];
        }
        grad[d.b + o] += g;
    }
}

/// Fills `out` (row-major `rows × cols`) with a scaled matrix whose rows or
/// columns, whichever are fewer, are orthonormal.
pub fn orthogonal<R: Rng + ?Sized>(out: &mut [f64], rows: usize, cols: usize, gain: f64, rng: &mut R) {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            out[i * cols + j] = gain * v;
        }
    }
}

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Log density of a diagonal Gaussian.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - HALF_LOG_2PI
        })
        .sum()
}

/// Gradients of [`gaussian_log_prob`] with respect to the mean and the log
/// standard deviations.
pub fn gaussian_log_prob_grad(mean: &[f64], log_std: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut dm = Vec::with_capacity(mean.len());
    let mut ds = Vec::with_capacity(mean.len());
    for ((m, s), a) in mean.iter().zip(log_std).zip(action) {
        let sigma = s.exp();
        let z = (a - m) / sigma;
        dm.push(z / sigma);
        ds.push(z * z - 1.0);
    }
    (dm, ds)
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 + HALF_LOG_2PI).sum()
}

pub fn gaussian_sample<R: Rng + ?Sized>(mean: &[f64], log_std: &[f64], rng: &mut R) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Scales `grad` in place so its Euclidean norm is at most `max_norm` and
/// returns the norm before scaling.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let t = self.t as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
