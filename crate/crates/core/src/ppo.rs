//! Proximal policy optimization: synchronous rollouts from parallel actors,
//! generalized advantage estimation and minibatch Adam on the clipped
//! surrogate objective.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{ObsNormalizer, RunningStats, UavEnv, ACTION_LEN};
use crate::error::{Error, Result};
use crate::neuralnet::{
    clip_grad_norm, gaussian_entropy, gaussian_log_prob, gaussian_log_prob_grad, gaussian_sample, Adam,
    ForwardCache, Network, NetworkSpec, OutputGrad,
};
use crate::rng::{child_seed, substream};

/// Episodic environment as seen by the trainer.
pub trait RlEnv: Send {
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Next observation, reward and whether the episode ended.
    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool)>;
    fn set_difficulty(&mut self, _difficulty: f64) {}
}

impl RlEnv for UavEnv {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        UavEnv::reset(self, seed).to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
        let a: [f64; ACTION_LEN] = action.try_into().map_err(|_| Error::Shape {
            what: "action",
            expected: ACTION_LEN,
            got: action.len(),
        })?;
        let r = UavEnv::step(self, &a)?;
        Ok((self.observation().to_vec(), r.reward, r.done()))
    }

    fn set_difficulty(&mut self, difficulty: f64) {
        UavEnv::set_difficulty(self, difficulty);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub enabled: bool,
    pub initial_difficulty: f64,
    pub increment: f64,
    /// Completed episodes averaged, and required between promotions.
    pub window: usize,
    /// Promote when the windowed mean of per-step episode reward reaches this.
    pub reward_threshold: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            initial_difficulty: 0.0,
            increment: 0.1,
            window: 100,
            reward_threshold: -0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub actors: usize,
    pub steps_per_actor: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    /// Anneal the learning rate linearly to zero over the budget.
    pub lr_decay: bool,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub total_steps: u64,
    pub normalize_observations: bool,
    /// Divide rewards by the running std of the discounted return.
    pub normalize_rewards: bool,
    pub reward_clip: f64,
    pub network: NetworkSpec,
    pub curriculum: CurriculumConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            actors: 6,
            steps_per_actor: 128,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatches: 4,
            learning_rate: 2.5e-4,
            lr_decay: true,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            total_steps: 2_000_000,
            normalize_observations: true,
            normalize_rewards: true,
            reward_clip: 10.0,
            network: NetworkSpec::default(),
            curriculum: CurriculumConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.actors == 0 || self.steps_per_actor == 0 || self.epochs == 0 || self.minibatches == 0 {
            return bad("actors, steps_per_actor, epochs and minibatches must be positive");
        }
        if self.minibatches > self.batch_size() {
            return bad("more minibatches than samples per batch");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0 && self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        let positive = [self.learning_rate, self.max_grad_norm, self.reward_clip];
        if positive.iter().any(|v| !(*v > 0.0)) || self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return bad("learning rate, gradient norm and reward clip must be positive, coefficients non-negative");
        }
        let c = &self.curriculum;
        if !(0.0..=1.0).contains(&c.initial_difficulty) || c.increment < 0.0 || c.window == 0 {
            return bad("curriculum difficulty must lie in [0, 1], with a non-negative increment and a positive window");
        }
        self.network.validate()
    }

    pub fn batch_size(&self) -> usize {
        self.actors * self.steps_per_actor
    }

    /// Updates needed to collect at least `total_steps` transitions.
    pub fn num_updates(&self) -> usize {
        self.total_steps.div_ceil(self.batch_size() as u64) as usize
    }
}

/// GAE over one actor's sequence. `dones[t]` marks that the episode ended
/// with step `t`, so `values[t + 1]` (or `last_value`) belongs to a new one.
/// Returns advantages and value targets.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Rescales to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.len() < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-12;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

/// Per-sample clipped surrogate `min(r·Â, clip(r, 1−ε, 1+ε)·Â)` and its
/// derivative with respect to `r`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Samples dropped because their probability ratio was not finite.
    pub excluded: usize,
    pub samples: usize,
}

impl LossDiagnostics {
    pub fn total(&self, value_coef: f64, entropy_coef: f64) -> f64 {
        self.policy_loss + value_coef * self.value_loss - entropy_coef * self.entropy
    }

    fn add(&mut self, o: &LossDiagnostics) {
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.approx_kl += o.approx_kl;
        self.clip_fraction += o.clip_fraction;
        self.excluded += o.excluded;
        self.samples += o.samples;
    }

    fn into_means(mut self) -> Self {
        let n = self.samples.max(1) as f64;
        self.policy_loss /= n;
        self.value_loss /= n;
        self.entropy /= n;
        self.approx_kl /= n;
        self.clip_fraction /= n;
        self
    }
}

/// One transition set in flat `actor * T + t` order.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the observation following each actor's last step.
    pub bootstrap: Vec<f64>,
}

/// One transition as seen by the loss.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub obs: &'a [f64],
    pub action: &'a [f64],
    /// Log-probability of `action` under the policy that collected it.
    pub old_log_prob: f64,
    pub advantage: f64,
    /// Value target.
    pub ret: f64,
}

/// Mean clipped-surrogate loss over `samples` with its diagnostics, and the
/// parameter gradient of `diag.total(value_coef, entropy_coef)`.
pub fn surrogate_loss(
    net: &Network,
    samples: &[Sample],
    clip: f64,
    value_coef: f64,
    entropy_coef: f64,
) -> (LossDiagnostics, Vec<f64>) {
    let mut grad = vec![0.0; net.parameter_count()];
    let d = loss_and_grad(net, samples, clip, value_coef, entropy_coef, 1.0, &mut grad);
    let n = d.samples.max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (d.into_means(), grad)
}

/// Clipped-surrogate loss and parameter gradient, both averaged over the
/// included samples. `scale` is the divisor for the average.
fn loss_and_grad(
    net: &Network,
    samples: &[Sample],
    clip: f64,
    value_coef: f64,
    entropy_coef: f64,
    scale: f64,
    grad: &mut [f64],
) -> LossDiagnostics {
    let mut d = LossDiagnostics::default();
    let mut cache = ForwardCache::default();
    let mut dout = OutputGrad::zeros(net.spec().action_dim);
    for s in samples {
        let out = match net.forward_cached(s.obs, &mut cache) {
            Ok(o) => o,
            Err(_) => {
                d.excluded += 1;
                continue;
            }
        };
        let log_prob = gaussian_log_prob(&out.mean, &out.log_std, s.action);
        let ratio = (log_prob - s.old_log_prob).exp();
        if !ratio.is_finite() || !out.value.is_finite() {
            d.excluded += 1;
            continue;
        }
        let (objective, d_obj_d_ratio) = clipped_objective(ratio, s.advantage, clip);
        let value_err = out.value - s.ret;
        d.policy_loss -= objective;
        d.value_loss += value_err * value_err;
        d.entropy += gaussian_entropy(&out.log_std);
        d.approx_kl += 0.5 * (log_prob - s.old_log_prob).powi(2);
        if (ratio - 1.0).abs() > clip {
            d.clip_fraction += 1.0;
        }
        d.samples += 1;

        // dL/dlogπ = −(d objective/dr)·r
        let d_logp = -d_obj_d_ratio * ratio / scale;
        let (dm, ds) = gaussian_log_prob_grad(&out.mean, &out.log_std, s.action);
        for j in 0..dm.len() {
            dout.mean[j] = d_logp * dm[j];
            dout.log_std[j] = d_logp * ds[j] - entropy_coef / scale;
        }
        dout.value = 2.0 * value_coef * value_err / scale;
        net.backward(&cache, &dout, grad);
    }
    d
}

/// Minibatch loss and gradient, split into fixed chunks evaluated in
/// parallel and summed in chunk order, so the result does not depend on
/// the thread count.
fn minibatch_grad(net: &Network, samples: &[Sample], cfg: &PpoConfig) -> (Vec<f64>, LossDiagnostics) {
    const CHUNK: usize = 64;
    let scale = samples.len() as f64;
    let parts: Vec<(Vec<f64>, LossDiagnostics)> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; net.parameter_count()];
            let d = loss_and_grad(net, chunk, cfg.clip, cfg.value_coef, cfg.entropy_coef, scale, &mut g);
            (g, d)
        })
        .collect();
    let mut grad = vec![0.0; net.parameter_count()];
    let mut diag = LossDiagnostics::default();
    for (g, d) in &parts {
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        diag.add(d);
    }
    (grad, diag)
}

struct Actor<E> {
    env: E,
    index: usize,
    rng: ChaCha8Rng,
    raw_obs: Vec<f64>,
    episodes: u64,
    episode_reward: f64,
    episode_len: usize,
}

/// Per-actor output of one synchronous environment step.
struct StepOut {
    action: Vec<f64>,
    log_prob: f64,
    value: f64,
    reward: f64,
    done: bool,
    finished: Option<EpisodeStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub reward: f64,
    pub length: usize,
    pub difficulty: f64,
}

/// Row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub update: usize,
    pub steps: u64,
    pub episodes: u64,
    pub difficulty: f64,
    /// Windowed mean of undiscounted episode reward.
    pub mean_episode_reward: f64,
    pub mean_episode_length: f64,
    pub learning_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub excluded: usize,
}

/// Saved policy: network, frozen observation statistics and run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub network: Network,
    pub obs_normalizer: Option<ObsNormalizer>,
    pub seed: u64,
    pub steps: u64,
    pub updates: usize,
    pub difficulty: f64,
    pub config_hash: String,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        Ok(ck)
    }

    /// Normalized observation for the frozen statistics.
    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        match &self.obs_normalizer {
            Some(n) => {
                let mut out = vec![0.0; raw.len()];
                n.apply(raw, &mut out);
                out
            }
            None => raw.to_vec(),
        }
    }
}

pub struct Trainer<E: RlEnv> {
    cfg: PpoConfig,
    seed: u64,
    config_hash: String,
    net: Network,
    adam: Adam,
    obs_norm: ObsNormalizer,
    ret_stats: RunningStats,
    returns: Vec<f64>,
    actors: Vec<Actor<E>>,
    shuffle_rng: ChaCha8Rng,
    update: usize,
    steps: u64,
    episodes: u64,
    difficulty: f64,
    window: VecDeque<EpisodeStats>,
    since_promotion: usize,
}

impl<E: RlEnv> Trainer<E> {
    /// `make_env(i)` builds actor `i`'s environment. `config_hash` is
    /// recorded in checkpoints.
    pub fn new(
        cfg: PpoConfig,
        seed: u64,
        config_hash: String,
        mut make_env: impl FnMut(usize) -> Result<E>,
    ) -> Result<Self> {
        cfg.validate()?;
        let net = Network::new(cfg.network.clone(), &mut substream(seed, "network-init"))?;
        let input_len = cfg.network.input_len();
        let difficulty = if cfg.curriculum.enabled {
            cfg.curriculum.initial_difficulty
        } else {
            1.0
        };
        let mut actors = Vec::with_capacity(cfg.actors);
        for i in 0..cfg.actors {
            let mut env = make_env(i)?;
            env.set_difficulty(difficulty);
            let raw_obs = env.reset(episode_seed(seed, i, 0));
            if raw_obs.len() != input_len {
                return Err(Error::Shape {
                    what: "observation",
                    expected: input_len,
                    got: raw_obs.len(),
                });
            }
            actors.push(Actor {
                env,
                index: i,
                rng: substream(child_seed(seed, "actor", i as u64), "policy"),
                raw_obs,
                episodes: 0,
                episode_reward: 0.0,
                episode_len: 0,
            });
        }
        let mut obs_norm = ObsNormalizer::new(input_len);
        if cfg.normalize_observations {
            for a in &actors {
                obs_norm.stats.update(&a.raw_obs);
            }
        }
        Ok(Self {
            adam: Adam::new(net.parameter_count()),
            returns: vec![0.0; cfg.actors],
            shuffle_rng: substream(seed, "minibatch"),
            cfg,
            seed,
            config_hash,
            net,
            obs_norm,
            ret_stats: RunningStats::new(1),
            actors,
            update: 0,
            steps: 0,
            episodes: 0,
            difficulty,
            window: VecDeque::new(),
            since_promotion: 0,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> usize {
        self.update
    }

    pub fn difficulty(&self) -> f64 {
        self.difficulty
    }

    pub fn is_finished(&self) -> bool {
        self.update >= self.cfg.num_updates()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            network: self.net.clone(),
            obs_normalizer: self.cfg.normalize_observations.then(|| self.obs_norm.clone()),
            seed: self.seed,
            steps: self.steps,
            updates: self.update,
            difficulty: self.difficulty,
            config_hash: self.config_hash.clone(),
        }
    }

    fn normalized(&self, raw: &[f64]) -> Vec<f64> {
        if self.cfg.normalize_observations {
            let mut out = vec![0.0; raw.len()];
            self.obs_norm.apply(raw, &mut out);
            out
        } else {
            raw.to_vec()
        }
    }

    /// Collects `actors × steps_per_actor` transitions with the current
    /// policy. Actors step in parallel; normalizer updates and episode
    /// bookkeeping happen afterwards in actor order.
    pub fn collect(&mut self) -> Result<RolloutBatch> {
        let (n, t_len) = (self.cfg.actors, self.cfg.steps_per_actor);
        let mut obs = vec![Vec::new(); n * t_len];
        let mut actions = vec![Vec::new(); n * t_len];
        let mut log_probs = vec![0.0; n * t_len];
        let mut rewards = vec![0.0; n * t_len];
        let mut values = vec![0.0; n * t_len];
        let mut dones = vec![false; n * t_len];

        for t in 0..t_len {
            let inputs: Vec<Vec<f64>> = self.actors.iter().map(|a| self.normalized(&a.raw_obs)).collect();
            let net = &self.net;
            let seed = self.seed;
            let difficulty = self.difficulty;
            let outs: Vec<Result<StepOut>> = self
                .actors
                .par_iter_mut()
                .zip(inputs.par_iter())
                .map(|(actor, input)| actor_step(actor, net, input, seed, difficulty))
                .collect();
            for (i, out) in outs.into_iter().enumerate() {
                let out = out?;
                let k = i * t_len + t;
                obs[k] = inputs[i].clone();
                actions[k] = out.action;
                log_probs[k] = out.log_prob;
                values[k] = out.value;
                dones[k] = out.done;
                rewards[k] = self.scale_reward(i, out.reward, out.done);
                if let Some(ep) = out.finished {
                    self.record_episode(ep);
                }
            }
            if self.cfg.normalize_observations {
                for a in &self.actors {
                    self.obs_norm.stats.update(&a.raw_obs);
                }
            }
            self.steps += n as u64;
        }
        let bootstrap = self
            .actors
            .iter()
            .map(|a| self.net.value(&self.normalized(&a.raw_obs)))
            .collect::<Result<Vec<_>>>()?;
        self.apply_curriculum();
        Ok(RolloutBatch {
            observations: obs,
            actions,
            log_probs,
            rewards,
            values,
            dones,
            bootstrap,
        })
    }

    fn scale_reward(&mut self, actor: usize, reward: f64, done: bool) -> f64 {
        if !self.cfg.normalize_rewards {
            return reward;
        }
        let ret = self.returns[actor] * self.cfg.gamma + reward;
        self.ret_stats.update(&[ret]);
        self.returns[actor] = if done { 0.0 } else { ret };
        let std = (self.ret_stats.variance(0) + 1e-8).sqrt();
        (reward / std).clamp(-self.cfg.reward_clip, self.cfg.reward_clip)
    }

    fn record_episode(&mut self, ep: EpisodeStats) {
        self.episodes += 1;
        self.since_promotion += 1;
        self.window.push_back(ep);
        while self.window.len() > self.cfg.curriculum.window {
            self.window.pop_front();
        }
    }

    fn apply_curriculum(&mut self) {
        let c = &self.cfg.curriculum;
        if !c.enabled || self.difficulty >= 1.0 || self.since_promotion < c.window {
            return;
        }
        let per_step = self
            .window
            .iter()
            .filter(|e| e.difficulty == self.difficulty)
            .map(|e| e.reward / e.length.max(1) as f64)
            .collect::<Vec<_>>();
        if per_step.len() < c.window {
            return;
        }
        let mean = per_step.iter().sum::<f64>() / per_step.len() as f64;
        if mean >= c.reward_threshold {
            self.difficulty = (self.difficulty + c.increment).min(1.0);
            self.since_promotion = 0;
            log::info!("curriculum difficulty raised to {:.2}", self.difficulty);
            for a in &mut self.actors {
                a.env.set_difficulty(self.difficulty);
            }
        }
    }

    fn learning_rate(&self) -> f64 {
        if self.cfg.lr_decay {
            let frac = 1.0 - self.update as f64 / self.cfg.num_updates().max(1) as f64;
            self.cfg.learning_rate * frac
        } else {
            self.cfg.learning_rate
        }
    }

    /// Advantages, returns and the epochs of minibatch updates for `batch`.
    pub fn optimize(&mut self, batch: &RolloutBatch) -> Result<(LossDiagnostics, f64)> {
        let (n, t_len) = (self.cfg.actors, self.cfg.steps_per_actor);
        let mut adv = Vec::with_capacity(n * t_len);
        let mut ret = Vec::with_capacity(n * t_len);
        for i in 0..n {
            let r = i * t_len..(i + 1) * t_len;
            let (a, g) = compute_gae(
                &batch.rewards[r.clone()],
                &batch.values[r.clone()],
                &batch.dones[r],
                batch.bootstrap[i],
                self.cfg.gamma,
                self.cfg.lambda,
            );
            adv.extend(a);
            ret.extend(g);
        }
        normalize_advantages(&mut adv);

        let lr = self.learning_rate();
        let mut idx: Vec<usize> = (0..n * t_len).collect();
        let mb_size = idx.len() / self.cfg.minibatches;
        let mut diag = LossDiagnostics::default();
        let mut grad_norm = 0.0;
        let mut rounds = 0;
        for _ in 0..self.cfg.epochs {
            idx.shuffle(&mut self.shuffle_rng);
            for mb in idx.chunks(mb_size).take(self.cfg.minibatches) {
                let samples: Vec<Sample> = mb
                    .iter()
                    .map(|&k| Sample {
                        obs: &batch.observations[k],
                        action: &batch.actions[k],
                        old_log_prob: batch.log_probs[k],
                        advantage: adv[k],
                        ret: ret[k],
                    })
                    .collect();
                let (mut grad, d) = minibatch_grad(&self.net, &samples, &self.cfg);
                if grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged {
                        update: self.update,
                        reason: "non-finite gradient".into(),
                    });
                }
                grad_norm += clip_grad_norm(&mut grad, self.cfg.max_grad_norm);
                let before = self.net.params.clone();
                self.adam.step(&mut self.net.params, &grad, lr);
                if self.net.params.iter().any(|p| !p.is_finite()) {
                    self.net.params = before;
                    return Err(Error::Diverged {
                        update: self.update,
                        reason: "non-finite parameters".into(),
                    });
                }
                diag.add(&d);
                rounds += 1;
            }
        }
        Ok((diag.into_means(), grad_norm / rounds.max(1) as f64))
    }

    /// One rollout plus optimization round.
    pub fn step(&mut self) -> Result<UpdateStats> {
        let lr = self.learning_rate();
        let batch = self.collect()?;
        let (d, grad_norm) = self.optimize(&batch)?;
        self.update += 1;
        let w = self.window.len().max(1) as f64;
        Ok(UpdateStats {
            update: self.update,
            steps: self.steps,
            episodes: self.episodes,
            difficulty: self.difficulty,
            mean_episode_reward: self.window.iter().map(|e| e.reward).sum::<f64>() / w,
            mean_episode_length: self.window.iter().map(|e| e.length as f64).sum::<f64>() / w,
            learning_rate: lr,
            policy_loss: d.policy_loss,
            value_loss: d.value_loss,
            entropy: d.entropy,
            approx_kl: d.approx_kl,
            clip_fraction: d.clip_fraction,
            grad_norm,
            excluded: d.excluded,
        })
    }
}

fn episode_seed(seed: u64, actor: usize, episode: u64) -> u64 {
    child_seed(child_seed(seed, "actor", actor as u64), "episode", episode)
}

fn actor_step<E: RlEnv>(
    actor: &mut Actor<E>,
    net: &Network,
    input: &[f64],
    seed: u64,
    difficulty: f64,
) -> Result<StepOut> {
    let out = net.forward(input)?;
    let action = gaussian_sample(&out.mean, &out.log_std, &mut actor.rng);
    let log_prob = gaussian_log_prob(&out.mean, &out.log_std, &action);
    let (next, reward, done) = actor.env.step(&action)?;
    actor.episode_reward += reward;
    actor.episode_len += 1;
    let mut finished = None;
    if done {
        finished = Some(EpisodeStats {
            reward: actor.episode_reward,
            length: actor.episode_len,
            difficulty,
        });
        actor.episodes += 1;
        actor.episode_reward = 0.0;
        actor.episode_len = 0;
        actor.raw_obs = actor.env.reset(episode_seed(seed, actor.index, actor.episodes));
    } else {
        actor.raw_obs = next;
    }
    Ok(StepOut {
        action,
        log_prob,
        value: out.value,
        reward,
        done,
        finished,
    })
}

/// Outcome of [`train`]: the final (or last good) checkpoint, the log, and
/// the reason training stopped early, if it did.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<UpdateStats>,
    pub aborted: Option<String>,
}

/// Runs the full budget. `on_update` sees every log row and may request a
/// checkpoint or stop early by returning an error.
pub fn train<E: RlEnv>(
    trainer: &mut Trainer<E>,
    mut on_update: impl FnMut(&Trainer<E>, &UpdateStats) -> Result<()>,
) -> Result<TrainingOutcome> {
    let mut log = Vec::new();
    let mut good = trainer.checkpoint();
    while !trainer.is_finished() {
        match trainer.step() {
            Ok(stats) => {
                on_update(trainer, &stats)?;
                log.push(stats);
                good = trainer.checkpoint();
            }
            Err(e @ Error::Diverged { .. }) => {
                log::error!("{e}");
                return Ok(TrainingOutcome {
                    checkpoint: good,
                    log,
                    aborted: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainingOutcome {
        checkpoint: good,
        log,
        aborted: None,
    })
}

#[derive(Serialize)]
struct LogRow<'a> {
    seed: u64,
    config_hash: &'a str,
    update: usize,
    steps: u64,
    episodes: u64,
    difficulty: f64,
    mean_episode_reward: f64,
    mean_episode_length: f64,
    learning_rate: f64,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    approx_kl: f64,
    clip_fraction: f64,
    grad_norm: f64,
    excluded: usize,
}

/// Training log as CSV, one row per update, each carrying the seed and
/// configuration hash.
pub fn write_training_log(path: impl AsRef<Path>, log: &[UpdateStats], seed: u64, config_hash: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for s in log {
        w.serialize(LogRow {
            seed,
            config_hash,
            update: s.update,
            steps: s.steps,
            episodes: s.episodes,
            difficulty: s.difficulty,
            mean_episode_reward: s.mean_episode_reward,
            mean_episode_length: s.mean_episode_length,
            learning_rate: s.learning_rate,
            policy_loss: s.policy_loss,
            value_loss: s.value_loss,
            entropy: s.entropy,
            approx_kl: s.approx_kl,
            clip_fraction: s.clip_fraction,
            grad_norm: s.grad_norm,
            excluded: s.excluded,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
