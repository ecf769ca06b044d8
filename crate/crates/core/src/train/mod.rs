//! Policy-gradient training with sampled preference weights and a greedy rollout baseline.

mod baseline;
mod run;

pub use baseline::{baseline_update, paired_t_test, BaselineState, EpochStats};
pub use run::{read_log, train, write_log, CheckpointMeta, EpochRecord, TrainOutcome, TrainRun, BASELINE_FILE, CHECKPOINT_FILE, LOG_FILE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{estimate_bounds, rollout, DecodeMode, EpisodeResult, MdpState, NormalizationBounds, WeightVector};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Gradients, NodeId, NormMode, ParamId, Tape, Tensor};
use crate::policy::{DecoderSession, PolicyConfig, PolicyNet};
use crate::scalar::Scalar;
use crate::vrptw::Instance;

/// How preference weights are chosen for each training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Dirichlet draws on the simplex.
    RandomSimplex,
    /// A single preference, i.e. an ordinary single-objective policy.
    Fixed(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub customer_count: usize,
    pub weight_mode: WeightMode,
    pub dirichlet_alpha: (f64, f64),
    pub seed: u64,
    pub significance: f64,
    /// Instances in the end-of-epoch greedy comparison against the baseline.
    pub eval_size: usize,
    pub policy: PolicyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 64,
            batches_per_epoch: 100,
            lr: 1e-4,
            lr_decay: 1e-6,
            customer_count: 20,
            weight_mode: WeightMode::RandomSimplex,
            dirichlet_alpha: (1.0, 1.0),
            seed: 0,
            significance: 0.05,
            eval_size: 64,
            policy: PolicyConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.batches_per_epoch < 1 {
            return bad("batches_per_epoch must be at least 1");
        }
        if self.eval_size < 2 {
            return bad("eval_size must be at least 2");
        }
        if self.customer_count < 1 {
            return bad("customer_count must be at least 1");
        }
        if !(self.lr > 0.0) || !(self.lr_decay >= 0.0) {
            return bad("lr must be positive and lr_decay non-negative");
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return bad("significance must lie in (0, 1)");
        }
        if !(self.dirichlet_alpha.0 > 0.0 && self.dirichlet_alpha.1 > 0.0) {
            return bad("dirichlet_alpha entries must be positive");
        }
        if let WeightMode::Fixed(w1, w2) = self.weight_mode {
            WeightVector::<f64>::new(w1, w2)?;
        }
        self.policy.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, decay: self.lr_decay, ..AdamConfig::default() }
    }
}

/// Draws a preference vector.
pub fn sample_weights<S: Scalar, R: Rng + ?Sized>(mode: WeightMode, alpha: (f64, f64), rng: &mut R) -> Result<WeightVector<S>> {
    match mode {
        WeightMode::Fixed(w1, w2) => WeightVector::new(S::of(w1), S::of(w2)),
        WeightMode::RandomSimplex => {
            let dist = Dirichlet::new(&[alpha.0, alpha.1]).map_err(|e| Error::Config(format!("dirichlet: {e}")))?;
            let w1 = dist.sample(rng)[0].clamp(0.0, 1.0);
            WeightVector::from_cost_weight(S::of(w1))
        }
    }
}

/// One training problem: an instance, its preference and its cost bounds.
#[derive(Debug, Clone)]
pub struct Task<S> {
    pub instance: Instance<S>,
    pub weights: WeightVector<S>,
    pub bounds: NormalizationBounds<S>,
}

impl<S: Scalar> Task<S> {
    pub fn new(instance: Instance<S>, weights: WeightVector<S>) -> Result<Self> {
        let bounds = estimate_bounds(&instance)?;
        Ok(Task { instance, weights, bounds })
    }
}

/// Result of a differentiated pass over a batch.
#[derive(Debug, Clone)]
pub struct BatchPass<S, T> {
    pub outputs: Vec<T>,
    pub grads: Gradients<S>,
    pub stat_updates: Vec<(ParamId, Tensor<S>)>,
    /// Combined ReLU activity fingerprint of every tape in the pass.
    pub region: u64,
}

/// Encodes all instances on one tape, runs `element` on a gradient-tracking decoder for
/// each of them in parallel and back-propagates the returned `(node, seed)` pairs
/// through decoder and encoder. Gradients are summed in batch order.
pub fn batch_pass<S, T, F>(net: &PolicyNet<S>, instances: &[&Instance<S>], mode: NormMode, element: F) -> Result<BatchPass<S, T>>
where
    S: Scalar,
    T: Send,
    F: Fn(usize, &mut DecoderSession<'_, S>) -> Result<(T, Option<(NodeId, S)>)> + Sync,
{
    let mut enc = Tape::new(net.params());
    let h = net.encode(&mut enc, instances, mode)?;
    let all = enc.value(h);
    let (n, d) = (instances[0].vertex_count(), all.cols());
    let per: Vec<_> = (0..instances.len())
        .into_par_iter()
        .map(|i| {
            let emb = Tensor::matrix(n, d, all.data()[i * n * d..(i + 1) * n * d].to_vec())?;
            let mut session = net.session(instances[i], emb, true)?;
            let (out, seed) = element(i, &mut session)?;
            let (grads, emb_grad) = match seed {
                Some((node, s)) => session.backward(node, s)?,
                None => (Gradients::new(net.params().len()), None),
            };
            Ok((out, grads, emb_grad, session.tape().region()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grads = Gradients::new(net.params().len());
    let mut seed = Tensor::zeros(all.shape());
    let mut region = enc.region();
    let mut outputs = Vec::with_capacity(per.len());
    for (i, (out, g, emb_grad, r)) in per.into_iter().enumerate() {
        grads.merge(&g);
        if let Some(e) = emb_grad {
            seed.data_mut()[i * n * d..(i + 1) * n * d].copy_from_slice(e.data());
        }
        region = region.rotate_left(7) ^ r;
        outputs.push(out);
    }
    grads.merge(&enc.backward(&[(h, seed)])?.params);
    Ok(BatchPass { outputs, grads, stat_updates: enc.take_stat_updates(), region })
}

/// Loss `-(1/B) Σ advantage_i · log p(actions_i)` for fixed action sequences, with its
/// gradient. Used to check the training gradient against finite differences.
pub fn replay_loss<S: Scalar>(
    net: &PolicyNet<S>,
    tasks: &[Task<S>],
    episodes: &[(Vec<usize>, S)],
    mode: NormMode,
) -> Result<(S, BatchPass<S, S>)> {
    let instances: Vec<&Instance<S>> = tasks.iter().map(|t| &t.instance).collect();
    let scale = S::one() / S::of_usize(tasks.len());
    let pass = batch_pass(net, &instances, mode, |i, session| {
        let (actions, advantage) = &episodes[i];
        let task = &tasks[i];
        let mut state = MdpState::reset(&task.instance, task.weights);
        for &a in &actions[1..] {
            let mask = state.mask(&task.instance);
            session.log_probs(&state, &mask)?;
            state.apply(&task.instance, a)?;
        }
        let lp = session.episode_log_prob(actions)?;
        let value = session.tape().value(lp).data()[0];
        let w = -*advantage * scale;
        Ok((w * value, Some((lp, w))))
    })?;
    let loss = pass.outputs.iter().copied().sum();
    Ok((loss, pass))
}

/// Summary of one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub rewards: Vec<f64>,
    pub baseline_rewards: Vec<f64>,
    pub successes: usize,
    pub loss: f64,
}

impl BatchStats {
    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len().max(1) as f64
    }
}

/// One policy-gradient step: a sampled rollout under the policy and a greedy rollout
/// under the baseline for every task, then Adam on the mean advantage-weighted
/// log-likelihood gradient. Batch-norm statistics come from the batch.
pub fn train_batch<S: Scalar>(
    policy: &mut PolicyNet<S>,
    baseline: &PolicyNet<S>,
    tasks: &[Task<S>],
    adam: &AdamConfig,
    seed: u64,
) -> Result<BatchStats> {
    if tasks.len() < 2 {
        return Err(Error::Config("a training batch needs at least two tasks".into()));
    }
    let baseline_rewards = tasks
        .par_iter()
        .map(|t| Ok(baseline.greedy(&t.instance, t.weights, &t.bounds)?.reward))
        .collect::<Result<Vec<S>>>()?;
    let instances: Vec<&Instance<S>> = tasks.iter().map(|t| &t.instance).collect();
    let scale = S::one() / S::of_usize(tasks.len());
    let pass = batch_pass(policy, &instances, NormMode::Train, |i, session| {
        let task = &tasks[i];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let ep: EpisodeResult<S> = rollout(session, &task.instance, task.weights, &task.bounds, DecodeMode::Sample, &mut rng)?;
        let lp = session.episode_log_prob(&ep.actions)?;
        let advantage = ep.reward - baseline_rewards[i];
        let w = -advantage * scale;
        Ok(((ep.reward, ep.success, w * session.tape().value(lp).data()[0]), Some((lp, w))))
    })?;
    let loss: f64 = pass.outputs.iter().map(|o| o.2.as_f64()).sum();
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("batch loss {loss}")));
    }
    let store = policy.params_mut();
    store.accumulate(&pass.grads);
    store.adam_step(adam)?;
    store.apply_updates(pass.stat_updates);
    if let Some(id) = store.ids().find(|&id| !store.value(id).all_finite()) {
        return Err(Error::NonFinite(format!("parameter `{}` after update", store.name(id))));
    }
    Ok(BatchStats {
        rewards: pass.outputs.iter().map(|o| o.0.as_f64()).collect(),
        baseline_rewards: baseline_rewards.iter().map(|r| r.as_f64()).collect(),
        successes: pass.outputs.iter().filter(|o| o.1).count(),
        loss,
    })
}

/// Greedy rollouts of `net` and `baseline` on the same tasks; pairs of rewards.
pub fn greedy_comparison<S: Scalar>(net: &PolicyNet<S>, baseline: &PolicyNet<S>, tasks: &[Task<S>]) -> Result<EpochStats> {
    let pairs = tasks
        .par_iter()
        .map(|t| {
            let p = net.greedy(&t.instance, t.weights, &t.bounds)?.reward.as_f64();
            let b = baseline.greedy(&t.instance, t.weights, &t.bounds)?.reward.as_f64();
            Ok((p, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stats = EpochStats::default();
    for (p, b) in pairs {
        stats.push(p, b);
    }
    Ok(stats)
}

/// Greedy solution for one grid preference.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<S> {
    pub weights: WeightVector<S>,
    pub episode: EpisodeResult<S>,
}

/// Preference grid `(1, 0), (1 - δ, δ), ..., (0, 1)`.
pub fn weight_grid<S: Scalar>(interval: f64) -> Result<Vec<WeightVector<S>>> {
    if !(interval > 0.0 && interval <= 1.0) {
        return Err(Error::Config(format!("grid interval {interval} must lie in (0, 1]")));
    }
    let steps = (1.0 / interval).round() as usize;
    (0..=steps)
        .map(|k| WeightVector::from_cost_weight(S::of((steps - k) as f64 / steps as f64)))
        .collect()
}

/// Greedy decoding of `instance` at every grid preference.
pub fn weight_sweep<S: Scalar>(net: &PolicyNet<S>, instance: &Instance<S>, interval: f64) -> Result<Vec<SweepPoint<S>>> {
    let bounds = estimate_bounds(instance)?;
    let emb = net.encode_instance(instance)?;
    weight_grid(interval)?
        .into_par_iter()
        .map(|weights| {
            let mut session = net.session(instance, emb.clone(), false)?;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let episode = rollout(&mut session, instance, weights, &bounds, DecodeMode::Greedy, &mut rng)?;
            Ok(SweepPoint { weights, episode })
        })
        .collect()
}
