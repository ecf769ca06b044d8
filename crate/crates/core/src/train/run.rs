use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{baseline_update, greedy_comparison, sample_weights, train_batch, BaselineState, Task, TrainConfig};
use crate::error::{Error, Result};
use crate::io::{generate_instance, GeneratorConfig};
use crate::nn::{load_checkpoint, save_checkpoint};
use crate::policy::PolicyNet;
use crate::scalar::Scalar;

pub const CHECKPOINT_FILE: &str = "policy.ckpt";
pub const BASELINE_FILE: &str = "baseline.ckpt";
pub const LOG_FILE: &str = "train_log.jsonl";

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean reward of the sampled training episodes.
    pub mean_reward: f64,
    pub success_rate: f64,
    pub baseline_refreshed: bool,
    pub seconds: f64,
    /// Mean greedy reward of the policy on the epoch's comparison set.
    pub greedy_reward: f64,
    pub baseline_greedy_reward: f64,
    pub p_value: Option<f64>,
}

/// Sidecar metadata written next to every policy checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub epochs_completed: usize,
}

/// Where and how a training run is executed.
#[derive(Debug, Clone, Default)]
pub struct TrainRun {
    /// Directory for checkpoints and the log; nothing is written when `None`.
    pub dir: Option<PathBuf>,
    pub resume: bool,
    /// Writes zero wall-clock times so that output files are byte-identical across runs.
    pub reproducible: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub policy: PolicyNet<S>,
    pub baseline: PolicyNet<S>,
    pub log: Vec<EpochRecord>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn draw_tasks<S: Scalar>(config: &TrainConfig, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Task<S>>> {
    let draws = (0..count)
        .map(|_| Ok((rng.gen::<u64>(), sample_weights(config.weight_mode, config.dirichlet_alpha, rng)?)))
        .collect::<Result<Vec<_>>>()?;
    draws
        .into_par_iter()
        .map(|(seed, w)| Task::new(generate_instance(&GeneratorConfig::with_customers(config.customer_count, seed))?, w))
        .collect()
}

/// Trains a policy from scratch, or continues the run stored in `run.dir` when
/// `run.resume` is set and a checkpoint exists there.
pub fn train<S: Scalar>(config: &TrainConfig, run: &TrainRun) -> Result<TrainOutcome<S>> {
    config.validate()?;
    if let Some(dir) = &run.dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (mut policy, mut baseline, mut log) = match run.dir.as_deref().filter(|d| run.resume && d.join(CHECKPOINT_FILE).exists()) {
        Some(dir) => resume_state(config, dir)?,
        None => {
            let policy = PolicyNet::new(config.policy, config.seed)?;
            let baseline = BaselineState::new(&policy);
            (policy, baseline, Vec::new())
        }
    };
    let adam = config.adam();
    for epoch in log.len()..config.epochs {
        let started = Instant::now();
        let mut rng = epoch_rng(config.seed, epoch);
        let (mut reward_sum, mut successes, mut episodes) = (0.0, 0usize, 0usize);
        for _ in 0..config.batches_per_epoch {
            let tasks = draw_tasks::<S>(config, config.batch_size, &mut rng)?;
            let stats = train_batch(&mut policy, &baseline.net, &tasks, &adam, rng.gen())?;
            reward_sum += stats.rewards.iter().sum::<f64>();
            successes += stats.successes;
            episodes += stats.rewards.len();
        }
        let eval = draw_tasks::<S>(config, config.eval_size, &mut rng)?;
        let stats = greedy_comparison(&policy, &baseline.net, &eval)?;
        let (greedy_reward, baseline_greedy_reward) = (stats.mean_policy(), stats.mean_baseline());
        let refreshed = baseline_update(&policy, &mut baseline, stats, config.significance)?;
        let record = EpochRecord {
            epoch,
            mean_reward: reward_sum / episodes as f64,
            success_rate: successes as f64 / episodes as f64,
            baseline_refreshed: refreshed,
            seconds: if run.reproducible { 0.0 } else { started.elapsed().as_secs_f64() },
            greedy_reward,
            baseline_greedy_reward,
            p_value: baseline.last_p_value,
        };
        log::info!(
            "epoch {epoch}: reward {:.4} success {:.3} greedy {:.4} baseline {:.4} refreshed {refreshed}",
            record.mean_reward,
            record.success_rate,
            greedy_reward,
            baseline_greedy_reward
        );
        log.push(record);
        if let Some(dir) = &run.dir {
            let meta = CheckpointMeta { config: config.clone(), epochs_completed: log.len() };
            save_checkpoint(policy.params(), &meta, &dir.join(CHECKPOINT_FILE))?;
            save_checkpoint(baseline.params(), &meta, &dir.join(BASELINE_FILE))?;
            write_log(&log, &dir.join(LOG_FILE))?;
        }
    }
    Ok(TrainOutcome { policy, baseline: baseline.net, log })
}

type ResumeState<S> = (PolicyNet<S>, BaselineState<S>, Vec<EpochRecord>);

fn resume_state<S: Scalar>(config: &TrainConfig, dir: &Path) -> Result<ResumeState<S>> {
    let (params, meta): (_, CheckpointMeta) = load_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    let (base_params, _): (_, CheckpointMeta) = load_checkpoint(&dir.join(BASELINE_FILE))?;
    let same = TrainConfig { epochs: config.epochs, ..meta.config.clone() };
    if &same != config {
        return Err(Error::Config(format!("{} was written with a different training configuration", dir.display())));
    }
    let log = read_log(&dir.join(LOG_FILE))?;
    if log.len() != meta.epochs_completed {
        return Err(Error::Config(format!(
            "log has {} epochs but the checkpoint records {}",
            log.len(),
            meta.epochs_completed
        )));
    }
    let policy = PolicyNet::from_params(config.policy, params)?;
    let mut baseline = BaselineState::new(&policy);
    baseline.net = PolicyNet::from_params(config.policy, base_params)?;
    Ok((policy, baseline, log))
}

pub fn write_log(log: &[EpochRecord], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in log {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").expect("writing to a Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}
