//! The recurrent PPO training loop.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::env::config::EnvConfig;
use crate::env::observe::ENCODED_LEN;
use crate::env::state::ACTION_COUNT;
use crate::error::{Error, Result};
use crate::net::{checkpoint_save, make_prune_mask, AgentParams, NetConfig};
use crate::ppo::adam::{adam_step, clip_global_norm, AdamState};
use crate::ppo::gae::compute_gae;
use crate::ppo::loss::{normalize_advantages, ppo_loss_and_grads, LossWeights, Minibatch};
use crate::ppo::rollout::{collect_rollout, EnvDriver, RolloutBatch};
use crate::rng::RngStream;

/// Training hyperparameters. Paper-scale values (1024 envs, 3e9 steps)
/// remain valid configuration; the defaults are desk-scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub w_value: f64,
    pub w_entropy: f64,
    pub w_aux: f64,
    pub n_envs: usize,
    pub rollout_steps: usize,
    pub epochs: usize,
    pub minibatches: usize,
    /// Total environment steps to train for.
    pub total_steps: u64,
    pub grad_clip_norm: f64,
    /// PPO iteration at which magnitude pruning is applied (one-shot).
    pub prune_step: u64,
    pub target_sparsity: f64,
    pub aux_enabled: bool,
    /// When false the GRU is replaced by a feedforward pass-through.
    pub recurrent: bool,
    pub hidden_dim: usize,
    /// Iterations between checkpoints (the final state is always saved).
    pub checkpoint_interval: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2.5e-4,
            gamma: 0.99,
            gae_lambda: 0.8,
            clip_eps: 0.2,
            w_value: 0.5,
            w_entropy: 0.01,
            w_aux: 0.025,
            n_envs: 16,
            rollout_steps: 64,
            epochs: 4,
            minibatches: 8,
            total_steps: 2_000_000,
            grad_clip_norm: 1.0,
            prune_step: 20_000,
            target_sparsity: 0.9,
            aux_enabled: true,
            recurrent: true,
            hidden_dim: 512,
            checkpoint_interval: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, message: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    key: format!("train.{key}"),
                    message: message.to_owned(),
                })
            }
        };
        check(
            (0.0..=1.0).contains(&self.gamma),
            "gamma",
            "must be in [0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.gae_lambda),
            "gae_lambda",
            "must be in [0, 1]",
        )?;
        check(self.clip_eps > 0.0, "clip_eps", "must be > 0")?;
        check(self.lr > 0.0, "lr", "must be > 0")?;
        for (v, key) in [
            (self.w_value, "w_value"),
            (self.w_entropy, "w_entropy"),
            (self.w_aux, "w_aux"),
        ] {
            check(v >= 0.0, key, "must be non-negative")?;
        }
        check(self.n_envs >= 1, "n_envs", "must be >= 1")?;
        check(self.rollout_steps >= 1, "rollout_steps", "must be >= 1")?;
        check(self.epochs >= 1, "epochs", "must be >= 1")?;
        check(self.minibatches >= 1, "minibatches", "must be >= 1")?;
        check(
            (self.n_envs * self.rollout_steps) % self.minibatches == 0,
            "minibatches",
            "n_envs * rollout_steps must be divisible by minibatches",
        )?;
        check(
            self.n_envs % self.minibatches == 0,
            "minibatches",
            "sequence-contiguous minibatching requires n_envs divisible by minibatches",
        )?;
        check(
            (0.0..1.0).contains(&self.target_sparsity),
            "target_sparsity",
            "must be in [0, 1)",
        )?;
        check(self.hidden_dim >= 1, "hidden_dim", "must be >= 1")?;
        check(
            self.grad_clip_norm > 0.0,
            "grad_clip_norm",
            "must be > 0",
        )?;
        Ok(())
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            input_dim: ENCODED_LEN,
            hidden_dim: self.hidden_dim,
            action_count: ACTION_COUNT,
            recurrent: self.recurrent,
            aux_enabled: self.aux_enabled,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            clip_eps: self.clip_eps,
            w_value: self.w_value,
            w_entropy: self.w_entropy,
            w_aux: if self.aux_enabled { self.w_aux } else { 0.0 },
        }
    }
}

pub const CURVE_COLUMNS: &str = "iteration,step,return_mean,ep_len_mean,loss_total,loss_clip,loss_value,loss_aux,entropy,cross_entropy,sparsity";

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub iterations: u64,
    pub env_steps: u64,
    pub curve_path: PathBuf,
    pub final_checkpoint: PathBuf,
    pub return_mean: f64,
    pub ep_len_mean: f64,
}

/// Slice a rollout batch down to the environments in `idx`.
fn slice_minibatch(batch: &RolloutBatch, idx: &[usize], advantages: &[Vec<f64>], returns: &[Vec<f64>], aux_enabled: bool) -> Minibatch<f32> {
    let steps = batch.obs.len();
    let sel = |m: &Array2<f32>| m.select(Axis(0), idx);
    let sel1 = |v: &Array1<f32>| v.select(Axis(0), idx);
    let pick = |rows: &Vec<f64>| idx.iter().map(|&i| rows[i]).collect::<Vec<f64>>();
    Minibatch {
        xs: batch.obs.iter().map(sel).collect(),
        resets: batch.resets.iter().map(sel1).collect(),
        h0: batch.h0.select(Axis(0), idx),
        actions: (0..steps)
            .map(|ti| idx.iter().map(|&i| batch.actions[ti][i]).collect())
            .collect(),
        old_logp: batch.old_logp.iter().map(pick).collect(),
        advantages: advantages.iter().map(pick).collect(),
        returns: returns.iter().map(pick).collect(),
        aux_targets: aux_enabled.then(|| batch.aux_targets.iter().map(sel).collect()),
    }
}

/// Train an agent, writing the training curve, periodic checkpoints, and the
/// fully resolved config echo into `out_dir`. On a numeric fault the error
/// reports the last good checkpoint, which is left on disk.
pub fn train(env_cfg: &EnvConfig, train_cfg: &TrainConfig, out_dir: &Path) -> Result<TrainReport> {
    env_cfg.validate()?;
    train_cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let checkpoints_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&checkpoints_dir)?;

    let mut init_stream = RngStream::derive(train_cfg.seed, "train/init");
    let mut params = AgentParams::<f32>::init(train_cfg.net_config(), &mut init_stream);
    let mut adam = AdamState::new(&params.config);
    let mut shuffle_stream = RngStream::derive(train_cfg.seed, "train/shuffle");
    let mut driver = EnvDriver::new(env_cfg.clone(), train_cfg.n_envs, train_cfg.seed, "train")?;
    let mut h = params.initial_hidden(train_cfg.n_envs);

    let steps_per_iter = (train_cfg.n_envs * train_cfg.rollout_steps) as u64;
    let iterations = train_cfg.total_steps / steps_per_iter;
    let weights = train_cfg.loss_weights();

    let curve_path = out_dir.join("curves.csv");
    let mut curve = fs::File::create(&curve_path)?;
    writeln!(curve, "{CURVE_COLUMNS}")?;

    let mut recent: VecDeque<(u64, f64)> = VecDeque::with_capacity(100);
    let mut last_checkpoint = checkpoints_dir.join("iter_000000");
    checkpoint_save(&params, 0, &last_checkpoint)?;

    for iter in 1..=iterations {
        let (batch, stats) = collect_rollout(&mut driver, &params, &mut h, train_cfg.rollout_steps)?;
        for ep in &stats.completed {
            if recent.len() == 100 {
                recent.pop_front();
            }
            recent.push_back((ep.length, ep.ret));
        }

        // Per-env GAE, then batch-level advantage normalization.
        let steps = train_cfg.rollout_steps;
        let n_envs = train_cfg.n_envs;
        let mut advantages = vec![vec![0.0; n_envs]; steps];
        let mut returns = vec![vec![0.0; n_envs]; steps];
        for env in 0..n_envs {
            let rewards: Vec<f64> = (0..steps).map(|ti| batch.rewards[ti][env]).collect();
            let values: Vec<f64> = (0..steps).map(|ti| batch.values[ti][env]).collect();
            let dones: Vec<bool> = (0..steps).map(|ti| batch.dones[ti][env]).collect();
            let (adv, ret) = compute_gae(
                &rewards,
                &values,
                &dones,
                batch.bootstrap_values[env],
                train_cfg.gamma,
                train_cfg.gae_lambda,
            );
            for ti in 0..steps {
                advantages[ti][env] = adv[ti];
                returns[ti][env] = ret[ti];
            }
        }
        normalize_advantages(&mut advantages);

        // Sequence-contiguous minibatch updates with replayed hidden states.
        let mut loss_acc = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut n_updates = 0usize;
        let envs_per_mb = n_envs / train_cfg.minibatches;
        for _epoch in 0..train_cfg.epochs {
            let mut order: Vec<usize> = (0..n_envs).collect();
            shuffle_stream.shuffle(&mut order);
            for mb in 0..train_cfg.minibatches {
                let idx = &order[mb * envs_per_mb..(mb + 1) * envs_per_mb];
                let minibatch =
                    slice_minibatch(&batch, idx, &advantages, &returns, train_cfg.aux_enabled);
                let (components, mut grads) =
                    ppo_loss_and_grads(&params, &minibatch, &weights).map_err(|e| {
                        Error::NumericFault(format!(
                            "{e}; last good checkpoint: {}",
                            last_checkpoint.display()
                        ))
                    })?;
                clip_global_norm(&mut grads, train_cfg.grad_clip_norm);
                adam_step(&mut params, &grads, &mut adam, train_cfg.lr);
                loss_acc.0 += components.total;
                loss_acc.1 += components.clip;
                loss_acc.2 += components.value;
                loss_acc.3 += components.aux;
                loss_acc.4 += components.entropy;
                n_updates += 1;
            }
        }

        // One-shot magnitude pruning; the mask is frozen afterwards.
        if iter == train_cfg.prune_step && train_cfg.target_sparsity > 0.0 {
            params.mask = make_prune_mask(&params, train_cfg.target_sparsity)?;
            params.apply_mask();
            adam.m.apply_mask(&params.mask);
            adam.v.apply_mask(&params.mask);
        }

        let env_steps = iter * steps_per_iter;
        let nu = n_updates.max(1) as f64;
        let (return_mean, ep_len_mean) = if recent.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let n = recent.len() as f64;
            (
                recent.iter().map(|&(_, r)| r).sum::<f64>() / n,
                recent.iter().map(|&(l, _)| l as f64).sum::<f64>() / n,
            )
        };
        writeln!(
            curve,
            "{},{},{},{},{},{},{},{},{},{},{}",
            iter,
            env_steps,
            return_mean,
            ep_len_mean,
            loss_acc.0 / nu,
            loss_acc.1 / nu,
            loss_acc.2 / nu,
            loss_acc.3 / nu,
            stats.mean_entropy,
            stats.mean_cross_entropy_greedy,
            params.mask.overall_sparsity(),
        )?;

        if iter % train_cfg.checkpoint_interval == 0 || iter == iterations {
            let dir = checkpoints_dir.join(format!("iter_{iter:06}"));
            checkpoint_save(&params, iter, &dir)?;
            last_checkpoint = dir;
        }
    }

    let (return_mean, ep_len_mean) = if recent.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let n = recent.len() as f64;
        (
            recent.iter().map(|&(_, r)| r).sum::<f64>() / n,
            recent.iter().map(|&(l, _)| l as f64).sum::<f64>() / n,
        )
    };
    Ok(TrainReport {
        iterations,
        env_steps: iterations * steps_per_iter,
        curve_path,
        final_checkpoint: last_checkpoint,
        return_mean,
        ep_len_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_env() -> EnvConfig {
        EnvConfig {
            map_size: 16,
            max_cows: 6,
            n_spawn_points: 2,
            ..EnvConfig::default()
        }
    }

    fn tiny_train(seed: u64) -> TrainConfig {
        TrainConfig {
            n_envs: 4,
            rollout_steps: 16,
            epochs: 2,
            minibatches: 2,
            total_steps: 4 * 16 * 6, // 6 iterations
            hidden_dim: 8,
            checkpoint_interval: 3,
            prune_step: 4,
            target_sparsity: 0.5,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            gamma: 1.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            n_envs: 6,
            minibatches: 4,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn desk_iteration_consumes_expected_steps() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.n_envs * cfg.rollout_steps, 1024);
    }

    #[test]
    fn short_training_run_completes_and_prunes() {
        let dir = tempfile::tempdir().unwrap();
        let report = train(&tiny_env(), &tiny_train(3), dir.path()).unwrap();
        assert_eq!(report.iterations, 6);
        let curve = fs::read_to_string(&report.curve_path).unwrap();
        let lines: Vec<&str> = curve.lines().collect();
        assert_eq!(lines[0], CURVE_COLUMNS);
        assert_eq!(lines.len(), 7); // header + 6 iterations
        // Sparsity jumps at the prune iteration and persists.
        let sparsity: Vec<f64> = lines[1..]
            .iter()
            .map(|l| l.split(',').next_back().unwrap().parse().unwrap())
            .collect();
        assert_eq!(sparsity[2], 0.0);
        assert!(sparsity[3] > 0.45);
        assert!(sparsity[5] > 0.45);
        // The final checkpoint reloads with the mask intact.
        let (params, step) = crate::net::checkpoint_load(
            &report.final_checkpoint,
            &tiny_train(3).net_config(),
        )
        .unwrap();
        assert_eq!(step, 6);
        assert!(params.mask.overall_sparsity() > 0.45);
        for (w, m) in params.matrices().into_iter().zip(params.mask.matrices()) {
            for (x, bit) in w.iter().zip(m.iter()) {
                if *bit == 0.0 {
                    assert_eq!(*x, 0.0);
                }
            }
        }
    }

    #[test]
    fn same_seed_reproduces_curve_file() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let r1 = train(&tiny_env(), &tiny_train(11), d1.path()).unwrap();
        let r2 = train(&tiny_env(), &tiny_train(11), d2.path()).unwrap();
        let c1 = fs::read_to_string(r1.curve_path).unwrap();
        let c2 = fs::read_to_string(r2.curve_path).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn aux_disabled_zeroes_curve_component() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            aux_enabled: false,
            ..tiny_train(5)
        };
        let report = train(&tiny_env(), &cfg, dir.path()).unwrap();
        let curve = fs::read_to_string(report.curve_path).unwrap();
        for line in curve.lines().skip(1) {
            let aux: f64 = line.split(',').nth(7).unwrap().parse().unwrap();
            assert_eq!(aux, 0.0);
        }
    }
}
