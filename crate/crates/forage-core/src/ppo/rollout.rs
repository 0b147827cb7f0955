//! Batched rollout collection across parallel environments.
//!
//! Each environment slot owns its arena state and policy-sampling stream, so
//! stepping is order-independent and safe to parallelize; episode resets draw
//! fresh seeds from driver-level streams in slot order, keeping the whole
//! collection a pure function of the master seed.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::env::config::EnvConfig;
use crate::env::observe::{encode_observation, observe, ENCODED_LEN};
use crate::env::state::{Action, ArenaState, ACTION_COUNT};
use crate::env::step::step;
use crate::error::Result;
use crate::net::{softmax, AgentParams};
use crate::rng::RngStream;
use crate::worldgen::generate_arena;

pub struct EnvSlot {
    pub state: ArenaState,
    pub policy_stream: RngStream,
    pub arena_seed: u64,
    pub episode_seed: u64,
    pub ep_return: f64,
    pub ep_len: u64,
    pub ep_eats: u64,
    pub ep_drinks: u64,
    pub ep_sleeps: u64,
    /// False right after a reset: the hidden state must not carry over.
    pub carry: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CompletedEpisode {
    pub length: u64,
    pub ret: f64,
    pub eat_rate: f64,
    pub drink_rate: f64,
    pub sleep_rate: f64,
}

/// A pool of environments plus the seed streams that feed resets.
pub struct EnvDriver {
    pub env_cfg: EnvConfig,
    pub slots: Vec<EnvSlot>,
    arena_stream: RngStream,
    episode_stream: RngStream,
}

impl EnvDriver {
    pub fn new(env_cfg: EnvConfig, n_envs: usize, master_seed: u64, label: &str) -> Result<Self> {
        let mut arena_stream = RngStream::derive(master_seed, &format!("{label}/arena"));
        let mut episode_stream = RngStream::derive(master_seed, &format!("{label}/episode"));
        let mut slots = Vec::with_capacity(n_envs);
        for i in 0..n_envs {
            let arena_seed = arena_stream.next_u64();
            let episode_seed = episode_stream.next_u64();
            let layout = generate_arena(arena_seed, &env_cfg)?;
            slots.push(EnvSlot {
                state: ArenaState::new(layout, env_cfg.clone(), episode_seed),
                policy_stream: RngStream::derive(master_seed, &format!("{label}/policy/{i}")),
                arena_seed,
                episode_seed,
                ep_return: 0.0,
                ep_len: 0,
                ep_eats: 0,
                ep_drinks: 0,
                ep_sleeps: 0,
                carry: false,
            });
        }
        Ok(Self {
            env_cfg,
            slots,
            arena_stream,
            episode_stream,
        })
    }

    pub fn n_envs(&self) -> usize {
        self.slots.len()
    }

    /// Encoded observations of every environment, one row per env.
    pub fn observe_batch(&self) -> Array2<f32> {
        let rows: Vec<Vec<f32>> = self
            .slots
            .par_iter()
            .map(|slot| encode_observation(&observe(&slot.state, slot.state.config.fov_mode)))
            .collect();
        let mut out = Array2::zeros((rows.len(), ENCODED_LEN));
        for (i, row) in rows.into_iter().enumerate() {
            out.row_mut(i).assign(&Array1::from_vec(row));
        }
        out
    }

    /// Hidden-state carry flags for the upcoming step (0 = fresh episode).
    pub fn carry_flags(&self) -> Array1<f32> {
        Array1::from_iter(self.slots.iter().map(|s| if s.carry { 1.0 } else { 0.0 }))
    }

    /// Step every environment, then reset finished ones (drawing fresh seeds
    /// in slot order). Returns per-env (reward, done, delta-after-step) and
    /// the episodes completed this step.
    pub fn step_batch(
        &mut self,
        actions: &[usize],
    ) -> Result<(Vec<(f64, bool, (i32, i32))>, Vec<CompletedEpisode>)> {
        assert_eq!(actions.len(), self.slots.len());
        let results: Vec<Result<(f64, bool, (i32, i32), bool, bool, bool)>> = self
            .slots
            .par_iter_mut()
            .zip(actions.par_iter())
            .map(|(slot, &a)| {
                let action = Action::from_index(a)
                    .ok_or_else(|| crate::error::Error::InvalidArgument(format!("action {a}")))?;
                let (outcome, fields) = step(&mut slot.state, action)?;
                Ok((
                    outcome.reward,
                    outcome.done,
                    (fields.delta_x, fields.delta_y),
                    outcome.ate,
                    outcome.drank,
                    fields.is_sleeping,
                ))
            })
            .collect();
        let mut transitions = Vec::with_capacity(self.slots.len());
        let mut completed = Vec::new();
        for (i, res) in results.into_iter().enumerate() {
            let (reward, done, delta, ate, drank, sleeping) = res?;
            let slot = &mut self.slots[i];
            slot.ep_return += reward;
            slot.ep_len += 1;
            slot.ep_eats += u64::from(ate);
            slot.ep_drinks += u64::from(drank);
            slot.ep_sleeps += u64::from(sleeping);
            slot.carry = !done;
            transitions.push((reward, done, delta));
            if done {
                let len = slot.ep_len.max(1) as f64;
                completed.push(CompletedEpisode {
                    length: slot.ep_len,
                    ret: slot.ep_return,
                    eat_rate: slot.ep_eats as f64 / len,
                    drink_rate: slot.ep_drinks as f64 / len,
                    sleep_rate: slot.ep_sleeps as f64 / len,
                });
                let arena_seed = self.arena_stream.next_u64();
                let episode_seed = self.episode_stream.next_u64();
                let layout = generate_arena(arena_seed, &self.env_cfg)?;
                let slot = &mut self.slots[i];
                slot.state = ArenaState::new(layout, self.env_cfg.clone(), episode_seed);
                slot.arena_seed = arena_seed;
                slot.episode_seed = episode_seed;
                slot.ep_return = 0.0;
                slot.ep_len = 0;
                slot.ep_eats = 0;
                slot.ep_drinks = 0;
                slot.ep_sleeps = 0;
            }
        }
        Ok((transitions, completed))
    }
}

/// One iteration's worth of trajectories across all environments.
pub struct RolloutBatch {
    /// Per step: (n_envs x input) encoded observations.
    pub obs: Vec<Array2<f32>>,
    /// Per step: carry flags fed to the recurrent core.
    pub resets: Vec<Array1<f32>>,
    /// Hidden state at the segment start (pre-carry-mask).
    pub h0: Array2<f32>,
    pub actions: Vec<Vec<usize>>,
    pub old_logp: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub dones: Vec<Vec<bool>>,
    /// Displacement-from-start after each step (auxiliary targets).
    pub aux_targets: Vec<Array2<f32>>,
    /// Value of the state after the final step, for GAE bootstrap.
    pub bootstrap_values: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutStats {
    pub mean_entropy: f64,
    pub mean_cross_entropy_greedy: f64,
    pub completed: Vec<CompletedEpisode>,
}

/// Collect `steps` transitions from every environment, sampling actions from
/// the current policy. `h` carries the recurrent state across iterations and
/// is left at the post-rollout value.
pub fn collect_rollout(
    driver: &mut EnvDriver,
    params: &AgentParams<f32>,
    h: &mut Array2<f32>,
    steps: usize,
) -> Result<(RolloutBatch, RolloutStats)> {
    let n_envs = driver.n_envs();
    let mut batch = RolloutBatch {
        obs: Vec::with_capacity(steps),
        resets: Vec::with_capacity(steps),
        h0: h.clone(),
        actions: Vec::with_capacity(steps),
        old_logp: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        dones: Vec::with_capacity(steps),
        aux_targets: Vec::with_capacity(steps),
        bootstrap_values: Vec::new(),
    };
    let mut stats = RolloutStats::default();
    let mut entropy_sum = 0.0;
    let mut ce_sum = 0.0;

    for _ in 0..steps {
        let obs = driver.observe_batch();
        let carry = driver.carry_flags();
        let carried = &*h * &carry.view().insert_axis(Axis(1));
        let (h_new, _) = params.forward_step(&carried, &obs);
        let (logits, values, _) = params.heads(&h_new);
        let pi = softmax(&logits);

        let mut actions = Vec::with_capacity(n_envs);
        let mut logps = Vec::with_capacity(n_envs);
        for (i, slot) in driver.slots.iter_mut().enumerate() {
            let row = pi.row(i);
            let u = slot.policy_stream.next_uniform() as f32;
            let mut acc = 0.0f32;
            let mut chosen = ACTION_COUNT - 1;
            for (a, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = a;
                    break;
                }
            }
            actions.push(chosen);
            let p_chosen = row[chosen].max(1e-12);
            logps.push(f64::from(p_chosen.ln()));
            let mut entropy = 0.0f64;
            let mut p_max = 0.0f32;
            for &p in row.iter() {
                if p > 0.0 {
                    entropy -= f64::from(p) * f64::from(p.ln());
                }
                p_max = p_max.max(p);
            }
            entropy_sum += entropy;
            ce_sum += -f64::from(p_max.max(1e-12).ln());
        }

        let (transitions, completed) = driver.step_batch(&actions)?;
        stats.completed.extend(completed);

        let mut rewards = Vec::with_capacity(n_envs);
        let mut dones = Vec::with_capacity(n_envs);
        let mut aux = Array2::<f32>::zeros((n_envs, 2));
        for (i, (r, d, delta)) in transitions.into_iter().enumerate() {
            rewards.push(r);
            dones.push(d);
            aux[(i, 0)] = delta.0 as f32;
            aux[(i, 1)] = delta.1 as f32;
        }
        batch.obs.push(obs);
        batch.resets.push(carry);
        batch.actions.push(actions);
        batch.old_logp.push(logps);
        batch
            .values
            .push(values.iter().map(|&v| f64::from(v)).collect());
        batch.rewards.push(rewards);
        batch.dones.push(dones);
        batch.aux_targets.push(aux);
        *h = h_new;
    }

    // Bootstrap values for the state after the last step.
    let obs = driver.observe_batch();
    let carry = driver.carry_flags();
    let carried = &*h * &carry.view().insert_axis(Axis(1));
    let (h_boot, _) = params.forward_step(&carried, &obs);
    let (_, values, _) = params.heads(&h_boot);
    batch.bootstrap_values = values.iter().map(|&v| f64::from(v)).collect();

    let samples = (steps * n_envs) as f64;
    stats.mean_entropy = entropy_sum / samples;
    stats.mean_cross_entropy_greedy = ce_sum / samples;
    Ok((batch, stats))
}
