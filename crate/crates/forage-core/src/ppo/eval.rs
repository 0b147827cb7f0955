//! Frozen-weight evaluation rollouts with full telemetry logging.
//!
//! Evaluation arenas are drawn from streams labeled by the eval seed, so they
//! are disjoint from training arenas by construction. Weights are never
//! updated; a parameter hash taken before and after certifies it.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::config::EnvConfig;
use crate::env::observe::{encode_observation, observe, ENCODED_LEN};
use crate::env::state::{ArenaState, ACTION_COUNT};
use crate::env::step::step;
use crate::env::Action;
use crate::error::{Error, Result};
use crate::net::{softmax, AgentParams};
use crate::rng::RngStream;
use crate::telemetry::{
    write_log, write_manifest, AgentFields, EpisodeLog, LogHeader, LogRecord, ManifestEntry,
    RunManifest, FORMAT_VERSION,
};
use crate::worldgen::generate_arena;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// Uniform random actions (no network).
    Random,
    /// Sample from the policy distribution.
    Sample,
    /// Always the highest-probability action.
    Greedy,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub n_episodes: usize,
    pub seed: u64,
    pub policy: PolicyMode,
    /// Log every k-th hidden state.
    pub hidden_stride: usize,
    /// Optional cap below the environment's own episode cap.
    pub max_steps: Option<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_episodes: 20,
            seed: 1,
            policy: PolicyMode::Sample,
            hidden_stride: 1,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_episodes: usize,
    pub policy: PolicyMode,
    pub mean_return: f64,
    pub ci95_return: f64,
    pub mean_length: f64,
    pub ci95_length: f64,
    pub eat_rate: f64,
    pub drink_rate: f64,
    pub sleep_rate: f64,
    /// FNV hash of the parameter bytes; equal before and after evaluation.
    pub param_hash: Option<u64>,
}

fn param_hash(params: &AgentParams<f32>) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    let mut eat = |x: f32| {
        for b in x.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    };
    for m in params.matrices() {
        for &v in m.iter() {
            eat(v);
        }
    }
    for v in params.vectors() {
        for &x in v.iter() {
            eat(x);
        }
    }
    h
}

struct EpisodeOutcome {
    log: EpisodeLog,
    ret: f64,
    length: u64,
    eats: u64,
    drinks: u64,
    sleeps: u64,
}

fn run_episode(
    params: Option<&AgentParams<f32>>,
    env_cfg: &EnvConfig,
    eval: &EvalConfig,
    episode_index: usize,
    checkpoint_id: &str,
) -> Result<EpisodeOutcome> {
    let arena_seed =
        RngStream::derive(eval.seed, &format!("eval/arena/{episode_index}")).next_u64();
    let episode_seed =
        RngStream::derive(eval.seed, &format!("eval/episode/{episode_index}")).next_u64();
    let mut policy_stream = RngStream::derive(eval.seed, &format!("eval/policy/{episode_index}"));
    let layout = generate_arena(arena_seed, env_cfg)?;
    let mut state = ArenaState::new(layout, env_cfg.clone(), episode_seed);
    let hidden_dim = params.map_or(0, |p| p.config.hidden_dim);
    let header = LogHeader {
        format_version: FORMAT_VERSION,
        master_seed: eval.seed,
        arena_seed,
        episode_seed,
        episode_id: state.episode_id,
        checkpoint_id: checkpoint_id.to_owned(),
        hidden_dim,
        hidden_stride: eval.hidden_stride,
        env: env_cfg.clone(),
    };
    let mut log = EpisodeLog::new(header);
    let mut h: Array2<f32> = Array2::zeros((1, hidden_dim.max(1)));
    let mut ret = 0.0;
    let mut eats = 0u64;
    let mut drinks = 0u64;
    let mut sleeps = 0u64;
    let mut t = 0u64;
    let cap = eval.max_steps.unwrap_or(u64::MAX);

    while !state.done && t < cap {
        let (action, agent_fields, h_row) = match (params, eval.policy) {
            (None, _) | (_, PolicyMode::Random) => {
                let a = policy_stream.next_int_below(ACTION_COUNT as u64) as usize;
                (
                    Action::from_index(a).unwrap(),
                    AgentFields::random_policy(ACTION_COUNT),
                    None,
                )
            }
            (Some(p), mode) => {
                let obs = observe(&state, env_cfg.fov_mode);
                let x = Array2::from_shape_vec((1, ENCODED_LEN), encode_observation(&obs))
                    .expect("encoded length");
                let (h_new, _) = p.forward_step(&h, &x);
                let (logits, values, pos) = p.heads(&h_new);
                let pi = softmax(&logits);
                let row = pi.row(0);
                let chosen = match mode {
                    PolicyMode::Greedy => {
                        let mut best = 0;
                        for (a, &v) in row.iter().enumerate() {
                            if v > row[best] {
                                best = a;
                            }
                        }
                        best
                    }
                    _ => {
                        let u = policy_stream.next_uniform() as f32;
                        let mut acc = 0.0f32;
                        let mut chosen = ACTION_COUNT - 1;
                        for (a, &pv) in row.iter().enumerate() {
                            acc += pv;
                            if u < acc {
                                chosen = a;
                                break;
                            }
                        }
                        chosen
                    }
                };
                let mut entropy = 0.0f64;
                for &pv in row.iter() {
                    if pv > 0.0 {
                        entropy -= f64::from(pv) * f64::from(pv.ln());
                    }
                }
                let fields = AgentFields {
                    value: f64::from(values[0]),
                    entropy,
                    log_probability: f64::from(row[chosen].max(1e-12).ln()),
                    predicted_delta: p
                        .config
                        .aux_enabled
                        .then(|| (f64::from(pos[(0, 0)]), f64::from(pos[(0, 1)]))),
                };
                h = h_new;
                let h_row: Vec<f32> = h.row(0).to_vec();
                (Action::from_index(chosen).unwrap(), fields, Some(h_row))
            }
        };
        let (outcome, env_fields) = step(&mut state, action)?;
        ret += outcome.reward;
        eats += u64::from(outcome.ate);
        drinks += u64::from(outcome.drank);
        sleeps += u64::from(env_fields.is_sleeping);
        let stride_hit = t % eval.hidden_stride as u64 == 0;
        let h_opt = match (&h_row, stride_hit) {
            (Some(row), true) => Some(row.as_slice()),
            _ => None,
        };
        log.append_record(
            LogRecord {
                env: env_fields,
                agent: agent_fields,
                episode_id: state.episode_id,
                hidden_state_ref: -1,
            },
            h_opt,
        )?;
        t += 1;
    }
    Ok(EpisodeOutcome {
        log,
        ret,
        length: t,
        eats,
        drinks,
        sleeps,
    })
}

/// Evaluate a checkpoint (or the uniform-random policy when `params` is
/// `None`) on held-out arenas. Logs are written under `out_dir` with a run
/// manifest when a directory is given.
pub fn evaluate(
    params: Option<&AgentParams<f32>>,
    env_cfg: &EnvConfig,
    eval: &EvalConfig,
    out_dir: Option<&Path>,
    checkpoint_id: &str,
) -> Result<(EvalSummary, Vec<EpisodeLog>)> {
    env_cfg.validate()?;
    if eval.n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be >= 1".into()));
    }
    if eval.hidden_stride == 0 {
        return Err(Error::InvalidArgument("hidden_stride must be >= 1".into()));
    }
    let hash_before = params.map(param_hash);
    let outcomes: Vec<Result<EpisodeOutcome>> = (0..eval.n_episodes)
        .into_par_iter()
        .map(|e| run_episode(params, env_cfg, eval, e, checkpoint_id))
        .collect();
    let mut episodes = Vec::with_capacity(eval.n_episodes);
    for o in outcomes {
        episodes.push(o?);
    }
    let hash_after = params.map(param_hash);
    if hash_before != hash_after {
        return Err(Error::EnvContract(
            "parameters changed during evaluation".into(),
        ));
    }

    let n = episodes.len() as f64;
    let returns: Vec<f64> = episodes.iter().map(|e| e.ret).collect();
    let lengths: Vec<f64> = episodes.iter().map(|e| e.length as f64).collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / n;
    let ci95 = |xs: &[f64], m: f64| {
        if xs.len() < 2 {
            return 0.0;
        }
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    };
    let mean_return = mean(&returns);
    let mean_length = mean(&lengths);
    let total_steps: u64 = episodes.iter().map(|e| e.length).sum();
    let summary = EvalSummary {
        n_episodes: eval.n_episodes,
        policy: eval.policy,
        mean_return,
        ci95_return: ci95(&returns, mean_return),
        mean_length,
        ci95_length: ci95(&lengths, mean_length),
        eat_rate: episodes.iter().map(|e| e.eats).sum::<u64>() as f64 / total_steps as f64,
        drink_rate: episodes.iter().map(|e| e.drinks).sum::<u64>() as f64 / total_steps as f64,
        sleep_rate: episodes.iter().map(|e| e.sleeps).sum::<u64>() as f64 / total_steps as f64,
        param_hash: hash_after,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for e in &episodes {
            let (records_path, hidden_path) = write_log(&e.log, dir)?;
            entries.push(ManifestEntry {
                episode_id: e.log.header.episode_id,
                arena_seed: e.log.header.arena_seed,
                episode_seed: e.log.header.episode_seed,
                steps: e.log.len(),
                records_file: records_path
                    .file_name()
                    .unwrap()
                    .to_string_lossy()
                    .into_owned(),
                hidden_file: hidden_path
                    .file_name()
                    .unwrap()
                    .to_string_lossy()
                    .into_owned(),
            });
        }
        write_manifest(
            &RunManifest {
                format_version: FORMAT_VERSION,
                master_seed: eval.seed,
                checkpoint_id: checkpoint_id.to_owned(),
                episodes: entries,
            },
            dir,
        )?;
        std::fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&summary)?,
        )?;
    }
    Ok((summary, episodes.into_iter().map(|e| e.log).collect()))
}
