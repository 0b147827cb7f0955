//! Recurrent PPO training: GAE, clipped surrogate loss with value, entropy
//! and auxiliary position terms, Adam with gradient clipping, one-shot
//! magnitude pruning, and frozen-weight evaluation.

mod adam;
mod eval;
mod gae;
mod loss;
mod rollout;
mod train;

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use eval::{evaluate, EvalConfig, EvalSummary, PolicyMode};
pub use gae::compute_gae;
pub use loss::{normalize_advantages, ppo_loss_and_grads, LossComponents, LossWeights, Minibatch};
pub use rollout::{collect_rollout, CompletedEpisode, EnvDriver, RolloutBatch, RolloutStats};
pub use train::{train, TrainConfig, TrainReport, CURVE_COLUMNS};
