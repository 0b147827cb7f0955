//! The clipped-surrogate PPO loss with value, entropy and auxiliary
//! position terms, differentiated analytically through the heads and BPTT.
//!
//! total = -L_clip + W_V * L_value - W_entropy * H + W_aux * L_aux
//! with r_t = exp(log pi_new - log pi_old),
//! L_clip = E[min(r A, clip(r, 1-eps, 1+eps) A)],
//! L_value = E[(V - return)^2], L_aux = E[||p_hat - p||^2].

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::net::{AgentParams, ParamGrads, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub total: f64,
    /// The surrogate objective value (maximized; enters total negated).
    pub clip: f64,
    pub value: f64,
    /// Mean policy entropy (maximized; enters total with -W_entropy).
    pub entropy: f64,
    pub aux: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub clip_eps: f64,
    pub w_value: f64,
    pub w_entropy: f64,
    pub w_aux: f64,
}

/// One minibatch of sequence-contiguous rollout data. Per-step tensors are
/// indexed `[t][row]`; rows are environments of this minibatch.
pub struct Minibatch<T: Scalar> {
    /// Encoded observations, length T of (B x input_dim).
    pub xs: Vec<Array2<T>>,
    /// Hidden-state carry flags (0 resets before the step).
    pub resets: Vec<Array1<T>>,
    /// Hidden state at the segment start.
    pub h0: Array2<T>,
    /// Sampled action indices, `[t][row]`.
    pub actions: Vec<Vec<usize>>,
    /// Behavior-policy log probabilities at sampling time.
    pub old_logp: Vec<Vec<f64>>,
    /// Normalized advantages.
    pub advantages: Vec<Vec<f64>>,
    /// GAE returns (value targets).
    pub returns: Vec<Vec<f64>>,
    /// Auxiliary position targets (displacement from episode start), length T
    /// of (B x 2); `None` when the aux objective is disabled.
    pub aux_targets: Option<Vec<Array2<T>>>,
}

/// Log-softmax rows.
fn log_softmax<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let sum = row
            .iter()
            .map(|&v| (v - max).exp())
            .fold(T::zero(), |a, b| a + b);
        let log_z = max + sum.ln();
        row.mapv_inplace(|v| v - log_z);
    }
    out
}

/// Loss value, per-component breakdown, and exact parameter gradients for a
/// minibatch. One fresh forward pass over the window supplies the current
/// policy; gradients flow through every head and the recurrent core.
pub fn ppo_loss_and_grads<T: Scalar>(
    params: &AgentParams<T>,
    batch: &Minibatch<T>,
    weights: &LossWeights,
) -> Result<(LossComponents, ParamGrads<T>)> {
    let (cache, outputs) = params.forward_sequence(&batch.h0, &batch.xs, &batch.resets)?;
    let steps = batch.xs.len();
    let rows = batch.h0.nrows();
    let n = (steps * rows) as f64;

    let mut clip_sum = 0.0;
    let mut value_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut aux_sum = 0.0;

    let mut dlogits: Vec<Array2<T>> = Vec::with_capacity(steps);
    let mut dvalues: Vec<Array1<T>> = Vec::with_capacity(steps);
    let mut dpos: Vec<Array2<T>> = Vec::with_capacity(steps);

    for ti in 0..steps {
        let logp_all = log_softmax(&outputs.logits[ti]);
        let mut dl = Array2::<T>::zeros(logp_all.raw_dim());
        let mut dv = Array1::<T>::zeros(rows);
        let mut dp = Array2::<T>::zeros((rows, 2));
        for b in 0..rows {
            let action = batch.actions[ti][b];
            let adv = batch.advantages[ti][b];
            let old_logp = batch.old_logp[ti][b];
            let logp: f64 = num_traits::NumCast::from(logp_all[(b, action)]).unwrap();
            let ratio = (logp - old_logp).exp();
            let clipped_ratio = ratio.clamp(1.0 - weights.clip_eps, 1.0 + weights.clip_eps);
            let unclipped = ratio * adv;
            let clipped = clipped_ratio * adv;
            clip_sum += unclipped.min(clipped);

            // d(-L_clip)/d logp: the min selects a branch; the clipped branch
            // is constant in theta.
            let surrogate_grad = if unclipped <= clipped { ratio * adv } else { 0.0 };

            // Entropy of this row's policy.
            let mut entropy = 0.0;
            for a in 0..logp_all.ncols() {
                let lp: f64 = num_traits::NumCast::from(logp_all[(b, a)]).unwrap();
                entropy -= lp.exp() * lp;
            }
            entropy_sum += entropy;

            // dlogits = -surrogate_grad * (onehot - pi) / n
            //           + w_entropy * pi * (logp + H) / n
            for a in 0..logp_all.ncols() {
                let lp: f64 = num_traits::NumCast::from(logp_all[(b, a)]).unwrap();
                let pi = lp.exp();
                let onehot = if a == action { 1.0 } else { 0.0 };
                let g_clip = -surrogate_grad * (onehot - pi);
                let g_ent = weights.w_entropy * pi * (lp + entropy);
                dl[(b, a)] = T::from((g_clip + g_ent) / n).unwrap();
            }

            let v: f64 = num_traits::NumCast::from(outputs.values[ti][b]).unwrap();
            let err = v - batch.returns[ti][b];
            value_sum += err * err;
            dv[b] = T::from(weights.w_value * 2.0 * err / n).unwrap();

            if let Some(targets) = &batch.aux_targets {
                let mut sq = 0.0;
                for k in 0..2 {
                    let pred: f64 = num_traits::NumCast::from(outputs.pos[ti][(b, k)]).unwrap();
                    let target: f64 = num_traits::NumCast::from(targets[ti][(b, k)]).unwrap();
                    let diff = pred - target;
                    sq += diff * diff;
                    dp[(b, k)] = T::from(weights.w_aux * 2.0 * diff / n).unwrap();
                }
                aux_sum += sq;
            }
        }
        dlogits.push(dl);
        dvalues.push(dv);
        dpos.push(dp);
    }

    let components = LossComponents {
        clip: clip_sum / n,
        value: value_sum / n,
        entropy: entropy_sum / n,
        aux: aux_sum / n,
        total: -clip_sum / n + weights.w_value * value_sum / n
            - weights.w_entropy * entropy_sum / n
            + weights.w_aux * aux_sum / n,
    };
    if !components.total.is_finite() {
        return Err(Error::NumericFault(format!(
            "non-finite loss: clip={} value={} entropy={} aux={}",
            components.clip, components.value, components.entropy, components.aux
        )));
    }

    let grads = params.backward_sequence(
        &cache,
        &dlogits,
        &dvalues,
        batch.aux_targets.as_ref().map(|_| dpos.as_slice()),
    );
    let _ = outputs.final_h.sum_axis(Axis(0));
    Ok((components, grads))
}

/// Normalize advantages to mean 0, std 1 in place (guard std >= 1e-8).
pub fn normalize_advantages(advantages: &mut [Vec<f64>]) {
    let mut n = 0usize;
    let mut mean = 0.0;
    for row in advantages.iter() {
        for &a in row {
            mean += a;
            n += 1;
        }
    }
    if n == 0 {
        return;
    }
    mean /= n as f64;
    let mut var = 0.0;
    for row in advantages.iter() {
        for &a in row {
            var += (a - mean) * (a - mean);
        }
    }
    let std = (var / n as f64).sqrt().max(1e-8);
    for row in advantages.iter_mut() {
        for a in row.iter_mut() {
            *a = (*a - mean) / std;
        }
    }
}
