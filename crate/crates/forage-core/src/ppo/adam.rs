//! Adam with global gradient-norm clipping.

use crate::net::{AgentParams, NetConfig, ParamGrads, Scalar};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub m: ParamGrads<T>,
    pub v: ParamGrads<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: &NetConfig) -> Self {
        Self {
            m: ParamGrads::zeros(config),
            v: ParamGrads::zeros(config),
            t: 0,
        }
    }
}

/// Rescale gradients in place when their global L2 norm exceeds `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<T: Scalar>(grads: &mut ParamGrads<T>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(T::from(max_norm / norm).unwrap());
    }
    norm
}

/// One Adam update with bias correction. The pruning mask is re-applied
/// afterwards so masked weights stay exactly zero.
pub fn adam_step<T: Scalar>(
    params: &mut AgentParams<T>,
    grads: &ParamGrads<T>,
    state: &mut AdamState<T>,
    lr: f64,
) {
    state.t += 1;
    let b1 = T::from(BETA1).unwrap();
    let b2 = T::from(BETA2).unwrap();
    let one = T::one();
    let bc1 = T::from(1.0 - BETA1.powi(state.t as i32)).unwrap();
    let bc2 = T::from(1.0 - BETA2.powi(state.t as i32)).unwrap();
    let lr_t = T::from(lr).unwrap();
    let eps = T::from(EPS).unwrap();

    let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - lr_t * m_hat / (v_hat.sqrt() + eps);
    };

    for (((p, g), m), v) in params
        .matrices_mut()
        .into_iter()
        .zip(grads.matrices())
        .zip(state.m.matrices_mut())
        .zip(state.v.matrices_mut())
    {
        ndarray::Zip::from(p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    for (((p, g), m), v) in params
        .vectors_mut()
        .into_iter()
        .zip(grads.vectors())
        .zip(state.m.vectors_mut())
        .zip(state.v.vectors_mut())
    {
        ndarray::Zip::from(p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    params.apply_mask();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::make_prune_mask;
    use crate::rng::RngStream;

    fn scalar_config() -> NetConfig {
        NetConfig {
            input_dim: 1,
            hidden_dim: 1,
            action_count: 1,
            recurrent: false,
            aux_enabled: false,
        }
    }

    #[test]
    fn first_step_matches_hand_computed_update() {
        // Single scalar parameter, g = 1, lr = 0.001: the bias-corrected
        // first step is -lr * g / (|g| + eps') which is -0.001 up to eps.
        let mut params = AgentParams::<f64>::zeros(scalar_config());
        params.w_enc[(0, 0)] = 0.25;
        let mut grads = ParamGrads::zeros(&scalar_config());
        grads.w_enc[(0, 0)] = 1.0;
        let mut state = AdamState::new(&scalar_config());
        adam_step(&mut params, &grads, &mut state, 0.001);
        let delta = params.w_enc[(0, 0)] - 0.25;
        assert!((delta + 0.001).abs() < 1e-6, "delta {delta}");
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut stream = RngStream::derive(3, "adam");
        let config = NetConfig {
            input_dim: 4,
            hidden_dim: 3,
            action_count: 2,
            recurrent: true,
            aux_enabled: true,
        };
        let mut params = AgentParams::<f64>::init(config.clone(), &mut stream);
        let before = params.clone();
        let grads = ParamGrads::zeros(&config);
        let mut state = AdamState::new(&config);
        adam_step(&mut params, &grads, &mut state, 0.01);
        assert_eq!(params, before);
    }

    #[test]
    fn clip_rescales_when_norm_exceeds() {
        let config = scalar_config();
        let mut grads = ParamGrads::<f64>::zeros(&config);
        grads.w_enc[(0, 0)] = 6.0;
        grads.b_enc[0] = 8.0; // norm 10
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 10.0).abs() < 1e-12);
        assert!((grads.w_enc[(0, 0)] - 0.6).abs() < 1e-12);
        assert!((grads.b_enc[0] - 0.8).abs() < 1e-12);
        // Below the threshold nothing changes.
        let mut small = ParamGrads::<f64>::zeros(&config);
        small.w_enc[(0, 0)] = 0.5;
        let norm = clip_global_norm(&mut small, 1.0);
        assert!((norm - 0.5).abs() < 1e-12);
        assert_eq!(small.w_enc[(0, 0)], 0.5);
    }

    #[test]
    fn masked_params_stay_zero_through_updates() {
        let mut stream = RngStream::derive(5, "adam");
        let config = NetConfig {
            input_dim: 6,
            hidden_dim: 4,
            action_count: 3,
            recurrent: true,
            aux_enabled: true,
        };
        let mut params = AgentParams::<f64>::init(config.clone(), &mut stream);
        params.mask = make_prune_mask(&params, 0.5).unwrap();
        params.apply_mask();
        let mut state = AdamState::new(&config);
        for _ in 0..5 {
            let mut grads = ParamGrads::zeros(&config);
            for g in grads.matrices_mut() {
                g.mapv_inplace(|_| stream.next_gaussian());
            }
            grads.apply_mask(&params.mask);
            adam_step(&mut params, &grads, &mut state, 0.01);
            for (w, m) in params.matrices().into_iter().zip(params.mask.matrices()) {
                for (x, mask_bit) in w.iter().zip(m.iter()) {
                    if *mask_bit == 0.0 {
                        assert_eq!(*x, 0.0);
                    }
                }
            }
        }
    }
}
