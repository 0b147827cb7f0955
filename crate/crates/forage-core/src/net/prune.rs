//! Magnitude-based pruning masks.
//!
//! Pruning zeroes the smallest-magnitude entries of every weight matrix
//! (biases are exempt) and freezes them via a binary mask that is re-applied
//! after every optimizer step.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::net::{AgentParams, NetConfig, Scalar};

/// Binary mask congruent to each weight matrix; 1 keeps a weight, 0 prunes.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask<T: Scalar> {
    pub w_enc: Array2<T>,
    pub w_z: Array2<T>,
    pub u_z: Array2<T>,
    pub w_r: Array2<T>,
    pub u_r: Array2<T>,
    pub w_c: Array2<T>,
    pub u_c: Array2<T>,
    pub w_pi: Array2<T>,
    pub w_v: Array2<T>,
    pub w_aux: Array2<T>,
}

impl<T: Scalar> PruneMask<T> {
    pub fn all_ones(config: &NetConfig) -> Self {
        let i = config.input_dim;
        let h = config.hidden_dim;
        let a = config.action_count;
        Self {
            w_enc: Array2::ones((i, h)),
            w_z: Array2::ones((h, h)),
            u_z: Array2::ones((h, h)),
            w_r: Array2::ones((h, h)),
            u_r: Array2::ones((h, h)),
            w_c: Array2::ones((h, h)),
            u_c: Array2::ones((h, h)),
            w_pi: Array2::ones((h, a)),
            w_v: Array2::ones((h, 1)),
            w_aux: Array2::ones((h, 2)),
        }
    }

    pub fn matrices(&self) -> [&Array2<T>; 10] {
        [
            &self.w_enc,
            &self.w_z,
            &self.u_z,
            &self.w_r,
            &self.u_r,
            &self.w_c,
            &self.u_c,
            &self.w_pi,
            &self.w_v,
            &self.w_aux,
        ]
    }

    pub fn matrices_mut(&mut self) -> [&mut Array2<T>; 10] {
        [
            &mut self.w_enc,
            &mut self.w_z,
            &mut self.u_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.w_c,
            &mut self.u_c,
            &mut self.w_pi,
            &mut self.w_v,
            &mut self.w_aux,
        ]
    }

    pub fn cast<U: Scalar>(&self) -> PruneMask<U> {
        let conv = |m: &Array2<T>| m.mapv(|v| U::from(v).unwrap());
        PruneMask {
            w_enc: conv(&self.w_enc),
            w_z: conv(&self.w_z),
            u_z: conv(&self.u_z),
            w_r: conv(&self.w_r),
            u_r: conv(&self.u_r),
            w_c: conv(&self.w_c),
            u_c: conv(&self.u_c),
            w_pi: conv(&self.w_pi),
            w_v: conv(&self.w_v),
            w_aux: conv(&self.w_aux),
        }
    }

    /// Zeroed fraction per weight matrix, in `MATRIX_NAMES` order.
    pub fn per_layer_sparsity(&self) -> Vec<f64> {
        self.matrices()
            .iter()
            .map(|m| {
                let zeros = m.iter().filter(|&&v| v == T::zero()).count();
                zeros as f64 / m.len() as f64
            })
            .collect()
    }

    /// Zeroed fraction over all weight matrices together.
    pub fn overall_sparsity(&self) -> f64 {
        let mut zeros = 0usize;
        let mut total = 0usize;
        for m in self.matrices() {
            zeros += m.iter().filter(|&&v| v == T::zero()).count();
            total += m.len();
        }
        zeros as f64 / total as f64
    }
}

/// Build a magnitude mask: per layer, the `ceil(target_sparsity * n)`
/// smallest-magnitude weights are masked, ties broken by index order.
/// Biases are exempt.
pub fn make_prune_mask<T: Scalar>(
    params: &AgentParams<T>,
    target_sparsity: f64,
) -> Result<PruneMask<T>> {
    if !(0.0..1.0).contains(&target_sparsity) {
        return Err(Error::InvalidArgument(format!(
            "target_sparsity must be in [0, 1), got {target_sparsity}"
        )));
    }
    if params
        .matrices()
        .iter()
        .any(|m| m.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NumericFault("non-finite weights at prune time".into()));
    }
    let mut mask = PruneMask::all_ones(&params.config);
    for (w, m) in params.matrices().into_iter().zip(mask.matrices_mut()) {
        let n = w.len();
        let k = (target_sparsity * n as f64).ceil() as usize;
        if k == 0 {
            continue;
        }
        let flat: Vec<T> = w.iter().cloned().collect();
        let mut order: Vec<usize> = (0..n).collect();
        // Stable sort keeps index order among equal magnitudes.
        order.sort_by(|&a, &b| {
            flat[a]
                .abs()
                .partial_cmp(&flat[b].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let shape = (w.nrows(), w.ncols());
        let flat_mut = m.as_slice_mut().expect("contiguous mask");
        for &idx in order.iter().take(k) {
            let _ = shape;
            flat_mut[idx] = T::zero();
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn config() -> NetConfig {
        NetConfig {
            input_dim: 4,
            hidden_dim: 4,
            action_count: 3,
            recurrent: true,
            aux_enabled: true,
        }
    }

    #[test]
    fn magnitude_order_respected() {
        // weights [0.1, -0.5, 0.3, 0.01] at 0.5 sparsity: mask 0.01 and 0.1.
        let mut params = AgentParams::<f64>::zeros(NetConfig {
            input_dim: 2,
            hidden_dim: 2,
            action_count: 2,
            recurrent: false,
            aux_enabled: false,
        });
        params.w_enc = ndarray::arr2(&[[0.1, -0.5], [0.3, 0.01]]);
        let mask = make_prune_mask(&params, 0.5).unwrap();
        assert_eq!(mask.w_enc, ndarray::arr2(&[[0.0, 1.0], [1.0, 0.0]]));
    }

    #[test]
    fn zero_sparsity_is_all_ones() {
        let mut stream = RngStream::derive(1, "p");
        let params = AgentParams::<f64>::init(config(), &mut stream);
        let mask = make_prune_mask(&params, 0.0).unwrap();
        for m in mask.matrices() {
            assert!(m.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn per_layer_fraction_within_one_element() {
        let mut stream = RngStream::derive(2, "p");
        let config = NetConfig {
            input_dim: 30,
            hidden_dim: 20,
            action_count: 9,
            recurrent: true,
            aux_enabled: true,
        };
        let params = AgentParams::<f64>::init(config, &mut stream);
        let mask = make_prune_mask(&params, 0.9).unwrap();
        for (m, frac) in mask.matrices().iter().zip(mask.per_layer_sparsity()) {
            let n = m.len() as f64;
            assert!(
                (frac - 0.9).abs() <= 1.0 / n + 1e-12,
                "layer sparsity {frac} too far from 0.9 (n={n})"
            );
        }
    }

    #[test]
    fn sparsity_one_rejected() {
        let params = AgentParams::<f64>::zeros(config());
        assert!(make_prune_mask(&params, 1.0).is_err());
        assert!(make_prune_mask(&params, 1.5).is_err());
        assert!(make_prune_mask(&params, -0.1).is_err());
    }

    #[test]
    fn tie_break_by_index_order() {
        let mut params = AgentParams::<f64>::zeros(NetConfig {
            input_dim: 2,
            hidden_dim: 2,
            action_count: 2,
            recurrent: false,
            aux_enabled: false,
        });
        // All equal magnitudes: the earliest indices are pruned first.
        params.w_enc = ndarray::arr2(&[[0.2, 0.2], [0.2, 0.2]]);
        let mask = make_prune_mask(&params, 0.5).unwrap();
        assert_eq!(mask.w_enc, ndarray::arr2(&[[0.0, 0.0], [1.0, 1.0]]));
    }
}
