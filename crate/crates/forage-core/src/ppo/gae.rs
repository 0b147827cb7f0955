//! Generalized Advantage Estimation.

/// Backward-recursion GAE over one environment's rollout segment.
///
/// `delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t` with
/// `A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}`; the value after
/// the last step is `bootstrap_value`. Returns `(advantages, returns)` with
/// `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for ti in (0..n).rev() {
        let not_done = if dones[ti] { 0.0 } else { 1.0 };
        let next_value = if ti + 1 < n {
            values[ti + 1]
        } else {
            bootstrap_value
        };
        let delta = rewards[ti] + gamma * next_value * not_done - values[ti];
        acc = delta + gamma * lambda * not_done * acc;
        advantages[ti] = acc;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    (advantages, returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    /// Direct summation of the (gamma*lambda)^k series, the definition GAE's
    /// recursion must reproduce. Episode ends cut the series.
    pub(crate) fn gae_series_oracle(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap_value: f64,
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let delta = |ti: usize| {
            let not_done = if dones[ti] { 0.0 } else { 1.0 };
            let next_value = if ti + 1 < n {
                values[ti + 1]
            } else {
                bootstrap_value
            };
            rewards[ti] + gamma * next_value * not_done - values[ti]
        };
        (0..n)
            .map(|start| {
                let mut total = 0.0;
                let mut weight = 1.0;
                for ti in start..n {
                    total += weight * delta(ti);
                    if dones[ti] {
                        break;
                    }
                    weight *= gamma * lambda;
                }
                total
            })
            .collect()
    }

    #[test]
    fn single_terminal_step() {
        let (adv, ret) = compute_gae(&[1.0], &[0.5], &[true], 0.0, 0.99, 0.8);
        assert_eq!(adv, vec![0.5]);
        assert_eq!(ret, vec![1.0]);
    }

    #[test]
    fn lambda_zero_gives_td_errors() {
        let rewards = [0.3, -0.1, 0.2];
        let values = [0.5, 0.4, 0.1];
        let dones = [false, false, false];
        let (adv, _) = compute_gae(&rewards, &values, &dones, 0.25, 0.9, 0.0);
        for ti in 0..3 {
            let next = if ti + 1 < 3 { values[ti + 1] } else { 0.25 };
            let delta = rewards[ti] + 0.9 * next - values[ti];
            assert!((adv[ti] - delta).abs() < 1e-15);
        }
    }

    #[test]
    fn recursion_matches_series_oracle() {
        let mut s = RngStream::derive(11, "gae");
        for case in 0..1000 {
            let n = 20;
            let rewards: Vec<f64> = (0..n).map(|_| s.next_gaussian()).collect();
            let values: Vec<f64> = (0..n).map(|_| s.next_gaussian()).collect();
            let dones: Vec<bool> = (0..n).map(|_| s.next_uniform() < 0.15).collect();
            let bootstrap = s.next_gaussian();
            let gamma = 0.9 + 0.09 * s.next_uniform();
            let lambda = s.next_uniform();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
            let oracle = gae_series_oracle(&rewards, &values, &dones, bootstrap, gamma, lambda);
            for ti in 0..n {
                assert!(
                    (adv[ti] - oracle[ti]).abs() < 1e-10,
                    "case {case} t={ti}: {} vs {}",
                    adv[ti],
                    oracle[ti]
                );
                assert!((ret[ti] - (oracle[ti] + values[ti])).abs() < 1e-10);
            }
        }
    }
}
