//! Spatial and behavioral metrics of the training-dynamics panel.

use serde::Serialize;

use crate::telemetry::EpisodeLog;
use crate::worldgen::Pos;

/// Shannon entropy (natural log) of the empirical distribution over occupied
/// square bins of side `bin_size`.
pub fn occupancy_entropy(positions: &[Pos], bin_size: usize) -> f64 {
    assert!(!positions.is_empty(), "occupancy entropy needs positions");
    assert!(bin_size >= 1);
    let mut counts: std::collections::HashMap<(i32, i32), u64> = std::collections::HashMap::new();
    for p in positions {
        let bin = (
            p.x.div_euclid(bin_size as i32),
            p.y.div_euclid(bin_size as i32),
        );
        *counts.entry(bin).or_insert(0) += 1;
    }
    let n = positions.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Circular variance `1 - |mean resultant vector|` of the movement headings
/// (displacement angles between consecutive positions; stationary steps are
/// skipped). `None` when every step is stationary.
pub fn angular_variance(positions: &[Pos]) -> Option<f64> {
    let mut sum_cos = 0.0;
    let mut sum_sin = 0.0;
    let mut n = 0usize;
    for w in positions.windows(2) {
        let dx = f64::from(w[1].x - w[0].x);
        let dy = f64::from(w[1].y - w[0].y);
        if dx == 0.0 && dy == 0.0 {
            continue;
        }
        let theta = dy.atan2(dx);
        sum_cos += theta.cos();
        sum_sin += theta.sin();
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let r = (sum_cos * sum_cos + sum_sin * sum_sin).sqrt() / n as f64;
    Some(1.0 - r)
}

/// One row of the per-checkpoint metric panel, averaged over episodes.
#[derive(Debug, Clone, Serialize)]
pub struct MetricPanelRow {
    /// Mean prediction error normalized by distance from origin; NaN without
    /// the auxiliary head.
    pub spatial_uncertainty: f64,
    pub early_distance: f64,
    pub late_distance: f64,
    pub occupancy_entropy: f64,
    /// NaN when no episode moved at all.
    pub angular_variance: f64,
    /// Fraction of steps with any predator on screen.
    pub predator_exposure: f64,
    /// 0, 1 or 2 tools crafted by episode end, averaged over episodes.
    pub tool_rate: f64,
    pub mean_food: f64,
    pub mean_drink: f64,
    pub eat_rate: f64,
    pub drink_rate: f64,
    pub sleep_rate: f64,
    pub n_episodes: usize,
}

/// Compute the metric panel over the episode logs of one checkpoint:
/// per-episode metrics, then the mean across episodes.
pub fn metric_panel(logs: &[EpisodeLog], bin_size: usize) -> MetricPanelRow {
    assert!(!logs.is_empty(), "metric panel needs at least one episode");
    let mut acc = MetricPanelRow {
        spatial_uncertainty: 0.0,
        early_distance: 0.0,
        late_distance: 0.0,
        occupancy_entropy: 0.0,
        angular_variance: 0.0,
        predator_exposure: 0.0,
        tool_rate: 0.0,
        mean_food: 0.0,
        mean_drink: 0.0,
        eat_rate: 0.0,
        drink_rate: 0.0,
        sleep_rate: 0.0,
        n_episodes: logs.len(),
    };
    let mut uncertainty_episodes = 0usize;
    let mut variance_episodes = 0usize;
    for log in logs {
        let n = log.records.len();
        let positions: Vec<Pos> = log.records.iter().map(|r| r.env.player_pos).collect();
        let dist = |r: &crate::telemetry::LogRecord| {
            f64::from(r.env.delta_x).hypot(f64::from(r.env.delta_y))
        };
        let quarter = (n / 4).max(1);
        acc.early_distance +=
            log.records[..quarter].iter().map(dist).sum::<f64>() / quarter as f64;
        acc.late_distance +=
            log.records[n - quarter..].iter().map(dist).sum::<f64>() / quarter as f64;
        acc.occupancy_entropy += occupancy_entropy(&positions, bin_size);
        if let Some(v) = angular_variance(&positions) {
            acc.angular_variance += v;
            variance_episodes += 1;
        }
        let mut unc_sum = 0.0;
        let mut unc_n = 0usize;
        let mut exposure = 0usize;
        let mut eats = 0usize;
        let mut drinks = 0usize;
        let mut sleeps = 0usize;
        for (t, r) in log.records.iter().enumerate() {
            if let Some((px, py)) = r.agent.predicted_delta {
                let err = (px - f64::from(r.env.delta_x)).hypot(py - f64::from(r.env.delta_y));
                unc_sum += err / dist(r).max(1.0);
                unc_n += 1;
            }
            if r.env.melee_on_screen || r.env.ranged_on_screen {
                exposure += 1;
            }
            if t > 0 {
                eats += usize::from(r.env.food > log.records[t - 1].env.food);
                drinks += usize::from(r.env.drink > log.records[t - 1].env.drink);
            }
            sleeps += usize::from(r.env.is_sleeping);
            acc.mean_food += f64::from(r.env.food);
            acc.mean_drink += f64::from(r.env.drink);
        }
        if unc_n > 0 {
            acc.spatial_uncertainty += unc_sum / unc_n as f64;
            uncertainty_episodes += 1;
        }
        acc.predator_exposure += exposure as f64 / n as f64;
        let last = &log.records[n - 1].env;
        acc.tool_rate += f64::from(u8::from(last.has_sword) + u8::from(last.has_pick));
        acc.eat_rate += eats as f64 / n as f64;
        acc.drink_rate += drinks as f64 / n as f64;
        acc.sleep_rate += sleeps as f64 / n as f64;
        acc.mean_food /= n as f64;
        acc.mean_drink /= n as f64;
    }
    let k = logs.len() as f64;
    acc.spatial_uncertainty = if uncertainty_episodes > 0 {
        acc.spatial_uncertainty / uncertainty_episodes as f64
    } else {
        f64::NAN
    };
    acc.angular_variance = if variance_episodes > 0 {
        acc.angular_variance / variance_episodes as f64
    } else {
        f64::NAN
    };
    acc.early_distance /= k;
    acc.late_distance /= k;
    acc.occupancy_entropy /= k;
    acc.predator_exposure /= k;
    acc.tool_rate /= k;
    acc.mean_food /= k;
    acc.mean_drink /= k;
    acc.eat_rate /= k;
    acc.drink_rate /= k;
    acc.sleep_rate /= k;
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::synthetic::SyntheticEpisode;

    #[test]
    fn entropy_single_bin_is_zero() {
        let positions = vec![Pos::new(3, 3); 50];
        assert_eq!(occupancy_entropy(&positions, 4), 0.0);
    }

    #[test]
    fn entropy_uniform_four_bins_is_ln4() {
        let mut positions = Vec::new();
        for (bx, by) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            for _ in 0..25 {
                positions.push(Pos::new(bx * 4, by * 4));
            }
        }
        let h = occupancy_entropy(&positions, 4);
        assert!((h - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_bounded_by_ln_bins_touched() {
        let positions: Vec<Pos> = (0..100).map(|i| Pos::new(i % 13, (i * 7) % 17)).collect();
        let h = occupancy_entropy(&positions, 4);
        let bins: std::collections::HashSet<(i32, i32)> = positions
            .iter()
            .map(|p| (p.x.div_euclid(4), p.y.div_euclid(4)))
            .collect();
        assert!(h <= (bins.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn constant_heading_zero_variance() {
        let positions: Vec<Pos> = (0..20).map(|i| Pos::new(i, 0)).collect();
        assert!(angular_variance(&positions).unwrap().abs() < 1e-12);
    }

    #[test]
    fn opposite_headings_full_variance() {
        // Alternating east/west: the resultant cancels.
        let mut positions = vec![Pos::new(0, 0)];
        for i in 0..20 {
            let x = if i % 2 == 0 { 1 } else { 0 };
            positions.push(Pos::new(x, 0));
        }
        let v = angular_variance(&positions).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_cardinal_headings_full_variance() {
        let mut positions = vec![Pos::new(0, 0)];
        let mut p = Pos::new(0, 0);
        for i in 0..40 {
            match i % 4 {
                0 => p.x += 1,
                1 => p.y += 1,
                2 => p.x -= 1,
                _ => p.y -= 1,
            }
            positions.push(p);
        }
        let v = angular_variance(&positions).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_trajectory_has_undefined_variance() {
        let positions = vec![Pos::new(5, 5); 30];
        assert!(angular_variance(&positions).is_none());
    }

    #[test]
    fn stationary_panel_is_all_zero() {
        let positions = vec![Pos::new(48, 48); 100];
        let log = SyntheticEpisode::new(Pos::new(48, 48), positions).build();
        let row = metric_panel(&[log], 4);
        assert_eq!(row.early_distance, 0.0);
        assert_eq!(row.late_distance, 0.0);
        assert_eq!(row.occupancy_entropy, 0.0);
        assert_eq!(row.predator_exposure, 0.0);
        assert!(row.angular_variance.is_nan());
        assert!(row.spatial_uncertainty.is_nan());
    }

    #[test]
    fn tool_rate_counts_crafted_tools() {
        let positions = vec![Pos::new(48, 48); 10];
        let log = SyntheticEpisode::new(Pos::new(48, 48), positions)
            .tools(vec![true; 10], vec![false; 10])
            .build();
        let row = metric_panel(&[log], 4);
        assert_eq!(row.tool_rate, 1.0);
    }

    #[test]
    fn eat_rate_counts_level_rises() {
        let positions = vec![Pos::new(48, 48); 100];
        let mut food = vec![5; 100];
        food[30] = 9;
        food[31] = 9;
        let log = SyntheticEpisode::new(Pos::new(48, 48), positions)
            .food_series(food)
            .build();
        let row = metric_panel(&[log], 4);
        assert!((row.eat_rate - 0.01).abs() < 1e-12);
    }
}
