//! Movement-phase segmentation.
//!
//! A simplified stand-in for Bayesian movement segmentation: per-step
//! features (mean step length, mean absolute turning angle) over a centered
//! moving window, clustered by seeded k-means with restarts, states
//! relabeled by ascending mean step length so state 1 is always the
//! shortest-range mode. Output metadata declares the simplification.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::telemetry::EpisodeLog;
use crate::worldgen::Pos;

#[derive(Debug, Clone, Copy)]
pub struct SegmentParams {
    pub window: usize,
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            window: 7,
            k: 3,
            restarts: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Segmentation {
    /// Per-step state label in 1..=k (state 1 = shortest steps).
    pub labels: Vec<usize>,
    /// Mean (step length, |turning angle|) per state, in label order.
    pub state_means: Vec<(f64, f64)>,
    /// All features identical: a single state was returned.
    pub degenerate: bool,
    pub method: &'static str,
}

/// Per-step movement features over a centered window (clamped at episode
/// edges): mean step length and mean absolute turning angle.
pub fn movement_features(positions: &[Pos], window: usize) -> Vec<(f64, f64)> {
    let n = positions.len();
    let half = window / 2;
    // Step length at t: displacement from t-1 to t (0 at t=0).
    let step_len: Vec<f64> = (0..n)
        .map(|t| {
            if t == 0 {
                0.0
            } else {
                f64::from(positions[t].x - positions[t - 1].x)
                    .hypot(f64::from(positions[t].y - positions[t - 1].y))
            }
        })
        .collect();
    // Turning angle at t: heading change between consecutive nonzero moves.
    let heading: Vec<Option<f64>> = (0..n)
        .map(|t| {
            if t == 0 {
                return None;
            }
            let dx = f64::from(positions[t].x - positions[t - 1].x);
            let dy = f64::from(positions[t].y - positions[t - 1].y);
            if dx == 0.0 && dy == 0.0 {
                None
            } else {
                Some(dy.atan2(dx))
            }
        })
        .collect();
    let turn: Vec<f64> = (0..n)
        .map(|t| {
            if t == 0 {
                return 0.0;
            }
            match (heading[t - 1], heading[t]) {
                (Some(a), Some(b)) => {
                    let mut d = b - a;
                    while d > std::f64::consts::PI {
                        d -= std::f64::consts::TAU;
                    }
                    while d < -std::f64::consts::PI {
                        d += std::f64::consts::TAU;
                    }
                    d.abs()
                }
                _ => 0.0,
            }
        })
        .collect();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(n);
            let len = (hi - lo) as f64;
            let mean_step = step_len[lo..hi].iter().sum::<f64>() / len;
            let mean_turn = turn[lo..hi].iter().sum::<f64>() / len;
            (mean_step, mean_turn)
        })
        .collect()
}

fn kmeans(
    features: &[(f64, f64)],
    k: usize,
    restarts: usize,
    stream: &mut RngStream,
) -> (Vec<usize>, Vec<(f64, f64)>) {
    let n = features.len();
    let mut best: Option<(f64, Vec<usize>, Vec<(f64, f64)>)> = None;
    for _ in 0..restarts {
        // Seed centroids from k distinct data points.
        let mut centroids: Vec<(f64, f64)> = Vec::with_capacity(k);
        let mut guard = 0;
        while centroids.len() < k && guard < 1000 {
            let candidate = features[stream.next_int_below(n as u64) as usize];
            if !centroids
                .iter()
                .any(|c| (c.0 - candidate.0).abs() < 1e-12 && (c.1 - candidate.1).abs() < 1e-12)
            {
                centroids.push(candidate);
            }
            guard += 1;
        }
        while centroids.len() < k {
            centroids.push(features[stream.next_int_below(n as u64) as usize]);
        }
        let mut assign = vec![0usize; n];
        for _iter in 0..100 {
            let mut changed = false;
            for (i, f) in features.iter().enumerate() {
                let mut nearest = 0;
                let mut best_d = f64::INFINITY;
                for (c, centroid) in centroids.iter().enumerate() {
                    let d = (f.0 - centroid.0).powi(2) + (f.1 - centroid.1).powi(2);
                    if d < best_d {
                        best_d = d;
                        nearest = c;
                    }
                }
                if assign[i] != nearest {
                    assign[i] = nearest;
                    changed = true;
                }
            }
            for c in 0..k {
                let members: Vec<&(f64, f64)> = features
                    .iter()
                    .zip(&assign)
                    .filter(|(_, &a)| a == c)
                    .map(|(f, _)| f)
                    .collect();
                if !members.is_empty() {
                    let m = members.len() as f64;
                    centroids[c] = (
                        members.iter().map(|f| f.0).sum::<f64>() / m,
                        members.iter().map(|f| f.1).sum::<f64>() / m,
                    );
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = features
            .iter()
            .zip(&assign)
            .map(|(f, &a)| (f.0 - centroids[a].0).powi(2) + (f.1 - centroids[a].1).powi(2))
            .sum();
        if best.as_ref().is_none_or(|(b, _, _)| inertia < *b) {
            best = Some((inertia, assign, centroids));
        }
    }
    let (_, assign, centroids) = best.expect("at least one restart");
    (assign, centroids)
}

/// Segment one episode's movement into k states.
pub fn segment_movement(log: &EpisodeLog, params: &SegmentParams) -> Result<Segmentation> {
    let positions: Vec<Pos> = log.records.iter().map(|r| r.env.player_pos).collect();
    segment_positions(&positions, params)
}

pub fn segment_positions(positions: &[Pos], params: &SegmentParams) -> Result<Segmentation> {
    if positions.len() <= params.window {
        return Err(Error::InvalidArgument(format!(
            "episode length {} must exceed the window {}",
            positions.len(),
            params.window
        )));
    }
    if params.k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let features = movement_features(positions, params.window);
    let first = features[0];
    if features
        .iter()
        .all(|f| (f.0 - first.0).abs() < 1e-12 && (f.1 - first.1).abs() < 1e-12)
    {
        return Ok(Segmentation {
            labels: vec![1; features.len()],
            state_means: vec![first],
            degenerate: true,
            method: "kmeans-steplength-turning",
        });
    }
    // Standardize both feature axes so step length does not dominate.
    let n = features.len() as f64;
    let mean = (
        features.iter().map(|f| f.0).sum::<f64>() / n,
        features.iter().map(|f| f.1).sum::<f64>() / n,
    );
    let sd = (
        (features.iter().map(|f| (f.0 - mean.0).powi(2)).sum::<f64>() / n)
            .sqrt()
            .max(1e-12),
        (features.iter().map(|f| (f.1 - mean.1).powi(2)).sum::<f64>() / n)
            .sqrt()
            .max(1e-12),
    );
    let standardized: Vec<(f64, f64)> = features
        .iter()
        .map(|f| ((f.0 - mean.0) / sd.0, (f.1 - mean.1) / sd.1))
        .collect();
    let mut stream = RngStream::derive(params.seed, "segment/kmeans");
    let (assign, _) = kmeans(&standardized, params.k, params.restarts, &mut stream);

    // Canonical relabeling by ascending mean raw step length.
    let mut cluster_step: Vec<(usize, f64)> = (0..params.k)
        .map(|c| {
            let members: Vec<f64> = features
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(f, _)| f.0)
                .collect();
            let mean = if members.is_empty() {
                f64::INFINITY
            } else {
                members.iter().sum::<f64>() / members.len() as f64
            };
            (c, mean)
        })
        .collect();
    cluster_step.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let mut relabel = vec![0usize; params.k];
    for (rank, &(c, _)) in cluster_step.iter().enumerate() {
        relabel[c] = rank + 1;
    }
    let labels: Vec<usize> = assign.iter().map(|&a| relabel[a]).collect();
    let state_means: Vec<(f64, f64)> = (1..=params.k)
        .map(|label| {
            let members: Vec<&(f64, f64)> = features
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == label)
                .map(|(f, _)| f)
                .collect();
            if members.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let m = members.len() as f64;
                (
                    members.iter().map(|f| f.0).sum::<f64>() / m,
                    members.iter().map(|f| f.1).sum::<f64>() / m,
                )
            }
        })
        .collect();
    Ok(Segmentation {
        labels,
        state_means,
        degenerate: false,
        method: "kmeans-steplength-turning",
    })
}
