//! Revisitation choice extraction.
//!
//! A choice event fires when the agent eats inside a previously visited
//! patch that it last left at least `revisit_gap` steps earlier. The
//! decision point is placed `decision_offset` steps before the eat; every
//! candidate predictor is computed strictly from records before it.
//!
//! Eat and drink events are read off the logged physiology levels (a level
//! can only rise through the corresponding action), so the extraction works
//! from a log alone.

use serde::Serialize;

use crate::behavior::patches::{patch_at, Patch};
use crate::telemetry::EpisodeLog;

#[derive(Debug, Clone, Copy)]
pub struct ChoiceParams {
    /// Steps before the eat event at which the decision is evaluated.
    pub decision_offset: usize,
    /// Minimum steps since last leaving a patch for a return to count.
    pub revisit_gap: usize,
    /// Drinks within this distance of a patch center count toward that patch.
    pub drink_radius: f64,
}

impl Default for ChoiceParams {
    fn default() -> Self {
        Self {
            decision_offset: 50,
            revisit_gap: 100,
            drink_radius: 8.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateRow {
    pub patch_id: usize,
    pub chosen: bool,
    pub eat_rate: f64,
    pub drink_rate: f64,
    pub pred_rate: f64,
    /// Steps since the candidate was last exited (larger = longer ago).
    pub recency: f64,
    pub dwelltime: f64,
    pub cow_count: f64,
    /// Mean position-prediction error while in the patch; absent without the
    /// auxiliary head.
    pub uncertainty: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChoiceEvent {
    pub episode_id: u64,
    pub agent_id: usize,
    pub eat_t: usize,
    pub decision_t: usize,
    pub chosen_patch: usize,
    pub candidates: Vec<CandidateRow>,
}

/// Per-patch cumulative history, enabling O(1) strictly-before-t queries.
struct PatchHistory {
    /// cumulative[t] = value over records [0, t) (exclusive prefix).
    time_in: Vec<u64>,
    eats_in: Vec<u64>,
    drinks_near: Vec<u64>,
    predator_steps: Vec<u64>,
    cow_sum: Vec<f64>,
    uncertainty_sum: Vec<f64>,
    uncertainty_steps: Vec<u64>,
    /// (enter_t, exit_t) of completed visits, exit exclusive.
    visits: Vec<(usize, usize)>,
    first_entry: Option<usize>,
}

impl PatchHistory {
    fn new(len: usize) -> Self {
        Self {
            time_in: vec![0; len + 1],
            eats_in: vec![0; len + 1],
            drinks_near: vec![0; len + 1],
            predator_steps: vec![0; len + 1],
            cow_sum: vec![0.0; len + 1],
            uncertainty_sum: vec![0.0; len + 1],
            uncertainty_steps: vec![0; len + 1],
            visits: Vec::new(),
            first_entry: None,
        }
    }

    /// Exit time of the last visit completed strictly before `t`.
    fn last_exit_before(&self, t: usize) -> Option<usize> {
        self.visits
            .iter()
            .rev()
            .find(|&&(_, exit)| exit <= t)
            .map(|&(_, exit)| exit)
    }

    /// Mean duration of visits completed before `t`, or the elapsed span of
    /// a visit still in progress.
    fn mean_dwell_before(&self, t: usize, ongoing_entry: Option<usize>) -> f64 {
        let completed: Vec<u64> = self
            .visits
            .iter()
            .filter(|&&(_, exit)| exit <= t)
            .map(|&(enter, exit)| (exit - enter) as u64)
            .collect();
        if !completed.is_empty() {
            completed.iter().sum::<u64>() as f64 / completed.len() as f64
        } else if let Some(enter) = ongoing_entry {
            (t.saturating_sub(enter)) as f64
        } else {
            0.0
        }
    }
}

/// Extract every revisitation choice event from one episode log.
/// `agent_id` tags events for the fixed-effect GLM.
pub fn extract_choice_events(
    log: &EpisodeLog,
    patches: &[Patch],
    agent_id: usize,
    params: &ChoiceParams,
) -> Vec<ChoiceEvent> {
    let n = log.records.len();
    if n == 0 || patches.is_empty() {
        return Vec::new();
    }
    let mut histories: Vec<PatchHistory> = patches.iter().map(|_| PatchHistory::new(n)).collect();
    let mut in_patch: Vec<Option<usize>> = Vec::with_capacity(n);
    let mut current: Option<(usize, usize)> = None; // (patch, enter_t)

    // Forward pass: build cumulative histories.
    for t in 0..n {
        let r = &log.records[t].env;
        let here = patch_at(patches, r.player_pos);
        in_patch.push(here);
        // Visit bookkeeping.
        match (current, here) {
            (Some((p, enter)), Some(q)) if p != q => {
                histories[p].visits.push((enter, t));
                histories[q].first_entry.get_or_insert(t);
                current = Some((q, t));
            }
            (Some((p, enter)), None) => {
                histories[p].visits.push((enter, t));
                current = None;
            }
            (None, Some(q)) => {
                histories[q].first_entry.get_or_insert(t);
                current = Some((q, t));
            }
            _ => {}
        }
        let ate = t > 0 && r.food > log.records[t - 1].env.food;
        let drank = t > 0 && r.drink > log.records[t - 1].env.drink;
        let predator = r.melee_on_screen || r.ranged_on_screen;
        for (pid, patch) in patches.iter().enumerate() {
            let h = &mut histories[pid];
            let inside = here == Some(pid);
            h.time_in[t + 1] = h.time_in[t] + u64::from(inside);
            h.eats_in[t + 1] = h.eats_in[t] + u64::from(inside && ate);
            let near = {
                let dx = f64::from(r.player_pos.x) - patch.center.0;
                let dy = f64::from(r.player_pos.y) - patch.center.1;
                (dx * dx + dy * dy).sqrt() <= params.drink_radius
            };
            h.drinks_near[t + 1] = h.drinks_near[t] + u64::from(near && drank);
            h.predator_steps[t + 1] = h.predator_steps[t] + u64::from(inside && predator);
            h.cow_sum[t + 1] = h.cow_sum[t]
                + if inside {
                    f64::from(r.num_passives_nearby)
                } else {
                    0.0
                };
            let (u_sum, u_steps) = if inside {
                if let Some((px, py)) = log.records[t].agent.predicted_delta {
                    let ex = px - f64::from(r.delta_x);
                    let ey = py - f64::from(r.delta_y);
                    ((ex * ex + ey * ey).sqrt(), 1)
                } else {
                    (0.0, 0)
                }
            } else {
                (0.0, 0)
            };
            h.uncertainty_sum[t + 1] = h.uncertainty_sum[t] + u_sum;
            h.uncertainty_steps[t + 1] = h.uncertainty_steps[t] + u_steps;
        }
    }
    if let Some((p, enter)) = current {
        histories[p].visits.push((enter, n));
    }

    let has_aux = log
        .records
        .iter()
        .any(|r| r.agent.predicted_delta.is_some());

    // Event pass.
    let mut events = Vec::new();
    for t in 1..n {
        let r = &log.records[t].env;
        let ate = r.food > log.records[t - 1].env.food;
        if !ate {
            continue;
        }
        let Some(p) = in_patch[t] else { continue };
        if t < params.decision_offset {
            continue;
        }
        let decision_t = t - params.decision_offset;
        // Revisit: the patch was left at least revisit_gap steps before the
        // eat (i.e. an earlier visit exists, excluding the ongoing one).
        let current_entry = histories[p]
            .visits
            .iter()
            .rev()
            .find(|&&(enter, exit)| enter <= t && t < exit)
            .map(|&(enter, _)| enter);
        let Some(entry) = current_entry else { continue };
        let Some(last_exit) = histories[p].last_exit_before(entry + 1) else {
            continue;
        };
        if t.saturating_sub(last_exit) < params.revisit_gap {
            continue;
        }
        // Candidates: every patch first entered before the decision point.
        let mut candidates = Vec::new();
        for (pid, h) in histories.iter().enumerate() {
            let Some(first) = h.first_entry else { continue };
            if first >= decision_t {
                continue;
            }
            let time_in = h.time_in[decision_t].max(1) as f64;
            let ongoing = in_patch[decision_t.saturating_sub(1).min(n - 1)]
                .filter(|&q| q == pid)
                .map(|_| {
                    h.visits
                        .iter()
                        .rev()
                        .find(|&&(enter, exit)| enter < decision_t && decision_t <= exit)
                        .map(|&(enter, _)| enter)
                        .unwrap_or(first)
                });
            candidates.push(CandidateRow {
                patch_id: pid,
                chosen: pid == p,
                eat_rate: h.eats_in[decision_t] as f64 / time_in,
                drink_rate: h.drinks_near[decision_t] as f64 / time_in,
                pred_rate: h.predator_steps[decision_t] as f64 / time_in,
                recency: h
                    .last_exit_before(decision_t)
                    .map_or(decision_t as f64, |exit| (decision_t - exit) as f64),
                dwelltime: h.mean_dwell_before(decision_t, ongoing),
                cow_count: h.cow_sum[decision_t] / time_in,
                uncertainty: has_aux
                    .then(|| h.uncertainty_sum[decision_t] / h.uncertainty_steps[decision_t].max(1) as f64),
            });
        }
        if candidates.iter().any(|c| c.chosen) && candidates.len() >= 2 {
            events.push(ChoiceEvent {
                episode_id: log.header.episode_id,
                agent_id,
                eat_t: t,
                decision_t,
                chosen_patch: p,
                candidates,
            });
        }
    }
    events
}
