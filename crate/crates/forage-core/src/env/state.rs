//! World state: agent physiology, creatures, inventory, timers.

use serde::{Deserialize, Serialize};

use crate::env::config::EnvConfig;
use crate::rng::RngStream;
use crate::worldgen::{neighbors4, ArenaLayout, Pos};

/// Cardinal facing; move actions update it even when movement is blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Facing {
    North,
    South,
    East,
    West,
}

impl Facing {
    pub fn delta(self) -> (i32, i32) {
        match self {
            Facing::North => (0, -1),
            Facing::South => (0, 1),
            Facing::East => (1, 0),
            Facing::West => (-1, 0),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Facing::North => 0,
            Facing::South => 1,
            Facing::East => 2,
            Facing::West => 3,
        }
    }
}

/// The discrete action set. The declaration order fixes policy-head indexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MoveUp,
    MoveDown,
    MoveLeft,
    MoveRight,
    Interact,
    Sleep,
    CraftSword,
    CraftPick,
    Noop,
}

pub const ACTION_COUNT: usize = 9;

pub const ALL_ACTIONS: [Action; ACTION_COUNT] = [
    Action::MoveUp,
    Action::MoveDown,
    Action::MoveLeft,
    Action::MoveRight,
    Action::Interact,
    Action::Sleep,
    Action::CraftSword,
    Action::CraftPick,
    Action::Noop,
];

impl Action {
    pub fn index(self) -> usize {
        ALL_ACTIONS.iter().position(|&a| a == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<Action> {
        ALL_ACTIONS.get(i).copied()
    }

    pub fn move_facing(self) -> Option<Facing> {
        match self {
            Action::MoveUp => Some(Facing::North),
            Action::MoveDown => Some(Facing::South),
            Action::MoveLeft => Some(Facing::West),
            Action::MoveRight => Some(Facing::East),
            _ => None,
        }
    }
}

/// Agent physiology: four levels in `[0, max_level]` plus tick accumulators.
///
/// `hunger/thirst/fatigue/recover` are the logged Table-style timers;
/// `starve_ticks` and `sleep_ticks` are internal accumulators for starvation
/// damage and sleep energy restoration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Physiology {
    pub health: i32,
    pub food: i32,
    pub drink: i32,
    pub energy: i32,
    pub hunger_timer: u32,
    pub thirst_timer: u32,
    pub fatigue_timer: u32,
    pub recover_timer: u32,
    pub starve_ticks: u32,
    pub sleep_ticks: u32,
}

impl Physiology {
    pub fn full(max_level: i32) -> Self {
        Self {
            health: max_level,
            food: max_level,
            drink: max_level,
            energy: max_level,
            hunger_timer: 0,
            thirst_timer: 0,
            fatigue_timer: 0,
            recover_timer: 0,
            starve_ticks: 0,
            sleep_ticks: 0,
        }
    }

    pub fn alive(&self) -> bool {
        self.health > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreatureKind {
    Cow,
    MeleePredator,
    RangedPredator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Creature {
    pub kind: CreatureKind,
    pub pos: Pos,
    pub health: i32,
    /// Index of the spawn point a cow diffuses from (cows only).
    pub home_spawn: usize,
    /// Steps until a ranged predator may fire again.
    pub cooldown: u32,
    /// Steps since a predator last had line of sight to the agent.
    pub steps_without_sight: u32,
}

/// A ranged predator's projectile in flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projectile {
    pub pos: Pos,
    pub dir: Facing,
    pub traveled: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Inventory {
    pub has_sword: bool,
    pub has_pick: bool,
    pub wood: u32,
    pub stone: u32,
    pub iron: u32,
}

/// Triangular day/night cycle in `[0, 1]`; starts at full daylight.
pub fn light_at(t: u64, period: u32) -> f64 {
    let phase = (t % u64::from(period)) as f64 / f64::from(period);
    2.0 * (phase - 0.5).abs()
}

/// Full mutable world state for one episode.
#[derive(Debug, Clone)]
pub struct ArenaState {
    pub layout: ArenaLayout,
    pub config: EnvConfig,
    pub physiology: Physiology,
    pub agent_pos: Pos,
    pub facing: Facing,
    pub sleeping: bool,
    pub inventory: Inventory,
    pub creatures: Vec<Creature>,
    pub projectiles: Vec<Projectile>,
    pub light_level: f64,
    pub t: u64,
    pub done: bool,
    pub num_monsters_killed: u32,
    pub episode_id: u64,
    pub start_pos: Pos,
    pub(crate) rng: RngStream,
}

impl ArenaState {
    /// Start an episode on `layout`. All creature/physiology randomness draws
    /// from streams derived from `episode_seed`, so the episode is a pure
    /// function of `(layout, config, episode_seed, actions)`.
    pub fn new(layout: ArenaLayout, config: EnvConfig, episode_seed: u64) -> Self {
        let mut rng = RngStream::derive(episode_seed, "env/creatures");
        let episode_id = RngStream::derive(episode_seed, "env/id").next_u64();
        let start_pos = layout.agent_start;
        let mut creatures = Vec::new();
        let mut occupied: std::collections::HashSet<Pos> = std::collections::HashSet::new();
        for (spawn_idx, &sp) in layout.cow_spawn_points.iter().enumerate() {
            for _ in 0..config.initial_cows_per_spawn {
                if creatures.len() >= config.max_cows {
                    break;
                }
                let mut placed = None;
                let mut options = vec![sp];
                options.extend(neighbors4(sp));
                for cand in options {
                    if layout.grid.passable(cand) && cand != start_pos && !occupied.contains(&cand)
                    {
                        placed = Some(cand);
                        break;
                    }
                }
                if let Some(p) = placed {
                    occupied.insert(p);
                    creatures.push(Creature {
                        kind: CreatureKind::Cow,
                        pos: p,
                        health: 1,
                        home_spawn: spawn_idx,
                        cooldown: 0,
                        steps_without_sight: 0,
                    });
                }
            }
        }
        let light_level = light_at(0, config.light_period);
        let max_level = config.max_level;
        // Consume one draw so episode ids and creature streams stay decoupled
        // from initial placement.
        let _ = rng.next_u64();
        Self {
            layout,
            config,
            physiology: Physiology::full(max_level),
            agent_pos: start_pos,
            facing: Facing::North,
            sleeping: false,
            inventory: Inventory::default(),
            creatures,
            projectiles: Vec::new(),
            light_level,
            t: 0,
            done: false,
            num_monsters_killed: 0,
            episode_id,
            start_pos,
            rng,
        }
    }

    pub fn live_cows(&self) -> usize {
        self.creatures
            .iter()
            .filter(|c| c.kind == CreatureKind::Cow)
            .count()
    }

    pub fn creature_at(&self, p: Pos) -> Option<usize> {
        self.creatures.iter().position(|c| c.pos == p)
    }

    /// Displacement from the episode start position.
    pub fn delta_xy(&self) -> (i32, i32) {
        (
            self.agent_pos.x - self.start_pos.x,
            self.agent_pos.y - self.start_pos.y,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::generate_arena;

    #[test]
    fn action_indexing_round_trips() {
        for (i, &a) in ALL_ACTIONS.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), Some(a));
        }
        assert_eq!(Action::from_index(ACTION_COUNT), None);
    }

    #[test]
    fn light_cycle_triangular() {
        let period = 3000;
        assert_eq!(light_at(0, period), 1.0);
        assert_eq!(light_at(1500, period), 0.0);
        assert_eq!(light_at(3000, period), 1.0);
        let quarter = light_at(750, period);
        assert!((quarter - 0.5).abs() < 1e-12);
    }

    #[test]
    fn new_episode_starts_full_and_centered() {
        let cfg = EnvConfig::default();
        let layout = generate_arena(1, &cfg).unwrap();
        let state = ArenaState::new(layout, cfg.clone(), 99);
        assert_eq!(state.agent_pos, state.start_pos);
        assert_eq!(state.physiology.health, cfg.max_level);
        assert!(state.live_cows() <= cfg.max_cows);
        assert!(state.live_cows() > 0);
        assert_eq!(state.t, 0);
        assert!(!state.done);
    }

    #[test]
    fn same_episode_seed_same_initial_state() {
        let cfg = EnvConfig::default();
        let layout = generate_arena(2, &cfg).unwrap();
        let a = ArenaState::new(layout.clone(), cfg.clone(), 7);
        let b = ArenaState::new(layout, cfg, 7);
        assert_eq!(a.creatures, b.creatures);
        assert_eq!(a.episode_id, b.episode_id);
    }
}
