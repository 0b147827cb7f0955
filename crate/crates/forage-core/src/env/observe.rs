//! Observation construction and encoding.
//!
//! The agent sees a 9x11 window of (tile, creature, item) codes centered on
//! itself, plus physiology levels, inventory, light level and facing. Under
//! the front-only field-of-view flag, cells behind the agent are masked to
//! the void code.

use serde::{Deserialize, Serialize};

use crate::env::config::FovMode;
use crate::env::state::{ArenaState, Action, CreatureKind, Facing};
use crate::worldgen::{Pos, TileKind};

pub const WINDOW_ROWS: usize = 9;
pub const WINDOW_COLS: usize = 11;
pub const WINDOW_CELLS: usize = WINDOW_ROWS * WINDOW_COLS;

const TILE_CODES: usize = 6; // void + 5 tile kinds
const CREATURE_CODES: usize = 4; // none + 3 creature kinds
const ITEM_CODES: usize = 2; // none + projectile

/// Length of the encoded observation vector. Fixed by the window geometry
/// and code books, independent of map size.
pub const ENCODED_LEN: usize =
    WINDOW_CELLS * (TILE_CODES + CREATURE_CODES + ITEM_CODES) + 4 + 5 + 1 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellTile {
    Void,
    Grass,
    Water,
    Tree,
    Stone,
    Sand,
}

impl CellTile {
    fn code(self) -> usize {
        match self {
            CellTile::Void => 0,
            CellTile::Grass => 1,
            CellTile::Water => 2,
            CellTile::Tree => 3,
            CellTile::Stone => 4,
            CellTile::Sand => 5,
        }
    }

    fn from_tile(kind: TileKind) -> Self {
        match kind {
            TileKind::Grass => CellTile::Grass,
            TileKind::Water => CellTile::Water,
            TileKind::Tree => CellTile::Tree,
            TileKind::Stone => CellTile::Stone,
            TileKind::Sand => CellTile::Sand,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellCreature {
    None,
    Cow,
    Melee,
    Ranged,
}

impl CellCreature {
    fn code(self) -> usize {
        match self {
            CellCreature::None => 0,
            CellCreature::Cow => 1,
            CellCreature::Melee => 2,
            CellCreature::Ranged => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellItem {
    None,
    Projectile,
}

impl CellItem {
    fn code(self) -> usize {
        match self {
            CellItem::None => 0,
            CellItem::Projectile => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowCell {
    pub tile: CellTile,
    pub creature: CellCreature,
    pub item: CellItem,
}

const VOID_CELL: WindowCell = WindowCell {
    tile: CellTile::Void,
    creature: CellCreature::None,
    item: CellItem::None,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Row-major 9x11 window; row 0 is the northmost visible row.
    pub window: [WindowCell; WINDOW_CELLS],
    pub health: i32,
    pub food: i32,
    pub drink: i32,
    pub energy: i32,
    pub max_level: i32,
    pub has_sword: bool,
    pub has_pick: bool,
    pub wood: u32,
    pub stone: u32,
    pub iron: u32,
    pub light_level: f64,
    pub facing: Facing,
}

/// World coordinates of window cell (row, col) for an agent at `agent`.
fn window_world_pos(agent: Pos, row: usize, col: usize) -> Pos {
    Pos::new(
        agent.x + col as i32 - (WINDOW_COLS as i32 / 2),
        agent.y + row as i32 - (WINDOW_ROWS as i32 / 2),
    )
}

/// Whether `p` lies strictly behind the agent relative to its facing.
fn behind(agent: Pos, facing: Facing, p: Pos) -> bool {
    match facing {
        Facing::North => p.y > agent.y,
        Facing::South => p.y < agent.y,
        Facing::East => p.x < agent.x,
        Facing::West => p.x > agent.x,
    }
}

/// Build the agent's observation of the current state.
pub fn observe(state: &ArenaState, fov_mode: FovMode) -> Observation {
    let agent = state.agent_pos;
    let mut window = [VOID_CELL; WINDOW_CELLS];
    for row in 0..WINDOW_ROWS {
        for col in 0..WINDOW_COLS {
            let p = window_world_pos(agent, row, col);
            if !state.layout.grid.in_bounds(p) {
                continue; // stays void
            }
            if fov_mode == FovMode::FrontOnly && behind(agent, state.facing, p) {
                continue; // masked to void
            }
            window[row * WINDOW_COLS + col] = WindowCell {
                tile: CellTile::from_tile(state.layout.grid.get(p)),
                creature: CellCreature::None,
                item: CellItem::None,
            };
        }
    }
    let in_window = |p: Pos| -> Option<usize> {
        let col = p.x - agent.x + WINDOW_COLS as i32 / 2;
        let row = p.y - agent.y + WINDOW_ROWS as i32 / 2;
        if (0..WINDOW_COLS as i32).contains(&col) && (0..WINDOW_ROWS as i32).contains(&row) {
            Some(row as usize * WINDOW_COLS + col as usize)
        } else {
            None
        }
    };
    for c in &state.creatures {
        if let Some(i) = in_window(c.pos) {
            if window[i].tile != CellTile::Void {
                window[i].creature = match c.kind {
                    CreatureKind::Cow => CellCreature::Cow,
                    CreatureKind::MeleePredator => CellCreature::Melee,
                    CreatureKind::RangedPredator => CellCreature::Ranged,
                };
            }
        }
    }
    for proj in &state.projectiles {
        if let Some(i) = in_window(proj.pos) {
            if window[i].tile != CellTile::Void {
                window[i].item = CellItem::Projectile;
            }
        }
    }
    Observation {
        window,
        health: state.physiology.health,
        food: state.physiology.food,
        drink: state.physiology.drink,
        energy: state.physiology.energy,
        max_level: state.config.max_level,
        has_sword: state.inventory.has_sword,
        has_pick: state.inventory.has_pick,
        wood: state.inventory.wood,
        stone: state.inventory.stone,
        iron: state.inventory.iron,
        light_level: state.light_level,
        facing: state.facing,
    }
}

/// Encode an observation as a fixed-length vector: one-hot codes per window
/// cell, physiology levels scaled to [0,1], inventory flags and clamped
/// counts, light level, one-hot facing.
pub fn encode_observation(obs: &Observation) -> Vec<f32> {
    let mut v = Vec::with_capacity(ENCODED_LEN);
    for cell in &obs.window {
        let mut tile = [0.0f32; TILE_CODES];
        tile[cell.tile.code()] = 1.0;
        v.extend_from_slice(&tile);
        let mut creature = [0.0f32; CREATURE_CODES];
        creature[cell.creature.code()] = 1.0;
        v.extend_from_slice(&creature);
        let mut item = [0.0f32; ITEM_CODES];
        item[cell.item.code()] = 1.0;
        v.extend_from_slice(&item);
    }
    let max = obs.max_level.max(1) as f32;
    v.push(obs.health as f32 / max);
    v.push(obs.food as f32 / max);
    v.push(obs.drink as f32 / max);
    v.push(obs.energy as f32 / max);
    v.push(if obs.has_sword { 1.0 } else { 0.0 });
    v.push(if obs.has_pick { 1.0 } else { 0.0 });
    v.push(obs.wood.min(9) as f32 / 9.0);
    v.push(obs.stone.min(9) as f32 / 9.0);
    v.push(obs.iron.min(9) as f32 / 9.0);
    v.push(obs.light_level as f32);
    let mut facing = [0.0f32; 4];
    facing[obs.facing.index()] = 1.0;
    v.extend_from_slice(&facing);
    debug_assert_eq!(v.len(), ENCODED_LEN);
    v
}

/// The environment-side variables logged at each timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvFields {
    pub action: Action,
    pub health: i32,
    pub food: i32,
    pub drink: i32,
    pub energy: i32,
    pub done: bool,
    pub is_sleeping: bool,
    pub is_resting: bool,
    pub player_pos: Pos,
    pub recover: u32,
    pub hunger: u32,
    pub thirst: u32,
    pub fatigue: u32,
    pub light_level: f64,
    pub distance_to_melee: i32,
    pub melee_on_screen: bool,
    pub distance_to_passive: i32,
    pub passive_on_screen: bool,
    pub distance_to_ranged: i32,
    pub ranged_on_screen: bool,
    pub num_melee_nearby: u32,
    pub num_passives_nearby: u32,
    pub num_ranged_nearby: u32,
    pub delta_x: i32,
    pub delta_y: i32,
    pub num_monsters_killed: u32,
    pub has_sword: bool,
    pub has_pick: bool,
    pub held_iron: u32,
}

impl EnvFields {
    /// Sentinel distance used when no creature of a kind exists.
    pub fn missing_distance(map_size: usize) -> i32 {
        2 * map_size as i32
    }

    pub fn capture(state: &ArenaState, action: Action, obs: &Observation) -> Self {
        let sentinel = Self::missing_distance(state.config.map_size);
        let mut distance_to_melee = sentinel;
        let mut distance_to_passive = sentinel;
        let mut distance_to_ranged = sentinel;
        for c in &state.creatures {
            let d = c.pos.l1(state.agent_pos);
            match c.kind {
                CreatureKind::Cow => distance_to_passive = distance_to_passive.min(d),
                CreatureKind::MeleePredator => distance_to_melee = distance_to_melee.min(d),
                CreatureKind::RangedPredator => distance_to_ranged = distance_to_ranged.min(d),
            }
        }
        // On-screen flags and counts come from the same (possibly masked)
        // window the agent sees, so they stay consistent with it.
        let mut num_melee = 0u32;
        let mut num_passive = 0u32;
        let mut num_ranged = 0u32;
        for cell in &obs.window {
            match cell.creature {
                CellCreature::Cow => num_passive += 1,
                CellCreature::Melee => num_melee += 1,
                CellCreature::Ranged => num_ranged += 1,
                CellCreature::None => {}
            }
        }
        let (delta_x, delta_y) = state.delta_xy();
        Self {
            action,
            health: state.physiology.health,
            food: state.physiology.food,
            drink: state.physiology.drink,
            energy: state.physiology.energy,
            done: state.done,
            is_sleeping: state.sleeping,
            is_resting: false,
            player_pos: state.agent_pos,
            recover: state.physiology.recover_timer,
            hunger: state.physiology.hunger_timer,
            thirst: state.physiology.thirst_timer,
            fatigue: state.physiology.fatigue_timer,
            light_level: state.light_level,
            distance_to_melee,
            melee_on_screen: num_melee > 0,
            distance_to_passive,
            passive_on_screen: num_passive > 0,
            distance_to_ranged,
            ranged_on_screen: num_ranged > 0,
            num_melee_nearby: num_melee,
            num_passives_nearby: num_passive,
            num_ranged_nearby: num_ranged,
            delta_x,
            delta_y,
            num_monsters_killed: state.num_monsters_killed,
            has_sword: state.inventory.has_sword,
            has_pick: state.inventory.has_pick,
            held_iron: state.inventory.iron,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::config::EnvConfig;
    use crate::env::state::ArenaState;
    use crate::worldgen::generate_arena;

    fn default_state() -> ArenaState {
        let cfg = EnvConfig::default();
        let layout = generate_arena(1, &cfg).unwrap();
        ArenaState::new(layout, cfg, 5)
    }

    #[test]
    fn interior_window_has_no_void() {
        let state = default_state();
        assert_eq!(state.agent_pos, Pos::new(48, 48));
        let obs = observe(&state, FovMode::Centered);
        assert!(obs.window.iter().all(|c| c.tile != CellTile::Void));
    }

    #[test]
    fn corner_window_has_void_cells() {
        let mut state = default_state();
        state.agent_pos = Pos::new(0, 0);
        let obs = observe(&state, FovMode::Centered);
        assert!(obs.window.iter().any(|c| c.tile == CellTile::Void));
        // Top-left corner: everything above and left of the agent is void.
        assert_eq!(obs.window[0].tile, CellTile::Void);
    }

    #[test]
    fn front_only_masks_rows_behind() {
        let mut state = default_state();
        state.facing = Facing::North;
        let obs = observe(&state, FovMode::FrontOnly);
        // Agent row is 4; rows 5..9 are strictly south and must be void.
        for row in 5..WINDOW_ROWS {
            for col in 0..WINDOW_COLS {
                assert_eq!(
                    obs.window[row * WINDOW_COLS + col].tile,
                    CellTile::Void,
                    "row {row} col {col} not masked"
                );
            }
        }
        // The agent's own row stays visible.
        assert!(obs.window[4 * WINDOW_COLS..5 * WINDOW_COLS]
            .iter()
            .any(|c| c.tile != CellTile::Void));
    }

    #[test]
    fn encoding_length_and_tile_onehots() {
        let state = default_state();
        let obs = observe(&state, FovMode::Centered);
        let v = encode_observation(&obs);
        assert_eq!(v.len(), ENCODED_LEN);
        // Exactly one tile one-hot per window cell.
        let per_cell = TILE_CODES + CREATURE_CODES + ITEM_CODES;
        for cell in 0..WINDOW_CELLS {
            let tile_slice = &v[cell * per_cell..cell * per_cell + TILE_CODES];
            let ones = tile_slice.iter().filter(|&&x| x == 1.0).count();
            assert_eq!(ones, 1);
        }
        // Full physiology encodes to 1.0.
        let base = WINDOW_CELLS * per_cell;
        for i in 0..4 {
            assert_eq!(v[base + i], 1.0);
        }
    }

    #[test]
    fn equal_observations_encode_equally() {
        let state = default_state();
        let a = encode_observation(&observe(&state, FovMode::Centered));
        let b = encode_observation(&observe(&state, FovMode::Centered));
        assert_eq!(a, b);
    }

    #[test]
    fn missing_creatures_use_sentinel_distance() {
        let mut state = default_state();
        state.creatures.clear();
        let obs = observe(&state, FovMode::Centered);
        let fields = EnvFields::capture(&state, Action::Noop, &obs);
        assert_eq!(fields.distance_to_passive, 192);
        assert_eq!(fields.distance_to_melee, 192);
        assert_eq!(fields.distance_to_ranged, 192);
        assert!(!fields.passive_on_screen);
    }
}
