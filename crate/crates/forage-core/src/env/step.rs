//! The ForageWorld step function and its sub-updates.
//!
//! Update order within one step is fixed and replay depends on it:
//! action resolution, physiology timers, creature updates, clock/light,
//! reward, termination.

use std::collections::HashSet;

use crate::env::config::EnvConfig;
use crate::env::observe::{observe, EnvFields};
use crate::env::state::{
    Action, ArenaState, Creature, CreatureKind, Facing, Physiology, Projectile, light_at,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::worldgen::{Pos, TileGrid, TileKind};

/// Physiology threshold of the survival reward. The reward is positive only
/// when every level sits strictly above this value.
pub const REWARD_THRESHOLD: i32 = 5;

/// Survival reward: `0.1 * (1 + sign(health-5) + sign(food-5) + sign(drink-5)
/// + sign(energy-5))` with `sign(0) = 0`.
pub fn reward(p: &Physiology) -> f64 {
    let s = |v: i32| f64::from((v - REWARD_THRESHOLD).signum());
    0.1 * (1.0 + s(p.health) + s(p.food) + s(p.drink) + s(p.energy))
}

/// What `step` reports back to the driver besides the new observation.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    /// A cow was consumed this step.
    pub ate: bool,
    /// Water was drunk this step.
    pub drank: bool,
}

/// Advance the world by one step. Returns the env-side log fields for the
/// completed step. Stepping a finished episode is a contract violation.
pub fn step(state: &mut ArenaState, action: Action) -> Result<(StepOutcome, EnvFields)> {
    if state.done {
        return Err(Error::EnvContract(
            "step called on a finished episode".into(),
        ));
    }

    // 1. Action resolution.
    let (ate, drank) = apply_action(state, action);

    // 2. Physiology timers.
    let sleeping = state.sleeping;
    state.physiology = update_physiology(&state.physiology, sleeping, &state.config);
    if state.sleeping && state.physiology.energy >= state.config.max_level {
        state.sleeping = false;
    }

    // 3. Creature updates (uses the light level of the previous step).
    update_creatures(state);

    // 4. Clock and light.
    state.t += 1;
    state.light_level = light_at(state.t, state.config.light_period);

    // 5. Reward.
    let r = reward(&state.physiology);

    // 6. Termination.
    if state.physiology.health <= 0 || state.t >= state.config.episode_cap {
        state.done = true;
    }

    // 7. Env-side record fields.
    let obs = observe(state, state.config.fov_mode);
    let fields = EnvFields::capture(state, action, &obs);

    Ok((
        StepOutcome {
            reward: r,
            done: state.done,
            ate,
            drank,
        },
        fields,
    ))
}

fn clamp_level(v: i32, max: i32) -> i32 {
    v.clamp(0, max)
}

fn apply_action(state: &mut ArenaState, action: Action) -> (bool, bool) {
    let mut ate = false;
    let mut drank = false;

    // Any non-sleep action wakes the agent.
    if action != Action::Sleep {
        state.sleeping = false;
    }

    match action {
        Action::MoveUp | Action::MoveDown | Action::MoveLeft | Action::MoveRight => {
            let facing = action.move_facing().unwrap();
            state.facing = facing;
            let (dx, dy) = facing.delta();
            let target = Pos::new(state.agent_pos.x + dx, state.agent_pos.y + dy);
            if state.layout.grid.passable(target) && state.creature_at(target).is_none() {
                state.agent_pos = target;
            }
        }
        Action::Interact => {
            let (dx, dy) = state.facing.delta();
            let target = Pos::new(state.agent_pos.x + dx, state.agent_pos.y + dy);
            if !state.layout.grid.in_bounds(target) {
                return (ate, drank);
            }
            if let Some(ci) = state.creature_at(target) {
                match state.creatures[ci].kind {
                    CreatureKind::Cow => {
                        state.creatures.swap_remove(ci);
                        state.physiology.food = clamp_level(
                            state.physiology.food + state.config.eat_food_gain,
                            state.config.max_level,
                        );
                        ate = true;
                    }
                    CreatureKind::MeleePredator | CreatureKind::RangedPredator => {
                        let dmg = if state.inventory.has_sword {
                            state.config.sword_attack_damage
                        } else {
                            state.config.attack_damage
                        };
                        state.creatures[ci].health -= dmg;
                        if state.creatures[ci].health <= 0 {
                            state.creatures.swap_remove(ci);
                            state.num_monsters_killed += 1;
                        }
                    }
                }
            } else {
                match state.layout.grid.get(target) {
                    TileKind::Water => {
                        state.physiology.drink = clamp_level(
                            state.physiology.drink + state.config.drink_gain,
                            state.config.max_level,
                        );
                        drank = true;
                    }
                    TileKind::Tree => {
                        state.inventory.wood += 1;
                    }
                    TileKind::Stone => {
                        state.inventory.stone += 1;
                        let border = target.x == 0
                            || target.y == 0
                            || target.x as usize == state.layout.grid.width - 1
                            || target.y as usize == state.layout.grid.height - 1;
                        if state.inventory.has_pick && !border {
                            // A pick removes the obstacle and exposes iron.
                            state.layout.grid.set(target, TileKind::Grass);
                            state.inventory.iron += 1;
                        }
                    }
                    TileKind::Grass | TileKind::Sand => {}
                }
            }
        }
        Action::Sleep => {
            if state.sleeping {
                // Stay asleep until energy is restored.
            } else if state.physiology.energy < state.config.sleep_threshold() {
                state.sleeping = true;
                state.physiology.sleep_ticks = 0;
            }
        }
        Action::CraftSword => {
            if !state.inventory.has_sword && state.inventory.wood >= 1 && state.inventory.stone >= 1
            {
                state.inventory.wood -= 1;
                state.inventory.stone -= 1;
                state.inventory.has_sword = true;
            }
        }
        Action::CraftPick => {
            if !state.inventory.has_pick && state.inventory.wood >= 1 && state.inventory.stone >= 1
            {
                state.inventory.wood -= 1;
                state.inventory.stone -= 1;
                state.inventory.has_pick = true;
            }
        }
        Action::Noop => {}
    }
    (ate, drank)
}

/// One tick of hunger/thirst/fatigue/recovery bookkeeping.
///
/// Hunger and thirst run whether or not the agent sleeps; fatigue is paused
/// while sleeping and sleep instead restores energy. Starvation or
/// dehydration (food or drink at zero) damages health every
/// `starvation_period` ticks; health regenerates every `recover_period` ticks
/// while food, drink and energy are all above zero (energy is not required
/// while asleep).
pub fn update_physiology(p: &Physiology, sleeping: bool, config: &EnvConfig) -> Physiology {
    let mut p = *p;
    let max = config.max_level;

    p.hunger_timer += 1;
    if p.hunger_timer >= config.hunger_period {
        p.food = clamp_level(p.food - 1, max);
        p.hunger_timer = 0;
    }
    p.thirst_timer += 1;
    if p.thirst_timer >= config.thirst_period {
        p.drink = clamp_level(p.drink - 1, max);
        p.thirst_timer = 0;
    }
    if sleeping {
        p.sleep_ticks += 1;
        if p.sleep_ticks >= config.sleep_restore_period {
            p.energy = clamp_level(p.energy + 1, max);
            p.sleep_ticks = 0;
        }
    } else {
        p.fatigue_timer += 1;
        if p.fatigue_timer >= config.fatigue_period {
            p.energy = clamp_level(p.energy - 1, max);
            p.fatigue_timer = 0;
        }
    }

    if p.food == 0 || p.drink == 0 {
        p.starve_ticks += 1;
        p.recover_timer = 0;
        if p.starve_ticks >= config.starvation_period {
            p.health = clamp_level(p.health - 1, max);
            p.starve_ticks = 0;
        }
    } else {
        p.starve_ticks = 0;
        let can_recover = p.health < max && p.food > 0 && p.drink > 0 && (sleeping || p.energy > 0);
        if can_recover {
            p.recover_timer += 1;
            if p.recover_timer >= config.recover_period {
                p.health = clamp_level(p.health + 1, max);
                p.recover_timer = 0;
            }
        } else {
            p.recover_timer = 0;
        }
    }
    p
}

/// True iff the segment between the centers of `a` and `b` passes through no
/// sight-blocking cell. Grid traversal in exact integer arithmetic: a cell
/// counts as crossed when the segment's interior enters it (exact corner
/// crossings step diagonally without touching the two side cells), and the
/// endpoints themselves are excluded. The crossed-cell set is symmetric in
/// `a` and `b`.
pub fn line_of_sight(a: Pos, b: Pos, grid: &TileGrid) -> bool {
    if a == b {
        return true;
    }
    let blocks = |p: Pos| grid.in_bounds(p) && grid.get(p).blocks_sight();

    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let sx = dx.signum();
    let sy = dy.signum();
    let nx = i64::from(dx.abs());
    let ny = i64::from(dy.abs());
    let mut ix = 0i64;
    let mut iy = 0i64;
    let mut p = a;
    while ix < nx || iy < ny {
        // Next boundary along x at (ix + 1/2)/nx of the segment, along y at
        // (iy + 1/2)/ny; compare cross-multiplied to stay exact.
        let tx = (2 * ix + 1) * ny;
        let ty = (2 * iy + 1) * nx;
        if tx == ty {
            p = Pos::new(p.x + sx, p.y + sy);
            ix += 1;
            iy += 1;
        } else if tx < ty {
            p = Pos::new(p.x + sx, p.y);
            ix += 1;
        } else {
            p = Pos::new(p.x, p.y + sy);
            iy += 1;
        }
        if p == b {
            return true;
        }
        if blocks(p) {
            return false;
        }
    }
    true
}

/// Greedy one-cell pursuit move: step along the axis with the larger gap
/// (ties broken toward x), falling back to the other axis when blocked.
fn pursuit_move(from: Pos, target: Pos, grid: &TileGrid, occupied: &HashSet<Pos>) -> Pos {
    let dx = target.x - from.x;
    let dy = target.y - from.y;
    let step_x = Pos::new(from.x + dx.signum(), from.y);
    let step_y = Pos::new(from.x, from.y + dy.signum());
    let free = |p: Pos| grid.passable(p) && !occupied.contains(&p) && p != target;
    let (first, second) = if dx.abs() >= dy.abs() {
        (step_x, step_y)
    } else {
        (step_y, step_x)
    };
    if dx != 0 || dy != 0 {
        if first != from && free(first) {
            return first;
        }
        if second != from && free(second) {
            return second;
        }
    }
    from
}

fn random_walk(from: Pos, grid: &TileGrid, occupied: &HashSet<Pos>, agent: Pos, rng: &mut RngStream) -> Pos {
    let dirs = [
        Facing::North,
        Facing::South,
        Facing::East,
        Facing::West,
    ];
    let dir = dirs[rng.next_int_below(4) as usize];
    let (dx, dy) = dir.delta();
    let target = Pos::new(from.x + dx, from.y + dy);
    if grid.passable(target) && !occupied.contains(&target) && target != agent {
        target
    } else {
        from
    }
}

/// Cow diffusion and respawning, predator pursuit/combat/spawning, and
/// projectile flight. Iteration order is creature index order; all draws come
/// from the state's creature stream, so the update is deterministic.
pub fn update_creatures(state: &mut ArenaState) {
    let agent = state.agent_pos;
    let config = state.config.clone();
    let mut occupied: HashSet<Pos> = state.creatures.iter().map(|c| c.pos).collect();
    let mut agent_damage = 0i32;
    let mut despawn: Vec<usize> = Vec::new();
    let mut fired: Vec<Projectile> = Vec::new();

    for i in 0..state.creatures.len() {
        let c = state.creatures[i];
        match c.kind {
            CreatureKind::Cow => {
                if state.rng.next_bool(config.cow_move_prob) {
                    let next = random_walk(c.pos, &state.layout.grid, &occupied, agent, &mut state.rng);
                    if next != c.pos {
                        occupied.remove(&c.pos);
                        occupied.insert(next);
                        state.creatures[i].pos = next;
                    }
                }
            }
            CreatureKind::MeleePredator | CreatureKind::RangedPredator => {
                let sees = c.pos.l1(agent) <= config.pursuit_radius
                    && line_of_sight(c.pos, agent, &state.layout.grid);
                if sees {
                    state.creatures[i].steps_without_sight = 0;
                } else {
                    state.creatures[i].steps_without_sight += 1;
                    if state.creatures[i].steps_without_sight >= config.predator_lifetime {
                        despawn.push(i);
                        continue;
                    }
                }
                if c.kind == CreatureKind::RangedPredator {
                    if state.creatures[i].cooldown > 0 {
                        state.creatures[i].cooldown -= 1;
                    }
                    let aligned = c.pos.x == agent.x || c.pos.y == agent.y;
                    if sees
                        && aligned
                        && c.pos.l1(agent) <= config.projectile_range
                        && state.creatures[i].cooldown == 0
                    {
                        let dir = if c.pos.x == agent.x {
                            if agent.y > c.pos.y {
                                Facing::South
                            } else {
                                Facing::North
                            }
                        } else if agent.x > c.pos.x {
                            Facing::East
                        } else {
                            Facing::West
                        };
                        fired.push(Projectile {
                            pos: c.pos,
                            dir,
                            traveled: 0,
                        });
                        state.creatures[i].cooldown = config.ranged_cooldown;
                        continue;
                    }
                }
                if sees {
                    if c.pos.l1(agent) == 1 {
                        if c.kind == CreatureKind::MeleePredator {
                            agent_damage += if state.inventory.has_sword {
                                config.melee_damage_vs_sword
                            } else {
                                config.melee_damage
                            };
                        }
                    } else {
                        let next = pursuit_move(c.pos, agent, &state.layout.grid, &occupied);
                        if next != c.pos {
                            occupied.remove(&c.pos);
                            occupied.insert(next);
                            state.creatures[i].pos = next;
                        }
                    }
                } else if state.rng.next_bool(config.predator_move_prob) {
                    let next = random_walk(c.pos, &state.layout.grid, &occupied, agent, &mut state.rng);
                    if next != c.pos {
                        occupied.remove(&c.pos);
                        occupied.insert(next);
                        state.creatures[i].pos = next;
                    }
                }
            }
        }
    }

    for &i in despawn.iter().rev() {
        occupied.remove(&state.creatures[i].pos);
        state.creatures.swap_remove(i);
    }

    // Projectiles fly after predators act.
    let mut kept: Vec<Projectile> = Vec::new();
    for mut proj in state.projectiles.drain(..).chain(fired) {
        let (dx, dy) = proj.dir.delta();
        let mut alive = true;
        for _ in 0..config.projectile_speed {
            let next = Pos::new(proj.pos.x + dx, proj.pos.y + dy);
            proj.pos = next;
            proj.traveled += 1;
            if !state.layout.grid.in_bounds(next) || state.layout.grid.get(next).blocks_sight() {
                alive = false;
                break;
            }
            if next == agent {
                agent_damage += config.ranged_damage;
                alive = false;
                break;
            }
            if proj.traveled >= config.projectile_range {
                alive = false;
                break;
            }
        }
        if alive {
            kept.push(proj);
        }
    }
    state.projectiles = kept;

    // Cow respawning: one draw per vacant slot under the arena-wide cap.
    let live = state.live_cows();
    if live < config.max_cows && !state.layout.cow_spawn_points.is_empty() {
        let vacant = config.max_cows - live;
        for _ in 0..vacant {
            if state.rng.next_bool(config.cow_respawn_prob) {
                let idx = state
                    .rng
                    .next_int_below(state.layout.cow_spawn_points.len() as u64)
                    as usize;
                let sp = state.layout.cow_spawn_points[idx];
                // Spawn on the point itself; fall back to a neighbor when the
                // point is taken.
                let mut options = vec![sp];
                options.extend(crate::worldgen::neighbors4(sp));
                for cand in options {
                    if state.layout.grid.passable(cand)
                        && cand != agent
                        && !occupied.contains(&cand)
                    {
                        occupied.insert(cand);
                        state.creatures.push(Creature {
                            kind: CreatureKind::Cow,
                            pos: cand,
                            health: 1,
                            home_spawn: idx,
                            cooldown: 0,
                            steps_without_sight: 0,
                        });
                        break;
                    }
                }
            }
        }
    }

    // Predator spawning near food patches, more likely in darkness.
    if config.predators_enabled && !state.layout.cow_spawn_points.is_empty() {
        let darkness = 1.0 - state.light_level;
        let n_melee = state
            .creatures
            .iter()
            .filter(|c| c.kind == CreatureKind::MeleePredator)
            .count();
        if n_melee < config.max_melee && state.rng.next_bool(config.melee_spawn_prob * darkness) {
            try_spawn_predator(state, CreatureKind::MeleePredator, &mut occupied);
        }
        if config.ranged_enabled {
            let n_ranged = state
                .creatures
                .iter()
                .filter(|c| c.kind == CreatureKind::RangedPredator)
                .count();
            if n_ranged < config.max_ranged
                && state.rng.next_bool(config.ranged_spawn_prob * darkness)
            {
                try_spawn_predator(state, CreatureKind::RangedPredator, &mut occupied);
            }
        }
    }

    if agent_damage > 0 && config.predator_damage_enabled {
        state.physiology.health = clamp_level(
            state.physiology.health - agent_damage,
            config.max_level,
        );
        state.sleeping = false;
    }
}

fn try_spawn_predator(state: &mut ArenaState, kind: CreatureKind, occupied: &mut HashSet<Pos>) {
    let idx = state
        .rng
        .next_int_below(state.layout.cow_spawn_points.len() as u64) as usize;
    let sp = state.layout.cow_spawn_points[idx];
    for _ in 0..10 {
        let dx = state.rng.next_int_below(9) as i32 - 4;
        let dy = state.rng.next_int_below(9) as i32 - 4;
        let p = Pos::new(sp.x + dx, sp.y + dy);
        if state.layout.grid.passable(p) && p != state.agent_pos && !occupied.contains(&p) {
            occupied.insert(p);
            state.creatures.push(Creature {
                kind,
                pos: p,
                health: if kind == CreatureKind::MeleePredator {
                    state.config.melee_health
                } else {
                    state.config.ranged_health
                },
                home_spawn: idx,
                cooldown: 0,
                steps_without_sight: 0,
            });
            return;
        }
    }
}
