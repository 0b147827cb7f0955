//! Environment configuration.
//!
//! Every constant that affects simulation is held here and echoed into every
//! log header, so a log file alone is enough to replay its episode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Field-of-view mode for the 9x11 observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FovMode {
    /// Default: window centered on the agent.
    Centered,
    /// Cells behind the agent (relative to facing) are masked to void.
    FrontOnly,
}

/// Procedural generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldGenConfig {
    /// Perlin lattice spacing of the base octave, in cells.
    pub lattice_spacing: f64,
    /// Number of noise octaves (each halves the spacing, halves the amplitude).
    pub octaves: u32,
    /// Water wherever the water field exceeds this.
    pub water_threshold: f64,
    /// Trees wherever the vegetation field exceeds this.
    pub tree_threshold: f64,
    /// Per-cell probability of a scattered stone on open ground.
    pub stone_scatter_prob: f64,
    /// Food-patch regions are where the patch field exceeds this.
    pub patch_threshold: f64,
    /// Minimum pairwise distance between cow spawn points, in cells.
    pub min_spawn_separation: f64,
    /// Flood fill from the start must reach at least this fraction of
    /// passable cells.
    pub connectivity_fraction: f64,
    /// Regeneration attempts with a perturbed sub-seed before giving up.
    pub max_retries: u32,
}

impl Default for WorldGenConfig {
    fn default() -> Self {
        Self {
            lattice_spacing: 12.0,
            octaves: 2,
            water_threshold: 0.23,
            tree_threshold: 0.23,
            stone_scatter_prob: 0.03,
            patch_threshold: 0.12,
            min_spawn_separation: 10.0,
            connectivity_fraction: 0.9,
            max_retries: 8,
        }
    }
}

/// Full environment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Arena side length in cells (square).
    pub map_size: usize,
    /// Arena-wide live cow cap.
    pub max_cows: usize,
    /// Number of cow spawn points placed inside food-patch regions.
    pub n_spawn_points: usize,
    /// Cows placed at each spawn point when the episode starts.
    pub initial_cows_per_spawn: usize,
    pub fov_mode: FovMode,
    /// Maximum value of each physiology level (health, food, drink, energy).
    pub max_level: i32,
    /// Ticks between losing one point of food while awake.
    pub hunger_period: u32,
    /// Ticks between losing one point of drink while awake.
    pub thirst_period: u32,
    /// Ticks between losing one point of energy while awake.
    pub fatigue_period: u32,
    /// Ticks between losing one point of health while starving or dehydrated.
    pub starvation_period: u32,
    /// Ticks to regain one point of health while food, drink, energy all > 0.
    pub recover_period: u32,
    /// Ticks asleep to regain one point of energy.
    pub sleep_restore_period: u32,
    /// Food gained by eating a cow.
    pub eat_food_gain: i32,
    /// Drink gained per drink action (lakes are unlimited).
    pub drink_gain: i32,
    /// Contact damage from a melee predator (halved to `melee_damage_vs_sword`
    /// when the agent carries a sword and retaliates first).
    pub melee_damage: i32,
    pub melee_damage_vs_sword: i32,
    /// Damage from a ranged predator projectile.
    pub ranged_damage: i32,
    /// Agent attack damage without / with a sword.
    pub attack_damage: i32,
    pub sword_attack_damage: i32,
    pub melee_health: i32,
    pub ranged_health: i32,
    /// Predators pursue when within this L1 radius and line of sight.
    pub pursuit_radius: i32,
    /// Predators despawn after this many steps without line of sight.
    pub predator_lifetime: u32,
    /// Probability a predator that is not pursuing random-walks this step.
    pub predator_move_prob: f64,
    /// Per-step spawn probability at full darkness (scaled by 1 - light).
    pub melee_spawn_prob: f64,
    pub ranged_spawn_prob: f64,
    pub max_melee: usize,
    pub max_ranged: usize,
    /// Steps between ranged predator shots.
    pub ranged_cooldown: u32,
    /// Projectile cells per step and maximum flight range.
    pub projectile_speed: i32,
    pub projectile_range: i32,
    /// Per-step probability that a cow random-walks one cell.
    pub cow_move_prob: f64,
    /// Per vacant slot per step respawn probability.
    pub cow_respawn_prob: f64,
    /// Period of the triangular day/night light cycle, in steps.
    pub light_period: u32,
    pub predators_enabled: bool,
    pub ranged_enabled: bool,
    /// Ablation: when false, predators never damage the agent.
    pub predator_damage_enabled: bool,
    /// Hard episode cap in steps.
    pub episode_cap: u64,
    pub worldgen: WorldGenConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            map_size: 96,
            max_cows: 108,
            n_spawn_points: 12,
            initial_cows_per_spawn: 3,
            fov_mode: FovMode::Centered,
            max_level: 9,
            hunger_period: 25,
            thirst_period: 17,
            fatigue_period: 30,
            starvation_period: 20,
            recover_period: 30,
            sleep_restore_period: 8,
            eat_food_gain: 4,
            drink_gain: 1,
            melee_damage: 2,
            melee_damage_vs_sword: 1,
            ranged_damage: 1,
            attack_damage: 1,
            sword_attack_damage: 3,
            melee_health: 3,
            ranged_health: 2,
            pursuit_radius: 8,
            predator_lifetime: 200,
            predator_move_prob: 0.5,
            melee_spawn_prob: 0.002,
            ranged_spawn_prob: 0.001,
            max_melee: 3,
            max_ranged: 2,
            ranged_cooldown: 8,
            projectile_speed: 2,
            projectile_range: 12,
            cow_move_prob: 0.05,
            cow_respawn_prob: 0.002,
            light_period: 3000,
            predators_enabled: true,
            ranged_enabled: true,
            predator_damage_enabled: true,
            episode_cap: 100_000,
            worldgen: WorldGenConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, message: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    key: format!("env.{key}"),
                    message: message.to_owned(),
                })
            }
        };
        check(self.map_size >= 16, "map_size", "must be >= 16")?;
        check(self.max_cows >= 1, "max_cows", "must be >= 1")?;
        check(self.n_spawn_points >= 1, "n_spawn_points", "must be >= 1")?;
        check(self.max_level >= 1, "max_level", "must be >= 1")?;
        check(self.episode_cap >= 1, "episode_cap", "must be >= 1")?;
        check(
            (0.0..=1.0).contains(&self.cow_move_prob),
            "cow_move_prob",
            "must be in [0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.cow_respawn_prob),
            "cow_respawn_prob",
            "must be in [0, 1]",
        )?;
        check(self.light_period >= 2, "light_period", "must be >= 2")?;
        check(self.eat_food_gain >= 1, "eat_food_gain", "must be >= 1")?;
        check(self.drink_gain >= 1, "drink_gain", "must be >= 1")?;
        for (period, key) in [
            (self.hunger_period, "hunger_period"),
            (self.thirst_period, "thirst_period"),
            (self.fatigue_period, "fatigue_period"),
            (self.starvation_period, "starvation_period"),
            (self.recover_period, "recover_period"),
            (self.sleep_restore_period, "sleep_restore_period"),
        ] {
            check(period >= 1, key, "must be >= 1")?;
        }
        Ok(())
    }

    /// Threshold below which sleep may start: energy strictly below half max.
    pub fn sleep_threshold(&self) -> i32 {
        (self.max_level + 1) / 2
    }
}
