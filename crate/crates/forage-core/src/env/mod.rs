//! The ForageWorld environment: step function, physiology, creatures,
//! observations, and the survival reward.

pub mod config;
pub mod observe;
pub mod state;
pub mod step;

pub use config::{EnvConfig, FovMode, WorldGenConfig};
pub use observe::{encode_observation, observe, EnvFields, Observation, ENCODED_LEN};
pub use state::{
    Action, ArenaState, Creature, CreatureKind, Facing, Inventory, Physiology, ACTION_COUNT,
    ALL_ACTIONS,
};
pub use step::{line_of_sight, reward, step, update_creatures, update_physiology, StepOutcome};
