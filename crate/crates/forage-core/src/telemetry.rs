//! Per-timestep trajectory logging, durable persistence, replay verification.
//!
//! Each episode produces a pair of files: a columnar text table of records
//! (`<episode_id>.records.csv`) and a dense binary sidecar of recurrent
//! hidden states (`<episode_id>.h.bin`). The records file embeds the full
//! environment config and all seeds in a `#`-prefixed JSON header line, so a
//! log alone is enough to re-simulate its episode and verify it byte level.
//!
//! Hidden states are logged post-update: row i holds the `h_t` that produced
//! the action of record i (subject to the optional logging stride).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::config::EnvConfig;
use crate::env::observe::EnvFields;
use crate::env::state::{Action, ArenaState};
use crate::env::step::step;
use crate::error::{Error, Result};
use crate::worldgen::{generate_arena, Pos};

pub const FORMAT_VERSION: u32 = 1;
const HBIN_MAGIC: u32 = 0x4657_4853; // "FWHS"

/// Column names of the records table, fixed by the format version.
/// Two-dimensional quantities are split into explicit X/Y columns.
pub const COLUMNS: &[&str] = &[
    "Action",
    "Health",
    "Food",
    "Drink",
    "Energy",
    "Done",
    "Is Sleeping",
    "Is Resting",
    "Player Position X",
    "Player Position Y",
    "Recover",
    "Hunger",
    "Thirst",
    "Fatigue",
    "Light Level",
    "Distance to Melee",
    "Melee on Screen",
    "Distance to Passive",
    "Passive on Screen",
    "Distance to Ranged",
    "Ranged on Screen",
    "Num Melee Nearby",
    "Num Passives Nearby",
    "Num Ranged Nearby",
    "Delta X",
    "Delta Y",
    "Predicted Delta X",
    "Predicted Delta Y",
    "Num Monsters Killed",
    "Has Sword",
    "Has Pick",
    "Held Iron",
    "Value",
    "Entropy",
    "Log Probability",
    "Episode ID",
    "Hidden State Ref",
];

/// Agent-side per-step quantities (not reproduced by environment replay).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentFields {
    pub value: f64,
    pub entropy: f64,
    pub log_probability: f64,
    /// Auxiliary-head position prediction; `None` when the aux head is
    /// disabled (encoded as NaN columns).
    pub predicted_delta: Option<(f64, f64)>,
}

impl AgentFields {
    /// Fields for a uniform-random policy over `n` actions.
    pub fn random_policy(n: usize) -> Self {
        let ln_n = (n as f64).ln();
        Self {
            value: 0.0,
            entropy: ln_n,
            log_probability: -ln_n,
            predicted_delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub env: EnvFields,
    pub agent: AgentFields,
    pub episode_id: u64,
    /// Row index into the hidden-state matrix, or -1 when the stride skipped
    /// this step.
    pub hidden_state_ref: i64,
}

/// Header embedded in every records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub master_seed: u64,
    pub arena_seed: u64,
    pub episode_seed: u64,
    pub episode_id: u64,
    pub checkpoint_id: String,
    pub hidden_dim: usize,
    pub hidden_stride: usize,
    pub env: EnvConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
    /// Row-major T x hidden_dim matrix of logged hidden states.
    pub hidden_states: Vec<Vec<f32>>,
}

impl EpisodeLog {
    pub fn new(header: LogHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
            hidden_states: Vec::new(),
        }
    }

    fn finalized(&self) -> bool {
        self.records.last().is_some_and(|r| r.env.done)
    }

    /// Append a record and (stride permitting) its hidden state atomically.
    pub fn append_record(&mut self, mut record: LogRecord, h: Option<&[f32]>) -> Result<()> {
        if self.finalized() {
            return Err(Error::EnvContract(
                "append to a finalized episode log".into(),
            ));
        }
        match h {
            Some(h) => {
                if h.len() != self.header.hidden_dim {
                    return Err(Error::LogFormat(format!(
                        "hidden state length {} != hidden_dim {}",
                        h.len(),
                        self.header.hidden_dim
                    )));
                }
                record.hidden_state_ref = self.hidden_states.len() as i64;
                self.hidden_states.push(h.to_vec());
            }
            None => record.hidden_state_ref = -1,
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records_path(dir: &Path, episode_id: u64) -> PathBuf {
        dir.join(format!("{episode_id:016x}.records.csv"))
    }

    pub fn hidden_path(dir: &Path, episode_id: u64) -> PathBuf {
        dir.join(format!("{episode_id:016x}.h.bin"))
    }
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NaN".to_owned(),
    }
}

fn record_to_line(r: &LogRecord) -> String {
    let e = &r.env;
    let a = &r.agent;
    let (px, py) = (e.player_pos.x, e.player_pos.y);
    let pred_x = fmt_opt(a.predicted_delta.map(|p| p.0));
    let pred_y = fmt_opt(a.predicted_delta.map(|p| p.1));
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        e.action.index(),
        e.health,
        e.food,
        e.drink,
        e.energy,
        fmt_bool(e.done),
        fmt_bool(e.is_sleeping),
        fmt_bool(e.is_resting),
        px,
        py,
        e.recover,
        e.hunger,
        e.thirst,
        e.fatigue,
        e.light_level,
        e.distance_to_melee,
        fmt_bool(e.melee_on_screen),
        e.distance_to_passive,
        fmt_bool(e.passive_on_screen),
        e.distance_to_ranged,
        fmt_bool(e.ranged_on_screen),
        e.num_melee_nearby,
        e.num_passives_nearby,
        e.num_ranged_nearby,
        e.delta_x,
        e.delta_y,
        pred_x,
        pred_y,
        e.num_monsters_killed,
        fmt_bool(e.has_sword),
        fmt_bool(e.has_pick),
        e.held_iron,
        a.value,
        a.entropy,
        a.log_probability,
        r.episode_id,
        r.hidden_state_ref,
    )
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(Error::LogFormat(format!("bad boolean `{s}`"))),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, col: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::LogFormat(format!("bad value `{s}` in column `{col}`")))
}

fn line_to_record(line: &str, t: usize) -> Result<LogRecord> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != COLUMNS.len() {
        return Err(Error::LogFormat(format!(
            "row {t}: {} cells, expected {} (truncated file?)",
            cells.len(),
            COLUMNS.len()
        )));
    }
    let mut i = 0usize;
    let mut next = || {
        let c = cells[i];
        i += 1;
        c
    };
    let action_idx: usize = parse_num(next(), "Action")?;
    let action = Action::from_index(action_idx)
        .ok_or_else(|| Error::LogFormat(format!("bad action index {action_idx}")))?;
    let health = parse_num(next(), "Health")?;
    let food = parse_num(next(), "Food")?;
    let drink = parse_num(next(), "Drink")?;
    let energy = parse_num(next(), "Energy")?;
    let done = parse_bool(next())?;
    let is_sleeping = parse_bool(next())?;
    let is_resting = parse_bool(next())?;
    let px: i32 = parse_num(next(), "Player Position X")?;
    let py: i32 = parse_num(next(), "Player Position Y")?;
    let recover = parse_num(next(), "Recover")?;
    let hunger = parse_num(next(), "Hunger")?;
    let thirst = parse_num(next(), "Thirst")?;
    let fatigue = parse_num(next(), "Fatigue")?;
    let light_level = parse_num(next(), "Light Level")?;
    let distance_to_melee = parse_num(next(), "Distance to Melee")?;
    let melee_on_screen = parse_bool(next())?;
    let distance_to_passive = parse_num(next(), "Distance to Passive")?;
    let passive_on_screen = parse_bool(next())?;
    let distance_to_ranged = parse_num(next(), "Distance to Ranged")?;
    let ranged_on_screen = parse_bool(next())?;
    let num_melee_nearby = parse_num(next(), "Num Melee Nearby")?;
    let num_passives_nearby = parse_num(next(), "Num Passives Nearby")?;
    let num_ranged_nearby = parse_num(next(), "Num Ranged Nearby")?;
    let delta_x = parse_num(next(), "Delta X")?;
    let delta_y = parse_num(next(), "Delta Y")?;
    let pred_x: f64 = parse_num(next(), "Predicted Delta X")?;
    let pred_y: f64 = parse_num(next(), "Predicted Delta Y")?;
    let num_monsters_killed = parse_num(next(), "Num Monsters Killed")?;
    let has_sword = parse_bool(next())?;
    let has_pick = parse_bool(next())?;
    let held_iron = parse_num(next(), "Held Iron")?;
    let value = parse_num(next(), "Value")?;
    let entropy = parse_num(next(), "Entropy")?;
    let log_probability = parse_num(next(), "Log Probability")?;
    let episode_id = parse_num(next(), "Episode ID")?;
    let hidden_state_ref = parse_num(next(), "Hidden State Ref")?;

    let predicted_delta = if pred_x.is_nan() || pred_y.is_nan() {
        None
    } else {
        Some((pred_x, pred_y))
    };
    Ok(LogRecord {
        env: EnvFields {
            action,
            health,
            food,
            drink,
            energy,
            done,
            is_sleeping,
            is_resting,
            player_pos: Pos::new(px, py),
            recover,
            hunger,
            thirst,
            fatigue,
            light_level,
            distance_to_melee,
            melee_on_screen,
            distance_to_passive,
            passive_on_screen,
            distance_to_ranged,
            ranged_on_screen,
            num_melee_nearby,
            num_passives_nearby,
            num_ranged_nearby,
            delta_x,
            delta_y,
            num_monsters_killed,
            has_sword,
            has_pick,
            held_iron,
        },
        agent: AgentFields {
            value,
            entropy,
            log_probability,
            predicted_delta,
        },
        episode_id,
        hidden_state_ref,
    })
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Write the record table and hidden-state sidecar into `dir`.
pub fn write_log(log: &EpisodeLog, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let records_path = EpisodeLog::records_path(dir, log.header.episode_id);
    let hidden_path = EpisodeLog::hidden_path(dir, log.header.episode_id);

    let mut text = String::new();
    text.push_str(&format!(
        "# forage-records v{} {}\n",
        FORMAT_VERSION,
        serde_json::to_string(&log.header)?
    ));
    text.push_str(&COLUMNS.join(","));
    text.push('\n');
    for r in &log.records {
        text.push_str(&record_to_line(r));
        text.push('\n');
    }
    fs::write(&records_path, text)?;

    let rows = log.hidden_states.len() as u32;
    let cols = log.header.hidden_dim as u32;
    let mut payload: Vec<u8> = Vec::with_capacity(16 + rows as usize * cols as usize * 4 + 8);
    payload.extend_from_slice(&HBIN_MAGIC.to_le_bytes());
    payload.extend_from_slice(&rows.to_le_bytes());
    payload.extend_from_slice(&cols.to_le_bytes());
    payload.extend_from_slice(&(log.header.hidden_stride as u32).to_le_bytes());
    for row in &log.hidden_states {
        for &x in row {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    let checksum = fnv1a64(&payload);
    payload.extend_from_slice(&checksum.to_le_bytes());
    let mut f = fs::File::create(&hidden_path)?;
    f.write_all(&payload)?;
    Ok((records_path, hidden_path))
}

/// Read a log pair back. Detects version mismatch, truncation, checksum
/// failure, and record/state stream mismatch.
pub fn read_log(records_path: &Path) -> Result<EpisodeLog> {
    let text = fs::read_to_string(records_path)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::LogFormat("empty records file".into()))?;
    let rest = header_line
        .strip_prefix("# forage-records v")
        .ok_or_else(|| Error::LogFormat("missing header line".into()))?;
    let (version_str, json) = rest
        .split_once(' ')
        .ok_or_else(|| Error::LogFormat("malformed header line".into()))?;
    let version: u32 = parse_num(version_str, "format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::LogFormat(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let header: LogHeader = serde_json::from_str(json)?;
    let column_line = lines
        .next()
        .ok_or_else(|| Error::LogFormat("missing column header".into()))?;
    if column_line != COLUMNS.join(",") {
        return Err(Error::LogFormat("column header mismatch".into()));
    }
    let mut records = Vec::new();
    for (t, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        records.push(line_to_record(line, t)?);
    }

    let hidden_path = EpisodeLog::hidden_path(
        records_path.parent().unwrap_or_else(|| Path::new(".")),
        header.episode_id,
    );
    let mut bytes = Vec::new();
    fs::File::open(&hidden_path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 {
        return Err(Error::LogFormat("hidden-state file truncated".into()));
    }
    let (payload, checksum_bytes) = bytes.split_at(bytes.len() - 8);
    let expected = u64::from_le_bytes(checksum_bytes.try_into().unwrap());
    if fnv1a64(payload) != expected {
        return Err(Error::LogFormat("hidden-state checksum failure".into()));
    }
    let magic = u32::from_le_bytes(payload[0..4].try_into().unwrap());
    if magic != HBIN_MAGIC {
        return Err(Error::LogFormat("bad hidden-state magic".into()));
    }
    let rows = u32::from_le_bytes(payload[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(payload[8..12].try_into().unwrap()) as usize;
    let stride = u32::from_le_bytes(payload[12..16].try_into().unwrap()) as usize;
    if cols != header.hidden_dim || stride != header.hidden_stride {
        return Err(Error::LogFormat(
            "hidden-state dims disagree with records header".into(),
        ));
    }
    if payload.len() != 16 + rows * cols * 4 {
        return Err(Error::LogFormat("hidden-state file truncated".into()));
    }
    let mut hidden_states = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut row = Vec::with_capacity(cols);
        for c in 0..cols {
            let off = 16 + (r * cols + c) * 4;
            row.push(f32::from_le_bytes(
                payload[off..off + 4].try_into().unwrap(),
            ));
        }
        hidden_states.push(row);
    }
    // Pairing invariant between the record stream and the state stream.
    let referenced = records.iter().filter(|r| r.hidden_state_ref >= 0).count();
    if referenced != rows {
        return Err(Error::LogFormat(format!(
            "{referenced} hidden-state refs but {rows} stored rows (corrupt pair)"
        )));
    }
    for r in &records {
        if r.hidden_state_ref >= rows as i64 {
            return Err(Error::LogFormat("hidden-state ref out of range".into()));
        }
    }
    Ok(EpisodeLog {
        header,
        records,
        hidden_states,
    })
}

/// Re-simulate the episode from its seeds, feeding the logged actions, and
/// compare every environment field of every record. Returns `Ok(())` when
/// the log replays exactly; otherwise the first divergent timestep and field.
pub fn replay_verify(log: &EpisodeLog) -> Result<()> {
    if log.header.format_version != FORMAT_VERSION {
        return Err(Error::ConfigMismatch(format!(
            "log format v{}, replayer expects v{FORMAT_VERSION}",
            log.header.format_version
        )));
    }
    let layout = generate_arena(log.header.arena_seed, &log.header.env)?;
    let mut state = ArenaState::new(layout, log.header.env.clone(), log.header.episode_seed);
    if state.episode_id != log.header.episode_id {
        return Err(Error::ConfigMismatch(
            "episode id does not match episode seed (config mismatch?)".into(),
        ));
    }
    for (t, record) in log.records.iter().enumerate() {
        if state.done {
            return Err(Error::ReplayMismatch {
                t,
                field: "Done".into(),
                logged: "live step".into(),
                replayed: "episode already done".into(),
            });
        }
        let (_, fields) = step(&mut state, record.env.action)?;
        if let Some((field, logged, replayed)) = diff_env_fields(&record.env, &fields) {
            return Err(Error::ReplayMismatch {
                t,
                field,
                logged,
                replayed,
            });
        }
    }
    Ok(())
}

/// First differing environment field between a logged and replayed record.
fn diff_env_fields(a: &EnvFields, b: &EnvFields) -> Option<(String, String, String)> {
    macro_rules! check {
        ($name:expr, $field:ident) => {
            if a.$field != b.$field {
                return Some((
                    $name.to_owned(),
                    format!("{:?}", a.$field),
                    format!("{:?}", b.$field),
                ));
            }
        };
    }
    check!("Action", action);
    check!("Health", health);
    check!("Food", food);
    check!("Drink", drink);
    check!("Energy", energy);
    check!("Done", done);
    check!("Is Sleeping", is_sleeping);
    check!("Is Resting", is_resting);
    check!("Player Position", player_pos);
    check!("Recover", recover);
    check!("Hunger", hunger);
    check!("Thirst", thirst);
    check!("Fatigue", fatigue);
    check!("Light Level", light_level);
    check!("Distance to Melee", distance_to_melee);
    check!("Melee on Screen", melee_on_screen);
    check!("Distance to Passive", distance_to_passive);
    check!("Passive on Screen", passive_on_screen);
    check!("Distance to Ranged", distance_to_ranged);
    check!("Ranged on Screen", ranged_on_screen);
    check!("Num Melee Nearby", num_melee_nearby);
    check!("Num Passives Nearby", num_passives_nearby);
    check!("Num Ranged Nearby", num_ranged_nearby);
    check!("Delta X", delta_x);
    check!("Delta Y", delta_y);
    check!("Num Monsters Killed", num_monsters_killed);
    check!("Has Sword", has_sword);
    check!("Has Pick", has_pick);
    check!("Held Iron", held_iron);
    None
}

/// Run-level index of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub checkpoint_id: String,
    pub episodes: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub episode_id: u64,
    pub arena_seed: u64,
    pub episode_seed: u64,
    pub steps: usize,
    pub records_file: String,
    pub hidden_file: String,
}

pub fn write_manifest(manifest: &RunManifest, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(manifest)?)?;
    Ok(path)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join("manifest.json");
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// All episode logs referenced by a directory's manifest (or, without a
/// manifest, every `*.records.csv` in the directory), ordered by episode id.
pub fn read_all_logs(dir: &Path) -> Result<Vec<EpisodeLog>> {
    let mut logs = Vec::new();
    if dir.join("manifest.json").exists() {
        let manifest = read_manifest(dir)?;
        for entry in &manifest.episodes {
            logs.push(read_log(&dir.join(&entry.records_file))?);
        }
    } else {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.ends_with(".records.csv"))
            })
            .collect();
        paths.sort();
        for p in paths {
            logs.push(read_log(&p)?);
        }
    }
    logs.sort_by_key(|l| l.header.episode_id);
    Ok(logs)
}

/// Synthetic episode logs with scripted trajectories, used by analysis
/// tests and the decoding control experiments (positive/negative controls
/// plant known structure in the hidden states).
pub mod synthetic {
    use super::{AgentFields, EpisodeLog, LogHeader, LogRecord, FORMAT_VERSION};
    use crate::env::config::EnvConfig;
    use crate::env::observe::EnvFields;
    use crate::env::state::{light_at, Action};
    use crate::worldgen::Pos;

    pub struct SyntheticEpisode {
        start: Pos,
        positions: Vec<Pos>,
        hidden: Option<Vec<Vec<f32>>>,
        actions: Option<Vec<Action>>,
        food: Option<Vec<i32>>,
        drink: Option<Vec<i32>>,
        predicted: Option<Vec<Option<(f64, f64)>>>,
        passives_nearby: Option<Vec<u32>>,
        predator_on_screen: Option<Vec<bool>>,
        sleeping: Option<Vec<bool>>,
        has_sword: Option<Vec<bool>>,
        has_pick: Option<Vec<bool>>,
        episode_id: u64,
    }

    impl SyntheticEpisode {
        pub fn new(start: Pos, positions: Vec<Pos>) -> Self {
            Self {
                start,
                positions,
                hidden: None,
                actions: None,
                food: None,
                drink: None,
                predicted: None,
                passives_nearby: None,
                predator_on_screen: None,
                sleeping: None,
                has_sword: None,
                has_pick: None,
                episode_id: 1,
            }
        }

        pub fn hidden_states(mut self, hs: Vec<Vec<f32>>) -> Self {
            self.hidden = Some(hs);
            self
        }

        pub fn actions(mut self, actions: Vec<Action>) -> Self {
            self.actions = Some(actions);
            self
        }

        pub fn food_series(mut self, food: Vec<i32>) -> Self {
            self.food = Some(food);
            self
        }

        pub fn drink_series(mut self, drink: Vec<i32>) -> Self {
            self.drink = Some(drink);
            self
        }

        pub fn predicted_deltas(mut self, p: Vec<Option<(f64, f64)>>) -> Self {
            self.predicted = Some(p);
            self
        }

        pub fn passives_nearby(mut self, c: Vec<u32>) -> Self {
            self.passives_nearby = Some(c);
            self
        }

        pub fn predator_on_screen(mut self, f: Vec<bool>) -> Self {
            self.predator_on_screen = Some(f);
            self
        }

        pub fn sleeping(mut self, f: Vec<bool>) -> Self {
            self.sleeping = Some(f);
            self
        }

        pub fn tools(mut self, sword: Vec<bool>, pick: Vec<bool>) -> Self {
            self.has_sword = Some(sword);
            self.has_pick = Some(pick);
            self
        }

        pub fn episode_id(mut self, id: u64) -> Self {
            self.episode_id = id;
            self
        }

        /// Derive move actions from consecutive position deltas (teleports
        /// and stationary steps become no-ops).
        fn derived_actions(&self) -> Vec<Action> {
            let mut prev = self.start;
            self.positions
                .iter()
                .map(|&p| {
                    let action = match (p.x - prev.x, p.y - prev.y) {
                        (1, 0) => Action::MoveRight,
                        (-1, 0) => Action::MoveLeft,
                        (0, 1) => Action::MoveDown,
                        (0, -1) => Action::MoveUp,
                        _ => Action::Noop,
                    };
                    prev = p;
                    action
                })
                .collect()
        }

        pub fn build(self) -> EpisodeLog {
            let n = self.positions.len();
            let env_cfg = EnvConfig::default();
            let hidden_dim = self
                .hidden
                .as_ref()
                .and_then(|h| h.first().map(Vec::len))
                .unwrap_or(0);
            let header = LogHeader {
                format_version: FORMAT_VERSION,
                master_seed: 0,
                arena_seed: 0,
                episode_seed: 0,
                episode_id: self.episode_id,
                checkpoint_id: "synthetic".into(),
                hidden_dim,
                hidden_stride: 1,
                env: env_cfg.clone(),
            };
            let actions = self.actions.unwrap_or_else(|| {
                SyntheticEpisode {
                    start: self.start,
                    positions: self.positions.clone(),
                    hidden: None,
                    actions: None,
                    food: None,
                    drink: None,
                    predicted: None,
                    passives_nearby: None,
                    predator_on_screen: None,
                    sleeping: None,
                    has_sword: None,
                    has_pick: None,
                    episode_id: 0,
                }
                .derived_actions()
            });
            let mut log = EpisodeLog::new(header);
            let sentinel = EnvFields::missing_distance(env_cfg.map_size);
            for (t, &pos) in self.positions.iter().enumerate() {
                let get = |v: &Option<Vec<i32>>, def: i32| {
                    v.as_ref().map_or(def, |s| s[t.min(s.len() - 1)])
                };
                let getb = |v: &Option<Vec<bool>>| v.as_ref().is_some_and(|s| s[t.min(s.len() - 1)]);
                let predator = self
                    .predator_on_screen
                    .as_ref()
                    .is_some_and(|s| s[t.min(s.len() - 1)]);
                let passives = self
                    .passives_nearby
                    .as_ref()
                    .map_or(0, |s| s[t.min(s.len() - 1)]);
                let fields = EnvFields {
                    action: actions[t],
                    health: 9,
                    food: get(&self.food, 9),
                    drink: get(&self.drink, 9),
                    energy: 9,
                    done: t + 1 == n,
                    is_sleeping: getb(&self.sleeping),
                    is_resting: false,
                    player_pos: pos,
                    recover: 0,
                    hunger: 0,
                    thirst: 0,
                    fatigue: 0,
                    light_level: light_at(t as u64, env_cfg.light_period),
                    distance_to_melee: if predator { 4 } else { sentinel },
                    melee_on_screen: predator,
                    distance_to_passive: if passives > 0 { 3 } else { sentinel },
                    passive_on_screen: passives > 0,
                    distance_to_ranged: sentinel,
                    ranged_on_screen: false,
                    num_melee_nearby: u32::from(predator),
                    num_passives_nearby: passives,
                    num_ranged_nearby: 0,
                    delta_x: pos.x - self.start.x,
                    delta_y: pos.y - self.start.y,
                    num_monsters_killed: 0,
                    has_sword: getb(&self.has_sword),
                    has_pick: getb(&self.has_pick),
                    held_iron: 0,
                };
                let agent = AgentFields {
                    value: 0.0,
                    entropy: 0.0,
                    log_probability: 0.0,
                    predicted_delta: self.predicted.as_ref().and_then(|p| p[t]),
                };
                let h_row = self.hidden.as_ref().map(|h| h[t].clone());
                log.append_record(
                    LogRecord {
                        env: fields,
                        agent,
                        episode_id: self.episode_id,
                        hidden_state_ref: -1,
                    },
                    h_row.as_deref(),
                )
                .expect("synthetic append");
            }
            log
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::config::EnvConfig;
    use crate::env::state::ALL_ACTIONS;
    use crate::rng::RngStream;

    fn small_config() -> EnvConfig {
        EnvConfig {
            map_size: 24,
            max_cows: 12,
            n_spawn_points: 3,
            ..EnvConfig::default()
        }
    }

    fn header(cfg: &EnvConfig, hidden_dim: usize) -> LogHeader {
        LogHeader {
            format_version: FORMAT_VERSION,
            master_seed: 42,
            arena_seed: 5,
            episode_seed: 9,
            episode_id: 0,
            checkpoint_id: "none".into(),
            hidden_dim,
            hidden_stride: 1,
            env: cfg.clone(),
        }
    }

    /// Roll a short random-policy episode with full logging.
    fn roll_episode(cfg: &EnvConfig, steps: usize, hidden_dim: usize) -> EpisodeLog {
        let layout = generate_arena(5, cfg).unwrap();
        let mut state = ArenaState::new(layout, cfg.clone(), 9);
        let mut head = header(cfg, hidden_dim);
        head.episode_id = state.episode_id;
        let mut log = EpisodeLog::new(head);
        let mut policy = RngStream::derive(1, "policy");
        let h = vec![0.25f32; hidden_dim];
        for _ in 0..steps {
            if state.done {
                break;
            }
            let a = ALL_ACTIONS[policy.next_int_below(9) as usize];
            let (_, fields) = step(&mut state, a).unwrap();
            log.append_record(
                LogRecord {
                    env: fields,
                    agent: AgentFields::random_policy(9),
                    episode_id: state.episode_id,
                    hidden_state_ref: -1,
                },
                Some(&h),
            )
            .unwrap();
        }
        log
    }

    #[test]
    fn append_pairs_records_and_states() {
        let cfg = small_config();
        let log = roll_episode(&cfg, 50, 8);
        assert_eq!(log.records.len(), log.hidden_states.len());
        for (i, r) in log.records.iter().enumerate() {
            assert_eq!(r.hidden_state_ref, i as i64);
        }
    }

    #[test]
    fn append_after_done_errors() {
        let cfg = small_config();
        let mut log = roll_episode(&cfg, 10, 4);
        let mut last = log.records.last().unwrap().clone();
        last.env.done = true;
        log.records.pop();
        log.append_record(last.clone(), None).unwrap();
        assert!(log.append_record(last, None).is_err());
    }

    #[test]
    fn round_trip_preserves_log() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let log = roll_episode(&cfg, 100, 8);
        write_log(&log, dir.path()).unwrap();
        let back = read_log(&EpisodeLog::records_path(dir.path(), log.header.episode_id)).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn column_header_matches_schema() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let log = roll_episode(&cfg, 3, 4);
        let (records_path, _) = write_log(&log, dir.path()).unwrap();
        let text = fs::read_to_string(records_path).unwrap();
        let cols = text.lines().nth(1).unwrap();
        assert_eq!(cols, COLUMNS.join(","));
        for name in [
            "Action",
            "Health",
            "Is Sleeping",
            "Is Resting",
            "Light Level",
            "Distance to Melee",
            "Num Passives Nearby",
            "Has Sword",
            "Log Probability",
            "Episode ID",
        ] {
            assert!(cols.split(',').any(|c| c == name), "missing column {name}");
        }
    }

    #[test]
    fn truncated_record_detected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let log = roll_episode(&cfg, 10, 4);
        let (records_path, _) = write_log(&log, dir.path()).unwrap();
        let mut text = fs::read_to_string(&records_path).unwrap();
        // Chop the last line mid-record.
        text.truncate(text.len() - 20);
        fs::write(&records_path, text).unwrap();
        assert!(read_log(&records_path).is_err());
    }

    #[test]
    fn corrupted_sidecar_detected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let log = roll_episode(&cfg, 10, 4);
        let (records_path, hidden_path) = write_log(&log, dir.path()).unwrap();
        let mut bytes = fs::read(&hidden_path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        fs::write(&hidden_path, bytes).unwrap();
        match read_log(&records_path) {
            Err(Error::LogFormat(msg)) => assert!(msg.contains("checksum")),
            other => panic!("expected checksum failure, got {other:?}"),
        }
    }

    #[test]
    fn replay_verifies_genuine_log() {
        let cfg = small_config();
        let log = roll_episode(&cfg, 300, 4);
        replay_verify(&log).unwrap();
    }

    #[test]
    fn replay_detects_corrupted_position() {
        let cfg = small_config();
        let mut log = roll_episode(&cfg, 50, 4);
        log.records[20].env.player_pos.x += 1;
        match replay_verify(&log) {
            Err(Error::ReplayMismatch { t, field, .. }) => {
                assert_eq!(t, 20);
                assert_eq!(field, "Player Position");
            }
            other => panic!("expected mismatch, got {other:?}"),
        }
    }

    #[test]
    fn replay_detects_config_drift() {
        let cfg = small_config();
        let mut log = roll_episode(&cfg, 200, 4);
        // Same arena, different physiology constant: divergence is detected
        // at the first affected step.
        log.header.env.thirst_period = 5;
        assert!(replay_verify(&log).is_err());
    }

    #[test]
    fn stride_logging_skips_rows() {
        let cfg = small_config();
        let layout = generate_arena(5, &cfg).unwrap();
        let mut state = ArenaState::new(layout, cfg.clone(), 9);
        let mut head = header(&cfg, 4);
        head.hidden_stride = 3;
        head.episode_id = state.episode_id;
        let mut log = EpisodeLog::new(head);
        let h = vec![0.5f32; 4];
        for t in 0..30 {
            let (_, fields) = step(&mut state, Action::Noop).unwrap();
            let with_h = t % 3 == 0;
            log.append_record(
                LogRecord {
                    env: fields,
                    agent: AgentFields::random_policy(9),
                    episode_id: state.episode_id,
                    hidden_state_ref: -1,
                },
                with_h.then_some(h.as_slice()),
            )
            .unwrap();
        }
        assert_eq!(log.hidden_states.len(), 10);
        assert_eq!(log.records[1].hidden_state_ref, -1);
        assert_eq!(log.records[3].hidden_state_ref, 1);
        let dir = tempfile::tempdir().unwrap();
        write_log(&log, dir.path()).unwrap();
        let back = read_log(&EpisodeLog::records_path(dir.path(), log.header.episode_id)).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = RunManifest {
            format_version: FORMAT_VERSION,
            master_seed: 42,
            checkpoint_id: "ck-3".into(),
            episodes: vec![ManifestEntry {
                episode_id: 7,
                arena_seed: 5,
                episode_seed: 9,
                steps: 100,
                records_file: "0000000000000007.records.csv".into(),
                hidden_file: "0000000000000007.h.bin".into(),
            }],
        };
        write_manifest(&manifest, dir.path()).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
    }
}
