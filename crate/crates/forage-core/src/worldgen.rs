//! Procedural arena generation.
//!
//! Arenas are square tile grids with Perlin-noise-placed lakes, vegetation
//! patches, and scattered obstacles. Cow spawn points are sampled inside
//! food-patch regions of the noise field; the agent always starts at the
//! center cell. Generation is a pure function of `(arena_seed, config)`.

use serde::{Deserialize, Serialize};

use crate::env::config::EnvConfig;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileKind {
    Grass,
    Water,
    Tree,
    Stone,
    Sand,
}

impl TileKind {
    /// Whether the agent and creatures can stand on this tile.
    pub fn passable(self) -> bool {
        matches!(self, TileKind::Grass | TileKind::Sand)
    }

    /// Whether this tile blocks line of sight.
    pub fn blocks_sight(self) -> bool {
        matches!(self, TileKind::Tree | TileKind::Stone)
    }

    pub fn code(self) -> char {
        match self {
            TileKind::Grass => 'g',
            TileKind::Water => 'w',
            TileKind::Tree => 't',
            TileKind::Stone => 'r',
            TileKind::Sand => 's',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        Some(match c {
            'g' => TileKind::Grass,
            'w' => TileKind::Water,
            't' => TileKind::Tree,
            'r' => TileKind::Stone,
            's' => TileKind::Sand,
            _ => return None,
        })
    }
}

/// Integer cell coordinate, origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn l1(self, other: Pos) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn dist(self, other: Pos) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    pub width: usize,
    pub height: usize,
    tiles: Vec<TileKind>,
}

impl TileGrid {
    pub fn filled(width: usize, height: usize, kind: TileKind) -> Self {
        Self {
            width,
            height,
            tiles: vec![kind; width * height],
        }
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    pub fn get(&self, p: Pos) -> TileKind {
        debug_assert!(self.in_bounds(p));
        self.tiles[p.y as usize * self.width + p.x as usize]
    }

    pub fn set(&mut self, p: Pos, kind: TileKind) {
        debug_assert!(self.in_bounds(p));
        self.tiles[p.y as usize * self.width + p.x as usize] = kind;
    }

    pub fn passable(&self, p: Pos) -> bool {
        self.in_bounds(p) && self.get(p).passable()
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (Pos, TileKind)> + '_ {
        let w = self.width;
        self.tiles
            .iter()
            .enumerate()
            .map(move |(i, &k)| (Pos::new((i % w) as i32, (i / w) as i32), k))
    }

    /// Row-major run-length encoding, one string per row (`<count><code>`...).
    pub fn to_rle_rows(&self) -> Vec<String> {
        let mut rows = Vec::with_capacity(self.height);
        for y in 0..self.height {
            let mut row = String::new();
            let mut run_kind = self.tiles[y * self.width];
            let mut run_len = 0usize;
            for x in 0..self.width {
                let k = self.tiles[y * self.width + x];
                if k == run_kind {
                    run_len += 1;
                } else {
                    row.push_str(&format!("{}{}", run_len, run_kind.code()));
                    run_kind = k;
                    run_len = 1;
                }
            }
            row.push_str(&format!("{}{}", run_len, run_kind.code()));
            rows.push(row);
        }
        rows
    }

    pub fn from_rle_rows(width: usize, rows: &[String]) -> Result<Self> {
        let mut tiles = Vec::with_capacity(width * rows.len());
        for row in rows {
            let mut count = 0usize;
            let mut row_len = 0usize;
            for c in row.chars() {
                if let Some(d) = c.to_digit(10) {
                    count = count * 10 + d as usize;
                } else {
                    let kind = TileKind::from_code(c)
                        .ok_or_else(|| Error::LogFormat(format!("bad tile code `{c}`")))?;
                    if count == 0 {
                        return Err(Error::LogFormat("zero-length run".into()));
                    }
                    for _ in 0..count {
                        tiles.push(kind);
                    }
                    row_len += count;
                    count = 0;
                }
            }
            if row_len != width {
                return Err(Error::LogFormat(format!(
                    "row length {row_len}, expected {width}"
                )));
            }
        }
        let height = rows.len();
        Ok(Self {
            width,
            height,
            tiles,
        })
    }
}

/// A generated arena: grid plus the placed points the simulation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaLayout {
    pub grid: TileGrid,
    pub cow_spawn_points: Vec<Pos>,
    pub lake_cells: Vec<Pos>,
    pub agent_start: Pos,
    pub arena_seed: u64,
    /// How many perturbed sub-seeds were tried before connectivity passed.
    pub retries: u32,
}

/// Gradient lattice for 2-D Perlin noise, seeded from an rng stream.
pub struct GradientLattice {
    gx: Vec<f64>,
    gy: Vec<f64>,
    width: usize,
    height: usize,
}

impl GradientLattice {
    /// Unit gradients at every integer lattice point, drawn from `stream`.
    pub fn from_stream(width: usize, height: usize, stream: &mut RngStream) -> Self {
        let n = width * height;
        let mut gx = Vec::with_capacity(n);
        let mut gy = Vec::with_capacity(n);
        for _ in 0..n {
            let angle = stream.next_uniform() * std::f64::consts::TAU;
            gx.push(angle.cos());
            gy.push(angle.sin());
        }
        Self {
            gx,
            gy,
            width,
            height,
        }
    }

    fn grad(&self, ix: usize, iy: usize) -> (f64, f64) {
        let ix = ix.min(self.width - 1);
        let iy = iy.min(self.height - 1);
        let i = iy * self.width + ix;
        (self.gx[i], self.gy[i])
    }
}

/// Quintic fade used by classic Perlin noise.
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Classic 2-D Perlin noise over the given lattice, in lattice coordinates.
///
/// Continuous, bounded by |value| <= sqrt(2)/2 < 1, and exactly zero at every
/// integer lattice point (the dot product with a zero offset vanishes).
pub fn perlin2(x: f64, y: f64, lattice: &GradientLattice) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (ix, iy) = (x0.max(0.0) as usize, y0.max(0.0) as usize);

    let dot = |gx: f64, gy: f64, dx: f64, dy: f64| gx * dx + gy * dy;
    let (g00x, g00y) = lattice.grad(ix, iy);
    let (g10x, g10y) = lattice.grad(ix + 1, iy);
    let (g01x, g01y) = lattice.grad(ix, iy + 1);
    let (g11x, g11y) = lattice.grad(ix + 1, iy + 1);

    let n00 = dot(g00x, g00y, fx, fy);
    let n10 = dot(g10x, g10y, fx - 1.0, fy);
    let n01 = dot(g01x, g01y, fx, fy - 1.0);
    let n11 = dot(g11x, g11y, fx - 1.0, fy - 1.0);

    let u = fade(fx);
    let v = fade(fy);
    lerp(lerp(n00, n10, u), lerp(n01, n11, u), v)
}

/// Multi-octave noise field sampled over a whole map.
struct NoiseField {
    octaves: Vec<(GradientLattice, f64)>, // (lattice, spacing)
    norm: f64,
}

impl NoiseField {
    fn new(map_size: usize, base_spacing: f64, octaves: u32, stream: &mut RngStream) -> Self {
        let mut layers = Vec::new();
        let mut norm = 0.0;
        let mut spacing = base_spacing;
        let mut amplitude = 1.0;
        for i in 0..octaves {
            let cells = (map_size as f64 / spacing).ceil() as usize + 2;
            let mut sub = stream.child(&format!("octave{i}"));
            layers.push((GradientLattice::from_stream(cells, cells, &mut sub), spacing));
            norm += amplitude;
            spacing /= 2.0;
            amplitude /= 2.0;
        }
        Self {
            octaves: layers,
            norm,
        }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let mut value = 0.0;
        let mut amplitude = 1.0;
        for (lattice, spacing) in &self.octaves {
            value += amplitude * perlin2(x / spacing, y / spacing, lattice);
            amplitude /= 2.0;
        }
        value / self.norm
    }
}

/// Generate an arena, retrying with perturbed sub-seeds until the
/// connectivity check passes.
pub fn generate_arena(arena_seed: u64, config: &EnvConfig) -> Result<ArenaLayout> {
    config.validate()?;
    let max_retries = config.worldgen.max_retries;
    for attempt in 0..=max_retries {
        let sub_seed = if attempt == 0 {
            arena_seed
        } else {
            arena_seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(attempt as u64 + 1))
        };
        let mut layout = build_layout(sub_seed, config)?;
        layout.arena_seed = arena_seed;
        layout.retries = attempt;
        if connectivity_check(&layout, config.worldgen.connectivity_fraction) {
            return Ok(layout);
        }
    }
    Err(Error::WorldGen {
        seed: arena_seed,
        attempts: max_retries + 1,
    })
}

fn build_layout(sub_seed: u64, config: &EnvConfig) -> Result<ArenaLayout> {
    let size = config.map_size;
    let wg = &config.worldgen;
    let mut water_stream = RngStream::derive(sub_seed, "worldgen/water");
    let mut veg_stream = RngStream::derive(sub_seed, "worldgen/veg");
    let mut patch_stream = RngStream::derive(sub_seed, "worldgen/patch");
    let mut scatter = RngStream::derive(sub_seed, "worldgen/scatter");
    let mut spawn_stream = RngStream::derive(sub_seed, "worldgen/spawn");

    let water_field = NoiseField::new(size, wg.lattice_spacing, wg.octaves, &mut water_stream);
    let veg_field = NoiseField::new(size, wg.lattice_spacing, wg.octaves, &mut veg_stream);
    let patch_field = NoiseField::new(size, wg.lattice_spacing, wg.octaves, &mut patch_stream);

    let mut grid = TileGrid::filled(size, size, TileKind::Grass);

    // Lakes first, then shorelines.
    for y in 0..size {
        for x in 0..size {
            if water_field.sample(x as f64, y as f64) > wg.water_threshold {
                grid.set(Pos::new(x as i32, y as i32), TileKind::Water);
            }
        }
    }
    let mut shoreline = Vec::new();
    for (p, kind) in grid.iter_cells() {
        if kind == TileKind::Grass && neighbors4(p).iter().any(|&q| grid.in_bounds(q) && grid.get(q) == TileKind::Water) {
            shoreline.push(p);
        }
    }
    for p in shoreline {
        grid.set(p, TileKind::Sand);
    }

    // Vegetation clumps and scattered stones break line of sight.
    for y in 0..size {
        for x in 0..size {
            let p = Pos::new(x as i32, y as i32);
            if grid.get(p) == TileKind::Grass {
                if veg_field.sample(x as f64, y as f64) > wg.tree_threshold {
                    grid.set(p, TileKind::Tree);
                } else if scatter.next_uniform() < wg.stone_scatter_prob {
                    grid.set(p, TileKind::Stone);
                }
            } else {
                // Keep the draw-per-open-cell pattern stream-stable.
                scatter.next_uniform();
            }
        }
    }

    // Impassable border so the agent cannot leave the arena.
    for i in 0..size {
        grid.set(Pos::new(i as i32, 0), TileKind::Stone);
        grid.set(Pos::new(i as i32, size as i32 - 1), TileKind::Stone);
        grid.set(Pos::new(0, i as i32), TileKind::Stone);
        grid.set(Pos::new(size as i32 - 1, i as i32), TileKind::Stone);
    }

    // The agent begins at the center; clear a small disk so it can move.
    let center = Pos::new((size / 2) as i32, (size / 2) as i32);
    for dy in -1..=1 {
        for dx in -1..=1 {
            let p = Pos::new(center.x + dx, center.y + dy);
            if grid.in_bounds(p) && p.x > 0 && p.y > 0 && (p.x as usize) < size - 1 && (p.y as usize) < size - 1 {
                grid.set(p, TileKind::Grass);
            }
        }
    }

    // Spawn points live inside food-patch regions of the patch field.
    let mut candidates: Vec<Pos> = grid
        .iter_cells()
        .filter(|&(p, kind)| {
            kind.passable() && patch_field.sample(p.x as f64, p.y as f64) > wg.patch_threshold
        })
        .map(|(p, _)| p)
        .collect();
    if candidates.is_empty() {
        candidates = grid
            .iter_cells()
            .filter(|&(_, kind)| kind.passable())
            .map(|(p, _)| p)
            .collect();
    }
    if candidates.is_empty() {
        return Err(Error::WorldGen {
            seed: sub_seed,
            attempts: 1,
        });
    }
    let mut spawn_points: Vec<Pos> = Vec::with_capacity(config.n_spawn_points);
    let mut separation = wg.min_spawn_separation;
    while spawn_points.len() < config.n_spawn_points {
        let mut placed = false;
        for _ in 0..200 {
            let p = candidates[spawn_stream.next_int_below(candidates.len() as u64) as usize];
            if spawn_points.iter().all(|q| q.dist(p) >= separation) {
                spawn_points.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            // Crowded map: relax the separation requirement and keep going.
            separation /= 2.0;
            if separation < 1.0 {
                let p = candidates[spawn_stream.next_int_below(candidates.len() as u64) as usize];
                spawn_points.push(p);
            }
        }
    }

    let lake_cells: Vec<Pos> = grid
        .iter_cells()
        .filter(|&(_, kind)| kind == TileKind::Water)
        .map(|(p, _)| p)
        .collect();

    Ok(ArenaLayout {
        grid,
        cow_spawn_points: spawn_points,
        lake_cells,
        agent_start: center,
        arena_seed: sub_seed,
        retries: 0,
    })
}

/// Serialized arena layout: run-length-encoded grid plus placement lists and
/// the generating config, as written by `forage gen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaFile {
    pub format_version: u32,
    pub arena_seed: u64,
    pub retries: u32,
    pub map_size: usize,
    pub grid_rle: Vec<String>,
    pub cow_spawn_points: Vec<Pos>,
    pub lake_cells: Vec<Pos>,
    pub agent_start: Pos,
    pub env: EnvConfig,
}

impl ArenaFile {
    pub fn from_layout(layout: &ArenaLayout, env: &EnvConfig) -> Self {
        Self {
            format_version: 1,
            arena_seed: layout.arena_seed,
            retries: layout.retries,
            map_size: layout.grid.width,
            grid_rle: layout.grid.to_rle_rows(),
            cow_spawn_points: layout.cow_spawn_points.clone(),
            lake_cells: layout.lake_cells.clone(),
            agent_start: layout.agent_start,
            env: env.clone(),
        }
    }

    pub fn to_layout(&self) -> Result<ArenaLayout> {
        Ok(ArenaLayout {
            grid: TileGrid::from_rle_rows(self.map_size, &self.grid_rle)?,
            cow_spawn_points: self.cow_spawn_points.clone(),
            lake_cells: self.lake_cells.clone(),
            agent_start: self.agent_start,
            arena_seed: self.arena_seed,
            retries: self.retries,
        })
    }
}

pub fn neighbors4(p: Pos) -> [Pos; 4] {
    [
        Pos::new(p.x, p.y - 1),
        Pos::new(p.x, p.y + 1),
        Pos::new(p.x - 1, p.y),
        Pos::new(p.x + 1, p.y),
    ]
}

/// True iff a 4-connected flood fill from the agent start reaches at least
/// `min_fraction` of all passable cells, at least one cell bordering water,
/// and at least one cow spawn point.
pub fn connectivity_check(layout: &ArenaLayout, min_fraction: f64) -> bool {
    let grid = &layout.grid;
    if !grid.passable(layout.agent_start) {
        return false;
    }
    let mut visited = vec![false; grid.width * grid.height];
    let idx = |p: Pos| p.y as usize * grid.width + p.x as usize;
    let mut stack = vec![layout.agent_start];
    visited[idx(layout.agent_start)] = true;
    let mut reached = 0usize;
    let mut touches_water = false;
    while let Some(p) = stack.pop() {
        reached += 1;
        for q in neighbors4(p) {
            if !grid.in_bounds(q) {
                continue;
            }
            if grid.get(q) == TileKind::Water {
                touches_water = true;
            }
            if grid.passable(q) && !visited[idx(q)] {
                visited[idx(q)] = true;
                stack.push(q);
            }
        }
    }
    let total_passable = grid.iter_cells().filter(|&(_, k)| k.passable()).count();
    if total_passable == 0 {
        return false;
    }
    let reaches_spawn = layout
        .cow_spawn_points
        .iter()
        .any(|&p| grid.in_bounds(p) && visited[idx(p)]);
    let has_lake = !layout.lake_cells.is_empty();
    (reached as f64) / (total_passable as f64) >= min_fraction
        && (!has_lake || touches_water)
        && reaches_spawn
}
