//! Python bindings: the environment, agent, and the core numeric operations
//! (reward, GAE, ridge decoding, VIF) driven in-process from Python.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use forage_core::env::{
    encode_observation, observe, reward as reward_fn, step as env_step, Action, ArenaState,
    EnvConfig, Physiology, ACTION_COUNT, ENCODED_LEN,
};
use forage_core::net::{softmax, AgentParams, NetConfig};
use forage_core::rng::RngStream as CoreStream;
use forage_core::worldgen::{generate_arena, ArenaFile, Pos};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(format!("{e}"))
}

/// Survival reward from the four physiology levels.
#[pyfunction]
fn reward(health: i32, food: i32, drink: i32, energy: i32) -> f64 {
    reward_fn(&Physiology {
        health,
        food,
        drink,
        energy,
        ..Physiology::full(9)
    })
}

/// Deterministic named random stream.
#[pyclass]
struct RngStream {
    inner: CoreStream,
}

#[pymethods]
impl RngStream {
    #[new]
    fn new(seed: u64, label: &str) -> PyResult<Self> {
        if label.is_empty() {
            return Err(PyValueError::new_err("label must be non-empty"));
        }
        Ok(Self {
            inner: CoreStream::derive(seed, label),
        })
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn next_uniform(&mut self) -> f64 {
        self.inner.next_uniform()
    }

    fn next_int_below(&mut self, n: u64) -> PyResult<u64> {
        if n == 0 {
            return Err(PyValueError::new_err("n must be >= 1"));
        }
        Ok(self.inner.next_int_below(n))
    }

    fn next_gaussian(&mut self) -> f64 {
        self.inner.next_gaussian()
    }
}

/// Generate an arena and return it as the JSON document `forage gen` writes.
#[pyfunction]
#[pyo3(signature = (seed, map_size=96))]
fn arena_json(seed: u64, map_size: usize) -> PyResult<String> {
    let config = EnvConfig {
        map_size,
        ..EnvConfig::default()
    };
    let layout = generate_arena(seed, &config).map_err(err)?;
    serde_json::to_string_pretty(&ArenaFile::from_layout(&layout, &config)).map_err(err)
}

/// One ForageWorld episode stepped from Python.
#[pyclass]
struct ForageEnv {
    state: ArenaState,
    config: EnvConfig,
    episode_seed: u64,
}

#[pymethods]
impl ForageEnv {
    #[new]
    #[pyo3(signature = (arena_seed, episode_seed=0, map_size=96, max_cows=108, n_spawn_points=12))]
    fn new(
        arena_seed: u64,
        episode_seed: u64,
        map_size: usize,
        max_cows: usize,
        n_spawn_points: usize,
    ) -> PyResult<Self> {
        let config = EnvConfig {
            map_size,
            max_cows,
            n_spawn_points,
            ..EnvConfig::default()
        };
        config.validate().map_err(err)?;
        let layout = generate_arena(arena_seed, &config).map_err(err)?;
        Ok(Self {
            state: ArenaState::new(layout, config.clone(), episode_seed),
            config,
            episode_seed,
        })
    }

    #[staticmethod]
    fn action_count() -> usize {
        ACTION_COUNT
    }

    #[staticmethod]
    fn encoded_len() -> usize {
        ENCODED_LEN
    }

    /// Encoded observation of the current state.
    fn observe(&self) -> Vec<f32> {
        encode_observation(&observe(&self.state, self.config.fov_mode))
    }

    /// Apply one action; returns (reward, done, info).
    fn step(
        &mut self,
        action: usize,
        py: Python<'_>,
    ) -> PyResult<(f64, bool, Py<pyo3::types::PyDict>)> {
        let action = Action::from_index(action)
            .ok_or_else(|| PyValueError::new_err(format!("action index {action} out of range")))?;
        let (outcome, fields) = env_step(&mut self.state, action).map_err(err)?;
        let info = pyo3::types::PyDict::new(py);
        info.set_item("position", (fields.player_pos.x, fields.player_pos.y))?;
        info.set_item("delta", (fields.delta_x, fields.delta_y))?;
        info.set_item("health", fields.health)?;
        info.set_item("food", fields.food)?;
        info.set_item("drink", fields.drink)?;
        info.set_item("energy", fields.energy)?;
        info.set_item("is_sleeping", fields.is_sleeping)?;
        info.set_item("light_level", fields.light_level)?;
        info.set_item("ate", outcome.ate)?;
        info.set_item("drank", outcome.drank)?;
        info.set_item("cows", self.state.live_cows())?;
        Ok((outcome.reward, outcome.done, info.unbind()))
    }

    fn done(&self) -> bool {
        self.state.done
    }

    fn t(&self) -> u64 {
        self.state.t
    }

    fn episode_id(&self) -> u64 {
        self.state.episode_id
    }

    /// Restart the episode on the same arena.
    fn reset(&mut self) {
        let layout = self.state.layout.clone();
        self.state = ArenaState::new(layout, self.config.clone(), self.episode_seed);
    }
}

/// A PPO-RNN agent with its recurrent state, for greedy/sampled rollouts.
#[pyclass]
struct Agent {
    params: AgentParams<f32>,
    hidden: ndarray::Array2<f32>,
    policy_stream: CoreStream,
}

#[pymethods]
impl Agent {
    /// Randomly initialized agent.
    #[new]
    #[pyo3(signature = (seed, hidden_dim=64, recurrent=true, aux_enabled=true))]
    fn new(seed: u64, hidden_dim: usize, recurrent: bool, aux_enabled: bool) -> Self {
        let config = NetConfig {
            input_dim: ENCODED_LEN,
            hidden_dim,
            action_count: ACTION_COUNT,
            recurrent,
            aux_enabled,
        };
        let mut stream = CoreStream::derive(seed, "py/net");
        let params = AgentParams::init(config, &mut stream);
        let hidden = params.initial_hidden(1);
        Self {
            params,
            hidden,
            policy_stream: CoreStream::derive(seed, "py/policy"),
        }
    }

    /// Load a trained checkpoint directory.
    #[staticmethod]
    fn load(path: &str, seed: u64) -> PyResult<Self> {
        let dir = std::path::Path::new(path);
        let manifest = forage_core::net::checkpoint_manifest(dir).map_err(err)?;
        let (params, _) = forage_core::net::checkpoint_load(dir, &manifest.config).map_err(err)?;
        let hidden = params.initial_hidden(1);
        Ok(Self {
            params,
            hidden,
            policy_stream: CoreStream::derive(seed, "py/policy"),
        })
    }

    fn hidden_dim(&self) -> usize {
        self.params.config.hidden_dim
    }

    fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    fn reset_hidden(&mut self) {
        self.hidden = self.params.initial_hidden(1);
    }

    /// Act on an encoded observation; returns (action, value, log_prob).
    #[pyo3(signature = (obs, greedy=false))]
    fn act(&mut self, obs: Vec<f32>, greedy: bool) -> PyResult<(usize, f64, f64)> {
        if obs.len() != ENCODED_LEN {
            return Err(PyValueError::new_err(format!(
                "observation length {} != {}",
                obs.len(),
                ENCODED_LEN
            )));
        }
        let x = ndarray::Array2::from_shape_vec((1, ENCODED_LEN), obs).expect("length checked");
        let (h, _) = self.params.forward_step(&self.hidden, &x);
        let (logits, values, _) = self.params.heads(&h);
        self.hidden = h;
        let pi = softmax(&logits);
        let row = pi.row(0);
        let action = if greedy {
            let mut best = 0;
            for (a, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = a;
                }
            }
            best
        } else {
            let u = self.policy_stream.next_uniform() as f32;
            let mut acc = 0.0f32;
            let mut chosen = ACTION_COUNT - 1;
            for (a, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = a;
                    break;
                }
            }
            chosen
        };
        Ok((
            action,
            f64::from(values[0]),
            f64::from(row[action].max(1e-12).ln()),
        ))
    }

    /// Current hidden state as a flat list.
    fn hidden_state(&self) -> Vec<f32> {
        self.hidden.row(0).to_vec()
    }
}

/// Generalized advantage estimation; returns (advantages, returns).
#[pyfunction]
fn gae(
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(PyValueError::new_err("length mismatch"));
    }
    Ok(forage_core::ppo::compute_gae(
        &rewards,
        &values,
        &dones,
        bootstrap_value,
        gamma,
        lambda,
    ))
}

/// Closed-form ridge fit of targets (n x 2) on features (n x p);
/// returns (A 2xp, b 2).
#[pyfunction]
fn ridge_fit(
    h: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    alpha: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    if h.is_empty() || h.len() != y.len() {
        return Err(PyValueError::new_err(
            "h and y must be equal-length and non-empty",
        ));
    }
    let p = h[0].len();
    let hm = nalgebra::DMatrix::from_fn(h.len(), p, |i, j| h[i][j]);
    let ym = nalgebra::DMatrix::from_fn(y.len(), 2, |i, j| y[i][j]);
    let model = forage_core::decoding::fit_ridge(
        &hm,
        &ym,
        alpha,
        0,
        forage_core::decoding::Frame::Allocentric,
    )
    .map_err(err)?;
    let a = (0..2)
        .map(|k| (0..p).map(|j| model.a[(k, j)]).collect())
        .collect();
    Ok((a, vec![model.b[0], model.b[1]]))
}

/// Variance inflation factors of predictor columns (n x p).
#[pyfunction]
fn vif(x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    if x.is_empty() {
        return Err(PyValueError::new_err("empty matrix"));
    }
    let p = x[0].len();
    let m = nalgebra::DMatrix::from_fn(x.len(), p, |i, j| x[i][j]);
    forage_core::behavior::vif(&m).map_err(err)
}

/// Shannon entropy of the occupancy distribution over square bins.
#[pyfunction]
fn occupancy_entropy(positions: Vec<(i32, i32)>, bin_size: usize) -> PyResult<f64> {
    if positions.is_empty() {
        return Err(PyValueError::new_err("at least one position required"));
    }
    let pts: Vec<Pos> = positions.iter().map(|&(x, y)| Pos::new(x, y)).collect();
    Ok(forage_core::behavior::occupancy_entropy(&pts, bin_size))
}

/// Circular variance of movement headings; None when never moving.
#[pyfunction]
fn angular_variance(positions: Vec<(i32, i32)>) -> Option<f64> {
    let pts: Vec<Pos> = positions.iter().map(|&(x, y)| Pos::new(x, y)).collect();
    forage_core::behavior::angular_variance(&pts)
}

#[pymodule]
fn forage_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RngStream>()?;
    m.add_class::<ForageEnv>()?;
    m.add_class::<Agent>()?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(arena_json, m)?)?;
    m.add_function(wrap_pyfunction!(gae, m)?)?;
    m.add_function(wrap_pyfunction!(ridge_fit, m)?)?;
    m.add_function(wrap_pyfunction!(vif, m)?)?;
    m.add_function(wrap_pyfunction!(occupancy_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(angular_variance, m)?)?;
    m.add("ACTION_COUNT", ACTION_COUNT)?;
    m.add("ENCODED_LEN", ENCODED_LEN)?;
    Ok(())
}
