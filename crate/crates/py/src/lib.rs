//! Python bindings: scenarios, the step function, the exact oracle,
//! baselines, PPO training and the trajectory tooling.

use std::path::{Path, PathBuf};

use overwatch_core::harness::{self, detect_overwatch, write_trajectory};
use overwatch_core::ppo::{self, PolicyParams, TrainConfig, Variant};
use overwatch_core::solvers::{self, DiscreteInstance, OracleSolution};
use overwatch_core::trajectory::Trajectory;
use overwatch_core::{encoder, env, HybridAction, ScenarioConfig, TeamState};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: overwatch_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Action = (Vec<f64>, Vec<usize>);

fn unpack(a: HybridAction) -> Action {
    (a.speeds, a.guards)
}

#[pyclass(name = "Scenario", module = "overwatch", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    /// Preset name (`m1`, `m2`, `m3`, `m1-small`, `corridor`) or file path.
    #[new]
    fn new(name_or_path: &str) -> PyResult<Self> {
        ScenarioConfig::resolve(name_or_path)
            .map(|inner| PyScenario { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn presets() -> Vec<&'static str> {
        ScenarioConfig::preset_names().collect()
    }

    fn with_robots(&self, n: usize) -> PyResult<Self> {
        let inner = self.inner.clone().with_robots(n);
        inner.validate().map_err(err)?;
        Ok(PyScenario { inner })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }
    #[getter]
    fn route_length(&self) -> f64 {
        self.inner.route_length
    }
    #[getter]
    fn n_robots(&self) -> usize {
        self.inner.n_robots
    }
    #[getter]
    fn n_adversaries(&self) -> usize {
        self.inner.n_adversaries()
    }
    #[getter]
    fn v_max(&self) -> f64 {
        self.inner.v_max
    }
    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }
    #[getter]
    fn default_placement(&self) -> Vec<f64> {
        self.inner.default_placement()
    }
    #[getter]
    fn supports(&self) -> Vec<Vec<f64>> {
        self.inner
            .adversaries
            .iter()
            .map(|a| a.support.clone())
            .collect()
    }

    fn zone(&self, adversary: usize, position: f64) -> PyResult<(f64, f64)> {
        if adversary >= self.inner.n_adversaries() {
            return Err(PyValueError::new_err(format!("no adversary {adversary}")));
        }
        Ok(self.inner.zone(adversary, position))
    }

    fn to_toml(&self) -> String {
        self.inner.to_file_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, robots={}, adversaries={}, L={})",
            self.inner.name,
            self.inner.n_robots,
            self.inner.n_adversaries(),
            self.inner.route_length
        )
    }
}

#[pyclass(name = "State", module = "overwatch", get_all, from_py_object)]
#[derive(Clone)]
struct PyState {
    positions: Vec<f64>,
    adversaries: Vec<f64>,
    t: usize,
}

impl From<TeamState> for PyState {
    fn from(s: TeamState) -> Self {
        PyState {
            positions: s.positions,
            adversaries: s.adversaries,
            t: s.t,
        }
    }
}

impl PyState {
    fn core(&self) -> TeamState {
        TeamState {
            positions: self.positions.clone(),
            adversaries: self.adversaries.clone(),
            t: self.t,
        }
    }
}

#[pymethods]
impl PyState {
    /// Every robot at the start, adversaries at `placement` (the
    /// scenario's default if omitted).
    #[staticmethod]
    #[pyo3(signature = (scenario, placement=None))]
    fn start(scenario: &PyScenario, placement: Option<Vec<f64>>) -> PyResult<Self> {
        let cfg = &scenario.inner;
        let p = placement.unwrap_or_else(|| cfg.default_placement());
        TeamState::new(cfg, p).map(Into::into).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "State(t={}, positions={:?}, adversaries={:?})",
            self.t, self.positions, self.adversaries
        )
    }
}

#[pyclass(name = "StepResult", module = "overwatch", get_all)]
struct PyStepResult {
    state: PyState,
    raw_reward: f64,
    shaped_reward: f64,
    risk: Vec<f64>,
    penalty: Vec<f64>,
    done: bool,
}

/// Advances `state` by one step. Guard targets are 0-based.
#[pyfunction]
fn step(
    scenario: &PyScenario,
    state: &PyState,
    speeds: Vec<f64>,
    guards: Vec<usize>,
) -> PyResult<PyStepResult> {
    let out = env::step(
        &state.core(),
        &HybridAction::new(speeds, guards),
        &scenario.inner,
    )
    .map_err(err)?;
    Ok(PyStepResult {
        state: out.next_state.into(),
        raw_reward: out.raw_reward,
        shaped_reward: out.shaped_reward,
        risk: out.risk,
        penalty: out.penalty,
        done: out.done,
    })
}

/// Weighted one-hot code of a position on a route of `length`, which
/// spans `length + 1` cells.
#[pyfunction]
fn encode_scalar(s: f64, length: usize) -> PyResult<Vec<f64>> {
    encoder::encode_scalar(s, length + 1).map_err(err)
}

#[pyfunction]
fn encode_state(scenario: &PyScenario, state: &PyState) -> PyResult<Vec<f64>> {
    encoder::encode_state(&state.core(), &scenario.inner).map_err(err)
}

#[pyfunction]
fn greedy_action(scenario: &PyScenario, state: &PyState) -> PyResult<Action> {
    solvers::greedy_baseline(&state.core(), &scenario.inner)
        .map(unpack)
        .map_err(err)
}

#[pyfunction]
fn overwatch_action(scenario: &PyScenario, state: &PyState) -> PyResult<Action> {
    solvers::overwatch_heuristic(&state.core(), &scenario.inner)
        .map(unpack)
        .map_err(err)
}

#[pyclass(name = "Episode", module = "overwatch")]
struct PyEpisode {
    traj: Trajectory,
    cfg: ScenarioConfig,
}

#[pymethods]
impl PyEpisode {
    fn __len__(&self) -> usize {
        self.traj.len()
    }

    #[getter]
    fn raw_return(&self) -> f64 {
        self.traj.raw_return()
    }

    #[getter]
    fn all_arrived(&self) -> bool {
        self.traj.all_arrived(&self.cfg)
    }

    #[getter]
    fn states(&self) -> Vec<PyState> {
        self.traj
            .transitions
            .iter()
            .map(|t| t.state.clone().into())
            .chain(std::iter::once(self.traj.final_state().clone().into()))
            .collect()
    }

    #[getter]
    fn actions(&self) -> Vec<Action> {
        self.traj
            .transitions
            .iter()
            .map(|t| unpack(t.action.clone()))
            .collect()
    }

    fn write_log(&self, path: PathBuf) -> PyResult<()> {
        write_trajectory(&path, &self.traj, &self.cfg).map_err(err)
    }

    fn export_plots(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        harness::export_plotdata(&self.traj, &self.cfg, &dir).map_err(err)
    }

    fn behavior<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = detect_overwatch(&self.traj, &self.cfg);
        let d = PyDict::new(py);
        d.set_item("overwatch_detected", r.overwatch_detected)?;
        d.set_item("guard_at_boundary_fraction", r.guard_at_boundary_fraction)?;
        d.set_item("intermediate_speed_steps", r.intermediate_speed_steps)?;
        d.set_item("all_arrived", r.all_arrived)?;
        d.set_item("guard_early_departures", r.guard_early_departures)?;
        d.set_item("exposed_steps", r.exposed_steps)?;
        Ok(d)
    }
}

/// Rolls out a named non-learning method (`greedy` or `overwatch`).
#[pyfunction]
#[pyo3(signature = (scenario, method, placement=None))]
fn run_baseline(
    scenario: &PyScenario,
    method: &str,
    placement: Option<Vec<f64>>,
) -> PyResult<PyEpisode> {
    let cfg = scenario.inner.clone();
    let start =
        TeamState::new(&cfg, placement.unwrap_or_else(|| cfg.default_placement())).map_err(err)?;
    let traj = match method {
        "greedy" => overwatch_core::trajectory::run_episode(&cfg, start, &[], |s| {
            solvers::greedy_baseline(s, &cfg)
        }),
        "overwatch" => overwatch_core::trajectory::run_episode(&cfg, start, &[], |s| {
            solvers::overwatch_heuristic(s, &cfg)
        }),
        other => return Err(PyValueError::new_err(format!("unknown baseline '{other}'"))),
    }
    .map_err(err)?;
    Ok(PyEpisode { traj, cfg })
}

#[pyclass(name = "Oracle", module = "overwatch")]
struct PyOracle {
    sol: OracleSolution,
    cfg: ScenarioConfig,
}

#[pymethods]
impl PyOracle {
    /// Solves the integer-speed scenario exactly for one placement.
    #[new]
    #[pyo3(signature = (scenario, placement=None, cache_dir=None))]
    fn new(
        scenario: &PyScenario,
        placement: Option<Vec<f64>>,
        cache_dir: Option<PathBuf>,
    ) -> PyResult<Self> {
        let cfg = scenario.inner.clone();
        let p = placement.unwrap_or_else(|| cfg.default_placement());
        let inst = DiscreteInstance::new(cfg.clone(), p).map_err(err)?;
        let sol = solvers::solve_exact_cached(&inst, cache_dir.as_deref()).map_err(err)?;
        Ok(PyOracle { sol, cfg })
    }

    #[getter]
    fn optimal_return(&self) -> f64 {
        self.sol.optimal_return()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.sol.n_states()
    }

    fn value(&self, state: &PyState) -> PyResult<f64> {
        self.sol.value(&state.core()).map_err(err)
    }

    fn action(&self, state: &PyState) -> PyResult<Action> {
        self.sol
            .policy_action(&state.core())
            .map(unpack)
            .map_err(err)
    }

    fn rollout(&self) -> PyResult<PyEpisode> {
        let traj = self.sol.rollout().map_err(err)?;
        Ok(PyEpisode {
            traj,
            cfg: self.cfg.clone(),
        })
    }
}

#[pyclass(name = "Policy", module = "overwatch")]
struct PyPolicy {
    params: PolicyParams,
    cfg: ScenarioConfig,
}

#[pymethods]
impl PyPolicy {
    /// Trains a PPO learner. `method` is `d-ppo` or `h-ppo`; `config`
    /// optionally names a training config file, and keyword overrides are
    /// applied on top of it.
    #[staticmethod]
    #[pyo3(signature = (scenario, method="d-ppo", seed=0, config=None, total_steps=None, hidden=None, learning_rate=None, entropy_coef=None))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        scenario: &PyScenario,
        method: &str,
        seed: u64,
        config: Option<PathBuf>,
        total_steps: Option<usize>,
        hidden: Option<Vec<usize>>,
        learning_rate: Option<f64>,
        entropy_coef: Option<f64>,
    ) -> PyResult<Self> {
        let variant: Variant = method.parse().map_err(err)?;
        let mut tc = match config {
            Some(p) => TrainConfig::load(&p).map_err(err)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = total_steps {
            tc.total_steps = v;
        }
        if let Some(v) = hidden {
            tc.hidden = v;
        }
        if let Some(v) = learning_rate {
            tc.learning_rate = v;
        }
        if let Some(v) = entropy_coef {
            tc.entropy_coef = v;
        }
        tc.validate().map_err(err)?;
        let cfg = scenario.inner.clone();
        let out = py
            .detach(|| ppo::train(&cfg, &tc, variant, seed))
            .map_err(err)?;
        Ok(PyPolicy {
            params: out.params,
            cfg,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf, scenario: &PyScenario) -> PyResult<Self> {
        let params = ppo::load_policy(&path, &scenario.inner).map_err(err)?;
        Ok(PyPolicy {
            params,
            cfg: scenario.inner.clone(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        ppo::save_policy(&self.params, &path).map_err(err)
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.params.variant.name()
    }

    /// Deterministic action for `state`.
    #[pyo3(signature = (state, snap=true))]
    fn act(&self, state: &PyState, snap: bool) -> PyResult<Action> {
        let enc = self.params.encode(&state.core(), &self.cfg).map_err(err)?;
        self.params
            .greedy_action(&enc, snap)
            .map(unpack)
            .map_err(err)
    }

    #[pyo3(signature = (placement=None, snap=true))]
    fn episode(&self, placement: Option<Vec<f64>>, snap: bool) -> PyResult<PyEpisode> {
        let p = placement.unwrap_or_else(|| self.cfg.default_placement());
        let start = TeamState::new(&self.cfg, p).map_err(err)?;
        let traj = ppo::policy_episode(&self.params, &self.cfg, start, &[], snap).map_err(err)?;
        Ok(PyEpisode {
            traj,
            cfg: self.cfg.clone(),
        })
    }

    /// Mean raw return over the given placements.
    #[pyo3(signature = (placements, snap=true))]
    fn evaluate(&self, placements: Vec<Vec<f64>>, snap: bool) -> PyResult<f64> {
        ppo::evaluate_policy(&self.params, &self.cfg, &placements, snap).map_err(err)
    }
}

/// Checks an emitted file against its schema and returns its kind.
#[pyfunction]
fn validate_file(path: PathBuf) -> PyResult<String> {
    harness::validate_file(Path::new(&path))
        .map(|k| format!("{k:?}"))
        .map_err(err)
}

#[pymodule]
fn overwatch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyStepResult>()?;
    m.add_class::<PyEpisode>()?;
    m.add_class::<PyOracle>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(step, m)?)?;
    m.add_function(wrap_pyfunction!(encode_scalar, m)?)?;
    m.add_function(wrap_pyfunction!(encode_state, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_action, m)?)?;
    m.add_function(wrap_pyfunction!(overwatch_action, m)?)?;
    m.add_function(wrap_pyfunction!(run_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(validate_file, m)?)?;
    Ok(())
}
