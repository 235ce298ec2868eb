#![allow(clippy::useless_conversion)]

//! Python bindings: geometry reflections, robot symmetry discovery, the
//! tabletop simulator, dataset generation, training and evaluation.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use equibim::eval::{rollout_eval, run_experiment, ExperimentPlan};
use equibim::geometry::{self as geo, Pose, RigidTransform, UnitQuat, Vec3};
use equibim::learn::{metrics_csv, Checkpoint, TrainConfig, TrainMode};
use equibim::robot::{self, JointVector, RobotModel};
use equibim::sim::dataset::{generate_demos, Dataset};
use equibim::sim::{SideFilter, SimConfig, TaskId, TaskSpec, WorldState};
use equibim::symmetry::{self as sym, ActionMode, ImageGrid, Modality};
use equibim::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::Validation(_) | Error::UnknownLink(_) | Error::ModeMismatch(_)
        | Error::ShapeMismatch(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| PyValueError::new_err(e.to_string()))
}

fn plane(frame: Option<[f64; 6]>) -> RigidTransform {
    match frame {
        Some([x, y, z, roll, pitch, yaw]) => {
            RigidTransform::new(UnitQuat::from_rpy(roll, pitch, yaw), Vec3::new(x, y, z))
        }
        None => RigidTransform::IDENTITY,
    }
}

/// Reflects a point through the plane `y = 0` of the frame reached by the
/// world-to-plane transform `frame` (`x,y,z,roll,pitch,yaw`).
#[pyfunction]
#[pyo3(signature = (p, frame=None))]
fn reflect_point(p: [f64; 3], frame: Option<[f64; 6]>) -> [f64; 3] {
    geo::reflect_point(Vec3::from_array(p), &plane(frame)).to_array()
}

/// Conjugates a rotation `[w, x, y, z]` by the `y` reflection.
#[pyfunction]
fn reflect_rotation(q: [f64; 4]) -> [f64; 4] {
    geo::reflect_rotation(UnitQuat::from_array(q)).to_array()
}

/// Reflects a pose given as position and `[w, x, y, z]` quaternion.
#[pyfunction]
#[pyo3(signature = (position, orientation, frame=None))]
fn reflect_pose(position: [f64; 3], orientation: [f64; 4], frame: Option<[f64; 6]>) -> ([f64; 3], [f64; 4]) {
    let p = geo::reflect_pose(
        &Pose::new(Vec3::from_array(position), UnitQuat::from_array(orientation)),
        &plane(frame),
    );
    (p.position.to_array(), p.orientation.to_array())
}

/// Mirrors a row-major `height × width × channels` image left to right.
#[pyfunction]
fn flip_image(width: usize, height: usize, channels: usize, data: Vec<f64>) -> PyResult<Vec<f64>> {
    let img = ImageGrid::new(width, height, channels, data).map_err(to_py)?;
    Ok(sym::flip_image(&img).data)
}

/// A kinematic tree loaded from URDF.
#[pyclass(name = "Robot", module = "equibim")]
struct PyRobot {
    model: RobotModel,
}

#[pymethods]
impl PyRobot {
    #[staticmethod]
    fn from_urdf(text: &str) -> PyResult<Self> {
        Ok(Self {
            model: robot::parse_robot(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            model: robot::load_robot(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.model.name.clone()
    }

    #[getter]
    fn joint_names(&self) -> Vec<String> {
        self.model.actuated_joints().map(|j| j.name.clone()).collect()
    }

    #[getter]
    fn link_names(&self) -> Vec<String> {
        self.model.links.iter().map(|l| l.name.clone()).collect()
    }

    /// Pose of `link` as `(position, [w, x, y, z])`.
    fn forward_kinematics(&self, q: Vec<f64>, link: &str) -> PyResult<([f64; 3], [f64; 4])> {
        let p = robot::forward_kinematics(&self.model, &JointVector(q), link).map_err(to_py)?;
        Ok((p.position.to_array(), p.orientation.to_array()))
    }

    /// Discovers the joint mirror map and certifies it on held-out samples.
    /// Returns `(partner, signs, residual)`.
    #[pyo3(signature = (left_tip, right_tip, frame=None, samples=256, seed=0))]
    fn discover_symmetry(
        &self,
        left_tip: &str,
        right_tip: &str,
        frame: Option<[f64; 6]>,
        samples: usize,
        seed: u64,
    ) -> PyResult<(Vec<usize>, Vec<f64>, f64)> {
        let plane = plane(frame);
        let map = robot::discover_joint_symmetry(&self.model, left_tip, right_tip, &plane, &Default::default())
            .map_err(to_py)?;
        let cert = robot::symmetry_certificate(&self.model, &map, left_tip, right_tip, &plane, samples, seed)
            .map_err(to_py)?;
        Ok((map.partner.clone(), map.signs.clone(), cert.max_error()))
    }
}

/// Snapshot of the tabletop world.
#[pyclass(name = "State", module = "equibim")]
#[derive(Clone)]
struct PyState {
    state: WorldState,
}

#[pymethods]
impl PyState {
    #[getter]
    fn q(&self) -> [Vec<f64>; 2] {
        self.state.q.clone()
    }

    #[getter]
    fn gripper(&self) -> [f64; 2] {
        self.state.gripper
    }

    #[getter]
    fn object(&self) -> [f64; 3] {
        self.state.object.position.to_array()
    }

    #[getter]
    fn target(&self) -> [f64; 3] {
        self.state.target.to_array()
    }

    #[getter]
    fn step(&self) -> usize {
        self.state.step
    }

    fn __repr__(&self) -> String {
        format!("State(step={}, object={:?})", self.state.step, self.state.object.position.to_array())
    }
}

/// The dual-arm tabletop simulator.
#[pyclass(name = "Simulator", module = "equibim")]
struct PySimulator {
    sim: equibim::sim::Simulator,
}

#[pymethods]
impl PySimulator {
    #[new]
    #[pyo3(signature = (modality="image", action_mode="joint", image_size=64, n_points=256, history=2, horizon=8))]
    fn new(
        modality: &str,
        action_mode: &str,
        image_size: usize,
        n_points: usize,
        history: usize,
        horizon: usize,
    ) -> PyResult<Self> {
        let cfg = SimConfig {
            modality: parse::<Modality>(modality)?,
            action_mode: parse::<ActionMode>(action_mode)?,
            image_size,
            n_points,
            history,
            horizon,
            ..SimConfig::default()
        };
        Ok(Self {
            sim: equibim::sim::Simulator::tabletop(cfg).map_err(to_py)?,
        })
    }

    #[pyo3(signature = (task="pick_place", side="both", seed=0))]
    fn reset(&self, task: &str, side: &str, seed: u64) -> PyResult<PyState> {
        let task = TaskSpec::new(parse::<TaskId>(task)?, parse::<SideFilter>(side)?);
        Ok(PyState {
            state: self.sim.reset(&task, seed),
        })
    }

    /// Advances one step under the scripted expert.
    #[pyo3(signature = (state, task="pick_place"))]
    fn expert_step(&self, state: &PyState, task: &str) -> PyResult<PyState> {
        let task = TaskSpec::new(parse::<TaskId>(task)?, SideFilter::Both);
        let cmd = self.sim.expert_command(&state.state, &task);
        Ok(PyState {
            state: self.sim.step(&state.state, &cmd).map_err(to_py)?,
        })
    }

    fn mirror_state(&self, state: &PyState) -> PyState {
        PyState {
            state: self.sim.mirror_state(&state.state),
        }
    }

    #[pyo3(signature = (state, task="pick_place"))]
    fn success(&self, state: &PyState, task: &str) -> PyResult<bool> {
        let task = TaskSpec::new(parse::<TaskId>(task)?, SideFilter::Both);
        Ok(self.sim.success(&state.state, &task))
    }

    /// Row-major image as `(width, height, channels, data)`.
    fn render_image(&self, state: &PyState) -> (usize, usize, usize, Vec<f64>) {
        let img = self.sim.render_image(&state.state);
        (img.width, img.height, img.channels, img.data)
    }

    fn render_pointcloud(&self, state: &PyState) -> Vec<[f64; 3]> {
        self.sim.render_pointcloud(&state.state).points.iter().map(|p| p.to_array()).collect()
    }

    /// Fraction of scripted-expert episodes that succeed.
    #[pyo3(signature = (task="pick_place", episodes=20, seed=0))]
    fn expert_success_rate(&self, task: &str, episodes: usize, seed: u64) -> PyResult<f64> {
        let task = TaskSpec::new(parse::<TaskId>(task)?, SideFilter::Both);
        equibim::eval::success_rate(&self.sim, &task, episodes, seed, || equibim::sim::ExpertController { task })
            .map_err(to_py)
    }
}

/// Records expert demonstrations into `out`; returns the episode count.
#[pyfunction]
#[pyo3(signature = (out, task="pick_place", count=50, side="both", seed=0, modality="image", action_mode="joint", image_size=64, n_points=256, history=2, horizon=8))]
#[allow(clippy::too_many_arguments)]
fn generate(
    out: PathBuf,
    task: &str,
    count: usize,
    side: &str,
    seed: u64,
    modality: &str,
    action_mode: &str,
    image_size: usize,
    n_points: usize,
    history: usize,
    horizon: usize,
) -> PyResult<usize> {
    let sim = PySimulator::new(modality, action_mode, image_size, n_points, history, horizon)?.sim;
    let task = TaskSpec::new(parse::<TaskId>(task)?, parse::<SideFilter>(side)?);
    let ds = generate_demos(&sim, &task, count, seed, &out).map_err(to_py)?;
    Ok(ds.episodes.len())
}

/// Trains on the dataset at `data`, writes a checkpoint to `out` and
/// returns the per-epoch metrics CSV.
#[pyfunction]
#[pyo3(signature = (data, out, mode="equibim", lambda_sym=None, epochs=200, seed=0, lr=1e-3, batch_size=64, hidden=vec![256, 256], cosine_decay=false))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: PathBuf,
    out: PathBuf,
    mode: &str,
    lambda_sym: Option<f64>,
    epochs: usize,
    seed: u64,
    lr: f64,
    batch_size: usize,
    hidden: Vec<usize>,
    cosine_decay: bool,
) -> PyResult<String> {
    let mode = parse::<TrainMode>(mode)?;
    let cfg = TrainConfig {
        lambda_sym: lambda_sym.unwrap_or(mode.default_lambda()),
        epochs,
        seed,
        lr,
        batch_size,
        hidden,
        cosine_decay,
        ..TrainConfig::new(mode)
    };
    cfg.validate().map_err(to_py)?;
    py.allow_threads(|| {
        let ds = Dataset::load(&data)?;
        let sim = equibim::sim::Simulator::tabletop(ds.layout().sim_config())?;
        let result = equibim::learn::train(&ds, &sim.symmetry, &cfg)?;
        let csv = metrics_csv(&result.metrics);
        Checkpoint::new(result.policy, &cfg, result.diverged).save(&out)?;
        Ok(csv)
    })
    .map_err(to_py)
}

/// Closed-loop success rate of the checkpoint at `ckpt`.
#[pyfunction]
#[pyo3(signature = (ckpt, task="pick_place", episodes=50, side="both", seed=0))]
fn evaluate(py: Python<'_>, ckpt: PathBuf, task: &str, episodes: usize, side: &str, seed: u64) -> PyResult<f64> {
    let task = TaskSpec::new(parse::<TaskId>(task)?, SideFilter::Both);
    let side = parse::<SideFilter>(side)?;
    py.allow_threads(|| {
        let ckpt = Checkpoint::load(&ckpt)?;
        let sim = equibim::sim::Simulator::tabletop(ckpt.policy.layout.sim_config())?;
        rollout_eval(&sim, &ckpt.policy, &task, episodes, seed, side)
    })
    .map_err(to_py)
}

/// Runs an experiment plan given as JSON; writes the report to `out` when
/// given and returns the per-cell CSV.
#[pyfunction]
#[pyo3(signature = (plan_json, out=None))]
fn report(py: Python<'_>, plan_json: &str, out: Option<PathBuf>) -> PyResult<String> {
    let plan: ExperimentPlan = serde_json::from_str(plan_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.allow_threads(|| run_experiment(&plan, out.as_deref()).map(|r| r.csv()))
        .map_err(to_py)
}

#[pymodule]
#[pyo3(name = "equibim")]
fn equibim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(reflect_point, m)?)?;
    m.add_function(wrap_pyfunction!(reflect_rotation, m)?)?;
    m.add_function(wrap_pyfunction!(reflect_pose, m)?)?;
    m.add_function(wrap_pyfunction!(flip_image, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_class::<PyRobot>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PySimulator>()?;
    Ok(())
}
