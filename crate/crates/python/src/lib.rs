//! Python bindings: activations, the Tetris board, feature encoding, value
//! networks, softmax selection and the training harness.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use silu_td::activations::ActivationKind;
use silu_td::env::tetris::{self, Board, PieceKind, Placement, TetrisVariant};
use silu_td::features::{encode_binary, extract_features, EncodingLayout};
use silu_td::harness::{self, AgentConfig, Checkpoint};
use silu_td::network::{ArchitectureSpec, Network};
use silu_td::policy::{self, PolicySpec, SoftmaxSchedule};
use silu_td::rng::{stream_rng, Stream};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn activation(name: &str) -> PyResult<ActivationKind> {
    name.parse().map_err(value_err)
}

fn variant(name: &str) -> PyResult<TetrisVariant> {
    match name {
        "sz" => Ok(TetrisVariant::Sz),
        "tetris10" => Ok(TetrisVariant::Tetris10),
        other => Err(PyValueError::new_err(format!(
            "unknown variant {other:?} (expected sz or tetris10)"
        ))),
    }
}

#[pyfunction]
fn activate(kind: &str, z: f64) -> PyResult<f64> {
    Ok(activation(kind)?.activate(z))
}

#[pyfunction]
fn activate_derivative(kind: &str, z: f64) -> PyResult<f64> {
    Ok(activation(kind)?.derivative(z))
}

#[pyclass(name = "Board", module = "silu_td_py", skip_from_py_object)]
#[derive(Clone)]
struct PyBoard(Board);

#[pymethods]
impl PyBoard {
    #[new]
    fn new(width: usize, height: usize) -> PyResult<Self> {
        Board::new(width, height).map(PyBoard).map_err(value_err)
    }

    /// Parses rows top to bottom, `#` for a filled cell and `.` for empty.
    #[staticmethod]
    fn from_ascii(text: &str) -> PyResult<Self> {
        Board::from_ascii(text).map(PyBoard).map_err(value_err)
    }

    #[staticmethod]
    fn empty(variant_name: &str) -> PyResult<Self> {
        Ok(PyBoard(variant(variant_name)?.empty_board()))
    }

    fn to_ascii(&self) -> String {
        self.0.to_ascii()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn get(&self, row: usize, col: usize) -> bool {
        self.0.get(row, col)
    }

    fn count_holes(&self) -> u32 {
        self.0.count_holes()
    }

    fn column_heights(&self) -> Vec<usize> {
        self.0.column_heights()
    }

    fn cell_count(&self) -> u32 {
        self.0.cell_count()
    }

    /// Drops `piece` and returns `(board, rows_cleared, terminal)`.
    fn drop_piece(&self, piece: &str, rotation: u8, column: u8) -> PyResult<(PyBoard, u32, bool)> {
        let kind: PieceKind = piece.parse().map_err(value_err)?;
        let rotations = kind.rotations();
        if rotation as usize >= rotations.len()
            || column as usize + rotations[rotation as usize].width > self.0.width()
        {
            return Err(PyValueError::new_err("placement outside the board"));
        }
        let d = tetris::afterstate(&self.0, kind, Placement { rotation, column });
        Ok((PyBoard(d.board), d.rows_cleared, d.terminal))
    }

    fn __repr__(&self) -> String {
        format!(
            "Board({}x{}, holes={})",
            self.0.width(),
            self.0.height(),
            self.0.count_holes()
        )
    }
}

/// `(rotation, column)` pairs in action order.
#[pyfunction]
fn enumerate_actions(width: usize, piece: &str) -> PyResult<Vec<(u8, u8)>> {
    let kind: PieceKind = piece.parse().map_err(value_err)?;
    if width < 4 {
        return Err(PyValueError::new_err("board width must be at least 4"));
    }
    Ok(tetris::enumerate_actions(width, kind)
        .into_iter()
        .map(|p| (p.rotation, p.column))
        .collect())
}

#[pyfunction]
fn shaped_reward(board: &PyBoard, divisor: f64) -> f64 {
    tetris::shaped_reward_with(&board.0, divisor)
}

/// Set positions of the binary feature vector, and its length.
#[pyfunction]
fn encode_features(board: &PyBoard, variant_name: &str) -> PyResult<(Vec<usize>, usize)> {
    let layout = EncodingLayout::for_variant(variant(variant_name)?);
    let v = encode_binary(&extract_features(&board.0), &layout);
    Ok((v.ones(), v.len()))
}

#[pyclass(name = "Network", module = "silu_td_py")]
struct PyNetwork(Network);

#[pymethods]
impl PyNetwork {
    /// One hidden layer of `hidden` units and a linear output layer.
    #[staticmethod]
    #[pyo3(signature = (inputs, hidden, activation_name, outputs = 1, seed = 0))]
    fn shallow(
        inputs: usize,
        hidden: usize,
        activation_name: &str,
        outputs: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = ArchitectureSpec::shallow(inputs, hidden, activation(activation_name)?, outputs);
        Network::init(spec, &mut stream_rng(seed, Stream::Init, 0))
            .map(PyNetwork)
            .map_err(value_err)
    }

    #[staticmethod]
    fn from_checkpoint(path: PathBuf) -> PyResult<Self> {
        Checkpoint::load(&path)
            .and_then(|c| c.network())
            .map(PyNetwork)
            .map_err(value_err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.0.param_count()
    }

    #[getter]
    fn input_len(&self) -> usize {
        self.0.input_len()
    }

    #[getter]
    fn output_len(&self) -> usize {
        self.0.output_len()
    }

    fn params(&self) -> Vec<f64> {
        self.0.flatten_params().0
    }

    fn set_params(&mut self, params: Vec<f64>) -> PyResult<()> {
        if params.len() != self.0.param_count() {
            return Err(PyValueError::new_err(format!(
                "expected {} parameters, got {}",
                self.0.param_count(),
                params.len()
            )));
        }
        self.0.params_mut().copy_from_slice(&params);
        Ok(())
    }

    fn forward(&self, input: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_input(&input)?;
        Ok(self.0.forward(&input))
    }

    #[pyo3(signature = (input, output_index = 0))]
    fn gradient(&self, input: Vec<f64>, output_index: usize) -> PyResult<Vec<f64>> {
        self.check_input(&input)?;
        if output_index >= self.0.output_len() {
            return Err(PyValueError::new_err("output index out of range"));
        }
        Ok(self.0.gradient(&input, output_index).0)
    }
}

impl PyNetwork {
    fn check_input(&self, input: &[f64]) -> PyResult<()> {
        if input.len() != self.0.input_len() {
            return Err(PyValueError::new_err(format!(
                "expected {} inputs, got {}",
                self.0.input_len(),
                input.len()
            )));
        }
        Ok(())
    }
}

#[pyfunction]
fn softmax_probs(values: Vec<f64>, tau: f64) -> PyResult<Vec<f64>> {
    if values.is_empty() || tau.is_nan() || tau <= 0.0 {
        return Err(PyValueError::new_err(
            "need at least one value and a positive temperature",
        ));
    }
    Ok(policy::softmax_probs(&values, tau))
}

#[pyfunction]
fn anneal_tau(tau0: f64, tau_k: f64, episode: u64) -> f64 {
    policy::anneal_tau(&SoftmaxSchedule::new(tau0, tau_k), episode)
}

fn build_config(
    preset: &str,
    overrides: Option<BTreeMap<String, String>>,
) -> PyResult<AgentConfig> {
    let mut config = AgentConfig::preset(preset).map_err(value_err)?;
    for (k, v) in overrides.unwrap_or_default() {
        config.set(&k, &v).map_err(value_err)?;
    }
    config.validate().map_err(value_err)?;
    Ok(config)
}

/// Trains from a preset with `key -> value` overrides, writing the run
/// directory. Returns the mean score of the first and last logging windows
/// and the final checkpoint path.
#[pyfunction]
#[pyo3(signature = (preset, out_dir, overrides = None))]
fn train(
    py: Python<'_>,
    preset: &str,
    out_dir: PathBuf,
    overrides: Option<BTreeMap<String, String>>,
) -> PyResult<HashMap<String, Py<PyAny>>> {
    let config = build_config(preset, overrides)?;
    let outcome = py
        .detach(|| harness::train(&config, &out_dir))
        .map_err(value_err)?;
    let mean = |s: Option<&harness::train::SummaryRow>| s.map_or(0.0, |s| s.mean_score);
    let mut out = HashMap::new();
    out.insert(
        "episodes".to_string(),
        outcome.rows.len().into_pyobject(py)?.into_any().unbind(),
    );
    out.insert(
        "first_mean".to_string(),
        mean(outcome.summaries.first())
            .into_pyobject(py)?
            .into_any()
            .unbind(),
    );
    out.insert(
        "last_mean".to_string(),
        mean(outcome.summaries.last())
            .into_pyobject(py)?
            .into_any()
            .unbind(),
    );
    out.insert(
        "checkpoint".to_string(),
        outcome.checkpoint.into_pyobject(py)?.into_any().unbind(),
    );
    Ok(out)
}

/// Frozen rollouts of a checkpoint; returns `(mean, sd, scores)`.
#[pyfunction]
#[pyo3(signature = (checkpoint, episodes, policy = "softmax", seed = 1))]
fn evaluate(
    py: Python<'_>,
    checkpoint: PathBuf,
    episodes: u64,
    policy: &str,
    seed: u64,
) -> PyResult<(f64, f64, Vec<u64>)> {
    let spec: PolicySpec = policy.parse().map_err(value_err)?;
    let ck = Checkpoint::load(&checkpoint).map_err(value_err)?;
    let stats = py
        .detach(|| harness::evaluate(&ck, episodes, spec, seed))
        .map_err(value_err)?;
    Ok((stats.mean, stats.sd, stats.scores))
}

#[pymodule]
fn silu_td_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(activate, m)?)?;
    m.add_function(wrap_pyfunction!(activate_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_actions, m)?)?;
    m.add_function(wrap_pyfunction!(shaped_reward, m)?)?;
    m.add_function(wrap_pyfunction!(encode_features, m)?)?;
    m.add_function(wrap_pyfunction!(softmax_probs, m)?)?;
    m.add_function(wrap_pyfunction!(anneal_tau, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<PyBoard>()?;
    m.add_class::<PyNetwork>()?;
    Ok(())
}
