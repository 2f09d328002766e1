//! Python bindings: the AES model, design presets, trace simulation, the
//! CPA attack, and MTD sweeps, mirroring the CLI's defaults.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use cpalab::aes::{self, Block128, Key128, PowerModelKind};
use cpalab::analysis::{experiment_with_mode, mtd_on_scalars, AttackParams, MtdMode, MtdOutcome};
use cpalab::cpa::{run_cpa, CpaResult, Selection};
use cpalab::leakage::{
    derive_plaintexts, preset, reduce_to_scalar_windows, simulate_traces, DesignConfig, DesignKind,
    NoiseParams, TraceSet as CoreTraceSet, DEFAULT_SIGMA_EL_REL, DEFAULT_WINDOW1, DEFAULT_WINDOW2,
};
use cpalab::traceio::{read_traceset_file, write_traceset_file};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn block_from_bytes(bytes: &[u8], what: &str) -> PyResult<Block128> {
    let arr: [u8; 16] = bytes.try_into().map_err(|_| {
        value_err(format!(
            "{what} must be exactly 16 bytes, got {}",
            bytes.len()
        ))
    })?;
    Ok(Block128::new(arr))
}

fn parse_model(name: &str) -> PyResult<PowerModelKind> {
    match name {
        "hw" => Ok(PowerModelKind::HwZeroPrev),
        "hd-plaintext" => Ok(PowerModelKind::HdPlaintextPrev),
        other => Err(value_err(format!(
            "unknown model {other:?}; expected \"hw\" or \"hd-plaintext\""
        ))),
    }
}

/// AES-128 single-block encryption.
#[pyfunction]
fn encrypt(pt: Vec<u8>, key: Vec<u8>) -> PyResult<Vec<u8>> {
    let pt = block_from_bytes(&pt, "plaintext")?;
    let key = Key128::new(block_from_bytes(&key, "key")?.bytes);
    Ok(aes::encrypt(&pt, &key).bytes.to_vec())
}

/// AES S-box lookup.
#[pyfunction]
fn sbox(x: u8) -> u8 {
    aes::sbox(x)
}

/// Inverse AES S-box lookup.
#[pyfunction]
fn inv_sbox(x: u8) -> u8 {
    aes::inv_sbox(x)
}

/// Plaintext XOR key, the attacked intermediate register value.
#[pyfunction]
fn intermediate_register(pt: Vec<u8>, key: Vec<u8>) -> PyResult<Vec<u8>> {
    let pt = block_from_bytes(&pt, "plaintext")?;
    let key = Key128::new(block_from_bytes(&key, "key")?.bytes);
    Ok(aes::intermediate_register(&pt, &key).bytes.to_vec())
}

/// Per-byte hypothetical power value in 0..=8.
#[pyfunction]
#[pyo3(signature = (pt_byte, guess, model = "hw"))]
fn hypothesis(pt_byte: u8, guess: u8, model: &str) -> PyResult<u32> {
    Ok(aes::hypothesis(pt_byte, guess, &parse_model(model)?))
}

/// Bitwise majority of three 16-byte blocks.
#[pyfunction]
fn majority_vote(a: Vec<u8>, b: Vec<u8>, c: Vec<u8>) -> PyResult<Vec<u8>> {
    let a = block_from_bytes(&a, "a")?;
    let b = block_from_bytes(&b, "b")?;
    let c = block_from_bytes(&c, "c")?;
    Ok(aes::majority_vote(&a, &b, &c).bytes.to_vec())
}

/// Leakage configuration of one of the modeled designs.
#[pyclass(name = "Design")]
struct PyDesign {
    inner: DesignConfig,
}

#[pymethods]
impl PyDesign {
    /// Builds a preset: "single", "tmr-ide", "tmr-opt", or "tmr-dif".
    #[staticmethod]
    fn preset(kind: &str) -> PyResult<Self> {
        let kind: DesignKind = kind.parse().map_err(value_err)?;
        Ok(PyDesign {
            inner: preset(kind),
        })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn nominal_power(&self) -> f64 {
        self.inner.nominal_power
    }

    #[getter]
    fn num_instances(&self) -> usize {
        self.inner.instances.len()
    }

    #[getter]
    fn samples_per_trace(&self) -> usize {
        self.inner.samples_per_trace
    }

    /// Serializes every field in the key = value config format.
    fn config_text(&self) -> String {
        self.inner.to_config_text()
    }

    /// Applies key = value overrides; raises ValueError on bad input.
    fn apply_config_text(&mut self, text: &str) -> PyResult<()> {
        self.inner.apply_config_text(text).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(label={:?}, nominal_power={}, instances={})",
            self.inner.label,
            self.inner.nominal_power,
            self.inner.instances.len()
        )
    }
}

/// A simulated or loaded set of power traces.
#[pyclass(name = "TraceSet")]
struct PyTraceSet {
    inner: CoreTraceSet,
}

#[pymethods]
impl PyTraceSet {
    #[getter]
    fn n_traces(&self) -> usize {
        self.inner.n_traces()
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn design_label(&self) -> String {
        self.inner.design_label.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn sample_period_ns(&self) -> f64 {
        self.inner.sample_period_ns
    }

    #[getter]
    fn known_key(&self) -> Option<Vec<u8>> {
        self.inner.known_key.map(|k| k.bytes.to_vec())
    }

    fn trace(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.inner.n_traces() {
            return Err(value_err(format!("trace index {index} out of range")));
        }
        Ok(self.inner.trace(index).to_vec())
    }

    fn plaintext(&self, index: usize) -> PyResult<Vec<u8>> {
        self.inner
            .plaintexts()
            .get(index)
            .map(|p| p.bytes.to_vec())
            .ok_or_else(|| value_err(format!("trace index {index} out of range")))
    }

    /// Writes the SCTR binary file; returns the byte count.
    fn write(&self, path: &str) -> PyResult<u64> {
        write_traceset_file(&self.inner, std::path::Path::new(path)).map_err(io_err)
    }

    /// Reads an SCTR binary file.
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let inner = read_traceset_file(std::path::Path::new(path)).map_err(io_err)?;
        Ok(PyTraceSet { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "TraceSet(design={:?}, n_traces={}, n_samples={})",
            self.inner.design_label,
            self.inner.n_traces(),
            self.inner.n_samples()
        )
    }
}

/// Simulates a trace set with pseudo-random plaintexts derived from `seed`,
/// matching the CLI's `simulate` subcommand.
#[pyfunction]
#[pyo3(signature = (design, key, num_traces, sigma_el_rel = DEFAULT_SIGMA_EL_REL, seed = 1))]
fn simulate(
    design: &PyDesign,
    key: Vec<u8>,
    num_traces: usize,
    sigma_el_rel: f64,
    seed: u64,
) -> PyResult<PyTraceSet> {
    let key = Key128::new(block_from_bytes(&key, "key")?.bytes);
    let plaintexts = derive_plaintexts(seed, num_traces);
    let mut noise = NoiseParams::new(seed);
    noise.sigma_el_rel = sigma_el_rel;
    let inner = simulate_traces(&design.inner, &key, &plaintexts, &noise).map_err(value_err)?;
    Ok(PyTraceSet { inner })
}

/// Window2-minus-window1 scalar per trace (default cycle windows).
#[pyfunction]
fn reduce_to_scalar(ts: &PyTraceSet) -> PyResult<Vec<f64>> {
    reduce_to_scalar_windows(&ts.inner, DEFAULT_WINDOW1, DEFAULT_WINDOW2).map_err(value_err)
}

/// Outcome of a CPA attack.
#[pyclass(name = "AttackResult")]
struct PyAttackResult {
    inner: CpaResult,
}

#[pymethods]
impl PyAttackResult {
    #[getter]
    fn guessed(&self) -> u8 {
        self.inner.guessed
    }

    /// All 256 guesses, best first.
    #[getter]
    fn ranking(&self) -> Vec<u8> {
        self.inner.ranking.clone()
    }

    /// Selection statistic per guess (signed r by default).
    #[getter]
    fn statistic(&self) -> Vec<f64> {
        self.inner.statistic.clone()
    }

    #[getter]
    fn n_traces_used(&self) -> usize {
        self.inner.n_traces_used
    }

    /// Correlation values for one guess.
    fn pcc(&self, guess: u8) -> Vec<f64> {
        self.inner.pcc_for(guess).to_vec()
    }

    /// 1-based rank of a byte value; 1 means disclosed.
    fn key_rank(&self, true_byte: u8) -> usize {
        self.inner.key_rank(true_byte)
    }

    fn __repr__(&self) -> String {
        format!(
            "AttackResult(guessed=0x{:02X}, n_traces_used={})",
            self.inner.guessed, self.inner.n_traces_used
        )
    }
}

/// Runs the CPA attack on a trace set using the default cycle windows.
#[pyfunction]
#[pyo3(signature = (ts, byte_index = 0, model = "hw", absolute = false))]
fn attack(
    ts: &PyTraceSet,
    byte_index: usize,
    model: &str,
    absolute: bool,
) -> PyResult<PyAttackResult> {
    let scalars =
        reduce_to_scalar_windows(&ts.inner, DEFAULT_WINDOW1, DEFAULT_WINDOW2).map_err(value_err)?;
    let selection = if absolute {
        Selection::MaxAbs
    } else {
        Selection::MaxSigned
    };
    let inner = run_cpa(
        &scalars,
        ts.inner.plaintexts(),
        byte_index,
        &parse_model(model)?,
        selection,
    )
    .map_err(value_err)?;
    Ok(PyAttackResult { inner })
}

/// Result of a minimum-traces-to-disclosure sweep.
#[pyclass(name = "MtdResult")]
struct PyMtdResult {
    inner: MtdOutcome,
}

#[pymethods]
impl PyMtdResult {
    #[getter]
    fn disclosed(&self) -> bool {
        self.inner.disclosed
    }

    #[getter]
    fn n_required(&self) -> Option<usize> {
        self.inner.n_required
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max
    }

    #[getter]
    fn key_byte(&self) -> u8 {
        self.inner.key_byte
    }

    fn __repr__(&self) -> String {
        format!(
            "MtdResult(disclosed={}, n_required={:?}, n_max={})",
            self.inner.disclosed, self.inner.n_required, self.inner.n_max
        )
    }
}

/// Sweeps trace-count prefixes until the attack ranks `true_byte` first.
/// Without `true_byte` the trace set's known key supplies the target.
#[pyfunction]
#[pyo3(signature = (ts, true_byte = None, step = 10, stable = false, byte_index = 0))]
fn mtd(
    ts: &PyTraceSet,
    true_byte: Option<u8>,
    step: usize,
    stable: bool,
    byte_index: usize,
) -> PyResult<PyMtdResult> {
    if byte_index > 15 {
        return Err(value_err("byte_index must be 0..=15"));
    }
    let true_byte = match (true_byte, &ts.inner.known_key) {
        (Some(b), _) => b,
        (None, Some(key)) => key.bytes[byte_index],
        (None, None) => return Err(value_err("trace set has no known key; pass true_byte")),
    };
    let scalars =
        reduce_to_scalar_windows(&ts.inner, DEFAULT_WINDOW1, DEFAULT_WINDOW2).map_err(value_err)?;
    let params = AttackParams {
        byte_index,
        ..AttackParams::default()
    };
    let mode = if stable {
        MtdMode::Stable
    } else {
        MtdMode::FirstHit
    };
    let inner =
        mtd_on_scalars(&ts.inner, &scalars, true_byte, &params, step, mode).map_err(value_err)?;
    Ok(PyMtdResult { inner })
}

/// Repeated-key experiment; see the CLI's `experiment` subcommand.
#[pyclass(name = "ExperimentResult")]
struct PyExperimentResult {
    outcomes: Vec<MtdOutcome>,
    mean: Option<f64>,
    std: Option<f64>,
}

#[pymethods]
impl PyExperimentResult {
    #[getter]
    fn n_keys(&self) -> usize {
        self.outcomes.len()
    }

    #[getter]
    fn n_disclosed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.disclosed).count()
    }

    /// Mean of disclosed MTDs; None when fewer than two disclosed.
    #[getter]
    fn mean(&self) -> Option<f64> {
        self.mean
    }

    #[getter]
    fn std(&self) -> Option<f64> {
        self.std
    }

    fn outcomes(&self) -> Vec<PyMtdResult> {
        self.outcomes
            .iter()
            .map(|o| PyMtdResult { inner: o.clone() })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentResult(disclosed={}/{}, mean={:?})",
            self.n_disclosed(),
            self.n_keys(),
            self.mean
        )
    }
}

#[pyfunction]
#[pyo3(signature = (design_kind, n_keys, n_max, step = 10, seed = 1, stable = false))]
fn experiment(
    design_kind: &str,
    n_keys: usize,
    n_max: usize,
    step: usize,
    seed: u64,
    stable: bool,
) -> PyResult<PyExperimentResult> {
    let kind: DesignKind = design_kind.parse().map_err(value_err)?;
    let mode = if stable {
        MtdMode::Stable
    } else {
        MtdMode::FirstHit
    };
    let result = experiment_with_mode(kind, n_keys, n_max, step, seed, mode).map_err(value_err)?;
    Ok(PyExperimentResult {
        mean: result.fit.map(|f| f.mean),
        std: result.fit.map(|f| f.std),
        outcomes: result.outcomes,
    })
}

#[pymodule]
fn cpalab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDesign>()?;
    m.add_class::<PyTraceSet>()?;
    m.add_class::<PyAttackResult>()?;
    m.add_class::<PyMtdResult>()?;
    m.add_class::<PyExperimentResult>()?;
    m.add_function(wrap_pyfunction!(encrypt, m)?)?;
    m.add_function(wrap_pyfunction!(sbox, m)?)?;
    m.add_function(wrap_pyfunction!(inv_sbox, m)?)?;
    m.add_function(wrap_pyfunction!(intermediate_register, m)?)?;
    m.add_function(wrap_pyfunction!(hypothesis, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(reduce_to_scalar, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(mtd, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    Ok(())
}
