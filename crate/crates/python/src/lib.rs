//! Python bindings: the `pybvnc` extension module.
//!
//! Matrices cross the boundary as lists of row lists; files are passed by
//! path and containers as `bytes`.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use rand::SeedableRng;

use bvnc::compress::{self as codec, SymbolMatrix};
use bvnc::io::{CompressionMethod, CompressionOptions, DatasetSplit};
use bvnc::pipeline::PretrainedModel;
use bvnc::trainer::{evaluate_accuracy, TrainSchedule};
use bvnc::vb;

fn py_err(e: bvnc::Error) -> PyErr {
    match e {
        bvnc::Error::Io(_) | bvnc::Error::File { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn dataset(inputs: Vec<Vec<f64>>, labels: Vec<u8>) -> PyResult<DatasetSplit> {
    DatasetSplit::new(to_array(inputs)?, labels).map_err(py_err)
}

/// Parses an optional TOML schedule; `None` gives the desk-scale defaults.
fn schedule(toml_text: Option<&str>) -> PyResult<TrainSchedule> {
    let s: TrainSchedule = match toml_text {
        Some(t) => toml::from_str(t).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => TrainSchedule::desk_scale(),
    };
    s.validate().map_err(py_err)?;
    Ok(s)
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Negative KL of a Gaussian from the log-uniform prior (constant dropped).
#[pyfunction]
fn neg_kl_log_uniform(theta: f64, log_sigma2: f64) -> PyResult<f64> {
    vb::neg_kl_log_uniform(theta, log_sigma2).map_err(py_err)
}

/// Log gamma density of every `exp(log_lambda)`, summed.
#[pyfunction]
fn gamma_log_prior(log_lambda: Vec<f64>, alpha: f64, beta: f64) -> PyResult<f64> {
    vb::gamma_log_prior(&log_lambda, alpha, beta).map_err(py_err)
}

#[pyclass(name = "MixturePrior", module = "pybvnc", skip_from_py_object)]
#[derive(Clone)]
struct PyMixturePrior {
    inner: vb::MixturePrior,
}

#[pymethods]
impl PyMixturePrior {
    /// Mixture from proportions, means and precisions; `zero_index` marks a
    /// frozen zero-mean spike.
    #[new]
    #[pyo3(signature = (pi, mu, lam, zero_index=None))]
    fn new(pi: Vec<f64>, mu: Vec<f64>, lam: Vec<f64>, zero_index: Option<usize>) -> PyResult<Self> {
        let mut p = vb::MixturePrior::from_proportions(&pi, &mu, &lam).map_err(py_err)?;
        if let Some(z) = zero_index {
            p = p.with_zero_spike(z).map_err(py_err)?;
        }
        Ok(Self { inner: p })
    }

    #[getter]
    fn pi(&self) -> Vec<f64> {
        self.inner.pi()
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu.clone()
    }

    #[getter]
    fn lam(&self) -> Vec<f64> {
        self.inner.lambda()
    }

    #[getter]
    fn zero_index(&self) -> Option<usize> {
        self.inner.zero_index
    }

    fn log_density(&self, x: f64) -> PyResult<f64> {
        vb::log_gm_density(x, &self.inner).map_err(py_err)
    }

    fn responsibilities(&self, x: f64) -> PyResult<Vec<f64>> {
        vb::gm_responsibilities(x, &self.inner).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("MixturePrior(k={}, zero_index={:?})", self.inner.k(), self.inner.zero_index)
    }
}

#[pyclass(name = "Network", module = "pybvnc", skip_from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: bvnc::net::Network,
    prior: Option<vb::MixturePrior>,
}

#[pymethods]
impl PyNetwork {
    /// He-initialized network with the given widths.
    #[staticmethod]
    #[pyo3(signature = (dims, seed=0, log_sigma2=-10.0))]
    fn random(dims: Vec<usize>, seed: u64, log_sigma2: f64) -> PyResult<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let inner = bvnc::net::Network::random(&dims, log_sigma2, &mut rng).map_err(py_err)?;
        Ok(Self { inner, prior: None })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, prior) = bvnc::io::load_model(path).map_err(py_err)?;
        Ok(Self { inner, prior })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        bvnc::io::save_model(path, &self.inner, self.prior.as_ref()).map_err(py_err)
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims()
    }

    #[getter]
    fn prior(&self) -> Option<PyMixturePrior> {
        self.prior.clone().map(|inner| PyMixturePrior { inner })
    }

    /// Deterministic logits for a batch of input rows.
    fn forward(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = to_array(inputs)?;
        Ok(to_rows(&self.inner.forward_deterministic(x.view()).map_err(py_err)?))
    }

    fn accuracy(&self, inputs: Vec<Vec<f64>>, labels: Vec<u8>) -> PyResult<f64> {
        evaluate_accuracy(&self.inner, &dataset(inputs, labels)?).map_err(py_err)
    }

    /// L2 pretraining of the means. `schedule` is TOML text.
    #[pyo3(signature = (inputs, labels, schedule=None))]
    fn pretrain(&self, py: Python<'_>, inputs: Vec<Vec<f64>>, labels: Vec<u8>, schedule: Option<&str>) -> PyResult<Self> {
        let (data, s) = (dataset(inputs, labels)?, self::schedule(schedule)?);
        let net = self.inner.clone();
        let (inner, _) = py
            .detach(|| bvnc::trainer::pretrain_l2(net, &data, s.pretrain_weight_decay, &s))
            .map_err(py_err)?;
        Ok(Self { inner, prior: None })
    }

    /// Warm-up and joint phases; the mixture is seeded from the current
    /// weights, so call this on a pretrained network.
    #[pyo3(signature = (inputs, labels, schedule=None))]
    fn train_vdsws(&self, py: Python<'_>, inputs: Vec<Vec<f64>>, labels: Vec<u8>, schedule: Option<&str>) -> PyResult<Self> {
        let (data, s) = (dataset(inputs, labels)?, self::schedule(schedule)?);
        let pre = PretrainedModel { weights: self.inner.flat_theta(), net: self.inner.clone() };
        let (inner, prior) = py.detach(|| bvnc::pipeline::train_vdsws(&pre, &data, &s)).map_err(py_err)?;
        Ok(Self { inner, prior: Some(prior) })
    }

    /// Variational dropout alone for the combined budget of both phases.
    #[pyo3(signature = (inputs, labels, schedule=None))]
    fn train_vd(&self, py: Python<'_>, inputs: Vec<Vec<f64>>, labels: Vec<u8>, schedule: Option<&str>) -> PyResult<Self> {
        let (data, s) = (dataset(inputs, labels)?, self::schedule(schedule)?);
        let pre = PretrainedModel { weights: self.inner.flat_theta(), net: self.inner.clone() };
        let inner = py.detach(|| bvnc::pipeline::train_vd_only(&pre, &data, &s)).map_err(py_err)?;
        Ok(Self { inner, prior: None })
    }

    /// Quantizes, prunes and packs the network. Returns the container bytes
    /// and the compression report as JSON.
    #[pyo3(signature = (method="sws", offset_bits=5, threshold=0.95, components=64))]
    fn compress<'py>(
        &self,
        py: Python<'py>,
        method: &str,
        offset_bits: u8,
        threshold: f64,
        components: usize,
    ) -> PyResult<(Bound<'py, PyBytes>, String)> {
        let method = match method {
            "sws" => CompressionMethod::Sws,
            "vd-baseline" => CompressionMethod::VdBaseline,
            m => return Err(PyValueError::new_err(format!("unknown method {m:?}"))),
        };
        let opts = CompressionOptions {
            method,
            offset_bits,
            threshold,
            baseline_components: components,
        };
        let out = bvnc::pipeline::compress_model(&self.inner, self.prior.as_ref(), &opts, None).map_err(py_err)?;
        Ok((PyBytes::new(py, &out.bytes), out.report.to_json().map_err(py_err)?))
    }
}

/// Logits of a compressed container for a batch of input rows.
#[pyfunction]
fn container_forward(container: &[u8], inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let q = codec::CompressedModel::from_bytes(container)
        .and_then(|c| c.decode())
        .map_err(py_err)?;
    let x = to_array(inputs)?;
    Ok(to_rows(&q.forward(x.view()).map_err(py_err)?))
}

/// Offset-CSR encoding of a symbol matrix: `(A, IR, IC')`.
#[pyfunction]
fn csr_encode(matrix: Vec<Vec<u16>>, offset_bits: u8) -> PyResult<(Vec<u16>, Vec<u32>, Vec<u32>)> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    let m = SymbolMatrix::new(rows, cols, matrix.into_iter().flatten().collect()).map_err(py_err)?;
    let s = codec::csr_encode(&m, offset_bits).map_err(py_err)?;
    Ok((s.values, s.row_ptr, s.offsets))
}

/// Canonical Huffman code lengths for a symbol -> count map.
#[pyfunction]
fn huffman_lengths(frequencies: std::collections::BTreeMap<u16, u64>) -> PyResult<std::collections::BTreeMap<u16, u8>> {
    Ok(codec::huffman_build(&frequencies).map_err(py_err)?.lengths().clone())
}

/// Runs the command-line front end with `args` (without the program name).
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    bvnc::cli::run_cli(std::iter::once("bvnc".to_string()).chain(args))
}

#[pymodule]
fn pybvnc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(neg_kl_log_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_log_prior, m)?)?;
    m.add_function(wrap_pyfunction!(container_forward, m)?)?;
    m.add_function(wrap_pyfunction!(csr_encode, m)?)?;
    m.add_function(wrap_pyfunction!(huffman_lengths, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_class::<PyMixturePrior>()?;
    m.add_class::<PyNetwork>()?;
    Ok(())
}
