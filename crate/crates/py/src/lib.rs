//! Python bindings: topology construction, compression, experiment runs and
//! descent-constant verification.

use motef_core::algorithms::{run, Algorithm, HyperParams};
use motef_core::compressors::{compress, verify_contractive, CompressorKind, CompressorSpec};
use motef_core::diagnostics::{verify_descent_constants, Family, VerifyGrid};
use motef_core::harness::{load_config, run_experiment};
use motef_core::problems::synth_new;
use motef_core::rng::{stream, Purpose};
use motef_core::topology::{
    build_topology_weighted, spectral_gap as core_spectral_gap, validate_mixing, GraphKind,
    GraphParams, WeightScheme,
};
use motef_core::SimError;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn err(e: SimError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A communication graph with its mixing matrix and spectral gap.
#[pyclass(name = "Topology")]
struct PyTopology {
    inner: motef_core::topology::Topology,
}

#[pymethods]
impl PyTopology {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho()
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    /// Mixing matrix as a nested list, row major.
    fn w(&self) -> Vec<Vec<f64>> {
        let w = self.inner.w();
        (0..w.nrows())
            .map(|i| (0..w.ncols()).map(|j| w[(i, j)]).collect())
            .collect()
    }

    /// Validation report as a dict.
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = validate_mixing(self.inner.w());
        let d = PyDict::new(py);
        d.set_item("symmetry_defect", r.symmetry_defect)?;
        d.set_item("max_row_sum_dev", r.max_row_sum_dev)?;
        d.set_item("max_col_sum_dev", r.max_col_sum_dev)?;
        d.set_item("rho", r.rho)?;
        d.set_item("smax_sq_w_minus_i", r.smax_sq_w_minus_i)?;
        d.set_item("pass", r.pass)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Topology(kind='{}', n={}, rho={})",
            self.inner.kind(),
            self.inner.n(),
            self.inner.rho()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (kind, n, seed=0, p=None, degree=None, rows=None, cols=None, scheme="metropolis"))]
#[allow(clippy::too_many_arguments)]
fn build_topology(
    kind: &str,
    n: usize,
    seed: u64,
    p: Option<f64>,
    degree: Option<usize>,
    rows: Option<usize>,
    cols: Option<usize>,
    scheme: &str,
) -> PyResult<PyTopology> {
    let kind: GraphKind = kind.parse().map_err(err)?;
    let scheme: WeightScheme = scheme.parse().map_err(err)?;
    let params = GraphParams {
        p,
        degree,
        rows,
        cols,
    };
    let inner = build_topology_weighted(kind, n, params, seed, scheme).map_err(err)?;
    Ok(PyTopology { inner })
}

/// Spectral gap `1 - |lambda_2|` of a symmetric doubly stochastic matrix.
#[pyfunction]
fn spectral_gap(w: Vec<Vec<f64>>) -> PyResult<f64> {
    let n = w.len();
    if w.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| w[i][j]);
    core_spectral_gap(&m).map_err(err)
}

/// A contractive compressor bound to a fixed dimension.
#[pyclass(name = "Compressor")]
struct PyCompressor {
    spec: CompressorSpec,
}

#[pymethods]
impl PyCompressor {
    #[new]
    fn new(spec: &str, d: usize) -> PyResult<Self> {
        let kind: CompressorKind = spec.parse().map_err(err)?;
        Ok(PyCompressor {
            spec: kind.with_dim(d).map_err(err)?,
        })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.spec.alpha()
    }

    #[getter]
    fn message_bits(&self) -> u64 {
        self.spec.message_bits()
    }

    /// Compress a vector; returns `(payload, bits)`.
    #[pyo3(signature = (x, seed=0))]
    fn compress(&self, x: Vec<f64>, seed: u64) -> PyResult<(Vec<f64>, u64)> {
        let v = DVector::from_vec(x);
        let mut rng = stream(seed, 0, 0, Purpose::Scratch);
        let msg = compress(&self.spec, &v, &mut rng).map_err(err)?;
        Ok((msg.payload.iter().copied().collect(), msg.bits))
    }

    /// Max observed `||C(x) - x||^2 / ||x||^2` over standard-normal inputs.
    #[pyo3(signature = (trials=100, inner=1000, seed=0))]
    fn verify_contractive(&self, trials: usize, inner: usize, seed: u64) -> PyResult<f64> {
        let mut rng = stream(seed, 0, 0, Purpose::Scratch);
        verify_contractive(&self.spec, trials, inner, &mut rng).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Compressor('{}', d={}, alpha={})",
            self.spec.kind(),
            self.spec.dim(),
            self.spec.alpha()
        )
    }
}

fn record_to_dict<'py>(
    py: Python<'py>,
    r: &motef_core::algorithms::MetricsRecord,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", r.t)?;
    d.set_item("bits_cum", r.bits_cum)?;
    d.set_item("grad_norm_sq", r.grad_norm_sq)?;
    d.set_item("consensus", r.consensus)?;
    d.set_item("loss", r.loss)?;
    d.set_item("subopt", r.subopt)?;
    d.set_item("test_acc", r.test_acc)?;
    Ok(d)
}

/// Run one algorithm on the synthetic least-squares problem; returns a list
/// of metric dicts.
#[pyfunction]
#[pyo3(signature = (algorithm, n, d, zeta, sigma, topology, compressor, gamma, eta,
                    lambda_momentum, iters, eval_every=100, seed=0, batch=1, init_batch=1))]
#[allow(clippy::too_many_arguments)]
fn run_synthetic(
    py: Python<'_>,
    algorithm: &str,
    n: usize,
    d: usize,
    zeta: f64,
    sigma: f64,
    topology: &str,
    compressor: &str,
    gamma: f64,
    eta: f64,
    lambda_momentum: f64,
    iters: u64,
    eval_every: u64,
    seed: u64,
    batch: usize,
    init_batch: usize,
) -> PyResult<Vec<Py<PyDict>>> {
    let alg: Algorithm = algorithm.parse().map_err(err)?;
    let kind: GraphKind = topology.parse().map_err(err)?;
    let topo =
        build_topology_weighted(kind, n, GraphParams::default(), seed, WeightScheme::Metropolis)
            .map_err(err)?;
    let oracle = synth_new(n, d, zeta, sigma, seed).map_err(err)?;
    let comp: CompressorKind = compressor.parse().map_err(err)?;
    let comp = comp.with_dim(d).map_err(err)?;
    let hp = HyperParams {
        gamma,
        eta,
        lambda: lambda_momentum,
        batch,
        init_batch,
        iters,
    };
    let records = run(alg, &oracle, &topo, &comp, &hp, eval_every, seed).map_err(err)?;
    records
        .iter()
        .map(|r| record_to_dict(py, r).map(Bound::unbind))
        .collect()
}

/// Run an experiment from a config file; returns the output CSV path.
#[pyfunction]
fn run_config(path: PathBuf) -> PyResult<String> {
    let cfg = load_config(&path).map_err(err)?;
    let summary = run_experiment(&cfg).map_err(err)?;
    Ok(summary.output.display().to_string())
}

/// Verify a descent-constant system on its default grid; returns
/// `(pass, worst_margin, worst_point)`.
#[pyfunction]
#[pyo3(signature = (family, points=5))]
fn verify_constants(
    py: Python<'_>,
    family: &str,
    points: usize,
) -> PyResult<(bool, f64, Py<PyDict>)> {
    let family: Family = family.parse().map_err(err)?;
    let grid = VerifyGrid::default_for(family, points);
    let report = verify_descent_constants(family, &grid).map_err(err)?;
    let worst = PyDict::new(py);
    worst.set_item("alpha", report.worst_point.alpha)?;
    worst.set_item("rho", report.worst_point.rho)?;
    worst.set_item("n", report.worst_point.n)?;
    worst.set_item("tau", report.worst_point.tau)?;
    worst.set_item("mu_over_l", report.worst_point.mu_over_l)?;
    Ok((report.pass, report.worst_margin, worst.unbind()))
}

#[pymodule]
fn motef_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTopology>()?;
    m.add_class::<PyCompressor>()?;
    m.add_function(wrap_pyfunction!(build_topology, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_gap, m)?)?;
    m.add_function(wrap_pyfunction!(run_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify_constants, m)?)?;
    Ok(())
}
