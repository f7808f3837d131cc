//! Python bindings for `netdiff`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use engine::baselines::{self, ContingencyTable2x2};
use engine::graph::{self, EdgeVector, Group, InputFormat, NetworkDataset};
use engine::inference::chain::{load_chains, save_chains};
use engine::inference::{self, DiagnosticsReport, GibbsConfig, Hyperparameters, PosteriorChain};
use engine::simulation;
use engine::testing::{self, TestReport};
use engine::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::NonFinite { .. } | Error::Csv(_) | Error::Json(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn group(label: u8) -> PyResult<Group> {
    match label {
        1 => Ok(Group::One),
        2 => Ok(Group::Two),
        other => Err(PyValueError::new_err(format!("group label {other} not in {{1, 2}}"))),
    }
}

/// Binary networks with group labels. Each network is its lower-triangular
/// edge vector, read column by column.
#[pyclass(name = "Dataset", module = "netdiff", frozen)]
struct PyDataset {
    inner: NetworkDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (v, networks, groups, blocks = None))]
    fn new(v: usize, networks: Vec<Vec<u8>>, groups: Vec<u8>, blocks: Option<Vec<usize>>) -> PyResult<Self> {
        let nets = networks.into_iter().map(|b| EdgeVector::new(v, b)).collect::<Result<Vec<_>, _>>().map_err(err)?;
        let groups = groups.into_iter().map(group).collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: NetworkDataset::new(v, nets, groups, blocks).map_err(err)? })
    }

    /// Reads a networks CSV (or adjacency directory), a groups CSV and optional blocks CSV.
    #[staticmethod]
    #[pyo3(signature = (networks, groups, blocks = None, format = "csv"))]
    fn load(networks: PathBuf, groups: PathBuf, blocks: Option<PathBuf>, format: &str) -> PyResult<Self> {
        let format: InputFormat = format.parse().map_err(PyValueError::new_err)?;
        Ok(Self { inner: graph::load_dataset(&networks, &groups, format, blocks.as_deref()).map_err(err)? })
    }

    fn save(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        graph::save_dataset(&self.inner, &dir).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn v(&self) -> usize {
        self.inner.v()
    }

    #[getter]
    fn networks(&self) -> Vec<Vec<u8>> {
        self.inner.networks().iter().map(|e| e.bits().to_vec()).collect()
    }

    #[getter]
    fn groups(&self) -> Vec<u8> {
        self.inner.groups().iter().map(|g| g.label()).collect()
    }

    fn edge_frequencies(&self) -> Vec<f64> {
        self.inner.edge_frequencies()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        let [n1, n2] = self.inner.group_sizes();
        format!("Dataset(v={}, n={}, group sizes={n1}/{n2})", self.inner.v(), self.inner.n())
    }
}

/// Stored posterior draws of one or more chains.
#[pyclass(name = "Fit", module = "netdiff", frozen)]
struct PyFit {
    chains: Vec<PosteriorChain>,
}

#[pymethods]
impl PyFit {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self { chains: load_chains(&dir).map_err(err)? })
    }

    fn save(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        save_chains(&self.chains, &dir).map_err(err)
    }

    #[getter]
    fn n_chains(&self) -> usize {
        self.chains.len()
    }

    #[getter]
    fn n_stored(&self) -> usize {
        self.chains.iter().map(|c| c.n_stored()).sum()
    }

    /// Stored `T` draws of every chain.
    fn t_draws(&self) -> Vec<Vec<u8>> {
        self.chains.iter().map(|c| c.t.clone()).collect()
    }

    /// `(pr(H1 | data), reject)`.
    #[pyo3(signature = (threshold = testing::DEFAULT_GLOBAL_THRESHOLD))]
    fn global_test(&self, threshold: f64) -> PyResult<(f64, bool)> {
        testing::global_test(&self.chains, threshold).map_err(err)
    }

    /// `(pr(rho_l > epsilon | data), reject)` per edge.
    #[pyo3(signature = (epsilon = testing::DEFAULT_EPSILON, threshold = testing::DEFAULT_LOCAL_THRESHOLD))]
    fn local_tests(&self, epsilon: f64, threshold: f64) -> PyResult<(Vec<f64>, Vec<bool>)> {
        testing::local_tests(&self.chains, epsilon, threshold).map_err(err)
    }

    /// Full test report as a JSON string.
    #[pyo3(signature = (
        global_threshold = testing::DEFAULT_GLOBAL_THRESHOLD,
        epsilon = testing::DEFAULT_EPSILON,
        local_threshold = testing::DEFAULT_LOCAL_THRESHOLD,
        fdr_target = None,
    ))]
    fn report(&self, global_threshold: f64, epsilon: f64, local_threshold: f64, fdr_target: Option<f64>) -> PyResult<String> {
        let r = TestReport::from_chains(&self.chains, global_threshold, epsilon, local_threshold, fdr_target).map_err(err)?;
        serde_json::to_string(&r).map_err(json_err)
    }

    /// PSRF and ESS summary as a JSON string.
    #[pyo3(signature = (pieces = 4))]
    fn diagnostics(&self, pieces: usize) -> PyResult<String> {
        let d = DiagnosticsReport::from_chains(&self.chains, pieces).map_err(err)?;
        serde_json::to_string(&d).map_err(json_err)
    }

    /// Posterior means of the group edge probabilities.
    fn group_edge_probs(&self) -> (Vec<f64>, Vec<f64>) {
        let mean = |y: usize| {
            let m = self.chains[0].group_probs[y].cols();
            let mut s = vec![0.0; m];
            let mut k = 0usize;
            for c in &self.chains {
                let d = &c.group_probs[y];
                for i in 0..d.rows() {
                    s.iter_mut().zip(d.row(i)).for_each(|(a, b)| *a += b);
                }
                k += d.rows();
            }
            s.into_iter().map(|x| x / k.max(1) as f64).collect()
        };
        (mean(0), mean(1))
    }

    /// Posterior predictive probability of group 2 for each network.
    fn predict(&self, networks: Vec<Vec<u8>>) -> PyResult<Vec<f64>> {
        let snaps: Vec<_> = self.chains.iter().filter_map(|c| c.snapshots.as_ref()).flatten().cloned().collect();
        let v = self.chains[0].meta.v;
        networks
            .into_iter()
            .map(|b| {
                let e = EdgeVector::new(v, b).map_err(err)?;
                testing::predict_group(&snaps, &e).map_err(err)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Fit(chains={}, stored draws={})", self.chains.len(), self.n_stored())
    }
}

/// Simulates a named benchmark scenario; returns the dataset and the
/// per-edge indicator of a true group difference.
#[pyfunction]
#[pyo3(signature = (scenario, seed = 0, n = None))]
fn simulate(scenario: &str, seed: u64, n: Option<usize>) -> PyResult<(PyDataset, Vec<bool>)> {
    let spec = simulation::scenario_by_name(scenario, n.unwrap_or(50), seed).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown scenario `{scenario}` (expected one of {})",
            simulation::SCENARIO_NAMES.join(", ")
        ))
    })?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let data = spec.generate(&mut rng).map_err(err)?;
    Ok((PyDataset { inner: data }, spec.local_truth().map_err(err)?))
}

/// Runs the Gibbs sampler. Chains run in parallel with the GIL released.
#[pyfunction]
#[pyo3(signature = (
    data, iterations = 5000, burn_in = 1000, thin = 1, chains = 1, seed = 0,
    h_max = 10, r_max = 10, z_var = 10.0, mig_a1 = 2.5, mig_a2 = 3.5, prior_h1 = 0.5,
    snapshot_every = 10, posterior_predictive = false,
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    data: &PyDataset,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    chains: usize,
    seed: u64,
    h_max: usize,
    r_max: usize,
    z_var: f64,
    mig_a1: f64,
    mig_a2: f64,
    prior_h1: f64,
    snapshot_every: usize,
    posterior_predictive: bool,
) -> PyResult<PyFit> {
    let hyper = Hyperparameters { h_max, r_max, z_var, mig_a1, mig_a2, prior_h1, ..Default::default() };
    let cfg = GibbsConfig {
        n_iter: iterations,
        burn_in,
        thin,
        n_chains: chains,
        seed,
        store_snapshots: true,
        snapshot_every,
        posterior_predictive,
        ..Default::default()
    };
    let ds = &data.inner;
    let chains = py.detach(|| inference::run_chains(ds, &hyper, &cfg)).map_err(err)?;
    Ok(PyFit { chains })
}

/// Two-sided Fisher exact p-value of the table `[[a, b], [c, d]]`.
#[pyfunction]
fn fisher_exact(a: u64, b: u64, c: u64, d: u64) -> f64 {
    baselines::fisher_exact_two_sided(ContingencyTable2x2::new(a, b, c, d))
}

#[pyfunction]
fn calibrate_p(p: f64) -> f64 {
    baselines::calibrate_p(p)
}

#[pyfunction]
fn benjamini_hochberg(pvalues: Vec<f64>, q: f64) -> Vec<bool> {
    baselines::benjamini_hochberg(&pvalues, q)
}

/// Per-edge Fisher exact p-values.
#[pyfunction]
fn edgewise_fisher(data: &PyDataset) -> Vec<f64> {
    baselines::edgewise_fisher(&data.inner)
}

/// MANOVA on the four summary statistics; returns the result as JSON.
#[pyfunction]
#[pyo3(signature = (data, alpha = 0.1))]
fn manova(data: &PyDataset, alpha: f64) -> PyResult<String> {
    let r = baselines::manova_summary_test(&data.inner, alpha).map_err(err)?;
    serde_json::to_string(&r).map_err(json_err)
}

#[pyfunction]
fn psrf(chains: Vec<Vec<f64>>) -> PyResult<f64> {
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    inference::psrf(&refs).map_err(err)
}

#[pyfunction]
fn ess(draws: Vec<f64>) -> PyResult<f64> {
    inference::ess(&draws).map_err(err)
}

#[pymodule]
fn netdiff(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_exact, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_p, m)?)?;
    m.add_function(wrap_pyfunction!(benjamini_hochberg, m)?)?;
    m.add_function(wrap_pyfunction!(edgewise_fisher, m)?)?;
    m.add_function(wrap_pyfunction!(manova, m)?)?;
    m.add_function(wrap_pyfunction!(psrf, m)?)?;
    m.add_function(wrap_pyfunction!(ess, m)?)?;
    Ok(())
}
