//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use distlearn::consensus::{self, DacConfig, MixingStrategy};
use distlearn::{datagen, edm_ssl, harness, netgraph, rvfl, Mat, Vector};

fn err(e: distlearn::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_mat(rows: &[Vec<f64>]) -> PyResult<Mat> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(Mat::from_fn(n, d, |i, j| rows[i][j]))
}

fn from_mat(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_strategy(name: &str) -> PyResult<MixingStrategy> {
    match name {
        "max_degree" => Ok(MixingStrategy::MaxDegree),
        "metropolis_hastings" => Ok(MixingStrategy::MetropolisHastings),
        "laplacian_heuristic" => Ok(MixingStrategy::LaplacianHeuristic),
        "isolated" => Ok(MixingStrategy::Isolated),
        _ => Err(PyValueError::new_err(format!("unknown mixing strategy '{name}'"))),
    }
}

/// Undirected agent network.
#[pyclass(name = "Network", from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: netgraph::AgentNetwork,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn erdos_renyi(n_agents: usize, p: f64, seed: u64) -> PyResult<Self> {
        Ok(PyNetwork { inner: netgraph::gen_erdos_renyi(n_agents, p, seed).map_err(err)? })
    }

    #[staticmethod]
    fn complete(n_agents: usize) -> Self {
        PyNetwork { inner: netgraph::AgentNetwork::complete(n_agents) }
    }

    #[staticmethod]
    fn linear(n_agents: usize, k: usize) -> PyResult<Self> {
        Ok(PyNetwork { inner: netgraph::gen_linear(n_agents, k).map_err(err)? })
    }

    #[staticmethod]
    fn small_world(n_agents: usize, k: usize, alpha: f64, seed: u64) -> PyResult<Self> {
        Ok(PyNetwork { inner: netgraph::gen_small_world(n_agents, k, alpha, seed).map_err(err)? })
    }

    #[staticmethod]
    fn scale_free(n_agents: usize, m: usize, seed: u64) -> PyResult<Self> {
        Ok(PyNetwork { inner: netgraph::gen_scale_free(n_agents, m, seed).map_err(err)? })
    }

    #[staticmethod]
    fn from_edges(n_agents: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(PyNetwork { inner: netgraph::AgentNetwork::from_edges(n_agents, &edges).map_err(err)? })
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges()
    }

    fn neighbors(&self, i: usize) -> Vec<usize> {
        self.inner.neighbors(i)
    }

    fn is_connected(&self) -> bool {
        netgraph::is_connected(&self.inner)
    }

    fn diameter(&self) -> Option<usize> {
        self.inner.diameter()
    }

    fn laplacian_eigenvalues(&self) -> Vec<f64> {
        netgraph::laplacian_eigenvalues(&self.inner)
    }

    /// Mixing weights as a list of rows.
    #[pyo3(signature = (strategy = "metropolis_hastings"))]
    fn mixing(&self, strategy: &str) -> PyResult<Vec<Vec<f64>>> {
        let m = consensus::build_mixing(&self.inner, parse_strategy(strategy)?).map_err(err)?;
        Ok(from_mat(&m.weights))
    }

    /// Essential spectral radius of the mixing matrix.
    #[pyo3(signature = (strategy = "metropolis_hastings"))]
    fn spectral_radius(&self, strategy: &str) -> PyResult<f64> {
        let m = consensus::build_mixing(&self.inner, parse_strategy(strategy)?).map_err(err)?;
        Ok(m.essential_spectral_radius())
    }

    fn __repr__(&self) -> String {
        format!("Network(n_agents={}, edges={})", self.inner.n_agents(), self.inner.n_edges())
    }
}

/// Runs DAC on one vector per agent; returns (final states, iterations, converged).
#[pyfunction]
#[pyo3(signature = (net, states, strategy = "metropolis_hastings", max_iters = 300, delta = 1e-6))]
fn dac(
    net: &PyNetwork,
    states: Vec<Vec<f64>>,
    strategy: &str,
    max_iters: usize,
    delta: f64,
) -> PyResult<(Vec<Vec<f64>>, usize, bool)> {
    let mix = consensus::build_mixing(&net.inner, parse_strategy(strategy)?).map_err(err)?;
    let init: Vec<Vector> = states.into_iter().map(Vector::from_vec).collect();
    let res = consensus::dac_run(&mix, &init, max_iters, delta).map_err(err)?;
    let out = res.final_states.iter().map(|v| v.iter().copied().collect()).collect();
    Ok((out, res.iterations, res.converged))
}

/// RVFL network with a trained output layer.
#[pyclass(name = "Rvfl")]
struct PyRvfl {
    params: rvfl::RvflParams,
    beta: Option<Mat>,
    n_classes: usize,
}

fn shard_targets(x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> PyResult<(Mat, Mat)> {
    if x.len() != labels.len() {
        return Err(PyValueError::new_err("inputs and labels differ in length"));
    }
    Ok((to_mat(x)?, rvfl::encode_labels(labels, n_classes)))
}

#[pymethods]
impl PyRvfl {
    #[new]
    #[pyo3(signature = (input_dim, hidden = 500, weight_range = 1.0, seed = 0, n_classes = 2))]
    fn new(input_dim: usize, hidden: usize, weight_range: f64, seed: u64, n_classes: usize) -> Self {
        PyRvfl { params: rvfl::RvflParams::new(input_dim, hidden, weight_range, seed), beta: None, n_classes }
    }

    /// Centralized ridge fit.
    #[pyo3(signature = (x, labels, lam = 1.0))]
    fn fit(&mut self, x: Vec<Vec<f64>>, labels: Vec<usize>, lam: f64) -> PyResult<()> {
        let (h, y) = shard_targets(&x, &labels, self.n_classes)?;
        self.beta = Some(rvfl::train_centralized(&self.params, &h, &y, lam).map_err(err)?);
        Ok(())
    }

    /// Consensus fit over per-agent shards; returns DAC iterations.
    #[pyo3(signature = (net, shards, lam = 1.0, strategy = "metropolis_hastings"))]
    fn fit_consensus(
        &mut self,
        net: &PyNetwork,
        shards: Vec<(Vec<Vec<f64>>, Vec<usize>)>,
        lam: f64,
        strategy: &str,
    ) -> PyResult<usize> {
        let mix = consensus::build_mixing(&net.inner, parse_strategy(strategy)?).map_err(err)?;
        let data = shards.iter().map(|(x, l)| shard_targets(x, l, self.n_classes)).collect::<PyResult<Vec<_>>>()?;
        let out = rvfl::cons_rvfl(&mix, &data, &self.params, lam, DacConfig::default()).map_err(err)?;
        self.beta = Some(out.beta().clone());
        Ok(out.dac_iterations)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let beta = self.beta.as_ref().ok_or_else(|| PyValueError::new_err("model is not trained"))?;
        let out = rvfl::predict(&self.params, beta, &to_mat(&x)?).map_err(err)?;
        Ok(rvfl::decode_outputs(&out))
    }

    fn error(&self, x: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        let pred = self.predict(x)?;
        Ok(rvfl::misclassification(&pred, &labels))
    }

    /// Output weights, or None before training.
    fn weights(&self) -> Option<Vec<Vec<f64>>> {
        self.beta.as_ref().map(from_mat)
    }
}

/// Two-class Gaussian data; returns (x, labels in {0,1}).
#[pyfunction]
#[pyo3(signature = (n, d, bayes_error = 0.05, seed = 0, rotated = false))]
fn two_gaussian(n: usize, d: usize, bayes_error: f64, seed: u64, rotated: bool) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let ds = if rotated {
        datagen::gen_two_gaussian_rotated(n, d, bayes_error, seed)
    } else {
        datagen::gen_two_gaussian(n, d, bayes_error, seed)
    }
    .map_err(err)?;
    Ok((from_mat(&ds.x), ds.binary_labels()))
}

#[pyfunction]
#[pyo3(signature = (n, noise = 0.1, seed = 0))]
fn two_moons(n: usize, noise: f64, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let ds = datagen::gen_two_moons(n, noise, seed).map_err(err)?;
    Ok((from_mat(&ds.x), ds.binary_labels()))
}

/// NARMA-10 sequence as (inputs, targets).
#[pyfunction]
#[pyo3(signature = (t, seed = 0))]
fn narma10(t: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = datagen::gen_narma10(t, seed).map_err(err)?;
    Ok((s.inputs.column(0).iter().copied().collect(), s.targets.iter().copied().collect()))
}

#[pyfunction]
fn nrmse(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    harness::nrmse(&pred, &truth).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (n, k, seed = 0))]
fn kfold_split(n: usize, k: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    harness::kfold_split(n, k, seed).map_err(err)
}

#[pyfunction]
fn sub_seed(seed: u64, tag: u64) -> u64 {
    distlearn::sub_seed(seed, tag)
}

#[pyfunction]
fn edm(points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(from_mat(&edm_ssl::edm_from_points(&to_mat(&points)?)))
}

#[pyfunction]
fn kappa(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(from_mat(&edm_ssl::kappa(&to_mat(&a)?)))
}

#[pyfunction]
fn kappa_adjoint(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(from_mat(&edm_ssl::kappa_adjoint(&to_mat(&a)?)))
}

/// Single-agent DGD completion of a partially observed EDM. Returns
/// (estimate, relative error vs truth).
#[pyfunction]
#[pyo3(signature = (truth, fraction, rank, eta = 5e-3, max_iters = 1500, seed = 0))]
fn complete_edm(
    truth: Vec<Vec<f64>>,
    fraction: f64,
    rank: usize,
    eta: f64,
    max_iters: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let t = to_mat(&truth)?;
    let mask = edm_ssl::random_symmetric_mask(t.nrows(), fraction, seed);
    let view = edm_ssl::MaskedEdm::sample(&t, mask, rank).map_err(err)?;
    let mix = consensus::MixingMatrix::identity(1);
    let out = edm_ssl::dgd_edm_complete(&[view], &mix, rank, eta, max_iters, distlearn::sub_seed(seed, 1)).map_err(err)?;
    let est = &out.estimates[0];
    Ok((from_mat(est), edm_ssl::completion_error(est, &t)))
}

/// Runs an experiment from TOML text. Returns the summary as a dict
/// `{metric: (mean, std, count)}`; writes outputs when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (config_toml, out_dir = None, threads = None))]
fn run_experiment(
    config_toml: &str,
    out_dir: Option<PathBuf>,
    threads: Option<usize>,
) -> PyResult<std::collections::BTreeMap<String, (f64, f64, usize)>> {
    let cfg = harness::ExperimentConfig::from_toml(config_toml).map_err(err)?;
    let summary = match out_dir {
        Some(dir) => harness::run_experiment(&cfg, &dir, threads).map_err(err)?.summary,
        None => {
            let (records, _) = harness::run_in_memory(&cfg).map_err(err)?;
            harness::summarize(&records).map_err(err)?
        }
    };
    Ok(summary.metrics.iter().map(|m| (m.metric.clone(), (m.mean, m.std, m.count))).collect())
}

#[pymodule]
fn distlearn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyRvfl>()?;
    m.add_function(wrap_pyfunction!(dac, m)?)?;
    m.add_function(wrap_pyfunction!(two_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(two_moons, m)?)?;
    m.add_function(wrap_pyfunction!(narma10, m)?)?;
    m.add_function(wrap_pyfunction!(nrmse, m)?)?;
    m.add_function(wrap_pyfunction!(kfold_split, m)?)?;
    m.add_function(wrap_pyfunction!(sub_seed, m)?)?;
    m.add_function(wrap_pyfunction!(edm, m)?)?;
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_adjoint, m)?)?;
    m.add_function(wrap_pyfunction!(complete_edm, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
