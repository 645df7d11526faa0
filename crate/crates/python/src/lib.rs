//! Python bindings: hyperparameters, synthetic data, MCMC and VI fits, tree
//! export and evaluation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbhmc::export::{newick, TreeDoc};
use rbhmc::mcmc::{self, ChainConfig};
use rbhmc::vi::{self, ViConfig};
use rbhmc::{metrics, Dataset};

fn err(e: rbhmc::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn dataset(rows: &[Vec<f64>]) -> PyResult<Dataset> {
    Dataset::from_rows(rows).map_err(err)
}

#[pyclass(name = "Hyperparams", from_py_object)]
#[derive(Clone)]
struct PyHyperparams {
    inner: rbhmc::Hyperparams,
}

#[pymethods]
impl PyHyperparams {
    /// Isotropic covariances `kernel_var·I` and `prior_var·I`, zero base mean.
    #[new]
    #[pyo3(signature = (dim, alpha=0.4, gamma=1.0, gamma0=0.85, depth=3, trunc=10, margin_cost=1.0, margin_eps=1.0,
                        eta_prior_scale=1.0, kernel_var=1.0, prior_var=1.0, vi_weight=0.1))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dim: usize,
        alpha: f64,
        gamma: f64,
        gamma0: f64,
        depth: usize,
        trunc: usize,
        margin_cost: f64,
        margin_eps: f64,
        eta_prior_scale: f64,
        kernel_var: f64,
        prior_var: f64,
        vi_weight: f64,
    ) -> PyResult<Self> {
        let inner = rbhmc::Hyperparams {
            alpha,
            gamma,
            gamma0,
            depth,
            trunc,
            margin_cost,
            margin_eps,
            eta_prior_scale,
            kernel_cov: DMatrix::identity(dim, dim) * kernel_var,
            prior_mean: DVector::zeros(dim),
            prior_cov: DMatrix::identity(dim, dim) * prior_var,
            vi_weight,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn animals(dim: usize) -> Self {
        Self {
            inner: rbhmc::Hyperparams::animals(dim),
        }
    }

    #[staticmethod]
    fn fashion(dim: usize) -> Self {
        Self {
            inner: rbhmc::Hyperparams::fashion(dim),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth
    }

    #[getter]
    fn trunc(&self) -> usize {
        self.inner.trunc
    }

    #[getter]
    fn margin_cost(&self) -> f64 {
        self.inner.margin_cost
    }

    fn __repr__(&self) -> String {
        let h = &self.inner;
        format!(
            "Hyperparams(dim={}, alpha={}, gamma={}, gamma0={}, depth={}, trunc={}, margin_cost={}, margin_eps={})",
            h.dim(),
            h.alpha,
            h.gamma,
            h.gamma0,
            h.depth,
            h.trunc,
            h.margin_cost,
            h.margin_eps
        )
    }
}

/// A fitted or generated tree with the path of every datum.
#[pyclass(name = "Tree", from_py_object)]
#[derive(Clone)]
struct PyTree {
    doc: TreeDoc,
}

#[pymethods]
impl PyTree {
    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        let doc = TreeDoc::from_json(s).map_err(err)?;
        doc.to_tree().map_err(err)?;
        Ok(Self { doc })
    }

    fn to_json(&self) -> String {
        self.doc.to_json()
    }

    fn newick(&self) -> PyResult<String> {
        let (t, _) = self.doc.to_tree().map_err(err)?;
        Ok(newick(&t))
    }

    /// Root-to-leaf node ids of every datum.
    fn paths(&self) -> PyResult<Vec<Vec<usize>>> {
        Ok(self.doc.to_tree().map_err(err)?.1)
    }

    fn kernels(&self) -> Vec<Vec<f64>> {
        self.doc.kernels.clone()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.doc.nodes.len()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.doc.depth
    }

    /// (aid, aod or None, {level: F} or None)
    #[pyo3(signature = (data, labels=None))]
    fn evaluate(
        &self,
        data: Vec<Vec<f64>>,
        labels: Option<Vec<Option<String>>>,
    ) -> PyResult<(f64, Option<f64>, Option<BTreeMap<usize, f64>>)> {
        let (t, p) = self.doc.to_tree().map_err(err)?;
        let x = dataset(&data)?;
        let r = metrics::evaluate(&t, &p, &x, labels.as_deref()).map_err(err)?;
        Ok((r.aid, r.aod, r.f_by_level))
    }

    fn __repr__(&self) -> String {
        format!(
            "Tree(depth={}, nodes={})",
            self.doc.depth,
            self.doc.nodes.len()
        )
    }
}

/// Trace and selected tree of one MCMC chain. `best_iteration` is 1-based,
/// matching the `iteration` column of the trace CSV.
#[pyclass(name = "ChainResult")]
struct PyChainResult {
    #[pyo3(get)]
    cdl: Vec<f64>,
    #[pyo3(get)]
    rcdl: Vec<f64>,
    #[pyo3(get)]
    accept_rate: Vec<f64>,
    #[pyo3(get)]
    best_iteration: usize,
    #[pyo3(get)]
    best_rcdl: f64,
    #[pyo3(get)]
    tree: PyTree,
    csv: String,
}

#[pymethods]
impl PyChainResult {
    fn trace_csv(&self) -> String {
        self.csv.clone()
    }
}

/// Sample data from the prior: (rows, leaf labels, ground-truth tree).
#[pyfunction]
#[pyo3(signature = (hyper, n, seed=0))]
fn generate(
    hyper: &PyHyperparams,
    n: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<String>, PyTree)> {
    let g = rbhmc::model::generate_dataset(&hyper.inner, n, &mut ChaCha8Rng::seed_from_u64(seed))
        .map_err(err)?;
    let paths: Vec<&[usize]> = g.assignments.iter().map(|a| a.path.as_slice()).collect();
    let doc = TreeDoc::new(&g.tree, &paths, &g.kernels).map_err(err)?;
    let rows = g
        .data
        .points()
        .iter()
        .map(|p| p.iter().copied().collect())
        .collect();
    let labels = g.data.labels().map(|l| l.to_vec()).unwrap_or_default();
    Ok((rows, labels, PyTree { doc }))
}

#[pyfunction]
#[pyo3(signature = (hyper, data, burnin=5000, draws=10000, seed=0, kappa=100.0))]
fn fit_mcmc(
    py: Python<'_>,
    hyper: &PyHyperparams,
    data: Vec<Vec<f64>>,
    burnin: usize,
    draws: usize,
    seed: u64,
    kappa: f64,
) -> PyResult<PyChainResult> {
    let x = dataset(&data)?;
    let cfg = ChainConfig {
        burnin,
        draws,
        kappa,
        ..ChainConfig::default()
    };
    let h = hyper.inner.clone();
    let out = py
        .detach(|| mcmc::run_chain(&cfg, &x, &h, &mut ChaCha8Rng::seed_from_u64(seed)))
        .map_err(err)?;
    let best = out.best();
    let doc =
        TreeDoc::new(&best.state.tree, &best.state.paths(), &best.state.kernels).map_err(err)?;
    Ok(PyChainResult {
        csv: out.trace.to_csv(),
        best_iteration: best.iter,
        best_rcdl: best.rcdl,
        tree: PyTree { doc },
        cdl: out.trace.cdl,
        rcdl: out.trace.rcdl,
        accept_rate: out.trace.accept_rate,
    })
}

/// Variational fit: (tree, RELBO per cycle, converged).
#[pyfunction]
#[pyo3(signature = (hyper, data, seed=0, branching=3, max_cycles=200, tol=1e-6, anneal=1.0))]
fn fit_vi(
    py: Python<'_>,
    hyper: &PyHyperparams,
    data: Vec<Vec<f64>>,
    seed: u64,
    branching: usize,
    max_cycles: usize,
    tol: f64,
    anneal: f64,
) -> PyResult<(PyTree, Vec<f64>, bool)> {
    let x = dataset(&data)?;
    let cfg = ViConfig {
        branching,
        max_cycles,
        tol,
        anneal,
        ..ViConfig::default()
    };
    let h = hyper.inner.clone();
    let fit = py
        .detach(|| vi::fit_vi(&cfg, &x, &h, &mut ChaCha8Rng::seed_from_u64(seed)))
        .map_err(err)?;
    let (t, p) = fit.to_tree(&x, &h).map_err(err)?;
    let doc = TreeDoc::new(&t, &p, &fit.state.kernel_mean).map_err(err)?;
    Ok((
        PyTree { doc },
        fit.trace.iter().map(|r| r.relbo).collect(),
        fit.converged,
    ))
}

/// `n` draws of the augmentation variable λ ~ GIG(½, 1, (Cζ)²).
#[pyfunction]
#[pyo3(signature = (cost, zeta, n, seed=0))]
fn sample_lambda(cost: f64, zeta: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            rbhmc::randkit::sample_lambda(cost, zeta, rbhmc::randkit::LAMBDA_CLAMP, &mut r)
                .map_err(err)
        })
        .collect()
}

#[pymodule]
fn pyrbhmc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHyperparams>()?;
    m.add_class::<PyTree>()?;
    m.add_class::<PyChainResult>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mcmc, m)?)?;
    m.add_function(wrap_pyfunction!(fit_vi, m)?)?;
    m.add_function(wrap_pyfunction!(sample_lambda, m)?)?;
    Ok(())
}
