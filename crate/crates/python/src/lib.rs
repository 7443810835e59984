//! Python bindings for the schedules, oracles, samplers and metrics.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use bfn_core::forward::{OneHotBatch, StateBatch};
use bfn_core::harness::verify::{run_suite, VerifySettings};
use bfn_core::metrics;
use bfn_core::predictors::{CategoricalData, CategoricalOracle, MixtureData, MixtureOracle, Predictor};
use bfn_core::samplers_cont::{init_mu, run_continuous, ContinuousSolver, InitMode, SolverConfig};
use bfn_core::samplers_disc::{init_z, run_discrete, DiscreteSolver, DiscreteSolverConfig};
use bfn_core::schedules::{self, make_grid, GridPolicy};
use bfn_core::tensor::Matrix;
use bfn_core::BfnError;

fn to_py(e: BfnError) -> PyErr {
    match e {
        BfnError::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

#[pyclass(name = "ContinuousSchedule", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyContinuousSchedule(schedules::ContinuousSchedule);

#[pymethods]
impl PyContinuousSchedule {
    #[new]
    #[pyo3(signature = (sigma1 = 0.02))]
    fn new(sigma1: f64) -> PyResult<Self> {
        schedules::ContinuousSchedule::new(sigma1).map(Self).map_err(to_py)
    }

    #[getter]
    fn sigma1(&self) -> f64 {
        self.0.sigma1()
    }

    fn gamma(&self, t: f64) -> PyResult<f64> {
        self.0.gamma(t).map_err(to_py)
    }

    /// `(ᾱ, σ̄)` at `t`.
    fn alpha_sigma(&self, t: f64) -> PyResult<(f64, f64)> {
        self.0.alpha_sigma(t).map_err(to_py)
    }

    #[pyo3(name = "lambda_")]
    fn lambda(&self, t: f64) -> PyResult<f64> {
        self.0.lambda(t).map_err(to_py)
    }

    fn t_of_lambda(&self, lam: f64) -> PyResult<f64> {
        self.0.t_of_lambda(lam).map_err(to_py)
    }

    /// Drift F and squared diffusion G² of the forward SDE.
    fn drift_diffusion(&self, t: f64) -> PyResult<(f64, f64)> {
        self.0.drift_diffusion(t).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("ContinuousSchedule(sigma1={})", self.0.sigma1())
    }
}

#[pyclass(name = "DiscreteSchedule", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyDiscreteSchedule(schedules::DiscreteSchedule);

#[pymethods]
impl PyDiscreteSchedule {
    #[new]
    #[pyo3(signature = (beta1 = 2.0, classes = 3))]
    fn new(beta1: f64, classes: usize) -> PyResult<Self> {
        schedules::DiscreteSchedule::new(beta1, classes).map(Self).map_err(to_py)
    }

    #[getter]
    fn beta1(&self) -> f64 {
        self.0.beta1()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.0.classes()
    }

    fn beta(&self, t: f64) -> PyResult<f64> {
        self.0.beta(t).map_err(to_py)
    }

    fn drift_diffusion(&self, t: f64) -> PyResult<(f64, f64)> {
        self.0.drift_diffusion(t).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("DiscreteSchedule(beta1={}, classes={})", self.0.beta1(), self.0.classes())
    }
}

/// Exact posterior-mean predictor for a diagonal Gaussian mixture.
#[pyclass(name = "MixtureOracle", frozen)]
struct PyMixtureOracle {
    inner: MixtureOracle,
    sched: schedules::ContinuousSchedule,
}

#[pymethods]
impl PyMixtureOracle {
    #[new]
    #[pyo3(signature = (weights, means, variances, sigma1 = 0.02))]
    fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>, sigma1: f64) -> PyResult<Self> {
        let sched = schedules::ContinuousSchedule::new(sigma1).map_err(to_py)?;
        let data = MixtureData::new(weights, means, variances).map_err(to_py)?;
        Ok(Self { inner: MixtureOracle::new(data, sched), sched })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.data().dim()
    }

    /// x̂(μ, t) for each row of `mu`.
    fn predict_x(&self, mu: Vec<Vec<f64>>, t: f64) -> PyResult<Vec<Vec<f64>>> {
        let state = StateBatch::continuous(matrix(mu)?, t);
        Ok(self.inner.predict(&state).map_err(to_py)?.to_rows())
    }

    fn sample_data(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        self.inner.data().sample(n, seed).to_rows()
    }

    /// Runs a continuous solver from the zero-mean prior and returns the samples.
    #[pyo3(signature = (solver, nfe, n, seed = 0, eta = 1e-3, grid = "uniform-lambda"))]
    fn sample(&self, solver: &str, nfe: usize, n: usize, seed: u64, eta: f64, grid: &str) -> PyResult<Vec<Vec<f64>>> {
        let kind: ContinuousSolver = solver.parse().map_err(to_py)?;
        let policy = match grid {
            "uniform-t" => GridPolicy::UniformT,
            "uniform-lambda" => GridPolicy::UniformLambda(self.sched),
            other => return Err(PyValueError::new_err(format!("unknown grid '{other}'"))),
        };
        let grid = make_grid(eta, kind.steps_for_nfe(nfe).max(kind.min_steps()), policy).map_err(to_py)?;
        let init = init_mu(&self.sched, grid.steps()[0], self.dim(), None, InitMode::ZeroMean)
            .map_err(to_py)?
            .sample(n, seed);
        let run = run_continuous(&SolverConfig::new(kind, grid, seed), &self.inner, &self.sched, &init).map_err(to_py)?;
        Ok(run.samples.to_rows())
    }
}

/// Exact posterior one-hot predictor for an enumerated categorical law.
#[pyclass(name = "CategoricalOracle", frozen)]
struct PyCategoricalOracle {
    inner: CategoricalOracle,
}

#[pymethods]
impl PyCategoricalOracle {
    /// Uniform when `probs` is omitted; `support` restricts the law to the given sequences.
    #[new]
    #[pyo3(signature = (classes, dim, probs = None, support = None, beta1 = 2.0))]
    fn new(classes: usize, dim: usize, probs: Option<Vec<f64>>, support: Option<Vec<Vec<usize>>>, beta1: f64) -> PyResult<Self> {
        let data = match (probs, support) {
            (None, None) => CategoricalData::uniform(classes, dim),
            (Some(p), None) => CategoricalData::enumerated(classes, dim, p),
            (p, Some(s)) => {
                let p = p.unwrap_or_else(|| vec![1.0 / s.len() as f64; s.len()]);
                CategoricalData::new(classes, dim, s, p)
            }
        }
        .map_err(to_py)?;
        let sched = schedules::DiscreteSchedule::new(beta1, classes).map_err(to_py)?;
        Ok(Self { inner: CategoricalOracle::new(data, sched).map_err(to_py)? })
    }

    fn prob_of(&self, seq: Vec<usize>) -> f64 {
        self.inner.data().prob_of(&seq)
    }

    /// Runs a discrete solver with argmax readout and returns the sequences.
    #[pyo3(signature = (solver, nfe, n, seed = 0, eta = 1e-3))]
    fn sample(&self, solver: &str, nfe: usize, n: usize, seed: u64, eta: f64) -> PyResult<Vec<Vec<usize>>> {
        let kind: DiscreteSolver = solver.parse().map_err(to_py)?;
        let sched = *self.inner.schedule();
        let grid = make_grid(eta, kind.steps_for_nfe(nfe), GridPolicy::UniformT).map_err(to_py)?;
        let init = init_z(&sched, grid.steps()[0], n, self.inner.data().dim(), seed).map_err(to_py)?;
        let run = run_discrete(&DiscreteSolverConfig::new(kind, grid, seed), &self.inner, &sched, &init).map_err(to_py)?;
        let seqs = run.output.sequences().ok_or_else(|| PyValueError::new_err("no sequences in readout"))?;
        Ok((0..seqs.n()).map(|i| seqs.sequence(i).to_vec()).collect())
    }

    /// Total variation between `samples` and the oracle's law.
    fn tv(&self, samples: Vec<Vec<usize>>) -> PyResult<f64> {
        let data = self.inner.data();
        let batch = if samples.is_empty() {
            OneHotBatch::new(data.dim(), data.classes(), vec![]).map_err(to_py)?
        } else {
            OneHotBatch::from_sequences(data.classes(), &samples).map_err(to_py)?
        };
        metrics::tv_enumerated(&batch, data).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (a, b, n_projections = 128, seed = 0))]
fn sliced_wasserstein2(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, n_projections: usize, seed: u64) -> PyResult<f64> {
    metrics::sliced_wasserstein2(&matrix(a)?, &matrix(b)?, n_projections, seed).map_err(to_py)
}

/// Least-squares `(slope, intercept, r²)` of `ln err` against `ln(1/NFE)`.
#[pyfunction]
fn convergence_slope(points: Vec<(usize, f64)>) -> PyResult<(f64, f64, f64)> {
    let f = metrics::convergence_slope(&points).map_err(to_py)?;
    Ok((f.slope, f.intercept, f.r_squared))
}

/// Runs the invariant suite; returns `(name, passed, detail)` per check.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn verify(py: Python<'_>, seed: u64) -> Vec<(String, bool, String)> {
    let settings = VerifySettings { seed, ..Default::default() };
    py.detach(|| run_suite(&settings))
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule]
fn bfn_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyContinuousSchedule>()?;
    m.add_class::<PyDiscreteSchedule>()?;
    m.add_class::<PyMixtureOracle>()?;
    m.add_class::<PyCategoricalOracle>()?;
    m.add_function(wrap_pyfunction!(sliced_wasserstein2, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_slope, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
