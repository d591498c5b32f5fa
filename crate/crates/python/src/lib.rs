//! Python bindings for `ddsde-core`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ddsde_core::bounds::{self, Modulus};
use ddsde_core::drifts::{self, DriftSpec, Kernel, RateFn};
use ddsde_core::harness::{config_hash, run_experiment as run_harness, ExperimentConfig};
use ddsde_core::measures::{self, EmpiricalMeasure, Ensemble, TimeGrid};
use ddsde_core::noise::{self, InitialLaw, NoiseProcess, NoiseSpec};
use ddsde_core::solver::{self, SolverConfig};
use ddsde_core::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Parse { .. } => PyIOError::new_err(e.to_string()),
        Error::NonFiniteDrift { .. }
        | Error::BlowUp { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::Bracket { .. }
        | Error::Unsupported(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn modulus(name: &str, slope: Option<f64>) -> PyResult<Modulus> {
    match name {
        "osgood_log" => Ok(Modulus::OsgoodLog),
        "linear" => Ok(Modulus::Linear {
            slope: slope.unwrap_or(1.0),
        }),
        _ => Err(PyValueError::new_err(format!("unknown modulus {name:?}"))),
    }
}

#[pyclass(name = "TimeGrid", frozen)]
struct PyTimeGrid(TimeGrid);

#[pymethods]
impl PyTimeGrid {
    #[new]
    fn new(horizon: f64, steps: usize) -> PyResult<Self> {
        TimeGrid::new(horizon, steps).map(Self).map_err(err)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt()
    }

    fn times(&self) -> Vec<f64> {
        (0..self.0.nodes()).map(|k| self.0.time(k)).collect()
    }

    fn __repr__(&self) -> String {
        format!("TimeGrid(horizon={}, steps={})", self.0.horizon(), self.0.steps())
    }
}

/// Input law `Y = ξ + W`.
#[pyclass(name = "Noise", frozen)]
struct PyNoise(NoiseSpec);

#[pymethods]
impl PyNoise {
    #[new]
    #[pyo3(signature = (initial, process = "brownian", *, mean = None, variance = None, lo = None, hi = None, x = None, sigma = 1.0, hurst = 0.5, theta = 1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        initial: &str,
        process: &str,
        mean: Option<Vec<f64>>,
        variance: Option<Vec<f64>>,
        lo: Option<Vec<f64>>,
        hi: Option<Vec<f64>>,
        x: Option<Vec<f64>>,
        sigma: f64,
        hurst: f64,
        theta: f64,
    ) -> PyResult<Self> {
        let need = |v: Option<Vec<f64>>, what: &str| {
            v.ok_or_else(|| PyValueError::new_err(format!("{initial} initial law needs `{what}`")))
        };
        let initial = match initial {
            "point" => InitialLaw::Point(need(x, "x")?),
            "uniform" => InitialLaw::Uniform {
                lo: need(lo, "lo")?,
                hi: need(hi, "hi")?,
            },
            "gaussian" => {
                let mean = need(mean, "mean")?;
                let variance = variance.unwrap_or_else(|| vec![1.0; mean.len()]);
                InitialLaw::Gaussian { mean, variance }
            }
            other => return Err(PyValueError::new_err(format!("unknown initial law {other:?}"))),
        };
        let process = match process {
            "zero" => NoiseProcess::Zero,
            "brownian" => NoiseProcess::Brownian { sigma },
            "fbm" => NoiseProcess::Fbm { hurst, sigma },
            "ou" => NoiseProcess::Ou { theta, sigma },
            other => return Err(PyValueError::new_err(format!("unknown process {other:?}"))),
        };
        NoiseSpec::new(initial, process).map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }
}

#[pyclass(name = "Drift", frozen)]
struct PyDrift(DriftSpec);

fn checked(spec: DriftSpec) -> PyResult<PyDrift> {
    spec.validate().map_err(err)?;
    Ok(PyDrift(spec))
}

#[pymethods]
impl PyDrift {
    #[staticmethod]
    fn zero(dim: usize) -> PyResult<Self> {
        checked(DriftSpec::zero(dim))
    }

    /// `κ (mean(μ) − x)`.
    #[staticmethod]
    #[pyo3(signature = (kappa, dim = 1))]
    fn mean_attraction(kappa: f64, dim: usize) -> PyResult<Self> {
        checked(DriftSpec::mean_attraction(dim, kappa))
    }

    /// `A x + C mean(μ) + c0` with row-major `a`, `c`.
    #[staticmethod]
    fn lipschitz_linear(a: Vec<f64>, c: Vec<f64>, c0: Vec<f64>, g: f64, h: f64) -> PyResult<Self> {
        checked(DriftSpec::LipschitzLinear {
            dim: c0.len(),
            a,
            c,
            c0,
            g: RateFn::Constant(g),
            h: RateFn::Constant(h),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (strength, modulus = "osgood_log", dim = 1, slope = None))]
    fn osgood_radial(strength: f64, modulus: &str, dim: usize, slope: Option<f64>) -> PyResult<Self> {
        checked(DriftSpec::osgood_radial(dim, strength, self::modulus(modulus, slope)?))
    }

    #[staticmethod]
    #[pyo3(signature = (lam, gamma, interaction = 0.0, dim = 1))]
    fn monotone_power(lam: f64, gamma: f64, interaction: f64, dim: usize) -> PyResult<Self> {
        checked(DriftSpec::MonotonePower {
            dim,
            lambda: lam,
            gamma,
            interaction,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (c, alpha, dim = 1))]
    fn local_lip_growth(c: f64, alpha: f64, dim: usize) -> PyResult<Self> {
        checked(DriftSpec::LocalLipGrowth { dim, c, alpha })
    }

    /// `(b ∗ μ)` for the linear kernel `b(z) = A z`.
    #[staticmethod]
    #[pyo3(signature = (matrix, dim, divergence_bound = None))]
    fn linear_convolution(matrix: Vec<f64>, dim: usize, divergence_bound: Option<f64>) -> PyResult<Self> {
        checked(DriftSpec::ConvolutionKernel {
            kernel: Kernel::linear(dim, matrix).map_err(err)?,
            exponents: None,
            divergence_bound,
        })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.0.family().name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `B_t(x, μ)` with `μ` the empirical measure of `points`.
    fn eval(&self, t: f64, x: Vec<f64>, points: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let mu = EmpiricalMeasure::Points(measures::PointCloud::from_points(&points).map_err(err)?);
        drifts::eval_drift(&self.0, t, &x, &mu).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Drift({}, dim={})", self.0.family().name(), self.0.dim())
    }
}

#[pyclass(name = "SolverConfig")]
struct PySolverConfig(SolverConfig);

#[pymethods]
impl PySolverConfig {
    #[new]
    #[pyo3(signature = (grid, picard_tol = 1e-8, picard_max_iter = 100, weight_factor = 4.0, distance_p = 1.0))]
    fn new(
        grid: &PyTimeGrid,
        picard_tol: f64,
        picard_max_iter: usize,
        weight_factor: f64,
        distance_p: f64,
    ) -> PyResult<Self> {
        let mut c = SolverConfig::new(grid.0);
        c.picard_tol = picard_tol;
        c.picard_max_iter = picard_max_iter;
        c.weight_factor = weight_factor;
        c.distance_p = distance_p;
        c.validate().map_err(err)?;
        Ok(Self(c))
    }

    #[getter]
    fn grid(&self) -> PyTimeGrid {
        PyTimeGrid(self.0.grid)
    }

    #[getter]
    fn picard_tol(&self) -> f64 {
        self.0.picard_tol
    }

    #[getter]
    fn weight_factor(&self) -> f64 {
        self.0.weight_factor
    }
}

#[pyclass(name = "Ensemble", frozen)]
struct PyEnsemble(Ensemble);

#[pymethods]
impl PyEnsemble {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    #[getter]
    fn grid(&self) -> PyTimeGrid {
        PyTimeGrid(self.0.grid())
    }

    /// Member `i` as a list of points, one per grid node.
    fn member(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        if i >= self.0.len() {
            return Err(PyValueError::new_err(format!("member {i} out of range")));
        }
        let p = self.0.member(i);
        Ok(p.values().chunks(p.dim()).map(<[f64]>::to_vec).collect())
    }

    /// Positions of all members at node `k`.
    fn slice(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        if k >= self.0.grid().nodes() {
            return Err(PyValueError::new_err(format!("node {k} out of range")));
        }
        Ok(self.0.slice(k).iter().map(<[f64]>::to_vec).collect())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        noise::write_binary_file(&self.0, &path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        noise::read_binary_file(&path).map(Self).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Ensemble(n={}, dim={}, steps={})",
            self.0.len(),
            self.0.dim(),
            self.0.grid().steps()
        )
    }
}

#[pyfunction]
fn sample_paths(py: Python<'_>, noise: &PyNoise, grid: &PyTimeGrid, n: usize, seed: u64) -> PyResult<PyEnsemble> {
    let (spec, g) = (noise.0.clone(), grid.0);
    py.detach(|| noise::sample_paths(&spec, g, n, seed))
        .map(PyEnsemble)
        .map_err(err)
}

#[pyfunction]
fn solve_particle_system(
    py: Python<'_>,
    drift: &PyDrift,
    inputs: &PyEnsemble,
    config: &PySolverConfig,
) -> PyResult<PyEnsemble> {
    py.detach(|| solver::solve_particle_system(&drift.0, &inputs.0, &config.0))
        .map(PyEnsemble)
        .map_err(err)
}

/// Returns `(solution, diagnostics)`.
#[pyfunction]
fn solve_ddsde_picard<'py>(
    py: Python<'py>,
    drift: &PyDrift,
    inputs: &PyEnsemble,
    config: &PySolverConfig,
) -> PyResult<(PyEnsemble, Bound<'py, PyDict>)> {
    let (x, diag) = py
        .detach(|| solver::solve_ddsde_picard(&drift.0, &inputs.0, &config.0))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("iterations", diag.iterations)?;
    d.set_item("successive_distances", diag.successive_distances)?;
    d.set_item("contraction_ratios", diag.contraction_ratios)?;
    d.set_item("converged", diag.converged)?;
    d.set_item("refined_steps", diag.refined_steps)?;
    Ok((PyEnsemble(x), d))
}

/// Exact `d_p` between two equal-size point sets.
#[pyfunction]
#[pyo3(signature = (a, b, p = 1.0))]
fn wasserstein(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, p: f64) -> PyResult<f64> {
    let mu = EmpiricalMeasure::Points(measures::PointCloud::from_points(&a).map_err(err)?);
    let nu = EmpiricalMeasure::Points(measures::PointCloud::from_points(&b).map_err(err)?);
    measures::wasserstein(&mu, &nu, p).map_err(err)
}

/// Exact `d_p` between the path laws of two ensembles (sup-norm cost).
#[pyfunction]
#[pyo3(signature = (a, b, p = 1.0))]
fn wasserstein_paths(py: Python<'_>, a: &PyEnsemble, b: &PyEnsemble, p: f64) -> PyResult<f64> {
    py.detach(|| measures::wasserstein(&a.0.to_measure(), &b.0.to_measure(), p))
        .map_err(err)
}

/// `M(r) = G⁻¹(G(r) + κ)`; returns `(value, error_estimate)`.
#[pyfunction]
#[pyo3(signature = (kappa, r, modulus = "osgood_log", slope = None))]
fn bihari_m(kappa: f64, r: f64, modulus: &str, slope: Option<f64>) -> PyResult<(f64, f64)> {
    let rep = bounds::bihari_m(&self::modulus(modulus, slope)?, kappa, r).map_err(err)?;
    Ok((rep.value, rep.error_estimate))
}

#[pyfunction]
fn lipschitz_stability_bound(g_l1: f64) -> f64 {
    bounds::lipschitz_stability_bound(g_l1)
}

/// Runs a TOML experiment configuration; writes the report when `out` is given.
#[pyfunction]
#[pyo3(signature = (config, out = None))]
fn run_experiment<'py>(py: Python<'py>, config: &str, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::from_toml_str(config).map_err(err)?;
    let report = py.detach(|| run_harness(&cfg)).map_err(err)?;
    let hash = config_hash(config);
    if let Some(dir) = out {
        report.write(&dir, &hash).map_err(err)?;
    }
    let d = PyDict::new(py);
    d.set_item("experiment", report.kind.name())?;
    d.set_item("passed", report.passed())?;
    d.set_item("csv", report.csv())?;
    d.set_item("meta", report.meta(&hash))?;
    let checks: Vec<(String, bool, String)> = report
        .checks
        .iter()
        .map(|c| (c.name.clone(), c.pass, c.detail.clone()))
        .collect();
    d.set_item("checks", checks)?;
    Ok(d)
}

#[pymodule]
fn ddsde_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTimeGrid>()?;
    m.add_class::<PyNoise>()?;
    m.add_class::<PyDrift>()?;
    m.add_class::<PySolverConfig>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(sample_paths, m)?)?;
    m.add_function(wrap_pyfunction!(solve_particle_system, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ddsde_picard, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein_paths, m)?)?;
    m.add_function(wrap_pyfunction!(bihari_m, m)?)?;
    m.add_function(wrap_pyfunction!(lipschitz_stability_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
