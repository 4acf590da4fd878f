//! Python bindings. Reports cross the boundary as JSON strings; samples as
//! lists of floats.

use poisson_stein::bounds::{dejong_bound, finite_expansion_bound, theorem31_terms_mc, Theorem31Options};
use poisson_stein::chaos::Kernel;
use poisson_stein::cli::{execute, parse_config};
use poisson_stein::diagnostics::{self, RateRow, SampleSet};
use poisson_stein::measure_space::IntegrationSpec;
use poisson_stein::scenarios::{self, LevyNu, OuStatistic};
use poisson_stein::stein::{self, SteinFunction};
use poisson_stein::Error;
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyNotImplementedError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NumericalDomain(_) | Error::NotNormalized(_) | Error::DensityTooPeaked { .. } => {
            PyArithmeticError::new_err(e.to_string())
        }
        Error::MethodUnsupported(_) => PyNotImplementedError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn spec_from(method: Option<&str>, budget: usize, samples: usize, seed: u64) -> PyResult<IntegrationSpec> {
    let mut spec = match method.unwrap_or("auto") {
        "quadrature" => IntegrationSpec::quadrature(budget),
        "monte-carlo" => IntegrationSpec::monte_carlo(samples, seed),
        "auto" => IntegrationSpec::default(),
        other => return Err(PyValueError::new_err(format!("unknown integration method {other:?}"))),
    };
    spec.budget = budget;
    spec.samples = samples;
    spec.seed = seed;
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

/// A ready-made experiment: a Poisson functional with its normalization and
/// chaos expansion.
#[pyclass(frozen, name = "Scenario")]
struct PyScenario {
    inner: scenarios::Scenario,
    route: BoundRoute,
}

/// Which bound `Scenario.bound` computes.
enum BoundRoute {
    FiniteExpansion,
    /// de Jong bound for the cosine family with `m` components
    Cosine(usize),
    OuLevy {
        lam: f64,
        horizon: f64,
        truncation_tol: f64,
        lag: f64,
        stat: OuStatistic,
    },
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn dejong_cosine(n: f64, m: usize) -> PyResult<Self> {
        Ok(Self {
            inner: scenarios::build_dejong_cosine(n, m).map_err(to_py)?,
            route: BoundRoute::Cosine(m),
        })
    }

    #[staticmethod]
    fn pairwise(n: f64, r: f64, d: usize) -> PyResult<Self> {
        Ok(Self {
            inner: scenarios::build_pairwise(n, r, d).map_err(to_py)?,
            route: BoundRoute::FiniteExpansion,
        })
    }

    /// `statistic` is "M", "S" or "V".
    #[staticmethod]
    #[pyo3(signature = (horizon, statistic = "M", lam = 1.0, lag = 0.0, truncation_tol = 1e-8))]
    fn ou_levy(horizon: f64, statistic: &str, lam: f64, lag: f64, truncation_tol: f64) -> PyResult<Self> {
        let set = scenarios::build_ou_levy(lam, horizon, &LevyNu::default(), truncation_tol, lag).map_err(to_py)?;
        let (inner, stat) = match statistic {
            "M" => (set.m_t, OuStatistic::M),
            "S" => (set.s_t, OuStatistic::S),
            "V" => (set.v_t, OuStatistic::V),
            other => return Err(PyValueError::new_err(format!("unknown statistic {other:?}"))),
        };
        let route = BoundRoute::OuLevy {
            lam,
            horizon,
            truncation_tol,
            lag,
            stat,
        };
        Ok(Self { inner, route })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.normalization.mean
    }

    #[getter]
    fn sd(&self) -> f64 {
        self.inner.normalization.sd
    }

    #[getter]
    fn params(&self) -> String {
        self.inner.params.to_string()
    }

    /// Normalized replicates; replicate `i` uses stream `i` of `seed`.
    #[pyo3(signature = (reps, seed, normalized = true))]
    fn simulate(&self, py: Python<'_>, reps: usize, seed: u64, normalized: bool) -> PyResult<Vec<f64>> {
        let s = py
            .detach(|| {
                if normalized {
                    self.inner.simulate(reps, seed)
                } else {
                    self.inner.simulate_raw(reps, seed)
                }
            })
            .map_err(to_py)?;
        Ok(s.values)
    }

    /// `(mean, variance, variance_stderr, ok)` of the raw functional against
    /// its normalization.
    fn consistency(&self, py: Python<'_>, reps: usize, seed: u64) -> PyResult<(f64, f64, f64, bool)> {
        let c = py.detach(|| self.inner.consistency(reps, seed)).map_err(to_py)?;
        Ok((c.mean, c.variance, c.variance_stderr, c.ok))
    }

    /// Contraction-norm bound as a JSON string. The integration arguments
    /// are ignored for OU-Levy scenarios, whose bound is computed exactly.
    #[pyo3(signature = (method = None, budget = 64, samples = 100_000, seed = 0))]
    fn bound(&self, py: Python<'_>, method: Option<&str>, budget: usize, samples: usize, seed: u64) -> PyResult<String> {
        let spec = spec_from(method, budget, samples, seed)?;
        let expansion = self
            .inner
            .expansion
            .as_ref()
            .ok_or_else(|| PyNotImplementedError::new_err("scenario has no chaos expansion"))?;
        let report = py
            .detach(|| match self.route {
                BoundRoute::Cosine(m) => dejong_bound(&Kernel::cosine_family(m)?, &self.inner.control, &spec),
                BoundRoute::FiniteExpansion => finite_expansion_bound(expansion, &self.inner.control, &spec),
                BoundRoute::OuLevy {
                    lam,
                    horizon,
                    truncation_tol,
                    lag,
                    stat,
                } => scenarios::ou_levy_bound(lam, horizon, &LevyNu::default(), truncation_tol, lag, stat),
            })
            .map_err(to_py)?;
        Ok(report.to_json().to_string())
    }

    /// Monte Carlo estimates of the bound terms as a JSON string.
    #[pyo3(signature = (reps, seed, z_samples = 64))]
    fn theorem_terms(&self, py: Python<'_>, reps: usize, seed: u64, z_samples: usize) -> PyResult<String> {
        let expansion = self
            .inner
            .expansion
            .as_ref()
            .ok_or_else(|| PyNotImplementedError::new_err("scenario has no chaos expansion"))?;
        let opts = Theorem31Options {
            z_samples,
            ..Theorem31Options::default()
        };
        let t = py
            .detach(|| theorem31_terms_mc(expansion, &self.inner.control, reps, seed, &[], &opts))
            .map_err(to_py)?;
        serde_json::to_string(&t).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Scenario({})", self.inner.label)
    }
}

#[pyfunction]
fn stein_solution(x: f64, w: f64) -> f64 {
    stein::stein_solution(SteinFunction::new(x), w)
}

#[pyfunction]
fn stein_derivative(x: f64, w: f64) -> f64 {
    stein::derivative(SteinFunction::new(x), w)
}

#[pyfunction]
fn stein_residual(x: f64, w: f64) -> f64 {
    stein::stein_residual(SteinFunction::new(x), w)
}

#[pyfunction]
fn mills_ratio(t: f64) -> f64 {
    stein::mills_ratio(t)
}

#[pyfunction]
fn normal_cdf(x: f64) -> f64 {
    diagnostics::normal_cdf(x)
}

/// `(distance, dkw_band, argmax)` against the standard normal.
#[pyfunction]
fn kolmogorov_distance(values: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let kd = diagnostics::kolmogorov_distance(&SampleSet::new(values, "python")).map_err(to_py)?;
    Ok((kd.distance, kd.dkw_band, kd.argmax))
}

/// `(slope, stderr)` of log(distance) on log(scale).
#[pyfunction]
fn rate_slope(scales: Vec<f64>, distances: Vec<f64>) -> PyResult<(f64, f64)> {
    if scales.len() != distances.len() {
        return Err(PyValueError::new_err("scales and distances differ in length"));
    }
    let rows: Vec<RateRow> = scales
        .into_iter()
        .zip(distances)
        .map(|(scale, distance)| RateRow {
            scale,
            distance,
            stderr: 0.0,
        })
        .collect();
    let s = diagnostics::rate_slope(&rows).map_err(to_py)?;
    Ok((s.slope, s.stderr))
}

/// Runs a JSON run config in memory and returns the report as JSON.
#[pyfunction]
fn run_config(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = parse_config(config).map_err(to_py)?;
    let out = py.detach(|| execute(&cfg)).map_err(to_py)?;
    Ok(out.report.to_string())
}

#[pymodule]
#[pyo3(name = "poisson_stein")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", poisson_stein::VERSION)?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(stein_solution, m)?)?;
    m.add_function(wrap_pyfunction!(stein_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(stein_residual, m)?)?;
    m.add_function(wrap_pyfunction!(mills_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(kolmogorov_distance, m)?)?;
    m.add_function(wrap_pyfunction!(rate_slope, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
