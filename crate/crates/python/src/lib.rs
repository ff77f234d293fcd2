use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sigma_wave::cli::{run_command, Command, ExperimentConfig};
use sigma_wave::diagnostics::{self, LlnKind, LlnSettings};
use sigma_wave::gibbs::{self, GibbsSamplerConfig};
use sigma_wave::{noise, snapshot, wick, GridSpec, Mode, PairState, SigmaError, SpectralField};

fn py_err(e: SigmaError) -> PyErr {
    match e {
        SigmaError::Io(io) => PyIOError::new_err(io.to_string()),
        SigmaError::BlowUp { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for sigma_wave::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

#[pyclass(name = "GridSpec", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyGridSpec(GridSpec);

#[pymethods]
impl PyGridSpec {
    #[new]
    #[pyo3(signature = (n_grid, mass = 1.0))]
    fn new(n_grid: usize, mass: f64) -> PyResult<Self> {
        GridSpec::new(n_grid, mass).py().map(Self)
    }

    #[getter]
    fn n_grid(&self) -> usize {
        self.0.n_grid()
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.0.mass()
    }

    #[getter]
    fn nyquist(&self) -> usize {
        self.0.nyquist()
    }

    /// `m + |n|^2` for the mode `(k1, k2)`.
    fn eigenvalue(&self, k1: i64, k2: i64) -> f64 {
        self.0.lambda(Mode::new(k1, k2))
    }

    fn __repr__(&self) -> String {
        format!("GridSpec(n_grid={}, mass={})", self.0.n_grid(), self.0.mass())
    }
}

#[pyclass(name = "SpectralField", from_py_object)]
#[derive(Clone)]
struct PyField(SpectralField);

#[pymethods]
impl PyField {
    #[staticmethod]
    fn zeros(spec: PyGridSpec) -> Self {
        Self(SpectralField::zeros(spec.0))
    }

    /// From row-major grid values.
    #[staticmethod]
    fn from_grid(spec: PyGridSpec, values: Vec<f64>) -> PyResult<Self> {
        SpectralField::from_grid(spec.0, &values).py().map(Self)
    }

    /// Sample from `N(0, 1/(m + |n|^2))` on `|n| <= radius`.
    #[staticmethod]
    #[pyo3(signature = (spec, radius, seed, component = 0))]
    fn gaussian(spec: PyGridSpec, radius: u32, seed: u64, component: u64) -> Self {
        let stream = noise::NoiseStream::new(seed, component, noise::StreamKind::Trial);
        Self(noise::sample_mu1_mu0_pair(spec.0, radius, &stream).pos)
    }

    #[staticmethod]
    #[pyo3(signature = (path, mass = 1.0))]
    fn load(path: &str, mass: f64) -> PyResult<Self> {
        snapshot::load_field(std::path::Path::new(path), mass).py().map(Self)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        snapshot::save_field(&self.0, std::path::Path::new(path)).py()
    }

    #[getter]
    fn spec(&self) -> PyGridSpec {
        PyGridSpec(*self.0.spec())
    }

    fn to_grid(&self) -> Vec<f64> {
        self.0.to_grid()
    }

    fn coeffs(&self) -> Vec<Complex64> {
        self.0.coeffs().to_vec()
    }

    fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        self.0.coeff(Mode::new(k1, k2))
    }

    fn project(&self, radius: u32) -> Self {
        Self(self.0.project(radius))
    }

    fn sobolev_norm(&self, s: f64) -> f64 {
        self.0.sobolev_norm(s)
    }

    fn sup_sobolev_norm(&self, s: f64) -> f64 {
        self.0.sup_sobolev_norm(s)
    }

    fn apply_i_operator(&self, s: f64, radius: u32) -> PyResult<Self> {
        self.0.apply_i_operator(s, radius).py().map(Self)
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        self.0.add(&other.0).py().map(Self)
    }

    fn __sub__(&self, other: &Self) -> PyResult<Self> {
        self.0.sub(&other.0).py().map(Self)
    }

    fn __mul__(&self, a: f64) -> Self {
        Self(self.0.scaled(a))
    }
}

fn fields(u: &[PyField]) -> Vec<SpectralField> {
    u.iter().map(|f| f.0.clone()).collect()
}

#[pyfunction]
fn alpha_m(m: f64, radius: u32) -> f64 {
    noise::alpha_m(m, radius)
}

#[pyfunction]
fn sigma_m(t: f64, m: f64, radius: u32) -> PyResult<f64> {
    noise::sigma_m(t, m, radius).py()
}

#[pyfunction]
fn hermite(k: usize, x: f64, c: f64) -> PyResult<f64> {
    wick::hermite(k, x, c).py()
}

#[pyfunction]
fn wick_power(u: &PyField, k: usize, c: f64) -> PyResult<PyField> {
    let out = match k {
        2 => wick::wick_square(&u.0, c),
        3 => wick::wick_cube(&u.0, c),
        4 => wick::wick_quartic(&u.0, c),
        _ => return Err(PyValueError::new_err(format!("Wick power must be 2, 3 or 4, got {k}"))),
    };
    out.py().map(PyField)
}

#[pyfunction]
fn gibbs_potential(u: Vec<PyField>, alpha: f64) -> PyResult<f64> {
    gibbs::gibbs_potential(&fields(&u), alpha).py()
}

#[pyfunction]
fn gibbs_drift(u: Vec<PyField>, alpha: f64) -> PyResult<Vec<PyField>> {
    Ok(gibbs::gibbs_drift(&fields(&u), alpha).py()?.into_iter().map(PyField).collect())
}

#[pyfunction]
fn energy(positions: Vec<PyField>, velocities: Vec<PyField>) -> PyResult<f64> {
    if positions.len() != velocities.len() {
        return Err(PyValueError::new_err("positions and velocities differ in length"));
    }
    let states = positions
        .into_iter()
        .zip(velocities)
        .map(|(p, v)| PairState::new(p.0, v.0))
        .collect::<sigma_wave::Result<Vec<_>>>()
        .py()?;
    diagnostics::energy_en(&states).py()
}

/// Runs a MALA chain; returns `(positions per sample, acceptance, iact)`.
#[pyfunction]
#[pyo3(signature = (spec, n, radius, h, chain, burn_in, thin, seed, interaction = true))]
#[allow(clippy::too_many_arguments)]
fn sample_gibbs(
    py: Python<'_>,
    spec: PyGridSpec,
    n: usize,
    radius: u32,
    h: f64,
    chain: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    interaction: bool,
) -> PyResult<(Vec<Vec<PyField>>, f64, f64)> {
    let cfg = GibbsSamplerConfig {
        n,
        radius,
        step: h,
        chain,
        burn_in,
        thin,
        interaction,
        metropolis: true,
        accept_low: 0.3,
        accept_high: 0.8,
    };
    let alpha = noise::alpha_m(spec.0.mass(), radius);
    let run = py.detach(|| gibbs::sample_gibbs(spec.0, alpha, &cfg, seed, 0)).py()?;
    let samples = run
        .samples
        .into_iter()
        .map(|s| s.into_components().into_iter().map(|p| PyField(p.pos)).collect())
        .collect();
    Ok((samples, run.acceptance, run.iact))
}

/// Rows `(N, mean_norm, se)` of an LLN estimator.
#[pyfunction]
#[pyo3(signature = (kind, spec, n_list, radius, horizon, dt, reps, eps = 0.1, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn lln_estimator(
    py: Python<'_>,
    kind: &str,
    spec: PyGridSpec,
    n_list: Vec<usize>,
    radius: u32,
    horizon: f64,
    dt: f64,
    reps: usize,
    eps: f64,
    seed: u64,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let kind = LlnKind::parse(kind).ok_or_else(|| PyValueError::new_err(format!("unknown estimator {kind:?}")))?;
    let settings = LlnSettings { radius, horizon, dt, reps, eps, seed };
    let rows = py.detach(|| diagnostics::lln_estimator(kind, spec.0, &n_list, &settings)).py()?;
    Ok(rows.into_iter().map(|r| (r.n, r.mean_norm, r.se)).collect())
}

/// Least-squares slope, its standard error and the intercept in log-log.
#[pyfunction]
fn fit_rate(ns: Vec<f64>, errors: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let fit = diagnostics::fit_rate(&ns, &errors).py()?;
    Ok((fit.slope, fit.slope_se, fit.intercept))
}

/// Runs a CLI subcommand from TOML text and returns the manifest as JSON.
#[pyfunction]
#[pyo3(signature = (command, config_toml, out_dir, seed = None))]
fn run(py: Python<'_>, command: &str, config_toml: &str, out_dir: &str, seed: Option<u64>) -> PyResult<String> {
    let command = Command::ALL
        .into_iter()
        .find(|c| c.name() == command)
        .ok_or_else(|| PyValueError::new_err(format!("unknown command {command:?}")))?;
    let mut cfg = ExperimentConfig::parse(config_toml).py()?;
    cfg.output.dir = out_dir.to_string();
    if let Some(s) = seed {
        cfg.experiment.seed = s;
    }
    let manifest = py.detach(|| run_command(command, &cfg)).py()?;
    serde_json::to_string(&manifest).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn sigma_wave_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(alpha_m, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_m, m)?)?;
    m.add_function(wrap_pyfunction!(hermite, m)?)?;
    m.add_function(wrap_pyfunction!(wick_power, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_potential, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_drift, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(sample_gibbs, m)?)?;
    m.add_function(wrap_pyfunction!(lln_estimator, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
