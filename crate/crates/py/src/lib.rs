//! Python bindings: operators, multipliers, bands and the expansion checks.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use floquet_spectral::bands::{detect_bands, spectrum_union, BandAtlas, BandOptions};
use floquet_spectral::expansion::{self, Bump, ExpansionOptions, SpectralBasis};
use floquet_spectral::multipliers::{self, TrackOptions};
use floquet_spectral::operator::{expand_standard_form, parse_operator, OperatorSpec, StandardForm};
use floquet_spectral::{cli_io, oracle, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidOperator(_) | Error::ToleranceOutOfRange(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Operator", frozen)]
struct PyOperator {
    spec: OperatorSpec,
    sf: StandardForm,
}

impl PyOperator {
    fn wrap(spec: OperatorSpec) -> Self {
        let sf = expand_standard_form(&spec);
        PyOperator { spec, sf }
    }

    fn atlas(&self, mu_min: f64, mu_max: f64) -> PyResult<BandAtlas> {
        let table = multipliers::track_branches(&self.sf, mu_min, mu_max, &TrackOptions::default()).map_err(to_py)?;
        detect_bands(&table, &self.sf, &BandOptions::default()).map_err(to_py)
    }
}

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn mathieu(q: f64) -> Self {
        Self::wrap(OperatorSpec::mathieu(q))
    }

    #[staticmethod]
    fn free(n: usize) -> PyResult<Self> {
        Ok(Self::wrap(OperatorSpec::free(n).map_err(to_py)?))
    }

    /// Operator from a TOML or JSON document.
    #[staticmethod]
    fn parse(document: &str) -> PyResult<Self> {
        Ok(Self::wrap(parse_operator(document).map_err(to_py)?))
    }

    #[getter]
    fn n(&self) -> usize {
        self.spec.n()
    }

    /// Floquet multipliers at real `mu`.
    #[pyo3(signature = (mu, tol = 1e-12))]
    fn multipliers(&self, mu: f64, tol: f64) -> PyResult<Vec<Complex64>> {
        multipliers::multipliers_at(&self.sf, mu, tol).map_err(to_py)
    }

    /// Spectrum inside `[mu_min, mu_max]` as a list of closed intervals.
    fn spectrum(&self, mu_min: f64, mu_max: f64) -> PyResult<Vec<(f64, f64)>> {
        Ok(spectrum_union(&self.atlas(mu_min, mu_max)?))
    }

    /// Lowest periodic and antiperiodic eigenvalues of the Fourier truncation.
    #[pyo3(signature = (count, modes = 20))]
    fn fourier_edges(&self, count: usize, modes: usize) -> PyResult<Vec<f64>> {
        oracle::fourier_edges(&self.spec, modes, count).map_err(to_py)
    }

    /// `(||f||^2, spectral side, relative defect)` for a bump test function.
    #[pyo3(signature = (mu_min, mu_max, mesh_n = 64, center = 0.3, width = 1.0, radius = 5.0))]
    fn parseval(
        &self,
        py: Python<'_>,
        mu_min: f64,
        mu_max: f64,
        mesh_n: usize,
        center: f64,
        width: f64,
        radius: f64,
    ) -> PyResult<(f64, f64, f64)> {
        let atlas = self.atlas(mu_min, mu_max)?;
        let bump = Bump { center, width, radius };
        py.detach(|| {
            let basis = SpectralBasis::build(&self.sf, &atlas, &ExpansionOptions { mesh_n, ..Default::default() })?;
            basis.parseval(|x| Complex64::new(bump.eval(x), 0.0), bump.support())
        })
        .map_err(to_py)
    }

    /// Spectral matrix at `mu` as nested lists.
    #[pyo3(signature = (mu, mu_min, mu_max))]
    fn spectral_matrix(&self, mu: f64, mu_min: f64, mu_max: f64) -> PyResult<Vec<Vec<Complex64>>> {
        let atlas = self.atlas(mu_min, mu_max)?;
        let s = expansion::spectral_matrix(&self.sf, &atlas, mu, 1e-12).map_err(to_py)?;
        Ok((0..s.m.nrows()).map(|i| (0..s.m.ncols()).map(|j| s.m[(i, j)]).collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Operator(n={})", self.spec.n())
    }
}

/// Runs the command line with `argv` (without the program name) and returns the exit status.
#[pyfunction]
fn run(py: Python<'_>, argv: Vec<String>) -> i32 {
    let args: Vec<String> = std::iter::once("floquet".to_string()).chain(argv).collect();
    py.detach(|| cli_io::run_command(args))
}

#[pymodule]
fn pyfloquet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOperator>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
