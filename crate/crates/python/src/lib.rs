//! Python bindings: array construction, channels, precoders, metrics and the
//! bundled experiment runners.

use std::collections::HashMap;

use pyo3::exceptions::{PyIndexError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nearfield::experiments::{
    apply_overrides, bundled_scenario, load_scenario, run_beamsplit, run_fig3, run_fig4,
    run_fig5, ResultTable,
};
use nearfield::metrics::{dbm_to_watts, watts_to_dbm};
use nearfield::{Complex64, Error, Vec3};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::IndexOutOfRange { .. } => PyIndexError::new_err(e.to_string()),
        Error::Scenario { .. } => PyKeyError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vec3((x, y, z): (f64, f64, f64)) -> Vec3 {
    Vec3::new(x, y, z)
}

fn tuple(v: Vec3) -> (f64, f64, f64) {
    (v.x, v.y, v.z)
}

/// Planar antenna array.
#[pyclass(name = "Array", frozen)]
struct PyArray(nearfield::ArrayGeometry);

#[pymethods]
impl PyArray {
    /// Uniform planar array in the xy plane; spacing is in wavelengths.
    #[staticmethod]
    #[pyo3(signature = (length, width, frequency, spacing=1.0, center=(0.0, 0.0, 0.0)))]
    fn upa(
        length: f64,
        width: f64,
        frequency: f64,
        spacing: f64,
        center: (f64, f64, f64),
    ) -> PyResult<Self> {
        let carrier = nearfield::Carrier::new(frequency).map_err(py_err)?;
        nearfield::build_upa(length, width, spacing, carrier, vec3(center))
            .map(PyArray)
            .map_err(py_err)
    }

    /// Array from explicit element positions.
    #[staticmethod]
    fn from_positions(positions: Vec<(f64, f64, f64)>, frequency: f64) -> PyResult<Self> {
        let carrier = nearfield::Carrier::new(frequency).map_err(py_err)?;
        nearfield::ArrayGeometry::from_positions(positions.into_iter().map(vec3).collect(), carrier)
            .map(PyArray)
            .map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn aperture(&self) -> f64 {
        self.0.aperture()
    }

    #[getter]
    fn center(&self) -> (f64, f64, f64) {
        tuple(self.0.center())
    }

    #[getter]
    fn frequency(&self) -> f64 {
        self.0.carrier().frequency()
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.0.carrier().wavelength()
    }

    #[getter]
    fn elements(&self) -> Vec<(f64, f64, f64)> {
        self.0.elements().iter().copied().map(tuple).collect()
    }

    fn fraunhofer_distance(&self) -> PyResult<f64> {
        nearfield::fraunhofer_distance(self.0.aperture(), self.0.carrier()).map_err(py_err)
    }

    /// Region label of a point: reactive-near-field, radiating-near-field or far-field.
    fn classify(&self, point: (f64, f64, f64)) -> PyResult<String> {
        nearfield::classify_point(&self.0, vec3(point))
            .map(|c| c.label.to_string())
            .map_err(py_err)
    }

    /// Largest phase error (rad) of the plane-wave model toward `point`.
    fn max_phase_deviation(&self, point: (f64, f64, f64)) -> PyResult<f64> {
        nearfield::max_phase_deviation(&self.0, vec3(point)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Array(elements={}, aperture={:.4} m, frequency={:e} Hz)",
            self.0.len(),
            self.0.aperture(),
            self.0.carrier().frequency()
        )
    }
}

/// Per-element complex gains toward one point.
#[pyclass(name = "Channel", frozen, from_py_object)]
#[derive(Clone)]
struct PyChannel(nearfield::ChannelVector);

#[pymethods]
impl PyChannel {
    #[new]
    #[pyo3(signature = (gains, frequency, target=(0.0, 0.0, 1.0)))]
    fn new(gains: Vec<Complex64>, frequency: f64, target: (f64, f64, f64)) -> Self {
        PyChannel(nearfield::ChannelVector {
            gains,
            frequency,
            target: vec3(target),
        })
    }

    #[getter]
    fn gains(&self) -> Vec<Complex64> {
        self.0.gains.clone()
    }

    #[getter]
    fn frequency(&self) -> f64 {
        self.0.frequency
    }

    #[getter]
    fn target(&self) -> (f64, f64, f64) {
        tuple(self.0.target)
    }

    fn norm_sqr(&self) -> f64 {
        self.0.norm_sqr()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Precoding weights, one column per stream.
#[pyclass(name = "Precoder", frozen)]
struct PyPrecoder(nearfield::Precoder);

#[pymethods]
impl PyPrecoder {
    #[getter]
    fn columns(&self) -> Vec<Vec<Complex64>> {
        self.0.columns.clone()
    }

    #[getter]
    fn total_power(&self) -> f64 {
        self.0.total_power
    }

    /// Radiated power Σ‖w_k‖².
    fn power(&self) -> f64 {
        self.0.power()
    }

    fn column(&self, k: usize) -> PyResult<Vec<Complex64>> {
        self.0
            .columns
            .get(k)
            .cloned()
            .ok_or_else(|| PyIndexError::new_err(format!("no stream {k}")))
    }

    fn __len__(&self) -> usize {
        self.0.streams()
    }
}

#[pyfunction]
fn fraunhofer_distance(aperture: f64, frequency: f64) -> PyResult<f64> {
    let carrier = nearfield::Carrier::new(frequency).map_err(py_err)?;
    nearfield::fraunhofer_distance(aperture, carrier).map_err(py_err)
}

#[pyfunction]
fn reactive_bound(aperture: f64, frequency: f64) -> PyResult<f64> {
    let carrier = nearfield::Carrier::new(frequency).map_err(py_err)?;
    nearfield::reactive_bound(aperture, carrier).map_err(py_err)
}

/// Exact spherical-wavefront channel from every element to `target`.
#[pyfunction]
fn nearfield_los(array: &PyArray, target: (f64, f64, f64), frequency: f64) -> PyResult<PyChannel> {
    nearfield::nearfield_los(&array.0, vec3(target), frequency)
        .map(PyChannel)
        .map_err(py_err)
}

/// Plane-wave steering vector toward a unit `direction`.
#[pyfunction]
fn farfield_steering(
    array: &PyArray,
    direction: (f64, f64, f64),
    reference_distance: f64,
    frequency: f64,
) -> PyResult<PyChannel> {
    nearfield::farfield_steering(&array.0, vec3(direction), reference_distance, frequency)
        .map(PyChannel)
        .map_err(py_err)
}

#[pyfunction]
fn conjugate_focus(channel: &PyChannel, power: f64) -> PyResult<PyPrecoder> {
    nearfield::conjugate_focus(&channel.0, power)
        .map(PyPrecoder)
        .map_err(py_err)
}

#[pyfunction]
fn steer(
    array: &PyArray,
    direction: (f64, f64, f64),
    reference_distance: f64,
    frequency: f64,
    power: f64,
) -> PyResult<PyPrecoder> {
    nearfield::steer(&array.0, vec3(direction), reference_distance, frequency, power)
        .map(PyPrecoder)
        .map_err(py_err)
}

/// Sum-rate maximizing precoder; returns `(precoder, sum_rate_trace)`.
#[pyfunction]
#[pyo3(signature = (channels, power, noise_power, tolerance=1e-5, max_iterations=500))]
fn sum_rate_precoder(
    channels: Vec<PyChannel>,
    power: f64,
    noise_power: f64,
    tolerance: f64,
    max_iterations: usize,
) -> PyResult<(PyPrecoder, Vec<f64>)> {
    let chans: Vec<_> = channels.into_iter().map(|c| c.0).collect();
    let config = nearfield::OptimizerConfig {
        tolerance,
        max_iterations,
    };
    let (pre, report) =
        nearfield::sum_rate_precoder(&chans, power, noise_power, config).map_err(py_err)?;
    Ok((PyPrecoder(pre), report.sum_rate_trace))
}

/// |Σ h_n w_n|² for one channel and one weight column.
#[pyfunction]
fn received_power(channel: &PyChannel, column: Vec<Complex64>) -> PyResult<f64> {
    nearfield::received_power(&channel.0, &column).map_err(py_err)
}

#[pyfunction]
fn sinr(
    channels: Vec<PyChannel>,
    precoder: &PyPrecoder,
    user: usize,
    noise_power: f64,
) -> PyResult<f64> {
    let chans: Vec<_> = channels.into_iter().map(|c| c.0).collect();
    nearfield::sinr(&chans, &precoder.0, user, noise_power).map_err(py_err)
}

#[pyfunction]
fn spectral_efficiency(sinr: f64) -> f64 {
    nearfield::spectral_efficiency(sinr)
}

/// Thermal noise power (W) for a PSD in dBm/Hz over `bandwidth` Hz.
#[pyfunction]
fn noise_power(noise_psd_dbm_hz: f64, bandwidth: f64) -> PyResult<f64> {
    nearfield::LinkBudget::from_dbm(0.0, noise_psd_dbm_hz, bandwidth)
        .map(|b| b.noise_power())
        .map_err(py_err)
}

#[pyfunction(name = "dbm_to_watts")]
fn py_dbm_to_watts(dbm: f64) -> f64 {
    dbm_to_watts(dbm)
}

#[pyfunction(name = "watts_to_dbm")]
fn py_watts_to_dbm(watts: f64) -> f64 {
    watts_to_dbm(watts)
}

fn table_dict<'py>(py: Python<'py>, table: ResultTable) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("columns", table.columns.clone())?;
    d.set_item("rows", table.rows.clone())?;
    d.set_item("metadata", table.metadata.to_json())?;
    Ok(d)
}

/// Runs one of `fig3`, `fig4`, `fig5` or `beamsplit` on a scenario.
///
/// `scenario` is a bundled scenario name or a JSON document; `overrides`
/// maps dotted keys to JSON values given as strings. Tables come back as
/// `{"columns", "rows", "metadata"}`; `fig5` returns both normalized scans
/// with their grid.
#[pyfunction]
#[pyo3(signature = (runner, scenario, overrides=None))]
fn run<'py>(
    py: Python<'py>,
    runner: &str,
    scenario: &str,
    overrides: Option<HashMap<String, String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let doc = bundled_scenario(scenario).unwrap_or(scenario);
    let mut pairs: Vec<(String, String)> = overrides.unwrap_or_default().into_iter().collect();
    pairs.sort();
    let doc = apply_overrides(doc, &pairs).map_err(py_err)?;
    let s = load_scenario(&doc).map_err(py_err)?;
    let result = py.detach(|| -> nearfield::Result<_> {
        Ok(match runner {
            "fig3" => Ok(run_fig3(&s)?),
            "fig4" => Ok(run_fig4(&s)?),
            "beamsplit" => Ok(run_beamsplit(&s)?),
            "fig5" => Err(run_fig5(&s)?),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown runner `{other}` (fig3, fig4, fig5, beamsplit)"
                )))
            }
        })
    });
    match result.map_err(py_err)? {
        Ok(table) => table_dict(py, table),
        Err((first, second)) => {
            let d = PyDict::new(py);
            d.set_item("ranges", first.spec.ranges.to_vec())?;
            d.set_item("resolution", first.spec.resolution.to_vec())?;
            d.set_item("user1", first.normalized)?;
            d.set_item("user2", second.normalized)?;
            Ok(d)
        }
    }
}

#[pymodule]
fn nearfield_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SPEED_OF_LIGHT", nearfield::SPEED_OF_LIGHT)?;
    m.add_class::<PyArray>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PyPrecoder>()?;
    m.add_function(wrap_pyfunction!(fraunhofer_distance, m)?)?;
    m.add_function(wrap_pyfunction!(reactive_bound, m)?)?;
    m.add_function(wrap_pyfunction!(nearfield_los, m)?)?;
    m.add_function(wrap_pyfunction!(farfield_steering, m)?)?;
    m.add_function(wrap_pyfunction!(conjugate_focus, m)?)?;
    m.add_function(wrap_pyfunction!(steer, m)?)?;
    m.add_function(wrap_pyfunction!(sum_rate_precoder, m)?)?;
    m.add_function(wrap_pyfunction!(received_power, m)?)?;
    m.add_function(wrap_pyfunction!(sinr, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(noise_power, m)?)?;
    m.add_function(wrap_pyfunction!(py_dbm_to_watts, m)?)?;
    m.add_function(wrap_pyfunction!(py_watts_to_dbm, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
