use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use ::shutter_angle::estimator::{self, FieldPair};
use ::shutter_angle::field::{self, Vec2, Vec2Field};
use ::shutter_angle::forensics;
use ::shutter_angle::synth::{self, SynthConfig};
use ::shutter_angle::validity::EstimationParams;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn params(patch_size: usize, max_angle: f64) -> PyResult<EstimationParams> {
    EstimationParams::new(patch_size, max_angle).map_err(value_err)
}

/// Dense per-pixel 2-vector field (optical flow or blur kernels).
#[pyclass(name = "Field", module = "shutter_angle", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyField {
    inner: Vec2Field,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(width: usize, height: usize, data: Vec<(f64, f64)>) -> PyResult<Self> {
        let data = data.into_iter().map(Vec2::from).collect();
        Ok(PyField {
            inner: Vec2Field::new(width, height, data).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn uniform(width: usize, height: usize, u: f64, v: f64) -> PyResult<Self> {
        Ok(PyField {
            inner: Vec2Field::uniform(width, height, Vec2::new(u, v)).map_err(value_err)?,
        })
    }

    /// Parses `.flo` bytes.
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(PyField {
            inner: field::read_vector_field(data).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let bytes = std::fs::read(&path)
            .map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = field::write_vector_field(&self.inner).map_err(value_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        field::save_vector_field(&path, &self.inner).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<(f64, f64)> {
        if x >= self.inner.width() || y >= self.inner.height() {
            return Err(value_err(format!("({x}, {y}) outside the field")));
        }
        let v = self.inner.get(x, y);
        Ok((v.x, v.y))
    }

    fn to_list(&self) -> Vec<(f64, f64)> {
        self.inner.data().iter().map(|v| (v.x, v.y)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Field({}x{})", self.inner.width(), self.inner.height())
    }
}

/// Per-frame estimate.
#[pyclass(
    name = "FrameEstimate",
    module = "shutter_angle",
    frozen,
    get_all,
    skip_from_py_object
)]
#[derive(Clone)]
pub struct PyFrameEstimate {
    frame_index: usize,
    alpha_patch: f64,
    patch_x0: usize,
    patch_y0: usize,
    n_valid: usize,
}

impl From<&estimator::FrameEstimate> for PyFrameEstimate {
    fn from(e: &estimator::FrameEstimate) -> Self {
        PyFrameEstimate {
            frame_index: e.frame_index,
            alpha_patch: e.alpha_patch,
            patch_x0: e.patch.x0,
            patch_y0: e.patch.y0,
            n_valid: e.n_valid,
        }
    }
}

#[pymethods]
impl PyFrameEstimate {
    fn __repr__(&self) -> String {
        format!(
            "FrameEstimate(frame_index={}, alpha_patch={})",
            self.frame_index, self.alpha_patch
        )
    }
}

/// Clip-level estimate: median of the per-frame estimates.
#[pyclass(name = "ClipEstimate", module = "shutter_angle", frozen)]
pub struct PyClipEstimate {
    inner: estimator::ClipEstimate,
}

#[pymethods]
impl PyClipEstimate {
    #[getter]
    fn alpha_glob(&self) -> f64 {
        self.inner.alpha_glob
    }

    #[getter]
    fn n_frames_used(&self) -> usize {
        self.inner.n_frames_used
    }

    #[getter]
    fn n_frames_total(&self) -> usize {
        self.inner.n_frames_total
    }

    #[getter]
    fn frames(&self) -> Vec<PyFrameEstimate> {
        self.inner
            .frames
            .iter()
            .map(PyFrameEstimate::from)
            .collect()
    }

    /// Tamper verdict against a reference exposure fraction, as
    /// `(verdict, k_hat, multiplier, relative_deviation)`.
    #[pyo3(signature = (alpha_ref, rel_tol = forensics::DEFAULT_REL_TOL))]
    fn detect_tamper(
        &self,
        alpha_ref: f64,
        rel_tol: f64,
    ) -> PyResult<(String, Option<u32>, Option<u32>, f64)> {
        let v = forensics::detect_tamper(&self.inner, alpha_ref, rel_tol).map_err(value_err)?;
        let name = verdict_name(v.verdict);
        Ok((name, v.k_hat, v.multiplier, v.relative_deviation))
    }

    fn __repr__(&self) -> String {
        format!(
            "ClipEstimate(alpha_glob={}, frames={}/{})",
            self.inner.alpha_glob, self.inner.n_frames_used, self.inner.n_frames_total
        )
    }
}

fn verdict_name(v: forensics::Verdict) -> String {
    match v {
        forensics::Verdict::Consistent => "consistent",
        forensics::Verdict::Deletion => "deletion",
        forensics::Verdict::Interpolation => "interpolation",
        forensics::Verdict::Indeterminate => "indeterminate",
    }
    .to_string()
}

fn to_pairs(pairs: Vec<(PyField, PyField)>) -> Vec<FieldPair> {
    pairs
        .into_iter()
        .map(|(f, b)| FieldPair::new(f.inner, b.inner))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (flow, blur, patch_size = 30, max_angle = 5.0))]
fn estimate_frame(
    flow: &PyField,
    blur: &PyField,
    patch_size: usize,
    max_angle: f64,
) -> PyResult<Option<PyFrameEstimate>> {
    let est = estimator::estimate_frame(&flow.inner, &blur.inner, &params(patch_size, max_angle)?)
        .map_err(value_err)?;
    Ok(est.as_ref().map(PyFrameEstimate::from))
}

#[pyfunction]
#[pyo3(signature = (pairs, patch_size = 30, max_angle = 5.0))]
fn estimate_clip(
    py: Python<'_>,
    pairs: Vec<(PyField, PyField)>,
    patch_size: usize,
    max_angle: f64,
) -> PyResult<PyClipEstimate> {
    let params = params(patch_size, max_angle)?;
    let pairs = to_pairs(pairs);
    let inner = py
        .detach(|| estimator::estimate_clip(&pairs, &params))
        .map_err(value_err)?;
    Ok(PyClipEstimate { inner })
}

#[pyfunction]
fn mean_absolute_error(estimates: Vec<f64>, ground_truth: f64) -> PyResult<f64> {
    estimator::mean_absolute_error(&estimates, ground_truth).map_err(value_err)
}

/// Renders a synthetic clip; returns its `(flow, blur)` pairs and the exposure fraction.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (width, height, velocity, alpha, n_frames, seed = 0, supersamples = 64))]
fn synth_fields(
    py: Python<'_>,
    width: usize,
    height: usize,
    velocity: (f64, f64),
    alpha: f64,
    n_frames: usize,
    seed: u64,
    supersamples: u32,
) -> PyResult<(Vec<(PyField, PyField)>, f64)> {
    let mut config = SynthConfig::new(width, height, velocity, alpha, n_frames, seed);
    config.supersamples = supersamples;
    let clip = py
        .detach(|| synth::render_clip(&config))
        .map_err(value_err)?;
    let pairs = clip
        .pairs
        .into_iter()
        .map(|p| (PyField { inner: p.flow }, PyField { inner: p.blur }))
        .collect();
    Ok((pairs, clip.alpha_apparent))
}

#[pyfunction]
fn quantize_blur(field: &PyField) -> PyField {
    PyField {
        inner: synth::quantize_blur(&field.inner),
    }
}

#[pyfunction]
fn perturb_field(field: &PyField, sigma_px: f64, seed: u64) -> PyResult<PyField> {
    Ok(PyField {
        inner: synth::perturb_field(&field.inner, sigma_px, seed).map_err(value_err)?,
    })
}

#[pymodule(name = "shutter_angle")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyField>()?;
    m.add_class::<PyFrameEstimate>()?;
    m.add_class::<PyClipEstimate>()?;
    m.add_function(wrap_pyfunction!(estimate_frame, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_clip, m)?)?;
    m.add_function(wrap_pyfunction!(mean_absolute_error, m)?)?;
    m.add_function(wrap_pyfunction!(synth_fields, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_blur, m)?)?;
    m.add_function(wrap_pyfunction!(perturb_field, m)?)?;
    Ok(())
}
