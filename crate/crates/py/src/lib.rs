//! Python bindings for the two-affine-correspondence focal length solver.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use twoac::geometry::{self, LocalAffinity, PointPair};
use twoac::harness::{self, EstimationConfig, HarnessError, VotingDomain};
use twoac::minimal_solver::{self, CandidateSolution};
use twoac::root_gate::{self, FocalLimits};
use twoac::selection::SelectionConfig;
use twoac::synth::{self, SceneConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn harness_err(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Io { .. } => PyIOError::new_err(e.to_string()),
        HarnessError::Parse { .. } | HarnessError::InvalidConfig(_) | HarnessError::InsufficientCorrespondences(_) => {
            value_err(e)
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// One point pair with its 2x2 local affinity.
#[pyclass(name = "AffineCorrespondence", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCorrespondence {
    inner: geometry::AffineCorrespondence,
}

#[pymethods]
impl PyCorrespondence {
    #[new]
    #[allow(clippy::too_many_arguments)]
    fn new(u1: f64, v1: f64, u2: f64, v2: f64, a1: f64, a2: f64, a3: f64, a4: f64) -> PyResult<Self> {
        let points = PointPair::new(u1, v1, u2, v2).map_err(value_err)?;
        let affinity = LocalAffinity::new(a1, a2, a3, a4).map_err(value_err)?;
        Ok(Self { inner: geometry::AffineCorrespondence::new(points, affinity) })
    }

    /// `[u1, v1, u2, v2, a1, a2, a3, a4]`
    #[getter]
    fn row(&self) -> Vec<f64> {
        self.inner.to_row().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("AffineCorrespondence{:?}", self.inner.to_row())
    }
}

#[pyclass(name = "Candidate", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCandidate {
    inner: CandidateSolution,
}

#[pymethods]
impl PyCandidate {
    #[getter]
    fn focal(&self) -> f64 {
        self.inner.focal
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    /// Unit-norm fundamental matrix, row-major.
    #[getter(F)]
    fn fundamental(&self) -> Vec<f64> {
        self.inner.fundamental.entries().to_vec()
    }

    #[getter]
    fn trace_residual(&self) -> f64 {
        self.inner.trace_residual
    }

    fn __repr__(&self) -> String {
        format!("Candidate(focal={}, trace_residual={:e})", self.inner.focal, self.inner.trace_residual)
    }
}

#[pyclass(name = "SyntheticScene", frozen)]
struct PyScene {
    inner: synth::SyntheticScene,
}

#[pymethods]
impl PyScene {
    #[getter]
    fn focal(&self) -> f64 {
        self.inner.intrinsics.focal()
    }

    #[getter(F)]
    fn fundamental(&self) -> Vec<f64> {
        self.inner.fundamental.entries().to_vec()
    }

    /// Noisy measurements, outliers included.
    fn measured(&self) -> Vec<PyCorrespondence> {
        self.inner.measured().into_iter().map(|inner| PyCorrespondence { inner }).collect()
    }

    fn clean(&self) -> Vec<PyCorrespondence> {
        self.inner.clean().into_iter().map(|inner| PyCorrespondence { inner }).collect()
    }

    fn outlier_count(&self) -> usize {
        self.inner.outlier_count()
    }

    /// Indices of the first inliers on two planes.
    fn pair_on_planes(&self, first: usize, second: usize) -> Option<(usize, usize)> {
        self.inner.pair_on_planes(first, second)
    }

    fn truth_json(&self) -> String {
        self.inner.truth_json().to_string()
    }
}

#[pyclass(name = "EstimationResult", frozen)]
struct PyEstimation {
    inner: harness::EstimationResult,
}

#[pymethods]
impl PyEstimation {
    #[getter]
    fn focal(&self) -> f64 {
        self.inner.focal
    }

    #[getter(F)]
    fn fundamental(&self) -> Vec<f64> {
        self.inner.fundamental.entries().to_vec()
    }

    #[getter]
    fn voting_focal(&self) -> f64 {
        self.inner.voting_focal
    }

    /// Pooled values in the voting domain.
    #[getter]
    fn pool(&self) -> Vec<f64> {
        self.inner.pool.values()
    }

    #[getter]
    fn density(&self) -> Vec<(f64, f64)> {
        self.inner.density.clone()
    }

    fn report_json(&self) -> String {
        harness::report_json(&self.inner).to_string()
    }

    fn write_report(&self, path: PathBuf) -> PyResult<()> {
        harness::emit_report(&self.inner, &path).map_err(harness_err)
    }
}

fn unwrap_all(acs: &[PyRef<'_, PyCorrespondence>]) -> Vec<geometry::AffineCorrespondence> {
    acs.iter().map(|a| a.inner).collect()
}

/// All candidate `(f, F)` solutions for two correspondences, best first.
#[pyfunction]
fn solve_two_ac(ac1: &PyCorrespondence, ac2: &PyCorrespondence) -> PyResult<Vec<PyCandidate>> {
    let cands = minimal_solver::solve_two_ac(&ac1.inner, &ac2.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(cands.into_iter().map(|inner| PyCandidate { inner }).collect())
}

/// Keeps candidates whose focal length lies in `[min_focal, max_focal]`.
#[pyfunction]
#[pyo3(signature = (candidates, min_focal = FocalLimits::DEFAULT_MIN, max_focal = FocalLimits::DEFAULT_MAX))]
fn gate_physical(candidates: Vec<PyRef<'_, PyCandidate>>, min_focal: f64, max_focal: f64) -> PyResult<Vec<PyCandidate>> {
    let limits = FocalLimits::new(min_focal, max_focal).map_err(value_err)?;
    let raw: Vec<CandidateSolution> = candidates.iter().map(|c| c.inner.clone()).collect();
    Ok(root_gate::gate_physical(&raw, &limits).into_iter().map(|inner| PyCandidate { inner }).collect())
}

/// Whether both surface patches face both cameras under the candidate's pose.
#[pyfunction]
fn gate_observability(candidate: &PyCandidate, ac1: &PyCorrespondence, ac2: &PyCorrespondence) -> PyResult<bool> {
    root_gate::gate_observability(&candidate.inner, &[ac1.inner, ac2.inner])
        .map(|(pass, _)| pass)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (seed = 0, focal = 600.0, noise = 0.0, outliers = 0.0, planes = 5, samples_per_plane = 50, aspect = 1.0))]
fn generate_scene(
    seed: u64,
    focal: f64,
    noise: f64,
    outliers: f64,
    planes: usize,
    samples_per_plane: usize,
    aspect: f64,
) -> PyResult<PyScene> {
    let cfg = SceneConfig {
        focal,
        noise_sigma: noise,
        outlier_fraction: outliers,
        planes,
        samples_per_plane,
        aspect_ratio: aspect,
        ..SceneConfig::with_seed(seed)
    };
    synth::generate(&cfg).map(|inner| PyScene { inner }).map_err(value_err)
}

/// Full sampling loop with Median-Shift selection.
#[pyfunction]
#[pyo3(signature = (
    correspondences, iterations = 100, bandwidth = 10.0, min_focal = FocalLimits::DEFAULT_MIN,
    max_focal = FocalLimits::DEFAULT_MAX, seed = 0, ground_truth = None
))]
#[allow(clippy::too_many_arguments)]
fn estimate(
    py: Python<'_>,
    correspondences: Vec<PyRef<'_, PyCorrespondence>>,
    iterations: usize,
    bandwidth: f64,
    min_focal: f64,
    max_focal: f64,
    seed: u64,
    ground_truth: Option<f64>,
) -> PyResult<PyEstimation> {
    let acs = unwrap_all(&correspondences);
    let domain = match ground_truth {
        None => VotingDomain::FocalPixels,
        Some(f) if f > 0.0 => VotingDomain::RelativePercent { ground_truth: f },
        Some(f) => return Err(PyValueError::new_err(format!("ground truth {f} must be positive"))),
    };
    let cfg = EstimationConfig {
        iterations,
        selection: SelectionConfig::new(bandwidth).map_err(value_err)?,
        limits: FocalLimits::new(min_focal, max_focal).map_err(value_err)?,
        seed,
        domain,
        ..Default::default()
    };
    let result = py.detach(|| harness::estimate(&acs, &cfg)).map_err(harness_err)?;
    Ok(PyEstimation { inner: result })
}

#[pyfunction]
fn ransac_iterations(sample_size: u32, outlier_ratio: f64, confidence: f64) -> PyResult<u64> {
    harness::ransac_iterations(sample_size, outlier_ratio, confidence).map_err(harness_err)
}

/// Reads a correspondence file, subtracting the principal point.
#[pyfunction]
#[pyo3(signature = (path, principal_point = (0.0, 0.0)))]
fn load_correspondences(path: PathBuf, principal_point: (f64, f64)) -> PyResult<Vec<PyCorrespondence>> {
    let loaded = harness::load_correspondences(&path, principal_point).map_err(harness_err)?;
    Ok(loaded.correspondences.into_iter().map(|inner| PyCorrespondence { inner }).collect())
}

#[pyfunction]
fn write_correspondences(path: PathBuf, correspondences: Vec<PyRef<'_, PyCorrespondence>>) -> PyResult<()> {
    harness::write_correspondences(&path, &unwrap_all(&correspondences)).map_err(harness_err)
}

#[pymodule]
fn twoac_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorrespondence>()?;
    m.add_class::<PyCandidate>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyEstimation>()?;
    m.add_function(wrap_pyfunction!(solve_two_ac, m)?)?;
    m.add_function(wrap_pyfunction!(gate_physical, m)?)?;
    m.add_function(wrap_pyfunction!(gate_observability, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(ransac_iterations, m)?)?;
    m.add_function(wrap_pyfunction!(load_correspondences, m)?)?;
    m.add_function(wrap_pyfunction!(write_correspondences, m)?)?;
    Ok(())
}
