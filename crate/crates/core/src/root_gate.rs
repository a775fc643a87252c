//! Rejection of candidate solutions that cannot correspond to a real camera
//! pair: focal lengths outside a plausible range, and surface normals that
//! would face away from one of the cameras.

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{
    decompose_essential, f_to_e, reconstruct_point, AffineCorrespondence, CameraIntrinsics,
    GeometryError, PointPair, RelativePose,
};
use crate::minimal_solver::CandidateSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("focal limits must satisfy 0 < min < max, got [{0}, {1}]")]
    InvalidLimits(f64, f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Closed interval of admissible focal lengths in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalLimits {
    min_f: f64,
    max_f: f64,
}

impl FocalLimits {
    pub const DEFAULT_MIN: f64 = 100.0;
    pub const DEFAULT_MAX: f64 = 500_000.0;

    pub fn new(min_f: f64, max_f: f64) -> Result<Self, GateError> {
        if !(min_f > 0.0 && min_f < max_f && max_f.is_finite()) {
            return Err(GateError::InvalidLimits(min_f, max_f));
        }
        Ok(Self { min_f, max_f })
    }

    pub fn min_f(&self) -> f64 {
        self.min_f
    }

    pub fn max_f(&self) -> f64 {
        self.max_f
    }

    pub fn contains(&self, focal: f64) -> bool {
        focal >= self.min_f && focal <= self.max_f
    }
}

impl Default for FocalLimits {
    fn default() -> Self {
        Self { min_f: Self::DEFAULT_MIN, max_f: Self::DEFAULT_MAX }
    }
}

/// Keeps candidates whose focal length lies inside `limits`, in input order.
pub fn gate_physical(candidates: &[CandidateSolution], limits: &FocalLimits) -> Vec<CandidateSolution> {
    candidates
        .iter()
        .filter(|c| limits.contains(c.focal))
        .map(|c| {
            let mut c = c.clone();
            c.gate_flags.physical = Some(true);
            c
        })
        .collect()
}

/// Per-correspondence outcome of the visibility test.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityEntry {
    pub q: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// `n·(c1 − q)`
    pub dot1: f64,
    /// `n·(c2 − q)`
    pub dot2: f64,
    pub depth1: f64,
    pub depth2: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservabilityReport {
    pub pose: Option<RelativePose>,
    /// Set when no factorization of the essential matrix put the points in
    /// front of both cameras.
    pub cheirality_failed: bool,
    pub entries: Vec<ObservabilityEntry>,
}

impl ObservabilityReport {
    pub fn pass(&self) -> bool {
        !self.cheirality_failed && self.entries.iter().all(|e| e.pass)
    }
}

/// Visibility test under an explicit pose. A surface point is observable
/// from both cameras only if one orientation of its normal makes an acute
/// angle with both viewing directions, and the point lies in front of both.
pub fn observability_for_pose(
    pose: &RelativePose,
    k: &CameraIntrinsics,
    acs: &[AffineCorrespondence],
) -> Result<ObservabilityReport, GeometryError> {
    let c1 = Vector3::zeros();
    let c2 = pose.camera2_center();
    let mut entries = Vec::with_capacity(acs.len());
    for ac in acs {
        let sp = reconstruct_point(pose, k, ac)?;
        let dot1 = sp.n.dot(&(c1 - sp.q));
        let dot2 = sp.n.dot(&(c2 - sp.q));
        let (depth1, depth2) = pose.depths(&sp.q);
        let pass = dot1 > 0.0 && dot2 > 0.0 && depth1 > 0.0 && depth2 > 0.0;
        entries.push(ObservabilityEntry { q: sp.q, normal: sp.n, dot1, dot2, depth1, depth2, pass });
    }
    Ok(ObservabilityReport { pose: Some(*pose), cheirality_failed: false, entries })
}

/// Recovers the pose implied by the candidate and runs the visibility test on
/// every correspondence. An empty list passes.
pub fn gate_observability(
    candidate: &CandidateSolution,
    acs: &[AffineCorrespondence],
) -> Result<(bool, ObservabilityReport), GeometryError> {
    if acs.is_empty() {
        return Ok((true, ObservabilityReport::default()));
    }
    let k = CameraIntrinsics::new(candidate.focal)?;
    let e = f_to_e(&candidate.fundamental, &k);
    let points: Vec<PointPair> = acs.iter().map(|ac| ac.points).collect();
    let pose = match decompose_essential(&e, &points, &k) {
        Ok(pose) => pose,
        Err(GeometryError::AllCheiralityFail) => {
            let report = ObservabilityReport { pose: None, cheirality_failed: true, entries: Vec::new() };
            return Ok((false, report));
        }
        Err(other) => return Err(other),
    };
    let report = observability_for_pose(&pose, &k, acs)?;
    Ok((report.pass(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FundamentalMatrix;
    use crate::minimal_solver::{solve_two_ac, GateFlags};
    use crate::synth::{generate, SceneConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn candidate(focal: f64) -> CandidateSolution {
        CandidateSolution {
            focal,
            tau: focal.powi(-2),
            fundamental: FundamentalMatrix::from_matrix(&nalgebra::Matrix3::identity()).unwrap(),
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            trace_residual: 0.0,
            gate_flags: GateFlags::default(),
        }
    }

    #[test]
    fn physical_gate_examples() {
        let limits = FocalLimits::default();
        let input = vec![candidate(600.0), candidate(50.0), candidate(1e6), candidate(100.0)];
        let kept = gate_physical(&input, &limits);
        let focals: Vec<f64> = kept.iter().map(|c| c.focal).collect();
        assert_eq!(focals, vec![600.0, 100.0]);
        assert!(kept.iter().all(|c| c.gate_flags.physical == Some(true)));
        let again = gate_physical(&kept, &limits);
        assert_eq!(again, kept);
    }

    #[test]
    fn invalid_limits_rejected() {
        assert!(FocalLimits::new(0.0, 10.0).is_err());
        assert!(FocalLimits::new(10.0, 10.0).is_err());
        assert!(FocalLimits::new(10.0, f64::INFINITY).is_err());
    }

    #[test]
    fn empty_list_passes() {
        let (ok, report) = gate_observability(&candidate(600.0), &[]).unwrap();
        assert!(ok);
        assert!(report.entries.is_empty());
    }

    fn true_root(scene: &crate::synth::SyntheticScene, i: usize, j: usize) -> CandidateSolution {
        let c = scene.clean();
        solve_two_ac(&c[i], &c[j])
            .unwrap()
            .into_iter()
            .min_by(|a, b| (a.focal - 600.0).abs().total_cmp(&(b.focal - 600.0).abs()))
            .unwrap()
    }

    #[test]
    fn true_root_is_observable() {
        for seed in 0..20 {
            let scene = generate(&SceneConfig::with_seed(seed)).unwrap();
            let (i, j) = scene.pair_on_planes(0, 1).unwrap();
            let cand = true_root(&scene, i, j);
            let acs = [scene.clean()[i], scene.clean()[j]];
            let (ok, report) = gate_observability(&cand, &acs).unwrap();
            assert!(ok, "seed {seed}: {report:?}");
            assert_eq!(report.entries.len(), 2);
        }
    }

    #[test]
    fn mirrored_translation_fails() {
        let scene = generate(&SceneConfig::with_seed(3)).unwrap();
        let (i, j) = scene.pair_on_planes(0, 1).unwrap();
        let acs = [scene.clean()[i], scene.clean()[j]];
        let mirrored = RelativePose::new(scene.pose.rotation, -scene.pose.translation).unwrap();
        let report = observability_for_pose(&mirrored, &scene.intrinsics, &acs).unwrap();
        assert!(!report.pass());
        assert!(report.entries.iter().all(|e| e.depth1 < 0.0 || e.depth2 < 0.0));
        let truth = observability_for_pose(&scene.pose, &scene.intrinsics, &acs).unwrap();
        assert!(truth.pass());
    }

    /// Membership in the visible half-sphere written as a rectangle in
    /// spherical coordinates of a frame whose pole is the viewing direction:
    /// azimuth anywhere in `[-π, π]`, polar angle in `[0, π/2)`.
    fn in_rectangle(view: &Vector3<f64>, n: &Vector3<f64>) -> bool {
        let pole = view.normalize();
        let helper = if pole.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = pole.cross(&helper).normalize();
        let e2 = pole.cross(&e1);
        let n = n.normalize();
        let azimuth = n.dot(&e2).atan2(n.dot(&e1));
        let polar = n.dot(&pole).clamp(-1.0, 1.0).acos();
        (-std::f64::consts::PI..=std::f64::consts::PI).contains(&azimuth)
            && (0.0..std::f64::consts::FRAC_PI_2).contains(&polar)
    }

    #[test]
    fn dot_test_matches_spherical_rectangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sample = |rng: &mut ChaCha8Rng| -> Vector3<f64> {
            Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        };
        let mut checked = 0;
        for _ in 0..10_000 {
            let q = sample(&mut rng);
            let c = sample(&mut rng);
            let n = sample(&mut rng);
            let view = c - q;
            let cos = n.normalize().dot(&view.normalize());
            // Skip draws within rounding of the boundary great circle.
            if cos.abs() < 1e-9 {
                continue;
            }
            assert_eq!(n.dot(&view) > 0.0, in_rectangle(&view, &n));
            checked += 1;
        }
        assert!(checked > 9_900);
    }
}
