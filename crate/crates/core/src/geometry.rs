//! Two-view geometric primitives for the semi-calibrated case.
//!
//! Image coordinates are principal-point-centered pixels and both cameras
//! share `K = diag(f, f, 1)`. Camera 1 is `K[I|0]`, camera 2 is `K[R|t]`.

use nalgebra::{Matrix2, Matrix3, Matrix4, OMatrix, RowVector4, Vector3, U3, U7};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Determinant magnitude below which an affinity is treated as singular.
pub const SINGULAR_AFFINITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite coordinate in point pair")]
    NonFiniteCoordinate,
    #[error("local affinity is singular (det = {0:e})")]
    SingularAffinity(f64),
    #[error("focal length must be positive and finite, got {0}")]
    InvalidFocal(f64),
    #[error("matrix is zero or has non-finite entries")]
    DegenerateMatrix,
    #[error("rotation is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("translation must have unit norm, got {0}")]
    InvalidTranslation(f64),
    #[error("at least one correspondence is required")]
    NoCorrespondences,
    #[error("no pose candidate places any point in front of both cameras")]
    AllCheiralityFail,
    #[error("triangulation rays are degenerate")]
    DegenerateRay,
    #[error("surface normal estimation failed: {0}")]
    NormalEstimationFailed(&'static str),
}

/// A matched point in two images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
}

impl PointPair {
    pub fn new(u1: f64, v1: f64, u2: f64, v2: f64) -> Result<Self, GeometryError> {
        if [u1, v1, u2, v2].iter().all(|c| c.is_finite()) {
            Ok(Self { u1, v1, u2, v2 })
        } else {
            Err(GeometryError::NonFiniteCoordinate)
        }
    }

    /// Homogeneous image-1 point `[u1, v1, 1]`.
    pub fn p1(&self) -> Vector3<f64> {
        Vector3::new(self.u1, self.v1, 1.0)
    }

    /// Homogeneous image-2 point `[u2, v2, 1]`.
    pub fn p2(&self) -> Vector3<f64> {
        Vector3::new(self.u2, self.v2, 1.0)
    }
}

/// The 2×2 linear part `[a1 a2; a3 a4]` of a local affine transformation
/// mapping the neighbourhood of `p1` onto that of `p2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalAffinity {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl LocalAffinity {
    /// Builds an affinity, rejecting singular or non-finite input.
    pub fn new(a1: f64, a2: f64, a3: f64, a4: f64) -> Result<Self, GeometryError> {
        let a = Self { a1, a2, a3, a4 };
        if ![a1, a2, a3, a4].iter().all(|c| c.is_finite()) {
            return Err(GeometryError::SingularAffinity(f64::NAN));
        }
        if !a.is_invertible() {
            return Err(GeometryError::SingularAffinity(a.determinant()));
        }
        Ok(a)
    }

    pub fn identity() -> Self {
        Self { a1: 1.0, a2: 0.0, a3: 0.0, a4: 1.0 }
    }

    pub fn determinant(&self) -> f64 {
        self.a1 * self.a4 - self.a2 * self.a3
    }

    pub fn is_invertible(&self) -> bool {
        let det = self.determinant();
        det.is_finite() && det.abs() > SINGULAR_AFFINITY_TOL
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.a1, self.a2, self.a3, self.a4)
    }

    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self { a1: m[(0, 0)], a2: m[(0, 1)], a3: m[(1, 0)], a4: m[(1, 1)] }
    }
}

/// Point pair plus local affinity: the atomic input of the two-point solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineCorrespondence {
    pub points: PointPair,
    pub affinity: LocalAffinity,
}

impl AffineCorrespondence {
    pub fn new(points: PointPair, affinity: LocalAffinity) -> Self {
        Self { points, affinity }
    }

    /// Layout `u1 v1 u2 v2 a1 a2 a3 a4`.
    pub fn from_row(row: [f64; 8]) -> Self {
        let [u1, v1, u2, v2, a1, a2, a3, a4] = row;
        Self {
            points: PointPair { u1, v1, u2, v2 },
            affinity: LocalAffinity { a1, a2, a3, a4 },
        }
    }

    pub fn to_row(&self) -> [f64; 8] {
        let p = &self.points;
        let a = &self.affinity;
        [p.u1, p.v1, p.u2, p.v2, a.a1, a.a2, a.a3, a.a4]
    }
}

/// Scales `m` to unit Frobenius norm and flips its sign so that the
/// largest-magnitude entry (first in row-major order on ties) is positive.
fn normalize_matrix(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let norm = m.norm();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for r in 0..3 {
        for c in 0..3 {
            let v = m[(r, c)];
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
    }
    Some(m * (sign / norm))
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

/// Fundamental matrix with unit Frobenius norm and fixed sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(Matrix3<f64>);

impl FundamentalMatrix {
    /// Normalizes any nonzero finite 3×3 matrix. Rank is not enforced here;
    /// solver outputs are rank 2 up to round-off.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        normalize_matrix(m).map(Self).ok_or(GeometryError::DegenerateMatrix)
    }

    /// Entries `f1..f9` in row-major order.
    pub fn from_entries(f: &[f64; 9]) -> Result<Self, GeometryError> {
        Self::from_matrix(&Matrix3::from_row_slice(f))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn entries(&self) -> [f64; 9] {
        row_major(&self.0)
    }

    pub fn frobenius_distance(&self, other: &FundamentalMatrix) -> f64 {
        (self.0 - other.0).norm()
    }
}

/// Essential matrix with unit Frobenius norm and fixed sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Matrix3<f64>);

impl EssentialMatrix {
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        normalize_matrix(m).map(Self).ok_or(GeometryError::DegenerateMatrix)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn entries(&self) -> [f64; 9] {
        row_major(&self.0)
    }
}

/// `K = diag(f, f, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    focal: f64,
}

impl CameraIntrinsics {
    pub fn new(focal: f64) -> Result<Self, GeometryError> {
        if focal.is_finite() && focal > 0.0 {
            Ok(Self { focal })
        } else {
            Err(GeometryError::InvalidFocal(focal))
        }
    }

    pub fn focal(&self) -> f64 {
        self.focal
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(self.focal, self.focal, 1.0))
    }

    pub fn inverse(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(1.0 / self.focal, 1.0 / self.focal, 1.0))
    }

    /// Pixel coordinates to normalized camera coordinates.
    pub fn normalize(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new(u / self.focal, v / self.focal, 1.0)
    }
}

/// Pose of camera 2 relative to camera 1: `X2 = R X1 + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RelativePose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if !(orth <= 1e-10) || (rotation.determinant() - 1.0).abs() > 1e-10 {
            return Err(GeometryError::InvalidRotation);
        }
        let norm = translation.norm();
        if !((norm - 1.0).abs() <= 1e-10) {
            return Err(GeometryError::InvalidTranslation(norm));
        }
        Ok(Self { rotation, translation })
    }

    /// Camera 2 center in the camera-1 frame, `-Rᵀt`.
    pub fn camera2_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// `[t]ₓ R`.
    pub fn essential(&self) -> Matrix3<f64> {
        skew(&self.translation) * self.rotation
    }

    /// Pixel fundamental matrix `K⁻ᵀ [t]ₓ R K⁻¹`.
    pub fn fundamental(&self, k: &CameraIntrinsics) -> Matrix3<f64> {
        let k_inv = k.inverse();
        k_inv * self.essential() * k_inv
    }

    /// Depths of `q` (camera-1 frame) in camera 1 and camera 2.
    pub fn depths(&self, q: &Vector3<f64>) -> (f64, f64) {
        (q.z, (self.rotation * q + self.translation).z)
    }
}

/// Triangulated point with its estimated surface normal (camera-1 frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub q: Vector3<f64>,
    pub n: Vector3<f64>,
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `p2ᵀ F p1`.
pub fn epipolar_residual(f: &FundamentalMatrix, pp: &PointPair) -> f64 {
    pp.p2().dot(&(f.matrix() * pp.p1()))
}

/// `E = Kᵀ F K`, renormalized.
pub fn f_to_e(f: &FundamentalMatrix, k: &CameraIntrinsics) -> EssentialMatrix {
    let km = k.matrix();
    // F has unit norm and K is nonsingular, so KᵀFK is never zero.
    EssentialMatrix::from_matrix(&(km * f.matrix() * km)).expect("KᵀFK of a unit F is nonzero")
}

/// `2 F Q Fᵀ Q F − tr(F Q Fᵀ Q) F` with `Q = diag(1, 1, τ)`.
pub fn trace_residual(f: &FundamentalMatrix, tau: f64) -> Matrix3<f64> {
    trace_residual_matrix(f.matrix(), tau)
}

pub(crate) fn trace_residual_matrix(f: &Matrix3<f64>, tau: f64) -> Matrix3<f64> {
    let q = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, tau));
    let fqftq = f * q * f.transpose() * q;
    fqftq * f * 2.0 - f * fqftq.trace()
}

/// Trace-constraint residual of the unit-norm essential matrix implied by
/// `(F, f)`. Scale-free, so comparable across candidate focal lengths.
pub fn essential_trace_residual(f: &FundamentalMatrix, k: &CameraIntrinsics) -> f64 {
    let e = f_to_e(f, k);
    trace_residual_matrix(e.matrix(), 1.0).norm()
}

/// The four `(R, t)` factorizations of an essential matrix in fixed order:
/// `(UWVᵀ, u3)`, `(UWVᵀ, −u3)`, `(UWᵀVᵀ, u3)`, `(UWᵀVᵀ, −u3)`.
pub fn essential_candidates(e: &EssentialMatrix) -> [RelativePose; 4] {
    let svd = e.matrix().svd(true, true);
    let mut u = svd.u.expect("svd u");
    let mut v_t = svd.v_t.expect("svd v_t");
    // Column of U paired with the smallest singular value spans t.
    let (imin, _) = svd.singular_values.argmin();
    if imin != 2 {
        u.swap_columns(imin, 2);
        v_t.swap_rows(imin, 2);
    }
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v_t;
    let r2 = u * w.transpose() * v_t;
    let t = u.column(2).normalize();
    [
        RelativePose { rotation: r1, translation: t },
        RelativePose { rotation: r1, translation: -t },
        RelativePose { rotation: r2, translation: t },
        RelativePose { rotation: r2, translation: -t },
    ]
}

/// Selects the essential factorization that puts the most triangulated points
/// in front of both cameras. Ties go to the earlier candidate.
pub fn decompose_essential(
    e: &EssentialMatrix,
    correspondences: &[PointPair],
    k: &CameraIntrinsics,
) -> Result<RelativePose, GeometryError> {
    if correspondences.is_empty() {
        return Err(GeometryError::NoCorrespondences);
    }
    let mut best: Option<(usize, RelativePose)> = None;
    for pose in essential_candidates(e) {
        let count = correspondences
            .iter()
            .filter(|pp| match triangulate(&pose, k, pp) {
                Ok(q) => {
                    let (d1, d2) = pose.depths(&q);
                    d1 > 0.0 && d2 > 0.0
                }
                Err(_) => false,
            })
            .count();
        if count > best.as_ref().map_or(0, |(c, _)| *c) {
            best = Some((count, pose));
        }
    }
    best.map(|(_, pose)| pose).ok_or(GeometryError::AllCheiralityFail)
}

/// Linear (DLT) triangulation of a pixel point pair; returns the point in
/// the camera-1 frame.
pub fn triangulate(
    pose: &RelativePose,
    k: &CameraIntrinsics,
    pp: &PointPair,
) -> Result<Vector3<f64>, GeometryError> {
    let km = k.matrix();
    let mut p2 = nalgebra::Matrix3x4::zeros();
    p2.fixed_view_mut::<3, 3>(0, 0).copy_from(&(km * pose.rotation));
    p2.set_column(3, &(km * pose.translation));
    let mut p1 = nalgebra::Matrix3x4::zeros();
    p1.fixed_view_mut::<3, 3>(0, 0).copy_from(&km);

    let rows: [RowVector4<f64>; 4] = [
        p1.row(2) * pp.u1 - p1.row(0),
        p1.row(2) * pp.v1 - p1.row(1),
        p2.row(2) * pp.u2 - p2.row(0),
        p2.row(2) * pp.v2 - p2.row(1),
    ];
    let mut a = Matrix4::zeros();
    for (i, row) in rows.iter().enumerate() {
        let n = row.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(GeometryError::DegenerateRay);
        }
        a.set_row(i, &(row / n));
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateRay)?;
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[2]];
    let smallest = svd.singular_values[order[3]];
    if second_smallest - smallest <= 1e-12 * largest {
        return Err(GeometryError::DegenerateRay);
    }
    let x = v_t.row(order[3]);
    if x[3] == 0.0 {
        return Err(GeometryError::DegenerateRay);
    }
    Ok(Vector3::new(x[0] / x[3], x[1] / x[3], x[2] / x[3]))
}

/// Surface normal at `q` from the local affinity.
///
/// Homographies compatible with `E = [t]ₓR` in normalized coordinates form
/// the family `H = R + t mᵀ` where `m = n/d` describes the plane `nᵀX = d`.
/// `m` is solved by linear least squares from the four Jacobian equations
/// `s·A = H(1:2,1:2) − x2·H(3,1:2)`, `s = H(3,:)·x1`, and the point transfer
/// `[x2]ₓ H x1 = 0`. The affinity is invariant to the isotropic `K⁻¹`
/// scaling, so it is used as-is. The returned normal faces camera 1.
pub fn estimate_normal(
    pose: &RelativePose,
    k: &CameraIntrinsics,
    ac: &AffineCorrespondence,
    q: &Vector3<f64>,
) -> Result<Vector3<f64>, GeometryError> {
    if !ac.affinity.is_invertible() {
        return Err(GeometryError::NormalEstimationFailed("singular affinity"));
    }
    let x1 = k.normalize(ac.points.u1, ac.points.v1);
    let x2 = k.normalize(ac.points.u2, ac.points.v2);
    let a = ac.affinity.matrix();
    let r = &pose.rotation;
    let t = &pose.translation;

    let mut lhs = OMatrix::<f64, U7, U3>::zeros();
    let mut rhs = nalgebra::SVector::<f64, 7>::zeros();
    let r_x1_z = r.row(2).dot(&x1.transpose());
    for i in 0..2 {
        for j in 0..2 {
            let row = 2 * i + j;
            // A_ij (r3·x1 + t_z x1ᵀm) = R_ij + t_i m_j − x2_i (R_3j + t_z m_j)
            let mut coeff = x1 * (a[(i, j)] * t.z);
            coeff[j] -= t[i] - x2[i] * t.z;
            lhs.set_row(row, &coeff.transpose());
            rhs[row] = r[(i, j)] - x2[i] * r[(2, j)] - a[(i, j)] * r_x1_z;
        }
    }
    let x2_skew = skew(&x2);
    let transfer_dir = x2_skew * t;
    let transfer_rhs = -(x2_skew * r * x1);
    for i in 0..3 {
        lhs.set_row(4 + i, &(x1 * transfer_dir[i]).transpose());
        rhs[4 + i] = transfer_rhs[i];
    }

    let svd = lhs.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(GeometryError::NormalEstimationFailed("rank-deficient system"));
    }
    let m = svd
        .solve(&rhs, 0.0)
        .map_err(|_| GeometryError::NormalEstimationFailed("least-squares solve"))?;
    let norm = m.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(GeometryError::NormalEstimationFailed("plane at infinity"));
    }
    let n = m / norm;
    // Camera 1 sits at the origin.
    Ok(if n.dot(&(-q)) >= 0.0 { n } else { -n })
}

/// `(q, n)` for one correspondence under a given pose.
pub fn reconstruct_point(
    pose: &RelativePose,
    k: &CameraIntrinsics,
    ac: &AffineCorrespondence,
) -> Result<ScenePoint, GeometryError> {
    let q = triangulate(pose, k, &ac.points)?;
    let n = estimate_normal(pose, k, ac, &q)?;
    Ok(ScenePoint { q, n })
}

/// Pixel reprojection of a camera-1-frame point into both images.
pub fn project(pose: &RelativePose, k: &CameraIntrinsics, q: &Vector3<f64>) -> PointPair {
    let f = k.focal();
    let x2 = pose.rotation * q + pose.translation;
    PointPair { u1: f * q.x / q.z, v1: f * q.y / q.z, u2: f * x2.x / x2.z, v2: f * x2.y / x2.z }
}
