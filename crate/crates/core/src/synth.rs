//! Synthetic two-view scenes with known focal length, pose and planes.
//!
//! Camera 1 sits at `[0, 0, 1]` looking at the origin; camera 2 is displaced
//! by `baseline` in a uniformly random direction and looks at a random point
//! near the origin. Planes pass through the origin and are sampled on a disc around
//! it; local affinities are the Jacobians of the plane-induced homographies.
//!
//! All ground truth is expressed in the camera-1 frame with the scene scaled
//! so that the baseline has unit length, matching the unit-translation pose
//! returned by the solver.

use nalgebra::{Matrix2, Matrix3, Rotation3, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{
    project, AffineCorrespondence, CameraIntrinsics, EssentialMatrix, FundamentalMatrix,
    GeometryError, LocalAffinity, PointPair, RelativePose, ScenePoint,
};

/// Consecutive rejected samples after which generation gives up.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("{MAX_CONSECUTIVE_REJECTIONS} consecutive samples fell outside the field of view")]
    FieldOfViewExhausted,
    #[error("plane passes through a camera center")]
    PlaneThroughCenter,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How measured affinities are perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum AffinityNoise {
    /// Jacobian of the true homography re-evaluated at the noisy image-1 point.
    Recompute,
    /// Additive Gaussian entry noise with standard deviation `scale · σ`.
    Additive { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneConfig {
    pub focal: f64,
    pub baseline: f64,
    pub planes: usize,
    pub samples_per_plane: usize,
    /// Pixel noise standard deviation.
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    /// Factor applied to image-2 `v` coordinates (1.0 = correct aspect ratio).
    pub aspect_ratio: f64,
    /// Camera 2 aims at a point drawn uniformly from a ball of this radius
    /// around the origin. Zero makes both optical axes meet at the origin,
    /// which is a critical configuration for a shared focal length.
    pub camera2_target_spread: f64,
    pub affinity_noise: AffinityNoise,
    pub image_width: f64,
    pub image_height: f64,
    /// Radius of the sampled disc on each plane, in world units.
    pub patch_radius: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            focal: 600.0,
            baseline: 0.15,
            planes: 5,
            samples_per_plane: 50,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            aspect_ratio: 1.0,
            camera2_target_spread: 0.5,
            affinity_noise: AffinityNoise::Recompute,
            image_width: 1200.0,
            image_height: 800.0,
            patch_radius: 2.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(SynthError::InvalidConfig("focal must be positive"));
        }
        if !(self.baseline > 0.0 && self.baseline.is_finite()) {
            return Err(SynthError::InvalidConfig("baseline must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SynthError::InvalidConfig("noise sigma must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(SynthError::InvalidConfig("outlier fraction must be in [0, 1)"));
        }
        if !(self.aspect_ratio > 0.0 && self.aspect_ratio.is_finite()) {
            return Err(SynthError::InvalidConfig("aspect ratio must be positive"));
        }
        if self.planes == 0 || self.samples_per_plane == 0 {
            return Err(SynthError::InvalidConfig("need at least one plane and one sample"));
        }
        if !(self.camera2_target_spread >= 0.0 && self.camera2_target_spread < 1.0) {
            return Err(SynthError::InvalidConfig("camera 2 target spread must be in [0, 1)"));
        }
        if !(self.patch_radius > 0.0 && self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(SynthError::InvalidConfig("patch and image extents must be positive"));
        }
        Ok(())
    }
}

/// Plane `nᵀX = d` in the camera-1 frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneCorrespondence {
    /// What a detector would report: noisy, possibly an outlier.
    pub measured: AffineCorrespondence,
    /// Noise-free projection and exact affinity.
    pub clean: AffineCorrespondence,
    /// Ground-truth point and camera-1-facing normal.
    pub truth: ScenePoint,
    pub plane: usize,
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub intrinsics: CameraIntrinsics,
    pub pose: RelativePose,
    pub fundamental: FundamentalMatrix,
    pub essential: EssentialMatrix,
    pub planes: Vec<Plane>,
    pub correspondences: Vec<SceneCorrespondence>,
}

impl SyntheticScene {
    pub fn measured(&self) -> Vec<AffineCorrespondence> {
        self.correspondences.iter().map(|c| c.measured).collect()
    }

    pub fn clean(&self) -> Vec<AffineCorrespondence> {
        self.correspondences.iter().map(|c| c.clean).collect()
    }

    pub fn outlier_count(&self) -> usize {
        self.correspondences.iter().filter(|c| c.outlier).count()
    }

    /// Index of the first inlier on each of two distinct planes.
    pub fn pair_on_planes(&self, first: usize, second: usize) -> Option<(usize, usize)> {
        let find = |p: usize| self.correspondences.iter().position(|c| c.plane == p && !c.outlier);
        Some((find(first)?, find(second)?))
    }

    /// Ground-truth sidecar: focal, row-major F, pose and plane normals.
    pub fn truth_json(&self) -> serde_json::Value {
        let r = &self.pose.rotation;
        let rotation: Vec<f64> = (0..9).map(|i| r[(i / 3, i % 3)]).collect();
        let t = &self.pose.translation;
        serde_json::json!({
            "f": self.intrinsics.focal(),
            "F": self.fundamental.entries().to_vec(),
            "pose": {
                "rotation": rotation,
                "translation": [t.x, t.y, t.z],
                "baseline": self.config.baseline,
            },
            "normals": self.planes.iter().map(|p| vec![p.normal.x, p.normal.y, p.normal.z]).collect::<Vec<_>>(),
            "seed": self.config.seed,
            "sigma": self.config.noise_sigma,
        })
    }
}

/// Pixel homography induced by `plane` between the two views.
pub fn plane_homography(
    pose: &RelativePose,
    k: &CameraIntrinsics,
    plane: &Plane,
) -> Result<Matrix3<f64>, SynthError> {
    let scale = 1.0_f64.max(plane.distance.abs());
    let through_c2 = (plane.normal.dot(&pose.camera2_center()) - plane.distance).abs();
    if plane.distance.abs() <= 1e-12 || through_c2 <= 1e-12 * scale {
        return Err(SynthError::PlaneThroughCenter);
    }
    let calibrated = pose.rotation + pose.translation * plane.normal.transpose() / plane.distance;
    Ok(k.matrix() * calibrated * k.inverse())
}

/// Jacobian of the pixel homography `H` at `(u, v)`.
pub fn homography_jacobian(h: &Matrix3<f64>, u: f64, v: f64) -> Matrix2<f64> {
    let x = h * Vector3::new(u, v, 1.0);
    let (u2, v2) = (x.x / x.z, x.y / x.z);
    Matrix2::new(
        (h[(0, 0)] - u2 * h[(2, 0)]) / x.z,
        (h[(0, 1)] - u2 * h[(2, 1)]) / x.z,
        (h[(1, 0)] - v2 * h[(2, 0)]) / x.z,
        (h[(1, 1)] - v2 * h[(2, 1)]) / x.z,
    )
}

/// Local affinity at image-1 point `p1` for a point on `plane`.
pub fn affinity_from_plane(
    pose: &RelativePose,
    k: &CameraIntrinsics,
    plane: &Plane,
    p1: &Vector2<f64>,
) -> Result<LocalAffinity, SynthError> {
    let h = plane_homography(pose, k, plane)?;
    Ok(LocalAffinity::from_matrix(&homography_jacobian(&h, p1.x, p1.y)))
}

/// World-to-camera rotation of a camera at `center` looking at `target`.
fn look_at(center: &Vector3<f64>, target: &Vector3<f64>) -> Matrix3<f64> {
    let z = (target - center).normalize();
    let hint = if z.y.abs() < 0.9 { Vector3::y() } else { Vector3::x() };
    let x = hint.cross(&z).normalize();
    let y = z.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

fn unit_vector(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn random_in_ball(rng: &mut impl Rng, radius: f64) -> Vector3<f64> {
    if radius == 0.0 {
        return Vector3::zeros();
    }
    let r = radius * rng.random::<f64>().cbrt();
    unit_vector(rng) * r
}

fn gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// Generates a scene; deterministic in `cfg.seed`.
pub fn generate(cfg: &SceneConfig) -> Result<SyntheticScene, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = CameraIntrinsics::new(cfg.focal)?;
    let origin = Vector3::zeros();
    let c1 = Vector3::new(0.0, 0.0, 1.0);
    let r1 = look_at(&c1, &origin);
    let c2 = c1 + unit_vector(&mut rng) * cfg.baseline;
    let target = random_in_ball(&mut rng, cfg.camera2_target_spread);
    let r2 = look_at(&c2, &target);

    let rotation = Rotation3::from_matrix(&(r2 * r1.transpose())).into_inner();
    let t_metric = r2 * (c1 - c2);
    let pose = RelativePose::new(rotation, t_metric / t_metric.norm())?;
    let fundamental = FundamentalMatrix::from_matrix(&pose.fundamental(&k))?;
    let essential = EssentialMatrix::from_matrix(&pose.essential())?;

    let half_w = 0.5 * cfg.image_width;
    let half_h = 0.5 * cfg.image_height;
    let in_view = |pp: &PointPair| {
        pp.u1.abs() <= half_w && pp.v1.abs() <= half_h && pp.u2.abs() <= half_w
            && pp.v2.abs() <= half_h
    };

    let mut planes = Vec::with_capacity(cfg.planes);
    let mut correspondences = Vec::with_capacity(cfg.planes * cfg.samples_per_plane);
    for plane_idx in 0..cfg.planes {
        // Both cameras must see the front face at a non-grazing angle.
        let mut tries = 0;
        let world_normal = loop {
            let n = unit_vector(&mut rng);
            let n = if n.dot(&c1) < 0.0 { -n } else { n };
            let cos1 = n.dot(&c1) / c1.norm();
            let cos2 = n.dot(&c2) / c2.norm();
            if cos1 >= 0.1 && cos2 >= 0.1 {
                break n;
            }
            tries += 1;
            if tries >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(SynthError::FieldOfViewExhausted);
            }
        };
        let plane = Plane {
            normal: r1 * world_normal,
            distance: -world_normal.dot(&c1) / cfg.baseline,
        };
        let homography = plane_homography(&pose, &k, &plane)?;
        let e1 = world_normal.cross(&look_perpendicular(&world_normal)).normalize();
        let e2 = world_normal.cross(&e1);

        let mut accepted = 0;
        let mut rejected = 0;
        while accepted < cfg.samples_per_plane {
            let radius = cfg.patch_radius * rng.random::<f64>().sqrt();
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let world = (e1 * angle.cos() + e2 * angle.sin()) * radius;
            let q = r1 * (world - c1) / cfg.baseline;
            let (d1, d2) = pose.depths(&q);
            let pp = project(&pose, &k, &q);
            if d1 <= 0.0 || d2 <= 0.0 || !in_view(&pp) {
                rejected += 1;
                if rejected >= MAX_CONSECUTIVE_REJECTIONS {
                    return Err(SynthError::FieldOfViewExhausted);
                }
                continue;
            }
            rejected = 0;
            accepted += 1;
            let affinity = LocalAffinity::from_matrix(&homography_jacobian(&homography, pp.u1, pp.v1));
            let clean = AffineCorrespondence::new(pp, affinity);
            correspondences.push(SceneCorrespondence {
                measured: clean,
                clean,
                truth: ScenePoint { q, n: plane.normal },
                plane: plane_idx,
                outlier: false,
            });
        }
        planes.push(plane);
    }

    let n_outliers = (cfg.outlier_fraction * correspondences.len() as f64).round() as usize;
    let mut indices: Vec<usize> = (0..correspondences.len()).collect();
    indices.shuffle(&mut rng);
    for &i in indices.iter().take(n_outliers) {
        let c = &mut correspondences[i];
        c.outlier = true;
        c.measured = random_correspondence(&mut rng, half_w, half_h);
    }

    let noise_seed = rng.next_u64();
    let scene = SyntheticScene {
        config: cfg.clone(),
        intrinsics: k,
        pose,
        fundamental,
        essential,
        planes,
        correspondences,
    };
    Ok(add_noise(&scene, cfg.noise_sigma, noise_seed))
}

fn look_perpendicular(n: &Vector3<f64>) -> Vector3<f64> {
    if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    }
}

fn random_correspondence(rng: &mut impl Rng, half_w: f64, half_h: f64) -> AffineCorrespondence {
    let points = PointPair {
        u1: rng.random_range(-half_w..=half_w),
        v1: rng.random_range(-half_h..=half_h),
        u2: rng.random_range(-half_w..=half_w),
        v2: rng.random_range(-half_h..=half_h),
    };
    loop {
        let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.5..=1.5));
        if let Ok(affinity) = LocalAffinity::new(a[0], a[1], a[2], a[3]) {
            if affinity.determinant().abs() >= 0.1 {
                return AffineCorrespondence::new(points, affinity);
            }
        }
    }
}

/// Re-derives every inlier measurement from its clean copy with pixel noise
/// `σ` (and the configured aspect-ratio error). Outliers and ground truth are
/// left untouched.
pub fn add_noise(scene: &SyntheticScene, sigma: f64, seed: u64) -> SyntheticScene {
    let mut out = scene.clone();
    out.config.noise_sigma = sigma;
    let aspect = scene.config.aspect_ratio;
    if sigma == 0.0 && aspect == 1.0 {
        for c in out.correspondences.iter_mut().filter(|c| !c.outlier) {
            c.measured = c.clean;
        }
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let homographies: Vec<Option<Matrix3<f64>>> = scene
        .planes
        .iter()
        .map(|p| plane_homography(&scene.pose, &scene.intrinsics, p).ok())
        .collect();
    for c in out.correspondences.iter_mut().filter(|c| !c.outlier) {
        let p = &c.clean.points;
        let noisy = PointPair {
            u1: p.u1 + gaussian(&mut rng, sigma),
            v1: p.v1 + gaussian(&mut rng, sigma),
            u2: p.u2 + gaussian(&mut rng, sigma),
            v2: aspect * p.v2 + gaussian(&mut rng, sigma),
        };
        let mut a = match (scene.config.affinity_noise, homographies[c.plane]) {
            (AffinityNoise::Recompute, Some(h)) => homography_jacobian(&h, noisy.u1, noisy.v1),
            _ => c.clean.affinity.matrix(),
        };
        if let AffinityNoise::Additive { scale } = scene.config.affinity_noise {
            a += Matrix2::from_fn(|_, _| gaussian(&mut rng, scale * sigma));
        }
        // Image-2 v-scaling stretches the second row of the affinity.
        a.set_row(1, &(a.row(1) * aspect));
        c.measured = AffineCorrespondence::new(noisy, LocalAffinity::from_matrix(&a));
    }
    out
}
