#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use twoac::geometry::{AffineCorrespondence, FundamentalMatrix};
use twoac::minimal_solver::{solve_two_ac, CandidateSolution};
use twoac::synth::{generate, SceneConfig, SyntheticScene};

pub const F_TRUE: f64 = 600.0;

pub fn scene(seed: u64) -> SyntheticScene {
    generate(&SceneConfig::with_seed(seed)).expect("default scene generates")
}

pub fn noisy_scene(seed: u64, sigma: f64) -> SyntheticScene {
    generate(&SceneConfig { noise_sigma: sigma, ..SceneConfig::with_seed(seed) }).expect("scene generates")
}

/// Clean correspondences on planes 0 and 1.
pub fn clean_pair(scene: &SyntheticScene) -> (AffineCorrespondence, AffineCorrespondence) {
    let (i, j) = scene.pair_on_planes(0, 1).expect("planes 0 and 1 have inliers");
    let c = scene.clean();
    (c[i], c[j])
}

/// Candidate closest to the true focal length.
pub fn closest(cands: &[CandidateSolution], focal: f64) -> &CandidateSolution {
    cands
        .iter()
        .min_by(|a, b| (a.focal - focal).abs().total_cmp(&(b.focal - focal).abs()))
        .expect("non-empty candidate list")
}

pub fn solve_clean(scene: &SyntheticScene) -> Vec<CandidateSolution> {
    let (a, b) = clean_pair(scene);
    solve_two_ac(&a, &b).expect("clean pair solves")
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn unit_f(m: &Matrix3<f64>) -> FundamentalMatrix {
    FundamentalMatrix::from_matrix(m).expect("finite matrix")
}

pub fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0).acos().to_degrees()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}
