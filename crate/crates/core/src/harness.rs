//! End-to-end focal length estimation: repeated minimal sampling, gating,
//! pooling and selection, plus file I/O for correspondences and reports.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::geometry::{AffineCorrespondence, FundamentalMatrix, GeometryError, LocalAffinity, PointPair};
use crate::minimal_solver::{solve_two_ac, CandidateSolution};
use crate::root_gate::{gate_observability, gate_physical, FocalLimits};
use crate::selection::{
    density_curve, kde_gradient_ascent, kernel_voting, median_shift, CandidatePool, SelectionConfig,
    SelectionError,
};
use crate::synth::SyntheticScene;

/// Number of points in the exported density curve.
pub const DENSITY_SAMPLES: usize = 512;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("need at least 2 correspondences, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("no candidate survived gating")]
    NoSurvivingRoots,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Scale on which pooled roots are compared and voted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VotingDomain {
    FocalPixels,
    /// Signed error relative to a known focal length, in percent.
    RelativePercent { ground_truth: f64 },
}

impl VotingDomain {
    pub fn to_domain(&self, focal: f64) -> f64 {
        match *self {
            VotingDomain::FocalPixels => focal,
            VotingDomain::RelativePercent { ground_truth } => 100.0 * (focal - ground_truth) / ground_truth,
        }
    }

    pub fn to_focal(&self, value: f64) -> f64 {
        match *self {
            VotingDomain::FocalPixels => value,
            VotingDomain::RelativePercent { ground_truth } => ground_truth * (1.0 + value / 100.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationConfig {
    pub iterations: usize,
    pub selection: SelectionConfig,
    pub limits: FocalLimits,
    /// Principal point subtracted from raw pixel coordinates when the
    /// correspondences were loaded. Recorded here for the report only;
    /// `estimate` expects already-centered input.
    pub principal_point: (f64, f64),
    pub seed: u64,
    pub domain: VotingDomain,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            selection: SelectionConfig::default(),
            limits: FocalLimits::default(),
            principal_point: (0.0, 0.0),
            seed: 0,
            domain: VotingDomain::FocalPixels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleDiagnostics {
    pub sample_id: usize,
    pub pair: (usize, usize),
    pub roots: usize,
    pub physical: usize,
    pub observable: usize,
    /// Solver failure for this sample, if any.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub focal: f64,
    pub fundamental: FundamentalMatrix,
    pub pool: CandidatePool,
    pub diagnostics: Vec<SampleDiagnostics>,
    /// Kernel-voting estimate on the same pool.
    pub voting_focal: f64,
    /// `(x, density)` in the voting domain.
    pub density: Vec<(f64, f64)>,
    pub config: EstimationConfig,
}

/// Two distinct indices drawn uniformly from `0..n`.
fn draw_pair(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

fn run_sample(
    acs: &[AffineCorrespondence],
    cfg: &EstimationConfig,
    sample_id: usize,
) -> (SampleDiagnostics, Vec<CandidateSolution>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(sample_id as u64);
    let pair = draw_pair(&mut rng, acs.len());
    let mut diag = SampleDiagnostics { sample_id, pair, roots: 0, physical: 0, observable: 0, failure: None };
    let candidates = match solve_two_ac(&acs[pair.0], &acs[pair.1]) {
        Ok(c) => c,
        Err(e) => {
            diag.failure = Some(e.to_string());
            return (diag, Vec::new());
        }
    };
    diag.roots = candidates.len();
    let physical = gate_physical(&candidates, &cfg.limits);
    diag.physical = physical.len();
    let sample = [acs[pair.0], acs[pair.1]];
    let survivors: Vec<CandidateSolution> = physical
        .into_iter()
        .filter_map(|mut c| {
            // Geometry failures (degenerate rays, unusable normals) reject the root.
            let ok = matches!(gate_observability(&c, &sample), Ok((true, _)));
            c.gate_flags.observable = Some(ok);
            ok.then_some(c)
        })
        .collect();
    diag.observable = survivors.len();
    (diag, survivors)
}

/// Repeated two-correspondence sampling followed by Median-Shift selection.
///
/// Samples run in parallel but each draws from its own ChaCha stream keyed by
/// the sample index, and results are merged in index order, so the output
/// depends only on the seed.
pub fn estimate(
    acs: &[AffineCorrespondence],
    cfg: &EstimationConfig,
) -> Result<EstimationResult, HarnessError> {
    if acs.len() < 2 {
        return Err(HarnessError::InsufficientCorrespondences(acs.len()));
    }
    if cfg.iterations == 0 {
        return Err(HarnessError::InvalidConfig("iteration limit must be at least 1".into()));
    }
    let per_sample: Vec<(SampleDiagnostics, Vec<CandidateSolution>)> =
        (0..cfg.iterations).into_par_iter().map(|id| run_sample(acs, cfg, id)).collect();

    let mut pool = CandidatePool::new();
    let mut diagnostics = Vec::with_capacity(per_sample.len());
    for (diag, survivors) in per_sample {
        for c in survivors {
            pool.push(cfg.domain.to_domain(c.focal), diag.sample_id, c);
        }
        diagnostics.push(diag);
    }
    if pool.is_empty() {
        return Err(HarnessError::NoSurvivingRoots);
    }

    let mode = median_shift(&pool, &cfg.selection)?;
    let selected = kde_gradient_ascent(mode, &pool, &cfg.selection)?;
    let voting = kernel_voting(&pool, &cfg.selection)?;
    let focal = cfg.domain.to_focal(selected);

    let nearest = pool
        .entries()
        .iter()
        .filter_map(|e| e.candidate.as_ref())
        .min_by(|a, b| {
            (a.focal - focal)
                .abs()
                .total_cmp(&(b.focal - focal).abs())
                .then(a.trace_residual.total_cmp(&b.trace_residual))
        })
        .expect("pool entries carry candidates");

    Ok(EstimationResult {
        focal,
        fundamental: nearest.fundamental,
        density: density_curve(&pool, &cfg.selection, DENSITY_SAMPLES)?,
        voting_focal: cfg.domain.to_focal(voting),
        pool,
        diagnostics,
        config: *cfg,
    })
}

/// RANSAC iterations needed to draw one all-inlier sample of `sample_size`
/// with probability `confidence` when a fraction `outlier_ratio` of the data
/// are outliers. Saturates to 1 when every sample is clean and to
/// `u64::MAX` when the inlier probability underflows.
pub fn ransac_iterations(sample_size: u32, outlier_ratio: f64, confidence: f64) -> Result<u64, HarnessError> {
    if sample_size == 0 {
        return Err(HarnessError::InvalidConfig("sample size must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&outlier_ratio) {
        return Err(HarnessError::InvalidConfig("outlier ratio must be in [0, 1)".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(HarnessError::InvalidConfig("confidence must be in (0, 1)".into()));
    }
    let clean = (1.0 - outlier_ratio).powi(sample_size as i32);
    if clean >= 1.0 - 1e-15 {
        return Ok(1);
    }
    let denom = (-clean).ln_1p();
    if denom == 0.0 {
        return Ok(u64::MAX);
    }
    let n = ((1.0 - confidence).ln() / denom).ceil();
    Ok(if n >= u64::MAX as f64 { u64::MAX } else { (n as u64).max(1) })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedCorrespondences {
    pub correspondences: Vec<AffineCorrespondence>,
    /// Line numbers whose affinity was singular; these lines were skipped.
    pub skipped_singular: Vec<usize>,
}

/// Parses the correspondence text format: one `u1 v1 u2 v2 a1 a2 a3 a4`
/// record per line, `#` starts a comment line, blank lines are ignored.
pub fn parse_correspondences(
    text: &str,
    principal_point: (f64, f64),
) -> Result<LoadedCorrespondences, HarnessError> {
    let (cx, cy) = principal_point;
    let mut out = LoadedCorrespondences::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(HarnessError::Parse {
                line: line_no,
                message: format!("expected 8 values, found {}", fields.len()),
            });
        }
        let mut row = [0.0; 8];
        for (slot, field) in row.iter_mut().zip(&fields) {
            let v: f64 = field.parse().map_err(|_| HarnessError::Parse {
                line: line_no,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(HarnessError::Parse { line: line_no, message: format!("non-finite value {field:?}") });
            }
            *slot = v;
        }
        let points = PointPair { u1: row[0] - cx, v1: row[1] - cy, u2: row[2] - cx, v2: row[3] - cy };
        match LocalAffinity::new(row[4], row[5], row[6], row[7]) {
            Ok(affinity) => out.correspondences.push(AffineCorrespondence::new(points, affinity)),
            Err(GeometryError::SingularAffinity(_)) => out.skipped_singular.push(line_no),
            Err(e) => return Err(HarnessError::Parse { line: line_no, message: e.to_string() }),
        }
    }
    Ok(out)
}

pub fn load_correspondences(
    path: &Path,
    principal_point: (f64, f64),
) -> Result<LoadedCorrespondences, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_correspondences(&text, principal_point)
}

/// Text form readable by [`parse_correspondences`]. Values use the shortest
/// representation that parses back to the same bits.
pub fn format_correspondences(acs: &[AffineCorrespondence]) -> String {
    let mut s = String::from("# u1 v1 u2 v2 a1 a2 a3 a4\n");
    for ac in acs {
        let row = ac.to_row();
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&fields.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_correspondences(path: &Path, acs: &[AffineCorrespondence]) -> Result<(), HarnessError> {
    fs::write(path, format_correspondences(acs)).map_err(io_err(path))
}

pub fn write_truth(path: &Path, scene: &SyntheticScene) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(&scene.truth_json())?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn domain_json(domain: &VotingDomain) -> serde_json::Value {
    match domain {
        VotingDomain::FocalPixels => json!({ "kind": "focal_px" }),
        VotingDomain::RelativePercent { ground_truth } => {
            json!({ "kind": "relative_percent", "ground_truth": ground_truth })
        }
    }
}

pub fn report_json(result: &EstimationResult) -> serde_json::Value {
    let cfg = &result.config;
    let pool: Vec<serde_json::Value> = result
        .pool
        .entries()
        .iter()
        .map(|e| {
            let c = e.candidate.as_ref();
            json!({
                "value": e.value,
                "focal": c.map(|c| c.focal),
                "sample": e.sample_id,
                "trace_residual": c.map(|c| c.trace_residual),
            })
        })
        .collect();
    let samples: Vec<serde_json::Value> = result
        .diagnostics
        .iter()
        .map(|d| {
            json!({
                "sample": d.sample_id,
                "pair": [d.pair.0, d.pair.1],
                "roots": d.roots,
                "physical": d.physical,
                "observable": d.observable,
                "failure": d.failure,
            })
        })
        .collect();
    json!({
        "focal": result.focal,
        "F": result.fundamental.entries().to_vec(),
        "kernel_voting_focal": result.voting_focal,
        "seed": cfg.seed,
        "config": {
            "iterations": cfg.iterations,
            "bandwidth": cfg.selection.bandwidth,
            "max_ascent_iterations": cfg.selection.max_iterations,
            "tolerance": cfg.selection.tolerance,
            "min_focal": cfg.limits.min_f(),
            "max_focal": cfg.limits.max_f(),
            "principal_point": [cfg.principal_point.0, cfg.principal_point.1],
            "domain": domain_json(&cfg.domain),
        },
        "pool": pool,
        "samples": samples,
    })
}

/// CSV file written next to a JSON report.
pub fn density_path(report_path: &Path) -> PathBuf {
    report_path.with_extension("density.csv")
}

/// Writes the JSON report to `path` and the density curve to
/// [`density_path`]`(path)`.
pub fn emit_report(result: &EstimationResult, path: &Path) -> Result<(), HarnessError> {
    if result.pool.is_empty() || result.density.is_empty() {
        return Err(HarnessError::Selection(SelectionError::EmptyPool));
    }
    let text = serde_json::to_string_pretty(&report_json(result))?;
    fs::write(path, text + "\n").map_err(io_err(path))?;
    let mut csv = String::from("x,density\n");
    for (x, d) in &result.density {
        csv.push_str(&format!("{x},{d}\n"));
    }
    let csv_path = density_path(path);
    fs::write(&csv_path, csv).map_err(io_err(&csv_path))
}
