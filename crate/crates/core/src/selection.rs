//! Picking one focal length out of the roots pooled from many minimal samples.
//!
//! The primary selector is Median-Shift over one-dimensional Tukey medians,
//! followed by mean-shift ascent on a Gaussian kernel density. Kernel voting
//! (global maximum of the same density on a grid) is kept as a baseline.

use thiserror::Error;

use crate::minimal_solver::CandidateSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("pool contains a non-finite value")]
    NonFinite,
}

/// Kernel reach in bandwidths beyond which contributions are dropped.
/// `exp(-32)` is below double precision relative to the peak.
const KERNEL_REACH: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub bandwidth: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl SelectionConfig {
    pub fn new(bandwidth: f64) -> Result<Self, SelectionError> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(SelectionError::InvalidBandwidth(bandwidth));
        }
        Ok(Self { bandwidth, max_iterations: 100, tolerance: 1e-6 * bandwidth })
    }
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self::new(10.0).expect("default bandwidth is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    /// Position in the voting domain (focal pixels or relative error).
    pub value: f64,
    pub sample_id: usize,
    pub candidate: Option<CandidateSolution>,
}

/// Gated roots from all samples. Entries keep the sample that produced them
/// so the final fundamental matrix can be traced back.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidatePool {
    entries: Vec<PoolEntry>,
}

impl CandidatePool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pool of bare values, tagged with their index as sample id.
    pub fn from_values(values: &[f64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .map(|(i, &value)| PoolEntry { value, sample_id: i, candidate: None })
            .collect();
        Self { entries }
    }

    pub fn push(&mut self, value: f64, sample_id: usize, candidate: CandidateSolution) {
        self.entries.push(PoolEntry { value, sample_id, candidate: Some(candidate) });
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    /// Values in ascending order; all selectors work on this so that the
    /// result does not depend on insertion order.
    fn sorted_values(&self) -> Result<Vec<f64>, SelectionError> {
        if self.entries.is_empty() {
            return Err(SelectionError::EmptyPool);
        }
        let mut v = self.values();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SelectionError::NonFinite);
        }
        v.sort_by(f64::total_cmp);
        Ok(v)
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        let v = self.sorted_values().ok()?;
        Some((v[0], v[v.len() - 1]))
    }
}

/// One-dimensional Tukey median. For an even count the lower of the two
/// middle elements is returned so the result is always an input element.
pub fn tukey_median(values: &[f64]) -> Result<f64, SelectionError> {
    if values.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[(v.len() - 1) / 2])
}

/// Index range of sorted values within `[x - h, x + h]`.
fn window(sorted: &[f64], x: f64, h: f64) -> std::ops::Range<usize> {
    let lo = sorted.partition_point(|&v| v < x - h);
    let hi = sorted.partition_point(|&v| v <= x + h);
    lo..hi
}

/// Runs the median-shift iteration from `start` until it stops moving.
fn shift_to_mode(sorted: &[f64], start: f64, cfg: &SelectionConfig) -> f64 {
    let mut x = start;
    for _ in 0..cfg.max_iterations {
        let w = window(sorted, x, cfg.bandwidth);
        // The window always contains x itself since x is a pool element.
        let slice = &sorted[w];
        let next = slice[(slice.len() - 1) / 2];
        if next == x {
            break;
        }
        x = next;
    }
    x
}

/// Mode of the pool under Median-Shift. Every distinct value is used as a
/// start; the mode reached from the most starts wins. Ties are broken by the
/// number of pool values inside the window around the mode, then by the
/// smaller mode.
pub fn median_shift(pool: &CandidatePool, cfg: &SelectionConfig) -> Result<f64, SelectionError> {
    let sorted = pool.sorted_values()?;
    // (mode, basin size)
    let mut modes: Vec<(f64, usize)> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let start = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == start {
            j += 1;
        }
        let mode = shift_to_mode(&sorted, start, cfg);
        match modes.iter_mut().find(|(m, _)| *m == mode) {
            Some(entry) => entry.1 += j - i,
            None => modes.push((mode, j - i)),
        }
        i = j;
    }
    let population = |m: f64| window(&sorted, m, cfg.bandwidth).len();
    let best = modes
        .iter()
        .copied()
        .max_by(|a, b| {
            a.1.cmp(&b.1)
                .then(population(a.0).cmp(&population(b.0)))
                .then(b.0.total_cmp(&a.0))
        })
        .expect("non-empty pool has at least one mode");
    Ok(best.0)
}

fn gaussian(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn density_sorted(sorted: &[f64], x: f64, h: f64) -> f64 {
    sorted[window(sorted, x, KERNEL_REACH * h)]
        .iter()
        .map(|&xi| gaussian((xi - x) / h) / h)
        .sum()
}

/// Kernel density `Σ κ((xᵢ − x)/h)/h` with a standard Gaussian `κ`.
pub fn kde(pool: &CandidatePool, x: f64, cfg: &SelectionConfig) -> Result<f64, SelectionError> {
    let sorted = pool.sorted_values()?;
    Ok(density_sorted(&sorted, x, cfg.bandwidth))
}

/// Local maximum of the kernel density reached from `x0` by mean-shift
/// iterations. Returns `x0` if no pool value is within kernel reach.
pub fn kde_gradient_ascent(
    x0: f64,
    pool: &CandidatePool,
    cfg: &SelectionConfig,
) -> Result<f64, SelectionError> {
    let sorted = pool.sorted_values()?;
    if !x0.is_finite() {
        return Err(SelectionError::NonFinite);
    }
    let h = cfg.bandwidth;
    let mut x = x0;
    for _ in 0..cfg.max_iterations {
        let (mut num, mut den) = (0.0, 0.0);
        for &xi in &sorted[window(&sorted, x, KERNEL_REACH * h)] {
            let w = gaussian((xi - x) / h);
            num += w * xi;
            den += w;
        }
        if den == 0.0 {
            break;
        }
        let next = num / den;
        let step = (next - x).abs();
        x = next;
        if step < cfg.tolerance {
            break;
        }
    }
    // Mean shift is an ascent method; guard against rounding at a plateau.
    if density_sorted(&sorted, x, h) < density_sorted(&sorted, x0, h) {
        return Ok(x0);
    }
    Ok(x)
}

/// Global maximizer of the kernel density over a grid of step `h/10`
/// spanning the pool range. Ties go to the smaller grid value.
pub fn kernel_voting(pool: &CandidatePool, cfg: &SelectionConfig) -> Result<f64, SelectionError> {
    let sorted = pool.sorted_values()?;
    let h = cfg.bandwidth;
    let step = h / 10.0;
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let count = ((hi - lo) / step).floor() as usize + 1;
    let mut best = (lo, f64::NEG_INFINITY);
    let mut k = 0;
    while k < count {
        let x = lo + k as f64 * step;
        let w = window(&sorted, x, KERNEL_REACH * h);
        if w.is_empty() {
            // Jump to the first grid point that can see the next value.
            let next = sorted[w.start];
            let target = ((next - KERNEL_REACH * h - lo) / step).floor() as usize;
            k = target.max(k + 1);
            continue;
        }
        let d = density_sorted(&sorted, x, h);
        if d > best.1 {
            best = (x, d);
        }
        k += 1;
    }
    Ok(best.0)
}

/// Density curve sampled at `n` evenly spaced points across the pool range.
pub fn density_curve(
    pool: &CandidatePool,
    cfg: &SelectionConfig,
    n: usize,
) -> Result<Vec<(f64, f64)>, SelectionError> {
    let sorted = pool.sorted_values()?;
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    Ok((0..n)
        .map(|i| {
            let x = if n > 1 { lo + (hi - lo) * i as f64 / (n - 1) as f64 } else { lo };
            (x, density_sorted(&sorted, x, cfg.bandwidth))
        })
        .collect())
}
