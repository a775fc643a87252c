//! Two-point solver for the common focal length and the fundamental matrix.
//!
//! Each affine correspondence contributes three linear constraints on the
//! nine entries of `F` (two from the affinity, one epipolar). Two
//! correspondences leave a three-dimensional null space
//! `F = αa + βb + γc`. The determinant constraint and the nine entries of the
//! focal trace constraint are cubic in `(α, β, γ)` with coefficients that are
//! quadratic in `τ = f⁻²`; hiding `τ` gives a 10×10 system `C(τ)·y = 0` over
//! the cubic monomials `y`, and `det C(τ)` is a degree-15 polynomial.

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector};
use thiserror::Error;

use crate::geometry::{
    essential_trace_residual, AffineCorrespondence, CameraIntrinsics, FundamentalMatrix,
    GeometryError, LocalAffinity, PointPair,
};
use crate::polysolve::{
    det_poly_scaled, real_positive_roots, MatrixPolynomial, PolyError, UnivariatePolynomial,
};

/// Proven degree of `det C(τ)`.
pub const RESULTANT_DEGREE: usize = 15;

/// Upper bound on the number of candidates returned by one solve.
pub const MAX_CANDIDATES: usize = RESULTANT_DEGREE;

/// A root is emitted only if its monomial vector is a rank-one cube, `F` is
/// singular and the essential matrix satisfies the trace constraint, all to
/// this relative tolerance. Exact solutions sit near machine precision; the
/// filter drops numerically failed extractions at ill-conditioned roots.
pub const VALIDITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("correspondences are degenerate (null space larger than three)")]
    DegenerateConfiguration,
    #[error("no positive real root of the resultant")]
    NoRealRoot,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type ConstraintRows = SMatrix<f64, 3, 9>;

/// Stacked constraint rows of two correspondences.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub rows: SMatrix<f64, 6, 9>,
}

impl ConstraintSystem {
    pub fn new(ac1: &AffineCorrespondence, ac2: &AffineCorrespondence) -> Self {
        let mut rows = SMatrix::<f64, 6, 9>::zeros();
        rows.fixed_view_mut::<3, 9>(0, 0).copy_from(&build_rows(ac1));
        rows.fixed_view_mut::<3, 9>(3, 0).copy_from(&build_rows(ac2));
        Self { rows }
    }
}

/// Orthonormal basis `a, b, c` of the constraint null space.
#[derive(Debug, Clone, PartialEq)]
pub struct NullBasis {
    pub a: SVector<f64, 9>,
    pub b: SVector<f64, 9>,
    pub c: SVector<f64, 9>,
}

impl NullBasis {
    /// Basis vectors reshaped row-major into 3×3 matrices.
    pub fn matrices(&self) -> [Matrix3<f64>; 3] {
        [&self.a, &self.b, &self.c].map(|v| Matrix3::from_row_slice(v.as_slice()))
    }

    pub fn combine(&self, alpha: f64, beta: f64, gamma: f64) -> Matrix3<f64> {
        let v = self.a * alpha + self.b * beta + self.c * gamma;
        Matrix3::from_row_slice(v.as_slice())
    }
}

/// Cubic monomials `[α³, α²β, α²γ, αβ², αβγ, αγ², β³, β²γ, βγ², γ³]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonomialVector(pub [f64; 10]);

impl MonomialVector {
    pub fn from_coefficients(alpha: f64, beta: f64, gamma: f64) -> Self {
        let (a, b, c) = (alpha, beta, gamma);
        Self([
            a * a * a,
            a * a * b,
            a * a * c,
            a * b * b,
            a * b * c,
            a * c * c,
            b * b * b,
            b * b * c,
            b * c * c,
            c * c * c,
        ])
    }

    /// Recovers `(α, β, γ)` (unit norm) from the pure cube with the largest
    /// magnitude; ties go to the lower index.
    pub fn coefficients(&self) -> Option<(f64, f64, f64)> {
        let y = &self.0;
        let mut pick = 0;
        for idx in [6, 9] {
            if y[idx].abs() > y[pick].abs() {
                pick = idx;
            }
        }
        let (alpha, beta, gamma) = match pick {
            0 => {
                let a = y[0].cbrt();
                (a, y[1] / (a * a), y[2] / (a * a))
            }
            6 => {
                let b = y[6].cbrt();
                (y[3] / (b * b), b, y[7] / (b * b))
            }
            _ => {
                let c = y[9].cbrt();
                (y[5] / (c * c), y[8] / (c * c), c)
            }
        };
        let norm = (alpha * alpha + beta * beta + gamma * gamma).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        Some((alpha / norm, beta / norm, gamma / norm))
    }

    pub fn as_vector(&self) -> SVector<f64, 10> {
        SVector::from_row_slice(&self.0)
    }
}

/// Which gates a candidate has been through and whether it passed them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GateFlags {
    pub physical: Option<bool>,
    pub observable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSolution {
    pub focal: f64,
    pub tau: f64,
    pub fundamental: FundamentalMatrix,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Trace-constraint residual of the unit-norm essential matrix `KᵀFK`.
    pub trace_residual: f64,
    pub gate_flags: GateFlags,
}

/// The three constraint rows of one correspondence: the two affine rows
/// followed by the epipolar row.
pub fn build_rows(ac: &AffineCorrespondence) -> ConstraintRows {
    let PointPair { u1, v1, u2, v2 } = ac.points;
    let LocalAffinity { a1, a2, a3, a4 } = ac.affinity;
    #[rustfmt::skip]
    let rows = ConstraintRows::from_row_slice(&[
        u2 + a1 * u1, a1 * v1,      a1, v2 + a3 * u1, a3 * v1,      a3, 1.0, 0.0, 0.0,
        a2 * u1,      u2 + a2 * v1, a2, a4 * u1,      v2 + a4 * v1, a4, 0.0, 1.0, 0.0,
        u1 * u2,      v1 * u2,      u2, u1 * v2,      v1 * v2,      v2, u1,  v1,  1.0,
    ]);
    rows
}

/// Right singular vectors of the three smallest singular values.
pub fn null_basis(cs: &ConstraintSystem) -> Result<NullBasis, SolverError> {
    // Pad to square so the SVD yields the full right basis.
    let mut square = SMatrix::<f64, 9, 9>::zeros();
    square.fixed_view_mut::<6, 9>(0, 0).copy_from(&cs.rows);
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("svd v_t");
    let mut order: [usize; 9] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let fourth_smallest = svd.singular_values[order[5]];
    if !(fourth_smallest >= 1e-8 * largest) || largest == 0.0 {
        return Err(SolverError::DegenerateConfiguration);
    }
    let row = |i: usize| v_t.row(order[i]).transpose();
    Ok(NullBasis { a: row(6), b: row(7), c: row(8) })
}

/// Position of the monomial `x_i x_j x_k` (indices into `(α, β, γ)`) in `y`.
fn monomial_index(i: usize, j: usize, k: usize) -> usize {
    let mut e = [0usize; 3];
    e[i] += 1;
    e[j] += 1;
    e[k] += 1;
    match e {
        [3, 0, 0] => 0,
        [2, 1, 0] => 1,
        [2, 0, 1] => 2,
        [1, 2, 0] => 3,
        [1, 1, 1] => 4,
        [1, 0, 2] => 5,
        [0, 3, 0] => 6,
        [0, 2, 1] => 7,
        [0, 1, 2] => 8,
        _ => 9,
    }
}

/// Builds `C(τ)`: row 0 from `det F`, rows 1–9 from the row-major entries of
/// `2FQFᵀQF − tr(FQFᵀQ)F` with `Q = diag(1, 1, τ)`.
pub fn trace_coefficient_matrix(basis: &NullBasis) -> MatrixPolynomial {
    let mats = basis.matrices();
    let q0 = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, 0.0));
    let q1 = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.0, 0.0, 1.0));
    let qs = [q0, q1];

    // X Q_a Yᵀ Q_b for every ordered (X, Y) and τ split (a, b).
    let mut inner = [[[Matrix3::zeros(); 4]; 3]; 3];
    for (x, row) in inner.iter_mut().enumerate() {
        for (y, slot) in row.iter_mut().enumerate() {
            for (ab, m) in slot.iter_mut().enumerate() {
                *m = mats[x] * qs[ab / 2] * mats[y].transpose() * qs[ab % 2];
            }
        }
    }

    let mut c = MatrixPolynomial::zeros(10);
    for x in 0..3 {
        for y in 0..3 {
            for z in 0..3 {
                let col = monomial_index(x, y, z);
                c.cell_mut(0, col)[0] += mixed_det(&mats[x], &mats[y], &mats[z]);
                for (ab, p) in inner[x][y].iter().enumerate() {
                    let degree = ab / 2 + ab % 2;
                    let term = p * mats[z] * 2.0 - mats[z] * p.trace();
                    for r in 0..9 {
                        c.cell_mut(1 + r, col)[degree] += term[(r / 3, r % 3)];
                    }
                }
            }
        }
    }
    c
}

/// Multilinear determinant taking row 0 from `x`, row 1 from `y`, row 2 from `z`.
fn mixed_det(x: &Matrix3<f64>, y: &Matrix3<f64>, z: &Matrix3<f64>) -> f64 {
    const PERMS: [([usize; 3], f64); 6] = [
        ([0, 1, 2], 1.0),
        ([1, 2, 0], 1.0),
        ([2, 0, 1], 1.0),
        ([0, 2, 1], -1.0),
        ([2, 1, 0], -1.0),
        ([1, 0, 2], -1.0),
    ];
    PERMS
        .iter()
        .map(|(p, s)| s * x[(0, p[0])] * y[(1, p[1])] * z[(2, p[2])])
        .sum()
}

/// `det C(s)` in the scaled variable `s = τ / radius`, all 21 coefficients.
pub fn resultant_scaled(
    c: &MatrixPolynomial,
    radius: f64,
) -> Result<UnivariatePolynomial, SolverError> {
    Ok(det_poly_scaled(c, radius)?)
}

/// Relative distance between `y` and the cubic monomials of `(α, β, γ)`,
/// after fitting the global scale.
pub fn monomial_inconsistency(y: &MonomialVector, alpha: f64, beta: f64, gamma: f64) -> f64 {
    let rebuilt = MonomialVector::from_coefficients(alpha, beta, gamma).as_vector();
    let yv = y.as_vector();
    let denom = yv.dot(&yv);
    if !(denom > 0.0) {
        return f64::INFINITY;
    }
    let scale = rebuilt.dot(&yv) / denom;
    (rebuilt - yv * scale).norm() / rebuilt.norm()
}

/// `C(τ) y(α, β, γ)` and the unit-norm condition, with its Jacobian in
/// `(α, β, γ, τ)`. Rows of `C` are weighted by `row_scale`.
fn system_eval(
    c: &MatrixPolynomial,
    row_scale: &[f64],
    x: &[f64; 4],
) -> (SVector<f64, 11>, SMatrix<f64, 11, 4>) {
    let [a, b, g, tau] = *x;
    let y = MonomialVector::from_coefficients(a, b, g).0;
    #[rustfmt::skip]
    let dy: [[f64; 10]; 3] = [
        [3.0 * a * a, 2.0 * a * b, 2.0 * a * g, b * b, b * g, g * g, 0.0, 0.0, 0.0, 0.0],
        [0.0, a * a, 0.0, 2.0 * a * b, a * g, 0.0, 3.0 * b * b, 2.0 * b * g, g * g, 0.0],
        [0.0, 0.0, a * a, 0.0, a * b, 2.0 * a * g, 0.0, b * b, 2.0 * b * g, 3.0 * g * g],
    ];
    let mut r = SVector::<f64, 11>::zeros();
    let mut jac = SMatrix::<f64, 11, 4>::zeros();
    for i in 0..10 {
        let w = row_scale[i];
        for j in 0..10 {
            let [c0, c1, c2] = *c.cell(i, j);
            let value = w * (c0 + tau * (c1 + tau * c2));
            let slope = w * (c1 + 2.0 * tau * c2);
            r[i] += value * y[j];
            jac[(i, 3)] += slope * y[j];
            for v in 0..3 {
                jac[(i, v)] += value * dy[v][j];
            }
        }
    }
    r[10] = a * a + b * b + g * g - 1.0;
    jac[(10, 0)] = 2.0 * a;
    jac[(10, 1)] = 2.0 * b;
    jac[(10, 2)] = 2.0 * g;
    (r, jac)
}

fn row_scales(c: &MatrixPolynomial, tau: f64) -> Vec<f64> {
    let m = c.evaluate(tau);
    (0..10)
        .map(|i| {
            let n = m.row(i).norm();
            if n > 0.0 { 1.0 / n } else { 1.0 }
        })
        .collect()
}

/// Relative residual `‖C(τ) y‖ / (‖C(τ)‖ ‖y‖)` of a solution.
pub fn system_residual(c: &MatrixPolynomial, tau: f64, alpha: f64, beta: f64, gamma: f64) -> f64 {
    let m = c.evaluate(tau);
    let y = MonomialVector::from_coefficients(alpha, beta, gamma).as_vector();
    let denom = m.norm() * y.norm();
    if !(denom > 0.0) {
        return f64::INFINITY;
    }
    (&m * nalgebra::DVector::from_column_slice(y.as_slice())).norm() / denom
}

/// Gauss-Newton on the full polynomial system from an initial root. Unlike
/// Newton on `det C(τ)`, this stays quadratically convergent when two
/// solutions share nearly the same `τ` but differ in `(α, β, γ)`.
pub fn refine_solution(c: &MatrixPolynomial, tau: f64, alpha: f64, beta: f64, gamma: f64) -> (f64, f64, f64, f64) {
    let scale = row_scales(c, tau);
    let mut x = [alpha, beta, gamma, tau];
    let (mut r, mut jac) = system_eval(c, &scale, &x);
    for _ in 0..8 {
        let Ok(step) = jac.svd(true, true).solve(&(-r), 1e-14) else {
            break;
        };
        let trial = [x[0] + step[0], x[1] + step[1], x[2] + step[2], x[3] + step[3]];
        let (r_trial, jac_trial) = system_eval(c, &scale, &trial);
        if !(r_trial.norm() < r.norm()) {
            break;
        }
        x = trial;
        r = r_trial;
        jac = jac_trial;
        if step.norm() <= 1e-15 * (1.0 + x[3].abs()) {
            break;
        }
    }
    let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    (x[3], x[0] / n, x[1] / n, x[2] / n)
}

/// Null vector of `C(τ)` for the smallest singular value.
pub fn monomials_at(c: &MatrixPolynomial, tau: f64) -> MonomialVector {
    let m: DMatrix<f64> = c.evaluate(tau);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("svd v_t");
    let (imin, _) = svd.singular_values.argmin();
    let mut y = [0.0; 10];
    for (i, v) in y.iter_mut().enumerate() {
        *v = v_t[(imin, i)];
    }
    MonomialVector(y)
}

/// Newton iterations on the directly evaluated `det C(τ)`, using the
/// interpolant's derivative as slope. The interpolated coefficients carry
/// absolute error near machine precision of the largest coefficient, which
/// dominates close to clustered roots; the direct determinant does not.
fn polish_root(c: &MatrixPolynomial, derivative: &UnivariatePolynomial, root: f64) -> f64 {
    let mut x = root;
    let mut fx = c.evaluate(x).determinant();
    for _ in 0..4 {
        let slope = derivative.eval(x);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = x - fx / slope;
        if !(next > 0.0) {
            break;
        }
        let f_next = c.evaluate(next).determinant();
        if !(f_next.abs() < fx.abs()) {
            break;
        }
        x = next;
        fx = f_next;
    }
    x
}

/// Isotropic coordinate scale: median distance of the four image points from
/// the principal point.
fn coordinate_scale(ac1: &AffineCorrespondence, ac2: &AffineCorrespondence) -> f64 {
    let mut norms: Vec<f64> = [ac1, ac2]
        .iter()
        .flat_map(|ac| {
            let p = &ac.points;
            [p.u1.hypot(p.v1), p.u2.hypot(p.v2)]
        })
        .collect();
    norms.sort_by(f64::total_cmp);
    let median = 0.5 * (norms[1] + norms[2]);
    if median.is_finite() && median > 1e-9 {
        median
    } else {
        1.0
    }
}

fn scaled(ac: &AffineCorrespondence, k: f64) -> AffineCorrespondence {
    let p = &ac.points;
    AffineCorrespondence {
        points: PointPair { u1: p.u1 / k, v1: p.v1 / k, u2: p.u2 / k, v2: p.v2 / k },
        affinity: ac.affinity,
    }
}

/// Coordinate scale `k` and the null basis of the scaled constraint system.
/// In the scaled frame the unknown is `k²τ`.
pub fn normalized_basis(
    ac1: &AffineCorrespondence,
    ac2: &AffineCorrespondence,
) -> Result<(f64, NullBasis), SolverError> {
    let k = coordinate_scale(ac1, ac2);
    let basis = null_basis(&ConstraintSystem::new(&scaled(ac1, k), &scaled(ac2, k)))?;
    Ok((k, basis))
}

/// Solves for every `(f, F)` consistent with two affine correspondences.
///
/// Internally the coordinates are divided by their median magnitude `k`,
/// which maps `τ` to `k²τ` and leaves the affinities unchanged; the resultant
/// is interpolated on the unit circle in that scaled variable. Candidates are
/// returned in ascending order of trace-constraint residual.
pub fn solve_two_ac(
    ac1: &AffineCorrespondence,
    ac2: &AffineCorrespondence,
) -> Result<Vec<CandidateSolution>, SolverError> {
    let (k, basis) = normalized_basis(ac1, ac2)?;
    let c = trace_coefficient_matrix(&basis);
    let resultant = resultant_scaled(&c, 1.0)?.truncated(RESULTANT_DEGREE);
    let derivative = resultant.derivative();
    let roots: Vec<f64> = real_positive_roots(&resultant)?
        .into_iter()
        .map(|r| polish_root(&c, &derivative, r))
        .collect();

    let denorm = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0 / k, 1.0 / k, 1.0));
    let mut candidates = Vec::with_capacity(roots.len());
    for tau_scaled in roots {
        let Some((alpha, beta, gamma)) = monomials_at(&c, tau_scaled).coefficients() else {
            continue;
        };
        let (tau_scaled, alpha, beta, gamma) = refine_solution(&c, tau_scaled, alpha, beta, gamma);
        if !(tau_scaled > 0.0) || system_residual(&c, tau_scaled, alpha, beta, gamma) > VALIDITY_TOL {
            continue;
        }
        // Clustered roots can refine onto the same solution.
        if candidates.iter().any(|other: &CandidateSolution| {
            let t = k * k * other.tau;
            (t - tau_scaled).abs() <= 1e-9 * tau_scaled
                && (other.alpha * alpha + other.beta * beta + other.gamma * gamma).abs() >= 1.0 - 1e-12
        }) {
            continue;
        }
        let f_scaled = basis.combine(alpha, beta, gamma);
        if f_scaled.determinant().abs() > VALIDITY_TOL * f_scaled.norm().powi(3) {
            continue;
        }
        let Ok(fundamental) = FundamentalMatrix::from_matrix(&(denorm * f_scaled * denorm)) else {
            continue;
        };
        let focal = k / tau_scaled.sqrt();
        let Ok(intrinsics) = CameraIntrinsics::new(focal) else {
            continue;
        };
        let trace_residual = essential_trace_residual(&fundamental, &intrinsics);
        if !(trace_residual <= VALIDITY_TOL) {
            continue;
        }
        candidates.push(CandidateSolution {
            focal,
            tau: 1.0 / (focal * focal),
            fundamental,
            alpha,
            beta,
            gamma,
            trace_residual,
            gate_flags: GateFlags::default(),
        });
    }
    if candidates.is_empty() {
        return Err(SolverError::NoRealRoot);
    }
    candidates.sort_by(|a, b| a.trace_residual.total_cmp(&b.trace_residual));
    candidates.truncate(MAX_CANDIDATES);
    Ok(candidates)
}
