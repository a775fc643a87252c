//! Dense univariate polynomials, determinants of quadratic matrix
//! polynomials by evaluation–interpolation, and real root extraction.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

/// Relative threshold below which a coefficient does not count toward the degree.
pub const DEGREE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("polynomial needs at least one finite coefficient")]
    InvalidCoefficients,
    #[error("all polynomial coefficients are zero")]
    ZeroPolynomial,
    #[error("matrix polynomial cell ({row}, {col}) is not finite")]
    InvalidCell { row: usize, col: usize },
    #[error("interpolation residual {0:e} exceeds tolerance")]
    InterpolationIllConditioned(f64),
    #[error("interpolation radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
}

/// Real polynomial with coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariatePolynomial {
    coeffs: Vec<f64>,
}

impl UnivariatePolynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, PolyError> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(PolyError::InvalidCoefficients);
        }
        Ok(Self { coeffs })
    }

    /// Builds `∏ (x − rᵢ)`.
    pub fn from_roots(roots: &[f64]) -> Self {
        let mut coeffs = vec![1.0];
        for &r in roots {
            let mut next = vec![0.0; coeffs.len() + 1];
            for (i, &c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= r * c;
            }
            coeffs = next;
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Index of the last coefficient above `DEGREE_TOL · max|c|`.
    pub fn degree(&self) -> usize {
        let tol = DEGREE_TOL * self.max_abs_coeff();
        self.coeffs.iter().rposition(|c| c.abs() > tol).unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self { coeffs: vec![0.0] };
        }
        let coeffs = self.coeffs.iter().enumerate().skip(1).map(|(i, &c)| c * i as f64).collect();
        Self { coeffs }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Self { coeffs }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|i| self.coeffs.get(i).unwrap_or(&0.0) + other.coeffs.get(i).unwrap_or(&0.0))
            .collect();
        Self { coeffs }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// Drops coefficients above `max_degree`.
    pub fn truncated(&self, max_degree: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.truncate(max_degree + 1);
        Self { coeffs }
    }

    /// `p(x) → p(x / radius)`, i.e. coefficient `k` divided by `radiusᵏ`.
    pub fn rescale_argument(&self, radius: f64) -> Self {
        let mut scale = 1.0;
        let coeffs = self
            .coeffs
            .iter()
            .map(|&c| {
                let out = c * scale;
                scale /= radius;
                out
            })
            .collect();
        Self { coeffs }
    }
}

/// Square matrix whose cells are polynomials of degree ≤ 2, stored as
/// `[c0, c1, c2]` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolynomial {
    dim: usize,
    cells: Vec<[f64; 3]>,
}

impl MatrixPolynomial {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, cells: vec![[0.0; 3]; dim * dim] }
    }

    pub fn from_cells(dim: usize, cells: Vec<[f64; 3]>) -> Result<Self, PolyError> {
        assert_eq!(cells.len(), dim * dim, "cell count must be dim²");
        if let Some(i) = cells.iter().position(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(PolyError::InvalidCell { row: i / dim, col: i % dim });
        }
        Ok(Self { dim, cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64; 3] {
        &self.cells[row * self.dim + col]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f64; 3] {
        &mut self.cells[row * self.dim + col]
    }

    pub fn cell_polynomial(&self, row: usize, col: usize) -> UnivariatePolynomial {
        UnivariatePolynomial { coeffs: self.cell(row, col).to_vec() }
    }

    /// Highest nonzero τ power in any cell of `row`.
    pub fn row_degree(&self, row: usize) -> usize {
        (0..self.dim)
            .map(|c| self.cell(row, c).iter().rposition(|v| *v != 0.0).unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    pub fn evaluate(&self, tau: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| {
            let [c0, c1, c2] = *self.cell(r, c);
            c0 + tau * (c1 + tau * c2)
        })
    }

    pub fn evaluate_complex(&self, tau: Complex<f64>) -> DMatrix<Complex<f64>> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| {
            let [c0, c1, c2] = *self.cell(r, c);
            (tau * c2 + c1) * tau + c0
        })
    }

    /// A τ scale at which constant and quadratic cell terms balance.
    pub fn natural_radius(&self) -> f64 {
        let sum = |k: usize| self.cells.iter().map(|c| c[k].abs()).sum::<f64>();
        let (s0, s1, s2) = (sum(0), sum(1), sum(2));
        let r = if s2 > 0.0 && s0 > 0.0 {
            (s0 / s2).sqrt()
        } else if s1 > 0.0 && s0 > 0.0 {
            s0 / s1
        } else {
            1.0
        };
        if r.is_finite() && r > 0.0 {
            r
        } else {
            1.0
        }
    }
}

/// `det(M(τ))` with an automatically chosen sampling radius.
pub fn det_poly(m: &MatrixPolynomial) -> Result<UnivariatePolynomial, PolyError> {
    det_poly_with_radius(m, m.natural_radius())
}

/// `det(M(τ))` by evaluation–interpolation on the circle `|τ| = radius`.
///
/// The `2n + 1` samples sit at equispaced angles `θₖ`, so their real parts
/// `radius·cos θₖ` are Chebyshev-spaced on `[−radius, radius]`. Sampling the
/// complex circle makes the coefficient recovery an inverse DFT, which is
/// perfectly conditioned in the monomial basis. The returned polynomial
/// carries all `2n + 1` coefficients; callers truncate to the known degree.
pub fn det_poly_with_radius(
    m: &MatrixPolynomial,
    radius: f64,
) -> Result<UnivariatePolynomial, PolyError> {
    Ok(det_poly_scaled(m, radius)?.rescale_argument(radius))
}

/// Interpolates `s ↦ det(M(radius·s))`; coefficients are in the scaled
/// variable `s = τ / radius`.
pub fn det_poly_scaled(
    m: &MatrixPolynomial,
    radius: f64,
) -> Result<UnivariatePolynomial, PolyError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(PolyError::InvalidRadius(radius));
    }
    let n = 2 * m.dim() + 1;
    let roots_of_unity: Vec<Complex<f64>> = (0..n)
        .map(|k| Complex::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
        .collect();

    // Real coefficients make the samples conjugate-symmetric.
    let mut values = vec![Complex::new(0.0, 0.0); n];
    for k in 0..=n / 2 {
        let tau = roots_of_unity[k] * radius;
        let det = m.evaluate_complex(tau).determinant();
        values[k] = det;
        if k > 0 {
            values[n - k] = det.conj();
        }
    }

    let coeffs: Vec<f64> = (0..n)
        .map(|j| {
            let sum: Complex<f64> = values
                .iter()
                .enumerate()
                .map(|(k, v)| v * roots_of_unity[(j * k) % n].conj())
                .sum();
            sum.re / n as f64
        })
        .collect();
    let poly = UnivariatePolynomial { coeffs };

    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
    let residual = values.iter().zip(&roots_of_unity).fold(0.0_f64, |a, (v, w)| {
        let fit = poly.coeffs.iter().rev().fold(Complex::new(0.0, 0.0), |acc, &c| acc * w + c);
        a.max((fit - v).norm())
    });
    if !residual.is_finite() || (scale > 0.0 && residual > 1e-6 * scale) {
        return Err(PolyError::InterpolationIllConditioned(residual / scale));
    }
    Ok(poly)
}

/// Positive real roots, ascending, via companion-matrix eigenvalues with one
/// Newton polish step each.
/// Diagonal similarity scaling by powers of two so that each row and column
/// carry comparable norms. Companion matrices of polynomials whose roots span
/// several orders of magnitude lose their small eigenvalues without it.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let sq = radix * radix;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= sq;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sq;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

pub fn real_positive_roots(p: &UnivariatePolynomial) -> Result<Vec<f64>, PolyError> {
    let max = p.max_abs_coeff();
    if max == 0.0 {
        return Err(PolyError::ZeroPolynomial);
    }
    let degree = p.degree();
    let coeffs = &p.coeffs[..=degree];
    // Zero roots are never positive; strip them to keep the companion small.
    let tol = DEGREE_TOL * max;
    let lead_zeros = coeffs.iter().position(|c| c.abs() > tol).unwrap_or(0);
    let coeffs = &coeffs[lead_zeros..];
    let n = coeffs.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[n];
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        companion[(i, n - 1)] = -coeffs[i] / lead;
    }
    balance(&mut companion);
    let eig = companion.complex_eigenvalues();

    let deriv = p.derivative();
    let mut roots: Vec<f64> = eig
        .iter()
        .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.re.abs()) && z.re > 0.0)
        .map(|z| {
            let x = z.re;
            let d = deriv.eval(x);
            if d != 0.0 {
                let polished = x - p.eval(x) / d;
                if polished > 0.0 && p.eval(polished).abs() <= p.eval(x).abs() {
                    return polished;
                }
            }
            x
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(b.abs()));
    Ok(roots)
}
